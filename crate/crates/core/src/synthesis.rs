//! Stealth attack construction and the exact minimum-cardinality attack.
//!
//! A combined attack falsifies measurements with `a` and blocks others with
//! the availability mask `d`. It is stealthy when `a = (I − diag(d))·H·c`.
//! The cheapest stealthy attack that moves measurement `j` by `μ` minimizes
//! `‖a‖₀ + ‖d‖₀`; with binary indicators `w` (falsified) and `d` (blocked)
//! this is the big-M program
//!
//! ```text
//! min Σ w + Σ d   s.t.  |H·c| ≤ M·(w + d),  H(j,:)·c = μ,  w, d ∈ {0,1}ᵐ
//! ```
//!
//! which is solved exactly by a depth-first branch-and-bound over the
//! union-support indicator `w + d`. Rows forced to zero span a subspace that
//! `c` must be orthogonal to; an optimal `c` spans the null space of a
//! hyperplane of the row matroid of `H`. The search enumerates each such
//! flat once, through its index-greedy basis, and prunes on the rows that
//! can no longer join the zero set.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::grid::SystemMatrices;
use crate::linalg::{abs, dot, norm2, pseudo_rank, DenseMatrix, SpanBasis, DEFAULT_RANK_TOL};
use crate::{Error, Result};

/// Entries of `H_d·c` below this magnitude are snapped to exact zero.
pub const ZERO_SNAP: f64 = 1e-11;
/// Relative tolerance of the span-membership test used by the searches.
pub const SPAN_TOL: f64 = 1e-9;
/// Largest measurement count accepted by [`enumerate_oracle`].
pub const ORACLE_MAX_M: usize = 12;

/// FDI vector `a` and availability mask `d` with disjoint supports.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackVector {
    a: Vec<f64>,
    d: Vec<bool>,
}

impl AttackVector {
    pub fn new(a: Vec<f64>, d: Vec<bool>) -> Result<Self> {
        if a.len() != d.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                got: d.len(),
            });
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if let Some(i) = a.iter().zip(&d).position(|(ai, di)| *ai != 0.0 && *di) {
            return Err(Error::Validation(alloc::format!(
                "measurement {i} is both falsified and blocked"
            )));
        }
        Ok(Self { a, d })
    }

    pub fn zero(m: usize) -> Self {
        Self {
            a: vec![0.0; m],
            d: vec![false; m],
        }
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn d(&self) -> &[bool] {
        &self.d
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// `‖a‖₀`
    pub fn ka(&self) -> usize {
        self.a.iter().filter(|v| **v != 0.0).count()
    }

    /// `‖d‖₀`
    pub fn kd(&self) -> usize {
        self.d.iter().filter(|v| **v).count()
    }

    pub fn cost(&self) -> usize {
        self.ka() + self.kd()
    }

    pub fn support_a(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.a[i] != 0.0).collect()
    }

    pub fn support_d(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.d[i]).collect()
    }

    /// Sorted union of both supports.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.a[i] != 0.0 || self.d[i]).collect()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            a: self.a.iter().map(|v| v * k).collect(),
            d: self.d.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Certificate {
    /// The search space was exhausted.
    Proven,
    /// A node budget stopped the search; the result is the incumbent.
    Heuristic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub c: Vec<f64>,
    pub attack: AttackVector,
    pub target: usize,
    pub magnitude: f64,
    pub cost: usize,
    pub certificate: Certificate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Default)]
pub struct SearchOptions {
    /// Overrides the default big-M bound.
    pub big_m: Option<f64>,
    /// Keep every optimum instead of only the lexicographically first.
    pub collect_all_optima: bool,
    pub max_nodes: Option<u64>,
}


#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: SynthesisResult,
    /// All optimal attacks when requested, lexicographically sorted.
    pub optima: Vec<SynthesisResult>,
    pub nodes: u64,
    /// The big-M bound the final (inactive) solve used.
    pub big_m: f64,
    pub resolves: u32,
}

fn masked_product(h: &DenseMatrix, c: &[f64], d: &[bool]) -> Vec<f64> {
    (0..h.rows())
        .map(|i| {
            if d[i] {
                0.0
            } else {
                let v = dot(h.row(i), c);
                if abs(v) < ZERO_SNAP {
                    0.0
                } else {
                    v
                }
            }
        })
        .collect()
}

pub(crate) fn check_observable(h: &DenseMatrix, d: &[bool]) -> Result<()> {
    let keep: Vec<f64> = d.iter().map(|&x| if x { 0.0 } else { 1.0 }).collect();
    let rank = pseudo_rank(&h.scale_rows(&keep), DEFAULT_RANK_TOL);
    if rank < h.cols() {
        Err(Error::Unobservable {
            rank,
            states: h.cols(),
        })
    } else {
        Ok(())
    }
}

/// `a = H_d·c` for the given mask; tiny entries snap to zero.
pub fn stealth_attack_from_c(sys: &SystemMatrices, c: &[f64], d: &[bool]) -> Result<AttackVector> {
    stealth_attack_on_model(sys.h(), c, d)
}

/// Same as [`stealth_attack_from_c`] for an arbitrary model matrix (e.g. an
/// adversary's imperfect model).
pub fn stealth_attack_on_model(h: &DenseMatrix, c: &[f64], d: &[bool]) -> Result<AttackVector> {
    if c.len() != h.cols() {
        return Err(Error::DimensionMismatch {
            expected: h.cols(),
            got: c.len(),
        });
    }
    if d.len() != h.rows() {
        return Err(Error::DimensionMismatch {
            expected: h.rows(),
            got: d.len(),
        });
    }
    check_observable(h, d)?;
    AttackVector::new(masked_product(h, c, d), d.to_vec())
}

/// Exact minimum-cardinality stealth attack with `a(j) = μ`.
pub fn min_cardinality_attack(sys: &SystemMatrices, j: usize, mu: f64) -> Result<SynthesisResult> {
    Ok(min_cardinality_search(sys.h(), j, mu, &SearchOptions::default())?.best)
}

fn default_big_m(h: &DenseMatrix, j: usize, mu: f64) -> f64 {
    let max_row = (0..h.rows())
        .map(|i| h.row(i).iter().fold(0.0f64, |m, v| m.max(abs(*v))))
        .fold(0.0, f64::max);
    let hj_max = h.row(j).iter().fold(0.0f64, |m, v| m.max(abs(*v)));
    1e4 * abs(mu) * max_row / hj_max
}

/// Branch-and-bound solve of the big-M program on model `h`.
///
/// The big-M bound is checked at every leaf: as soon as a leaf that could be
/// optimal is rejected because `‖H·c‖∞ ≥ M`, the search stops, `M` is
/// doubled and the search repeated.
pub fn min_cardinality_search(h: &DenseMatrix, j: usize, mu: f64, opts: &SearchOptions) -> Result<SearchOutcome> {
    let (m, n) = (h.rows(), h.cols());
    if j >= m {
        return Err(Error::domain(alloc::format!("target {j} out of range (m = {m})")));
    }
    if !(mu != 0.0 && mu.is_finite()) {
        return Err(Error::domain("attack magnitude must be finite and non-zero"));
    }
    if h.row(j).iter().all(|v| *v == 0.0) {
        return Err(Error::Infeasible(alloc::format!(
            "measurement {j} is insensitive to every state"
        )));
    }
    if n == 0 {
        return Err(Error::Infeasible("model has no states".into()));
    }
    let mut big_m = opts.big_m.unwrap_or_else(|| default_big_m(h, j, mu));
    let mut resolves = 0;
    loop {
        let mut search = Search::new(h, j, mu, big_m, opts);
        search.run();
        if search.bound_active && resolves < 64 {
            big_m *= 2.0;
            resolves += 1;
            continue;
        }
        let certificate = if search.exhausted && !search.bound_active {
            Certificate::Proven
        } else {
            Certificate::Heuristic
        };
        let mut optima: Vec<SynthesisResult> = search
            .optima
            .into_iter()
            .map(|leaf| leaf.into_result(j, mu, certificate))
            .collect();
        if optima.is_empty() {
            return Err(Error::Infeasible(alloc::format!(
                "no stealth attack reaches measurement {j}"
            )));
        }
        optima.sort_by_key(|x| x.attack.support());
        let best = optima[0].clone();
        if !opts.collect_all_optima {
            optima.truncate(1);
        }
        return Ok(SearchOutcome {
            best,
            optima,
            nodes: search.nodes,
            big_m,
            resolves,
        });
    }
}

#[derive(Debug, Clone)]
struct Leaf {
    c: Vec<f64>,
    a: Vec<f64>,
    support: Vec<usize>,
}

impl Leaf {
    fn into_result(self, target: usize, magnitude: f64, certificate: Certificate) -> SynthesisResult {
        let m = self.a.len();
        SynthesisResult {
            cost: self.support.len(),
            c: self.c,
            attack: AttackVector {
                a: self.a,
                d: vec![false; m],
            },
            target,
            magnitude,
            certificate,
        }
    }
}

#[derive(Clone)]
struct Node {
    basis: SpanBasis,
    /// Component of each row orthogonal to the current span.
    residuals: Vec<Vec<f64>>,
    spanned: Vec<bool>,
}

struct Search<'a> {
    h: &'a DenseMatrix,
    j: usize,
    mu: f64,
    big_m: f64,
    row_norms: Vec<f64>,
    collect_all: bool,
    max_nodes: Option<u64>,
    best_cost: usize,
    optima: Vec<Leaf>,
    nodes: u64,
    exhausted: bool,
    bound_active: bool,
}

impl<'a> Search<'a> {
    fn new(h: &'a DenseMatrix, j: usize, mu: f64, big_m: f64, opts: &SearchOptions) -> Self {
        Self {
            h,
            j,
            mu,
            big_m,
            row_norms: (0..h.rows()).map(|i| norm2(h.row(i))).collect(),
            collect_all: opts.collect_all_optima,
            max_nodes: opts.max_nodes,
            best_cost: h.rows() + 1,
            optima: Vec::new(),
            nodes: 0,
            exhausted: true,
            bound_active: false,
        }
    }

    fn m(&self) -> usize {
        self.h.rows()
    }

    fn n(&self) -> usize {
        self.h.cols()
    }

    fn root(&self) -> Node {
        let m = self.m();
        Node {
            basis: SpanBasis::new(self.n()),
            residuals: (0..m).map(|i| self.h.row(i).to_vec()).collect(),
            spanned: (0..m).map(|i| self.row_norms[i] == 0.0).collect(),
        }
    }

    /// Adds row `i` to the zero set of `node`.
    fn extend(&self, node: &Node, i: usize) -> Node {
        let r = &node.residuals[i];
        let nr = norm2(r);
        let q: Vec<f64> = r.iter().map(|v| v / nr).collect();
        let mut basis = node.basis.clone();
        basis.push(self.h.row(i), SPAN_TOL);
        let mut residuals = node.residuals.clone();
        let mut spanned = node.spanned.clone();
        for (k, res) in residuals.iter_mut().enumerate() {
            if spanned[k] {
                continue;
            }
            let p = dot(res, &q);
            res.iter_mut().zip(&q).for_each(|(x, y)| *x -= p * y);
            if norm2(res) <= SPAN_TOL * self.row_norms[k] {
                spanned[k] = true;
            }
        }
        spanned[i] = true;
        Node {
            basis,
            residuals,
            spanned,
        }
    }

    fn run(&mut self) {
        let root = self.root();
        if self.n() == 1 {
            self.leaf(&root);
            return;
        }
        self.greedy_incumbent(&root);
        if !self.bound_active {
            self.dfs(&root, 0);
        }
    }

    /// Incumbent: from each starting row, repeatedly add the row whose
    /// closure grows the zero set most.
    fn greedy_incumbent(&mut self, root: &Node) {
        let m = self.m();
        let target = self.n() - 1;
        for start in 0..m {
            if start == self.j || root.spanned[start] {
                continue;
            }
            let mut node = self.extend(root, start);
            if node.spanned[self.j] {
                continue;
            }
            while node.basis.rank() < target {
                let mut pick: Option<(usize, Node)> = None;
                for i in 0..m {
                    if i == self.j || node.spanned[i] {
                        continue;
                    }
                    let child = self.extend(&node, i);
                    if child.spanned[self.j] {
                        continue;
                    }
                    let size = child.spanned.iter().filter(|s| **s).count();
                    let better = match &pick {
                        None => true,
                        Some((_, p)) => size > p.spanned.iter().filter(|s| **s).count(),
                    };
                    if better {
                        pick = Some((i, child));
                    }
                }
                match pick {
                    Some((_, child)) => node = child,
                    None => break,
                }
            }
            if node.basis.rank() == target {
                self.leaf(&node);
                if self.bound_active {
                    return;
                }
            }
        }
    }

    fn dfs(&mut self, node: &Node, start: usize) {
        if self.bound_active {
            return;
        }
        self.nodes += 1;
        if let Some(limit) = self.max_nodes {
            if self.nodes > limit {
                self.exhausted = false;
                return;
            }
        }
        let m = self.m();
        let target = self.n() - 1;
        // rows below `start` outside the span are permanently nonzero
        let mut excluded = (0..start).filter(|&r| !node.spanned[r]).count();
        for i in start..m {
            if i == self.j || node.spanned[i] {
                if i == self.j {
                    excluded += 1;
                }
                continue;
            }
            // ties are still explored so the smallest support wins
            let lb = excluded + usize::from(self.j > i);
            if lb > self.best_cost {
                break;
            }
            let child = self.extend(node, i);
            let canonical = !child.spanned[self.j]
                && (0..i).all(|r| node.spanned[r] || !child.spanned[r]);
            if canonical {
                if child.basis.rank() == target {
                    self.leaf(&child);
                } else {
                    self.dfs(&child, i + 1);
                }
                if !self.exhausted || self.bound_active {
                    return;
                }
            }
            // row i stays nonzero in every later sibling
            excluded += 1;
        }
    }

    fn leaf(&mut self, node: &Node) {
        let comp = node.basis.complement();
        let Some(dir) = comp.first() else { return };
        let hj = dot(self.h.row(self.j), dir);
        if abs(hj) <= SPAN_TOL * self.row_norms[self.j] {
            return;
        }
        let scale = self.mu / hj;
        let c: Vec<f64> = dir.iter().map(|v| v * scale).collect();
        let a: Vec<f64> = (0..self.m())
            .map(|i| {
                if node.spanned[i] {
                    0.0
                } else {
                    dot(self.h.row(i), &c)
                }
            })
            .collect();
        let support: Vec<usize> = (0..self.m()).filter(|&i| !node.spanned[i]).collect();
        let cost = support.len();
        if a.iter().any(|v| abs(*v) >= self.big_m) {
            if cost <= self.best_cost {
                self.bound_active = true;
            }
            return;
        }
        match cost.cmp(&self.best_cost) {
            Ordering::Less => {
                self.best_cost = cost;
                self.optima.clear();
                self.optima.push(Leaf { c, a, support });
            }
            Ordering::Equal => {
                if self.optima.iter().any(|o| o.support == support) {
                    return;
                }
                if self.collect_all {
                    self.optima.push(Leaf { c, a, support });
                } else if support < self.optima[0].support {
                    self.optima[0] = Leaf { c, a, support };
                }
            }
            Ordering::Greater => {}
        }
    }
}

/// Moves `k_d` measurements of an optimal attack from falsification to
/// blocking, keeping `c` and the cost. The blocked set is the
/// lexicographically first `k_d`-subset of the support (target excluded)
/// that leaves the model observable.
pub fn assign_availability(h: &DenseMatrix, result: &SynthesisResult, k_d: usize) -> Result<SynthesisResult> {
    let candidates: Vec<usize> = result
        .attack
        .support()
        .into_iter()
        .filter(|&i| i != result.target)
        .collect();
    if k_d > candidates.len() {
        return Err(Error::Infeasible(alloc::format!(
            "cannot block {k_d} of {} non-target measurements",
            candidates.len()
        )));
    }
    let mut found = None;
    for_each_combination(candidates.len(), k_d, |combo| {
        let mut d = vec![false; h.rows()];
        for &p in combo {
            d[candidates[p]] = true;
        }
        if check_observable(h, &d).is_ok() {
            found = Some(d);
            false
        } else {
            true
        }
    });
    let d = found.ok_or_else(|| {
        Error::Infeasible(alloc::format!("every {k_d}-measurement block leaves the model unobservable"))
    })?;
    let attack = AttackVector::new(masked_product(h, &result.c, &d), d)?;
    Ok(SynthesisResult {
        cost: attack.cost(),
        attack,
        ..result.clone()
    })
}

/// Calls `f` with each `k`-combination of `0..n` in lexicographic order
/// until it returns `false`.
pub fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize]) -> bool) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if !f(&idx) {
            return;
        }
        let mut pos = k;
        while pos > 0 && idx[pos - 1] == n - k + pos - 1 {
            pos -= 1;
        }
        if pos == 0 {
            return;
        }
        idx[pos - 1] += 1;
        for q in pos..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

/// Brute-force optimum of the minimum-cardinality problem for tiny
/// systems: every availability mask, and for each every set of rows forced
/// to zero. Returns the lexicographically smallest optimal support.
pub fn enumerate_oracle(sys: &SystemMatrices, j: usize, mu: f64, max_m: usize) -> Result<SynthesisResult> {
    enumerate_oracle_on_model(sys.h(), j, mu, max_m)
}

pub fn enumerate_oracle_on_model(h: &DenseMatrix, j: usize, mu: f64, max_m: usize) -> Result<SynthesisResult> {
    let (m, n) = (h.rows(), h.cols());
    let limit = max_m.min(ORACLE_MAX_M);
    if m > limit {
        return Err(Error::Size { size: m, limit });
    }
    if j >= m {
        return Err(Error::domain(alloc::format!("target {j} out of range (m = {m})")));
    }
    if !(mu != 0.0 && mu.is_finite()) {
        return Err(Error::domain("attack magnitude must be finite and non-zero"));
    }
    let hj = h.row(j);
    let mut best: Option<(usize, Vec<usize>, Vec<f64>, AttackVector)> = None;
    for dbits in 0u32..(1u32 << m) {
        if dbits & (1 << j) != 0 {
            continue;
        }
        let d: Vec<bool> = (0..m).map(|i| dbits & (1 << i) != 0).collect();
        if check_observable(h, &d).is_err() {
            continue;
        }
        let free: u32 = !dbits & ((1u32 << m) - 1) & !(1 << j);
        // all submasks of `free`, including the empty set
        let mut z = free;
        loop {
            let mut basis = SpanBasis::new(n);
            for i in 0..m {
                if z & (1 << i) != 0 {
                    basis.push(h.row(i), SPAN_TOL);
                }
            }
            let dir = basis.residual(hj);
            let hd = dot(hj, &dir);
            if hd > SPAN_TOL * dot(hj, hj) {
                let c: Vec<f64> = dir.iter().map(|v| v * mu / hd).collect();
                let cn = norm2(&c);
                let a: Vec<f64> = (0..m)
                    .map(|i| {
                        let v = if d[i] { 0.0 } else { dot(h.row(i), &c) };
                        if abs(v) <= SPAN_TOL * norm2(h.row(i)) * cn {
                            0.0
                        } else {
                            v
                        }
                    })
                    .collect();
                let atk = AttackVector::new(a, d.clone())?;
                let cost = atk.cost();
                let support = atk.support();
                let better = match &best {
                    None => true,
                    Some((bc, bs, _, _)) => cost < *bc || (cost == *bc && support < *bs),
                };
                if better {
                    best = Some((cost, support, c, atk));
                }
            }
            if z == 0 {
                break;
            }
            z = (z - 1) & free;
        }
    }
    let (cost, _, c, attack) =
        best.ok_or_else(|| Error::Infeasible(alloc::format!("no stealth attack reaches measurement {j}")))?;
    Ok(SynthesisResult {
        c,
        attack,
        target: j,
        magnitude: mu,
        cost,
        certificate: Certificate::Proven,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus_h() -> DenseMatrix {
        DenseMatrix::from_row_major(4, 1, vec![-1.0, 1.0, -1.0, 1.0]).unwrap()
    }

    #[test]
    fn attack_vector_rejects_overlap() {
        assert!(matches!(
            AttackVector::new(vec![1.0, 0.0], vec![true, false]),
            Err(Error::Validation(_))
        ));
        let a = AttackVector::new(vec![1.0, 0.0, 0.0], vec![false, true, false]).unwrap();
        assert_eq!((a.ka(), a.kd(), a.cost()), (1, 1, 2));
        assert_eq!(a.support(), vec![0, 1]);
    }

    #[test]
    fn stealth_from_c_two_bus() {
        let h = two_bus_h();
        let mu = 0.1;
        let a = stealth_attack_on_model(&h, &[-mu], &[false; 4]).unwrap();
        assert_eq!(a.a(), &[mu, -mu, mu, -mu]);
        let a = stealth_attack_on_model(&h, &[-mu], &[false, true, true, false]).unwrap();
        assert_eq!(a.a(), &[mu, 0.0, 0.0, -mu]);
        let zero = stealth_attack_on_model(&h, &[0.0], &[false; 4]).unwrap();
        assert_eq!(zero.ka(), 0);
        assert!(matches!(
            stealth_attack_on_model(&h, &[1.0], &[true; 4]),
            Err(Error::Unobservable { .. })
        ));
    }

    #[test]
    fn two_bus_min_cardinality_is_four() {
        let h = two_bus_h();
        for j in 0..4 {
            let r = min_cardinality_search(&h, j, 0.1, &SearchOptions::default()).unwrap();
            assert_eq!(r.best.cost, 4);
            assert!((r.best.attack.a()[j] - 0.1).abs() < 1e-12);
            let o = enumerate_oracle_on_model(&h, j, 0.1, 12).unwrap();
            assert_eq!(o.cost, 4);
        }
    }

    #[test]
    fn insensitive_target_is_infeasible() {
        let h = DenseMatrix::from_row_major(3, 1, vec![1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(
            min_cardinality_search(&h, 1, 0.1, &SearchOptions::default()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn oracle_size_limit() {
        let h = DenseMatrix::zeros(13, 2);
        assert!(matches!(
            enumerate_oracle_on_model(&h, 0, 0.1, 20),
            Err(Error::Size { size: 13, limit: 12 })
        ));
    }

    #[test]
    fn combinations_in_lexicographic_order() {
        let mut seen = Vec::new();
        for_each_combination(4, 2, |c| {
            seen.push(c.to_vec());
            true
        });
        assert_eq!(
            seen,
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        let mut count = 0;
        for_each_combination(5, 0, |_| {
            count += 1;
            true
        });
        assert_eq!(count, 1);
        for_each_combination(2, 3, |_| panic!("k > n"));
    }
}
