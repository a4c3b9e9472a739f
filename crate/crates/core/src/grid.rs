//! Network topology, measurement placement and the DC measurement model.
//!
//! The measurement matrix stacks from-flow rows, to-flow rows and injection
//! rows:
//!
//! ```text
//!     [  P1 · W · Bᵀ      ]
//! H = [ -P2 · W · Bᵀ      ]
//!     [  P3 · B0 · W · Bᵀ ]
//! ```
//!
//! with `B0` the directed bus-line incidence matrix, `B` the same matrix with
//! the reference bus row removed and `W` the diagonal of line susceptances
//! (reciprocal reactances).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::{pseudo_rank, solve_spd, DenseMatrix, DEFAULT_RANK_TOL};
use crate::{Error, Result};

/// Default measurement noise standard deviation, per-unit power.
pub const DEFAULT_SIGMA: f64 = 0.02;

const INVARIANT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BusId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LineId(pub u32);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for LineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub id: LineId,
    pub from: BusId,
    pub to: BusId,
    /// Series reactance, per-unit, strictly positive.
    pub reactance: f64,
}

impl Line {
    pub fn susceptance(&self) -> f64 {
        1.0 / self.reactance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    buses: Vec<BusId>,
    reference: BusId,
    lines: Vec<Line>,
    base_mva: f64,
    /// State column of each non-reference bus.
    state_col: BTreeMap<BusId, usize>,
    line_pos: BTreeMap<LineId, usize>,
}

impl NetworkModel {
    pub fn new(buses: Vec<BusId>, reference: BusId, lines: Vec<Line>, base_mva: f64) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for b in &buses {
            if !seen.insert(*b) {
                return Err(Error::Validation(format!("duplicate bus id {b}")));
            }
        }
        if !seen.contains(&reference) {
            return Err(Error::Validation(format!("reference bus {reference} is not declared")));
        }
        if !(base_mva > 0.0 && base_mva.is_finite()) {
            return Err(Error::Validation(format!("base power must be positive, got {base_mva}")));
        }
        let mut line_pos = BTreeMap::new();
        for (pos, l) in lines.iter().enumerate() {
            if line_pos.insert(l.id, pos).is_some() {
                return Err(Error::Validation(format!("duplicate line id {}", l.id)));
            }
            for end in [l.from, l.to] {
                if !seen.contains(&end) {
                    return Err(Error::Validation(format!(
                        "line {} references undeclared bus {end}",
                        l.id
                    )));
                }
            }
            if l.from == l.to {
                return Err(Error::Validation(format!("line {} is a self-loop", l.id)));
            }
            if !(l.reactance > 0.0 && l.reactance.is_finite()) {
                return Err(Error::Validation(format!(
                    "line {} reactance must be positive, got {}",
                    l.id, l.reactance
                )));
            }
        }
        // connectivity from the reference bus
        let mut adj: BTreeMap<BusId, Vec<BusId>> = BTreeMap::new();
        for l in &lines {
            adj.entry(l.from).or_default().push(l.to);
            adj.entry(l.to).or_default().push(l.from);
        }
        let mut reached = BTreeSet::from([reference]);
        let mut stack = vec![reference];
        while let Some(b) = stack.pop() {
            for nb in adj.get(&b).into_iter().flatten() {
                if reached.insert(*nb) {
                    stack.push(*nb);
                }
            }
        }
        if let Some(b) = buses.iter().find(|b| !reached.contains(b)) {
            return Err(Error::Validation(format!(
                "bus {b} is not connected to the reference bus"
            )));
        }
        let state_col = buses
            .iter()
            .filter(|b| **b != reference)
            .enumerate()
            .map(|(i, b)| (*b, i))
            .collect();
        Ok(Self {
            buses,
            reference,
            lines,
            base_mva,
            state_col,
            line_pos,
        })
    }

    pub fn buses(&self) -> &[BusId] {
        &self.buses
    }

    pub fn reference_bus(&self) -> BusId {
        self.reference
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    /// Number of states `n` (buses minus the reference).
    pub fn state_count(&self) -> usize {
        self.buses.len() - 1
    }

    /// State column of a bus, `None` for the reference bus.
    pub fn state_column(&self, bus: BusId) -> Option<usize> {
        self.state_col.get(&bus).copied()
    }

    pub fn line(&self, id: LineId) -> Option<&Line> {
        self.line_pos.get(&id).map(|&p| &self.lines[p])
    }

    pub fn line_position(&self, id: LineId) -> Option<usize> {
        self.line_pos.get(&id).copied()
    }

    pub fn has_bus(&self, id: BusId) -> bool {
        self.buses.contains(&id)
    }

    /// Diagonal of `W`.
    pub fn susceptances(&self) -> Vec<f64> {
        self.lines.iter().map(Line::susceptance).collect()
    }

    /// Directed incidence matrix `B0`, buses × lines.
    pub fn incidence(&self) -> DenseMatrix {
        let mut b0 = DenseMatrix::zeros(self.buses.len(), self.lines.len());
        let pos: BTreeMap<BusId, usize> = self.buses.iter().enumerate().map(|(i, b)| (*b, i)).collect();
        for (k, l) in self.lines.iter().enumerate() {
            b0[(pos[&l.from], k)] = 1.0;
            b0[(pos[&l.to], k)] = -1.0;
        }
        b0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MeasurementKind {
    FlowFrom(LineId),
    FlowTo(LineId),
    Injection(BusId),
}

impl fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasurementKind::FlowFrom(l) => write!(f, "flow_from line {l}"),
            MeasurementKind::FlowTo(l) => write!(f, "flow_to line {l}"),
            MeasurementKind::Injection(b) => write!(f, "inj bus {b}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub kind: MeasurementKind,
    pub sigma: f64,
}

/// Which flows and injections are metered, in the global measurement order:
/// all from-flows, then all to-flows, then all injections.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementPlacement {
    measurements: Vec<Measurement>,
    from_count: usize,
    to_count: usize,
}

impl MeasurementPlacement {
    /// `sigmas` follows the global order (`from_flow ++ to_flow ++ injection`).
    pub fn new(
        net: &NetworkModel,
        from_flow: &[LineId],
        to_flow: &[LineId],
        injection: &[BusId],
        sigmas: &[f64],
    ) -> Result<Self> {
        let kinds: Vec<MeasurementKind> = from_flow
            .iter()
            .map(|l| MeasurementKind::FlowFrom(*l))
            .chain(to_flow.iter().map(|l| MeasurementKind::FlowTo(*l)))
            .chain(injection.iter().map(|b| MeasurementKind::Injection(*b)))
            .collect();
        if sigmas.len() != kinds.len() {
            return Err(Error::DimensionMismatch {
                expected: kinds.len(),
                got: sigmas.len(),
            });
        }
        let mut seen = BTreeSet::new();
        for k in &kinds {
            let exists = match k {
                MeasurementKind::FlowFrom(l) | MeasurementKind::FlowTo(l) => net.line(*l).is_some(),
                MeasurementKind::Injection(b) => net.has_bus(*b),
            };
            if !exists {
                return Err(Error::Validation(format!("measurement {k} references an unknown device")));
            }
            if !seen.insert(*k) {
                return Err(Error::Validation(format!("duplicate measurement {k}")));
            }
        }
        if let Some(s) = sigmas.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Validation(format!("measurement sigma must be positive, got {s}")));
        }
        Ok(Self {
            measurements: kinds
                .into_iter()
                .zip(sigmas)
                .map(|(kind, &sigma)| Measurement { kind, sigma })
                .collect(),
            from_count: from_flow.len(),
            to_count: to_flow.len(),
        })
    }

    /// Every from-flow, to-flow and injection, each group in id order.
    pub fn full(net: &NetworkModel, sigma: f64) -> Result<Self> {
        let mut lines: Vec<LineId> = net.lines().iter().map(|l| l.id).collect();
        lines.sort();
        let mut buses = net.buses().to_vec();
        buses.sort();
        let m = 2 * lines.len() + buses.len();
        Self::new(net, &lines, &lines, &buses, &vec![sigma; m])
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn measurements(&self) -> &[Measurement] {
        &self.measurements
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.measurements.iter().map(|m| m.sigma).collect()
    }

    pub fn from_flow_count(&self) -> usize {
        self.from_count
    }

    pub fn to_flow_count(&self) -> usize {
        self.to_count
    }

    pub fn injection_count(&self) -> usize {
        self.len() - self.from_count - self.to_count
    }

    /// Global indices of the injection measurements.
    pub fn injection_indices(&self) -> Vec<usize> {
        (self.from_count + self.to_count..self.len()).collect()
    }
}

/// Builds `H` for the given line susceptances (the diagonal of `W`, in line
/// order). Passing perturbed susceptances yields a perturbed model with the
/// same topology and placement.
pub fn measurement_matrix(
    net: &NetworkModel,
    placement: &MeasurementPlacement,
    susceptances: &[f64],
) -> Result<DenseMatrix> {
    if susceptances.len() != net.lines().len() {
        return Err(Error::DimensionMismatch {
            expected: net.lines().len(),
            got: susceptances.len(),
        });
    }
    let n = net.state_count();
    let mut h = DenseMatrix::zeros(placement.len(), n);
    // row of W·Bᵀ for line k
    let flow_row = |k: usize, sign: f64, out: &mut [f64]| {
        let l = &net.lines()[k];
        let w = susceptances[k] * sign;
        if let Some(c) = net.state_column(l.from) {
            out[c] += w;
        }
        if let Some(c) = net.state_column(l.to) {
            out[c] -= w;
        }
    };
    for (i, meas) in placement.measurements().iter().enumerate() {
        let row = h.row_mut(i);
        match meas.kind {
            MeasurementKind::FlowFrom(id) => {
                flow_row(net.line_position(id).expect("validated"), 1.0, row)
            }
            MeasurementKind::FlowTo(id) => {
                flow_row(net.line_position(id).expect("validated"), -1.0, row)
            }
            MeasurementKind::Injection(bus) => {
                for (k, l) in net.lines().iter().enumerate() {
                    if l.from == bus {
                        flow_row(k, 1.0, row);
                    } else if l.to == bus {
                        flow_row(k, -1.0, row);
                    }
                }
            }
        }
    }
    if h.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(h)
}

/// The measurement model together with its estimator and residual
/// sensitivity matrices, optionally restricted by an availability mask.
///
/// `K` and `S` always refer to the masked model `H_d = (I − diag(d))·H`; rows
/// and columns of `S` at masked measurements are zero.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    h: DenseMatrix,
    sigmas: Vec<f64>,
    injection_rows: Vec<usize>,
    mask: Vec<bool>,
    hd: DenseMatrix,
    k: DenseMatrix,
    s: DenseMatrix,
}

impl SystemMatrices {
    /// Builds the unmasked system for an arbitrary model matrix.
    pub fn from_model(h: DenseMatrix, sigmas: Vec<f64>, injection_rows: Vec<usize>) -> Result<Self> {
        let m = h.rows();
        if sigmas.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: sigmas.len(),
            });
        }
        if let Some(&r) = injection_rows.iter().find(|&&r| r >= m) {
            return Err(Error::Validation(format!("injection row {r} out of range")));
        }
        if sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Validation("measurement sigma must be positive".into()));
        }
        Self::assemble(h, sigmas, injection_rows, vec![false; m])
    }

    fn assemble(h: DenseMatrix, sigmas: Vec<f64>, injection_rows: Vec<usize>, mask: Vec<bool>) -> Result<Self> {
        let m = h.rows();
        let n = h.cols();
        let keep: Vec<f64> = mask.iter().map(|&d| if d { 0.0 } else { 1.0 }).collect();
        let hd = h.scale_rows(&keep);
        let rank = pseudo_rank(&hd, DEFAULT_RANK_TOL);
        if rank < n {
            return Err(Error::Unobservable { rank, states: n });
        }
        let inv_var: Vec<f64> = sigmas
            .iter()
            .zip(&mask)
            .map(|(s, &d)| if d { 0.0 } else { 1.0 / (s * s) })
            .collect();
        let gain = hd.weighted_gram(&inv_var);
        // Hdᵀ R⁻¹, masked columns are zero because the rows of Hd are.
        let rhs = hd.scale_rows(&inv_var).transpose();
        let k = solve_spd(&gain, &rhs).map_err(|e| match e {
            Error::NotPositiveDefinite { .. } => Error::Unobservable { rank: n - 1, states: n },
            other => other,
        })?;
        let mut s = DenseMatrix::identity(m).sub(&hd.matmul(&k)?)?;
        for (i, &d) in mask.iter().enumerate() {
            if d {
                for j in 0..m {
                    s[(i, j)] = 0.0;
                    s[(j, i)] = 0.0;
                }
            }
        }
        let sys = Self {
            h,
            sigmas,
            injection_rows,
            mask,
            hd,
            k,
            s,
        };
        sys.check_invariants()?;
        Ok(sys)
    }

    fn check_invariants(&self) -> Result<()> {
        let kh = self.k.matmul(&self.hd)?;
        let dev = kh.sub(&DenseMatrix::identity(self.n()))?.max_abs();
        if dev > INVARIANT_TOL {
            return Err(Error::Numerical(format!("K·H deviates from identity by {dev:e}")));
        }
        let sh = self.s.matmul(&self.hd)?.max_abs();
        if sh > INVARIANT_TOL * self.hd.max_abs().max(1.0) {
            return Err(Error::Numerical(format!("S·H deviates from zero by {sh:e}")));
        }
        Ok(())
    }

    /// Same model with availability mask `d` (absolute, not cumulative).
    pub fn apply_availability_mask(&self, d: &[bool]) -> Result<Self> {
        if d.len() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                got: d.len(),
            });
        }
        if d == self.mask.as_slice() {
            return Ok(self.clone());
        }
        Self::assemble(self.h.clone(), self.sigmas.clone(), self.injection_rows.clone(), d.to_vec())
    }

    /// Unmasked system with the same model.
    pub fn unmasked(&self) -> Result<Self> {
        self.apply_availability_mask(&vec![false; self.m()])
    }

    pub fn m(&self) -> usize {
        self.h.rows()
    }

    pub fn n(&self) -> usize {
        self.h.cols()
    }

    /// Full (unmasked) model `H`.
    pub fn h(&self) -> &DenseMatrix {
        &self.h
    }

    /// Masked model `H_d`.
    pub fn hd(&self) -> &DenseMatrix {
        &self.hd
    }

    pub fn k(&self) -> &DenseMatrix {
        &self.k
    }

    pub fn s(&self) -> &DenseMatrix {
        &self.s
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn noise_covariance(&self) -> DenseMatrix {
        DenseMatrix::from_diag(&self.sigmas.iter().map(|s| s * s).collect::<Vec<_>>())
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|d| **d).count()
    }

    /// Residual degrees of freedom `m − n − k_d`.
    pub fn dof(&self) -> usize {
        self.m() - self.n() - self.masked_count()
    }

    pub fn injection_rows(&self) -> &[usize] {
        &self.injection_rows
    }

    /// `M_inj`: 0/1 rows selecting the injection measurements.
    pub fn injection_selector(&self) -> DenseMatrix {
        let mut sel = DenseMatrix::zeros(self.injection_rows.len(), self.m());
        for (r, &i) in self.injection_rows.iter().enumerate() {
            sel[(r, i)] = 1.0;
        }
        sel
    }

    /// `H_inj = M_inj · H`.
    pub fn h_inj(&self) -> DenseMatrix {
        self.h.select_rows(&self.injection_rows)
    }

    /// `H_inj · K_d`: expected load-estimate bias per unit of injected data.
    pub fn injection_gain(&self) -> DenseMatrix {
        self.h_inj().matmul(&self.k).expect("conformal")
    }

    /// `R^(−1/2) · S_d`.
    pub fn weighted_residual_matrix(&self) -> DenseMatrix {
        let inv: Vec<f64> = self.sigmas.iter().map(|s| 1.0 / s).collect();
        self.s.scale_rows(&inv)
    }
}

/// `H`, `K`, `S` for a network and placement.
pub fn build_system_matrices(net: &NetworkModel, placement: &MeasurementPlacement) -> Result<SystemMatrices> {
    let h = measurement_matrix(net, placement, &net.susceptances())?;
    SystemMatrices::from_model(h, placement.sigmas(), placement.injection_indices())
}
