//! Subcommand bodies. Each returns the text to print; indices in all user
//! facing output are one-based.

use std::fmt::Write as _;
use std::path::Path;

use gridraid_core::detection::{detection_probability, monte_carlo_detection, perturb_line_parameters};
use gridraid_core::grid::build_system_matrices;
use gridraid_core::impact::{impact_metric, optimal_sparse_attack_with, realized_detection, Boundedness, SparseOptions};
use gridraid_core::linalg::{norm_inf_vec, pseudo_rank, DEFAULT_RANK_TOL};
use gridraid_core::synthesis::{assign_availability, min_cardinality_search, AttackVector, Certificate, SearchOptions};

use crate::attack_file::{attack_table, read_attack};
use crate::case::load_case;
use crate::exit::InputError;
use crate::table::{fmt_float, fmt_indices};

pub fn case_validate(path: &Path) -> anyhow::Result<String> {
    let (case, _) = load_case(path)?;
    let placement = &case.placement;
    let mut out = String::new();
    let m = placement.len();
    let n = case.network.state_count();
    let rank = {
        let h = gridraid_core::grid::measurement_matrix(&case.network, placement, &case.network.susceptances())?;
        pseudo_rank(&h, DEFAULT_RANK_TOL)
    };
    writeln!(out, "buses {}  reference {}", case.network.buses().len(), case.network.reference_bus())?;
    writeln!(out, "m = {m}  n = {n}  n_t = {}  rank(H) = {rank}", case.network.lines().len())?;
    writeln!(out, "{:>5}  {:<20} sigma", "index", "measurement")?;
    for (i, meas) in placement.measurements().iter().enumerate() {
        writeln!(out, "{:>5}  {:<20} {}", i + 1, meas.kind.to_string(), fmt_float(meas.sigma))?;
    }
    // the full factorization also checks observability
    build_system_matrices(&case.network, placement)?;
    writeln!(out, "observable")?;
    Ok(out)
}

pub struct SynthArgs<'a> {
    pub case: &'a Path,
    pub target: usize,
    pub mu: f64,
    pub knowledge: Option<f64>,
    pub seed: u64,
    pub blocked: usize,
    pub alpha: f64,
    pub out: Option<&'a Path>,
}

fn one_based(index: usize, m: usize, what: &str) -> anyhow::Result<usize> {
    if index == 0 || index > m {
        return Err(InputError(format!("{what} {index} outside 1..={m}")).into());
    }
    Ok(index - 1)
}

pub fn synth(args: &SynthArgs) -> anyhow::Result<String> {
    let (case, _) = load_case(args.case)?;
    let sys = build_system_matrices(&case.network, &case.placement)?;
    let j = one_based(args.target, sys.m(), "target")?;
    let h_model = match args.knowledge {
        Some(p) => perturb_line_parameters(&case.network, &case.placement, p, args.seed)?.h_tilde,
        None => sys.h().clone(),
    };
    let outcome = min_cardinality_search(&h_model, j, args.mu, &SearchOptions::default())?;
    let mut plan = outcome.best;
    if args.blocked > 0 {
        plan = assign_availability(&h_model, &plan, args.blocked)?;
    }
    let atk = &plan.attack;
    let masked = sys.apply_availability_mask(atk.d())?;
    let residual = masked.s().matvec(atk.a())?;

    let mut out = String::new();
    writeln!(out, "cost {}", plan.cost)?;
    writeln!(
        out,
        "certificate {}",
        match plan.certificate {
            Certificate::Proven => "optimal",
            Certificate::Heuristic => "incumbent",
        }
    )?;
    writeln!(out, "falsified ({}) {}", atk.ka(), fmt_indices(&atk.support_a()))?;
    writeln!(out, "blocked ({}) {}", atk.kd(), fmt_indices(&atk.support_d()))?;
    writeln!(
        out,
        "c {}",
        plan.c.iter().map(|v| fmt_float(*v)).collect::<Vec<_>>().join(" ")
    )?;
    writeln!(out, "search nodes {}  big-M {}", outcome.nodes, fmt_float(outcome.big_m))?;
    writeln!(out, "residual |S_d a|_inf {:.3e}", norm_inf_vec(&residual))?;
    let det = detection_probability(&sys, atk, args.alpha)?;
    writeln!(
        out,
        "detection probability {}  (lambda {}, dof {})",
        fmt_float(det.probability),
        fmt_float(det.noncentrality),
        det.dof
    )?;
    if let Some(path) = args.out {
        attack_table(atk).write(path)?;
        writeln!(out, "attack written to {}", path.display())?;
    }
    Ok(out)
}

pub fn detect(case: &Path, attack: &Path, alpha: f64, trials: Option<usize>, seed: u64) -> anyhow::Result<String> {
    let (case, _) = load_case(case)?;
    let sys = build_system_matrices(&case.network, &case.placement)?;
    let atk = read_attack(attack, sys.m()).map_err(|e| InputError(format!("{e:#}")))?;
    let det = detection_probability(&sys, &atk, alpha)?;
    let impact = impact_metric(&sys, &atk)?;
    let mut out = String::new();
    writeln!(out, "falsified {}  blocked {}", atk.ka(), atk.kd())?;
    writeln!(out, "dof {}  threshold {}", det.dof, fmt_float(det.threshold))?;
    writeln!(out, "noncentrality {}", fmt_float(det.noncentrality))?;
    writeln!(out, "detection probability {}", fmt_float(det.probability))?;
    writeln!(out, "impact {}", fmt_float(impact.metric))?;
    if let Some(t) = trials {
        let mc = monte_carlo_detection(&sys, &atk, alpha, t, seed)?;
        writeln!(out, "monte carlo ({t} trials) {}", fmt_float(mc))?;
    }
    Ok(out)
}

pub struct SparseArgs<'a> {
    pub case: &'a Path,
    pub ka: usize,
    pub kd: usize,
    pub delta_bar: f64,
    pub alpha: f64,
    pub ceiling: u128,
    pub out: Option<&'a Path>,
}

pub fn sparse(args: &SparseArgs) -> anyhow::Result<String> {
    let (case, _) = load_case(args.case)?;
    let sys = build_system_matrices(&case.network, &case.placement)?;
    let opts = SparseOptions {
        candidates: None,
        ceiling: args.ceiling,
    };
    let sol = optimal_sparse_attack_with(&sys, args.ka, args.kd, args.delta_bar, args.alpha, &opts)?;
    let mut out = String::new();
    writeln!(out, "falsified {}", fmt_indices(&sol.support_a))?;
    writeln!(out, "blocked {}", fmt_indices(&sol.support_d))?;
    match sol.boundedness {
        Boundedness::Bounded => {
            writeln!(out, "impact {}", fmt_float(sol.impact))?;
            writeln!(out, "epsilon_bar {}", fmt_float(sol.epsilon_bar))?;
            writeln!(
                out,
                "detection probability {}",
                fmt_float(realized_detection(&sys, &sol, args.alpha)?)
            )?;
        }
        Boundedness::StealthUnbounded => {
            writeln!(out, "impact unbounded: the support carries a perfectly stealthy attack")?;
        }
    }
    writeln!(
        out,
        "supports evaluated {}  masks skipped (unobservable) {}",
        sol.supports_evaluated, sol.skipped_unobservable
    )?;
    if let Some(path) = args.out {
        let atk: AttackVector = sol.attack()?;
        attack_table(&atk).write(path)?;
        writeln!(out, "attack written to {}", path.display())?;
    }
    Ok(out)
}
