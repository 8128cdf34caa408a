//! Measurable checks on computed solutions: the `L∞` truncation bound,
//! localization over a λ-sweep, the energy sandwich, multiplicity, the
//! limit problem as λ grows, and the Gausson discretization study.
//!
//! Verdicts are computed from [`SummaryRow`]s only, which are exactly the
//! rows written to `energies.csv`, so every verdict can be recomputed from
//! that file.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::domain::{laplacian_into, nodal_gradient_sq, restricted_norm_sq, Field, Grid, Region};
use crate::error::{Error, Result};
use crate::functional::{Landscape, Penalized};
use crate::penalty::{s2_log_s2, PenalizationParams};
use crate::solver::{lambda_sweep, multi_bump_init, SolverConfig, SweepPoint};

/// Relative slack allowed when checking the tail of a sweep for monotone decrease.
pub const TAIL_SLACK: f64 = 0.05;
/// Number of trailing sweep values checked for monotonicity.
pub const TAIL_WINDOW: usize = 3;

/// Selection `Γ` as a string of `0`/`1` flags, well 1 first.
pub fn gamma_label(gamma: &[usize], wells: usize) -> String {
    (0..wells).map(|j| if gamma.contains(&j) { '1' } else { '0' }).collect()
}

/// Flags written by [`gamma_label`] back to zero-based indices.
pub fn parse_gamma_label(label: &str) -> Result<Vec<usize>> {
    label
        .chars()
        .enumerate()
        .filter_map(|(j, c)| match c {
            '1' => Some(Ok(j)),
            '0' => None,
            _ => Some(Err(Error::Format(format!("bad well mask {label:?}")))),
        })
        .collect()
}

/// Every nonempty subset of `{0, .., wells-1}`, ordered by bit pattern.
pub fn all_subsets(wells: usize) -> Vec<Vec<usize>> {
    (1u32..(1 << wells)).map(|bits| (0..wells).filter(|&j| bits & (1 << j) != 0).collect()).collect()
}

/// True when each of the last `window` values is at most the previous one
/// times `1 + slack`.
pub fn tail_nonincreasing(values: &[f64], window: usize, slack: f64) -> bool {
    let start = values.len().saturating_sub(window);
    values[start..].windows(2).all(|w| w[1] <= w[0] * (1.0 + slack) + f64::MIN_POSITIVE)
}

/// One row of the verification summary: a converged (or flagged) solution
/// of `Γ` at one `λ` together with the reference levels it is judged against.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub lambda: f64,
    pub gamma: Vec<usize>,
    pub phi: f64,
    pub b_upper: f64,
    /// `I_{λ,j}(u)` for every well.
    pub i_lambda: Vec<f64>,
    /// `|I_{λ,j}(u) − c_j|` for `j ∈ Γ`, `NaN` elsewhere.
    pub level_gap: Vec<f64>,
    pub lambda_v_mass: f64,
    pub outside_norm_sq: f64,
    pub sup_outside: f64,
    pub a0: f64,
    /// Wells carrying at least the occupancy fraction of the mass.
    pub occupied: Vec<usize>,
    pub converged: bool,
    pub residual: f64,
    /// `c_Γ = Σ_{j∈Γ} c_j`
    pub c_gamma: f64,
    /// `Σ_{j∈Γ} c_{λ,j}`
    pub sum_c_lambda: f64,
    /// Discrete `H¹` distance to `Σ_{j∈Γ} ω_j`.
    pub h1_gap: f64,
    /// `‖u‖²_{λ,R}` minus its reconstruction from the partition into
    /// `box∖Ω_Γ` and the wells `Ω_j`.
    pub partition_defect: f64,
}

impl SummaryRow {
    pub fn csv_header(wells: usize) -> String {
        let mut cols: Vec<String> = vec!["lambda".into(), "gamma_mask".into(), "phi_total".into(), "b_upper".into()];
        cols.extend((1..=wells).map(|j| format!("i_lambda_{j}")));
        cols.extend((1..=wells).map(|j| format!("level_gap_{j}")));
        cols.extend(
            [
                "lambda_v_mass",
                "outside_norm_sq",
                "sup_outside",
                "a0",
                "converged",
                "occupied_mask",
                "residual",
                "c_gamma",
                "sum_c_lambda",
                "h1_gap",
                "partition_defect",
            ]
            .map(String::from),
        );
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let wells = self.i_lambda.len();
        let mut out = format!("{:?},{},{:?},{:?}", self.lambda, gamma_label(&self.gamma, wells), self.phi, self.b_upper);
        for v in self.i_lambda.iter().chain(&self.level_gap) {
            let _ = write!(out, ",{v:?}");
        }
        let _ = write!(
            out,
            ",{:?},{:?},{:?},{:?},{},{},{:?},{:?},{:?},{:?},{:?}",
            self.lambda_v_mass,
            self.outside_norm_sq,
            self.sup_outside,
            self.a0,
            self.converged,
            gamma_label(&self.occupied, wells),
            self.residual,
            self.c_gamma,
            self.sum_c_lambda,
            self.h1_gap,
            self.partition_defect,
        );
        out
    }

    /// Parses a line written by [`SummaryRow::csv_row`].
    pub fn parse_csv(line: &str, wells: usize) -> Result<Self> {
        let cols: Vec<&str> = line.trim().split(',').collect();
        let expected = 4 + 2 * wells + 11;
        if cols.len() != expected {
            return Err(Error::Format(format!("expected {expected} columns, found {}", cols.len())));
        }
        let num = |i: usize| -> Result<f64> {
            cols[i].parse().map_err(|_| Error::Format(format!("column {} is not a number: {:?}", i + 1, cols[i])))
        };
        let tail = 4 + 2 * wells;
        Ok(Self {
            lambda: num(0)?,
            gamma: parse_gamma_label(cols[1])?,
            phi: num(2)?,
            b_upper: num(3)?,
            i_lambda: (0..wells).map(|j| num(4 + j)).collect::<Result<_>>()?,
            level_gap: (0..wells).map(|j| num(4 + wells + j)).collect::<Result<_>>()?,
            lambda_v_mass: num(tail)?,
            outside_norm_sq: num(tail + 1)?,
            sup_outside: num(tail + 2)?,
            a0: num(tail + 3)?,
            converged: cols[tail + 4]
                .parse()
                .map_err(|_| Error::Format(format!("bad converged flag {:?}", cols[tail + 4])))?,
            occupied: parse_gamma_label(cols[tail + 5])?,
            residual: num(tail + 6)?,
            c_gamma: num(tail + 7)?,
            sum_c_lambda: num(tail + 8)?,
            h1_gap: num(tail + 9)?,
            partition_defect: num(tail + 10)?,
        })
    }
}

/// Reference data shared by all rows of a run.
#[derive(Debug, Clone)]
pub struct References<'a> {
    pub omegas: &'a [Field],
    /// Single-well levels `c_j`.
    pub levels: &'a [f64],
    /// `c_{λ,j}` per `λ` (outer) and well (inner), aligned with the sweep.
    pub neumann_levels: &'a [Vec<f64>],
    /// Minimax upper bound per sweep point.
    pub b_upper: &'a [f64],
}

/// Builds summary rows for one `Γ` sweep.
pub fn summarize_sweep(
    land: &Landscape,
    params: PenalizationParams,
    gamma: &[usize],
    sweep: &[SweepPoint],
    refs: &References,
) -> Result<Vec<SummaryRow>> {
    let wells = land.wells();
    let c_gamma: f64 = gamma.iter().map(|&j| refs.levels[j]).sum();
    let target = sum_of(land.grid, gamma, refs.omegas);
    sweep
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let problem = Penalized::new(land, params, p.lambda, gamma)?;
            let u = &p.record.field;
            let level_gap = (0..wells)
                .map(|j| if gamma.contains(&j) { (p.report.per_well[j] - refs.levels[j]).abs() } else { f64::NAN })
                .collect();
            let mut reconstructed = p.report.outside_norm_sq;
            for &j in &problem.gamma {
                reconstructed += restricted_norm_sq(u, &land.well_masks[j], p.lambda, &land.potential);
            }
            Ok(SummaryRow {
                lambda: p.lambda,
                gamma: problem.gamma.clone(),
                phi: p.report.total,
                b_upper: refs.b_upper[i],
                i_lambda: p.report.per_well.clone(),
                level_gap,
                lambda_v_mass: p.report.lambda_v_mass,
                outside_norm_sq: p.report.outside_norm_sq,
                sup_outside: p.report.sup_outside,
                a0: params.a0,
                occupied: (0..wells).filter(|&j| p.record.bump_mask[j]).collect(),
                converged: p.record.converged,
                residual: p.record.final_residual(),
                c_gamma,
                sum_c_lambda: gamma.iter().map(|&j| refs.neumann_levels[i][j]).sum(),
                h1_gap: h1_distance(u, &target),
                partition_defect: p.report.norm_sq - reconstructed,
            })
        })
        .collect()
}

fn sum_of(grid: Grid, gamma: &[usize], omegas: &[Field]) -> Field {
    let mut out = Field::zeros(grid);
    for &j in gamma {
        for (o, w) in out.values.iter_mut().zip(&omegas[j].values) {
            *o += w;
        }
    }
    out
}

/// Discrete `H¹` norm of `u − v` (same conventions as the energy).
pub fn h1_distance(u: &Field, v: &Field) -> f64 {
    let diff: Vec<f64> = u.values.iter().zip(&v.values).map(|(a, b)| a - b).collect();
    let grad = nodal_gradient_sq(&u.grid, &diff);
    let sum: f64 = grad.iter().zip(&diff).map(|(g, d)| g + d * d).sum();
    (sum * u.grid.cell_volume()).sqrt()
}

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    /// Signed distance to failure (positive when passing).
    pub margin: f64,
    pub detail: String,
}

impl Verdict {
    fn new(name: &str, pass: bool, margin: f64, detail: String) -> Self {
        Self { name: name.into(), pass, margin, detail }
    }

    /// `name,pass|fail,margin,detail` with commas in the detail replaced.
    pub fn line(&self) -> String {
        format!(
            "{},{},{:e},{}",
            self.name,
            if self.pass { "pass" } else { "fail" },
            self.margin,
            self.detail.replace(',', ";")
        )
    }
}

/// `sup_outside ≤ a0`, with margin `a0 − sup_outside`.
pub fn check_linfty_outside(sup_outside: f64, a0: f64) -> (bool, f64) {
    (sup_outside <= a0, a0 - sup_outside)
}

/// Smallest sampled `λ` from which the bound holds for every larger sampled `λ`.
pub fn empirical_lambda_threshold(rows: &[&SummaryRow]) -> Option<f64> {
    let mut sorted: Vec<&&SummaryRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let mut threshold = None;
    for r in sorted.iter().rev() {
        if r.converged && check_linfty_outside(r.sup_outside, r.a0).0 {
            threshold = Some(r.lambda);
        } else {
            break;
        }
    }
    threshold
}

/// `Σc_{λ,j} − ε ≤ b_upper ≤ c_Γ + ε` with `ε = allowance · c_Γ`; margin is
/// the smaller slack relative to `c_Γ`.
pub fn check_sandwich(sum_c_lambda: f64, b_upper: f64, c_gamma: f64, allowance: f64) -> (bool, f64) {
    let eps = allowance * c_gamma;
    let lower = b_upper - (sum_c_lambda - eps);
    let upper = c_gamma + eps - b_upper;
    (lower >= 0.0 && upper >= 0.0, lower.min(upper) / c_gamma)
}

/// Row of the limit-problem table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitRow {
    pub lambda: f64,
    pub h1_gap: f64,
    /// `|Φ(u_λ) − c_Γ| / c_Γ`
    pub energy_gap: f64,
}

/// `‖u_λ − Σω_j‖_{H¹}` and the relative energy gap per `λ` of one `Γ`.
pub fn check_limit_problem(rows: &[&SummaryRow]) -> Vec<LimitRow> {
    rows.iter()
        .map(|r| LimitRow { lambda: r.lambda, h1_gap: r.h1_gap, energy_gap: (r.phi - r.c_gamma).abs() / r.c_gamma })
        .collect()
}

/// Warm-started sweep for one selection, started from `Σ_{j∈Γ} ω_j`
/// (the point `s_j = 1/T` of the minimax path).
pub fn sweep_selection(
    land: &Landscape,
    params: PenalizationParams,
    gamma: &[usize],
    lambdas: &[f64],
    omegas: &[Field],
    t: f64,
    config: &SolverConfig,
) -> Result<Vec<SweepPoint>> {
    if lambdas.is_empty() {
        return Err(Error::invalid("lambdas", "at least one lambda is required"));
    }
    let scales = vec![1.0 / t; gamma.len()];
    let init = multi_bump_init(gamma, omegas, &scales, t);
    lambda_sweep(land, params, gamma, lambdas, &init, config)
}

/// [`sweep_selection`] for every entry of `gammas`, in parallel on the
/// current rayon pool; results keep the order of `gammas`.
pub fn scan_selections(
    land: &Landscape,
    params: PenalizationParams,
    gammas: &[Vec<usize>],
    lambdas: &[f64],
    omegas: &[Field],
    t: f64,
    config: &SolverConfig,
) -> Vec<(Vec<usize>, Result<Vec<SweepPoint>>)> {
    gammas
        .par_iter()
        .map(|gamma| (gamma.clone(), sweep_selection(land, params, gamma, lambdas, omegas, t, config)))
        .collect()
}

/// Multiplicity count over every nonempty `Γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Multiplicity {
    pub distinct: usize,
    pub expected: usize,
    /// Selections whose solution did not converge or occupies other wells.
    pub mismatched: Vec<Vec<usize>>,
}

impl Multiplicity {
    pub fn pass(&self) -> bool {
        self.distinct == self.expected && self.mismatched.is_empty()
    }
}

/// Counts distinct occupied-well masks among converged solutions whose mask
/// equals their target `Γ`; `rows` holds one row per selection.
pub fn multiplicity(rows: &[&SummaryRow], wells: usize) -> Multiplicity {
    let mut masks: Vec<&Vec<usize>> = Vec::new();
    let mut mismatched = Vec::new();
    for r in rows {
        if r.converged && r.occupied == r.gamma {
            if !masks.contains(&&r.occupied) {
                masks.push(&r.occupied);
            }
        } else {
            mismatched.push(r.gamma.clone());
        }
    }
    Multiplicity { distinct: masks.len(), expected: (1 << wells) - 1, mismatched }
}

/// Relative limit-energy tolerance at the largest `λ`.
pub const LIMIT_ENERGY_TOL: f64 = 0.01;
/// Relative tolerance of `Φ(Γ) ≈ Σ_{j∈Γ} Φ({j})`.
pub const ADDITIVITY_TOL: f64 = 0.02;
/// Absolute tolerance (scaled by `max(1, ‖u‖²)`) of the norm partition.
pub const PARTITION_TOL: f64 = 1e-10;

/// Rows grouped by selection, each group sorted by `λ`.
pub fn group_rows(rows: &[SummaryRow]) -> Vec<(Vec<usize>, Vec<&SummaryRow>)> {
    let mut groups: Vec<(Vec<usize>, Vec<&SummaryRow>)> = Vec::new();
    for r in rows {
        match groups.iter_mut().find(|(g, _)| *g == r.gamma) {
            Some((_, v)) => v.push(r),
            None => groups.push((r.gamma.clone(), vec![r])),
        }
    }
    for (_, v) in &mut groups {
        v.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    }
    groups
}

fn tail_margin(values: &[f64]) -> f64 {
    let start = values.len().saturating_sub(TAIL_WINDOW);
    values[start..]
        .windows(2)
        .map(|w| if w[0] > 0.0 { (1.0 + TAIL_SLACK) - w[1] / w[0] } else if w[1] <= 0.0 { TAIL_SLACK } else { -1.0 })
        .fold(TAIL_SLACK, f64::min)
}

/// Every verdict of a run, computed from its summary rows alone.
///
/// `multiplicity_scan` enables the count over all nonempty selections, which
/// is meaningful only when every selection was run.
pub fn verdicts(rows: &[SummaryRow], wells: usize, multiplicity_scan: bool, allowance: f64) -> Vec<Verdict> {
    let groups = group_rows(rows);
    let lasts: Vec<&SummaryRow> = groups.iter().map(|(_, v)| *v.last().unwrap()).collect();
    let mut out = Vec::new();
    if rows.is_empty() {
        out.push(Verdict::new("rows", false, -1.0, "no solutions were recorded".into()));
        return out;
    }

    let failed: Vec<String> =
        rows.iter().filter(|r| !r.converged).map(|r| format!("{}@{:e}", gamma_label(&r.gamma, wells), r.lambda)).collect();
    let worst = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    out.push(Verdict::new(
        "converged",
        failed.is_empty(),
        -(failed.len() as f64),
        if failed.is_empty() { format!("max residual {worst:e}") } else { format!("not converged: {}", failed.join(" ")) },
    ));

    let mut margin = f64::INFINITY;
    let mut detail = Vec::new();
    for ((gamma, group), last) in groups.iter().zip(&lasts) {
        let (_, m) = check_linfty_outside(last.sup_outside, last.a0);
        margin = margin.min(if last.converged { m } else { -1.0 });
        let threshold = empirical_lambda_threshold(group).map_or("none".to_string(), |t| format!("{t:e}"));
        detail.push(format!("{} threshold {threshold}", gamma_label(gamma, wells)));
    }
    out.push(Verdict::new("linfty_outside", margin >= 0.0, margin, detail.join(" ")));

    let mut margin = f64::INFINITY;
    for (_, group) in &groups {
        let v: Vec<f64> = group.iter().map(|r| r.lambda_v_mass).collect();
        let o: Vec<f64> = group.iter().map(|r| r.outside_norm_sq).collect();
        margin = margin.min(tail_margin(&v)).min(tail_margin(&o));
    }
    out.push(Verdict::new(
        "localization",
        margin >= 0.0,
        margin,
        "lambda_v_mass and outside_norm_sq over the sweep tail".into(),
    ));

    let gap = lasts.iter().map(|r| (r.phi - r.c_gamma).abs() / r.c_gamma).fold(0.0, f64::max);
    out.push(Verdict::new(
        "limit_energy",
        gap < LIMIT_ENERGY_TOL,
        LIMIT_ENERGY_TOL - gap,
        format!("max |phi - c_gamma|/c_gamma at the largest lambda = {gap:e}"),
    ));

    let mut margin = f64::INFINITY;
    for (_, group) in &groups {
        let g: Vec<f64> = group.iter().map(|r| r.h1_gap).collect();
        margin = margin.min(tail_margin(&g));
    }
    out.push(Verdict::new("limit_h1", margin >= 0.0, margin, "H1 distance to the sum of ground states".into()));

    let mut margin = f64::INFINITY;
    for r in rows {
        margin = margin.min(check_sandwich(r.sum_c_lambda, r.b_upper, r.c_gamma, allowance).1);
    }
    out.push(Verdict::new("sandwich", margin >= 0.0, margin, format!("allowance {allowance}")));

    let singles: Vec<&(Vec<usize>, Vec<&SummaryRow>)> = groups.iter().filter(|(g, _)| g.len() == 1).collect();
    if !singles.is_empty() {
        let mut margin = f64::INFINITY;
        for (_, group) in &singles {
            for w in group.windows(2) {
                margin = margin.min((w[1].sum_c_lambda - w[0].sum_c_lambda) / w[0].sum_c_lambda.abs().max(1.0));
            }
        }
        out.push(Verdict::new(
            "neumann_monotone",
            margin >= -1e-12,
            margin,
            "c_lambda_j nondecreasing in lambda".into(),
        ));
    }

    let mut margin = f64::INFINITY;
    for (gamma, group) in &groups {
        for &j in gamma {
            let g: Vec<f64> = group.iter().map(|r| r.level_gap[j]).collect();
            margin = margin.min(tail_margin(&g));
        }
    }
    out.push(Verdict::new("a_mu_trend", margin >= 0.0, margin, "|I_lambda_j - c_j| over the sweep tail".into()));

    let worst = rows
        .iter()
        .map(|r| r.partition_defect.abs() / (r.outside_norm_sq + r.c_gamma).max(1.0))
        .fold(0.0, f64::max);
    out.push(Verdict::new(
        "norm_partition",
        worst <= PARTITION_TOL,
        PARTITION_TOL - worst,
        format!("max relative defect {worst:e}"),
    ));

    if !singles.is_empty() && groups.iter().any(|(g, _)| g.len() > 1) {
        let mut worst = 0.0f64;
        for (gamma, group) in groups.iter().filter(|(g, _)| g.len() > 1) {
            for r in group {
                let parts: Option<f64> = gamma
                    .iter()
                    .map(|&j| {
                        singles
                            .iter()
                            .find(|(g, _)| g[0] == j)
                            .and_then(|(_, v)| v.iter().find(|s| s.lambda == r.lambda))
                            .map(|s| s.phi)
                    })
                    .sum();
                if let Some(sum) = parts {
                    worst = worst.max((r.phi - sum).abs() / sum.abs());
                }
            }
        }
        out.push(Verdict::new(
            "additivity",
            worst < ADDITIVITY_TOL,
            ADDITIVITY_TOL - worst,
            format!("max |phi(gamma) - sum of single-well phi| relative = {worst:e}"),
        ));
    }

    if multiplicity_scan {
        let max_lambda = rows.iter().map(|r| r.lambda).fold(f64::NEG_INFINITY, f64::max);
        let at_max: Vec<&SummaryRow> = lasts.iter().copied().filter(|r| r.lambda == max_lambda).collect();
        let m = multiplicity(&at_max, wells);
        let mismatched: Vec<String> = m.mismatched.iter().map(|g| gamma_label(g, wells)).collect();
        out.push(Verdict::new(
            "multiplicity",
            m.pass(),
            m.distinct as f64 - m.expected as f64,
            format!(
                "{} distinct masks of {} expected at lambda {max_lambda:e}{}",
                m.distinct,
                m.expected,
                if mismatched.is_empty() { String::new() } else { format!("; mismatched {}", mismatched.join(" ")) }
            ),
        ));
    }
    out
}

/// Residual norms of a candidate under grid refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderStudy {
    pub dim: usize,
    pub h: Vec<f64>,
    pub residual: Vec<f64>,
    /// `residual[i] / residual[i+1]`
    pub ratios: Vec<f64>,
    /// Least-squares slope of `log residual` against `log h`.
    pub fitted_order: f64,
}

impl OrderStudy {
    pub fn passes(&self) -> bool {
        (1.9..=2.1).contains(&self.fitted_order) && self.ratios.iter().all(|r| (3.6..=4.4).contains(r))
    }
}

/// Half-width of the box used by [`gausson_order_study`].
pub const GAUSSON_BOX: f64 = 8.0;
/// Half-width of the interior cube on which residuals are measured.
pub const GAUSSON_INTERIOR: f64 = 4.0;

/// The Gausson `e^{N/2 − |x|²/2}`, an exact solution of `−Δu = u log u²`.
pub fn gausson(dim: usize, x: &[f64; 2]) -> f64 {
    let r2: f64 = x[..dim].iter().map(|c| c * c).sum();
    (0.5 * dim as f64 - 0.5 * r2).exp()
}

/// Discrete `L²` norm on the interior cube of `−Δ_h u − u log u²` for the
/// candidate `u`, on grids with `cells` intervals per axis.
pub fn interior_residual(dim: usize, cells: usize, candidate: impl Fn(&[f64; 2]) -> f64) -> Result<(f64, f64)> {
    let grid = Grid::new(dim, cells + 1, GAUSSON_BOX)?;
    let u = Field::from_fn(grid, |x| candidate(x));
    let mut lap = vec![0.0; grid.len()];
    laplacian_into(&grid, &Region::full(&grid), &u.values, &mut lap);
    let mut sum = 0.0;
    for k in 0..grid.len() {
        let x = grid.coord(k);
        if x[..dim].iter().all(|c| c.abs() < GAUSSON_INTERIOR) {
            let v = u.values[k];
            let r = lap[k] - if v > 0.0 { s2_log_s2(v) / v } else { 0.0 };
            sum += r * r;
        }
    }
    Ok((grid.h(), (sum * grid.cell_volume()).sqrt()))
}

/// Order study for `candidate` over successive halvings starting at `cells`.
pub fn order_study(
    dim: usize,
    cells: usize,
    levels: usize,
    candidate: impl Fn(&[f64; 2]) -> f64 + Copy,
) -> Result<OrderStudy> {
    if levels < 2 {
        return Err(Error::invalid("levels", "an order study needs at least two grids"));
    }
    let mut h = Vec::with_capacity(levels);
    let mut residual = Vec::with_capacity(levels);
    for i in 0..levels {
        let (hi, ri) = interior_residual(dim, cells << i, candidate)?;
        h.push(hi);
        residual.push(ri);
    }
    let ratios = residual.windows(2).map(|w| w[0] / w[1]).collect();
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = residual.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(OrderStudy { dim, h, residual, ratios, fitted_order: sxy / sxx })
}

/// Gausson residual study in `dim` dimensions.
pub fn gausson_order_study(dim: usize, cells: usize, levels: usize) -> Result<OrderStudy> {
    order_study(dim, cells, levels, move |x| gausson(dim, x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        assert_eq!(gamma_label(&[0, 2], 3), "101");
        assert_eq!(parse_gamma_label("101").unwrap(), vec![0, 2]);
        assert!(parse_gamma_label("1x").is_err());
        assert_eq!(all_subsets(2), vec![vec![0], vec![1], vec![0, 1]]);
        assert_eq!(all_subsets(1).len(), 1);
        assert_eq!(all_subsets(3).len(), 7);
    }

    #[test]
    fn tail_check() {
        assert!(tail_nonincreasing(&[5.0, 1.0, 0.5, 0.1], 3, 0.05));
        assert!(tail_nonincreasing(&[0.1, 1.0, 0.5, 0.51], 3, 0.05));
        assert!(!tail_nonincreasing(&[1.0, 0.5, 0.6], 3, 0.05));
        assert!(tail_nonincreasing(&[0.0, 0.0, 0.0], 3, 0.05));
    }

    #[test]
    fn zero_field_passes_linfty_with_full_margin() {
        let (ok, margin) = check_linfty_outside(0.0, 0.3);
        assert!(ok);
        assert_eq!(margin, 0.3);
        assert!(!check_linfty_outside(0.31, 0.3).0);
    }

    #[test]
    fn sandwich_allowance() {
        assert!(check_sandwich(4.7, 4.8, 4.82, 0.02).0);
        assert!(check_sandwich(4.9, 4.85, 4.82, 0.02).0);
        assert!(!check_sandwich(4.7, 5.0, 4.82, 0.02).0);
        assert!(!check_sandwich(4.7, 4.5, 4.82, 0.02).0);
    }

    #[test]
    fn gausson_is_second_order_in_one_and_two_dimensions() {
        for dim in [1, 2] {
            let study = gausson_order_study(dim, 32, 4).unwrap();
            assert!(study.passes(), "{study:?}");
        }
    }

    #[test]
    fn plain_gaussian_residual_does_not_vanish() {
        let study = order_study(1, 32, 4, |x| (-x[0] * x[0]).exp()).unwrap();
        let last = *study.residual.last().unwrap();
        assert!(last > 0.1, "{study:?}");
        assert!(study.fitted_order.abs() < 0.1);
    }

    fn row(lambda: f64, gamma: Vec<usize>, occupied: Vec<usize>, sup: f64) -> SummaryRow {
        SummaryRow {
            lambda,
            i_lambda: vec![1.0, 2.0],
            level_gap: vec![0.5, f64::NAN],
            gamma,
            phi: 2.4,
            b_upper: 2.41,
            lambda_v_mass: 1e-3,
            outside_norm_sq: 2e-3,
            sup_outside: sup,
            a0: 0.3,
            occupied,
            converged: true,
            residual: 1e-9,
            c_gamma: 2.41,
            sum_c_lambda: 2.40,
            h1_gap: 1e-2,
            partition_defect: 0.0,
        }
    }

    #[test]
    fn csv_round_trip() {
        let r = row(1e4, vec![0], vec![0], 1e-17);
        let header = SummaryRow::csv_header(2);
        assert_eq!(header.split(',').count(), r.csv_row().split(',').count());
        let back = SummaryRow::parse_csv(&r.csv_row(), 2).unwrap();
        assert_eq!(back.csv_row(), r.csv_row());
        assert!(back.level_gap[1].is_nan());
        assert!(SummaryRow::parse_csv("1,2", 2).is_err());
    }

    #[test]
    fn threshold_and_multiplicity() {
        let rows = [row(10.0, vec![0], vec![0], 0.5), row(100.0, vec![0], vec![0], 0.2), row(1e3, vec![0], vec![0], 0.1)];
        let refs: Vec<&SummaryRow> = rows.iter().collect();
        assert_eq!(empirical_lambda_threshold(&refs), Some(100.0));

        let scan = [row(1e4, vec![0], vec![0], 0.0), row(1e4, vec![1], vec![1], 0.0), row(1e4, vec![0, 1], vec![0, 1], 0.0)];
        let refs: Vec<&SummaryRow> = scan.iter().collect();
        assert!(multiplicity(&refs, 2).pass());
        let bad = [row(1e4, vec![0], vec![0], 0.0), row(1e4, vec![1], vec![0], 0.0), row(1e4, vec![0, 1], vec![0, 1], 0.0)];
        let refs: Vec<&SummaryRow> = bad.iter().collect();
        let m = multiplicity(&refs, 2);
        assert!(!m.pass());
        assert_eq!(m.mismatched, vec![vec![1]]);
    }
}
