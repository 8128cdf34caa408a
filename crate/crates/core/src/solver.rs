//! Semi-implicit gradient flows for the single-well ground states, the
//! Neumann well levels, and the penalized multi-bump problem.
//!
//! One step solves the linear system
//!
//! ```text
//! (I + τ(−Δ_h + λV + 1 + F1'(u)/u)) u⁺ = u + τ G2'(x, u⁺)
//! ```
//!
//! by preconditioned CG. The convex part `F1` enters through its lagged weight
//! `F1'(u)/u ≥ 0`, which majorizes it, and the convex `G2` is linearized, so
//! each step decreases the energy for every `τ > 0` and keeps `u ≥ 0`.
//! Critical points are saddle points with one unstable direction per bump
//! (its amplitude), so each step is followed by a rescaling that zeroes the
//! pairing of the residual with every bump. A field is a fixed point of
//! step + rescaling exactly when its residual vanishes.


use crate::domain::{laplacian_into, Field, Point, Region};
use crate::error::{Error, Result};
use crate::functional::{EnergyReport, Landscape, LocalEnergy, Penalized};
use crate::linalg::{pcg, ShiftedLaplacian};
use crate::penalty::PenalizationParams;

/// Largest accepted time step.
pub const MAX_TAU: f64 = 1.0e3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tau: f64,
    pub max_iters: usize,
    /// Relative `L²` residual at which a solve counts as converged.
    pub tol: f64,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub positivity: bool,
    /// A well is occupied when it carries at least this fraction of `∫u²`.
    pub occupancy: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tau: 5.0, max_iters: 4000, tol: 1e-8, cg_tol: 1e-13, cg_max_iters: 5000, positivity: true, occupancy: 0.01 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= MAX_TAU) {
            return Err(Error::invalid("tau", format!("tau = {} must lie in (0, {MAX_TAU}]", self.tau)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol", "tol must be positive"));
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return Err(Error::invalid("cg_tol", "cg_tol must lie in (0, 1)"));
        }
        if self.max_iters == 0 || self.cg_max_iters == 0 {
            return Err(Error::invalid("max_iters", "iteration limits must be positive"));
        }
        if !(self.occupancy > 0.0 && self.occupancy < 1.0) {
            return Err(Error::invalid("occupancy", "occupancy must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Outcome of one solve. A record that did not converge still carries the
/// last iterate, flagged by `converged = false`.
#[derive(Debug, Clone)]
pub struct SolveRecord {
    pub field: Field,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub energy_history: Vec<f64>,
    pub converged: bool,
    pub energy: f64,
    /// Per well: does `Ω'_j` carry at least the occupancy fraction of `∫u²`.
    pub bump_mask: Vec<bool>,
}

impl SolveRecord {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }

    /// Whether the recorded energies never rose by more than `slack` (relative).
    pub fn energy_monotone(&self, slack: f64) -> bool {
        self.energy_history.windows(2).all(|w| w[1] <= w[0] + slack * w[0].abs().max(1.0))
    }
}

/// Wells whose enlargement holds at least `threshold` of the total `∫u²`.
pub fn occupied_wells(land: &Landscape, u: &Field, threshold: f64) -> Vec<bool> {
    let total: f64 = u.values.iter().map(|x| x * x).sum();
    land.enlarged_masks
        .iter()
        .map(|mask| {
            let part: f64 = u.values.iter().zip(mask).filter(|(_, &m)| m).map(|(x, _)| x * x).sum();
            total > 0.0 && part >= threshold * total
        })
        .collect()
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// local problems

fn local_relative_residual(local: &LocalEnergy, u: &Field) -> f64 {
    let g = local.gradient(u);
    let mut lin = vec![0.0; u.values.len()];
    laplacian_into(&local.grid, &local.region, &u.values, &mut lin);
    let mut den = 0.0;
    for k in 0..lin.len() {
        if local.region.active[k] {
            let l = lin[k] + (local.coeff[k] + 1.0) * u.values[k];
            den += l * l;
        }
    }
    let num = l2(&g.values);
    if den == 0.0 {
        num
    } else {
        num / den.sqrt()
    }
}

/// Projected semi-implicit descent on a local energy from `init`.
///
/// `params` only supplies the splitting threshold used by the step.
pub fn solve_local(
    local: &LocalEnergy,
    params: &PenalizationParams,
    init: &Field,
    config: &SolverConfig,
) -> Result<SolveRecord> {
    config.validate()?;
    let grid = local.grid;
    let active = &local.region.active;

    let mut u = init.masked(active);
    if config.positivity {
        u.values.iter_mut().for_each(|x| *x = x.max(0.0));
    }
    local.project(&mut u)?;
    let mut residuals = vec![local_relative_residual(local, &u)];
    let mut energies = vec![local.energy(&u)];
    let mut converged = residuals[0] <= config.tol;
    let mut iterations = 0;
    while !converged && iterations < config.max_iters {
        iterations += 1;
        let mut coeff = vec![0.0; u.values.len()];
        let mut rhs = vec![0.0; u.values.len()];
        for k in 0..coeff.len() {
            if active[k] {
                let x = u.values[k];
                coeff[k] = local.coeff[k] + 1.0 + params.f1_weight(x);
                rhs[k] = x + config.tau * params.df2(x);
            }
        }
        let op = ShiftedLaplacian::new(grid, &local.region, coeff, 1.0, config.tau);
        u.values = pcg(&op, &rhs, Some(&u.values), config.cg_tol, config.cg_max_iters)?.solution;
        if config.positivity {
            u.values.iter_mut().for_each(|x| *x = x.max(0.0));
        }
        local.project(&mut u)?;
        if !u.is_finite() {
            return Err(Error::Divergence(format!("local solve diverged at iteration {iterations}")));
        }
        residuals.push(local_relative_residual(local, &u));
        energies.push(local.energy(&u));
        converged = *residuals.last().unwrap() <= config.tol;
    }
    let energy = *energies.last().unwrap();
    Ok(SolveRecord {
        field: u,
        iterations,
        residual_history: residuals,
        energy_history: energies,
        converged,
        energy,
        bump_mask: Vec::new(),
    })
}

/// Positive bump centered in well `j`, supported in it.
pub fn well_bump(land: &Landscape, j: usize) -> Field {
    let w = land.spec.geometry.wells[j];
    let dim = land.grid.dim;
    let width: Point = [w.half[0].min(3.0) / 3.0, w.half[1].min(3.0) / 3.0];
    Field::from_fn(land.grid, |x| {
        let r2: f64 = (0..dim).map(|k| ((x[k] - w.center[k]) / width[k]).powi(2)).sum();
        (0.5 * dim as f64 - 0.5 * r2).exp()
    })
    .masked(&land.well_masks[j])
}

/// Ground state `ω_j` of `−Δu = u log u²` in `Ω_j` with zero Dirichlet data.
pub fn solve_single_well(
    land: &Landscape,
    j: usize,
    params: &PenalizationParams,
    config: &SolverConfig,
) -> Result<SolveRecord> {
    if j >= land.wells() {
        return Err(Error::invalid("well", format!("well {} does not exist", j + 1)));
    }
    let w = land.spec.geometry.wells[j];
    let h = land.grid.h();
    for k in 0..land.grid.dim {
        let nodes = (2.0 * w.half[k] / h).floor() as usize;
        if nodes < 32 {
            return Err(Error::invalid(
                "n",
                format!("well {} spans {nodes} cells along axis {k}; at least 32 are required", j + 1),
            ));
        }
    }
    let local = LocalEnergy::dirichlet_well(land, j);
    let mut rec = solve_local(&local, params, &well_bump(land, j), config)?;
    rec.bump_mask = occupied_wells(land, &rec.field, config.occupancy);
    Ok(rec)
}

/// Level `c_{λ,j}` of the Neumann problem on `Ω'_j`, started from `init`.
pub fn solve_neumann_well(
    land: &Landscape,
    j: usize,
    lambda: f64,
    params: &PenalizationParams,
    init: &Field,
    config: &SolverConfig,
) -> Result<SolveRecord> {
    let local = LocalEnergy::neumann_enlargement(land, j, lambda);
    let mut rec = solve_local(&local, params, init, config)?;
    rec.bump_mask = occupied_wells(land, &rec.field, config.occupancy);
    Ok(rec)
}

// ---------------------------------------------------------------------------
// penalized problem

/// One semi-implicit step of the penalized flow, without the per-well rescaling.
pub fn flow_step(problem: &Penalized, u: &Field, config: &SolverConfig) -> Result<Field> {
    let grid = *problem.grid();
    let params = &problem.params;
    let mut coeff = vec![0.0; u.values.len()];
    let mut rhs = vec![0.0; u.values.len()];
    for k in 0..coeff.len() {
        let x = u.values[k];
        coeff[k] = problem.confinement[k] + params.f1_weight(x);
        rhs[k] = x + config.tau * params.dg2(problem.masks.enlarged[k], x.max(0.0));
    }
    let op = ShiftedLaplacian::new(grid, &Region::full(&grid), coeff, 1.0, config.tau);
    let mut values = pcg(&op, &rhs, Some(&u.values), config.cg_tol, config.cg_max_iters)?.solution;
    if config.positivity {
        values.iter_mut().for_each(|x| *x = x.max(0.0));
    }
    Ok(Field { grid, values })
}

/// Rescales `u` on `Ω'_j` by the `t` solving `⟨r(u_t), u_t 1_{Ω'_j}⟩ = 0`,
/// where `u_t` is `u` with its `Ω'_j` values multiplied by `t`.
///
/// Returns `None` when the pairing has no positive root (the bump is below
/// the mountain pass and collapses); the field is then left unchanged.
pub fn rescale_well(problem: &Penalized, u: &mut Field, j: usize) -> Option<f64> {
    let grid = *problem.grid();
    let mask = &problem.land.enlarged_masks[j];
    let nodes: Vec<usize> = (0..u.values.len()).filter(|&k| mask[k] && u.values[k] != 0.0).collect();
    if nodes.is_empty() {
        return None;
    }
    let inside = u.masked(mask);
    let outside: Vec<f64> = u.values.iter().zip(mask).map(|(&x, &m)| if m { 0.0 } else { x }).collect();
    let full = Region::full(&grid);
    let mut lap_in = vec![0.0; u.values.len()];
    let mut lap_out = vec![0.0; u.values.len()];
    laplacian_into(&grid, &full, &inside.values, &mut lap_in);
    laplacian_into(&grid, &full, &outside, &mut lap_out);

    let pairing = |t: f64| -> f64 {
        nodes
            .iter()
            .map(|&k| {
                let x = t * u.values[k];
                let r = t * lap_in[k] + lap_out[k] + problem.confinement[k] * x - problem.force(k, x);
                x * r
            })
            .sum::<f64>()
    };

    // the pairing behaves like t²(a − M log t²) + t b: it is eventually
    // negative, and positive between its small-t behaviour and the root.
    let mut hi = 1.0;
    while pairing(hi) >= 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    let mut lo = hi;
    let mut found = false;
    for _ in 0..80 {
        lo *= 0.5;
        if pairing(lo) > 0.0 {
            found = true;
            break;
        }
    }
    if !found {
        // locate the maximum of the pairing below `hi` before giving up
        let (mut a, mut b) = (0.0f64, hi);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if pairing(c) > pairing(d) {
                b = d;
            } else {
                a = c;
            }
        }
        lo = 0.5 * (a + b);
        if !(pairing(lo) > 0.0) {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pairing(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = if pairing(lo).abs() <= pairing(hi).abs() { lo } else { hi };
    for &k in &nodes {
        u.values[k] *= t;
    }
    Some(t)
}

/// Solves the penalized problem `(M_{λ,R})` from `init`.
pub fn solve_auxiliary(problem: &Penalized, init: &Field, config: &SolverConfig) -> Result<SolveRecord> {
    config.validate()?;
    if init.values.len() != problem.grid().len() {
        return Err(Error::Format("initial field does not match the grid".into()));
    }
    let mut u = init.clone();
    if config.positivity {
        u.values.iter_mut().for_each(|x| *x = x.max(0.0));
    }
    let mut residuals = vec![problem.relative_residual(&u)];
    let mut energies = vec![problem.phi(&u)?.total];
    let mut converged = residuals[0] <= config.tol;
    let mut iterations = 0;
    while !converged && iterations < config.max_iters {
        iterations += 1;
        u = flow_step(problem, &u, config)?;
        for &j in &problem.gamma {
            rescale_well(problem, &mut u, j);
        }
        if !u.is_finite() {
            return Err(Error::Divergence(format!("auxiliary solve diverged at iteration {iterations}")));
        }
        residuals.push(problem.relative_residual(&u));
        energies.push(problem.phi(&u)?.total);
        converged = *residuals.last().unwrap() <= config.tol;
    }
    let energy = *energies.last().unwrap();
    Ok(SolveRecord {
        bump_mask: occupied_wells(problem.land, &u, config.occupancy),
        field: u,
        iterations,
        residual_history: residuals,
        energy_history: energies,
        converged,
        energy,
    })
}

// ---------------------------------------------------------------------------
// minimax path

/// `γ0(s)(x) = Σ_{j∈Γ} s_j T ω_j(x)`; `omegas` is indexed by well.
pub fn multi_bump_init(gamma: &[usize], omegas: &[Field], scales: &[f64], t: f64) -> Field {
    assert_eq!(gamma.len(), scales.len(), "one scale per selected well");
    let grid = omegas[gamma[0]].grid;
    let mut out = Field::zeros(grid);
    for (&j, &s) in gamma.iter().zip(scales) {
        for (o, w) in out.values.iter_mut().zip(&omegas[j].values) {
            *o += s * t * w;
        }
    }
    out
}

/// Scale factor for the path and whether the sign conditions hold at it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TChoice {
    pub t: f64,
    pub satisfied: bool,
}

/// Smallest power of two `T ≥ 2` with `I_j'(ω_j/T)(ω_j/T) > 0` and
/// `I_j'(Tω_j)(Tω_j) < 0` for every selected well, searched up to `2^10`.
pub fn choose_t(land: &Landscape, gamma: &[usize], omegas: &[Field]) -> TChoice {
    let ok = |t: f64| {
        gamma.iter().all(|&j| {
            let local = LocalEnergy::dirichlet_well(land, j);
            let scaled = |s: f64| Field { grid: land.grid, values: omegas[j].values.iter().map(|x| s * x).collect() };
            local.constraint(&scaled(1.0 / t)) > 0.0 && local.constraint(&scaled(t)) < 0.0
        })
    };
    let mut t = 2.0;
    while t <= 1024.0 {
        if ok(t) {
            return TChoice { t, satisfied: true };
        }
        t *= 2.0;
    }
    TChoice { t: 1024.0, satisfied: false }
}

/// `max Φ_{λ,R}(γ0(s))` over an `m^|Γ|` grid of `[1/T², 1]^|Γ|`; an upper
/// bound for the minimax level up to the grid resolution.
pub fn minimax_b_upper(problem: &Penalized, omegas: &[Field], t: f64, m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::invalid("m", "path grid needs at least 2 points per axis"));
    }
    let dims = problem.gamma.len();
    let lo = 1.0 / (t * t);
    let axis: Vec<f64> = (0..m).map(|i| lo + (1.0 - lo) * i as f64 / (m - 1) as f64).collect();
    let mut best = f64::NEG_INFINITY;
    let mut idx = vec![0usize; dims];
    loop {
        let scales: Vec<f64> = idx.iter().map(|&i| axis[i]).collect();
        let field = multi_bump_init(&problem.gamma, omegas, &scales, t);
        best = best.max(problem.phi(&field)?.total);
        let mut d = 0;
        while d < dims {
            idx[d] += 1;
            if idx[d] < m {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == dims {
            break;
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// continuation in λ

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub lambda: f64,
    pub record: SolveRecord,
    pub report: EnergyReport,
}

/// Warm-started continuation: the solution at each `λ` seeds the next.
pub fn lambda_sweep(
    land: &Landscape,
    params: PenalizationParams,
    gamma: &[usize],
    lambdas: &[f64],
    init: &Field,
    config: &SolverConfig,
) -> Result<Vec<SweepPoint>> {
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("lambdas", "lambda values must be strictly ascending"));
    }
    let mut seed = init.clone();
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let problem = Penalized::new(land, params, lambda, gamma)?;
        let record = solve_auxiliary(&problem, &seed, config)?;
        let report = problem.phi(&record.field)?;
        seed = record.field.clone();
        out.push(SweepPoint { lambda, record, report });
    }
    Ok(out)
}
