//! The penalized energy `Φ_{λ,R}`, its gradient, and the local well energies.
//!
//! All quantities share one discretization: kinetic energy is
//! `½ ⟨−Δ_h u, u⟩ h^dim` and every integral is the `h^dim`-weighted nodal sum.
//! With these conventions the nodal residual times `h^dim` is the exact
//! gradient of the discrete energy.

use crate::domain::{
    laplacian_into, masks, nodal_gradient_sq, Field, Grid, PotentialSpec, Region, RegionMasks,
};
use crate::error::{Error, Result};
use crate::penalty::{s2_log_s2, PenalizationParams};

/// Immutable per-grid data shared by every evaluation: potential samples and
/// the strict-interior masks of each `Ω_j` and `Ω'_j`.
#[derive(Debug, Clone)]
pub struct Landscape {
    pub grid: Grid,
    pub spec: PotentialSpec,
    pub potential: Vec<f64>,
    pub well_masks: Vec<Vec<bool>>,
    pub enlarged_masks: Vec<Vec<bool>>,
}

impl Landscape {
    pub fn new(grid: Grid, spec: PotentialSpec) -> Result<Self> {
        spec.geometry.validate_on(&grid)?;
        let potential = spec.nodal(&grid);
        let well_masks = spec.geometry.wells.iter().map(|w| grid.mask_of(w)).collect();
        let enlarged_masks = spec.geometry.enlargements.iter().map(|w| grid.mask_of(w)).collect();
        Ok(Self { grid, spec, potential, well_masks, enlarged_masks })
    }

    pub fn wells(&self) -> usize {
        self.well_masks.len()
    }
}

/// Breakdown of `Φ_{λ,R}(u)` and localization diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub total: f64,
    /// `½ ∫ |∇u|²`
    pub kinetic: f64,
    /// `½ ∫ (λV + 1) u²`
    pub mass: f64,
    pub f1_term: f64,
    pub g2_term: f64,
    /// `I_{λ,j}(u)` for every well, selected or not.
    pub per_well: Vec<f64>,
    /// `λ ∫ V u²`
    pub lambda_v_mass: f64,
    /// `‖u‖²_{λ, box∖Ω_Γ}`
    pub outside_norm_sq: f64,
    /// `max |u|` over `box∖Ω'_Γ`
    pub sup_outside: f64,
    /// `∫ u² log u²`, kept for the logarithmic-inequality diagnostic.
    pub log_moment: f64,
    /// `‖u‖²_{λ,R}`
    pub norm_sq: f64,
}

impl EnergyReport {
    /// Column names in emission order; `i_lambda_*` expands to one column per well.
    pub fn csv_header(wells: usize) -> String {
        let mut cols = vec![
            "phi_total".to_string(),
            "kinetic".into(),
            "mass".into(),
            "f1_term".into(),
            "g2_term".into(),
        ];
        cols.extend((1..=wells).map(|j| format!("i_lambda_{j}")));
        cols.extend(
            ["lambda_v_mass", "outside_norm_sq", "sup_outside", "log_moment", "norm_sq"].map(String::from),
        );
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut vals = vec![self.total, self.kinetic, self.mass, self.f1_term, self.g2_term];
        vals.extend(&self.per_well);
        vals.extend([self.lambda_v_mass, self.outside_norm_sq, self.sup_outside, self.log_moment, self.norm_sq]);
        vals.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
    }
}

/// `Φ_{λ,R}` for a fixed `λ` and selection `Γ` (zero-based well indices).
#[derive(Debug, Clone)]
pub struct Penalized<'a> {
    pub land: &'a Landscape,
    pub params: PenalizationParams,
    pub lambda: f64,
    pub gamma: Vec<usize>,
    pub masks: RegionMasks,
    /// `λ V + 1` at each node.
    pub confinement: Vec<f64>,
    /// `I_{λ,j}` for every well.
    pub locals: Vec<LocalEnergy>,
}

impl<'a> Penalized<'a> {
    pub fn new(land: &'a Landscape, params: PenalizationParams, lambda: f64, gamma: &[usize]) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda", format!("lambda = {lambda} must be positive")));
        }
        let mut gamma = gamma.to_vec();
        gamma.sort_unstable();
        gamma.dedup();
        let masks = masks(&land.spec.geometry, &land.grid, &gamma)?;
        let confinement = land.potential.iter().map(|v| lambda * v + 1.0).collect();
        let locals = (0..land.wells()).map(|j| LocalEnergy::neumann_enlargement(land, j, lambda)).collect();
        Ok(Self { land, params, lambda, gamma, masks, confinement, locals })
    }

    pub fn grid(&self) -> &Grid {
        &self.land.grid
    }

    /// Nonlinear force `G2'(x, u⁺) − F1'(u)` at node `k`.
    #[inline]
    pub fn force(&self, k: usize, u: f64) -> f64 {
        self.params.dg2(self.masks.enlarged[k], u.max(0.0)) - self.params.df1(u)
    }

    pub fn phi(&self, u: &Field) -> Result<EnergyReport> {
        if !u.is_finite() {
            return Err(Error::Divergence("field contains non-finite values".into()));
        }
        let grid = self.grid();
        let vol = grid.cell_volume();
        let len = u.values.len();
        let mut lap = vec![0.0; len];
        laplacian_into(grid, &Region::full(grid), &u.values, &mut lap);

        let mut kinetic = 0.0;
        let mut mass = 0.0;
        let mut f1_term = 0.0;
        let mut g2_term = 0.0;
        let mut lambda_v_mass = 0.0;
        let mut log_moment = 0.0;
        let mut sup_outside: f64 = 0.0;
        for k in 0..len {
            let x = u.values[k];
            kinetic += lap[k] * x;
            mass += self.confinement[k] * x * x;
            f1_term += self.params.f1(x);
            g2_term += self.params.g2(self.masks.enlarged[k], x.max(0.0));
            lambda_v_mass += self.lambda * self.land.potential[k] * x * x;
            log_moment += s2_log_s2(x);
            if self.masks.outside[k] {
                sup_outside = sup_outside.max(x.abs());
            }
        }
        let kinetic = 0.5 * kinetic * vol;
        let mass = 0.5 * mass * vol;
        let f1_term = f1_term * vol;
        let g2_term = g2_term * vol;
        let total = kinetic + mass + f1_term - g2_term;

        let grad = nodal_gradient_sq(grid, &u.values);
        let mut outside_norm_sq = 0.0;
        let mut norm_sq = 0.0;
        for k in 0..len {
            let e = grad[k] + self.confinement[k] * u.values[k] * u.values[k];
            norm_sq += e;
            if !self.masks.wells[k] {
                outside_norm_sq += e;
            }
        }
        let per_well = self.locals.iter().map(|local| local.energy(u)).collect();
        let report = EnergyReport {
            total,
            kinetic,
            mass,
            f1_term,
            g2_term,
            per_well,
            lambda_v_mass: lambda_v_mass * vol,
            outside_norm_sq: outside_norm_sq * vol,
            sup_outside,
            log_moment: log_moment * vol,
            norm_sq: norm_sq * vol,
        };
        if !report.total.is_finite() {
            return Err(Error::Divergence("energy is not finite".into()));
        }
        Ok(report)
    }

    /// Nodal residual `−Δ_h u + (λV+1)u + F1'(u) − G2'(x, u⁺)`.
    pub fn residual(&self, u: &Field) -> Field {
        let grid = self.grid();
        let mut out = vec![0.0; u.values.len()];
        laplacian_into(grid, &Region::full(grid), &u.values, &mut out);
        for (k, r) in out.iter_mut().enumerate() {
            let x = u.values[k];
            *r += self.confinement[k] * x - self.force(k, x);
        }
        Field { grid: *grid, values: out }
    }

    /// `‖residual‖ / ‖(−Δ_h + λV + 1) u‖`, both in discrete `L²`.
    pub fn relative_residual(&self, u: &Field) -> f64 {
        let r = self.residual(u);
        let grid = self.grid();
        let mut lin = vec![0.0; u.values.len()];
        laplacian_into(grid, &Region::full(grid), &u.values, &mut lin);
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..lin.len() {
            let l = lin[k] + self.confinement[k] * u.values[k];
            num += r.values[k] * r.values[k];
            den += l * l;
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}

/// Energy of a local problem on one region.
///
/// With `Dirichlet` boundary this is `I_j` on `Ω_j` (values outside are
/// taken as zero); with `Neumann` it is `I_{λ,j}` on `Ω'_j` with edges
/// leaving the region dropped.
#[derive(Debug, Clone)]
pub struct LocalEnergy {
    pub grid: Grid,
    pub region: Region,
    /// `λV` on active nodes, zero elsewhere.
    pub coeff: Vec<f64>,
}

/// Energy and the Nehari identity value of a field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NehariEnergy {
    pub energy: f64,
    /// `½ ∫ u²`, which equals `energy` on the Nehari manifold.
    pub half_mass: f64,
    /// `I'(u)u`
    pub constraint: f64,
    pub consistent: bool,
}

pub const NEHARI_TOLERANCE: f64 = 1e-8;

impl LocalEnergy {
    pub fn dirichlet_well(land: &Landscape, j: usize) -> Self {
        let grid = land.grid;
        Self { grid, region: Region::dirichlet(land.well_masks[j].clone()), coeff: vec![0.0; grid.len()] }
    }

    pub fn neumann_enlargement(land: &Landscape, j: usize, lambda: f64) -> Self {
        let active = land.enlarged_masks[j].clone();
        let coeff = active
            .iter()
            .zip(&land.potential)
            .map(|(&a, &v)| if a { lambda * v } else { 0.0 })
            .collect();
        Self { grid: land.grid, region: Region::neumann(active), coeff }
    }

    /// `(∫|∇u|², ∫ λV u², ∫ u², ∫ u² log u²)` over the region.
    fn moments(&self, u: &[f64]) -> [f64; 4] {
        let mut lap = vec![0.0; u.len()];
        laplacian_into(&self.grid, &self.region, u, &mut lap);
        let mut m = [0.0; 4];
        for k in 0..u.len() {
            if self.region.active[k] {
                let x = u[k];
                m[0] += lap[k] * x;
                m[1] += self.coeff[k] * x * x;
                m[2] += x * x;
                m[3] += s2_log_s2(x);
            }
        }
        m.map(|v| v * self.grid.cell_volume())
    }

    pub fn energy(&self, u: &Field) -> f64 {
        let [grad, pot, mass, log] = self.moments(&u.values);
        0.5 * (grad + pot + mass) - 0.5 * log
    }

    /// `I'(u)u = ∫|∇u|² + ∫λV u² − ∫u² log u²`.
    pub fn constraint(&self, u: &Field) -> f64 {
        let [grad, pot, _, log] = self.moments(&u.values);
        grad + pot - log
    }

    /// Nodal gradient `−Δu + λV u − u log u²` on active nodes.
    pub fn gradient(&self, u: &Field) -> Field {
        let mut out = vec![0.0; u.values.len()];
        laplacian_into(&self.grid, &self.region, &u.values, &mut out);
        for k in 0..out.len() {
            if self.region.active[k] {
                let x = u.values[k];
                let log = if x.abs() < 1e-150 { 0.0 } else { x * (x * x).ln() };
                out[k] += self.coeff[k] * x - log;
            }
        }
        Field { grid: self.grid, values: out }
    }

    /// Scaling `t*` with `I'(t*u)(t*u) = 0`.
    ///
    /// From `I'(tu)(tu) = t² (I'(u)u − log t² ∫u²)` the root is
    /// `log t*² = I'(u)u / ∫u²`.
    pub fn nehari_time(&self, u: &Field) -> Result<f64> {
        if u
            .values
            .iter()
            .zip(&self.region.active)
            .any(|(&x, &a)| !a && x != 0.0)
        {
            return Err(Error::NotSupportedInRegion);
        }
        let [grad, pot, mass, log] = self.moments(&u.values);
        if !(mass > 0.0) {
            return Err(Error::ZeroMass);
        }
        let t = (0.5 * (grad + pot - log) / mass).exp();
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::Divergence(format!("Nehari scaling {t}")));
        }
        Ok(t)
    }

    /// Rescales `u` onto the Nehari manifold, returning the scaling used.
    pub fn project(&self, u: &mut Field) -> Result<f64> {
        let t = self.nehari_time(u)?;
        u.values.iter_mut().for_each(|x| *x *= t);
        Ok(t)
    }

    pub fn nehari_energy(&self, u: &Field) -> NehariEnergy {
        let [grad, pot, mass, log] = self.moments(&u.values);
        let energy = 0.5 * (grad + pot + mass) - 0.5 * log;
        let half_mass = 0.5 * mass;
        let consistent = (energy - half_mass).abs() <= NEHARI_TOLERANCE * energy.abs();
        NehariEnergy { energy, half_mass, constraint: grad + pot - log, consistent }
    }
}

/// Least-squares fit of `∫u² log u² ≈ A + B log ‖u‖` over recorded pairs.
///
/// Returns `(A, B)`; this is a measurement, not a verified inequality.
pub fn fit_log_envelope(samples: &[(f64, f64)]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = samples.iter().filter(|(n, _)| *n > 0.0).map(|&(n, m)| (n.ln(), m)).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    // shift A so the envelope sits above every sample
    let a = pts.iter().map(|p| p.1 - b * p.0).fold(f64::NEG_INFINITY, f64::max);
    Some((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AxisBox, WellGeometry};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn land(n: usize) -> Landscape {
        let wells = vec![AxisBox::new([-5.0, 0.0], [3.0, 0.0]), AxisBox::new([5.0, 0.0], [3.0, 0.0])];
        let geo = WellGeometry::with_margin(1, wells, 1.0).unwrap();
        Landscape::new(Grid::new(1, n, 12.0).unwrap(), PotentialSpec::new(geo, 1.0).unwrap()).unwrap()
    }

    fn gausson_at(grid: Grid, c: f64) -> Field {
        Field::from_fn(grid, |x| (0.5 - 0.5 * (x[0] - c).powi(2)).exp())
    }

    /// Smooth bump supported strictly inside `(c - w, c + w)`.
    fn bump(grid: Grid, c: f64, w: f64) -> Field {
        Field::from_fn(grid, |x| {
            let s = (x[0] - c) / w;
            if s.abs() < 1.0 { 1.3 * (1.0 - s * s).powi(3) } else { 0.0 }
        })
    }

    #[test]
    fn phi_of_zero() {
        let l = land(241);
        let p = Penalized::new(&l, PenalizationParams::with_defaults(1), 10.0, &[0]).unwrap();
        let r = p.phi(&Field::zeros(l.grid)).unwrap();
        assert_eq!(r.total, 0.0);
        assert!(p.residual(&Field::zeros(l.grid)).values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn phi_collapses_to_log_form_inside_wells() {
        let l = land(481);
        let params = PenalizationParams::with_defaults(1);
        let u = bump(l.grid, -5.0, 2.5);
        let p = Penalized::new(&l, params, 10.0, &[0]).unwrap();
        let r = p.phi(&u).unwrap();
        let vol = l.grid.cell_volume();
        let mut lap = vec![0.0; u.values.len()];
        laplacian_into(&l.grid, &Region::full(&l.grid), &u.values, &mut lap);
        let grad: f64 = lap.iter().zip(&u.values).map(|(a, b)| a * b).sum::<f64>() * vol;
        let mass: f64 = u.values.iter().map(|x| x * x).sum::<f64>() * vol;
        let log: f64 = u.values.iter().map(|&x| s2_log_s2(x)).sum::<f64>() * vol;
        let expected = 0.5 * (grad + mass) - 0.5 * log;
        assert!((r.total - expected).abs() < 1e-12 * expected.abs());
        assert!((r.total - (r.kinetic + r.mass + r.f1_term - r.g2_term)).abs() < 1e-10);
        let q = Penalized::new(&l, params, 1e4, &[0]).unwrap();
        assert!((q.phi(&u).unwrap().total - r.total).abs() < 1e-12 * r.total.abs());
    }

    #[test]
    fn residual_is_gradient_of_phi() {
        let l = land(121);
        let params = PenalizationParams::with_defaults(1);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for &lambda in &[1.0, 100.0] {
            let p = Penalized::new(&l, params, lambda, &[1]).unwrap();
            for _ in 0..5 {
                let u = Field::from_fn(l.grid, |_| rng.gen_range(0.05..1.6));
                let v = Field::from_fn(l.grid, |_| rng.gen_range(-1.0..1.0));
                let r = p.residual(&u);
                let dd: f64 =
                    r.values.iter().zip(&v.values).map(|(a, b)| a * b).sum::<f64>() * l.grid.cell_volume();
                let eps = 1e-5;
                let shift = |s: f64| Field {
                    grid: l.grid,
                    values: u.values.iter().zip(&v.values).map(|(a, b)| a + s * b).collect(),
                };
                let fd = (p.phi(&shift(eps)).unwrap().total - p.phi(&shift(-eps)).unwrap().total) / (2.0 * eps);
                assert!((dd - fd).abs() < 1e-6 * dd.abs().max(1.0), "{dd} vs {fd}");
            }
        }
    }

    #[test]
    fn gausson_residual_is_second_order_inside_a_well() {
        let params = PenalizationParams::with_defaults(1);
        let mut norms = Vec::new();
        for n in [241, 481, 961] {
            let l = land(n);
            let p = Penalized::new(&l, params, 37.0, &[0]).unwrap();
            let u = gausson_at(l.grid, -5.0).masked(&l.enlarged_masks[0]);
            let r = p.residual(&u);
            let interior: f64 = (0..r.values.len())
                .filter(|&k| (l.grid.coord(k)[0] + 5.0).abs() < 2.0)
                .map(|k| r.values[k].powi(2))
                .sum::<f64>()
                * l.grid.h();
            norms.push(interior.sqrt());
        }
        for w in norms.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.6..4.4).contains(&ratio), "{ratio}");
        }
    }

    #[test]
    fn nehari_time_cases() {
        let l = land(481);
        let local = LocalEnergy::dirichlet_well(&l, 0);
        let mut u = bump(l.grid, -5.0, 2.0);
        let t = local.project(&mut u).unwrap();
        assert!(t > 0.0);
        assert!((local.nehari_time(&u).unwrap() - 1.0).abs() < 1e-12);
        assert!(local.constraint(&u).abs() < 1e-10);
        for c in [0.5, 2.0] {
            let mut v = u.clone();
            v.values.iter_mut().for_each(|x| *x *= c);
            assert!((local.nehari_time(&v).unwrap() - 1.0 / c).abs() < 1e-12);
        }
        // bisection oracle on s ↦ I'(su)(su)
        let w = bump(l.grid, -5.0, 1.5);
        let f = |s: f64| {
            let mut sw = w.clone();
            sw.values.iter_mut().for_each(|x| *x *= s);
            local.constraint(&sw)
        };
        let (mut lo, mut hi) = (1e-3, 1e3);
        assert!(f(lo) > 0.0 && f(hi) < 0.0);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((local.nehari_time(&w).unwrap() - lo).abs() < 1e-8);

        assert!(matches!(local.nehari_time(&Field::zeros(l.grid)), Err(Error::ZeroMass)));
        let outside = bump(l.grid, 5.0, 2.0);
        assert!(matches!(local.nehari_time(&outside), Err(Error::NotSupportedInRegion)));
    }

    #[test]
    fn nehari_energy_identity() {
        let l = land(481);
        let local = LocalEnergy::dirichlet_well(&l, 1);
        let mut u = bump(l.grid, 5.0, 2.7);
        local.project(&mut u).unwrap();
        let e = local.nehari_energy(&u);
        assert!(e.consistent);
        assert!((e.energy - e.half_mass).abs() < 1e-8 * e.energy);
        let mut small = u.clone();
        small.values.iter_mut().for_each(|x| *x *= 0.1);
        assert!(!local.nehari_energy(&small).consistent);
    }

    #[test]
    fn gausson_energies_in_a_wide_well() {
        let wells = vec![AxisBox::new([0.0, 0.0], [8.0, 0.0])];
        let geo = WellGeometry::with_margin(1, wells, 1.0).unwrap();
        let l = Landscape::new(Grid::new(1, 2001, 10.0).unwrap(), PotentialSpec::new(geo, 1.0).unwrap()).unwrap();
        let local = LocalEnergy::dirichlet_well(&l, 0);
        let u = gausson_at(l.grid, 0.0).masked(&l.well_masks[0]);
        let half = 0.5 * std::f64::consts::E * std::f64::consts::PI.sqrt();
        let e = local.nehari_energy(&u);
        assert!((e.half_mass - half).abs() < 1e-8);
        assert!((e.energy - half).abs() < 1e-4);
        // I_{λ,j} agrees with I_j for fields supported in Ω_j
        let neu = LocalEnergy::neumann_enlargement(&l, 0, 500.0);
        assert!((neu.energy(&u) - local.energy(&u)).abs() < 1e-12);
    }

    #[test]
    fn local_gradient_matches_differences() {
        let l = land(241);
        let local = LocalEnergy::neumann_enlargement(&l, 0, 30.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = Field::from_fn(l.grid, |_| rng.gen_range(0.1..1.5)).masked(&l.enlarged_masks[0]);
        let v = Field::from_fn(l.grid, |_| rng.gen_range(-1.0..1.0)).masked(&l.enlarged_masks[0]);
        let g = local.gradient(&u);
        let dd: f64 = g.values.iter().zip(&v.values).map(|(a, b)| a * b).sum::<f64>() * l.grid.cell_volume();
        let eps = 1e-5;
        let shift = |s: f64| Field { grid: l.grid, values: u.values.iter().zip(&v.values).map(|(a, b)| a + s * b).collect() };
        let fd = (local.energy(&shift(eps)) - local.energy(&shift(-eps))) / (2.0 * eps);
        assert!((dd - fd).abs() < 1e-6 * dd.abs().max(1.0));
    }

    #[test]
    fn scaling_identity() {
        let l = land(481);
        let params = PenalizationParams::with_defaults(1);
        let p = Penalized::new(&l, params, 123.0, &[0, 1]).unwrap();
        let v = Field {
            grid: l.grid,
            values: bump(l.grid, -5.0, 2.5).values.iter().zip(&bump(l.grid, 5.0, 1.5).values).map(|(a, b)| a + 0.7 * b).collect(),
        };
        let pv = p.phi(&v).unwrap().total;
        let mass: f64 = v.values.iter().map(|x| x * x).sum::<f64>() * l.grid.cell_volume();
        for s in [0.5, 1.0, 2.0] {
            let sv = Field { grid: l.grid, values: v.values.iter().map(|x| s * x).collect() };
            let lhs = p.phi(&sv).unwrap().total;
            let rhs = s * s * (pv - s.ln() * mass);
            assert!((lhs - rhs).abs() < 1e-8 * (1.0 + pv.abs()));
        }
        // Φ(s v) eventually negative
        let mut s = 1.0;
        while p.phi(&Field { grid: l.grid, values: v.values.iter().map(|x| s * x).collect() }).unwrap().total >= 0.0 {
            s *= 2.0;
            assert!(s < 1e6);
        }
    }

    #[test]
    fn mountain_pass_sphere() {
        let l = land(241);
        let params = PenalizationParams::with_defaults(1);
        let p = Penalized::new(&l, params, 10.0, &[0, 1]).unwrap();
        let full = vec![true; l.grid.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = 1e-3;
        for _ in 0..20 {
            let mut u = Field::from_fn(l.grid, |_| rng.gen_range(-1.0..1.0));
            let nrm = crate::domain::restricted_norm_sq(&u, &full, 10.0, &l.potential).sqrt();
            u.values.iter_mut().for_each(|x| *x *= rho / nrm);
            let phi = p.phi(&u).unwrap().total;
            assert!(phi >= 0.5 * rho * rho * (1.0 - 1e-9), "{phi}");
        }
    }

    #[test]
    fn envelope_fit_dominates_samples() {
        let samples = [(1.0, -0.5), (2.0, 0.3), (4.0, 1.4), (8.0, 2.2)];
        let (a, b) = fit_log_envelope(&samples).unwrap();
        for (n, m) in samples {
            assert!(m <= a + b * f64::ln(n) + 1e-12);
        }
        assert!(fit_log_envelope(&[(1.0, 0.0)]).is_none());
    }
}
