//! Wells, the potential, and the uniform finite-difference grid on `[-R, R]^dim`.
//!
//! Fields live on interior nodes only; boundary nodes carry the homogeneous
//! Dirichlet value and are never stored. Interior node `k` of a 2D grid has
//! axis indices `(k % m, k / m)` with `m = n - 2`.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};


use crate::error::{Error, Result};

/// A point in `R^dim`; the second coordinate is unused when `dim = 1`.
pub type Point = [f64; 2];

/// Axis-aligned box given by its center and half-widths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisBox {
    pub center: Point,
    pub half: Point,
}

impl AxisBox {
    pub fn new(center: Point, half: Point) -> Self {
        Self { center, half }
    }

    pub fn contains_strict(&self, x: &Point, dim: usize) -> bool {
        (0..dim).all(|k| (x[k] - self.center[k]).abs() < self.half[k])
    }

    pub fn contains_closed(&self, x: &Point, dim: usize) -> bool {
        (0..dim).all(|k| (x[k] - self.center[k]).abs() <= self.half[k])
    }

    /// Euclidean distance from `x` to the closed box.
    pub fn distance(&self, x: &Point, dim: usize) -> f64 {
        (0..dim)
            .map(|k| {
                let e = ((x[k] - self.center[k]).abs() - self.half[k]).max(0.0);
                e * e
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn grown(&self, margin: f64) -> Self {
        Self { center: self.center, half: [self.half[0] + margin, self.half[1] + margin] }
    }

    fn closures_disjoint(&self, other: &AxisBox, dim: usize) -> bool {
        (0..dim).any(|k| (self.center[k] - other.center[k]).abs() > self.half[k] + other.half[k])
    }
}

/// Wells `Ω_j` and their enlargements `Ω'_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WellGeometry {
    pub dim: usize,
    pub wells: Vec<AxisBox>,
    pub enlargements: Vec<AxisBox>,
}

impl WellGeometry {
    pub fn new(dim: usize, wells: Vec<AxisBox>, enlargements: Vec<AxisBox>) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::invalid("dim", format!("dim = {dim}; only 1 and 2 are supported")));
        }
        if wells.is_empty() {
            return Err(Error::Geometry("at least one well is required".into()));
        }
        if wells.len() != enlargements.len() {
            return Err(Error::Geometry("each well needs exactly one enlargement".into()));
        }
        for (j, (w, e)) in wells.iter().zip(&enlargements).enumerate() {
            for k in 0..dim {
                if !(w.half[k] > 0.0 && w.half[k].is_finite()) {
                    return Err(Error::Geometry(format!("well {} has a non-positive half-width", j + 1)));
                }
                let inner_gap = e.half[k] - (w.center[k] - e.center[k]).abs() - w.half[k];
                if !(inner_gap > 0.0) {
                    return Err(Error::Geometry(format!(
                        "closure of well {} is not inside its enlargement",
                        j + 1
                    )));
                }
            }
        }
        for i in 0..enlargements.len() {
            for j in i + 1..enlargements.len() {
                if !enlargements[i].closures_disjoint(&enlargements[j], dim) {
                    return Err(Error::Geometry(format!(
                        "enlargements of wells {} and {} overlap",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { dim, wells, enlargements })
    }

    /// Wells grown by a uniform `margin` on every side.
    pub fn with_margin(dim: usize, wells: Vec<AxisBox>, margin: f64) -> Result<Self> {
        let enlargements = wells.iter().map(|w| w.grown(margin)).collect();
        Self::new(dim, wells, enlargements)
    }

    pub fn len(&self) -> usize {
        self.wells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wells.is_empty()
    }

    /// Checks the grid-dependent constraints: enlargements strictly inside the
    /// box and at least two cells between `∂Ω_j` and `∂Ω'_j`.
    pub fn validate_on(&self, grid: &Grid) -> Result<()> {
        if grid.dim != self.dim {
            return Err(Error::Geometry(format!(
                "grid dimension {} differs from geometry dimension {}",
                grid.dim, self.dim
            )));
        }
        let r = grid.half_width;
        let h = grid.h();
        for (j, (w, e)) in self.wells.iter().zip(&self.enlargements).enumerate() {
            for k in 0..self.dim {
                if (e.center[k].abs() + e.half[k]) >= r {
                    return Err(Error::Geometry(format!(
                        "enlargement of well {} touches the box boundary (R = {r})",
                        j + 1
                    )));
                }
                let gap = e.half[k] - (w.center[k] - e.center[k]).abs() - w.half[k];
                if gap < 2.0 * h * (1.0 - 1e-12) {
                    return Err(Error::Geometry(format!(
                        "well {} has margin {gap} < two grid cells ({})",
                        j + 1,
                        2.0 * h
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `V(x) = min(cap, dist(x, Ω̄)²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub geometry: WellGeometry,
    pub cap: f64,
}

impl PotentialSpec {
    pub fn new(geometry: WellGeometry, cap: f64) -> Result<Self> {
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(Error::invalid("cap", format!("cap = {cap} must be positive")));
        }
        Ok(Self { geometry, cap })
    }

    pub fn eval(&self, x: &Point) -> f64 {
        let dim = self.geometry.dim;
        let d = self
            .geometry
            .wells
            .iter()
            .map(|w| w.distance(x, dim))
            .fold(f64::INFINITY, f64::min);
        (d * d).min(self.cap)
    }

    /// Potential sampled at every interior node.
    pub fn nodal(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len()).map(|k| self.eval(&grid.coord(k))).collect()
    }
}

/// Uniform grid with `n` nodes per axis on `[-R, R]^dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub n: usize,
    pub half_width: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, half_width: f64) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::invalid("dim", format!("dim = {dim}; only 1 and 2 are supported")));
        }
        if n < 3 {
            return Err(Error::invalid("n", format!("n = {n}; at least 3 nodes per axis")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::invalid("R", format!("R = {half_width} must be positive")));
        }
        Ok(Self { dim, n, half_width })
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    /// Interior nodes per axis.
    pub fn m(&self) -> usize {
        self.n - 2
    }

    /// Number of interior nodes.
    pub fn len(&self) -> usize {
        self.m().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.half_width + (i + 1) as f64 * self.h()
    }

    pub fn axes(&self, k: usize) -> [usize; 2] {
        let m = self.m();
        if self.dim == 1 {
            [k, 0]
        } else {
            [k % m, k / m]
        }
    }

    pub fn coord(&self, k: usize) -> Point {
        let [i, j] = self.axes(k);
        if self.dim == 1 {
            [self.axis_coord(i), 0.0]
        } else {
            [self.axis_coord(i), self.axis_coord(j)]
        }
    }

    /// Neighbor of node `k` one step along `axis` in direction `sign`, if interior.
    #[inline]
    pub fn neighbor(&self, k: usize, axis: usize, forward: bool) -> Option<usize> {
        let m = self.m();
        let stride = if axis == 0 { 1 } else { m };
        let pos = if axis == 0 { k % m } else { k / m };
        if forward {
            (pos + 1 < m).then(|| k + stride)
        } else {
            (pos > 0).then(|| k - stride)
        }
    }

    pub fn mask_of(&self, region: &AxisBox) -> Vec<bool> {
        (0..self.len()).map(|k| region.contains_strict(&self.coord(k), self.dim)).collect()
    }
}

/// Nodal values on the interior of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(&Point) -> f64) -> Self {
        Self { grid, values: (0..grid.len()).map(|k| f(&grid.coord(k))).collect() }
    }

    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Format(format!(
                "field has {} values, grid has {} interior nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn masked(&self, mask: &[bool]) -> Self {
        let values = self.values.iter().zip(mask).map(|(&v, &m)| if m { v } else { 0.0 }).collect();
        Self { grid: self.grid, values }
    }

    /// Writes the header line `dim,n,R,h` and one value per line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let g = &self.grid;
        writeln!(w, "dim,n,R,h")?;
        writeln!(w, "{},{},{:?},{:?}", g.dim, g.n, g.half_width, g.h())?;
        let mut buf = String::with_capacity(self.values.len() * 24);
        for v in &self.values {
            writeln!(buf, "{v:?}").expect("writing to a String");
        }
        w.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let mut next = |what: &str| -> Result<String> {
            lines.next().ok_or_else(|| Error::Format(format!("field dump truncated before {what}")))?.map_err(Error::from)
        };
        if next("header")?.trim() != "dim,n,R,h" {
            return Err(Error::Format("field dump header must be `dim,n,R,h`".into()));
        }
        let meta = next("metadata")?;
        let parts: Vec<&str> = meta.trim().split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Format(format!("bad metadata line `{meta}`")));
        }
        let bad = |s: &str| Error::Format(format!("cannot parse `{s}`"));
        let dim: usize = parts[0].parse().map_err(|_| bad(parts[0]))?;
        let n: usize = parts[1].parse().map_err(|_| bad(parts[1]))?;
        let r: f64 = parts[2].parse().map_err(|_| bad(parts[2]))?;
        let h: f64 = parts[3].parse().map_err(|_| bad(parts[3]))?;
        let grid = Grid::new(dim, n, r)?;
        if grid.h() != h {
            return Err(Error::Format(format!("spacing {h} inconsistent with n = {n}, R = {r}")));
        }
        let mut values = Vec::with_capacity(grid.len());
        for line in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            values.push(t.parse::<f64>().map_err(|_| bad(t))?);
        }
        Field::new(grid, values)
    }
}

/// Node masks for a selection `Γ` of wells.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMasks {
    /// Nodes strictly inside some `Ω_j`, `j ∈ Γ`.
    pub wells: Vec<bool>,
    /// Nodes strictly inside some `Ω'_j`, `j ∈ Γ`; this is `χ_Γ`.
    pub enlarged: Vec<bool>,
    /// Complement of `enlarged`.
    pub outside: Vec<bool>,
}

/// Builds the `Ω_Γ`, `Ω'_Γ` and complement masks. Well indices are zero-based.
pub fn masks(geometry: &WellGeometry, grid: &Grid, gamma: &[usize]) -> Result<RegionMasks> {
    if gamma.is_empty() {
        return Err(Error::invalid("gamma", "gamma must select at least one well"));
    }
    if let Some(&j) = gamma.iter().find(|&&j| j >= geometry.len()) {
        return Err(Error::invalid("gamma", format!("well {} does not exist", j + 1)));
    }
    let len = grid.len();
    let mut wells = vec![false; len];
    let mut enlarged = vec![false; len];
    for k in 0..len {
        let x = grid.coord(k);
        for &j in gamma {
            wells[k] |= geometry.wells[j].contains_strict(&x, grid.dim);
            enlarged[k] |= geometry.enlargements[j].contains_strict(&x, grid.dim);
        }
    }
    let outside = enlarged.iter().map(|&e| !e).collect();
    Ok(RegionMasks { wells, enlarged, outside })
}

/// How a region treats edges leaving it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Values outside the region are zero; edges to them contribute.
    Dirichlet,
    /// Edges leaving the region are dropped (natural boundary condition).
    Neumann,
}

/// A set of active nodes with a boundary treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub active: Vec<bool>,
    pub boundary: Boundary,
}

impl Region {
    pub fn full(grid: &Grid) -> Self {
        Self { active: vec![true; grid.len()], boundary: Boundary::Dirichlet }
    }

    pub fn dirichlet(active: Vec<bool>) -> Self {
        Self { active, boundary: Boundary::Dirichlet }
    }

    pub fn neumann(active: Vec<bool>) -> Self {
        Self { active, boundary: Boundary::Neumann }
    }

    pub fn node_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// `-Δ_h u` on the whole box with homogeneous Dirichlet data.
pub fn apply_laplacian(u: &Field) -> Field {
    let mut out = vec![0.0; u.values.len()];
    laplacian_into(&u.grid, &Region::full(&u.grid), &u.values, &mut out);
    Field { grid: u.grid, values: out }
}

/// `-Δ_h u` restricted to a region; inactive entries of `out` are set to zero.
pub fn laplacian_into(grid: &Grid, region: &Region, u: &[f64], out: &mut [f64]) {
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    for k in 0..u.len() {
        if !region.active[k] {
            out[k] = 0.0;
            continue;
        }
        let mut acc = 0.0;
        for axis in 0..grid.dim {
            for forward in [false, true] {
                match grid.neighbor(k, axis, forward) {
                    Some(nb) if region.active[nb] => acc += u[k] - u[nb],
                    _ => {
                        if region.boundary == Boundary::Dirichlet {
                            acc += u[k];
                        }
                    }
                }
            }
        }
        out[k] = acc * inv_h2;
    }
}

/// Diagonal of `-Δ_h` on a region.
pub fn laplacian_diagonal(grid: &Grid, region: &Region) -> Vec<f64> {
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    (0..grid.len())
        .map(|k| {
            if !region.active[k] {
                return 0.0;
            }
            let edges = match region.boundary {
                Boundary::Dirichlet => 2 * grid.dim,
                Boundary::Neumann => (0..grid.dim)
                    .flat_map(|axis| [false, true].map(|f| grid.neighbor(k, axis, f)))
                    .filter(|nb| nb.is_some_and(|nb| region.active[nb]))
                    .count(),
            };
            edges as f64 * inv_h2
        })
        .collect()
}

/// `h^dim`-weighted nodal sum.
pub fn integrate(grid: &Grid, f: &[f64]) -> f64 {
    grid.cell_volume() * f.iter().sum::<f64>()
}

/// Gradient energy `Σ |∇_h u|²` attributed to each node.
///
/// Each forward edge belongs to its lower node; an edge from the lower box
/// boundary belongs to its interior endpoint. Summing over all nodes gives
/// `⟨-Δ_h u, u⟩` exactly, so the attribution is additive over any partition.
pub fn nodal_gradient_sq(grid: &Grid, u: &[f64]) -> Vec<f64> {
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    (0..u.len())
        .map(|k| {
            let mut acc = 0.0;
            for axis in 0..grid.dim {
                let fwd = grid.neighbor(k, axis, true).map_or(0.0, |nb| u[nb]);
                acc += (fwd - u[k]).powi(2);
                if grid.neighbor(k, axis, false).is_none() {
                    acc += u[k] * u[k];
                }
            }
            acc * inv_h2
        })
        .collect()
}

/// `∫_mask |∇u|² + (λV + 1) u²`.
pub fn restricted_norm_sq(u: &Field, mask: &[bool], lambda: f64, potential: &[f64]) -> f64 {
    let grad = nodal_gradient_sq(&u.grid, &u.values);
    let sum: f64 = (0..u.values.len())
        .filter(|&k| mask[k])
        .map(|k| grad[k] + (lambda * potential[k] + 1.0) * u.values[k] * u.values[k])
        .sum();
    sum * u.grid.cell_volume()
}
