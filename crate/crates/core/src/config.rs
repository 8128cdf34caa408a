//! Run configuration in flat `key = value` text.
//!
//! ```text
//! # comments start with '#'
//! scenario = twin-wells-1d
//! dim = 1
//! R = 12.0
//! n = 961
//! well.1.center = -5.0
//! well.1.half_width = 3.0
//! well.1.margin = 1.0
//! lambdas = 10.0 100.0 1000.0 10000.0
//! gamma = all
//! ```
//!
//! Vector values (well centers and half-widths in 2D, `lambdas`, `gamma`
//! masks) are space separated. Unknown and repeated keys are errors. Optional
//! keys take the defaults of [`RunConfig::new`]; [`RunConfig::echo`] writes
//! every key, and parsing an echo reproduces it exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::domain::{AxisBox, Grid, Point, PotentialSpec, WellGeometry};
use crate::error::{Error, Result};
use crate::functional::Landscape;
use crate::penalty::{default_delta, default_growth_exponent, PenalizationParams};
use crate::solver::SolverConfig;
use crate::verify::{all_subsets, gamma_label, parse_gamma_label};

/// Nodes per axis a well must span for the single-well solve.
pub const MIN_WELL_NODES: f64 = 32.0;

#[derive(Debug, Clone, PartialEq)]
pub struct WellSpec {
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GammaSelection {
    /// Every nonempty subset of the wells.
    All,
    /// Explicit selections, zero-based.
    Masks(Vec<Vec<usize>>),
}

impl GammaSelection {
    pub fn resolve(&self, wells: usize) -> Vec<Vec<usize>> {
        match self {
            GammaSelection::All => all_subsets(wells),
            GammaSelection::Masks(m) => m.clone(),
        }
    }

    /// Parses `all` or space-separated `0`/`1` masks, checking their length.
    pub fn parse(text: &str, wells: usize) -> Result<Self> {
        let text = text.trim();
        if text == "all" {
            return Ok(GammaSelection::All);
        }
        let mut masks = Vec::new();
        for tok in text.split_whitespace() {
            if tok.len() != wells {
                return Err(Error::invalid("gamma", format!("mask {tok:?} must have one flag per well ({wells})")));
            }
            let sel = parse_gamma_label(tok).map_err(|_| Error::invalid("gamma", format!("bad mask {tok:?}")))?;
            if sel.is_empty() {
                return Err(Error::invalid("gamma", "gamma must select at least one well"));
            }
            masks.push(sel);
        }
        if masks.is_empty() {
            return Err(Error::invalid("gamma", "expected `all` or at least one mask"));
        }
        Ok(GammaSelection::Masks(masks))
    }

    fn echo(&self, wells: usize) -> String {
        match self {
            GammaSelection::All => "all".into(),
            GammaSelection::Masks(m) => m.iter().map(|g| gamma_label(g, wells)).collect::<Vec<_>>().join(" "),
        }
    }
}

/// Scale factor of the minimax path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TSetting {
    /// Smallest power of two satisfying the sign conditions.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: String,
    pub dim: usize,
    /// Half-width `R` of the box `[−R, R]^dim`.
    pub half_width: f64,
    /// Nodes per axis, boundary included.
    pub n: usize,
    pub cap: f64,
    pub wells: Vec<WellSpec>,
    pub delta: f64,
    pub l: f64,
    pub p: f64,
    pub gamma: GammaSelection,
    pub lambdas: Vec<f64>,
    pub solver: SolverConfig,
    pub t: TSetting,
    pub minimax_m: usize,
    /// Relative allowance of the energy sandwich.
    pub sandwich_allowance: f64,
    pub workers: usize,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Configuration with every optional key at its default.
    pub fn new(dim: usize, half_width: f64, n: usize, wells: Vec<WellSpec>, lambdas: Vec<f64>) -> Self {
        Self {
            scenario: "unnamed".into(),
            dim,
            half_width,
            n,
            cap: 1.0,
            wells,
            delta: default_delta(),
            l: 0.5,
            p: default_growth_exponent(dim),
            gamma: GammaSelection::All,
            lambdas,
            solver: SolverConfig::default(),
            t: TSetting::Auto,
            minimax_m: 10,
            sandwich_allowance: 0.02,
            workers: 1,
            out: None,
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.n, self.half_width)
    }

    pub fn geometry(&self) -> Result<WellGeometry> {
        let mut wells = Vec::with_capacity(self.wells.len());
        let mut enlargements = Vec::with_capacity(self.wells.len());
        for w in &self.wells {
            let mut center: Point = [0.0; 2];
            let mut half: Point = [0.0; 2];
            center[..self.dim].copy_from_slice(&w.center);
            half[..self.dim].copy_from_slice(&w.half_width);
            let b = AxisBox::new(center, half);
            enlargements.push(b.grown(w.margin));
            wells.push(b);
        }
        WellGeometry::new(self.dim, wells, enlargements)
    }

    pub fn landscape(&self) -> Result<Landscape> {
        Landscape::new(self.grid()?, PotentialSpec::new(self.geometry()?, self.cap)?)
    }

    pub fn params(&self) -> Result<PenalizationParams> {
        PenalizationParams::new(self.delta, self.l, self.p, self.dim)
    }

    pub fn selections(&self) -> Vec<Vec<usize>> {
        self.gamma.resolve(self.wells.len())
    }

    /// Checks every constraint, reporting the first violation by key.
    pub fn validate(&self) -> Result<()> {
        if self.scenario.is_empty() || self.scenario.chars().any(|c| c.is_whitespace()) {
            return Err(Error::invalid("scenario", "scenario must be a nonempty word"));
        }
        let grid = self.grid()?;
        if !(self.cap > 0.0 && self.cap.is_finite()) {
            return Err(Error::invalid("cap", format!("cap = {} must be positive", self.cap)));
        }
        if self.wells.is_empty() {
            return Err(Error::invalid("well", "at least one well is required"));
        }
        for (j, w) in self.wells.iter().enumerate() {
            let key = |field: &str| format!("well.{}.{field}", j + 1);
            if w.center.len() != self.dim {
                return Err(Error::invalid(&key("center"), format!("expected {} coordinates", self.dim)));
            }
            if w.half_width.len() != self.dim {
                return Err(Error::invalid(&key("half_width"), format!("expected {} values", self.dim)));
            }
            if w.center.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid(&key("center"), "coordinates must be finite"));
            }
            if let Some(hw) = w.half_width.iter().find(|&&hw| !(hw > 0.0 && hw.is_finite())) {
                return Err(Error::invalid(&key("half_width"), format!("{hw} must be positive")));
            }
            if !(w.margin > 0.0 && w.margin.is_finite()) {
                return Err(Error::invalid(&key("margin"), format!("{} must be positive", w.margin)));
            }
            if let Some(hw) = w.half_width.iter().find(|&&hw| 2.0 * hw / grid.h() < MIN_WELL_NODES) {
                return Err(Error::invalid(
                    &key("half_width"),
                    format!("well spans {:.1} cells at h = {}; at least {MIN_WELL_NODES} are needed", 2.0 * hw / grid.h(), grid.h()),
                ));
            }
        }
        self.landscape()?;
        self.params()?;
        if let GammaSelection::Masks(m) = &self.gamma {
            for g in m {
                if g.is_empty() || g.iter().any(|&j| j >= self.wells.len()) {
                    return Err(Error::invalid("gamma", "masks must select existing wells"));
                }
            }
        }
        if self.lambdas.is_empty() {
            return Err(Error::invalid("lambdas", "at least one lambda is required"));
        }
        if let Some(l) = self.lambdas.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::invalid("lambdas", format!("lambda = {l} must be positive")));
        }
        if self.lambdas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("lambdas", "lambda values must be strictly ascending"));
        }
        self.solver.validate()?;
        if let TSetting::Fixed(t) = self.t {
            if !(t > 1.0 && t.is_finite()) {
                return Err(Error::invalid("T", format!("T = {t} must exceed 1")));
            }
        }
        if self.minimax_m < 8 {
            return Err(Error::invalid("minimax_m", format!("minimax_m = {} must be at least 8", self.minimax_m)));
        }
        if !(self.sandwich_allowance >= 0.0 && self.sandwich_allowance < 1.0) {
            return Err(Error::invalid("sandwich_allowance", "allowance must lie in [0, 1)"));
        }
        if self.workers == 0 {
            return Err(Error::invalid("workers", "at least one worker is required"));
        }
        Ok(())
    }

    /// Reads and validates a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg = Self::parse(&text, path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses configuration text without validating cross-key constraints.
    /// `origin` only labels errors.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let syntax = |line: usize, reason: String| Error::Parse { path: origin.to_path_buf(), line, reason };
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(syntax(i + 1, format!("expected `key = value`, found {line:?}")));
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(syntax(i + 1, "empty key".into()));
            }
            if entries.insert(key.to_string(), (i + 1, value.to_string())).is_some() {
                return Err(syntax(i + 1, format!("key `{key}` appears twice")));
            }
        }

        let mut well_keys: BTreeMap<usize, BTreeMap<String, (usize, String)>> = BTreeMap::new();
        let mut plain = BTreeMap::new();
        for (key, entry) in entries {
            if let Some(rest) = key.strip_prefix("well.") {
                let (idx, field) = rest
                    .split_once('.')
                    .ok_or_else(|| syntax(entry.0, format!("unknown key `{key}`")))?;
                let j: usize = idx
                    .parse()
                    .ok()
                    .filter(|&j| j >= 1)
                    .ok_or_else(|| syntax(entry.0, format!("well index in `{key}` must be a positive integer")))?;
                if !matches!(field, "center" | "half_width" | "margin") {
                    return Err(syntax(entry.0, format!("unknown key `{key}`")));
                }
                well_keys.entry(j).or_default().insert(field.to_string(), entry);
            } else {
                plain.insert(key, entry);
            }
        }

        let take = |map: &mut BTreeMap<String, (usize, String)>, key: &str| map.remove(key);
        fn value<T: FromStr>(key: &str, entry: &(usize, String)) -> Result<T> {
            entry.1.parse().map_err(|_| Error::invalid(key, format!("cannot parse {:?} (line {})", entry.1, entry.0)))
        }
        fn list(key: &str, entry: &(usize, String)) -> Result<Vec<f64>> {
            entry
                .1
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::invalid(key, format!("cannot parse {t:?} (line {})", entry.0))))
                .collect()
        }
        let required = |map: &mut BTreeMap<String, (usize, String)>, key: &str| {
            map.remove(key).ok_or_else(|| Error::invalid(key, "required key is missing"))
        };

        let dim: usize = value("dim", &required(&mut plain, "dim")?)?;
        let half_width: f64 = value("R", &required(&mut plain, "R")?)?;
        let n: usize = value("n", &required(&mut plain, "n")?)?;
        let lambdas = list("lambdas", &required(&mut plain, "lambdas")?)?;

        let count = well_keys.keys().next_back().copied().unwrap_or(0);
        let mut wells = Vec::with_capacity(count);
        for j in 1..=count {
            let mut fields = well_keys.remove(&j).unwrap_or_default();
            let key = |f: &str| format!("well.{j}.{f}");
            let mut field = |f: &str| {
                fields.remove(f).ok_or_else(|| Error::invalid(&key(f), "required key is missing"))
            };
            let (center, half, margin) = (field("center")?, field("half_width")?, field("margin")?);
            wells.push(WellSpec {
                center: list(&key("center"), &center)?,
                half_width: list(&key("half_width"), &half)?,
                margin: value(&key("margin"), &margin)?,
            });
        }

        let mut cfg = RunConfig::new(dim, half_width, n, wells, lambdas);
        if let Some(e) = take(&mut plain, "scenario") {
            cfg.scenario = e.1;
        }
        if let Some(e) = take(&mut plain, "cap") {
            cfg.cap = value("cap", &e)?;
        }
        if let Some(e) = take(&mut plain, "delta") {
            cfg.delta = value("delta", &e)?;
        }
        if let Some(e) = take(&mut plain, "l") {
            cfg.l = value("l", &e)?;
        }
        if let Some(e) = take(&mut plain, "p") {
            cfg.p = value("p", &e)?;
        }
        if let Some(e) = take(&mut plain, "gamma") {
            cfg.gamma = GammaSelection::parse(&e.1, cfg.wells.len())?;
        }
        let s = &mut cfg.solver;
        if let Some(e) = take(&mut plain, "tau") {
            s.tau = value("tau", &e)?;
        }
        if let Some(e) = take(&mut plain, "tol") {
            s.tol = value("tol", &e)?;
        }
        if let Some(e) = take(&mut plain, "max_iters") {
            s.max_iters = value("max_iters", &e)?;
        }
        if let Some(e) = take(&mut plain, "cg_tol") {
            s.cg_tol = value("cg_tol", &e)?;
        }
        if let Some(e) = take(&mut plain, "cg_max_iters") {
            s.cg_max_iters = value("cg_max_iters", &e)?;
        }
        if let Some(e) = take(&mut plain, "positivity") {
            s.positivity = value("positivity", &e)?;
        }
        if let Some(e) = take(&mut plain, "occupancy") {
            s.occupancy = value("occupancy", &e)?;
        }
        if let Some(e) = take(&mut plain, "T") {
            cfg.t = if e.1 == "auto" { TSetting::Auto } else { TSetting::Fixed(value("T", &e)?) };
        }
        if let Some(e) = take(&mut plain, "minimax_m") {
            cfg.minimax_m = value("minimax_m", &e)?;
        }
        if let Some(e) = take(&mut plain, "sandwich_allowance") {
            cfg.sandwich_allowance = value("sandwich_allowance", &e)?;
        }
        if let Some(e) = take(&mut plain, "workers") {
            cfg.workers = value("workers", &e)?;
        }
        if let Some(e) = take(&mut plain, "out") {
            cfg.out = Some(PathBuf::from(e.1));
        }
        if let Some((key, (line, _))) = plain.into_iter().next() {
            return Err(syntax(line, format!("unknown key `{key}`")));
        }
        Ok(cfg)
    }

    /// Canonical text form; parsing it yields an identical configuration.
    pub fn echo(&self) -> String {
        let floats = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("scenario", self.scenario.clone());
        kv("dim", self.dim.to_string());
        kv("R", format!("{:?}", self.half_width));
        kv("n", self.n.to_string());
        kv("cap", format!("{:?}", self.cap));
        for (j, w) in self.wells.iter().enumerate() {
            kv(&format!("well.{}.center", j + 1), floats(&w.center));
            kv(&format!("well.{}.half_width", j + 1), floats(&w.half_width));
            kv(&format!("well.{}.margin", j + 1), format!("{:?}", w.margin));
        }
        kv("delta", format!("{:?}", self.delta));
        kv("l", format!("{:?}", self.l));
        kv("p", format!("{:?}", self.p));
        kv("gamma", self.gamma.echo(self.wells.len()));
        kv("lambdas", floats(&self.lambdas));
        kv("tau", format!("{:?}", self.solver.tau));
        kv("tol", format!("{:?}", self.solver.tol));
        kv("max_iters", self.solver.max_iters.to_string());
        kv("cg_tol", format!("{:?}", self.solver.cg_tol));
        kv("cg_max_iters", self.solver.cg_max_iters.to_string());
        kv("positivity", self.solver.positivity.to_string());
        kv("occupancy", format!("{:?}", self.solver.occupancy));
        kv(
            "T",
            match self.t {
                TSetting::Auto => "auto".into(),
                TSetting::Fixed(t) => format!("{t:?}"),
            },
        );
        kv("minimax_m", self.minimax_m.to_string());
        kv("sandwich_allowance", format!("{:?}", self.sandwich_allowance));
        kv("workers", self.workers.to_string());
        if let Some(out_dir) = &self.out {
            kv("out", out_dir.display().to_string());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
# two wells on a line
dim = 1
R = 12
n = 961
well.1.center = -5
well.1.half_width = 3
well.1.margin = 1
well.2.center = 5
well.2.half_width = 3
well.2.margin = 1
lambdas = 10 100 1000 10000
";

    fn parse(text: &str) -> Result<RunConfig> {
        let cfg = RunConfig::parse(text, Path::new("test.cfg"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn key_of(err: Error) -> String {
        match err {
            Error::InvalidParameter { key, .. } => key,
            other => panic!("expected a parameter error, got {other}"),
        }
    }

    #[test]
    fn minimal_config_parses_and_echo_is_a_fixed_point() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.wells.len(), 2);
        assert_eq!(cfg.selections(), vec![vec![0], vec![1], vec![0, 1]]);
        let echo = cfg.echo();
        let again = parse(&echo).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.echo(), echo);
    }

    #[test]
    fn bad_penalization_is_rejected_by_key() {
        assert_eq!(key_of(parse(&format!("{MINIMAL}l = 1.5\n")).unwrap_err()), "l");
        assert_eq!(key_of(parse(&format!("{MINIMAL}delta = 0.5\n")).unwrap_err()), "delta");
    }

    #[test]
    fn unknown_and_repeated_keys_are_errors() {
        let err = parse(&format!("{MINIMAL}lamdbas = 1\n")).unwrap_err();
        assert!(err.to_string().contains("lamdbas"), "{err}");
        let err = parse(&format!("{MINIMAL}well.1.radius = 1\n")).unwrap_err();
        assert!(err.to_string().contains("well.1.radius"), "{err}");
        let err = parse(&format!("{MINIMAL}dim = 1\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 12, .. }), "{err}");
    }

    #[test]
    fn syntax_and_missing_keys() {
        assert!(matches!(parse("dim 1").unwrap_err(), Error::Parse { line: 1, .. }));
        assert_eq!(key_of(parse("dim = 1\nR = 1\n").unwrap_err()), "n");
        let without_margin = MINIMAL.replace("well.2.margin = 1\n", "");
        assert_eq!(key_of(parse(&without_margin).unwrap_err()), "well.2.margin");
    }

    #[test]
    fn constraint_violations_name_their_key() {
        let cases = [
            ("lambdas = 10 100 1000 10000", "lambdas = 100 10", "lambdas"),
            ("n = 961", "n = 61", "well.1.half_width"),
            ("lambdas = 10 100 1000 10000", "lambdas = 10 100\ngamma = 00", "gamma"),
            ("lambdas = 10 100 1000 10000", "lambdas = 10\nminimax_m = 4", "minimax_m"),
            ("lambdas = 10 100 1000 10000", "lambdas = 10\nT = 1", "T"),
            ("lambdas = 10 100 1000 10000", "lambdas = 10\ntau = 0", "tau"),
            ("lambdas = 10 100 1000 10000", "lambdas = 10\nworkers = 0", "workers"),
        ];
        for (from, to, key) in cases {
            let text = MINIMAL.replace(from, to);
            assert_eq!(key_of(parse(&text).unwrap_err()), key, "{to}");
        }
    }

    #[test]
    fn overlapping_wells_are_rejected() {
        let text = MINIMAL.replace("well.2.center = 5", "well.2.center = 1");
        assert!(matches!(parse(&text).unwrap_err(), Error::Geometry(_)));
    }

    #[test]
    fn explicit_selection_and_fixed_t_round_trip() {
        let text = format!("{MINIMAL}gamma = 10 11\nT = 4\nout = runs/x\nscenario = demo\n");
        let cfg = parse(&text).unwrap();
        assert_eq!(cfg.selections(), vec![vec![0], vec![0, 1]]);
        assert_eq!(cfg.t, TSetting::Fixed(4.0));
        assert_eq!(parse(&cfg.echo()).unwrap(), cfg);
    }
}
