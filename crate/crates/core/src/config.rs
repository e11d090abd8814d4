//! Experiment configuration: JSON document, defaults and validation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cartan::{GradingVector, Lattice};
use crate::error::{Error, Result};
use crate::flow::{CoefficientSpec, GridSpec, Mode};
use crate::matrix::Matrix;
use crate::poly::Poly;
use crate::scalar::{rational_from_decimal, Rational, Scalar};

/// A coefficient given as a JSON number or as an exact fraction `"p/q"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Float(f64),
    Text(String),
}

impl Number {
    pub fn to_rational(&self) -> Result<Rational> {
        match self {
            Number::Float(v) => Ok(rational_from_decimal(*v)),
            Number::Text(s) => {
                let s = s.trim();
                let (num, den) = s.split_once('/').unwrap_or((s, "1"));
                let parse = |t: &str| {
                    if t.contains('.') || t.contains('e') {
                        t.trim()
                            .parse::<f64>()
                            .map(rational_from_decimal)
                            .map_err(|_| ())
                    } else {
                        t.trim()
                            .parse::<i64>()
                            .map(Rational::from_i64)
                            .map_err(|_| ())
                    }
                };
                let (n, d) = parse(num)
                    .and_then(|n| parse(den).map(|d| (n, d)))
                    .map_err(|_| Error::Config(format!("cannot read coefficient {s:?}")))?;
                if d == Rational::from_i64(0) {
                    return Err(Error::Config(format!("zero denominator in {s:?}")));
                }
                Ok(n / d)
            }
        }
    }
}

pub type PolyEntry = Vec<Number>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockEntry {
    pub k: usize,
    /// 1-based site index.
    pub site: usize,
    /// Rows of polynomial coefficient lists, lowest degree first.
    pub entries: Vec<Vec<PolyEntry>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Fill {
    #[default]
    Zero,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CoefficientTable {
    #[serde(default)]
    pub fill: Fill,
    #[serde(default, rename = "P")]
    pub p: Vec<BlockEntry>,
    #[serde(default, rename = "Pbar")]
    pub pbar: Vec<BlockEntry>,
    #[serde(default, rename = "A0")]
    pub a0: Vec<PolyEntry>,
    #[serde(default, rename = "B0")]
    pub b0: Vec<PolyEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficients {
    Named(Fill),
    Table(CoefficientTable),
}

impl Default for Coefficients {
    fn default() -> Self {
        Coefficients::Named(Fill::Identity)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub x0: f64,
    #[serde(default = "one")]
    pub x1: f64,
    #[serde(default)]
    pub y0: f64,
    #[serde(default = "one")]
    pub y1: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    /// Number of step halvings after the first level.
    #[serde(default = "default_refinements")]
    pub refinements: u32,
    /// Stride between coarse nodes where residuals are compared.
    #[serde(default)]
    pub probe_stride: Option<usize>,
    /// Stride between coarse nodes written to field dumps and checked
    /// algebraically.
    #[serde(default)]
    pub dump_stride: Option<usize>,
}

fn one() -> f64 {
    1.0
}
fn default_h() -> f64 {
    0.01
}
fn default_refinements() -> u32 {
    2
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            x0: 0.0,
            x1: 1.0,
            y0: 0.0,
            y1: 1.0,
            h: default_h(),
            refinements: default_refinements(),
            probe_stride: None,
            dump_stride: None,
        }
    }
}

impl GridConfig {
    pub fn spec(&self) -> GridSpec {
        GridSpec {
            x0: self.x0,
            x1: self.x1,
            y0: self.y0,
            y1: self.y1,
            h: self.h,
        }
    }

    fn auto_stride(&self, target: usize) -> Result<usize> {
        let (nx, ny) = self.spec().cells()?;
        Ok((nx.max(ny) / target).max(1))
    }

    pub fn probe_stride(&self) -> Result<usize> {
        self.probe_stride.map_or_else(|| self.auto_stride(20), Ok)
    }

    pub fn dump_stride(&self) -> Result<usize> {
        self.dump_stride.map_or_else(|| self.auto_stride(20), Ok)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoursatConfig {
    #[serde(default)]
    pub x0: f64,
    #[serde(default = "half")]
    pub x1: f64,
    #[serde(default)]
    pub y0: f64,
    #[serde(default = "half")]
    pub y1: f64,
    #[serde(default = "goursat_h")]
    pub h: f64,
    #[serde(default = "default_refinements")]
    pub refinements: u32,
}

fn half() -> f64 {
    0.5
}
fn goursat_h() -> f64 {
    0.05
}

impl Default for GoursatConfig {
    fn default() -> Self {
        GoursatConfig {
            x0: 0.0,
            x1: half(),
            y0: 0.0,
            y1: half(),
            h: goursat_h(),
            refinements: default_refinements(),
        }
    }
}

impl GoursatConfig {
    pub fn spec(&self) -> GridSpec {
        GridSpec {
            x0: self.x0,
            x1: self.x1,
            y0: self.y0,
            y1: self.y1,
            h: self.h,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Relative residual cap of algebraic identities in float mode.
    #[serde(default = "tol_identity")]
    pub identity: f64,
    #[serde(default = "tol_fine")]
    pub second_jacobi: f64,
    #[serde(default = "tol_fine")]
    pub recursion: f64,
    #[serde(default = "two")]
    pub order_target: f64,
    #[serde(default = "band")]
    pub order_band: f64,
    #[serde(default = "goursat_band")]
    pub goursat_band: f64,
    /// Residuals below this are treated as round-off.
    #[serde(default = "floor")]
    pub floor: f64,
    /// Cap on the finest-level finite-difference residual.
    #[serde(default = "residual_cap")]
    pub residual_cap: f64,
    /// Cap on the finest-level Goursat deviation.
    #[serde(default = "goursat_cap")]
    pub goursat_cap: f64,
}

fn tol_identity() -> f64 {
    1e-9
}
fn tol_fine() -> f64 {
    1e-10
}
fn two() -> f64 {
    2.0
}
fn band() -> f64 {
    0.2
}
fn goursat_band() -> f64 {
    0.3
}
fn floor() -> f64 {
    1e-11
}
fn residual_cap() -> f64 {
    1e-2
}
fn goursat_cap() -> f64 {
    1e-3
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            identity: tol_identity(),
            second_jacobi: tol_fine(),
            recursion: tol_fine(),
            order_target: two(),
            order_band: band(),
            goursat_band: goursat_band(),
            floor: floor(),
            residual_cap: residual_cap(),
            goursat_cap: goursat_cap(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    #[serde(default)]
    pub grading: Option<String>,
    #[serde(default = "default_m", rename = "M")]
    pub m: usize,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_degree_cap")]
    pub degree_cap: usize,
    #[serde(default)]
    pub coefficients: Coefficients,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub goursat: GoursatConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_m() -> usize {
    1
}
fn default_mode() -> Mode {
    Mode::Float
}
fn default_samples() -> usize {
    100
}
fn default_degree_cap() -> usize {
    6
}

impl ExperimentConfig {
    pub fn new(n: usize) -> Self {
        ExperimentConfig {
            n,
            grading: None,
            m: default_m(),
            mode: default_mode(),
            seed: 0,
            samples: default_samples(),
            degree_cap: default_degree_cap(),
            coefficients: Coefficients::default(),
            grid: GridConfig::default(),
            goursat: GoursatConfig::default(),
            tolerances: Tolerances::default(),
        }
    }

    /// Parses a JSON document; errors name the offending field path and
    /// the line/column.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Config(format!("field `{path}`: {inner}"))
        })?;
        Ok(cfg)
    }

    pub fn grading_vector(&self) -> Result<GradingVector> {
        match &self.grading {
            None => Ok(GradingVector::main(self.n)),
            Some(s) => {
                let g: GradingVector = s.parse()?;
                if g.len() != self.n {
                    return Err(Error::InvalidGrading(format!(
                        "{s:?} has {} entries for A_{}",
                        g.len(),
                        self.n
                    )));
                }
                Ok(g)
            }
        }
    }

    pub fn lattice(&self) -> Result<Lattice> {
        Ok(Lattice::new(&self.grading_vector()?))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidRank(0));
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be positive".into()));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("identity", t.identity),
            ("second_jacobi", t.second_jacobi),
            ("recursion", t.recursion),
            ("order_band", t.order_band),
            ("goursat_band", t.goursat_band),
            ("floor", t.floor),
            ("residual_cap", t.residual_cap),
            ("goursat_cap", t.goursat_cap),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!(
                    "tolerance `{name}` must be positive"
                )));
            }
        }
        self.grid.spec().cells()?;
        self.goursat.spec().cells()?;
        self.spec::<Rational>()?;
        Ok(())
    }

    /// Flow coefficients over scalar `T`, checked against the lattice.
    pub fn spec<T: Scalar>(&self) -> Result<CoefficientSpec<T>> {
        let lattice = self.lattice()?;
        let conv = |v: &Number| -> Result<T> {
            let q = v.to_rational()?;
            Ok(T::from_rational(&q))
        };
        let poly = |c: &PolyEntry| -> Result<Poly<T>> {
            Ok(Poly::new(c.iter().map(conv).collect::<Result<_>>()?))
        };
        let (fill, table) = match &self.coefficients {
            Coefficients::Named(f) => (*f, CoefficientTable::default()),
            Coefficients::Table(t) => (t.fill, t.clone()),
        };
        let mut spec = match fill {
            Fill::Zero => CoefficientSpec::zero(lattice, self.m),
            Fill::Identity => CoefficientSpec::identity(lattice, self.m),
        };
        let block = |e: &BlockEntry, name: &str| -> Result<((usize, usize), Matrix<Poly<T>>)> {
            if e.site == 0 {
                return Err(Error::Config(format!("{name}: sites are numbered from 1")));
            }
            let rows = e.entries.len();
            let cols = e.entries.first().map_or(0, Vec::len);
            if rows == 0 || e.entries.iter().any(|r| r.len() != cols) {
                return Err(Error::Config(format!(
                    "{name}^{{{},{}}}: ragged or empty entries",
                    e.k, e.site
                )));
            }
            let mut flat = Vec::with_capacity(rows * cols);
            for r in &e.entries {
                for c in r {
                    flat.push(poly(c)?);
                }
            }
            Ok(((e.k, e.site - 1), Matrix::from_vec(rows, cols, flat)))
        };
        for e in &table.p {
            let (key, m) = block(e, "P")?;
            spec.p.insert(key, m);
        }
        for e in &table.pbar {
            let (key, m) = block(e, "Pbar")?;
            spec.pbar.insert(key, m);
        }
        for (dst, src, name) in [
            (&mut spec.a0, &table.a0, "A0"),
            (&mut spec.b0, &table.b0, "B0"),
        ] {
            if src.len() > self.n {
                return Err(Error::Config(format!(
                    "{name} has {} entries for {} Cartan directions",
                    src.len(),
                    self.n
                )));
            }
            for (i, c) in src.iter().enumerate() {
                dst[i] = poly(c)?;
            }
        }
        spec.validate(self.degree_cap)?;
        Ok(spec)
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let text = serde_json::to_string(self).unwrap_or_default();
        format!("{:x}", Sha256::digest(text.as_bytes()))
    }

    /// Named subsets of the parsed config for echoing in reports.
    pub fn echo(&self) -> BTreeMap<String, serde_json::Value> {
        let mut out = BTreeMap::new();
        out.insert("n".into(), self.n.into());
        out.insert(
            "grading".into(),
            self.grading_vector()
                .map(|g| g.to_string())
                .unwrap_or_default()
                .into(),
        );
        out.insert("M".into(), self.m.into());
        out.insert("samples".into(), self.samples.into());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_table() {
        let cfg = ExperimentConfig::from_json(
            r#"{"n": 4, "grading": "0,1,0,1", "M": 2, "coefficients": {
                "fill": "identity",
                "Pbar": [{"k": 2, "site": 1, "entries": [[[0.5, "1/3"]], [[-1]]]}],
                "P": [{"k": 2, "site": 1, "entries": [[[1], [2]]]}]
            }}"#,
        )
        .unwrap();
        cfg.validate().unwrap();
        let spec = cfg.spec::<Rational>().unwrap();
        assert_eq!(
            spec.pbar[&(2, 0)][(0, 0)].coeffs()[1],
            Rational::from_ratio(1, 3)
        );
        assert_eq!(spec.p[&(1, 1)].shape(), (1, 2));
        assert_eq!(cfg.grid.h, 0.01);
        assert_eq!(cfg.hash(), cfg.clone().hash());
    }

    #[test]
    fn diagnostics_name_fields() {
        let err = ExperimentConfig::from_json(r#"{"n": 3, "grid": {"h": "x"}}"#).unwrap_err();
        assert!(err.to_string().contains("grid.h"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"n": 3, "bogus": 1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let mut cfg = ExperimentConfig::new(2);
        cfg.grading = Some("1,2".into());
        assert!(matches!(cfg.validate(), Err(Error::InvalidGrading(_))));
    }

    #[test]
    fn shape_errors_are_config_errors() {
        let cfg = ExperimentConfig::from_json(
            r#"{"n": 3, "grading": "0,1,0", "coefficients": {"P": [{"k": 1, "site": 1, "entries": [[[1]]]}]}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
