//! Experiment description as read from JSON, and its expansion into grid
//! coordinates.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{EstimatorConfig, Preset};
use crate::rates::{ceil_power, s_zero};

/// Default number of Monte Carlo replicates per coordinate.
pub const DEFAULT_REPS: usize = 10_000;
/// Default master seed.
pub const DEFAULT_SEED: u64 = 20_190_101;

/// One entry of `s_grid`: a literal or an expression in `d`, rounded up.
#[derive(Debug, Clone, PartialEq)]
pub enum SparsityExpr {
    Literal(usize),
    /// `⌈d^p⌉`.
    Power(f64),
    /// `⌈√d⌉`.
    SqrtD,
    /// `⌈√(d log d)⌉`.
    SqrtDLogD,
    /// `⌈√(d log d / 2)⌉`.
    SqrtHalfDLogD,
    /// `s₀ = ⌊√(d log d / 2)⌋ + 1`, the fallback index of the selector.
    SZero,
}

impl SparsityExpr {
    pub fn resolve(&self, d: usize) -> Result<usize> {
        let ln_d = (d as f64).ln();
        let s = match *self {
            SparsityExpr::Literal(s) => s,
            SparsityExpr::Power(p) => ceil_power(d, p),
            SparsityExpr::SqrtD => ceil_sqrt(d as f64, |s| s * s >= d as f64),
            SparsityExpr::SqrtDLogD => ceil_sqrt(d as f64 * ln_d, |s| s * s >= d as f64 * ln_d),
            SparsityExpr::SqrtHalfDLogD => ceil_sqrt(d as f64 * ln_d / 2.0, |s| s * s >= d as f64 * ln_d / 2.0),
            SparsityExpr::SZero => s_zero(d),
        };
        if s == 0 || s > d {
            return invalid(format!("sparsity {self} resolves to {s}, outside 1..={d}"));
        }
        Ok(s)
    }
}

/// Smallest integer `s` with `covers(s)`, starting from the rounded square
/// root so that perfect squares are not pushed up by rounding.
fn ceil_sqrt(x: f64, covers: impl Fn(f64) -> bool) -> usize {
    let mut s = x.sqrt().round().max(0.0) as usize;
    while s > 0 && covers((s - 1) as f64) {
        s -= 1;
    }
    while !covers(s as f64) {
        s += 1;
    }
    s
}

impl fmt::Display for SparsityExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SparsityExpr::Literal(s) => write!(f, "{s}"),
            SparsityExpr::Power(p) => write!(f, "d^{p}"),
            SparsityExpr::SqrtD => f.write_str("sqrt(d)"),
            SparsityExpr::SqrtDLogD => f.write_str("sqrt(d log d)"),
            SparsityExpr::SqrtHalfDLogD => f.write_str("sqrt(d log d/2)"),
            SparsityExpr::SZero => f.write_str("s0"),
        }
    }
}

impl std::str::FromStr for SparsityExpr {
    type Err = Error;

    fn from_str(raw: &str) -> Result<Self> {
        let text: String = raw.split_whitespace().collect::<Vec<_>>().join(" ");
        let compact: String = raw.chars().filter(|c| !c.is_whitespace()).collect();
        if let Ok(s) = compact.parse::<usize>() {
            return Ok(SparsityExpr::Literal(s));
        }
        match text.as_str() {
            "sqrt(d)" | "√d" => return Ok(SparsityExpr::SqrtD),
            "sqrt(d log d)" | "√(d log d)" => return Ok(SparsityExpr::SqrtDLogD),
            "sqrt(d log d/2)" | "sqrt(d log d / 2)" | "√(d log d/2)" => return Ok(SparsityExpr::SqrtHalfDLogD),
            "s0" => return Ok(SparsityExpr::SZero),
            _ => {}
        }
        if let Some(exp) = compact.strip_prefix("d^") {
            let exp = exp.trim_start_matches('{').trim_end_matches('}');
            let exp = exp.trim_start_matches('(').trim_end_matches(')');
            let p = match exp.split_once('/') {
                Some((num, den)) => {
                    let num: f64 = num.parse().map_err(|_| bad_expr(raw))?;
                    let den: f64 = den.parse().map_err(|_| bad_expr(raw))?;
                    num / den
                }
                None => exp.parse().map_err(|_| bad_expr(raw))?,
            };
            if !(p > 0.0 && p <= 1.0) {
                return Err(bad_expr(raw));
            }
            return Ok(SparsityExpr::Power(p));
        }
        Err(bad_expr(raw))
    }
}

fn bad_expr(raw: &str) -> Error {
    Error::InvalidParameter(format!(
        "cannot parse sparsity {raw:?}; use an integer, d^p, sqrt(d), sqrt(d log d), sqrt(d log d/2) or s0"
    ))
}

impl<'de> Deserialize<'de> for SparsityExpr {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(usize),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Int(s) => Ok(SparsityExpr::Literal(s)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl Serialize for SparsityExpr {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SparsityExpr::Literal(s) => ser.serialize_u64(*s as u64),
            other => ser.serialize_str(&other.to_string()),
        }
    }
}

/// A finite family of signals standing in for the supremum over `Θₛ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    Zero,
    /// The zero signal plus, for every `λ`, `s` equal spikes of height
    /// `λσ√log(1 + d·log(d)/s²)` on the first `s` coordinates. Without an
    /// explicit list the grid is `{0.5, 1, √α, 2√α}`.
    Spikes {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambdas: Option<Vec<f64>>,
    },
    /// Signals drawn afresh in each replicate from the spike prior with
    /// `ρ = √((1/2 − a)·log(1 + d·log(d)/s²))`.
    LowerBoundPrior { a: f64 },
    /// Dense signals `θ ~ N(0, a² I_d)` drawn afresh in each replicate.
    GaussianPrior { a: f64 },
    /// User-supplied signals as sparse maps from 1-based index to value.
    Custom { signals: Vec<CustomSignal> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSignal {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// 1-based coordinate index to value.
    #[serde(deserialize_with = "deserialize_entries")]
    pub entries: BTreeMap<usize, f64>,
}

/// JSON object keys are strings; inside an internally tagged enum serde does
/// not convert them to integers on its own.
fn deserialize_entries<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<BTreeMap<usize, f64>, D::Error> {
    BTreeMap::<String, f64>::deserialize(de)?
        .into_iter()
        .map(|(k, v)| {
            k.trim()
                .parse::<usize>()
                .map(|k| (k, v))
                .map_err(|_| serde::de::Error::custom(format!("signal index {k:?} is not a positive integer")))
        })
        .collect()
}

impl FamilySpec {
    /// Short label used in the `theta_family` CSV column.
    pub fn label(&self) -> String {
        match self {
            FamilySpec::Zero => "zero".into(),
            FamilySpec::Spikes { .. } => "spikes".into(),
            FamilySpec::LowerBoundPrior { a } => format!("lower_bound_prior(a={a})"),
            FamilySpec::GaussianPrior { a } => format!("gaussian_prior(a={a})"),
            FamilySpec::Custom { signals } => format!("custom(n={})", signals.len()),
        }
    }

    pub fn spikes() -> Self {
        FamilySpec::Spikes { lambdas: None }
    }
}

fn deserialize_family<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Vec<FamilySpec>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Name(String),
        Full(FamilySpec),
    }
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<Entry>),
        One(Entry),
    }
    let convert = |e: Entry| match e {
        Entry::Full(f) => Ok(f),
        Entry::Name(n) => serde_json::from_value(serde_json::json!({ "kind": n })).map_err(serde::de::Error::custom),
    };
    match OneOrMany::deserialize(de)? {
        OneOrMany::One(e) => Ok(vec![convert(e)?]),
        OneOrMany::Many(v) => v.into_iter().map(convert).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Minimax estimator for known `s`.
    Oracle,
    /// Collection member `L̂_s` at the grid value of `s`.
    Collection,
    /// Adaptive `L̂` with known `σ`.
    Adaptive,
    /// Fully adaptive `L̂′` using `σ̂`.
    AdaptiveUnknownSigma,
    /// The constant estimator 0.
    Zero,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Oracle => "oracle",
            EstimatorKind::Collection => "collection",
            EstimatorKind::Adaptive => "adaptive",
            EstimatorKind::AdaptiveUnknownSigma => "adaptive_unknown_sigma",
            EstimatorKind::Zero => "zero",
        }
    }

    pub fn uses_selection(self) -> bool {
        matches!(self, EstimatorKind::Adaptive | EstimatorKind::AdaptiveUnknownSigma)
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::InvalidParameter(format!("unknown estimator {s:?}")))
    }
}

fn deserialize_estimators<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Vec<EstimatorKind>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<EstimatorKind>),
        One(EstimatorKind),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(e) => vec![e],
        OneOrMany::Many(v) => v,
    })
}

fn deserialize_preset<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<EstimatorConfig, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Name(Preset),
        Full(EstimatorConfig),
    }
    match Raw::deserialize(de)? {
        Raw::Name(p) => EstimatorConfig::from_preset(p).map_err(serde::de::Error::custom),
        Raw::Full(c) => Ok(c),
    }
}

/// Budgets checked on every row; `--assert` turns violations into a
/// failing exit status.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checks {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_ratio_to_phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_ratio_to_psi: Option<f64>,
}

fn default_reps() -> usize {
    DEFAULT_REPS
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_sigma() -> f64 {
    1.0
}

fn default_family() -> Vec<FamilySpec> {
    vec![FamilySpec::spikes()]
}

/// A full experiment: the cartesian product of `d_grid`, `s_grid`,
/// `theta_family` and `estimator`, each point evaluated with `reps`
/// replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub d_grid: Vec<usize>,
    pub s_grid: Vec<SparsityExpr>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_family", deserialize_with = "deserialize_family")]
    pub theta_family: Vec<FamilySpec>,
    #[serde(deserialize_with = "deserialize_estimators")]
    pub estimator: Vec<EstimatorKind>,
    #[serde(default, deserialize_with = "deserialize_preset")]
    pub preset: EstimatorConfig,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub checks: Checks,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Spec-level invariants. Per-coordinate preconditions are checked at
    /// evaluation so that one bad grid point does not abort the run.
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return invalid("reps must be at least 1");
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return invalid("sigma must be positive and finite");
        }
        Ok(())
    }

    /// Grid points in `d`-major, then `s`, family and estimator order.
    pub fn expand(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &d in &self.d_grid {
            for s in &self.s_grid {
                for family in &self.theta_family {
                    for &estimator in &self.estimator {
                        out.push(GridPoint {
                            index: out.len(),
                            d,
                            s: s.clone(),
                            family: family.clone(),
                            estimator,
                        });
                    }
                }
            }
        }
        out
    }
}

/// One unresolved point of the experiment grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub d: usize,
    pub s: SparsityExpr,
    pub family: FamilySpec,
    pub estimator: EstimatorKind,
}

/// A fully specified Monte Carlo evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct Coordinate {
    pub d: usize,
    pub s: usize,
    pub sigma: f64,
    pub family: FamilySpec,
    pub estimator: EstimatorKind,
    pub config: EstimatorConfig,
    pub reps: usize,
    pub seed: u64,
}

impl Coordinate {
    pub fn new(d: usize, s: usize, family: FamilySpec, estimator: EstimatorKind) -> Self {
        Self {
            d,
            s,
            sigma: 1.0,
            family,
            estimator,
            config: EstimatorConfig::practical(),
            reps: DEFAULT_REPS,
            seed: DEFAULT_SEED,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_config(mut self, config: EstimatorConfig) -> Self {
        self.config = config;
        self
    }

    pub fn with_reps(mut self, reps: usize) -> Self {
        self.reps = reps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}
