//! TOML experiment configuration with line-numbered validation errors.

use std::fmt;
use std::ops::Range;

use cbdlab_core::domination::{OperatorSpec, MAX_KERNEL_CELLS};
use cbdlab_core::grid::MAX_DIM;
use cbdlab_core::norms::dual_exponent;
use cbdlab_core::sparse::PairFormConfig;
use cbdlab_core::verify::{VerifyConfig, SUITES};
use cbdlab_core::weights::WeightSpec;
use serde::Deserialize;
use toml::Spanned;

/// A configuration problem located at a line of the source file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.path, l, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

/// First line assigning `key`, for errors raised after deserialization.
fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| l.trim_start().strip_prefix(key).is_some_and(|r| r.trim_start().starts_with('='))).map(|i| i + 1)
}

fn section_line(text: &str, name: &str) -> Option<usize> {
    let header = format!("[{name}]");
    text.lines().position(|l| l.trim() == header).map(|i| i + 1)
}

/// Exponent in `[1, ∞]`, written as a number or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(try_from = "ExponentRepr")]
pub struct Exponent(pub f64);

#[derive(Deserialize)]
#[serde(untagged)]
enum ExponentRepr {
    Number(f64),
    Int(i64),
    Text(String),
}

impl TryFrom<ExponentRepr> for Exponent {
    type Error = String;
    fn try_from(v: ExponentRepr) -> Result<Self, String> {
        let x = match v {
            ExponentRepr::Number(x) => x,
            ExponentRepr::Int(i) => i as f64,
            ExponentRepr::Text(s) if s == "inf" => f64::INFINITY,
            ExponentRepr::Text(s) => return Err(format!("exponent must be a number ≥ 1 or \"inf\", got \"{s}\"")),
        };
        if x >= 1.0 {
            Ok(Exponent(x))
        } else {
            Err(format!("exponent must be ≥ 1, got {x}"))
        }
    }
}

macro_rules! bounded {
    ($name:ident, $ty:ty, $check:expr, $what:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
        #[serde(try_from = $what)]
        pub struct $name(pub $ty);

        impl TryFrom<$ty> for $name {
            type Error = String;
            fn try_from(v: $ty) -> Result<Self, String> {
                let check: fn($ty) -> Result<(), String> = $check;
                check(v).map(|_| $name(v))
            }
        }
    };
}

bounded!(Dim, usize, |v| if (1..=MAX_DIM).contains(&v) { Ok(()) } else { Err(format!("dim must be in 1..={MAX_DIM}, got {v}")) }, "usize");
bounded!(Depth, u32, |v| if v <= 24 { Ok(()) } else { Err(format!("depth must be at most 24, got {v}")) }, "u32");
bounded!(Count, usize, |v| if (1..=64).contains(&v) { Ok(()) } else { Err(format!("must be in 1..=64, got {v}")) }, "usize");
bounded!(Unit, f64, |v| if v > 0.0 && v < 1.0 { Ok(()) } else { Err(format!("must lie in (0, 1), got {v}")) }, "f64");
bounded!(Tol, f64, |v| if v > 0.0 && v <= 0.1 { Ok(()) } else { Err(format!("must lie in (0, 0.1], got {v}")) }, "f64");
bounded!(Open, f64, |v| if v > 1.0 && v.is_finite() { Ok(()) } else { Err(format!("must lie in (1, ∞), got {v}")) }, "f64");

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub dim: Dim,
    pub depth: Spanned<Depth>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { dim: Dim(1), depth: Spanned::new(0..0, Depth(8)) }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValueSection {
    /// Outer dimension `n`.
    pub n: Spanned<Count>,
    /// Inner dimension `m` and exponent `r` of `E = (ℝᵐ, ℓʳ)`.
    pub m: Count,
    pub r: Exponent,
}

impl Default for ValueSection {
    fn default() -> Self {
        ValueSection { n: Spanned::new(0..0, Count(2)), m: Count(1), r: Exponent(2.0) }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub epsilon: Spanned<Unit>,
    pub mvee_tol: Tol,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection { epsilon: Spanned::new(0..0, Unit(0.05)), mvee_tol: Tol(1e-6) }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsSection {
    /// Weights to analyse; the built-in battery when absent.
    pub specs: Option<Vec<WeightSpec>>,
    pub direction_count: Count,
    /// Compute weighted operator norms of the configured operator.
    pub operator_norms: bool,
}

impl Default for WeightsSection {
    fn default() -> Self {
        WeightsSection { specs: None, direction_count: Count(64), operator_norms: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommutatorKind {
    Classical,
    Iterated,
    Mixed,
    Power,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommutatorSection {
    pub kind: CommutatorKind,
    /// Order of iterated commutators.
    pub k: Spanned<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub s: Open,
    pub t: Open,
    pub p: Spanned<Open>,
    /// Number of logarithmic singularities per random multiplier.
    pub centres: Count,
}

impl Default for CommutatorSection {
    fn default() -> Self {
        CommutatorSection {
            kind: CommutatorKind::Classical,
            k: Spanned::new(0..0, 2),
            alpha: 0.3,
            beta: 0.5,
            s: Open(4.0),
            t: Open(4.0),
            p: Spanned::new(0..0, Open(2.0)),
            centres: Count(2),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquivalenceSection {
    pub p: Exponent,
    pub q: Exponent,
    pub delta: Unit,
    /// Stopping threshold `A`; the admissible default when absent.
    pub threshold: Option<Spanned<f64>>,
    pub instances: Count,
}

impl Default for EquivalenceSection {
    fn default() -> Self {
        EquivalenceSection { p: Exponent(1.0), q: Exponent(1.0), delta: Unit(0.5), threshold: None, instances: Count(10) }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub grid: GridSection,
    pub values: ValueSection,
    pub operator: Option<Spanned<OperatorSpec>>,
    pub pipeline: PipelineSection,
    pub weights: WeightsSection,
    pub commutator: CommutatorSection,
    pub equivalence: EquivalenceSection,
    pub verify: VerifyConfig,
}

impl ExperimentConfig {
    pub fn operator(&self) -> OperatorSpec {
        self.operator.as_ref().map(|o| o.get_ref().clone()).unwrap_or(OperatorSpec::HilbertPeriodic)
    }

    pub fn depth(&self) -> u32 {
        self.grid.depth.get_ref().0
    }

    pub fn n(&self) -> usize {
        self.values.n.get_ref().0
    }
}

/// Which cross-field checks apply to a subcommand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Needs {
    pub kernel: bool,
    pub pipeline: bool,
    pub commutator: bool,
    pub equivalence: bool,
    /// Weighted operator norms, which need the kernel when enabled.
    pub weights: bool,
}

pub fn parse(path: &str, text: &str, needs: Needs) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError {
        path: path.into(),
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    let err = |span: Range<usize>, message: String| ConfigError {
        path: path.into(),
        line: (span.end > 0).then(|| line_of(text, span.start)),
        message,
    };
    let located = |line: Option<usize>, message: String| ConfigError { path: path.into(), line, message };
    let d = cfg.grid.dim.0;
    let cells_bits = d as u32 * cfg.depth();
    if cells_bits > 24 {
        return Err(err(cfg.grid.depth.span(), format!("grid.depth: dim·depth = {cells_bits} exceeds 24")));
    }
    if needs.kernel || (needs.weights && cfg.weights.operator_norms) {
        let cells = 1usize << cells_bits;
        if cells > MAX_KERNEL_CELLS {
            return Err(err(cfg.grid.depth.span(), format!("grid.depth: {cells} cells exceed the dense kernel limit {MAX_KERNEL_CELLS}")));
        }
        let op = cfg.operator();
        let span = cfg.operator.as_ref().map(|o| o.span()).unwrap_or(0..0);
        match op {
            OperatorSpec::HilbertPeriodic if d != 1 => {
                return Err(err(span, format!("operator.kind: hilbert_periodic needs grid.dim = 1, got {d}")))
            }
            OperatorSpec::DiniSmooth { .. } if d > 2 => {
                return Err(err(span, format!("operator.kind: dini_smooth needs grid.dim ≤ 2, got {d}")))
            }
            _ => {}
        }
    }
    if needs.pipeline {
        let eps = cfg.pipeline.epsilon.get_ref().0;
        let n = cfg.n();
        if n as f64 * eps >= 0.5 {
            return Err(err(cfg.pipeline.epsilon.span(), format!("pipeline.epsilon: need n·ε < 1/2, got n = {n}, ε = {eps}")));
        }
    }
    if needs.commutator {
        let c = &cfg.commutator;
        let k = *c.k.get_ref();
        if c.kind == CommutatorKind::Iterated && !(1..=8).contains(&k) {
            return Err(err(c.k.span(), format!("commutator.k: iterated order must be in 1..=8, got {k}")));
        }
        if c.kind == CommutatorKind::Power && (c.alpha < 0.0 || c.beta < 0.0 || c.alpha + c.beta > 1.0) {
            return Err(located(key_line(text, "alpha").or(key_line(text, "beta")), format!("commutator.alpha/beta: need α, β ≥ 0 and α + β ≤ 1, got {} and {}", c.alpha, c.beta)));
        }
        let p = c.p.get_ref().0;
        let lo = dual_exponent(c.t.0);
        if !(p > lo && p < c.s.0) {
            return Err(err(c.p.span(), format!("commutator.p: need t' < p < s, got p = {p}, t' = {lo}, s = {}", c.s.0)));
        }
    }
    if let Some(name) = cfg.verify.suites.iter().find(|n| !SUITES.iter().any(|(s, _)| s == n)) {
        let known: Vec<&str> = SUITES.iter().map(|(s, _)| *s).collect();
        return Err(located(key_line(text, "suites"), format!("verify.suites: unknown suite `{name}`, expected one of {}", known.join(", "))));
    }
    if needs.equivalence {
        pair_form(&cfg).map_err(|(span, message)| {
            if span.end > 0 {
                err(span, message)
            } else {
                located(section_line(text, "equivalence"), message)
            }
        })?;
    }
    Ok(cfg)
}

/// Stopping-construction parameters, with the threshold checked for admissibility.
pub fn pair_form(cfg: &ExperimentConfig) -> Result<PairFormConfig, (Range<usize>, String)> {
    let e = &cfg.equivalence;
    if !(e.p.0.is_finite() && e.q.0.is_finite()) {
        return Err((0..0, format!("equivalence.p/q: exponents must be finite, got {} and {}", e.p.0, e.q.0)));
    }
    let n = cfg.n();
    let mut pf = PairFormConfig::with_delta(n, e.p.0, e.q.0, e.delta.0).map_err(|x| (0..0, format!("equivalence: {x}")))?;
    if let Some(a) = &e.threshold {
        pf.threshold = *a.get_ref();
        if !pf.admissible(n) {
            return Err((
                a.span(),
                format!("equivalence.threshold: A = {} is not admissible for n = {n}, δ = {} (need A > 1 and n^(max(1,r)+r/2)/A^r ≤ 1-δ)", pf.threshold, e.delta.0),
            ));
        }
    }
    Ok(pf)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: Needs = Needs { kernel: true, pipeline: true, commutator: true, equivalence: true, weights: true };

    #[test]
    fn empty_config_uses_defaults() {
        let cfg = parse("c.toml", "", ALL).unwrap();
        assert_eq!(cfg.depth(), 8);
        assert_eq!(cfg.n(), 2);
        assert_eq!(cfg.operator(), OperatorSpec::HilbertPeriodic);
    }

    #[test]
    fn unknown_key_is_named_with_its_line() {
        let e = parse("c.toml", "seed = 1\n[grid]\ndepht = 3\n", ALL).unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.message.contains("depht"), "{}", e.message);
    }

    #[test]
    fn range_errors_point_at_the_value() {
        let e = parse("c.toml", "[pipeline]\n\nepsilon = 1.5\n", ALL).unwrap_err();
        assert_eq!(e.line, Some(3));
        let e = parse("c.toml", "[values]\nr = 0.5\n", ALL).unwrap_err();
        assert_eq!(e.line, Some(2));
    }

    #[test]
    fn cross_field_checks() {
        let e = parse("c.toml", "[values]\nn = 4\n[pipeline]\nepsilon = 0.2\n", ALL).unwrap_err();
        assert_eq!(e.line, Some(4));
        assert!(e.message.starts_with("pipeline.epsilon"));
        let e = parse("c.toml", "[grid]\ndim = 2\ndepth = 3\n", ALL).unwrap_err();
        assert!(e.message.contains("hilbert_periodic"));
        let e = parse("c.toml", "[commutator]\np = 6.0\n", ALL).unwrap_err();
        assert_eq!(e.line, Some(2));
        let e = parse("c.toml", "[equivalence]\nthreshold = 1.2\n", ALL).unwrap_err();
        assert!(e.message.contains("not admissible"), "{}", e.message);
    }

    #[test]
    fn unknown_suite_is_a_config_error() {
        let e = parse("c.toml", "[verify]\nmixed_pairs = 3\nsuites = [\"john\"]\n", ALL).unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.message.contains("`john`"));
    }

    #[test]
    fn exponent_accepts_inf() {
        let cfg = parse("c.toml", "[values]\nm = 2\nr = \"inf\"\n", ALL).unwrap();
        assert!(cfg.values.r.0.is_infinite());
        let cfg = parse("c.toml", "[values]\nr = 3\n", ALL).unwrap();
        assert_eq!(cfg.values.r.0, 3.0);
    }

    #[test]
    fn weight_specs_and_operator_tables() {
        let text = "[operator]\nkind = \"dini_smooth\"\ndelta = 0.25\n\n[[weights.specs]]\nkind = \"scalar_power\"\nalpha = 0.4\ncenter = 0.0\nn = 1\n";
        let cfg = parse("c.toml", text, ALL).unwrap();
        assert_eq!(cfg.operator(), OperatorSpec::DiniSmooth { c: 1.0, delta: 0.25 });
        assert_eq!(cfg.weights.specs.unwrap().len(), 1);
    }
}
