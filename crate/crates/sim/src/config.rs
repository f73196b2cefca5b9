//! Declarative experiment configs.
//!
//! One TOML file describes one experiment. The top-level `kind` selects the
//! experiment and the section of the same name carries its parameters:
//!
//! ```toml
//! kind = "frequency"
//! seed = 7
//!
//! [frequency]
//! truth = [0.5, 0.3, 0.2]
//! participants = 100000
//! replicates = 500
//!
//! [frequency.mechanism]
//! family = "ewrr"
//! p = 0.8
//! n = 3
//! ```
//!
//! Budgets accept either a number or a natural-log expression such as
//! `"ln 2"`. Every default is written back when the config is echoed.

use std::fmt;
use std::path::{Path, PathBuf};

use rrldp::graph::{generate_graph, GraphSpec, WeightedBipartiteGraph};
use rrldp::mechanisms::{build_matrix, MechanismSpec};
use rrldp::protocols::{ProtocolParams, ProtocolVariant, UeParams};
use rrldp::{Error as CoreError, ProportionVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{SimError, SimResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Frequency,
    Graph,
    Sweep,
    BudgetAudit,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Frequency => "frequency",
            Self::Graph => "graph",
            Self::Sweep => "sweep",
            Self::BudgetAudit => "budget-audit",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// A privacy budget read as a number or as `"ln x"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Epsilon(pub f64);

impl Epsilon {
    pub fn parse(text: &str) -> Result<Self, String> {
        let t = text.trim();
        let value = if let Some(rest) = t.strip_prefix("ln") {
            let arg = rest.trim().trim_start_matches('(').trim_end_matches(')').trim();
            let x: f64 = arg.parse().map_err(|_| format!("cannot parse `{t}` as ln(x)"))?;
            if !(x > 0.0) {
                return Err(format!("`{t}`: ln needs a positive argument"));
            }
            x.ln()
        } else {
            t.parse().map_err(|_| format!("cannot parse `{t}` as a budget"))?
        };
        if value.is_finite() && value > 0.0 {
            Ok(Self(value))
        } else {
            Err(format!("budget `{t}` must be positive and finite"))
        }
    }
}

impl Serialize for Epsilon {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) if v.is_finite() && v > 0.0 => Ok(Self(v)),
            Raw::Number(v) => Err(serde::de::Error::custom(format!("budget {v} must be positive and finite"))),
            Raw::Text(t) => Self::parse(&t).map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for Epsilon {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::parse(s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for result files; stdout when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<FrequencyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditConfig>,
}

fn default_seed() -> u64 {
    7
}

fn default_participants() -> u64 {
    100_000
}

fn default_frequency_replicates() -> usize {
    500
}

fn default_graph_replicates() -> usize {
    100
}

fn default_z_threshold() -> f64 {
    4.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorChoice {
    /// The family's closed form; inversion for custom kernels.
    #[default]
    ClosedForm,
    Inversion,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyConfig {
    pub mechanism: MechanismSpec,
    /// True proportions π.
    pub truth: Vec<f64>,
    #[serde(default = "default_participants")]
    pub participants: u64,
    #[serde(default = "default_frequency_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub estimator: EstimatorChoice,
    #[serde(default = "default_z_threshold")]
    pub z_threshold: f64,
    /// When set, `|empirical/analytic − 1|` must stay within this for the
    /// run to pass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub variant: ProtocolVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon1: Option<Epsilon>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon2: Option<Epsilon>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

impl ProtocolConfig {
    /// Resolves to protocol parameters. PCKV-UE takes either `(a, b, p)`
    /// or `(epsilon1, epsilon2)` with an optional `a`; `b` is solved from
    /// the budget when not given.
    pub fn resolve(&self) -> Result<ProtocolParams, String> {
        let core = |e: CoreError| e.to_string();
        match self.variant {
            ProtocolVariant::Lpp | ProtocolVariant::LppDagger => {
                if self.a.is_some() || self.b.is_some() || self.p.is_some() {
                    return Err("a, b and p only apply to pckv_ue".into());
                }
                let e1 = self.epsilon1.ok_or("epsilon1 is required")?.0;
                let e2 = self.epsilon2.ok_or("epsilon2 is required")?.0;
                if self.variant == ProtocolVariant::Lpp {
                    ProtocolParams::lpp(e1, e2).map_err(core)
                } else {
                    ProtocolParams::lpp_dagger(e1, e2).map_err(core)
                }
            }
            ProtocolVariant::PckvUe => {
                let params = match (self.a, self.b, self.p, self.epsilon1, self.epsilon2) {
                    (Some(a), Some(b), Some(p), _, _) => ProtocolParams::pckv_ue(UeParams::new(a, b, p).map_err(core)?),
                    (a, None, None, Some(e1), Some(e2)) => match a {
                        Some(a) => ProtocolParams::pckv_ue(UeParams::from_budgets(e1.0, e2.0, a).map_err(core)?),
                        None => ProtocolParams::pckv_ue_symmetric(e1.0, e2.0).map_err(core)?,
                    },
                    _ => return Err("pckv_ue needs either a, b, p or epsilon1, epsilon2 (with optional a)".into()),
                };
                let tol = rrldp::protocols::UE_CONSTRAINT_TOLERANCE;
                if let Some(e1) = self.epsilon1 {
                    if (params.epsilon1 - e1.0).abs() > tol {
                        return Err(format!(
                            "ab/((1-a)(1-b)) gives epsilon1 = {}, config says {}",
                            params.epsilon1, e1.0
                        ));
                    }
                }
                if let Some(e2) = self.epsilon2 {
                    if (params.epsilon2 - e2.0).abs() > tol {
                        return Err(format!("p gives epsilon2 = {}, config says {}", params.epsilon2, e2.0));
                    }
                }
                params.validate().map_err(core)?;
                Ok(params)
            }
        }
    }
}

/// Where the graph comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    /// Edge-list file; relative paths resolve against the config file.
    File { path: PathBuf },
    /// Random graph drawn from the master seed.
    Generated(GraphSpec),
    /// A small graph given inline as 1-based `[i, j, w]` triples, with every
    /// participant copied `copies` times.
    Replicated { n: usize, m: usize, edges: Vec<(usize, usize, f64)>, copies: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub protocol: ProtocolConfig,
    pub input: GraphSource,
    #[serde(default = "default_graph_replicates")]
    pub replicates: usize,
    #[serde(default = "default_z_threshold")]
    pub z_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepRegion {
    /// EWRR, `p` above `1/n`.
    Omega,
    /// EWRR, `p` below `1/n`.
    OmegaPrime,
    /// RR3Dagger, `p₂ < p₁`.
    DaggerLower,
}

fn default_n() -> usize {
    3
}

fn default_points() -> usize {
    50
}

fn default_pi0() -> f64 {
    0.5
}

fn default_sweep_total() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub region: SweepRegion,
    pub epsilon: Epsilon,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Curve points; for `dagger_lower`, lattice points per axis.
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_pi0")]
    pub pi0: f64,
    #[serde(default = "default_sweep_total")]
    pub participants: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditProtocol {
    Lpp,
    LppDagger,
    PckvUe,
    /// `lpp_budget − lppdagger_budget` against `ln((e^{ε₂}+1)/2)`.
    Margin,
}

impl AuditProtocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Lpp => "lpp",
            Self::LppDagger => "lpp_dagger",
            Self::PckvUe => "pckv_ue",
            Self::Margin => "margin",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditCase {
    pub protocol: AuditProtocol,
    pub epsilon1: Epsilon,
    pub epsilon2: Epsilon,
    /// PCKV-UE only; symmetric `a = b` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// Overrides the protocol's default tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

fn default_cases() -> Vec<AuditCase> {
    let ln = |x: f64| Epsilon(x.ln());
    let case = |protocol, e1, e2| AuditCase { protocol, epsilon1: e1, epsilon2: e2, a: None, tolerance: None };
    vec![
        case(AuditProtocol::Lpp, ln(2.0), ln(2.0)),
        case(AuditProtocol::LppDagger, ln(2.0), ln(2.0)),
        case(AuditProtocol::PckvUe, ln(4.0), ln(2.0)),
        case(AuditProtocol::Margin, Epsilon(1.0), Epsilon(1.0)),
    ]
}

fn default_grid_points() -> usize {
    201
}

fn default_dummy_points() -> usize {
    401
}

fn default_ue_positions() -> usize {
    3
}

fn default_random_pairs() -> usize {
    20
}

fn default_random_range() -> (f64, f64) {
    (0.05, 5.0)
}

pub const LPP_TOLERANCE: f64 = 1e-6;
pub const EXACT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default = "default_cases")]
    pub cases: Vec<AuditCase>,
    /// Points per axis of the `w`, `w̃` oracle grids.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Points in the dummy-weight grid.
    #[serde(default = "default_dummy_points")]
    pub dummy_grid_points: usize,
    /// Slots in the PCKV-UE enumeration oracle.
    #[serde(default = "default_ue_positions")]
    pub ue_positions: usize,
    /// Random `(ε₁, ε₂)` pairs for the LPP‡-versus-LPP comparison.
    #[serde(default = "default_random_pairs")]
    pub random_pairs: usize,
    #[serde(default = "default_random_range")]
    pub random_range: (f64, f64),
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            cases: default_cases(),
            grid_points: default_grid_points(),
            dummy_grid_points: default_dummy_points(),
            ue_positions: default_ue_positions(),
            random_pairs: default_random_pairs(),
            random_range: default_random_range(),
        }
    }
}

/// A config with its inputs resolved and checked.
#[derive(Debug, Clone)]
pub struct ValidatedConfig {
    pub config: ExperimentConfig,
    /// The loaded or generated graph for graph experiments.
    pub graph: Option<WeightedBipartiteGraph>,
    pub protocol: Option<ProtocolParams>,
}

fn field_err(field: impl Into<String>, message: impl fmt::Display) -> SimError {
    SimError::Config { field: field.into(), message: message.to_string() }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> SimResult<Self> {
        toml::from_str(text).map_err(|e| field_err("config", e.message().trim()))
    }

    pub fn load(path: &Path) -> SimResult<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| field_err("config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    /// Checks every parameter before anything is sampled. `base` resolves
    /// relative graph file paths.
    pub fn validate(&self, base: Option<&Path>) -> SimResult<ValidatedConfig> {
        let sections = [
            (ExperimentKind::Frequency, self.frequency.is_some()),
            (ExperimentKind::Graph, self.graph.is_some()),
            (ExperimentKind::Sweep, self.sweep.is_some()),
            (ExperimentKind::BudgetAudit, self.audit.is_some()),
        ];
        for (kind, present) in sections {
            let section = match kind {
                ExperimentKind::BudgetAudit => "audit",
                other => other.as_str(),
            };
            if kind != self.kind && present {
                return Err(field_err(section, format!("section does not apply to kind = \"{}\"", self.kind)));
            }
            if kind == self.kind && !present && kind != ExperimentKind::BudgetAudit {
                return Err(field_err(section, format!("kind = \"{}\" needs a [{section}] section", self.kind)));
            }
        }
        let mut out = ValidatedConfig { config: self.clone(), graph: None, protocol: None };
        match self.kind {
            ExperimentKind::Frequency => validate_frequency(self.frequency.as_ref().expect("checked"))?,
            ExperimentKind::Graph => {
                let g = self.graph.as_ref().expect("checked");
                let (params, graph) = validate_graph(g, self.seed, base)?;
                out.protocol = Some(params);
                out.graph = Some(graph);
            }
            ExperimentKind::Sweep => validate_sweep(self.sweep.as_ref().expect("checked"))?,
            ExperimentKind::BudgetAudit => {
                if out.config.audit.is_none() {
                    out.config.audit = Some(AuditConfig::default());
                }
                validate_audit(out.config.audit.as_ref().expect("set"))?;
            }
        }
        Ok(out)
    }
}

fn validate_z(field: &str, z: f64) -> SimResult<()> {
    if z.is_finite() && z > 0.0 {
        Ok(())
    } else {
        Err(field_err(field, format!("z threshold must be positive, got {z}")))
    }
}

fn validate_frequency(c: &FrequencyConfig) -> SimResult<()> {
    c.mechanism.validate_for_estimation().map_err(|e| field_err("frequency.mechanism", e))?;
    build_matrix(&c.mechanism).map_err(|e| field_err("frequency.mechanism", e))?;
    if c.truth.len() != c.mechanism.answers() {
        return Err(field_err(
            "frequency.truth",
            format!("expected {} proportions, got {}", c.mechanism.answers(), c.truth.len()),
        ));
    }
    ProportionVector::truth(c.truth.clone()).map_err(|e| field_err("frequency.truth", e))?;
    if c.participants == 0 {
        return Err(field_err("frequency.participants", "must be at least 1"));
    }
    if c.replicates < 2 {
        return Err(field_err("frequency.replicates", "must be at least 2"));
    }
    validate_z("frequency.z_threshold", c.z_threshold)?;
    if let Some(t) = c.variance_tolerance {
        if !(t.is_finite() && t > 0.0) {
            return Err(field_err("frequency.variance_tolerance", format!("must be positive, got {t}")));
        }
    }
    Ok(())
}

fn validate_graph(
    c: &GraphConfig,
    seed: u64,
    base: Option<&Path>,
) -> SimResult<(ProtocolParams, WeightedBipartiteGraph)> {
    let params = c.protocol.resolve().map_err(|e| field_err("graph.protocol", e))?;
    let graph = match &c.input {
        GraphSource::File { path } => {
            let full = match base {
                Some(b) if path.is_relative() => b.join(path),
                _ => path.clone(),
            };
            let text = std::fs::read_to_string(&full)
                .map_err(|e| field_err("graph.input.path", format!("{}: {e}", full.display())))?;
            WeightedBipartiteGraph::from_edge_list(&text).map_err(|e| field_err("graph.input.path", e))?
        }
        GraphSource::Generated(spec) => {
            spec.validate().map_err(|e| field_err("graph.input", e))?;
            generate_graph(spec, seed).map_err(|e| field_err("graph.input", e))?
        }
        GraphSource::Replicated { n, m, edges, copies } => {
            if *copies == 0 {
                return Err(field_err("graph.input.copies", "must be at least 1"));
            }
            let mut triples = Vec::with_capacity(edges.len());
            for &(i, j, w) in edges {
                if i == 0 || j == 0 {
                    return Err(field_err("graph.input.edges", "indices are 1-based"));
                }
                triples.push((i - 1, j - 1, w));
            }
            WeightedBipartiteGraph::from_triples(*n, *m, &triples)
                .and_then(|g| g.replicate_participants(*copies))
                .map_err(|e| field_err("graph.input", e))?
        }
    };
    if graph.n() < 2 {
        return Err(field_err("graph.input", "need at least 2 participants"));
    }
    if c.replicates < 2 {
        return Err(field_err("graph.replicates", "must be at least 2"));
    }
    validate_z("graph.z_threshold", c.z_threshold)?;
    Ok((params, graph))
}

fn validate_sweep(c: &SweepConfig) -> SimResult<()> {
    if !(0.0..=1.0).contains(&c.pi0) {
        return Err(field_err("sweep.pi0", format!("must be in [0, 1], got {}", c.pi0)));
    }
    if c.participants == 0 {
        return Err(field_err("sweep.participants", "must be at least 1"));
    }
    match c.region {
        SweepRegion::Omega | SweepRegion::OmegaPrime => {
            if c.n < 2 {
                return Err(field_err("sweep.n", "must be at least 2"));
            }
            if c.points < 2 {
                return Err(field_err("sweep.points", "must be at least 2"));
            }
        }
        SweepRegion::DaggerLower => {
            if c.n != 3 {
                return Err(field_err("sweep.n", "dagger_lower is a three-answer region"));
            }
            if c.points < 3 {
                return Err(field_err("sweep.points", "must be at least 3"));
            }
            if c.epsilon.0 >= 3f64.ln() {
                return Err(field_err("sweep.epsilon", "dagger_lower needs epsilon < ln 3"));
            }
        }
    }
    Ok(())
}

fn validate_audit(c: &AuditConfig) -> SimResult<()> {
    if c.grid_points < 2 {
        return Err(field_err("audit.grid_points", "must be at least 2"));
    }
    if c.dummy_grid_points < 2 {
        return Err(field_err("audit.dummy_grid_points", "must be at least 2"));
    }
    if !(2..=8).contains(&c.ue_positions) {
        return Err(field_err("audit.ue_positions", "must be between 2 and 8"));
    }
    let (lo, hi) = c.random_range;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
        return Err(field_err("audit.random_range", format!("need 0 < lo < hi, got ({lo}, {hi})")));
    }
    for (k, case) in c.cases.iter().enumerate() {
        if let Some(a) = case.a {
            if case.protocol != AuditProtocol::PckvUe {
                return Err(field_err(format!("audit.cases[{k}].a"), "only applies to pckv_ue"));
            }
            UeParams::from_budgets(case.epsilon1.0, case.epsilon2.0, a)
                .map_err(|e| field_err(format!("audit.cases[{k}].a"), e))?;
        }
        if let Some(t) = case.tolerance {
            if !(t.is_finite() && t > 0.0) {
                return Err(field_err(format!("audit.cases[{k}].tolerance"), "must be positive"));
            }
        }
    }
    Ok(())
}
