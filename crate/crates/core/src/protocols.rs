//! Key-value perturbation protocols over weighted bipartite graphs.
//!
//! Each participant samples one item index uniformly and reports a tuple
//! describing its edge to that item: `(0,0)` for "no edge", `(1,1)` or
//! `(1,−1)` for an edge with a discretized, perturbed weight. Three client
//! variants are implemented:
//!
//! - LPP: a missing edge is reported with a dummy weight drawn from
//!   `U[−1, 1]`.
//! - LPP‡: the dummy weight is always 0.
//! - PCKV-UE: the tuple is perturbed through the unary-encoding kernel with
//!   parameters `(a, b, p)`.
//!
//! The collector groups reports by index and inverts the matching
//! three-answer kernel. Degree and weight estimates are Horvitz–Thompson
//! sums (`m` times the per-report estimates of the sampled index), so they
//! are unbiased for the edge count and weight sum of each item.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_budget, Error, Result};
use crate::estimators::{closed_form_estimate, reported_pair_forms, Affine, PairEstimate};
use crate::graph::{averages_from, weight_level, WeightedBipartiteGraph};
use crate::matrix::ProbabilityMatrix;
use crate::mechanisms::{build_matrix, sample_row, MechanismSpec};
use crate::rng::Streams;
use crate::vectors::CountVector;

/// Tolerance on the `ab/((1−a)(1−b)) = e^{ε₁}` constraint.
pub const UE_CONSTRAINT_TOLERANCE: f64 = 1e-9;

/// One of the three reportable tuples. The discriminant is the answer index
/// used by the three-answer kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tuple {
    /// `(0, 0)`.
    Absent = 0,
    /// `(1, 1)`.
    Plus = 1,
    /// `(1, −1)`.
    Minus = 2,
}

impl Tuple {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Self::Absent),
            1 => Some(Self::Plus),
            2 => Some(Self::Minus),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Self::Absent => 0,
            _ => 1,
        }
    }

    pub fn value(self) -> i8 {
        match self {
            Self::Absent => 0,
            Self::Plus => 1,
            Self::Minus => -1,
        }
    }

    pub fn from_parts(bit: i64, value: i64) -> Option<Self> {
        match (bit, value) {
            (0, 0) => Some(Self::Absent),
            (1, 1) => Some(Self::Plus),
            (1, -1) => Some(Self::Minus),
            _ => None,
        }
    }

    fn from_sign(sign: i8) -> Self {
        if sign > 0 {
            Self::Plus
        } else {
            Self::Minus
        }
    }
}

/// A participant's report for one sampled item (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub participant: usize,
    pub item: usize,
    pub tuple: Tuple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolVariant {
    Lpp,
    LppDagger,
    PckvUe,
}

impl ProtocolVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Lpp => "lpp",
            Self::LppDagger => "lpp_dagger",
            Self::PckvUe => "pckv_ue",
        }
    }
}

/// Unary-encoding kernel parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UeParams {
    /// Probability that an edge slot stays non-zero.
    pub a: f64,
    /// Probability that an empty slot stays `(0,0)`.
    pub b: f64,
    /// Probability that a non-zero slot keeps its sign.
    pub p: f64,
}

fn check_half_open(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && (0.5..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(Error::ParameterOutOfRange { name, value: v, range: "[1/2, 1]" })
    }
}

impl UeParams {
    pub fn new(a: f64, b: f64, p: f64) -> Result<Self> {
        Ok(Self { a: check_half_open("a", a)?, b: check_half_open("b", b)?, p: check_half_open("p", p)? })
    }

    /// `a = b = √e^{ε₁} / (√e^{ε₁} + 1)`, `p = e^{ε₂} / (e^{ε₂} + 1)`.
    pub fn symmetric(epsilon1: f64, epsilon2: f64) -> Result<Self> {
        let s = (check_budget(epsilon1)? / 2.0).exp();
        let a = s / (s + 1.0);
        Self::new(a, a, logistic(check_budget(epsilon2)?))
    }

    /// Solves `b` from `ab/((1−a)(1−b)) = e^{ε₁}` for a given `a`.
    pub fn from_budgets(epsilon1: f64, epsilon2: f64, a: f64) -> Result<Self> {
        let e = check_budget(epsilon1)?.exp();
        check_half_open("a", a)?;
        if a >= 1.0 {
            return Err(Error::InvalidProtocol("a = 1 leaves b undetermined".into()));
        }
        let r = e * (1.0 - a) / a;
        Self::new(a, r / (1.0 + r), logistic(check_budget(epsilon2)?))
    }

    /// `ln(ab/((1−a)(1−b)))`; infinite when `a` or `b` is 1.
    pub fn epsilon1(&self) -> f64 {
        (self.a * self.b / ((1.0 - self.a) * (1.0 - self.b))).ln()
    }

    /// `ln(p/(1−p))`; infinite when `p` is 1.
    pub fn epsilon2(&self) -> f64 {
        (self.p / (1.0 - self.p)).ln()
    }
}

/// `e^ε / (e^ε + 1)`, stable for large `ε`.
pub fn logistic(epsilon: f64) -> f64 {
    1.0 / (1.0 + (-epsilon).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub variant: ProtocolVariant,
    pub epsilon1: f64,
    pub epsilon2: f64,
    /// Set for PCKV-UE only.
    pub ue: Option<UeParams>,
}

impl ProtocolParams {
    pub fn lpp(epsilon1: f64, epsilon2: f64) -> Result<Self> {
        Ok(Self {
            variant: ProtocolVariant::Lpp,
            epsilon1: check_budget(epsilon1)?,
            epsilon2: check_budget(epsilon2)?,
            ue: None,
        })
    }

    pub fn lpp_dagger(epsilon1: f64, epsilon2: f64) -> Result<Self> {
        Ok(Self { variant: ProtocolVariant::LppDagger, ..Self::lpp(epsilon1, epsilon2)? })
    }

    /// PCKV-UE from explicit `(a, b, p)`. The budgets are derived from them.
    pub fn pckv_ue(ue: UeParams) -> Self {
        Self { variant: ProtocolVariant::PckvUe, epsilon1: ue.epsilon1(), epsilon2: ue.epsilon2(), ue: Some(ue) }
    }

    /// PCKV-UE with `a = b`.
    pub fn pckv_ue_symmetric(epsilon1: f64, epsilon2: f64) -> Result<Self> {
        Ok(Self::pckv_ue(UeParams::symmetric(epsilon1, epsilon2)?))
    }

    /// `p₁ = e^{ε₁}/(e^{ε₁}+1)`.
    pub fn p1(&self) -> f64 {
        logistic(self.epsilon1)
    }

    /// `q = e^{ε₂}/(e^{ε₂}+1)`.
    pub fn q(&self) -> f64 {
        logistic(self.epsilon2)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.variant, self.ue) {
            (ProtocolVariant::PckvUe, Some(ue)) => {
                UeParams::new(ue.a, ue.b, ue.p)?;
                let e1 = ue.epsilon1();
                if e1.is_finite() && ((e1 - self.epsilon1).abs() > UE_CONSTRAINT_TOLERANCE) {
                    return Err(Error::InvalidProtocol(format!(
                        "ab/((1-a)(1-b)) = e^{e1} does not match epsilon1 = {}",
                        self.epsilon1
                    )));
                }
                Ok(())
            }
            (ProtocolVariant::PckvUe, None) => Err(Error::InvalidProtocol("PCKV-UE needs (a, b, p)".into())),
            (_, Some(_)) => Err(Error::InvalidProtocol("(a, b, p) only applies to PCKV-UE".into())),
            (_, None) => {
                check_budget(self.epsilon1)?;
                check_budget(self.epsilon2)?;
                Ok(())
            }
        }
    }

    /// Three-answer kernel the collector inverts.
    pub fn estimation_spec(&self) -> Result<MechanismSpec> {
        self.validate()?;
        Ok(match self.variant {
            ProtocolVariant::Lpp | ProtocolVariant::LppDagger => {
                MechanismSpec::Rr3DoubleDagger { p1: self.p1(), p2: self.q() }
            }
            ProtocolVariant::PckvUe => {
                let ue = self.ue.expect("validated");
                MechanismSpec::Rr3Club { p1: ue.b, p2: ue.a, q: ue.p }
            }
        })
    }
}

/// `Q(q, w) = (1+w)q/2 + (1−w)(1−q)/2`: probability that a weight `w`
/// reports `+1` after discretization and a keep-with-`q` flip.
pub fn signed_keep_probability(q: f64, w: f64) -> f64 {
    (1.0 + w) * q / 2.0 + (1.0 - w) * (1.0 - q) / 2.0
}

/// LPP kernel for edge weight `w` and dummy weight `wtilde`. Rows are the
/// true states (no edge, edge reporting `+1`, edge reporting `−1`) in that
/// order; row 2 is row 1 with the sign columns swapped.
pub fn lpp_matrix(epsilon1: f64, epsilon2: f64, w: f64, wtilde: f64) -> Result<ProbabilityMatrix> {
    let p1 = logistic(epsilon1);
    let q = logistic(epsilon2);
    let q1 = signed_keep_probability(q, wtilde);
    let q2 = signed_keep_probability(q, w);
    ProbabilityMatrix::constructed(
        vec![
            vec![p1, (1.0 - p1) * q1, (1.0 - p1) * (1.0 - q1)],
            vec![1.0 - p1, p1 * q2, p1 * (1.0 - q2)],
            vec![1.0 - p1, p1 * (1.0 - q2), p1 * q2],
        ],
        format!("lpp(eps1={epsilon1}, eps2={epsilon2}, w={w}, wtilde={wtilde})"),
    )
}

/// LPP‡ kernel for edge weight `w`: `RR3DoubleDagger(p₁, Q(q, w))`.
pub fn lppdagger_matrix(epsilon1: f64, epsilon2: f64, w: f64) -> Result<ProbabilityMatrix> {
    build_matrix(&MechanismSpec::Rr3DoubleDagger {
        p1: logistic(epsilon1),
        p2: signed_keep_probability(logistic(epsilon2), w),
    })
}

/// PCKV-UE kernel: rows `(b, (1−b)/2, (1−b)/2)`, `(1−a, ap, a(1−p))`,
/// `(1−a, a(1−p), ap)`.
pub fn ue_matrix(ue: &UeParams) -> Result<ProbabilityMatrix> {
    build_matrix(&MechanismSpec::Rr3Club { p1: ue.b, p2: ue.a, q: ue.p })
}

/// Discretizes `w` to `±1` with `P(+1) = (1+w)/2`.
pub fn discretize<R: Rng + ?Sized>(w: f64, rng: &mut R) -> i8 {
    if rng.random::<f64>() < (1.0 + w) / 2.0 {
        1
    } else {
        -1
    }
}

fn check_weight(w: f64) -> Result<f64> {
    if w.is_finite() && (-1.0..=1.0).contains(&w) {
        Ok(w)
    } else {
        Err(Error::InvalidGraph(format!("weight {w} is outside [-1, 1]")))
    }
}

/// Discretizes `w`, then keeps the sign with probability `q`.
pub fn perturb_weight<R: Rng + ?Sized>(w: f64, q: f64, rng: &mut R) -> i8 {
    let s = discretize(w, rng);
    if rng.random::<f64>() < q {
        s
    } else {
        -s
    }
}

/// Value perturbation: sample an index uniformly, then discretize and flip
/// its weight with `q = e^{ε₂}/(e^{ε₂}+1)`.
pub fn vpp<R: Rng + ?Sized>(weights: &[f64], epsilon2: f64, rng: &mut R) -> Result<(usize, i8)> {
    if weights.is_empty() {
        return Err(Error::InvalidGraph("weight row is empty".into()));
    }
    for &w in weights {
        check_weight(w)?;
    }
    let q = logistic(check_budget(epsilon2)?);
    let j = rng.random_range(0..weights.len());
    Ok((j, perturb_weight(weights[j], q, rng)))
}

/// Dummy weight used when the sampled edge does not exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DummyWeight {
    /// `w̃ ~ U[−1, 1]`.
    Uniform,
    /// `w̃ = 0`.
    Zero,
}

/// LPP/LPP‡ response for a known state (`weight = None` for no edge).
pub fn lpp_respond<R: Rng + ?Sized>(weight: Option<f64>, params: &ProtocolParams, rng: &mut R) -> Result<Tuple> {
    let dummy = match params.variant {
        ProtocolVariant::Lpp => DummyWeight::Uniform,
        ProtocolVariant::LppDagger => DummyWeight::Zero,
        ProtocolVariant::PckvUe => {
            return Err(Error::InvalidProtocol("use pckv_client for PCKV-UE".into()));
        }
    };
    let p1 = params.p1();
    let q = params.q();
    Ok(match weight {
        Some(w) => {
            let w = check_weight(w)?;
            if rng.random::<f64>() < p1 {
                Tuple::from_sign(perturb_weight(w, q, rng))
            } else {
                Tuple::Absent
            }
        }
        None => {
            if rng.random::<f64>() < p1 {
                Tuple::Absent
            } else {
                let wt = match dummy {
                    DummyWeight::Uniform => rng.random_range(-1.0..=1.0),
                    DummyWeight::Zero => 0.0,
                };
                Tuple::from_sign(perturb_weight(wt, q, rng))
            }
        }
    })
}

fn sample_item<R: Rng + ?Sized>(
    graph: &WeightedBipartiteGraph,
    participant: usize,
    rng: &mut R,
) -> Result<(usize, Option<f64>)> {
    if participant >= graph.n() {
        return Err(Error::InvalidGraph(format!("participant {participant} out of range for n = {}", graph.n())));
    }
    let j = rng.random_range(0..graph.m());
    Ok((j, graph.edge_weight(participant, j)))
}

/// LPP or LPP‡ client for one participant.
pub fn lpp_client<R: Rng + ?Sized>(
    graph: &WeightedBipartiteGraph,
    participant: usize,
    params: &ProtocolParams,
    rng: &mut R,
) -> Result<Report> {
    let (item, weight) = sample_item(graph, participant, rng)?;
    Ok(Report { participant, item, tuple: lpp_respond(weight, params, rng)? })
}

/// Passes a tuple through the UE kernel.
pub fn pckv_perturb<R: Rng + ?Sized>(tuple: Tuple, ue: &UeParams, rng: &mut R) -> Result<Tuple> {
    let kernel = ue_matrix(ue)?;
    Ok(pckv_perturb_with(tuple, &kernel, rng))
}

fn pckv_perturb_with<R: Rng + ?Sized>(tuple: Tuple, kernel: &ProbabilityMatrix, rng: &mut R) -> Tuple {
    Tuple::from_index(sample_row(kernel.row(tuple.index()), rng)).expect("three-answer kernel")
}

/// PCKV-UE client: sample an index, discretize the weight if the edge
/// exists, then perturb the tuple through the UE kernel.
///
/// Uniform index sampling replaces the padding-and-sampling front end of
/// the original protocol.
pub fn pckv_client<R: Rng + ?Sized>(
    graph: &WeightedBipartiteGraph,
    participant: usize,
    params: &ProtocolParams,
    rng: &mut R,
) -> Result<Report> {
    let ue = params.ue.ok_or_else(|| Error::InvalidProtocol("PCKV-UE needs (a, b, p)".into()))?;
    let kernel = ue_matrix(&ue)?;
    let (item, weight) = sample_item(graph, participant, rng)?;
    let tuple = match weight {
        Some(w) => Tuple::from_sign(discretize(w, rng)),
        None => Tuple::Absent,
    };
    Ok(Report { participant, item, tuple: pckv_perturb_with(tuple, &kernel, rng) })
}

/// Runs the protocol for every participant. Participant `i` draws from
/// stream `(purpose, replicate, i)`, so the output does not depend on the
/// order in which participants are processed.
pub fn run_protocol(
    graph: &WeightedBipartiteGraph,
    params: &ProtocolParams,
    streams: &Streams,
    purpose: &str,
    replicate: u64,
) -> Result<Vec<Report>> {
    params.validate()?;
    let kernel = match params.ue {
        Some(ue) if params.variant == ProtocolVariant::PckvUe => Some(ue_matrix(&ue)?),
        _ => None,
    };
    (0..graph.n())
        .map(|i| {
            let mut rng = streams.rng(purpose, replicate, i as u64);
            match &kernel {
                Some(k) => {
                    let (item, weight) = sample_item(graph, i, &mut rng)?;
                    let tuple = match weight {
                        Some(w) => Tuple::from_sign(discretize(w, &mut rng)),
                        None => Tuple::Absent,
                    };
                    Ok(Report { participant: i, item, tuple: pckv_perturb_with(tuple, k, &mut rng) })
                }
                None => lpp_client(graph, i, params, &mut rng),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Aggregation

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarEstimate {
    pub estimate: f64,
    /// Empirical Horvitz–Thompson variance; infinite when the item received
    /// no reports.
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemEstimate {
    /// 0-based item index.
    pub item: usize,
    pub reports: u64,
    /// Tuple counts `(N₀, N₁, N₂)` among this item's reports.
    pub counts: [u64; 3],
    /// Edge count at the item.
    pub degree: ScalarEstimate,
    /// Sum of edge weights at the item.
    pub weight: ScalarEstimate,
    /// `k̂ / n`. A ratio of unbiased estimators: consistent, not unbiased.
    pub frequency: f64,
    /// `ŵ / k̂`. Consistent, not unbiased; NaN when `k̂ = 0`.
    pub mean: f64,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEstimates {
    pub variant: ProtocolVariant,
    pub n: usize,
    pub m: usize,
    pub items: Vec<ItemEstimate>,
    pub average_degree: f64,
    pub average_weight: f64,
}

impl GraphEstimates {
    pub fn degrees(&self) -> Vec<f64> {
        self.items.iter().map(|i| i.degree.estimate).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.items.iter().map(|i| i.weight.estimate).collect()
    }

    /// JSON keyed by 1-based item index, each entry holding `degree` and
    /// `weight` as `{estimate, variance, flags}`. Infinite variances become
    /// `null`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut items = serde_json::Map::new();
        for it in &self.items {
            let scalar = |s: &ScalarEstimate| {
                serde_json::json!({
                    "estimate": s.estimate,
                    "variance": if s.variance.is_finite() { serde_json::json!(s.variance) } else { serde_json::Value::Null },
                    "flags": it.flags,
                })
            };
            items.insert(
                (it.item + 1).to_string(),
                serde_json::json!({
                    "reports": it.reports,
                    "degree": scalar(&it.degree),
                    "weight": scalar(&it.weight),
                    "frequency": finite_or_null(it.frequency),
                    "mean": finite_or_null(it.mean),
                }),
            );
        }
        serde_json::json!({
            "variant": self.variant.as_str(),
            "n": self.n,
            "m": self.m,
            "average_degree": self.average_degree,
            "average_weight": self.average_weight,
            "items": items,
        })
    }
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::Value::Null
    }
}

/// Per-report contributions `(degree, weight)` for each tuple, before the
/// factor `m`.
fn report_contributions(form0: &Affine, form1: &Affine) -> [(f64, f64); 3] {
    let unit = |t: usize| {
        let mut e = [0.0; 3];
        e[t] = 1.0;
        e
    };
    let mut out = [(0.0, 0.0); 3];
    for (t, slot) in out.iter_mut().enumerate() {
        let e = unit(t);
        let pi0 = form0.eval(&e);
        let pi1 = form1.eval(&e);
        let pi2 = 1.0 - pi0 - pi1;
        *slot = (1.0 - pi0, pi1 - pi2);
    }
    out
}

/// Estimates per-item degree and weight from one report per participant.
///
/// For item `j`, `k̂ⱼ = m·nⱼ·(1 − π̂₀)` and `ŵⱼ = m·nⱼ·(π̂₁ − π̂₂)`, where
/// `nⱼ` is the number of reports for `j` and `π̂` is estimated from those
/// reports alone. The LPP dummy weight averages to zero, so LPP reuses the
/// LPP‡ estimator. Variances are the empirical Horvitz–Thompson estimate
/// `n/(n−1) Σᵢ (Yᵢ − Ȳ)²` over each participant's contribution `Yᵢ`.
pub fn aggregate(reports: &[Report], params: &ProtocolParams, n: usize, m: usize) -> Result<GraphEstimates> {
    if reports.len() != n {
        return Err(Error::InvalidProtocol(format!(
            "expected one report per participant ({n}), got {}",
            reports.len()
        )));
    }
    if m == 0 {
        return Err(Error::InvalidGraph("need at least one item".into()));
    }
    let spec = params.estimation_spec()?;
    let (form0, form1, _) = reported_pair_forms(&spec)?;
    let contrib = report_contributions(&form0, &form1);
    let mf = m as f64;

    let mut counts = vec![[0u64; 3]; m];
    for r in reports {
        if r.item >= m {
            return Err(Error::InvalidProtocol(format!("report item {} out of range for m = {m}", r.item)));
        }
        counts[r.item][r.tuple.index()] += 1;
    }
    let nf = n as f64;
    let items = counts
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let reports_j: u64 = c.iter().sum();
            let (mut k, mut w, mut k2, mut w2) = (0.0, 0.0, 0.0, 0.0);
            for t in 0..3 {
                let (dk, dw) = (mf * contrib[t].0, mf * contrib[t].1);
                let ct = c[t] as f64;
                k += ct * dk;
                w += ct * dw;
                k2 += ct * dk * dk;
                w2 += ct * dw * dw;
            }
            let mut flags = Vec::new();
            let (kv, wv) = if reports_j == 0 {
                flags.push("no_reports".to_string());
                (f64::INFINITY, f64::INFINITY)
            } else if n < 2 {
                (f64::INFINITY, f64::INFINITY)
            } else {
                // Participants reporting other items contribute Y = 0.
                let hv = |s: f64, s2: f64| (nf / (nf - 1.0) * (s2 - s * s / nf)).max(0.0);
                (hv(k, k2), hv(w, w2))
            };
            if reports_j == 0 {
                k = 0.0;
                w = 0.0;
            }
            ItemEstimate {
                item: j,
                reports: reports_j,
                counts: *c,
                degree: ScalarEstimate { estimate: k, variance: kv },
                weight: ScalarEstimate { estimate: w, variance: wv },
                frequency: if n > 0 { k / nf } else { f64::NAN },
                mean: if k != 0.0 { w / k } else { f64::NAN },
                flags,
            }
        })
        .collect::<Vec<_>>();
    let k: Vec<f64> = items.iter().map(|i| i.degree.estimate).collect();
    let w: Vec<f64> = items.iter().map(|i| i.weight.estimate).collect();
    let (average_degree, average_weight) = averages_from(n, m, &k, &w)?;
    Ok(GraphEstimates { variant: params.variant, n, m, items, average_degree, average_weight })
}

/// Reports as CSV `participant,j,bit,value` with 1-based indices.
pub fn reports_to_csv(reports: &[Report]) -> String {
    let mut out = String::from("participant,j,bit,value\n");
    for r in reports {
        out.push_str(&format!("{},{},{},{}\n", r.participant + 1, r.item + 1, r.tuple.bit(), r.tuple.value()));
    }
    out
}

/// Parses [`reports_to_csv`] output. The header line is required.
pub fn reports_from_csv(text: &str) -> Result<Vec<Report>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "participant,j,bit,value" => {}
        Some((k, h)) => {
            return Err(Error::Parse {
                line: k + 1,
                message: format!("expected header `participant,j,bit,value`, got `{}`", h.trim()),
            })
        }
        None => return Err(Error::Parse { line: 1, message: "missing header".into() }),
    }
    let mut out = Vec::new();
    for (k, line) in lines {
        let err = |message: String| Error::Parse { line: k + 1, message };
        let fields: Vec<&str> = line.trim().split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, got {}", fields.len())));
        }
        let num = |s: &str| s.parse::<i64>().map_err(|e| err(format!("`{s}`: {e}")));
        let participant = num(fields[0])?;
        let item = num(fields[1])?;
        if participant < 1 || item < 1 {
            return Err(err("indices are 1-based".into()));
        }
        let tuple = Tuple::from_parts(num(fields[2])?, num(fields[3])?)
            .ok_or_else(|| err(format!("`({},{})` is not a valid tuple", fields[2], fields[3])))?;
        out.push(Report { participant: (participant - 1) as usize, item: (item - 1) as usize, tuple });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Weight-category survey

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyItem {
    pub item: usize,
    /// Participants whose single edge is to this item. Exact: the item
    /// index is reported in the clear.
    pub participants: u64,
    pub counts: [u64; 3],
    /// Estimated proportions of weight levels `0, 0.5, 1`; `None` when no
    /// participant reported this item.
    pub proportions: Option<PairEstimate>,
    /// `participants · (0.5 π̂₁ + π̂₂)`.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyEstimates {
    pub mechanism: MechanismSpec,
    pub items: Vec<SurveyItem>,
}

/// Each participant has one edge with weight in `{0, 0.5, 1}` and reports
/// its item with the weight level perturbed through `mechanism` (EWRR over
/// three answers or `RR3Dagger`). The collector recovers per-item level
/// proportions with the closed-form estimator.
pub fn weight_level_survey(
    graph: &WeightedBipartiteGraph,
    mechanism: &MechanismSpec,
    streams: &Streams,
    replicate: u64,
) -> Result<SurveyEstimates> {
    match mechanism {
        MechanismSpec::Ewrr { n: 3, .. } | MechanismSpec::Rr3Dagger { .. } => {}
        other => {
            return Err(Error::InvalidProtocol(format!("{other} is not a supported survey mechanism")));
        }
    }
    mechanism.validate_for_estimation()?;
    let kernel = build_matrix(mechanism)?;
    let mut counts: BTreeMap<usize, [u64; 3]> = BTreeMap::new();
    for i in 0..graph.n() {
        let [(j, w)] = graph.participant_edges(i) else {
            return Err(Error::InvalidGraph(format!("participant {i} must have exactly one edge")));
        };
        let level =
            weight_level(*w).ok_or_else(|| Error::InvalidGraph(format!("weight {w} is not one of 0, 0.5, 1")))?;
        let mut rng = streams.rng("survey", replicate, i as u64);
        let reported = sample_row(kernel.row(level), &mut rng);
        counts.entry(*j).or_insert([0; 3])[reported] += 1;
    }
    let items = (0..graph.m())
        .map(|j| {
            let c = counts.get(&j).copied().unwrap_or([0; 3]);
            let total: u64 = c.iter().sum();
            let proportions =
                if total == 0 { None } else { Some(closed_form_estimate(mechanism, &CountVector::new(c.to_vec())?)?) };
            let weight = proportions.as_ref().map_or(0.0, |p| {
                let v = p.values();
                total as f64 * (0.5 * v[1] + v[2])
            });
            Ok(SurveyItem { item: j, participants: total, counts: c, proportions, weight })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SurveyEstimates { mechanism: mechanism.clone(), items })
}
