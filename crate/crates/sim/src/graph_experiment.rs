//! Repeated protocol runs over one graph, compared with the exact graph
//! statistics.

use rayon::prelude::*;
use rrldp::graph::{averages_from, WeightedBipartiteGraph};
use rrldp::privacy::{lpp_budget, lppdagger_budget, pckv_budget};
use rrldp::protocols::{aggregate, run_protocol, GraphEstimates, ProtocolParams, ProtocolVariant};
use rrldp::rng::Streams;
use rrldp::stats::{mean, sample_variance};
use serde::Serialize;

use crate::error::SimResult;
use crate::output::{num, Report, Table};
use crate::summary::{z_score, BudgetEntry};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemRow {
    pub replicate: usize,
    /// 1-based item index.
    pub item: usize,
    pub reports: u64,
    pub degree: f64,
    pub degree_variance: f64,
    pub weight: f64,
    pub weight_variance: f64,
    /// `k̂/n`; consistent, not unbiased.
    pub frequency: f64,
    /// `ŵ/k̂`; consistent, not unbiased.
    pub mean: f64,
    pub flags: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragesRow {
    pub replicate: usize,
    pub average_degree: f64,
    pub average_weight: f64,
    /// The averages equal a fresh recomputation from the per-item rows.
    pub recomputes_exactly: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatisticSummary {
    /// `degree`, `weight`, `average_degree` or `average_weight`.
    pub statistic: String,
    /// 1-based item index; absent for the averages.
    pub item: Option<usize>,
    pub truth: f64,
    pub mean: f64,
    pub empirical_sd: f64,
    /// `empirical_sd / √R`.
    pub standard_error: f64,
    pub z: f64,
    /// Mean of the per-replicate variance estimates.
    pub mean_variance_estimate: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphResult {
    pub protocol: ProtocolParams,
    pub budget: BudgetEntry,
    pub n: usize,
    pub m: usize,
    pub edges: usize,
    pub replicates: usize,
    pub z_threshold: f64,
    pub items: Vec<ItemRow>,
    pub averages: Vec<AveragesRow>,
    pub summary: Vec<StatisticSummary>,
    pub pass: bool,
}

/// The ε of a protocol: LPP and LPP‡ by their closed forms, PCKV-UE from
/// its `(ε₁, ε₂)`.
pub fn protocol_budget(params: &ProtocolParams) -> SimResult<BudgetEntry> {
    let b = match params.variant {
        ProtocolVariant::Lpp => lpp_budget(params.epsilon1, params.epsilon2)?,
        ProtocolVariant::LppDagger => lppdagger_budget(params.epsilon1, params.epsilon2)?,
        ProtocolVariant::PckvUe => pckv_budget(params.epsilon1, params.epsilon2)?,
    };
    Ok(BudgetEntry::from_budget(b))
}

/// Stream purpose for protocol runs; participant `i` of replicate `r` uses
/// `("protocol", r, i)`.
pub const PROTOCOL_PURPOSE: &str = "protocol";

/// Runs the protocol `replicates` times on `graph` and aggregates each run.
pub fn run_graph_experiment(
    graph: &WeightedBipartiteGraph,
    params: &ProtocolParams,
    replicates: usize,
    z_threshold: f64,
    seed: u64,
) -> SimResult<GraphResult> {
    let streams = Streams::new(seed);
    let runs: Vec<GraphEstimates> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let reports = run_protocol(graph, params, &streams, PROTOCOL_PURPOSE, r as u64)?;
            Ok(aggregate(&reports, params, graph.n(), graph.m())?)
        })
        .collect::<SimResult<_>>()?;

    let mut items = Vec::with_capacity(replicates * graph.m());
    let mut averages = Vec::with_capacity(replicates);
    for (r, est) in runs.iter().enumerate() {
        for it in &est.items {
            items.push(ItemRow {
                replicate: r,
                item: it.item + 1,
                reports: it.reports,
                degree: it.degree.estimate,
                degree_variance: it.degree.variance,
                weight: it.weight.estimate,
                weight_variance: it.weight.variance,
                frequency: it.frequency,
                mean: it.mean,
                flags: it.flags.join("|"),
            });
        }
        let (k, w) = averages_from(est.n, est.m, &est.degrees(), &est.weights())?;
        averages.push(AveragesRow {
            replicate: r,
            average_degree: est.average_degree,
            average_weight: est.average_weight,
            recomputes_exactly: k == est.average_degree && w == est.average_weight,
        });
    }

    let summary = summarize(graph, &items, &averages, z_threshold)?;
    let pass = summary.iter().all(|s| s.pass) && averages.iter().all(|a| a.recomputes_exactly);
    Ok(GraphResult {
        protocol: *params,
        budget: protocol_budget(params)?,
        n: graph.n(),
        m: graph.m(),
        edges: graph.edge_count(),
        replicates,
        z_threshold,
        items,
        averages,
        summary,
        pass,
    })
}

fn stat(
    statistic: &str,
    item: Option<usize>,
    truth: f64,
    xs: &[f64],
    vars: Option<&[f64]>,
    z_threshold: f64,
) -> StatisticSummary {
    let m = mean(xs);
    let var = sample_variance(xs);
    let z = z_score(m, truth, var, xs.len());
    StatisticSummary {
        statistic: statistic.into(),
        item,
        truth,
        mean: m,
        empirical_sd: var.sqrt(),
        standard_error: (var / xs.len() as f64).sqrt(),
        z,
        mean_variance_estimate: vars.map(mean),
        pass: z.abs() < z_threshold,
    }
}

/// Per-item and average summaries computed from the replicate rows alone.
pub fn summarize(
    graph: &WeightedBipartiteGraph,
    items: &[ItemRow],
    averages: &[AveragesRow],
    z_threshold: f64,
) -> SimResult<Vec<StatisticSummary>> {
    let mut out = Vec::new();
    for j in 0..graph.m() {
        let rows: Vec<&ItemRow> = items.iter().filter(|r| r.item == j + 1).collect();
        let col = |f: fn(&ItemRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<f64>>();
        let k = col(|r| r.degree);
        let kv = col(|r| r.degree_variance);
        let w = col(|r| r.weight);
        let wv = col(|r| r.weight_variance);
        out.push(stat("degree", Some(j + 1), graph.degree(j)? as f64, &k, Some(&kv), z_threshold));
        out.push(stat("weight", Some(j + 1), graph.weight(j)?, &w, Some(&wv), z_threshold));
    }
    let (tk, tw) = graph.averages()?;
    let ak: Vec<f64> = averages.iter().map(|a| a.average_degree).collect();
    let aw: Vec<f64> = averages.iter().map(|a| a.average_weight).collect();
    out.push(stat("average_degree", None, tk, &ak, None, z_threshold));
    out.push(stat("average_weight", None, tw, &aw, None, z_threshold));
    Ok(out)
}

impl Report for GraphResult {
    fn tables(&self) -> Vec<Table> {
        let mut summary = Table::new(
            "summary",
            &[
                "statistic",
                "item",
                "truth",
                "mean",
                "empirical_sd",
                "standard_error",
                "z",
                "mean_variance_estimate",
                "pass",
            ],
        );
        for s in &self.summary {
            summary.push(vec![
                s.statistic.clone(),
                s.item.map(|i| i.to_string()).unwrap_or_default(),
                num(s.truth),
                num(s.mean),
                num(s.empirical_sd),
                num(s.standard_error),
                num(s.z),
                s.mean_variance_estimate.map(num).unwrap_or_default(),
                s.pass.to_string(),
            ]);
        }
        let mut items = Table::new(
            "items",
            &[
                "replicate",
                "item",
                "reports",
                "degree",
                "degree_variance",
                "weight",
                "weight_variance",
                "frequency",
                "mean",
                "flags",
            ],
        );
        for r in &self.items {
            items.push(vec![
                r.replicate.to_string(),
                r.item.to_string(),
                r.reports.to_string(),
                num(r.degree),
                num(r.degree_variance),
                num(r.weight),
                num(r.weight_variance),
                num(r.frequency),
                num(r.mean),
                r.flags.clone(),
            ]);
        }
        let mut avg = Table::new("averages", &["replicate", "average_degree", "average_weight", "recomputes_exactly"]);
        for a in &self.averages {
            avg.push(vec![
                a.replicate.to_string(),
                num(a.average_degree),
                num(a.average_weight),
                a.recomputes_exactly.to_string(),
            ]);
        }
        let mut meta = Table::new("run", &["key", "value"]);
        meta.push(vec!["variant".into(), self.protocol.variant.as_str().into()]);
        if let Some(ue) = self.protocol.ue {
            meta.push(vec!["a".into(), num(ue.a)]);
            meta.push(vec!["b".into(), num(ue.b)]);
            meta.push(vec!["p".into(), num(ue.p)]);
        }
        meta.push(vec!["n".into(), self.n.to_string()]);
        meta.push(vec!["m".into(), self.m.to_string()]);
        meta.push(vec!["edges".into(), self.edges.to_string()]);
        meta.push(vec!["replicates".into(), self.replicates.to_string()]);
        self.budget.push_rows(&mut meta);
        meta.push(vec!["pass".into(), self.pass.to_string()]);
        vec![summary, items, avg, meta]
    }

    fn pass(&self) -> bool {
        self.pass
    }
}
