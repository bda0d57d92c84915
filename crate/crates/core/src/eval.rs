//! Policy evaluation and the three comparison tables (accuracy, efficiency,
//! graph quality).

use std::collections::HashSet;
use std::time::Instant;

use crate::baselines::{rule_based_choose, supervised_choose, LinearModel};
use crate::context::CompressedContext;
use crate::encoder::StateEncoder;
use crate::env::{correct_action, ActionId};
use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Triple};
use crate::qnet::QNetwork;
use crate::rng::SplitMix64;
use crate::scalar::{argmax, Real};

/// A decision rule over (working graph, pending context).
pub trait Policy {
    fn name(&self) -> &str;

    fn choose(&mut self, graph: &KnowledgeGraph, ctx: &CompressedContext) -> Result<ActionId>;
}

pub struct RandomPolicy {
    rng: SplitMix64,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: SplitMix64::new(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn choose(&mut self, _: &KnowledgeGraph, ctx: &CompressedContext) -> Result<ActionId> {
        Ok(ActionId(self.rng.below(ctx.k() + 1)))
    }
}

pub struct RuleBasedPolicy;

impl Policy for RuleBasedPolicy {
    fn name(&self) -> &str {
        "rule-based"
    }

    fn choose(&mut self, graph: &KnowledgeGraph, ctx: &CompressedContext) -> Result<ActionId> {
        Ok(rule_based_choose(graph, ctx))
    }
}

pub struct SupervisedPolicy<T> {
    pub model: LinearModel<T>,
    pub encoder: StateEncoder,
}

impl<T: Real> Policy for SupervisedPolicy<T> {
    fn name(&self) -> &str {
        "supervised"
    }

    fn choose(&mut self, graph: &KnowledgeGraph, ctx: &CompressedContext) -> Result<ActionId> {
        let s = self.encoder.encode::<T>(graph, ctx)?;
        supervised_choose(&self.model, &s)
    }
}

/// Greedy policy of a trained Q-network.
pub struct DqnPolicy<T> {
    pub net: QNetwork<T>,
    pub encoder: StateEncoder,
}

impl<T: Real> Policy for DqnPolicy<T> {
    fn name(&self) -> &str {
        "dqn"
    }

    fn choose(&mut self, graph: &KnowledgeGraph, ctx: &CompressedContext) -> Result<ActionId> {
        let s = self.encoder.encode::<T>(graph, ctx)?;
        let q = self.net.forward(s.as_slice())?;
        Ok(ActionId(argmax(&q).expect("network has outputs")))
    }
}

/// Always takes the scoring action; an upper bound for the other policies.
pub struct OraclePolicy;

impl Policy for OraclePolicy {
    fn name(&self) -> &str {
        "oracle"
    }

    fn choose(&mut self, _: &KnowledgeGraph, ctx: &CompressedContext) -> Result<ActionId> {
        Ok(correct_action(ctx))
    }
}

pub fn is_correct_decision(action: ActionId, ctx: &CompressedContext) -> bool {
    action == correct_action(ctx)
}

pub fn integration_accuracy(decisions: &[(ActionId, &CompressedContext)]) -> Result<f64> {
    if decisions.is_empty() {
        return Err(Error::arg("accuracy of zero decisions is undefined"));
    }
    let correct = decisions
        .iter()
        .filter(|(a, c)| is_correct_decision(*a, c))
        .count();
    Ok(correct as f64 / decisions.len() as f64)
}

/// F1 of `integrated` against `ground_truth`; precision is 0 for an empty
/// integration and F1 is 0 when precision and recall both vanish.
pub fn quality_index(integrated: &HashSet<Triple>, ground_truth: &HashSet<Triple>) -> Result<f64> {
    if ground_truth.is_empty() {
        return Err(Error::arg("quality index needs a non-empty ground truth"));
    }
    let hits = integrated.intersection(ground_truth).count() as f64;
    let precision = if integrated.is_empty() {
        0.0
    } else {
        hits / integrated.len() as f64
    };
    let recall = hits / ground_truth.len() as f64;
    if precision + recall == 0.0 {
        Ok(0.0)
    } else {
        Ok(2.0 * precision * recall / (precision + recall))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub policy_name: String,
    pub accuracy: f64,
    pub wall_seconds: f64,
    pub quality_index: f64,
    pub decisions: usize,
    pub seed: u64,
}

/// Full record of one evaluation pass.
#[derive(Clone, Debug)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub actions: Vec<ActionId>,
    /// Every accepted candidate, whether or not it was inserted.
    pub selected: HashSet<Triple>,
    pub ground_truth: HashSet<Triple>,
}

/// Runs `policy` over `contexts` against a private copy of `graph`.
///
/// Correct selections are inserted, wrong ones are recorded but not
/// inserted. The clock covers decisions and insertions only. Quality is F1
/// of all accepted candidates against the origin triples of the contexts.
pub fn timed_evaluate(
    policy: &mut dyn Policy,
    contexts: &[CompressedContext],
    graph: &KnowledgeGraph,
    seed: u64,
) -> Result<EvalOutcome> {
    if contexts.is_empty() {
        return Err(Error::arg("no contexts to evaluate"));
    }
    let mut working = graph.clone();
    let mut actions = Vec::with_capacity(contexts.len());

    let start = Instant::now();
    for ctx in contexts {
        let a = policy.choose(&working, ctx)?;
        if a.0 > ctx.k() {
            return Err(Error::arg(format!(
                "policy {} chose invalid action {}",
                policy.name(),
                a.0
            )));
        }
        if ctx.correct_index == Some(a.0) {
            working.insert(&ctx.candidates[a.0])?;
        }
        actions.push(a);
    }
    let wall_seconds = start.elapsed().as_secs_f64();

    let decisions: Vec<(ActionId, &CompressedContext)> =
        actions.iter().copied().zip(contexts).collect();
    let accuracy = integration_accuracy(&decisions)?;
    let selected: HashSet<Triple> = decisions
        .iter()
        .filter(|(a, c)| !a.is_reject(c.k()))
        .map(|(a, c)| c.candidates[a.0].clone())
        .collect();
    let ground_truth: HashSet<Triple> = contexts.iter().map(|c| c.origin.clone()).collect();
    let quality = quality_index(&selected, &ground_truth)?;
    Ok(EvalOutcome {
        report: EvalReport {
            policy_name: policy.name().to_owned(),
            accuracy,
            wall_seconds,
            quality_index: quality,
            decisions: contexts.len(),
            seed,
        },
        actions,
        selected,
        ground_truth,
    })
}

/// Baselines the improvement columns are measured against. `None` leaves
/// the corresponding columns blank.
#[derive(Clone, Debug, Default)]
pub struct Comparison {
    pub rule_based: Option<String>,
    pub supervised: Option<String>,
}

impl Comparison {
    pub fn standard() -> Self {
        Self {
            rule_based: Some("rule-based".into()),
            supervised: Some("supervised".into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImprovementRow {
    pub policy: String,
    /// Relative accuracy gain, percent.
    pub accuracy_rel: [Option<f64>; 2],
    /// Absolute accuracy gap, percentage points.
    pub accuracy_pp: [Option<f64>; 2],
    /// Relative quality-index gain, percent.
    pub quality_rel: [Option<f64>; 2],
    /// Wall-time reduction relative to the baseline, percent.
    pub efficiency_rel: [Option<f64>; 2],
}

#[derive(Clone, Debug)]
pub struct ReportOutput {
    pub rows: Vec<ImprovementRow>,
    pub csv: String,
    pub table: String,
}

/// Rounds half-up to `decimals` places after snapping away binary noise
/// below 1e-9.
pub fn round_half_up(x: f64, decimals: i32) -> f64 {
    let snapped = (x * 1e9).round() / 1e9;
    let scale = 10f64.powi(decimals);
    (snapped * scale + 0.5).floor() / scale
}

fn relative(x: f64, base: f64) -> Option<f64> {
    (base != 0.0).then(|| round_half_up((x - base) / base * 100.0, 1))
}

fn reduction(x: f64, base: f64) -> Option<f64> {
    (base != 0.0).then(|| round_half_up((base - x) / base * 100.0, 1))
}

pub const REPORT_CSV_HEADER: &str = "policy,accuracy,wall_seconds,quality_index,\
improvement_over_rule_based_pct,improvement_over_supervised_pct,\
accuracy_gain_over_rule_based_pp,accuracy_gain_over_supervised_pp,\
quality_improvement_over_rule_based_pct,quality_improvement_over_supervised_pct,\
efficiency_gain_over_rule_based_pct,efficiency_gain_over_supervised_pct";

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.1}")).unwrap_or_default()
}

/// Builds the comparison CSV and a plain-text rendering of the accuracy,
/// efficiency and quality tables.
pub fn emit_report(reports: &[EvalReport], targets: &Comparison) -> Result<ReportOutput> {
    if reports.is_empty() {
        return Err(Error::Report("no reports to emit".into()));
    }
    let find = |name: &Option<String>| -> Result<Option<&EvalReport>> {
        match name {
            None => Ok(None),
            Some(n) => reports
                .iter()
                .find(|r| &r.policy_name == n)
                .map(Some)
                .ok_or_else(|| Error::Report(format!("baseline {n:?} missing from reports"))),
        }
    };
    let bases = [find(&targets.rule_based)?, find(&targets.supervised)?];

    let rows: Vec<ImprovementRow> = reports
        .iter()
        .map(|r| {
            let per = |f: &dyn Fn(&EvalReport) -> Option<f64>| {
                [bases[0].and_then(f), bases[1].and_then(f)]
            };
            ImprovementRow {
                policy: r.policy_name.clone(),
                accuracy_rel: per(&|b| relative(r.accuracy, b.accuracy)),
                accuracy_pp: per(&|b| Some(round_half_up((r.accuracy - b.accuracy) * 100.0, 1))),
                quality_rel: per(&|b| relative(r.quality_index, b.quality_index)),
                efficiency_rel: per(&|b| reduction(r.wall_seconds, b.wall_seconds)),
            }
        })
        .collect();

    let mut csv = String::from(REPORT_CSV_HEADER);
    csv.push('\n');
    for (r, row) in reports.iter().zip(&rows) {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.policy_name,
            r.accuracy,
            r.wall_seconds,
            r.quality_index,
            cell(row.accuracy_rel[0]),
            cell(row.accuracy_rel[1]),
            cell(row.accuracy_pp[0]),
            cell(row.accuracy_pp[1]),
            cell(row.quality_rel[0]),
            cell(row.quality_rel[1]),
            cell(row.efficiency_rel[0]),
            cell(row.efficiency_rel[1]),
        ));
    }

    let mut table = String::new();
    let sections: [(
        &str,
        &str,
        Box<dyn Fn(&EvalReport, &ImprovementRow) -> Vec<String>>,
    ); 3] = [
        (
            "Integration accuracy",
            "Accuracy (%) | Over rule-based (pp / rel %) | Over supervised (pp / rel %)",
            Box::new(|r, row| {
                vec![
                    format!("{:.1}", r.accuracy * 100.0),
                    format!(
                        "{} / {}",
                        cell(row.accuracy_pp[0]),
                        cell(row.accuracy_rel[0])
                    ),
                    format!(
                        "{} / {}",
                        cell(row.accuracy_pp[1]),
                        cell(row.accuracy_rel[1])
                    ),
                ]
            }),
        ),
        (
            "Integration efficiency",
            "Seconds | Gain over rule-based (%) | Gain over supervised (%)",
            Box::new(|r, row| {
                vec![
                    format!("{:.6}", r.wall_seconds),
                    cell(row.efficiency_rel[0]),
                    cell(row.efficiency_rel[1]),
                ]
            }),
        ),
        (
            "Knowledge graph quality",
            "Quality index | Over rule-based (%) | Over supervised (%)",
            Box::new(|r, row| {
                vec![
                    format!("{:.3}", r.quality_index),
                    cell(row.quality_rel[0]),
                    cell(row.quality_rel[1]),
                ]
            }),
        ),
    ];
    for (title, header, render) in &sections {
        let head: Vec<String> = std::iter::once("Policy".to_owned())
            .chain(header.split(" | ").map(str::to_owned))
            .collect();
        let body: Vec<Vec<String>> = reports
            .iter()
            .zip(&rows)
            .map(|(r, row)| {
                std::iter::once(r.policy_name.clone())
                    .chain(render(r, row))
                    .collect()
            })
            .collect();
        let widths: Vec<usize> = (0..head.len())
            .map(|c| {
                std::iter::once(&head)
                    .chain(&body)
                    .map(|line| line[c].len())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let fmt_line = |cols: &[String]| {
            let cells: Vec<String> = cols
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| {
                    if i == 0 {
                        format!("{c:<w$}")
                    } else {
                        format!("{c:>w$}")
                    }
                })
                .collect();
            format!("| {} |\n", cells.join(" | "))
        };
        table.push_str(title);
        table.push('\n');
        table.push_str(&fmt_line(&head));
        let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
        table.push_str(&format!("|-{}-|\n", rule.join("-|-")));
        for line in &body {
            table.push_str(&fmt_line(line));
        }
        table.push('\n');
    }
    Ok(ReportOutput { rows, csv, table })
}
