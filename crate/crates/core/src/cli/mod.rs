//! Library side of the `kgc` binary: the prepare / train / compare / inspect
//! commands and the artifacts they exchange through the output directory.

mod config;

pub use config::{BaselineConfig, EvalConfig, RunConfig, KEYS};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::agent::{train, TrainingLog, TRAINING_LOG_HEADER};
use crate::baselines::{fit_supervised, LinearModel, LINMODEL_HEADER};
use crate::context::{
    parse_context_dump, split_holdout, write_context_dump, CompressedContext, EpisodeSource,
    HoldoutSplit, CONTEXT_DUMP_HEADER,
};
use crate::encoder::StateEncoder;
use crate::env::{action_count, correct_action, EpisodicKgEnv};
use crate::error::{Error, Result};
use crate::eval::{
    emit_report, timed_evaluate, Comparison, DqnPolicy, EvalReport, Policy, RandomPolicy,
    ReportOutput, RuleBasedPolicy, SupervisedPolicy, REPORT_CSV_HEADER,
};
use crate::kg::{read_triples, serialize_triples, KnowledgeGraph, Triple};
use crate::qnet::{QNetwork, QNET_HEADER};
use crate::rng::fnv1a64;

pub const TRAIN_FILE: &str = "train.tsv";
pub const HOLDOUT_FILE: &str = "holdout.tsv";
pub const CONTEXTS_FILE: &str = "contexts.tsv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const QNET_FILE: &str = "qnet.ckpt";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const LINMODEL_FILE: &str = "linmodel.ckpt";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const REPORT_TEXT_FILE: &str = "report.txt";

const MANIFEST_HEADER: &str = "kgc manifest v1";

/// Window for the greedy accuracy printed after training.
pub const FINAL_ACCURACY_WINDOW: usize = 500;

/// Independent stream seed for one consumer of the run seed.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    fnv1a64(&[&seed.to_le_bytes(), label.as_bytes()])
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn load_triples(path: &Path) -> Result<Vec<Triple>> {
    let text = read_file(path)?;
    read_triples(text.as_bytes()).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Counts recorded by `prepare`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub seed: u64,
    pub input_records: usize,
    pub input_triples: usize,
    pub train_triples: usize,
    pub holdout_triples: usize,
    /// Trailing part of the holdout file reserved for evaluation.
    pub eval_holdout_triples: usize,
    pub eval_contexts: usize,
}

impl Manifest {
    pub fn learning_holdout_triples(&self) -> usize {
        self.holdout_triples - self.eval_holdout_triples
    }

    pub fn to_text(&self) -> String {
        format!(
            "{MANIFEST_HEADER}\nseed={}\ninput_records={}\ninput_triples={}\ntrain_triples={}\n\
             holdout_triples={}\neval_holdout_triples={}\neval_contexts={}\n",
            self.seed,
            self.input_records,
            self.input_triples,
            self.train_triples,
            self.holdout_triples,
            self.eval_holdout_triples,
            self.eval_contexts
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_HEADER) {
            return Err(Error::Parse {
                line: 1,
                message: "missing manifest header".into(),
            });
        }
        let mut fields = std::collections::HashMap::new();
        for (idx, line) in lines.enumerate() {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 2,
                message: format!("expected key=value, found {line:?}"),
            })?;
            fields.insert(k, (idx + 2, v));
        }
        let get = |key: &str| -> Result<u64> {
            let (line, v) = fields.get(key).ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("manifest lacks {key}"),
            })?;
            v.parse().map_err(|_| Error::Parse {
                line: *line,
                message: format!("bad {key} {v:?}"),
            })
        };
        let m = Manifest {
            seed: get("seed")?,
            input_records: get("input_records")? as usize,
            input_triples: get("input_triples")? as usize,
            train_triples: get("train_triples")? as usize,
            holdout_triples: get("holdout_triples")? as usize,
            eval_holdout_triples: get("eval_holdout_triples")? as usize,
            eval_contexts: get("eval_contexts")? as usize,
        };
        if m.eval_holdout_triples > m.holdout_triples {
            return Err(Error::Parse {
                line: 0,
                message: "eval_holdout_triples exceeds holdout_triples".into(),
            });
        }
        Ok(m)
    }
}

/// Number of holdout triples reserved for evaluation: `round(n * fraction)`
/// kept within `[1, n - 1]` so both slices are non-empty.
pub fn eval_slice_len(n: usize, fraction: f64) -> Result<usize> {
    if n < 2 {
        return Err(Error::Config(format!(
            "holdout has {n} triple(s); at least 2 are needed to carve out an evaluation slice"
        )));
    }
    Ok(((n as f64 * fraction).round() as usize).clamp(1, n - 1))
}

/// Artifacts produced by `prepare`, loaded back for the later commands.
pub struct Prepared {
    pub manifest: Manifest,
    pub train_graph: KnowledgeGraph,
    pub holdout: Vec<Triple>,
}

impl Prepared {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = Manifest::parse(&read_file(&dir.join(MANIFEST_FILE))?)?;
        let train_graph = KnowledgeGraph::build(&load_triples(&dir.join(TRAIN_FILE))?)?;
        let holdout = load_triples(&dir.join(HOLDOUT_FILE))?;
        if holdout.len() != manifest.holdout_triples
            || train_graph.triple_count() != manifest.train_triples
        {
            return Err(Error::Config(format!(
                "artifacts in {} do not match their manifest",
                dir.display()
            )));
        }
        Ok(Self {
            manifest,
            train_graph,
            holdout,
        })
    }

    /// Holdout triples used for training episodes and supervised examples.
    pub fn learning_split(&self) -> HoldoutSplit {
        HoldoutSplit {
            train_graph: self.train_graph.clone(),
            holdout: self.holdout[..self.manifest.learning_holdout_triples()].to_vec(),
            seed: self.manifest.seed,
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn save_config(cfg: &RunConfig, name: &str) -> Result<()> {
    write_file(&cfg.output_dir.join(name), &cfg.to_text())
}

/// Splits the dataset and writes `train.tsv`, `holdout.tsv`, the evaluation
/// context dump and the manifest.
pub fn cmd_prepare(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    let dataset = cfg
        .dataset_path
        .as_deref()
        .ok_or_else(|| Error::Config("dataset_path is required for prepare".into()))?;
    let records = load_triples(dataset)?;
    let graph = KnowledgeGraph::build(&records)?;
    let split = split_holdout(&graph, cfg.holdout_fraction, cfg.seed)?;
    let n_eval = eval_slice_len(split.holdout.len(), cfg.eval.fraction)?;
    let eval_split = HoldoutSplit {
        train_graph: split.train_graph.clone(),
        holdout: split.holdout[split.holdout.len() - n_eval..].to_vec(),
        seed: split.seed,
    };
    let contexts = EpisodeSource::new(
        eval_split,
        cfg.k,
        1,
        cfg.distractor_prob,
        derive_seed(cfg.seed, "eval-contexts"),
    )?
    .take_contexts(cfg.eval.contexts)?;

    let manifest = Manifest {
        seed: cfg.seed,
        input_records: records.len(),
        input_triples: graph.triple_count(),
        train_triples: split.train_graph.triple_count(),
        holdout_triples: split.holdout.len(),
        eval_holdout_triples: n_eval,
        eval_contexts: contexts.len(),
    };

    ensure_dir(&cfg.output_dir)?;
    let dir = &cfg.output_dir;
    write_file(&dir.join(TRAIN_FILE), &split.train_graph.serialize())?;
    write_file(&dir.join(HOLDOUT_FILE), &serialize_triples(&split.holdout))?;
    let dump = write_context_dump(contexts.iter().enumerate().map(|(i, c)| (i, 0, c)))?;
    write_file(&dir.join(CONTEXTS_FILE), &dump)?;
    write_file(&dir.join(MANIFEST_FILE), &manifest.to_text())?;
    save_config(cfg, "prepare.config")?;
    Ok(manifest)
}

fn network_dims(cfg: &RunConfig, encoder: &StateEncoder) -> Vec<usize> {
    let mut dims = vec![encoder.state_dim()];
    dims.extend(&cfg.hidden);
    dims.push(action_count(cfg.k));
    dims
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub net: QNetwork<f64>,
    pub log: TrainingLog<f64>,
    /// Greedy accuracy over the last [`FINAL_ACCURACY_WINDOW`] steps.
    pub final_accuracy: Option<f64>,
}

/// Trains the DQN on episodes drawn from the learning part of the holdout
/// and writes `qnet.ckpt` and `training_log.csv`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let prepared = Prepared::load(&cfg.output_dir)?;
    let encoder = StateEncoder::new(cfg.encoder.clone(), cfg.k)?;
    let source = EpisodeSource::new(
        prepared.learning_split(),
        cfg.k,
        cfg.m,
        cfg.distractor_prob,
        derive_seed(cfg.seed, "episodes"),
    )?;
    let mut env = EpisodicKgEnv::new(source, encoder.clone())?;
    let net = QNetwork::new(
        &network_dims(cfg, &encoder),
        derive_seed(cfg.seed, "qnet-init"),
    )?;
    let agent_cfg = crate::agent::AgentConfig {
        seed: derive_seed(cfg.seed, "agent"),
        ..cfg.agent.clone()
    };
    let (net, log) = train(&mut env, &agent_cfg, net)?;

    let dir = &cfg.output_dir;
    net.save_checkpoint(dir.join(QNET_FILE))?;
    write_file(&dir.join(TRAINING_LOG_FILE), &log.to_csv())?;
    save_config(cfg, "train.config")?;
    let final_accuracy = log.greedy_accuracy(FINAL_ACCURACY_WINDOW);
    Ok(TrainOutcome {
        net,
        log,
        final_accuracy,
    })
}

/// Fits the supervised baseline on labelled contexts from the learning part
/// of the holdout.
pub fn train_supervised(
    cfg: &RunConfig,
    prepared: &Prepared,
    encoder: &StateEncoder,
) -> Result<LinearModel<f64>> {
    let contexts = EpisodeSource::new(
        prepared.learning_split(),
        cfg.k,
        1,
        cfg.distractor_prob,
        derive_seed(cfg.seed, "supervised-examples"),
    )?
    .take_contexts(cfg.baseline.examples)?;
    let examples = contexts
        .iter()
        .map(|c| {
            Ok((
                encoder.encode::<f64>(&prepared.train_graph, c)?,
                correct_action(c),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let seed = derive_seed(cfg.seed, "supervised-fit");
    fit_supervised(
        &examples,
        action_count(cfg.k),
        cfg.baseline.epochs,
        cfg.baseline.learning_rate,
        seed,
    )
}

pub fn load_eval_contexts(dir: &Path) -> Result<Vec<CompressedContext>> {
    let rows = parse_context_dump(&read_file(&dir.join(CONTEXTS_FILE))?)?;
    Ok(rows.into_iter().map(|(_, _, c)| c).collect())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Evaluates a freshly built policy `repeat` times; decisions are identical
/// across repeats and the reported wall time is their median.
fn evaluate_repeated(
    mut make: impl FnMut() -> Box<dyn Policy>,
    contexts: &[CompressedContext],
    graph: &KnowledgeGraph,
    seed: u64,
    repeat: usize,
) -> Result<EvalReport> {
    let mut times = Vec::with_capacity(repeat);
    let mut first: Option<EvalReport> = None;
    for _ in 0..repeat {
        let mut policy = make();
        let outcome = timed_evaluate(policy.as_mut(), contexts, graph, seed)?;
        times.push(outcome.report.wall_seconds);
        first.get_or_insert(outcome.report);
    }
    let mut report = first.expect("repeat is positive");
    report.wall_seconds = median(times);
    Ok(report)
}

/// Evaluates random, rule-based, supervised and DQN policies on the stored
/// evaluation contexts and writes `report.csv` / `report.txt`.
pub fn cmd_compare(cfg: &RunConfig) -> Result<ReportOutput> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    let prepared = Prepared::load(dir)?;
    let contexts = load_eval_contexts(dir)?;
    let encoder = StateEncoder::new(cfg.encoder.clone(), cfg.k)?;
    if let Some(c) = contexts.iter().find(|c| c.k() != cfg.k) {
        return Err(Error::Config(format!(
            "stored contexts have {} candidates but k = {}",
            c.k(),
            cfg.k
        )));
    }
    let net = QNetwork::<f64>::load_checkpoint(dir.join(QNET_FILE))?;
    if net.input_dim() != encoder.state_dim() || net.output_dim() != action_count(cfg.k) {
        return Err(Error::Config(format!(
            "checkpoint dims {:?} do not fit state dim {} with {} actions",
            net.dims(),
            encoder.state_dim(),
            action_count(cfg.k)
        )));
    }
    let model = train_supervised(cfg, &prepared, &encoder)?;
    model.save(dir.join(LINMODEL_FILE))?;

    let graph = &prepared.train_graph;
    let repeat = cfg.eval.repeat;
    let random_seed = derive_seed(cfg.seed, "random-policy");
    let reports = vec![
        evaluate_repeated(
            || Box::new(RandomPolicy::new(random_seed)),
            &contexts,
            graph,
            cfg.seed,
            repeat,
        )?,
        evaluate_repeated(
            || Box::new(RuleBasedPolicy),
            &contexts,
            graph,
            cfg.seed,
            repeat,
        )?,
        evaluate_repeated(
            || {
                Box::new(SupervisedPolicy {
                    model: model.clone(),
                    encoder: encoder.clone(),
                })
            },
            &contexts,
            graph,
            cfg.seed,
            repeat,
        )?,
        evaluate_repeated(
            || {
                Box::new(DqnPolicy {
                    net: net.clone(),
                    encoder: encoder.clone(),
                })
            },
            &contexts,
            graph,
            cfg.seed,
            repeat,
        )?,
    ];
    let out = emit_report(&reports, &Comparison::standard())?;
    write_file(&dir.join(REPORT_CSV_FILE), &out.csv)?;
    write_file(&dir.join(REPORT_TEXT_FILE), &out.table)?;
    save_config(cfg, "compare.config")?;
    Ok(out)
}

/// Human-readable summary of any artifact the commands write, or of a
/// triple file.
pub fn cmd_inspect(path: &Path) -> Result<String> {
    let text = read_file(path)?;
    let first = text.lines().next().unwrap_or("");
    let mut out = String::new();
    match first {
        QNET_HEADER => {
            let net = QNetwork::<f64>::from_checkpoint(&text)?;
            let _ = writeln!(out, "q-network checkpoint");
            let _ = writeln!(out, "layer_dims: {}", join(net.dims()));
            let _ = writeln!(out, "parameters: {}", net.param_count());
        }
        LINMODEL_HEADER => {
            let m = LinearModel::<f64>::from_checkpoint(&text)?;
            let _ = writeln!(out, "linear model checkpoint");
            let _ = writeln!(out, "input_dim: {}", m.dim());
            let _ = writeln!(out, "actions: {}", m.n_actions());
        }
        MANIFEST_HEADER => {
            let m = Manifest::parse(&text)?;
            let _ = writeln!(out, "prepare manifest");
            out.push_str(
                &m.to_text()
                    .lines()
                    .skip(1)
                    .map(|l| format!("{l}\n"))
                    .collect::<String>(),
            );
        }
        TRAINING_LOG_HEADER => inspect_training_log(&text, &mut out)?,
        CONTEXT_DUMP_HEADER => {
            let rows = parse_context_dump(&text)?;
            let distractors = rows
                .iter()
                .filter(|(_, _, c)| c.is_distractor_only())
                .count();
            let _ = writeln!(out, "context dump");
            let _ = writeln!(out, "contexts: {}", rows.len());
            let _ = writeln!(out, "distractor_only: {distractors}");
            if let Some((_, _, c)) = rows.first() {
                let _ = writeln!(out, "candidates_per_context: {}", c.k());
            }
        }
        REPORT_CSV_HEADER => {
            let _ = writeln!(out, "comparison report");
            for line in text.lines().skip(1) {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() >= 4 {
                    let _ = writeln!(
                        out,
                        "{}: accuracy {} quality {} wall_seconds {}",
                        f[0], f[1], f[3], f[2]
                    );
                }
            }
        }
        _ => {
            let triples = read_triples(text.as_bytes()).map_err(|_| {
                Error::Config(format!(
                    "{}: not a recognised artifact or triple file",
                    path.display()
                ))
            })?;
            let g = KnowledgeGraph::build(&triples)?;
            let _ = writeln!(out, "triple file");
            let _ = writeln!(out, "records: {}", triples.len());
            let _ = writeln!(out, "entities: {}", g.entity_count());
            let _ = writeln!(out, "relations: {}", g.relation_count());
            let _ = writeln!(out, "triples: {}", g.triple_count());
            let _ = writeln!(out, "mean_degree: {:.4}", g.mean_degree());
        }
    }
    Ok(out)
}

fn join(dims: &[usize]) -> String {
    dims.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

fn inspect_training_log(text: &str, out: &mut String) -> Result<()> {
    let rows: Vec<&str> = text.lines().skip(1).filter(|l| !l.is_empty()).collect();
    let _ = writeln!(out, "training log");
    let _ = writeln!(out, "steps: {}", rows.len());
    let Some(last) = rows.last() else {
        return Ok(());
    };
    let f: Vec<&str> = last.split(',').collect();
    if f.len() != 5 {
        return Err(Error::Parse {
            line: rows.len() + 1,
            message: format!("expected 5 fields, found {}", f.len()),
        });
    }
    let or_dash = |s: &str| {
        if s.is_empty() {
            "-".to_owned()
        } else {
            s.to_owned()
        }
    };
    let _ = writeln!(out, "last_step: {}", f[0]);
    let _ = writeln!(out, "epsilon: {}", f[1]);
    let _ = writeln!(out, "reward: {}", f[2]);
    let _ = writeln!(out, "loss: {}", or_dash(f[3]));
    let _ = writeln!(out, "episode_return: {}", f[4]);
    let tail = &rows[rows.len().saturating_sub(FINAL_ACCURACY_WINDOW)..];
    let rewards: Vec<f64> = tail
        .iter()
        .filter_map(|l| l.split(',').nth(2)?.parse().ok())
        .collect();
    if !rewards.is_empty() {
        let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
        let _ = writeln!(out, "mean_reward_last_{}: {mean:.4}", rewards.len());
    }
    Ok(())
}

/// Applies command-line overrides on top of a loaded config.
pub fn apply_overrides(cfg: &mut RunConfig, output_dir: Option<PathBuf>, seed: Option<u64>) {
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_label() {
        assert_ne!(derive_seed(0, "episodes"), derive_seed(0, "agent"));
        assert_ne!(derive_seed(0, "episodes"), derive_seed(1, "episodes"));
        assert_eq!(derive_seed(3, "x"), derive_seed(3, "x"));
    }

    #[test]
    fn eval_slice_bounds() {
        assert_eq!(eval_slice_len(200, 0.5).unwrap(), 100);
        assert_eq!(eval_slice_len(3, 0.01).unwrap(), 1);
        assert_eq!(eval_slice_len(3, 0.99).unwrap(), 2);
        assert!(eval_slice_len(1, 0.5).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let m = Manifest {
            seed: 4,
            input_records: 12,
            input_triples: 11,
            train_triples: 9,
            holdout_triples: 2,
            eval_holdout_triples: 1,
            eval_contexts: 10,
        };
        assert_eq!(Manifest::parse(&m.to_text()).unwrap(), m);
        assert!(Manifest::parse("seed=1\n").is_err());
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
