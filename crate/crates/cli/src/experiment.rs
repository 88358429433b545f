//! Sweep × runs execution and result files.

use std::borrow::Cow;
use std::fs;
use std::path::Path;

use bifilter::data::{load_dataset, sbm_generate, split_edges, Dataset};
use bifilter::metrics::{aggregate_runs, MetricReport};
use bifilter::noise::NoiseSpec;
use bifilter::train::{train_link, train_node, TrainConfig};
use log::info;
use rayon::prelude::*;

use crate::config::{DatasetSource, ExperimentConfig, Task};
use crate::error::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub sweep_value: Option<f64>,
    pub run: usize,
    pub seed: u64,
    pub metric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub sweep_value: Option<f64>,
    pub report: MetricReport,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub records: Vec<RunRecord>,
    pub summary: Vec<SweepSummary>,
}

/// Base data shared by all runs: a loaded directory or a per-seed SBM.
pub enum BaseData {
    Fixed(Dataset),
    Sbm(bifilter::data::SbmConfig),
}

impl BaseData {
    pub fn load(source: &DatasetSource) -> Result<Self, CliError> {
        Ok(match source {
            DatasetSource::Dir(dir) => BaseData::Fixed(load_dataset(dir)?),
            DatasetSource::Sbm(cfg) => BaseData::Sbm(cfg.clone()),
        })
    }

    pub fn for_seed(&self, seed: u64) -> bifilter::Result<Cow<'_, Dataset>> {
        Ok(match self {
            BaseData::Fixed(ds) => Cow::Borrowed(ds),
            BaseData::Sbm(cfg) => Cow::Owned(sbm_generate(cfg, seed)?),
        })
    }
}

fn metric_name(task: Task) -> &'static str {
    match task {
        Task::NodeClassification => "test_accuracy",
        Task::LinkPrediction => "test_roc_auc",
    }
}

/// Test metric of one (sweep value, seed) cell. The same seed drives the
/// synthetic data, the perturbation, the edge split and training.
pub fn run_single(
    cfg: &ExperimentConfig,
    base: &BaseData,
    sweep_value: Option<f64>,
    seed: u64,
) -> bifilter::Result<f64> {
    let ds = base.for_seed(seed)?;
    let (graph, features) = match (&cfg.noise, sweep_value) {
        (Some(n), Some(v)) => NoiseSpec {
            case: n.case,
            parameter: v,
            seed,
        }
        .apply(&ds.graph, &ds.features)?,
        _ => (ds.graph.clone(), ds.features.clone()),
    };
    let train = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    match cfg.task {
        Task::NodeClassification => {
            let model = cfg.model.config(features.cols(), Some(ds.num_classes));
            let noisy = Dataset {
                graph,
                features,
                labels: ds.labels.clone(),
                masks: ds.masks.clone(),
                num_classes: ds.num_classes,
            };
            Ok(train_node(&noisy, &model, &train)?.test_metric)
        }
        Task::LinkPrediction => {
            let model = cfg.model.config(features.cols(), None);
            let split = split_edges(&graph, cfg.edge_split, seed)?;
            Ok(train_link(&features, &split, &model, &train)?.test_metric)
        }
    }
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

pub fn results_csv(records: &[RunRecord]) -> String {
    let mut s = String::from("sweep_value,run,seed,metric\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{},{}\n",
            fmt_value(r.sweep_value),
            r.run,
            r.seed,
            r.metric
        ));
    }
    s
}

pub fn parse_results_csv(text: &str) -> Result<Vec<RunRecord>, String> {
    let mut lines = text.lines();
    if lines.next() != Some("sweep_value,run,seed,metric") {
        return Err("missing results.csv header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = |what: &str| format!("line {}: bad {what}", i + 2);
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad("field count"));
            }
            Ok(RunRecord {
                sweep_value: match f[0] {
                    "none" => None,
                    v => Some(v.parse().map_err(|_| bad("sweep_value"))?),
                },
                run: f[1].parse().map_err(|_| bad("run"))?,
                seed: f[2].parse().map_err(|_| bad("seed"))?,
                metric: f[3].parse().map_err(|_| bad("metric"))?,
            })
        })
        .collect()
}

/// One [`aggregate_runs`] report per sweep value, in first-seen order.
pub fn summarize(records: &[RunRecord], metric: &str) -> bifilter::Result<Vec<SweepSummary>> {
    let mut order: Vec<Option<f64>> = Vec::new();
    for r in records {
        if !order.contains(&r.sweep_value) {
            order.push(r.sweep_value);
        }
    }
    order
        .into_iter()
        .map(|v| {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.sweep_value == v)
                .map(|r| r.metric)
                .collect();
            Ok(SweepSummary {
                sweep_value: v,
                report: aggregate_runs(metric, &values)?,
            })
        })
        .collect()
}

pub fn summary_markdown(cfg: &ExperimentConfig, summary: &[SweepSummary]) -> String {
    let sweep = cfg.noise.as_ref().map_or("noise", |n| n.case.name());
    let metric = metric_name(cfg.task);
    let mut s = format!(
        "# {} ({}, {})\n\n| {sweep} | {metric} (%) | mean | std | runs |\n|---|---|---|---|---|\n",
        cfg.task, cfg.model.architecture, cfg.model.l2_mode
    );
    for row in summary {
        let r = &row.report;
        s.push_str(&format!(
            "| {} | {:.2} ± {:.2} | {} | {} | {} |\n",
            fmt_value(row.sweep_value),
            100.0 * r.mean,
            100.0 * r.std,
            r.mean,
            r.std,
            r.runs
        ));
    }
    s
}

/// Columns `value mean std` for gnuplot; runs without noise plot at 0.
pub fn gnuplot_data(summary: &[SweepSummary]) -> String {
    let mut s = String::from("# value mean std\n");
    for row in summary {
        s.push_str(&format!(
            "{} {} {}\n",
            row.sweep_value.unwrap_or(0.0),
            row.report.mean,
            row.report.std
        ));
    }
    s
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::File { path, source })
}

/// Runs every (sweep value, run) cell on a pool of `threads` workers (all
/// cores when `None`) and writes `results.csv`, `summary.md`, `config.txt`
/// and optionally `sweep.dat` into `cfg.output`. On failure the rows that
/// completed are still written.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentReport, CliError> {
    cfg.validate()?;
    let base = BaseData::load(&cfg.dataset)?;
    let jobs: Vec<(Option<f64>, usize)> = cfg
        .sweep_values()
        .into_iter()
        .flat_map(|v| (0..cfg.runs).map(move |r| (v, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let outcomes: Vec<(Option<f64>, usize, u64, bifilter::Result<f64>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(v, run)| {
                let seed = cfg.run_seed(run);
                let m = run_single(cfg, &base, v, seed);
                if let Ok(m) = &m {
                    info!("sweep {} run {run} (seed {seed}): {m:.4}", fmt_value(v));
                }
                (v, run, seed, m)
            })
            .collect()
    });

    fs::create_dir_all(&cfg.output).map_err(|source| CliError::File {
        path: cfg.output.clone(),
        source,
    })?;
    write(&cfg.output, "config.txt", &cfg.to_text())?;
    let mut records = Vec::new();
    let mut failure = None;
    for (v, run, seed, m) in outcomes {
        match m {
            Ok(metric) => records.push(RunRecord {
                sweep_value: v,
                run,
                seed,
                metric,
            }),
            Err(e) if failure.is_none() => failure = Some((v, seed, e)),
            Err(_) => {}
        }
    }
    write(&cfg.output, "results.csv", &results_csv(&records))?;
    if let Some((v, seed, e)) = failure {
        return Err(match e {
            bifilter::Error::Diverged { .. } | bifilter::Error::NonFinite { .. } => CliError::Diverged {
                value: fmt_value(v),
                seed,
                source: e,
            },
            other => CliError::Core(other),
        });
    }
    let summary = summarize(&records, metric_name(cfg.task))?;
    write(&cfg.output, "summary.md", &summary_markdown(cfg, &summary))?;
    if cfg.gnuplot {
        write(&cfg.output, "sweep.dat", &gnuplot_data(&summary))?;
    }
    Ok(ExperimentReport { records, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let records = vec![
            RunRecord {
                sweep_value: None,
                run: 0,
                seed: 7,
                metric: 0.1 + 0.2,
            },
            RunRecord {
                sweep_value: Some(0.3),
                run: 1,
                seed: 8,
                metric: 2.0 / 3.0,
            },
        ];
        assert_eq!(parse_results_csv(&results_csv(&records)).unwrap(), records);
        assert!(parse_results_csv("a,b\n").is_err());
    }

    #[test]
    fn summary_groups_by_value() {
        let rec = |v: f64, m: f64| RunRecord {
            sweep_value: Some(v),
            run: 0,
            seed: 0,
            metric: m,
        };
        let s = summarize(&[rec(0.4, 0.7), rec(0.8, 0.5), rec(0.4, 0.9)], "acc").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].sweep_value, Some(0.4));
        assert!((s[0].report.mean - 0.8).abs() < 1e-15 && (s[0].report.std - 0.1).abs() < 1e-15);
        assert_eq!(gnuplot_data(&s).lines().count(), 3);
    }
}
