//! Experiment configuration: a flat `key = value` text file with dotted
//! section keys, `#` comments and blank lines.
//!
//! Resolution order: task defaults, then `preset`, then explicit keys.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bifilter::data::SbmConfig;
use bifilter::model::{Architecture, L2Mode, ModelConfig};
use bifilter::noise::NoiseCase;
use bifilter::train::TrainConfig;
use bifilter::{FilterParams, FilterVariant};

use crate::error::CliError;
use crate::preset::preset;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    NodeClassification,
    LinkPrediction,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::NodeClassification => "node_classification",
            Task::LinkPrediction => "link_prediction",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "node_classification" => Ok(Task::NodeClassification),
            "link_prediction" => Ok(Task::LinkPrediction),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArchKind {
    BiGcn,
    Gcn,
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchKind::BiGcn => "bigcn",
            ArchKind::Gcn => "gcn",
        })
    }
}

impl FromStr for ArchKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bigcn" => Ok(ArchKind::BiGcn),
            "gcn" => Ok(ArchKind::Gcn),
            other => Err(format!("unknown architecture {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub architecture: ArchKind,
    /// Hidden widths; for link prediction the last one is the embedding width.
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub l2_mode: L2Mode,
    pub p: f64,
    /// Shared step `2λ₁/(1+p) = 2λ₂/(1+p)`.
    pub lambda: f64,
    pub k: usize,
    pub variant: FilterVariant,
    pub l1_reg_weight: f64,
    /// `λ` of the baseline `I − λL₁`.
    pub baseline_lambda: f64,
}

impl ModelSpec {
    pub fn filter(&self) -> FilterParams {
        FilterParams::from_step(self.lambda, self.p, self.k, self.variant)
    }

    /// Model for `input` features; `output` appends a class layer.
    pub fn config(&self, input: usize, output: Option<usize>) -> ModelConfig {
        let mut layer_dims = vec![input];
        layer_dims.extend_from_slice(&self.hidden);
        layer_dims.extend(output);
        ModelConfig {
            layer_dims,
            dropout: self.dropout,
            l2_mode: self.l2_mode,
            filter: self.filter(),
            l1_reg_weight: self.l1_reg_weight,
            architecture: match self.architecture {
                ArchKind::BiGcn => Architecture::BiGcn,
                ArchKind::Gcn => Architecture::Gcn {
                    lambda: self.baseline_lambda,
                    variant: self.variant,
                },
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    Dir(PathBuf),
    Sbm(SbmConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSweep {
    pub case: NoiseCase,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub dataset: DatasetSource,
    pub model: ModelSpec,
    /// `seed` is replaced per run.
    pub train: TrainConfig,
    pub noise: Option<NoiseSweep>,
    pub runs: usize,
    /// Run `r` uses seed `seed + r`.
    pub seed: u64,
    pub output: PathBuf,
    /// Also write `sweep.dat` for gnuplot.
    pub gnuplot: bool,
    /// Train/val/test edge ratios for link prediction.
    pub edge_split: (f64, f64, f64),
}

impl ExperimentConfig {
    pub fn defaults(task: Task) -> Self {
        let link = task == Task::LinkPrediction;
        ExperimentConfig {
            task,
            dataset: DatasetSource::Sbm(SbmConfig::default()),
            model: ModelSpec {
                architecture: ArchKind::BiGcn,
                hidden: if link { vec![32, 32] } else { vec![16] },
                dropout: 0.5,
                l2_mode: L2Mode::Learnable,
                p: if link { 8.5 } else { 3.0 },
                lambda: if link { 1.2 } else { 1.8 },
                k: 2,
                variant: FilterVariant::Taylor,
                l1_reg_weight: 1e-4,
                baseline_lambda: 1.0,
            },
            train: if link {
                TrainConfig::link_default(0)
            } else {
                TrainConfig::node_default(0)
            },
            noise: None,
            runs: 10,
            seed: 0,
            output: PathBuf::from("results"),
            gnuplot: false,
            edge_split: (0.85, 0.05, 0.10),
        }
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed.wrapping_add(run as u64)
    }

    pub fn sweep_values(&self) -> Vec<Option<f64>> {
        match &self.noise {
            Some(n) => n.values.iter().map(|&v| Some(v)).collect(),
            None => vec![None],
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: bifilter::Error| CliError::Config(e.to_string());
        if self.runs == 0 {
            return Err(CliError::Config("runs must be >= 1".into()));
        }
        if self.model.hidden.is_empty() && self.task == Task::LinkPrediction {
            return Err(CliError::Config(
                "link prediction needs at least one hidden width".into(),
            ));
        }
        self.model.config(2, Some(2)).validate().map_err(cfg)?;
        self.train.validate().map_err(cfg)?;
        if let Some(noise) = &self.noise {
            if noise.values.is_empty() {
                return Err(CliError::Config("noise.values is empty".into()));
            }
            for &v in &noise.values {
                noise.case.check(v).map_err(cfg)?;
            }
        }
        if let DatasetSource::Sbm(sbm) = &self.dataset {
            sbm.validate().map_err(cfg)?;
        }
        let (a, b, c) = self.edge_split;
        if a < 0.0 || b < 0.0 || c < 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(CliError::Config(format!(
                "link.split {:?} must sum to 1",
                self.edge_split
            )));
        }
        Ok(())
    }

    /// Fully resolved config in the input format; parsing it gives `self` back.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let mut lines = vec![
            format!("task = {}", self.task),
            format!("runs = {}", self.runs),
            format!("seed = {}", self.seed),
            format!("output.dir = {}", self.output.display()),
            format!("output.gnuplot = {}", self.gnuplot),
        ];
        match &self.dataset {
            DatasetSource::Dir(p) => lines.push(format!("dataset.path = {}", p.display())),
            DatasetSource::Sbm(s) => {
                lines.push(format!("dataset.sbm.communities = {}", s.communities));
                lines.push(format!("dataset.sbm.nodes_per_community = {}", s.nodes_per_community));
                lines.push(format!("dataset.sbm.p_in = {}", s.p_in));
                lines.push(format!("dataset.sbm.p_out = {}", s.p_out));
                lines.push(format!("dataset.sbm.feature_dim = {}", s.feature_dim));
                lines.push(format!("dataset.sbm.blocks = {}", s.blocks));
                lines.push(format!("dataset.sbm.signal = {}", s.signal));
                lines.push(format!("dataset.sbm.latent = {}", s.latent));
                lines.push(format!("dataset.sbm.sigma = {}", s.sigma));
                lines.push(format!("dataset.sbm.train_fraction = {}", s.train_fraction));
                lines.push(format!("dataset.sbm.val_fraction = {}", s.val_fraction));
            }
        }
        lines.extend([
            format!("model.architecture = {}", m.architecture),
            format!("model.hidden = {}", join(&m.hidden)),
            format!("model.dropout = {}", m.dropout),
            format!("model.l2_mode = {}", m.l2_mode),
            format!("model.p = {}", m.p),
            format!("model.lambda = {}", m.lambda),
            format!("model.k = {}", m.k),
            format!("model.variant = {}", m.variant),
            format!("model.l1_reg_weight = {}", m.l1_reg_weight),
            format!("model.baseline_lambda = {}", m.baseline_lambda),
            format!("train.learning_rate = {}", t.learning_rate),
            format!("train.weight_decay = {}", t.weight_decay),
            format!("train.max_epochs = {}", t.max_epochs),
            format!("train.patience = {}", t.patience),
            format!("train.eval_every = {}", t.eval_every),
        ]);
        if let Some(n) = &self.noise {
            lines.push(format!("noise.case = {}", n.case.name()));
            lines.push(format!("noise.values = {}", join(&n.values)));
        }
        let (a, b, c) = self.edge_split;
        lines.push(format!("link.split = {a},{b},{c}"));
        lines.join("\n") + "\n"
    }
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

struct Entry<'a> {
    key: &'a str,
    value: &'a str,
    line: usize,
}

fn scalar<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("bad value {value:?}: {e}"))
}

fn list<T: FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(scalar)
        .collect()
}

fn set(cfg: &mut ExperimentConfig, sbm: &mut SbmConfig, path: &mut Option<PathBuf>, e: &Entry) -> Result<bool, String> {
    let v = e.value;
    let mut touched_sbm = false;
    match e.key {
        "runs" => cfg.runs = scalar(v)?,
        "seed" => cfg.seed = scalar(v)?,
        "output.dir" => cfg.output = PathBuf::from(v),
        "output.gnuplot" => cfg.gnuplot = scalar(v)?,
        "dataset.path" => *path = Some(PathBuf::from(v)),
        "model.architecture" => cfg.model.architecture = scalar(v)?,
        "model.hidden" => cfg.model.hidden = list(v)?,
        "model.dropout" => cfg.model.dropout = scalar(v)?,
        "model.l2_mode" => cfg.model.l2_mode = scalar(v)?,
        "model.p" => cfg.model.p = scalar(v)?,
        "model.lambda" => cfg.model.lambda = scalar(v)?,
        "model.k" => cfg.model.k = scalar(v)?,
        "model.variant" => cfg.model.variant = scalar(v)?,
        "model.l1_reg_weight" => cfg.model.l1_reg_weight = scalar(v)?,
        "model.baseline_lambda" => cfg.model.baseline_lambda = scalar(v)?,
        "train.learning_rate" => cfg.train.learning_rate = scalar(v)?,
        "train.weight_decay" => cfg.train.weight_decay = scalar(v)?,
        "train.max_epochs" => cfg.train.max_epochs = scalar(v)?,
        "train.patience" => cfg.train.patience = scalar(v)?,
        "train.eval_every" => cfg.train.eval_every = scalar(v)?,
        "link.split" => {
            let r: Vec<f64> = list(v)?;
            if r.len() != 3 {
                return Err("link.split needs three ratios".into());
            }
            cfg.edge_split = (r[0], r[1], r[2]);
        }
        key if key.starts_with("dataset.sbm.") => {
            touched_sbm = true;
            match &key["dataset.sbm.".len()..] {
                "communities" => sbm.communities = scalar(v)?,
                "nodes_per_community" => sbm.nodes_per_community = scalar(v)?,
                "p_in" => sbm.p_in = scalar(v)?,
                "p_out" => sbm.p_out = scalar(v)?,
                "feature_dim" => sbm.feature_dim = scalar(v)?,
                "blocks" => sbm.blocks = scalar(v)?,
                "signal" => sbm.signal = scalar(v)?,
                "latent" => sbm.latent = scalar(v)?,
                "sigma" => sbm.sigma = scalar(v)?,
                "train_fraction" => sbm.train_fraction = scalar(v)?,
                "val_fraction" => sbm.val_fraction = scalar(v)?,
                _ => return Err(format!("unknown key {key:?}")),
            }
        }
        key => return Err(format!("unknown key {key:?}")),
    }
    Ok(touched_sbm)
}

/// Parses config text; `origin` names the source in error messages.
pub fn parse_config(text: &str, origin: &str) -> Result<ExperimentConfig, CliError> {
    let err = |line: usize, msg: String| CliError::ConfigLine {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut entries = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected `key = value`, got {content:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if let Some(first) = seen.insert(key, line) {
            return Err(err(line, format!("duplicate key {key:?} (first on line {first})")));
        }
        entries.push(Entry { key, value, line });
    }

    let find = |k: &str| entries.iter().find(|e| e.key == k);
    let preset_entry = find("preset");
    let preset = match preset_entry {
        Some(e) => Some(preset(e.value).map_err(|x| err(e.line, x.to_string()))?),
        None => None,
    };
    let task = match find("task") {
        Some(e) => {
            let t: Task = scalar(e.value).map_err(|m| err(e.line, m))?;
            if let (Some(p), Some(pe)) = (preset, preset_entry) {
                if p.task != t {
                    return Err(err(pe.line, format!("preset {} is for {}, not {t}", p.name, p.task)));
                }
            }
            t
        }
        None => preset.map_or(Task::NodeClassification, |p| p.task),
    };

    let mut cfg = ExperimentConfig::defaults(task);
    if let Some(p) = preset {
        cfg.model.p = p.p;
        cfg.model.lambda = p.lambda;
        cfg.model.k = p.k;
        cfg.model.hidden = p.hidden.to_vec();
    }
    let mut sbm = SbmConfig::default();
    let mut path = None;
    let mut sbm_line = None;
    let (mut case, mut values) = (None, None);
    for e in &entries {
        match e.key {
            "preset" | "task" => {}
            "noise.case" => case = Some((scalar::<NoiseCase>(e.value).map_err(|m| err(e.line, m))?, e.line)),
            "noise.values" => values = Some((list::<f64>(e.value).map_err(|m| err(e.line, m))?, e.line)),
            _ => {
                if set(&mut cfg, &mut sbm, &mut path, e).map_err(|m| err(e.line, m))? {
                    sbm_line.get_or_insert(e.line);
                }
            }
        }
    }
    cfg.dataset = match (path, sbm_line) {
        (Some(_), Some(line)) => {
            return Err(err(
                line,
                "dataset.path and dataset.sbm.* are mutually exclusive".into(),
            ))
        }
        (Some(p), None) => DatasetSource::Dir(p),
        (None, _) => DatasetSource::Sbm(sbm),
    };
    cfg.noise = match (case, values) {
        (Some((case, _)), Some((values, _))) => Some(NoiseSweep { case, values }),
        (None, None) => None,
        (Some((_, line)), None) | (None, Some((_, line))) => {
            return Err(err(line, "noise.case and noise.values go together".into()))
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and parses a config file. A relative `dataset.path` is resolved
/// against the file's directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = parse_config(&text, &path.display().to_string())?;
    if let DatasetSource::Dir(dir) = &mut cfg.dataset {
        if dir.is_relative() {
            if let Some(parent) = path.parent() {
                *dir = parent.join(&*dir);
            }
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_then_overrides() {
        let cfg = parse_config(
            "preset = amz-photos-noise\nmodel.lambda = 0.5 # override\n\nruns = 3\n",
            "t",
        )
        .unwrap();
        assert_eq!((cfg.model.p, cfg.model.lambda, cfg.runs), (1.5, 0.5, 3));
        assert_eq!(cfg.task, Task::NodeClassification);
        assert_eq!(cfg.train.patience, 100);
    }

    #[test]
    fn linkpred_preset_sets_task_and_schedule() {
        let cfg = parse_config("preset = linkpred\n", "t").unwrap();
        assert_eq!(cfg.task, Task::LinkPrediction);
        assert_eq!((cfg.train.max_epochs, cfg.train.eval_every), (100, 10));
        assert_eq!(cfg.model.config(10, None).layer_dims, vec![10, 32, 32]);
        assert!(parse_config("preset = linkpred\ntask = node_classification\n", "t").is_err());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_config("runs = 2\nmodel.colour = red\n", "cfg.txt").unwrap_err();
        assert_eq!(e.to_string(), "cfg.txt:2: unknown key \"model.colour\"");
        assert_eq!(e.exit_code(), 2);
        let e = parse_config("runs = 2\nruns = 3\n", "c").unwrap_err();
        assert!(e.to_string().contains("duplicate"));
        assert!(parse_config("runs\n", "c").is_err());
        assert!(parse_config("noise.case = noise_level\n", "c").is_err());
        assert!(parse_config("noise.case = noise_level\nnoise.values = 0.95\n", "c").is_err());
        assert!(parse_config("runs = 0\n", "c").is_err());
        assert!(parse_config("dataset.path = x\ndataset.sbm.p_in = 0.1\n", "c").is_err());
    }

    #[test]
    fn resolved_text_round_trips() {
        let cfg = parse_config(
            "noise.case = structure_mistakes\nnoise.values = 0, 0.005, 0.01\ndataset.sbm.signal = 0.3\nmodel.architecture = gcn\n",
            "t",
        )
        .unwrap();
        assert_eq!(parse_config(&cfg.to_text(), "t").unwrap(), cfg);
        let dir = parse_config("dataset.path = data/cora\nmodel.hidden = 8,8\n", "t").unwrap();
        assert_eq!(parse_config(&dir.to_text(), "t").unwrap(), dir);
    }
}
