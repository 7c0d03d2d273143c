//! Experiment config files: the TOML schema, `-O key=value` overrides, the
//! `FEDPKT_SEED` environment override, and resolution into core run specs.
//!
//! Precedence, weakest first: file values, then `-O` overrides, then
//! `FEDPKT_SEED`. Paths are interpreted relative to the config file.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize, Serializer};

use fedpkt_core::experiment::{
    ExperimentSpec, FeatureConfig, FedOptions, ModelFamily, Task,
};
use fedpkt_core::features::FeatureMode;
use fedpkt_core::fed::{EvalSet, FedConfig, SweepPoint};
use fedpkt_core::partition::{SplitMode, SplitSpec};
use fedpkt_core::svm::Hyperparams;
use fedpkt_core::trace::Strictness;
use fedpkt_core::tree::TreeParams;

/// Minibatch size: a positive integer, or `"inf"` / `inf` for full batches.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum BatchSetting {
    Size(u64),
    Float(f64),
    Text(String),
}

impl BatchSetting {
    /// Converts to the core representation, where `None` means full batches.
    pub fn resolve(&self) -> Result<Option<usize>> {
        match self {
            BatchSetting::Size(n) if *n >= 1 => Ok(Some(*n as usize)),
            BatchSetting::Size(n) => bail!("batch must be at least 1 or \"inf\", got {n}"),
            BatchSetting::Float(f) if f.is_infinite() && *f > 0.0 => Ok(None),
            BatchSetting::Float(f) => bail!("batch must be an integer or \"inf\", got {f}"),
            BatchSetting::Text(t) if t == "inf" => Ok(None),
            BatchSetting::Text(t) => bail!("batch must be an integer or \"inf\", got {t:?}"),
        }
    }
}

impl Serialize for BatchSetting {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self.resolve() {
            Ok(Some(n)) => serializer.serialize_u64(n as u64),
            Ok(None) => serializer.serialize_str("inf"),
            Err(_) => match self {
                BatchSetting::Size(n) => serializer.serialize_u64(*n),
                BatchSetting::Float(f) => serializer.serialize_f64(*f),
                BatchSetting::Text(t) => serializer.serialize_str(t),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesSection {
    pub mode: FeatureMode,
    pub include_file_request: bool,
    pub min_df: usize,
    pub stopword_top_fraction: f64,
}

impl Default for FeaturesSection {
    fn default() -> FeaturesSection {
        let d = FeatureConfig::default();
        FeaturesSection {
            mode: d.mode,
            include_file_request: d.include_file_request,
            min_df: d.min_df,
            stopword_top_fraction: d.stopword_top_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub clients: usize,
    pub mode: SplitMode,
    pub min_frac: f64,
    pub train_frac: f64,
    pub balance: bool,
    pub balance_test: bool,
}

impl Default for SplitSection {
    fn default() -> SplitSection {
        let d = SplitSpec::default();
        SplitSection {
            clients: d.clients,
            mode: d.mode,
            min_frac: d.min_frac,
            train_frac: d.train_frac,
            balance: d.balance,
            balance_test: d.balance_test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperSection {
    pub eta: f64,
    pub lambda: f64,
    pub batch: BatchSetting,
    /// Local epochs per federation round.
    pub epochs: usize,
    /// Full training passes for local, centralized, and teacher models.
    pub passes: usize,
}

impl Default for HyperSection {
    fn default() -> HyperSection {
        let d = Hyperparams::default();
        HyperSection {
            eta: d.eta,
            lambda: d.lambda,
            batch: match d.batch_size {
                Some(n) => BatchSetting::Size(n as u64),
                None => BatchSetting::Text("inf".to_string()),
            },
            epochs: d.epochs,
            passes: ExperimentSpec::default().passes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct FedSection {
    pub client_fraction: f64,
    pub rounds_max: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_f1: Option<f64>,
    pub eval_set: EvalSet,
    pub average_over_all: bool,
}

impl Default for FedSection {
    fn default() -> FedSection {
        let d = FedOptions::default();
        FedSection {
            client_fraction: d.client_fraction,
            rounds_max: d.rounds_max,
            target_f1: d.target_f1,
            eval_set: d.eval_set,
            average_over_all: d.average_over_all,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeSection {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeSection {
    fn default() -> TreeSection {
        let d = TreeParams::default();
        TreeSection { max_depth: d.max_depth, min_samples_leaf: d.min_samples_leaf }
    }
}

/// Grid axes for the `sweep` subcommand; omitted axes fall back to the base
/// value from `[fed]` / `[hyper]`.
#[derive(Debug, Clone, PartialEq, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub client_fractions: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batches: Option<Vec<BatchSetting>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<Vec<usize>>,
}

/// The documented config schema. Scalar keys sit at the top level; each
/// section mirrors one core parameter struct.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    /// Canonical trace to read; required by data-driven subcommands.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    /// Directory receiving all output artifacts.
    pub output_dir: String,
    pub task: Task,
    /// Training regime for `train`; `federate` and `transfer` set their own.
    pub family: ModelFamily,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub app_filter: Option<String>,
    pub strictness: Strictness,
    pub runs: usize,
    pub seed: u64,
    pub features: FeaturesSection,
    pub split: SplitSection,
    pub hyper: HyperSection,
    pub fed: FedSection,
    pub tree: TreeSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

impl Default for ConfigFile {
    fn default() -> ConfigFile {
        ConfigFile {
            trace: None,
            output_dir: "out".to_string(),
            task: Task::Pii,
            family: ModelFamily::Centralized,
            app_filter: None,
            strictness: Strictness::Strict,
            runs: 1,
            seed: 0,
            features: FeaturesSection::default(),
            split: SplitSection::default(),
            hyper: HyperSection::default(),
            fed: FedSection::default(),
            tree: TreeSection::default(),
            sweep: None,
        }
    }
}

/// A config after overrides, environment, path resolution, and validation.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub trace: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub strictness: Strictness,
    pub spec: ExperimentSpec,
    /// Cross product of the `[sweep]` axes, when the section is present.
    pub sweep: Option<Vec<SweepPoint>>,
    /// Normalized copy for `--dry-run` echoing.
    pub file: ConfigFile,
}

/// Builds the federation config the core simulator consumes.
pub fn fed_config(spec: &ExperimentSpec, seed: u64) -> FedConfig {
    FedConfig {
        clients: spec.split.clients,
        client_fraction: spec.fed.client_fraction,
        batch_size: spec.hyper.batch_size,
        epochs: spec.hyper.epochs,
        rounds_max: spec.fed.rounds_max,
        eta: spec.hyper.eta,
        lambda: spec.hyper.lambda,
        seed,
        target_f1: spec.fed.target_f1,
        eval_set: spec.fed.eval_set,
        average_over_all: spec.fed.average_over_all,
    }
}

/// Applies one `section.key=value` override onto the raw TOML table. The
/// value is parsed as TOML when possible and falls back to a string, so
/// `-O fed.rounds_max=50`, `-O task=ad`, and `-O hyper.batch=inf` all work.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .with_context(|| format!("override {spec:?} must look like key=value"))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("override {spec:?} has an empty key segment");
    }
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed override table has key v"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut current = table;
    for key in &keys[..keys.len() - 1] {
        current = current
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .with_context(|| format!("override {path:?} descends into non-table key {key:?}"))?;
    }
    current.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

fn env_seed() -> Result<Option<u64>> {
    match env::var("FEDPKT_SEED") {
        Ok(text) => {
            let seed = text
                .trim()
                .parse::<u64>()
                .map_err(|_| anyhow!("FEDPKT_SEED must be an unsigned integer, got {text:?}"))?;
            Ok(Some(seed))
        }
        Err(env::VarError::NotPresent) => Ok(None),
        Err(env::VarError::NotUnicode(_)) => bail!("FEDPKT_SEED is not valid UTF-8"),
    }
}

fn build_spec(file: &ConfigFile) -> Result<ExperimentSpec> {
    let batch_size = file.hyper.batch.resolve().context("hyper.batch")?;
    let split = &file.split;
    if split.clients == 0 {
        bail!("split.clients must be at least 1");
    }
    if !(split.train_frac > 0.0 && split.train_frac < 1.0) {
        bail!("split.train_frac must be within (0, 1), got {}", split.train_frac);
    }
    if !(0.0..=1.0).contains(&split.min_frac) {
        bail!("split.min_frac must be within [0, 1], got {}", split.min_frac);
    }
    Ok(ExperimentSpec {
        task: file.task,
        app_filter: file.app_filter.clone(),
        features: FeatureConfig {
            mode: file.features.mode,
            include_file_request: file.features.include_file_request,
            min_df: file.features.min_df,
            stopword_top_fraction: file.features.stopword_top_fraction,
        },
        split: SplitSpec {
            clients: split.clients,
            mode: split.mode,
            min_frac: split.min_frac,
            train_frac: split.train_frac,
            balance: split.balance,
            balance_test: split.balance_test,
        },
        family: file.family,
        hyper: Hyperparams {
            eta: file.hyper.eta,
            lambda: file.hyper.lambda,
            batch_size,
            epochs: file.hyper.epochs,
            seed: 0,
        },
        passes: file.hyper.passes,
        fed: FedOptions {
            client_fraction: file.fed.client_fraction,
            rounds_max: file.fed.rounds_max,
            target_f1: file.fed.target_f1,
            eval_set: file.fed.eval_set,
            average_over_all: file.fed.average_over_all,
        },
        tree: TreeParams {
            max_depth: file.tree.max_depth,
            min_samples_leaf: file.tree.min_samples_leaf,
        },
        runs: file.runs,
        seed: file.seed,
    })
}

fn build_grid(file: &ConfigFile, spec: &ExperimentSpec) -> Result<Option<Vec<SweepPoint>>> {
    let Some(section) = &file.sweep else {
        return Ok(None);
    };
    let fractions = section
        .client_fractions
        .clone()
        .unwrap_or_else(|| vec![spec.fed.client_fraction]);
    let batches: Vec<Option<usize>> = match &section.batches {
        Some(list) => list
            .iter()
            .map(|b| b.resolve().context("sweep.batches"))
            .collect::<Result<_>>()?,
        None => vec![spec.hyper.batch_size],
    };
    let epochs = section.epochs.clone().unwrap_or_else(|| vec![spec.hyper.epochs]);
    if fractions.is_empty() || batches.is_empty() || epochs.is_empty() {
        bail!("sweep axes must not be empty lists");
    }
    let mut grid = Vec::new();
    for &client_fraction in &fractions {
        for &batch_size in &batches {
            for &e in &epochs {
                grid.push(SweepPoint { client_fraction, batch_size, epochs: e });
            }
        }
    }
    Ok(Some(grid))
}

/// Loads, overrides, and validates a config file.
///
/// Every failure in here is a config error (process exit code 1), so causes
/// are flattened into messages rather than kept as typed sources.
pub fn load(config_path: &Path, overrides: &[String]) -> Result<Resolved> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| anyhow!("cannot read config {}: {e}", config_path.display()))?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| anyhow!("config {}: {e}", config_path.display()))?;
    for ov in overrides {
        apply_override(&mut table, ov)?;
    }
    let mut file: ConfigFile = toml::Value::Table(table)
        .try_into()
        .map_err(|e| anyhow!("config {}: {e}", config_path.display()))?;
    if let Some(seed) = env_seed()? {
        file.seed = seed;
    }

    let base = config_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let resolve_path = |s: &str| {
        let p = Path::new(s);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let trace = file.trace.as_deref().map(resolve_path);
    let output_dir = resolve_path(&file.output_dir);
    if let Some(t) = &trace {
        file.trace = Some(t.display().to_string());
    }
    file.output_dir = output_dir.display().to_string();

    let spec = build_spec(&file)?;
    spec.validate().map_err(|e| anyhow!("config {}: {e}", config_path.display()))?;
    fed_config(&spec, spec.seed)
        .validate()
        .map_err(|e| anyhow!("config {}: {e}", config_path.display()))?;
    let sweep = build_grid(&file, &spec)?;
    Ok(Resolved { trace, output_dir, strictness: file.strictness, spec, sweep, file })
}

/// Renders the resolved config for `--dry-run`.
pub fn echo_toml(file: &ConfigFile) -> Result<String> {
    toml::to_string(file).context("cannot render resolved config")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".toml").tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn defaults_fill_every_section() {
        let f = write_config("trace = \"t.jsonl\"\n");
        let r = load(f.path(), &[]).unwrap();
        assert_eq!(r.spec.task, Task::Pii);
        assert_eq!(r.spec.split.clients, 1);
        assert_eq!(r.spec.hyper.batch_size, None);
        assert_eq!(r.spec.passes, 20);
        assert!(r.sweep.is_none());
        assert!(r.trace.unwrap().ends_with("t.jsonl"));
    }

    #[test]
    fn batch_accepts_integers_and_inf_spellings() {
        for (raw, want) in [
            ("batch = 16", Some(16)),
            ("batch = \"inf\"", None),
            ("batch = inf", None),
        ] {
            let f = write_config(&format!("[hyper]\n{raw}\n"));
            let r = load(f.path(), &[]).unwrap();
            assert_eq!(r.spec.hyper.batch_size, want, "{raw}");
        }
        let f = write_config("[hyper]\nbatch = 0\n");
        assert!(load(f.path(), &[]).is_err());
        let f = write_config("[hyper]\nbatch = \"sometimes\"\n");
        assert!(load(f.path(), &[]).is_err());
    }

    #[test]
    fn overrides_apply_in_order_and_reject_unknown_keys() {
        let f = write_config("seed = 1\n[fed]\nrounds_max = 10\n");
        let r = load(
            f.path(),
            &[
                "seed=2".to_string(),
                "fed.rounds_max=50".to_string(),
                "hyper.batch=inf".to_string(),
                "task=ad".to_string(),
            ],
        )
        .unwrap();
        assert_eq!(r.spec.seed, 2);
        assert_eq!(r.spec.fed.rounds_max, 50);
        assert_eq!(r.spec.hyper.batch_size, None);
        assert_eq!(r.spec.task, Task::Ad);

        let err = load(f.path(), &["fed.bogus=1".to_string()]).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = load(f.path(), &["seed.deep=1".to_string()]).unwrap_err();
        assert!(err.to_string().contains("non-table"), "{err}");
    }

    #[test]
    fn invalid_knobs_name_the_field() {
        let f = write_config("[fed]\nclient_fraction = 0.0\n");
        let err = load(f.path(), &[]).unwrap_err();
        assert!(format!("{err:#}").contains("client_fraction"), "{err}");

        let f = write_config("[split]\ntrain_frac = 1.5\n");
        let err = load(f.path(), &[]).unwrap_err();
        assert!(format!("{err:#}").contains("train_frac"), "{err}");
    }

    #[test]
    fn sweep_grid_is_the_cross_product_in_axis_order() {
        let f = write_config(
            "[sweep]\nclient_fractions = [1.0, 0.2]\nbatches = [10, \"inf\"]\nepochs = [1]\n",
        );
        let r = load(f.path(), &[]).unwrap();
        let grid = r.sweep.unwrap();
        assert_eq!(grid.len(), 4);
        assert_eq!(grid[0], SweepPoint { client_fraction: 1.0, batch_size: Some(10), epochs: 1 });
        assert_eq!(grid[1], SweepPoint { client_fraction: 1.0, batch_size: None, epochs: 1 });
        assert_eq!(grid[3], SweepPoint { client_fraction: 0.2, batch_size: None, epochs: 1 });
    }

    #[test]
    fn echo_round_trips_through_the_schema() {
        let f = write_config("trace = \"t.jsonl\"\nseed = 9\n[fed]\ntarget_f1 = 0.9\n");
        let r = load(f.path(), &[]).unwrap();
        let echoed = echo_toml(&r.file).unwrap();
        let parsed: ConfigFile = toml::from_str(&echoed).unwrap();
        assert_eq!(parsed, r.file);
        assert!(echoed.contains("seed = 9"), "{echoed}");
        assert!(echoed.contains("target_f1 = 0.9"), "{echoed}");
    }
}
