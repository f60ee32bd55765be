//! Multi-run experiments: split, train the estimator, build both neighborhood
//! kinds, train and evaluate the classifier, and summarise as a JSON report.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage, StageExt};
use crate::estimator::{m3s_train, save_estimator, EmbeddingSource, MiEstimator, SelfEmbeddings};
use crate::graph::{
    homophily_over, homophily_ratio, load_dataset, mean_1hop_features, noise_ratio, stratified_split, Dataset,
    NeighborhoodMap, Split,
};
use crate::model::{evaluate, train_classifier, Classifier, LnlModel, MlpClassifier, Mode, ModelInputs};
use crate::neighborhoods::{
    local_neighborhood, louvain, mi_cluster, non_local_neighborhood, weight_edges, write_groups, Clustering, Partition,
};
use crate::numerics::{SparseRows, Tensor2, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeSource {
    Raw,
    Mean1hop,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Local,
    Nonlocal,
    Bilevel,
    MlpRaw,
    MlpMean,
}

impl RunMode {
    pub fn model_mode(self) -> Option<Mode> {
        match self {
            RunMode::Local => Some(Mode::Local),
            RunMode::Nonlocal => Some(Mode::Nonlocal),
            RunMode::Bilevel => Some(Mode::Bilevel),
            RunMode::MlpRaw | RunMode::MlpMean => None,
        }
    }

    pub fn is_baseline(self) -> bool {
        self.model_mode().is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset_dir: PathBuf,
    pub se_source: SeSource,
    pub mode: RunMode,
    pub runs: usize,
    pub train: TrainConfig,
    pub out: Option<PathBuf>,
    /// Where to write the final run's partition, clustering and estimator.
    #[serde(default)]
    pub dump_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(dataset_dir: impl Into<PathBuf>, mode: RunMode) -> Self {
        Self {
            dataset_dir: dataset_dir.into(),
            se_source: SeSource::Auto,
            mode,
            runs: 10,
            train: TrainConfig::default(),
            out: None,
            dump_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub test_accuracy: f64,
    pub best_val_accuracy: f64,
    pub epochs_run: usize,
}

/// Mean and population standard deviation of the per-run test accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// Label-agreement diagnostics; `None` where undefined or not computed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(rename = "HR_1hop")]
    pub hr_1hop: Option<f64>,
    #[serde(rename = "HR_nonlocal")]
    pub hr_nonlocal: Option<f64>,
    #[serde(rename = "NR_2hop")]
    pub nr_2hop: Option<f64>,
    #[serde(rename = "NR_local")]
    pub nr_local: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    pub aggregate: Aggregate,
    pub diagnostics: Diagnostics,
    pub wall_clock_s: f64,
}

/// Self-embedding input per dataset for `auto`: mean 1-hop features for the
/// citation and Wikipedia graphs, raw features otherwise.
pub fn choose_se_source(dataset_name: &str) -> EmbeddingSource {
    match dataset_name.to_ascii_lowercase().as_str() {
        "cora" | "citeseer" | "chameleon" | "squirrel" => EmbeddingSource::Mean1hop,
        _ => EmbeddingSource::Raw,
    }
}

fn resolve_source(se: SeSource, d: &Dataset) -> EmbeddingSource {
    match se {
        SeSource::Raw => EmbeddingSource::Raw,
        SeSource::Mean1hop => EmbeddingSource::Mean1hop,
        SeSource::Auto => choose_se_source(d.name()),
    }
}

fn source_features(d: &Dataset, source: EmbeddingSource) -> Tensor2 {
    match source {
        EmbeddingSource::Raw => d.features().clone(),
        EmbeddingSource::Mean1hop => mean_1hop_features(d),
    }
}

/// Estimator, embeddings and both neighborhood kinds for one split.
#[derive(Debug, Clone)]
pub struct Neighborhoods {
    pub estimator: MiEstimator,
    pub embeddings: SelfEmbeddings,
    pub partition: Option<Partition>,
    pub local: Option<NeighborhoodMap>,
    pub clustering: Option<Clustering>,
    pub nonlocal: Option<NeighborhoodMap>,
}

/// Trains the estimator on `split.train` and builds the requested maps.
#[allow(clippy::too_many_arguments)]
pub fn build_neighborhoods(
    d: &Dataset,
    split: &Split,
    x: &SparseRows,
    source: EmbeddingSource,
    cfg: &TrainConfig,
    want_local: bool,
    want_nonlocal: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Neighborhoods> {
    let est = MiEstimator::new(x.cols(), cfg.hidden_dim, cfg.se_dim, rng);
    let out = m3s_train(est, x, source, &split.train, d.labels(), d.class_count(), cfg, rng).at(Stage::Estimator)?;
    let (estimator, embeddings) = (out.estimator, out.embeddings);

    let (partition, local) = if want_local {
        let seed = rng.random();
        let p = weight_edges(d, &estimator, &embeddings).map(|g| louvain(&g, seed)).at(Stage::LocalNeighborhood)?;
        let m = local_neighborhood(&p);
        (Some(p), Some(m))
    } else {
        (None, None)
    };

    let (clustering, nonlocal) = if want_nonlocal {
        let mut seeds = vec![None; d.node_count()];
        for &u in &split.train {
            seeds[u] = d.label(u);
        }
        let k = cfg.clusters.unwrap_or(d.class_count()).min(d.node_count());
        let cl = mi_cluster(&estimator, &embeddings, &seeds, k, cfg.cluster_max_iter, cfg.surrogate_threshold, rng)
            .at(Stage::NonLocalNeighborhood)?;
        let m = non_local_neighborhood(d, &cl, cfg.nl_sample_limit).at(Stage::NonLocalNeighborhood)?;
        (Some(cl), Some(m))
    } else {
        (None, None)
    };
    Ok(Neighborhoods { estimator, embeddings, partition, local, clustering, nonlocal })
}

fn optional(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Undefined(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Graph-only diagnostics: 1-hop homophily and 2-hop noise ratio.
pub fn structural_diagnostics(d: &Dataset) -> Result<Diagnostics> {
    Ok(Diagnostics {
        hr_1hop: optional(homophily_ratio(d))?,
        nr_2hop: optional(noise_ratio(d, &NeighborhoodMap::k_hop(d, 2)))?,
        ..Diagnostics::default()
    })
}

/// Structural diagnostics plus the label agreement of the learned maps.
pub fn neighborhood_diagnostics(d: &Dataset, nb: &Neighborhoods) -> Result<Diagnostics> {
    let mut diag = structural_diagnostics(d)?;
    if let Some(m) = &nb.local {
        diag.nr_local = optional(noise_ratio(d, m))?;
    }
    if let Some(m) = &nb.nonlocal {
        diag.hr_nonlocal = optional(homophily_over(d, m))?;
    }
    Ok(diag)
}

/// Diagnostics for one split seeded by `cfg.train.seed`. Unless
/// `structural_only`, the estimator is trained and both maps are built.
pub fn diagnostics(d: &Dataset, cfg: &ExperimentConfig, structural_only: bool) -> Result<Diagnostics> {
    cfg.validate()?;
    if structural_only {
        return structural_diagnostics(d).at(Stage::Report);
    }
    let seed = cfg.train.seed;
    let split = stratified_split(d, seed).at(Stage::Split)?;
    let source = resolve_source(cfg.se_source, d);
    let x = SparseRows::from_dense(&source_features(d, source));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = build_neighborhoods(d, &split, &x, source, &cfg.train, true, true, &mut rng)?;
    neighborhood_diagnostics(d, &nb).at(Stage::Report)
}

struct RunResult {
    record: RunRecord,
    neighborhoods: Option<Neighborhoods>,
}

fn run_once(d: &Dataset, cfg: &ExperimentConfig, run: usize, last: bool) -> Result<RunResult> {
    let seed = cfg.train.seed + run as u64;
    let split = stratified_split(d, seed).at(Stage::Split)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tc = &cfg.train;

    let (mut model, neighborhoods): (Box<dyn Classifier>, Option<Neighborhoods>) = match cfg.mode.model_mode() {
        None => {
            let feats = match cfg.mode {
                RunMode::MlpMean => mean_1hop_features(d),
                _ => d.features().clone(),
            };
            let m = MlpClassifier::new(SparseRows::from_dense(&feats), tc.hidden_dim, d.class_count(), &mut rng)
                .at(Stage::Classifier)?;
            (Box::new(m), None)
        }
        Some(mode) => {
            let source = resolve_source(cfg.se_source, d);
            let x = SparseRows::from_dense(&source_features(d, source));
            // the final run also builds the unused map so diagnostics cover both kinds
            let nb = build_neighborhoods(
                d,
                &split,
                &x,
                source,
                tc,
                mode.uses_local() || last,
                mode.uses_nonlocal() || last,
                &mut rng,
            )?;
            let inputs = ModelInputs::new(
                x,
                nb.embeddings.z.clone(),
                nb.local.as_ref().filter(|_| mode.uses_local()),
                nb.nonlocal.as_ref().filter(|_| mode.uses_nonlocal()),
            )
            .at(Stage::Classifier)?;
            let m = LnlModel::new(inputs, d.class_count(), mode, tc, &mut rng).at(Stage::Classifier)?;
            (Box::new(m), Some(nb))
        }
    };
    let outcome = train_classifier(model.as_mut(), d.labels(), &split, tc, &mut rng).at(Stage::Classifier)?;
    let test_accuracy = evaluate(model.as_ref(), &split.test, d.labels()).at(Stage::Evaluate)?;
    Ok(RunResult {
        record: RunRecord {
            seed,
            test_accuracy,
            best_val_accuracy: outcome.best_val_accuracy,
            epochs_run: outcome.epochs_run,
        },
        neighborhoods,
    })
}

/// Runs `cfg.runs` independent splits on an in-memory dataset.
pub fn run_on_dataset(d: &Dataset, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut runs = Vec::with_capacity(cfg.runs);
    let mut diagnostics = Diagnostics::default();
    for r in 0..cfg.runs {
        let last = r + 1 == cfg.runs;
        let res = run_once(d, cfg, r, last)?;
        if last {
            diagnostics = match &res.neighborhoods {
                Some(nb) => neighborhood_diagnostics(d, nb),
                None => structural_diagnostics(d),
            }
            .at(Stage::Report)?;
            if let (Some(dir), Some(nb)) = (&cfg.dump_dir, &res.neighborhoods) {
                dump(dir, nb).at(Stage::Report)?;
            }
        }
        runs.push(res.record);
    }
    let accs: Vec<f64> = runs.iter().map(|r| r.test_accuracy).collect();
    Ok(ExperimentReport {
        config: cfg.clone(),
        aggregate: Aggregate::of(&accs),
        runs,
        diagnostics,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

fn dump(dir: &Path, nb: &Neighborhoods) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if let Some(p) = &nb.partition {
        write_groups(dir.join("partition.tsv"), p.assignment())?;
    }
    if let Some(c) = &nb.clustering {
        write_groups(dir.join("clusters.tsv"), &c.assignment)?;
    }
    save_estimator(dir.join("estimator.txt"), &nb.estimator, &nb.embeddings)
}

/// Loads `cfg.dataset_dir` and runs the configured experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let d = load_dataset(&cfg.dataset_dir).at(Stage::Load)?;
    let report = run_on_dataset(&d, cfg)?;
    if let Some(out) = &cfg.out {
        emit_report(&report, out).at(Stage::Report)?;
    }
    Ok(report)
}

/// [`run_experiment`] restricted to the MLP baselines.
pub fn run_baseline(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if !cfg.mode.is_baseline() {
        return Err(Error::Config(format!("{:?} is not a baseline mode", cfg.mode)));
    }
    run_experiment(cfg)
}

pub fn emit_report(report: &ExperimentReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(report)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ExperimentReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
