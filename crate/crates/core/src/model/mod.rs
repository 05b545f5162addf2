//! Desk-scale trainer: embedder + proxy bank under the confidence-weighted
//! objective.
//!
//! Per iteration: embed a class-balanced batch, compute per-sample proxy
//! losses, threshold them to get confidences, evaluate the similarity loss
//! and the semantic regularizer, and update the embedder and the proxies
//! with two independent Adam instances. The proxy loss never feeds the
//! embedder update; it exists to train the proxies and to score samples.

mod checkpoint;
mod embedder;
mod history;
mod optim;
mod sampler;

pub use checkpoint::{Checkpoint, TensorData, CHECKPOINT_VERSION};
pub use embedder::{Embedder, EmbedderConfig, EmbedderGrads, ForwardCache};
pub use history::{IterationRecord, TrainHistory};
pub use optim::{Adam, AdamConfig};
pub use sampler::sample_batch;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::confidence::{batch_confidences, ConfidenceConfig, ThresholdState};
use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::eval::noisy_identification;
use crate::losses::{
    ms_loss_grad_similarity, ms_loss_per_sample, procsim_objective, proxy_nca_per_sample,
    semantic_regularizer_grad_similarity, semantic_regularizer_per_sample,
    similarity_grad_to_embeddings, LossConfig, SemanticMatrixSet, SemanticTable,
    SimilarityMatrix, TopkAssignments,
};
use crate::numerics::LossVector;

/// One learnable unit-norm vector per class.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxyBank {
    matrix: Array2<f64>,
}

impl ProxyBank {
    /// Seeded isotropic Gaussian rows, normalized.
    pub fn init(class_count: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let mut matrix = Array2::from_shape_fn((class_count, dim), |_| {
            StandardNormal.sample(rng)
        });
        renormalize_rows(&mut matrix);
        ProxyBank { matrix }
    }

    /// Wraps rows that are already unit-norm (within 1e-6); the stored bits
    /// are kept untouched so checkpoints round-trip exactly.
    pub fn from_matrix(matrix: Array2<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::config("proxy bank must be non-empty"));
        }
        crate::losses::validate_unit_rows(&matrix, "proxy")?;
        Ok(ProxyBank { matrix })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn class_count(&self) -> usize {
        self.matrix.nrows()
    }

    fn renormalize(&mut self) {
        renormalize_rows(&mut self.matrix);
    }
}

fn renormalize_rows(matrix: &mut Array2<f64>) {
    for mut row in matrix.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 1e-12 {
            row.mapv_inplace(|v| v / norm);
        }
    }
}

/// Where the per-sample top-k class lists for the regularizer come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopkSource {
    /// Rank classes by cosine similarity between raw features and the
    /// semantic table rows (stand-in for an external classifier).
    #[default]
    Features,
    /// Use each sample's observed label as a top-1 list.
    ObservedLabel,
}

/// Full training configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub proxy_learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub classes_per_batch: usize,
    pub samples_per_class: usize,
    pub seed: u64,
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    /// When false, every sample gets unit confidence (plain similarity-loss
    /// training); thresholds and confidences are still recorded.
    pub use_confidence: bool,
    pub topk_source: TopkSource,
    pub confidence: ConfidenceConfig,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            proxy_learning_rate: 1e-3,
            weight_decay: 4e-4,
            epochs: 150,
            classes_per_batch: 4,
            samples_per_class: 4,
            seed: 0,
            hidden_dim: 128,
            embedding_dim: 512,
            use_confidence: true,
            topk_source: TopkSource::Features,
            confidence: ConfidenceConfig::default(),
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("proxy_learning_rate", self.proxy_learning_rate),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be nonnegative"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be positive"));
        }
        if self.classes_per_batch == 0 || self.samples_per_class == 0 {
            return Err(Error::config("batch composition must be positive"));
        }
        if self.classes_per_batch * self.samples_per_class < 4 {
            return Err(Error::config(
                "classes_per_batch * samples_per_class must be at least 4",
            ));
        }
        if self.embedding_dim == 0 {
            return Err(Error::config("embedding_dim must be positive"));
        }
        self.confidence.validate()?;
        self.loss.validate()
    }

    pub fn batch_size(&self) -> usize {
        self.classes_per_batch * self.samples_per_class
    }
}

/// Result of a training run.
pub struct TrainOutput {
    pub embedder: Embedder,
    pub proxies: ProxyBank,
    pub history: TrainHistory,
}

/// Trains on the observed labels of `dataset`.
///
/// `topk` supplies per-sample class lists for the regularizer; when absent
/// they are derived according to `cfg.topk_source`.
pub fn train(
    dataset: &FeatureDataset,
    semantic_table: &SemanticTable,
    topk: Option<&TopkAssignments>,
    cfg: &TrainConfig,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if semantic_table.class_count() != dataset.class_count() {
        return Err(Error::Config(format!(
            "semantic table has {} rows but the dataset has {} classes",
            semantic_table.class_count(),
            dataset.class_count()
        )));
    }
    let topk_rows = resolve_topk(dataset, semantic_table, topk, cfg)?;

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let arch = EmbedderConfig {
        input_dim: dataset.feature_dim(),
        hidden_dim: cfg.hidden_dim,
        embedding_dim: cfg.embedding_dim,
    };
    let mut embedder = Embedder::init(arch, &mut rng)?;
    let mut proxies = ProxyBank::init(dataset.class_count(), cfg.embedding_dim, &mut rng);

    let embedder_sizes = embedder_param_sizes(&embedder);
    let mut adam_embedder = Adam::new(
        AdamConfig::new(cfg.learning_rate, cfg.weight_decay),
        &embedder_sizes,
    );
    let mut adam_proxies = Adam::new(
        AdamConfig::new(cfg.proxy_learning_rate, 0.0),
        &[proxies.matrix.len()],
    );
    let mut threshold_state = ThresholdState::new(cfg.confidence.strategy);
    let mut history = TrainHistory::default();

    let n = cfg.batch_size();
    let iterations_per_epoch = dataset.len().div_ceil(n).max(1);
    let total_iterations = cfg.epochs * iterations_per_epoch;
    let uniform_proxy_weights = vec![1.0 / n as f64; n];
    let unit_sigma = vec![1.0; n];

    for iteration in 0..total_iterations {
        let started = std::time::Instant::now();
        let batch = sample_batch(dataset, cfg.classes_per_batch, cfg.samples_per_class, &mut rng)?;
        let mut features = Array2::zeros((n, dataset.feature_dim()));
        let mut labels = Vec::with_capacity(n);
        let mut corrupted = Vec::with_capacity(n);
        for (row, &idx) in batch.iter().enumerate() {
            let sample = &dataset.samples()[idx];
            for (k, &v) in sample.features.iter().enumerate() {
                features[(row, k)] = v;
            }
            labels.push(sample.observed_label);
            corrupted.push(sample.is_corrupted());
        }

        let cache = embedder.forward(&features)?;
        let embeddings = &cache.embeddings;

        let proxy_out = proxy_nca_per_sample(
            embeddings,
            &labels,
            proxies.matrix(),
            cfg.loss.proxy_scale,
            cfg.loss.include_target_in_denominator,
            &uniform_proxy_weights,
        )?;
        let proxy_losses = LossVector::new(proxy_out.per_sample.clone()).map_err(|e| {
            Error::TrainingAborted {
                iteration,
                message: format!("proxy loss became non-finite: {e}"),
            }
        })?;

        let conf = batch_confidences(&proxy_losses, &cfg.confidence, &mut threshold_state)?;
        let applied_sigma: &[f64] = if cfg.use_confidence {
            &conf.sigma
        } else {
            &unit_sigma
        };

        let sim = SimilarityMatrix::from_embeddings(embeddings)?;
        let ms_losses = ms_loss_per_sample(&sim, &labels, &cfg.loss)?;
        let ms_weights: Vec<f64> = applied_sigma.iter().map(|s| s / n as f64).collect();
        let mut grad_sim = ms_loss_grad_similarity(&sim, &labels, &cfg.loss, &ms_weights)?;

        let ssl_losses = if cfg.loss.omega > 0.0 {
            let batch_topk: Vec<Vec<usize>> =
                batch.iter().map(|&idx| topk_rows[idx].clone()).collect();
            let sem = SemanticMatrixSet::from_topk(semantic_table, &batch_topk)?;
            let losses = semantic_regularizer_per_sample(&sim, &sem, cfg.loss.temperature)?;
            let ssl_weights = vec![cfg.loss.omega / n as f64; n];
            grad_sim += &semantic_regularizer_grad_similarity(
                &sim,
                &sem,
                cfg.loss.temperature,
                &ssl_weights,
            )?;
            losses
        } else {
            vec![0.0; n]
        };

        let objective = procsim_objective(applied_sigma, &ms_losses, &ssl_losses, cfg.loss.omega)?;
        if !objective.is_finite() {
            return Err(Error::TrainingAborted {
                iteration,
                message: format!(
                    "objective became non-finite (tau = {}, mean proxy = {})",
                    conf.tau,
                    mean(proxy_losses.values())
                ),
            });
        }

        let grad_embeddings = similarity_grad_to_embeddings(embeddings, &grad_sim);
        let grads = embedder.backward(&cache, &grad_embeddings)?;

        adam_proxies.begin_step();
        adam_proxies.update(
            0,
            proxies.matrix.as_slice_mut().expect("contiguous"),
            proxy_out.grad_proxies.as_slice().expect("contiguous"),
        )?;
        proxies.renormalize();

        adam_embedder.begin_step();
        apply_embedder_grads(&mut adam_embedder, &mut embedder, &grads)?;

        history.records.push(make_record(
            iteration,
            &ms_losses,
            proxy_losses.values(),
            &conf.sigma,
            conf.tau,
            conf.fell_back_to_otsu,
            &corrupted,
            started.elapsed().as_secs_f64() * 1e3,
        ));
    }

    Ok(TrainOutput {
        embedder,
        proxies,
        history,
    })
}

fn embedder_param_sizes(embedder: &Embedder) -> Vec<usize> {
    let mut sizes = Vec::new();
    if let Some((w, b)) = &embedder.hidden {
        sizes.push(w.len());
        sizes.push(b.len());
    }
    sizes.push(embedder.out_weight.len());
    sizes.push(embedder.out_bias.len());
    sizes
}

fn apply_embedder_grads(
    adam: &mut Adam,
    embedder: &mut Embedder,
    grads: &EmbedderGrads,
) -> Result<()> {
    let mut slot = 0;
    if let Some((w, b)) = embedder.hidden.as_mut() {
        let gw = grads
            .hidden_weight
            .as_ref()
            .ok_or_else(|| Error::domain("missing hidden weight gradient"))?;
        adam.update(slot, w.as_slice_mut().expect("contiguous"), gw.as_slice().expect("contiguous"))?;
        slot += 1;
        let gb = grads
            .hidden_bias
            .as_ref()
            .ok_or_else(|| Error::domain("missing hidden bias gradient"))?;
        adam.update(slot, b.as_slice_mut().expect("contiguous"), gb.as_slice().expect("contiguous"))?;
        slot += 1;
    }
    adam.update(
        slot,
        embedder.out_weight.as_slice_mut().expect("contiguous"),
        grads.out_weight.as_slice().expect("contiguous"),
    )?;
    adam.update(
        slot + 1,
        embedder.out_bias.as_slice_mut().expect("contiguous"),
        grads.out_bias.as_slice().expect("contiguous"),
    )?;
    Ok(())
}

fn resolve_topk(
    dataset: &FeatureDataset,
    table: &SemanticTable,
    topk: Option<&TopkAssignments>,
    cfg: &TrainConfig,
) -> Result<Vec<Vec<usize>>> {
    if cfg.loss.omega == 0.0 {
        return Ok(vec![Vec::new(); dataset.len()]);
    }
    if let Some(assignments) = topk {
        return dataset
            .samples()
            .iter()
            .map(|s| {
                assignments.get(&s.id).cloned().ok_or_else(|| {
                    Error::Config(format!("top-k file has no entry for sample {}", s.id))
                })
            })
            .collect();
    }
    match cfg.topk_source {
        TopkSource::ObservedLabel => Ok(dataset
            .samples()
            .iter()
            .map(|s| vec![s.observed_label])
            .collect()),
        TopkSource::Features => {
            if table.dim() != dataset.feature_dim() {
                return Err(Error::Config(format!(
                    "cannot rank classes by feature similarity: table dim {} vs features {} \
                     (supply a top-k file instead)",
                    table.dim(),
                    dataset.feature_dim()
                )));
            }
            let k = cfg.loss.top_k.min(table.class_count());
            let mut out = Vec::with_capacity(dataset.len());
            for sample in dataset.samples() {
                let mut scored: Vec<(usize, f64)> = (0..table.class_count())
                    .map(|c| (c, cosine(&sample.features, table, c)))
                    .collect();
                scored.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then(a.0.cmp(&b.0)));
                out.push(scored.into_iter().take(k).map(|(c, _)| c).collect());
            }
            Ok(out)
        }
    }
}

fn cosine(features: &[f64], table: &SemanticTable, class: usize) -> f64 {
    let row = table.embeddings().row(class);
    let dot: f64 = features.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
    let na: f64 = features.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = row.dot(&row).sqrt();
    if na < 1e-12 || nb < 1e-12 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[allow(clippy::too_many_arguments)]
fn make_record(
    iteration: usize,
    ms_losses: &[f64],
    proxy_losses: &[f64],
    sigmas: &[f64],
    tau: f64,
    gmm_fallback: bool,
    corrupted: &[bool],
    wall_time_ms: f64,
) -> IterationRecord {
    let any_corrupted = corrupted.iter().any(|&c| c);
    let recall_of = |losses: &[f64]| -> Option<f64> {
        if !any_corrupted {
            return None;
        }
        let lv = LossVector::new(losses.to_vec()).ok()?;
        noisy_identification(&lv, corrupted).ok().map(|r| r.recall)
    };
    let masked_mean = |flag: bool| -> Option<f64> {
        let values: Vec<f64> = sigmas
            .iter()
            .zip(corrupted)
            .filter(|(_, &c)| c == flag)
            .map(|(&s, _)| s)
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(mean(&values))
        }
    };
    IterationRecord {
        iteration,
        mean_dml: mean(ms_losses),
        mean_proxy: mean(proxy_losses),
        tau,
        sigma_mean: mean(sigmas),
        sigma_min: sigmas.iter().cloned().fold(f64::INFINITY, f64::min),
        sigma_max: sigmas.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        gmm_fallback,
        noisy_recall_proxy: recall_of(proxy_losses),
        noisy_recall_ms: recall_of(ms_losses),
        sigma_mean_clean: masked_mean(false),
        sigma_mean_corrupted: masked_mean(true),
        proxy_losses: proxy_losses.to_vec(),
        ms_losses: ms_losses.to_vec(),
        sigmas: sigmas.to_vec(),
        corrupted: corrupted.to_vec(),
        wall_time_ms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthSpec};

    fn tiny_synth() -> (FeatureDataset, SemanticTable) {
        let out = generate(&SynthSpec {
            superclass_count: 2,
            classes_per_superclass: 2,
            samples_per_class: 12,
            feature_dim: 8,
            ..SynthSpec::default()
        })
        .unwrap();
        let train = out.train_split().unwrap();
        (train.dataset, train.semantic_table)
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            classes_per_batch: 2,
            samples_per_class: 2,
            hidden_dim: 16,
            embedding_dim: 8,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_runs_and_records_history() {
        let (dataset, table) = tiny_synth();
        let cfg = tiny_config();
        let out = train(&dataset, &table, None, &cfg).unwrap();
        let iters = cfg.epochs * dataset.len().div_ceil(cfg.batch_size());
        assert_eq!(out.history.records.len(), iters);
        for record in &out.history.records {
            assert!(record.tau.is_finite());
            let min = record
                .proxy_losses
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            let max = record
                .proxy_losses
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(record.tau >= min && record.tau <= max);
            assert!(record.sigmas.iter().all(|s| (0.0..=1.0).contains(s)));
        }
    }

    #[test]
    fn proxies_stay_unit_norm() {
        let (dataset, table) = tiny_synth();
        let out = train(&dataset, &table, None, &tiny_config()).unwrap();
        for row in out.proxies.matrix().rows() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn same_seed_reproduces_history() {
        let (dataset, table) = tiny_synth();
        let cfg = tiny_config();
        let a = train(&dataset, &table, None, &cfg).unwrap();
        let b = train(&dataset, &table, None, &cfg).unwrap();
        // Serialized form excludes wall time, so runs compare byte-equal.
        let serialize = |h: &TrainHistory| {
            h.records
                .iter()
                .map(|r| serde_json::to_string(r).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(serialize(&a.history), serialize(&b.history));
        assert_eq!(a.embedder, b.embedder);
        assert_eq!(a.proxies.matrix(), b.proxies.matrix());
    }

    #[test]
    fn unit_confidence_matches_large_lambda_trajectory() {
        let (dataset, table) = tiny_synth();
        let mut plain = tiny_config();
        plain.use_confidence = false;
        plain.loss.omega = 0.0;
        let mut huge_lambda = tiny_config();
        huge_lambda.confidence.lambda = 1e9;
        huge_lambda.loss.omega = 0.0;
        let a = train(&dataset, &table, None, &plain).unwrap();
        let b = train(&dataset, &table, None, &huge_lambda).unwrap();
        for (ra, rb) in a.history.records.iter().zip(&b.history.records) {
            assert!(
                (ra.mean_dml - rb.mean_dml).abs() <= 1e-6 * ra.mean_dml.abs().max(1.0),
                "iteration {}: {} vs {}",
                ra.iteration,
                ra.mean_dml,
                rb.mean_dml
            );
        }
    }

    #[test]
    fn sigma_scaling_halves_gradient_contribution() {
        // Linearity in sigma: the DML gradient weight of one sample halves
        // when its confidence halves, with everything else fixed.
        let (dataset, table) = tiny_synth();
        let cfg = tiny_config();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let batch = sample_batch(&dataset, 2, 2, &mut rng).unwrap();
        let mut features = Array2::zeros((4, dataset.feature_dim()));
        let mut labels = Vec::new();
        for (row, &idx) in batch.iter().enumerate() {
            let s = &dataset.samples()[idx];
            for (k, &v) in s.features.iter().enumerate() {
                features[(row, k)] = v;
            }
            labels.push(s.observed_label);
        }
        let mut r = ChaCha12Rng::seed_from_u64(4);
        let embedder = Embedder::init(
            EmbedderConfig {
                input_dim: dataset.feature_dim(),
                hidden_dim: 8,
                embedding_dim: 6,
            },
            &mut r,
        )
        .unwrap();
        let emb = embedder.embed(&features).unwrap();
        let sim = SimilarityMatrix::from_embeddings(&emb).unwrap();
        let full: Vec<f64> = vec![1.0, 1.0, 1.0, 1.0];
        let halved: Vec<f64> = vec![0.5, 1.0, 1.0, 1.0];
        let g_full = ms_loss_grad_similarity(&sim, &labels, &cfg.loss, &full).unwrap();
        let g_half = ms_loss_grad_similarity(&sim, &labels, &cfg.loss, &halved).unwrap();
        for j in 0..4 {
            assert!((g_half[(0, j)] - 0.5 * g_full[(0, j)]).abs() < 1e-15);
            assert!((g_half[(1, j)] - g_full[(1, j)]).abs() < 1e-15);
        }
        let _ = table;
    }

    #[test]
    fn mismatched_table_is_rejected() {
        let (dataset, _) = tiny_synth();
        let wrong = SemanticTable::new(Array2::eye(3)).unwrap();
        assert!(train(&dataset, &wrong, None, &tiny_config()).is_err());
    }

    #[test]
    fn corrupted_samples_get_lower_confidence() {
        // 50% uniform noise: by the end of training the mean confidence of
        // corrupted samples sits strictly below that of clean samples.
        let out = crate::synth::generate(&crate::synth::SynthSpec::default()).unwrap();
        let split = out.train_split().unwrap();
        let (noisy, _) =
            crate::noise::corrupt(&split.dataset, &crate::noise::NoiseSpec::uniform(0.5, 3))
                .unwrap();
        let cfg = TrainConfig {
            epochs: 40,
            learning_rate: 3e-3,
            classes_per_batch: 4,
            samples_per_class: 2,
            embedding_dim: 32,
            seed: 9,
            loss: LossConfig {
                omega: 0.5,
                ..LossConfig::default()
            },
            ..TrainConfig::default()
        };
        let run = train(&noisy, &split.semantic_table, None, &cfg).unwrap();
        let clean = run
            .history
            .mean_over_last(50, |r| r.sigma_mean_clean)
            .unwrap();
        let corrupted = run
            .history
            .mean_over_last(50, |r| r.sigma_mean_corrupted)
            .unwrap();
        assert!(
            corrupted < clean,
            "corrupted sigma {corrupted} not below clean sigma {clean}"
        );
    }

    #[test]
    fn composed_objective_gradient_through_embedder() {
        // Full-chain check: gradient of the combined objective with respect to
        // the MLP parameters against central finite differences, sigma held constant.
        let (dataset, table) = tiny_synth();
        let n = 4usize;
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let batch = sample_batch(&dataset, 2, 2, &mut rng).unwrap();
        let mut features = Array2::zeros((n, dataset.feature_dim()));
        let mut labels = Vec::new();
        for (row, &idx) in batch.iter().enumerate() {
            let s = &dataset.samples()[idx];
            for (k, &v) in s.features.iter().enumerate() {
                features[(row, k)] = v;
            }
            labels.push(s.observed_label);
        }
        let cfg = tiny_config();
        let sigma = [0.9, 0.3, 1.0, 0.6];
        let omega = 0.8;
        let topk: Vec<Vec<usize>> = labels.iter().map(|&y| vec![y]).collect();
        let sem = SemanticMatrixSet::from_topk(&table, &topk).unwrap();

        let embedder = Embedder::init(
            EmbedderConfig {
                input_dim: dataset.feature_dim(),
                hidden_dim: 8,
                embedding_dim: 6,
            },
            &mut ChaCha12Rng::seed_from_u64(13),
        )
        .unwrap();

        let objective = |e: &Embedder| -> f64 {
            let emb = e.embed(&features).unwrap();
            let sim = SimilarityMatrix::from_embeddings(&emb).unwrap();
            let dml = ms_loss_per_sample(&sim, &labels, &cfg.loss).unwrap();
            let ssl = semantic_regularizer_per_sample(&sim, &sem, cfg.loss.temperature).unwrap();
            procsim_objective(&sigma, &dml, &ssl, omega).unwrap()
        };

        let cache = embedder.forward(&features).unwrap();
        let sim = SimilarityMatrix::from_embeddings(&cache.embeddings).unwrap();
        let ms_weights: Vec<f64> = sigma.iter().map(|s| s / n as f64).collect();
        let ssl_weights = vec![omega / n as f64; n];
        let mut grad_sim = ms_loss_grad_similarity(&sim, &labels, &cfg.loss, &ms_weights).unwrap();
        grad_sim += &semantic_regularizer_grad_similarity(
            &sim,
            &sem,
            cfg.loss.temperature,
            &ssl_weights,
        )
        .unwrap();
        let grad_embeddings = similarity_grad_to_embeddings(&cache.embeddings, &grad_sim);
        let grads = embedder.backward(&cache, &grad_embeddings).unwrap();

        let h = 1e-6;
        for &(r, c) in &[(0usize, 0usize), (2, 5), (7, 3)] {
            let mut plus = embedder.clone();
            let mut minus = embedder.clone();
            plus.hidden.as_mut().unwrap().0[(r, c)] += h;
            minus.hidden.as_mut().unwrap().0[(r, c)] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let g = grads.hidden_weight.as_ref().unwrap()[(r, c)];
            assert!(
                (g - fd).abs() <= 1e-4 * fd.abs().max(1e-3),
                "hidden ({r},{c}): analytic {g} vs fd {fd}"
            );
        }
        for &(r, c) in &[(0usize, 0usize), (4, 2), (7, 5)] {
            let mut plus = embedder.clone();
            let mut minus = embedder.clone();
            plus.out_weight[(r, c)] += h;
            minus.out_weight[(r, c)] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let g = grads.out_weight[(r, c)];
            assert!(
                (g - fd).abs() <= 1e-4 * fd.abs().max(1e-3),
                "out ({r},{c}): analytic {g} vs fd {fd}"
            );
        }
    }
}
