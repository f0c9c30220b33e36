//! Minibatch contrastive training and checkpoint persistence.
//!
//! The loss pulls each reaction's reactant-sum and product-sum embeddings
//! together and pushes every unmatched reactant/product pair in the batch
//! at least `margin` apart:
//!
//!   L = (1/|B|) sum_i ||h_Ri - h_Pi||
//!     + (1/(|B|(|B|-1))) sum_{i != j} max(margin - ||h_Ri - h_Pj||, 0)
//!
//! Both ordered pairs (i, j) and (j, i) count, so there are exactly
//! |B|(|B|-1) negative terms.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::{
    encode_side, encode_side_on_tape, BoundWeights, EncoderConfig, EncoderError, EncoderWeights,
};
use crate::eval;
use crate::graph::{FeatureVocab, GraphError, MolecularGraph, Reaction};
use crate::numeric::{AdamState, Matrix, NumericError, Tape, VarId};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("batch of {0} reactions is too small (negatives need >= 2)")]
    BatchTooSmall(usize),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("numeric failure at epoch {epoch}, batch {batch}: {source}")]
    Diverged {
        epoch: usize,
        batch: usize,
        source: NumericError,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub margin: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub encoder: EncoderConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.margin.is_nan() || self.margin <= 0.0 {
            return Err(TrainError::InvalidConfig(format!(
                "margin must be > 0, got {}",
                self.margin
            )));
        }
        if self.batch_size < 2 {
            return Err(TrainError::InvalidConfig(format!(
                "batch size must be >= 2, got {}",
                self.batch_size
            )));
        }
        self.encoder.validate()?;
        Ok(())
    }
}

/// Margin that keeps the loss landscape comparable across embedding widths:
/// expected pairwise distances grow with sqrt(dim), so the reference margin 4
/// at dim 1024 scales accordingly (e.g. dim 64 -> 1.0).
pub fn suggested_margin(dim: usize) -> f64 {
    4.0 * (dim as f64 / 1024.0).sqrt()
}

/// Number of negative (unmatched) pairs in a batch of b reactions.
pub fn negative_pair_count(b: usize) -> usize {
    b * b.saturating_sub(1)
}

/// Records the contrastive loss for one minibatch on the tape.
pub fn batch_loss_on_tape(
    tape: &mut Tape,
    batch: &[Reaction],
    vocab: &FeatureVocab,
    encoder: &EncoderConfig,
    margin: f64,
    weights: &BoundWeights,
) -> Result<VarId, TrainError> {
    let b = batch.len();
    if b < 2 {
        return Err(TrainError::BatchTooSmall(b));
    }
    let mut reactant_rows = Vec::with_capacity(b);
    let mut product_rows = Vec::with_capacity(b);
    for reaction in batch {
        reactant_rows.push(encode_side_on_tape(
            tape,
            &reaction.reactants,
            vocab,
            encoder,
            weights,
        )?);
        product_rows.push(encode_side_on_tape(
            tape,
            &reaction.products,
            vocab,
            encoder,
            weights,
        )?);
    }
    let hr = tape.stack_rows(&reactant_rows)?;
    let hp = tape.stack_rows(&product_rows)?;
    let distances = tape.pairwise_l2(hr, hp)?;

    let mut diagonal = vec![0.0; b * b];
    let mut off_diagonal = vec![1.0; b * b];
    for i in 0..b {
        diagonal[i * b + i] = 1.0;
        off_diagonal[i * b + i] = 0.0;
    }
    let positive_sum = tape.masked_sum(distances, &diagonal)?;
    let positives = tape.affine(positive_sum, 1.0 / b as f64, 0.0);

    let hinge_arg = tape.affine(distances, -1.0, margin);
    let hinge = tape.relu(hinge_arg);
    let negative_sum = tape.masked_sum(hinge, &off_diagonal)?;
    let negatives = tape.affine(negative_sum, 1.0 / negative_pair_count(b) as f64, 0.0);

    Ok(tape.add(positives, negatives)?)
}

/// Evaluates the batch loss with frozen weights (builds a throwaway tape).
pub fn batch_loss(
    batch: &[Reaction],
    vocab: &FeatureVocab,
    encoder: &EncoderConfig,
    margin: f64,
    weights: &EncoderWeights,
) -> Result<f64, TrainError> {
    let mut tape = Tape::new();
    let bound = weights.bind(&mut tape);
    let loss = batch_loss_on_tape(&mut tape, batch, vocab, encoder, margin, &bound)?;
    Ok(tape.value(loss).get(0, 0))
}

#[derive(Clone, Debug, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_mrr: Option<f64>,
}

pub struct TrainOutcome {
    pub checkpoint: ModelCheckpoint,
    pub log: Vec<EpochLog>,
}

/// Trains from scratch; when a validation set is given, the returned
/// checkpoint holds the weights of the epoch with the best validation MRR,
/// otherwise the final weights.
pub fn train(
    dataset: &[Reaction],
    config: &TrainConfig,
    validation: Option<&[Reaction]>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let corpus: Vec<MolecularGraph> = dataset
        .iter()
        .flat_map(|r| r.reactants.iter().chain(r.products.iter()).cloned())
        .collect();
    let vocab = FeatureVocab::build(&corpus)?;
    let mut weights = EncoderWeights::init(&config.encoder, vocab.total_dim(), config.seed)?;
    let mut adam = AdamState::new(config.learning_rate);
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, EncoderWeights)> = None;

    for epoch in 0..config.epochs {
        let order = shuffled_indices(dataset.len(), config.seed, epoch as u64);
        let mut losses = Vec::new();
        for (batch_index, chunk) in order.chunks(config.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue; // final leftover too small to form negatives
            }
            let batch: Vec<Reaction> = chunk.iter().map(|&i| dataset[i].clone()).collect();
            let mut tape = Tape::new();
            let bound = weights.bind(&mut tape);
            let loss_var =
                batch_loss_on_tape(&mut tape, &batch, &vocab, &config.encoder, config.margin, &bound)?;
            let loss = tape.value(loss_var).get(0, 0);
            if !loss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    batch: batch_index,
                    source: NumericError::ShapeMismatch(format!("non-finite loss {}", loss)),
                });
            }
            losses.push(loss);
            let grads = tape.backward(loss_var).map_err(|source| TrainError::Diverged {
                epoch,
                batch: batch_index,
                source,
            })?;
            let named: BTreeMap<String, Matrix> = bound
                .vars
                .iter()
                .map(|(name, &var)| (name.clone(), grads.get(var).clone()))
                .collect();
            adam.step(&mut weights.params, &named)?;
        }
        let mean_loss = if losses.is_empty() {
            f64::NAN
        } else {
            losses.iter().sum::<f64>() / losses.len() as f64
        };
        let val_mrr = match validation {
            Some(val) if !val.is_empty() => {
                let mrr = validation_mrr(val, &vocab, &config.encoder, &weights)?;
                if best.as_ref().is_none_or(|(b, _)| mrr > *b) {
                    best = Some((mrr, weights.clone()));
                }
                Some(mrr)
            }
            _ => None,
        };
        log.push(EpochLog {
            epoch,
            mean_loss,
            val_mrr,
        });
    }

    let final_weights = match best {
        Some((_, w)) => w,
        None => weights,
    };
    let checkpoint = ModelCheckpoint::new(config.clone(), vocab, final_weights);
    Ok(TrainOutcome { checkpoint, log })
}

fn shuffled_indices(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand_chacha::rand_core::SeedableRng;
    let mut rng =
        rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15) ^ epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn validation_mrr(
    val: &[Reaction],
    vocab: &FeatureVocab,
    encoder: &EncoderConfig,
    weights: &EncoderWeights,
) -> Result<f64, TrainError> {
    let (pool, truth) = eval::build_candidate_pool(val);
    let pool_embeddings: Vec<Vec<f64>> = pool
        .iter()
        .map(|g| crate::encoder::encode_molecule(g, vocab, encoder, weights))
        .collect::<Result<_, _>>()?;
    let mut ranks = Vec::with_capacity(val.len());
    for (reaction, &t) in val.iter().zip(&truth) {
        let query = encode_side(&reaction.reactants, vocab, encoder, weights)?;
        let rank = eval::rank_products(&query, &pool_embeddings, t)
            .expect("truth index from pool construction");
        ranks.push(rank);
    }
    Ok(eval::ranking_metrics(&ranks)
        .expect("validation set non-empty")
        .mrr)
}

// ---------------------------------------------------------------------------
// checkpoints: model.json (manifest) + model.bin (raw little-endian f64)
// ---------------------------------------------------------------------------

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("unsupported checkpoint format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt weights: {0}")]
    CorruptWeights(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub train: TrainConfig,
    pub vocab: FeatureVocab,
    /// Parameters in blob order (lexicographic by name, row-major values).
    pub params: Vec<ParamInfo>,
    pub weights_sha256: String,
}

#[derive(Clone, Debug)]
pub struct ModelCheckpoint {
    pub manifest: Manifest,
    pub weights: EncoderWeights,
}

impl ModelCheckpoint {
    pub fn new(train: TrainConfig, vocab: FeatureVocab, weights: EncoderWeights) -> Self {
        let params = weights
            .params
            .iter()
            .map(|(name, m)| ParamInfo {
                name: name.clone(),
                rows: m.rows(),
                cols: m.cols(),
            })
            .collect();
        let blob = weights_blob(&weights);
        let manifest = Manifest {
            format_version: CHECKPOINT_FORMAT_VERSION,
            train,
            vocab,
            params,
            weights_sha256: hex_digest(&blob),
        };
        ModelCheckpoint { manifest, weights }
    }

    pub fn vocab(&self) -> &FeatureVocab {
        &self.manifest.vocab
    }

    pub fn encoder_config(&self) -> &EncoderConfig {
        &self.manifest.train.encoder
    }

    /// Hash of the weight blob; identifies the model in output sidecars.
    pub fn model_hash(&self) -> &str {
        &self.manifest.weights_sha256
    }

    /// Writes `model.json` and `model.bin` into the directory.
    pub fn save(&self, dir: &Path) -> Result<(), CheckpointError> {
        std::fs::create_dir_all(dir)?;
        let manifest_json = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(dir.join("model.json"), manifest_json)?;
        let mut file = std::fs::File::create(dir.join("model.bin"))?;
        file.write_all(&weights_blob(&self.weights))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<ModelCheckpoint, CheckpointError> {
        let manifest = Manifest::from_json(&std::fs::read_to_string(dir.join("model.json"))?)?;
        let mut blob = Vec::new();
        std::fs::File::open(dir.join("model.bin"))?.read_to_end(&mut blob)?;
        let weights = decode_weights(&manifest, &blob)?;
        Ok(ModelCheckpoint { manifest, weights })
    }
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Manifest, CheckpointError> {
        let manifest: Manifest = serde_json::from_str(text)?;
        if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(CheckpointError::VersionMismatch {
                found: manifest.format_version,
                expected: CHECKPOINT_FORMAT_VERSION,
            });
        }
        Ok(manifest)
    }
}

/// Rebuilds the parameter set from the raw blob, verifying length and hash
/// against the manifest. Sizes go through checked arithmetic so a hostile
/// manifest cannot overflow the expected length.
pub fn decode_weights(manifest: &Manifest, blob: &[u8]) -> Result<EncoderWeights, CheckpointError> {
    let mut expected_len: usize = 0;
    for p in &manifest.params {
        let n = p
            .rows
            .checked_mul(p.cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| {
                CheckpointError::CorruptWeights(format!(
                    "parameter '{}' shape {}x{} overflows",
                    p.name, p.rows, p.cols
                ))
            })?;
        expected_len = expected_len
            .checked_add(n)
            .ok_or_else(|| CheckpointError::CorruptWeights("total size overflows".to_string()))?;
    }
    if blob.len() != expected_len {
        return Err(CheckpointError::CorruptWeights(format!(
            "blob is {} bytes, manifest expects {}",
            blob.len(),
            expected_len
        )));
    }
    let digest = hex_digest(blob);
    if digest != manifest.weights_sha256 {
        return Err(CheckpointError::CorruptWeights(format!(
            "sha256 {} does not match manifest {}",
            digest, manifest.weights_sha256
        )));
    }
    let mut params = BTreeMap::new();
    let mut offset = 0;
    for info in &manifest.params {
        let n = info.rows * info.cols;
        let data: Vec<f64> = blob[offset..offset + n * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        offset += n * 8;
        let m = Matrix::from_vec(info.rows, info.cols, data)
            .map_err(|e| CheckpointError::CorruptWeights(e.to_string()))?;
        params.insert(info.name.clone(), m);
    }
    Ok(EncoderWeights { params })
}

fn weights_blob(weights: &EncoderWeights) -> Vec<u8> {
    // BTreeMap iteration is lexicographic by name
    let mut blob = Vec::new();
    for m in weights.params.values() {
        for &v in m.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    blob
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{:02x}", b)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_template_reactions, TemplateKind};
    use crate::encoder::GnnKind;
    use crate::numeric::l2_distance;
    use crate::smiles::parse_reaction;

    fn desk_config(kind: GnnKind, dim: usize) -> TrainConfig {
        TrainConfig {
            margin: suggested_margin(dim),
            batch_size: 8,
            epochs: 2,
            learning_rate: 1e-3,
            seed: 0,
            encoder: EncoderConfig::desk(kind, dim),
        }
    }

    fn tiny_dataset(n: usize) -> Vec<Reaction> {
        generate_template_reactions(TemplateKind::Esterification, n, 17)
            .into_iter()
            .enumerate()
            .map(|(i, mut t)| {
                t.reaction.id = i.to_string();
                t.reaction
            })
            .collect()
    }

    #[test]
    fn zero_weights_loss_equals_margin() {
        let dataset = tiny_dataset(8);
        let corpus: Vec<MolecularGraph> = dataset
            .iter()
            .flat_map(|r| r.reactants.iter().chain(r.products.iter()).cloned())
            .collect();
        let vocab = FeatureVocab::build(&corpus).unwrap();
        let encoder = EncoderConfig::desk(GnnKind::Gcn, 8);
        let weights = EncoderWeights::zeros(&encoder, vocab.total_dim()).unwrap();
        for b in 2..=8 {
            let loss = batch_loss(&dataset[..b], &vocab, &encoder, 4.0, &weights).unwrap();
            assert!((loss - 4.0).abs() < 1e-12, "batch {}: {}", b, loss);
        }
    }

    #[test]
    fn duplicate_reaction_pathology() {
        // two identical reactions: the negative pair distance is zero, so the
        // hinge contributes the full margin even when positives are matched
        let r = parse_reaction("0\tC\tC").unwrap();
        let batch = vec![r.clone(), r];
        let corpus: Vec<MolecularGraph> = batch
            .iter()
            .flat_map(|x| x.reactants.iter().chain(x.products.iter()).cloned())
            .collect();
        let vocab = FeatureVocab::build(&corpus).unwrap();
        let encoder = EncoderConfig::desk(GnnKind::Gcn, 8);
        let weights = EncoderWeights::init(&encoder, vocab.total_dim(), 5).unwrap();
        let loss = batch_loss(&batch, &vocab, &encoder, 4.0, &weights).unwrap();
        // identity reactions: positives are exactly zero, negatives all zero
        // distance -> loss = margin
        assert!((loss - 4.0).abs() < 1e-12);
    }

    #[test]
    fn loss_matches_straight_line_recomputation() {
        let dataset = tiny_dataset(5);
        let corpus: Vec<MolecularGraph> = dataset
            .iter()
            .flat_map(|r| r.reactants.iter().chain(r.products.iter()).cloned())
            .collect();
        let vocab = FeatureVocab::build(&corpus).unwrap();
        for kind in GnnKind::ALL {
            let encoder = EncoderConfig::desk(kind, 8);
            let weights = EncoderWeights::init(&encoder, vocab.total_dim(), 23).unwrap();
            let margin = 1.0;
            let tape_loss = batch_loss(&dataset, &vocab, &encoder, margin, &weights).unwrap();

            // independent straight-line recomputation from frozen embeddings
            let b = dataset.len();
            let hr: Vec<Vec<f64>> = dataset
                .iter()
                .map(|r| encode_side(&r.reactants, &vocab, &encoder, &weights).unwrap())
                .collect();
            let hp: Vec<Vec<f64>> = dataset
                .iter()
                .map(|r| encode_side(&r.products, &vocab, &encoder, &weights).unwrap())
                .collect();
            let mut positives = 0.0;
            let mut negatives = 0.0;
            let mut negative_terms = 0;
            for i in 0..b {
                positives += l2_distance(&hr[i], &hp[i]);
                for j in 0..b {
                    if i != j {
                        negatives += (margin - l2_distance(&hr[i], &hp[j])).max(0.0);
                        negative_terms += 1;
                    }
                }
            }
            assert_eq!(negative_terms, negative_pair_count(b));
            let direct = positives / b as f64 + negatives / negative_terms as f64;
            assert!(
                (tape_loss - direct).abs() < 1e-10,
                "{:?}: {} vs {}",
                kind,
                tape_loss,
                direct
            );
        }
    }

    #[test]
    fn loss_is_invariant_under_batch_reordering() {
        let dataset = tiny_dataset(6);
        let corpus: Vec<MolecularGraph> = dataset
            .iter()
            .flat_map(|r| r.reactants.iter().chain(r.products.iter()).cloned())
            .collect();
        let vocab = FeatureVocab::build(&corpus).unwrap();
        let encoder = EncoderConfig::desk(GnnKind::Gcn, 8);
        let weights = EncoderWeights::init(&encoder, vocab.total_dim(), 31).unwrap();
        let a = batch_loss(&dataset, &vocab, &encoder, 1.0, &weights).unwrap();
        let mut reordered = dataset.clone();
        reordered.reverse();
        reordered.swap(1, 3);
        let b = batch_loss(&reordered, &vocab, &encoder, 1.0, &weights).unwrap();
        assert!((a - b).abs() < 1e-12 * a.max(1.0));
    }

    #[test]
    fn loss_is_nonnegative_and_batch_too_small_rejected() {
        let dataset = tiny_dataset(3);
        let corpus: Vec<MolecularGraph> = dataset
            .iter()
            .flat_map(|r| r.reactants.iter().chain(r.products.iter()).cloned())
            .collect();
        let vocab = FeatureVocab::build(&corpus).unwrap();
        let encoder = EncoderConfig::desk(GnnKind::Gcn, 8);
        let weights = EncoderWeights::init(&encoder, vocab.total_dim(), 3).unwrap();
        let loss = batch_loss(&dataset, &vocab, &encoder, 0.5, &weights).unwrap();
        assert!(loss >= 0.0);
        assert!(matches!(
            batch_loss(&dataset[..1], &vocab, &encoder, 0.5, &weights),
            Err(TrainError::BatchTooSmall(1))
        ));
    }

    #[test]
    fn margin_helper_matches_reference_points() {
        assert!((suggested_margin(1024) - 4.0).abs() < 1e-15);
        assert!((suggested_margin(64) - 1.0).abs() < 1e-15);
        assert!((suggested_margin(256) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_keeps_initial_weights() {
        let dataset = tiny_dataset(8);
        let mut config = desk_config(GnnKind::Gcn, 8);
        config.epochs = 1;
        config.learning_rate = 0.0;
        let outcome = train(&dataset, &config, None).unwrap();
        let corpus: Vec<MolecularGraph> = dataset
            .iter()
            .flat_map(|r| r.reactants.iter().chain(r.products.iter()).cloned())
            .collect();
        let vocab = FeatureVocab::build(&corpus).unwrap();
        let initial = EncoderWeights::init(&config.encoder, vocab.total_dim(), config.seed).unwrap();
        assert_eq!(outcome.checkpoint.weights, initial);
    }

    #[test]
    fn fixed_seed_training_is_reproducible() {
        let dataset = tiny_dataset(12);
        let config = desk_config(GnnKind::Gcn, 8);
        let a = train(&dataset, &config, None).unwrap();
        let b = train(&dataset, &config, None).unwrap();
        let losses_a: Vec<f64> = a.log.iter().map(|l| l.mean_loss).collect();
        let losses_b: Vec<f64> = b.log.iter().map(|l| l.mean_loss).collect();
        assert_eq!(losses_a, losses_b);
        assert_eq!(a.checkpoint.weights, b.checkpoint.weights);
    }

    #[test]
    fn training_reduces_loss_on_synthetic_templates() {
        let dataset: Vec<Reaction> = crate::datagen::generate_mixed_corpus(60, 2)
            .into_iter()
            .map(|t| t.reaction)
            .collect();
        let config = TrainConfig {
            margin: suggested_margin(32),
            batch_size: 16,
            epochs: 8,
            learning_rate: 3e-3,
            seed: 1,
            encoder: EncoderConfig::desk(GnnKind::Gcn, 32),
        };
        let outcome = train(&dataset, &config, None).unwrap();
        let first = outcome.log.first().unwrap().mean_loss;
        let last = outcome.log.last().unwrap().mean_loss;
        assert!(
            last < first,
            "loss should decrease: first {} last {}",
            first,
            last
        );
    }

    #[test]
    fn validation_tracking_keeps_best_weights() {
        let all = tiny_dataset(30);
        let (train_set, val_set) = all.split_at(22);
        let mut config = desk_config(GnnKind::Gcn, 8);
        config.epochs = 3;
        let outcome = train(train_set, &config, Some(val_set)).unwrap();
        assert!(outcome.log.iter().all(|l| l.val_mrr.is_some()));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dataset = tiny_dataset(6);
        let mut config = desk_config(GnnKind::Gat, 8);
        config.epochs = 1;
        let outcome = train(&dataset, &config, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        outcome.checkpoint.save(dir.path()).unwrap();
        let loaded = ModelCheckpoint::load(dir.path()).unwrap();
        assert_eq!(loaded.weights, outcome.checkpoint.weights);
        assert_eq!(loaded.manifest.weights_sha256, outcome.checkpoint.manifest.weights_sha256);
        // embeddings from the reloaded model are bit-identical
        let g = &dataset[0].reactants[0];
        let e1 = crate::encoder::encode_molecule(
            g,
            outcome.checkpoint.vocab(),
            outcome.checkpoint.encoder_config(),
            &outcome.checkpoint.weights,
        )
        .unwrap();
        let e2 = crate::encoder::encode_molecule(
            g,
            loaded.vocab(),
            loaded.encoder_config(),
            &loaded.weights,
        )
        .unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn checkpoint_corruption_detected() {
        let dataset = tiny_dataset(4);
        let mut config = desk_config(GnnKind::Gcn, 8);
        config.epochs = 1;
        let outcome = train(&dataset, &config, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        outcome.checkpoint.save(dir.path()).unwrap();

        // truncate the blob
        let bin = dir.path().join("model.bin");
        let data = std::fs::read(&bin).unwrap();
        std::fs::write(&bin, &data[..data.len() - 8]).unwrap();
        assert!(matches!(
            ModelCheckpoint::load(dir.path()),
            Err(CheckpointError::CorruptWeights(_))
        ));

        // flip one byte (length intact, hash broken)
        let mut flipped = data.clone();
        flipped[0] ^= 0xff;
        std::fs::write(&bin, &flipped).unwrap();
        assert!(matches!(
            ModelCheckpoint::load(dir.path()),
            Err(CheckpointError::CorruptWeights(_))
        ));

        // wrong version
        std::fs::write(&bin, &data).unwrap();
        let manifest_path = dir.path().join("model.json");
        let manifest = std::fs::read_to_string(&manifest_path)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 9");
        std::fs::write(&manifest_path, manifest).unwrap();
        assert!(matches!(
            ModelCheckpoint::load(dir.path()),
            Err(CheckpointError::VersionMismatch { found: 9, .. })
        ));
    }
}
