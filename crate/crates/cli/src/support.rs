//! Shared plumbing: error-to-exit-code mapping, reaction file reading,
//! float formatting, sidecars, and the MOLR_THREADS-capped parallel map.

use std::path::Path;

use molr::smiles::{parse_reaction, ReactionParseError};
use molr::train::TrainError;

/// Errors carry their exit code class: 1 invariant failure, 2 data error,
/// 3 config error.
#[derive(Debug)]
pub enum CliError {
    Invariant(String),
    Data(String),
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invariant(_) => 1,
            CliError::Data(_) => 2,
            CliError::Config(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Invariant(m) | CliError::Data(m) | CliError::Config(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(format!("io: {}", e))
    }
}

impl From<molr::train::CheckpointError> for CliError {
    fn from(e: molr::train::CheckpointError) -> Self {
        CliError::Data(format!("checkpoint: {}", e))
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) | TrainError::BatchTooSmall(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<molr::encoder::EncoderError> for CliError {
    fn from(e: molr::encoder::EncoderError) -> Self {
        match e {
            molr::encoder::EncoderError::InvalidConfig(_) => CliError::Config(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(format!("json: {}", e))
    }
}

pub const REACTION_HEADER: &str = "id\treactants\tproduct";

/// Reads a reaction TSV (header `id<TAB>reactants<TAB>product`); parse
/// failures carry the 1-based line number.
pub fn read_reactions(path: &Path) -> Result<Vec<molr::graph::Reaction>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {}", path.display(), e)))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == REACTION_HEADER => {}
        Some((_, header)) => {
            return Err(CliError::Data(format!(
                "{} line 1: expected header '{}', found '{}'",
                path.display(),
                REACTION_HEADER,
                header
            )))
        }
        None => return Err(CliError::Data(format!("{}: empty file", path.display()))),
    }
    let mut reactions = Vec::new();
    for (index, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let reaction = parse_reaction(line).map_err(|e: ReactionParseError| {
            CliError::Data(format!("{} line {}: {}", path.display(), index + 1, e))
        })?;
        reactions.push(reaction);
    }
    Ok(reactions)
}

/// 17 significant digits: enough to round-trip any f64.
pub fn format_float(v: f64) -> String {
    format!("{:.16e}", v)
}

/// Writes `<path>.meta.json` describing the output file.
pub fn write_sidecar(path: &Path, meta: serde_json::Value) -> Result<(), CliError> {
    let sidecar = path.with_file_name(format!(
        "{}.meta.json",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "output".to_string())
    ));
    std::fs::write(sidecar, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Thread budget from MOLR_THREADS: 0 means sequential, unset uses the
/// machine's parallelism.
pub fn thread_cap() -> usize {
    match std::env::var("MOLR_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) => 1,
            Ok(n) => n,
            Err(_) => 1,
        },
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    }
}

/// Maps over items on up to `thread_cap()` scoped threads, preserving input
/// order in the output.
pub fn parallel_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    let threads = thread_cap().min(items.len().max(1));
    if threads <= 1 || items.len() < 2 {
        return items.iter().map(&f).collect();
    }
    let chunk_size = items.len().div_ceil(threads);
    let mut results: Vec<Option<Vec<U>>> = (0..threads).map(|_| None).collect();
    std::thread::scope(|scope| {
        let f = &f;
        let mut handles = Vec::new();
        for (chunk_index, chunk) in items.chunks(chunk_size).enumerate() {
            handles.push((
                chunk_index,
                scope.spawn(move || chunk.iter().map(f).collect::<Vec<U>>()),
            ));
        }
        for (chunk_index, handle) in handles {
            results[chunk_index] = Some(handle.join().expect("worker panicked"));
        }
    });
    results.into_iter().flatten().flatten().collect()
}

/// Seeded 8:1:1 split of 0..n, returning (train, val, test) index sets.
pub fn split_811(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = (n * 8) / 10;
    let n_val = n / 10;
    let train = order[..n_train].to_vec();
    let val = order[n_train..n_train + n_val].to_vec();
    let test = order[n_train + n_val..].to_vec();
    (train, val, test)
}
