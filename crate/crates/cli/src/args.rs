//! clap argument structs for every subcommand.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "molr",
    about = "Reaction-aware molecule embeddings: train GNN encoders so reactant and product embedding sums match, then rank, probe, and inspect",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Train an encoder on a reaction TSV (id<TAB>reactants<TAB>product)
    Train(TrainArgs),
    /// Embed molecules (one SMILES per line) with a trained model
    Embed(EmbedArgs),
    /// Rank each test reaction's product against the pooled test products
    Rank(RankArgs),
    /// Answer multi-choice product-prediction questions
    Choice(ChoiceArgs),
    /// Property probe: logistic regression AUC over seeded 8:1:1 splits
    ProbeProp(ProbePropArgs),
    /// Graph-edit-distance probe: ridge RMSE in concat and subtract modes
    ProbeGed(ProbeGedArgs),
    /// Exact GED ground truth for randomly sampled molecule pairs
    GedExact(GedExactArgs),
    /// Generate synthetic template-reaction corpora
    Gen(GenArgs),
    /// Run the gradient / permutation / locality / composability suites
    Check(CheckArgs),
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training reactions TSV
    #[arg(long)]
    pub data: PathBuf,
    /// Validation reactions TSV; when given, the checkpoint keeps the
    /// best-validation-MRR epoch
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Encoder kind: gcn, gat, sage, tag
    #[arg(long, default_value = "gcn")]
    pub gnn: String,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    /// Output dimension of every layer
    #[arg(long, default_value_t = 1024)]
    pub dim: usize,
    /// Attention heads (gat only)
    #[arg(long, default_value_t = 16)]
    pub heads: usize,
    /// Local filter size (tag only)
    #[arg(long = "tag-l", default_value_t = 2)]
    pub tag_l: usize,
    #[arg(long, default_value_t = 4.0)]
    pub margin: f64,
    #[arg(long, default_value_t = 4096)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Readout: sum or mean
    #[arg(long, default_value = "sum")]
    pub readout: String,
    /// Output directory for model.json, model.bin, train_log.csv
    #[arg(long, default_value = "model")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EmbedArgs {
    /// Model directory (holding model.json and model.bin)
    #[arg(long)]
    pub model: PathBuf,
    /// Input file, one SMILES per line
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value = "embeddings.csv")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct RankArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Test reactions TSV; their products form the candidate pool
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "rank_report.json")]
    pub out: PathBuf,
    #[arg(long = "per-query", default_value = "rank_per_query.csv")]
    pub per_query: PathBuf,
}

#[derive(Args)]
pub struct ChoiceArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Question TSV: id<TAB>reactants<TAB>choices<TAB>answer, choices
    /// dot-separated, answer a 0-based index
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "choice_report.json")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ProbePropArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with header smiles,label (labels 0/1)
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "prop_report.json")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// L2 regularization strength for the logistic probe
    #[arg(long, default_value_t = 1e-3)]
    pub l2: f64,
    /// Gradient-descent iterations for the logistic probe
    #[arg(long, default_value_t = 200)]
    pub iters: usize,
}

#[derive(Args)]
pub struct ProbeGedArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with header smiles_a,smiles_b,ged
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "ged_report.json")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ridge regularization strength
    #[arg(long, default_value_t = 1e-3)]
    pub lambda: f64,
}

#[derive(Args)]
pub struct GedExactArgs {
    /// Input file, one SMILES per line; molecules above --max-nodes are
    /// skipped (noted in the sidecar)
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "max-nodes", default_value_t = 8)]
    pub max_nodes: usize,
    #[arg(long, default_value = "ged_pairs.csv")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct GenArgs {
    /// Reaction family: ester, oxidation, substitution, or all (mixed with
    /// product deduplication)
    #[arg(long, default_value = "all")]
    pub template: String,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "reactions.tsv")]
    pub out: PathBuf,
    /// Also write every molecule (one SMILES per line) to this file
    #[arg(long)]
    pub molecules: Option<PathBuf>,
}

#[derive(Args)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
