use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rede::density::{EstimatorConfig, GmmConfig, KdeKernel, DEFAULT_BANDWIDTH, DEFAULT_NEIGHBORS};
use rede::detector::{DetectorConfig, DEFAULT_RETAINED_DIM};
use rede::whitening::DEFAULT_EPS_FLOOR;
use rede::DatasetFormat;

#[derive(Debug, Parser)]
#[command(name = "rede", version, about = "Few-shot knowledge-seeking turn detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit, calibrate on dev and save a model bundle.
    Fit(FitArgs),
    /// Score and label turns with a saved model.
    Predict(PredictArgs),
    /// Precision, recall and F1 on a test set.
    Eval(EvalArgs),
    /// Low-resource curve: F1 against the number of knowledge-seeking shots.
    Lowres(LowresArgs),
    /// F1 against the number of retained whitening dimensions.
    SweepL(SweepLArgs),
    /// Compare density estimators under one transform.
    Compare(CompareArgs),
    /// F1 against the GMM component count.
    SweepK(SweepKArgs),
    /// Two-component projection of a dataset for plotting.
    Project2d(ProjectArgs),
    /// Parameter counts of a saved model.
    Params(ParamsArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

/// How many knowledge-seeking shots to draw from the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShotCount {
    All,
    Count(usize),
}

impl FromStr for ShotCount {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            return Ok(ShotCount::All);
        }
        s.parse()
            .map(ShotCount::Count)
            .map_err(|_| format!("expected a count or `all`, got {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Jsonl,
    Binary,
}

impl From<FormatArg> for DatasetFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Jsonl => DatasetFormat::Jsonl,
            FormatArg::Binary => DatasetFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EstimatorArg {
    Gmm,
    KdeGaussian,
    KdeExponential,
    Lof,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Training dataset. Its non-knowledge-seeking rows fit the density
    /// model; its knowledge-seeking rows are the shot pool.
    #[arg(long, value_name = "PATH")]
    pub nk_train: PathBuf,

    /// Knowledge-seeking shots for the transform: a count or `all`. 0 is zero-shot.
    #[arg(long, value_name = "COUNT|all", default_value = "all")]
    pub ks_shots: ShotCount,

    /// Separate shot pool; every row is a candidate shot.
    #[arg(long, value_name = "PATH")]
    pub ks_pool: Option<PathBuf>,

    #[arg(long, value_name = "PATH")]
    pub dev: PathBuf,

    #[arg(long, value_name = "PATH")]
    pub test: Option<PathBuf>,

    /// Dataset format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "gmm")]
    pub estimator: EstimatorArg,

    /// GMM components.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub components: u32,

    /// Retained whitening dimensions (clamped to the embedding dimension).
    #[arg(long, default_value_t = DEFAULT_RETAINED_DIM as u32, value_parser = clap::value_parser!(u32).range(1..))]
    pub dim: u32,

    /// Relative eigenvalue floor.
    #[arg(long, default_value_t = DEFAULT_EPS_FLOOR)]
    pub eps_floor: f64,

    /// KDE bandwidth.
    #[arg(long, default_value_t = DEFAULT_BANDWIDTH)]
    pub bandwidth: f64,

    /// LOF neighbors.
    #[arg(long, default_value_t = DEFAULT_NEIGHBORS as u32, value_parser = clap::value_parser!(u32).range(1..))]
    pub neighbors: u32,

    /// Skip the whitening transform even when shots are available.
    #[arg(long)]
    pub no_transform: bool,
}

impl ModelArgs {
    pub fn estimator_config(&self, kind: EstimatorArg, seed: u64) -> EstimatorConfig {
        match kind {
            EstimatorArg::Gmm => EstimatorConfig::Gmm(GmmConfig {
                components: self.components as usize,
                seed,
                ..GmmConfig::default()
            }),
            EstimatorArg::KdeGaussian => EstimatorConfig::Kde {
                kernel: KdeKernel::Gaussian,
                bandwidth: self.bandwidth,
            },
            EstimatorArg::KdeExponential => EstimatorConfig::Kde {
                kernel: KdeKernel::Exponential,
                bandwidth: self.bandwidth,
            },
            EstimatorArg::Lof => EstimatorConfig::Lof {
                n_neighbors: self.neighbors as usize,
            },
        }
    }

    pub fn detector_config(&self, seed: u64) -> DetectorConfig {
        DetectorConfig {
            estimator: self.estimator_config(self.estimator, seed),
            retained_dim: self.dim as usize,
            eps_floor: self.eps_floor,
            use_transform: !self.no_transform,
            ..DetectorConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Use this threshold instead of the calibrated one.
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    /// Write DIR/predictions.jsonl instead of standard output.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Evaluate a saved model; without it a model is fitted from the data flags.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["nk_train", "dev"])]
    pub model: Option<PathBuf>,
    #[arg(long, value_name = "PATH", required_unless_present = "model")]
    pub nk_train: Option<PathBuf>,
    #[arg(long, value_name = "COUNT|all", default_value = "all")]
    pub ks_shots: ShotCount,
    #[arg(long, value_name = "PATH")]
    pub ks_pool: Option<PathBuf>,
    #[arg(long, value_name = "PATH", required_unless_present = "model")]
    pub dev: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub test: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub model_args: ModelArgs,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct LowresArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Shot counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    /// Sub-sampling seeds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub seeds: Vec<u64>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepLArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Retained dimensions, comma separated.
    #[arg(long = "dims", value_delimiter = ',', required = true)]
    pub dims: Vec<usize>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "gmm,kde-gaussian,kde-exponential,lof")]
    pub estimators: Vec<EstimatorArg>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepKArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Component counts, comma separated.
    #[arg(long = "k", value_delimiter = ',', required = true)]
    pub k: Vec<usize>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FitOn {
    Ks,
    Nk,
}

#[derive(Debug, Clone, Args)]
pub struct ProjectArgs {
    /// Training dataset providing the rows the projection is fitted on.
    #[arg(long, value_name = "PATH")]
    pub nk_train: PathBuf,
    #[arg(long, value_name = "COUNT|all", default_value = "all")]
    pub ks_shots: ShotCount,
    #[arg(long, value_name = "PATH")]
    pub ks_pool: Option<PathBuf>,
    /// Which class the principal components come from.
    #[arg(long, value_enum, default_value = "ks")]
    pub fit_on: FitOn,
    /// Rows to project.
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_EPS_FLOOR)]
    pub eps_floor: f64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ParamsArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Output directory; defaults to the directory holding the manifest.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}
