use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "makeupbag",
    version,
    about = "Extract makeup masks and transfer makeup between faces"
)]
pub struct Cli {
    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Produce a makeup mask for one image.
    Extract(ExtractArgs),
    /// Composite (and refine) a reference style onto a target.
    Apply(ApplyArgs),
    /// Full pipeline: warp, extract, composite, refine.
    Transfer(TransferArgs),
    /// Merge region-restricted masks by per-pixel maximum.
    Combine(CombineArgs),
    /// Train the patch-local extractor on image-level labels.
    TrainExtractor(TrainExtractorArgs),
    /// Train the refinement generator against a frozen extractor.
    TrainGan(TrainGanArgs),
    /// Score mask methods against ground-truth masks.
    Eval(EvalArgs),
    /// Write a synthetic face dataset with exact ground truth.
    Synth(SynthArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Bagnet,
    Gmm,
    Chroma,
    Residual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExtractOnArg {
    Warped,
    Reference,
}

/// How a mask is computed when one is needed.
#[derive(Clone, Debug, Args)]
pub struct MaskArgs {
    /// Mask method; defaults to bagnet when an extractor is given.
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Extractor checkpoint (`.safetensors` with a `.json` sidecar).
    #[arg(long, alias = "extractor")]
    pub model: Option<PathBuf>,
    /// Fitted skin GMM (JSON); without it the GMM is fitted on the image's own skin.
    #[arg(long)]
    pub gmm_model: Option<PathBuf>,
    /// Log-likelihood percentile below which GMM flags makeup.
    #[arg(long, default_value_t = 5.0)]
    pub percentile: f64,
    /// Chroma method hue band in degrees.
    #[arg(long, default_value_t = 15.0)]
    pub hue_band: f64,
    /// Chroma method saturation band.
    #[arg(long, default_value_t = 0.15)]
    pub saturation_band: f64,
    /// Residual method threshold on the max-channel difference.
    #[arg(long, default_value_t = 0.1)]
    pub residual_threshold: f32,
    /// Extract on the reference warped to the target, or on the raw reference.
    #[arg(long, value_enum, default_value = "warped")]
    pub extract_on: ExtractOnArg,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Landmark JSON; the detector backend is queried when omitted.
    #[arg(long)]
    pub landmarks: Option<PathBuf>,
    /// Produce the mask in this target's geometry.
    #[arg(long, requires = "onto_landmarks")]
    pub onto: Option<PathBuf>,
    #[arg(long)]
    pub onto_landmarks: Option<PathBuf>,
    #[command(flatten)]
    pub mask: MaskArgs,
    #[arg(long)]
    pub out_mask: PathBuf,
}

/// Target/reference pair shared by `apply` and `transfer`.
#[derive(Debug, Args)]
pub struct PairArgs {
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub target_landmarks: Option<PathBuf>,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub reference_landmarks: Option<PathBuf>,
}

/// Second-stage options.
#[derive(Debug, Args)]
pub struct RefineArgs {
    /// Generator checkpoint.
    #[arg(long)]
    pub generator: Option<PathBuf>,
    /// Skip the generator and output the composite.
    #[arg(long)]
    pub bypass: bool,
    /// Adds `mask · offset` to the result, e.g. `0.05,0,-0.02`.
    #[arg(long, value_parser = parse_rgb, allow_hyphen_values = true)]
    pub color_offset: Option<[f32; 3]>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Mask in target geometry; computed from the reference when omitted.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[command(flatten)]
    pub mask_args: MaskArgs,
    #[command(flatten)]
    pub refine: RefineArgs,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    #[command(flatten)]
    pub mask_args: MaskArgs,
    /// Use this mask instead of extracting one.
    #[arg(long)]
    pub mask_override: Option<PathBuf>,
    /// Also write the intermediate mask.
    #[arg(long)]
    pub save_mask: Option<PathBuf>,
    #[command(flatten)]
    pub refine: RefineArgs,
}

#[derive(Debug, Args)]
pub struct CombineArgs {
    /// Masks, each paired with the `--regions` at the same position.
    #[arg(long = "mask", required = true)]
    pub masks: Vec<PathBuf>,
    /// Comma-separated region ids (lips, eyes, skin, other, all).
    #[arg(long = "regions", required = true)]
    pub regions: Vec<String>,
    /// Landmarks of the face all masks are aligned to.
    #[arg(long)]
    pub landmarks: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainExtractorArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// TOML with optional `[model]` and `[train]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Oversampling weights none:light:mid:heavy, e.g. `1:1:2:3`.
    #[arg(long)]
    pub weights: Option<String>,
    /// Starts from a checkpoint instead of a fresh model.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainGanArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub extractor: PathBuf,
    /// TOML with optional `[generator]`, `[discriminator]` and `[train]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Updates the extractor too.
    #[arg(long)]
    pub joint: bool,
    /// Write a sample grid every N steps.
    #[arg(long)]
    pub sample_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Comma-separated methods.
    #[arg(long, default_value = "bagnet,gmm,chroma")]
    pub methods: String,
    #[command(flatten)]
    pub mask: MaskArgs,
    /// Also score images without makeup.
    #[arg(long)]
    pub include_plain: bool,
    /// JSON report path; the curve plot is written next to it.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub makeup_fraction: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML service config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured bind address.
    #[arg(long)]
    pub bind: Option<String>,
}

fn parse_rgb(s: &str) -> Result<[f32; 3], String> {
    let parts: Vec<f32> = s
        .split(',')
        .map(|p| p.trim().parse::<f32>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|_| "expected three comma-separated values".to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_offsets_and_repeated_masks() {
        assert_eq!(parse_rgb("0.1, 0,-0.2").unwrap(), [0.1, 0.0, -0.2]);
        assert!(parse_rgb("1,2").is_err());
        let cli = Cli::try_parse_from([
            "makeupbag",
            "combine",
            "--mask",
            "a.png",
            "--regions",
            "lips",
            "--mask",
            "b.png",
            "--regions",
            "eyes",
            "--landmarks",
            "l.json",
            "--out",
            "o.png",
        ])
        .unwrap();
        match cli.command {
            Command::Combine(c) => {
                assert_eq!(c.masks.len(), 2);
                assert_eq!(c.regions, vec!["lips", "eyes"]);
            }
            _ => panic!("wrong command"),
        }
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
