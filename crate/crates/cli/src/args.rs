use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "csa",
    version,
    about = "Coherent semantic attention for feature-space inpainting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fill the hole region of a feature tensor.
    Run(RunArgs),
    /// Resolve an image mask to a feature-space mask.
    Mask(MaskArgs),
    /// Render one attention row as a PPM heatmap.
    AttnViz(AttnVizArgs),
    /// Evaluate a training loss.
    Loss(LossArgs),
    /// Time the kernel phases on synthetic data.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, Args)]
pub struct ThreadArgs {
    /// Worker threads for search and reconstruction [default: logical CPUs]
    #[arg(long, env = "CSA_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct PyramidArgs {
    /// Number of 2x averaging levels from image to feature resolution
    #[arg(long, default_value_t = 3)]
    pub levels: u32,
    /// Coverage above which a feature cell is a hole
    #[arg(long, default_value_t = 0.3125)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
#[group(id = "mask_source", required = true, multiple = false)]
pub struct MaskSource {
    /// Feature-space mask tensor (H, W); values above 0.5 are holes
    #[arg(long, group = "mask_source")]
    pub mask: Option<PathBuf>,
    /// Image-space mask (PGM or PNG); resolved with --levels and --threshold
    #[arg(long, group = "mask_source")]
    pub mask_image: Option<PathBuf>,
    /// Use the central (H/2)x(W/2) block of the feature grid
    #[arg(long, group = "mask_source")]
    pub centering: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Input feature tensor (C, H, W)
    #[arg(long)]
    pub features: PathBuf,
    #[command(flatten)]
    pub source: MaskSource,
    #[command(flatten)]
    pub pyramid: PyramidArgs,
    /// Output feature tensor
    #[arg(long)]
    pub out: PathBuf,
    /// Attention matrix output (n_hole, n_context); coordinates go to <ATTN>.coords
    #[arg(long)]
    pub attn: Option<PathBuf>,
    /// Odd side length of the matched patches
    #[arg(long, default_value_t = 1)]
    pub patch_size: usize,
    /// Norm floor in the cosine correlation
    #[arg(long, default_value = "1e-8")]
    pub eps: f64,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    /// Image-space mask (PGM or PNG); pixels above 127 are holes
    #[arg(long)]
    pub image: PathBuf,
    #[command(flatten)]
    pub pyramid: PyramidArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AttnVizArgs {
    #[arg(long)]
    pub attn: PathBuf,
    /// Feature-space mask tensor the attention was computed with
    #[arg(long)]
    pub mask: PathBuf,
    /// Hole cell to show, as y,x
    #[arg(long, value_parser = parse_pixel)]
    pub pixel: (usize, usize),
    #[arg(long)]
    pub out: PathBuf,
    /// Output pixels per feature cell
    #[arg(long, default_value_t = 8)]
    pub cell_px: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossKind {
    Recon,
    Consistency,
    Gen,
    Disc,
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sign {
    AsPrinted,
    Minimized,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long, value_enum)]
    pub kind: LossKind,
    /// recon: coarse prediction
    #[arg(long)]
    pub rough: Option<PathBuf>,
    /// recon: refined prediction
    #[arg(long)]
    pub refined: Option<PathBuf>,
    /// recon, consistency: ground-truth tensor
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// consistency: attention-layer features
    #[arg(long)]
    pub csa: Option<PathBuf>,
    /// consistency: mirrored decoder features
    #[arg(long)]
    pub decoder: Option<PathBuf>,
    /// consistency: feature-space mask tensor
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// gen, disc: critic scores on real samples (1-extent tensor)
    #[arg(long)]
    pub real: Option<PathBuf>,
    /// gen, disc: critic scores on generated samples (1-extent tensor)
    #[arg(long)]
    pub fake: Option<PathBuf>,
    /// gen, disc: sign of the adversarial terms
    #[arg(long, value_enum, default_value_t = Sign::AsPrinted)]
    pub sign: Sign,
    /// total: reconstruction term
    #[arg(long, default_value_t = 1.0)]
    pub lre: f64,
    /// total: consistency term
    #[arg(long, default_value_t = 1.0)]
    pub lc: f64,
    /// total: adversarial term
    #[arg(long, default_value_t = 1.0)]
    pub dr: f64,
    /// total: weight of the reconstruction term
    #[arg(long, default_value_t = 1.0)]
    pub lambda_r: f64,
    /// total: weight of the consistency term
    #[arg(long, default_value_t = 0.01)]
    pub lambda_c: f64,
    /// total: weight of the adversarial term
    #[arg(long, default_value_t = 0.002)]
    pub lambda_d: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 512)]
    pub channels: usize,
    /// Feature grid as HxW
    #[arg(long, default_value = "32x32", value_parser = parse_size)]
    pub size: (usize, usize),
    /// Fraction of cells in the centred square hole, in (0, 1)
    #[arg(long, default_value_t = 0.25)]
    pub hole_ratio: f64,
    #[command(flatten)]
    pub threads: ThreadArgs,
    /// Timed runs per phase
    #[arg(long, default_value_t = 5)]
    pub repeat: usize,
    /// Seed for the synthetic features
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub patch_size: usize,
}

fn parse_pair(s: &str, sep: char) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(sep)
        .ok_or_else(|| format!("expected two integers separated by '{sep}', got {s:?}"))?;
    let a = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let b = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    Ok((a, b))
}

fn parse_pixel(s: &str) -> Result<(usize, usize), String> {
    parse_pair(s, ',')
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    parse_pair(&s.to_ascii_lowercase(), 'x')
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn pairs() {
        assert_eq!(parse_pixel("3,17"), Ok((3, 17)));
        assert_eq!(parse_size("32X48"), Ok((32, 48)));
        assert!(parse_pixel("3").is_err());
        assert!(parse_size("ax4").is_err());
    }

    #[test]
    fn defaults() {
        let cli = Cli::parse_from([
            "csa",
            "run",
            "--features",
            "f.npy",
            "--centering",
            "--out",
            "o.npy",
        ]);
        let Command::Run(run) = cli.command else {
            panic!()
        };
        assert_eq!(run.patch_size, 1);
        assert_eq!(run.eps, 1e-8);
        assert_eq!(run.pyramid.levels, 3);
        assert_eq!(run.pyramid.threshold, 5.0 / 16.0);

        let cli = Cli::parse_from(["csa", "loss", "--kind", "total"]);
        let Command::Loss(loss) = cli.command else {
            panic!()
        };
        assert_eq!(
            (loss.lambda_r, loss.lambda_c, loss.lambda_d),
            (1.0, 0.01, 0.002)
        );
        assert_eq!((loss.lre, loss.lc, loss.dr), (1.0, 1.0, 1.0));
    }

    #[test]
    fn mask_sources_are_exclusive_and_required() {
        assert!(Cli::try_parse_from(["csa", "run", "--features", "f", "--out", "o"]).is_err());
        assert!(Cli::try_parse_from([
            "csa",
            "run",
            "--features",
            "f",
            "--out",
            "o",
            "--centering",
            "--mask",
            "m"
        ])
        .is_err());
    }
}
