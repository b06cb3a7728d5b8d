use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use csa_core::io::{
    read_array, read_feature_mask, read_mask_image, read_scores, read_tensor, render_heatmap,
    write_array, write_feature_mask, write_tensor, HeatmapSpec,
};
use csa_core::kernel::{extract_context, generate, reconstruct, search};
use csa_core::losses::{
    consistency_loss, ralsgan_discriminator_loss_with, ralsgan_generator_loss_with,
    reconstruction_loss, total_objective, ConsistencyInputs, CriticScores, LossWeights,
    SignConvention,
};
use csa_core::mask::{centering_feature_mask, irregular_feature_mask};
use csa_core::{csa_forward, AttentionMatrix, CsaConfig, FeatureMap, FeatureMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::args::{
    AttnVizArgs, BenchArgs, Cli, Command, LossArgs, LossKind, MaskArgs, MaskSource, PyramidArgs,
    RunArgs, Sign, ThreadArgs,
};
use crate::exit::{CliError, CliResult, INPUT, PIXEL_NOT_IN_HOLE};

pub fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(a) => run(a),
        Command::Mask(a) => mask(a),
        Command::AttnViz(a) => attn_viz(a),
        Command::Loss(a) => loss(a),
        Command::Bench(a) => bench(a),
    }
}

fn thread_pool(threads: ThreadArgs) -> CliResult<(rayon::ThreadPool, usize)> {
    let n = match threads.threads {
        Some(0) => return Err(CliError::new(INPUT, "--threads must be at least 1")),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::new(crate::exit::IO, format!("cannot start thread pool: {e}")))?;
    Ok((pool, n))
}

fn resolve_mask(
    source: &MaskSource,
    pyramid: &PyramidArgs,
    map: &FeatureMap,
) -> CliResult<FeatureMask> {
    let mask = if source.centering {
        centering_feature_mask(map.height(), map.width())?
    } else if let Some(path) = &source.mask {
        read_feature_mask(path)?
    } else if let Some(path) = &source.mask_image {
        irregular_feature_mask(&read_mask_image(path)?, pyramid.levels, pyramid.threshold)?
    } else {
        unreachable!("clap requires one mask source")
    };
    if (mask.height(), mask.width()) != (map.height(), map.width()) {
        return Err(CliError::new(
            INPUT,
            format!(
                "mask resolves to {}x{} but the features are {}x{}",
                mask.height(),
                mask.width(),
                map.height(),
                map.width()
            ),
        ));
    }
    Ok(mask)
}

/// Sidecar path for an attention file: `<attn>.coords`.
pub fn coords_path(attn: &Path) -> PathBuf {
    let mut s = attn.as_os_str().to_owned();
    s.push(".coords");
    PathBuf::from(s)
}

fn write_coords(
    path: &Path,
    holes: &[(usize, usize)],
    context: &[(usize, usize)],
) -> CliResult<()> {
    let mut text = String::new();
    for (y, x) in holes {
        writeln!(text, "hole {y} {x}").unwrap();
    }
    for (y, x) in context {
        writeln!(text, "context {y} {x}").unwrap();
    }
    fs::write(path, text)?;
    Ok(())
}

type CoordLists = (Vec<(usize, usize)>, Vec<(usize, usize)>);

fn read_coords(path: &Path) -> CliResult<CoordLists> {
    let text = fs::read_to_string(path)?;
    let (mut holes, mut context) = (Vec::new(), Vec::new());
    for (n, line) in text.lines().enumerate() {
        let bad = || {
            CliError::new(
                INPUT,
                format!("{}:{}: malformed line {line:?}", path.display(), n + 1),
            )
        };
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.is_empty() {
            continue;
        }
        let [kind, y, x] = parts[..] else {
            return Err(bad());
        };
        let cell = (y.parse().map_err(|_| bad())?, x.parse().map_err(|_| bad())?);
        match kind {
            "hole" => holes.push(cell),
            "context" => context.push(cell),
            _ => return Err(bad()),
        }
    }
    Ok((holes, context))
}

#[derive(Serialize)]
struct RunSummary {
    n_hole: usize,
    n_context: usize,
    wall_ms: f64,
}

fn run(a: RunArgs) -> CliResult<()> {
    let map = read_tensor(&a.features)?;
    let mask = resolve_mask(&a.source, &a.pyramid, &map)?;
    let config = CsaConfig {
        patch_size: a.patch_size,
        eps: a.eps,
    };
    config.validate()?;
    let (pool, _) = thread_pool(a.threads)?;

    let start = Instant::now();
    let out = pool.install(|| csa_forward(&map, &mask, &config))?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;

    write_tensor(&out.features, &a.out)?;
    if let Some(path) = &a.attn {
        let attn = &out.attention;
        write_array(path, &[attn.n_hole(), attn.n_context()], attn.data())?;
        write_coords(&coords_path(path), &out.search.order, &out.context_coords)?;
    }
    let summary = RunSummary {
        n_hole: out.attention.n_hole(),
        n_context: out.attention.n_context(),
        wall_ms,
    };
    println!("{}", serde_json::to_string(&summary).unwrap());
    Ok(())
}

fn mask(a: MaskArgs) -> CliResult<()> {
    let image = read_mask_image(&a.image)?;
    let mask = irregular_feature_mask(&image, a.pyramid.levels, a.pyramid.threshold)?;
    write_feature_mask(&mask, &a.out)?;
    Ok(())
}

fn attn_viz(a: AttnVizArgs) -> CliResult<()> {
    let mask = read_feature_mask(&a.mask)?;
    let (py, px) = a.pixel;
    if py >= mask.height() || px >= mask.width() || !mask.is_hole(py, px) {
        return Err(CliError::new(
            PIXEL_NOT_IN_HOLE,
            format!("pixel ({py}, {px}) is not in the hole region"),
        ));
    }
    let array = read_array(&a.attn)?;
    let [rows, cols] = array.shape[..] else {
        return Err(CliError::new(
            INPUT,
            format!("attention must have 2 extents, got {:?}", array.shape),
        ));
    };
    let attention = AttentionMatrix::new(rows, cols, array.to_f64())?;

    let sidecar = coords_path(&a.attn);
    let context_coords = if sidecar.exists() {
        let (holes, context) = read_coords(&sidecar)?;
        if holes != mask.hole_coords() {
            return Err(CliError::new(
                INPUT,
                format!(
                    "{} lists hole cells that differ from the mask",
                    sidecar.display()
                ),
            ));
        }
        Some(context)
    } else {
        None
    };
    let spec = HeatmapSpec {
        pixel: a.pixel,
        cell_px: a.cell_px,
        context_coords,
    };
    render_heatmap(&attention, &mask, &spec, &a.out)?;
    Ok(())
}

/// Formats like C's `%.12g`.
pub fn format_significant(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{}", if v == 0.0 { 0.0 } else { v });
    }
    let rounded: f64 = format!("{v:.11e}").parse().unwrap();
    let exponent = rounded.abs().log10().floor() as i32;
    if (-5..12).contains(&exponent) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str, kind: &str) -> CliResult<&'a PathBuf> {
    path.as_ref()
        .ok_or_else(|| CliError::new(INPUT, format!("--kind {kind} needs {flag}")))
}

fn loss(a: LossArgs) -> CliResult<()> {
    let sign = match a.sign {
        Sign::AsPrinted => SignConvention::AsPrinted,
        Sign::Minimized => SignConvention::Minimized,
    };
    let value = match a.kind {
        LossKind::Recon => {
            let rough = read_tensor(required(&a.rough, "--rough", "recon")?)?;
            let refined = read_tensor(required(&a.refined, "--refined", "recon")?)?;
            let target = read_tensor(required(&a.target, "--target", "recon")?)?;
            reconstruction_loss(&rough, &refined, &target)?
        }
        LossKind::Consistency => {
            let csa = read_tensor(required(&a.csa, "--csa", "consistency")?)?;
            let decoder = read_tensor(required(&a.decoder, "--decoder", "consistency")?)?;
            let target = read_tensor(required(&a.target, "--target", "consistency")?)?;
            let mask = read_feature_mask(required(&a.mask, "--mask", "consistency")?)?;
            consistency_loss(&ConsistencyInputs {
                csa_features: &csa,
                decoder_features: &decoder,
                target_features: &target,
                mask: &mask,
            })?
        }
        LossKind::Gen | LossKind::Disc => {
            let name = if a.kind == LossKind::Gen {
                "gen"
            } else {
                "disc"
            };
            let real = read_scores(required(&a.real, "--real", name)?)?;
            let fake = read_scores(required(&a.fake, "--fake", name)?)?;
            let scores = CriticScores::new(real, fake)?;
            if a.kind == LossKind::Gen {
                ralsgan_generator_loss_with(&scores, sign)?
            } else {
                ralsgan_discriminator_loss_with(&scores, sign)?
            }
        }
        LossKind::Total => {
            let weights = LossWeights::new(a.lambda_r, a.lambda_c, a.lambda_d)?;
            total_objective(a.lre, a.lc, a.dr, &weights)
        }
    };
    println!("{}", format_significant(value));
    Ok(())
}

#[derive(Serialize)]
struct BenchRow {
    phase: &'static str,
    threads: usize,
    median_ms: f64,
    p95_ms: f64,
    n_hole: usize,
    n_context: usize,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn p95(sorted: &[f64]) -> f64 {
    let rank = (0.95 * sorted.len() as f64).ceil() as usize;
    sorted[rank.max(1) - 1]
}

/// Side of the centred hole block along an extent of length `n`.
fn hole_side(n: usize, ratio: f64) -> CliResult<usize> {
    let side = (ratio.sqrt() * n as f64).round() as usize;
    if side == 0 || side >= n {
        return Err(CliError::new(
            INPUT,
            format!("hole ratio {ratio} gives a {side}-cell block on an extent of {n}"),
        ));
    }
    Ok(side)
}

fn bench(a: BenchArgs) -> CliResult<()> {
    let (h, w) = a.size;
    if a.channels == 0 || h == 0 || w == 0 {
        return Err(CliError::new(INPUT, "channels and size must be positive"));
    }
    if !(a.hole_ratio > 0.0 && a.hole_ratio < 1.0) {
        return Err(CliError::new(
            INPUT,
            format!("hole ratio must lie in (0, 1), got {}", a.hole_ratio),
        ));
    }
    if a.repeat == 0 {
        return Err(CliError::new(INPUT, "--repeat must be at least 1"));
    }
    let (sh, sw) = (hole_side(h, a.hole_ratio)?, hole_side(w, a.hole_ratio)?);
    let (oy, ox) = ((h - sh) / 2, (w - sw) / 2);
    let mask = FeatureMask::from_fn(h, w, |y, x| {
        (oy..oy + sh).contains(&y) && (ox..ox + sw).contains(&x)
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let map = FeatureMap::from_fn(a.channels, h, w, |_, _, _| rng.random_range(-1.0..1.0))?;
    let config = CsaConfig {
        patch_size: a.patch_size,
        ..CsaConfig::default()
    };
    config.validate()?;
    let (pool, threads) = thread_pool(a.threads)?;

    let bank = extract_context(&map, &mask, config.patch_size)?;
    let mut times = [Vec::new(), Vec::new(), Vec::new()];
    for _ in 0..a.repeat {
        let t = Instant::now();
        let found = pool.install(|| search(&map, &mask, &bank, &config))?;
        times[0].push(t.elapsed().as_secs_f64() * 1e3);

        let t = Instant::now();
        let (_, attention) = generate(&bank, &found, &config)?;
        times[1].push(t.elapsed().as_secs_f64() * 1e3);

        let t = Instant::now();
        pool.install(|| reconstruct(&attention, &bank, &map, &mask))?;
        times[2].push(t.elapsed().as_secs_f64() * 1e3);
    }

    for (phase, mut samples) in ["search", "generate", "reconstruct"].into_iter().zip(times) {
        samples.sort_by(f64::total_cmp);
        let row = BenchRow {
            phase,
            threads: if phase == "generate" { 1 } else { threads },
            median_ms: median(&samples),
            p95_ms: p95(&samples),
            n_hole: mask.hole_count(),
            n_context: bank.len(),
        };
        println!("{}", serde_json::to_string(&row).unwrap());
    }
    Ok(())
}
