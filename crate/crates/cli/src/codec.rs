use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use lossyckpt::compress::{
    bound_from_target_psnr, compress as compress_block, decompress as decompress_block, measured_psnr, CompressedBlock,
    CompressorConfig, DEFAULT_BINS_HALF,
};
use lossyckpt::sparse::io::{read_vector_file, write_vector_file};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::output::{emit_json, finite, SCHEMA_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Absolute bound `--eb`.
    Abs,
    /// Value-range-relative bound `--eb`.
    Rel,
    /// Target PSNR `--psnr` in dB.
    FixedPsnr,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    /// Vector file to compress.
    #[arg(long, short)]
    input: PathBuf,
    /// Block file to write.
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "rel")]
    mode: Mode,
    #[arg(long, required_if_eq_any = [("mode", "abs"), ("mode", "rel")])]
    eb: Option<f64>,
    #[arg(long, required_if_eq("mode", "fixed-psnr"))]
    psnr: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_BINS_HALF)]
    bins_half: u32,
    /// Fixed-PSNR mode: use the closed-form bound only, without the check pass.
    #[arg(long)]
    closed_form_only: bool,
    /// Stats JSON path; stdout when absent.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct CompressStats {
    schema_version: u32,
    mode: &'static str,
    n: usize,
    value_range: f64,
    /// Closed-form bound for the target PSNR (fixed-PSNR mode only).
    eb_rel_closed_form: Option<f64>,
    /// Relative bound actually used; `null` for constant fields.
    eb_rel_chosen: Option<f64>,
    eb_abs: f64,
    /// `null` when the field is constant (PSNR undefined) or reconstruction is exact.
    measured_psnr: Option<f64>,
    max_abs_error: f64,
    escapes: usize,
    original_bytes: usize,
    compressed_bytes: usize,
    ratio: f64,
    t_comp: f64,
    t_decomp: f64,
    warning: Option<String>,
}

pub fn compress(args: CompressArgs) -> CliResult<()> {
    let data = read_vector_file(&args.input).map_err(|e| CliError::input(&args.input, e))?;
    let mut config = match args.mode {
        Mode::Abs => CompressorConfig::absolute(args.eb.expect("required by clap")),
        Mode::Rel => CompressorConfig::relative(args.eb.expect("required by clap")),
        Mode::FixedPsnr => CompressorConfig::fixed_psnr(args.psnr.expect("required by clap")),
    }
    .with_bins_half(args.bins_half);
    if args.closed_form_only {
        config = config.closed_form_only();
    }
    config.validate()?;

    let start = Instant::now();
    let block = compress_block(&data, &config)?;
    let t_comp = start.elapsed().as_secs_f64();
    let bytes = block.to_bytes();
    fs::write(&args.output, &bytes)?;

    let start = Instant::now();
    let recon = decompress_block(&block)?;
    let t_decomp = start.elapsed().as_secs_f64();
    let max_abs_error = data.iter().zip(&recon).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let (psnr, warning) = if block.value_range() == 0.0 {
        (None, Some("constant field: value range is 0, PSNR undefined".to_string()))
    } else {
        (finite(measured_psnr(&data, &recon)?.psnr), None)
    };
    if let Some(w) = &warning {
        eprintln!("warning: {w}");
    }
    let stats = CompressStats {
        schema_version: SCHEMA_VERSION,
        mode: match args.mode {
            Mode::Abs => "abs",
            Mode::Rel => "rel",
            Mode::FixedPsnr => "fixed-psnr",
        },
        n: data.len(),
        value_range: block.value_range(),
        eb_rel_closed_form: args.psnr.filter(|_| args.mode == Mode::FixedPsnr).map(bound_from_target_psnr).transpose()?,
        eb_rel_chosen: block.eb_rel(),
        eb_abs: block.eb_abs(),
        measured_psnr: psnr,
        max_abs_error,
        escapes: block.escapes().len(),
        original_bytes: 8 * data.len(),
        compressed_bytes: bytes.len(),
        ratio: (8 * data.len()) as f64 / bytes.len() as f64,
        t_comp,
        t_decomp,
        warning,
    };
    emit_json(args.stats.as_deref(), &stats)
}

#[derive(Debug, Args)]
pub struct DecompressArgs {
    /// Block file to read.
    #[arg(long, short)]
    input: PathBuf,
    /// Vector file to write.
    #[arg(long, short)]
    output: PathBuf,
    /// Original vector; when given, distortion stats are printed as JSON.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct DistortionStats {
    schema_version: u32,
    n: usize,
    eb_abs: f64,
    mse: f64,
    nrmse: Option<f64>,
    psnr: Option<f64>,
    max_abs_error: f64,
    within_bound: bool,
}

pub fn decompress(args: DecompressArgs) -> CliResult<()> {
    let bytes = fs::read(&args.input).map_err(|e| CliError::input(&args.input, e))?;
    let block = CompressedBlock::from_bytes(&bytes).map_err(|e| CliError::input(&args.input, e))?;
    let recon = decompress_block(&block)?;
    write_vector_file(&args.output, &recon)?;
    let Some(reference) = &args.reference else {
        return Ok(());
    };
    let orig = read_vector_file(reference).map_err(|e| CliError::input(reference, e))?;
    if orig.len() != recon.len() {
        return Err(CliError::usage(format!(
            "reference has {} entries, block has {}",
            orig.len(),
            recon.len()
        )));
    }
    let max_abs_error = orig.iter().zip(&recon).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mse = orig.iter().zip(&recon).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / orig.len() as f64;
    let (nrmse, psnr) = match measured_psnr(&orig, &recon) {
        Ok(d) => (Some(d.nrmse), finite(d.psnr)),
        Err(_) => (None, None),
    };
    emit_json(
        None,
        &DistortionStats {
            schema_version: SCHEMA_VERSION,
            n: orig.len(),
            eb_abs: block.eb_abs(),
            mse,
            nrmse,
            psnr,
            max_abs_error,
            within_bound: max_abs_error <= block.eb_abs(),
        },
    )
}
