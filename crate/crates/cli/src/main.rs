//! `ats`: classify a directory of images as cover or stego without any
//! external training data.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use ats_core::Algorithm;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "ats",
    version,
    about = "Unsupervised targeted steganalysis with artificial training sets"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Master seed; every random choice derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Center-clip every input image to WxH.
    #[arg(long, global = true, value_parser = parse_clip, value_name = "WxH")]
    pub clip: Option<(usize, usize)>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

impl Global {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct Embedding {
    /// Embedding algorithm.
    #[arg(long, default_value = "lsbm", value_parser = parse_algo)]
    pub algo: Algorithm,
    /// Embedding rate in bits per pixel, in (0, 1].
    #[arg(long)]
    pub rate: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed a random payload into every image of a directory.
    Embed {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        embedding: Embedding,
        /// Embedding key in hex (default: --seed).
        #[arg(long, value_parser = parse_hex_key)]
        key: Option<u64>,
    },
    /// Write SPAM features of every image as CSV.
    Features {
        #[arg(long = "in")]
        input: PathBuf,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label every image of a directory as cover or stego.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        embedding: Embedding,
        /// CSV with columns id,label to score the result against.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Write the trained classifier as JSON.
        #[arg(long)]
        save_model: Option<PathBuf>,
    },
    /// Rank tentative embedding rates by the centroid score, lowest first.
    Search {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "lsbm", value_parser = parse_algo)]
        algo: Algorithm,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6")]
        rates: Vec<f64>,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Reclassify a growing set as images arrive; one JSON line per round.
    Stream {
        /// Directory to watch for new images.
        #[arg(long, conflicts_with = "stdin", required_unless_present = "stdin")]
        watch: Option<PathBuf>,
        /// Read image paths, one per line, from standard input.
        #[arg(long)]
        stdin: bool,
        #[command(flatten)]
        embedding: Embedding,
        /// Images collected before the first round.
        #[arg(long, default_value_t = ats_core::quantify::DEFAULT_N_MIN)]
        nmin: usize,
        /// Reclassify only every k-th arrival.
        #[arg(long, default_value_t = 1)]
        batch_every: usize,
        /// Directory poll interval in milliseconds.
        #[arg(long, default_value_t = 500)]
        poll_ms: u64,
        /// Stop after this many images.
        #[arg(long)]
        max_images: Option<usize>,
        /// Stop after this many seconds without a new image.
        #[arg(long)]
        idle_exit: Option<f64>,
    },
    /// Run an experiment described by a TOML or JSON spec.
    Experiment {
        #[arg(long)]
        spec: PathBuf,
        /// Sweep the stego share from 0 to 100% in steps of this many images.
        #[arg(long)]
        sweep: Option<usize>,
    },
}

fn parse_clip(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got `{s}`"))?;
    let w: usize = w
        .trim()
        .parse()
        .map_err(|_| format!("bad width in `{s}`"))?;
    let h: usize = h
        .trim()
        .parse()
        .map_err(|_| format!("bad height in `{s}`"))?;
    if w == 0 || h == 0 {
        return Err("clip size must be positive".into());
    }
    Ok((w, h))
}

fn parse_hex_key(s: &str) -> Result<u64, String> {
    let digits = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .unwrap_or(s);
    u64::from_str_radix(digits, 16).map_err(|e| format!("bad hex key `{s}`: {e}"))
}

fn parse_algo(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: ats_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
