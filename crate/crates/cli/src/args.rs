use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "cgw", version, about = "Conic Gromov-Wasserstein distances between measure networks")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Cone angle δ.
    #[arg(long, global = true, default_value_t = 0.5)]
    pub delta: f64,
    /// Cone kernel profile.
    #[arg(long, global = true, value_enum, default_value_t = KernelArg::Exp)]
    pub kernel: KernelArg,
    #[arg(long, global = true)]
    pub max_iters: Option<usize>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub restarts: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Number of value bins of the factored tensor, or `off` to force the
    /// dense tensor.
    #[arg(long, global = true, value_parser = parse_quantize)]
    pub quantize: Option<Quantize>,
    #[arg(long, global = true)]
    pub tile: Option<usize>,
    /// Worker threads: a count or `auto`.
    #[arg(long, global = true, value_parser = parse_threads, default_value = "auto")]
    pub threads: Threads,
    /// Write the result here instead of standard output; the run manifest
    /// goes next to it.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Per-sweep trace CSV.
    #[arg(long, global = true)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Cos,
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantize {
    Off,
    Bins(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threads {
    Auto,
    Count(usize),
}

fn parse_quantize(s: &str) -> Result<Quantize, String> {
    if s == "off" {
        return Ok(Quantize::Off);
    }
    match s.parse::<usize>() {
        Ok(q) if q >= 1 => Ok(Quantize::Bins(q)),
        _ => Err(format!("expected a positive bin count or 'off', got '{s}'")),
    }
}

fn parse_threads(s: &str) -> Result<Threads, String> {
    if s == "auto" {
        return Ok(Threads::Auto);
    }
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(Threads::Count(n)),
        _ => Err(format!("expected a positive thread count or 'auto', got '{s}'")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleCount {
    All,
    Count(usize),
}

fn parse_sample(s: &str) -> Result<SampleCount, String> {
    if s == "all" {
        return Ok(SampleCount::All);
    }
    s.parse().map(SampleCount::Count).map_err(|_| format!("expected a count or 'all', got '{s}'"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImageFormat {
    Csv,
    Pgm,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Conic co-optimal transport between two hypernetworks.
    Ccot {
        x: PathBuf,
        y: PathBuf,
        /// Write the soft sample matching √(A∘B) as CSV.
        #[arg(long)]
        matching: Option<PathBuf>,
    },
    /// Conic Gromov-Wasserstein distance between two networks.
    Cgw { x: PathBuf, y: PathBuf },
    /// Balanced GW₂ by conditional gradient.
    Gw2 { x: PathBuf, y: PathBuf },
    /// Balanced co-optimal transport.
    Cot { x: PathBuf, y: PathBuf },
    /// Conic UOT lower bound between the kernel-value laws.
    UotBound { x: PathBuf, y: PathBuf },
    /// CGW against its large-δ limit over a list of δ.
    DeltaSweep {
        x: PathBuf,
        y: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0])]
        deltas: Vec<f64>,
        /// Table of δ, cgw, reference, relative_gap.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Numerical checks of the metric's guarantees; exit 2 on failure.
    Verify {
        #[command(subcommand)]
        probe: Probe,
    },
    /// Synthetic images of non-overlapping bright squares.
    GenSquares {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 4)]
        g: usize,
        #[arg(long, default_value_t = 3)]
        side: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, value_enum, default_value_t = ImageFormat::Csv)]
        format: ImageFormat,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Sampled kNN network of an image (CSV grid or PGM).
    Img2net {
        image: PathBuf,
        #[arg(long, value_parser = parse_sample, default_value = "60")]
        n_sample: SampleCount,
        #[arg(long, default_value_t = 4)]
        knn: usize,
    },
    /// Pair of hypernetworks with known cell and feature correspondences.
    GenAligned {
        #[arg(long, default_value_t = 500)]
        cells: usize,
        #[arg(long, default_value_t = 10)]
        feat_x: usize,
        #[arg(long, default_value_t = 10)]
        feat_y: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 1.0)]
        downsample: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// k-NN classification error of feature vectors; the CSV needs a
    /// `label` column.
    Classify {
        features: PathBuf,
        #[arg(long, default_value_t = 15)]
        k: usize,
        #[arg(long, default_value_t = 0.8)]
        label_rate: f64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// FOSCTTM of a score matrix against true pairs (CSV with columns x,y).
    Foscttm { scores: PathBuf, pairs: PathBuf },
    /// Timing of CGW on square-image networks of growing size.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [20, 60, 100])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 4)]
        knn: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum Probe {
    Scaling {
        net: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 2.0)]
        s: f64,
    },
    Bounds { x: PathBuf, y: PathBuf },
    Robustness {
        net: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        #[arg(long, default_value_t = 10)]
        trials: usize,
    },
    Weakiso { net: PathBuf },
    Fragility {
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        f: f64,
    },
}
