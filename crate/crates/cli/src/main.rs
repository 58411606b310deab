use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use attn_transport::io::json;
use attn_transport::io::pipeline::{
    run_diagnose, run_eval, run_gen, run_landscape, run_oracle, BinsOption, DiagnoseOptions, EvalOptions,
    LandscapeOptions, LandscapeSource, DEFAULT_EPS, DEFAULT_FLOOR,
};
use attn_transport::io::{Dtype, Manifest};
use attn_transport::spectral::DEFAULT_DENSE_LIMIT;
use attn_transport::{CanonicalSpec, Error, MaskKind};
use clap::{ArgGroup, Parser, Subcommand, ValueEnum};

const EXIT_DATA: u8 = 3;

#[derive(Parser)]
#[command(name = "attn-transport", version, about = "Spectral transport diagnostics for attention matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-head conductance, spectral gap and asymmetry for every manifest entry.
    Diagnose {
        manifest: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
        #[arg(long, default_value_t = DEFAULT_DENSE_LIMIT)]
        dense_limit: usize,
        /// Drop zero-degree rows and columns instead of failing the entry.
        #[arg(long)]
        drop_zero_degrees: bool,
        /// Seed for the bootstrap when the manifest carries labels.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Temporal-cut landscape summary over canonical specs or a manifest.
    #[command(group(ArgGroup::new("source").required(true).args(["spec", "manifest"])))]
    Landscape {
        /// `uniform:N`, `window:W:N`, `diagonal:N` or `exp:ALPHA:N`; repeatable.
        #[arg(long)]
        spec: Vec<CanonicalSpec>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_FLOOR)]
        floor: f64,
        /// Directory for per-head `t,t_over_n,phi` CSV curves.
        #[arg(long)]
        curves: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Raw, flipped and length-controlled AUROC for a per-head feature CSV.
    Eval {
        features: PathBuf,
        /// `auto` or a fixed positive bin count.
        #[arg(long, default_value = "auto")]
        bins: BinsOption,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = attn_transport::evalmetrics::DEFAULT_RESAMPLES)]
        resamples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact conductance by enumeration next to the sweep estimate.
    Oracle {
        matrix: PathBuf,
        #[arg(long, default_value = "none")]
        mask: MaskKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write canonical attention matrices and a manifest.
    Gen {
        #[arg(long, required = true)]
        spec: Vec<CanonicalSpec>,
        #[arg(long, value_enum, default_value_t = DtypeArg::F64)]
        dtype: DtypeArg,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DtypeArg {
    F64,
    F32,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_DATA)
        }
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Diagnose {
            manifest,
            eps,
            dense_limit,
            drop_zero_degrees,
            seed,
            out,
        } => {
            let manifest = Manifest::load(&manifest)?;
            let opts = DiagnoseOptions {
                eps,
                dense_limit,
                drop_zero_degrees,
                seed,
            };
            emit(&json::to_string(&run_diagnose(&manifest, &opts)?)?, out.as_deref())
        }
        Command::Landscape {
            spec,
            manifest,
            floor,
            curves,
            out,
        } => {
            let source = match manifest {
                Some(path) => LandscapeSource::Manifest(Manifest::load(&path)?),
                None => LandscapeSource::Specs(spec),
            };
            let opts = LandscapeOptions {
                floor,
                curve_dir: curves,
            };
            emit(&json::to_string(&run_landscape(&source, &opts)?)?, out.as_deref())
        }
        Command::Eval {
            features,
            bins,
            seed,
            resamples,
            out,
        } => {
            let opts = EvalOptions { bins, seed, resamples };
            emit(&json::to_string(&run_eval(&features, &opts)?)?, out.as_deref())
        }
        Command::Oracle { matrix, mask, out } => {
            emit(&json::to_string(&run_oracle(&matrix, mask)?)?, out.as_deref())
        }
        Command::Gen { spec, dtype, out } => {
            let dtype = match dtype {
                DtypeArg::F64 => Dtype::F64,
                DtypeArg::F32 => Dtype::F32,
            };
            let manifest = run_gen(&spec, &out, dtype)?;
            println!(
                "wrote {} matrices and {}",
                manifest.entries.len(),
                out.join("manifest.json").display()
            );
            Ok(())
        }
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
    }
}
