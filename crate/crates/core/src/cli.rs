//! Command-line front end: argument parsing, output files and exit codes.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::Error;
use crate::experiment::{
    files, load_config, run_eval, run_export_topology, run_train, Topology, PRESET_NAMES,
};
use crate::geometry::topology_svg;
use crate::metrics::report_json;

/// Exit status of a successful run.
pub const EXIT_OK: i32 = 0;
/// The run finished but produced an empty topology.
pub const EXIT_EMPTY_TOPOLOGY: i32 = 1;
/// Invalid configuration, arguments or incompatible inputs.
pub const EXIT_CONFIG: i32 = 2;
/// Training diverged or a numerical routine failed.
pub const EXIT_NUMERIC: i32 = 3;
/// Reading or writing files failed.
pub const EXIT_IO: i32 = 4;

/// Map an error to its process exit status.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::ShapeMismatch(_) | Error::UndefinedMetric(_) | Error::OutsideDomain(_) => {
            EXIT_CONFIG
        }
        Error::Domain { .. }
        | Error::Numeric { .. }
        | Error::DegenerateNormal { .. }
        | Error::Divergence { .. }
        | Error::NoConvergence { .. } => EXIT_NUMERIC,
        Error::Io(_) | Error::Format(_) => EXIT_IO,
    }
}

#[derive(Debug, Parser)]
#[command(name = "ltpinn", version, about = "Train PINNs with learnable circle-patch geometry")]
pub struct Cli {
    /// Worker threads for loss evaluation (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a configuration and write all artifacts.
    Train {
        /// Preset name or path to a TOML config.
        config: String,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the number of epochs.
        #[arg(long)]
        epochs: Option<u64>,
        /// Do not print progress lines.
        #[arg(long)]
        quiet: bool,
    },
    /// Compute metrics for a checkpoint and write metrics.json.
    Eval {
        config: String,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated metric names; defaults depend on the configuration.
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<String>,
        /// Reference field CSV with columns x,y,<components>.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Where to write the report (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the learned topology of a checkpoint as JSON (and SVG for circles).
    ExportTopology {
        config: String,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Density threshold for DT checkpoints.
        #[arg(long)]
        threshold: Option<f64>,
        /// Extra thresholds to report, comma-separated.
        #[arg(long, value_delimiter = ',')]
        sweep: Vec<f64>,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print a preset or config file with every default filled in.
    PrintConfig {
        /// Preset name or path; prints the list of presets when absent.
        config: Option<String>,
    },
}

/// Parse `args`, run the command and return the exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> crate::Result<i32> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // a pool that already exists keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Train {
            config,
            out,
            epochs,
            quiet,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(e) = epochs {
                cfg.training.epochs = e;
            }
            let result = run_train(&cfg, out.as_deref(), |epoch, loss, gamma| {
                if !quiet {
                    let g: Vec<String> = gamma.iter().map(|g| format!("({:.4}, {:.4})", g[0], g[1])).collect();
                    eprintln!("epoch {epoch:>7}  loss {:.6e}  {}", loss.total, g.join(" "));
                }
            });
            let summary = result?;
            if !quiet {
                eprintln!("wrote {}", summary.out_dir.display());
            }
            Ok(topology_status(&summary.topology))
        }
        Command::Eval {
            config,
            checkpoint,
            metrics,
            reference,
            out,
        } => {
            let cfg = load_config(&config)?;
            let records = run_eval(&cfg, &checkpoint, &metrics, reference.as_deref())?;
            let json = report_json(&records)?;
            match out {
                Some(p) => write_with_parent(&p, &json)?,
                None => println!("{json}"),
            }
            Ok(EXIT_OK)
        }
        Command::ExportTopology {
            config,
            checkpoint,
            threshold,
            sweep,
            out,
        } => {
            let cfg = load_config(&config)?;
            let (topo, swept) = run_export_topology(&cfg, &checkpoint, threshold, &sweep)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join(files::TOPOLOGY), topo.to_json()?)?;
            if let Topology::Circles(p) = &topo {
                fs::write(out.join(files::TOPOLOGY_SVG), topology_svg(p, &cfg.domain.roi))?;
            }
            for t in &swept {
                println!("threshold {:.4}: {} nodes, {} contours", t.threshold, t.n_nodes, t.contours.len());
            }
            Ok(topology_status(&topo))
        }
        Command::PrintConfig { config } => {
            match config {
                Some(c) => print!("{}", load_config(&c)?.to_toml()),
                None => {
                    for name in PRESET_NAMES {
                        println!("{name}");
                    }
                }
            }
            Ok(EXIT_OK)
        }
    }
}

fn topology_status(t: &Topology) -> i32 {
    if t.is_empty() {
        eprintln!("warning: the extracted topology is empty");
        EXIT_EMPTY_TOPOLOGY
    } else {
        EXIT_OK
    }
}

fn write_with_parent(path: &Path, text: &str) -> crate::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}
