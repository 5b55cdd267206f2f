//! Command-line front end: exact verification, tree sampling, cut-tree
//! construction, convergence experiments and fragmentation experiments.
//! Exit code 0 means every check in the produced report passed.

use clap::{Args, Parser, Subcommand, ValueEnum};
use leafcut::cut::{coupled_cut_trees, dieuleveut_cut_tree, hw_cut_tree, mod_cut_tree};
use leafcut::experiments::{
    run_convergence, run_fragment, run_verification, ExperimentConfig, OutputFormat, Report,
};
use leafcut::offspring::OffspringDist;
use leafcut::rng::substream;
use leafcut::sampler::{sample_gw_n_leaves, SamplerConfig};
use leafcut::Result;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "leafcut", version, about = "Leaf-conditioned trees and their cut-trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Offspring law as "k:p,k:p,...", e.g. "0:0.5,2:0.5"; k = 1 rejected.
    #[arg(long, default_value = "0:0.5,2:0.5")]
    nu: String,
    /// Master seed; replicates use counter-based substreams.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads (default: one per core).
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for CSV and JSON artifacts.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Report format on stdout.
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum CutKindArg {
    Hw,
    Mod,
    Dieuleveut,
    Coupled,
}

#[derive(Subcommand)]
enum Command {
    /// Run the exact verification suite.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Sampled instances per sampled check.
        #[arg(long, default_value_t = 10_000)]
        replicates: usize,
    },
    /// Sample conditioned trees as JSON lines of parent arrays.
    Sample {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        n_leaves: usize,
        #[arg(long, default_value_t = 100)]
        replicates: usize,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build cut-trees of sampled conditioned trees (JSON lines).
    Cuttree {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        kind: CutKindArg,
        #[arg(long)]
        n_leaves: usize,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distribution-agreement experiment across the rescaled observables.
    Converge {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated list of leaf counts.
        #[arg(long, default_value = "1000", value_delimiter = ',')]
        n_leaves: Vec<usize>,
        #[arg(long, default_value_t = 2000)]
        replicates: usize,
    },
    /// Fragmentation inequality experiment.
    Fragment {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "50,200", value_delimiter = ',')]
        n_leaves: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        replicates: usize,
    },
}

fn build_config(
    common: &CommonArgs,
    n_list: Vec<usize>,
    replicates: usize,
) -> Result<ExperimentConfig> {
    let nu = OffspringDist::parse(&common.nu)?;
    nu.require_critical()?;
    Ok(ExperimentConfig {
        nu,
        n_list,
        replicates,
        seed: common.seed,
        threads: common.threads,
        out_dir: common.out_dir.clone(),
        format: match common.format {
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Text => OutputFormat::Text,
        },
    })
}

fn emit_report(report: &Report, cfg: &ExperimentConfig) -> Result<bool> {
    match cfg.format {
        OutputFormat::Json => println!("{}", report.to_json()),
        OutputFormat::Csv => print!("{}", report.to_csv()),
        OutputFormat::Text => print!("{}", report.to_text()),
    }
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("report_{}.json", report.kind)), report.to_json())?;
    }
    Ok(report.pass)
}

fn write_lines(out: &Option<PathBuf>, lines: &[String]) -> Result<()> {
    match out {
        Some(path) => {
            let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
            for line in lines {
                writeln!(f, "{line}")?;
            }
        }
        None => {
            let stdout = std::io::stdout();
            let mut f = stdout.lock();
            for line in lines {
                writeln!(f, "{line}")?;
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Verify { common, replicates } => {
            let cfg = build_config(&common, vec![], replicates)?;
            let report = run_verification(&cfg)?;
            emit_report(&report, &cfg)
        }
        Command::Converge {
            common,
            n_leaves,
            replicates,
        } => {
            let cfg = build_config(&common, n_leaves, replicates)?;
            let report = run_convergence(&cfg)?;
            emit_report(&report, &cfg)
        }
        Command::Fragment {
            common,
            n_leaves,
            replicates,
        } => {
            let cfg = build_config(&common, n_leaves, replicates)?;
            let report = run_fragment(&cfg)?;
            emit_report(&report, &cfg)
        }
        Command::Sample {
            common,
            n_leaves,
            replicates,
            out,
        } => {
            let cfg = build_config(&common, vec![n_leaves], replicates)?;
            let sampler_cfg = SamplerConfig::for_n_leaves(n_leaves);
            let mut lines = Vec::with_capacity(replicates);
            for rep in 0..replicates as u64 {
                let mut rng = substream(cfg.seed, rep);
                let t = sample_gw_n_leaves(&cfg.nu, n_leaves, &sampler_cfg, &mut rng)?.tree;
                lines.push(t.to_json());
            }
            write_lines(&out, &lines)?;
            Ok(true)
        }
        Command::Cuttree {
            common,
            kind,
            n_leaves,
            replicates,
            out,
        } => {
            let cfg = build_config(&common, vec![n_leaves], replicates)?;
            let sampler_cfg = SamplerConfig::for_n_leaves(n_leaves);
            let mut lines = Vec::with_capacity(replicates);
            for rep in 0..replicates as u64 {
                let mut rng = substream(cfg.seed, rep);
                let t = sample_gw_n_leaves(&cfg.nu, n_leaves, &sampler_cfg, &mut rng)?.tree;
                match kind {
                    CutKindArg::Hw => lines.push(hw_cut_tree(&t, &mut rng)?.to_json()),
                    CutKindArg::Mod => lines.push(mod_cut_tree(&t, &mut rng)?.to_json()),
                    CutKindArg::Dieuleveut => {
                        let hat = t.hat()?;
                        lines.push(dieuleveut_cut_tree(&hat, &mut rng)?.to_json());
                    }
                    CutKindArg::Coupled => {
                        let coupled = coupled_cut_trees(&t, &mut rng)?;
                        lines.push(format!(
                            "{{\"mod\":{},\"dieuleveut\":{}}}",
                            coupled.mod_tree.to_json(),
                            coupled.d_tree.to_json()
                        ));
                    }
                }
            }
            write_lines(&out, &lines)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
