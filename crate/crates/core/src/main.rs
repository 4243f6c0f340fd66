use clap::{Parser, Subcommand};
use std::path::PathBuf;
use xview::cli::{self, RunConfig};
use xview::eval::{FusionVariant, Metric};

/// Cross-view metric learning workflows: synthetic data, two-stage
/// training, fusion evaluation and ablation sweeps.
#[derive(Parser)]
#[command(name = "xview", version, about)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/query/gallery datasets and a manifest.
    GenData {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write CSV exports of each split for inspection.
        #[arg(long)]
        csv: bool,
    },
    /// Train one stage (main, then wcvl on top of it).
    Train {
        #[arg(long)]
        config: PathBuf,
        /// main | wcvl
        #[arg(long)]
        stage: String,
        /// pluggable | end_to_end (wcvl only)
        #[arg(long)]
        mode: Option<String>,
        /// Train dataset (default: <out_dir>/train.xvds).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Input checkpoint for the wcvl stage (default: <out_dir>/main.xvck).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output checkpoint path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint pair; omit --wcvl for a baseline-only report.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        main: Option<PathBuf>,
        #[arg(long)]
        wcvl: Option<PathBuf>,
        /// na | an | nan
        #[arg(long)]
        variant: Option<FusionVariant>,
        /// euclidean | dot
        #[arg(long)]
        metric: Option<Metric>,
        #[arg(long)]
        query: Option<PathBuf>,
        #[arg(long)]
        gallery: Option<PathBuf>,
        /// Report JSON path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a sweep: beta | fusion | shared-depth | mode.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        which: String,
    },
    /// Write raw embeddings (baseline/cross_view/fused) as CSV.
    DumpEmbeddings {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        main: Option<PathBuf>,
        #[arg(long)]
        wcvl: Option<PathBuf>,
        /// Dataset to embed (default: <out_dir>/gallery.xvds).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        variant: Option<FusionVariant>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(args: Args) -> Result<(), cli::CliError> {
    match args.command {
        Command::GenData { config, out, csv } => {
            let cfg = RunConfig::load(&config)?;
            cli::cmd_gen_data(&cfg, out.as_deref(), csv)
        }
        Command::Train {
            config,
            stage,
            mode,
            data,
            input,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            cli::cmd_train(
                &cfg,
                &stage,
                mode.as_deref(),
                data.as_deref(),
                input.as_deref(),
                out.as_deref(),
            )
        }
        Command::Eval {
            config,
            main,
            wcvl,
            variant,
            metric,
            query,
            gallery,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            cli::cmd_eval(
                &cfg,
                main.as_deref(),
                wcvl.as_deref(),
                variant,
                metric,
                query.as_deref(),
                gallery.as_deref(),
                out.as_deref(),
            )
        }
        Command::Ablate { config, which } => {
            let cfg = RunConfig::load(&config)?;
            cli::cmd_ablate(&cfg, &which)
        }
        Command::DumpEmbeddings {
            config,
            main,
            wcvl,
            data,
            variant,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            cli::cmd_dump_embeddings(
                &cfg,
                main.as_deref(),
                wcvl.as_deref(),
                data.as_deref(),
                variant,
                out.as_deref(),
            )
        }
    }
}

fn main() {
    let args = Args::parse();
    match run(args) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code);
        }
    }
}
