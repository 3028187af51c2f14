use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dmt_cli::codec::load_image;
use dmt_cli::commands::{
    cmd_adversarial, cmd_eval, cmd_extract, cmd_gram, cmd_reconstruct, cmd_traverse, load_model, AdversarialTarget,
};
use dmt_cli::config::{RunConfig, Sigma};
use dmt_cli::demo::{cmd_demo, SUMMARY_FILE};
use dmt_cli::exit_code;
use dmt_cli::manifest::Manifest;
use dmt_core::Result;

#[derive(Parser)]
#[command(name = "dmt", version, about = "Feature-space traversal toward a target image population")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the extractor weights and the demo task.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Traversal budget weight; repeat for a sweep (overrides the config).
    #[arg(long = "lambda", global = true)]
    lambdas: Vec<f64>,
    /// RBF width: a positive number or "median".
    #[arg(long, global = true)]
    sigma: Option<String>,
    /// Only log warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Extract features for a manifest into features.dmtv.
    Extract { manifest: PathBuf },
    /// Append the Gram section to a feature file.
    Gram {
        features: PathBuf,
        #[arg(long)]
        overwrite: bool,
    },
    /// Run the lambda sweep on a feature file with a Gram section.
    Traverse { features: PathBuf },
    /// Invert a traversed feature vector to an image.
    Reconstruct {
        zt: PathBuf,
        /// Initial image (required when the config's init is "source").
        #[arg(long)]
        init: Option<PathBuf>,
        /// Output image path (defaults to <out>/reconstruction.ppm).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train and calibrate the classifier and score the sweep.
    Eval {
        features: PathBuf,
        records: PathBuf,
        labels: PathBuf,
    },
    /// Pixel-space adversarial perturbation of an image.
    Adversarial {
        model: PathBuf,
        image: PathBuf,
        /// Match this decision value by bisecting the regularizer.
        #[arg(long, conflicts_with = "c_adv", required_unless_present = "c_adv")]
        target_decision: Option<f64>,
        /// Use this regularizer weight directly.
        #[arg(long)]
        c_adv: Option<f64>,
    },
    /// Generate the synthetic task and run the whole pipeline on it.
    Demo,
}

fn config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.extractor.weights_seed = seed;
    }
    if !common.lambdas.is_empty() {
        cfg.traversal.lambdas = common.lambdas.clone();
    }
    if let Some(s) = &common.sigma {
        cfg.traversal.sigma = Sigma::parse(s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = config(&cli.common)?;
    let out = cfg.out.clone();
    match cli.command {
        Command::Extract { manifest } => {
            let path = cmd_extract(&Manifest::load(&manifest)?, &cfg, &out)?;
            println!("{}", path.display());
        }
        Command::Gram { features, overwrite } => cmd_gram(&features, overwrite)?,
        Command::Traverse { features } => {
            cmd_traverse(&features, &cfg, &out)?;
        }
        Command::Reconstruct { zt, init, output } => {
            let output = output.unwrap_or_else(|| out.join("reconstruction.ppm"));
            cmd_reconstruct(&zt, &cfg, init.as_deref(), &output)?;
            println!("{}", output.display());
        }
        Command::Eval { features, records, labels } => {
            let (_, report) = cmd_eval(&features, &records, &labels, &cfg, &out)?;
            report.write(std::io::stdout().lock())?;
        }
        Command::Adversarial { model, image, target_decision, c_adv } => {
            let target = match (target_decision, c_adv) {
                (Some(t), _) => AdversarialTarget::Decision(t),
                (None, Some(c)) => AdversarialTarget::Regularizer(c),
                (None, None) => unreachable!("clap requires one of the two"),
            };
            let res = cmd_adversarial(&load_model(&model)?, &load_image(&image)?, target, &cfg, &out)?;
            println!("c_adv {:e} decision {:e} l2 {:e}", res.c_adv, res.decision_value, res.l2_pixel_distance);
        }
        Command::Demo => {
            let seed = cli.common.seed.unwrap_or(cfg.extractor.weights_seed);
            cmd_demo(seed, &out, &cfg)?;
            print!("{}", std::fs::read_to_string(out.join(SUMMARY_FILE))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.common.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
