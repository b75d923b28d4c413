use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use denoise_cli::commands::ablate::check_toy_scale;
use denoise_cli::{
    ablate, denoise_dir, eval_dirs, gen_toy, train, CliError, Mode, Preset, RunConfig, Variant, DATA_ROOT_ENV,
};
use denoise_core::metrics::psnr_display;

#[derive(Parser)]
#[command(name = "denoise", version, about = "Self-supervised blind-spot Transformer denoiser")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run config (JSON). Overrides --preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Data mode for --preset paper.
    #[arg(long, value_enum, default_value = "synthetic-srgb")]
    mode: Mode,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root for relative data paths.
    #[arg(long, env = DATA_ROOT_ENV)]
    data_root: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model; writes checkpoints, curve.jsonl and report/ to the output directory.
    Train(RunArgs),
    /// Denoise every image of a directory with a checkpoint.
    Denoise {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score denoised images against clean references paired by file name.
    Eval {
        #[arg(long)]
        denoised: PathBuf,
        #[arg(long)]
        clean: PathBuf,
        /// Report directory parent (defaults to the denoised directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the branch-ablation variants over several seeds and tabulate them.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "baseline,sne,cadt,cadt-sne")]
        variants: Vec<Variant>,
        /// Allow stacks larger than the toy preset.
        #[arg(long)]
        any_scale: bool,
    },
    /// Write the synthetic greyscale scenes used by the toy preset as PNGs.
    GenToy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run_config(a: &RunArgs, default: Preset) -> Result<RunConfig, CliError> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::preset(a.preset.unwrap_or(default), a.mode),
    };
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(o) = &a.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => {
            let cfg = run_config(&a, Preset::Paper)?;
            let o = train(&cfg, a.data_root.as_deref())?;
            if let Some(b) = &o.best {
                println!(
                    "best epoch {}: val PSNR {:.3} dB, SSIM {:.4}",
                    b.epoch,
                    b.val_psnr.unwrap_or(f64::NAN),
                    b.val_ssim.unwrap_or(f64::NAN)
                );
            }
            if let Some(n) = o.noisy_psnr {
                println!("noisy input PSNR {n:.3} dB");
            }
            println!("outputs in {}", o.out.display());
        }
        Command::Denoise {
            checkpoint,
            input,
            output,
        } => {
            let s = denoise_dir(&checkpoint, &input, &output)?;
            println!("denoised {} image(s), skipped {}", s.written.len(), s.skipped.len());
        }
        Command::Eval { denoised, clean, out } => {
            let out = out.unwrap_or_else(|| denoised.clone());
            let r = eval_dirs(&denoised, &clean, &out)?;
            for s in &r.images {
                println!("{}\t{:.4}\t{:.4}", s.name, psnr_display(s.psnr), s.ssim);
            }
            println!(
                "mean\t{:.4}\t{:.4}",
                psnr_display(r.mean_psnr().expect("non-empty")),
                r.mean_ssim().expect("non-empty")
            );
        }
        Command::Ablate {
            run,
            seeds,
            variants,
            any_scale,
        } => {
            let cfg = run_config(&run, Preset::Toy)?;
            if !any_scale {
                check_toy_scale(&cfg)?;
            }
            let t = ablate(&cfg, &variants, &seeds, run.data_root.as_deref())?;
            print!("{}", t.render());
        }
        Command::GenToy { out, count, size, seed } => {
            let files = gen_toy(&out, count, size, seed)?;
            println!("wrote {} scene(s) to {}", files.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
