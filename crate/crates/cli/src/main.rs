//! `corrpost`: drive the correlation-response classification pipeline.
//!
//! Stages communicate through on-disk artifacts under `--out-dir`, so
//! each subcommand can re-run in isolation:
//!
//! ```text
//! gen-data     corpus PGMs + manifest.json + lineage.json
//! train-filter filters/*.cflt
//! correlate    metrics.json (peak height, PCE per sample and filter)
//! prep         patches/**.pt32 (cropped, normalized CNN inputs)
//! train-cnn    cnn.ckpt + train_report.json
//! eval         full pipeline end to end + report.{json,csv,txt}
//! cross-eval   frozen model on the face corpus, faces/report.*
//! report       re-render report.json to CSV/text
//! ```
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numeric error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use corrpost_core::pipeline::{
    cross_domain_eval, load_trained_model, render_csv, render_text, run_experiment,
    stage_correlate, stage_gen_data, stage_prep, stage_train_cnn, stage_train_filter, EvalReport,
    ExperimentConfig,
};
use corrpost_core::response::CropMode;
use corrpost_core::{exec, Result};

#[derive(Parser)]
#[command(name = "corrpost", version, about = "Correlation filter response classification")]
struct Cli {
    /// Experiment config JSON; omitted means the built-in defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override every seed: corpus S, face corpus S+1, training S+2
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Artifact directory shared by all stages
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Override the response crop mode
    #[arg(long, global = true, value_enum)]
    crop_mode: Option<CropArg>,

    /// Worker thread cap for the parallel stages
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render the synthetic corpus and assign sample roles
    GenData,
    /// Synthesize OT MACH and MINACE filters per resolution
    TrainFilter,
    /// Correlate every scene and record classical metric scores
    Correlate,
    /// Crop and normalize responses into 32x32 CNN input patches
    Prep,
    /// Train the CNN on the prepared training patches
    TrainCnn,
    /// Run the whole pipeline and write the evaluation report
    Eval,
    /// Apply the trained model to the face corpus (Table 2 format)
    CrossEval,
    /// Re-render an existing report.json to CSV and text
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum CropArg {
    Center,
    Peak,
}

impl From<CropArg> for CropMode {
    fn from(c: CropArg) -> CropMode {
        match c {
            CropArg::Center => CropMode::Center,
            CropArg::Peak => CropMode::Peak,
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::read_json(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.manifest.seed = s;
        if let Some(faces) = &mut cfg.faces {
            faces.seed = s.wrapping_add(1);
        }
        cfg.train.seed = s.wrapping_add(2);
    }
    if let Some(crop) = cli.crop_mode {
        cfg.manifest.crop_mode = crop.into();
        if let Some(faces) = &mut cfg.faces {
            faces.crop_mode = crop.into();
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        exec::configure_threads(t)?;
    }
    let out = &cli.out_dir;
    if let Cmd::Report = cli.cmd {
        // read-only: no config needed, no artifacts regenerated
        let report = EvalReport::read_json(&out.join("report.json"))?;
        std::fs::write(out.join("report.csv"), render_csv(&report))?;
        let text = render_text(&report);
        std::fs::write(out.join("report.txt"), &text)?;
        print!("{text}");
        return Ok(());
    }

    let cfg = load_config(cli)?;
    std::fs::create_dir_all(out)?;
    // every run echoes its effective config next to its outputs
    cfg.write_json(&out.join("config.json"))?;

    match cli.cmd {
        Cmd::GenData => stage_gen_data(&cfg, out)?,
        Cmd::TrainFilter => stage_train_filter(&cfg, out)?,
        Cmd::Correlate => stage_correlate(&cfg, out)?,
        Cmd::Prep => stage_prep(&cfg, out, cli.crop_mode.map(CropMode::from))?,
        Cmd::TrainCnn => {
            let report = stage_train_cnn(&cfg, out)?;
            println!(
                "trained {} params, final train accuracy {:.4}",
                report.param_count, report.final_train_accuracy
            );
        }
        Cmd::Eval => {
            let report = run_experiment(&cfg, out)?;
            print!("{}", render_text(&report));
        }
        Cmd::CrossEval => {
            let mut model = load_trained_model(&cfg, out)?;
            let report = cross_domain_eval(&cfg, &mut model, out)?;
            print!("{}", render_text(&report));
        }
        Cmd::Report => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use corrpost_core::Error;

    #[test]
    fn cli_parses_all_subcommands() {
        for cmd in [
            "gen-data",
            "train-filter",
            "correlate",
            "prep",
            "train-cnn",
            "eval",
            "cross-eval",
            "report",
        ] {
            Cli::try_parse_from(["corrpost", cmd]).unwrap();
        }
    }

    #[test]
    fn global_flags_parse_anywhere() {
        let cli = Cli::try_parse_from([
            "corrpost",
            "eval",
            "--seed",
            "7",
            "--out-dir",
            "/tmp/x",
            "--crop-mode",
            "peak",
            "--threads",
            "2",
        ])
        .unwrap();
        assert_eq!(cli.seed, Some(7));
        assert_eq!(cli.out_dir, PathBuf::from("/tmp/x"));
        assert!(matches!(cli.crop_mode, Some(CropArg::Peak)));
        assert_eq!(cli.threads, Some(2));
    }

    #[test]
    fn seed_override_reaches_all_seeds() {
        let cli = Cli::try_parse_from(["corrpost", "eval", "--seed", "100"]).unwrap();
        let cfg = load_config(&cli).unwrap();
        assert_eq!(cfg.manifest.seed, 100);
        assert_eq!(cfg.faces.unwrap().seed, 101);
        assert_eq!(cfg.train.seed, 102);
    }

    #[test]
    fn error_exit_codes_follow_the_contract() {
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(Error::Input("x".into()).exit_code(), 3);
        assert_eq!(Error::Divergence("x".into()).exit_code(), 4);
    }
}
