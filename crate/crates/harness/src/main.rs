use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use seann_harness::io::{read_dataset, write_dataset, ModelFile};
use seann_harness::pipeline::{explain_dataset, grid_splits};
use seann_harness::report::{emit_reports, LOCK_FILE, RESULTS_FILE};
use seann_harness::{run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "pes-nn", version, about = "Train networks constrained by pooled effect sizes and compare them with unconstrained ones")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run only this seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (`shap`: output file; stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Grid points trained in parallel; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment grid and write its reports.
    Run { config: PathBuf },
    /// Write the train, validation and test splits of every grid point.
    GenData { config: PathBuf },
    /// Explain a saved model on a dataset CSV.
    Shap { model: PathBuf, data: PathBuf },
}

fn load(cli: &Cli, path: &Path) -> anyhow::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seeds = vec![seed];
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli, path: &Path) -> anyhow::Result<()> {
    let config = load(cli, path)?;
    let outcome = run_experiment(&config, cli.jobs)?;
    emit_reports(&outcome, &config.output_dir)?;
    let summary = seann_harness::Summary::new(&outcome.config, &outcome.results())?;
    for level in &summary.levels {
        println!(
            "{} level={} {} median: agnostic {:.4} seann {:.4} | sum dShap median: agnostic {:.4} seann {:.4}",
            config.experiment,
            level.level,
            summary.metric.as_str(),
            level.agnostic.metric.median,
            level.seann.metric.median,
            level.agnostic.sum_delta_shap.median,
            level.seann.sum_delta_shap.median,
        );
    }
    println!("wrote {}", config.output_dir.join(RESULTS_FILE).display());
    Ok(())
}

fn gen_data(cli: &Cli, path: &Path) -> anyhow::Result<()> {
    let config = load(cli, path)?;
    let dir = &config.output_dir;
    for (li, &level) in config.corruption.levels.iter().enumerate() {
        for &seed in &config.seeds {
            let splits = grid_splits(&config, level, seed)?;
            for (name, data) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
                write_dataset(&dir.join(format!("level{li}_seed{seed}_{name}.csv")), data)?;
            }
        }
    }
    let lock = dir.join(LOCK_FILE);
    std::fs::write(&lock, serde_json::to_string_pretty(&config.resolved())? + "\n")
        .with_context(|| lock.display().to_string())?;
    println!("wrote datasets to {}", dir.display());
    Ok(())
}

fn shap(cli: &Cli, model: &Path, data: &Path) -> anyhow::Result<()> {
    let file = ModelFile::load(model)?;
    let data = read_dataset(data)?;
    let (report, raw) = explain_dataset(&file, &data)?;
    let out: Box<dyn std::io::Write> = match &cli.out {
        Some(path) => Box::new(std::fs::File::create(path).with_context(|| path.display().to_string())?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["test_row", "feature", "x", "phi_model", "phi_reference"])?;
    for i in 0..raw.nrows() {
        for (j, name) in report.feature_names.iter().enumerate() {
            w.write_record([
                &i.to_string(),
                name,
                &raw.get(i, j).to_string(),
                &report.phi_model.get(i, j).to_string(),
                &report.phi_reference.get(i, j).to_string(),
            ])?;
        }
    }
    w.flush()?;
    if file.reference.is_some() && !report.sum_delta_shap.is_nan() {
        for (name, d) in report.feature_names.iter().zip(&report.delta_shap) {
            eprintln!("dShap {name}: {d:.4}");
        }
        eprintln!("sum dShap: {:.4}", report.sum_delta_shap);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => run(&cli, config),
        Command::GenData { config } => gen_data(&cli, config),
        Command::Shap { model, data } => shap(&cli, model, data),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pes-nn: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
