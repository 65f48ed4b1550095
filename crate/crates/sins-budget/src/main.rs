use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sins_budget::decomposition::extract_budget;
use sins_budget::error::{Error, Result};
use sins_budget::montecarlo::{compare_budget, simulate_ensemble, McStatus};
use sins_budget::report::{
    csv_scales, human_scales, output_classes, write_budget_csv, write_budget_svg,
    write_budget_txt, write_mc_csv,
};
use sins_budget::runner::run_budget;
use sins_budget::scenario::{ResolvedScenario, ScenarioFile};
use sins_budget::sins_model::{initial_covariance, noise_psd, SinsModelConfig};
use sins_budget::trajectory::{generate, write_trajectory};

#[derive(Parser)]
#[command(
    name = "sins-budget",
    about = "Error-budget analysis for strapdown inertial navigation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario description (JSON)
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// Overwrite existing output files
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate the decomposed covariance and write the error budget
    Budget(CommonArgs),
    /// Validate the analytic budget against a Monte-Carlo ensemble
    Montecarlo {
        #[command(flatten)]
        common: CommonArgs,
        /// Override the seed from the scenario file
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate the scenario trajectory as CSV
    Trajgen(CommonArgs),
}

fn open_output(dir: &Path, name: &str, force: bool) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    if path.exists() && !force {
        return Err(Error::InvalidArgument(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(BufWriter::new(File::create(&path)?))
}

fn load(scenario_path: &Path) -> Result<ResolvedScenario> {
    ScenarioFile::load(scenario_path)?.resolve()
}

fn run_budget_cmd(args: &CommonArgs) -> Result<()> {
    let r = load(&args.scenario)?;
    fs::create_dir_all(&args.out)?;
    let cfg = SinsModelConfig { vertical_channel: r.vertical_channel, ..Default::default() };
    let samples = generate(&r.scenario, &cfg.earth)?;
    let p0 = initial_covariance(&r.imu, r.scenario.lat, r.scenario.h, &cfg)?;
    let qc = noise_psd(&r.imu);
    let run = run_budget(
        &samples,
        &p0,
        &qc,
        &r.partition,
        &cfg,
        &r.report_epochs,
        false,
    )?;
    let reports: Vec<_> = run
        .epochs
        .iter()
        .map(|e| extract_budget(&e.decomposed, &r.partition, &r.outputs))
        .collect::<Result<_>>()?;

    let earth = &cfg.earth;
    let machine = csv_scales(&r.outputs, r.scenario.lat, r.scenario.h, earth);
    let human = human_scales(&r.outputs, r.scenario.lat, r.scenario.h, earth);
    write_budget_csv(&reports, &machine, open_output(&args.out, "budget.csv", args.force)?)?;
    write_budget_txt(&reports, &human, &r.audit, open_output(&args.out, "budget.txt", args.force)?)?;
    let last = reports.last().expect("at least one report epoch");
    for (class, labels) in output_classes(&r.outputs) {
        let name = format!("budget_{class}.svg");
        write_budget_svg(last, &labels, class, open_output(&args.out, &name, args.force)?)?;
    }
    println!(
        "budget written to {} ({} epochs, {} sources)",
        args.out.display(),
        reports.len(),
        last.sources.len()
    );
    Ok(())
}

fn run_montecarlo_cmd(args: &CommonArgs, seed_override: Option<u64>) -> Result<bool> {
    let r = load(&args.scenario)?;
    let mc = r.montecarlo.as_ref().ok_or_else(|| {
        Error::Scenario(format!(
            "{} has no montecarlo section",
            args.scenario.display()
        ))
    })?;
    let seed = seed_override.unwrap_or(mc.seed);
    if mc.members < 100 {
        eprintln!(
            "warning: {} members give a very wide chi-square interval; \
             results are hard to interpret",
            mc.members
        );
    }
    fs::create_dir_all(&args.out)?;
    let cfg = SinsModelConfig { vertical_channel: r.vertical_channel, ..Default::default() };
    let samples = generate(&r.scenario, &cfg.earth)?;
    let p0 = initial_covariance(&r.imu, r.scenario.lat, r.scenario.h, &cfg)?;
    let qc = noise_psd(&r.imu);
    let run = run_budget(
        &samples,
        &p0,
        &qc,
        &r.partition,
        &cfg,
        &[r.scenario.duration],
        true,
    )?;
    let last = run
        .epochs
        .last()
        .ok_or_else(|| Error::InvalidArgument("no final epoch in run".into()))?;
    let stats = simulate_ensemble(&run.mc_steps, &p0, &r.partition, mc.members, seed)?;
    let rows = compare_budget(&stats, &last.decomposed, &r.partition, &r.outputs, 0.01)?;
    write_mc_csv(&rows, open_output(&args.out, "mc_compare.csv", args.force)?)?;

    let fails = rows.iter().filter(|row| row.status == McStatus::Fail).count();
    let tested = rows.iter().filter(|row| row.status != McStatus::Degenerate).count();
    println!(
        "monte-carlo comparison: {tested} tests, {fails} failures \
         (members = {}, seed = {seed})",
        mc.members
    );
    Ok(fails == 0)
}

fn run_trajgen_cmd(args: &CommonArgs) -> Result<()> {
    let r = load(&args.scenario)?;
    fs::create_dir_all(&args.out)?;
    let cfg = SinsModelConfig { vertical_channel: r.vertical_channel, ..Default::default() };
    let samples = generate(&r.scenario, &cfg.earth)?;
    let mut out = open_output(&args.out, "trajectory.csv", args.force)?;
    write_trajectory(&samples, &mut out)?;
    out.flush()?;
    println!(
        "{} samples written to {}",
        samples.len(),
        args.out.join("trajectory.csv").display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Budget(args) => run_budget_cmd(args).map(|()| true),
        Command::Montecarlo { common, seed } => run_montecarlo_cmd(common, *seed),
        Command::Trajgen(args) => run_trajgen_cmd(args).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: Monte-Carlo comparison failed; see mc_compare.csv");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
