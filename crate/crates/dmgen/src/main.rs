use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dmgen::error::CliError;
use dmgen::{format, index, parallel, replay, report, task};
use dmgen_core::expert::varied_object;
use dmgen_core::{
    annotate_manual, dgr_report, synthesize_demos, ControllerModel, DatagenError, DmpConfig, ExpertConfig,
    GenerationConfig, PerturbationSchedule, PreparedSource, Region, SelectionStrategy, SourceDataset, SourceDemo,
};

/// DMP-based demonstration synthesis on a kinematic surrogate scene.
#[derive(Debug, Parser)]
#[command(name = "dmgen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Record scripted expert demonstrations into a source file.
    DemoSynth(DemoSynthArgs),
    /// Run a generation campaign from a source file.
    Generate(GenerateArgs),
    /// Print DGR and per-subtask failure tables for a dataset.
    Stats(StatsArgs),
    /// Write the per-step log of one record as CSV.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct DemoSynthArgs {
    /// Built-in task name or a TOML/JSON spec file.
    #[arg(long)]
    task: String,
    #[arg(long, default_value = "D0")]
    variant: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of demos; demo j turns the varied object by j quarter turns.
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Manual segment boundaries as comma-separated step indices.
    #[arg(long, value_delimiter = ',')]
    boundaries: Option<Vec<usize>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Strategy {
    First,
    Orientation,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Controller {
    Default,
    Perfect,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Source file written by `demo-synth`.
    #[arg(long)]
    source: PathBuf,
    /// Task to check the source against; defaults to the spec stored in it.
    #[arg(long)]
    task: Option<String>,
    #[arg(long, default_value = "D0")]
    variant: String,
    /// Number of successful trials to collect.
    #[arg(long)]
    n: usize,
    /// Seed of the first trial; trial i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Give up after this many attempts (default 100 per requested success).
    #[arg(long)]
    max_attempts: Option<usize>,
    #[arg(long, value_enum, default_value = "first")]
    strategy: Strategy,

    /// Trigger a perturbation at this fraction of the segment.
    #[arg(long)]
    perturb_frac: Option<f64>,
    /// Displacement half-extents in meters: `r` for +-r in x and y, or `x,y,z`.
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    perturb_box: Vec<f64>,
    /// Object to displace; defaults to the first subtask's reference object.
    #[arg(long)]
    perturb_object: Option<String>,
    /// Segment during which the perturbation fires.
    #[arg(long, default_value_t = 0)]
    perturb_subtask: usize,
    /// Maximum yaw change, radians.
    #[arg(long, default_value_t = 0.0)]
    perturb_yaw: f64,

    #[arg(long, value_enum, default_value = "default")]
    controller: Controller,
    /// Tracking gain, 1/s.
    #[arg(long)]
    gain: Option<f64>,
    /// Per-step translation cap, meters.
    #[arg(long)]
    max_step_translation: Option<f64>,
    /// Per-step rotation cap, radians.
    #[arg(long)]
    max_step_rotation: Option<f64>,

    #[arg(long)]
    out: PathBuf,
    /// Print the DGR table as CSV.
    #[arg(long)]
    csv: bool,
}

#[derive(Debug, Args)]
struct StatsArgs {
    dataset: PathBuf,
    #[arg(long)]
    csv: bool,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    dataset: PathBuf,
    /// Record index among the stored successes.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Output file; standard output when omitted.
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::DemoSynth(a) => demo_synth(a),
        Command::Generate(a) => generate(a),
        Command::Stats(a) => stats(a),
        Command::Replay(a) => replay_cmd(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn demo_synth(a: DemoSynthArgs) -> Result<ExitCode, CliError> {
    let spec = task::resolve(&a.task)?;
    spec.variant(&a.variant).map_err(DatagenError::from)?;
    if a.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let demos = synthesize_demos(&spec, &a.variant, a.seed, a.n, &ExpertConfig::default())?;
    let src = match &a.boundaries {
        None => SourceDataset::from_demos(&spec, demos)?,
        Some(b) => {
            let demos = demos
                .into_iter()
                .map(|demo| Ok(SourceDemo { segments: annotate_manual(&demo, &spec, b)?, demo }))
                .collect::<Result<Vec<_>, DatagenError>>()?;
            let src = SourceDataset { task_id: spec.name.clone(), demos };
            src.validate(&spec)?;
            src
        }
    };
    format::write_source(&a.out, &spec, a.seed, &src)?;
    let mut out = io::stdout().lock();
    for (i, d) in src.demos.iter().enumerate() {
        let ranges: Vec<String> =
            d.segments.iter().map(|s| format!("{}..{}", s.step_range.start, s.step_range.end)).collect();
        writeln!(out, "demo {i}: {} steps, segments [{}]", d.demo.len(), ranges.join(", "))?;
    }
    writeln!(out, "wrote {} demo(s) to {}", src.len(), a.out.display())?;
    Ok(ExitCode::SUCCESS)
}

fn perturbation(a: &GenerateArgs, spec: &dmgen_core::TaskSpec) -> Result<Option<PerturbationSchedule>, CliError> {
    let Some(fraction) = a.perturb_frac else { return Ok(None) };
    let half = match a.perturb_box[..] {
        [r] => [r, r, 0.0],
        [x, y, z] => [x, y, z],
        _ => return Err(CliError::Usage("--perturb-box takes one value or three".into())),
    };
    let target_object = match &a.perturb_object {
        Some(id) => id.as_str().into(),
        None => varied_object(spec).clone(),
    };
    Ok(Some(PerturbationSchedule {
        target_object,
        subtask_index: a.perturb_subtask,
        fraction,
        displacement: Region::centered([0.0; 3], half),
        yaw_range: [-a.perturb_yaw, a.perturb_yaw],
        max_events: 1,
    }))
}

fn controller(a: &GenerateArgs, dt: f64) -> ControllerModel {
    let mut c = match a.controller {
        Controller::Default => ControllerModel { dt, ..ControllerModel::default() },
        Controller::Perfect => ControllerModel::perfect(dt),
    };
    c.gain = a.gain.unwrap_or(c.gain);
    c.max_step_translation = a.max_step_translation.unwrap_or(c.max_step_translation);
    c.max_step_rotation = a.max_step_rotation.unwrap_or(c.max_step_rotation);
    c
}

fn generate(a: GenerateArgs) -> Result<ExitCode, CliError> {
    let file = format::read_source(&a.source).map_err(|e| file_error(&a.source, e))?;
    let spec = match &a.task {
        Some(name) => {
            let spec = task::resolve(name)?;
            if format::spec_hash(&spec) != format::spec_hash(&file.spec) {
                return Err(CliError::Usage(format!(
                    "source {} was recorded for a different `{}` spec",
                    a.source.display(),
                    file.spec.name
                )));
            }
            spec
        }
        None => file.spec,
    };
    let dt = file.source.demos.first().map_or(DmpConfig::default().dt, |d| d.demo.dt);
    let config = GenerationConfig {
        variant: a.variant.clone(),
        strategy: match a.strategy {
            Strategy::First => SelectionStrategy::First,
            Strategy::Orientation => SelectionStrategy::Orientation,
        },
        perturbation: perturbation(&a, &spec)?,
        controller: controller(&a, dt),
    };
    let prepared = PreparedSource::new(file.source, &spec, &DmpConfig::default())?;
    for (demo, segment, w) in &prepared.warnings {
        eprintln!("warning: demo {demo}, segment {segment}: {w:?}");
    }
    let threads = parallel::threads_from_env();
    let (ds, code) = match parallel::generate_dataset(&prepared, &spec, &config, a.n, a.seed, a.max_attempts, threads) {
        Ok(ds) => (ds, ExitCode::SUCCESS),
        Err(DatagenError::TargetUnreachable(ds)) => {
            eprintln!(
                "warning: target of {} not reached after {} attempts; writing the partial dataset",
                a.n,
                ds.n_attempts()
            );
            (*ds, ExitCode::from(2))
        }
        Err(e) => return Err(e.into()),
    };
    let blocks = format::write_dataset(&a.out, &spec, &config, &ds)?;
    index::write(&index::sidecar_path(&a.out), &index::build(&ds, &config, &blocks, Some(&prepared)))?;
    let rows = dgr_report([&ds]);
    print(&if a.csv { report::dgr_csv(&rows) } else { report::dgr_table(&rows) })?;
    Ok(code)
}

fn stats(a: StatsArgs) -> Result<ExitCode, CliError> {
    let file = format::read_dataset(&a.dataset).map_err(|e| file_error(&a.dataset, e))?;
    let rows = dgr_report([&file.dataset]);
    let text = if a.csv {
        format!("{}\n{}", report::dgr_csv(&rows), report::subtask_csv(&file.spec, &file.dataset))
    } else {
        format!(
            "task {} ({} attempts, seeds {}..{})\n\n{}\n{}",
            file.dataset.task_id,
            file.dataset.n_attempts(),
            file.dataset.seed0,
            file.dataset.seed0.wrapping_add(file.dataset.n_attempts() as u64),
            report::dgr_table(&rows),
            report::subtask_table(&file.spec, &file.dataset)
        )
    };
    print(&text)?;
    Ok(ExitCode::SUCCESS)
}

fn replay_cmd(a: ReplayArgs) -> Result<ExitCode, CliError> {
    let file = format::read_dataset(&a.dataset).map_err(|e| file_error(&a.dataset, e))?;
    let n = file.dataset.records.len();
    let record = file
        .dataset
        .records
        .get(a.index)
        .ok_or_else(|| CliError::Usage(format!("record index {} out of range ({n} records)", a.index)))?;
    let csv = replay::to_csv(record, file.config.controller.dt);
    match &a.csv_out {
        Some(path) => fs::write(path, &csv)?,
        None => print(&csv)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn file_error(path: &Path, source: dmgen::FormatError) -> CliError {
    CliError::File { path: path.to_path_buf(), source }
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print(text: &str) -> io::Result<()> {
    let mut out = io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => r,
    }
}
