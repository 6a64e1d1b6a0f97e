use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use uvk_core::bench::{gen_sequence, run_benchmark, MetricsReport, SequenceSpec};
use uvk_core::conv::self_check;
use uvk_core::frame::{read_sequence, write_sequence, PatchCenter};
use uvk_core::opcount::{
    budget_report, opcount_csv_row, ops_separable, ops_standard, params_separable, params_standard, BudgetReport,
    NetSpec, PowerParams, Rational, OPCOUNT_CSV_HEADER,
};
use uvk_core::pipeline::{calibrate_spin, measure_throughput, RunStats};
use uvk_core::predictor::{track_csv_row, track_step, TrackerConfig, TrackerState, TRACK_CSV_HEADER};

use crate::error::CliError;
use crate::output::{emit, parent_dir, read_text};
use crate::{
    BenchArgs, BudgetArgs, ConvCheckArgs, GenDataArgs, OpcountArgs, PipelineBenchArgs, TrackArgs, TrackerFlags,
};

/// `UVK_SEED` wins over the flag when set.
fn effective_seed(flag: Option<u64>) -> Result<Option<u64>, CliError> {
    match std::env::var("UVK_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("UVK_SEED must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(flag),
    }
}

fn tracker_config(flags: &TrackerFlags) -> Result<TrackerConfig, CliError> {
    let text = match &flags.config {
        Some(path) => read_text(path)?,
        None => String::new(),
    };
    let mut config = TrackerConfig::parse(&text)?;
    for pair in &flags.set {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {pair:?}")))?;
        config.set(key.trim(), value.trim())?;
    }
    config.validate()?;
    Ok(config)
}

fn sequence_spec(path: Option<&Path>, seed: Option<u64>) -> Result<SequenceSpec, CliError> {
    let seed = effective_seed(seed)?;
    match path {
        Some(path) => {
            let mut text = read_text(path)?;
            if let Some(seed) = seed {
                let _ = write!(text, "\nseed = {seed}\n");
            }
            Ok(SequenceSpec::parse(&text)?)
        }
        None => Ok(SequenceSpec::reference(seed.unwrap_or(0))),
    }
}

fn parse_init(text: &str) -> Result<PatchCenter, CliError> {
    let bad = || CliError::Usage(format!("--init expects X,Y integers, got {text:?}"));
    let (x, y) = text.split_once(',').ok_or_else(bad)?;
    Ok(PatchCenter::new(
        x.trim().parse().map_err(|_| bad())?,
        y.trim().parse().map_err(|_| bad())?,
    ))
}

pub fn track(args: TrackArgs) -> Result<(), CliError> {
    let config = tracker_config(&args.tracker)?;
    let init = parse_init(&args.init)?;
    let frames = read_sequence(&args.frames)?;
    if frames.len() < 2 {
        return Err(CliError::Domain(format!(
            "{} holds {} frame(s); tracking needs at least 2",
            args.frames.display(),
            frames.len()
        )));
    }
    let mut state = TrackerState::new(&frames[0], init, config)?;
    let mut csv = format!("{TRACK_CSV_HEADER}\n");
    for frame in &frames[1..] {
        let step = track_step(&state, frame)?;
        csv.push_str(&track_csv_row(frame.seq(), step.direction, &step.outcome));
        csv.push('\n');
        state = step.state;
    }
    emit(args.out.as_deref(), &csv)
}

pub fn bench(args: BenchArgs) -> Result<(), CliError> {
    let config = tracker_config(&args.tracker)?;
    let spec = sequence_spec(args.spec.as_deref(), args.seed)?;
    if args.reps < 3 {
        return Err(CliError::Usage(format!("--reps must be at least 3, got {}", args.reps)));
    }
    let run = run_benchmark(&spec, &config, args.reps)?;
    let csv = format!(
        "{},alpha,beta,threshold,half,stride,max_radius,dead_zone,frames,seed\n{},{},{},{},{},{},{},{},{},{}\n",
        MetricsReport::CSV_HEADER,
        run.metrics.csv_row(),
        config.alpha,
        config.beta,
        config.threshold,
        config.half,
        config.stride,
        config.max_radius,
        config.dead_zone,
        spec.frame_count(),
        spec.seed
    );
    emit(args.out.as_deref(), &csv)
}

pub fn conv_check(args: ConvCheckArgs) -> Result<(), CliError> {
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let seed = effective_seed(Some(args.seed))?.unwrap_or(args.seed);
    let checks = self_check(seed, args.trials);
    for c in &checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("{tag} {} trials={} {}", c.name, c.trials, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::Property(format!(
            "{failed} of {} properties failed (seed {seed})",
            checks.len()
        )));
    }
    Ok(())
}

fn load_net(path: &Path) -> Result<NetSpec, CliError> {
    Ok(NetSpec::parse(&read_text(path)?)?)
}

pub fn opcount(args: OpcountArgs) -> Result<(), CliError> {
    let net = load_net(&args.spec)?;
    let mut csv = format!("{OPCOUNT_CSV_HEADER}\n");
    let (mut std_ops, mut dw, mut pw, mut sep_ops, mut std_params, mut sep_params) =
        (0u64, 0u64, 0u64, 0u64, 0u64, 0u64);
    let overflow = || CliError::Domain("totals overflow u64".into());
    for (i, layer) in net.layers.iter().enumerate() {
        csv.push_str(&opcount_csv_row(i, layer)?);
        csv.push('\n');
        let sep = ops_separable(layer)?;
        std_ops = std_ops.checked_add(ops_standard(layer)?).ok_or_else(overflow)?;
        dw = dw.checked_add(sep.depthwise).ok_or_else(overflow)?;
        pw = pw.checked_add(sep.pointwise).ok_or_else(overflow)?;
        sep_ops = sep_ops.checked_add(sep.total).ok_or_else(overflow)?;
        std_params = std_params.checked_add(params_standard(layer)?).ok_or_else(overflow)?;
        sep_params = sep_params.checked_add(params_separable(layer)?).ok_or_else(overflow)?;
    }
    let ratio = Rational::new(sep_ops as u128, std_ops as u128);
    let _ = writeln!(
        csv,
        "total,,,,,,{std_ops},{dw},{pw},{sep_ops},{}/{},{:.6},{std_params},{sep_params}",
        ratio.numer(),
        ratio.denom(),
        sep_ops as f64 / std_ops as f64
    );
    emit(args.out.as_deref(), &csv)
}

pub fn budget(args: BudgetArgs) -> Result<(), CliError> {
    let net = load_net(&args.spec)?;
    let n_ops = match args.ops {
        Some(ops) => ops,
        None => net.total_ops()? as f64,
    };
    let params = PowerParams::new(args.fo, n_ops, args.eo)?;
    let report = budget_report(&params, args.battery, &net, args.ram)?;
    let csv = format!("{}\n{}\n", BudgetReport::CSV_HEADER, report.csv_row());
    emit(args.out.as_deref(), &csv)
}

pub fn pipeline_bench(args: PipelineBenchArgs) -> Result<(), CliError> {
    if args.workers.is_empty() || args.workers.contains(&0) {
        return Err(CliError::Usage("--workers needs positive counts".into()));
    }
    if !(args.stage_ms.is_finite() && args.stage_ms > 0.0) {
        return Err(CliError::Usage(format!(
            "--stage-ms must be positive, got {}",
            args.stage_ms
        )));
    }
    if args.frames == 0 || args.capacity == 0 {
        return Err(CliError::Usage("--frames and --capacity must be at least 1".into()));
    }
    let rounds = calibrate_spin(Duration::from_secs_f64(args.stage_ms / 1000.0));
    let runs = args
        .workers
        .iter()
        .map(|&w| measure_throughput(w, args.frames, rounds, args.capacity))
        .collect::<Result<Vec<_>, _>>()?;
    // scaling is relative to the single-worker run when present, else the first run
    let base = runs.iter().find(|r| r.workers == 1).unwrap_or(&runs[0]).fps;
    let mut csv = format!("{},scaling\n", RunStats::CSV_HEADER);
    for r in &runs {
        let _ = writeln!(csv, "{},{:.3}", r.csv_row(), r.fps / base);
    }
    emit(args.out.as_deref(), &csv)
}

pub fn gen_data(args: GenDataArgs) -> Result<(), CliError> {
    let spec = sequence_spec(args.spec.as_deref(), args.seed)?;
    let (frames, truth) = gen_sequence(&spec)?;
    let out = &args.out;
    if out.exists() {
        let mut entries = fs::read_dir(out).map_err(|e| CliError::io(out, e))?;
        if entries.next().is_some() {
            return Err(CliError::Io(format!("{}: exists and is not empty", out.display())));
        }
    }
    let parent = parent_dir(out);
    fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    let staging = tempfile::Builder::new()
        .prefix(".uvk-gen-")
        .tempdir_in(parent)
        .map_err(|e| CliError::io(parent, e))?;
    write_sequence(&frames, staging.path())?;
    let truth_path = staging.path().join("ground_truth.csv");
    fs::write(&truth_path, truth.to_csv()).map_err(|e| CliError::io(&truth_path, e))?;
    if out.exists() {
        fs::remove_dir(out).map_err(|e| CliError::io(out, e))?;
    }
    let staged = staging.keep();
    fs::rename(&staged, out).map_err(|e| {
        let _ = fs::remove_dir_all(&staged);
        CliError::io(out, e)
    })?;
    eprintln!("wrote {} frames to {}", frames.len(), out.display());
    Ok(())
}
