//! Subcommand implementations.

use std::path::{Path, PathBuf};

use plcf_core::calibration::{self, build_gap_table, CalibError, GridSearchResult, LambdaRange};
use plcf_core::config::{ConfigError, RunConfig};
use plcf_core::dynamics::{
    simulate as run_simulation, summary_stats, AnticipationConfig, MotionStats, SimRun,
    SpeedProfile, Topology,
};
use plcf_core::io::{self, IoError};
use plcf_core::law::{read_law_csv, write_law_csv, BehaviorLaw, LawFileError};
use plcf_core::stationary::{
    open_stationary, ring_stationary, verify_fixed_point, StationaryError,
};
use plcf_core::synth::jittered_dataset;

use crate::{CalibrateArgs, CliError, GenArgs, SimulateArgs, StationaryArgs, ValidateArgs};

fn law_file_err(err: LawFileError) -> CliError {
    match err {
        LawFileError::Io(e) => CliError::Io(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn config_err(err: ConfigError) -> CliError {
    match err {
        ConfigError::Io(e) => CliError::Io(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

fn io_err(err: IoError) -> CliError {
    match err {
        IoError::Io(e) => CliError::Io(e.to_string()),
        IoError::Csv(e) => CliError::Io(e.to_string()),
        IoError::MissingColumn { .. } | IoError::BadValue { .. } => {
            CliError::Config(err.to_string())
        }
        other => CliError::Domain(other.to_string()),
    }
}

fn calib_err(err: CalibError) -> CliError {
    CliError::Domain(err.to_string())
}

fn stationary_err(err: StationaryError) -> CliError {
    CliError::Domain(err.to_string())
}

fn load_law(path: &Path) -> Result<BehaviorLaw, CliError> {
    read_law_csv(path).map_err(law_file_err)
}

fn print_motion_stats(label: &str, stats: &MotionStats) {
    let spacing = stats
        .min_spacing
        .map(|s| format!("{s:.3}"))
        .unwrap_or_else(|| "-".into());
    println!(
        "{label:>8}  mean_speed={:.6}  speed_var={:.6}  accel_std={:.6}  min_spacing={spacing}",
        stats.mean_speed, stats.speed_variance, stats.accel_std
    );
}

fn sweep_path(out: &Path, m: usize) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("traj");
    let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    out.with_file_name(format!("{stem}_m{m}.{ext}"))
}

fn report_run(run: &SimRun) {
    if !run.law_stable {
        println!("warning: law violates the slope-in-[0,1] stability condition");
    }
    if !run.ordering_violations.is_empty() {
        let first = run.ordering_violations[0];
        println!(
            "warning: {} ordering violations (first at t={} car={})",
            run.ordering_violations.len(),
            first.t,
            first.car + 1
        );
    }
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let config = RunConfig::from_path(&args.config).map_err(config_err)?;
    let scenario = config.scenario().map_err(config_err)?;
    let anticipation = config.anticipation_config().map_err(config_err)?;
    let horizon = config.horizon().map_err(config_err)?;
    let law = load_law(&args.law)?;

    if args.m_sweep.is_empty() {
        let run = run_simulation(&scenario, &law, &anticipation, horizon)
            .map_err(|e| CliError::Config(e.to_string()))?;
        io::export_trajectories(&run.trajectory, &args.out).map_err(io_err)?;
        report_run(&run);
        println!(
            "simulated {} cars for {} steps (m={}, lambda={}) -> {}",
            scenario.cars(),
            horizon,
            anticipation.m,
            anticipation.lambda,
            args.out.display()
        );
        if args.stats {
            let stats =
                summary_stats(&run.trajectory).map_err(|e| CliError::Domain(e.to_string()))?;
            for (i, car) in stats.per_car.iter().enumerate() {
                print_motion_stats(&format!("car {}", i + 1), car);
            }
            print_motion_stats("fleet", &stats.fleet);
        }
        return Ok(());
    }

    // Anticipation-depth sweep: one run and one file per m, plus a
    // smoothing comparison table.
    println!(
        "{:>6} {:>14} {:>14} {:>14}",
        "m", "accel_std", "speed_var", "mean_speed"
    );
    for &m in &args.m_sweep {
        let cfg = AnticipationConfig::new(m, anticipation.lambda, anticipation.discount_mode)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let run = run_simulation(&scenario, &law, &cfg, horizon)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let path = sweep_path(&args.out, m);
        io::export_trajectories(&run.trajectory, &path).map_err(io_err)?;
        report_run(&run);
        let stats = summary_stats(&run.trajectory).map_err(|e| CliError::Domain(e.to_string()))?;
        println!(
            "{m:>6} {:>14.6} {:>14.6} {:>14.6}",
            stats.fleet.accel_std, stats.fleet.speed_variance, stats.fleet.mean_speed
        );
    }
    Ok(())
}

pub fn stationary(args: StationaryArgs) -> Result<(), CliError> {
    let law = load_law(&args.law)?;
    let config = AnticipationConfig::new(args.m, args.lambda, args.mode.into())
        .map_err(|e| CliError::Config(e.to_string()))?;

    let (regime, topology, kind) = match (args.ring_length, args.v1) {
        (Some(length), None) => {
            let regime =
                ring_stationary(&law, length, args.cars, &config).map_err(stationary_err)?;
            (regime, Topology::Ring { length }, "ring")
        }
        (None, Some(v1)) => {
            let regime = open_stationary(&law, v1, args.cars, &config).map_err(stationary_err)?;
            let topology = Topology::Open {
                leader: SpeedProfile::constant(v1),
            };
            (regime, topology, "open")
        }
        _ => {
            return Err(CliError::Config(
                "give exactly one of --ring-length or --v1".into(),
            ))
        }
    };

    let report = verify_fixed_point(&regime, &law, &topology, &config).map_err(stationary_err)?;
    println!("regime: {kind}");
    println!("cars: {}", args.cars);
    println!("spacing: {}", regime.spacing);
    println!("v_bar: {}", regime.v_bar);
    println!(
        "strategy: j={}, {}[{}]",
        regime.strategy.leader_depth, regime.strategy.segment.group, regime.strategy.segment.index
    );
    println!("law stable: {}", !regime.unstable_law);
    println!("non-unique spacing: {}", regime.non_unique);
    println!("fixed-point residual: {:e}", report.max_residual);
    println!("strategy gap: {:e}", report.strategy_gap);
    if let Some(path) = args.positions_out {
        io::export_positions(&regime.positions, &path).map_err(io_err)?;
        println!("positions -> {}", path.display());
    }
    Ok(())
}

fn load_model_grid_dataset(
    path: &Path,
    format: plcf_core::io::Format,
) -> Result<plcf_core::io::Dataset, CliError> {
    let (raw, stats) = io::load_trajectories(path, format).map_err(io_err)?;
    if stats.broken_leader_links > 0 {
        println!(
            "note: severed {} inconsistent leader links",
            stats.broken_leader_links
        );
    }
    io::resample(&raw, plcf_core::dynamics::DT_SECONDS).map_err(io_err)
}

pub fn calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    let dataset = load_model_grid_dataset(&args.data, args.format.into())?;
    let mut table = build_gap_table(&dataset, args.m_max).map_err(calib_err)?;
    if let Some(car) = args.car {
        table.retain_car(car);
        println!("calibrating follower {car} only");
    }

    let m_star = calibration::prune_from_table(&table, 0.0);
    let m_values: Vec<usize> = (1..=m_star).collect();
    println!(
        "leader redundancy: depths beyond {m_star} never bind (cap was {})",
        args.m_max
    );

    let (probe, _) = table.samples(1, 0.0);
    let phi = args
        .phi
        .unwrap_or_else(|| calibration::default_phi(&probe, args.bin_width));
    println!("penalty phi: {phi}");

    let range = LambdaRange {
        min: args.lambda_min,
        max: args.lambda_max,
        step: args.lambda_step,
    };
    let result = calibration::grid_search_table(
        &table,
        &m_values,
        range,
        phi,
        args.bin_width,
        args.fit_tolerance,
    )
    .map_err(calib_err)?;

    print_grid_result(&result);

    if let Some(path) = &args.surface_out {
        io::export_surface(&result.surface, path).map_err(io_err)?;
        println!("error surface -> {}", path.display());
    }
    if let Some(path) = &args.scatter_out {
        let (samples, _) = table.samples(result.best_m, result.best_lambda);
        io::export_scatter(&samples, path).map_err(io_err)?;
        println!("scatter -> {}", path.display());
    }
    if let Some(path) = &args.law_out {
        match &result.law {
            Ok(fit) => {
                write_law_csv(&fit.law, path).map_err(law_file_err)?;
                println!("fitted law -> {}", path.display());
            }
            Err(err) => return Err(calib_err(err.clone())),
        }
    }
    Ok(())
}

fn print_grid_result(result: &GridSearchResult) {
    println!(
        "best (m, lambda): ({}, {}) with total error {}",
        result.best_m, result.best_lambda, result.best_fit.total_cost
    );
    println!(
        "skipped rows: {} without leaders, {} without next position, {} with changed chains",
        result.skipped.insufficient_leaders,
        result.skipped.missing_velocity,
        result.skipped.chain_changed
    );
    println!("fitted segments:");
    for seg in &result.best_fit.segments {
        println!(
            "  [{:>7.2}, {:>7.2})  v = {:.4} y + {:.4}   sse={:.4}",
            seg.start, seg.end, seg.alpha, seg.beta, seg.sse
        );
    }
    match &result.law {
        Ok(fit) => {
            for w in &fit.clamp_warnings {
                println!(
                    "warning: segment {} slope {} clamped to {}",
                    w.segment_index, w.original_alpha, w.clamped_alpha
                );
            }
            println!("min-max law (midpoint gap {:e}):", fit.max_gap);
            for (group, _, seg) in fit.law.segments() {
                println!("  {group},{},{}", seg.alpha, seg.beta);
            }
        }
        Err(err) => println!("law reconstruction failed: {err}"),
    }
}

pub fn validate(args: ValidateArgs) -> Result<(), CliError> {
    let dataset = load_model_grid_dataset(&args.data, args.format.into())?;
    let law = load_law(&args.law)?;
    let config = AnticipationConfig::new(args.m, args.lambda, args.mode.into())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let report = calibration::one_step_rmse(&dataset, &law, &config).map_err(calib_err)?;
    println!("{:>10} {:>14} {:>10}", "car", "rmse", "samples");
    for (car, (rmse, n)) in &report.per_car {
        println!("{car:>10} {rmse:>14.9} {n:>10}");
    }
    println!(
        "overall one-step RMSE over {} predictions: {:e}",
        report.predictions, report.overall_rmse
    );
    Ok(())
}

pub fn gen(args: GenArgs) -> Result<(), CliError> {
    let config = RunConfig::from_path(&args.config).map_err(config_err)?;
    let scenario = config.scenario().map_err(config_err)?;
    let anticipation = config.anticipation_config().map_err(config_err)?;
    let horizon = config.horizon().map_err(config_err)?;
    let law = load_law(&args.law)?;
    let run = run_simulation(&scenario, &law, &anticipation, horizon)
        .map_err(|e| CliError::Config(e.to_string()))?;
    report_run(&run);
    let dataset = jittered_dataset(&run.trajectory, args.jitter, args.seed);
    io::export_dataset(&dataset, &args.out).map_err(io_err)?;
    println!(
        "generated {} observations of {} cars over {} steps (jitter={}, seed={}) -> {}",
        dataset.total_observations(),
        scenario.cars(),
        horizon,
        args.jitter,
        args.seed,
        args.out.display()
    );
    Ok(())
}
