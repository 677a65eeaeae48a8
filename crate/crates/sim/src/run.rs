//! Scenario execution and the metrics bundle.
//!
//! Output layout under the chosen directory:
//!   summary.json       run-wide counters, conservation check, program summary
//!   events.csv         per-cycle time series
//!   ft_trajectory.csv  federated tuning iterations (FT programs)
//!   fe_ewer.csv        population eWER vs hidden WER (FE programs)
//!   fl_rounds.json     per-round FL metrics and final weights (FL programs)

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use thiserror::Error;

use fedtask_core::seed::derive_seed;
use fedtask_core::{AttachmentBlob, VirtualTime};
use fedtask_pfl::{
    fl_training_loop, FlRunConfig, LocalDataset, ModelParameters, Objective, PrivacyConfig,
    TrainSpec,
};
use fedtask_plugins::fe_asr::{
    aggregate_device_results, calibrate_rho, run_fe, train_confidence_model, wer,
    CalibrationFactor, ConfidenceSource, FeRunConfig, Utterance,
};
use fedtask_plugins::ft_news::{run_ft, FtRunConfig, ParamDim, ParameterSpace};

use crate::fleet::SimFleet;
use crate::gen::{central_asr_set, fl_true_weights, word_training_examples};
use crate::scenario::{FeProgram, FlProgram, FtProgram, Program, ScenarioConfig};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario error: {0}")]
    Scenario(#[from] crate::scenario::ScenarioError),
    #[error("fleet error: {0}")]
    Fleet(#[from] fedtask_core::FleetError),
    #[error("tuning error: {0}")]
    Ft(#[from] fedtask_plugins::ft_news::FtError),
    #[error("evaluation error: {0}")]
    Fe(#[from] fedtask_plugins::fe_asr::FeError),
    #[error("learning error: {0}")]
    Pfl(#[from] fedtask_pfl::PflError),
    #[error("server error: {0}")]
    Server(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct Conservation {
    pub transmitted: u64,
    pub stored: u64,
    pub ignored_retired: u64,
    pub throttled: u64,
    pub rejected: u64,
    pub dropped: u64,
    pub balanced: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub master_seed: u64,
    pub fleet_size: usize,
    pub cycles_run: usize,
    pub final_virtual_time_millis: u64,
    pub device_counters: fedtask_device::ReportCounters,
    pub server_counters: fedtask_server::IngestCounters,
    pub conservation: Conservation,
    pub program: serde_json::Value,
}

/// Runs the scenario program and writes the metrics bundle. Returns the
/// summary together with the fleet for post-run inspection.
pub fn run_simulation(
    cfg: &ScenarioConfig,
    out_dir: &Path,
    threads: usize,
) -> Result<(RunSummary, SimFleet), SimError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let persist_dir = cfg.persist_results.then(|| out_dir.join("results_db"));
    let mut fleet = SimFleet::new(cfg.clone(), persist_dir)?;
    fleet.set_threads(threads);

    let program_outcome = execute_program(cfg, &mut fleet, out_dir);
    // Flush metrics even when the program aborts, then surface the error.
    let program_summary = match &program_outcome {
        Ok(value) => value.clone(),
        Err(error) => serde_json::json!({"aborted": error.to_string()}),
    };

    write_events_csv(&fleet, &out_dir.join("events.csv"))?;
    let summary = build_summary(cfg, &fleet, program_summary);
    fs::write(out_dir.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;

    program_outcome?;
    Ok((summary, fleet))
}

fn build_summary(cfg: &ScenarioConfig, fleet: &SimFleet, program: serde_json::Value) -> RunSummary {
    let device_counters = fleet.device_counters();
    let server_counters = fleet.server.counters();
    let accounted = server_counters.results_stored
        + server_counters.results_ignored_retired
        + server_counters.results_throttled
        + server_counters.results_rejected
        + device_counters.results_dropped;
    let conservation = Conservation {
        transmitted: device_counters.results_attempted,
        stored: server_counters.results_stored,
        ignored_retired: server_counters.results_ignored_retired,
        throttled: server_counters.results_throttled,
        rejected: server_counters.results_rejected,
        dropped: device_counters.results_dropped,
        balanced: device_counters.results_attempted == accounted,
    };
    RunSummary {
        master_seed: cfg.master_seed,
        fleet_size: cfg.fleet_size,
        cycles_run: fleet.cycles.len(),
        final_virtual_time_millis: fleet.clock.now().millis(),
        device_counters,
        server_counters,
        conservation,
        program,
    }
}

fn execute_program(
    cfg: &ScenarioConfig,
    fleet: &mut SimFleet,
    out_dir: &Path,
) -> Result<serde_json::Value, SimError> {
    match cfg.program.clone() {
        Program::Tasks { tasks } => run_tasks_program(fleet, tasks),
        Program::Ft(program) => run_ft_program(cfg, fleet, &program, out_dir),
        Program::Fe(program) => run_fe_program(cfg, fleet, &program, out_dir),
        Program::Fl(program) => run_fl_program(cfg, fleet, &program, out_dir),
    }
}

fn run_tasks_program(
    fleet: &mut SimFleet,
    tasks: Vec<crate::scenario::TaskSpec>,
) -> Result<serde_json::Value, SimError> {
    let mut latest_end = VirtualTime::ZERO;
    let mut ids = Vec::new();
    for spec in &tasks {
        let mut descriptor = spec.descriptor.clone();
        let mut attachments = Vec::new();
        if let Some(payload) = &spec.payload {
            let blob = AttachmentBlob::new(serde_json::to_vec(payload)?);
            if !descriptor.attachment_refs.contains(&blob.content_hash) {
                descriptor.attachment_refs.insert(0, blob.content_hash.clone());
            }
            attachments.push(blob);
        }
        latest_end = latest_end.max(descriptor.active_window.end);
        ids.push(descriptor.task_id.clone());
        fleet
            .server
            .publish_task(descriptor, attachments)
            .map_err(|e| SimError::Server(e.to_string()))?;
    }

    fleet.run_until(latest_end.plus_hours(1), |fleet| {
        ids.iter().all(|id| {
            matches!(fleet.server.task_status(id), Ok((fedtask_server::TaskStatus::Retired, _)))
        })
    });

    let mut per_task = serde_json::Map::new();
    for id in &ids {
        let (status, received) =
            fleet.server.task_status(id).map_err(|e| SimError::Server(e.to_string()))?;
        per_task.insert(
            id.clone(),
            serde_json::json!({
                "status": status,
                "received_count": received,
                "stored_devices": fleet.task_participants.get(id).map_or(0, Vec::len),
            }),
        );
    }
    Ok(serde_json::json!({"kind": "tasks", "tasks": per_task}))
}

fn run_ft_program(
    cfg: &ScenarioConfig,
    fleet: &mut SimFleet,
    program: &FtProgram,
    out_dir: &Path,
) -> Result<serde_json::Value, SimError> {
    let news = cfg
        .data
        .news
        .clone()
        .ok_or_else(|| SimError::Other("ft program requires data.news".into()))?;
    let space = ParameterSpace {
        dims: program
            .space
            .iter()
            .map(|(name, lo, hi)| ParamDim { name: name.clone(), lo: *lo, hi: *hi })
            .collect(),
    };
    let ft_cfg = FtRunConfig {
        task_prefix: "ft-news".into(),
        data_key: news.data_key.clone(),
        configs_per_device: program.configs_per_device,
        cluster_count: program.cluster_count,
        max_iterations: program.max_iterations,
        convergence_eps: program.convergence_eps,
        label_rule: match program.label_rule {
            fedtask_plugins::ft_news::LabelRule::MinDwellSeconds { .. } => {
                fedtask_plugins::ft_news::LabelRule::MinDwellSeconds {
                    seconds: news.dwell_threshold_seconds,
                }
            }
            rule => rule,
        },
        base: program.base.unwrap_or(news.true_params),
        sampling_rate: program.sampling_rate,
        target_result_count: program.target_result_count,
        window_hours: program.window_hours,
        seed: cfg.master_seed,
    };
    let outcome = run_ft(fleet, &space, &ft_cfg)?;

    let mut writer = csv::Writer::from_path(out_dir.join("ft_trajectory.csv"))?;
    writer.write_record([
        "iteration",
        "result_count",
        "point_count",
        "winner_score",
        "winner_mean_loss",
        "bounds",
    ])?;
    for stats in &outcome.trajectory {
        writer.write_record([
            stats.iteration.to_string(),
            stats.result_count.to_string(),
            stats.point_count.to_string(),
            format!("{:.17e}", stats.winner_score),
            format!("{:.17e}", stats.winner_mean_loss),
            serde_json::to_string(&stats.bounds)?,
        ])?;
    }
    writer.flush()?;

    let first = outcome.trajectory.first().map(|s| s.winner_mean_loss);
    let last = outcome.trajectory.last().map(|s| s.winner_mean_loss);
    Ok(serde_json::json!({
        "kind": "ft",
        "iterations": outcome.trajectory.len(),
        "best": outcome.best.values,
        "dimension_names": space.dims.iter().map(|d| d.name.clone()).collect::<Vec<_>>(),
        "first_winner_mean_loss": first,
        "final_winner_mean_loss": last,
        "final_bounds": outcome.final_space.dims.iter().map(|d| (d.lo, d.hi)).collect::<Vec<_>>(),
    }))
}

/// Count-weighted true WER over the participating devices' hidden
/// references, aggregated through the same canonical path as eWER.
/// Utterances with empty hypotheses (excluded on-device) or empty
/// references (no-speech recordings, WER undefined) are skipped.
pub fn hidden_wer_oracle(
    fleet: &SimFleet,
    task_id: &str,
    data_key: &str,
) -> Result<fedtask_plugins::fe_asr::FePopulationStats, SimError> {
    let participants = fleet
        .task_participants
        .get(task_id)
        .ok_or_else(|| SimError::Other(format!("no participants recorded for {task_id}")))?;
    let mut device_results = Vec::new();
    for &index in participants {
        let device = &fleet.devices[index];
        let view = device.store.view().map_err(|e| SimError::Other(e.to_string()))?;
        let mut count = 0u64;
        let mut wer_sum = 0.0;
        for record in view.records_for_key(data_key) {
            let Ok(utterance) = serde_json::from_value::<Utterance>(serde_json::Value::Object(
                record.payload.clone(),
            )) else {
                continue;
            };
            if utterance.hypothesis_words.is_empty() || utterance.reference_words.is_empty() {
                continue;
            }
            wer_sum += wer(&utterance.hypothesis_words, &utterance.reference_words)?;
            count += 1;
        }
        device_results.push(fedtask_plugins::fe_asr::FeDeviceResult {
            utterance_count: count,
            ewer_sum: wer_sum,
            empty_hypothesis_count: 0,
        });
    }
    Ok(aggregate_device_results(&mut device_results)?)
}

fn run_fe_program(
    cfg: &ScenarioConfig,
    fleet: &mut SimFleet,
    program: &FeProgram,
    out_dir: &Path,
) -> Result<serde_json::Value, SimError> {
    let asr = cfg
        .data
        .asr
        .clone()
        .ok_or_else(|| SimError::Other("fe program requires data.asr".into()))?;

    let central = central_asr_set(cfg.master_seed, &asr, program.central_set_size);
    let source = if program.use_perfect_oracle {
        ConfidenceSource::Perfect
    } else {
        let examples = word_training_examples(&central);
        let mut model = train_confidence_model(&examples, 2, program.train_epochs, 1.0);
        model.noise_scale = program.confidence_noise_scale;
        ConfidenceSource::Model(model)
    };
    let rho = match program.fixed_rho {
        Some(rho) => CalibrationFactor { rho },
        None => {
            let mut rng = ChaCha12Rng::from_seed(derive_seed(cfg.master_seed, "rho", 0));
            calibrate_rho(&central, &source, &mut rng)?
        }
    };

    let fe_cfg = FeRunConfig {
        task_id: "fe-asr".into(),
        data_key: asr.data_key.clone(),
        source,
        rho,
        sampling_rate: program.sampling_rate,
        target_result_count: program.target_result_count,
        window_hours: program.window_hours,
    };
    let stats = run_fe(fleet, &fe_cfg)?;
    let oracle = hidden_wer_oracle(fleet, "fe-asr", &asr.data_key)?;
    let gap = (stats.mean_ewer - oracle.mean_ewer).abs();

    let mut writer = csv::Writer::from_path(out_dir.join("fe_ewer.csv"))?;
    writer.write_record([
        "devices",
        "utterances",
        "empty_hypotheses",
        "mean_ewer",
        "spread",
        "rho",
        "true_wer",
        "gap",
    ])?;
    writer.write_record([
        stats.device_count.to_string(),
        stats.utterance_count.to_string(),
        stats.empty_hypothesis_count.to_string(),
        format!("{:.17e}", stats.mean_ewer),
        format!("{:.17e}", stats.spread),
        format!("{:.17e}", rho.rho),
        format!("{:.17e}", oracle.mean_ewer),
        format!("{:.17e}", gap),
    ])?;
    writer.flush()?;

    Ok(serde_json::json!({
        "kind": "fe",
        "devices": stats.device_count,
        "utterances": stats.utterance_count,
        "empty_hypotheses": stats.empty_hypothesis_count,
        "mean_ewer": stats.mean_ewer,
        "spread": stats.spread,
        "rho": rho.rho,
        "true_wer": oracle.mean_ewer,
        "gap": gap,
    }))
}

fn run_fl_program(
    cfg: &ScenarioConfig,
    fleet: &mut SimFleet,
    program: &FlProgram,
    out_dir: &Path,
) -> Result<serde_json::Value, SimError> {
    let fl = cfg
        .data
        .fl
        .clone()
        .ok_or_else(|| SimError::Other("fl program requires data.fl".into()))?;

    // Held-out oracle set from the same distribution, no label noise.
    let truth = fl_true_weights(cfg.master_seed, fl.dim);
    let mut heldout = LocalDataset::default();
    let mut rng = ChaCha12Rng::from_seed(derive_seed(cfg.master_seed, "fl-heldout", 0));
    use rand::Rng;
    use rand_distr::Distribution;
    let normal = rand_distr::Normal::new(0.0, 1.0).expect("unit normal");
    for _ in 0..program.heldout_size {
        let x: Vec<f64> = (0..fl.dim).map(|_| normal.sample(&mut rng)).collect();
        let y = x.iter().zip(&truth).map(|(v, w)| v * w).sum();
        heldout.features.push(x);
        heldout.targets.push(y);
    }
    let _ = rng.random::<u64>();

    let fl_cfg = FlRunConfig {
        task_prefix: "fl".into(),
        data_key: fl.data_key.clone(),
        rounds: program.rounds,
        cohort_target: program.cohort_target,
        privacy: PrivacyConfig {
            clip_bound: program.clip_bound,
            sigma_local: program.sigma_local,
            sigma_central: program.sigma_central,
        },
        train: TrainSpec {
            objective: Objective::LeastSquares,
            epochs: program.epochs,
            learning_rate: program.learning_rate,
            batch_size: program.batch_size,
        },
        sampling_rate: program.sampling_rate,
        window_hours: program.window_hours,
        retry_limit: program.retry_limit,
        seed: cfg.master_seed,
    };
    let initial = ModelParameters::zeros(fl.dim);
    let (final_model, rounds) = fl_training_loop(fleet, initial, &fl_cfg, &heldout)?;

    let document = serde_json::json!({
        "final_weights": final_model.weights,
        "final_version": final_model.version,
        "true_weights": truth,
        "rounds": rounds,
    });
    fs::write(out_dir.join("fl_rounds.json"), serde_json::to_vec_pretty(&document)?)?;

    Ok(serde_json::json!({
        "kind": "fl",
        "rounds_completed": rounds.len(),
        "final_heldout_loss": rounds.last().map(|r| r.heldout_loss),
        "final_weights": final_model.weights,
    }))
}

fn write_events_csv(fleet: &SimFleet, path: &Path) -> Result<(), SimError> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in &fleet.cycles {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}
