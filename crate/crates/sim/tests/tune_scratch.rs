//! Scratch experiments for calibrating the FT scenario. Ignored by default.

mod common;

use fedtask_plugins::ft_news::{ParamDim, ParameterSpace, PersonalizationParams};
use fedtask_sim::scenario::{
    AvailabilityModel, DataSpec, FtProgram, NewsDataSpec, Program, ScenarioConfig, ServerTuning,
};
use fedtask_sim::run_simulation;

fn strong_params() -> PersonalizationParams {
    PersonalizationParams {
        half_life_hours: 12.0,
        affinity_weight: 4.2,
        freshness_weight: 3.0,
        quality_weight: 2.6,
        affinity_temp: 2.0,
        bias: -0.3,
    }
}

fn scenario(space: Vec<(String, f64, f64)>, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        fleet_size: 1000,
        opt_in_fraction: 1.0,
        master_seed: seed,
        availability: AvailabilityModel::default(),
        os_versions: vec![(15, 1.0)],
        device_types: vec![("phone".into(), 1.0)],
        unlocked_fraction: 1.0,
        transport_failure_rate: 0.0,
        execution_deadline_millis: 600_000,
        server: ServerTuning::default(),
        data: DataSpec {
            news: Some(NewsDataSpec {
                items_per_device: 50,
                true_params: strong_params(),
                topic_count: 3,
                max_age_hours: 168.0,
                data_key: "news_interaction".into(),
                dwell_threshold_seconds: 10.0,
            }),
            asr: None,
            fl: None,
        },
        persist_results: false,
        program: Program::Ft(FtProgram {
            space,
            configs_per_device: 80,
            cluster_count: 96,
            max_iterations: 6,
            convergence_eps: 0.02,
            label_rule: fedtask_plugins::ft_news::LabelRule::Tapped,
            sampling_rate: 1.0,
            target_result_count: 900,
            window_hours: 48,
            base: None,
        }),
    }
}

#[test]
#[ignore]
fn landscape_and_ft_probe() {
    let dims = vec![
        ("half_life_hours".to_string(), 2.0, 72.0),
        ("affinity_weight".to_string(), 0.0, 10.0),
        ("freshness_weight".to_string(), 0.0, 8.0),
        ("quality_weight".to_string(), 0.0, 8.0),
        ("affinity_temp".to_string(), 0.25, 4.5),
        ("bias".to_string(), -6.0, 6.0),
    ];
    let cfg = scenario(dims.clone(), 11);
    let out = std::env::temp_dir().join("ft-probe");
    let started = std::time::Instant::now();
    let (summary, fleet) = run_simulation(&cfg, &out, 1).unwrap();
    println!("sim took {:?}", started.elapsed());
    let trajectory = std::fs::read_to_string(out.join("ft_trajectory.csv")).unwrap();
    println!("{trajectory}");
    println!("program: {}", serde_json::to_string_pretty(&summary.program).unwrap());

    let space = ParameterSpace {
        dims: dims
            .iter()
            .map(|(n, lo, hi)| ParamDim { name: n.clone(), lo: *lo, hi: *hi })
            .collect(),
    };
    let pooled = common::pooled_news_dataset(&fleet, "news_interaction");
    println!("pooled items: {}", pooled.items.len());
    let sample = common::subsample(&pooled, 6_000, 99);

    // Marginal flatness: loss along each dim with others at truth.
    let truth = vec![12.0, 4.2, 3.0, 2.6, 2.0, -0.3];
    for (d, (name, lo, hi)) in dims.iter().enumerate() {
        let mut line = format!("{name:20} marginal:");
        for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let mut values = truth.clone();
            values[d] = lo + (hi - lo) * frac;
            let loss = fedtask_plugins::ft_news::evaluate_config(
                &space,
                &fedtask_plugins::ft_news::Configuration { values },
                &strong_params(),
                &sample,
            )
            .unwrap();
            line.push_str(&format!(" {loss:.4}"));
        }
        println!("{line}");
    }

    let started = std::time::Instant::now();
    let (oracle_best, oracle_loss) =
        common::grid_search_oracle(&space, &strong_params(), &sample, 5, 3);
    println!("oracle took {:?}", started.elapsed());
    println!("oracle best {:?} loss {oracle_loss}", oracle_best.values);

    let truth_loss = fedtask_plugins::ft_news::evaluate_config(
        &space,
        &fedtask_plugins::ft_news::Configuration {
            values: vec![12.0, 4.2, 3.0, 2.6, 2.0, -0.3],
        },
        &strong_params(),
        &sample,
    )
    .unwrap();
    println!("loss at planted truth: {truth_loss}");

    let ft_best = summary.program["best"].as_array().unwrap();
    let ft_values: Vec<f64> = ft_best.iter().map(|v| v.as_f64().unwrap()).collect();
    let ft_loss = fedtask_plugins::ft_news::evaluate_config(
        &space,
        &fedtask_plugins::ft_news::Configuration { values: ft_values.clone() },
        &strong_params(),
        &sample,
    )
    .unwrap();
    println!("loss at ft best: {ft_loss}");
    for (d, (name, lo, hi)) in dims.iter().enumerate() {
        let width = hi - lo;
        let ft = ft_best[d].as_f64().unwrap();
        let oracle = oracle_best.values[d];
        println!(
            "{name:20} ft {ft:9.3} oracle {oracle:9.3} |diff|/width {:.3}",
            (ft - oracle).abs() / width
        );
    }
}
