// Temporary tuning harness for the spatial-signal experiment.
use std::sync::Arc;

use lineloss_core::features::{
    build_mixed_features, make_windows, resample_hourly, split_dataset, ScalerMode,
};
use lineloss_core::graph::normalize_adjacency;
use lineloss_core::model::{ForecastModel, ModelConfig, TimeAggregation};
use lineloss_core::synth::{generate_feeder, generate_scada, SynthSpec, TopologyKind};
use lineloss_core::training::{evaluate, train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(25);
    let lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let noise: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.15);
    let days: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(10);
    let seeds: u64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(5);
    let verbose = args.len() > 6;

    let mut wins = 0;
    for seed in 0..seeds {
        let spec = SynthSpec {
            n_nodes: 8,
            days,
            seed,
            topology: TopologyKind::RandomTree,
            missing_fraction: 0.0,
            outlier_fraction: 0.0,
            coupling: 0.8,
            noise,
        };
        let (graph, _) = generate_feeder(&spec).unwrap();
        let data = generate_scada(&spec, &graph).unwrap();
        let adjacency = normalize_adjacency(&graph);
        let hourly = resample_hourly(&data.scada).unwrap();
        let tensor = build_mixed_features(
            &hourly,
            &data.attrs,
            &data.vocab,
            &data.weather,
            ScalerMode::FitLeading(0.8),
        )
        .unwrap();
        let windows = make_windows(Arc::new(tensor), 24, 1, 1).unwrap();
        let (train_set, val_set, test_set) = split_dataset(&windows, (0.8, 0.1, 0.1)).unwrap();

        let base = ModelConfig {
            n_nodes: 8,
            window: 24,
            in_channels: windows.features.channels,
            gcn_hidden: 32,
            gcn_out: 24,
            embed_dim: 4,
            node_attention_hidden: 8,
            feature_attention_hidden: 8,
            time_attention_hidden: 8,
            lstm_layers: 1,
            lstm_hidden: 16,
            horizon: 1,
            dropout: 0.0,
            use_gcn: true,
            use_node_attention: true,
            use_feature_attention: true,
            use_lstm: true,
            use_time_attention: true,
            time_aggregation: TimeAggregation::WeightedSum,
            seed,
        };
        let mut ablated = base.clone();
        ablated.use_gcn = false;
        ablated.use_node_attention = false;

        let cfg = TrainConfig {
            learning_rate: lr,
            batch_size: 16,
            max_epochs: epochs,
            patience: epochs,
            weight_decay: 0.0,
            seed,
            ..TrainConfig::default()
        };
        let run = |config: ModelConfig, tag: &str| -> f64 {
            let model = ForecastModel::new(config).unwrap();
            let outcome = train(model, &train_set, &val_set, &adjacency, &cfg).unwrap();
            if verbose {
                let v: Vec<String> = outcome
                    .val_curve
                    .iter()
                    .step_by((epochs / 10).max(1))
                    .map(|x| format!("{x:.4}"))
                    .collect();
                eprintln!("  {tag} val curve: {}", v.join(" "));
            }
            evaluate(&outcome.model, &test_set, &adjacency, false)
                .unwrap()
                .rmse
        };
        let full = run(base, "full");
        let abl = run(ablated, "ablated");
        if full < abl {
            wins += 1;
        }
        println!("seed {seed}: full {full:.4} ablated {abl:.4} {}", if full < abl { "WIN" } else { "lose" });
    }
    println!("wins: {wins}/{seeds}");
}
