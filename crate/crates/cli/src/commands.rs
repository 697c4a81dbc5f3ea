//! Subcommand implementations.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};

use lineloss_core::cleaning::{clean_scada, CleanParams, ForestParams, ImputeParams};
use lineloss_core::features::{
    build_mixed_features, csvio, make_windows, resample_hourly, split_dataset, ScalerMode,
    StaticVocab, WindowedDataset,
};
use lineloss_core::graph::{normalize_adjacency, parse_topology, NormalizedAdjacency};
use lineloss_core::model::{
    checkpoint, model_gradient_check, ForecastModel, ModelConfig, TimeAggregation,
};
use lineloss_core::synth::{
    generate_feeder, generate_scada, inject_bad_data, write_corruption_mask, SynthSpec,
    TopologyKind,
};
use lineloss_core::training::{
    ablation_sweep, evaluate, forecast_rows, train, write_ablation_csv, write_forecast_csv,
    write_loss_curve_csv, write_metrics_csv, HorizonMetrics, TrainConfig,
};

use crate::cli::{
    AblateArgs, CleanArgs, EvaluateArgs, GradcheckArgs, ModelFlags, PredictArgs, SynthArgs,
    TrainArgs, TrainFlags,
};
use crate::config::{parse_usize_list, Resolver};

pub fn run_synth(args: SynthArgs, r: &mut Resolver) -> Result<()> {
    let spec = SynthSpec {
        n_nodes: r.get(args.nodes, "nodes", 10)?,
        days: r.get(args.days, "days", 14)?,
        seed: r.get(args.seed, "seed", 0)?,
        topology: parse_topology_kind(&r.get(
            args.topology,
            "topology",
            "random-tree".to_string(),
        )?)?,
        missing_fraction: r.get(args.missing_fraction, "missing-fraction", 0.0959)?,
        outlier_fraction: r.get(args.outlier_fraction, "outlier-fraction", 0.002)?,
        coupling: r.get(args.coupling, "coupling", 0.5)?,
        noise: r.get(args.noise, "noise", 0.05)?,
    };
    let out = r.get_out(args.out, "runs")?;
    let dir = r.run_dir(&out, "synth")?;

    let (graph, _) = generate_feeder(&spec)?;
    let data = generate_scada(&spec, &graph)?;
    let (corrupted, mask) = inject_bad_data(&data.scada, &spec)?;

    std::fs::write(
        dir.join("topology.txt"),
        lineloss_core::graph::format_topology(&data.graph),
    )?;
    csvio::write_scada_csv(&corrupted, &dir.join("scada.csv"))?;
    csvio::write_loss_csv(
        &data.scada.timestamps,
        &data.scada.loss,
        &dir.join("loss.csv"),
    )?;
    csvio::write_static_csv(&data.attrs, &dir.join("static.csv"))?;
    csvio::write_weather_csv(&data.weather, &dir.join("weather.csv"))?;
    csvio::write_loss_csv(
        &data.scada.timestamps,
        &data.scada.loss,
        &dir.join("truth_loss.csv"),
    )?;
    write_corruption_mask(&mask, &data.scada.timestamps, &dir.join("corruption_mask.csv"))?;
    println!("run-id: {}", r.run_id("synth"));
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn run_clean(args: CleanArgs, r: &mut Resolver) -> Result<()> {
    let scada_path = r.require_path(args.scada, "scada")?;
    let loss_path = r.require_path(args.loss, "loss")?;
    let seed = r.get(args.seed, "seed", 0)?;
    let params = CleanParams {
        eps: args.eps, // optional; auto-derived when absent
        min_pts: r.get(args.min_pts, "min-pts", 5)?,
        lof_k: r.get(args.lof_k, "lof-k", 10)?,
        impute: ImputeParams {
            forest: ForestParams {
                n_trees: r.get(args.trees, "trees", 50)?,
                max_depth: r.get(args.tree_depth, "tree-depth", 10)?,
                min_leaf: r.get(args.min_leaf, "min-leaf", 5)?,
                seed,
            },
            tol: r.get(args.tol, "tol", 1e-4)?,
            max_rounds: r.get(args.max_rounds, "max-rounds", 10)?,
            validation_fraction: 0.05,
            seed,
        },
    };
    let out = r.get_out(args.out, "runs")?;
    let dir = r.run_dir(&out, "clean")?;

    let series = csvio::load_scada(&scada_path, &loss_path)?;
    let (cleaned, report) = clean_scada(&series, &params)?;
    csvio::write_scada_csv(&cleaned, &dir.join("scada_clean.csv"))?;
    csvio::write_loss_csv(&cleaned.timestamps, &cleaned.loss, &dir.join("loss_clean.csv"))?;
    std::fs::write(dir.join("report.txt"), report.render())?;
    println!("run-id: {}", r.run_id("clean"));
    println!(
        "flagged {} outlier cells, imputed {} cells",
        report.outlier_cells(),
        report.imputed_cells()
    );
    println!("wrote {}", dir.display());
    Ok(())
}

/// Shared loading path: CSVs -> hourly series -> feature tensor inputs.
struct Loaded {
    adjacency: NormalizedAdjacency,
    scada: lineloss_core::features::ScadaSeries,
    attrs: lineloss_core::features::StaticAttributes,
    vocab: StaticVocab,
    weather: lineloss_core::features::WeatherSeries,
}

fn load_inputs(
    scada: &Path,
    loss: &Path,
    static_path: &Path,
    weather: &Path,
    topology: &Path,
) -> Result<Loaded> {
    let graph = parse_topology(&std::fs::read_to_string(topology)?)?;
    let adjacency = normalize_adjacency(&graph);
    let series = csvio::load_scada(scada, loss)?;
    if series.n_nodes != graph.n_nodes {
        bail!(
            "scada covers {} nodes but topology declares {}",
            series.n_nodes,
            graph.n_nodes
        );
    }
    let hourly = resample_hourly(&series)?;
    let attrs = csvio::read_static_csv(static_path)?;
    let vocab = StaticVocab::from_attrs(&attrs);
    let weather = csvio::read_weather_csv(weather)?;
    Ok(Loaded {
        adjacency,
        scada: hourly,
        attrs,
        vocab,
        weather,
    })
}

fn windows_for(
    loaded: &Loaded,
    mode: ScalerMode,
    window: usize,
    horizon: usize,
) -> Result<WindowedDataset> {
    let tensor = build_mixed_features(
        &loaded.scada,
        &loaded.attrs,
        &loaded.vocab,
        &loaded.weather,
        mode,
    )?;
    Ok(make_windows(Arc::new(tensor), window, horizon, 1)?)
}

struct ResolvedModel {
    window: usize,
    gcn_hidden: usize,
    gcn_out: usize,
    embed_dim: usize,
    attention_hidden: usize,
    lstm_layers: usize,
    lstm_hidden: usize,
    dropout: f64,
    disabled: Vec<String>,
    time_agg: TimeAggregation,
    seed: u64,
}

fn resolve_model_flags(flags: ModelFlags, r: &mut Resolver) -> Result<ResolvedModel> {
    let disabled_raw = r.get(flags.disable, "disable", "none".to_string())?;
    let disabled: Vec<String> = match disabled_raw.as_str() {
        "none" | "" => Vec::new(),
        s => s.split(',').map(|b| b.trim().to_string()).collect(),
    };
    for block in &disabled {
        if !["gcn", "d_atten", "f_atten", "lstm", "t_atten"].contains(&block.as_str()) {
            bail!("unknown block `{block}` in --disable");
        }
    }
    let agg_raw = r.get(flags.time_agg, "time-agg", "weighted-sum".to_string())?;
    let time_agg = match agg_raw.as_str() {
        "weighted-sum" => TimeAggregation::WeightedSum,
        "mean" => TimeAggregation::Mean,
        "last" => TimeAggregation::Last,
        other => bail!("unknown time aggregation `{other}`"),
    };
    Ok(ResolvedModel {
        window: r.get(flags.window, "window", 100)?,
        gcn_hidden: r.get(flags.gcn_hidden, "gcn-hidden", 256)?,
        gcn_out: r.get(flags.gcn_out, "gcn-out", 16)?,
        embed_dim: r.get(flags.embed_dim, "embed-dim", 8)?,
        attention_hidden: r.get(flags.attention_hidden, "attention-hidden", 32)?,
        lstm_layers: r.get(flags.lstm_layers, "lstm-layers", 2)?,
        lstm_hidden: r.get(flags.lstm_hidden, "lstm-hidden", 256)?,
        dropout: r.get(flags.dropout, "dropout", 0.05)?,
        disabled,
        time_agg,
        seed: r.get(flags.seed, "seed", 0)?,
    })
}

fn model_config_from(resolved: &ResolvedModel, n_nodes: usize, in_channels: usize, horizon: usize) -> ModelConfig {
    let off = |b: &str| !resolved.disabled.iter().any(|d| d == b);
    ModelConfig {
        n_nodes,
        window: resolved.window,
        in_channels,
        gcn_hidden: resolved.gcn_hidden,
        gcn_out: resolved.gcn_out,
        embed_dim: resolved.embed_dim,
        node_attention_hidden: resolved.attention_hidden,
        feature_attention_hidden: resolved.attention_hidden,
        time_attention_hidden: resolved.attention_hidden,
        lstm_layers: resolved.lstm_layers,
        lstm_hidden: resolved.lstm_hidden,
        horizon,
        dropout: resolved.dropout,
        use_gcn: off("gcn"),
        use_node_attention: off("d_atten"),
        use_feature_attention: off("f_atten"),
        use_lstm: off("lstm"),
        use_time_attention: off("t_atten"),
        time_aggregation: resolved.time_agg,
        seed: resolved.seed,
    }
}

fn resolve_train_flags(flags: TrainFlags, r: &mut Resolver) -> Result<TrainConfig> {
    Ok(TrainConfig {
        learning_rate: r.get(flags.lr, "lr", 1e-4)?,
        batch_size: r.get(flags.batch, "batch", 32)?,
        max_epochs: r.get(flags.epochs, "epochs", 100)?,
        patience: r.get(flags.patience, "patience", 20)?,
        min_delta: r.get(flags.min_delta, "min-delta", 1e-6)?,
        clip_norm: r.get(flags.clip, "clip", 5.0)?,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
        weight_decay: r.get(flags.weight_decay, "weight-decay", 5e-4)?,
        stop_below_train_mse: None,
        seed: r.get(flags.train_seed, "train-seed", 0)?,
    })
}

pub fn run_train(args: TrainArgs, r: &mut Resolver) -> Result<()> {
    let scada = r.require_path(args.scada, "scada")?;
    let loss = r.require_path(args.loss, "loss")?;
    let static_path = r.require_path(args.static_attrs, "static")?;
    let weather = r.require_path(args.weather, "weather")?;
    let topology = r.require_path(args.topology, "topology")?;
    let horizons = parse_usize_list(&r.get(
        args.horizons,
        "horizons",
        "1,3,8,24,168".to_string(),
    )?)?;
    let model_flags = resolve_model_flags(args.model, r)?;
    let train_cfg = resolve_train_flags(args.train, r)?;
    let out = r.get_out(args.out, "runs")?;
    let dir = r.run_dir(&out, "train")?;

    let loaded = load_inputs(&scada, &loss, &static_path, &weather, &topology)?;
    for &horizon in &horizons {
        let dataset = windows_for(&loaded, ScalerMode::FitLeading(0.8), model_flags.window, horizon)?;
        let (train_set, val_set, _) = split_dataset(&dataset, (0.8, 0.1, 0.1))?;
        let config = model_config_from(
            &model_flags,
            loaded.scada.n_nodes,
            dataset.features.channels,
            horizon,
        );
        let model = ForecastModel::new(config)?;
        let outcome = train(model, &train_set, &val_set, &loaded.adjacency, &train_cfg)?;
        checkpoint::save(
            &outcome.model,
            &dataset.features.scaler,
            &dir.join(format!("checkpoint_h{horizon}.json")),
        )?;
        write_loss_curve_csv(
            &outcome.train_curve,
            &outcome.val_curve,
            &dir.join(format!("loss_curve_h{horizon}.csv")),
        )?;
        println!(
            "horizon {horizon}: stopped at epoch {}, best epoch {}, best val mse {:.6}",
            outcome.stopped_epoch,
            outcome.best_epoch,
            outcome.val_curve[outcome.best_epoch - 1],
        );
    }
    println!("run-id: {}", r.run_id("train"));
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn run_predict(args: PredictArgs, r: &mut Resolver) -> Result<()> {
    let ckpt_path = r.require_path(args.checkpoint, "checkpoint")?;
    let scada = r.require_path(args.scada, "scada")?;
    let loss = r.require_path(args.loss, "loss")?;
    let static_path = r.require_path(args.static_attrs, "static")?;
    let weather = r.require_path(args.weather, "weather")?;
    let topology = r.require_path(args.topology, "topology")?;
    let out = r.get_out(args.out, "runs")?;
    let dir = r.run_dir(&out, "predict")?;

    let (model, scaler) = checkpoint::load(&ckpt_path)?;
    let loaded = load_inputs(&scada, &loss, &static_path, &weather, &topology)?;
    let dataset = windows_for(
        &loaded,
        ScalerMode::Apply(scaler),
        model.config.window,
        model.config.horizon,
    )?;
    let rows = forecast_rows(&model, &dataset, &loaded.adjacency)?;
    write_forecast_csv(&rows, &dir.join("forecast.csv"))?;
    println!("run-id: {}", r.run_id("predict"));
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn run_evaluate(args: EvaluateArgs, r: &mut Resolver) -> Result<()> {
    let scada = r.require_path(args.scada, "scada")?;
    let loss = r.require_path(args.loss, "loss")?;
    let static_path = r.require_path(args.static_attrs, "static")?;
    let weather = r.require_path(args.weather, "weather")?;
    let topology = r.require_path(args.topology, "topology")?;
    let timing = r.get(Some(args.timing), "timing", false)?;
    let out = r.get_out(args.out, "runs")?;
    if args.checkpoints.is_empty() {
        bail!("pass at least one --checkpoint");
    }
    for (i, p) in args.checkpoints.iter().enumerate() {
        crate::config::ensure_exists(p)?;
        r.get(Some(p.display().to_string()), &format!("checkpoint{i}"), String::new())?;
    }
    let dir = r.run_dir(&out, "evaluate")?;

    let loaded = load_inputs(&scada, &loss, &static_path, &weather, &topology)?;
    let mut rows: Vec<HorizonMetrics> = Vec::new();
    for ckpt_path in &args.checkpoints {
        let (model, scaler) = checkpoint::load(ckpt_path)?;
        let dataset = windows_for(
            &loaded,
            ScalerMode::Apply(scaler),
            model.config.window,
            model.config.horizon,
        )?;
        let (_, _, test_set) = split_dataset(&dataset, (0.8, 0.1, 0.1))?;
        let metrics = evaluate(&model, &test_set, &loaded.adjacency, timing)?;
        let fr = forecast_rows(&model, &test_set, &loaded.adjacency)?;
        write_forecast_csv(
            &fr,
            &dir.join(format!("forecast_h{}.csv", model.config.horizon)),
        )?;
        println!(
            "horizon {}: rmse {:.4} mae {:.4} r2 {}",
            metrics.horizon,
            metrics.rmse,
            metrics.mae,
            metrics
                .r2
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "undefined".into()),
        );
        rows.push(metrics);
    }
    rows.sort_by_key(|m| m.horizon);
    write_metrics_csv(&rows, &dir.join("metrics.csv"))?;
    println!("run-id: {}", r.run_id("evaluate"));
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn run_ablate(args: AblateArgs, r: &mut Resolver) -> Result<()> {
    let scada = r.require_path(args.scada, "scada")?;
    let loss = r.require_path(args.loss, "loss")?;
    let static_path = r.require_path(args.static_attrs, "static")?;
    let weather = r.require_path(args.weather, "weather")?;
    let topology = r.require_path(args.topology, "topology")?;
    let horizon = r.get(args.horizon, "horizon", 3)?;
    let model_flags = resolve_model_flags(args.model, r)?;
    let train_cfg = resolve_train_flags(args.train, r)?;
    let out = r.get_out(args.out, "runs")?;
    let dir = r.run_dir(&out, "ablate")?;

    let loaded = load_inputs(&scada, &loss, &static_path, &weather, &topology)?;
    let dataset = windows_for(&loaded, ScalerMode::FitLeading(0.8), model_flags.window, horizon)?;
    let (train_set, val_set, test_set) = split_dataset(&dataset, (0.8, 0.1, 0.1))?;
    let base = model_config_from(
        &model_flags,
        loaded.scada.n_nodes,
        dataset.features.channels,
        horizon,
    );
    let rows = ablation_sweep(
        &base,
        &train_set,
        &val_set,
        &test_set,
        &loaded.adjacency,
        &train_cfg,
    )?;
    for row in &rows {
        println!(
            "{:<32} rmse {:.4} mae {:.4} r2 {}",
            row.label,
            row.metrics.rmse,
            row.metrics.mae,
            row.metrics
                .r2
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "undefined".into()),
        );
    }
    write_ablation_csv(&rows, &dir.join("ablation.csv"))?;
    println!("run-id: {}", r.run_id("ablate"));
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn run_gradcheck(args: GradcheckArgs, r: &mut Resolver) -> Result<()> {
    let eps = r.get(args.eps, "eps", 1e-5)?;
    let seed = r.get(args.seed, "seed", 13)?;
    let toy = |tweak: &dyn Fn(&mut ModelConfig)| -> ModelConfig {
        let mut cfg = ModelConfig {
            n_nodes: 2,
            window: 4,
            in_channels: 3,
            gcn_hidden: 4,
            gcn_out: 3,
            embed_dim: 2,
            node_attention_hidden: 3,
            feature_attention_hidden: 3,
            time_attention_hidden: 3,
            lstm_layers: 2,
            lstm_hidden: 4,
            horizon: 2,
            dropout: 0.0,
            use_gcn: true,
            use_node_attention: true,
            use_feature_attention: true,
            use_lstm: true,
            use_time_attention: true,
            time_aggregation: TimeAggregation::WeightedSum,
            seed,
        };
        tweak(&mut cfg);
        cfg
    };

    let blocks: Vec<(&str, ModelConfig)> = vec![
        ("gcn", toy(&|c| {
            c.use_node_attention = false;
            c.use_feature_attention = false;
            c.use_lstm = false;
            c.use_time_attention = false;
        })),
        ("d_atten", toy(&|c| {
            c.use_gcn = false;
            c.use_feature_attention = false;
            c.use_lstm = false;
            c.use_time_attention = false;
        })),
        ("f_atten", toy(&|c| {
            c.use_gcn = false;
            c.use_node_attention = false;
            c.use_lstm = false;
            c.use_time_attention = false;
        })),
        ("lstm", toy(&|c| {
            c.use_gcn = false;
            c.use_node_attention = false;
            c.use_feature_attention = false;
            c.use_time_attention = false;
        })),
        ("t_atten", toy(&|c| {
            c.use_gcn = false;
            c.use_node_attention = false;
            c.use_feature_attention = false;
            c.use_lstm = false;
        })),
        ("full_model", toy(&|_| {})),
    ];

    let mut failed = false;
    for (name, cfg) in blocks {
        let err = model_gradient_check(&cfg, seed, eps)
            .with_context(|| format!("gradient check of {name}"))?;
        let ok = err < 1e-4;
        failed |= !ok;
        println!(
            "{:<12} max_rel_err {:>12.3e}  {}",
            name,
            err,
            if ok { "ok" } else { "FAIL" }
        );
    }
    if failed {
        bail!("at least one gradient check at or above 1e-4");
    }
    Ok(())
}

fn parse_topology_kind(s: &str) -> Result<TopologyKind> {
    Ok(match s {
        "path" => TopologyKind::Path,
        "tree" => TopologyKind::Tree,
        "random-tree" => TopologyKind::RandomTree,
        other => bail!("unknown topology `{other}` (path|tree|random-tree)"),
    })
}
