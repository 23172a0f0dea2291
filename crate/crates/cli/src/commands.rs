//! One function per subcommand. Each writes its files under an output
//! directory and returns the process exit code.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use leap_core::dataset::{generate_node_graph, generate_synthetic_dataset, split_dataset};
use leap_core::gnn::{pretrain_masked_edge, GinModel};
use leap_core::metrics::{median, seed_sweep, Scores};
use leap_core::rl::{Transition, UpdateOutcome};
use leap_core::theorem::{necessity_trial, sufficiency_trial, TrialKind, TrialSpace};
use leap_core::trainer::{evaluate, train_leap, CurvePoint, Metrics, NoopObserver, Task, TaskData, TrainObserver, TrainOutcome, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::checkpoint::{read_checkpoint, write_checkpoint, CheckpointFile};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{load_dataset, write_graph_dataset, write_node_dataset};
use crate::weights::{parse_weights, serialize_weights};

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn jsonl(records: &[Value]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Adds the resolved config and seed to a record.
fn stamp(mut record: Value, config: &Value, seed: u64) -> Value {
    let obj = record.as_object_mut().expect("records are objects");
    obj.insert("seed".into(), json!(seed));
    obj.insert("config".into(), config.clone());
    record
}

/// The metric that drives model selection: ROC-AUC for graphs, accuracy for
/// nodes.
fn primary(task: Task, s: &Scores) -> f64 {
    match task {
        Task::Graph => s.roc_auc,
        Task::Node => s.accuracy,
    }
}

pub fn curve_tsv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("epoch\ttrain_loss\tval_loss\tval_metric\n");
    for p in curve {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", p.epoch, p.train_loss, p.val_loss, p.val_metric);
    }
    out
}

// ---------------------------------------------------------------- verify

#[derive(Debug, Clone)]
pub struct VerifyArgs {
    pub cases: usize,
    pub max_nodes: usize,
    pub layers: usize,
    /// Overrides every per-case tolerance.
    pub tolerance: Option<f64>,
    pub seed: u64,
    pub out: PathBuf,
}

/// Default residual tolerances per case. Necessity also needs the residual
/// at a perturbed offset to exceed `NECESSITY_SEPARATION`.
pub fn default_tolerance(kind: TrialKind) -> f64 {
    match kind {
        TrialKind::FeatureMod => 1e-12,
        TrialKind::StructureMod => 1e-8,
        TrialKind::ComponentAdd => 1e-6,
        TrialKind::Necessity => 1e-9,
    }
}

pub const NECESSITY_SEPARATION: f64 = 1e-3;

const KINDS: [TrialKind; 4] = [
    TrialKind::FeatureMod,
    TrialKind::StructureMod,
    TrialKind::ComponentAdd,
    TrialKind::Necessity,
];

fn kind_name(kind: TrialKind) -> String {
    serde_json::to_value(kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn verify(args: &VerifyArgs) -> CliResult<i32> {
    if args.tolerance.is_some_and(|t| !(t >= 0.0)) {
        return Err(CliError::Usage("--tolerance must be a non-negative number".into()));
    }
    let space = TrialSpace {
        min_nodes: TrialSpace::default().min_nodes.min(args.max_nodes),
        max_nodes: args.max_nodes,
        max_layers: args.layers,
        ..TrialSpace::default()
    };
    space
        .validate()
        .map_err(|e| CliError::Usage(format!("--max-nodes/--layers: {e}")))?;
    let config = json!({
        "cases": args.cases,
        "max_nodes": args.max_nodes,
        "layers": args.layers,
        "tolerance": args.tolerance,
    });
    create_dir(&args.out)?;
    let mut records = Vec::new();
    let mut summary = String::from("case\ttrials\tmax_residual\ttolerance\tfailed\n");
    let mut all_pass = true;
    for (stream, &kind) in KINDS.iter().enumerate() {
        let tol = args.tolerance.unwrap_or_else(|| default_tolerance(kind));
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        rng.set_stream(stream as u64);
        let mut max_residual: f64 = 0.0;
        let mut failed = 0usize;
        let mut redraws = 0usize;
        for trial in 0..args.cases {
            let record = if kind == TrialKind::Necessity {
                let t = necessity_trial(&mut rng, &space)?;
                let pass = t.residual_at_forced <= tol && t.residual_perturbed > NECESSITY_SEPARATION && !t.perturbed_consistent;
                max_residual = max_residual.max(t.residual_at_forced);
                failed += usize::from(!pass);
                json!({
                    "type": "trial", "trial": trial, "kind": kind, "nodes": t.nodes, "dim": t.dim, "layers": 1,
                    "residual": t.residual_at_forced, "solvable": true,
                    "residual_perturbed": t.residual_perturbed, "perturbation": t.perturbation,
                    "tolerance": tol, "pass": pass,
                })
            } else {
                let t = sufficiency_trial(&mut rng, &space, kind)?;
                let pass = t.solvable && t.residual <= tol;
                redraws += t.redraws;
                max_residual = max_residual.max(t.residual);
                failed += usize::from(!pass);
                json!({
                    "type": "trial", "trial": trial, "kind": kind, "nodes": t.nodes, "dim": t.dim, "layers": t.layers,
                    "residual": t.residual, "solvable": t.solvable, "condition": t.condition, "redraws": t.redraws,
                    "tolerance": tol, "pass": pass,
                })
            };
            records.push(stamp(record, &config, args.seed));
        }
        let pass = failed == 0;
        all_pass &= pass;
        records.push(stamp(
            json!({
                "type": "summary", "kind": kind, "trials": args.cases, "max_residual": max_residual,
                "tolerance": tol, "failed": failed, "redraws": redraws, "pass": pass,
            }),
            &config,
            args.seed,
        ));
        let name = kind_name(kind);
        let _ = writeln!(summary, "{name}\t{}\t{max_residual:e}\t{tol:e}\t{failed}", args.cases);
        println!(
            "{name}: {} trials, max residual {max_residual:.3e}, tolerance {tol:.0e}: {}",
            args.cases,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    write(&args.out.join("verify.jsonl"), &jsonl(&records))?;
    write(&args.out.join("summary.tsv"), &summary)?;
    if all_pass {
        Ok(0)
    } else {
        Err(CliError::Verification("at least one case exceeded its tolerance".into()))
    }
}

// ---------------------------------------------------------------- data

/// Writes the configured synthetic dataset under `out`.
pub fn gen(cfg: &RunConfig, out: &Path) -> CliResult<PathBuf> {
    create_dir(out)?;
    match cfg.task {
        Task::Graph => {
            let spec = cfg.generator_spec();
            let graphs = generate_synthetic_dataset(&spec, cfg.gen_seed)?;
            let split = split_dataset(graphs.len(), cfg.split, cfg.gen_seed)?;
            let generator = json!({"kind": "graph_sbm", "seed": cfg.gen_seed, "spec": spec});
            write_graph_dataset(out, &graphs, &split, cfg.split, generator)
        }
        Task::Node => {
            let spec = cfg.node_generator_spec();
            let g = generate_node_graph(&spec, cfg.gen_seed)?;
            let split = split_dataset(g.num_nodes(), cfg.split, cfg.gen_seed)?;
            let generator = json!({"kind": "node_sbm", "seed": cfg.gen_seed, "spec": spec});
            write_node_dataset(out, &g, &split, cfg.split, generator)
        }
    }
}

/// The dataset named in the config, or the built-in generator's output.
pub fn load_data(cfg: &RunConfig) -> CliResult<TaskData> {
    if let Some(path) = &cfg.dataset {
        let data = load_dataset(Path::new(path), cfg.hops)?;
        if data.task != cfg.task {
            return Err(CliError::Config(format!(
                "{path} holds a {:?} task but task = {:?}",
                data.task, cfg.task
            )));
        }
        return Ok(data);
    }
    Ok(match cfg.task {
        Task::Graph => TaskData::graph_task(
            generate_synthetic_dataset(&cfg.generator_spec(), cfg.gen_seed)?,
            cfg.split,
            cfg.gen_seed,
        )?,
        Task::Node => TaskData::node_task(
            &generate_node_graph(&cfg.node_generator_spec(), cfg.gen_seed)?,
            cfg.hops,
            cfg.split,
            cfg.gen_seed,
        )?,
    })
}

fn pretrain_on(cfg: &RunConfig, data: &TaskData) -> CliResult<(GinModel, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.pretrain_seed);
    let gin = GinModel::new(cfg.gin_config(data.feature_dim()), &mut rng)?;
    let train: Vec<_> = data.split.train.iter().map(|&i| data.instances[i].clone()).collect();
    let out = pretrain_masked_edge(gin, &train, &cfg.pretrain_config(), cfg.pretrain_seed)?;
    Ok((out.model, out.losses))
}

/// Loads the configured backbone, or pretrains one on the train split.
pub fn load_backbone(cfg: &RunConfig, data: &TaskData) -> CliResult<GinModel> {
    let Some(path) = &cfg.backbone else {
        return Ok(pretrain_on(cfg, data)?.0);
    };
    let p = Path::new(path);
    let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
    let model = parse_weights(&text).map_err(|e| CliError::Parse {
        path: p.to_path_buf(),
        line: e.line,
        message: e.message,
    })?;
    if !model.is_frozen() {
        return Err(CliError::Config(format!("{path}: backbone is not frozen")));
    }
    if model.config.in_dim != data.feature_dim() {
        return Err(CliError::Config(format!(
            "{path}: backbone expects {} input features, dataset has {}",
            model.config.in_dim,
            data.feature_dim()
        )));
    }
    Ok(model)
}

pub fn pretrain(cfg: &RunConfig, out: &Path) -> CliResult<i32> {
    let data = load_data(cfg)?;
    let (model, losses) = pretrain_on(cfg, &data)?;
    create_dir(out)?;
    let echo = cfg.echo();
    let mut records: Vec<Value> = losses
        .iter()
        .enumerate()
        .map(|(e, l)| {
            stamp(
                json!({"type": "pretrain_epoch", "epoch": e + 1, "loss": l}),
                &echo,
                cfg.pretrain_seed,
            )
        })
        .collect();
    records.push(stamp(
        json!({"type": "pretrain_result", "epochs": losses.len(), "final_loss": losses.last(), "checksum": model.checksum()}),
        &echo,
        cfg.pretrain_seed,
    ));
    let mut curve = String::from("epoch\tloss\n");
    for (e, l) in losses.iter().enumerate() {
        let _ = writeln!(curve, "{}\t{l}", e + 1);
    }
    write(&out.join("backbone.gin"), &serialize_weights(&model))?;
    write(&out.join("pretrain.jsonl"), &jsonl(&records))?;
    write(&out.join("curve.tsv"), &curve)?;
    eprintln!("pretrained backbone: {} epochs, final loss {:?}", losses.len(), losses.last());
    Ok(0)
}

// ---------------------------------------------------------------- train

/// Collects per-epoch and per-update records, plus transitions when asked.
struct Recorder<'a> {
    echo: &'a Value,
    seed: u64,
    dump: bool,
    records: Vec<Value>,
    trajectory: Vec<Value>,
}

impl TrainObserver for Recorder<'_> {
    fn on_transition(&mut self, epoch: usize, t: &Transition) {
        if self.dump {
            self.trajectory.push(json!({
                "epoch": epoch, "graph": t.graph, "step": t.step, "node": t.action.node,
                "delta": t.action.delta, "reward": t.reward, "value": t.value, "ecr": t.ecr,
                "logp_discrete": t.logp_discrete, "logp_continuous": t.logp_continuous,
            }));
        }
    }

    fn on_policy_update(&mut self, epoch: usize, outcome: &UpdateOutcome) {
        self.records.push(stamp(
            json!({"type": "policy_update", "epoch": epoch, "outcome": outcome}),
            self.echo,
            self.seed,
        ));
    }

    fn on_epoch(&mut self, p: &CurvePoint) {
        self.records.push(stamp(
            json!({"type": "epoch", "epoch": p.epoch, "train_loss": p.train_loss, "val_loss": p.val_loss, "val_metric": p.val_metric}),
            self.echo,
            self.seed,
        ));
    }
}

fn result_record(variant: Variant, m: &Metrics) -> Value {
    json!({
        "type": "result",
        "variant": variant.name(),
        "val": m.val,
        "test": m.test,
        "stats": m.stats,
    })
}

fn summary_row(out: &mut String, variant: Variant, seed: u64, task: Task, m: &Metrics) {
    let _ = writeln!(
        out,
        "{}\t{seed}\t{}\t{}\t{}\t{}\t{}\t{}",
        variant.name(),
        primary(task, &m.val.scores),
        m.test.scores.roc_auc,
        m.test.scores.accuracy,
        m.test.scores.macro_f1,
        m.stats.mean_distinct_edited,
        m.stats.best_epoch
    );
}

const SUMMARY_HEADER: &str = "variant\tseed\tval_metric\ttest_roc_auc\ttest_accuracy\ttest_macro_f1\tmean_distinct_edited\tbest_epoch\n";

pub fn train(cfg: &RunConfig, out: &Path) -> CliResult<i32> {
    let data = load_data(cfg)?;
    let backbone = load_backbone(cfg, &data)?;
    let echo = cfg.echo();
    let mut rec = Recorder {
        echo: &echo,
        seed: cfg.seed,
        dump: cfg.trajectory_dump,
        records: Vec::new(),
        trajectory: Vec::new(),
    };
    let outcome = train_leap(&data, &backbone, &cfg.train_config(), &mut rec)?;
    let m = &outcome.metrics;
    let mut records = std::mem::take(&mut rec.records);
    records.push(stamp(result_record(cfg.variant, m), &echo, cfg.seed));
    create_dir(out)?;
    write(&out.join("metrics.jsonl"), &jsonl(&records))?;
    write(&out.join("curve.tsv"), &curve_tsv(&m.curve))?;
    let mut summary = String::from(SUMMARY_HEADER);
    summary_row(&mut summary, cfg.variant, cfg.seed, cfg.task, m);
    write(&out.join("summary.tsv"), &summary)?;
    write_checkpoint(
        &out.join("checkpoint.leap"),
        &CheckpointFile {
            run: cfg.clone(),
            checkpoint: outcome.checkpoint.clone(),
        },
    )?;
    if cfg.trajectory_dump {
        write(&out.join("trajectory.jsonl"), &jsonl(&rec.trajectory))?;
    }
    eprintln!(
        "{} seed {}: test roc_auc {:.4} accuracy {:.4}",
        cfg.variant.name(),
        cfg.seed,
        m.test.scores.roc_auc,
        m.test.scores.accuracy
    );
    Ok(0)
}

/// Evaluates a checkpoint on one split of the data its run config names.
/// `dataset` replaces the stored dataset path.
pub fn eval(checkpoint: &Path, split: &str, dataset: Option<&str>) -> CliResult<Value> {
    let file = read_checkpoint(checkpoint)?;
    let mut cfg = file.run;
    if let Some(d) = dataset {
        cfg.dataset = Some(d.to_string());
    }
    let data = load_data(&cfg)?;
    let indices = match split {
        "train" => &data.split.train,
        "val" => &data.split.val,
        "test" => &data.split.test,
        other => return Err(CliError::Usage(format!("unknown split `{other}`; use train, val or test"))),
    };
    let report = evaluate(&file.checkpoint, &data, indices)?;
    Ok(stamp(
        json!({"type": "eval", "split": split, "report": report}),
        &cfg.echo(),
        cfg.seed,
    ))
}

// ---------------------------------------------------------------- sweeps

/// Runs every `(variant, seed)` job on up to `jobs` threads. Results come
/// back in job order, so outputs do not depend on scheduling.
fn run_jobs(
    cfg: &RunConfig,
    data: &TaskData,
    backbone: &GinModel,
    jobs: &[(Variant, u64)],
    threads: usize,
) -> CliResult<Vec<TrainOutcome>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<CliResult<TrainOutcome>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(variant, seed)) = jobs.get(i) else { break };
                let mut tc = cfg.train_config();
                tc.variant = variant;
                tc.seed = seed;
                let r = train_leap(data, backbone, &tc, &mut NoopObserver).map_err(CliError::from);
                if let Ok(o) = &r {
                    eprintln!("{} seed {seed}: test roc_auc {:.4}", variant.name(), o.metrics.test.scores.roc_auc);
                }
                slots.lock().expect("no poisoned lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no poisoned lock")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

fn aggregate_record(variant: Variant, runs: &[&TrainOutcome]) -> Value {
    let tests: Vec<Scores> = runs.iter().map(|o| o.metrics.test.scores).collect();
    let aucs: Vec<f64> = tests.iter().map(|s| s.roc_auc).collect();
    let distinct: Vec<f64> = runs.iter().map(|o| o.metrics.stats.mean_distinct_edited).collect();
    let eval_distinct: Vec<f64> = runs.iter().map(|o| o.metrics.test.mean_distinct_edited).collect();
    json!({
        "type": "aggregate",
        "variant": variant.name(),
        "seeds": runs.iter().map(|o| o.checkpoint.config.seed).collect::<Vec<_>>(),
        "test": seed_sweep(&tests),
        "median_test_roc_auc": median(&aucs),
        "mean_distinct_edited": leap_core::metrics::mean_std(&distinct).mean,
        "mean_eval_distinct_edited": leap_core::metrics::mean_std(&eval_distinct).mean,
    })
}

fn write_runs(
    cfg: &RunConfig,
    out: &Path,
    file: &str,
    jobs: &[(Variant, u64)],
    outcomes: &[TrainOutcome],
    variants: &[Variant],
) -> CliResult<()> {
    create_dir(&out.join("curves"))?;
    create_dir(&out.join("checkpoints"))?;
    let mut records = Vec::new();
    let mut summary = String::from(SUMMARY_HEADER);
    for (&(variant, seed), o) in jobs.iter().zip(outcomes) {
        let mut run = cfg.clone();
        run.variant = variant;
        run.seed = seed;
        let echo = run.echo();
        records.push(stamp(result_record(variant, &o.metrics), &echo, seed));
        summary_row(&mut summary, variant, seed, cfg.task, &o.metrics);
        let stem = format!("{}_seed{seed}", variant.name());
        write(&out.join("curves").join(format!("{stem}.tsv")), &curve_tsv(&o.metrics.curve))?;
        write_checkpoint(
            &out.join("checkpoints").join(format!("{stem}.leap")),
            &CheckpointFile {
                run,
                checkpoint: o.checkpoint.clone(),
            },
        )?;
    }
    let echo = cfg.echo();
    let mut agg = String::from("variant\truns\tmedian_test_roc_auc\tmean_test_roc_auc\tstd_test_roc_auc\tmean_distinct_edited\n");
    for &v in variants {
        let runs: Vec<&TrainOutcome> = jobs.iter().zip(outcomes).filter(|((jv, _), _)| *jv == v).map(|(_, o)| o).collect();
        let rec = aggregate_record(v, &runs);
        let _ = writeln!(
            agg,
            "{}\t{}\t{}\t{}\t{}\t{}",
            v.name(),
            runs.len(),
            rec["median_test_roc_auc"],
            rec["test"]["roc_auc"]["mean"],
            rec["test"]["roc_auc"]["std"],
            rec["mean_distinct_edited"]
        );
        records.push(stamp(rec, &echo, cfg.seed));
    }
    write(&out.join(file), &jsonl(&records))?;
    write(&out.join("summary.tsv"), &summary)?;
    write(&out.join("aggregate.tsv"), &agg)?;
    Ok(())
}

/// Every configured variant under every configured seed.
pub fn ablate(cfg: &RunConfig, out: &Path, threads: usize) -> CliResult<i32> {
    let data = load_data(cfg)?;
    let backbone = load_backbone(cfg, &data)?;
    let jobs: Vec<(Variant, u64)> = cfg.variants.iter().flat_map(|&v| cfg.seeds.iter().map(move |&s| (v, s))).collect();
    let outcomes = run_jobs(cfg, &data, &backbone, &jobs, threads)?;
    write_runs(cfg, out, "ablate.jsonl", &jobs, &outcomes, &cfg.variants)?;
    Ok(0)
}

/// The configured variant under every configured seed.
pub fn sweep(cfg: &RunConfig, out: &Path, threads: usize) -> CliResult<i32> {
    let data = load_data(cfg)?;
    let backbone = load_backbone(cfg, &data)?;
    let jobs: Vec<(Variant, u64)> = cfg.seeds.iter().map(|&s| (cfg.variant, s)).collect();
    let outcomes = run_jobs(cfg, &data, &backbone, &jobs, threads)?;
    write_runs(cfg, out, "sweep.jsonl", &jobs, &outcomes, &[cfg.variant])?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(extra: &[&str]) -> RunConfig {
        let mut o: Vec<String> = [
            "gen_graphs_per_class=6",
            "gen_min_nodes=5",
            "gen_max_nodes=7",
            "gen_feature_dim=3",
            "gin_hidden=4",
            "policy_hidden=4",
            "head_hidden=4",
            "epochs=2",
            "pretrain_epochs=1",
            "seeds=[1, 2]",
            "split=[0.5, 0.25, 0.25]",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        o.extend(extra.iter().map(|s| s.to_string()));
        RunConfig::load(None, &o).unwrap()
    }

    #[test]
    fn generated_dataset_matches_builtin() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(&[]);
        let manifest = gen(&cfg, dir.path()).unwrap();
        let from_disk = load_data(&RunConfig {
            dataset: Some(manifest.to_string_lossy().into_owned()),
            ..cfg.clone()
        })
        .unwrap();
        assert_eq!(from_disk, load_data(&cfg).unwrap());
    }

    #[test]
    fn task_mismatch_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(&[]);
        let manifest = gen(&cfg, dir.path()).unwrap();
        let node = RunConfig {
            dataset: Some(manifest.to_string_lossy().into_owned()),
            task: Task::Node,
            ..cfg
        };
        assert_eq!(load_data(&node).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn verify_zero_tolerance_fails_and_zero_cases_pass() {
        let dir = tempfile::tempdir().unwrap();
        let mut args = VerifyArgs {
            cases: 0,
            max_nodes: 6,
            layers: 2,
            tolerance: None,
            seed: 0,
            out: dir.path().to_path_buf(),
        };
        assert_eq!(verify(&args).unwrap(), 0);
        args.cases = 3;
        args.tolerance = Some(0.0);
        assert_eq!(verify(&args).unwrap_err().exit_code(), 2);
        args.tolerance = Some(-1.0);
        assert_eq!(verify(&args).unwrap_err().exit_code(), 1);
        args.tolerance = None;
        args.max_nodes = 1;
        assert_eq!(verify(&args).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn parallel_jobs_match_serial() {
        let cfg = tiny(&["variants=[\"head_only\", \"gpf\"]"]);
        let data = load_data(&cfg).unwrap();
        let bb = load_backbone(&cfg, &data).unwrap();
        let jobs = [(Variant::HeadOnly, 1), (Variant::Gpf, 1), (Variant::HeadOnly, 2)];
        let serial = run_jobs(&cfg, &data, &bb, &jobs, 1).unwrap();
        let parallel = run_jobs(&cfg, &data, &bb, &jobs, 3).unwrap();
        for (a, b) in serial.iter().zip(&parallel) {
            assert_eq!(a.metrics, b.metrics);
            assert_eq!(a.checkpoint, b.checkpoint);
        }
    }
}
