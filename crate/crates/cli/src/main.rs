//! `dmn`: data generation, training, evaluation, prediction and
//! multiscale concatenation for material networks.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O error.

mod materials;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dmn_core::doe::{generate_dataset, Oracle, Sample};
use dmn_core::io::{
    load_checkpoint, load_manifest, load_model, load_model_file, load_tagged_json, read_dataset,
    save_checkpoint, save_manifest, save_model, save_tagged_json, write_atomic, write_dataset,
    DatasetHeader, ModelFile, RunManifest, FORMAT_VERSION,
};
use dmn_core::material::{IsotropicElastic, MaterialModel};
use dmn_core::network::{CompressOptions, MaterialNetwork};
use dmn_core::online::{
    concatenate, Assembly, DofReport, Finite, Kinematics, LeafLaw, LoadPath, OpCounter,
    PathKinematics, Rve, SmallStrain, SolveConfig,
};
use dmn_core::train::{evaluate, TrainConfig, Trainer};
use dmn_core::{DmnError, Result};
use materials::{initial_stiffness, require_phase2, MaterialsFile};
use serde::{Deserialize, Serialize};

pub const ASSEMBLY_FORMAT: &str = "dmn-assembly";
const MANIFEST_NAME: &str = "manifest.json";

#[derive(Parser)]
#[command(
    name = "dmn",
    version,
    about = "Material network training and prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Sample phase pairs and write training and test datasets.
    GenData(GenDataArgs),
    /// Train a network on a dataset pair.
    Train(TrainArgs),
    /// Report dataset errors or the homogenized stiffness of a model.
    Eval(EvalArgs),
    /// Run a load path through a model or assembly.
    Predict(PredictArgs),
    /// Graft one network onto a phase of another.
    Concat(ConcatArgs),
    /// Write leaf orientations and the weight treemap of a model.
    Export(ExportArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum OracleKind {
    Teacher,
    Laminate,
    Import,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct GenDataArgs {
    #[arg(long, value_enum, default_value_t = OracleKind::Teacher)]
    oracle: OracleKind,
    /// Teacher model; a random teacher of `--teacher-depth` is drawn if absent.
    #[arg(long)]
    teacher: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    teacher_depth: usize,
    /// Phase-1 fraction of the laminate oracle.
    #[arg(long, default_value_t = 0.5)]
    f1: f64,
    /// Externally computed dataset for `--oracle import`.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    count: usize,
    /// Train and test sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [400, 100])]
    split: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value_t = 5000)]
    epochs: usize,
    /// Activation learning rate.
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.02)]
    lr_angle: f64,
    #[arg(long, default_value_t = 0.001)]
    lambda: f64,
    #[arg(long, default_value_t = 20)]
    batch: usize,
    /// Compression period in epochs; 0 disables.
    #[arg(long, default_value_t = 10)]
    compress_every: usize,
    /// Relative tolerance of the sibling merge test.
    #[arg(long, default_value_t = CompressOptions::default().tol)]
    tol: f64,
    /// Epochs at which the learning rates double.
    #[arg(long, value_delimiter = ',')]
    restart_double_at: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    log_every: usize,
    /// Checkpoint period in epochs; 0 writes only the final checkpoint.
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
    /// Continue from a checkpoint instead of a fresh network.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset to score.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Materials whose initial stiffness is homogenized.
    #[arg(long)]
    materials: Option<PathBuf>,
    /// Optional JSON result file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct PredictArgs {
    /// Model file; exclusive with `--assembly`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Assembly file written by `concat`.
    #[arg(long)]
    assembly: Option<PathBuf>,
    #[arg(long)]
    materials: PathBuf,
    #[arg(long)]
    path: PathBuf,
    /// Linearized kinematics.
    #[arg(long)]
    small_strain: bool,
    /// Solve an assembly as one tree instead of sub-cycling the grafts.
    #[arg(long)]
    flatten: bool,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    max_iterations: usize,
    #[arg(long, default_value_t = 4)]
    max_cutbacks: usize,
    /// History CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct ConcatArgs {
    #[arg(long)]
    root: PathBuf,
    #[arg(long)]
    graft: PathBuf,
    /// Root phase whose leaves receive the graft.
    #[arg(long)]
    phase: u8,
    /// Assembly file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct ReplayArgs {
    manifest: PathBuf,
}

/// Root and graft networks with the grafted phase.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct AssemblyFile {
    format: String,
    version: u32,
    target_phase: u8,
    dofs: DofReport,
    root: ModelFile,
    graft: ModelFile,
    #[serde(default)]
    manifest: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    let start = Instant::now();
    let snapshot = serde_json::to_value(&cmd)?;
    let finish = |mut m: RunManifest, path: &Path| -> Result<()> {
        m.config = snapshot.clone();
        m.elapsed_seconds = start.elapsed().as_secs_f64();
        save_manifest(path, &m)
    };
    match cmd {
        Command::GenData(a) => gen_data(&a, finish),
        Command::Train(a) => train(&a, finish),
        Command::Eval(a) => eval(&a),
        Command::Predict(a) => predict(&a, finish),
        Command::Concat(a) => concat(&a, finish),
        Command::Export(a) => export(&a, finish),
        Command::Replay(a) => {
            let m = load_manifest(&a.manifest)?;
            let cmd: Command = serde_json::from_value(m.config)
                .map_err(|e| DmnError::Format(format!("manifest config is not a command: {e}")))?;
            if matches!(cmd, Command::Replay(_)) {
                return Err(DmnError::Validation(
                    "a replay manifest cannot be replayed".into(),
                ));
            }
            run(cmd)
        }
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p)?;
    Ok(())
}

/// Manifest path written next to a single-file output.
fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

// ---------------------------------------------------------------------------

fn gen_data(a: &GenDataArgs, finish: impl Fn(RunManifest, &Path) -> Result<()>) -> Result<()> {
    if a.split.len() != 2 || a.split[0] + a.split[1] != a.count {
        return Err(DmnError::Validation(format!(
            "split {:?} must have two sizes summing to count {}",
            a.split, a.count
        )));
    }
    let mut m = RunManifest::new("gen-data", serde_json::Value::Null, Some(a.seed));
    let (train, test, name) = match a.oracle {
        OracleKind::Import => {
            let input = a
                .input
                .as_ref()
                .ok_or_else(|| DmnError::Validation("--oracle import needs --input".into()))?;
            let (_, samples) = read_dataset(input)?;
            if samples.len() != a.count {
                return Err(DmnError::Validation(format!(
                    "import holds {} samples, --count is {}",
                    samples.len(),
                    a.count
                )));
            }
            m.inputs.push(path_str(input));
            let mut samples: Vec<Sample> = samples;
            for (i, s) in samples.iter_mut().enumerate() {
                s.id = i;
            }
            let test = samples.split_off(a.split[0]);
            (samples, test, "import")
        }
        OracleKind::Laminate => {
            let oracle = Oracle::Laminate { f1: a.f1 };
            let (tr, te) = generate_dataset(&oracle, a.count, a.split[0], a.seed)?;
            (tr, te, oracle.name())
        }
        OracleKind::Teacher => {
            let teacher = match &a.teacher {
                Some(p) => {
                    m.inputs.push(path_str(p));
                    load_model(p)?
                }
                None => MaterialNetwork::random_seeded(a.teacher_depth, a.seed),
            };
            create_dir(&a.out)?;
            if a.teacher.is_none() {
                let p = a.out.join("teacher.json");
                save_model(
                    &p,
                    &teacher,
                    serde_json::json!({ "manifest": MANIFEST_NAME }),
                )?;
                m.outputs.push(path_str(&p));
            }
            let oracle = Oracle::Teacher(teacher);
            let (tr, te) = generate_dataset(&oracle, a.count, a.split[0], a.seed)?;
            (tr, te, oracle.name())
        }
    };
    create_dir(&a.out)?;
    for (split, samples) in [("train", &train), ("test", &test)] {
        let p = a.out.join(format!("{split}.jsonl"));
        let header = DatasetHeader::new(
            split,
            samples.len(),
            a.seed,
            name,
            Some(MANIFEST_NAME.into()),
        );
        write_dataset(&p, &header, samples)?;
        m.outputs.push(path_str(&p));
    }
    println!(
        "wrote {} training and {} test samples to {}",
        train.len(),
        test.len(),
        a.out.display()
    );
    finish(m, &a.out.join(MANIFEST_NAME))
}

// ---------------------------------------------------------------------------

fn train(a: &TrainArgs, finish: impl Fn(RunManifest, &Path) -> Result<()>) -> Result<()> {
    let (_, train) = read_dataset(&a.train)?;
    let (_, test) = read_dataset(&a.test)?;
    let mut m = RunManifest::new("train", serde_json::Value::Null, Some(a.seed));
    m.inputs.extend([path_str(&a.train), path_str(&a.test)]);
    let single = train.iter().all(|s| s.c_p2.is_none());
    let mut trainer = match &a.resume {
        Some(p) => {
            m.inputs.push(path_str(p));
            let mut t = load_checkpoint(p)?;
            t.config.epochs = a.epochs;
            t
        }
        None => {
            let mut net = MaterialNetwork::random_seeded(a.depth, a.seed);
            if single {
                net.phases.iter_mut().for_each(|p| *p = 1);
            }
            let config = TrainConfig {
                batch_size: a.batch,
                epochs: a.epochs,
                lr_z: a.lr,
                lr_angle: a.lr_angle,
                lambda: a.lambda,
                compress_every: a.compress_every,
                compress: CompressOptions {
                    tol: a.tol,
                    ..Default::default()
                },
                seed: a.seed,
                restart_double_at: a.restart_double_at.clone(),
                log_every: a.log_every,
                ..Default::default()
            };
            Trainer::new(net, config)?
        }
    };
    create_dir(&a.out)?;
    let ckpt = a.out.join("checkpoint.json");
    let every = a.checkpoint_every;
    trainer.run(&train, &test, |t| {
        if let Some(r) = t.report.last().filter(|r| r.epoch == t.epoch) {
            eprintln!(
                "epoch {:>6}  train {:.4}%  test {:.4}%  N_a {}",
                r.epoch,
                100.0 * r.train_error,
                100.0 * r.test_error,
                r.active_leaves
            );
        }
        if every > 0 && t.epoch % every == 0 {
            save_checkpoint(&ckpt, t)?;
        }
        Ok(())
    })?;
    save_checkpoint(&ckpt, &trainer)?;

    let tr = evaluate(&trainer.net, &train)?;
    let te = evaluate(&trainer.net, &test)?;
    let w = trainer.net.weights()?;
    let summary = serde_json::json!({
        "train_error": tr.mean,
        "test_error": te.mean,
        "test_max_error": te.max,
        "vf1": w.vf1,
        "active_leaves": trainer.net.active_leaves(),
        "epochs": trainer.epoch,
    });
    let model = a.out.join("model.json");
    save_model(
        &model,
        &trainer.net,
        serde_json::json!({ "manifest": MANIFEST_NAME, "summary": summary }),
    )?;
    let report = a.out.join("report.csv");
    write_atomic(&report, trainer.report.to_csv().as_bytes())?;
    m.outputs
        .extend([path_str(&model), path_str(&report), path_str(&ckpt)]);

    println!(
        "{:>12} {:>12} {:>12} {:>8} {:>5}",
        "train_err_%", "test_err_%", "max_test_%", "vf1", "N_a"
    );
    println!(
        "{:>12.4} {:>12.4} {:>12.4} {:>8.4} {:>5}",
        100.0 * tr.mean,
        100.0 * te.mean,
        100.0 * te.max,
        w.vf1,
        trainer.net.active_leaves()
    );
    finish(m, &a.out.join(MANIFEST_NAME))
}

// ---------------------------------------------------------------------------

fn eval(a: &EvalArgs) -> Result<()> {
    let net = load_model(&a.model)?;
    let mut out = serde_json::Map::new();
    if let Some(d) = &a.data {
        let (_, samples) = read_dataset(d)?;
        let e = evaluate(&net, &samples)?;
        println!(
            "mean error {:.6}%  max error {:.6}%  ({} samples)",
            100.0 * e.mean,
            100.0 * e.max,
            samples.len()
        );
        out.insert("mean_error".into(), e.mean.into());
        out.insert("max_error".into(), e.max.into());
    }
    if let Some(p) = &a.materials {
        let mats = MaterialsFile::load(p)?;
        let c1 = initial_stiffness(&mats.phase1)?;
        let c2 = match require_phase2(&mats, !net.is_single_phase())? {
            Some(m) => Some(initial_stiffness(&m)?),
            None => None,
        };
        let c = net.forward_linear(&c1, c2.as_ref())?.output;
        println!("homogenized stiffness (Mandel):");
        for i in 0..6 {
            let row: Vec<String> = (0..6).map(|j| format!("{:>14.6e}", c[(i, j)])).collect();
            println!("{}", row.join(" "));
        }
        out.insert(
            "stiffness".into(),
            serde_json::to_value(dmn_core::io::mat6_rows::to_rows(&c))?,
        );
    }
    if out.is_empty() {
        return Err(DmnError::Validation(
            "eval needs --data or --materials".into(),
        ));
    }
    if let Some(o) = &a.out {
        out.insert("format".into(), "dmn-eval".into());
        out.insert("version".into(), FORMAT_VERSION.into());
        save_tagged_json(o, &serde_json::Value::Object(out))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------

fn leaf_law<K: Kinematics<D>, const D: usize>(m: &MaterialModel) -> LeafLaw<K, D> {
    LeafLaw::Material(m.clone())
}

fn build<K: Kinematics<D>, const D: usize>(
    a: &PredictArgs,
    mats: &MaterialsFile,
) -> Result<Rve<K, D>> {
    match (&a.model, &a.assembly) {
        (Some(p), None) => {
            let net = load_model(p)?;
            let p2 = require_phase2(mats, !net.is_single_phase())?;
            Rve::new(&net, leaf_law(&mats.phase1), p2.as_ref().map(leaf_law))
        }
        (None, Some(p)) => {
            let f: AssemblyFile = load_tagged_json(p, ASSEMBLY_FORMAT)?;
            let (root, graft) = (f.root.network()?, f.graft.network()?);
            let other = mats.other.as_ref().ok_or_else(|| {
                DmnError::Validation("assembly materials need an `other` entry".into())
            })?;
            let p2 = require_phase2(mats, !graft.is_single_phase())?;
            let asm: Assembly<K, D> = concatenate(
                &root,
                &graft,
                f.target_phase,
                leaf_law(other),
                leaf_law(&mats.phase1),
                p2.as_ref().map(leaf_law),
            )?;
            Ok(if a.flatten {
                asm.rve.flattened()
            } else {
                asm.rve
            })
        }
        _ => Err(DmnError::Validation(
            "predict needs exactly one of --model and --assembly".into(),
        )),
    }
}

fn run_predict<K: PathKinematics<D>, const D: usize>(
    a: &PredictArgs,
    mats: &MaterialsFile,
    path: &LoadPath,
) -> Result<(String, Option<DmnError>, usize)> {
    let rve: Rve<K, D> = build(a, mats)?;
    let cfg = SolveConfig {
        tol: a.tol,
        max_iterations: a.max_iterations,
        max_cutbacks: a.max_cutbacks,
    };
    let out = rve.run_path(path, &cfg, &OpCounter::default(), |r| {
        eprintln!(
            "step {:>5}  F11 {:.6}  P11 {:.6e}  iterations {}",
            r.step, r.f[0], r.p[0], r.iterations
        );
    })?;
    Ok((out.to_csv(), out.error, out.rows.len()))
}

fn predict(a: &PredictArgs, finish: impl Fn(RunManifest, &Path) -> Result<()>) -> Result<()> {
    let mats = MaterialsFile::load(&a.materials)?;
    let path: LoadPath = load_tagged_json(&a.path, dmn_core::online::LOAD_PATH_FORMAT)?;
    let (csv, error, rows) = if a.small_strain {
        run_predict::<SmallStrain, 6>(a, &mats, &path)?
    } else {
        run_predict::<Finite, 9>(a, &mats, &path)?
    };
    let mut m = RunManifest::new("predict", serde_json::Value::Null, None);
    m.inputs.extend(
        [
            a.model.as_ref(),
            a.assembly.as_ref(),
            Some(&a.materials),
            Some(&a.path),
        ]
        .into_iter()
        .flatten()
        .map(|p| path_str(p)),
    );
    m.outputs.push(path_str(&a.out));
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_atomic(&a.out, csv.as_bytes())?;
    finish(m, &sidecar(&a.out))?;
    match error {
        None => {
            println!("wrote {rows} rows to {}", a.out.display());
            Ok(())
        }
        Some(e) => {
            eprintln!("kept {rows} rows in {} before the failure", a.out.display());
            Err(e)
        }
    }
}

// ---------------------------------------------------------------------------

fn concat(a: &ConcatArgs, finish: impl Fn(RunManifest, &Path) -> Result<()>) -> Result<()> {
    let root = load_model_file(&a.root)?;
    let graft = load_model_file(&a.graft)?;
    let (rn, gn) = (root.network()?, graft.network()?);
    // Validates the phase and the networks before any output is written.
    let elastic = || {
        LeafLaw::<Finite, 9>::Material(MaterialModel::IsotropicElastic(IsotropicElastic {
            e: 1.0,
            nu: 0.3,
        }))
    };
    let asm = concatenate(&rn, &gn, a.phase, elastic(), elastic(), Some(elastic()))?;
    let d = asm.dofs;
    println!(
        "root: {} active leaves of phase {} and {} of the other phase",
        d.root_target, a.phase, d.root_other
    );
    println!("graft: {} active leaves", d.graft_leaves);
    println!(
        "two-scale DOFs:   {} + {} = {}",
        d.root_target, d.root_other, d.two_scale
    );
    println!(
        "three-scale DOFs: {} x {} + {} = {}",
        d.root_target, d.graft_leaves, d.root_other, d.three_scale
    );
    if let Some(out) = &a.out {
        let manifest = sidecar(out);
        let file = AssemblyFile {
            format: ASSEMBLY_FORMAT.into(),
            version: FORMAT_VERSION,
            target_phase: a.phase,
            dofs: d,
            root,
            graft,
            manifest: Some(file_name(&manifest)),
        };
        save_tagged_json(out, &file)?;
        let mut m = RunManifest::new("concat", serde_json::Value::Null, None);
        m.inputs.extend([path_str(&a.root), path_str(&a.graft)]);
        m.outputs.push(path_str(out));
        finish(m, &manifest)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------

fn export(a: &ExportArgs, finish: impl Fn(RunManifest, &Path) -> Result<()>) -> Result<()> {
    let net = load_model(&a.model)?;
    create_dir(&a.out)?;
    let orient = net.export_orientations()?;
    let treemap = net.export_treemap()?;
    let mut csv = String::from(
        "leaf,phase,weight,fraction,alpha,beta,gamma,q11,q12,q13,q21,q22,q23,q31,q32,q33\n",
    );
    for o in &orient {
        let q: Vec<String> = o
            .rotation
            .iter()
            .flatten()
            .map(|v| format!("{v:.10e}"))
            .collect();
        csv.push_str(&format!(
            "{},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{}\n",
            o.leaf,
            o.phase,
            o.weight,
            o.fraction,
            o.angles.alpha,
            o.angles.beta,
            o.angles.gamma,
            q.join(",")
        ));
    }
    let po = a.out.join("orientations.csv");
    let pt = a.out.join("treemap.json");
    write_atomic(&po, csv.as_bytes())?;
    let tm = serde_json::json!({
        "format": "dmn-treemap",
        "version": FORMAT_VERSION,
        "manifest": MANIFEST_NAME,
        "treemap": treemap,
    });
    save_tagged_json(&pt, &tm)?;
    println!(
        "{} active leaves, vf1 {:.4}; wrote {} and {}",
        treemap.active_leaves,
        treemap.vf1,
        po.display(),
        pt.display()
    );
    let mut m = RunManifest::new("export", serde_json::Value::Null, None);
    m.inputs.push(path_str(&a.model));
    m.outputs.extend([path_str(&po), path_str(&pt)]);
    finish(m, &a.out.join(MANIFEST_NAME))
}
