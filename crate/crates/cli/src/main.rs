//! `radnet`: the emulator pipeline as batch subcommands.
//!
//! Exit status: 0 success, 1 usage error, 2 data or format error,
//! 3 a `--check` threshold was not met.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use radnet::datapipe::{
    build_stratification, count_matching, load_dataset, sample_balanced, sample_uniform, save_dataset, split,
    Dataset,
};
use radnet::domain::{ModelKey, N_LAYERS};
use radnet::driver::{column_state, compare_trajectories, run_coupled, run_coupled_series, Emulator, Reference};
use radnet::emulator::{bank_load, benchmark, emulate_scene, reference_scene, save_field, EmulatorBank};
use radnet::evalkit::{
    compare_tracks, error_map, field_variable, pearson, scatter_csv, series_csv, temporal_series, track_series,
    tracks_csv, Variable,
};
use radnet::net::{load_weights, save_weights, MlpModel, ModelMeta};
use radnet::scenegen::{load_scene, save_scene, series_iter, Scene, SceneSeries};
use radnet::train::{finetune, train, TrainHistory};
use serde::{Deserialize, Serialize};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "radnet", version, about = "Neural radiation emulators: data, training, inference, evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scene series into a directory of scene files.
    Gen(GenArgs),
    /// Draw per-key datasets from a scene series.
    Sample(SampleArgs),
    /// Train one sub-model.
    Train(TrainArgs),
    /// Continue training an existing model on new data.
    Finetune(FinetuneArgs),
    /// Emulate (or compute with the reference) the radiation of a scene.
    Infer(InferArgs),
    /// Compare emulated and reference radiation: correlations, error maps, time series.
    Eval(EvalArgs),
    /// Track the vortex of a series, optionally against a second series.
    Track(TrackArgs),
    /// Run coupled columns under the reference and the emulator and compare.
    Simulate(SimulateArgs),
    /// Time emulator against reference inference.
    Bench(BenchArgs),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    /// Directory written by `gen`.
    #[arg(long)]
    series: PathBuf,
    /// Comma-separated model codes such as L2L,O1S; all eight by default.
    #[arg(long, value_delimiter = ',')]
    keys: Vec<ModelKey>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    key: ModelKey,
    /// Directory holding `{KEY}.train.rnds` and `{KEY}.val.rnds`.
    #[arg(long, conflicts_with_all = ["train", "val"])]
    data: Option<PathBuf>,
    #[arg(long, requires = "val")]
    train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    val: Option<PathBuf>,
    /// Exit 3 unless the best validation NRMSE meets `eval.max_val_nrmse`.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct FinetuneArgs {
    #[command(flatten)]
    common: Common,
    /// Weights file of the model to start from.
    #[arg(long)]
    base: PathBuf,
    /// Dataset to fine-tune on; split by the sampling settings unless `--val` is given.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    common: Common,
    /// Directory of eight weight files; required unless `--reference`.
    #[arg(long, required_unless_present = "reference")]
    bank: Option<PathBuf>,
    #[arg(long)]
    scene: PathBuf,
    /// Use the reference scheme instead of the emulator.
    #[arg(long)]
    reference: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    bank: PathBuf,
    /// A single scene file or a series directory.
    #[arg(long)]
    scene: PathBuf,
    /// Exit 3 unless SWDNB, LWDNB and HR_COL correlations reach `eval.min_pearson`.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct TrackArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    series: PathBuf,
    /// Second series to compare against.
    #[arg(long)]
    other: Option<PathBuf>,
    /// Exit 3 unless the separation stays within `eval.max_track_separation`.
    #[arg(long, requires = "other")]
    check: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    bank: PathBuf,
    /// Scene giving the initial columns.
    #[arg(long)]
    scene: PathBuf,
    /// Exit 3 unless every column's skin-temperature error stays within `eval.max_t_skin_error`.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Writes bench.csv and the effective config here; prints the CSV otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    /// Overrides `emulator.bench_reps`.
    #[arg(long)]
    reps: Option<usize>,
    /// Exit 3 unless the speedup reaches `eval.min_speedup`.
    #[arg(long)]
    check: bool,
}

enum Failure {
    Usage(String),
    Data(String),
    Check(String),
}

impl From<radnet::Error> for Failure {
    fn from(e: radnet::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Sample(a) => sample(a),
        Command::Train(a) => train_cmd(a),
        Command::Finetune(a) => finetune_cmd(a),
        Command::Infer(a) => infer(a),
        Command::Eval(a) => eval(a),
        Command::Track(a) => track(a),
        Command::Simulate(a) => simulate(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Check(m)) => {
            eprintln!("check failed: {m}");
            ExitCode::from(3)
        }
    }
}

/// Loads the config, creates the output directory and echoes the
/// effective config into it.
fn setup(config: Option<&Path>, out: &Path) -> Result<RunConfig, Failure> {
    let cfg = RunConfig::load(config).map_err(Failure::Data)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.json"), cfg.to_json())?;
    Ok(cfg)
}

/// Fails with the path in the message when an input is missing.
fn exists(path: &Path) -> Result<&Path, Failure> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Failure::Data(format!("{}: no such file or directory", path.display())))
    }
}

fn write(out: &Path, name: &str, text: &str) -> Outcome {
    fs::write(out.join(name), text)?;
    Ok(())
}

fn scene_file(k: usize) -> String {
    format!("scene_{k:04}.rnds")
}

fn save_series(series: &SceneSeries, dir: &Path) -> Outcome {
    for (k, s) in series.scenes.iter().enumerate() {
        save_scene(s, dir.join(scene_file(k)))?;
    }
    Ok(())
}

/// A series directory written by `gen`, or a single scene file.
fn load_series(path: &Path) -> Result<SceneSeries, Failure> {
    if path.is_file() {
        return Ok(SceneSeries { scenes: vec![load_scene(path)?] });
    }
    if !path.is_dir() {
        return Err(Failure::Data(format!("{}: no such file or directory", path.display())));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            name.starts_with("scene_") && name.ends_with(".rnds")
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Data(format!("{}: no scene_*.rnds files", path.display())));
    }
    let scenes = files.iter().map(load_scene).collect::<radnet::Result<_>>()?;
    Ok(SceneSeries { scenes })
}

fn gen(a: GenArgs) -> Outcome {
    let cfg = setup(a.common.config.as_deref(), &a.common.out)?;
    let sc = &cfg.scene;
    let track = sc.vortex.map(|v| v.specs(sc.steps));
    let scenes = series_iter(&sc.spec, sc.t0, sc.dt, sc.steps, track.as_deref())?;
    let series = if sc.coupled {
        run_coupled_series(scenes, &Reference(cfg.emulator.reference), &cfg.driver.surface)?.0
    } else {
        SceneSeries { scenes: scenes.collect::<radnet::Result<_>>()? }
    };
    save_series(&series, &a.common.out)?;
    println!("wrote {} scenes to {}", series.len(), a.common.out.display());
    Ok(())
}

fn sample(a: SampleArgs) -> Outcome {
    let cfg = setup(a.common.config.as_deref(), &a.common.out)?;
    let sp = cfg.sampling;
    let series = load_series(&a.series)?;
    let explicit = !a.keys.is_empty();
    let keys = if explicit { a.keys.clone() } else { ModelKey::all().to_vec() };
    let index = if sp.balanced { Some(build_stratification(&series)?) } else { None };
    let mut summary = String::from("key,available,drawn,train,val\n");
    for key in keys {
        let available = count_matching(&series, key);
        if available == 0 && !explicit {
            eprintln!("skipping {key}: no matching columns");
            continue;
        }
        let n = sp.n.unwrap_or((available as f64 * 0.9) as usize);
        let ds = match &index {
            Some(ix) => sample_balanced(ix, &series, key, n, sp.seed, &cfg.emulator.reference)?,
            None => sample_uniform(&series, key, n, sp.seed, &cfg.emulator.reference)?,
        };
        let (tr, va) = split(&ds, sp.train_fraction, sp.split_seed)?;
        save_dataset(&ds, a.common.out.join(format!("{key}.rnds")))?;
        save_dataset(&tr, a.common.out.join(format!("{key}.train.rnds")))?;
        save_dataset(&va, a.common.out.join(format!("{key}.val.rnds")))?;
        let _ = writeln!(summary, "{key},{available},{},{},{}", ds.len(), tr.len(), va.len());
    }
    write(&a.common.out, "sampling.csv", &summary)?;
    print!("{summary}");
    Ok(())
}

/// Metadata kept next to each weights file.
#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    key: String,
    #[serde(flatten)]
    meta: ModelMeta,
}

fn sidecar_path(weights: &Path) -> PathBuf {
    weights.with_extension("meta.json")
}

fn write_model(model: &MlpModel, hist: &TrainHistory, out: &Path) -> Result<PathBuf, Failure> {
    let path = out.join(format!("{}.rnnw", model.key));
    save_weights(model, &path)?;
    hist.write_csv(out.join(format!("{}.history.csv", model.key)))?;
    let side = Sidecar { key: model.key.to_string(), meta: model.meta.clone() };
    fs::write(sidecar_path(&path), serde_json::to_string_pretty(&side).expect("serialises") + "\n")?;
    Ok(path)
}

fn check_nrmse(hist: &TrainHistory, limit: f64) -> Outcome {
    match hist.best_nrmse() {
        Some(v) if v <= limit => Ok(()),
        Some(v) => Err(Failure::Check(format!("best validation NRMSE {v:.4} > {limit}"))),
        None => Err(Failure::Check("no epoch was run".into())),
    }
}

fn report_training(model: &MlpModel, hist: &TrainHistory, path: &Path) {
    println!(
        "{}: {} epochs, best val NRMSE {:.5}, stop {:?} -> {}",
        model.key,
        hist.epochs(),
        hist.best_nrmse().unwrap_or(f64::NAN),
        hist.stop_reason,
        path.display()
    );
}

fn train_cmd(a: TrainArgs) -> Outcome {
    let (tr_path, va_path) = match (&a.data, &a.train, &a.val) {
        (Some(d), None, None) => (d.join(format!("{}.train.rnds", a.key)), d.join(format!("{}.val.rnds", a.key))),
        (None, Some(t), Some(v)) => (t.clone(), v.clone()),
        _ => return Err(Failure::Usage("give either --data DIR or both --train and --val".into())),
    };
    let cfg = setup(a.common.config.as_deref(), &a.common.out)?;
    let (tr, va) = (load_dataset(exists(&tr_path)?)?, load_dataset(exists(&va_path)?)?);
    let (model, hist) = train(a.key, &tr, &va, &cfg.train)?;
    let path = write_model(&model, &hist, &a.common.out)?;
    report_training(&model, &hist, &path);
    if a.check {
        check_nrmse(&hist, cfg.eval.max_val_nrmse)?;
    }
    Ok(())
}

fn finetune_cmd(a: FinetuneArgs) -> Outcome {
    let cfg = setup(a.common.config.as_deref(), &a.common.out)?;
    let mut base = load_weights(exists(&a.base)?)?;
    if let Ok(text) = fs::read_to_string(sidecar_path(&a.base)) {
        let side: Sidecar = serde_json::from_str(&text)
            .map_err(|e| Failure::Data(format!("{}: {e}", sidecar_path(&a.base).display())))?;
        base.meta = side.meta;
    }
    let data: Dataset = load_dataset(exists(&a.data)?)?;
    let (tr, va) = match &a.val {
        Some(v) => (data, load_dataset(exists(v)?)?),
        None => split(&data, cfg.sampling.train_fraction, cfg.sampling.split_seed)?,
    };
    let (mut model, hist) = finetune(&base, &tr, &va, &cfg.train)?;
    let lineage = model.meta.lineage.take().unwrap_or_default();
    model.meta.lineage = Some(format!("{lineage}; base file {}", a.base.display()));
    let path = write_model(&model, &hist, &a.common.out)?;
    report_training(&model, &hist, &path);
    if a.check {
        check_nrmse(&hist, cfg.eval.max_val_nrmse)?;
    }
    Ok(())
}

fn load_bank(dir: &Path) -> Result<EmulatorBank, Failure> {
    if !dir.is_dir() {
        return Err(Failure::Data(format!("{}: not a directory of weight files", dir.display())));
    }
    Ok(bank_load(dir)?)
}

fn infer(a: InferArgs) -> Outcome {
    let cfg = setup(a.common.config.as_deref(), &a.common.out)?;
    let scene = load_scene(exists(&a.scene)?)?;
    let field = if a.reference {
        reference_scene(&scene, &cfg.emulator.reference)?
    } else {
        let bank = load_bank(a.bank.as_deref().expect("clap enforces --bank"))?;
        emulate_scene(&bank, &scene)?
    };
    save_field(&field, a.common.out.join("field.rnds"))?;
    write(&a.common.out, "field.csv", &field.to_csv(&scene))?;
    println!("wrote field for {} columns", scene.len());
    Ok(())
}

const EVAL_VARIABLES: [Variable; 9] = [
    Variable::LwUpTop,
    Variable::LwUpBottom,
    Variable::LwDownBottom,
    Variable::SwUpTop,
    Variable::SwDownBottom,
    Variable::SwUpBottom,
    Variable::ColumnHeating(radnet::domain::Mode::Lw),
    Variable::ColumnHeating(radnet::domain::Mode::Sw),
    Variable::TotalColumnHeating,
];

const CHECKED_VARIABLES: [Variable; 3] = [Variable::SwDownBottom, Variable::LwDownBottom, Variable::TotalColumnHeating];

fn eval(a: EvalArgs) -> Outcome {
    let cfg = setup(a.common.config.as_deref(), &a.common.out)?;
    let bank = load_bank(&a.bank)?;
    let series = load_series(&a.scene)?;
    let out = &a.common.out;
    let first: &Scene = &series.scenes[0];
    let grid = first.columns[0].grid.clone();
    let (nx, ny) = (first.nx, first.ny);

    // per variable: (timestamp, values) for every scene
    let mut refs: Vec<Vec<(i64, Vec<f64>)>> = vec![Vec::new(); EVAL_VARIABLES.len()];
    let mut emus = refs.clone();
    for scene in &series.scenes {
        let r = reference_scene(scene, &cfg.emulator.reference)?;
        let e = emulate_scene(&bank, scene)?;
        for (v, var) in EVAL_VARIABLES.iter().enumerate() {
            refs[v].push((scene.timestamp, field_variable(&r, *var, &grid)?));
            emus[v].push((scene.timestamp, field_variable(&e, *var, &grid)?));
        }
    }

    let mut corr = String::from("variable,pearson\n");
    let mut summaries = String::from("variable,max_abs,mean_abs,max_pct,mean_pct,frac_below_0_2_pct\n");
    let mut failures = Vec::new();
    for (v, var) in EVAL_VARIABLES.iter().enumerate() {
        let name = var.name();
        let pooled = |s: &[(i64, Vec<f64>)]| s.iter().flat_map(|(_, x)| x.iter().copied()).collect::<Vec<_>>();
        let (r, e) = (pooled(&refs[v]), pooled(&emus[v]));
        let rho = pearson(&r, &e).ok();
        let _ = writeln!(corr, "{name},{}", rho.map_or("nan".into(), |p| p.to_string()));
        if CHECKED_VARIABLES.contains(var) {
            match rho {
                Some(p) if p >= cfg.eval.min_pearson => {}
                Some(p) => failures.push(format!("{name} pearson {p:.4} < {}", cfg.eval.min_pearson)),
                None => failures.push(format!("{name} pearson undefined")),
            }
        }
        let map = error_map(nx, ny, &refs[v][0].1, &emus[v][0].1, var.floor())?;
        let m = &map.summary;
        let _ = writeln!(summaries, "{name},{},{},{},{},{}", m.max_abs, m.mean_abs, m.max_pct, m.mean_pct, m.frac_below_0_2_pct);
        write(out, &format!("errmap_{name}.csv"), &map.to_csv())?;
        write(out, &format!("scatter_{name}.csv"), &scatter_csv(&name, &r, &e))?;
        if series.len() > 1 {
            write(out, &format!("temporal_{name}.csv"), &series_csv(&temporal_series(&refs[v], &emus[v])?))?;
        }
    }
    write(out, "pearson.csv", &corr)?;
    write(out, "error_summary.csv", &summaries)?;
    print!("{corr}");
    if a.check && !failures.is_empty() {
        return Err(Failure::Check(failures.join("; ")));
    }
    Ok(())
}

fn track(a: TrackArgs) -> Outcome {
    let cfg = setup(a.common.config.as_deref(), &a.common.out)?;
    let series = load_series(&a.series)?;
    let radius = cfg.eval.refine_radius;
    match &a.other {
        None => {
            let t = track_series(&series, radius)?;
            write(&a.common.out, "track.csv", &tracks_csv(&t))?;
            println!("tracked {} steps", t.len());
        }
        Some(other) => {
            let cmp = compare_tracks(&series, &load_series(other)?, radius)?;
            write(&a.common.out, "track_comparison.csv", &cmp.to_csv())?;
            let sep = cmp.max_separation();
            println!("max separation {sep} cells over {} steps", cmp.separation.len());
            if a.check && sep > cfg.eval.max_track_separation {
                return Err(Failure::Check(format!("separation {sep} > {}", cfg.eval.max_track_separation)));
            }
        }
    }
    Ok(())
}

/// Eight cells along the diagonal, corners included.
fn default_cells(nx: usize, ny: usize) -> Vec<(usize, usize)> {
    (0..8).map(|k| (k * (nx - 1) / 7, k * (ny - 1) / 7)).collect()
}

fn simulate(a: SimulateArgs) -> Outcome {
    let cfg = setup(a.common.config.as_deref(), &a.common.out)?;
    let bank = load_bank(&a.bank)?;
    let scene = load_scene(exists(&a.scene)?)?;
    let d = &cfg.driver;
    let cells = if d.cells.is_empty() { default_cells(scene.nx, scene.ny) } else { d.cells.clone() };
    if let Some(&(i, j)) = cells.iter().find(|&&(i, j)| i >= scene.nx || j >= scene.ny) {
        return Err(Failure::Usage(format!("cell ({i}, {j}) outside the {}x{} scene", scene.nx, scene.ny)));
    }
    let layers = [0, N_LAYERS / 2, N_LAYERS - 1];
    let reference = Reference(cfg.emulator.reference);
    let mut summary = String::from("i,j,surface,max_t_skin_abs_err,time_of_max,max_t_layer_abs_err,clamps_ref,clamps_emu\n");
    let mut worst: f64 = 0.0;
    for (i, j) in cells {
        let init = column_state(&scene, i, j);
        let r = run_coupled(&init, &reference, d.steps, d.dt, &d.surface)?;
        let e = run_coupled(&init, &Emulator(&bank), d.steps, d.dt, &d.surface)?;
        let div = compare_trajectories(&r, &e)?;
        write(&a.common.out, &format!("traj_ref_{i}_{j}.csv"), &r.to_csv(&layers))?;
        write(&a.common.out, &format!("traj_emu_{i}_{j}.csv"), &e.to_csv(&layers))?;
        write(&a.common.out, &format!("divergence_{i}_{j}.csv"), &div.to_csv())?;
        let _ = writeln!(
            summary,
            "{i},{j},{:?},{},{},{},{},{}",
            init.column.surface,
            div.max_t_skin_abs_err,
            div.time_of_max_t_skin,
            div.max_t_layer_abs_err,
            r.clamp_count,
            e.clamp_count
        );
        worst = worst.max(div.max_t_skin_abs_err);
    }
    write(&a.common.out, "simulate.csv", &summary)?;
    print!("{summary}");
    if a.check && worst > cfg.eval.max_t_skin_error {
        return Err(Failure::Check(format!("skin temperature error {worst:.3} K > {}", cfg.eval.max_t_skin_error)));
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Outcome {
    let cfg = match &a.out {
        Some(out) => setup(a.config.as_deref(), out)?,
        None => RunConfig::load(a.config.as_deref()).map_err(Failure::Data)?,
    };
    let reps = a.reps.unwrap_or(cfg.emulator.bench_reps);
    if reps < 3 {
        return Err(Failure::Usage(format!("--reps must be at least 3, got {reps}")));
    }
    let bank = load_bank(&a.bank)?;
    let scene = load_scene(exists(&a.scene)?)?;
    let report = benchmark(&bank, &scene, reps, &cfg.emulator.reference)?;
    let csv = report.to_csv();
    match &a.out {
        Some(out) => write(out, "bench.csv", &csv)?,
        None => print!("{csv}"),
    }
    if a.out.is_some() {
        println!("speedup {:.3}", report.speedup);
    }
    if a.check && report.speedup < cfg.eval.min_speedup {
        return Err(Failure::Check(format!("speedup {:.3} < {}", report.speedup, cfg.eval.min_speedup)));
    }
    Ok(())
}
