mod args;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use paddyforge::augment::AugPolicy;
use paddyforge::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainingMeta};
use paddyforge::data::{gen_synthetic_dataset, load_image_dataset, stratified_split, Dataset};
use paddyforge::eval::{evaluate, evaluate_ensemble, EnsembleMember, EnsembleSpec, EvalReport, TtaSettings};
use paddyforge::metrics::{write_metrics_csv, write_sweep_csv};
use paddyforge::nn::{build_network, Architecture, Network, TrainableSelector};
use paddyforge::optim::{
    fit_with, lr_sweep, suggest_lr_valley, PrecisionMode, ResizeSchedule, SweepSettings, TrainConfig, MIN_SWEEP_STEPS,
};
use paddyforge::{Error, Shape2D};

use args::{Cli, Command, EnsembleArgs, EvalArgs, GenSynthArgs, LrFindArgs, TrainArgs};

enum Failure {
    Usage(String),
    Engine(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Failure::Usage(msg.into()))
}

/// Parse a flag value, turning engine parse errors into usage errors.
fn flag<T: std::str::FromStr<Err = Error>>(name: &str, value: &str) -> Outcome<T> {
    value.parse().map_err(|e: Error| Failure::Usage(format!("--{name}: {e}")))
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        Error::Shape(_) | Error::Format { .. } | Error::Load { .. } | Error::Split(_) | Error::Io(_) => 2,
        Error::Numeric(_) | Error::NoValley(_) => 3,
    }
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
        Command::Train(a) => run_train(a),
        Command::LrFind(a) => run_lr_find(a),
        Command::Eval(a) => run_eval(a),
        Command::Ensemble(a) => run_ensemble(a),
        Command::GenSynth(a) => run_gen_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Engine(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn check_fraction(name: &str, f: f64) -> Outcome<()> {
    if !(f > 0.0 && f < 1.0) {
        return usage(format!("--{name} must lie in (0, 1), got {f}"));
    }
    Ok(())
}

fn parse_size(value: Option<&String>) -> Outcome<Option<Shape2D>> {
    value.map(|s| flag("size", s)).transpose()
}

fn load_data(root: &Path) -> Outcome<Dataset> {
    Ok(load_image_dataset(root)?.preload()?)
}

fn native_size(ds: &Dataset) -> Outcome<Shape2D> {
    let img = ds.image(0)?;
    Ok(Shape2D::new(img.shape()[1], img.shape()[2])?)
}

fn ensure_dir(dir: &Path) -> Outcome<()> {
    fs::create_dir_all(dir).map_err(Error::from)?;
    Ok(())
}

fn check_vocabulary(expected: &[String], found: &[String], what: &str) -> Outcome<()> {
    if expected != found {
        return Err(Error::Config(format!("{what} classes {expected:?} do not match dataset classes {found:?}")).into());
    }
    Ok(())
}

enum Init {
    Random,
    Checkpoint(PathBuf),
}

fn parse_init(values: &[String]) -> Outcome<Init> {
    match values {
        [mode] if mode == "random" => Ok(Init::Random),
        [mode, path] if mode == "checkpoint" => Ok(Init::Checkpoint(PathBuf::from(path))),
        _ => usage(format!("--init expects `random` or `checkpoint PATH`, got {values:?}")),
    }
}

fn sweep_settings(batch: usize, seed: u64) -> SweepSettings {
    SweepSettings {
        batch_size: batch,
        seed,
        ..Default::default()
    }
}

fn run_train(a: TrainArgs) -> Outcome<()> {
    let arch: Architecture = flag("arch", &a.arch)?;
    let precision: PrecisionMode = flag("precision", &a.precision)?;
    let aug_policy: AugPolicy = flag("aug", &a.aug)?;
    let resize: Option<ResizeSchedule> = a.resize.as_deref().map(|s| flag("resize", s)).transpose()?;
    let init = parse_init(&a.init)?;
    let freeze = match a.freeze.as_str() {
        "none" => false,
        "body" => true,
        other => return usage(format!("--freeze expects `none` or `body`, got `{other}`")),
    };
    let lr = match a.lr.as_str() {
        "auto" => None,
        s => Some(s.parse::<f64>().map_err(|_| Failure::Usage(format!("--lr expects a number or `auto`, got `{s}`")))?),
    };
    let size = parse_size(a.data.size.as_ref())?;
    check_fraction("val-fraction", a.data.val_fraction)?;
    if a.epochs == 0 {
        return usage("--epochs must be at least 1");
    }
    if resize.is_some() && arch == Architecture::BaselineConvNet {
        return usage("--resize needs a globally pooled architecture; convnet flattens a fixed-size map");
    }
    if let (Some(s), Some(sz)) = (&resize, size) {
        if s.small != sz {
            return usage(format!("--size {sz} conflicts with the resize schedule's small size {}", s.small));
        }
    }
    let mut config = TrainConfig {
        lr: lr.unwrap_or(0.0),
        batch_size: a.batch,
        accum_factor: a.accum,
        precision,
        epochs: a.epochs,
        seed: a.seed,
        mixup: a.mixup,
        aug_policy,
        resize_schedule: resize,
        loss_scale: a.loss_scale,
    };
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if matches!(lr, Some(v) if v <= 0.0) {
        return usage("--lr must be positive");
    }

    let ds = load_data(&a.data.data)?;
    let split = stratified_split(&ds, a.data.val_fraction, a.seed)?;
    let (mut net, classes) = match &init {
        Init::Random => {
            let input = match (&resize, size) {
                (Some(s), _) => s.small,
                (None, Some(sz)) => sz,
                (None, None) => native_size(&ds)?,
            };
            (build_network(arch, input, ds.num_classes(), a.seed)?, ds.classes.clone())
        }
        Init::Checkpoint(path) => {
            let Checkpoint { network, classes, .. } = load_checkpoint(path)?;
            check_vocabulary(&classes, &ds.classes, "checkpoint")?;
            if network.architecture != arch {
                return usage(format!("--arch {} but checkpoint holds {:?}", a.arch, network.architecture));
            }
            (network, classes)
        }
    };
    if freeze {
        net.set_trainable(&TrainableSelector::HeadOnly)?;
    }
    println!("config: {}", describe_config(&config, &a, &net));
    println!("seed: {}", a.seed);
    println!("micro-batch size: {}", config.micro_batch_size());
    println!(
        "data: {} train / {} val images, {} classes, input {}",
        split.train.len(),
        split.val.len(),
        ds.num_classes(),
        net.input_size
    );

    ensure_dir(&a.out)?;
    if lr.is_none() {
        let record = lr_sweep(&net, &split.train, &sweep_settings(config.batch_size, config.seed))?;
        write_sweep_csv(&record, &a.out.join("lr_find.csv"))?;
        config.lr = suggest_lr_valley(&record)?;
        println!("lr auto: {} ({} sweep points{})", config.lr, record.points.len(), if record.aborted { ", stopped on divergence" } else { "" });
    }
    let report = fit_with(&mut net, &split.train, &split.val, &config, |m| {
        println!(
            "epoch {:>3}  train_loss {:.6}  val_loss {:.6}  val_acc {:.4}  {:.2}s{}",
            m.epoch,
            m.train_loss,
            m.val_loss,
            m.val_accuracy,
            m.wall_seconds,
            if m.skipped_steps > 0 { format!("  skipped {}", m.skipped_steps) } else { String::new() }
        )
    })?;
    if precision == PrecisionMode::Mixed {
        println!("mixed precision: {} steps applied, {} skipped", report.steps.applied, report.steps.skipped);
    }
    write_metrics_csv(&report.epochs, &a.out.join("metrics.csv"))?;
    let meta = TrainingMeta {
        epochs: config.epochs,
        config_hash: config.digest(),
        seed: config.seed,
    };
    save_checkpoint(&net, &classes, &meta, &a.out.join("model.ckpt"))?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn describe_config(config: &TrainConfig, a: &TrainArgs, net: &Network) -> String {
    format!(
        "arch={:?} lr={} batch={} accum={} precision={:?} loss_scale={} aug={} mixup={} resize={} init={} freeze={} epochs={} size={}",
        net.architecture,
        if a.lr == "auto" { "auto".to_string() } else { config.lr.to_string() },
        config.batch_size,
        config.accum_factor,
        config.precision,
        config.loss_scale,
        config.aug_policy,
        config.mixup.map_or("off".to_string(), |v| v.to_string()),
        a.resize.as_deref().unwrap_or("off"),
        a.init.join(" "),
        a.freeze,
        config.epochs,
        net.input_size,
    )
}

fn run_lr_find(a: LrFindArgs) -> Outcome<()> {
    let arch: Architecture = flag("arch", &a.arch)?;
    let size = parse_size(a.data.size.as_ref())?;
    check_fraction("val-fraction", a.data.val_fraction)?;
    if a.steps < MIN_SWEEP_STEPS {
        return usage(format!("--steps must be at least {MIN_SWEEP_STEPS}, got {}", a.steps));
    }
    if !(a.lr_min > 0.0 && a.lr_min < a.lr_max && a.lr_max.is_finite()) {
        return usage(format!("need 0 < --lr-min < --lr-max, got {} and {}", a.lr_min, a.lr_max));
    }
    if !(0.0..1.0).contains(&a.beta) {
        return usage(format!("--beta must lie in [0, 1), got {}", a.beta));
    }
    if a.batch == 0 {
        return usage("--batch must be at least 1");
    }
    println!(
        "config: arch={:?} lr_min={} lr_max={} steps={} beta={} batch={}",
        arch, a.lr_min, a.lr_max, a.steps, a.beta, a.batch
    );
    println!("seed: {}", a.seed);
    let ds = load_data(&a.data.data)?;
    let split = stratified_split(&ds, a.data.val_fraction, a.seed)?;
    let input = match size {
        Some(s) => s,
        None => native_size(&ds)?,
    };
    let net = build_network(arch, input, ds.num_classes(), a.seed)?;
    let settings = SweepSettings {
        lr_min: a.lr_min,
        lr_max: a.lr_max,
        steps: a.steps,
        beta: a.beta,
        batch_size: a.batch,
        seed: a.seed,
    };
    let record = lr_sweep(&net, &split.train, &settings)?;
    ensure_dir(&a.out)?;
    write_sweep_csv(&record, &a.out.join("lr_find.csv"))?;
    if record.aborted {
        println!("sweep stopped on divergence after {} points", record.points.len());
    }
    let lr = suggest_lr_valley(&record)?;
    println!("suggested lr: {lr}");
    Ok(())
}

fn eval_view(ds: Dataset, val_fraction: Option<f64>, seed: u64) -> Outcome<Dataset> {
    Ok(match val_fraction {
        Some(f) => stratified_split(&ds, f, seed)?.val,
        None => ds,
    })
}

fn print_report(label: &str, r: &EvalReport) {
    println!(
        "{label}: accuracy {:.6}  error_rate {:.6}  mean_loss {:.6}  n {}",
        r.accuracy, r.error_rate, r.mean_loss, r.n
    );
}

fn run_eval(a: EvalArgs) -> Outcome<()> {
    let policy: AugPolicy = flag("tta-policy", &a.tta_policy)?;
    if let Some(f) = a.val_fraction {
        check_fraction("val-fraction", f)?;
    }
    println!(
        "config: model={} tta={} tta_policy={} val_fraction={}",
        a.model.display(),
        a.tta,
        policy,
        a.val_fraction.map_or("all".to_string(), |f| f.to_string())
    );
    println!("seed: {}", a.seed);
    let ck = load_checkpoint(&a.model)?;
    let ds = eval_view(load_data(&a.data)?, a.val_fraction, a.seed)?;
    check_vocabulary(&ck.classes, &ds.classes, "checkpoint")?;
    let tta = (a.tta > 0).then_some(TtaSettings {
        policy,
        copies: a.tta,
        seed: a.seed,
    });
    let report = evaluate(&ck.network, &ds, tta.as_ref())?;
    print_report("eval", &report);
    ensure_dir(&a.out)?;
    fs::write(a.out.join("confusion.csv"), report.confusion_csv(&ds.classes)).map_err(Error::from)?;
    Ok(())
}

fn parse_member(spec: &str) -> Outcome<(PathBuf, f64)> {
    let Some((path, weight)) = spec.rsplit_once(':') else {
        return usage(format!("--member expects CHECKPOINT:WEIGHT, got `{spec}`"));
    };
    let weight: f64 = weight
        .parse()
        .map_err(|_| Failure::Usage(format!("--member weight `{weight}` is not a number")))?;
    if !(weight.is_finite() && weight > 0.0) || path.is_empty() {
        return usage(format!("--member `{spec}` needs a path and a positive weight"));
    }
    Ok((PathBuf::from(path), weight))
}

fn run_ensemble(a: EnsembleArgs) -> Outcome<()> {
    let members = a.members.iter().map(|m| parse_member(m)).collect::<Outcome<Vec<_>>>()?;
    if members.len() < 2 {
        return usage("an ensemble needs at least two --member flags");
    }
    if let Some(f) = a.val_fraction {
        check_fraction("val-fraction", f)?;
    }
    println!("config: members={} val_fraction={}", a.members.join(","), a.val_fraction.map_or("all".to_string(), |f| f.to_string()));
    println!("seed: {}", a.seed);
    let loaded = members
        .iter()
        .map(|(path, weight)| {
            let ck = load_checkpoint(path)?;
            Ok(EnsembleMember {
                model: ck.network,
                classes: ck.classes,
                weight: *weight,
            })
        })
        .collect::<paddyforge::Result<Vec<_>>>()?;
    let spec = EnsembleSpec::new(loaded)?;
    let ds = eval_view(load_data(&a.data)?, a.val_fraction, a.seed)?;
    check_vocabulary(spec.classes(), &ds.classes, "ensemble")?;
    let report = evaluate_ensemble(&spec, &ds)?;
    for ((path, weight), r) in members.iter().zip(&report.members) {
        print_report(&format!("member {} (weight {weight})", path.display()), r);
    }
    print_report("ensemble", &report.ensemble);
    let d = &report.decomposition;
    println!(
        "decomposition: mean_member_error {:.6}  best_member_error {:.6}  ensemble_error {:.6}  rescued {}  lost {}  all_wrong {}",
        d.mean_member_error, d.best_member_error, d.ensemble_error, d.rescued, d.lost, d.all_wrong
    );
    ensure_dir(&a.out)?;
    fs::write(a.out.join("confusion.csv"), report.ensemble.confusion_csv(&ds.classes)).map_err(Error::from)?;
    Ok(())
}

fn run_gen_synth(a: GenSynthArgs) -> Outcome<()> {
    let size: Shape2D = flag("size", &a.size)?;
    if !(2..=10).contains(&a.classes) {
        return usage(format!("--classes must lie in 2..=10, got {}", a.classes));
    }
    if a.per_class == 0 {
        return usage("--per-class must be at least 1");
    }
    println!("config: classes={} per_class={} size={size}", a.classes, a.per_class);
    println!("seed: {}", a.seed);
    gen_synthetic_dataset(&a.out, a.classes, a.per_class, size, a.seed)?;
    println!("wrote {} images to {}", a.classes * a.per_class, a.out.display());
    Ok(())
}
