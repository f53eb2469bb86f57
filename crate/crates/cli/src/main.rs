use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use hemis::baselines::{load_bundle, save_bundle, train_baseline_network, train_imputation_mlps};
use hemis::data::{build_dataset, load_dataset, DatasetConfig, NormalizationScope, PhantomConfig};
use hemis::eval::{
    emit_report, render_overlay, report_markdown, sweep_subsets, HemisSegmenter,
    MeanFillSegmenter, MlpSegmenter, ReportFormat, Segmenter,
};
use hemis::labels::LabelMap;
use hemis::model::{load_model, model_forward, predict_segmentation, save_model};
use hemis::training::{train, write_history};
use hemis::{htf, HemisParams, ModalityMask, Rng, Tensor};

mod config;

use config::RunConfig;

/// Stream of the seed used for weight initialization.
const INIT_STREAM: u64 = 0x1417;

#[derive(Debug, Parser)]
#[command(name = "hemis", version, about = "Hetero-modal segmentation on synthetic phantoms")]
struct Cli {
    /// Worker threads for parallel stages [default: all cores]
    #[arg(long, global = true, env = "HEMIS_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a phantom dataset
    Generate(GenerateArgs),
    /// Train the hetero-modal network, or the complete-input baseline
    Train(TrainArgs),
    /// Dice sweep over every modality subset of the test split
    Eval(EvalArgs),
    /// Segment one case from the named modalities
    Segment(SegmentArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    cases: usize,
    /// Image size as HxW
    #[arg(long, default_value = "64x64", value_parser = parse_size)]
    size: (usize, usize),
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    difficulty: f64,
    #[arg(long, default_value_t = 1.0)]
    lesion_probability: f64,
    /// Standardize with training-split statistics instead of per image
    #[arg(long)]
    dataset_normalization: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model file to write; history and resolved config go next to it
    #[arg(long)]
    out: PathBuf,
    /// Train without modality dropping
    #[arg(long)]
    baseline: bool,
    /// Also train the imputation regressors and write them here
    #[arg(long)]
    impute_mlps: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    warmup_epochs: Option<usize>,
    #[arg(long)]
    finetune_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    batches_per_epoch: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    kernel: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    hemis: PathBuf,
    /// Complete-input network for the mean-filling column
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Imputation bundle for the MLP column; needs --baseline
    #[arg(long, requires = "baseline")]
    mlps: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    markdown: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SegmentArgs {
    #[arg(long)]
    model: PathBuf,
    /// Directory holding mod_<name>.htf files and optionally label.htf
    #[arg(long)]
    case: PathBuf,
    /// Comma-separated modality names, e.g. F,T1c
    #[arg(long)]
    modalities: String,
    /// Overlay image (PPM)
    #[arg(long)]
    out: PathBuf,
    /// Also write the label map as an HTF tensor
    #[arg(long)]
    labels: Option<PathBuf>,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or("expected HxW")?;
    let h = h.trim().parse().map_err(|_| format!("bad height in {s:?}"))?;
    let w = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
    Ok((h, w))
}

/// Failure class, mapped to the exit code.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<hemis::Error> for Failure {
    fn from(e: hemis::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow!(msg.into()))
}

fn sibling(model: &Path, suffix: &str) -> PathBuf {
    let stem = model.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
    model.with_file_name(format!("{stem}.{suffix}"))
}

fn cmd_generate(a: GenerateArgs) -> Result<(), Failure> {
    let cfg = DatasetConfig {
        cases: a.cases,
        seed: a.seed,
        phantom: PhantomConfig {
            height: a.size.0,
            width: a.size.1,
            difficulty: a.difficulty,
            lesion_probability: a.lesion_probability,
        },
        normalization: if a.dataset_normalization {
            NormalizationScope::Dataset
        } else {
            NormalizationScope::PerCase
        },
    };
    match (cfg.cases, cfg.phantom.validate()) {
        (n, _) if n < hemis::data::dataset::MIN_CASES => {
            return Err(usage(format!("--cases must be at least {}", hemis::data::dataset::MIN_CASES)))
        }
        (_, Err(e)) => return Err(usage(e.to_string())),
        _ => {}
    }
    let m = build_dataset(&a.out, &cfg)?;
    println!(
        "wrote {} cases of {}x{} to {}: train {}, valid {}, test {}",
        a.cases,
        m.dims[0],
        m.dims[1],
        a.out.display(),
        m.splits.train.len(),
        m.splits.valid.len(),
        m.splits.test.len()
    );
    Ok(())
}

fn resolve_train_config(a: &TrainArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &a.config {
        Some(path) => RunConfig::load(path).map_err(Failure::Usage)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &a.data {
        cfg.data = Some(d.clone());
    }
    let t = &mut cfg.train;
    if let Some(s) = a.seed {
        t.seed = s;
        cfg.mlp.seed = s;
    }
    macro_rules! set {
        ($field:expr, $flag:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    set!(t.max_epochs, a.max_epochs);
    set!(t.warmup_epochs, a.warmup_epochs);
    set!(t.finetune_epochs, a.finetune_epochs);
    set!(t.patience, a.patience);
    set!(t.patch_size, a.patch_size);
    set!(t.batch_size, a.batch_size);
    set!(t.batches_per_epoch, a.batches_per_epoch);
    set!(t.sgd.learning_rate, a.learning_rate);
    set!(cfg.arch.kernel, a.kernel);
    if a.baseline {
        cfg.train.curriculum = false;
    }
    if cfg.data.is_none() {
        return Err(usage("no dataset given: pass --data or set \"data\" in the config"));
    }
    cfg.arch.validate().map_err(|e| Failure::Usage(e.into()))?;
    cfg.train.validate().map_err(|e| Failure::Usage(e.into()))?;
    cfg.mlp.validate().map_err(|e| Failure::Usage(e.into()))?;
    Ok(cfg)
}

fn cmd_train(a: TrainArgs) -> Result<(), Failure> {
    let cfg = resolve_train_config(&a)?;
    log::info!("resolved config:\n{}", cfg.to_json());
    let root = cfg.data.clone().expect("checked above");
    let ds = load_dataset(&root).with_context(|| format!("loading dataset {}", root.display()))?;
    let names = ds.manifest.modality_names.clone();
    if cfg.arch.modalities != names.len() {
        return Err(usage(format!(
            "architecture expects {} modalities, dataset has {}",
            cfg.arch.modalities,
            names.len()
        )));
    }
    let init = HemisParams::init(cfg.arch, &mut Rng::derive(cfg.train.seed, INIT_STREAM))?;
    let outcome = if a.baseline {
        train_baseline_network(init, &ds.train, &ds.valid, &cfg.train)?
    } else {
        train(init, &ds.train, &ds.valid, &cfg.train)?
    };
    save_model(&outcome.params, &names, &a.out)?;
    write_history(&outcome.history, &sibling(&a.out, "history.tsv"))?;
    fs::write(sibling(&a.out, "config.json"), cfg.to_json()).context("writing resolved config")?;
    println!(
        "saved {} (best validation loss {:.4}, {} epochs)",
        a.out.display(),
        outcome.best_valid_loss,
        outcome.history.len() - 1
    );
    if let Some(path) = &a.impute_mlps {
        let bundle = train_imputation_mlps(&ds.train, &cfg.mlp)?;
        save_bundle(&bundle, path)?;
        println!("saved {} imputation models to {}", bundle.len(), path.display());
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), Failure> {
    let hemis = load_model::<f32>(&a.hemis).with_context(|| format!("loading {}", a.hemis.display()))?;
    let baseline = a
        .baseline
        .as_ref()
        .map(|p| load_model::<f32>(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let bundle = a
        .mlps
        .as_ref()
        .map(|p| load_bundle(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let ds = load_dataset(&a.data).with_context(|| format!("loading dataset {}", a.data.display()))?;
    let names = &ds.manifest.modality_names;
    if &hemis.modality_names != names {
        return Err(anyhow!("model modalities {:?} differ from dataset {:?}", hemis.modality_names, names).into());
    }

    let h = HemisSegmenter(&hemis.params);
    let mean = baseline.as_ref().map(|b| MeanFillSegmenter(&b.params));
    let mlp = match (&baseline, &bundle) {
        (Some(b), Some(bundle)) => Some(MlpSegmenter {
            params: &b.params,
            bundle,
        }),
        _ => None,
    };
    let mut methods: Vec<&dyn Segmenter> = vec![&h];
    if let Some(m) = &mean {
        methods.push(m);
    }
    if let Some(m) = &mlp {
        methods.push(m);
    }
    let report = sweep_subsets(&methods, &ds.test, names)?;
    emit_report(&report, &a.report, ReportFormat::Tsv)?;
    if let Some(md) = &a.markdown {
        emit_report(&report, md, ReportFormat::Markdown)?;
    }
    print!("{}", report_markdown(&report));
    Ok(())
}

fn cmd_segment(a: SegmentArgs) -> Result<(), Failure> {
    let model = load_model::<f32>(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let names = &model.modality_names;
    let requested: Vec<&str> = a.modalities.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if requested.is_empty() {
        return Err(usage("--modalities must name at least one modality"));
    }
    let mut present = vec![false; names.len()];
    for r in &requested {
        let k = names
            .iter()
            .position(|n| n == r)
            .ok_or_else(|| usage(format!("unknown modality {r:?}; the model knows {}", names.join(","))))?;
        present[k] = true;
    }
    let mask = ModalityMask::new(&present)?;
    let images: Vec<Option<Tensor<f32>>> = (0..names.len())
        .map(|k| {
            present[k]
                .then(|| {
                    let p = a.case.join(format!("mod_{}.htf", names[k]));
                    htf::load(&p).with_context(|| format!("reading {}", p.display()))
                })
                .transpose()
        })
        .collect::<Result<_>>()?;
    let slots: Vec<Option<&Tensor<f32>>> = images.iter().map(Option::as_ref).collect();
    let pred = predict_segmentation(&model_forward(&slots, mask, &model.params)?)?;

    let truth_path = a.case.join("label.htf");
    let truth = if truth_path.exists() {
        LabelMap::from_tensor(&htf::load(&truth_path)?)?
    } else {
        LabelMap::filled(pred.height(), pred.width(), 0)
    };
    let background = images.iter().flatten().next().expect("non-empty mask");
    render_overlay(background, &pred, &truth, &a.out)?;
    if let Some(path) = &a.labels {
        htf::save(&pred.to_tensor(), path)?;
    }
    let lesion = pred.as_slice().iter().filter(|&&l| l > 0).count();
    println!("segmented with {}: {lesion} lesion pixels", mask.describe(names));
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.into()))?;
    }
    match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Segment(a) => cmd_segment(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_parsing() {
        assert_eq!(parse_size("64x48"), Ok((64, 48)));
        assert!(parse_size("64").is_err());
        assert!(parse_size("ax4").is_err());
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling(Path::new("out/m.hmz"), "history.tsv"), PathBuf::from("out/m.history.tsv"));
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"data": "from-file", "train": {"max_epochs": 7, "patience": 2}}"#).unwrap();
        let cli = Cli::try_parse_from([
            "hemis", "train", "--config", path.to_str().unwrap(), "--out", "m.hmz", "--max-epochs", "9",
        ])
        .unwrap();
        let Command::Train(a) = cli.command else { panic!() };
        let cfg = resolve_train_config(&a).ok().unwrap();
        assert_eq!(cfg.train.max_epochs, 9);
        assert_eq!(cfg.train.patience, 2);
        assert_eq!(cfg.data, Some(PathBuf::from("from-file")));
        assert_eq!(cfg.train.batch_size, hemis::training::TrainConfig::default().batch_size);
    }
}
