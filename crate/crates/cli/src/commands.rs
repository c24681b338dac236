use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rede::dataset::{load_dataset, subsample, DatasetFormat, EmbeddingDataset, TurnLabel};
use rede::detector::{fit_detector, load_model, save_model, Detector, DetectorConfig};
use rede::eval::{self, Splits};
use rede::whitening::{fit_whitening, project_2d, write_projection_csv};
use rede::Strategy;
use serde::Serialize;

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::manifest::{strip_out, Manifest};

/// Run one parsed command. `argv` is the raw argument list after the
/// program name; it is recorded in the manifest.
pub fn run(command: Command, argv: &[String]) -> CliResult<()> {
    let recorded = strip_out(argv);
    match command {
        Command::Fit(a) => fit(a, &recorded),
        Command::Predict(a) => predict(a, &recorded),
        Command::Eval(a) => evaluate(a, &recorded),
        Command::Lowres(a) => lowres(a, &recorded),
        Command::SweepL(a) => sweep_l(a, &recorded),
        Command::Compare(a) => compare(a, &recorded),
        Command::SweepK(a) => sweep_k(a, &recorded),
        Command::Project2d(a) => project(a, &recorded),
        Command::Params(a) => params(a, &recorded),
        Command::Replay(a) => replay(a),
    }
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("input file not found: {}", path.display())))
    }
}

fn format_for(path: &Path, format: Option<FormatArg>) -> DatasetFormat {
    format.map(Into::into).unwrap_or_else(|| DatasetFormat::from_path(path))
}

fn load(path: &Path, format: Option<FormatArg>) -> CliResult<EmbeddingDataset> {
    require_file(path)?;
    Ok(load_dataset(path, format_for(path, format))?)
}

fn out_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Runtime(rede::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| {
        CliError::Runtime(rede::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Knowledge-seeking shots: the labeled pool in `train`, or every row of
/// `pool` when given, sub-sampled to `count` with `seed`.
fn select_shots(
    train: &EmbeddingDataset,
    pool: Option<&Path>,
    count: ShotCount,
    format: Option<FormatArg>,
    seed: u64,
) -> CliResult<Array2<f64>> {
    let pool = match pool {
        Some(p) => {
            let ds = load(p, format)?;
            rede::Error::check_dim(train.dim(), ds.dim())?;
            let labels = vec![TurnLabel::KnowledgeSeeking; ds.len()];
            EmbeddingDataset::new(ds.ids().to_vec(), labels, ds.matrix().clone())?
        }
        None => train.with_label(TurnLabel::KnowledgeSeeking),
    };
    let chosen = match count {
        ShotCount::All => pool,
        ShotCount::Count(n) => subsample(&pool, TurnLabel::KnowledgeSeeking, n, seed)?,
    };
    Ok(chosen.features_with_label(TurnLabel::KnowledgeSeeking))
}

struct Loaded {
    train: EmbeddingDataset,
    dev: EmbeddingDataset,
    test: Option<EmbeddingDataset>,
    shots: Array2<f64>,
}

impl Loaded {
    fn from_args(d: &DataArgs) -> CliResult<Self> {
        let train = load(&d.nk_train, d.format)?;
        let dev = load(&d.dev, d.format)?;
        let test = d.test.as_deref().map(|p| load(p, d.format)).transpose()?;
        let shots = select_shots(&train, d.ks_pool.as_deref(), d.ks_shots, d.format, d.seed)?;
        log::info!(
            "train {} rows, dev {} rows, {} knowledge-seeking shots",
            train.len(),
            dev.len(),
            shots.nrows()
        );
        Ok(Loaded {
            train,
            dev,
            test,
            shots,
        })
    }

    fn splits(&self) -> CliResult<Splits<'_>> {
        let test = self
            .test
            .as_ref()
            .ok_or_else(|| CliError::Usage("this command needs --test".into()))?;
        Ok(Splits {
            train: &self.train,
            dev: &self.dev,
            test,
        })
    }

    fn nk(&self) -> CliResult<Array2<f64>> {
        let nk = self.train.features_with_label(TurnLabel::NonKnowledgeSeeking);
        if nk.nrows() == 0 {
            return Err(CliError::Usage("training dataset has no non-knowledge-seeking (nk) rows".into()));
        }
        Ok(nk)
    }
}

#[derive(Serialize)]
struct FitSummary {
    shots: usize,
    train_rows: usize,
    dev_f1: f64,
    threshold: Option<f64>,
    transform: bool,
}

fn fit_and_calibrate(
    loaded: &Loaded,
    cfg: &DetectorConfig,
) -> CliResult<(Detector, rede::detector::ThresholdChoice)> {
    let nk = loaded.nk()?;
    let mut det = fit_detector(&nk, &loaded.shots, cfg)?;
    let choice = det.select_threshold(&loaded.dev)?;
    Ok((det, choice))
}

fn print_threshold(choice: &rede::detector::ThresholdChoice) {
    println!("dev F1 {:.4}  threshold {}", choice.f1, choice.threshold);
}

fn fit(a: FitArgs, recorded: &[String]) -> CliResult<()> {
    let cfg = a.model.detector_config(a.data.seed);
    let loaded = Loaded::from_args(&a.data)?;
    let (det, choice) = fit_and_calibrate(&loaded, &cfg)?;
    out_dir(&a.out)?;
    save_model(&det, a.out.join("model.json"))?;
    write_json(
        &FitSummary {
            shots: loaded.shots.nrows(),
            train_rows: loaded.train.len(),
            dev_f1: choice.f1,
            threshold: det.threshold(),
            transform: det.transform().is_some(),
        },
        &a.out.join("fit.json"),
    )?;
    print_threshold(&choice);
    if let Some(test) = &loaded.test {
        let report = eval::evaluate(&det, test)?;
        write_json(&report, &a.out.join("eval.json"))?;
        print_report(&report);
    }
    Manifest::new("fit", recorded, Some(a.data.seed), Some(cfg)).write(&a.out)
}

#[derive(Serialize)]
struct Prediction<'a> {
    id: &'a str,
    score: f64,
    label: &'static str,
}

fn predict(a: PredictArgs, recorded: &[String]) -> CliResult<()> {
    require_file(&a.model)?;
    let mut det = load_model(&a.model)?;
    if let Some(t) = a.threshold {
        det.set_threshold(t)?;
    }
    let threshold = det.threshold().ok_or_else(|| {
        CliError::Usage("model has no calibrated threshold; pass --threshold".into())
    })?;
    let input = load(&a.input, a.format)?;
    let scores = det.score_dataset(&input, Strategy::default())?;

    let (sink, path): (Box<dyn Write>, Option<PathBuf>) = match &a.out {
        Some(dir) => {
            out_dir(dir)?;
            let p = dir.join("predictions.jsonl");
            (Box::new(File::create(&p).map_err(io_err(&p))?), Some(p))
        }
        None => (Box::new(io::stdout().lock()), None),
    };
    let mut w = BufWriter::new(sink);
    let err_path = path.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    for (id, &score) in input.ids().iter().zip(&scores) {
        let label = rede::detector::classify(score, threshold).code().expect("classification is labeled");
        let line = serde_json::to_string(&Prediction { id, score, label }).expect("prediction serializes");
        writeln!(w, "{line}").map_err(io_err(&err_path))?;
    }
    w.flush().map_err(io_err(&err_path))?;
    drop(w);
    if let Some(dir) = &a.out {
        Manifest::new("predict", recorded, None, Some(*det.config())).write(dir)?;
    }
    Ok(())
}

fn print_report(r: &eval::EvalReport) {
    println!("precision {:.4}  recall {:.4}  F1 {:.4}", r.precision, r.recall, r.f1);
}

fn evaluate(a: EvalArgs, recorded: &[String]) -> CliResult<()> {
    let test = load(&a.test, a.format)?;
    let (det, seed) = match &a.model {
        Some(m) => {
            require_file(m)?;
            (load_model(m)?, None)
        }
        None => {
            let data = DataArgs {
                nk_train: a.nk_train.clone().expect("clap enforces --nk-train"),
                ks_shots: a.ks_shots,
                ks_pool: a.ks_pool.clone(),
                dev: a.dev.clone().expect("clap enforces --dev"),
                test: None,
                format: a.format,
                seed: a.seed,
            };
            let cfg = a.model_args.detector_config(a.seed);
            let (det, choice) = fit_and_calibrate(&Loaded::from_args(&data)?, &cfg)?;
            print_threshold(&choice);
            (det, Some(a.seed))
        }
    };
    let report = eval::evaluate(&det, &test)?;
    out_dir(&a.out)?;
    write_json(&report, &a.out.join("eval.json"))?;
    print_report(&report);
    Manifest::new("eval", recorded, seed, Some(*det.config())).write(&a.out)
}

fn lowres(a: LowresArgs, recorded: &[String]) -> CliResult<()> {
    let cfg = a.model.detector_config(a.data.seed);
    let loaded = Loaded::from_args(&a.data)?;
    let table = eval::low_resource_sweep(&loaded.splits()?, &a.sizes, &a.seeds, &cfg, Strategy::default())?;
    out_dir(&a.out)?;
    eval::write_reports("low-resource", &table.rows, &a.out, "lowres")?;
    eval::write_json_report("low-resource-cells", &table.cells, a.out.join("lowres_cells.json"))?;
    for r in &table.rows {
        match &r.error {
            Some(e) => println!("size {:>5}  error: {e}", r.size),
            None => println!("size {:>5}  F1 {:.4} ± {:.4}", r.size, r.mean_f1, r.std_f1),
        }
    }
    Manifest::new("lowres", recorded, Some(a.data.seed), Some(cfg)).write(&a.out)
}

fn sweep_l(a: SweepLArgs, recorded: &[String]) -> CliResult<()> {
    let cfg = a.model.detector_config(a.data.seed);
    let loaded = Loaded::from_args(&a.data)?;
    if loaded.shots.nrows() == 0 {
        return Err(CliError::Usage("sweep-l needs knowledge-seeking shots".into()));
    }
    let rows = eval::dimension_sweep(&loaded.splits()?, &loaded.shots, &a.dims, &cfg, Strategy::default())?;
    out_dir(&a.out)?;
    eval::write_reports("dimension-sweep", &rows, &a.out, "sweep_l")?;
    for r in &rows {
        match &r.note {
            Some(n) => println!("L {:>5}  {n}", r.retained_dim),
            None => println!("L {:>5}  F1 {:.4}", r.retained_dim, r.f1),
        }
    }
    Manifest::new("sweep-l", recorded, Some(a.data.seed), Some(cfg)).write(&a.out)
}

fn compare(a: CompareArgs, recorded: &[String]) -> CliResult<()> {
    let cfg = a.model.detector_config(a.data.seed);
    let loaded = Loaded::from_args(&a.data)?;
    let estimators: Vec<_> = a.estimators.iter().map(|&e| a.model.estimator_config(e, a.data.seed)).collect();
    let rows = eval::estimator_comparison(&loaded.splits()?, &loaded.shots, &cfg, &estimators)?;
    out_dir(&a.out)?;
    eval::write_reports("estimator-comparison", &rows, &a.out, "compare")?;
    for r in &rows {
        println!(
            "{:<16} P {:.4}  R {:.4}  F1 {:.4}  {:.3}s",
            r.name, r.precision, r.recall, r.f1, r.inference_seconds
        );
    }
    Manifest::new("compare", recorded, Some(a.data.seed), Some(cfg)).write(&a.out)
}

fn sweep_k(a: SweepKArgs, recorded: &[String]) -> CliResult<()> {
    let mut model = a.model.clone();
    model.estimator = EstimatorArg::Gmm;
    let cfg = model.detector_config(a.data.seed);
    let loaded = Loaded::from_args(&a.data)?;
    let rows = eval::component_sweep(&loaded.splits()?, &loaded.shots, &cfg, &a.k, Strategy::default())?;
    out_dir(&a.out)?;
    eval::write_reports("component-sweep", &rows, &a.out, "sweep_k")?;
    for r in &rows {
        println!("k {:>3}  dev F1 {:.4}  test F1 {:.4}", r.components, r.dev_f1, r.test_f1);
    }
    Manifest::new("sweep-k", recorded, Some(a.data.seed), Some(cfg)).write(&a.out)
}

fn project(a: ProjectArgs, recorded: &[String]) -> CliResult<()> {
    let train = load(&a.nk_train, a.format)?;
    let fit_rows = match a.fit_on {
        FitOn::Ks => select_shots(&train, a.ks_pool.as_deref(), a.ks_shots, a.format, a.seed)?,
        FitOn::Nk => train.features_with_label(TurnLabel::NonKnowledgeSeeking),
    };
    if fit_rows.nrows() == 0 {
        return Err(CliError::Usage("no rows to fit the projection on".into()));
    }
    let input = load(&a.input, a.format)?;
    let t = fit_whitening(&fit_rows, 2.min(train.dim()), a.eps_floor)?;
    let points = project_2d(&t, &input)?;
    out_dir(&a.out)?;
    write_projection_csv(&points, a.out.join("projection.csv"))?;
    println!("{} points written", points.len());
    Manifest::new("project2d", recorded, Some(a.seed), None).write(&a.out)
}

fn params(a: ParamsArgs, recorded: &[String]) -> CliResult<()> {
    require_file(&a.model)?;
    let det = load_model(&a.model)?;
    let report = det.parameters();
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if let Some(dir) = &a.out {
        out_dir(dir)?;
        write_json(&report, &dir.join("params.json"))?;
        Manifest::new("params", recorded, None, Some(*det.config())).write(dir)?;
    }
    Ok(())
}

fn replay(a: ReplayArgs) -> CliResult<()> {
    require_file(&a.manifest)?;
    let m = Manifest::read(&a.manifest)?;
    if m.command == "replay" || m.args.first().map(String::as_str) == Some("replay") {
        return Err(CliError::Usage("a manifest cannot replay another replay".into()));
    }
    let out = match a.out {
        Some(o) => o,
        None => a.manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let mut argv = m.args.clone();
    argv.push("--out".into());
    argv.push(out.to_string_lossy().into_owned());
    let cli = <Cli as clap::Parser>::try_parse_from(std::iter::once("rede".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| CliError::Usage(format!("manifest arguments no longer parse: {e}")))?;
    log::info!("replaying `{}` into {}", m.command, out.display());
    run(cli.command, &argv)
}
