use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use autoeq::audio::{Audio, ANALYSIS_RATE};
use autoeq::corpus::{measure_corpus, read_manifest, MeasuredSample};
use autoeq::datagen::{build_realworld_dataset, build_synthetic_dataset, Dataset, DatasetKind, NoiseConfig};
use autoeq::demo::{write_demo_corpus, DemoConfig};
use autoeq::eq::{cascade_response_db_with, BandParams, EqSettings, PeakDesign, BAND_RANGES};
use autoeq::model::{evaluate_mae, finetune, train_base, Architecture, MatchingModel, TrainingConfig};
use autoeq::nn::Checkpoint;
use autoeq::pipeline::{auto_eq, predict_settings, AutoEqOptions};
use autoeq::spectrum::{fmt_sig9, LogFrequencyGrid, SpectrumDb, StftConfig, DEFAULT_LIMIT_DB, DEFAULT_SMOOTH_SIGMA};
use autoeq::targets::TargetBank;

use crate::config::ConfigFile;
use crate::manifest::RunRecorder;
use crate::{AnalysisArgs, Cli, CliError, Command, TargetsCommand};

const CONFIG_KEYS: &[&str] = &[
    "threads",
    "window",
    "sigma",
    "limit_db",
    "n",
    "seed",
    "noise_db",
    "noise_smooth",
    "k",
    "lr",
    "batch_size",
    "epochs",
    "lr_decay",
    "lambda",
    "peak_design",
    "per_class",
    "duration",
    "count",
];

const DEFAULT_SYNTHETIC_N: usize = 20_000;
const DEFAULT_K: usize = 4;

struct Ctx {
    cfg: ConfigFile,
    threads: usize,
}

fn parse_flag<T: std::str::FromStr<Err = autoeq::Error>>(raw: &str) -> Result<T, CliError> {
    raw.parse().map_err(|e: autoeq::Error| CliError::Usage(e.to_string()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_bank(path: &Path) -> Result<TargetBank, CliError> {
    Ok(TargetBank::load(path)?)
}

fn load_model(path: &Path) -> Result<MatchingModel, CliError> {
    Ok(MatchingModel::from_checkpoint(&Checkpoint::load(path)?)?)
}

impl Ctx {
    fn stft(&self, flag: Option<usize>) -> Result<StftConfig, CliError> {
        let window = self.cfg.pick(flag, "window", StftConfig::default().window_len)?;
        if window < 2 || window % 2 != 0 {
            return Err(CliError::Usage(format!("window must be even and at least 2, got {window}")));
        }
        Ok(StftConfig::new(window))
    }

    fn analysis(&self, a: &AnalysisArgs) -> Result<(StftConfig, f64, f64), CliError> {
        let stft = self.stft(a.window)?;
        let sigma = self.cfg.pick(a.sigma, "sigma", DEFAULT_SMOOTH_SIGMA)?;
        let limit = self.cfg.pick(a.limit_db, "limit_db", DEFAULT_LIMIT_DB)?;
        if !(sigma > 0.0 && sigma.is_finite()) || !(limit > 0.0 && limit.is_finite()) {
            return Err(CliError::Usage("sigma and limit-db must be positive".into()));
        }
        Ok((stft, sigma, limit))
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    cfg.check_known(CONFIG_KEYS)?;
    let threads = cfg.pick_opt(cli.threads, "threads")?.unwrap_or_else(|| {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    });
    if threads == 0 {
        return Err(CliError::Usage("threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let ctx = Ctx { cfg, threads };
    pool.install(|| match cli.command {
        Command::Targets(TargetsCommand::Build(a)) => targets_build(&ctx, a),
        Command::GenData(a) => gen_data(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Match(a) => match_curve(&ctx, a),
        Command::Autoeq(a) => autoeq_cmd(&ctx, a),
        Command::DemoCorpus(a) => demo_corpus(&ctx, a),
        Command::PlotData(a) => plot_data(&ctx, a),
    })
}

fn targets_build(ctx: &Ctx, a: crate::TargetsBuildArgs) -> Result<(), CliError> {
    let stft = ctx.stft(a.window)?;
    let entries = read_manifest(&a.manifest)?;
    let measured = measure_corpus(&entries, stft)?;
    let bank = TargetBank::from_measured(&measured)?;

    let mut rec = RunRecorder::new("targets build", ctx.threads);
    rec.config("window", stft.window_len).input(&a.manifest);
    for e in &entries {
        rec.input(&e.path);
    }
    let mut w = create(&a.out)?;
    bank.write_to(&mut w)?;
    finish(w, &a.out)?;
    rec.output(&a.out);
    if let Some(csv) = &a.csv {
        let mut w = create(csv)?;
        bank.write_csv(&mut w)?;
        finish(w, csv)?;
        rec.output(csv);
    }
    rec.finish(None)?;
    println!("{} classes from {} samples -> {}", bank.len(), entries.len(), a.out.display());
    Ok(())
}

fn gen_data(ctx: &Ctx, a: crate::GenDataArgs) -> Result<(), CliError> {
    let kind: DatasetKind = parse_flag(&a.kind)?;
    let mut rec = RunRecorder::new("gen-data", ctx.threads);
    rec.config("kind", kind.as_str());
    let data = match kind {
        DatasetKind::Synthetic => {
            let n = ctx.cfg.pick(a.n, "n", DEFAULT_SYNTHETIC_N)?;
            let seed = ctx.cfg.pick(a.seed, "seed", 0)?;
            let noise = if a.clean {
                NoiseConfig::clean()
            } else {
                NoiseConfig {
                    amplitude_db: ctx.cfg.pick(a.noise_db, "noise_db", NoiseConfig::default().amplitude_db)?,
                    post_smooth_sigma: ctx.cfg.pick(a.noise_smooth, "noise_smooth", 0.0)?,
                    zero_mean: true,
                }
            };
            noise.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            rec.config("n", n)
                .config("noise_db", noise.amplitude_db)
                .config("noise_smooth", noise.post_smooth_sigma)
                .config("zero_mean", noise.zero_mean)
                .seed("seed", seed);
            build_synthetic_dataset(n, &noise, seed)?
        }
        DatasetKind::RealWorld => {
            let manifest = a
                .manifest
                .as_ref()
                .ok_or_else(|| CliError::Usage("--manifest is required for real-world data".into()))?;
            let bank_path = a
                .bank
                .as_ref()
                .ok_or_else(|| CliError::Usage("--bank is required for real-world data".into()))?;
            let k = ctx.cfg.pick(a.k, "k", DEFAULT_K)?;
            let (stft, sigma, limit) = ctx.analysis(&a.analysis)?;
            let bank = load_bank(bank_path)?;
            let entries = read_manifest(manifest)?;
            let mut measured = measure_corpus(&entries, stft)?;
            relative_sources(&mut measured, manifest);
            rec.config("k", k)
                .config("window", stft.window_len)
                .config("sigma", sigma)
                .config("limit_db", limit)
                .input(manifest)
                .input(bank_path);
            for e in &entries {
                rec.input(&e.path);
            }
            build_realworld_dataset(&measured, &bank, k, sigma, limit)?
        }
    };
    let mut w = create(&a.out)?;
    data.write_to(&mut w)?;
    finish(w, &a.out)?;
    rec.output(&a.out);
    if let Some(csv) = &a.csv {
        let mut w = create(csv)?;
        data.write_csv(&mut w)?;
        finish(w, csv)?;
        rec.output(csv);
    }
    rec.finish(None)?;
    println!("{} {} records -> {}", data.len(), kind.as_str(), a.out.display());
    Ok(())
}

/// Records sources relative to the manifest's directory so datasets do not
/// depend on where the corpus lives.
fn relative_sources(measured: &mut [MeasuredSample], manifest: &Path) {
    let base = manifest.parent().unwrap_or(Path::new(""));
    for m in measured {
        if let Ok(rel) = Path::new(&m.source_id).strip_prefix(base) {
            m.source_id = rel.display().to_string();
        }
    }
}

fn training_config(ctx: &Ctx, a: &crate::TrainArgs) -> Result<TrainingConfig, CliError> {
    let d = TrainingConfig::default();
    let cfg = TrainingConfig {
        lr: ctx.cfg.pick(a.lr, "lr", d.lr)?,
        batch_size: ctx.cfg.pick(a.batch_size, "batch_size", d.batch_size)?,
        epochs: ctx.cfg.pick(a.epochs, "epochs", d.epochs)?,
        lr_decay_per_epoch: ctx.cfg.pick(a.lr_decay, "lr_decay", d.lr_decay_per_epoch)?,
        lambda: ctx.cfg.pick(a.lambda, "lambda", d.lambda)?,
        seed: ctx.cfg.pick(a.seed, "seed", d.seed)?,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn train(ctx: &Ctx, a: crate::TrainArgs) -> Result<(), CliError> {
    let finetuning = match a.stage.as_str() {
        "base" => false,
        "finetune" => true,
        other => return Err(CliError::Usage(format!("unknown stage `{other}` (expected base or finetune)"))),
    };
    let arch: Option<Architecture> = a.arch.as_deref().map(parse_flag).transpose()?;
    let cfg = training_config(ctx, &a)?;
    let peak_flag: Option<String> = ctx.cfg.pick_opt(a.peak_design.clone(), "peak_design")?;

    let mut rec = RunRecorder::new("train", ctx.threads);
    let mut model = if finetuning {
        let in_ckpt = a
            .in_ckpt
            .as_ref()
            .ok_or_else(|| CliError::Usage("fine-tuning requires a base model: pass --in-ckpt".into()))?;
        let model = load_model(in_ckpt)?;
        if let Some(arch) = arch {
            if arch != model.arch() {
                return Err(CliError::Usage(format!(
                    "--arch {arch} does not match the checkpoint's {}",
                    model.arch()
                )));
            }
        }
        if peak_flag.is_some() {
            return Err(CliError::Usage("--peak-design is fixed by the base checkpoint".into()));
        }
        rec.input(in_ckpt);
        model
    } else {
        if a.in_ckpt.is_some() {
            return Err(CliError::Usage("the base stage starts from scratch; drop --in-ckpt".into()));
        }
        let arch = arch.ok_or_else(|| CliError::Usage("--arch is required for the base stage".into()))?;
        let mut model = MatchingModel::new(arch, cfg.seed);
        if let Some(p) = &peak_flag {
            model.peak_design = parse_flag::<PeakDesign>(p)?;
        }
        model
    };

    let data = Dataset::load(&a.data)?;
    rec.input(&a.data);
    let curves = data.curves();
    let test = match &a.test {
        Some(p) => {
            rec.input(p);
            Some(Dataset::load(p)?.curves())
        }
        None => None,
    };
    let outcome = if finetuning {
        finetune(&mut model, &curves, &cfg, test.as_deref())?
    } else {
        let params = data.params()?;
        train_base(&mut model, &curves, &params, &cfg, test.as_deref())?
    };

    let stage = if finetuning { "finetune" } else { "base" };
    let meta = vec![
        ("stage".to_string(), stage.to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
        ("epochs".to_string(), cfg.epochs.to_string()),
        ("train_records".to_string(), data.len().to_string()),
    ];
    let ckpt = model.to_checkpoint(Some(&outcome.optimizer), meta);
    let mut w = create(&a.out_ckpt)?;
    ckpt.write_to(&mut w)?;
    finish(w, &a.out_ckpt)?;
    let history_path = a.history.clone().unwrap_or_else(|| with_suffix(&a.out_ckpt, ".history.csv"));
    let mut w = create(&history_path)?;
    outcome.history.write_csv(&mut w)?;
    finish(w, &history_path)?;

    rec.config("arch", model.arch())
        .config("stage", stage)
        .config("lr", cfg.lr)
        .config("batch_size", cfg.batch_size)
        .config("epochs", cfg.epochs)
        .config("lr_decay", cfg.lr_decay_per_epoch)
        .config("lambda", cfg.lambda)
        .config("peak_design", model.peak_design.as_str())
        .seed("seed", cfg.seed)
        .output(&a.out_ckpt)
        .output(&history_path);
    rec.finish(None)?;
    let last = |split: &str| outcome.history.split(split).last().copied();
    match (last("train"), last("test")) {
        (Some(tr), Some(te)) => println!("{stage} {}: train loss {tr:.4}, test MAE {te:.4} dB", model.arch()),
        (Some(tr), None) => println!("{stage} {}: train loss {tr:.4}", model.arch()),
        _ => {}
    }
    Ok(())
}

fn eval(ctx: &Ctx, a: crate::EvalArgs) -> Result<(), CliError> {
    let model = load_model(&a.ckpt)?;
    let data = Dataset::load(&a.data)?;
    let report = evaluate_mae(&model, &data.curves(), model.peak_design)?;
    let json = serde_json::json!({
        "examples": report.per_example.len(),
        "mean_mae_db": report.mean_db,
        "mean_penalty": report.mean_penalty,
        "per_example_mae_db": report.per_example,
    });
    let mut w = create(&a.out)?;
    serde_json::to_writer_pretty(&mut w, &json).map_err(|e| CliError::Usage(e.to_string()))?;
    writeln!(w).map_err(|e| CliError::io(&a.out, e))?;
    finish(w, &a.out)?;
    let mut rec = RunRecorder::new("eval", ctx.threads);
    rec.input(&a.ckpt).input(&a.data).output(&a.out);
    rec.finish(None)?;
    println!("MAE {:.4} dB over {} examples", report.mean_db, report.per_example.len());
    Ok(())
}

fn match_curve(ctx: &Ctx, a: crate::MatchArgs) -> Result<(), CliError> {
    let model = load_model(&a.ckpt)?;
    let curve = SpectrumDb::load_csv(&a.curve)?;
    let settings = predict_settings(&model, &curve)?;
    let response = cascade_response_db_with(
        &settings,
        LogFrequencyGrid::canonical(),
        ANALYSIS_RATE as f64,
        model.peak_design,
    )?;
    let mut w = create(&a.out_settings)?;
    settings.write_document(&mut w)?;
    finish(w, &a.out_settings)?;
    let mut w = create(&a.out_response)?;
    response.write_csv(&mut w)?;
    finish(w, &a.out_response)?;
    let mut rec = RunRecorder::new("match", ctx.threads);
    rec.input(&a.curve)
        .input(&a.ckpt)
        .output(&a.out_settings)
        .output(&a.out_response);
    rec.finish(None)?;
    println!("MAE {:.4} dB", curve.mean_abs_diff(&response));
    Ok(())
}

fn autoeq_cmd(ctx: &Ctx, a: crate::AutoeqArgs) -> Result<(), CliError> {
    if a.out.is_none() && !a.dry_run {
        return Err(CliError::Usage("--out is required unless --dry-run is given".into()));
    }
    let (stft, sigma, limit) = ctx.analysis(&a.analysis)?;
    let audio = Audio::read_wav(&a.input)?;
    let bank = load_bank(&a.bank)?;
    let model = load_model(&a.ckpt)?;
    let opts = AutoEqOptions {
        class_override: a.class_override.clone(),
        stft,
        sigma,
        limit_db: limit,
        peak_design: model.peak_design,
        peak_normalize: a.peak_normalize,
        dry_run: a.dry_run,
    };
    let out = auto_eq(&audio, &bank, &model, &opts)?;

    let base = a.out.clone().unwrap_or_else(|| a.input.clone());
    let settings_path = a.settings.clone().unwrap_or_else(|| with_suffix(&base, ".settings.txt"));
    let diag_path = a.diagnostics.clone().unwrap_or_else(|| with_suffix(&base, ".diagnostics.csv"));
    let mut rec = RunRecorder::new("autoeq", ctx.threads);
    rec.config("window", stft.window_len)
        .config("sigma", sigma)
        .config("limit_db", limit)
        .config("class_override", a.class_override.as_deref().unwrap_or(""))
        .config("dry_run", a.dry_run)
        .config("peak_normalize", a.peak_normalize)
        .input(&a.input)
        .input(&a.bank)
        .input(&a.ckpt);
    if let (Some(path), Some(processed)) = (&a.out, &out.audio) {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        processed.write_wav(path)?;
        rec.output(path);
    }
    let mut w = create(&settings_path)?;
    writeln!(w, "# class: {}", out.result.predicted_class).map_err(|e| CliError::io(&settings_path, e))?;
    writeln!(w, "# residual_mae_db: {}", fmt_sig9(out.result.residual_mae_db))
        .map_err(|e| CliError::io(&settings_path, e))?;
    out.result.settings.write_document(&mut w)?;
    finish(w, &settings_path)?;
    let mut w = create(&diag_path)?;
    out.result.write_diagnostics(&mut w)?;
    finish(w, &diag_path)?;
    rec.output(&settings_path).output(&diag_path);
    rec.finish(None)?;
    println!(
        "class {}, residual {:.3} dB{}",
        out.result.predicted_class,
        out.result.residual_mae_db,
        if a.dry_run { " (dry run)" } else { "" }
    );
    Ok(())
}

fn demo_corpus(ctx: &Ctx, a: crate::DemoCorpusArgs) -> Result<(), CliError> {
    let per_class = ctx.cfg.pick(a.per_class, "per_class", 10)?;
    let seed = ctx.cfg.pick(a.seed, "seed", 0)?;
    let d = DemoConfig::default();
    let duration = ctx.cfg.pick(a.duration, "duration", d.duration_s)?;
    if per_class == 0 || !(duration > 0.0 && duration.is_finite()) {
        return Err(CliError::Usage("per-class and duration must be positive".into()));
    }
    let cfg = DemoConfig {
        duration_s: duration,
        ..d
    };
    let entries = write_demo_corpus(&a.out_dir, per_class, seed, &cfg)?;
    let manifest = a.out_dir.join("manifest.csv");
    let mut rec = RunRecorder::new("demo-corpus", ctx.threads);
    rec.config("per_class", per_class)
        .config("duration", duration)
        .seed("seed", seed)
        .output(&manifest);
    for e in &entries {
        rec.output(&e.path);
    }
    rec.finish(None)?;
    println!("{} clips -> {}", entries.len(), manifest.display());
    Ok(())
}

/// Representative single-band settings used for the response plots: each
/// band at its geometric mid frequency, half-range cut and boost.
fn example_settings() -> Vec<(String, EqSettings)> {
    let mut out = Vec::new();
    for (idx, r) in BAND_RANGES.iter().enumerate() {
        let mid = (r.f_min * r.f_max).sqrt();
        let qs: Vec<f64> = if r.q_is_fixed() { vec![r.q_min] } else { vec![0.5, 2.0] };
        for gain in [r.g_min / 2.0, r.g_max / 2.0] {
            for &q in &qs {
                let mut s = EqSettings::flat();
                s.bands[idx] = BandParams {
                    kind: r.kind,
                    freq_hz: mid,
                    gain_db: gain,
                    q,
                };
                out.push((format!("band{}_{}_g{gain}_q{q}", idx + 1, r.kind), s));
            }
        }
    }
    out
}

fn write_series<W: Write>(w: &mut csv::Writer<W>, name: &str, s: &SpectrumDb) -> Result<(), CliError> {
    for (f, v) in LogFrequencyGrid::canonical().freqs().iter().zip(s.values()) {
        w.write_record([name, &fmt_sig9(*f), &fmt_sig9(*v)])
            .map_err(|e| CliError::Core(e.into()))?;
    }
    Ok(())
}

fn plot_data(ctx: &Ctx, a: crate::PlotDataArgs) -> Result<(), CliError> {
    std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
    let mut rec = RunRecorder::new("plot-data", ctx.threads);

    let responses = a.out_dir.join("band_responses.csv");
    {
        let mut w = csv::Writer::from_writer(create(&responses)?);
        w.write_record(["series", "freq_hz", "value_db"]).map_err(|e| CliError::Core(e.into()))?;
        for (name, s) in example_settings() {
            let resp = cascade_response_db_with(&s, LogFrequencyGrid::canonical(), ANALYSIS_RATE as f64, PeakDesign::Cookbook)?;
            write_series(&mut w, &name, &resp)?;
        }
        w.flush().map_err(|e| CliError::io(&responses, e))?;
    }
    rec.output(&responses);

    if let Some(bank_path) = &a.bank {
        let bank = load_bank(bank_path)?;
        let p = a.out_dir.join("targets.csv");
        let mut w = create(&p)?;
        bank.write_csv(&mut w)?;
        finish(w, &p)?;
        rec.input(bank_path).output(&p);
    }

    match (&a.ckpt, &a.data) {
        (Some(ckpt), Some(data_path)) => {
            let model = load_model(ckpt)?;
            let data = Dataset::load(data_path)?;
            let count = ctx.cfg.pick(a.count, "count", 8)?.min(data.len());
            let p = a.out_dir.join("matches.csv");
            let mut w = csv::Writer::from_writer(create(&p)?);
            w.write_record(["series", "freq_hz", "value_db"]).map_err(|e| CliError::Core(e.into()))?;
            for (i, r) in data.records.iter().take(count).enumerate() {
                let settings = predict_settings(&model, &r.curve)?;
                let resp = cascade_response_db_with(
                    &settings,
                    LogFrequencyGrid::canonical(),
                    ANALYSIS_RATE as f64,
                    model.peak_design,
                )?;
                write_series(&mut w, &format!("example_{i}_curve"), &r.curve)?;
                write_series(&mut w, &format!("example_{i}_matched"), &resp)?;
            }
            w.flush().map_err(|e| CliError::io(&p, e))?;
            rec.config("count", count).input(ckpt).input(data_path).output(&p);
        }
        (None, None) => {}
        _ => return Err(CliError::Usage("--ckpt and --data must be given together".into())),
    }
    rec.finish(Some(&a.out_dir.join("plot-data.manifest.json")))?;
    println!("plot data -> {}", a.out_dir.display());
    Ok(())
}
