use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use laimpute::baselines::{self, BaselineConfig};
use laimpute::eval::{self, BenchmarkConfig};
use laimpute::kv::{KvConfig, KvMap};
use laimpute::net::{init_params, load_checkpoint, save_checkpoint, Arch, Dims};
use laimpute::sar::{self, QueganParams, VarianceMode};
use laimpute::series::{read_csv, write_csv, TimeSeriesRecord};
use laimpute::synth::{self, PhenologyConfig};
use laimpute::train::{self, GradProblem, Imputer, TrainConfig, FEATURES};

use crate::config::{layered, split, subset};
use crate::{Command, Global};

pub enum Status {
    Ok,
    Failed,
}

/// The single `key=value` line printed by every subcommand.
struct Summary(Vec<String>);

impl Summary {
    fn new(command: &str) -> Self {
        Self(vec![format!("command={command}")])
    }

    fn add(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.0.push(format!("{key}={value}"));
        self
    }

    fn print(&self) {
        println!("{}", self.0.join(" "));
    }
}

fn require_file(path: &Path) -> Result<()> {
    ensure!(path.is_file(), "input {} does not exist", path.display());
    Ok(())
}

fn join<T: Display>(values: &[T]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "empty".into(), |x| format!("{x:.6}"))
}

/// Seed for a sub-component, so components never share a random stream.
fn derived_seed(seed: u64, tag: u64) -> u64 {
    seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

pub fn run(g: &Global, command: Command) -> Result<Status> {
    let map = layered(g.config.as_deref(), &g.set)?;
    match command {
        Command::Simulate { out } => simulate(g, &map, &out),
        Command::Denoise { input, out } => denoise(&map, &input, &out),
        Command::Train {
            data,
            arch,
            out,
            loss_trace,
        } => train_cmd(g, &map, &data, arch, &out, loss_trace.as_deref()),
        Command::Impute { data, checkpoint, out } => impute(&map, &data, &checkpoint, &out),
        Command::Baseline {
            data,
            method,
            out,
            models,
        } => baseline(&map, &data, method, &out, models.as_deref()),
        Command::Evaluate {
            gapped,
            truth,
            methods,
            report,
            plot_dir,
        } => evaluate(g, &map, &gapped, &truth, &methods, &report, plot_dir.as_deref()),
        Command::Gradcheck => gradcheck(g, &map),
    }
}

const SIMULATE_EXTRA: &[&str] = &["n_series", "speckle", "speckle_size", "speckle_bands", "speckle_looks"];

fn simulate(g: &Global, map: &KvMap, out: &Path) -> Result<Status> {
    let mut pheno: PhenologyConfig = split(map, SIMULATE_EXTRA)?;
    if let Some(seed) = g.seed {
        pheno.seed = seed;
    }
    let extra = subset(map, SIMULATE_EXTRA);
    let n_series: usize = extra.get("n_series")?.unwrap_or(250);
    let speckle: bool = extra.get("speckle")?.unwrap_or(false);
    let size: usize = extra.get("speckle_size")?.unwrap_or(128);
    let bands: usize = extra.get("speckle_bands")?.unwrap_or(32);
    let looks: f64 = extra.get("speckle_looks")?.unwrap_or(4.0);
    ensure!(size > 0 && bands > 0, "speckle_size and speckle_bands must be positive");

    let t0 = Instant::now();
    let data = synth::gen_dataset(&pheno, n_series)?;
    let stack = if speckle {
        // smooth backscatter field between -20 and -10 dB
        let truth: Vec<f32> = (0..size * size)
            .map(|i| {
                let (r, c) = ((i / size) as f64 / size as f64, (i % size) as f64 / size as f64);
                let db = -15.0 + 5.0 * (std::f64::consts::TAU * r).sin() * (std::f64::consts::PI * c).cos();
                10f64.powf(db / 10.0) as f32
            })
            .collect();
        let times = (0..bands).map(|b| b as f64 * 12.0).collect();
        Some(synth::gen_speckle_stack(
            size,
            size,
            &truth,
            times,
            looks,
            derived_seed(pheno.seed, 1),
        )?)
    } else {
        None
    };

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let gapped_path = out.join("gapped.csv");
    let truth_path = out.join("truth.csv");
    write_csv(&data.gapped, &gapped_path)?;
    write_csv(&data.truth, &truth_path)?;
    fs::write(out.join("config.kv"), pheno.to_kv().to_text())?;
    let speckle_path = match &stack {
        Some(s) => {
            let p = out.join("speckle.hdr");
            sar::write_raster(s, &p)?;
            p.display().to_string()
        }
        None => "none".into(),
    };

    let steps: usize = data.gapped.iter().map(TimeSeriesRecord::len).sum();
    let observed: usize = data
        .gapped
        .iter()
        .map(|r| r.lai_mask().iter().filter(|&&m| m).count())
        .sum();
    Summary::new("simulate")
        .add("seed", pheno.seed)
        .add("n_series", n_series)
        .add("steps", steps)
        .add("lai_observed_frac", format!("{:.4}", observed as f64 / steps as f64))
        .add("gapped", gapped_path.display())
        .add("truth", truth_path.display())
        .add("speckle", speckle_path)
        .add("elapsed_s", format!("{:.3}", t0.elapsed().as_secs_f64()))
        .print();
    Ok(Status::Ok)
}

const DENOISE_KEYS: &[&str] = &["window", "looks", "variance_mode"];

fn denoise(map: &KvMap, input: &Path, out: &Path) -> Result<Status> {
    map.check_keys(DENOISE_KEYS)?;
    let mut params = QueganParams::default();
    map.update("window", &mut params.window)?;
    map.update("looks", &mut params.looks)?;
    if let Some(mode) = map.get_str("variance_mode") {
        params.variance_mode = match mode {
            "linear" => VarianceMode::Linear,
            "squared" => VarianceMode::Squared,
            other => bail!("variance_mode must be linear or squared, got {other:?}"),
        };
    }
    require_file(input)?;

    let stack = sar::read_raster(input).with_context(|| format!("reading {}", input.display()))?;
    let filtered = sar::quegan_filter(&stack, &params)?;
    let before = sar::band_means(&stack);
    let after = sar::band_means(&filtered.denoised);
    let var_in = sar::mean_temporal_variance(&stack);
    let var_out = sar::mean_temporal_variance(&filtered.denoised);
    let max_shift = before
        .iter()
        .zip(&after)
        .map(|(b, a)| if *b != 0.0 { ((a - b) / b).abs() } else { 0.0 })
        .fold(0.0, f64::max);

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    sar::write_raster(&filtered.denoised, out.join("denoised.hdr"))?;
    sar::write_raster(&filtered.variance, out.join("variance.hdr"))?;

    let round = |v: &[f64]| v.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>();
    Summary::new("denoise")
        .add("bands", stack.bands())
        .add("pixels", stack.pixels())
        .add("valid_pixels", filtered.valid.iter().filter(|&&v| v).count())
        .add("window", params.window)
        .add("looks", params.looks)
        .add(
            "variance_factor",
            if var_in > 0.0 {
                format!("{:.6}", var_out / var_in)
            } else {
                "nan".into()
            },
        )
        .add("max_mean_shift", format!("{max_shift:.6}"))
        .add("mean_before", join(&round(&before)))
        .add("mean_after", join(&round(&after)))
        .print();
    Ok(Status::Ok)
}

fn train_config(g: &Global, map: &KvMap) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = split(map, &[])?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn train_cmd(
    g: &Global,
    map: &KvMap,
    data: &Path,
    arch: Arch,
    out: &Path,
    loss_trace: Option<&Path>,
) -> Result<Status> {
    let cfg = train_config(g, map)?;
    require_file(data)?;
    let records = read_csv(data)?;
    let t0 = Instant::now();
    let outcome = train::train_with(&records, arch, &cfg, |epoch, loss| {
        log::info!("epoch {epoch} loss {loss:.6}");
    })?;
    save_checkpoint(&outcome.imputer.to_checkpoint(), out)?;
    if let Some(p) = loss_trace {
        fs::write(p, train::loss_trace_csv(&outcome.loss_trace))?;
    }
    Summary::new("train")
        .add("arch", arch)
        .add("seed", cfg.seed)
        .add("series", records.len())
        .add("epochs", cfg.epochs)
        .add("params", outcome.imputer.params.len())
        .add(
            "final_loss",
            format!("{:.6}", outcome.loss_trace.last().copied().unwrap_or(f64::NAN)),
        )
        .add("skipped_windows", outcome.skipped)
        .add("checkpoint", out.display())
        .add("elapsed_s", format!("{:.3}", t0.elapsed().as_secs_f64()))
        .print();
    Ok(Status::Ok)
}

/// Applies `fill` per record; failures keep the record as read and are
/// counted. Nothing is written when every record fails.
fn fill_all(
    records: &[TimeSeriesRecord],
    out: &Path,
    fill: impl Fn(&TimeSeriesRecord) -> laimpute::Result<TimeSeriesRecord>,
) -> Result<(usize, usize)> {
    let mut filled = 0;
    let mut failed = 0;
    let mut output = Vec::with_capacity(records.len());
    for r in records {
        match fill(r) {
            Ok(done) => {
                filled += r.lai_mask().iter().filter(|&&m| !m).count();
                output.push(done);
            }
            Err(e) => {
                log::warn!("series {}: {e}", r.series_id());
                failed += 1;
                output.push(r.clone());
            }
        }
    }
    if failed == records.len() && !records.is_empty() {
        bail!("every series failed");
    }
    write_csv(&output, out)?;
    Ok((filled, failed))
}

fn impute(map: &KvMap, data: &Path, checkpoint: &Path, out: &Path) -> Result<Status> {
    map.check_keys(&[])?;
    require_file(data)?;
    require_file(checkpoint)?;
    let imputer = Imputer::from_checkpoint(load_checkpoint(checkpoint)?)?;
    let records = read_csv(data)?;
    let (filled, failed) = fill_all(&records, out, |r| imputer.impute(r))?;
    Summary::new("impute")
        .add("arch", imputer.params.arch())
        .add("series", records.len())
        .add("filled", filled)
        .add("failed", failed)
        .add("out", out.display())
        .print();
    Ok(Status::Ok)
}

fn baseline(map: &KvMap, data: &Path, method: baselines::Method, out: &Path, models: Option<&Path>) -> Result<Status> {
    map.check_keys(&["degree", "smooth_window"])?;
    let mut cfg = BaselineConfig {
        method,
        ..BaselineConfig::default()
    };
    map.update("degree", &mut cfg.degree)?;
    map.update("smooth_window", &mut cfg.smooth_window)?;
    require_file(data)?;
    let records = read_csv(data)?;
    let (filled, failed) = fill_all(&records, out, |r| baselines::baseline_impute(r, &cfg))?;
    if let Some(path) = models {
        let mut kv = KvMap::new();
        for r in &records {
            if let Ok(m) = baselines::fit_record(r, &cfg) {
                let fitted = m.to_kv();
                for k in fitted.keys() {
                    kv.insert(format!("{}.{k}", r.series_id()), fitted.get_str(k).unwrap_or_default());
                }
            }
        }
        fs::write(path, kv.to_text())?;
    }
    Summary::new("baseline")
        .add("method", method)
        .add("series", records.len())
        .add("filled", filled)
        .add("failed", failed)
        .add("out", out.display())
        .print();
    Ok(Status::Ok)
}

fn evaluate(
    g: &Global,
    map: &KvMap,
    gapped: &Path,
    truth: &Path,
    methods: &str,
    report: &Path,
    plot_dir: Option<&Path>,
) -> Result<Status> {
    let mut cfg: BenchmarkConfig = split(map, &[])?;
    if let Some(seed) = g.seed {
        cfg.train.seed = seed;
    }
    let methods = eval::Method::parse_list(methods)?;
    require_file(gapped)?;
    require_file(truth)?;
    let gapped = read_csv(gapped)?;
    let truth = read_csv(truth)?;
    let t0 = Instant::now();
    let outcome = eval::run_benchmark(&gapped, &truth, &methods, &cfg)?;
    fs::write(report, outcome.report.to_text())?;
    if let Some(dir) = plot_dir {
        let ids: Vec<String> = outcome.test_gapped.iter().map(|r| r.series_id().to_string()).collect();
        eval::emit_plot_data(&outcome, &ids, dir)?;
    }

    let mut summary = Summary::new("evaluate");
    summary
        .add("seed", cfg.train.seed)
        .add("test_series", outcome.test_gapped.len());
    let mut status = Status::Ok;
    for r in &outcome.report.methods {
        let m = r.method.name();
        summary
            .add(&format!("{m}.rmse"), fmt_opt(r.overall.rmse))
            .add(&format!("{m}.green_up"), fmt_opt(r.green_up.rmse))
            .add(&format!("{m}.senescence"), fmt_opt(r.senescence.rmse))
            .add(&format!("{m}.failed"), r.failed);
        if r.wholly_failed() {
            log::error!(
                "{m} failed on every test series: {}",
                r.first_error.as_deref().unwrap_or("?")
            );
            status = Status::Failed;
        }
    }
    summary
        .add("report", report.display())
        .add("elapsed_s", format!("{:.3}", t0.elapsed().as_secs_f64()))
        .print();
    Ok(status)
}

const GRADCHECK_KEYS: &[&str] = &[
    "arch",
    "hidden",
    "dense",
    "lengths",
    "step",
    "tolerance",
    "dropout_seed",
    "seed",
];

fn gradcheck(g: &Global, map: &KvMap) -> Result<Status> {
    map.check_keys(GRADCHECK_KEYS)?;
    let archs = match map.get_str("arch").unwrap_or("both") {
        "both" => vec![Arch::Lstm, Arch::BiLstm],
        other => vec![other.parse::<Arch>()?],
    };
    let hidden: usize = map.get("hidden")?.unwrap_or(60);
    let dense: usize = map.get("dense")?.unwrap_or(50);
    let step: f64 = map.get("step")?.unwrap_or(1e-5);
    let tolerance: f64 = map.get("tolerance")?.unwrap_or(1e-6);
    let dropout_seed: Option<u64> = map.get("dropout_seed")?;
    let seed = g.seed.or(map.get("seed")?).unwrap_or(0);
    let lengths: Vec<usize> = map
        .get_str("lengths")
        .unwrap_or("1,3,8")
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .context("lengths must be a comma-separated list of integers")?;
    ensure!(lengths.iter().all(|&l| l > 0), "lengths must be positive");

    let t0 = Instant::now();
    let mut worst = 0.0f64;
    let mut passed = true;
    let mut summary = Summary::new("gradcheck");
    summary.add("seed", seed);
    for arch in archs {
        let params = init_params(seed, arch, Dims::new(FEATURES, hidden, dense, 1), 0.5)?;
        let mut arch_worst = 0.0f64;
        for &len in &lengths {
            let mut problem = GradProblem::random(derived_seed(seed, len as u64), len, FEATURES, 1);
            problem.dropout_seed = dropout_seed;
            let report = train::gradient_check(&params, &problem, step, tolerance)?;
            for b in report.blocks.iter().filter(|b| !b.passed) {
                log::warn!(
                    "{arch} T={len} block {} index {}: analytic {} numeric {} rel {}",
                    b.block.name(),
                    b.worst_index,
                    b.analytic,
                    b.numeric,
                    b.worst_rel_error
                );
            }
            log::info!("{arch} T={len} worst {:.3e}", report.worst_rel_error);
            arch_worst = arch_worst.max(report.worst_rel_error);
            passed &= report.passed;
        }
        summary.add(&format!("{arch}.worst_rel_error"), format!("{arch_worst:.3e}"));
        worst = worst.max(arch_worst);
    }
    summary
        .add("worst_rel_error", format!("{worst:.3e}"))
        .add("tolerance", tolerance)
        .add("passed", passed)
        .add("elapsed_s", format!("{:.3}", t0.elapsed().as_secs_f64()))
        .print();
    Ok(if passed { Status::Ok } else { Status::Failed })
}
