use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use log::{info, warn};
use ssyn::array::script::{self, Script, ScriptError, READ_CSV_HEADER};
use ssyn::array::{ArrayConfig, ArrayError, HistoryInit, ReadoutConfig};
use ssyn::bench::{self, BenchResult, BENCH_AMPLITUDE, CSV_HEADER};
use ssyn::fit::{self, FitError, MapDegree};
use ssyn::paramfile::{Defaults, ParamError, ParameterBundle};
use ssyn::transform::DEFAULT_DEGREE;
use ssyn::waveform::io::{load_features, read_trace, save_features, write_trace};
use ssyn::waveform::{extract_features, ExtractConfig, WaveformError};
use ssyn::{synth, CellArray, ConductionModel, Execution};

use crate::{
    BenchArgs, BenchModeArg, DegreeArg, ExtractArgs, Failure, FitArgs, GenerateArgs, HistoryArg, Outcome, Preset,
    ReadoutArgs, SimArgs, SynthArgs, TraceFormat,
};

fn usage(e: impl Into<anyhow::Error>, ctx: impl Display) -> Failure {
    Failure::Usage(e.into().context(ctx.to_string()))
}

fn invalid(e: impl Into<anyhow::Error>, ctx: impl Display) -> Failure {
    Failure::Invalid(e.into().context(ctx.to_string()))
}

fn waveform_failure(e: WaveformError, ctx: impl Display) -> Failure {
    match e {
        WaveformError::Io(_) | WaveformError::Csv(_) | WaveformError::Format(_) => usage(e, ctx),
        _ => invalid(e, ctx),
    }
}

fn param_failure(e: ParamError, ctx: impl Display) -> Failure {
    match e {
        ParamError::Invalid(_) => invalid(e, ctx),
        _ => usage(e, ctx),
    }
}

fn fit_failure(e: FitError, ctx: impl Display) -> Failure {
    match e {
        FitError::Param(p) => param_failure(p, ctx),
        FitError::Sidecar(_) => usage(e, ctx),
        _ => invalid(e, ctx),
    }
}

fn script_failure(e: ScriptError, ctx: impl Display) -> Failure {
    match e {
        ScriptError::Array(_) => invalid(e, ctx),
        _ => usage(e, ctx),
    }
}

/// `dir/stem<suffix>` for `dir/stem.ext`.
fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| usage(e, path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| usage(e, path.display()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| usage(e, path.display()))
}

fn load_bundle(path: &Path) -> Result<ParameterBundle, Failure> {
    ParameterBundle::load(path).map_err(|e| param_failure(e, path.display()))
}

fn indexed<T: Copy>(v: &[T]) -> Vec<(usize, T)> {
    v.iter().copied().enumerate().collect()
}

pub fn extract(a: ExtractArgs) -> Outcome {
    let mut cfg = ExtractConfig {
        samples_per_cycle: a.samples_per_cycle,
        smoothing: !a.no_smoothing,
        ..ExtractConfig::default()
    };
    if let Some(t) = a.set_threshold {
        cfg.set_threshold = t;
    }
    if let Some(p) = a.reset_prominence {
        cfg.reset_prominence = p;
    }
    if let Some(f) = a.max_excluded {
        cfg.max_excluded_fraction = f;
    }
    let trace = read_trace(&a.input, cfg.samples_per_cycle).map_err(|e| waveform_failure(e, a.input.display()))?;
    let ex = extract_features(&trace, &cfg, &a.exec.execution()).map_err(|e| waveform_failure(e, "extraction"))?;
    info!(
        "{} of {} cycles extracted",
        ex.report.extracted, ex.report.total_cycles
    );
    save_features(&a.output, &ex.features).map_err(|e| waveform_failure(e, a.output.display()))?;
    let report = a.report.unwrap_or_else(|| with_suffix(&a.output, ".report.json"));
    write_json(&report, &ex.report)?;
    match fit::conduction_from_fits(&ex.fits, &cfg) {
        Ok(model) => {
            let side = fit::sidecar_path(&a.output);
            fit::save_conduction(&side, &model).map_err(|e| usage(e, side.display()))?;
        }
        Err(e) => warn!("no conduction model estimated: {e}"),
    }
    Ok(())
}

pub fn fit(a: FitArgs) -> Outcome {
    let rows = load_features(&a.features).map_err(|e| waveform_failure(e, a.features.display()))?;
    let feats: Vec<_> = rows.iter().map(|(_, f)| *f).collect();
    let conduction = match &a.conduction {
        Some(p) => fit::load_conduction(p)
            .map_err(|e| fit_failure(e, p.display()))?
            .ok_or_else(|| usage(anyhow!("file not found"), p.display()))?,
        None => {
            let side = fit::sidecar_path(&a.features);
            match fit::load_conduction(&side).map_err(|e| fit_failure(e, side.display()))? {
                Some(m) => m,
                None => {
                    warn!("{} not found; using the default conduction model", side.display());
                    ConductionModel::default()
                }
            }
        }
    };
    let mut orders: Vec<usize> = a.orders.iter().map(|&p| p as usize).collect();
    orders.sort_unstable();
    orders.dedup();
    let degree = match a.degree {
        DegreeArg::Fixed(d) => MapDegree::Fixed(d),
        DegreeArg::Auto => MapDegree::Auto(DEFAULT_DEGREE),
    };
    let (bundle, diag) =
        fit::fit_bundle(&feats, conduction, &orders, degree, Defaults::default()).map_err(|e| fit_failure(e, "fit"))?;
    info!("map degrees {:?}", diag.map_degrees);
    for d in &diag.orders {
        info!("p = {}: spectral radius {:.4}", d.p, d.spectral_radius);
    }
    bundle.save(&a.output).map_err(|e| param_failure(e, a.output.display()))?;
    let diag_path = a.diagnostics.unwrap_or_else(|| with_suffix(&a.output, ".diagnostics.json"));
    write_json(&diag_path, &diag)
}

pub fn generate(a: GenerateArgs) -> Outcome {
    let bundle = load_bundle(&a.params.params)?;
    let feats = bundle.generate(a.order, a.n, a.seed).ok_or_else(|| {
        usage(
            anyhow!("no model of order {:?}; available: {:?}", a.order, bundle.orders()),
            a.params.params.display(),
        )
    })?;
    save_features(&a.output, &indexed(&feats)).map_err(|e| waveform_failure(e, a.output.display()))
}

fn readout_config(base: ReadoutConfig, a: &ReadoutArgs) -> Result<ReadoutConfig, Failure> {
    let mut cfg = base;
    if let Some(v) = a.u_read {
        cfg.u_read = v;
    }
    if let Some(v) = a.bits {
        cfg.n_bits = v;
    }
    if let Some(v) = a.i_min {
        cfg.i_min = v;
    }
    if let Some(v) = a.i_max {
        cfg.i_max = v;
    }
    if let Some(v) = a.bandwidth {
        cfg.delta_f = v;
    }
    if let Some(v) = a.temperature {
        cfg.temperature = v;
    }
    if a.no_noise {
        cfg.noise_enabled = false;
    }
    cfg.validate().map_err(|e| usage(anyhow!(e), "readout configuration"))?;
    Ok(cfg)
}

fn load_script(a: &SimArgs) -> Result<Script, Failure> {
    match (a.preset, &a.pulses, &a.reads) {
        (Some(Preset::FullCycling), _, _) => Ok(script::full_cycling(a.cycles, a.pulses_per_half, a.u_neg, a.u_pos)),
        (Some(Preset::Multilevel), _, _) => {
            let levels = script::ramp_levels(a.from, a.to, a.cycles);
            Ok(script::multilevel(&levels, a.pulses_per_half, a.u_neg))
        }
        (None, Some(p), Some(r)) => {
            let pulses = File::open(p)
                .map_err(ScriptError::from)
                .and_then(script::parse_pulse_script)
                .map_err(|e| script_failure(e, p.display()))?;
            let reads = File::open(r)
                .map_err(ScriptError::from)
                .and_then(script::parse_read_script)
                .map_err(|e| script_failure(e, r.display()))?;
            Ok(Script::from_parts(&pulses, &reads))
        }
        _ => Err(Failure::Usage(anyhow!("give --preset or both --pulses and --reads"))),
    }
}

fn default_order(bundle: &ParameterBundle, order: Option<usize>) -> Result<usize, Failure> {
    let pick = match order {
        Some(p) => bundle.model(p).map(|m| m.p),
        None => bundle.model(ssyn::svar::DEFAULT_ORDER).or_else(|| bundle.select(None)).map(|m| m.p),
    };
    pick.ok_or_else(|| Failure::Usage(anyhow!("no model of order {:?}; available: {:?}", order, bundle.orders())))
}

pub fn sim(a: SimArgs) -> Outcome {
    let bundle = load_bundle(&a.params.params)?;
    let p = default_order(&bundle, a.order)?;
    let readout = readout_config(bundle.defaults.readout, &a.readout)?;
    let script = load_script(&a)?;
    let mut cfg = ArrayConfig::new(a.m as usize, a.a.unwrap_or(bundle.defaults.a), a.seed);
    cfg.history = match a.history {
        HistoryArg::Stationary => HistoryInit::Stationary,
        HistoryArg::BurnIn => HistoryInit::BurnIn,
        HistoryArg::Mean => HistoryInit::Mean,
    };
    cfg.exec = a.exec.execution();
    let mut array = CellArray::from_bundle(&bundle, p, &cfg).map_err(|e| match e {
        ArrayError::NegativeScale(_) => usage(e, "--a"),
        e => invalid(e, "array initialisation"),
    })?;
    if let Some(path) = &a.script_out {
        let mut w = create(path)?;
        script
            .write_pulses(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| usage(e, path.display()))?;
    }
    let mut out = create(&a.output)?;
    writeln!(out, "{READ_CSV_HEADER}").map_err(|e| usage(e, a.output.display()))?;
    let report = script::run_script(&mut array, &script, &readout, |row| script::write_read_row(&mut out, &row))
        .map_err(|e| script_failure(e, "simulation"))?;
    out.flush().map_err(|e| usage(e, a.output.display()))?;
    info!(
        "{} pulses: {} SET, {} partial RESET, {} full RESET, {} no-op",
        script.pulse_count(),
        report.set,
        report.partial_reset,
        report.full_reset,
        report.noop
    );
    if let Some(path) = &a.state {
        let mut w = create(path)?;
        array
            .write_state_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| usage(e, path.display()))?;
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct BenchMeta {
    timing: &'static str,
    seed: u64,
    pulses: usize,
    reads: usize,
    amplitude: f64,
    u_read: f64,
    parallel_feature: bool,
    available_threads: usize,
}

pub fn bench(a: BenchArgs) -> Outcome {
    let bundle = load_bundle(&a.params.params)?;
    for &p in &a.orders {
        if bundle.model(p).is_none() {
            return Err(Failure::Usage(anyhow!("no model of order {p}; available: {:?}", bundle.orders())));
        }
    }
    if a.threads.iter().any(|&t| t > 1) && !cfg!(feature = "parallel") {
        warn!("built without the `parallel` feature; all runs are sequential");
    }
    let mut cfg = bundle.defaults.readout;
    cfg.u_read = ssyn::conduction::DEFAULT_U0;
    let schedule = bench::alternating_schedule(a.pulses);
    let mut out = create(&a.output)?;
    let io = |e: std::io::Error| usage(e, a.output.display());
    writeln!(out, "{CSV_HEADER}").map_err(io)?;
    for &m in &a.m {
        for &p in &a.orders {
            for &t in &a.threads {
                let exec = Execution::threads(t as usize);
                let mut array = bench::bench_array(&bundle, m as usize, p, a.seed, exec)
                    .map_err(|e| invalid(e, "array initialisation"))?;
                let mut rows: Vec<BenchResult> = Vec::new();
                if a.mode != BenchModeArg::Read {
                    rows.push(bench::time_writes(&mut array, &schedule).map_err(|e| invalid(e, "write benchmark"))?);
                }
                if a.mode != BenchModeArg::Write {
                    rows.push(bench::time_reads(&mut array, &cfg, a.reads));
                }
                for r in &rows {
                    info!(
                        "{} m={} p={} threads={}: {:.3e} ops/s",
                        r.mode.as_str(),
                        r.m,
                        r.p,
                        r.threads,
                        r.ops_per_second()
                    );
                    bench::write_csv_row(&mut out, r).map_err(io)?;
                }
            }
        }
    }
    out.flush().map_err(io)?;
    write_json(
        &with_suffix(&a.output, ".meta.json"),
        &BenchMeta {
            timing: "only whole-array pulse and read calls are timed; schedule generation, array setup and file I/O are excluded",
            seed: a.seed,
            pulses: a.pulses,
            reads: a.reads,
            amplitude: BENCH_AMPLITUDE,
            u_read: cfg.u_read,
            parallel_feature: cfg!(feature = "parallel"),
            available_threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    )
}

pub fn synth(a: SynthArgs) -> Outcome {
    let dir = &a.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| usage(e, dir.display()))?;
    let corpus = synth::corpus(a.n as usize, a.seed);
    let params = dir.join("params.ssyn");
    corpus.bundle.save(&params).map_err(|e| param_failure(e, params.display()))?;
    let features = dir.join("features.csv");
    save_features(&features, &indexed(&corpus.features)).map_err(|e| waveform_failure(e, features.display()))?;
    let trace = dir.join(match a.trace_format {
        TraceFormat::Iuw => "trace.iuw",
        TraceFormat::Csv => "trace.csv",
    });
    write_trace(&trace, &corpus.trace).map_err(|e| waveform_failure(e, trace.display()))?;
    info!("wrote {}, {} and {}", params.display(), features.display(), trace.display());
    Ok(())
}
