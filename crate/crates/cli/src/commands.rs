use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use ionmag::bayes::{FrequencyEstimate, PosteriorGrid};
use ionmag::design::{analysis_phase_offset, candidate_ladder, utility_profile};
use ionmag::export::{posterior_csv, read_trace, trace_csv, write_atomic, write_json, CampaignSummary, TraceRow};
use ionmag::mle::mle_fit;
use ionmag::physics::{angular_to_hz, chi_ratio, hz_to_angular, Manifold, PhysicsConstants};
use ionmag::protocols::{
    adaptive_campaign, dual_manifold_campaign, incremental_campaign, propagate_separation, AdaptiveSettings,
    IncrementalResult, PhaseUnwrapper, SeparationResult,
};
use ionmag::sim::{duration, stream_rng, CycleConfig, ParityOutcome};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{CampaignConfig, PriorConfig, Protocol};

/// Output prefix, placed under `IONMAG_OUT_DIR` when that is set and the
/// prefix is relative.
pub fn output_prefix(out: &Path) -> PathBuf {
    match env::var_os("IONMAG_OUT_DIR") {
        Some(dir) if out.is_relative() => Path::new(&dir).join(out),
        _ => out.to_path_buf(),
    }
}

fn output_file(prefix: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}.{suffix}", prefix.to_string_lossy()))
}

/// Everything one campaign writes, produced before any file is touched.
struct RunOutput {
    summary: Value,
    files: Vec<(String, Vec<u8>)>,
    metrics: Vec<(&'static str, f64)>,
}

fn single_outputs(
    tag: &str,
    result: &ionmag::protocols::CampaignResult,
    files: &mut Vec<(String, Vec<u8>)>,
) -> Result<()> {
    files.push((format!("{tag}trace.csv"), trace_csv(result)?));
    if let Some(grid) = &result.posterior {
        files.push((format!("{tag}posterior.csv"), posterior_csv(grid)?));
    }
    Ok(())
}

fn campaign_metrics(summary: &CampaignSummary) -> Vec<(&'static str, f64)> {
    let mut m = vec![
        ("omega_mean_hz", summary.omega_mean),
        ("omega_err_hz", summary.omega_err),
        ("sensitivity_hz_per_rthz", summary.sensitivity),
    ];
    if let Some(t) = summary.tracking_sensitivity {
        m.push(("tracking_sensitivity_hz_per_rthz", t));
    }
    m
}

fn incremental_summary(result: &IncrementalResult) -> Value {
    let fit = &result.fit;
    let worst = fit.residuals.iter().map(|r| r.abs()).fold(0.0, f64::max);
    json!({
        "omega_hz": angular_to_hz(fit.omega),
        "omega_err_hz": angular_to_hz(fit.omega_err),
        "phi0_rad": fit.phi0,
        "phi0_err_rad": fit.phi0_err,
        "max_abs_residual_rad": worst,
        "unwrap_failed": result.unwrap_failed,
    })
}

fn separation_summary(r: &SeparationResult) -> Value {
    json!({
        "delta_b_t": r.delta_b,
        "delta_b_err_t": r.delta_b_err,
        "delta_omega_ac_s_hz": angular_to_hz(r.delta_omega_ac_s),
        "delta_omega_ac_s_err_hz": angular_to_hz(r.delta_omega_ac_s_err),
        "chi": r.chi_used,
    })
}

fn run_campaign(config: &CampaignConfig, seed: u64, replica: usize) -> Result<RunOutput> {
    let constants = config.constants()?;
    let field = config.field()?;
    let mut rng = stream_rng(seed, replica as u64);
    let mut files = Vec::new();
    let header = json!({ "units": "Hz", "mode": config.protocol.name(), "seed": seed, "replica": replica });
    let (detail, metrics) = match &config.protocol {
        Protocol::Incremental { manifold, schedule } => {
            let cycle = config.cycle_config(*manifold, &constants)?;
            let result = incremental_campaign(&schedule.times(), &cycle, &field, &constants, &mut rng)?;
            single_outputs("", &result.campaign, &mut files)?;
            let summary = CampaignSummary::new(&result.campaign);
            let mut metrics = campaign_metrics(&summary);
            metrics.push(("fit_omega_hz", angular_to_hz(result.fit.omega)));
            metrics.push(("fit_omega_err_hz", angular_to_hz(result.fit.omega_err)));
            (json!({ "campaign": summary, "fit": incremental_summary(&result) }), metrics)
        }
        Protocol::Adaptive {
            manifold,
            prior,
            settings,
        } => {
            let cycle = config.cycle_config(*manifold, &constants)?;
            let result = adaptive_campaign(settings, prior.grid()?, &cycle, &field, &constants, &mut rng)?;
            single_outputs("", &result, &mut files)?;
            let summary = CampaignSummary::new(&result);
            let metrics = campaign_metrics(&summary);
            let capture = result.capture_wall_time(settings.t_max);
            (json!({ "campaign": summary, "capture_wall_time_s": capture }), metrics)
        }
        Protocol::Dual {
            prior_s,
            prior_d,
            settings,
        } => {
            let cycle_s = config.cycle_config(Manifold::S, &constants)?;
            let cycle_d = config.cycle_config(Manifold::D, &constants)?;
            let r = dual_manifold_campaign(
                settings.n_cycles,
                [settings, settings],
                [prior_s.grid()?, prior_d.grid()?],
                [&cycle_s, &cycle_d],
                &field,
                &constants,
                &mut rng,
            )?;
            single_outputs("s.", &r.s, &mut files)?;
            single_outputs("d.", &r.d, &mut files)?;
            let metrics = vec![
                ("delta_b_t", r.delta_b),
                ("delta_b_err_t", r.delta_b_err),
                ("delta_omega_ac_s_hz", angular_to_hz(r.delta_omega_ac_s)),
                ("delta_omega_ac_s_err_hz", angular_to_hz(r.delta_omega_ac_s_err)),
            ];
            let detail = json!({
                "s": CampaignSummary::new(&r.s),
                "d": CampaignSummary::new(&r.d),
                "separation": separation_summary(&r),
            });
            (detail, metrics)
        }
        Protocol::UtilityProfile { .. } => bail!("utility-profile configs are run with `ionmag utility`"),
    };
    let mut summary = header;
    merge(&mut summary, detail);
    Ok(RunOutput {
        summary,
        files,
        metrics,
    })
}

fn merge(into: &mut Value, from: Value) {
    if let (Value::Object(a), Value::Object(b)) = (into, from) {
        a.extend(b);
    }
}

#[derive(Serialize)]
struct MetricStats {
    mean: f64,
    sd: f64,
    median: f64,
    min: f64,
    max: f64,
}

fn stats(values: &[f64]) -> MetricStats {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    let median = if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    };
    MetricStats {
        mean,
        sd,
        median,
        min: sorted[0],
        max: sorted[k - 1],
    }
}

fn write_outputs(prefix: &Path, output: &RunOutput) -> Result<()> {
    for (suffix, bytes) in &output.files {
        let path = output_file(prefix, suffix);
        write_atomic(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    let path = output_file(prefix, "summary.json");
    write_json(&path, &output.summary).with_context(|| format!("writing {}", path.display()))
}

pub fn simulate(config_path: &Path, seed: Option<u64>, out: &Path, replicas: usize) -> Result<Value> {
    let config = CampaignConfig::load(config_path)?;
    if let Protocol::UtilityProfile { .. } = config.protocol {
        bail!("utility-profile configs are run with `ionmag utility`");
    }
    let seed = seed
        .or(config.seed)
        .context("a seed is required: set `seed` in the config or pass --seed")?;
    ensure!(replicas >= 1, "--replicas must be at least 1");
    let outputs = (0..replicas)
        .into_par_iter()
        .map(|k| run_campaign(&config, seed, k).with_context(|| format!("replica {k}")))
        .collect::<Result<Vec<_>>>()?;

    let prefix = output_prefix(out);
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    if replicas == 1 {
        write_outputs(&prefix, &outputs[0])?;
        return Ok(outputs[0].summary.clone());
    }
    for (k, output) in outputs.iter().enumerate() {
        write_outputs(&output_file(&prefix, &format!("r{k}")), output)?;
    }
    let mut aggregate = serde_json::Map::new();
    for (name, _) in &outputs[0].metrics {
        let values: Vec<f64> = outputs
            .iter()
            .filter_map(|o| o.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v))
            .collect();
        aggregate.insert((*name).to_string(), serde_json::to_value(stats(&values))?);
    }
    let summary = json!({
        "units": "Hz",
        "mode": config.protocol.name(),
        "seed": seed,
        "replicas": replicas,
        "metrics": aggregate,
    });
    write_json(&output_file(&prefix, "replicas.json"), &summary)?;
    Ok(summary)
}

pub fn estimate(outcome: ParityOutcome) -> Result<Value> {
    let fit = mle_fit(&outcome)?;
    let mut value = serde_json::to_value(fit)?;
    merge(
        &mut value,
        json!({ "phi_half_width": fit.phi_half_width(), "phi_unidentified": fit.phi_unidentified() }),
    );
    Ok(value)
}

/// Prior, designer settings and cycle of a config that runs the Bayesian loop.
fn bayesian_setup(
    config: &CampaignConfig,
    requested: Option<Manifold>,
    constants: &PhysicsConstants,
) -> Result<(PriorConfig, AdaptiveSettings, CycleConfig, Option<f64>)> {
    let (prior, settings, manifold, contrast) = match &config.protocol {
        Protocol::Adaptive {
            manifold: m,
            prior,
            settings,
        } => (*prior, *settings, *m, None),
        Protocol::UtilityProfile {
            manifold: m,
            prior,
            settings,
            contrast,
        } => (*prior, *settings, *m, *contrast),
        Protocol::Dual {
            prior_s,
            prior_d,
            settings,
        } => match requested {
            Some(Manifold::S) => (*prior_s, *settings, Manifold::S, None),
            Some(Manifold::D) => (*prior_d, *settings, Manifold::D, None),
            None => bail!("dual configs need --manifold s or --manifold d"),
        },
        Protocol::Incremental { .. } => bail!("incremental configs have no prior"),
    };
    if let Some(m) = requested {
        ensure!(m == manifold, "--manifold does not match the config");
    }
    Ok((prior, settings, config.cycle_config(manifold, constants)?, contrast))
}

fn outcome_of(row: &TraceRow) -> Result<ParityOutcome> {
    Ok(ParityOutcome::new(row.n, row.big_n, row.m, row.big_m)?)
}

/// Posterior after the recorded cycles, with the same memory-loss rule as
/// the adaptive loop.
fn replay_posterior(
    prior: PosteriorGrid,
    settings: &AdaptiveSettings,
    rows: &[TraceRow],
    mut each: impl FnMut(&TraceRow, &PosteriorGrid) -> Result<()>,
) -> Result<PosteriorGrid> {
    let mut grid = prior;
    for (k, row) in rows.iter().enumerate() {
        if row.t >= settings.t_max {
            grid = grid.broaden(settings.broadening_fraction())?;
        }
        grid = grid
            .update(&outcome_of(row)?, row.t, row.offset)
            .with_context(|| format!("trace row {k}"))?
            .posterior;
        each(row, &grid)?;
    }
    Ok(grid)
}

pub fn utility(config_path: &Path, trace: Option<&Path>, manifold: Option<Manifold>) -> Result<Value> {
    let config = CampaignConfig::load(config_path)?;
    let constants = config.constants()?;
    let (prior, settings, cycle, contrast) = bayesian_setup(&config, manifold, &constants)?;
    let mut grid = prior.grid()?;
    if let Some(path) = trace {
        let rows = read_trace(fs::File::open(path).with_context(|| format!("reading {}", path.display()))?)?;
        grid = replay_posterior(grid, &settings, &rows, |_, _| Ok(()))?;
    }
    let candidates = candidate_ladder(settings.t_max, settings.ladder_depth);
    let contrast = contrast.unwrap_or(settings.default_contrast);
    let profile = utility_profile(&grid, &candidates, contrast, |t| {
        duration(
            &CycleConfig {
                interrogation_time: t,
                ..cycle
            },
            &constants,
        )
    })?;
    let offsets: Vec<f64> = candidates.iter().map(|t| analysis_phase_offset(&grid, *t)).collect();
    let estimate = grid.moments();
    Ok(json!({
        "units": "Hz",
        "assumed_contrast": contrast,
        "omega_mean_hz": angular_to_hz(estimate.omega_mean),
        "omega_err_hz": angular_to_hz(estimate.omega_err),
        "candidates_s": profile.candidates,
        "utility_nats": profile.utility,
        "analysis_offsets_rad": offsets,
        "chosen_s": profile.chosen_time(),
    }))
}

#[derive(Debug, Clone, Copy)]
pub struct SeparateArgs {
    pub omega_s_hz: f64,
    pub omega_s_err_hz: f64,
    pub omega_d_hz: f64,
    pub omega_d_err_hz: f64,
    pub nu_s_hz: f64,
    pub nu_d_hz: Option<f64>,
}

pub fn separate(args: SeparateArgs) -> Result<Value> {
    let constants = PhysicsConstants::default();
    let nu_s = hz_to_angular(args.nu_s_hz);
    let nu_d = match args.nu_d_hz {
        Some(nu) => hz_to_angular(nu),
        None => constants.g_d / constants.g_s * nu_s,
    };
    let chi = chi_ratio(nu_s, nu_d, &constants)?;
    let estimate = |omega: f64, err: f64| FrequencyEstimate {
        omega_mean: hz_to_angular(omega),
        omega_err: hz_to_angular(err),
        phi0_mean: 0.0,
        phi0_err: 0.0,
    };
    let [(delta_b, delta_b_err), (ac, ac_err)] = propagate_separation(
        estimate(args.omega_s_hz, args.omega_s_err_hz),
        estimate(args.omega_d_hz, args.omega_d_err_hz),
        chi,
        &constants,
    )?;
    Ok(json!({
        "units": "Hz",
        "chi": chi,
        "delta_b_t": delta_b,
        "delta_b_err_t": delta_b_err,
        "delta_omega_ac_s_hz": angular_to_hz(ac),
        "delta_omega_ac_s_err_hz": angular_to_hz(ac_err),
    }))
}

#[derive(Debug, Serialize)]
struct ReplayRow {
    #[serde(rename = "T")]
    t: f64,
    n: u32,
    #[serde(rename = "N")]
    big_n: u32,
    m: u32,
    #[serde(rename = "M")]
    big_m: u32,
    phi_hat: f64,
    phi_half_width: f64,
    c_hat: f64,
    omega_mean_hz: f64,
    omega_err_hz: f64,
    recorded_omega_mean_hz: f64,
}

/// Re-runs the estimators on a recorded trace. Bayesian configs give one
/// CSV row per cycle; incremental configs give the unwrapped linear fit.
pub fn replay(config_path: &Path, trace: &Path, manifold: Option<Manifold>) -> Result<(Vec<u8>, Value)> {
    let config = CampaignConfig::load(config_path)?;
    let constants = config.constants()?;
    let rows = read_trace(fs::File::open(trace).with_context(|| format!("reading {}", trace.display()))?)?;
    ensure!(!rows.is_empty(), "trace {} has no rows", trace.display());

    if let Protocol::Incremental { .. } = config.protocol {
        let mut unwrapper = PhaseUnwrapper::new();
        for row in &rows {
            let fit = mle_fit(&outcome_of(row)?)?;
            unwrapper.push(row.t, fit.phi_hat - row.offset, fit.phi_half_width().min(std::f64::consts::PI).powi(2));
        }
        let (fit, failed) = unwrapper.finish()?;
        let value = json!({
            "units": "Hz",
            "omega_hz": angular_to_hz(fit.omega),
            "omega_err_hz": angular_to_hz(fit.omega_err),
            "phi0_rad": fit.phi0,
            "unwrap_failed": failed,
            "unwrapped_rad": fit.unwrapped,
            "residuals_rad": fit.residuals,
        });
        let mut bytes = serde_json::to_vec_pretty(&value)?;
        bytes.push(b'\n');
        return Ok((bytes, value));
    }

    let (prior, settings, _, _) = bayesian_setup(&config, manifold, &constants)?;
    let mut writer = csv::Writer::from_writer(Vec::new());
    let grid = replay_posterior(prior.grid()?, &settings, &rows, |row, grid| {
        let fit = mle_fit(&outcome_of(row)?)?;
        let e = grid.moments();
        writer.serialize(ReplayRow {
            t: row.t,
            n: row.n,
            big_n: row.big_n,
            m: row.m,
            big_m: row.big_m,
            phi_hat: fit.phi_hat,
            phi_half_width: fit.phi_half_width(),
            c_hat: fit.c_hat,
            omega_mean_hz: angular_to_hz(e.omega_mean),
            omega_err_hz: angular_to_hz(e.omega_err),
            recorded_omega_mean_hz: row.omega_mean_hz,
        })?;
        Ok(())
    })?;
    let e = grid.moments();
    let summary = json!({
        "units": "Hz",
        "cycles": rows.len(),
        "omega_mean_hz": angular_to_hz(e.omega_mean),
        "omega_err_hz": angular_to_hz(e.omega_err),
    });
    Ok((writer.into_inner().map_err(|e| e.into_error())?, summary))
}

/// Writes `bytes` to `prefix.suffix` under the output directory, or to
/// stdout when no prefix is given.
pub fn emit(out: Option<&Path>, suffix: &str, bytes: &[u8]) -> Result<()> {
    match out {
        Some(out) => {
            let path = output_file(&output_prefix(out), suffix);
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            write_atomic(&path, bytes).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(bytes).and_then(|_| stdout.flush()) {
                // a closed pipe (`| head`) is not an error
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                other => Ok(other?),
            }
        }
    }
}
