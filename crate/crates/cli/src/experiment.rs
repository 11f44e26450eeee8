//! Builds models from configs, drives runs, and writes the trace/positions/
//! metadata files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use mfld_core::diagnostics::{self, LsiBounds};
use mfld_core::dynamics::{run, DiagnosticsSet, DynamicsParams, RunOutput, Schedule, TraceRecord};
use mfld_core::ensemble::{init_ensemble, InitSpec, NoiseSource, Stream};
use mfld_core::estimators::{BatchMode, EstimatorConfig};
use mfld_core::functionals::{MeanFieldFunctional, Regularizer};
use mfld_core::models::{
    parse_dataset, KsdModel, LinearModel, Loss, MmdModel, MmdParam, Neuron, Score,
    TwoLayerNetModel,
};

use crate::config::{ModelSpec, RunConfig, ScoreSpec};
use crate::presets;

/// Resolves a `data_file` reference: embedded preset data first, then the
/// filesystem relative to `base_dir`.
pub fn load_data_text(path: &str, base_dir: Option<&Path>) -> Result<String> {
    if let Some(text) = presets::embedded_data(path) {
        return Ok(text.to_string());
    }
    let candidate = match base_dir {
        Some(dir) => dir.join(path),
        None => PathBuf::from(path),
    };
    fs::read_to_string(&candidate)
        .with_context(|| format!("data file `{}` does not exist or is unreadable", candidate.display()))
}

/// Synthetic centers/scales for the finite-sum model: centers are Gaussian
/// draws from the dedicated data seed, scales interpolate linearly over
/// [scale_min, scale_max].
fn finite_sum_parts(
    dim: usize,
    n_terms: usize,
    center_std: f64,
    scale_min: f64,
    scale_max: f64,
    data_seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let src = NoiseSource::new(data_seed, Stream::Init);
    let mut centers = vec![0.0; n_terms * dim];
    for j in 0..n_terms {
        for t in 0..dim {
            centers[j * dim + t] = center_std * src.standard_normal(1, j as u64, t as u64);
        }
    }
    let scales = (0..n_terms)
        .map(|j| {
            if n_terms == 1 {
                scale_min
            } else {
                scale_min + (scale_max - scale_min) * j as f64 / (n_terms - 1) as f64
            }
        })
        .collect();
    (centers, scales)
}

pub fn build_model(
    cfg: &RunConfig,
    base_dir: Option<&Path>,
) -> Result<Box<dyn MeanFieldFunctional>> {
    let model: Box<dyn MeanFieldFunctional> = match &cfg.model {
        ModelSpec::LinearQuadratic { dim, curvature, linear_term } => Box::new(
            LinearModel::quadratic(vec![*curvature; *dim], linear_term.clone())
                .map_err(|e| anyhow!("{e}"))?,
        ),
        ModelSpec::LinearFiniteSum { dim, n_terms, center_std, scale_min, scale_max, data_seed } => {
            let (centers, scales) =
                finite_sum_parts(*dim, *n_terms, *center_std, *scale_min, *scale_max, *data_seed);
            Box::new(LinearModel::finite_sum(scales, centers, *dim).map_err(|e| anyhow!("{e}"))?)
        }
        ModelSpec::TwoLayerNet { data_file, neuron, loss, bias } => {
            let text = load_data_text(data_file, base_dir)?;
            let ds = parse_dataset(&text, true).map_err(|e| anyhow!("{data_file}: {e}"))?;
            let neuron = match neuron.as_str() {
                "tanh_dot" => Neuron::TanhDot,
                "bounded_amp" => Neuron::BoundedAmp,
                other => bail!("unknown neuron `{other}`"),
            };
            let loss = match loss.as_str() {
                "squared" => Loss::Squared,
                "logistic" => Loss::Logistic,
                other => bail!("unknown loss `{other}`"),
            };
            Box::new(
                TwoLayerNetModel::new(
                    &ds.features,
                    ds.dim,
                    ds.labels.expect("labeled dataset"),
                    neuron,
                    loss,
                    *bias,
                )
                .map_err(|e| anyhow!("{e}"))?,
            )
        }
        ModelSpec::Mmd { data_file, kernel_bandwidth, parameterization, mixture_std } => {
            let text = load_data_text(data_file, base_dir)?;
            let ds = parse_dataset(&text, false).map_err(|e| anyhow!("{data_file}: {e}"))?;
            let param = match parameterization.as_str() {
                "dirac" => MmdParam::Dirac,
                "gaussian_mixture" => MmdParam::GaussianMixture { sigma_g: *mixture_std },
                other => bail!("unknown parameterization `{other}`"),
            };
            Box::new(
                MmdModel::new(ds.features, ds.dim, *kernel_bandwidth, param)
                    .map_err(|e| anyhow!("{e}"))?,
            )
        }
        ModelSpec::Ksd { dim, kernel_bandwidth, score } => {
            let score = match score {
                ScoreSpec::Gaussian { mean, var } => {
                    Score::Gaussian { mean: mean.clone(), tau2: *var }
                }
                ScoreSpec::GaussianMixture { weights, means, vars } => Score::GaussianMixture {
                    weights: weights.clone(),
                    means: means.clone(),
                    tau2s: vars.clone(),
                },
            };
            Box::new(KsdModel::new(score, *dim, *kernel_bandwidth).map_err(|e| anyhow!("{e}"))?)
        }
    };
    Ok(model)
}

pub fn estimator_config(cfg: &RunConfig) -> EstimatorConfig {
    match cfg.estimator_kind.as_str() {
        "sgd" => EstimatorConfig::sgd(
            cfg.batch_size,
            cfg.batch_mode.unwrap_or(BatchMode::WithReplacement),
        ),
        "svrg" => EstimatorConfig::svrg(cfg.batch_size, cfg.refresh_period),
        _ => EstimatorConfig::full(),
    }
}

pub fn dynamics_params(cfg: &RunConfig) -> DynamicsParams {
    DynamicsParams {
        lambda: cfg.lambda,
        schedule: match (&cfg.eta, &cfg.eta_sequence) {
            (Some(e), _) => Schedule::Constant(*e),
            (None, Some(seq)) => Schedule::Sequence(seq.clone()),
            (None, None) => unreachable!("validated at parse time"),
        },
        max_steps: cfg.steps,
        seed: cfg.seed,
        deterministic_flow: false,
    }
}

/// Thread-count resolution order: explicit CLI flag, config key, MFLD_THREADS,
/// then all logical cores.
pub fn resolve_threads(cli: Option<usize>, cfg: &RunConfig) -> usize {
    cli.or(cfg.threads)
        .or_else(|| {
            std::env::var("MFLD_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|t| *t > 0)
        })
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        })
}

const TRACE_HEADER: &str = "step,wall_time,energy,entropy_estimate,objective_estimate,mean_grad_norm,second_moment,sigma_v_probe,model_metric";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Stable nine-column schema; disabled diagnostics leave their field empty,
/// never drop the column. Wall time is emitted only when `record_wall_time`
/// is on, keeping the default trace byte-identical across repeated runs.
pub fn render_trace_csv(trace: &[TraceRecord], record_wall_time: bool) -> String {
    let mut s = String::with_capacity(64 * (trace.len() + 1));
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for r in trace {
        let wall = if record_wall_time { r.wall_time.to_string() } else { String::new() };
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.step,
            wall,
            r.energy,
            fmt_opt(r.entropy_estimate),
            fmt_opt(r.objective_estimate),
            r.mean_grad_norm,
            r.second_moment,
            fmt_opt(r.sigma_v_probe),
            r.model_metric,
        ));
    }
    s
}

/// Two-column (or wider) whitespace-separated series for the requested trace
/// columns, one gnuplot-consumable row per record. Requesting a column whose
/// diagnostic was disabled names the toggle.
pub fn emit_plot_data(trace: &[TraceRecord], columns: &[String]) -> Result<String> {
    if columns.is_empty() {
        bail!("no columns requested");
    }
    let known = [
        "step",
        "wall_time",
        "energy",
        "entropy_estimate",
        "objective_estimate",
        "mean_grad_norm",
        "second_moment",
        "sigma_v_probe",
        "model_metric",
    ];
    for c in columns {
        if !known.contains(&c.as_str()) {
            bail!("unknown trace column `{c}` (expected one of {known:?})");
        }
    }
    let value = |r: &TraceRecord, c: &str| -> Result<f64> {
        Ok(match c {
            "step" => r.step as f64,
            "wall_time" => r.wall_time,
            "energy" => r.energy,
            "entropy_estimate" => r
                .entropy_estimate
                .ok_or_else(|| anyhow!("column `entropy_estimate` is disabled (toggle: entropy)"))?,
            "objective_estimate" => r.objective_estimate.ok_or_else(|| {
                anyhow!("column `objective_estimate` is disabled (toggle: entropy)")
            })?,
            "mean_grad_norm" => r.mean_grad_norm,
            "second_moment" => r.second_moment,
            "sigma_v_probe" => r.sigma_v_probe.ok_or_else(|| {
                anyhow!("column `sigma_v_probe` is disabled (toggle: sigma_v_probe)")
            })?,
            "model_metric" => r.model_metric,
            _ => unreachable!(),
        })
    };
    let mut s = format!("# {}\n", columns.join(" "));
    for r in trace {
        let row = columns
            .iter()
            .map(|c| value(r, c).map(|v| v.to_string()))
            .collect::<Result<Vec<_>>>()?;
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    Ok(s)
}

/// The closed-form constants block of meta.txt: every input echoed so the
/// numbers can be recomputed by hand.
pub fn render_bounds_report(
    model: &dyn MeanFieldFunctional,
    reg: &Regularizer,
    cfg: &RunConfig,
    init_second_moment: f64,
) -> String {
    let inputs = model.assumption_inputs(reg);
    let eta0 = cfg.eta.or_else(|| cfg.eta_sequence.as_ref().map(|s| s[0])).unwrap_or(0.0);
    let d = model.dim();
    let mut s = String::new();
    s.push_str("[assumption_inputs]\n");
    s.push_str(&format!(
        "lambda1 = {}\nlambda2 = {}\nc_r = {}\n",
        inputs.lambda1, inputs.lambda2, inputs.c_r
    ));
    s.push_str(&format!(
        "r_bound_full = {}\nlipschitz_full = {}\nc_l_full = {}\n",
        inputs.full.r_bound, inputs.full.lipschitz, inputs.full.second_variation_growth
    ));
    s.push_str(&format!(
        "r_bound_per_datum = {}\nlipschitz_per_datum = {}\n",
        inputs.per_datum.r_bound, inputs.per_datum.lipschitz
    ));
    s.push_str(&format!(
        "first_variation_sup = {}\n",
        inputs.first_variation_sup.map_or("none".to_string(), |v| v.to_string())
    ));
    for (k, v) in model.report_extras() {
        s.push_str(&format!("{k} = {v}\n"));
    }
    s.push_str(&format!(
        "probe_radius = {}\ninit_second_moment = {}\ndim = {d}\n\n[lsi]\n",
        model.probe_radius(),
        init_second_moment
    ));
    match LsiBounds::compute(&inputs, cfg.lambda, d) {
        Ok(b) => {
            s.push_str(&format!(
                "alpha_lipschitz = {}\nlog10_alpha_lipschitz = {}\n",
                b.alpha_lipschitz, b.log10_alpha_lipschitz
            ));
            s.push_str(&format!(
                "alpha_bounded = {}\nlog10_alpha_bounded = {}\nalpha_lower = {}\n",
                b.alpha_bounded.map_or("none".to_string(), |v| v.to_string()),
                b.log10_alpha_bounded.map_or("none".to_string(), |v| v.to_string()),
                b.alpha_lower()
            ));
        }
        Err(e) => s.push_str(&format!("unavailable: {e}\n")),
    }
    s.push_str("\n[theory]\n");
    match diagnostics::theory_constants(&inputs, cfg.lambda, eta0, d, init_second_moment) {
        Ok(tc) => {
            s.push_str(&format!(
                "rbar_sq = {}\nlbar = {}\nc1 = {}\ndelta_eta = {}\nc_lambda = {}\nmoment_bound = {}\n",
                tc.rbar_sq, tc.lbar, tc.c1, tc.delta_eta, tc.c_lambda, tc.moment_bound
            ));
            let upsilon = match cfg.estimator_kind.as_str() {
                "sgd" => tc.upsilon_sgd(inputs.per_datum.r_bound, cfg.batch_size.max(1)),
                "svrg" => {
                    let xi = diagnostics::variance_factor_xi(model.n_data(), cfg.batch_size.max(1));
                    s.push_str(&format!("xi = {xi}\n"));
                    tc.upsilon_svrg(inputs.per_datum.lipschitz, xi, cfg.refresh_period.max(1))
                }
                _ => 0.0,
            };
            s.push_str(&format!("upsilon_bar = {upsilon}\n"));
            s.push_str(&format!(
                "theorem_rhs_plateau(delta0=0) = {}\n",
                tc.theorem_rhs(usize::MAX / 2, 0.0, upsilon, cfg.n_particles)
            ));
        }
        Err(e) => s.push_str(&format!("unavailable: {e}\n")),
    }
    s
}

pub struct ExperimentResult {
    pub out_dir: PathBuf,
    pub output: RunOutput,
}

/// Run one configured experiment and write `trace.csv`,
/// `final_positions.csv`, and `meta.txt` into the output directory.
pub fn run_experiment(
    cfg: &RunConfig,
    base_dir: Option<&Path>,
    preset_name: Option<&str>,
    threads_flag: Option<usize>,
    out_override: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<ExperimentResult> {
    let mut cfg = cfg.clone();
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    let model = build_model(&cfg, base_dir)?;
    let reg = Regularizer::new(cfg.reg_weight).map_err(|e| anyhow!("{e}"))?;
    let estimator = estimator_config(&cfg);
    let params = dynamics_params(&cfg);
    let threads = resolve_threads(threads_flag, &cfg);

    let init = InitSpec::Gaussian { mean: cfg.init_mean, std: cfg.init_std };
    let e0 = init_ensemble(cfg.n_particles, model.dim(), &init, cfg.seed)
        .map_err(|e| anyhow!("{e}"))?;
    let init_moment = mfld_core::second_moment(&e0);

    let diag = DiagnosticsSet {
        entropy: cfg.entropy,
        sigma_v_probe: cfg.sigma_v_probe,
        probe_trials: cfg.probe_trials,
        probe_particles: 4,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building worker pool")?;
    let started = std::time::Instant::now();
    let output = pool
        .install(|| run(e0, model.as_ref(), &reg, &estimator, &params, cfg.log_every, &diag))
        .map_err(|e| anyhow!("{e}"))?;
    let elapsed = started.elapsed().as_secs_f64();

    let out_dir = out_override.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    fs::write(out_dir.join("trace.csv"), render_trace_csv(&output.trace, cfg.record_wall_time))?;

    let fe = &output.final_ensemble;
    let mut positions = String::new();
    positions.push_str(
        &(0..fe.dim()).map(|j| format!("x{j}")).collect::<Vec<_>>().join(","),
    );
    positions.push('\n');
    for row in fe.rows() {
        positions.push_str(&row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        positions.push('\n');
    }
    fs::write(out_dir.join("final_positions.csv"), positions)?;

    let mut meta = String::new();
    meta.push_str(&format!(
        "library = mfld {}\npreset = {}\nthreads = {threads}\nwall_time_seconds = {elapsed}\n",
        env!("CARGO_PKG_VERSION"),
        preset_name.unwrap_or("-"),
    ));
    if output.eta_warnings.ratio_exceeded {
        meta.push_str("warning = eta exceeds lambda1/(4 lambda2)\n");
    }
    if output.eta_warnings.contraction_exceeded {
        meta.push_str("warning = lambda * alpha * eta exceeds 1/4\n");
    }
    for w in &cfg.warnings {
        meta.push_str(&format!("warning = {w}\n"));
    }
    meta.push_str("\n[config]\n");
    meta.push_str(&crate::config::echo_config(&cfg));
    meta.push('\n');
    meta.push_str(&render_bounds_report(model.as_ref(), &reg, &cfg, init_moment));
    fs::write(out_dir.join("meta.txt"), meta)?;

    // one (step, value) series per requested diagnostic
    for col in &cfg.plot_columns {
        let cols: Vec<String> = if col == "step" {
            vec!["step".to_string()]
        } else {
            vec!["step".to_string(), col.clone()]
        };
        let text = emit_plot_data(&output.trace, &cols)?;
        fs::write(out_dir.join(format!("plot_{col}.dat")), text)?;
    }

    Ok(ExperimentResult { out_dir, output })
}

#[cfg(test)]
mod tests {
    use super::*;
    use mfld_core::dynamics::TraceRecord;

    fn rec(step: usize, probe: Option<f64>) -> TraceRecord {
        TraceRecord {
            step,
            wall_time: 0.5,
            energy: 1.5,
            entropy_estimate: Some(0.2),
            objective_estimate: Some(1.7),
            mean_grad_norm: 0.3,
            second_moment: 2.0,
            sigma_v_probe: probe,
            model_metric: 1.5,
        }
    }

    #[test]
    fn plot_data_rows_match_trace() {
        let trace = vec![rec(0, None), rec(100, None), rec(200, None)];
        let cols = vec!["step".to_string(), "energy".to_string()];
        let out = emit_plot_data(&trace, &cols).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "# step energy");
        assert_eq!(lines[1], "0 1.5");
    }

    #[test]
    fn plot_data_empty_trace_is_header_only() {
        let out = emit_plot_data(&[], &["step".to_string()]).unwrap();
        assert_eq!(out, "# step\n");
    }

    #[test]
    fn plot_data_errors_name_the_toggle() {
        let trace = vec![rec(0, None)];
        let e = emit_plot_data(&trace, &["sigma_v_probe".to_string()]).unwrap_err();
        assert!(e.to_string().contains("sigma_v_probe"), "{e}");
        let e = emit_plot_data(&trace, &["nope".to_string()]).unwrap_err();
        assert!(e.to_string().contains("unknown trace column"), "{e}");
    }

    #[test]
    fn trace_csv_schema_is_stable() {
        let text = render_trace_csv(&[rec(0, None)], false);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), TRACE_HEADER);
        let row = lines.next().unwrap();
        // wall_time and sigma_v_probe empty, columns still present
        assert_eq!(row.split(',').count(), 9);
        assert!(row.starts_with("0,,1.5,"));
        let with_time = render_trace_csv(&[rec(0, Some(0.1))], true);
        assert!(with_time.lines().nth(1).unwrap().starts_with("0,0.5,1.5,"));
    }
}
