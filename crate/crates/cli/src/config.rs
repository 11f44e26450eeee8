//! Line-oriented `key = value` config with `[model]`, `[dynamics]`,
//! `[estimator]`, `[output]` sections and `#` comments. Unknown keys are
//! rejected with their line number; duplicate keys warn and the last value
//! wins.

use std::collections::BTreeMap;
use std::fmt;

use mfld_core::estimators::BatchMode;

#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError { line, message: message.into() }
}

const SECTIONS: [&str; 4] = ["model", "dynamics", "estimator", "output"];

/// key -> (section, description of the expected value). The single flat
/// namespace is what makes `key=value` preset overrides unambiguous.
const SCHEMA: &[(&str, &str, &str)] = &[
    ("kind", "model", "linear_quadratic | linear_finite_sum | two_layer_net | mmd | ksd"),
    ("dim", "model", "positive integer"),
    ("reg_weight", "model", "real >= 0 (default 0)"),
    ("curvature", "model", "real >= 0 (default 1)"),
    ("linear_term", "model", "comma-separated reals (default zeros)"),
    ("n_terms", "model", "positive integer"),
    ("center_std", "model", "real >= 0 (default 1)"),
    ("scale_min", "model", "real >= 0 (default 1)"),
    ("scale_max", "model", "real >= 0 (default 1)"),
    ("data_seed", "model", "integer (default 0)"),
    ("data_file", "model", "path, relative to the config file"),
    ("neuron", "model", "tanh_dot | bounded_amp (default tanh_dot)"),
    ("loss", "model", "squared | logistic (default squared)"),
    ("bias", "model", "true | false (default true)"),
    ("kernel_bandwidth", "model", "real > 0"),
    ("parameterization", "model", "dirac | gaussian_mixture (default dirac)"),
    ("mixture_std", "model", "real > 0"),
    ("score", "model", "gaussian | gaussian_mixture (default gaussian)"),
    ("score_mean", "model", "comma-separated reals (default zeros)"),
    ("score_var", "model", "real > 0 (default 1)"),
    ("score_means", "model", "semicolon-separated comma vectors"),
    ("score_vars", "model", "comma-separated reals > 0"),
    ("score_weights", "model", "comma-separated reals > 0"),
    ("lambda", "dynamics", "real > 0"),
    ("eta", "dynamics", "real > 0"),
    ("eta_sequence", "dynamics", "comma-separated reals > 0"),
    ("steps", "dynamics", "integer >= 0"),
    ("n_particles", "dynamics", "positive integer"),
    ("seed", "dynamics", "integer (default 0)"),
    ("init_mean", "dynamics", "real (default 0)"),
    ("init_std", "dynamics", "real >= 0 (default 1)"),
    ("batch_size", "estimator", "positive integer"),
    ("refresh_period", "estimator", "positive integer"),
    ("batch_mode", "estimator", "with_replacement | without_replacement"),
    ("estimator_kind", "estimator", "full | sgd | svrg (default full)"),
    ("out_dir", "output", "path (default out)"),
    ("log_every", "output", "positive integer (default 100)"),
    ("threads", "output", "auto | positive integer (default auto)"),
    ("entropy", "output", "true | false (default true)"),
    ("sigma_v_probe", "output", "true | false (default false)"),
    ("probe_trials", "output", "positive integer (default 16)"),
    ("record_wall_time", "output", "true | false (default false)"),
    ("plot_columns", "output", "comma-separated trace column names"),
];

fn schema_section(key: &str) -> Option<&'static str> {
    SCHEMA.iter().find(|(k, _, _)| *k == key).map(|(_, s, _)| *s)
}

/// Raw parse result: values keyed by (section, key), plus duplicate-key
/// warnings. `kind` appears in both [model] and [estimator]; inside
/// [estimator] it is stored under `estimator_kind`.
#[derive(Debug, Default, Clone)]
pub struct RawConfig {
    values: BTreeMap<(String, String), (String, usize)>,
    pub warnings: Vec<String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RawConfig::default();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(Some(lineno), "unterminated section header"))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(err(
                        Some(lineno),
                        format!("unknown section [{name}]; expected one of {SECTIONS:?}"),
                    ));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(Some(lineno), "expected `key = value`"))?;
            let key = key.trim();
            let value = value.trim();
            let section = section
                .clone()
                .ok_or_else(|| err(Some(lineno), format!("key `{key}` before any section")))?;
            // the [estimator] section spells its selector `kind` like [model]
            let stored_key = if section == "estimator" && key == "kind" {
                "estimator_kind".to_string()
            } else {
                key.to_string()
            };
            match schema_section(&stored_key) {
                Some(s) if s == section => {}
                Some(s) => {
                    return Err(err(
                        Some(lineno),
                        format!("key `{key}` belongs to section [{s}], found in [{section}]"),
                    ));
                }
                None => {
                    return Err(err(Some(lineno), format!("unknown key `{key}` in [{section}]")));
                }
            }
            if let Some((_, prev_line)) =
                cfg.values.insert((section.clone(), stored_key.clone()), (value.to_string(), lineno))
            {
                cfg.warnings.push(format!(
                    "duplicate key `{key}` in [{section}] (line {prev_line} overridden by line {lineno})"
                ));
            }
        }
        Ok(cfg)
    }

    /// Preset-style override: `key=value` routed to its schema section.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| err(None, format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        let value = value.trim();
        let section = schema_section(key)
            .ok_or_else(|| err(None, format!("unknown override key `{key}`")))?;
        self.values
            .insert((section.to_string(), key.to_string()), (value.to_string(), 0));
        Ok(())
    }

    fn get(&self, section: &str, key: &str) -> Option<(&str, usize)> {
        self.values
            .get(&(section.to_string(), key.to_string()))
            .map(|(v, l)| (v.as_str(), *l))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    LinearQuadratic { dim: usize, curvature: f64, linear_term: Vec<f64> },
    LinearFiniteSum { dim: usize, n_terms: usize, center_std: f64, scale_min: f64, scale_max: f64, data_seed: u64 },
    TwoLayerNet { data_file: String, neuron: String, loss: String, bias: bool },
    Mmd { data_file: String, kernel_bandwidth: f64, parameterization: String, mixture_std: f64 },
    Ksd { dim: usize, kernel_bandwidth: f64, score: ScoreSpec },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScoreSpec {
    Gaussian { mean: Vec<f64>, var: f64 },
    GaussianMixture { weights: Vec<f64>, means: Vec<Vec<f64>>, vars: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub reg_weight: f64,
    pub lambda: f64,
    pub eta: Option<f64>,
    pub eta_sequence: Option<Vec<f64>>,
    pub steps: usize,
    pub n_particles: usize,
    pub seed: u64,
    pub init_mean: f64,
    pub init_std: f64,
    pub estimator_kind: String,
    pub batch_size: usize,
    pub refresh_period: usize,
    pub batch_mode: Option<BatchMode>,
    pub out_dir: String,
    pub log_every: usize,
    pub threads: Option<usize>,
    pub entropy: bool,
    pub sigma_v_probe: bool,
    pub probe_trials: usize,
    pub record_wall_time: bool,
    pub plot_columns: Vec<String>,
    pub warnings: Vec<String>,
}

struct Reader<'a> {
    raw: &'a RawConfig,
}

impl<'a> Reader<'a> {
    fn str_opt(&self, section: &str, key: &str) -> Option<(&'a str, usize)> {
        self.raw.get(section, key)
    }

    fn required(&self, section: &str, key: &str) -> Result<(&'a str, usize), ConfigError> {
        self.str_opt(section, key)
            .ok_or_else(|| err(None, format!("missing required key `{key}` in [{section}]")))
    }

    fn f64_req(&self, section: &str, key: &str) -> Result<f64, ConfigError> {
        let (v, l) = self.required(section, key)?;
        parse_f64(v, l, key)
    }

    fn f64_opt(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.str_opt(section, key) {
            Some((v, l)) => parse_f64(v, l, key),
            None => Ok(default),
        }
    }

    fn usize_req(&self, section: &str, key: &str) -> Result<usize, ConfigError> {
        let (v, l) = self.required(section, key)?;
        parse_usize(v, l, key)
    }

    fn usize_opt(&self, section: &str, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.str_opt(section, key) {
            Some((v, l)) => parse_usize(v, l, key),
            None => Ok(default),
        }
    }

    fn bool_opt(&self, section: &str, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.str_opt(section, key) {
            Some(("true", _)) => Ok(true),
            Some(("false", _)) => Ok(false),
            Some((v, l)) => Err(err(Some(l), format!("key `{key}`: expected true/false, got `{v}`"))),
            None => Ok(default),
        }
    }

    fn vec_f64_opt(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.str_opt(section, key) {
            Some((v, l)) => Ok(Some(parse_vec(v, l, key)?)),
            None => Ok(None),
        }
    }
}

fn parse_f64(v: &str, line: usize, key: &str) -> Result<f64, ConfigError> {
    v.parse::<f64>()
        .map_err(|_| err(Some(line), format!("key `{key}`: expected a real, got `{v}`")))
        .and_then(|x| {
            if x.is_finite() {
                Ok(x)
            } else {
                Err(err(Some(line), format!("key `{key}`: non-finite value `{v}`")))
            }
        })
}

fn parse_usize(v: &str, line: usize, key: &str) -> Result<usize, ConfigError> {
    v.parse::<usize>()
        .map_err(|_| err(Some(line), format!("key `{key}`: expected a nonnegative integer, got `{v}`")))
}

fn parse_vec(v: &str, line: usize, key: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',')
        .map(|t| parse_f64(t.trim(), line, key))
        .collect()
}

/// Validate and type the raw key/value map. Defaults are documented in the
/// schema table at the top of this module.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw = RawConfig::parse(text)?;
    typed_config(&raw)
}

pub fn typed_config(raw: &RawConfig) -> Result<RunConfig, ConfigError> {
    let r = Reader { raw };

    let (kind, kind_line) = r.required("model", "kind")?;
    let model = match kind {
        "linear_quadratic" => {
            let dim = r.usize_req("model", "dim")?;
            if dim == 0 {
                return Err(err(None, "dim must be >= 1"));
            }
            let curvature = r.f64_opt("model", "curvature", 1.0)?;
            let linear_term = r.vec_f64_opt("model", "linear_term")?.unwrap_or(vec![0.0; dim]);
            if linear_term.len() != dim {
                return Err(err(None, format!("linear_term needs {dim} entries")));
            }
            ModelSpec::LinearQuadratic { dim, curvature, linear_term }
        }
        "linear_finite_sum" => ModelSpec::LinearFiniteSum {
            dim: r.usize_req("model", "dim")?,
            n_terms: r.usize_req("model", "n_terms")?,
            center_std: r.f64_opt("model", "center_std", 1.0)?,
            scale_min: r.f64_opt("model", "scale_min", 1.0)?,
            scale_max: r.f64_opt("model", "scale_max", 1.0)?,
            data_seed: r.usize_opt("model", "data_seed", 0)? as u64,
        },
        "two_layer_net" => ModelSpec::TwoLayerNet {
            data_file: r.required("model", "data_file")?.0.to_string(),
            neuron: r.str_opt("model", "neuron").map_or("tanh_dot".into(), |(v, _)| v.to_string()),
            loss: r.str_opt("model", "loss").map_or("squared".into(), |(v, _)| v.to_string()),
            bias: r.bool_opt("model", "bias", true)?,
        },
        "mmd" => ModelSpec::Mmd {
            data_file: r.required("model", "data_file")?.0.to_string(),
            kernel_bandwidth: r.f64_req("model", "kernel_bandwidth")?,
            parameterization: r
                .str_opt("model", "parameterization")
                .map_or("dirac".into(), |(v, _)| v.to_string()),
            mixture_std: r.f64_opt("model", "mixture_std", 0.0)?,
        },
        "ksd" => {
            let dim = r.usize_req("model", "dim")?;
            let score_kind =
                r.str_opt("model", "score").map_or("gaussian", |(v, _)| v);
            let score = match score_kind {
                "gaussian" => ScoreSpec::Gaussian {
                    mean: r.vec_f64_opt("model", "score_mean")?.unwrap_or(vec![0.0; dim]),
                    var: r.f64_opt("model", "score_var", 1.0)?,
                },
                "gaussian_mixture" => {
                    let (means_s, l) = r.required("model", "score_means")?;
                    let means = means_s
                        .split(';')
                        .map(|m| parse_vec(m.trim(), l, "score_means"))
                        .collect::<Result<Vec<_>, _>>()?;
                    let vars = r
                        .vec_f64_opt("model", "score_vars")?
                        .ok_or_else(|| err(None, "missing `score_vars` for mixture score"))?;
                    let weights = r
                        .vec_f64_opt("model", "score_weights")?
                        .unwrap_or(vec![1.0 / means.len() as f64; means.len()]);
                    ScoreSpec::GaussianMixture { weights, means, vars }
                }
                other => {
                    return Err(err(None, format!("unknown score kind `{other}`")));
                }
            };
            ModelSpec::Ksd {
                dim,
                kernel_bandwidth: r.f64_req("model", "kernel_bandwidth")?,
                score,
            }
        }
        other => {
            return Err(err(
                Some(kind_line),
                format!("unknown model kind `{other}`"),
            ));
        }
    };

    let reg_weight = r.f64_opt("model", "reg_weight", 0.0)?;
    if reg_weight < 0.0 {
        return Err(err(None, format!("reg_weight must be >= 0, got {reg_weight}")));
    }

    let lambda = r.f64_req("dynamics", "lambda")?;
    if lambda <= 0.0 {
        let line = r.str_opt("dynamics", "lambda").map(|(_, l)| l);
        return Err(err(line, format!("lambda must be > 0, got {lambda}")));
    }
    let eta = match r.str_opt("dynamics", "eta") {
        Some((v, l)) => Some(parse_f64(v, l, "eta")?),
        None => None,
    };
    let eta_sequence = r.vec_f64_opt("dynamics", "eta_sequence")?;
    match (&eta, &eta_sequence) {
        (None, None) => return Err(err(None, "one of `eta` / `eta_sequence` is required")),
        (Some(_), Some(_)) => {
            return Err(err(None, "`eta` and `eta_sequence` are mutually exclusive"))
        }
        (Some(e), None) if *e <= 0.0 => return Err(err(None, "eta must be > 0")),
        (None, Some(seq)) if seq.is_empty() || seq.iter().any(|e| *e <= 0.0) => {
            return Err(err(None, "eta_sequence must be nonempty and positive"))
        }
        _ => {}
    }

    let steps = r.usize_req("dynamics", "steps")?;
    let n_particles = r.usize_req("dynamics", "n_particles")?;
    if n_particles == 0 {
        return Err(err(None, "n_particles must be >= 1"));
    }
    let init_std = r.f64_opt("dynamics", "init_std", 1.0)?;
    if init_std < 0.0 {
        return Err(err(None, "init_std must be >= 0"));
    }

    let estimator_kind = r
        .str_opt("estimator", "estimator_kind")
        .map_or("full".into(), |(v, _)| v.to_string());
    if !["full", "sgd", "svrg"].contains(&estimator_kind.as_str()) {
        return Err(err(None, format!("unknown estimator kind `{estimator_kind}`")));
    }
    if estimator_kind != "full" && r.str_opt("estimator", "batch_size").is_none() {
        return Err(err(None, format!("estimator `{estimator_kind}` requires `batch_size`")));
    }
    if estimator_kind == "svrg" && r.str_opt("estimator", "refresh_period").is_none() {
        return Err(err(None, "estimator `svrg` requires `refresh_period`".to_string()));
    }
    let batch_mode = match r.str_opt("estimator", "batch_mode") {
        Some(("with_replacement", _)) => Some(BatchMode::WithReplacement),
        Some(("without_replacement", _)) => Some(BatchMode::WithoutReplacement),
        Some((v, l)) => return Err(err(Some(l), format!("unknown batch_mode `{v}`"))),
        None => None,
    };
    if estimator_kind == "svrg" && batch_mode == Some(BatchMode::WithReplacement) {
        return Err(err(None, "svrg samples without duplication; batch_mode cannot be with_replacement"));
    }

    let threads = match r.str_opt("output", "threads") {
        Some(("auto", _)) => None,
        Some((v, l)) => {
            let t = parse_usize(v, l, "threads")?;
            if t == 0 {
                return Err(err(Some(l), "threads must be >= 1 or auto"));
            }
            Some(t)
        }
        None => None,
    };

    let plot_columns = match r.str_opt("output", "plot_columns") {
        Some((v, _)) => v.split(',').map(|c| c.trim().to_string()).collect(),
        None => Vec::new(),
    };

    Ok(RunConfig {
        model,
        reg_weight,
        lambda,
        eta,
        eta_sequence,
        steps,
        n_particles,
        seed: r.usize_opt("dynamics", "seed", 0)? as u64,
        init_mean: r.f64_opt("dynamics", "init_mean", 0.0)?,
        init_std,
        estimator_kind,
        batch_size: r.usize_opt("estimator", "batch_size", 1)?,
        refresh_period: r.usize_opt("estimator", "refresh_period", 1)?,
        batch_mode,
        out_dir: r.str_opt("output", "out_dir").map_or("out".into(), |(v, _)| v.to_string()),
        log_every: r.usize_opt("output", "log_every", 100)?,
        threads,
        entropy: r.bool_opt("output", "entropy", true)?,
        sigma_v_probe: r.bool_opt("output", "sigma_v_probe", false)?,
        probe_trials: r.usize_opt("output", "probe_trials", 16)?,
        record_wall_time: r.bool_opt("output", "record_wall_time", false)?,
        plot_columns,
        warnings: raw.warnings.clone(),
    })
}

/// Canonical echo of the typed configuration for meta.txt.
pub fn echo_config(cfg: &RunConfig) -> String {
    let mut s = String::new();
    s.push_str("[model]\n");
    match &cfg.model {
        ModelSpec::LinearQuadratic { dim, curvature, linear_term } => {
            s.push_str("kind = linear_quadratic\n");
            s.push_str(&format!("dim = {dim}\ncurvature = {curvature}\n"));
            s.push_str(&format!(
                "linear_term = {}\n",
                linear_term.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
            ));
        }
        ModelSpec::LinearFiniteSum { dim, n_terms, center_std, scale_min, scale_max, data_seed } => {
            s.push_str("kind = linear_finite_sum\n");
            s.push_str(&format!(
                "dim = {dim}\nn_terms = {n_terms}\ncenter_std = {center_std}\nscale_min = {scale_min}\nscale_max = {scale_max}\ndata_seed = {data_seed}\n"
            ));
        }
        ModelSpec::TwoLayerNet { data_file, neuron, loss, bias } => {
            s.push_str("kind = two_layer_net\n");
            s.push_str(&format!(
                "data_file = {data_file}\nneuron = {neuron}\nloss = {loss}\nbias = {bias}\n"
            ));
        }
        ModelSpec::Mmd { data_file, kernel_bandwidth, parameterization, mixture_std } => {
            s.push_str("kind = mmd\n");
            s.push_str(&format!(
                "data_file = {data_file}\nkernel_bandwidth = {kernel_bandwidth}\nparameterization = {parameterization}\n"
            ));
            if parameterization == "gaussian_mixture" {
                s.push_str(&format!("mixture_std = {mixture_std}\n"));
            }
        }
        ModelSpec::Ksd { dim, kernel_bandwidth, score } => {
            s.push_str("kind = ksd\n");
            s.push_str(&format!("dim = {dim}\nkernel_bandwidth = {kernel_bandwidth}\n"));
            match score {
                ScoreSpec::Gaussian { mean, var } => {
                    s.push_str("score = gaussian\n");
                    s.push_str(&format!(
                        "score_mean = {}\nscore_var = {var}\n",
                        mean.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
                    ));
                }
                ScoreSpec::GaussianMixture { weights, means, vars } => {
                    s.push_str("score = gaussian_mixture\n");
                    s.push_str(&format!(
                        "score_means = {}\n",
                        means
                            .iter()
                            .map(|m| m.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
                            .collect::<Vec<_>>()
                            .join(";")
                    ));
                    s.push_str(&format!(
                        "score_vars = {}\nscore_weights = {}\n",
                        vars.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
                        weights.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
                    ));
                }
            }
        }
    }
    s.push_str(&format!("reg_weight = {}\n\n[dynamics]\n", cfg.reg_weight));
    s.push_str(&format!("lambda = {}\n", cfg.lambda));
    match (&cfg.eta, &cfg.eta_sequence) {
        (Some(e), _) => s.push_str(&format!("eta = {e}\n")),
        (None, Some(seq)) => s.push_str(&format!(
            "eta_sequence = {}\n",
            seq.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
        )),
        _ => {}
    }
    s.push_str(&format!(
        "steps = {}\nn_particles = {}\nseed = {}\ninit_mean = {}\ninit_std = {}\n\n[estimator]\nkind = {}\n",
        cfg.steps, cfg.n_particles, cfg.seed, cfg.init_mean, cfg.init_std, cfg.estimator_kind
    ));
    if cfg.estimator_kind != "full" {
        s.push_str(&format!("batch_size = {}\n", cfg.batch_size));
    }
    if cfg.estimator_kind == "svrg" {
        s.push_str(&format!("refresh_period = {}\n", cfg.refresh_period));
    }
    s.push_str(&format!(
        "\n[output]\nout_dir = {}\nlog_every = {}\nthreads = {}\nentropy = {}\nsigma_v_probe = {}\nprobe_trials = {}\nrecord_wall_time = {}\n",
        cfg.out_dir,
        cfg.log_every,
        cfg.threads.map_or("auto".to_string(), |t| t.to_string()),
        cfg.entropy,
        cfg.sigma_v_probe,
        cfg.probe_trials,
        cfg.record_wall_time,
    ));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[model]
kind = linear_quadratic
dim = 2

[dynamics]
lambda = 1.0
eta = 0.01
steps = 5000
n_particles = 1000
seed = 1
";

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.log_every, 100);
        assert_eq!(cfg.threads, None);
        assert_eq!(cfg.estimator_kind, "full");
        assert_eq!(cfg.reg_weight, 0.0);
        assert!(cfg.entropy);
        assert!(!cfg.record_wall_time);
        assert!(matches!(cfg.model, ModelSpec::LinearQuadratic { dim: 2, .. }));
    }

    #[test]
    fn negative_lambda_names_key_and_line() {
        let text = MINIMAL.replace("lambda = 1.0", "lambda = -1");
        let e = parse_config(&text).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("lambda"), "{msg}");
        assert!(msg.contains("line 6"), "{msg}");
    }

    #[test]
    fn duplicate_key_warns_and_last_wins() {
        let text = format!("{MINIMAL}init_std = 2.0\ninit_std = 3.0\n");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.init_std, 3.0);
        assert_eq!(cfg.warnings.len(), 1);
        assert!(cfg.warnings[0].contains("init_std"));
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let text = format!("{MINIMAL}bogus = 1\n");
        let e = parse_config(&text).unwrap_err();
        assert!(e.to_string().contains("bogus"));
        assert!(e.to_string().contains("line 11"), "{e}");
    }

    #[test]
    fn key_in_wrong_section_rejected() {
        let text = MINIMAL.replace("dim = 2", "dim = 2\nlog_every = 10");
        let e = parse_config(&text).unwrap_err();
        assert!(e.to_string().contains("[output]"), "{e}");
    }

    #[test]
    fn overrides_route_by_schema() {
        let mut raw = RawConfig::parse(MINIMAL).unwrap();
        raw.apply_override("eta=0.5").unwrap();
        raw.apply_override("threads=2").unwrap();
        let cfg = typed_config(&raw).unwrap();
        assert_eq!(cfg.eta, Some(0.5));
        assert_eq!(cfg.threads, Some(2));
        assert!(raw.apply_override("nope=1").is_err());
    }

    #[test]
    fn stochastic_estimators_require_their_keys() {
        let text = format!("{MINIMAL}\n[estimator]\nkind = sgd\n");
        let e = parse_config(&text).unwrap_err();
        assert!(e.to_string().contains("batch_size"), "{e}");
        let text = format!("{MINIMAL}\n[estimator]\nkind = svrg\nbatch_size = 4\n");
        let e = parse_config(&text).unwrap_err();
        assert!(e.to_string().contains("refresh_period"), "{e}");
        let text =
            format!("{MINIMAL}\n[estimator]\nkind = svrg\nbatch_size = 4\nrefresh_period = 8\n");
        assert!(parse_config(&text).is_ok());
    }

    #[test]
    fn eta_and_sequence_are_exclusive() {
        let text = format!("{MINIMAL}eta_sequence = 0.1,0.2\n");
        assert!(parse_config(&text).is_err());
        let text = MINIMAL.replace("eta = 0.01", "eta_sequence = 0.1,0.05");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.eta_sequence, Some(vec![0.1, 0.05]));
    }
}
