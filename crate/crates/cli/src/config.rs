//! Run configuration: a flat `key=value` file, overridable from the command
//! line. Every key is always resolved to a concrete value, so a written
//! manifest parses back to the same configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ath_core::{GammaSchedule, HyperParams, KernelSpec, SigmaMode, Subtask, Variant};

use crate::error::{CliError, CliResult};

const KEYS: &[&str] = &[
    "source",
    "target",
    "subtask",
    "variant",
    "code_length",
    "alpha_s",
    "alpha_t",
    "beta_s",
    "beta_t",
    "lambda",
    "eta_bipartite",
    "eta_knn_s",
    "eta_knn_t",
    "max_iters",
    "ridge",
    "rel_tol",
    "per_row_gamma",
    "gamma_schedule",
    "anchors_s",
    "anchors_t",
    "sigma",
    "seed",
    "query_count",
    "split_seed",
    "standardize",
    "output",
    "export_trace",
    "export_pr",
    "export_graph",
    "pr_points",
];

const DEFAULT_CODE_LENGTH: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    /// `None` infers cross-domain retrieval, homogeneous or not by dimension.
    pub subtask: Option<Subtask>,
    pub variant: Variant,
    pub hp: HyperParams,
    pub gamma_schedule: GammaSchedule,
    pub kernel: KernelSpec,
    pub seed: u64,
    /// `None` holds out a tenth of the target (at least one sample).
    pub query_count: Option<usize>,
    pub split_seed: u64,
    pub standardize: bool,
    pub output: PathBuf,
    pub export_trace: bool,
    pub export_pr: bool,
    pub export_graph: bool,
    pub pr_points: usize,
}

/// One `key=value` assignment from a file or the command line, with the
/// directory relative paths are resolved against.
#[derive(Clone, Debug)]
pub struct Setting {
    pub key: String,
    pub value: String,
    pub base: PathBuf,
}

fn parse_line(line: &str, origin: &str) -> CliResult<Option<(String, String)>> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("{origin}: expected key=value, got '{line}'")))?;
    Ok(Some((k.trim().to_string(), v.trim().to_string())))
}

/// Parses `KEY=VALUE` given on the command line; paths resolve against the
/// working directory.
pub fn parse_override(arg: &str) -> CliResult<Setting> {
    let (key, value) = parse_line(arg, "--set")?
        .ok_or_else(|| CliError::usage(format!("--set expects key=value, got '{arg}'")))?;
    Ok(Setting {
        key,
        value,
        base: cwd()?,
    })
}

fn cwd() -> CliResult<PathBuf> {
    std::env::current_dir().map_err(|e| CliError::io(Path::new("."), e))
}

/// Reads a config file; relative paths inside it resolve against its own
/// directory.
pub fn read_config_file(path: &Path) -> CliResult<Vec<Setting>> {
    if !path.exists() {
        return Err(CliError::usage(format!(
            "config file not found: {}",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let base = std::path::absolute(path)
        .map_err(|e| CliError::io(path, e))?
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some((key, value)) = parse_line(line, &format!("{}:{}", path.display(), i + 1))? {
            out.push(Setting {
                key,
                value,
                base: base.clone(),
            });
        }
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::usage(format!("invalid value for {key}: '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> CliResult<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::usage(format!(
            "invalid value for {key}: '{value}' (expected true/false)"
        ))),
    }
}

fn parse_path(value: &str, base: &Path) -> Option<PathBuf> {
    if value.is_empty() {
        return None;
    }
    let p = Path::new(value);
    Some(if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    })
}

fn auto<T: FromStr>(key: &str, value: &str) -> CliResult<Option<T>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl RunConfig {
    /// Resolves settings in order, later ones winning. The variant and code
    /// length pick the hyperparameter defaults; every other key then
    /// overrides its field. Unknown keys are rejected.
    pub fn resolve(settings: &[Setting]) -> CliResult<Self> {
        let mut last: BTreeMap<&str, &Setting> = BTreeMap::new();
        for s in settings {
            let key = KEYS
                .iter()
                .find(|k| **k == s.key)
                .ok_or_else(|| CliError::usage(format!("unknown config key '{}'", s.key)))?;
            last.insert(key, s);
        }
        let get = |k: &str| last.get(k).map(|s| s.value.as_str());

        let variant = match get("variant") {
            Some(v) => Variant::from_str(v).map_err(|e| CliError::usage(e.to_string()))?,
            None => Variant::U,
        };
        let code_length = match get("code_length") {
            Some(v) => parse("code_length", v)?,
            None => DEFAULT_CODE_LENGTH,
        };
        let mut cfg = RunConfig {
            source: None,
            target: None,
            subtask: None,
            variant,
            hp: HyperParams::defaults(variant, code_length),
            gamma_schedule: GammaSchedule::EveryPass,
            kernel: KernelSpec::default(),
            seed: 0,
            query_count: None,
            split_seed: 0,
            standardize: false,
            output: cwd()?.join("ath-out"),
            export_trace: true,
            export_pr: false,
            export_graph: false,
            pr_points: 11,
        };

        for (&key, s) in &last {
            let v = s.value.as_str();
            match key {
                "source" => cfg.source = parse_path(v, &s.base),
                "target" => cfg.target = parse_path(v, &s.base),
                "subtask" => {
                    cfg.subtask = match v {
                        "auto" => None,
                        _ => {
                            Some(Subtask::from_str(v).map_err(|e| CliError::usage(e.to_string()))?)
                        }
                    }
                }
                "variant" | "code_length" => {}
                "alpha_s" => cfg.hp.alpha_s = parse(key, v)?,
                "alpha_t" => cfg.hp.alpha_t = parse(key, v)?,
                "beta_s" => cfg.hp.beta_s = parse(key, v)?,
                "beta_t" => cfg.hp.beta_t = parse(key, v)?,
                "lambda" => cfg.hp.lambda = parse(key, v)?,
                "eta_bipartite" => cfg.hp.eta_bipartite = parse(key, v)?,
                "eta_knn_s" => cfg.hp.eta_knn_s = parse(key, v)?,
                "eta_knn_t" => cfg.hp.eta_knn_t = parse(key, v)?,
                "max_iters" => cfg.hp.max_iters = parse(key, v)?,
                "ridge" => cfg.hp.ridge = parse(key, v)?,
                "rel_tol" => cfg.hp.rel_tol = parse(key, v)?,
                "per_row_gamma" => cfg.hp.per_row_gamma = parse_bool(key, v)?,
                "gamma_schedule" => {
                    cfg.gamma_schedule = match v {
                        "every_pass" => GammaSchedule::EveryPass,
                        "frozen" => GammaSchedule::Frozen,
                        _ => {
                            return Err(CliError::usage(format!(
                                "invalid value for gamma_schedule: '{v}'"
                            )))
                        }
                    }
                }
                "anchors_s" => cfg.kernel.source_anchors = parse(key, v)?,
                "anchors_t" => cfg.kernel.target_anchors = parse(key, v)?,
                "sigma" => {
                    cfg.kernel.sigma = match v {
                        "median" => SigmaMode::Median,
                        _ => SigmaMode::Fixed(parse(key, v)?),
                    }
                }
                "seed" => cfg.seed = parse(key, v)?,
                "query_count" => cfg.query_count = auto(key, v)?,
                "split_seed" => cfg.split_seed = parse(key, v)?,
                "standardize" => cfg.standardize = parse_bool(key, v)?,
                "output" => {
                    cfg.output = parse_path(v, &s.base)
                        .ok_or_else(|| CliError::usage("output must not be empty"))?
                }
                "export_trace" => cfg.export_trace = parse_bool(key, v)?,
                "export_pr" => cfg.export_pr = parse_bool(key, v)?,
                "export_graph" => cfg.export_graph = parse_bool(key, v)?,
                "pr_points" => cfg.pr_points = parse(key, v)?,
                _ => unreachable!("key list and match arms agree"),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.hp
            .validate()
            .map_err(|e| CliError::usage(e.to_string()))?;
        if self.kernel.source_anchors == 0 || self.kernel.target_anchors == 0 {
            return Err(CliError::usage("anchor counts must be at least 1"));
        }
        if let SigmaMode::Fixed(s) = self.kernel.sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(CliError::usage(format!("sigma must be positive, got {s}")));
            }
        }
        if self.query_count == Some(0) {
            return Err(CliError::usage("query_count must be at least 1"));
        }
        if self.pr_points < 2 {
            return Err(CliError::usage("pr_points must be at least 2"));
        }
        Ok(())
    }

    /// The manifest text: version header, then every key in a fixed order.
    pub fn to_manifest(&self) -> String {
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let hp = &self.hp;
        let mut out = String::new();
        let _ = writeln!(out, "# ath-cli {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "# ath-core {}", ath_core::VERSION);
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("source", path(&self.source));
        kv("target", path(&self.target));
        kv(
            "subtask",
            self.subtask.map_or("auto".into(), |s| s.to_string()),
        );
        kv("variant", self.variant.to_string());
        kv("code_length", hp.code_length.to_string());
        kv("alpha_s", hp.alpha_s.to_string());
        kv("alpha_t", hp.alpha_t.to_string());
        kv("beta_s", hp.beta_s.to_string());
        kv("beta_t", hp.beta_t.to_string());
        kv("lambda", hp.lambda.to_string());
        kv("eta_bipartite", hp.eta_bipartite.to_string());
        kv("eta_knn_s", hp.eta_knn_s.to_string());
        kv("eta_knn_t", hp.eta_knn_t.to_string());
        kv("max_iters", hp.max_iters.to_string());
        kv("ridge", hp.ridge.to_string());
        kv("rel_tol", hp.rel_tol.to_string());
        kv("per_row_gamma", hp.per_row_gamma.to_string());
        kv(
            "gamma_schedule",
            match self.gamma_schedule {
                GammaSchedule::EveryPass => "every_pass".into(),
                GammaSchedule::Frozen => "frozen".into(),
            },
        );
        kv("anchors_s", self.kernel.source_anchors.to_string());
        kv("anchors_t", self.kernel.target_anchors.to_string());
        kv(
            "sigma",
            match self.kernel.sigma {
                SigmaMode::Median => "median".into(),
                SigmaMode::Fixed(s) => s.to_string(),
            },
        );
        kv("seed", self.seed.to_string());
        kv(
            "query_count",
            self.query_count.map_or("auto".into(), |q| q.to_string()),
        );
        kv("split_seed", self.split_seed.to_string());
        kv("standardize", self.standardize.to_string());
        kv("output", self.output.display().to_string());
        kv("export_trace", self.export_trace.to_string());
        kv("export_pr", self.export_pr.to_string());
        kv("export_graph", self.export_graph.to_string());
        kv("pr_points", self.pr_points.to_string());
        out
    }

    /// Parses manifest text as if it were a config file in `base`.
    pub fn from_manifest(text: &str, base: &Path) -> CliResult<Self> {
        let mut settings = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if let Some((key, value)) = parse_line(line, &format!("manifest:{}", i + 1))? {
                settings.push(Setting {
                    key,
                    value,
                    base: base.to_path_buf(),
                });
            }
        }
        RunConfig::resolve(&settings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(key: &str, value: &str) -> Setting {
        Setting {
            key: key.into(),
            value: value.into(),
            base: PathBuf::from("/base"),
        }
    }

    #[test]
    fn variant_picks_defaults_and_keys_override() {
        let cfg = RunConfig::resolve(&[set("variant", "M"), set("lambda", "0.5")]).unwrap();
        assert_eq!(cfg.variant, Variant::M);
        assert_eq!(cfg.hp.beta_s, 1e3);
        assert_eq!(cfg.hp.lambda, 0.5);
        assert_eq!(cfg.hp.code_length, DEFAULT_CODE_LENGTH);
    }

    #[test]
    fn later_settings_win() {
        let cfg = RunConfig::resolve(&[set("seed", "1"), set("seed", "9")]).unwrap();
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = RunConfig::resolve(&[set("alpha", "1")]).unwrap_err();
        assert!(err.message.contains("unknown config key 'alpha'"));
    }

    #[test]
    fn invalid_hyperparameter_rejected() {
        assert!(RunConfig::resolve(&[set("alpha_s", "-1")]).is_err());
        assert!(RunConfig::resolve(&[set("code_length", "0")]).is_err());
        assert!(RunConfig::resolve(&[set("per_row_gamma", "maybe")]).is_err());
        assert!(RunConfig::resolve(&[set("query_count", "0")]).is_err());
    }

    #[test]
    fn relative_paths_resolve_against_their_base() {
        let cfg = RunConfig::resolve(&[set("source", "data/s.txt"), set("target", "/abs/t.txt")])
            .unwrap();
        assert_eq!(cfg.source.unwrap(), PathBuf::from("/base/data/s.txt"));
        assert_eq!(cfg.target.unwrap(), PathBuf::from("/abs/t.txt"));
    }

    #[test]
    fn manifest_round_trips() {
        let cfg = RunConfig::resolve(&[
            set("source", "s.txt"),
            set("target", "t.athm"),
            set("variant", "ath_k"),
            set("code_length", "24"),
            set("alpha_s", "0.1234567890123"),
            set("rel_tol", "1e-7"),
            set("sigma", "2.5"),
            set("gamma_schedule", "frozen"),
            set("query_count", "17"),
            set("subtask", "HeCDR"),
            set("export_graph", "true"),
        ])
        .unwrap();
        let text = cfg.to_manifest();
        assert_eq!(
            RunConfig::from_manifest(&text, Path::new("/elsewhere")).unwrap(),
            cfg
        );

        let plain = RunConfig::resolve(&[]).unwrap();
        assert_eq!(
            RunConfig::from_manifest(&plain.to_manifest(), Path::new("/x")).unwrap(),
            plain
        );
    }
}
