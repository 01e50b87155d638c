//! Run configuration: UTF-8 `key = value` lines grouped under `[section]`
//! headers, `#` comments, and repeatable `[cluster]` sections describing a
//! synthetic scene.

use std::fmt::Write;

use thiserror::Error;

use crate::distillation::DistillConfig;
use crate::gbd::{GbdConfig, GmmConfig, Symmetrize};
use crate::hua::{HuaConfig, SimDMode};
use crate::losses::LossConfig;
use crate::synth::{ClusterSpec, SceneSpec};
use crate::uncertainty::ScoreMethod;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },
    #[error("invalid value {value:?} for `{key}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("cluster section at line {line}: {message}")]
    Cluster { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    S3dis,
    Scannet,
}

/// Every tunable of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub score_method: ScoreMethod,
    /// Threshold of the open-set prediction rule.
    pub predict_lambda: f64,
    pub hua: HuaConfig,
    pub gbd: GbdConfig,
    pub loss: LossConfig,
    pub distill_temperature: f64,
    pub distill_n_novel: usize,
    pub eval_old_classes: Vec<i32>,
    pub eval_novel_classes: Vec<i32>,
    pub scene: SceneSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            score_method: ScoreMethod::Msp,
            predict_lambda: 0.5,
            hua: HuaConfig::s3dis(),
            gbd: GbdConfig::default(),
            loss: LossConfig::default(),
            distill_temperature: 2.0,
            distill_n_novel: 1,
            eval_old_classes: Vec::new(),
            eval_novel_classes: Vec::new(),
            scene: SceneSpec::default(),
        }
    }
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| invalid(key, value, e.to_string()))
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse_num(key, value)?;
    if !v.is_finite() {
        return Err(invalid(key, value, "must be finite"));
    }
    Ok(v)
}

/// Comma-separated integers; `a-b` denotes an inclusive range.
fn parse_int_list(key: &str, value: &str) -> Result<Vec<i32>, ConfigError> {
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-').filter(|(a, _)| !a.is_empty()) {
            Some((a, b)) => {
                let (a, b): (i32, i32) = (parse_num(key, a.trim())?, parse_num(key, b.trim())?);
                if a > b {
                    return Err(invalid(key, value, "range start exceeds end"));
                }
                out.extend(a..=b);
            }
            None => out.push(parse_num(key, part)?),
        }
    }
    Ok(out)
}

fn fmt_list(v: &[i32]) -> String {
    v.iter().map(i32::to_string).collect::<Vec<_>>().join(", ")
}

impl PipelineConfig {
    pub fn with_preset(preset: Preset) -> Self {
        let mut c = Self::default();
        c.apply_preset(preset);
        c
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        let base = match preset {
            Preset::S3dis => HuaConfig::s3dis(),
            Preset::Scannet => HuaConfig::scannet(),
        };
        self.hua.m = base.m;
        self.hua.p = base.p;
        self.hua.lambda = base.lambda;
    }

    /// Sets one `section.key` entry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "score.method" => {
                self.score_method = match ScoreMethod::parse(v) {
                    Some(m @ (ScoreMethod::Msp | ScoreMethod::MaxLogit)) => m,
                    _ => return Err(invalid(key, v, "expected msp or maxlogit")),
                }
            }
            "predict.lambda" => self.predict_lambda = parse_f64(key, v)?,
            "hua.m" => self.hua.m = parse_num(key, v)?,
            "hua.p" => self.hua.p = parse_f64(key, v)?,
            "hua.lambda" => self.hua.lambda = parse_f64(key, v)?,
            "hua.k" => self.hua.k = parse_num(key, v)?,
            "hua.max_iterations" => self.hua.max_iterations = parse_num(key, v)?,
            "hua.sim_d_mode" => {
                self.hua.sim_d_mode = SimDMode::parse(v).ok_or_else(|| invalid(key, v, "expected inverted or literal_eq6"))?
            }
            "hua.rng_seed" => self.hua.rng_seed = parse_num(key, v)?,
            "gbd.k" => self.gbd.k = parse_num(key, v)?,
            "gbd.epsilon" => self.gbd.epsilon = parse_f64(key, v)?,
            "gbd.min_object_points" => self.gbd.min_object_points = parse_num(key, v)?,
            "gbd.sim_d_mode" => {
                self.gbd.sim_d_mode = SimDMode::parse(v).ok_or_else(|| invalid(key, v, "expected inverted or literal_eq6"))?
            }
            "gbd.symmetrize" => {
                self.gbd.symmetrize = Symmetrize::parse(v).ok_or_else(|| invalid(key, v, "expected min or first"))?
            }
            "gbd.fallback_percentile" => {
                let q = parse_f64(key, v)?;
                if !(q > 0.0 && q <= 1.0) {
                    return Err(invalid(key, v, "must be in (0, 1]"));
                }
                self.gbd.fallback_percentile = q;
            }
            "gbd.gmm_max_iter" => self.gbd.gmm.max_iter = parse_num(key, v)?,
            "gbd.gmm_tol" => self.gbd.gmm.tol = parse_f64(key, v)?,
            "gbd.gmm_restarts" => self.gbd.gmm.restarts = parse_num(key, v)?,
            "gbd.rng_seed" => self.gbd.gmm.rng_seed = parse_num(key, v)?,
            "loss.alpha" => self.loss.alpha = parse_f64(key, v)?,
            "distill.temperature" => {
                let t = parse_f64(key, v)?;
                if t <= 0.0 {
                    return Err(invalid(key, v, "must be positive"));
                }
                self.distill_temperature = t;
            }
            "distill.n_novel" => self.distill_n_novel = parse_num(key, v)?,
            "eval.old_classes" => self.eval_old_classes = parse_int_list(key, v)?,
            "eval.novel_classes" => self.eval_novel_classes = parse_int_list(key, v)?,
            "synth.rng_seed" => self.scene.rng_seed = parse_num(key, v)?,
            "synth.n_classes" => self.scene.n_classes = parse_num(key, v)?,
            "synth.known_peak" => self.scene.logit_model.known_peak = parse_f64(key, v)?,
            "synth.unknown_flatness" => self.scene.logit_model.unknown_flatness = parse_f64(key, v)?,
            "synth.noise_sigma" => self.scene.logit_model.noise_sigma = parse_f64(key, v)?,
            _ => return Err(ConfigError::UnknownKey { key: key.to_string() }),
        }
        Ok(())
    }

    /// Applies a config file on top of `self`. `[cluster]` sections, when
    /// present, replace the scene's clusters.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut section: Option<String> = None;
        let mut clusters: Vec<(usize, Vec<(String, String)>)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line: line_no,
                    message: format!("unterminated section header {line:?}"),
                })?;
                let name = name.trim().to_string();
                if name == "cluster" {
                    clusters.push((line_no, Vec::new()));
                }
                section = Some(name);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                message: format!("expected `key = value`, found {line:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match section.as_deref() {
                None => {
                    return Err(ConfigError::Syntax {
                        line: line_no,
                        message: format!("key `{key}` appears before any [section]"),
                    })
                }
                Some("cluster") => clusters.last_mut().unwrap().1.push((key.to_string(), value.to_string())),
                Some(s) => self.set(&format!("{s}.{key}"), value)?,
            }
        }
        if !clusters.is_empty() {
            self.scene.known_clusters.clear();
            self.scene.unknown_clusters.clear();
            for (line, entries) in clusters {
                let c = parse_cluster(line, &entries)?;
                if c.class_id < 0 {
                    self.scene.unknown_clusters.push(c);
                } else {
                    self.scene.known_clusters.push(c);
                }
            }
        }
        Ok(())
    }

    /// Applies `section.key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), ConfigError> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: 0,
                message: format!("override {o:?} is not key=value"),
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn distill_config(&self, width: usize) -> DistillConfig {
        DistillConfig {
            temperature: self.distill_temperature,
            n_novel: self.distill_n_novel,
            novel_label_offset: width.saturating_sub(self.distill_n_novel),
        }
    }

    /// Serializes the full configuration in the format [`apply_text`] reads.
    ///
    /// [`apply_text`]: PipelineConfig::apply_text
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let h = &self.hua;
        let g = &self.gbd;
        let GmmConfig { max_iter, tol, rng_seed, restarts } = &g.gmm;
        let m = &self.scene.logit_model;
        writeln!(s, "[score]\nmethod = {}\n", self.score_method).unwrap();
        writeln!(s, "[predict]\nlambda = {:?}\n", self.predict_lambda).unwrap();
        writeln!(
            s,
            "[hua]\nm = {}\np = {:?}\nlambda = {:?}\nk = {}\nmax_iterations = {}\nsim_d_mode = {}\nrng_seed = {}\n",
            h.m, h.p, h.lambda, h.k, h.max_iterations, h.sim_d_mode, h.rng_seed
        )
        .unwrap();
        writeln!(
            s,
            "[gbd]\nk = {}\nepsilon = {:?}\nmin_object_points = {}\nsim_d_mode = {}\nsymmetrize = {}\nfallback_percentile = {:?}\ngmm_max_iter = {max_iter}\ngmm_tol = {tol:?}\ngmm_restarts = {restarts}\nrng_seed = {rng_seed}\n",
            g.k, g.epsilon, g.min_object_points, g.sim_d_mode, g.symmetrize.as_str(), g.fallback_percentile
        )
        .unwrap();
        writeln!(s, "[loss]\nalpha = {:?}\n", self.loss.alpha).unwrap();
        writeln!(s, "[distill]\ntemperature = {:?}\nn_novel = {}\n", self.distill_temperature, self.distill_n_novel).unwrap();
        writeln!(
            s,
            "[eval]\nold_classes = {}\nnovel_classes = {}\n",
            fmt_list(&self.eval_old_classes),
            fmt_list(&self.eval_novel_classes)
        )
        .unwrap();
        writeln!(
            s,
            "[synth]\nrng_seed = {}\nn_classes = {}\nknown_peak = {:?}\nunknown_flatness = {:?}\nnoise_sigma = {:?}",
            self.scene.rng_seed, self.scene.n_classes, m.known_peak, m.unknown_flatness, m.noise_sigma
        )
        .unwrap();
        for c in self.scene.known_clusters.iter().chain(&self.scene.unknown_clusters) {
            writeln!(
                s,
                "\n[cluster]\ncenter = {:?}, {:?}, {:?}\nradius = {:?}\npoints = {}\nclass = {}",
                c.center[0], c.center[1], c.center[2], c.radius, c.point_count, c.class_id
            )
            .unwrap();
        }
        s
    }
}

fn parse_cluster(line: usize, entries: &[(String, String)]) -> Result<ClusterSpec, ConfigError> {
    let err = |message: String| ConfigError::Cluster { line, message };
    let mut center = None;
    let mut radius = None;
    let mut points = None;
    let mut class = None;
    for (k, v) in entries {
        let key = format!("cluster.{k}");
        match k.as_str() {
            "center" => {
                let parts: Vec<f64> = v.split(',').map(|p| parse_f64(&key, p.trim())).collect::<Result<_, _>>()?;
                let arr: [f64; 3] = parts
                    .try_into()
                    .map_err(|_| invalid(&key, v, "expected three comma-separated numbers"))?;
                center = Some(arr);
            }
            "radius" => radius = Some(parse_f64(&key, v)?),
            "points" => points = Some(parse_num(&key, v)?),
            "class" => class = Some(parse_num(&key, v)?),
            _ => return Err(ConfigError::UnknownKey { key }),
        }
    }
    Ok(ClusterSpec {
        center: center.ok_or_else(|| err("missing center".into()))?,
        radius: radius.ok_or_else(|| err("missing radius".into()))?,
        point_count: points.ok_or_else(|| err("missing points".into()))?,
        class_id: class.ok_or_else(|| err("missing class".into()))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_s3dis() {
        let c = PipelineConfig::default();
        assert_eq!((c.hua.m, c.hua.p, c.hua.lambda), (20, 0.02, 1.0));
        assert_eq!(c.loss.alpha, 0.001);
        let s = PipelineConfig::with_preset(Preset::Scannet);
        assert_eq!((s.hua.m, s.hua.p, s.hua.lambda), (200, 0.15, 2.0));
    }

    #[test]
    fn parses_sections_comments_and_clusters() {
        let text = "# run\n[hua]\nm = 5  # seeds\nlambda=0.5\n\n[cluster]\ncenter = 1, 2, 3\nradius = 0.5\npoints = 10\nclass = -1\n[cluster]\ncenter = 0,0,0\nradius = 1\npoints = 20\nclass = 2\n";
        let mut c = PipelineConfig::default();
        c.apply_text(text).unwrap();
        assert_eq!(c.hua.m, 5);
        assert_eq!(c.hua.lambda, 0.5);
        assert_eq!(c.scene.unknown_clusters.len(), 1);
        assert_eq!(c.scene.known_clusters[0].class_id, 2);
        assert_eq!(c.scene.unknown_clusters[0].center, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn unknown_key_is_named() {
        let mut c = PipelineConfig::default();
        let err = c.apply_text("[hua]\nseeds = 3\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey { key: "hua.seeds".into() });
        assert!(err.to_string().contains("hua.seeds"));
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let mut c = PipelineConfig::default();
        assert!(matches!(c.apply_text("m = 3\n"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(c.apply_text("[hua]\njunk\n"), Err(ConfigError::Syntax { line: 2, .. })));
        assert!(matches!(c.apply_text("[hua]\nm = x\n"), Err(ConfigError::InvalidValue { .. })));
        assert!(matches!(c.apply_text("[cluster]\nradius = 1\n"), Err(ConfigError::Cluster { .. })));
    }

    #[test]
    fn overrides_and_lists() {
        let mut c = PipelineConfig::default();
        c.apply_overrides(&["gbd.epsilon=2.5", "eval.novel_classes = 10-12, 15"]).unwrap();
        assert_eq!(c.gbd.epsilon, 2.5);
        assert_eq!(c.eval_novel_classes, vec![10, 11, 12, 15]);
        assert!(c.apply_overrides(&["nope"]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut c = PipelineConfig::with_preset(Preset::Scannet);
        c.gbd.symmetrize = Symmetrize::First;
        c.eval_old_classes = vec![0, 1, 2];
        let mut back = PipelineConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }
}
