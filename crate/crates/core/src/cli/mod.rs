//! Batch command line: one subcommand per stage plus `pipeline`, which chains
//! them. Every subcommand writes its artifacts and a `key = value` run report
//! into `--output-dir`.

mod files;

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use ndarray::Array2;

use crate::config::{ConfigError, PipelineConfig, Preset};
use crate::distillation::make_distilled_gt;
use crate::gbd::{detect_unknown_objects, GbdOutcome, UnknownMask};
use crate::hua::{grow_region, RegionState, StopReason};
use crate::losses::{closed_set_loss, pseudo_loss, total_oss_loss};
use crate::metrics::{aupr, auroc, miou_split, pr_curve, MiouReport};
use crate::pointset::{load_cloud, save_cloud, CloudFormat};
use crate::pseudo_labeling::make_pseudo_gt;
use crate::scalar::mean_and_population_std;
use crate::synth::generate_scene;
use crate::uncertainty::{predict_open_set, score, Polarity, ScoreField, ScoreMethod};
use crate::{Cloud, Error};

pub use files::{parse_report, read_indices, read_labels, read_mask, read_scores, Report};
use files::{encode_mask, encode_scores, lines_of, write_text};

/// Failure category of a run; the rendered line starts with the category.
#[derive(Debug)]
pub enum CliError {
    Config { op: &'static str, message: String },
    Io { op: &'static str, message: String },
    Stage { module: &'static str, op: &'static str, source: Error },
}

impl CliError {
    fn io(op: &'static str, message: String) -> Self {
        CliError::Io { op, message }
    }

    fn config(op: &'static str, message: impl Into<String>) -> Self {
        CliError::Config { op, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Io { .. } => 3,
            CliError::Stage { .. } => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { op, message } => write!(f, "config-error [config::{op}]: {message}"),
            CliError::Io { op, message } => write!(f, "io-error [cli::{op}]: {message}"),
            CliError::Stage { module, op, source } => write!(f, "stage-error [{module}::{op}]: {source}"),
        }
    }
}

impl std::error::Error for CliError {}

fn stage<T>(module: &'static str, op: &'static str, r: crate::Result<T>) -> Result<T, CliError> {
    r.map_err(|source| CliError::Stage { module, op, source })
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::config("parse", e.to_string())
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetArg {
    S3dis,
    Scannet,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Msp,
    Maxlogit,
}

#[derive(Debug, Parser)]
#[command(name = "owpl", version, about = "Open-world point cloud labeling from per-point class probabilities")]
struct Cli {
    /// Configuration file (`key = value` lines under `[section]` headers).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Leave wall-clock fields out of reports.
    #[arg(long, global = true)]
    no_timings: bool,
    #[arg(long, global = true, value_enum)]
    preset: Option<PresetArg>,
    /// Config override, `section.key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-point uncertainty scores from logits.
    Score {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
    },
    /// Grow the unknown region from low-confidence seeds.
    Hua {
        #[arg(long)]
        cloud: PathBuf,
        #[command(flatten)]
        scores: ScoresArg,
    },
    /// Separate unknown objects from the grown region.
    Gbd {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        region: PathBuf,
        #[command(flatten)]
        scores: ScoresArg,
    },
    /// Overwrite closed-set labels with the unknown label on detected objects.
    Pseudo {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        region: PathBuf,
        #[arg(long)]
        gbd_labels: PathBuf,
        /// Closed-set labels; the cloud's own labels are used when omitted.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Soft targets from teacher logits and novel labels.
    Distill {
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        novel_labels: PathBuf,
        #[arg(long)]
        temperature: Option<f64>,
    },
    /// Ranking metrics and mIoU.
    Eval {
        #[arg(long)]
        gt_mask: Option<PathBuf>,
        /// Score file to rank points by.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Predicted 0/1 unknown mask.
        #[arg(long)]
        pred_mask: Option<PathBuf>,
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        gt_labels: Option<PathBuf>,
    },
    /// Synthetic scene from the `[synth]` and `[cluster]` config sections.
    Synth,
    /// score, hua, gbd, pseudo and eval in one run.
    Pipeline {
        /// Input cloud; a synthetic scene is generated when omitted.
        #[arg(long)]
        cloud: Option<PathBuf>,
        #[arg(long)]
        gt_mask: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ScoresArg {
    /// Score file; scores are computed with `score.method` when omitted.
    #[arg(long)]
    scores: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs and returns the exit code.
/// Errors are printed to stderr as one categorized line.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::default();
    if let Some(p) = cli.preset {
        cfg.apply_preset(match p {
            PresetArg::S3dis => Preset::S3dis,
            PresetArg::Scannet => Preset::Scannet,
        });
    }
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("read", format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    cfg.apply_overrides(&cli.overrides)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli)?;
    if cli.threads == Some(0) {
        return Err(CliError::config("threads", "--threads must be at least 1"));
    }
    std::fs::create_dir_all(&cli.output_dir)
        .map_err(|e| CliError::io("create_output_dir", format!("{}: {e}", cli.output_dir.display())))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::config("threads", e.to_string()))?;
    let mut ctx = Ctx {
        cfg,
        out: cli.output_dir.clone(),
        timings: !cli.no_timings,
        report: Report::default(),
        clock: Vec::new(),
    };
    pool.install(|| ctx.dispatch(&cli.command))
}

struct Ctx {
    cfg: PipelineConfig,
    out: PathBuf,
    timings: bool,
    report: Report,
    clock: Vec<(&'static str, f64)>,
}

fn load(path: &Path) -> Result<Cloud, CliError> {
    load_cloud(path, CloudFormat::from_path(path))
        .map_err(|e| CliError::io("load_cloud", format!("{}: {e}", path.display())))
}

fn method_arg(m: MethodArg) -> ScoreMethod {
    match m {
        MethodArg::Msp => ScoreMethod::Msp,
        MethodArg::Maxlogit => ScoreMethod::MaxLogit,
    }
}

fn score_file_name(method: ScoreMethod) -> String {
    format!("scores_{}.txt", method.as_str())
}

/// Region reconstructed from a member list, for stages re-entered from files.
fn region_from_members(members: Vec<usize>, scores: &ScoreField<f64>, lambda: f64) -> Result<RegionState<f64>, CliError> {
    let n = scores.len();
    if let Some(&bad) = members.iter().find(|&&i| i >= n) {
        return Err(CliError::io("read_indices", format!("region index {bad} out of range for {n} points")));
    }
    let (global_mean, global_std) = mean_and_population_std(&scores.scores)
        .ok_or_else(|| CliError::io("read_scores", "empty score file".into()))?;
    let region_mean = members.iter().map(|&i| scores.scores[i]).sum::<f64>() / members.len().max(1) as f64;
    Ok(RegionState {
        seeds: Vec::new(),
        iteration: 0,
        mean_score_history: vec![region_mean],
        stopped_reason: StopReason::StopCondition,
        global_mean,
        global_std,
        threshold: global_mean - lambda * global_std,
        members,
    })
}

fn unknown_indicator(n: usize, mask: &UnknownMask) -> Vec<bool> {
    let mut v = vec![false; n];
    for i in mask.unknown_points() {
        v[i] = true;
    }
    v
}

/// Default old classes: every non-negative ground-truth or predicted label not
/// listed as novel.
fn class_sets(cfg: &PipelineConfig, pred: &[i32], gt: &[i32]) -> (BTreeSet<i32>, BTreeSet<i32>) {
    let novel: BTreeSet<i32> = cfg.eval_novel_classes.iter().copied().collect();
    let old: BTreeSet<i32> = if cfg.eval_old_classes.is_empty() {
        pred.iter().chain(gt).copied().filter(|&l| l >= 0 && !novel.contains(&l)).collect()
    } else {
        cfg.eval_old_classes.iter().copied().collect()
    };
    (old, novel)
}

fn iou_csv(report: &MiouReport<f64>) -> String {
    let mut s = String::from("class,iou\n");
    for (c, v) in &report.per_class {
        s.push_str(&format!("{c},{v:?}\n"));
    }
    s
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<(), CliError> {
        info!("writing {}", self.path(name).display());
        write_text(&self.path(name), text)
    }

    fn timed<T>(&mut self, label: &'static str, f: impl FnOnce(&mut Self) -> Result<T, CliError>) -> Result<T, CliError> {
        let start = Instant::now();
        let r = f(self)?;
        self.clock.push((label, start.elapsed().as_secs_f64() * 1e3));
        Ok(r)
    }

    fn finish(&mut self, name: &str) -> Result<(), CliError> {
        if self.timings {
            for (label, ms) in std::mem::take(&mut self.clock) {
                self.report.push(format!("timing.{label}_ms"), format!("{ms:.3}"));
            }
        }
        let mut section = String::new();
        let mut cluster = 0usize;
        for line in self.cfg.to_text().lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(s) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = if s == "cluster" {
                    cluster += 1;
                    format!("cluster.{}", cluster - 1)
                } else {
                    s.to_string()
                };
            } else if let Some((k, v)) = line.split_once('=') {
                self.report.push(format!("config.{section}.{}", k.trim()), v.trim());
            }
        }
        let text = self.report.render();
        self.write(name, &text)
    }

    fn header(&mut self, command: &str) {
        self.report.push("owpl.version", env!("CARGO_PKG_VERSION"));
        self.report.push("command", command);
    }

    fn dispatch(&mut self, command: &Command) -> Result<(), CliError> {
        match command {
            Command::Score { cloud, method } => {
                self.header("score");
                let cloud = load(cloud)?;
                let method = method.map(method_arg).unwrap_or(self.cfg.score_method);
                self.report.push("points", cloud.n_points());
                self.report.push("classes", cloud.n_classes());
                self.do_score(&cloud, method)?;
                self.finish("score_report.txt")
            }
            Command::Hua { cloud, scores } => {
                self.header("hua");
                let cloud = load(cloud)?;
                let scores = self.scores_for(&cloud, scores.scores.as_deref())?;
                self.do_hua(&cloud, &scores)?;
                self.finish("hua_report.txt")
            }
            Command::Gbd { cloud, region, scores } => {
                self.header("gbd");
                let cloud = load(cloud)?;
                let scores = self.scores_for(&cloud, scores.scores.as_deref())?;
                let region = region_from_members(read_indices(region)?, &scores, self.cfg.hua.lambda)?;
                self.do_gbd(&cloud, &region, &scores)?;
                self.finish("gbd_report.txt")
            }
            Command::Pseudo { cloud, region, gbd_labels, labels } => {
                self.header("pseudo");
                let cloud = load(cloud)?;
                let members = read_indices(region)?;
                let mask = stage("gbd", "from_region_labels", UnknownMask::from_region_labels(&members, &read_labels(gbd_labels)?))?;
                let closed = match labels {
                    Some(p) => read_labels(p)?,
                    None => cloud
                        .labels()
                        .ok_or_else(|| CliError::io("load_cloud", "cloud has no labels; pass --labels".into()))?
                        .to_vec(),
                };
                self.do_pseudo(&cloud, &closed, &mask)?;
                self.finish("pseudo_report.txt")
            }
            Command::Distill { teacher, novel_labels, temperature } => {
                self.header("distill");
                let teacher = load(teacher)?;
                let novel = read_labels(novel_labels)?;
                let mut dc = self.cfg.distill_config(teacher.n_classes());
                if let Some(t) = temperature {
                    dc.temperature = *t;
                }
                let soft = self.timed("distill", |_| {
                    stage("distillation", "make_distilled_gt", make_distilled_gt(teacher.logits(), &novel, &dc))
                })?;
                let soft = soft.soft().expect("distilled labels are soft");
                let width = soft.ncols();
                let mut csv = (0..width).map(|k| format!("p_{k}")).collect::<Vec<_>>().join(",");
                csv.push('\n');
                for row in soft.rows() {
                    csv.push_str(&row.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(","));
                    csv.push('\n');
                }
                self.write("distilled_gt.csv", &csv)?;
                self.report.push("points", soft.nrows());
                self.report.push("width", width);
                self.report.real("temperature", dc.temperature);
                self.report.push("novel_label_offset", dc.novel_label_offset);
                self.report.push("novel_points", novel.iter().filter(|&&l| l >= 0).count());
                self.finish("distill_report.txt")
            }
            Command::Eval { gt_mask, scores, pred_mask, pred, gt_labels } => {
                self.header("eval");
                let mut did = false;
                if scores.is_some() || pred_mask.is_some() {
                    let gt = read_mask(
                        gt_mask
                            .as_deref()
                            .ok_or_else(|| CliError::config("eval", "--gt-mask is required with --scores or --pred-mask"))?,
                    )?;
                    if let Some(p) = scores {
                        let field = read_scores(p)?;
                        self.eval_scores("eval.score", &field.unknown_oriented(), &gt, true)?;
                    }
                    if let Some(p) = pred_mask {
                        let m: Vec<f64> = read_mask(p)?.into_iter().map(|b| f64::from(u8::from(b))).collect();
                        self.eval_scores("eval.mask", &m, &gt, scores.is_none())?;
                    }
                    did = true;
                }
                match (pred, gt_labels) {
                    (Some(p), Some(g)) => {
                        self.eval_miou(&read_labels(p)?, &read_labels(g)?)?;
                        did = true;
                    }
                    (None, None) => {}
                    _ => return Err(CliError::config("eval", "--pred and --gt-labels go together")),
                }
                if !did {
                    return Err(CliError::config("eval", "nothing to evaluate; pass --scores, --pred-mask or --pred"));
                }
                self.finish("eval_report.txt")
            }
            Command::Synth => {
                self.header("synth");
                self.do_synth()?;
                self.finish("synth_report.txt")
            }
            Command::Pipeline { cloud, gt_mask } => {
                self.header("pipeline");
                self.pipeline(cloud.as_deref(), gt_mask.as_deref())?;
                self.finish("report.txt")
            }
        }
    }

    fn scores_for(&mut self, cloud: &Cloud, path: Option<&Path>) -> Result<ScoreField<f64>, CliError> {
        let field = match path {
            Some(p) => read_scores(p)?,
            None => stage("uncertainty", "score", score(cloud.logits(), self.cfg.score_method))?,
        };
        if field.len() != cloud.n_points() {
            return Err(CliError::io(
                "read_scores",
                format!("{} scores for {} points", field.len(), cloud.n_points()),
            ));
        }
        Ok(field)
    }

    fn do_synth(&mut self) -> Result<(Cloud, Vec<bool>), CliError> {
        let spec = self.cfg.scene.clone();
        let (cloud, mask) = self.timed("synth", |_| stage("synth", "generate_scene", generate_scene::<f64>(&spec)))?;
        save_cloud(&cloud, &self.path("scene.owpc"), CloudFormat::Owpc)
            .map_err(|e| CliError::io("save_cloud", e.to_string()))?;
        self.write("gt_mask.txt", &encode_mask(&mask))?;
        self.report.push("synth.points", cloud.n_points());
        self.report.push("synth.classes", cloud.n_classes());
        self.report.push("synth.unknown_points", mask.iter().filter(|&&u| u).count());
        Ok((cloud, mask))
    }

    fn do_score(&mut self, cloud: &Cloud, method: ScoreMethod) -> Result<ScoreField<f64>, CliError> {
        let field = self.timed("score", |_| stage("uncertainty", "score", score(cloud.logits(), method)))?;
        self.write(&score_file_name(method), &encode_scores(&field))?;
        let (mean, std) = mean_and_population_std(&field.scores).unwrap_or((f64::NAN, f64::NAN));
        self.report.push("score.method", method);
        self.report.push("score.polarity", field.polarity.as_str());
        self.report.real("score.mean", mean);
        self.report.real("score.std", std);
        Ok(field)
    }

    /// Closed-set argmax with the unknown label wherever the unknown score
    /// (`1 - MSP`, or the negated max logit) reaches `predict.lambda`.
    fn do_predict(&mut self, cloud: &Cloud, scores: &ScoreField<f64>) -> Result<Vec<i32>, CliError> {
        let u: Vec<f64> = match scores.method {
            ScoreMethod::Msp => scores.scores.iter().map(|s| 1.0 - s).collect(),
            _ => scores.unknown_oriented(),
        };
        let oriented = stage("uncertainty", "external", ScoreField::external(u, Polarity::HighMeansUnknown))?;
        let lambda = self.cfg.predict_lambda;
        let pred = self.timed("predict", |_| {
            stage("uncertainty", "predict_open_set", predict_open_set(cloud.logits(), &oriented, lambda))
        })?;
        self.write("open_set_pred.txt", &lines_of(&pred))?;
        let c = cloud.n_classes() as i32;
        self.report.push("predict.unknown_points", pred.iter().filter(|&&l| l == c).count());
        Ok(pred)
    }

    fn do_hua(&mut self, cloud: &Cloud, scores: &ScoreField<f64>) -> Result<RegionState<f64>, CliError> {
        let hua = self.cfg.hua.clone();
        let region = self.timed("hua", |_| stage("hua", "grow_region", grow_region(cloud, scores, &hua)))?;
        self.write("region.txt", &lines_of(&region.members))?;
        let r = &mut self.report;
        r.push("hua.seeds", region.seeds.len());
        r.push("hua.members", region.members.len());
        r.push("hua.iterations", region.iteration);
        r.push("hua.stopped_reason", region.stopped_reason.as_str());
        r.real("hua.global_mean", region.global_mean);
        r.real("hua.global_std", region.global_std);
        r.real("hua.threshold", region.threshold);
        r.reals("hua.mean_score_history", &region.mean_score_history);
        r.push("hua.satisfies_stop_condition", region.satisfies_stop_condition());
        Ok(region)
    }

    fn do_gbd(&mut self, cloud: &Cloud, region: &RegionState<f64>, scores: &ScoreField<f64>) -> Result<GbdOutcome<f64>, CliError> {
        let gcfg = self.cfg.gbd.clone();
        let out = self.timed("gbd", |_| stage("gbd", "detect_unknown_objects", detect_unknown_objects(cloud, region, scores, &gcfg)))?;
        self.write("gbd_labels.txt", &lines_of(out.mask.region_labels(&region.members)))?;
        let r = &mut self.report;
        r.push("gbd.region_points", region.members.len());
        r.push("gbd.graph_edges", out.graph.edges.len());
        r.push("gbd.tree_edges", out.tree.edges.len());
        match &out.fit {
            Some(fit) => {
                r.push("gbd.fit", "gmm");
                r.reals("gbd.mu", &fit.means);
                r.reals("gbd.sigma", &fit.stddevs);
                r.reals("gbd.pi", &fit.weights);
                r.real("gbd.log_likelihood", fit.log_likelihood);
                r.push("gbd.em_iterations", fit.iterations);
                r.push("gbd.em_converged", fit.converged);
            }
            None => r.push("gbd.fit", "percentile_fallback"),
        }
        r.real("gbd.threshold", out.threshold);
        r.push("gbd.cut_edges", out.tree.edges.len() - out.forest.edges.len());
        r.list("gbd.component_sizes", &out.component_sizes());
        r.push("gbd.objects", out.mask.objects.len());
        r.list("gbd.object_sizes", &out.mask.objects.iter().map(Vec::len).collect::<Vec<_>>());
        r.push("gbd.rejected", out.mask.rejected.len());
        Ok(out)
    }

    fn do_pseudo(&mut self, cloud: &Cloud, closed: &[i32], mask: &UnknownMask) -> Result<Vec<i32>, CliError> {
        if closed.len() != cloud.n_points() {
            return Err(CliError::io("read_labels", format!("{} labels for {} points", closed.len(), cloud.n_points())));
        }
        let c = cloud.n_classes();
        let labels = self.timed("pseudo", |_| stage("pseudo_labeling", "make_pseudo_gt", make_pseudo_gt::<f64>(closed, mask, c)))?;
        let labels = labels.into_hard().expect("pseudo labels are hard");
        self.write("pseudo_gt.txt", &lines_of(&labels))?;
        self.report.push("pseudo.unknown_label", c);
        self.report.push("pseudo.unknown_points", labels.iter().filter(|&&l| l == c as i32).count());
        self.report.push("pseudo.ignored_points", labels.iter().filter(|&&l| l < 0).count());
        Ok(labels)
    }

    fn eval_scores(&mut self, prefix: &str, scores: &[f64], gt: &[bool], write_curve: bool) -> Result<(), CliError> {
        if scores.len() != gt.len() {
            return Err(CliError::io("read_mask", format!("{} scores for {} mask entries", scores.len(), gt.len())));
        }
        let a = stage("metrics", "auroc", auroc(scores, gt))?;
        let p = stage("metrics", "aupr", aupr(scores, gt))?;
        self.report.real(format!("{prefix}_auroc"), a);
        self.report.real(format!("{prefix}_aupr"), p);
        if write_curve {
            let mut csv = String::from("threshold,precision,recall\n");
            for pt in stage("metrics", "pr_curve", pr_curve(scores, gt))? {
                csv.push_str(&format!("{:?},{:?},{:?}\n", pt.threshold, pt.precision, pt.recall));
            }
            self.write("pr_curve.csv", &csv)?;
        }
        Ok(())
    }

    fn eval_miou(&mut self, pred: &[i32], gt: &[i32]) -> Result<(), CliError> {
        let (old, novel) = class_sets(&self.cfg, pred, gt);
        let r = &mut self.report;
        let all = if novel.is_empty() {
            let m = stage("metrics", "miou", crate::metrics::miou::<f64>(pred, gt, &old))?;
            r.real("eval.miou", m.mean);
            m
        } else {
            let split = stage("metrics", "miou_split", miou_split::<f64>(pred, gt, &old, &novel))?;
            r.real("eval.miou", split.all.mean);
            r.real("eval.miou_old", split.old.mean);
            r.real("eval.miou_novel", split.novel.mean);
            split.all
        };
        self.write("per_class_iou.csv", &iou_csv(&all))
    }

    fn pipeline(&mut self, input: Option<&Path>, gt_mask: Option<&Path>) -> Result<(), CliError> {
        let (cloud, gt) = match input {
            Some(p) => {
                self.report.push("input", "file");
                let cloud = load(p)?;
                (cloud, gt_mask.map(read_mask).transpose()?)
            }
            None => {
                self.report.push("input", "synthetic");
                let (c, m) = self.do_synth()?;
                (c, Some(gt_mask.map(read_mask).transpose()?.unwrap_or(m)))
            }
        };
        let n = cloud.n_points();
        let c = cloud.n_classes();
        self.report.push("points", n);
        self.report.push("classes", c);
        let scores = self.do_score(&cloud, self.cfg.score_method)?;
        let open_set = self.do_predict(&cloud, &scores)?;
        let region = self.do_hua(&cloud, &scores)?;
        let gbd = self.do_gbd(&cloud, &region, &scores)?;
        let predicted = unknown_indicator(n, &gbd.mask);
        self.write("unknown_mask.txt", &encode_mask(&predicted))?;

        // Labels outside the closed set are not annotated for training.
        let closed: Vec<i32> = match cloud.labels() {
            Some(l) => l.iter().map(|&v| if v >= 0 && (v as usize) < c { v } else { -1 }).collect(),
            None => vec![-1; n],
        };
        let pseudo = self.do_pseudo(&cloud, &closed, &gbd.mask)?;

        self.losses(&cloud, &closed, &pseudo)?;

        if let Some(gt) = gt {
            if gt.len() != n {
                return Err(CliError::io("read_mask", format!("{} mask entries for {n} points", gt.len())));
            }
            let oriented = scores.unknown_oriented();
            self.eval_scores("eval.score", &oriented, &gt, true)?;
            let m: Vec<f64> = predicted.iter().map(|&b| f64::from(u8::from(b))).collect();
            self.eval_scores("eval.mask", &m, &gt, false)?;
            let inter = predicted.iter().zip(&gt).filter(|(p, g)| **p && **g).count();
            let union = predicted.iter().zip(&gt).filter(|(p, g)| **p || **g).count();
            let r = &mut self.report;
            r.real("eval.pseudo_unknown_iou", if union == 0 { 0.0 } else { inter as f64 / union as f64 });
            r.push("eval.true_unknown_points", gt.iter().filter(|&&g| g).count());
            r.push("eval.detected_true_unknown", inter);
            let truth: Vec<i32> = closed.iter().zip(&gt).map(|(&l, &u)| if u { c as i32 } else { l }).collect();
            let mut cfg = self.cfg.clone();
            if cfg.eval_novel_classes.is_empty() {
                cfg.eval_novel_classes = vec![c as i32];
            }
            std::mem::swap(&mut cfg, &mut self.cfg);
            let res = self.eval_miou(&pseudo, &truth);
            let open = class_sets(&self.cfg, &open_set, &truth);
            std::mem::swap(&mut cfg, &mut self.cfg);
            res?;
            let split = stage("metrics", "miou_split", miou_split::<f64>(&open_set, &truth, &open.0, &open.1))?;
            self.report.real("eval.open_set_miou", split.all.mean);
            self.report.real("eval.open_set_miou_novel", split.novel.mean);
        }
        Ok(())
    }

    /// Training objectives evaluated on the input logits, with an
    /// uninformative zero uncertainty column for the pseudo loss.
    fn losses(&mut self, cloud: &Cloud, closed: &[i32], pseudo: &[i32]) -> Result<(), CliError> {
        let labeled: Vec<usize> = (0..closed.len()).filter(|&i| closed[i] >= 0).collect();
        let pseudo_rows: Vec<usize> = (0..pseudo.len()).filter(|&i| pseudo[i] >= 0).collect();
        if labeled.is_empty() || pseudo_rows.is_empty() {
            self.report.push("loss.skipped", "no labeled points");
            return Ok(());
        }
        let logits = cloud.logits();
        let pick = |rows: &[usize]| Array2::from_shape_fn((rows.len(), logits.ncols()), |(i, k)| logits[[rows[i], k]]);
        let (closed_loss, _) = stage(
            "losses",
            "closed_set_loss",
            closed_set_loss(&pick(&labeled), &labeled.iter().map(|&i| closed[i]).collect::<Vec<_>>()),
        )?;
        let p = stage(
            "losses",
            "pseudo_loss",
            pseudo_loss(
                &pick(&pseudo_rows),
                &vec![0.0; pseudo_rows.len()],
                &pseudo_rows.iter().map(|&i| pseudo[i]).collect::<Vec<_>>(),
            ),
        )?;
        let r = &mut self.report;
        r.real("loss.closed", closed_loss);
        r.real("loss.pseudo", p.loss);
        r.real("loss.total", total_oss_loss(closed_loss, p.loss, &self.cfg.loss));
        Ok(())
    }
}
