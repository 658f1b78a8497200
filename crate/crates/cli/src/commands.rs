//! Batch subcommands. Each reads its inputs, writes its outputs and returns a
//! human summary for stdout; nothing here depends on wall-clock time or
//! unseeded randomness.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Args;
use serde::{Deserialize, Serialize};
use spatial_reward::annotation::{
    clean_annotations, split_train_test, BatchAudit, CleaningConfig, CleaningError, GoldLabel,
    RaterReport, SplitRatio,
};
use spatial_reward::application::{best_of_n, group_candidates, BonOutput, CandidateLine};
use spatial_reward::evaluation::{
    benchmark_report, fused_scores, optimize_threshold, render_rank_table, render_table,
    BenchmarkReport, RankEvalResult, ThresholdGrid,
};
use spatial_reward::fusion::{describe, fit_weights, FitConfig, TieMode, WeightsFile};
use spatial_reward::scorer::{
    BackendConfig, BackendMode, ImageRef, LogitRecord, LogitSource, OfflineLogits, PromptType,
    RemoteBackend, ScoreRecord, Scorer,
};
use spatial_reward::{
    AnnotationRecord, Dimension, FusionWeights, MosRecord, PreferencePair, ValidationReport,
};

use crate::error::{CliError, CliResult};
use crate::files::{read_json, read_lines, read_records, sibling, write_json, write_records};

#[derive(Debug, Clone, Args)]
pub struct CleanArgs {
    /// Annotation records, one JSON object per line.
    #[arg(long)]
    pub input: PathBuf,
    /// MOS output file.
    #[arg(long)]
    pub out: PathBuf,
    /// Rater reliability report [default: <out>.raters.jsonl]
    #[arg(long)]
    pub raters_out: Option<PathBuf>,
    /// Gold labels for the batch audit; without them no audit is run.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Batch audit report [default: <out>.audit.jsonl]
    #[arg(long)]
    pub audit_out: Option<PathBuf>,
    /// Per-rating cleaning detail, including replaced outliers.
    #[arg(long)]
    pub cleaned_out: Option<PathBuf>,
    #[arg(long, requires = "test_out")]
    pub train_out: Option<PathBuf>,
    #[arg(long, requires = "train_out")]
    pub test_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.6)]
    pub srcc_min: f64,
    #[arg(long, default_value_t = 2.0)]
    pub z_max: f64,
    #[arg(long, default_value_t = 0.10)]
    pub audit_fraction: f64,
    #[arg(long, default_value_t = 0.85)]
    pub audit_accuracy_min: f64,
    #[arg(long, default_value = "4:1")]
    pub split_ratio: SplitRatio,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl CleanArgs {
    pub fn config(&self) -> CleaningConfig {
        CleaningConfig {
            srcc_min: self.srcc_min,
            z_max: self.z_max,
            audit_fraction: self.audit_fraction,
            audit_accuracy_min: self.audit_accuracy_min,
            split_ratio: self.split_ratio,
            rng_seed: self.seed,
        }
    }
}

pub fn clean(args: &CleanArgs) -> CliResult<String> {
    let lined = read_lines::<AnnotationRecord>(&args.input)?;
    let lines: Vec<usize> = lined.iter().map(|l| l.line).collect();
    let records: Vec<AnnotationRecord> = lined.into_iter().map(|l| l.value).collect();
    let gold = match &args.gold {
        Some(path) => Some(read_records::<GoldLabel>(path)?),
        None => None,
    };
    let config = args.config();
    let output = match clean_annotations(&records, gold.as_deref(), &config) {
        Ok(o) => o,
        Err(CleaningError::Invalid(report)) => {
            return Err(CliError::input(validation_message(&args.input, &report, &lines)))
        }
        Err(CleaningError::Other(e)) => return Err(e.into()),
    };

    write_records(&args.out, &output.mos)?;
    let raters_path = args.raters_out.clone().unwrap_or_else(|| sibling(&args.out, "raters"));
    write_records(&raters_path, &output.raters)?;
    if let Some(audits) = &output.audits {
        let audit_path = args.audit_out.clone().unwrap_or_else(|| sibling(&args.out, "audit"));
        write_records(&audit_path, audits)?;
    }
    if let Some(path) = &args.cleaned_out {
        let ratings: Vec<_> = output.cleaned.iter().flat_map(|g| g.ratings.iter()).collect();
        write_records(path, ratings)?;
    }
    if let (Some(train_path), Some(test_path)) = (&args.train_out, &args.test_out) {
        let (train, test) = split_train_test(&output.mos, &config)?;
        write_records(train_path, &train)?;
        write_records(test_path, &test)?;
    }

    Ok(clean_summary(&records, &output.mos, &output.raters, output.audits.as_deref()))
}

fn validation_message(path: &Path, report: &ValidationReport, lines: &[usize]) -> String {
    let mut msg = format!("{}: {} invalid record(s)", path.display(), report.violation_count());
    for e in &report.out_of_range {
        let _ = write!(
            msg,
            "\n{}:{}: score {} outside 1..=5 ({} / {} / {})",
            path.display(),
            lines[e.position],
            e.score,
            e.image_id,
            e.dimension,
            e.annotator_id
        );
    }
    for d in &report.duplicates {
        let at: Vec<String> = d.positions.iter().map(|p| lines[*p].to_string()).collect();
        let _ = write!(
            msg,
            "\n{}:{}: duplicate rating ({} / {} / {})",
            path.display(),
            at.join(","),
            d.image_id,
            d.dimension,
            d.annotator_id
        );
    }
    msg
}

fn clean_summary(
    records: &[AnnotationRecord],
    mos: &[MosRecord],
    raters: &[RaterReport],
    audits: Option<&[BatchAudit]>,
) -> String {
    let replaced: usize = mos.iter().map(|m| m.outlier_count).sum();
    let flagged = raters.iter().filter(|r| r.flagged && r.dimension.is_none()).count();
    let total_raters = raters.iter().filter(|r| r.dimension.is_none()).count();
    let mut out = format!(
        "{} ratings -> {} MOS records, {} outlier rating(s) replaced\n{} of {} rater(s) flagged\n",
        records.len(),
        mos.len(),
        replaced,
        flagged,
        total_raters
    );
    if let Some(audits) = audits {
        let accepted = audits.iter().filter(|a| a.accepted).count();
        let _ = writeln!(out, "{accepted} of {} batch(es) accepted", audits.len());
    }
    out
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    /// Offline logits file (image_id, dimension, logits).
    #[arg(long, conflicts_with = "endpoint", required_unless_present = "endpoint")]
    pub logits: Option<PathBuf>,
    /// Remote scoring endpoint.
    #[arg(long, requires = "images")]
    pub endpoint: Option<String>,
    /// Images to score: lines of {image_id, image_ref?, image_path?}.
    /// Defaults to every image in the logits file.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Comma-separated subset of dimensions [default: all available]
    #[arg(long, value_delimiter = ',')]
    pub dimensions: Vec<Dimension>,
    #[arg(long, default_value = "type4")]
    pub prompt_type: PromptType,
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
    #[arg(long, default_value_t = 2)]
    pub max_retries: u32,
    #[arg(long)]
    pub out: PathBuf,
}

/// One line of an image list for `score`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSpec {
    pub image_id: String,
    #[serde(default)]
    pub image_ref: Option<String>,
    /// Local file sent inline, base64-encoded.
    #[serde(default)]
    pub image_path: Option<PathBuf>,
}

impl ImageSpec {
    fn to_ref(&self) -> CliResult<ImageRef> {
        match (&self.image_path, &self.image_ref) {
            (Some(path), _) => {
                let bytes = std::fs::read(path)
                    .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
                Ok(ImageRef::inline(self.image_id.clone(), &bytes))
            }
            (None, Some(r)) => Ok(ImageRef::reference(self.image_id.clone(), r.clone())),
            (None, None) => Ok(ImageRef::id(self.image_id.clone())),
        }
    }
}

pub fn score(args: &ScoreArgs) -> CliResult<String> {
    let requested: Option<Vec<Dimension>> = (!args.dimensions.is_empty()).then(|| {
        Dimension::ALL.into_iter().filter(|d| args.dimensions.contains(d)).collect()
    });
    let images = match &args.images {
        Some(path) => Some(read_records::<ImageSpec>(path)?),
        None => None,
    };

    let records = if let Some(path) = &args.logits {
        let source = OfflineLogits::new(read_records::<LogitRecord>(path)?);
        let jobs: Vec<(ImageRef, Vec<Dimension>)> = match &images {
            Some(list) => list
                .iter()
                .map(|s| Ok((s.to_ref()?, requested.clone().unwrap_or(Dimension::ALL.to_vec()))))
                .collect::<CliResult<_>>()?,
            None => source
                .image_ids()
                .into_iter()
                .map(|id| {
                    let dims = requested.clone().unwrap_or_else(|| source.dimensions_for(&id));
                    (ImageRef::id(id), dims)
                })
                .collect(),
        };
        run_scorer(Scorer::new(source, args.prompt_type), jobs)?
    } else {
        let config = BackendConfig {
            mode: BackendMode::RemoteService,
            endpoint: args.endpoint.clone(),
            timeout: Duration::from_millis(args.timeout_ms),
            max_retries: args.max_retries,
            prompt_type: args.prompt_type,
        };
        let dims = requested.unwrap_or(Dimension::ALL.to_vec());
        let jobs = images
            .unwrap_or_default()
            .iter()
            .map(|s| Ok((s.to_ref()?, dims.clone())))
            .collect::<CliResult<_>>()?;
        run_scorer(Scorer::new(RemoteBackend::new(&config)?, args.prompt_type), jobs)?
    };

    write_records(&args.out, &records)?;
    let images: std::collections::BTreeSet<&str> =
        records.iter().map(|r| r.image_id.as_str()).collect();
    Ok(format!(
        "scored {} image(s), {} record(s) with prompt {}\n",
        images.len(),
        records.len(),
        args.prompt_type
    ))
}

fn run_scorer<S: LogitSource>(
    scorer: Scorer<S>,
    mut jobs: Vec<(ImageRef, Vec<Dimension>)>,
) -> CliResult<Vec<ScoreRecord>> {
    jobs.sort_by(|a, b| a.0.image_id.cmp(&b.0.image_id));
    let mut out = Vec::new();
    for (image, dims) in &jobs {
        for &dimension in dims {
            out.push(ScoreRecord {
                image_id: image.image_id.clone(),
                dimension,
                score: scorer.score_dimension(image, dimension)?,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Preference pairs with per-dimension score vectors.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Weights file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "soft_half")]
    pub tie_mode: TieMode,
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub grad_tol: f64,
    /// Starting weights, comma-separated in layout,harmony,lighting,distortion order.
    #[arg(long, value_delimiter = ',', default_value = "0,0,0,0")]
    pub init: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional per-iteration loss trace, one number per line.
    #[arg(long)]
    pub history_out: Option<PathBuf>,
}

impl FitArgs {
    pub fn config(&self) -> CliResult<FitConfig> {
        let init: [f64; 4] = self.init.as_slice().try_into().map_err(|_| {
            CliError::input(format!("--init needs 4 comma-separated values, got {}", self.init.len()))
        })?;
        Ok(FitConfig {
            init,
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            l2: self.l2,
            tie_mode: self.tie_mode,
            rng_seed: self.seed,
            ..FitConfig::default()
        })
    }
}

pub fn read_pairs(path: &Path) -> CliResult<Vec<PreferencePair>> {
    let lined = read_lines::<PreferencePair>(path)?;
    for l in &lined {
        l.value
            .validate()
            .map_err(|e| CliError::input(format!("{}:{}: {e}", path.display(), l.line)))?;
    }
    Ok(lined.into_iter().map(|l| l.value).collect())
}

pub fn fit(args: &FitArgs) -> CliResult<String> {
    let pairs = read_pairs(&args.pairs)?;
    let config = args.config()?;
    let result = fit_weights(&pairs, &config)?;
    write_json(&args.out, &WeightsFile::from_fit(&result, config.tie_mode))?;
    if let Some(path) = &args.history_out {
        let text: String = result.loss_history.iter().map(|l| format!("{l}\n")).collect();
        crate::files::write_atomic(path, text.as_bytes())?;
    }
    Ok(format!(
        "fitted {} pair(s): loss {:.6}, {} iteration(s), converged {}, tie mode {}\nweights: {}\n",
        result.pair_count_used,
        result.final_loss,
        result.iterations,
        result.converged,
        config.tie_mode,
        describe(&result.weights)
    ))
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Predicted scores (image_id, dimension, score).
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub mos: PathBuf,
    /// Preference pairs for threshold-optimised rank accuracy.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Fitted weights to include in the rank-accuracy comparison.
    #[arg(long, requires = "pairs")]
    pub weights: Option<PathBuf>,
    /// Row label for the correlation table.
    #[arg(long, default_value = "model")]
    pub method: String,
    #[arg(long, default_value_t = 0.0)]
    pub grid_lo: f64,
    #[arg(long, default_value_t = 4.0)]
    pub grid_hi: f64,
    #[arg(long, default_value_t = 0.005)]
    pub grid_step: f64,
    /// Machine-readable report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub correlation: BenchmarkReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rank: Vec<RankEvalResult>,
}

pub fn eval(args: &EvalArgs) -> CliResult<String> {
    let predictions = read_records::<ScoreRecord>(&args.pred)?;
    let mos = read_records::<MosRecord>(&args.mos)?;
    let correlation = benchmark_report(&args.method, &predictions, &mos)?;

    let mut rank = Vec::new();
    if let Some(path) = &args.pairs {
        let pairs = read_pairs(path)?;
        let grid = ThresholdGrid {
            lo: args.grid_lo,
            hi: args.grid_hi,
            step: args.grid_step,
        };
        let mut methods: Vec<(String, FusionWeights)> = Dimension::ALL
            .iter()
            .map(|d| (d.as_str().to_string(), FusionWeights::single(*d)))
            .collect();
        methods.push(("equal".into(), FusionWeights::equal()));
        if let Some(w) = &args.weights {
            methods.push(("fitted".into(), read_json::<WeightsFile>(w)?.weights));
        }
        for (name, weights) in methods {
            let scores = fused_scores(&pairs, &weights)?;
            rank.push(optimize_threshold(&name, &pairs, &scores, grid)?);
        }
    }

    let mut text = render_table(std::slice::from_ref(&correlation));
    if !rank.is_empty() {
        text.push('\n');
        text.push_str(&render_rank_table(&rank));
    }
    let report = EvalReport { correlation, rank };
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(text)
}

#[derive(Debug, Clone, Args)]
pub struct BonArgs {
    /// Candidate lines (prompt_id, candidate_id, scores).
    #[arg(long)]
    pub candidates: PathBuf,
    /// Weights file [default: equal weighting]
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Ranking per prompt.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn bon(args: &BonArgs) -> CliResult<String> {
    let lines = read_records::<CandidateLine>(&args.candidates)?;
    let weights = match &args.weights {
        Some(path) => read_json::<WeightsFile>(path)?.weights,
        None => FusionWeights::equal(),
    };
    let mut outputs = Vec::new();
    let mut text = String::new();
    for set in group_candidates(lines)? {
        let ranked = best_of_n(&set, &weights)?;
        let _ = writeln!(
            text,
            "{}: best {} ({:.4}) of {}",
            set.prompt_id,
            ranked[0].candidate_id,
            ranked[0].fused,
            ranked.len()
        );
        outputs.push(BonOutput::new(&set.prompt_id, ranked));
    }
    write_records(&args.out, &outputs)?;
    Ok(text)
}
