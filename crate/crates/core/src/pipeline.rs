//! End-to-end orchestration: config, staged execution and artifacts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, Dataset, EncodingMap, KindOverrides, MissingPolicy};
use crate::error::{Error, Result};
use crate::lime::{Explanation, LimeConfig};
use crate::metrics::{fold_spec, Averaging, MetricsRecord, Phase, TABLE_HEADER};
use crate::models::{train, Algorithm, ModelSpec, TrainedModel};
use crate::preprocess::{prepare_folds, PrepOptions, Prepared};
use crate::scalar::Scalar;
use crate::seed::Seed;
use crate::selection::{
    aggregate_importance, best_model, evaluate_all, explain_best, retrain_compare, select_top_k, CompareOptions,
    ComparisonReport, FeatureRanking,
};
use crate::synth::SynthSpec;

pub const CONFIG_VERSION: u32 = 1;
pub const REPORT_VERSION: u32 = 1;
/// Target column name used when dumping generated data.
pub const SYNTH_TARGET: &str = "behavior";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSource {
    Csv { path: PathBuf, target: String },
    Synth(SynthSpec),
}

impl Default for InputSource {
    fn default() -> Self {
        InputSource::Synth(SynthSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub input: InputSource,
    pub missing: MissingPolicy,
    /// Forces the kind of named columns; others are inferred.
    pub column_kinds: KindOverrides,
    pub oversample: bool,
    pub leak_safe: bool,
    pub repeats: usize,
    pub test_frac: f64,
    pub averaging: Averaging,
    pub models: Vec<Algorithm>,
    pub hyperparameters: BTreeMap<Algorithm, BTreeMap<String, f64>>,
    pub lime: LimeConfig,
    pub k_features: usize,
    pub explain_instances: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let prep = PrepOptions::default();
        PipelineConfig {
            version: CONFIG_VERSION,
            input: InputSource::default(),
            missing: MissingPolicy::default(),
            column_kinds: KindOverrides::new(),
            oversample: prep.oversample,
            leak_safe: prep.leak_safe,
            repeats: prep.repeats,
            test_frac: prep.test_frac,
            averaging: Averaging::default(),
            models: Algorithm::ALL.to_vec(),
            hyperparameters: BTreeMap::new(),
            lime: LimeConfig::default(),
            k_features: 10,
            explain_instances: 100,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("config: {e}")]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Read {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    pub fn prep_options(&self) -> PrepOptions {
        PrepOptions {
            oversample: self.oversample,
            leak_safe: self.leak_safe,
            repeats: self.repeats,
            test_frac: self.test_frac,
        }
    }

    /// Model specs in configured order; each draws from the master seed's
    /// `model:<code>` stream.
    pub fn specs(&self) -> Result<Vec<ModelSpec>> {
        self.models
            .iter()
            .map(|&a| {
                let hp = self.hyperparameters.get(&a).cloned().unwrap_or_default();
                let seed = Seed(self.seed).derive(&format!("model:{}", a.code()), 0);
                ModelSpec::new(a, hp, seed.0)
            })
            .collect()
    }

    pub fn compare_options(&self) -> CompareOptions {
        CompareOptions {
            prep: self.prep_options(),
            lime: self.lime.clone(),
            k_features: self.k_features,
            explain_instances: self.explain_instances,
            averaging: self.averaging,
            seed: self.seed,
        }
    }

    /// Every problem visible without reading the input; `n_features` adds
    /// the width-dependent checks once it is known.
    pub fn violations(&self, n_features: Option<usize>) -> Vec<String> {
        let mut v = Vec::new();
        if self.version != CONFIG_VERSION {
            v.push(format!("version = {} is not supported (expected {CONFIG_VERSION})", self.version));
        }
        if self.repeats == 0 {
            v.push("repeats must be at least 1".into());
        }
        if !(self.test_frac > 0.0 && self.test_frac < 1.0) {
            v.push(format!("test_frac = {} must lie in (0, 1)", self.test_frac));
        }
        if self.models.is_empty() {
            v.push("models must list at least one algorithm".into());
        }
        let mut seen = BTreeSet::new();
        for a in &self.models {
            if !seen.insert(a) {
                v.push(format!("models lists {a} twice"));
            }
        }
        for (a, hp) in &self.hyperparameters {
            if !seen.contains(a) {
                v.push(format!("hyperparameters given for {a}, which is not in models"));
            }
            if let Err(Error::Config(p)) = ModelSpec::default_for(*a, 0).resolve_with(hp) {
                v.extend(p);
            }
        }
        if self.k_features == 0 {
            v.push("k_features must be at least 1".into());
        }
        if self.explain_instances == 0 {
            v.push("explain_instances must be at least 1".into());
        }
        if let InputSource::Synth(s) = &self.input {
            v.extend(s.violations());
        }
        let d = n_features.or(match &self.input {
            InputSource::Synth(s) => Some(s.n_features),
            InputSource::Csv { .. } => None,
        });
        match d {
            Some(d) => v.extend(self.lime.violations(d)),
            // d-dependent checks are repeated once the header is read
            None => v.extend(self.lime.violations(1).into_iter().filter(|m| !m.contains("n_samples"))),
        }
        v
    }

    pub fn validate(&self, n_features: Option<usize>) -> Result<()> {
        let v = self.violations(n_features);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// Loaded input plus everything derived from the config.
#[derive(Debug, Clone)]
pub struct Context<T> {
    pub config: PipelineConfig,
    pub data: Dataset<T>,
    pub target: String,
    /// Category codes of CSV input.
    pub encoding: Option<EncodingMap>,
    /// Informative columns of generated data.
    pub informative: Option<Vec<usize>>,
    pub specs: Vec<ModelSpec>,
}

impl<T: Scalar> Context<T> {
    pub fn load(config: PipelineConfig) -> Result<Self> {
        config.validate(None)?;
        let specs = config.specs()?;
        let (data, target, encoding, informative) = match &config.input {
            InputSource::Csv { path, target } => {
                let (data, map) = load_dataset(path, target, config.missing, &config.column_kinds)?;
                (data, target.clone(), Some(map), None)
            }
            InputSource::Synth(s) => {
                let g = s.generate(Seed(config.seed).derive("synth", 0))?;
                (g.data, SYNTH_TARGET.to_owned(), None, Some(g.informative))
            }
        };
        config.validate(Some(data.n_features()))?;
        Ok(Context {
            config,
            data,
            target,
            encoding,
            informative,
            specs,
        })
    }

    pub fn prepare(&self) -> Result<Prepared<T>> {
        prepare_folds(&self.data, &self.config.prep_options(), Seed(self.config.seed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Prep,
    Train,
    Explain,
    Select,
    Compare,
    Run,
}

/// Files to publish, staged in memory until every stage has succeeded.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_owned(), bytes.into()));
    }

    fn add_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Writes every file into `dir` through a temporary sibling and a rename.
    pub fn publish(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::Write {
            path: dir.to_path_buf(),
            source: e,
        })?;
        let mut staged = Vec::new();
        for (name, bytes) in &self.files {
            let tmp = dir.join(format!(".{name}.tmp"));
            fs::write(&tmp, bytes).map_err(|e| Error::Write {
                path: tmp.clone(),
                source: e,
            })?;
            staged.push((tmp, dir.join(name)));
        }
        for (tmp, dst) in staged {
            fs::rename(&tmp, &dst).map_err(|e| Error::Write { path: dst, source: e })?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct DatasetSummary<'a> {
    rows: usize,
    features: usize,
    target: &'a str,
    classes: &'a [String],
    class_counts: Vec<usize>,
}

#[derive(Serialize)]
#[serde(bound = "T: Scalar")]
struct Report<'a, T> {
    format_version: u32,
    config: &'a PipelineConfig,
    dataset: DatasetSummary<'a>,
    #[serde(flatten)]
    comparison: &'a ComparisonReport<T>,
}

fn dataset_summary<'a, T: Scalar>(ctx: &'a Context<T>) -> DatasetSummary<'a> {
    DatasetSummary {
        rows: ctx.data.n_rows(),
        features: ctx.data.n_features(),
        target: &ctx.target,
        classes: &ctx.data.classes,
        class_counts: ctx.data.class_counts(),
    }
}

pub fn report_json<T: Scalar>(ctx: &Context<T>, report: &ComparisonReport<T>) -> Result<String> {
    let doc = Report {
        format_version: REPORT_VERSION,
        config: &ctx.config,
        dataset: dataset_summary(ctx),
        comparison: report,
    };
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

pub fn metrics_table<T: Scalar>(records: &[&MetricsRecord<T>]) -> String {
    let mut s = format!("| {} |\n", TABLE_HEADER.join(" | "));
    s.push_str(&format!("|{}\n", " --- |".repeat(TABLE_HEADER.len())));
    for r in records {
        s.push_str(&r.markdown_row());
        s.push('\n');
    }
    s
}

pub fn report_markdown<T: Scalar>(report: &ComparisonReport<T>) -> String {
    let before: Vec<_> = report.models.iter().map(|m| &m.before).collect();
    let after: Vec<_> = report.models.iter().map(|m| &m.after).collect();
    let mut s = String::from("# Model comparison\n\n");
    let _ = writeln!(
        s,
        "Best model before selection: **{}**. Explained instances: {}.\n",
        report.best_model, report.explained_instances
    );
    let _ = writeln!(
        s,
        "Selected features ({}): {}\n",
        report.selected_features.len(),
        report.selected_features.join(", ")
    );
    s.push_str("## Before feature selection\n\n");
    s.push_str(&metrics_table(&before));
    s.push_str("\n## After feature selection\n\n");
    s.push_str(&metrics_table(&after));
    s.push_str(
        "\nScores are means over the stratified splits. EV, MSE, RMSE, R² and D² Score are label-code regression metrics: they treat class codes as numbers.\n",
    );
    s
}

#[derive(Serialize)]
struct RankingEntry<'a, T: Scalar> {
    rank: usize,
    feature: &'a str,
    index: usize,
    score: T,
    positive_share: T,
    selected: bool,
}

pub fn ranking_json<T: Scalar>(ranking: &FeatureRanking<T>, selected: &[String]) -> Result<String> {
    let entries: Vec<_> = ranking
        .by_rank()
        .into_iter()
        .map(|j| {
            let f = &ranking.features[j];
            RankingEntry {
                rank: f.rank,
                feature: &f.name,
                index: f.index,
                score: f.score,
                positive_share: f.positive_share,
                selected: selected.contains(&f.name),
            }
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&entries)?;
    s.push('\n');
    Ok(s)
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Horizontal bar chart of importance scores, best rank on top.
pub fn render_chart<T: Scalar>(ranking: &FeatureRanking<T>) -> String {
    const LABEL: f64 = 220.0;
    const BAR: f64 = 360.0;
    const ROW: f64 = 24.0;
    const TOP: f64 = 40.0;
    let order = ranking.by_rank();
    let max = ranking.features.iter().map(|f| f.score.as_f64()).fold(0.0, f64::max);
    let width = LABEL + BAR + 100.0;
    let height = TOP + ROW * order.len() as f64 + 10.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="monospace" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="10" y="22" font-size="14">Feature importance (mean |weight|)</text>"#
    );
    for (row, &j) in order.iter().enumerate() {
        let f = &ranking.features[j];
        let score = f.score.as_f64();
        let len = if max > 0.0 { score / max * BAR } else { 0.0 };
        let y = TOP + ROW * row as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LABEL - 8.0,
            y + 14.0,
            xml_escape(&f.name)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{LABEL}" y="{}" width="{len:.3}" height="{}" fill="#4a7ab0"/>"##,
            y + 3.0,
            ROW - 6.0
        );
        let _ = writeln!(s, r#"<text x="{:.3}" y="{}">{score:.4}</text>"#, LABEL + len + 6.0, y + 14.0);
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_chart<T: Scalar>(ranking: &FeatureRanking<T>, path: &Path) -> Result<()> {
    if ranking.is_empty() {
        return Err(Error::invalid("cannot chart an empty ranking"));
    }
    fs::write(path, render_chart(ranking)).map_err(|e| Error::Write {
        path: path.to_path_buf(),
        source: e,
    })
}

fn explanations_json<T: Scalar>(data: &Dataset<T>, explanations: &[Explanation<T>]) -> Result<String> {
    let names = data.feature_names();
    let docs: Vec<_> = explanations.iter().map(|e| e.to_json(&names, &data.classes)).collect();
    let mut s = serde_json::to_string_pretty(&docs)?;
    s.push('\n');
    Ok(s)
}

fn fold0_model<T: Scalar>(spec: &ModelSpec, data: &Dataset<T>, prepared: &Prepared<T>) -> Result<TrainedModel<T>> {
    let fold = &prepared.folds[0];
    train(&fold_spec(spec, 0), &fold.x_train, &fold.y_train, data.n_classes())
}

#[derive(Serialize)]
struct SplitsDoc<'a> {
    leak_safe: bool,
    splits: &'a [crate::preprocess::SplitIndices],
}

/// Runs the pipeline up to and including `stage` and returns the artifacts
/// it produces. Nothing is written here.
pub fn run_stage<T: Scalar>(ctx: &Context<T>, stage: Stage) -> Result<(Artifacts, Option<ComparisonReport<T>>)> {
    let mut out = Artifacts::default();
    if stage == Stage::Synth {
        if !matches!(ctx.config.input, InputSource::Synth(_)) {
            return Err(Error::Config(vec!["synth needs a synth input in the config".into()]));
        }
        let mut bytes = Vec::new();
        ctx.data
            .write_csv_to(&mut bytes, &ctx.target)
            .map_err(|e| Error::invalid(format!("csv encoding: {e}")))?;
        out.add("data.csv", bytes);
        return Ok((out, None));
    }
    if matches!(stage, Stage::Compare | Stage::Run) {
        let report = retrain_compare(&ctx.specs, &ctx.data, &ctx.config.compare_options())?;
        out.add("report.json", report_json(ctx, &report)?);
        out.add("report.md", report_markdown(&report));
        if stage == Stage::Run {
            out.add("ranking.json", ranking_json(&report.ranking, &report.selected_features)?);
            out.add("importance.svg", render_chart(&report.ranking));
            out.add("explanations.json", explanations_json(&ctx.data, &report.explanations)?);
        }
        return Ok((out, Some(report)));
    }

    let prepared = ctx.prepare()?;
    if stage == Stage::Prep {
        if let Some(map) = &ctx.encoding {
            out.add_json("encoding.json", map)?;
        }
        if let Some((table, params)) = &prepared.transformed {
            out.add_json("scaler.json", &params.to_json(&table.feature_names()))?;
        }
        out.add_json(
            "splits.json",
            &SplitsDoc {
                leak_safe: ctx.config.leak_safe,
                splits: &prepared.splits,
            },
        )?;
        return Ok((out, None));
    }

    let opts = ctx.config.compare_options();
    let before = evaluate_all(&ctx.specs, &prepared, ctx.data.n_classes(), Phase::Before, opts.averaging)?;
    let best = best_model(&before).expect("at least one model is configured");
    out.add_json("metrics_before.json", &before)?;
    out.add("metrics_before.md", metrics_table(&before.iter().collect::<Vec<_>>()));
    out.add("model.json", fold0_model(&ctx.specs[best], &ctx.data, &prepared)?.to_json()?);
    if stage == Stage::Train {
        return Ok((out, None));
    }

    let explanations = explain_best(&ctx.specs[best], &ctx.data, &prepared, &opts)?;
    out.add("explanations.json", explanations_json(&ctx.data, &explanations)?);
    if stage == Stage::Explain {
        return Ok((out, None));
    }

    let names = ctx.data.feature_names();
    let ranking = aggregate_importance(&explanations, &names)?;
    let selected: Vec<String> = select_top_k(&ranking, opts.k_features)
        .into_iter()
        .map(|j| names[j].clone())
        .collect();
    out.add("ranking.json", ranking_json(&ranking, &selected)?);
    out.add("importance.svg", render_chart(&ranking));
    Ok((out, None))
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global
/// pool when unset.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Full pipeline: loads, runs every stage and writes all artifacts to `out`.
pub fn run_pipeline<T: Scalar>(config: PipelineConfig, out: &Path) -> Result<ComparisonReport<T>> {
    let ctx = Context::<T>::load(config)?;
    let (artifacts, report) = run_stage(&ctx, Stage::Run)?;
    artifacts.publish(out)?;
    Ok(report.expect("the run stage produces a report"))
}
