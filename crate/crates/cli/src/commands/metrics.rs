use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use attnblend_core::io::{atomic_write, load_array, load_scores, ScoreTable};
use attnblend_core::metrics::{
    score_table, BosmNumerator, GrayImage, MetricWeights, NormalizationSpec, ScoreColumn, ScoredRecord,
    TextureMetrics, DEFAULT_HFS_CUTOFF,
};
use attnblend_core::metrics::composite::DEFAULT_EPSILON;
use clap::{Args, ValueEnum};

use crate::config::{parse_weights, pick, pick_switch, read_text, FileConfig};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormScope {
    /// One min/max per column over every score file
    Batch,
    /// Min/max per column within each file
    File,
    /// Bounds read from --norm-bounds
    Explicit,
}

impl std::str::FromStr for NormScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <NormScope as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Score CSVs (sample_id,clip_o,clip_r,clip_b,clip_s,lpips_o)
    #[arg(long, num_args = 1..)]
    pub scores: Vec<PathBuf>,
    /// Grayscale images as 2-D arrays with pixels in [0, 1]
    #[arg(long, num_args = 1..)]
    pub images: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub norm_scope: Option<NormScope>,
    /// JSON object mapping column names (clip_o, clip_r, clip_b, clip_s,
    /// fidelity) to [min, max]
    #[arg(long)]
    pub norm_bounds: Option<PathBuf>,
    /// wR,wB,wS,wL
    #[arg(long, value_parser = parse_weights)]
    pub weights: Option<[f64; 4]>,
    /// Use wR + wB + wS as the BOSM numerator
    #[arg(long)]
    pub three_term_numerator: bool,
    #[arg(long)]
    pub hfs_cutoff: Option<f64>,
    /// Per-sample BOM / BOSM output
    #[arg(long)]
    pub out_scores: Option<PathBuf>,
    /// Per-image LV / GC / HFS output
    #[arg(long)]
    pub out_texture: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn explicit_spec(path: &Path, epsilon: f64, needs_style: bool) -> Result<NormalizationSpec, CliError> {
    let text = read_text(path)?;
    let bounds: BTreeMap<String, [f64; 2]> = serde_json::from_str(&text)
        .map_err(|e| CliError::validation("NORM_BOUNDS_PARSE", format!("{}: {e}", path.display())))?;
    let mut spec = NormalizationSpec::new(epsilon)?;
    for (name, [min, max]) in &bounds {
        let col = ScoreColumn::from_name(name).ok_or_else(|| {
            CliError::validation("NORM_BOUNDS_PARSE", format!("unknown column {name:?} in {}", path.display()))
        })?;
        spec.set_range(col, *min, *max)?;
    }
    for col in ScoreColumn::ALL {
        if col == ScoreColumn::ClipS && !needs_style {
            continue;
        }
        if spec.range(col).is_none() {
            return Err(CliError::validation(
                "MISSING_BOUNDS",
                format!("{} has no bounds for column {}", path.display(), col.name()),
            ));
        }
    }
    Ok(spec)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::validation("CSV", e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::validation("CSV", e.to_string()))
}

fn print_summary(title: &str, columns: &[(&str, Vec<f64>)]) {
    println!("{title}");
    println!("{:<10} {:>8} {:>20}", "column", "n", "mean");
    for (name, values) in columns {
        let mean = if values.is_empty() {
            f64::NAN
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        println!("{:<10} {:>8} {:>20.10}", name, values.len(), mean);
    }
}

pub fn run(a: MetricsArgs) -> Result<(), CliError> {
    if a.scores.is_empty() && a.images.is_empty() {
        return Err(CliError::validation("NO_INPUT", "pass --scores and/or --images"));
    }
    let file = FileConfig::load(a.config.as_deref())?;
    let scope = match (a.norm_scope, &file.norm_scope) {
        (Some(s), _) => s,
        (None, Some(s)) => s
            .parse()
            .map_err(|e| CliError::validation("CONFIG_PARSE", format!("norm_scope: {e}")))?,
        (None, None) => NormScope::Batch,
    };
    let epsilon = file.epsilon.unwrap_or(DEFAULT_EPSILON);
    let [w_r, w_b, w_s, w_l] = pick(a.weights, file.weights, [1.0; 4]);
    let weights = MetricWeights::new(w_r, w_b, w_s, w_l)?;
    let numerator = if pick_switch(a.three_term_numerator, file.three_term_numerator) {
        BosmNumerator::WithoutLpips
    } else {
        BosmNumerator::AllFour
    };
    let cutoff = pick(a.hfs_cutoff, file.hfs_cutoff, DEFAULT_HFS_CUTOFF);

    if !a.scores.is_empty() {
        let tables = a
            .scores
            .iter()
            .map(|p| load_scores(p))
            .collect::<Result<Vec<ScoreTable>, _>>()?;
        let needs_style = tables.iter().flat_map(|t| &t.records).any(|r| r.clip_s.is_some());
        let batch = match scope {
            NormScope::Batch => Some(NormalizationSpec::from_tables(&tables, epsilon)?),
            NormScope::Explicit => {
                let path = a.norm_bounds.as_deref().ok_or_else(|| {
                    CliError::validation("MISSING_BOUNDS", "--norm-scope explicit needs --norm-bounds")
                })?;
                Some(explicit_spec(path, epsilon, needs_style)?)
            }
            NormScope::File => None,
        };

        let mut scored: Vec<(&Path, ScoredRecord)> = Vec::new();
        for (path, table) in a.scores.iter().zip(&tables) {
            let spec = match &batch {
                Some(s) => s.clone(),
                None => NormalizationSpec::from_tables([table], epsilon)?,
            };
            scored.extend(
                score_table(table, &spec, &weights, numerator)?
                    .into_iter()
                    .map(|r| (path.as_path(), r)),
            );
        }

        if let Some(out) = &a.out_scores {
            let rows: Vec<Vec<String>> = scored
                .iter()
                .map(|(path, r)| {
                    let n = &r.normalized;
                    vec![
                        n.sample_id.clone(),
                        path.display().to_string(),
                        n.clip_o.to_string(),
                        n.clip_r.to_string(),
                        n.clip_b.to_string(),
                        fmt_opt(n.clip_s),
                        n.fidelity.to_string(),
                        r.bom.to_string(),
                        fmt_opt(r.bosm),
                    ]
                })
                .collect();
            let header = [
                "sample_id", "source", "clip_o", "clip_r", "clip_b", "clip_s", "fidelity", "bom", "bosm",
            ];
            atomic_write(out, &csv_bytes(&header, &rows)?)?;
        }
        let col = |f: &dyn Fn(&ScoredRecord) -> Option<f64>| scored.iter().filter_map(|(_, r)| f(r)).collect();
        print_summary(
            "scores",
            &[
                ("clip_o", col(&|r| Some(r.normalized.clip_o))),
                ("clip_r", col(&|r| Some(r.normalized.clip_r))),
                ("clip_b", col(&|r| Some(r.normalized.clip_b))),
                ("clip_s", col(&|r| r.normalized.clip_s)),
                ("fidelity", col(&|r| Some(r.normalized.fidelity))),
                ("bom", col(&|r| Some(r.bom))),
                ("bosm", col(&|r| r.bosm)),
            ],
        );
    }

    if !a.images.is_empty() {
        let mut rows = Vec::new();
        let mut cols: [Vec<f64>; 3] = Default::default();
        for path in &a.images {
            let pixels = load_array(path)?.to_matrix().map_err(|e| {
                CliError::validation("SHAPE_MISMATCH", format!("{}: {e}", path.display()))
            })?;
            let img = GrayImage::new(pixels)
                .map_err(|e| CliError::validation("INVALID_IMAGE", format!("{}: {e}", path.display())))?;
            let t = TextureMetrics::compute(&img, cutoff)
                .map_err(|e| CliError::from(e).with_context(path))?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            rows.push(vec![id, t.lv.to_string(), t.gc.to_string(), t.hfs.to_string()]);
            cols[0].push(t.lv);
            cols[1].push(t.gc);
            cols[2].push(t.hfs);
        }
        if let Some(out) = &a.out_texture {
            atomic_write(out, &csv_bytes(&["sample_id", "lv", "gc", "hfs"], &rows)?)?;
        }
        let [lv, gc, hfs] = cols;
        print_summary("texture", &[("lv", lv), ("gc", gc), ("hfs", hfs)]);
    }
    Ok(())
}

impl CliError {
    fn with_context(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}
