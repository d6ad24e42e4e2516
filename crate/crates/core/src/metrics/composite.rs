//! Min-max normalization and the BOM / BOSM weighted harmonic means.

use crate::io::{ScoreRecord, ScoreTable};

use super::MetricsError;

/// A normalizable score column. `Fidelity` is `1 − lpips_o`, so larger is
/// better for every column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreColumn {
    ClipO,
    ClipR,
    ClipB,
    ClipS,
    Fidelity,
}

impl ScoreColumn {
    pub const ALL: [ScoreColumn; 5] = [
        ScoreColumn::ClipO,
        ScoreColumn::ClipR,
        ScoreColumn::ClipB,
        ScoreColumn::ClipS,
        ScoreColumn::Fidelity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreColumn::ClipO => "clip_o",
            ScoreColumn::ClipR => "clip_r",
            ScoreColumn::ClipB => "clip_b",
            ScoreColumn::ClipS => "clip_s",
            ScoreColumn::Fidelity => "fidelity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn raw(self, r: &ScoreRecord) -> Option<f64> {
        match self {
            ScoreColumn::ClipO => Some(r.clip_o),
            ScoreColumn::ClipR => Some(r.clip_r),
            ScoreColumn::ClipB => Some(r.clip_b),
            ScoreColumn::ClipS => r.clip_s,
            ScoreColumn::Fidelity => Some(1.0 - r.lpips_o),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnRange {
    pub min: f64,
    pub max: f64,
}

/// Floor `epsilon` plus the `(min, max)` of each column.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationSpec {
    pub epsilon: f64,
    ranges: [Option<ColumnRange>; 5],
}

pub const DEFAULT_EPSILON: f64 = 0.1;

impl NormalizationSpec {
    pub fn new(epsilon: f64) -> Result<Self, MetricsError> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(MetricsError::InvalidNormalization(format!(
                "epsilon must lie in [0, 1), got {epsilon}"
            )));
        }
        Ok(NormalizationSpec {
            epsilon,
            ranges: [None; 5],
        })
    }

    /// Ranges taken from the tables themselves (one batch across all of them).
    pub fn from_tables<'a>(
        tables: impl IntoIterator<Item = &'a ScoreTable>,
        epsilon: f64,
    ) -> Result<Self, MetricsError> {
        let mut spec = Self::new(epsilon)?;
        let records: Vec<&ScoreRecord> = tables.into_iter().flat_map(|t| &t.records).collect();
        for col in ScoreColumn::ALL {
            let mut values = records.iter().filter_map(|r| col.raw(r)).peekable();
            if values.peek().is_none() {
                continue;
            }
            let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
            spec.set_range(col, min, max)?;
        }
        Ok(spec)
    }

    pub fn set_range(&mut self, col: ScoreColumn, min: f64, max: f64) -> Result<(), MetricsError> {
        if !(min.is_finite() && max.is_finite()) {
            return Err(MetricsError::InvalidNormalization(format!(
                "{}: non-finite range",
                col.name()
            )));
        }
        if max <= min {
            return Err(MetricsError::DegenerateRange(col.name()));
        }
        self.ranges[col as usize] = Some(ColumnRange { min, max });
        Ok(())
    }

    pub fn range(&self, col: ScoreColumn) -> Option<ColumnRange> {
        self.ranges[col as usize]
    }
}

/// `ε + (1 − ε)(s − min)/(max − min)`.
pub fn normalize_value(s: f64, range: ColumnRange, epsilon: f64) -> f64 {
    if s == range.max {
        return 1.0;
    }
    epsilon + (1.0 - epsilon) * (s - range.min) / (range.max - range.min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRecord {
    pub sample_id: String,
    pub clip_o: f64,
    pub clip_r: f64,
    pub clip_b: f64,
    pub clip_s: Option<f64>,
    pub fidelity: f64,
}

pub fn normalize_scores(table: &ScoreTable, spec: &NormalizationSpec) -> Result<Vec<NormalizedRecord>, MetricsError> {
    let norm = |col: ScoreColumn, r: &ScoreRecord| -> Result<Option<f64>, MetricsError> {
        let Some(v) = col.raw(r) else {
            return Ok(None);
        };
        let range = spec.range(col).ok_or(MetricsError::DegenerateRange(col.name()))?;
        if v < range.min || v > range.max {
            return Err(MetricsError::OutsideRange {
                column: col.name(),
                value: v,
                min: range.min,
                max: range.max,
            });
        }
        Ok(Some(normalize_value(v, range, spec.epsilon)))
    };
    table
        .records
        .iter()
        .map(|r| {
            Ok(NormalizedRecord {
                sample_id: r.sample_id.clone(),
                clip_o: norm(ScoreColumn::ClipO, r)?.unwrap(),
                clip_r: norm(ScoreColumn::ClipR, r)?.unwrap(),
                clip_b: norm(ScoreColumn::ClipB, r)?.unwrap(),
                clip_s: norm(ScoreColumn::ClipS, r)?,
                fidelity: norm(ScoreColumn::Fidelity, r)?.unwrap(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricWeights {
    pub w_r: f64,
    pub w_b: f64,
    pub w_s: f64,
    pub w_l: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        MetricWeights {
            w_r: 1.0,
            w_b: 1.0,
            w_s: 1.0,
            w_l: 1.0,
        }
    }
}

impl MetricWeights {
    pub fn new(w_r: f64, w_b: f64, w_s: f64, w_l: f64) -> Result<Self, MetricsError> {
        let w = MetricWeights { w_r, w_b, w_s, w_l };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let all = [self.w_r, self.w_b, self.w_s, self.w_l];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(MetricsError::InvalidWeights(format!("weights must be nonnegative, got {all:?}")));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(MetricsError::InvalidWeights("at least one weight must be positive".into()));
        }
        Ok(())
    }
}

/// Which weights form the BOSM numerator. `AllFour` makes BOSM a proper
/// weighted harmonic mean; `WithoutLpips` drops `w_l` from the numerator
/// only, as in the originally published formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BosmNumerator {
    #[default]
    AllFour,
    WithoutLpips,
}

fn harmonic(numerator: f64, terms: &[(f64, f64)]) -> Result<f64, MetricsError> {
    let mut denom = 0.0;
    for &(w, x) in terms {
        if !(x > 0.0 && x.is_finite()) {
            return Err(MetricsError::NonPositiveInput(x));
        }
        denom += w / x;
    }
    if denom <= 0.0 {
        return Err(MetricsError::InvalidWeights("all active weights are zero".into()));
    }
    Ok(numerator / denom)
}

/// Blending Object Metric over normalized replacement, blend and perceptual
/// fidelity scores.
pub fn bom(clip_r: f64, clip_b: f64, fidelity: f64, w: &MetricWeights) -> Result<f64, MetricsError> {
    w.validate()?;
    harmonic(w.w_r + w.w_b + w.w_l, &[(w.w_r, clip_r), (w.w_b, clip_b), (w.w_l, fidelity)])
}

/// Blending Object Style Metric: BOM with the style score as a fourth term.
pub fn bosm(
    clip_r: f64,
    clip_b: f64,
    clip_s: f64,
    fidelity: f64,
    w: &MetricWeights,
    numerator: BosmNumerator,
) -> Result<f64, MetricsError> {
    w.validate()?;
    let num = match numerator {
        BosmNumerator::AllFour => w.w_r + w.w_b + w.w_s + w.w_l,
        BosmNumerator::WithoutLpips => w.w_r + w.w_b + w.w_s,
    };
    harmonic(
        num,
        &[(w.w_r, clip_r), (w.w_b, clip_b), (w.w_s, clip_s), (w.w_l, fidelity)],
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRecord {
    pub normalized: NormalizedRecord,
    pub bom: f64,
    pub bosm: Option<f64>,
}

pub fn score_table(
    table: &ScoreTable,
    spec: &NormalizationSpec,
    w: &MetricWeights,
    numerator: BosmNumerator,
) -> Result<Vec<ScoredRecord>, MetricsError> {
    normalize_scores(table, spec)?
        .into_iter()
        .map(|n| {
            let bom = bom(n.clip_r, n.clip_b, n.fidelity, w)?;
            let bosm = n
                .clip_s
                .map(|s| bosm(n.clip_r, n.clip_b, s, n.fidelity, w, numerator))
                .transpose()?;
            Ok(ScoredRecord {
                normalized: n,
                bom,
                bosm,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(id: &str, r: f64, lpips: f64) -> ScoreRecord {
        ScoreRecord {
            sample_id: id.into(),
            clip_o: 0.1 + r * 0.01,
            clip_r: r,
            clip_b: r * 0.5,
            clip_s: Some(r * 0.8),
            lpips_o: lpips,
        }
    }

    #[test]
    fn endpoints_and_midpoint() {
        let range = ColumnRange { min: 0.2, max: 0.6 };
        assert_eq!(normalize_value(0.2, range, 0.1), 0.1);
        assert_eq!(normalize_value(0.6, range, 0.1), 1.0);
        assert!((normalize_value(0.4, range, 0.1) - 0.55).abs() < 1e-15);
    }

    #[test]
    fn batch_normalization_maps_into_unit_band() {
        let table = ScoreTable {
            records: vec![record("a", 0.2, 0.5), record("b", 0.3, 0.3), record("c", 0.25, 0.4)],
        };
        let spec = NormalizationSpec::from_tables([&table], DEFAULT_EPSILON).unwrap();
        let n = normalize_scores(&table, &spec).unwrap();
        assert_eq!(n[0].clip_r, 0.1);
        assert_eq!(n[1].clip_r, 1.0);
        // lowest lpips is the highest fidelity
        assert_eq!(n[1].fidelity, 1.0);
        assert_eq!(n[0].fidelity, 0.1);
        for r in &n {
            for v in [r.clip_o, r.clip_r, r.clip_b, r.clip_s.unwrap(), r.fidelity] {
                assert!((0.1..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn constant_column_is_degenerate() {
        let mut a = record("a", 0.2, 0.5);
        let mut b = record("b", 0.3, 0.5);
        a.clip_o = 0.1;
        b.clip_o = 0.1;
        let table = ScoreTable { records: vec![a, b] };
        assert_eq!(
            NormalizationSpec::from_tables([&table], 0.1),
            Err(MetricsError::DegenerateRange("clip_o"))
        );
    }

    #[test]
    fn bom_of_equal_inputs() {
        let w = MetricWeights::new(0.3, 2.0, 0.0, 1.1).unwrap();
        assert!((bom(0.42, 0.42, 0.42, &w).unwrap() - 0.42).abs() < 1e-15);
        let ones = MetricWeights::default();
        assert_eq!(bosm(1.0, 1.0, 1.0, 1.0, &ones, BosmNumerator::AllFour).unwrap(), 1.0);
        assert!((bosm(0.7, 0.7, 0.7, 0.7, &ones, BosmNumerator::AllFour).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn bom_scalar_oracle() {
        let w = MetricWeights::default();
        // 3 / (1/0.5 + 1/0.5 + 1/0.25) = 3 / 8
        assert!((bom(0.5, 0.5, 0.25, &w).unwrap() - 0.375).abs() < 1e-15);
    }

    #[test]
    fn one_floor_score_drags_bom_down() {
        let w = MetricWeights::default();
        let v = bom(0.1, 1.0, 1.0, &w).unwrap();
        // 3 / (10 + 1 + 1)
        assert!((v - 0.25).abs() < 1e-15);
        assert!(v < 0.26);
    }

    #[test]
    fn published_bosm_numerator() {
        let w = MetricWeights::default();
        let v = bosm(0.5, 0.5, 0.5, 0.5, &w, BosmNumerator::WithoutLpips).unwrap();
        assert!((v - 3.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let w = MetricWeights::default();
        assert_eq!(bom(0.0, 0.5, 0.5, &w), Err(MetricsError::NonPositiveInput(0.0)));
        assert!(MetricWeights::new(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(MetricWeights::new(-1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn missing_style_scores_skip_bosm() {
        let mut a = record("a", 0.2, 0.5);
        let mut b = record("b", 0.3, 0.3);
        a.clip_s = None;
        b.clip_s = None;
        let table = ScoreTable { records: vec![a, b] };
        let spec = NormalizationSpec::from_tables([&table], 0.1).unwrap();
        let scored = score_table(&table, &spec, &MetricWeights::default(), BosmNumerator::AllFour).unwrap();
        assert!(scored.iter().all(|s| s.bosm.is_none()));
        assert_eq!(scored[1].bom, 1.0);
    }

    proptest! {
        #[test]
        fn harmonic_means_are_bounded(
            x in prop::collection::vec(1e-3f64..1.0, 4),
            w in prop::collection::vec(0.01f64..5.0, 4),
        ) {
            let w = MetricWeights::new(w[0], w[1], w[2], w[3]).unwrap();
            let b = bom(x[0], x[1], x[3], &w).unwrap();
            let wsum = w.w_r + w.w_b + w.w_l;
            let mean = (w.w_r * x[0] + w.w_b * x[1] + w.w_l * x[3]) / wsum;
            let lo = x[0].min(x[1]).min(x[3]);
            prop_assert!(b >= lo * (1.0 - 1e-12) && b <= mean * (1.0 + 1e-12));

            let s = bosm(x[0], x[1], x[2], x[3], &w, BosmNumerator::AllFour).unwrap();
            let wsum = w.w_r + w.w_b + w.w_s + w.w_l;
            let mean = (w.w_r * x[0] + w.w_b * x[1] + w.w_s * x[2] + w.w_l * x[3]) / wsum;
            let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(s >= lo * (1.0 - 1e-12) && s <= mean * (1.0 + 1e-12));
        }

        #[test]
        fn normalization_preserves_order(v in prop::collection::vec(-1.0f64..1.0, 2..30)) {
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assume!(max > min);
            let range = ColumnRange { min, max };
            for a in &v {
                for b in &v {
                    let (na, nb) = (normalize_value(*a, range, 0.1), normalize_value(*b, range, 0.1));
                    if a < b {
                        prop_assert!(na <= nb);
                    }
                }
            }
        }
    }
}
