//! Binned correlation between effort measures and accuracy, threshold
//! sweeps, and per-token divergence matrices.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::effort::{Measure, RecordProfile};
use crate::error::{Error, Result};
use crate::parallel;
use crate::settling::{curve_distances, settling_depth_of, DistanceMetric, SettlingConfig};
use crate::trace::SequenceRecord;

pub const DEFAULT_BINS: usize = 5;

/// Bin of every score: stable sort by `(score, index)`, then contiguous
/// groups whose sizes differ by at most one, larger groups first.
pub fn quantile_bins(scores: &[f64], num_bins: usize) -> Result<Vec<usize>> {
    if num_bins == 0 {
        return Err(Error::Configuration("number of bins must be at least 1".into()));
    }
    if scores.len() < num_bins {
        return Err(Error::InsufficientData {
            needed: num_bins,
            got: scores.len(),
        });
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::InvalidInput(format!("score {bad} is not a number")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let (base, extra) = (scores.len() / num_bins, scores.len() % num_bins);
    let mut bins = vec![0; scores.len()];
    let mut pos = 0;
    for bin in 0..num_bins {
        let size = base + usize::from(bin < extra);
        for &i in &order[pos..pos + size] {
            bins[i] = bin;
        }
        pos += size;
    }
    Ok(bins)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinSummary {
    pub bin_index: usize,
    pub mean_score: f64,
    pub mean_accuracy: f64,
    pub count: usize,
}

pub fn bin_summaries(scores: &[f64], correct: &[bool], num_bins: usize) -> Result<Vec<BinSummary>> {
    if scores.len() != correct.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores but {} correctness labels",
            scores.len(),
            correct.len()
        )));
    }
    let bins = quantile_bins(scores, num_bins)?;
    let mut sums = vec![(0.0, 0usize, 0usize); num_bins];
    for ((&b, &s), &c) in bins.iter().zip(scores).zip(correct) {
        sums[b].0 += s;
        sums[b].1 += usize::from(c);
        sums[b].2 += 1;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(bin_index, (s, c, n))| BinSummary {
            bin_index,
            mean_score: s / n as f64,
            mean_accuracy: c as f64 / n as f64,
            count: n,
        })
        .collect())
}

/// Product-moment correlation, clamped to `[-1, 1]`.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidInput(format!("{} xs but {} ys", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        let which = if sxx == 0.0 { "x" } else { "y" };
        return Err(Error::UndefinedCorrelation(format!(
            "{which} values have zero variance"
        )));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Color coding of a correlation; `|r| = 0.5` counts as strong.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Category {
    StrongPos,
    WeakPos,
    WeakNeg,
    StrongNeg,
}

impl Category {
    pub fn of(r: f64) -> Self {
        if r >= 0.5 {
            Self::StrongPos
        } else if r >= 0.0 {
            Self::WeakPos
        } else if r > -0.5 {
            Self::WeakNeg
        } else {
            Self::StrongNeg
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::StrongPos => "STRONG_POS",
            Self::WeakPos => "WEAK_POS",
            Self::WeakNeg => "WEAK_NEG",
            Self::StrongNeg => "STRONG_NEG",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What the regression uses as `x` for each bin.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinAxis {
    #[default]
    MeanScore,
    BinIndex,
}

impl std::str::FromStr for BinAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_score" | "mean-score" => Ok(Self::MeanScore),
            "bin_index" | "bin-index" => Ok(Self::BinIndex),
            other => Err(Error::Configuration(format!("unknown bin axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationConfig {
    pub settling: SettlingConfig,
    pub num_bins: usize,
    /// Token prefix for confidence measures and DTR; `None` scores whole sequences.
    pub prefix_len: Option<usize>,
    pub axis: BinAxis,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self {
            settling: SettlingConfig::default(),
            num_bins: DEFAULT_BINS,
            prefix_len: None,
            axis: BinAxis::MeanScore,
        }
    }
}

/// Binned correlation of scores against correctness.
pub fn binned_correlation(
    scores: &[f64],
    correct: &[bool],
    num_bins: usize,
    axis: BinAxis,
) -> Result<(f64, Vec<BinSummary>)> {
    let bins = bin_summaries(scores, correct, num_bins)?;
    let xs: Vec<f64> = match axis {
        BinAxis::MeanScore => bins.iter().map(|b| b.mean_score).collect(),
        BinAxis::BinIndex => bins.iter().map(|b| b.bin_index as f64).collect(),
    };
    let ys: Vec<f64> = bins.iter().map(|b| b.mean_accuracy).collect();
    Ok((pearson(&xs, &ys)?, bins))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationCell {
    pub model_tag: String,
    pub dataset_tag: String,
    pub measure: Measure,
    /// Mean over seed groups of the per-seed binned r.
    pub pearson_r: Option<f64>,
    pub category: Option<Category>,
    pub records: usize,
    pub seeds_used: usize,
    pub seeds_total: usize,
    /// Why some or all seed groups produced no correlation.
    pub flag: Option<String>,
    /// Bin summaries, present when the cell has a single seed group.
    pub bins: Vec<BinSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationTable {
    pub config: CorrelationConfig,
    pub cells: Vec<CorrelationCell>,
    /// One row per measure averaging r over every unflagged cell.
    pub average: Vec<CorrelationCell>,
}

pub const AVERAGE_TAG: &str = "Average";

type GroupKey = (String, String);
/// Profiles of one group keyed by sampling seed.
type SeedGroups<'a> = BTreeMap<u64, Vec<&'a RecordProfile>>;

/// Profiles grouped by `(model_id, dataset_tag)`, then by seed, in sorted order.
pub fn group_profiles(profiles: &[RecordProfile]) -> BTreeMap<GroupKey, SeedGroups<'_>> {
    let mut groups: BTreeMap<GroupKey, SeedGroups<'_>> = BTreeMap::new();
    for p in profiles {
        groups
            .entry((p.model_id.clone(), p.dataset_tag.clone()))
            .or_default()
            .entry(p.seed)
            .or_default()
            .push(p);
    }
    groups
}

fn seed_correlation(
    records: &[&RecordProfile],
    measure: Measure,
    config: &CorrelationConfig,
) -> Result<(f64, Vec<BinSummary>)> {
    let scores: Vec<f64> = records
        .iter()
        .filter(|p| p.token_count > 0)
        .map(|p| p.score(measure, &config.settling, config.prefix_len).map(|s| s.value))
        .collect::<Result<_>>()?;
    let correct: Vec<bool> = records
        .iter()
        .filter(|p| p.token_count > 0)
        .map(|p| p.is_correct)
        .collect();
    binned_correlation(&scores, &correct, config.num_bins, config.axis)
}

fn cell(key: &GroupKey, seeds: &SeedGroups, measure: Measure, config: &CorrelationConfig) -> CorrelationCell {
    let mut rs = Vec::new();
    let mut flag = None;
    let mut bins = Vec::new();
    for group in seeds.values() {
        match seed_correlation(group, measure, config) {
            Ok((r, b)) => {
                rs.push(r);
                bins = b;
            }
            Err(e) => {
                flag.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let pearson_r = (!rs.is_empty()).then(|| rs.iter().sum::<f64>() / rs.len() as f64);
    CorrelationCell {
        model_tag: key.0.clone(),
        dataset_tag: key.1.clone(),
        measure,
        pearson_r,
        category: pearson_r.map(Category::of),
        records: seeds.values().map(Vec::len).sum(),
        seeds_used: rs.len(),
        seeds_total: seeds.len(),
        flag,
        bins: if seeds.len() == 1 { bins } else { Vec::new() },
    }
}

/// Correlation of every measure with accuracy per `(model, dataset)` group.
/// Cells that cannot be computed are flagged rather than failing the table.
pub fn correlation_table(
    profiles: &[RecordProfile],
    measures: &[Measure],
    config: &CorrelationConfig,
    threads: Option<usize>,
) -> Result<CorrelationTable> {
    config.settling.validated()?;
    if config.num_bins < 2 {
        return Err(Error::Configuration("correlation needs at least 2 bins".into()));
    }
    let groups = group_profiles(profiles);
    let jobs: Vec<(&GroupKey, &SeedGroups, Measure)> = groups
        .iter()
        .flat_map(|(k, seeds)| measures.iter().map(move |&m| (k, seeds, m)))
        .collect();
    let cells = parallel::install(threads, || {
        parallel::map_ordered(&jobs, |(k, seeds, m)| Ok(cell(k, seeds, *m, config)))
    })??;
    let average = measures
        .iter()
        .map(|&m| {
            let rs: Vec<f64> = cells
                .iter()
                .filter(|c| c.measure == m)
                .filter_map(|c| c.pearson_r)
                .collect();
            let total = cells.iter().filter(|c| c.measure == m).count();
            let r = (!rs.is_empty()).then(|| rs.iter().sum::<f64>() / rs.len() as f64);
            CorrelationCell {
                model_tag: AVERAGE_TAG.into(),
                dataset_tag: AVERAGE_TAG.into(),
                measure: m,
                pearson_r: r,
                category: r.map(Category::of),
                records: cells.iter().filter(|c| c.measure == m).map(|c| c.records).sum(),
                seeds_used: rs.len(),
                seeds_total: total,
                flag: (rs.len() < total).then(|| format!("{} of {total} cells flagged", total - rs.len())),
                bins: Vec::new(),
            }
        })
        .collect();
    Ok(CorrelationTable {
        config: *config,
        cells,
        average,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub g: f64,
    pub rho: f64,
    pub mean_dtr: f64,
    pub pearson_r: Option<f64>,
    pub category: Option<Category>,
    pub flag: Option<String>,
}

/// Mean DTR over every non-empty record.
pub fn mean_dtr(profiles: &[RecordProfile], settling: &SettlingConfig, prefix_len: Option<usize>) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in profiles.iter().filter(|p| p.token_count > 0) {
        sum += p.dtr(settling, prefix_len)?.dtr;
        n += 1;
    }
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    Ok(sum / n as f64)
}

/// Mean DTR and DTR-accuracy correlation over a `g x rho` grid. The
/// correlation is the average row of a DTR-only [`correlation_table`].
pub fn hyperparam_sweep(
    profiles: &[RecordProfile],
    g_grid: &[f64],
    rho_grid: &[f64],
    base: &CorrelationConfig,
    threads: Option<usize>,
) -> Result<Vec<SweepPoint>> {
    if g_grid.is_empty() || rho_grid.is_empty() {
        return Err(Error::Configuration("sweep grids must not be empty".into()));
    }
    let mut points = Vec::with_capacity(g_grid.len() * rho_grid.len());
    for &g in g_grid {
        for &rho in rho_grid {
            let config = CorrelationConfig {
                settling: base.settling.with_g(g).with_rho(rho).validated()?,
                ..*base
            };
            let table = correlation_table(profiles, &[Measure::Dtr], &config, threads)?;
            let avg = &table.average[0];
            points.push(SweepPoint {
                g,
                rho,
                mean_dtr: mean_dtr(profiles, &config.settling, config.prefix_len)?,
                pearson_r: avg.pearson_r,
                category: avg.category,
                flag: table.cells.iter().find_map(|c| c.flag.clone()),
            });
        }
    }
    Ok(points)
}

/// `tokens x layers` distances with row labels `t<index>:<token id>`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub metric: DistanceMetric,
    pub num_layers: usize,
    pub labels: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub settling_depths: Vec<usize>,
}

impl Heatmap {
    /// CSV with a `token` column, one column per layer and the settling depth.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("token");
        for l in 1..=self.num_layers {
            out.push_str(&format!(",layer_{l}"));
        }
        out.push_str(",settling_depth\n");
        for ((label, row), depth) in self.labels.iter().zip(&self.rows).zip(&self.settling_depths) {
            out.push_str(label);
            for d in row {
                out.push_str(&format!(",{d:.9}"));
            }
            out.push_str(&format!(",{depth}\n"));
        }
        out
    }
}

pub fn heatmap_matrix(record: &SequenceRecord, config: &SettlingConfig) -> Result<Heatmap> {
    if record.frames.is_empty() {
        return Err(Error::MissingData(format!(
            "record {}#{} has no lens frames",
            record.question_id, record.sample_index
        )));
    }
    let rows: Vec<Vec<f64>> = record
        .frames
        .iter()
        .map(|f| curve_distances(f, config.metric, config.log_base))
        .collect::<Result<_>>()?;
    Ok(Heatmap {
        metric: config.metric,
        num_layers: rows[0].len(),
        labels: record
            .token_ids
            .iter()
            .enumerate()
            .map(|(t, id)| format!("t{t}:{id}"))
            .collect(),
        settling_depths: rows.iter().map(|r| settling_depth_of(r, config.g)).collect(),
        rows,
    })
}

/// Heatmap from stored curves.
pub fn heatmap_from_profile(profile: &RecordProfile, config: &SettlingConfig) -> Result<Heatmap> {
    let depths = profile.settling_depths(config)?;
    let curves = profile.curves.as_ref().expect("settling_depths checked curves");
    let rows: Vec<Vec<f64>> = (0..profile.token_count).map(|t| curves.token(t).to_vec()).collect();
    Ok(Heatmap {
        metric: curves.metric,
        num_layers: curves.num_layers,
        labels: profile
            .token_ids
            .iter()
            .enumerate()
            .map(|(t, id)| format!("t{t}:{id}"))
            .collect(),
        rows,
        settling_depths: depths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::{synth_planted_trace, PlantedSchedule};
    use proptest::prelude::*;

    fn sizes(bins: &[usize], k: usize) -> Vec<usize> {
        (0..k).map(|b| bins.iter().filter(|&&x| x == b).count()).collect()
    }

    #[test]
    fn bins_follow_the_size_rules() {
        let scores: Vec<f64> = (1..=10).map(f64::from).collect();
        let bins = quantile_bins(&scores, 5).unwrap();
        assert_eq!(bins, vec![0, 0, 1, 1, 2, 2, 3, 3, 4, 4]);

        let flat = vec![3.0; 7];
        let bins = quantile_bins(&flat, 3).unwrap();
        assert_eq!(bins, vec![0, 0, 0, 1, 1, 2, 2]);

        let eleven: Vec<f64> = (0..11).rev().map(f64::from).collect();
        let bins = quantile_bins(&eleven, 5).unwrap();
        assert_eq!(sizes(&bins, 5), vec![3, 2, 2, 2, 2]);
        assert_eq!(bins[10], 0);
        assert_eq!(bins[0], 4);

        assert!(matches!(
            quantile_bins(&[1.0, 2.0], 5),
            Err(Error::InsufficientData { needed: 5, got: 2 })
        ));
    }

    #[test]
    fn pearson_examples() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let twice: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        assert_close!(pearson(&xs, &twice).unwrap(), 1.0, 1e-12);
        let anti: Vec<f64> = xs.iter().map(|x| 7.0 - x).collect();
        assert_close!(pearson(&xs, &anti).unwrap(), -1.0, 1e-12);
        // sxy = 10, sxx = 10, syy = 10.8; matches numpy.corrcoef.
        let r = pearson(&xs, &[1.0, 2.0, 2.0, 4.0, 5.0]).unwrap();
        assert_close!(r, 10.0 / (10.0f64 * 10.8).sqrt(), 1e-15);
        assert_close!(r, 0.9622504486493761, 1e-12);
        assert!(matches!(pearson(&xs, &[2.0; 5]), Err(Error::UndefinedCorrelation(_))));
        assert!(matches!(pearson(&[1.0; 5], &xs), Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn category_boundaries() {
        assert_eq!(Category::of(0.5), Category::StrongPos);
        assert_eq!(Category::of(0.4999), Category::WeakPos);
        assert_eq!(Category::of(0.0), Category::WeakPos);
        assert_eq!(Category::of(-1e-12), Category::WeakNeg);
        assert_eq!(Category::of(-0.5), Category::StrongNeg);
        assert_eq!(Category::of(-0.4999), Category::WeakNeg);
    }

    #[test]
    fn heatmap_rows_cross_at_planted_layers() {
        let schedule = PlantedSchedule::new(vec![4, 1, 6, 2], 8);
        let (record, truth) = synth_planted_trace(6, &schedule, 3).unwrap();
        let config = SettlingConfig::default();
        let h = heatmap_matrix(&record, &config).unwrap();
        assert_eq!(h.rows.len(), 4);
        for (row, &c) in h.rows.iter().zip(&truth) {
            let first = row.iter().position(|&d| d <= config.g).unwrap() + 1;
            assert_eq!(first, c);
            assert_eq!(*row.last().unwrap(), 0.0);
        }
        assert_eq!(h.settling_depths, truth);
        let csv = h.to_csv();
        assert!(csv.starts_with("token,layer_1,layer_2,layer_3,layer_4,layer_5,layer_6,settling_depth\n"));
        assert_eq!(csv.lines().count(), 5);

        let cosine = SettlingConfig {
            metric: DistanceMetric::Cosine,
            ..config
        };
        assert!(matches!(heatmap_matrix(&record, &cosine), Err(Error::MissingData(_))));
    }

    #[test]
    fn single_token_heatmap() {
        let (record, _) = synth_planted_trace(5, &PlantedSchedule::new(vec![3], 8), 0).unwrap();
        let h = heatmap_matrix(&record, &SettlingConfig::default()).unwrap();
        assert_eq!(h.rows.len(), 1);
        assert_eq!(h.rows[0].len(), 5);
        assert_eq!(h.rows[0][4], 0.0);
    }

    proptest! {
        #[test]
        fn bins_partition_and_balance(scores in prop::collection::vec(-5.0f64..5.0, 5..60), k in 1usize..6) {
            let bins = quantile_bins(&scores, k).unwrap();
            let s = sizes(&bins, k);
            prop_assert_eq!(s.iter().sum::<usize>(), scores.len());
            prop_assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
            prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
            for i in 0..scores.len() {
                for j in 0..scores.len() {
                    if scores[i] < scores[j] {
                        prop_assert!(bins[i] <= bins[j]);
                    }
                }
            }
        }

        #[test]
        fn pearson_symmetric_and_affine_invariant(
            pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..30),
            a in 0.1f64..5.0, b in -5.0f64..5.0,
        ) {
            let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            if let Ok(r) = pearson(&xs, &ys) {
                prop_assert!((r - pearson(&ys, &xs).unwrap()).abs() <= 1e-9);
                let moved: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
                prop_assert!((r - pearson(&moved, &ys).unwrap()).abs() <= 1e-9);
            }
        }
    }
}
