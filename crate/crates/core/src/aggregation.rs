//! Best-of-n simulation over completed samples: selection, voting and
//! token-cost accounting per method.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::effort::{Measure, RecordProfile};
use crate::error::{Error, Result};
use crate::parallel;
use crate::settling::SettlingConfig;

pub const DEFAULT_ETA: f64 = 0.5;
pub const DEFAULT_PREFIX_LEN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cons,
    Mean,
    Long,
    Short,
    SelfCertainty,
    Think,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Cons,
        Method::Mean,
        Method::Long,
        Method::Short,
        Method::SelfCertainty,
        Method::Think,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cons => "cons",
            Method::Mean => "mean",
            Method::Long => "long",
            Method::Short => "short",
            Method::SelfCertainty => "self_certainty",
            Method::Think => "think",
        }
    }

    pub fn selects(self) -> bool {
        !matches!(self, Method::Cons | Method::Mean)
    }

    pub fn default_tie_rule(self) -> TieRule {
        if self.selects() {
            TieRule::Ranked
        } else {
            TieRule::FirstIndex
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        if s.trim() == "all" {
            return Ok(Method::ALL.to_vec());
        }
        s.split(',').map(|m| m.trim().parse()).collect()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "cons" => Ok(Method::Cons),
            "mean" => Ok(Method::Mean),
            "long" => Ok(Method::Long),
            "short" => Ok(Method::Short),
            "self_certainty" | "sc" => Ok(Method::SelfCertainty),
            "think" => Ok(Method::Think),
            other => Err(Error::Configuration(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// Best-ranked sample among the tied answers wins.
    Ranked,
    /// Answer seen first in pool order wins.
    FirstIndex,
}

impl FromStr for TieRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ranked" => Ok(TieRule::Ranked),
            "first_index" | "first-index" => Ok(TieRule::FirstIndex),
            other => Err(Error::Configuration(format!("unknown tie rule `{other}`"))),
        }
    }
}

/// Multiplier of the early-stopping overhead.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overhead {
    /// `eta * n`, as in the cost formulas.
    #[default]
    Literal,
    /// `(1 - eta) * n`: only the unselected samples are cut short.
    Unselected,
}

impl FromStr for Overhead {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(Overhead::Literal),
            "unselected" => Ok(Overhead::Unselected),
            other => Err(Error::Configuration(format!("unknown overhead accounting `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregationConfig {
    pub method: Method,
    /// Pool size; `None` uses every sample of a question.
    pub n: Option<usize>,
    pub eta: f64,
    pub prefix_len: usize,
    pub settling: SettlingConfig,
    /// `None` uses the method's default.
    pub tie_rule: Option<TieRule>,
    pub overhead: Overhead,
}

impl AggregationConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            n: None,
            eta: DEFAULT_ETA,
            prefix_len: DEFAULT_PREFIX_LEN,
            settling: SettlingConfig::default(),
            tie_rule: None,
            overhead: Overhead::Literal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::Configuration(format!("eta = {} must lie in (0, 1]", self.eta)));
        }
        if self.n == Some(0) {
            return Err(Error::Configuration("n must be at least 1".into()));
        }
        if self.prefix_len == 0 {
            return Err(Error::Configuration("prefix length must be at least 1".into()));
        }
        self.settling.validated()?;
        Ok(())
    }

    /// Methods without a ranking of their own break ties by pool order,
    /// which is ascending sample index.
    pub fn tie_rule(&self) -> TieRule {
        if !self.method.selects() {
            return TieRule::FirstIndex;
        }
        self.tie_rule.unwrap_or(self.method.default_tie_rule())
    }
}

/// `max(1, round(eta * n))`, rounding halves to even, capped at `n`.
pub fn selection_count(eta: f64, n: usize) -> usize {
    ((eta * n as f64).round_ties_even() as usize).clamp(1, n.max(1))
}

/// Prefix signals used by the ranking methods.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CandidateSignals {
    pub prefix_dtr: Option<f64>,
    pub prefix_self_certainty: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub sample_index: u32,
    pub answer: String,
    pub is_correct: bool,
    pub token_length: usize,
    pub signals: CandidateSignals,
}

/// Samples of one question ordered by `sample_index`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidatePool {
    pub question_id: String,
    pub candidates: Vec<Candidate>,
}

impl CandidatePool {
    pub fn new(question_id: impl Into<String>, mut candidates: Vec<Candidate>) -> Result<Self> {
        let question_id = question_id.into();
        if candidates.is_empty() {
            return Err(Error::InvalidInput(format!("question {question_id} has no samples")));
        }
        if let Some(c) = candidates.iter().find(|c| c.token_length == 0) {
            return Err(Error::InvalidInput(format!(
                "question {question_id} sample {} has no tokens",
                c.sample_index
            )));
        }
        candidates.sort_by_key(|c| c.sample_index);
        Ok(Self {
            question_id,
            candidates,
        })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// The first `n` samples.
    pub fn truncated(&self, n: usize) -> Result<CandidatePool> {
        if n > self.len() {
            return Err(Error::InsufficientData {
                needed: n,
                got: self.len(),
            });
        }
        Ok(Self {
            question_id: self.question_id.clone(),
            candidates: self.candidates[..n].to_vec(),
        })
    }

    pub fn total_tokens(&self) -> f64 {
        self.candidates.iter().map(|c| c.token_length as f64).sum()
    }
}

/// Most frequent answer. `ranking` lists pool positions best first and is
/// required by [`TieRule::Ranked`].
pub fn majority_vote(answers: &[&str], tie_rule: TieRule, ranking: Option<&[usize]>) -> Result<String> {
    if answers.is_empty() {
        return Err(Error::InvalidInput("no answers to vote on".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for a in answers {
        *counts.entry(a).or_default() += 1;
    }
    let best = *counts.values().max().expect("nonempty");
    let tied = |a: &str| counts[a] == best;
    let winner = match tie_rule {
        TieRule::FirstIndex => answers.iter().find(|a| tied(a)).copied(),
        TieRule::Ranked => {
            let ranking =
                ranking.ok_or_else(|| Error::Configuration("ranked tie rule needs a sample ranking".into()))?;
            ranking.iter().map(|&i| answers[i]).find(|a| tied(a))
        }
    };
    winner
        .map(str::to_owned)
        .ok_or_else(|| Error::Configuration("ranking does not cover the tied answers".into()))
}

fn ranking_key(c: &Candidate, method: Method) -> Result<f64> {
    let missing = |what: &str| Error::MissingData(format!("sample {} has no prefix {what}", c.sample_index));
    Ok(match method {
        Method::Short => c.token_length as f64,
        Method::Long => -(c.token_length as f64),
        Method::SelfCertainty => -c
            .signals
            .prefix_self_certainty
            .ok_or_else(|| missing("self-certainty"))?,
        Method::Think => -c.signals.prefix_dtr.ok_or_else(|| missing("DTR"))?,
        Method::Cons | Method::Mean => return Err(Error::Configuration(format!("{method} does not rank samples"))),
    })
}

/// Pool positions of the whole pool in ranking order, best first; ties go
/// to the lower sample index.
pub fn rank(pool: &CandidatePool, method: Method) -> Result<Vec<usize>> {
    let keys: Vec<f64> = pool
        .candidates
        .iter()
        .map(|c| ranking_key(c, method))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        keys[a]
            .total_cmp(&keys[b])
            .then(pool.candidates[a].sample_index.cmp(&pool.candidates[b].sample_index))
    });
    Ok(order)
}

/// The top `k = max(1, round(eta * n))` pool positions, best first.
pub fn rank_and_select(pool: &CandidatePool, method: Method, config: &AggregationConfig) -> Result<Vec<usize>> {
    let mut order = rank(pool, method)?;
    order.truncate(selection_count(config.eta, pool.len()));
    Ok(order)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolOutcome {
    pub question_id: String,
    /// `None` for MEAN, which does not vote.
    pub answer: Option<String>,
    /// 1 or 0 for voting methods, the fraction correct for MEAN.
    pub accuracy: f64,
    pub cost_tokens: f64,
    pub selected: Vec<u32>,
}

/// Votes and costs one question under `config`.
pub fn aggregate_pool(pool: &CandidatePool, config: &AggregationConfig) -> Result<PoolOutcome> {
    config.validate()?;
    let pool = match config.n {
        Some(n) => pool.truncated(n)?,
        None => pool.clone(),
    };
    let n = pool.len() as f64;
    let all: Vec<usize> = (0..pool.len()).collect();
    let method = config.method;
    let tie_rule = config.tie_rule();
    let (voters, ranking, cost) = match method {
        Method::Mean => {
            let correct = pool.candidates.iter().filter(|c| c.is_correct).count();
            return Ok(PoolOutcome {
                question_id: pool.question_id.clone(),
                answer: None,
                accuracy: correct as f64 / n,
                cost_tokens: pool.total_tokens(),
                selected: pool.candidates.iter().map(|c| c.sample_index).collect(),
            });
        }
        Method::Cons => (all, None, pool.total_tokens()),
        _ => {
            let selected = rank_and_select(&pool, method, config)?;
            let selected_tokens: f64 = selected.iter().map(|&i| pool.candidates[i].token_length as f64).sum();
            let fraction = match config.overhead {
                Overhead::Literal => config.eta,
                Overhead::Unselected => 1.0 - config.eta,
            };
            let cost = match method {
                Method::Long => pool.total_tokens(),
                Method::Short => {
                    let longest = selected
                        .iter()
                        .map(|&i| pool.candidates[i].token_length)
                        .max()
                        .unwrap_or(0);
                    selected_tokens + longest as f64 * fraction * n
                }
                _ => selected_tokens + config.prefix_len as f64 * fraction * n,
            };
            (selected.clone(), Some(selected), cost)
        }
    };
    // Voters stay in pool order; the ranking lists their positions best first.
    let mut voters = voters;
    voters.sort_unstable();
    let answers: Vec<&str> = voters.iter().map(|&i| pool.candidates[i].answer.as_str()).collect();
    let positions: Option<Vec<usize>> = ranking.map(|r| {
        r.iter()
            .map(|i| voters.binary_search(i).expect("ranked sample votes"))
            .collect()
    });
    let answer = majority_vote(&answers, tie_rule, positions.as_deref())?;
    let correct = voters
        .iter()
        .map(|&i| &pool.candidates[i])
        .find(|c| c.answer == answer)
        .is_some_and(|c| c.is_correct);
    Ok(PoolOutcome {
        question_id: pool.question_id.clone(),
        answer: Some(answer),
        accuracy: if correct { 1.0 } else { 0.0 },
        cost_tokens: cost,
        selected: voters.iter().map(|&i| pool.candidates[i].sample_index).collect(),
    })
}

/// Pools of one `(model, dataset)` group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetPools {
    pub model_id: String,
    pub dataset_tag: String,
    pub pools: Vec<CandidatePool>,
}

/// Groups profiles into pools sorted by question id, computing prefix
/// signals where the profiles allow it.
pub fn build_pools(
    profiles: &[RecordProfile],
    settling: &SettlingConfig,
    prefix_len: usize,
) -> Result<Vec<DatasetPools>> {
    let mut groups: BTreeMap<(String, String), BTreeMap<String, Vec<Candidate>>> = BTreeMap::new();
    for p in profiles {
        let signals = CandidateSignals {
            prefix_dtr: p
                .curves
                .as_ref()
                .filter(|_| p.token_count > 0)
                .map(|_| p.score(Measure::Dtr, settling, Some(prefix_len)).map(|s| s.value))
                .transpose()?,
            prefix_self_certainty: p
                .self_certainty
                .as_ref()
                .filter(|_| p.token_count > 0)
                .map(|_| {
                    p.score(Measure::SelfCertainty, settling, Some(prefix_len))
                        .map(|s| s.value)
                })
                .transpose()?,
        };
        groups
            .entry((p.model_id.clone(), p.dataset_tag.clone()))
            .or_default()
            .entry(p.question_id.clone())
            .or_default()
            .push(Candidate {
                sample_index: p.sample_index,
                answer: p.answer.clone(),
                is_correct: p.is_correct,
                token_length: p.token_count,
                signals,
            });
    }
    groups
        .into_iter()
        .map(|((model_id, dataset_tag), questions)| {
            Ok(DatasetPools {
                model_id,
                dataset_tag,
                pools: questions
                    .into_iter()
                    .map(|(q, c)| CandidatePool::new(q, c))
                    .collect::<Result<_>>()?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub model_id: String,
    pub dataset_tag: String,
    pub method: Method,
    pub n: usize,
    pub eta: f64,
    pub prefix_len: usize,
    pub overhead: Overhead,
    /// Mean over questions, in `[0, 1]`.
    pub accuracy: f64,
    pub mean_cost_tokens: f64,
    pub delta_vs_cons_percent: Option<f64>,
    pub questions: usize,
}

fn summarize(dataset: &DatasetPools, config: &AggregationConfig, threads: Option<usize>) -> Result<(f64, f64, usize)> {
    let outcomes = parallel::install(threads, || {
        parallel::map_ordered(&dataset.pools, |p| aggregate_pool(p, config))
    })??;
    let q = outcomes.len();
    if q == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let accuracy = outcomes.iter().map(|o| o.accuracy).sum::<f64>() / q as f64;
    let cost = outcomes.iter().map(|o| o.cost_tokens).sum::<f64>() / q as f64;
    Ok((accuracy, cost, q))
}

/// Dataset-level accuracy and mean per-question cost for every config, with
/// the cost change relative to CONS at the same pool size.
pub fn evaluate(
    datasets: &[DatasetPools],
    configs: &[AggregationConfig],
    threads: Option<usize>,
) -> Result<Vec<MethodSummary>> {
    let mut rows = Vec::new();
    for dataset in datasets {
        let pool_size = dataset.pools.iter().map(CandidatePool::len).min().unwrap_or(0);
        let mut cons_cost: BTreeMap<usize, f64> = BTreeMap::new();
        for config in configs {
            config.validate()?;
            let n = config.n.unwrap_or(pool_size);
            let baseline = match cons_cost.get(&n) {
                Some(&c) => c,
                None => {
                    let cons = AggregationConfig {
                        method: Method::Cons,
                        tie_rule: None,
                        ..*config
                    };
                    let c = summarize(dataset, &cons, threads)?.1;
                    cons_cost.insert(n, c);
                    c
                }
            };
            let (accuracy, mean_cost_tokens, questions) = summarize(dataset, config, threads)?;
            rows.push(MethodSummary {
                model_id: dataset.model_id.clone(),
                dataset_tag: dataset.dataset_tag.clone(),
                method: config.method,
                n,
                eta: config.eta,
                prefix_len: config.prefix_len,
                overhead: config.overhead,
                accuracy,
                mean_cost_tokens,
                delta_vs_cons_percent: (baseline > 0.0).then(|| 100.0 * (mean_cost_tokens - baseline) / baseline),
                questions,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoPoint {
    pub model_id: String,
    pub dataset_tag: String,
    pub method: Method,
    pub n: usize,
    pub eta: f64,
    pub prefix_len: usize,
    pub accuracy: f64,
    pub mean_cost_tokens: f64,
    /// No other point of the same dataset is at least as accurate and cheaper.
    pub on_frontier: bool,
}

/// Accuracy/cost points sorted by dataset, then cost.
pub fn pareto_points(summaries: &[MethodSummary]) -> Vec<ParetoPoint> {
    let mut points: Vec<ParetoPoint> = summaries
        .iter()
        .map(|s| ParetoPoint {
            model_id: s.model_id.clone(),
            dataset_tag: s.dataset_tag.clone(),
            method: s.method,
            n: s.n,
            eta: s.eta,
            prefix_len: s.prefix_len,
            accuracy: s.accuracy,
            mean_cost_tokens: s.mean_cost_tokens,
            on_frontier: false,
        })
        .collect();
    points.sort_by(|a, b| {
        (&a.model_id, &a.dataset_tag)
            .cmp(&(&b.model_id, &b.dataset_tag))
            .then(a.mean_cost_tokens.total_cmp(&b.mean_cost_tokens))
            .then(b.accuracy.total_cmp(&a.accuracy))
            .then(a.method.cmp(&b.method))
    });
    let mut best: Option<(String, String, f64)> = None;
    for p in &mut points {
        let same = best
            .as_ref()
            .is_some_and(|(m, d, _)| *m == p.model_id && *d == p.dataset_tag);
        if !same {
            best = None;
        }
        let dominated = best.as_ref().is_some_and(|(_, _, acc)| *acc >= p.accuracy);
        p.on_frontier = !dominated;
        if !dominated {
            best = Some((p.model_id.clone(), p.dataset_tag.clone(), p.accuracy));
        }
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cand(i: u32, answer: &str, correct: bool, len: usize) -> Candidate {
        Candidate {
            sample_index: i,
            answer: answer.into(),
            is_correct: correct,
            token_length: len,
            signals: CandidateSignals::default(),
        }
    }

    fn with_dtr(mut c: Candidate, dtr: f64) -> Candidate {
        c.signals.prefix_dtr = Some(dtr);
        c
    }

    #[test]
    fn votes() {
        assert_eq!(majority_vote(&["a", "a", "b"], TieRule::FirstIndex, None).unwrap(), "a");
        assert_eq!(majority_vote(&["a", "b"], TieRule::FirstIndex, None).unwrap(), "a");
        assert_eq!(majority_vote(&["a", "b"], TieRule::Ranked, Some(&[1, 0])).unwrap(), "b");
        assert!(matches!(
            majority_vote(&["a", "b"], TieRule::Ranked, None),
            Err(Error::Configuration(_))
        ));
        assert!(majority_vote(&[], TieRule::FirstIndex, None).is_err());
    }

    #[test]
    fn selection_counts() {
        assert_eq!(selection_count(0.25, 2), 1);
        assert_eq!(selection_count(0.5, 25), 12);
        assert_eq!(selection_count(0.5, 48), 24);
        assert_eq!(selection_count(0.01, 10), 1);
        assert_eq!(selection_count(1.0, 7), 7);
    }

    #[test]
    fn short_and_think_selection() {
        let config = AggregationConfig::new(Method::Short);
        let pool = CandidatePool::new(
            "q",
            vec![
                cand(1, "a", true, 10),
                cand(2, "a", true, 20),
                cand(3, "b", false, 30),
                cand(4, "b", false, 40),
            ],
        )
        .unwrap();
        let sel = rank_and_select(&pool, Method::Short, &config).unwrap();
        let ids: Vec<u32> = sel.iter().map(|&i| pool.candidates[i].sample_index).collect();
        assert_eq!(ids, vec![1, 2]);

        let pool = CandidatePool::new(
            "q",
            [0.1, 0.4, 0.4, 0.2]
                .iter()
                .enumerate()
                .map(|(i, &d)| with_dtr(cand(i as u32 + 1, "a", true, 10), d))
                .collect(),
        )
        .unwrap();
        let sel = rank_and_select(&pool, Method::Think, &AggregationConfig::new(Method::Think)).unwrap();
        let ids: Vec<u32> = sel.iter().map(|&i| pool.candidates[i].sample_index).collect();
        assert_eq!(ids, vec![2, 3]);

        let bare = CandidatePool::new("q", vec![cand(0, "a", true, 3), cand(1, "a", true, 4)]).unwrap();
        assert!(matches!(
            rank_and_select(&bare, Method::Think, &AggregationConfig::new(Method::Think)),
            Err(Error::MissingData(_))
        ));
    }

    #[test]
    fn cost_examples() {
        let pool = CandidatePool::new("q", (0..48).map(|i| cand(i, "x", true, 6400)).collect()).unwrap();
        let cons = aggregate_pool(&pool, &AggregationConfig::new(Method::Cons)).unwrap();
        assert_eq!(cons.cost_tokens, 307_200.0);

        let pool = CandidatePool::new(
            "q",
            vec![
                with_dtr(cand(0, "a", false, 10), 0.1),
                with_dtr(cand(1, "b", true, 20), 0.9),
            ],
        )
        .unwrap();
        let config = AggregationConfig {
            prefix_len: 5,
            ..AggregationConfig::new(Method::Think)
        };
        let out = aggregate_pool(&pool, &config).unwrap();
        assert_eq!(out.selected, vec![1]);
        assert_eq!(out.cost_tokens, 25.0);
        assert_eq!(out.answer.as_deref(), Some("b"));
        assert_eq!(out.accuracy, 1.0);

        let short = aggregate_pool(&pool, &AggregationConfig::new(Method::Short)).unwrap();
        assert_eq!(short.cost_tokens, 10.0 + 10.0 * 1.0);
        let long = aggregate_pool(&pool, &AggregationConfig::new(Method::Long)).unwrap();
        assert_eq!(long.cost_tokens, 30.0);
        let alt = AggregationConfig {
            overhead: Overhead::Unselected,
            eta: 0.5,
            ..config
        };
        assert_eq!(aggregate_pool(&pool, &alt).unwrap().cost_tokens, 20.0 + 5.0 * 1.0);
    }

    #[test]
    fn unanimous_pool_is_always_right() {
        let mut cs: Vec<Candidate> = (0..6)
            .map(|i| with_dtr(cand(i, "7", true, 5 + i as usize), 0.5))
            .collect();
        for c in &mut cs {
            c.signals.prefix_self_certainty = Some(1.0);
        }
        let pool = CandidatePool::new("q", cs).unwrap();
        for m in Method::ALL {
            let out = aggregate_pool(&pool, &AggregationConfig::new(m)).unwrap();
            assert_eq!(out.accuracy, 1.0, "{m}");
        }
    }

    #[test]
    fn truncation_uses_first_samples() {
        let pool =
            CandidatePool::new("q", (0..5).map(|i| cand(i, "a", true, 10 * (i as usize + 1))).collect()).unwrap();
        let config = AggregationConfig {
            n: Some(2),
            ..AggregationConfig::new(Method::Cons)
        };
        assert_eq!(aggregate_pool(&pool, &config).unwrap().cost_tokens, 30.0);
        let too_many = AggregationConfig { n: Some(6), ..config };
        assert!(aggregate_pool(&pool, &too_many).is_err());
    }

    #[test]
    fn pareto_marks_the_frontier() {
        let row = |m: Method, acc: f64, cost: f64| MethodSummary {
            model_id: "m".into(),
            dataset_tag: "d".into(),
            method: m,
            n: 4,
            eta: 0.5,
            prefix_len: 50,
            overhead: Overhead::Literal,
            accuracy: acc,
            mean_cost_tokens: cost,
            delta_vs_cons_percent: None,
            questions: 1,
        };
        let pts = pareto_points(&[
            row(Method::Cons, 0.8, 100.0),
            row(Method::Think, 0.85, 50.0),
            row(Method::Short, 0.7, 60.0),
        ]);
        let order: Vec<Method> = pts.iter().map(|p| p.method).collect();
        assert_eq!(order, vec![Method::Think, Method::Short, Method::Cons]);
        assert_eq!(
            pts.iter().map(|p| p.on_frontier).collect::<Vec<_>>(),
            vec![true, false, false]
        );
    }

    fn arb_pool() -> impl Strategy<Value = CandidatePool> {
        prop::collection::vec(
            (0usize..3, any::<bool>(), 1usize..500, 0.0f64..1.0, -1.0f64..3.0),
            1..30,
        )
        .prop_map(|v| {
            let cs = v
                .into_iter()
                .enumerate()
                .map(|(i, (a, ok, len, d, s))| Candidate {
                    sample_index: i as u32,
                    answer: ["a", "b", "c"][a].into(),
                    is_correct: ok,
                    token_length: len,
                    signals: CandidateSignals {
                        prefix_dtr: Some(d),
                        prefix_self_certainty: Some(s),
                    },
                })
                .collect();
            CandidatePool::new("q", cs).unwrap()
        })
    }

    proptest! {
        #[test]
        fn cost_identities(pool in arb_pool(), eta in 0.05f64..1.0, prefix in 1usize..100) {
            let base = AggregationConfig { eta, prefix_len: prefix, ..AggregationConfig::new(Method::Cons) };
            let cons = aggregate_pool(&pool, &base).unwrap();
            prop_assert_eq!(cons.cost_tokens, pool.total_tokens());
            let think = aggregate_pool(&pool, &AggregationConfig { method: Method::Think, ..base }).unwrap();
            let sel: f64 = think.selected.iter().map(|&i| pool.candidates[i as usize].token_length as f64).sum();
            let n = pool.len() as f64;
            prop_assert_eq!(think.cost_tokens, sel + prefix as f64 * eta * n);
            let unselected = pool.total_tokens() - sel;
            prop_assert!((cons.cost_tokens - think.cost_tokens - (unselected - prefix as f64 * eta * n)).abs() < 1e-9);
        }

        #[test]
        fn full_selection_matches_cons(pool in arb_pool()) {
            let base = AggregationConfig { eta: 1.0, ..AggregationConfig::new(Method::Cons) };
            let cons = aggregate_pool(&pool, &base).unwrap();
            for m in [Method::Long, Method::Short, Method::SelfCertainty, Method::Think] {
                let config = AggregationConfig { method: m, tie_rule: Some(TieRule::FirstIndex), ..base };
                prop_assert_eq!(&aggregate_pool(&pool, &config).unwrap().answer, &cons.answer);
                let mut sel = rank_and_select(&pool, m, &config).unwrap();
                sel.sort();
                prop_assert_eq!(sel, (0..pool.len()).collect::<Vec<_>>());
            }
        }

        #[test]
        fn mean_is_permutation_invariant(pool in arb_pool(), seed in any::<u64>()) {
            let mut shuffled = pool.candidates.clone();
            let k = shuffled.len();
            shuffled.rotate_left((seed as usize) % k);
            for (i, c) in shuffled.iter_mut().enumerate() {
                c.sample_index = i as u32;
            }
            let other = CandidatePool::new("q", shuffled).unwrap();
            let config = AggregationConfig::new(Method::Mean);
            prop_assert_eq!(
                aggregate_pool(&pool, &config).unwrap().accuracy,
                aggregate_pool(&other, &config).unwrap().accuracy
            );
        }

        #[test]
        fn selection_is_idempotent(pool in arb_pool(), eta in 0.05f64..1.0) {
            let config = AggregationConfig { eta, ..AggregationConfig::new(Method::Think) };
            let sel = rank_and_select(&pool, Method::Think, &config).unwrap();
            let sub = CandidatePool::new("q", sel.iter().map(|&i| pool.candidates[i].clone()).collect()).unwrap();
            let again = rank_and_select(&sub, Method::Think, &AggregationConfig { eta: 1.0, ..config }).unwrap();
            let a: Vec<u32> = sel.iter().map(|&i| pool.candidates[i].sample_index).collect();
            let b: Vec<u32> = again.iter().map(|&i| sub.candidates[i].sample_index).collect();
            prop_assert_eq!(a, b);
        }
    }
}
