//! Numerically safe primitives over categorical distributions and hidden
//! vectors.
//!
//! All divergences are computed in nats. [`LogBase::from_nats`] converts a
//! result into the configured base.
//!
//! Sparse distributions keep an explicit support plus one aggregate tail
//! bucket. When two distributions with different supports meet, their supports
//! are unified: an id that one side does not store receives that side's tail
//! mass spread uniformly over its unsupported ids, and ids outside the union
//! stay in a shared tail bucket that is compared as a single symbol. The
//! coarse-graining is exact when both tails are empty; otherwise it can only
//! lower the entropy attributed to the tail, by at most
//! `tail_mass * ln(vocab_size - k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Accepted deviation of a probability vector's total mass from 1.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

/// Floor applied to the second argument of KL and to self-certainty inputs.
pub const CLAMP_EPSILON: f64 = 1e-12;

/// Logarithm base used to report entropies and divergences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Natural,
    Base2,
}

impl LogBase {
    pub fn from_nats(self, nats: f64) -> f64 {
        match self {
            LogBase::Natural => nats,
            LogBase::Base2 => nats / std::f64::consts::LN_2,
        }
    }

    /// Upper bound of the Jensen-Shannon divergence in this base.
    pub fn jsd_bound(self) -> f64 {
        self.from_nats(std::f64::consts::LN_2)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LogBase::Natural => "natural",
            LogBase::Base2 => "base2",
        }
    }
}

impl std::str::FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "natural" | "e" | "nats" => Ok(LogBase::Natural),
            "base2" | "2" | "bits" => Ok(LogBase::Base2),
            other => Err(Error::Configuration(format!("unknown log base `{other}`"))),
        }
    }
}

/// A categorical distribution over a vocabulary, dense or sparse with a tail.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    /// Sorted token ids; `None` for a dense vector covering `0..vocab_size`.
    support: Option<Vec<u32>>,
    mass: Vec<f64>,
    tail_mass: f64,
    vocab_size: usize,
}

impl ProbVector {
    /// Dense distribution over `0..mass.len()`.
    pub fn dense(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::InvalidInput("empty probability vector".into()));
        }
        check_masses(&mass, 0.0)?;
        let vocab_size = mass.len();
        Ok(Self {
            support: None,
            mass,
            tail_mass: 0.0,
            vocab_size,
        })
    }

    /// Sparse distribution storing `support` explicitly; the remaining
    /// probability `tail_mass` belongs to the unsupported ids.
    pub fn sparse(vocab_size: usize, support: Vec<u32>, mass: Vec<f64>, tail_mass: f64) -> Result<Self> {
        if support.len() != mass.len() {
            return Err(Error::InvalidInput(format!(
                "support has {} ids but {} masses",
                support.len(),
                mass.len()
            )));
        }
        if !(tail_mass.is_finite() && tail_mass >= 0.0) {
            return Err(Error::InvalidInput(format!("invalid tail mass {tail_mass}")));
        }
        check_masses(&mass, tail_mass)?;
        let (support, mass) = sort_support(vocab_size, support, mass)?;
        if support.len() == vocab_size && tail_mass > PROB_SUM_TOLERANCE {
            return Err(Error::InvalidInput(
                "tail mass on a support covering the whole vocabulary".into(),
            ));
        }
        Ok(Self {
            support: Some(support),
            mass,
            tail_mass,
            vocab_size,
        })
    }

    pub fn uniform(vocab_size: usize) -> Self {
        Self {
            support: None,
            mass: vec![1.0 / vocab_size as f64; vocab_size],
            tail_mass: 0.0,
            vocab_size,
        }
    }

    pub fn point_mass(vocab_size: usize, id: u32) -> Result<Self> {
        if id as usize >= vocab_size {
            return Err(Error::InvalidInput(format!("id {id} outside vocabulary {vocab_size}")));
        }
        let mut mass = vec![0.0; vocab_size];
        mass[id as usize] = 1.0;
        Self::dense(mass)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn is_dense(&self) -> bool {
        self.support.is_none()
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Number of explicitly stored ids.
    pub fn support_len(&self) -> usize {
        self.mass.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    /// Explicitly stored `(id, mass)` pairs in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.mass.iter().enumerate().map(move |(i, &m)| {
            let id = match &self.support {
                None => i as u32,
                Some(ids) => ids[i],
            };
            (id, m)
        })
    }

    /// Stored mass of `id`, or `None` if the id lives in the tail.
    pub fn get(&self, id: u32) -> Option<f64> {
        match &self.support {
            None => self.mass.get(id as usize).copied(),
            Some(ids) => ids.binary_search(&id).ok().map(|i| self.mass[i]),
        }
    }

    /// Probability of `id`, spreading the tail uniformly over unsupported ids.
    pub fn prob(&self, id: u32) -> f64 {
        if id as usize >= self.vocab_size {
            return 0.0;
        }
        self.get(id).unwrap_or_else(|| self.tail_share())
    }

    /// Mass assigned to each unsupported id under the uniform-tail rule.
    pub fn tail_share(&self) -> f64 {
        let unsupported = self.vocab_size - self.mass.len();
        if unsupported == 0 {
            0.0
        } else {
            self.tail_mass / unsupported as f64
        }
    }
}

fn check_masses(mass: &[f64], tail: f64) -> Result<()> {
    if let Some(bad) = mass.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
        return Err(Error::InvalidInput(format!("invalid probability {bad}")));
    }
    let total: f64 = mass.iter().sum::<f64>() + tail;
    if (total - 1.0).abs() > PROB_SUM_TOLERANCE {
        return Err(Error::InvalidInput(format!(
            "probabilities sum to {total}, outside 1 ± {PROB_SUM_TOLERANCE}"
        )));
    }
    Ok(())
}

fn sort_support(vocab_size: usize, support: Vec<u32>, values: Vec<f64>) -> Result<(Vec<u32>, Vec<f64>)> {
    if let Some(bad) = support.iter().find(|&&id| id as usize >= vocab_size) {
        return Err(Error::InvalidInput(format!("id {bad} outside vocabulary {vocab_size}")));
    }
    let mut pairs: Vec<(u32, f64)> = support.into_iter().zip(values).collect();
    pairs.sort_by_key(|p| p.0);
    if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidInput("duplicate ids in support".into()));
    }
    Ok(pairs.into_iter().unzip())
}

/// Raw logits over a vocabulary, dense or sparse with a log-sum-exp tail.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector {
    support: Option<Vec<u32>>,
    values: Vec<f64>,
    /// `None` for dense vectors; `-inf` encodes an empty tail.
    tail_logsumexp: Option<f64>,
    vocab_size: usize,
}

impl LogitVector {
    pub fn dense(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty logit vector".into()));
        }
        check_logits(&values)?;
        let vocab_size = values.len();
        Ok(Self {
            support: None,
            values,
            tail_logsumexp: None,
            vocab_size,
        })
    }

    pub fn sparse(vocab_size: usize, support: Vec<u32>, values: Vec<f64>, tail_logsumexp: f64) -> Result<Self> {
        if support.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "support has {} ids but {} logits",
                support.len(),
                values.len()
            )));
        }
        check_logits(&values)?;
        if tail_logsumexp.is_nan() || tail_logsumexp == f64::INFINITY {
            return Err(Error::InvalidInput(format!(
                "invalid tail log-sum-exp {tail_logsumexp}"
            )));
        }
        if support.is_empty() && tail_logsumexp == f64::NEG_INFINITY {
            return Err(Error::InvalidInput("sparse logits carry no mass".into()));
        }
        let (support, values) = sort_support(vocab_size, support, values)?;
        Ok(Self {
            support: Some(support),
            values,
            tail_logsumexp: Some(tail_logsumexp),
            vocab_size,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn check_logits(values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(bad) => Err(Error::InvalidInput(format!("non-finite logit {bad}"))),
        None => Ok(()),
    }
}

/// Normalizes logits into a distribution, subtracting the maximum first.
pub fn softmax_project(z: &LogitVector) -> Result<ProbVector> {
    let tail = z.tail_logsumexp.unwrap_or(f64::NEG_INFINITY);
    let max = z.values.iter().copied().fold(tail, f64::max);
    let exps: Vec<f64> = z.values.iter().map(|v| (v - max).exp()).collect();
    let tail_exp = (tail - max).exp();
    let total: f64 = exps.iter().sum::<f64>() + tail_exp;
    let mass: Vec<f64> = exps.into_iter().map(|e| e / total).collect();
    match &z.support {
        None => ProbVector::dense(mass),
        Some(ids) => ProbVector::sparse(z.vocab_size, ids.clone(), mass, tail_exp / total),
    }
}

/// A hidden-state vector of fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenVector(Vec<f64>);

impl HiddenVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty hidden vector".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite hidden value {bad}")));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[inline]
fn plogp(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Shannon entropy in nats; a sparse tail counts as one pseudo-symbol.
pub fn entropy(p: &ProbVector) -> f64 {
    let h = -(p.mass.iter().map(|&m| plogp(m)).sum::<f64>() + plogp(p.tail_mass));
    h.max(0.0)
}

pub(crate) fn entropy_slice<T: Copy + Into<f64>>(p: &[T]) -> f64 {
    (-p.iter().map(|&m| plogp(m.into())).sum::<f64>()).max(0.0)
}

#[inline]
fn jsd_term(p: f64, q: f64) -> f64 {
    let m = 0.5 * (p + q);
    let mut t = 0.0;
    if p > 0.0 {
        t += 0.5 * p * (p / m).ln();
    }
    if q > 0.0 {
        t += 0.5 * q * (q / m).ln();
    }
    t
}

#[inline]
fn kl_term(p: f64, q: f64) -> f64 {
    if p > 0.0 {
        p * (p / q.max(CLAMP_EPSILON)).ln()
    } else {
        0.0
    }
}

pub(crate) fn jsd_slices<T: Copy + Into<f64>>(p: &[T], q: &[T]) -> f64 {
    let sum: f64 = p.iter().zip(q).map(|(&a, &b)| jsd_term(a.into(), b.into())).sum();
    sum.clamp(0.0, std::f64::consts::LN_2)
}

pub(crate) fn kl_slices<T: Copy + Into<f64>>(p: &[T], q: &[T]) -> f64 {
    p.iter().zip(q).map(|(&a, &b)| kl_term(a.into(), b.into())).sum()
}

/// The two operands expressed over a common partition of the vocabulary.
fn unify(p: &ProbVector, q: &ProbVector) -> Result<(Vec<f64>, Vec<f64>)> {
    if p.vocab_size != q.vocab_size {
        return Err(Error::IncompatibleOperands(format!(
            "vocabulary sizes {} and {}",
            p.vocab_size, q.vocab_size
        )));
    }
    if p.is_dense() && q.is_dense() {
        return Ok((p.mass.clone(), q.mass.clone()));
    }
    let union: Vec<u32> = if p.is_dense() || q.is_dense() {
        (0..p.vocab_size as u32).collect()
    } else {
        let mut ids: Vec<u32> = p.iter().chain(q.iter()).map(|(id, _)| id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    };
    let outside = p.vocab_size - union.len();
    let side = |d: &ProbVector| -> Vec<f64> {
        let mut v: Vec<f64> = union.iter().map(|&id| d.prob(id)).collect();
        if outside > 0 {
            v.push(d.tail_share() * outside as f64);
        }
        v
    };
    Ok((side(p), side(q)))
}

/// Jensen-Shannon divergence in nats, bounded by `ln 2`.
pub fn jsd(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    if p.is_dense() && q.is_dense() {
        if p.vocab_size != q.vocab_size {
            return Err(Error::IncompatibleOperands(format!(
                "vocabulary sizes {} and {}",
                p.vocab_size, q.vocab_size
            )));
        }
        return Ok(jsd_slices(&p.mass, &q.mass));
    }
    let (a, b) = unify(p, q)?;
    Ok(jsd_slices(&a, &b))
}

/// `KL(p || q)` in nats with `q` clamped to at least [`CLAMP_EPSILON`].
pub fn kl_divergence(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    let (a, b) = unify(p, q)?;
    Ok(kl_slices(&a, &b))
}

/// Cosine distance `1 - cos(a, b)`, in `[0, 2]`.
pub fn cosine_distance(a: &HiddenVector, b: &HiddenVector) -> Result<f64> {
    cosine_distance_slices(&a.0, &b.0)
}

pub(crate) fn cosine_distance_slices<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::IncompatibleOperands(format!(
            "hidden dimensions {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (mut dot, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y): (f64, f64) = (x.into(), y.into());
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::UndefinedDirection);
    }
    // sqrt(aa * bb) rather than sqrt(aa) * sqrt(bb) so identical inputs give exactly 0.
    Ok((1.0 - dot / (aa * bb).sqrt()).clamp(0.0, 2.0))
}

/// `KL(u || p)` against the uniform distribution `u`, in nats.
pub fn self_certainty_term(p: &ProbVector) -> f64 {
    let v = p.vocab_size as f64;
    let stored: f64 = p.mass.iter().map(|&m| (v * m.max(CLAMP_EPSILON)).ln()).sum();
    let unsupported = (p.vocab_size - p.mass.len()) as f64;
    let tail = if unsupported > 0.0 {
        unsupported * (v * p.tail_share().max(CLAMP_EPSILON)).ln()
    } else {
        0.0
    };
    // KL is non-negative; rounding in v * (1/v) must not produce -0.0 or -1e-17.
    (-(stored + tail) / v).max(0.0)
}

pub(crate) fn self_certainty_slice<T: Copy + Into<f64>>(p: &[T]) -> f64 {
    let v = p.len() as f64;
    let s: f64 = p.iter().map(|&m| (v * m.into().max(CLAMP_EPSILON)).ln()).sum();
    (-s / v).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(v: &[f64]) -> ProbVector {
        ProbVector::dense(v.to_vec()).unwrap()
    }

    #[test]
    fn softmax_examples() {
        let p = softmax_project(&LogitVector::dense(vec![0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(p.masses(), &[0.5, 0.5]);

        let p = softmax_project(&LogitVector::dense(vec![3f64.ln(), 0.0]).unwrap()).unwrap();
        assert_close!(p.masses()[0], 0.75, 1e-15);
        assert_close!(p.masses()[1], 0.25, 1e-15);

        let p = softmax_project(&LogitVector::sparse(10, vec![7], vec![0.0], 0.0).unwrap()).unwrap();
        assert_eq!(p.get(7), Some(0.5));
        assert_eq!(p.tail_mass(), 0.5);
        assert!(!p.is_dense());
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let p = softmax_project(&LogitVector::dense(vec![1000.0, 1000.0, 0.0]).unwrap()).unwrap();
        assert_close!(p.masses()[0], 0.5, 1e-12);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(matches!(
            LogitVector::dense(vec![0.0, f64::NAN]),
            Err(Error::InvalidInput(_))
        ));
        assert!(LogitVector::dense(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_close!(entropy(&ProbVector::uniform(4)), 4f64.ln(), 1e-12);
        assert_eq!(entropy(&ProbVector::point_mass(4, 2).unwrap()), 0.0);
        // -(0.75 ln 0.75 + 0.25 ln 0.25)
        assert_close!(entropy(&dense(&[0.75, 0.25])), 0.562_335_144_618_808_7, 1e-12);
    }

    #[test]
    fn jsd_examples() {
        let p = dense(&[0.3, 0.7]);
        assert_eq!(jsd(&p, &p).unwrap(), 0.0);
        assert_close!(jsd(&dense(&[1.0, 0.0]), &dense(&[0.0, 1.0])).unwrap(), 2f64.ln(), 1e-15);
        // H(0.75, 0.25) - ln(2)/2
        let expected = 0.562_335_144_618_808_7 - 0.5 * 2f64.ln();
        assert_close!(jsd(&dense(&[0.5, 0.5]), &dense(&[1.0, 0.0])).unwrap(), expected, 1e-12);
        assert_close!(expected, 0.2158, 1e-4);
    }

    #[test]
    fn jsd_vocab_mismatch() {
        assert!(matches!(
            jsd(&ProbVector::uniform(3), &ProbVector::uniform(4)),
            Err(Error::IncompatibleOperands(_))
        ));
        assert!(kl_divergence(&ProbVector::uniform(3), &ProbVector::uniform(4)).is_err());
    }

    #[test]
    fn kl_examples() {
        let p = dense(&[0.2, 0.3, 0.5]);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        assert_close!(
            kl_divergence(&dense(&[1.0, 0.0]), &dense(&[0.5, 0.5])).unwrap(),
            2f64.ln(),
            1e-15
        );
        // 0.5 ln(0.5 / (1 - eps)) + 0.5 ln(0.5 / eps), evaluated term by term.
        let eps = 1e-12;
        let q = ProbVector::dense(vec![1.0 - eps, eps]).unwrap();
        let expected = 0.5 * (0.5 / (1.0 - eps)).ln() + 0.5 * (0.5 / eps).ln();
        assert_close!(kl_divergence(&dense(&[0.5, 0.5]), &q).unwrap(), expected, 1e-9);
        assert_close!(expected, 13.12236, 1e-5);
    }

    #[test]
    fn kl_clamps_zero_denominator() {
        let kl = kl_divergence(&dense(&[0.5, 0.5]), &dense(&[1.0, 0.0])).unwrap();
        assert!(kl.is_finite());
        assert_close!(kl, 0.5 * (0.5f64).ln() + 0.5 * (0.5 / CLAMP_EPSILON).ln(), 1e-9);
    }

    #[test]
    fn cosine_examples() {
        let a = HiddenVector::new(vec![0.3, -1.2, 4.0]).unwrap();
        assert_eq!(cosine_distance(&a, &a).unwrap(), 0.0);
        let x = HiddenVector::new(vec![1.0, 0.0]).unwrap();
        let y = HiddenVector::new(vec![0.0, 1.0]).unwrap();
        let nx = HiddenVector::new(vec![-1.0, 0.0]).unwrap();
        assert_eq!(cosine_distance(&x, &y).unwrap(), 1.0);
        assert_eq!(cosine_distance(&x, &nx).unwrap(), 2.0);
        let zero = HiddenVector::new(vec![0.0, 0.0]).unwrap();
        assert!(matches!(cosine_distance(&x, &zero), Err(Error::UndefinedDirection)));
        let z3 = HiddenVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(cosine_distance(&x, &z3), Err(Error::IncompatibleOperands(_))));
    }

    #[test]
    fn self_certainty_examples() {
        assert_eq!(self_certainty_term(&ProbVector::uniform(4)), 0.0);
        // -(1/4) [ln 2.8 + 3 ln 0.4]
        let expected = -0.25 * (2.8f64.ln() + 3.0 * 0.4f64.ln());
        assert_close!(self_certainty_term(&dense(&[0.7, 0.1, 0.1, 0.1])), expected, 1e-12);
        assert_close!(expected, 0.4298, 1e-4);

        let eps = CLAMP_EPSILON;
        let expected = 0.75 * (1.0 / (4.0 * eps)).ln() - 0.25 * 4f64.ln();
        let point = ProbVector::point_mass(4, 0).unwrap();
        assert_close!(self_certainty_term(&point), expected, 1e-9);
        assert_close!(expected, 19.33697, 1e-5);
    }

    #[test]
    fn self_certainty_uniform_is_exactly_zero_for_powers_of_two() {
        for v in [2usize, 4, 8, 64, 1024, 4096] {
            assert_eq!(self_certainty_term(&ProbVector::uniform(v)), 0.0, "v = {v}");
        }
        for v in 2..300usize {
            assert!(self_certainty_term(&ProbVector::uniform(v)) <= 1e-15);
        }
    }

    #[test]
    fn sparse_self_certainty_spreads_tail_uniformly() {
        // ids 0, 1 stored; the 0.2 tail covers ids 2 and 3 at 0.1 each.
        let sparse = ProbVector::sparse(4, vec![1, 0], vec![0.1, 0.7], 0.2).unwrap();
        let dense = dense(&[0.7, 0.1, 0.1, 0.1]);
        assert_close!(self_certainty_term(&sparse), self_certainty_term(&dense), 1e-12);
        assert_eq!(sparse.prob(3), 0.1);
        assert_eq!(sparse.get(3), None);
    }

    #[test]
    fn ingest_rejects_bad_vectors() {
        assert!(ProbVector::dense(vec![0.5, 0.51]).is_err());
        assert!(ProbVector::dense(vec![0.5, 0.5 + 5e-7]).is_ok());
        assert!(ProbVector::dense(vec![1.5, -0.5]).is_err());
        assert!(ProbVector::sparse(4, vec![1, 1], vec![0.5, 0.5], 0.0).is_err());
        assert!(ProbVector::sparse(4, vec![4], vec![1.0], 0.0).is_err());
        assert!(ProbVector::sparse(4, vec![0], vec![0.5], -0.1).is_err());
        assert!(ProbVector::sparse(2, vec![0, 1], vec![0.5, 0.3], 0.2).is_err());
    }

    #[test]
    fn base2_conversion() {
        let j = jsd(&dense(&[1.0, 0.0]), &dense(&[0.0, 1.0])).unwrap();
        assert_close!(LogBase::Base2.from_nats(j), 1.0, 1e-15);
        assert_eq!(LogBase::Base2.jsd_bound(), 1.0);
    }

    #[test]
    fn sparse_sparse_jsd_identical_is_zero() {
        let p = ProbVector::sparse(100, vec![3, 9], vec![0.5, 0.3], 0.2).unwrap();
        assert_eq!(jsd(&p, &p).unwrap(), 0.0);
        let q = ProbVector::sparse(100, vec![9, 50], vec![0.6, 0.1], 0.3).unwrap();
        let j = jsd(&p, &q).unwrap();
        assert!(j > 0.0 && j <= 2f64.ln());
        assert_close!(j, jsd(&q, &p).unwrap(), 1e-15);
    }
}
