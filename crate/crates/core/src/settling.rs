//! Settling depth and the deep-thinking ratio.
//!
//! For every generated token the lens frame yields one distance per layer
//! between that layer's prediction and the final prediction. A token settles
//! at the first layer where the running minimum of those distances drops to
//! the threshold `g`; it is a deep-thinking token when that layer falls in
//! the late regime selected by the depth fraction `rho`. Layers are 1-based,
//! so layer `L` is the final one.

use serde::{Deserialize, Serialize};

use crate::distributions::{cosine_distance_slices, jsd, jsd_slices, kl_divergence, kl_slices, LogBase};
use crate::error::{Error, Result};
use crate::trace::{LayerLensFrame, LayerPayload, SequenceRecord};

pub const DEFAULT_G: f64 = 0.5;
pub const DEFAULT_RHO: f64 = 0.85;
pub const DEFAULT_G_GRID: [f64; 3] = [0.25, 0.5, 0.75];
pub const DEFAULT_RHO_GRID: [f64; 4] = [0.8, 0.85, 0.9, 0.95];

/// How the depth fraction maps to the first deep-regime layer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeConvention {
    /// Deep regime is `l >= ceil(rho * L)`.
    #[default]
    TopFraction,
    /// Deep when `c_t >= ceil((1 - rho) * L)`.
    Complement,
}

impl std::str::FromStr for RegimeConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top_fraction" | "top-fraction" => Ok(Self::TopFraction),
            "complement" => Ok(Self::Complement),
            other => Err(Error::Configuration(format!("unknown regime convention `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    Jsd,
    Kl,
    Cosine,
}

impl DistanceMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            DistanceMetric::Jsd => "jsd",
            DistanceMetric::Kl => "kl",
            DistanceMetric::Cosine => "cosine",
        }
    }
}

impl std::str::FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsd" => Ok(Self::Jsd),
            "kl" | "kld" => Ok(Self::Kl),
            "cosine" | "cos" => Ok(Self::Cosine),
            other => Err(Error::Configuration(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettlingConfig {
    pub g: f64,
    pub rho: f64,
    pub regime_convention: RegimeConvention,
    pub metric: DistanceMetric,
    pub log_base: LogBase,
}

impl Default for SettlingConfig {
    fn default() -> Self {
        Self {
            g: DEFAULT_G,
            rho: DEFAULT_RHO,
            regime_convention: RegimeConvention::TopFraction,
            metric: DistanceMetric::Jsd,
            log_base: LogBase::Natural,
        }
    }
}

impl SettlingConfig {
    pub fn new(g: f64, rho: f64) -> Result<Self> {
        Self {
            g,
            rho,
            ..Self::default()
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.g.is_finite() && self.g > 0.0) {
            return Err(Error::Configuration(format!(
                "settling threshold g = {} must be > 0",
                self.g
            )));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Configuration(format!(
                "depth fraction rho = {} must lie in (0, 1)",
                self.rho
            )));
        }
        Ok(self)
    }

    pub fn with_g(self, g: f64) -> Self {
        Self { g, ..self }
    }

    pub fn with_rho(self, rho: f64) -> Self {
        Self { rho, ..self }
    }

    /// Identifies what a stored curve depends on: metric and log base.
    pub fn curve_fingerprint(&self) -> String {
        format!("metric={};log_base={}", self.metric.as_str(), self.log_base.as_str())
    }

    /// Full fingerprint including the threshold that fixes settling depths.
    pub fn fingerprint(&self) -> String {
        format!("{};g={}", self.curve_fingerprint(), self.g)
    }
}

/// Layer-wise distances `D_{t,1..L}` of one token to its final prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LensCurve {
    pub metric: DistanceMetric,
    pub distances: Vec<f64>,
}

impl LensCurve {
    pub fn new(metric: DistanceMetric, distances: Vec<f64>) -> Result<Self> {
        if distances.is_empty() {
            return Err(Error::InvalidInput("empty curve".into()));
        }
        if let Some(bad) = distances.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(Error::InvalidInput(format!("invalid distance {bad}")));
        }
        Ok(Self { metric, distances })
    }

    pub fn num_layers(&self) -> usize {
        self.distances.len()
    }

    /// `min_{j <= l} D_j` for every layer.
    pub fn running_min(&self) -> Vec<f64> {
        running_min(&self.distances)
    }
}

pub fn running_min(distances: &[f64]) -> Vec<f64> {
    distances
        .iter()
        .scan(f64::INFINITY, |m, &d| {
            *m = m.min(d);
            Some(*m)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SettlingOutcome {
    pub settling_depth: usize,
    pub regime_start: usize,
    pub is_deep: bool,
}

/// Distances between every layer of `frame` and its final prediction.
pub fn divergence_curve(frame: &LayerLensFrame, metric: DistanceMetric, log_base: LogBase) -> Result<LensCurve> {
    let distances = curve_distances(frame, metric, log_base)?;
    Ok(LensCurve { metric, distances })
}

pub(crate) fn curve_distances(frame: &LayerLensFrame, metric: DistanceMetric, log_base: LogBase) -> Result<Vec<f64>> {
    let num_layers = frame.layers.len();
    if num_layers == 0 {
        return Err(Error::MissingData("frame carries no per-layer distributions".into()));
    }
    match metric {
        DistanceMetric::Cosine => {
            let hidden = frame
                .hidden
                .as_ref()
                .ok_or_else(|| Error::MissingData("cosine metric requires hidden vectors".into()))?;
            if hidden.len() != num_layers {
                return Err(Error::MalformedFrame(format!(
                    "{} hidden vectors for {num_layers} layers",
                    hidden.len()
                )));
            }
            let last = &hidden[num_layers - 1];
            hidden.iter().map(|h| cosine_distance_slices(h, last)).collect()
        }
        DistanceMetric::Jsd | DistanceMetric::Kl => {
            let vocab = frame.vocab_size;
            if let LayerPayload::Dense(fin) = &frame.final_dist {
                if fin.len() != vocab {
                    return Err(Error::MalformedFrame(
                        "final payload size differs from vocabulary".into(),
                    ));
                }
                let mut out = Vec::with_capacity(num_layers);
                for layer in &frame.layers {
                    match layer {
                        LayerPayload::Dense(p) if p.len() == vocab => {
                            let d = match metric {
                                DistanceMetric::Jsd => jsd_slices(fin, p),
                                _ => kl_slices(fin, p),
                            };
                            out.push(log_base.from_nats(d));
                        }
                        _ => {
                            return Err(Error::MalformedFrame(
                                "layer payload does not match final payload".into(),
                            ))
                        }
                    }
                }
                return Ok(out);
            }
            let fin = frame.final_distribution()?;
            frame
                .layers
                .iter()
                .map(|layer| {
                    let p = layer.distribution(vocab)?;
                    let d = match metric {
                        DistanceMetric::Jsd => jsd(&fin, &p)?,
                        _ => kl_divergence(&fin, &p)?,
                    };
                    Ok(log_base.from_nats(d))
                })
                .collect()
        }
    }
}

/// First layer (1-based) at which the running minimum is `<= g`.
///
/// A curve that never reaches `g` is treated as settling at its last layer.
pub fn settling_depth(curve: &LensCurve, g: f64) -> usize {
    settling_depth_of(&curve.distances, g)
}

pub(crate) fn settling_depth_of(distances: &[f64], g: f64) -> usize {
    let mut running = f64::INFINITY;
    for (i, &d) in distances.iter().enumerate() {
        running = running.min(d);
        if running <= g {
            return i + 1;
        }
    }
    distances.len()
}

/// First layer of the deep-thinking regime.
pub fn deep_regime_start(num_layers: usize, rho: f64, convention: RegimeConvention) -> usize {
    let fraction = match convention {
        RegimeConvention::TopFraction => rho,
        RegimeConvention::Complement => 1.0 - rho,
    };
    // Shave rounding noise so that e.g. 0.7 * 10 = 7.000000000000001 ceils to 7.
    let start = (fraction * num_layers as f64 - 1e-9).ceil() as usize;
    start.clamp(1, num_layers)
}

pub fn classify(settling_depth: usize, regime_start: usize) -> SettlingOutcome {
    SettlingOutcome {
        settling_depth,
        regime_start,
        is_deep: settling_depth >= regime_start,
    }
}

/// Deep-thinking ratio of a record with its per-token outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct DtrReport {
    pub dtr: f64,
    pub deep_tokens: usize,
    pub evaluated_tokens: usize,
    pub outcomes: Vec<SettlingOutcome>,
}

/// Number of tokens evaluated for an optional prefix limit.
pub fn prefix_span(len: usize, prefix_len: Option<usize>) -> usize {
    prefix_len.map_or(len, |p| p.min(len))
}

pub fn compute_dtr(record: &SequenceRecord, config: &SettlingConfig, prefix_len: Option<usize>) -> Result<DtrReport> {
    if record.token_ids.is_empty() {
        return Err(Error::EmptySequence);
    }
    if record.frames.is_empty() {
        return Err(Error::MissingData(format!(
            "record {}#{} has no lens frames",
            record.question_id, record.sample_index
        )));
    }
    let span = prefix_span(record.frames.len(), prefix_len);
    let mut outcomes = Vec::with_capacity(span);
    for frame in &record.frames[..span] {
        let distances = curve_distances(frame, config.metric, config.log_base)?;
        let start = deep_regime_start(distances.len(), config.rho, config.regime_convention);
        outcomes.push(classify(settling_depth_of(&distances, config.g), start));
    }
    Ok(dtr_from_outcomes(outcomes))
}

pub fn dtr_from_outcomes(outcomes: Vec<SettlingOutcome>) -> DtrReport {
    let deep_tokens = outcomes.iter().filter(|o| o.is_deep).count();
    let evaluated_tokens = outcomes.len();
    DtrReport {
        dtr: if evaluated_tokens == 0 {
            0.0
        } else {
            deep_tokens as f64 / evaluated_tokens as f64
        },
        deep_tokens,
        evaluated_tokens,
        outcomes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::ProbVector;
    use proptest::prelude::*;

    fn curve(d: &[f64]) -> LensCurve {
        LensCurve::new(DistanceMetric::Jsd, d.to_vec()).unwrap()
    }

    fn brute_force_depth(d: &[f64], g: f64) -> usize {
        (1..=d.len())
            .find(|&l| d[..l].iter().copied().fold(f64::INFINITY, f64::min) <= g)
            .unwrap_or(d.len())
    }

    #[test]
    fn settling_examples() {
        assert_eq!(settling_depth(&curve(&[0.0; 6]), 0.5), 1);
        assert_eq!(settling_depth(&curve(&[0.9, 0.7, 0.55, 0.45, 0.6, 0.0]), 0.5), 4);
        assert_eq!(
            curve(&[0.9, 0.7, 0.55, 0.45, 0.6, 0.0]).running_min(),
            vec![0.9, 0.7, 0.55, 0.45, 0.45, 0.0]
        );
    }

    #[test]
    fn never_settling_curve_uses_last_layer() {
        assert_eq!(settling_depth(&curve(&[0.9, 0.8, 0.7]), 0.5), 3);
    }

    #[test]
    fn regime_start_examples() {
        assert_eq!(deep_regime_start(10, 0.8, RegimeConvention::TopFraction), 8);
        assert_eq!(deep_regime_start(36, 0.85, RegimeConvention::TopFraction), 31);
        assert_eq!(deep_regime_start(10, 0.8, RegimeConvention::Complement), 2);
        assert_eq!(deep_regime_start(10, 0.7, RegimeConvention::TopFraction), 7);
        assert_eq!(deep_regime_start(10, 0.3, RegimeConvention::Complement), 7);
        assert_eq!(deep_regime_start(2, 0.01, RegimeConvention::TopFraction), 1);
        assert_eq!(deep_regime_start(2, 0.99, RegimeConvention::TopFraction), 2);
    }

    #[test]
    fn config_validation() {
        assert!(SettlingConfig::new(0.0, 0.5).is_err());
        assert!(SettlingConfig::new(0.5, 1.0).is_err());
        assert!(SettlingConfig::new(0.5, 0.0).is_err());
        let c = SettlingConfig::default();
        assert_eq!((c.g, c.rho), (0.5, 0.85));
        assert_eq!(c.fingerprint(), "metric=jsd;log_base=natural;g=0.5");
    }

    #[test]
    fn identical_layers_give_zero_curve() {
        let p = vec![0.1f32, 0.2, 0.3, 0.4];
        let frame = LayerLensFrame::dense(vec![p.clone(); 5]).unwrap();
        let c = divergence_curve(&frame, DistanceMetric::Jsd, LogBase::Natural).unwrap();
        assert_eq!(c.distances, vec![0.0; 5]);
    }

    #[test]
    fn prior_then_final_curve() {
        let q = vec![0.7f32, 0.1, 0.1, 0.1];
        let p = vec![0.1f32, 0.1, 0.1, 0.7];
        let frame = LayerLensFrame::dense(vec![q.clone(), p.clone(), p.clone(), p.clone()]).unwrap();
        let c = divergence_curve(&frame, DistanceMetric::Jsd, LogBase::Natural).unwrap();
        let to_pv = |v: &[f32]| ProbVector::dense(v.iter().map(|&x| x as f64).collect()).unwrap();
        let expected = jsd(&to_pv(&p), &to_pv(&q)).unwrap();
        assert!((c.distances[0] - expected).abs() < 1e-15);
        assert_eq!(&c.distances[1..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn rotating_hidden_vectors_give_decreasing_cosine_curve() {
        let angles = [90f64, 60.0, 30.0, 10.0, 0.0];
        let hidden: Vec<Vec<f32>> = angles
            .iter()
            .map(|a| {
                let r = a.to_radians();
                vec![r.cos() as f32, r.sin() as f32]
            })
            .collect();
        let layers = vec![vec![0.5f32, 0.5]; angles.len()];
        let frame = LayerLensFrame::dense(layers).unwrap().with_hidden(hidden);
        let c = divergence_curve(&frame, DistanceMetric::Cosine, LogBase::Natural).unwrap();
        assert!(c.distances.windows(2).all(|w| w[0] > w[1]), "{:?}", c.distances);
        assert_eq!(*c.distances.last().unwrap(), 0.0);
        assert!((c.distances[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cosine_without_hidden_is_missing_data() {
        let frame = LayerLensFrame::dense(vec![vec![0.5f32, 0.5]; 3]).unwrap();
        assert!(matches!(
            divergence_curve(&frame, DistanceMetric::Cosine, LogBase::Natural),
            Err(Error::MissingData(_))
        ));
    }

    #[test]
    fn malformed_layer_is_rejected() {
        let mut frame = LayerLensFrame::dense(vec![vec![0.5f32, 0.5]; 3]).unwrap();
        frame.layers[1] = LayerPayload::Dense(vec![1.0]);
        assert!(matches!(
            divergence_curve(&frame, DistanceMetric::Jsd, LogBase::Natural),
            Err(Error::MalformedFrame(_))
        ));
    }

    fn record_with_depths(depths: &[usize], num_layers: usize) -> SequenceRecord {
        let q = vec![1.0f32, 0.0];
        let p = vec![0.0f32, 1.0];
        let frames = depths
            .iter()
            .map(|&c| {
                let layers = (1..=num_layers)
                    .map(|l| if l < c { q.clone() } else { p.clone() })
                    .collect();
                LayerLensFrame::dense(layers).unwrap()
            })
            .collect();
        SequenceRecord {
            question_id: "q".into(),
            sample_index: 0,
            dataset_tag: "d".into(),
            token_ids: vec![1; depths.len()],
            sampled_token_logprob: vec![0.0; depths.len()],
            frames,
            answer: String::new(),
            is_correct: false,
            answer_start: None,
        }
    }

    #[test]
    fn dtr_examples() {
        let cfg = SettlingConfig::default();
        let all_late = record_with_depths(&[10; 7], 10);
        assert_eq!(compute_dtr(&all_late, &cfg, None).unwrap().dtr, 1.0);

        let cfg8 = SettlingConfig::new(0.5, 0.8).unwrap();
        let mixed = record_with_depths(&[9, 3, 9, 3, 1, 1, 2, 8, 4, 5], 10);
        let r = compute_dtr(&mixed, &cfg8, None).unwrap();
        assert_eq!(r.deep_tokens, 3);
        assert_eq!(r.dtr, 0.3);
        assert_eq!(r.outcomes[0].settling_depth, 9);

        let forty = record_with_depths(&[9; 40], 10);
        assert_eq!(
            compute_dtr(&forty, &cfg, Some(50)).unwrap(),
            compute_dtr(&forty, &cfg, None).unwrap()
        );
        assert_eq!(compute_dtr(&mixed, &cfg8, Some(2)).unwrap().dtr, 0.5);
    }

    #[test]
    fn dtr_errors() {
        let mut empty = record_with_depths(&[], 4);
        assert!(matches!(
            compute_dtr(&empty, &SettlingConfig::default(), None),
            Err(Error::EmptySequence)
        ));
        empty.token_ids = vec![0];
        empty.sampled_token_logprob = vec![0.0];
        assert!(matches!(
            compute_dtr(&empty, &SettlingConfig::default(), None),
            Err(Error::MissingData(_))
        ));
    }

    #[test]
    fn random_curves_match_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let l = rng.gen_range(2..40);
            let mut d: Vec<f64> = (0..l).map(|_| rng.gen_range(0.0..0.7)).collect();
            d[l - 1] = 0.0;
            let g = rng.gen_range(0.01..0.7);
            assert_eq!(settling_depth(&curve(&d), g), brute_force_depth(&d, g));
        }
    }

    proptest! {
        #[test]
        fn running_min_is_weakly_decreasing(d in prop::collection::vec(0.0f64..1.0, 1..30)) {
            let m = running_min(&d);
            prop_assert!(m.windows(2).all(|w| w[1] <= w[0]));
        }

        #[test]
        fn depth_weakly_decreases_in_g(d in prop::collection::vec(0.0f64..0.7, 2..30), g1 in 0.01f64..0.7, g2 in 0.01f64..0.7) {
            let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            let c = curve(&d);
            prop_assert!(settling_depth(&c, hi) <= settling_depth(&c, lo));
        }

        #[test]
        fn regime_start_monotone_in_rho(l in 2usize..80, r1 in 0.01f64..0.99, r2 in 0.01f64..0.99) {
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            prop_assert!(deep_regime_start(l, lo, RegimeConvention::TopFraction) <= deep_regime_start(l, hi, RegimeConvention::TopFraction));
            prop_assert!(deep_regime_start(l, lo, RegimeConvention::Complement) >= deep_regime_start(l, hi, RegimeConvention::Complement));
        }
    }
}
