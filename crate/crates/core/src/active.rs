//! Pool-based active learning over a fused label function.
//!
//! Each round queries one item. The adaptive strategy picks the unlabeled
//! item whose score is closest to a running threshold `Θ` and nudges `Θ` by
//! `1/(α·i)` whenever that item's predicted label was wrong.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{fuse, FusionWeights, Label, LabelFunction, LabelState, Modality};

pub const DEFAULT_STEP_ALPHA: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdState {
    pub theta: f64,
    pub round: u64,
    pub step_alpha: f64,
}

impl ThresholdState {
    /// `Θ = 0` at round 1.
    pub fn new(step_alpha: f64) -> Result<Self> {
        if !(step_alpha > 0.0 && step_alpha.is_finite()) {
            return Err(Error::InfeasibleConfig(format!(
                "step_alpha must be positive, got {step_alpha}"
            )));
        }
        Ok(Self {
            theta: 0.0,
            round: 1,
            step_alpha,
        })
    }

    pub fn step(&self) -> f64 {
        1.0 / (self.step_alpha * self.round as f64)
    }
}

impl Default for ThresholdState {
    fn default() -> Self {
        Self::new(DEFAULT_STEP_ALPHA).expect("valid default")
    }
}

/// Applies one round of the threshold rule using the pre-increment round.
pub fn threshold_update(s: ThresholdState, predicted: Label, actual: Label) -> ThresholdState {
    let theta = match (predicted, actual) {
        (Label::Negative, Label::Positive) => s.theta - s.step(),
        (Label::Positive, Label::Negative) => s.theta + s.step(),
        _ => s.theta,
    };
    ThresholdState {
        theta,
        round: s.round + 1,
        step_alpha: s.step_alpha,
    }
}

/// `+1` strictly above the threshold, `−1` otherwise.
pub fn predict_label(f: &LabelFunction, theta: f64, item: usize) -> Label {
    Label::from_bool(f.values[item] > theta)
}

/// Non-excluded item minimizing `|fᵢ − θ|`; ties go to the lowest index.
pub fn nearest_to_threshold(
    f: &[f64],
    theta: f64,
    excluded: impl Fn(usize) -> bool,
) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in f.iter().enumerate() {
        if excluded(i) {
            continue;
        }
        let d = (v - theta).abs();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::PoolExhausted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Adaptive,
    Constant,
    Random,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Adaptive => "adaptive",
            StrategyKind::Constant => "constant",
            StrategyKind::Random => "random",
        }
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(StrategyKind::Adaptive),
            "constant" => Ok(StrategyKind::Constant),
            "random" => Ok(StrategyKind::Random),
            other => Err(Error::InfeasibleConfig(format!(
                "unknown strategy `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryStrategy {
    pub kind: StrategyKind,
    #[serde(default)]
    pub constant_theta: f64,
    #[serde(default)]
    pub seed: u64,
}

impl QueryStrategy {
    pub fn adaptive() -> Self {
        Self {
            kind: StrategyKind::Adaptive,
            constant_theta: 0.0,
            seed: 0,
        }
    }

    pub fn constant(theta: f64) -> Self {
        Self {
            kind: StrategyKind::Constant,
            constant_theta: theta,
            seed: 0,
        }
    }

    pub fn random(seed: u64) -> Self {
        Self {
            kind: StrategyKind::Random,
            constant_theta: 0.0,
            seed,
        }
    }
}

/// What one labeling step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundOutcome {
    pub item: usize,
    pub label: Label,
    /// Round the label was applied in (pre-increment).
    pub round: u64,
    pub theta_before: f64,
    pub theta_after: f64,
}

/// Live state of one retrieval episode: bases, labels, threshold, scores.
#[derive(Debug, Clone)]
pub struct ActiveLearner {
    modalities: Vec<Modality>,
    fusion: FusionWeights,
    labels: LabelState,
    threshold: ThresholdState,
    strategy: QueryStrategy,
    per_modality: Vec<LabelFunction>,
    fused: LabelFunction,
    /// `true` for items that may be queried; `None` means every item.
    pool: Option<Arc<Vec<bool>>>,
}

impl ActiveLearner {
    pub fn new(
        modalities: Vec<Modality>,
        fusion: FusionWeights,
        labels: LabelState,
        strategy: QueryStrategy,
        step_alpha: f64,
    ) -> Result<Self> {
        let n = modalities
            .first()
            .map(Modality::n)
            .ok_or_else(|| Error::MissingModality("no modality supplied".into()))?;
        if modalities.iter().any(|m| m.n() != n) {
            return Err(Error::dim("modalities cover different item counts"));
        }
        for (name, _) in fusion.iter() {
            if !modalities.iter().any(|m| m.name == name) {
                return Err(Error::MissingModality(name.to_string()));
            }
        }
        let mut learner = Self {
            modalities,
            fusion,
            labels,
            threshold: ThresholdState::new(step_alpha)?,
            strategy,
            per_modality: Vec::new(),
            fused: LabelFunction::new("fused", Vec::new()),
            pool: None,
        };
        learner.resolve()?;
        Ok(learner)
    }

    /// Restricts querying to items flagged `true`.
    pub fn with_pool(mut self, pool: Arc<Vec<bool>>) -> Result<Self> {
        if pool.len() != self.n() {
            return Err(Error::dim(format!(
                "pool mask of length {} for {} items",
                pool.len(),
                self.n()
            )));
        }
        self.pool = Some(pool);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.fused.len()
    }

    pub fn labels(&self) -> &LabelState {
        &self.labels
    }

    pub fn threshold(&self) -> ThresholdState {
        self.threshold
    }

    pub fn strategy(&self) -> QueryStrategy {
        self.strategy
    }

    pub fn fusion(&self) -> &FusionWeights {
        &self.fusion
    }

    pub fn scores(&self) -> &LabelFunction {
        &self.fused
    }

    pub fn modality_scores(&self) -> &[LabelFunction] {
        &self.per_modality
    }

    /// Threshold used to classify: the running `Θ` for the adaptive
    /// strategy, `constant_theta` otherwise.
    pub fn decision_threshold(&self) -> f64 {
        match self.strategy.kind {
            StrategyKind::Adaptive => self.threshold.theta,
            StrategyKind::Constant | StrategyKind::Random => self.strategy.constant_theta,
        }
    }

    pub fn predict(&self, item: usize) -> Label {
        predict_label(&self.fused, self.decision_threshold(), item)
    }

    fn queryable(&self, item: usize) -> bool {
        !self.labels.contains(item) && self.pool.as_ref().is_none_or(|p| p[item])
    }

    /// Item the strategy would query next.
    pub fn select_query(&self) -> Result<usize> {
        match self.strategy.kind {
            StrategyKind::Adaptive => {
                nearest_to_threshold(&self.fused.values, self.threshold.theta, |i| {
                    !self.queryable(i)
                })
            }
            StrategyKind::Constant => {
                nearest_to_threshold(&self.fused.values, self.strategy.constant_theta, |i| {
                    !self.queryable(i)
                })
            }
            StrategyKind::Random => {
                let eligible = (0..self.n()).filter(|&i| self.queryable(i)).count();
                if eligible == 0 {
                    return Err(Error::PoolExhausted);
                }
                let mut rng =
                    ChaCha8Rng::seed_from_u64(round_seed(self.strategy.seed, self.threshold.round));
                let pick = rng.random_range(0..eligible);
                Ok((0..self.n())
                    .filter(|&i| self.queryable(i))
                    .nth(pick)
                    .expect("pick < eligible"))
            }
        }
    }

    /// Records the answer for a queried item: updates `Θ` (adaptive only),
    /// advances the round, adds the label and re-solves.
    pub fn answer_query(&mut self, item: usize, label: Label) -> Result<RoundOutcome> {
        self.check_labelable(item)?;
        let before = self.threshold;
        let next = match self.strategy.kind {
            StrategyKind::Adaptive => threshold_update(
                before,
                predict_label(&self.fused, before.theta, item),
                label,
            ),
            _ => ThresholdState {
                round: before.round + 1,
                ..before
            },
        };
        self.labels.insert(item, label)?;
        self.threshold = next;
        self.resolve()?;
        Ok(RoundOutcome {
            item,
            label,
            round: before.round,
            theta_before: before.theta,
            theta_after: next.theta,
        })
    }

    /// Adds a label the user offered unprompted: no threshold update and no
    /// round advance.
    pub fn volunteer(&mut self, item: usize, label: Label) -> Result<()> {
        self.check_labelable(item)?;
        self.labels.insert(item, label)?;
        self.resolve()
    }

    fn check_labelable(&self, item: usize) -> Result<()> {
        if item >= self.n() {
            return Err(Error::dim(format!(
                "item {item} outside {} items",
                self.n()
            )));
        }
        if self.labels.contains(item) {
            return Err(Error::AlreadyLabeled(item));
        }
        Ok(())
    }

    /// One full round: select, ask the oracle, update, re-solve, re-fuse.
    pub fn run_round(&mut self, oracle: impl FnOnce(usize) -> Label) -> Result<RoundOutcome> {
        let item = self.select_query()?;
        let label = oracle(item);
        self.answer_query(item, label)
    }

    fn resolve(&mut self) -> Result<()> {
        self.per_modality = self
            .modalities
            .iter()
            .map(|m| m.solve(&self.labels))
            .collect::<Result<Vec<_>>>()?;
        let weighted: Vec<LabelFunction> = self
            .per_modality
            .iter()
            .filter(|f| self.fusion.get(&f.modality).is_some())
            .cloned()
            .collect();
        self.fused = fuse(&weighted, &self.fusion)?;
        Ok(())
    }
}

fn round_seed(seed: u64, round: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ round.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::DenseMatrix;
    use crate::solver::{SEMANTIC, VISUAL};
    use approx::assert_abs_diff_eq;
    use retrieve_testkit::XorShift;

    fn lf(v: &[f64]) -> LabelFunction {
        LabelFunction::new("fused", v.to_vec())
    }

    #[test]
    fn nearest_examples() {
        let f = [0.9, -0.2, 0.1];
        assert_eq!(nearest_to_threshold(&f, 0.0, |_| false).unwrap(), 2);
        assert_eq!(
            nearest_to_threshold(&[0.1, -0.1], 0.0, |_| false).unwrap(),
            0
        );
        assert_eq!(nearest_to_threshold(&f, 0.0, |i| i == 2).unwrap(), 1);
        assert!(matches!(
            nearest_to_threshold(&f, 0.0, |_| true),
            Err(Error::PoolExhausted)
        ));
    }

    #[test]
    fn threshold_update_examples() {
        let s = ThresholdState::new(2.0).unwrap();
        let s1 = threshold_update(s, Label::Negative, Label::Positive);
        assert_eq!(s1.theta, -0.5);
        assert_eq!(s1.round, 2);
        let same = threshold_update(s1, Label::Positive, Label::Positive);
        assert_eq!(same.theta, -0.5);
        assert_eq!(same.round, 3);
        let s10 = ThresholdState {
            theta: 0.3,
            round: 10,
            step_alpha: 2.0,
        };
        let up = threshold_update(s10, Label::Positive, Label::Negative);
        assert_abs_diff_eq!(up.theta, 0.3 + 1.0 / 20.0, epsilon = 1e-15);
        assert_abs_diff_eq!(up.theta, 0.35, epsilon = 1e-15);
        assert_eq!(DEFAULT_STEP_ALPHA, 2.0);
        assert!(ThresholdState::new(0.0).is_err());
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict_label(&lf(&[0.5]), 0.0, 0), Label::Positive);
        assert_eq!(predict_label(&lf(&[-0.5]), 0.0, 0), Label::Negative);
        assert_eq!(predict_label(&lf(&[0.25]), 0.25, 0), Label::Negative);
    }

    fn toy_learner(strategy: QueryStrategy) -> ActiveLearner {
        let mut rng = XorShift::new(21);
        let n = 40;
        let visual = Modality::new(
            VISUAL,
            DenseMatrix::new(n, 3, (0..n * 3).map(|_| rng.normal()).collect()).unwrap(),
            vec![0.1, 0.2, 0.3],
        )
        .unwrap();
        let semantic = Modality::new(
            SEMANTIC,
            DenseMatrix::new(n, 2, (0..n * 2).map(|_| rng.normal()).collect()).unwrap(),
            vec![0.05, 0.5],
        )
        .unwrap();
        let labels =
            LabelState::with_labels(100.0, [(0, Label::Positive), (1, Label::Negative)]).unwrap();
        ActiveLearner::new(
            vec![visual, semantic],
            FusionWeights::default(),
            labels,
            strategy,
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn adaptive_first_query_minimizes_abs_score() {
        let learner = toy_learner(QueryStrategy::adaptive());
        let q = learner.select_query().unwrap();
        let f = &learner.scores().values;
        let best = (0..f.len())
            .filter(|&i| i > 1)
            .min_by(|&a, &b| f[a].abs().total_cmp(&f[b].abs()))
            .unwrap();
        assert_eq!(q, best);
    }

    #[test]
    fn constant_matches_adaptive_before_any_update() {
        let a = toy_learner(QueryStrategy::adaptive());
        let c = toy_learner(QueryStrategy::constant(0.0));
        assert_eq!(a.select_query().unwrap(), c.select_query().unwrap());
    }

    #[test]
    fn random_strategy_is_reproducible() {
        let run = || {
            let mut l = toy_learner(QueryStrategy::random(99));
            (0..10)
                .map(|_| l.run_round(|i| Label::from_bool(i % 2 == 0)).unwrap().item)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rounds_grow_labels_and_never_repeat() {
        let mut l = toy_learner(QueryStrategy::adaptive());
        let mut seen = std::collections::HashSet::new();
        for r in 0..38 {
            let before = l.labels().len();
            let out = l.run_round(|i| Label::from_bool(i % 3 == 0)).unwrap();
            assert_eq!(l.labels().len(), before + 1);
            assert!(seen.insert(out.item));
            assert_eq!(out.round, r + 1);
            let d = (out.theta_after - out.theta_before).abs();
            assert!(d == 0.0 || (d - 1.0 / (2.0 * out.round as f64)).abs() < 1e-15);
        }
        assert!(matches!(
            l.run_round(|_| Label::Positive),
            Err(Error::PoolExhausted)
        ));
    }

    #[test]
    fn pool_mask_restricts_queries() {
        let mut mask = vec![false; 40];
        mask[7] = true;
        let mut l = toy_learner(QueryStrategy::random(1))
            .with_pool(Arc::new(mask))
            .unwrap();
        assert_eq!(l.run_round(|_| Label::Negative).unwrap().item, 7);
        assert!(matches!(l.select_query(), Err(Error::PoolExhausted)));
    }

    #[test]
    fn volunteer_skips_threshold_update() {
        let mut l = toy_learner(QueryStrategy::adaptive());
        let before = l.threshold();
        l.volunteer(5, Label::Positive).unwrap();
        assert_eq!(l.threshold(), before);
        assert!(matches!(
            l.volunteer(5, Label::Negative),
            Err(Error::AlreadyLabeled(5))
        ));
    }

    #[test]
    fn adaptive_threshold_tracks_a_fixed_cut() {
        // Monotone static scores; oracle says positive above t*.
        let n = 2000;
        let scores: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 * 2.0 - 1.0).collect();
        let target = 0.37;
        let mut s = ThresholdState::new(2.0).unwrap();
        let mut labeled = vec![false; n];
        for _ in 0..300 {
            let i = nearest_to_threshold(&scores, s.theta, |j| labeled[j]).unwrap();
            labeled[i] = true;
            let gap_before = (s.theta - target).abs();
            let predicted = Label::from_bool(scores[i] > s.theta);
            let actual = Label::from_bool(scores[i] > target);
            let step = s.step();
            s = threshold_update(s, predicted, actual);
            if gap_before > step && predicted != actual {
                assert!((s.theta - target).abs() <= gap_before);
            }
        }
        assert!(
            (s.theta - target).abs() < 0.05,
            "theta {} far from {target}",
            s.theta
        );
    }

    proptest::proptest! {
        #[test]
        fn drift_is_bounded_by_harmonic_sum(flips in proptest::collection::vec((proptest::bool::ANY, proptest::bool::ANY), 1..200)) {
            let mut s = ThresholdState::new(2.0).unwrap();
            let mut drift = 0.0;
            for (p, a) in &flips {
                let next = threshold_update(s, Label::from_bool(*p), Label::from_bool(*a));
                let d = (next.theta - s.theta).abs();
                proptest::prop_assert!(d == 0.0 || (d - s.step()).abs() < 1e-15);
                drift += d;
                s = next;
            }
            let h: f64 = (1..=flips.len()).map(|i| 1.0 / i as f64).sum();
            proptest::prop_assert!(drift <= h / 2.0 + 1e-12);
        }
    }
}
