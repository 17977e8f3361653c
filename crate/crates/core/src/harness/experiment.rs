//! Strategy comparison and step-size cross-validation on synthetic data.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{average_precision, f1_score};
use super::synthetic::{
    generate_synthetic, initial_labels, split, Concept, Dataset, SyntheticConfig,
};
use crate::active::{ActiveLearner, QueryStrategy, StrategyKind};
use crate::error::{Error, Result};
use crate::pipeline::{OfflineBases, PipelineConfig};
use crate::solver::{Label, Modality};

pub const DEFAULT_ALPHAS: [f64; 5] = [0.5, 1.0, 2.0, 4.0, 8.0];

fn default_test_per_class() -> usize {
    20
}

fn default_concepts() -> usize {
    5
}

/// Synthetic data, pipeline constants and protocol sizes in one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub synthetic: SyntheticConfig,
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    #[serde(default = "default_test_per_class")]
    pub test_per_class: usize,
    #[serde(default = "default_concepts")]
    pub eval_concepts: usize,
    #[serde(default = "default_concepts")]
    pub cv_concepts: usize,
    /// Threshold of the constant and random strategies.
    #[serde(default)]
    pub constant_theta: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format("experiment config", e.to_string()))
    }
}

/// Averaged per-round curves; index 0 is before any query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub f1: Vec<f64>,
    pub ap: Vec<f64>,
    pub theta: Vec<f64>,
    pub wall_ms: Vec<f64>,
    /// Items queried in each (concept, seed) cell.
    #[serde(skip)]
    pub queried: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub rounds: usize,
    pub strategies: BTreeMap<String, ExperimentResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCurve {
    pub alpha: f64,
    pub f1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvDocument {
    pub rounds: usize,
    pub curves: Vec<AlphaCurve>,
    pub cv_concepts: Vec<String>,
    pub eval_concepts: Vec<String>,
}

/// Everything a run needs, computed once per config.
#[derive(Debug, Clone)]
pub struct Workbench {
    pub config: ExperimentConfig,
    pub dataset: Dataset,
    pub modalities: Vec<Modality>,
    pub eval: Vec<Concept>,
    pub cv: Vec<Concept>,
}

const CONCEPT_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;
const LABEL_STREAM: u64 = 3;
const QUERY_STREAM: u64 = 4;

/// splitmix64 over the combined inputs.
fn mix(parts: &[u64]) -> u64 {
    let mut z = 0x243F_6A88_85A3_08D3u64;
    for &p in parts {
        z = z.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

fn name_hash(s: &str) -> u64 {
    s.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100_0000_01B3)
    })
}

impl Workbench {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        let dataset = generate_synthetic(&config.synthetic)?;
        let bases = OfflineBases::build(
            &dataset.features,
            &dataset.item_class,
            &dataset.taxonomy,
            &config.pipeline,
        )?;
        let modalities = bases.modalities(&dataset.features, &dataset.item_class)?;

        let per_class = config.synthetic.n / config.synthetic.num_classes;
        let mut eligible: Vec<Concept> = dataset
            .concepts
            .iter()
            .filter(|c| {
                let classes = c.positive_classes.len();
                classes * per_class.saturating_sub(config.test_per_class) >= 9
            })
            .cloned()
            .collect();
        let wanted = config.eval_concepts + config.cv_concepts;
        if config.eval_concepts == 0 || eligible.len() < wanted {
            return Err(Error::InfeasibleConfig(format!(
                "{} usable concepts, {} eval + {} cv requested",
                eligible.len(),
                config.eval_concepts,
                config.cv_concepts
            )));
        }
        eligible.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(&[
            config.synthetic.seed,
            CONCEPT_STREAM,
        ])));
        let cv = eligible[config.eval_concepts..wanted].to_vec();
        eligible.truncate(config.eval_concepts);
        Ok(Self {
            config,
            dataset,
            modalities,
            eval: eligible,
            cv,
        })
    }

    pub fn strategy(&self, kind: StrategyKind) -> QueryStrategy {
        QueryStrategy {
            kind,
            constant_theta: self.config.constant_theta,
            seed: 0,
        }
    }

    /// Every eval concept under one strategy, averaged over concepts and
    /// seeds.
    pub fn compare(
        &self,
        kinds: &[StrategyKind],
        rounds: usize,
        seeds: usize,
        timing: bool,
    ) -> Result<ResultDocument> {
        let mut strategies = BTreeMap::new();
        for &kind in kinds {
            let res = run_cells(
                self,
                &self.eval,
                self.strategy(kind),
                self.config.pipeline.step_alpha,
                rounds,
                seeds,
                timing,
            )?;
            strategies.insert(kind.name().to_string(), res);
        }
        Ok(ResultDocument { rounds, strategies })
    }
}

/// One concept under one strategy, averaged over `seeds` runs.
pub fn run_experiment(
    bench: &Workbench,
    concept: &Concept,
    strategy: QueryStrategy,
    rounds: usize,
    seeds: usize,
    timing: bool,
) -> Result<ExperimentResult> {
    run_cells(
        bench,
        std::slice::from_ref(concept),
        strategy,
        bench.config.pipeline.step_alpha,
        rounds,
        seeds,
        timing,
    )
}

/// Adaptive F1 curves per step size on the cross-validation concepts.
pub fn cross_validate_step_alpha(
    bench: &Workbench,
    alphas: &[f64],
    rounds: usize,
    seeds: usize,
) -> Result<CvDocument> {
    if bench.cv.is_empty() {
        return Err(Error::InfeasibleConfig(
            "no cross-validation concepts".into(),
        ));
    }
    let curves = alphas
        .iter()
        .map(|&alpha| {
            let res = run_cells(
                bench,
                &bench.cv,
                bench.strategy(StrategyKind::Adaptive),
                alpha,
                rounds,
                seeds,
                false,
            )?;
            Ok(AlphaCurve { alpha, f1: res.f1 })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CvDocument {
        rounds,
        curves,
        cv_concepts: bench.cv.iter().map(|c| c.name.clone()).collect(),
        eval_concepts: bench.eval.iter().map(|c| c.name.clone()).collect(),
    })
}

struct Cell {
    f1: Vec<f64>,
    ap: Vec<f64>,
    theta: Vec<f64>,
    wall_ms: Vec<f64>,
    queried: Vec<usize>,
}

fn run_cells(
    bench: &Workbench,
    concepts: &[Concept],
    strategy: QueryStrategy,
    step_alpha: f64,
    rounds: usize,
    seeds: usize,
    timing: bool,
) -> Result<ExperimentResult> {
    if seeds == 0 || concepts.is_empty() {
        return Err(Error::InfeasibleConfig(
            "need at least one seed and one concept".into(),
        ));
    }
    let jobs: Vec<(&Concept, usize)> = concepts
        .iter()
        .flat_map(|c| (0..seeds).map(move |s| (c, s)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(c, s)| run_cell(bench, c, strategy, step_alpha, rounds, s as u64, timing))
        .collect::<Result<Vec<_>>>()?;

    let count = cells.len() as f64;
    let mean = |pick: fn(&Cell) -> &Vec<f64>| -> Vec<f64> {
        (0..=rounds)
            .map(|r| cells.iter().map(|c| pick(c)[r]).sum::<f64>() / count)
            .collect()
    };
    Ok(ExperimentResult {
        f1: mean(|c| &c.f1),
        ap: mean(|c| &c.ap),
        theta: mean(|c| &c.theta),
        wall_ms: mean(|c| &c.wall_ms),
        queried: cells.into_iter().map(|c| c.queried).collect(),
    })
}

fn run_cell(
    bench: &Workbench,
    concept: &Concept,
    mut strategy: QueryStrategy,
    step_alpha: f64,
    rounds: usize,
    seed: u64,
    timing: bool,
) -> Result<Cell> {
    let base = bench.config.synthetic.seed;
    let ds = &bench.dataset;
    let truth = concept.truth(&ds.item_class);
    let chash = name_hash(&concept.name);
    let sp = split(
        &ds.item_class,
        bench.config.test_per_class,
        mix(&[base, SPLIT_STREAM, seed]),
    )?;
    let labels = initial_labels(
        &truth,
        &sp.pool,
        mix(&[base, LABEL_STREAM, chash, seed]),
        bench.config.pipeline.lambda_reg,
    )?;
    strategy.seed = mix(&[base, QUERY_STREAM, chash, seed]);
    let test_truth: Vec<Label> = sp.test.iter().map(|&i| truth[i]).collect();

    let started = Instant::now();
    let mut learner = ActiveLearner::new(
        bench.modalities.clone(),
        bench.config.pipeline.fusion.clone(),
        labels,
        strategy,
        step_alpha,
    )?
    .with_pool(Arc::new(sp.pool_mask(truth.len())))?;
    let mut elapsed = started.elapsed();

    let mut cell = Cell {
        f1: Vec::with_capacity(rounds + 1),
        ap: Vec::with_capacity(rounds + 1),
        theta: Vec::with_capacity(rounds + 1),
        wall_ms: Vec::with_capacity(rounds + 1),
        queried: Vec::with_capacity(rounds),
    };
    for round in 0..=rounds {
        if round > 0 {
            let t = Instant::now();
            let out = learner.run_round(|i| truth[i])?;
            elapsed = t.elapsed();
            cell.queried.push(out.item);
        }
        let scores: Vec<f64> = sp
            .test
            .iter()
            .map(|&i| learner.scores().values[i])
            .collect();
        let theta = learner.decision_threshold();
        let predicted: Vec<Label> = scores
            .iter()
            .map(|&s| Label::from_bool(s > theta))
            .collect();
        cell.f1.push(f1_score(&predicted, &test_truth)?);
        cell.ap.push(average_precision(&scores, &test_truth)?);
        cell.theta.push(theta);
        cell.wall_ms.push(if timing {
            elapsed.as_secs_f64() * 1e3
        } else {
            0.0
        });
    }
    Ok(cell)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "n": 600, "d": 4, "num_classes": 12, "positive_prior": 0.2,
                "cluster_spread": 0.6, "taxonomy_depth": 2, "seed": 3,
                "bins": 40, "k_visual": 8, "k_semantic": 4,
                "test_per_class": 10, "eval_concepts": 2, "cv_concepts": 2
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn zero_rounds_yields_baseline_only() {
        let bench = Workbench::prepare(tiny()).unwrap();
        let r = run_experiment(
            &bench,
            &bench.eval[0],
            QueryStrategy::adaptive(),
            0,
            2,
            false,
        )
        .unwrap();
        assert_eq!(r.f1.len(), 1);
        assert_eq!(r.ap.len(), 1);
        assert_eq!(r.theta, vec![0.0]);
        assert_eq!(r.wall_ms, vec![0.0]);
    }

    #[test]
    fn curves_have_rounds_plus_one_entries_and_are_reproducible() {
        let bench = Workbench::prepare(tiny()).unwrap();
        let kinds = [
            StrategyKind::Adaptive,
            StrategyKind::Constant,
            StrategyKind::Random,
        ];
        let a = bench.compare(&kinds, 5, 2, false).unwrap();
        let b = bench.compare(&kinds, 5, 2, false).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        for res in a.strategies.values() {
            assert_eq!(res.f1.len(), 6);
            assert!(res
                .f1
                .iter()
                .chain(&res.ap)
                .all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(res.queried.len(), 4);
        }
        assert_eq!(a.strategies["adaptive"].theta[0], 0.0);
    }

    #[test]
    fn queries_stay_in_the_pool() {
        let bench = Workbench::prepare(tiny()).unwrap();
        let r = run_experiment(
            &bench,
            &bench.eval[0],
            QueryStrategy::random(0),
            30,
            1,
            false,
        )
        .unwrap();
        let sp = split(&bench.dataset.item_class, 10, mix(&[3, SPLIT_STREAM, 0])).unwrap();
        assert!(r.queried[0]
            .iter()
            .all(|q| sp.pool.binary_search(q).is_ok()));
    }

    #[test]
    fn cv_has_one_curve_per_alpha_on_disjoint_concepts() {
        let bench = Workbench::prepare(tiny()).unwrap();
        let cv = cross_validate_step_alpha(&bench, &DEFAULT_ALPHAS, 3, 1).unwrap();
        assert_eq!(cv.curves.len(), 5);
        assert!(cv.curves.iter().all(|c| c.f1.len() == 4));
        assert!(cv.cv_concepts.iter().all(|c| !cv.eval_concepts.contains(c)));
    }
}
