//! Session state machine. Every state is a pure function of the event log,
//! so replaying the log reproduces scores, threshold and pending item.

use std::sync::Arc;

use retrieve_core::harness::ranking;
use retrieve_core::{ActiveLearner, FusionWeights, Label, LabelState, QueryStrategy, StrategyKind};
use serde::{Deserialize, Serialize};

use crate::collection::Collection;
use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seed {
    pub item: usize,
    pub label: Label,
}

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        session_id: String,
        collection_id: String,
        seeds: Vec<Seed>,
        strategy: QueryStrategy,
        fusion: FusionWeights,
        at_ms: u64,
    },
    /// `round` is absent for volunteer labels, which do not advance it.
    Labeled {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        round: Option<u64>,
        item: usize,
        label: Label,
        volunteer: bool,
        theta: f64,
        at_ms: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub item: usize,
    pub label: Label,
    #[serde(default)]
    pub volunteer: bool,
}

#[derive(Debug, Clone)]
pub struct SessionState {
    pub id: String,
    pub collection: Arc<Collection>,
    pub learner: ActiveLearner,
    pub pending: Option<usize>,
    /// Items by descending score, ties by ascending index.
    pub order: Arc<Vec<usize>>,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub collection_id: String,
    pub strategy: StrategyKind,
    pub round: u64,
    pub theta: f64,
    pub pending_query: Option<usize>,
    pub labeled: usize,
    pub created_ms: u64,
    pub updated_ms: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankedItem {
    pub item: usize,
    pub item_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thumbnail: Option<String>,
    pub score: f64,
    pub predicted: Label,
    pub labeled: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankingPage {
    pub items: Vec<RankedItem>,
    pub theta: f64,
    pub round: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryItem {
    pub item: usize,
    pub score: f64,
    pub round: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LabelResponse {
    pub round: u64,
    pub theta: f64,
    pub queried_next: Option<usize>,
}

fn at_ms(e: &Event) -> u64 {
    match e {
        Event::Created { at_ms, .. } | Event::Labeled { at_ms, .. } => *at_ms,
    }
}

fn pending_item(learner: &ActiveLearner) -> Result<Option<usize>> {
    match learner.select_query() {
        Ok(i) => Ok(Some(i)),
        Err(retrieve_core::Error::PoolExhausted) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

impl SessionState {
    /// Validates seeds and solves the initial state; `created` must be a
    /// `Created` event.
    pub fn start(collection: Arc<Collection>, created: Event) -> Result<Self> {
        let Event::Created {
            session_id,
            collection_id,
            seeds,
            strategy,
            fusion,
            ..
        } = &created
        else {
            return Err(ServiceError::Validation(
                "first event must be `created`".into(),
            ));
        };
        if collection_id != &collection.id {
            return Err(ServiceError::Validation(format!(
                "event names collection `{collection_id}`, not `{}`",
                collection.id
            )));
        }
        if !seeds.iter().any(|s| s.label == Label::Positive) {
            return Err(ServiceError::NoPositiveSeed);
        }
        let mut labels = LabelState::new(collection.config.lambda_reg)?;
        for s in seeds {
            if s.item >= collection.n() {
                return Err(ServiceError::Validation(format!(
                    "seed item {} outside {} items",
                    s.item,
                    collection.n()
                )));
            }
            if labels.contains(s.item) {
                return Err(ServiceError::Validation(format!(
                    "seed item {} given twice",
                    s.item
                )));
            }
            labels.insert(s.item, s.label)?;
        }
        let learner = ActiveLearner::new(
            collection.modalities.clone(),
            fusion.clone(),
            labels,
            *strategy,
            collection.config.step_alpha,
        )
        .map_err(|e| match e {
            retrieve_core::Error::MissingModality(_) | retrieve_core::Error::InvalidWeights(_) => {
                ServiceError::Validation(e.to_string())
            }
            other => other.into(),
        })?;
        let pending = pending_item(&learner)?;
        let order = Arc::new(ranking(&learner.scores().values));
        Ok(Self {
            id: session_id.clone(),
            collection,
            learner,
            pending,
            order,
            events: vec![created],
        })
    }

    /// Rebuilds a session from its full event log.
    pub fn replay(collection: Arc<Collection>, events: Vec<Event>) -> Result<Self> {
        let mut it = events.into_iter();
        let first = it
            .next()
            .ok_or_else(|| ServiceError::Validation("empty event log".into()))?;
        let mut state = Self::start(collection, first)?;
        for e in it {
            let Event::Labeled {
                item,
                label,
                volunteer,
                theta,
                round,
                at_ms,
            } = e
            else {
                return Err(ServiceError::Validation(
                    "`created` event after the first line".into(),
                ));
            };
            let next = state.apply(
                LabelRequest {
                    item,
                    label,
                    volunteer,
                },
                at_ms,
            )?;
            match next.events.last() {
                Some(Event::Labeled {
                    theta: t, round: r, ..
                }) if t.to_bits() == theta.to_bits() && *r == round => {}
                _ => {
                    return Err(ServiceError::Validation(format!(
                        "replayed label on item {item} does not reproduce the logged threshold"
                    )))
                }
            }
            state = next;
        }
        Ok(state)
    }

    /// Returns the successor state; `self` is untouched.
    pub fn apply(&self, req: LabelRequest, at_ms: u64) -> Result<Self> {
        let n = self.collection.n();
        if req.item >= n {
            return Err(ServiceError::Validation(format!(
                "item {} outside {n} items",
                req.item
            )));
        }
        if self.learner.labels().contains(req.item) {
            return Err(ServiceError::AlreadyLabeled(req.item));
        }
        let mut learner = self.learner.clone();
        let round = if req.volunteer {
            learner.volunteer(req.item, req.label)?;
            None
        } else {
            match self.pending {
                None => return Err(ServiceError::PoolExhausted),
                Some(p) if p != req.item => {
                    return Err(ServiceError::NotPendingItem {
                        item: req.item,
                        pending: Some(p),
                    })
                }
                Some(_) => {}
            }
            Some(learner.answer_query(req.item, req.label)?.round)
        };
        let pending = pending_item(&learner)?;
        let order = Arc::new(ranking(&learner.scores().values));
        let mut events = self.events.clone();
        events.push(Event::Labeled {
            round,
            item: req.item,
            label: req.label,
            volunteer: req.volunteer,
            theta: learner.decision_threshold(),
            at_ms,
        });
        Ok(Self {
            id: self.id.clone(),
            collection: Arc::clone(&self.collection),
            learner,
            pending,
            order,
            events,
        })
    }

    pub fn theta(&self) -> f64 {
        self.learner.decision_threshold()
    }

    pub fn round(&self) -> u64 {
        self.learner.threshold().round
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            session_id: self.id.clone(),
            collection_id: self.collection.id.clone(),
            strategy: self.learner.strategy().kind,
            round: self.round(),
            theta: self.theta(),
            pending_query: self.pending,
            labeled: self.learner.labels().len(),
            created_ms: self.events.first().map_or(0, at_ms),
            updated_ms: self.events.last().map_or(0, at_ms),
        }
    }

    pub fn ranking(&self, top_k: usize, offset: usize) -> RankingPage {
        let scores = &self.learner.scores().values;
        let items = self
            .order
            .iter()
            .skip(offset)
            .take(top_k)
            .map(|&i| {
                let rec = &self.collection.items[i];
                RankedItem {
                    item: i,
                    item_id: rec.item_id.clone(),
                    thumbnail: rec.thumbnail.clone(),
                    score: scores[i],
                    predicted: self.learner.predict(i),
                    labeled: self.learner.labels().contains(i),
                }
            })
            .collect();
        RankingPage {
            items,
            theta: self.theta(),
            round: self.round(),
        }
    }

    pub fn query(&self) -> Result<QueryItem> {
        let item = self.pending.ok_or(ServiceError::PoolExhausted)?;
        Ok(QueryItem {
            item,
            score: self.learner.scores().values[item],
            round: self.round(),
        })
    }

    pub fn label_response(&self) -> LabelResponse {
        LabelResponse {
            round: self.round(),
            theta: self.theta(),
            queried_next: self.pending,
        }
    }
}
