//! Intent detection: exact-example rules, a multinomial Naive Bayes model,
//! a TF-IDF irrelevance check and threshold-based in-scope resolution.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::skill::{Skill, SkillConfig};
use crate::text::{join_normalized, tokenize, Token};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrainingError {
    #[error("skill has no intents")]
    NoIntents,
    #[error("intent '{0}' has no usable tokens")]
    EmptyIntent(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClassifyError {
    #[error("no input token is known to the model")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionSource {
    Rule,
    Statistical,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntentPrediction {
    pub intent: String,
    pub confidence: f64,
    pub source: PredictionSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OosReason {
    BelowThreshold,
    IrrelevantInput,
    NoIntents,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ResolvedIntent {
    InScope(IntentPrediction),
    OutOfScope { reason: OosReason },
}

impl ResolvedIntent {
    pub fn intent(&self) -> Option<&str> {
        match self {
            ResolvedIntent::InScope(p) => Some(&p.intent),
            ResolvedIntent::OutOfScope { .. } => None,
        }
    }

    pub fn is_in_scope(&self) -> bool {
        matches!(self, ResolvedIntent::InScope(_))
    }
}

/// Resolution together with whatever ranking was computed on the way.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolution {
    pub verdict: ResolvedIntent,
    pub ranked: Vec<IntentPrediction>,
    pub similarity: Option<f64>,
}

/// Sparse L2-normalized TF-IDF vector, sorted by term.
pub type SparseVector = Vec<(String, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfIndex {
    pub idf: BTreeMap<String, f64>,
    pub documents: Vec<SparseVector>,
    /// Weight for terms absent from training: the idf of a term seen once.
    pub unseen_idf: f64,
}

impl TfIdfIndex {
    fn build(docs: &[Vec<String>]) -> Self {
        let n = docs.len() as f64;
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in docs {
            let mut terms: Vec<&String> = doc.iter().collect();
            terms.sort();
            terms.dedup();
            for t in terms {
                *df.entry(t.clone()).or_default() += 1;
            }
        }
        let idf: BTreeMap<String, f64> = df
            .into_iter()
            .map(|(t, d)| (t, (n / d as f64).ln()))
            .collect();
        let mut index = TfIdfIndex {
            idf,
            documents: Vec::new(),
            unseen_idf: n.ln(),
        };
        index.documents = docs.iter().map(|d| index.vectorize(d)).collect();
        index
    }

    pub fn vectorize(&self, terms: &[String]) -> SparseVector {
        let mut tf: BTreeMap<&str, f64> = BTreeMap::new();
        for t in terms {
            *tf.entry(t.as_str()).or_default() += 1.0;
        }
        let mut v: SparseVector = tf
            .into_iter()
            .map(|(t, count)| {
                let idf = self.idf.get(t).copied().unwrap_or(self.unseen_idf);
                (t.to_string(), count * idf)
            })
            .filter(|(_, w)| *w != 0.0)
            .collect();
        let norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, w) in &mut v {
                *w /= norm;
            }
        }
        v
    }
}

fn sparse_dot(a: &SparseVector, b: &SparseVector) -> f64 {
    let (mut i, mut j, mut dot) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    dot
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntentModel {
    /// Intent names in document order.
    pub intents: Vec<String>,
    pub class_log_priors: Vec<f64>,
    /// Per intent, log P(token | intent) with add-one smoothing.
    pub token_log_likelihoods: Vec<HashMap<String, f64>>,
    /// Per intent, log-probability given to a vocabulary token it never saw.
    pub unseen_log_likelihood: Vec<f64>,
    pub vocabulary_size: usize,
    pub exact_index: HashMap<String, String>,
    pub tfidf: TfIdfIndex,
}

fn normalized_terms(tokens: &[Token]) -> Vec<String> {
    tokens.iter().map(|t| t.normalized.clone()).collect()
}

impl IntentModel {
    pub fn train(skill: &Skill) -> Result<Self, TrainingError> {
        if skill.intents.is_empty() {
            return Err(TrainingError::NoIntents);
        }
        let mut counts: Vec<BTreeMap<String, usize>> = Vec::new();
        let mut example_counts = Vec::new();
        let mut exact_index = HashMap::new();
        let mut docs = Vec::new();
        for intent in &skill.intents {
            let mut bag: BTreeMap<String, usize> = BTreeMap::new();
            for example in &intent.examples {
                let tokens = tokenize(&example.text).unwrap_or_default();
                exact_index
                    .entry(join_normalized(&tokens))
                    .or_insert_with(|| intent.name.clone());
                let terms = normalized_terms(&tokens);
                for t in &terms {
                    *bag.entry(t.clone()).or_default() += 1;
                }
                docs.push(terms);
            }
            if bag.is_empty() {
                return Err(TrainingError::EmptyIntent(intent.name.clone()));
            }
            example_counts.push(intent.examples.len());
            counts.push(bag);
        }
        exact_index.remove("");

        let mut vocabulary: Vec<&String> = counts.iter().flat_map(|c| c.keys()).collect();
        vocabulary.sort();
        vocabulary.dedup();
        let v = vocabulary.len() as f64;
        let total_examples: usize = example_counts.iter().sum();

        let class_log_priors = example_counts
            .iter()
            .map(|&c| (c as f64 / total_examples as f64).ln())
            .collect();
        let mut token_log_likelihoods = Vec::new();
        let mut unseen_log_likelihood = Vec::new();
        for bag in &counts {
            let total: usize = bag.values().sum();
            let denom = total as f64 + v;
            token_log_likelihoods.push(
                bag.iter()
                    .map(|(t, &c)| (t.clone(), ((c as f64 + 1.0) / denom).ln()))
                    .collect(),
            );
            unseen_log_likelihood.push((1.0 / denom).ln());
        }

        Ok(IntentModel {
            intents: skill.intents.iter().map(|i| i.name.clone()).collect(),
            class_log_priors,
            token_log_likelihoods,
            unseen_log_likelihood,
            vocabulary_size: vocabulary.len(),
            exact_index,
            tfidf: TfIdfIndex::build(&docs),
        })
    }

    pub fn in_vocabulary(&self, token: &str) -> bool {
        self.token_log_likelihoods
            .iter()
            .any(|m| m.contains_key(token))
    }

    /// log P(token | intent) for an in-vocabulary token.
    pub fn log_likelihood(&self, intent: usize, token: &str) -> f64 {
        self.token_log_likelihoods[intent]
            .get(token)
            .copied()
            .unwrap_or(self.unseen_log_likelihood[intent])
    }

    /// Exact match of the normalized utterance against a training example.
    pub fn match_rules(&self, tokens: &[Token]) -> Option<IntentPrediction> {
        self.exact_index
            .get(&join_normalized(tokens))
            .map(|intent| IntentPrediction {
                intent: intent.clone(),
                confidence: 1.0,
                source: PredictionSource::Rule,
            })
    }

    /// Naive Bayes posteriors over all intents, best first. Unknown tokens are
    /// ignored; ties keep document order.
    pub fn classify(&self, tokens: &[Token]) -> Result<Vec<IntentPrediction>, ClassifyError> {
        let known: Vec<&str> = tokens
            .iter()
            .map(|t| t.normalized.as_str())
            .filter(|t| self.in_vocabulary(t))
            .collect();
        if known.is_empty() {
            return Err(ClassifyError::EmptyInput);
        }
        let scores: Vec<f64> = (0..self.intents.len())
            .map(|i| {
                self.class_log_priors[i]
                    + known.iter().map(|t| self.log_likelihood(i, t)).sum::<f64>()
            })
            .collect();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        let mut ranked: Vec<IntentPrediction> = self
            .intents
            .iter()
            .zip(exp)
            .map(|(intent, e)| IntentPrediction {
                intent: intent.clone(),
                confidence: e / z,
                source: PredictionSource::Statistical,
            })
            .collect();
        // Stable sort keeps document order among equal confidences.
        ranked.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        Ok(ranked)
    }

    /// Highest cosine similarity between the utterance and any training
    /// example; 0 for an empty vector.
    pub fn irrelevance_score(&self, tokens: &[Token]) -> f64 {
        let v = self.tfidf.vectorize(&normalized_terms(tokens));
        if v.is_empty() {
            return 0.0;
        }
        self.tfidf
            .documents
            .iter()
            .map(|d| sparse_dot(&v, d))
            .fold(0.0, f64::max)
            .clamp(0.0, 1.0)
    }

    /// Rules first, then the irrelevance floor, then the confidence
    /// threshold (inclusive).
    pub fn resolve(&self, tokens: &[Token], config: &SkillConfig) -> Resolution {
        if let Some(hit) = self.match_rules(tokens) {
            return Resolution {
                ranked: vec![hit.clone()],
                verdict: ResolvedIntent::InScope(hit),
                similarity: Some(1.0),
            };
        }
        let similarity = self.irrelevance_score(tokens);
        if similarity < config.oos_similarity_floor {
            return Resolution {
                verdict: ResolvedIntent::OutOfScope {
                    reason: OosReason::IrrelevantInput,
                },
                ranked: Vec::new(),
                similarity: Some(similarity),
            };
        }
        match self.classify(tokens) {
            Err(ClassifyError::EmptyInput) => Resolution {
                verdict: ResolvedIntent::OutOfScope {
                    reason: OosReason::NoIntents,
                },
                ranked: Vec::new(),
                similarity: Some(similarity),
            },
            Ok(ranked) => {
                let top = &ranked[0];
                let verdict = if top.confidence >= config.intent_threshold {
                    ResolvedIntent::InScope(top.clone())
                } else {
                    ResolvedIntent::OutOfScope {
                        reason: OosReason::BelowThreshold,
                    }
                };
                Resolution {
                    verdict,
                    ranked,
                    similarity: Some(similarity),
                }
            }
        }
    }
}

pub fn train(skill: &Skill) -> Result<IntentModel, TrainingError> {
    IntentModel::train(skill)
}
