//! Contextual entities: a greedy averaged-perceptron BIO tagger trained on
//! the annotated intent examples.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EntityMention, RecognizerKind};
use crate::skill::{EntityKind, Skill, MIN_CONTEXTUAL_MENTIONS};
use crate::text::{tokenize, Token};

pub const EPOCHS: usize = 5;
pub const SHUFFLE_SEED: u64 = 0x5EED_F17B;
const OUTSIDE: usize = 0;

/// Token shape with runs collapsed: "AB12" -> "Xd", "Arms" -> "Xx".
pub fn word_shape(word: &str) -> String {
    let mut shape = String::new();
    for c in word.chars() {
        let s = if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else if c.is_ascii_digit() {
            'd'
        } else {
            c
        };
        if !shape.ends_with(s) {
            shape.push(s);
        }
    }
    shape
}

fn affix(word: &str, n: usize, prefix: bool) -> String {
    let chars: Vec<char> = word.chars().collect();
    let n = n.min(chars.len());
    if prefix {
        chars[..n].iter().collect()
    } else {
        chars[chars.len() - n..].iter().collect()
    }
}

/// Feature strings for token `i`.
pub fn features(tokens: &[Token], i: usize) -> Vec<String> {
    let word = &tokens[i].normalized;
    let prev = if i == 0 {
        "<s>"
    } else {
        tokens[i - 1].normalized.as_str()
    };
    let next = tokens.get(i + 1).map_or("</s>", |t| t.normalized.as_str());
    let mut feats = vec![
        "bias".to_string(),
        format!("w={word}"),
        format!("pw={prev}"),
        format!("nw={next}"),
        format!("shape={}", word_shape(&tokens[i].surface)),
    ];
    for n in 1..=3 {
        feats.push(format!("p{n}={}", affix(word, n, true)));
        feats.push(format!("s{n}={}", affix(word, n, false)));
    }
    feats
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (t, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = t;
        }
    }
    best
}

/// One annotated training sentence.
#[derive(Debug, Clone)]
pub struct TaggedSentence {
    pub tokens: Vec<Token>,
    pub tags: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextualTagger {
    /// "O", then "B-x" and "I-x" for each contextual entity in skill order.
    pub tags: Vec<String>,
    pub weights: HashMap<String, Vec<f64>>,
}

struct Trainer {
    weights: HashMap<String, Vec<f64>>,
    totals: HashMap<String, Vec<f64>>,
    stamps: HashMap<String, Vec<u64>>,
    instances: u64,
    n_tags: usize,
}

impl Trainer {
    fn scores(&self, feats: &[String]) -> Vec<f64> {
        let mut scores = vec![0.0; self.n_tags];
        for f in feats {
            if let Some(w) = self.weights.get(f) {
                for (s, w) in scores.iter_mut().zip(w) {
                    *s += w;
                }
            }
        }
        scores
    }

    fn bump(&mut self, feature: &str, tag: usize, delta: f64) {
        let n = self.n_tags;
        let w = self
            .weights
            .entry(feature.to_string())
            .or_insert_with(|| vec![0.0; n]);
        let total = self
            .totals
            .entry(feature.to_string())
            .or_insert_with(|| vec![0.0; n]);
        let stamp = self
            .stamps
            .entry(feature.to_string())
            .or_insert_with(|| vec![0; n]);
        total[tag] += (self.instances - stamp[tag]) as f64 * w[tag];
        stamp[tag] = self.instances;
        w[tag] += delta;
    }

    fn averaged(mut self) -> HashMap<String, Vec<f64>> {
        let instances = self.instances.max(1) as f64;
        let mut out = HashMap::new();
        for (feature, w) in self.weights.drain() {
            let total = &self.totals[&feature];
            let stamp = &self.stamps[&feature];
            let avg: Vec<f64> = (0..self.n_tags)
                .map(|t| (total[t] + (self.instances - stamp[t]) as f64 * w[t]) / instances)
                .collect();
            out.insert(feature, avg);
        }
        out
    }
}

impl ContextualTagger {
    /// Tag list for a skill's contextual entities.
    pub fn tag_set(skill: &Skill) -> Vec<String> {
        let mut tags = vec!["O".to_string()];
        for e in skill
            .entities
            .iter()
            .filter(|e| e.kind == EntityKind::Contextual)
        {
            tags.push(format!("B-{}", e.name));
            tags.push(format!("I-{}", e.name));
        }
        tags
    }

    /// BIO-tagged sentences from every intent example, in document order.
    pub fn training_data(skill: &Skill, tags: &[String]) -> Vec<TaggedSentence> {
        let tag_index = |t: &str| tags.iter().position(|x| x == t);
        let mut data = Vec::new();
        for example in skill.intents.iter().flat_map(|i| &i.examples) {
            let Ok(tokens) = tokenize(&example.text) else {
                continue;
            };
            let mut gold = vec![OUTSIDE; tokens.len()];
            for m in &example.mentions {
                let Some(b) = tag_index(&format!("B-{}", m.entity)) else {
                    continue;
                };
                let mut first = true;
                for (i, t) in tokens.iter().enumerate() {
                    if t.start < m.end && m.start < t.end {
                        gold[i] = if first { b } else { b + 1 };
                        first = false;
                    }
                }
            }
            data.push(TaggedSentence { tokens, tags: gold });
        }
        data
    }

    /// Trains when at least one contextual entity has enough annotations.
    pub fn train(skill: &Skill) -> Option<Self> {
        let enough = skill
            .entities
            .iter()
            .filter(|e| e.kind == EntityKind::Contextual)
            .any(|e| {
                skill
                    .intents
                    .iter()
                    .flat_map(|i| &i.examples)
                    .flat_map(|x| &x.mentions)
                    .filter(|m| m.entity == e.name)
                    .count()
                    >= MIN_CONTEXTUAL_MENTIONS
            });
        if !enough {
            return None;
        }
        let tags = Self::tag_set(skill);
        let data = Self::training_data(skill, &tags);
        Some(Self::fit(tags, &data))
    }

    pub fn fit(tags: Vec<String>, data: &[TaggedSentence]) -> Self {
        let mut trainer = Trainer {
            weights: HashMap::new(),
            totals: HashMap::new(),
            stamps: HashMap::new(),
            instances: 0,
            n_tags: tags.len(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(SHUFFLE_SEED);
        let mut order: Vec<usize> = (0..data.len()).collect();
        for _ in 0..EPOCHS {
            order.shuffle(&mut rng);
            for &s in &order {
                let sentence = &data[s];
                for i in 0..sentence.tokens.len() {
                    let feats = features(&sentence.tokens, i);
                    let guess = argmax(&trainer.scores(&feats));
                    let truth = sentence.tags[i];
                    trainer.instances += 1;
                    if guess != truth {
                        for f in &feats {
                            trainer.bump(f, truth, 1.0);
                            trainer.bump(f, guess, -1.0);
                        }
                    }
                }
            }
        }
        ContextualTagger {
            tags,
            weights: trainer.averaged(),
        }
    }

    fn scores(&self, feats: &[String]) -> Vec<f64> {
        let mut scores = vec![0.0; self.tags.len()];
        for f in feats {
            if let Some(w) = self.weights.get(f) {
                for (s, w) in scores.iter_mut().zip(w) {
                    *s += w;
                }
            }
        }
        scores
    }

    /// Greedy tags with each decision's margin over the runner-up. An `I-x`
    /// that does not continue an `x` span is repaired to `B-x`.
    pub fn tag(&self, tokens: &[Token]) -> Vec<(String, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(tokens.len());
        for i in 0..tokens.len() {
            let scores = self.scores(&features(tokens, i));
            let best = argmax(&scores);
            let runner_up = scores
                .iter()
                .enumerate()
                .filter(|(t, _)| *t != best)
                .map(|(_, s)| *s)
                .fold(f64::NEG_INFINITY, f64::max);
            let margin = if runner_up.is_finite() {
                scores[best] - runner_up
            } else {
                0.0
            };
            let mut tag = best;
            // Odd indices are B- tags, even non-zero ones are I- tags.
            if tag != OUTSIDE && tag.is_multiple_of(2) {
                let continues = out.last().is_some_and(|&(p, _)| p == tag || p == tag - 1);
                if !continues {
                    tag -= 1;
                }
            }
            out.push((tag, margin));
        }
        out.into_iter()
            .map(|(t, m)| (self.tags[t].clone(), m))
            .collect()
    }

    pub fn recognize(&self, tokens: &[Token]) -> Vec<EntityMention> {
        let tagged = self.tag(tokens);
        let mut mentions = Vec::new();
        let mut i = 0;
        while i < tagged.len() {
            let Some(entity) = tagged[i].0.strip_prefix("B-") else {
                i += 1;
                continue;
            };
            let inside = format!("I-{entity}");
            let mut j = i + 1;
            while j < tagged.len() && tagged[j].0 == inside {
                j += 1;
            }
            let positive = tagged[i..j].iter().filter(|(_, m)| *m > 0.0).count();
            let confidence = (positive as f64 / (j - i) as f64).max(0.5);
            mentions.push(EntityMention {
                entity: entity.to_string(),
                value: tokens[i..j]
                    .iter()
                    .map(|t| t.normalized.as_str())
                    .collect::<Vec<_>>()
                    .join(" "),
                start: tokens[i].start,
                end: tokens[j - 1].end,
                confidence,
                recognizer: RecognizerKind::Contextual,
                system: None,
            });
            i = j;
        }
        mentions
    }
}
