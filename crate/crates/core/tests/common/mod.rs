//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, VecDeque};

use chrono::NaiveDateTime;
use fitbot_core::skill::{
    DialogNode, EntityDef, EntityKind, Example, IntentDef, MentionAnnotation, Skill, SkillConfig,
};
use fitbot_core::text::Token;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn reference() -> NaiveDateTime {
    fitbot_core::engine::parse_reference_time("2022-03-02T09:00:00").unwrap()
}

// ---------- edit distance ----------

/// Every string over `alphabet` of length `0..=max_len`.
pub fn all_strings(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut frontier = vec![String::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for c in alphabet {
                next.push(format!("{s}{c}"));
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Shortest edit scripts by breadth-first search over the graph whose nodes
/// are all strings up to `max_len` and whose edges are single insertions,
/// deletions and substitutions. An optimal script can always run its
/// deletions first and insertions last, so bounding intermediate strings by
/// the longer endpoint loses nothing.
pub fn edit_script_distances(
    alphabet: &[char],
    max_len: usize,
) -> HashMap<(String, String), usize> {
    let nodes = all_strings(alphabet, max_len);
    let index: HashMap<&str, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let neighbours: Vec<Vec<usize>> = nodes
        .iter()
        .map(|s| {
            let chars: Vec<char> = s.chars().collect();
            let mut out = Vec::new();
            for i in 0..chars.len() {
                let mut d = chars.clone();
                d.remove(i);
                out.push(d.iter().collect::<String>());
                for c in alphabet {
                    if *c != chars[i] {
                        let mut r = chars.clone();
                        r[i] = *c;
                        out.push(r.iter().collect());
                    }
                }
            }
            if chars.len() < max_len {
                for i in 0..=chars.len() {
                    for c in alphabet {
                        let mut ins = chars.clone();
                        ins.insert(i, *c);
                        out.push(ins.iter().collect());
                    }
                }
            }
            out.iter().map(|n| index[n.as_str()]).collect()
        })
        .collect();
    let mut table = HashMap::new();
    for (src, name) in nodes.iter().enumerate() {
        let mut dist = vec![usize::MAX; nodes.len()];
        dist[src] = 0;
        let mut queue = VecDeque::from([src]);
        while let Some(s) = queue.pop_front() {
            for &n in &neighbours[s] {
                if dist[n] == usize::MAX {
                    dist[n] = dist[s] + 1;
                    queue.push_back(n);
                }
            }
        }
        for (dst, d) in dist.into_iter().enumerate() {
            table.insert((name.clone(), nodes[dst].clone()), d);
        }
    }
    table
}

/// Textbook exponential recursion, for short strings.
pub fn edit_distance_recursive(a: &[char], b: &[char]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = edit_distance_recursive(ra, rb) + usize::from(x != y);
            let del = edit_distance_recursive(ra, b) + 1;
            let ins = edit_distance_recursive(a, rb) + 1;
            sub.min(del).min(ins)
        }
    }
}

// ---------- naive Bayes hand corpus ----------

fn intent(name: &str, examples: &[&str]) -> IntentDef {
    IntentDef {
        name: name.into(),
        examples: examples
            .iter()
            .map(|t| Example {
                text: t.to_string(),
                mentions: vec![],
            })
            .collect(),
    }
}

fn fallback_node() -> DialogNode {
    DialogNode {
        id: "fallback".into(),
        condition: fitbot_core::Condition::AnythingElse,
        responses: vec!["?".into()],
        context_updates: BTreeMap::new(),
        jump_to: None,
    }
}

pub fn skill_with(intents: Vec<IntentDef>, entities: Vec<EntityDef>) -> Skill {
    Skill {
        name: "test".into(),
        language: "en".into(),
        intents,
        entities,
        dialog_nodes: vec![fallback_node()],
        config: SkillConfig::default(),
    }
}

/// Three intents with two examples each. Every intent has four tokens and
/// the eight-word vocabulary gives smoothing denominators of 4 + 8 = 12.
pub fn hand_corpus() -> Skill {
    skill_with(
        vec![
            intent("yoga", &["yoga plan", "morning yoga"]),
            intent("diet", &["diet plan", "healthy diet"]),
            intent("booking", &["book session", "book trainer"]),
        ],
        vec![],
    )
}

/// P(token | intent) on the hand corpus, counted by hand.
pub fn hand_likelihood(intent: &str, token: &str) -> f64 {
    let count = match (intent, token) {
        ("yoga", "yoga") => 2,
        ("yoga", "plan") | ("yoga", "morning") => 1,
        ("diet", "diet") => 2,
        ("diet", "plan") | ("diet", "healthy") => 1,
        ("booking", "book") => 2,
        ("booking", "session") | ("booking", "trainer") => 1,
        _ => 0,
    };
    (count as f64 + 1.0) / 12.0
}

pub const HAND_VOCAB: [&str; 8] = [
    "yoga", "plan", "morning", "diet", "healthy", "book", "session", "trainer",
];

/// Posteriors by direct multiplication: prior 1/3 times the product of the
/// likelihoods of known tokens, normalized.
pub fn hand_posteriors(tokens: &[&str]) -> Vec<(String, f64)> {
    let known: Vec<&str> = tokens
        .iter()
        .copied()
        .filter(|t| HAND_VOCAB.contains(t))
        .collect();
    let joint: Vec<(String, f64)> = ["yoga", "diet", "booking"]
        .iter()
        .map(|i| {
            let p = known
                .iter()
                .fold(1.0 / 3.0, |acc, t| acc * hand_likelihood(i, t));
            (i.to_string(), p)
        })
        .collect();
    let z: f64 = joint.iter().map(|(_, p)| p).sum();
    joint.into_iter().map(|(i, p)| (i, p / z)).collect()
}

// ---------- contextual tagger ----------

fn mention(text: &str, word: &str) -> MentionAnnotation {
    let byte = text.find(word).unwrap();
    let start = text[..byte].chars().count();
    MentionAnnotation {
        entity: "body_part".into(),
        start,
        end: start + word.chars().count(),
        value: word.into(),
    }
}

/// Ten annotated sentences for one contextual entity.
pub fn tagger_corpus() -> Skill {
    let rows: [(&str, &[&str]); 10] = [
        ("train my legs today", &["legs"]),
        ("a workout for arms", &["arms"]),
        ("stretch your back slowly", &["back"]),
        ("schedule chest day", &["chest"]),
        ("I want strong shoulders", &["shoulders"]),
        ("work on my core", &["core"]),
        ("book a session", &[]),
        ("legs and arms please", &["legs", "arms"]),
        ("upper back exercises", &["upper back"]),
        ("schedule a trainer", &[]),
    ];
    let examples = rows
        .iter()
        .map(|(text, words)| Example {
            text: text.to_string(),
            mentions: words.iter().map(|w| mention(text, w)).collect(),
        })
        .collect();
    skill_with(
        vec![IntentDef {
            name: "workout".into(),
            examples,
        }],
        vec![EntityDef {
            name: "body_part".into(),
            kind: EntityKind::Contextual,
            values: vec![],
            patterns: vec![],
            fuzzy: false,
        }],
    )
}

fn shape(word: &str) -> String {
    let mut out: Vec<char> = Vec::new();
    for c in word.chars() {
        let class = match c {
            c if c.is_uppercase() => 'X',
            c if c.is_lowercase() => 'x',
            c if c.is_ascii_digit() => 'd',
            c => c,
        };
        if out.last() != Some(&class) {
            out.push(class);
        }
    }
    out.into_iter().collect()
}

fn oracle_features(tokens: &[Token], i: usize) -> Vec<String> {
    let w: Vec<char> = tokens[i].normalized.chars().collect();
    let take = |n: usize| -> String { w[..n.min(w.len())].iter().collect() };
    let tail = |n: usize| -> String { w[w.len() - n.min(w.len())..].iter().collect() };
    let mut f = vec![
        "bias".to_string(),
        format!("w={}", tokens[i].normalized),
        format!(
            "pw={}",
            if i == 0 {
                "<s>".to_string()
            } else {
                tokens[i - 1].normalized.clone()
            }
        ),
        format!(
            "nw={}",
            tokens
                .get(i + 1)
                .map(|t| t.normalized.clone())
                .unwrap_or("</s>".into())
        ),
        format!("shape={}", shape(&tokens[i].surface)),
    ];
    for n in 1..=3 {
        f.push(format!("p{n}={}", take(n)));
        f.push(format!("s{n}={}", tail(n)));
    }
    f
}

/// Averaged perceptron with eager averaging: after every token the current
/// weights are added to a running sum, and the final model is the sum over
/// the token count.
pub struct OraclePerceptron {
    pub tags: Vec<String>,
    pub weights: HashMap<String, Vec<f64>>,
}

impl OraclePerceptron {
    pub fn train(skill: &Skill, epochs: usize, seed: u64) -> Self {
        let tags = vec!["O".to_string(), "B-body_part".into(), "I-body_part".into()];
        let mut data: Vec<(Vec<Token>, Vec<usize>)> = Vec::new();
        for ex in skill.intents.iter().flat_map(|i| &i.examples) {
            let tokens = fitbot_core::tokenize(&ex.text).unwrap();
            let mut gold = vec![0; tokens.len()];
            for m in &ex.mentions {
                let inside: Vec<usize> = (0..tokens.len())
                    .filter(|&k| tokens[k].start < m.end && m.start < tokens[k].end)
                    .collect();
                for (j, &k) in inside.iter().enumerate() {
                    gold[k] = if j == 0 { 1 } else { 2 };
                }
            }
            data.push((tokens, gold));
        }
        let n = tags.len();
        let mut w: HashMap<String, Vec<f64>> = HashMap::new();
        let mut sum: HashMap<String, Vec<f64>> = HashMap::new();
        let mut steps = 0u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for &s in &order {
                let (tokens, gold) = &data[s];
                for i in 0..tokens.len() {
                    let feats = oracle_features(tokens, i);
                    let mut scores = vec![0.0; n];
                    for f in &feats {
                        if let Some(v) = w.get(f) {
                            for t in 0..n {
                                scores[t] += v[t];
                            }
                        }
                    }
                    let mut guess = 0;
                    for t in 1..n {
                        if scores[t] > scores[guess] {
                            guess = t;
                        }
                    }
                    steps += 1;
                    for (f, v) in &w {
                        let acc = sum.entry(f.clone()).or_insert_with(|| vec![0.0; n]);
                        for t in 0..n {
                            acc[t] += v[t];
                        }
                    }
                    if guess != gold[i] {
                        for f in &feats {
                            let v = w.entry(f.clone()).or_insert_with(|| vec![0.0; n]);
                            v[gold[i]] += 1.0;
                            v[guess] -= 1.0;
                        }
                    }
                }
            }
        }
        let weights = sum
            .into_iter()
            .map(|(f, v)| (f, v.into_iter().map(|x| x / steps as f64).collect()))
            .collect();
        let mut weights: HashMap<String, Vec<f64>> = weights;
        // Features first seen on the very last step never reached the sum.
        for f in w.keys() {
            weights.entry(f.clone()).or_insert_with(|| vec![0.0; n]);
        }
        OraclePerceptron { tags, weights }
    }

    pub fn tag(&self, tokens: &[Token]) -> Vec<String> {
        let mut out: Vec<usize> = Vec::new();
        for i in 0..tokens.len() {
            let mut scores = vec![0.0; self.tags.len()];
            for f in oracle_features(tokens, i) {
                if let Some(v) = self.weights.get(&f) {
                    for t in 0..scores.len() {
                        scores[t] += v[t];
                    }
                }
            }
            let mut best = 0;
            for t in 1..scores.len() {
                if scores[t] > scores[best] {
                    best = t;
                }
            }
            if best == 2 && !matches!(out.last(), Some(1) | Some(2)) {
                best = 1;
            }
            out.push(best);
        }
        out.into_iter().map(|t| self.tags[t].clone()).collect()
    }
}

// ---------- system entity table ----------

/// (input, reference time, entity, rendered value), derived by hand.
pub const SYSTEM_TABLE: [(&str, &str, &str, &str); 25] = [
    ("today", "2022-03-02T09:00:00", "sys_date", "2022-03-02"),
    ("tomorrow", "2022-03-02T09:00:00", "sys_date", "2022-03-03"),
    ("yesterday", "2022-03-01T09:00:00", "sys_date", "2022-02-28"),
    ("tomorrow", "2022-12-31T23:00:00", "sys_date", "2023-01-01"),
    ("on friday", "2022-03-02T09:00:00", "sys_date", "2022-03-04"),
    (
        "on wednesday",
        "2022-03-02T09:00:00",
        "sys_date",
        "2022-03-09",
    ),
    ("monday", "2022-03-06T12:00:00", "sys_date", "2022-03-07"),
    ("march 3rd", "2022-03-02T09:00:00", "sys_date", "2022-03-03"),
    ("Sept 12", "2022-03-02T09:00:00", "sys_date", "2022-09-12"),
    ("dec 25th", "2024-01-10T09:00:00", "sys_date", "2024-12-25"),
    (
        "2022-12-31",
        "2020-01-01T00:00:00",
        "sys_date",
        "2022-12-31",
    ),
    ("at 5pm", "2022-03-02T09:00:00", "sys_time", "17:00"),
    ("at 5:30 pm", "2022-03-02T09:00:00", "sys_time", "17:30"),
    ("07:45", "2022-03-02T09:00:00", "sys_time", "07:45"),
    ("midnight", "2022-03-02T09:00:00", "sys_time", "00:00"),
    ("seven am", "2022-03-02T09:00:00", "sys_time", "07:00"),
    ("12am", "2022-03-02T09:00:00", "sys_time", "00:00"),
    ("twenty one", "2022-03-02T09:00:00", "sys_number", "21"),
    ("1.5 hours", "2022-03-02T09:00:00", "sys_number", "1.5"),
    (
        "twenty-five dollars",
        "2022-03-02T09:00:00",
        "sys_currency",
        "25 USD",
    ),
    ("$20", "2022-03-02T09:00:00", "sys_currency", "20 USD"),
    ("€3.50", "2022-03-02T09:00:00", "sys_currency", "3.5 EUR"),
    ("3-5 sets", "2022-03-02T09:00:00", "sys_range", "3..5"),
    (
        "between 2 and 4 km",
        "2022-03-02T09:00:00",
        "sys_range",
        "2..4",
    ),
    (
        "from ten to twelve",
        "2022-03-02T09:00:00",
        "sys_range",
        "10..12",
    ),
];

pub fn assert_system_table() {
    for (input, reference, entity, value) in SYSTEM_TABLE {
        let reference = fitbot_core::engine::parse_reference_time(reference).unwrap();
        let found = fitbot_core::entity::system::recognize_system(
            &fitbot_core::tokenize(input).unwrap(),
            reference,
        );
        assert_eq!(found.len(), 1, "{input}: {found:?}");
        assert_eq!(found[0].entity, entity, "{input}");
        assert_eq!(found[0].value, value, "{input}");
        assert_eq!(found[0].system.as_ref().unwrap().render(), value);
    }
}

/// Every fuzzy mention scores 1 - d/len against its closest single-word
/// surface form.
pub fn assert_fuzzy_identity() {
    let engine = fitbot_core::fixtures::engine().unwrap();
    let skill = engine.skill();
    let inputs = [
        "I follow a vegn diet",
        "ketto diet",
        "paleoo please",
        "vegetarain meals",
        "veggei",
        "plant basd",
        "a vgean plan",
        "keto",
        "low crab diet",
    ];
    let mut seen = 0;
    for text in inputs {
        let tokens = fitbot_core::tokenize(text).unwrap();
        for m in engine.recognizer().recognize(text, &tokens, reference()) {
            if m.recognizer != RecognizerKind::Fuzzy {
                continue;
            }
            seen += 1;
            let surface = fitbot_core::text::char_slice(text, m.start, m.end).to_lowercase();
            let def = skill.entity(&m.entity).unwrap();
            let target = def
                .values
                .iter()
                .flat_map(|v| std::iter::once(&v.value).chain(&v.synonyms))
                .filter(|s| !s.contains(' '))
                .map(|s| (fitbot_core::levenshtein(&surface, s), s))
                .min()
                .unwrap();
            let d = target.0 as f64;
            assert!(d >= 1.0);
            let expected = 1.0 - d / target.1.chars().count() as f64;
            assert!((m.confidence - expected).abs() < 1e-12, "{text}: {m:?}");
        }
    }
    assert!(seen >= 4, "only {seen} fuzzy mentions");
}

// ---------- random reformulation fixtures ----------

pub const TERM_POOL: [&str; 16] = [
    "yoga", "diet", "plan", "book", "session", "trainer", "slot", "coach", "vegan", "keto", "arms",
    "legs", "time", "date", "meal", "goal",
];

pub const STOPWORD_POOL: [&str; 6] = ["the", "a", "my", "for", "to", "with"];

// ---------- transcripts ----------

pub fn transcript_inputs() -> Vec<String> {
    fitbot_core::transcript::parse(fitbot_core::fixtures::TRANSCRIPT)
        .unwrap()
        .into_iter()
        .map(|t| t.user)
        .collect()
}

// ---------- service harness ----------

use std::sync::Arc;

use fitbot_core::service::{FileSessionStore, FixedClock, Service, SessionStore};

pub fn session_ttl() -> chrono::Duration {
    chrono::Duration::seconds(3600)
}

pub fn fixed_clock() -> Arc<FixedClock> {
    Arc::new(FixedClock::new(
        chrono::DateTime::parse_from_rfc3339("2022-03-02T09:00:00Z")
            .unwrap()
            .with_timezone(&chrono::Utc),
    ))
}

pub fn fixture_service(store: Arc<dyn SessionStore>) -> Service {
    Service::new(Arc::new(fitbot_core::fixtures::engine().unwrap()), store)
        .with_clock(fixed_clock())
}

pub fn message_body(text: &str) -> Vec<u8> {
    serde_json::to_vec(&serde_json::json!({ "input": { "text": text } })).unwrap()
}

/// Response texts of a message reply, one per line.
pub fn reply_lines(body: &[u8]) -> Vec<String> {
    let v: serde_json::Value = serde_json::from_slice(body).unwrap();
    v["output"]["generic"]
        .as_array()
        .unwrap()
        .iter()
        .map(|g| g["text"].as_str().unwrap().to_string())
        .collect()
}

pub fn new_session(svc: &Service) -> String {
    let r = svc.route("POST", "/v2/sessions", b"");
    assert_eq!(r.status, 201);
    let v: serde_json::Value = serde_json::from_slice(&r.body).unwrap();
    v["session_id"].as_str().unwrap().to_string()
}

/// Plays the golden transcript's user lines through the service and renders
/// the replies in transcript form.
pub fn service_transcript(svc: &Service) -> String {
    let id = new_session(svc);
    let mut turns = Vec::new();
    for input in transcript_inputs() {
        let r = svc.route(
            "POST",
            &format!("/v2/sessions/{id}/message"),
            &message_body(&input),
        );
        assert_eq!(r.status, 200);
        turns.push(fitbot_core::transcript::TranscriptTurn {
            user: input,
            responses: reply_lines(&r.body),
        });
    }
    fitbot_core::transcript::render(&turns)
}

/// Captures each turn's stored snapshot and request, then replays the pairs
/// into a fresh store in reverse order; every reply must match byte for byte.
pub fn assert_capture_replay() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(FileSessionStore::open(dir.path(), session_ttl()).unwrap());
    let svc = fixture_service(store.clone());
    let id = new_session(&svc);
    let mut captured = Vec::new();
    for input in transcript_inputs() {
        let snapshot = std::fs::read(store.session_path(&id)).unwrap();
        let body = message_body(&input);
        let r = svc.route("POST", &format!("/v2/sessions/{id}/message"), &body);
        assert_eq!(r.status, 200);
        captured.push((snapshot, body, r.body));
    }

    let replay_dir = tempfile::tempdir().unwrap();
    let replay_store = Arc::new(FileSessionStore::open(replay_dir.path(), session_ttl()).unwrap());
    let replayer = fixture_service(replay_store.clone());
    // Replay in reverse to show each answer depends only on its own pair.
    for (snapshot, body, expected) in captured.iter().rev() {
        std::fs::write(replay_store.session_path(&id), snapshot).unwrap();
        let r = replayer.route("POST", &format!("/v2/sessions/{id}/message"), body);
        assert_eq!(&r.body, expected);
    }
}

/// Two services over one directory, alternating turns, answer exactly like
/// a single service.
pub fn assert_shared_store() {
    let single_dir = tempfile::tempdir().unwrap();
    let single = fixture_service(Arc::new(
        FileSessionStore::open(single_dir.path(), session_ttl()).unwrap(),
    ));

    let shared_dir = tempfile::tempdir().unwrap();
    let a = fixture_service(Arc::new(
        FileSessionStore::open(shared_dir.path(), session_ttl()).unwrap(),
    ));
    let b = fixture_service(Arc::new(
        FileSessionStore::open(shared_dir.path(), session_ttl()).unwrap(),
    ));

    let inputs = transcript_inputs();
    let s1 = new_session(&single);
    let s2 = new_session(&single);
    let p1 = new_session(&a);
    let p2 = new_session(&b);
    for (n, input) in inputs.iter().enumerate() {
        for (k, (sid, pid)) in [(&s1, &p1), (&s2, &p2)].into_iter().enumerate() {
            let body = message_body(input);
            let want = single.route("POST", &format!("/v2/sessions/{sid}/message"), &body);
            let node = if (n + k) % 3 == 0 { &a } else { &b };
            let got = node.route("POST", &format!("/v2/sessions/{pid}/message"), &body);
            assert_eq!(got.status, want.status);
            assert_eq!(got.body, want.body, "turn {n} session {k}");
        }
    }
}

// ---------- proptest generators ----------

use fitbot_core::entity::{EntityMention, RecognizerKind};
use fitbot_core::reformulation::{TaskCatalog, TaskDef, TaskState, UserProfile};
use fitbot_core::skill::{CmpOp, Condition, Literal, VarTest};
use proptest::prelude::*;

pub fn random_utterance() -> impl Strategy<Value = String> {
    let words = prop::sample::select(vec![
        "yoga", "plan", "morning", "diet", "healthy", "book", "session", "trainer", "zebra",
        "blue", "today",
    ]);
    prop::collection::vec(words, 1..8).prop_map(|w| w.join(" "))
}

fn kind() -> impl Strategy<Value = RecognizerKind> {
    prop::sample::select(vec![
        RecognizerKind::Pattern,
        RecognizerKind::Dictionary,
        RecognizerKind::System,
        RecognizerKind::Fuzzy,
        RecognizerKind::Contextual,
    ])
}

pub fn random_mention() -> impl Strategy<Value = EntityMention> {
    (0usize..40, 1usize..8, 0u8..=10, kind(), "[a-c]").prop_map(|(start, len, c, k, e)| {
        EntityMention {
            entity: e.clone(),
            value: e,
            start,
            end: start + len,
            confidence: c as f64 / 10.0,
            recognizer: k,
            system: None,
        }
    })
}

pub fn random_case() -> impl Strategy<Value = (Vec<String>, UserProfile, TaskCatalog, usize)> {
    let term = prop::sample::select(TERM_POOL.to_vec());
    let any_word = prop::sample::select(
        TERM_POOL
            .iter()
            .chain(STOPWORD_POOL.iter())
            .copied()
            .collect::<Vec<_>>(),
    );
    let state =
        prop::collection::btree_map(term.clone().prop_map(String::from), 0.01f64..=1.0, 1..8)
            .prop_map(|terms| TaskState {
                label: "s".into(),
                terms,
            });
    let task = prop::collection::vec(state, 1..4);
    let catalog = prop::collection::vec(task, 1..5).prop_map(|tasks| TaskCatalog {
        tasks: tasks
            .into_iter()
            .enumerate()
            .map(|(i, states)| TaskDef {
                id: format!("t{i}"),
                states,
            })
            .collect(),
    });
    let prof = prop::collection::btree_map(term.prop_map(String::from), 0.0f64..=1.0, 0..10)
        .prop_map(|term_weights| UserProfile {
            user_id: "u".into(),
            term_weights,
            observation_count: 0,
        });
    let query = prop::collection::vec(any_word.prop_map(String::from), 1..8);
    (query, prof, catalog, 0usize..5)
}

fn atom() -> impl Strategy<Value = Condition> {
    prop_oneof![
        "[a-z]{1,6}".prop_map(Condition::IntentIs),
        ("[a-z]{1,6}", prop::option::of("[a-z]{1,6}"))
            .prop_map(|(entity, value)| Condition::EntityPresent { entity, value }),
        "[a-z]{1,6}".prop_map(|name| Condition::Var {
            name,
            test: VarTest::Truthy
        }),
        ("[a-z]{1,6}", 0u32..100).prop_map(|(name, n)| Condition::Var {
            name,
            test: VarTest::Compare(CmpOp::Gt, Literal::Number(n as f64)),
        }),
        Just(Condition::True),
    ]
}

pub fn condition() -> impl Strategy<Value = Condition> {
    atom().prop_recursive(5, 40, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|c| Condition::Not(Box::new(c))),
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Condition::And(Box::new(a), Box::new(b))),
            (inner.clone(), inner).prop_map(|(a, b)| Condition::Or(Box::new(a), Box::new(b))),
        ]
    })
}

/// Minimal-parenthesis text written from the grammar rules alone: `!` binds
/// tightest, then `&&`, then `||`, and both binary operators associate left.
/// `extra` adds redundant parentheses around every atom.
pub fn minimal_text(c: &Condition, extra: bool) -> String {
    fn level(c: &Condition) -> u8 {
        match c {
            Condition::Or(..) => 0,
            Condition::And(..) => 1,
            Condition::Not(..) => 2,
            _ => 3,
        }
    }
    let wrap = |child: &Condition, need: bool| {
        let s = minimal_text(child, extra);
        if need {
            format!("({s})")
        } else {
            s
        }
    };
    match c {
        Condition::Not(x) => format!("!{}", wrap(x, level(x) < 2)),
        Condition::And(l, r) => format!("{} && {}", wrap(l, level(l) < 1), wrap(r, level(r) <= 1)),
        Condition::Or(l, r) => format!("{} || {}", wrap(l, false), wrap(r, level(r) == 0)),
        atom => {
            let s = match atom {
                Condition::True => "true".to_string(),
                Condition::IntentIs(i) => format!("#{i}"),
                Condition::EntityPresent {
                    entity,
                    value: None,
                } => format!("@{entity}"),
                Condition::EntityPresent {
                    entity,
                    value: Some(v),
                } => format!("@{entity}:{v}"),
                Condition::Var {
                    name,
                    test: VarTest::Truthy,
                } => format!("${name}"),
                Condition::Var {
                    name,
                    test: VarTest::Compare(CmpOp::Gt, Literal::Number(n)),
                } => {
                    format!("${name} > {n}")
                }
                other => unreachable!("{other:?}"),
            };
            if extra {
                format!("({s})")
            } else {
                s
            }
        }
    }
}

pub fn fully_parenthesized(c: &Condition) -> String {
    match c {
        Condition::Not(x) => format!("(!{})", fully_parenthesized(x)),
        Condition::And(l, r) => {
            format!("({} && {})", fully_parenthesized(l), fully_parenthesized(r))
        }
        Condition::Or(l, r) => {
            format!("({} || {})", fully_parenthesized(l), fully_parenthesized(r))
        }
        atom => minimal_text(atom, false),
    }
}
