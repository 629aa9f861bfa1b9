//! Shipped synthetic fixtures: a separable selector training set, a
//! 30-conversation mixed-pattern benchmark suite, and a stress
//! transcript generator. Everything here is deterministic.
//!
//! The benchmark conversations are engineered at the token level so
//! that each memory structure is genuinely required by one pattern:
//! relational conversations hide the evidence behind a one-hop entity
//! link, temporal ones hide it behind stale high-similarity
//! distractors, and topical ones bury it in a drifting session where
//! only coarse-to-fine topic selection suppresses the distractors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::evalkit::{BenchmarkCase, Turn};
use crate::page::Timestamp;
use crate::selector::{FeatureVector, LabeledExample, FEATURE_DIM};

const NAMES: [&str; 30] = [
    "Alice", "Bob", "Carol", "Dave", "Erin", "Frank", "Grace", "Hugo", "Iris", "Jack",
    "Karen", "Liam", "Mona", "Nolan", "Opal", "Peter", "Quinn", "Rosa", "Sam", "Tess",
    "Uma", "Victor", "Wendy", "Xavier", "Yara", "Zane", "Nadia", "Oscar", "Petra", "Ravi",
];

const CITIES: [&str; 14] = [
    "Berlin", "Lisbon", "Oslo", "Madrid", "Vienna", "Prague", "Dublin", "Athens", "Warsaw",
    "Porto", "Zagreb", "Tallinn", "Riga", "Bergen",
];

const HOUR: Timestamp = 3600;
const DAY: Timestamp = 24 * HOUR;

fn turn_pair(user: String, agent: &str, ts: Timestamp) -> Vec<Turn> {
    vec![
        Turn { speaker: "user".into(), text: user, timestamp: ts },
        Turn { speaker: "agent".into(), text: agent.into(), timestamp: ts + 1 },
    ]
}

/// Relational conversation: two linker pages connect the protagonist to
/// two flatmates; the evidence page mentions the flatmates and the city
/// but shares no tokens with the question except through the entity
/// graph. Lexical distractors repeat question words.
fn graph_case(index: usize) -> BenchmarkCase {
    let p = NAMES[3 * index];
    let q = NAMES[3 * index + 1];
    let r = NAMES[3 * index + 2];
    let city = CITIES[index];
    let wrong: Vec<&str> =
        (1..=3).map(|k| CITIES[(index + k * 3 + 1) % CITIES.len()]).collect();
    let base = 1_700_000_000 + index as Timestamp * 40 * DAY;

    let mut pages: Vec<(String, &str)> = Vec::new();
    pages.push((format!("{p} lives with {q} near Oldtown station."), "Good to know."));
    pages.push((format!("{p} also lives with {r} since spring."), "Noted."));
    for k in 0..3 {
        pages.push((
            format!("Which flavor would you choose for coffee stop g{index}d{k}?"),
            "Hard to say.",
        ));
    }
    let evidence_ordinal = pages.len() as u64;
    pages.push((format!("{q} and {r} moved with {p} to {city} in March."), "Exciting move!"));
    for k in 3..7 {
        pages.push((
            format!("Which flavor would you choose for coffee stop g{index}d{k}?"),
            "Hard to say.",
        ));
    }
    for k in 0..(6 + index % 3) {
        pages.push((
            format!("Evening wind down chatter bit g{index}f{k} feels calm."),
            "Rest well.",
        ));
    }

    let conversation = vec![pages
        .into_iter()
        .enumerate()
        .flat_map(|(i, (user, agent))| turn_pair(user, agent, base + i as Timestamp * HOUR))
        .collect()];

    let question = format!("Which city did the flatmates of {p} choose?");
    let with_choices = index % 2 == 0;
    let (gold_answer, choices) = if with_choices {
        (
            city.to_string(),
            Some(vec![
                wrong[0].to_string(),
                city.to_string(),
                wrong[1].to_string(),
                wrong[2].to_string(),
            ]),
        )
    } else {
        (format!("{q} and {r} moved with {p} to {city} in March"), None)
    };
    BenchmarkCase {
        id: format!("g{index:02}"),
        category: "relational".into(),
        conversation,
        question,
        gold_answer,
        gold_evidence_ids: vec![evidence_ordinal],
        choices,
    }
}

/// Temporal conversation: six stale near-duplicate plan statements
/// outscore the late correction lexically everywhere except under
/// recency-weighted linear retrieval.
fn linear_case(index: usize) -> BenchmarkCase {
    let base = 1_720_000_000 + index as Timestamp * 60 * DAY;
    let mut pages: Vec<(String, &str, Timestamp)> = Vec::new();
    for k in 0..6 {
        pages.push((
            format!("The plan for the harvest festival is the l{index}v{k} barn setup."),
            "Sounds organized.",
            base + k as Timestamp * 12 * HOUR,
        ));
    }
    for k in 0..2 {
        pages.push((
            format!("Quiet l{index}m{k} errand note taken today."),
            "Okay.",
            base + 3 * DAY + k as Timestamp * DAY,
        ));
    }
    let evidence_ordinal = pages.len() as u64;
    pages.push((
        "We changed course: the festival will happen at the lakeside pavilion instead."
            .to_string(),
        "Big change!",
        base + 27 * DAY,
    ));
    // Same-thread follow-ups keep the plan session growing past the
    // structure re-selection threshold once the whole time span is
    // visible.
    for k in 0..2 {
        pages.push((
            format!("Harvest barn setup paperwork l{index}p{k} went out."),
            "Filed.",
            base + 27 * DAY + (k as Timestamp + 1) * HOUR,
        ));
    }
    for k in 2..(9 + index % 3) {
        pages.push((
            format!("Quiet l{index}m{k} errand note taken today."),
            "Okay.",
            base + 27 * DAY + 3 * HOUR + (k as Timestamp - 1) * HOUR / 2,
        ));
    }

    let conversation = vec![pages
        .into_iter()
        .flat_map(|(user, agent, ts)| turn_pair(user, agent, ts))
        .collect()];
    BenchmarkCase {
        id: format!("l{index:02}"),
        category: "temporal".into(),
        conversation,
        question: "What is the plan for the harvest festival?".into(),
        gold_answer: "We changed course: the festival will happen at the lakeside pavilion instead"
            .into(),
        gold_evidence_ids: vec![evidence_ordinal],
        choices: None,
    }
}

/// Topical conversation: one drifting session glued together by a
/// shared core ("garden renovation project"). The distractor pages
/// carry far more question words than the evidence but are near
/// duplicates of query-orthogonal ballast, so they sink into a diluted
/// mixed topic; a benign "winter almanac" topic takes the second
/// coarse-to-fine slot and the evidence topic takes the first.
fn hier_case(index: usize) -> BenchmarkCase {
    let base = 1_740_000_000 + index as Timestamp * 50 * DAY;
    let mut pages: Vec<(String, &str)> = Vec::new();
    pages.push((
        format!("The garden renovation project keeps rolling this month h{index}s0."),
        "Onward.",
    ));

    let ballast = |k: usize| {
        format!("Garden renovation project kettle descaling rota log h{index}b{k}.")
    };
    let distractor = |k: usize| {
        format!(
            "Garden renovation project kettle descaling rota log h{index}d{k} how should i keep the winter going in?"
        )
    };
    let sibling = |k: usize| {
        format!("Garden renovation project means orchid greenhouse humidity h{index}a{k}.")
    };
    let almanac = |k: usize| {
        format!("The garden renovation project winter almanac in h{index}x{k}.")
    };

    // Ballast is seeded before the first distractor arrives so the
    // distractors always have a diluted topic to join.
    pages.push((ballast(0), "Noted."));
    pages.push((ballast(1), "Noted."));
    pages.push((sibling(0), "Good."));
    pages.push((distractor(0), "Maybe."));
    pages.push((ballast(2), "Noted."));
    pages.push((almanac(0), "Filed."));
    let evidence_ordinal = pages.len() as u64;
    pages.push((
        format!(
            "Mist the garden renovation project orchid greenhouse humidity softly h{index}e0."
        ),
        "Will do.",
    ));
    pages.push((distractor(1), "Maybe."));
    pages.push((ballast(3), "Noted."));
    pages.push((sibling(1), "Good."));
    pages.push((ballast(4), "Noted."));
    pages.push((distractor(2), "Maybe."));
    pages.push((almanac(1), "Filed."));
    pages.push((ballast(5), "Noted."));
    pages.push((distractor(3), "Maybe."));
    pages.push((ballast(6), "Noted."));
    pages.push((distractor(4), "Maybe."));
    pages.push((ballast(7), "Noted."));
    pages.push((almanac(2), "Filed."));
    pages.push((distractor(5), "Maybe."));
    pages.push((ballast(8), "Noted."));
    pages.push((ballast(9), "Noted."));
    pages.push((ballast(10), "Noted."));
    pages.push((ballast(11), "Noted."));
    for k in 0..(4 + index % 3) {
        pages.push((format!("Quiet evening h{index}f{k} unwinds slowly."), "Sleep well."));
    }

    let conversation = vec![pages
        .into_iter()
        .enumerate()
        .flat_map(|(i, (user, agent))| turn_pair(user, agent, base + i as Timestamp * HOUR))
        .collect()];
    BenchmarkCase {
        id: format!("h{index:02}"),
        category: "topical".into(),
        conversation,
        question: "How should I keep the orchid greenhouse humidity in winter?".into(),
        gold_answer:
            "Mist the garden renovation project orchid greenhouse humidity softly".into(),
        gold_evidence_ids: vec![evidence_ordinal],
        choices: None,
    }
}

/// The shipped 30-conversation mixed-pattern suite: ten relational, ten
/// temporal, ten topical.
pub fn benchmark_suite() -> Vec<BenchmarkCase> {
    let mut cases = Vec::with_capacity(30);
    for i in 0..10 {
        cases.push(graph_case(i));
    }
    for i in 0..10 {
        cases.push(linear_case(i));
    }
    for i in 0..10 {
        cases.push(hier_case(i));
    }
    cases
}

/// The shipped selector training set: three well-separated Gaussian
/// clusters in feature space, one per structure, with reward vectors
/// consistent with the labels.
pub fn selector_training_set(n: usize, seed: u64) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: [[f64; FEATURE_DIM]; 3] = [
        // Linear: Q&A-ish, temporally dense, topically narrow.
        [16.0, 9.0, 0.3, 0.2, 2.0, 0.2, 1.0, 0.0, 0.0, 650.0, 0.025, 0.45],
        // Graph: entity-dense and entity-centric.
        [16.0, 8.0, 1.8, 0.6, 4.0, 0.5, 0.0, 0.0, 1.0, 15.0, 1.1, 0.75],
        // Hierarchical: many topics, frequent transitions, branching.
        [20.0, 8.0, 0.4, 0.3, 6.0, 0.8, 0.0, 1.0, 0.0, 15.0, 1.3, 0.85],
    ];
    let stds: [f64; FEATURE_DIM] =
        [1.5, 1.0, 0.15, 0.1, 0.5, 0.08, 0.0, 0.0, 0.0, 8.0, 0.1, 0.05];
    let mut examples = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 3;
        let mut raw = [0.0; FEATURE_DIM];
        for d in 0..FEATURE_DIM {
            raw[d] = if stds[d] == 0.0 {
                means[class][d]
            } else {
                Normal::new(means[class][d], stds[d]).unwrap().sample(&mut rng)
            };
        }
        let mut rewards = [0.0; 3];
        for (k, r) in rewards.iter_mut().enumerate() {
            *r = if k == class { 0.9 } else { 0.2 + 0.1 * rng.random::<f64>() };
        }
        examples.push(LabeledExample::from_rewards(FeatureVector(raw), rewards));
    }
    examples
}

/// Random transcript for stress runs: high-diversity pool-token chatter
/// with an occasional first-person fact to exercise semantic
/// consolidation.
pub fn stress_transcript(n: usize, seed: u64) -> Vec<(String, String, Timestamp)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut ts: Timestamp = 1_600_000_000;
    for i in 0..n {
        ts += 30 + rng.random_range(0..90) as Timestamp;
        let user = if i % 47 == 13 {
            format!("I collect pool{} stamps", rng.random_range(0..4000))
        } else {
            let mut words: Vec<String> =
                (0..6).map(|_| format!("pool{}", rng.random_range(0..4000))).collect();
            words.dedup();
            words.join(" ")
        };
        let agent = format!("ack{}", rng.random_range(0..4000));
        out.push((user, agent, ts));
    }
    out
}
