//! Deterministic synthetic corpora for tests, benches and demos.
//!
//! The QA corpus has 20 questions over all six question types. Each question
//! owns an 8-session haystack, and the gold answer appears only in its gold
//! session(s). Some questions share vocabulary with their gold turn and some
//! do not, so lexical retrieval finds a subset of answers.

use std::collections::BTreeSet;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::{BenchmarkQuestion, Dataset, QuestionType, Session, Turn};
use crate::store::{EpisodicEntry, SemanticFact};

/// Seed behind the shipped fixture.
pub const QA_SEED: u64 = 20240601;

pub const QA_SESSIONS_PER_QUESTION: usize = 8;

const TURNS_PER_SESSION: usize = 4;

struct Item {
    ty: QuestionType,
    question: &'static str,
    answer: &'static str,
    role: &'static str,
    /// Key turn of each gold session, oldest first.
    gold: &'static [&'static str],
}

const ITEMS: [Item; 20] = [
    Item {
        ty: QuestionType::SingleSessionUser,
        question: "What is the name of my dog?",
        answer: "Biscuit",
        role: "user",
        gold: &["My dog is named Biscuit and he is three years old."],
    },
    Item {
        ty: QuestionType::SingleSessionUser,
        question: "Which city did I relocate to last spring?",
        answer: "Tallinn",
        role: "user",
        gold: &["Last spring I relocated to Tallinn for a new job."],
    },
    Item {
        ty: QuestionType::SingleSessionUser,
        question: "What instrument am I learning?",
        answer: "cello",
        role: "user",
        gold: &["Lately I practise the cello every evening after dinner."],
    },
    Item {
        ty: QuestionType::SingleSessionUser,
        question: "What is my employee badge number?",
        answer: "88412",
        role: "user",
        gold: &["Employee badge number: 88412"],
    },
    Item {
        ty: QuestionType::SingleSessionAssistant,
        question: "What book did you recommend to me?",
        answer: "Piranesi",
        role: "assistant",
        gold: &["I recommend the book Piranesi by Susanna Clarke."],
    },
    Item {
        ty: QuestionType::SingleSessionAssistant,
        question: "What temperature did you suggest for baking bread?",
        answer: "230 degrees",
        role: "assistant",
        gold: &["Put the loaf in at 230 degrees for forty minutes."],
    },
    Item {
        ty: QuestionType::SingleSessionAssistant,
        question: "Which port did you tell me to open on the server firewall?",
        answer: "8443",
        role: "assistant",
        gold: &["Open port 8443 on the server firewall and restart nginx."],
    },
    Item {
        ty: QuestionType::KnowledgeUpdate,
        question: "Where do I park my car now?",
        answer: "Harbor lot",
        role: "user",
        gold: &[
            "I park my car in the Elm Street garage.",
            "Since last week I park my car at the Harbor lot instead.",
        ],
    },
    Item {
        ty: QuestionType::KnowledgeUpdate,
        question: "What is my current phone plan?",
        answer: "Unlimited Max",
        role: "user",
        gold: &[
            "My phone plan is Basic Five.",
            "I switched my phone plan to Unlimited Max.",
        ],
    },
    Item {
        ty: QuestionType::KnowledgeUpdate,
        question: "Who is my manager after the reorg?",
        answer: "Omar Castellanos",
        role: "user",
        gold: &[
            "My manager is Dana Whitfield.",
            "Following the restructuring I report to Omar Castellanos.",
        ],
    },
    Item {
        ty: QuestionType::TemporalReasoning,
        question: "What did I buy on the day of the marathon?",
        answer: "foam roller",
        role: "user",
        gold: &["On marathon day I bought a foam roller."],
    },
    Item {
        ty: QuestionType::TemporalReasoning,
        question: "Which restaurant did I have dinner at in January?",
        answer: "Saffron House",
        role: "user",
        gold: &["In January I had dinner at Saffron House with my parents."],
    },
    Item {
        ty: QuestionType::TemporalReasoning,
        question: "When is my dentist appointment?",
        answer: "March 14",
        role: "user",
        gold: &["Dentist appointment: March 14"],
    },
    Item {
        ty: QuestionType::MultiSession,
        question: "How many countries have I visited in total?",
        answer: "seven",
        role: "user",
        gold: &[
            "This year I visited Peru and Chile.",
            "After Japan my count of visited countries is seven in total.",
        ],
    },
    Item {
        ty: QuestionType::MultiSession,
        question: "Which two languages am I studying?",
        answer: "Portuguese and Korean",
        role: "user",
        gold: &[
            "I started studying Portuguese on a language app.",
            "So now I am studying Portuguese and Korean at the same time.",
        ],
    },
    Item {
        ty: QuestionType::MultiSession,
        question: "What hobby do I share with my sister?",
        answer: "bouldering",
        role: "user",
        gold: &[
            "Nina has been into bouldering for years.",
            "Went to the climbing gym with Nina and we both loved bouldering.",
        ],
    },
    Item {
        ty: QuestionType::MultiSession,
        question: "What codename did my team pick for the project?",
        answer: "Bluefin",
        role: "user",
        gold: &[
            "The kickoff meeting went well.",
            "The team picked the codename Bluefin for the project.",
        ],
    },
    Item {
        ty: QuestionType::SingleSessionPreference,
        question: "What kind of coffee do I prefer?",
        answer: "oat milk flat white",
        role: "user",
        gold: &["I prefer an oat milk flat white over anything else."],
    },
    Item {
        ty: QuestionType::SingleSessionPreference,
        question: "Which seat do I like on flights?",
        answer: "aisle seat",
        role: "user",
        gold: &["On planes I always pick the aisle seat."],
    },
    Item {
        ty: QuestionType::SingleSessionPreference,
        question: "What music do I like while working?",
        answer: "lo-fi jazz",
        role: "user",
        gold: &["Lo-fi jazz keeps me focused."],
    },
];

const FILLER_USER: [&str; 24] = [
    "Can you help me plan meals for the week?",
    "I went for a long walk in the park this morning.",
    "What do you think about working from home?",
    "My neighbour is renovating the kitchen again.",
    "Remind me to water the plants tomorrow.",
    "I watched a documentary about deep sea creatures.",
    "The train was late again today.",
    "How do I fix a squeaky door hinge?",
    "I need a gift idea for a coworker.",
    "The weather has been strange this week.",
    "Can you summarise the news for me?",
    "I am thinking about repainting the living room.",
    "My laptop battery drains really fast.",
    "What is a good stretch for lower back pain?",
    "I cleaned out the garage over the weekend.",
    "Do you know any good podcasts about history?",
    "We had a team lunch on Friday.",
    "I keep forgetting where I put my keys.",
    "How long should I boil an egg?",
    "I signed up for a pottery class.",
    "The printer at the office jammed twice.",
    "Can you suggest a short book for the weekend?",
    "My sister called to talk about the holidays.",
    "I tried a new recipe with lentils last night.",
];

const FILLER_ASSISTANT: [&str; 16] = [
    "Sure, happy to help with that.",
    "That sounds like a nice way to spend the day.",
    "Here are a few ideas you could try.",
    "It depends on your schedule and budget.",
    "A little lubricant usually solves that.",
    "I would start with something simple.",
    "Let me know if you want more detail.",
    "That is a common problem and easy to fix.",
    "Good question, there are several options.",
    "Try it for a week and see how it feels.",
    "I can put together a checklist if useful.",
    "That makes sense given the circumstances.",
    "Many people find that helpful.",
    "You might also consider asking a professional.",
    "Eight to ten minutes works for most people.",
    "Keeping a routine often helps.",
];

fn filler_turn(rng: &mut ChaCha8Rng, position: usize) -> Turn {
    if position.is_multiple_of(2) {
        Turn {
            role: "user".into(),
            content: (*FILLER_USER.choose(rng).expect("nonempty")).into(),
        }
    } else {
        Turn {
            role: "assistant".into(),
            content: (*FILLER_ASSISTANT.choose(rng).expect("nonempty")).into(),
        }
    }
}

fn base_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 5, 1, 9, 0, 0).single().expect("valid date")
}

fn build_question(idx: usize, item: &Item, rng: &mut ChaCha8Rng) -> BenchmarkQuestion {
    let qid = format!("syn-{idx:02}");
    let mut slots: Vec<usize> = (0..QA_SESSIONS_PER_QUESTION).collect();
    slots.shuffle(rng);
    let mut gold_slots: Vec<usize> = slots[..item.gold.len()].to_vec();
    gold_slots.sort_unstable();

    let base = base_time();
    let mut sessions = Vec::with_capacity(QA_SESSIONS_PER_QUESTION);
    let mut answer_session_ids = Vec::new();
    for slot in 0..QA_SESSIONS_PER_QUESTION {
        let session_id = format!("{qid}-s{slot}");
        let mut turns: Vec<Turn> = (0..TURNS_PER_SESSION).map(|p| filler_turn(rng, p)).collect();
        if let Some(g) = gold_slots.iter().position(|&s| s == slot) {
            let at = rng.random_range(0..TURNS_PER_SESSION);
            turns[at] = Turn {
                role: item.role.into(),
                content: item.gold[g].into(),
            };
            answer_session_ids.push(session_id.clone());
        }
        sessions.push(Session {
            session_id,
            date: base + Duration::days(3 * slot as i64) + Duration::hours(rng.random_range(0..10)),
            turns,
        });
    }
    BenchmarkQuestion {
        question_id: qid,
        question_type: item.ty,
        question: item.question.into(),
        answer: item.answer.into(),
        question_date: Some(base + Duration::days(30)),
        sessions,
        answer_session_ids,
    }
}

/// The 20-question corpus for a given seed.
pub fn qa_corpus_with_seed(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Dataset {
        questions: ITEMS
            .iter()
            .enumerate()
            .map(|(i, item)| build_question(i, item, &mut rng))
            .collect(),
    }
}

/// The corpus shipped as `fixtures/synthetic_qa.jsonl`.
pub fn qa_corpus() -> Dataset {
    qa_corpus_with_seed(QA_SEED)
}

/// `copies` independently seeded versions of the corpus with distinct
/// question and session ids, for load testing.
pub fn qa_corpus_scaled(copies: usize, seed: u64) -> Dataset {
    let mut questions = Vec::new();
    for c in 0..copies {
        for mut q in qa_corpus_with_seed(seed.wrapping_add(c as u64)).questions {
            let rename = |id: &str| format!("c{c}-{id}");
            q.question_id = rename(&q.question_id);
            for s in &mut q.sessions {
                s.session_id = rename(&s.session_id);
            }
            q.answer_session_ids = q.answer_session_ids.iter().map(|id| rename(id)).collect();
            questions.push(q);
        }
    }
    Dataset { questions }
}

/// The shipped fixture file, parsed at compile time.
pub const QA_FIXTURE: &str = include_str!("../fixtures/synthetic_qa.jsonl");

/// A single project spread over 53 sessions where every semantic fact comes
/// from at most three of them.
#[derive(Debug, Clone)]
pub struct ScopingCorpus {
    pub entries: Vec<EpisodicEntry>,
    pub facts: Vec<SemanticFact>,
    pub queries: Vec<String>,
    /// Sessions that hold any fact.
    pub fact_sessions: BTreeSet<String>,
    pub now: DateTime<Utc>,
}

pub const SCOPING_SESSIONS: usize = 53;
pub const SCOPING_PROJECT: &str = "scoping";

pub fn scoping_corpus() -> ScopingCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let base = base_time();
    let hot = [7usize, 19, 41];
    let sid = |i: usize| format!("sc-{i:02}");
    let mut entries = Vec::new();
    for i in 0..SCOPING_SESSIONS {
        for p in 0..3 {
            let content = if hot.contains(&i) && p == 0 {
                match i {
                    7 => "The Aurora launch is scheduled for October with the Lisbon team.".to_string(),
                    19 => "Aurora budget review: the launch budget grew to 40k.".to_string(),
                    _ => "Marta owns the Aurora launch checklist.".to_string(),
                }
            } else {
                filler_turn(&mut rng, p).content
            };
            entries.push(EpisodicEntry::new(
                format!("{}#{p}", sid(i)),
                base + Duration::days(i as i64) + Duration::minutes(p as i64),
                sid(i),
                if p % 2 == 0 { "user" } else { "assistant" },
                SCOPING_PROJECT,
                content,
            ));
        }
    }
    let fact = |n: usize, subject: &str, relation: &str, value: &str, sessions: &[usize]| SemanticFact {
        id: format!("fact-{n}"),
        subject: subject.into(),
        relation: relation.into(),
        value: value.into(),
        session_ids: sessions.iter().map(|&i| sid(i)).collect(),
        source_entry_ids: sessions.iter().map(|&i| format!("{}#0", sid(i))).collect(),
        created_at: base + Duration::days(60),
    };
    let facts = vec![
        fact(0, "Aurora launch", "scheduled_for", "October", &[7]),
        fact(1, "Aurora launch", "team", "Lisbon", &[7]),
        fact(2, "Aurora launch budget", "is", "40k", &[19]),
        fact(3, "Aurora launch checklist", "owner", "Marta", &[41]),
        fact(4, "Aurora", "mentioned_in", "launch planning", &[7, 19, 41]),
    ];
    let fact_sessions = facts.iter().flat_map(|f| f.session_ids.iter().cloned()).collect();
    ScopingCorpus {
        entries,
        facts,
        queries: vec![
            "When is the Aurora launch?".into(),
            "What is the Aurora launch budget?".into(),
            "Who owns the Aurora checklist?".into(),
            "Which team runs the launch?".into(),
        ],
        fact_sessions,
        now: base + Duration::days(70),
    }
}
