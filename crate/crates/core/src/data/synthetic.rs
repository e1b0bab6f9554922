//! A seeded stand-in for a four-topic news corpus.
//!
//! Each document is 10 to 20 words. Every word is drawn independently:
//! with probability [`TOPIC_P`] from one of the two topic-word groups of
//! its class (chosen with equal odds), and otherwise from a shared
//! background list. Classes are distinct pairs of four shared groups,
//! arranged so that each task separates the groups along a different
//! axis: the first task splits {0,1} from {2,3} and the second splits
//! {0,2} from {1,3}. Both tasks therefore read the same words.

use super::TextCorpus;
use crate::rng::Rng;

pub const SYNTHETIC_CLASS_NAMES: [&str; 4] = ["world", "sports", "business", "scitech"];

const TOPIC_P: f64 = 0.4;
const MIN_WORDS: usize = 10;
const MAX_WORDS: usize = 20;
/// Topic groups mixed by each class.
const CLASS_GROUPS: [[usize; 2]; 4] = [[0, 1], [2, 3], [0, 2], [1, 3]];

const TOPIC_GROUPS: [&[&str]; 4] = [
    &[
        "government", "minister", "election", "embassy", "treaty", "parliament", "refugees", "diplomat",
        "summit", "border", "president", "rebels",
    ],
    &[
        "coach", "season", "championship", "league", "tournament", "striker", "goalkeeper", "playoff",
        "stadium", "medal", "innings", "quarterback",
    ],
    &[
        "earnings", "shares", "profit", "merger", "investors", "revenue", "quarterly", "stocks", "bank",
        "inflation", "retailer", "dividend",
    ],
    &[
        "software", "internet", "researchers", "processor", "satellite", "genome", "browser", "wireless",
        "telescope", "chip", "laptop", "startup",
    ],
];

const BACKGROUND: &[&str] = &[
    "the", "a", "said", "on", "in", "new", "after", "year", "week", "report", "people", "first", "two",
    "over", "today", "monday", "tuesday", "officials", "according", "group", "plan", "could", "more",
    "than", "amid", "news", "time", "second", "major", "big", "deal", "state", "leaders", "data", "with",
    "from", "by", "its", "will", "last",
];

fn pick<'a>(words: &[&'a str], rng: &mut Rng) -> &'a str {
    words[rng.below(words.len())]
}

/// `per_class` documents of each of the four classes, interleaved by class.
pub fn synthetic_text_corpus(per_class: usize, rng: &mut Rng) -> TextCorpus {
    let mut corpus = TextCorpus { class_count: SYNTHETIC_CLASS_NAMES.len(), ..Default::default() };
    for _ in 0..per_class {
        for (class, groups) in CLASS_GROUPS.iter().enumerate() {
            let len = MIN_WORDS + rng.below(MAX_WORDS - MIN_WORDS + 1);
            let words: Vec<&str> = (0..len)
                .map(|_| {
                    if rng.uniform() < TOPIC_P {
                        pick(TOPIC_GROUPS[groups[rng.below(2)]], rng)
                    } else {
                        pick(BACKGROUND, rng)
                    }
                })
                .collect();
            corpus.texts.push(words.join(" "));
            corpus.labels.push(class);
        }
    }
    corpus
}
