//! Deterministic synthetic corpus and multi-aspect dataset.
//!
//! Every entity owns a set of aspects. Each aspect has a canonical fact
//! sentence (the sub-answer) and several documents paraphrasing parts of it.
//! The first aspect is over-represented, and every entity also has "hub"
//! documents that repeat its name without covering any aspect, plus one
//! overview document stating the first three facts verbatim. Records ask
//! about an entity under a subset of its aspects.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Document;
use crate::dataset::DatasetRecord;
use crate::error::Result;
use crate::jsonl;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub seed: u64,
    pub entities: usize,
    pub aspects_per_entity: usize,
    /// Documents for aspect 0 and for each remaining aspect.
    pub popular_docs: usize,
    pub facet_docs: usize,
    pub hub_docs: usize,
    pub fact_words: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 7,
            entities: 10,
            aspects_per_entity: 4,
            popular_docs: 5,
            facet_docs: 3,
            hub_docs: 5,
            fact_words: 6,
        }
    }
}

impl SynthSpec {
    pub fn docs_per_entity(&self) -> usize {
        self.popular_docs + self.facet_docs * (self.aspects_per_entity - 1) + self.hub_docs + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub documents: Vec<Document>,
    pub records: Vec<DatasetRecord>,
}

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "tr"];
const NUCLEI: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];

struct Lexicon {
    rng: ChaCha8Rng,
    used: BTreeSet<String>,
}

impl Lexicon {
    fn word(&mut self) -> String {
        loop {
            let syllables = self.rng.gen_range(2..=3);
            let w: String = (0..syllables)
                .map(|_| {
                    let onset = ONSETS[self.rng.gen_range(0..ONSETS.len())];
                    let nucleus = NUCLEI[self.rng.gen_range(0..NUCLEI.len())];
                    format!("{onset}{nucleus}")
                })
                .collect();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn words(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.word()).collect()
    }
}

struct Aspect {
    label: Vec<String>,
    facts: Vec<String>,
}

impl Aspect {
    fn sub_answer(&self, entity: &str) -> String {
        format!("{entity} {} {}.", self.label.join(" "), self.facts.join(" "))
    }
}

pub fn generate(spec: &SynthSpec) -> SynthData {
    let mut lex = Lexicon {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        used: BTreeSet::new(),
    };
    let filler = lex.words(40);
    let mut documents = Vec::new();
    let mut records = Vec::new();

    for e in 0..spec.entities {
        let entity = lex.word();
        let aspects: Vec<Aspect> = (0..spec.aspects_per_entity)
            .map(|_| Aspect {
                label: lex.words(2),
                facts: lex.words(spec.fact_words),
            })
            .collect();
        let mut texts = Vec::new();
        for (a, aspect) in aspects.iter().enumerate() {
            let count = if a == 0 { spec.popular_docs } else { spec.facet_docs };
            for _ in 0..count {
                let keep = lex.rng.gen_range(spec.fact_words / 2..=spec.fact_words);
                let mut facts = aspect.facts.clone();
                facts.shuffle(&mut lex.rng);
                facts.truncate(keep);
                let pad: Vec<&str> = (0..3).map(|_| filler[lex.rng.gen_range(0..filler.len())].as_str()).collect();
                texts.push(format!(
                    "{entity} {} {} {entity} {}.",
                    aspect.label.join(" "),
                    facts.join(" "),
                    pad.join(" ")
                ));
            }
        }
        for _ in 0..spec.hub_docs {
            let sentences: Vec<String> = (0..3)
                .map(|_| {
                    let pad: Vec<&str> =
                        (0..4).map(|_| filler[lex.rng.gen_range(0..filler.len())].as_str()).collect();
                    format!("{entity} {}.", pad.join(" "))
                })
                .collect();
            texts.push(sentences.join(" "));
        }
        let overview: Vec<String> = aspects.iter().take(3).map(|a| a.sub_answer(&entity)).collect();
        texts.push(overview.join(" "));
        texts.shuffle(&mut lex.rng);
        for (i, text) in texts.into_iter().enumerate() {
            documents.push(Document::new(format!("e{e:02}-d{i:02}"), entity.clone(), text));
        }

        let subsets: Vec<Vec<usize>> = (0..2)
            .map(|r| {
                let mut chosen = vec![0, 1];
                chosen.push(2 + r % (spec.aspects_per_entity - 2));
                chosen
            })
            .collect();
        for (r, subset) in subsets.into_iter().enumerate() {
            let sub_answers: Vec<String> = subset.iter().map(|&a| aspects[a].sub_answer(&entity)).collect();
            records.push(DatasetRecord {
                id: format!("q{e:02}-{r}"),
                question: format!("what should one know about {entity}"),
                answer: sub_answers.join(" "),
                sub_aspects: subset.iter().map(|&a| aspects[a].label.join(" ")).collect(),
                sub_answers,
                answer_is_concatenation: true,
            });
        }
    }
    SynthData { documents, records }
}

/// Writes `corpus.jsonl` and `dataset.jsonl` into `dir`.
pub fn write_fixture(spec: &SynthSpec, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
    let data = generate(spec);
    jsonl::write(&dir.join("corpus.jsonl"), &data.documents)?;
    jsonl::write(&dir.join("dataset.jsonl"), &data.records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        let spec = SynthSpec::default();
        let data = generate(&spec);
        assert_eq!(spec.docs_per_entity(), 20);
        assert_eq!(data.documents.len(), 200);
        assert_eq!(data.records.len(), 20);
        for r in &data.records {
            assert!(r.validate().unwrap().is_empty());
        }
    }

    #[test]
    fn deterministic() {
        let spec = SynthSpec::default();
        assert_eq!(generate(&spec), generate(&spec));
        let other = SynthSpec { seed: 8, ..spec };
        assert_ne!(generate(&spec), generate(&other));
    }
}
