//! Character-level corpora and the credential-style synthetic text.

use std::collections::BTreeSet;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::models::{Batch, RiskTag};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Text encoded as token ids over a character vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharCorpus {
    pub ids: Vec<u32>,
    vocab: Vec<char>,
}

impl CharCorpus {
    pub fn vocab(&self) -> &[char] {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Builds a corpus from an explicit vocabulary (e.g. one saved with a model).
    pub fn with_vocab(vocab: Vec<char>, text: &str) -> Result<Self> {
        let unique: BTreeSet<char> = vocab.iter().copied().collect();
        if unique.len() != vocab.len() {
            return Err(Error::Input(
                "vocabulary contains duplicate characters".into(),
            ));
        }
        let mut corpus = CharCorpus {
            ids: Vec::new(),
            vocab,
        };
        corpus.ids = corpus.encode(text)?;
        Ok(corpus)
    }

    pub fn encode(&self, text: &str) -> Result<Vec<u32>> {
        text.chars()
            .map(|c| {
                self.vocab
                    .iter()
                    .position(|&v| v == c)
                    .map(|i| i as u32)
                    .ok_or_else(|| {
                        Error::Input(format!("character {c:?} is not in the vocabulary"))
                    })
            })
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        ids.iter()
            .map(|&i| {
                self.vocab
                    .get(i as usize)
                    .copied()
                    .ok_or_else(|| Error::Input(format!("token id {i} outside vocabulary")))
            })
            .collect()
    }
}

/// Vocabulary in order of first appearance.
pub fn build_char_corpus(text: &str) -> Result<CharCorpus> {
    if text.is_empty() {
        return Err(Error::Input("empty text".into()));
    }
    let mut vocab = Vec::new();
    for c in text.chars() {
        if !vocab.contains(&c) {
            vocab.push(c);
        }
    }
    CharCorpus::with_vocab(vocab, text)
}

/// One example per position `p ≥ context`: the previous `context` ids and the id at `p`.
pub fn window_dataset<S: Scalar>(corpus: &CharCorpus, context: usize) -> Result<LabeledDataset<S>> {
    window_ids(&corpus.ids, context, corpus.vocab_size())
}

pub(crate) fn window_ids<S: Scalar>(
    ids: &[u32],
    context: usize,
    vocab: usize,
) -> Result<LabeledDataset<S>> {
    if context == 0 {
        return Err(Error::param("context", "must be >= 1"));
    }
    if ids.len() <= context {
        return Err(Error::Input(format!(
            "text of {} characters is shorter than context {} + 1",
            ids.len(),
            context
        )));
    }
    let positions = context..ids.len();
    let windows = positions
        .clone()
        .flat_map(|p| ids[p - context..p].iter().copied())
        .collect();
    let labels = positions.map(|p| ids[p] as usize).collect();
    let batch = Batch::tokens(context, windows, labels, RiskTag::LowRisk)?;
    LabeledDataset::new("windows", vocab, batch)
}

/// Whether a character belongs to the fixed template or to a per-record filler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenRole {
    Template,
    Filler,
}

/// Three texts sharing one record template with disjoint fillers.
#[derive(Debug, Clone, PartialEq)]
pub struct StyledCorpus {
    pub forget: String,
    pub recovery: String,
    pub recovery_finetune: String,
    pub forget_roles: Vec<TokenRole>,
    pub recovery_roles: Vec<TokenRole>,
    pub recovery_finetune_roles: Vec<TokenRole>,
    pub forget_fillers: BTreeSet<String>,
    pub recovery_fillers: BTreeSet<String>,
}

impl StyledCorpus {
    /// Shared vocabulary over all three texts.
    pub fn corpus(&self) -> Result<CharCorpus> {
        build_char_corpus(&format!(
            "{}{}{}",
            self.forget, self.recovery, self.recovery_finetune
        ))
    }
}

const LOGIN: &str = "login: ";
const PASSWORD: &str = " pw: ";
const CONSONANTS: &[u8] = b"bcdfghjklmnprstvwz";
const VOWELS: &[u8] = b"aeiou";

fn pronounceable(rng: &mut SeededRng, len: usize) -> String {
    (0..len)
        .map(|i| {
            let pool = if i % 2 == 0 { CONSONANTS } else { VOWELS };
            pool[rng.below(pool.len())] as char
        })
        .collect()
}

fn name(rng: &mut SeededRng) -> String {
    let initial = CONSONANTS[rng.below(CONSONANTS.len())] as char;
    let len = 4 + rng.below(3);
    format!("{initial}{}", pronounceable(rng, len))
}

fn secret(rng: &mut SeededRng) -> String {
    let head = pronounceable(rng, 2);
    let digit = (b'0' + rng.below(10) as u8) as char;
    let len = 4 + rng.below(2);
    format!("{head}{digit}{}", pronounceable(rng, len))
}

fn push(text: &mut String, roles: &mut Vec<TokenRole>, s: &str, role: TokenRole) {
    text.push_str(s);
    roles.extend(std::iter::repeat_n(role, s.chars().count()));
}

/// Fresh (name, secret) pair not present in `used`.
fn fresh_filler(rng: &mut SeededRng, used: &mut BTreeSet<String>) -> (String, String) {
    loop {
        let (n, s) = (name(rng), secret(rng));
        if !used.contains(&n) && !used.contains(&s) && n != s {
            used.insert(n.clone());
            used.insert(s.clone());
            return (n, s);
        }
    }
}

/// `lines` records per text of the form `login: <name> pw: <secret>`.
/// The forget text opens with `login: pallen pw: ke9davis`; every filler is
/// unique across the three texts.
pub fn styled_corpus(lines: usize, rng: &mut SeededRng) -> Result<StyledCorpus> {
    if lines == 0 {
        return Err(Error::param("lines", "must be >= 1"));
    }
    let mut used = BTreeSet::new();
    used.insert("pallen".to_string());
    used.insert("ke9davis".to_string());

    let mut build = |first: Option<(&str, &str)>| {
        let mut text = String::new();
        let mut roles = Vec::new();
        let mut fillers = BTreeSet::new();
        for i in 0..lines {
            let (n, s) = match (i, first) {
                (0, Some((n, s))) => (n.to_string(), s.to_string()),
                _ => fresh_filler(rng, &mut used),
            };
            push(&mut text, &mut roles, LOGIN, TokenRole::Template);
            push(&mut text, &mut roles, &n, TokenRole::Filler);
            push(&mut text, &mut roles, PASSWORD, TokenRole::Template);
            push(&mut text, &mut roles, &s, TokenRole::Filler);
            push(&mut text, &mut roles, "\n", TokenRole::Template);
            fillers.insert(n);
            fillers.insert(s);
        }
        (text, roles, fillers)
    };
    let (forget, forget_roles, forget_fillers) = build(Some(("pallen", "ke9davis")));
    let (recovery, recovery_roles, mut recovery_fillers) = build(None);
    let (recovery_finetune, recovery_finetune_roles, ft_fillers) = build(None);
    recovery_fillers.extend(ft_fillers);
    Ok(StyledCorpus {
        forget,
        recovery,
        recovery_finetune,
        forget_roles,
        recovery_roles,
        recovery_finetune_roles,
        forget_fillers,
        recovery_fillers,
    })
}

/// [`styled_corpus`] with 40 records per text.
pub fn styled_corpus_pair(rng: &mut SeededRng) -> Result<StyledCorpus> {
    styled_corpus(40, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ababa_windows() {
        let c = build_char_corpus("ababa").unwrap();
        assert_eq!(c.vocab(), &['a', 'b']);
        let d: LabeledDataset<f64> = window_dataset(&c, 2).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.as_batch().inputs.token_row(0).unwrap(), &[0, 1]);
        assert_eq!(d.labels()[0], 0);
        assert_eq!(d.labels(), &[0, 1, 0]);
    }

    #[test]
    fn repeated_char_targets_zero() {
        let c = build_char_corpus("aaaa").unwrap();
        let d: LabeledDataset<f64> = window_dataset(&c, 2).unwrap();
        assert!(d.labels().iter().all(|&y| y == 0));
    }

    #[test]
    fn vocab_round_trip() {
        let text = "hello, wörld\nline two";
        let c = build_char_corpus(text).unwrap();
        assert_eq!(c.decode(&c.ids).unwrap(), text);
        assert!(c.encode("§").is_err());
    }

    #[test]
    fn short_text_is_rejected() {
        let c = build_char_corpus("ab").unwrap();
        assert!(window_dataset::<f64>(&c, 2).is_err());
    }

    #[test]
    fn styled_fillers_are_disjoint() {
        let s = styled_corpus_pair(&mut SeededRng::new(3)).unwrap();
        assert!(s.forget_fillers.is_disjoint(&s.recovery_fillers));
        assert_eq!(s.forget_fillers.len(), 80);
        assert_eq!(s.recovery_fillers.len(), 160);
    }

    #[test]
    fn styled_template_skeleton_is_shared() {
        let s = styled_corpus(5, &mut SeededRng::new(3)).unwrap();
        let skeleton = |text: &str, roles: &[TokenRole]| -> String {
            text.chars()
                .zip(roles)
                .filter(|(_, r)| **r == TokenRole::Template)
                .map(|(c, _)| c)
                .collect()
        };
        let a = skeleton(&s.forget, &s.forget_roles);
        assert_eq!(a, skeleton(&s.recovery, &s.recovery_roles));
        assert_eq!(
            a,
            skeleton(&s.recovery_finetune, &s.recovery_finetune_roles)
        );
        assert_eq!(a, "login:  pw: \n".repeat(5));
    }

    #[test]
    fn styled_forget_opens_with_reference_record() {
        let s = styled_corpus_pair(&mut SeededRng::new(0)).unwrap();
        assert!(s.forget.starts_with("login: pallen pw: ke9davis\n"));
        assert_eq!(s.forget.chars().count(), s.forget_roles.len());
    }
}
