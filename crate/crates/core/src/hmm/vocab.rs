//! Token vocabulary: maps token strings (compounds included, as atoms) to
//! dense integer ids, with a reserved trailing id for unknown tokens.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Builds from training sequences: every distinct token gets an id in
    /// lexicographic order; the unknown id comes last.
    pub fn build<S: AsRef<str>>(sequences: &[Vec<S>]) -> Result<Vocabulary> {
        if sequences.is_empty() {
            return Err(Error::Argument(
                "vocabulary needs at least one training sequence".into(),
            ));
        }
        let mut tokens: Vec<String> = sequences
            .iter()
            .flat_map(|s| s.iter().map(|t| t.as_ref().to_string()))
            .collect();
        tokens.sort();
        tokens.dedup();
        Ok(Vocabulary::from_tokens(tokens))
    }

    /// Reconstructs a vocabulary from an ordered token list (model bank
    /// deserialization).
    pub fn from_tokens(tokens: Vec<String>) -> Vocabulary {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    /// Total symbol count including the unknown id.
    pub fn size(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn unknown_id(&self) -> usize {
        self.tokens.len()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(self.tokens.len())
    }

    pub fn encode<S: AsRef<str>>(&self, sequence: &[S]) -> Vec<usize> {
        sequence.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn token_name(&self, id: usize) -> &str {
        self.tokens.get(id).map_or("<unk>", |s| s.as_str())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_tokens_plus_unknown() {
        let vocab = Vocabulary::build(&[vec!["Gl", "Gh"], vec!["Gh"]]).unwrap();
        assert_eq!(vocab.size(), 3);
        assert_eq!(vocab.id("Gh"), 0);
        assert_eq!(vocab.id("Gl"), 1);
        assert_eq!(vocab.unknown_id(), 2);
    }

    #[test]
    fn unseen_compound_maps_to_unknown() {
        let vocab = Vocabulary::build(&[vec!["Gl", "Gh"]]).unwrap();
        assert_eq!(vocab.id("Vx+&Vy+"), vocab.unknown_id());
        assert_eq!(vocab.encode(&["Gl", "Vx+&Vy+"]), vec![1, 2]);
    }

    #[test]
    fn full_alphabet_yields_25() {
        let all: Vec<&str> = crate::token::Symbol::all().iter().map(|s| s.name()).collect();
        let vocab = Vocabulary::build(&[all]).unwrap();
        assert_eq!(vocab.size(), 25);
    }

    #[test]
    fn empty_training_set_rejected() {
        assert!(Vocabulary::build::<&str>(&[]).is_err());
    }
}
