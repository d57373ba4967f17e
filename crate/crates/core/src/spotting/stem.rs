use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Token normalization applied to both keywords and references before matching.
#[derive(Clone, Default)]
pub enum Stemmer {
    #[default]
    Identity,
    /// Lower-cases and repeatedly strips `-en -er -es -e -n -s` while at least
    /// three characters remain.
    GermanSuffix,
    Custom(Arc<dyn Fn(&str) -> String + Send + Sync>),
}

const GERMAN_SUFFIXES: [&str; 6] = ["en", "er", "es", "e", "n", "s"];
const MIN_STEM_CHARS: usize = 3;

fn german_suffix(token: &str) -> String {
    let mut s = token.to_lowercase();
    'strip: loop {
        let chars = s.chars().count();
        for suffix in GERMAN_SUFFIXES {
            if s.ends_with(suffix) && chars - suffix.chars().count() >= MIN_STEM_CHARS {
                s.truncate(s.len() - suffix.len());
                continue 'strip;
            }
        }
        return s;
    }
}

impl Stemmer {
    pub fn stem(&self, token: &str) -> String {
        match self {
            Stemmer::Identity => token.to_string(),
            Stemmer::GermanSuffix => german_suffix(token),
            Stemmer::Custom(f) => f(token),
        }
    }

    pub fn kind(&self) -> StemmerKind {
        match self {
            Stemmer::Identity => StemmerKind::Identity,
            Stemmer::GermanSuffix => StemmerKind::German,
            Stemmer::Custom(_) => StemmerKind::Custom,
        }
    }
}

impl fmt::Debug for Stemmer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Stemmer::{:?}", self.kind())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StemmerKind {
    #[default]
    Identity,
    German,
    Custom,
}

impl From<StemmerKind> for Stemmer {
    fn from(kind: StemmerKind) -> Self {
        match kind {
            StemmerKind::Identity | StemmerKind::Custom => Stemmer::Identity,
            StemmerKind::German => Stemmer::GermanSuffix,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn groups_german_inflections() {
        let s = Stemmer::GermanSuffix;
        assert_eq!(s.stem("großen"), s.stem("groß"));
        assert_eq!(s.stem("grünen"), s.stem("grün"));
        assert_eq!(s.stem("Hunde"), s.stem("Hund"));
        assert_eq!(s.stem("Personen"), s.stem("Person"));
        assert_ne!(s.stem("Hund"), s.stem("Hemd"));
    }

    #[test]
    fn keeps_three_character_minimum() {
        let s = Stemmer::GermanSuffix;
        assert_eq!(s.stem("Rose"), "ros");
        assert_eq!(s.stem("See"), "see");
        assert_eq!(s.stem("es"), "es");
    }

    #[test]
    fn identity_leaves_tokens_alone() {
        assert_eq!(Stemmer::Identity.stem("Hunde"), "Hunde");
    }

    proptest! {
        #[test]
        fn stemming_is_idempotent(token in "[a-zA-ZäöüßÄÖÜ]{0,14}") {
            for s in [Stemmer::Identity, Stemmer::GermanSuffix] {
                let once = s.stem(&token);
                prop_assert_eq!(s.stem(&once), once);
            }
        }
    }
}
