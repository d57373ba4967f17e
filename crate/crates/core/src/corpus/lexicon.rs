use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Search-language words with their query-language translations. The first
/// entry is the primary translation; later entries are synonyms.
pub const BUILTIN_LEXICON: &[(&str, &[&str])] = &[
    ("dog", &["Hund"]),
    ("field", &["Feld", "Wiese"]),
    ("bicycle", &["Fahrrad", "Rad"]),
    ("shirt", &["Hemd", "Oberteil"]),
    ("street", &["Straße"]),
    ("people", &["Personen", "Leute"]),
    ("big", &["groß", "riesig"]),
    ("green", &["grün"]),
    ("climbing", &["klettert"]),
    ("water", &["Wasser"]),
    ("ball", &["Ball"]),
    ("man", &["Mann"]),
    ("woman", &["Frau", "Dame"]),
    ("girl", &["Mädchen"]),
    ("boy", &["Junge", "Knabe"]),
    ("red", &["rot"]),
    ("blue", &["blau"]),
    ("white", &["weiß"]),
    ("black", &["schwarz"]),
    ("grass", &["Gras", "Rasen"]),
    ("snow", &["Schnee"]),
    ("beach", &["Strand"]),
    ("ocean", &["Ozean", "Meer"]),
    ("mountain", &["Berg"]),
    ("rock", &["Felsen", "Stein"]),
    ("jumps", &["springt"]),
    ("runs", &["rennt", "läuft"]),
    ("plays", &["spielt"]),
    ("sits", &["sitzt"]),
    ("stands", &["steht"]),
    ("swims", &["schwimmt"]),
    ("rides", &["fährt", "reitet"]),
    ("wave", &["Welle"]),
    ("crowd", &["Menge"]),
    ("car", &["Auto", "Wagen"]),
    ("building", &["Gebäude"]),
    ("tree", &["Baum"]),
    ("hat", &["Hut", "Mütze"]),
    ("jacket", &["Jacke"]),
    ("bench", &["Bank"]),
    ("wall", &["Wand", "Mauer"]),
    ("city", &["Stadt"]),
    ("park", &["Park"]),
    ("sand", &["Sand"]),
    ("horse", &["Pferd"]),
    ("cat", &["Katze"]),
    ("bird", &["Vogel"]),
    ("boat", &["Boot"]),
    ("lake", &["See"]),
    ("child", &["Kind"]),
    ("small", &["klein"]),
    ("yellow", &["gelb"]),
    ("dirt", &["Erde"]),
    ("fence", &["Zaun"]),
    ("skateboard", &["Skateboard"]),
    ("camera", &["Kamera"]),
    ("frisbee", &["Frisbee"]),
    ("pool", &["Becken"]),
    ("trick", &["Kunststück"]),
    ("night", &["Nacht"]),
];

/// Search-language word to query-language translations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationLexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl TranslationLexicon {
    pub fn new(entries: BTreeMap<String, Vec<String>>) -> Result<Self> {
        if let Some((w, _)) = entries.iter().find(|(_, t)| t.is_empty()) {
            return Err(Error::Validation(format!("lexicon entry {w:?} has no translation")));
        }
        Ok(Self { entries })
    }

    pub fn translations(&self, search_word: &str) -> &[String] {
        self.entries.get(search_word).map_or(&[], Vec::as_slice)
    }

    pub fn primary(&self, search_word: &str) -> Option<&str> {
        self.translations(search_word).first().map(String::as_str)
    }

    pub fn search_words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Every query-language word, in first-seen order over sorted search words.
    pub fn query_words(&self) -> Vec<String> {
        let mut seen = std::collections::BTreeSet::new();
        self.entries
            .values()
            .flatten()
            .filter(|w| seen.insert(w.as_str()))
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lex: Self = serde_json::from_str(&text)?;
        Self::new(lex.entries)
    }
}
