//! Label hierarchy: languages grouped into families, plus the encoding
//! (channel) axis and an optional speaker list.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// The label space shared by datasets and models.
///
/// Languages do not need to be grouped by family on input; use
/// [`Taxonomy::family_blocks`] for the family-grouped order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    languages: Vec<String>,
    families: Vec<String>,
    encodings: Vec<String>,
    lang_to_family: Vec<usize>,
    speakers: Vec<String>,
}

fn check_unique(names: &[String], what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for n in names {
        if n.is_empty() {
            return Err(Error::InvalidTaxonomy(format!("empty {what} name")));
        }
        if !seen.insert(n.as_str()) {
            return Err(Error::InvalidTaxonomy(format!("duplicate {what} name {n:?}")));
        }
    }
    Ok(())
}

impl Taxonomy {
    pub fn new(
        languages: Vec<String>,
        families: Vec<String>,
        encodings: Vec<String>,
        lang_to_family: Vec<usize>,
        speakers: Vec<String>,
    ) -> Result<Self> {
        if languages.is_empty() {
            return Err(Error::InvalidTaxonomy("no languages".into()));
        }
        if encodings.is_empty() {
            return Err(Error::InvalidTaxonomy("no encodings".into()));
        }
        if lang_to_family.len() != languages.len() {
            return Err(Error::InvalidTaxonomy(format!(
                "{} languages but {} family assignments",
                languages.len(),
                lang_to_family.len()
            )));
        }
        check_unique(&languages, "language")?;
        check_unique(&families, "family")?;
        check_unique(&encodings, "encoding")?;
        check_unique(&speakers, "speaker")?;
        let mut members = vec![0usize; families.len()];
        for (l, &f) in lang_to_family.iter().enumerate() {
            if f >= families.len() {
                return Err(Error::InvalidTaxonomy(format!(
                    "language {:?} maps to family {f}, only {} families",
                    languages[l],
                    families.len()
                )));
            }
            members[f] += 1;
        }
        if let Some(j) = members.iter().position(|&c| c == 0) {
            return Err(Error::InvalidTaxonomy(format!(
                "family {:?} has no member language",
                families[j]
            )));
        }
        Ok(Self {
            languages,
            families,
            encodings,
            lang_to_family,
            speakers,
        })
    }

    /// Builds a taxonomy from `(language, family)` name pairs; families are
    /// ordered by first appearance.
    pub fn from_pairs<S: AsRef<str>>(pairs: &[(S, S)], encodings: &[S]) -> Result<Self> {
        let mut families: Vec<String> = Vec::new();
        let mut map = Vec::with_capacity(pairs.len());
        let mut languages = Vec::with_capacity(pairs.len());
        for (l, f) in pairs {
            let f = f.as_ref();
            let idx = match families.iter().position(|x| x == f) {
                Some(i) => i,
                None => {
                    families.push(f.into());
                    families.len() - 1
                }
            };
            map.push(idx);
            languages.push(l.as_ref().into());
        }
        let encodings = encodings.iter().map(|e| e.as_ref().into()).collect();
        Self::new(languages, families, encodings, map, Vec::new())
    }

    /// Same taxonomy with a speaker list attached.
    pub fn with_speakers(mut self, speakers: Vec<String>) -> Result<Self> {
        check_unique(&speakers, "speaker")?;
        self.speakers = speakers;
        Ok(self)
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn families(&self) -> &[String] {
        &self.families
    }

    pub fn encodings(&self) -> &[String] {
        &self.encodings
    }

    pub fn speakers(&self) -> &[String] {
        &self.speakers
    }

    pub fn n_languages(&self) -> usize {
        self.languages.len()
    }

    pub fn n_families(&self) -> usize {
        self.families.len()
    }

    pub fn n_encodings(&self) -> usize {
        self.encodings.len()
    }

    pub fn n_speakers(&self) -> usize {
        self.speakers.len()
    }

    /// Family index of a language.
    pub fn family_of(&self, lang: usize) -> Result<usize> {
        self.lang_to_family
            .get(lang)
            .copied()
            .ok_or(Error::IndexOutOfRange {
                what: "language",
                index: lang,
                bound: self.languages.len(),
            })
    }

    /// The raw language → family table.
    pub fn family_map(&self) -> &[usize] {
        &self.lang_to_family
    }

    /// Languages grouped by family: families in taxonomy order, languages in
    /// taxonomy order within each block.
    pub fn family_blocks(&self) -> Vec<(usize, Vec<usize>)> {
        let mut blocks: Vec<(usize, Vec<usize>)> =
            (0..self.families.len()).map(|f| (f, Vec::new())).collect();
        for (l, &f) in self.lang_to_family.iter().enumerate() {
            blocks[f].1.push(l);
        }
        blocks
    }

    pub fn language_index(&self, name: &str) -> Option<usize> {
        self.languages.iter().position(|x| x == name)
    }

    pub fn family_index(&self, name: &str) -> Option<usize> {
        self.families.iter().position(|x| x == name)
    }

    pub fn encoding_index(&self, name: &str) -> Option<usize> {
        self.encodings.iter().position(|x| x == name)
    }

    pub fn speaker_index(&self, name: &str) -> Option<usize> {
        self.speakers.iter().position(|x| x == name)
    }

    /// True when the label spaces (ignoring speakers) coincide.
    pub fn same_labels(&self, other: &Taxonomy) -> bool {
        self.languages == other.languages
            && self.families == other.families
            && self.encodings == other.encodings
            && self.lang_to_family == other.lang_to_family
    }
}
