use std::fmt;

use serde::{Deserialize, Serialize};

/// All two-letter ISO-639-1 codes.
const ISO_639_1: &[&str] = &[
    "aa", "ab", "ae", "af", "ak", "am", "an", "ar", "as", "av", "ay", "az", "ba", "be", "bg",
    "bi", "bm", "bn", "bo", "br", "bs", "ca", "ce", "ch", "co", "cr", "cs", "cu", "cv", "cy",
    "da", "de", "dv", "dz", "ee", "el", "en", "eo", "es", "et", "eu", "fa", "ff", "fi", "fj",
    "fo", "fr", "fy", "ga", "gd", "gl", "gn", "gu", "gv", "ha", "he", "hi", "ho", "hr", "ht",
    "hu", "hy", "hz", "ia", "id", "ie", "ig", "ii", "ik", "io", "is", "it", "iu", "ja", "jv",
    "ka", "kg", "ki", "kj", "kk", "kl", "km", "kn", "ko", "kr", "ks", "ku", "kv", "kw", "ky",
    "la", "lb", "lg", "li", "ln", "lo", "lt", "lu", "lv", "mg", "mh", "mi", "mk", "ml", "mn",
    "mr", "ms", "mt", "my", "na", "nb", "nd", "ne", "ng", "nl", "nn", "no", "nr", "nv", "ny",
    "oc", "oj", "om", "or", "os", "pa", "pi", "pl", "ps", "pt", "qu", "rm", "rn", "ro", "ru",
    "rw", "sa", "sc", "sd", "se", "sg", "si", "sk", "sl", "sm", "sn", "so", "sq", "sr", "ss",
    "st", "su", "sv", "sw", "ta", "te", "tg", "th", "ti", "tk", "tl", "tn", "to", "tr", "ts",
    "tt", "tw", "ty", "ug", "uk", "ur", "uz", "ve", "vi", "vo", "wa", "wo", "xh", "yi", "yo",
    "za", "zh", "zu",
];

/// Column order of the competition's dataset statistics table. Languages not
/// listed here are appended alphabetically when rendering.
pub const TABLE_ORDER: &[&str] = &[
    "en", "fr", "es", "ko", "pt", "ja", "de", "it", "pl", "ar", "th", "vi", "id",
];

/// A lowercase language code.
///
/// Codes outside ISO-639-1 are accepted so that no competition language is
/// dropped; callers can ask [`Language::is_known`] and report them.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Language(String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("language code must be non-empty")]
pub struct EmptyLanguage;

impl Language {
    pub fn new(code: &str) -> Result<Self, EmptyLanguage> {
        let code = code.trim().to_lowercase();
        if code.is_empty() {
            return Err(EmptyLanguage);
        }
        Ok(Self(code))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_known(&self) -> bool {
        ISO_639_1.binary_search(&self.0.as_str()).is_ok()
    }

    /// Position in [`TABLE_ORDER`], or `None` for languages outside it.
    pub fn table_rank(&self) -> Option<usize> {
        TABLE_ORDER.iter().position(|c| *c == self.0)
    }
}

impl TryFrom<String> for Language {
    type Error = EmptyLanguage;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Language::new(&value)
    }
}

impl From<Language> for String {
    fn from(value: Language) -> Self {
        value.0
    }
}

impl std::str::FromStr for Language {
    type Err = EmptyLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Language::new(s)
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Orders languages the way the statistics table lays out its columns.
pub fn table_sort(languages: &mut [Language]) {
    languages.sort_by(|a, b| match (a.table_rank(), b.table_rank()) {
        (Some(x), Some(y)) => x.cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(b),
    });
}
