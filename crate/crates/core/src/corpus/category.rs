use std::fmt;

use serde::{Deserialize, Serialize};

pub const SEPARATOR: &str = " > ";

/// A taxonomy path such as `Electronics > Audio Devices > Headphones`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CategoryPath {
    segments: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CategoryPathError {
    #[error("category path has no segments")]
    Empty,
    #[error("category path segment {0} is empty")]
    EmptySegment(usize),
    #[error("segment {0} contains the separator")]
    SeparatorInSegment(usize),
}

impl CategoryPath {
    pub fn new<S: Into<String>>(segments: impl IntoIterator<Item = S>) -> Result<Self, CategoryPathError> {
        let segments: Vec<String> = segments.into_iter().map(Into::into).collect();
        if segments.is_empty() {
            return Err(CategoryPathError::Empty);
        }
        for (i, s) in segments.iter().enumerate() {
            if s.trim().is_empty() {
                return Err(CategoryPathError::EmptySegment(i));
            }
            // A segment that begins with "> " or ends with " >" would fuse with
            // the neighbouring separator and split differently on parse.
            if s.contains(SEPARATOR) || s.starts_with("> ") || s.ends_with(" >") {
                return Err(CategoryPathError::SeparatorInSegment(i));
            }
        }
        Ok(Self { segments })
    }

    pub fn parse(rendered: &str) -> Result<Self, CategoryPathError> {
        Self::new(rendered.split(SEPARATOR))
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn leaf(&self) -> &str {
        self.segments.last().map(String::as_str).unwrap_or_default()
    }

    pub fn depth(&self) -> usize {
        self.segments.len()
    }

    pub fn render(&self) -> String {
        self.segments.join(SEPARATOR)
    }
}

impl fmt::Display for CategoryPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl TryFrom<String> for CategoryPath {
    type Error = CategoryPathError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        CategoryPath::parse(&value)
    }
}

impl From<CategoryPath> for String {
    fn from(value: CategoryPath) -> Self {
        value.render()
    }
}
