//! Coordinate charts: ordered lists of unique coordinate names.

use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChartError {
    #[error("chart must have at least one coordinate")]
    Empty,
    #[error("duplicate coordinate name '{0}'")]
    Duplicate(String),
}

/// An ordered coordinate chart on R^n.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chart {
    names: Vec<String>,
}

impl Chart {
    pub fn new<S: Into<String>>(
        names: impl IntoIterator<Item = S>,
    ) -> Result<Arc<Chart>, ChartError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(ChartError::Empty);
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(ChartError::Duplicate(n.clone()));
            }
        }
        Ok(Arc::new(Chart { names }))
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

impl fmt::Display for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.names.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_empty() {
        assert!(matches!(
            Chart::new(["x", "x"]).unwrap_err(),
            ChartError::Duplicate(_)
        ));
        assert!(matches!(
            Chart::new(Vec::<String>::new()).unwrap_err(),
            ChartError::Empty
        ));
    }

    #[test]
    fn index_lookup() {
        let c = Chart::new(["q", "p"]).unwrap();
        assert_eq!(c.index_of("p"), Some(1));
        assert_eq!(c.index_of("z"), None);
        assert_eq!(c.dim(), 2);
    }
}
