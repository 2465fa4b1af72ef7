use std::cmp::Ordering;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SnapshotError {
    #[error("empty element token")]
    EmptyToken,
    #[error("cannot compare an ordered result with an unordered one")]
    InvalidComparison,
}

/// Canonicalized query result.
///
/// `elements` is the sorted multiset of tokens. When the query imposes an
/// order, `sequence` keeps the tokens in result order as well.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResultSnapshot {
    elements: Vec<String>,
    sequence: Option<Vec<String>>,
}

fn check_tokens(tokens: &[String]) -> Result<(), SnapshotError> {
    if tokens.iter().any(String::is_empty) {
        return Err(SnapshotError::EmptyToken);
    }
    Ok(())
}

impl ResultSnapshot {
    pub fn unordered<I, S>(tokens: I) -> Result<Self, SnapshotError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut elements: Vec<String> = tokens.into_iter().map(Into::into).collect();
        check_tokens(&elements)?;
        elements.sort_unstable();
        Ok(ResultSnapshot {
            elements,
            sequence: None,
        })
    }

    pub fn ordered<I, S>(tokens: I) -> Result<Self, SnapshotError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let sequence: Vec<String> = tokens.into_iter().map(Into::into).collect();
        check_tokens(&sequence)?;
        let mut elements = sequence.clone();
        elements.sort_unstable();
        Ok(ResultSnapshot {
            elements,
            sequence: Some(sequence),
        })
    }

    /// ASK results are a single `"true"` or `"false"` token.
    pub fn ask(value: bool) -> Self {
        ResultSnapshot {
            elements: vec![if value { "true" } else { "false" }.to_owned()],
            sequence: None,
        }
    }

    pub fn empty() -> Self {
        ResultSnapshot {
            elements: Vec::new(),
            sequence: None,
        }
    }

    pub fn is_ordered(&self) -> bool {
        self.sequence.is_some()
    }

    /// Sorted element multiset.
    pub fn elements(&self) -> &[String] {
        &self.elements
    }

    pub fn sequence(&self) -> Option<&[String]> {
        self.sequence.as_deref()
    }

    /// Tokens in serialization order: the sequence when ordered, else the
    /// sorted elements.
    pub fn tokens(&self) -> &[String] {
        self.sequence.as_deref().unwrap_or(&self.elements)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Change test for two snapshots already known to share the ordered flag.
    pub(crate) fn differs_from(&self, other: &ResultSnapshot) -> bool {
        match (&self.sequence, &other.sequence) {
            (Some(a), Some(b)) => a != b,
            _ => self.elements != other.elements,
        }
    }
}

/// Whether `cur` reveals a change relative to `prev`. Ordered results compare
/// as sequences, unordered ones as multisets.
pub fn result_changed(prev: &ResultSnapshot, cur: &ResultSnapshot) -> Result<bool, SnapshotError> {
    if prev.is_ordered() != cur.is_ordered() {
        return Err(SnapshotError::InvalidComparison);
    }
    Ok(prev.differs_from(cur))
}

/// `1 − |a ∩ b| / |a ∪ b|` over the element multisets (plain set semantics
/// when no token repeats). Two empty results are at distance 0.
pub fn jaccard_distance(a: &ResultSnapshot, b: &ResultSnapshot) -> f64 {
    let (xs, ys) = (a.elements(), b.elements());
    let (mut i, mut j) = (0, 0);
    let (mut inter, mut union) = (0usize, 0usize);
    while i < xs.len() && j < ys.len() {
        match xs[i].cmp(&ys[j]) {
            Ordering::Less => {
                union += 1;
                i += 1;
            }
            Ordering::Greater => {
                union += 1;
                j += 1;
            }
            Ordering::Equal => {
                inter += 1;
                union += 1;
                i += 1;
                j += 1;
            }
        }
    }
    union += (xs.len() - i) + (ys.len() - j);
    if union == 0 {
        return 0.0;
    }
    1.0 - inter as f64 / union as f64
}
