use std::fmt;

/// Dense arithmetic identifier of one template instantiation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureId(pub u32);

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Sparse real vector kept in generation order, so sums over it are reproducible.
/// Callers never push the same id twice; zero values are dropped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    entries: Vec<(FeatureId, f64)>,
}

impl SparseVector {
    pub fn new() -> Self {
        SparseVector::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        SparseVector {
            entries: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, id: FeatureId, value: f64) {
        debug_assert!(value.is_finite(), "non-finite feature value");
        if value != 0.0 {
            self.entries.push((id, value));
        }
    }

    pub fn get(&self, id: FeatureId) -> f64 {
        self.entries
            .iter()
            .find(|(i, _)| *i == id)
            .map_or(0.0, |(_, v)| *v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (FeatureId, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn squared_norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum()
    }

    /// Entries sorted by id.
    pub fn sorted(&self) -> Vec<(FeatureId, f64)> {
        let mut e = self.entries.clone();
        e.sort_by_key(|(i, _)| *i);
        e
    }

    pub fn has_duplicate_ids(&self) -> bool {
        let mut ids: Vec<FeatureId> = self.ids().collect();
        ids.sort_unstable();
        ids.windows(2).any(|w| w[0] == w[1])
    }

    pub fn ids(&self) -> impl Iterator<Item = FeatureId> + '_ {
        self.entries.iter().map(|(i, _)| *i)
    }
}

impl FromIterator<(FeatureId, f64)> for SparseVector {
    fn from_iter<T: IntoIterator<Item = (FeatureId, f64)>>(iter: T) -> Self {
        let mut v = SparseVector::new();
        for (i, x) in iter {
            v.push(i, x);
        }
        v
    }
}
