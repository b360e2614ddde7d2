//! Token n-gram TF-IDF vectors and cosine dispersion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::lexer::lex;
use super::DispersionError;

pub const DEFAULT_NGRAM: usize = 2;

/// Sparse vector with entries sorted by strictly increasing index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&(_, v)| v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Dot product with a dense vector indexed by term id.
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * dense[i as usize]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeVectorSet {
    pub problem_id: String,
    pub n: usize,
    /// Number of distinct n-grams across the set; term ids are `0..dim`.
    pub dim: usize,
    pub vectors: Vec<SparseVector>,
}

impl CodeVectorSet {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn with_problem_id(mut self, id: impl Into<String>) -> Self {
        self.problem_id = id.into();
        self
    }
}

/// Vectorizes source texts: lex, count n-grams, weight by smoothed IDF,
/// L2-normalize. Sources with fewer than `n` tokens become zero vectors.
pub fn vectorize<S: AsRef<str>>(codes: &[S], n: usize) -> CodeVectorSet {
    let streams: Vec<Vec<String>> = codes.iter().map(|c| lex(c.as_ref())).collect();
    vectorize_tokens(&streams, n)
}

pub fn vectorize_tokens(streams: &[Vec<String>], n: usize) -> CodeVectorSet {
    assert!(n >= 1, "n-gram length must be at least 1");
    let counts: Vec<BTreeMap<&[String], u32>> = streams
        .iter()
        .map(|toks| {
            let mut m = BTreeMap::new();
            if toks.len() >= n {
                for g in toks.windows(n) {
                    *m.entry(g).or_insert(0) += 1;
                }
            }
            m
        })
        .collect();

    let mut df: BTreeMap<&[String], u32> = BTreeMap::new();
    for m in &counts {
        for g in m.keys() {
            *df.entry(*g).or_insert(0) += 1;
        }
    }
    let ids: BTreeMap<&[String], u32> = df.keys().enumerate().map(|(i, g)| (*g, i as u32)).collect();
    let docs = streams.len() as f64;

    let vectors = counts
        .iter()
        .map(|m| {
            let mut entries: Vec<(u32, f64)> = m
                .iter()
                .map(|(g, &tf)| {
                    let idf = ((1.0 + docs) / (1.0 + df[g] as f64)).ln() + 1.0;
                    (ids[g], tf as f64 * idf)
                })
                .collect();
            entries.sort_by_key(|e| e.0);
            let norm = entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
            if norm > 0.0 {
                for e in &mut entries {
                    e.1 /= norm;
                }
            }
            SparseVector { entries }
        })
        .collect();

    CodeVectorSet {
        problem_id: String::new(),
        n,
        dim: ids.len(),
        vectors,
    }
}

/// Cosine similarity; zero when either side is the zero vector.
pub fn cosine(v: &SparseVector, w: &SparseVector) -> f64 {
    let (nv, nw) = (v.norm(), w.norm());
    if nv == 0.0 || nw == 0.0 {
        return 0.0;
    }
    (v.dot(w) / (nv * nw)).clamp(-1.0, 1.0)
}

/// Mean pairwise cosine distance over all unordered pairs.
pub fn mcd(set: &CodeVectorSet) -> Result<f64, DispersionError> {
    let n = set.len();
    if n < 2 {
        return Err(DispersionError::TooFewSamples { found: n });
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += 1.0 - cosine(&set.vectors[i], &set.vectors[j]);
        }
    }
    Ok(sum * 2.0 / (n as f64 * (n as f64 - 1.0)))
}

/// Dense symmetric N×N cosine similarity matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub n: usize,
    pub values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// Reorders rows and columns: entry (a, b) of the result is
    /// entry (perm[a], perm[b]) of `self`.
    pub fn permuted(&self, perm: &[usize]) -> SimilarityMatrix {
        assert_eq!(perm.len(), self.n, "permutation length must match matrix size");
        let mut values = Vec::with_capacity(self.n * self.n);
        for &a in perm {
            for &b in perm {
                values.push(self.get(a, b));
            }
        }
        SimilarityMatrix { n: self.n, values }
    }
}

/// Pairwise similarities. The diagonal is 1 for nonzero vectors and 0 for
/// zero vectors, consistent with [`cosine`].
pub fn similarity_matrix(set: &CodeVectorSet) -> SimilarityMatrix {
    let n = set.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let c = cosine(&set.vectors[i], &set.vectors[j]);
            values[i * n + j] = c;
            values[j * n + i] = c;
        }
    }
    SimilarityMatrix { n, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_sources_have_zero_mcd() {
        let set = vectorize(&["module a; endmodule"; 4], 2);
        assert!(mcd(&set).unwrap().abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        let set = vectorize(&["module a; endmodule"], 2);
        assert!(matches!(mcd(&set), Err(DispersionError::TooFewSamples { found: 1 })));
    }

    #[test]
    fn disjoint_sources_have_unit_mcd() {
        let set = vectorize(&["a b c", "x y z"], 2);
        assert!((mcd(&set).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_source_is_zero_vector() {
        let set = vectorize(&["", "a b"], 2);
        assert!(set.vectors[0].is_zero());
        assert_eq!(cosine(&set.vectors[0], &set.vectors[1]), 0.0);
        assert_eq!(similarity_matrix(&set).get(0, 0), 0.0);
    }

    #[test]
    fn permuted_matrix() {
        let set = vectorize(&["a b", "a c", "x y"], 1);
        let m = similarity_matrix(&set);
        let p = m.permuted(&[2, 0, 1]);
        assert_eq!(p.get(0, 0), m.get(2, 2));
        assert_eq!(p.get(1, 2), m.get(0, 1));
    }

    proptest! {
        #[test]
        fn vectors_unit_or_zero(codes in proptest::collection::vec("[a-c ;()]{0,30}", 1..8)) {
            let set = vectorize(&codes, 2);
            for v in &set.vectors {
                let n = v.norm();
                prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-9);
                prop_assert!(v.entries.windows(2).all(|w| w[0].0 < w[1].0));
            }
        }

        #[test]
        fn mcd_bounded_and_order_invariant(codes in proptest::collection::vec("[a-d ;=]{0,30}", 2..8)) {
            let set = vectorize(&codes, 2);
            let m = mcd(&set).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&m));
            let mut rev = codes.clone();
            rev.reverse();
            let m2 = mcd(&vectorize(&rev, 2)).unwrap();
            prop_assert!((m - m2).abs() < 1e-9);
        }
    }
}
