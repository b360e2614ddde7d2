use std::collections::HashMap;

use hdlscale_core::dispersion::lexer::lex;
use hdlscale_core::dispersion::{
    cluster_order, cosine, mcd, similarity_matrix, tokenize_bytes, vectorize, vectorize_tokens, CodeVectorSet,
    SparseVector,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// (name, source, expected tokens) triples from the golden file.
fn golden_corpus() -> Vec<(String, String, Vec<String>)> {
    let text = include_str!("data/lexer_golden.txt");
    let mut out = Vec::new();
    for block in text.split("### ").filter(|b| !b.trim().is_empty()) {
        let (name, rest) = block.split_once('\n').unwrap();
        let (src, toks) = rest.split_once("\n---\n").unwrap();
        let toks = toks.lines().filter(|l| !l.is_empty()).map(String::from).collect();
        out.push((name.to_string(), src.to_string(), toks));
    }
    out
}

#[test]
fn golden_corpus_matches_hand_lexed_streams() {
    let corpus = golden_corpus();
    assert_eq!(corpus.len(), 25);
    for (name, src, expected) in corpus {
        assert_eq!(lex(&src), expected, "snippet `{name}`");
    }
}

proptest! {
    #[test]
    fn lexer_accepts_any_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        let a = tokenize_bytes(&bytes);
        let b = tokenize_bytes(&bytes);
        prop_assert_eq!(a, b);
    }
}

/// Term weights computed from scratch: raw n-gram count times
/// `ln((1 + D) / (1 + df)) + 1`, keyed by the joined n-gram.
fn oracle_weights(docs: &[Vec<String>], n: usize) -> Vec<HashMap<String, f64>> {
    let grams: Vec<Vec<String>> = docs
        .iter()
        .map(|d| if d.len() < n { vec![] } else { (0..=d.len() - n).map(|i| d[i..i + n].join("\u{1}")).collect() })
        .collect();
    let mut df: HashMap<&str, f64> = HashMap::new();
    for g in &grams {
        let mut uniq: Vec<&String> = g.iter().collect();
        uniq.sort();
        uniq.dedup();
        for u in uniq {
            *df.entry(u.as_str()).or_default() += 1.0;
        }
    }
    let d = docs.len() as f64;
    grams
        .iter()
        .map(|g| {
            let mut w: HashMap<String, f64> = HashMap::new();
            for t in g {
                *w.entry(t.clone()).or_default() += 1.0;
            }
            for (t, v) in w.iter_mut() {
                *v *= ((1.0 + d) / (1.0 + df[t.as_str()])).ln() + 1.0;
            }
            w
        })
        .collect()
}

fn oracle_cos(a: &HashMap<String, f64>, b: &HashMap<String, f64>) -> f64 {
    let dot: f64 = a.iter().map(|(k, v)| v * b.get(k).copied().unwrap_or(0.0)).sum();
    let na = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

#[test]
fn two_document_unigram_weights() {
    // D = 2; df(a) = 2 so idf(a) = 1; df(b) = df(c) = 1 so idf = 1 + ln 1.5.
    let set = vectorize_tokens(&[toks("a b a"), toks("a c")], 1);
    let w = 1.0 + 1.5f64.ln();
    let d1 = (4.0 + w * w).sqrt();
    let d2 = (1.0 + w * w).sqrt();
    let expected = 2.0 / (d1 * d2);
    assert!((cosine(&set.vectors[0], &set.vectors[1]) - expected).abs() < 1e-12);
    for v in &set.vectors {
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn bigram_weights() {
    // Shared bigram "a b" has idf 1; the two private bigrams have 1 + ln 1.5.
    let set = vectorize_tokens(&[toks("a b c"), toks("a b d")], 2);
    let w = 1.0 + 1.5f64.ln();
    assert!((cosine(&set.vectors[0], &set.vectors[1]) - 1.0 / (1.0 + w * w)).abs() < 1e-12);
}

#[test]
fn mcd_fixed_points() {
    let same = vectorize(&["assign y = a & b;"; 5], 2);
    assert!(mcd(&same).unwrap().abs() < 1e-12);

    let orth = vectorize_tokens(&[toks("a"), toks("b")], 1);
    assert!((mcd(&orth).unwrap() - 1.0).abs() < 1e-12);

    // Pairwise cosines {1, 0, 0}.
    let three = vectorize_tokens(&[toks("a"), toks("a"), toks("b")], 1);
    assert!((mcd(&three).unwrap() - 2.0 / 3.0).abs() < 1e-12);

    let direct = CodeVectorSet {
        problem_id: String::new(),
        n: 1,
        dim: 2,
        vectors: vec![
            SparseVector { entries: vec![(0, 1.0)] },
            SparseVector { entries: vec![(0, 3.0)] },
            SparseVector { entries: vec![(1, 2.0)] },
        ],
    };
    assert!((mcd(&direct).unwrap() - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn small_matrix_shapes() {
    let one = similarity_matrix(&vectorize(&["module m; endmodule"], 2));
    assert_eq!(one.values, vec![1.0]);
    let pair = similarity_matrix(&vectorize(&["wire w;", "wire w;"], 1));
    for v in pair.values {
        assert!((v - 1.0).abs() < 1e-12);
    }
}

fn random_docs(rng: &mut ChaCha8Rng, count: usize) -> Vec<Vec<String>> {
    const ALPHABET: [&str; 8] = ["a", "b", "c", "d", "e", "f", "g", "h"];
    (0..count)
        .map(|_| {
            let len = rng.random_range(0..12);
            (0..len).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())].to_string()).collect()
        })
        .collect()
}

#[test]
fn similarity_matrix_matches_scratch_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=3 {
        for _ in 0..20 {
            let docs = random_docs(&mut rng, 20);
            let set = vectorize_tokens(&docs, n);
            let m = similarity_matrix(&set);
            let w = oracle_weights(&docs, n);
            let mut upper = 0.0;
            for i in 0..docs.len() {
                for j in 0..docs.len() {
                    let o = oracle_cos(&w[i], &w[j]);
                    assert!((m.get(i, j) - o).abs() < 1e-12, "n={n} ({i},{j}): {} vs {o}", m.get(i, j));
                    if i < j {
                        upper += 1.0 - o;
                    }
                }
            }
            let pairs = (docs.len() * (docs.len() - 1) / 2) as f64;
            assert!((mcd(&set).unwrap() - upper / pairs).abs() < 1e-12);
        }
    }
}

#[test]
fn weights_invariant_to_repeating_the_corpus() {
    // Concatenating each document with itself doubles every count; after
    // normalization the vectors and hence all cosines are unchanged.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let docs = random_docs(&mut rng, 10);
    let doubled: Vec<Vec<String>> = docs.iter().map(|d| d.iter().chain(d.iter()).cloned().collect()).collect();
    let a = similarity_matrix(&vectorize_tokens(&docs, 1));
    let b = similarity_matrix(&vectorize_tokens(&doubled, 1));
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn clustering_is_deterministic_and_groups_blobs() {
    let mut codes = Vec::new();
    for i in 0..6 {
        codes.push(format!("assign y = a + b + {i};"));
        codes.push(format!("always @(posedge clk) begin q <= d; r <= {i}; end"));
    }
    let set = vectorize(&codes, 2);
    let first = cluster_order(&set, 2, 42);
    for _ in 0..10 {
        assert_eq!(cluster_order(&set, 2, 42), first);
    }
    let mut sorted = first.permutation.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..codes.len()).collect::<Vec<_>>());
    let evens: Vec<bool> = first.permutation.iter().map(|i| i % 2 == 0).collect();
    assert!(evens[..6].iter().all(|&e| e == evens[0]) && evens[6..].iter().all(|&e| e != evens[0]), "{:?}", first);
}
