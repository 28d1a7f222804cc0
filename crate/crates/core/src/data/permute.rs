use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CoherenceLabel, Corpus, Document, Origin};
use crate::error::{Error, Result};

/// Builds the document whose sentence `i` is sentence `order[i]` of `doc`.
/// Paragraph sizes are preserved.
pub fn permuted_document(doc: &Document, order: &[usize], index: usize) -> Result<Document> {
    let flat: Vec<_> = doc.sentences().collect();
    let identity: Vec<usize> = (0..flat.len()).collect();
    min_adjacent_transpositions(order, &identity)?;
    let mut reordered = order.iter().map(|&i| flat[i].clone());
    let paragraphs = doc
        .paragraphs
        .iter()
        .map(|p| reordered.by_ref().take(p.len()).collect())
        .collect();
    Ok(Document {
        id: format!("{}#perm{index}", doc.id),
        label: CoherenceLabel::INCOHERENT,
        paragraphs,
        origin: Origin::Permutation {
            of: doc.id.clone(),
            index,
            order: order.to_vec(),
        },
    })
}

/// Number of orderings of `n` items, or `None` once it exceeds `u128`.
fn factorial(n: usize) -> Option<u128> {
    (1..=n as u128).try_fold(1u128, |acc, k| acc.checked_mul(k))
}

/// Advances `v` to the next lexicographic permutation; false at the last one.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = v.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = v.iter().rposition(|&x| x > v[i]).expect("successor exists");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

/// Up to `k` distinct non-identity sentence orderings of `doc`, each labelled
/// incoherent. When fewer than `k` exist all of them are returned in
/// lexicographic order; otherwise orderings are drawn by shuffling and
/// rejecting the identity and repeats.
pub fn generate_permutations_with<R: Rng>(
    doc: &Document,
    k: usize,
    rng: &mut R,
) -> Result<Vec<Document>> {
    let n = doc.num_sentences();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "document `{}` has {n} sentence(s); at least 2 are needed to permute",
            doc.id
        )));
    }
    let identity: Vec<usize> = (0..n).collect();
    let available = factorial(n).map(|f| f - 1);

    let orders: Vec<Vec<usize>> = if available.is_some_and(|a| a <= k as u128) {
        let mut v = identity.clone();
        let mut all = Vec::new();
        while next_permutation(&mut v) {
            all.push(v.clone());
        }
        all
    } else {
        let mut seen = HashSet::with_capacity(k);
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            let mut v = identity.clone();
            v.shuffle(rng);
            if v != identity && seen.insert(v.clone()) {
                out.push(v);
            }
        }
        out
    };

    orders
        .iter()
        .enumerate()
        .map(|(i, o)| permuted_document(doc, o, i))
        .collect()
}

pub fn generate_permutations(doc: &Document, k: usize, seed: u64) -> Result<Vec<Document>> {
    generate_permutations_with(doc, k, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Counts reported by [`permute_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PermuteSummary {
    pub originals: usize,
    pub permutations: usize,
    /// Documents dropped for having fewer than two sentences.
    pub skipped: usize,
}

/// Each original of `corpus` followed by up to `k` of its permutations.
/// Documents with a single sentence are skipped with a warning; existing
/// permutations in the input are dropped.
pub fn permute_corpus(corpus: &Corpus, k: usize, seed: u64) -> Result<(Corpus, PermuteSummary)> {
    if k == 0 {
        return Err(Error::config("k", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = PermuteSummary::default();
    let mut out = Vec::new();
    for doc in corpus.originals() {
        if doc.num_sentences() < 2 {
            log::warn!(
                "skipping `{}`: a single sentence cannot be permuted",
                doc.id
            );
            summary.skipped += 1;
            continue;
        }
        let perms = generate_permutations_with(doc, k, &mut rng)?;
        summary.originals += 1;
        summary.permutations += perms.len();
        out.push(doc.clone());
        out.extend(perms);
    }
    Ok((Corpus::new(out), summary))
}

fn merge_count(v: &mut [usize], buf: &mut Vec<usize>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf.push(v[i]);
            i += 1;
        } else {
            // v[j] jumps ahead of every remaining left element
            count += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    count
}

/// Minimum number of adjacent swaps turning `perm` into `original`, i.e. the
/// inversion count of `perm` expressed in `original`'s positions.
pub fn min_adjacent_transpositions(perm: &[usize], original: &[usize]) -> Result<u64> {
    if perm.len() != original.len() {
        return Err(Error::NotAPermutation(format!(
            "lengths differ ({} vs {})",
            perm.len(),
            original.len()
        )));
    }
    let n = original.len();
    let mut position = HashMap::with_capacity(n);
    for (i, &x) in original.iter().enumerate() {
        if position.insert(x, i).is_some() {
            return Err(Error::NotAPermutation(format!("{original:?} repeats {x}")));
        }
    }
    let mut seen = vec![false; n];
    let mut mapped = Vec::with_capacity(n);
    for x in perm {
        let p = position.get(x).copied().unwrap_or(usize::MAX);
        if p == usize::MAX || seen[p] {
            return Err(Error::NotAPermutation(format!(
                "{perm:?} is not a rearrangement of {original:?}"
            )));
        }
        seen[p] = true;
        mapped.push(p);
    }
    Ok(merge_count(&mut mapped, &mut Vec::with_capacity(n)))
}

#[cfg(test)]
mod tests {
    use std::collections::VecDeque;

    use proptest::prelude::*;

    use super::*;
    use crate::data::Token;

    fn doc_with(n: usize) -> Document {
        Document::from_sentences(
            "d",
            (0..n)
                .map(|i| vec![Token::new(format!("w{i}"), None)])
                .collect(),
        )
    }

    fn orders(docs: &[Document]) -> Vec<Vec<usize>> {
        docs.iter()
            .map(|d| match &d.origin {
                Origin::Permutation { order, .. } => order.clone(),
                _ => panic!("not a permutation"),
            })
            .collect()
    }

    #[test]
    fn small_documents_yield_every_ordering() {
        let p = generate_permutations(&doc_with(2), 20, 1).unwrap();
        assert_eq!(orders(&p), vec![vec![1, 0]]);

        let p = generate_permutations(&doc_with(3), 20, 1).unwrap();
        let o = orders(&p);
        assert_eq!(o.len(), 5);
        assert!(!o.contains(&vec![0, 1, 2]));
        assert_eq!(o.iter().collect::<HashSet<_>>().len(), 5);
        assert!(p.iter().all(|d| d.label == CoherenceLabel::INCOHERENT));
    }

    #[test]
    fn large_documents_are_sampled_reproducibly() {
        let d = doc_with(10);
        let a = generate_permutations(&d, 20, 42).unwrap();
        let b = generate_permutations(&d, 20, 42).unwrap();
        assert_eq!(a, b);
        let o = orders(&a);
        assert_eq!(o.len(), 20);
        assert_eq!(o.iter().collect::<HashSet<_>>().len(), 20);
        assert!(!o.contains(&(0..10).collect::<Vec<_>>()));
        assert_ne!(a, generate_permutations(&d, 20, 43).unwrap());
    }

    #[test]
    fn permuted_text_follows_order_and_keeps_paragraph_sizes() {
        let mut d = doc_with(5);
        let s = d.paragraphs.remove(0);
        d.paragraphs = vec![s[..2].to_vec(), s[2..].to_vec()];
        let p = permuted_document(&d, &[4, 3, 2, 1, 0], 7).unwrap();
        assert_eq!(p.id, "d#perm7");
        assert_eq!(p.paragraphs[0].len(), 2);
        assert_eq!(p.paragraphs[1].len(), 3);
        let words: Vec<_> = p.tokens().map(|t| t.surface.as_str()).collect();
        assert_eq!(words, ["w4", "w3", "w2", "w1", "w0"]);
        assert!(permuted_document(&d, &[0, 0, 1, 2, 3], 0).is_err());
    }

    #[test]
    fn corpus_permutation_counts() {
        let corpus = Corpus::new(vec![doc_with(3), doc_with(1), {
            let mut d = doc_with(3);
            d.id = "e".into();
            d
        }]);
        let (out, summary) = permute_corpus(&corpus, 20, 5).unwrap();
        assert_eq!(
            summary,
            PermuteSummary {
                originals: 2,
                permutations: 10,
                skipped: 1
            }
        );
        assert_eq!(out.len(), 12);
        assert_eq!(out.ranking_groups().len(), 2);
        assert_eq!(permute_corpus(&corpus, 20, 5).unwrap().0, out);
        assert!(permute_corpus(&corpus, 0, 5).is_err());
    }

    #[test]
    fn single_sentence_is_rejected() {
        assert!(generate_permutations(&doc_with(1), 20, 0).is_err());
    }

    #[test]
    fn transposition_anchor_cases() {
        assert_eq!(
            min_adjacent_transpositions(&[1, 2, 3], &[1, 2, 3]).unwrap(),
            0
        );
        assert_eq!(
            min_adjacent_transpositions(&[3, 2, 1], &[1, 2, 3]).unwrap(),
            3
        );
        assert!(min_adjacent_transpositions(&[1, 1, 2], &[1, 2, 3]).is_err());
        assert!(min_adjacent_transpositions(&[1, 2], &[1, 2, 3]).is_err());
        assert!(min_adjacent_transpositions(&[1, 2, 9], &[1, 2, 3]).is_err());
    }

    /// Shortest path in the adjacent-swap graph, by breadth-first search.
    fn bfs_distance(from: &[usize], to: &[usize]) -> u64 {
        let mut dist: HashMap<Vec<usize>, u64> = HashMap::from([(from.to_vec(), 0)]);
        let mut queue = VecDeque::from([from.to_vec()]);
        while let Some(v) = queue.pop_front() {
            let d = dist[&v];
            if v == to {
                return d;
            }
            for i in 0..v.len().saturating_sub(1) {
                let mut w = v.clone();
                w.swap(i, i + 1);
                if !dist.contains_key(&w) {
                    dist.insert(w.clone(), d + 1);
                    queue.push_back(w);
                }
            }
        }
        unreachable!()
    }

    #[test]
    fn inversion_count_equals_bfs_distance_up_to_five() {
        for n in 1..=5 {
            let identity: Vec<usize> = (0..n).collect();
            let mut v = identity.clone();
            loop {
                assert_eq!(
                    min_adjacent_transpositions(&v, &identity).unwrap(),
                    bfs_distance(&v, &identity)
                );
                if !next_permutation(&mut v) {
                    break;
                }
            }
        }
    }

    proptest! {
        #[test]
        fn inversions_bounded_and_relabeling_invariant(
            (perm, original) in (2usize..12).prop_flat_map(|n| {
                let ids: Vec<usize> = (0..n).map(|i| i * 3 + 1).collect();
                (Just(ids.clone()).prop_shuffle(), Just(ids).prop_shuffle())
            })
        ) {
            let n = perm.len() as u64;
            let inv = min_adjacent_transpositions(&perm, &original).unwrap();
            prop_assert!(inv <= n * (n - 1) / 2);
            let reversed: Vec<usize> = original.iter().rev().copied().collect();
            prop_assert_eq!(inv == n * (n - 1) / 2, perm == reversed);

            // o⁻¹ ∘ p against the identity
            let pos: HashMap<usize, usize> =
                original.iter().enumerate().map(|(i, &x)| (x, i)).collect();
            let composed: Vec<usize> = perm.iter().map(|x| pos[x]).collect();
            let identity: Vec<usize> = (0..perm.len()).collect();
            prop_assert_eq!(inv, min_adjacent_transpositions(&composed, &identity).unwrap());
        }

        #[test]
        fn permutation_sets_have_no_identity_or_duplicates(n in 2usize..9, k in 1usize..25, seed in any::<u64>()) {
            let p = generate_permutations(&doc_with(n), k, seed).unwrap();
            let o = orders(&p);
            let identity: Vec<usize> = (0..n).collect();
            prop_assert!(!o.contains(&identity));
            prop_assert_eq!(o.iter().collect::<HashSet<_>>().len(), o.len());
            let available = factorial(n).unwrap() - 1;
            prop_assert_eq!(o.len() as u128, available.min(k as u128));
        }
    }
}
