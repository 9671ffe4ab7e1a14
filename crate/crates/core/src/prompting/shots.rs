use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Label, Sample};
use crate::error::{Error, Result};
use crate::text::tokenize;

const MAX_ITER: usize = 100;

/// Sparse term-frequency vector normalized by document length.
struct Doc {
    terms: Vec<(usize, f64)>,
    norm2: f64,
}

fn vectorize(samples: &[Sample]) -> (Vec<Doc>, usize) {
    let mut vocab: BTreeMap<String, usize> = BTreeMap::new();
    let tokenized: Vec<Vec<String>> = samples.iter().map(|s| tokenize(&s.text)).collect();
    for toks in &tokenized {
        for t in toks {
            let next = vocab.len();
            vocab.entry(t.clone()).or_insert(next);
        }
    }
    let docs = tokenized
        .iter()
        .map(|toks| {
            let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
            for t in toks {
                *counts.entry(vocab[t]).or_insert(0.0) += 1.0;
            }
            let n = toks.len().max(1) as f64;
            let terms: Vec<(usize, f64)> = counts.into_iter().map(|(i, c)| (i, c / n)).collect();
            let norm2 = terms.iter().map(|(_, v)| v * v).sum();
            Doc { terms, norm2 }
        })
        .collect();
    (docs, vocab.len())
}

/// Squared Euclidean distance between a sparse document and a dense centroid.
fn dist2(doc: &Doc, centroid: &[f64], centroid_norm2: f64) -> f64 {
    let dot: f64 = doc.terms.iter().map(|&(i, v)| v * centroid[i]).sum();
    (doc.norm2 - 2.0 * dot + centroid_norm2).max(0.0)
}

fn to_dense(doc: &Doc, dim: usize) -> Vec<f64> {
    let mut c = vec![0.0; dim];
    for &(i, v) in &doc.terms {
        c[i] = v;
    }
    c
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// k-means++ seeding followed by Lloyd iterations (capped). Empty clusters
/// keep their previous centroid.
fn kmeans(docs: &[Doc], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let first = rng.random_range(0..docs.len());
    let mut centroids = vec![to_dense(&docs[first], dim)];
    let mut best: Vec<f64> = docs.iter().map(|d| dist2(d, &centroids[0], norm2(&centroids[0]))).collect();
    while centroids.len() < k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = docs.len() - 1;
            for (i, w) in best.iter().enumerate() {
                if r < *w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            chosen
        } else {
            rng.random_range(0..docs.len())
        };
        let c = to_dense(&docs[pick], dim);
        let cn = norm2(&c);
        for (b, d) in best.iter_mut().zip(docs) {
            *b = b.min(dist2(d, &c, cn));
        }
        centroids.push(c);
    }

    let mut assign = vec![usize::MAX; docs.len()];
    for _ in 0..MAX_ITER {
        let norms: Vec<f64> = centroids.iter().map(|c| norm2(c)).collect();
        let mut changed = false;
        for (a, d) in assign.iter_mut().zip(docs) {
            let nearest = nearest_centroid(d, &centroids, &norms);
            if *a != nearest {
                *a = nearest;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (d, &a) in docs.iter().zip(&assign) {
            counts[a] += 1;
            for &(i, v) in &d.terms {
                sums[a][i] += v;
            }
        }
        for ((c, s), n) in centroids.iter_mut().zip(sums).zip(counts) {
            if n > 0 {
                *c = s.into_iter().map(|x| x / n as f64).collect();
            }
        }
    }
    centroids
}

fn nearest_centroid(d: &Doc, centroids: &[Vec<f64>], norms: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, (c, n)) in centroids.iter().zip(norms).enumerate() {
        let dd = dist2(d, c, *n);
        if dd < best.1 {
            best = (j, dd);
        }
    }
    best.0
}

/// Pick `k` exemplars: cluster the training texts into `k` groups by
/// normalized term frequency and take the sample nearest each centroid. If a
/// class then holds more than `ceil(k/2)` shots, its shots farthest from
/// their centroid are swapped for the nearest unused samples of the other
/// class.
pub fn select_shots(train: &[Sample], k: usize, seed: u64) -> Result<Vec<Sample>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    if k > train.len() {
        return Err(Error::Invalid(format!("{k} shots requested from {} training samples", train.len())));
    }
    if let Some(s) = train.iter().find(|s| s.label.is_ignore()) {
        return Err(Error::Invalid(format!("sample `{}` has the ignore label", s.id)));
    }
    let has_both = train.iter().any(|s| s.label == Label::Positive) && train.iter().any(|s| s.label == Label::Negative);
    if k >= 2 && !has_both {
        return Err(Error::Invalid("shot selection with k >= 2 needs both classes in the pool".into()));
    }

    let (docs, dim) = vectorize(train);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centroids = kmeans(&docs, dim, k, &mut rng);
    let norms: Vec<f64> = centroids.iter().map(|c| norm2(c)).collect();

    let mut used = vec![false; train.len()];
    // (sample index, centroid index, distance)
    let mut chosen: Vec<(usize, usize, f64)> = Vec::with_capacity(k);
    for (j, c) in centroids.iter().enumerate() {
        let pick = (0..train.len())
            .filter(|&i| !used[i])
            .map(|i| (i, dist2(&docs[i], c, norms[j])))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let (i, d) = pick.expect("k <= number of samples");
        used[i] = true;
        chosen.push((i, j, d));
    }

    let cap = k.div_ceil(2);
    for label in [Label::Positive, Label::Negative] {
        let other = if label == Label::Positive { Label::Negative } else { Label::Positive };
        while chosen.iter().filter(|c| train[c.0].label == label).count() > cap {
            let (slot, _) = chosen
                .iter()
                .enumerate()
                .filter(|(_, c)| train[c.0].label == label)
                .max_by(|a, b| a.1 .2.total_cmp(&b.1 .2))
                .expect("surplus class present");
            let j = chosen[slot].1;
            let replacement = (0..train.len())
                .filter(|&i| !used[i] && train[i].label == other)
                .map(|i| (i, dist2(&docs[i], &centroids[j], norms[j])))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            let Some((i, d)) = replacement else {
                break;
            };
            used[chosen[slot].0] = false;
            used[i] = true;
            chosen[slot] = (i, j, d);
        }
    }
    Ok(chosen.into_iter().map(|(i, _, _)| train[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Origin, Task};
    use std::collections::BTreeSet;

    fn pool() -> Vec<Sample> {
        // two vocabulary clusters, each with both classes
        let mut out = Vec::new();
        for i in 0..20 {
            let (text, cluster) = if i % 2 == 0 {
                (format!("alpha beta gamma{}", i % 3), "a")
            } else {
                (format!("delta epsilon zeta{}", i % 3), "b")
            };
            let label = if i % 4 < 2 { Label::Positive } else { Label::Negative };
            out.push(Sample::new(format!("{cluster}{i}"), text, Task::Humor, label, Origin::CodeMixed, "cm"));
        }
        out
    }

    #[test]
    fn covers_both_clusters() {
        let shots = select_shots(&pool(), 4, 7).unwrap();
        assert_eq!(shots.len(), 4);
        assert!(shots.iter().any(|s| s.id.starts_with('a')));
        assert!(shots.iter().any(|s| s.id.starts_with('b')));
        let ids: BTreeSet<&str> = shots.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids.len(), 4);
    }

    #[test]
    fn deterministic_and_edge_cases() {
        let p = pool();
        assert_eq!(select_shots(&p, 8, 3).unwrap(), select_shots(&p, 8, 3).unwrap());
        assert!(select_shots(&p, 0, 3).unwrap().is_empty());
        assert!(select_shots(&p[..3], 4, 3).is_err());
        let one_class: Vec<Sample> = p.iter().filter(|s| s.label == Label::Positive).cloned().collect();
        assert!(select_shots(&one_class, 2, 0).is_err());
    }

    #[test]
    fn class_balance_cap() {
        // 19 positives in one tight cluster, a single negative far away
        let mut p: Vec<Sample> = (0..19)
            .map(|i| Sample::new(format!("p{i}"), format!("ha ha {}", i % 5), Task::Humor, Label::Positive, Origin::CodeMixed, "cm"))
            .collect();
        p.push(Sample::new("n0", "serious news", Task::Humor, Label::Negative, Origin::CodeMixed, "cm"));
        for k in [2, 4, 12] {
            let shots = select_shots(&p, k, 1).unwrap();
            assert!(shots.iter().any(|s| s.label == Label::Negative), "k = {k}");
        }
    }
}
