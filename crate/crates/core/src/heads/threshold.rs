//! Verification pairs and distance-threshold selection.
//!
//! A pair is predicted "same identity" when the Euclidean distance between
//! the two unit-normalized embeddings is strictly below the threshold.

use std::collections::HashSet;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Pair {
    pub a: usize,
    pub b: usize,
    pub same: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairSet {
    pairs: Vec<Pair>,
}

impl PairSet {
    pub fn new(pairs: Vec<Pair>) -> Result<PairSet> {
        if pairs.is_empty() {
            return Err(Error::Config("empty pair set".into()));
        }
        Ok(PairSet { pairs })
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Fraction of the larger of the two outcomes.
    pub fn majority_prior(&self) -> f64 {
        let same = self.pairs.iter().filter(|p| p.same).count();
        same.max(self.len() - same) as f64 / self.len() as f64
    }

    /// Checks indices against an item count and that both outcomes occur.
    pub fn validate(&self, items: usize) -> Result<()> {
        if let Some(p) = self.pairs.iter().find(|p| p.a >= items || p.b >= items) {
            return Err(Error::Config(format!(
                "pair ({}, {}) indexes past {items} items",
                p.a, p.b
            )));
        }
        let same = self.pairs.iter().filter(|p| p.same).count();
        if same == 0 || same == self.len() {
            return Err(Error::Config(
                "pair set must contain both same and different pairs".into(),
            ));
        }
        Ok(())
    }

    /// `count` distinct unordered pairs, `count / 2` of them same-label.
    pub fn sample(labels: &[u16], count: usize, seed: u64) -> Result<PairSet> {
        let mut same_pool = Vec::new();
        for a in 0..labels.len() {
            for b in a + 1..labels.len() {
                if labels[a] == labels[b] {
                    same_pool.push((a, b));
                }
            }
        }
        let want_same = count / 2;
        let want_diff = count - want_same;
        let n = labels.len() as u128;
        let diff_available = n * n.saturating_sub(1) / 2 - same_pool.len() as u128;
        if count < 2 || same_pool.len() < want_same || diff_available < want_diff as u128 {
            return Err(Error::Config(format!(
                "cannot draw {count} balanced pairs: {} same-label and {diff_available} \
                 different-label pairs exist",
                same_pool.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        same_pool.shuffle(&mut rng);
        let mut pairs: Vec<Pair> = same_pool[..want_same]
            .iter()
            .map(|&(a, b)| Pair { a, b, same: true })
            .collect();
        let mut seen = HashSet::new();
        while seen.len() < want_diff {
            let a = rng.gen_range(0..labels.len());
            let b = rng.gen_range(0..labels.len());
            if labels[a] != labels[b] && seen.insert((a.min(b), a.max(b))) {
                pairs.push(Pair { a, b, same: false });
            }
        }
        PairSet::new(pairs)
    }

    /// CSV with header `index_a,index_b,same`; `same` is 1 or 0.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index_a", "index_b", "same"])?;
        for p in &self.pairs {
            w.write_record([p.a.to_string(), p.b.to_string(), (p.same as u8).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<PairSet> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["index_a", "index_b", "same"] {
            return Err(Error::Format(format!("pair CSV header {header:?}")));
        }
        let mut pairs = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let field = |i: usize| -> Result<usize> {
                record[i].trim().parse().map_err(|_| {
                    Error::Format(format!("pair row {}: bad field {:?}", line + 1, &record[i]))
                })
            };
            let same = match field(2)? {
                0 => false,
                1 => true,
                v => return Err(Error::Format(format!("pair row {}: same = {v}", line + 1))),
            };
            pairs.push(Pair {
                a: field(0)?,
                b: field(1)?,
                same,
            });
        }
        PairSet::new(pairs)
    }
}

/// Scales to unit Euclidean norm; the zero vector is returned unchanged.
pub fn normalize_embedding(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v.to_vec();
    }
    v.iter().map(|x| x / norm).collect()
}

/// Distances between unit-normalized embeddings, in pair order.
pub fn pair_distances(pairs: &PairSet, embeddings: &[Vec<f64>]) -> Result<Vec<f64>> {
    pairs.validate(embeddings.len())?;
    let unit: Vec<Vec<f64>> = embeddings.iter().map(|e| normalize_embedding(e)).collect();
    Ok(pairs
        .pairs()
        .iter()
        .map(|p| {
            unit[p.a]
                .iter()
                .zip(&unit[p.b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdFit {
    pub threshold: f64,
    pub accuracy: f64,
}

/// Best threshold over `0`, every midpoint between consecutive distinct
/// distances, and one past the largest distance. Ties keep the smaller threshold.
pub fn find_threshold(pairs: &PairSet, embeddings: &[Vec<f64>]) -> Result<ThresholdFit> {
    let distances = pair_distances(pairs, embeddings)?;
    let mut sorted: Vec<(f64, bool)> = distances
        .iter()
        .zip(pairs.pairs())
        .map(|(&d, p)| (d, p.same))
        .collect();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = sorted.len();
    let total_diff = sorted.iter().filter(|p| !p.1).count();

    // threshold 0: everything predicted different
    let mut best = ThresholdFit {
        threshold: 0.0,
        accuracy: total_diff as f64 / n as f64,
    };
    let mut same_below = 0usize;
    let mut diff_below = 0usize;
    for k in 0..n {
        if sorted[k].1 {
            same_below += 1;
        } else {
            diff_below += 1;
        }
        let boundary = match sorted.get(k + 1) {
            Some(next) if next.0 == sorted[k].0 => continue,
            Some(next) => 0.5 * (sorted[k].0 + next.0),
            None => sorted[k].0 + 1.0,
        };
        let accuracy = (same_below + total_diff - diff_below) as f64 / n as f64;
        if accuracy > best.accuracy {
            best = ThresholdFit {
                threshold: boundary,
                accuracy,
            };
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(distances: &[f64], pairs: &PairSet) -> f64 {
        let mut candidates = vec![0.0];
        let mut sorted = distances.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        for w in sorted.windows(2) {
            candidates.push(0.5 * (w[0] + w[1]));
        }
        candidates.push(sorted.last().unwrap() + 1.0);
        candidates
            .iter()
            .map(|&t| {
                distances
                    .iter()
                    .zip(pairs.pairs())
                    .filter(|(&d, p)| (d < t) == p.same)
                    .count() as f64
                    / distances.len() as f64
            })
            .fold(0.0, f64::max)
    }

    fn embeddings(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn separable_case() {
        // items 0,1 identical; item 2 antipodal
        let e = vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![-1.0, 0.0]];
        let pairs = PairSet::new(vec![
            Pair {
                a: 0,
                b: 1,
                same: true,
            },
            Pair {
                a: 0,
                b: 2,
                same: false,
            },
            Pair {
                a: 1,
                b: 2,
                same: false,
            },
        ])
        .unwrap();
        let d = pair_distances(&pairs, &e).unwrap();
        assert_eq!(d, vec![0.0, 2.0, 2.0]);
        let fit = find_threshold(&pairs, &e).unwrap();
        assert_eq!(fit.accuracy, 1.0);
        assert!(fit.threshold > 0.0 && fit.threshold < 2.0);
        assert_eq!(fit.threshold, 1.0);
    }

    #[test]
    fn identical_distances_fall_back_to_prior() {
        let e = vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
        ];
        let pairs = PairSet::new(vec![
            Pair {
                a: 0,
                b: 1,
                same: true,
            },
            Pair {
                a: 1,
                b: 2,
                same: false,
            },
            Pair {
                a: 2,
                b: 3,
                same: false,
            },
        ])
        .unwrap();
        let fit = find_threshold(&pairs, &e).unwrap();
        assert!((fit.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(fit.accuracy, pairs.majority_prior());
        assert_eq!(fit.threshold, 0.0);
    }

    #[test]
    fn matches_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..30 {
            let n = 40;
            let e = embeddings(&mut rng, n, if trial % 2 == 0 { 2 } else { 6 });
            let labels: Vec<u16> = (0..n).map(|i| (i % 7) as u16).collect();
            let pairs = PairSet::sample(&labels, 150, trial).unwrap();
            let d = pair_distances(&pairs, &e).unwrap();
            assert!(d.iter().all(|&x| (0.0..=2.0 + 1e-12).contains(&x)));
            let fit = find_threshold(&pairs, &e).unwrap();
            assert_eq!(fit.accuracy, brute_force(&d, &pairs));
            assert!(fit.accuracy >= pairs.majority_prior());
        }
    }

    #[test]
    fn coarse_distances_with_ties() {
        // quantized embeddings force many equal distances
        let e: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i % 3) as f64, ((i / 3) % 2) as f64 + 0.5])
            .collect();
        let labels: Vec<u16> = (0..30).map(|i| (i % 3) as u16).collect();
        let pairs = PairSet::sample(&labels, 200, 9).unwrap();
        let d = pair_distances(&pairs, &e).unwrap();
        assert_eq!(
            find_threshold(&pairs, &e).unwrap().accuracy,
            brute_force(&d, &pairs)
        );
    }

    #[test]
    fn sampling_is_balanced_and_seeded() {
        let labels: Vec<u16> = (0..160).map(|i| (i % 32) as u16).collect();
        let p = PairSet::sample(&labels, 600, 1).unwrap();
        assert_eq!(p.len(), 600);
        assert_eq!(p.pairs().iter().filter(|x| x.same).count(), 300);
        assert!(p
            .pairs()
            .iter()
            .all(|x| (labels[x.a] == labels[x.b]) == x.same && x.a != x.b));
        assert_eq!(p, PairSet::sample(&labels, 600, 1).unwrap());
        // 32 identities of 5 items give only 320 same-label pairs
        assert!(PairSet::sample(&labels, 700, 1).is_err());
        assert!(PairSet::sample(&[0, 1, 2], 10, 1).is_err());
    }

    #[test]
    fn csv_roundtrip_and_errors() {
        let labels: Vec<u16> = (0..20).map(|i| (i % 4) as u16).collect();
        let p = PairSet::sample(&labels, 12, 2).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("index_a,index_b,same\n"));
        assert_eq!(PairSet::read_csv(&buf[..]).unwrap(), p);
        assert!(PairSet::read_csv("a,b,c\n1,2,1\n".as_bytes()).is_err());
        assert!(PairSet::read_csv("index_a,index_b,same\n1,2,3\n".as_bytes()).is_err());
        assert!(PairSet::read_csv("index_a,index_b,same\n".as_bytes()).is_err());
        assert!(find_threshold(&p, &[vec![1.0]]).is_err());
    }
}
