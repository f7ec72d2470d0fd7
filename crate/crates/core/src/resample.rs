//! Randomized selection: stratified subsampling, percentile bootstrap and
//! group-aware stratified k-fold. Every function is a pure function of its
//! inputs and seed.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator for item `stream` of a batch seeded with `seed`.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = rng(seed);
    r.set_stream(stream);
    r
}

/// Draws `round(fraction · count)` indices (at least one) from every class
/// without replacement. The result is sorted ascending.
pub fn stratified_subsample(labels: &[usize], fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if labels.is_empty() {
        return Err(Error::invalid("cannot subsample an empty label list"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "subsample fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = rng(seed);
    let mut picked = Vec::new();
    for members in by_class.values_mut() {
        let take = ((fraction * members.len() as f64).round() as usize).clamp(1, members.len());
        let (chosen, _) = members.partial_shuffle(&mut rng, take);
        picked.extend_from_slice(chosen);
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Percentile confidence interval around a point estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCI {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub reps: usize,
    pub level: f64,
}

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `(lo, hi)` percentile interval of `stats` at `level`.
pub fn percentile_interval(stats: &[f64], level: f64) -> (f64, f64) {
    let mut sorted = stats.to_vec();
    sorted.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    (
        quantile_sorted(&sorted, alpha),
        quantile_sorted(&sorted, 1.0 - alpha),
    )
}

/// Percentile bootstrap. Replicate `r` resamples `n` indices with
/// replacement using seed `seed + r`; the statistic receives the index list.
/// The point estimate is the statistic on `0..n`.
pub fn bootstrap_ci<F>(n: usize, statistic: F, reps: usize, level: f64, seed: u64) -> Result<BootstrapCI>
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    if reps < 2 {
        return Err(Error::invalid(format!("bootstrap needs at least 2 replicates, got {reps}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if n == 0 {
        return Err(Error::invalid("cannot bootstrap an empty sample"));
    }
    let all: Vec<usize> = (0..n).collect();
    let point = statistic(&all)?;
    let stats: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let rep_seed = seed.wrapping_add(r as u64);
            let mut rng = rng(rep_seed);
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            statistic(&idx).map_err(|e| Error::Bootstrap {
                rep: r,
                seed: rep_seed,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let (lo, hi) = percentile_interval(&stats, level);
    Ok(BootstrapCI {
        point,
        lo,
        hi,
        reps,
        level,
    })
}

/// Fold id of every sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    /// Indices outside `fold`.
    pub fn complement(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    /// CSV `sample_id,fold`.
    pub fn write_csv<W: Write, S: AsRef<str>>(&self, sample_ids: &[S], writer: W) -> Result<()> {
        if sample_ids.len() != self.fold_of.len() {
            return Err(Error::DimensionMismatch {
                expected: self.fold_of.len(),
                found: sample_ids.len(),
            });
        }
        let mut w = csv::Writer::from_writer(writer);
        let map_err = |e: csv::Error| Error::invalid(format!("writing folds: {e}"));
        w.write_record(["sample_id", "fold"]).map_err(map_err)?;
        for (id, f) in sample_ids.iter().zip(&self.fold_of) {
            w.write_record([id.as_ref(), &f.to_string()]).map_err(map_err)?;
        }
        w.flush().map_err(|e| Error::invalid(format!("writing folds: {e}")))?;
        Ok(())
    }
}

fn seeded_hash(seed: u64, id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

struct Group {
    members: Vec<usize>,
    positives: usize,
    stratum: usize,
    key: u64,
}

/// Assigns whole groups to `k` folds while balancing class counts.
///
/// Binary labels: groups are visited by (positives desc, size desc, seeded
/// hash); a group with positives goes to the fold with the fewest positives,
/// a negatives-only group to the fold with the fewest negatives, ties broken
/// by fold size and then fold index.
///
/// Multiclass labels: each group is filed under its majority class and
/// goes to the fold holding the fewest samples of that class.
pub fn group_stratified_kfold<S: AsRef<str>>(
    labels: &[usize],
    group_ids: &[S],
    k: usize,
    seed: u64,
) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::invalid(format!("k-fold needs k >= 2, got {k}")));
    }
    if labels.len() != group_ids.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: group_ids.len(),
        });
    }
    let mut by_id: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in group_ids.iter().enumerate() {
        by_id.entry(g.as_ref()).or_default().push(i);
    }
    if by_id.len() < k {
        return Err(Error::invalid(format!(
            "{} groups cannot fill {k} folds",
            by_id.len()
        )));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let binary = num_classes <= 2;

    let mut groups: Vec<Group> = by_id
        .into_iter()
        .map(|(id, members)| {
            let mut counts = vec![0usize; num_classes];
            for &i in &members {
                counts[labels[i]] += 1;
            }
            let stratum = counts
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .map_or(0, |(c, _)| c);
            Group {
                positives: if binary { counts.get(1).copied().unwrap_or(0) } else { 0 },
                stratum,
                key: seeded_hash(seed, id),
                members,
            }
        })
        .collect();
    groups.sort_by(|a, b| {
        b.positives
            .cmp(&a.positives)
            .then(b.members.len().cmp(&a.members.len()))
            .then(a.key.cmp(&b.key))
    });

    let mut fold_of = vec![usize::MAX; labels.len()];
    let mut size = vec![0usize; k];
    let mut class_count = vec![vec![0usize; num_classes.max(2)]; k];
    for g in &groups {
        let class = if binary {
            usize::from(g.positives > 0)
        } else {
            g.stratum
        };
        let fold = (0..k)
            .min_by_key(|&f| (class_count[f][class], size[f], f))
            .expect("k >= 2");
        for &i in &g.members {
            fold_of[i] = fold;
            class_count[fold][labels[i]] += 1;
        }
        size[fold] += g.members.len();
    }
    Ok(FoldAssignment { k, fold_of })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsample_preserves_class_ratio() {
        let labels: Vec<usize> = std::iter::repeat_n(0, 90).chain(std::iter::repeat_n(1, 10)).collect();
        let s = stratified_subsample(&labels, 0.1, 4).unwrap();
        assert_eq!(s.iter().filter(|&&i| labels[i] == 0).count(), 9);
        assert_eq!(s.iter().filter(|&&i| labels[i] == 1).count(), 1);
    }

    #[test]
    fn full_fraction_is_identity() {
        let labels = vec![2, 0, 1, 1, 0];
        assert_eq!(stratified_subsample(&labels, 1.0, 9).unwrap(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn subsample_is_seeded() {
        let labels: Vec<usize> = (0..200).map(|i| i % 3).collect();
        let a = stratified_subsample(&labels, 0.2, 17).unwrap();
        assert_eq!(a, stratified_subsample(&labels, 0.2, 17).unwrap());
        assert_ne!(a, stratified_subsample(&labels, 0.2, 18).unwrap());
    }

    #[test]
    fn subsample_minimum_one_per_class() {
        let labels = vec![0, 0, 0, 1];
        let s = stratified_subsample(&labels, 0.01, 0).unwrap();
        assert_eq!(s.len(), 2);
        assert!(stratified_subsample(&[], 0.5, 0).is_err());
        assert!(stratified_subsample(&labels, 0.0, 0).is_err());
    }

    #[test]
    fn constant_statistic_degenerate_ci() {
        let ci = bootstrap_ci(10, |_| Ok(3.5), 10, 0.95, 1).unwrap();
        assert_eq!((ci.point, ci.lo, ci.hi), (3.5, 3.5, 3.5));
    }

    #[test]
    fn interpolated_percentiles() {
        let (lo, hi) = percentile_interval(&[3.0, 1.0], 0.95);
        assert!((lo - 1.05).abs() < 1e-12);
        assert!((hi - 2.95).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_error_carries_seed() {
        let err = bootstrap_ci(
            5,
            |idx| {
                if idx == [0, 1, 2, 3, 4] {
                    Ok(1.0)
                } else {
                    Err(Error::invalid("boom"))
                }
            },
            3,
            0.95,
            40,
        )
        .unwrap_err();
        match err {
            Error::Bootstrap { seed, rep, .. } => assert_eq!(seed, 40 + rep as u64),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn singleton_groups_one_positive_per_fold() {
        let labels = vec![1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
        let groups: Vec<String> = (0..10).map(|i| format!("g{i}")).collect();
        let f = group_stratified_kfold(&labels, &groups, 5, 0).unwrap();
        for fold in 0..5 {
            let pos = f.members(fold).iter().filter(|&&i| labels[i] == 1).count();
            assert_eq!(pos, 1);
        }
    }

    #[test]
    fn group_holding_all_positives_stays_whole() {
        let labels = vec![1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        let groups = ["p", "p", "p", "a", "b", "c", "d", "e", "f", "g"];
        let f = group_stratified_kfold(&labels, &groups, 5, 3).unwrap();
        let fold = f.fold_of[0];
        assert!(f.fold_of[..3].iter().all(|&x| x == fold));
        assert_eq!(f.members(fold).iter().filter(|&&i| labels[i] == 1).count(), 3);
    }

    #[test]
    fn too_few_groups() {
        let labels = vec![0, 1, 0];
        assert!(group_stratified_kfold(&labels, &["a", "a", "b"], 5, 0).is_err());
        assert!(group_stratified_kfold(&labels, &["a", "b", "c"], 1, 0).is_err());
    }

    #[test]
    fn multiclass_folds_balanced() {
        let labels: Vec<usize> = (0..100).map(|i| i % 10).collect();
        let groups: Vec<String> = (0..100).map(|i| format!("s{i}")).collect();
        let f = group_stratified_kfold(&labels, &groups, 5, 2).unwrap();
        for fold in 0..5 {
            let m = f.members(fold);
            assert_eq!(m.len(), 20);
            for c in 0..10 {
                assert_eq!(m.iter().filter(|&&i| labels[i] == c).count(), 2);
            }
        }
    }

    #[test]
    fn folds_csv() {
        let f = FoldAssignment { k: 2, fold_of: vec![0, 1] };
        let mut buf = Vec::new();
        f.write_csv(&["a", "b"], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "sample_id,fold\na,0\nb,1\n");
    }
}
