use std::collections::BTreeMap;

use crate::scalar::Scalar;
use crate::workload::SizeClass;

use super::record::FlowRecord;

/// Nearest-rank percentile of an ascending slice; `p` in (0, 100].
pub fn nearest_rank<T: Copy>(sorted: &[T], p: f64) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, n) - 1])
}

fn completed_fcts(records: &[FlowRecord], class: Option<SizeClass>) -> Vec<u64> {
    let mut v: Vec<u64> = records
        .iter()
        .filter(|r| class.is_none_or(|c| r.class == c))
        .filter_map(|r| r.fct_us)
        .collect();
    v.sort_unstable();
    v
}

/// `(p, fct_us)` pairs over completed flows; empty when nothing matches.
pub fn fct_percentiles(
    records: &[FlowRecord],
    class: Option<SizeClass>,
    percentiles: &[f64],
) -> Vec<(f64, u64)> {
    let v = completed_fcts(records, class);
    percentiles
        .iter()
        .filter_map(|&p| nearest_rank(&v, p).map(|x| (p, x)))
        .collect()
}

pub fn mean<T: Scalar>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    let n = T::from_usize(xs.len())?;
    Some(xs.iter().copied().sum::<T>() / n)
}

pub fn mean_fct_us(records: &[FlowRecord], class: Option<SizeClass>) -> Option<f64> {
    let v: Vec<f64> = completed_fcts(records, class)
        .into_iter()
        .map(|x| x as f64)
        .collect();
    mean(&v)
}

/// Empirical CDF as `(value, cumulative fraction)` at each distinct value.
pub fn ecdf<T: Copy + PartialOrd>(values: &[T]) -> Vec<(T, f64)> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("comparable values"));
    let n = v.len() as f64;
    let mut out: Vec<(T, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = f,
            _ => out.push((*x, f)),
        }
    }
    out
}

pub fn fct_cdf(records: &[FlowRecord], class: Option<SizeClass>) -> Vec<(u64, f64)> {
    ecdf(&completed_fcts(records, class))
}

/// Fraction of the selected flows whose FCT is at least `threshold_us`.
/// Flows cut off by the end of the run count as slow.
pub fn fraction_at_least(
    records: &[FlowRecord],
    class: Option<SizeClass>,
    threshold_us: u64,
) -> Option<f64> {
    let sel: Vec<_> = records
        .iter()
        .filter(|r| class.is_none_or(|c| r.class == c))
        .collect();
    if sel.is_empty() {
        return None;
    }
    let slow = sel
        .iter()
        .filter(|r| r.fct_us.is_none_or(|f| f >= threshold_us))
        .count();
    Some(slow as f64 / sel.len() as f64)
}

/// Mean FCT of each group, keyed by group id (e.g. incast round).
pub fn group_means(pairs: impl IntoIterator<Item = (u32, u64)>) -> BTreeMap<u32, f64> {
    let mut acc: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for (g, v) in pairs {
        let e = acc.entry(g).or_default();
        e.0 += v as f64;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(g, (s, n))| (g, s / n as f64))
        .collect()
}

/// Ten equal-width bins over [0, 1]; bin `k` holds `(k/10, (k+1)/10]`
/// and bin 0 also holds 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Decile {
    pub counts: [u64; 10],
}

impl Decile {
    pub fn bin(v: f64) -> usize {
        let k = (v * 10.0 - 1e-9).ceil() as i64 - 1;
        k.clamp(0, 9) as usize
    }

    pub fn add(&mut self, v: f64) {
        self.counts[Self::bin(v)] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Probability mass per bin; all zero when empty.
    pub fn masses<T: Scalar>(&self) -> [T; 10] {
        let n = self.total();
        let mut out = [T::zero(); 10];
        if n == 0 {
            return out;
        }
        let nf = T::from_u64(n).expect("count fits");
        for (o, c) in out.iter_mut().zip(self.counts) {
            *o = T::from_u64(c).expect("count fits") / nf;
        }
        out
    }
}
