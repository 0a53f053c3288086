//! Percentile split candidates.
//!
//! Cut points are computed once per feature over the observed training
//! values and reused at every depth. Distinct values are swept in order and
//! a bin closes once it holds roughly `n / n_bins` observations; a value
//! whose own count reaches that mass always starts a fresh bin, so large
//! point masses (an out-of-range fill value, say) end up isolated.

/// Bin index reserved for missing entries.
pub const MISSING_BIN: u16 = u16::MAX;
pub const MAX_BINS: usize = 30_000;

#[derive(Debug, Clone)]
pub struct BinnedFeatures {
    n_rows: usize,
    /// Column-major bin indices, `bins[feature][row]`.
    bins: Vec<Vec<u16>>,
    cuts: Vec<Vec<f64>>,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m > a && m < b {
        m
    } else {
        b
    }
}

/// Ascending cut points for one feature; `x < cuts[k]` sits left of cut `k`.
pub fn cut_points(values: &mut Vec<f64>, n_bins: usize) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    for &v in values.iter() {
        match distinct.last_mut() {
            Some((last, c)) if *last == v => *c += 1,
            _ => distinct.push((v, 1)),
        }
    }
    if distinct.len() <= 1 {
        return Vec::new();
    }
    if distinct.len() <= n_bins {
        return distinct.windows(2).map(|w| midpoint(w[0].0, w[1].0)).collect();
    }
    let target = values.len() as f64 / n_bins as f64;
    let mut cuts = Vec::with_capacity(n_bins);
    let mut acc = 0usize;
    for i in 0..distinct.len() {
        let (v, c) = distinct[i];
        if i > 0 && acc > 0 && (acc as f64 >= target || c as f64 >= target) {
            cuts.push(midpoint(distinct[i - 1].0, v));
            acc = 0;
        }
        acc += c;
    }
    cuts
}

impl BinnedFeatures {
    /// Bin row-major feature rows. `n_bins` is clamped to `[2, MAX_BINS]`.
    pub fn new(rows: &[Vec<Option<f64>>], n_features: usize, n_bins: usize) -> Self {
        let n_bins = n_bins.clamp(2, MAX_BINS);
        let mut cuts = Vec::with_capacity(n_features);
        let mut bins = Vec::with_capacity(n_features);
        for j in 0..n_features {
            let mut observed: Vec<f64> = rows.iter().filter_map(|r| r[j]).collect();
            let c = cut_points(&mut observed, n_bins);
            bins.push(
                rows.iter()
                    .map(|r| match r[j] {
                        Some(x) => bin_of(&c, x),
                        None => MISSING_BIN,
                    })
                    .collect(),
            );
            cuts.push(c);
        }
        Self {
            n_rows: rows.len(),
            bins,
            cuts,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.cuts.len()
    }

    pub fn cuts(&self, feature: usize) -> &[f64] {
        &self.cuts[feature]
    }

    pub fn column(&self, feature: usize) -> &[u16] {
        &self.bins[feature]
    }

    #[inline]
    pub fn bin(&self, feature: usize, row: usize) -> u16 {
        self.bins[feature][row]
    }
}

/// Number of cuts `<= x`; consistent with routing `x < cut` to the left.
#[inline]
pub fn bin_of(cuts: &[f64], x: f64) -> u16 {
    cuts.partition_point(|&c| c <= x) as u16
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_feature_gets_every_midpoint() {
        let mut v = vec![3.0, 1.0, 2.0, 2.0];
        assert_eq!(cut_points(&mut v, 64), vec![1.5, 2.5]);
    }

    #[test]
    fn point_mass_is_isolated() {
        let mut v: Vec<f64> = (0..600).map(|i| i as f64 / 600.0).collect();
        v.extend(std::iter::repeat(1e20).take(400));
        let cuts = cut_points(&mut v, 16);
        assert!(cuts.len() <= 32);
        let last = *cuts.last().unwrap();
        assert!(last > 1.0 && last < 1e20);
    }

    #[test]
    fn routing_consistent_with_cuts() {
        let cuts = [0.5, 1.5];
        for (x, b) in [(0.0, 0), (0.5, 1), (1.0, 1), (1.5, 2), (9.0, 2)] {
            assert_eq!(bin_of(&cuts, x), b);
        }
    }
}
