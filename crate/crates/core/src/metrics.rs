//! Distances and two-sample tests between sample sets.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::special::kolmogorov_sf;

/// Default number of random directions for [`sliced_wasserstein2`].
pub const DEFAULT_PROJECTIONS: usize = 128;

/// Row-major `n x d` matrix of finite samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    data: Vec<f64>,
    n: usize,
    d: usize,
    pub label: String,
}

impl SampleSet {
    pub fn new(data: Vec<f64>, d: usize, label: impl Into<String>) -> Result<Self> {
        if d == 0 || !data.len().is_multiple_of(d) {
            return Err(Error::arg("sample data is not a whole number of rows"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("samples must be finite"));
        }
        Ok(Self { n: data.len() / d, data, d, label: label.into() })
    }

    pub fn from_rows(rows: &[Vec<f64>], label: impl Into<String>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::arg("rows have different lengths"));
        }
        Self::new(rows.concat(), d, label)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Inner products of every row with `dir`.
    pub fn project(&self, dir: &[f64]) -> Vec<f64> {
        self.rows().map(|r| crate::linalg::dot(r, dir)).collect()
    }

    /// Rows picked by index, e.g. for bootstrap resamples.
    pub fn select(&self, idx: &[usize]) -> SampleSet {
        let mut data = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        SampleSet { n: idx.len(), data, d: self.d, label: self.label.clone() }
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Exact W2 between the empirical measures of two 1-D samples, integrating
/// the squared difference of their quantile functions.
pub fn wasserstein2_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::arg("wasserstein distance needs non-empty samples"));
    }
    Ok(libm::sqrt(w2_sq_sorted(&sorted(a), &sorted(b))))
}

fn w2_sq_sorted(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == b.len() {
        let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        return s / a.len() as f64;
    }
    // merge the quantile breakpoints i/n and j/m
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut u = 0.0;
    let mut acc = 0.0;
    while i < a.len() && j < b.len() {
        let next_a = (i + 1) as f64 / n;
        let next_b = (j + 1) as f64 / m;
        let next = next_a.min(next_b);
        let diff = a[i] - b[j];
        acc += (next - u) * diff * diff;
        u = next;
        if next_a <= next {
            i += 1;
        }
        if next_b <= next {
            j += 1;
        }
    }
    acc
}

/// Root mean over `n_proj` random unit directions of the squared 1-D W2
/// between the projected samples.
pub fn sliced_wasserstein2(a: &SampleSet, b: &SampleSet, n_proj: usize, rng: &mut RngStream) -> Result<f64> {
    let dirs = random_directions(a.dim(), n_proj, rng)?;
    sliced_wasserstein2_with(a, b, &dirs)
}

/// Unit directions drawn uniformly on the sphere.
pub fn random_directions(d: usize, n_proj: usize, rng: &mut RngStream) -> Result<Vec<Vec<f64>>> {
    if d == 0 || n_proj == 0 {
        return Err(Error::arg("need d >= 1 and at least one projection"));
    }
    Ok((0..n_proj)
        .map(|_| loop {
            let mut v = alloc::vec![0.0; d];
            rng.fill_normal(&mut v);
            let n = crate::linalg::norm(&v);
            if n > 1e-12 {
                v.iter_mut().for_each(|x| *x /= n);
                break v;
            }
        })
        .collect())
}

/// Sliced W2 over fixed directions.
pub fn sliced_wasserstein2_with(a: &SampleSet, b: &SampleSet, dirs: &[Vec<f64>]) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::arg("sample sets have different dimensions"));
    }
    if a.is_empty() || b.is_empty() || dirs.is_empty() {
        return Err(Error::arg("sliced wasserstein needs samples and directions"));
    }
    let total: f64 = dirs.iter().map(|dir| w2_sq_sorted(&sorted(&a.project(dir)), &sorted(&b.project(dir)))).sum();
    Ok(libm::sqrt(total / dirs.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value
/// `Q_KS((sqrt(m) + 0.12 + 0.11/sqrt(m)) D)`, `m = n1 n2 / (n1 + n2)`.
/// Below ten points per side the p-value is unreliable.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::arg("KS test needs non-empty samples"));
    }
    let (sa, sb) = (sorted(a), sorted(b));
    let (n1, n2) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut stat: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        stat = stat.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    let m = n1 * n2 / (n1 + n2);
    Ok(KsResult { statistic: stat, p_value: ks_p_value(stat, m) })
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(a: &[f64], cdf: F) -> Result<KsResult> {
    if a.is_empty() {
        return Err(Error::arg("KS test needs a non-empty sample"));
    }
    let s = sorted(a);
    let n = s.len() as f64;
    let stat = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    Ok(KsResult { statistic: stat, p_value: ks_p_value(stat, n) })
}

fn ks_p_value(stat: f64, m: f64) -> f64 {
    let sm = libm::sqrt(m);
    kolmogorov_sf((sm + 0.12 + 0.11 / sm) * stat)
}
