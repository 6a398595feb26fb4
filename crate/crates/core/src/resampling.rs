//! Pairs bootstrap engine with counter-based substreams, plus the quantile,
//! p-value and Kolmogorov–Smirnov conventions used by every test.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MedError, Result};
use crate::scalar::Scalar;

/// Redraws allowed per replicate before the whole test is abandoned.
pub const MAX_REDRAWS: usize = 100;

/// Environment variable consulted by the CLI for the default worker count.
pub const WORKERS_ENV: &str = "MEDBOOT_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Resample whole rows and refit.
    #[default]
    Pairs,
    /// Resample precomputed projected rows.
    Projected,
}

impl std::str::FromStr for Scheme {
    type Err = MedError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairs" => Ok(Scheme::Pairs),
            "projected" => Ok(Scheme::Projected),
            other => Err(MedError::InvalidArgument(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    pub b: usize,
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Thread count; `None` runs in the ambient rayon pool. Never affects results.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            b: 500,
            seed: 0,
            scheme: Scheme::Pairs,
            workers: None,
        }
    }
}

impl BootstrapConfig {
    pub fn new(b: usize, seed: u64) -> Self {
        Self {
            b,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b == 0 {
            return Err(MedError::InvalidArgument("bootstrap size B must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(MedError::InvalidArgument("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Generator for replicate `index` under `master_seed`.
///
/// The key is the master seed and the ChaCha stream id is the replicate index, so
/// distinct indices never share a keystream.
pub fn derive_substream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// SplitMix64 finalizer; derives child seeds for nested or per-method engines.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n` row indices drawn uniformly with replacement.
pub fn draw_pair_indices<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    assert!(n >= 1, "cannot resample an empty dataset");
    let bound = u32::try_from(n).expect("row count exceeds u32");
    (0..n).map(|_| rng.gen_range(0..bound) as usize).collect()
}

/// Run `b` replicates in parallel. Replicate `r` sees only `derive_substream(seed, r)`;
/// numerical failures are redrawn from the same stream.
pub fn run_replicates<V, F>(n: usize, config: &BootstrapConfig, f: F) -> Result<Vec<V>>
where
    V: Send,
    F: Fn(&[usize]) -> Result<V> + Sync,
{
    config.validate()?;
    let job = || {
        (0..config.b)
            .into_par_iter()
            .map(|r| one_replicate(n, config.seed, r, &f))
            .collect::<Result<Vec<V>>>()
    };
    with_workers(config.workers, job)
}

fn one_replicate<V, F>(n: usize, seed: u64, r: usize, f: &F) -> Result<V>
where
    F: Fn(&[usize]) -> Result<V>,
{
    let mut rng = derive_substream(seed, r as u64);
    let mut last = String::new();
    for _ in 0..MAX_REDRAWS {
        let idx = draw_pair_indices(n, &mut rng);
        match f(&idx) {
            Ok(v) => return Ok(v),
            Err(e) if e.is_numerical() => last = e.to_string(),
            Err(e) => return Err(e),
        }
    }
    Err(MedError::DegenerateResampling {
        replicate: r,
        attempts: MAX_REDRAWS,
        last,
    })
}

/// Run `job` on a dedicated pool of `workers` threads, or in the ambient pool.
pub fn with_workers<R: Send>(workers: Option<usize>, job: impl FnOnce() -> R + Send) -> R {
    match workers {
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(job),
            Err(_) => job(),
        },
        None => job(),
    }
}

/// Sorted bootstrap draws with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDistribution<T> {
    pub samples: Vec<T>,
    pub method: String,
    pub config: BootstrapConfig,
}

impl<T: Scalar> BootstrapDistribution<T> {
    /// Sort `samples`; non-finite draws are rejected.
    pub fn new(mut samples: Vec<T>, method: impl Into<String>, config: BootstrapConfig) -> Result<Self> {
        if samples.is_empty() {
            return Err(MedError::InvalidArgument("empty bootstrap distribution".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(MedError::DegenerateResponse("non-finite bootstrap draw".into()));
        }
        samples.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        Ok(Self {
            samples,
            method: method.into(),
            config,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn quantile(&self, p: f64) -> T {
        empirical_quantile(&self.samples, p)
    }

    pub fn pvalue(&self, observed: T) -> f64 {
        two_sided_pvalue(&self.samples, observed)
    }

    /// One-column CSV with a `value` header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["value"])?;
        for v in &self.samples {
            wtr.write_record([format!("{v}")])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// The `⌈p·B⌉`-th smallest of the sorted `samples`, clamped to `[1, B]`.
pub fn empirical_quantile<T: Scalar>(sorted: &[T], p: f64) -> T {
    let b = sorted.len();
    assert!(b > 0, "empty distribution");
    // guard against p·B landing a hair above an integer
    let k = ((p * b as f64) - 1e-9).ceil().clamp(1.0, b as f64) as usize;
    sorted[k - 1]
}

/// `min(1, 2·min(1 + #{u ≤ t}, 1 + #{u ≥ t}) / (B + 1))`.
pub fn two_sided_pvalue<T: Scalar>(samples: &[T], observed: T) -> f64 {
    let b = samples.len();
    assert!(b > 0, "empty distribution");
    let le = samples.iter().filter(|&&u| u <= observed).count();
    let ge = samples.iter().filter(|&&u| u >= observed).count();
    let tail = (1 + le).min(1 + ge) as f64;
    (2.0 * tail / (b as f64 + 1.0)).min(1.0)
}

/// `sup_x |F_m(x) − x|` for a sample of p-values.
pub fn ks_uniform_distance(pvalues: &[f64]) -> f64 {
    let mut xs = pvalues.to_vec();
    xs.sort_by(f64::total_cmp);
    let m = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let hi = (i as f64 + 1.0) / m - x;
        let lo = x - i as f64 / m;
        d.max(hi).max(lo)
    })
}

/// Limiting Kolmogorov distribution `P(K ≤ x)`.
pub fn kolmogorov_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (1.0 - 2.0 * s).clamp(0.0, 1.0)
}

/// Critical value of the one-sample KS distance for `m` points at level `alpha`,
/// using the asymptotic quantile with Stephens' small-sample correction.
pub fn ks_critical_value(m: usize, alpha: f64) -> f64 {
    let target = 1.0 - alpha;
    let (mut lo, mut hi) = (0.0f64, 5.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let k = 0.5 * (lo + hi);
    let rm = (m as f64).sqrt();
    k / (rm + 0.12 + 0.11 / rm)
}

/// Whether a p-value sample is consistent with uniformity at `alpha`.
pub fn ks_uniform_passes(pvalues: &[f64], alpha: f64) -> bool {
    !pvalues.is_empty() && ks_uniform_distance(pvalues) < ks_critical_value(pvalues.len(), alpha)
}

/// Fraction of p-values at or below `omega`.
pub fn rejection_rate(pvalues: &[f64], omega: f64) -> f64 {
    if pvalues.is_empty() {
        return 0.0;
    }
    pvalues.iter().filter(|&&p| p <= omega).count() as f64 / pvalues.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn substreams_differ_and_replay() {
        let a = derive_substream(7, 0).next_u64();
        let b = derive_substream(7, 1).next_u64();
        assert_ne!(a, b);
        let mut s1 = derive_substream(7, 3);
        let mut s2 = derive_substream(7, 3);
        for _ in 0..16 {
            assert_eq!(s1.next_u64(), s2.next_u64());
        }
    }

    #[test]
    fn single_row_indices() {
        let mut rng = derive_substream(1, 0);
        assert_eq!(draw_pair_indices(1, &mut rng), vec![0]);
    }

    #[test]
    fn quantile_convention() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(empirical_quantile(&s, 0.05), 5.0);
        assert_eq!(empirical_quantile(&s, 0.5), 50.0);
        assert_eq!(empirical_quantile(&[-3.0, -1.0, 0.0, 2.0, 4.0], 0.975), 4.0);
    }

    #[test]
    fn pvalue_counts() {
        let s = [-3.0, -1.0, 0.0, 2.0, 4.0];
        assert!((two_sided_pvalue(&s, 4.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((two_sided_pvalue(&s, 10.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(two_sided_pvalue(&[-2.0, -1.0, 0.0, 1.0, 2.0], 0.0), 1.0);
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_uniform_distance(&[0.5]), 0.5);
        assert!((ks_uniform_distance(&[0.25, 0.75]) - 0.25).abs() < 1e-15);
        let m = 19;
        let grid: Vec<f64> = (1..=m).map(|i| i as f64 / (m as f64 + 1.0)).collect();
        assert!((ks_uniform_distance(&grid) - 1.0 / 20.0).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_quantile_matches_table() {
        // K_{0.99} = 1.6276, K_{0.95} = 1.3581
        let c99 = ks_critical_value(1, 0.01) * (1.0 + 0.12 + 0.11);
        let c95 = ks_critical_value(1, 0.05) * (1.0 + 0.12 + 0.11);
        assert!((c99 - 1.6276).abs() < 1e-3);
        assert!((c95 - 1.3581).abs() < 1e-3);
    }

    #[test]
    fn degenerate_replicates_abort() {
        let cfg = BootstrapConfig::new(3, 5);
        let r: Result<Vec<()>> =
            run_replicates(4, &cfg, |_| Err(MedError::SingularDesign("always".into())));
        assert!(matches!(r, Err(MedError::DegenerateResampling { attempts: 100, .. })));
    }
}
