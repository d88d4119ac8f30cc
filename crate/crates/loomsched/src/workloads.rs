//! Iteration kernels and cost-vector generators.
//!
//! Two kinds of workload feed the backends: the real Mandelbrot escape-time
//! kernel, and synthetic cost vectors with a configurable distribution so
//! load imbalance can be dialed up or down. Cost vectors can also be read
//! from a plain text file (one integer nanosecond value per line, `#`
//! comments ignored).
//!
//! Reproducibility: all randomness comes from SplitMix64 (Steele, Lea &
//! Flood; Vigna's reference implementation), a counter-based 64-bit
//! generator — output `i` is a pure function of `(seed, i)`. The
//! distribution transforms avoid `libm` calls (only IEEE-754 exactly
//! rounded ops plus a fixed-order series for `ln`), so generated vectors
//! are byte-identical across platforms for a given seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output at `index` for a given seed.
///
/// Equivalent to the `index`-th draw (0-based) of the sequential reference
/// generator seeded with `seed`.
#[inline]
pub fn splitmix64(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Streaming form of [`splitmix64`].
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    seed: u64,
    index: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { seed, index: 0 }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = splitmix64(self.seed, self.index);
        self.index += 1;
        v
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `0..bound` by rejection (no modulo bias).
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        let zone = u64::MAX - u64::MAX % bound;
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % bound;
            }
        }
    }
}

/// Natural logarithm with a fixed evaluation order, bit-stable across
/// platforms. Accurate to ~1e-14 relative; callers only need
/// distributional accuracy plus determinism.
fn portable_ln(x: f64) -> f64 {
    debug_assert!(x > 0.0 && x.is_finite());
    const SQRT2: f64 = std::f64::consts::SQRT_2;
    let bits = x.to_bits();
    let mut exp = ((bits >> 52) & 0x7FF) as i64 - 1023;
    let mut m = f64::from_bits((bits & 0x000F_FFFF_FFFF_FFFF) | 0x3FF0_0000_0000_0000);
    if m > SQRT2 {
        m *= 0.5;
        exp += 1;
    }
    // ln m = 2 atanh(s), s = (m-1)/(m+1), |s| <= 0.1716 after reduction.
    let s = (m - 1.0) / (m + 1.0);
    let s2 = s * s;
    let series = s
        * (1.0
            + s2 * (1.0 / 3.0
                + s2 * (1.0 / 5.0
                    + s2 * (1.0 / 7.0 + s2 * (1.0 / 9.0 + s2 * (1.0 / 11.0 + s2 / 13.0))))));
    2.0 * series + exp as f64 * std::f64::consts::LN_2
}

/// Cost distributions for the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    /// Every iteration costs exactly the mean.
    Constant,
    /// Uniform on `[mean - sqrt(3) sigma, mean + sqrt(3) sigma]`.
    Uniform,
    /// Gaussian via the 12-sum Irwin-Hall method, truncated at 0.
    Gaussian,
    /// Exponential via inverse CDF.
    Exponential,
}

impl std::str::FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "constant" => Ok(Distribution::Constant),
            "uniform" => Ok(Distribution::Uniform),
            "gaussian" => Ok(Distribution::Gaussian),
            "exponential" => Ok(Distribution::Exponential),
            other => Err(Error::InvalidConfig(format!(
                "unknown distribution `{other}` (accepted: constant, uniform, gaussian, exponential)"
            ))),
        }
    }
}

/// Synthetic workload parameters: per-iteration cost distribution in
/// nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub distribution: Distribution,
    pub mean_ns: u64,
    pub stddev_ns: u64,
    pub seed: u64,
}

/// Mandelbrot escape-time parameters. Pixels map to iterations row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MandelbrotSpec {
    pub width: u32,
    pub height: u32,
    pub max_iterations: u32,
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl MandelbrotSpec {
    /// Default complex-plane window `[-2, 1] x [-1.5, 1.5]`.
    pub fn new(width: u32, height: u32, max_iterations: u32) -> Self {
        MandelbrotSpec {
            width,
            height,
            max_iterations,
            re_min: -2.0,
            re_max: 1.0,
            im_min: -1.5,
            im_max: 1.5,
        }
    }

    pub fn pixel_count(&self) -> u64 {
        self.width as u64 * self.height as u64
    }
}

/// What each loop iteration runs: a real kernel or a cost model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkloadSpec {
    Mandelbrot(MandelbrotSpec),
    Synthetic(SyntheticSpec),
    File(PathBuf),
}

impl WorkloadSpec {
    /// PSIA-like profile: gaussian with coefficient of variation 0.3.
    pub fn synthetic_gaussian(mean_ns: u64, seed: u64) -> WorkloadSpec {
        WorkloadSpec::Synthetic(SyntheticSpec {
            distribution: Distribution::Gaussian,
            mean_ns,
            stddev_ns: (mean_ns as f64 * 0.3) as u64,
            seed,
        })
    }

    /// Mandelbrot-like imbalance stand-in: exponential, c.o.v. 1.0.
    pub fn synthetic_exponential(mean_ns: u64, seed: u64) -> WorkloadSpec {
        WorkloadSpec::Synthetic(SyntheticSpec {
            distribution: Distribution::Exponential,
            mean_ns,
            stddev_ns: mean_ns,
            seed,
        })
    }

    pub fn summary(&self) -> String {
        match self {
            WorkloadSpec::Mandelbrot(m) => format!(
                "mandelbrot {}x{} max_iter {}",
                m.width, m.height, m.max_iterations
            ),
            WorkloadSpec::Synthetic(s) => format!(
                "synthetic {:?} mean {}ns stddev {}ns seed {}",
                s.distribution, s.mean_ns, s.stddev_ns, s.seed
            ),
            WorkloadSpec::File(p) => format!("file {}", p.display()),
        }
    }
}

/// Escape count of the Mandelbrot iteration mapped to `index` (row-major
/// pixel order): iterate `z <- z^2 + c` until `|z| > 2` or the cap. Pure
/// and deterministic; independent of execution order.
pub fn mandelbrot_kernel(index: u64, spec: &MandelbrotSpec) -> u32 {
    debug_assert!(index < spec.pixel_count());
    let px = (index % spec.width as u64) as f64;
    let py = (index / spec.width as u64) as f64;
    let cr = spec.re_min + (px + 0.5) * (spec.re_max - spec.re_min) / spec.width as f64;
    let ci = spec.im_min + (py + 0.5) * (spec.im_max - spec.im_min) / spec.height as f64;
    let mut zr = 0.0f64;
    let mut zi = 0.0f64;
    let mut count = 0u32;
    while count < spec.max_iterations {
        let zr2 = zr * zr;
        let zi2 = zi * zi;
        if zr2 + zi2 > 4.0 {
            break;
        }
        zi = 2.0 * zr * zi + ci;
        zr = zr2 - zi2 + cr;
        count += 1;
    }
    count
}

fn sample_ns(dist: Distribution, mean: f64, stddev: f64, rng: &mut SplitMix64) -> u64 {
    match dist {
        Distribution::Constant => mean as u64,
        Distribution::Uniform => {
            let half = (3.0f64.sqrt() * stddev).round() as u64;
            let lo = mean as u64 - half;
            lo + rng.next_below(2 * half + 1)
        }
        Distribution::Gaussian => {
            let mut acc = 0.0f64;
            for _ in 0..12 {
                acc += rng.next_f64();
            }
            let v = mean + stddev * (acc - 6.0);
            if v <= 0.0 {
                0
            } else {
                v.round() as u64
            }
        }
        Distribution::Exponential => {
            let u = rng.next_f64();
            (-mean * portable_ln(1.0 - u)).round() as u64
        }
    }
}

/// Produces the `n`-entry cost vector for a workload, in integer
/// nanoseconds. Deterministic per `(seed, parameters)`.
///
/// For Mandelbrot the cost of a pixel is its escape count, which is what
/// the real kernel's running time is proportional to.
pub fn generate_costs(spec: &WorkloadSpec, n: u64) -> Result<Vec<u64>> {
    match spec {
        WorkloadSpec::Mandelbrot(m) => {
            if m.pixel_count() != n {
                return Err(Error::InvalidConfig(format!(
                    "mandelbrot {}x{} has {} pixels but the loop has {} iterations",
                    m.width,
                    m.height,
                    m.pixel_count(),
                    n
                )));
            }
            Ok((0..n).map(|i| mandelbrot_kernel(i, m) as u64).collect())
        }
        WorkloadSpec::Synthetic(s) => {
            if s.mean_ns == 0 {
                return Err(Error::InvalidConfig("synthetic mean must be > 0".into()));
            }
            if s.distribution == Distribution::Uniform {
                let half = (3.0f64.sqrt() * s.stddev_ns as f64).round() as u64;
                if half > s.mean_ns {
                    return Err(Error::InvalidConfig(format!(
                        "uniform stddev {} too large for mean {} (support would go negative)",
                        s.stddev_ns, s.mean_ns
                    )));
                }
            }
            let mut rng = SplitMix64::new(s.seed);
            let mean = s.mean_ns as f64;
            let stddev = s.stddev_ns as f64;
            Ok((0..n)
                .map(|_| sample_ns(s.distribution, mean, stddev, &mut rng))
                .collect())
        }
        WorkloadSpec::File(path) => {
            let costs = read_cost_file(path)?;
            if costs.len() as u64 != n {
                return Err(Error::InvalidConfig(format!(
                    "cost file {} has {} entries but the loop has {} iterations",
                    path.display(),
                    costs.len(),
                    n
                )));
            }
            Ok(costs)
        }
    }
}

/// Reads a cost vector: one non-negative integer (nanoseconds) per line;
/// blank lines and lines starting with `#` are skipped.
pub fn read_cost_file(path: &Path) -> Result<Vec<u64>> {
    let text = std::fs::read_to_string(path)?;
    let mut costs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v = line.parse::<u64>().map_err(|e| Error::CostFile {
            path: path.display().to_string(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        costs.push(v);
    }
    if costs.is_empty() {
        return Err(Error::CostFile {
            path: path.display().to_string(),
            line: 0,
            reason: "no cost entries".into(),
        });
    }
    Ok(costs)
}
