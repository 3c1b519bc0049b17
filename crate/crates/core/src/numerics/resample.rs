//! Down-sampling (pooling) and up-sampling (temporal interpolation) of
//! one-dimensional signals.

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Avg,
    Max,
    Stride,
}

impl std::str::FromStr for PoolMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" => Ok(PoolMode::Avg),
            "max" => Ok(PoolMode::Max),
            "stride" => Ok(PoolMode::Stride),
            other => Err(Error::config(format!(
                "unknown pooling mode `{other}` (expected avg, max or stride)"
            ))),
        }
    }
}

/// Window geometry of a 1-d pooling layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pooling {
    pub kernel: usize,
    pub stride: usize,
    pub mode: PoolMode,
}

impl Pooling {
    pub const IDENTITY: Pooling = Pooling {
        kernel: 1,
        stride: 1,
        mode: PoolMode::Avg,
    };

    /// Non-overlapping windows of width `kernel`.
    pub fn non_overlapping(kernel: usize, mode: PoolMode) -> Self {
        Self {
            kernel,
            stride: kernel,
            mode,
        }
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::config(format!(
                "pooling kernel and stride must be at least 1 (kernel {}, stride {})",
                self.kernel, self.stride
            )));
        }
        if self.kernel > len {
            return Err(Error::config(format!(
                "pooling kernel {} exceeds input length {len}",
                self.kernel
            )));
        }
        Ok(())
    }

    /// `⌊(len − kernel) / stride⌋ + 1`; assumes a validated geometry.
    pub fn output_len(&self, len: usize) -> usize {
        (len - self.kernel) / self.stride + 1
    }
}

/// Pools `x` into `out` and, for each output, records the input index a
/// unit adjoint would be routed to (avg mode routes to the whole window and
/// leaves `routes` unused).
pub(crate) fn pool_into(x: &[f64], p: &Pooling, out: &mut [f64], mut routes: Option<&mut [usize]>) {
    let inv = 1.0 / p.kernel as f64;
    for (w, o) in out.iter_mut().enumerate() {
        let start = w * p.stride;
        let window = &x[start..start + p.kernel];
        let (value, route) = match p.mode {
            PoolMode::Avg => (window.iter().sum::<f64>() * inv, start),
            PoolMode::Stride => (window[0], start),
            PoolMode::Max => {
                let mut best = 0;
                for (i, &v) in window.iter().enumerate().skip(1) {
                    // strict comparison: ties keep the lowest index
                    if v > window[best] {
                        best = i;
                    }
                }
                (window[best], start + best)
            }
        };
        *o = value;
        if let Some(r) = routes.as_deref_mut() {
            r[w] = route;
        }
    }
}

/// 1-d pooling of a signal. Window `w` covers `[w·stride, w·stride + kernel)`.
pub fn pool1d(x: &[f64], pooling: &Pooling) -> Result<Vec<f64>> {
    pooling.validate(x.len())?;
    let mut out = vec![0.0; pooling.output_len(x.len())];
    pool_into(x, pooling, &mut out, None);
    Ok(out)
}

/// Number of uniformly spaced coefficients allotted to a length-`n` signal
/// at expressivity ratio `ratio`: `⌈ratio · n⌉`, never below 1.
pub fn knot_count(ratio: f64, n: usize) -> usize {
    // absorb representation error so that e.g. 0.1 · 30 does not become 4
    let raw = ratio * n as f64;
    let nearest = raw.round();
    let count = if (raw - nearest).abs() <= 1e-9 * raw.abs().max(1.0) {
        nearest
    } else {
        raw.ceil()
    };
    (count as usize).clamp(1, n.max(1))
}

fn check_knots(knots: usize, len: usize) -> Result<()> {
    if knots == 0 {
        return Err(Error::config("interpolation needs at least one knot"));
    }
    if knots > len {
        return Err(Error::config(format!(
            "interpolation knot count {knots} exceeds output length {len}"
        )));
    }
    Ok(())
}

/// Interpolation weights as a `knots × len` matrix `V`, so that the
/// up-sampled signal is `θ · V`.
///
/// Knot `k` sits at position `k · len / knots`. Output index `t` is the
/// linear interpolation between its two surrounding knots; past the final
/// knot the last segment's slope is extended, and a single knot is held
/// constant.
pub fn interpolation_matrix(knots: usize, len: usize) -> Result<Matrix> {
    check_knots(knots, len)?;
    let mut v = Matrix::zeros(knots, len);
    if knots == 1 {
        for t in 0..len {
            v.set(0, t, 1.0);
        }
        return Ok(v);
    }
    for t in 0..len {
        // t / Δ with Δ = len / knots, in exact integer arithmetic
        let seg = ((t * knots) / len).min(knots - 2);
        let frac = (t * knots - seg * len) as f64 / len as f64;
        v.set(seg, t, 1.0 - frac);
        v.set(seg + 1, t, frac);
    }
    Ok(v)
}

/// Up-samples `theta` (one value per knot) to `len` points by linear
/// temporal interpolation.
pub fn interp_upsample(theta: &[f64], len: usize) -> Result<Vec<f64>> {
    let v = interpolation_matrix(theta.len(), len)?;
    Ok(Matrix::row_vector(theta).matmul(&v)?.into_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooling_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let p = |mode| Pooling::non_overlapping(2, mode);
        assert_eq!(pool1d(&x, &p(PoolMode::Avg)).unwrap(), vec![1.5, 3.5]);
        assert_eq!(pool1d(&x, &p(PoolMode::Max)).unwrap(), vec![2.0, 4.0]);
        assert_eq!(pool1d(&x, &p(PoolMode::Stride)).unwrap(), vec![1.0, 3.0]);
        for mode in [PoolMode::Avg, PoolMode::Max, PoolMode::Stride] {
            let id = Pooling::non_overlapping(1, mode);
            assert_eq!(pool1d(&x, &id).unwrap(), x.to_vec());
        }
    }

    #[test]
    fn overlapping_windows_and_length() {
        let x = [1.0, 5.0, 2.0, 8.0, 3.0];
        let p = Pooling {
            kernel: 3,
            stride: 1,
            mode: PoolMode::Max,
        };
        assert_eq!(pool1d(&x, &p).unwrap(), vec![5.0, 8.0, 8.0]);
        let p = Pooling {
            kernel: 2,
            stride: 3,
            mode: PoolMode::Avg,
        };
        assert_eq!(p.output_len(5), 2);
    }

    #[test]
    fn max_pool_ties_route_to_lowest_index() {
        let x = [3.0, 3.0, 1.0, 1.0];
        let p = Pooling::non_overlapping(2, PoolMode::Max);
        let mut out = [0.0; 2];
        let mut routes = [0usize; 2];
        pool_into(&x, &p, &mut out, Some(&mut routes));
        assert_eq!(routes, [0, 2]);
    }

    #[test]
    fn pooling_rejects_bad_geometry() {
        let x = [1.0, 2.0];
        assert!(pool1d(&x, &Pooling::non_overlapping(3, PoolMode::Avg)).is_err());
        assert!(pool1d(&x, &Pooling::non_overlapping(0, PoolMode::Avg)).is_err());
    }

    #[test]
    fn interpolation_fixture() {
        assert_eq!(
            interp_upsample(&[0.0, 6.0], 4).unwrap(),
            vec![0.0, 3.0, 6.0, 9.0]
        );
        assert_eq!(interp_upsample(&[2.5], 3).unwrap(), vec![2.5; 3]);
    }

    #[test]
    fn interpolation_rejects_bad_knot_counts() {
        assert!(interp_upsample(&[], 3).is_err());
        assert!(interp_upsample(&[1.0, 2.0, 3.0], 2).is_err());
    }

    #[test]
    fn knot_counts_use_the_ceiling() {
        assert_eq!(knot_count(0.5, 96), 48);
        assert_eq!(knot_count(0.125, 96), 12);
        assert_eq!(knot_count(0.3, 10), 3);
        assert_eq!(knot_count(0.31, 10), 4);
        assert_eq!(knot_count(0.001, 10), 1);
        assert_eq!(knot_count(1.0, 7), 7);
    }
}
