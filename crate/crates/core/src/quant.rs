//! Equal-distance n-bit magnitude quantization and bit-plane decomposition.
//!
//! A weight matrix is represented as `sign * q * m` where `m` is an n-bit
//! magnitude integer. The planes hold the base-2 digits of `m`, most
//! significant first, so plane `p` carries weight `2^(n-1-p)`.

use crate::error::{Error, Result};
use crate::matrix::{BitMatrix, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantConfig {
    bits: u32,
}

impl QuantConfig {
    pub const MAX_BITS: u32 = 30;

    pub fn new(bits: u32) -> Result<Self> {
        if !(2..=Self::MAX_BITS).contains(&bits) {
            return Err(Error::Config(format!(
                "quantization needs 2..={} bits, got {bits}",
                Self::MAX_BITS
            )));
        }
        Ok(Self { bits })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Largest magnitude integer, `2^n - 1`.
    pub fn max_level(&self) -> u32 {
        (1u32 << self.bits) - 1
    }
}

/// Sign matrix, step and magnitude bit planes of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLayer {
    step: f64,
    bits: u32,
    /// +1 or -1 per entry.
    sign: Vec<i8>,
    /// MSB first.
    planes: Vec<BitMatrix>,
    rows: usize,
    cols: usize,
}

impl QuantizedLayer {
    /// Assembles a layer from explicit parts, validating every invariant.
    pub fn from_parts(step: f64, sign: Vec<i8>, planes: Vec<BitMatrix>) -> Result<Self> {
        let bits = planes.len() as u32;
        QuantConfig::new(bits)?;
        let (rows, cols) = planes[0].dims();
        if planes.iter().any(|p| p.dims() != (rows, cols)) {
            return Err(Error::Dimension("bit planes differ in shape".into()));
        }
        if sign.len() != rows * cols {
            return Err(Error::Dimension("sign matrix shape".into()));
        }
        if sign.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Config("sign entries must be +1 or -1".into()));
        }
        if !(step >= 0.0 && step.is_finite()) {
            return Err(Error::Config(format!("invalid step {step}")));
        }
        Ok(Self {
            step,
            bits,
            sign,
            planes,
            rows,
            cols,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn planes(&self) -> &[BitMatrix] {
        &self.planes
    }

    pub fn msb(&self) -> &BitMatrix {
        &self.planes[0]
    }

    /// Exponent carried by plane `p` (MSB is `n - 1`).
    pub fn plane_power(&self, p: usize) -> u32 {
        self.bits - 1 - p as u32
    }

    pub fn sign(&self, r: usize, c: usize) -> i8 {
        self.sign[r * self.cols + c]
    }

    /// Magnitude integer `m[r, c]` rebuilt from the bit planes.
    pub fn level(&self, r: usize, c: usize) -> u32 {
        self.planes
            .iter()
            .enumerate()
            .map(|(p, plane)| u32::from(plane.get(r, c)) << self.plane_power(p))
            .sum()
    }
}

pub fn quantize(w: &Matrix, cfg: QuantConfig) -> Result<QuantizedLayer> {
    if w.is_empty() {
        return Err(Error::Dimension("cannot quantize an empty matrix".into()));
    }
    let (rows, cols) = w.dims();
    let max_level = cfg.max_level();
    let max_abs = w.max_abs();
    let step = if max_abs > 0.0 {
        max_abs / f64::from(max_level)
    } else {
        0.0
    };

    let n = cfg.bits() as usize;
    let mut planes = vec![BitMatrix::zeros(rows, cols); n];
    let mut sign = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let v = w.get(r, c);
            sign.push(if v >= 0.0 { 1 } else { -1 });
            if step == 0.0 {
                continue;
            }
            // f64::round breaks ties away from zero.
            let m = (v.abs() / step).round().min(f64::from(max_level)) as u32;
            for (p, plane) in planes.iter_mut().enumerate() {
                plane.set(r, c, ((m >> (n - 1 - p)) & 1) as u8);
            }
        }
    }
    QuantizedLayer::from_parts(step, sign, planes)
}

pub fn reconstruct(layer: &QuantizedLayer) -> Matrix {
    let (rows, cols) = layer.dims();
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let m = f64::from(layer.level(r, c));
            out.set(r, c, f64::from(layer.sign(r, c)) * layer.step() * m);
        }
    }
    out
}

/// Worst-case absolute quantization error over all entries.
pub fn quant_error(w: &Matrix, cfg: QuantConfig) -> Result<f64> {
    let q = quantize(w, cfg)?;
    Ok(w.max_abs_diff(&reconstruct(&q)))
}

/// Absolute-value distribution summary used to motivate MSB protection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightStats {
    pub max_abs: f64,
    /// Entries with `|w| > max_abs / 2`.
    pub large_count: usize,
    pub total_count: usize,
}

impl WeightStats {
    pub fn large_fraction(&self) -> f64 {
        if self.total_count == 0 {
            0.0
        } else {
            self.large_count as f64 / self.total_count as f64
        }
    }
}

pub fn distribution_stats(w: &Matrix) -> Result<WeightStats> {
    if w.is_empty() {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let max_abs = w.max_abs();
    let half = max_abs / 2.0;
    let large_count = w.as_slice().iter().filter(|v| v.abs() > half).count();
    Ok(WeightStats {
        max_abs,
        large_count,
        total_count: w.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Nearest level by exhaustive search; ties resolve to the larger level.
    fn brute_level(v: f64, step: f64, max_level: u32) -> u32 {
        let mut best = 0;
        let mut best_err = f64::INFINITY;
        for m in 0..=max_level {
            let err = (v.abs() - f64::from(m) * step).abs();
            if err <= best_err {
                best = m;
                best_err = err;
            }
        }
        best
    }

    fn row(values: &[f64]) -> Matrix {
        Matrix::row_vector(values)
    }

    #[test]
    fn three_bit_example() {
        let w = row(&[0.7, -0.35, 0.1, 0.0]);
        let q = quantize(&w, QuantConfig::new(3).unwrap()).unwrap();
        assert!((q.step() - 0.1).abs() < 1e-15);
        let levels: Vec<u32> = (0..4).map(|c| q.level(0, c)).collect();
        assert_eq!(levels, vec![7, 4, 1, 0]);
        let signs: Vec<i8> = (0..4).map(|c| q.sign(0, c)).collect();
        assert_eq!(signs, vec![1, -1, 1, 1]);
        assert_eq!(q.planes()[0].as_slice(), &[1, 1, 0, 0]);
        assert_eq!(q.planes()[1].as_slice(), &[1, 0, 0, 0]);
        assert_eq!(q.planes()[2].as_slice(), &[1, 0, 1, 0]);

        // Same expectations from the exhaustive-search oracle.
        for (c, &level) in levels.iter().enumerate() {
            assert_eq!(brute_level(w.get(0, c), q.step(), 7), level);
        }

        let back = reconstruct(&q);
        for (got, want) in back.as_slice().iter().zip([0.7, -0.4, 0.1, 0.0]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        let err = quant_error(&w, QuantConfig::new(3).unwrap()).unwrap();
        assert!((err - 0.05).abs() < 1e-12);
    }

    #[test]
    fn maximum_maps_to_all_ones() {
        let w = row(&[1.0]);
        let q = quantize(&w, QuantConfig::new(8).unwrap()).unwrap();
        assert_eq!(q.step(), 1.0 / 255.0);
        assert!(q.planes().iter().all(|p| p.get(0, 0) == 1));
        assert_eq!(reconstruct(&q).get(0, 0), 1.0);
    }

    #[test]
    fn all_zero_matrix() {
        for n in 2..=8 {
            let w = row(&[0.0, 0.0]);
            let q = quantize(&w, QuantConfig::new(n).unwrap()).unwrap();
            assert_eq!(q.step(), 0.0);
            assert!(q.planes().iter().all(|p| p.count_ones() == 0));
            assert_eq!(q.sign(0, 0), 1);
            assert_eq!(reconstruct(&q), Matrix::zeros(1, 2));
            assert_eq!(quant_error(&w, QuantConfig::new(n).unwrap()).unwrap(), 0.0);
        }
    }

    #[test]
    fn on_grid_weights_have_no_error() {
        let step = 0.25;
        let w = row(&[3.0 * step, -2.0 * step, 0.0, -3.0 * step]);
        assert_eq!(quant_error(&w, QuantConfig::new(2).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(QuantConfig::new(1).is_err());
        assert!(quantize(&Matrix::zeros(0, 0), QuantConfig::new(3).unwrap()).is_err());
        assert!(distribution_stats(&Matrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn stats_examples() {
        let s = distribution_stats(&row(&[1.0, 0.6, 0.4])).unwrap();
        assert_eq!((s.max_abs, s.large_count, s.total_count), (1.0, 2, 3));
        let s = distribution_stats(&row(&[-0.3; 5])).unwrap();
        assert_eq!(s.large_count, s.total_count);
    }

    #[test]
    fn planes_are_unique_base2_digits() {
        for n in 2..=8u32 {
            let cfg = QuantConfig::new(n).unwrap();
            let levels = cfg.max_level();
            // One entry per level, scaled so the top entry pins the step to 1.
            let w = row(&(0..=levels).map(f64::from).collect::<Vec<_>>());
            let q = quantize(&w, cfg).unwrap();
            assert_eq!(q.step(), 1.0);
            for m in 0..=levels {
                let c = m as usize;
                let digits: Vec<u8> = q.planes().iter().map(|p| p.get(0, c)).collect();
                let mut expect = Vec::new();
                let mut rem = m;
                for p in (0..n).rev() {
                    expect.push((rem >> p) as u8);
                    rem &= (1 << p) - 1;
                }
                assert_eq!(digits, expect, "n={n} m={m}");
            }
        }
    }

    fn matrix_strategy() -> impl Strategy<Value = Matrix> {
        (1usize..8, 1usize..8).prop_flat_map(|(r, c)| {
            prop::collection::vec(-5.0f64..5.0, r * c)
                .prop_map(move |d| Matrix::from_vec(r, c, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn round_trip_error_bounded(w in matrix_strategy(), n in 2u32..=8) {
            let cfg = QuantConfig::new(n).unwrap();
            let q = quantize(&w, cfg).unwrap();
            let err = w.max_abs_diff(&reconstruct(&q));
            prop_assert!(err <= q.step() / 2.0 + 1e-12);
            for r in 0..w.rows() {
                for c in 0..w.cols() {
                    prop_assert!(q.level(r, c) <= cfg.max_level());
                    prop_assert_eq!(q.level(r, c), brute_level(w.get(r, c), q.step(), cfg.max_level()));
                }
            }
        }

        #[test]
        fn quantize_is_idempotent(w in matrix_strategy(), n in 2u32..=8) {
            let cfg = QuantConfig::new(n).unwrap();
            let q1 = quantize(&w, cfg).unwrap();
            let q2 = quantize(&reconstruct(&q1), cfg).unwrap();
            prop_assert_eq!(q1.planes(), q2.planes());
            for r in 0..w.rows() {
                for c in 0..w.cols() {
                    // Zero-magnitude entries canonicalize to +1.
                    if q1.level(r, c) > 0 {
                        prop_assert_eq!(q1.sign(r, c), q2.sign(r, c));
                    }
                }
            }
        }

        #[test]
        fn msb_matches_half_max_band(w in matrix_strategy(), n in 2u32..=8) {
            let cfg = QuantConfig::new(n).unwrap();
            let q = quantize(&w, cfg).unwrap();
            let half_level = 1u32 << (n - 1);
            let threshold = (f64::from(half_level) - 0.5) * q.step();
            let stats = distribution_stats(&w).unwrap();
            let mut band = 0;
            for r in 0..w.rows() {
                for c in 0..w.cols() {
                    let msb = q.msb().get(r, c) == 1;
                    prop_assert_eq!(msb, q.level(r, c) >= half_level);
                    let a = w.get(r, c).abs();
                    // Away from the rounding boundary the threshold decides the MSB.
                    if (a - threshold).abs() > 1e-9 * q.step().max(1.0) {
                        prop_assert_eq!(msb, a >= threshold);
                    }
                    if msb && a <= stats.max_abs / 2.0 {
                        band += 1;
                    }
                }
            }
            prop_assert!(q.msb().count_ones() <= stats.large_count + band);
        }
    }
}
