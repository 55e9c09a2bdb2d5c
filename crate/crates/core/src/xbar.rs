//! Bit-plane crossbar arrays with stuck-at faults.
//!
//! Inputs drive wordlines (rows) and outputs are read on bitlines
//! (columns): `y[j] = sum_i x[i] * cell(i, j)`. Each magnitude plane is
//! stored as a positive and a negative array. A flipped plane stores the
//! complement of its bits; the read-out recovers the true partial sum as
//! `sum(x) - raw`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::BitMatrix;
use crate::quant::QuantizedLayer;

/// SA0 : SA1 occurrence ratio 1.75 : 9.04.
pub const DEFAULT_SA1_SHARE: f64 = 9.04 / (9.04 + 1.75);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultModel {
    /// Probability that a cell is faulty.
    pub rate: f64,
    /// Fraction of faulty cells stuck at one.
    pub sa1_share: f64,
    pub seed: u64,
}

impl FaultModel {
    pub fn new(rate: f64, sa1_share: f64, seed: u64) -> Result<Self> {
        let m = Self {
            rate,
            sa1_share,
            seed,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_rate(rate: f64, seed: u64) -> Result<Self> {
        Self::new(rate, DEFAULT_SA1_SHARE, seed)
    }

    pub fn fault_free() -> Self {
        Self {
            rate: 0.0,
            sa1_share: DEFAULT_SA1_SHARE,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::Config(format!(
                "fault rate {} outside [0, 1]",
                self.rate
            )));
        }
        if !(0.0..=1.0).contains(&self.sa1_share) {
            return Err(Error::Config(format!(
                "SA1 share {} outside [0, 1]",
                self.sa1_share
            )));
        }
        Ok(())
    }
}

/// Which bit planes are stored complemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlipPolicy {
    None,
    #[default]
    MsbOnly,
    All,
}

impl FlipPolicy {
    pub fn flips(&self, plane: usize) -> bool {
        match self {
            FlipPolicy::None => false,
            FlipPolicy::MsbOnly => plane == 0,
            FlipPolicy::All => true,
        }
    }
}

impl std::str::FromStr for FlipPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FlipPolicy::None),
            "msb_only" => Ok(FlipPolicy::MsbOnly),
            "all" => Ok(FlipPolicy::All),
            other => Err(Error::Config(format!("unknown flip policy '{other}'"))),
        }
    }
}

impl std::fmt::Display for FlipPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FlipPolicy::None => "none",
            FlipPolicy::MsbOnly => "msb_only",
            FlipPolicy::All => "all",
        })
    }
}

/// Stuck cells of one physical array, keyed by (row, col).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultMap {
    cells: BTreeMap<(usize, usize), u8>,
}

impl FaultMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Marks `(row, col)` as stuck at `value`, replacing any earlier entry.
    pub fn insert(&mut self, row: usize, col: usize, value: u8) {
        assert!(value <= 1, "stuck value must be 0 or 1");
        self.cells.insert((row, col), value);
    }

    pub fn get(&self, row: usize, col: usize) -> Option<u8> {
        self.cells.get(&(row, col)).copied()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Faults in row-major order as `(row, col, stuck_value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, u8)> + '_ {
        self.cells.iter().map(|(&(r, c), &v)| (r, c, v))
    }

    pub fn sa1_count(&self) -> usize {
        self.cells.values().filter(|&&v| v == 1).count()
    }
}

/// Which array of a sign pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Pos,
    Neg,
}

/// Packs a fault stream identifier from trial, layer, plane slot and polarity.
///
/// Slots `0..n` are the layer's own planes (MSB first); duplicates of the
/// MSB follow at `n, n + 1, ...`.
pub fn stream_id(trial: u32, layer: u16, slot: u16, polarity: Polarity) -> u64 {
    let pol = match polarity {
        Polarity::Pos => 0u64,
        Polarity::Neg => 1u64,
    };
    (u64::from(trial) << 32) | (u64::from(layer) << 17) | (u64::from(slot) << 1) | pol
}

/// Samples stuck-at faults for a `rows x cols` array.
///
/// The result depends only on `(model.seed, stream_id)` and the array
/// shape. Cells are visited in row-major order and each takes two uniform
/// draws from the ChaCha stream selected by `stream_id`: the first decides
/// whether it is faulty, the second whether it is stuck at 1.
pub fn inject_saf(rows: usize, cols: usize, model: &FaultModel, stream_id: u64) -> FaultMap {
    let mut map = FaultMap::new();
    if model.rate <= 0.0 {
        return map;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    rng.set_stream(stream_id);
    // Two draws per cell, used or not: a cell that is stuck at some rate
    // stays stuck, at the same value, at every higher rate.
    for r in 0..rows {
        for c in 0..cols {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            if u < model.rate {
                map.cells.insert((r, c), u8::from(v < model.sa1_share));
            }
        }
    }
    map
}

/// One physical array: programmed cells plus its stuck cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CellArray {
    pub stored: BitMatrix,
    pub faults: FaultMap,
}

impl CellArray {
    pub fn new(stored: BitMatrix) -> Self {
        Self {
            stored,
            faults: FaultMap::new(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.stored.dims()
    }

    pub fn effective_cell(&self, row: usize, col: usize) -> Result<u8> {
        let (rows, cols) = self.dims();
        if row >= rows || col >= cols {
            return Err(Error::OutOfBounds {
                row,
                col,
                rows,
                cols,
            });
        }
        Ok(self
            .faults
            .get(row, col)
            .unwrap_or_else(|| self.stored.get(row, col)))
    }

    /// Stored cells with every fault applied.
    pub fn effective(&self) -> BitMatrix {
        let mut m = self.stored.clone();
        for (r, c, v) in self.faults.iter() {
            m.set(r, c, v);
        }
        m
    }

    /// Bitline currents `raw[j] = sum_i x[i] * effective(i, j)`.
    pub fn raw_output(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.read_out(x, false)
    }

    /// Bitline read-out, complement-corrected when `flipped`.
    ///
    /// Every bitline is summed exactly and rounded once, so the flipped
    /// correction `sum(x) - raw` reproduces the unflipped read-out bit for bit.
    pub fn read_out(&self, x: &[f64], flipped: bool) -> Result<Vec<f64>> {
        let (rows, cols) = self.dims();
        if x.len() != rows {
            return Err(Error::Dimension(format!(
                "input of length {} for {rows} wordlines",
                x.len()
            )));
        }
        let eff = self.effective();
        Ok((0..cols)
            .map(|j| {
                let on = x
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| eff.get(i, j) == 1)
                    .map(|(_, &xi)| if flipped { -xi } else { xi });
                if flipped {
                    exact_sum(x.iter().copied().chain(on))
                } else {
                    exact_sum(on)
                }
            })
            .collect())
    }
    /// Read-out of bitline `col` alone; equals `read_out(x, flipped)[col]`.
    pub fn read_column(&self, x: &[f64], col: usize, flipped: bool) -> Result<f64> {
        let (rows, cols) = self.dims();
        if x.len() != rows {
            return Err(Error::Dimension(format!(
                "input of length {} for {rows} wordlines",
                x.len()
            )));
        }
        if col >= cols {
            return Err(Error::OutOfBounds {
                row: 0,
                col,
                rows,
                cols,
            });
        }
        let on = x
            .iter()
            .enumerate()
            .filter(|&(i, _)| {
                self.faults
                    .get(i, col)
                    .unwrap_or_else(|| self.stored.get(i, col))
                    == 1
            })
            .map(|(_, &xi)| if flipped { -xi } else { xi });
        Ok(if flipped {
            exact_sum(x.iter().copied().chain(on))
        } else {
            exact_sum(on)
        })
    }
}

/// Correctly rounded sum of `terms` (Shewchuk's non-overlapping partials,
/// with the half-way correction of the final rounding).
pub(crate) fn exact_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in terms {
        let mut kept = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }

    let Some(mut hi) = partials.pop() else {
        return 0.0;
    };
    let mut lo = 0.0;
    while let Some(y) = partials.pop() {
        let x = hi;
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    if let Some(&next) = partials.last() {
        if (lo < 0.0 && next < 0.0) || (lo > 0.0 && next > 0.0) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
    }
    hi
}

/// Positive/negative array pair holding one magnitude bit plane.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarPlane {
    pub pos: CellArray,
    pub neg: CellArray,
    pub flipped: bool,
    /// Exponent of this plane's weight, `2^power`.
    pub power: u32,
}

impl CrossbarPlane {
    /// Builds a fault-free plane from logical sign-split bits.
    pub fn from_bits(pos_bits: BitMatrix, neg_bits: BitMatrix, flipped: bool, power: u32) -> Self {
        assert_eq!(pos_bits.dims(), neg_bits.dims());
        let store = |b: BitMatrix| if flipped { b.complement() } else { b };
        Self {
            pos: CellArray::new(store(pos_bits)),
            neg: CellArray::new(store(neg_bits)),
            flipped,
            power,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.pos.dims()
    }

    pub fn array(&self, polarity: Polarity) -> &CellArray {
        match polarity {
            Polarity::Pos => &self.pos,
            Polarity::Neg => &self.neg,
        }
    }

    pub fn array_mut(&mut self, polarity: Polarity) -> &mut CellArray {
        match polarity {
            Polarity::Pos => &mut self.pos,
            Polarity::Neg => &mut self.neg,
        }
    }

    pub fn clear_faults(&mut self) {
        self.pos.faults = FaultMap::new();
        self.neg.faults = FaultMap::new();
    }

    /// Logical bits seen through the faults: the stored cells, un-flipped.
    pub fn effective_logical(&self, polarity: Polarity) -> BitMatrix {
        let eff = self.array(polarity).effective();
        if self.flipped {
            eff.complement()
        } else {
            eff
        }
    }
}

/// Read-out of one plane after sign handling: `pos - neg`, with the
/// complement correction applied to flipped arrays.
pub fn plane_partial(plane: &CrossbarPlane, x: &[f64]) -> Result<Vec<f64>> {
    let pos = plane.pos.read_out(x, plane.flipped)?;
    let neg = plane.neg.read_out(x, plane.flipped)?;
    Ok(pos.iter().zip(&neg).map(|(p, n)| p - n).collect())
}

/// All bit planes of one layer, MSB first.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarLayer {
    pub step: f64,
    pub planes: Vec<CrossbarPlane>,
}

impl CrossbarLayer {
    pub fn dims(&self) -> (usize, usize) {
        self.planes[0].dims()
    }

    pub fn bits(&self) -> u32 {
        self.planes.len() as u32
    }

    /// Replaces every array's faults with fresh samples for `(trial, layer)`.
    pub fn inject_faults(&mut self, model: &FaultModel, trial: u32, layer: u16) {
        for (slot, plane) in self.planes.iter_mut().enumerate() {
            for pol in [Polarity::Pos, Polarity::Neg] {
                let (rows, cols) = plane.dims();
                let id = stream_id(trial, layer, slot as u16, pol);
                plane.array_mut(pol).faults = inject_saf(rows, cols, model, id);
            }
        }
    }

    pub fn total_faults(&self) -> usize {
        self.planes
            .iter()
            .map(|p| p.pos.faults.len() + p.neg.faults.len())
            .sum()
    }
}

/// Splits each bit plane by sign and stores it according to `policy`.
pub fn map_layer(layer: &QuantizedLayer, policy: FlipPolicy) -> CrossbarLayer {
    let (rows, cols) = layer.dims();
    let planes = layer
        .planes()
        .iter()
        .enumerate()
        .map(|(p, bits)| {
            let mut pos = BitMatrix::zeros(rows, cols);
            let mut neg = BitMatrix::zeros(rows, cols);
            for r in 0..rows {
                for c in 0..cols {
                    let b = bits.get(r, c);
                    if layer.sign(r, c) > 0 {
                        pos.set(r, c, b);
                    } else {
                        neg.set(r, c, b);
                    }
                }
            }
            CrossbarPlane::from_bits(pos, neg, policy.flips(p), layer.plane_power(p))
        })
        .collect();
    CrossbarLayer {
        step: layer.step(),
        planes,
    }
}

/// `q * sum_p 2^power * plane_partial(p, x)`.
pub fn layer_matvec(layer: &CrossbarLayer, x: &[f64]) -> Result<Vec<f64>> {
    let (_, cols) = layer.dims();
    let mut acc = vec![0.0; cols];
    for plane in &layer.planes {
        let part = plane_partial(plane, x)?;
        let scale = f64::from(1u32 << plane.power);
        for (a, p) in acc.iter_mut().zip(part) {
            *a += scale * p;
        }
    }
    Ok(acc.into_iter().map(|a| layer.step * a).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::quant::{quantize, reconstruct, QuantConfig};

    fn bits(rows: &[Vec<u8>]) -> BitMatrix {
        BitMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn flip_none_stores_sign_split_bits() {
        let w = Matrix::from_rows(&[vec![0.7, -0.35], vec![0.1, 0.0]]).unwrap();
        let q = quantize(&w, QuantConfig::new(3).unwrap()).unwrap();
        let xb = map_layer(&q, FlipPolicy::None);
        for (p, plane) in xb.planes.iter().enumerate() {
            for r in 0..2 {
                for c in 0..2 {
                    let b = q.planes()[p].get(r, c);
                    let (pb, nb) = if q.sign(r, c) > 0 { (b, 0) } else { (0, b) };
                    assert_eq!(plane.pos.stored.get(r, c), pb);
                    assert_eq!(plane.neg.stored.get(r, c), nb);
                    assert!(pb == 0 || nb == 0);
                }
            }
        }
    }

    #[test]
    fn msb_flip_of_positive_weight() {
        let w = Matrix::row_vector(&[0.7]);
        let q = quantize(&w, QuantConfig::new(3).unwrap()).unwrap();
        let plain = map_layer(&q, FlipPolicy::None);
        assert_eq!(plain.planes[0].pos.stored.get(0, 0), 1);
        assert_eq!(plain.planes[0].neg.stored.get(0, 0), 0);
        let flipped = map_layer(&q, FlipPolicy::MsbOnly);
        assert_eq!(flipped.planes[0].pos.stored.get(0, 0), 0);
        assert_eq!(flipped.planes[0].neg.stored.get(0, 0), 1);
        assert!(!flipped.planes[1].flipped);
    }

    #[test]
    fn all_zero_layer_flipped_everywhere_is_all_ones() {
        let q = quantize(&Matrix::zeros(2, 3), QuantConfig::new(4).unwrap()).unwrap();
        let xb = map_layer(&q, FlipPolicy::All);
        for plane in &xb.planes {
            assert_eq!(plane.pos.stored, BitMatrix::ones(2, 3));
            assert_eq!(plane.neg.stored, BitMatrix::ones(2, 3));
        }
    }

    #[test]
    fn inject_rate_zero_is_empty_and_deterministic() {
        let m = FaultModel::with_rate(0.0, 3).unwrap();
        assert!(inject_saf(50, 50, &m, 7).is_empty());
        let m = FaultModel::with_rate(0.01, 3).unwrap();
        let a = inject_saf(100, 100, &m, 7);
        let b = inject_saf(100, 100, &m, 7);
        assert_eq!(a, b);
        assert!(!a.is_empty());
        assert_ne!(a, inject_saf(100, 100, &m, 8));
    }

    #[test]
    fn rate_one_marks_every_cell() {
        let m = FaultModel::with_rate(1.0, 11).unwrap();
        let map = inject_saf(100, 100, &m, 0);
        assert_eq!(map.len(), 10_000);
        let p = DEFAULT_SA1_SHARE;
        let mean = 10_000.0 * p;
        let sd = (10_000.0 * p * (1.0 - p)).sqrt();
        let sa1 = map.sa1_count() as f64;
        assert!(
            (sa1 - mean).abs() <= 3.0 * sd,
            "sa1 {sa1} mean {mean} sd {sd}"
        );
    }

    #[test]
    fn fault_model_validation() {
        assert!(FaultModel::with_rate(1.5, 0).is_err());
        assert!(FaultModel::new(0.1, -0.1, 0).is_err());
        assert!((DEFAULT_SA1_SHARE - 0.837_813).abs() < 1e-6);
    }

    #[test]
    fn effective_cell_cases() {
        let mut a = CellArray::new(bits(&[vec![1, 0], vec![0, 1]]));
        assert_eq!(a.effective_cell(0, 0).unwrap(), 1);
        a.faults.insert(0, 0, 0);
        a.faults.insert(0, 1, 1);
        assert_eq!(a.effective_cell(0, 0).unwrap(), 0);
        assert_eq!(a.effective_cell(0, 1).unwrap(), 1);
        assert_eq!(a.effective_cell(1, 1).unwrap(), 1);
        assert!(matches!(
            a.effective_cell(2, 0),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn plane_partial_direct_and_flipped() {
        let pos = bits(&[vec![1, 0], vec![0, 0]]);
        let neg = BitMatrix::zeros(2, 2);
        let plain = CrossbarPlane::from_bits(pos.clone(), neg.clone(), false, 0);
        assert_eq!(plane_partial(&plain, &[2.0, 3.0]).unwrap(), vec![2.0, 0.0]);

        let flipped = CrossbarPlane::from_bits(pos, neg, true, 0);
        assert_eq!(flipped.pos.stored, bits(&[vec![0, 1], vec![1, 1]]));
        assert_eq!(flipped.pos.raw_output(&[2.0, 3.0]).unwrap(), vec![3.0, 5.0]);
        assert_eq!(
            plane_partial(&flipped, &[2.0, 3.0]).unwrap(),
            vec![2.0, 0.0]
        );
        assert!(plane_partial(&flipped, &[1.0]).is_err());
    }

    #[test]
    fn sa0_on_flipped_plane_moves_one_output() {
        let pos = bits(&[vec![1, 0], vec![0, 0]]);
        let mut plane = CrossbarPlane::from_bits(pos, BitMatrix::zeros(2, 2), true, 0);
        let x = [2.0, 3.0];
        let clean = plane_partial(&plane, &x).unwrap();
        // Stored cell (1, 0) is 1 after flipping; SA0 there reads as logical 1.
        plane.pos.faults.insert(1, 0, 0);
        let faulty = plane_partial(&plane, &x).unwrap();

        // Oracle: dot products over the un-flipped effective bits.
        let logical = plane.effective_logical(Polarity::Pos);
        for (j, &got) in faulty.iter().enumerate() {
            let want: f64 = (0..2).map(|i| x[i] * f64::from(logical.get(i, j))).sum();
            assert_eq!(got, want);
        }
        assert_eq!(faulty[0] - clean[0], x[1]);
        assert_eq!(faulty[1], clean[1]);
    }

    #[test]
    fn single_weight_matvec() {
        let w = Matrix::row_vector(&[0.7]);
        let q = quantize(&w, QuantConfig::new(3).unwrap()).unwrap();
        for policy in [FlipPolicy::None, FlipPolicy::MsbOnly, FlipPolicy::All] {
            let y = layer_matvec(&map_layer(&q, policy), &[2.0]).unwrap();
            assert!((y[0] - 1.4).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_input_gives_zero_output_even_with_faults() {
        let w = Matrix::from_rows(&[vec![0.5, -1.0], vec![0.25, 0.0]]).unwrap();
        let q = quantize(&w, QuantConfig::new(4).unwrap()).unwrap();
        let mut xb = map_layer(&q, FlipPolicy::All);
        xb.inject_faults(&FaultModel::with_rate(0.5, 1).unwrap(), 0, 0);
        assert!(xb.total_faults() > 0);
        assert_eq!(layer_matvec(&xb, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn fault_free_matches_reconstruction() {
        let w = Matrix::from_rows(&[vec![0.3, -0.9, 0.05], vec![-0.2, 0.6, 0.0]]).unwrap();
        let q = quantize(&w, QuantConfig::new(5).unwrap()).unwrap();
        let dense = reconstruct(&q);
        let x = [0.7, -1.3];
        let want = dense.vec_mul(&x).unwrap();
        let got = layer_matvec(&map_layer(&q, FlipPolicy::MsbOnly), &x).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_sum_matches_fsum() {
        // Expected values from Python's math.fsum.
        assert_eq!(
            exact_sum([0.1, 0.2, 0.3, -0.6].into_iter()),
            2.7755575615628914e-17
        );
        assert_eq!(exact_sum([1e100, 1.0, -1e100, 1e-100].into_iter()), 1.0);
        assert_eq!(
            exact_sum([1.0, 1e-16, 1e-16].into_iter()),
            1.0000000000000002
        );
        assert_eq!(exact_sum(std::iter::repeat_n(0.1, 10)), 1.0);
        assert_eq!(exact_sum(std::iter::empty()), 0.0);
        assert_eq!(exact_sum([-2.5].into_iter()), -2.5);
    }

    #[test]
    fn stream_ids_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for t in [0, 1, 1000] {
            for l in 0..4 {
                for s in 0..12 {
                    for p in [Polarity::Pos, Polarity::Neg] {
                        assert!(seen.insert(stream_id(t, l, s, p)));
                    }
                }
            }
        }
    }
}
