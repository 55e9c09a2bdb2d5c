//! MSB duplication with median voting over candidate partial sums.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::xbar::{
    inject_saf, plane_partial, stream_id, CrossbarLayer, CrossbarPlane, FaultModel, FlipPolicy,
    Polarity,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FtConfig {
    /// Total MSB copies, the original included.
    pub candidates: usize,
    pub flip: FlipPolicy,
    pub fault: FaultModel,
}

impl Default for FtConfig {
    fn default() -> Self {
        Self {
            candidates: 3,
            flip: FlipPolicy::MsbOnly,
            fault: FaultModel::fault_free(),
        }
    }
}

impl FtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidates == 0 || self.candidates.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "candidate count must be odd and positive, got {}",
                self.candidates
            )));
        }
        self.fault.validate()
    }
}

/// Fault stream coordinates of one layer within one Monte Carlo trial.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamBase {
    pub trial: u32,
    pub layer: u16,
}

impl StreamBase {
    pub fn id(&self, slot: usize, polarity: Polarity) -> u64 {
        stream_id(self.trial, self.layer, slot as u16, polarity)
    }
}

/// A crossbar layer plus `T - 1` extra physical copies of its MSB plane.
#[derive(Debug, Clone, PartialEq)]
pub struct FtLayer {
    pub base: CrossbarLayer,
    /// MSB_2 ... MSB_T.
    pub duplicates: Vec<CrossbarPlane>,
}

impl FtLayer {
    pub fn candidates(&self) -> usize {
        self.duplicates.len() + 1
    }

    /// MSB copy `k` in `1..=T`; copy 1 is the base layer's own MSB plane.
    pub fn msb_copy(&self, k: usize) -> &CrossbarPlane {
        if k == 1 {
            &self.base.planes[0]
        } else {
            &self.duplicates[k - 2]
        }
    }

    pub fn msb_copy_mut(&mut self, k: usize) -> &mut CrossbarPlane {
        if k == 1 {
            &mut self.base.planes[0]
        } else {
            &mut self.duplicates[k - 2]
        }
    }

    /// Fault stream slot of MSB copy `k`.
    pub fn msb_slot(&self, k: usize) -> usize {
        if k == 1 {
            0
        } else {
            self.base.planes.len() + k - 2
        }
    }

    pub fn clear_faults(&mut self) {
        self.base
            .planes
            .iter_mut()
            .for_each(CrossbarPlane::clear_faults);
        self.duplicates
            .iter_mut()
            .for_each(CrossbarPlane::clear_faults);
    }
}

/// Copies the MSB plane `T - 1` times and samples independent faults for
/// every physical array, one stream per (slot, polarity).
pub fn duplicate_msb(
    layer: &CrossbarLayer,
    cfg: &FtConfig,
    streams: StreamBase,
) -> Result<FtLayer> {
    cfg.validate()?;
    let mut base = layer.clone();
    let mut msb = base.planes[0].clone();
    msb.clear_faults();
    let mut ft = FtLayer {
        duplicates: vec![msb; cfg.candidates - 1],
        base: {
            base.planes.iter_mut().for_each(CrossbarPlane::clear_faults);
            base
        },
    };
    let n = ft.base.planes.len();
    let planes = ft.base.planes.iter_mut().chain(ft.duplicates.iter_mut());
    for (slot, plane) in planes.enumerate() {
        debug_assert!(slot < n + cfg.candidates - 1);
        let (rows, cols) = plane.dims();
        for pol in [Polarity::Pos, Polarity::Neg] {
            plane.array_mut(pol).faults = inject_saf(rows, cols, &cfg.fault, streams.id(slot, pol));
        }
    }
    Ok(ft)
}

/// Per-candidate MSB partials, already scaled by `2^(n-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateOutputs(pub Vec<Vec<f64>>);

/// Elementwise median across candidates.
pub fn vote_median(c: &CandidateOutputs) -> Result<Vec<f64>> {
    let first =
        c.0.first()
            .ok_or_else(|| Error::Config("no candidates to vote on".into()))?;
    if c.0.len().is_multiple_of(2) {
        return Err(Error::Config(
            "median voting needs an odd candidate count".into(),
        ));
    }
    let len = first.len();
    if c.0.iter().any(|v| v.len() != len) {
        return Err(Error::Dimension(
            "candidate outputs differ in length".into(),
        ));
    }
    let mut column = vec![0.0; c.0.len()];
    Ok((0..len)
        .map(|j| {
            for (slot, cand) in column.iter_mut().zip(&c.0) {
                *slot = cand[j];
            }
            median_in_place(&mut column)
        })
        .collect())
}

pub(crate) fn median_in_place(values: &mut [f64]) -> f64 {
    let mid = values.len() / 2;
    *values.select_nth_unstable_by(mid, |a, b| a.total_cmp(b)).1
}

/// Candidate outputs `2^(n-1) * plane_partial(MSB_k, x)` for every copy.
pub fn candidate_outputs(ft: &FtLayer, x: &[f64]) -> Result<CandidateOutputs> {
    let scale = f64::from(1u32 << ft.base.planes[0].power);
    (1..=ft.candidates())
        .map(|k| {
            plane_partial(ft.msb_copy(k), x).map(|p| p.into_iter().map(|v| scale * v).collect())
        })
        .collect::<Result<Vec<_>>>()
        .map(CandidateOutputs)
}

/// Combines a voted MSB output with the unprotected LSB planes.
pub(crate) fn combine_with_lsbs(
    layer: &CrossbarLayer,
    msb_voted: Vec<f64>,
    x: &[f64],
) -> Result<Vec<f64>> {
    let mut acc = msb_voted;
    for plane in &layer.planes[1..] {
        let part = plane_partial(plane, x)?;
        let scale = f64::from(1u32 << plane.power);
        for (a, p) in acc.iter_mut().zip(part) {
            *a += scale * p;
        }
    }
    Ok(acc.into_iter().map(|a| layer.step * a).collect())
}

pub fn infer_layer_ft(ft: &FtLayer, x: &[f64]) -> Result<Vec<f64>> {
    let voted = vote_median(&candidate_outputs(ft, x)?)?;
    combine_with_lsbs(&ft.base, voted, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(&self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }
}

/// One layer of a fault-tolerant network.
#[derive(Debug, Clone, PartialEq)]
pub struct FtNetLayer {
    pub layer: FtLayer,
    pub bias: Vec<f64>,
    pub activation: Activation,
    /// Pruned output columns; their crossbar output is discarded.
    pub pruned: Vec<usize>,
}

/// Runs each layer's voted matvec, drops pruned outputs, adds the bias and
/// applies the activation.
pub fn infer_network_ft(net: &[FtNetLayer], x: &[f64]) -> Result<Vec<f64>> {
    let mut h = x.to_vec();
    for l in net {
        let (rows, cols) = l.layer.base.dims();
        if h.len() != rows || l.bias.len() != cols {
            return Err(Error::Dimension(format!(
                "layer expects {rows} inputs and {cols} biases, got {} and {}",
                h.len(),
                l.bias.len()
            )));
        }
        let mut y = infer_layer_ft(&l.layer, &h)?;
        for &j in &l.pruned {
            y[j] = 0.0;
        }
        h = y
            .iter()
            .zip(&l.bias)
            .map(|(v, b)| l.activation.apply(v + b))
            .collect();
    }
    Ok(h)
}

/// Dense per-trial form of an [`FtLayer`] for fast repeated inference.
///
/// Every plane collapses to a matrix of logical effective bits in
/// {-1, 0, 1}; the LSB planes are pre-summed with their powers. Results
/// agree with [`infer_layer_ft`] up to floating-point reassociation.
#[derive(Debug, Clone)]
pub struct CompiledFtLayer {
    step: f64,
    msb_scale: f64,
    msb: Vec<Matrix>,
    lsb: Matrix,
}

impl CompiledFtLayer {
    pub fn new(ft: &FtLayer) -> Self {
        let (rows, cols) = ft.base.dims();
        let msb = (1..=ft.candidates())
            .map(|k| signed_logical(ft.msb_copy(k), 1.0, Matrix::zeros(rows, cols)))
            .collect();
        let lsb = ft.base.planes[1..]
            .iter()
            .fold(Matrix::zeros(rows, cols), |acc, p| {
                signed_logical(p, f64::from(1u32 << p.power), acc)
            });
        Self {
            step: ft.base.step,
            msb_scale: f64::from(1u32 << ft.base.planes[0].power),
            msb,
            lsb,
        }
    }

    pub fn infer(&self, x: &[f64]) -> Result<Vec<f64>> {
        let cands = self
            .msb
            .iter()
            .map(|m| m.vec_mul(x))
            .collect::<Result<Vec<_>>>()?;
        let lsb = self.lsb.vec_mul(x)?;
        let mut column = vec![0.0; cands.len()];
        Ok(lsb
            .iter()
            .enumerate()
            .map(|(j, l)| {
                for (slot, c) in column.iter_mut().zip(&cands) {
                    *slot = c[j];
                }
                self.step * (self.msb_scale * median_in_place(&mut column) + l)
            })
            .collect())
    }
}

fn signed_logical(plane: &CrossbarPlane, scale: f64, mut acc: Matrix) -> Matrix {
    let pos = plane.effective_logical(Polarity::Pos);
    let neg = plane.effective_logical(Polarity::Neg);
    let (rows, cols) = plane.dims();
    for r in 0..rows {
        for c in 0..cols {
            let v = f64::from(pos.get(r, c)) - f64::from(neg.get(r, c));
            *acc.get_mut(r, c) += scale * v;
        }
    }
    acc
}
