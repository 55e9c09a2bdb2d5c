//! Deployable networks and datasets on disk.

use std::path::Path;

use crate::data::{Dataset, Split};
use crate::embed::PlacementMap;
use crate::error::{Error, Result};
use crate::ftol::Activation;
use crate::harness::format::{
    read_index, read_tensor, write_index, write_placement, write_tensor, KeyValues,
};
use crate::matrix::{BitMatrix, Matrix};
use crate::prune::GatedNetwork;
use crate::quant::QuantizedLayer;
use crate::xbar::{CrossbarLayer, Polarity};

/// One layer as it is mapped to crossbars: the masked weight, the digital
/// bias and the pruned output columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub pruned: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub layers: Vec<ModelLayer>,
}

impl Model {
    /// Freezes a gated network: closed structures become zero weights and
    /// closed columns are recorded as pruned.
    pub fn from_gated(net: &GatedNetwork) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| {
                let column_gated =
                    matches!(&l.gates, Some(g) if g.axis == crate::prune::Axis::Column);
                ModelLayer {
                    weight: l.masked_weight(),
                    bias: l.bias.clone(),
                    activation: l.activation,
                    pruned: if column_gated { l.closed() } else { Vec::new() },
                }
            })
            .collect();
        Self { layers }
    }

    /// Float forward pass with pruned outputs reduced to their bias.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut h = x.to_vec();
        for l in &self.layers {
            let mut y = l.weight.vec_mul(&h)?;
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

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut kv = KeyValues::default();
        kv.set("layers", self.layers.len());
        for (k, l) in self.layers.iter().enumerate() {
            kv.set(
                &format!("layer.{k}.activation"),
                activation_name(l.activation),
            );
            write_tensor(&dir.join(format!("layer_{k}.weight.txt")), &l.weight)?;
            write_tensor(
                &dir.join(format!("layer_{k}.bias.txt")),
                &Matrix::row_vector(&l.bias),
            )?;
            write_index(&dir.join(format!("layer_{k}.pruned.txt")), &l.pruned)?;
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("model.cfg");
        std::fs::write(&path, kv.to_string()).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let kv = KeyValues::load(&dir.join("model.cfg"))?;
        let n: usize = kv
            .get("layers")?
            .ok_or_else(|| Error::Config("model.cfg lacks 'layers'".into()))?;
        let layers = (0..n)
            .map(|k| {
                let act = kv
                    .get_str(&format!("layer.{k}.activation"))
                    .ok_or_else(|| Error::Config(format!("missing activation of layer {k}")))?;
                let weight = read_tensor(&dir.join(format!("layer_{k}.weight.txt")))?;
                let bias = read_tensor(&dir.join(format!("layer_{k}.bias.txt")))?;
                if bias.rows() != 1 || bias.cols() != weight.cols() {
                    return Err(Error::Dimension(format!("bias shape of layer {k}")));
                }
                let pruned = read_index(&dir.join(format!("layer_{k}.pruned.txt")))?;
                if pruned.iter().any(|&j| j >= weight.cols()) {
                    return Err(Error::Dimension(format!("pruned index of layer {k}")));
                }
                Ok(ModelLayer {
                    weight,
                    bias: bias.as_slice().to_vec(),
                    activation: parse_activation(act)?,
                    pruned,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for pair in layers.windows(2) {
            if pair[0].weight.cols() != pair[1].weight.rows() {
                return Err(Error::Dimension("layer shapes do not chain".into()));
            }
        }
        Ok(Self { layers })
    }
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Identity => "identity",
    }
}

fn parse_activation(s: &str) -> Result<Activation> {
    match s {
        "relu" => Ok(Activation::Relu),
        "identity" => Ok(Activation::Identity),
        other => Err(Error::Config(format!("unknown activation '{other}'"))),
    }
}

fn labels_matrix(y: &[usize]) -> Matrix {
    Matrix::from_vec(y.len(), 1, y.iter().map(|&v| v as f64).collect()).expect("label column")
}

fn labels_from(m: &Matrix, path: &Path) -> Result<Vec<usize>> {
    if m.cols() != 1 {
        return Err(Error::Dimension(format!(
            "{}: labels must be one column",
            path.display()
        )));
    }
    m.as_slice()
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{}: bad label {v}", path.display())))
            }
        })
        .collect()
}

pub fn save_split(split: &Split, dir: &Path) -> Result<()> {
    for (name, d) in [("train", &split.train), ("test", &split.test)] {
        write_tensor(&dir.join(format!("{name}_x.txt")), &d.x)?;
        write_tensor(&dir.join(format!("{name}_y.txt")), &labels_matrix(&d.y))?;
    }
    Ok(())
}

pub fn load_split(dir: &Path) -> Result<Split> {
    let load = |name: &str| -> Result<Dataset> {
        let x = read_tensor(&dir.join(format!("{name}_x.txt")))?;
        let ypath = dir.join(format!("{name}_y.txt"));
        let y = labels_from(&read_tensor(&ypath)?, &ypath)?;
        Dataset::new(x, y)
    };
    Ok(Split {
        train: load("train")?,
        test: load("test")?,
    })
}

pub fn bits_to_tensor(b: &BitMatrix) -> Matrix {
    let (rows, cols) = (b.rows(), b.cols());
    Matrix::from_vec(
        rows,
        cols,
        b.as_slice().iter().map(|&v| f64::from(v)).collect(),
    )
    .expect("same shape")
}

pub fn tensor_to_bits(m: &Matrix, path: &Path) -> Result<BitMatrix> {
    let rows: Vec<Vec<u8>> = (0..m.rows())
        .map(|r| {
            m.row(r)
                .iter()
                .map(|&v| match v {
                    0.0 => Ok(0),
                    1.0 => Ok(1),
                    _ => Err(Error::Config(format!(
                        "{}: non-binary cell {v}",
                        path.display()
                    ))),
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Ok(BitMatrix::zeros(0, m.cols()));
    }
    BitMatrix::from_rows(&rows)
}

/// Quantized layers with their pruned indices: `quant.cfg` holds
/// `layers`, `layer.k.step` and `layer.k.bits`; each layer stores
/// `layer_k.sign.txt`, `layer_k.plane_p.txt` (MSB first) and
/// `layer_k.pruned.txt`.
pub fn save_quantized(dir: &Path, layers: &[(QuantizedLayer, Vec<usize>)]) -> Result<()> {
    let mut kv = KeyValues::default();
    kv.set("layers", layers.len());
    for (k, (q, pruned)) in layers.iter().enumerate() {
        kv.set(
            &format!("layer.{k}.step"),
            crate::harness::format::format_value(q.step()),
        );
        kv.set(&format!("layer.{k}.bits"), q.bits());
        let (rows, cols) = q.dims();
        let sign = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .map(|(r, c)| f64::from(q.sign(r, c)))
            .collect();
        write_tensor(
            &dir.join(format!("layer_{k}.sign.txt")),
            &Matrix::from_vec(rows, cols, sign)?,
        )?;
        for (p, plane) in q.planes().iter().enumerate() {
            write_tensor(
                &dir.join(format!("layer_{k}.plane_{p}.txt")),
                &bits_to_tensor(plane),
            )?;
        }
        write_index(&dir.join(format!("layer_{k}.pruned.txt")), pruned)?;
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("quant.cfg");
    std::fs::write(&path, kv.to_string()).map_err(|e| Error::io(&path, e))
}

pub fn load_quantized(dir: &Path) -> Result<Vec<(QuantizedLayer, Vec<usize>)>> {
    let kv = KeyValues::load(&dir.join("quant.cfg"))?;
    let n: usize = kv
        .get("layers")?
        .ok_or_else(|| Error::Config("quant.cfg lacks 'layers'".into()))?;
    (0..n)
        .map(|k| {
            let missing = |what: &str| Error::Config(format!("quant.cfg lacks layer.{k}.{what}"));
            let step: f64 = kv
                .get(&format!("layer.{k}.step"))?
                .ok_or_else(|| missing("step"))?;
            let bits: usize = kv
                .get(&format!("layer.{k}.bits"))?
                .ok_or_else(|| missing("bits"))?;
            let spath = dir.join(format!("layer_{k}.sign.txt"));
            let sign = read_tensor(&spath)?
                .as_slice()
                .iter()
                .map(|&v| match v {
                    1.0 => Ok(1i8),
                    -1.0 => Ok(-1i8),
                    _ => Err(Error::Config(format!("{}: bad sign {v}", spath.display()))),
                })
                .collect::<Result<Vec<_>>>()?;
            let planes = (0..bits)
                .map(|p| {
                    let path = dir.join(format!("layer_{k}.plane_{p}.txt"));
                    tensor_to_bits(&read_tensor(&path)?, &path)
                })
                .collect::<Result<Vec<_>>>()?;
            let pruned = read_index(&dir.join(format!("layer_{k}.pruned.txt")))?;
            Ok((QuantizedLayer::from_parts(step, sign, planes)?, pruned))
        })
        .collect()
}

/// Writes the stored cells of every array (`layer_k.plane_p.{pos,neg}.txt`),
/// a `crossbar.cfg` with step, flip flag and power per plane, and a
/// `layer_k.placement.txt` for each embedded layer.
pub fn save_crossbar(dir: &Path, layers: &[(CrossbarLayer, Option<PlacementMap>)]) -> Result<()> {
    let mut kv = KeyValues::default();
    kv.set("layers", layers.len());
    for (k, (xbar, map)) in layers.iter().enumerate() {
        kv.set(
            &format!("layer.{k}.step"),
            crate::harness::format::format_value(xbar.step),
        );
        kv.set(&format!("layer.{k}.bits"), xbar.planes.len());
        kv.set(&format!("layer.{k}.embedded"), map.is_some());
        for (p, plane) in xbar.planes.iter().enumerate() {
            kv.set(&format!("layer.{k}.plane.{p}.flipped"), plane.flipped);
            kv.set(&format!("layer.{k}.plane.{p}.power"), plane.power);
            for (pol, name) in [(Polarity::Pos, "pos"), (Polarity::Neg, "neg")] {
                write_tensor(
                    &dir.join(format!("layer_{k}.plane_{p}.{name}.txt")),
                    &bits_to_tensor(&plane.array(pol).stored),
                )?;
            }
        }
        if let Some(map) = map {
            write_placement(&dir.join(format!("layer_{k}.placement.txt")), map)?;
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("crossbar.cfg");
    std::fs::write(&path, kv.to_string()).map_err(|e| Error::io(&path, e))
}
