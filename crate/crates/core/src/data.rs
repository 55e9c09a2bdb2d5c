//! Synthetic Gaussian-cluster classification data.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Labelled samples, one per row of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<usize>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<usize>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::Dimension(format!(
                "{} samples but {} labels",
                x.rows(),
                y.len()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.x.row(i)
    }

    /// Copies the listed samples into a new dataset.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        let data = idx
            .iter()
            .flat_map(|&i| self.x.row(i).iter().copied())
            .collect();
        Dataset {
            x: Matrix::from_vec(idx.len(), self.dim(), data).expect("row copy"),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Splits `0..len` into shuffled mini-batches.
    pub fn batches(&self, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(rng);
        order
            .chunks(batch_size.max(1))
            .map(<[usize]>::to_vec)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
}

/// Isotropic Gaussian clusters around random class centres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterTask {
    pub dim: usize,
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Norm of each class centre.
    pub separation: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for ClusterTask {
    fn default() -> Self {
        Self {
            dim: 64,
            classes: 4,
            train_per_class: 500,
            test_per_class: 250,
            separation: 3.0,
            noise: 1.0,
            seed: 7,
        }
    }
}

impl ClusterTask {
    pub fn generate(&self) -> Split {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let centres: Vec<Vec<f64>> = (0..self.classes)
            .map(|_| {
                let v: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                v.into_iter().map(|a| a * self.separation / norm).collect()
            })
            .collect();
        let mut draw = |per_class: usize| {
            let mut x = Vec::with_capacity(per_class * self.classes * self.dim);
            let mut y = Vec::with_capacity(per_class * self.classes);
            for _ in 0..per_class {
                for (c, centre) in centres.iter().enumerate() {
                    for &m in centre {
                        let z: f64 = rng.sample(StandardNormal);
                        x.push(m + self.noise * z);
                    }
                    y.push(c);
                }
            }
            let n = y.len();
            Dataset {
                x: Matrix::from_vec(n, self.dim, x).expect("sample block"),
                y,
            }
        };
        let train = draw(self.train_per_class);
        let test = draw(self.test_per_class);
        Split { train, test }
    }
}

/// Standard normal inputs labelled by the arg-max of a random linear map.
/// Samples fill the space up to the decision boundaries, so accuracy reacts
/// to small changes of the learned function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherTask {
    pub dim: usize,
    pub classes: usize,
    pub train: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for TeacherTask {
    fn default() -> Self {
        Self {
            dim: 64,
            classes: 4,
            train: 8000,
            test: 1000,
            seed: 7,
        }
    }
}

impl TeacherTask {
    pub fn generate(&self) -> Split {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let teacher: Vec<f64> = (0..self.dim * self.classes)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let teacher = Matrix::from_vec(self.dim, self.classes, teacher).expect("teacher shape");
        let mut draw = |n: usize| {
            let x: Vec<f64> = (0..n * self.dim)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let x = Matrix::from_vec(n, self.dim, x).expect("sample block");
            let y = (0..n)
                .map(|i| crate::prune::argmax(&teacher.vec_mul(x.row(i)).expect("teacher dims")))
                .collect();
            Dataset { x, y }
        };
        let train = draw(self.train);
        let test = draw(self.test);
        Split { train, test }
    }
}
