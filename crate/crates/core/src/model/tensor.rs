// SPDX-License-Identifier: Apache-2.0

use super::{ModelError, Result};

/// Dense row-major tensor of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn mismatch(msg: String) -> ModelError {
    ModelError::ShapeMismatch(msg)
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(mismatch(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_vector(data: Vec<f64>) -> Tensor {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    fn zip(&self, o: &Tensor, what: &str, f: fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != o.shape {
            return Err(mismatch(format!("{what}: shapes {:?} and {:?}", self.shape, o.shape)));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&o.data).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    pub fn add(&self, o: &Tensor) -> Result<Tensor> {
        self.zip(o, "add", |a, b| a + b)
    }

    pub fn mul(&self, o: &Tensor) -> Result<Tensor> {
        self.zip(o, "mul", |a, b| a * b)
    }

    /// Inner product of two rank-1 tensors.
    pub fn dot(&self, o: &Tensor) -> Result<f64> {
        if self.rank() != 1 || self.shape != o.shape {
            return Err(mismatch(format!("dot: shapes {:?} and {:?}", self.shape, o.shape)));
        }
        Ok(self.data.iter().zip(&o.data).map(|(a, b)| a * b).sum())
    }

    /// Matrix product. A rank-1 right operand is treated as a column vector
    /// and the result is rank 1.
    pub fn matmul(&self, o: &Tensor) -> Result<Tensor> {
        let err = || mismatch(format!("matmul: shapes {:?} and {:?}", self.shape, o.shape));
        let [m, k] = self.shape[..] else { return Err(err()) };
        let (k2, n, vec_out) = match o.shape[..] {
            [k2] => (k2, 1, true),
            [k2, n] => (k2, n, false),
            _ => return Err(err()),
        };
        if k != k2 {
            return Err(err());
        }
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let a = self.data[i * k + p];
                for j in 0..n {
                    data[i * n + j] += a * o.data[p * n + j];
                }
            }
        }
        let shape = if vec_out { vec![m] } else { vec![m, n] };
        Ok(Tensor { shape, data })
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn identity(n: usize) -> Tensor {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Tensor { shape: vec![n, n], data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn small_cases() {
        let a = Tensor::from_vector(vec![1.0, 0.0]);
        let b = Tensor::from_vector(vec![0.0, 1.0]);
        assert_eq!(a.dot(&b).unwrap(), 0.0);
        let m = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(Tensor::identity(2).matmul(&m).unwrap(), m);
        assert_eq!(m.matmul(&Tensor::identity(3)).unwrap(), m);
        assert_eq!(m.reshape(vec![3, 2]).unwrap().data(), m.data());
        assert!(matches!(m.reshape(vec![4]), Err(ModelError::ShapeMismatch(_))));
        assert!(matches!(m.matmul(&m), Err(ModelError::ShapeMismatch(_))));
        assert_eq!(
            m.matmul(&Tensor::from_vector(vec![1.0, 1.0, 1.0])).unwrap(),
            Tensor::from_vector(vec![6.0, 15.0])
        );
        assert_eq!(a.add(&b).unwrap().data(), &[1.0, 1.0]);
        assert_eq!(a.mul(&b).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn matmul_vs_triple_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let (m, k, n) = (rng.gen_range(1..8), rng.gen_range(1..8), rng.gen_range(1..8));
            let a: Vec<f64> = (0..m * k).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let b: Vec<f64> = (0..k * n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let got = Tensor::new(vec![m, k], a.clone())
                .unwrap()
                .matmul(&Tensor::new(vec![k, n], b.clone()).unwrap())
                .unwrap();
            for i in 0..m {
                for j in 0..n {
                    let mut s = 0.0;
                    for p in 0..k {
                        s += a[i * k + p] * b[p * n + j];
                    }
                    let g = got.data()[i * n + j];
                    assert!((g - s).abs() <= 1e-12 * s.abs().max(1.0), "{g} vs {s}");
                }
            }
        }
    }
}
