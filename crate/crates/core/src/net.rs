//! The shared single-layer encoder `x -> max(0, Wx + b)`.
//!
//! One [`EmbeddingParams`] value serves the anchor, positive and negative
//! branches alike: there is no per-branch copy anywhere in the trainer.

use std::io::{BufRead, Write};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::textio::{expect_marker, keyed, lines, parse_row, write_row};
use crate::rng::{self, TAG_INIT};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingParams {
    dim_in: usize,
    dim_out: usize,
    /// Row-major `dim_out x dim_in`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl EmbeddingParams {
    /// Uniform init in `[-sqrt(6/dim_in), sqrt(6/dim_in)]`, zero bias.
    pub fn init(dim_in: usize, dim_out: usize, seed: u64) -> Result<Self> {
        if dim_in == 0 || dim_out == 0 {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        let bound = (6.0 / dim_in as f64).sqrt();
        let mut rng = rng::stream(seed, &[TAG_INIT]);
        let weights = (0..dim_in * dim_out)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Ok(Self {
            dim_in,
            dim_out,
            weights,
            bias: vec![0.0; dim_out],
        })
    }

    pub fn from_parts(dim_in: usize, dim_out: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if dim_in == 0 || dim_out == 0 {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        check_dim(dim_in * dim_out, weights.len())?;
        check_dim(dim_out, bias.len())?;
        if weights.iter().chain(&bias).any(|x| !x.is_finite()) {
            return Err(Error::Model("non-finite network parameter".into()));
        }
        Ok(Self {
            dim_in,
            dim_out,
            weights,
            bias,
        })
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub(crate) fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.dim_in..(r + 1) * self.dim_in]
    }

    /// `Wx + b`, before the activation.
    pub fn pre_activation(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim_in, x.len())?;
        Ok(self.pre_activation_unchecked(x))
    }

    pub(crate) fn pre_activation_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.dim_in)
            .zip(&self.bias)
            .map(|(row, b)| linalg::dot(row, x) + b)
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.pre_activation(x)?;
        relu_in_place(&mut z);
        Ok(z)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|x| x.is_finite())
    }
}

pub(crate) fn relu_in_place(z: &mut [f64]) {
    for v in z {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Applies [`EmbeddingParams::forward`] to every input, in order.
pub fn embed_batch<V: AsRef<[f64]> + Sync>(params: &EmbeddingParams, xs: &[V]) -> Result<Vec<Vec<f64>>> {
    xs.par_iter().map(|x| params.forward(x.as_ref())).collect()
}

/// Scales `v` to unit length; the zero vector is left unchanged.
pub fn l2_normalize_in_place(v: &mut [f64]) {
    let n = linalg::norm(v);
    if n > 0.0 {
        for x in v {
            *x /= n;
        }
    }
}

const CHECKPOINT_MAGIC: &str = "tnnspk-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

/// A trained encoder as stored on disk.
///
/// Text layout, one item per line:
///
/// ```text
/// tnnspk-checkpoint 1
/// dim_in <d>
/// dim_out <e>
/// normalize <true|false>
/// config_hash <hex>
/// weights
/// <e lines of d space-separated values, row-major>
/// bias
/// <one line of e space-separated values>
/// end
/// ```
///
/// Values use the shortest representation that round-trips exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: EmbeddingParams,
    pub normalize: bool,
    pub config_hash: String,
}

impl Checkpoint {
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let p = &self.params;
        writeln!(out, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}")?;
        writeln!(out, "dim_in {}", p.dim_in)?;
        writeln!(out, "dim_out {}", p.dim_out)?;
        writeln!(out, "normalize {}", self.normalize)?;
        writeln!(out, "config_hash {}", self.config_hash)?;
        writeln!(out, "weights")?;
        for r in 0..p.dim_out {
            write_row(&mut out, p.row(r))?;
        }
        writeln!(out, "bias")?;
        write_row(&mut out, &p.bias)?;
        writeln!(out, "end")?;
        out.flush()
    }

    pub fn read<R: BufRead>(source: R) -> Result<Self> {
        let mut next = lines(source);
        let (n, header) = next("header")?;
        if header.trim() != format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}") {
            return Err(Error::Parse {
                line: n,
                msg: format!("not a version {CHECKPOINT_VERSION} checkpoint"),
            });
        }
        let dim_in: usize = keyed(next("dim_in")?, "dim_in")?;
        let dim_out: usize = keyed(next("dim_out")?, "dim_out")?;
        let normalize: bool = keyed(next("normalize")?, "normalize")?;
        let config_hash: String = keyed(next("config_hash")?, "config_hash")?;
        expect_marker(next("weights")?, "weights")?;
        let mut weights = Vec::with_capacity(dim_in * dim_out);
        for _ in 0..dim_out {
            weights.extend(parse_row(next("weight row")?, dim_in)?);
        }
        expect_marker(next("bias")?, "bias")?;
        let bias = parse_row(next("bias values")?, dim_out)?;
        expect_marker(next("end")?, "end")?;
        Ok(Self {
            params: EmbeddingParams::from_parts(dim_in, dim_out, weights, bias)?,
            normalize,
            config_hash,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(n: usize) -> EmbeddingParams {
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        EmbeddingParams::from_parts(n, n, w, vec![0.0; n]).unwrap()
    }

    #[test]
    fn init_bounds_and_shape() {
        let p = EmbeddingParams::init(600, 600, 1).unwrap();
        let bound = (6.0f64 / 600.0).sqrt();
        assert_eq!(p.weights().len(), 600 * 600);
        assert!(p.weights().iter().all(|w| w.abs() <= bound));
        assert!(p.bias().iter().all(|&b| b == 0.0));
        assert_eq!(p, EmbeddingParams::init(600, 600, 1).unwrap());
        assert_ne!(p, EmbeddingParams::init(600, 600, 2).unwrap());
    }

    #[test]
    fn init_scalar() {
        for seed in 0..50 {
            let p = EmbeddingParams::init(1, 1, seed).unwrap();
            assert!(p.weights()[0].abs() <= 6f64.sqrt());
        }
    }

    #[test]
    fn identity_forward() {
        let p = identity(3);
        assert_eq!(p.forward(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(p.forward(&[-1.0, 2.0, -3.0]).unwrap(), vec![0.0, 2.0, 0.0]);
    }

    #[test]
    fn bias_only() {
        let p = EmbeddingParams::from_parts(3, 2, vec![0.0; 6], vec![0.5, -0.5]).unwrap();
        assert_eq!(p.forward(&[7.0, -1.0, 2.0]).unwrap(), vec![0.5, 0.0]);
    }

    #[test]
    fn forward_dimension_mismatch() {
        assert!(matches!(
            identity(3).forward(&[1.0, 2.0]),
            Err(Error::Dimension { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn batch_cases() {
        let p = EmbeddingParams::init(4, 3, 9).unwrap();
        let empty: Vec<Vec<f64>> = Vec::new();
        assert!(embed_batch(&p, &empty).unwrap().is_empty());
        let x = vec![0.3, -1.0, 2.0, 0.5];
        assert_eq!(embed_batch(&p, std::slice::from_ref(&x)).unwrap(), vec![p.forward(&x).unwrap()]);
        let out = embed_batch(&p, &[x.clone(), x.clone(), x]).unwrap();
        assert_eq!(out[0], out[1]);
        assert_eq!(out[1], out[2]);
    }

    #[test]
    fn batch_matches_forward_on_any_pool_size() {
        let p = EmbeddingParams::init(17, 9, 3).unwrap();
        let xs: Vec<Vec<f64>> = (0..200)
            .map(|i| (0..17).map(|j| ((i * 31 + j * 7) % 13) as f64 - 6.0).collect())
            .collect();
        let serial: Vec<Vec<f64>> = xs.iter().map(|x| p.forward(x).unwrap()).collect();
        for threads in [1, 3] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let out = pool.install(|| embed_batch(&p, &xs).unwrap());
            assert_eq!(out, serial);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let ck = Checkpoint {
            params: EmbeddingParams::init(7, 4, 11).unwrap(),
            normalize: true,
            config_hash: "abc123".into(),
        };
        let mut buf = Vec::new();
        ck.write(&mut buf).unwrap();
        assert_eq!(Checkpoint::read(buf.as_slice()).unwrap(), ck);
    }

    #[test]
    fn checkpoint_truncated() {
        let ck = Checkpoint {
            params: EmbeddingParams::init(3, 2, 1).unwrap(),
            normalize: false,
            config_hash: "h".into(),
        };
        let mut buf = Vec::new();
        ck.write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(7).map(|l| format!("{l}\n")).collect();
        assert!(Checkpoint::read(cut.as_bytes()).is_err());
    }

    proptest::proptest! {
        #[test]
        fn outputs_are_nonnegative(seed in 0u64..1000, x in proptest::collection::vec(-100f64..100.0, 6)) {
            let p = EmbeddingParams::init(6, 5, seed).unwrap();
            let y = p.forward(&x).unwrap();
            proptest::prop_assert!(y.iter().all(|v| *v >= 0.0 && v.is_finite()));
            proptest::prop_assert_eq!(y, p.forward(&x).unwrap());
        }
    }
}
