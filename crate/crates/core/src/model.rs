//! Synthetic permutation-synchronization instances.
//!
//! For every pair `j < k` an edge is observed with probability `p`; an
//! observed block is `X_jk = Z*_j Z*_kᵀ + σ W_jk` with standard normal
//! `W_jk`. The full `nd × nd` matrix has `X_kj = X_jkᵀ`, zero diagonal blocks
//! and zero blocks for unobserved pairs.
//!
//! All randomness is drawn from ChaCha streams keyed by `(seed, role)`, one
//! stream per object. Row `j` consumes its mask and noise streams in order of
//! `k`, so the block of a pair is fixed by the seed and does not change when
//! `n` grows.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::permutation::{sample_uniform, Permutation};

/// Largest `n·d` that [`Instance::assemble_dense`] builds by default.
pub const DENSE_CAP: usize = 8192;

const BINARY_MAGIC: &[u8; 8] = b"PERMSYN1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TruthMode {
    /// `Z*_j = I_d` for every object.
    Identity,
    /// `Z*_j` drawn uniformly from the permutation group.
    #[default]
    Uniform,
}

impl std::str::FromStr for TruthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::InvalidParams(format!("unknown truth mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub d: usize,
    pub p: f64,
    pub sigma: f64,
    #[serde(default)]
    pub truth_mode: TruthMode,
    pub seed: u64,
}

impl ModelParams {
    pub fn new(n: usize, d: usize, p: f64, sigma: f64, seed: u64) -> Self {
        Self { n, d, p, sigma, truth_mode: TruthMode::Uniform, seed }
    }

    pub fn with_truth_mode(mut self, mode: TruthMode) -> Self {
        self.truth_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParams(format!("n must be at least 2, got {}", self.n)));
        }
        if self.d < 1 {
            return Err(Error::InvalidParams("d must be at least 1".into()));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::InvalidParams(format!("p must lie in (0, 1], got {}", self.p)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParams(format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        if self.n > u32::MAX as usize {
            return Err(Error::InvalidParams("n does not fit in 32 bits".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
#[repr(u64)]
enum Role {
    Truth = 0x7472_7574,
    Mask = 0x6d61_736b,
    Noise = 0x6e6f_6973,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a sequence of words into one 64-bit value (splitmix64 chaining).
pub fn mix_seed(words: &[u64]) -> u64 {
    let mut state = 0x243f_6a88_85a3_08d3u64;
    let mut out = 0;
    for &w in words {
        state ^= w;
        out = splitmix64(&mut state);
    }
    out
}

/// A ChaCha stream keyed by `(seed, role)` and positioned on stream `id`.
fn keyed_stream(seed: u64, role: Role, id: u64) -> ChaCha8Rng {
    let mut state = seed ^ (role as u64).rotate_left(32);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(id);
    rng
}

/// Box–Muller on `(0, 1]` uniforms; fills `out` with independent N(0, 1) draws.
fn fill_standard_normal<R: Rng>(rng: &mut R, out: &mut [f64]) {
    for chunk in out.chunks_mut(2) {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        chunk[0] = radius * angle.cos();
        if let Some(second) = chunk.get_mut(1) {
            *second = radius * angle.sin();
        }
    }
}

/// One observed synthetic problem. Blocks are stored for `j < k` only.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    params: ModelParams,
    truth: Option<Vec<Permutation>>,
    pairs: Vec<(u32, u32)>,
    /// `d*d` row-major values per pair, in `pairs` order.
    values: Vec<f64>,
}

impl Instance {
    /// Draws an instance from the observation model; deterministic in `params`.
    pub fn generate(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let ModelParams { n, d, p, sigma, .. } = *params;

        let truth: Vec<Permutation> = match params.truth_mode {
            TruthMode::Identity => vec![Permutation::identity(d); n],
            TruthMode::Uniform => (0..n)
                .map(|j| sample_uniform(d, &mut keyed_stream(params.seed, Role::Truth, j as u64)))
                .collect(),
        };
        // One mask stream and one noise stream per row `j`, consumed in
        // increasing `k`, so the block of pair (j, k) does not depend on n.
        let mut pairs = Vec::new();
        let mut values = Vec::new();
        let mut noise = vec![0.0; d * d];
        for j in 0..n {
            let mut mask_rng = keyed_stream(params.seed, Role::Mask, j as u64);
            let mut noise_rng = keyed_stream(params.seed, Role::Noise, j as u64);
            for k in j + 1..n {
                let observed = p >= 1.0 || mask_rng.random::<f64>() < p;
                if !observed {
                    continue;
                }
                let start = values.len();
                if sigma > 0.0 {
                    fill_standard_normal(&mut noise_rng, &mut noise);
                    values.extend(noise.iter().map(|w| sigma * w));
                } else {
                    values.resize(start + d * d, 0.0);
                }
                // Z_j Z_kᵀ has a one at (z_j(t), z_k(t)) for each t
                for (&r, &c) in truth[j].images().iter().zip(truth[k].images()) {
                    values[start + r * d + c] += 1.0;
                }
                pairs.push((j as u32, k as u32));
            }
        }
        Ok(Self::build(*params, Some(truth), pairs, values))
    }

    /// Assembles an instance from stored parts, validating the layout.
    pub fn from_parts(
        params: ModelParams,
        truth: Option<Vec<Permutation>>,
        pairs: Vec<(u32, u32)>,
        values: Vec<f64>,
    ) -> Result<Self> {
        params.validate()?;
        let (n, d) = (params.n, params.d);
        if let Some(t) = &truth {
            if t.len() != n {
                return Err(Error::LengthMismatch { expected: n, found: t.len() });
            }
            if let Some(bad) = t.iter().find(|z| z.d() != d) {
                return Err(Error::DimensionMismatch { expected: d, found: bad.d() });
            }
        }
        if values.len() != pairs.len() * d * d {
            return Err(Error::LengthMismatch { expected: pairs.len() * d * d, found: values.len() });
        }
        for w in pairs.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Format("pairs must be strictly increasing".into()));
            }
        }
        for &(j, k) in &pairs {
            if j >= k || k as usize >= n {
                return Err(Error::Format(format!("invalid pair ({j}, {k}) for n={n}")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self::build(params, truth, pairs, values))
    }

    fn build(params: ModelParams, truth: Option<Vec<Permutation>>, pairs: Vec<(u32, u32)>, values: Vec<f64>) -> Self {
        Self { params, truth, pairs, values }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn d(&self) -> usize {
        self.params.d
    }

    pub fn dim(&self) -> usize {
        self.params.n * self.params.d
    }

    pub fn truth(&self) -> Option<&[Permutation]> {
        self.truth.as_deref()
    }

    pub fn observed_pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn num_observed(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_observed(&self, j: usize, k: usize) -> bool {
        self.pair_index(j, k).is_some()
    }

    fn pair_index(&self, j: usize, k: usize) -> Option<usize> {
        if j == k {
            return None;
        }
        let key = (j.min(k) as u32, j.max(k) as u32);
        self.pairs.binary_search(&key).ok()
    }

    /// Symmetric `n × n` observation mask with a false diagonal.
    pub fn mask(&self) -> Vec<Vec<bool>> {
        let n = self.n();
        let mut m = vec![vec![false; n]; n];
        for &(j, k) in &self.pairs {
            m[j as usize][k as usize] = true;
            m[k as usize][j as usize] = true;
        }
        m
    }

    /// Row-major values of the stored block for the pair with index `idx`.
    fn stored(&self, idx: usize) -> &[f64] {
        let dd = self.d() * self.d();
        &self.values[idx * dd..(idx + 1) * dd]
    }

    /// Block `X_jk` for any ordered pair; `None` when the pair is unobserved
    /// or `j == k`.
    pub fn block(&self, j: usize, k: usize) -> Option<DMatrix<f64>> {
        let d = self.d();
        let idx = self.pair_index(j, k)?;
        let upper = DMatrix::from_row_slice(d, d, self.stored(idx));
        Some(if j < k { upper } else { upper.transpose() })
    }

    /// Dense `nd × nd` observation matrix, refusing sizes above [`DENSE_CAP`].
    pub fn assemble_dense(&self) -> Result<DMatrix<f64>> {
        self.assemble_dense_with_cap(DENSE_CAP)
    }

    pub fn assemble_dense_with_cap(&self, cap: usize) -> Result<DMatrix<f64>> {
        let size = self.dim();
        if size > cap {
            return Err(Error::TooLarge { size, cap });
        }
        let d = self.d();
        let mut x = DMatrix::zeros(size, size);
        for (idx, &(j, k)) in self.pairs.iter().enumerate() {
            let (j, k) = (j as usize, k as usize);
            let block = self.stored(idx);
            for r in 0..d {
                for c in 0..d {
                    let v = block[r * d + c];
                    x[(j * d + r, k * d + c)] = v;
                    x[(k * d + c, j * d + r)] = v;
                }
            }
        }
        Ok(x)
    }

    /// Matrix-free product `X · v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::LengthMismatch { expected: self.dim(), found: v.len() });
        }
        let vm = DMatrix::from_column_slice(v.len(), 1, v);
        Ok(self.apply_block(&vm).as_slice().to_vec())
    }

    /// `X · V` for an `nd × b` block of vectors.
    pub fn apply_block(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.d();
        let rows = v.nrows();
        let mut out = DMatrix::zeros(rows, v.ncols());
        let dd = d * d;
        for (v_col, out_col) in v
            .as_slice()
            .chunks_exact(rows)
            .zip(out.as_mut_slice().chunks_exact_mut(rows))
        {
            for (&(j, k), block) in self.pairs.iter().zip(self.values.chunks_exact(dd)) {
                let (j, k) = (j as usize * d, k as usize * d);
                // out_j += X_jk v_k and out_k += X_jkᵀ v_j
                for r in 0..d {
                    let row = &block[r * d..(r + 1) * d];
                    let vj = v_col[j + r];
                    let mut acc = 0.0;
                    for (c, &x) in row.iter().enumerate() {
                        acc += x * v_col[k + c];
                        out_col[k + c] += x * vj;
                    }
                    out_col[j + r] += acc;
                }
            }
        }
        out
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        let d = self.d();
        let file = InstanceFile {
            params: self.params,
            truth: self.truth.clone(),
            blocks: self
                .pairs
                .iter()
                .enumerate()
                .map(|(idx, &(j, k))| BlockRecord { j, k, values: self.stored(idx).to_vec() })
                .collect(),
        };
        debug_assert!(file.blocks.iter().all(|b| b.values.len() == d * d));
        serde_json::to_writer(w, &file)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let file: InstanceFile = serde_json::from_reader(r)?;
        let pairs = file.blocks.iter().map(|b| (b.j, b.k)).collect();
        let values = file.blocks.into_iter().flat_map(|b| b.values).collect();
        Self::from_parts(file.params, file.truth, pairs, values)
    }

    /// Little-endian binary container:
    ///
    /// ```text
    /// magic     8 bytes  "PERMSYN1"
    /// n, d      u64, u64
    /// p, sigma  f64, f64
    /// truth     u8 (0 identity, 1 uniform), seed u64
    /// has_truth u8; if 1: n*d u32 images, object-major
    /// pairs     u64 count, then per pair: j u32, k u32, d*d f64 row-major
    /// ```
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let p = &self.params;
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&(p.n as u64).to_le_bytes())?;
        w.write_all(&(p.d as u64).to_le_bytes())?;
        w.write_all(&p.p.to_le_bytes())?;
        w.write_all(&p.sigma.to_le_bytes())?;
        w.write_all(&[match p.truth_mode {
            TruthMode::Identity => 0,
            TruthMode::Uniform => 1,
        }])?;
        w.write_all(&p.seed.to_le_bytes())?;
        match &self.truth {
            Some(truth) => {
                w.write_all(&[1])?;
                for z in truth {
                    for &i in z.images() {
                        w.write_all(&(i as u32).to_le_bytes())?;
                    }
                }
            }
            None => w.write_all(&[0])?,
        }
        w.write_all(&(self.pairs.len() as u64).to_le_bytes())?;
        for (idx, &(j, k)) in self.pairs.iter().enumerate() {
            w.write_all(&j.to_le_bytes())?;
            w.write_all(&k.to_le_bytes())?;
            for v in self.stored(idx) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Format("not a permsync instance file".into()));
        }
        let n = read_u64(&mut r)? as usize;
        let d = read_u64(&mut r)? as usize;
        let p = f64::from_bits(read_u64(&mut r)?);
        let sigma = f64::from_bits(read_u64(&mut r)?);
        let truth_mode = match read_u8(&mut r)? {
            0 => TruthMode::Identity,
            1 => TruthMode::Uniform,
            other => return Err(Error::Format(format!("bad truth mode tag {other}"))),
        };
        let seed = read_u64(&mut r)?;
        let params = ModelParams { n, d, p, sigma, truth_mode, seed };
        params.validate()?;
        let truth = match read_u8(&mut r)? {
            0 => None,
            1 => {
                let mut truth = Vec::with_capacity(n);
                for _ in 0..n {
                    let images = (0..d).map(|_| read_u32(&mut r).map(|i| i as usize)).collect::<Result<Vec<_>>>()?;
                    truth.push(Permutation::new(images)?);
                }
                Some(truth)
            }
            other => return Err(Error::Format(format!("bad truth flag {other}"))),
        };
        let count = read_u64(&mut r)? as usize;
        if count > n * (n - 1) / 2 {
            return Err(Error::Format(format!("{count} pairs exceed n(n-1)/2")));
        }
        let mut pairs = Vec::with_capacity(count);
        let mut values = Vec::with_capacity(count * d * d);
        for _ in 0..count {
            let j = read_u32(&mut r)?;
            let k = read_u32(&mut r)?;
            pairs.push((j, k));
            for _ in 0..d * d {
                values.push(f64::from_bits(read_u64(&mut r)?));
            }
        }
        Self::from_parts(params, truth, pairs, values)
    }
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    params: ModelParams,
    truth: Option<Vec<Permutation>>,
    blocks: Vec<BlockRecord>,
}

#[derive(Serialize, Deserialize)]
struct BlockRecord {
    j: u32,
    k: u32,
    values: Vec<f64>,
}

/// Eigenvalues of `E[A] ⊗ I_d`: `(n−1)p` with multiplicity `d`, and `−p`
/// for the remaining `(n−1)d` directions.
pub fn population_eigenvalues(n: usize, p: f64, _d: usize) -> (f64, f64) {
    ((n as f64 - 1.0) * p, -p)
}

/// `U*`: the `nd × d` matrix with blocks `Z*_j / √n`.
pub fn population_eigenspace(truth: &[Permutation]) -> DMatrix<f64> {
    let n = truth.len();
    let d = truth.first().map_or(0, Permutation::d);
    let scale = 1.0 / (n as f64).sqrt();
    let mut u = DMatrix::zeros(n * d, d);
    for (j, z) in truth.iter().enumerate() {
        for (c, &r) in z.images().iter().enumerate() {
            u[(j * d + r, c)] = scale;
        }
    }
    u
}
