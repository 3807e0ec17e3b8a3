//! Cell-integrated weights of the nonlocal kernel and their on-disk cache.
//!
//! For the model kernel `|x−y|^{−n−sp}` on a uniform cell-centered grid the
//! weight `w_ij = ∫_{cell_j} K(x_i, y) dy` depends only on the index offset
//! `j − i`, so a single offset table of size `(2nx−1)(2ny−1)` represents the
//! full matrix. The self-cell weight is zero. Each node also carries a far
//! weight `∫_{ℝⁿ∖box} K(x_i, y) dy` that multiplies the far-field constant.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{GridDomain, Point};
use crate::params::ParamSet;
use crate::potentials::complement_kernel_integral;
use crate::quadrature::gauss_legendre;

/// Node pairs allowed for a materialized dense matrix without `dense_ok`.
pub const DENSE_PAIR_BUDGET: usize = 400_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelVariant {
    /// `|x−y|^{−n−sp}`.
    Model,
    /// `c·|x−y|^{−n−sp}` with `ν_K ≤ c ≤ L_K`.
    Scaled { c: f64 },
    /// `a(x,y)·|x−y|^{−n−sp}` with a symmetric smooth `a` oscillating between `ν_K` and `L_K`.
    Modulated,
    /// No nonlocal part.
    Disabled,
}

impl KernelVariant {
    fn tag(&self) -> String {
        match self {
            KernelVariant::Model => "model".into(),
            KernelVariant::Scaled { c } => format!("scaled:{c:e}"),
            KernelVariant::Modulated => "modulated".into(),
            KernelVariant::Disabled => "disabled".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct KernelWeights {
    pub variant: KernelVariant,
    pub s: f64,
    pub p: f64,
    dim: usize,
    shape: [usize; 2],
    h: f64,
    lower: Point,
    nu_k: f64,
    l_k: f64,
    /// Offset table; entry for offset `(a, b)` at `(a + nx − 1) + (b + ny − 1)(2nx − 1)`.
    table: Vec<f64>,
    far: Vec<f64>,
    fingerprint: String,
    /// Per-node `cos(πx), sin(πx), cos(πy), sin(πy)` for the modulated kernel.
    trig: Vec<[f64; 4]>,
    fft: OnceLock<Arc<FftConvolver>>,
}

/// Unit-grid integral of `|y|^{−n−σ}` over the cell centered at integer offset `(a, b)`.
fn unit_cell_integral(dim: usize, a: i64, b: i64, sigma: f64) -> f64 {
    if a == 0 && b == 0 {
        return 0.0;
    }
    if dim == 1 {
        let d = a.unsigned_abs() as f64;
        return ((d - 0.5).powf(-sigma) - (d + 0.5).powf(-sigma)) / sigma;
    }
    let expo = -0.5 * (2.0 + sigma);
    let near = a.abs().max(b.abs()) <= 3;
    let (sub, order) = if near { (8usize, 4usize) } else { (1, 3) };
    let (gx, gw) = gauss_legendre(order);
    let hs = 1.0 / sub as f64;
    let mut acc = 0.0;
    for si in 0..sub {
        for sj in 0..sub {
            let cx = a as f64 - 0.5 + (si as f64 + 0.5) * hs;
            let cy = b as f64 - 0.5 + (sj as f64 + 0.5) * hs;
            for (xi, wi) in gx.iter().zip(&gw) {
                for (yj, wj) in gx.iter().zip(&gw) {
                    let x = cx + 0.5 * hs * xi;
                    let y = cy + 0.5 * hs * yj;
                    acc += wi * wj * (x * x + y * y).powf(expo);
                }
            }
        }
    }
    acc * 0.25 * hs * hs
}

impl KernelWeights {
    /// Builds the weights of `variant` on `grid` for the exponents in `params`.
    pub fn assemble(grid: &GridDomain, params: &ParamSet, variant: KernelVariant) -> Result<Self> {
        params.validate()?;
        if params.n != grid.dim() {
            return Err(Error::GridMismatch(format!(
                "parameter dimension {} differs from grid dimension {}",
                params.n,
                grid.dim()
            )));
        }
        match variant {
            KernelVariant::Scaled { c } if !(c >= params.nu_k && c <= params.l_k) => {
                return Err(Error::InvalidParameter(format!(
                    "kernel scale {c} outside [ν_K, L_K] = [{}, {}]",
                    params.nu_k, params.l_k
                )))
            }
            _ => {}
        }
        let dim = grid.dim();
        let [nx, ny] = grid.shape();
        let sigma = params.s * params.p;
        let h = grid.h();
        let factor = match variant {
            KernelVariant::Model => 1.0,
            KernelVariant::Scaled { c } => c,
            KernelVariant::Modulated => 1.0,
            KernelVariant::Disabled => 0.0,
        };
        let tw = 2 * nx - 1;
        let th = 2 * ny - 1;
        let mut table = vec![0.0; tw * th];
        if factor != 0.0 {
            let scale = factor * h.powf(-sigma);
            let mut quadrant = vec![0.0; nx * ny];
            for b in 0..ny {
                for a in 0..nx {
                    quadrant[a + b * nx] = scale * unit_cell_integral(dim, a as i64, b as i64, sigma);
                }
            }
            for bb in 0..th {
                for aa in 0..tw {
                    let a = (aa as i64 - (nx as i64 - 1)).unsigned_abs() as usize;
                    let b = (bb as i64 - (ny as i64 - 1)).unsigned_abs() as usize;
                    table[aa + bb * tw] = quadrant[a + b * nx];
                }
            }
        }
        let far_factor = match variant {
            KernelVariant::Model => 1.0,
            KernelVariant::Scaled { c } => c,
            KernelVariant::Modulated => 0.5 * (params.nu_k + params.l_k),
            KernelVariant::Disabled => 0.0,
        };
        let far = if far_factor == 0.0 {
            vec![0.0; grid.len()]
        } else {
            (0..grid.len())
                .map(|k| complement_kernel_integral(grid, grid.node(k), 0.0, sigma).map(|v| far_factor * v))
                .collect::<Result<Vec<_>>>()?
        };
        let trig = if variant == KernelVariant::Modulated {
            KernelWeights::assemble_trig(grid)
        } else {
            Vec::new()
        };
        Ok(KernelWeights {
            variant,
            s: params.s,
            p: params.p,
            dim,
            shape: [nx, ny],
            h,
            lower: grid.lower(),
            nu_k: params.nu_k,
            l_k: params.l_k,
            table,
            far,
            fingerprint: grid.fingerprint(),
            trig,
            fft: OnceLock::new(),
        })
    }

    pub fn is_disabled(&self) -> bool {
        self.variant == KernelVariant::Disabled
    }

    pub fn is_translation_invariant(&self) -> bool {
        !matches!(self.variant, KernelVariant::Modulated)
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn grid_fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Fails unless `grid` is the grid these weights were assembled on.
    pub fn check_grid(&self, grid: &GridDomain) -> Result<()> {
        if grid.shape() != self.shape || grid.h() != self.h || grid.lower() != self.lower {
            return Err(Error::GridMismatch("kernel weights were assembled on a different grid".into()));
        }
        Ok(())
    }

    /// Offset-table weight for index offset `(a, b)` before modulation.
    #[inline]
    pub fn offset_weight(&self, a: i64, b: i64) -> f64 {
        let tw = 2 * self.shape[0] - 1;
        let ia = (a + self.shape[0] as i64 - 1) as usize;
        let ib = (b + self.shape[1] as i64 - 1) as usize;
        self.table[ia + ib * tw]
    }

    /// Row of the offset table for vertical offset `b`, indexed by `a + nx − 1`.
    #[inline]
    pub(crate) fn table_row(&self, b: i64) -> &[f64] {
        let tw = 2 * self.shape[0] - 1;
        let ib = (b + self.shape[1] as i64 - 1) as usize;
        &self.table[ib * tw..(ib + 1) * tw]
    }

    /// Coefficient `a(x_i, x_j)` of the modulated kernel (1 for other variants).
    #[inline]
    pub fn modulation(&self, i: usize, j: usize) -> f64 {
        if self.trig.is_empty() {
            return 1.0;
        }
        let (ti, tj) = (&self.trig[i], &self.trig[j]);
        let cx = ti[0] * tj[0] - ti[1] * tj[1];
        let cy = if self.dim == 2 { ti[2] * tj[2] - ti[3] * tj[3] } else { 1.0 };
        0.5 * (self.nu_k + self.l_k) + 0.5 * (self.l_k - self.nu_k) * cx * cy
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let nx = self.shape[0];
        let a = (j % nx) as i64 - (i % nx) as i64;
        let b = (j / nx) as i64 - (i / nx) as i64;
        self.offset_weight(a, b) * self.modulation(i, j)
    }

    /// `∫_{ℝⁿ∖box} K(x_i, y) dy`.
    #[inline]
    pub fn far_weight(&self, i: usize) -> f64 {
        self.far[i]
    }

    /// Model-kernel cell integral for the pair, used to check kernel bounds.
    pub fn model_weight(&self, i: usize, j: usize) -> f64 {
        let nx = self.shape[0];
        let a = (j % nx) as i64 - (i % nx) as i64;
        let b = (j / nx) as i64 - (i / nx) as i64;
        self.h.powf(-self.s * self.p) * unit_cell_integral(self.dim, a, b, self.s * self.p)
    }

    /// Row-major dense matrix of all pairwise weights.
    pub fn dense_matrix(&self, dense_ok: bool) -> Result<Vec<f64>> {
        let n = self.len();
        let pairs = n.saturating_mul(n);
        if pairs > DENSE_PAIR_BUDGET && !dense_ok {
            return Err(Error::DenseBudget {
                pairs,
                budget: DENSE_PAIR_BUDGET,
            });
        }
        let mut m = vec![0.0; pairs];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = self.weight(i, j);
            }
        }
        Ok(m)
    }

    pub(crate) fn convolver(&self) -> Arc<FftConvolver> {
        self.fft.get_or_init(|| Arc::new(FftConvolver::new(self))).clone()
    }

    fn cache_key(&self) -> String {
        format!(
            "{}|s={:e}|p={:e}|{}|nu={:e}|L={:e}",
            self.fingerprint,
            self.s,
            self.p,
            self.variant.tag(),
            self.nu_k,
            self.l_k
        )
    }

    /// Cache file name derived from the content key.
    pub fn cache_path(dir: &Path, grid: &GridDomain, params: &ParamSet, variant: KernelVariant) -> PathBuf {
        let key = format!(
            "{}|s={:e}|p={:e}|{}|nu={:e}|L={:e}",
            grid.fingerprint(),
            params.s,
            params.p,
            variant.tag(),
            params.nu_k,
            params.l_k
        );
        let digest = Sha256::digest(key.as_bytes());
        dir.join(format!("kernel-{}.bin", hex::encode(&digest[..10])))
    }

    /// Writes the weights with a trailing SHA-256 checksum (temp file + rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(b"MXKW1\n");
        let key = self.cache_key();
        buf.extend_from_slice(&(key.len() as u64).to_le_bytes());
        buf.extend_from_slice(key.as_bytes());
        for v in [self.table.len() as u64, self.far.len() as u64] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.table.iter().chain(&self.far) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&buf)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Loads cached weights, verifying the checksum and that the key matches.
    pub fn load(path: &Path, grid: &GridDomain, params: &ParamSet, variant: KernelVariant) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        if buf.len() < 6 + 8 + 32 || &buf[..6] != b"MXKW1\n" {
            return Err(Error::Integrity(format!("{} is not a kernel cache file", path.display())));
        }
        let (body, sum) = buf.split_at(buf.len() - 32);
        if Sha256::digest(body).as_slice() != sum {
            return Err(Error::Integrity(format!("checksum mismatch in {}", path.display())));
        }
        let mut fresh = KernelWeights::skeleton(grid, params, variant)?;
        let mut pos = 6;
        let read_u64 = |pos: &mut usize| -> u64 {
            let v = u64::from_le_bytes(body[*pos..*pos + 8].try_into().unwrap());
            *pos += 8;
            v
        };
        let klen = read_u64(&mut pos) as usize;
        let key = std::str::from_utf8(&body[pos..pos + klen]).map_err(|e| Error::Integrity(e.to_string()))?;
        pos += klen;
        if key != fresh.cache_key() {
            return Err(Error::Integrity("cache key does not match the requested grid and parameters".into()));
        }
        let nt = read_u64(&mut pos) as usize;
        let nf = read_u64(&mut pos) as usize;
        if nt != fresh.table.len() || nf != fresh.far.len() || body.len() != pos + 8 * (nt + nf) {
            return Err(Error::Integrity("cache payload has the wrong size".into()));
        }
        let mut vals = body[pos..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        for v in fresh.table.iter_mut() {
            *v = vals.next().unwrap();
        }
        for v in fresh.far.iter_mut() {
            *v = vals.next().unwrap();
        }
        Ok(fresh)
    }

    /// Loads from `dir` when a valid cache entry exists, otherwise assembles and stores one.
    ///
    /// A present but corrupted entry is an error rather than a silent rebuild.
    pub fn cached(dir: &Path, grid: &GridDomain, params: &ParamSet, variant: KernelVariant) -> Result<Self> {
        let path = Self::cache_path(dir, grid, params, variant);
        if path.exists() {
            return Self::load(&path, grid, params, variant);
        }
        std::fs::create_dir_all(dir)?;
        let w = Self::assemble(grid, params, variant)?;
        w.save(&path)?;
        Ok(w)
    }

    /// Weights object with zero table and far weights but all metadata filled in.
    fn skeleton(grid: &GridDomain, params: &ParamSet, variant: KernelVariant) -> Result<Self> {
        let disabled = KernelWeights::assemble(grid, params, KernelVariant::Disabled)?;
        let trig = if variant == KernelVariant::Modulated {
            KernelWeights::assemble_trig(grid)
        } else {
            Vec::new()
        };
        Ok(KernelWeights {
            variant,
            trig,
            ..disabled
        })
    }

    fn assemble_trig(grid: &GridDomain) -> Vec<[f64; 4]> {
        (0..grid.len())
            .map(|k| {
                let x = grid.node(k);
                let (sx, cx) = (std::f64::consts::PI * x[0]).sin_cos();
                let (sy, cy) = (std::f64::consts::PI * x[1]).sin_cos();
                [cx, sx, cy, sy]
            })
            .collect()
    }
}

/// Linear convolution with the offset table through zero-padded FFTs.
pub(crate) struct FftConvolver {
    px: usize,
    py: usize,
    nx: usize,
    ny: usize,
    kernel_hat: Vec<Complex<f64>>,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
    /// `Σ_{j in box, j≠i} w_ij` per node.
    pub row_sums: Vec<f64>,
}

impl std::fmt::Debug for FftConvolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftConvolver").field("px", &self.px).field("py", &self.py).finish()
    }
}

impl FftConvolver {
    fn new(w: &KernelWeights) -> Self {
        let [nx, ny] = w.shape;
        let px = 2 * nx;
        let py = if w.dim == 2 { 2 * ny } else { 1 };
        let mut planner = FftPlanner::new();
        let fwd_x = planner.plan_fft_forward(px);
        let inv_x = planner.plan_fft_inverse(px);
        let fwd_y = planner.plan_fft_forward(py);
        let inv_y = planner.plan_fft_inverse(py);
        let mut kernel = vec![Complex::new(0.0, 0.0); px * py];
        for b in -(ny as i64 - 1)..=(ny as i64 - 1) {
            for a in -(nx as i64 - 1)..=(nx as i64 - 1) {
                let ia = a.rem_euclid(px as i64) as usize;
                let ib = b.rem_euclid(py as i64) as usize;
                kernel[ia + ib * px] = Complex::new(w.offset_weight(a, b), 0.0);
            }
        }
        let mut conv = FftConvolver {
            px,
            py,
            nx,
            ny,
            kernel_hat: Vec::new(),
            fwd_x,
            inv_x,
            fwd_y,
            inv_y,
            row_sums: Vec::new(),
        };
        conv.transform(&mut kernel, true);
        conv.kernel_hat = kernel;
        conv.row_sums = conv.apply(&vec![1.0; nx * ny]);
        conv
    }

    fn transform(&self, buf: &mut [Complex<f64>], forward: bool) {
        let (fx, fy) = if forward {
            (&self.fwd_x, &self.fwd_y)
        } else {
            (&self.inv_x, &self.inv_y)
        };
        for row in buf.chunks_exact_mut(self.px) {
            fx.process(row);
        }
        if self.py > 1 {
            let mut col = vec![Complex::new(0.0, 0.0); self.py];
            for i in 0..self.px {
                for j in 0..self.py {
                    col[j] = buf[i + j * self.px];
                }
                fy.process(&mut col);
                for j in 0..self.py {
                    buf[i + j * self.px] = col[j];
                }
            }
        }
    }

    /// `(W v)_i = Σ_j w_{ij} v_j` over all box nodes.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.px * self.py];
        for j in 0..self.ny {
            for i in 0..self.nx {
                buf[i + j * self.px] = Complex::new(v[i + j * self.nx], 0.0);
            }
        }
        self.transform(&mut buf, true);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.transform(&mut buf, false);
        let norm = 1.0 / (self.px * self.py) as f64;
        let mut out = vec![0.0; self.nx * self.ny];
        for j in 0..self.ny {
            for i in 0..self.nx {
                out[i + j * self.nx] = buf[i + j * self.px].re * norm;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjacent_weight_1d_closed_form() {
        let g = GridDomain::centered(1, 1.0, 40).unwrap();
        let params = ParamSet::new(1, 0.25, 2.0).unwrap();
        let w = KernelWeights::assemble(&g, &params, KernelVariant::Model).unwrap();
        let h = g.h();
        let sp = 0.5;
        let want = ((0.5 * h).powf(-sp) - (1.5 * h).powf(-sp)) / sp;
        assert!((w.weight(10, 11) - want).abs() < 1e-10 * want);
        assert_eq!(w.weight(10, 10), 0.0);
    }

    #[test]
    fn weights_symmetric_and_positive_2d() {
        let g = GridDomain::centered(2, 1.0, 12).unwrap();
        let params = ParamSet::new(2, 0.4, 2.5).unwrap();
        let w = KernelWeights::assemble(&g, &params, KernelVariant::Modulated).unwrap();
        for i in 0..g.len() {
            for j in 0..g.len() {
                if i != j {
                    assert!(w.weight(i, j) > 0.0);
                    assert_eq!(w.weight(i, j), w.weight(j, i));
                }
            }
        }
    }

    #[test]
    fn near_cell_integral_converges() {
        // Compare the refined rule against a much finer midpoint sum.
        let sigma = 0.8;
        let got = unit_cell_integral(2, 1, 0, sigma);
        let m = 800;
        let hs = 1.0 / m as f64;
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                let x = 0.5 + (i as f64 + 0.5) * hs;
                let y = -0.5 + (j as f64 + 0.5) * hs;
                acc += (x * x + y * y).powf(-0.5 * (2.0 + sigma));
            }
        }
        acc *= hs * hs;
        assert!((got - acc).abs() < 1e-5 * acc);
    }

    #[test]
    fn fft_matches_direct_sum() {
        let g = GridDomain::centered(2, 1.0, 10).unwrap();
        let params = ParamSet::new(2, 0.5, 2.0).unwrap();
        let w = KernelWeights::assemble(&g, &params, KernelVariant::Model).unwrap();
        let v: Vec<f64> = (0..g.len()).map(|k| (k as f64 * 0.37).sin()).collect();
        let fast = w.convolver().apply(&v);
        for i in 0..g.len() {
            let direct: f64 = (0..g.len()).map(|j| w.weight(i, j) * v[j]).sum();
            assert!((fast[i] - direct).abs() < 1e-10 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn cache_roundtrip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridDomain::centered(1, 1.0, 16).unwrap();
        let params = ParamSet::new(1, 0.3, 2.0).unwrap();
        let w = KernelWeights::cached(dir.path(), &g, &params, KernelVariant::Model).unwrap();
        let again = KernelWeights::cached(dir.path(), &g, &params, KernelVariant::Model).unwrap();
        assert_eq!(w.table, again.table);
        assert_eq!(w.far, again.far);
        let path = KernelWeights::cache_path(dir.path(), &g, &params, KernelVariant::Model);
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x55;
        std::fs::write(&path, bytes).unwrap();
        let err = KernelWeights::cached(dir.path(), &g, &params, KernelVariant::Model).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }

    #[test]
    fn dense_guard() {
        let g = GridDomain::centered(1, 1.0, 8).unwrap();
        let params = ParamSet::new(1, 0.3, 2.0).unwrap();
        let w = KernelWeights::assemble(&g, &params, KernelVariant::Model).unwrap();
        assert_eq!(w.dense_matrix(false).unwrap().len(), 64);
    }
}
