//! Product quantization and its optimized (rotated) variant.
//!
//! A vector `x` is rotated (`y = R x`, with `R = I` for plain PQ), split into
//! `M` contiguous subvectors, and each subvector is replaced by the index of
//! its nearest centroid among `K` per subspace. Reconstruction concatenates
//! the chosen centroids and rotates back with `Rᵀ`.
//!
//! OPQ alternates k-means in the rotated space with an orthogonal Procrustes
//! update of `R`. The first k-means phase is exactly plain PQ with the same
//! seed, and every later step is only accepted if it does not increase the
//! reconstruction error, so the OPQ objective never exceeds the PQ one.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GidxError, Result};
use crate::matrix::Matrix;

pub const MODEL_MAGIC: &[u8; 5] = b"GOPQ1";

/// Per-row product-quantization codes, one `u16` per subspace.
pub type Codes = Vec<u16>;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerModel {
    dim: usize,
    num_subspaces: usize,
    num_centroids: usize,
    /// `M x K x (d / M)`, row-major.
    codebooks: Vec<f32>,
    /// `d x d` row-major; `None` means identity.
    rotation: Option<Vec<f32>>,
    trained: bool,
}

/// Objective traces recorded while training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Total squared reconstruction error after seeding and after every Lloyd iteration,
    /// concatenated across OPQ outer steps.
    pub kmeans_objective: Vec<f64>,
    /// OPQ only: objective after each outer step's k-means phase and after its rotation update.
    pub outer_objective: Vec<f64>,
    /// Orthogonality error `max |RᵀR - I|` after each accepted or rejected rotation update.
    pub rotation_error: Vec<f64>,
    pub final_objective: f64,
}

fn check_shape(rows: usize, d: usize, m: usize, k: usize) -> Result<()> {
    if m == 0 || d == 0 || !d.is_multiple_of(m) {
        return Err(GidxError::validation(format!(
            "dimension {d} is not divisible by {m} subspaces"
        )));
    }
    if k == 0 || !k.is_power_of_two() {
        return Err(GidxError::validation(format!(
            "number of centroids must be a power of two, got {k}"
        )));
    }
    if k > u16::MAX as usize + 1 {
        return Err(GidxError::validation(format!("too many centroids: {k}")));
    }
    if k > rows {
        return Err(GidxError::validation(format!(
            "cannot train {k} centroids from {rows} vectors"
        )));
    }
    Ok(())
}

impl QuantizerModel {
    /// An untrained shell; `encode`/`adc` fail on it until replaced by a trained model.
    pub fn untrained(dim: usize, num_subspaces: usize, num_centroids: usize) -> Result<Self> {
        check_shape(usize::MAX, dim, num_subspaces, num_centroids)?;
        Ok(QuantizerModel {
            dim,
            num_subspaces,
            num_centroids,
            codebooks: vec![0.0; num_centroids * dim],
            rotation: None,
            trained: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_subspaces(&self) -> usize {
        self.num_subspaces
    }

    pub fn num_centroids(&self) -> usize {
        self.num_centroids
    }

    pub fn sub_dim(&self) -> usize {
        self.dim / self.num_subspaces
    }

    pub fn rotation(&self) -> Option<&[f32]> {
        self.rotation.as_deref()
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// Centroid `j` of subspace `m`.
    pub fn centroid(&self, m: usize, j: usize) -> &[f32] {
        let s = self.sub_dim();
        let off = (m * self.num_centroids + j) * s;
        &self.codebooks[off..off + s]
    }

    /// Bits needed per subspace code.
    pub fn bits_per_code(&self) -> u32 {
        self.num_centroids.trailing_zeros()
    }

    /// `max |RᵀR - I|`, zero for the identity rotation.
    pub fn orthogonality_error(&self) -> f64 {
        match &self.rotation {
            None => 0.0,
            Some(r) => {
                let r: Vec<f64> = r.iter().map(|&x| x as f64).collect();
                orthogonality_error(&r, self.dim)
            }
        }
    }

    fn ensure_trained(&self) -> Result<()> {
        if self.trained {
            Ok(())
        } else {
            Err(GidxError::State("quantizer has not been trained".into()))
        }
    }

    fn check_dim(&self, v: &[f32]) -> Result<()> {
        if v.len() != self.dim {
            return Err(GidxError::validation(format!(
                "vector has dimension {}, quantizer expects {}",
                v.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// `R v` in `f64`.
    pub fn rotate(&self, v: &[f32]) -> Vec<f64> {
        match &self.rotation {
            None => v.iter().map(|&x| x as f64).collect(),
            Some(r) => (0..self.dim)
                .map(|i| {
                    r[i * self.dim..(i + 1) * self.dim]
                        .iter()
                        .zip(v)
                        .map(|(a, b)| *a as f64 * *b as f64)
                        .sum()
                })
                .collect(),
        }
    }

    pub fn encode(&self, v: &[f32]) -> Result<Codes> {
        self.ensure_trained()?;
        self.check_dim(v)?;
        let y = self.rotate(v);
        let s = self.sub_dim();
        Ok((0..self.num_subspaces)
            .map(|m| {
                let sub = &y[m * s..(m + 1) * s];
                let mut best = (0usize, f64::INFINITY);
                for j in 0..self.num_centroids {
                    let dist = sq_dist_f64_f32(sub, self.centroid(m, j));
                    if dist < best.1 {
                        best = (j, dist);
                    }
                }
                best.0 as u16
            })
            .collect())
    }

    /// Encode every row of `vectors`, concatenating codes row by row.
    pub fn encode_all(&self, vectors: &Matrix) -> Result<Codes> {
        let mut out = Vec::with_capacity(vectors.rows() * self.num_subspaces);
        for row in vectors.iter_rows() {
            out.extend(self.encode(row)?);
        }
        Ok(out)
    }

    fn check_codes(&self, codes: &[u16]) -> Result<()> {
        if codes.len() != self.num_subspaces {
            return Err(GidxError::validation(format!(
                "expected {} codes, got {}",
                self.num_subspaces,
                codes.len()
            )));
        }
        if let Some(bad) = codes.iter().find(|&&c| c as usize >= self.num_centroids) {
            return Err(GidxError::validation(format!(
                "code {bad} out of range for {} centroids",
                self.num_centroids
            )));
        }
        Ok(())
    }

    /// `Rᵀ · concat(codebook[m][code_m])`.
    pub fn reconstruct(&self, codes: &[u16]) -> Result<Vec<f32>> {
        self.check_codes(codes)?;
        let mut y = Vec::with_capacity(self.dim);
        for (m, &c) in codes.iter().enumerate() {
            y.extend_from_slice(self.centroid(m, c as usize));
        }
        Ok(match &self.rotation {
            None => y,
            Some(r) => (0..self.dim)
                .map(|j| {
                    (0..self.dim)
                        .map(|i| r[i * self.dim + j] as f64 * y[i] as f64)
                        .sum::<f64>() as f32
                })
                .collect(),
        })
    }

    /// Per-query lookup table for asymmetric scoring.
    pub fn adc_table(&self, query: &[f32]) -> Result<AdcTable> {
        self.ensure_trained()?;
        self.check_dim(query)?;
        let y = self.rotate(query);
        let s = self.sub_dim();
        let k = self.num_centroids;
        let mut table = Vec::with_capacity(self.num_subspaces * k);
        for m in 0..self.num_subspaces {
            let sub = &y[m * s..(m + 1) * s];
            for j in 0..k {
                let c = self.centroid(m, j);
                table.push(sub.iter().zip(c).map(|(a, b)| a * *b as f64).sum());
            }
        }
        Ok(AdcTable {
            num_centroids: k,
            table,
        })
    }

    /// Memory in bytes for the codebooks, rotation, and `num_vectors` bit-packed codes.
    pub fn memory_footprint(&self, num_vectors: usize) -> u64 {
        memory_footprint(
            self.dim,
            self.num_subspaces,
            self.num_centroids,
            self.rotation.is_some(),
            num_vectors,
        )
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        self.ensure_trained()?;
        let fmt = |e: std::io::Error| GidxError::Format(format!("writing quantizer: {e}"));
        w.write_all(MODEL_MAGIC).map_err(fmt)?;
        w.write_all(&(self.dim as u32).to_le_bytes()).map_err(fmt)?;
        w.write_all(&(self.num_subspaces as u32).to_le_bytes())
            .map_err(fmt)?;
        w.write_all(&(self.num_centroids as u32).to_le_bytes())
            .map_err(fmt)?;
        w.write_all(&[self.rotation.is_some() as u8]).map_err(fmt)?;
        for x in &self.codebooks {
            w.write_all(&x.to_le_bytes()).map_err(fmt)?;
        }
        if let Some(r) = &self.rotation {
            for x in r {
                w.write_all(&x.to_le_bytes()).map_err(fmt)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let fmt = |e: std::io::Error| GidxError::Format(format!("reading quantizer: {e}"));
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic).map_err(fmt)?;
        if &magic != MODEL_MAGIC {
            return Err(GidxError::Format("bad quantizer magic".into()));
        }
        let mut u32buf = [0u8; 4];
        let mut next_u32 = |r: &mut R| -> Result<usize> {
            r.read_exact(&mut u32buf).map_err(fmt)?;
            Ok(u32::from_le_bytes(u32buf) as usize)
        };
        let dim = next_u32(&mut r)?;
        let m = next_u32(&mut r)?;
        let k = next_u32(&mut r)?;
        check_shape(usize::MAX, dim, m, k).map_err(|e| GidxError::Format(e.to_string()))?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag).map_err(fmt)?;
        let codebooks = read_f32s(&mut r, k * dim)?;
        let rotation = match flag[0] {
            0 => None,
            1 => Some(read_f32s(&mut r, dim * dim)?),
            other => return Err(GidxError::Format(format!("bad rotation flag {other}"))),
        };
        Ok(QuantizerModel {
            dim,
            num_subspaces: m,
            num_centroids: k,
            codebooks,
            rotation,
            trained: true,
        })
    }
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)
        .map_err(|e| GidxError::Format(format!("truncated f32 block: {e}")))?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Query-local lookup table `t[m][j] = <(R q)_m, codebook[m][j]>`.
#[derive(Debug, Clone)]
pub struct AdcTable {
    num_centroids: usize,
    table: Vec<f64>,
}

impl AdcTable {
    #[inline]
    pub fn score(&self, codes: &[u16]) -> f64 {
        codes
            .iter()
            .enumerate()
            .map(|(m, &c)| self.table[m * self.num_centroids + c as usize])
            .sum()
    }
}

/// Asymmetric inner-product score of a raw query against a coded vector.
pub fn adc_score(model: &QuantizerModel, query: &[f32], codes: &[u16]) -> Result<f64> {
    model.check_codes(codes)?;
    Ok(model.adc_table(query)?.score(codes))
}

/// Codebooks (`K·d·4`) + rotation (`d·d·4` when present) + `ceil(n·M·log2 K / 8)` code bytes.
pub fn memory_footprint(d: usize, m: usize, k: usize, has_rotation: bool, n: usize) -> u64 {
    let bits = k.trailing_zeros() as u64;
    let codebook = (m * k * (d / m) * 4) as u64;
    let rotation = if has_rotation { (d * d * 4) as u64 } else { 0 };
    let code_bits = n as u64 * m as u64 * bits;
    codebook + rotation + code_bits.div_ceil(8)
}

// ---------------------------------------------------------------------------
// training

fn sq_dist_f64_f32(a: &[f64], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - *y as f64;
            d * d
        })
        .sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Lloyd k-means over one subspace of row-major `f64` data.
struct SubspaceKMeans {
    dim: usize,
    k: usize,
    centroids: Vec<f64>,
    assignment: Vec<usize>,
    cost: Vec<f64>,
}

impl SubspaceKMeans {
    fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    /// k-means++ seeding.
    fn seed(data: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        let n = data.len() / dim;
        let point = |i: usize| &data[i * dim..(i + 1) * dim];
        let mut centroids = Vec::with_capacity(k * dim);
        let first = rng.random_range(0..n);
        centroids.extend_from_slice(point(first));
        let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(point(i), point(first))).collect();
        for _ in 1..k {
            let total: f64 = nearest.iter().sum();
            let pick = if total > 0.0 {
                let mut target = rng.random::<f64>() * total;
                let mut chosen = n - 1;
                for (i, &w) in nearest.iter().enumerate() {
                    if w > 0.0 && target < w {
                        chosen = i;
                        break;
                    }
                    target -= w;
                }
                // guard against rounding leaving target past the last positive weight
                if nearest[chosen] == 0.0 {
                    chosen = nearest.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
                }
                chosen
            } else {
                rng.random_range(0..n)
            };
            centroids.extend_from_slice(point(pick));
            let c = &centroids[centroids.len() - dim..];
            for (i, best) in nearest.iter_mut().enumerate() {
                let d = sq_dist(point(i), c);
                if d < *best {
                    *best = d;
                }
            }
        }
        let mut km = SubspaceKMeans {
            dim,
            k,
            centroids,
            assignment: vec![0; n],
            cost: vec![0.0; n],
        };
        km.assign(data);
        km
    }

    fn from_centroids(data: &[f64], dim: usize, k: usize, centroids: Vec<f64>) -> Self {
        let n = data.len() / dim;
        let mut km = SubspaceKMeans {
            dim,
            k,
            centroids,
            assignment: vec![0; n],
            cost: vec![0.0; n],
        };
        km.assign(data);
        km
    }

    /// Nearest centroid per point, lowest index on ties.
    fn assign(&mut self, data: &[f64]) {
        for (i, p) in data.chunks_exact(self.dim).enumerate() {
            let mut best = (0usize, f64::INFINITY);
            for j in 0..self.k {
                let d = sq_dist(p, self.centroid(j));
                if d < best.1 {
                    best = (j, d);
                }
            }
            self.assignment[i] = best.0;
            self.cost[i] = best.1;
        }
    }

    fn objective(&self) -> f64 {
        self.cost.iter().sum()
    }

    /// Move centroids to cluster means; an empty cluster takes the point farthest from its centroid.
    fn update(&mut self, data: &[f64]) {
        let mut sums = vec![0.0f64; self.k * self.dim];
        let mut counts = vec![0usize; self.k];
        for (i, p) in data.chunks_exact(self.dim).enumerate() {
            let a = self.assignment[i];
            counts[a] += 1;
            for (s, x) in sums[a * self.dim..(a + 1) * self.dim].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut taken = vec![false; self.cost.len()];
        for j in 0..self.k {
            let dst = j * self.dim..(j + 1) * self.dim;
            if counts[j] > 0 {
                let c = counts[j] as f64;
                for (dst, s) in self.centroids[dst].iter_mut().zip(&sums[j * self.dim..]) {
                    *dst = s / c;
                }
            } else {
                let far =
                    (0..self.cost.len())
                        .filter(|&i| !taken[i])
                        .fold(None::<usize>, |best, i| match best {
                            Some(b) if self.cost[b] >= self.cost[i] => Some(b),
                            _ => Some(i),
                        });
                if let Some(f) = far {
                    taken[f] = true;
                    self.centroids[dst].copy_from_slice(&data[f * self.dim..(f + 1) * self.dim]);
                }
            }
        }
    }
}

/// Column block `m` of row-major `n x d` data, as a row-major `n x s` buffer.
fn subspace_block(data: &[f64], d: usize, m: usize, s: usize) -> Vec<f64> {
    data.chunks_exact(d)
        .flat_map(|row| row[m * s..(m + 1) * s].iter().copied())
        .collect()
}

fn subspace_rng(seed: u64, m: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(m as u64);
    rng
}

/// State of all subspace quantizers trained in lockstep.
struct ProductKMeans {
    d: usize,
    s: usize,
    blocks: Vec<Vec<f64>>,
    subspaces: Vec<SubspaceKMeans>,
}

impl ProductKMeans {
    fn seeded(data: &[f64], d: usize, m: usize, k: usize, seed: u64) -> Self {
        let s = d / m;
        let blocks: Vec<_> = (0..m).map(|i| subspace_block(data, d, i, s)).collect();
        let subspaces = blocks
            .iter()
            .enumerate()
            .map(|(i, b)| SubspaceKMeans::seed(b, s, k, &mut subspace_rng(seed, i)))
            .collect();
        ProductKMeans {
            d,
            s,
            blocks,
            subspaces,
        }
    }

    /// Replace the data (e.g. after a new rotation) keeping centroids, then reassign.
    fn rebind(&mut self, data: &[f64]) {
        let m = self.subspaces.len();
        self.blocks = (0..m)
            .map(|i| subspace_block(data, self.d, i, self.s))
            .collect();
        let old = std::mem::take(&mut self.subspaces);
        self.subspaces = old
            .into_iter()
            .zip(&self.blocks)
            .map(|(km, b)| SubspaceKMeans::from_centroids(b, km.dim, km.k, km.centroids))
            .collect();
    }

    fn objective(&self) -> f64 {
        self.subspaces.iter().map(SubspaceKMeans::objective).sum()
    }

    fn lloyd(&mut self, iters: usize, trace: &mut Vec<f64>) {
        trace.push(self.objective());
        for _ in 0..iters {
            for (km, b) in self.subspaces.iter_mut().zip(&self.blocks) {
                km.update(b);
                km.assign(b);
            }
            trace.push(self.objective());
        }
    }

    /// Cost of the current codes on `data`, summed in the same order as [`Self::objective`].
    fn objective_on(&self, data: &[f64]) -> f64 {
        self.subspaces
            .iter()
            .enumerate()
            .map(|(m, km)| {
                let block = subspace_block(data, self.d, m, self.s);
                block
                    .chunks_exact(self.s)
                    .zip(&km.assignment)
                    .map(|(p, &a)| sq_dist(p, km.centroid(a)))
                    .sum::<f64>()
            })
            .sum()
    }

    /// Row-major `n x d` reconstruction in the (rotated) training space.
    fn reconstruction(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * self.d];
        for (m, km) in self.subspaces.iter().enumerate() {
            for i in 0..n {
                let c = km.centroid(km.assignment[i]);
                out[i * self.d + m * self.s..i * self.d + (m + 1) * self.s].copy_from_slice(c);
            }
        }
        out
    }

    fn codebooks_f32(&self) -> Vec<f32> {
        self.subspaces
            .iter()
            .flat_map(|km| km.centroids.iter().map(|&x| x as f32))
            .collect()
    }
}

fn to_f64(vectors: &Matrix) -> Vec<f64> {
    vectors.as_slice().iter().map(|&x| x as f64).collect()
}

/// Plain PQ: seeded k-means++ then `iters` Lloyd iterations per subspace.
pub fn train_pq(
    vectors: &Matrix,
    m: usize,
    k: usize,
    iters: usize,
    seed: u64,
) -> Result<(QuantizerModel, TrainReport)> {
    let d = vectors.cols();
    check_shape(vectors.rows(), d, m, k)?;
    let data = to_f64(vectors);
    let mut pkm = ProductKMeans::seeded(&data, d, m, k, seed);
    let mut report = TrainReport::default();
    pkm.lloyd(iters, &mut report.kmeans_objective);
    report.final_objective = pkm.objective();
    let model = QuantizerModel {
        dim: d,
        num_subspaces: m,
        num_centroids: k,
        codebooks: pkm.codebooks_f32(),
        rotation: None,
        trained: true,
    };
    Ok((model, report))
}

/// Non-parametric OPQ: alternate k-means in the rotated space with a Procrustes rotation update.
pub fn train_opq(
    vectors: &Matrix,
    m: usize,
    k: usize,
    outer_iters: usize,
    kmeans_iters: usize,
    seed: u64,
) -> Result<(QuantizerModel, TrainReport)> {
    let d = vectors.cols();
    let n = vectors.rows();
    check_shape(n, d, m, k)?;
    if outer_iters == 0 {
        return Err(GidxError::validation(
            "OPQ needs at least one outer iteration",
        ));
    }
    let x = to_f64(vectors);
    let mut rotation = identity(d);
    let mut report = TrainReport::default();

    let mut pkm = ProductKMeans::seeded(&x, d, m, k, seed);
    for outer in 0..outer_iters {
        if outer > 0 {
            pkm.rebind(&rotate_rows(&x, &rotation, d));
        }
        pkm.lloyd(kmeans_iters, &mut report.kmeans_objective);
        let current = pkm.objective();
        report.outer_objective.push(current);

        let recon = pkm.reconstruction(n);
        let candidate = procrustes(&x, &recon, n, d);
        let cand_obj = pkm.objective_on(&rotate_rows(&x, &candidate, d));
        // Procrustes is optimal in exact arithmetic; reject numerically worse updates.
        if cand_obj <= current {
            rotation = candidate;
            report.outer_objective.push(cand_obj);
        } else {
            report.outer_objective.push(current);
        }
        report
            .rotation_error
            .push(orthogonality_error(&rotation, d));
    }
    pkm.rebind(&rotate_rows(&x, &rotation, d));
    report.final_objective = pkm.objective();

    let model = QuantizerModel {
        dim: d,
        num_subspaces: m,
        num_centroids: k,
        codebooks: pkm.codebooks_f32(),
        rotation: Some(rotation.iter().map(|&v| v as f32).collect()),
        trained: true,
    };
    Ok((model, report))
}

fn identity(d: usize) -> Vec<f64> {
    let mut r = vec![0.0; d * d];
    for i in 0..d {
        r[i * d + i] = 1.0;
    }
    r
}

/// Rows `y_i = R x_i`.
fn rotate_rows(x: &[f64], r: &[f64], d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks_exact(d) {
        for i in 0..d {
            out.push(
                r[i * d..(i + 1) * d]
                    .iter()
                    .zip(row)
                    .map(|(a, b)| a * b)
                    .sum(),
            );
        }
    }
    out
}

/// Orthogonal `R` minimizing `Σ ||R x_i - y_i||²`: with `Σ y_i x_iᵀ = U Σ Vᵀ`, `R = U Vᵀ`.
pub(crate) fn procrustes(x: &[f64], y: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut cross = DMatrix::<f64>::zeros(d, d);
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        let yi = &y[i * d..(i + 1) * d];
        for a in 0..d {
            for b in 0..d {
                cross[(a, b)] += yi[a] * xi[b];
            }
        }
    }
    let svd = cross.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let r = u * v_t;
    let mut out = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in 0..d {
            out.push(r[(a, b)]);
        }
    }
    out
}

pub(crate) fn orthogonality_error(r: &[f64], d: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let v: f64 = (0..d).map(|k| r[k * d + i] * r[k * d + j]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((v - target).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr_like::gaussian_matrix;

    // Box-Muller over ChaCha so tests don't need rand_distr.
    mod rand_distr_like {
        use super::*;

        pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = (0..rows * cols)
                .map(|_| {
                    let u1: f64 = rng.random::<f64>().max(1e-300);
                    let u2: f64 = rng.random();
                    ((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()) as f32
                })
                .collect();
            Matrix::new(rows, cols, data).unwrap()
        }
    }

    fn nondecreasing_violations(xs: &[f64]) -> usize {
        xs.windows(2).filter(|w| w[1] > w[0]).count()
    }

    #[test]
    fn repeated_points_quantize_exactly() {
        let points: Vec<Vec<f32>> = (0..4)
            .map(|i| (0..8).map(|j| (i * 8 + j) as f32 * 0.1).collect())
            .collect();
        let rows: Vec<Vec<f32>> = (0..40).map(|i| points[i % 4].clone()).collect();
        let data = Matrix::from_rows(&rows, 8).unwrap();
        for m in [1, 2, 8] {
            let (model, report) = train_pq(&data, m, 4, 10, 3).unwrap();
            assert_eq!(report.final_objective, 0.0, "M={m}");
            for p in &points {
                let r = model.reconstruct(&model.encode(p).unwrap()).unwrap();
                for (a, b) in r.iter().zip(p) {
                    assert!((a - b).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn single_centroid_is_the_mean() {
        let data = gaussian_matrix(50, 4, 1);
        let (model, _) = train_pq(&data, 4, 1, 5, 0).unwrap();
        for dim in 0..4 {
            let mean: f64 = data.iter_rows().map(|r| r[dim] as f64).sum::<f64>() / 50.0;
            assert!((model.centroid(dim, 0)[0] as f64 - mean).abs() < 1e-6);
        }
        assert_eq!(model.encode(data.row(3)).unwrap(), vec![0; 4]);
    }

    #[test]
    fn pq_objective_never_increases() {
        for seed in 0..5 {
            let data = gaussian_matrix(300, 16, seed);
            let (_, report) = train_pq(&data, 4, 16, 15, seed).unwrap();
            assert_eq!(nondecreasing_violations(&report.kmeans_objective), 0);
        }
    }

    #[test]
    fn shape_errors() {
        let data = gaussian_matrix(10, 8, 0);
        assert!(train_pq(&data, 3, 4, 1, 0).is_err());
        assert!(train_pq(&data, 2, 3, 1, 0).is_err());
        assert!(train_pq(&data, 2, 16, 1, 0).is_err());
        assert!(train_opq(&data, 2, 4, 0, 1, 0).is_err());
    }

    #[test]
    fn untrained_model_refuses_to_encode() {
        let model = QuantizerModel::untrained(8, 2, 4).unwrap();
        assert!(matches!(model.encode(&[0.0; 8]), Err(GidxError::State(_))));
        assert!(matches!(
            model.adc_table(&[0.0; 8]),
            Err(GidxError::State(_))
        ));
    }

    #[test]
    fn reconstruct_rejects_bad_codes() {
        let data = gaussian_matrix(20, 4, 0);
        let (model, _) = train_pq(&data, 2, 4, 2, 0).unwrap();
        assert!(model.reconstruct(&[0, 4]).is_err());
        assert!(model.reconstruct(&[0]).is_err());
    }

    #[test]
    fn identity_rotation_single_subspace_returns_centroid() {
        let data = gaussian_matrix(64, 4, 9);
        let (model, _) = train_pq(&data, 1, 8, 5, 0).unwrap();
        let codes = model.encode(data.row(0)).unwrap();
        assert_eq!(
            model.reconstruct(&codes).unwrap(),
            model.centroid(0, codes[0] as usize)
        );
    }

    #[test]
    fn encode_matches_exhaustive_codeword_search() {
        let data = gaussian_matrix(200, 8, 4);
        let (model, _) = train_opq(&data, 2, 4, 3, 5, 4).unwrap();
        let probe = gaussian_matrix(20, 8, 99);
        for v in probe.iter_rows() {
            // brute force over all K^M joint codewords in the original space
            let mut best = (vec![0u16, 0], f64::INFINITY);
            for a in 0..4u16 {
                for b in 0..4u16 {
                    let r = model.reconstruct(&[a, b]).unwrap();
                    let dist: f64 = r.iter().zip(v).map(|(x, y)| ((x - y) as f64).powi(2)).sum();
                    if dist < best.1 - 1e-9 {
                        best = (vec![a, b], dist);
                    }
                }
            }
            assert_eq!(model.encode(v).unwrap(), best.0);
        }
    }

    #[test]
    fn reconstruction_error_drops_with_more_centroids() {
        let data = gaussian_matrix(512, 16, 5);
        let mut errs = Vec::new();
        for k in [2, 16, 256] {
            let (_, report) = train_pq(&data, 4, k, 10, 5).unwrap();
            errs.push(report.final_objective / 512.0);
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn procrustes_recovers_a_known_rotation() {
        let d = 6;
        let x = gaussian_matrix(40, d, 2);
        let q_raw = gaussian_matrix(d, d, 3);
        let q_m = DMatrix::from_row_slice(
            d,
            d,
            &q_raw
                .as_slice()
                .iter()
                .map(|&v| v as f64)
                .collect::<Vec<_>>(),
        );
        let q = q_m.qr().q();
        let q_flat: Vec<f64> = (0..d)
            .flat_map(|a| (0..d).map(move |b| (a, b)))
            .map(|(a, b)| q[(a, b)])
            .collect();
        let xs = to_f64(&x);
        let ys = rotate_rows(&xs, &q_flat, d);
        let r = procrustes(&xs, &ys, 40, d);
        for (a, b) in r.iter().zip(&q_flat) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn opq_rotation_stays_orthogonal_and_beats_pq() {
        let data = gaussian_matrix(400, 8, 6);
        let (pq, pq_report) = train_pq(&data, 4, 4, 8, 6).unwrap();
        let (opq, report) = train_opq(&data, 4, 4, 5, 8, 6).unwrap();
        assert!(report.final_objective <= pq_report.final_objective);
        assert!(report.rotation_error.iter().all(|&e| e < 1e-5));
        assert!(opq.orthogonality_error() < 1e-5);
        assert_eq!(pq.orthogonality_error(), 0.0);
        assert_eq!(nondecreasing_violations(&report.outer_objective), 0);
    }

    #[test]
    fn adc_equals_dot_with_reconstruction() {
        let data = gaussian_matrix(100, 12, 8);
        let (model, _) = train_opq(&data, 3, 8, 2, 4, 8).unwrap();
        let q = gaussian_matrix(1, 12, 10);
        let codes = model.encode(data.row(5)).unwrap();
        let recon = model.reconstruct(&codes).unwrap();
        let exact = crate::matrix::dot(q.row(0), &recon);
        assert!((adc_score(&model, q.row(0), &codes).unwrap() - exact).abs() < 1e-5);
        assert_eq!(adc_score(&model, &[0.0; 12], &codes).unwrap(), 0.0);
    }

    #[test]
    fn footprint_formula_instances() {
        assert_eq!(memory_footprint(64, 8, 256, false, 1000), 73_536);
        assert_eq!(memory_footprint(64, 8, 256, true, 1000), 73_536 + 16_384);
        // 8 one-bit codes pack into a single byte
        assert_eq!(memory_footprint(4, 1, 2, false, 8) - 2 * 4 * 4, 1);
        let model = QuantizerModel::untrained(64, 8, 256).unwrap();
        assert_eq!(model.bits_per_code() * 8, 64);
    }

    #[test]
    fn model_file_round_trip() {
        let data = gaussian_matrix(64, 8, 11);
        let (model, _) = train_opq(&data, 2, 4, 2, 3, 11).unwrap();
        let bytes = model.to_bytes().unwrap();
        assert_eq!(&bytes[..5], b"GOPQ1");
        assert_eq!(bytes.len(), 5 + 12 + 1 + 4 * 4 * 8 + 4 * 64);
        assert_eq!(QuantizerModel::read_from(bytes.as_slice()).unwrap(), model);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(QuantizerModel::read_from(bad.as_slice()).is_err());
        assert!(QuantizerModel::read_from(&bytes[..20]).is_err());
    }
}
