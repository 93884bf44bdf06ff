//! Matrix-free linear operators.
//!
//! Every operator knows its shape, its forward action and its adjoint, and can
//! evaluate single rows of its forward action (used by the subsampled residual
//! estimator). The spectral norm is estimated lazily by power iteration and
//! cached on the operator.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::vecops::{dot, norm2};

/// Multiplicative safety margin applied to power-iteration estimates before
/// they enter step-size bounds.
pub const NORM_SAFETY: f64 = 1.001;

pub const DEFAULT_NORM_TOL: f64 = 1e-6;
pub const DEFAULT_NORM_MAX_ITERS: usize = 1000;
pub const DEFAULT_NORM_SEED: u64 = 0x5eed;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(
                "dense matrix must have at least one row and one column".into(),
            ));
        }
        check_len("DenseMatrix::new", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_len("DenseMatrix::from_rows", cols, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.get(r, c);
            }
        }
        DenseMatrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from per-row `(column, value)` lists.
    pub fn from_row_lists(cols: usize, row_lists: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let rows = row_lists.len();
        let nnz = row_lists.iter().map(Vec::len).sum();
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        indptr.push(0);
        for row in row_lists {
            for (c, v) in row {
                if c >= cols {
                    return Err(Error::InvalidParameter(format!(
                        "column index {c} out of range for {cols} columns"
                    )));
                }
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        self.row(r).map(|(c, v)| v * x[c]).sum()
    }

    fn select_rows(&self, rows: &[usize]) -> CsrMatrix {
        let lists = rows.iter().map(|&r| self.row(r).collect()).collect();
        // column indices were validated when `self` was built
        CsrMatrix::from_row_lists(self.cols, lists).expect("valid columns")
    }
}

#[derive(Clone, Debug)]
enum OpKind {
    Identity(usize),
    Dense(DenseMatrix),
    Sparse(CsrMatrix),
    /// 1-D forward differences, last entry zero.
    Diff1d(usize),
    /// 2-D forward differences on a `side × side` row-major image, stacked as
    /// `[horizontal; vertical]`, replicate boundary.
    Grad2d(usize),
}

/// A bounded linear map between finite-dimensional real spaces.
#[derive(Debug)]
pub struct LinearMap {
    kind: OpKind,
    norm_cache: OnceLock<f64>,
}

impl Clone for LinearMap {
    fn clone(&self) -> Self {
        let norm_cache = OnceLock::new();
        if let Some(&n) = self.norm_cache.get() {
            let _ = norm_cache.set(n);
        }
        Self {
            kind: self.kind.clone(),
            norm_cache,
        }
    }
}

impl LinearMap {
    fn from_kind(kind: OpKind) -> Self {
        Self {
            kind,
            norm_cache: OnceLock::new(),
        }
    }

    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("identity of dimension 0".into()));
        }
        let op = Self::from_kind(OpKind::Identity(n));
        let _ = op.norm_cache.set(1.0);
        Ok(op)
    }

    pub fn dense(m: DenseMatrix) -> Self {
        Self::from_kind(OpKind::Dense(m))
    }

    pub fn sparse(m: CsrMatrix) -> Result<Self> {
        if m.rows == 0 || m.cols == 0 {
            return Err(Error::InvalidParameter("empty sparse operator".into()));
        }
        Ok(Self::from_kind(OpKind::Sparse(m)))
    }

    pub fn diagonal(d: &[f64]) -> Result<Self> {
        let n = d.len();
        let rows = d.iter().enumerate().map(|(i, &v)| vec![(i, v)]).collect();
        Self::sparse(CsrMatrix::from_row_lists(n, rows)?)
    }

    /// 1-D forward difference `(Dx)_j = x_{j+1} - x_j`, with the last entry zero.
    pub fn forward_diff_1d(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("difference of dimension 0".into()));
        }
        Ok(Self::from_kind(OpKind::Diff1d(n)))
    }

    /// Discrete gradient of a `side × side` image (`2·side²` outputs).
    pub fn gradient_2d(side: usize) -> Result<Self> {
        if side < 2 {
            return Err(Error::InvalidParameter("gradient needs side >= 2".into()));
        }
        Ok(Self::from_kind(OpKind::Grad2d(side)))
    }

    /// Parses a dense matrix from CSV text, one row per line.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: {tok:?}: {e}", lineno + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Parse("empty matrix".into()));
        }
        Ok(Self::dense(DenseMatrix::from_rows(&rows)?))
    }

    pub fn domain_dim(&self) -> usize {
        match &self.kind {
            OpKind::Identity(n) | OpKind::Diff1d(n) => *n,
            OpKind::Dense(m) => m.cols,
            OpKind::Sparse(m) => m.cols,
            OpKind::Grad2d(side) => side * side,
        }
    }

    pub fn range_dim(&self) -> usize {
        match &self.kind {
            OpKind::Identity(n) | OpKind::Diff1d(n) => *n,
            OpKind::Dense(m) => m.rows,
            OpKind::Sparse(m) => m.rows,
            OpKind::Grad2d(side) => 2 * side * side,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("apply", self.domain_dim(), x.len())?;
        let mut out = vec![0.0; self.range_dim()];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    pub fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("adjoint", self.range_dim(), y.len())?;
        let mut out = vec![0.0; self.domain_dim()];
        self.adjoint_acc(y, 1.0, &mut out);
        Ok(out)
    }

    /// Writes `A x` into `out`. Lengths must match (panics otherwise).
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.domain_dim());
        assert_eq!(out.len(), self.range_dim());
        match &self.kind {
            OpKind::Identity(_) => out.copy_from_slice(x),
            OpKind::Dense(m) => {
                for (r, o) in out.iter_mut().enumerate() {
                    *o = dot(m.row(r), x);
                }
            }
            OpKind::Sparse(m) => {
                for (r, o) in out.iter_mut().enumerate() {
                    *o = m.row_dot(r, x);
                }
            }
            OpKind::Diff1d(n) => {
                for j in 0..n - 1 {
                    out[j] = x[j + 1] - x[j];
                }
                out[n - 1] = 0.0;
            }
            OpKind::Grad2d(side) => {
                let s = *side;
                let d = s * s;
                let (h, v) = out.split_at_mut(d);
                for r in 0..s {
                    for c in 0..s {
                        let p = r * s + c;
                        h[p] = if c + 1 < s { x[p + 1] - x[p] } else { 0.0 };
                        v[p] = if r + 1 < s { x[p + s] - x[p] } else { 0.0 };
                    }
                }
            }
        }
    }

    /// `out += scale · A* y`. Lengths must match (panics otherwise).
    pub fn adjoint_acc(&self, y: &[f64], scale: f64, out: &mut [f64]) {
        assert_eq!(y.len(), self.range_dim());
        assert_eq!(out.len(), self.domain_dim());
        match &self.kind {
            OpKind::Identity(_) => {
                for (o, v) in out.iter_mut().zip(y) {
                    *o += scale * v;
                }
            }
            OpKind::Dense(m) => {
                for (r, &yr) in y.iter().enumerate() {
                    let a = scale * yr;
                    if a != 0.0 {
                        for (o, v) in out.iter_mut().zip(m.row(r)) {
                            *o += a * v;
                        }
                    }
                }
            }
            OpKind::Sparse(m) => {
                for (r, &yr) in y.iter().enumerate() {
                    let a = scale * yr;
                    if a != 0.0 {
                        for (c, v) in m.row(r) {
                            out[c] += a * v;
                        }
                    }
                }
            }
            OpKind::Diff1d(n) => {
                for j in 0..n - 1 {
                    let a = scale * y[j];
                    out[j + 1] += a;
                    out[j] -= a;
                }
            }
            OpKind::Grad2d(side) => {
                let s = *side;
                let d = s * s;
                let (h, v) = y.split_at(d);
                for r in 0..s {
                    for c in 0..s {
                        let p = r * s + c;
                        if c + 1 < s {
                            let a = scale * h[p];
                            out[p + 1] += a;
                            out[p] -= a;
                        }
                        if r + 1 < s {
                            let a = scale * v[p];
                            out[p + s] += a;
                            out[p] -= a;
                        }
                    }
                }
            }
        }
    }

    /// Single entry `(A x)_r` of the forward image.
    pub fn apply_row(&self, r: usize, x: &[f64]) -> f64 {
        match &self.kind {
            OpKind::Identity(_) => x[r],
            OpKind::Dense(m) => dot(m.row(r), x),
            OpKind::Sparse(m) => m.row_dot(r, x),
            OpKind::Diff1d(n) => {
                if r + 1 < *n {
                    x[r + 1] - x[r]
                } else {
                    0.0
                }
            }
            OpKind::Grad2d(side) => {
                let s = *side;
                let d = s * s;
                if r < d {
                    let c = r % s;
                    if c + 1 < s {
                        x[r + 1] - x[r]
                    } else {
                        0.0
                    }
                } else {
                    let p = r - d;
                    if p / s + 1 < s {
                        x[p + s] - x[p]
                    } else {
                        0.0
                    }
                }
            }
        }
    }

    /// Materializes the operator as a dense matrix. Intended for small operators.
    pub fn to_dense(&self) -> DenseMatrix {
        let (m, n) = (self.range_dim(), self.domain_dim());
        let mut data = vec![0.0; m * n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; m];
        for j in 0..n {
            e[j] = 1.0;
            self.apply_into(&e, &mut col);
            for i in 0..m {
                data[i * n + j] = col[i];
            }
            e[j] = 0.0;
        }
        DenseMatrix {
            rows: m,
            cols: n,
            data,
        }
    }

    /// Restriction of the operator to a subset of its rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<LinearMap> {
        let m = self.range_dim();
        if rows.is_empty() {
            return Err(Error::InvalidParameter("empty row selection".into()));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= m) {
            return Err(Error::InvalidParameter(format!(
                "row {bad} out of range for {m} rows"
            )));
        }
        let kind = match &self.kind {
            OpKind::Dense(dm) => {
                let mut data = Vec::with_capacity(rows.len() * dm.cols);
                for &r in rows {
                    data.extend_from_slice(dm.row(r));
                }
                OpKind::Dense(DenseMatrix {
                    rows: rows.len(),
                    cols: dm.cols,
                    data,
                })
            }
            OpKind::Sparse(sm) => OpKind::Sparse(sm.select_rows(rows)),
            _ => {
                let n = self.domain_dim();
                let lists = rows.iter().map(|&r| row_entries(self, r, n)).collect::<Vec<_>>();
                OpKind::Sparse(CsrMatrix::from_row_lists(n, lists)?)
            }
        };
        Ok(Self::from_kind(kind))
    }

    /// Cached spectral-norm estimate, if one has been computed.
    pub fn norm(&self) -> Option<f64> {
        self.norm_cache.get().copied()
    }

    /// Stores an externally computed norm. Has no effect if already cached.
    pub fn set_norm(&self, value: f64) {
        let _ = self.norm_cache.set(value);
    }

    /// Power-iteration estimate of `‖A‖` with default settings, cached.
    pub fn norm_estimate(&self) -> f64 {
        self.estimate_norm(DEFAULT_NORM_TOL, DEFAULT_NORM_MAX_ITERS, DEFAULT_NORM_SEED)
    }

    /// Cached estimate inflated by [`NORM_SAFETY`], for use in step-size bounds.
    pub fn norm_bound(&self) -> f64 {
        self.norm_estimate() * NORM_SAFETY
    }

    /// Power iteration on `A*A`. Returns the cached value when present.
    ///
    /// Iterates until the relative change of the estimate drops below `tol` or
    /// `max_iters` is reached. The zero operator yields 0.
    pub fn estimate_norm(&self, tol: f64, max_iters: usize, seed: u64) -> f64 {
        if let Some(n) = self.norm() {
            return n;
        }
        let est = power_iteration(self, tol, max_iters.max(1), seed);
        *self.norm_cache.get_or_init(|| est)
    }
}

fn row_entries(op: &LinearMap, r: usize, n: usize) -> Vec<(usize, f64)> {
    match &op.kind {
        OpKind::Identity(_) => vec![(r, 1.0)],
        OpKind::Diff1d(n) => {
            if r + 1 < *n {
                vec![(r, -1.0), (r + 1, 1.0)]
            } else {
                vec![]
            }
        }
        OpKind::Grad2d(side) => {
            let s = *side;
            let d = s * s;
            if r < d {
                if r % s + 1 < s {
                    vec![(r, -1.0), (r + 1, 1.0)]
                } else {
                    vec![]
                }
            } else {
                let p = r - d;
                if p / s + 1 < s {
                    vec![(p, -1.0), (p + s, 1.0)]
                } else {
                    vec![]
                }
            }
        }
        OpKind::Dense(_) | OpKind::Sparse(_) => {
            let mut e = vec![0.0; n];
            let mut out = Vec::new();
            for c in 0..n {
                e[c] = 1.0;
                let v = op.apply_row(r, &e);
                e[c] = 0.0;
                if v != 0.0 {
                    out.push((c, v));
                }
            }
            out
        }
    }
}

fn power_iteration(op: &LinearMap, tol: f64, max_iters: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..op.domain_dim())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|e| *e /= nv);

    let mut av = vec![0.0; op.range_dim()];
    let mut w = vec![0.0; op.domain_dim()];
    let mut est = 0.0;
    for _ in 0..max_iters {
        op.apply_into(&v, &mut av);
        let sigma = norm2(&av);
        if sigma == 0.0 {
            return 0.0;
        }
        w.iter_mut().for_each(|e| *e = 0.0);
        op.adjoint_acc(&av, 1.0, &mut w);
        let nw = norm2(&w);
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        let converged = (sigma - est).abs() <= tol * sigma;
        est = sigma;
        if converged {
            break;
        }
    }
    // one more Rayleigh-type evaluation on the latest direction
    op.apply_into(&v, &mut av);
    norm2(&av).max(est)
}

/// Blocks obtained by splitting an operator's rows.
#[derive(Clone, Debug)]
pub struct BlockPartition {
    pub blocks: Vec<LinearMap>,
    pub data_blocks: Vec<Vec<f64>>,
    pub row_index_sets: Vec<Vec<usize>>,
}

impl BlockPartition {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Number of rows in the parent operator.
    pub fn parent_rows(&self) -> usize {
        self.row_index_sets.iter().map(Vec::len).sum()
    }

    /// Scatters per-block vectors back into parent row order.
    pub fn scatter(&self, parts: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_len("BlockPartition::scatter", self.len(), parts.len())?;
        let mut out = vec![0.0; self.parent_rows()];
        for (rows, part) in self.row_index_sets.iter().zip(parts) {
            check_len("BlockPartition::scatter", rows.len(), part.len())?;
            for (&r, &v) in rows.iter().zip(part) {
                out[r] = v;
            }
        }
        Ok(out)
    }
}

/// Assigns parent row `r` to block `r mod n`.
pub fn partition_interleaved(op: &LinearMap, b: &[f64], n: usize) -> Result<BlockPartition> {
    let m = op.range_dim();
    check_len("partition_interleaved", m, b.len())?;
    if n == 0 || n > m {
        return Err(Error::InvalidParameter(format!(
            "cannot split {m} rows into {n} blocks"
        )));
    }
    let row_index_sets: Vec<Vec<usize>> = (0..n).map(|i| (i..m).step_by(n).collect()).collect();
    let mut blocks = Vec::with_capacity(n);
    let mut data_blocks = Vec::with_capacity(n);
    for rows in &row_index_sets {
        blocks.push(op.select_rows(rows)?);
        data_blocks.push(rows.iter().map(|&r| b[r]).collect());
    }
    Ok(BlockPartition {
        blocks,
        data_blocks,
        row_index_sets,
    })
}

/// Parallel-beam acquisition geometry over a square pixel grid.
///
/// Rays are traced on a unit-pixel grid centred at the origin and intersection
/// lengths are multiplied by `pixel_size`. Ray `(a, j)` is the line `{ t_j·(cos θ_a, sin θ_a) + s·(−sin θ_a, cos θ_a) }`, with
/// detector offsets `t_j` spaced `detector_spacing` apart and centred on 0,
/// and angles `θ_a` evenly spaced over `[arc_start, arc_end)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParallelBeam {
    pub side: usize,
    pub n_angles: usize,
    pub n_detectors: usize,
    pub detector_spacing: f64,
    pub arc_start: f64,
    pub arc_end: f64,
    pub pixel_size: f64,
}

impl ParallelBeam {
    pub fn new(side: usize, n_angles: usize, n_detectors: usize) -> Self {
        Self {
            side,
            n_angles,
            n_detectors,
            detector_spacing: 1.0,
            arc_start: 0.0,
            arc_end: std::f64::consts::PI,
            pixel_size: 1.0,
        }
    }

    pub fn with_pixel_size(mut self, h: f64) -> Self {
        self.pixel_size = h;
        self
    }

    pub fn with_arc(mut self, start: f64, end: f64) -> Self {
        self.arc_start = start;
        self.arc_end = end;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.side < 2 {
            return Err(Error::InvalidParameter("grid side must be >= 2".into()));
        }
        if self.n_angles == 0 || self.n_detectors == 0 {
            return Err(Error::InvalidParameter(
                "need at least one angle and one detector".into(),
            ));
        }
        if !(self.detector_spacing > 0.0) || !(self.arc_end > self.arc_start) {
            return Err(Error::InvalidParameter(
                "detector spacing and angular range must be positive".into(),
            ));
        }
        if !(self.pixel_size > 0.0 && self.pixel_size.is_finite()) {
            return Err(Error::InvalidParameter("pixel size must be positive".into()));
        }
        Ok(())
    }

    pub fn angle(&self, a: usize) -> f64 {
        self.arc_start + (self.arc_end - self.arc_start) * a as f64 / self.n_angles as f64
    }

    pub fn offset(&self, j: usize) -> f64 {
        (j as f64 - (self.n_detectors as f64 - 1.0) / 2.0) * self.detector_spacing
    }

    /// Row index of ray `(angle a, detector j)`.
    pub fn ray_index(&self, a: usize, j: usize) -> usize {
        a * self.n_detectors + j
    }

    /// Siddon traversal: `(pixel, intersection length)` pairs along one ray.
    pub fn trace(&self, a: usize, j: usize) -> Vec<(usize, f64)> {
        let theta = self.angle(a);
        let t = self.offset(j);
        let half = self.side as f64 / 2.0;
        let (c, s) = (theta.cos(), theta.sin());
        let p0 = (t * c, t * s);
        let dir = (-s, c);

        // parametric range where the ray is inside the box
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (p, d) in [(p0.0, dir.0), (p0.1, dir.1)] {
            if d.abs() < 1e-12 {
                if p < -half || p > half {
                    return Vec::new();
                }
            } else {
                let a0 = (-half - p) / d;
                let a1 = (half - p) / d;
                lo = lo.max(a0.min(a1));
                hi = hi.min(a0.max(a1));
            }
        }
        if hi - lo <= 1e-12 {
            return Vec::new();
        }

        let mut alphas = vec![lo, hi];
        for (p, d) in [(p0.0, dir.0), (p0.1, dir.1)] {
            if d.abs() < 1e-12 {
                continue;
            }
            for k in 0..=self.side {
                let a = (-half + k as f64 - p) / d;
                if a > lo && a < hi {
                    alphas.push(a);
                }
            }
        }
        alphas.sort_by(f64::total_cmp);

        let n = self.side;
        let mut out = Vec::new();
        for w in alphas.windows(2) {
            let len = w[1] - w[0];
            if len <= 1e-12 {
                continue;
            }
            let mid = 0.5 * (w[0] + w[1]);
            let x = p0.0 + mid * dir.0;
            let y = p0.1 + mid * dir.1;
            let col = ((x + half).floor() as isize).clamp(0, n as isize - 1) as usize;
            let row = ((half - y).floor() as isize).clamp(0, n as isize - 1) as usize;
            out.push((row * n + col, len));
        }
        out
    }

    pub fn matrix(&self) -> Result<CsrMatrix> {
        self.validate()?;
        let mut rows = Vec::with_capacity(self.n_angles * self.n_detectors);
        for a in 0..self.n_angles {
            for j in 0..self.n_detectors {
                let mut row = self.trace(a, j);
                if self.pixel_size != 1.0 {
                    row.iter_mut().for_each(|e| e.1 *= self.pixel_size);
                }
                rows.push(row);
            }
        }
        CsrMatrix::from_row_lists(self.side * self.side, rows)
    }

    pub fn operator(&self) -> Result<LinearMap> {
        LinearMap::sparse(self.matrix()?)
    }
}

/// Parallel-beam projector over `[0, π)` with unit detector spacing.
pub fn toy_projector(grid: usize, n_angles: usize, n_detectors: usize) -> Result<LinearMap> {
    ParallelBeam::new(grid, n_angles, n_detectors).operator()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecops::norm2;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn dense2() -> LinearMap {
        LinearMap::dense(DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap())
    }

    #[test]
    fn apply_examples() {
        let id = LinearMap::identity(2).unwrap();
        assert_eq!(id.apply(&[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);
        assert_eq!(dense2().apply(&[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
        let d = LinearMap::forward_diff_1d(3).unwrap();
        assert_eq!(d.apply(&[1.0, 2.0, 4.0]).unwrap(), vec![1.0, 2.0, 0.0]);
    }

    #[test]
    fn adjoint_examples() {
        let id = LinearMap::identity(1).unwrap();
        assert_eq!(id.adjoint(&[5.0]).unwrap(), vec![5.0]);
        assert_eq!(dense2().adjoint(&[1.0, 0.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let op = dense2();
        assert!(matches!(
            op.apply(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1,
                ..
            })
        ));
        assert!(op.adjoint(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn norm_examples() {
        let id = LinearMap::identity(8).unwrap();
        assert_eq!(id.norm_estimate(), 1.0);
        let diag = LinearMap::diagonal(&[3.0, 1.0]).unwrap();
        let n = diag.estimate_norm(1e-10, 1000, 1);
        assert!((n - 3.0).abs() < 1e-8, "{n}");
        assert_eq!(diag.norm(), Some(n));
    }

    #[test]
    fn zero_operator_has_zero_norm() {
        let z = LinearMap::dense(DenseMatrix::new(3, 2, vec![0.0; 6]).unwrap());
        assert_eq!(z.norm_estimate(), 0.0);
    }

    #[test]
    fn gradient_norm_below_analytic_cap() {
        let g = LinearMap::gradient_2d(16).unwrap();
        let n = g.norm_estimate();
        assert!(n <= 8f64.sqrt() + 1e-9, "{n}");
        assert!(n > 2.7, "{n}");
    }

    #[test]
    fn operators_pass_adjoint_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ops = vec![
            LinearMap::identity(5).unwrap(),
            dense2(),
            LinearMap::forward_diff_1d(9).unwrap(),
            LinearMap::gradient_2d(7).unwrap(),
            toy_projector(8, 6, 13).unwrap(),
            ParallelBeam::new(9, 5, 11)
                .with_arc(0.0, 150f64.to_radians())
                .operator()
                .unwrap(),
        ];
        for op in &ops {
            for _ in 0..100 {
                let x = rand_vec(&mut rng, op.domain_dim());
                let y = rand_vec(&mut rng, op.range_dim());
                let lhs = dot(&op.apply(&x).unwrap(), &y);
                let rhs = dot(&x, &op.adjoint(&y).unwrap());
                assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + norm2(&x) * norm2(&y)));
            }
        }
    }

    #[test]
    fn norm_dominates_random_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let op = toy_projector(12, 10, 17).unwrap();
        let bound = op.norm_estimate();
        for _ in 0..100 {
            let x = rand_vec(&mut rng, op.domain_dim());
            let ax = op.apply(&x).unwrap();
            assert!(norm2(&ax) <= bound * norm2(&x) * (1.0 + 1e-6));
        }
    }

    #[test]
    fn apply_row_matches_apply() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for op in [
            LinearMap::gradient_2d(5).unwrap(),
            LinearMap::forward_diff_1d(6).unwrap(),
            toy_projector(6, 4, 9).unwrap(),
        ] {
            let x = rand_vec(&mut rng, op.domain_dim());
            let full = op.apply(&x).unwrap();
            for (r, v) in full.iter().enumerate() {
                assert_eq!(op.apply_row(r, &x), *v);
            }
        }
    }

    #[test]
    fn partition_examples() {
        let m = DenseMatrix::new(6, 2, (0..12).map(f64::from).collect()).unwrap();
        let op = LinearMap::dense(m);
        let b: Vec<f64> = (0..6).map(f64::from).collect();
        let p = partition_interleaved(&op, &b, 3).unwrap();
        assert_eq!(p.row_index_sets, vec![vec![0, 3], vec![1, 4], vec![2, 5]]);
        assert_eq!(p.data_blocks[1], vec![1.0, 4.0]);
        assert_eq!(p.blocks[2].range_dim(), 2);

        let single = partition_interleaved(&op, &b, 1).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single.data_blocks[0], b);
        assert_eq!(single.blocks[0].to_dense(), op.to_dense());

        assert!(partition_interleaved(&op, &b, 7).is_err());
        assert!(partition_interleaved(&op, &b, 0).is_err());
    }

    #[test]
    fn partition_reassembles_parent_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let op = toy_projector(10, 7, 15).unwrap();
        let b = rand_vec(&mut rng, op.range_dim());
        for n in [1, 2, 3, 5, 10] {
            let p = partition_interleaved(&op, &b, n).unwrap();
            for _ in 0..20 {
                let x = rand_vec(&mut rng, op.domain_dim());
                let parts: Vec<_> = p.blocks.iter().map(|blk| blk.apply(&x).unwrap()).collect();
                assert_eq!(p.scatter(&parts).unwrap(), op.apply(&x).unwrap());
            }
            assert_eq!(p.scatter(&p.data_blocks).unwrap(), b);
        }
    }

    #[test]
    fn projector_of_zero_image_is_zero() {
        let op = toy_projector(8, 5, 11).unwrap();
        let s = op.apply(&vec![0.0; 64]).unwrap();
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn central_ray_of_constant_image_has_side_length() {
        for side in [7, 8, 64] {
            let geom = ParallelBeam::new(side, 4, 2 * side + 1);
            let op = geom.operator().unwrap();
            let s = op.apply(&vec![1.0; side * side]).unwrap();
            let center = geom.ray_index(0, side);
            assert!((s[center] - side as f64).abs() < 1e-9, "{}", s[center]);
            // also at 90 degrees
            let center90 = geom.ray_index(2, side);
            assert!((s[center90] - side as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn projector_entries_nonnegative() {
        let m = ParallelBeam::new(9, 11, 15).matrix().unwrap();
        for r in 0..m.rows() {
            assert!(m.row(r).all(|(_, v)| v > 0.0));
        }
    }

    #[test]
    fn invalid_geometry_rejected() {
        assert!(toy_projector(1, 3, 3).is_err());
        assert!(toy_projector(4, 0, 3).is_err());
        assert!(toy_projector(4, 3, 0).is_err());
    }

    #[test]
    fn csv_matrix_round_trip() {
        let op = LinearMap::from_csv("1, 2\n3,4\n").unwrap();
        assert_eq!(op.to_dense(), dense2().to_dense());
        assert!(LinearMap::from_csv("1,2\n3\n").is_err());
        assert!(LinearMap::from_csv("1,x\n").is_err());
        assert!(LinearMap::from_csv("\n").is_err());
    }
}
