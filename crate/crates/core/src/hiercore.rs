//! Pseudo-inverses, recursive null-space projectors and hierarchy composition.
//!
//! Everything here is a pure function of its inputs. Matrices are dense
//! `nalgebra` matrices; the shapes involved are small (a handful of rows, at
//! most a dozen columns), so no sparse or blocked paths exist.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative rank tolerance: a singular value counts as zero when it is at most
/// `RANK_RTOL * sigma_max`.
pub const RANK_RTOL: f64 = 1e-8;

/// Minimal-norm right inverse `Jᵀ(JJᵀ)⁻¹` of a full-row-rank `m × n` matrix.
///
/// `rtol` is relative to the largest singular value. Fails with
/// [`Error::RankDeficient`] when the smallest singular value is at or below
/// `rtol * sigma_max`, and with [`Error::DimensionMismatch`] when `m > n`.
pub fn right_pseudoinverse(j: &DMatrix<f64>, rtol: f64) -> Result<DMatrix<f64>> {
    let (m, n) = j.shape();
    if m > n {
        return Err(Error::DimensionMismatch(format!(
            "right pseudo-inverse needs m <= n, got {m}x{n}"
        )));
    }
    if m == 0 {
        return Ok(DMatrix::zeros(n, 0));
    }
    if m == 1 {
        let norm_sq = j.norm_squared();
        let sigma = norm_sq.sqrt();
        if !(sigma > 0.0) {
            return Err(Error::RankDeficient {
                sigma_min: sigma,
                tol: 0.0,
            });
        }
        return Ok(j.transpose() / norm_sq);
    }
    if m == 2 {
        if let Some(pinv) = gram_inverse_2(j, rtol)? {
            return Ok(pinv);
        }
    }
    let svd = j.clone().svd(true, true);
    let sv = &svd.singular_values;
    let sigma_max = sv.max();
    let sigma_min = sv.min();
    let tol = rtol * sigma_max;
    if !(sigma_min > tol) {
        return Err(Error::RankDeficient { sigma_min, tol });
    }
    // svd.u is m×m, v_t is m×n for the thin decomposition of a wide matrix.
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut scaled = v_t.transpose();
    for (c, s) in sv.iter().enumerate() {
        scaled.column_mut(c).scale_mut(1.0 / s);
    }
    Ok(scaled * u.transpose())
}

// Two-row fast path through the 2×2 Gram matrix. Returns `None` when the
// conditioning is poor enough that squaring it would blur the rank decision.
fn gram_inverse_2(j: &DMatrix<f64>, rtol: f64) -> Result<Option<DMatrix<f64>>> {
    let r0 = j.row(0);
    let r1 = j.row(1);
    let a = r0.dot(&r0);
    let b = r0.dot(&r1);
    let c = r1.dot(&r1);
    let mean = 0.5 * (a + c);
    let half_gap = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let eig_max = mean + half_gap;
    let eig_min = (mean - half_gap).max(0.0);
    let sigma_max = eig_max.sqrt();
    let sigma_min = eig_min.sqrt();
    if !(sigma_max > 0.0) {
        return Err(Error::RankDeficient {
            sigma_min: 0.0,
            tol: 0.0,
        });
    }
    if sigma_min < 1e-4 * sigma_max {
        return Ok(None);
    }
    let tol = rtol * sigma_max;
    if !(sigma_min > tol) {
        return Err(Error::RankDeficient { sigma_min, tol });
    }
    let det = a * c - b * b;
    let gram_inv = DMatrix::from_row_slice(2, 2, &[c / det, -b / det, -b / det, a / det]);
    Ok(Some(j.transpose() * gram_inv))
}

/// Moore–Penrose pseudo-inverse with singular values at or below
/// `rtol * sigma_max` truncated. Accepts any shape and rank; returns the
/// pseudo-inverse together with the numerical rank.
pub fn truncated_pseudoinverse(a: &DMatrix<f64>, rtol: f64) -> (DMatrix<f64>, usize) {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return (DMatrix::zeros(n, m), 0);
    }
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let tol = rtol * sv.max();
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut pinv = DMatrix::zeros(n, m);
    let mut rank = 0;
    for (i, &s) in sv.iter().enumerate() {
        if s > tol && s > 0.0 {
            rank += 1;
            pinv += (v_t.row(i).transpose() / s) * u.column(i).transpose();
        }
    }
    (pinv, rank)
}

/// Number of singular values above `rtol * sigma_max`.
pub fn numerical_rank(a: &DMatrix<f64>, rtol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().singular_values();
    let tol = rtol * sv.max();
    sv.iter().filter(|&&s| s > tol && s > 0.0).count()
}

/// Rank of an orthogonal projector: its singular values are 0 or 1, so
/// roundoff-sized residue is not counted.
pub fn projector_rank(n: &DMatrix<f64>) -> usize {
    if n.is_empty() {
        return 0;
    }
    n.clone().singular_values().iter().filter(|&&s| s > 0.5).count()
}

/// `I − Λ†Λ` for a full-row-rank input map. A map with zero rows imposes no
/// constraint and yields the identity.
pub fn null_space_projector(map: &DMatrix<f64>, rtol: f64) -> Result<DMatrix<f64>> {
    let p = map.ncols();
    if map.nrows() == 0 {
        return Ok(DMatrix::identity(p, p));
    }
    let pinv = right_pseudoinverse(map, rtol)?;
    Ok(DMatrix::identity(p, p) - pinv * map)
}

/// Ordered task Jacobians `J_k` (`m_k × n`), highest priority first.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskJacobianSet {
    jacobians: Vec<DMatrix<f64>>,
    n: usize,
}

impl TaskJacobianSet {
    pub fn new(jacobians: Vec<DMatrix<f64>>, rtol: f64) -> Result<Self> {
        let Some(first) = jacobians.first() else {
            return Err(Error::InvalidArgument("empty task set".into()));
        };
        let n = first.ncols();
        for (k, j) in jacobians.iter().enumerate() {
            if j.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "J_{} has {} columns, expected {n}",
                    k + 1,
                    j.ncols()
                )));
            }
            if j.nrows() > n {
                return Err(Error::DimensionMismatch(format!(
                    "J_{} has {} rows for {n} degrees of freedom",
                    k + 1,
                    j.nrows()
                )));
            }
            // Full row rank, checked the same way the inversion will.
            right_pseudoinverse(j, rtol)?;
        }
        Ok(Self { jacobians, n })
    }

    pub fn jacobians(&self) -> &[DMatrix<f64>] {
        &self.jacobians
    }

    pub fn dofs(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.jacobians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jacobians.is_empty()
    }
}

/// `N_1 = I, N_2, …, N_{K+1}` together with the null-space dimension left after
/// each level.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorChain {
    projectors: Vec<DMatrix<f64>>,
    residual_dims: Vec<usize>,
}

impl ProjectorChain {
    /// Wraps precomputed projectors as-is (no invariant checks). The residual
    /// dimensions are the numerical ranks of `N_2, …`.
    pub fn from_projectors(projectors: Vec<DMatrix<f64>>) -> Self {
        let residual_dims = projectors
            .iter()
            .skip(1)
            .map(projector_rank)
            .collect();
        Self {
            projectors,
            residual_dims,
        }
    }

    /// `projectors()[k]` is `N_{k+1}`.
    pub fn projectors(&self) -> &[DMatrix<f64>] {
        &self.projectors
    }

    /// `residual_dims()[k]` is the rank of `N_{k+2}`, i.e. the free dimensions
    /// after the first `k + 1` tasks.
    pub fn residual_dims(&self) -> &[usize] {
        &self.residual_dims
    }
}

/// Builds the projector chain for a task set.
///
/// Each level removes the directions of the next task that are still free:
/// `N_{k+1} = N_k − (J_k N_k)†(J_k N_k)`. This is the product
/// `N_k (I − J_k† J_k)` whenever the tasks' row spaces are mutually
/// orthogonal, and at every depth it stays an orthogonal projector that
/// annihilates all higher-priority Jacobians. Conflicting (linearly dependent)
/// tasks lose their dependent directions through the truncated inverse.
pub fn projector_chain(tasks: &TaskJacobianSet, rtol: f64) -> Result<ProjectorChain> {
    let n = tasks.dofs();
    let mut projectors = Vec::with_capacity(tasks.len() + 1);
    let mut residual_dims = Vec::with_capacity(tasks.len());
    let mut current = DMatrix::<f64>::identity(n, n);
    projectors.push(current.clone());
    for (k, j) in tasks.jacobians().iter().enumerate() {
        let next = if k == 0 {
            DMatrix::identity(n, n) - right_pseudoinverse(j, rtol)? * j
        } else {
            let jn = j * &current;
            let (pinv, _) = truncated_pseudoinverse(&jn, rtol);
            &current - pinv * jn
        };
        residual_dims.push(projector_rank(&next));
        projectors.push(next.clone());
        current = next;
    }
    Ok(ProjectorChain {
        projectors,
        residual_dims,
    })
}

/// `u = Σ_k N_k u_k` over the first `controls.len()` projectors of the chain.
pub fn compose_flat(controls: &[DVector<f64>], chain: &ProjectorChain) -> Result<DVector<f64>> {
    let projectors = chain.projectors();
    if controls.len() > projectors.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} controls for {} projectors",
            controls.len(),
            projectors.len()
        )));
    }
    let Some(first) = controls.first() else {
        return Err(Error::InvalidArgument("no controls to compose".into()));
    };
    let dim = first.len();
    let mut u = DVector::zeros(dim);
    for (k, (uk, nk)) in controls.iter().zip(projectors).enumerate() {
        if uk.len() != dim || nk.ncols() != dim || nk.nrows() != dim {
            return Err(Error::DimensionMismatch(format!(
                "level {}: control of length {} against {}x{} projector",
                k + 1,
                uk.len(),
                nk.nrows(),
                nk.ncols()
            )));
        }
        u += nk * uk;
    }
    Ok(u)
}

/// `u = u_1 + (I − Λ_1†Λ_1)(u_2 + (I − Λ_2†Λ_2)(u_3 + …))`, evaluated from the
/// innermost task outward. A map with zero rows (inactive task) contributes an
/// identity projector. `input_maps` needs at least `controls.len() − 1`
/// entries; the lowest task's map is never used.
pub fn compose_nested(controls: &[DVector<f64>], input_maps: &[DMatrix<f64>]) -> Result<DVector<f64>> {
    let Some(last) = controls.last() else {
        return Err(Error::InvalidArgument("no controls to compose".into()));
    };
    let k = controls.len();
    if input_maps.len() + 1 < k {
        return Err(Error::DimensionMismatch(format!(
            "{k} controls need at least {} input maps, got {}",
            k - 1,
            input_maps.len()
        )));
    }
    let p = last.len();
    let mut acc = last.clone();
    for level in (0..k - 1).rev() {
        let uk = &controls[level];
        let map = &input_maps[level];
        if uk.len() != p || map.ncols() != p {
            return Err(Error::DimensionMismatch(format!(
                "level {}: control of length {}, map with {} columns, expected {p}",
                level + 1,
                uk.len(),
                map.ncols()
            )));
        }
        let projected = null_space_projector(map, RANK_RTOL)? * acc;
        acc = uk + projected;
    }
    Ok(acc)
}

/// Degrees of freedom used and left over at one level of the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapacityLevel {
    /// 1-based priority level.
    pub level: usize,
    pub consumed_dofs: usize,
    pub remaining_dofs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapacityReport {
    pub levels: Vec<CapacityLevel>,
    /// First level after which no free directions remain, when lower levels
    /// exist that would therefore be projected onto an empty space.
    pub saturated_after: Option<usize>,
}

pub fn capacity_report(tasks: &TaskJacobianSet) -> Result<CapacityReport> {
    let chain = projector_chain(tasks, RANK_RTOL)?;
    let mut previous = tasks.dofs();
    let mut levels = Vec::with_capacity(tasks.len());
    let mut saturated_after = None;
    for (k, &remaining) in chain.residual_dims().iter().enumerate() {
        levels.push(CapacityLevel {
            level: k + 1,
            consumed_dofs: previous.saturating_sub(remaining),
            remaining_dofs: remaining,
        });
        if remaining == 0 && saturated_after.is_none() && k + 1 < tasks.len() {
            saturated_after = Some(k + 1);
        }
        previous = remaining;
    }
    Ok(CapacityReport {
        levels,
        saturated_after,
    })
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
