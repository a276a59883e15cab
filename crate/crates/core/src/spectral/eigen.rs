use nalgebra::linalg::Schur;
use nalgebra::DMatrix;

use crate::{Error, Result, C64};

/// Relative eigenvalue separation (w.r.t. `‖A‖_F`) below which two modes
/// are treated as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-8;

const SCHUR_MAX_ITERATIONS: usize = 10_000;

/// Eigenbases worse conditioned than this are treated as defective.
const EIGENBASIS_CONDITION_LIMIT: f64 = 1e12;

/// Full spectrum of a real matrix with biorthonormal eigenvector pairs.
///
/// Column `i` of `right` is `u_i`, row `i` of `left` is `l_i`, and
/// `left * right = I`. Each `u_i` has unit 2-norm and its largest-magnitude
/// entry is real and positive. Complex modes come in adjacent pairs with the
/// positive-imaginary member first and exactly conjugate vectors.
#[derive(Debug, Clone)]
pub struct ModalData {
    pub eigenvalues: Vec<C64>,
    pub right: DMatrix<C64>,
    pub left: DMatrix<C64>,
    /// Index of the complex-conjugate partner, if any.
    pub partner: Vec<Option<usize>>,
    /// `‖A‖_F`, the reference scale for residual and degeneracy checks.
    pub scale: f64,
    /// Mode pairs closer than `DEGENERACY_TOLERANCE · ‖A‖_F`.
    pub degenerate: Vec<(usize, usize)>,
}

impl ModalData {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Indices of modes with strictly positive imaginary part.
    pub fn oscillatory_modes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.eigenvalues[i].im > 0.0).collect()
    }

    pub fn damping_ratio(&self, i: usize) -> Result<f64> {
        super::damping_ratio(self.eigenvalues[i])
    }

    /// Fails when some other mode lies within the degeneracy threshold of mode `i`.
    pub fn check_separated(&self, i: usize) -> Result<()> {
        let limit = DEGENERACY_TOLERANCE * self.scale.max(f64::MIN_POSITIVE);
        let li = self.eigenvalues[i];
        for (j, &lj) in self.eigenvalues.iter().enumerate() {
            if j != i {
                let separation = (li - lj).norm();
                if separation < limit {
                    return Err(Error::DegenerateModes { i, j, separation });
                }
            }
        }
        Ok(())
    }

    pub fn check_all_separated(&self) -> Result<()> {
        match self.degenerate.first() {
            Some(&(i, j)) => {
                Err(Error::DegenerateModes { i, j, separation: (self.eigenvalues[i] - self.eigenvalues[j]).norm() })
            }
            None => Ok(()),
        }
    }
}

/// Block of the real Schur form: a 1×1 block or a 2×2 block at `start`.
#[derive(Debug, Clone, Copy)]
struct Block {
    start: usize,
    size: usize,
}

fn schur_blocks(t: &DMatrix<f64>) -> Vec<Block> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut k = 0;
    while k < n {
        let coupled = k + 1 < n && {
            let sub = t[(k + 1, k)].abs();
            sub > f64::EPSILON * (t[(k, k)].abs() + t[(k + 1, k + 1)].abs()).max(f64::MIN_POSITIVE)
        };
        let size = if coupled { 2 } else { 1 };
        blocks.push(Block { start: k, size });
        k += size;
    }
    blocks
}

/// Eigenvalues of a 2×2 block, positive-imaginary first.
fn block_eigenvalues(a: f64, b: f64, c: f64, d: f64) -> [C64; 2] {
    let half_trace = 0.5 * (a + d);
    let disc = 0.25 * (a - d) * (a - d) + b * c;
    if disc < 0.0 {
        let im = (-disc).sqrt();
        [C64::new(half_trace, im), C64::new(half_trace, -im)]
    } else {
        let root = disc.sqrt();
        // Avoid cancellation in the smaller root.
        let big = half_trace + root.copysign(half_trace);
        let det = a * d - b * c;
        let small = if big != 0.0 { det / big } else { half_trace - root };
        [C64::new(big, 0.0), C64::new(small, 0.0)]
    }
}

fn solve_2x2(m: [[C64; 2]; 2], rhs: [C64; 2], floor: f64) -> [C64; 2] {
    let mut det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.norm() < floor * floor {
        det = C64::new(floor * floor, 0.0);
    }
    [(rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det, (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det]
}

/// Right eigenvector of the quasi-triangular `t` for eigenvalue `lambda`
/// located in block `target`, by block back-substitution.
fn schur_eigenvector(t: &DMatrix<f64>, blocks: &[Block], target: usize, lambda: C64) -> Vec<C64> {
    let n = t.nrows();
    let floor = (f64::EPSILON * t.norm()).max(f64::MIN_POSITIVE);
    let tc = |i: usize, j: usize| C64::new(t[(i, j)], 0.0);
    let mut x = vec![C64::new(0.0, 0.0); n];

    let blk = blocks[target];
    if blk.size == 1 {
        x[blk.start] = C64::new(1.0, 0.0);
    } else {
        let s = blk.start;
        let (a, b, c, d) = (tc(s, s), tc(s, s + 1), tc(s + 1, s), tc(s + 1, s + 1));
        let first = [b, lambda - a];
        let second = [lambda - d, c];
        let pick =
            if first[0].norm() + first[1].norm() >= second[0].norm() + second[1].norm() { first } else { second };
        x[s] = pick[0];
        x[s + 1] = pick[1];
    }
    let end = blk.start + blk.size;

    for bi in (0..target).rev() {
        let b = blocks[bi];
        let mut rhs = [C64::new(0.0, 0.0); 2];
        for (r, slot) in rhs.iter_mut().enumerate().take(b.size) {
            let row = b.start + r;
            let mut acc = C64::new(0.0, 0.0);
            for (j, xj) in x.iter().enumerate().take(end).skip(b.start + b.size) {
                acc += tc(row, j) * xj;
            }
            *slot = -acc;
        }
        if b.size == 1 {
            let mut den = tc(b.start, b.start) - lambda;
            if den.norm() < floor {
                den = C64::new(floor, 0.0);
            }
            x[b.start] = rhs[0] / den;
        } else {
            let s = b.start;
            let m = [[tc(s, s) - lambda, tc(s, s + 1)], [tc(s + 1, s), tc(s + 1, s + 1) - lambda]];
            let sol = solve_2x2(m, rhs, floor);
            x[s] = sol[0];
            x[s + 1] = sol[1];
        }

        // Rescale to keep the back-substitution bounded.
        let big = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if big > 1e100 {
            for v in x.iter_mut() {
                *v /= big;
            }
        }
    }
    x
}

/// Normalises a right eigenvector: unit 2-norm, largest entry real positive.
fn canonicalize(u: &mut [C64]) {
    let (idx, _) =
        u.iter().enumerate().fold((0, -1.0), |best, (i, v)| if v.norm() > best.1 { (i, v.norm()) } else { best });
    let pivot = u[idx];
    if pivot.norm() == 0.0 {
        return;
    }
    let phase = pivot.conj() / pivot.norm();
    let norm = u.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    for v in u.iter_mut() {
        *v = *v * phase / norm;
    }
}

/// Full eigen-decomposition of a real square matrix.
pub fn eigensolve(a: &DMatrix<f64>) -> Result<ModalData> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::invalid("eigenproblem", "matrix is not square"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("eigenproblem", "matrix has non-finite entries"));
    }
    let scale = a.norm();
    if n == 0 {
        return Ok(ModalData {
            eigenvalues: Vec::new(),
            right: DMatrix::zeros(0, 0),
            left: DMatrix::zeros(0, 0),
            partner: Vec::new(),
            scale,
            degenerate: Vec::new(),
        });
    }

    let schur = Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITERATIONS).ok_or(Error::EigenNoConvergence)?;
    let (q, t) = schur.unpack();
    let blocks = schur_blocks(&t);

    let mut eigenvalues = Vec::with_capacity(n);
    let mut partner = Vec::with_capacity(n);
    let mut vectors: Vec<Vec<C64>> = Vec::with_capacity(n);
    let qc = q.map(|v| C64::new(v, 0.0));
    let to_state = |x: Vec<C64>| -> Vec<C64> {
        let xv = nalgebra::DVector::from_vec(x);
        (&qc * xv).iter().copied().collect()
    };

    for (bi, blk) in blocks.iter().enumerate() {
        let s = blk.start;
        if blk.size == 1 {
            let lambda = C64::new(t[(s, s)], 0.0);
            let mut u = to_state(schur_eigenvector(&t, &blocks, bi, lambda));
            canonicalize(&mut u);
            eigenvalues.push(lambda);
            partner.push(None);
            vectors.push(u);
        } else {
            let pair = block_eigenvalues(t[(s, s)], t[(s, s + 1)], t[(s + 1, s)], t[(s + 1, s + 1)]);
            if pair[0].im > 0.0 {
                let mut u = to_state(schur_eigenvector(&t, &blocks, bi, pair[0]));
                canonicalize(&mut u);
                let conj: Vec<C64> = u.iter().map(|v| v.conj()).collect();
                let k = eigenvalues.len();
                eigenvalues.push(pair[0]);
                eigenvalues.push(pair[1]);
                partner.push(Some(k + 1));
                partner.push(Some(k));
                vectors.push(u);
                vectors.push(conj);
            } else {
                for lambda in pair {
                    let mut u = to_state(schur_eigenvector(&t, &blocks, bi, lambda));
                    canonicalize(&mut u);
                    eigenvalues.push(lambda);
                    partner.push(None);
                    vectors.push(u);
                }
            }
        }
    }

    let right = DMatrix::from_fn(n, n, |r, c| vectors[c][r]);
    let mut left = right.clone().lu().try_inverse().ok_or_else(|| closest_pair_error(&eigenvalues))?;

    // Exact conjugate symmetry of the left vectors.
    for i in 0..n {
        if let Some(j) = partner[i] {
            if i < j {
                for c in 0..n {
                    left[(j, c)] = left[(i, c)].conj();
                }
            }
        }
    }

    let residual = (&left * &right - DMatrix::<C64>::identity(n, n)).norm();
    let condition = left.norm() * right.norm() / n as f64;
    if !residual.is_finite() || residual > 1e-6 || condition > EIGENBASIS_CONDITION_LIMIT {
        return Err(closest_pair_error(&eigenvalues));
    }

    let limit = DEGENERACY_TOLERANCE * scale;
    let mut degenerate = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if (eigenvalues[i] - eigenvalues[j]).norm() < limit {
                degenerate.push((i, j));
            }
        }
    }

    Ok(ModalData { eigenvalues, right, left, partner, scale, degenerate })
}

fn closest_pair_error(eigenvalues: &[C64]) -> Error {
    let mut best = (0, 0, f64::INFINITY);
    for i in 0..eigenvalues.len() {
        for j in i + 1..eigenvalues.len() {
            let d = (eigenvalues[i] - eigenvalues[j]).norm();
            if d < best.2 {
                best = (i, j, d);
            }
        }
    }
    Error::DegenerateModes { i: best.0, j: best.1, separation: best.2 }
}
