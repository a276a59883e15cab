use nalgebra::DMatrix;

use crate::spectral::ModalData;
use crate::{Error, Result, C64};

/// Eigenvalues below this magnitude make the step coefficient undefined.
const ZERO_EIGENVALUE: f64 = 1e-10;

/// Per-mode residues `r_i = C u_i l_i B` (m × d each).
#[derive(Debug, Clone)]
pub struct ResidueSet {
    pub eigenvalues: Vec<C64>,
    pub residues: Vec<DMatrix<C64>>,
    pub partner: Vec<Option<usize>>,
    /// `C u_i` as columns, m × n.
    pub cu: DMatrix<C64>,
    /// `l_i B` as rows, n × d.
    pub lb: DMatrix<C64>,
}

impl ResidueSet {
    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn outputs(&self) -> usize {
        self.cu.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.lb.ncols()
    }

    /// `k_i = -r_i / λ_i`.
    pub fn step_coefficient(&self, i: usize) -> DMatrix<C64> {
        self.residues[i].map(|r| -r / self.eigenvalues[i])
    }

    /// Final value `Σ k_i = -C A⁻¹ B` of the step response.
    pub fn dc_value(&self) -> DMatrix<f64> {
        let mut acc = DMatrix::<C64>::zeros(self.outputs(), self.inputs());
        for i in 0..self.modes() {
            acc += self.step_coefficient(i);
        }
        acc.map(|v| v.re)
    }

    /// Scalar response of one (output, disturbance) pair with conjugate
    /// modes folded together so that every evaluation is exactly real.
    pub fn pair(&self, output: usize, input: usize) -> PairResponse {
        let mut real = Vec::new();
        let mut complex = Vec::new();
        for i in 0..self.modes() {
            let r = self.residues[i][(output, input)];
            let lambda = self.eigenvalues[i];
            match self.partner[i] {
                None => real.push((lambda.re, r.re)),
                Some(j) if i < j => complex.push((lambda, r)),
                Some(_) => {}
            }
        }
        PairResponse { real, complex }
    }
}

/// `y(t) = Σ k_i (1 - e^{λ_i t})` for a single (output, disturbance) pair.
#[derive(Debug, Clone)]
pub struct PairResponse {
    /// Real modes as `(λ, r)`.
    pub real: Vec<(f64, f64)>,
    /// Upper-half-plane modes as `(λ, r)`; each stands for itself and its conjugate.
    pub complex: Vec<(C64, C64)>,
}

impl PairResponse {
    /// n-th time derivative of the step response at `t`.
    pub fn eval(&self, t: f64, n: u32) -> f64 {
        let mut acc = 0.0;
        for &(l, r) in &self.real {
            acc += real_term(l, r, t, n);
        }
        for &(l, r) in &self.complex {
            acc += 2.0 * complex_term(l, r, t, n).re;
        }
        acc
    }

    /// `Σ |r_i| |λ_i|^{n-1}`, a bound on `|y⁽ⁿ⁾|` used for tolerances.
    pub fn magnitude(&self, n: u32) -> f64 {
        let p = n as i32 - 1;
        let real: f64 = self.real.iter().map(|&(l, r)| r.abs() * l.abs().powi(p)).sum();
        let complex: f64 = self.complex.iter().map(|&(l, r)| 2.0 * r.norm() * l.norm().powi(p)).sum();
        real + complex
    }

    pub fn final_value(&self) -> f64 {
        let real: f64 = self.real.iter().map(|&(l, r)| -r / l).sum();
        let complex: f64 = self.complex.iter().map(|&(l, r)| 2.0 * (-r / l).re).sum();
        real + complex
    }

    pub fn is_zero(&self) -> bool {
        self.real.iter().all(|&(_, r)| r == 0.0) && self.complex.iter().all(|&(_, r)| r == C64::new(0.0, 0.0))
    }

    /// `(y, ẏ)` on the uniform grid `t_k = k·dt`, `k = 0..=steps`.
    pub fn sample_grid(&self, dt: f64, steps: usize) -> (Vec<f64>, Vec<f64>) {
        let mut y = vec![0.0; steps + 1];
        let mut dy = vec![0.0; steps + 1];
        for &(l, r) in &self.real {
            let k = -r / l;
            let step = (l * dt).exp();
            let mut e = 1.0;
            for idx in 0..=steps {
                y[idx] += k * (1.0 - e);
                dy[idx] += r * e;
                e *= step;
            }
        }
        for &(l, r) in &self.complex {
            let k = -r / l;
            let step = (l * dt).exp();
            let mut e = C64::new(1.0, 0.0);
            for idx in 0..=steps {
                y[idx] += 2.0 * (k * (C64::new(1.0, 0.0) - e)).re;
                dy[idx] += 2.0 * (r * e).re;
                // Re-anchor periodically to stop the recurrence drifting.
                e = if idx % 64 == 63 { (l * (dt * (idx + 1) as f64)).exp() } else { e * step };
            }
        }
        (y, dy)
    }
}

fn real_term(l: f64, r: f64, t: f64, n: u32) -> f64 {
    let e = (l * t).exp();
    if n == 0 {
        -r / l * (1.0 - e)
    } else {
        r * l.powi(n as i32 - 1) * e
    }
}

fn complex_term(l: C64, r: C64, t: f64, n: u32) -> C64 {
    let e = (l * t).exp();
    if n == 0 {
        -r / l * (C64::new(1.0, 0.0) - e)
    } else {
        r * l.powi(n as i32 - 1) * e
    }
}

/// Residues of every mode for the input matrix `b` (n × d) and output matrix `c` (m × n).
pub fn residues(modal: &ModalData, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<ResidueSet> {
    for (mode, l) in modal.eigenvalues.iter().enumerate() {
        if l.norm() < ZERO_EIGENVALUE {
            return Err(Error::ZeroEigenvalue { mode, re: l.re, im: l.im });
        }
    }
    let cu = c.map(|v| C64::new(v, 0.0)) * &modal.right;
    let lb = &modal.left * b.map(|v| C64::new(v, 0.0));
    let residues = (0..modal.len()).map(|i| cu.column(i) * lb.row(i)).collect();
    Ok(ResidueSet { eigenvalues: modal.eigenvalues.clone(), residues, partner: modal.partner.clone(), cu, lb })
}

/// n-th derivative of the step response, with `t` holding one time per
/// (output, disturbance) pair.
pub fn step_response(res: &ResidueSet, t: &DMatrix<f64>, n: u32) -> Result<DMatrix<f64>> {
    if t.nrows() != res.outputs() || t.ncols() != res.inputs() {
        return Err(Error::invalid("time matrix", "shape does not match outputs × disturbances"));
    }
    if let Some(&bad) = t.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::NegativeTime(bad));
    }
    let full = step_response_complex(res, t, n);
    Ok(full.map(|v| v.re))
}

/// Unfolded complex sum; its imaginary part vanishes up to rounding.
pub(crate) fn step_response_complex(res: &ResidueSet, t: &DMatrix<f64>, n: u32) -> DMatrix<C64> {
    let (m, d) = (res.outputs(), res.inputs());
    DMatrix::from_fn(m, d, |o, j| {
        let tt = t[(o, j)];
        (0..res.modes()).map(|i| complex_term(res.eigenvalues[i], res.residues[i][(o, j)], tt, n)).sum()
    })
}
