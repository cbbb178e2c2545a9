//! Dense LQR primitives: spectral radius, Stein equations, the discrete
//! algebraic Riccati equation, exact linear-feedback cost and the
//! P-weighted norms used by the certificate bounds.
//!
//! Everything here is a pure function of its arguments. Matrices are
//! `nalgebra::DMatrix<f64>`; the problems this crate targets are desk-scale
//! (n up to a few dozen), so no attempt is made at structured or sparse
//! algorithms.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Schur, SymmetricEigen, SVD};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative tolerance used when checking symmetry of inputs.
const SYMMETRY_TOL: f64 = 1e-9;
/// Relative singular-value threshold for the controllability rank test.
const RANK_TOL: f64 = 1e-8;
/// Residual contract shared by the Stein and Riccati solvers.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// An LQ cost that is either a finite number or the distinguished
/// "infinite" value of an unstable closed loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cost {
    Finite(f64),
    Infinite,
}

impl Cost {
    pub fn is_finite(&self) -> bool {
        matches!(self, Cost::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Cost::Finite(v) => Some(v),
            Cost::Infinite => None,
        }
    }

    /// Lossy conversion for arithmetic; `Infinite` maps to `f64::INFINITY`.
    pub fn to_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cost::Finite(v) => f.write_str(&fmt_f64(*v)),
            Cost::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Cost {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "inf" {
            return Ok(Cost::Infinite);
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Cost::Finite)
            .ok_or_else(|| Error::Invalid(format!("not a cost value: {s:?}")))
    }
}

/// Formats a float with 17 significant digits, the serialization used in
/// every output file. Infinities become `inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn check_square(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn check_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("{what} has non-finite entries")));
    }
    Ok(())
}

fn check_shape(m: &Matrix, rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::Dimension(format!(
            "{what} must be {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn check_symmetric(m: &Matrix, what: &str) -> Result<()> {
    let scale = 1.0 + m.amax();
    if (m - m.transpose()).amax() > SYMMETRY_TOL * scale {
        return Err(Error::Invalid(format!("{what} is not symmetric")));
    }
    Ok(())
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Induced 2-norm (largest singular value).
pub fn norm2(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    match SVD::try_new(m.clone(), false, false, f64::EPSILON, 0) {
        Some(svd) => svd.singular_values.max(),
        None => {
            // Fall back to the Gram matrix; only loses accuracy for tiny norms.
            let gram = symmetrize(&(m.transpose() * m));
            SymmetricEigen::new(gram).eigenvalues.max().max(0.0).sqrt()
        }
    }
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eigen_range(m: &Matrix) -> (f64, f64) {
    let eig = SymmetricEigen::new(symmetrize(m));
    (eig.eigenvalues.min(), eig.eigenvalues.max())
}

pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    check_square(m, "matrix")?;
    check_finite(m, "matrix")?;
    if m.is_empty() {
        return Ok(0.0);
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 100_000).ok_or(Error::Convergence {
        iterations: 100_000,
        residual: f64::NAN,
    })?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Which fixed point [`solve_stein`] computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteinOrientation {
    /// X = A X Aᵀ + C (state covariance / gramian).
    Forward,
    /// X = Aᵀ X A + C (cost-to-go / Lyapunov certificate).
    Adjoint,
}

/// Residual ‖X − A X Aᵀ − C‖ (or the adjoint form).
pub fn stein_residual(a: &Matrix, x: &Matrix, c: &Matrix, orientation: SteinOrientation) -> f64 {
    let image = match orientation {
        SteinOrientation::Forward => a * x * a.transpose(),
        SteinOrientation::Adjoint => a.transpose() * x * a,
    };
    norm2(&(x - image - c))
}

/// Solves the discrete Stein (Lyapunov) equation for a Schur-stable `a`.
///
/// The series Σ Ãᵗ C (Ãᵗ)ᵀ is summed by squaring (after j rounds the partial
/// sum holds 2ʲ terms and the remaining tail equals Ã_j X Ã_jᵀ with
/// Ã_j = Ã^(2ʲ)), truncated once the geometric tail bound
/// ‖Ã_j‖²‖X_j‖/(1 − ‖Ã_j‖²) drops below machine precision. Plain fixed-point
/// iteration is the fallback when the squaring does not settle.
pub fn solve_stein(a: &Matrix, c: &Matrix, orientation: SteinOrientation) -> Result<Matrix> {
    check_square(a, "A")?;
    check_shape(c, a.nrows(), a.nrows(), "C")?;
    check_finite(c, "C")?;
    check_symmetric(c, "C")?;
    let rho = spectral_radius(a)?;
    if rho >= 1.0 {
        return Err(Error::Instability { rho });
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(c.clone());
    }

    let base = match orientation {
        SteinOrientation::Forward => a.clone(),
        SteinOrientation::Adjoint => a.transpose(),
    };
    let mut x = c.clone();
    let mut power = base.clone();
    let mut settled = false;
    for _ in 0..64 {
        x += &power * &x * power.transpose();
        power = &power * &power;
        if !x.iter().all(|v| v.is_finite()) {
            break;
        }
        let p = norm2(&power);
        let p2 = p * p;
        if p2 < 1.0 && p2 * norm2(&x) / (1.0 - p2) <= f64::EPSILON * (1.0 + norm2(&x)) {
            settled = true;
            break;
        }
    }
    if !settled {
        x = c.clone();
    }
    let max_iter = if settled { 4 } else { 1_000_000 };
    for _ in 0..max_iter {
        let next = &base * &x * base.transpose() + c;
        let step = (&next - &x).amax();
        x = next;
        if !settled && step <= f64::EPSILON * (1.0 + x.amax()) {
            break;
        }
    }
    let x = symmetrize(&x);
    let residual = stein_residual(a, &x, c, orientation);
    if !residual.is_finite() || residual > RESIDUAL_TOL * (1.0 + norm2(&x)) {
        return Err(Error::Convergence {
            iterations: max_iter,
            residual,
        });
    }
    Ok(x)
}

/// Lower-triangular L with L Lᵀ = W.
pub fn cholesky_factor(w: &Matrix) -> Result<Matrix> {
    check_square(w, "W")?;
    check_finite(w, "W")?;
    check_symmetric(w, "W")?;
    Cholesky::new(symmetrize(w))
        .map(|c| c.l())
        .ok_or_else(|| Error::Definiteness("Cholesky factorization failed".into()))
}

/// Any F with F Fᵀ = W for a symmetric positive semidefinite W. Uses the
/// Cholesky factor when W is definite, an eigen square root otherwise.
pub fn psd_factor(w: &Matrix) -> Result<Matrix> {
    if let Ok(l) = cholesky_factor(w) {
        return Ok(l);
    }
    check_square(w, "W")?;
    check_finite(w, "W")?;
    check_symmetric(w, "W")?;
    let eig = SymmetricEigen::new(symmetrize(w));
    let scale = 1.0 + w.amax();
    if eig.eigenvalues.min() < -1e-10 * scale {
        return Err(Error::Definiteness("W has a negative eigenvalue".into()));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * Matrix::from_diagonal(&roots))
}

fn spd_cholesky(p: &Matrix, what: &str) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    check_square(p, what)?;
    check_finite(p, what)?;
    check_symmetric(p, what)?;
    Cholesky::new(symmetrize(p)).ok_or_else(|| Error::Definiteness(format!("{what} is not positive definite")))
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(p: &Matrix) -> Result<Matrix> {
    Ok(symmetrize(&spd_cholesky(p, "P")?.inverse()))
}

/// ‖Q‖_P = λ_max(P^{-1/2} Q P^{-1/2}) for symmetric PSD Q and PD P.
pub fn weighted_matrix_norm(q: &Matrix, p: &Matrix) -> Result<f64> {
    let chol = spd_cholesky(p, "P")?;
    check_shape(q, p.nrows(), p.nrows(), "Q")?;
    check_finite(q, "Q")?;
    if p.is_empty() {
        return Ok(0.0);
    }
    // L⁻¹ Q L⁻ᵀ is congruent-similar to P^{-1/2} Q P^{-1/2}.
    let l = chol.l();
    let left = l
        .solve_lower_triangular(q)
        .ok_or_else(|| Error::Definiteness("singular factor".into()))?;
    let both = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::Definiteness("singular factor".into()))?;
    Ok(sym_eigen_range(&both).1.max(0.0))
}

/// ‖P^{1/2} A P^{-1/2}‖: the operator norm of A on the P inner-product space.
pub fn weighted_operator_norm(a: &Matrix, p: &Matrix) -> Result<f64> {
    check_square(a, "A")?;
    check_shape(p, a.nrows(), a.nrows(), "P")?;
    let gram = symmetrize(&(a.transpose() * p * a));
    Ok(weighted_matrix_norm(&gram, p)?.sqrt())
}

/// Numerical rank of [B, AB, …, A^(n−1)B] (SVD, threshold 1e-8·σ_max).
pub fn controllability_rank(a: &Matrix, b: &Matrix) -> usize {
    let n = a.nrows();
    let m = b.ncols();
    if n == 0 {
        return 0;
    }
    let mut ctrb = Matrix::zeros(n, n * m);
    let mut block = b.clone();
    for i in 0..n {
        ctrb.view_mut((0, i * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    let sv = SVD::new(ctrb, false, false).singular_values;
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// The plant x_{k+1} = A x_k + B u_k + w_k with w_k ~ N(0, W).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant {
    a: Matrix,
    b: Matrix,
    w: Matrix,
}

impl LinearPlant {
    /// Validated constructor: consistent dimensions, W ≻ 0 and (A, B)
    /// controllable.
    pub fn new(a: Matrix, b: Matrix, w: Matrix) -> Result<Self> {
        let plant = Self::unchecked(a, b, w)?;
        cholesky_factor(&plant.w)?;
        let rank = controllability_rank(&plant.a, &plant.b);
        if rank < plant.n() {
            return Err(Error::Uncontrollable { rank, n: plant.n() });
        }
        Ok(plant)
    }

    /// Checks dimensions, finiteness and that W is symmetric PSD, but not
    /// definiteness or controllability. Used for estimated models and for
    /// degenerate test setups such as noiseless plants.
    pub fn unchecked(a: Matrix, b: Matrix, w: Matrix) -> Result<Self> {
        check_square(&a, "A")?;
        let n = a.nrows();
        if n == 0 {
            return Err(Error::Dimension("state dimension must be positive".into()));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "B must be {n}xm with m > 0, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        check_shape(&w, n, n, "W")?;
        check_finite(&a, "A")?;
        check_finite(&b, "B")?;
        psd_factor(&w)?;
        Ok(Self { a, b, w: symmetrize(&w) })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    /// A + B K.
    pub fn closed_loop(&self, k: &Matrix) -> Result<Matrix> {
        check_shape(k, self.m(), self.n(), "K")?;
        Ok(&self.a + &self.b * k)
    }

    pub fn check_gain(&self, k: &Matrix) -> Result<()> {
        check_shape(k, self.m(), self.n(), "K")?;
        check_finite(k, "K")
    }
}

/// Stage-cost weights Q ≻ 0 (state) and R ≻ 0 (input).
#[derive(Debug, Clone, PartialEq)]
pub struct LQWeights {
    q: Matrix,
    r: Matrix,
}

impl LQWeights {
    pub fn new(q: Matrix, r: Matrix) -> Result<Self> {
        spd_cholesky(&q, "Q")?;
        spd_cholesky(&r, "R")?;
        Ok(Self {
            q: symmetrize(&q),
            r: symmetrize(&r),
        })
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    pub fn check_plant(&self, plant: &LinearPlant) -> Result<()> {
        check_shape(&self.q, plant.n(), plant.n(), "Q")?;
        check_shape(&self.r, plant.m(), plant.m(), "R")
    }

    /// xᵀ Q x + uᵀ R u.
    pub fn stage_cost(&self, x: &Vector, u: &Vector) -> f64 {
        x.dot(&(&self.q * x)) + u.dot(&(&self.r * u))
    }

    /// Q + Kᵀ R K, the closed-loop stage weight of u = K x.
    pub fn closed_loop_weight(&self, k: &Matrix) -> Matrix {
        symmetrize(&(&self.q + k.transpose() * &self.r * k))
    }
}

/// Solution of the Riccati equation with the optimal gain and cost.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub p_star: Matrix,
    pub k_star: Matrix,
    /// tr(W P*).
    pub j_star: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct DareOptions {
    /// Relative stopping tolerance on successive iterates.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for DareOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 10_000,
        }
    }
}

/// Right-hand side of the Riccati equation evaluated at `p`.
pub fn riccati_map(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let bt_p = b.transpose() * p;
    let s = symmetrize(&(r + &bt_p * b));
    let chol = Cholesky::new(s).ok_or_else(|| Error::Definiteness("R + BᵀPB".into()))?;
    let bt_p_a = &bt_p * a;
    let correction = bt_p_a.transpose() * chol.solve(&bt_p_a);
    Ok(symmetrize(&(q + a.transpose() * p * a - correction)))
}

/// ‖Q + AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA − P‖.
pub fn dare_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<f64> {
    Ok(norm2(&(riccati_map(a, b, q, r, p)? - p)))
}

/// K = −(R + BᵀPB)⁻¹ BᵀPA.
pub fn riccati_gain(a: &Matrix, b: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let bt_p = b.transpose() * p;
    let s = symmetrize(&(r + &bt_p * b));
    let chol = Cholesky::new(s).ok_or_else(|| Error::Definiteness("R + BᵀPB".into()))?;
    Ok(-chol.solve(&(bt_p * a)))
}

/// Riccati solve on raw matrices (no plant invariants required). Uses the
/// structured doubling iteration, then polishes with a few fixed-point
/// Riccati steps and enforces the residual and stability contracts.
pub fn dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, opts: DareOptions) -> Result<(Matrix, Matrix)> {
    check_square(a, "A")?;
    let n = a.nrows();
    if b.nrows() != n {
        return Err(Error::Dimension("B rows must match A".into()));
    }
    let m = b.ncols();
    check_shape(q, n, n, "Q")?;
    check_shape(r, m, m, "R")?;
    for (mat, what) in [(a, "A"), (b, "B"), (q, "Q"), (r, "R")] {
        check_finite(mat, what)?;
    }
    let r_chol = spd_cholesky(r, "R")?;
    let mut ak = a.clone();
    let mut g = symmetrize(&(b * r_chol.solve(&b.transpose())));
    let mut h = symmetrize(q);
    let eye = Matrix::identity(n, n);
    let mut converged = false;
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..opts.max_iterations {
        iterations = it + 1;
        let lu = (&eye + &g * &h).lu();
        let (wi_a, wi_g) = match (lu.solve(&ak), lu.solve(&g)) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(Error::Stabilizability("singular doubling step".into())),
        };
        let h_next = symmetrize(&(&h + ak.transpose() * &h * &wi_a));
        let g_next = symmetrize(&(&g + &ak * wi_g * ak.transpose()));
        ak = &ak * wi_a;
        if !h_next.iter().chain(g_next.iter()).chain(ak.iter()).all(|v| v.is_finite()) {
            return Err(Error::Stabilizability("Riccati iteration diverged".into()));
        }
        last_step = norm2(&(&h_next - &h));
        h = h_next;
        g = g_next;
        if last_step <= opts.tolerance * (1.0 + norm2(&h)) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence {
            iterations,
            residual: last_step,
        });
    }
    let mut p = h;
    for _ in 0..3 {
        p = riccati_map(a, b, q, r, &p)?;
    }
    let residual = dare_residual(a, b, q, r, &p)?;
    if !residual.is_finite() || residual > RESIDUAL_TOL * (1.0 + norm2(&p)) {
        return Err(Error::Convergence { iterations, residual });
    }
    let k = riccati_gain(a, b, r, &p)?;
    let rho = spectral_radius(&(a + b * &k))?;
    if rho >= 1.0 {
        return Err(Error::Stabilizability(format!(
            "Riccati gain leaves spectral radius {rho:.6}"
        )));
    }
    Ok((p, k))
}

pub fn dare_solve(plant: &LinearPlant, weights: &LQWeights) -> Result<RiccatiSolution> {
    dare_solve_with(plant, weights, DareOptions::default())
}

pub fn dare_solve_with(plant: &LinearPlant, weights: &LQWeights, opts: DareOptions) -> Result<RiccatiSolution> {
    weights.check_plant(plant)?;
    let (p, k) = dare(plant.a(), plant.b(), weights.q(), weights.r(), opts)?;
    let residual = dare_residual(plant.a(), plant.b(), weights.q(), weights.r(), &p)?;
    let j_star = (plant.w() * &p).trace();
    Ok(RiccatiSolution {
        p_star: p,
        k_star: k,
        j_star,
        residual,
    })
}

/// Exact average cost tr(W P_K) of u = K x, or `Infinite` when A + BK is
/// not Schur stable.
pub fn linear_feedback_cost(plant: &LinearPlant, weights: &LQWeights, k: &Matrix) -> Result<Cost> {
    weights.check_plant(plant)?;
    plant.check_gain(k)?;
    let acl = plant.closed_loop(k)?;
    if spectral_radius(&acl)? >= 1.0 {
        return Ok(Cost::Infinite);
    }
    let weight = weights.closed_loop_weight(k);
    match solve_stein(&acl, &weight, SteinOrientation::Adjoint) {
        Ok(pk) => Ok(Cost::Finite((plant.w() * pk).trace())),
        Err(Error::Instability { .. }) => Ok(Cost::Infinite),
        Err(e) => Err(e),
    }
}
