//! Lyapunov certificates for the fallback and primary loops, and the
//! closed-form bounds of the switched controller: bounded cost under any
//! primary gain, fourth-moment and fallback-probability bounds, and the
//! optimality-gap bound with its decay constant.
//!
//! Certificates are built deterministically. For a closed loop A_cl with
//! spectral radius r the default contraction rate is ρ = (1 + r²)/2 and P
//! solves (A_cl/√ρ)ᵀ P (A_cl/√ρ) + I = P, so A_clᵀ P A_cl = ρ(P − I) ≺ ρP.
//! All margins are measured as ρ − λ_max(P^{-1/2} A_clᵀ P A_cl P^{-1/2}) and
//! must be at least [`CERT_MARGIN`].

use nalgebra::SymmetricEigen;

use crate::control::{
    norm2, solve_stein, spd_inverse, spectral_radius, symmetrize, weighted_matrix_norm, weighted_operator_norm,
    LQWeights, LinearPlant, Matrix, SteinOrientation,
};
use crate::error::{Error, Result};

/// Minimum slack required of every certificate inequality.
pub const CERT_MARGIN: f64 = 1e-8;
/// Search limit for the minimal dwell time.
pub const MAX_DWELL: usize = 1_000_000;

/// (P₀, ρ₀) with (A+BK₀)ᵀ P₀ (A+BK₀) ≺ ρ₀ P₀.
#[derive(Debug, Clone, PartialEq)]
pub struct FallbackCertificate {
    pub p0: Matrix,
    pub rho0: f64,
}

/// (P, ρ, t_min): common quadratic Lyapunov function for A+BK₁ and
/// (A+BK₀)^t at t = t_min, the smallest dwell time that works for (P, ρ).
#[derive(Debug, Clone, PartialEq)]
pub struct CommonLyapunovCertificate {
    pub p: Matrix,
    pub rho: f64,
    pub t_min: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateCheck {
    pub passed: bool,
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommonCertificateCheck {
    pub passed: bool,
    pub primary_margin: f64,
    pub dwell_margin: f64,
    /// Margin at t_min − 1 (`None` when t_min = 1).
    pub previous_dwell_margin: Option<f64>,
    /// True iff the dwell inequality fails at t_min − 1.
    pub minimal: bool,
}

fn check_rho(rho: f64, what: &str) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Domain(format!("{what} must lie in (0, 1), got {rho}")));
    }
    Ok(())
}

/// λ_max(P^{-1/2} Aᵀ P A P^{-1/2}) with P^{-1/2} from an eigendecomposition.
/// Kept separate from the Cholesky route used during construction so that
/// certificate checks are independent of it.
pub fn contraction_ratio(a: &Matrix, p: &Matrix) -> Result<f64> {
    if p.shape() != a.shape() || !a.is_square() {
        return Err(Error::Dimension("A and P must be square and of equal size".into()));
    }
    let eig = SymmetricEigen::new(symmetrize(p));
    if eig.eigenvalues.min() <= 0.0 {
        return Err(Error::Definiteness("certificate matrix is not positive definite".into()));
    }
    let inv_sqrt = &eig.eigenvectors
        * Matrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * eig.eigenvectors.transpose();
    let m = symmetrize(&(&inv_sqrt * a.transpose() * p * a * &inv_sqrt));
    Ok(SymmetricEigen::new(m).eigenvalues.max())
}

fn scaled_lyapunov(acl: &Matrix, rho: f64) -> Result<Matrix> {
    let n = acl.nrows();
    solve_stein(&(acl / rho.sqrt()), &Matrix::identity(n, n), SteinOrientation::Adjoint)
}

fn default_rho(radius: f64) -> f64 {
    (1.0 + radius * radius) / 2.0
}

fn resolve_rho(radius: f64, rho: Option<f64>) -> Result<f64> {
    let rho = rho.unwrap_or_else(|| default_rho(radius));
    let floor = radius * radius;
    if rho.is_nan() || rho <= floor || rho >= 1.0 || rho <= 0.0 {
        return Err(Error::InfeasibleRho { rho, floor });
    }
    Ok(rho)
}

fn stable_closed_loop(plant: &LinearPlant, k: &Matrix) -> Result<(Matrix, f64)> {
    plant.check_gain(k)?;
    let acl = plant.closed_loop(k)?;
    let rho = spectral_radius(&acl)?;
    if rho >= 1.0 {
        return Err(Error::NotStabilizing { rho });
    }
    Ok((acl, rho))
}

pub fn build_fallback_certificate(plant: &LinearPlant, k0: &Matrix, rho0: Option<f64>) -> Result<FallbackCertificate> {
    let (a0, radius) = stable_closed_loop(plant, k0)?;
    let rho0 = resolve_rho(radius, rho0)?;
    let p0 = scaled_lyapunov(&a0, rho0)?;
    let margin = rho0 - weighted_matrix_norm(&symmetrize(&(a0.transpose() * &p0 * &a0)), &p0)?;
    if margin < CERT_MARGIN {
        return Err(Error::Certificate { margin });
    }
    Ok(FallbackCertificate { p0, rho0 })
}

pub fn check_fallback_certificate(
    plant: &LinearPlant,
    k0: &Matrix,
    cert: &FallbackCertificate,
) -> Result<CertificateCheck> {
    plant.check_gain(k0)?;
    let a0 = plant.closed_loop(k0)?;
    let margin = cert.rho0 - contraction_ratio(&a0, &cert.p0)?;
    let passed = cert.rho0 > 0.0 && cert.rho0 < 1.0 && margin >= CERT_MARGIN;
    Ok(CertificateCheck { passed, margin })
}

/// ρ − λ_max(P^{-1/2} (A₀ᵗ)ᵀ P A₀ᵗ P^{-1/2}) via the Cholesky route.
pub fn dwell_margin(a0: &Matrix, p: &Matrix, rho: f64, t: usize) -> Result<f64> {
    let power = a0.pow(t as u32);
    Ok(rho - weighted_matrix_norm(&symmetrize(&(power.transpose() * p * &power)), p)?)
}

/// Smallest t ≥ 1 with (A₀ᵗ)ᵀ P A₀ᵗ ≺ ρP (margin [`CERT_MARGIN`]).
pub fn min_dwell_time(a0: &Matrix, p: &Matrix, rho: f64) -> Result<usize> {
    check_rho(rho, "rho")?;
    let mut power = a0.clone();
    for t in 1..=MAX_DWELL {
        let margin = rho - weighted_matrix_norm(&symmetrize(&(power.transpose() * p * &power)), p)?;
        if margin >= CERT_MARGIN {
            return Ok(t);
        }
        power = &power * a0;
    }
    Err(Error::Convergence {
        iterations: MAX_DWELL,
        residual: f64::NAN,
    })
}

pub fn build_common_certificate(
    plant: &LinearPlant,
    k0: &Matrix,
    k1: &Matrix,
    rho: Option<f64>,
) -> Result<CommonLyapunovCertificate> {
    let (a1, r1) = stable_closed_loop(plant, k1)?;
    stable_closed_loop(plant, k0)?;
    let rho = resolve_rho(r1, rho)?;
    let p = scaled_lyapunov(&a1, rho)?;
    common_certificate_from(plant, k0, k1, p, rho)
}

/// Completes a user-supplied (P, ρ) into a certificate by finding t_min.
pub fn common_certificate_from(
    plant: &LinearPlant,
    k0: &Matrix,
    k1: &Matrix,
    p: Matrix,
    rho: f64,
) -> Result<CommonLyapunovCertificate> {
    check_rho(rho, "rho")?;
    let (a0, _) = stable_closed_loop(plant, k0)?;
    plant.check_gain(k1)?;
    let a1 = plant.closed_loop(k1)?;
    let margin = rho - weighted_matrix_norm(&symmetrize(&(a1.transpose() * &p * &a1)), &p)?;
    if margin < CERT_MARGIN {
        return Err(Error::Certificate { margin });
    }
    let t_min = min_dwell_time(&a0, &p, rho)?;
    Ok(CommonLyapunovCertificate { p, rho, t_min })
}

pub fn check_common_certificate(
    plant: &LinearPlant,
    k0: &Matrix,
    k1: &Matrix,
    cert: &CommonLyapunovCertificate,
) -> Result<CommonCertificateCheck> {
    plant.check_gain(k0)?;
    plant.check_gain(k1)?;
    let a0 = plant.closed_loop(k0)?;
    let a1 = plant.closed_loop(k1)?;
    let primary_margin = cert.rho - contraction_ratio(&a1, &cert.p)?;
    let margin_at = |t: usize| -> Result<f64> {
        Ok(cert.rho - contraction_ratio(&a0.pow(t as u32), &cert.p)?)
    };
    let dwell = margin_at(cert.t_min.max(1))?;
    let previous = if cert.t_min > 1 { Some(margin_at(cert.t_min - 1)?) } else { None };
    let minimal = cert.t_min >= 1 && previous.is_none_or(|m| m < CERT_MARGIN);
    let passed = cert.rho > 0.0
        && cert.rho < 1.0
        && cert.t_min >= 1
        && primary_margin >= CERT_MARGIN
        && dwell >= CERT_MARGIN;
    Ok(CommonCertificateCheck {
        passed,
        primary_margin,
        dwell_margin: dwell,
        previous_dwell_margin: previous,
        minimal,
    })
}

/// W̃ = Σ_τ (A+BK₀)^τ W ((A+BK₀)^τ)ᵀ.
pub fn process_gramian(plant: &LinearPlant, k0: &Matrix) -> Result<Matrix> {
    plant.check_gain(k0)?;
    solve_stein(&plant.closed_loop(k0)?, plant.w(), SteinOrientation::Forward)
}

/// ‖W̃‖‖P‖‖P⁻¹‖, the scale shared by the threshold floor and tail bound.
fn tail_scale(w_tilde: &Matrix, p: &Matrix) -> Result<f64> {
    let p_inv = spd_inverse(p)?;
    Ok(norm2(w_tilde) * norm2(p) * norm2(&p_inv))
}

/// M₀ = √(3‖W̃‖‖P‖‖P⁻¹‖)/(1 − ρ^{1/4}).
pub fn threshold_floor(w_tilde: &Matrix, p: &Matrix, rho: f64) -> Result<f64> {
    check_rho(rho, "rho")?;
    Ok((3.0 * tail_scale(w_tilde, p)?).sqrt() / (1.0 - rho.powf(0.25)))
}

/// 𝒜 = max{‖A+BK₀‖, ‖A+BK₁‖}.
pub fn script_a(plant: &LinearPlant, k0: &Matrix, k1: &Matrix) -> Result<f64> {
    plant.check_gain(k0)?;
    plant.check_gain(k1)?;
    Ok(norm2(&plant.closed_loop(k0)?).max(norm2(&plant.closed_loop(k1)?)))
}

/// Bound on E[x_kᵀ P₀ x_k]: (M²𝒜²‖P₀‖ + tr(W P₀))/(1 − ρ₀).
pub fn lemma1_bound(threshold: f64, script_a: f64, p0: &Matrix, rho0: f64, w: &Matrix) -> Result<f64> {
    check_rho(rho0, "rho0")?;
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::Domain(format!("threshold must be positive and finite, got {threshold}")));
    }
    if p0.shape() != w.shape() {
        return Err(Error::Dimension("P0 and W must have equal size".into()));
    }
    let m2 = threshold * threshold;
    Ok((m2 * script_a * script_a * norm2(p0) + (w * p0).trace()) / (1.0 - rho0))
}

/// Q₀₁ = Q + K₀ᵀRK₀ + K₁ᵀRK₁.
pub fn combined_weight(weights: &LQWeights, k0: &Matrix, k1: &Matrix) -> Matrix {
    let r = weights.r();
    symmetrize(&(weights.q() + k0.transpose() * r * k0 + k1.transpose() * r * k1))
}

/// Upper bound on the cost of the switched controller, valid for any K₁.
pub fn bounded_cost_bound(
    plant: &LinearPlant,
    weights: &LQWeights,
    k0: &Matrix,
    k1: &Matrix,
    threshold: f64,
    cert: &FallbackCertificate,
) -> Result<f64> {
    weights.check_plant(plant)?;
    let check = check_fallback_certificate(plant, k0, cert)?;
    if !check.passed {
        return Err(Error::Certificate { margin: check.margin });
    }
    let a = script_a(plant, k0, k1)?;
    let q01 = combined_weight(weights, k0, k1);
    Ok(lemma1_bound(threshold, a, &cert.p0, cert.rho0, plant.w())? * weighted_matrix_norm(&q01, &cert.p0)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourthMomentBound {
    /// 𝒬.
    pub script_q: f64,
    /// Bound on E‖x_k‖⁴_{P₀}.
    pub bound: f64,
}

/// ‖Q‖_{W̃⁻¹} = ‖W̃^{1/2} Q W̃^{1/2}‖.
fn inverse_weighted(q: &Matrix, w_tilde: &Matrix) -> Result<f64> {
    weighted_matrix_norm(q, &spd_inverse(w_tilde)?)
}

pub fn fourth_moment_bound(
    n: usize,
    p: &Matrix,
    rho: f64,
    p0: &Matrix,
    w_tilde: &Matrix,
) -> Result<FourthMomentBound> {
    check_rho(rho, "rho")?;
    let nn = (n * n + 2 * n) as f64;
    let tr = (w_tilde * p).trace();
    let p_w = inverse_weighted(p, w_tilde)?;
    let p0_w = inverse_weighted(p0, w_tilde)?;
    let p0_p = weighted_matrix_norm(p0, p)?;
    // (tr(W̃P))² is read as the square of the trace
    let script_q = (6.0 * rho * tr * tr + (1.0 - rho) * nn * p_w * p_w) / ((1.0 - rho) * (1.0 - rho * rho));
    let bound = 8.0 * (script_q * p0_p * p0_p + nn * p0_w * p0_w);
    Ok(FourthMomentBound { script_q, bound })
}

/// Coefficient of M² in the exponent of E(M).
pub fn tail_exponent(rho: f64, p: &Matrix, w_tilde: &Matrix) -> Result<f64> {
    check_rho(rho, "rho")?;
    let s = 1.0 - rho.powf(0.25);
    Ok(s * s / (4.0 * tail_scale(w_tilde, p)?))
}

/// E(M) = 2^{n/2+1}/(ρ^{-1/2} − 1) · exp(−(1−ρ^{1/4})² M² / (4‖W̃‖‖P‖‖P⁻¹‖)).
pub fn tail_factor(threshold: f64, n: usize, p: &Matrix, rho: f64, w_tilde: &Matrix) -> Result<f64> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::Domain(format!("threshold must be >= 0, got {threshold}")));
    }
    let coef = tail_exponent(rho, p, w_tilde)?;
    let prefactor = 2f64.powf(n as f64 / 2.0 + 1.0) / (rho.powf(-0.5) - 1.0);
    Ok(prefactor * (-coef * threshold * threshold).exp())
}

/// t·E(M), the bound on P(u_k ≠ K₁x_k). Not clipped to 1.
pub fn tail_bound(threshold: f64, dwell: usize, n: usize, p: &Matrix, rho: f64, w_tilde: &Matrix) -> Result<f64> {
    if dwell == 0 {
        return Err(Error::Domain("dwell time must be at least 1".into()));
    }
    Ok(dwell as f64 * tail_factor(threshold, n, p, rho, w_tilde)?)
}

/// c = (1−ρ^{1/4})²/(16‖W̃‖‖P‖‖P⁻¹‖), the rate in O(t^{1/4} exp(−cM²)).
pub fn decay_constant(rho: f64, p: &Matrix, w_tilde: &Matrix) -> Result<f64> {
    Ok(tail_exponent(rho, p, w_tilde)? / 4.0)
}

/// Rigorous upper bound on Σ_{s≥0} ‖A₁ˢ‖_{Q₁}.
///
/// Terms are summed until one drops below 1e-12. With s₀ the first index
/// where ‖A₁^{s₀}‖_{Q₁} = q < 1, submultiplicativity bounds the remaining
/// tail from index S by (Σ_{r<s₀} ‖A₁^{S+r}‖_{Q₁})/(1 − q).
pub fn weighted_power_series(a1: &Matrix, q1: &Matrix) -> Result<f64> {
    const TERM_TOL: f64 = 1e-12;
    const MAX_TERMS: usize = 10_000_000;
    let n = a1.nrows();
    let mut power = Matrix::identity(n, n);
    let mut terms: Vec<f64> = Vec::new();
    let mut s0: Option<usize> = None;
    let mut stop: Option<usize> = None;
    for s in 0..MAX_TERMS {
        let term = weighted_operator_norm(&power, q1)?;
        if !term.is_finite() {
            return Err(Error::Instability { rho: f64::NAN });
        }
        terms.push(term);
        if s >= 1 && s0.is_none() && term < 1.0 {
            s0 = Some(s);
        }
        if s >= 1 && stop.is_none() && term < TERM_TOL {
            stop = Some(s);
        }
        if let (Some(s0), Some(stop)) = (s0, stop) {
            if terms.len() >= stop + s0 {
                let head: f64 = terms[..stop].iter().sum();
                let q = terms[s0];
                let window: f64 = terms[stop..stop + s0].iter().sum();
                return Ok(head + window / (1.0 - q));
            }
        }
        power = &power * a1;
    }
    Err(Error::Convergence {
        iterations: MAX_TERMS,
        residual: terms.last().copied().unwrap_or(f64::NAN),
    })
}

/// Every intermediate quantity of the gap bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchAnalysis {
    pub w_tilde: Matrix,
    pub m0: f64,
    pub script_a: f64,
    pub q01: Matrix,
    pub q1: Matrix,
    pub a1: Matrix,
    pub delta1: Matrix,
    pub delta2: Matrix,
    pub script_q: f64,
    pub fourth_moment: f64,
    pub c1: f64,
    pub c2: f64,
    /// C₂ with ‖Δ₁‖_{Q₁} in place of ‖Δ₁‖, reported for comparison.
    pub c2_weighted: f64,
    pub c3: f64,
    pub c4: f64,
    /// Σ ‖A₁ˢ‖_{Q₁} (upper bound).
    pub power_series: f64,
    pub tail_factor: f64,
    /// 𝒢 = C₄ (t E(M))^{1/4}.
    pub g: f64,
    pub decay_c: f64,
    pub threshold: f64,
    pub dwell: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapBound {
    pub bound: f64,
    pub analysis: SwitchAnalysis,
}

/// Upper bound on J^{K₁,M,t} − J^{K₁}. Refuses (precondition error) when
/// M < M₀ or the dwell inequality does not hold at `dwell`.
#[allow(clippy::too_many_arguments)]
pub fn gap_bound(
    plant: &LinearPlant,
    weights: &LQWeights,
    k0: &Matrix,
    k1: &Matrix,
    threshold: f64,
    dwell: usize,
    cert0: &FallbackCertificate,
    cert: &CommonLyapunovCertificate,
) -> Result<GapBound> {
    weights.check_plant(plant)?;
    let check0 = check_fallback_certificate(plant, k0, cert0)?;
    if !check0.passed {
        return Err(Error::Certificate { margin: check0.margin });
    }
    let check = check_common_certificate(plant, k0, k1, cert)?;
    if !check.passed {
        return Err(Error::Certificate {
            margin: check.primary_margin.min(check.dwell_margin),
        });
    }
    if dwell < cert.t_min {
        return Err(Error::Precondition(format!(
            "dwell time {dwell} below t_min = {}",
            cert.t_min
        )));
    }
    let a0 = plant.closed_loop(k0)?;
    let margin = dwell_margin(&a0, &cert.p, cert.rho, dwell)?;
    if margin < CERT_MARGIN {
        return Err(Error::Precondition(format!(
            "dwell inequality fails at t = {dwell} (margin {margin:.3e})"
        )));
    }
    let n = plant.n();
    let w_tilde = process_gramian(plant, k0)?;
    let m0 = threshold_floor(&w_tilde, &cert.p, cert.rho)?;
    if threshold.is_nan() || threshold < m0 {
        return Err(Error::Precondition(format!("threshold {threshold} below M0 = {m0}")));
    }

    let r = weights.r();
    let a1 = plant.closed_loop(k1)?;
    let q1 = weights.closed_loop_weight(k1);
    let q01 = combined_weight(weights, k0, k1);
    let delta1 = plant.b() * (k0 - k1);
    let delta2 = symmetrize(&(k0.transpose() * r * k0 - k1.transpose() * r * k1));

    let fm = fourth_moment_bound(n, &cert.p, cert.rho, &cert0.p0, &w_tilde)?;
    let c1 = ((plant.w() * &cert.p).trace() * weighted_matrix_norm(&q1, &cert.p)? / (1.0 - cert.rho)).sqrt();
    let power_series = weighted_power_series(&a1, &q1)?;
    let q1_p0 = weighted_matrix_norm(&q1, &cert0.p0)?;
    let c2 = norm2(&delta1) * q1_p0 * power_series;
    let c2_weighted = weighted_operator_norm(&delta1, &q1)? * q1_p0 * power_series;
    let c3 = norm2(&delta2) * norm2(&spd_inverse(&cert0.p0)?);
    let c4 = 2f64.powf(0.75) * (fm.bound / 8.0).powf(0.25);
    let tail = tail_factor(threshold, n, &cert.p, cert.rho, &w_tilde)?;
    let g = c4 * (dwell as f64 * tail).powf(0.25);
    let bound = 2.0 * c1 * c2 * g + (c2 * c2 + c3) * g * g;

    let analysis = SwitchAnalysis {
        m0,
        script_a: script_a(plant, k0, k1)?,
        decay_c: decay_constant(cert.rho, &cert.p, &w_tilde)?,
        w_tilde,
        q01,
        q1,
        a1,
        delta1,
        delta2,
        script_q: fm.script_q,
        fourth_moment: fm.bound,
        c1,
        c2,
        c2_weighted,
        c3,
        c4,
        power_series,
        tail_factor: tail,
        g,
        threshold,
        dwell,
    };
    Ok(GapBound { bound, analysis })
}
