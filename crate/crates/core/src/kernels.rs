//! Seeded random variates for the Gibbs sweeps.
//!
//! Every generator takes an [`RngStream`], so a chain's draws depend only on
//! `(seed, stream_id)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Below this, a GIG parameter is treated as zero and the Gamma or
/// inverse-Gamma limit is used instead.
pub const GIG_DEGENERATE: f64 = 1e-30;

/// ChaCha8 keyed by the seed, one independent stream per chain.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self { seed, stream_id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on the open interval (0, 1).
    pub fn open01(&mut self) -> f64 {
        loop {
            let u: f64 = self.inner.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn std_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Log of a Gamma(shape, rate) draw. Stays finite for shapes far below the
/// smallest value whose draw is representable.
pub fn draw_log_gamma(rng: &mut RngStream, shape: f64, rate: f64) -> Result<f64> {
    check_positive("gamma shape", shape)?;
    check_positive("gamma rate", rate)?;
    let log_unit = if shape < 1.0 {
        // X ~ Gamma(a + 1), U^(1/a) X ~ Gamma(a)
        marsaglia_tsang(rng, shape + 1.0).ln() + rng.open01().ln() / shape
    } else {
        marsaglia_tsang(rng, shape).ln()
    };
    Ok(log_unit - rate.ln())
}

/// Gamma(shape, rate) with density ∝ x^(shape−1) e^(−rate·x). Draws that
/// underflow are returned as the smallest positive normal double.
pub fn draw_gamma(rng: &mut RngStream, shape: f64, rate: f64) -> Result<f64> {
    let x = draw_log_gamma(rng, shape, rate)?.exp();
    Ok(x.clamp(f64::MIN_POSITIVE, f64::MAX))
}

fn marsaglia_tsang(rng: &mut RngStream, shape: f64) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = rng.std_normal();
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = rng.open01();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

pub fn draw_normal(rng: &mut RngStream, mean: f64, sd: f64) -> Result<f64> {
    if !(sd >= 0.0) || !sd.is_finite() {
        return Err(Error::Domain(format!("normal sd must be finite and >= 0, got {sd}")));
    }
    if sd == 0.0 {
        return Ok(mean);
    }
    Ok(mean + sd * rng.std_normal())
}

/// Cholesky factor of a precision matrix, with one jittered retry.
pub(crate) fn cholesky_with_jitter(precision: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(ch) = precision.clone().cholesky() {
        return Ok(ch);
    }
    let p = precision.nrows();
    let jitter = 1e-10 * precision.trace() / p as f64;
    let mut jittered = precision.clone();
    for k in 0..p {
        jittered[(k, k)] += jitter.abs().max(f64::MIN_POSITIVE);
    }
    jittered.cholesky().ok_or(Error::Factorization)
}

/// Draw from N(P⁻¹b, P⁻¹) using one Cholesky factorization `P = LLᵀ`: the
/// mean solves `Pμ = b` and the noise solves `Lᵀz = ε`.
pub fn draw_mvn_from_precision(rng: &mut RngStream, b: &[f64], precision: &DMatrix<f64>) -> Result<Vec<f64>> {
    let p = b.len();
    if precision.nrows() != p || precision.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: precision.nrows(),
        });
    }
    let ch = cholesky_with_jitter(precision)?;
    let mean = ch.solve(&DVector::from_column_slice(b));
    let eps = DVector::from_iterator(p, (0..p).map(|_| rng.std_normal()));
    let noise = ch
        .l()
        .transpose()
        .solve_upper_triangular(&eps)
        .ok_or(Error::Factorization)?;
    let out: Vec<f64> = (mean + noise).iter().copied().collect();
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Factorization)
    }
}

/// Generalized inverse Gaussian with density ∝ x^(p−1) exp(−(a·x + b/x)/2).
///
/// Ratio-of-uniforms for most of the parameter space, plus the
/// dominating-density rejection sampler for small `√(ab)` and `|p| < 1`
/// (Hörmann and Leydold, 2014). When one of `a`, `b` is below
/// [`GIG_DEGENERATE`] the Gamma (`b → 0`, `p > 0`) or inverse-Gamma
/// (`a → 0`, `p < 0`) limit is drawn.
pub fn draw_gig(rng: &mut RngStream, p: f64, a: f64, b: f64) -> Result<f64> {
    if !p.is_finite() || !(a >= 0.0) || !(b >= 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Domain(format!(
            "GIG parameters must be finite with a, b >= 0; got p={p}, a={a}, b={b}"
        )));
    }
    if b < GIG_DEGENERATE {
        if p > 0.0 && a >= GIG_DEGENERATE {
            return draw_gamma(rng, p, a / 2.0);
        }
        return Err(Error::Domain(format!(
            "GIG with b -> 0 needs p > 0 and a > 0; got p={p}, a={a}"
        )));
    }
    if a < GIG_DEGENERATE {
        if p < 0.0 {
            let g = draw_gamma(rng, -p, b / 2.0)?;
            return Ok((1.0 / g).min(f64::MAX));
        }
        return Err(Error::Domain(format!(
            "GIG with a -> 0 needs p < 0 and b > 0; got p={p}, b={b}"
        )));
    }

    let lambda = p.abs();
    let omega = (a * b).sqrt();
    let alpha = (b / a).sqrt();
    let y = if lambda > 2.0 || omega > 3.0 {
        rou_shifted(rng, lambda, omega)
    } else if lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
        rou_unshifted(rng, lambda, omega)
    } else {
        dominating_density(rng, lambda, omega)
    };
    let x = if p < 0.0 { alpha / y } else { alpha * y };
    Ok(x.clamp(f64::MIN_POSITIVE, f64::MAX))
}

/// Mode of the standardized density y^(λ−1) exp(−ω(y + 1/y)/2).
fn gig_mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        (((lambda - 1.0) * (lambda - 1.0) + omega * omega).sqrt() + (lambda - 1.0)) / omega
    } else {
        omega / (((1.0 - lambda) * (1.0 - lambda) + omega * omega).sqrt() + (1.0 - lambda))
    }
}

fn rou_unshifted(rng: &mut RngStream, lambda: f64, omega: f64) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    let ym = ((lambda + 1.0) + ((lambda + 1.0) * (lambda + 1.0) + omega * omega).sqrt()) / omega;
    let um = (0.5 * (lambda + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - nc).exp();
    loop {
        let u = um * rng.open01();
        let v = rng.open01();
        let x = u / v;
        if v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

fn rou_shifted(rng: &mut RngStream, lambda: f64, omega: f64) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);

    // Roots of the cubic bounding the shifted rectangle, by Cardano.
    let a = -(2.0 * (lambda + 1.0) / omega + xm);
    let b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    let c = xm;
    let p = b - a * a / 3.0;
    let q = (2.0 * a * a * a) / 27.0 - (a * b) / 3.0 + c;
    let fi = (-q / (2.0 * (-(p * p * p) / 27.0).sqrt())).acos();
    let fak = 2.0 * (-p / 3.0).sqrt();
    let y1 = fak * (fi / 3.0).cos() - a / 3.0;
    let y2 = fak * (fi / 3.0 + 4.0 / 3.0 * std::f64::consts::PI).cos() - a / 3.0;

    let uplus = (y1 - xm) * (t * y1.ln() - s * (y1 + 1.0 / y1) - nc).exp();
    let uminus = (y2 - xm) * (t * y2.ln() - s * (y2 + 1.0 / y2) - nc).exp();
    loop {
        let u = uminus + rng.open01() * (uplus - uminus);
        let v = rng.open01();
        let x = u / v + xm;
        if x > 0.0 && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

/// Rejection from a three-piece dominating density; valid for 0 ≤ λ < 1
/// and small ω, where the ratio-of-uniforms rectangle becomes inefficient.
fn dominating_density(rng: &mut RngStream, lambda: f64, omega: f64) -> f64 {
    let xm = gig_mode(lambda, omega);
    let x0 = omega / (1.0 - lambda);
    let k0 = ((lambda - 1.0) * xm.ln() - 0.5 * omega * (xm + 1.0 / xm)).exp();
    let a0 = k0 * x0;
    let (k1, a1, k2, a2);
    if x0 >= 2.0 / omega {
        k1 = 0.0;
        a1 = 0.0;
        k2 = x0.powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega;
    } else {
        k1 = (-omega).exp();
        a1 = if lambda == 0.0 {
            k1 * (2.0 / (omega * omega)).ln()
        } else {
            k1 / lambda * ((2.0 / omega).powf(lambda) - x0.powf(lambda))
        };
        k2 = (2.0 / omega).powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-1.0f64).exp() / omega;
    }
    let total = a0 + a1 + a2;
    loop {
        let mut v = total * rng.open01();
        let (x, hx);
        if v <= a0 {
            x = x0 * v / a0;
            hx = k0;
        } else {
            v -= a0;
            if v <= a1 {
                if lambda == 0.0 {
                    x = omega * (omega.exp() * v).exp();
                    hx = k1 / x;
                } else {
                    x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                    hx = k1 * x.powf(lambda - 1.0);
                }
            } else {
                v -= a1;
                let start = x0.max(2.0 / omega);
                x = -2.0 / omega * ((-omega / 2.0 * start).exp() - omega / (2.0 * k2) * v).ln();
                hx = k2 * (-omega / 2.0 * x).exp();
            }
        }
        if !(x > 0.0) || !x.is_finite() {
            continue;
        }
        let u = rng.open01() * hx;
        if u.ln() <= (lambda - 1.0) * x.ln() - omega / 2.0 * (x + 1.0 / x) {
            return x;
        }
    }
}

/// Index drawn with probability proportional to `exp(log_weights[k])`.
pub fn draw_categorical_log(rng: &mut RngStream, log_weights: &[f64]) -> Result<usize> {
    if log_weights.is_empty() || log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::Domain(
            "categorical log-weights must be non-empty, not NaN and not +inf".into(),
        ));
    }
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Domain("categorical weights are all zero".into()));
    }
    let w: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut target = rng.open01() * total;
    for (k, wk) in w.iter().enumerate() {
        if target < *wk {
            return Ok(k);
        }
        target -= wk;
    }
    // Round-off can leave a sliver past the last bin.
    Ok(w.iter().rposition(|v| *v > 0.0).unwrap_or(0))
}

/// Index drawn with probability proportional to `weights[k]`.
pub fn draw_categorical(rng: &mut RngStream, weights: &[f64]) -> Result<usize> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Domain("categorical weights must be finite and >= 0".into()));
    }
    let logs: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    draw_categorical_log(rng, &logs)
}
