//! Optimal bumping thresholds under the Poisson model.
//!
//! A bin receives Poisson(γk) keys with uniform fingerprints; its (k+1)-th
//! smallest fingerprint x_{k+1} is Gamma(k+1, γk). The bin keeps every key at
//! or below the largest threshold T_i < x_{k+1}. The thresholds minimizing
//! the expected number of empty slots satisfy
//!
//!   T_{i−1} = T_i − (T_i/φ(T_i)) ∫_{T_i}^{T_{i+1}} φ(s)/s ds,
//!
//! and since φ_{k+1}(s)/s = γ·φ_k(s) this collapses to
//! T_{i−1} = T_i − (F_k(T_{i+1}) − F_k(T_i)) / φ_k(T_i).
//! We fix T_t = 1 and bisect on T_{t−1} until T_1 lands in [0, tol].

pub mod gamma;
pub mod quad;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use gamma::GammaDensity;

pub const DEFAULT_T1_TOLERANCE: f64 = 1e-9;
const MAX_BISECTIONS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdVector {
    pub k: u32,
    pub gamma: f64,
    /// Strictly increasing, first 0, last 1.
    pub thresholds: Vec<f64>,
}

impl ThresholdVector {
    pub fn t(&self) -> usize {
        self.thresholds.len()
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.thresholds[i]
    }

    /// Index of the largest threshold strictly below x (x = ∞ allowed).
    #[inline]
    pub fn largest_below(&self, x: f64) -> usize {
        self.thresholds.partition_point(|&t| t < x) - 1
    }

    pub fn is_valid(&self) -> bool {
        let t = &self.thresholds;
        t.len() >= 2 && t[0] == 0.0 && *t.last().unwrap() == 1.0 && t.windows(2).all(|w| w[0] < w[1])
    }
}

/// Density of x_{k+1}: Gamma(shape k+1, rate γk).
pub fn order_stat_density(k: u32, gamma: f64) -> GammaDensity {
    GammaDensity::new(k as f64 + 1.0, gamma * k as f64)
}

fn check_args(k: u32, gamma: f64, t: usize) -> Result<()> {
    if k == 0 || gamma.is_nan() || gamma <= 1.0 || t < 2 {
        return Err(Error::InvalidInput(format!("thresholds need k ≥ 1, γ > 1, t ≥ 2 (got k={k}, γ={gamma}, t={t})")));
    }
    Ok(())
}

/// Runs the recurrence down from (1, candidate); returns T (T[0] possibly
/// negative) or None if it dropped below zero before reaching index 0.
///
/// Narrow steps integrate ∫_a^b φ_k(s)/φ_k(a) ds directly: its log-integrand
/// (k−1)·ln(s/a) − r·(s−a) has no large cancelling terms, whereas differencing
/// two CDF values near the mean loses about eight digits at k = 1000, which
/// the bisection would see as noise. Wide steps use the CDF route.
fn descend(phi_k: &GammaDensity, t: usize, candidate: f64) -> Option<Vec<f64>> {
    let km1 = phi_k.shape - 1.0;
    let rate = phi_k.rate;
    let mut th = vec![0.0; t];
    th[t - 1] = 1.0;
    th[t - 2] = candidate;
    for i in (1..t - 1).rev() {
        let (a, b) = (th[i], th[i + 1]);
        let log_ratio = |s: f64| km1 * (s / a).ln() - rate * (s - a);
        let mode = (km1 / rate).clamp(a, b);
        if log_ratio(mode).max(log_ratio(b)) > 600.0 {
            // the step dwarfs a: candidate far too small
            return None;
        }
        let step = if (b - a) * rate.max(1.0) < 4.0 * phi_k.shape.sqrt() && b - a < 0.25 * a {
            quad::integrate_relative(|s| log_ratio(s).exp(), a, b, 1e-13)
        } else {
            (phi_k.ln_mass(a, b) - phi_k.ln_pdf(a)).exp()
        };
        let next = a - step;
        if next < 0.0 && i > 1 {
            return None;
        }
        th[i - 1] = next;
    }
    Some(th)
}

pub fn optimal_thresholds(k: u32, gamma: f64, t: usize) -> Result<ThresholdVector> {
    optimal_thresholds_with_tolerance(k, gamma, t, DEFAULT_T1_TOLERANCE)
}

pub fn optimal_thresholds_with_tolerance(k: u32, gamma: f64, t: usize, tol: f64) -> Result<ThresholdVector> {
    check_args(k, gamma, t)?;
    if t == 2 {
        return Ok(ThresholdVector { k, gamma, thresholds: vec![0.0, 1.0] });
    }
    let phi_k = GammaDensity::new(k as f64, gamma * k as f64);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut closest = f64::INFINITY;
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match descend(&phi_k, t, mid) {
            Some(th) if th[0] >= 0.0 && th[0] <= tol => {
                let mut thresholds = th;
                thresholds[0] = 0.0;
                let tv = ThresholdVector { k, gamma, thresholds };
                if !tv.is_valid() {
                    return Err(Error::Numeric(format!("threshold vector for k={k}, γ={gamma}, t={t} not increasing")));
                }
                return Ok(tv);
            }
            Some(th) if th[0] > 0.0 => {
                closest = closest.min(th[0]);
                hi = mid;
            }
            _ => lo = mid,
        }
    }
    Err(Error::Numeric(format!(
        "threshold bisection for k={k}, γ={gamma}, t={t} did not reach T_1 ≤ {tol:e}; \
         bracket [{lo}, {hi}], smallest positive T_1 {closest:e}"
    )))
}

/// Process-wide cache; vectors are identical across layers and builds.
pub fn cached_optimal_thresholds(k: u32, gamma: f64, t: usize) -> Result<Arc<ThresholdVector>> {
    static CACHE: OnceLock<Mutex<HashMap<(u32, u64, usize), Arc<ThresholdVector>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (k, gamma.to_bits(), t);
    if let Some(tv) = cache.lock().unwrap().get(&key) {
        return Ok(tv.clone());
    }
    let tv = Arc::new(optimal_thresholds(k, gamma, t)?);
    cache.lock().unwrap().insert(key, tv.clone());
    Ok(tv)
}

/// E[empty slots] = Σ_i ∫_{T_i}^{T_{i+1}} k (s − T_i)/s φ(s) ds with T_{t+1} = ∞,
/// by adaptive quadrature.
pub fn expected_empty_slots(tv: &ThresholdVector) -> f64 {
    let phi = order_stat_density(tv.k, tv.gamma);
    let k = tv.k as f64;
    let tail_end = (phi.mean() + 40.0 * phi.std_dev()).max(2.0);
    let th = &tv.thresholds;
    let mut total = 0.0;
    for i in 0..th.len() {
        let lo = th[i];
        let hi = th.get(i + 1).copied().unwrap_or(tail_end);
        total += quad::integrate(
            |s| {
                if s <= 0.0 {
                    0.0
                } else {
                    k * (s - lo) / s * phi.pdf(s)
                }
            },
            lo,
            hi,
            1e-11,
        );
    }
    total
}

/// Same quantity from gamma-CDF differences (no quadrature).
pub fn expected_empty_slots_closed_form(tv: &ThresholdVector) -> f64 {
    let phi = order_stat_density(tv.k, tv.gamma);
    let phi_k = GammaDensity::new(tv.k as f64, tv.gamma * tv.k as f64);
    let k = tv.k as f64;
    let th = &tv.thresholds;
    let mut total = 0.0;
    for i in 0..th.len() {
        let lo = th[i];
        let hi = th.get(i + 1).copied().unwrap_or(f64::INFINITY);
        total += k * (phi.mass(lo, hi) - lo * tv.gamma * phi_k.mass(lo, hi));
    }
    total
}

/// Residuals of the optimality recurrence for interior thresholds, with the
/// integral evaluated by quadrature (independent of the CDF route).
pub fn recurrence_residuals(tv: &ThresholdVector) -> Vec<f64> {
    let phi = order_stat_density(tv.k, tv.gamma);
    let th = &tv.thresholds;
    (1..th.len() - 1)
        .map(|i| {
            let ti = th[i];
            let ln_phi_ti = phi.ln_pdf(ti);
            let scaled = quad::integrate(|s| (phi.ln_pdf(s) - ln_phi_ti).exp() / s, ti, th[i + 1], 1e-13);
            th[i - 1] - (ti - ti * scaled)
        })
        .collect()
}

/// Threshold density for t → ∞: Gamma((k+1)/2, γk/2) truncated to [0, 1].
pub fn asymptotic_density(k: u32, gamma: f64) -> GammaDensity {
    GammaDensity::new((k as f64 + 1.0) / 2.0, gamma * k as f64 / 2.0)
}

/// T_i = F^{-1}(i/(t−1)) for the truncated asymptotic density.
pub fn asymptotic_thresholds(k: u32, gamma: f64, t: usize) -> Result<ThresholdVector> {
    check_args(k, gamma, t)?;
    let g = asymptotic_density(k, gamma);
    let ln_total = g.ln_cdf_sf(1.0).0;
    let mut thresholds = Vec::with_capacity(t);
    thresholds.push(0.0);
    for i in 1..t - 1 {
        let target = (i as f64 / (t - 1) as f64).ln() + ln_total;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if g.ln_cdf_sf(mid).0 < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        thresholds.push(0.5 * (lo + hi));
    }
    thresholds.push(1.0);
    Ok(ThresholdVector { k, gamma, thresholds })
}

/// Uniformly spaced thresholds on [lo, 1] after the mandatory T_1 = 0.
pub fn uniform_thresholds(k: u32, gamma: f64, t: usize, lo: f64) -> ThresholdVector {
    let mut thresholds = vec![0.0];
    for i in 0..t - 1 {
        thresholds.push(lo + (1.0 - lo) * i as f64 / (t - 2).max(1) as f64);
    }
    *thresholds.last_mut().unwrap() = 1.0;
    ThresholdVector { k, gamma, thresholds }
}
