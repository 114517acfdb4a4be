//! Bucket assignment function β_k from the Poisson insertion model.
//!
//! After an x-fraction of the keys has been placed, a bin is modelled as
//! holding min(X, k) keys with X ~ Poisson(μ). A key landing on a bin
//! succeeds while the bin still has room, p_k = P[X ≤ k−1], and the inserted
//! fraction is x = E[min(X, k)]/k. Both are monotone in μ, so μ parametrizes
//! the curve without ever differentiating noisy data.
//!
//! β_k' is proportional to ln p_k. Since dx/dμ = p_k/k,
//! β_k(x) ∝ ∫_0^{μ(x)} p_k(ν) ln p_k(ν) / k dν, which is smooth in μ and
//! converges at μ = ∞; the normalization to β_k(1) = 1 absorbs the constant.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::threshold_opt::gamma::ln_pq;
use crate::threshold_opt::quad;

pub const DEFAULT_GRID: usize = 4096;
/// The sweep stops where the model has placed all but this fraction.
pub const X_END_GAP: f64 = 1e-9;

/// Function on [0, 1] tabulated on a uniform grid, linearly interpolated.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveTable {
    ys: Vec<f64>,
    /// Scale that was divided out (for β tables: the integral up to μ = ∞).
    pub normalizer: f64,
}

impl CurveTable {
    pub fn uniform(ys: Vec<f64>) -> Result<Self> {
        if ys.len() < 2 || ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidInput("curve needs at least two finite points".into()));
        }
        Ok(Self { ys, normalizer: 1.0 })
    }

    /// Number of grid intervals.
    pub fn grid(&self) -> usize {
        self.ys.len() - 1
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        let g = self.grid() as f64;
        (0..self.ys.len()).map(move |i| i as f64 / g)
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let g = self.grid();
        let pos = x.clamp(0.0, 1.0) * g as f64;
        let i = pos as usize;
        if i >= g {
            return self.ys[g];
        }
        let (a, b) = (self.ys[i], self.ys[i + 1]);
        a + (pos - i as f64) * (b - a)
    }

    pub fn write(&self, w: &mut Writer) {
        w.put_u64(self.ys.len() as u64);
        w.put_f64(self.normalizer);
        for &y in &self.ys {
            w.put_f64(y);
        }
    }

    pub fn read(r: &mut Reader) -> Result<Self> {
        let len = r.get_usize()?;
        let normalizer = r.get_f64()?;
        let ys = (0..len).map(|_| r.get_f64()).collect::<Result<Vec<_>>>()?;
        let mut t = Self::uniform(ys).map_err(|e| Error::Format(e.to_string()))?;
        t.normalizer = normalizer;
        Ok(t)
    }
}

/// Regularized Q(a, μ) in log space, with Q(0, ·) = 0.
fn ln_q(a: u32, mu: f64) -> f64 {
    if a == 0 {
        f64::NEG_INFINITY
    } else {
        ln_pq(a as f64, mu).1
    }
}

/// (x, 1 − x, ln p) at intensity μ. Each of x and 1 − x is a sum of positive
/// terms or a difference that cancels only mildly, so both stay accurate at
/// their respective ends of the curve.
pub fn model_point(k: u32, mu: f64) -> (f64, f64, f64) {
    if mu <= 0.0 {
        return (0.0, 1.0, 0.0);
    }
    let kf = k as f64;
    // E[min(X,k)] = μ·P[X ≤ k−2] + k·P[X ≥ k]
    let (ln_p_k, ln_q_k) = ln_pq(kf, mu);
    let q_km1 = ln_q(k - 1, mu).exp();
    let x = (mu * q_km1 + kf * ln_p_k.exp()) / kf;
    let gap = ((kf * ln_q_k.exp() - mu * q_km1) / kf).max(0.0);
    (x.min(1.0), gap, ln_q_k)
}

/// μ at which the model has inserted an x-fraction of the keys.
fn mu_for(k: u32, x: f64, mu_max: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0f64, mu_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (xm, gap, _) = model_point(k, mid);
        let below = if x <= 0.5 { xm < x } else { gap > 1.0 - x };
        if below {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn mu_end(k: u32) -> f64 {
    let mut mu = k as f64 + 1.0;
    while model_point(k, mu).1 > X_END_GAP {
        mu *= 1.5;
    }
    mu
}

/// μ values matching a uniform x-grid; the last one is the end of the sweep.
fn mu_grid(k: u32, grid: usize) -> Vec<f64> {
    let end = mu_end(k);
    let mut mus: Vec<f64> = (0..grid).map(|i| mu_for(k, i as f64 / grid as f64, end)).collect();
    mus.push(end);
    mus
}

fn check(k: u32, grid: usize) -> Result<()> {
    if k == 0 || grid < 2 {
        return Err(Error::InvalidInput(format!("curves need k ≥ 1 and grid ≥ 2 (got k={k}, grid={grid})")));
    }
    Ok(())
}

/// p_k on a uniform grid of `grid` intervals.
pub fn pk_curve(k: u32, grid: usize) -> Result<CurveTable> {
    check(k, grid)?;
    let ys = mu_grid(k, grid).into_iter().map(|mu| model_point(k, mu).2.exp()).collect();
    CurveTable::uniform(ys)
}

/// ∫_0^∞ p ln p / k dμ split at the given μ points: cumulative values, then the total.
fn cumulative_log_mass(k: u32, mus: &[f64]) -> (Vec<f64>, f64) {
    let f = |mu: f64| {
        let lq = model_point(k, mu).2;
        lq.exp() * lq / k as f64
    };
    let mut acc = 0.0;
    let mut cum = Vec::with_capacity(mus.len());
    cum.push(0.0);
    for w in mus.windows(2) {
        acc += quad::integrate(f, w[0], w[1], 1e-15);
        cum.push(acc);
    }
    // tail beyond the sweep: p decays geometrically, integrate until negligible
    let last = *mus.last().unwrap();
    let mut tail = 0.0;
    let mut lo = last;
    let mut width = last.max(1.0);
    loop {
        let piece = quad::integrate(f, lo, lo + width, 1e-18);
        tail += piece;
        lo += width;
        width *= 2.0;
        if piece.abs() <= 1e-16 * acc.abs() || lo > 1e6 * last.max(1.0) {
            break;
        }
    }
    (cum, acc + tail)
}

/// β_k on a uniform grid: β(0) = 0, β(1) = 1, convex and non-decreasing.
pub fn beta_curve(k: u32, grid: usize) -> Result<CurveTable> {
    Ok(curves(k, grid)?.1)
}

/// (p_k, β_k) sharing one μ sweep.
pub fn curves(k: u32, grid: usize) -> Result<(CurveTable, CurveTable)> {
    check(k, grid)?;
    let mus = mu_grid(k, grid);
    let pk = CurveTable::uniform(mus.iter().map(|&mu| model_point(k, mu).2.exp()).collect())?;
    let (cum, total) = cumulative_log_mass(k, &mus);
    if !(total < 0.0) {
        return Err(Error::Numeric(format!("β normalizer for k={k} is {total}")));
    }
    let mut ys: Vec<f64> = cum.iter().map(|c| (c / total).clamp(0.0, 1.0)).collect();
    *ys.last_mut().unwrap() = 1.0;
    for i in 1..ys.len() {
        ys[i] = ys[i].max(ys[i - 1]);
    }
    let mut beta = CurveTable::uniform(ys)?;
    beta.normalizer = total;
    Ok((pk, beta))
}

/// β tables are identical for every build with the same (k, grid); they are
/// rebuilt on load instead of being serialized.
pub fn cached_beta(k: u32, grid: usize) -> Result<Arc<CurveTable>> {
    static CACHE: OnceLock<Mutex<HashMap<(u32, usize), Arc<CurveTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.lock().unwrap().get(&(k, grid)) {
        return Ok(t.clone());
    }
    let t = Arc::new(beta_curve(k, grid)?);
    cache.lock().unwrap().insert((k, grid), t.clone());
    Ok(t)
}

/// Explicit Euler solution of p(x) = Q(k, k·∫_0^x 1/p(s) ds) on `steps`
/// intervals. The recursion feeds 1/p back into itself and breaks down for
/// large k; divergence is reported as an error.
pub fn pk_integro_check(k: u32, steps: usize) -> Result<CurveTable> {
    check(k, steps)?;
    let h = 1.0 / steps as f64;
    let mut ys = Vec::with_capacity(steps + 1);
    let mut p = 1.0f64;
    let mut integral = 0.0f64;
    ys.push(p);
    for s in 1..=steps {
        integral += h / p;
        p = ln_pq(k as f64, k as f64 * integral).1.exp();
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::Numeric(format!("Euler iteration for k={k} diverged at x={}", s as f64 * h)));
        }
        ys.push(p);
    }
    CurveTable::uniform(ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_of_the_sweep() {
        assert_eq!(model_point(5, 0.0), (0.0, 1.0, 0.0));
    }

    #[test]
    fn k_one_closed_forms() {
        let (pk, beta) = curves(1, DEFAULT_GRID).unwrap();
        for (x, p) in pk.xs().zip(pk.ys()) {
            assert!((p - (1.0 - x)).abs() < 1e-6, "x={x} p={p}");
        }
        for i in 0..=999 {
            let x = i as f64 / 1000.0;
            let exact = x + (1.0 - x) * (1.0 - x).ln();
            assert!((beta.eval(x) - exact).abs() < 1e-4, "x={x}");
        }
    }

    #[test]
    fn interpolation() {
        let t = CurveTable::uniform(vec![0.0, 1.0, 4.0]).unwrap();
        assert_eq!(t.eval(0.5), 1.0);
        assert_eq!(t.eval(0.75), 2.5);
        assert_eq!(t.eval(1.0), 4.0);
        assert_eq!(t.eval(-1.0), 0.0);
    }

    #[test]
    fn roundtrip() {
        let t = beta_curve(3, 64).unwrap();
        let mut w = Writer::new();
        t.write(&mut w);
        let bytes = w.into_bytes();
        assert_eq!(CurveTable::read(&mut Reader::new(&bytes)).unwrap(), t);
    }
}
