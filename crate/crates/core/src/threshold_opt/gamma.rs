//! Gamma distribution in log space. Regularized incomplete gamma functions are
//! evaluated as logarithms so that left tails at shape ~10^3 stay representable.

use statrs::function::gamma::ln_gamma;

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 100_000;

/// ln P(a, x) via the power series; converges for x < a + 1 quickly.
fn ln_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term < sum * EPS {
            break;
        }
    }
    a * x.ln() - x - ln_gamma(a) + sum.ln()
}

/// ln Q(a, x) via the modified Lentz continued fraction; for x ≥ a + 1.
fn ln_q_fraction(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    a * x.ln() - x - ln_gamma(a) + h.ln()
}

/// (ln P(a, x), ln Q(a, x)).
pub fn ln_pq(a: f64, x: f64) -> (f64, f64) {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return (f64::NEG_INFINITY, 0.0);
    }
    if x.is_infinite() {
        return (0.0, f64::NEG_INFINITY);
    }
    if x < a + 1.0 {
        let lp = ln_p_series(a, x);
        (lp, (-lp.exp()).ln_1p())
    } else {
        let lq = ln_q_fraction(a, x);
        ((-lq.exp()).ln_1p(), lq)
    }
}

pub fn reg_lower(a: f64, x: f64) -> f64 {
    ln_pq(a, x).0.exp()
}

pub fn reg_upper(a: f64, x: f64) -> f64 {
    ln_pq(a, x).1.exp()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaDensity {
    pub shape: f64,
    pub rate: f64,
}

impl GammaDensity {
    pub fn new(shape: f64, rate: f64) -> Self {
        assert!(shape > 0.0 && rate > 0.0);
        Self { shape, rate }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return f64::NEG_INFINITY;
        }
        if x == 0.0 {
            return match self.shape {
                s if s < 1.0 => f64::INFINITY,
                s if s == 1.0 => self.rate.ln(),
                _ => f64::NEG_INFINITY,
            };
        }
        self.shape * self.rate.ln() + (self.shape - 1.0) * x.ln() - self.rate * x - ln_gamma(self.shape)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// (ln F(x), ln (1 − F(x))).
    pub fn ln_cdf_sf(&self, x: f64) -> (f64, f64) {
        ln_pq(self.shape, self.rate * x)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.ln_cdf_sf(x).0.exp()
    }

    pub fn sf(&self, x: f64) -> f64 {
        self.ln_cdf_sf(x).1.exp()
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn std_dev(&self) -> f64 {
        self.shape.sqrt() / self.rate
    }

    /// F(b) − F(a) for a ≤ b, accurate in both tails.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        self.ln_mass(a, b).exp()
    }

    /// ln(F(b) − F(a)) for a ≤ b.
    pub fn ln_mass(&self, a: f64, b: f64) -> f64 {
        if a >= b {
            return f64::NEG_INFINITY;
        }
        let (pa, qa) = self.ln_cdf_sf(a);
        let (pb, qb) = self.ln_cdf_sf(b);
        let mode = self.mean();
        if b <= mode {
            pb + ln_one_minus_exp(pa - pb)
        } else if a >= mode {
            qa + ln_one_minus_exp(qb - qa)
        } else {
            (1.0 - pa.exp() - qb.exp()).ln()
        }
    }
}

/// ln(1 − e^d) for d ≤ 0.
#[inline]
pub fn ln_one_minus_exp(d: f64) -> f64 {
    if d > -std::f64::consts::LN_2 {
        (-d.exp_m1()).ln()
    } else {
        (-d.exp()).ln_1p()
    }
}
