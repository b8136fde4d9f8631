//! Special functions needed by the failure-probability models.
//!
//! `erfc` and `ln Γ` come from `libm`; the regularized incomplete gamma
//! function, its shape derivative and the digamma function are evaluated
//! here with the classic series / continued-fraction split.

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;
const TINY: f64 = 1e-300;

/// Complementary error function.
#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Natural logarithm of the gamma function for `x > 0`.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Digamma function ψ(x) for `x > 0`.
pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Asymptotic expansion with Bernoulli coefficients B2..B12.
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
    acc + x.ln() - 0.5 * inv - tail
}

/// Regularized lower incomplete gamma function P(a, x) = γ(a, x) / Γ(a).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        lower_series(a, x)
    } else {
        1.0 - upper_continued_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma function Q(a, x) = 1 − P(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - lower_series(a, x)
    } else {
        upper_continued_fraction(a, x)
    }
}

fn lower_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
fn upper_continued_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Partial derivative ∂P(a, x)/∂a.
///
/// Below x = a + 1 this sums P(a, x) = Σₙ Tₙ with Tₙ = xᵃ⁺ⁿ e⁻ˣ / Γ(a+n+1),
/// so ∂P/∂a = Σₙ Tₙ (ln x − ψ(a+n+1)). Above it the series cancels badly,
/// and −∂Q/∂a is taken from the continued fraction instead.
pub fn gamma_p_da(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if x >= a + 1.0 {
        return -upper_da(a, x);
    }
    let ln_x = x.ln();
    let mut term = (a * ln_x - x - ln_gamma(a + 1.0)).exp();
    let mut psi = digamma(a + 1.0);
    let mut sum = term * (ln_x - psi);
    let mut n = 0usize;
    loop {
        let shift = a + n as f64 + 1.0;
        term *= x / shift;
        psi += 1.0 / shift;
        n += 1;
        let contrib = term * (ln_x - psi);
        sum += contrib;
        // Terms decay monotonically once a+n+1 > x.
        if shift > x && contrib.abs() <= EPS * sum.abs().max(TINY) {
            break;
        }
        if n >= MAX_ITER {
            break;
        }
    }
    sum
}

/// A value with its derivative with respect to the shape a.
#[derive(Clone, Copy)]
struct Dual(f64, f64);

impl Dual {
    fn add(self, o: Dual) -> Dual {
        Dual(self.0 + o.0, self.1 + o.1)
    }

    fn mul(self, o: Dual) -> Dual {
        Dual(self.0 * o.0, self.1 * o.0 + self.0 * o.1)
    }

    fn div(self, o: Dual) -> Dual {
        Dual(self.0 / o.0, (self.1 * o.0 - self.0 * o.1) / (o.0 * o.0))
    }

    fn guard(self) -> Dual {
        if self.0.abs() < TINY {
            Dual(TINY, self.1)
        } else {
            self
        }
    }
}

// ∂Q(a, x)/∂a from the Lentz iteration run on dual numbers:
// Q = e^{−x} xᵃ h / Γ(a), so ∂Q/∂a = Q (ln x − ψ(a) + h′/h).
fn upper_da(a: f64, x: f64) -> f64 {
    let one = Dual(1.0, 0.0);
    let mut b = Dual(x + 1.0 - a, -1.0);
    let mut c = Dual(1.0 / TINY, 0.0);
    let mut d = one.div(b.guard());
    let mut h = d;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        let an = Dual(-fi * (fi - a), fi);
        b = b.add(Dual(2.0, 0.0));
        d = an.mul(d).add(b).guard();
        c = b.add(an.div(c)).guard();
        d = one.div(d);
        let del = d.mul(c);
        h = h.mul(del);
        if (del.0 - 1.0).abs() < EPS && del.1.abs() < EPS * (h.1 / h.0).abs().max(1.0) {
            break;
        }
    }
    let q = (-x + a * x.ln() - ln_gamma(a)).exp() * h.0;
    q * (x.ln() - digamma(a) + h.1 / h.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digamma_reference_values() {
        // ψ(1) = −γ, ψ(1/2) = −γ − 2 ln 2
        let euler = 0.577_215_664_901_532_9;
        let e1 = (digamma(1.0) + euler).abs();
        assert!(e1 < 1e-14, "{e1}");
        assert!((digamma(0.5) + euler + 2.0 * 2f64.ln()).abs() < 1e-14);
        assert!((digamma(10.0) - 2.251_752_589_066_721).abs() < 1e-14);
    }

    #[test]
    fn gamma_p_exponential_case() {
        // P(1, x) = 1 − e^{−x}
        for &x in &[0.1, 1.0, 2.5, 7.0, 30.0] {
            assert!((gamma_p(1.0, x) - (1.0 - (-x).exp())).abs() < 1e-14);
        }
    }

    #[test]
    fn gamma_p_and_q_are_complementary() {
        for &(a, x) in &[(0.5, 0.2), (3.0, 2.0), (3.0, 5.0), (10.0, 12.0)] {
            assert!((gamma_p(a, x) + gamma_q(a, x) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn shape_derivative_matches_finite_difference() {
        for &(a, x) in &[(0.7, 0.5), (2.0, 1.0), (3.5, 4.0), (1.2, 6.0), (3.0, 4.5), (2.0, 12.0)] {
            let h = 1e-6;
            let fd = (gamma_p(a + h, x) - gamma_p(a - h, x)) / (2.0 * h);
            let an = gamma_p_da(a, x);
            assert!((fd - an).abs() <= 1e-7 * an.abs().max(1e-3), "a={a} x={x} fd={fd} an={an}");
            assert!(an < 0.0);
        }
    }

    #[test]
    fn shape_derivative_keeps_relative_accuracy_in_the_tail() {
        // Differencing Q keeps full relative precision where P is close to one.
        for &(a, x) in &[(1.0, 40.0), (0.6, 60.0), (2.5, 30.0), (5.0, 45.0)] {
            let h = 1e-6 * a;
            let fd = -(gamma_q(a + h, x) - gamma_q(a - h, x)) / (2.0 * h);
            let an = gamma_p_da(a, x);
            assert!(an < 0.0, "a={a} x={x}: {an}");
            assert!((fd - an).abs() <= 1e-6 * an.abs(), "a={a} x={x} fd={fd} an={an}");
        }
        // Both branches agree at the switch point.
        for &a in &[0.5, 1.0, 3.0, 7.5] {
            let x = a + 1.0;
            let below = gamma_p_da(a, x * (1.0 - 1e-12));
            let above = gamma_p_da(a, x);
            assert!((below - above).abs() <= 1e-9 * above.abs(), "a={a}: {below} vs {above}");
        }
    }
}
