//! Truncated Taylor series, used to get exact higher derivatives of the bump
//! kernel without hand-expanding them.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Number of stored Taylor coefficients; derivatives up to order `ORDER - 1`.
pub const ORDER: usize = 6;

/// `c[k]` is the k-th Taylor coefficient, i.e. f^(k)(x0) / k!.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub c: [f64; ORDER],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; ORDER];
        c[0] = v;
        Self { c }
    }

    /// The identity function expanded at `x0`.
    pub fn variable(x0: f64) -> Self {
        let mut c = [0.0; ORDER];
        c[0] = x0;
        c[1] = 1.0;
        Self { c }
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// The k-th derivative at the expansion point.
    pub fn derivative(&self, k: usize) -> f64 {
        let mut fact = 1.0;
        for i in 2..=k {
            fact *= i as f64;
        }
        self.c[k] * fact
    }

    pub fn scale(self, s: f64) -> Self {
        let mut c = self.c;
        c.iter_mut().for_each(|v| *v *= s);
        Self { c }
    }

    pub fn exp(self) -> Self {
        // f = exp(g): k f_k = sum_{j=1..k} j g_j f_{k-j}
        let mut f = [0.0; ORDER];
        f[0] = self.c[0].exp();
        for k in 1..ORDER {
            let mut s = 0.0;
            for j in 1..=k {
                s += j as f64 * self.c[j] * f[k - j];
            }
            f[k] = s / k as f64;
        }
        Self { c: f }
    }

    pub fn recip(self) -> Self {
        let mut f = [0.0; ORDER];
        f[0] = 1.0 / self.c[0];
        for k in 1..ORDER {
            let mut s = 0.0;
            for j in 1..=k {
                s += self.c[j] * f[k - j];
            }
            f[k] = -s / self.c[0];
        }
        Self { c: f }
    }

    pub fn sqrt(self) -> Self {
        let mut f = [0.0; ORDER];
        f[0] = self.c[0].sqrt();
        for k in 1..ORDER {
            let mut s = self.c[k];
            for j in 1..k {
                s -= f[j] * f[k - j];
            }
            f[k] = s / (2.0 * f[0]);
        }
        Self { c: f }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let mut c = self.c;
        c.iter_mut().zip(o.c).for_each(|(a, b)| *a += b);
        Jet { c }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut c = [0.0; ORDER];
        for i in 0..ORDER {
            for j in 0..ORDER - i {
                c[i + j] += self.c[i] * o.c[j];
            }
        }
        Jet { c }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, o: f64) -> Jet {
        self.c[0] += o;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, o: f64) -> Jet {
        self.scale(o)
    }
}
