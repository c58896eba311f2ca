//! Scalar types used to evaluate the model families.
//!
//! Utility and transition functions are written once, generically over
//! [`Real`], and evaluated with three different number types:
//!
//! - `f64` for plain values,
//! - [`Dir`] for exact one-sided directional derivatives (kinks resolved by
//!   the min/max rule for directional derivatives),
//! - [`Jet`] for value, gradient and Hessian over a handful of local
//!   variables, used by the Newton polish.
//!
//! Every `min`/`max` goes through a [`Smoothing`] context. With `mu == 0`
//! the kink is kept exact (a jet then carries the gradient of the active
//! branch, i.e. a supergradient for concave compositions). With `mu > 0`
//! the kink is replaced by `(f+g)/2 -/+ sqrt(((f-g)/2)^2 + mu^2)`, which
//! preserves concavity/convexity and monotonicity of the composition.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothing {
    /// Smoothing radius for min/max. Zero keeps kinks exact.
    pub mu: f64,
    /// Two branches closer than this are treated as tied by [`Dir`].
    pub tie: f64,
}

impl Smoothing {
    pub const EXACT: Smoothing = Smoothing { mu: 0.0, tie: 1e-9 };

    pub fn smooth(mu: f64) -> Self {
        Smoothing { mu, tie: 1e-9 }
    }
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::EXACT
    }
}

pub trait Real:
    Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    fn value(&self) -> f64;
    fn scale(&self, k: f64) -> Self;
    fn offset(&self, k: f64) -> Self;
    fn exp(&self) -> Self;
    fn ln_1p(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn min_s(&self, other: &Self, sm: Smoothing) -> Self;
    fn max_s(&self, other: &Self, sm: Smoothing) -> Self;

    fn square(&self) -> Self {
        self.clone() * self.clone()
    }
}

fn smooth_min<R: Real>(f: &R, g: &R, mu: f64) -> R {
    let half_sum = (f.clone() + g.clone()).scale(0.5);
    let half_diff = (f.clone() - g.clone()).scale(0.5);
    half_sum - half_diff.square().offset(mu * mu).sqrt()
}

fn smooth_max<R: Real>(f: &R, g: &R, mu: f64) -> R {
    let half_sum = (f.clone() + g.clone()).scale(0.5);
    let half_diff = (f.clone() - g.clone()).scale(0.5);
    half_sum + half_diff.square().offset(mu * mu).sqrt()
}

impl Real for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn scale(&self, k: f64) -> Self {
        self * k
    }
    fn offset(&self, k: f64) -> Self {
        self + k
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln_1p(&self) -> Self {
        f64::ln_1p(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn min_s(&self, other: &Self, sm: Smoothing) -> Self {
        if sm.mu > 0.0 {
            smooth_min(self, other, sm.mu)
        } else {
            self.min(*other)
        }
    }
    fn max_s(&self, other: &Self, sm: Smoothing) -> Self {
        if sm.mu > 0.0 {
            smooth_max(self, other, sm.mu)
        } else {
            self.max(*other)
        }
    }
}

/// Value together with a one-sided directional derivative.
///
/// Smoothing is ignored: min/max always use the exact rule
/// `D min(f,g) = min(Df, Dg)` on ties, which is what the optimality
/// conditions with left/right derivatives need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dir {
    pub v: f64,
    pub d: f64,
}

impl Dir {
    pub fn new(v: f64, d: f64) -> Self {
        Dir { v, d }
    }
}

impl Add for Dir {
    type Output = Dir;
    fn add(self, o: Dir) -> Dir {
        Dir::new(self.v + o.v, self.d + o.d)
    }
}

impl Sub for Dir {
    type Output = Dir;
    fn sub(self, o: Dir) -> Dir {
        Dir::new(self.v - o.v, self.d - o.d)
    }
}

impl Mul for Dir {
    type Output = Dir;
    fn mul(self, o: Dir) -> Dir {
        Dir::new(self.v * o.v, self.d * o.v + self.v * o.d)
    }
}

impl Neg for Dir {
    type Output = Dir;
    fn neg(self) -> Dir {
        Dir::new(-self.v, -self.d)
    }
}

impl Real for Dir {
    fn constant(v: f64) -> Self {
        Dir::new(v, 0.0)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn scale(&self, k: f64) -> Self {
        Dir::new(self.v * k, self.d * k)
    }
    fn offset(&self, k: f64) -> Self {
        Dir::new(self.v + k, self.d)
    }
    fn exp(&self) -> Self {
        let e = self.v.exp();
        Dir::new(e, e * self.d)
    }
    fn ln_1p(&self) -> Self {
        Dir::new(self.v.ln_1p(), self.d / (1.0 + self.v))
    }
    fn sqrt(&self) -> Self {
        let s = self.v.sqrt();
        let d = if s > 0.0 { self.d / (2.0 * s) } else { 0.0 };
        Dir::new(s, d)
    }
    fn min_s(&self, other: &Self, sm: Smoothing) -> Self {
        if (self.v - other.v).abs() <= sm.tie {
            Dir::new(self.v.min(other.v), self.d.min(other.d))
        } else if self.v < other.v {
            *self
        } else {
            *other
        }
    }
    fn max_s(&self, other: &Self, sm: Smoothing) -> Self {
        if (self.v - other.v).abs() <= sm.tie {
            Dir::new(self.v.max(other.v), self.d.max(other.d))
        } else if self.v > other.v {
            *self
        } else {
            *other
        }
    }
}

/// Second-order jet over `n` local variables.
///
/// Jets of different lengths combine by zero extension, so a quantity that
/// depends only on the first `k` variables of a path can be stored with
/// length `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: Vec<f64>,
    /// Row-major `n x n`.
    pub h: Vec<f64>,
}

impl Jet {
    pub fn constant_n(v: f64, n: usize) -> Self {
        Jet {
            v,
            g: vec![0.0; n],
            h: vec![0.0; n * n],
        }
    }

    /// The `i`-th of `n` independent variables, at value `v`.
    pub fn variable(v: f64, i: usize, n: usize) -> Self {
        let mut j = Jet::constant_n(v, n);
        j.g[i] = 1.0;
        j
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.h[i * self.dim() + j]
    }

    fn widen(&self, n: usize) -> Jet {
        let m = self.dim();
        if m == n {
            return self.clone();
        }
        let mut out = Jet::constant_n(self.v, n);
        out.g[..m].copy_from_slice(&self.g);
        for i in 0..m {
            for j in 0..m {
                out.h[i * n + j] = self.h[i * m + j];
            }
        }
        out
    }

    fn zip(&self, o: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        let n = self.dim().max(o.dim());
        let a = self.widen(n);
        let b = o.widen(n);
        Jet {
            v: f(a.v, b.v),
            g: a.g.iter().zip(&b.g).map(|(x, y)| f(*x, *y)).collect(),
            h: a.h.iter().zip(&b.h).map(|(x, y)| f(*x, *y)).collect(),
        }
    }

    /// Chain rule for a scalar function with value `f0`, slope `f1`, curvature `f2`.
    fn chain(&self, f0: f64, f1: f64, f2: f64) -> Jet {
        let n = self.dim();
        let mut out = Jet::constant_n(f0, n);
        for i in 0..n {
            out.g[i] = f1 * self.g[i];
            for j in 0..n {
                out.h[i * n + j] = f1 * self.h[i * n + j] + f2 * self.g[i] * self.g[j];
            }
        }
        out
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        self.zip(&o, |x, y| x + y)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self.zip(&o, |x, y| x - y)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let n = self.dim().max(o.dim());
        let a = self.widen(n);
        let b = o.widen(n);
        let mut out = Jet::constant_n(a.v * b.v, n);
        for i in 0..n {
            out.g[i] = a.g[i] * b.v + a.v * b.g[i];
            for j in 0..n {
                out.h[i * n + j] =
                    a.h[i * n + j] * b.v + b.h[i * n + j] * a.v + a.g[i] * b.g[j] + a.g[j] * b.g[i];
            }
        }
        out
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Real for Jet {
    fn constant(v: f64) -> Self {
        Jet::constant_n(v, 0)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn scale(&self, k: f64) -> Self {
        Jet {
            v: self.v * k,
            g: self.g.iter().map(|x| x * k).collect(),
            h: self.h.iter().map(|x| x * k).collect(),
        }
    }
    fn offset(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.v += k;
        out
    }
    fn exp(&self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn ln_1p(&self) -> Self {
        let u = 1.0 + self.v;
        self.chain(self.v.ln_1p(), 1.0 / u, -1.0 / (u * u))
    }
    fn sqrt(&self) -> Self {
        let s = self.v.sqrt();
        if s <= 0.0 {
            return Jet::constant_n(0.0, self.dim());
        }
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }
    fn min_s(&self, other: &Self, sm: Smoothing) -> Self {
        if sm.mu > 0.0 {
            smooth_min(self, other, sm.mu)
        } else if self.v <= other.v {
            self.clone()
        } else {
            other.clone()
        }
    }
    fn max_s(&self, other: &Self, sm: Smoothing) -> Self {
        if sm.mu > 0.0 {
            smooth_max(self, other, sm.mu)
        } else if self.v >= other.v {
            self.clone()
        } else {
            other.clone()
        }
    }
}
