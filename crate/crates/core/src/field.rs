//! Scalar coefficient fields `f(x, y)` with `x ∈ ℝⁿ` and `y` the normal variable.

use std::fmt;
use std::sync::Arc;

/// A reentrant scalar field over the half space.
#[derive(Clone)]
pub struct Sampler {
    f: Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>,
    constant: Option<f64>,
    label: String,
}

impl Sampler {
    pub fn new(label: impl Into<String>, f: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            constant: None,
            label: label.into(),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            f: Arc::new(move |_, _| c),
            constant: Some(c),
            label: format!("const({c})"),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: f64) -> f64 {
        (self.f)(x, y)
    }

    /// `Some(c)` when the field was built with [`Sampler::constant`].
    pub fn as_constant(&self) -> Option<f64> {
        self.constant
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Central-difference partial derivative in `x[k]`.
    pub fn dx(&self, x: &[f64], y: f64, k: usize) -> f64 {
        if self.constant.is_some() {
            return 0.0;
        }
        let step = FD_STEP * x[k].abs().max(1.0);
        let mut xp = [0.0; 3];
        let mut xm = [0.0; 3];
        xp[..x.len()].copy_from_slice(x);
        xm[..x.len()].copy_from_slice(x);
        xp[k] += step;
        xm[k] -= step;
        (self.eval(&xp[..x.len()], y) - self.eval(&xm[..x.len()], y)) / (2.0 * step)
    }

    /// Central-difference second derivative in `x[k]`.
    pub fn dxx(&self, x: &[f64], y: f64, k: usize) -> f64 {
        if self.constant.is_some() {
            return 0.0;
        }
        let step = FD_STEP_2 * x[k].abs().max(1.0);
        let mut xp = [0.0; 3];
        let mut xm = [0.0; 3];
        xp[..x.len()].copy_from_slice(x);
        xm[..x.len()].copy_from_slice(x);
        xp[k] += step;
        xm[k] -= step;
        (self.eval(&xp[..x.len()], y) - 2.0 * self.eval(x, y) + self.eval(&xm[..x.len()], y))
            / (step * step)
    }

    /// Central-difference mixed derivative in `x[k]`, `x[l]` with `k != l`.
    pub fn dxkl(&self, x: &[f64], y: f64, k: usize, l: usize) -> f64 {
        if self.constant.is_some() {
            return 0.0;
        }
        if k == l {
            return self.dxx(x, y, k);
        }
        let hk = FD_STEP_2 * x[k].abs().max(1.0);
        let hl = FD_STEP_2 * x[l].abs().max(1.0);
        let mut p = [0.0; 3];
        let mut s = 0.0;
        for (sk, sl, sign) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
            p[..x.len()].copy_from_slice(x);
            p[k] += sk * hk;
            p[l] += sl * hl;
            s += sign * self.eval(&p[..x.len()], y);
        }
        s / (4.0 * hk * hl)
    }
}

/// Step used for first x-derivatives of coefficient fields.
pub const FD_STEP: f64 = 1e-5;
/// Step used for second x-derivatives of coefficient fields.
pub const FD_STEP_2: f64 = 1e-4;

impl fmt::Debug for Sampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sampler({})", self.label)
    }
}
