//! Scalar activations with first, second, and third derivatives.
//!
//! The third derivative feeds the reverse pass through input-Hessian
//! propagation; it must be exact for the PDE loss gradients to be exact.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    /// `max(0, x^3 / 6)`; twice differentiable, the workhorse for
    /// second-order PDE residuals.
    Relu3,
    Tanh,
    /// `x * tanh(ln(1 + e^x))`.
    Mish,
}

impl Activation {
    /// Value only; avoids the derivative transcendentals on order-0 passes.
    #[inline]
    pub fn value_fast(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Relu3 => {
                if x > 0.0 {
                    x * x * x / 6.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Mish => x * softplus(x).tanh(),
        }
    }

    /// Value and first derivative.
    #[inline]
    pub fn eval1(self, x: f64) -> (f64, f64) {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    (x, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Activation::Relu3 => {
                if x > 0.0 {
                    (x * x * x / 6.0, x * x / 2.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                (t, 1.0 - t * t)
            }
            Activation::Mish => {
                let s = softplus(x);
                let sig = sigmoid(x);
                let t = s.tanh();
                (x * t, t + x * (1.0 - t * t) * sig)
            }
        }
    }

    /// Value, first and second derivative.
    #[inline]
    pub fn eval2(self, x: f64) -> (f64, f64, f64) {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    (x, 1.0, 0.0)
                } else {
                    (0.0, 0.0, 0.0)
                }
            }
            Activation::Relu3 => {
                if x > 0.0 {
                    (x * x * x / 6.0, x * x / 2.0, x)
                } else {
                    (0.0, 0.0, 0.0)
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                let s = 1.0 - t * t;
                (t, s, -2.0 * t * s)
            }
            Activation::Mish => {
                let s = softplus(x);
                let sig = sigmoid(x);
                let s2 = sig * (1.0 - sig);
                let t = s.tanh();
                let u = 1.0 - t * t;
                let t1 = u * sig;
                let t2 = -2.0 * t * t1 * sig + u * s2;
                (x * t, t + x * t1, 2.0 * t1 + x * t2)
            }
        }
    }

    /// Value and first three derivatives.
    #[inline]
    pub fn eval3(self, x: f64) -> (f64, f64, f64, f64) {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    (x, 1.0, 0.0, 0.0)
                } else {
                    (0.0, 0.0, 0.0, 0.0)
                }
            }
            Activation::Relu3 => {
                // derivative convention at 0: all one-sided limits from the
                // left, i.e. zero
                if x > 0.0 {
                    (x * x * x / 6.0, x * x / 2.0, x, 1.0)
                } else {
                    (0.0, 0.0, 0.0, 0.0)
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                let s = 1.0 - t * t;
                (t, s, -2.0 * t * s, -2.0 * s * (1.0 - 3.0 * t * t))
            }
            Activation::Mish => mish_derivatives(x),
        }
    }

    #[inline]
    pub fn value(self, x: f64) -> f64 {
        self.eval3(x).0
    }

    #[inline]
    pub fn d1(self, x: f64) -> f64 {
        self.eval3(x).1
    }

    #[inline]
    pub fn d2(self, x: f64) -> f64 {
        self.eval3(x).2
    }

    #[inline]
    pub fn d3(self, x: f64) -> f64 {
        self.eval3(x).3
    }

    /// Whether the input Hessian of a network with this activation carries
    /// usable second-order information (ReLU's is zero almost everywhere).
    pub fn usable_for_second_order(self) -> bool {
        !matches!(self, Activation::Relu)
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Relu3 => "relu3",
            Activation::Tanh => "tanh",
            Activation::Mish => "mish",
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn mish_derivatives(x: f64) -> (f64, f64, f64, f64) {
    let s = softplus(x);
    let sig = sigmoid(x);
    // softplus derivatives: s' = sigmoid, s'' = sig(1-sig), s''' = s''(1-2sig)
    let s1 = sig;
    let s2 = sig * (1.0 - sig);
    let s3 = s2 * (1.0 - 2.0 * sig);
    let t = s.tanh();
    let u = 1.0 - t * t;
    // t(x) = tanh(s(x))
    let t1 = u * s1;
    let t2 = -2.0 * t * t1 * s1 + u * s2;
    let t3 = -2.0 * (t1 * t1 + t * t2) * s1 - 4.0 * t * t1 * s2 + u * s3;
    (
        x * t,
        t + x * t1,
        2.0 * t1 + x * t2,
        3.0 * t2 + x * t3,
    )
}
