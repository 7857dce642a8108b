//! Smooth activation functions with analytic derivatives up to third order.
//!
//! Third derivatives are needed because the parameter gradient of a
//! second-derivative channel (`d_xx`, `d_xt`) consumes one more order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Tanh,
    Sine,
    /// `exp(-z^2)`
    Gaussian,
    /// `z * sigmoid(z)`
    Swish,
    /// `ln(1 + e^z)`
    Softplus,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 5] = [
        ActivationKind::Tanh,
        ActivationKind::Sine,
        ActivationKind::Gaussian,
        ActivationKind::Swish,
        ActivationKind::Softplus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Tanh => "tanh",
            ActivationKind::Sine => "sine",
            ActivationKind::Gaussian => "gaussian",
            ActivationKind::Swish => "swish",
            ActivationKind::Softplus => "softplus",
        }
    }

    /// Value and first three derivatives `(f, f', f'', f''')` at `z`.
    #[inline]
    pub fn eval_derivs(self, z: f64) -> [f64; 4] {
        match self {
            ActivationKind::Tanh => {
                let t = tanh(z);
                let d1 = 1.0 - t * t;
                let d2 = -2.0 * t * d1;
                let d3 = d1 * (4.0 * t * t - 2.0 * d1);
                [t, d1, d2, d3]
            }
            ActivationKind::Sine => {
                let (s, c) = z.sin_cos();
                [s, c, -s, -c]
            }
            ActivationKind::Gaussian => {
                let g = (-z * z).exp();
                let z2 = z * z;
                [
                    g,
                    -2.0 * z * g,
                    (4.0 * z2 - 2.0) * g,
                    (12.0 * z - 8.0 * z2 * z) * g,
                ]
            }
            ActivationKind::Swish => {
                let [s, s1, s2, s3] = sigmoid_derivs(z);
                [z * s, s + z * s1, 2.0 * s1 + z * s2, 3.0 * s2 + z * s3]
            }
            ActivationKind::Softplus => {
                let [s, s1, s2, _] = sigmoid_derivs(z);
                [softplus(z), s, s1, s2]
            }
        }
    }

    /// Value only; same arithmetic as the value entry of [`eval_derivs`](Self::eval_derivs).
    #[inline]
    pub fn eval(self, z: f64) -> f64 {
        match self {
            ActivationKind::Tanh => tanh(z),
            ActivationKind::Sine => z.sin(),
            ActivationKind::Gaussian => (-z * z).exp(),
            ActivationKind::Swish => z * sigmoid(z),
            ActivationKind::Softplus => softplus(z),
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActivationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ConfigError::UnknownActivation(s.to_string()))
    }
}

/// `tanh` through a single `exp`, several times cheaper than the libm
/// routine. Agrees with `f64::tanh` to a few 1e-16 in absolute terms; the
/// relative error grows only as `|z|` goes to zero, where the value does too.
#[inline]
fn tanh(z: f64) -> f64 {
    1.0 - 2.0 / ((2.0 * z).exp() + 1.0)
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// sigmoid and its first three derivatives.
#[inline]
fn sigmoid_derivs(z: f64) -> [f64; 4] {
    let s = sigmoid(z);
    let s1 = s * (1.0 - s);
    let s2 = s1 * (1.0 - 2.0 * s);
    let s3 = s1 * (1.0 - 6.0 * s + 6.0 * s * s);
    [s, s1, s2, s3]
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp()
    } else if z < -30.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn maclaurin_values_at_zero() {
        let cases = [
            (ActivationKind::Tanh, [0.0, 1.0, 0.0, -2.0]),
            (ActivationKind::Sine, [0.0, 1.0, 0.0, -1.0]),
            (ActivationKind::Softplus, [std::f64::consts::LN_2, 0.5, 0.25, 0.0]),
            (ActivationKind::Gaussian, [1.0, 0.0, -2.0, 0.0]),
            (ActivationKind::Swish, [0.0, 0.5, 0.5, 0.0]),
        ];
        for (kind, expect) in cases {
            let got = kind.eval_derivs(0.0);
            for k in 0..4 {
                assert_abs_diff_eq!(got[k], expect[k], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-4;
        for kind in ActivationKind::ALL {
            for i in 0..100 {
                let z = -4.0 + 8.0 * (i as f64 + 0.5) / 100.0;
                let d = kind.eval_derivs(z);
                let p = kind.eval_derivs(z + h);
                let m = kind.eval_derivs(z - h);
                // each derivative from a central difference of the one below it
                for k in 1..4 {
                    let fd = (p[k - 1] - m[k - 1]) / (2.0 * h);
                    let scale = d[k].abs().max(1e-3);
                    assert!(
                        (fd - d[k]).abs() / scale < 1e-6,
                        "{kind} order {k} at z={z}: fd={fd} analytic={}",
                        d[k]
                    );
                }
            }
        }
    }

    #[test]
    fn value_path_agrees_with_derivative_path() {
        for kind in ActivationKind::ALL {
            for i in 0..50 {
                let z = -12.0 + 0.5 * i as f64;
                assert_eq!(kind.eval(z), kind.eval_derivs(z)[0]);
            }
        }
    }

    #[test]
    fn bounded_on_wide_interval() {
        for kind in ActivationKind::ALL {
            for i in 0..=2000 {
                let z = -10.0 + 0.01 * i as f64;
                let d = kind.eval_derivs(z);
                assert!(d.iter().all(|v| v.is_finite()));
                assert!(d[0].abs() <= 11.0 && d[1].abs() <= 2.0, "{kind} at {z}");
            }
        }
    }

    #[test]
    fn softplus_large_argument_branch() {
        let d = ActivationKind::Softplus.eval_derivs(800.0);
        assert_eq!(d[0], 800.0);
        assert_eq!(d[1], 1.0);
        let v = ActivationKind::Softplus.eval(31.0);
        assert_abs_diff_eq!(v, 31.0 + (-31.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn names_round_trip() {
        for kind in ActivationKind::ALL {
            assert_eq!(kind.name().parse::<ActivationKind>().unwrap(), kind);
        }
        assert!("relu".parse::<ActivationKind>().is_err());
        assert!("Tanh".parse::<ActivationKind>().is_err());
    }
}
