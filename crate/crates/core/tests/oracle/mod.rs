//! Double-double reference forward pass for finite-difference checks.
//!
//! An f64 loss near 1 carries rounding noise around 1e-16, which a central
//! difference with h = 1e-5 amplifies to about 1e-11. That is too coarse for
//! gradient entries near 1e-8. Evaluating the loss in double-double (about
//! 32 significant digits) leaves only the truncation error of the stencil.

#![allow(dead_code)]

use std::ops::{Add, Div, Mul, Neg, Sub};

use maskfuse::data::SubjectSample;
use maskfuse::loss::{LossConfig, LossMode};
use maskfuse::model::ModelParams;

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    fn norm(hi: f64, lo: f64) -> Dd {
        let (hi, lo) = quick_two_sum(hi, lo);
        Dd { hi, lo }
    }

    fn scale(self, factor: f64) -> Dd {
        Dd {
            hi: self.hi * factor,
            lo: self.lo * factor,
        }
    }

    pub fn positive(self) -> bool {
        self.hi > 0.0 || (self.hi == 0.0 && self.lo > 0.0)
    }

    pub fn max(self, other: Dd) -> Dd {
        if (self - other).positive() {
            self
        } else {
            other
        }
    }

    pub fn exp(self) -> Dd {
        if self.hi < -740.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        // r in [-ln2/2, ln2/2], then divided by 2^10 before the series.
        let r = (self - LN2 * Dd::from(k)).scale(1.0 / 1024.0);
        let mut term = r;
        let mut sum = r;
        for n in 2..30 {
            term = term * r / Dd::from(n as f64);
            sum = sum + term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        // expm1(2x) = 2 expm1(x) + expm1(x)^2
        for _ in 0..10 {
            sum = sum.scale(2.0) + sum * sum;
        }
        (sum + Dd::ONE).scale(2f64.powi(k as i32))
    }

    pub fn ln(self) -> Dd {
        assert!(self.positive(), "ln of non-positive value");
        let mut y = Dd::from(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Dd::ONE;
        }
        y
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Dd::norm(s, e + f)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let p = self.hi * b.hi;
        let e = self.hi.mul_add(b.hi, -p) + (self.hi * b.lo + self.lo * b.hi);
        Dd::norm(p, e)
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * Dd::from(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Dd::from(q2);
        let q3 = r.hi / b.hi;
        Dd::norm(q1, q2) + Dd::from(q3)
    }
}

fn affine(w: &[Dd], b: &[Dd], x: &[Dd]) -> Vec<Dd> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(r, &bias)| {
            w[r * cols..(r + 1) * cols]
                .iter()
                .zip(x)
                .fold(bias, |acc, (&wi, &xi)| acc + wi * xi)
        })
        .collect()
}

fn relu(v: Vec<Dd>) -> Vec<Dd> {
    v.into_iter()
        .map(|x| if x.positive() { x } else { Dd::ZERO })
        .collect()
}

/// Batch-mean loss with every parameter taken from `flat` (storage order
/// w1 b1 w2 b2 w3 b3 w4 b4, weights row-major).
pub fn batch_loss(
    batch: &[SubjectSample],
    template: &ModelParams,
    flat: &[Dd],
    cfg: &LossConfig,
) -> Dd {
    let mut offset = 0;
    let tensors: Vec<&[Dd]> = template
        .shapes()
        .iter()
        .map(|&(r, c)| {
            let t = &flat[offset..offset + r * c];
            offset += r * c;
            t
        })
        .collect();
    let [w1, b1, w2, b2, w3, b3, w4, b4] = tensors[..] else {
        unreachable!()
    };
    let aff = template.arch.aff_enabled;

    let mut total = Dd::ZERO;
    for sample in batch {
        // Channel e*d + c holds emotion e, channel c.
        let channels: Vec<Vec<Dd>> = sample
            .maps
            .iter()
            .flat_map(|m| {
                (0..m.channels()).map(move |c| m.channel(c).iter().map(|&v| Dd::from(v)).collect())
            })
            .collect();
        let s = Dd::from(channels[0].len() as f64);
        let avg: Vec<Dd> = channels
            .iter()
            .map(|ch| ch.iter().fold(Dd::ZERO, |a, &v| a + v) / s)
            .collect();
        let attn: Vec<Dd> = if aff {
            let max: Vec<Dd> = channels
                .iter()
                .map(|ch| ch.iter().skip(1).fold(ch[0], |a, &v| a.max(v)))
                .collect();
            let branch = |x: &[Dd]| affine(w2, b2, &relu(affine(w1, b1, x)));
            let (oa, om) = (branch(&avg), branch(&max));
            oa.iter()
                .zip(&om)
                .map(|(&a, &m)| Dd::ONE / (Dd::ONE + (-(a + m)).exp()))
                .collect()
        } else {
            vec![Dd::ONE; channels.len()]
        };
        let fused: Vec<Dd> = attn.iter().zip(&avg).map(|(&w, &a)| w * a).collect();
        let logits = affine(w4, b4, &relu(affine(w3, b3, &fused)));
        let m = logits.iter().skip(1).fold(logits[0], |a, &v| a.max(v));
        let e: Vec<Dd> = logits.iter().map(|&l| (l - m).exp()).collect();
        let z = e.iter().fold(Dd::ZERO, |a, &v| a + v);
        let t = sample.label.index();
        let p = e[t] / z;
        assert!(p.hi > 1e-12, "oracle does not model the probability floor");
        let nll = -p.ln();
        total = total
            + match cfg.mode {
                LossMode::CrossEntropy => nll,
                LossMode::AdaptiveFocal => {
                    let modulating = if cfg.gamma == 0.0 {
                        Dd::ONE
                    } else {
                        (Dd::from(cfg.gamma) * (Dd::ONE - p).ln()).exp()
                    };
                    Dd::from(cfg.alpha[t]) * modulating * nll
                }
            };
    }
    total / Dd::from(batch.len() as f64)
}

/// Central difference `(L(theta + h e_j) - L(theta - h e_j)) / 2h` for every
/// coordinate, evaluated in double-double.
pub fn central_differences(
    batch: &[SubjectSample],
    params: &ModelParams,
    cfg: &LossConfig,
    h: f64,
) -> Vec<f64> {
    let base: Vec<Dd> = params.to_flat().into_iter().map(Dd::from).collect();
    let mut probe = base.clone();
    (0..base.len())
        .map(|j| {
            probe[j] = base[j] + Dd::from(h);
            let up = batch_loss(batch, params, &probe, cfg);
            probe[j] = base[j] - Dd::from(h);
            let down = batch_loss(batch, params, &probe, cfg);
            probe[j] = base[j];
            ((up - down) / Dd::from(2.0 * h)).hi
        })
        .collect()
}

/// Spot checks of the arithmetic against known constants.
pub fn self_check() -> Result<(), String> {
    let e = Dd::ONE.exp();
    // e = 2.718281828459045 + 1.4456468917292502e-16
    let e_ok = e.hi == std::f64::consts::E && (e.lo - 1.445_646_891_729_250_2e-16).abs() < 1e-30;
    let ln_ok = (e.ln() - Dd::ONE).hi.abs() < 1e-30;
    let div_ok = ((Dd::ONE / Dd::from(3.0)) * Dd::from(3.0) - Dd::ONE)
        .hi
        .abs()
        < 1e-31;
    if e_ok && ln_ok && div_ok {
        Ok(())
    } else {
        Err(format!("double-double self check failed: exp(1) = {e:?}"))
    }
}
