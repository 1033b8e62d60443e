//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Semi-infinite ranges are folded onto a bounded interval with `u = 1/v`,
//! which turns the power-law tails of the interference kernels into
//! integrands that are smooth (or mildly, integrably singular) near `u = 0`.

#![allow(clippy::excessive_precision)]

use crate::scalar::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Gauss weights for the nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances for the kernel integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions<R> {
    pub abs_tol: R,
    pub rel_tol: R,
    pub max_subdivisions: usize,
}

impl<R: Real> Default for QuadratureOptions<R> {
    /// `1e-10` absolute and `1e-8` relative, loosened to a few hundred ulps
    /// for scalar types that cannot resolve those.
    fn default() -> Self {
        let floor = R::epsilon() * R::of(256.0);
        Self {
            abs_tol: R::of(1e-10).max(floor),
            rel_tol: R::of(1e-8).max(floor),
            max_subdivisions: 2000,
        }
    }
}

impl<R: Real> QuadratureOptions<R> {
    pub fn with_tolerances(abs_tol: R, rel_tol: R) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    fn target(&self, value: R) -> R {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<R> {
    pub value: R,
    pub error: R,
    pub evaluations: usize,
}

/// Best estimate reached when the error target was missed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotConverged<R>(pub Estimate<R>);

pub type QuadResult<R> = Result<Estimate<R>, NotConverged<R>>;

#[derive(Clone, Copy)]
struct Segment<R> {
    a: R,
    b: R,
    value: R,
    error: R,
}

fn kronrod15<R: Real, F: Fn(R) -> R>(f: &F, a: R, b: R) -> (R, R) {
    let half = R::of(0.5);
    let center = half * (a + b);
    let half_len = half * (b - a);
    let fc = f(center);
    let mut kronrod = fc * R::of(WGK[7]);
    let mut gauss = fc * R::of(WG[3]);
    for j in 0..7 {
        let dx = half_len * R::of(XGK[j]);
        let pair = f(center - dx) + f(center + dx);
        kronrod = kronrod + R::of(WGK[j]) * pair;
        if j % 2 == 1 {
            gauss = gauss + R::of(WG[j / 2]) * pair;
        }
    }
    let value = kronrod * half_len;
    let error = ((kronrod - gauss) * half_len).abs();
    (value, error)
}

/// `∫_a^b f`, bisecting the worst segment until the summed error estimate
/// meets `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<R, F>(f: F, a: R, b: R, opts: &QuadratureOptions<R>) -> QuadResult<R>
where
    R: Real,
    F: Fn(R) -> R,
{
    if a == b {
        return Ok(Estimate {
            value: R::zero(),
            error: R::zero(),
            evaluations: 0,
        });
    }
    let (value, error) = kronrod15(&f, a, b);
    let mut segments = vec![Segment { a, b, value, error }];
    let mut evaluations = 15;
    let mut total = value;
    let mut total_err = error;

    while total_err > opts.target(total) {
        if segments.len() >= opts.max_subdivisions {
            return Err(NotConverged(Estimate {
                value: total,
                error: total_err,
                evaluations,
            }));
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .fold((0, R::neg_infinity()), |best, (i, s)| {
                if s.error > best.1 {
                    (i, s.error)
                } else {
                    best
                }
            });
        let seg = segments.swap_remove(worst);
        let mid = R::of(0.5) * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // segment no longer resolvable in this precision
            segments.push(seg);
            return Err(NotConverged(Estimate {
                value: total,
                error: total_err,
                evaluations,
            }));
        }
        let (lv, le) = kronrod15(&f, seg.a, mid);
        let (rv, re) = kronrod15(&f, mid, seg.b);
        evaluations += 30;
        segments.push(Segment {
            a: seg.a,
            b: mid,
            value: lv,
            error: le,
        });
        segments.push(Segment {
            a: mid,
            b: seg.b,
            value: rv,
            error: re,
        });
        // resum to keep rounding drift out of the stopping test
        total = segments.iter().fold(R::zero(), |acc, s| acc + s.value);
        total_err = segments.iter().fold(R::zero(), |acc, s| acc + s.error);
    }
    Ok(Estimate {
        value: total,
        error: total_err,
        evaluations,
    })
}

/// `∫_a^∞ f(v) dv` for `a > 0`, via `∫_0^{1/a} f(1/u)/u² du`.
///
/// For `a <= 0` the range is split at 1 and only `[1, ∞)` is folded.
pub fn integrate_to_infinity<R, F>(f: F, a: R, opts: &QuadratureOptions<R>) -> QuadResult<R>
where
    R: Real,
    F: Fn(R) -> R,
{
    let folded = |u: R| {
        if u <= R::zero() {
            // the integrands used here decay faster than v^-2
            R::zero()
        } else {
            let v = u.recip();
            f(v) * v * v
        }
    };
    if a > R::zero() {
        return integrate(folded, R::zero(), a.recip(), opts);
    }
    let head = integrate(&f, a, R::one(), opts);
    let tail = integrate(folded, R::zero(), R::one(), opts);
    match (head, tail) {
        (Ok(h), Ok(t)) => Ok(Estimate {
            value: h.value + t.value,
            error: h.error + t.error,
            evaluations: h.evaluations + t.evaluations,
        }),
        (Ok(e) | Err(NotConverged(e)), Ok(o) | Err(NotConverged(o))) => Err(NotConverged(Estimate {
            value: e.value + o.value,
            error: e.error + o.error,
            evaluations: e.evaluations + o.evaluations,
        })),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact_on_one_segment() {
        let est = integrate(|x: f64| x.powi(6) - 3.0 * x, 0.0, 2.0, &QuadratureOptions::default()).unwrap();
        assert!((est.value - (128.0 / 7.0 - 6.0)).abs() < 1e-13);
        assert_eq!(est.evaluations, 15);
    }

    #[test]
    fn arctan_tail() {
        let est = integrate_to_infinity(|v: f64| 1.0 / (1.0 + v * v), 1.0, &QuadratureOptions::default()).unwrap();
        assert!((est.value - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn integrable_endpoint_singularity() {
        // ∫_0^1 u^{-0.1} du = 1/0.9
        let opts = QuadratureOptions::with_tolerances(1e-13, 1e-12);
        let est = integrate(|u: f64| if u > 0.0 { u.powf(-0.1) } else { 0.0 }, 0.0, 1.0, &opts).unwrap();
        assert!((est.value - 1.0 / 0.9).abs() < 1e-9, "{}", est.value);
    }

    #[test]
    fn tail_from_zero_splits() {
        // ∫_0^∞ e^{-v} dv
        let est = integrate_to_infinity(|v: f64| (-v).exp(), 0.0, &QuadratureOptions::default()).unwrap();
        assert!((est.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn subdivision_limit_reports_failure() {
        let opts = QuadratureOptions {
            abs_tol: 1e-300,
            rel_tol: 0.0,
            max_subdivisions: 4,
        };
        let err = integrate(|x: f64| (1.0 / (x + 1e-6)).sin(), 0.0, 1.0, &opts).unwrap_err();
        assert!(err.0.value.is_finite());
    }

    #[test]
    fn single_precision() {
        let est = integrate_to_infinity(|v: f32| 1.0 / (1.0 + v * v), 1.0, &QuadratureOptions::default()).unwrap();
        assert!((est.value - std::f32::consts::FRAC_PI_4).abs() < 1e-5);
    }
}
