//! Interference kernels of the stochastic-geometry model.
//!
//! Every kernel is Gaussian in the link distance: `η(r) = exp(-π r² c)` for a
//! rate `c` that does not depend on `r`. The `*_rate` functions return `c`;
//! the plain functions evaluate the kernel at a given `r`.

use crate::config::Direction;
use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_to_infinity, NotConverged, QuadResult, QuadratureOptions};
use crate::scalar::Real;

/// Shape parameter of the gamma approximation to the Poisson–Voronoi cell area.
pub const VORONOI_SHAPE: f64 = 3.5;

pub type KernelQuadrature<R> = QuadratureOptions<R>;

fn check<R: Real>(integral: &'static str, res: QuadResult<R>) -> Result<R> {
    match res {
        Ok(est) => Ok(est.value),
        Err(NotConverged(est)) => Err(Error::Quadrature {
            integral,
            estimate: est.value.to_f64_lossy(),
            error: est.error.to_f64_lossy(),
        }),
    }
}

/// Probability that an SAP serves `k` users, `k = 0..=max_users`.
///
/// Gamma-weighted Poisson (negative binomial) load with shape 3.5 and mean
/// `λ_u/λ_s`; the mass of `k >= max_users` is folded into the last entry.
pub fn cell_load_pmf<R: Real>(sap_density: R, user_density: R, max_users: usize) -> Vec<R> {
    let c = R::of(VORONOI_SHAPE);
    let ratio = user_density / sap_density / c;
    // log f(0) = -c ln(1 + ρ/c); log f(k) = log f(k-1) + ln((k-1+c)/k) + ln(ρ/c/(1+ρ/c))
    let log_step = ratio.ln() - ratio.ln_1p();
    let mut log_f = -c * ratio.ln_1p();
    let mut pmf = Vec::with_capacity(max_users + 1);
    let mut head = R::zero();
    for k in 0..max_users {
        let f = log_f.exp();
        pmf.push(f);
        head = head + f;
        let kk = R::of_usize(k + 1);
        log_f = log_f + ((kk - R::one() + c) / kk).ln() + log_step;
    }
    pmf.push((R::one() - head).max(R::zero()));
    pmf
}

/// Density of the distance to the nearest SAP, `2πλ_s r exp(-πλ_s r²)`.
pub fn distance_pdf<R: Real>(sap_density: R, r: R) -> R {
    let two_pi = R::of(2.0) * R::PI();
    two_pi * sap_density * r * (-R::PI() * sap_density * r * r).exp()
}

/// Radius beyond which the nearest-SAP density carries less than `1e-12` of mass.
pub fn truncation_radius<R: Real>(sap_density: R) -> R {
    (R::of(12.0) * R::LN_10() / (R::PI() * sap_density)).sqrt()
}

/// `∫_0^∞ g(r) f_r(r) dr`, truncated at [`truncation_radius`].
pub fn decondition_over_r<R, G>(g: G, sap_density: R, opts: &KernelQuadrature<R>) -> Result<R>
where
    R: Real,
    G: Fn(R) -> R,
{
    let r_max = truncation_radius(sap_density);
    check(
        "decondition_over_r",
        integrate(|r| g(r) * distance_pdf(sap_density, r), R::zero(), r_max, opts),
    )
}

/// `a^{2/α} ∫_{a^{-2/α}}^∞ dv / (1 + v^{α/2})`: the per-unit-density
/// interference rate of a PPP at effective threshold `a`.
pub fn ppp_rate<R: Real>(threshold: R, alpha: R, opts: &KernelQuadrature<R>) -> Result<R> {
    if threshold <= R::zero() {
        return Ok(R::zero());
    }
    let two_over_alpha = R::of(2.0) / alpha;
    let half_alpha = alpha / R::of(2.0);
    let lower = threshold.powf(-two_over_alpha);
    let integral = check(
        "eta1 tail integral",
        integrate_to_infinity(|v: R| (R::one() + v.powf(half_alpha)).recip(), lower, opts),
    )?;
    Ok(threshold.powf(two_over_alpha) * integral)
}

/// Rate `c` with `η1 = exp(-π r² c)`.
///
/// `lambda_dl` are DL-transmitting SAPs seen at threshold `threshold`;
/// `lambda_ul` are UL-transmitting users, whose power relative to the
/// serving link is scaled by `power_ratio = P_u/P_s`.
pub fn eta1_rate<R: Real>(
    lambda_dl: R,
    lambda_ul: R,
    threshold: R,
    alpha: R,
    power_ratio: R,
    opts: &KernelQuadrature<R>,
) -> Result<R> {
    let mut rate = R::zero();
    if lambda_dl > R::zero() {
        rate = rate
            + lambda_dl
                * ppp_rate(threshold, alpha, opts).map_err(|e| rename(e, "eta1 SAP-interference integral"))?;
    }
    if lambda_ul > R::zero() {
        rate = rate
            + lambda_ul
                * ppp_rate(threshold * power_ratio, alpha, opts)
                    .map_err(|e| rename(e, "eta1 user-interference integral"))?;
    }
    Ok(rate)
}

fn rename(e: Error, integral: &'static str) -> Error {
    match e {
        Error::Quadrature { estimate, error, .. } => Error::Quadrature {
            integral,
            estimate,
            error,
        },
        other => other,
    }
}

/// Probability that neither interferer field pushes the SIR below `threshold`
/// at link distance `r`.
pub fn eta1<R: Real>(
    lambda_dl: R,
    lambda_ul: R,
    threshold: R,
    r: R,
    alpha: R,
    power_ratio: R,
    opts: &KernelQuadrature<R>,
) -> Result<R> {
    let rate = eta1_rate(lambda_dl, lambda_ul, threshold, alpha, power_ratio, opts)?;
    Ok((-R::PI() * r * r * rate).exp())
}

/// `∫_1^∞ [1 - (χ_in/(1+θ v^-α) + 1 - χ_in)(χ_e/(1+T v^-α) + 1 - χ_e)] v dv`.
///
/// The bracket is evaluated as `a + b - ab` with `a = χ_in θ/(v^α + θ)` and
/// `b = χ_e T/(v^α + T)` so the tail does not cancel.
pub fn zeta<R: Real>(t_eff: R, theta_eff: R, chi_in: R, chi_e: R, alpha: R, opts: &KernelQuadrature<R>) -> Result<R> {
    let a_weight = chi_in * theta_eff;
    let b_weight = chi_e * t_eff;
    if a_weight <= R::zero() && b_weight <= R::zero() {
        return Ok(R::zero());
    }
    let integrand = |v: R| {
        let va = v.powf(alpha);
        let a = a_weight / (va + theta_eff);
        let b = b_weight / (va + t_eff);
        (a + b - a * b) * v
    };
    check("zeta", integrate_to_infinity(integrand, R::one(), opts))
}

/// Activity fractions of one direction, indexed by tier `k - 1` for `k = 1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassActivity<R> {
    pub interior: Vec<R>,
    pub edge: Vec<R>,
}

impl<R: Real> ClassActivity<R> {
    pub fn constant(tiers: usize, interior: R, edge: R) -> Self {
        Self {
            interior: vec![interior; tiers],
            edge: vec![edge; tiers],
        }
    }
}

/// Mean interference indicators of every tier plus the network constants the
/// joint kernel needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TierActivity<R> {
    pub dl: ClassActivity<R>,
    pub ul: ClassActivity<R>,
    pub dl_probability: R,
    pub ul_probability: R,
    /// `P_u / P_s`.
    pub power_ratio: R,
    pub pathloss_exponent: R,
    pub sap_density: R,
    /// `f(k)` for `k = 0..=K`.
    pub load_pmf: Vec<R>,
}

impl<R: Real> TierActivity<R> {
    pub fn tiers(&self) -> usize {
        self.load_pmf.len() - 1
    }

    pub fn class(&self, dir: Direction) -> &ClassActivity<R> {
        match dir {
            Direction::Downlink => &self.dl,
            Direction::Uplink => &self.ul,
        }
    }

    pub fn tx_probability(&self, dir: Direction) -> R {
        match dir {
            Direction::Downlink => self.dl_probability,
            Direction::Uplink => self.ul_probability,
        }
    }

    /// `λ_TX,N = λ_s p_TX Σ_k f(k) χ_TX,N,k` as (interior, edge).
    pub fn effective_densities(&self, dir: Direction) -> (R, R) {
        let class = self.class(dir);
        let scale = self.sap_density * self.tx_probability(dir);
        let weighted = |chi: &[R]| {
            chi.iter()
                .zip(&self.load_pmf[1..])
                .fold(R::zero(), |acc, (&c, &f)| acc + f * c)
        };
        (scale * weighted(&class.interior), scale * weighted(&class.edge))
    }
}

/// Small memo for ζ: saturated tiers share identical activity fractions.
struct ZetaMemo<R> {
    entries: Vec<(R, R, R)>,
}

impl<R: Real> ZetaMemo<R> {
    fn get(&mut self, chi_in: R, chi_e: R, compute: impl FnOnce() -> Result<R>) -> Result<R> {
        if let Some(&(_, _, z)) = self.entries.iter().find(|(i, e, _)| *i == chi_in && *e == chi_e) {
            return Ok(z);
        }
        let z = compute()?;
        if self.entries.len() < 64 {
            self.entries.push((chi_in, chi_e, z));
        }
        Ok(z)
    }
}

/// Rate `c` with `η2 = exp(-π r² c)`; thresholds are those of a DL receiver
/// (the UL terms are scaled by `P_u/P_s` internally).
pub fn eta2_rate<R: Real>(t: R, theta: R, activity: &TierActivity<R>, opts: &KernelQuadrature<R>) -> Result<R> {
    let alpha = activity.pathloss_exponent;
    let pr = activity.power_ratio;
    let mut dl_memo = ZetaMemo { entries: Vec::new() };
    let mut ul_memo = ZetaMemo { entries: Vec::new() };
    let mut sum = R::zero();
    for k in 0..activity.tiers() {
        let f = activity.load_pmf[k + 1];
        if f == R::zero() {
            continue;
        }
        let (di, de) = (activity.dl.interior[k], activity.dl.edge[k]);
        let (ui, ue) = (activity.ul.interior[k], activity.ul.edge[k]);
        let zd = if activity.dl_probability > R::zero() {
            dl_memo.get(di, de, || zeta(t, theta, di, de, alpha, opts))?
        } else {
            R::zero()
        };
        let zu = if activity.ul_probability > R::zero() {
            ul_memo.get(ui, ue, || zeta(t * pr, theta * pr, ui, ue, alpha, opts))?
        } else {
            R::zero()
        };
        sum = sum + f * (activity.dl_probability * zd + activity.ul_probability * zu);
    }
    Ok(R::of(2.0) * activity.sap_density * sum)
}

/// Joint probability that the edge sub-band clears `t` and the interior trial
/// clears `theta`, at link distance `r`.
pub fn eta2<R: Real>(t: R, theta: R, r: R, activity: &TierActivity<R>, opts: &KernelQuadrature<R>) -> Result<R> {
    let rate = eta2_rate(t, theta, activity, opts)?;
    Ok((-R::PI() * r * r * rate).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn opts() -> KernelQuadrature<f64> {
        KernelQuadrature::default()
    }

    /// Trapezoid rule on a uniform grid, the independent reference here.
    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
        h * (0.5 * (f(a) + f(b)) + inner)
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
        h / 3.0 * (f(a) + f(b) + inner)
    }

    #[test]
    fn pmf_sums_to_one() {
        for (ls, lu, k) in [(1e-4, 1e-2, 50), (1e-4, 1e-4, 50), (1e-3, 5e-3, 3), (1e-4, 1e-2, 1)] {
            let pmf = cell_load_pmf(ls, lu, k);
            assert_eq!(pmf.len(), k + 1);
            let total: f64 = pmf.iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "{total}");
            assert!(pmf.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn pmf_tail_absorption_at_reference_load() {
        // Oracle: Σ_{k>=50} of the negative binomial (shape 3.5, mean 100),
        // summed term by term in log space up to k = 20000.
        let c = 3.5f64;
        let p = 100.0 / c / (1.0 + 100.0 / c);
        let mut log_f = -c * (1.0 + 100.0 / c).ln();
        let mut tail = 0.0;
        for k in 0..20_000usize {
            if k >= 50 {
                tail += log_f.exp();
            }
            log_f += ((k as f64 + c) / (k as f64 + 1.0)).ln() + p.ln();
        }
        let pmf = cell_load_pmf(1e-4, 1e-2, 50);
        assert!((pmf[50] - tail).abs() < 1e-10, "{} vs {}", pmf[50], tail);
        assert!((pmf[50] - 0.832_541_680_185_372).abs() < 1e-9);
        assert!((pmf[0] - 7.111_266_115_151_549e-6).abs() < 1e-15);
    }

    #[test]
    fn pmf_survives_extreme_load() {
        let pmf: Vec<f64> = cell_load_pmf(1e-6, 1.0, 200);
        assert!(pmf.iter().all(|p| p.is_finite()));
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distance_pdf_properties() {
        assert_eq!(distance_pdf(1e-4, 0.0), 0.0);
        let total = decondition_over_r(|_| 1.0, 1e-4, &opts()).unwrap();
        assert!((total - 1.0).abs() < 1e-10);
        // median: exp(-π λ r²) = 1/2
        let median = (2f64.ln() / (PI * 1e-4)).sqrt();
        assert!((median - 46.971_863_934_982_57).abs() < 1e-9);
        let cdf = integrate(|r| distance_pdf(1e-4, r), 0.0, median, &opts()).unwrap().value;
        assert!((cdf - 0.5).abs() < 1e-10);
    }

    #[test]
    fn decondition_gaussian_identity() {
        let ls = 1e-4;
        for c in [0.5, 1.0, 2.0] {
            let v = decondition_over_r(|r| (-PI * ls * c * r * r).exp(), ls, &opts()).unwrap();
            assert!((v - 1.0 / (1.0 + c)).abs() < 1e-9, "c={c}: {v}");
        }
        assert_eq!(decondition_over_r(|_| 0.0, ls, &opts()).unwrap(), 0.0);
    }

    #[test]
    fn eta1_trivial_cases() {
        assert_eq!(eta1(0.0, 0.0, 2.0, 40.0, 3.8, 0.2, &opts()).unwrap(), 1.0);
        assert_eq!(eta1(1e-4, 1e-4, 2.0, 0.0, 3.8, 0.2, &opts()).unwrap(), 1.0);
    }

    #[test]
    fn eta1_alpha_four_arctan() {
        let ld = 3e-5;
        for t in [0.5f64, 1.0, 2.0, 10.0] {
            for r in [10.0, 50.0, 120.0] {
                let closed = (-PI * r * r * ld * t.sqrt() * t.sqrt().atan()).exp();
                let got = eta1(ld, 0.0, t, r, 4.0, 0.2, &opts()).unwrap();
                assert!((got - closed).abs() < 1e-9, "t={t} r={r}");
            }
        }
        // Simpson on [1, 100] plus the asymptotic series of the tail
        let head = simpson(|v| 1.0 / (1.0 + v * v), 1.0, 100.0, 200_000);
        let tail = 1e-2 - 1.0 / (3.0 * 1e6) + 1.0 / (5.0 * 1e10);
        assert!((head + tail - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn zeta_trivial_and_closed_form() {
        assert_eq!(zeta(1.0, 1.0, 0.0, 0.0, 4.0, &opts()).unwrap(), 0.0);
        assert_eq!(zeta(0.0, 0.0, 0.7, 0.3, 4.0, &opts()).unwrap(), 0.0);
        // ∫_1^∞ v/(v^4+1) dv = π/8
        let z = zeta(1.0, 1.0, 1.0, 0.0, 4.0, &opts()).unwrap();
        let oracle = trapezoid(|v| v / (v.powi(4) + 1.0), 1.0, 1e3, 4_000_000) + 0.5 / 1e6;
        assert!((z - PI / 8.0).abs() < 1e-9, "{z}");
        assert!((oracle - PI / 8.0).abs() < 1e-7);
    }

    fn single_tier(chi_dl_in: f64) -> TierActivity<f64> {
        TierActivity {
            dl: ClassActivity::constant(1, chi_dl_in, 0.0),
            ul: ClassActivity::constant(1, 0.0, 0.0),
            dl_probability: 1.0,
            ul_probability: 0.0,
            power_ratio: 0.2,
            pathloss_exponent: 4.0,
            sap_density: 1e-4,
            load_pmf: vec![0.0, 1.0],
        }
    }

    #[test]
    fn eta2_single_tier_composition() {
        let act = single_tier(1.0);
        let got = eta2(1.0, 1.0, 50.0, &act, &opts()).unwrap();
        let expected = (-2.0 * PI * 1e-4 * 2500.0 * (PI / 8.0)).exp();
        assert!((got - expected).abs() < 1e-12);
        assert_eq!(eta2(1.0, 1.0, 0.0, &act, &opts()).unwrap(), 1.0);
        assert_eq!(eta2(1.0, 1.0, 50.0, &single_tier(0.0), &opts()).unwrap(), 1.0);
    }

    #[test]
    fn kernels_are_deterministic() {
        let a = eta1(2e-5, 1e-5, 1.3, 37.0, 3.8, 0.2, &opts()).unwrap();
        let b = eta1(2e-5, 1e-5, 1.3, 37.0, 3.8, 0.2, &opts()).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let z1 = zeta(1.2, 0.9, 0.4, 0.3, 3.8, &opts()).unwrap();
        let z2 = zeta(1.2, 0.9, 0.4, 0.3, 3.8, &opts()).unwrap();
        assert_eq!(z1.to_bits(), z2.to_bits());
    }

    #[test]
    fn halving_tolerance_is_self_consistent() {
        let coarse = KernelQuadrature::<f64>::with_tolerances(1e-8, 1e-6);
        let fine = KernelQuadrature::<f64>::with_tolerances(5e-9, 5e-7);
        let pairs = [
            (
                zeta(1.26, 1.0, 0.3, 0.5, 3.8, &coarse).unwrap(),
                zeta(1.26, 1.0, 0.3, 0.5, 3.8, &fine).unwrap(),
            ),
            (
                ppp_rate(1.26, 3.8, &coarse).unwrap(),
                ppp_rate(1.26, 3.8, &fine).unwrap(),
            ),
        ];
        for (c, f) in pairs {
            assert!((c - f).abs() < 1e-8_f64.max(1e-6 * f.abs()));
        }
    }

    #[test]
    fn eta2_bounded() {
        let act = single_tier(0.8);
        for r in [0.0, 10.0, 100.0, 1000.0] {
            let v = eta2(2.0, 1.0, r, &act, &opts()).unwrap();
            assert!((0.0..=1.0).contains(&v));
            if r <= 100.0 {
                assert!(v > 0.0);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn eta1_non_increasing(ld in 0.0f64..1e-4, lu in 0.0f64..1e-4, t in 0.05f64..20.0, r in 0.0f64..150.0,
                                   bump in 1.0f64..3.0) {
                let o = opts();
                let base = eta1(ld, lu, t, r, 3.8, 0.2, &o).unwrap();
                prop_assert!(base > 0.0 && base <= 1.0);
                prop_assert!(eta1(ld * bump + 1e-7, lu, t, r, 3.8, 0.2, &o).unwrap() <= base + 1e-14);
                prop_assert!(eta1(ld, lu * bump + 1e-7, t, r, 3.8, 0.2, &o).unwrap() <= base + 1e-14);
                prop_assert!(eta1(ld, lu, t * bump, r, 3.8, 0.2, &o).unwrap() <= base + 1e-14);
                prop_assert!(eta1(ld, lu, t, r * bump + 1.0, 3.8, 0.2, &o).unwrap() <= base + 1e-14);
            }

            #[test]
            fn zeta_non_decreasing(t in 0.0f64..10.0, th in 0.0f64..10.0, ci in 0.0f64..1.0, ce in 0.0f64..0.5,
                                   bump in 1.0f64..2.0) {
                let o = opts();
                let base = zeta(t, th, ci, ce, 3.8, &o).unwrap();
                prop_assert!(base >= 0.0);
                let slack = 1e-9;
                prop_assert!(zeta(t, th, (ci * bump).min(1.0), ce, 3.8, &o).unwrap() >= base - slack);
                prop_assert!(zeta(t, th, ci, (ce * bump).min(1.0), 3.8, &o).unwrap() >= base - slack);
                prop_assert!(zeta(t * bump, th, ci, ce, 3.8, &o).unwrap() >= base - slack);
                prop_assert!(zeta(t, th * bump, ci, ce, 3.8, &o).unwrap() >= base - slack);
            }
        }
    }
}
