//! φ-divergences between discrete measures and the proximal-division
//! operators the scaling solver applies to each marginal.
//!
//! For a discrete pair (μ, ν) the divergence splits along the null set of ν:
//!
//! ```text
//! D_φ(μ, ν) = Σ_{ν_j > 0} ν_j φ(μ_j / ν_j) + φ'_∞ Σ_{ν_j = 0} μ_j
//! ```
//!
//! with `0 · ∞ = 0`. A [`DivergenceSpec`] carries a nonnegative `scale`
//! `t` so that `t·φ` is represented without a separate kind.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, RdroError, Result};

/// Relative tolerance used when testing two measures for equality under the
/// equality indicator.
pub const EQUALITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    /// φ(s) = s ln s − s + 1
    Kl,
    /// φ = ι_{1}: zero when μ = ν, +∞ otherwise.
    EqualityIndicator,
    /// φ(s) = (s − 1)²
    ChiSquared,
    /// φ(s) = |s − 1|
    TotalVariation,
}

/// Which closed form to use for the KL proximal division.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxdivVariant {
    /// `(ν/s)^{λ/(λ+ε)}`
    #[default]
    Standard,
    /// `(ν/s)^{λ/(λ+ε)} · e^{−ε/(λ+ε)}`
    Factored,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceSpec {
    pub kind: DivergenceKind,
    pub scale: f64,
}

impl DivergenceSpec {
    pub fn new(kind: DivergenceKind, scale: f64) -> Result<Self> {
        if !(scale >= 0.0) || scale.is_nan() {
            return Err(RdroError::Domain(format!(
                "divergence scale must be nonnegative, got {scale}"
            )));
        }
        Ok(Self { kind, scale })
    }

    pub fn kl(scale: f64) -> Result<Self> {
        Self::new(DivergenceKind::Kl, scale)
    }

    pub fn equality() -> Self {
        Self {
            kind: DivergenceKind::EqualityIndicator,
            scale: 1.0,
        }
    }

    /// Growth rate φ'_∞ of the unscaled entropy function.
    pub fn recession(&self) -> f64 {
        match self.kind {
            DivergenceKind::Kl | DivergenceKind::EqualityIndicator | DivergenceKind::ChiSquared => f64::INFINITY,
            DivergenceKind::TotalVariation => 1.0,
        }
    }

    /// Unscaled φ(s) for s ≥ 0.
    pub fn phi(&self, s: f64) -> f64 {
        match self.kind {
            DivergenceKind::Kl => {
                if s == 0.0 {
                    1.0
                } else {
                    s * s.ln() - s + 1.0
                }
            }
            DivergenceKind::EqualityIndicator => {
                if s == 1.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            DivergenceKind::ChiSquared => (s - 1.0) * (s - 1.0),
            DivergenceKind::TotalVariation => (s - 1.0).abs(),
        }
    }

    /// Contribution `ν φ(μ/ν)` of an atom with ν > 0, written to avoid the
    /// division where a closed form exists.
    fn atom_term(&self, mu: f64, nu: f64) -> f64 {
        match self.kind {
            DivergenceKind::Kl => {
                if mu == 0.0 {
                    nu
                } else {
                    mu * (mu / nu).ln() - mu + nu
                }
            }
            DivergenceKind::EqualityIndicator => {
                if (mu - nu).abs() <= EQUALITY_TOL * nu.max(1.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            DivergenceKind::ChiSquared => (mu - nu) * (mu - nu) / nu,
            DivergenceKind::TotalVariation => (mu - nu).abs(),
        }
    }
}

/// Evaluates `scale · D_φ(μ, ν)`.
pub fn eval_divergence(spec: &DivergenceSpec, mu: &[f64], nu: &[f64]) -> Result<f64> {
    ensure_len("divergence arguments", nu.len(), mu.len())?;
    if spec.scale == 0.0 {
        // 0 · ∞ = 0
        return Ok(0.0);
    }
    if spec.kind == DivergenceKind::EqualityIndicator {
        let equal = mu
            .iter()
            .zip(nu)
            .all(|(&m, &n)| (m - n).abs() <= EQUALITY_TOL * n.max(1.0));
        return Ok(if equal { 0.0 } else { f64::INFINITY });
    }
    let mut regular = 0.0;
    let mut singular = 0.0;
    for (&m, &n) in mu.iter().zip(nu) {
        if n > 0.0 {
            regular += spec.atom_term(m, n);
        } else {
            singular += m;
        }
    }
    let singular_part = if singular == 0.0 {
        0.0
    } else {
        spec.recession() * singular
    };
    Ok(spec.scale * (regular + singular_part))
}

/// Proximal division `prox^{KL}_{F/ε}(s) ⊘ s` for `F = scale · D_φ(·, reference)`.
pub fn proxdiv(spec: &DivergenceSpec, s: &[f64], reference: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    proxdiv_with(spec, s, reference, epsilon, ProxdivVariant::Standard)
}

pub fn proxdiv_with(
    spec: &DivergenceSpec,
    s: &[f64],
    reference: &[f64],
    epsilon: f64,
    variant: ProxdivVariant,
) -> Result<Vec<f64>> {
    ensure_len("proxdiv reference", s.len(), reference.len())?;
    if !(epsilon > 0.0) {
        return Err(RdroError::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    if let Some((j, v)) = s.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(RdroError::Domain(format!(
            "proxdiv argument s[{j}] = {v} is not positive"
        )));
    }
    if let Some((j, v)) = reference.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(RdroError::Domain(format!(
            "proxdiv reference[{j}] = {v} is not positive"
        )));
    }
    let log_s: Vec<f64> = s.iter().map(|v| v.ln()).collect();
    let log_ref: Vec<f64> = reference.iter().map(|v| v.ln()).collect();
    let mut out = vec![0.0; s.len()];
    proxdiv_log(spec, &log_s, &log_ref, epsilon, variant, &mut out);
    if spec.kind == DivergenceKind::EqualityIndicator {
        // exact division rather than exp(ln ν − ln s)
        for ((o, r), v) in out.iter_mut().zip(reference).zip(s) {
            *o = r / v;
        }
        return Ok(out);
    }
    Ok(out.into_iter().map(f64::exp).collect())
}

/// Log-domain proximal division: writes `ln proxdiv(exp(log_s))` into `out`.
pub(crate) fn proxdiv_log(
    spec: &DivergenceSpec,
    log_s: &[f64],
    log_ref: &[f64],
    epsilon: f64,
    variant: ProxdivVariant,
    out: &mut [f64],
) {
    let lambda = spec.scale;
    match spec.kind {
        DivergenceKind::EqualityIndicator => {
            for ((o, r), s) in out.iter_mut().zip(log_ref).zip(log_s) {
                *o = r - s;
            }
        }
        DivergenceKind::Kl => {
            let exponent = lambda / (lambda + epsilon);
            let shift = match variant {
                ProxdivVariant::Standard => 0.0,
                ProxdivVariant::Factored => -epsilon / (lambda + epsilon),
            };
            for ((o, r), s) in out.iter_mut().zip(log_ref).zip(log_s) {
                *o = exponent * (r - s) + shift;
            }
        }
        DivergenceKind::TotalVariation => {
            let cap = lambda / epsilon;
            for ((o, r), s) in out.iter_mut().zip(log_ref).zip(log_s) {
                *o = (r - s).clamp(-cap, cap);
            }
        }
        DivergenceKind::ChiSquared => {
            for ((o, r), s) in out.iter_mut().zip(log_ref).zip(log_s) {
                *o = chi_squared_log_prox(lambda, epsilon, *s, *r) - s;
            }
        }
    }
}

/// Solves `2λ(z/ν − 1) + ε ln(z/s) = 0` for `w = ln z` by safeguarded Newton.
fn chi_squared_log_prox(lambda: f64, epsilon: f64, log_s: f64, log_nu: f64) -> f64 {
    if lambda == 0.0 {
        return log_s;
    }
    let nu = log_nu.exp();
    let g = |w: f64| 2.0 * lambda * (w.exp() / nu - 1.0) + epsilon * (w - log_s);
    let dg = |w: f64| 2.0 * lambda * w.exp() / nu + epsilon;
    let (mut lo, mut hi) = if log_s < log_nu {
        (log_s, log_nu)
    } else {
        (log_nu, log_s)
    };
    let mut w = 0.5 * (lo + hi);
    for _ in 0..200 {
        let gw = g(w);
        if gw == 0.0 {
            return w;
        }
        if gw > 0.0 {
            hi = w;
        } else {
            lo = w;
        }
        let newton = w - gw / dg(w);
        w = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 * (1.0 + w.abs()) {
            break;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn kl() -> DivergenceSpec {
        DivergenceSpec::kl(1.0).unwrap()
    }

    #[test]
    fn kl_identical_is_zero() {
        assert_eq!(eval_divergence(&kl(), &[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn kl_hand_summed_value() {
        let expected = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        let got = eval_divergence(&kl(), &[0.5, 0.5], &[0.25, 0.75]).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(got, 0.143841, epsilon = 1e-6);
    }

    #[test]
    fn kl_singular_mass_is_infinite() {
        let v = eval_divergence(&kl(), &[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert_eq!(v, f64::INFINITY);
    }

    #[test]
    fn zero_times_infinity_is_zero() {
        // mass absent on the null set contributes nothing
        let v = eval_divergence(&kl(), &[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(v, 0.0);
        let zero = DivergenceSpec::kl(0.0).unwrap();
        assert_eq!(eval_divergence(&zero, &[0.5, 0.5], &[1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn total_variation_prices_singular_mass_at_one() {
        let tv = DivergenceSpec::new(DivergenceKind::TotalVariation, 1.0).unwrap();
        let v = eval_divergence(&tv, &[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(v, 0.5 + 0.5, epsilon = 1e-15);
    }

    #[test]
    fn equality_indicator() {
        let eq = DivergenceSpec::equality();
        assert_eq!(eval_divergence(&eq, &[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(eval_divergence(&eq, &[0.3, 0.7], &[0.4, 0.6]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            eval_divergence(&kl(), &[1.0], &[0.5, 0.5]),
            Err(RdroError::Dimension(_))
        ));
    }

    #[test]
    fn proxdiv_equality_divides() {
        let out = proxdiv(&DivergenceSpec::equality(), &[2.0, 4.0], &[1.0, 1.0], 0.1).unwrap();
        assert_eq!(out, vec![0.5, 0.25]);
    }

    #[test]
    fn proxdiv_kl_square_root_when_lambda_equals_epsilon() {
        let out = proxdiv(&DivergenceSpec::kl(0.3).unwrap(), &[1.0, 1.0], &[4.0, 1.0], 0.3).unwrap();
        assert_abs_diff_eq!(out[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(out[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn proxdiv_factored_variant_carries_extra_factor() {
        let spec = DivergenceSpec::kl(0.3).unwrap();
        let out = proxdiv_with(&spec, &[1.0, 1.0], &[4.0, 1.0], 0.3, ProxdivVariant::Factored).unwrap();
        assert_abs_diff_eq!(out[0], 2.0 * (-0.5f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn proxdiv_rejects_nonpositive_argument() {
        assert!(matches!(
            proxdiv(&kl(), &[1.0, 0.0], &[0.5, 0.5], 0.1),
            Err(RdroError::Domain(_))
        ));
        assert!(proxdiv(&kl(), &[1.0, -2.0], &[0.5, 0.5], 0.1).is_err());
    }

    #[test]
    fn proxdiv_zero_scale_frees_the_marginal() {
        let out = proxdiv(&DivergenceSpec::kl(0.0).unwrap(), &[3.0, 0.2], &[0.5, 0.5], 0.1).unwrap();
        assert_eq!(out, vec![1.0, 1.0]);
    }

    /// Direct minimization of `λ ν φ(z/ν) + ε (z ln(z/s) − z + s)` over z by
    /// golden section, divided by s.
    fn proxdiv_by_minimization(spec: &DivergenceSpec, s: f64, nu: f64, eps: f64) -> f64 {
        let obj = |z: f64| spec.scale * nu * spec.phi(z / nu) + eps * (z * (z / s).ln() - z + s);
        let (mut a, mut b) = (1e-12_f64.ln(), 50f64.ln());
        let gr = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..300 {
            let c = b - gr * (b - a);
            let d = a + gr * (b - a);
            if obj(c.exp()) < obj(d.exp()) {
                b = d;
            } else {
                a = c;
            }
        }
        (0.5 * (a + b)).exp() / s
    }

    #[test]
    fn proxdiv_matches_direct_minimization() {
        for kind in [
            DivergenceKind::Kl,
            DivergenceKind::ChiSquared,
            DivergenceKind::TotalVariation,
        ] {
            let spec = DivergenceSpec::new(kind, 0.7).unwrap();
            for &(s, nu) in &[(0.3, 0.5), (2.0, 0.4), (1.0, 1.0), (0.05, 0.9)] {
                let got = proxdiv(&spec, &[s], &[nu], 0.2).unwrap()[0];
                let want = proxdiv_by_minimization(&spec, s, nu, 0.2);
                assert!(
                    (got - want).abs() <= 1e-6 * want.max(1.0),
                    "{kind:?} s={s} nu={nu}: {got} vs {want}"
                );
            }
        }
    }

    fn measure(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.01f64..1.0, n)
    }

    proptest! {
        #[test]
        fn divergences_are_nonnegative(mu in measure(5), nu in measure(5)) {
            for kind in [DivergenceKind::Kl, DivergenceKind::ChiSquared, DivergenceKind::TotalVariation] {
                let spec = DivergenceSpec::new(kind, 1.0).unwrap();
                prop_assert!(eval_divergence(&spec, &mu, &nu).unwrap() >= -1e-14);
            }
        }

        #[test]
        fn divergences_are_midpoint_convex(
            mu1 in measure(4), nu1 in measure(4), mu2 in measure(4), nu2 in measure(4)
        ) {
            let mid = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect::<Vec<_>>();
            for kind in [DivergenceKind::Kl, DivergenceKind::ChiSquared, DivergenceKind::TotalVariation] {
                let spec = DivergenceSpec::new(kind, 1.0).unwrap();
                let d1 = eval_divergence(&spec, &mu1, &nu1).unwrap();
                let d2 = eval_divergence(&spec, &mu2, &nu2).unwrap();
                let dm = eval_divergence(&spec, &mid(&mu1, &mu2), &mid(&nu1, &nu2)).unwrap();
                prop_assert!(dm <= 0.5 * (d1 + d2) + 1e-12);
            }
        }

        #[test]
        fn scale_is_linear(mu in measure(4), nu in measure(4), t in 0.0f64..20.0) {
            for kind in [DivergenceKind::Kl, DivergenceKind::ChiSquared, DivergenceKind::TotalVariation] {
                let one = eval_divergence(&DivergenceSpec::new(kind, 1.0).unwrap(), &mu, &nu).unwrap();
                let scaled = eval_divergence(&DivergenceSpec::new(kind, t).unwrap(), &mu, &nu).unwrap();
                prop_assert!((scaled - t * one).abs() <= 1e-12 * (1.0 + t * one));
            }
        }

        #[test]
        fn equality_proxdiv_recovers_reference(s in measure(6), r in measure(6)) {
            let out = proxdiv(&DivergenceSpec::equality(), &s, &r, 0.5).unwrap();
            for ((si, oi), ri) in s.iter().zip(&out).zip(&r) {
                prop_assert!((si * oi - ri).abs() <= 2.0 * f64::EPSILON * ri);
            }
        }
    }
}
