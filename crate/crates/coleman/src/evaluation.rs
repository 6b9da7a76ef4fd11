//! The maps phi^{-m} into L_m[[t]] and the evaluation functionals ev_{m,j},
//! by both the defining route (substitute eta_m +_LT exp_LT(t/pi^m) and read
//! a t-coefficient) and the explicit derivative route (apply the invariant
//! derivative j-1 times and evaluate at eta_m). The two routes share only
//! the series primitives, so their agreement is a genuine consistency check.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_rational::Ratio;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::lubin_tate::FormalGroup;
use crate::padic::{FieldRef, PadicElement, TowerField};
use crate::series::{TruncatedSeries, Var};

pub struct EvalMaps {
    pub group: Arc<FormalGroup>,
    /// t-order of the target series.
    pub t_order: i64,
    /// Certification target for the composition tails.
    pub target_pdigits: i64,
    h_cache: Mutex<HashMap<u32, TruncatedSeries>>,
}

impl EvalMaps {
    pub fn new(group: Arc<FormalGroup>, t_order: i64, target_pdigits: i64) -> EvalMaps {
        EvalMaps {
            group,
            t_order,
            target_pdigits,
            h_cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn tower(&self, m: u32) -> Result<Arc<TowerField>> {
        self.group.tower(m)
    }

    /// exp_LT(t / pi^m) as a t-series over the base field.
    fn exp_scaled(&self, m: u32) -> Result<TruncatedSeries> {
        let exp = self.group.exp_series(self.t_order).relabel(Var::T);
        let pi_inv = self.group.pi.inverse()?;
        let mut coeffs = Vec::with_capacity(self.t_order as usize + 1);
        for k in 0..=self.t_order {
            let sc = pi_inv.pow((m as u64) * (k as u64));
            coeffs.push(exp.coeff(k).mul(&sc));
        }
        Ok(TruncatedSeries::from_coeffs(
            self.group.base_ref(),
            Var::T,
            0,
            coeffs,
            self.t_order,
        ))
    }

    /// h_m = eta_m +_LT exp_LT(t/pi^m) in L_m[[t]], the substitution series
    /// of phi^{-m}; its constant term is eta_m (asserted at build).
    pub fn h_series(&self, m: u32) -> Result<TruncatedSeries> {
        {
            let cache = self.h_cache.lock().unwrap();
            if let Some(h) = cache.get(&m) {
                return Ok(h.clone());
            }
        }
        let tower = self.tower(m)?;
        let eta = tower.eta();
        let t_of_eta = self.group.translation_series(&eta, self.t_order)?;
        let w = self.exp_scaled(m)?.promote(&tower.field_ref());
        let h = t_of_eta.relabel(Var::T).substitute(&w)?;
        // the constant term must be eta_m
        let c0 = h.coeff(0);
        if c0.agreement_pdigits(&eta) < 4 {
            return Err(Error::PrecisionExhausted(
                "substitution series lost its torsion constant term".into(),
            ));
        }
        let mut cache = self.h_cache.lock().unwrap();
        cache.insert(m, h.clone());
        Ok(h)
    }

    /// phi^{-m}(f) = f(eta_m +_LT exp_LT(t/pi^m)) in L_m[[t]].
    pub fn phi_inverse_m(&self, f: &TruncatedSeries, m: u32) -> Result<TruncatedSeries> {
        assert!(m >= 1);
        let h = self.h_series(m)?;
        let f_up = f.promote(&h.field);
        f_up.compose_small_constant(&h, self.target_pdigits)
    }

    /// The definitional route: the coefficient of t^{j-1} in
    /// pi^{-m} phi^{-m}(f).
    pub fn ev_mj_def(&self, f: &TruncatedSeries, m: u32, j: u32) -> Result<PadicElement> {
        assert!(m >= 1 && j >= 1);
        let series = self.phi_inverse_m(f, m)?;
        let c = series.coeff(j as i64 - 1);
        let pi_inv = self.group.pi.inverse()?;
        Ok(c.mul(&pi_inv.pow(m as u64)))
    }

    /// The explicit route: (1/((j-1)! pi^{mj})) (d_inv^{j-1} f)(eta_m).
    pub fn ev_mj_explicit(&self, f: &TruncatedSeries, m: u32, j: u32) -> Result<PadicElement> {
        assert!(m >= 1 && j >= 1);
        let tower = self.tower(m)?;
        let eta = tower.eta();
        let df = self.group.partial_inv(f, j - 1);
        let value = df
            .promote(&tower.field_ref())
            .evaluate_with_tail(&eta, Ratio::zero())?;
        let mut fact = 1i64;
        for i in 2..(j as i64) {
            fact *= i;
        }
        let scale = self
            .group
            .pi
            .pow((m as u64) * (j as u64))
            .mul_i64(fact)
            .inverse()?;
        Ok(value.mul(&scale))
    }

    /// Both sides of the commutation d_inv phi^{-m} = pi^{-m} phi^{-m} d_inv
    /// as t-series over L_m; returns the graded agreement in p-digits.
    pub fn invphi_commutation(&self, f: &TruncatedSeries, m: u32) -> Result<(TruncatedSeries, TruncatedSeries)> {
        let lhs = self.phi_inverse_m(f, m)?.derivative();
        let pi_inv = self.group.pi.inverse()?;
        let rhs = self
            .phi_inverse_m(&self.group.partial_inv(f, 1), m)?
            .scalar_mul(&pi_inv.pow(m as u64));
        Ok((lhs, rhs))
    }

    /// phi^{-m} on t-Laurent series: t maps to pi^{-m} t.
    pub fn phi_inverse_on_t(&self, g: &TruncatedSeries, m: u32) -> Result<TruncatedSeries> {
        assert!(g.var == Var::T);
        let pi_inv = self.group.pi.inverse()?;
        let mut coeffs = Vec::with_capacity((g.zcap - g.lowest + 1) as usize);
        for k in g.lowest..=g.zcap {
            let sc = pi_inv.pow_i64((m as i64) * k)?;
            let sc = match &g.field {
                FieldRef::Ext(t) => t.embed_from_lower(&sc),
                FieldRef::Base(_) => sc,
            };
            coeffs.push(g.coeff(k).mul(&sc));
        }
        Ok(TruncatedSeries::from_coeffs(
            g.field.clone(),
            Var::T,
            g.lowest,
            coeffs,
            g.zcap,
        ))
    }

    /// Constant-term identity behind the descent factorial: the constant
    /// term of phi^{-m}(d_inv^{j+1}(t^{j+1} f)) equals (j+1)! times the
    /// constant term of phi^{-m}(f), for t-Laurent f.
    pub fn descent_factorial_check(
        &self,
        f: &TruncatedSeries,
        m: u32,
        j: u32,
        digits: i64,
    ) -> Result<bool> {
        assert!(f.var == Var::T);
        let shifted = f.shift(j as i64 + 1);
        let mut d = shifted;
        for _ in 0..=(j as i64) {
            d = d.derivative();
        }
        let lhs = self.phi_inverse_on_t(&d, m)?.coeff(0);
        let mut fact = 1i64;
        for i in 2..=(j as i64 + 1) {
            fact *= i;
        }
        let rhs = self.phi_inverse_on_t(f, m)?.coeff(0).mul_i64(fact);
        Ok(lhs.agreement_pdigits(&rhs) >= digits.min(lhs.certified_pdigits()).min(rhs.certified_pdigits()))
    }
}

/// Checks numerically that the growth condition lim a_n eta_m^n = 0 holds on
/// the window tail (used to reject inputs outside the phi^{-m} domain).
pub fn tail_growth_ok(f: &TruncatedSeries, eta_val: Ratio<i64>, window: i64) -> bool {
    let start = (f.zcap - window).max(f.lowest);
    for k in start..=f.zcap {
        let c = f.coeff(k);
        if c.certified_pdigits() <= 0 {
            continue;
        }
        if let Some(v) = c.valuation() {
            if v + eta_val * Ratio::from_integer(k) < Ratio::zero() {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lubin_tate::FrobeniusPreset;
    use crate::padic::LocalField;

    fn setup(preset: FrobeniusPreset) -> (Arc<FormalGroup>, EvalMaps) {
        let f = LocalField::qp(3, 150).unwrap();
        let g = FormalGroup::preset(f, preset).unwrap();
        let ev = EvalMaps::new(g.clone(), 10, 30);
        (g, ev)
    }

    #[test]
    fn phi_inverse_of_t_is_scaled_t() {
        for preset in [FrobeniusPreset::GmHat, FrobeniusPreset::Basic] {
            let (g, ev) = setup(preset);
            // phi^{-m}(t_LT) = pi^{-m} t: the logarithm series composes to
            // a pure t-multiple with zero constant term
            let log = g.log_series(100);
            for m in 1..=2u32 {
                let out = ev.phi_inverse_m(&log, m).unwrap();
                let c0 = out.coeff(0);
                match c0.valuation() {
                    None => {}
                    Some(v) => assert!(
                        v >= Ratio::from_integer(8),
                        "constant term should vanish, found {v} (m={m}, {preset:?})"
                    ),
                }
                let pi_inv = g.pi.inverse().unwrap();
                let tower = g.tower(m).unwrap();
                let expect = tower.embed_from_lower(&pi_inv.pow(m as u64));
                let want = 8i64
                    .min(out.coeff(1).certified_pdigits())
                    .min(expect.certified_pdigits());
                assert!(
                    out.coeff(1).agreement_pdigits(&expect) >= want,
                    "linear term (m={m}, {preset:?})"
                );
                // higher coefficients vanish
                for k in 2..=4i64 {
                    if let Some(v) = out.coeff(k).valuation() {
                        assert!(
                            v >= Ratio::from_integer(
                                out.coeff(k).certified_pdigits().min(6)
                            ),
                            "t^{k} should vanish (m={m})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn phi_inverse_constants_and_z() {
        let (g, ev) = setup(FrobeniusPreset::GmHat);
        let fr = g.base_ref();
        // constants pass through
        let c = TruncatedSeries::constant(fr.clone(), Var::Z, fr.integer(7), 40);
        let out = ev.phi_inverse_m(&c, 1).unwrap();
        assert!(out.coeff(0).agrees_to(
            &g.tower(1).unwrap().embed_from_lower(&fr.integer(7)),
            20
        ));
        // phi^{-m}(Z) has constant term eta_m
        let z = TruncatedSeries::variable(fr.clone(), Var::Z, 40);
        for m in 1..=2u32 {
            let out = ev.phi_inverse_m(&z, m).unwrap();
            let eta = g.tower(m).unwrap().eta();
            let want = 8i64.min(out.coeff(0).certified_pdigits());
            assert!(out.coeff(0).agreement_pdigits(&eta) >= want, "m={m}");
        }
    }

    #[test]
    fn ev_fixture_dlog_z() {
        // f = d_inv log Z = (1+Z)/Z cyclotomic: ev_{1,1} = (1/3)(1+eta)/eta
        let (g, ev) = setup(FrobeniusPreset::GmHat);
        let fr = g.base_ref();
        let f = TruncatedSeries::from_integers(fr.clone(), Var::Z, -1, &[1, 1], 100);
        let v = ev.ev_mj_def(&f, 1, 1).unwrap();
        let t1 = g.tower(1).unwrap();
        let eta = t1.eta();
        let one = PadicElement::from_i64(t1.field_ref(), 1);
        let expect = eta
            .add(&one)
            .mul(&eta.inverse().unwrap())
            .mul(&g.pi.inverse().unwrap());
        let want = 8i64.min(v.certified_pdigits());
        assert!(v.agreement_pdigits(&expect) >= want);
        // the explicit route agrees
        let w = ev.ev_mj_explicit(&f, 1, 1).unwrap();
        assert!(v.agreement_pdigits(&w) >= 8);
    }

    #[test]
    fn two_routes_agree_on_psi_fixed_samples() {
        for preset in [FrobeniusPreset::GmHat, FrobeniusPreset::Basic] {
            let (g, ev) = setup(preset);
            let fr = g.base_ref();
            // d_inv log of norm-fixed units: Z and [2](Z)
            let z = TruncatedSeries::variable(fr.clone(), Var::Z, 100);
            let e2 = g.endomorphism_int(2, 100).unwrap();
            for s in [z, e2] {
                let dlog = g.partial_inv(&s, 1).mul(&s.invert().unwrap());
                for m in 1..=2u32 {
                    for j in 1..=4u32 {
                        let a = ev.ev_mj_def(&dlog, m, j).unwrap();
                        let b = ev.ev_mj_explicit(&dlog, m, j).unwrap();
                        let want = 5i64
                            .min(a.certified_pdigits())
                            .min(b.certified_pdigits());
                        assert!(
                            want >= 5,
                            "only {want} certified digits at m={m} j={j} ({preset:?})"
                        );
                        assert!(
                            a.agreement_pdigits(&b) >= want,
                            "m={m} j={j} ({preset:?}): {} < {want}",
                            a.agreement_pdigits(&b)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn commutation_and_descent() {
        let (g, ev) = setup(FrobeniusPreset::GmHat);
        let fr = g.base_ref();
        for f in [
            TruncatedSeries::variable(fr.clone(), Var::Z, 80),
            TruncatedSeries::monomial(fr.clone(), Var::Z, -1, fr.one(), 80),
        ] {
            let (lhs, rhs) = ev.invphi_commutation(&f, 1).unwrap();
            assert!(
                crate::operators::series_agree_graded(&lhs.truncate(6), &rhs.truncate(6), 6),
                "commutation for window [{}, {}]",
                f.lowest,
                f.zcap
            );
        }
        // descent factorial: f = 1 and f = t^{-1} + 1 + t
        let one_t = TruncatedSeries::constant(fr.clone(), Var::T, fr.one(), 8);
        assert!(ev.descent_factorial_check(&one_t, 1, 1, 10).unwrap());
        let lau = TruncatedSeries::from_integers(fr.clone(), Var::T, -1, &[1, 1, 1], 8);
        assert!(ev.descent_factorial_check(&lau, 1, 2, 10).unwrap());
        assert!(ev.descent_factorial_check(&lau, 2, 3, 10).unwrap());
    }
}
