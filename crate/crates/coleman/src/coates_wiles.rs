//! Norm-compatible unit systems, their Coleman series, and the
//! Coates-Wiles homomorphisms
//! u -> (1/(j! pi^{mj})) (d_inv^j log g_u)(eta_m),
//! together with the chain value computed through the evaluation maps.
//! The chain route reads a t-coefficient of phi^{-m}, the direct route
//! differentiates and evaluates; comparing j times the latter with the
//! former is a two-route consistency check.

use std::sync::Arc;

use num_rational::Ratio;
use num_traits::Zero;
use once_cell::sync::OnceCell;

use crate::error::{Error, Result};
use crate::evaluation::EvalMaps;
use crate::lubin_tate::FormalGroup;
use crate::operators::OperatorContext;
use crate::padic::PadicElement;
use crate::series::TruncatedSeries;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    FromFixedSeries,
    UserSupplied,
}

/// A norm-compatible tower of units together with its interpolating
/// Coleman series.
pub struct UnitSystem {
    pub group: Arc<FormalGroup>,
    pub coleman_series: TruncatedSeries,
    /// u_n = g(eta_n) for n = 1..=n_max (index 0 holds u_1).
    pub levels: Vec<PadicElement>,
    pub provenance: Provenance,
    dlog: OnceCell<TruncatedSeries>,
}

impl UnitSystem {
    /// Builds the unit tower from a norm-fixed unit series: u_n := g(eta_n).
    /// Norm compatibility of the values is verified independently through
    /// the field norms of the tower.
    pub fn from_fixed_series(
        ops: &OperatorContext,
        g: &TruncatedSeries,
        n_max: u32,
        check_pdigits: i64,
    ) -> Result<UnitSystem> {
        let ng = ops.norm_apply(g)?;
        if !crate::operators::series_agree_graded(&ng, g, check_pdigits) {
            return Err(Error::NotNormFixed(
                "series is not fixed by the norm operator at the check precision".into(),
            ));
        }
        let group = ops.group.clone();
        let mut levels = Vec::with_capacity(n_max as usize);
        for n in 1..=n_max {
            let tower = group.tower(n)?;
            let gl = g.promote(&tower.field_ref());
            let u = gl.evaluate_with_tail(&tower.eta(), Ratio::zero())?;
            levels.push(u);
        }
        // independent check: field norms step down the tower
        for n in (2..=n_max).rev() {
            let tower = group.tower(n)?;
            let (_, nm) = tower.trace_norm_to(&levels[(n - 1) as usize], n - 1)?;
            let expect = &levels[(n - 2) as usize];
            let want = check_pdigits
                .min(nm.certified_pdigits())
                .min(expect.certified_pdigits());
            if nm.agreement_pdigits(expect) < want {
                return Err(Error::NormCompatibilityViolation(format!(
                    "norm from level {n} disagrees with level {} at {want} digits",
                    n - 1
                )));
            }
        }
        Ok(UnitSystem {
            group,
            coleman_series: g.clone(),
            levels,
            provenance: Provenance::FromFixedSeries,
        dlog: OnceCell::new(),
        })
    }

    /// Validates a user-supplied tower against an interpolating series
    /// (interpolation is checked, never solved for).
    pub fn from_user_tower(
        ops: &OperatorContext,
        g: &TruncatedSeries,
        levels: Vec<PadicElement>,
        check_pdigits: i64,
    ) -> Result<UnitSystem> {
        let sys = UnitSystem::from_fixed_series(ops, g, levels.len() as u32, check_pdigits)?;
        for (n, (have, expect)) in levels.iter().zip(sys.levels.iter()).enumerate() {
            let want = check_pdigits
                .min(have.certified_pdigits())
                .min(expect.certified_pdigits());
            if have.agreement_pdigits(expect) < want {
                return Err(Error::NormCompatibilityViolation(format!(
                    "supplied unit at level {} does not match the series value",
                    n + 1
                )));
            }
        }
        Ok(UnitSystem {
            provenance: Provenance::UserSupplied,
            levels,
            ..sys
        })
    }

    /// d_inv log g, the psi-fixed series attached to the system.
    pub fn dlog_series(&self) -> Result<TruncatedSeries> {
        if let Some(d) = self.dlog.get() {
            return Ok(d.clone());
        }
        let num = self.group.partial_inv(&self.coleman_series, 1);
        let d = num.mul(&self.coleman_series.invert()?);
        let _ = self.dlog.set(d.clone());
        Ok(d)
    }

    /// The Coates-Wiles value (1/(j! pi^{mj})) (d_inv^j log g)(eta_m),
    /// computed by the direct derivative route; the scalings are applied
    /// last.
    pub fn coates_wiles(&self, m: u32, j: u32) -> Result<PadicElement> {
        assert!(m >= 1 && j >= 1);
        let dlog = self.dlog_series()?;
        let deriv = self.group.partial_inv(&dlog, j - 1);
        let tower = self.group.tower(m)?;
        let value = deriv
            .promote(&tower.field_ref())
            .evaluate_with_tail(&tower.eta(), Ratio::zero())?;
        let mut fact = 1i64;
        for i in 2..=(j as i64) {
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

    /// The chain value ev_{m,j}(d_inv log g) through the definitional
    /// evaluation map (t-coefficient of phi^{-m}); equals j times the
    /// Coates-Wiles value.
    pub fn kato_lhs_via_chain(&self, ev: &EvalMaps, m: u32, j: u32) -> Result<PadicElement> {
        let dlog = self.dlog_series()?;
        ev.ev_mj_def(&dlog, m, j)
    }

    /// Both sides of the base-level trace formula for integral-unit towers:
    /// Tr_{L_1/L}(cw(1, j)) and (1/j!) (1 - pi^{-j}) (d_inv^j log g)(0).
    /// Errors if they disagree at the common certification; returns the
    /// common value.
    pub fn base_level_value(&self, j: u32, check_pdigits: i64) -> Result<PadicElement> {
        assert!(j >= 1);
        // integral-unit tower: g must be a unit power series
        match self.coleman_series.order() {
            Some(0) => {}
            other => {
                return Err(Error::RemarkM0Violation(format!(
                    "tower is not integral: series order {other:?}"
                )))
            }
        }
        let cw1 = self.coates_wiles(1, j)?;
        let tower = self.group.tower(1)?;
        let up = tower.embed_from_lower(&cw1);
        let (lhs, _) = tower.trace_norm_to(&up, 0)?;
        let dlog = self.dlog_series()?;
        let at_zero = self.group.partial_inv(&dlog, j - 1).value_at_zero()?;
        let mut fact = 1i64;
        for i in 2..=(j as i64) {
            fact *= i;
        }
        let pi_inv = self.group.pi.inverse()?;
        let one = PadicElement::from_i64(self.group.base_ref(), 1);
        let rhs = one
            .sub(&pi_inv.pow(j as u64))
            .mul(&at_zero)
            .mul(&one.mul_i64(fact).inverse()?);
        let want = check_pdigits
            .min(lhs.certified_pdigits())
            .min(rhs.certified_pdigits());
        if lhs.agreement_pdigits(&rhs) < want {
            return Err(Error::RemarkM0Violation(format!(
                "trace route and series route disagree: {} < {want} digits",
                lhs.agreement_pdigits(&rhs)
            )));
        }
        Ok(lhs)
    }

    /// The system with units sigma_a(u_n), whose Coleman series is
    /// g([a](Z)).
    pub fn twist(&self, ops: &OperatorContext, a: i64, check_pdigits: i64) -> Result<UnitSystem> {
        let endo = self
            .group
            .endomorphism_int(a, self.coleman_series.zcap)?;
        let twisted = self.coleman_series.substitute(&endo)?;
        UnitSystem::from_fixed_series(ops, &twisted, self.levels.len() as u32, check_pdigits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lubin_tate::FrobeniusPreset;
    use crate::padic::{FieldRef, LocalField};
    use crate::series::Var;

    fn setup(preset: FrobeniusPreset) -> (OperatorContext, EvalMaps) {
        let f = LocalField::qp(3, 150).unwrap();
        let g = FormalGroup::preset(f, preset).unwrap();
        let ops = OperatorContext::new(g.clone(), 100, 40).unwrap();
        let ev = EvalMaps::new(g, 10, 30);
        (ops, ev)
    }

    #[test]
    fn cyclotomic_unit_towers() {
        let (ops, _) = setup(FrobeniusPreset::GmHat);
        let fr = ops.base_ref();
        // g = 1+Z gives the tower of p-power roots of unity
        let g = TruncatedSeries::from_integers(fr.clone(), Var::Z, 0, &[1, 1], ops.zorder);
        let sys = UnitSystem::from_fixed_series(&ops, &g, 2, 12).unwrap();
        let t1 = ops.group.tower(1).unwrap();
        let zeta = t1.eta().add(&PadicElement::from_i64(t1.field_ref(), 1));
        assert!(sys.levels[0].agrees_to(&zeta, 12));
        // g = Z gives the tower eta_n itself (the cyclotomic units zeta-1)
        let z = TruncatedSeries::variable(fr.clone(), Var::Z, ops.zorder);
        let sys = UnitSystem::from_fixed_series(&ops, &z, 2, 12).unwrap();
        assert!(sys.levels[0].agrees_to(&t1.eta(), 12));
        let t2 = ops.group.tower(2).unwrap();
        assert!(sys.levels[1].agrees_to(&t2.eta(), 12));
    }

    #[test]
    fn cw_values_for_one_plus_z() {
        let (ops, _) = setup(FrobeniusPreset::GmHat);
        let fr = ops.base_ref();
        let g = TruncatedSeries::from_integers(fr.clone(), Var::Z, 0, &[1, 1], ops.zorder);
        let sys = UnitSystem::from_fixed_series(&ops, &g, 2, 12).unwrap();
        // d_inv log(1+Z) = 1: cw(m, 1) = pi^{-m}, cw(m, j>=2) = 0
        let pi_inv = ops.group.pi.inverse().unwrap();
        for m in 1..=2u32 {
            let v = sys.coates_wiles(m, 1).unwrap();
            let expect = ops
                .group
                .tower(m)
                .unwrap()
                .embed_from_lower(&pi_inv.pow(m as u64));
            let want = 10i64.min(v.certified_pdigits()).min(expect.certified_pdigits());
            assert!(want >= 8, "m={m}: only {want} certified digits");
            assert!(v.agreement_pdigits(&expect) >= want, "m={m}");
            for j in 2..=3u32 {
                let v = sys.coates_wiles(m, j).unwrap();
                match v.valuation() {
                    None => {}
                    Some(val) => assert!(
                        val >= Ratio::from_integer(8),
                        "cw({m},{j}) = {val:?} should vanish"
                    ),
                }
            }
        }
    }

    #[test]
    fn cw_fixture_for_z() {
        let (ops, _) = setup(FrobeniusPreset::GmHat);
        let fr = ops.base_ref();
        let z = TruncatedSeries::variable(fr.clone(), Var::Z, ops.zorder);
        let sys = UnitSystem::from_fixed_series(&ops, &z, 2, 12).unwrap();
        // cw(1,1) = (1/3) (1+eta_1)/eta_1
        let v = sys.coates_wiles(1, 1).unwrap();
        let t1 = ops.group.tower(1).unwrap();
        let eta = t1.eta();
        let one = PadicElement::from_i64(t1.field_ref(), 1);
        let expect = eta
            .add(&one)
            .mul(&eta.inverse().unwrap())
            .mul(&ops.group.pi.inverse().unwrap());
        assert!(v.agrees_to(&expect, 10));
    }

    #[test]
    fn trace_compatibility_of_cw_values() {
        for preset in [FrobeniusPreset::GmHat, FrobeniusPreset::Basic] {
            let (ops, _) = setup(preset);
            let fr = ops.base_ref();
            let z = TruncatedSeries::variable(fr.clone(), Var::Z, ops.zorder);
            let sys = UnitSystem::from_fixed_series(&ops, &z, 2, 12).unwrap();
            for j in 1..=3u32 {
                let lvl2 = sys.coates_wiles(2, j).unwrap();
                let t2 = ops.group.tower(2).unwrap();
                let (tr, _) = t2.trace_norm_to(&lvl2, 1).unwrap();
                let lvl1 = sys.coates_wiles(1, j).unwrap();
                let want = 8i64
                    .min(tr.certified_pdigits())
                    .min(lvl1.certified_pdigits());
                assert!(
                    tr.agreement_pdigits(&lvl1) >= want,
                    "j={j} preset={preset:?}: {} < {want}",
                    tr.agreement_pdigits(&lvl1)
                );
            }
        }
    }

    #[test]
    fn chain_equals_j_times_cw() {
        let (ops, ev) = setup(FrobeniusPreset::GmHat);
        let fr = ops.base_ref();
        for g in [
            TruncatedSeries::from_integers(fr.clone(), Var::Z, 0, &[1, 1], ops.zorder),
            TruncatedSeries::variable(fr.clone(), Var::Z, ops.zorder),
        ] {
            let sys = UnitSystem::from_fixed_series(&ops, &g, 2, 12).unwrap();
            for m in 1..=2u32 {
                for j in 1..=3u32 {
                    let chain = sys.kato_lhs_via_chain(&ev, m, j).unwrap();
                    let cw = sys.coates_wiles(m, j).unwrap().mul_i64(j as i64);
                    let want = 5i64
                        .min(chain.certified_pdigits())
                        .min(cw.certified_pdigits());
                    assert!(want >= 5, "not enough certified digits at m={m} j={j}");
                    assert!(
                        chain.agreement_pdigits(&cw) >= want,
                        "m={m} j={j}: {} < {want}",
                        chain.agreement_pdigits(&cw)
                    );
                }
            }
        }
    }

    #[test]
    fn base_level_formula_for_one_plus_z() {
        let (ops, _) = setup(FrobeniusPreset::GmHat);
        let fr = ops.base_ref();
        let g = TruncatedSeries::from_integers(fr.clone(), Var::Z, 0, &[1, 1], ops.zorder);
        let sys = UnitSystem::from_fixed_series(&ops, &g, 2, 12).unwrap();
        // both sides equal 1 - 1/p = 2/3
        let v = sys.base_level_value(1, 8).unwrap();
        let expect = PadicElement::from_i64(fr.clone(), 2)
            .mul(&PadicElement::from_i64(fr.clone(), 3).inverse().unwrap());
        assert!(v.agrees_to(&expect, 8));
    }

    #[test]
    fn galois_equivariance_of_cw() {
        // cw(sigma_a u, m, j) = a^j sigma_a(cw(u, m, j))
        let (ops, _) = setup(FrobeniusPreset::GmHat);
        let fr = ops.base_ref();
        let z = TruncatedSeries::variable(fr.clone(), Var::Z, ops.zorder);
        let sys = UnitSystem::from_fixed_series(&ops, &z, 1, 12).unwrap();
        let m = 1u32;
        let tower = ops.group.tower(m).unwrap();
        for a in [2i64] {
            let twisted = sys.twist(&ops, a, 10).unwrap();
            for j in 1..=2u32 {
                let lhs = twisted.coates_wiles(m, j).unwrap();
                let base = sys.coates_wiles(m, j).unwrap();
                let conj = tower.galois_apply(a as u64, &base).unwrap();
                let rhs = conj.mul(&PadicElement::from_i64(fr.clone(), a).pow(j as u64));
                let want = 6i64
                    .min(lhs.certified_pdigits())
                    .min(rhs.certified_pdigits());
                assert!(
                    lhs.agreement_pdigits(&rhs) >= want,
                    "a={a} j={j}: {} < {want}",
                    lhs.agreement_pdigits(&rhs)
                );
            }
        }
    }
}
