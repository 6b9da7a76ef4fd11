//! Named verification suites: each runs a family of identity checks at the
//! configured group and precision and reports one line per check. The CLI
//! dispatches on the suite names; the acceptance tests pin their own
//! thresholds independently.

use std::sync::Arc;

use num_rational::Ratio;
use num_traits::Zero;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coates_wiles::UnitSystem;
use crate::distributions::{
    self, characters, ell_factor, eval_character, gauss_sum, idempotent_on_evaluation,
    mellin_level_n, regulator_series, reg_twist_eval, tw_derivative_check, CrisLine, DistContext,
    EllMode, FiniteMeasure, ProductVector, SolvedFixedPoint,
};
use crate::error::{Error, Result};
use crate::evaluation::EvalMaps;
use crate::lubin_tate::{FormalGroup, FrobeniusPreset};
use crate::operators::{series_agree_graded, OperatorContext};
use crate::padic::{FieldRef, LocalField, PadicElement};
use crate::series::{power_coeff_recursion, TruncatedSeries, Var};

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<CheckReport>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone)]
pub struct RunParams {
    pub p: u64,
    pub preset: FrobeniusPreset,
    pub digits: i64,
    pub z_order: i64,
    pub t_order: i64,
    pub tower_depth: u32,
    pub seed: u64,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            p: 3,
            preset: FrobeniusPreset::GmHat,
            digits: 16,
            z_order: 48,
            t_order: 12,
            tower_depth: 2,
            seed: 42,
        }
    }
}

pub struct Session {
    pub params: RunParams,
    pub group: Arc<FormalGroup>,
    pub ops: OperatorContext,
}

impl Session {
    pub fn new(params: RunParams) -> Result<Session> {
        if params.tower_depth > 3 {
            return Err(Error::Config("tower depth is capped at 3".into()));
        }
        let modexp = params.digits + params.z_order + 32;
        let field = LocalField::qp(params.p, modexp)?;
        let group = FormalGroup::preset(field, params.preset)?;
        let ops = OperatorContext::new(group.clone(), params.z_order, params.digits + 16)?;
        Ok(Session { params, group, ops })
    }

    pub fn base_ref(&self) -> FieldRef {
        self.group.base_ref()
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.params.seed)
    }

    fn random_series(&self, rng: &mut ChaCha8Rng, lowest: i64, len: usize) -> TruncatedSeries {
        let fr = self.base_ref();
        let coeffs: Vec<PadicElement> = (0..len)
            .map(|_| {
                let v = (rng.next_u64() % 19) as i64 - 9;
                PadicElement::from_i64(fr.clone(), v)
            })
            .collect();
        TruncatedSeries::from_polynomial(fr, Var::Z, lowest, coeffs, self.params.z_order)
    }

    fn random_unit_series(&self, rng: &mut ChaCha8Rng, len: usize) -> TruncatedSeries {
        let fr = self.base_ref();
        let mut coeffs: Vec<PadicElement> = (0..len)
            .map(|_| {
                let v = (rng.next_u64() % 19) as i64 - 9;
                PadicElement::from_i64(fr.clone(), v)
            })
            .collect();
        coeffs[0] = PadicElement::from_i64(fr.clone(), 1 + (rng.next_u64() % 2) as i64);
        TruncatedSeries::from_polynomial(fr, Var::Z, 0, coeffs, self.params.z_order)
    }
}

fn check(name: &str, passed: bool, detail: String) -> CheckReport {
    CheckReport {
        name: name.into(),
        passed,
        detail,
    }
}

fn series_zero_at(s: &TruncatedSeries, digits: i64) -> bool {
    (s.lowest..=s.zcap).all(|k| {
        let c = s.coeff(k);
        let want = digits.min(c.certified_pdigits());
        if want <= 0 {
            return true;
        }
        match c.valuation() {
            None => true,
            Some(v) => v >= Ratio::from_integer(want),
        }
    })
}

// ---------------------------------------------------------------------
// operators
// ---------------------------------------------------------------------

pub fn suite_operators(session: &Session) -> Result<SuiteReport> {
    let ops = &session.ops;
    let digits = session.params.digits.min(10);
    let mut rng = session.rng();
    let mut checks = Vec::new();

    let mut proj_ok = true;
    let mut psiphi_ok = true;
    let mut phipsi_ok = true;
    let mut dinv_ok = true;
    for _ in 0..20 {
        let f1 = session.random_series(&mut rng, 0, 6);
        let f2 = session.random_series(&mut rng, -1, 8);
        let f3 = session.random_series(&mut rng, 0, 8);
        let lhs = ops.psi_apply(&ops.phi_apply(&f1)?.mul(&f2))?;
        let rhs = f1.mul(&ops.psi_apply(&f2)?);
        proj_ok &= series_agree_graded(&lhs, &rhs, digits);

        let qopi = session
            .base_ref()
            .integer(ops.q() as i64)
            .mul(&session.group.pi.inverse()?);
        let lhs = ops.psi_apply(&ops.phi_apply(&f3)?)?;
        let rhs = f3.scalar_mul(&qopi);
        psiphi_ok &= series_agree_graded(&lhs, &rhs, digits);

        let lhs = ops.phi_apply(&ops.psi_apply(&f2)?)?;
        let rhs = ops.trace_sum(&f2)?.scalar_mul(&session.group.pi.inverse()?);
        phipsi_ok &= series_agree_graded(&lhs, &rhs, digits);

        let lhs = ops.psi_apply(&session.group.partial_inv(&f2, 1))?;
        let rhs = session
            .group
            .partial_inv(&ops.psi_apply(&f2)?, 1)
            .scalar_mul(&session.group.pi);
        dinv_ok &= series_agree_graded(&lhs, &rhs, digits.min(8));
    }
    checks.push(check(
        "psi_projection_formula",
        proj_ok,
        "psi(phi(f1) f2) = f1 psi(f2), 20 random pairs".into(),
    ));
    checks.push(check(
        "psi_phi_scaled_identity",
        psiphi_ok,
        "psi(phi(f)) = (q/pi) f, 20 random power series".into(),
    ));
    checks.push(check(
        "phi_psi_trace_sum",
        phipsi_ok,
        "phi(psi(f)) = pi^{-1} torsion-translate sum, 20 random Laurent series".into(),
    ));
    checks.push(check(
        "psi_invariant_derivative_commutation",
        dinv_ok,
        "psi d_inv = pi d_inv psi, 20 random Laurent series".into(),
    ));

    // norm-fixed logarithmic derivatives are psi-fixed with pole <= 1
    let mut psione_ok = true;
    let z = TruncatedSeries::variable(session.base_ref(), Var::Z, session.params.z_order);
    for g in [
        z.clone(),
        session.group.endomorphism_int(2, session.params.z_order)?,
    ] {
        psione_ok &= ops.psi_one_sample_and_check(&g, digits.min(8)).is_ok();
    }
    checks.push(check(
        "norm_fixed_dlog_is_psi_fixed",
        psione_ok,
        "d_inv log of norm-fixed units is psi-fixed with pole at most 1".into(),
    ));

    // residual-field sweep
    let mut residual_ok = true;
    let mut rng2 = session.rng();
    for _ in 0..20 {
        let lo = -((rng2.next_u64() % 4) as i64);
        let f = session.random_series(&mut rng2, lo, 6);
        let rep = ops.residual_valuation_checks(&f)?;
        residual_ok &= rep.violations.is_empty();
    }
    checks.push(check(
        "residual_shift_and_valuation",
        residual_ok,
        "mod-pi shift congruence and valuation bound, 20 random series".into(),
    ));

    // decomposition route agrees with the translate route
    let mut decomp_ok = true;
    for _ in 0..5 {
        let f = session.random_series(&mut rng, 0, 8);
        let a = ops.psi_apply(&f)?;
        let b = ops.psi_apply_decomposed(&f)?;
        decomp_ok &= series_agree_graded(&a, &b, digits.min(8));
    }
    checks.push(check(
        "psi_two_routes",
        decomp_ok,
        "translate route and phi-basis digit route agree".into(),
    ));

    Ok(SuiteReport {
        suite: "operators".into(),
        checks,
    })
}

// ---------------------------------------------------------------------
// series machinery
// ---------------------------------------------------------------------

pub fn suite_series(session: &Session) -> Result<SuiteReport> {
    let fr = session.base_ref();
    let mut checks = Vec::new();
    let mut rng = session.rng();

    // power-coefficient recursion versus brute force
    let h = TruncatedSeries::from_integers(fr.clone(), Var::T, 0, &[3, 1, 4, 1, 5, 9, 2, 6], 16);
    let mut pw = TruncatedSeries::constant(fr.clone(), Var::T, fr.one(), 16);
    let mut rec_ok = true;
    for n in 0..=15u64 {
        if n > 0 {
            pw = pw.mul(&h);
        }
        for i in 0..=15i64 {
            let c = power_coeff_recursion(&h, n, i)?;
            rec_ok &= c.agreement_pdigits(&pw.coeff(i)) >= 20;
        }
    }
    checks.push(check(
        "power_coefficient_recursion",
        rec_ok,
        "recursion equals brute-force powers for i, n <= 15".into(),
    ));

    // coefficient growth bound |c_{i,n}| <= C_i |b_0^n|
    let v0 = Ratio::from_integer(1); // v(3)
    let mut bound_ok = true;
    let mut gamma: Vec<Ratio<i64>> = vec![Ratio::zero()];
    for i in 1..=15i64 {
        let mut best: Option<Ratio<i64>> = None;
        for k in 1..=i {
            if let Some(vb) = h.coeff(k).valuation() {
                let cand = vb + gamma[(i - k) as usize];
                best = Some(match best {
                    None => cand,
                    Some(b) => b.min(cand),
                });
            }
        }
        let mut vp_i = 0i64;
        let mut ii = i;
        while ii % session.params.p as i64 == 0 {
            vp_i += 1;
            ii /= session.params.p as i64;
        }
        gamma.push(best.unwrap() - Ratio::from_integer(vp_i) - v0);
    }
    let mut pw = TruncatedSeries::constant(fr.clone(), Var::T, fr.one(), 16);
    for n in 0..=30u64 {
        if n > 0 {
            pw = pw.mul(&h);
        }
        for i in 0..=15i64 {
            let c = pw.coeff(i);
            if let Some(v) = c.valuation() {
                bound_ok &= v >= gamma[i as usize] + v0 * Ratio::from_integer(n as i64);
            }
        }
    }
    checks.push(check(
        "power_coefficient_bound",
        bound_ok,
        "v(c_{i,n}) >= V_i + n v(b_0) for i <= 15, n <= 30".into(),
    ));

    // composition is a ring homomorphism in the outer argument
    let hsmall = TruncatedSeries::from_integers(fr.clone(), Var::T, 0, &[3, 2, 1], 10);
    let mut hom_ok = true;
    for _ in 0..5 {
        let f1 = session.random_series(&mut rng, 0, 6);
        let f2 = session.random_series(&mut rng, 0, 6);
        let lhs = f1.mul(&f2).compose_small_constant(&hsmall, 24)?;
        let rhs = f1
            .compose_small_constant(&hsmall, 24)?
            .mul(&f2.compose_small_constant(&hsmall, 24)?);
        hom_ok &= series_agree_graded(&lhs, &rhs, 10);
    }
    checks.push(check(
        "composition_multiplicative",
        hom_ok,
        "(f1 f2)(h) = f1(h) f2(h) at matching truncation".into(),
    ));

    // residue of derivatives and the product rule
    let mut res_ok = true;
    for _ in 0..20 {
        let f = session.random_series(&mut rng, -2, 8);
        let g = session.random_series(&mut rng, -1, 8);
        let s = f.mul(&g.derivative()).add(&f.derivative().mul(&g));
        res_ok &= s.residue().is_zero_at_precision()
            || s.residue().valuation().map(|v| v >= Ratio::from_integer(20)).unwrap_or(true);
    }
    checks.push(check(
        "residue_of_derivative",
        res_ok,
        "res(f g' + f' g) = 0, 20 random Laurent pairs".into(),
    ));

    // reversion round trip
    let mut rev_ok = true;
    for _ in 0..5 {
        let mut s = session.random_series(&mut rng, 1, 6).truncate(12);
        // force unit slope
        s = s.add(&TruncatedSeries::variable(fr.clone(), Var::Z, 12));
        if s.order() != Some(1) {
            continue;
        }
        if s.coeff(1).valuation() != Some(Ratio::zero()) {
            continue;
        }
        let r = match s.reversion() {
            Ok(r) => r,
            Err(_) => continue,
        };
        let back = r.reversion()?;
        rev_ok &= series_agree_graded(&back, &s, 8);
    }
    checks.push(check(
        "reversion_involution",
        rev_ok,
        "reversion(reversion(f)) = f for unit-slope series".into(),
    ));

    Ok(SuiteReport {
        suite: "series".into(),
        checks,
    })
}

// ---------------------------------------------------------------------
// coleman
// ---------------------------------------------------------------------

pub fn suite_coleman(session: &Session) -> Result<SuiteReport> {
    let ops = &session.ops;
    let fr = session.base_ref();
    let mut checks = Vec::new();
    let digits = session.params.digits.min(8);

    let z = TruncatedSeries::variable(fr.clone(), Var::Z, session.params.z_order);
    let nz = ops.norm_apply(&z)?;
    checks.push(check(
        "norm_fixes_coordinate",
        series_agree_graded(&nz, &z, digits),
        "N(Z) = Z".into(),
    ));

    let g0 = TruncatedSeries::from_integers(fr.clone(), Var::Z, 0, &[1, 1, 3], session.params.z_order);
    let fixed = ops.norm_fixed_iterate(&g0, 32, digits)?;
    let nfixed = ops.norm_apply(&fixed)?;
    checks.push(check(
        "norm_iteration_stabilizes",
        series_agree_graded(&nfixed, &fixed, digits),
        "norm iterates of a unit series stabilize within the budget".into(),
    ));

    let depth = session.params.tower_depth.min(2);
    let sys = UnitSystem::from_fixed_series(ops, &fixed, depth, digits)?;
    let mut trace_ok = true;
    if depth >= 2 {
        for j in 1..=3u32 {
            let lvl2 = sys.coates_wiles(2, j)?;
            let t2 = session.group.tower(2)?;
            let (tr, _) = t2.trace_norm_to(&lvl2, 1)?;
            let lvl1 = sys.coates_wiles(1, j)?;
            let want = digits
                .min(tr.certified_pdigits())
                .min(lvl1.certified_pdigits())
                .min(5);
            trace_ok &= want >= 3 && tr.agreement_pdigits(&lvl1) >= want;
        }
    }
    checks.push(check(
        "cw_trace_compatibility",
        trace_ok,
        "trace of level-2 values equals level-1 values, j <= 3".into(),
    ));

    let ev = EvalMaps::new(session.group.clone(), session.params.t_order, session.params.digits + 8);
    let mut chain_ok = true;
    for m in 1..=depth.min(2) {
        for j in 1..=3u32 {
            let chain = sys.kato_lhs_via_chain(&ev, m, j)?;
            let cw = sys.coates_wiles(m, j)?.mul_i64(j as i64);
            let want = 5i64
                .min(chain.certified_pdigits())
                .min(cw.certified_pdigits());
            chain_ok &= want >= 3 && chain.agreement_pdigits(&cw) >= want;
        }
    }
    checks.push(check(
        "chain_value_equals_j_times_cw",
        chain_ok,
        "coefficient route equals j times the derivative route".into(),
    ));

    let base_ok = sys.base_level_value(1, digits.min(5)).is_ok();
    checks.push(check(
        "base_level_two_routes",
        base_ok,
        "trace to the ground field equals the origin formula".into(),
    ));

    Ok(SuiteReport {
        suite: "coleman".into(),
        checks,
    })
}

// ---------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------

pub fn suite_eval(session: &Session) -> Result<SuiteReport> {
    let fr = session.base_ref();
    let mut checks = Vec::new();
    let ev = EvalMaps::new(session.group.clone(), session.params.t_order, session.params.digits + 8);
    let depth = session.params.tower_depth.min(2);

    let mut two_routes = true;
    let z = TruncatedSeries::variable(fr.clone(), Var::Z, session.params.z_order);
    let e2 = session.group.endomorphism_int(2, session.params.z_order)?;
    for s in [z.clone(), e2] {
        let dlog = session.group.partial_inv(&s, 1).mul(&s.invert()?);
        for m in 1..=depth {
            for j in 1..=4u32 {
                let a = ev.ev_mj_def(&dlog, m, j)?;
                let b = ev.ev_mj_explicit(&dlog, m, j)?;
                let want = 5i64.min(a.certified_pdigits()).min(b.certified_pdigits());
                two_routes &= want >= 3 && a.agreement_pdigits(&b) >= want;
            }
        }
    }
    checks.push(check(
        "ev_two_routes",
        two_routes,
        "coefficient route equals the derivative route, m <= 2, j <= 4".into(),
    ));

    let log = session.group.log_series(session.params.z_order);
    let mut tlt_ok = true;
    for m in 1..=depth {
        let out = ev.phi_inverse_m(&log, m)?;
        tlt_ok &= series_zero_at(&out.truncate(0), 6);
        let pi_inv = session.group.pi.inverse()?;
        let tower = session.group.tower(m)?;
        let expect = tower.embed_from_lower(&pi_inv.pow(m as u64));
        let want = 6i64.min(out.coeff(1).certified_pdigits());
        tlt_ok &= out.coeff(1).agreement_pdigits(&expect) >= want;
    }
    checks.push(check(
        "phi_inverse_scales_t",
        tlt_ok,
        "the logarithm maps to pi^{-m} t with zero constant term".into(),
    ));

    let mut commute_ok = true;
    for f in [
        TruncatedSeries::variable(fr.clone(), Var::Z, session.params.z_order),
        TruncatedSeries::monomial(fr.clone(), Var::Z, -1, fr.one(), session.params.z_order),
    ] {
        let (lhs, rhs) = ev.invphi_commutation(&f, 1)?;
        commute_ok &= series_agree_graded(&lhs.truncate(6), &rhs.truncate(6), 6);
    }
    checks.push(check(
        "invariant_derivative_commutation",
        commute_ok,
        "d/dt phi^{-m} = pi^{-m} phi^{-m} d_inv".into(),
    ));

    let mut descent_ok = true;
    let mut rng = session.rng();
    for j in 0..=3u32 {
        let coeffs: Vec<i64> = (0..5).map(|_| (rng.next_u64() % 9) as i64 - 4).collect();
        let f = TruncatedSeries::from_integers(fr.clone(), Var::T, -1, &coeffs, 8);
        descent_ok &= ev.descent_factorial_check(&f, 1, j, 8)?;
    }
    checks.push(check(
        "descent_factorial",
        descent_ok,
        "constant terms match with the factorial factor, j <= 3".into(),
    ));

    Ok(SuiteReport {
        suite: "eval".into(),
        checks,
    })
}

// ---------------------------------------------------------------------
// distributions
// ---------------------------------------------------------------------

pub fn suite_distributions(session: &Session) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    if session.params.preset != FrobeniusPreset::GmHat {
        return Err(Error::NotCyclotomic(
            "the distribution suite needs the multiplicative preset".into(),
        ));
    }
    let ctx = DistContext::new(session.group.clone())?;
    let ops = &session.ops;
    let p = session.params.p;
    let mut rng = session.rng();

    // Gauss-sum conjugate identity over all characters, m <= 2
    let mut gauss_ok = true;
    for n in 1..=2u32 {
        let chars = characters(&ctx, n)?;
        for rho in chars.iter().filter(|c| c.conductor >= 1) {
            let tau = gauss_sum(&ctx, rho)?;
            let inv = chars
                .iter()
                .find(|c| {
                    (1..p.pow(n)).filter(|a| a % p != 0).all(|a| {
                        c.value(a)
                            .unwrap()
                            .mul(&rho.value(a).unwrap())
                            .agrees_to(&PadicElement::from_i64(tau.field().clone(), 1), 8)
                    })
                })
                .expect("inverse character");
            let tau2 = gauss_sum(&ctx, inv)?;
            let minus_one = p.pow(n) - 1;
            let lhs = tau.mul(&tau2).mul(&rho.value(minus_one)?);
            let qpow = PadicElement::from_i64(lhs.field().clone(), p as i64)
                .pow(rho.conductor as u64);
            gauss_ok &= lhs.agrees_to(&qpow, 10);
        }
    }
    checks.push(check(
        "gauss_conjugate_product",
        gauss_ok,
        "tau(rho) tau(rho^{-1}) rho(-1) = q^{a(rho)}, all characters m <= 2".into(),
    ));

    // evaluation lemma on random level-2 measures at conductor-2 characters
    let mut eval_ok = true;
    let t2 = ctx.tower(2)?;
    let chars2 = characters(&ctx, 2)?;
    for _ in 0..10 {
        let mut vals = std::collections::BTreeMap::new();
        for a in (1..p.pow(2)).filter(|a| a % p != 0) {
            vals.insert(
                a,
                PadicElement::from_i64(t2.field_ref(), (rng.next_u64() % 19) as i64 - 9),
            );
        }
        let mu = FiniteMeasure::from_values(2, vals, "rand");
        let rep = mellin_level_n(&ctx, &mu)?;
        for rho in chars2.iter().filter(|c| c.conductor == 2) {
            let lhs = eval_character(&mu, rho, 0)?;
            let proj = idempotent_on_evaluation(&ctx, rho, &rep, 2)?;
            let tau_inv = gauss_sum(&ctx, rho)?.inverse()?;
            let rhs = proj.mul(&tau_inv).mul_i64(t2.degree as i64);
            let want = 10i64.min(lhs.certified_pdigits()).min(rhs.certified_pdigits());
            eval_ok &= want >= 5 && lhs.agreement_pdigits(&rhs) >= want;
        }
    }
    checks.push(check(
        "measure_evaluation_lemma",
        eval_ok,
        "character value equals the Gauss-normalized projected evaluation".into(),
    ));

    // derivative/twist identity
    let mut tw_ok = true;
    for _ in 0..5 {
        let mut vals = std::collections::BTreeMap::new();
        for a in (1..p.pow(2)).filter(|a| a % p != 0) {
            vals.insert(
                a,
                PadicElement::from_i64(t2.field_ref(), (rng.next_u64() % 19) as i64 - 9),
            );
        }
        let mu = FiniteMeasure::from_values(2, vals, "tw");
        tw_ok &= tw_derivative_check(&ctx, &mu, 12)?;
    }
    checks.push(check(
        "twist_derivative",
        tw_ok,
        "d_inv of the Mellin image is the Mellin image of a mu(a)".into(),
    ));

    // the descent diagram on solved fixed points
    let mut evn_ok = true;
    for alpha in [2i64, 1 + p as i64] {
        let mut vals = std::collections::BTreeMap::new();
        for a in (1..p.pow(2)).filter(|a| a % p != 0) {
            vals.insert(
                a,
                PadicElement::from_i64(t2.field_ref(), (rng.next_u64() % 19) as i64 - 9),
            );
        }
        let mu = FiniteMeasure::from_values(2, vals, "evn");
        let line = CrisLine::new(PadicElement::from_i64(ctx.base_ref(), alpha), "a");
        let x = SolvedFixedPoint::new(&ctx, &mu, &line)?;
        let y = x.q_ev(&ctx, 2)?;
        for rho in &chars2 {
            let lhs = distributions::theta_component(&ctx, &line, &y, rho)?;
            let rhs = eval_character(&mu, rho, 0)?;
            let want = 8i64.min(lhs.certified_pdigits()).min(rhs.certified_pdigits());
            evn_ok &= want >= 4 && lhs.agreement_pdigits(&rhs) >= want;
        }
    }
    checks.push(check(
        "descent_diagram",
        evn_ok,
        "theta of the scaled evaluation recovers the measure components".into(),
    ));

    // theta level compatibility
    let x_el = t2.eta().add(&PadicElement::from_i64(t2.field_ref(), 5));
    let x = ProductVector::from_element(&ctx, &x_el, 2)?;
    let line = CrisLine::new(PadicElement::from_i64(ctx.base_ref(), 2), "a2");
    let traced = x.trace_to(&ctx, 1);
    let chars1 = characters(&ctx, 1)?;
    let mut compat_ok = true;
    for rho1 in &chars1 {
        let infl = chars2
            .iter()
            .find(|c| {
                (1..p.pow(2)).filter(|a| a % p != 0).all(|a| {
                    c.value(a)
                        .unwrap()
                        .agrees_to(&t2.embed_from_lower(&rho1.value(a % p).unwrap()), 8)
                })
            })
            .expect("inflation");
        let top = distributions::theta_component(&ctx, &line, &x, infl)?;
        let bottom = distributions::theta_component(&ctx, &line, &traced, rho1)?;
        compat_ok &= top.agrees_to(&t2.embed_from_lower(&bottom), 8);
    }
    checks.push(check(
        "theta_level_compatibility",
        compat_ok,
        "projection after theta equals theta after trace".into(),
    ));

    // Gamma-factor table
    let mut ell_ok = true;
    for k in 0..=6u32 {
        for j in -10i64..=10 {
            ell_ok &= ell_factor(k, j, EllMode::Analytic) == ell_factor(k, j, EllMode::Product);
        }
    }
    checks.push(check(
        "ell_factor_modes",
        ell_ok,
        "case-split values equal the operator products, k <= 6, |j| <= 10".into(),
    ));

    // regulator two-route components
    let z = TruncatedSeries::variable(ctx.base_ref(), Var::Z, session.params.z_order);
    let reg = regulator_series(ops, &z, 8)?;
    let chars1 = characters(&ctx, 1)?;
    let mut reg_ok = true;
    for rho in chars1.iter().filter(|c| c.conductor == 1) {
        for j in 1..=2u32 {
            let (lhs, rhs) = reg_twist_eval(&ctx, ops, &reg, rho, j)?;
            let want = 6i64.min(lhs.certified_pdigits()).min(rhs.certified_pdigits());
            reg_ok &= want >= 3 && lhs.agreement_pdigits(&rhs) >= want;
        }
    }
    checks.push(check(
        "regulator_character_components",
        reg_ok,
        "evaluation route equals the twisted-sum route at conductor 1".into(),
    ));

    Ok(SuiteReport {
        suite: "distributions".into(),
        checks,
    })
}

// ---------------------------------------------------------------------
// residue
// ---------------------------------------------------------------------

pub fn suite_residue(session: &Session) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    if session.params.preset != FrobeniusPreset::GmHat {
        return Err(Error::NotCyclotomic(
            "the residue suite needs the multiplicative preset".into(),
        ));
    }
    let ctx = DistContext::new(session.group.clone())?;
    let fr = session.base_ref();

    let rank = crate::residue::pairing_gram_rank(fr.clone(), 10, 5)?;
    checks.push(check(
        "pairing_gram_rank",
        rank == 12,
        format!("Gram rank {rank} on the monomial window"),
    ));

    let g = TruncatedSeries::from_integers(fr.clone(), Var::Z, 0, &[1, 1], session.params.z_order);
    let sys = UnitSystem::from_fixed_series(&session.ops, &g, session.params.tower_depth.min(2), 6)?;
    let a = PadicElement::from_i64(fr.clone(), 1 + session.params.p as i64);
    let v1 = crate::residue::iwasawa_rhs(&ctx, &a, &sys, 1, 1)?;
    let ok1 = v1.valuation().map(|v| v >= Ratio::zero()).unwrap_or(true);
    let v2 = crate::residue::iwasawa_rhs(&ctx, &a, &sys, 2, 1)?;
    let want = 5i64.min(v1.certified_pdigits()).min(v2.certified_pdigits());
    checks.push(check(
        "reciprocity_rhs_integral_and_stable",
        ok1 && v1.agreement_pdigits(&v2) >= want,
        "the normalized trace value is integral and level-stable".into(),
    ));

    let mut scal_ok = true;
    for m in 1..=2u32 {
        let c = PadicElement::from_i64(fr.clone(), 1 + (session.params.p as i64).pow(m));
        let sc = crate::residue::invariant_scalar(fr.clone(), m, &c)?;
        scal_ok &= sc.valuation() == Some(Ratio::zero());
    }
    checks.push(check(
        "invariant_scalar_unit",
        scal_ok,
        "log chi(gamma_m)/p^m is a unit for m <= 2".into(),
    ));

    Ok(SuiteReport {
        suite: "residue".into(),
        checks,
    })
}

/// Runs a named suite.
pub fn run_suite(session: &Session, name: &str) -> Result<SuiteReport> {
    match name {
        "operators" => suite_operators(session),
        "series" => suite_series(session),
        "coleman" => suite_coleman(session),
        "eval" => suite_eval(session),
        "distributions" => suite_distributions(session),
        "residue" => suite_residue(session),
        other => Err(Error::Config(format!(
            "unknown suite {other}; available: operators, series, coleman, eval, distributions, residue"
        ))),
    }
}
