//! The Frobenius substitution phi, the trace operator psi, the Coleman
//! norm operator and its fixed points, and the residual-field valuation
//! lemmas.
//!
//! phi sends Z to [pi](Z). psi is the unique additive operator with
//! phi(psi(f)) = pi^{-1} sum over the pi-torsion translates f(a +_LT Z);
//! the norm operator satisfies phi(N(g)) = prod over translates. Both are
//! computed by summing/multiplying translate compositions over L_1,
//! certifying Galois invariance, and then removing the phi-substitution by
//! a triangular solve on the Z-filtration.

use std::sync::Arc;

use num_rational::Ratio;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::lubin_tate::FormalGroup;
use crate::padic::{FieldRef, PadicElement, TowerField};
use crate::series::{TruncatedSeries, Var};

pub struct OperatorContext {
    pub group: Arc<FormalGroup>,
    pub l1: Arc<TowerField>,
    /// The q pi-torsion points in L_1 (index 0 is the zero point).
    pub lt1: Vec<PadicElement>,
    /// Working window cap for series.
    pub zorder: i64,
    /// Certification target for translate compositions.
    pub target_pdigits: i64,
    /// Cached psi(Z^r) for r = 0..q-1, feeding the phi-basis route.
    psi_monomials: once_cell::sync::OnceCell<Vec<TruncatedSeries>>,
}

/// Outcome of the residual-field checks for one input.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub input_order: Option<i64>,
    pub psi_order_bound: i64,
    pub psi_order: Option<i64>,
    pub violations: Vec<String>,
}

impl OperatorContext {
    pub fn new(group: Arc<FormalGroup>, zorder: i64, target_pdigits: i64) -> Result<OperatorContext> {
        let l1 = group.tower(1)?;
        let lt1 = group.lt1_points()?;
        Ok(OperatorContext {
            group,
            l1,
            lt1,
            zorder,
            target_pdigits,
            psi_monomials: once_cell::sync::OnceCell::new(),
        })
    }

    pub fn base_ref(&self) -> FieldRef {
        self.group.base_ref()
    }

    pub fn q(&self) -> u64 {
        self.group.field.q
    }

    /// [pi](Z) as an exact polynomial series.
    pub fn frobenius_series(&self) -> TruncatedSeries {
        TruncatedSeries::from_polynomial(
            self.base_ref(),
            Var::Z,
            0,
            self.group.frobenius.clone(),
            self.zorder,
        )
    }

    // -----------------------------------------------------------------
    // phi
    // -----------------------------------------------------------------

    /// phi(f) = f([pi](Z)).
    pub fn phi_apply(&self, f: &TruncatedSeries) -> Result<TruncatedSeries> {
        let fz = self.frobenius_series();
        let fz = if f.field.same(&fz.field) {
            fz
        } else {
            fz.promote(&f.field)
        };
        f.substitute(&fz)
    }

    // -----------------------------------------------------------------
    // translate sum and product over LT_1
    // -----------------------------------------------------------------

    fn translate_composition(
        &self,
        f: &TruncatedSeries,
        a: &PadicElement,
    ) -> Result<TruncatedSeries> {
        if a.is_zero_at_precision() {
            return Ok(f.promote(&self.l1.field_ref()));
        }
        let t = self.group.translation_series(a, self.zorder)?;
        let fl1 = f.promote(&self.l1.field_ref());
        fl1.compose_small_constant(&t, self.target_pdigits)
    }

    /// sum over a in LT_1 of f(a +_LT Z), certified Galois invariant and
    /// expressed over the base field.
    pub fn trace_sum(&self, f: &TruncatedSeries) -> Result<TruncatedSeries> {
        let mut acc: Option<TruncatedSeries> = None;
        for a in &self.lt1 {
            let term = self.translate_composition(f, a)?;
            acc = Some(match acc {
                None => term,
                Some(s) => s.add(&term),
            });
        }
        let acc = acc.expect("LT_1 is nonempty");
        self.descend_series(acc)
    }

    fn descend_series(&self, s: TruncatedSeries) -> Result<TruncatedSeries> {
        let mut coeffs = Vec::with_capacity((s.zcap - s.lowest + 1) as usize);
        for k in s.lowest..=s.zcap {
            let c = s.coeff(k);
            let down = self
                .l1
                .express_at_level(&c, 0)
                .map_err(|e| Error::NotGaloisInvariant(format!("coefficient {k}: {e}")))?;
            coeffs.push(down);
        }
        Ok(TruncatedSeries::from_coeffs(
            self.base_ref(),
            Var::Z,
            s.lowest,
            coeffs,
            s.zcap,
        ))
    }

    // -----------------------------------------------------------------
    // unsubstitution (inverting phi on its image)
    // -----------------------------------------------------------------

    /// Solves S([pi](Z)) = P(Z) by the triangular solve on the Z-filtration
    /// ([Z^j] of f^j is exactly pi^j). Coefficients whose valuation drops
    /// below the floor signal that P was not in the image.
    pub fn unsubstitute(&self, p: &TruncatedSeries) -> Result<TruncatedSeries> {
        assert!(
            p.field.same(&self.base_ref()),
            "unsubstitute expects base coefficients"
        );
        let fr = self.base_ref();
        let lo = p.lowest.min(0);
        let hi = p.zcap;
        let fz = self.frobenius_series().truncate(hi.max(1));
        // powers of f (and of 1/f for the pole part); the Frobenius is an
        // exact polynomial, so its inverse can be expanded past the window
        let mut pos_pows: Vec<TruncatedSeries> = Vec::new();
        pos_pows.push(TruncatedSeries::constant(fr.clone(), Var::Z, fr.one(), hi));
        for _ in 1..=hi.max(0) {
            let last = pos_pows.last().unwrap();
            pos_pows.push(last.mul(&fz).truncate(hi));
        }
        let mut neg_pows: Vec<TruncatedSeries> = Vec::new();
        if lo < 0 {
            let ext = hi + 2 * (-lo) + 4;
            let fz_ext = TruncatedSeries::from_polynomial(
                fr.clone(),
                Var::Z,
                0,
                self.group.frobenius.clone(),
                ext,
            );
            let finv = fz_ext.invert()?;
            let mut cur = finv.clone();
            neg_pows.push(cur.truncate(hi));
            for _ in 2..=(-lo) {
                cur = cur.mul(&finv);
                neg_pows.push(cur.truncate(hi));
            }
        }
        let fpow = |k: i64| -> &TruncatedSeries {
            if k >= 0 {
                &pos_pows[k as usize]
            } else {
                &neg_pows[(-k - 1) as usize]
            }
        };
        let floor = Ratio::from_integer(-(self.target_pdigits / 2).max(4));
        let mut s_coeffs: Vec<PadicElement> = Vec::with_capacity((hi - lo + 1) as usize);
        for j in lo..=hi {
            let mut acc = p.coeff(j);
            for (idx, k) in (lo..j).enumerate() {
                let sk = &s_coeffs[idx];
                if sk.is_zero_at_precision() {
                    continue;
                }
                let c = fpow(k).coeff(j);
                if c.is_zero_at_precision() {
                    continue;
                }
                acc = acc.sub(&sk.mul(&c));
            }
            let sj = acc.mul(&self.group.pi.pow_i64(-j)?);
            if sj.certified_pdigits() > 0 {
                if let Some(v) = sj.valuation() {
                    if v < floor {
                        return Err(Error::NotInImage(format!(
                            "coefficient {j} has valuation {v}, below the floor {floor}"
                        )));
                    }
                }
            }
            s_coeffs.push(sj);
        }
        Ok(TruncatedSeries::from_coeffs(fr, Var::Z, lo, s_coeffs, hi))
    }

    // -----------------------------------------------------------------
    // psi
    // -----------------------------------------------------------------

    /// psi(f) for f with a uniformly bounded denominator (the computable
    /// part of A_L[1/pi]): the bound is cleared by a p-power scaling, the
    /// integral part goes through the trace sum over torsion translates,
    /// and the scaling is restored. The coefficients beyond the window are
    /// assumed to obey the same bound.
    pub fn psi_apply(&self, f: &TruncatedSeries) -> Result<TruncatedSeries> {
        let mut shift = 0i64;
        for k in f.lowest..=f.zcap {
            let c = f.coeff(k);
            if c.certified_pdigits() <= 0 {
                continue;
            }
            if let Some(v) = c.valuation() {
                shift = shift.min(v.floor().to_integer());
            }
        }
        let fr = self.base_ref();
        let scaled = if shift < 0 {
            f.scalar_mul(&PadicElement::from_i64(fr.clone(), 1).mul_pow_p(-shift))
        } else {
            f.clone()
        };
        let tr = self.trace_sum(&scaled)?;
        let pi_inv = self.group.pi.inverse()?;
        let out = self.unsubstitute(&tr.scalar_mul(&pi_inv))?;
        Ok(if shift < 0 {
            out.scalar_mul(&PadicElement::from_i64(fr, 1).mul_pow_p(shift))
        } else {
            out
        })
    }

    /// Writes f = sum_{r<q} phi(f_r) Z^r by digit-by-digit extraction:
    /// modulo pi the Frobenius substitution is Z -> Z^q, so each residue
    /// class of exponents determines one digit of one component exactly.
    /// Power series only: in the bounded-window representation the
    /// phi-image of a pole expands with denominators rather than with a
    /// deep pole, and the digit extraction no longer matches.
    pub fn phi_decompose(&self, f: &TruncatedSeries) -> Result<Vec<TruncatedSeries>> {
        if f.lowest < 0 {
            return Err(Error::ConvergenceDomain(
                "phi-basis decomposition is restricted to power series".into(),
            ));
        }
        let fr = self.base_ref();
        let q = self.q() as i64;
        // clear denominators
        let mut shift = 0i64;
        for k in f.lowest..=f.zcap {
            let c = f.coeff(k);
            if c.certified_pdigits() <= 0 {
                continue;
            }
            if let Some(v) = c.valuation() {
                let fl = v.floor().to_integer();
                shift = shift.min(fl);
            }
        }
        let scaled = if shift < 0 {
            f.scalar_mul(&PadicElement::from_i64(fr.clone(), 1).mul_pow_p(-shift))
        } else {
            f.clone()
        };
        let digits = scaled
            .min_certified_pdigits()
            .min(self.target_pdigits + 8)
            .max(1);
        let out_lo = |r: i64| (f.lowest - r).div_euclid(q);
        let out_hi = |r: i64| (f.zcap - r).div_euclid(q);
        let mut comps: Vec<Vec<PadicElement>> = (0..q)
            .map(|r| vec![fr.zero(); (out_hi(r) - out_lo(r) + 1).max(0) as usize])
            .collect();
        let mut rem = scaled;
        let p = self.group.field.p;
        let pi_inv = self.group.pi.inverse()?;
        for digit in 0..digits {
            // extract the mod-pi digit of every component
            let mut digit_series: Vec<TruncatedSeries> = Vec::with_capacity(q as usize);
            for r in 0..q {
                let lo = out_lo(r);
                let hi = out_hi(r);
                let mut cs = Vec::with_capacity((hi - lo + 1).max(0) as usize);
                for j in lo..=hi {
                    let m = q * j + r;
                    let c = if m < rem.lowest || m > rem.zcap {
                        fr.zero()
                    } else {
                        let cm = rem.coeff(m);
                        if cm.certified_pdigits() <= 0 {
                            fr.zero()
                        } else {
                            residue_lift(&cm, p)
                        }
                    };
                    cs.push(c);
                }
                digit_series.push(TruncatedSeries::from_polynomial(
                    fr.clone(),
                    Var::Z,
                    lo,
                    cs.clone(),
                    hi.max(lo),
                ));
                let sc = self.group.pi.pow(digit as u64);
                for (j, c) in cs.iter().enumerate() {
                    let cur = &comps[r as usize][j];
                    comps[r as usize][j] = cur.add(&c.mul(&sc));
                }
            }
            if digit + 1 == digits {
                break;
            }
            // rem <- (rem - sum_r phi(digit_r) Z^r) / pi
            let mut assembled: Option<TruncatedSeries> = None;
            for (r, dser) in digit_series.iter().enumerate() {
                if dser.is_zero_at_precision() {
                    continue;
                }
                let term = self.phi_apply(dser)?.shift(r as i64);
                assembled = Some(match assembled {
                    None => term,
                    Some(s) => s.add(&term),
                });
            }
            rem = match assembled {
                None => rem,
                Some(s) => rem.sub(&s),
            };
            rem = rem.scalar_mul(&pi_inv);
        }
        Ok((0..q)
            .map(|r| {
                TruncatedSeries::from_coeffs(
                    fr.clone(),
                    Var::Z,
                    out_lo(r),
                    comps[r as usize].clone(),
                    out_hi(r).max(out_lo(r)),
                )
                .scalar_mul(&PadicElement::from_i64(fr.clone(), 1).mul_pow_p(shift))
            })
            .collect())
    }

    /// psi(Z^r) for r < q, computed once from the integral translate sum.
    fn psi_monomial(&self, r: i64) -> Result<TruncatedSeries> {
        let cache = self.psi_monomials.get_or_try_init(|| {
            let mut v = Vec::with_capacity(self.q() as usize);
            for r in 0..self.q() as i64 {
                let zr = TruncatedSeries::monomial(
                    self.base_ref(),
                    Var::Z,
                    r,
                    self.base_ref().one(),
                    self.zorder,
                );
                let tr = self.trace_sum(&zr)?;
                let pi_inv = self.group.pi.inverse()?;
                v.push(self.unsubstitute(&tr.scalar_mul(&pi_inv))?);
            }
            Ok::<_, Error>(v)
        })?;
        Ok(cache[r as usize].clone())
    }

    /// Second, independent route for psi on integral inputs, through the
    /// phi-basis decomposition: psi(sum_r phi(f_r) Z^r) = sum_r f_r psi(Z^r).
    pub fn psi_apply_decomposed(&self, f: &TruncatedSeries) -> Result<TruncatedSeries> {
        let comps = self.phi_decompose(f)?;
        let mut acc: Option<TruncatedSeries> = None;
        for (r, fr_comp) in comps.iter().enumerate() {
            if fr_comp.is_zero_at_precision() {
                continue;
            }
            let term = fr_comp.mul(&self.psi_monomial(r as i64)?);
            acc = Some(match acc {
                None => term,
                Some(s) => s.add(&term),
            });
        }
        Ok(acc.unwrap_or_else(|| TruncatedSeries::zero(self.base_ref(), Var::Z, self.zorder)))
    }

    // -----------------------------------------------------------------
    // norm operator
    // -----------------------------------------------------------------

    /// N(g) = unsubstitute(prod over a in LT_1 of g(a +_LT Z)); g must be a
    /// unit Laurent series (leading coefficient a unit).
    pub fn norm_apply(&self, g: &TruncatedSeries) -> Result<TruncatedSeries> {
        let o = g
            .order()
            .ok_or_else(|| Error::NotAUnit("norm of the zero series".into()))?;
        match g.coeff(o).valuation() {
            Some(v) if v.is_zero() => {}
            v => {
                return Err(Error::NotAUnit(format!(
                    "leading coefficient has valuation {v:?}"
                )))
            }
        }
        let mut acc: Option<TruncatedSeries> = None;
        for a in &self.lt1 {
            let term = self.translate_composition(g, a)?;
            acc = Some(match acc {
                None => term,
                Some(s) => s.mul(&term),
            });
        }
        let prod = self.descend_series(acc.expect("LT_1 nonempty"))?;
        self.unsubstitute(&prod)
    }

    /// Iterates the norm operator, asserting coefficientwise stabilization
    /// at `stab_pdigits` within the budget.
    pub fn norm_fixed_iterate(
        &self,
        g0: &TruncatedSeries,
        budget: u32,
        stab_pdigits: i64,
    ) -> Result<TruncatedSeries> {
        let mut cur = g0.clone();
        for _ in 0..budget {
            let next = self.norm_apply(&cur)?;
            if series_agree_graded(&next, &cur, stab_pdigits) {
                return Ok(next);
            }
            cur = next;
        }
        Err(Error::NoStabilization(format!(
            "no coefficientwise agreement at {stab_pdigits} digits within {budget} iterations"
        )))
    }

    /// Checks that g is norm-fixed, forms h = d_inv(g)/g, certifies
    /// psi(h) = h, and checks the containment h in Z^{-1} o_L[[Z]].
    pub fn psi_one_sample_and_check(
        &self,
        g: &TruncatedSeries,
        check_pdigits: i64,
    ) -> Result<TruncatedSeries> {
        let ng = self.norm_apply(g)?;
        if !ng.agrees_to(g, check_pdigits) {
            return Err(Error::NotNormFixed(
                "norm image differs at the requested precision".into(),
            ));
        }
        let h = self.dlog(g)?;
        let psih = self.psi_apply(&h)?;
        if !series_agree_graded(&psih, &h, check_pdigits) {
            return Err(Error::PsiOneViolation(
                "psi does not fix the logarithmic derivative".into(),
            ));
        }
        check_pole_and_integrality(&h)?;
        Ok(h)
    }

    /// The invariant logarithmic derivative d_inv(g)/g.
    pub fn dlog(&self, g: &TruncatedSeries) -> Result<TruncatedSeries> {
        let num = self.group.partial_inv(g, 1);
        Ok(num.mul(&g.invert()?))
    }

    // -----------------------------------------------------------------
    // residual-field checks
    // -----------------------------------------------------------------

    /// Verifies, for the reduction mod pi of an integral Laurent series, the
    /// shift congruence psi(f) = Z^k psi(Z^{-qk} f) mod pi over a sweep of k
    /// and the valuation bound v(psi(f)) >= floor(v(f)/q).
    pub fn residual_valuation_checks(&self, f: &TruncatedSeries) -> Result<ResidualReport> {
        let q = self.q() as i64;
        let psif = self.psi_apply(f)?;
        let vin = reduced_order(f);
        let vout = reduced_order(&psif);
        let mut violations = Vec::new();
        let bound = match vin {
            None => 0,
            Some(v) => v.div_euclid(q),
        };
        if let (Some(_), Some(vo)) = (vin, vout) {
            if vo < bound {
                violations.push(format!(
                    "valuation bound violated: v(psi f) = {vo} < floor(v(f)/q) = {bound}"
                ));
            }
        }
        for k in -2i64..=2 {
            if k == 0 {
                continue;
            }
            let shifted = f.shift(-q * k);
            if shifted.lowest < -(self.zorder / 2) {
                continue;
            }
            let rhs = self.psi_apply(&shifted)?.shift(k);
            if !mod_pi_agree(&psif, &rhs) {
                violations.push(format!("shift congruence violated at k = {k}"));
            }
        }
        Ok(ResidualReport {
            input_order: vin,
            psi_order_bound: bound,
            psi_order: vout,
            violations,
        })
    }
}

/// Canonical integral lift of the residue class mod pi of an integral base
/// element (for an Eisenstein presentation the residue sits in the constant
/// coordinate).
fn residue_lift(c: &PadicElement, p: u64) -> PadicElement {
    use num_integer::Integer;
    let field = c.field().clone();
    let (coords, pshift, _) = c.base_coords();
    assert!(
        pshift == 0,
        "residue lift of a non-integral element (certified {})",
        c.certified_pdigits()
    );
    let pb = num_bigint::BigInt::from(p);
    let base = field.base();
    let lifted: Vec<num_bigint::BigInt> = match base.kind {
        crate::padic::Presentation::Eisenstein => {
            let mut v = vec![num_bigint::BigInt::from(0); coords.len()];
            v[0] = coords[0].mod_floor(&pb);
            v
        }
        crate::padic::Presentation::Unramified => {
            coords.iter().map(|x| x.mod_floor(&pb)).collect()
        }
    };
    PadicElement::from_coords(field.clone(), lifted, 0, field.default_modexp())
}

/// Z-adic order of the mod-pi reduction (None when f = 0 mod pi on the
/// window).
fn reduced_order(f: &TruncatedSeries) -> Option<i64> {
    for k in f.lowest..=f.zcap {
        let c = f.coeff(k);
        match c.pi_valuation() {
            Some(v) if v < Ratio::from_integer(1) => return Some(k),
            _ => {}
        }
    }
    None
}

/// Coefficientwise congruence mod pi on the common window.
fn mod_pi_agree(a: &TruncatedSeries, b: &TruncatedSeries) -> bool {
    let lo = a.lowest.min(b.lowest);
    let hi = a.zcap.min(b.zcap);
    for k in lo..=hi {
        let d = a.coeff(k).sub(&b.coeff(k));
        if d.certified_pdigits() < 1 {
            continue;
        }
        match d.pi_valuation() {
            None => {}
            Some(v) => {
                if v < Ratio::from_integer(1) {
                    return false;
                }
            }
        }
    }
    true
}

/// Agreement that degrades gracefully with each side's own certification:
/// at each order the sides must agree to `digits` or to what both certify.
pub fn series_agree_graded(a: &TruncatedSeries, b: &TruncatedSeries, digits: i64) -> bool {
    let lo = a.lowest.min(b.lowest);
    let hi = a.zcap.min(b.zcap);
    for k in lo..=hi {
        let ca = a.coeff(k);
        let cb = b.coeff(k);
        let want = digits
            .min(ca.certified_pdigits())
            .min(cb.certified_pdigits());
        if want <= 0 {
            continue;
        }
        if ca.agreement_pdigits(&cb) < want {
            return false;
        }
    }
    true
}

/// Pole order at most one and integral coefficients, at each coefficient's
/// own certification.
pub fn check_pole_and_integrality(h: &TruncatedSeries) -> Result<()> {
    for k in h.lowest..=h.zcap {
        let c = h.coeff(k);
        if c.certified_pdigits() <= 0 {
            continue;
        }
        match c.valuation() {
            None => {}
            Some(v) => {
                if k < -1 && v < Ratio::from_integer(c.certified_pdigits()) {
                    return Err(Error::PsiOneViolation(format!(
                        "pole order exceeds one: nonzero coefficient at {k}"
                    )));
                }
                if v < Ratio::zero() {
                    return Err(Error::PsiOneViolation(format!(
                        "coefficient at {k} has negative valuation {v}"
                    )));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lubin_tate::FrobeniusPreset;
    use crate::padic::LocalField;

    fn ctx(preset: FrobeniusPreset) -> OperatorContext {
        let f = LocalField::qp(3, 70).unwrap();
        let g = FormalGroup::preset(f, preset).unwrap();
        OperatorContext::new(g, 24, 24).unwrap()
    }

    #[test]
    fn phi_of_t_is_pi_t() {
        // log([pi](Z)) = pi log(Z), i.e. phi(t) = pi t
        let c = ctx(FrobeniusPreset::Basic);
        let log = c.group.log_series(c.zorder);
        let lhs = c.phi_apply(&log).unwrap();
        let rhs = log.scalar_mul(&c.group.pi);
        assert!(lhs.agrees_to(&rhs, 20));
        // cyclotomic: phi(1+Z) = (1+Z)^p
        let c = ctx(FrobeniusPreset::GmHat);
        let one_plus = TruncatedSeries::from_integers(c.base_ref(), Var::Z, 0, &[1, 1], c.zorder);
        let lhs = c.phi_apply(&one_plus).unwrap();
        let rhs = one_plus.pow(3);
        assert!(lhs.agrees_to(&rhs, 30));
    }

    #[test]
    fn trace_sum_examples() {
        let c = ctx(FrobeniusPreset::GmHat);
        // f = 1 -> q
        let one = TruncatedSeries::constant(c.base_ref(), Var::Z, c.base_ref().one(), c.zorder);
        let tr = c.trace_sum(&one).unwrap();
        assert!(tr.agrees_to(
            &TruncatedSeries::constant(c.base_ref(), Var::Z, c.base_ref().integer(3), c.zorder),
            20
        ));
        // f = 1 + Z: sum of zeta (1+Z) over cube roots = 0
        let f = TruncatedSeries::from_integers(c.base_ref(), Var::Z, 0, &[1, 1], c.zorder);
        let tr = c.trace_sum(&f).unwrap();
        assert!(tr.is_zero_at_precision() || tr.min_certified_pdigits() <= 0 || {
            let mut ok = true;
            for k in tr.lowest..=tr.zcap {
                let cc = tr.coeff(k);
                if let Some(v) = cc.valuation() {
                    ok = ok && v >= num_rational::Ratio::from_integer(15);
                }
            }
            ok
        });
    }

    #[test]
    fn unsubstitute_round_trip() {
        for preset in [FrobeniusPreset::GmHat, FrobeniusPreset::Basic] {
            let c = ctx(preset);
            // S = Z and a Laurent sample
            let z = TruncatedSeries::variable(c.base_ref(), Var::Z, c.zorder);
            let p = c.phi_apply(&z).unwrap();
            let s = c.unsubstitute(&p).unwrap();
            assert!(s.agrees_to(&z, 18));
            let sample =
                TruncatedSeries::from_integers(c.base_ref(), Var::Z, -1, &[2, 1, 0, 4, 7], c.zorder);
            let p = c.phi_apply(&sample).unwrap();
            let s = c.unsubstitute(&p).unwrap();
            assert!(series_agree_graded(&s, &sample, 12));
        }
    }

    #[test]
    fn psi_basic_values() {
        let c = ctx(FrobeniusPreset::GmHat);
        // psi(1) = q/pi = 1 here
        let one = TruncatedSeries::constant(c.base_ref(), Var::Z, c.base_ref().one(), c.zorder);
        let psi1 = c.psi_apply(&one).unwrap();
        assert!(psi1.agrees_to(&one, 14));
        // psi(1+Z) = 0
        let f = TruncatedSeries::from_integers(c.base_ref(), Var::Z, 0, &[1, 1], c.zorder);
        let psif = c.psi_apply(&f).unwrap();
        for k in psif.lowest..=psif.zcap {
            let cc = psif.coeff(k);
            let cert = cc.certified_pdigits().min(12);
            if cert <= 0 {
                continue;
            }
            match cc.valuation() {
                None => {}
                Some(v) => assert!(v >= num_rational::Ratio::from_integer(cert), "k={k} v={v}"),
            }
        }
        // psi((1+Z)/Z) = (1+Z)/Z (logarithmic derivative of the norm-fixed Z)
        let h = TruncatedSeries::from_integers(c.base_ref(), Var::Z, -1, &[1, 1], c.zorder);
        let psih = c.psi_apply(&h).unwrap();
        assert!(series_agree_graded(&psih, &h, 12));
    }

    #[test]
    fn projection_formula_and_psi_phi() {
        for preset in [FrobeniusPreset::GmHat, FrobeniusPreset::Basic] {
            let c = ctx(preset);
            let f1 = TruncatedSeries::from_integers(c.base_ref(), Var::Z, 0, &[2, 1, 1], c.zorder);
            let f2 =
                TruncatedSeries::from_integers(c.base_ref(), Var::Z, -1, &[1, 0, 3, 1], c.zorder);
            // psi(phi(f1) f2) = f1 psi(f2)
            let lhs = c
                .psi_apply(&c.phi_apply(&f1).unwrap().mul(&f2))
                .unwrap();
            let rhs = f1.mul(&c.psi_apply(&f2).unwrap());
            assert!(series_agree_graded(&lhs, &rhs, 10), "projection ({preset:?})");
            // psi(phi(f)) = (q/pi) f on the power-series part (phi of a
            // pole leaves the bounded-pole subspace)
            let f3 = TruncatedSeries::from_integers(c.base_ref(), Var::Z, 0, &[1, 2, 0, 1], c.zorder);
            let pf = c.phi_apply(&f3).unwrap();
            let lhs = c.psi_apply(&pf).unwrap();
            let qopi = c
                .base_ref()
                .integer(c.q() as i64)
                .mul(&c.group.pi.inverse().unwrap());
            let rhs = f3.scalar_mul(&qopi);
            assert!(series_agree_graded(&lhs, &rhs, 10), "psi phi ({preset:?})");
            // phi(psi(f)) = pi^{-1} sum of torsion translates, Laurent input
            let lhs = c.phi_apply(&c.psi_apply(&f2).unwrap()).unwrap();
            let rhs = c
                .trace_sum(&f2)
                .unwrap()
                .scalar_mul(&c.group.pi.inverse().unwrap());
            assert!(series_agree_graded(&lhs, &rhs, 10), "phi psi ({preset:?})");
        }
    }

    #[test]
    fn psi_decomposition_route_agrees() {
        for preset in [FrobeniusPreset::GmHat, FrobeniusPreset::Basic] {
            let c = ctx(preset);
            let f =
                TruncatedSeries::from_integers(c.base_ref(), Var::Z, 0, &[2, 1, 0, 0, 5, 1], c.zorder);
            let a = c.psi_apply(&f).unwrap();
            let b = c.psi_apply_decomposed(&f).unwrap();
            assert!(series_agree_graded(&a, &b, 10), "({preset:?})");
        }
    }

    #[test]
    fn norm_fixes_z_and_constants() {
        for preset in [FrobeniusPreset::GmHat, FrobeniusPreset::Basic] {
            let c = ctx(preset);
            let z = TruncatedSeries::variable(c.base_ref(), Var::Z, c.zorder);
            let nz = c.norm_apply(&z).unwrap();
            assert!(series_agree_graded(&nz, &z, 12), "N(Z) = Z ({preset:?})");
            // N(c) = c^q for a Teichmueller constant (omega^q = omega)
            let om = crate::padic::teichmuller(&c.base_ref().integer(2));
            let cs = TruncatedSeries::constant(c.base_ref(), Var::Z, om.clone(), c.zorder);
            let ncs = c.norm_apply(&cs).unwrap();
            assert!(ncs.coeff(0).agrees_to(&om.pow(3), 10));
        }
    }

    #[test]
    fn norm_iteration_stabilizes() {
        let c = ctx(FrobeniusPreset::GmHat);
        let g0 = TruncatedSeries::from_integers(c.base_ref(), Var::Z, 0, &[1, 1, 3], c.zorder);
        let fixed = c.norm_fixed_iterate(&g0, 12, 8).unwrap();
        let again = c.norm_apply(&fixed).unwrap();
        assert!(series_agree_graded(&fixed, &again, 8));
    }

    #[test]
    fn psi_one_samples() {
        let c = ctx(FrobeniusPreset::GmHat);
        // g = 1+Z: h = 1 with psi(1) = 1 (q/pi = 1 here)
        let g = TruncatedSeries::from_integers(c.base_ref(), Var::Z, 0, &[1, 1], c.zorder);
        let h = c.psi_one_sample_and_check(&g, 10).unwrap();
        let one = TruncatedSeries::constant(c.base_ref(), Var::Z, c.base_ref().one(), c.zorder);
        assert!(series_agree_graded(&h, &one, 10));
        // g = Z: h = (1+Z)/Z
        let z = TruncatedSeries::variable(c.base_ref(), Var::Z, c.zorder);
        let h = c.psi_one_sample_and_check(&z, 10).unwrap();
        let expect = TruncatedSeries::from_integers(c.base_ref(), Var::Z, -1, &[1, 1], c.zorder);
        assert!(series_agree_graded(&h, &expect, 10));
    }

    #[test]
    fn psi_commutes_with_invariant_derivative() {
        // psi d_inv = pi d_inv psi
        for preset in [FrobeniusPreset::GmHat, FrobeniusPreset::Basic] {
            let c = ctx(preset);
            let f = TruncatedSeries::from_integers(c.base_ref(), Var::Z, -1, &[1, 2, 0, 1], c.zorder);
            let lhs = c.psi_apply(&c.group.partial_inv(&f, 1)).unwrap();
            let rhs = c
                .group
                .partial_inv(&c.psi_apply(&f).unwrap(), 1)
                .scalar_mul(&c.group.pi);
            assert!(series_agree_graded(&lhs, &rhs, 8), "({preset:?})");
        }
    }

    #[test]
    fn residual_checks_run_clean() {
        let c = ctx(FrobeniusPreset::GmHat);
        // f = Z^{-q}: v(psi f) >= -1
        let f = TruncatedSeries::monomial(c.base_ref(), Var::Z, -3, c.base_ref().one(), c.zorder);
        let rep = c.residual_valuation_checks(&f).unwrap();
        assert!(rep.violations.is_empty(), "{:?}", rep.violations);
        assert!(rep.psi_order.unwrap_or(0) >= -1);
        // power series input: integral output
        let f = TruncatedSeries::from_integers(c.base_ref(), Var::Z, 0, &[1, 2, 1, 1], c.zorder);
        let rep = c.residual_valuation_checks(&f).unwrap();
        assert!(rep.violations.is_empty());
        assert!(rep.psi_order.unwrap_or(0) >= 0);
    }
}
