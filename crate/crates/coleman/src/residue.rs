//! The residue layer at the cyclotomic specialization: the identification
//! of the twisted module with differentials f tensor e -> f dZ/(1+Z), the
//! residue pairing <f, g> = res(f g), the normalized trace
//! T(a) = p^{-n} Tr(a), the explicit-reciprocity right-hand side for
//! principal units against a unit system, and the invariant-map scalar
//! log chi(gamma_m)/p^m.

use num_rational::Ratio;
use num_traits::Zero;

use crate::coates_wiles::UnitSystem;
use crate::distributions::DistContext;
use crate::error::{Error, Result};
use crate::padic::{FieldRef, PadicElement};
use crate::series::{TruncatedSeries, Var};

/// A series with an integer tensor weight (the twist bookkeeping of the
/// cyclotomic representation).
#[derive(Clone)]
pub struct TwistedSeries {
    pub series: TruncatedSeries,
    pub twist: i64,
}

impl TwistedSeries {
    pub fn new(series: TruncatedSeries, twist: i64) -> TwistedSeries {
        TwistedSeries { series, twist }
    }

    /// The differential attached to a weight-one element: h dZ/(1+Z),
    /// returned as the series h/(1+Z) (the dZ is implicit).
    pub fn as_differential(&self) -> Result<TruncatedSeries> {
        if self.twist != 1 {
            return Err(Error::Config(format!(
                "differential identification needs twist 1, found {}",
                self.twist
            )));
        }
        let f = &self.series;
        let ext = f.zcap + 2 * (-f.lowest.min(0)) + 4;
        let one_plus = TruncatedSeries::from_integers(f.field.clone(), Var::Z, 0, &[1, 1], ext);
        let inv = one_plus.invert()?.truncate(f.zcap);
        Ok(f.mul(&inv))
    }
}

/// res(f dZ): the coefficient of Z^{-1}.
pub fn residue(f: &TruncatedSeries) -> PadicElement {
    f.residue()
}

/// The pairing <h tensor e, g> = res(h g dZ/(1+Z)).
pub fn pairing(f: &TwistedSeries, g: &TruncatedSeries) -> Result<PadicElement> {
    let omega = f.as_differential()?;
    Ok(omega.mul(g).residue())
}

/// T(a) = p^{-n} Tr_{L_n/Q_p}(a) for a at tower level n >= 1; stable under
/// raising the level.
pub fn t_trace(ctx: &DistContext, a: &PadicElement, n: u32) -> Result<PadicElement> {
    assert!(n >= 1);
    let tn = ctx.tower(n)?;
    let up = match a.field() {
        FieldRef::Base(_) => tn.embed_from_lower(a),
        FieldRef::Ext(t) => {
            if t.level == n {
                a.clone()
            } else {
                tn.embed_from_lower(a)
            }
        }
    };
    let (tr, _) = tn.trace_norm_to(&up, 0)?;
    tr.div_i64((ctx.p as i64).pow(n))
}

/// The p-adic logarithm of a principal unit (v(x - 1) > 0), by the
/// alternating series; each term order k costs v_p(k) digits.
pub fn principal_unit_log(x: &PadicElement) -> Result<PadicElement> {
    let one = PadicElement::from_i64(x.field().clone(), 1);
    let u = x.sub(&one);
    let w = match u.valuation() {
        Some(v) if v > Ratio::zero() => v,
        None => return Ok(PadicElement::zero(x.field().clone(), x.certified_pdigits().max(1))),
        _ => {
            return Err(Error::NotPrincipalUnit(
                "logarithm needs v(x - 1) > 0".into(),
            ))
        }
    };
    let target = Ratio::from_integer(x.certified_pdigits());
    // log(1 + u) = sum (-1)^{k-1} u^k / k
    let mut acc = PadicElement::zero(x.field().clone(), x.certified_pdigits().max(1));
    let mut pw = u.clone();
    let mut k = 1i64;
    loop {
        let term = pw.div_i64(k)?;
        let term = if k % 2 == 0 { term.neg() } else { term };
        acc = acc.add(&term);
        k += 1;
        if Ratio::from_integer(k) * w > target + Ratio::from_integer(8) || k > 4000 {
            break;
        }
        pw = pw.mul(&u);
    }
    Ok(acc)
}

/// The right-hand side of the classical explicit reciprocity law:
/// p^{-m} Tr_{L_m/Q_p}(log(a) Dlog g_u |_{Z = zeta_{p^m} - 1}), reported
/// as a p-adic integer class (integrality is asserted).
pub fn iwasawa_rhs(
    ctx: &DistContext,
    a: &PadicElement,
    u: &UnitSystem,
    m: u32,
    k: u32,
) -> Result<PadicElement> {
    assert!(m >= 1 && m >= k);
    let tm = ctx.tower(m)?;
    let a_up = match a.field() {
        FieldRef::Base(_) => tm.embed_from_lower(a),
        FieldRef::Ext(t) if t.level < m => tm.embed_from_lower(a),
        _ => a.clone(),
    };
    let one = PadicElement::from_i64(tm.field_ref(), 1);
    match a_up.sub(&one).valuation() {
        Some(v) if v > Ratio::zero() => {}
        _ => {
            return Err(Error::NotPrincipalUnit(
                "reciprocity input must be a principal unit".into(),
            ))
        }
    }
    let log_a = principal_unit_log(&a_up)?;
    let dlog = u.dlog_series()?;
    let dlog_at = dlog
        .promote(&tm.field_ref())
        .evaluate_with_tail(&tm.eta(), Ratio::zero())?;
    let (tr, _) = tm.trace_norm_to(&log_a.mul(&dlog_at), 0)?;
    let value = tr.div_i64((ctx.p as i64).pow(m))?;
    match value.valuation() {
        None => {}
        Some(v) => {
            if v < Ratio::zero() {
                return Err(Error::PrecisionExhausted(format!(
                    "right-hand side is not integral: valuation {v}"
                )));
            }
        }
    }
    value.ensure_certified(k as i64)?;
    Ok(value)
}

/// log chi(gamma_m) / p^m for a generator with chi(gamma_m) = 1 + p^m unit;
/// the result is certified to be a unit.
pub fn invariant_scalar(field: FieldRef, m: u32, chi_gamma: &PadicElement) -> Result<PadicElement> {
    let p = field.p();
    let one = PadicElement::from_i64(field.clone(), 1);
    let diff = chi_gamma.sub(&one);
    match diff.valuation() {
        Some(v) if v == Ratio::from_integer(m as i64) => {}
        other => {
            return Err(Error::NotAGenerator(format!(
                "chi(gamma) - 1 has valuation {other:?}, expected exactly {m}"
            )))
        }
    }
    let lg = principal_unit_log(chi_gamma)?;
    let scalar = lg.div_i64((p as i64).pow(m))?;
    match scalar.valuation() {
        Some(v) if v.is_zero() => Ok(scalar),
        other => Err(Error::NotAGenerator(format!(
            "scalar has valuation {other:?}, not a unit"
        ))),
    }
}

/// The Gram matrix of the pairing on the monomial window {Z^{-1},...,Z^{w}}
/// against the dual window {Z^{-w-1},...,Z^{0}}: entry (i, j) is
/// res(Z^{i+j} dZ/(1+Z)). Returns its rank at the working precision.
pub fn pairing_gram_rank(field: FieldRef, w: i64, modexp: i64) -> Result<usize> {
    let size = (w + 2) as usize;
    let ext = 2 * w + 8;
    let one_plus = TruncatedSeries::from_integers(field.clone(), Var::Z, 0, &[1, 1], ext);
    let inv = one_plus.invert()?;
    let mut rows = Vec::with_capacity(size);
    for i in -1..=w {
        let mut row = Vec::with_capacity(size);
        for j in (-w - 1)..=0 {
            // res(Z^{i+j}/(1+Z)) = coefficient of Z^{-1-i-j} in (1+Z)^{-1}
            let e = -1 - i - j;
            let v = if e < 0 { field.zero() } else { inv.coeff(e) };
            row.push(v.cap_certified(modexp));
        }
        rows.push(row);
    }
    Ok(crate::padic::linalg::rank(rows))
}
