//! Capped-precision elements of a base field or of a division-point tower.
//!
//! Representation: a base element is p^{-pshift} times an integral
//! coordinate vector in the power basis, with coordinates reduced modulo
//! p^modexp. The certified absolute precision in p-digits is
//! modexp - pshift; every operation states its worst-case digit loss
//! through the rules in `add`/`mul`. A tower element is a coordinate vector
//! over the base field in the power basis of the tower generator, each
//! coordinate carrying its own precision.

use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Signed, Zero};

use super::field::{LocalField, Presentation};
use super::tower::TowerField;
use crate::error::{Error, Result};

/// Handle to the coefficient field of an element.
#[derive(Clone)]
pub enum FieldRef {
    Base(Arc<LocalField>),
    Ext(Arc<TowerField>),
}

impl FieldRef {
    pub fn id(&self) -> u64 {
        match self {
            FieldRef::Base(f) => f.id,
            FieldRef::Ext(t) => t.id,
        }
    }

    pub fn degree(&self) -> usize {
        match self {
            FieldRef::Base(f) => f.degree(),
            FieldRef::Ext(t) => t.degree,
        }
    }

    pub fn base(&self) -> Arc<LocalField> {
        match self {
            FieldRef::Base(f) => f.clone(),
            FieldRef::Ext(t) => t.base.clone(),
        }
    }

    pub fn p(&self) -> u64 {
        self.base().p
    }

    /// Ramification index over Q_p of the full field.
    pub fn absolute_e(&self) -> i64 {
        match self {
            FieldRef::Base(f) => f.e as i64,
            FieldRef::Ext(t) => t.base.e as i64 * t.degree as i64,
        }
    }

    pub fn default_modexp(&self) -> i64 {
        self.base().default_modexp
    }

    pub fn same(&self, other: &FieldRef) -> bool {
        self.id() == other.id()
    }

    pub fn zero(&self) -> PadicElement {
        PadicElement::zero(self.clone(), self.default_modexp())
    }

    pub fn one(&self) -> PadicElement {
        PadicElement::from_i64(self.clone(), 1)
    }

    pub fn integer(&self, n: i64) -> PadicElement {
        PadicElement::from_i64(self.clone(), n)
    }
}

impl std::fmt::Debug for FieldRef {
    fn fmt(&self, fmt: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FieldRef::Base(f) => write!(fmt, "{f:?}"),
            FieldRef::Ext(t) => write!(fmt, "Tower(level={}, deg={})", t.level, t.degree),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Repr {
    Base {
        pshift: i64,
        modexp: i64,
        coords: Vec<BigInt>,
    },
    Ext(Vec<PadicElement>),
}

/// An element of a base field or tower field with exact capped precision.
#[derive(Clone)]
pub struct PadicElement {
    pub(crate) field: FieldRef,
    pub(crate) repr: Repr,
}

fn vp_capped(c: &BigInt, p: u64, cap: i64) -> i64 {
    if c.is_zero() {
        return cap;
    }
    let pb = BigInt::from(p);
    let mut v = 0i64;
    let mut c = c.clone();
    while v < cap && (&c % &pb).is_zero() {
        c /= &pb;
        v += 1;
    }
    v
}

impl PadicElement {
    // ---------------------------------------------------------------
    // constructors
    // ---------------------------------------------------------------

    pub(crate) fn from_base_coords(
        field: FieldRef,
        mut coords: Vec<BigInt>,
        pshift: i64,
        modexp: i64,
    ) -> PadicElement {
        let d = match &field {
            FieldRef::Base(f) => f.degree(),
            FieldRef::Ext(_) => panic!("base coords for tower field"),
        };
        coords.resize(d, BigInt::zero());
        let mut el = PadicElement {
            field,
            repr: Repr::Base {
                pshift,
                modexp: modexp.max(1),
                coords,
            },
        };
        el.reduce();
        el
    }

    pub fn from_ext_coords(tower: Arc<TowerField>, mut coords: Vec<PadicElement>) -> PadicElement {
        let d = tower.degree;
        let basef = FieldRef::Base(tower.base.clone());
        while coords.len() < d {
            coords.push(basef.zero());
        }
        assert!(coords.len() == d, "tower coordinate vector too long");
        PadicElement {
            field: FieldRef::Ext(tower),
            repr: Repr::Ext(coords),
        }
    }

    pub fn zero(field: FieldRef, modexp: i64) -> PadicElement {
        match &field {
            FieldRef::Base(f) => {
                let d = f.degree();
                PadicElement {
                    field,
                    repr: Repr::Base {
                        pshift: 0,
                        modexp: modexp.max(1),
                        coords: vec![BigInt::zero(); d],
                    },
                }
            }
            FieldRef::Ext(t) => {
                let t = t.clone();
                let base = FieldRef::Base(t.base.clone());
                let coords = vec![PadicElement::zero(base, modexp); t.degree];
                PadicElement::from_ext_coords(t, coords)
            }
        }
    }

    pub fn from_bigint(field: FieldRef, n: BigInt) -> PadicElement {
        let modexp = field.default_modexp();
        match &field {
            FieldRef::Base(f) => {
                let d = f.degree();
                let mut coords = vec![BigInt::zero(); d];
                coords[0] = n;
                PadicElement::from_base_coords(field, coords, 0, modexp)
            }
            FieldRef::Ext(t) => {
                let t = t.clone();
                let base = FieldRef::Base(t.base.clone());
                let mut coords = vec![base.zero(); t.degree];
                coords[0] = PadicElement::from_bigint(base, n);
                PadicElement::from_ext_coords(t, coords)
            }
        }
    }

    pub fn from_i64(field: FieldRef, n: i64) -> PadicElement {
        PadicElement::from_bigint(field, BigInt::from(n))
    }

    pub fn field(&self) -> &FieldRef {
        &self.field
    }

    // ---------------------------------------------------------------
    // normalization and precision bookkeeping
    // ---------------------------------------------------------------

    fn reduce(&mut self) {
        if let Repr::Base {
            pshift,
            modexp,
            coords,
        } = &mut self.repr
        {
            let f = match &self.field {
                FieldRef::Base(f) => f.clone(),
                _ => unreachable!(),
            };
            let m = f.p_pow(*modexp);
            for c in coords.iter_mut() {
                *c = c.mod_floor(&m);
            }
            // strip shared powers of p out of the denominator
            let pb = BigInt::from(f.p);
            while *pshift > 0
                && *modexp > 1
                && coords.iter().all(|c| (c % &pb).is_zero())
            {
                for c in coords.iter_mut() {
                    *c /= &pb;
                }
                *pshift -= 1;
                *modexp -= 1;
            }
        }
    }

    /// Certified absolute precision in p-digits.
    pub fn certified_pdigits(&self) -> i64 {
        match &self.repr {
            Repr::Base { pshift, modexp, .. } => modexp - pshift,
            Repr::Ext(coords) => coords
                .iter()
                .map(|c| c.certified_pdigits())
                .min()
                .unwrap_or(0),
        }
    }

    /// Certified absolute precision in pi_L-digits of the base field.
    pub fn certified_pidigits(&self) -> i64 {
        self.certified_pdigits() * self.field.base().e as i64
    }

    fn denom_pdigits(&self) -> i64 {
        match &self.repr {
            Repr::Base { pshift, .. } => (*pshift).max(0),
            Repr::Ext(coords) => coords.iter().map(|c| c.denom_pdigits()).max().unwrap_or(0),
        }
    }

    pub fn ensure_certified(&self, pdigits: i64) -> Result<()> {
        if self.certified_pdigits() < pdigits {
            return Err(Error::PrecisionExhausted(format!(
                "requested {pdigits} certified p-digits, have {}",
                self.certified_pdigits()
            )));
        }
        Ok(())
    }

    /// Forgets precision beyond `pdigits` certified digits (used to model a
    /// documented loss that the coordinate arithmetic cannot see).
    pub fn cap_certified(&self, pdigits: i64) -> PadicElement {
        if self.certified_pdigits() <= pdigits {
            return self.clone();
        }
        match &self.repr {
            Repr::Base {
                pshift,
                modexp: _,
                coords,
            } => PadicElement::from_base_coords(
                self.field.clone(),
                coords.clone(),
                *pshift,
                pdigits + *pshift,
            ),
            Repr::Ext(coords) => {
                let t = match &self.field {
                    FieldRef::Ext(t) => t.clone(),
                    _ => unreachable!(),
                };
                PadicElement::from_ext_coords(
                    t,
                    coords.iter().map(|c| c.cap_certified(pdigits)).collect(),
                )
            }
        }
    }

    /// Raises the claimed certification by padding the modulus; the caller
    /// must know the representative is exact to that depth (used by Newton
    /// refinements, whose iteration corrects representative digits).
    pub(crate) fn assume_certified(&self, pdigits: i64) -> PadicElement {
        if self.certified_pdigits() >= pdigits {
            return self.clone();
        }
        match &self.repr {
            Repr::Base {
                pshift, coords, ..
            } => PadicElement::from_base_coords(
                self.field.clone(),
                coords.clone(),
                *pshift,
                pdigits + *pshift,
            ),
            Repr::Ext(coords) => {
                let t = match &self.field {
                    FieldRef::Ext(t) => t.clone(),
                    _ => unreachable!(),
                };
                PadicElement::from_ext_coords(
                    t,
                    coords.iter().map(|c| c.assume_certified(pdigits)).collect(),
                )
            }
        }
    }

    pub fn is_zero_at_precision(&self) -> bool {
        match &self.repr {
            Repr::Base { coords, .. } => coords.iter().all(|c| c.is_zero()),
            Repr::Ext(coords) => coords.iter().all(|c| c.is_zero_at_precision()),
        }
    }

    // ---------------------------------------------------------------
    // ring operations
    // ---------------------------------------------------------------

    fn coerce_pair(a: &PadicElement, b: &PadicElement) -> (PadicElement, PadicElement) {
        if a.field.same(&b.field) {
            return (a.clone(), b.clone());
        }
        match (&a.field, &b.field) {
            (FieldRef::Base(_), FieldRef::Ext(t)) => (t.clone().embed_base(a), b.clone()),
            (FieldRef::Ext(t), FieldRef::Base(_)) => (a.clone(), t.clone().embed_base(b)),
            (FieldRef::Ext(ta), FieldRef::Ext(tb)) => {
                if ta.level < tb.level {
                    (tb.clone().embed_from_lower(a), b.clone())
                } else if tb.level < ta.level {
                    (a.clone(), ta.clone().embed_from_lower(b))
                } else {
                    panic!("elements of distinct fields of the same level");
                }
            }
            _ => panic!("elements of distinct base fields"),
        }
    }

    pub fn add(&self, other: &PadicElement) -> PadicElement {
        let (a, b) = PadicElement::coerce_pair(self, other);
        match (&a.repr, &b.repr) {
            (
                Repr::Base {
                    pshift: sa,
                    modexp: ea,
                    coords: ca,
                },
                Repr::Base {
                    pshift: sb,
                    modexp: eb,
                    coords: cb,
                },
            ) => {
                let f = a.field.base();
                let cert = (ea - sa).min(eb - sb);
                let s = (*sa).max(*sb);
                let modexp = (cert + s).max(1);
                let fa = f.p_pow(s - sa);
                let fb = f.p_pow(s - sb);
                let coords: Vec<BigInt> = ca
                    .iter()
                    .zip(cb.iter())
                    .map(|(x, y)| x * &fa + y * &fb)
                    .collect();
                PadicElement::from_base_coords(a.field.clone(), coords, s, modexp)
            }
            (Repr::Ext(ca), Repr::Ext(cb)) => {
                let t = match &a.field {
                    FieldRef::Ext(t) => t.clone(),
                    _ => unreachable!(),
                };
                let coords = ca.iter().zip(cb.iter()).map(|(x, y)| x.add(y)).collect();
                PadicElement::from_ext_coords(t, coords)
            }
            _ => unreachable!(),
        }
    }

    pub fn neg(&self) -> PadicElement {
        match &self.repr {
            Repr::Base {
                pshift,
                modexp,
                coords,
            } => PadicElement::from_base_coords(
                self.field.clone(),
                coords.iter().map(|c| -c).collect(),
                *pshift,
                *modexp,
            ),
            Repr::Ext(coords) => {
                let t = match &self.field {
                    FieldRef::Ext(t) => t.clone(),
                    _ => unreachable!(),
                };
                PadicElement::from_ext_coords(t, coords.iter().map(|c| c.neg()).collect())
            }
        }
    }

    pub fn sub(&self, other: &PadicElement) -> PadicElement {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &PadicElement) -> PadicElement {
        let (a, b) = PadicElement::coerce_pair(self, other);
        match (&a.repr, &b.repr) {
            (
                Repr::Base {
                    pshift: sa,
                    modexp: ea,
                    coords: ca,
                },
                Repr::Base {
                    pshift: sb,
                    modexp: eb,
                    coords: cb,
                },
            ) => {
                let (sa, ea, sb, eb) = (*sa, *ea, *sb, *eb);
                let f = a.field.base();
                let d = f.degree();
                // product of values known mod p^{ea-sa}, p^{eb-sb}; the
                // cross terms scale by the partner's denominator
                let cert = (ea - sa - sb.max(0)).min(eb - sb - sa.max(0));
                let pshift = sa + sb;
                let modexp = (cert + pshift).max(1);
                let mut conv = vec![BigInt::zero(); 2 * d - 1];
                for (i, x) in ca.iter().enumerate() {
                    if x.is_zero() {
                        continue;
                    }
                    for (j, y) in cb.iter().enumerate() {
                        conv[i + j] += x * y;
                    }
                }
                // reduce modulo the monic defining polynomial
                for i in (d..conv.len()).rev() {
                    if conv[i].is_zero() {
                        continue;
                    }
                    let c = std::mem::replace(&mut conv[i], BigInt::zero());
                    for j in 0..d {
                        conv[i - d + j] -= &c * &f.poly[j];
                    }
                }
                conv.truncate(d);
                PadicElement::from_base_coords(a.field.clone(), conv, pshift, modexp)
            }
            (Repr::Ext(ca), Repr::Ext(cb)) => {
                let t = match &a.field {
                    FieldRef::Ext(t) => t.clone(),
                    _ => unreachable!(),
                };
                let d = t.degree;
                let basef = FieldRef::Base(t.base.clone());
                let mut conv = vec![basef.zero(); 2 * d - 1];
                for (i, x) in ca.iter().enumerate() {
                    if x.is_zero_at_precision() && x.certified_pdigits() > 0 {
                        // still need precision interaction; cheap skip only
                        // when the partner row would not lower certification
                    }
                    for (j, y) in cb.iter().enumerate() {
                        conv[i + j] = conv[i + j].add(&x.mul(y));
                    }
                }
                for i in (d..conv.len()).rev() {
                    let c = conv[i].clone();
                    conv[i] = basef.zero();
                    for j in 0..d {
                        let sub = c.mul(&t.modulus[j]);
                        conv[i - d + j] = conv[i - d + j].sub(&sub);
                    }
                }
                conv.truncate(d);
                PadicElement::from_ext_coords(t, conv)
            }
            _ => unreachable!(),
        }
    }

    pub fn mul_i64(&self, n: i64) -> PadicElement {
        self.mul_bigint(&BigInt::from(n))
    }

    pub fn mul_bigint(&self, n: &BigInt) -> PadicElement {
        match &self.repr {
            Repr::Base {
                pshift,
                modexp,
                coords,
            } => PadicElement::from_base_coords(
                self.field.clone(),
                coords.iter().map(|c| c * n).collect(),
                *pshift,
                *modexp,
            ),
            Repr::Ext(coords) => {
                let t = match &self.field {
                    FieldRef::Ext(t) => t.clone(),
                    _ => unreachable!(),
                };
                PadicElement::from_ext_coords(t, coords.iter().map(|c| c.mul_bigint(n)).collect())
            }
        }
    }

    /// Multiplies by p^k (k may be negative; k = -1 is division by p and
    /// loses exactly one certified p-digit).
    pub fn mul_pow_p(&self, k: i64) -> PadicElement {
        match &self.repr {
            Repr::Base {
                pshift,
                modexp,
                coords,
            } => {
                let f = self.field.base();
                let mut pshift = pshift - k;
                let mut modexp = *modexp;
                let mut coords = coords.clone();
                if pshift < 0 {
                    let lift = -pshift;
                    let m = f.p_pow(lift);
                    for c in coords.iter_mut() {
                        *c *= &m;
                    }
                    modexp += lift;
                    pshift = 0;
                }
                PadicElement::from_base_coords(self.field.clone(), coords, pshift, modexp)
            }
            Repr::Ext(coords) => {
                let t = match &self.field {
                    FieldRef::Ext(t) => t.clone(),
                    _ => unreachable!(),
                };
                PadicElement::from_ext_coords(t, coords.iter().map(|c| c.mul_pow_p(k)).collect())
            }
        }
    }

    pub fn pow(&self, mut k: u64) -> PadicElement {
        let mut acc = PadicElement::from_i64(self.field.clone(), 1);
        let mut base = self.clone();
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            k >>= 1;
        }
        acc
    }

    pub fn pow_i64(&self, k: i64) -> Result<PadicElement> {
        if k >= 0 {
            Ok(self.pow(k as u64))
        } else {
            Ok(self.inverse()?.pow((-k) as u64))
        }
    }

    // ---------------------------------------------------------------
    // valuation
    // ---------------------------------------------------------------

    /// p-normalized valuation (v(p) = 1); None when the element vanishes at
    /// the working precision.
    pub fn valuation(&self) -> Option<Ratio<i64>> {
        match &self.repr {
            Repr::Base {
                pshift,
                modexp,
                coords,
            } => {
                let f = self.field.base();
                let e = f.e as i64;
                let mut best: Option<Ratio<i64>> = None;
                for (i, c) in coords.iter().enumerate() {
                    let v = vp_capped(c, f.p, *modexp);
                    if v >= *modexp {
                        continue;
                    }
                    let val = match f.kind {
                        Presentation::Eisenstein => Ratio::new(v * e + i as i64, e),
                        Presentation::Unramified => Ratio::from_integer(v),
                    };
                    best = Some(match best {
                        None => val,
                        Some(b) => b.min(val),
                    });
                }
                best.map(|b| b - Ratio::from_integer(*pshift))
            }
            Repr::Ext(coords) => {
                let t = match &self.field {
                    FieldRef::Ext(t) => t,
                    _ => unreachable!(),
                };
                let eta_val = Ratio::new(1i64, t.base.e as i64 * t.degree as i64);
                let mut best: Option<Ratio<i64>> = None;
                for (j, c) in coords.iter().enumerate() {
                    if let Some(v) = c.valuation() {
                        let val = v + eta_val * Ratio::from_integer(j as i64);
                        best = Some(match best {
                            None => val,
                            Some(b) => b.min(val),
                        });
                    }
                }
                best
            }
        }
    }

    /// Valuation in pi_L-digits of the base field.
    pub fn pi_valuation(&self) -> Option<Ratio<i64>> {
        self.valuation()
            .map(|v| v * Ratio::from_integer(self.field.base().e as i64))
    }

    // ---------------------------------------------------------------
    // inversion
    // ---------------------------------------------------------------

    /// Inverse of the structural uniformizer: X for an Eisenstein base of
    /// degree >= 2, p otherwise, and the tower generator for tower fields.
    fn structural_uniformizer_inv(&self) -> PadicElement {
        match &self.field {
            FieldRef::Base(f) => {
                let d = f.degree();
                if f.kind == Presentation::Unramified || d == 1 {
                    PadicElement::from_i64(self.field.clone(), 1).mul_pow_p(-1)
                } else {
                    // X * (X^{d-1} + a_{d-1} X^{d-2} + ... + a_1) = -a_0
                    let modexp = self.modexp_hint();
                    let pb = BigInt::from(f.p);
                    let m = &f.poly[0] / &pb; // a_0 = p*m, m a unit
                    let minv = mod_inverse(&m, &f.p_pow(modexp), f.p);
                    let mut coords = vec![BigInt::zero(); d];
                    for i in 1..d {
                        coords[i - 1] = -(&f.poly[i] * &minv);
                    }
                    coords[d - 1] = -&minv;
                    PadicElement::from_base_coords(self.field.clone(), coords, 1, modexp)
                }
            }
            FieldRef::Ext(t) => {
                // eta * (eta^{D-1} + c_{D-1} eta^{D-2} + ... + c_1) = -c_0
                let t = t.clone();
                let basef = FieldRef::Base(t.base.clone());
                let d = t.degree;
                let c0inv = t.modulus[0]
                    .inverse()
                    .expect("Eisenstein constant term must be invertible");
                let mut coords = vec![basef.zero(); d];
                for i in 1..d {
                    coords[i - 1] = t.modulus[i].neg().mul(&c0inv);
                }
                coords[d - 1] = c0inv.neg();
                PadicElement::from_ext_coords(t, coords)
            }
        }
    }

    fn modexp_hint(&self) -> i64 {
        match &self.repr {
            Repr::Base { modexp, .. } => *modexp,
            Repr::Ext(coords) => coords.iter().map(|c| c.modexp_hint()).max().unwrap_or(1),
        }
    }

    /// Structural residue inverse used to seed the Newton iteration; the
    /// argument must be an integral unit.
    fn residue_inverse(&self) -> PadicElement {
        match (&self.field, &self.repr) {
            (FieldRef::Base(f), Repr::Base { coords, .. }) => match f.kind {
                Presentation::Eisenstein => {
                    let r = coords[0].mod_floor(&BigInt::from(f.p));
                    let rinv = mod_inverse(&r, &BigInt::from(f.p), f.p);
                    PadicElement::from_bigint(self.field.clone(), rinv)
                }
                Presentation::Unramified => {
                    let p = f.p;
                    let red: Vec<u64> = coords
                        .iter()
                        .map(|c| {
                            let m = c.mod_floor(&BigInt::from(p));
                            m.to_u64_digits().1.first().copied().unwrap_or(0)
                        })
                        .collect();
                    let modulus: Vec<u64> = f
                        .poly
                        .iter()
                        .map(|c| {
                            let m = c.mod_floor(&BigInt::from(p));
                            m.to_u64_digits().1.first().copied().unwrap_or(0)
                        })
                        .collect();
                    let inv = fq_inverse(&red, &modulus, p);
                    let coords: Vec<BigInt> = inv.into_iter().map(BigInt::from).collect();
                    PadicElement::from_base_coords(
                        self.field.clone(),
                        coords,
                        0,
                        self.modexp_hint(),
                    )
                }
            },
            (FieldRef::Ext(_), Repr::Ext(coords)) => {
                // residue field of the tower equals k_L, carried by the
                // constant coordinate
                let c0inv = coords[0].inverse().expect("unit constant coordinate");
                match &self.field {
                    FieldRef::Ext(t) => t.clone().embed_base(&c0inv),
                    _ => unreachable!(),
                }
            }
            _ => unreachable!(),
        }
    }

    /// Multiplicative inverse. Fails with `NotInvertible` when the element
    /// vanishes at the working precision. Division by an element of positive
    /// valuation w loses w in absolute precision, as documented by the
    /// denominator bookkeeping.
    pub fn inverse(&self) -> Result<PadicElement> {
        let v = self.valuation().ok_or_else(|| {
            Error::NotInvertible("element is zero at working precision".into())
        })?;
        // write self = U^t * u with U the structural uniformizer
        let struct_e: i64 = match &self.field {
            FieldRef::Base(f) => match f.kind {
                Presentation::Eisenstein if f.degree() > 1 => f.e as i64,
                _ => 1,
            },
            FieldRef::Ext(tw) => tw.base.e as i64 * tw.degree as i64,
        };
        let scaled = v * Ratio::from_integer(struct_e);
        assert!(scaled.is_integer(), "valuation incompatible with basis");
        let t = scaled.to_integer();
        let uinv = self.structural_uniformizer_inv();
        let upos = self.structural_uniformizer();
        let unit = if t >= 0 {
            self.mul(&uinv.pow(t as u64))
        } else {
            self.mul(&upos.pow((-t) as u64))
        };
        let unit_inv = unit.inverse_unit_like()?;
        let result = if t >= 0 {
            unit_inv.mul(&uinv.pow(t as u64))
        } else {
            unit_inv.mul(&upos.pow((-t) as u64))
        };
        Ok(result)
    }

    /// The structural uniformizer itself (X, p, or eta).
    fn structural_uniformizer(&self) -> PadicElement {
        match &self.field {
            FieldRef::Base(f) => {
                let d = f.degree();
                if f.kind == Presentation::Unramified || d == 1 {
                    PadicElement::from_i64(self.field.clone(), 1).mul_pow_p(1)
                } else {
                    let mut coords = vec![BigInt::zero(); d];
                    coords[1] = BigInt::one();
                    PadicElement::from_base_coords(
                        self.field.clone(),
                        coords,
                        0,
                        self.modexp_hint(),
                    )
                }
            }
            FieldRef::Ext(t) => t.eta(),
        }
    }

    /// Newton inversion of a unit (valuation zero).
    fn inverse_unit_like(&self) -> Result<PadicElement> {
        let v = self.valuation().ok_or_else(|| {
            Error::NotInvertible("element is zero at working precision".into())
        })?;
        if !v.is_zero() {
            return Err(Error::NotInvertible(format!(
                "expected a unit, found valuation {v}"
            )));
        }
        let one = PadicElement::from_i64(self.field.clone(), 1);
        let mut y = self.residue_inverse();
        let target = self.certified_pdigits().max(1) * self.field.base().e as i64;
        for _ in 0..64 {
            let err = one.sub(&self.mul(&y));
            match err.pi_valuation() {
                None => break,
                Some(w) if w >= Ratio::from_integer(target) => break,
                _ => {}
            }
            // y <- y (2 - u y)
            let two_minus = one.add(&err);
            y = y.mul(&two_minus);
        }
        Ok(y)
    }

    pub fn div(&self, other: &PadicElement) -> Result<PadicElement> {
        Ok(self.mul(&other.inverse()?))
    }

    /// Divides by an integer (the unit part costs nothing, each power of p
    /// in the divisor costs one certified digit).
    pub fn div_i64(&self, n: i64) -> Result<PadicElement> {
        if n == 0 {
            return Err(Error::NotInvertible("division by zero integer".into()));
        }
        let p = self.field.p() as i64;
        let mut n = n;
        let mut k = 0;
        while n % p == 0 {
            n /= p;
            k += 1;
        }
        let modexp = self.modexp_hint();
        let ninv = mod_inverse(
            &BigInt::from(n),
            &self.field.base().p_pow(modexp),
            self.field.p(),
        );
        Ok(self.mul_bigint(&ninv).mul_pow_p(-k))
    }

    // ---------------------------------------------------------------
    // comparisons
    // ---------------------------------------------------------------

    /// Number of certified p-digits on which the two elements agree:
    /// the valuation of the difference, floored at the common certification.
    pub fn agreement_pdigits(&self, other: &PadicElement) -> i64 {
        let diff = self.sub(other);
        let cert = diff.certified_pdigits();
        match diff.valuation() {
            None => cert,
            Some(v) => {
                let floor = v.floor().to_integer();
                floor.min(cert)
            }
        }
    }

    pub fn agrees_to(&self, other: &PadicElement, pdigits: i64) -> bool {
        self.agreement_pdigits(other) >= pdigits
    }

    // ---------------------------------------------------------------
    // access
    // ---------------------------------------------------------------

    pub fn base_coords(&self) -> (&[BigInt], i64, i64) {
        match &self.repr {
            Repr::Base {
                pshift,
                modexp,
                coords,
            } => (coords, *pshift, *modexp),
            _ => panic!("not a base element"),
        }
    }

    pub fn ext_coords(&self) -> &[PadicElement] {
        match &self.repr {
            Repr::Ext(coords) => coords,
            _ => panic!("not a tower element"),
        }
    }

    /// Canonical residue of an integral 1-dimensional (rational) element as
    /// an integer in [0, p^modexp).
    pub fn rational_residue(&self) -> Option<BigInt> {
        match &self.repr {
            Repr::Base {
                pshift, coords, ..
            } => {
                if self.field.degree() != 1 || *pshift > 0 {
                    return None;
                }
                Some(coords[0].clone())
            }
            _ => None,
        }
    }
}

impl std::fmt::Debug for PadicElement {
    fn fmt(&self, fmt: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.repr {
            Repr::Base {
                pshift,
                modexp,
                coords,
            } => {
                write!(fmt, "(")?;
                for (i, c) in coords.iter().enumerate() {
                    if i > 0 {
                        write!(fmt, ", ")?;
                    }
                    write!(fmt, "{c}")?;
                }
                write!(fmt, ")/p^{pshift} mod p^{modexp}")
            }
            Repr::Ext(coords) => {
                write!(fmt, "[")?;
                for (i, c) in coords.iter().enumerate() {
                    if i > 0 {
                        write!(fmt, "; ")?;
                    }
                    write!(fmt, "{c:?}")?;
                }
                write!(fmt, "]")
            }
        }
    }
}

/// Modular inverse of a unit modulo p^k (the modulus is given directly).
fn mod_inverse(a: &BigInt, modulus: &BigInt, p: u64) -> BigInt {
    let a = a.mod_floor(modulus);
    assert!(
        !(&a % BigInt::from(p)).is_zero(),
        "modular inverse of a non-unit"
    );
    let eg = a.extended_gcd(modulus);
    assert!(eg.gcd.is_one(), "gcd not 1 in modular inverse");
    eg.x.mod_floor(modulus)
}

/// Inverse in F_q = F_p[x]/(m) via the extended Euclidean algorithm.
fn fq_inverse(a: &[u64], m: &[u64], p: u64) -> Vec<u64> {
    super::field::fp_poly::inverse(a, m, p)
}

/// Teichmueller lift: the unique root of x^q = x reducing to the residue
/// class of `class` (an integral element). Returns zero for the zero class.
pub fn teichmuller(class: &PadicElement) -> PadicElement {
    let q = match &class.field {
        FieldRef::Base(f) => f.q,
        FieldRef::Ext(t) => t.base.q,
    };
    let mut x = class.clone();
    if x.is_zero_at_precision() {
        return x;
    }
    let steps = x.certified_pdigits().max(4) + 2;
    for _ in 0..steps {
        let next = x.pow(q);
        if next.agreement_pdigits(&x) >= x.certified_pdigits() {
            x = next;
            break;
        }
        x = next;
    }
    x
}
