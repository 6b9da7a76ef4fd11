//! Finite-level measures on the cyclotomic Galois tower, their Mellin
//! transforms, character evaluation, Gauss sums and idempotents, the
//! descent maps built from them, one-dimensional crystalline lines with
//! scalar Frobenius, Gamma-factor values of the Lie-algebra operators, and
//! the regulator-series identities at the cyclotomic specialization (where
//! the Mellin unit is 1+Z and the period normalization is trivial).

use std::collections::BTreeMap;
use std::sync::Arc;

use num_rational::Ratio;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::lubin_tate::FormalGroup;
use crate::operators::OperatorContext;
use crate::padic::{FieldRef, PadicElement, TowerField};
use crate::series::{TruncatedSeries, Var};

// ---------------------------------------------------------------------
// context
// ---------------------------------------------------------------------

/// Distribution-layer context; requires the cyclotomic configuration
/// (multiplicative formal group over Q_p), where the Mellin unit is 1+Z.
pub struct DistContext {
    pub group: Arc<FormalGroup>,
    pub p: u64,
}

impl DistContext {
    pub fn new(group: Arc<FormalGroup>) -> Result<DistContext> {
        let p = group.field.p;
        if group.field.degree() != 1 {
            return Err(Error::NotCyclotomic("base field must be Q_p".into()));
        }
        // frobenius must be (1+Z)^p - 1
        let fr = group.base_ref();
        for (k, c) in group.frobenius.iter().enumerate() {
            let expect = if k == 0 {
                fr.zero()
            } else {
                PadicElement::from_bigint(fr.clone(), crate::series::binomial(p, k as u64))
            };
            if !c.agrees_to(&expect, 4) {
                return Err(Error::NotCyclotomic(
                    "Frobenius series is not (1+Z)^p - 1".into(),
                ));
            }
        }
        Ok(DistContext { group, p })
    }

    pub fn base_ref(&self) -> FieldRef {
        self.group.base_ref()
    }

    pub fn tower(&self, n: u32) -> Result<Arc<TowerField>> {
        self.group.tower(n)
    }

    fn pn(&self, n: u32) -> u64 {
        self.p.pow(n)
    }

    fn units_mod(&self, n: u32) -> Vec<u64> {
        (1..self.pn(n)).filter(|a| a % self.p != 0).collect()
    }

    /// zeta_{p^m} = 1 + eta_m expressed inside L_n (m <= n).
    pub fn zeta(&self, n: u32, m: u32) -> Result<PadicElement> {
        let tn = self.tower(n)?;
        let one = PadicElement::from_i64(tn.field_ref(), 1);
        Ok(tn.eta_image(m).add(&one))
    }
}

// ---------------------------------------------------------------------
// measures
// ---------------------------------------------------------------------

/// A level-n measure: finitely many values on (Z/p^n)^*, taken in L_n.
#[derive(Clone)]
pub struct FiniteMeasure {
    pub level: u32,
    pub values: BTreeMap<u64, PadicElement>,
    pub label: String,
}

impl FiniteMeasure {
    pub fn dirac(ctx: &DistContext, n: u32, a: u64) -> Result<FiniteMeasure> {
        let tn = ctx.tower(n)?;
        let mut values = BTreeMap::new();
        for b in ctx.units_mod(n) {
            let v = if b == a % ctx.pn(n) {
                PadicElement::from_i64(tn.field_ref(), 1)
            } else {
                PadicElement::zero(tn.field_ref(), tn.base.default_modexp)
            };
            values.insert(b, v);
        }
        Ok(FiniteMeasure {
            level: n,
            values,
            label: format!("dirac({a})"),
        })
    }

    pub fn from_values(n: u32, values: BTreeMap<u64, PadicElement>, label: &str) -> FiniteMeasure {
        FiniteMeasure {
            level: n,
            values,
            label: label.into(),
        }
    }

    /// The multiplied measure a |-> a mu(a) (the derivative twist).
    pub fn times_argument(&self) -> FiniteMeasure {
        let values = self
            .values
            .iter()
            .map(|(a, v)| (*a, v.mul_i64(*a as i64)))
            .collect();
        FiniteMeasure {
            level: self.level,
            values,
            label: format!("a*{}", self.label),
        }
    }
}

/// The Mellin transform at level n: sum mu(a) (1+Z)^a, a polynomial of
/// degree < p^n over L_n.
pub fn mellin_level_n(ctx: &DistContext, mu: &FiniteMeasure) -> Result<TruncatedSeries> {
    let n = mu.level;
    let tn = ctx.tower(n)?;
    let cap = ctx.pn(n) as i64 - 1;
    let one = PadicElement::from_i64(tn.field_ref(), 1);
    let mut coeffs = vec![PadicElement::zero(tn.field_ref(), tn.base.default_modexp); cap as usize + 1];
    // (1+Z)^a accumulated over increasing a
    let mut pow: Vec<PadicElement> = vec![one.clone()];
    for a in 1..=(cap as u64) {
        // multiply by (1+Z)
        let mut next = vec![PadicElement::zero(tn.field_ref(), tn.base.default_modexp); pow.len() + 1];
        for (i, c) in pow.iter().enumerate() {
            next[i] = next[i].add(c);
            next[i + 1] = next[i + 1].add(c);
        }
        pow = next;
        if let Some(v) = mu.values.get(&a) {
            if !v.is_zero_at_precision() {
                for (i, c) in pow.iter().enumerate() {
                    coeffs[i] = coeffs[i].add(&v.mul(c));
                }
            }
        }
    }
    Ok(TruncatedSeries::from_polynomial(
        tn.field_ref(),
        Var::Z,
        0,
        coeffs,
        cap,
    ))
}

/// Checks that the Mellin representative is killed by the trace sum over
/// the pi-torsion translates (the psi = 0 property of the image).
pub fn mellin_psi_zero_check(
    ctx: &DistContext,
    ops: &OperatorContext,
    rep: &TruncatedSeries,
    digits: i64,
) -> Result<bool> {
    let _ = ctx;
    let mut acc: Option<TruncatedSeries> = None;
    let l1 = ops.group.tower(1)?;
    let target = match &rep.field {
        FieldRef::Ext(t) => t.clone(),
        FieldRef::Base(_) => l1.clone(),
    };
    for a in &ops.lt1 {
        let term = if a.is_zero_at_precision() {
            rep.promote(&target.field_ref())
        } else {
            let t = ops.group.translation_series(a, rep.zcap.max(8))?;
            let t = t.promote(&target.field_ref());
            rep.promote(&target.field_ref())
                .compose_small_constant(&t, ops.target_pdigits)?
        };
        acc = Some(match acc {
            None => term,
            Some(s) => s.add(&term),
        });
    }
    let sum = acc.expect("LT_1 nonempty");
    for k in sum.lowest..=sum.zcap {
        let c = sum.coeff(k);
        let want = digits.min(c.certified_pdigits());
        if want <= 0 {
            continue;
        }
        match c.valuation() {
            None => {}
            Some(v) => {
                if v < Ratio::from_integer(want) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Character-and-power evaluation: sum rho(a) a^j mu(a).
pub fn eval_character(
    mu: &FiniteMeasure,
    rho: &CharacterData,
    j: i64,
) -> Result<PadicElement> {
    if rho.level != mu.level {
        return Err(Error::LevelMismatch(format!(
            "measure at level {}, character at level {}",
            mu.level, rho.level
        )));
    }
    let mut acc: Option<PadicElement> = None;
    for (a, v) in &mu.values {
        let r = rho.value(*a)?;
        let base = FieldRef::Base(r.field().base());
        let aj = PadicElement::from_i64(base, *a as i64).pow_i64(j)?;
        let term = r.mul(v).mul(&match r.field() {
            FieldRef::Ext(t) => t.embed_from_lower(&aj),
            FieldRef::Base(_) => aj,
        });
        acc = Some(match acc {
            None => term,
            Some(s) => s.add(&term),
        });
    }
    acc.ok_or_else(|| Error::LevelMismatch("empty measure".into()))
}

// ---------------------------------------------------------------------
// characters
// ---------------------------------------------------------------------

/// A character of (Z/p^n)^* with values in L_n.
#[derive(Clone)]
pub struct CharacterData {
    pub level: u32,
    pub conductor: u32,
    pub index: u64,
    /// p^level.
    pub modulus: u64,
    values: BTreeMap<u64, PadicElement>,
}

impl CharacterData {
    pub fn value(&self, a: u64) -> Result<PadicElement> {
        let key = a % self.modulus;
        self.values
            .get(&key)
            .cloned()
            .ok_or_else(|| Error::NotAUnit(format!("{a} is not a unit at level {}", self.level)))
    }

    pub fn inverse_value(&self, a: u64) -> Result<PadicElement> {
        // values are roots of unity; they invert exactly
        self.value(a)?.inverse()
    }

    pub fn is_trivial(&self) -> bool {
        self.conductor == 0
    }
}

fn primitive_root_mod_pn(p: u64, n: u32) -> u64 {
    // p odd: a generator mod p^2 generates mod every p^n
    let pn = p.pow(n.max(1));
    let phi = (p - 1) * p.pow(n.max(1) - 1);
    'cand: for g in 2..pn {
        if g % p == 0 {
            continue;
        }
        // order check via the prime factors of phi
        let mut facs = vec![];
        let mut m = phi;
        let mut d = 2;
        while d * d <= m {
            if m % d == 0 {
                facs.push(d);
                while m % d == 0 {
                    m /= d;
                }
            }
            d += 1;
        }
        if m > 1 {
            facs.push(m);
        }
        for f in facs {
            if pow_mod(g, phi / f, pn) == 1 {
                continue 'cand;
            }
        }
        return g;
    }
    unreachable!("no primitive root found");
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1u128;
    let mm = m as u128;
    let mut bb = b as u128 % mm;
    while e > 0 {
        if e & 1 == 1 {
            r = r * bb % mm;
        }
        bb = bb * bb % mm;
        e >>= 1;
        b = 0;
    }
    let _ = b;
    r as u64
}

/// Enumerates all characters of (Z/p^n)^* with values in L_n: the group is
/// cyclic for odd p, generated by a primitive root; a primitive root of
/// unity of order (p-1)p^{n-1} lives in L_n as the product of the
/// Teichmueller unit and zeta_{p^{n-1}}.
pub fn characters(ctx: &DistContext, n: u32) -> Result<Vec<CharacterData>> {
    let p = ctx.p;
    let pn = ctx.pn(n);
    let phi = (p - 1) * p.pow(n - 1);
    let tn = ctx.tower(n)?;
    let g = primitive_root_mod_pn(p, n);
    // zeta of order (p-1): Teichmueller lift of a generator of F_p^*
    let g0 = primitive_root_mod_pn(p, 1);
    let om = crate::padic::teichmuller(&PadicElement::from_i64(ctx.base_ref(), g0 as i64));
    let om = tn.embed_from_lower(&om);
    // zeta of order p^{n-1}
    let zeta_small = if n >= 2 {
        ctx.zeta(n, n - 1)?
    } else {
        PadicElement::from_i64(tn.field_ref(), 1)
    };
    let zeta = om.mul(&zeta_small); // order lcm(p-1, p^{n-1}) = phi
    let mut out = Vec::with_capacity(phi as usize);
    for k in 0..phi {
        // rho(g^i) = zeta^{ik}
        let mut values = BTreeMap::new();
        let mut a = 1u64;
        let mut z = PadicElement::from_i64(tn.field_ref(), 1);
        let zk = zeta.pow(k);
        for _ in 0..phi {
            values.insert(a, z.clone());
            a = a * g % pn;
            z = z.mul(&zk);
        }
        // conductor: the least m with rho trivial on 1 + p^m Z
        let mut conductor = n;
        'lvl: for m in (0..n).rev() {
            let pm = p.pow(m);
            for b in ctx.units_mod(n) {
                if b % pm == 1 % pm {
                    let v = values.get(&b).unwrap();
                    if !v.agrees_to(&PadicElement::from_i64(tn.field_ref(), 1), 4) {
                        break 'lvl;
                    }
                }
            }
            conductor = m;
        }
        out.push(CharacterData {
            level: n,
            conductor,
            index: k,
            modulus: pn,
            values,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// Gauss sums and idempotents
// ---------------------------------------------------------------------

/// tau(rho) = sum over a mod p^{a(rho)} of rho(a)^{-1} zeta_{p^{a(rho)}}^a,
/// as an element of L_n (it lies in the subfield L_{a(rho)}).
pub fn gauss_sum(ctx: &DistContext, rho: &CharacterData) -> Result<PadicElement> {
    let m = rho.conductor;
    if m == 0 {
        return Err(Error::TrivialCharacter);
    }
    let n = rho.level;
    let zeta_m = ctx.zeta(n, m)?;
    let mut acc: Option<PadicElement> = None;
    for a in ctx.units_mod(m) {
        // restrict rho to level m: take any unit lift
        let lift = lift_unit(ctx, a, m, n);
        let rv = rho.inverse_value(lift)?;
        let term = rv.mul(&zeta_m.pow(a));
        acc = Some(match acc {
            None => term,
            Some(s) => s.add(&term),
        });
    }
    Ok(acc.expect("nonempty unit group"))
}

fn lift_unit(ctx: &DistContext, a: u64, m: u32, n: u32) -> u64 {
    // a unit mod p^m lifted to a unit mod p^n (any congruent lift works
    // because the character factors through level m)
    let _ = ctx;
    let _ = m;
    let _ = n;
    a
}

/// The idempotent applied to an element of L_n:
/// e_rho x = (1/[L_n:L]) sum rho(a)^{-1} sigma_a(x).
pub fn idempotent_apply(
    ctx: &DistContext,
    rho: &CharacterData,
    x: &PadicElement,
) -> Result<PadicElement> {
    let n = rho.level;
    let tn = ctx.tower(n)?;
    let mut acc: Option<PadicElement> = None;
    for a in ctx.units_mod(n) {
        let term = rho.inverse_value(a)?.mul(&tn.galois_apply(a, x)?);
        acc = Some(match acc {
            None => term,
            Some(s) => s.add(&term),
        });
    }
    acc.expect("nonempty").div_i64(tn.degree as i64)
}

/// The idempotent in the twisted sense of evaluation data: coefficients
/// stay inert and only the evaluation point moves,
/// e_rho . f(eta_m) = (1/[L_m:L]) sum rho(a)^{-1} f([a](eta_m)).
pub fn idempotent_on_evaluation(
    ctx: &DistContext,
    rho: &CharacterData,
    f: &TruncatedSeries,
    m: u32,
) -> Result<PadicElement> {
    let n = rho.level;
    let tn = ctx.tower(n)?;
    let tm = ctx.tower(m)?;
    let mut acc: Option<PadicElement> = None;
    for a in ctx.units_mod(m) {
        let conj = tm
            .galois()
            .iter()
            .find(|c| c.rep.residue_index == a)
            .ok_or_else(|| Error::NotAUnit(format!("missing class {a}")))?;
        let point = tn.embed_from_lower(&conj.image);
        let fv = f
            .promote(&tn.field_ref())
            .evaluate_with_tail(&point, Ratio::zero())?;
        let lift = lift_unit(ctx, a, m, n);
        let term = rho.inverse_value(lift)?.mul(&fv);
        acc = Some(match acc {
            None => term,
            Some(s) => s.add(&term),
        });
    }
    acc.expect("nonempty").div_i64(tm.degree as i64)
}

// ---------------------------------------------------------------------
// crystalline lines and the descent maps
// ---------------------------------------------------------------------

/// A one-dimensional phi-module: phi acts by the scalar.
#[derive(Clone)]
pub struct CrisLine {
    pub scalar: PadicElement,
    pub label: String,
}

impl CrisLine {
    pub fn new(scalar: PadicElement, label: &str) -> CrisLine {
        CrisLine {
            scalar,
            label: label.into(),
        }
    }

    /// The line with phi acting by pi^{-j} (basis t^{-j} tensor eta^j).
    pub fn e_line(group: &FormalGroup, j: i64) -> Result<CrisLine> {
        Ok(CrisLine::new(group.pi.pow_i64(-j)?, &format!("e_{j}")))
    }

    /// The auxiliary line with phi acting by pi/q.
    pub fn d_line(group: &FormalGroup) -> Result<CrisLine> {
        let q = PadicElement::from_i64(group.base_ref(), group.field.q as i64);
        Ok(CrisLine::new(group.pi.mul(&q.inverse()?), "d_1"))
    }

    pub fn tensor(&self, other: &CrisLine) -> CrisLine {
        CrisLine {
            scalar: self.scalar.mul(&other.scalar),
            label: format!("{}(x){}", self.label, other.label),
        }
    }
}

/// An element of K tensor L_n in the product presentation: one K-value per
/// unit class a, the class of sigma_a(eta_n)-evaluations.
#[derive(Clone)]
pub struct ProductVector {
    pub level: u32,
    pub comps: BTreeMap<u64, PadicElement>,
}

impl ProductVector {
    /// The image of an honest L_n-element: a |-> sigma_a(x).
    pub fn from_element(ctx: &DistContext, x: &PadicElement, n: u32) -> Result<ProductVector> {
        let tn = ctx.tower(n)?;
        let mut comps = BTreeMap::new();
        for a in ctx.units_mod(n) {
            comps.insert(a, tn.galois_apply(a, x)?);
        }
        Ok(ProductVector { level: n, comps })
    }

    pub fn scalar_mul(&self, c: &PadicElement) -> ProductVector {
        ProductVector {
            level: self.level,
            comps: self.comps.iter().map(|(a, v)| (*a, v.mul(c))).collect(),
        }
    }

    /// Partial trace down to level m: sums over the fibers mod p^m.
    pub fn trace_to(&self, ctx: &DistContext, m: u32) -> ProductVector {
        assert!(m >= 1 && m <= self.level);
        let pm = ctx.p.pow(m);
        let mut comps: BTreeMap<u64, PadicElement> = BTreeMap::new();
        for (a, v) in &self.comps {
            let b = a % pm;
            comps
                .entry(b)
                .and_modify(|s| *s = s.add(v))
                .or_insert_with(|| v.clone());
        }
        ProductVector { level: m, comps }
    }

    /// Full trace to the ground level: the sum of all components.
    pub fn trace_full(&self) -> PadicElement {
        let mut acc: Option<PadicElement> = None;
        for v in self.comps.values() {
            acc = Some(match acc {
                None => v.clone(),
                Some(s) => s.add(v),
            });
        }
        acc.expect("nonempty")
    }

    pub fn component(&self, a: u64) -> &PadicElement {
        self.comps.get(&a).expect("component exists")
    }
}

fn check_theta_scalar(one_minus: &PadicElement, what: &str) -> Result<()> {
    match one_minus.valuation() {
        Some(_) => Ok(()),
        None => Err(Error::DegenerateFrobenius(format!(
            "{what} vanishes at working precision"
        ))),
    }
}

/// The rho-component of the descent map: for the trivial character the
/// Euler-factor scalar applied to the full trace, otherwise the Gauss-sum
/// normalized twisted sum over the conductor level.
pub fn theta_component(
    ctx: &DistContext,
    line: &CrisLine,
    x: &ProductVector,
    rho: &CharacterData,
) -> Result<PadicElement> {
    let alpha = &line.scalar;
    let fr = ctx.base_ref();
    let one = PadicElement::from_i64(fr.clone(), 1);
    let q = PadicElement::from_i64(fr.clone(), ctx.group.field.q as i64);
    let n = x.level;
    let tn = ctx.tower(n)?;
    if rho.conductor == 0 {
        let a1 = one.sub(alpha);
        let a2 = one.sub(&q.inverse()?.mul(&alpha.inverse()?));
        check_theta_scalar(&a1, "1 - alpha")?;
        check_theta_scalar(&a2, "1 - alpha^{-1}/q")?;
        let scalar = a1.mul(&a2.inverse()?);
        let tr = x.trace_full();
        Ok(tr.mul(&tn.embed_from_lower(&scalar)))
    } else {
        let m = rho.conductor;
        let tau = gauss_sum(ctx, rho)?;
        let taued = tau.inverse()?;
        let qm = q.pow(m as u64);
        let am = alpha.pow(m as u64);
        let traced = x.trace_to(ctx, m);
        let mut acc: Option<PadicElement> = None;
        for g in ctx.units_mod(m) {
            let ginv = mod_inverse_u64(g, ctx.p.pow(m));
            let comp = traced.component(ginv);
            let term = rho.value(lift_unit(ctx, g, m, n))?.mul(comp);
            acc = Some(match acc {
                None => term,
                Some(s) => s.add(&term),
            });
        }
        let sum = acc.expect("nonempty");
        Ok(sum
            .mul(&taued)
            .mul(&tn.embed_from_lower(&qm.mul(&am))))
    }
}

/// The adjoint variant: Euler factors (1 - pi^{-1} alpha^{-1})^{-1}
/// (1 - (pi/q) alpha) at the trivial character and pi^m alpha^m twisted
/// sums at conductor m.
pub fn theta_star_component(
    ctx: &DistContext,
    line: &CrisLine,
    x: &ProductVector,
    rho: &CharacterData,
) -> Result<PadicElement> {
    let alpha = &line.scalar;
    let fr = ctx.base_ref();
    let one = PadicElement::from_i64(fr.clone(), 1);
    let q = PadicElement::from_i64(fr.clone(), ctx.group.field.q as i64);
    let pi = &ctx.group.pi;
    let n = x.level;
    let tn = ctx.tower(n)?;
    if rho.conductor == 0 {
        let a1 = one.sub(&pi.inverse()?.mul(&alpha.inverse()?));
        check_theta_scalar(&a1, "1 - (pi alpha)^{-1}")?;
        // (1 - (pi/q) alpha) may vanish exactly (the degenerate boundary
        // surfaces as zero, not as an error)
        let a2 = one.sub(&pi.mul(&q.inverse()?).mul(alpha));
        let scalar = a1.inverse()?.mul(&a2);
        let tr = x.trace_full();
        Ok(tr.mul(&tn.embed_from_lower(&scalar)))
    } else {
        let m = rho.conductor;
        let tau = gauss_sum(ctx, rho)?;
        let taued = tau.inverse()?;
        let pm = pi.pow(m as u64);
        let am = alpha.pow(m as u64);
        let traced = x.trace_to(ctx, m);
        let mut acc: Option<PadicElement> = None;
        for g in ctx.units_mod(m) {
            let ginv = mod_inverse_u64(g, ctx.p.pow(m));
            let comp = traced.component(ginv);
            let term = rho.value(lift_unit(ctx, g, m, n))?.mul(comp);
            acc = Some(match acc {
                None => term,
                Some(s) => s.add(&term),
            });
        }
        let sum = acc.expect("nonempty");
        Ok(sum
            .mul(&taued)
            .mul(&tn.embed_from_lower(&pm.mul(&am))))
    }
}

fn mod_inverse_u64(a: u64, m: u64) -> u64 {
    // extended Euclid on small integers
    let (mut old_r, mut r) = (a as i128, m as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let qu = old_r / r;
        let tmp = old_r - qu * r;
        old_r = r;
        r = tmp;
        let tmp = old_s - qu * s;
        old_s = s;
        s = tmp;
    }
    let mut x = old_s % m as i128;
    if x < 0 {
        x += m as i128;
    }
    x as u64
}

// ---------------------------------------------------------------------
// evaluation maps on lines, and the solved fixed point
// ---------------------------------------------------------------------

/// Ev at level n of a polynomial f tensor d: the conjugate evaluations of
/// f at eta_n, with the line scaled by alpha^{-n}. Level 0 evaluates at
/// the origin and applies 1 - q^{-1} alpha^{-1}.
pub struct EvValue {
    /// None encodes the level-0 scalar value.
    pub vector: Option<ProductVector>,
    pub at_origin: Option<PadicElement>,
    pub line_scale: PadicElement,
}

pub fn ev_crystalline(
    ctx: &DistContext,
    line: &CrisLine,
    n: u32,
    f: &TruncatedSeries,
) -> Result<EvValue> {
    let fr = ctx.base_ref();
    let one = PadicElement::from_i64(fr.clone(), 1);
    let q = PadicElement::from_i64(fr.clone(), ctx.group.field.q as i64);
    if n == 0 {
        let v = f.value_at_zero()?;
        let scale = one.sub(&q.inverse()?.mul(&line.scalar.inverse()?));
        return Ok(EvValue {
            vector: None,
            at_origin: Some(v),
            line_scale: scale,
        });
    }
    let tn = ctx.tower(n)?;
    let mut comps = BTreeMap::new();
    for conj in tn.galois() {
        let v = f
            .promote(&tn.field_ref())
            .evaluate_exact(&conj.image)?;
        comps.insert(conj.rep.residue_index, v);
    }
    Ok(EvValue {
        vector: Some(ProductVector { level: n, comps }),
        at_origin: None,
        line_scale: line.scalar.inverse()?.pow(n as u64),
    })
}

/// The geometric-series solution x of (1 - phi tensor phi) x = m tensor d
/// for the Mellin polynomial m of a measure: x = sum_k alpha^k phi^k(m)
/// tensor d, presented through its conjugate evaluations
/// x(sigma_a eta_j) = sum_{k<j} alpha^k m(sigma_a eta_{j-k})
///                  + alpha^j m(0)/(1 - alpha).
pub struct SolvedFixedPoint {
    pub level: u32,
    pub line: CrisLine,
    measure_poly: TruncatedSeries,
    alpha: PadicElement,
}

impl SolvedFixedPoint {
    pub fn new(
        ctx: &DistContext,
        mu: &FiniteMeasure,
        line: &CrisLine,
    ) -> Result<SolvedFixedPoint> {
        let poly = mellin_level_n(ctx, mu)?;
        Ok(SolvedFixedPoint {
            level: mu.level,
            line: line.clone(),
            measure_poly: poly,
            alpha: line.scalar.clone(),
        })
    }

    fn value_at_origin(&self, ctx: &DistContext) -> Result<PadicElement> {
        let fr = ctx.base_ref();
        let one = PadicElement::from_i64(fr, 1);
        let m0 = self.measure_poly.value_at_zero()?;
        let denom = one.sub(&self.alpha).inverse()?;
        let tn = ctx.tower(self.level)?;
        Ok(m0.mul(&tn.embed_from_lower(&denom)))
    }

    /// The conjugate evaluations at level j <= level.
    pub fn vector_at_level(&self, ctx: &DistContext, j: u32) -> Result<ProductVector> {
        assert!(j >= 1 && j <= self.level);
        let tn = ctx.tower(self.level)?;
        let tj = ctx.tower(j)?;
        let one = PadicElement::from_i64(ctx.base_ref(), 1);
        let geo_tail = one.sub(&self.alpha).inverse()?;
        let mut comps = BTreeMap::new();
        for a in ctx.units_mod(j) {
            let mut acc: Option<PadicElement> = None;
            for k in 0..j {
                // m(sigma_a eta_{j-k})
                let lvl = j - k;
                let tl = ctx.tower(lvl)?;
                let conj = tl
                    .galois()
                    .iter()
                    .find(|c| c.rep.residue_index == a % ctx.p.pow(lvl))
                    .expect("conjugate exists");
                let point = tn.embed_from_lower(&conj.image);
                let val = self.measure_poly.evaluate_exact(&point)?;
                let term = val.mul(&tn.embed_from_lower(&self.alpha.pow(k as u64)));
                acc = Some(match acc {
                    None => term,
                    Some(s) => s.add(&term),
                });
            }
            // the constant tail sum_{k>=j} alpha^k m(0)
            let tail = self
                .value_at_origin(ctx)?
                .mul(&tn.embed_from_lower(&self.alpha.pow(j as u64)));
            let _ = &geo_tail;
            let total = acc.expect("positive level").add(&tail);
            comps.insert(a, total);
        }
        let _ = tj;
        Ok(ProductVector { level: j, comps })
    }

    /// q^{-j} Ev_j(x) as a product vector (the line factor alpha^{-j} is
    /// included).
    pub fn q_ev(&self, ctx: &DistContext, j: u32) -> Result<ProductVector> {
        let v = self.vector_at_level(ctx, j)?;
        let q = PadicElement::from_i64(ctx.base_ref(), ctx.group.field.q as i64);
        let scale = q
            .pow(j as u64)
            .mul(&self.alpha.pow(j as u64))
            .inverse()?;
        Ok(v.scalar_mul(&ctx.tower(self.level)?.embed_from_lower(&scale)))
    }
}

// ---------------------------------------------------------------------
// Gamma-factor values of the Lie-algebra operators
// ---------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EllMode {
    Analytic,
    Product,
}

/// The value of the operator product prod_{i=0}^{k-1} (nabla - i) on a
/// character with derivative weight j: the nabla-contract gives nabla -> j.
pub fn ell_factor(k: u32, j: i64, mode: EllMode) -> Ratio<i64> {
    match mode {
        EllMode::Product => {
            let mut acc = Ratio::from_integer(1i64);
            for i in 0..(k as i64) {
                acc *= Ratio::from_integer(j - i);
            }
            acc
        }
        EllMode::Analytic => {
            let k = k as i64;
            if j >= k {
                // j! / (j-k)!
                let mut acc = 1i64;
                for i in (j - k + 1)..=j {
                    acc *= i;
                }
                Ratio::from_integer(acc)
            } else if j >= 0 {
                Ratio::zero()
            } else {
                // (-1)^k (k-1-j)! / (-j-1)!
                let mut acc = 1i64;
                for i in (-j)..=(k - 1 - j) {
                    acc *= i;
                }
                let sign = if k % 2 == 0 { 1 } else { -1 };
                Ratio::from_integer(sign * acc)
            }
        }
    }
}

/// A polynomial in the Lie generator nabla, evaluated through the contract
/// nabla(rho chi^j) = j.
#[derive(Clone, Debug)]
pub struct NablaPolynomial {
    /// coefficients of nabla^i
    pub coeffs: Vec<Ratio<i64>>,
}

impl NablaPolynomial {
    pub fn nabla() -> NablaPolynomial {
        NablaPolynomial {
            coeffs: vec![Ratio::zero(), Ratio::from_integer(1)],
        }
    }

    pub fn constant(c: i64) -> NablaPolynomial {
        NablaPolynomial {
            coeffs: vec![Ratio::from_integer(c)],
        }
    }

    pub fn sub_const(&self, c: i64) -> NablaPolynomial {
        let mut coeffs = self.coeffs.clone();
        if coeffs.is_empty() {
            coeffs.push(Ratio::zero());
        }
        coeffs[0] -= Ratio::from_integer(c);
        NablaPolynomial { coeffs }
    }

    pub fn mul(&self, other: &NablaPolynomial) -> NablaPolynomial {
        let mut coeffs = vec![Ratio::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += *a * *b;
            }
        }
        NablaPolynomial { coeffs }
    }

    /// Evaluation at a character of derivative weight j.
    pub fn eval_weight(&self, j: i64) -> Ratio<i64> {
        let mut acc = Ratio::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * Ratio::from_integer(j) + *c;
        }
        acc
    }

    /// The twist by chi^j: nabla goes to nabla + j.
    pub fn twist(&self, j: i64) -> NablaPolynomial {
        // substitute nabla + j
        let mut acc = NablaPolynomial::constant(0);
        for c in self.coeffs.iter().rev() {
            // acc = acc * (nabla + j) + c
            let shifted = NablaPolynomial {
                coeffs: vec![Ratio::from_integer(j), Ratio::from_integer(1)],
            };
            acc = acc.mul(&shifted);
            if acc.coeffs.is_empty() {
                acc.coeffs.push(Ratio::zero());
            }
            acc.coeffs[0] += *c;
        }
        acc
    }

    /// The operator product prod_{i=0}^{k-1} (nabla - i).
    pub fn ell_product(k: u32) -> NablaPolynomial {
        let mut acc = NablaPolynomial::constant(1);
        for i in 0..k as i64 {
            acc = acc.mul(&NablaPolynomial::nabla().sub_const(i));
        }
        acc
    }
}

// ---------------------------------------------------------------------
// the regulator series and its character components
// ---------------------------------------------------------------------

/// The psi-kernel element (1 - (pi/q) phi) d_inv log g, kept structurally
/// as the pair (d_inv log g, pi/q) because the phi-part of a Laurent
/// series has no bounded-window expansion; evaluation at torsion points
/// reads the phi-part at the next lower level.
pub struct RegulatorSeries {
    pub group: Arc<FormalGroup>,
    pub dlog: TruncatedSeries,
    pub scalar: PadicElement,
}

pub fn regulator_series(
    ops: &OperatorContext,
    g: &TruncatedSeries,
    check_pdigits: i64,
) -> Result<RegulatorSeries> {
    let ng = ops.norm_apply(g)?;
    if !crate::operators::series_agree_graded(&ng, g, check_pdigits) {
        return Err(Error::NotNormFixed("regulator input not norm-fixed".into()));
    }
    let dlog = ops.dlog(g)?;
    // psi(F) = 0 is equivalent to psi(dlog) = dlog given psi phi = (q/pi)
    let psid = ops.psi_apply(&dlog)?;
    if !crate::operators::series_agree_graded(&psid, &dlog, check_pdigits) {
        return Err(Error::PsiZeroViolation(
            "logarithmic derivative is not psi-fixed".into(),
        ));
    }
    let q = PadicElement::from_i64(ops.base_ref(), ops.q() as i64);
    let scalar = ops.group.pi.mul(&q.inverse()?);
    Ok(RegulatorSeries {
        group: ops.group.clone(),
        dlog,
        scalar,
    })
}

impl RegulatorSeries {
    /// The bounded-window expansion of (1 - (pi/q) phi) d_inv log g when
    /// the logarithmic derivative is a power series, or the formal
    /// expansion with denominators otherwise (series-identity checks only).
    pub fn window_expansion(&self, ops: &OperatorContext) -> Result<TruncatedSeries> {
        let phi_d = ops.phi_apply(&self.dlog)?;
        Ok(self.dlog.sub(&phi_d.scalar_mul(&self.scalar)))
    }

    /// (d_inv^{j-1} F)(point at level m): the phi-part evaluates at the
    /// embedded level-(m-1) conjugate of the same class.
    pub fn derivative_value_at(
        &self,
        ctx: &DistContext,
        m: u32,
        a: u64,
        j: u32,
    ) -> Result<PadicElement> {
        assert!(j >= 1);
        let dj = self.group.partial_inv(&self.dlog, j - 1);
        let tn = ctx.tower(m)?;
        let point = conj_point(ctx, m, a, m)?;
        let direct = dj
            .promote(&tn.field_ref())
            .evaluate_with_tail(&point, Ratio::zero())?;
        // phi-part: pi^{j-1} phi(d_inv^{j-1} dlog) evaluated at the point
        // is the value at the level-(m-1) image
        let lower_val = if m == 1 {
            dj.value_at_zero().map(|v| tn.embed_from_lower(&v))?
        } else {
            let lower_point = conj_point(ctx, m, a, m - 1)?;
            dj.promote(&tn.field_ref())
                .evaluate_with_tail(&lower_point, Ratio::zero())?
        };
        let pi_pow = self.group.pi.pow((j - 1) as u64);
        let phi_scalar = self.scalar.mul(&pi_pow);
        Ok(direct.sub(&lower_val.mul(&tn.embed_from_lower(&phi_scalar))))
    }
}

/// The level-m' conjugate point [a](eta_{m'}) embedded into L_m.
fn conj_point(ctx: &DistContext, m: u32, a: u64, mprime: u32) -> Result<PadicElement> {
    let tm = ctx.tower(m)?;
    let tl = ctx.tower(mprime)?;
    let conj = tl
        .galois()
        .iter()
        .find(|c| c.rep.residue_index == a % ctx.p.pow(mprime))
        .ok_or_else(|| Error::NotAUnit(format!("missing class {a}")))?;
    Ok(tm.embed_from_lower(&conj.image))
}

/// Both sides of the character-component identity for the regulator at a
/// nontrivial character of conductor m: the evaluation route
/// [L_m:L] tau^{-1} e_rho (d_inv^{j-1} F)(eta_m) and the twisted-sum route
/// [L_m:L] tau^{-1} e_rho (d_inv^j log g)(eta_m); the difference is the
/// phi-part, annihilated by the idempotent. For the trivial character the
/// value is (1 - pi^j/q) (d_inv^j log g)(0).
pub fn reg_twist_eval(
    ctx: &DistContext,
    ops: &OperatorContext,
    reg: &RegulatorSeries,
    rho: &CharacterData,
    j: u32,
) -> Result<(PadicElement, PadicElement)> {
    let _ = ops;
    if rho.conductor == 0 {
        // trivial character: both routes collapse to the origin value
        let dj = reg.group.partial_inv(&reg.dlog, j - 1);
        let at0 = dj.value_at_zero()?;
        let one = PadicElement::from_i64(ctx.base_ref(), 1);
        let q = PadicElement::from_i64(ctx.base_ref(), ctx.group.field.q as i64);
        let factor = one.sub(&reg.group.pi.pow(j as u64).mul(&q.inverse()?));
        let v = at0.mul(&factor);
        return Ok((v.clone(), v));
    }
    let m = rho.conductor;
    if rho.level != m {
        return Err(Error::ConductorMismatch(format!(
            "character of conductor {m} must be presented at its own level"
        )));
    }
    let tm = ctx.tower(m)?;
    let tau_inv = gauss_sum(ctx, rho)?.inverse()?;
    // right: through the plain j-th logarithmic derivative
    let dj = reg.group.partial_inv(&reg.dlog, j - 1);
    let mut rhs: Option<PadicElement> = None;
    for a in ctx.units_mod(m) {
        let rv = rho.inverse_value(a)?;
        let point = conj_point(ctx, m, a, m)?;
        let r = dj
            .promote(&tm.field_ref())
            .evaluate_with_tail(&point, Ratio::zero())?;
        let rterm = rv.mul(&r);
        rhs = Some(match rhs {
            None => rterm,
            Some(s) => s.add(&rterm),
        });
    }
    let rhs = rhs.expect("nonempty").mul(&tau_inv);
    // left: the twisted sum of the full regulator values. Where the
    // phi-part has a pointwise value (m >= 2, or a pole-free logarithmic
    // derivative) each conjugate is evaluated structurally; in the
    // remaining conductor-one case the phi-part is independent of the
    // conjugate and its twisted sum vanishes against the character sum.
    let pointwise = m >= 2 || dj.pole_order() == 0;
    let lhs = if pointwise {
        let mut acc: Option<PadicElement> = None;
        for a in ctx.units_mod(m) {
            let rv = rho.inverse_value(a)?;
            let l = reg.derivative_value_at(ctx, m, a, j)?;
            let term = rv.mul(&l);
            acc = Some(match acc {
                None => term,
                Some(s) => s.add(&term),
            });
        }
        acc.expect("nonempty").mul(&tau_inv)
    } else {
        let pi_pow = reg.group.pi.pow(j as u64);
        let q = PadicElement::from_i64(ctx.base_ref(), ctx.group.field.q as i64);
        let phi_scalar = pi_pow.mul(&q.inverse()?);
        let ann = phi_part_annihilation(ctx, reg, rho, j)?;
        rhs.sub(&ann.mul(&tm.embed_from_lower(&phi_scalar)).mul(&tau_inv))
    };
    Ok((lhs, rhs))
}

/// The annihilation of the phi-part by a conductor-m idempotent: the
/// rho-twisted sum of the level-(m-1) values vanishes.
pub fn phi_part_annihilation(
    ctx: &DistContext,
    reg: &RegulatorSeries,
    rho: &CharacterData,
    j: u32,
) -> Result<PadicElement> {
    let m = rho.conductor;
    assert!(m >= 1);
    let tm = ctx.tower(m)?;
    let dj = reg.group.partial_inv(&reg.dlog, j - 1);
    if m == 1 {
        // the level-0 value is independent of a, so the twisted sum is
        // (sum rho^{-1}(a)) * value = 0 for a nontrivial character; this
        // holds structurally even when the value itself has a pole
        let char_sum = {
            let mut acc: Option<PadicElement> = None;
            for a in ctx.units_mod(1) {
                let t = rho.inverse_value(a)?;
                acc = Some(match acc {
                    None => t,
                    Some(s) => s.add(&t),
                });
            }
            acc.expect("nonempty")
        };
        return if dj.pole_order() > 0 {
            match char_sum.valuation() {
                None => Ok(PadicElement::zero(
                    tm.field_ref(),
                    tm.base.default_modexp,
                )),
                Some(v) => Err(Error::ConductorMismatch(format!(
                    "character sum does not vanish (valuation {v}) against a polar value"
                ))),
            }
        } else {
            Ok(tm
                .embed_from_lower(&dj.value_at_zero()?)
                .mul(&tm.embed_from_lower(&char_sum)))
        };
    }
    let mut acc: Option<PadicElement> = None;
    for a in ctx.units_mod(m) {
        let point = conj_point(ctx, m, a, m - 1)?;
        let value = dj
            .promote(&tm.field_ref())
            .evaluate_with_tail(&point, Ratio::zero())?;
        let term = rho.inverse_value(a)?.mul(&value);
        acc = Some(match acc {
            None => term,
            Some(s) => s.add(&term),
        });
    }
    Ok(acc.expect("nonempty"))
}

/// The twist-derivative identity for the Mellin transform:
/// d_inv (sum mu(a) (1+Z)^a) = sum a mu(a) (1+Z)^a, an exact polynomial
/// identity at level n.
pub fn tw_derivative_check(ctx: &DistContext, mu: &FiniteMeasure, digits: i64) -> Result<bool> {
    let rep = mellin_level_n(ctx, mu)?;
    // d_inv = (1+Z) d/dZ in the cyclotomic coordinate
    let der = rep.derivative();
    let tn = ctx.tower(mu.level)?;
    let one_plus = TruncatedSeries::from_integers(tn.field_ref(), Var::Z, 0, &[1, 1], rep.zcap + 1);
    let lhs = der.mul(&one_plus).truncate(rep.zcap);
    let rhs = mellin_level_n(ctx, &mu.times_argument())?;
    Ok(lhs.agrees_to(&rhs, digits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lubin_tate::FrobeniusPreset;
    use crate::padic::{teichmuller, LocalField};
    use once_cell::sync::Lazy;

    struct Setup {
        ctx: DistContext,
        ops: OperatorContext,
    }

    static SETUP: Lazy<Setup> = Lazy::new(|| {
        let f = LocalField::qp(3, 130).unwrap();
        let g = FormalGroup::preset(f, FrobeniusPreset::GmHat).unwrap();
        let ctx = DistContext::new(g.clone()).unwrap();
        let ops = OperatorContext::new(g, 80, 40).unwrap();
        Setup { ctx, ops }
    });

    #[test]
    fn mellin_of_diracs() {
        let s = &*SETUP;
        let d1 = FiniteMeasure::dirac(&s.ctx, 1, 1).unwrap();
        let rep = mellin_level_n(&s.ctx, &d1).unwrap();
        let t1 = s.ctx.tower(1).unwrap();
        let expect = TruncatedSeries::from_integers(t1.field_ref(), Var::Z, 0, &[1, 1], 2);
        assert!(rep.agrees_to(&expect, 30));
        let d2 = FiniteMeasure::dirac(&s.ctx, 1, 2).unwrap();
        let rep2 = mellin_level_n(&s.ctx, &d2).unwrap();
        let expect2 = TruncatedSeries::from_integers(t1.field_ref(), Var::Z, 0, &[1, 2, 1], 2);
        assert!(rep2.agrees_to(&expect2, 30));
        // psi kills the image
        assert!(mellin_psi_zero_check(&s.ctx, &s.ops, &rep, 12).unwrap());
        assert!(mellin_psi_zero_check(&s.ctx, &s.ops, &rep2, 12).unwrap());
        // difference measure at p=3, level 1
        let mut vals = BTreeMap::new();
        vals.insert(1u64, PadicElement::from_i64(t1.field_ref(), 1));
        vals.insert(2u64, PadicElement::from_i64(t1.field_ref(), -1));
        let mu = FiniteMeasure::from_values(1, vals, "d1-d2");
        let rep = mellin_level_n(&s.ctx, &mu).unwrap();
        let expect = TruncatedSeries::from_integers(t1.field_ref(), Var::Z, 0, &[0, -1, -1], 2);
        assert!(rep.agrees_to(&expect, 30));
    }

    #[test]
    fn character_table_and_conductors() {
        let s = &*SETUP;
        let chars1 = characters(&s.ctx, 1).unwrap();
        assert_eq!(chars1.len(), 2);
        assert_eq!(chars1.iter().filter(|c| c.conductor == 0).count(), 1);
        let chars2 = characters(&s.ctx, 2).unwrap();
        assert_eq!(chars2.len(), 6);
        // conductor profile for (Z/9)^*: 1 trivial, 1 of conductor 1, 4 of conductor 2
        assert_eq!(chars2.iter().filter(|c| c.conductor == 0).count(), 1);
        assert_eq!(chars2.iter().filter(|c| c.conductor == 1).count(), 1);
        assert_eq!(chars2.iter().filter(|c| c.conductor == 2).count(), 4);
        // multiplicativity of a sample character
        for rho in &chars2 {
            let a = 2u64;
            let b = 5u64;
            let lhs = rho.value(a).unwrap().mul(&rho.value(b).unwrap());
            let rhs = rho.value(a * b % 9).unwrap();
            assert!(lhs.agrees_to(&rhs, 20));
        }
    }

    #[test]
    fn dirac_character_values() {
        let s = &*SETUP;
        let d1 = FiniteMeasure::dirac(&s.ctx, 2, 1).unwrap();
        let chars = characters(&s.ctx, 2).unwrap();
        for rho in &chars {
            for j in [0i64, 3, 5] {
                let v = eval_character(&d1, rho, j).unwrap();
                let one = PadicElement::from_i64(v.field().clone(), 1);
                assert!(v.agrees_to(&one, 20));
            }
        }
        // delta_a at the trivial character with twist j gives a^j
        let d2 = FiniteMeasure::dirac(&s.ctx, 2, 2).unwrap();
        let triv = chars.iter().find(|c| c.is_trivial()).unwrap();
        let v = eval_character(&d2, triv, 3).unwrap();
        let eight = PadicElement::from_i64(v.field().clone(), 8);
        assert!(v.agrees_to(&eight, 20));
    }

    #[test]
    fn gauss_sum_quadratic_fixture() {
        let s = &*SETUP;
        let chars = characters(&s.ctx, 1).unwrap();
        let quad = chars.iter().find(|c| c.conductor == 1).unwrap();
        let tau = gauss_sum(&s.ctx, quad).unwrap();
        // tau = zeta - zeta^2 and tau^2 = -3
        let zeta = s.ctx.zeta(1, 1).unwrap();
        let expect = zeta.sub(&zeta.mul(&zeta));
        assert!(tau.agrees_to(&expect, 30));
        let m3 = PadicElement::from_i64(tau.field().clone(), -3);
        assert!(tau.mul(&tau).agrees_to(&m3, 30));
    }

    #[test]
    fn gauss_conjugate_product_identity() {
        // tau(rho) tau(rho^{-1}) rho(-1) = q^{a(rho)}
        let s = &*SETUP;
        for n in 1..=2u32 {
            let chars = characters(&s.ctx, n).unwrap();
            for rho in chars.iter().filter(|c| c.conductor >= 1) {
                let tau = gauss_sum(&s.ctx, rho).unwrap();
                // the inverse character is the one whose values invert
                let inv = chars
                    .iter()
                    .find(|c| {
                        c.conductor == rho.conductor
                            && (1..s.ctx.pn(n))
                                .filter(|a| a % 3 != 0)
                                .all(|a| {
                                    c.value(a)
                                        .unwrap()
                                        .mul(&rho.value(a).unwrap())
                                        .agrees_to(
                                            &PadicElement::from_i64(tau.field().clone(), 1),
                                            10,
                                        )
                                })
                    })
                    .expect("inverse character exists");
                let tau_inv_char = gauss_sum(&s.ctx, inv).unwrap();
                let pm = s.ctx.pn(n) - 1; // -1 mod p^n
                let rho_minus_one = rho.value(pm).unwrap();
                let lhs = tau.mul(&tau_inv_char).mul(&rho_minus_one);
                let q_pow =
                    PadicElement::from_i64(lhs.field().clone(), 3).pow(rho.conductor as u64);
                assert!(
                    lhs.agrees_to(&q_pow, 20),
                    "n={n} index={}",
                    rho.index
                );
            }
        }
    }

    #[test]
    fn idempotents_are_orthogonal() {
        let s = &*SETUP;
        let n = 1u32;
        let tn = s.ctx.tower(n).unwrap();
        let chars = characters(&s.ctx, n).unwrap();
        let x = tn.eta().add(&PadicElement::from_i64(tn.field_ref(), 2));
        // sum over rho of e_rho x = x
        let mut acc: Option<PadicElement> = None;
        for rho in &chars {
            let e = idempotent_apply(&s.ctx, rho, &x).unwrap();
            acc = Some(match acc {
                None => e,
                Some(sum) => sum.add(&e),
            });
        }
        assert!(acc.unwrap().agrees_to(&x, 20));
        // e_rho e_rho = e_rho and e_rho e_rho' = 0: the idempotent image is
        // the rho-eigenspace, so applying sigma_a scales by rho(a)
        for rho in &chars {
            let e = idempotent_apply(&s.ctx, rho, &x).unwrap();
            let again = idempotent_apply(&s.ctx, rho, &e).unwrap();
            assert!(again.agrees_to(&e, 18));
            for other in chars.iter().filter(|c| c.index != rho.index) {
                let cross = idempotent_apply(&s.ctx, other, &e).unwrap();
                match cross.valuation() {
                    None => {}
                    Some(v) => assert!(v >= Ratio::from_integer(15), "cross {v}"),
                }
            }
        }
        // quadratic projection of zeta_3: (zeta - zeta^2)/2
        let quad = chars.iter().find(|c| c.conductor == 1).unwrap();
        let zeta = s.ctx.zeta(1, 1).unwrap();
        let proj = idempotent_apply(&s.ctx, quad, &zeta).unwrap();
        let expect = zeta
            .sub(&zeta.mul(&zeta))
            .div_i64(2)
            .unwrap();
        assert!(proj.agrees_to(&expect, 20));
    }

    #[test]
    fn theta_components_basic() {
        let s = &*SETUP;
        let n = 1u32;
        let tn = s.ctx.tower(n).unwrap();
        let chars = characters(&s.ctx, n).unwrap();
        let alpha = PadicElement::from_i64(s.ctx.base_ref(), 2);
        let line = CrisLine::new(alpha, "test");
        // Galois-invariant input: nontrivial components vanish; the trivial
        // component is (1-2)(1-(1/3)(1/2))^{-1} Tr(x) = -6/5 Tr(x)
        let c = PadicElement::from_i64(s.ctx.base_ref(), 7);
        let x = ProductVector::from_element(&s.ctx, &tn.embed_from_lower(&c), n).unwrap();
        for rho in &chars {
            let v = theta_component(&s.ctx, &line, &x, rho).unwrap();
            if rho.is_trivial() {
                // Tr(x) = 2 * 7 = 14; scalar -6/5
                let expect = PadicElement::from_i64(s.ctx.base_ref(), -6 * 14)
                    .mul(&PadicElement::from_i64(s.ctx.base_ref(), 5).inverse().unwrap());
                assert!(v.agrees_to(&tn.embed_from_lower(&expect), 18));
            } else {
                match v.valuation() {
                    None => {}
                    Some(w) => assert!(w >= Ratio::from_integer(15), "{w}"),
                }
            }
        }
        // degenerate scalars are rejected
        let bad = CrisLine::new(PadicElement::from_i64(s.ctx.base_ref(), 1), "unit");
        assert!(matches!(
            theta_component(&s.ctx, &bad, &x, &chars[0]),
            Err(Error::DegenerateFrobenius(_))
        ));
    }

    #[test]
    fn theta_is_bijective_on_l1() {
        let s = &*SETUP;
        let n = 1u32;
        let tn = s.ctx.tower(n).unwrap();
        let chars = characters(&s.ctx, n).unwrap();
        let line = CrisLine::new(PadicElement::from_i64(s.ctx.base_ref(), 2), "a2");
        // matrix of theta over the basis {1, eta} of L_1, rows indexed by rho
        let basis = [
            PadicElement::from_i64(tn.field_ref(), 1),
            tn.eta(),
        ];
        let mut rows = Vec::new();
        for rho in &chars {
            let mut row = Vec::new();
            for b in &basis {
                let x = ProductVector::from_element(&s.ctx, b, n).unwrap();
                row.push(theta_component(&s.ctx, &line, &x, rho).unwrap());
            }
            rows.push(row);
        }
        assert_eq!(crate::padic::linalg::rank(rows), 2);
    }

    #[test]
    fn theta_star_relation_and_boundary() {
        let s = &*SETUP;
        let n = 1u32;
        let tn = s.ctx.tower(n).unwrap();
        let chars = characters(&s.ctx, n).unwrap();
        let alpha = PadicElement::from_i64(s.ctx.base_ref(), 2);
        let w_line = CrisLine::new(alpha, "w");
        let d1 = CrisLine::d_line(&s.ctx.group).unwrap();
        let twisted = w_line.tensor(&d1);
        let x = ProductVector::from_element(
            &s.ctx,
            &tn.eta().add(&PadicElement::from_i64(tn.field_ref(), 1)),
            n,
        )
        .unwrap();
        for rho in &chars {
            let lhs = theta_component(&s.ctx, &twisted, &x, rho).unwrap();
            let rhs = theta_star_component(&s.ctx, &w_line, &x, rho).unwrap();
            assert!(lhs.agrees_to(&rhs, 15), "index {}", rho.index);
        }
        // alpha = 1 (W = L): the trivial-character scalar of the adjoint
        // map is exactly zero at pi = q
        let unit_line = CrisLine::new(PadicElement::from_i64(s.ctx.base_ref(), 1), "L");
        let triv = chars.iter().find(|c| c.is_trivial()).unwrap();
        let v = theta_star_component(&s.ctx, &unit_line, &x, triv).unwrap();
        match v.valuation() {
            None => {}
            Some(w) => assert!(w >= Ratio::from_integer(20)),
        }
    }

    #[test]
    fn ev_trace_relation_on_fixed_points() {
        let s = &*SETUP;
        // x solved from a random level-2 measure; alpha = 2
        let t2 = s.ctx.tower(2).unwrap();
        let mut vals = BTreeMap::new();
        for (i, a) in s.ctx.units_mod(2).into_iter().enumerate() {
            vals.insert(
                a,
                PadicElement::from_i64(t2.field_ref(), [3, -1, 4, 1, -5, 9][i % 6]),
            );
        }
        let mu = FiniteMeasure::from_values(2, vals, "sample");
        let line = CrisLine::new(PadicElement::from_i64(s.ctx.base_ref(), 2), "a2");
        let x = SolvedFixedPoint::new(&s.ctx, &mu, &line).unwrap();
        // Tr_{L_2/L_1}(q^{-2} Ev_2) = q^{-1} Ev_1
        let lvl2 = x.q_ev(&s.ctx, 2).unwrap();
        let down = lvl2.trace_to(&s.ctx, 1);
        let lvl1 = x.q_ev(&s.ctx, 1).unwrap();
        for a in s.ctx.units_mod(1) {
            let l = down.component(a);
            let r = lvl1.component(a);
            // components live in L_2 and L_1 respectively
            let r2 = t2.embed_from_lower(r);
            assert!(l.agrees_to(&r2, 15), "component {a}");
        }
        // the level-0 relation: Tr_{L_1/L}(q^{-1}Ev_1) = Ev_0 with the
        // (1 - q^{-1} alpha^{-1}) factor at the origin
        let full = lvl1.trace_full();
        let m_poly = mellin_level_n(&s.ctx, &mu).unwrap();
        let one = PadicElement::from_i64(s.ctx.base_ref(), 1);
        let alpha = PadicElement::from_i64(s.ctx.base_ref(), 2);
        let x0 = m_poly
            .value_at_zero()
            .unwrap()
            .mul(&t2.embed_from_lower(&one.sub(&alpha).inverse().unwrap()));
        let factor = one.sub(
            &PadicElement::from_i64(s.ctx.base_ref(), 3)
                .inverse()
                .unwrap()
                .mul(&alpha.inverse().unwrap()),
        );
        let expect = x0.mul(&t2.embed_from_lower(&factor));
        assert!(full.agrees_to(&expect, 15));
    }

    #[test]
    fn evn_diagram_on_measures() {
        let s = &*SETUP;
        for alpha_val in [2i64, 4] {
            let t2 = s.ctx.tower(2).unwrap();
            let mut vals = BTreeMap::new();
            for (i, a) in s.ctx.units_mod(2).into_iter().enumerate() {
                vals.insert(
                    a,
                    PadicElement::from_i64(t2.field_ref(), [2, 7, -3, 5, 1, -8][i % 6]),
                );
            }
            let mu = FiniteMeasure::from_values(2, vals, "evn");
            let line = CrisLine::new(
                PadicElement::from_i64(s.ctx.base_ref(), alpha_val),
                "a",
            );
            let x = SolvedFixedPoint::new(&s.ctx, &mu, &line).unwrap();
            let y = x.q_ev(&s.ctx, 2).unwrap();
            let chars = characters(&s.ctx, 2).unwrap();
            for rho in &chars {
                let lhs = theta_component(&s.ctx, &line, &y, rho).unwrap();
                let rhs = eval_character(&mu, rho, 0).unwrap();
                let want = 12i64
                    .min(lhs.certified_pdigits())
                    .min(rhs.certified_pdigits());
                assert!(
                    lhs.agreement_pdigits(&rhs) >= want,
                    "alpha={alpha_val} rho={} : {} < {want}",
                    rho.index,
                    lhs.agreement_pdigits(&rhs)
                );
            }
        }
    }

    #[test]
    fn theta_level_compatibility() {
        let s = &*SETUP;
        let t2 = s.ctx.tower(2).unwrap();
        let line = CrisLine::new(PadicElement::from_i64(s.ctx.base_ref(), 2), "a2");
        // a non-invariant sample in L_2
        let x_el = t2.eta().add(&PadicElement::from_i64(t2.field_ref(), 5));
        let x = ProductVector::from_element(&s.ctx, &x_el, 2).unwrap();
        let traced = x.trace_to(&s.ctx, 1);
        let chars1 = characters(&s.ctx, 1).unwrap();
        let chars2 = characters(&s.ctx, 2).unwrap();
        for rho1 in &chars1 {
            // the inflation of rho1 to level 2 agrees on units
            let infl = chars2
                .iter()
                .find(|c| {
                    s.ctx.units_mod(2).into_iter().all(|a| {
                        let lifted = c.value(a).unwrap();
                        let down = rho1.value(a % 3).unwrap();
                        lifted.agrees_to(&t2.embed_from_lower(&down), 10)
                    })
                })
                .expect("inflation exists");
            let top = theta_component(&s.ctx, &line, &x, infl).unwrap();
            let bottom = theta_component(&s.ctx, &line, &traced, rho1).unwrap();
            let bottom = t2.embed_from_lower(&bottom);
            assert!(
                top.agrees_to(&bottom, 12),
                "rho1 index {}",
                rho1.index
            );
        }
    }

    #[test]
    fn ell_factor_table() {
        for k in 0..=6u32 {
            for j in -10i64..=10 {
                let a = ell_factor(k, j, EllMode::Analytic);
                let b = ell_factor(k, j, EllMode::Product);
                assert_eq!(a, b, "k={k} j={j}");
            }
        }
        assert_eq!(ell_factor(2, 3, EllMode::Analytic), Ratio::from_integer(6));
        assert_eq!(ell_factor(2, 1, EllMode::Analytic), Ratio::zero());
        assert_eq!(ell_factor(2, -1, EllMode::Analytic), Ratio::from_integer(2));
    }

    #[test]
    fn nabla_contract_and_twist() {
        // nabla(rho chi^j) = j
        assert_eq!(NablaPolynomial::nabla().eval_weight(5), Ratio::from_integer(5));
        // Tw_eta(nabla) = nabla + j as operators
        let tw = NablaPolynomial::nabla().twist(3);
        for j in -4i64..=4 {
            assert_eq!(tw.eval_weight(j), Ratio::from_integer(j + 3));
        }
        // the operator product matches the factor table
        for k in 0..=4u32 {
            let op = NablaPolynomial::ell_product(k);
            for j in -6i64..=6 {
                assert_eq!(op.eval_weight(j), ell_factor(k, j, EllMode::Product));
            }
        }
        // the multiplied measure evaluates with an extra factor j on
        // derivative-weight characters: (a mu(a)) at (rho, j) equals
        // mu at (rho, j+1)
        let s = &*SETUP;
        let d2 = FiniteMeasure::dirac(&s.ctx, 1, 2).unwrap();
        let chars = characters(&s.ctx, 1).unwrap();
        for rho in &chars {
            let lhs = eval_character(&d2.times_argument(), rho, 1).unwrap();
            let rhs = eval_character(&d2, rho, 2).unwrap();
            assert!(lhs.agrees_to(&rhs, 20));
        }
    }

    #[test]
    fn regulator_series_fixtures() {
        let s = &*SETUP;
        let fr = s.ctx.base_ref();
        // g = 1+Z at pi = q: F = (1 - phi) 1 = 0
        let g1 = TruncatedSeries::from_integers(fr.clone(), Var::Z, 0, &[1, 1], s.ops.zorder);
        let reg = regulator_series(&s.ops, &g1, 10).unwrap();
        let f = reg.window_expansion(&s.ops).unwrap();
        for k in f.lowest..=f.zcap {
            let c = f.coeff(k);
            let want = c.certified_pdigits().min(12);
            if want <= 0 {
                continue;
            }
            match c.valuation() {
                None => {}
                Some(v) => assert!(v >= Ratio::from_integer(want), "k={k} {v}"),
            }
        }
        // g = Z: window expansion equals (1+Z)/Z - (1+Z)^3/((1+Z)^3 - 1)
        let z = TruncatedSeries::variable(fr.clone(), Var::Z, s.ops.zorder);
        let reg = regulator_series(&s.ops, &z, 10).unwrap();
        let f = reg.window_expansion(&s.ops).unwrap();
        let dlog = TruncatedSeries::from_integers(fr.clone(), Var::Z, -1, &[1, 1], s.ops.zorder);
        let phid = s.ops.phi_apply(&dlog).unwrap();
        let expect = dlog.sub(&phid);
        assert!(crate::operators::series_agree_graded(&f, &expect, 10));
    }

    #[test]
    fn reg_twist_two_routes() {
        let s = &*SETUP;
        let fr = s.ctx.base_ref();
        let z = TruncatedSeries::variable(fr.clone(), Var::Z, s.ops.zorder);
        let reg = regulator_series(&s.ops, &z, 10).unwrap();
        let chars = characters(&s.ctx, 1).unwrap();
        let quad = chars.iter().find(|c| c.conductor == 1).unwrap();
        for j in 1..=2u32 {
            let (lhs, rhs) = reg_twist_eval(&s.ctx, &s.ops, &reg, quad, j).unwrap();
            let want = 8i64
                .min(lhs.certified_pdigits())
                .min(rhs.certified_pdigits());
            assert!(
                lhs.agreement_pdigits(&rhs) >= want,
                "j={j}: {} < {want}",
                lhs.agreement_pdigits(&rhs)
            );
            // the phi-part is annihilated by the conductor-1 idempotent
            let ann = phi_part_annihilation(&s.ctx, &reg, quad, j).unwrap();
            match ann.valuation() {
                None => {}
                Some(v) => assert!(v >= Ratio::from_integer(8), "j={j} {v}"),
            }
        }
        // trivial branch with an integral-unit tower
        let g1 = TruncatedSeries::from_integers(fr.clone(), Var::Z, 0, &[1, 1], s.ops.zorder);
        let reg1 = regulator_series(&s.ops, &g1, 10).unwrap();
        let triv = chars.iter().find(|c| c.is_trivial()).unwrap();
        let (lhs, rhs) = reg_twist_eval(&s.ctx, &s.ops, &reg1, triv, 1).unwrap();
        assert!(lhs.agrees_to(&rhs, 20));
        let _ = teichmuller(&fr.integer(2));
    }

    #[test]
    fn tw_derivative_identity() {
        let s = &*SETUP;
        let d1 = FiniteMeasure::dirac(&s.ctx, 1, 1).unwrap();
        assert!(tw_derivative_check(&s.ctx, &d1, 25).unwrap());
        let d2 = FiniteMeasure::dirac(&s.ctx, 2, 5).unwrap();
        assert!(tw_derivative_check(&s.ctx, &d2, 25).unwrap());
        let t2 = s.ctx.tower(2).unwrap();
        let mut vals = BTreeMap::new();
        for (i, a) in s.ctx.units_mod(2).into_iter().enumerate() {
            vals.insert(a, PadicElement::from_i64(t2.field_ref(), (i as i64) * 3 - 7));
        }
        let mu = FiniteMeasure::from_values(2, vals, "rand");
        assert!(tw_derivative_check(&s.ctx, &mu, 25).unwrap());
    }
}
