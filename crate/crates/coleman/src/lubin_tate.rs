//! The Lubin-Tate formal group attached to a Frobenius polynomial
//! f(Z) = pi Z + ... + Z^q: the group law, the [a]-endomorphisms, the
//! logarithm/exponential pair, the invariant derivative, division
//! polynomials, torsion points and the division-point towers.
//!
//! Everything is solved degree by degree from the commutation relations
//! with f. Divisions by pi^k - pi are exact on the mathematical values,
//! so each order costs one certified digit against the raw working
//! modulus; callers budget for that via the field's default modulus.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::padic::{
    residue_representatives, unit_representatives, FieldRef, GaloisConjugate, LocalField,
    PadicElement, TowerField,
};
use crate::series::{binomial, TruncatedSeries, Var};

// ---------------------------------------------------------------------
// dense polynomials over the base field (index = degree)
// ---------------------------------------------------------------------

pub(crate) fn poly_mul(a: &[PadicElement], b: &[PadicElement]) -> Vec<PadicElement> {
    let field = a[0].field().clone();
    let mut out = vec![field.zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero_at_precision() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] = out[i + j].add(&x.mul(y));
        }
    }
    out
}

pub(crate) fn poly_compose(outer: &[PadicElement], inner: &[PadicElement]) -> Vec<PadicElement> {
    // Horner from the top
    let field = outer[0].field().clone();
    let mut acc = vec![outer.last().unwrap().clone()];
    for c in outer.iter().rev().skip(1) {
        acc = poly_mul(&acc, inner);
        acc[0] = acc[0].add(c);
    }
    let _ = field;
    acc
}

pub(crate) fn poly_derivative(a: &[PadicElement]) -> Vec<PadicElement> {
    if a.len() <= 1 {
        return vec![a[0].field().zero()];
    }
    a.iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| c.mul_i64(i as i64))
        .collect()
}

pub(crate) fn poly_eval(a: &[PadicElement], x: &PadicElement) -> PadicElement {
    let mut acc = match x.field() {
        FieldRef::Ext(t) => t.embed_from_lower(a.last().unwrap()),
        FieldRef::Base(_) => a.last().unwrap().clone(),
    };
    for c in a.iter().rev().skip(1) {
        let c = match x.field() {
            FieldRef::Ext(t) => t.embed_from_lower(c),
            FieldRef::Base(_) => c.clone(),
        };
        acc = acc.mul(x).add(&c);
    }
    acc
}

/// Exact division by a monic polynomial; the remainder must vanish at the
/// working precision.
pub(crate) fn poly_divide_exact(
    num: &[PadicElement],
    den: &[PadicElement],
) -> Result<Vec<PadicElement>> {
    let field = num[0].field().clone();
    let dd = den.len() - 1;
    let mut rem: Vec<PadicElement> = num.to_vec();
    let mut quo = vec![field.zero(); num.len().saturating_sub(dd)];
    for k in (dd..rem.len()).rev() {
        let c = rem[k].clone();
        if !c.is_zero_at_precision() {
            quo[k - dd] = c.clone();
            for j in 0..=dd {
                let t = c.mul(&den[j]);
                rem[k - dd + j] = rem[k - dd + j].sub(&t);
            }
        } else {
            quo[k - dd] = field.zero();
        }
    }
    for (i, r) in rem.iter().enumerate().take(dd) {
        if !r.is_zero_at_precision() {
            return Err(Error::PrecisionExhausted(format!(
                "polynomial division leaves a nonzero remainder at degree {i}"
            )));
        }
    }
    Ok(quo)
}

// ---------------------------------------------------------------------
// bivariate truncations (total degree cap), for the group law itself
// ---------------------------------------------------------------------

/// A bivariate series truncated in total degree.
#[derive(Clone)]
pub struct Bivariate {
    pub field: FieldRef,
    pub cap: i64,
    /// coeffs[i][j] is the coefficient of X^i Y^j, for i + j <= cap.
    pub coeffs: Vec<Vec<PadicElement>>,
}

impl Bivariate {
    fn zero(field: FieldRef, cap: i64) -> Bivariate {
        let n = cap as usize + 1;
        let coeffs = (0..n)
            .map(|i| vec![field.zero(); n - i])
            .collect();
        Bivariate { field, cap, coeffs }
    }

    pub fn coeff(&self, i: i64, j: i64) -> PadicElement {
        if i < 0 || j < 0 || i + j > self.cap {
            return self.field.zero();
        }
        self.coeffs[i as usize][j as usize].clone()
    }

    fn set(&mut self, i: i64, j: i64, v: PadicElement) {
        self.coeffs[i as usize][j as usize] = v;
    }

    fn add(&self, other: &Bivariate) -> Bivariate {
        let mut out = Bivariate::zero(self.field.clone(), self.cap.min(other.cap));
        for i in 0..=out.cap {
            for j in 0..=(out.cap - i) {
                out.set(i, j, self.coeff(i, j).add(&other.coeff(i, j)));
            }
        }
        out
    }

    fn sub(&self, other: &Bivariate) -> Bivariate {
        let mut out = Bivariate::zero(self.field.clone(), self.cap.min(other.cap));
        for i in 0..=out.cap {
            for j in 0..=(out.cap - i) {
                out.set(i, j, self.coeff(i, j).sub(&other.coeff(i, j)));
            }
        }
        out
    }

    fn mul(&self, other: &Bivariate) -> Bivariate {
        let cap = self.cap.min(other.cap);
        let mut out = Bivariate::zero(self.field.clone(), cap);
        for i1 in 0..=self.cap {
            for j1 in 0..=(self.cap - i1) {
                let a = self.coeff(i1, j1);
                if a.is_zero_at_precision() {
                    continue;
                }
                for i2 in 0..=(cap - i1 - j1) {
                    for j2 in 0..=(cap - i1 - j1 - i2) {
                        let b = other.coeff(i2, j2);
                        if b.is_zero_at_precision() {
                            continue;
                        }
                        let cur = out.coeff(i1 + i2, j1 + j2);
                        out.set(i1 + i2, j1 + j2, cur.add(&a.mul(&b)));
                    }
                }
            }
        }
        out
    }

    fn scalar_mul(&self, c: &PadicElement) -> Bivariate {
        let mut out = self.clone();
        for row in out.coeffs.iter_mut() {
            for v in row.iter_mut() {
                *v = v.mul(c);
            }
        }
        out
    }

    /// Applies a univariate polynomial to this bivariate (Horner).
    fn apply_poly(&self, poly: &[PadicElement]) -> Bivariate {
        let mut acc = Bivariate::zero(self.field.clone(), self.cap);
        acc.set(0, 0, poly.last().unwrap().clone());
        for c in poly.iter().rev().skip(1) {
            acc = acc.mul(self);
            let cur = acc.coeff(0, 0);
            acc.set(0, 0, cur.add(c));
        }
        acc
    }

    /// Substitutes univariate polynomials u(X) and v(Y) for the variables.
    fn substitute_both(&self, u: &[PadicElement], v: &[PadicElement]) -> Bivariate {
        let cap = self.cap;
        // powers of u in X and of v in Y, truncated at total degree cap
        let truncate = |p: &[PadicElement]| -> Vec<PadicElement> {
            p.iter().take(cap as usize + 1).cloned().collect()
        };
        let mut upow: Vec<Vec<PadicElement>> = vec![vec![self.field.one()]];
        let mut vpow: Vec<Vec<PadicElement>> = vec![vec![self.field.one()]];
        for _ in 1..=cap {
            let last = upow.last().unwrap().clone();
            upow.push(truncate(&poly_mul(&last, u)));
            let last = vpow.last().unwrap().clone();
            vpow.push(truncate(&poly_mul(&last, v)));
        }
        let mut out = Bivariate::zero(self.field.clone(), cap);
        for i in 0..=cap {
            for j in 0..=(cap - i) {
                let c = self.coeff(i, j);
                if c.is_zero_at_precision() {
                    continue;
                }
                let pu = &upow[i as usize];
                let pv = &vpow[j as usize];
                for (a, cu) in pu.iter().enumerate() {
                    if cu.is_zero_at_precision() {
                        continue;
                    }
                    for (b, cv) in pv.iter().enumerate() {
                        if a as i64 + b as i64 > cap {
                            break;
                        }
                        if cv.is_zero_at_precision() {
                            continue;
                        }
                        let cur = out.coeff(a as i64, b as i64);
                        out.set(a as i64, b as i64, cur.add(&c.mul(cu).mul(cv)));
                    }
                }
            }
        }
        out
    }

    /// Evaluates at a pair of series in the same variable.
    pub fn eval_series(
        &self,
        x: &TruncatedSeries,
        y: &TruncatedSeries,
    ) -> Result<TruncatedSeries> {
        let field = x.field.clone();
        let var = x.var;
        let zcap = x.zcap.min(y.zcap);
        let promote = |c: &PadicElement| -> PadicElement {
            match &field {
                FieldRef::Ext(t) => t.embed_from_lower(c),
                FieldRef::Base(_) => c.clone(),
            }
        };
        // Horner in X with inner evaluation in Y
        let mut acc = TruncatedSeries::zero(field.clone(), var, zcap);
        for i in (0..=self.cap).rev() {
            acc = acc.mul(x);
            // row polynomial in Y
            let mut row = TruncatedSeries::zero(field.clone(), var, zcap);
            for j in (0..=(self.cap - i)).rev() {
                row = row.mul(y);
                let c = promote(&self.coeff(i, j));
                row = row.add(&TruncatedSeries::constant(field.clone(), var, c, zcap));
            }
            acc = acc.add(&row);
        }
        Ok(acc)
    }

    /// Extracts the homogeneous component of total degree d.
    fn homogeneous(&self, d: i64) -> Vec<PadicElement> {
        (0..=d).map(|i| self.coeff(i, d - i)).collect()
    }
}

// ---------------------------------------------------------------------
// the formal group
// ---------------------------------------------------------------------

struct State {
    frob_iter: Vec<Vec<PadicElement>>,
    lin: Option<TruncatedSeries>,
    log: Option<TruncatedSeries>,
    exp: Option<TruncatedSeries>,
    law: Option<Bivariate>,
    towers: HashMap<u32, Arc<TowerField>>,
    translations: HashMap<(u64, String, i64), TruncatedSeries>,
}

pub struct FormalGroup {
    pub field: Arc<LocalField>,
    pub pi: PadicElement,
    /// The Frobenius polynomial [pi](Z), monic of degree q.
    pub frobenius: Vec<PadicElement>,
    state: Mutex<State>,
}

/// Shipped Frobenius presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrobeniusPreset {
    /// (1+Z)^p - 1; requires L = Q_p with pi = p (the multiplicative group).
    GmHat,
    /// pi Z + Z^q, available for every field.
    Basic,
}

impl FormalGroup {
    pub fn new(field: Arc<LocalField>, frobenius: Vec<PadicElement>) -> Result<Arc<FormalGroup>> {
        let pi = field.uniformizer();
        let q = field.q as usize;
        let fr = FieldRef::Base(field.clone());
        if frobenius.len() != q + 1 {
            return Err(Error::NotAFrobeniusSeries(format!(
                "expected a monic polynomial of degree q = {q}"
            )));
        }
        let check_digits = 6;
        if !frobenius[0].is_zero_at_precision() {
            return Err(Error::NotAFrobeniusSeries("constant term must vanish".into()));
        }
        if !frobenius[1].agrees_to(&pi, check_digits) {
            return Err(Error::NotAFrobeniusSeries(
                "linear coefficient must equal the uniformizer".into(),
            ));
        }
        for (i, c) in frobenius.iter().enumerate().skip(2) {
            let target_unit = i == q;
            let v = c.pi_valuation();
            if target_unit {
                if !c.agrees_to(&fr.one(), 1) {
                    return Err(Error::NotAFrobeniusSeries(
                        "leading coefficient must be 1".into(),
                    ));
                }
            } else {
                match v {
                    None => {}
                    Some(v) if v >= Ratio::one() => {}
                    Some(v) => {
                        return Err(Error::NotAFrobeniusSeries(format!(
                            "coefficient {i} has valuation {v} < 1"
                        )))
                    }
                }
            }
        }
        let z_poly = vec![fr.zero(), fr.one()];
        Ok(Arc::new(FormalGroup {
            field,
            pi,
            frobenius,
            state: Mutex::new(State {
                frob_iter: vec![z_poly],
                lin: None,
                log: None,
                exp: None,
                law: None,
                towers: HashMap::new(),
                translations: HashMap::new(),
            }),
        }))
    }

    pub fn preset(field: Arc<LocalField>, preset: FrobeniusPreset) -> Result<Arc<FormalGroup>> {
        let fr = FieldRef::Base(field.clone());
        let q = field.q;
        let poly = match preset {
            FrobeniusPreset::GmHat => {
                if field.degree() != 1 {
                    return Err(Error::NotAFrobeniusSeries(
                        "the multiplicative preset needs L = Q_p".into(),
                    ));
                }
                let p = field.p;
                (0..=p)
                    .map(|k| {
                        if k == 0 {
                            fr.zero()
                        } else {
                            PadicElement::from_bigint(fr.clone(), binomial(p, k))
                        }
                    })
                    .collect()
            }
            FrobeniusPreset::Basic => {
                let mut v = vec![fr.zero(); q as usize + 1];
                v[1] = field.uniformizer();
                v[q as usize] = fr.one();
                v
            }
        };
        FormalGroup::new(field, poly)
    }

    pub fn base_ref(&self) -> FieldRef {
        FieldRef::Base(self.field.clone())
    }

    // -----------------------------------------------------------------
    // Frobenius iterates and division polynomials
    // -----------------------------------------------------------------

    /// [pi^k](Z) as an exact polynomial.
    pub fn frobenius_iterate(&self, k: u32) -> Vec<PadicElement> {
        let mut st = self.state.lock().unwrap();
        while st.frob_iter.len() <= k as usize {
            let last = st.frob_iter.last().unwrap().clone();
            st.frob_iter.push(poly_compose(&self.frobenius, &last));
        }
        st.frob_iter[k as usize].clone()
    }

    /// The level-n division polynomial [pi^n](X)/[pi^{n-1}](X).
    pub fn division_polynomial(&self, n: u32) -> Result<Vec<PadicElement>> {
        assert!(n >= 1);
        let num = self.frobenius_iterate(n);
        let den = self.frobenius_iterate(n - 1);
        poly_divide_exact(&num, &den)
    }

    // -----------------------------------------------------------------
    // linear coefficient series, logarithm, exponential
    // -----------------------------------------------------------------

    /// B(X) = dF/dY at (X, 0) (the reciprocal of g_LT), solved to the given
    /// order from f'(X) B(X) = pi B(f(X)).
    pub fn lin_series(&self, order: i64) -> TruncatedSeries {
        {
            let st = self.state.lock().unwrap();
            if let Some(b) = &st.lin {
                if b.zcap >= order {
                    return b.truncate(order);
                }
            }
        }
        let fr = self.base_ref();
        let fprime = poly_derivative(&self.frobenius);
        // f-power coefficient table up to `order`
        let cap = order as usize;
        let mut fpow_rows: Vec<Vec<PadicElement>> = Vec::with_capacity(cap + 1);
        fpow_rows.push({
            let mut r = vec![fr.zero(); cap + 1];
            r[0] = fr.one();
            r
        });
        let ftrunc: Vec<PadicElement> = self
            .frobenius
            .iter()
            .take(cap + 1)
            .cloned()
            .collect();
        for _ in 1..=cap {
            let last = fpow_rows.last().unwrap();
            let mut next = poly_mul(last, &ftrunc);
            next.truncate(cap + 1);
            next.resize(cap + 1, fr.zero());
            fpow_rows.push(next);
        }
        let pi_inv = self.pi.inverse().expect("uniformizer invertible");
        let mut b: Vec<PadicElement> = vec![fr.one()];
        for k in 1..=cap {
            // b_k pi (1 - pi^k) = pi sum_{1<=j<k} b_j [X^k]f^j
            //                     - sum_{0<=j<k} f'_{k-j} b_j
            let mut rhs = fr.zero();
            for (j, bj) in b.iter().enumerate().take(k).skip(1) {
                let c = &fpow_rows[j][k];
                if !c.is_zero_at_precision() {
                    rhs = rhs.add(&self.pi.mul(&bj.mul(c)));
                }
            }
            for (j, bj) in b.iter().enumerate().take(k) {
                if k - j < fprime.len() && !fprime[k - j].is_zero_at_precision() {
                    rhs = rhs.sub(&fprime[k - j].mul(bj));
                }
            }
            let denom = self
                .pi
                .mul(&fr.one().sub(&self.pi.pow(k as u64)))
                .inverse()
                .expect("pi(1 - pi^k) invertible");
            let _ = &pi_inv;
            b.push(rhs.mul(&denom));
        }
        let series = TruncatedSeries::from_coeffs(fr, Var::Z, 0, b, order);
        let mut st = self.state.lock().unwrap();
        st.lin = Some(series.clone());
        series
    }

    /// g_LT = B^{-1}, the derivative of the logarithm.
    pub fn g_series(&self, order: i64) -> TruncatedSeries {
        self.lin_series(order)
            .invert()
            .expect("B has unit constant term")
    }

    /// log_LT to the given order (integration divides by the exponents).
    pub fn log_series(&self, order: i64) -> TruncatedSeries {
        {
            let st = self.state.lock().unwrap();
            if let Some(l) = &st.log {
                if l.zcap >= order {
                    return l.truncate(order);
                }
            }
        }
        let g = self.g_series(order - 1);
        let log = g.integrate().expect("power series integrates");
        let mut st = self.state.lock().unwrap();
        st.log = Some(log.clone());
        log
    }

    /// exp_LT = reversion of log_LT.
    pub fn exp_series(&self, order: i64) -> TruncatedSeries {
        {
            let st = self.state.lock().unwrap();
            if let Some(e) = &st.exp {
                if e.zcap >= order {
                    return e.truncate(order);
                }
            }
        }
        let exp = self
            .log_series(order)
            .reversion()
            .expect("log has unit slope");
        let mut st = self.state.lock().unwrap();
        st.exp = Some(exp.clone());
        exp
    }

    /// t_LT = log_LT(Z) as a series in Z relabeled into the t-slot users
    /// should do through z_to_t/t_to_z; this returns the raw Z-series.
    pub fn t_series(&self, order: i64) -> TruncatedSeries {
        self.log_series(order)
    }

    /// The invariant derivative g^{-1} d/dZ applied k times. On t-tagged
    /// series this is the plain derivative d/dt.
    pub fn partial_inv(&self, f: &TruncatedSeries, k: u32) -> TruncatedSeries {
        let mut cur = f.clone();
        for _ in 0..k {
            cur = match cur.var {
                Var::T => cur.derivative(),
                Var::Z => {
                    let b = self.lin_series(cur.zcap + 1 - cur.lowest.min(0));
                    let b = match &cur.field {
                        FieldRef::Ext(_) => b.promote(&cur.field),
                        FieldRef::Base(_) => b,
                    };
                    cur.derivative().mul(&b)
                }
            };
        }
        cur
    }

    /// Rewrites a Z-series in the t-coordinate: f(Z) with Z = exp_LT(t).
    pub fn z_to_t(&self, f: &TruncatedSeries, order: i64) -> Result<TruncatedSeries> {
        let exp = self.exp_series(order).relabel(Var::T);
        let exp = match &f.field {
            FieldRef::Ext(_) => exp.promote(&f.field),
            FieldRef::Base(_) => exp,
        };
        f.substitute(&exp)
    }

    /// Rewrites a t-series in the Z-coordinate: g(t) with t = log_LT(Z).
    pub fn t_to_z(&self, g: &TruncatedSeries, order: i64) -> Result<TruncatedSeries> {
        let log = self.log_series(order).relabel(Var::Z);
        let log = match &g.field {
            FieldRef::Ext(_) => log.promote(&g.field),
            FieldRef::Base(_) => log,
        };
        let gz = g.relabel(Var::Z);
        gz.substitute(&log)
    }

    // -----------------------------------------------------------------
    // group law
    // -----------------------------------------------------------------

    /// The group law F(X, Y) to total degree `cap`, solved degree by degree
    /// from f(F(X,Y)) = F(f(X), f(Y)).
    pub fn group_law(&self, cap: i64) -> Bivariate {
        {
            let st = self.state.lock().unwrap();
            if let Some(l) = &st.law {
                if l.cap >= cap {
                    let mut out = Bivariate::zero(l.field.clone(), cap);
                    for i in 0..=cap {
                        for j in 0..=(cap - i) {
                            out.set(i, j, l.coeff(i, j));
                        }
                    }
                    return out;
                }
            }
        }
        let fr = self.base_ref();
        let mut law = Bivariate::zero(fr.clone(), cap);
        law.set(1, 0, fr.one());
        law.set(0, 1, fr.one());
        for d in 2..=cap {
            // error E = f(F) - F(fX, fY) truncated at total degree d
            let mut partial = Bivariate::zero(fr.clone(), d);
            for i in 0..=d.min(law.cap) {
                for j in 0..=(d - i).min(law.cap - i) {
                    partial.set(i, j, law.coeff(i, j));
                }
            }
            let lhs = partial.apply_poly(&self.frobenius);
            let rhs = partial.substitute_both(&self.frobenius, &self.frobenius);
            let err = lhs.sub(&rhs).homogeneous(d);
            // delta = E_d / (pi^d - pi)
            let denom = self
                .pi
                .pow(d as u64)
                .sub(&self.pi)
                .inverse()
                .expect("pi^d - pi invertible");
            for (i, e) in err.iter().enumerate() {
                if e.is_zero_at_precision() {
                    continue;
                }
                let delta = e.mul(&denom);
                let cur = law.coeff(i as i64, d - i as i64);
                law.set(i as i64, d - i as i64, cur.add(&delta));
            }
        }
        let mut st = self.state.lock().unwrap();
        st.law = Some(law.clone());
        law
    }

    /// X +_LT Y for two series of positive order (total-degree cap taken
    /// from the series windows).
    pub fn formal_add_series(
        &self,
        x: &TruncatedSeries,
        y: &TruncatedSeries,
    ) -> Result<TruncatedSeries> {
        for s in [x, y] {
            match s.order() {
                None => {}
                Some(o) if o >= 1 => {}
                _ => {
                    return Err(Error::ConvergenceDomain(
                        "formal sum needs series of positive order".into(),
                    ))
                }
            }
        }
        let cap = x.zcap.min(y.zcap);
        let law = self.group_law(cap);
        law.eval_series(x, y)
    }

    // -----------------------------------------------------------------
    // endomorphisms [a]
    // -----------------------------------------------------------------

    /// [a](Z) to the given order, solved from [a](f(Z)) = f([a](Z)) with
    /// linear coefficient a.
    pub fn endomorphism(&self, a: &PadicElement, order: i64) -> Result<TruncatedSeries> {
        let fr = self.base_ref();
        let cap = order as usize;
        let q = self.field.q as usize;
        // Taylor stack V_i = f^{(i)}(u)/i! as Z-series windows, u = aZ
        let mut stack: Vec<TruncatedSeries> = Vec::with_capacity(q + 1);
        for i in 0..=q {
            // sum_{m >= i} C(m, i) f_m (aZ)^{m-i}
            let mut coeffs = vec![fr.zero(); q - i + 1];
            for m in i..=q {
                let c = self.frobenius[m]
                    .mul_bigint(&binomial(m as u64, i as u64))
                    .mul(&a.pow((m - i) as u64));
                coeffs[m - i] = c;
            }
            stack.push(TruncatedSeries::from_polynomial(
                fr.clone(),
                Var::Z,
                0,
                coeffs,
                order,
            ));
        }
        // u(f) accumulated from f-powers
        let ftrunc: Vec<PadicElement> = self.frobenius.iter().take(cap + 1).cloned().collect();
        let f_series = TruncatedSeries::from_polynomial(fr.clone(), Var::Z, 0, ftrunc, order);
        let mut fpow = f_series.clone();
        let mut u_of_f = f_series.scalar_mul(a);
        let mut u_coeffs = vec![fr.zero(); cap + 1];
        u_coeffs[1] = a.clone();
        for k in 2..=cap {
            let k64 = k as i64;
            let lhs = stack[0].coeff(k64);
            fpow = fpow.mul(&f_series).truncate(order);
            // u_k from (pi - pi^k) u_k = [Z^k](f(u)) - [Z^k](u(f))
            let rhs = u_of_f.coeff(k64);
            let denom = self
                .pi
                .sub(&self.pi.pow(k as u64))
                .inverse()
                .map_err(|e| Error::PrecisionExhausted(format!("pi - pi^{k}: {e}")))?;
            let uk = rhs.sub(&lhs).mul(&denom);
            u_coeffs[k] = uk.clone();
            if uk.is_zero_at_precision() {
                continue;
            }
            // update u(f) and the Taylor stack with the new term uk Z^k
            u_of_f = u_of_f.add(&fpow.scalar_mul(&uk));
            let delta = TruncatedSeries::monomial(fr.clone(), Var::Z, k64, uk, order);
            let mut delta_pow =
                TruncatedSeries::constant(fr.clone(), Var::Z, fr.one(), order);
            let old: Vec<TruncatedSeries> = stack.clone();
            let mut powers = vec![delta_pow.clone()];
            for _ in 1..=q {
                delta_pow = delta_pow.mul(&delta).truncate(order);
                powers.push(delta_pow.clone());
            }
            for (i, slot) in stack.iter_mut().enumerate() {
                let mut acc = old[i].clone();
                for j in (i + 1)..=q {
                    let c = binomial(j as u64, i as u64);
                    let term = old[j].mul(&powers[j - i]).truncate(order);
                    acc = acc.add(&term.scalar_mul(&PadicElement::from_bigint(
                        fr.clone(),
                        c,
                    )));
                }
                *slot = acc.truncate(order);
            }
        }
        Ok(TruncatedSeries::from_coeffs(fr, Var::Z, 0, u_coeffs, order))
    }

    pub fn endomorphism_int(&self, a: i64, order: i64) -> Result<TruncatedSeries> {
        self.endomorphism(&PadicElement::from_i64(self.base_ref(), a), order)
    }

    /// The cross-check route through the logarithm:
    /// [a] = exp_LT(a log_LT(Z)). Denominators cost certified digits.
    pub fn endomorphism_via_log(&self, a: &PadicElement, order: i64) -> Result<TruncatedSeries> {
        let log = self.log_series(order);
        let exp = self.exp_series(order);
        exp.substitute(&log.scalar_mul(a))
    }

    // -----------------------------------------------------------------
    // translation series
    // -----------------------------------------------------------------

    /// T_a(Z) = a +_LT Z for a torsion point a, solved from the chain
    /// f(T_a(Z)) = T_{[pi](a)}(f(Z)) with T_0 = Z.
    pub fn translation_series(&self, a: &PadicElement, order: i64) -> Result<TruncatedSeries> {
        if a.is_zero_at_precision() {
            return Ok(TruncatedSeries::variable(a.field().clone(), Var::Z, order));
        }
        let key = (
            a.field().id(),
            format!("{a:?}"),
            order,
        );
        {
            let st = self.state.lock().unwrap();
            if let Some(t) = st.translations.get(&key) {
                return Ok(t.clone());
            }
        }
        let field = a.field().clone();
        let q = self.field.q as usize;
        // chase the chain downwards
        let frob_in_field: Vec<PadicElement> = self
            .frobenius
            .iter()
            .map(|c| match &field {
                FieldRef::Ext(t) => t.embed_from_lower(c),
                FieldRef::Base(_) => c.clone(),
            })
            .collect();
        let fa = poly_eval(&frob_in_field, a);
        let lower = self.translation_series(&fa, order)?;
        let lower = if lower.field.same(&field) {
            lower
        } else {
            lower.promote(&field)
        };
        // target = T_{f(a)}(f(Z))
        let f_series = TruncatedSeries::from_polynomial(
            field.clone(),
            Var::Z,
            0,
            frob_in_field.clone(),
            order,
        );
        let target = lower.substitute(&f_series)?;
        // Taylor stack V_i = f^{(i)}(T)/i!, T = a
        let mut stack: Vec<TruncatedSeries> = Vec::with_capacity(q + 1);
        for i in 0..=q {
            let mut acc = field.zero();
            for m in i..=q {
                let c = frob_in_field[m]
                    .mul_bigint(&binomial(m as u64, i as u64))
                    .mul(&a.pow((m - i) as u64));
                acc = acc.add(&c);
            }
            stack.push(TruncatedSeries::constant(field.clone(), Var::Z, acc, order));
        }
        let fprime_at_a = stack[1].coeff(0);
        let fprime_inv = fprime_at_a.inverse().map_err(|e| {
            Error::PrecisionExhausted(format!("f'(a) not invertible: {e}"))
        })?;
        let mut t_coeffs = vec![field.zero(); order as usize + 1];
        t_coeffs[0] = a.clone();
        for k in 1..=(order as usize) {
            let k64 = k as i64;
            let cur = stack[0].coeff(k64);
            let want = target.coeff(k64);
            let tau = want.sub(&cur).mul(&fprime_inv);
            t_coeffs[k] = tau.clone();
            if tau.is_zero_at_precision() {
                continue;
            }
            let delta = TruncatedSeries::monomial(field.clone(), Var::Z, k64, tau, order);
            let old: Vec<TruncatedSeries> = stack.clone();
            let mut powers = vec![TruncatedSeries::constant(
                field.clone(),
                Var::Z,
                field.one(),
                order,
            )];
            let mut dp = powers[0].clone();
            for _ in 1..=q {
                dp = dp.mul(&delta).truncate(order);
                powers.push(dp.clone());
            }
            for (i, slot) in stack.iter_mut().enumerate() {
                let mut acc = old[i].clone();
                for j in (i + 1)..=q {
                    let c = binomial(j as u64, i as u64);
                    let term = old[j].mul(&powers[j - i]).truncate(order);
                    acc = acc.add(&term.scalar_mul(&PadicElement::from_bigint(
                        field.clone(),
                        c,
                    )));
                }
                *slot = acc.truncate(order);
            }
        }
        let t = TruncatedSeries::from_coeffs(field, Var::Z, 0, t_coeffs, order);
        let mut st = self.state.lock().unwrap();
        st.translations.insert(key, t.clone());
        Ok(t)
    }

    /// a +_LT x for a torsion point a and an element x of positive
    /// valuation, through the translation series.
    pub fn formal_add_points(
        &self,
        a: &PadicElement,
        x: &PadicElement,
        order: i64,
    ) -> Result<PadicElement> {
        match x.valuation() {
            Some(v) if v > Ratio::zero() => {}
            None => return Ok(a.clone()),
            _ => {
                return Err(Error::ConvergenceDomain(
                    "formal sum needs points of positive valuation".into(),
                ))
            }
        }
        let t = self.translation_series(a, order)?;
        let (big, small) = (t, x);
        big.evaluate_with_tail(small, Ratio::zero())
    }

    // -----------------------------------------------------------------
    // towers and torsion
    // -----------------------------------------------------------------

    /// The division-point tower L_n, with Galois table and torsion data.
    pub fn tower(&self, n: u32) -> Result<Arc<TowerField>> {
        assert!(n >= 1);
        {
            let st = self.state.lock().unwrap();
            if let Some(t) = st.towers.get(&n) {
                return Ok(t.clone());
            }
        }
        let lower = if n > 1 { Some(self.tower(n - 1)?) } else { None };
        let modulus = self.division_polynomial(n)?;
        let tower = TowerField::new(
            self.field.clone(),
            modulus.clone(),
            self.frobenius.clone(),
            n,
            lower,
        )?;
        // Galois table
        let eta = tower.eta();
        let reps = unit_representatives(&self.field, n);
        let fnpoly = modulus;
        let fnprime = poly_derivative(&fnpoly);
        let mut conjugates = Vec::with_capacity(reps.len());
        for rep in reps {
            let image = if rep.digits.iter().skip(1).all(|&d| d == 0) && rep.digits[0] == 1 {
                eta.clone()
            } else {
                self.torsion_root(&tower, &rep.value, &fnpoly, &fnprime)?
            };
            conjugates.push(GaloisConjugate { rep, image });
        }
        // all conjugates must be distinct roots
        for (i, c) in conjugates.iter().enumerate() {
            let fx = poly_eval(&fnpoly, &c.image);
            if let Some(v) = fx.pi_valuation() {
                let need = Ratio::from_integer(
                    (c.image.certified_pdigits() / 2).max(8) * self.field.e as i64,
                );
                if v < need {
                    return Err(Error::PrecisionExhausted(format!(
                        "conjugate {i} fails the division polynomial: valuation {v}"
                    )));
                }
            }
            for other in conjugates.iter().take(i) {
                if c.image.sub(&other.image).valuation().is_none() {
                    return Err(Error::PrecisionExhausted(
                        "coincident Galois conjugates".into(),
                    ));
                }
            }
        }
        tower.set_galois(conjugates);
        let mut st = self.state.lock().unwrap();
        st.towers.insert(n, tower.clone());
        Ok(tower)
    }

    /// Finds [a](eta_n) by a truncated endomorphism followed by Newton
    /// refinement against the division polynomial.
    fn torsion_root(
        &self,
        tower: &Arc<TowerField>,
        a: &PadicElement,
        fnpoly: &[PadicElement],
        fnprime: &[PadicElement],
    ) -> Result<PadicElement> {
        let eta = tower.eta();
        // separation estimate from the derivative at eta
        let w = poly_eval(fnprime, &eta)
            .pi_valuation()
            .ok_or_else(|| Error::PrecisionExhausted("derivative vanishes at eta".into()))?;
        let eta_units = Ratio::from_integer((tower.degree as i64) * self.field.e as i64);
        let sep = (w * eta_units / Ratio::from_integer(self.field.e as i64))
            .ceil()
            .to_integer(); // in eta-valuation units
        let d0 = (2 * sep + 6).max(16);
        let full = self.field.default_modexp;
        // acceptance threshold: full depth minus the derivative loss and a
        // few digits of arithmetic noise
        let target = Ratio::from_integer((full - 6) * self.field.e as i64)
            - w * Ratio::from_integer(2);
        let mut order = d0;
        for _ in 0..5 {
            let endo = self.endomorphism(a, order)?;
            let endo = endo.promote(&tower.field_ref());
            let mut x = endo
                .evaluate_with_tail(&eta, Ratio::zero())?
                .assume_certified(full);
            // Newton against f_n; the iteration corrects representative
            // digits, so certification is re-asserted each step
            let mut last_val = Ratio::from_integer(-1i64);
            for it in 0..200 {
                let fx = poly_eval(fnpoly, &x);
                match fx.pi_valuation() {
                    None => break,
                    Some(v) if v >= target => break,
                    Some(v) => {
                        if std::env::var("COLEMAN_DEBUG_NEWTON").is_ok() {
                            eprintln!("newton it={it} residual v={v}");
                        }
                        if v <= last_val {
                            break;
                        }
                        last_val = v;
                    }
                }
                let dfx = poly_eval(fnprime, &x);
                let step = fx.mul(&dfx.inverse()?);
                x = x.sub(&step).assume_certified(full);
            }
            let fx = poly_eval(fnpoly, &x);
            let achieved = fx
                .pi_valuation()
                .unwrap_or_else(|| Ratio::from_integer(full * self.field.e as i64));
            if achieved >= target {
                // make sure Newton did not drift to a different root
                let check = endo.evaluate_with_tail(&eta, Ratio::zero())?;
                let agree = x.sub(&check).valuation();
                let close = match agree {
                    None => true,
                    Some(v) => v * eta_units >= Ratio::from_integer(sep),
                };
                if close {
                    // the root is pinned down to the achieved residual
                    // minus the derivative valuation
                    let final_cert = (((achieved - w)
                        / Ratio::from_integer(self.field.e as i64))
                    .floor()
                    .to_integer()
                        - 1)
                    .min(full - 1);
                    return Ok(x.cap_certified(final_cert));
                }
            }
            order *= 2;
        }
        Err(Error::PrecisionExhausted(
            "torsion root refinement did not converge".into(),
        ))
    }

    /// The pi-torsion points: zero plus the Teichmueller-labeled conjugates
    /// of eta_1, as elements of L_1. Index k corresponds to the residue
    /// class of index k (index 0 is the zero class).
    pub fn lt1_points(&self) -> Result<Vec<PadicElement>> {
        let tower = self.tower(1)?;
        let reps = residue_representatives(&self.field);
        let mut out = Vec::with_capacity(self.field.q as usize);
        out.push(PadicElement::zero(tower.field_ref(), self.field.default_modexp));
        for rep in reps.iter().skip(1) {
            // find the conjugate whose unit representative matches this
            // Teichmueller digit
            let found = tower
                .galois()
                .iter()
                .find(|c| c.rep.value.agrees_to(rep, rep.certified_pdigits().min(c.rep.value.certified_pdigits()) - 2))
                .ok_or_else(|| Error::NotAUnit("missing Teichmueller class".into()))?;
            out.push(found.image.clone());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::Presentation;

    fn q3_group(preset: FrobeniusPreset) -> Arc<FormalGroup> {
        let f = LocalField::qp(3, 80).unwrap();
        FormalGroup::preset(f, preset).unwrap()
    }

    #[test]
    fn multiplicative_group_law_is_x_plus_y_plus_xy() {
        let g = q3_group(FrobeniusPreset::GmHat);
        let law = g.group_law(8);
        let fr = g.base_ref();
        for i in 0..=8i64 {
            for j in 0..=(8 - i) {
                let expect = if (i, j) == (1, 0) || (i, j) == (0, 1) || (i, j) == (1, 1) {
                    fr.one()
                } else {
                    fr.zero()
                };
                assert!(
                    law.coeff(i, j).agrees_to(&expect, 40),
                    "coefficient ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn group_axioms_for_basic_preset() {
        let g = q3_group(FrobeniusPreset::Basic);
        let cap = 7i64;
        let law = g.group_law(cap);
        let fr = g.base_ref();
        // F(X, 0) = X and F(0, Y) = Y
        for i in 0..=cap {
            let expect = if i == 1 { fr.one() } else { fr.zero() };
            assert!(law.coeff(i, 0).agrees_to(&expect, 30), "X-edge {i}");
            assert!(law.coeff(0, i).agrees_to(&expect, 30), "Y-edge {i}");
        }
        // commutativity
        for i in 0..=cap {
            for j in 0..=(cap - i) {
                assert!(law.coeff(i, j).agrees_to(&law.coeff(j, i), 30));
            }
        }
        // associativity through series evaluation:
        // F(F(s1,s2), s3) = F(s1, F(s2,s3)) for sample series
        let z = TruncatedSeries::variable(fr.clone(), Var::Z, cap);
        let z2 = z.mul(&z).scalar_mul(&PadicElement::from_i64(fr.clone(), 2)).add(&z);
        let z3 = z.mul(&z).mul(&z).add(&z.scalar_mul(&PadicElement::from_i64(fr.clone(), 3)));
        let left = g
            .formal_add_series(&g.formal_add_series(&z, &z2).unwrap(), &z3)
            .unwrap();
        let right = g
            .formal_add_series(&z, &g.formal_add_series(&z2, &z3).unwrap())
            .unwrap();
        assert!(left.agrees_to(&right, 25));
    }

    #[test]
    fn multiplicative_log_exp_and_invariant_derivative() {
        let g = q3_group(FrobeniusPreset::GmHat);
        let fr = g.base_ref();
        let order = 14i64;
        // B = 1 + Z, g = (1+Z)^{-1}
        let lin = g.lin_series(order);
        assert!(lin.agrees_to(
            &TruncatedSeries::from_integers(fr.clone(), Var::Z, 0, &[1, 1], order),
            40
        ));
        // log = sum (-1)^{k-1} Z^k / k
        let log = g.log_series(order);
        for k in 1..=order {
            let expect = PadicElement::from_i64(fr.clone(), if k % 2 == 1 { 1 } else { -1 })
                .div_i64(k)
                .unwrap();
            assert!(log.coeff(k).agrees_to(&expect, 30), "log coefficient {k}");
        }
        // normalization log = Z mod deg 2
        assert!(log.coeff(1).agrees_to(&fr.one(), 40));
        // exp(log) = Z = log(exp)
        let exp = g.exp_series(order);
        let z = TruncatedSeries::variable(fr.clone(), Var::Z, order);
        assert!(exp.substitute(&log).unwrap().agrees_to(&z, 25));
        assert!(log.substitute(&exp).unwrap().agrees_to(&z, 25));
        // d_inv log = 1
        let dinv_log = g.partial_inv(&log, 1);
        let one = TruncatedSeries::constant(fr.clone(), Var::Z, fr.one(), order - 1);
        assert!(dinv_log.agrees_to(&one, 28));
        // log([pi](Z)) = pi log(Z): the defining property
        let fz = TruncatedSeries::from_polynomial(
            fr.clone(),
            Var::Z,
            0,
            g.frobenius.clone(),
            order,
        );
        let lhs = log.substitute(&fz).unwrap();
        let rhs = log.scalar_mul(&g.pi);
        assert!(lhs.agrees_to(&rhs, 25));
    }

    #[test]
    fn endomorphisms_match_both_routes() {
        for preset in [FrobeniusPreset::GmHat, FrobeniusPreset::Basic] {
            let g = q3_group(preset);
            let fr = g.base_ref();
            let order = 12i64;
            // [1] = Z
            let one = g.endomorphism_int(1, order).unwrap();
            assert!(one.agrees_to(&TruncatedSeries::variable(fr.clone(), Var::Z, order), 40));
            // [a][b] = [ab]
            let a2 = g.endomorphism_int(2, order).unwrap();
            let a5 = g.endomorphism_int(5, order).unwrap();
            let a10 = g.endomorphism_int(10, order).unwrap();
            assert!(a2.substitute(&a5).unwrap().agrees_to(&a10, 30));
            // the logarithm route agrees
            let via_log = g
                .endomorphism_via_log(&PadicElement::from_i64(fr.clone(), 5), order)
                .unwrap();
            assert!(a5.agrees_to(&via_log, 20));
            // [a](F(X,Y)) = F([a]X, [a]Y) through series samples
            let z = TruncatedSeries::variable(fr.clone(), Var::Z, order);
            let z2 = z.mul(&z).add(&z); // sample of positive order
            let lhs = a2
                .substitute(&g.formal_add_series(&z, &z2).unwrap())
                .unwrap();
            let rhs = g
                .formal_add_series(&a2.substitute(&z).unwrap(), &a2.substitute(&z2).unwrap())
                .unwrap();
            assert!(lhs.agrees_to(&rhs, 25));
        }
        // cyclotomic [2] = (1+Z)^2 - 1
        let g = q3_group(FrobeniusPreset::GmHat);
        let fr = g.base_ref();
        let a2 = g.endomorphism_int(2, 10).unwrap();
        let expect = TruncatedSeries::from_integers(fr, Var::Z, 0, &[0, 2, 1], 10);
        assert!(a2.agrees_to(&expect, 40));
    }

    #[test]
    fn division_polynomials_and_towers() {
        let g = q3_group(FrobeniusPreset::GmHat);
        let fr = g.base_ref();
        // f_1 = X^2 + 3X + 3
        let f1 = g.division_polynomial(1).unwrap();
        let expect: Vec<PadicElement> = [3i64, 3, 1]
            .iter()
            .map(|&n| PadicElement::from_i64(fr.clone(), n))
            .collect();
        assert_eq!(f1.len(), 3);
        for (a, b) in f1.iter().zip(expect.iter()) {
            assert!(a.agrees_to(b, 40));
        }
        // basic preset: f_1 = X^2 + 3
        let gb = q3_group(FrobeniusPreset::Basic);
        let f1b = gb.division_polynomial(1).unwrap();
        assert!(f1b[0].agrees_to(&PadicElement::from_i64(gb.base_ref(), 3), 40));
        assert!(f1b[1].is_zero_at_precision());
        assert!(f1b[2].agrees_to(&PadicElement::from_i64(gb.base_ref(), 1), 40));

        // tower degrees q^{n-1}(q-1)
        let t1 = g.tower(1).unwrap();
        assert_eq!(t1.degree, 2);
        let t2 = g.tower(2).unwrap();
        assert_eq!(t2.degree, 6);

        // trace and norm of eta_1: sum/product of roots of X^2+3X+3
        let eta1 = t1.eta();
        let (tr, nm) = t1.trace_norm_to(&eta1, 0).unwrap();
        assert!(tr.agrees_to(&PadicElement::from_i64(fr.clone(), -3), 30));
        assert!(nm.agrees_to(&PadicElement::from_i64(fr.clone(), 3), 30));
        // Tr(zeta_3) = -1
        let zeta = eta1.add(&PadicElement::from_i64(t1.field_ref(), 1));
        let (tr, _) = t1.trace_norm_to(&zeta, 0).unwrap();
        assert!(tr.agrees_to(&PadicElement::from_i64(fr.clone(), -1), 30));
        // identity trace
        let (tr_same, _) = t1.trace_norm_to(&eta1, 1).unwrap();
        assert!(tr_same.agrees_to(&eta1, 30));

        // eta_1 = (1 + eta_2)^3 - 1 inside L_2
        let eta2 = t2.eta();
        let one2 = PadicElement::from_i64(t2.field_ref(), 1);
        let cube = eta2.add(&one2).pow(3).sub(&one2);
        assert!(t2.eta_image(1).agrees_to(&cube, 40));
    }

    #[test]
    fn galois_action_composes() {
        let g = q3_group(FrobeniusPreset::GmHat);
        let t2 = g.tower(2).unwrap();
        let eta2 = t2.eta();
        // sigma_a sigma_b = sigma_{ab} on eta_2, exhaustively over (Z/9)^*
        for a in [1u64, 2, 4, 5, 7, 8] {
            for b in [1u64, 2, 4, 5, 7, 8] {
                let ab = (a * b) % 9;
                let lhs = t2
                    .galois_apply(a, &t2.galois_apply(b, &eta2).unwrap())
                    .unwrap();
                let rhs = t2.galois_apply(ab, &eta2).unwrap();
                assert!(lhs.agrees_to(&rhs, 25), "a={a} b={b}");
            }
        }
        // sigma_2(zeta_3) = zeta_3^2 at level 1
        let t1 = g.tower(1).unwrap();
        let zeta = t1.eta().add(&PadicElement::from_i64(t1.field_ref(), 1));
        let lhs = t1.galois_apply(2, &zeta).unwrap();
        assert!(lhs.agrees_to(&zeta.mul(&zeta), 30));
    }

    #[test]
    fn torsion_points_and_translations() {
        for preset in [FrobeniusPreset::GmHat, FrobeniusPreset::Basic] {
            let g = q3_group(preset);
            let pts = g.lt1_points().unwrap();
            assert_eq!(pts.len(), 3, "q = 3 points");
            for a in &pts {
                // [pi](a) = 0
                let fa = poly_eval(
                    &g.frobenius
                        .iter()
                        .map(|c| g.tower(1).unwrap().embed_from_lower(c))
                        .collect::<Vec<_>>(),
                    a,
                );
                assert!(
                    fa.pi_valuation().map(|v| v >= Ratio::from_integer(40)).unwrap_or(true),
                    "torsion point not killed by pi"
                );
            }
            // distinctness
            for (i, a) in pts.iter().enumerate() {
                for b in pts.iter().take(i) {
                    assert!(a.sub(b).valuation().is_some());
                }
            }
        }
        // eta_1 +_LT eta_1 = [2](eta_1) in the cyclotomic group
        let g = q3_group(FrobeniusPreset::GmHat);
        let t1 = g.tower(1).unwrap();
        let eta1 = t1.eta();
        let sum = g.formal_add_points(&eta1, &eta1, 90).unwrap();
        let one = PadicElement::from_i64(t1.field_ref(), 1);
        let expect = eta1.add(&one).pow(2).sub(&one);
        assert!(sum.agrees_to(&expect, 25));
        // x +_LT 0 = x
        let zero = PadicElement::zero(t1.field_ref(), 60);
        let same = g.formal_add_points(&eta1, &zero, 90);
        // zero has no valuation; translation at eta_1 evaluated at 0 is eta_1
        let ts = g.translation_series(&eta1, 20).unwrap();
        assert!(ts.coeff(0).agrees_to(&eta1, 30));
        drop(same);
        // constant term of translation at eta_2 is eta_2
        let t2 = g.tower(2).unwrap();
        let ts2 = g.translation_series(&t2.eta(), 12).unwrap();
        assert!(ts2.coeff(0).agrees_to(&t2.eta(), 25));
    }

    #[test]
    fn log_vanishes_on_torsion() {
        let g = q3_group(FrobeniusPreset::GmHat);
        let t1 = g.tower(1).unwrap();
        let log = g.log_series(120);
        let at_eta = log
            .promote(&t1.field_ref())
            .evaluate_with_tail(&t1.eta(), Ratio::zero())
            .unwrap();
        match at_eta.valuation() {
            None => {}
            Some(v) => assert!(v >= Ratio::from_integer(12), "log(eta_1) = {v:?}"),
        }
        let t2 = g.tower(2).unwrap();
        let at_eta2 = log
            .promote(&t2.field_ref())
            .evaluate_with_tail(&t2.eta(), Ratio::zero())
            .unwrap();
        match at_eta2.valuation() {
            None => {}
            Some(v) => assert!(v >= Ratio::from_integer(12), "log(eta_2) = {v:?}"),
        }
    }

    #[test]
    fn rejects_bad_frobenius() {
        let f = LocalField::qp(3, 60).unwrap();
        let fr = FieldRef::Base(f.clone());
        // constant term nonzero
        let bad = vec![
            fr.one(),
            PadicElement::from_i64(fr.clone(), 3),
            fr.zero(),
            fr.one(),
        ];
        assert!(matches!(
            FormalGroup::new(f.clone(), bad),
            Err(Error::NotAFrobeniusSeries(_))
        ));
        // middle coefficient a unit
        let bad2 = vec![
            fr.zero(),
            PadicElement::from_i64(fr.clone(), 3),
            fr.one(),
            fr.one(),
        ];
        assert!(matches!(
            FormalGroup::new(f.clone(), bad2),
            Err(Error::NotAFrobeniusSeries(_))
        ));
        let _ = Presentation::Eisenstein;
    }
}
