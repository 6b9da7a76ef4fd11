//! Truncated formal power and Laurent series over a capped-precision
//! coefficient field.
//!
//! A series tracks a finite exponent window [lowest, zcap]: coefficients
//! below `lowest` are exactly zero, the series is known modulo
//! O(Z^{zcap+1}), and each coefficient carries its own certified p-adic
//! precision. Compositions with a small-constant series (constant term of
//! positive valuation) are evaluated by summing powers with a tail cutoff
//! justified by the coefficient bounds of the power recursion; the bounds
//! themselves are computed, not assumed.

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::padic::{FieldRef, PadicElement};

/// Variable tag; Z is the coordinate on the formal group, T houses the
/// formal logarithm coordinate. Mixing tags is a hard error.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Var {
    Z,
    T,
}

impl Var {
    pub fn name(&self) -> &'static str {
        match self {
            Var::Z => "Z",
            Var::T => "t",
        }
    }
}

#[derive(Clone)]
pub struct TruncatedSeries {
    pub field: FieldRef,
    pub var: Var,
    /// Minimal tracked exponent (coefficients below are exactly zero).
    pub lowest: i64,
    /// Maximal tracked exponent; the series is known mod O(var^{zcap+1}).
    pub zcap: i64,
    /// True when the coefficients above the window are known to be exactly
    /// zero (the series is a Laurent polynomial), so evaluations and
    /// compositions carry no truncation tail.
    pub exact_tail: bool,
    coeffs: Vec<PadicElement>,
}

impl std::fmt::Debug for TruncatedSeries {
    fn fmt(&self, fmt: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(fmt, "Series[{}^{}..{}]{{", self.var.name(), self.lowest, self.zcap)?;
        for (i, c) in self.coeffs.iter().enumerate().take(8) {
            write!(fmt, " {}^{}: {:?}", self.var.name(), self.lowest + i as i64, c)?;
        }
        write!(fmt, " ... }}")
    }
}

impl TruncatedSeries {
    // -----------------------------------------------------------------
    // construction and access
    // -----------------------------------------------------------------

    pub fn zero(field: FieldRef, var: Var, zcap: i64) -> TruncatedSeries {
        TruncatedSeries {
            field,
            var,
            lowest: 0,
            zcap,
            exact_tail: true,
            coeffs: vec![],
        }
        .normalized()
    }

    pub fn from_coeffs(
        field: FieldRef,
        var: Var,
        lowest: i64,
        coeffs: Vec<PadicElement>,
        zcap: i64,
    ) -> TruncatedSeries {
        TruncatedSeries::build(field, var, lowest, coeffs, zcap, false)
    }

    /// A Laurent polynomial: everything above the listed coefficients is
    /// exactly zero.
    pub fn from_polynomial(
        field: FieldRef,
        var: Var,
        lowest: i64,
        coeffs: Vec<PadicElement>,
        zcap: i64,
    ) -> TruncatedSeries {
        TruncatedSeries::build(field, var, lowest, coeffs, zcap, true)
    }

    fn build(
        field: FieldRef,
        var: Var,
        lowest: i64,
        coeffs: Vec<PadicElement>,
        zcap: i64,
        exact_tail: bool,
    ) -> TruncatedSeries {
        let mut s = TruncatedSeries {
            field,
            var,
            lowest,
            zcap,
            exact_tail,
            coeffs,
        };
        let keep = ((zcap - lowest + 1).max(0)) as usize;
        if s.coeffs.len() > keep {
            // dropping listed coefficients loses tail exactness
            s.exact_tail = false;
            s.coeffs.truncate(keep);
        }
        s.normalized()
    }

    fn with_exact(mut self, exact: bool) -> TruncatedSeries {
        self.exact_tail = exact;
        self
    }

    /// Highest exponent carrying a coefficient that is nonzero at working
    /// precision.
    pub fn top_known(&self) -> i64 {
        for (i, c) in self.coeffs.iter().enumerate().rev() {
            if !c.is_zero_at_precision() {
                return self.lowest + i as i64;
            }
        }
        self.lowest - 1
    }

    pub fn constant(field: FieldRef, var: Var, value: PadicElement, zcap: i64) -> TruncatedSeries {
        TruncatedSeries::from_polynomial(field, var, 0, vec![value], zcap)
    }

    pub fn monomial(
        field: FieldRef,
        var: Var,
        exp: i64,
        value: PadicElement,
        zcap: i64,
    ) -> TruncatedSeries {
        TruncatedSeries::from_polynomial(field, var, exp, vec![value], zcap)
    }

    /// The variable itself.
    pub fn variable(field: FieldRef, var: Var, zcap: i64) -> TruncatedSeries {
        let one = field.one();
        TruncatedSeries::monomial(field, var, 1, one, zcap)
    }

    /// From integer coefficients starting at exponent `lowest`.
    pub fn from_integers(
        field: FieldRef,
        var: Var,
        lowest: i64,
        ints: &[i64],
        zcap: i64,
    ) -> TruncatedSeries {
        let coeffs = ints
            .iter()
            .map(|&n| PadicElement::from_i64(field.clone(), n))
            .collect();
        TruncatedSeries::from_polynomial(field, var, lowest, coeffs, zcap)
    }

    fn normalized(mut self) -> TruncatedSeries {
        // strip leading zero-at-precision coefficients
        while let Some(first) = self.coeffs.first() {
            if first.is_zero_at_precision() && first.certified_pdigits() > 0 {
                self.coeffs.remove(0);
                self.lowest += 1;
            } else {
                break;
            }
        }
        if self.coeffs.is_empty() {
            self.lowest = 0;
        }
        self
    }

    /// Coefficient at exponent k; exactly zero below the window. Panics
    /// above the cap, where the coefficient is unknown.
    pub fn coeff(&self, k: i64) -> PadicElement {
        assert!(
            k <= self.zcap,
            "coefficient {k} above the truncation cap {} (window [{}, {}])",
            self.zcap,
            self.lowest,
            self.zcap
        );
        if k < self.lowest || (k - self.lowest) as usize >= self.coeffs.len() {
            self.field.zero()
        } else {
            self.coeffs[(k - self.lowest) as usize].clone()
        }
    }

    pub fn is_zero_at_precision(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero_at_precision())
    }

    /// Order of the first coefficient that is nonzero at precision.
    pub fn order(&self) -> Option<i64> {
        for (i, c) in self.coeffs.iter().enumerate() {
            if !c.is_zero_at_precision() {
                return Some(self.lowest + i as i64);
            }
        }
        None
    }

    pub fn pole_order(&self) -> i64 {
        match self.order() {
            Some(o) if o < 0 => -o,
            _ => 0,
        }
    }

    fn check_compat(&self, other: &TruncatedSeries) {
        assert!(
            self.var == other.var,
            "variable tags {} and {} cannot be mixed without relabeling",
            self.var.name(),
            other.var.name()
        );
        assert!(
            self.field.same(&other.field),
            "series over different coefficient fields"
        );
    }

    /// Explicit variable retag (no substitution happens). The honest
    /// coordinate changes go through the formal-group logarithm.
    pub fn relabel(&self, var: Var) -> TruncatedSeries {
        let mut s = self.clone();
        s.var = var;
        s
    }

    /// Promotes coefficients into a larger field.
    pub fn promote(&self, field: &FieldRef) -> TruncatedSeries {
        if self.field.same(field) {
            return self.clone();
        }
        let up = |c: &PadicElement| -> PadicElement {
            match field {
                FieldRef::Ext(t) => t.embed_from_lower(c),
                FieldRef::Base(_) => panic!("cannot promote into a base field"),
            }
        };
        TruncatedSeries::build(
            field.clone(),
            self.var,
            self.lowest,
            self.coeffs.iter().map(up).collect(),
            self.zcap,
            self.exact_tail,
        )
    }

    // -----------------------------------------------------------------
    // ring operations
    // -----------------------------------------------------------------

    pub fn add(&self, other: &TruncatedSeries) -> TruncatedSeries {
        self.check_compat(other);
        let lowest = self.lowest.min(other.lowest);
        let zcap = self.zcap.min(other.zcap);
        let len = (zcap - lowest + 1).max(0) as usize;
        let mut coeffs = Vec::with_capacity(len);
        let exact = self.exact_tail
            && other.exact_tail
            && self.top_known() <= zcap
            && other.top_known() <= zcap;
        for k in lowest..=zcap {
            coeffs.push(self.coeff(k).add(&other.coeff(k)));
        }
        TruncatedSeries::build(self.field.clone(), self.var, lowest, coeffs, zcap, exact)
    }

    pub fn neg(&self) -> TruncatedSeries {
        TruncatedSeries::build(
            self.field.clone(),
            self.var,
            self.lowest,
            self.coeffs.iter().map(|c| c.neg()).collect(),
            self.zcap,
            self.exact_tail,
        )
    }

    pub fn sub(&self, other: &TruncatedSeries) -> TruncatedSeries {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &TruncatedSeries) -> TruncatedSeries {
        self.check_compat(other);
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            let zcap = (self.zcap + other.lowest).min(other.zcap + self.lowest);
            return TruncatedSeries::zero(self.field.clone(), self.var, zcap);
        }
        let lowest = self.lowest + other.lowest;
        let mut zcap = (self.zcap + other.lowest).min(other.zcap + self.lowest);
        let exact = self.exact_tail && other.exact_tail;
        if exact {
            // the product is a Laurent polynomial; keep the full window
            zcap = zcap.max(self.top_known() + other.top_known());
        }
        let len = (zcap - lowest + 1).max(0) as usize;
        let mut coeffs = vec![self.field.zero(); len];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero_at_precision() && a.certified_pdigits() > 0 {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                let k = i + j;
                if k >= len {
                    break;
                }
                coeffs[k] = coeffs[k].add(&a.mul(b));
            }
        }
        TruncatedSeries::build(self.field.clone(), self.var, lowest, coeffs, zcap, exact)
    }

    pub fn scalar_mul(&self, c: &PadicElement) -> TruncatedSeries {
        TruncatedSeries::build(
            self.field.clone(),
            self.var,
            self.lowest,
            self.coeffs.iter().map(|a| a.mul(c)).collect(),
            self.zcap,
            self.exact_tail,
        )
    }

    pub fn mul_i64(&self, n: i64) -> TruncatedSeries {
        TruncatedSeries::build(
            self.field.clone(),
            self.var,
            self.lowest,
            self.coeffs.iter().map(|a| a.mul_i64(n)).collect(),
            self.zcap,
            self.exact_tail,
        )
    }

    /// Multiplies by var^k (exact window shift).
    pub fn shift(&self, k: i64) -> TruncatedSeries {
        TruncatedSeries {
            field: self.field.clone(),
            var: self.var,
            lowest: self.lowest + k,
            zcap: self.zcap + k,
            exact_tail: self.exact_tail,
            coeffs: self.coeffs.clone(),
        }
    }

    /// Restricts the window cap.
    pub fn truncate(&self, zcap: i64) -> TruncatedSeries {
        let zcap = zcap.min(self.zcap);
        let len = ((zcap - self.lowest + 1).max(0)) as usize;
        let exact = self.exact_tail && self.top_known() <= zcap;
        TruncatedSeries::build(
            self.field.clone(),
            self.var,
            self.lowest,
            self.coeffs.iter().take(len).cloned().collect(),
            zcap,
            exact,
        )
    }

    /// Multiplicative inverse. The leading coefficient must be invertible
    /// at working precision; each output order divides by it once.
    pub fn invert(&self) -> Result<TruncatedSeries> {
        let o = self.order().ok_or_else(|| {
            Error::NotInvertible("series is zero at working precision".into())
        })?;
        let lead = self.coeff(o);
        let lead_inv = lead.inverse().map_err(|e| {
            Error::NotInvertible(format!("leading coefficient not invertible: {e}"))
        })?;
        let rel = self.zcap - o; // relative precision carried through
        let out_lowest = -o;
        let out_zcap = out_lowest + rel;
        let mut out = vec![self.field.zero(); (rel + 1) as usize];
        out[0] = lead_inv.clone();
        for k in 1..=rel {
            // coefficient of var^{out_lowest + k}
            let mut acc = self.field.zero();
            for j in 1..=k {
                let a = self.coeff(o + j);
                if a.is_zero_at_precision() {
                    continue;
                }
                acc = acc.add(&a.mul(&out[(k - j) as usize]));
            }
            out[k as usize] = acc.neg().mul(&lead_inv);
        }
        Ok(TruncatedSeries::from_coeffs(
            self.field.clone(),
            self.var,
            out_lowest,
            out,
            out_zcap,
        ))
    }

    pub fn pow(&self, mut k: u64) -> TruncatedSeries {
        let mut acc: Option<TruncatedSeries> = None;
        let mut base = self.clone();
        while k > 0 {
            if k & 1 == 1 {
                acc = Some(match acc {
                    None => base.clone(),
                    Some(a) => a.mul(&base),
                });
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        acc.unwrap_or_else(|| {
            TruncatedSeries::constant(self.field.clone(), self.var, self.field.one(), self.zcap)
        })
    }

    // -----------------------------------------------------------------
    // calculus
    // -----------------------------------------------------------------

    /// Formal derivative d/dvar.
    pub fn derivative(&self) -> TruncatedSeries {
        let lowest = self.lowest - 1;
        let zcap = self.zcap - 1;
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for (i, c) in self.coeffs.iter().enumerate() {
            let k = self.lowest + i as i64;
            coeffs.push(c.mul_i64(k));
        }
        TruncatedSeries::build(self.field.clone(), self.var, lowest, coeffs, zcap, self.exact_tail)
    }

    /// Residue: the coefficient of var^{-1} (zero when the window shows it
    /// to be zero).
    pub fn residue(&self) -> PadicElement {
        if self.lowest > -1 {
            return self.field.zero();
        }
        self.coeff(-1)
    }

    /// Antiderivative with zero constant term; divides by the exponent, so
    /// each order k loses v_p(k) digits. Fails if a var^{-1} term persists.
    pub fn integrate(&self) -> Result<TruncatedSeries> {
        if !self.residue().is_zero_at_precision() {
            return Err(Error::NotInvertible(
                "cannot integrate a series with a residue term".into(),
            ));
        }
        let lowest = self.lowest + 1;
        let zcap = self.zcap + 1;
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for (i, c) in self.coeffs.iter().enumerate() {
            let k = self.lowest + i as i64;
            if k == -1 {
                coeffs.push(self.field.zero());
            } else {
                coeffs.push(c.div_i64(k + 1)?);
            }
        }
        Ok(TruncatedSeries::build(
            self.field.clone(),
            self.var,
            lowest,
            coeffs,
            zcap,
            self.exact_tail,
        ))
    }

    // -----------------------------------------------------------------
    // substitution: inner series of positive order
    // -----------------------------------------------------------------

    /// f(g) for g of order >= 1 in the same variable space; the caller is
    /// responsible for tags (the result carries g's tag).
    pub fn substitute(&self, g: &TruncatedSeries) -> Result<TruncatedSeries> {
        assert!(self.field.same(&g.field), "substitute across fields");
        let r = match g.order() {
            Some(o) if o >= 1 => o,
            None => 1,
            _ => {
                return Err(Error::ConvergenceDomain(
                    "substitution needs an inner series of positive order".into(),
                ))
            }
        };
        let zcap = g.zcap.min(r * (self.zcap + 1) - 1);
        let gt = g.truncate(zcap);
        let mut acc = TruncatedSeries::zero(self.field.clone(), g.var, zcap);
        // positive part by Horner from the top
        if self.zcap >= 0.max(self.lowest) {
            let top = self.zcap;
            let start = self.lowest.max(0);
            acc = TruncatedSeries::constant(self.field.clone(), g.var, self.coeff(top), zcap);
            let mut k = top;
            while k > start {
                k -= 1;
                acc = acc.mul(&gt);
                acc = acc.add(&TruncatedSeries::constant(
                    self.field.clone(),
                    g.var,
                    self.coeff(k),
                    zcap,
                ));
            }
            if start > 0 {
                acc = acc.mul(&gt.pow(start as u64));
            }
        }
        // negative part
        if self.lowest < 0 {
            let ginv = g.invert()?.truncate(zcap);
            let mut pw = ginv.clone();
            for k in 1..=(-self.lowest) {
                let c = self.coeff(-k);
                if !c.is_zero_at_precision() {
                    acc = acc.add(&pw.scalar_mul(&c));
                }
                if k < -self.lowest {
                    pw = pw.mul(&ginv);
                }
            }
        }
        Ok(acc)
    }

    // -----------------------------------------------------------------
    // small-constant composition
    // -----------------------------------------------------------------

    /// f(h) where h has an invertible constant term of positive valuation.
    /// The sum over powers of h is cut off once the computed coefficient
    /// bounds push the tail below `target_pdigits`; each output coefficient
    /// is certified no further than that bound. Coefficients of f beyond
    /// its window are assumed integral (true for the o_L((Z)) inputs this
    /// is used on).
    pub fn compose_small_constant(
        &self,
        h: &TruncatedSeries,
        target_pdigits: i64,
    ) -> Result<TruncatedSeries> {
        let b0 = if h.lowest <= 0 {
            h.coeff(0)
        } else {
            h.field.zero()
        };
        let v0 = match b0.valuation() {
            Some(v) if v > Ratio::zero() => v,
            _ => {
                return Err(Error::DivergentComposition(
                    "constant term of the inner series must have positive valuation".into(),
                ))
            }
        };
        if h.lowest < 0 {
            return Err(Error::DivergentComposition(
                "inner series must be a power series".into(),
            ));
        }
        let field = &h.field;
        let out_cap = h.zcap;
        // valuation lower bounds V_i with v(c_{i,n}) >= V_i + n v0,
        // from the power-coefficient recursion
        let vi = power_valuation_bounds(h, out_cap, v0);
        // cutoff: smallest n0 with V_i + n0 v0 >= target for all i
        let mut n_cut = 0i64;
        for v in &vi {
            let need = Ratio::from_integer(target_pdigits) - *v;
            let n0 = if need <= Ratio::zero() {
                0
            } else {
                (need / v0).ceil().to_integer()
            };
            n_cut = n_cut.max(n0);
        }
        if n_cut > 2_000_000 {
            return Err(Error::DivergentComposition(format!(
                "tail cutoff {n_cut} exceeds the iteration budget"
            )));
        }

        let mut acc = TruncatedSeries::zero(field.clone(), h.var, out_cap);
        // positive powers, accumulated incrementally (the coefficient of
        // t^i in h^n is exactly c_{i,n})
        let effective_top = if self.exact_tail {
            self.top_known().max(0)
        } else {
            self.zcap.max(0)
        };
        let n_top = n_cut.min(effective_top);
        let mut pw = TruncatedSeries::constant(field.clone(), h.var, field.one(), out_cap);
        for n in 0..=n_top {
            if n > 0 {
                pw = pw.mul(h);
            }
            if n >= self.lowest.max(0) {
                let c = self.coeff(n);
                if !c.is_zero_at_precision() {
                    acc = acc.add(&pw.scalar_mul(&c));
                }
            }
        }
        // negative powers: h is invertible as a power series, so the pole
        // part of f contributes exactly, with no tail
        if self.lowest < 0 {
            let hinv = h.invert()?.truncate(out_cap);
            let mut pw = hinv.clone();
            for k in 1..=(-self.lowest) {
                let c = self.coeff(-k);
                if !c.is_zero_at_precision() {
                    acc = acc.add(&pw.scalar_mul(&c));
                }
                if k < -self.lowest {
                    pw = pw.mul(&hinv);
                }
            }
        }
        // certify no further than the omitted-tail bound V_i + (n_top+1) v0;
        // a Laurent polynomial consumed in full has no omitted tail
        if self.exact_tail && n_top == effective_top {
            return Ok(acc);
        }
        let coeffs: Vec<PadicElement> = (0..=out_cap)
            .map(|i| {
                let bound = vi[i as usize] + v0 * Ratio::from_integer(n_top + 1);
                acc.coeff(i).cap_certified(bound.floor().to_integer())
            })
            .collect();
        Ok(TruncatedSeries::from_coeffs(
            field.clone(),
            h.var,
            0,
            coeffs,
            out_cap,
        ))
    }

    // -----------------------------------------------------------------
    // reversion
    // -----------------------------------------------------------------

    /// Compositional inverse of a series with f(0) = 0 and invertible
    /// linear coefficient, by Newton iteration on the order filtration.
    pub fn reversion(&self) -> Result<TruncatedSeries> {
        match self.order() {
            Some(1) => {}
            _ => {
                return Err(Error::NotInvertible(
                    "reversion needs order exactly one".into(),
                ))
            }
        }
        if self.lowest < 0 {
            return Err(Error::NotInvertible("reversion of a Laurent series".into()));
        }
        let slope = self.coeff(1);
        let slope_inv = slope.inverse().map_err(|e| {
            Error::NotInvertible(format!("linear coefficient not invertible: {e}"))
        })?;
        let zcap = self.zcap;
        let var = self.var;
        let z = TruncatedSeries::variable(self.field.clone(), var, zcap);
        let mut g = z.scalar_mul(&slope_inv);
        let df = self.derivative();
        // Newton: g <- g - (f(g) - Z) / f'(g); order of contact doubles
        let mut contact = 1i64;
        while contact <= zcap {
            let fg = self.substitute(&g)?;
            let err = fg.sub(&z);
            if err.is_zero_at_precision() {
                break;
            }
            let dfg = df.substitute(&g)?;
            let corr = err.mul(&dfg.invert()?).truncate(zcap);
            g = g.sub(&corr).truncate(zcap);
            contact *= 2;
        }
        Ok(g)
    }

    // -----------------------------------------------------------------
    // evaluation
    // -----------------------------------------------------------------

    /// Evaluates at a point of positive valuation. `tail_valuation` is the
    /// assumed lower bound for the valuation of the unknown coefficients
    /// beyond the window; the certification of the value is capped by
    /// (zcap+1) v(x) + tail_valuation.
    pub fn evaluate_with_tail(&self, x: &PadicElement, tail_valuation: Ratio<i64>) -> Result<PadicElement> {
        let vx = x
            .valuation()
            .ok_or_else(|| Error::ConvergenceDomain("evaluation point is zero".into()))?;
        if vx <= Ratio::zero() && self.zcap > 0 {
            return Err(Error::ConvergenceDomain(format!(
                "evaluation point must have positive valuation, found {vx}"
            )));
        }
        let field = x.field().clone();
        let cert_x = x.certified_pdigits();
        let big = field.default_modexp();
        // term-by-term, carrying each coefficient's representative at full
        // depth so no digits are dropped before the damping by x^k is
        // credited: a coefficient error of size p^{-c} enters the value
        // multiplied by x^k
        let xe = x.assume_certified(big);
        let mut acc = PadicElement::zero(field.clone(), big);
        let start = self.lowest.max(0);
        let mut pw = if start == 0 {
            PadicElement::from_i64(field.clone(), 1)
        } else {
            xe.pow(start as u64)
        };
        for k in start..=self.zcap {
            let c = self.coeff(k);
            if !c.is_zero_at_precision() || c.certified_pdigits() <= 0 {
                let ce = promote_to(&c, &field).assume_certified(big);
                let term = ce.mul(&pw);
                let boost = Ratio::from_integer(c.certified_pdigits())
                    + vx * Ratio::from_integer(k);
                let xerr = Ratio::from_integer(cert_x)
                    + vx * Ratio::from_integer((k - 1).max(0));
                let bound = boost.min(xerr).floor().to_integer();
                acc = acc.add(&term.cap_certified(bound));
            }
            if k < self.zcap {
                pw = pw.mul(&xe);
            }
        }
        // negative part
        if self.lowest < 0 {
            let xinv = x.inverse()?;
            let mut pw = xinv.clone();
            for k in 1..=(-self.lowest) {
                let c = self.coeff(-k);
                if !c.is_zero_at_precision() {
                    acc = acc.add(&promote_to(&c, &field).mul(&pw));
                }
                if k < -self.lowest {
                    pw = pw.mul(&xinv);
                }
            }
        }
        if self.exact_tail {
            return Ok(acc);
        }
        let tail = (vx * Ratio::from_integer(self.zcap + 1) + tail_valuation)
            .floor()
            .to_integer();
        Ok(acc.cap_certified(tail))
    }

    /// Evaluation treating the window as the exact, complete support.
    pub fn evaluate_exact(&self, x: &PadicElement) -> Result<PadicElement> {
        let field = x.field().clone();
        let mut acc = PadicElement::zero(field.clone(), field.default_modexp());
        for k in (self.lowest.max(0)..=self.zcap).rev() {
            acc = acc.mul(x);
            let c = self.coeff(k);
            if !c.is_zero_at_precision() {
                acc = acc.add(&promote_to(&c, &field));
            }
        }
        if self.lowest.max(0) > 0 {
            acc = acc.mul(&x.pow(self.lowest.max(0) as u64));
        }
        if self.lowest < 0 {
            let xinv = x.inverse()?;
            let mut pw = xinv.clone();
            for k in 1..=(-self.lowest) {
                let c = self.coeff(-k);
                if !c.is_zero_at_precision() {
                    acc = acc.add(&promote_to(&c, &field).mul(&pw));
                }
                if k < -self.lowest {
                    pw = pw.mul(&xinv);
                }
            }
        }
        Ok(acc)
    }

    /// Value at zero (the constant coefficient; fails on a genuine pole).
    pub fn value_at_zero(&self) -> Result<PadicElement> {
        if self.pole_order() > 0 {
            return Err(Error::ConvergenceDomain(
                "series has a pole at the origin".into(),
            ));
        }
        Ok(self.coeff(0))
    }

    /// Certified agreement with another series on the common window.
    pub fn agrees_to(&self, other: &TruncatedSeries, pdigits: i64) -> bool {
        let lowest = self.lowest.min(other.lowest);
        let zcap = self.zcap.min(other.zcap);
        for k in lowest..=zcap {
            if self.coeff(k).agreement_pdigits(&other.coeff(k)) < pdigits {
                return false;
            }
        }
        true
    }

    pub fn min_certified_pdigits(&self) -> i64 {
        self.coeffs
            .iter()
            .map(|c| c.certified_pdigits())
            .min()
            .unwrap_or(i64::MAX)
    }
}

fn promote_to(c: &PadicElement, field: &FieldRef) -> PadicElement {
    if c.field().same(field) {
        return c.clone();
    }
    match field {
        FieldRef::Ext(t) => t.embed_from_lower(c),
        FieldRef::Base(_) => panic!("cannot demote a coefficient"),
    }
}

/// Lower bounds V_i such that the coefficient of t^i in h^n has valuation
/// at least V_i + n v(b_0) for every n >= 0, derived from the recursion
/// c_{i,n} = (1/(i b_0)) sum_k (nk - i + k) b_k c_{i-k,n}:
/// V_0 = 0 and V_i = min_k (v(b_k) + V_{i-k}) - v_p(i) - v(b_0).
fn power_valuation_bounds(h: &TruncatedSeries, out_cap: i64, v0: Ratio<i64>) -> Vec<Ratio<i64>> {
    let p = h.field.p() as i64;
    let huge = Ratio::from_integer(1i64 << 40);
    let mut vi: Vec<Ratio<i64>> = Vec::with_capacity((out_cap + 1) as usize);
    vi.push(Ratio::zero());
    for i in 1..=out_cap {
        let mut best: Option<Ratio<i64>> = None;
        for k in 1..=i {
            let bk = h.coeff(k);
            let vb = match bk.valuation() {
                Some(v) => v,
                // zero at precision: only certified digits bound the term
                None => Ratio::from_integer(bk.certified_pdigits().max(0)),
            };
            let cand = vb + vi[(i - k) as usize];
            best = Some(match best {
                None => cand,
                Some(b) => b.min(cand),
            });
        }
        let mut vp_i = 0i64;
        let mut ii = i;
        while ii % p == 0 {
            vp_i += 1;
            ii /= p;
        }
        let b = best.unwrap_or(huge) - Ratio::from_integer(vp_i) - v0;
        vi.push(b.min(huge));
    }
    vi
}

/// The coefficient of t^i in h^n via the recursion
/// c_{0,n} = b_0^n, c_{i,n} = (1/(i b_0)) sum_{k=1}^{i} (nk - i + k) b_k c_{i-k,n}.
pub fn power_coeff_recursion(h: &TruncatedSeries, n: u64, i: i64) -> Result<PadicElement> {
    assert!(i >= 0 && i <= h.zcap, "coefficient index outside the window");
    let b0 = h.coeff(0);
    let b0_inv = b0
        .inverse()
        .map_err(|e| Error::NotInvertible(format!("h(0) not invertible: {e}")))?;
    let mut row: Vec<PadicElement> = Vec::with_capacity((i + 1) as usize);
    row.push(b0.pow(n));
    for ii in 1..=i {
        let mut acc = h.field.zero();
        for k in 1..=ii {
            let factor = (n as i64) * k - ii + k;
            if factor == 0 {
                continue;
            }
            let bk = h.coeff(k);
            if bk.is_zero_at_precision() {
                continue;
            }
            acc = acc.add(&bk.mul(&row[(ii - k) as usize]).mul_i64(factor));
        }
        let c = acc.mul(&b0_inv).div_i64(ii)?;
        row.push(c);
    }
    Ok(row[i as usize].clone())
}

/// Big-integer binomial helper for tests and the cyclotomic preset.
pub fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let mut num = BigInt::from(1);
    let mut den = BigInt::from(1);
    for i in 0..k.min(n - k) {
        num *= BigInt::from(n - i);
        den *= BigInt::from(i + 1);
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::{FieldRef, LocalField, PadicElement};

    fn q3() -> FieldRef {
        FieldRef::Base(LocalField::qp(3, 60).unwrap())
    }

    fn int(f: &FieldRef, n: i64) -> PadicElement {
        PadicElement::from_i64(f.clone(), n)
    }

    #[test]
    fn geometric_inverse() {
        let f = q3();
        let one_plus_z = TruncatedSeries::from_integers(f.clone(), Var::Z, 0, &[1, 1], 20);
        let inv = one_plus_z.invert().unwrap();
        for k in 0..=20 {
            let expect = if k % 2 == 0 { 1 } else { -1 };
            assert!(inv.coeff(k).agrees_to(&int(&f, expect), 40));
        }
        let prod = one_plus_z.mul(&inv);
        assert!(prod.agrees_to(
            &TruncatedSeries::constant(f.clone(), Var::Z, int(&f, 1), 20),
            40
        ));
    }

    #[test]
    fn laurent_monomial_inverse() {
        let f = q3();
        let zinv = TruncatedSeries::monomial(f.clone(), Var::Z, -1, int(&f, 1), 10);
        let z = TruncatedSeries::variable(f.clone(), Var::Z, 10);
        let prod = zinv.mul(&z);
        assert!(prod.coeff(0).agrees_to(&int(&f, 1), 40));
        assert!(prod.order() == Some(0));
    }

    #[test]
    fn invert_three_plus_z_tracks_digit_loss() {
        let f = q3();
        let s = TruncatedSeries::from_integers(f.clone(), Var::Z, 0, &[3, 1], 12);
        let inv = s.invert().unwrap();
        // (1/3)(1 - Z/3 + Z^2/9 - ...)
        for k in 0..=6i64 {
            let mut expect = int(&f, if k % 2 == 0 { 1 } else { -1 });
            expect = expect.mul_pow_p(-(k + 1));
            assert!(
                inv.coeff(k).agrees_to(&expect, 30),
                "coefficient {k} mismatch"
            );
            assert!(inv.coeff(k).certified_pdigits() <= 60 - (k + 1));
        }
    }

    #[test]
    fn compose_identity_returns_inner() {
        let f = q3();
        let z = TruncatedSeries::variable(f.clone(), Var::Z, 8);
        let h = TruncatedSeries::from_integers(f.clone(), Var::T, 0, &[3, 1, 2], 8);
        let out = z.compose_small_constant(&h, 30).unwrap();
        assert!(out.agrees_to(&h, 25));
    }

    #[test]
    fn compose_pole_with_constant_plus_t() {
        let f = q3();
        // f = Z^{-1}, h = 3 + t  =>  (1/3) sum (-t/3)^i
        let zinv = TruncatedSeries::monomial(f.clone(), Var::Z, -1, int(&f, 1), 8);
        let h = TruncatedSeries::from_integers(f.clone(), Var::T, 0, &[3, 1], 8);
        let out = zinv.compose_small_constant(&h, 30).unwrap();
        for i in 0..=8i64 {
            let mut expect = int(&f, if i % 2 == 0 { 1 } else { -1 });
            expect = expect.mul_pow_p(-(i + 1));
            assert!(out.coeff(i).agrees_to(&expect, 25), "coefficient {i}");
        }
    }

    #[test]
    fn compose_all_ones_geometric_constant_term() {
        let f = q3();
        // f = sum_n Z^n, h = 3: t^0 coefficient is 1/(1-3) = -1/2
        let ones = vec![1i64; 61];
        let fs = TruncatedSeries::from_integers(f.clone(), Var::Z, 0, &ones, 60);
        let h = TruncatedSeries::from_integers(f.clone(), Var::T, 0, &[3], 4);
        let out = fs.compose_small_constant(&h, 30).unwrap();
        let minus_half = int(&f, -1).mul(&int(&f, 2).inverse().unwrap());
        assert!(out.coeff(0).agrees_to(&minus_half, 25));
    }

    #[test]
    fn power_coeff_recursion_basics() {
        let f = q3();
        // c_{0,n} = b_0^n
        let h = TruncatedSeries::from_integers(f.clone(), Var::T, 0, &[3, 5, 7, 2], 10);
        for n in 0..8u64 {
            let c0 = power_coeff_recursion(&h, n, 0).unwrap();
            assert!(c0.agrees_to(&int(&f, 3).pow(n), 30));
        }
        // h = b0 + b1 t, n = 2, i = 1 -> 2 b0 b1
        let lin = TruncatedSeries::from_integers(f.clone(), Var::T, 0, &[3, 5], 10);
        let c = power_coeff_recursion(&lin, 2, 1).unwrap();
        assert!(c.agrees_to(&int(&f, 30), 30));
        // n = 1 -> b_i
        for i in 0..=3i64 {
            let c = power_coeff_recursion(&h, 1, i).unwrap();
            assert!(c.agrees_to(&h.coeff(i), 30), "i = {i}");
        }
    }

    #[test]
    fn recursion_matches_brute_force_powers() {
        let f = q3();
        let h = TruncatedSeries::from_integers(f.clone(), Var::T, 0, &[3, 1, 4, 1, 5], 12);
        let mut pw = TruncatedSeries::constant(f.clone(), Var::T, int(&f, 1), 12);
        for n in 0..=9u64 {
            if n > 0 {
                pw = pw.mul(&h);
            }
            for i in 0..=10i64 {
                let c = power_coeff_recursion(&h, n, i).unwrap();
                assert!(
                    c.agrees_to(&pw.coeff(i), 25),
                    "mismatch at n={n} i={i}"
                );
            }
        }
    }

    #[test]
    fn derivative_and_residue() {
        let f = q3();
        let zinv = TruncatedSeries::monomial(f.clone(), Var::Z, -1, int(&f, 1), 10);
        assert!(zinv.residue().agrees_to(&int(&f, 1), 40));
        let s = TruncatedSeries::from_integers(f.clone(), Var::Z, -3, &[2, 0, 5, 1, 7], 10);
        assert!(s.derivative().residue().is_zero_at_precision());
        // (1+Z)^{-1} has residue zero and derivative -(1+Z)^{-2}
        let geo = TruncatedSeries::from_integers(f.clone(), Var::Z, 0, &[1, 1], 16)
            .invert()
            .unwrap();
        assert!(geo.residue().is_zero_at_precision());
        let direct = geo.derivative();
        let sq = geo.mul(&geo).neg();
        assert!(direct.agrees_to(&sq, 30));
    }

    #[test]
    fn reversion_log_exp() {
        let f = q3();
        let cap = 12i64;
        // log(1+Z) = sum (-1)^{k-1} Z^k / k
        let mut log_coeffs = vec![f.zero()];
        for k in 1..=cap {
            let c = int(&f, if k % 2 == 1 { 1 } else { -1 }).div_i64(k).unwrap();
            log_coeffs.push(c);
        }
        let log = TruncatedSeries::from_coeffs(f.clone(), Var::Z, 0, log_coeffs, cap);
        let exp_minus_one = log.reversion().unwrap();
        // exp(Z) - 1 = sum Z^k / k!
        let mut fact = int(&f, 1);
        for k in 1..=cap {
            fact = fact.div_i64(k).unwrap().mul_i64(1);
            // rebuild k! stepwise: fact = 1/k! after k steps
        }
        let mut kfact = int(&f, 1);
        for k in 1..=cap {
            kfact = kfact.mul_i64(k);
            let expect = kfact.inverse().unwrap();
            assert!(
                exp_minus_one.coeff(k).agrees_to(&expect, 20),
                "coefficient {k}"
            );
        }
        // involution
        let back = exp_minus_one.reversion().unwrap();
        assert!(back.agrees_to(&log, 20));
    }

    #[test]
    fn variable_tags_enforced() {
        let f = q3();
        let z = TruncatedSeries::variable(f.clone(), Var::Z, 5);
        let t = TruncatedSeries::variable(f.clone(), Var::T, 5);
        let r = std::panic::catch_unwind(|| z.add(&t));
        assert!(r.is_err());
    }
}
