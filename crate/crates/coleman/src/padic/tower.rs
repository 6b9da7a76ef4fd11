//! Division-point tower fields L_n over a base field L.
//!
//! A tower field is L[Y]/(f_n) for the level-n division polynomial f_n,
//! which is Eisenstein over o_L, with generator eta_n the class of Y. The
//! Galois action of (o_L/pi^n)^* is stored as the table a -> [a](eta_n),
//! computed by the formal-group layer at construction time; traces and
//! norms run over these explicit conjugates.

use std::sync::Arc;

use num_rational::Ratio;
use num_traits::Zero;
use once_cell::sync::OnceCell;

use super::elem::{FieldRef, PadicElement};
use super::field::{fresh_field_id, LocalField};
use super::linalg;
use crate::error::{Error, Result};

/// A representative of a unit class in (o_L/pi^n)^*.
#[derive(Clone, Debug)]
pub struct UnitRep {
    /// Integral element of o_L congruent to the class.
    pub value: PadicElement,
    /// Teichmueller digit indices (first digit nonzero).
    pub digits: Vec<u64>,
    /// For a rational base: the integer in [1, p^n) congruent to `value`
    /// modulo p^n. Synthetic enumeration index otherwise.
    pub residue_index: u64,
}

#[derive(Clone, Debug)]
pub struct GaloisConjugate {
    pub rep: UnitRep,
    /// The image [a](eta_n) of the generator.
    pub image: PadicElement,
}

pub struct TowerField {
    pub(crate) id: u64,
    pub base: Arc<LocalField>,
    pub level: u32,
    pub degree: usize,
    /// Monic Eisenstein modulus over the base, length degree + 1.
    pub(crate) modulus: Vec<PadicElement>,
    /// Frobenius polynomial of the attached formal group, over the base.
    pub(crate) frobenius: Vec<PadicElement>,
    pub(crate) lower: Option<Arc<TowerField>>,
    galois: OnceCell<Vec<GaloisConjugate>>,
    eta_images: OnceCell<Vec<PadicElement>>,
}

impl std::fmt::Debug for TowerField {
    fn fmt(&self, fmt: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            fmt,
            "TowerField(level={}, degree={}, base p={})",
            self.level, self.degree, self.base.p
        )
    }
}

impl TowerField {
    /// Builds the quotient L[Y]/(modulus); the modulus must be monic and
    /// Eisenstein over o_L.
    pub fn new(
        base: Arc<LocalField>,
        modulus: Vec<PadicElement>,
        frobenius: Vec<PadicElement>,
        level: u32,
        lower: Option<Arc<TowerField>>,
    ) -> Result<Arc<TowerField>> {
        let degree = modulus.len() - 1;
        if degree < 1 {
            return Err(Error::Config("tower modulus must have degree >= 1".into()));
        }
        let one = Ratio::from_integer(1);
        match modulus[degree].pi_valuation() {
            Some(v) if v.is_zero() => {}
            _ => return Err(Error::Config("tower modulus must be monic-unit".into())),
        }
        for (i, c) in modulus.iter().enumerate().take(degree) {
            match c.pi_valuation() {
                None => {
                    if i == 0 {
                        return Err(Error::PrecisionExhausted(
                            "division polynomial constant term not determined".into(),
                        ));
                    }
                }
                Some(v) => {
                    if v < one {
                        return Err(Error::Config(format!(
                            "tower modulus coefficient {i} has valuation {v} < 1, not Eisenstein"
                        )));
                    }
                    if i == 0 && v != one {
                        return Err(Error::Config(format!(
                            "tower modulus constant term has valuation {v}, expected exactly 1"
                        )));
                    }
                }
            }
        }
        Ok(Arc::new(TowerField {
            id: fresh_field_id(),
            base,
            level,
            degree,
            modulus,
            frobenius,
            lower,
            galois: OnceCell::new(),
            eta_images: OnceCell::new(),
        }))
    }

    pub(crate) fn set_galois(&self, conjugates: Vec<GaloisConjugate>) {
        self.galois
            .set(conjugates)
            .unwrap_or_else(|_| panic!("galois table already set"));
    }

    pub fn galois(&self) -> &[GaloisConjugate] {
        self.galois.get().expect("galois table not populated")
    }

    pub fn field_ref(self: &Arc<Self>) -> FieldRef {
        FieldRef::Ext(self.clone())
    }

    /// The class of the generator eta_n.
    pub fn eta(self: &Arc<Self>) -> PadicElement {
        let basef = FieldRef::Base(self.base.clone());
        let mut coords = vec![basef.zero(); self.degree];
        coords[1 % self.degree] = basef.one();
        if self.degree == 1 {
            // degenerate quotient: eta = -c_0
            coords[0] = self.modulus[0].neg();
        }
        PadicElement::from_ext_coords(self.clone(), coords)
    }

    pub fn embed_base(self: &Arc<Self>, x: &PadicElement) -> PadicElement {
        match x.field() {
            FieldRef::Base(f) => assert!(f.id == self.base.id, "foreign base element"),
            _ => panic!("embed_base expects a base element"),
        }
        let basef = FieldRef::Base(self.base.clone());
        let mut coords = vec![basef.zero(); self.degree];
        coords[0] = x.clone();
        PadicElement::from_ext_coords(self.clone(), coords)
    }

    /// Images of the lower-level generators inside this field:
    /// index m in [0, level] holds eta_m = [pi^{level-m}](eta_level),
    /// with eta_0 = 0.
    pub fn eta_image(self: &Arc<Self>, m: u32) -> PadicElement {
        assert!(m <= self.level, "eta level exceeds tower level");
        let images = self.eta_images.get_or_init(|| {
            let mut v = Vec::with_capacity(self.level as usize + 1);
            let mut cur = self.eta();
            v.push(cur.clone()); // index 0 <-> level
            for _ in 0..self.level {
                cur = self.eval_frobenius(&cur);
                v.push(cur.clone());
            }
            v
        });
        images[(self.level - m) as usize].clone()
    }

    fn eval_frobenius(self: &Arc<Self>, x: &PadicElement) -> PadicElement {
        let mut acc = self.embed_base(self.frobenius.last().unwrap());
        for c in self.frobenius.iter().rev().skip(1) {
            acc = acc.mul(x).add(&self.embed_base(c));
        }
        acc
    }

    /// Embeds an element of a lower tower level (or of the base).
    pub fn embed_from_lower(self: &Arc<Self>, x: &PadicElement) -> PadicElement {
        match x.field() {
            FieldRef::Base(_) => self.embed_base(x),
            FieldRef::Ext(t) => {
                assert!(t.level <= self.level, "cannot embed from a higher level");
                if t.level == self.level {
                    assert!(t.id == self.id, "foreign tower of equal level");
                    return x.clone();
                }
                let em = self.eta_image(t.level);
                let mut acc = self.embed_base(&x.ext_coords()[t.degree - 1]);
                for c in x.ext_coords().iter().rev().skip(1) {
                    acc = acc.mul(&em).add(&self.embed_base(c));
                }
                acc
            }
        }
    }

    /// Applies the Galois automorphism sending eta to the given conjugate.
    pub fn apply_conjugate(self: &Arc<Self>, conj: &GaloisConjugate, x: &PadicElement) -> PadicElement {
        assert!(x.field().id() == self.id, "element of a different field");
        let coords = x.ext_coords();
        let mut acc = self.embed_base(&coords[self.degree - 1]);
        for c in coords.iter().rev().skip(1) {
            acc = acc.mul(&conj.image).add(&self.embed_base(c));
        }
        acc
    }

    /// Galois action sigma_a for a given by its residue index.
    pub fn galois_apply(self: &Arc<Self>, residue_index: u64, x: &PadicElement) -> Result<PadicElement> {
        let conj = self
            .galois()
            .iter()
            .find(|c| c.rep.residue_index == residue_index)
            .ok_or_else(|| Error::NotAUnit(format!("no unit class with index {residue_index}")))?;
        Ok(self.apply_conjugate(conj, x))
    }

    /// Conjugates fixing L_m, i.e. classes congruent to 1 mod pi^m.
    pub fn subgroup_fixing(&self, m: u32) -> Vec<usize> {
        let mfloor = Ratio::from_integer(m as i64);
        self.galois()
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                let one = PadicElement::from_i64(
                    FieldRef::Base(self.base.clone()),
                    1,
                );
                match c.rep.value.sub(&one).pi_valuation() {
                    None => true,
                    Some(v) => v >= mfloor,
                }
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Expresses an element known to lie in L_m in the coordinates of L_m
    /// (`m = 0` means the base field). Errors with NotGaloisInvariant when
    /// the element does not descend at the working precision.
    pub fn express_at_level(self: &Arc<Self>, x: &PadicElement, m: u32) -> Result<PadicElement> {
        assert!(m <= self.level);
        if m == self.level {
            return Ok(x.clone());
        }
        let coords = x.ext_coords();
        if m == 0 {
            for (j, c) in coords.iter().enumerate().skip(1) {
                if let Some(v) = c.valuation() {
                    // allow tiny certified tails only if they vanish
                    if v < Ratio::from_integer(c.certified_pdigits()) {
                        return Err(Error::NotGaloisInvariant(format!(
                            "coordinate {j} of a supposed base value has valuation {v}"
                        )));
                    }
                }
            }
            return Ok(coords[0].clone());
        }
        let target = self.lower_at(m);
        let em = self.eta_image(m);
        let dm = target.degree;
        // columns: powers of em as vectors over the base
        let mut cols: Vec<Vec<PadicElement>> = Vec::with_capacity(dm);
        let mut pw = self.embed_base(&PadicElement::from_i64(FieldRef::Base(self.base.clone()), 1));
        for _ in 0..dm {
            cols.push(pw.ext_coords().to_vec());
            pw = pw.mul(&em);
        }
        let rhs: Vec<PadicElement> = coords.to_vec();
        let sol = linalg::solve_tall(&cols, &rhs)
            .map_err(|e| Error::NotGaloisInvariant(format!("descent solve failed: {e}")))?;
        Ok(PadicElement::from_ext_coords(target, sol))
    }

    fn lower_at(self: &Arc<Self>, m: u32) -> Arc<TowerField> {
        assert!(m >= 1 && m < self.level);
        let mut cur = self.lower.clone().expect("lower tower missing");
        while cur.level > m {
            cur = cur.lower.clone().expect("lower tower missing");
        }
        assert!(cur.level == m);
        cur
    }

    /// Trace and norm from this level down to level m (0 = base field),
    /// computed by summing and multiplying the explicit conjugates.
    pub fn trace_norm_to(self: &Arc<Self>, x: &PadicElement, m: u32) -> Result<(PadicElement, PadicElement)> {
        assert!(m <= self.level);
        if m == self.level {
            return Ok((x.clone(), x.clone()));
        }
        let idxs = self.subgroup_fixing(m);
        let expected = self.degree
            / if m == 0 {
                1
            } else {
                self.lower_at(m).degree
            };
        assert!(
            idxs.len() == expected,
            "subgroup size {} does not match relative degree {expected}",
            idxs.len()
        );
        let galois = self.galois();
        let mut tr = PadicElement::zero(self.field_ref(), x.certified_pdigits().max(1));
        let mut nm = PadicElement::from_i64(self.field_ref(), 1);
        for i in idxs {
            let y = self.apply_conjugate(&galois[i], x);
            tr = tr.add(&y);
            nm = nm.mul(&y);
        }
        Ok((
            self.express_at_level(&tr, m)?,
            self.express_at_level(&nm, m)?,
        ))
    }
}
