//! Exact capped-precision arithmetic in o_L, L and the division-point
//! towers L_n, including Galois action, trace and norm.

mod elem;
mod field;
pub mod linalg;
mod tower;

pub use elem::{teichmuller, FieldRef, PadicElement};
pub use field::{LocalField, Presentation};
pub use tower::{GaloisConjugate, TowerField, UnitRep};

use std::sync::Arc;

use num_bigint::BigInt;

/// Teichmueller-digit representatives of the residue classes, index 0 being
/// the zero class. For f = 1 the class of index j is the lift of j.
pub fn residue_representatives(base: &Arc<LocalField>) -> Vec<PadicElement> {
    let f = FieldRef::Base(base.clone());
    let q = base.q;
    let p = base.p;
    let mut reps = Vec::with_capacity(q as usize);
    reps.push(f.zero());
    for idx in 1..q {
        let class = if base.f == 1 {
            PadicElement::from_i64(f.clone(), idx as i64)
        } else {
            // digits of idx in base p select power-basis coordinates
            let mut coords = vec![BigInt::from(0); base.degree()];
            let mut n = idx;
            let mut i = 0;
            while n > 0 {
                coords[i] = BigInt::from(n % p);
                n /= p;
                i += 1;
            }
            PadicElement::from_base_coords(f.clone(), coords, 0, base.default_modexp)
        };
        reps.push(teichmuller(&class));
    }
    reps
}

impl PadicElement {
    /// Builds an element from raw power-basis coordinates.
    pub fn from_coords(
        field: FieldRef,
        coords: Vec<BigInt>,
        pshift: i64,
        modexp: i64,
    ) -> PadicElement {
        PadicElement::from_base_coords(field, coords, pshift, modexp)
    }
}

/// Enumerates representatives of (o_L/pi^n)^* as Teichmueller digit sums
/// a = w_0 + w_1 pi + ... + w_{n-1} pi^{n-1} with w_0 nonzero.
pub fn unit_representatives(base: &Arc<LocalField>, level: u32) -> Vec<UnitRep> {
    let reps = residue_representatives(base);
    let q = base.q as u64;
    let pi = base.uniformizer();
    let n = level as usize;
    let count = (q - 1) * q.pow(level - 1);
    let mut out = Vec::with_capacity(count as usize);
    let mut digits = vec![0u64; n];
    digits[0] = 1;
    loop {
        // value = sum reps[digits[i]] pi^i
        let mut value = reps[digits[0] as usize].clone();
        let mut pw = pi.clone();
        for &d in digits.iter().skip(1) {
            if d != 0 {
                value = value.add(&reps[d as usize].mul(&pw));
            }
            pw = pw.mul(&pi);
        }
        let residue_index = if base.degree() == 1 {
            // integer residue mod p^n
            let (coords, pshift, _) = value.base_coords();
            assert!(pshift == 0);
            let m = base.p_pow(level as i64);
            let r = num_integer::Integer::mod_floor(&coords[0], &m);
            let (_, ds) = r.to_u64_digits();
            ds.first().copied().unwrap_or(0)
        } else {
            // synthetic: mixed-radix digit index
            let mut idx = 0u64;
            for &d in digits.iter().rev() {
                idx = idx * q + d;
            }
            idx
        };
        out.push(UnitRep {
            value,
            digits: digits.clone(),
            residue_index,
        });
        // increment digit vector; first digit runs over 1..q
        let mut i = 0;
        loop {
            digits[i] += 1;
            let limit = q;
            let lo = if i == 0 { 1 } else { 0 };
            if digits[i] < limit {
                break;
            }
            digits[i] = lo;
            i += 1;
            if i == n {
                return out;
            }
        }
    }
}
