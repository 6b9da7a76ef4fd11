//! Base local fields L over Q_p.
//!
//! A `LocalField` is presented as Q_p[X]/(g) for a monic integer polynomial
//! g that is certified either Eisenstein (totally ramified, e = deg g) or
//! irreducible modulo p (unramified, f = deg g). Elements are coordinate
//! vectors in the power basis of X with an explicit power-of-p denominator
//! and a per-element modulus, so all arithmetic is exact modulo the declared
//! precision ideal.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

static NEXT_FIELD_ID: AtomicU64 = AtomicU64::new(1);

pub(crate) fn fresh_field_id() -> u64 {
    NEXT_FIELD_ID.fetch_add(1, Ordering::Relaxed)
}

/// How the defining polynomial was certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Presentation {
    /// Constant term of valuation exactly one, all lower coefficients
    /// divisible by p. The class of X is a uniformizer.
    Eisenstein,
    /// Reduction mod p is irreducible over F_p. p itself is a uniformizer.
    Unramified,
}

/// A finite extension of Q_p given by a certified monic integer polynomial.
pub struct LocalField {
    pub(crate) id: u64,
    pub p: u64,
    /// Monic defining polynomial, length d + 1.
    pub poly: Vec<BigInt>,
    pub kind: Presentation,
    /// Ramification index.
    pub e: u32,
    /// Residue degree.
    pub f: u32,
    /// Residue cardinality q = p^f.
    pub q: u64,
    /// Power-basis coordinates of the chosen uniformizer (integral).
    pub(crate) pi_coords: Vec<BigInt>,
    /// Default working modulus exponent for freshly built elements.
    pub(crate) default_modexp: i64,
    p_pows: Mutex<Vec<BigInt>>,
}

impl std::fmt::Debug for LocalField {
    fn fmt(&self, fmt: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            fmt,
            "LocalField(p={}, d={}, e={}, f={}, {:?})",
            self.p,
            self.degree(),
            self.e,
            self.f,
            self.kind
        )
    }
}

fn is_small_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut k = 2u64;
    while k * k <= p {
        if p % k == 0 {
            return false;
        }
        k += 1;
    }
    true
}

/// Dense polynomial arithmetic over F_p, used for certification and for
/// residue-field inverses.
pub(crate) mod fp_poly {
    pub fn trim(v: &mut Vec<u64>) {
        while v.len() > 1 && *v.last().unwrap() == 0 {
            v.pop();
        }
    }

    pub fn rem(a: &[u64], m: &[u64], p: u64) -> Vec<u64> {
        let mut r: Vec<u64> = a.to_vec();
        trim(&mut r);
        let dm = m.len() - 1;
        if dm == 0 {
            return vec![0];
        }
        let lead_inv = inv_mod(m[dm], p);
        while r.len() > dm {
            let k = r.len() - 1 - dm;
            let c = (r[r.len() - 1] * lead_inv) % p;
            if c != 0 {
                for i in 0..=dm {
                    let idx = k + i;
                    let sub = (c * m[i]) % p;
                    r[idx] = (r[idx] + p - sub) % p;
                }
            }
            r.pop();
            trim(&mut r);
        }
        r
    }

    pub fn mul(a: &[u64], b: &[u64], m: &[u64], p: u64) -> Vec<u64> {
        let mut out = vec![0u64; a.len() + b.len() - 1];
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0 {
                continue;
            }
            for (j, &bj) in b.iter().enumerate() {
                out[i + j] = (out[i + j] + ai * bj) % p;
            }
        }
        rem(&out, m, p)
    }

    pub fn pow_x(mut exp: u128, m: &[u64], p: u64) -> Vec<u64> {
        // x^exp mod m
        let mut base = rem(&[0, 1], m, p);
        let mut acc = vec![1u64];
        while exp > 0 {
            if exp & 1 == 1 {
                acc = mul(&acc, &base, m, p);
            }
            base = mul(&base, &base, m, p);
            exp >>= 1;
        }
        acc
    }

    pub fn inv_mod(a: u64, p: u64) -> u64 {
        // p prime, a != 0 mod p
        let mut result = 1u64;
        let mut base = a % p;
        let mut e = p - 2;
        while e > 0 {
            if e & 1 == 1 {
                result = result * base % p;
            }
            base = base * base % p;
            e >>= 1;
        }
        result
    }

    pub fn gcd(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
        let mut x: Vec<u64> = a.to_vec();
        let mut y: Vec<u64> = b.to_vec();
        trim(&mut x);
        trim(&mut y);
        while !(y.len() == 1 && y[0] == 0) {
            let mut m = y.clone();
            // make monic so `rem` divides cleanly
            let lead = *m.last().unwrap();
            if lead != 1 {
                let li = inv_mod(lead, p);
                for c in m.iter_mut() {
                    *c = *c * li % p;
                }
            }
            let r = rem(&x, &m, p);
            x = y;
            y = r;
            trim(&mut x);
            trim(&mut y);
        }
        x
    }

    /// Extended Euclid in F_p[x]: inverse of a modulo the monic polynomial m.
    pub fn inverse(a: &[u64], m: &[u64], p: u64) -> Vec<u64> {
        // invariant: r0 = t0*a mod m, r1 = t1*a mod m
        let mut r0: Vec<u64> = m.to_vec();
        let mut r1: Vec<u64> = rem(a, m, p);
        let mut t0: Vec<u64> = vec![0];
        let mut t1: Vec<u64> = vec![1];
        trim(&mut r1);
        while !(r1.len() == 1 && r1[0] == 0) {
            // divide r0 by r1
            let mut q = vec![0u64; r0.len().saturating_sub(r1.len()) + 1];
            let mut rr = r0.clone();
            trim(&mut rr);
            let d1 = r1.len() - 1;
            let li = inv_mod(r1[d1], p);
            while rr.len() > d1 || (rr.len() == d1 + 1 && !(rr.len() == 1 && rr[0] == 0)) {
                if rr.len() < r1.len() {
                    break;
                }
                let k = rr.len() - r1.len();
                let c = rr[rr.len() - 1] * li % p;
                q[k] = (q[k] + c) % p;
                for i in 0..r1.len() {
                    let sub = c * r1[i] % p;
                    rr[k + i] = (rr[k + i] + p - sub) % p;
                }
                trim(&mut rr);
                if rr.len() == 1 && rr[0] == 0 {
                    break;
                }
            }
            trim(&mut q);
            // t2 = t0 - q*t1
            let mut qt = vec![0u64; q.len() + t1.len() - 1];
            for (i, &qi) in q.iter().enumerate() {
                for (j, &tj) in t1.iter().enumerate() {
                    qt[i + j] = (qt[i + j] + qi * tj) % p;
                }
            }
            let mut t2 = vec![0u64; t0.len().max(qt.len())];
            for (i, v) in t2.iter_mut().enumerate() {
                let a0 = t0.get(i).copied().unwrap_or(0);
                let b0 = qt.get(i).copied().unwrap_or(0);
                *v = (a0 + p - b0) % p;
            }
            trim(&mut t2);
            r0 = r1;
            r1 = rr;
            t0 = t1;
            t1 = t2;
        }
        // r0 is now gcd (a nonzero constant); normalize
        assert!(r0.len() == 1 && r0[0] != 0, "non-invertible residue");
        let c = inv_mod(r0[0], p);
        let mut out: Vec<u64> = t0.iter().map(|&t| t * c % p).collect();
        out = rem(&out, m, p);
        out
    }

    /// Irreducibility over F_p via the Rabin test.
    pub fn is_irreducible(poly: &[u64], p: u64) -> bool {
        let d = poly.len() - 1;
        if d == 0 {
            return false;
        }
        if d == 1 {
            return true;
        }
        // x^{p^d} == x mod poly
        let full = pow_x((p as u128).pow(d as u32), poly, p);
        let mut x_itself = rem(&[0, 1], poly, p);
        trim(&mut x_itself);
        let mut full_t = full;
        trim(&mut full_t);
        if full_t != x_itself {
            return false;
        }
        // gcd(x^{p^{d/l}} - x, poly) = 1 for prime divisors l of d
        let mut divs = vec![];
        let mut n = d;
        let mut l = 2;
        while l * l <= n {
            if n % l == 0 {
                divs.push(l);
                while n % l == 0 {
                    n /= l;
                }
            }
            l += 1;
        }
        if n > 1 {
            divs.push(n);
        }
        for l in divs {
            let sub = pow_x((p as u128).pow((d / l) as u32), poly, p);
            // sub - x
            let mut diff = sub;
            if diff.len() < 2 {
                diff.resize(2, 0);
            }
            diff[1] = (diff[1] + p - 1) % p;
            trim(&mut diff);
            let g = gcd(&diff, poly, p);
            if !(g.len() == 1 && g[0] != 0) {
                return false;
            }
        }
        true
    }
}

impl LocalField {
    /// Builds a base field from a prime, a monic integer defining polynomial
    /// and power-basis coordinates of the chosen uniformizer.
    ///
    /// Accepts Eisenstein presentations (e = d) and unramified presentations
    /// (irreducible reduction mod p, f = d). Mixed presentations cannot be
    /// certified at a single step and are rejected.
    pub fn new(
        p: u64,
        poly: Vec<BigInt>,
        pi_coords: Option<Vec<BigInt>>,
        default_modexp: i64,
    ) -> Result<Arc<LocalField>> {
        if !is_small_prime(p) {
            return Err(Error::Config(format!("{p} is not prime")));
        }
        if poly.len() < 2 {
            return Err(Error::Config("defining polynomial must have degree >= 1".into()));
        }
        if !poly.last().unwrap().is_one() {
            return Err(Error::NotIrreducible("defining polynomial must be monic".into()));
        }
        if default_modexp < 4 {
            return Err(Error::Config("working modulus exponent too small".into()));
        }
        let d = poly.len() - 1;
        let pb = BigInt::from(p);

        let vp = |c: &BigInt| -> u32 {
            if c.is_zero() {
                return u32::MAX;
            }
            let mut v = 0;
            let mut c = c.clone();
            while (&c % &pb).is_zero() {
                c /= &pb;
                v += 1;
            }
            v
        };

        let eisenstein = (0..d).all(|i| vp(&poly[i]) >= 1) && vp(&poly[0]) == 1;
        let kind = if eisenstein {
            Presentation::Eisenstein
        } else {
            let red: Vec<u64> = poly
                .iter()
                .map(|c| {
                    let m = c.mod_floor(&pb);
                    let (_, digits) = m.to_u64_digits();
                    digits.first().copied().unwrap_or(0)
                })
                .collect();
            if fp_poly::is_irreducible(&red, p) {
                Presentation::Unramified
            } else {
                return Err(Error::NotIrreducible(
                    "polynomial is neither Eisenstein nor irreducible mod p; \
                     only these presentations are certified"
                        .into(),
                ));
            }
        };
        let (e, f) = match kind {
            Presentation::Eisenstein => (d as u32, 1),
            Presentation::Unramified => (1, d as u32),
        };
        let q = (p as u128).pow(f);
        if q > u64::MAX as u128 {
            return Err(Error::Config("residue cardinality does not fit in u64".into()));
        }

        let pi_coords = match pi_coords {
            Some(v) => {
                let mut v = v;
                if v.len() > d {
                    return Err(Error::NotUniformizer(
                        "uniformizer coordinates exceed field degree".into(),
                    ));
                }
                v.resize(d, BigInt::zero());
                v
            }
            None => {
                let mut v = vec![BigInt::zero(); d];
                match kind {
                    Presentation::Eisenstein => {
                        if d == 1 {
                            v[0] = -poly[0].clone();
                        } else {
                            v[1] = BigInt::one();
                        }
                    }
                    Presentation::Unramified => v[0] = BigInt::from(p),
                }
                v
            }
        };

        let field = Arc::new(LocalField {
            id: fresh_field_id(),
            p,
            poly,
            kind,
            e,
            f,
            q: q as u64,
            pi_coords,
            default_modexp,
            p_pows: Mutex::new(vec![BigInt::one()]),
        });

        // certify the chosen uniformizer
        let pi = field.uniformizer();
        match pi.valuation() {
            Some(v) if v == num_rational::Ratio::new(1, field.e as i64) => {}
            other => {
                return Err(Error::NotUniformizer(format!(
                    "expected valuation 1/{}, found {:?}",
                    field.e, other
                )))
            }
        }
        Ok(field)
    }

    /// Convenience constructor for Q_p itself (defining polynomial X - p).
    pub fn qp(p: u64, default_modexp: i64) -> Result<Arc<LocalField>> {
        LocalField::new(
            p,
            vec![-BigInt::from(p), BigInt::one()],
            Some(vec![BigInt::from(p)]),
            default_modexp,
        )
    }

    pub fn degree(&self) -> usize {
        self.poly.len() - 1
    }

    pub(crate) fn p_pow(&self, k: i64) -> BigInt {
        assert!(k >= 0, "negative power of p requested");
        let k = k as usize;
        let mut cache = self.p_pows.lock().unwrap();
        while cache.len() <= k {
            let next = cache.last().unwrap() * BigInt::from(self.p);
            cache.push(next);
        }
        cache[k].clone()
    }

    /// The chosen uniformizer as an element.
    pub fn uniformizer(self: &Arc<Self>) -> crate::padic::PadicElement {
        crate::padic::PadicElement::from_base_coords(
            crate::padic::FieldRef::Base(self.clone()),
            self.pi_coords.clone(),
            0,
            self.default_modexp,
        )
    }
}
