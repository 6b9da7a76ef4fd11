//! JSON forms of the externally visible objects: series as arrays of
//! (exponent, coefficient-digit-vector) pairs with precision metadata, and
//! measures as level/value tables. Coefficients serialize as decimal digit
//! strings of the power-basis coordinates.

use std::collections::BTreeMap;
use std::str::FromStr;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::padic::{FieldRef, PadicElement};
use crate::series::{TruncatedSeries, Var};

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct ElementJson {
    pub coords: Vec<String>,
    pub pshift: i64,
    pub modexp: i64,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct SeriesJson {
    pub variable: String,
    pub lowest: i64,
    pub zcap: i64,
    pub exact_tail: bool,
    pub coefficients: Vec<(i64, ElementJson)>,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct MeasureJson {
    pub level: u32,
    /// unit residue -> power-basis coordinates in L_level
    pub values: BTreeMap<u64, ElementJson>,
    #[serde(default)]
    pub label: String,
}

pub fn element_to_json(x: &PadicElement) -> Result<ElementJson> {
    match x.field() {
        FieldRef::Base(_) => {
            let (coords, pshift, modexp) = x.base_coords();
            Ok(ElementJson {
                coords: coords.iter().map(|c| c.to_string()).collect(),
                pshift,
                modexp,
            })
        }
        FieldRef::Ext(_) => {
            // tower coordinates flatten base elements in order; only
            // integral single-level data is serialized here
            let mut coords = Vec::new();
            let mut pshift = 0;
            let mut modexp = i64::MAX;
            for c in x.ext_coords() {
                let (cc, ps, me) = c.base_coords();
                if ps != 0 {
                    return Err(Error::Config(
                        "only integral tower elements serialize".into(),
                    ));
                }
                pshift = pshift.max(ps);
                modexp = modexp.min(me);
                for v in cc {
                    coords.push(v.to_string());
                }
            }
            Ok(ElementJson {
                coords,
                pshift,
                modexp,
            })
        }
    }
}

pub fn element_from_json(field: &FieldRef, e: &ElementJson) -> Result<PadicElement> {
    let parse = |s: &String| -> Result<BigInt> {
        BigInt::from_str(s).map_err(|err| Error::Config(format!("bad integer {s}: {err}")))
    };
    match field {
        FieldRef::Base(f) => {
            if e.coords.len() > f.degree() {
                return Err(Error::Config("coordinate vector too long".into()));
            }
            let coords = e.coords.iter().map(parse).collect::<Result<Vec<_>>>()?;
            Ok(PadicElement::from_coords(
                field.clone(),
                coords,
                e.pshift,
                e.modexp,
            ))
        }
        FieldRef::Ext(t) => {
            let d = t.base.degree();
            if e.coords.len() > d * t.degree {
                return Err(Error::Config("coordinate vector too long".into()));
            }
            let base = FieldRef::Base(t.base.clone());
            let mut out = Vec::new();
            for chunk in e.coords.chunks(d) {
                let coords = chunk.iter().map(parse).collect::<Result<Vec<_>>>()?;
                out.push(PadicElement::from_coords(
                    base.clone(),
                    coords,
                    e.pshift,
                    e.modexp,
                ));
            }
            while out.len() < t.degree {
                out.push(base.zero());
            }
            Ok(PadicElement::from_ext_coords(t.clone(), out))
        }
    }
}

pub fn series_to_json(s: &TruncatedSeries) -> Result<SeriesJson> {
    let mut coefficients = Vec::new();
    for k in s.lowest..=s.zcap {
        let c = s.coeff(k);
        if c.is_zero_at_precision() {
            continue;
        }
        coefficients.push((k, element_to_json(&c)?));
    }
    Ok(SeriesJson {
        variable: s.var.name().into(),
        lowest: s.lowest,
        zcap: s.zcap,
        exact_tail: s.exact_tail,
        coefficients,
    })
}

pub fn series_from_json(field: &FieldRef, j: &SeriesJson) -> Result<TruncatedSeries> {
    let var = match j.variable.as_str() {
        "Z" => Var::Z,
        "t" => Var::T,
        other => return Err(Error::Config(format!("unknown variable tag {other}"))),
    };
    let mut coeffs = vec![field.zero(); (j.zcap - j.lowest + 1).max(0) as usize];
    for (k, e) in &j.coefficients {
        if *k < j.lowest || *k > j.zcap {
            return Err(Error::Config(format!("exponent {k} outside the window")));
        }
        coeffs[(*k - j.lowest) as usize] = element_from_json(field, e)?;
    }
    Ok(if j.exact_tail {
        TruncatedSeries::from_polynomial(field.clone(), var, j.lowest, coeffs, j.zcap)
    } else {
        TruncatedSeries::from_coeffs(field.clone(), var, j.lowest, coeffs, j.zcap)
    })
}

pub fn measure_to_json(m: &crate::distributions::FiniteMeasure) -> Result<MeasureJson> {
    let mut values = BTreeMap::new();
    for (a, v) in &m.values {
        values.insert(*a, element_to_json(v)?);
    }
    Ok(MeasureJson {
        level: m.level,
        values,
        label: m.label.clone(),
    })
}

pub fn measure_from_json(
    ctx: &crate::distributions::DistContext,
    j: &MeasureJson,
) -> Result<crate::distributions::FiniteMeasure> {
    let tower = ctx.tower(j.level)?;
    let field = tower.field_ref();
    let mut values = BTreeMap::new();
    for (a, e) in &j.values {
        values.insert(*a, element_from_json(&field, e)?);
    }
    Ok(crate::distributions::FiniteMeasure::from_values(
        j.level,
        values,
        if j.label.is_empty() { "json" } else { &j.label },
    ))
}
