//! Small dense linear solves over capped-precision fields, with pivoting by
//! minimal valuation. Sizes stay at desk scale (tower degrees), so Gaussian
//! elimination is fine.

use num_rational::Ratio;

use super::elem::PadicElement;
use crate::error::{Error, Result};

/// Solves the consistent tall system  sum_j cols[j] * c_j = rhs  for c,
/// where each column and the right-hand side are coordinate vectors of
/// equal length. Errors if no pivot can be found or the residual rows do
/// not vanish at working precision.
pub fn solve_tall(cols: &[Vec<PadicElement>], rhs: &[PadicElement]) -> Result<Vec<PadicElement>> {
    let ncols = cols.len();
    let nrows = rhs.len();
    assert!(ncols >= 1 && nrows >= ncols);
    // augmented rows
    let mut rows: Vec<Vec<PadicElement>> = (0..nrows)
        .map(|i| {
            let mut r: Vec<PadicElement> = cols.iter().map(|c| c[i].clone()).collect();
            r.push(rhs[i].clone());
            r
        })
        .collect();

    let mut pivot_rows: Vec<usize> = Vec::with_capacity(ncols);
    for col in 0..ncols {
        // choose remaining row with minimal valuation in this column
        let mut best: Option<(usize, Ratio<i64>)> = None;
        for (i, row) in rows.iter().enumerate() {
            if pivot_rows.contains(&i) {
                continue;
            }
            if let Some(v) = row[col].valuation() {
                if best.as_ref().map(|(_, bv)| v < *bv).unwrap_or(true) {
                    best = Some((i, v));
                }
            }
        }
        let (pi, _) = best.ok_or_else(|| {
            Error::PrecisionExhausted(format!("no pivot in column {col} of descent system"))
        })?;
        pivot_rows.push(pi);
        let inv = rows[pi][col].inverse()?;
        let prow: Vec<PadicElement> = rows[pi].iter().map(|x| x.mul(&inv)).collect();
        rows[pi] = prow.clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == pi {
                continue;
            }
            if row[col].is_zero_at_precision() {
                continue;
            }
            let factor = row[col].clone();
            for (k, entry) in row.iter_mut().enumerate() {
                *entry = entry.sub(&factor.mul(&prow[k]));
            }
        }
    }

    // read off solution
    let mut sol = vec![rhs[0].field().zero(); ncols];
    for (col, &pi) in pivot_rows.iter().enumerate() {
        sol[col] = rows[pi][ncols].clone();
    }
    // consistency of the remaining rows
    for (i, row) in rows.iter().enumerate() {
        if pivot_rows.contains(&i) {
            continue;
        }
        if let Some(v) = row[ncols].valuation() {
            if v < Ratio::from_integer(1.max(row[ncols].certified_pdigits() / 2)) {
                return Err(Error::NotGaloisInvariant(format!(
                    "residual row {i} has valuation {v}"
                )));
            }
        }
    }
    Ok(sol)
}

/// Rank of a square matrix at working precision (entries consumed).
pub fn rank(mut rows: Vec<Vec<PadicElement>>) -> usize {
    let n = rows.len();
    let m = if n == 0 { 0 } else { rows[0].len() };
    let mut rank = 0;
    let mut used = vec![false; n];
    for col in 0..m {
        let mut best: Option<(usize, Ratio<i64>)> = None;
        for (i, row) in rows.iter().enumerate() {
            if used[i] {
                continue;
            }
            if let Some(v) = row[col].valuation() {
                if v < Ratio::from_integer(row[col].certified_pdigits())
                    && best.as_ref().map(|(_, bv)| v < *bv).unwrap_or(true)
                {
                    best = Some((i, v));
                }
            }
        }
        let Some((pi, _)) = best else { continue };
        used[pi] = true;
        rank += 1;
        let inv = match rows[pi][col].inverse() {
            Ok(x) => x,
            Err(_) => continue,
        };
        let prow: Vec<PadicElement> = rows[pi].iter().map(|x| x.mul(&inv)).collect();
        rows[pi] = prow.clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if used[i] || row[col].is_zero_at_precision() {
                continue;
            }
            let factor = row[col].clone();
            for (k, entry) in row.iter_mut().enumerate() {
                *entry = entry.sub(&factor.mul(&prow[k]));
            }
        }
    }
    rank
}
