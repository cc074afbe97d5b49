//! Incremental double description (Motzkin) for pointed cones `{x : Rx >= 0}`.
//!
//! Rows are inserted one at a time. Rays are split by the sign of the new
//! row into `+`, `0` and `−` classes and new rays are only formed from
//! `(+, −)` pairs that are adjacent in the current cone, checked
//! combinatorially on zero sets.

use fixedbitset::FixedBitSet;

use crate::linalg::{dot, rank_of_rows, DenseMatrix};
use crate::scalar::Scalar;

use super::ConeError;

#[derive(Debug, Clone)]
pub(crate) struct DdRay<T> {
    pub coords: Vec<T>,
    pub zeros: FixedBitSet,
}

pub(crate) fn normalize<T: Scalar>(v: &mut [T]) {
    let s = T::vector_scale(v);
    if !s.is_zero() {
        for x in v.iter_mut() {
            *x = x.clone() / s.clone();
        }
    }
}

/// Extreme rays of `{x ∈ R^dim : rows · x >= 0}`. Rows must have rank `dim`.
pub(crate) fn double_description<T: Scalar>(
    rows: &[Vec<T>],
    dim: usize,
    tol: &T,
) -> Result<Vec<DdRay<T>>, ConeError> {
    let m = rows.len();
    let thresholds: Vec<T> = rows
        .iter()
        .map(|r| if T::EXACT { T::zero() } else { tol.clone() * T::vector_scale(r) })
        .collect();

    // initial basis: first rows that raise the rank
    let mut basis: Vec<usize> = Vec::with_capacity(dim);
    let mut basis_rows: Vec<Vec<T>> = Vec::with_capacity(dim);
    for (i, r) in rows.iter().enumerate() {
        if basis.len() == dim {
            break;
        }
        basis_rows.push(r.clone());
        if rank_of_rows(&basis_rows, dim, tol) == basis_rows.len() {
            basis.push(i);
        } else {
            basis_rows.pop();
        }
    }
    if basis.len() < dim {
        return Err(ConeError::NotPointed { rank: basis.len(), dim });
    }

    let b = DenseMatrix::from_rows(&basis_rows)?;
    let inv = b
        .inverse(tol)
        .ok_or(ConeError::NotPointed { rank: basis.len() - 1, dim })?;
    let mut rays: Vec<DdRay<T>> = (0..dim)
        .map(|j| {
            let mut coords = inv.column(j);
            normalize(&mut coords);
            let mut zeros = FixedBitSet::with_capacity(m);
            for (k, &row) in basis.iter().enumerate() {
                if k != j {
                    zeros.insert(row);
                }
            }
            DdRay { coords, zeros }
        })
        .collect();

    let min_common = dim.saturating_sub(2);
    for (i, row) in rows.iter().enumerate() {
        if basis.contains(&i) {
            continue;
        }
        let values: Vec<T> = rays.iter().map(|r| dot(row, &r.coords)).collect();
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (k, v) in values.iter().enumerate() {
            if v.abs() <= thresholds[i] {
                rays[k].zeros.insert(i);
            } else if *v > T::zero() {
                pos.push(k);
            } else {
                neg.push(k);
            }
        }
        if neg.is_empty() {
            continue;
        }

        let mut created = Vec::new();
        for &p in &pos {
            for &q in &neg {
                let mut common = rays[p].zeros.clone();
                common.intersect_with(&rays[q].zeros);
                if common.count_ones(..) < min_common {
                    continue;
                }
                let adjacent = rays
                    .iter()
                    .enumerate()
                    .all(|(k, r)| k == p || k == q || !common.is_subset(&r.zeros));
                if !adjacent {
                    continue;
                }
                let vp = values[p].clone();
                let vq = values[q].clone();
                let mut coords: Vec<T> = rays[q]
                    .coords
                    .iter()
                    .zip(&rays[p].coords)
                    .map(|(xq, xp)| vp.clone() * xq.clone() - vq.clone() * xp.clone())
                    .collect();
                normalize(&mut coords);
                common.insert(i);
                created.push(DdRay { coords, zeros: common });
            }
        }

        let neg_set: Vec<bool> = {
            let mut v = vec![false; rays.len()];
            for &q in &neg {
                v[q] = true;
            }
            v
        };
        let mut next: Vec<DdRay<T>> = rays
            .into_iter()
            .enumerate()
            .filter(|(k, _)| !neg_set[*k])
            .map(|(_, r)| r)
            .collect();
        next.extend(created);
        rays = next;
    }
    Ok(rays)
}
