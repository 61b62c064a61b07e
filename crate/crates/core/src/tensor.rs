//! Multilinear operations on tensor-product spaces: Kronecker products,
//! partial traces, slot permutations, and the bosonic symmetrizer.
//!
//! Index convention (global for the whole library): slot-1-major. The index
//! of tensor slot 1 varies slowest, so for A on slot 1 and B on slot 2 the
//! joint row index is i1 * dim2 + i2, which is the ordinary Kronecker layout.

use itertools::Itertools;
use num_complex::Complex64 as C64;

use crate::error::{CoreError, Result};
use crate::matrix::{ComplexMatrix, DEFAULT_ELEMENT_CAP};

/// Kronecker product with an explicit element cap.
pub fn kron_with_cap(a: &ComplexMatrix, b: &ComplexMatrix, cap: usize) -> Result<ComplexMatrix> {
    let rows = a.rows().checked_mul(b.rows());
    let cols = a.cols().checked_mul(b.cols());
    let (rows, cols) = match (rows, cols) {
        (Some(r), Some(c)) if r.checked_mul(c).is_some_and(|n| n <= cap) => (r, c),
        _ => {
            return Err(CoreError::InstanceTooLarge {
                required: a.rows().saturating_mul(b.rows()).saturating_mul(
                    a.cols().saturating_mul(b.cols()),
                ),
                cap,
            })
        }
    };
    let mut out = ComplexMatrix::zeros(rows, cols);
    for i1 in 0..a.rows() {
        for j1 in 0..a.cols() {
            let aij = a[(i1, j1)];
            if aij.norm_sqr() == 0.0 {
                continue;
            }
            for i2 in 0..b.rows() {
                for j2 in 0..b.cols() {
                    out[(i1 * b.rows() + i2, j1 * b.cols() + j2)] = aij * b[(i2, j2)];
                }
            }
        }
    }
    Ok(out)
}

/// Kronecker (tensor) product A (x) B in the slot-1-major convention.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    kron_with_cap(a, b, DEFAULT_ELEMENT_CAP)
}

/// n-fold Kronecker power.
pub fn kron_power(a: &ComplexMatrix, n: usize) -> Result<ComplexMatrix> {
    assert!(n >= 1, "kron_power needs n >= 1");
    let mut out = a.clone();
    for _ in 1..n {
        out = kron(&out, a)?;
    }
    Ok(out)
}

/// Identity on a q-fold tensor factor of local dimension d.
pub fn identity_slots(d: usize, q: usize) -> ComplexMatrix {
    ComplexMatrix::identity(d.pow(q as u32))
}

/// The swap operator on C^d (x) C^d.
pub fn swap_matrix(d: usize) -> ComplexMatrix {
    let mut s = ComplexMatrix::zeros(d * d, d * d);
    for x in 0..d {
        for y in 0..d {
            s[(x * d + y, y * d + x)] = C64::new(1.0, 0.0);
        }
    }
    s
}

fn decompose(mut idx: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = idx % dims[k];
        idx /= dims[k];
    }
}

fn compose(digits: &[usize], dims: &[usize]) -> usize {
    digits.iter().zip(dims).fold(0, |acc, (&g, &d)| acc * d + g)
}

/// Matrix of the bosonic symmetrizer P_S on (C^d)^(x M): the average of all
/// M! coordinate-permutation operators.
pub fn symmetrize(m: usize, d: usize) -> Result<ComplexMatrix> {
    symmetrize_with_cap(m, d, DEFAULT_ELEMENT_CAP)
}

pub fn symmetrize_with_cap(m: usize, d: usize, cap: usize) -> Result<ComplexMatrix> {
    assert!(m >= 1 && d >= 1);
    let dim = d.checked_pow(m as u32).filter(|n| n.checked_mul(*n).is_some_and(|s| s <= cap));
    let Some(dim) = dim else {
        return Err(CoreError::InstanceTooLarge { required: usize::MAX, cap });
    };
    let dims = vec![d; m];
    let weight = {
        let mut f = 1.0f64;
        for k in 2..=m {
            f *= k as f64;
        }
        C64::new(1.0 / f, 0.0)
    };
    let mut out = ComplexMatrix::zeros(dim, dim);
    let mut digits = vec![0usize; m];
    let mut permuted = vec![0usize; m];
    for perm in (0..m).permutations(m) {
        for col in 0..dim {
            decompose(col, &dims, &mut digits);
            for (dst, &src) in perm.iter().enumerate() {
                permuted[dst] = digits[src];
            }
            let row = compose(&permuted, &dims);
            out[(row, col)] += weight;
        }
    }
    Ok(out)
}

/// Permutation-group average (twirl) of an m-slot operator:
/// (1/m!) sum_sigma U_sigma K U_sigma^dagger.
///
/// This is the operator-level symmetrization: it preserves Tr(K rho^(x m))
/// for every state rho, which the projector sandwich P K P does not once rho
/// is mixed.
pub fn twirl(k: &ComplexMatrix, m: usize, d: usize) -> ComplexMatrix {
    let dm = d.pow(m as u32);
    assert_eq!(k.rows(), dm);
    assert_eq!(k.cols(), dm);
    if m <= 1 {
        return k.clone();
    }
    let dims = vec![d; m];
    let mut fact = 1.0;
    for j in 2..=m {
        fact *= j as f64;
    }
    let weight = C64::new(1.0 / fact, 0.0);
    let mut out = ComplexMatrix::zeros(dm, dm);
    let mut digits = vec![0usize; m];
    let mut permuted = vec![0usize; m];
    let mut index_map = vec![0usize; dm];
    for perm in (0..m).permutations(m) {
        for (x, slot) in index_map.iter_mut().enumerate() {
            decompose(x, &dims, &mut digits);
            for (dst, &src) in perm.iter().enumerate() {
                permuted[dst] = digits[src];
            }
            *slot = compose(&permuted, &dims);
        }
        for r in 0..dm {
            let tr = index_map[r];
            for c in 0..dm {
                out[(tr, index_map[c])] += k[(r, c)] * weight;
            }
        }
    }
    out
}

/// Partial trace. `dims` are the slot dimensions (product must equal the
/// matrix dimension); `keep` lists the slots to retain, ascending.
pub fn partial_trace(m: &ComplexMatrix, dims: &[usize], keep: &[usize]) -> Result<ComplexMatrix> {
    let total: usize = dims.iter().product();
    if !m.is_square() || m.rows() != total {
        return Err(CoreError::Shape(format!(
            "partial_trace: dims product {} does not match matrix dimension {}x{}",
            total,
            m.rows(),
            m.cols()
        )));
    }
    if keep.windows(2).any(|w| w[0] >= w[1]) || keep.iter().any(|&k| k >= dims.len()) {
        return Err(CoreError::Shape("partial_trace: malformed keep set".into()));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep.contains(k)).collect();
    let keep_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let dk: usize = keep_dims.iter().product();
    let dt: usize = traced_dims.iter().product();

    let mut out = ComplexMatrix::zeros(dk, dk);
    let mut kr = vec![0usize; keep.len()];
    let mut kc = vec![0usize; keep.len()];
    let mut tt = vec![0usize; traced.len()];
    let mut full_r = vec![0usize; dims.len()];
    let mut full_c = vec![0usize; dims.len()];
    for r in 0..dk {
        decompose(r, &keep_dims, &mut kr);
        for c in 0..dk {
            decompose(c, &keep_dims, &mut kc);
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..dt {
                decompose(t, &traced_dims, &mut tt);
                for (pos, &slot) in keep.iter().enumerate() {
                    full_r[slot] = kr[pos];
                    full_c[slot] = kc[pos];
                }
                for (pos, &slot) in traced.iter().enumerate() {
                    full_r[slot] = tt[pos];
                    full_c[slot] = tt[pos];
                }
                acc += m[(compose(&full_r, dims), compose(&full_c, dims))];
            }
            out[(r, c)] = acc;
        }
    }
    Ok(out)
}

/// Reorder tensor slots. `src_of_dst[j]` names the old slot that lands in new
/// position j; `dims` are the OLD slot dimensions.
pub fn permute_slots(m: &ComplexMatrix, dims: &[usize], src_of_dst: &[usize]) -> ComplexMatrix {
    assert_eq!(dims.len(), src_of_dst.len());
    let total: usize = dims.iter().product();
    assert_eq!(m.rows(), total);
    assert_eq!(m.cols(), total);
    let new_dims: Vec<usize> = src_of_dst.iter().map(|&s| dims[s]).collect();
    let n = dims.len();
    let mut out = ComplexMatrix::zeros(total, total);
    let mut nr = vec![0usize; n];
    let mut nc = vec![0usize; n];
    let mut or = vec![0usize; n];
    let mut oc = vec![0usize; n];
    for r in 0..total {
        decompose(r, &new_dims, &mut nr);
        for (j, &s) in src_of_dst.iter().enumerate() {
            or[s] = nr[j];
        }
        let old_r = compose(&or, dims);
        for c in 0..total {
            decompose(c, &new_dims, &mut nc);
            for (j, &s) in src_of_dst.iter().enumerate() {
                oc[s] = nc[j];
            }
            out[(r, c)] = m[(old_r, compose(&oc, dims))];
        }
    }
    out
}

/// Embed a two-slot operator V onto slots (i, j), i < j, of an n-fold product.
pub fn embed_pair(v: &ComplexMatrix, i: usize, j: usize, n: usize, d: usize) -> Result<ComplexMatrix> {
    assert!(i < j && j < n, "embed_pair needs i < j < n");
    assert_eq!(v.rows(), d * d);
    let big = if n > 2 { kron(v, &identity_slots(d, n - 2))? } else { v.clone() };
    if n == 2 && i == 0 && j == 1 {
        return Ok(big);
    }
    // big currently has V on slots (0, 1); route old slots to their targets
    let mut src_of_dst = vec![usize::MAX; n];
    src_of_dst[i] = 0;
    src_of_dst[j] = 1;
    let mut next = 2;
    for slot in src_of_dst.iter_mut() {
        if *slot == usize::MAX {
            *slot = next;
            next += 1;
        }
    }
    Ok(permute_slots(&big, &vec![d; n], &src_of_dst))
}
