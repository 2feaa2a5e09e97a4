//! Minimal bindings to the system LAPACK (OpenBLAS) for the dense kernels on
//! the hot path: solves of `A x = 1` and symmetric eigenvalues. The cutoff
//! bisections factor a few hundred matrices of a few hundred rows per
//! expedition, which dominates run time without an optimized backend.
//!
//! BLAS threading is pinned to a single thread; parallelism belongs to the
//! engine's evaluation batches.

use std::os::raw::{c_char, c_int};
use std::sync::Once;

#[link(name = "openblas")]
extern "C" {
    fn dpotrf_(
        uplo: *const c_char,
        n: *const c_int,
        a: *mut f64,
        lda: *const c_int,
        info: *mut c_int,
    );
    fn dpotrs_(
        uplo: *const c_char,
        n: *const c_int,
        nrhs: *const c_int,
        a: *const f64,
        lda: *const c_int,
        b: *mut f64,
        ldb: *const c_int,
        info: *mut c_int,
    );
    fn dgesv_(
        n: *const c_int,
        nrhs: *const c_int,
        a: *mut f64,
        lda: *const c_int,
        ipiv: *mut c_int,
        b: *mut f64,
        ldb: *const c_int,
        info: *mut c_int,
    );
    fn dsyev_(
        jobz: *const c_char,
        uplo: *const c_char,
        n: *const c_int,
        a: *mut f64,
        lda: *const c_int,
        w: *mut f64,
        work: *mut f64,
        lwork: *const c_int,
        info: *mut c_int,
    );
    fn openblas_set_num_threads(n: c_int);
}

const LOWER: c_char = b'L' as c_char;
const EIGENVALUES_ONLY: c_char = b'N' as c_char;

fn ensure_single_threaded() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| unsafe { openblas_set_num_threads(1) });
}

/// Solves `A x = 1` in place for symmetric positive definite `A` in
/// column-major order; only the lower triangle is read, and it is destroyed.
/// `None` when the Cholesky factorization fails.
pub(crate) fn cholesky_solve_ones_in_place(a: &mut [f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    if n == 0 {
        return Some(Vec::new());
    }
    ensure_single_threaded();
    let dim = n as c_int;
    let nrhs: c_int = 1;
    let mut info: c_int = 0;
    unsafe { dpotrf_(&LOWER, &dim, a.as_mut_ptr(), &dim, &mut info) };
    if info != 0 {
        return None;
    }
    let mut b = vec![1.0; n];
    unsafe { dpotrs_(&LOWER, &dim, &nrhs, a.as_ptr(), &dim, b.as_mut_ptr(), &dim, &mut info) };
    (info == 0).then_some(b)
}

/// Owning convenience wrapper around [`cholesky_solve_ones_in_place`].
pub(crate) fn cholesky_solve_ones(mut a: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    cholesky_solve_ones_in_place(&mut a, n)
}

/// Solves `A x = 1` in place by LU with partial pivoting (full matrix read,
/// destroyed); `None` on exact singularity.
pub(crate) fn lu_solve_ones_in_place(a: &mut [f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    if n == 0 {
        return Some(Vec::new());
    }
    ensure_single_threaded();
    let dim = n as c_int;
    let nrhs: c_int = 1;
    let mut pivots = vec![0 as c_int; n];
    let mut b = vec![1.0; n];
    let mut info: c_int = 0;
    unsafe {
        dgesv_(
            &dim,
            &nrhs,
            a.as_mut_ptr(),
            &dim,
            pivots.as_mut_ptr(),
            b.as_mut_ptr(),
            &dim,
            &mut info,
        )
    };
    (info == 0).then_some(b)
}

/// Owning convenience wrapper around [`lu_solve_ones_in_place`].
pub(crate) fn lu_solve_ones(mut a: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    lu_solve_ones_in_place(&mut a, n)
}

/// Eigenvalues (ascending) of a symmetric matrix in column-major order; only
/// the lower triangle is read, and the buffer is destroyed.
pub(crate) fn symmetric_eigenvalues_in_place(a: &mut [f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    if n == 0 {
        return Some(Vec::new());
    }
    ensure_single_threaded();
    let dim = n as c_int;
    let mut values = vec![0.0; n];
    let mut info: c_int = 0;
    // Workspace query, then the real call.
    let mut work_size = 0.0f64;
    let query: c_int = -1;
    unsafe {
        dsyev_(
            &EIGENVALUES_ONLY,
            &LOWER,
            &dim,
            a.as_mut_ptr(),
            &dim,
            values.as_mut_ptr(),
            &mut work_size,
            &query,
            &mut info,
        )
    };
    if info != 0 {
        return None;
    }
    let lwork = (work_size as usize).max(1);
    let mut work = vec![0.0; lwork];
    let lwork_i = lwork as c_int;
    unsafe {
        dsyev_(
            &EIGENVALUES_ONLY,
            &LOWER,
            &dim,
            a.as_mut_ptr(),
            &dim,
            values.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork_i,
            &mut info,
        )
    };
    (info == 0).then_some(values)
}
