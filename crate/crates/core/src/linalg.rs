//! Dense complex eigenproblems and companion-matrix polynomial roots.

use ndarray::Array2;
use ndarray_linalg::Eig;
use num_complex::Complex64;

use crate::error::{CoreError, Result};

/// Full spectrum of a dense complex matrix, sorted by modulus descending.
///
/// The LAPACK solve is backward stable; we additionally verify the residual
/// ‖Mv − λv‖ ≤ 1e−8 ‖M‖ on the dominant pairs (the ones a resonance
/// pipeline can report) and fail loudly otherwise, dumping the offending
/// matrix next to the error message. Eigenvalues deep inside the defective
/// near-zero cluster of a truncated shift matrix are exempt: their forward
/// error is limited by the Jordan structure, not the solver.
pub fn eigenvalues_dense(m: &Array2<Complex64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(CoreError::InvalidParameter("matrix must be square".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let (vals, vecs) = m
        .eig()
        .map_err(|e| CoreError::Eigen(format!("LAPACK eig failed: {e}")))?;
    let scale = m.iter().map(|v| v.norm()).fold(0.0f64, f64::max).max(1e-300);
    let lambda_max = vals.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    let mut worst = 0.0f64;
    for (j, lambda) in vals.iter().enumerate() {
        if lambda.norm() < 0.01 * lambda_max {
            continue;
        }
        let v = vecs.column(j);
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        let mut rnorm = 0.0f64;
        for i in 0..n {
            let mut acc = Complex64::ZERO;
            for k in 0..n {
                acc += m[[i, k]] * v[k];
            }
            rnorm += (acc - lambda * v[i]).norm_sqr();
        }
        worst = worst.max(rnorm.sqrt() / vnorm);
    }
    if worst > 1e-8 * scale * n as f64 {
        let path = std::env::temp_dir().join("ruelle_eig_failure.json");
        let dump = serde_json::json!({
            "rows": n,
            "re": m.iter().map(|v| v.re).collect::<Vec<_>>(),
            "im": m.iter().map(|v| v.im).collect::<Vec<_>>(),
        });
        let _ = std::fs::write(&path, dump.to_string());
        return Err(CoreError::Eigen(format!(
            "eigenpair residual {worst:.3e} exceeds tolerance; matrix dumped to {}",
            path.display()
        )));
    }
    let mut out: Vec<Complex64> = vals.iter().copied().collect();
    out.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    Ok(out)
}

/// Roots of Σ_m c_m z^m via the companion matrix of the monic normalization.
/// Trailing coefficients below `trim_tol` (relative to the largest) are
/// dropped first.
pub fn polynomial_roots(coeffs: &[Complex64], trim_tol: f64) -> Result<Vec<Complex64>> {
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(Vec::new());
    }
    let mut deg = coeffs.len() - 1;
    while deg > 0 && coeffs[deg].norm() < trim_tol * scale {
        deg -= 1;
    }
    if deg == 0 {
        return Ok(Vec::new());
    }
    let lead = coeffs[deg];
    let mut comp = Array2::<Complex64>::zeros((deg, deg));
    for i in 1..deg {
        comp[[i, i - 1]] = Complex64::new(1.0, 0.0);
    }
    for i in 0..deg {
        comp[[i, deg - 1]] = -coeffs[i] / lead;
    }
    eigenvalues_dense(&comp)
}
