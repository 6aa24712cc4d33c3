//! Dynamical Fredholm determinants: periodic-orbit enumeration, trace sums,
//! the exponential coefficient recursion, reliable zero extraction, and the
//! spectral-bound quantities ρ^{p,q}(T,g) and R^{p,q,t}(T,g).

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    birkhoff_weight, hyperbolicity_exponents, invariant_directions, mat_det, mat_mul, mat_vec,
    norm2, wrap_half, MapModel, Point, Weight,
};
use crate::error::{CoreError, Result};
use crate::linalg;
use crate::transfer::{Resonance, ResonanceReport};

/// One periodic point with its m-step Jacobian and Birkhoff weight.
#[derive(Debug, Clone)]
pub struct OrbitPoint {
    pub x: Point,
    pub jacobian: [[f64; 2]; 2],
    pub weight: Complex64,
}

/// All fixed points of T^m with metadata.
#[derive(Debug, Clone)]
pub struct PeriodicOrbitData {
    pub period: u32,
    pub points: Vec<OrbitPoint>,
    pub method: &'static str,
}

fn int_mat_mul(a: [[i64; 2]; 2], b: [[i64; 2]; 2]) -> [[i64; 2]; 2] {
    let mut out = [[0i64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn int_mat_pow(a: [[i64; 2]; 2], m: u32) -> [[i64; 2]; 2] {
    let mut out = [[1, 0], [0, 1]];
    for _ in 0..m {
        out = int_mat_mul(out, a);
    }
    out
}

/// |det(A^m − I)|, the exact periodic-point count of a hyperbolic
/// automorphism.
pub fn toral_point_count(a: [[i64; 2]; 2], m: u32) -> i64 {
    let am = int_mat_pow(a, m);
    let b = [[am[0][0] - 1, am[0][1]], [am[1][0], am[1][1] - 1]];
    (b[0][0] * b[1][1] - b[0][1] * b[1][0]).abs()
}

/// Enumerate the fixed points of T^m.
///
/// Expanding circle maps: one contraction solve per itinerary, with the two
/// itineraries landing on 0 ≡ 1 deduplicated (count k^m − 1). Linear toral
/// maps: exact integer lattice enumeration of (A^m − I)x ∈ ℤ², count
/// |det(A^m − I)|. Perturbed toral maps: Newton continuation from the linear
/// solutions along an 8-step amplitude homotopy.
pub fn periodic_points(map: &MapModel, g: &Weight, m: u32) -> Result<PeriodicOrbitData> {
    if m == 0 {
        return Err(CoreError::InvalidParameter("need period m >= 1".into()));
    }
    match map {
        MapModel::ExpandingCircle { .. } => {
            if m > 20 {
                return Err(CoreError::InvalidParameter(
                    "expanding periodic points limited to m <= 20".into(),
                ));
            }
            expanding_periodic_points(map, g, m)
        }
        MapModel::LinearToral { matrix, .. } => {
            if m > 14 {
                return Err(CoreError::InvalidParameter(
                    "toral periodic points limited to m <= 14".into(),
                ));
            }
            linear_periodic_points(map, *matrix, g, m)
        }
        MapModel::PerturbedToral { matrix, delta, .. } => {
            if m > 14 {
                return Err(CoreError::InvalidParameter(
                    "toral periodic points limited to m <= 14".into(),
                ));
            }
            perturbed_periodic_points(map, *matrix, *delta, g, m)
        }
    }
}

fn expanding_periodic_points(map: &MapModel, g: &Weight, m: u32) -> Result<PeriodicOrbitData> {
    let degree = map.degree().unwrap() as u64;
    let count = degree.pow(m);
    let mut found: Vec<f64> = Vec::with_capacity(count as usize);
    for code in 0..count {
        let mut digits = Vec::with_capacity(m as usize);
        let mut c = code;
        for _ in 0..m {
            digits.push((c % degree) as u8);
            c /= degree;
        }
        // fixed point of the composed inverse branch for this itinerary
        let mut y = 0.5f64;
        let mut ok = false;
        for _ in 0..400 {
            let mut z = y;
            for &j in digits.iter().rev() {
                z = branch_inverse(map, z, j)?;
            }
            if (z - y).abs() < 1e-14 {
                y = z;
                ok = true;
                break;
            }
            y = z;
        }
        if !ok {
            return Err(CoreError::NonConvergence(format!(
                "periodic orbit for itinerary {digits:?} did not converge"
            )));
        }
        // Newton polish on T^m(y) − y mod 1
        for _ in 0..3 {
            let mut d = 1.0;
            let mut p = y;
            for _ in 0..m {
                d *= map.deriv1(p);
                p = map.apply([p, 0.0])[0];
            }
            let r = wrap_half(p - y);
            if d != 1.0 {
                y = (y - r / (d - 1.0)).rem_euclid(1.0);
            }
        }
        found.push(y.rem_euclid(1.0));
    }
    // dedup modulo 1 (the all-0 and all-(k−1) itineraries both land on 0)
    found.sort_by(f64::total_cmp);
    let mut points: Vec<f64> = Vec::new();
    for y in found {
        let dup = points
            .iter()
            .any(|&z| wrap_half(y - z).abs() < 1e-9);
        if !dup {
            points.push(y);
        }
    }
    let expected = count as i64 - 1;
    if points.len() as i64 != expected {
        return Err(CoreError::Numerical(format!(
            "expanding periodic point count {} != k^m − 1 = {expected}",
            points.len()
        )));
    }
    let orbit_points = points
        .into_iter()
        .map(|y| {
            let mut d = 1.0;
            let mut p = y;
            for _ in 0..m {
                d *= map.deriv1(p);
                p = map.apply([p, 0.0])[0];
            }
            OrbitPoint {
                x: [y, 0.0],
                jacobian: [[d, 0.0], [0.0, 1.0]],
                weight: birkhoff_weight(map, g, [y, 0.0], m),
            }
        })
        .collect();
    Ok(PeriodicOrbitData {
        period: m,
        points: orbit_points,
        method: "itinerary-contraction",
    })
}

fn branch_inverse(map: &MapModel, x: f64, j: u8) -> Result<f64> {
    let (degree, eps) = match map {
        MapModel::ExpandingCircle { degree, eps, .. } => (*degree as f64, *eps),
        _ => unreachable!(),
    };
    let target = x + j as f64;
    let tau = 2.0 * std::f64::consts::PI;
    let mut y = target / degree;
    for _ in 0..200 {
        let next = (target - eps * (tau * y).sin()) / degree;
        if (next - y).abs() < 1e-15 {
            return Ok(next);
        }
        y = next;
    }
    Err(CoreError::NonConvergence(format!(
        "branch inverse {j} at {x}"
    )))
}

fn linear_periodic_points(
    map: &MapModel,
    a: [[i64; 2]; 2],
    g: &Weight,
    m: u32,
) -> Result<PeriodicOrbitData> {
    let am = int_mat_pow(a, m);
    let b = [[am[0][0] - 1, am[0][1]], [am[1][0], am[1][1] - 1]];
    let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
    if det == 0 {
        return Err(CoreError::Numerical(
            "A^m − I is singular; map not hyperbolic".into(),
        ));
    }
    let dabs = det.abs();
    // adj(B)/det = B^{-1}; x = adj(B)·w / det runs over all torus solutions
    let adj = [[b[1][1], -b[0][1]], [-b[1][0], b[0][0]]];
    let sign = det.signum();
    let mut seen = std::collections::HashSet::with_capacity(dabs as usize);
    let mut pts: Vec<(i64, i64)> = Vec::with_capacity(dabs as usize);
    for w0 in 0..dabs {
        for w1 in 0..dabs {
            let n0 = (sign * (adj[0][0] * w0 + adj[0][1] * w1)).rem_euclid(dabs);
            let n1 = (sign * (adj[1][0] * w0 + adj[1][1] * w1)).rem_euclid(dabs);
            if seen.insert((n0, n1)) {
                pts.push((n0, n1));
            }
        }
    }
    if pts.len() as i64 != dabs {
        return Err(CoreError::Numerical(format!(
            "lattice enumeration found {} points, expected {dabs}",
            pts.len()
        )));
    }
    pts.sort_unstable();
    let jac = [
        [am[0][0] as f64, am[0][1] as f64],
        [am[1][0] as f64, am[1][1] as f64],
    ];
    let points = pts
        .into_iter()
        .map(|(n0, n1)| {
            let x = [n0 as f64 / dabs as f64, n1 as f64 / dabs as f64];
            OrbitPoint {
                x,
                jacobian: jac,
                weight: birkhoff_weight(map, g, x, m),
            }
        })
        .collect();
    Ok(PeriodicOrbitData {
        period: m,
        points,
        method: "integer-lattice",
    })
}

fn perturbed_periodic_points(
    map: &MapModel,
    a: [[i64; 2]; 2],
    delta: f64,
    g: &Weight,
    m: u32,
) -> Result<PeriodicOrbitData> {
    let base = MapModel::linear_toral(a)?;
    let linear = linear_periodic_points(&base, a, &Weight::ONE, m)?;
    let am = int_mat_pow(a, m);
    let steps = 8;
    let points: Vec<OrbitPoint> = linear
        .points
        .par_iter()
        .map(|seed| -> Result<OrbitPoint> {
            // integer offset of the lifted fixed-point equation
            let v0 = [
                ((am[0][0] - 1) as f64 * seed.x[0] + am[0][1] as f64 * seed.x[1]).round(),
                (am[1][0] as f64 * seed.x[0] + (am[1][1] - 1) as f64 * seed.x[1]).round(),
            ];
            let mut x = seed.x;
            for step in 1..=steps {
                let d = delta * step as f64 / steps as f64;
                let stage = MapModel::PerturbedToral {
                    matrix: a,
                    delta: d,
                    smoothness: f64::INFINITY,
                };
                let mut ok = false;
                for _ in 0..80 {
                    // lifted m-fold image and its Jacobian
                    let mut lift = x;
                    let mut jac = [[1.0, 0.0], [0.0, 1.0]];
                    for _ in 0..m {
                        jac = mat_mul(&stage.jacobian([lift[0].rem_euclid(1.0), lift[1].rem_euclid(1.0)]), &jac);
                        lift = stage.lift2(lift);
                    }
                    let r = [lift[0] - x[0] - v0[0], lift[1] - x[1] - v0[1]];
                    if r[0].abs().max(r[1].abs()) < 1e-12 {
                        ok = true;
                        break;
                    }
                    let j = [
                        [jac[0][0] - 1.0, jac[0][1]],
                        [jac[1][0], jac[1][1] - 1.0],
                    ];
                    let step_v = mat_vec(&crate::dynamics::mat_inv(&j)?, r);
                    x = [x[0] - step_v[0], x[1] - step_v[1]];
                }
                if !ok {
                    return Err(CoreError::NonConvergence(format!(
                        "orbit continuation from seed ({}, {}) failed at homotopy step {step}",
                        seed.x[0], seed.x[1]
                    )));
                }
            }
            let xw = [x[0].rem_euclid(1.0), x[1].rem_euclid(1.0)];
            Ok(OrbitPoint {
                x: xw,
                jacobian: map.derivative_along(xw, m),
                weight: birkhoff_weight(map, g, xw, m),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PeriodicOrbitData {
        period: m,
        points,
        method: "newton-continuation",
    })
}

fn kahan_add(sum: &mut Complex64, comp: &mut Complex64, term: Complex64) {
    let y = term - *comp;
    let t = *sum + y;
    *comp = (t - *sum) - y;
    *sum = t;
}

/// Flat trace t_m of the transfer operator.
///
/// Hyperbolic kinds use Σ g^{(m)}(x)/|det(1 − DT^m(x))|; the expanding toy
/// operator sums over inverse branches, so the contracting object is the
/// inverse branch and the consistent denominator is |det(1 − (DT^m)^{−1})|.
/// Linear maps with constant weight take the exact integer route.
pub fn trace_sum(map: &MapModel, g: &Weight, m: u32) -> Result<Complex64> {
    if let (MapModel::LinearToral { matrix, .. }, Weight::Const { re, im }) = (map, g) {
        // count/|det(I − A^m)| = 1 exactly
        let count = toral_point_count(*matrix, m);
        if count == 0 {
            return Err(CoreError::Numerical("parabolic point in trace sum".into()));
        }
        return Ok(Complex64::new(*re, *im).powu(m));
    }
    let orbits = periodic_points(map, g, m)?;
    let mut sum = Complex64::ZERO;
    let mut comp = Complex64::ZERO;
    for pt in &orbits.points {
        let denom = if map.is_expanding() {
            let d = pt.jacobian[0][0];
            (1.0 - 1.0 / d).abs()
        } else {
            let j = pt.jacobian;
            mat_det(&[[1.0 - j[0][0], -j[0][1]], [-j[1][0], 1.0 - j[1][1]]]).abs()
        };
        if denom < 1e-12 {
            return Err(CoreError::Numerical(format!(
                "|det(1 − DT^m)| = {denom:.2e} at x = ({}, {}): parabolic point",
                pt.x[0], pt.x[1]
            )));
        }
        kahan_add(&mut sum, &mut comp, pt.weight / denom);
    }
    Ok(sum)
}

/// a_0 = 1, m a_m = −Σ_{j=1}^m t_j a_{m−j}: the formal exponential of
/// −Σ t_m z^m / m.
pub fn determinant_coefficients(traces: &[Complex64]) -> Vec<Complex64> {
    let m_max = traces.len();
    let mut a = vec![Complex64::ZERO; m_max + 1];
    a[0] = Complex64::new(1.0, 0.0);
    for m in 1..=m_max {
        let mut acc = Complex64::ZERO;
        for j in 1..=m {
            acc += traces[j - 1] * a[m - j];
        }
        a[m] = -acc / m as f64;
    }
    a
}

/// Trace sums, Taylor coefficients, and a reliability radius for d_L(z).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeterminantSeries {
    pub traces_re: Vec<f64>,
    pub traces_im: Vec<f64>,
    pub coeffs_re: Vec<f64>,
    pub coeffs_im: Vec<f64>,
    pub reliability_radius: f64,
}

/// Cap applied when the coefficients terminate and no decay rate is visible.
pub const RADIUS_CAP: f64 = 1e3;

impl DeterminantSeries {
    pub fn from_traces(traces: &[Complex64]) -> Self {
        let coeffs = determinant_coefficients(traces);
        let radius = reliability_radius(&coeffs);
        DeterminantSeries {
            traces_re: traces.iter().map(|t| t.re).collect(),
            traces_im: traces.iter().map(|t| t.im).collect(),
            coeffs_re: coeffs.iter().map(|c| c.re).collect(),
            coeffs_im: coeffs.iter().map(|c| c.im).collect(),
            reliability_radius: radius,
        }
    }

    pub fn traces(&self) -> Vec<Complex64> {
        self.traces_re
            .iter()
            .zip(&self.traces_im)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect()
    }

    pub fn coefficients(&self) -> Vec<Complex64> {
        self.coeffs_re
            .iter()
            .zip(&self.coeffs_im)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect()
    }

    pub fn order(&self) -> usize {
        self.coeffs_re.len() - 1
    }

    /// Evaluate the truncated polynomial.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::ZERO;
        for (&re, &im) in self.coeffs_re.iter().zip(&self.coeffs_im).rev() {
            acc = acc * z + Complex64::new(re, im);
        }
        acc
    }
}

/// Largest |z| at which the geometric tail estimated from the decay of the
/// final third of the coefficients stays below 1e−6.
fn reliability_radius(coeffs: &[Complex64]) -> f64 {
    let m = coeffs.len() - 1;
    if m < 3 {
        return RADIUS_CAP;
    }
    let start = (2 * m) / 3;
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut rate: f64 = 0.0;
    let mut any = false;
    for j in start..=m {
        let a = coeffs[j].norm();
        if a > 1e-14 * scale.max(1.0) {
            rate = rate.max(a.powf(1.0 / j as f64));
            any = true;
        }
    }
    if !any || rate == 0.0 {
        return RADIUS_CAP;
    }
    // tail Σ_{j>m} (rate·ρ)^j < 1e−6  ⇔  (rate·ρ)^{m+1}/(1−rate·ρ) < 1e−6
    let mut lo = 0.0;
    let mut hi = 0.999 / rate;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let x = rate * mid;
        let tail = x.powi(m as i32 + 1) / (1.0 - x);
        if tail < 1e-6 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo.min(RADIUS_CAP)
}

/// A located zero of the truncated determinant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeterminantZero {
    pub z_re: f64,
    pub z_im: f64,
    pub order: usize,
    /// Distance to the matching root of the order-(M−2) truncation.
    pub truncation_agreement: f64,
}

impl DeterminantZero {
    pub fn z(&self) -> Complex64 {
        Complex64::new(self.z_re, self.z_im)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZeroReport {
    pub zeros: Vec<DeterminantZero>,
    pub diagnostic: Option<String>,
}

fn newton_polish(coeffs: &[Complex64], mut z: Complex64) -> Complex64 {
    for _ in 0..12 {
        let mut p = Complex64::ZERO;
        let mut dp = Complex64::ZERO;
        for c in coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        if dp.norm() < 1e-300 {
            break;
        }
        let step = p / dp;
        z -= step;
        if step.norm() < 1e-15 * z.norm().max(1.0) {
            break;
        }
    }
    z
}

/// Zeros of the truncated determinant inside the reliability radius, found
/// from the companion spectrum, Newton-polished, and cross-checked between
/// truncation orders M and M−2.
pub fn determinant_zeros(series: &DeterminantSeries) -> Result<ZeroReport> {
    if series.reliability_radius <= 0.0 {
        return Err(CoreError::InvalidParameter(
            "reliability radius must be positive".into(),
        ));
    }
    let coeffs = series.coefficients();
    let m = coeffs.len() - 1;
    if m < 3 {
        return Err(CoreError::InvalidParameter(
            "need at least 3 coefficients for cross-checked zeros".into(),
        ));
    }
    let full: Vec<Complex64> = polynomial_roots_polished(&coeffs)?;
    let reduced: Vec<Complex64> = polynomial_roots_polished(&coeffs[..coeffs.len() - 2])?;

    let mut accepted: Vec<(Complex64, f64)> = Vec::new();
    for &z in &full {
        if z.norm() >= series.reliability_radius {
            continue;
        }
        let agree = reduced
            .iter()
            .map(|w| (w - z).norm())
            .fold(f64::INFINITY, f64::min);
        if agree < 1e-8 {
            accepted.push((z, agree));
        }
    }
    if accepted.is_empty() {
        return Ok(ZeroReport {
            zeros: Vec::new(),
            diagnostic: Some(format!(
                "no zeros with truncation agreement < 1e-8 inside radius {:.3e} \
                 ({} candidate roots)",
                series.reliability_radius,
                full.len()
            )),
        });
    }
    // multiplicity = cluster size
    accepted.sort_by(|a, b| a.0.norm().total_cmp(&b.0.norm()));
    let mut zeros: Vec<DeterminantZero> = Vec::new();
    let mut used = vec![false; accepted.len()];
    for i in 0..accepted.len() {
        if used[i] {
            continue;
        }
        let mut cluster = vec![i];
        used[i] = true;
        for j in (i + 1)..accepted.len() {
            if !used[j] && (accepted[j].0 - accepted[i].0).norm() < 1e-7 {
                used[j] = true;
                cluster.push(j);
            }
        }
        let center = cluster
            .iter()
            .fold(Complex64::ZERO, |acc, &j| acc + accepted[j].0)
            / cluster.len() as f64;
        let agreement = cluster
            .iter()
            .map(|&j| accepted[j].1)
            .fold(0.0f64, f64::max);
        zeros.push(DeterminantZero {
            z_re: center.re,
            z_im: center.im,
            order: cluster.len(),
            truncation_agreement: agreement,
        });
    }
    Ok(ZeroReport {
        zeros,
        diagnostic: None,
    })
}

fn polynomial_roots_polished(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let raw = linalg::polynomial_roots(coeffs, 1e-13)?;
    Ok(raw.into_iter().map(|z| newton_polish(coeffs, z)).collect())
}

/// Quadrature settings for the bound integrals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundQuadrature {
    pub points_per_axis: usize,
    /// Monte Carlo sample count; tensor trapezoid when absent.
    pub monte_carlo: Option<usize>,
    pub seed: u64,
    /// Finite-time length for the invariant-direction approximation.
    pub n_pre: u32,
}

impl Default for BoundQuadrature {
    fn default() -> Self {
        BoundQuadrature {
            points_per_axis: 256,
            monte_carlo: None,
            seed: 1,
            n_pre: 30,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RhoEstimate {
    pub value: f64,
    pub std_error: Option<f64>,
}

/// ρ^{p,q}(T,g,m) = ∫ |g^{(m)}(x)| λ^{(p,q,m)}(x) dx over the torus.
pub fn rho_pqm(
    map: &MapModel,
    g: &Weight,
    p: f64,
    q: f64,
    m: u32,
    quad: &BoundQuadrature,
) -> Result<RhoEstimate> {
    let integrand = |x: Point| -> Result<f64> {
        let w = birkhoff_weight(map, g, x, m).norm();
        let (lam, nu) = hyperbolicity_exponents(map, x, m, quad.n_pre)?;
        Ok(w * lam.powf(p).max(nu.powf(q)))
    };
    match quad.monte_carlo {
        None => {
            let n = quad.points_per_axis;
            let pts: Vec<Point> = match map.dim() {
                1 => (0..n).map(|i| [i as f64 / n as f64, 0.0]).collect(),
                _ => {
                    let mut v = Vec::with_capacity(n * n);
                    for i in 0..n {
                        for j in 0..n {
                            v.push([i as f64 / n as f64, j as f64 / n as f64]);
                        }
                    }
                    v
                }
            };
            let vals: Vec<f64> = pts
                .par_iter()
                .map(|&x| integrand(x))
                .collect::<Result<Vec<_>>>()?;
            let mut sum = 0.0;
            let mut comp = 0.0;
            for v in vals {
                let y = v - comp;
                let t = sum + y;
                comp = (t - sum) - y;
                sum = t;
            }
            Ok(RhoEstimate {
                value: sum / (n as f64).powi(map.dim() as i32),
                std_error: None,
            })
        }
        Some(samples) => {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(quad.seed);
            let pts: Vec<Point> = (0..samples)
                .map(|_| [rng.gen::<f64>(), rng.gen::<f64>()])
                .collect();
            let vals: Vec<f64> = pts
                .par_iter()
                .map(|&x| integrand(if map.dim() == 1 { [x[0], 0.0] } else { x }))
                .collect::<Result<Vec<_>>>()?;
            let mean = vals.iter().sum::<f64>() / samples as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (samples as f64 - 1.0);
            Ok(RhoEstimate {
                value: mean,
                std_error: Some((var / samples as f64).sqrt()),
            })
        }
    }
}

/// Last m-th root of the sequence plus the largest successive difference over
/// its final half (the Cauchy convergence diagnostic).
pub fn rho_pq_limit(ms: &[u32], rho_values: &[f64]) -> Result<(f64, f64)> {
    if ms.len() < 4 || ms.len() != rho_values.len() {
        return Err(CoreError::InvalidParameter(
            "need at least 4 (m, ρ_m) pairs".into(),
        ));
    }
    let roots: Vec<f64> = ms
        .iter()
        .zip(rho_values)
        .map(|(&m, &r)| r.powf(1.0 / m as f64))
        .collect();
    let half = roots.len() / 2;
    let mut cauchy: f64 = 0.0;
    for w in roots[half.saturating_sub(1)..].windows(2) {
        cauchy = cauchy.max((w[1] - w[0]).abs());
    }
    Ok((*roots.last().unwrap(), cauchy))
}

/// R^{p,q,t}(T,g) at finite m: the m-th root of the grid supremum of
/// |det DT^m|^{1/t} |g^{(m)}| λ^{(p,q,m)}; t = ∞ drops the determinant
/// factor.
pub fn r_pqt(
    map: &MapModel,
    g: &Weight,
    p: f64,
    q: f64,
    t: f64,
    m: u32,
    quad: &BoundQuadrature,
) -> Result<f64> {
    if t <= 1.0 {
        return Err(CoreError::InvalidParameter(
            "R^{p,q,t} needs t in (1, ∞]".into(),
        ));
    }
    let n = quad.points_per_axis;
    let pts: Vec<Point> = match map.dim() {
        1 => (0..n).map(|i| [i as f64 / n as f64, 0.0]).collect(),
        _ => {
            let mut v = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    v.push([i as f64 / n as f64, j as f64 / n as f64]);
                }
            }
            v
        }
    };
    let sup = pts
        .par_iter()
        .map(|&x| -> Result<f64> {
            let w = birkhoff_weight(map, g, x, m).norm();
            let (lam, nu) = hyperbolicity_exponents(map, x, m, quad.n_pre)?;
            let det_factor = if t.is_infinite() {
                1.0
            } else {
                let jac = map.derivative_along(x, m);
                mat_det(&jac).abs().powf(1.0 / t)
            };
            Ok(det_factor * w * lam.powf(p).max(nu.powf(q)))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    Ok(sup.powf(1.0 / m as f64))
}

/// One matched pair in the zero ↔ resonance comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchedPair {
    pub reciprocal_zero_re: f64,
    pub reciprocal_zero_im: f64,
    pub resonance_re: f64,
    pub resonance_im: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchTable {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_zeros: Vec<(f64, f64)>,
    pub unmatched_resonances: Vec<(f64, f64)>,
}

/// Bipartite matching between reciprocals of determinant zeros inside the
/// common reliability region and accepted resonances.
pub fn compare_zeros_eigenvalues(
    report: &ResonanceReport,
    zeros: &[DeterminantZero],
    radius: f64,
) -> MatchTable {
    let recips: Vec<Complex64> = zeros
        .iter()
        .filter(|z| z.z().norm() < radius && z.z().norm() > 0.0)
        .map(|z| Complex64::new(1.0, 0.0) / z.z())
        .collect();
    let resonances: Vec<&Resonance> = report
        .accepted
        .iter()
        .filter(|r| r.value().norm() > 1.0 / radius)
        .collect();

    let mut used = vec![false; resonances.len()];
    let mut pairs = Vec::new();
    let mut unmatched_zeros = Vec::new();
    for &rz in &recips {
        let mut best: Option<(usize, f64)> = None;
        for (j, r) in resonances.iter().enumerate() {
            if used[j] {
                continue;
            }
            let d = (r.value() - rz).norm();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        match best {
            Some((j, d)) => {
                used[j] = true;
                pairs.push(MatchedPair {
                    reciprocal_zero_re: rz.re,
                    reciprocal_zero_im: rz.im,
                    resonance_re: resonances[j].value_re,
                    resonance_im: resonances[j].value_im,
                    distance: d,
                });
            }
            None => unmatched_zeros.push((rz.re, rz.im)),
        }
    }
    let unmatched_resonances = resonances
        .iter()
        .enumerate()
        .filter(|(j, _)| !used[*j])
        .map(|(_, r)| (r.value_re, r.value_im))
        .collect();
    MatchTable {
        pairs,
        unmatched_zeros,
        unmatched_resonances,
    }
}

/// Convenience: v_s/v_u sanity for perturbed maps (used by diagnostics).
pub fn direction_defect(map: &MapModel, x: Point, n_pre: u32) -> Result<f64> {
    let (v_s, _) = invariant_directions(map, x, n_pre)?;
    let img = mat_vec(&map.jacobian(x), v_s);
    Ok(norm2(img))
}
