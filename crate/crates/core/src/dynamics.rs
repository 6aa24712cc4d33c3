//! Dynamical systems on the circle and the 2-torus: closed-form evaluation,
//! inverse branches, Birkhoff weight products, local hyperbolicity exponents,
//! cone-hyperbolicity checks, and the weakest contraction/expansion norms of
//! the transposed Jacobian.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cones::{Cone, ConeSystem};
use crate::error::{CoreError, Result};

const TAU: f64 = 2.0 * std::f64::consts::PI;

/// Point on the torus; one-dimensional maps use the first coordinate.
pub type Point = [f64; 2];

/// 2×2 real matrix in row-major layout.
pub type Mat2 = [[f64; 2]; 2];

pub fn mat_vec(m: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn mat_det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn mat_inv(m: &Mat2) -> Result<Mat2> {
    let d = mat_det(m);
    if d.abs() < 1e-14 {
        return Err(CoreError::Numerical("singular 2x2 matrix".into()));
    }
    Ok([
        [m[1][1] / d, -m[0][1] / d],
        [-m[1][0] / d, m[0][0] / d],
    ])
}

pub fn mat_transpose(m: &Mat2) -> Mat2 {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

pub fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn frac(x: f64) -> f64 {
    x.rem_euclid(1.0)
}

/// Wrap a displacement to the representative in (−1/2, 1/2].
pub fn wrap_half(x: f64) -> f64 {
    let mut r = x.rem_euclid(1.0);
    if r > 0.5 {
        r -= 1.0;
    }
    r
}

/// Eigendata of an integer hyperbolic matrix.
#[derive(Debug, Clone, Copy)]
pub struct LinearSplitting {
    /// Stable eigenvalue (|μ_s| < 1) and its unit eigenvector.
    pub mu_s: f64,
    pub v_s: [f64; 2],
    /// Unstable eigenvalue (|μ_u| > 1) and its unit eigenvector.
    pub mu_u: f64,
    pub v_u: [f64; 2],
    /// Condition number of the eigenbasis, the effective constant of the
    /// hyperbolicity inequalities.
    pub basis_condition: f64,
}

fn integer_eigendata(a: [[i64; 2]; 2]) -> Result<LinearSplitting> {
    let tr = (a[0][0] + a[1][1]) as f64;
    let det = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) as f64;
    let disc = tr * tr - 4.0 * det;
    if disc <= 0.0 {
        return Err(CoreError::MapValidation(
            "matrix has no real hyperbolic splitting".into(),
        ));
    }
    let sq = disc.sqrt();
    let mu1 = (tr + sq) / 2.0;
    let mu2 = (tr - sq) / 2.0;
    let (mu_u, mu_s) = if mu1.abs() > mu2.abs() {
        (mu1, mu2)
    } else {
        (mu2, mu1)
    };
    if mu_u.abs() <= 1.0 || mu_s.abs() >= 1.0 {
        return Err(CoreError::MapValidation(format!(
            "eigenvalues {mu_u}, {mu_s} are not hyperbolic"
        )));
    }
    let eigvec = |mu: f64| -> [f64; 2] {
        let b = a[0][1] as f64;
        let c = a[1][0] as f64;
        let v = if b.abs() > 1e-12 {
            [b, mu - a[0][0] as f64]
        } else if c.abs() > 1e-12 {
            [mu - a[1][1] as f64, c]
        } else {
            [1.0, 0.0]
        };
        let n = norm2(v);
        [v[0] / n, v[1] / n]
    };
    let v_u = eigvec(mu_u);
    let v_s = eigvec(mu_s);
    let cross = (v_u[0] * v_s[1] - v_u[1] * v_s[0]).abs();
    Ok(LinearSplitting {
        mu_s,
        v_s,
        mu_u,
        v_u,
        basis_condition: if cross > 0.0 { 1.0 / cross } else { f64::INFINITY },
    })
}

/// A dynamical system: expanding circle map, hyperbolic linear toral
/// automorphism, or a trigonometric perturbation of one.
///
/// The perturbed family is T(x) = A x + (δ/2π)(sin 2πx₂, sin 2πx₁) mod 1,
/// so δ is exactly the amplitude of the Jacobian perturbation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum MapModel {
    /// T(x) = kx + ε sin(2πx) mod 1 with inf T' = k − 2πε > 1.
    ExpandingCircle { degree: u32, eps: f64, smoothness: f64 },
    LinearToral { matrix: [[i64; 2]; 2], smoothness: f64 },
    PerturbedToral { matrix: [[i64; 2]; 2], delta: f64, smoothness: f64 },
}

impl MapModel {
    pub fn expanding_circle(degree: u32, eps: f64) -> Result<Self> {
        if degree < 2 {
            return Err(CoreError::MapValidation(format!(
                "expanding circle map needs degree >= 2, got {degree}"
            )));
        }
        let min_deriv = degree as f64 - TAU * eps;
        if min_deriv <= 1.0 {
            return Err(CoreError::MapValidation(format!(
                "expansion condition violated: k - 2πε = {min_deriv} <= 1"
            )));
        }
        Ok(MapModel::ExpandingCircle {
            degree,
            eps,
            smoothness: f64::INFINITY,
        })
    }

    pub fn linear_toral(matrix: [[i64; 2]; 2]) -> Result<Self> {
        let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
        let tr = matrix[0][0] + matrix[1][1];
        if det.abs() != 1 {
            return Err(CoreError::MapValidation(format!(
                "toral automorphism needs |det A| = 1, got {det}"
            )));
        }
        if tr.abs() <= 2 {
            return Err(CoreError::MapValidation(format!(
                "hyperbolicity needs |trace A| > 2, got {tr}"
            )));
        }
        integer_eigendata(matrix)?;
        Ok(MapModel::LinearToral {
            matrix,
            smoothness: f64::INFINITY,
        })
    }

    pub fn perturbed_toral(matrix: [[i64; 2]; 2], delta: f64) -> Result<Self> {
        let base = Self::linear_toral(matrix)?;
        let split = match &base {
            MapModel::LinearToral { matrix, .. } => integer_eigendata(*matrix)?,
            _ => unreachable!(),
        };
        // keep the perturbation well below the hyperbolicity gap
        let gap = (split.mu_u.abs() - 1.0).min(1.0 - split.mu_s.abs());
        if delta.abs() >= 0.5 * gap {
            return Err(CoreError::MapValidation(format!(
                "perturbation δ = {} exceeds half the hyperbolicity gap {gap}",
                delta.abs()
            )));
        }
        Ok(MapModel::PerturbedToral {
            matrix,
            delta,
            smoothness: f64::INFINITY,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            MapModel::ExpandingCircle { .. } => 1,
            _ => 2,
        }
    }

    pub fn is_expanding(&self) -> bool {
        matches!(self, MapModel::ExpandingCircle { .. })
    }

    pub fn degree(&self) -> Option<u32> {
        match self {
            MapModel::ExpandingCircle { degree, .. } => Some(*degree),
            _ => None,
        }
    }

    /// Lift of the circle map to ℝ (strictly increasing, T̃(y+1) = T̃(y)+k).
    pub fn lift1(&self, y: f64) -> f64 {
        match self {
            MapModel::ExpandingCircle { degree, eps, .. } => {
                *degree as f64 * y + eps * (TAU * y).sin()
            }
            _ => panic!("lift1 on a torus map"),
        }
    }

    pub fn deriv1(&self, y: f64) -> f64 {
        match self {
            MapModel::ExpandingCircle { degree, eps, .. } => {
                *degree as f64 + TAU * eps * (TAU * y).cos()
            }
            _ => panic!("deriv1 on a torus map"),
        }
    }

    /// One application of the map on the torus.
    pub fn apply(&self, p: Point) -> Point {
        match self {
            MapModel::ExpandingCircle { .. } => [frac(self.lift1(p[0])), 0.0],
            MapModel::LinearToral { matrix, .. } => {
                let a = matrix;
                [
                    frac(a[0][0] as f64 * p[0] + a[0][1] as f64 * p[1]),
                    frac(a[1][0] as f64 * p[0] + a[1][1] as f64 * p[1]),
                ]
            }
            MapModel::PerturbedToral { matrix, delta, .. } => {
                let a = matrix;
                [
                    frac(a[0][0] as f64 * p[0] + a[0][1] as f64 * p[1] + delta / TAU * (TAU * p[1]).sin()),
                    frac(a[1][0] as f64 * p[0] + a[1][1] as f64 * p[1] + delta / TAU * (TAU * p[0]).sin()),
                ]
            }
        }
    }

    /// Lift of the torus map to ℝ² (no reduction mod 1).
    pub fn lift2(&self, p: Point) -> Point {
        match self {
            MapModel::ExpandingCircle { .. } => panic!("lift2 on a circle map"),
            MapModel::LinearToral { matrix, .. } => [
                matrix[0][0] as f64 * p[0] + matrix[0][1] as f64 * p[1],
                matrix[1][0] as f64 * p[0] + matrix[1][1] as f64 * p[1],
            ],
            MapModel::PerturbedToral { matrix, delta, .. } => [
                matrix[0][0] as f64 * p[0] + matrix[0][1] as f64 * p[1] + delta / TAU * (TAU * p[1]).sin(),
                matrix[1][0] as f64 * p[0] + matrix[1][1] as f64 * p[1] + delta / TAU * (TAU * p[0]).sin(),
            ],
        }
    }

    /// Jacobian at a point; circle maps embed as diag(T'(x), 1).
    pub fn jacobian(&self, p: Point) -> Mat2 {
        match self {
            MapModel::ExpandingCircle { .. } => [[self.deriv1(p[0]), 0.0], [0.0, 1.0]],
            MapModel::LinearToral { matrix, .. } => [
                [matrix[0][0] as f64, matrix[0][1] as f64],
                [matrix[1][0] as f64, matrix[1][1] as f64],
            ],
            MapModel::PerturbedToral { matrix, delta, .. } => [
                [
                    matrix[0][0] as f64,
                    matrix[0][1] as f64 + delta * (TAU * p[1]).cos(),
                ],
                [
                    matrix[1][0] as f64 + delta * (TAU * p[0]).cos(),
                    matrix[1][1] as f64,
                ],
            ],
        }
    }

    pub fn iterate(&self, p: Point, m: u32) -> Point {
        let mut x = p;
        for _ in 0..m {
            x = self.apply(x);
        }
        x
    }

    /// Forward orbit segment x, Tx, ..., T^{m−1}x.
    pub fn orbit(&self, p: Point, m: u32) -> Vec<Point> {
        let mut out = Vec::with_capacity(m as usize);
        let mut x = p;
        for _ in 0..m {
            out.push(x);
            x = self.apply(x);
        }
        out
    }

    /// DT^m(p) by the chain rule along the forward orbit.
    pub fn derivative_along(&self, p: Point, m: u32) -> Mat2 {
        let mut jac = [[1.0, 0.0], [0.0, 1.0]];
        let mut x = p;
        for _ in 0..m {
            jac = mat_mul(&self.jacobian(x), &jac);
            x = self.apply(x);
        }
        jac
    }

    /// Stable/unstable eigendata of the linear part (toral kinds only).
    pub fn linear_splitting(&self) -> Result<LinearSplitting> {
        match self {
            MapModel::LinearToral { matrix, .. } | MapModel::PerturbedToral { matrix, .. } => {
                integer_eigendata(*matrix)
            }
            _ => Err(CoreError::InvalidParameter(
                "linear splitting only defined for toral maps".into(),
            )),
        }
    }

    /// Hyperbolicity rates (λ_s, ν_u) used by the essential-radius filters.
    /// For expanding maps λ_s is the contraction of the inverse branches.
    pub fn rates(&self) -> (f64, f64) {
        match self {
            MapModel::ExpandingCircle { degree, eps, .. } => {
                let min = *degree as f64 - TAU * eps;
                let max = *degree as f64 + TAU * eps;
                (1.0 / min, max)
            }
            _ => {
                let split = self.linear_splitting().expect("validated at construction");
                (split.mu_s.abs(), split.mu_u.abs())
            }
        }
    }

    /// Solve T(z) = y on the torus (invertible toral kinds).
    pub fn inverse(&self, y: Point) -> Result<Point> {
        let (matrix, _delta) = match self {
            MapModel::LinearToral { matrix, .. } => (matrix, 0.0),
            MapModel::PerturbedToral { matrix, delta, .. } => (matrix, *delta),
            _ => {
                return Err(CoreError::InvalidParameter(
                    "inverse point of a noninvertible map".into(),
                ))
            }
        };
        let a = [
            [matrix[0][0] as f64, matrix[0][1] as f64],
            [matrix[1][0] as f64, matrix[1][1] as f64],
        ];
        let a_inv = mat_inv(&a)?;
        let mut z = [
            frac(a_inv[0][0] * y[0] + a_inv[0][1] * y[1]),
            frac(a_inv[1][0] * y[0] + a_inv[1][1] * y[1]),
        ];
        for _ in 0..60 {
            let img = self.apply(z);
            let r = [wrap_half(img[0] - y[0]), wrap_half(img[1] - y[1])];
            if r[0].abs().max(r[1].abs()) < 1e-14 {
                return Ok([frac(z[0]), frac(z[1])]);
            }
            let j_inv = mat_inv(&self.jacobian(z))?;
            let step = mat_vec(&j_inv, r);
            z = [z[0] - step[0], z[1] - step[1]];
        }
        Err(CoreError::NonConvergence(format!(
            "toral inverse Newton failed at y = ({}, {})",
            y[0], y[1]
        )))
    }

    /// The m-fold preimages of x under an expanding circle map, one per
    /// itinerary in {0,…,k−1}^m.
    pub fn inverse_branches(&self, x: f64, m: u32) -> Result<Vec<Preimage>> {
        let degree = match self {
            MapModel::ExpandingCircle { degree, .. } => *degree as u64,
            _ => {
                return Err(CoreError::InvalidParameter(
                    "inverse branches only defined for expanding circle maps".into(),
                ))
            }
        };
        if m == 0 {
            return Err(CoreError::InvalidParameter("need m >= 1".into()));
        }
        let count = degree.pow(m);
        let mut out = Vec::with_capacity(count as usize);
        for code in 0..count {
            let mut digits = Vec::with_capacity(m as usize);
            let mut c = code;
            for _ in 0..m {
                digits.push((c % degree) as u8);
                c /= degree;
            }
            // digits[0] = branch of the final preimage point
            let mut y = frac(x);
            for &j in digits.iter().rev() {
                y = self.branch_solve(y, j)?;
            }
            out.push(Preimage {
                point: y,
                itinerary: digits,
            });
        }
        Ok(out)
    }

    /// Solve T̃(y) = x + j for the branch-j preimage of x ∈ [0,1).
    fn branch_solve(&self, x: f64, j: u8) -> Result<f64> {
        let (degree, eps) = match self {
            MapModel::ExpandingCircle { degree, eps, .. } => (*degree as f64, *eps),
            _ => unreachable!(),
        };
        let target = x + j as f64;
        let mut y = target / degree;
        let mut converged = false;
        for _ in 0..200 {
            let next = (target - eps * (TAU * y).sin()) / degree;
            if (next - y).abs() < 1e-15 {
                y = next;
                converged = true;
                break;
            }
            y = next;
        }
        if !converged {
            return Err(CoreError::NonConvergence(format!(
                "inverse branch {j} at x = {x} did not converge in 200 iterations"
            )));
        }
        // Newton polish on the lift
        for _ in 0..3 {
            let r = self.lift1(y) - target;
            y -= r / self.deriv1(y);
        }
        Ok(y)
    }
}

/// An m-fold preimage with its branch itinerary.
#[derive(Debug, Clone)]
pub struct Preimage {
    pub point: f64,
    pub itinerary: Vec<u8>,
}

/// Closed-form one-dimensional local branch 𝒯 (typically a contracting
/// inverse branch of an expanding map, in charts).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub enum Branch1 {
    /// 𝒯(w) = c w.
    Scale { c: f64 },
    /// 𝒯(w) = c w + a sin(2πw).
    ScaleSine { c: f64, a: f64 },
    /// The identity, for the multiplication-operator reduction.
    Identity,
}

impl Branch1 {
    pub fn eval(&self, w: f64) -> f64 {
        match self {
            Branch1::Scale { c } => c * w,
            Branch1::ScaleSine { c, a } => c * w + a * (TAU * w).sin(),
            Branch1::Identity => w,
        }
    }

    pub fn deriv(&self, w: f64) -> f64 {
        match self {
            Branch1::Scale { c } => *c,
            Branch1::ScaleSine { c, a } => c + a * TAU * (TAU * w).cos(),
            Branch1::Identity => 1.0,
        }
    }

    pub fn deriv2(&self, w: f64) -> f64 {
        match self {
            Branch1::Scale { .. } | Branch1::Identity => 0.0,
            Branch1::ScaleSine { a, .. } => -a * TAU * TAU * (TAU * w).sin(),
        }
    }

    /// ‖𝒯‖₊ in one dimension: sup over w of |𝒯'(w)|.
    pub fn sup_deriv(&self) -> f64 {
        match self {
            Branch1::Scale { c } => c.abs(),
            Branch1::ScaleSine { c, a } => c.abs() + TAU * a.abs(),
            Branch1::Identity => 1.0,
        }
    }

    /// Range of |𝒯'|: (inf, sup).
    pub fn deriv_range(&self) -> (f64, f64) {
        match self {
            Branch1::Scale { c } => (c.abs(), c.abs()),
            Branch1::ScaleSine { c, a } => {
                ((c.abs() - TAU * a.abs()).max(0.0), c.abs() + TAU * a.abs())
            }
            Branch1::Identity => (1.0, 1.0),
        }
    }
}

/// Closed-form smooth weight on the torus.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum Weight {
    Const { re: f64, im: f64 },
    /// First coordinate of the point (cocycle test helper; not smooth on the
    /// torus, evaluable everywhere).
    Coord,
    /// Σ amp_j cos(2π k_j·x + phase_j).
    TrigPoly { terms: Vec<TrigTerm> },
    /// 1/T'(x) for expanding circle maps (positive derivative enforced).
    InvDeriv,
    /// 1/|det DT|_{E^u}| = 1/|μ_u| for linear toral maps.
    InvDetUnstable,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrigTerm {
    pub k: [i64; 2],
    pub amp: f64,
    pub phase: f64,
}

impl Weight {
    pub const ONE: Weight = Weight::Const { re: 1.0, im: 0.0 };

    pub fn constant(c: f64) -> Weight {
        Weight::Const { re: c, im: 0.0 }
    }

    pub fn eval(&self, map: &MapModel, x: Point) -> Complex64 {
        match self {
            Weight::Const { re, im } => Complex64::new(*re, *im),
            Weight::Coord => Complex64::new(x[0], 0.0),
            Weight::TrigPoly { terms } => {
                let mut acc = Complex64::ZERO;
                for t in terms {
                    let arg = TAU * (t.k[0] as f64 * x[0] + t.k[1] as f64 * x[1]) + t.phase;
                    acc += Complex64::new(t.amp * arg.cos(), 0.0);
                }
                acc
            }
            Weight::InvDeriv => Complex64::new(1.0 / map.deriv1(x[0]), 0.0),
            Weight::InvDetUnstable => {
                let split = map.linear_splitting().expect("toral map required");
                Complex64::new(1.0 / split.mu_u.abs(), 0.0)
            }
        }
    }

    pub fn sup_norm(&self, map: &MapModel, samples: usize) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..samples {
            for j in 0..(if map.dim() == 2 { samples } else { 1 }) {
                let x = [i as f64 / samples as f64, j as f64 / samples as f64];
                best = best.max(self.eval(map, x).norm());
            }
        }
        best
    }
}

/// Birkhoff product g^{(m)}(x) = Π_{k<m} g(T^k x).
pub fn birkhoff_weight(map: &MapModel, g: &Weight, x: Point, m: u32) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    let mut p = x;
    for _ in 0..m {
        acc *= g.eval(map, p);
        p = map.apply(p);
    }
    acc
}

/// Local hyperbolicity exponents (λ_x(T^m), ν_x(T^m)).
///
/// Exact via eigenvalue powers for linear maps; for perturbed maps the
/// stable/unstable directions are approximated by finite-time power iteration
/// over a pre-orbit/forward segment of length `n_pre`. Expanding circle maps
/// report (1/|（T^m)'|, |(T^m)'|).
pub fn hyperbolicity_exponents(
    map: &MapModel,
    x: Point,
    m: u32,
    n_pre: u32,
) -> Result<(f64, f64)> {
    if m == 0 {
        return Ok((1.0, 1.0));
    }
    match map {
        MapModel::ExpandingCircle { .. } => {
            let mut d = 1.0;
            let mut p = x;
            for _ in 0..m {
                d *= map.deriv1(p[0]);
                p = map.apply(p);
            }
            Ok((1.0 / d.abs(), d.abs()))
        }
        MapModel::LinearToral { .. } => {
            let split = map.linear_splitting()?;
            Ok((
                split.mu_s.abs().powi(m as i32),
                split.mu_u.abs().powi(m as i32),
            ))
        }
        MapModel::PerturbedToral { .. } => {
            let (v_s, v_u) = invariant_directions(map, x, n_pre)?;
            let jac = map.derivative_along(x, m);
            Ok((norm2(mat_vec(&jac, v_s)), norm2(mat_vec(&jac, v_u))))
        }
    }
}

/// Approximate unit vectors spanning E^s(x) and E^u(x) by finite-time power
/// iteration: pull a generic vector back along the forward orbit for E^s and
/// push one forward along a pre-orbit for E^u.
pub fn invariant_directions(map: &MapModel, x: Point, n_pre: u32) -> Result<([f64; 2], [f64; 2])> {
    let split = map.linear_splitting()?;

    // unstable: push split.v_u along the pre-orbit ending at x
    let mut pre = Vec::with_capacity(n_pre as usize + 1);
    pre.push(x);
    let mut z = x;
    for _ in 0..n_pre {
        z = map.inverse(z)?;
        pre.push(z);
    }
    let mut v_u = split.v_u;
    for p in pre.iter().rev().skip(1) {
        // p runs over x_{-n_pre}, ..., x_{-1}
        v_u = mat_vec(&map.jacobian(*p), v_u);
        let n = norm2(v_u);
        v_u = [v_u[0] / n, v_u[1] / n];
    }

    // stable: pull split.v_s back along the forward orbit of x
    let orbit = map.orbit(x, n_pre);
    let mut v_s = split.v_s;
    for p in orbit.iter().rev() {
        let j_inv = mat_inv(&map.jacobian(*p))?;
        v_s = mat_vec(&j_inv, v_s);
        let n = norm2(v_s);
        v_s = [v_s[0] / n, v_s[1] / n];
    }
    Ok((v_s, v_u))
}

/// λ^{(p,q,m)}(x) = max{ λ_x(T^m)^p, ν_x(T^m)^q }.
pub fn lambda_pqm(map: &MapModel, x: Point, p: f64, q: f64, m: u32, n_pre: u32) -> Result<f64> {
    let (lam, nu) = hyperbolicity_exponents(map, x, m, n_pre)?;
    Ok(lam.powf(p).max(nu.powf(q)))
}

/// Grid resolution for the constrained Rayleigh-quotient norms.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RayleighConfig {
    pub angle_samples: usize,
    pub space_samples: usize,
}

impl Default for RayleighConfig {
    fn default() -> Self {
        RayleighConfig {
            angle_samples: 720,
            space_samples: 64,
        }
    }
}

fn space_grid(map: &MapModel, cfg: &RayleighConfig) -> Vec<Point> {
    match map {
        MapModel::LinearToral { .. } => vec![[0.0, 0.0]],
        _ => {
            let s = cfg.space_samples;
            let mut pts = Vec::with_capacity(s * s);
            for i in 0..s {
                for j in 0..s {
                    pts.push([i as f64 / s as f64, j as f64 / s as f64]);
                }
            }
            pts
        }
    }
}

/// Weakest contraction over an explicit family of transposed Jacobians:
/// sup of ‖J^{tr}ξ‖ over unit covectors whose image stays outside Θ₋.
pub fn weakest_contraction_jacobians(
    jacobians: &[Mat2],
    cones: &ConeSystem,
    angle_samples: usize,
) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    let mut any = false;
    for jac in jacobians {
        let jt = mat_transpose(jac);
        for i in 0..angle_samples {
            let theta = i as f64 * std::f64::consts::PI / angle_samples as f64;
            let xi = [theta.cos(), theta.sin()];
            let img = mat_vec(&jt, xi);
            let r = norm2(img);
            if r == 0.0 {
                continue;
            }
            let img_theta = img[1].atan2(img[0]);
            if !cones.minus.contains(img_theta) {
                any = true;
                if r > best {
                    best = r;
                }
            }
        }
    }
    if !any {
        return Err(CoreError::EmptyConstraintSet(
            "no covector image avoids Θ₋".into(),
        ));
    }
    Ok(best)
}

/// Weakest expansion over explicit transposed Jacobians: inf of ‖J^{tr}ξ‖
/// over unit covectors outside the input cone Θ'₊ (Θ₊ without a second
/// pair).
pub fn weakest_expansion_jacobians(
    jacobians: &[Mat2],
    cones: &ConeSystem,
    angle_samples: usize,
) -> Result<f64> {
    let (plus_in, _) = cones.input_pair();
    let mut best = f64::INFINITY;
    let mut any = false;
    for jac in jacobians {
        let jt = mat_transpose(jac);
        for i in 0..angle_samples {
            let theta = i as f64 * std::f64::consts::PI / angle_samples as f64;
            if plus_in.contains(theta) {
                continue;
            }
            let xi = [theta.cos(), theta.sin()];
            let r = norm2(mat_vec(&jt, xi));
            any = true;
            if r < best {
                best = r;
            }
        }
    }
    if !any {
        return Err(CoreError::EmptyConstraintSet(
            "every covector lies in the input cone Θ₊".into(),
        ));
    }
    Ok(best)
}

/// Weakest contraction ‖T^m‖₊ of a map on a dense spatial grid.
pub fn weakest_contraction(
    map: &MapModel,
    cones: &ConeSystem,
    m: u32,
    cfg: &RayleighConfig,
) -> Result<f64> {
    let jacobians: Vec<Mat2> = space_grid(map, cfg)
        .into_iter()
        .map(|x| map.derivative_along(x, m))
        .collect();
    weakest_contraction_jacobians(&jacobians, cones, cfg.angle_samples)
}

/// Weakest expansion ‖T^m‖₋ of a map on a dense spatial grid.
pub fn weakest_expansion(
    map: &MapModel,
    cones: &ConeSystem,
    m: u32,
    cfg: &RayleighConfig,
) -> Result<f64> {
    let jacobians: Vec<Mat2> = space_grid(map, cfg)
        .into_iter()
        .map(|x| map.derivative_along(x, m))
        .collect();
    weakest_expansion_jacobians(&jacobians, cones, cfg.angle_samples)
}

/// Outcome of the cone-hyperbolicity test, with a violating covector when it
/// fails.
#[derive(Debug, Clone)]
pub struct ConeCheck {
    pub holds: bool,
    pub witness: Option<ConeWitness>,
}

#[derive(Debug, Clone)]
pub struct ConeWitness {
    pub x: Point,
    pub theta: f64,
    pub image_theta: f64,
}

/// Cone-hyperbolicity over an explicit family of (point, Jacobian) pairs.
pub fn cone_hyperbolicity_check_jacobians(
    jacobians: &[(Point, Mat2)],
    cones: &ConeSystem,
    two_pair: bool,
    angle_samples: usize,
) -> Result<ConeCheck> {
    let source = if two_pair {
        cones
            .prime
            .ok_or_else(|| {
                CoreError::InvalidParameter("two-pair check requested without a primed pair".into())
            })?
            .0
    } else {
        cones.plus
    };
    for (x, jac) in jacobians {
        let jt = mat_transpose(jac);
        for i in 0..angle_samples {
            let theta = i as f64 * std::f64::consts::PI / angle_samples as f64;
            if source.contains_interior(theta) {
                continue;
            }
            let img = mat_vec(&jt, [theta.cos(), theta.sin()]);
            if norm2(img) == 0.0 {
                continue;
            }
            let image_theta = img[1].atan2(img[0]);
            if !cones.minus.contains_interior(image_theta) {
                return Ok(ConeCheck {
                    holds: false,
                    witness: Some(ConeWitness {
                        x: *x,
                        theta,
                        image_theta: image_theta.rem_euclid(std::f64::consts::PI),
                    }),
                });
            }
        }
    }
    Ok(ConeCheck {
        holds: true,
        witness: None,
    })
}

/// Check that (DT^m)^{tr} maps every covector outside interior(Θ₊) (or Θ'₊
/// with `two_pair`) into interior(Θ₋) ∪ {0}, on a dense grid.
pub fn cone_hyperbolicity_check(
    map: &MapModel,
    cones: &ConeSystem,
    m: u32,
    two_pair: bool,
    cfg: &RayleighConfig,
) -> Result<ConeCheck> {
    if map.dim() != 2 {
        return Err(CoreError::InvalidParameter(
            "cone hyperbolicity is a 2D notion".into(),
        ));
    }
    let jacobians: Vec<(Point, Mat2)> = space_grid(map, cfg)
        .into_iter()
        .map(|x| (x, map.derivative_along(x, m)))
        .collect();
    cone_hyperbolicity_check_jacobians(&jacobians, cones, two_pair, cfg.angle_samples)
}

/// Adapted wide/narrow cone pairs for a linear toral map: Θ₊ narrow about the
/// contracting covector direction with a wide primed stable cone, so the
/// measured ‖T‖_± sit close to the eigenvalue bounds.
pub fn adapted_cones(map: &MapModel, narrow: f64, wide: f64) -> Result<ConeSystem> {
    let split = map.linear_splitting()?;
    // A^{tr} acts on covectors; its contracting direction is orthogonal to E^u.
    let stable_cov = [-split.v_u[1], split.v_u[0]];
    let unstable_cov = [-split.v_s[1], split.v_s[0]];
    let theta_s = stable_cov[1].atan2(stable_cov[0]);
    let theta_u = unstable_cov[1].atan2(unstable_cov[0]);
    let sys = ConeSystem::new(Cone::new(theta_s, narrow)?, Cone::new(theta_u, wide)?)?
        .with_prime(Cone::new(theta_s, wide)?, Cone::new(theta_u, narrow)?)?;
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const CAT: [[i64; 2]; 2] = [[2, 1], [1, 1]];

    fn doubling() -> MapModel {
        MapModel::expanding_circle(2, 0.0).unwrap()
    }

    #[test]
    fn closed_form_evaluation() {
        let d = doubling();
        assert_abs_diff_eq!(d.iterate([0.3, 0.0], 2)[0], 0.2, epsilon = 1e-15);

        let cat = MapModel::linear_toral(CAT).unwrap();
        assert_eq!(cat.apply([0.0, 0.0]), [0.0, 0.0]);
        let j = cat.jacobian([0.37, 0.11]);
        assert_eq!(j, [[2.0, 1.0], [1.0, 1.0]]);
    }

    #[test]
    fn validation_rejects_bad_maps() {
        assert!(MapModel::expanding_circle(2, 0.2).is_err()); // 2 − 2π·0.2 < 1
        assert!(MapModel::expanding_circle(1, 0.0).is_err());
        assert!(MapModel::linear_toral([[1, 1], [0, 1]]).is_err()); // parabolic
        assert!(MapModel::linear_toral([[2, 0], [0, 2]]).is_err()); // det 4
    }

    #[test]
    fn inverse_branches_of_doubling() {
        let d = doubling();
        let pre = d.inverse_branches(0.0, 1).unwrap();
        let mut pts: Vec<f64> = pre.iter().map(|p| p.point).collect();
        pts.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(pts[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pts[1], 0.5, epsilon = 1e-14);

        let pre = d.inverse_branches(0.5, 1).unwrap();
        let mut pts: Vec<f64> = pre.iter().map(|p| p.point).collect();
        pts.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(pts[0], 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(pts[1], 0.75, epsilon = 1e-14);
    }

    #[test]
    fn inverse_branches_perturbed_residuals() {
        let map = MapModel::expanding_circle(2, 0.02).unwrap();
        let pre = map.inverse_branches(0.1, 1).unwrap();
        assert_eq!(pre.len(), 2);
        for p in &pre {
            let img = map.apply([p.point, 0.0])[0];
            assert!(wrap_half(img - 0.1).abs() < 1e-12);
        }
        // completeness at higher m
        let pre = map.inverse_branches(0.7, 3).unwrap();
        assert_eq!(pre.len(), 8);
        for p in &pre {
            let img = map.iterate([p.point, 0.0], 3)[0];
            assert!(wrap_half(img - 0.7).abs() < 1e-10);
        }
    }

    #[test]
    fn birkhoff_products() {
        let d = doubling();
        let c = Weight::constant(0.7);
        let w = birkhoff_weight(&d, &c, [0.2, 0.0], 3);
        assert_abs_diff_eq!(w.re, 0.7f64.powi(3), epsilon = 1e-15);

        let g = Weight::Coord;
        assert_abs_diff_eq!(
            birkhoff_weight(&d, &g, [0.25, 0.0], 2).re,
            0.125,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            birkhoff_weight(&d, &g, [0.33, 0.0], 1).re,
            0.33,
            epsilon = 1e-15
        );
    }

    #[test]
    fn birkhoff_cocycle_property() {
        let map = MapModel::expanding_circle(3, 0.01).unwrap();
        let g = Weight::TrigPoly {
            terms: vec![
                TrigTerm { k: [0, 0], amp: 1.5, phase: 0.0 },
                TrigTerm { k: [1, 0], amp: 0.4, phase: 0.3 },
            ],
        };
        let x = [0.37, 0.0];
        let (m, n) = (4u32, 3u32);
        let total = birkhoff_weight(&map, &g, x, m + n);
        let split = birkhoff_weight(&map, &g, x, m)
            * birkhoff_weight(&map, &g, map.iterate(x, m), n);
        assert!((total - split).norm() <= 1e-12 * total.norm());
    }

    #[test]
    fn exponents_linear_exact() {
        let cat = MapModel::linear_toral(CAT).unwrap();
        let lam = (3.0 + 5f64.sqrt()) / 2.0;
        for m in [1u32, 3, 6] {
            let (l, n) = hyperbolicity_exponents(&cat, [0.3, 0.7], m, 0).unwrap();
            assert_abs_diff_eq!(l, lam.powi(-(m as i32)), epsilon = 1e-12);
            assert_abs_diff_eq!(n, lam.powi(m as i32), epsilon = 1e-12 * n);
        }
        let (l, n) = hyperbolicity_exponents(&cat, [0.1, 0.2], 0, 0).unwrap();
        assert_eq!((l, n), (1.0, 1.0));
    }

    #[test]
    fn exponent_submultiplicativity_linear() {
        let cat = MapModel::linear_toral(CAT).unwrap();
        let x = [0.21, 0.83];
        let (m, n) = (3u32, 4u32);
        let (l_mn, _) = hyperbolicity_exponents(&cat, x, m + n, 0).unwrap();
        let (l_m, _) = hyperbolicity_exponents(&cat, x, m, 0).unwrap();
        let (l_n, _) = hyperbolicity_exponents(&cat, cat.iterate(x, m), n, 0).unwrap();
        assert!(l_mn <= l_m * l_n * (1.0 + 1e-6));
    }

    #[test]
    fn lambda_pqm_closed_forms() {
        let cat = MapModel::linear_toral(CAT).unwrap();
        let lam = (3.0 + 5f64.sqrt()) / 2.0;
        let v = lambda_pqm(&cat, [0.4, 0.9], 1.0, -1.0, 1, 0).unwrap();
        assert_abs_diff_eq!(v, 1.0 / lam, epsilon = 1e-12);
        let v = lambda_pqm(&cat, [0.4, 0.9], 2.0, -1.0, 1, 0).unwrap();
        assert_abs_diff_eq!(v, 1.0 / lam, epsilon = 1e-12);
        let v = lambda_pqm(&cat, [0.4, 0.9], 0.0, 0.0, 5, 0).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
        // exact match with the closed form at every m
        for m in 1..=8u32 {
            let v = lambda_pqm(&cat, [0.77, 0.15], 1.3, -0.6, m, 0).unwrap();
            let closed = lam.powf(-1.3 * m as f64).max(lam.powf(-0.6 * m as f64));
            assert_abs_diff_eq!(v, closed, epsilon = 1e-12 * closed.max(1.0));
        }
    }

    #[test]
    fn perturbed_exponents_near_linear() {
        let map = MapModel::perturbed_toral(CAT, 0.01).unwrap();
        let lam = (3.0 + 5f64.sqrt()) / 2.0;
        // oracle: directions from a much longer finite-time approximation
        for m in [1u32, 3, 6] {
            let (l, n) = hyperbolicity_exponents(&map, [0.34, 0.58], m, 30).unwrap();
            let (l_ref, n_ref) = hyperbolicity_exponents(&map, [0.34, 0.58], m, 200).unwrap();
            assert!((l / l_ref - 1.0).abs() < 1e-6, "n_pre=30 already converged");
            assert!((n / n_ref - 1.0).abs() < 1e-6);
            assert!((l / lam.powi(-(m as i32)) - 1.0).abs() < 0.05);
            assert!((n / lam.powi(m as i32) - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn toral_inverse_round_trip() {
        let map = MapModel::perturbed_toral(CAT, 0.02).unwrap();
        for seed in 0..20 {
            let y = [frac(seed as f64 * 0.137 + 0.05), frac(seed as f64 * 0.311 + 0.4)];
            let z = map.inverse(y).unwrap();
            let img = map.apply(z);
            assert!(wrap_half(img[0] - y[0]).abs() < 1e-12);
            assert!(wrap_half(img[1] - y[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn weakest_norms_adapted_cat_cones() {
        let cat = MapModel::linear_toral(CAT).unwrap();
        let lam = (3.0 + 5f64.sqrt()) / 2.0;
        let sys = adapted_cones(&cat, 8f64.to_radians(), 80f64.to_radians()).unwrap();
        let cfg = RayleighConfig::default();
        let plus = weakest_contraction(&cat, &sys, 1, &cfg).unwrap();
        let minus = weakest_expansion(&cat, &sys, 1, &cfg).unwrap();
        assert!((plus / (1.0 / lam) - 1.0).abs() < 0.02, "‖T‖₊ = {plus}");
        assert!((minus / lam - 1.0).abs() < 0.02, "‖T‖₋ = {minus}");
    }

    #[test]
    fn cone_hyperbolicity_cat_map() {
        let cat = MapModel::linear_toral(CAT).unwrap();
        let split = cat.linear_splitting().unwrap();
        // Θ₊ about the contracting covector direction of A^{tr} = A,
        // which for the symmetric cat map is the stable eigendirection.
        let theta_s = split.v_s[1].atan2(split.v_s[0]);
        let theta_u = split.v_u[1].atan2(split.v_u[0]);
        assert_abs_diff_eq!(
            theta_s.rem_euclid(std::f64::consts::PI),
            (-(1.0 + 5f64.sqrt()) / 2.0).atan().rem_euclid(std::f64::consts::PI),
            epsilon = 1e-12
        );
        let good = ConeSystem::new(
            Cone::new(theta_s, 20f64.to_radians()).unwrap(),
            Cone::new(theta_u, 25f64.to_radians()).unwrap(),
        )
        .unwrap();
        let cfg = RayleighConfig { angle_samples: 1440, space_samples: 4 };
        assert!(cone_hyperbolicity_check(&cat, &good, 1, false, &cfg)
            .unwrap()
            .holds);

        let swapped = ConeSystem::new(
            Cone::new(theta_u, 20f64.to_radians()).unwrap(),
            Cone::new(theta_s, 25f64.to_radians()).unwrap(),
        )
        .unwrap();
        let check = cone_hyperbolicity_check(&cat, &swapped, 1, false, &cfg).unwrap();
        assert!(!check.holds);
        assert!(check.witness.is_some());
    }

    #[test]
    fn cone_hyperbolicity_identity_two_pair() {
        // identity Jacobian with Θ'₊ covering the complement of Θ₋: the
        // two-pair condition holds because covectors never move.
        let sys = ConeSystem::new(
            Cone::new(0.0, 0.3).unwrap(),
            Cone::new(std::f64::consts::FRAC_PI_2, 1.1).unwrap(),
        )
        .unwrap()
        .with_prime(
            Cone::new(0.0, std::f64::consts::FRAC_PI_2 - 1.05).unwrap(),
            Cone::new(std::f64::consts::FRAC_PI_2, 0.3).unwrap(),
        )
        .unwrap();
        let id: [(Point, Mat2); 1] = [([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]])];
        let check = cone_hyperbolicity_check_jacobians(&id, &sys, true, 1440).unwrap();
        assert!(check.holds);
        // and the identity's weakest contraction with this Θ₋ is exactly 1
        let jacs = [[[1.0, 0.0], [0.0, 1.0]]];
        let t_plus = weakest_contraction_jacobians(&jacs, &sys, 1440).unwrap();
        assert!(t_plus <= 1.0 + 1e-12);
        assert_abs_diff_eq!(t_plus, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn branch_sup_deriv_examples() {
        assert_eq!(Branch1::Scale { c: 0.5 }.sup_deriv(), 0.5);
        assert_eq!(Branch1::Identity.sup_deriv(), 1.0);
        let b = Branch1::ScaleSine { c: 0.5, a: 0.02 };
        assert_abs_diff_eq!(
            b.sup_deriv(),
            0.5 + 0.02 * std::f64::consts::TAU,
            epsilon = 1e-15
        );
        let (lo, hi) = b.deriv_range();
        assert!(lo > 0.0 && hi < 1.0, "branch stays a contraction");
    }
}
