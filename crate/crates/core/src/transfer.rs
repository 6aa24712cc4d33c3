//! Truncated matrix representations of transfer operators, resonance
//! extraction with essential-radius filters, the linkage relation between
//! dyadic blocks, and the compact-plus-small splitting L = L'₀ + L'₁.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cones::{ConeSystem, Sign};
use crate::dynamics::{birkhoff_weight, Branch1, MapModel, Weight};
use crate::error::{CoreError, Result};
use crate::fourier::{self, BlockLabel};
use crate::grid::{GridFunction, Spectrum};
use crate::linalg;

const TAU: f64 = 2.0 * std::f64::consts::PI;

/// Description of how an operator matrix was produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorMeta {
    pub kind: String,
    pub n_f: usize,
    pub quadrature_points: usize,
    pub weight: String,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub anisotropic: bool,
}

/// Square complex matrix over a truncated frequency index set.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub matrix: Array2<Complex64>,
    /// Signed frequency per row/column.
    pub index: Vec<[i64; 2]>,
    pub meta: OperatorMeta,
}

/// Magic bytes of the binary operator-entry format.
pub const OPERATOR_MAGIC: &[u8; 4] = b"RFOP";

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        self.index.len()
    }

    /// Export as `<prefix>.json` (metadata + index) and `<prefix>.bin`
    /// (RFOP header, u32 rows/cols, interleaved little-endian f64 re/im).
    pub fn write_files(&self, prefix: &std::path::Path) -> Result<()> {
        let meta = serde_json::json!({
            "meta": serde_json::to_value(&self.meta)
                .map_err(|e| CoreError::Numerical(e.to_string()))?,
            "index": self.index,
        });
        std::fs::write(prefix.with_extension("json"), meta.to_string())?;
        let mut buf: Vec<u8> =
            Vec::with_capacity(16 + 16 * self.matrix.len());
        buf.extend_from_slice(OPERATOR_MAGIC);
        buf.extend_from_slice(&(self.matrix.nrows() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.matrix.ncols() as u32).to_le_bytes());
        buf.extend_from_slice(&[0u8; 4]);
        for v in self.matrix.iter() {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        std::fs::write(prefix.with_extension("bin"), buf)?;
        Ok(())
    }

    pub fn read_files(prefix: &std::path::Path) -> Result<Self> {
        let meta_text = std::fs::read_to_string(prefix.with_extension("json"))?;
        let meta_doc: serde_json::Value = serde_json::from_str(&meta_text)
            .map_err(|e| CoreError::InvalidParameter(format!("bad operator metadata: {e}")))?;
        let meta: OperatorMeta = serde_json::from_value(meta_doc["meta"].clone())
            .map_err(|e| CoreError::InvalidParameter(format!("bad operator metadata: {e}")))?;
        let index: Vec<[i64; 2]> = serde_json::from_value(meta_doc["index"].clone())
            .map_err(|e| CoreError::InvalidParameter(format!("bad operator index: {e}")))?;
        let bytes = std::fs::read(prefix.with_extension("bin"))?;
        if bytes.len() < 16 || &bytes[0..4] != OPERATOR_MAGIC {
            return Err(CoreError::InvalidParameter(
                "bad magic in operator file".into(),
            ));
        }
        let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if bytes.len() != 16 + 16 * rows * cols || rows != index.len() {
            return Err(CoreError::InvalidParameter(
                "operator file size does not match its header".into(),
            ));
        }
        let mut matrix = Array2::<Complex64>::zeros((rows, cols));
        for (i, v) in matrix.iter_mut().enumerate() {
            let off = 16 + 16 * i;
            *v = Complex64::new(
                f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()),
                f64::from_le_bytes(bytes[off + 8..off + 16].try_into().unwrap()),
            );
        }
        Ok(OperatorMatrix {
            matrix,
            index,
            meta,
        })
    }

    /// Apply the matrix to a coefficient vector in index order.
    pub fn apply(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        assert_eq!(coeffs.len(), n);
        (0..n)
            .map(|i| {
                let mut acc = Complex64::ZERO;
                for j in 0..n {
                    acc += self.matrix[[i, j]] * coeffs[j];
                }
                acc
            })
            .collect()
    }
}

/// Frequency band |k| ≤ n_f for the circle.
fn index_1d(n_f: usize) -> Vec<[i64; 2]> {
    (-(n_f as i64)..=n_f as i64).map(|k| [k, 0]).collect()
}

/// Frequency box max(|k₁|,|k₂|) ≤ n_f for the torus.
fn index_2d(n_f: usize) -> Vec<[i64; 2]> {
    let mut idx = Vec::with_capacity((2 * n_f + 1) * (2 * n_f + 1));
    for kx in -(n_f as i64)..=n_f as i64 {
        for ky in -(n_f as i64)..=n_f as i64 {
            idx.push([kx, ky]);
        }
    }
    idx
}

/// Galerkin matrix of the expanding-map operator 𝓛u(x) = Σ_{Ty=x} g(y) u(y)
/// on the band |k| ≤ n_f:
///
///   M_{k,k'} = ∫₀¹ g(y) T̃'(y) e^{2πi(k'y − k T̃(y))} dy,
///
/// by the trapezoid rule on `quadrature_points` uniform samples (the change
/// of variables x = T(y) over the branches produces the lift derivative T̃').
pub fn assemble_expanding(
    map: &MapModel,
    g: &Weight,
    n_f: usize,
    quadrature_points: usize,
) -> Result<OperatorMatrix> {
    if !map.is_expanding() {
        return Err(CoreError::InvalidParameter(
            "assemble_expanding needs an expanding circle map".into(),
        ));
    }
    if quadrature_points < 8 * n_f.max(1) {
        return Err(CoreError::QuadratureBudget(format!(
            "need at least 8·N_f = {} quadrature points, got {quadrature_points}",
            8 * n_f
        )));
    }
    let q = quadrature_points;
    let index = index_1d(n_f);
    let d = index.len();
    // samples of y, T̃(y), g(y)·T̃'(y)
    let ys: Vec<f64> = (0..q).map(|j| j as f64 / q as f64).collect();
    let lifts: Vec<f64> = ys.iter().map(|&y| map.lift1(y)).collect();
    let gw: Vec<Complex64> = ys
        .iter()
        .map(|&y| g.eval(map, [y, 0.0]) * map.deriv1(y))
        .collect();

    let rows: Vec<Vec<Complex64>> = (0..d)
        .into_par_iter()
        .map(|i| {
            let k = index[i][0] as f64;
            // c_j = g(y_j) T̃'(y_j) e^{−2πik T̃(y_j)}; row_k[k'] = (1/Q) Σ_j c_j e^{2πi k' y_j}
            let mut buf: Vec<Complex64> = (0..q)
                .map(|j| {
                    let phase = -TAU * k * lifts[j];
                    gw[j] * Complex64::new(phase.cos(), phase.sin())
                })
                .collect();
            let plan = rustfft::FftPlanner::new().plan_fft_inverse(q);
            plan.process(&mut buf);
            index
                .iter()
                .map(|kp| {
                    let bin = kp[0].rem_euclid(q as i64) as usize;
                    buf[bin] / q as f64
                })
                .collect()
        })
        .collect();

    let mut matrix = Array2::<Complex64>::zeros((d, d));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            matrix[[i, j]] = v;
        }
    }
    Ok(OperatorMatrix {
        matrix,
        index,
        meta: OperatorMeta {
            kind: "expanding".into(),
            n_f,
            quadrature_points: q,
            weight: format!("{g:?}"),
            p: None,
            q: None,
            anisotropic: false,
        },
    })
}

/// The anisotropic diagonal weight w(k) mimicking the C^{p,q}_* scaling:
/// max(2,‖k‖)^{p φ₊(k/‖k‖)} · max(2,‖k‖)^{q φ₋(k/‖k‖)}; w(0) uses φ_± = 1/2.
pub fn aniso_weight(k: [i64; 2], p: f64, q: f64, cones: &ConeSystem) -> f64 {
    let norm = ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
    let base = norm.max(2.0);
    if k == [0, 0] {
        return base.powf((p + q) / 2.0);
    }
    let theta = (k[1] as f64).atan2(k[0] as f64);
    let fp = cones.phi_plus(theta);
    base.powf(p * fp + q * (1.0 - fp))
}

/// Matrix of the hyperbolic operator 𝓛φ = g·(φ∘T) on the frequency box,
/// conjugated by the anisotropic diagonal weight. Exact lattice reindexing
/// k ↦ A^{tr}k for linear maps; trapezoid quadrature otherwise.
pub fn assemble_hyperbolic(
    map: &MapModel,
    g: &Weight,
    n_f: usize,
    p: f64,
    q: f64,
    cones: &ConeSystem,
) -> Result<OperatorMatrix> {
    if map.dim() != 2 {
        return Err(CoreError::InvalidParameter(
            "assemble_hyperbolic needs a torus map".into(),
        ));
    }
    let index = index_2d(n_f);
    let d = index.len();
    let pos = |k: [i64; 2]| -> Option<usize> {
        let (kx, ky) = (k[0], k[1]);
        let b = n_f as i64;
        if kx.abs() <= b && ky.abs() <= b {
            Some(((kx + b) * (2 * b + 1) + (ky + b)) as usize)
        } else {
            None
        }
    };
    let weights: Vec<f64> = index.iter().map(|&k| aniso_weight(k, p, q, cones)).collect();
    let mut matrix = Array2::<Complex64>::zeros((d, d));

    match map {
        MapModel::LinearToral { matrix: a, .. } => {
            let terms = weight_fourier_terms(map, g)?;
            for (col, &kp) in index.iter().enumerate() {
                let ak = [
                    a[0][0] * kp[0] + a[1][0] * kp[1],
                    a[0][1] * kp[0] + a[1][1] * kp[1],
                ];
                for &(s, c) in &terms {
                    if let Some(row) = pos([ak[0] + s[0], ak[1] + s[1]]) {
                        matrix[[row, col]] += c * (weights[row] / weights[col]);
                    }
                }
            }
        }
        MapModel::PerturbedToral { .. } => {
            let n_g = (8 * n_f.max(8)).next_power_of_two();
            let cols: Vec<Vec<Complex64>> = index
                .par_iter()
                .map(|&kp| {
                    let mut field = vec![Complex64::ZERO; n_g * n_g];
                    for jx in 0..n_g {
                        for jy in 0..n_g {
                            let x = [jx as f64 / n_g as f64, jy as f64 / n_g as f64];
                            let t = map.lift2(x);
                            let phase = TAU * (kp[0] as f64 * t[0] + kp[1] as f64 * t[1]);
                            field[jx * n_g + jy] =
                                g.eval(map, x) * Complex64::new(phase.cos(), phase.sin());
                        }
                    }
                    let gf = GridFunction::from_values(2, n_g, field).expect("shape");
                    let spec = gf.spectrum();
                    index.iter().map(|&k| spec.coeff(k)).collect()
                })
                .collect();
            for (col, colv) in cols.into_iter().enumerate() {
                for (row, v) in colv.into_iter().enumerate() {
                    matrix[[row, col]] = v * (weights[row] / weights[col]);
                }
            }
        }
        _ => unreachable!(),
    }

    Ok(OperatorMatrix {
        matrix,
        index,
        meta: OperatorMeta {
            kind: "hyperbolic".into(),
            n_f,
            quadrature_points: 0,
            weight: format!("{g:?}"),
            p: Some(p),
            q: Some(q),
            anisotropic: true,
        },
    })
}

/// Finite Fourier expansion of a weight on the torus.
fn weight_fourier_terms(map: &MapModel, g: &Weight) -> Result<Vec<([i64; 2], Complex64)>> {
    match g {
        Weight::Const { re, im } => Ok(vec![([0, 0], Complex64::new(*re, *im))]),
        Weight::InvDetUnstable => {
            let split = map.linear_splitting()?;
            Ok(vec![([0, 0], Complex64::new(1.0 / split.mu_u.abs(), 0.0))])
        }
        Weight::TrigPoly { terms } => {
            let mut out = Vec::new();
            for t in terms {
                let half = 0.5 * t.amp;
                out.push((
                    t.k,
                    Complex64::new(half * t.phase.cos(), half * t.phase.sin()),
                ));
                out.push((
                    [-t.k[0], -t.k[1]],
                    Complex64::new(half * t.phase.cos(), -half * t.phase.sin()),
                ));
            }
            Ok(out)
        }
        _ => Err(CoreError::InvalidParameter(
            "weight has no finite Fourier expansion on the torus".into(),
        )),
    }
}

/// Full spectrum sorted by modulus descending.
pub fn eigenvalues(op: &OperatorMatrix) -> Result<Vec<Complex64>> {
    linalg::eigenvalues_dense(&op.matrix)
}

/// Configuration of the resonance extraction pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResonanceConfig {
    pub n_f: usize,
    pub refine_factor: usize,
    pub stability_tol: f64,
    pub filter_margin: f64,
    pub p: f64,
    pub q: f64,
    pub quad_mult: usize,
    /// Iterate count used when estimating the weight radius R.
    pub filter_orbit_m: u32,
}

impl Default for ResonanceConfig {
    fn default() -> Self {
        ResonanceConfig {
            n_f: 32,
            refine_factor: 2,
            stability_tol: 1e-6,
            filter_margin: 0.05,
            p: 1.0,
            q: -1.0,
            quad_mult: 8,
            filter_orbit_m: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Resonance {
    pub value_re: f64,
    pub value_im: f64,
    pub multiplicity: usize,
    pub stability: f64,
}

impl Resonance {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.value_re, self.value_im)
    }
}

/// Eigenvalues stable across a truncation refinement and above the
/// essential-radius filter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub accepted: Vec<Resonance>,
    pub filter: f64,
    pub margin: f64,
    pub truncations: (usize, usize),
    /// The weight radius R(T^{-1},g) or R(T,g) entering the filter.
    pub weight_radius: f64,
}

/// Estimate R(T^{−1},g) = lim (sup_x Σ_{T^m y = x} |g^{(m)}(y)|)^{1/m}
/// at the configured finite m on a grid of base points.
pub fn weight_radius_expanding(map: &MapModel, g: &Weight, m: u32, x_samples: usize) -> Result<f64> {
    let mut best: f64 = 0.0;
    for i in 0..x_samples {
        let x = i as f64 / x_samples as f64;
        let mut total = 0.0;
        let mut comp = 0.0; // Kahan
        for pre in map.inverse_branches(x, m)? {
            let term = birkhoff_weight(map, g, [pre.point, 0.0], m).norm();
            let y = term - comp;
            let t = total + y;
            comp = (t - total) - y;
            total = t;
        }
        best = best.max(total);
    }
    Ok(best.powf(1.0 / m as f64))
}

/// Estimate R(T,g) = lim (sup |g^{(m)}|)^{1/m} on a torus grid.
pub fn weight_radius_hyperbolic(map: &MapModel, g: &Weight, m: u32, samples: usize) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..samples {
        for j in 0..samples {
            let x = [i as f64 / samples as f64, j as f64 / samples as f64];
            best = best.max(birkhoff_weight(map, g, x, m).norm());
        }
    }
    best.powf(1.0 / m as f64)
}

/// The essential-radius filter value for the map/weight/exponent combination:
/// R(T^{−1},g)·λ_s^p for expanding maps, R(T,g)·max(λ_s^p, ν_u^q) for
/// hyperbolic ones.
pub fn essential_radius_filter(map: &MapModel, g: &Weight, p: f64, q: f64, m: u32) -> Result<f64> {
    let (lam_s, nu_u) = map.rates();
    if map.is_expanding() {
        let r = weight_radius_expanding(map, g, m.min(12), 64)?;
        Ok(r * lam_s.powf(p))
    } else {
        let r = weight_radius_hyperbolic(map, g, m, 64);
        Ok(r * lam_s.powf(p).max(nu_u.powf(q)))
    }
}

/// Run the two-truncation resonance pipeline.
pub fn resonances(
    map: &MapModel,
    g: &Weight,
    cones: Option<&ConeSystem>,
    cfg: &ResonanceConfig,
) -> Result<ResonanceReport> {
    let assemble = |n_f: usize| -> Result<OperatorMatrix> {
        if map.is_expanding() {
            assemble_expanding(map, g, n_f, cfg.quad_mult.max(8) * n_f)
        } else {
            let cones = cones.ok_or_else(|| {
                CoreError::InvalidParameter("hyperbolic resonances need a cone system".into())
            })?;
            assemble_hyperbolic(map, g, n_f, cfg.p, cfg.q, cones)
        }
    };
    let coarse = eigenvalues(&assemble(cfg.n_f)?)?;
    let fine_n = cfg.n_f * cfg.refine_factor.max(2);
    let fine = eigenvalues(&assemble(fine_n)?)?;

    let (lam_s, nu_u) = map.rates();
    let weight_radius = if map.is_expanding() {
        weight_radius_expanding(map, g, cfg.filter_orbit_m.min(12), 64)?
    } else {
        weight_radius_hyperbolic(map, g, cfg.filter_orbit_m, 64)
    };
    let filter = if map.is_expanding() {
        weight_radius * lam_s.powf(cfg.p)
    } else {
        weight_radius * lam_s.powf(cfg.p).max(nu_u.powf(cfg.q))
    };

    let threshold = filter + cfg.filter_margin;
    let mut survivors: Vec<(Complex64, f64)> = Vec::new();
    for &lambda in coarse.iter().filter(|l| l.norm() > threshold) {
        let dist = fine
            .iter()
            .map(|mu| (mu - lambda).norm())
            .fold(f64::INFINITY, f64::min);
        if dist <= cfg.stability_tol {
            survivors.push((lambda, dist));
        }
    }
    // cluster survivors within the stability tolerance
    let mut accepted: Vec<Resonance> = Vec::new();
    let mut used = vec![false; survivors.len()];
    for i in 0..survivors.len() {
        if used[i] {
            continue;
        }
        let mut cluster = vec![i];
        used[i] = true;
        for j in (i + 1)..survivors.len() {
            if !used[j] && (survivors[j].0 - survivors[i].0).norm() <= cfg.stability_tol {
                used[j] = true;
                cluster.push(j);
            }
        }
        let center = cluster
            .iter()
            .fold(Complex64::ZERO, |acc, &j| acc + survivors[j].0)
            / cluster.len() as f64;
        let stability = cluster
            .iter()
            .map(|&j| survivors[j].1)
            .fold(0.0f64, f64::max);
        accepted.push(Resonance {
            value_re: center.re,
            value_im: center.im,
            multiplicity: cluster.len(),
            stability,
        });
    }
    accepted.sort_by(|a, b| b.value().norm().total_cmp(&a.value().norm()));
    Ok(ResonanceReport {
        accepted,
        filter,
        margin: cfg.filter_margin,
        truncations: (cfg.n_f, fine_n),
        weight_radius,
    })
}

/// Which rule decides block linkage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkageRule {
    Expanding,
    Hyperbolic,
}

/// The combinatorial relation ℓ ↪ n (resp. (ℓ,τ) ↪ (n,σ)) separating the
/// bounded part L'₀ from the smoothing part L'₁.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkageRelation {
    pub rule: LinkageRule,
    pub t_plus: f64,
    pub t_minus: f64,
    /// Measured support-separation threshold N(𝒯), when computed.
    pub n_threshold: Option<u32>,
}

impl LinkageRelation {
    pub fn expanding(t_plus: f64) -> Self {
        LinkageRelation {
            rule: LinkageRule::Expanding,
            t_plus,
            t_minus: f64::NAN,
            n_threshold: None,
        }
    }

    pub fn hyperbolic(t_plus: f64, t_minus: f64) -> Self {
        LinkageRelation {
            rule: LinkageRule::Hyperbolic,
            t_plus,
            t_minus,
            n_threshold: None,
        }
    }

    /// ℓ ↪ n for the expanding rule: 2^n ≤ ‖𝒯‖₊ 2^{ℓ+4}.
    pub fn linked_iso(&self, ell: u32, n: u32) -> bool {
        debug_assert_eq!(self.rule, LinkageRule::Expanding);
        2f64.powi(n as i32) <= self.t_plus * 2f64.powi(ell as i32 + 4)
    }

    /// (ℓ,τ) ↪ (n,σ) for the hyperbolic rule; (−,+) is never linked.
    pub fn linked_aniso(&self, ell: u32, tau: Sign, n: u32, sigma: Sign) -> bool {
        debug_assert_eq!(self.rule, LinkageRule::Hyperbolic);
        match (tau, sigma) {
            (Sign::Plus, Sign::Plus) => {
                2f64.powi(n as i32) <= 2f64.powi(ell as i32 + 5) * self.t_plus
            }
            (Sign::Minus, Sign::Minus) => {
                2f64.powi(ell as i32 - 5) * self.t_minus <= 2f64.powi(n as i32)
            }
            (Sign::Plus, Sign::Minus) => {
                2f64.powi(n as i32) >= 2f64.powi(5) * self.t_minus
                    || 2f64.powi(ell as i32) >= 2f64.powi(5) * self.t_plus
            }
            (Sign::Minus, Sign::Plus) => false,
        }
    }

    /// Unified entry point mirroring both rules.
    pub fn linked(&self, ell: u32, n: u32, tau: Option<Sign>, sigma: Option<Sign>) -> Result<bool> {
        match self.rule {
            LinkageRule::Expanding => Ok(self.linked_iso(ell, n)),
            LinkageRule::Hyperbolic => {
                let (tau, sigma) = tau.zip(sigma).ok_or_else(|| {
                    CoreError::InvalidParameter("hyperbolic linkage needs cone labels".into())
                })?;
                Ok(self.linked_aniso(ell, tau, n, sigma))
            }
        }
    }
}

/// Evaluate L u = γ·(u ∘ 𝒯) for a 1D local branch on the grid of γ.
fn local_image_1d(branch: &Branch1, gamma: &GridFunction, u: &Spectrum) -> GridFunction {
    let n = gamma.grid_size();
    let vals: Vec<Complex64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let x = j as f64 / n as f64;
            let g = gamma.values()[j];
            if g == Complex64::ZERO {
                Complex64::ZERO
            } else {
                g * u.eval_at([branch.eval(x).rem_euclid(1.0), 0.0])
            }
        })
        .collect();
    GridFunction::from_values(1, n, vals).expect("shape")
}

/// Pieces ψ_n(D)(L u_ℓ) of the splitting, indexed by (output n, input ℓ).
pub struct SplitPieces {
    pub n_max: u32,
    pub labels: Vec<BlockLabel>,
    /// pieces[out][in]
    pub pieces: Vec<Vec<GridFunction>>,
}

/// The splitting L = L'₀ + L'₁ of a 1D local operator: L'₀ collects the
/// linked block pairs, L'₁ the rest. Since ψ̃_ℓ(D)u_ℓ = u_ℓ exactly, both
/// partial sums are assembled from the same pieces ψ_n(D)(L u_ℓ).
pub fn split_l0_l1_1d(
    branch: &Branch1,
    gamma: &GridFunction,
    u: &GridFunction,
    rel: &LinkageRelation,
) -> Result<(GridFunction, GridFunction)> {
    let pieces = split_pieces_1d(branch, gamma, u)?;
    let n_grid = u.grid_size();
    let mut l0 = GridFunction::zeros(1, n_grid);
    let mut l1 = GridFunction::zeros(1, n_grid);
    for (i_out, _) in pieces.labels.iter().enumerate() {
        for (i_in, _) in pieces.labels.iter().enumerate() {
            let piece = &pieces.pieces[i_out][i_in];
            let n = pieces.labels[i_out].index();
            let ell = pieces.labels[i_in].index();
            if rel.linked_iso(ell, n) {
                l0 = l0.add(piece);
            } else {
                l1 = l1.add(piece);
            }
        }
    }
    Ok((l0, l1))
}

pub fn split_pieces_1d(
    branch: &Branch1,
    gamma: &GridFunction,
    u: &GridFunction,
) -> Result<SplitPieces> {
    if u.dim() != 1 || gamma.dim() != 1 || u.grid_size() != gamma.grid_size() {
        return Err(CoreError::InvalidParameter(
            "1D splitting needs matching one-dimensional grids".into(),
        ));
    }
    let dec = fourier::dyadic_blocks(u, None)?;
    let labels = dec.labels.clone();
    let images: Vec<GridFunction> = dec
        .blocks
        .par_iter()
        .map(|u_ell| local_image_1d(branch, gamma, &u_ell.spectrum()))
        .collect();
    let pieces: Vec<Vec<GridFunction>> = labels
        .par_iter()
        .map(|out_label| {
            let n = out_label.index();
            images
                .iter()
                .map(|image| {
                    fourier::apply_multiplier(image, |xi| {
                        Complex64::new(fourier::psi_vec(n, xi), 0.0)
                    })
                })
                .collect()
        })
        .collect();
    Ok(SplitPieces {
        n_max: dec.n_max,
        labels,
        pieces,
    })
}

/// Anisotropic splitting on the torus: pre-blocks u_{ℓ,τ} from the input
/// cone pair, post-localization by ψ̌_{n,σ}(D).
pub fn split_l0_l1_2d(
    map: &MapModel,
    gamma: &GridFunction,
    u: &GridFunction,
    rel: &LinkageRelation,
    cones: &ConeSystem,
) -> Result<(GridFunction, GridFunction)> {
    let pieces = split_pieces_2d(map, gamma, u, cones)?;
    let n_grid = u.grid_size();
    let mut l0 = GridFunction::zeros(2, n_grid);
    let mut l1 = GridFunction::zeros(2, n_grid);
    for (i_out, out_label) in pieces.labels.iter().enumerate() {
        for (i_in, in_label) in pieces.labels.iter().enumerate() {
            let piece = &pieces.pieces[i_out][i_in];
            let linked = rel.linked_aniso(
                in_label.index(),
                in_label.sign().unwrap(),
                out_label.index(),
                out_label.sign().unwrap(),
            );
            if linked {
                l0 = l0.add(piece);
            } else {
                l1 = l1.add(piece);
            }
        }
    }
    Ok((l0, l1))
}

pub fn split_pieces_2d(
    map: &MapModel,
    gamma: &GridFunction,
    u: &GridFunction,
    cones: &ConeSystem,
) -> Result<SplitPieces> {
    if u.dim() != 2 || gamma.dim() != 2 || u.grid_size() != gamma.grid_size() {
        return Err(CoreError::InvalidParameter(
            "2D splitting needs matching torus grids".into(),
        ));
    }
    let dec = fourier::dyadic_blocks(u, Some(cones))?;
    let labels = dec.labels.clone();
    let n_grid = u.grid_size();
    let compose = |u_block: &GridFunction| -> GridFunction {
        match map {
            MapModel::LinearToral { matrix: a, .. } => {
                // exact lattice reindexing: (u∘A)^(A^{tr}k mod N) = û(k)
                let spec = u_block.spectrum();
                let mut coeffs = vec![Complex64::ZERO; n_grid * n_grid];
                let n_i = n_grid as i64;
                for (k, c) in spec.iter() {
                    let ak = [
                        a[0][0] * k[0] + a[1][0] * k[1],
                        a[0][1] * k[0] + a[1][1] * k[1],
                    ];
                    let bx = ak[0].rem_euclid(n_i) as usize;
                    let by = ak[1].rem_euclid(n_i) as usize;
                    coeffs[bx * n_grid + by] += c;
                }
                Spectrum::from_coeffs(2, n_grid, coeffs)
                    .expect("shape")
                    .synthesize()
            }
            _ => {
                let spec = u_block.spectrum();
                let vals: Vec<Complex64> = (0..n_grid * n_grid)
                    .into_par_iter()
                    .map(|idx| {
                        let x = [
                            (idx / n_grid) as f64 / n_grid as f64,
                            (idx % n_grid) as f64 / n_grid as f64,
                        ];
                        let t = map.apply(x);
                        spec.eval_at(t)
                    })
                    .collect();
                GridFunction::from_values(2, n_grid, vals).expect("shape")
            }
        }
    };
    let images: Vec<GridFunction> = dec
        .blocks
        .par_iter()
        .map(|u_ell| {
            let composed = compose(u_ell);
            GridFunction::from_values(
                2,
                n_grid,
                gamma
                    .values()
                    .iter()
                    .zip(composed.values())
                    .map(|(g, v)| g * v)
                    .collect(),
            )
            .expect("shape")
        })
        .collect();
    let pieces: Vec<Vec<GridFunction>> = labels
        .par_iter()
        .map(|out_label| {
            let n = out_label.index();
            let sigma = out_label.sign().unwrap();
            images
                .iter()
                .map(|image| {
                    fourier::apply_multiplier(image, |xi| {
                        Complex64::new(cones.psi_check_n_sigma(n, sigma, xi), 0.0)
                    })
                })
                .collect()
        })
        .collect();
    Ok(SplitPieces {
        n_max: dec.n_max,
        labels,
        pieces,
    })
}

/// Measured norm ratios ‖L'₀u‖/(‖γ‖_∞‖u‖) across a family of contraction
/// factors, with the log-log regression slope against ‖𝒯‖₊.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct L0BoundReport {
    pub per_factor: Vec<(f64, f64)>,
    /// None when the measurement is identically zero (e.g. γ ≡ 0).
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

pub fn measure_l0_bound(
    factors: &[f64],
    gamma: &GridFunction,
    p: f64,
    samples: &[GridFunction],
) -> Result<L0BoundReport> {
    if factors.len() < 3 {
        return Err(CoreError::InvalidParameter(
            "need at least 3 contraction factors".into(),
        ));
    }
    if samples.len() < 10 {
        return Err(CoreError::InvalidParameter(
            "need at least 10 sample functions".into(),
        ));
    }
    let gamma_sup = gamma.sup_norm();
    let mut per_factor = Vec::new();
    for &c in factors {
        let branch = Branch1::Scale { c };
        let rel = LinkageRelation::expanding(branch.sup_deriv());
        let mut worst: f64 = 0.0;
        for u in samples {
            let (l0, _) = split_l0_l1_1d(&branch, gamma, u, &rel)?;
            let num = fourier::holder_norm_star(&l0, p);
            let den = gamma_sup * fourier::holder_norm_star(u, p);
            if den > 0.0 {
                worst = worst.max(num / den);
            }
        }
        per_factor.push((c, worst));
    }
    if per_factor.iter().all(|(_, r)| *r == 0.0) {
        return Ok(L0BoundReport {
            per_factor,
            slope: None,
            intercept: None,
        });
    }
    let xs: Vec<f64> = per_factor.iter().map(|(c, _)| c.ln()).collect();
    let ys: Vec<f64> = per_factor.iter().map(|(_, r)| r.ln()).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(CoreError::DegenerateRegression(
            "vanishing ratio for some but not all contraction factors".into(),
        ));
    }
    let (slope, intercept) = linear_fit(&xs, &ys)?;
    Ok(L0BoundReport {
        per_factor,
        slope: Some(slope),
        intercept: Some(intercept),
    })
}

/// Least-squares line fit; errors on degenerate abscissae.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx < 1e-12 {
        return Err(CoreError::DegenerateRegression(
            "regression abscissae are degenerate".into(),
        ));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::Cone;
    use crate::dynamics::adapted_cones;
    use approx::assert_abs_diff_eq;

    fn doubling() -> MapModel {
        MapModel::expanding_circle(2, 0.0).unwrap()
    }

    fn cat() -> MapModel {
        MapModel::linear_toral([[2, 1], [1, 1]]).unwrap()
    }

    fn torus_bump(n: usize) -> GridFunction {
        GridFunction::from_fn(1, n, |x| {
            Complex64::new(
                fourier::smooth_bump(crate::dynamics::wrap_half(x[0] - 0.5), 0.05, 0.45),
                0.0,
            )
        })
    }

    #[test]
    fn expanding_matrix_structure_doubling() {
        let map = doubling();
        let op = assemble_expanding(&map, &Weight::constant(0.5), 8, 64).unwrap();
        let at = |k: i64, kp: i64| op.matrix[[(k + 8) as usize, (kp + 8) as usize]];
        assert!((at(0, 0) - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        for k in -8i64..=8 {
            for kp in -8i64..=8 {
                let expected = if kp == 2 * k { 1.0 } else { 0.0 };
                assert!(
                    (at(k, kp) - Complex64::new(expected, 0.0)).norm() < 1e-12,
                    "entry ({k},{kp})"
                );
            }
        }
        let zero = assemble_expanding(&map, &Weight::constant(0.0), 8, 64).unwrap();
        assert!(zero.matrix.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn expanding_quadrature_budget_enforced() {
        let map = doubling();
        assert!(matches!(
            assemble_expanding(&map, &Weight::ONE, 32, 100),
            Err(CoreError::QuadratureBudget(_))
        ));
    }

    #[test]
    fn leading_eigenvalues_doubling() {
        let map = doubling();
        let op = assemble_expanding(&map, &Weight::ONE, 16, 256).unwrap();
        let eigs = eigenvalues(&op).unwrap();
        assert!((eigs[0] - Complex64::new(2.0, 0.0)).norm() < 1e-10);

        let op = assemble_expanding(&map, &Weight::constant(0.5), 32, 256).unwrap();
        let eigs = eigenvalues(&op).unwrap();
        assert!((eigs[0] - Complex64::new(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn expanding_matrix_matches_pointwise_action() {
        let map = MapModel::expanding_circle(2, 0.02).unwrap();
        let g = Weight::InvDeriv;
        let n_f = 32usize;
        let op = assemble_expanding(&map, &g, n_f, 8 * n_f).unwrap();
        let u = fourier::random_band_limited(1, 256, n_f as f64 / 4.0, 0.8, 7);
        let spec = u.spectrum();
        let coeffs: Vec<Complex64> = op.index.iter().map(|&k| spec.coeff(k)).collect();
        let image = op.apply(&coeffs);
        // pointwise oracle: Σ_{Ty=x} g(y) u(y) on a sample of grid points
        for j in (0..64).map(|t| t * 4) {
            let x = j as f64 / 256.0;
            let mut oracle = Complex64::ZERO;
            for pre in map.inverse_branches(x, 1).unwrap() {
                oracle += g.eval(&map, [pre.point, 0.0]) * spec.eval_at([pre.point, 0.0]);
            }
            let mut from_matrix = Complex64::ZERO;
            for (i, &k) in op.index.iter().enumerate() {
                let phase = TAU * k[0] as f64 * x;
                from_matrix += image[i] * Complex64::new(phase.cos(), phase.sin());
            }
            assert!(
                (oracle - from_matrix).norm() < 1e-8,
                "mismatch at x = {x}: {:.3e}",
                (oracle - from_matrix).norm()
            );
        }
    }

    #[test]
    fn hyperbolic_matrix_structure_cat() {
        let map = cat();
        let cones = adapted_cones(&map, 8f64.to_radians(), 80f64.to_radians()).unwrap();
        let (p, q) = (1.0, -1.0);
        let op = assemble_hyperbolic(&map, &Weight::ONE, 4, p, q, &cones).unwrap();
        let side = 9i64;
        let pos = |k: [i64; 2]| ((k[0] + 4) * side + (k[1] + 4)) as usize;
        // row for k = 0 has its single entry at k' = 0 with value 1
        let zero_row = pos([0, 0]);
        for (j, &kp) in op.index.iter().enumerate() {
            let v = op.matrix[[zero_row, j]];
            if kp == [0, 0] {
                assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-14);
            } else {
                assert_eq!(v.norm(), 0.0);
            }
        }
        // entry (k,k') nonzero iff k = A^{tr}k', value w(k)/w(k')
        for (j, &kp) in op.index.iter().enumerate() {
            let ak = [2 * kp[0] + kp[1], kp[0] + kp[1]];
            for (i, &k) in op.index.iter().enumerate() {
                let v = op.matrix[[i, j]];
                if k == ak {
                    let expected = aniso_weight(k, p, q, &cones) / aniso_weight(kp, p, q, &cones);
                    assert_abs_diff_eq!(v.re, expected, epsilon = 1e-12);
                    assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-12);
                } else {
                    assert_eq!(v.norm(), 0.0, "spurious entry at ({k:?},{kp:?})");
                }
            }
        }
        let zero = assemble_hyperbolic(&map, &Weight::constant(0.0), 4, p, q, &cones).unwrap();
        assert!(zero.matrix.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn operator_linearity() {
        let map = doubling();
        let op = assemble_expanding(&map, &Weight::constant(0.5), 8, 64).unwrap();
        let d = op.dim();
        let u: Vec<Complex64> = (0..d)
            .map(|i| Complex64::new(i as f64 * 0.1, -(i as f64) * 0.05))
            .collect();
        let v: Vec<Complex64> = (0..d).map(|i| Complex64::new(1.0 / (1.0 + i as f64), 0.2)).collect();
        let alpha = Complex64::new(0.3, -1.1);
        let lhs = op.apply(
            &u.iter()
                .zip(&v)
                .map(|(a, b)| alpha * a + b)
                .collect::<Vec<_>>(),
        );
        let mu = op.apply(&u);
        let mv = op.apply(&v);
        for i in 0..d {
            assert!((lhs[i] - (alpha * mu[i] + mv[i])).norm() < 1e-12);
        }
    }

    #[test]
    fn linkage_rules() {
        let rel = LinkageRelation::expanding(0.5);
        for n in 0..=6u32 {
            assert!(rel.linked_iso(3, n), "n = {n} should be linked");
        }
        assert!(!rel.linked_iso(3, 7));

        let rel = LinkageRelation::hyperbolic(0.4, 2.0);
        assert!(!rel.linked_aniso(3, Sign::Minus, 9, Sign::Plus));
        assert!(!rel.linked_aniso(0, Sign::Minus, 0, Sign::Plus));
        // (−,−) with ‖T‖₋ = 2, ℓ = 4: 2^{−1}·2 ≤ 2^n always
        for n in 0..=9u32 {
            assert!(rel.linked_aniso(4, Sign::Minus, n, Sign::Minus));
        }
        // unified wrapper demands labels for the hyperbolic rule
        assert!(rel.linked(1, 1, None, None).is_err());
        assert_eq!(rel.linked(1, 1, Some(Sign::Plus), Some(Sign::Plus)).unwrap(), true);
    }

    #[test]
    fn resonances_doubling_half_weight() {
        let map = doubling();
        let cfg = ResonanceConfig {
            n_f: 16,
            p: 2.0,
            q: 0.0,
            ..Default::default()
        };
        let report = resonances(&map, &Weight::constant(0.5), None, &cfg).unwrap();
        assert_abs_diff_eq!(report.filter, 0.25, epsilon = 1e-9);
        assert_eq!(report.accepted.len(), 1);
        assert!((report.accepted[0].value() - Complex64::new(1.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn resonances_cat_map() {
        let map = cat();
        let cones = adapted_cones(&map, 8f64.to_radians(), 80f64.to_radians()).unwrap();
        let cfg = ResonanceConfig {
            n_f: 4,
            p: 1.0,
            q: -1.0,
            ..Default::default()
        };
        let report = resonances(&map, &Weight::ONE, Some(&cones), &cfg).unwrap();
        let lam = (3.0 + 5f64.sqrt()) / 2.0;
        assert_abs_diff_eq!(report.filter, 1.0 / lam, epsilon = 1e-9);
        assert_eq!(report.accepted.len(), 1);
        assert!((report.accepted[0].value() - Complex64::new(1.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn filter_soundness_across_refinements() {
        // the accepted set above the filter is the same whether the pipeline
        // anchors at N_f or 2N_f, and no accepted eigenvalue sits in the
        // annulus just above the filter
        let map = doubling();
        let g = Weight::constant(0.5);
        let mut sets = Vec::new();
        for n_f in [8usize, 16] {
            let cfg = ResonanceConfig {
                n_f,
                p: 2.0,
                q: 0.0,
                ..Default::default()
            };
            let rep = resonances(&map, &g, None, &cfg).unwrap();
            for r in &rep.accepted {
                let modulus = r.value().norm();
                assert!(
                    !(modulus > rep.filter + rep.margin && modulus < rep.filter + 2.0 * rep.margin),
                    "stable eigenvalue in the filter annulus at N_f = {n_f}"
                );
            }
            sets.push(rep.accepted);
        }
        assert_eq!(sets[0].len(), sets[1].len());
        for (a, b) in sets[0].iter().zip(&sets[1]) {
            assert!((a.value() - b.value()).norm() < 1e-8);
        }
    }

    #[test]
    fn resonances_zero_weight_empty() {
        let map = doubling();
        let cfg = ResonanceConfig {
            n_f: 8,
            p: 1.0,
            ..Default::default()
        };
        let report = resonances(&map, &Weight::constant(0.0), None, &cfg).unwrap();
        assert!(report.accepted.is_empty());
    }

    #[test]
    fn split_zero_gamma_vanishes() {
        let branch = Branch1::Scale { c: 0.5 };
        let gamma = GridFunction::zeros(1, 128);
        let u = fourier::random_band_limited(1, 128, 16.0, 0.5, 3);
        let rel = LinkageRelation::expanding(0.5);
        let (l0, l1) = split_l0_l1_1d(&branch, &gamma, &u, &rel).unwrap();
        assert_eq!(l0.sup_norm(), 0.0);
        assert_eq!(l1.sup_norm(), 0.0);
    }

    #[test]
    fn split_all_linked_puts_everything_in_l0() {
        let branch = Branch1::Scale { c: 0.5 };
        let gamma = torus_bump(128);
        let u = GridFunction::mode(1, 128, [8, 0]);
        // huge ‖T‖₊ links every pair
        let rel = LinkageRelation::expanding(1024.0);
        let (l0, l1) = split_l0_l1_1d(&branch, &gamma, &u, &rel).unwrap();
        let lu = local_image_1d(&branch, &gamma, &u.spectrum());
        assert!(l1.sup_norm() <= 1e-8 * lu.sup_norm());
        assert!(l0.sup_norm() > 0.0);
    }

    #[test]
    fn splitting_identity() {
        let branch = Branch1::Scale { c: 0.5 };
        let n_grid = 256usize;
        let gamma = torus_bump(n_grid);
        let u = fourier::random_band_limited(1, n_grid, 16.0, 0.4, 11);
        let rel = LinkageRelation::expanding(0.5);
        let (l0, l1) = split_l0_l1_1d(&branch, &gamma, &u, &rel).unwrap();
        let lu = local_image_1d(&branch, &gamma, &u.spectrum());
        let err = l0.add(&l1).sub(&lu).sup_norm();
        assert!(
            err < 1e-8 * u.sup_norm().max(1.0),
            "splitting defect {err}"
        );
    }

    #[test]
    fn hyperbolic_block_vanishing() {
        // ψ_{m,υ}(D)(L_i u)_{(n,σ)} = 0 for |n−m| > 5 or (υ,σ) = (+,−)
        let map = cat();
        let cones = adapted_cones(&map, 8f64.to_radians(), 80f64.to_radians()).unwrap();
        let n_grid = 64usize;
        let gamma = GridFunction::from_fn(2, n_grid, |x| {
            Complex64::new(
                fourier::smooth_bump(crate::dynamics::wrap_half(x[0] - 0.5), 0.1, 0.3)
                    * fourier::smooth_bump(crate::dynamics::wrap_half(x[1] - 0.5), 0.1, 0.3),
                0.0,
            )
        });
        let u = fourier::random_band_limited(2, n_grid, 8.0, 0.4, 5);
        let pieces = split_pieces_2d(&map, &gamma, &u, &cones).unwrap();
        for (i_out, out_label) in pieces.labels.iter().enumerate() {
            let n = out_label.index();
            let sigma = out_label.sign().unwrap();
            // blockwise image (L_i u)_{(n,σ)} summed over inputs
            let mut total = GridFunction::zeros(2, n_grid);
            for piece in &pieces.pieces[i_out] {
                total = total.add(piece);
            }
            for m in 0..=pieces.n_max {
                for upsilon in Sign::BOTH {
                    let filtered = fourier::apply_multiplier(&total, |xi| {
                        Complex64::new(cones.psi_n_sigma(m, upsilon, xi), 0.0)
                    });
                    // the 0-blocks are χ/2 with no angular factor, so the
                    // label clause only bites for m, n ≥ 1
                    let should_vanish = (m as i32 - n as i32).abs() > 5
                        || (m >= 1 && n >= 1 && upsilon == Sign::Plus && sigma == Sign::Minus);
                    if should_vanish {
                        assert!(
                            filtered.sup_norm() < 1e-10,
                            "block ({m},{:?}) of output ({n},{:?}) should vanish, got {}",
                            upsilon,
                            sigma,
                            filtered.sup_norm()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn l0_bound_slope_tracks_exponent() {
        let n_grid = 256usize;
        let gamma = torus_bump(n_grid);
        let samples: Vec<GridFunction> = (0..10)
            .map(|s| fourier::random_band_limited(1, n_grid, 64.0, 0.3, 100 + s))
            .collect();
        let report =
            measure_l0_bound(&[0.5, 1.0 / 3.0, 0.25], &gamma, 1.5, &samples).unwrap();
        let slope = report.slope.unwrap();
        assert!(
            (slope - 1.5).abs() < 0.15,
            "slope {slope} should be near p = 1.5"
        );

        let zeros = measure_l0_bound(
            &[0.5, 1.0 / 3.0, 0.25],
            &GridFunction::zeros(1, n_grid),
            1.5,
            &samples,
        )
        .unwrap();
        assert!(zeros.per_factor.iter().all(|(_, r)| *r == 0.0));
        assert!(zeros.slope.is_none());

        let p0 = measure_l0_bound(&[0.5, 1.0 / 3.0, 0.25], &gamma, 0.0, &samples).unwrap();
        let slope0 = p0.slope.unwrap();
        assert!(slope0.abs() < 0.15, "slope {slope0} should be near 0");
        assert!(p0.per_factor.iter().all(|(_, r)| *r < 5.0));
    }

    #[test]
    fn cone_validation_for_identity_setup() {
        // Θ'₊ ⊇ complement of Θ₋ lets the identity pass the two-pair check
        let sys = ConeSystem::new(
            Cone::new(0.0, 0.3).unwrap(),
            Cone::new(std::f64::consts::FRAC_PI_2, 1.2).unwrap(),
        )
        .unwrap()
        .with_prime(
            Cone::new(0.0, std::f64::consts::FRAC_PI_2 - 1.1).unwrap(),
            Cone::new(std::f64::consts::FRAC_PI_2, 0.3).unwrap(),
        )
        .unwrap();
        let rel = LinkageRelation::hyperbolic(1.0, 1.0);
        assert!(rel.linked_aniso(0, Sign::Plus, 0, Sign::Plus));
        drop(sys);
    }
}
