//! Paley-Littlewood dyadic multipliers and the C^p_* / C^{p,q}_* norms.
//!
//! The bump χ is fixed to the exp-based profile
//! χ(s) = f(2−s) / (f(2−s) + f(s−1)) with f(t) = exp(−1/t) for t > 0,
//! which is exactly 1 for s ≤ 1 and exactly 0 for s ≥ 2, so the dyadic
//! supports are exact in floating point, not just up to rounding.

use num_complex::Complex64;

use crate::cones::{ConeSystem, Sign};
use crate::error::{CoreError, Result};
use crate::grid::GridFunction;

/// f(t) = exp(−1/t^s) for t > 0, 0 otherwise. Flat at 0 to all orders.
pub(crate) fn smooth_exp(t: f64, exponent: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-t.powf(-exponent)).exp()
    }
}

/// Smooth step from the set {a = 0} (value 0) to the set {b = 0} (value 1):
/// f(a) / (f(a) + f(b)). The two distance arguments may not vanish together.
pub(crate) fn smooth_step_pair(a: f64, b: f64, exponent: f64) -> f64 {
    let fa = smooth_exp(a, exponent);
    let fb = smooth_exp(b, exponent);
    if fa == 0.0 {
        0.0
    } else if fb == 0.0 {
        1.0
    } else {
        fa / (fa + fb)
    }
}

/// The radial bump χ: 1 on [0,1], 0 on [2,∞), monotone in between.
pub fn chi(s: f64) -> f64 {
    smooth_step_pair(2.0 - s, s - 1.0, 1.0)
}

/// Smooth plateau bump: 1 for |t| ≤ inner, 0 for |t| ≥ outer.
pub fn smooth_bump(t: f64, inner: f64, outer: f64) -> f64 {
    let a = (outer - t.abs()).max(0.0);
    let b = (t.abs() - inner).max(0.0);
    smooth_step_pair(a, b, 1.0)
}

/// Deterministic random band-limited function: independent complex Gaussian
/// coefficients at 0 < ‖k‖ ≤ max_freq damped by (1+‖k‖)^{−decay}.
pub fn random_band_limited(
    dim: usize,
    n_grid: usize,
    max_freq: f64,
    decay: f64,
    seed: u64,
) -> GridFunction {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let zero = GridFunction::zeros(dim, n_grid);
    let spectrum = zero.spectrum();
    let mut coeffs = Vec::with_capacity(spectrum.coeffs().len());
    for (k, _) in spectrum.iter() {
        let norm = ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
        if norm > 0.0 && norm <= max_freq {
            let damp = (1.0 + norm).powf(-decay);
            let re: f64 = rng.gen_range(-1.0..1.0);
            let im: f64 = rng.gen_range(-1.0..1.0);
            coeffs.push(Complex64::new(re * damp, im * damp));
        } else {
            coeffs.push(Complex64::ZERO);
        }
    }
    crate::grid::Spectrum::from_coeffs(dim, n_grid, coeffs)
        .expect("shape")
        .synthesize()
}

/// ψ_n as a function of the radius ‖ξ‖.
pub fn psi_radial(n: u32, r: f64) -> f64 {
    if n == 0 {
        chi(r)
    } else {
        chi(r / 2f64.powi(n as i32)) - chi(r / 2f64.powi(n as i32 - 1))
    }
}

/// ψ_n(ξ) on frequency vectors.
pub fn psi_vec(n: u32, xi: [f64; 2]) -> f64 {
    psi_radial(n, (xi[0] * xi[0] + xi[1] * xi[1]).sqrt())
}

/// Widened profile ψ̃_ℓ; equals 1 on supp(ψ_ℓ) and vanishes outside
/// the annulus 2^{ℓ−2} ≤ ‖ξ‖ ≤ 2^{ℓ+2} (for ℓ ≥ 1).
pub fn psi_tilde_radial(ell: u32, r: f64) -> f64 {
    if ell == 0 {
        chi(r / 2.0)
    } else {
        chi(r / 2f64.powi(ell as i32 + 1)) - chi(r / 2f64.powi(ell as i32 - 2))
    }
}

pub fn psi_tilde_vec(ell: u32, xi: [f64; 2]) -> f64 {
    psi_tilde_radial(ell, (xi[0] * xi[0] + xi[1] * xi[1]).sqrt())
}

/// Label of a dyadic block: plain index, or index with a cone sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockLabel {
    Iso(u32),
    Aniso(u32, Sign),
}

impl BlockLabel {
    pub fn index(&self) -> u32 {
        match self {
            BlockLabel::Iso(n) | BlockLabel::Aniso(n, _) => *n,
        }
    }

    pub fn sign(&self) -> Option<Sign> {
        match self {
            BlockLabel::Iso(_) => None,
            BlockLabel::Aniso(_, s) => Some(*s),
        }
    }
}

/// A function cut into dyadic frequency blocks u_n (or u_{n,σ}).
#[derive(Debug, Clone)]
pub struct DyadicDecomposition {
    pub n_max: u32,
    pub labels: Vec<BlockLabel>,
    pub blocks: Vec<GridFunction>,
}

impl DyadicDecomposition {
    pub fn block(&self, label: BlockLabel) -> Option<&GridFunction> {
        self.labels
            .iter()
            .position(|l| *l == label)
            .map(|i| &self.blocks[i])
    }

    /// Σ of all blocks; equals the original function on the reliable band.
    pub fn reconstruct(&self) -> GridFunction {
        let mut acc = GridFunction::zeros(self.blocks[0].dim(), self.blocks[0].grid_size());
        for b in &self.blocks {
            acc = acc.add(b);
        }
        acc
    }
}

fn warn_if_truncated(u: &GridFunction, op: &str) {
    let ratio = u.spectrum().high_band_mass_ratio();
    if ratio > 1e-8 {
        log::warn!(
            "{op}: {:.3e} of the frequency mass lies above the reliable dyadic band; \
             truncation unreliable",
            ratio
        );
    }
}

/// Apply a frequency multiplier a(D) to u.
pub fn apply_multiplier(u: &GridFunction, a: impl Fn([f64; 2]) -> Complex64) -> GridFunction {
    u.spectrum().apply_multiplier(a)
}

/// Cut u into dyadic blocks ψ_n(D)u for n ≤ n_max, anisotropic when a cone
/// system is supplied (2D only).
pub fn dyadic_blocks(u: &GridFunction, cones: Option<&ConeSystem>) -> Result<DyadicDecomposition> {
    warn_if_truncated(u, "dyadic_blocks");
    let n_max = u.n_max();
    let spectrum = u.spectrum();
    let mut labels = Vec::new();
    let mut blocks = Vec::new();
    match cones {
        None => {
            for n in 0..=n_max {
                labels.push(BlockLabel::Iso(n));
                blocks.push(
                    spectrum.apply_multiplier(|xi| Complex64::new(psi_vec(n, xi), 0.0)),
                );
            }
        }
        Some(sys) => {
            if u.dim() != 2 {
                return Err(CoreError::InvalidParameter(
                    "anisotropic blocks require dimension 2".into(),
                ));
            }
            for n in 0..=n_max {
                for sigma in Sign::BOTH {
                    labels.push(BlockLabel::Aniso(n, sigma));
                    blocks.push(spectrum.apply_multiplier(|xi| {
                        Complex64::new(sys.psi_n_sigma(n, sigma, xi), 0.0)
                    }));
                }
            }
        }
    }
    Ok(DyadicDecomposition {
        n_max,
        labels,
        blocks,
    })
}

/// ‖u‖_{C^p_*} = sup_{n ≤ n_max} 2^{pn} ‖ψ_n(D)u‖_∞ on the grid.
pub fn holder_norm_star(u: &GridFunction, p: f64) -> f64 {
    warn_if_truncated(u, "holder_norm_star");
    let spectrum = u.spectrum();
    let mut best: f64 = 0.0;
    for n in 0..=u.n_max() {
        let block = spectrum.apply_multiplier(|xi| Complex64::new(psi_vec(n, xi), 0.0));
        best = best.max(2f64.powf(p * n as f64) * block.sup_norm());
    }
    best
}

/// Anisotropic norm: max over σ of sup_n 2^{c(σ)n} ‖u_{n,σ}‖_∞ with
/// c(+) = p, c(−) = q.
pub fn aniso_norm(u: &GridFunction, p: f64, q: f64, cones: &ConeSystem) -> Result<f64> {
    if u.dim() != 2 {
        return Err(CoreError::InvalidParameter(
            "anisotropic norm requires dimension 2".into(),
        ));
    }
    warn_if_truncated(u, "aniso_norm");
    let spectrum = u.spectrum();
    let mut best: f64 = 0.0;
    for n in 0..=u.n_max() {
        for sigma in Sign::BOTH {
            let block = spectrum
                .apply_multiplier(|xi| Complex64::new(cones.psi_n_sigma(n, sigma, xi), 0.0));
            let weight = match sigma {
                Sign::Plus => 2f64.powf(p * n as f64),
                Sign::Minus => 2f64.powf(q * n as f64),
            };
            best = best.max(weight * block.sup_norm());
        }
    }
    Ok(best)
}

/// Classical Hölder norm by finite differences: max of sup|u| and the largest
/// quotient |u(x)−u(y)| / d(x,y)^p over grid pairs with torus distance ≤ 1/4.
pub fn classical_holder_norm(u: &GridFunction, p: f64) -> Result<f64> {
    if !(0.0 < p && p < 1.0) {
        return Err(CoreError::InvalidParameter(format!(
            "classical Hölder norm needs 0 < p < 1, got {p}"
        )));
    }
    let n = u.grid_size();
    let vals = u.values();
    let mut best = u.sup_norm();
    let axis_dist = |d: usize| -> f64 {
        let frac = d as f64 / n as f64;
        frac.min(1.0 - frac)
    };
    match u.dim() {
        1 => {
            let max_off = n / 4;
            for off in 1..=max_off {
                let dist = axis_dist(off);
                if dist > 0.25 {
                    continue;
                }
                let w = dist.powf(p);
                for j in 0..n {
                    let q = (vals[(j + off) % n] - vals[j]).norm() / w;
                    if q > best {
                        best = q;
                    }
                }
            }
        }
        _ => {
            let max_off = n / 4;
            for ox in 0..=max_off {
                for oy in 0..=max_off {
                    if ox == 0 && oy == 0 {
                        continue;
                    }
                    let dist = (axis_dist(ox).powi(2) + axis_dist(oy).powi(2)).sqrt();
                    if dist > 0.25 {
                        continue;
                    }
                    let w = dist.powf(p);
                    for jx in 0..n {
                        for jy in 0..n {
                            let a = vals[jx * n + jy];
                            let b = vals[((jx + ox) % n) * n + (jy + oy) % n];
                            let q = (b - a).norm() / w;
                            if q > best {
                                best = q;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(best)
}

/// Discrete L¹ norm of the inverse transform of ψ_n on the grid; the paper's
/// uniform-mass statement says these stay comparable across n.
pub fn psi_kernel_l1(dim: usize, n_grid: usize, n: u32) -> f64 {
    let delta = GridFunction::from_fn(dim, n_grid, |x| {
        if x == [0.0, 0.0] {
            Complex64::new(n_grid.pow(dim as u32) as f64, 0.0)
        } else {
            Complex64::ZERO
        }
    });
    apply_multiplier(&delta, |xi| Complex64::new(psi_vec(n, xi), 0.0)).l1_norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::Cone;
    use approx::assert_abs_diff_eq;

    #[test]
    fn chi_pinned_values() {
        assert_eq!(chi(0.5), 1.0);
        assert_eq!(chi(1.0), 1.0);
        assert_eq!(chi(3.0), 0.0);
        assert_eq!(chi(2.0), 0.0);
        assert_abs_diff_eq!(chi(1.5), 0.5, epsilon = 1e-15);
        // monotone nonincreasing on [1,2]
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = chi(1.0 + i as f64 / 100.0);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn chi_derivatives_finite() {
        // central finite differences of orders 1..6 stay bounded everywhere
        let h = 1e-2;
        for i in 0..=300 {
            let s = i as f64 / 100.0;
            let mut stencil: Vec<f64> = (-3..=3).map(|j| chi(s + j as f64 * h)).collect();
            for order in 1..=6 {
                stencil = stencil.windows(2).map(|w| (w[1] - w[0]) / h).collect();
                let d = stencil.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(d.is_finite(), "order {order} derivative blew up at s={s}");
            }
        }
    }

    #[test]
    fn psi_pinned_values() {
        assert_eq!(psi_radial(1, 1.0), 0.0); // χ(1/2) − χ(1) = 0
        assert_eq!(psi_radial(2, 4.0), 1.0); // χ(1) − χ(2) = 1
        assert_abs_diff_eq!(psi_radial(2, 3.0), 0.5, epsilon = 1e-15); // χ(3/4) − χ(3/2)
    }

    #[test]
    fn psi_support_exact() {
        for n in 1..=8u32 {
            let lo = 2f64.powi(n as i32 - 1);
            let hi = 2f64.powi(n as i32 + 1);
            assert_eq!(psi_radial(n, lo * 0.999), 0.0);
            assert_eq!(psi_radial(n, hi * 1.001), 0.0);
            assert!(psi_radial(n, (lo * hi).sqrt()) > 0.0);
        }
    }

    #[test]
    fn psi_tilde_pinned_values() {
        // 1 on supp ψ_ℓ
        for r in [2.1f64, 3.0, 7.9] {
            assert!(psi_radial(2, r) > 0.0);
            assert_eq!(psi_tilde_radial(2, r), 1.0);
        }
        assert_eq!(psi_tilde_radial(0, 1.0), 1.0);
        assert_eq!(psi_tilde_radial(3, 64.0), 0.0); // support ends at 2^{ℓ+2} = 32
    }

    #[test]
    fn partition_of_unity_on_grid() {
        let n_grid = 256usize;
        let n_max = 6u32; // ⌊log2 128⌋ − 1
        for j in 0..n_grid {
            let k = if j <= n_grid / 2 {
                j as f64
            } else {
                j as f64 - n_grid as f64
            };
            if k.abs() > 2f64.powi(n_max as i32 - 1) {
                continue;
            }
            let total: f64 = (0..=n_max).map(|n| psi_radial(n, k.abs())).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn almost_orthogonality_exact_zero() {
        // ψ_m · ψ_n ≡ 0 on the grid once |m − n| ≥ 5 (it already holds from 2)
        for m in 0..=8u32 {
            for n in 0..=8u32 {
                if (m as i32 - n as i32).abs() < 5 {
                    continue;
                }
                for j in 0..2048 {
                    let r = j as f64 / 4.0;
                    assert_eq!(psi_radial(m, r) * psi_radial(n, r), 0.0);
                }
            }
        }
    }

    #[test]
    fn multiplier_identity_and_band_selection() {
        let u = GridFunction::from_fn(1, 64, |x| {
            Complex64::new((2.0 * std::f64::consts::PI * 3.0 * x[0]).cos(), 0.1)
        });
        let same = apply_multiplier(&u, |_| Complex64::new(1.0, 0.0));
        let err = u
            .values()
            .iter()
            .zip(same.values())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12);

        let e4 = GridFunction::mode(1, 64, [4, 0]);
        let filtered = apply_multiplier(&e4, |xi| Complex64::new(psi_vec(2, xi), 0.0));
        let err = e4
            .values()
            .iter()
            .zip(filtered.values())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "ψ_2 is 1 at ‖ξ‖ = 4");

        let e1 = GridFunction::mode(1, 64, [1, 0]);
        let killed = apply_multiplier(&e1, |xi| Complex64::new(psi_vec(2, xi), 0.0));
        assert!(killed.sup_norm() < 1e-13, "mode 1 is outside supp ψ_2");
    }

    #[test]
    fn blocks_of_pure_modes() {
        let n_grid = 256usize;
        let u = GridFunction::mode(1, n_grid, [32, 0]); // ‖k‖ = 2^5
        let dec = dyadic_blocks(&u, None).unwrap();
        for (label, block) in dec.labels.iter().zip(&dec.blocks) {
            let norm = block.sup_norm();
            if label.index() == 5 {
                assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
            } else {
                assert!(norm < 1e-12, "block {:?} should vanish", label);
            }
        }

        let zero = GridFunction::zeros(1, n_grid);
        for b in dyadic_blocks(&zero, None).unwrap().blocks {
            assert_eq!(b.sup_norm(), 0.0);
        }

        let two = GridFunction::mode(1, n_grid, [2, 0]).add(&GridFunction::mode(1, n_grid, [32, 0]));
        let dec = dyadic_blocks(&two, None).unwrap();
        for (label, block) in dec.labels.iter().zip(&dec.blocks) {
            match label.index() {
                1 | 5 => assert_abs_diff_eq!(block.sup_norm(), 1.0, epsilon = 1e-12),
                _ => assert!(block.sup_norm() < 1e-12),
            }
        }
    }

    #[test]
    fn reconstruction_within_band() {
        let n_grid = 256usize;
        let u = GridFunction::from_fn(1, n_grid, |x| {
            let t = 2.0 * std::f64::consts::PI * x[0];
            Complex64::new((3.0 * t).cos() + 0.5 * (17.0 * t).sin(), (9.0 * t).cos())
        });
        let dec = dyadic_blocks(&u, None).unwrap();
        let err = dec.reconstruct().sub(&u).sup_norm();
        assert!(err < 1e-10, "reconstruction error {err}");
    }

    #[test]
    fn star_norm_on_modes_and_homogeneity() {
        let n_grid = 256usize;
        for n in 1..=5u32 {
            let u = GridFunction::mode(1, n_grid, [2i64.pow(n), 0]);
            let norm = holder_norm_star(&u, 1.5);
            assert_abs_diff_eq!(norm, 2f64.powf(1.5 * n as f64), epsilon = 1e-9);
        }
        let v = GridFunction::from_fn(1, n_grid, |x| Complex64::new(x[0], -x[0] * x[0]));
        let c = Complex64::new(-2.5, 1.0);
        assert_abs_diff_eq!(
            holder_norm_star(&v.scale(c), 0.7),
            c.norm() * holder_norm_star(&v, 0.7),
            epsilon = 1e-9
        );
        assert_eq!(holder_norm_star(&GridFunction::zeros(1, n_grid), 1.0), 0.0);
    }

    #[test]
    fn aniso_norm_on_modes() {
        let sys = ConeSystem::new(
            Cone::new(0.0, 0.35).unwrap(),
            Cone::new(std::f64::consts::FRAC_PI_2, 0.35).unwrap(),
        )
        .unwrap();
        let n_grid = 64usize;
        let horiz = GridFunction::mode(2, n_grid, [16, 0]);
        let norm = aniso_norm(&horiz, 1.0, -1.0, &sys).unwrap();
        assert_abs_diff_eq!(norm, 16.0, epsilon = 1e-9);

        let vert = GridFunction::mode(2, n_grid, [0, 16]);
        let norm = aniso_norm(&vert, 1.0, -1.0, &sys).unwrap();
        assert_abs_diff_eq!(norm, 0.0625, epsilon = 1e-9);

        assert_eq!(
            aniso_norm(&GridFunction::zeros(2, n_grid), 1.0, -1.0, &sys).unwrap(),
            0.0
        );
    }

    #[test]
    fn classical_norm_basic() {
        let n_grid = 256usize;
        let one = GridFunction::from_fn(1, n_grid, |_| Complex64::new(1.0, 0.0));
        assert_abs_diff_eq!(classical_holder_norm(&one, 0.5).unwrap(), 1.0, epsilon = 1e-14);

        let v = GridFunction::from_fn(1, n_grid, |x| {
            Complex64::new((2.0 * std::f64::consts::PI * 3.0 * x[0]).sin(), 0.0)
        });
        let c = Complex64::new(0.0, 3.0);
        assert_abs_diff_eq!(
            classical_holder_norm(&v.scale(c), 0.3).unwrap(),
            3.0 * classical_holder_norm(&v, 0.3).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn classical_and_star_comparable_on_mode_eight() {
        let u = GridFunction::mode(1, 256, [8, 0]);
        let star = holder_norm_star(&u, 0.5);
        let classical = classical_holder_norm(&u, 0.5).unwrap();
        let ratio = classical / star;
        assert!(
            (0.25..=4.0).contains(&ratio),
            "equivalence ratio {ratio} outside factor 4"
        );
    }

    #[test]
    fn psi_kernels_have_uniform_l1_mass() {
        let n_grid = 2048usize;
        let n_max = 9u32;
        let masses: Vec<f64> = (0..=n_max).map(|n| psi_kernel_l1(1, n_grid, n)).collect();
        let max = masses.iter().fold(0.0f64, |a, &b| a.max(b));
        let min = masses.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        assert!(
            max / min < 20.0,
            "ℓ¹ masses spread too wide: {masses:?}"
        );
    }
}
