//! Frequency-cone systems for the anisotropic norms.
//!
//! A cone is a closed angular sector in the frequency plane, symmetric under
//! ξ ↦ −ξ, so directions are tracked modulo π. The system carries a stable
//! pair (Θ₊, Θ₋), an optional second pair (Θ'₊, Θ'₋) for the two-pair
//! variant of the cone-hyperbolicity condition, and derives the widened
//! (tilde) and output-side (check) transition profiles used by the operator
//! splitting.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::fourier::{chi, smooth_step_pair};

const PI: f64 = std::f64::consts::PI;

/// Closed angular sector {θ : dist_π(θ, center) ≤ half_width}, ξ ↦ −ξ symmetric.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Cone {
    /// Center direction in radians (taken modulo π).
    pub center: f64,
    /// Half-width in radians, in (0, π/2).
    pub half_width: f64,
}

/// Distance of two directions modulo π.
pub fn dist_mod_pi(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

impl Cone {
    pub fn new(center: f64, half_width: f64) -> Result<Self> {
        if half_width <= 0.0 || half_width >= PI / 2.0 {
            return Err(CoreError::InvalidParameter(format!(
                "cone half-width {half_width} outside (0, π/2)"
            )));
        }
        Ok(Cone {
            center: center.rem_euclid(PI),
            half_width,
        })
    }

    /// Angular distance from direction θ to the sector (0 inside).
    pub fn angular_dist(&self, theta: f64) -> f64 {
        (dist_mod_pi(theta, self.center) - self.half_width).max(0.0)
    }

    pub fn contains(&self, theta: f64) -> bool {
        dist_mod_pi(theta, self.center) <= self.half_width
    }

    pub fn contains_interior(&self, theta: f64) -> bool {
        dist_mod_pi(theta, self.center) < self.half_width
    }

    /// The sector shrunk to `factor` of its half-width.
    pub fn shrunk(&self, factor: f64) -> Cone {
        Cone {
            center: self.center,
            half_width: self.half_width * factor,
        }
    }

    /// The closure of the complement, itself a sector mod π.
    pub fn complement(&self) -> Cone {
        Cone {
            center: (self.center + PI / 2.0).rem_euclid(PI),
            half_width: PI / 2.0 - self.half_width,
        }
    }
}

/// A pair (or two pairs) of frequency cones plus the smooth sphere functions
/// φ_± built from them.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConeSystem {
    pub plus: Cone,
    pub minus: Cone,
    /// Exponent s of the transition profile exp(−1/t^s); larger is flatter.
    pub profile_exponent: f64,
    /// Optional second pair (Θ'₊, Θ'₋) for the two-pair variant.
    pub prime: Option<(Cone, Cone)>,
    /// Shrink factor in (0,1) producing the tilde cones inside Θ_±.
    pub tilde_shrink: f64,
    /// Shrink factor in (0,1) producing the check cone Θ̌₋ inside Θ₋.
    pub check_shrink: f64,
}

impl ConeSystem {
    pub fn new(plus: Cone, minus: Cone) -> Result<Self> {
        let sys = ConeSystem {
            plus,
            minus,
            profile_exponent: 1.0,
            prime: None,
            tilde_shrink: 0.75,
            check_shrink: 0.75,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn with_prime(mut self, plus: Cone, minus: Cone) -> Result<Self> {
        self.prime = Some((plus, minus));
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let gap = dist_mod_pi(self.plus.center, self.minus.center);
        if gap <= self.plus.half_width + self.minus.half_width {
            return Err(CoreError::InvalidParameter(
                "cones Θ₊ and Θ₋ must intersect only at the origin".into(),
            ));
        }
        if let Some((p, m)) = &self.prime {
            let gap = dist_mod_pi(p.center, m.center);
            if gap <= p.half_width + m.half_width {
                return Err(CoreError::InvalidParameter(
                    "primed cones must intersect only at the origin".into(),
                ));
            }
        }
        if !(self.tilde_shrink > 0.0 && self.tilde_shrink < 1.0)
            || !(self.check_shrink > 0.0 && self.check_shrink < 1.0)
        {
            return Err(CoreError::InvalidParameter(
                "shrink factors must lie in (0,1)".into(),
            ));
        }
        Ok(())
    }

    /// The pair used to pre-localize the input side: the primed pair when
    /// present, otherwise (Θ₊, Θ₋).
    pub fn input_pair(&self) -> (Cone, Cone) {
        self.prime.unwrap_or((self.plus, self.minus))
    }

    /// φ₊ at direction θ: equals 1 on Θ₊, 0 on Θ₋, smooth in between.
    pub fn phi_plus(&self, theta: f64) -> f64 {
        smooth_step_pair(
            self.minus.angular_dist(theta),
            self.plus.angular_dist(theta),
            self.profile_exponent,
        )
    }

    pub fn phi_minus(&self, theta: f64) -> f64 {
        1.0 - self.phi_plus(theta)
    }

    /// φ'₊ built from the primed pair (falls back to φ₊).
    pub fn phi_plus_prime(&self, theta: f64) -> f64 {
        match &self.prime {
            None => self.phi_plus(theta),
            Some((p, m)) => {
                smooth_step_pair(m.angular_dist(theta), p.angular_dist(theta), self.profile_exponent)
            }
        }
    }

    /// Widened profile φ̃₊: 1 outside interior(Θ₋), 0 on the shrunk Θ̃₋.
    /// Equals 1 on supp(φ₊).
    pub fn phi_tilde_plus(&self, theta: f64) -> f64 {
        let inner = self.tilde_minus();
        // distance to closure(complement of Θ₋): positive only inside Θ₋
        let d_out = (self.minus.half_width - dist_mod_pi(theta, self.minus.center)).max(0.0);
        smooth_step_pair(inner.angular_dist(theta), d_out, self.profile_exponent)
    }

    /// Widened profile φ̃₋ relative to the input pair: 1 outside interior of
    /// the input Θ₊ (so on supp(φ₋)), 0 on the shrunk input Θ̃₊.
    pub fn phi_tilde_minus(&self, theta: f64) -> f64 {
        let (plus_in, _) = self.input_pair();
        let inner = plus_in.shrunk(self.tilde_shrink);
        let d_out = (plus_in.half_width - dist_mod_pi(theta, plus_in.center)).max(0.0);
        smooth_step_pair(inner.angular_dist(theta), d_out, self.profile_exponent)
    }

    /// Output-side profile φ̌₊: equals 1 exactly outside interior(Θ₋) (hence
    /// on supp φ₊) and 0 on the check cone Θ̌₋ ⊂ interior(Θ₋). The partner
    /// φ̌₋ = 1 − φ̌₊ is then supported inside Θ₋, which makes the block
    /// product φ₊·φ̌₋ vanish identically.
    pub fn phi_check_plus(&self, theta: f64) -> f64 {
        let inner = self.check_minus();
        let d_out = (self.minus.half_width - dist_mod_pi(theta, self.minus.center)).max(0.0);
        smooth_step_pair(inner.angular_dist(theta), d_out, self.profile_exponent)
    }

    pub fn phi_check_minus(&self, theta: f64) -> f64 {
        1.0 - self.phi_check_plus(theta)
    }

    pub fn tilde_plus(&self) -> Cone {
        self.input_pair().0.shrunk(self.tilde_shrink)
    }

    pub fn tilde_minus(&self) -> Cone {
        self.minus.shrunk(self.tilde_shrink)
    }

    pub fn check_minus(&self) -> Cone {
        self.minus.shrunk(self.check_shrink)
    }

    fn phi_sigma(&self, sigma: Sign, theta: f64) -> f64 {
        match sigma {
            Sign::Plus => self.phi_plus(theta),
            Sign::Minus => self.phi_minus(theta),
        }
    }

    /// ψ_{n,σ}(ξ) = ψ_n(ξ) φ_σ(ξ/‖ξ‖) for n ≥ 1, χ(‖ξ‖)/2 for n = 0.
    pub fn psi_n_sigma(&self, n: u32, sigma: Sign, xi: [f64; 2]) -> f64 {
        let r = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
        if n == 0 {
            return chi(r) / 2.0;
        }
        let radial = crate::fourier::psi_radial(n, r);
        if radial == 0.0 {
            return 0.0;
        }
        radial * self.phi_sigma(sigma, xi[1].atan2(xi[0]))
    }

    /// ψ̃_{ℓ,τ}(ξ) = ψ̃_ℓ(ξ) φ̃_τ(ξ/‖ξ‖) for ℓ ≥ 1, χ(‖ξ‖/2) for ℓ = 0.
    /// Equals 1 on supp(ψ_{ℓ,τ}) built from the input pair.
    pub fn psi_tilde_ell_tau(&self, ell: u32, tau: Sign, xi: [f64; 2]) -> f64 {
        let r = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
        if ell == 0 {
            return chi(r / 2.0);
        }
        let radial = crate::fourier::psi_tilde_radial(ell, r);
        if radial == 0.0 {
            return 0.0;
        }
        let theta = xi[1].atan2(xi[0]);
        let ang = match tau {
            Sign::Plus => self.phi_tilde_plus(theta),
            Sign::Minus => self.phi_tilde_minus(theta),
        };
        radial * ang
    }

    /// ψ̌_{n,σ}(ξ) = ψ_n(ξ) φ̌_σ(ξ/‖ξ‖) for n ≥ 1, χ(‖ξ‖)/2 for n = 0.
    /// Satisfies ψ̌_{n,+} + ψ̌_{n,−} = ψ_n.
    pub fn psi_check_n_sigma(&self, n: u32, sigma: Sign, xi: [f64; 2]) -> f64 {
        let r = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
        if n == 0 {
            return chi(r) / 2.0;
        }
        let radial = crate::fourier::psi_radial(n, r);
        if radial == 0.0 {
            return 0.0;
        }
        let theta = xi[1].atan2(xi[0]);
        let ang = match sigma {
            Sign::Plus => self.phi_check_plus(theta),
            Sign::Minus => self.phi_check_minus(theta),
        };
        radial * ang
    }
}

/// Cone label σ ∈ {+, −}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];

    pub fn label(self) -> &'static str {
        match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        }
    }
}
