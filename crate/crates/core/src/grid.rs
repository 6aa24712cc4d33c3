//! Periodic grid functions on the 1D/2D torus with frequency-side access.
//!
//! Samples live at the points j/N (per axis) and the frequency view uses the
//! convention u(x) = Σ_k û(k) e^{2πi k·x}, so a pure mode e_k has û(k) = 1.
//! Frequencies are the signed integers with |k_i| ≤ N/2; the two Nyquist
//! labels ±N/2 refer to the same stored bin, which keeps the index set
//! symmetric about 0.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{CoreError, Result};

/// Magic bytes of the binary grid-function format.
pub const GRID_MAGIC: &[u8; 4] = b"RFGF";

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let plans = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = plans.lock().unwrap();
    guard
        .entry((n, forward))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if forward {
                planner.plan_fft_forward(n)
            } else {
                planner.plan_fft_inverse(n)
            }
        })
        .clone()
}

/// Complex-valued function sampled on a uniform torus grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    dim: usize,
    n: usize,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn zeros(dim: usize, n: usize) -> Self {
        Self::check_shape(dim, n);
        GridFunction {
            dim,
            n,
            values: vec![Complex64::ZERO; n.pow(dim as u32)],
        }
    }

    pub fn from_values(dim: usize, n: usize, values: Vec<Complex64>) -> Result<Self> {
        Self::check_shape(dim, n);
        if values.len() != n.pow(dim as u32) {
            return Err(CoreError::InvalidParameter(format!(
                "expected {} samples for dim {} and grid size {}, got {}",
                n.pow(dim as u32),
                dim,
                n,
                values.len()
            )));
        }
        Ok(GridFunction { dim, n, values })
    }

    /// Sample a closed-form function; `f` receives the torus point with the
    /// second coordinate fixed to 0 in dimension one.
    pub fn from_fn(dim: usize, n: usize, f: impl Fn([f64; 2]) -> Complex64) -> Self {
        Self::check_shape(dim, n);
        let h = 1.0 / n as f64;
        let values = match dim {
            1 => (0..n).map(|j| f([j as f64 * h, 0.0])).collect(),
            _ => {
                let mut v = Vec::with_capacity(n * n);
                for jx in 0..n {
                    for jy in 0..n {
                        v.push(f([jx as f64 * h, jy as f64 * h]));
                    }
                }
                v
            }
        };
        GridFunction { dim, n, values }
    }

    /// The pure Fourier mode e_k(x) = exp(2πi k·x).
    pub fn mode(dim: usize, n: usize, k: [i64; 2]) -> Self {
        Self::check_shape(dim, n);
        let half = n as i64 / 2;
        assert!(
            k[0].abs() <= half && (dim == 1 || k[1].abs() <= half),
            "mode index outside representable band"
        );
        Self::from_fn(dim, n, |x| {
            let phase = 2.0 * std::f64::consts::PI * (k[0] as f64 * x[0] + k[1] as f64 * x[1]);
            Complex64::new(phase.cos(), phase.sin())
        })
    }

    fn check_shape(dim: usize, n: usize) {
        assert!(dim == 1 || dim == 2, "dimension must be 1 or 2");
        assert!(n.is_power_of_two() && n >= 8, "grid size must be a power of two >= 8");
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// Largest dyadic index representable on this grid: ⌊log2(N/2)⌋ − 1.
    pub fn n_max(&self) -> u32 {
        (self.n as f64 / 2.0).log2().floor() as u32 - 1
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Mean of |u| over the grid, i.e. the discrete L¹ norm on the unit torus.
    pub fn l1_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v.norm()).sum();
        s / self.values.len() as f64
    }

    pub fn scale(&self, c: Complex64) -> Self {
        GridFunction {
            dim: self.dim,
            n: self.n,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.dim, self.n), (other.dim, other.n));
        GridFunction {
            dim: self.dim,
            n: self.n,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.dim, self.n), (other.dim, other.n));
        GridFunction {
            dim: self.dim,
            n: self.n,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Frequency coefficients in bin layout (same shape as the samples).
    pub fn spectrum(&self) -> Spectrum {
        let mut buf = self.values.clone();
        match self.dim {
            1 => plan(self.n, true).process(&mut buf),
            _ => fft2(&mut buf, self.n, true),
        }
        let scale = 1.0 / self.values.len() as f64;
        for v in &mut buf {
            *v *= scale;
        }
        Spectrum {
            dim: self.dim,
            n: self.n,
            coeffs: buf,
        }
    }

    /// Evaluate the trigonometric interpolant at an arbitrary point.
    ///
    /// The shared Nyquist bin is split evenly between ±N/2 so the result is
    /// real for real sample data.
    pub fn eval_at(&self, x: [f64; 2]) -> Complex64 {
        self.spectrum().eval_at(x)
    }

    /// Binary export: "RFGF" magic, u32 dimension, u32 N, then interleaved
    /// little-endian f64 re/im samples.
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(GRID_MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        // pad header to 16 bytes
        w.write_all(&[0u8; 4])?;
        for v in &self.values {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if &header[0..4] != GRID_MAGIC {
            return Err(CoreError::InvalidParameter(
                "bad magic in grid-function file".into(),
            ));
        }
        let dim = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let n = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        if !(dim == 1 || dim == 2) || !n.is_power_of_two() {
            return Err(CoreError::InvalidParameter(
                "bad dimensions in grid-function file".into(),
            ));
        }
        let count = n.pow(dim as u32);
        let mut values = Vec::with_capacity(count);
        let mut buf = [0u8; 16];
        for _ in 0..count {
            r.read_exact(&mut buf)?;
            values.push(Complex64::new(
                f64::from_le_bytes(buf[0..8].try_into().unwrap()),
                f64::from_le_bytes(buf[8..16].try_into().unwrap()),
            ));
        }
        GridFunction::from_values(dim, n, values)
    }

    /// JSON export for small grids: {"dim", "n", "re": [...], "im": [...]}.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "dim": self.dim,
            "n": self.n,
            "re": self.values.iter().map(|v| v.re).collect::<Vec<_>>(),
            "im": self.values.iter().map(|v| v.im).collect::<Vec<_>>(),
        })
    }
}

/// Frequency view of a [`GridFunction`].
#[derive(Debug, Clone)]
pub struct Spectrum {
    dim: usize,
    n: usize,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    /// Build a spectrum directly from coefficient bins (sample layout).
    pub fn from_coeffs(dim: usize, n: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        GridFunction::check_shape(dim, n);
        if coeffs.len() != n.pow(dim as u32) {
            return Err(CoreError::InvalidParameter(
                "coefficient count does not match the grid".into(),
            ));
        }
        Ok(Spectrum { dim, n, coeffs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Signed frequency of a bin index, with bin N/2 reported as +N/2.
    pub fn signed_freq(n: usize, bin: usize) -> i64 {
        let b = bin as i64;
        if b <= n as i64 / 2 {
            b
        } else {
            b - n as i64
        }
    }

    fn bin(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }

    /// Coefficient at signed frequency (k1, k2); ±N/2 address the same bin.
    pub fn coeff(&self, k: [i64; 2]) -> Complex64 {
        match self.dim {
            1 => self.coeffs[self.bin(k[0])],
            _ => self.coeffs[self.bin(k[0]) * self.n + self.bin(k[1])],
        }
    }

    /// Iterate over (frequency vector, coefficient) pairs, one per stored bin.
    pub fn iter(&self) -> impl Iterator<Item = ([i64; 2], Complex64)> + '_ {
        let n = self.n;
        let dim = self.dim;
        self.coeffs.iter().enumerate().map(move |(idx, &c)| {
            let k = match dim {
                1 => [Self::signed_freq(n, idx), 0],
                _ => [
                    Self::signed_freq(n, idx / n),
                    Self::signed_freq(n, idx % n),
                ],
            };
            (k, c)
        })
    }

    /// Apply a frequency multiplier a(k) and return the sampled function.
    pub fn apply_multiplier(&self, a: impl Fn([f64; 2]) -> Complex64) -> GridFunction {
        let mut buf = self.coeffs.clone();
        match self.dim {
            1 => {
                for (idx, v) in buf.iter_mut().enumerate() {
                    let k = Self::signed_freq(self.n, idx) as f64;
                    *v *= a([k, 0.0]);
                }
            }
            _ => {
                for (idx, v) in buf.iter_mut().enumerate() {
                    let kx = Self::signed_freq(self.n, idx / self.n) as f64;
                    let ky = Self::signed_freq(self.n, idx % self.n) as f64;
                    *v *= a([kx, ky]);
                }
            }
        }
        Self {
            dim: self.dim,
            n: self.n,
            coeffs: buf,
        }
        .synthesize()
    }

    /// Back to samples (inverse transform without extra normalization).
    pub fn synthesize(&self) -> GridFunction {
        let mut buf = self.coeffs.clone();
        match self.dim {
            1 => plan(self.n, false).process(&mut buf),
            _ => fft2(&mut buf, self.n, false),
        }
        GridFunction {
            dim: self.dim,
            n: self.n,
            values: buf,
        }
    }

    /// Trigonometric interpolation at an arbitrary torus point.
    pub fn eval_at(&self, x: [f64; 2]) -> Complex64 {
        let tau = 2.0 * std::f64::consts::PI;
        let half = self.n as i64 / 2;
        let mut acc = Complex64::ZERO;
        for (k, c) in self.iter() {
            if c == Complex64::ZERO {
                continue;
            }
            // split the Nyquist bin between the two labels ±N/2
            let mut weights: Vec<[f64; 2]> = vec![[k[0] as f64, k[1] as f64]];
            let mut factor = 1.0;
            if self.dim == 1 && k[0] == half {
                weights = vec![[half as f64, 0.0], [-half as f64, 0.0]];
                factor = 0.5;
            } else if self.dim == 2 {
                let mut kx = vec![k[0] as f64];
                let mut ky = vec![k[1] as f64];
                if k[0] == half {
                    kx = vec![half as f64, -half as f64];
                }
                if k[1] == half {
                    ky = vec![half as f64, -half as f64];
                }
                factor = 1.0 / (kx.len() * ky.len()) as f64;
                weights = kx
                    .iter()
                    .flat_map(|&a| ky.iter().map(move |&b| [a, b]))
                    .collect();
            }
            for w in weights {
                let phase = tau * (w[0] * x[0] + w[1] * x[1]);
                acc += c * factor * Complex64::new(phase.cos(), phase.sin());
            }
        }
        acc
    }

    /// Fraction of ℓ¹ coefficient mass at frequencies above the reliable
    /// dyadic band, ‖k‖ > 2^{n_max}. Returns 0 for the zero function.
    pub fn high_band_mass_ratio(&self) -> f64 {
        let cutoff = 2f64.powi(((self.n as f64 / 2.0).log2().floor() as i32) - 1 + 1);
        let mut total = 0.0;
        let mut high = 0.0;
        for (k, c) in self.iter() {
            let norm = ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
            let a = c.norm();
            total += a;
            if norm > cutoff {
                high += a;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            high / total
        }
    }
}

fn fft2(buf: &mut [Complex64], n: usize, forward: bool) {
    let fft = plan(n, forward);
    // rows
    for row in buf.chunks_exact_mut(n) {
        fft.process(row);
    }
    // columns
    let mut col = vec![Complex64::ZERO; n];
    for j in 0..n {
        for i in 0..n {
            col[i] = buf[i * n + j];
        }
        fft.process(&mut col);
        for i in 0..n {
            buf[i * n + j] = col[i];
        }
    }
}
