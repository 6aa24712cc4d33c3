//! Experiment runner: parses and validates experiment configs, executes the
//! named recipes, and writes machine-readable reports (summary.json plus CSV
//! tables). Summaries are byte-identical for identical config and seed, no
//! matter the thread count; volatile run metadata goes to run_meta.json.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cones::{Cone, ConeSystem};
use crate::determinant::{
    self, BoundQuadrature, DeterminantSeries, ZeroReport,
};
use crate::dynamics::{adapted_cones, Branch1, MapModel, TrigTerm, Weight};
use crate::error::{CoreError, Result};
use crate::fourier;
use crate::grid::GridFunction;
use crate::kernel::{self, Amplitude, EnvelopeChoice, KernelConfig};
use crate::report::{fmt_float, sha256_hex, write_csv, Json};
use crate::transfer::{self, linear_fit, LinkageRelation, ResonanceConfig, ResonanceReport};

/// The experiment kinds, with one-line documentation.
pub const EXPERIMENT_KINDS: [(&str, &str); 6] = [
    ("norms", "dyadic vs classical Hölder norms on a fixed corpus, partition-of-unity and kernel-mass diagnostics"),
    ("resonances", "transfer-operator eigenvalues stable under truncation refinement, with the essential-radius filter"),
    ("determinant", "periodic-orbit trace sums, Fredholm coefficients, and reliable determinant zeros"),
    ("bounds", "the spectral-bound quantities rho^{p,q}(T,g,m), their m-th-root limit, and R^{p,q,t}"),
    ("kernel-check", "oscillatory kernel decay sweep, integration-by-parts identities, and the L'0 norm law"),
    ("zero-eigen-compare", "matches determinant zero reciprocals against accepted resonances"),
];

fn d_weight() -> WeightSpec {
    WeightSpec {
        kind: "const".into(),
        value: Some(1.0),
        value_im: None,
        terms: None,
    }
}
fn d_p() -> f64 {
    1.0
}
fn d_q() -> f64 {
    -1.0
}
fn d_n_f() -> usize {
    32
}
fn d_quad_mult() -> usize {
    8
}
fn d_m_max() -> u32 {
    12
}
fn d_stability_tol() -> f64 {
    1e-6
}
fn d_filter_margin() -> f64 {
    0.05
}
fn d_points() -> usize {
    256
}
fn d_n_pre() -> u32 {
    30
}
fn d_t_values() -> Vec<f64> {
    vec![2.0, 4.0, f64::INFINITY]
}
fn d_index_cap() -> u32 {
    9
}
fn d_r_test() -> f64 {
    3.0
}
fn d_xy_points() -> usize {
    13
}
fn d_amp_h() -> f64 {
    0.22
}
fn d_lambdas() -> Vec<f64> {
    vec![4.0, 16.0, 64.0]
}
fn d_eps_scan() -> Vec<f64> {
    vec![2f64.powi(-8), 2f64.powi(-10), 2f64.powi(-12)]
}
fn d_corpus() -> usize {
    20
}
fn d_grid_n() -> usize {
    256
}
fn d_max_freq() -> f64 {
    32.0
}
fn d_p_list() -> Vec<f64> {
    vec![0.3, 0.5, 0.7]
}
fn d_seed() -> u64 {
    1
}
fn d_factors() -> Vec<f64> {
    vec![0.5, 1.0 / 3.0, 0.25]
}
fn d_l0_p() -> Vec<f64> {
    vec![0.5, 1.5]
}
fn d_samples() -> usize {
    10
}
fn d_branch() -> BranchSpec {
    BranchSpec { c: 0.5, a: 0.02 }
}

/// The dynamical system named in a config.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    /// "expanding-circle" | "linear-toral" | "perturbed-toral"
    pub kind: String,
    #[serde(default)]
    pub degree: Option<u32>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub matrix: Option<[[i64; 2]; 2]>,
    #[serde(default)]
    pub delta: Option<f64>,
}

impl MapSpec {
    pub fn build(&self) -> Result<MapModel> {
        match self.kind.as_str() {
            "expanding-circle" => {
                let degree = self.degree.ok_or_else(|| {
                    CoreError::Config("expanding-circle needs `degree`".into())
                })?;
                MapModel::expanding_circle(degree, self.eps.unwrap_or(0.0))
            }
            "linear-toral" => {
                let matrix = self
                    .matrix
                    .ok_or_else(|| CoreError::Config("linear-toral needs `matrix`".into()))?;
                MapModel::linear_toral(matrix)
            }
            "perturbed-toral" => {
                let matrix = self
                    .matrix
                    .ok_or_else(|| CoreError::Config("perturbed-toral needs `matrix`".into()))?;
                MapModel::perturbed_toral(matrix, self.delta.unwrap_or(0.0))
            }
            other => Err(CoreError::Config(format!("unknown map kind `{other}`"))),
        }
    }

    fn to_json(&self) -> Json {
        Json::obj(vec![
            ("kind", Json::Str(self.kind.clone())),
            (
                "degree",
                self.degree.map_or(Json::Null, |d| Json::Int(d as i64)),
            ),
            ("eps", self.eps.map_or(Json::Null, Json::Float)),
            (
                "matrix",
                self.matrix.map_or(Json::Null, |m| {
                    Json::Array(
                        m.iter()
                            .map(|row| {
                                Json::Array(row.iter().map(|&v| Json::Int(v)).collect())
                            })
                            .collect(),
                    )
                }),
            ),
            ("delta", self.delta.map_or(Json::Null, Json::Float)),
        ])
    }
}

/// Weight specification: const / coord / inv-deriv / inv-det-unstable / trig.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub kind: String,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub value_im: Option<f64>,
    #[serde(default)]
    pub terms: Option<Vec<TrigTermSpec>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrigTermSpec {
    pub k: [i64; 2],
    pub amp: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Default for WeightSpec {
    fn default() -> Self {
        d_weight()
    }
}

impl WeightSpec {
    pub fn build(&self) -> Result<Weight> {
        match self.kind.as_str() {
            "const" => Ok(Weight::Const {
                re: self.value.unwrap_or(1.0),
                im: self.value_im.unwrap_or(0.0),
            }),
            "coord" => Ok(Weight::Coord),
            "inv-deriv" => Ok(Weight::InvDeriv),
            "inv-det-unstable" => Ok(Weight::InvDetUnstable),
            "trig" => {
                let terms = self
                    .terms
                    .as_ref()
                    .ok_or_else(|| CoreError::Config("trig weight needs `terms`".into()))?;
                Ok(Weight::TrigPoly {
                    terms: terms
                        .iter()
                        .map(|t| TrigTerm {
                            k: t.k,
                            amp: t.amp,
                            phase: t.phase,
                        })
                        .collect(),
                })
            }
            other => Err(CoreError::Config(format!("unknown weight kind `{other}`"))),
        }
    }

    fn to_json(&self) -> Json {
        Json::obj(vec![
            ("kind", Json::Str(self.kind.clone())),
            ("value", self.value.map_or(Json::Null, Json::Float)),
            ("value_im", self.value_im.map_or(Json::Null, Json::Float)),
            (
                "terms",
                self.terms.as_ref().map_or(Json::Null, |ts| {
                    Json::Array(
                        ts.iter()
                            .map(|t| {
                                Json::obj(vec![
                                    (
                                        "k",
                                        Json::Array(vec![Json::Int(t.k[0]), Json::Int(t.k[1])]),
                                    ),
                                    ("amp", Json::Float(t.amp)),
                                    ("phase", Json::Float(t.phase)),
                                ])
                            })
                            .collect(),
                    )
                }),
            ),
        ])
    }
}

/// Cone specification: adapted wide/narrow pairs from the map's splitting, or
/// explicit angles in degrees.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConeSpec {
    /// "adapted" | "explicit"
    pub kind: String,
    #[serde(default = "d_narrow")]
    pub narrow_deg: f64,
    #[serde(default = "d_wide")]
    pub wide_deg: f64,
    #[serde(default)]
    pub plus_center_deg: Option<f64>,
    #[serde(default)]
    pub plus_half_deg: Option<f64>,
    #[serde(default)]
    pub minus_center_deg: Option<f64>,
    #[serde(default)]
    pub minus_half_deg: Option<f64>,
}

fn d_narrow() -> f64 {
    8.0
}
fn d_wide() -> f64 {
    80.0
}

impl ConeSpec {
    pub fn build(&self, map: &MapModel) -> Result<ConeSystem> {
        match self.kind.as_str() {
            "adapted" => adapted_cones(map, self.narrow_deg.to_radians(), self.wide_deg.to_radians()),
            "explicit" => {
                let need = |v: Option<f64>, name: &str| {
                    v.ok_or_else(|| CoreError::Config(format!("explicit cones need `{name}`")))
                };
                ConeSystem::new(
                    Cone::new(
                        need(self.plus_center_deg, "plus_center_deg")?.to_radians(),
                        need(self.plus_half_deg, "plus_half_deg")?.to_radians(),
                    )?,
                    Cone::new(
                        need(self.minus_center_deg, "minus_center_deg")?.to_radians(),
                        need(self.minus_half_deg, "minus_half_deg")?.to_radians(),
                    )?,
                )
            }
            other => Err(CoreError::Config(format!("unknown cone kind `{other}`"))),
        }
    }

    fn to_json(&self) -> Json {
        Json::obj(vec![
            ("kind", Json::Str(self.kind.clone())),
            ("narrow_deg", Json::Float(self.narrow_deg)),
            ("wide_deg", Json::Float(self.wide_deg)),
            (
                "plus_center_deg",
                self.plus_center_deg.map_or(Json::Null, Json::Float),
            ),
            (
                "plus_half_deg",
                self.plus_half_deg.map_or(Json::Null, Json::Float),
            ),
            (
                "minus_center_deg",
                self.minus_center_deg.map_or(Json::Null, Json::Float),
            ),
            (
                "minus_half_deg",
                self.minus_half_deg.map_or(Json::Null, Json::Float),
            ),
        ])
    }
}

/// Local branch for the kernel experiments: 𝒯(w) = c·w + a·sin(2πw).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub c: f64,
    #[serde(default)]
    pub a: f64,
}

impl BranchSpec {
    pub fn build(&self) -> Branch1 {
        if self.a == 0.0 {
            Branch1::Scale { c: self.c }
        } else {
            Branch1::ScaleSine { c: self.c, a: self.a }
        }
    }
}

/// One experiment: kind, inputs, and every numerical knob with its default.
/// This struct is the single documented defaults table.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: String,
    #[serde(default)]
    pub map: Option<MapSpec>,
    #[serde(default)]
    pub weight: WeightSpec,
    /// Smoothness exponent on the stable side.
    #[serde(default = "d_p")]
    pub p: f64,
    /// Roughness exponent on the unstable side (negative).
    #[serde(default = "d_q")]
    pub q: f64,
    #[serde(default)]
    pub cones: Option<ConeSpec>,
    /// Frequency truncation half-width.
    #[serde(default = "d_n_f")]
    pub n_f: usize,
    /// Quadrature points per N_f for operator assembly.
    #[serde(default = "d_quad_mult")]
    pub quad_mult: usize,
    /// Largest iterate/period m.
    #[serde(default = "d_m_max")]
    pub m_max: u32,
    #[serde(default = "d_stability_tol")]
    pub stability_tol: f64,
    #[serde(default = "d_filter_margin")]
    pub filter_margin: f64,
    /// Trapezoid points per axis for the bound integrals.
    #[serde(default = "d_points")]
    pub points_per_axis: usize,
    /// Finite-time length of the invariant-direction approximation.
    #[serde(default = "d_n_pre")]
    pub n_pre: u32,
    /// t exponents for R^{p,q,t} (use `inf` for t = ∞).
    #[serde(default = "d_t_values")]
    pub t_values: Vec<f64>,
    /// Largest dyadic index in the kernel sweep.
    #[serde(default = "d_index_cap")]
    pub index_cap: u32,
    /// Regularity parameter of the kernel decay bound.
    #[serde(default = "d_r_test")]
    pub r_test: f64,
    /// Points per axis of the kernel (x,y) grid.
    #[serde(default = "d_xy_points")]
    pub xy_points: usize,
    /// Local branch of the kernel experiments.
    #[serde(default = "d_branch")]
    pub branch: BranchSpec,
    /// Width of the spline amplitude in the kernel sweep.
    #[serde(default = "d_amp_h")]
    pub amplitude_h: f64,
    /// Phase scales for the integration-by-parts residual grid (ε = 1/Λ).
    #[serde(default = "d_lambdas")]
    pub lambda_values: Vec<f64>,
    /// Mollification scales for the ε-scaling scan.
    #[serde(default = "d_eps_scan")]
    pub epsilon_scan: Vec<f64>,
    /// Contraction factors for the L'0 norm-law measurement.
    #[serde(default = "d_factors")]
    pub contraction_factors: Vec<f64>,
    /// Exponents p measured in the L'0 law.
    #[serde(default = "d_l0_p")]
    pub l0_p_list: Vec<f64>,
    /// Sample functions per L'0 measurement.
    #[serde(default = "d_samples")]
    pub l0_samples: usize,
    /// Corpus size for the norms experiment.
    #[serde(default = "d_corpus")]
    pub corpus_size: usize,
    /// Grid size for norm/splitting experiments.
    #[serde(default = "d_grid_n")]
    pub grid_n: usize,
    /// Frequency band of the random corpus.
    #[serde(default = "d_max_freq")]
    pub max_freq: f64,
    /// Hölder exponents for the norms experiment.
    #[serde(default = "d_p_list")]
    pub p_list: Vec<f64>,
    #[serde(default = "d_seed")]
    pub seed: u64,
    /// Matching radius override for zero-eigen-compare.
    #[serde(default)]
    pub compare_radius: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CoreError::Config(format!("TOML parse error: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CoreError::Config(format!("JSON parse error: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    /// Validate against the per-kind schema.
    pub fn validate(&self) -> Result<()> {
        let known = EXPERIMENT_KINDS.iter().any(|(k, _)| *k == self.kind);
        if !known {
            return Err(CoreError::Config(format!(
                "unknown experiment kind `{}`",
                self.kind
            )));
        }
        let needs_map = matches!(
            self.kind.as_str(),
            "resonances" | "determinant" | "bounds" | "zero-eigen-compare"
        );
        if needs_map {
            let spec = self
                .map
                .as_ref()
                .ok_or_else(|| CoreError::Config(format!("kind `{}` needs a map", self.kind)))?;
            let map = spec.build()?;
            if self.kind == "zero-eigen-compare" && !map.is_expanding() && self.cones.is_none() {
                // adapted cones are derived automatically for toral maps
            }
            self.weight.build()?;
            if let Some(c) = &self.cones {
                c.build(&map)?;
            }
        }
        if self.kind == "norms" && self.corpus_size == 0 {
            return Err(CoreError::Config("norms needs a nonempty corpus".into()));
        }
        if self.kind == "bounds" && self.m_max < 4 {
            return Err(CoreError::Config(
                "bounds needs m_max >= 4 for the limit diagnostic".into(),
            ));
        }
        if !self.grid_n.is_power_of_two() || self.grid_n < 8 {
            return Err(CoreError::Config(
                "grid_n must be a power of two >= 8".into(),
            ));
        }
        Ok(())
    }

    /// Canonical JSON of the resolved config (all defaults materialized).
    pub fn to_canonical_json(&self) -> Json {
        Json::obj(vec![
            ("kind", Json::Str(self.kind.clone())),
            ("map", self.map.as_ref().map_or(Json::Null, |m| m.to_json())),
            ("weight", self.weight.to_json()),
            ("p", Json::Float(self.p)),
            ("q", Json::Float(self.q)),
            ("cones", self.cones.as_ref().map_or(Json::Null, |c| c.to_json())),
            ("n_f", Json::Int(self.n_f as i64)),
            ("quad_mult", Json::Int(self.quad_mult as i64)),
            ("m_max", Json::Int(self.m_max as i64)),
            ("stability_tol", Json::Float(self.stability_tol)),
            ("filter_margin", Json::Float(self.filter_margin)),
            ("points_per_axis", Json::Int(self.points_per_axis as i64)),
            ("n_pre", Json::Int(self.n_pre as i64)),
            (
                "t_values",
                Json::Array(
                    self.t_values
                        .iter()
                        .map(|&t| {
                            if t.is_infinite() {
                                Json::Str("inf".into())
                            } else {
                                Json::Float(t)
                            }
                        })
                        .collect(),
                ),
            ),
            ("index_cap", Json::Int(self.index_cap as i64)),
            ("r_test", Json::Float(self.r_test)),
            ("xy_points", Json::Int(self.xy_points as i64)),
            (
                "branch",
                Json::obj(vec![
                    ("c", Json::Float(self.branch.c)),
                    ("a", Json::Float(self.branch.a)),
                ]),
            ),
            ("amplitude_h", Json::Float(self.amplitude_h)),
            ("lambda_values", Json::floats(&self.lambda_values)),
            ("epsilon_scan", Json::floats(&self.epsilon_scan)),
            ("contraction_factors", Json::floats(&self.contraction_factors)),
            ("l0_p_list", Json::floats(&self.l0_p_list)),
            ("l0_samples", Json::Int(self.l0_samples as i64)),
            ("corpus_size", Json::Int(self.corpus_size as i64)),
            ("grid_n", Json::Int(self.grid_n as i64)),
            ("max_freq", Json::Float(self.max_freq)),
            ("p_list", Json::floats(&self.p_list)),
            ("seed", Json::Int(self.seed as i64)),
            (
                "compare_radius",
                self.compare_radius.map_or(Json::Null, Json::Float),
            ),
        ])
    }
}

/// Schema document for one kind: required/optional fields and the defaults.
pub fn emit_schema(kind: &str) -> Result<Json> {
    let doc = EXPERIMENT_KINDS
        .iter()
        .find(|(k, _)| *k == kind)
        .ok_or_else(|| CoreError::Config(format!("unknown experiment kind `{kind}`")))?
        .1;
    let required: Vec<&str> = match kind {
        "resonances" | "determinant" | "bounds" | "zero-eigen-compare" => vec!["kind", "map"],
        _ => vec!["kind"],
    };
    let defaults = ExperimentConfig {
        kind: kind.to_string(),
        map: None,
        weight: d_weight(),
        p: d_p(),
        q: d_q(),
        cones: None,
        n_f: d_n_f(),
        quad_mult: d_quad_mult(),
        m_max: d_m_max(),
        stability_tol: d_stability_tol(),
        filter_margin: d_filter_margin(),
        points_per_axis: d_points(),
        n_pre: d_n_pre(),
        t_values: d_t_values(),
        index_cap: d_index_cap(),
        r_test: d_r_test(),
        xy_points: d_xy_points(),
        branch: d_branch(),
        amplitude_h: d_amp_h(),
        lambda_values: d_lambdas(),
        epsilon_scan: d_eps_scan(),
        contraction_factors: d_factors(),
        l0_p_list: d_l0_p(),
        l0_samples: d_samples(),
        corpus_size: d_corpus(),
        grid_n: d_grid_n(),
        max_freq: d_max_freq(),
        p_list: d_p_list(),
        seed: d_seed(),
        compare_radius: None,
    };
    Ok(Json::obj(vec![
        ("kind", Json::Str(kind.to_string())),
        ("doc", Json::Str(doc.to_string())),
        (
            "required",
            Json::Array(required.iter().map(|r| Json::Str(r.to_string())).collect()),
        ),
        ("defaults", defaults.to_canonical_json()),
    ]))
}

/// A fully rendered experiment outcome.
pub struct RunOutcome {
    pub summary_path: PathBuf,
    pub summary: String,
    pub config_hash: String,
}

/// Execute a validated config inside a dedicated thread pool and write the
/// reports under `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path, threads: Option<usize>) -> Result<RunOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let thread_count = threads
        .or_else(|| {
            std::env::var("RUELLE_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count)
        .build()
        .map_err(|e| CoreError::Numerical(format!("thread pool: {e}")))?;
    let started = std::time::Instant::now();
    let (results, tables) = pool.install(|| dispatch(cfg))?;

    let canonical = cfg.to_canonical_json();
    let config_hash = sha256_hex(&canonical.render());
    let summary = Json::obj(vec![
        ("kind", Json::Str(cfg.kind.clone())),
        ("config", canonical),
        ("config_hash", Json::Str(config_hash.clone())),
        ("results", results),
    ])
    .render();
    let summary_path = out_dir.join("summary.json");
    std::fs::write(&summary_path, &summary)?;
    for (name, header, rows) in &tables {
        write_csv(&out_dir.join(name), Some(&config_hash), header, rows)?;
    }
    // volatile metadata lives outside the reproducible summary
    let meta = Json::obj(vec![
        ("threads", Json::Int(pool.current_num_threads() as i64)),
        (
            "duration_ms",
            Json::Int(started.elapsed().as_millis() as i64),
        ),
    ])
    .render();
    std::fs::write(out_dir.join("run_meta.json"), meta)?;
    Ok(RunOutcome {
        summary_path,
        summary,
        config_hash,
    })
}

type Table = (String, Vec<&'static str>, Vec<Vec<String>>);

fn dispatch(cfg: &ExperimentConfig) -> Result<(Json, Vec<Table>)> {
    match cfg.kind.as_str() {
        "norms" => run_norms(cfg),
        "resonances" => run_resonances(cfg),
        "determinant" => run_determinant(cfg),
        "bounds" => run_bounds(cfg),
        "kernel-check" => run_kernel_check(cfg),
        "zero-eigen-compare" => run_compare(cfg),
        other => Err(CoreError::Config(format!("unknown experiment kind `{other}`"))),
    }
}

/// The fixed test corpus: a few pure modes, then seeded random band-limited
/// functions with cycling spectral decay.
pub fn norm_corpus(count: usize, grid_n: usize, max_freq: f64, seed: u64) -> Vec<GridFunction> {
    let mut out = Vec::with_capacity(count);
    let modes = [2i64, 8, 16, 32];
    for (i, &k) in modes.iter().enumerate() {
        if out.len() >= count {
            break;
        }
        let k = k.min(grid_n as i64 / 4);
        out.push(GridFunction::mode(1, grid_n, [k, 0]));
        let _ = i;
    }
    let decays = [0.3, 0.6, 0.9, 1.2];
    let mut idx = 0usize;
    while out.len() < count {
        let decay = decays[idx % decays.len()];
        out.push(fourier::random_band_limited(
            1,
            grid_n,
            max_freq,
            decay,
            seed.wrapping_add(idx as u64),
        ));
        idx += 1;
    }
    out
}

fn run_norms(cfg: &ExperimentConfig) -> Result<(Json, Vec<Table>)> {
    let corpus = norm_corpus(cfg.corpus_size, cfg.grid_n, cfg.max_freq, cfg.seed);
    let mut rows = Vec::new();
    let mut ratio_min = f64::INFINITY;
    let mut ratio_max: f64 = 0.0;
    for (i, u) in corpus.iter().enumerate() {
        for &p in &cfg.p_list {
            let star = fourier::holder_norm_star(u, p);
            let classical = fourier::classical_holder_norm(u, p)?;
            let ratio = classical / star;
            ratio_min = ratio_min.min(ratio);
            ratio_max = ratio_max.max(ratio);
            rows.push(vec![
                i.to_string(),
                fmt_float(p),
                fmt_float(star),
                fmt_float(classical),
                fmt_float(ratio),
            ]);
        }
    }
    // partition of unity over the reliable band
    let n_max = ((cfg.grid_n as f64 / 2.0).log2().floor() as u32) - 1;
    let mut partition_defect: f64 = 0.0;
    for j in 0..cfg.grid_n {
        let k = if j <= cfg.grid_n / 2 {
            j as f64
        } else {
            j as f64 - cfg.grid_n as f64
        };
        if k.abs() > 2f64.powi(n_max as i32 - 1) {
            continue;
        }
        let total: f64 = (0..=n_max).map(|n| fourier::psi_radial(n, k.abs())).sum();
        partition_defect = partition_defect.max((total - 1.0).abs());
    }
    let masses: Vec<f64> = (0..=n_max)
        .map(|n| fourier::psi_kernel_l1(1, cfg.grid_n, n))
        .collect();
    let mass_ratio = masses.iter().fold(0.0f64, |a, &b| a.max(b))
        / masses.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let results = Json::obj(vec![
        ("ratio_min", Json::Float(ratio_min)),
        ("ratio_max", Json::Float(ratio_max)),
        (
            "equivalence_within_factor_10",
            Json::Bool(ratio_min > 0.1 && ratio_max < 10.0),
        ),
        ("partition_defect", Json::Float(partition_defect)),
        ("kernel_l1_masses", Json::floats(&masses)),
        ("kernel_l1_mass_ratio", Json::Float(mass_ratio)),
    ]);
    let tables = vec![(
        "norms.csv".to_string(),
        vec!["index", "p", "star_norm", "classical_norm", "ratio"],
        rows,
    )];
    Ok((results, tables))
}

fn build_map(cfg: &ExperimentConfig) -> Result<MapModel> {
    cfg.map
        .as_ref()
        .ok_or_else(|| CoreError::Config("experiment needs a map".into()))?
        .build()
}

fn build_cones(cfg: &ExperimentConfig, map: &MapModel) -> Result<Option<ConeSystem>> {
    if map.is_expanding() {
        return Ok(None);
    }
    match &cfg.cones {
        Some(spec) => Ok(Some(spec.build(map)?)),
        None => Ok(Some(adapted_cones(
            map,
            d_narrow().to_radians(),
            d_wide().to_radians(),
        )?)),
    }
}

fn resonance_report(cfg: &ExperimentConfig, map: &MapModel) -> Result<ResonanceReport> {
    let weight = cfg.weight.build()?;
    let cones = build_cones(cfg, map)?;
    let rcfg = ResonanceConfig {
        n_f: cfg.n_f,
        refine_factor: 2,
        stability_tol: cfg.stability_tol,
        filter_margin: cfg.filter_margin,
        p: cfg.p,
        q: cfg.q,
        quad_mult: cfg.quad_mult,
        filter_orbit_m: cfg.m_max.min(10).max(4),
    };
    transfer::resonances(map, &weight, cones.as_ref(), &rcfg)
}

fn resonance_rows(report: &ResonanceReport) -> Vec<Vec<String>> {
    report
        .accepted
        .iter()
        .map(|r| {
            vec![
                fmt_float(r.value_re),
                fmt_float(r.value_im),
                r.multiplicity.to_string(),
                fmt_float(r.stability),
            ]
        })
        .collect()
}

fn run_resonances(cfg: &ExperimentConfig) -> Result<(Json, Vec<Table>)> {
    let map = build_map(cfg)?;
    let report = resonance_report(cfg, &map)?;
    let results = Json::obj(vec![
        ("filter", Json::Float(report.filter)),
        ("margin", Json::Float(report.margin)),
        ("weight_radius", Json::Float(report.weight_radius)),
        (
            "truncations",
            Json::Array(vec![
                Json::Int(report.truncations.0 as i64),
                Json::Int(report.truncations.1 as i64),
            ]),
        ),
        ("accepted_count", Json::Int(report.accepted.len() as i64)),
        (
            "accepted",
            Json::Array(
                report
                    .accepted
                    .iter()
                    .map(|r| {
                        Json::obj(vec![
                            ("re", Json::Float(r.value_re)),
                            ("im", Json::Float(r.value_im)),
                            ("multiplicity", Json::Int(r.multiplicity as i64)),
                            ("stability", Json::Float(r.stability)),
                        ])
                    })
                    .collect(),
            ),
        ),
    ]);
    let tables = vec![(
        "resonances.csv".to_string(),
        vec!["re", "im", "multiplicity", "stability"],
        resonance_rows(&report),
    )];
    Ok((results, tables))
}

fn determinant_series(cfg: &ExperimentConfig, map: &MapModel) -> Result<DeterminantSeries> {
    let weight = cfg.weight.build()?;
    let traces: Vec<Complex64> = (1..=cfg.m_max)
        .map(|m| determinant::trace_sum(map, &weight, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(DeterminantSeries::from_traces(&traces))
}

fn determinant_tables(series: &DeterminantSeries, zeros: &ZeroReport) -> Vec<Table> {
    let traces = series.traces();
    let coeffs = series.coefficients();
    let trace_rows: Vec<Vec<String>> = traces
        .iter()
        .enumerate()
        .map(|(i, t)| {
            vec![
                (i + 1).to_string(),
                fmt_float(t.re),
                fmt_float(t.im),
                fmt_float(coeffs[i + 1].re),
                fmt_float(coeffs[i + 1].im),
            ]
        })
        .collect();
    let zero_rows: Vec<Vec<String>> = zeros
        .zeros
        .iter()
        .map(|z| {
            vec![
                fmt_float(z.z_re),
                fmt_float(z.z_im),
                z.order.to_string(),
                fmt_float(z.truncation_agreement),
            ]
        })
        .collect();
    vec![
        (
            "traces.csv".to_string(),
            vec!["m", "t_re", "t_im", "a_re", "a_im"],
            trace_rows,
        ),
        (
            "zeros.csv".to_string(),
            vec!["z_re", "z_im", "order", "truncation_agreement"],
            zero_rows,
        ),
    ]
}

fn run_determinant(cfg: &ExperimentConfig) -> Result<(Json, Vec<Table>)> {
    let map = build_map(cfg)?;
    let series = determinant_series(cfg, &map)?;
    let zeros = determinant::determinant_zeros(&series)?;
    let results = Json::obj(vec![
        ("m_max", Json::Int(cfg.m_max as i64)),
        (
            "reliability_radius",
            Json::Float(series.reliability_radius),
        ),
        ("zero_count", Json::Int(zeros.zeros.len() as i64)),
        (
            "zeros",
            Json::Array(
                zeros
                    .zeros
                    .iter()
                    .map(|z| {
                        Json::obj(vec![
                            ("re", Json::Float(z.z_re)),
                            ("im", Json::Float(z.z_im)),
                            ("order", Json::Int(z.order as i64)),
                        ])
                    })
                    .collect(),
            ),
        ),
        (
            "diagnostic",
            zeros
                .diagnostic
                .as_ref()
                .map_or(Json::Null, |d| Json::Str(d.clone())),
        ),
    ]);
    Ok((results, determinant_tables(&series, &zeros)))
}

fn run_bounds(cfg: &ExperimentConfig) -> Result<(Json, Vec<Table>)> {
    let map = build_map(cfg)?;
    let weight = cfg.weight.build()?;
    let quad = BoundQuadrature {
        points_per_axis: cfg.points_per_axis,
        monte_carlo: None,
        seed: cfg.seed,
        n_pre: cfg.n_pre,
    };
    let ms: Vec<u32> = (1..=cfg.m_max).collect();
    let rhos: Vec<f64> = ms
        .iter()
        .map(|&m| Ok(determinant::rho_pqm(&map, &weight, cfg.p, cfg.q, m, &quad)?.value))
        .collect::<Result<Vec<_>>>()?;
    let (rho_limit, cauchy) = determinant::rho_pq_limit(&ms, &rhos)?;
    let mut r_rows = Vec::new();
    let mut monotone_ok = true;
    let mut r_values = Vec::new();
    for &t in &cfg.t_values {
        let r = determinant::r_pqt(&map, &weight, cfg.p, cfg.q, t, cfg.m_max, &quad)?;
        monotone_ok &= rho_limit <= r + 1e-6;
        r_values.push((t, r));
        r_rows.push(vec![
            if t.is_infinite() {
                "inf".to_string()
            } else {
                fmt_float(t)
            },
            fmt_float(r),
        ]);
    }
    let rho_rows: Vec<Vec<String>> = ms
        .iter()
        .zip(&rhos)
        .map(|(&m, &rho)| {
            vec![
                m.to_string(),
                fmt_float(rho),
                fmt_float(rho.powf(1.0 / m as f64)),
            ]
        })
        .collect();
    let results = Json::obj(vec![
        ("rho_limit", Json::Float(rho_limit)),
        ("cauchy_diagnostic", Json::Float(cauchy)),
        (
            "r_pqt",
            Json::Array(
                r_values
                    .iter()
                    .map(|(t, r)| {
                        Json::obj(vec![
                            (
                                "t",
                                if t.is_infinite() {
                                    Json::Str("inf".into())
                                } else {
                                    Json::Float(*t)
                                },
                            ),
                            ("value", Json::Float(*r)),
                        ])
                    })
                    .collect(),
            ),
        ),
        ("monotone_rho_le_r", Json::Bool(monotone_ok)),
    ]);
    let tables = vec![
        (
            "bounds.csv".to_string(),
            vec!["m", "rho_pqm", "rho_root"],
            rho_rows,
        ),
        ("r_pqt.csv".to_string(), vec!["t", "r_pqt"], r_rows),
    ];
    Ok((results, tables))
}

fn run_kernel_check(cfg: &ExperimentConfig) -> Result<(Json, Vec<Table>)> {
    let branch = cfg.branch.build();
    let amp = Amplitude::QuadSpline {
        center: 0.0,
        h: cfg.amplitude_h,
    };
    let mut rel = LinkageRelation::expanding(branch.sup_deriv());
    let n_threshold =
        kernel::measure_separation_threshold_1d(&branch, &mut rel, cfg.index_cap, 64)?;
    let kcfg = KernelConfig::default();
    let sweep = kernel::kernel_bound_check(
        &branch,
        &amp,
        &rel,
        cfg.index_cap,
        EnvelopeChoice::Main,
        cfg.r_test,
        cfg.xy_points,
        &kcfg,
    )?;
    let pair_rows: Vec<Vec<String>> = sweep
        .pairs
        .iter()
        .map(|p| {
            vec![
                p.n.to_string(),
                p.ell.to_string(),
                String::new(),
                String::new(),
                fmt_float(p.sup_abs_v),
                fmt_float(p.fitted_constant),
                fmt_float(sweep.log_slope),
            ]
        })
        .collect();

    // regularized integration-by-parts residual grid at ε = 1/Λ
    let phase = |w: f64| w + 0.05 * w * w;
    let phase_d = |w: f64| 1.0 + 0.1 * w;
    let ibp_amp = |w: f64| 4.0 * fourier::smooth_bump(w, 0.1, 0.7) * w.abs().sqrt();
    let mut ibp_rows = Vec::new();
    let mut residual_max: f64 = 0.0;
    for &lambda in &cfg.lambda_values {
        let eps = 1.0 / lambda;
        let r = kernel::regularized_ibp(&phase, &phase_d, &ibp_amp, lambda, eps, 0.5)?;
        residual_max = residual_max.max(r.residual);
        ibp_rows.push(vec![
            fmt_float(lambda),
            fmt_float(eps),
            fmt_float(r.residual),
            fmt_float(r.h_minus_h_eps_sup),
            fmt_float(r.d_h_eps_sup),
        ]);
    }
    // mollification scaling scan
    let mut diff_ln = Vec::new();
    let mut deriv_ln = Vec::new();
    for &eps in &cfg.epsilon_scan {
        let r = kernel::regularized_ibp(&phase, &phase_d, &ibp_amp, 4.0, eps, 0.5)?;
        diff_ln.push(r.h_minus_h_eps_sup.ln());
        deriv_ln.push(r.d_h_eps_sup.ln());
        ibp_rows.push(vec![
            fmt_float(4.0),
            fmt_float(eps),
            fmt_float(r.residual),
            fmt_float(r.h_minus_h_eps_sup),
            fmt_float(r.d_h_eps_sup),
        ]);
    }
    let eps_ln: Vec<f64> = cfg.epsilon_scan.iter().map(|e| e.ln()).collect();
    let (diff_slope, _) = linear_fit(&eps_ln, &diff_ln)?;
    let (deriv_slope, _) = linear_fit(&eps_ln, &deriv_ln)?;

    // L'0 norm law across contraction factors
    let gamma = GridFunction::from_fn(1, cfg.grid_n, |x| {
        Complex64::new(
            fourier::smooth_bump(crate::dynamics::wrap_half(x[0] - 0.5), 0.05, 0.45),
            0.0,
        )
    });
    let samples: Vec<GridFunction> = (0..cfg.l0_samples)
        .map(|s| {
            fourier::random_band_limited(
                1,
                cfg.grid_n,
                cfg.grid_n as f64 / 4.0,
                0.3,
                cfg.seed.wrapping_add(100 + s as u64),
            )
        })
        .collect();
    let mut l0_rows = Vec::new();
    let mut l0_slopes = Vec::new();
    for &p in &cfg.l0_p_list {
        let report = transfer::measure_l0_bound(&cfg.contraction_factors, &gamma, p, &samples)?;
        for (c, ratio) in &report.per_factor {
            l0_rows.push(vec![fmt_float(p), fmt_float(*c), fmt_float(*ratio)]);
        }
        l0_slopes.push((p, report.slope.unwrap_or(f64::NAN)));
    }

    let results = Json::obj(vec![
        ("n_threshold", Json::Int(n_threshold as i64)),
        ("pair_count", Json::Int(sweep.pairs.len() as i64)),
        ("constant_spread", Json::Float(sweep.constant_spread)),
        ("log_slope", Json::Float(sweep.log_slope)),
        (
            "slope_bound",
            Json::Float(-(cfg.r_test - 1.0) * std::f64::consts::LN_2 + 0.1),
        ),
        ("ibp_residual_max", Json::Float(residual_max)),
        ("mollification_diff_slope", Json::Float(diff_slope)),
        ("mollification_deriv_slope", Json::Float(deriv_slope)),
        (
            "l0_slopes",
            Json::Array(
                l0_slopes
                    .iter()
                    .map(|(p, s)| {
                        Json::obj(vec![("p", Json::Float(*p)), ("slope", Json::Float(*s))])
                    })
                    .collect(),
            ),
        ),
    ]);
    let tables = vec![
        (
            "kernel_pairs.csv".to_string(),
            vec!["n", "ell", "sigma", "tau", "sup_abs_V", "envelope_const", "slope_window"],
            pair_rows,
        ),
        (
            "ibp.csv".to_string(),
            vec!["lambda", "eps", "residual", "h_minus_h_eps_sup", "d_h_eps_sup"],
            ibp_rows,
        ),
        (
            "l0_law.csv".to_string(),
            vec!["p", "contraction", "ratio"],
            l0_rows,
        ),
    ];
    Ok((results, tables))
}

fn run_compare(cfg: &ExperimentConfig) -> Result<(Json, Vec<Table>)> {
    let map = build_map(cfg)?;
    let series = determinant_series(cfg, &map)?;
    let zeros = determinant::determinant_zeros(&series)?;
    let resonances = resonance_report(cfg, &map)?;
    let radius = cfg.compare_radius.unwrap_or_else(|| {
        series
            .reliability_radius
            .min(0.999 / (resonances.filter + resonances.margin))
    });
    let table = determinant::compare_zeros_eigenvalues(&resonances, &zeros.zeros, radius);
    let max_dist = table
        .pairs
        .iter()
        .map(|p| p.distance)
        .fold(0.0f64, f64::max);
    let match_rows: Vec<Vec<String>> = table
        .pairs
        .iter()
        .map(|p| {
            vec![
                fmt_float(p.reciprocal_zero_re),
                fmt_float(p.reciprocal_zero_im),
                fmt_float(p.resonance_re),
                fmt_float(p.resonance_im),
                fmt_float(p.distance),
            ]
        })
        .collect();
    let results = Json::obj(vec![
        ("radius", Json::Float(radius)),
        ("pair_count", Json::Int(table.pairs.len() as i64)),
        ("max_distance", Json::Float(max_dist)),
        (
            "unmatched_zeros",
            Json::Int(table.unmatched_zeros.len() as i64),
        ),
        (
            "unmatched_resonances",
            Json::Int(table.unmatched_resonances.len() as i64),
        ),
        ("filter", Json::Float(resonances.filter)),
        (
            "reliability_radius",
            Json::Float(series.reliability_radius),
        ),
    ]);
    let mut tables = determinant_tables(&series, &zeros);
    tables.push((
        "matches.csv".to_string(),
        vec!["recip_zero_re", "recip_zero_im", "resonance_re", "resonance_im", "distance"],
        match_rows,
    ));
    tables.push((
        "resonances.csv".to_string(),
        vec!["re", "im", "multiplicity", "stability"],
        resonance_rows(&resonances),
    ));
    Ok((results, tables))
}
