//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with the measured quantities (visible with `--nocapture`).
//!
//! Run with `cargo test --test acceptance`.

use std::time::Instant;

use num_complex::Complex64;
use ruelle_core::determinant::{self, BoundQuadrature, DeterminantSeries};
use ruelle_core::dynamics::{adapted_cones, MapModel, Weight};
use ruelle_core::experiment::{self, ExperimentConfig};
use ruelle_core::fourier;
use ruelle_core::grid::GridFunction;
use ruelle_core::kernel::{self, Amplitude, EnvelopeChoice, KernelConfig};
use ruelle_core::transfer::{self, LinkageRelation, ResonanceConfig};

const CAT: [[i64; 2]; 2] = [[2, 1], [1, 1]];

fn lam_cat() -> f64 {
    (3.0 + 5f64.sqrt()) / 2.0
}

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

#[test]
fn criterion_01_doubling_half_weight_determinant() {
    let start = Instant::now();
    let map = MapModel::expanding_circle(2, 0.0).unwrap();
    let g = Weight::constant(0.5);
    let mut max_trace_err: f64 = 0.0;
    let traces: Vec<Complex64> = (1..=14)
        .map(|m| {
            let t = determinant::trace_sum(&map, &g, m).unwrap();
            max_trace_err = max_trace_err.max((t - Complex64::new(1.0, 0.0)).norm());
            t
        })
        .collect();
    let coeffs = determinant::determinant_coefficients(&traces);
    let a1_err = (coeffs[1] + Complex64::new(1.0, 0.0)).norm();
    let tail_max = coeffs[2..]
        .iter()
        .map(|c| c.norm())
        .fold(0.0f64, f64::max);
    let elapsed = start.elapsed().as_secs_f64();
    let pass = max_trace_err < 1e-12 && a1_err < 1e-10 && tail_max < 1e-10 && elapsed < 10.0;
    report(
        "1 (doubling, g=1/2: d(z) = 1 − z)",
        pass,
        &format!(
            "max |t_m − 1| = {max_trace_err:.2e}, |a_1 + 1| = {a1_err:.2e}, \
             max |a_m| (m ≥ 2) = {tail_max:.2e}, {elapsed:.2}s"
        ),
    );
}

#[test]
fn criterion_02_doubling_unit_weight_eigenvalue() {
    let start = Instant::now();
    let map = MapModel::expanding_circle(2, 0.0).unwrap();
    let g = Weight::ONE;
    let traces: Vec<Complex64> = (1..=14)
        .map(|m| determinant::trace_sum(&map, &g, m).unwrap())
        .collect();
    let mut trace_err: f64 = 0.0;
    for (i, t) in traces.iter().enumerate() {
        let expected = 2f64.powi(i as i32 + 1);
        trace_err = trace_err.max((t - Complex64::new(expected, 0.0)).norm() / expected);
    }
    let coeffs = determinant::determinant_coefficients(&traces);
    let a1_err = (coeffs[1] + Complex64::new(2.0, 0.0)).norm();
    let tail_max = coeffs[2..]
        .iter()
        .map(|c| c.norm())
        .fold(0.0f64, f64::max);
    let series = DeterminantSeries::from_traces(&traces);
    let zeros = determinant::determinant_zeros(&series).unwrap();
    let zero_ok = zeros.zeros.len() == 1 && (zeros.zeros[0].z() - Complex64::new(0.5, 0.0)).norm() < 1e-10;
    let recip = Complex64::new(1.0, 0.0) / zeros.zeros[0].z();
    let op = transfer::assemble_expanding(&map, &g, 32, 256).unwrap();
    let leading = transfer::eigenvalues(&op).unwrap()[0];
    let match_err = (recip - leading).norm();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = trace_err < 1e-12 && a1_err < 1e-10 && tail_max < 1e-10 && zero_ok
        && match_err < 1e-8;
    report(
        "2 (doubling, g=1: d(z) = 1 − 2z, zero ↔ leading eigenvalue)",
        pass,
        &format!(
            "max rel |t_m − 2^m| = {trace_err:.2e}, |a_1 + 2| = {a1_err:.2e}, \
             |1/z − λ_max| = {match_err:.2e}, {elapsed:.2}s"
        ),
    );
}

#[test]
fn criterion_03_cat_map_exact_traces_and_resonances() {
    let start = Instant::now();
    let map = MapModel::linear_toral(CAT).unwrap();
    let g = Weight::ONE;
    // exact integer traces
    let mut exact = true;
    let mut traces = Vec::new();
    for m in 1..=12u32 {
        let t = determinant::trace_sum(&map, &g, m).unwrap();
        exact &= t == Complex64::new(1.0, 0.0);
        traces.push(t);
    }
    // counts match |det(A^m − I)|
    let mut counts_ok = true;
    for m in 1..=10u32 {
        let data = determinant::periodic_points(&map, &g, m).unwrap();
        counts_ok &= data.points.len() as i64 == determinant::toral_point_count(CAT, m);
    }
    let coeffs = determinant::determinant_coefficients(&traces);
    let det_ok = (coeffs[1] + Complex64::new(1.0, 0.0)).norm() < 1e-12
        && coeffs[2..].iter().all(|c| c.norm() < 1e-12);
    // resonance pipeline
    let cones = adapted_cones(&map, 8f64.to_radians(), 80f64.to_radians()).unwrap();
    let cfg = ResonanceConfig {
        n_f: 6,
        p: 1.0,
        q: -1.0,
        ..Default::default()
    };
    let rep = transfer::resonances(&map, &g, Some(&cones), &cfg).unwrap();
    let lam = lam_cat();
    let filter_ok = (rep.filter - 1.0 / lam).abs() < 1e-9;
    let accepted_ok = rep.accepted.len() == 1
        && (rep.accepted[0].value() - Complex64::new(1.0, 0.0)).norm() < 1e-8;
    let elapsed = start.elapsed().as_secs_f64();
    let pass = exact && counts_ok && det_ok && filter_ok && accepted_ok && elapsed < 30.0;
    report(
        "3 (cat map, g=1: exact traces, counts, d(z) = 1 − z, resonances {1})",
        pass,
        &format!(
            "traces exact: {exact}, counts ok: {counts_ok}, filter = {:.7} (λ⁻¹ = {:.7}), \
             accepted = {}, {elapsed:.2}s",
            rep.filter,
            1.0 / lam,
            rep.accepted.len()
        ),
    );
}

#[test]
fn criterion_04_zero_eigenvalue_bijection_perturbed_doubling() {
    let start = Instant::now();
    let map = MapModel::expanding_circle(2, 0.02).unwrap();
    let g = Weight::InvDeriv;
    let traces: Vec<Complex64> = (1..=14)
        .map(|m| determinant::trace_sum(&map, &g, m).unwrap())
        .collect();
    let series = DeterminantSeries::from_traces(&traces);
    let zeros = determinant::determinant_zeros(&series).unwrap();
    let mut all_ok = true;
    let mut worst: f64 = 0.0;
    for n_f in [128usize, 256] {
        let cfg = ResonanceConfig {
            n_f,
            p: 1.0,
            q: 0.0,
            ..Default::default()
        };
        let rep = transfer::resonances(&map, &g, None, &cfg).unwrap();
        let radius = series
            .reliability_radius
            .min(0.999 / (rep.filter + rep.margin));
        let table = determinant::compare_zeros_eigenvalues(&rep, &zeros.zeros, radius);
        let max_dist = table
            .pairs
            .iter()
            .map(|p| p.distance)
            .fold(0.0f64, f64::max);
        worst = worst.max(max_dist);
        all_ok &= table.unmatched_zeros.is_empty()
            && table.unmatched_resonances.is_empty()
            && !table.pairs.is_empty()
            && max_dist < 1e-5;
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = all_ok && elapsed < 60.0;
    report(
        "4 (perturbed doubling, g=1/T': zero ↔ resonance bijection)",
        pass,
        &format!("max matching distance = {worst:.2e} over N_f ∈ {{128, 256}}, {elapsed:.2}s"),
    );
}

#[test]
fn criterion_05_bound_quantities_cat() {
    let start = Instant::now();
    let map = MapModel::linear_toral(CAT).unwrap();
    let g = Weight::ONE;
    let lam = lam_cat();
    let quad = BoundQuadrature {
        points_per_axis: 64,
        ..Default::default()
    };
    let mut rho_err: f64 = 0.0;
    let mut rhos = Vec::new();
    let ms: Vec<u32> = (1..=8).collect();
    for &m in &ms {
        let rho = determinant::rho_pqm(&map, &g, 1.0, -1.0, m, &quad).unwrap();
        rho_err = rho_err.max((rho.value.powf(1.0 / m as f64) - 1.0 / lam).abs());
        rhos.push(rho.value);
    }
    let r_inf = determinant::r_pqt(&map, &g, 1.0, -1.0, f64::INFINITY, 8, &quad).unwrap();
    let r_inf_err = (r_inf - 1.0 / lam).abs();
    let (rho_limit, _) = determinant::rho_pq_limit(&ms, &rhos).unwrap();
    let mut monotone = true;
    for t in [2.0, 4.0, f64::INFINITY] {
        let r = determinant::r_pqt(&map, &g, 1.0, -1.0, t, 8, &quad).unwrap();
        monotone &= rho_limit <= r + 1e-6;
    }
    // perturbed cat map: Cauchy diagnostic of the m-th-root sequence
    let pert = MapModel::perturbed_toral(CAT, 0.01).unwrap();
    let pq = BoundQuadrature {
        points_per_axis: 48,
        n_pre: 30,
        ..Default::default()
    };
    let pms: Vec<u32> = (1..=8).collect();
    let prhos: Vec<f64> = pms
        .iter()
        .map(|&m| {
            determinant::rho_pqm(&pert, &g, 1.0, -1.0, m, &pq)
                .unwrap()
                .value
        })
        .collect();
    let (_, cauchy) = determinant::rho_pq_limit(&pms, &prhos).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = rho_err < 1e-10 && r_inf_err < 1e-10 && monotone && cauchy < 1e-2;
    report(
        "5 (bound quantities: ρ^{p,q} roots, R^{p,q,t}, monotonicity, Cauchy)",
        pass,
        &format!(
            "max |ρ_m^{{1/m}} − λ⁻¹| = {rho_err:.2e}, |R^∞ − λ⁻¹| = {r_inf_err:.2e}, \
             ρ ≤ R: {monotone}, perturbed Cauchy = {cauchy:.2e}, {elapsed:.2}s"
        ),
    );
}

#[test]
fn criterion_06_l0_exponent_law() {
    let start = Instant::now();
    let n_grid = 256usize;
    let gamma = GridFunction::from_fn(1, n_grid, |x| {
        Complex64::new(
            fourier::smooth_bump(ruelle_core::dynamics::wrap_half(x[0] - 0.5), 0.05, 0.45),
            0.0,
        )
    });
    let samples: Vec<GridFunction> = (0..10)
        .map(|s| fourier::random_band_limited(1, n_grid, 64.0, 0.3, 100 + s))
        .collect();
    let factors = [0.5, 1.0 / 3.0, 0.25];
    let mut pass = true;
    let mut details = Vec::new();
    for p in [0.5, 1.5] {
        let rep = transfer::measure_l0_bound(&factors, &gamma, p, &samples).unwrap();
        let slope = rep.slope.unwrap();
        pass &= (slope - p).abs() < 0.15;
        details.push(format!("p = {p}: slope = {slope:.3}"));
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass &= elapsed < 120.0;
    report(
        "6 (essential-radius exponent law for L'0)",
        pass,
        &format!("{}, {elapsed:.2}s", details.join(", ")),
    );
}

#[test]
fn criterion_07_kernel_decay() {
    let start = Instant::now();
    let branch = ruelle_core::dynamics::Branch1::ScaleSine { c: 0.5, a: 0.02 };
    let amp = Amplitude::QuadSpline {
        center: 0.0,
        h: 0.22,
    };
    let rel = LinkageRelation::expanding(branch.sup_deriv());
    let r_test = 3.0;
    let sweep = kernel::kernel_bound_check(
        &branch,
        &amp,
        &rel,
        9,
        EnvelopeChoice::Main,
        r_test,
        13,
        &KernelConfig::default(),
    )
    .unwrap();
    let slope_bound = -(r_test - 1.0) * std::f64::consts::LN_2 + 0.1;
    let elapsed = start.elapsed().as_secs_f64();
    let pass =
        sweep.constant_spread < 50.0 && sweep.log_slope <= slope_bound && elapsed < 300.0;
    report(
        "7 (kernel decay over non-linked pairs)",
        pass,
        &format!(
            "constant spread = {:.2}, log-slope = {:.4} (bound {slope_bound:.4}), \
             {} pairs, {elapsed:.2}s",
            sweep.constant_spread,
            sweep.log_slope,
            sweep.pairs.len()
        ),
    );
}

#[test]
fn criterion_08_regularized_ibp() {
    let start = Instant::now();
    let f = |w: f64| w + 0.05 * w * w;
    let fp = |w: f64| 1.0 + 0.1 * w;
    let g = |w: f64| 4.0 * fourier::smooth_bump(w, 0.1, 0.7) * w.abs().sqrt();
    // residual grid at ε = 1/Λ and neighbours
    let mut residual_max: f64 = 0.0;
    for lambda in [4.0, 16.0, 64.0] {
        for scale in [0.25, 0.5, 1.0] {
            let eps = scale / lambda;
            let r = kernel::regularized_ibp(&f, &fp, &g, lambda, eps, 0.5).unwrap();
            residual_max = residual_max.max(r.residual);
        }
    }
    // mollification scaling
    let epss = [2f64.powi(-8), 2f64.powi(-10), 2f64.powi(-12)];
    let mut diff_ln = Vec::new();
    let mut deriv_ln = Vec::new();
    for &eps in &epss {
        let r = kernel::regularized_ibp(&f, &fp, &g, 4.0, eps, 0.5).unwrap();
        diff_ln.push(r.h_minus_h_eps_sup.ln());
        deriv_ln.push(r.d_h_eps_sup.ln());
    }
    let xs: Vec<f64> = epss.iter().map(|e| e.ln()).collect();
    let (diff_slope, _) = transfer::linear_fit(&xs, &diff_ln).unwrap();
    let (deriv_slope, _) = transfer::linear_fit(&xs, &deriv_ln).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = residual_max < 1e-7
        && (diff_slope - 0.5).abs() < 0.1
        && (deriv_slope + 0.5).abs() < 0.1;
    report(
        "8 (regularized integration by parts)",
        pass,
        &format!(
            "max residual = {residual_max:.2e}, ‖h−h_ε‖ slope = {diff_slope:.3}, \
             ‖∂h_ε‖ slope = {deriv_slope:.3}, {elapsed:.2}s"
        ),
    );
}

#[test]
fn criterion_09_norm_machinery() {
    let start = Instant::now();
    // partition of unity / support / almost-orthogonality, exact on the grid
    let n_grid = 256usize;
    let n_max = 6u32;
    let mut partition_defect: f64 = 0.0;
    let mut support_ok = true;
    let mut ortho_ok = true;
    for j in 0..4 * n_grid {
        let r = j as f64 / 4.0;
        if r <= 2f64.powi(n_max as i32 - 1) {
            let total: f64 = (0..=n_max).map(|n| fourier::psi_radial(n, r)).sum();
            partition_defect = partition_defect.max((total - 1.0).abs());
        }
        for n in 1..=8u32 {
            if r < 2f64.powi(n as i32 - 1) || r > 2f64.powi(n as i32 + 1) {
                support_ok &= fourier::psi_radial(n, r) == 0.0;
            }
        }
        for m in 0..=8u32 {
            for n in 0..=8u32 {
                if (m as i32 - n as i32).abs() >= 5 {
                    ortho_ok &= fourier::psi_radial(m, r) * fourier::psi_radial(n, r) == 0.0;
                }
            }
        }
    }
    // norm equivalence over the fixed corpus
    let corpus = experiment::norm_corpus(20, 256, 32.0, 1);
    let mut ratio_min = f64::INFINITY;
    let mut ratio_max: f64 = 0.0;
    for u in &corpus {
        for p in [0.3, 0.5, 0.7] {
            let star = fourier::holder_norm_star(u, p);
            let classical = fourier::classical_holder_norm(u, p).unwrap();
            let ratio = classical / star;
            ratio_min = ratio_min.min(ratio);
            ratio_max = ratio_max.max(ratio);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = partition_defect < 1e-12
        && support_ok
        && ortho_ok
        && ratio_min > 0.1
        && ratio_max < 10.0;
    report(
        "9 (norm machinery: multiplier identities and norm equivalence)",
        pass,
        &format!(
            "partition defect = {partition_defect:.2e}, support exact: {support_ok}, \
             orthogonality exact: {ortho_ok}, ratio range = [{ratio_min:.3}, {ratio_max:.3}], \
             {elapsed:.2}s"
        ),
    );
}

#[test]
fn criterion_10_reproducibility_across_threads() {
    let start = Instant::now();
    let cfg = ExperimentConfig::from_toml(
        r#"
kind = "determinant"
m_max = 10
[map]
kind = "expanding-circle"
degree = 2
eps = 0.02
[weight]
kind = "inv-deriv"
"#,
    )
    .unwrap();
    let base = std::env::temp_dir().join("ruelle_acceptance_repro");
    let _ = std::fs::remove_dir_all(&base);
    let mut outputs = Vec::new();
    for (i, threads) in [1usize, 4].iter().enumerate() {
        let dir = base.join(format!("run{i}"));
        experiment::run(&cfg, &dir, Some(*threads)).unwrap();
        outputs.push((
            std::fs::read(dir.join("summary.json")).unwrap(),
            std::fs::read(dir.join("traces.csv")).unwrap(),
        ));
    }
    let identical = outputs[0] == outputs[1];
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "10 (byte-identical summaries across thread counts)",
        identical,
        &format!(
            "summary bytes {} / tables {} identical, {elapsed:.2}s",
            outputs[0].0.len(),
            outputs[0].1.len()
        ),
    );
}
