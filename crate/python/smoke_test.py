#!/usr/bin/env python3
"""Smoke test for the ruelle_py extension module.

Builds the cdylib with cargo if needed, loads it, and exercises the main
surfaces against closed-form values.
"""
import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build_module() -> Path:
    subprocess.run(
        ["cargo", "build", "--release", "-p", "ruelle-py"],
        cwd=ROOT,
        check=True,
    )
    built = ROOT / "target" / "release" / "libruelle_py.so"
    dest = Path(__file__).resolve().parent / "ruelle_py.so"
    shutil.copyfile(built, dest)
    return dest


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main() -> None:
    build_module()
    sys.path.insert(0, str(Path(__file__).resolve().parent))
    import ruelle_py as rp

    # dyadic multipliers
    approx(rp.chi(0.5), 1.0)
    approx(rp.chi(3.0), 0.0)
    approx(rp.chi(1.5), 0.5)
    approx(rp.psi(2, 4.0), 1.0)
    approx(rp.psi(2, 3.0), 0.5)
    approx(rp.psi_tilde(3, 64.0), 0.0)

    # doubling map: traces and determinant
    doubling = rp.Map.expanding_circle(2)
    assert doubling.dim() == 1
    approx(doubling.iterate([0.3, 0.0], 2)[0], 0.2, 1e-12)
    pre = doubling.inverse_branches(0.0, 1)
    assert sorted(p for p, _ in pre) == [0.0, 0.5]

    traces = [rp.trace_sum(doubling, m, "const", 0.5) for m in range(1, 11)]
    for t in traces:
        approx(t.real, 1.0, 1e-12)
    coeffs = rp.determinant_coefficients(traces)
    approx(coeffs[0].real, 1.0, 1e-14)
    approx(coeffs[1].real, -1.0, 1e-12)
    zeros = rp.determinant_zeros(traces)
    assert len(zeros) == 1 and abs(zeros[0][0] - 1.0) < 1e-9

    accepted, filt = rp.resonances(doubling, 16, 2.0, 0.0, "const", 0.5)
    approx(filt, 0.25, 1e-9)
    assert len(accepted) == 1
    assert abs(accepted[0][0] - 1.0) < 1e-8

    # cat map: exponents, rho, trace
    cat = rp.Map.linear_toral([[2, 1], [1, 1]])
    lam = (3.0 + math.sqrt(5.0)) / 2.0
    lam_m, nu_m = cat.hyperbolicity_exponents([0.3, 0.7], 3)
    approx(lam_m, lam ** -3, 1e-12)
    approx(nu_m, lam ** 3, 1e-9)
    approx(rp.trace_sum(cat, 6).real, 1.0, 0.0)
    approx(rp.rho_pqm(cat, 1.0, -1.0, 1, 16), 1.0 / lam, 1e-12)
    approx(rp.r_pqt(cat, 1.0, -1.0, math.inf, 4, 16), 1.0 / lam, 1e-12)

    # grid functions and norms
    u = rp.GridFunction.mode(1, 256, [8, 0])
    approx(u.holder_norm_star(1.5), 2.0 ** 4.5, 1e-9)
    ratio = u.classical_holder_norm(0.5) / u.holder_norm_star(0.5)
    assert 0.25 <= ratio <= 4.0

    cones = rp.ConeSystem.explicit(0.0, 0.35, math.pi / 2, 0.35)
    v = rp.GridFunction.mode(2, 64, [16, 0])
    approx(v.aniso_norm(1.0, -1.0, cones), 16.0, 1e-9)
    w = rp.GridFunction.mode(2, 64, [0, 16])
    approx(w.aniso_norm(1.0, -1.0, cones), 2.0 ** -4, 1e-9)
    assert rp.ConeSystem.adapted(cat).phi_plus(0.0) == 0.0

    # kernel value is finite and the IBP identity holds
    kv = rp.kernel_v(0.5, 0.02, 0.22, 5, 0, 0.1, 0.0)
    assert abs(kv) < 1.0
    assert rp.regularized_ibp_residual(16.0, 1.0 / 16.0) < 1e-7

    # experiment runner end to end
    with tempfile.TemporaryDirectory() as tmp:
        cfg = (ROOT / "configs" / "doubling_halfweight.toml").read_text()
        digest = rp.run_experiment(cfg, tmp, 2)
        assert len(digest) == 64
        summary = (Path(tmp) / "summary.json").read_text()
        assert '"pair_count": 1' in summary

    print("ruelle_py smoke test passed")


if __name__ == "__main__":
    main()
