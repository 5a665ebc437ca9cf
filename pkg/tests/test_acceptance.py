"""Acceptance criteria, each evaluated at its stated tolerance.

Every test prints one PASS/FAIL line (repeated in the terminal summary)
listing its sub-checks, then asserts that all of them hold.
"""
import time

import numpy as np
import pytest

from fwsw_sdc import cli
from fwsw_sdc.experiments import ExperimentConfig, boussinesq_trajectory, run
from fwsw_sdc.linalg_core import inf_norm, spectral_radius
from fwsw_sdc.quadrature import NodeFamily, lebesgue_constant, make_rule
from fwsw_sdc.scalar_analysis import (ScalarParams, ScalarTestSystem, build_matrices, stability_function,
                                      stability_modulus, stiff_limit_matrix, stiff_limit_table)
from fwsw_sdc.sdc_engine import LinearSplitSystem, SdcConfig, initialize, solve_collocation, step, sweep
from fwsw_sdc.wave_dispersion import WaveParams, build_update_matrix, max_phase_speed_error, sweep_curve


class _Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def test_criterion_01_convergence_orders(verdict):
    v = verdict(1, "convergence orders")
    with _Timer() as t:
        res = run(ExperimentConfig("converge", {"K_values": [3, 4, 5], "steps": [8, 16, 32, 64]}))
    for K, bound in ((3, 2.7), (4, 3.7), (5, 4.7)):
        slope = res.metrics["fitted_order"][str(K)]
        finest = res.metrics["observed_order"][str(K)]
        v.check(f"K={K} slope>={bound}", slope >= bound, f"fit {slope:.2f}, finest pair {finest:.2f}")
    v.check("no instability", not res.unstable)
    v.check("runtime<60s", t.seconds < 60, f"{t.seconds:.1f}s")
    v.finish()


def test_criterion_02_residual_rates(verdict):
    v = verdict(2, "residual contraction")
    with _Timer() as t:
        res = run(ExperimentConfig("residual-rates", {}))
    mean, down = res.metrics["mean_ratio"], res.metrics["decreasing_sweeps"]
    v.check("C=11.25 mean<0.6", mean["11.25"] < 0.6, f"{mean['11.25']:.3f}")
    v.check("C=37.5 mean<0.9", mean["37.5"] < 0.9, f"{mean['37.5']:.3f}")
    for C in ("3.75", "7.5", "11.25", "37.5"):
        v.check(f"C={C} decreasing>=12/15", down[C] >= 12, f"{down[C]}")
    v.check("runtime<10s", t.seconds < 10, f"{t.seconds:.1f}s")
    v.finish()


def test_criterion_03_stiff_limit(verdict):
    v = verdict(3, "stiff limit")
    with _Timer() as t:
        rho = {M: spectral_radius(stiff_limit_matrix(make_rule("radau", M))) for M in range(2, 13)}
        table = stiff_limit_table(range(2, 15), [100.0], 1.0, 1.0)
    below = [M for M in range(2, 11) if rho[M] >= 1.0]
    v.check("rho<1 for M=2..10", not below, f"max {max(rho[M] for M in range(2, 11)):.4f}")
    v.check("rho>1 at M=12", rho[12] > 1.0, f"{rho[12]:.4f}")
    first = next((r["M"] for r in table if r["lambda_fast"] == 100.0 and r["spectral_radius"] > 1.0), None)
    v.check("lambda_f=100 first crossing in 10..12", first is not None and abs(first - 11) <= 1, f"M={first}")
    v.check("runtime<1s", t.seconds < 1, f"{t.seconds:.2f}s")
    v.finish()


def test_criterion_04_norm_lemmas(verdict):
    v = verdict(4, "norm lemmas")
    with _Timer() as t:
        worst = {}
        for family in NodeFamily:
            low = 2 if family is NodeFamily.LOBATTO else 1
            for M in range(low, 13):
                rule = make_rule(family, M)
                lam = lebesgue_constant(rule)
                excess = max(inf_norm(rule.Qfast) - 1.0, inf_norm(rule.Qslow) - 1.0, inf_norm(rule.Q) - lam)
                worst[family.value] = max(worst.get(family.value, -np.inf), excess)
        for fam, excess in worst.items():
            v.check(f"{fam} norms", excess <= 1e-12, f"max excess {excess:.2e}")

        rule = make_rule("radau", 3)
        lf, ls = 0.5, 0.25
        bound_slope = lebesgue_constant(rule) + abs(lf) + abs(ls)
        hs = 0.5 ** np.arange(1, 11)
        norms = np.array([inf_norm(build_matrices(ScalarParams(lf, ls, h), rule).E) for h in hs])
        slope = np.polyfit(np.log(hs[-4:]), np.log(norms[-4:]), 1)[0]
        v.check("||E|| halving slope=1", abs(slope - 1.0) < 0.02, f"{slope:.4f}")
        v.check("||E||/dt <= Lambda+|lf|+|ls| as dt->0", norms[-1] / hs[-1] <= bound_slope,
                f"{norms[-1] / hs[-1]:.4f} <= {bound_slope:.4f}")
        # whatever exceeds the linear term must shrink like dt^2; here nothing does
        excess = np.max((norms - hs * bound_slope) / hs**2)
        v.check("||E|| <= dt*bound + C*dt^2", excess <= 0.0, f"sup excess/dt^2 = {excess:.3f}")
    v.check("runtime<1s", t.seconds < 1, f"{t.seconds:.2f}s")
    v.finish()


def test_criterion_05_stability(verdict):
    v = verdict(5, "scalar stability")
    threshold = 1.0 + 1e-8
    with _Timer() as t:
        rule3 = make_rule("radau", 3)
        p = ScalarParams(10.0, 1.0, 1.0)
        R1 = abs(stability_function(p, rule3, 1))
        v.check("K=1 unstable", R1 > 1.0, f"|R|={R1:.4f}")
        R = [abs(stability_function(p, rule3, K)) for K in range(2, 7)]
        v.check("K=2..6 stable", max(R) <= threshold, f"max |R|={max(R):.4f}")

        rule2 = make_rule("radau", 2)
        p2 = ScalarParams(10.0, 4.0, 1.0)
        first = next(K for K in range(1, 30) if abs(stability_function(p2, rule2, K)) <= threshold)
        v.check("M=2 first stable K=6+-1", abs(first - 6) <= 1, f"K={first}")

        lf = np.linspace(0.5, 100.0, 10001)
        column = stability_modulus(rule3, 4, lf, 0.5)
        v.check("column lambda_s=0.5, lambda_f<=100, K=4", column.max() <= threshold,
                f"max |R|={column.max():.6f}")
    v.check("runtime<10s", t.seconds < 10, f"{t.seconds:.2f}s")
    v.finish()


def _zero_to_node(sys, rule, dt, u0, K):
    n, M = sys.dimension, rule.M
    pre = dt * (np.kron(rule.Qfast, sys.a_fast) + np.kron(rule.Qslow, sys.a_slow))
    L = np.eye(M * n) - pre
    R = dt * np.kron(rule.Q, sys.matrix) - pre
    U0 = np.tile(u0, M).astype(complex)
    U = U0.copy()
    for _ in range(K):
        U = np.linalg.solve(L, U0 + R @ U)
    return U.reshape(M, n)


def test_criterion_06_collocation_fixed_point(verdict):
    v = verdict(6, "fixed point and oracle")
    rule = make_rule("radau", 3)
    u0 = np.array([1.0 + 0j])
    with _Timer() as t:
        checked, failures, worst = 0, [], 0.0
        for lf in np.linspace(0.0, 12.0, 13):
            for ls in np.linspace(0.0, 5.0, 11):
                if lf < ls:
                    continue
                rho = spectral_radius(build_matrices(ScalarParams(lf, ls, 1.0), rule).E)
                if rho >= 0.9:
                    continue
                sys = ScalarTestSystem(lf, ls)
                err = np.max(np.abs(step(u0, sys, SdcConfig(rule, K=25), 1.0).stages
                                    - solve_collocation(u0, sys, rule, 1.0)))
                checked += 1
                if err > 1e-10:
                    failures.append(rho)
                    worst = max(worst, err)
        detail = f"{checked - len(failures)}/{checked} points within 1e-10"
        if failures:
            detail += f"; failing rho from {min(failures):.2f}, worst error {worst:.1e}"
        v.check("K=25 matches collocation where rho<0.9", not failures, detail)

        A_fast = np.array([[0.0, 3.0], [-3.0, 0.0]])
        A_slow = np.array([[-0.2, 0.5], [-0.5, -0.1]])
        osc = LinearSplitSystem(A_fast, A_slow)
        worst = 0.0
        for family in ("radau", "lobatto", "legendre"):
            r = make_rule(family, 4)
            x0 = np.array([0.3, 1.1])
            state = initialize(x0, r.M)
            for K in range(1, 6):
                state = sweep(state, osc, SdcConfig(r, K=1), 0.7)
                worst = max(worst, np.max(np.abs(state.U - _zero_to_node(osc, r, 0.7, x0, K))))
        v.check("node-to-node = zero-to-node", worst < 1e-12, f"max diff {worst:.1e}")
    v.check("runtime<1s", t.seconds < 1, f"{t.seconds:.2f}s")
    v.finish()


def test_criterion_07_dispersion(verdict):
    v = verdict(7, "dispersion")
    U, c, dt = 0.05, 1.0, 1.0
    rule = make_rule("radau", 3)
    with _Timer() as t:
        small = np.geomspace(1e-5, 1e-3, 6)
        curve = sweep_curve(small, U, c, dt, rule, 3)
        rel = max(abs(curve.phase_speed[0, 0] - (U + c)) / (U + c), abs(curve.phase_speed[1, 0] - (U - c)) / (c - U))
        v.check("kappa->0 phase speeds", rel < 1e-6, f"rel err {rel:.1e}")

        kappas = np.linspace(0.0, np.pi / 2, 257)[1:]
        worst = 0.0
        c3 = sweep_curve(kappas, U, c, dt, rule, 3)
        for i, kappa in enumerate(kappas):
            Z = build_update_matrix(WaveParams(U, c, kappa, dt), rule, 3)
            for b in range(2):
                z = np.exp(-1j * c3.omega[b, i] * dt)
                worst = max(worst, abs(np.linalg.det(z * np.eye(2) - Z)))
        v.check("roots satisfy determinant", worst < 1e-10, f"max {worst:.1e}")

        e3 = max_phase_speed_error(c3, U, c)
        e5 = max_phase_speed_error(sweep_curve(kappas, U, c, dt, rule, 5), U, c)
        v.check("K=5 error <= K=3 error", e5 <= e3, f"{e5:.2e} <= {e3:.2e}")
    v.check("runtime<10s", t.seconds < 10, f"{t.seconds:.2f}s")
    v.finish()


def test_criterion_08_multiscale(verdict):
    v = verdict(8, "multi-scale damping")
    with _Timer() as t:
        res = run(ExperimentConfig("multiscale", {"scheme": "sdc", "M": 2, "K": 2}))
    m = res.metrics["sdc-M2-K2"]
    nx = 512
    v.check("fast envelope<10%", m["fast_envelope_ratio"] < 0.1, f"{m['fast_envelope_ratio']:.1e}")
    v.check("slow peak>90%", m["slow_peak"] > 0.9, f"{m['slow_peak']:.4f}")
    offset = abs((m["slow_centroid"] - 0.9 + 0.5) % 1.0 - 0.5)
    v.check("centroid within 2 cells of 0.9", offset <= 2.0 / nx, f"x={m['slow_centroid']:.4f}")
    v.check("runtime<60s", t.seconds < 60, f"{t.seconds:.1f}s")
    v.finish()


def _boussinesq_checks(v, nx, nz, budget):
    base = ExperimentConfig("boussinesq", {"nx": nx, "nz": nz}).resolved()
    with _Timer() as t:
        _, _, order4 = boussinesq_trajectory(base, "sdc", 3, 4, 30.0)
    v.check("order 4 dt=30 solves=1200", order4["solves"] == 1200, f"{order4['solves']}")
    v.check(f"runtime<{budget}s", t.seconds < budget, f"{t.seconds:.1f}s")
    _, _, order3 = boussinesq_trajectory(base, "sdc", 3, 3, 6.0)
    v.check("order 3 dt=6 solves=4500", order3["solves"] == 4500, f"{order3['solves']}")
    for label, info in (("order 4", order4), ("order 3", order3)):
        means = info["per_sweep_mean_iterations"]
        ok = all(b <= a for a, b in zip(means, means[1:]))
        v.check(f"{label} per-sweep GMRES non-increasing", ok, "[" + ", ".join(f"{m:.1f}" for m in means) + "]")
    v.finish()


def test_criterion_09_boussinesq_smoke(verdict):
    _boussinesq_checks(verdict(9, "Boussinesq accounting, 150x15"), 150, 15, 120)


@pytest.mark.slow
def test_criterion_09_boussinesq_full(verdict):
    _boussinesq_checks(verdict("9-full", "Boussinesq accounting, 300x30"), 300, 30, 900)


DETERMINISM_ARGS = {
    "nodes": [],
    "stability": [],
    "stiff-limit": [],
    "dispersion": [],
    "converge": [],
    "residual-rates": [],
    "multiscale": [],
    "boussinesq": ["--param", "nx=150", "--param", "nz=15", "--param", "T=600"],
}


def test_criterion_10_determinism(verdict, tmp_path):
    v = verdict(10, "determinism")
    for name, args in DETERMINISM_ARGS.items():
        outputs = []
        for i in range(2):
            out = tmp_path / f"{name}-{i}.csv"
            code = cli.main([name, "--out", str(out)] + args)
            outputs.append((code, out.read_bytes(), out.with_suffix(".json").read_bytes()))
        same = outputs[0] == outputs[1] and outputs[0][0] == 0
        v.check(name, same, "" if same else f"exit codes {outputs[0][0]}, {outputs[1][0]}")
    v.finish()
