"""Acceptance suite.  Each test prints one ``PASS``/``FAIL criterion N: ...`` line
and then asserts; the lines are repeated in the terminal summary.  The 3D
experiments (5, 7, 8, 9) are marked slow."""
import math

import numpy as np
import pytest

from inls.classify import growup_rate_fit, predicted_growup_rate
from inls.config import from_values
from inls.diagnostics import bump_profile, make_bump_weight, make_quadratic_weight, read_series_csv
from inls.evolve import EvolveConfig, evolve, linear_substep
from inls.field import gradient_sq_integral, make_grid, mass, sample
from inls.groundstate import compute_constants, validated_grid
from inls.harness import initial_data, run_experiment, sweep_amplitude, virial_check
from inls.model import ModelParams, critical_index, exponent_set, is_admissible_pair

CUBIC_1D = ModelParams(1, 0.0, alpha=2.0, energy_critical=False, exploratory=True)
DEFOC_1D = ModelParams(1, 0.0, alpha=2.0, mu=-1, energy_critical=False, exploratory=True)


ACCEPTANCE_LINES = []


def report(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print("\n" + line)
    assert ok, detail


def test_criterion_1_constants():
    c31 = compute_constants(3, 1.0).c
    err_c = abs(c31 - 8 * math.pi / 3) / (8 * math.pi / 3)
    worst_p, worst_e = 0.0, 0.0
    for N, b in validated_grid():
        k = compute_constants(N, b)
        worst_p = max(worst_p, abs(k.c - k.P_W) / k.c)
        worst_e = max(worst_e, abs(k.E_W - k.alpha * k.c / (2 * (k.alpha + 2))) / k.E_W)
    ok = err_c <= 1e-6 and worst_p <= 1e-8 and worst_e <= 1e-10
    report(1, ok, f"c(3,1) rel err {err_c:.2e}; max |K(W)-P(W)|/c {worst_p:.2e}; max E(W) rel err {worst_e:.2e}")


def test_criterion_2_criticality():
    worst, adm = 0.0, True
    for N, b in validated_grid():
        p = ModelParams(N, b)
        worst = max(worst, abs(critical_index(p) - 1))
        e = exponent_set(p)
        adm &= is_admissible_pair(e.q0, e.r0, N)
    report(2, worst <= 1e-12 and adm, f"max |s_c - 1| = {worst:.1e}; (q0, r0) admissible on all grid points: {adm}")


def test_criterion_3_linear_oracle():
    g = make_grid(1, 2048, 40.0)
    x = g.coords()[0]
    u = sample(lambda x: np.exp(-x**2 / 2), g)
    exact = (1 + 2j) ** -0.5 * np.exp(-x**2 / (2 * (1 + 2j)))
    err = np.linalg.norm(linear_substep(u, 1.0).samples - exact) / np.linalg.norm(exact)
    g2 = make_grid(1, 512, 30.0)
    v = sample(lambda x: 1.5 * np.exp(-x**2 / 2) * np.exp(0.5j * x), g2)
    tr = evolve(v, DEFOC_1D, EvolveConfig(dt=1e-3, t_end=10.0, checkpoint_stride=10**6))
    drift = abs(mass(tr.final) - mass(v)) / mass(v)
    ok = err <= 1e-6 and drift <= 1e-10 and tr.steps == 10**4
    report(3, ok, f"free Gaussian L2 rel err {err:.2e}; mass drift {drift:.2e} over {tr.steps} steps")


def _solve_1d(dt):
    g = make_grid(1, 256, 16.0)
    u = sample(lambda x: 1.2 / np.cosh(x) * np.exp(0.3j * x), g)
    return evolve(u, CUBIC_1D, EvolveConfig(dt=dt, t_end=1.0, checkpoint_stride=10**6)).final.samples


def test_criterion_4_splitting_order():
    dts = [1e-2, 5e-3, 2.5e-3]
    ref = _solve_1d(dts[-1] / 8)
    errs = [np.linalg.norm(_solve_1d(dt) - ref) for dt in dts]
    order = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    report(4, 1.9 <= order <= 2.1, f"measured order {order:.4f}")


def _virial_cfg(points, dt):
    return from_values({"grid.points": points, "grid.L": 16.0, "data.family": "translated-gaussian",
                        "data.amplitude": 0.5, "data.x0": (2.5, 0.0, 0.0), "evolve.dt": dt,
                        "evolve.t_end": 0.2, "evolve.stride": 1, "diag.virial_weight": "quadratic",
                        "diag.virial_R": 7.99, "diag.proxy": False})


@pytest.mark.slow
def test_criterion_5_virial_identity():
    coarse = virial_check(_virial_cfg(64, 0.01))
    fine = virial_check(_virial_cfg(128, 0.005))
    ratio = coarse.residual / fine.residual
    shortcut = max(coarse.shortcut_error, fine.shortcut_error)
    ok = ratio >= 3 and shortcut <= 1e-10
    report(5, ok, f"residual {coarse.residual:.3e} -> {fine.residual:.3e} (ratio {ratio:.2f}); "
                  f"rhs vs 8(K-P) rel {shortcut:.1e}")


def test_criterion_6_weights():
    g = make_grid(3, 48, 12.0)
    bump = make_bump_weight(1.0, g).check_invariants()
    prof = bump_profile()
    r_in = np.linspace(0, 1, 1001)
    exact = np.array_equal(prof.derivative(r_in, 0), r_in**2 / 2)
    r_out = np.linspace(10, 40, 3001)
    zero = np.all(prof.derivative(r_out, 0) == 0)
    phi2 = prof.derivative(np.linspace(0, 12, 120001), 2).max()
    quad = make_quadratic_weight(2.0, make_grid(3, 32, 10.0)).check_invariants()
    ok = (exact and zero and phi2 <= 1 + 1e-10 and bump["ok"] and quad["exact_inside"]
          and quad["constant_outside"])
    report(6, ok, f"bump r^2/2 exact: {exact}, zero beyond 10: {zero}, max phi'' {phi2:.12f}; "
                  f"quadratic exact inside: {quad['exact_inside']}, constant outside 2R: {quad['constant_outside']}")


SWEEP_AMPLITUDES = [round(0.4 + 0.2 * i, 1) for i in range(12)]


@pytest.mark.slow
def test_criterion_7_dichotomy_sweep(tmp_path):
    cfg = from_values({"grid.points": 96, "grid.L": 16.0, "data.family": "gaussian", "data.width": 1.0,
                       "evolve.dt": 0.005, "evolve.t_end": 4.0, "evolve.stride": 20,
                       "evolve.dt_control": True, "evolve.kinetic_cap": 5.0,
                       "output.dir": str(tmp_path), "output.name": "sweep"})
    s = sweep_amplitude(cfg, SWEEP_AMPLITUDES)
    sub = [r for r in s.records if r.threshold["subthreshold"]]
    a = bool(sub) and all(r.monitors["trapping"]["passed"] for r in sub)
    b = not any(r.verdict_kind == "BlowUp" for r in sub)
    c = any(r.verdict_kind == "BlowUp" and r.threshold["E0"] < r.threshold["E_W"]
            and r.threshold["K0"] > r.threshold["c"] for r in s.records)
    d = bool(s.brackets_agree)
    report(7, a and b and c and d,
           f"(a) trapping on {len(sub)} subthreshold runs: {a}; (b) no subthreshold BlowUp: {b}; "
           f"(c) BlowUp with E0<E_W, K0>c: {c}; (d) verdict bracket {s.verdict_bracket} vs "
           f"threshold bracket {s.threshold_bracket}: {d}")


def _stationary_drift(points):
    cfg = from_values({"grid.points": points, "grid.L": 60.0, "data.family": "sampled-W",
                       "data.amplitude": 1.0, "evolve.dt": 0.02, "evolve.t_end": 1.0})
    params = cfg.model()
    u0 = initial_data(cfg, params)
    K0 = gradient_sq_integral(u0)
    Ks = []
    evolve(u0, params, EvolveConfig(dt=0.02, t_end=1.0, checkpoint_stride=5),
           probes=[lambda s, info: Ks.append(gradient_sq_integral(s)) and False])
    return float(np.max(np.abs(np.array(Ks) - K0)) / K0)


@pytest.mark.slow
def test_criterion_8_stationarity():
    d128 = _stationary_drift(128)
    d256 = _stationary_drift(256)
    ok = d128 <= 0.01 and d256 <= 0.5 * d128
    report(8, ok, f"kinetic drift over [0,1]: {d128:.3%} at 128^3, {d256:.3%} at 256^3 "
                  f"(ratio {d128 / d256:.2f}, needs <= 1% and >= 2)")


@pytest.mark.slow
def test_criterion_9_defocusing_scattering(tmp_path):
    cfg = from_values({"model.mu": -1, "grid.points": 64, "grid.L": 20.0, "data.amplitude": 1.0,
                       "evolve.dt": 0.01, "evolve.t_end": 8.0, "evolve.stride": 10,
                       "output.dir": str(tmp_path)})
    rec = run_experiment(cfg)
    s = read_series_csv(rec.csv_path)
    inc = np.diff(s["snorm_cum"])
    decay = inc.max() / inc[-1]
    t, p = s["t"], s["proxy"]
    early = p[(t > 1) & (t <= 2)].sum()
    late = p[(t > 4) & (t <= 8)].sum()
    ok = decay >= 10 and late < 0.5 * early
    report(9, ok, f"snorm increment peak/last {decay:.1f}; proxy [4,8] / [1,2] = {late / early:.3f}")


def test_criterion_10_rate_fit():
    T = np.geomspace(1, 100, 40)
    worst = 0.0
    for rate in (0.25, 0.5, 1.0, 2.0, 3.7):
        fit = growup_rate_fit(T, 3.0 * T**rate, 3, 2.0)
        worst = max(worst, abs(fit.fitted - rate))
    pred = predicted_growup_rate(3, 2.0)
    report(10, worst <= 1e-6 and pred == 1.0, f"max exponent error {worst:.1e}; predicted (3, alpha=2) = {pred}")
