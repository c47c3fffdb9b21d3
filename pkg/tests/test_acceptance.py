"""Acceptance criteria, one test each.

Every test prints a single PASS/FAIL line through the ``verdict`` fixture
before asserting, so the verdict is visible even when a criterion fails.
"""

import csv

import numpy as np
import pytest

from scrambling import cli, exact, lg_model, metrics, scaling, verification
from scrambling.lg_model import LgParams, PowerLaw

pytestmark = pytest.mark.acceptance


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def test_c01_three_route_equivalence(verdict):
    results = verification.run_suite(n_values=(2, 3, 4, 5), draws=5, n_times=10, p_values=(0.1, 0.5), tol=1e-9)
    routes = [r for r in results if "_vs_" in r.name]
    worst = max(routes, key=lambda r: r.max_deviation)
    kinds = {r.name.split("_")[0] for r in routes}
    ok = all(r.passed for r in routes) and kinds == {"ideal", "perturbed"} and all(r.samples >= 50 for r in routes)
    verdict("C1 three-route equivalence", ok,
            f"max deviation {worst.max_deviation:.2e} ({worst.name}, N={worst.n}), tol 1e-9")
    assert ok


def test_c02_selection_rules(verdict):
    results = verification.run_suite(n_values=(2, 3, 4, 5, 6), draws=2, n_times=4, p_values=(0.3,))
    worst = {}
    for r in results:
        if r.name in ("odd_orders_vanish", "perfect_echo_fidelity", "echo_imaginary_part"):
            worst[r.name] = max(worst.get(r.name, 0.0), r.max_deviation)
    ok = worst["odd_orders_vanish"] <= 1e-12 and worst["perfect_echo_fidelity"] <= 1e-10
    ok = ok and worst["echo_imaginary_part"] <= 1e-9
    # direct check of the unperturbed echo at phi = 0
    c = exact.random_gaussian(6, 1.0, seed=1)
    direct = max(abs(metrics.echo_signal(c, 0.0, t, 0.0) - 1) for t in (0.3, 1.1, 2.5))
    ok = ok and direct <= 1e-10
    verdict("C2 selection rules and echo sanity", ok,
            f"odd orders {worst['odd_orders_vanish']:.1e}, |f-1| {max(worst['perfect_echo_fidelity'], direct):.1e}, "
            f"imag {worst['echo_imaginary_part']:.1e}")
    assert ok


def test_c03_ideal_growth_collapse(verdict):
    sizes = (250, 500, 1000)
    t = np.geomspace(0.01, 100, 600)
    ks = {n: lg_model.evolve_amplitudes(lg_model.upsilon_from_params(LgParams(n, 1.0, 0.66)),
                                        lg_model.unit_vector(n), t).K for n in sizes}
    ref = ks[max(sizes)]
    dev = 0.0
    for n in sizes[:-1]:
        before = t < scaling.saturation_time(t, ks[n], n)
        dev = max(dev, float(np.abs(ks[n][before] / ref[before] - 1).max()))
    # common window: K >= 2 up to the earliest saturation
    lo = max(t[np.argmax(ks[n] >= 2)] for n in sizes)
    hi = min(scaling.growth_window(t, ks[n], n)[1] for n in sizes)
    fits = [scaling.powerlaw_fit(t, ks[n], (lo, hi)) for n in sizes]
    spread = max(f.exponent for f in fits) - min(f.exponent for f in fits)
    ok = dev <= 0.01 and spread <= 0.02 and all(f.rms_log_residual < 0.5 for f in fits)
    verdict("C3 ideal growth collapse", ok,
            f"max pre-saturation deviation {dev:.1e}; exponents "
            + ", ".join(f"{f.exponent:.3f}" for f in fits) + f" over t in [{lo:.2f}, {hi:.2f}]")
    assert ok


@pytest.fixture(scope="module")
def calibration(tmp_path_factory):
    out = tmp_path_factory.mktemp("cal")
    code = cli.main(["ideal-growth", "--n-list", "20000", "--delta", "0.78", "--t-max", "80", "--n-times", "400",
                     "--calibrate", "--out-dir", str(out), "--no-plot"])
    assert code == 0
    return {r["convention"]: r for r in _rows(out / "calibration.csv")}


@pytest.mark.slow
def test_c04_adamantane_calibration(verdict, calibration):
    rows = list(calibration.values())
    good = [r for r in rows if float(r["rate_rel_error"]) <= 0.10 and float(r["exponent_error"]) <= 0.15]
    ok = bool(good)
    detail = "; ".join(f"{r['convention']} d={float(r['d_rad_per_ms']):.3g}: rate {float(r['rate_per_ms']):.3g}/ms "
                       f"exp {float(r['exponent']):.3f}" for r in rows)
    verdict("C4 adamantane calibration", ok, detail + " (target 7.41/ms, 4.2)")
    assert ok


def test_c05_localization_transition(verdict):
    base = LgParams(10, 1.0, 0.66, PowerLaw(0.0, 1.0))
    gc = lg_model.gamma_crit(base, rtol=1e-4)

    def upsilon(g1, n=10):
        return lg_model.upsilon_from_params(LgParams(n, 1.0, 0.66, PowerLaw(g1, 1.0)))

    bracket = not lg_model.is_localized(upsilon(gc * (1 - 2e-4))) and lg_model.is_localized(upsilon(gc * (1 + 2e-4)))
    # below: persistent oscillation at late times
    t = np.linspace(0, 2000, 4001)
    k_below = lg_model.evolve_amplitudes(upsilon(0.9 * gc), lg_model.unit_vector(10), t).K[t > 1600]
    swing = (k_below.max() - k_below.min()) / k_below.mean()
    # above: plateau at K_loc
    kdev = 0.0
    real_above = True
    for f in (1.05, 1.5, 3.0):
        u = upsilon(f * gc)
        lam = lg_model.eigenvalues(u)
        real_above &= lam[0].imag == 0
        t_end = 60 / (lam[1].real - lam[0].real)
        k_end = lg_model.evolve_amplitudes(u, lg_model.unit_vector(10), [0, t_end]).K[-1]
        kdev = max(kdev, abs(k_end / lg_model.k_loc(u) - 1))
    re0 = float(np.abs(lg_model.eigenvalues(upsilon(0.0)).real).max())
    gcs = [gc] + [lg_model.gamma_crit(LgParams(n, 1.0, 0.66, PowerLaw(0.0, 1.0))) for n in (100, 1000)]
    ok = bracket and swing > 0.1 and real_above and kdev <= 1e-3 and re0 <= 1e-10 and gcs[0] > gcs[1] > gcs[2]
    verdict("C5 localization transition", ok,
            f"gamma_crit(10,100,1000) = {gcs[0]:.4g}, {gcs[1]:.4g}, {gcs[2]:.4g}; late swing below {swing:.2f}; "
            f"K_loc deviation above {kdev:.1e}; max |Re lambda| at gamma1=0 {re0:.1e}")
    assert ok


def test_c06_equilibrium_independent_of_start(verdict):
    params = LgParams(1000, 1.0, 0.66, PowerLaw(0.01, 1.0))
    u = lg_model.upsilon_from_params(params)
    lam = lg_model.eigenvalues(u)
    t_end = 40 / (lam[1].real - lam[0].real)
    finals, starts = [], []
    for t_ini in (0, 5, 10, 20, 40, 80):
        c0 = lg_model.prepare_initial_cluster(params, t_ini)
        starts.append(lg_model.k_of_t(c0))
        finals.append(lg_model.evolve_amplitudes(u, c0, [0, t_end]).K[-1])
    finals = np.array(finals)
    spread = finals.max() / finals.min() - 1
    ok = lg_model.is_localized(u) and spread <= 5e-3 and len(set(np.round(starts, 3))) >= 5
    verdict("C6 dynamical equilibrium", ok,
            f"K_i from {min(starts):.3g} to {max(starts):.3g} converge to K = {finals.mean():.4f} (spread {spread:.1e})")
    assert ok


def test_c07_constant_leakage_invariance(verdict):
    n = 500
    t = np.linspace(0, 200, 201)
    ref = lg_model.evolve_amplitudes(lg_model.upsilon_from_params(LgParams(n, 1.0, 0.66)), lg_model.unit_vector(n), t).K
    dev = 0.0
    for g in (1e-3, 0.3, 5.0):
        u = lg_model.upsilon_from_params(LgParams(n, 1.0, 0.66, PowerLaw(g, 0.0)))
        dev = max(dev, float(np.abs(lg_model.evolve_amplitudes(u, lg_model.unit_vector(n), t).K - ref).max()))
    ok = dev <= 1e-10
    verdict("C7 constant-leakage invariance", ok, f"max |K - K(gamma=0)| = {dev:.1e}")
    assert ok


def _strong_slope(d, n=200000):
    ps = np.geomspace(0.03, 0.11, 9)
    w = lg_model.transition_rates(LgParams(n, d, 0.78))
    levels = np.arange(1, n + 1, dtype=float)
    pts = []
    for p in ps:
        try:
            pts.append((p, lg_model.k_loc(lg_model.build_upsilon(w, lg_model.Ansatz(p).rates(levels)))))
        except lg_model.LocalizationError:
            pass
    return scaling.powerlaw_fit(*zip(*pts)).exponent


@pytest.mark.slow
def test_c08_kloc_scaling(verdict, calibration, tmp_path):
    # rates are in 1/ms, so the coupling is the calibrated one in rad/ms
    d = float(calibration["fitted"]["d_rad_per_ms"])
    strong = np.geomspace(0.03, 0.11, 9)
    weak = [0.0005, 0.001, 0.002, 0.005, 0.01, 0.015, 0.02]
    p_list = ",".join(f"{p:.6g}" for p in [*weak, *strong])
    out = tmp_path / "kloc"
    code = cli.main(["kloc-scan", "--n", "200000", "--d", repr(d), "--p-list", p_list, "--out-dir", str(out),
                     "--no-plot"])
    assert code == 0
    rows = _rows(out / "kloc_scan.csv")
    k = {float(r["p"]): float(r["K_loc"]) if r["K_loc"] else None for r in rows}
    fits = {r["quantity"]: r for r in _rows(out / "kloc_fit.csv")}
    slope = float(fits["K_loc strong branch"]["exponent"])
    weak_slope = float(fits["K_loc weak branch"]["exponent"])
    finite = all(k[p] is not None and np.isfinite(k[p]) for p in weak) and abs(k[0.0005] / k[0.001] - 1) < 0.05
    flatter = abs(weak_slope) < 0.5 * abs(slope)
    ok = abs(slope + 2) <= 0.2 and flatter and finite
    others = ", ".join(f"d={dv:.3g}: {_strong_slope(dv):.3f}" for dv in
                       (1.0, float(calibration["cyclic"]["d_rad_per_ms"]), float(calibration["angular"]["d_rad_per_ms"])))
    localized = sum(v is not None for p, v in k.items() if p >= 0.03)
    verdict("C8 K_loc scaling", ok,
            f"d={d:.3g} rad/ms: strong-branch slope {slope:.3f} from {localized}/9 localized points (target -2 +/- 0.2); "
            f"weak-branch slope {weak_slope:.3f}; K_loc(p=5e-4) = {k[0.0005]:.4g}; other couplings {others}")
    assert ok


def test_c09_route_cross_check(verdict):
    rng = np.random.default_rng(2024)
    n = 512
    dev = weight = 0.0
    for _ in range(5):
        params = LgParams(n, float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.5, 0.9)),
                          PowerLaw(float(rng.uniform(0, 0.05)), float(rng.uniform(0, 1.5))))
        u = lg_model.upsilon_from_params(params)
        t = np.linspace(0, float(rng.uniform(20, 80)), 100)
        c0 = lg_model.unit_vector(n)
        k_rk = lg_model.evolve_amplitudes(u, c0, t).K
        k_eig = lg_model.k_trace_eigen(u, c0, t)
        dev = max(dev, float(np.abs(k_rk - k_eig).max()))
        weight = max(weight, float(np.abs(lg_model.eigensolve(u).initial_weights(c0)).max()))
    ok = dev <= 1e-6
    verdict("C9 time-stepped vs eigen route", ok,
            f"max |dK| = {dev:.1e} over 5 draws at n=512; largest eigenbasis weight {weight:.1e}")
    assert ok


def test_c10_synthetic_fit_recovery(verdict, tmp_path):
    out = tmp_path / "fit"
    code = cli.main(["fit", "--p-list", "0,0.01,0.02,0.04,0.06,0.08,0.1", "--out-dir", str(out), "--no-plot"])
    assert code == 0
    rows = _rows(out / "fit_truth.csv")
    errs = [max(abs(float(r["chi1_fit"]) / float(r["chi1_true"]) - 1), abs(float(r["alpha_fit"]) / float(r["alpha_true"]) - 1))
            for r in rows if float(r["p"]) > 0]
    ok = rows[0]["chi1_fit"] == "" and len(errs) == 6 and max(errs) <= 0.01
    verdict("C10 synthetic fit recovery", ok,
            f"max relative error on (chi1, alpha) {max(errs):.1e} over {len(errs)} traces; "
            "measured NMR curves and rate points are not regenerated")
    assert ok
