"""Acceptance suite: one recorded pass/fail line per criterion.

Criterion 8 uses one fixed setting for every sub-criterion: indicator
profile with A0 = 1 and M0 = 0, gasket window M = 4 at depth m = 0,
100 samples, master seed 12345, and the default fit windows.
"""
import json
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from scipy import linalg

from fractalids.bernstein import BernsteinFunction, low_energy_exponent
from fractalids.cli import run
from fractalids.environment import SingleSiteProfile, sample_configuration
from fractalids.geometry import build_fractal_system, sierpinski_gasket
from fractalids.ids import (
    annealed_curves,
    default_lambda_window,
    default_t_window,
    dn_gap_diagnostic,
    laplace_exponent_fit,
    lifshitz_fit,
    monotonicity_diagnostic,
)
from fractalids.labeling import ProjectionMap, construct_good_labeling, folded_kernel, verify_good_labeling
from fractalids.runner import load_config, t_grid
from fractalids.spectral import estimate_time_scaling, neumann_eigensystem, neumann_laplacian, subordinated_neumann
from fractalids.verification import alloy_chain, bernstein_dominance, temple_soundness, vacancy_comparison

UNIT = SingleSiteProfile.indicator(1.0, 0)
SEED = 12345


def lattice_vertex_count(M):
    """Gasket window vertices by exact rational arithmetic in the lattice basis."""
    half = Fraction(1, 2)
    shifts = [(Fraction(0), Fraction(0)), (half, Fraction(0)), (Fraction(0), half)]
    cells = [((Fraction(0), Fraction(0)), (Fraction(1), Fraction(0)), (Fraction(0), Fraction(1)))]
    for _ in range(M):
        cells = [tuple((x / 2 + sx, y / 2 + sy) for x, y in c) for sx, sy in shifts for c in cells]
    return len({p for c in cells for p in c})


def phis(d_w):
    return {
        "identity": BernsteinFunction.identity(),
        "stable-1/2": BernsteinFunction.stable(0.5),
        "relativistic": BernsteinFunction.relativistic(d_w / 2, 1.0, d_w),
        "mixture": BernsteinFunction.mixture(BernsteinFunction.stable(0.5), BernsteinFunction.identity()),
    }


# -- 1. geometry and labeling --------------------------------------------------


def test_criterion_1_geometry_labeling(acceptance):
    start = time.perf_counter()
    s = build_fractal_system(sierpinski_gasket(), validation_depth=3)
    counts = {M: s.build_graph(M, 0).n_vertices for M in range(1, 6)}
    counts_ok = all(n == 3 * (3**M + 1) // 2 == lattice_vertex_count(M) for M, n in counts.items())
    lab = construct_good_labeling(s, 0, 3)
    viol = len(verify_good_labeling(lab, depth=3)["violations"])
    g = s.build_graph(4, 0)
    rng = np.random.default_rng(SEED)
    D = g.distance_matrix()
    x, y, z = rng.integers(0, g.n_vertices, (3, 10_000))
    metric_ok = bool(
        np.all(D[x, y] == D[y, x])
        and np.all((D[x, y] == 0) == (x == y))
        and np.all(D[x, z] <= D[x, y] + D[y, z])
    )
    # spot-check the matrix against single-source searches
    metric_ok &= all(np.array_equal(g.distances_from(int(i)), D[i]) for i in x[:20])
    secs = time.perf_counter() - start
    ok = counts_ok and viol == 0 and metric_ok and secs < 10
    assert acceptance(
        "1 geometry/labeling", ok,
        f"counts {list(counts.values())} exact={counts_ok}; GLP violations={viol}; "
        f"metric axioms on 10^4 triples={metric_ok}; {secs:.1f}s (< 10s)",
    )


# -- 2. folding ------------------------------------------------------------------


def test_criterion_2_folding(gasket, glp, acceptance):
    worst_stoch = worst_rev = 0.0
    for M in (1, 2, 3):
        kern, _ = folded_kernel(gasket, glp, M, 0)
        worst_stoch = max(worst_stoch, kern.stochasticity_error())
        worst_rev = max(worst_rev, kern.reversibility_error())
    checked, bad = 0, 0
    for M in (1, 2, 3):
        pm = ProjectionMap(glp.at_order(M), M, 0, pad=2)
        for v in np.nonzero(pm.ambient.ranks >= 2)[0]:
            checked += 1
            bad += len(set(pm.images_via_all_cells(int(v)))) != 1
    ok = worst_stoch <= 1e-12 and worst_rev <= 1e-12 and bad == 0
    assert acceptance(
        "2 folding", ok,
        f"row-sum err {worst_stoch:.1e}, reversibility err {worst_rev:.1e} (<= 1e-12); "
        f"rank-2 projection conflicts {bad}/{checked}",
    )


# -- 3. spectral scaling ---------------------------------------------------------


def test_criterion_3_spectral_scaling(gasket, glp, acceptance):
    start = time.perf_counter()
    sc = estimate_time_scaling(gasket, glp, depths=(1, 2, 3, 4))
    target = 2.0 ** (-sc.d_w)
    mu2 = {M: neumann_eigensystem(gasket, glp, M, 0)[0][1] for M in (2, 3, 4, 5)}
    ratios = [mu2[M + 1] / mu2[M] for M in (2, 3, 4)]
    ratio_err = max(abs(r / target - 1) for r in ratios)
    op = neumann_laplacian(gasket, glp, 3, 0)
    lam, vec = linalg.eigh(op.dense())
    simple = lam[0] < 1e-12 < lam[1]
    # the symmetrized ground state is sqrt(w) times a constant
    g0 = vec[:, 0] / np.sqrt(op.weights)
    constant = np.ptp(g0) <= 1e-10 * np.abs(g0).max()
    secs = time.perf_counter() - start
    ok = 4.95 <= sc.tau <= 5.05 and ratio_err <= 0.05 and simple and constant and secs < 60
    assert acceptance(
        "3 spectral scaling", ok,
        f"tau_hat={sc.tau:.4f} in [4.95, 5.05]; mu2 ratios {np.round(ratios, 4).tolist()} vs "
        f"L^-d_w={target:.4f} (max dev {ratio_err:.1%} <= 5%); simple constant zero mode={simple and constant}; {secs:.1f}s",
    )


# -- 4. subordination ------------------------------------------------------------


def test_criterion_4_subordination(gasket, glp, tau, scaling, acceptance):
    d_w = scaling.d_w
    lam, _ = neumann_eigensystem(gasket, glp, 3, -1)
    mu = lam * tau
    worst = 0.0
    for phi in phis(d_w).values():
        got = linalg.eigvalsh(subordinated_neumann(gasket, glp, 3, -1, phi, tau))
        expected = np.sort(phi(mu))
        worst = max(worst, np.abs(got - expected).max() / max(1.0, expected.max()))
    a_id = low_energy_exponent(BernsteinFunction.identity(), d_w).alpha
    a_rel = low_energy_exponent(BernsteinFunction.relativistic(d_w / 2, 1.0, d_w), d_w, lam0=1e-3).alpha
    a_st = low_energy_exponent(BernsteinFunction.stable(0.5), d_w).alpha
    ok = (
        worst <= 1e-12
        and abs(a_id / d_w - 1) <= 0.01
        and abs(a_rel / d_w - 1) <= 0.01
        and abs(a_st - d_w / 2) <= 1e-9
    )
    assert acceptance(
        "4 subordination", ok,
        f"max |lambda_k - phi(mu_k)| = {worst:.1e} (<= 1e-12); alpha identity {a_id:.4f}, "
        f"relativistic {a_rel:.4f} vs d_w {d_w:.4f} (1%); stable {a_st:.10f} vs {d_w / 2:.10f} (1e-9)",
    )


# -- 5. bound suite --------------------------------------------------------------


@pytest.mark.parametrize("name", ["identity", "stable-1/2"])
def test_criterion_5_bound_suite(gasket_dw, glp, tau, name, acceptance):
    start = time.perf_counter()
    phi = phis(gasket_dw.d_w)[name]
    alpha = low_energy_exponent(phi, gasket_dw.d_w).alpha
    temple = temple_soundness(500, SEED)
    bern = bernstein_dominance(n_max=30)
    chain = alloy_chain(gasket_dw, glp, phi, alpha, tau, UNIT, 1.0, 3, -1, 100, SEED, delta=0.3)
    secs = time.perf_counter() - start
    l34 = chain["lemma34"]
    ok = temple["pass"] and bern["pass"] and chain["pass"] and secs < 300
    assert acceptance(
        f"5 bound suite [{name}]", ok,
        f"Temple violations {temple['violations']}/500; Bernstein violations {len(bern['violations'])}/{bern['checked']}; "
        f"chain violations {len(chain['chain_violations'])}/100; Lemma 3.3 violations {len(chain['lemma33_violations'])}; "
        f"Lemma 3.4 pass rate {l34['pass_rate']:.0%} on {l34['in_event']} samples; {secs:.1f}s",
    )


# -- 6. environment statistics ---------------------------------------------------


def test_criterion_6_environment(tmp_path, acceptance):
    n = 10_000
    empty = np.mean([sample_configuration(1.0, 0, 0, SEED, N=3, index=i, pad=0).counts[0] == 0 for i in range(n)])
    p = np.exp(-1.0)
    se = np.sqrt(p * (1 - p) / n)
    vac_ok = abs(empty - p) <= 3 * se
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"M_list": [2, 3], "samples": 10, "t_grid": {"num": 21}}))
    codes = [run(["ids", "--config", str(cfg), "--out", str(tmp_path / d)]) for d in ("a", "b")]

    def artifacts(d):
        root = next(p for p in (tmp_path / d).iterdir() if not p.name.startswith("."))
        return {str(f.relative_to(root)): f.read_bytes() for f in sorted(root.rglob("*")) if f.suffix in (".csv", ".json") and f.name != "manifest.json"}

    a, b = artifacts("a"), artifacts("b")
    same = codes == [0, 0] and a == b and len(a) > 0
    assert acceptance(
        "6 environment statistics", vac_ok and same,
        f"vacancy {empty:.5f} vs e^-1 {p:.5f} ({abs(empty - p) / se:.2f} se <= 3); "
        f"{len(a)} artifacts byte-identical across runs={same}",
    )


# -- 7. convergence diagnostics --------------------------------------------------


@pytest.mark.parametrize("name", ["identity", "stable-1/2"])
def test_criterion_7_diagnostics(gasket_dw, glp, tau, name, acceptance):
    start = time.perf_counter()
    phi = phis(gasket_dw.d_w)[name]
    ts = (1.0, 5.0, 25.0)
    runs = annealed_curves(gasket_dw, glp, phi, UNIT, 1.0, [2, 3, 4], 0, 50, SEED, tau, t_grid=ts)
    cN = {M: r.curve("N") for M, r in runs.items()}
    cD = {M: r.curve("D") for M, r in runs.items()}
    mono = monotonicity_diagnostic(cN, ts, sigmas=2.0)
    gap = dn_gap_diagnostic(cN, cD, (1.0,))
    g = [gap["gaps"][M][1.0] for M in (2, 3, 4)]
    secs = time.perf_counter() - start
    ok = mono["pass"] and g[2] < g[0] and secs < 900
    assert acceptance(
        f"7 diagnostics [{name}]", ok,
        f"monotonicity violations {len(mono['violations'])}/{len(mono['checks'])} (2 sigma); "
        f"D/N gap at t=1 for M=2,3,4: {', '.join(f'{x:.4f}' for x in g)}; {secs:.1f}s",
    )


# -- 8. Lifshitz exponents -------------------------------------------------------


@pytest.fixture(scope="module")
def lifshitz_runs(gasket_dw, glp, tau):
    """M = 4, m = 0, 100 samples at nu = 1 and nu = 4 for both exponent targets."""
    tg = t_grid(load_config({}))
    out = {}
    start = time.perf_counter()
    for name in ("identity", "stable-1/2"):
        phi = phis(gasket_dw.d_w)[name]
        alpha = low_energy_exponent(phi, gasket_dw.d_w).alpha
        runs = {
            nu: annealed_curves(gasket_dw, glp, phi, UNIT, nu, [4], 0, 100, SEED, tau, t_grid=tg, dirichlet=False)[4]
            for nu in (1.0, 4.0)
        }
        out[name] = (phi, alpha, runs)
    out["seconds"] = time.perf_counter() - start
    return out


NAMES = ["identity", "stable-1/2"]


@pytest.mark.parametrize("name", NAMES)
def test_criterion_8a_lambda_slope(lifshitz_runs, gasket_dw, name, acceptance):
    phi, alpha, runs = lifshitz_runs[name]
    d = gasket_dw.d
    ids = runs[1.0].ids("N")
    fit = lifshitz_fit(ids, default_lambda_window(ids), -d / alpha)
    ok = fit.relative_error <= 0.25
    assert acceptance(
        f"8a lambda-domain slope [{name}]", ok,
        f"slope {fit.exponent:.3f} +- {fit.stderr:.3f} vs -d/alpha {-d / alpha:.3f} "
        f"(rel. err {fit.relative_error:.1%}, tol 25%) on lambda in [{fit.window[0]:.3g}, {fit.window[1]:.3g}]",
    )


@pytest.mark.parametrize("name", NAMES)
def test_criterion_8b_t_slope(lifshitz_runs, gasket_dw, name, acceptance):
    phi, alpha, runs = lifshitz_runs[name]
    d = gasket_dw.d
    curve = runs[1.0].curve("N")
    fit = laplace_exponent_fit(curve, default_t_window(curve), d / (d + alpha))
    ok = fit.relative_error <= 0.25
    assert acceptance(
        f"8b t-domain slope [{name}]", ok,
        f"slope {fit.exponent:.3f} +- {fit.stderr:.3f} vs d/(d+alpha) {d / (d + alpha):.3f} "
        f"(rel. err {fit.relative_error:.1%}, tol 25%) on t in [{fit.window[0]:.3g}, {fit.window[1]:.3g}]",
    )


@pytest.mark.parametrize("name", NAMES)
def test_criterion_8c_vacancy_bound(lifshitz_runs, gasket_dw, glp, tau, name, acceptance):
    phi, alpha, runs = lifshitz_runs[name]
    curve = runs[1.0].curve("N")
    pts = [float(t) for t in curve.t if 10.0 <= t <= 1000.0]
    rep = vacancy_comparison(curve, gasket_dw, phi, alpha, tau, 1.0, UNIT.M_0, pts, sigmas=2.0)
    bad = [r for r in rep["rows"] if not r["ok"]]
    first = f"; first failure at t={bad[0]['t']:.3g}: {bad[0]['value']:.3g} + 2se < bound {bad[0]['bound']:.3g}" if bad else ""
    assert acceptance(
        f"8c vacancy lower bound [{name}]", rep["pass"],
        f"{len(pts) - len(bad)}/{len(pts)} grid times in [10, 1000] satisfy L + 2se >= bound{first}",
    )


@pytest.mark.parametrize("name", NAMES)
def test_criterion_8d_nu_scaling(lifshitz_runs, gasket_dw, name, acceptance):
    phi, alpha, runs = lifshitz_runs[name]
    d = gasket_dw.d
    target = d / (d + alpha)
    pref = {}
    for nu, run_ in runs.items():
        curve = run_.curve("N")
        pref[nu] = laplace_exponent_fit(curve, default_t_window(curve), target).prefactor_fixed
    ratio = pref[4.0] / pref[1.0]
    expected = 4.0 ** (alpha / (d + alpha))
    err = abs(ratio / expected - 1)
    ok = err <= 0.20
    assert acceptance(
        f"8d nu-scaling [{name}]", ok,
        f"prefactor ratio {ratio:.3f} vs 4^(alpha/(d+alpha)) {expected:.3f} (rel. err {err:.1%}, tol 20%)",
    )


def test_criterion_8_runtime(lifshitz_runs, acceptance):
    secs = lifshitz_runs["seconds"]
    assert acceptance("8 runtime", secs < 3600, f"{secs:.1f}s for all criterion 8 sampling (< 1 hour)")


# -- 9. fit self-tests -----------------------------------------------------------


def test_criterion_9_fit_self_tests(gasket_dw, scaling, acceptance):
    d = gasket_dw.d
    errs = []
    for alpha in (scaling.d_w, scaling.d_w / 2):
        k = d / alpha
        lam_fit = lifshitz_fit(lambda lam: np.exp(-np.asarray(lam) ** -k), (0.02, 0.5), -k)
        errs.append(abs(lam_fit.exponent + k))
        e = d / (d + alpha)
        t = np.logspace(0, 4, 81)
        t_fit = laplace_exponent_fit((t, np.exp(-1.5 * t**e)), (10.0, 1e3), e)
        errs.append(abs(t_fit.exponent - e))
    worst = max(errs)
    assert acceptance("9 fit self-tests", worst <= 1e-6, f"max exponent error {worst:.1e} (<= 1e-6)")
