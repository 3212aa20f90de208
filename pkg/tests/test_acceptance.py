"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerances.

Run ``pytest tests/test_acceptance.py -v``; the lines are repeated in the
terminal summary. Criterion 1 fails on two of its sub-items: the printed
values are roundings (see the messages for the exact numbers).
"""

import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from helpers import oracle_phi_g, random_expr
from hysterix import presets
from hysterix.backstepping import Attractor, classical_backstepping, compute_k, synthesize_phi_g
from hysterix.cli import main, reproduce
from hysterix.expr import differentiate, evaluate, substitute
from hysterix.hybrid import simulate, validate_arc
from hysterix.integrator import integrate_fixed
from hysterix.plant import preliminary_example
from hysterix.sampling import SampleConfig, halton_box, level_ring_points

RESULTS = []


def record(criterion, ok, detail):
    line = f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} | {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def _within(value, target, tol):
    return abs(value - target) <= tol


# ------------------------------------------------------------------------------- 1


def test_criterion_1_constants():
    t0 = time.perf_counter()
    theta, rho, a = Fraction(1, 1000), Fraction(2), Fraction(10)
    c1 = (2 + rho) * theta / 2 + 1
    eps = 1 - theta * (2 + rho) / (2 * c1)
    M = theta / (2 * rho * (2 * c1 - theta * (2 + rho)))
    k = 2 * (M + a) / a**2
    # library values must agree with the exact ones
    pc = presets.paper_constants()
    lib = {"c1": pc.c1, "epsilon": pc.epsilon, "M": pc.M, "k": compute_k(pc.M, 10.0)}
    exact = {"c1": c1, "epsilon": eps, "M": M, "k": k}
    agree = all(abs(Fraction(lib[n]) - exact[n]) <= Fraction(1, 10**15) for n in lib)
    cert = presets.paper_certificate()
    local = presets.paper_local()
    max_v = float(local.np_V(Attractor(cert, cfg=SampleConfig()).points).max())
    elapsed = time.perf_counter() - t0
    items = [
        ("c1", float(c1), 1.0020, 5e-5),
        ("epsilon", float(eps), 0.998, 5e-4),
        ("M", float(M), 1.25e-4, 1e-9),
        ("k", float(k), 0.2, 3e-7),
        ("max_A V_ell", max_v, 1e-4, 0.1 * 1e-4),
    ]
    parts, ok = [], agree and elapsed < 1.0
    for name, val, ref, tol in items:
        good = _within(val, ref, tol)
        ok &= good
        parts.append(f"{name}={val:.10g} (want {ref:g}+-{tol:g}: {'ok' if good else 'OUT'})")
    parts.append(f"library==exact: {agree}; runtime {elapsed:.3f}s")
    record(1, ok, "; ".join(parts))
    assert ok, "; ".join(parts)


def test_criterion_1_printed_roundings():
    """Supplementary: the two out-of-tolerance values agree with the printed digits."""
    cert = presets.paper_certificate()
    local = presets.paper_local()
    max_v = float(local.np_V(Attractor(cert, cfg=SampleConfig()).points).max())
    k = compute_k(presets.paper_constants().M, 10.0)
    # analytic maximum over A: V_ell at an edge x1 = +-sqrt(2M) of the attractor
    r = math.sqrt(2 * cert.M)
    edge = max(local.V_at((x1, cert.phi1_at((x1,)))) for x1 in (r, -r))
    ok = round(k, 1) == 0.2 and round(max_v, 4) == 0.0001 and _within(max_v, edge, 1e-12)
    record("1-supplement", ok, f"k={k!r} rounds to {round(k, 1)}; max_A V_ell={max_v:.6g} "
           f"(analytic edge value {edge:.6g}) rounds to {round(max_v, 4)}")
    assert ok


# ------------------------------------------------------------------------------- 2


def test_criterion_2_trajectory(tmp_path):
    t0 = time.perf_counter()
    summary = reproduce(tmp_path)
    elapsed = time.perf_counter() - t0
    d = summary["variants"]["derived"]
    lit = summary["variants"]["paper-literal"]
    jumps = d["jumps"]
    ok = (
        len(jumps) == 2
        and (jumps[0]["q_from"], jumps[0]["q_to"], jumps[0]["t"], jumps[0]["j"]) == (1, 2, 0.0, 0)
        and (jumps[1]["q_from"], jumps[1]["q_to"], jumps[1]["j"]) == (2, 1, 1)
        and abs(jumps[1]["V_ell"] - 0.05) <= 1e-8
        and _within(jumps[1]["t"], 0.5314, 0.2 * 0.5314)
        and d["termination"] == "converged"
        and math.hypot(*d["x_final"]) <= 1e-6
        and d["t_final"] < 30.0
        and elapsed < 5.0
    )
    detail = (f"derived t*={d['t_switch']:.6f}, |V_ell(x(t*))-0.05|={abs(jumps[1]['V_ell'] - 0.05):.2e}, "
              f"jumps={[(j['q_from'], j['q_to']) for j in jumps]}, {d['termination']} at t={d['t_final']:.3f}; "
              f"paper-literal t*={lit['t_switch']:.6f} ({lit['termination']}); published 0.5314; "
              f"runtime {elapsed:.2f}s")
    record(2, ok, detail)
    assert ok, detail
    assert (tmp_path / "fig1_data.dat").exists() and (tmp_path / "paper_derived.csv").exists()


# ------------------------------------------------------------------------------- 3


def test_criterion_3_lyapunov_decrease(plant, cert, local, synthesis):
    t0 = time.perf_counter()
    p = synthesis.params
    phi, k, c, eps = synthesis.controller, p.k, p.c, cert.epsilon
    alpha_M = cert.alpha_at(cert.M)
    X = halton_box(40_000, [-10, -10], [10, 10], seed=0)
    worst_g, n_g = -math.inf, 0
    for x in X:
        x = tuple(x)
        if cert.composite_V(x, k) <= cert.M + p.a_tilde:
            continue
        v1, p1, gV, gP = cert.x1_data(x[:-1])
        e = x[1] - p1
        f = plant.rhs(x, phi(x))
        vdot = (gV[0] - k * e * gP[0]) * f[0] + k * e * f[1]
        bound = eps * (alpha_M - cert.alpha_at(v1)) + 1 / c - c * e * e + 1e-9
        worst_g = max(worst_g, vdot - bound)
        n_g += 1
        if n_g == 10_000:
            break
    R = level_ring_points(local.np_V, 2, 1e-6, local.v_ell, 10_000, seed=0)
    lie = np.einsum("ij,ij->i", local.np_grad_V(R), plant.np_rhs(R, local.np_phi(R)))
    elapsed = time.perf_counter() - t0
    ok = n_g == 10_000 and worst_g <= 0 and R.shape[0] >= 10_000 and lie.max() < 0 and elapsed < 10
    detail = (f"global: {n_g} states with V>M+a~, max(Vdot - bound) = {worst_g:.3e}; "
              f"local: {R.shape[0]} ring states, max dV_ell.f = {lie.max():.3e}; runtime {elapsed:.2f}s")
    record(3, ok, detail)
    assert ok, detail


# ------------------------------------------------------------------------------- 4


def test_criterion_4_exact_identities(plant, cert):
    rng = np.random.default_rng(2024)
    # dV1 . f1(x1, phi1(x1)) against -alpha(V1), evaluated in exact rational arithmetic
    lhs_e = substitute(plant.f1[0], {"x2": cert.phi1})
    dV1 = cert.grad_V1[0]
    worst1 = Fraction(0)
    for x in rng.uniform(-100, 100, 1000):
        ctx = {"x1": Fraction(float(x))}
        lhs = evaluate(dV1, ctx, exact=True) * evaluate(lhs_e, ctx, exact=True)
        rhs = -evaluate(cert.alpha, {"s": evaluate(cert.V1, ctx, exact=True)}, exact=True)
        worst1 = max(worst1, abs(lhs - rhs))
    # classical baseline: dV_b/dt = -c1 x1^2 - c2 (x2 + (1 + c1) x1 + theta x1^2)^2
    pre = preliminary_example(1e-3)
    c1b, c2b = 1.5, 2.0
    phi_b, V_b = classical_backstepping(pre, c1b, c2b)
    grad = [differentiate(V_b, v) for v in ("x1", "x2")]
    worst2 = 0.0
    for x1, x2 in rng.uniform(-5, 5, (1000, 2)):
        f = pre.rhs((x1, x2), phi_b((x1, x2)))
        ctx = {"x1": x1, "x2": x2}
        vdot = evaluate(grad[0], ctx) * f[0] + evaluate(grad[1], ctx) * f[1]
        z = x2 + (1 + c1b) * x1 + 1e-3 * x1**2
        worst2 = max(worst2, abs(vdot - (-c1b * x1**2 - c2b * z**2)))
    ok = worst1 <= Fraction(1, 10**12) and worst2 <= 1e-9
    detail = f"virtual-control identity max |error| = {float(worst1):.3e} (exact); " \
             f"classical baseline max |error| = {worst2:.3e}"
    record(4, ok, detail)
    assert ok, detail


# ------------------------------------------------------------------------------- 5 & 7


@pytest.fixture(scope="module")
def grid_arcs(plant, controller):
    g = np.linspace(-5, 5, 20)
    arcs = []
    for q0 in (1, 2):
        for x1 in g:
            for x2 in g:
                arcs.append(simulate(plant, controller, (float(x1), float(x2)), q0))
    return arcs


def test_criterion_5_structure(grid_arcs, plant, controller):
    paper = simulate(plant, controller, presets.PAPER_X0, presets.PAPER_Q0)
    failures = []
    for arc in grid_arcs + [paper]:
        try:
            validate_arc(arc)
        except AssertionError as exc:
            failures.append(str(exc))
    # q is constant within a phase by construction; t must be nondecreasing along the whole arc
    mono = all(all(b[0] >= a[0] for a, b in zip(rows, rows[1:]))
               for rows in (list(arc.rows()) for arc in grid_arcs))
    max_jumps = max(len(a.jumps) for a in grid_arcs)
    terms = sorted({a.termination for a in grid_arcs})
    ok = not failures and mono and max_jumps <= 2
    detail = (f"{len(grid_arcs)} grid runs (20x20, q0 in {{1,2}}) + paper run; validator failures "
              f"{len(failures)}; max jumps {max_jumps}; terminations {terms}")
    record(5, ok, detail)
    assert ok, detail


def test_criterion_7_integrator(grid_arcs, plant, controller):
    decay = lambda t, y: (-y[0],)  # noqa: E731
    ys = [integrate_fixed(decay, 0.0, (1.0,), 1.0, n)[0] for n in (8, 16, 32)]
    order = math.log2(abs(ys[0] - ys[1]) / abs(ys[1] - ys[2]))
    paper = simulate(plant, controller, presets.PAPER_X0, presets.PAPER_Q0)
    localized = [jr for arc in grid_arcs + [paper] for jr in arc.jumps if jr.localized]
    worst = max(abs(jr.guard) for jr in localized)
    recheck = max(abs(controller.guard(jr.q_from, jr.x)) for jr in localized)
    ok = 4.5 <= order <= 5.5 and worst <= 1e-9 and recheck <= 1e-9
    detail = (f"Richardson order {order:.3f}; {len(localized)} localized jumps, "
              f"max |guard| {worst:.2e} (re-evaluated {recheck:.2e})")
    record(7, ok, detail)
    assert ok, detail


# ------------------------------------------------------------------------------- 6


def test_criterion_6_oracles(plant, cert, synthesis):
    phi = synthesize_phi_g(plant, cert, presets.PAPER_A, presets.PAPER_C, variant="derived")
    P = halton_box(1000, [-10, -10], [10, 10], seed=42)
    worst_phi = 0.0
    for x1, x2 in P:
        ref = oracle_phi_g(x1, x2)
        worst_phi = max(worst_phi, abs(phi((x1, x2)) - ref))
    rng = np.random.default_rng(7)
    worst_ad = 0.0
    for _ in range(1000):
        e = random_expr(rng, 4)
        p = {"x1": float(rng.uniform(-1, 1)), "x2": float(rng.uniform(-1, 1))}
        for v in ("x1", "x2"):
            d = evaluate(differentiate(e, v), p)
            h = 1e-5 * (1 + abs(p[v]))
            fd = (evaluate(e, dict(p, **{v: p[v] + h})) - evaluate(e, dict(p, **{v: p[v] - h}))) / (2 * h)
            worst_ad = max(worst_ad, abs(d - fd) / max(1.0, abs(d)))
    ok = worst_phi <= 1e-10 and worst_ad <= 1e-6
    detail = f"phi_g vs hand closed form max |diff| = {worst_phi:.2e}; autodiff vs central FD max rel = {worst_ad:.2e}"
    record(6, ok, detail)
    assert ok, detail


# ------------------------------------------------------------------------------- 8


@pytest.mark.parametrize(
    "label, overrides, failing",
    [
        ("a: f2 = x1", ['plant.f2="x1"'], "f2_nonvanishing"),
        ("b: phi_ell = 0", ['local.phi_ell="0"'], "local_decrease"),
        ("c: v_ell below max_A V_ell", ["local.v_ell=1e-5", "local.v_ell_tilde=5e-6"], "attractor_in_local"),
    ],
)
def test_criterion_8_negative_controls(tmp_path, capsys, label, overrides, failing):
    argv = ["verify", "--out", str(tmp_path)]
    for o in overrides:
        argv += ["--set", o]
    t0 = time.perf_counter()
    code = main(argv)
    elapsed = time.perf_counter() - t0
    capsys.readouterr()
    data = json.loads((tmp_path / "verify.json").read_text())
    entry = next(e for e in data["entries"] if e["name"] == failing)
    ok = code == 1 and not entry["passed"] and entry["witness"] is not None and elapsed < 5.0
    detail = (f"({label}) exit {code}; {failing} margin {entry['margin']:.3e} "
              f"witness {tuple(round(w, 6) for w in entry['witness'])}; {elapsed:.2f}s")
    record(8, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
