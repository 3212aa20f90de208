"""Sampling-based checks of the standing assumptions.

Every check returns :class:`VerificationEntry` objects carrying the worst
signed margin (positive means satisfied) and the point that attains it. A
pass only means no violation was found on the sample.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .expr import compile_numpy
from .backstepping import Attractor, BacksteppingCertificate
from .hybrid import simulate
from .hysteresis import HysteresisController, LocalCertificate, tube_max_V_ell
from .integrator import IntegratorConfig
from .plant import PlantModel
from .sampling import SampleConfig, halton_box, level_ring_points

__all__ = [
    "VerificationEntry",
    "VerificationReport",
    "check_local_decrease",
    "check_global_certificate",
    "check_attractor_in_local",
    "check_hybrid_conditions",
    "check_f2_nonvanishing",
]


@dataclass
class VerificationEntry:
    name: str
    domain: str
    samples: int
    margin: float
    witness: tuple[float, ...] | None
    passed: bool
    strict: bool = True
    vacuous: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["witness"] = None if self.witness is None else list(self.witness)
        return d


@dataclass
class VerificationReport:
    entries: list[VerificationEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def extend(self, entries):
        if isinstance(entries, VerificationEntry):
            entries = [entries]
        self.entries.extend(entries)
        return self

    def __getitem__(self, name) -> VerificationEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_json(self) -> str:
        return json.dumps(
            {"passed": self.passed, "entries": [e.to_dict() for e in self.entries]},
            indent=2, allow_nan=True,
        )

    def to_table(self) -> str:
        w = max([len("check")] + [len(e.name) for e in self.entries])
        head = f"{'check':<{w}} {'result':<7} {'margin':>13} {'samples':>9}  witness"
        lines = [head, "-" * len(head)]
        for e in self.entries:
            res = "PASS" if e.passed else "FAIL"
            if e.vacuous:
                res = "VACUOUS"
            wit = "-" if e.witness is None else "(" + ", ".join(f"{v:.6g}" for v in e.witness) + ")"
            lines.append(f"{e.name:<{w}} {res:<7} {e.margin:>13.6g} {e.samples:>9}  {wit}")
        return "\n".join(lines)


def _strict_entry(name, domain, values, points, note=""):
    """Condition ``values < 0`` everywhere; margin ``-max(values)``."""
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        i = int(np.argmax(bad))
        return VerificationEntry(name, domain, values.size, -math.inf, tuple(map(float, points[i])),
                                 False, note=note or "non-finite value")
    i = int(np.argmax(values))
    margin = -float(values[i])
    return VerificationEntry(name, domain, values.size, margin, tuple(map(float, points[i])),
                             margin > 0, note=note)


def _nonstrict_entry(name, domain, lhs, rhs, points, rel_tol, note=""):
    """Condition ``lhs <= rhs``; passes when no sample exceeds its rounding slack."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    diff = lhs - rhs
    bad = ~np.isfinite(diff)
    if bad.any():
        i = int(np.argmax(bad))
        return VerificationEntry(name, domain, diff.size, -math.inf, tuple(map(float, points[i])),
                                 False, strict=False, note=note or "non-finite value")
    slack = rel_tol * (1.0 + np.abs(lhs) + np.abs(rhs))
    i = int(np.argmax(diff))
    margin = -float(diff[i])
    ok = bool(np.all(diff <= slack))
    if not ok:
        i = int(np.argmax(diff - slack))
        margin = -float(diff[i])
    return VerificationEntry(name, domain, diff.size, margin, tuple(map(float, points[i])),
                             ok, strict=False, note=note)


def _box(n, dim, half, seed):
    return halton_box(n, np.full(dim, -half), np.full(dim, half), seed)


# --------------------------------------------------------------------------- checks


def check_local_decrease(plant: PlantModel, local: LocalCertificate, cfg: SampleConfig | None = None,
                      v_ell: float | None = None) -> VerificationEntry:
    """``grad V_ell . f_h(x, phi_ell(x)) < 0`` on ``{delta <= V_ell <= v_ell}``."""
    cfg = cfg or SampleConfig()
    v_ell = local.v_ell if v_ell is None else v_ell
    name = "local_decrease"
    if not v_ell > 0 or v_ell < 1e-300:
        return VerificationEntry(name, "empty ring", 0, math.inf, None, True, vacuous=True,
                                 note="empty sample domain")
    delta = 1e-6 * v_ell
    X = level_ring_points(local.np_V, plant.n, delta, v_ell, cfg.n_samples, cfg.seed)
    U = local.np_phi(X)
    F = plant.np_rhs(X, U)
    G = local.np_grad_V(X)
    vals = np.einsum("ij,ij->i", G, F)
    return _strict_entry(name, f"{delta:.3g} <= V_ell <= {v_ell:.6g}", vals, X)


def _u_grid(plant: PlantModel, cfg: SampleConfig):
    if plant.uses_u_periodically():
        grid = np.linspace(0.0, 2.0 * np.pi, cfg.n_u_periodic, endpoint=False)
        grid = np.unique(np.concatenate([grid, [0.0, 0.5 * np.pi, np.pi, 1.5 * np.pi]]))
        return grid, "u in [0, 2pi) (u enters through sin/cos only)"
    lo, hi = cfg.u_range
    q = halton_box(cfg.n_u_periodic, lo, hi, cfg.seed + 7)[:, 0]
    return np.unique(np.concatenate([q, [lo, 0.0, hi]])), f"u in [{lo:g}, {hi:g}]"


def check_global_certificate(plant: PlantModel, cert: BacksteppingCertificate, box: float | None = None,
                      cfg: SampleConfig | None = None) -> list[VerificationEntry]:
    """The four items of the global stabilizability assumption.

    Entries: item 1 (``dV1.f1(x1, phi1) <= -alpha(V1)``), item 2a (``L_h1 V1`` bound),
    item 2b (``|h1| <= Psi``), item 3 (``|d_x2 h1| <= Psi``), item 4 (``|h2| <= Psi``).
    """
    cfg = cfg or SampleConfig()
    box = cfg.box if box is None else box
    n = plant.n
    m = n - 1
    x1n = cert.x1_names
    eps = cert.epsilon
    alphaM = cert.alpha_at(cert.M)
    tol = cfg.rel_tol

    X1 = np.vstack([np.zeros((1, m)), _box(cfg.n_samples, m, box, cfg.seed)])
    phi1 = cert.np_phi1(X1)
    Xphi = np.column_stack([X1, phi1])
    V1 = cert.np_V1(X1)
    gV = np.stack([compile_numpy(g, x1n)(*X1.T) for g in cert.grad_V1], axis=1)
    f1 = np.stack([plant.np_fn(e)(Xphi) for e in plant.f1], axis=1)
    lhs1 = np.einsum("ij,ij->i", gV, f1)
    rhs1 = -cert.np_alpha(V1)
    dom_x1 = f"x1 in [-{box:g}, {box:g}]^{m}"
    e1 = _nonstrict_entry("global_certificate.item1", dom_x1 + ", x2 = phi1(x1)", lhs1, rhs1, Xphi, tol)

    U, udom = _u_grid(plant, cfg)
    nU = U.size
    # item 2a: x2 pinned to phi1(x1), sup over u
    Xr = np.repeat(Xphi, nU, axis=0)
    Ur = np.tile(U, Xphi.shape[0])
    h1 = np.stack([plant.np_fn(e, with_u=True)(Xr, Ur) for e in plant.h1], axis=1)
    gVr = np.repeat(gV, nU, axis=0)
    lhs2 = np.einsum("ij,ij->i", gVr, h1)
    rhs2 = (1.0 - eps) * np.repeat(cert.np_alpha(V1), nU) + eps * alphaM
    P2 = np.column_stack([Xr, Ur])
    e2a = _nonstrict_entry("global_certificate.item2a", dom_x1 + ", x2 = phi1(x1), " + udom, lhs2, rhs2, P2, tol)

    # items 2b, 3, 4 on the full state box
    nx = max(cfg.n_samples // 4, 256)
    X = np.vstack([np.zeros((1, n)), _box(nx, n, box, cfg.seed + 1)])
    Xr = np.repeat(X, nU, axis=0)
    Ur = np.tile(U, X.shape[0])
    P = np.column_stack([Xr, Ur])
    psi = plant.np_fn(cert.Psi)(Xr)
    dom = f"x in [-{box:g}, {box:g}]^{n}, " + udom
    h1 = np.stack([plant.np_fn(e, with_u=True)(Xr, Ur) for e in plant.h1], axis=1)
    dh1 = np.stack([plant.np_fn(e, with_u=True)(Xr, Ur) for e in plant.d_x2_h1], axis=1)
    h2 = plant.np_fn(plant.h2, with_u=True)(Xr, Ur)
    e2b = _nonstrict_entry("global_certificate.item2b", dom, np.linalg.norm(h1, axis=1), psi, P, tol)
    e3 = _nonstrict_entry("global_certificate.item3", dom, np.linalg.norm(dh1, axis=1), psi, P, tol)
    e4 = _nonstrict_entry("global_certificate.item4", dom, np.abs(h2), psi, P, tol)
    return [e1, e2a, e2b, e3, e4]


def check_attractor_in_local(cert: BacksteppingCertificate, local: LocalCertificate,
                      cfg: SampleConfig | None = None, attractor: Attractor | None = None) -> VerificationEntry:
    """``max_A V_ell < v_ell``."""
    cfg = cfg or SampleConfig()
    A = attractor or Attractor(cert, cfg=cfg)
    vals = local.np_V(A.points)
    i = int(np.argmax(vals))
    margin = local.v_ell - float(vals[i])
    return VerificationEntry("attractor_in_local", f"attractor, V1 <= {cert.M:.6g}", vals.size, margin,
                             tuple(map(float, A.points[i])), margin > 0,
                             note=f"max V_ell over A = {float(vals[i]):.6g}")


def attractor_max_V_ell(cert: BacksteppingCertificate, local: LocalCertificate,
                        cfg: SampleConfig | None = None) -> float:
    A = Attractor(cert, cfg=cfg or SampleConfig())
    return float(local.np_V(A.points).max())


def check_hybrid_conditions(ctrl: HysteresisController, plant: PlantModel,
                             cert: BacksteppingCertificate, a: float,
                             cfg: SampleConfig | None = None,
                             ics: Sequence[tuple[Sequence[float], int]] | None = None,
                             sim_cfg: IntegratorConfig | None = None) -> list[VerificationEntry]:
    """Tube condition ``max_{A + aB} V_ell < v_ell_tilde`` and an empirical check
    that every simulated solution reaches mode 1 inside ``C1``."""
    cfg = cfg or SampleConfig()
    A = Attractor(cert, cfg=cfg)
    tube_max, wit = tube_max_V_ell(ctrl.local, A, a)
    margin = ctrl.v_ell_tilde - tube_max
    e1 = VerificationEntry("hybrid.tube", f"A + {a:g} B", A.points.shape[0], margin,
                           tuple(map(float, wit)), margin > 0,
                           note=f"max V_ell over tube = {tube_max:.6g}")
    if ics is None:
        grid = np.linspace(-5.0, 5.0, 5)
        ics = [((float(p), float(r)), q) for p in grid for r in grid for q in (1, 2)]
    failures = []
    for x0, q0 in ics:
        arc = simulate(plant, ctrl, x0, q0, sim_cfg)
        reached = any(ph.q == 1 and ctrl.in_C(1, ph.samples[-1].x) for ph in arc.phases
                      if ph.t_end > ph.t_start or ph is arc.phases[-1])
        if not reached:
            failures.append((x0, q0))
    if failures:
        x0, q0 = failures[0]
        e2 = VerificationEntry("hybrid.reach_mode1", f"{len(ics)} initial conditions", len(ics),
                               -float(len(failures)), (*map(float, x0), float(q0)), False,
                               note=f"{len(failures)} solutions never reached q=1 in C1")
    else:
        e2 = VerificationEntry("hybrid.reach_mode1", f"{len(ics)} initial conditions", len(ics),
                               1.0, None, True, note="all solutions reached q=1 in C1")
    return [e1, e2]


def check_f2_nonvanishing(plant: PlantModel, box: float | None = None,
                          cfg: SampleConfig | None = None) -> VerificationEntry:
    """``f2 != 0``; a sign change over the (connected) box counts as a zero."""
    cfg = cfg or SampleConfig()
    box = cfg.box if box is None else box
    X = np.vstack([np.zeros((1, plant.n)), _box(cfg.n_samples, plant.n, box, cfg.seed + 2)])
    f2 = plant.np_fn(plant.f2)(X)
    dom = f"x in [-{box:g}, {box:g}]^{plant.n}"
    if not np.all(np.isfinite(f2)):
        i = int(np.argmax(~np.isfinite(f2)))
        return VerificationEntry("f2_nonvanishing", dom, f2.size, -math.inf,
                                 tuple(map(float, X[i])), False, note="non-finite f2")
    a = np.abs(f2)
    i = int(np.argmin(a))
    if (f2 > 0).any() and (f2 < 0).any():
        return VerificationEntry("f2_nonvanishing", dom, f2.size, -float(a[i]), tuple(map(float, X[i])),
                                 False, note="f2 changes sign, so it vanishes in the box")
    margin = float(a[i])
    return VerificationEntry("f2_nonvanishing", dom, f2.size, margin, tuple(map(float, X[i])), margin > 0)
