"""Hybrid-arc execution: flow inside ``C_q``, jump on ``D_q``, record everything.

The solution concept is nondeterministic on ``C_q & D_q``. This executor
selects the solution that jumps as soon as the state is in ``D_q``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .integrator import IntegratorConfig, NoCrossingError, StepSizeUnderflow, flow_step, locate_event
from .plant import PlantModel

__all__ = [
    "Sample",
    "Phase",
    "JumpRecord",
    "HybridArc",
    "ArcInvariantError",
    "TERMINATIONS",
    "simulate",
    "simulate_batch",
    "validate_arc",
    "csv_header",
    "write_trajectory_csv",
    "arc_summary",
    "write_summary_json",
]

log = logging.getLogger(__name__)

TERMINATIONS = ("converged", "t_max", "j_max", "escape", "error")


@dataclass(frozen=True)
class Sample:
    t: float
    x: tuple[float, ...]
    u: float


@dataclass
class Phase:
    j: int
    q: int
    t_start: float
    t_end: float
    samples: list[Sample] = field(default_factory=list)


@dataclass(frozen=True)
class JumpRecord:
    t: float
    j: int  # jump goes j -> j + 1
    q_from: int
    q_to: int
    x: tuple[float, ...]
    guard: float
    localized: bool  # found by event bisection (False for jumps at phase start)


@dataclass
class HybridArc:
    phases: list[Phase]
    jumps: list[JumpRecord]
    termination: str
    message: str = ""

    @property
    def t_final(self) -> float:
        return self.phases[-1].t_end

    @property
    def x_final(self) -> tuple[float, ...]:
        return self.phases[-1].samples[-1].x

    @property
    def q_final(self) -> int:
        return self.phases[-1].q

    def rows(self) -> Iterable[tuple[float, int, int, tuple[float, ...], float]]:
        for ph in self.phases:
            for s in ph.samples:
                yield s.t, ph.j, ph.q, s.x, s.u


class ArcInvariantError(AssertionError):
    pass


def _norm(x) -> float:
    return math.sqrt(sum(v * v for v in x))


def simulate(plant: PlantModel, ctrl, x0: Sequence[float], q0: int,
             cfg: IntegratorConfig | None = None) -> HybridArc:
    """Run one hybrid solution from ``(x0, q0)``.

    ``ctrl`` is a :class:`~hysterix.hysteresis.HysteresisController` or a
    :class:`~hysterix.hysteresis.ConstantModeController`.
    """
    cfg = cfg or IntegratorConfig()
    x = tuple(float(v) for v in x0)
    if len(x) != plant.n or not all(map(math.isfinite, x)):
        raise ValueError(f"x0 must be {plant.n} finite numbers")
    if q0 not in ctrl.modes:
        raise ValueError(f"q0 must be one of {ctrl.modes}")
    t, j, q = 0.0, 0, q0
    phases: list[Phase] = []
    jumps: list[JumpRecord] = []
    rhs = plant.rhs

    def finish(term, msg=""):
        return HybridArc(phases, jumps, term, msg)

    while True:
        # jump first whenever the state sits in D_q
        if ctrl.in_D(q, x):
            phases.append(Phase(j, q, t, t, [Sample(t, x, math.nan)]))
            if j >= cfg.j_max:
                return finish("j_max")
            q_new = ctrl.jump(q, x)
            jumps.append(JumpRecord(t, j, q, q_new, x, ctrl.guard(q, x), False))
            j, q = j + 1, q_new
            continue

        phi = ctrl.mode_feedback(q)
        try:
            u0 = phi(x)
        except (ArithmeticError, ValueError) as exc:
            phases.append(Phase(j, q, t, t, [Sample(t, x, math.nan)]))
            return finish("error", str(exc))
        phase = Phase(j, q, t, t, [Sample(t, x, u0)])
        phases.append(phase)
        if _norm(x) <= cfg.converge_radius:
            return finish("converged")
        if t >= cfg.t_max:
            return finish("t_max")

        def fun(_t, y, phi=phi):
            return rhs(y, phi(y))

        h = None
        f = None
        next_sample = t + cfg.sample_stride
        while True:
            try:
                step = flow_step(fun, t, x, cfg, h=h, f0=f, t_stop=cfg.t_max)
            except (ArithmeticError, ValueError, StepSizeUnderflow) as exc:
                return finish("error", str(exc))
            g_end = ctrl.guard(q, step.y)
            crossed = g_end >= 0
            if not crossed and cfg.event_scan and math.isfinite(g_end):
                try:
                    t_ev, x_ev, g_ev = locate_event(lambda y: ctrl.guard(q, y), step.dense, cfg)
                    crossed = True
                except NoCrossingError:
                    pass
            elif crossed:
                t_ev, x_ev, g_ev = locate_event(lambda y: ctrl.guard(q, y), step.dense, cfg)
            if crossed:
                _add_strided(phase, step.dense, next_sample, t_ev, cfg, phi)
                u_ev = _safe(phi, x_ev)
                phase.samples.append(Sample(t_ev, x_ev, u_ev))
                phase.t_end = t_ev
                t, x = t_ev, x_ev
                if j >= cfg.j_max:
                    return finish("j_max")
                q_new = ctrl.jump(q, x)
                jumps.append(JumpRecord(t, j, q, q_new, x, g_ev, True))
                j, q = j + 1, q_new
                break

            if cfg.sample_stride > 0:
                next_sample = _add_strided(phase, step.dense, next_sample, step.t, cfg, phi)
            t, x, f, h = step.t, step.y, step.f, step.h_next
            nx = _norm(x)
            if not math.isfinite(nx) or nx >= cfg.escape_radius:
                phase.samples.append(Sample(t, x, math.nan))
                phase.t_end = t
                return finish("escape", f"|x| = {nx:g} at t = {t:g}")
            try:
                u = phi(x)
            except (ArithmeticError, ValueError) as exc:
                phase.t_end = phase.samples[-1].t
                return finish("error", str(exc))
            done = "converged" if nx <= cfg.converge_radius else "t_max" if t >= cfg.t_max else None
            if cfg.sample_stride <= 0 or done:
                phase.samples.append(Sample(t, x, u))
                phase.t_end = t
            else:
                # keep the arc consistent if a later step fails: t_end tracks the last sample
                phase.t_end = phase.samples[-1].t
            if done:
                return finish(done)


def _safe(phi, x):
    try:
        return phi(x)
    except (ArithmeticError, ValueError):
        return math.nan


def _add_strided(phase, dense, next_sample, t_until, cfg, phi):
    """Append dense-output samples at stride multiples strictly before ``t_until``."""
    if cfg.sample_stride <= 0:
        return next_sample
    while next_sample < t_until:
        if next_sample > phase.samples[-1].t:
            xs = dense(next_sample)
            phase.samples.append(Sample(next_sample, xs, _safe(phi, xs)))
        next_sample += cfg.sample_stride
    return next_sample


def simulate_batch(plant: PlantModel, ctrl, ics: Sequence[tuple[Sequence[float], int]],
                   cfg: IntegratorConfig | None = None, workers: int | None = None) -> list[HybridArc]:
    """One independent simulation per initial condition, results in input order."""
    cfg = cfg or IntegratorConfig()
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda ic: simulate(plant, ctrl, ic[0], ic[1], cfg), ics))
    return [simulate(plant, ctrl, x0, q0, cfg) for x0, q0 in ics]


def validate_arc(arc: HybridArc) -> bool:
    """Check the structural invariants of a recorded hybrid arc; raises on violation."""
    problems = []
    if arc.termination not in TERMINATIONS:
        problems.append(f"unknown termination {arc.termination!r}")
    if not arc.phases:
        raise ArcInvariantError("arc has no phases")
    if len(arc.jumps) != len(arc.phases) - 1:
        problems.append(f"{len(arc.jumps)} jumps for {len(arc.phases)} phases")
    for i, ph in enumerate(arc.phases):
        if not ph.samples:
            problems.append(f"phase {i} has no samples")
            continue
        if ph.j != i:
            problems.append(f"phase {i} has j={ph.j}")
        ts = [s.t for s in ph.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            problems.append(f"phase {i}: time not strictly increasing")
        if ts[0] != ph.t_start or ts[-1] != ph.t_end:
            problems.append(f"phase {i}: sample times do not span [t_start, t_end]")
        if i > 0 and ph.t_start != arc.phases[i - 1].t_end:
            problems.append(f"phase {i}: t_start differs from previous t_end")
    for i, jr in enumerate(arc.jumps):
        if i + 1 >= len(arc.phases):
            break
        before, after = arc.phases[i], arc.phases[i + 1]
        if jr.j != before.j or after.j != jr.j + 1:
            problems.append(f"jump {i}: j does not increment by one")
        if jr.q_from != before.q or jr.q_to != after.q:
            problems.append(f"jump {i}: modes inconsistent with phases")
        if not (before.samples[-1].x == jr.x == after.samples[0].x):
            problems.append(f"jump {i}: state changed across the jump")
        if not (before.t_end == jr.t == after.t_start):
            problems.append(f"jump {i}: time changed across the jump")
    if problems:
        raise ArcInvariantError("; ".join(problems))
    return True


# ------------------------------------------------------------------------ output


def csv_header(n: int) -> list[str]:
    return ["t", "j", "q"] + [f"x1_{i}" for i in range(1, n)] + ["x2", "u", "V1", "V", "V_ell"]


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trajectory_csv(arc: HybridArc, path, n: int,
                         V1: Callable | None = None, V: Callable | None = None,
                         V_ell: Callable | None = None) -> None:
    """One row per sample; jump instants appear twice (same ``t``, consecutive ``j``)."""
    nan = lambda x: math.nan  # noqa: E731
    V1, V, V_ell = V1 or nan, V or nan, V_ell or nan
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(n))
        for t, j, q, x, u in arc.rows():
            w.writerow([_fmt(t), j, q, *map(_fmt, x), _fmt(u), _fmt(V1(x)), _fmt(V(x)), _fmt(V_ell(x))])


def arc_summary(arc: HybridArc) -> dict:
    return {
        "termination": arc.termination,
        "jumps": [{"t": jr.t, "j": jr.j, "q_from": jr.q_from, "q_to": jr.q_to} for jr in arc.jumps],
        "t_final": arc.t_final,
    }


def write_summary_json(arc: HybridArc, path, **extra) -> None:
    data = arc_summary(arc)
    data.update(extra)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")
