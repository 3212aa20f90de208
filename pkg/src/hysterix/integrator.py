"""Dormand-Prince 5(4) embedded pair with 4th-order dense output and event bisection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "IntegratorConfig",
    "StepSizeUnderflow",
    "NoCrossingError",
    "DenseSegment",
    "StepResult",
    "dp54_step",
    "initial_step",
    "flow_step",
    "integrate_fixed",
    "locate_event",
]

# Butcher tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
# difference between the 5th and 4th order weights (7 stages, FSAL)
_E = (-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40)
# dense output polynomial coefficients, rows per stage, columns theta^1..theta^4
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


class StepSizeUnderflow(RuntimeError):
    pass


class NoCrossingError(RuntimeError):
    pass


@dataclass
class IntegratorConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = 0.25
    event_tol: float = 1e-9
    t_max: float = 30.0
    j_max: int = 16
    converge_radius: float = 1e-6
    sample_stride: float = 0.0  # 0 records every accepted step
    escape_radius: float = 1e12
    event_scan: int = 4  # interior dense-output probes per step for grazing guards

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "event_tol", "t_max", "converge_radius",
                     "escape_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.j_max < 0 or self.sample_stride < 0 or self.event_scan < 0:
            raise ValueError("j_max, sample_stride and event_scan must be non-negative")

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


Vector = tuple


def _axpy(y, h, coeffs, K):
    """``y + h * sum(c_i K_i)`` on tuples."""
    n = len(y)
    out = list(y)
    for c, k in zip(coeffs, K):
        if c:
            hc = h * c
            for i in range(n):
                out[i] += hc * k[i]
    return tuple(out)


def dp54_step(fun, t: float, y: Vector, f0: Vector, h: float):
    """One Dormand-Prince step. Returns ``(y_new, f_new, err, K)``.

    ``y_new`` is the 5th-order solution; ``err`` the embedded error vector.
    """
    K = [f0]
    for s in range(1, 6):
        ys = _axpy(y, h, _A[s], K)
        K.append(tuple(fun(t + _C[s] * h, ys)))
    y_new = _axpy(y, h, _B, K)
    f_new = tuple(fun(t + h, y_new))
    K.append(f_new)
    err = _axpy((0.0,) * len(y), h, _E, K)
    return y_new, f_new, err, K


def _err_norm(err, y, y_new, cfg: IntegratorConfig) -> float:
    acc = 0.0
    for e, a, b in zip(err, y, y_new):
        sc = cfg.abs_tol + cfg.rel_tol * max(abs(a), abs(b))
        acc += (e / sc) ** 2
    return math.sqrt(acc / len(y))


def initial_step(fun, t, y, f0, cfg: IntegratorConfig) -> float:
    """Hairer-Wanner starting step heuristic."""
    sc = [cfg.abs_tol + cfg.rel_tol * abs(v) for v in y]
    d0 = math.sqrt(sum((v / s) ** 2 for v, s in zip(y, sc)) / len(y))
    d1 = math.sqrt(sum((v / s) ** 2 for v, s in zip(f0, sc)) / len(y))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, cfg.max_step)
    y1 = tuple(a + h0 * b for a, b in zip(y, f0))
    f1 = fun(t + h0, y1)
    d2 = math.sqrt(sum(((a - b) / s) ** 2 for a, b, s in zip(f1, f0, sc)) / len(y)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, cfg.max_step)


@dataclass(frozen=True)
class DenseSegment:
    """4th-order interpolant over one accepted step ``[t0, t0 + h]``."""

    t0: float
    h: float
    y0: Vector
    Q: np.ndarray  # (n, 4) = K^T P

    @classmethod
    def from_stages(cls, t0, h, y0, K):
        Q = np.asarray(K, dtype=float).T @ _P
        return cls(t0, h, tuple(y0), Q)

    @property
    def t1(self) -> float:
        return self.t0 + self.h

    def __call__(self, t: float) -> Vector:
        th = (t - self.t0) / self.h
        p = np.array([th, th * th, th ** 3, th ** 4])
        return tuple((np.asarray(self.y0) + self.h * (self.Q @ p)).tolist())


@dataclass(frozen=True)
class StepResult:
    t: float
    y: Vector
    f: Vector
    error_estimate: float
    h_next: float
    dense: DenseSegment


def flow_step(fun, t: float, y: Vector, cfg: IntegratorConfig, h: float | None = None,
              f0: Vector | None = None, t_stop: float | None = None) -> StepResult:
    """Take one accepted adaptive step (retrying with smaller ``h`` as needed)."""
    y = tuple(float(v) for v in y)
    f0 = tuple(fun(t, y)) if f0 is None else f0
    if h is None:
        h = initial_step(fun, t, y, f0, cfg)
    h = min(h, cfg.max_step)
    if t_stop is not None:
        h = min(h, t_stop - t)
    h_min = 16 * np.spacing(max(1.0, abs(t)))
    while True:
        if h < h_min:
            raise StepSizeUnderflow(f"step size underflow at t={t}")
        y_new, f_new, err, K = dp54_step(fun, t, y, f0, h)
        en = _err_norm(err, y, y_new, cfg)
        if en <= 1.0 and all(map(math.isfinite, y_new)):
            fac = 5.0 if en == 0.0 else min(5.0, 0.9 * en ** -0.2)
            h_next = min(h * fac, cfg.max_step)
            t_new = t + h if t_stop is None or t + h < t_stop else t_stop
            return StepResult(t_new, y_new, f_new, en, h_next,
                              DenseSegment.from_stages(t, h, y, K))
        if not math.isfinite(en):
            h *= 0.2
        else:
            h *= max(0.2, 0.9 * en ** -0.2)


def integrate_fixed(fun, t0: float, y0: Sequence[float], t1: float, n_steps: int) -> Vector:
    """Fixed-step propagation of the 5th-order solution (for order studies)."""
    y = tuple(float(v) for v in y0)
    h = (t1 - t0) / n_steps
    f = tuple(fun(t0, y))
    t = t0
    for i in range(n_steps):
        y, f, _, _ = dp54_step(fun, t, y, f, h)
        t = t0 + (i + 1) * h
    return y


def locate_event(guard: Callable[[Vector], float], segment: DenseSegment,
                 cfg: IntegratorConfig, t_lo: float | None = None, max_iter: int = 200):
    """Bisection for the first time the guard becomes non-negative on ``segment``.

    Returns ``(t_event, x_event, g_event)`` with ``0 <= g_event <= event_tol``
    whenever the interval does not collapse to machine resolution first.
    Raises :class:`NoCrossingError` if no probe point reaches the guard.
    """
    a = segment.t0 if t_lo is None else t_lo
    b_end = segment.t1
    n = max(cfg.event_scan, 0) + 1
    probes = [a + (b_end - a) * i / n for i in range(1, n)] + [b_end]
    lo = a
    if guard(segment(a) if a != segment.t0 else segment.y0) >= 0:
        x = segment(a) if a != segment.t0 else segment.y0
        return a, x, guard(x)
    hi = None
    for tp in probes:
        x = segment(tp)
        if guard(x) >= 0:
            hi = tp
            break
        lo = tp
    if hi is None:
        raise NoCrossingError("guard does not reach zero on this segment")
    x_hi = segment(hi)
    g_hi = guard(x_hi)
    for _ in range(max_iter):
        if g_hi <= cfg.event_tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        x_mid = segment(mid)
        g_mid = guard(x_mid)
        if g_mid >= 0:
            hi, x_hi, g_hi = mid, x_mid, g_mid
        else:
            lo = mid
    return hi, x_hi, g_hi
