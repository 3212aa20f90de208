"""Two-mode hysteresis feedback combining a local and a global controller.

Mode 1 runs the local feedback on ``C1 = {V_ell <= v_ell}``, mode 2 runs the
global one on ``C2 = {V_ell >= v_ell_tilde}``. Each jump set is the closure of
the complement of its flow set and every jump toggles the mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np

from .backstepping import Attractor
from .expr import Expr, compile_exprs, compile_numpy, differentiate, parse, substitute
from .plant import state_names
from .sampling import SampleConfig, unit_directions

__all__ = [
    "ContractViolation",
    "LocalCertificate",
    "HysteresisController",
    "ConstantModeController",
    "ASearchResult",
    "tube_max_V_ell",
    "choose_a_for_tube",
]


class ContractViolation(RuntimeError):
    """Flowing outside a flow set or jumping outside a jump set."""


@dataclass(frozen=True)
class LocalCertificate:
    """Local Lyapunov function ``V_ell``, local feedback ``phi_ell`` and level ``v_ell``."""

    n: int
    V_ell: Expr
    phi_ell: Expr
    v_ell: float

    def __post_init__(self):
        if not self.v_ell > 0:
            raise ValueError(f"v_ell must be positive, got {self.v_ell}")
        allowed = set(self.x_names)
        for name, e in (("V_ell", self.V_ell), ("phi_ell", self.phi_ell)):
            extra = e.free_vars() - allowed
            if extra:
                raise ValueError(f"{name} uses unknown variables {sorted(extra)}")
        zero = [0.0] * self.n
        if self.V_at(zero) != 0.0:
            raise ValueError("V_ell(0) must vanish")
        if self.phi_at(zero) != 0.0:
            raise ValueError("phi_ell(0) must vanish")

    @classmethod
    def from_strings(cls, n, V_ell, phi_ell, v_ell, params: Mapping[str, float] | None = None):
        params = dict(params or {})
        xs = state_names(n) + list(params)

        def P(text):
            e = text if isinstance(text, Expr) else parse(str(text), xs)
            return substitute(e, params) if params else e

        return cls(n=n, V_ell=P(V_ell), phi_ell=P(phi_ell), v_ell=float(v_ell))

    @property
    def x_names(self) -> list[str]:
        return state_names(self.n)

    @cached_property
    def grad_V(self) -> tuple[Expr, ...]:
        return tuple(differentiate(self.V_ell, v) for v in self.x_names)

    @cached_property
    def _fns(self):
        return compile_exprs([self.V_ell, self.phi_ell], self.x_names)

    @cached_property
    def _grad(self):
        return compile_exprs(self.grad_V, self.x_names)

    def V_at(self, x) -> float:
        return self._fns(*x)[0]

    def phi_at(self, x) -> float:
        return self._fns(*x)[1]

    def grad_V_at(self, x) -> tuple[float, ...]:
        return self._grad(*x)

    @cached_property
    def np_V(self):
        f = compile_numpy(self.V_ell, self.x_names)
        return lambda X: f(*[X[:, i] for i in range(X.shape[1])])

    @cached_property
    def np_phi(self):
        f = compile_numpy(self.phi_ell, self.x_names)
        return lambda X: f(*[X[:, i] for i in range(X.shape[1])])

    @cached_property
    def np_grad_V(self):
        fs = [compile_numpy(g, self.x_names) for g in self.grad_V]
        return lambda X: np.stack([f(*[X[:, i] for i in range(X.shape[1])]) for f in fs], axis=1)


def _check_mode(q):
    if q not in (1, 2):
        raise ValueError(f"mode must be 1 or 2, got {q!r}")


@dataclass(frozen=True)
class HysteresisController:
    """Hybrid feedback with modes ``Q = {1, 2}``."""

    local: LocalCertificate
    global_feedback: Callable[[Sequence[float]], float]
    v_ell_tilde: float = 0.05
    modes: tuple[int, ...] = field(default=(1, 2), init=False)

    def __post_init__(self):
        if not 0.0 < self.v_ell_tilde < self.v_ell:
            raise ValueError(
                f"need 0 < v_ell_tilde < v_ell, got {self.v_ell_tilde} and {self.v_ell}"
            )

    @property
    def v_ell(self) -> float:
        return self.local.v_ell

    def in_C(self, q: int, x) -> bool:
        _check_mode(q)
        v = self.local.V_at(x)
        return v <= self.v_ell if q == 1 else v >= self.v_ell_tilde

    def in_D(self, q: int, x) -> bool:
        _check_mode(q)
        v = self.local.V_at(x)
        return v >= self.v_ell if q == 1 else v <= self.v_ell_tilde

    def guard(self, q: int, x) -> float:
        """Scalar guard, non-negative exactly on ``D_q``."""
        v = self.local.V_at(x)
        return v - self.v_ell if q == 1 else self.v_ell_tilde - v

    def jump(self, q: int, x) -> int:
        if not self.in_D(q, x):
            raise ContractViolation(f"jump requested outside D_{q} at {tuple(x)}")
        return 3 - q

    def mode_feedback(self, q: int) -> Callable[[Sequence[float]], float]:
        """Unchecked feedback of mode ``q`` (what the integrator evaluates)."""
        _check_mode(q)
        return self.local.phi_at if q == 1 else self.global_feedback

    def feedback(self, q: int, x) -> float:
        if not self.in_C(q, x):
            raise ContractViolation(f"mode-{q} feedback evaluated outside C_{q} at {tuple(x)}")
        return self.mode_feedback(q)(x)


@dataclass(frozen=True)
class ConstantModeController:
    """A single continuous feedback dressed as a one-mode hybrid law (``C = R^n``, ``D`` empty)."""

    fn: Callable[[Sequence[float]], float]
    q: int = 1

    @property
    def modes(self) -> tuple[int, ...]:
        return (self.q,)

    def in_C(self, q, x) -> bool:
        return q == self.q

    def in_D(self, q, x) -> bool:
        return False

    def guard(self, q, x) -> float:
        return -math.inf

    def jump(self, q, x) -> int:
        raise ContractViolation("a constant-mode controller never jumps")

    def mode_feedback(self, q):
        if q != self.q:
            raise ContractViolation(f"unknown mode {q}")
        return self.fn

    def feedback(self, q, x) -> float:
        return self.mode_feedback(q)(x)


# ------------------------------------------------------------------ choosing a


@dataclass(frozen=True)
class ASearchResult:
    feasible: bool
    a: float | None
    witness_max: float
    witness_point: tuple[float, ...]


def tube_max_V_ell(local: LocalCertificate, attractor: Attractor, a: float,
                   n_dirs: int = 256, radii=(0.25, 0.5, 0.75, 1.0)) -> tuple[float, np.ndarray]:
    """Sampled maximum of ``V_ell`` over ``A + a B`` and the point attaining it."""
    A = attractor.points
    if a <= 0:
        vals = local.np_V(A)
        i = int(np.argmax(vals))
        return float(vals[i]), A[i]
    dirs = unit_directions(A.shape[1], n_dirs, attractor.cfg.seed)
    best, arg = -np.inf, A[0]
    # chunk over A to bound memory
    offs = np.concatenate([r * a * dirs for r in radii] + [np.zeros((1, A.shape[1]))])
    for start in range(0, A.shape[0], 256):
        blk = A[start:start + 256]
        P = (blk[:, None, :] + offs[None, :, :]).reshape(-1, A.shape[1])
        vals = local.np_V(P)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, arg = float(vals[i]), P[i]
    return best, arg


def choose_a_for_tube(local: LocalCertificate, attractor: Attractor, v_ell_tilde: float,
                         a_max: float = 1e3, iters: int = 60) -> ASearchResult:
    """Largest ``a`` (bisection) with ``max_{A + aB} V_ell < v_ell_tilde`` on the sample.

    Infeasibility is returned as a result with ``feasible=False``, carrying
    the offending maximum at ``a = 0``.
    """
    m0, p0 = tube_max_V_ell(local, attractor, 0.0)
    if not m0 < v_ell_tilde:
        return ASearchResult(False, None, m0, tuple(map(float, p0)))
    lo, hi = 0.0, 1.0
    while hi < a_max:
        m, _ = tube_max_V_ell(local, attractor, hi)
        if m >= v_ell_tilde:
            break
        lo, hi = hi, hi * 2.0
    else:
        m, p = tube_max_V_ell(local, attractor, a_max)
        return ASearchResult(True, a_max, m, tuple(map(float, p)))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        m, _ = tube_max_V_ell(local, attractor, mid)
        if m < v_ell_tilde:
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        return ASearchResult(False, None, m0, tuple(map(float, p0)))
    m, p = tube_max_V_ell(local, attractor, lo)
    return ASearchResult(True, lo, m, tuple(map(float, p)))
