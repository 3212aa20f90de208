"""Controlled plants of the form

    x1' = f1(x1, x2) + h1(x1, x2, u)
    x2' = f2(x1, x2) * u + h2(x1, x2, u)

with ``x1`` in R^(n-1) and scalar ``x2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .expr import (
    Binary,
    Expr,
    Pow,
    Unary,
    Var,
    add,
    compile_exprs,
    compile_numpy,
    differentiate,
    mul,
    parse,
    substitute,
)

__all__ = [
    "PlantError",
    "PlantModel",
    "state_names",
    "paper_example",
    "preliminary_example",
    "PAPER_EXAMPLE_TEXT",
    "PRELIMINARY_EXAMPLE_TEXT",
]


class PlantError(ValueError):
    pass


def state_names(n: int) -> list[str]:
    """Variable names for an ``n``-dimensional state.

    ``n == 2`` uses ``x1, x2``; larger states use ``x1_1 .. x1_{n-1}, x2``.
    """
    if n < 2:
        raise PlantError(f"state dimension must be >= 2, got {n}")
    if n == 2:
        return ["x1", "x2"]
    return [f"x1_{i}" for i in range(1, n)] + ["x2"]


def _parse_all(texts, vars, params):
    out = []
    for t in texts:
        e = t if isinstance(t, Expr) else parse(str(t), list(vars) + list(params))
        out.append(substitute(e, params) if params else e)
    return tuple(out)


@dataclass(frozen=True)
class PlantModel:
    """Immutable plant with named parameters folded into the expressions."""

    n: int
    f1: tuple[Expr, ...]
    f2: Expr
    h1: tuple[Expr, ...]
    h2: Expr
    params: Mapping[str, float] = field(default_factory=dict)
    name: str = "custom"

    def __post_init__(self):
        if len(self.f1) != self.n - 1 or len(self.h1) != self.n - 1:
            raise PlantError(f"f1 and h1 must have {self.n - 1} components")
        xs = set(self.x_names)
        xu = xs | {"u"}
        for e in (*self.f1, self.f2):
            extra = e.free_vars() - xs
            if extra:
                raise PlantError(f"f-expression uses unknown variables {sorted(extra)}")
        for e in (*self.h1, self.h2):
            extra = e.free_vars() - xu
            if extra:
                raise PlantError(f"h-expression uses unknown variables {sorted(extra)}")
        zero = [0.0] * self.n
        f1_0 = self._f1(*zero)
        h1_0 = self._h1(*zero, 0.0)
        (h2_0,) = self._h2(*zero, 0.0)
        if any(v != 0.0 for v in f1_0):
            raise PlantError(f"f1(0,0) must vanish, got {f1_0}")
        if any(v != 0.0 for v in h1_0):
            raise PlantError(f"h1(0,0,0) must vanish, got {h1_0}")
        if h2_0 != 0.0:
            raise PlantError(f"h2(0,0,0) must vanish, got {h2_0}")

    @classmethod
    def from_strings(
        cls,
        n: int,
        f1: Sequence[str],
        f2: str,
        h1: Sequence[str],
        h2: str,
        params: Mapping[str, float] | None = None,
        name: str = "custom",
    ) -> "PlantModel":
        params = dict(params or {})
        xs = state_names(n)
        if isinstance(f1, str):
            f1 = [f1]
        if isinstance(h1, str):
            h1 = [h1]
        return cls(
            n=n,
            f1=_parse_all(f1, xs, params),
            f2=_parse_all([f2], xs, params)[0],
            h1=_parse_all(h1, xs + ["u"], params),
            h2=_parse_all([h2], xs + ["u"], params)[0],
            params=params,
            name=name,
        )

    # ------------------------------------------------------------- names

    @property
    def x_names(self) -> list[str]:
        return state_names(self.n)

    @property
    def x1_names(self) -> list[str]:
        return self.x_names[:-1]

    # --------------------------------------------------- compiled evaluators

    @cached_property
    def _f1(self):
        return compile_exprs(self.f1, self.x_names)

    @cached_property
    def _f2(self):
        return compile_exprs([self.f2], self.x_names)

    @cached_property
    def _h1(self):
        return compile_exprs(self.h1, self.x_names + ["u"])

    @cached_property
    def _h2(self):
        return compile_exprs([self.h2], self.x_names + ["u"])

    @cached_property
    def _rhs(self):
        u = parse("u", ["u"])
        exprs = [
            add(f, h) for f, h in zip(self.f1, self.h1)
        ] + [add(mul(self.f2, u), self.h2)]
        return compile_exprs(exprs, self.x_names + ["u"])

    @cached_property
    def d_x2_f1(self) -> tuple[Expr, ...]:
        return tuple(differentiate(e, "x2") for e in self.f1)

    @cached_property
    def d_x2_h1(self) -> tuple[Expr, ...]:
        return tuple(differentiate(e, "x2") for e in self.h1)

    @cached_property
    def _d_x2_f1(self):
        return compile_exprs(self.d_x2_f1, self.x_names)

    @cached_property
    def _d_x2_h1(self):
        return compile_exprs(self.d_x2_h1, self.x_names + ["u"])

    def f1_at(self, x) -> tuple[float, ...]:
        return self._f1(*x)

    def f2_at(self, x) -> float:
        return self._f2(*x)[0]

    def h1_at(self, x, u) -> tuple[float, ...]:
        return self._h1(*x, u)

    def h2_at(self, x, u) -> float:
        return self._h2(*x, u)[0]

    def d_x2_f1_at(self, x) -> tuple[float, ...]:
        return self._d_x2_f1(*x)

    def d_x2_h1_at(self, x, u) -> tuple[float, ...]:
        return self._d_x2_h1(*x, u)

    def rhs(self, x, u) -> tuple[float, ...]:
        """Fast path used by the integrator: returns a tuple."""
        return self._rhs(*x, u)

    def eval_dynamics(self, x, u: float) -> np.ndarray:
        """``(f1 + h1, f2*u + h2)`` at state ``x`` and input ``u``."""
        x = tuple(float(v) for v in x)
        if len(x) != self.n:
            raise PlantError(f"state must have length {self.n}")
        return np.array(self._rhs(*x, float(u)))

    # ------------------------------------------------------ vectorised forms

    @cached_property
    def np_rhs(self):
        """Vectorised right-hand side ``(X, U) -> array (N, n)`` for sampling."""
        u = parse("u", ["u"])
        fns = [compile_numpy(add(f, h), self.x_names + ["u"]) for f, h in zip(self.f1, self.h1)]
        fns.append(compile_numpy(add(mul(self.f2, u), self.h2), self.x_names + ["u"]))

        def rhs(X, U):
            X = np.asarray(X, dtype=float)
            cols = [X[:, i] for i in range(self.n)]
            return np.stack([f(*cols, U) for f in fns], axis=1)

        return rhs

    def np_fn(self, e: Expr, with_u: bool = False):
        args = self.x_names + (["u"] if with_u else [])
        f = compile_numpy(e, args)

        def g(X, U=None):
            X = np.asarray(X, dtype=float)
            cols = [X[:, i] for i in range(self.n)]
            return f(*cols, U) if with_u else f(*cols)

        return g

    def uses_u_periodically(self) -> bool:
        """True when ``u`` enters the h-terms only through ``sin(u)``/``cos(u)``."""
        def ok(e, parent_trig=False):
            if isinstance(e, Var):
                return e.name != "u" or parent_trig
            if isinstance(e, Unary):
                trig = e.op in ("sin", "cos") and isinstance(e.arg, Var) and e.arg.name == "u"
                return ok(e.arg, trig)
            if isinstance(e, Binary):
                return ok(e.left) and ok(e.right)
            if isinstance(e, Pow):
                return ok(e.base)
            return True

        return all(ok(e) for e in (*self.h1, self.h2, *self.d_x2_h1))


# ---------------------------------------------------------------- built-ins

PAPER_EXAMPLE_TEXT = {
    "n": 2,
    "f1": ["x1 + x2 + theta*x1^2"],
    "f2": "1",
    "h1": ["theta*(1 + x1)*sin(u)"],
    "h2": "0",
}

PRELIMINARY_EXAMPLE_TEXT = {
    "n": 2,
    "f1": ["x1 + theta*x1^2 + x2"],
    "f2": "1",
    "h1": ["0"],
    "h2": "0",
}


def paper_example(theta: float = 1e-3) -> PlantModel:
    """x1' = x1 + x2 + theta*(x1^2 + (1 + x1) sin u), x2' = u.

    The ``theta*x1^2`` term stays in ``f1``; only the input-dependent
    ``theta*(1 + x1)*sin(u)`` term is treated as the perturbation ``h1``.
    """
    if not theta > 0:
        raise PlantError("theta must be positive")
    t = PAPER_EXAMPLE_TEXT
    return PlantModel.from_strings(
        t["n"], t["f1"], t["f2"], t["h1"], t["h2"], {"theta": theta}, name="paper_example"
    )


def preliminary_example(theta: float = 1e-3) -> PlantModel:
    """Unperturbed backstepping-form system x1' = x1 + theta*x1^2 + x2, x2' = u."""
    if not theta > 0:
        raise PlantError("theta must be positive")
    t = PRELIMINARY_EXAMPLE_TEXT
    return PlantModel.from_strings(
        t["n"], t["f1"], t["f2"], t["h1"], t["h2"], {"theta": theta}, name="preliminary_example"
    )
