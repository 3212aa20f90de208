"""Global practical backstepping controller for plants with input-dependent perturbations.

Given a certificate ``(V1, phi1, alpha, Psi, epsilon, M)`` and a practical
radius ``a``, the synthesis builds the composite function

    V(x) = V1(x1) + (k/2) (x2 - phi1(x1))^2,      k = 2 (M + a) / a^2

and the feedback ``phi_g`` under which

    dV/dt <= epsilon [alpha(M) - alpha(V1)] + 1/c - c (x2 - phi1)^2.

The perturbation term that cannot be cancelled (it depends on ``u``) is
dominated through ``|Upsilon| <= Delta`` and the bound
``e*Upsilon <= 1/c + (c/4) e^2 Delta^2``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .expr import Expr, compile_exprs, compile_numpy, differentiate, parse, substitute
from .plant import PlantModel, state_names
from .sampling import SampleConfig, SamplingError, gauss_legendre_01, sublevel_points

__all__ = [
    "SynthesisError",
    "BacksteppingCertificate",
    "GlobalControllerParams",
    "GlobalController",
    "Synthesis",
    "Attractor",
    "ExprFeedback",
    "compute_k",
    "compute_a_prime",
    "eval_Delta",
    "eval_tilde_u",
    "eval_Upsilon",
    "compute_zeta",
    "compute_K_alpha",
    "compute_c_g",
    "synthesize_phi_g",
    "synthesize",
    "classical_backstepping",
    "attractor_distance",
]

log = logging.getLogger(__name__)

VARIANTS = ("derived", "paper-literal")


class SynthesisError(ValueError):
    pass


def _norm(v) -> float:
    if len(v) == 1:
        return abs(v[0])
    return math.sqrt(sum(t * t for t in v))


def _dot(a, b) -> float:
    if len(a) == 1:
        return a[0] * b[0]
    return math.fsum(p * q for p, q in zip(a, b))


@dataclass(frozen=True)
class BacksteppingCertificate:
    """Data of the global stabilizability assumption.

    ``V1`` and ``phi1`` are expressions over the ``x1`` components, ``alpha``
    over the scalar ``s`` and ``Psi`` over the full state.
    """

    n: int
    V1: Expr
    phi1: Expr
    alpha: Expr
    Psi: Expr
    epsilon: float
    M: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise SynthesisError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.M > 0.0:
            raise SynthesisError(f"M must be positive, got {self.M}")
        x1 = set(self.x1_names)
        for name, e, allowed in (
            ("V1", self.V1, x1),
            ("phi1", self.phi1, x1),
            ("alpha", self.alpha, {"s"}),
            ("Psi", self.Psi, set(self.x_names)),
        ):
            extra = e.free_vars() - allowed
            if extra:
                raise SynthesisError(f"{name} uses unknown variables {sorted(extra)}")
        zero = [0.0] * (self.n - 1)
        if self.phi1_at(zero) != 0.0:
            raise SynthesisError("phi1(0) must vanish")
        if self.alpha_at(0.0) != 0.0:
            raise SynthesisError("alpha(0) must vanish")
        s = np.linspace(0.0, 10.0 * max(self.M, 1.0), 257)
        if not np.all(np.diff(self.np_alpha(s)) > 0):
            raise SynthesisError("alpha is not strictly increasing on the check grid")

    @classmethod
    def from_strings(cls, n, V1, phi1, alpha, Psi, epsilon, M, params: Mapping[str, float] | None = None):
        params = dict(params or {})
        xs = state_names(n)
        x1 = xs[:-1]
        p = list(params)

        def P(text, vars):
            e = text if isinstance(text, Expr) else parse(str(text), vars + p)
            return substitute(e, params) if params else e

        return cls(
            n=n,
            V1=P(V1, x1),
            phi1=P(phi1, x1),
            alpha=P(alpha, ["s"]),
            Psi=P(Psi, xs),
            epsilon=float(epsilon),
            M=float(M),
        )

    @property
    def x_names(self) -> list[str]:
        return state_names(self.n)

    @property
    def x1_names(self) -> list[str]:
        return self.x_names[:-1]

    @cached_property
    def grad_V1(self) -> tuple[Expr, ...]:
        return tuple(differentiate(self.V1, v) for v in self.x1_names)

    @cached_property
    def grad_phi1(self) -> tuple[Expr, ...]:
        return tuple(differentiate(self.phi1, v) for v in self.x1_names)

    @cached_property
    def d_alpha(self) -> Expr:
        return differentiate(self.alpha, "s")

    @cached_property
    def _x1_fns(self):
        # V1, phi1, grad V1..., grad phi1...
        return compile_exprs([self.V1, self.phi1, *self.grad_V1, *self.grad_phi1], self.x1_names)

    @cached_property
    def _alpha(self):
        return compile_exprs([self.alpha, self.d_alpha], ["s"])

    @cached_property
    def _psi(self):
        return compile_exprs([self.Psi], self.x_names)

    def x1_data(self, x1):
        """``(V1, phi1, grad V1, grad phi1)`` at ``x1`` in one compiled call."""
        vals = self._x1_fns(*x1)
        m = self.n - 1
        return vals[0], vals[1], vals[2 : 2 + m], vals[2 + m :]

    def V1_at(self, x1) -> float:
        return self._x1_fns(*x1)[0]

    def phi1_at(self, x1) -> float:
        return self._x1_fns(*x1)[1]

    def alpha_at(self, s: float) -> float:
        return self._alpha(s)[0]

    def d_alpha_at(self, s: float) -> float:
        return self._alpha(s)[1]

    def Psi_at(self, x) -> float:
        return self._psi(*x)[0]

    # vectorised helpers for sampling -------------------------------------

    @cached_property
    def np_V1(self):
        f = compile_numpy(self.V1, self.x1_names)
        return lambda X1: f(*[X1[:, i] for i in range(X1.shape[1])])

    @cached_property
    def np_phi1(self):
        f = compile_numpy(self.phi1, self.x1_names)
        return lambda X1: f(*[X1[:, i] for i in range(X1.shape[1])])

    @cached_property
    def np_alpha(self):
        return compile_numpy(self.alpha, ["s"])

    @cached_property
    def np_d_alpha(self):
        return compile_numpy(self.d_alpha, ["s"])

    def composite_V(self, x, k: float) -> float:
        """``V1(x1) + (k/2)(x2 - phi1(x1))^2``."""
        x1 = x[:-1]
        v1, p1, _, _ = self.x1_data(x1)
        e = x[-1] - p1
        return v1 + 0.5 * k * e * e


# --------------------------------------------------------------------------- constants


def compute_k(M: float, a: float) -> float:
    """Gain of the composite Lyapunov function, ``2 (M + a) / a^2``."""
    if not (M > 0 and a > 0):
        raise SynthesisError("compute_k needs M > 0 and a > 0")
    a2 = a * a
    k = 2.0 * (M + a) / a2 if a2 > 0 else math.inf
    if not math.isfinite(k):
        raise SynthesisError(f"k = 2 (M + a) / a^2 is not finite for M={M!r}, a={a!r}")
    return k


def compute_a_prime(cert: BacksteppingCertificate, M: float, a: float,
                    cfg: SampleConfig | None = None, max_halvings: int = 60) -> float:
    """Largest ``a' = a / 2^i`` such that ``{V1 <= M + a'}`` lies within distance ``a`` of ``{V1 <= M}``.

    The distance is the sampled Hausdorff distance between the two sublevel
    sets; results above ``a`` are never needed because only ``min(a, a')``
    enters the synthesis.
    """
    if not a > 0:
        raise SynthesisError("a must be positive")
    cfg = cfg or SampleConfig()
    dim = cert.n - 1
    n_radii = 257 if dim == 1 else cfg.n_radii
    inner, _, _ = sublevel_points(cert.np_V1, dim, M, cfg, n_radii=n_radii)
    tree = cKDTree(inner)
    tol = 1e-9 * max(1.0, a)
    for i in range(max_halvings + 1):
        ap = a / 2.0**i
        outer, _, _ = sublevel_points(cert.np_V1, dim, M + ap, cfg, n_radii=n_radii)
        dist, _ = tree.query(outer)
        if dist.max() <= a + tol:
            return ap
    raise SynthesisError(f"no a' in (0, {a}] validates the sublevel inclusion on the sample")


# ---------------------------------------------------------------------- pointwise terms


def eval_Delta(cert: BacksteppingCertificate, k: float, x: Sequence[float], quad_order: int = 8) -> float:
    """Bound on the perturbation term.

    ``|dV1| * int_0^1 Psi(x1, eta(s)) ds + Psi(x) * k * (1 + |dphi1|)`` with
    ``eta(s) = s*x2 + (1 - s)*phi1(x1)``.
    """
    if quad_order < 2:
        raise SynthesisError("quad_order must be >= 2")
    x1 = tuple(x[:-1])
    x2 = x[-1]
    _, p1, gV, gP = cert.x1_data(x1)
    nodes, weights = gauss_legendre_01(quad_order)
    psi = cert._psi
    integral = 0.0
    for s, w in zip(nodes, weights):
        integral += w * psi(*x1, s * x2 + (1.0 - s) * p1)[0]
    return _norm(gV) * integral + psi(*x1, x2)[0] * k * (1.0 + _norm(gP))


def eval_tilde_u(cert: BacksteppingCertificate, x: Sequence[float], c: float, Delta: float) -> float:
    """``(x2 - phi1(x1)) * (-c - (c/4) Delta^2)``."""
    if not c > 0:
        raise SynthesisError("c must be positive")
    e = x[-1] - cert.phi1_at(tuple(x[:-1]))
    return e * (-c - 0.25 * c * Delta * Delta)


def eval_Upsilon(plant: PlantModel, cert: BacksteppingCertificate, k: float, x: Sequence[float],
                 u: float, quad_order: int = 8) -> float:
    """Uncancelled perturbation in the cross term of ``dV/dt``.

    ``dV1 . int_0^1 d_x2 h1(x1, eta(s), u) ds + k h2(x, u) - k dphi1 . h1(x, u)``.
    """
    x = tuple(x)
    x1 = x[:-1]
    x2 = x[-1]
    _, p1, gV, gP = cert.x1_data(x1)
    nodes, weights = gauss_legendre_01(quad_order)
    m = len(x1)
    acc = [0.0] * m
    for s, w in zip(nodes, weights):
        d = plant.d_x2_h1_at((*x1, s * x2 + (1.0 - s) * p1), u)
        for i in range(m):
            acc[i] += w * d[i]
    return _dot(gV, acc) + k * plant.h2_at(x, u) - k * _dot(gP, plant.h1_at(x, u))


# ----------------------------------------------------------------------- global constants


def compute_zeta(cert: BacksteppingCertificate, k: float, cfg: SampleConfig | None = None,
                 margin: float = 1.05) -> float:
    """Sampled maximum of ``V`` over

        A1 = {epsilon*alpha(V1) + (x2 - phi1)^2 <= epsilon*alpha(M) + 1},

    inflated by ``margin``.

    For fixed ``x1`` the maximum over ``x2`` sits at the largest admissible
    ``|x2 - phi1|``, so only the ``x1`` projection of ``A1`` is sampled.
    """
    cfg = cfg or SampleConfig()
    eps = cert.epsilon
    top = eps * cert.alpha_at(cert.M) + 1.0
    dim = cert.n - 1

    def g(X1):
        return eps * cert.np_alpha(cert.np_V1(X1))

    try:
        pts, _, _ = sublevel_points(g, dim, top, cfg, n_radii=4097 if dim == 1 else cfg.n_radii)
    except SamplingError as exc:
        raise SamplingError(f"sampling domain does not bracket A1: {exc}") from exc
    v1 = cert.np_V1(pts)
    e2 = np.maximum(top - eps * cert.np_alpha(v1), 0.0)
    V = v1 + 0.5 * k * e2
    return margin * float(V.max())


def compute_K_alpha(cert: BacksteppingCertificate, zeta: float, n_grid: int = 10_001,
                    margin: float = 1.05) -> float:
    """Lipschitz constant of ``alpha`` on ``[0, zeta]``.

    Uses the symbolic derivative on a grid together with one-sided chord
    slopes (which cover kinks). Linear ``alpha`` returns its exact slope.
    """
    if zeta < 0:
        raise SynthesisError("zeta must be non-negative")
    s = np.linspace(0.0, max(zeta, 1e-300), n_grid)
    d = np.abs(cert.np_d_alpha(s))
    if np.all(np.isfinite(d)) and d.max() - d.min() <= 1e-12 * (1.0 + d.max()):
        return float(d.max())
    vals = cert.np_alpha(s)
    chords = np.abs(np.diff(vals) / np.diff(s))
    finite_d = d[np.isfinite(d)]
    best = max(float(finite_d.max()) if finite_d.size else 0.0, float(chords.max()))
    return margin * best


def compute_c_g(epsilon: float, alpha: Callable[[float], float], M: float, a_tilde: float,
                k: float, K_alpha: float) -> float:
    """``max{1 / (epsilon [alpha(M + a~) - alpha(M)]), epsilon k K_alpha / 2, 1}``."""
    gap = alpha(M + a_tilde) - alpha(M)
    if not gap > 0:
        raise SynthesisError("alpha(M + a_tilde) must exceed alpha(M)")
    return max(1.0 / (epsilon * gap), epsilon * k * K_alpha / 2.0, 1.0)


@dataclass(frozen=True)
class GlobalControllerParams:
    a: float
    a_prime: float
    a_tilde: float
    k: float
    c: float
    c_g: float
    K_alpha: float
    zeta: float

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


# --------------------------------------------------------------------------- feedback


class GlobalController:
    """The continuous global feedback ``u = phi_g(x)``.

    ``variant="derived"`` is the law for which the ``dV/dt`` contract holds::

        phi_g = (1/f2) [ u~/k + dphi1 . f1 - (1/k) dV1 . int_0^1 d_x2 f1(x1, eta(s)) ds ]

    ``variant="paper-literal"`` reproduces the closed form printed for the
    worked example: ``+ (1/2k)`` on the integral term, ``x1 - phi1(x1)`` in
    ``u~`` and ``|phi1|`` in place of ``|dphi1|`` inside ``Delta``. It only
    makes sense for scalar ``x1`` and is kept for comparison.
    """

    def __init__(self, plant: PlantModel, cert: BacksteppingCertificate, k: float, c: float,
                 quad_order: int = 8, variant: str = "derived"):
        if variant not in VARIANTS:
            raise SynthesisError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        if variant == "paper-literal" and plant.n != 2:
            raise SynthesisError("the paper-literal variant needs a scalar x1")
        if plant.n != cert.n:
            raise SynthesisError("plant and certificate dimensions differ")
        if quad_order < 2:
            raise SynthesisError("quad_order must be >= 2")
        self.plant = plant
        self.cert = cert
        self.k = float(k)
        self.c = float(c)
        self.quad_order = int(quad_order)
        self.variant = variant
        self._nodes, self._weights = gauss_legendre_01(quad_order)

    def __call__(self, x: Sequence[float]) -> float:
        plant, cert, k, c = self.plant, self.cert, self.k, self.c
        x = tuple(x)
        x1 = x[:-1]
        x2 = x[-1]
        f2 = plant.f2_at(x)
        if f2 == 0.0:
            raise SynthesisError(f"f2 vanishes at {x}; the global feedback is undefined")
        _, p1, gV, gP = cert.x1_data(x1)
        psi = cert._psi
        df1 = plant._d_x2_f1
        m = len(x1)
        psi_int = 0.0
        f1_int = [0.0] * m
        for s, w in zip(self._nodes, self._weights):
            eta = s * x2 + (1.0 - s) * p1
            psi_int += w * psi(*x1, eta)[0]
            d = df1(*x1, eta)
            for i in range(m):
                f1_int[i] += w * d[i]
        lie = _dot(gP, plant.f1_at(x))
        cross = _dot(gV, f1_int)
        if self.variant == "derived":
            delta = _norm(gV) * psi_int + psi(*x)[0] * k * (1.0 + _norm(gP))
            tu = (x2 - p1) * (-c - 0.25 * c * delta * delta)
            return (tu / k + lie - cross / k) / f2
        # printed form: |phi1| where the bound has |dphi1|
        delta = _norm(gV) * psi_int + psi(*x)[0] * k * (1.0 + abs(p1))
        tu = (x1[0] - p1) * (-c - 0.25 * c * delta * delta)
        return (tu / k + lie + cross / (2.0 * k)) / f2

    def __repr__(self):
        return f"GlobalController(k={self.k!r}, c={self.c!r}, variant={self.variant!r})"


def synthesize_phi_g(plant: PlantModel, cert: BacksteppingCertificate, a: float, c: float,
                     quad_order: int = 8, variant: str = "derived") -> GlobalController:
    return GlobalController(plant, cert, compute_k(cert.M, a), c, quad_order, variant)


@dataclass(frozen=True)
class Synthesis:
    params: GlobalControllerParams
    controller: GlobalController
    warnings: tuple[str, ...] = ()


def synthesize(plant: PlantModel, cert: BacksteppingCertificate, a: float, c="auto",
               quad_order: int = 8, variant: str = "derived",
               cfg: SampleConfig | None = None) -> Synthesis:
    """Compute every synthesis constant and build the global feedback.

    ``c="auto"`` selects ``1.01 * c_g``; an explicit ``c <= c_g`` is honoured
    but reported in ``warnings``.
    """
    cfg = cfg or SampleConfig()
    k = compute_k(cert.M, a)
    a_prime = compute_a_prime(cert, cert.M, a, cfg)
    a_tilde = float(min(a, a_prime))
    zeta = compute_zeta(cert, k, cfg)
    K_alpha = compute_K_alpha(cert, zeta)
    c_g = compute_c_g(cert.epsilon, cert.alpha_at, cert.M, a_tilde, k, K_alpha)
    notes = []
    if c == "auto" or c is None:
        c_val = 1.01 * c_g
    else:
        c_val = float(c)
        if not c_val > c_g:
            msg = f"c = {c_val} does not exceed c_g = {c_g}; the decrease guarantee is void"
            warnings.warn(msg, stacklevel=2)
            notes.append(msg)
    params = GlobalControllerParams(
        a=float(a), a_prime=a_prime, a_tilde=a_tilde, k=k, c=c_val, c_g=c_g,
        K_alpha=K_alpha, zeta=zeta,
    )
    ctrl = GlobalController(plant, cert, k, c_val, quad_order, variant)
    return Synthesis(params, ctrl, tuple(notes))


# --------------------------------------------------------------------------- baseline


@dataclass(frozen=True)
class ExprFeedback:
    """A feedback given by a closed-form expression over the state."""

    expr: Expr
    x_names: tuple[str, ...]

    @cached_property
    def _fn(self):
        return compile_exprs([self.expr], list(self.x_names))

    def __call__(self, x) -> float:
        return self._fn(*x)[0]


def classical_backstepping(plant: PlantModel, c1: float, c2: float) -> tuple[ExprFeedback, Expr]:
    """Textbook backstepping law for the unperturbed example and its Lyapunov function."""
    if plant.name != "preliminary_example":
        raise SynthesisError("classical backstepping is only defined for the unperturbed example")
    if not (c1 > 0 and c2 > 0):
        raise SynthesisError("c1 and c2 must be positive")
    params = {"theta": plant.params["theta"], "c1": c1, "c2": c2}
    names = ["x1", "x2", *params]
    phi_b = parse(
        "-(1 + c1 + 2*theta*x1)*(x1 + theta*x1^2 + x2) - x1 - c2*(x2 + (1 + c1)*x1 + theta*x1^2)",
        names,
    )
    V_b = parse("x1^2/2 + (x2 + (1 + c1)*x1 + theta*x1^2)^2/2", names)
    return ExprFeedback(substitute(phi_b, params), ("x1", "x2")), substitute(V_b, params)


# --------------------------------------------------------------------------- attractor


@dataclass
class Attractor:
    """``{(x1, x2): V1(x1) <= M, x2 = phi1(x1)}``, represented by a dense sample."""

    cert: BacksteppingCertificate
    M: float | None = None
    cfg: SampleConfig = field(default_factory=SampleConfig)
    n_radii: int = 2001

    def __post_init__(self):
        if self.M is None:
            self.M = self.cert.M

    @cached_property
    def points(self) -> np.ndarray:
        dim = self.cert.n - 1
        X1, _, _ = sublevel_points(self.cert.np_V1, dim, self.M, self.cfg,
                                   n_radii=self.n_radii if dim == 1 else self.cfg.n_radii)
        X2 = self.cert.np_phi1(X1)
        return np.column_stack([X1, X2])

    @cached_property
    def _tree(self):
        return cKDTree(self.points)

    @property
    def grid_tol(self) -> float:
        """Largest gap between neighbouring samples, a bound on the discretisation error."""
        d, _ = self._tree.query(self.points, k=2)
        return float(d[:, 1].max())

    def distance(self, x) -> float:
        d, _ = self._tree.query(np.asarray(x, dtype=float))
        return float(d)


def attractor_distance(A: Attractor, x) -> float:
    return A.distance(x)
