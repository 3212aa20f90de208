"""Deterministic sampling helpers: quasi-random boxes, directions and level sets."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import norm, qmc

__all__ = [
    "SampleConfig",
    "SamplingError",
    "gauss_legendre_01",
    "halton_box",
    "unit_directions",
    "radial_level",
    "sublevel_points",
    "level_ring_points",
]


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class SampleConfig:
    """Knobs shared by the sampling-based checks and searches."""

    n_samples: int = 10_000
    seed: int = 0
    box: float = 10.0  # half-width of the default state box
    u_range: tuple[float, float] = (-1e3, 1e3)
    n_u_periodic: int = 64
    n_directions: int = 256
    n_radii: int = 64
    rel_tol: float = 1e-9  # slack for non-strict inequalities


@lru_cache(maxsize=None)
def gauss_legendre_01(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    x, w = np.polynomial.legendre.leggauss(order)
    nodes = 0.5 * (x + 1.0)
    weights = 0.5 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def halton_box(n: int, lo, hi, seed: int = 0) -> np.ndarray:
    """``n`` scrambled Halton points in the box ``[lo, hi]`` (arrays or scalars)."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    d = max(lo.size, hi.size)
    lo = np.broadcast_to(lo, (d,))
    hi = np.broadcast_to(hi, (d,))
    sampler = qmc.Halton(d=d, scramble=True, seed=seed)
    pts = sampler.random(n)
    return lo + pts * (hi - lo)


def unit_directions(dim: int, n: int, seed: int = 0) -> np.ndarray:
    """Quasi-uniform unit vectors in R^dim (exactly ±1 in one dimension, an even fan in two)."""
    if dim == 1:
        return np.array([[-1.0], [1.0]])
    if dim == 2:
        ang = 2.0 * np.pi * np.arange(n) / n
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        u = qmc.Halton(d=dim, scramble=True, seed=seed).random(n)
    g = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def radial_level(fun, dirs: np.ndarray, level, r0: float = 1.0, r_cap: float = 1e8, iters: int = 80):
    """Radius along each direction where ``fun`` first reaches ``level``.

    ``fun`` maps an ``(N, dim)`` array to ``N`` values and is assumed to grow
    along rays from the origin (true for the proper, positive definite
    functions used here). ``level`` may be a scalar or one value per direction.
    """
    dirs = np.asarray(dirs, dtype=float)
    level = np.broadcast_to(np.asarray(level, dtype=float), (dirs.shape[0],))
    hi = np.full(dirs.shape[0], float(r0))
    for _ in range(200):
        below = fun(dirs * hi[:, None]) < level
        if not below.any():
            break
        hi = np.where(below, hi * 2.0, hi)
        if (hi > r_cap).any():
            raise SamplingError(
                "sublevel set not bracketed: boundary samples still inside the set "
                f"at radius {r_cap:g}"
            )
    lo = np.zeros_like(hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = fun(dirs * mid[:, None]) <= level
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    # lo stays inside the set
    return lo


def sublevel_points(fun, dim: int, level: float, cfg: SampleConfig, n_radii: int | None = None):
    """Points filling ``{fun <= level}`` along rays, boundary included.

    Returns ``(points, boundary_radii, directions)``.
    """
    n_radii = n_radii or cfg.n_radii
    dirs = unit_directions(dim, cfg.n_directions, cfg.seed)
    if level <= 0:
        r = np.zeros(dirs.shape[0])
    else:
        r = radial_level(fun, dirs, level)
    fr = np.linspace(0.0, 1.0, n_radii)
    pts = (fr[None, :, None] * r[:, None, None]) * dirs[:, None, :]
    return pts.reshape(-1, dim), r, dirs


def level_ring_points(fun, dim: int, lo_level: float, hi_level: float, n: int, seed: int = 0,
                      boundary_fraction: float = 0.125):
    """About ``n`` points on level sets of ``fun`` between ``lo_level`` and ``hi_level``.

    Levels are log-uniform (quasi-random) so that the neighbourhood of the
    inner level is covered as well as the outer one; a fraction of the points
    sit exactly on the outer level.
    """
    n_dirs = max(16, int(math.sqrt(n)) * 2) if dim > 1 else 2
    n_per = max(1, n // n_dirs)
    dirs = unit_directions(dim, n_dirs, seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        q = qmc.Halton(d=1, scramble=True, seed=seed).random(n_dirs * n_per)[:, 0]
    levels = np.exp(np.log(lo_level) + q * (np.log(hi_level) - np.log(lo_level)))
    n_edge = int(boundary_fraction * levels.size)
    levels[:n_edge] = hi_level
    D = np.repeat(dirs, n_per, axis=0)
    # shuffle levels across directions deterministically so each ray sees a spread
    rng = np.random.default_rng(seed)
    levels = levels[rng.permutation(levels.size)]
    r = radial_level(fun, D, levels)
    return D * r[:, None]
