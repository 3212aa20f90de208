"""Shared generators and hand-coded oracles for the test suite."""

import math

import numpy as np

from hysterix.expr import Binary, Const, Pow, Unary, Var

THETA = 1e-3
RHO = 2.0
C1 = (2 + RHO) * THETA / 2 + 1


def random_expr(rng: np.random.Generator, depth: int, names=("x1", "x2")):
    """Random smooth expression; divisions only by ``1 + (.)^2`` so it stays finite."""
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.35:
            return Const(float(np.round(rng.uniform(-3, 3), 3)))
        return Var(str(rng.choice(names)))
    k = rng.integers(0, 9)
    a = random_expr(rng, depth - 1, names)
    if k == 0:
        return Binary("+", a, random_expr(rng, depth - 1, names))
    if k == 1:
        return Binary("-", a, random_expr(rng, depth - 1, names))
    if k in (2, 3):
        return Binary("*", a, random_expr(rng, depth - 1, names))
    if k == 4:
        den = Binary("+", Const(1.0), Pow(random_expr(rng, depth - 1, names), 2))
        return Binary("/", a, den)
    if k == 5:
        return Pow(a, int(rng.integers(0, 4)))
    if k == 6:
        return Unary(str(rng.choice(["sin", "cos"])), a)
    if k == 7:
        return Unary("exp", Unary("sin", a))
    return Unary("neg", a)


# ----------------------------------------------------------- hand-coded worked example


def oracle_rhs(x1, x2, u, theta=THETA):
    """Worked-example vector field written out by hand."""
    return (x1 + x2 + theta * x1**2 + theta * (1 + x1) * math.sin(u), u)


def oracle_phi_g(x1, x2, theta=THETA, c1=C1, k=None, c=10.0, a=10.0, M=None):
    """Hand-derived closed form of the global feedback for the worked example."""
    if M is None:
        M = theta / (2 * RHO * (2 * c1 - theta * (2 + RHO)))
    if k is None:
        k = 2 * (M + a) / a**2
    phi1 = -(1 + c1) * x1 - theta * x1**2
    dphi1 = -(1 + c1) - 2 * theta * x1
    delta = abs(x1) * theta * (1 + abs(x1)) + theta * (1 + abs(x1)) * k * (1 + abs(dphi1))
    tu = (x2 - phi1) * (-c - c / 4 * delta**2)
    return tu / k - (1 + c1 + 2 * theta * x1) * (x1 + theta * x1**2 + x2) - x1 / k


def oracle_V_ell(x1, x2, theta=THETA):
    return 0.5 * (x1 - theta * x2) ** 2 + 0.5 * (2 * x1 + (1 - 2 * theta) * x2) ** 2
