import math

import numpy as np
import pytest

from helpers import oracle_rhs
from hysterix.plant import PlantError, PlantModel, paper_example, preliminary_example, state_names
from hysterix.sampling import halton_box


def test_state_names():
    assert state_names(2) == ["x1", "x2"]
    assert state_names(3) == ["x1_1", "x1_2", "x2"]


def test_rhs_matches_hand_coded_oracle(plant):
    P = halton_box(10_000, [-10, -10, -50], [10, 10, 50], seed=1)
    worst = 0.0
    for x1, x2, u in P:
        got = plant.rhs((x1, x2), u)
        ref = oracle_rhs(x1, x2, u)
        worst = max(worst, *(abs(a - b) / max(1.0, abs(b)) for a, b in zip(got, ref)))
    assert worst <= 1e-12


def test_vectorised_rhs_matches_scalar(plant):
    P = halton_box(500, [-5, -5, -5], [5, 5, 5], seed=2)
    F = plant.np_rhs(P[:, :2], P[:, 2])
    for row, (x1, x2, u) in zip(F, P):
        assert np.allclose(row, plant.rhs((x1, x2), u), rtol=1e-14, atol=1e-14)


def test_eval_dynamics_shape(plant):
    out = plant.eval_dynamics([0.5, 0.1], 0.0)
    assert out.shape == (2,)
    assert out[0] == pytest.approx(0.5 + 0.1 + 1e-3 * 0.25)
    assert out[1] == 0.0


def test_origin_is_equilibrium(plant):
    assert plant.rhs((0.0, 0.0), 0.0) == (0.0, 0.0)


def test_partial_derivatives(plant):
    assert plant.d_x2_f1_at((0.3, -2.0)) == (1.0,)
    assert plant.d_x2_h1_at((0.3, -2.0), 1.0) == (0.0,)


def test_theta_must_be_positive():
    with pytest.raises(PlantError):
        paper_example(0.0)
    with pytest.raises(PlantError):
        preliminary_example(-1.0)


@pytest.mark.parametrize(
    "f1, h1, h2",
    [
        (["x1 + x2 + 1"], ["0"], "0"),  # f1(0) != 0
        (["x1"], ["sin(u) + 1"], "0"),  # h1(0, 0, 0) != 0
        (["x1"], ["0"], "cos(u)"),  # h2(0, 0, 0) != 0
    ],
)
def test_equilibrium_requirements(f1, h1, h2):
    with pytest.raises(PlantError):
        PlantModel.from_strings(2, f1, "1", h1, h2)


def test_unknown_variables_rejected():
    with pytest.raises(ValueError):
        PlantModel.from_strings(2, ["x1 + u"], "1", ["0"], "0")  # u not allowed in f1
    with pytest.raises(ValueError):
        PlantModel.from_strings(2, ["x1 + y"], "1", ["0"], "0")


def test_periodic_input_detection(plant):
    assert plant.uses_u_periodically()
    other = PlantModel.from_strings(2, ["x1"], "1", ["x1*u"], "0")
    assert not other.uses_u_periodically()


def test_higher_dimensional_plant():
    p = PlantModel.from_strings(3, ["x1_2", "x2 + x1_1^2"], "1 + x1_1^2", ["0", "0"], "0")
    assert p.rhs((1.0, 2.0, 3.0), 0.5) == (2.0, 4.0, 1.0)
    assert math.isclose(p.f2_at((1.0, 0.0, 0.0)), 2.0)
