import copy
import csv
import json
import math

import numpy as np
import pytest
from scipy.linalg import expm

from hysterix import presets
from hysterix.hybrid import (
    ArcInvariantError,
    Sample,
    arc_summary,
    csv_header,
    simulate,
    simulate_batch,
    validate_arc,
    write_summary_json,
    write_trajectory_csv,
)
from hysterix.hysteresis import ConstantModeController
from hysterix.integrator import IntegratorConfig
from hysterix.plant import PlantModel


@pytest.fixture(scope="module")
def paper_arc(plant, controller):
    return simulate(plant, controller, presets.PAPER_X0, presets.PAPER_Q0)


def test_paper_run_jump_structure(paper_arc, controller):
    arc = paper_arc
    validate_arc(arc)
    assert arc.termination == "converged"
    assert [(j.q_from, j.q_to) for j in arc.jumps] == [(1, 2), (2, 1)]
    first, second = arc.jumps
    assert first.t == 0.0 and not first.localized
    assert second.localized
    assert 0 <= second.guard <= 1e-9
    assert abs(controller.local.V_at(second.x) - 0.05) <= 1e-8
    assert second.t == pytest.approx(presets.PAPER_SWITCH_TIME, rel=0.2)
    assert math.hypot(*arc.x_final) <= 1e-6 and arc.t_final < 30


def test_phases_respect_flow_sets(paper_arc, controller):
    for ph in paper_arc.phases:
        for s in ph.samples[1:-1]:
            assert controller.in_C(ph.q, s.x)


def test_origin_is_converged_immediately(plant, controller):
    arc = simulate(plant, controller, (0.0, 0.0), 1)
    assert arc.termination == "converged" and arc.jumps == [] and arc.t_final == 0.0
    arc = simulate(plant, controller, (0.0, 0.0), 2)
    assert [(j.q_from, j.q_to) for j in arc.jumps] == [(2, 1)]
    assert arc.termination == "converged"
    validate_arc(arc)


def test_linear_double_pole_matches_matrix_exponential():
    plant = PlantModel.from_strings(2, ["x2"], "1", ["0"], "0")
    ctrl = ConstantModeController(lambda x: -x[0] - 2.0 * x[1])
    cfg = IntegratorConfig(t_max=1.0)
    x0 = (1.0, -0.5)
    arc = simulate(plant, ctrl, x0, 1, cfg)
    assert arc.termination == "t_max" and arc.t_final == 1.0
    ref = expm(np.array([[0.0, 1.0], [-1.0, -2.0]])) @ np.array(x0)
    assert np.allclose(arc.x_final, ref, rtol=0, atol=1e-6)


def test_deterministic(plant, controller):
    a = simulate(plant, controller, (2.0, -1.0), 2)
    b = simulate(plant, controller, (2.0, -1.0), 2)
    assert list(a.rows()) == list(b.rows())


def test_batch_matches_serial(plant, controller):
    ics = [((x, y), q) for x in (-3.0, 1.0) for y in (-2.0, 4.0) for q in (1, 2)]
    serial = simulate_batch(plant, controller, ics)
    parallel = simulate_batch(plant, controller, ics, workers=4)
    for s, p in zip(serial, parallel):
        assert list(s.rows()) == list(p.rows())


def test_j_max_termination(plant, controller):
    arc = simulate(plant, controller, presets.PAPER_X0, 1, IntegratorConfig(j_max=0))
    assert arc.termination == "j_max" and arc.jumps == []
    validate_arc(arc)


def test_escape_termination():
    plant = PlantModel.from_strings(2, ["x1^2 + x2"], "1", ["0"], "0")
    arc = simulate(plant, ConstantModeController(lambda x: 0.0), (1.0, 0.0), 1)
    assert arc.termination == "escape"
    validate_arc(arc)


def test_error_termination():
    plant = PlantModel.from_strings(2, ["x2"], "1", ["0"], "0")

    def bad(x):
        if x[0] < 0.5:
            raise ArithmeticError("feedback undefined")
        return -1.0

    arc = simulate(plant, ConstantModeController(bad), (1.0, 0.0), 1)
    assert arc.termination == "error" and "undefined" in arc.message
    validate_arc(arc)


def test_bad_initial_conditions(plant, controller):
    with pytest.raises(ValueError):
        simulate(plant, controller, (1.0,), 1)
    with pytest.raises(ValueError):
        simulate(plant, controller, (1.0, 0.0), 3)
    with pytest.raises(ValueError):
        simulate(plant, controller, (math.nan, 0.0), 1)


def test_sample_stride(plant, controller):
    arc = simulate(plant, controller, (0.2, -0.1), 1, IntegratorConfig(sample_stride=0.5, t_max=3.0))
    ts = [s.t for ph in arc.phases for s in ph.samples]
    interior = ts[1:-1]
    assert all(abs(t / 0.5 - round(t / 0.5)) < 1e-12 for t in interior)


def test_validator_catches_corruption(paper_arc):
    bad = copy.deepcopy(paper_arc)
    s = bad.phases[1].samples[0]
    bad.phases[1].samples[0] = Sample(s.t, (s.x[0] + 1e-12, s.x[1]), s.u)
    with pytest.raises(ArcInvariantError):
        validate_arc(bad)
    bad = copy.deepcopy(paper_arc)
    bad.phases[2].samples.reverse()
    with pytest.raises(ArcInvariantError):
        validate_arc(bad)
    bad = copy.deepcopy(paper_arc)
    bad.phases[2].j = 5
    with pytest.raises(ArcInvariantError):
        validate_arc(bad)


def test_csv_golden(paper_arc, tmp_path, local):
    assert csv_header(2) == ["t", "j", "q", "x1_1", "x2", "u", "V1", "V", "V_ell"]
    assert csv_header(3) == ["t", "j", "q", "x1_1", "x1_2", "x2", "u", "V1", "V", "V_ell"]
    path = tmp_path / "traj.csv"
    write_trajectory_csv(paper_arc, path, 2, V_ell=local.V_at)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,j,q,x1_1,x2,u,V1,V,V_ell"
    assert lines[1] == "0,0,1,0.5,0.10000000000000001,nan,nan,nan,0.72973002500000006"
    assert lines[2].startswith("0,1,2,0.5,0.10000000000000001,")
    with open(path) as fh:
        rows = list(csv.reader(fh))[1:]
    assert len(rows) == sum(len(ph.samples) for ph in paper_arc.phases)
    # every value round-trips exactly
    first_x2 = paper_arc.phases[-1].samples[-1].x[1]
    assert float(rows[-1][4]) == first_x2


def test_summary_json(paper_arc, tmp_path):
    path = tmp_path / "s.json"
    write_summary_json(paper_arc, path, note="x")
    data = json.loads(path.read_text())
    assert data["termination"] == "converged" and data["note"] == "x"
    assert data["jumps"] == arc_summary(paper_arc)["jumps"]
