import math

import numpy as np
import pytest

from ulamkit.jordan import JordanSystem
from ulamkit.ode import Forcing, IntegrationError, StepUnderflowError, Trajectory, integrate


def test_decoupled_exponentials():
    tr = integrate(JordanSystem.diagonal(1, -1), None, (1, 1), 0.0, 1.0)
    x = tr.states[-1]
    assert tr.times[-1] == 1.0
    assert abs(x[0] - math.e) < 1e-8 and abs(x[1] - 1 / math.e) < 1e-9


def test_rotation_period():
    tol = 1e-10
    tr = integrate(JordanSystem.rotation(0, 1), None, (1, 0), 0.0, 2 * math.pi, tol=tol)
    assert np.max(np.abs(tr.states[-1] - np.array([1, 0]))) < 10 * tol * 2 * math.pi


def test_backward_in_time():
    tr = integrate(JordanSystem.diagonal(-1, "i"), None, (1, 1), 0.0, -2.0)
    assert tr.times[0] == -2.0 and tr.times[-1] == 0.0
    assert abs(tr(-2.0)[0] - math.exp(2)) < 1e-7
    assert abs(tr(-2.0)[1] - np.exp(-2j)) < 1e-8


def test_two_sided_span_and_dense_output():
    s = JordanSystem.jordan_block(-1, 1)
    tr = integrate(s, None, (0, 1), 0.0, (-1.0, 2.0))
    for t in np.linspace(-1, 2, 37):
        X, _ = s.fundamental(t)
        assert np.max(np.abs(tr(t) - X @ np.array([0, 1]))) < 1e-8


def test_forcing_against_variation_of_constants():
    # x' = -x + 1 with x(0) = 0: x = 1 - e^{-t}
    tr = integrate(JordanSystem.diagonal(-1, -1), Forcing(1, "cos(t)"), (0, 0), 0.0, 3.0)
    x = tr(3.0)
    assert abs(x[0] - (1 - math.exp(-3))) < 1e-8
    want = 0.5 * (math.cos(3) + math.sin(3) - math.exp(-3))
    assert abs(x[1] - want) < 1e-8


def test_general_matrix_function():
    A = lambda t: np.array([[0, 1], [-1, 0]])  # noqa: E731
    tr = integrate(A, Forcing.zero(), (1, 0), 0.0, math.pi / 2)
    assert np.max(np.abs(tr.states[-1] - np.array([0, -1]))) < 1e-8


def test_forcing_from_callable():
    f = Forcing.from_callable(lambda t: (t, 2 * t))
    assert np.allclose(f(np.array([1.0, 2.0])), [[1, 2], [2, 4]])
    assert np.allclose(f(3.0), [3, 6])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_step_underflow_near_pole():
    s = JordanSystem.diagonal("1/(1-t)^2", 1, "(-inf,inf)")
    with pytest.raises((StepUnderflowError, IntegrationError)):
        integrate(s, None, (1, 1), 0.0, 2.0)


def test_csv_round_trip(tmp_path):
    tr = integrate(JordanSystem.rotation(-0.1, 1), None, (1, 0.5), 0.0, 3.0)
    path = tmp_path / "orbit.csv"
    text = tr.to_csv(path)
    assert text.splitlines()[0] == "t,re_x1,im_x1,re_x2,im_x2"
    back = Trajectory.from_csv(str(path))
    assert np.array_equal(back.times, tr.times) and np.array_equal(back.states, tr.states)


def test_csv_bad_header():
    with pytest.raises(ValueError):
        Trajectory.from_csv("a,b\n1,2\n")


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory([0.0, 0.0], [[1, 1], [1, 1]])
    with pytest.raises(ValueError):
        Trajectory([0.0, 1.0], [[1, np.nan], [1, 1]])
    tr = Trajectory([0.0, 1.0, 2.0], [[0, 0], [1, 1], [4, 4]])
    with pytest.raises(ValueError):
        tr(2.5)


def test_deterministic():
    s = JordanSystem.jordan_block("-1+i*t", "exp(-t^2)")
    a = integrate(s, Forcing("0.2*cos(t)", 0), (1, 2), 0.0, 4.0)
    b = integrate(s, Forcing("0.2*cos(t)", 0), (1, 2), 0.0, 4.0)
    assert a.to_csv() == b.to_csv()
