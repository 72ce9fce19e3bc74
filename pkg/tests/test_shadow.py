import json
import math

import numpy as np
import pytest

from ulamkit.jordan import JordanSystem, NormKind
from ulamkit.ode import Forcing, integrate
from ulamkit.shadow import (
    ApproxSolution, GridTooCoarseWarning, NoLimitError, anchor, defect, deviation, deviation_values,
    forced_anchor, shadow, shadow_solution, uniqueness_probe,
)

EPS = 0.1


@pytest.fixture(scope="module")
def blow_up():
    return JordanSystem.diagonal("1/(1-t)", "-1/t", "(0,1)")


def test_exact_solution_has_no_defect():
    s = JordanSystem.rotation(-1, 2)
    tr = integrate(s, None, (1, 0.5), 0.0, (-3.0, 3.0), tol=1e-11)
    rep = defect(tr, s, NormKind.EUCLID, times=np.linspace(-2.9, 2.9, 201))
    assert rep.epsilon < 1e-7


def test_instability_phi_defect():
    s = JordanSystem.jordan_block("2*t/(1+t^2)", 1)
    phi = (f"{EPS}*(1+t^2)*atan(t)", 0)
    rep = defect(phi, s, times=np.linspace(-50, 50, 1001))
    assert abs(rep.epsilon - EPS) < 1e-12
    assert np.max(np.abs(rep.forcing[:, 0] - EPS)) < 1e-11


def test_constant_offset_defect():
    s = JordanSystem.diagonal(-1, -1)
    c = np.array([0.3, -0.7j])
    phi = ("2*exp(-t)+0.3", "-0.7*i")
    rep = defect(phi, s, times=np.linspace(-3, 3, 61))
    assert np.max(np.abs(rep.forcing - c)) < 1e-12
    assert abs(rep.epsilon - 0.7) < 1e-12


def test_coarse_grid_warning():
    s = JordanSystem.diagonal(-1, -1)
    with pytest.warns(GridTooCoarseWarning):
        # the sup sits on an odd sample, which the half grid drops
        defect(("t^2", 0), s, times=np.linspace(0, 1, 4))


def test_anchor_of_exact_solution():
    s = JordanSystem.jordan_block("1+i*t", "2/sqrt(pi)*exp(-t^2)")
    c = np.array([1 - 2j, 0.5])
    phi = lambda t: s.apply(t, np.broadcast_to(c, np.shape(t) + (2,)))  # noqa: E731
    assert np.max(np.abs(anchor(phi, s, "forward") - c)) < 1e-9


def test_blow_up_wobble_recovery(blow_up):
    c = np.array([2.0, 3.0])

    def phi(t):
        t = np.asarray(t, dtype=float)
        x = blow_up.apply(t, np.broadcast_to(c, t.shape + (2,)))
        wobble = EPS * 0.5 * np.stack([np.sin(7 * t), np.cos(5 * t)], axis=-1)
        return x + wobble

    got = anchor(phi, blow_up, "hyperbolic")
    assert np.max(np.abs(got - c)) < 1e-7
    dev = deviation_values(phi, blow_up, got, np.linspace(0.01, 0.99, 99))
    assert np.max(dev) <= 0.5 * EPS * (1 + 1e-6)


def test_no_limit():
    s = JordanSystem.diagonal(1, 1)
    with pytest.raises(NoLimitError):
        anchor(("t*exp(t)", "exp(t)"), s, "forward")


def test_hyperbolic_needs_form_i():
    with pytest.raises(ValueError):
        anchor(("0", "0"), JordanSystem.rotation(1, 1), "hyperbolic")


def test_zero_deviation_for_exact_solution():
    s = JordanSystem.diagonal(-1, "2+i")
    c = np.array([1.0, 1.0j])
    ts = np.linspace(-4, 4, 33)
    x = shadow_solution(c, s, ts)
    d, _ = deviation(x, x)
    assert d == 0.0


def test_shadow_pipeline_constant_system():
    s = JordanSystem.diagonal(-1, -2)
    # start near the bounded solution so backward growth stays moderate
    x0 = (EPS / 2 + 1e-3, 3 * EPS / 13)
    tr = integrate(s, Forcing(f"{EPS}*cos(t)", f"{-EPS}*sin(3*t)"), x0, 0.0, (-12.0, 5.0), tol=1e-12)
    rep = shadow(tr, s, "backward", times=np.linspace(-10, 5, 501))
    assert abs(rep.K - 1.0) < 1e-8
    assert abs(rep.epsilon - EPS) < 1e-4
    assert rep.within_bound()
    assert rep.hypotheses_hold
    d = json.loads(rep.to_json())
    assert set(d) >= {"epsilon", "K", "anchor", "sup_deviation", "ratio", "conditions"}
    assert rep.deviation_csv().startswith("t,deviation\n")


def test_shadow_given_constant_skips_search():
    s = JordanSystem.rotation(-1, 2)
    phi = ("exp(-t)*cos(2*t)+0.05*sin(t)", "-exp(-t)*sin(2*t)")
    rep = shadow(phi, s, "backward", NormKind.EUCLID, K=1.0, times=np.linspace(-5, 5, 401))
    assert rep.K == 1.0 and rep.within_bound()


def test_forced_anchor_matches_limit():
    s = JordanSystem.diagonal(1, 1)
    f = Forcing("exp(-t^2)", 0)
    c = forced_anchor(s, f, (0, 0), 0.0, "forward")
    # ∫_0^∞ e^{-s} e^{-s^2} ds
    want = 0.5 * math.sqrt(math.pi) * math.exp(0.25) * math.erfc(0.5)
    assert abs(c[0] - want) < 1e-12 and c[1] == 0


def test_forced_anchor_linearity():
    s = JordanSystem.jordan_block("1+0.2*t^2", "cos(t)")
    f = Forcing("0.3*exp(i*t)", "-0.2")
    x0 = np.array([0.4 + 0.1j, -1.0])
    c1 = np.array([2.0, -1j])
    base = forced_anchor(s, f, x0, 0.5, "forward")
    moved = forced_anchor(s, f, x0 + s.apply(0.5, c1), 0.5, "forward")
    assert np.max(np.abs(moved - base - c1)) < 1e-12


@pytest.mark.parametrize("system,delta,direction,verdict", [
    (JordanSystem.diagonal(1, 1), (1, 0), "forward", "diverges"),
    (JordanSystem.diagonal("1/(1-t)", "-1/t", "(0,1)"), (1, 0), "hyperbolic", "diverges"),
    (JordanSystem.rotation(0, 1), (1, 0), "forward", "no-divergence"),
])
def test_uniqueness_probe(system, delta, direction, verdict):
    assert uniqueness_probe(system, delta, direction).verdict == verdict


def test_approx_solution_sources():
    s = ApproxSolution(("t^2", "i"))
    assert np.allclose(s.derivative(np.array([1.0])), [[2, 0]])
    f = ApproxSolution(lambda t: np.stack([np.sin(t), np.cos(t)], axis=-1))
    assert np.max(np.abs(f.derivative(np.array([0.3])) - [[math.cos(0.3), -math.sin(0.3)]])) < 1e-10
    with pytest.raises(TypeError):
        ApproxSolution(42)
