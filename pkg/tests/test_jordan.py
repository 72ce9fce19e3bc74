import math

import numpy as np
import pytest
from scipy.linalg import expm

from ulamkit.jordan import Form, JordanSystem, NormKind, matrix_norm, norm


def test_form_i_matrix():
    s = JordanSystem.diagonal(1, -1)
    assert np.array_equal(s.coefficient_matrix(3.0), np.diag([1, -1]).astype(complex))


def test_form_ii_matrix():
    s = JordanSystem.jordan_block(-1, 1)
    assert np.array_equal(s.coefficient_matrix(0.2), np.array([[-1, 1], [0, -1]], dtype=complex))


def test_form_iii_matrix():
    s = JordanSystem.rotation(-1, 2)
    assert np.array_equal(s.coefficient_matrix(-5.0), np.array([[-1, 2], [-2, -1]], dtype=complex))


@pytest.mark.parametrize("system", [
    JordanSystem.diagonal("1+i*t", "-t"),
    JordanSystem.jordan_block("2*t/(1+t^2)", 1),
    JordanSystem.rotation("1-2*t/(1+t^2)", "t"),
])
def test_identity_at_t0(system):
    X, Xi = system.fundamental(system.t0)
    assert np.allclose(X, np.eye(2), atol=0) and np.allclose(Xi, np.eye(2), atol=0)


def test_quarter_turn():
    s = JordanSystem.rotation(0, 1)
    X, _ = s.fundamental(math.pi / 2)
    assert np.max(np.abs(X - np.array([[0, 1], [-1, 0]]))) < 1e-14


@pytest.mark.parametrize("system", [
    JordanSystem.diagonal("2+i", 3),
    JordanSystem.jordan_block(-1, "0.5-2*i"),
    JordanSystem.rotation(-1, 2),
])
def test_constant_systems_match_expm(system):
    A = system.coefficient_matrix(0.0)
    for t in [-1.3, 0.4, 2.0]:
        X, Xi = system.fundamental(t)
        ref = expm(A * t)
        assert np.max(np.abs(X - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))
        assert np.max(np.abs(X @ Xi - np.eye(2))) < 1e-12


def test_fundamental_solves_ode():
    s = JordanSystem.jordan_block("1+i*t", "2/sqrt(pi)*exp(-t^2)")
    h = 1e-4
    for t in [-1.0, 0.3, 1.7]:
        Xp = (s.fundamental(t + h)[0] - s.fundamental(t - h)[0]) / (2 * h)
        X = s.fundamental(t)[0]
        assert np.max(np.abs(Xp - s.coefficient_matrix(t) @ X)) < 1e-6 * max(1, np.abs(X).max())


def test_blow_up_fundamental():
    s = JordanSystem.diagonal("1/(1-t)", "-1/t", "(0,1)")
    X, _ = s.fundamental(0.9)
    # X = diag((1-t0)/(1-t), t0/t) with t0 = 1/2
    assert abs(X[0, 0] - 0.5 / 0.1) < 1e-11 and abs(X[1, 1] - 0.5 / 0.9) < 1e-12


def test_transition_matches_product():
    s = JordanSystem.rotation("-1+cos(t)", "t^2")
    X1, _ = s.fundamental(1.2)
    _, X2i = s.fundamental(-0.4)
    assert np.max(np.abs(s.transition(1.2, -0.4) - X1 @ X2i)) < 1e-12


def test_apply_survives_overflowing_factors():
    s = JordanSystem.diagonal(1, -1)
    v = np.array([np.exp(-700.0), np.exp(700.0)])
    out = s.apply(750.0, v)
    assert np.isfinite(out).all()
    assert abs(out[0] - np.exp(50.0)) < 1e-9 * np.exp(50.0)


def test_form_iii_rejects_complex():
    with pytest.raises(ValueError):
        JordanSystem.rotation("i*t", 1)


def test_t0_must_be_interior():
    with pytest.raises(ValueError):
        JordanSystem.diagonal(1, 1, "(0,1)", t0=1.0)


def test_default_t0_midpoint():
    assert JordanSystem.diagonal(1, 1, "(0,1)").t0 == 0.5


def test_constant_detection():
    assert JordanSystem.diagonal(1, "2+0*t").is_constant()
    assert not JordanSystem.diagonal(1, "t").is_constant()


def test_describe_and_names():
    d = JordanSystem.rotation("-1", "2").describe()
    assert d["form"] == "III" and d["alpha"] == "-1" and d["beta"] == "2"
    assert Form.parse("ii") is Form.II


@pytest.mark.parametrize("v,kind,want", [
    ((1, -1), NormKind.MAX, 1.0),
    ((1, -1), NormKind.EUCLID, math.sqrt(2)),
    ((3 + 4j, 0), NormKind.MAX, 5.0),
    ((3 + 4j, 0), NormKind.EUCLID, 5.0),
])
def test_vector_norms(v, kind, want):
    assert abs(norm(v, kind) - want) < 1e-15


def test_matrix_norms():
    m = np.array([[1, -2], [3, 0.5]])
    assert matrix_norm(m, NormKind.MAX) == 3.5
    assert abs(matrix_norm(m, NormKind.EUCLID) - np.linalg.svd(m, compute_uv=False)[0]) < 1e-14


def test_norm_parse_aliases():
    assert NormKind.parse("max") is NormKind.MAX
    assert NormKind.parse("Euclidean") is NormKind.EUCLID
    with pytest.raises(ValueError):
        NormKind.parse("taxicab")
