import math

import numpy as np
import pytest

from ulamkit.jordan import Form, NormKind
from ulamkit.kappa import best_constant, kappa_profile
from ulamkit.registry import EX65_A, EX65_A_PRINTED, EX65_R
from ulamkit.transform import (
    MatrixFunction, ResidualError, SingularTransformError, TransformSpec, UnboundedTransformError,
    classify, propagate_constant, reduce_inhomogeneous, residual, similarity, to_jordan_system,
)

from oracles import EX65_K13, EX65_PROPAGATED

SQ2 = math.sqrt(2.0)
INNER = np.linspace(0.05, math.pi / 2 - 0.05, 101)


@pytest.fixture(scope="module")
def ex65():
    spec = TransformSpec(MatrixFunction(EX65_R), "(0,pi/2)")
    return spec, similarity(MatrixFunction(EX65_A), spec)


def test_identity_transform():
    A = MatrixFunction(["t", "1", "0", "t"])
    spec = TransformSpec.from_entries(1, 0, 0, 1)
    J = similarity(A, spec)
    ts = np.linspace(-2, 2, 9)
    assert np.max(np.abs(J(ts) - A(ts))) < 1e-15
    assert spec.factor == 1.0


def test_csc_sec_reduction(ex65):
    spec, J = ex65
    assert classify(J, INNER) == "I"
    m = J(INNER)
    want = 1 / (np.sin(INNER) * np.cos(INNER))
    assert np.max(np.abs(m[:, 0, 0] - want) / want) < 1e-12
    assert np.max(np.abs(m[:, 1, 1] + want) / want) < 1e-12
    assert residual(MatrixFunction(EX65_A), spec, J, INNER) < 1e-12


def test_printed_coefficient_is_not_diagonalised():
    spec = TransformSpec(MatrixFunction(EX65_R), "(0,pi/2)")
    assert classify(similarity(MatrixFunction(EX65_A_PRINTED), spec), INNER) == "general"


def test_transform_norm_suprema(ex65):
    spec, _ = ex65
    assert abs(spec.sup_R - SQ2) < 1e-9 and abs(spec.sup_R_inv - SQ2) < 1e-9
    assert spec.bounded


def test_end_to_end_constant(ex65):
    spec, J = ex65
    system = to_jordan_system(J, "I", "(0,pi/2)")
    b = best_constant(kappa_profile(system, "hyperbolic"))
    assert abs(b.K - EX65_K13) < 1e-7
    assert abs(propagate_constant(b.K, spec) - EX65_PROPAGATED) < 2e-7


def test_constant_diagonaliser():
    A = np.array([[1.0, 2.0], [0.5, -1.0]])
    w, V = np.linalg.eig(A)
    Vinv = np.linalg.inv(V)
    spec = TransformSpec(MatrixFunction([float(Vinv[0, 0]), float(Vinv[0, 1]), float(Vinv[1, 0]), float(Vinv[1, 1])]))
    J = similarity(MatrixFunction([1, 2, 0.5, -1]), spec)
    ts = np.array([-1.0, 0.0, 3.0])
    assert classify(J, ts) == "I"
    assert np.max(np.abs(np.diagonal(J(0.0)) - w)) < 1e-12


def test_numeric_callable_fallback():
    R = lambda t: np.array([[np.cos(t), 1j * np.sin(t)], [1j * np.sin(t), np.cos(t)]])  # noqa: E731
    spec = TransformSpec(R, "(0,pi/2)")
    J = similarity(MatrixFunction(EX65_A), spec)
    assert classify(J, INNER, tol=1e-7) == "I"


def test_rotation_frame_gives_form_iii():
    # constant rotation of a form III matrix stays form III
    c, s = math.cos(0.3), math.sin(0.3)
    spec = TransformSpec.from_entries(c, s, -s, c)
    J = similarity(MatrixFunction(["-1", "2+t", "-2-t", "-1"]), spec)
    assert classify(J, np.linspace(-1, 1, 5)) == "III"
    assert to_jordan_system(J, "III", "(-inf,inf)").form is Form.III


def test_singular_transform():
    with pytest.raises(SingularTransformError):
        TransformSpec.from_entries(1, 1, 1, 1)


def test_unbounded_transform():
    spec = TransformSpec.from_entries("exp(t)", 0, 0, 1, "(0,inf)")
    assert not spec.bounded
    with pytest.raises(UnboundedTransformError):
        propagate_constant(1.0, spec)


def test_propagation_factor_diagonal_scaling():
    spec = TransformSpec.from_entries(2, 0, 0, 1, norm=NormKind.MAX)
    assert abs(propagate_constant(0.5, spec) - 1.0) < 1e-15


def test_orthogonal_transform_euclid():
    c, s = math.cos(1.1), math.sin(1.1)
    spec = TransformSpec.from_entries(c, -s, s, c, norm=NormKind.EUCLID)
    assert abs(spec.factor - 1.0) < 1e-14


def test_round_trip_recovers_a():
    A = MatrixFunction(["-1+t", "1", "0.5", "2"])
    spec = TransformSpec.from_entries("2+sin(t)", "0.3", "0", "1")
    J = similarity(A, spec)
    back = TransformSpec(spec.inverse if spec._inv.exprs is None else spec._inv)
    A2 = similarity(J, back)
    ts = np.linspace(-2, 2, 11)
    assert np.max(np.abs(A2(ts) - A(ts))) < 1e-12


def test_reduce_inhomogeneous_constant():
    A = MatrixFunction([-1, 0, 0, -2])
    f = (1, 1)
    z = lambda t: np.broadcast_to(np.array([1.0, 0.5], dtype=complex), np.shape(t) + (2,))  # noqa: E731
    phi = lambda t: z(t) + np.stack([np.exp(-t), 0 * t], axis=-1)  # noqa: E731
    red = reduce_inhomogeneous(A, f, z, phi, np.linspace(0, 3, 7))
    assert red.z_residual < 1e-9
    assert np.allclose(red.psi(np.array([0.0])), [[1, 0]])
    assert np.allclose(red.lift(red.psi)(np.array([1.0])), phi(np.array([1.0])))


def test_reduce_identity():
    A = MatrixFunction([1, 0, 0, 1])
    zero = lambda t: np.zeros(np.shape(t) + (2,), dtype=complex)  # noqa: E731
    phi = lambda t: np.stack([np.exp(t), np.exp(t)], axis=-1)  # noqa: E731
    red = reduce_inhomogeneous(A, (0, 0), zero, phi, np.linspace(0, 1, 5))
    assert np.array_equal(red.psi(np.array([0.5])), phi(np.array([0.5])))


def test_reduce_rejects_wrong_particular_solution():
    A = MatrixFunction([-1, 0, 0, -1])
    z = lambda t: np.zeros(np.shape(t) + (2,), dtype=complex)  # noqa: E731
    with pytest.raises(ResidualError):
        reduce_inhomogeneous(A, (1, 0), z, z, np.linspace(0, 1, 5))
