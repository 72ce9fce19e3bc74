"""Time-dependent similarity transforms and constant propagation.

With ``y = R(t) x`` the system ``x' = A(t) x`` becomes ``y' = J(t) y`` where
``J = (R' + R A) R^{-1}``.  When ``R`` and ``R^{-1}`` are bounded on the
interval, an Ulam constant ``K`` for one system gives
``sup‖R‖ · sup‖R^{-1}‖ · K`` for the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import optimize

from .calculus import Interval
from .expr import BinOp, Expr, ExprDomainError, ExprError, Neg, Num, _simplify, as_expr, differentiate
from .jordan import Form, JordanSystem, NormKind, matrix_norm
from .ode import Trajectory

__all__ = [
    "MatrixFunction", "TransformSpec", "Reduction", "SingularTransformError", "UnboundedTransformError",
    "ResidualError", "matrix_function", "similarity", "classify", "to_jordan_system", "propagate_constant",
    "reduce_inhomogeneous", "residual",
]


class SingularTransformError(ArithmeticError):
    def __init__(self, t: float, det: complex):
        super().__init__(f"R(t) is singular near t={t!r} (|det| = {abs(det):.3g})")
        self.t = t


class UnboundedTransformError(ArithmeticError):
    pass


class ResidualError(ArithmeticError):
    pass


def _sym(op: str, a: Expr, b: Expr) -> Expr:
    return BinOp(op, a, b)


class MatrixFunction:
    """A 2×2 matrix of scalar functions of t, symbolic when every entry is an expression."""

    def __init__(self, entries: Sequence, derivative: Optional[Callable] = None):
        entries = list(entries)
        if len(entries) != 4:
            raise ValueError("a 2x2 matrix needs four entries (r11, r12, r21, r22)")
        self.exprs: Optional[list[Expr]] = None
        self._derivative = derivative
        if all(not callable(e) or isinstance(e, Expr) for e in entries):
            self.exprs = [as_expr(e) for e in entries]
            self._fns = [e.vectorized for e in self.exprs]
        else:
            self._fns = [e if callable(e) else (lambda t, c=complex(e): np.full(np.shape(t), c)) for e in entries]

    @classmethod
    def from_callable(cls, fn: Callable) -> "MatrixFunction":
        """Wrap ``t -> 2×2 array`` (scalar t)."""
        def entry(i, j):
            return lambda t: np.vectorize(lambda s: complex(np.asarray(fn(float(s)))[i, j]), otypes=[complex])(t)
        return cls([entry(0, 0), entry(0, 1), entry(1, 0), entry(1, 1)])

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        vals = [np.broadcast_to(np.asarray(f(t), dtype=complex), t.shape) for f in self._fns]
        return np.stack([np.stack(vals[:2], -1), np.stack(vals[2:], -1)], -2)

    def derivative_matrix(self) -> Optional["MatrixFunction"]:
        if self.exprs is None:
            return None
        try:
            return MatrixFunction([differentiate(e) for e in self.exprs])
        except ExprError:
            return None

    def derivative(self, t) -> np.ndarray:
        """R'(t): symbolic when possible, otherwise 4th-order central differences."""
        if self._derivative is not None:
            return np.asarray(self._derivative(t), dtype=complex)
        d = self.derivative_matrix()
        if d is not None:
            return d(t)
        t = np.asarray(t, dtype=float)
        h = 1e-3 * np.maximum(1.0, np.abs(t))
        hh = h[..., None, None]
        return (-self(t + 2 * h) + 8 * self(t + h) - 8 * self(t - h) + self(t - 2 * h)) / (12 * hh)

    def inverse(self, t) -> np.ndarray:
        m = self(t)
        det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
        adj = np.stack([np.stack([m[..., 1, 1], -m[..., 0, 1]], -1), np.stack([-m[..., 1, 0], m[..., 0, 0]], -1)], -2)
        return adj / det[..., None, None]

    def inverse_function(self) -> "MatrixFunction":
        if self.exprs is not None:
            r11, r12, r21, r22 = self.exprs
            det = _sym("-", _sym("*", r11, r22), _sym("*", r12, r21))
            return MatrixFunction([_simplify(_sym("/", e, det)) for e in (r22, Neg(r12), Neg(r21), r11)])
        return MatrixFunction([lambda t, i=i, j=j: self.inverse(t)[..., i, j] for i in range(2) for j in range(2)])

    def det(self, t) -> np.ndarray:
        m = self(t)
        return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def matrix_function(source) -> MatrixFunction:
    """Coerce a JordanSystem, MatrixFunction, 4-sequence or matrix-valued callable."""
    if isinstance(source, MatrixFunction):
        return source
    if isinstance(source, JordanSystem):
        c1, c2 = source.c1, source.c2
        if c1.expr is not None and c2.expr is not None:
            a, b = c1.expr, c2.expr
            entries = {Form.I: [a, Num(0.0), Num(0.0), b], Form.II: [a, b, Num(0.0), a],
                       Form.III: [a, b, Neg(b), a]}[source.form]
            return MatrixFunction(entries)
        return MatrixFunction.from_callable(lambda t: source.coefficient_matrix(t))
    if callable(source):
        return MatrixFunction.from_callable(source)
    flat = np.asarray(source, dtype=object).ravel().tolist()
    return MatrixFunction(flat)


def _norm_search(fn: Callable, interval: Interval, n: int = 2001) -> tuple[float, float, bool]:
    """(sup, argsup, bounded) of a scalar function on the interval by grid + refine."""
    raw = fn

    def fn(t):
        # overflow in the entries counts as an infinite norm
        try:
            return raw(t)
        except ExprDomainError:
            return math.inf

    a, b = interval.a, interval.b
    lo = a if math.isfinite(a) else -1e3
    hi = b if math.isfinite(b) else 1e3
    inset = 1e-9 * (hi - lo)
    ts = np.linspace(lo + (0 if interval.closed_left else inset), hi - (0 if interval.closed_right else inset), n)
    vals = np.array([fn(t) for t in ts])
    if not np.all(np.isfinite(vals)):
        return math.inf, float(ts[np.argmax(~np.isfinite(vals))]), False
    i = int(np.argmax(vals))
    best_t, best = float(ts[i]), float(vals[i])
    if 0 < i < n - 1:
        res = optimize.minimize_scalar(lambda s: -fn(s), bounds=(ts[i - 1], ts[i + 1]), method="bounded",
                                       options={"xatol": 1e-12 * max(1.0, abs(ts[i]))})
        if -res.fun > best:
            best_t, best = float(res.x), float(-res.fun)
    bounded = True
    typical = max(1.0, float(np.median(vals)))
    # growth toward infinite ends or into open finite ends
    for end, inner, closed in ((b, hi, interval.closed_right), (a, lo, interval.closed_left)):
        if math.isinf(end):
            probe = [inner * 2.0 ** k for k in range(1, 12)]
        elif not closed:
            width = hi - lo
            probe = [end - math.copysign(width, end - inner) * 10.0 ** (-j) for j in range(9, 16)]
        else:
            continue
        pv = [fn(p) for p in probe]
        grows = pv[-1] > pv[-2] > pv[-3] and pv[-1] > 1e3 * typical
        if not np.isfinite(pv[-1]) or grows:
            bounded = False
        for p, v in zip(probe, pv):
            if np.isfinite(v) and v > best:
                best, best_t = float(v), float(p)
    return best, best_t, bounded


class TransformSpec:
    """R(t) on an interval together with its derivative and norm suprema."""

    def __init__(self, R, interval: Union[str, Interval] = "(-inf,inf)", norm=NormKind.MAX,
                 check_points: int = 257):
        self.R = matrix_function(R)
        self.interval = interval if isinstance(interval, Interval) else Interval.parse(interval)
        self.norm = NormKind.parse(norm)
        self._inv = self.R.inverse_function()
        ts = self.samples(check_points)
        det = self.R.det(ts)
        k = int(np.argmin(np.abs(det)))
        if not np.abs(det[k]) > 1e-12:
            raise SingularTransformError(float(ts[k]), det[k])
        self._sups: dict = {}

    @classmethod
    def from_entries(cls, r11, r12, r21, r22, interval="(-inf,inf)", norm=NormKind.MAX) -> "TransformSpec":
        return cls(MatrixFunction([r11, r12, r21, r22]), interval, norm)

    def samples(self, n: int) -> np.ndarray:
        a, b = self.interval.a, self.interval.b
        lo = a if math.isfinite(a) else -50.0
        hi = b if math.isfinite(b) else 50.0
        u = (np.arange(n) + 0.5) / n
        return lo + (hi - lo) * u

    def matrix(self, t) -> np.ndarray:
        return self.R(t)

    def inverse(self, t) -> np.ndarray:
        return self._inv(t)

    def derivative(self, t) -> np.ndarray:
        return self.R.derivative(t)

    def _sup(self, which: str) -> tuple[float, float, bool]:
        if which not in self._sups:
            mf = self.R if which == "R" else self._inv
            self._sups[which] = _norm_search(lambda t: float(matrix_norm(mf(float(t)), self.norm)), self.interval)
        return self._sups[which]

    @property
    def sup_R(self) -> float:
        return self._sup("R")[0]

    @property
    def sup_R_inv(self) -> float:
        return self._sup("Rinv")[0]

    @property
    def bounded(self) -> bool:
        return self._sup("R")[2] and self._sup("Rinv")[2]

    @property
    def factor(self) -> float:
        return self.sup_R * self.sup_R_inv


def similarity(A, spec: TransformSpec) -> MatrixFunction:
    """J(t) = (R'(t) + R(t)A(t)) R(t)^{-1}; symbolic when R and A are."""
    A = matrix_function(A)
    R, Rinv = spec.R, spec._inv
    dR = R.derivative_matrix()
    if A.exprs is not None and R.exprs is not None and dR is not None and Rinv.exprs is not None:
        def mul(X, Y):
            return [_sym("+", _sym("*", X[2 * i], Y[j]), _sym("*", X[2 * i + 1], Y[2 + j]))
                    for i in range(2) for j in range(2)]
        RA = mul(R.exprs, A.exprs)
        M = [_sym("+", d, ra) for d, ra in zip(dR.exprs, RA)]
        return MatrixFunction([_simplify(e) for e in mul(M, Rinv.exprs)])

    def J(t):
        t = np.asarray(t, dtype=float)
        return (spec.derivative(t) + spec.matrix(t) @ A(t)) @ spec.inverse(t)
    return MatrixFunction([lambda t, i=i, j=j: J(t)[..., i, j] for i in range(2) for j in range(2)])


def residual(A, spec: TransformSpec, J: MatrixFunction, times) -> float:
    """max |J R − R' − R A| relative to the scale of the terms."""
    A = matrix_function(A)
    ts = np.asarray(times, dtype=float)
    R = spec.matrix(ts)
    lhs = J(ts) @ R
    rhs = spec.derivative(ts) + R @ A(ts)
    scale = np.maximum(1.0, np.max(np.abs(rhs), axis=(-1, -2)))
    return float(np.max(np.max(np.abs(lhs - rhs), axis=(-1, -2)) / scale))


def classify(J: MatrixFunction, times, tol: float = 1e-10) -> str:
    """'I', 'II', 'III' or 'general' by entry patterns at the sample times."""
    m = J(np.asarray(times, dtype=float))
    scale = np.maximum(1.0, np.max(np.abs(m), axis=(-1, -2)))

    def small(x):
        return bool(np.all(np.abs(x) <= tol * scale))
    if small(m[..., 0, 1]) and small(m[..., 1, 0]):
        return "I"
    if small(m[..., 1, 0]) and small(m[..., 0, 0] - m[..., 1, 1]):
        return "II"
    if small(m[..., 0, 0] - m[..., 1, 1]) and small(m[..., 0, 1] + m[..., 1, 0]) \
            and small(np.imag(m[..., 0, 0])) and small(np.imag(m[..., 0, 1])):
        return "III"
    return "general"


def to_jordan_system(J: MatrixFunction, form: str, interval, t0=None) -> JordanSystem:
    """Read the coefficients of a classified J(t) into a JordanSystem."""
    f = Form.parse(form)
    if J.exprs is not None:
        e = J.exprs
        c1, c2 = {Form.I: (e[0], e[3]), Form.II: (e[0], e[1]), Form.III: (e[0], e[1])}[f]
        if f is Form.III:
            # the imaginary parts vanish on the samples; keep the real parts
            c1, c2 = (lambda t, g=c1.vectorized: np.real(g(t))), (lambda t, g=c2.vectorized: np.real(g(t)))
    else:
        idx = {Form.I: ((0, 0), (1, 1)), Form.II: ((0, 0), (0, 1)), Form.III: ((0, 0), (0, 1))}[f]
        c1 = lambda t, k=idx[0]: J(t)[..., k[0], k[1]]  # noqa: E731
        c2 = lambda t, k=idx[1]: J(t)[..., k[0], k[1]]  # noqa: E731
    return JordanSystem(f, c1, c2, interval, t0)


def propagate_constant(K: float, spec: TransformSpec) -> float:
    """sup‖R‖ · sup‖R^{-1}‖ · K in the transform's norm (an upper bound, not a best constant)."""
    if not spec.bounded or not math.isfinite(spec.factor):
        raise UnboundedTransformError("sup ‖R‖ or sup ‖R^-1‖ is infinite; the constant does not transfer")
    return spec.factor * float(K)


@dataclass
class Reduction:
    """φ − z as an approximate solution of the homogeneous system; lift with y + z."""

    psi: Callable
    z: Callable
    z_residual: float

    def lift(self, y) -> Callable:
        return lambda t: np.asarray(y(t)) + np.asarray(self.z(t))


def reduce_inhomogeneous(A, f, z, phi, times, tol: float = 1e-6) -> Reduction:
    """Remove a particular solution ``z`` of ``x' = A x + f``.

    ``z`` and ``phi`` are callables ``t -> (..., 2)`` (Trajectories work);
    the residual ``z' − A z − f`` is checked by central differences.
    """
    A = matrix_function(A)
    ts = np.asarray(times, dtype=float)
    fv = (lambda t: np.asarray(f(t), dtype=complex)) if callable(f) else (lambda t: np.broadcast_to(
        np.asarray(f, dtype=complex), np.shape(t) + (2,)))
    if isinstance(z, Trajectory) and z.dense:
        lo, hi = z.span
        ts = ts[(ts >= lo) & (ts <= hi)]
    h = 1e-4 * np.maximum(1.0, np.abs(ts))
    if isinstance(z, Trajectory):
        lo, hi = z.span
        ts = np.clip(ts, lo + 2 * h, hi - 2 * h)
    hh = h[:, None]
    dz = (-z(ts + 2 * h) + 8 * z(ts + h) - 8 * z(ts - h) + z(ts - 2 * h)) / (12 * hh)
    res = dz - np.einsum("...ij,...j->...i", A(ts), np.asarray(z(ts), dtype=complex)) - fv(ts)
    scale = max(1.0, float(np.max(np.abs(fv(ts)))))
    err = float(np.max(np.abs(res))) / scale
    if err > tol:
        raise ResidualError(f"particular solution residual {err:.3g} exceeds {tol:.3g}")
    return Reduction(lambda t: np.asarray(phi(t), dtype=complex) - np.asarray(z(t), dtype=complex), z, err)
