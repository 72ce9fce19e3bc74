"""Two-dimensional systems in generalized Jordan form and their fundamental matrices.

========  ==========================  ==========================
form      A(t)                        X(t)
========  ==========================  ==========================
I         diag(λ1, λ2)                diag(e^Λ1, e^Λ2)
II        [[λ, μ], [0, λ]]            e^Λ [[1, M], [0, 1]]
III       [[α, β], [-β, α]]           e^Α [[cos Θ, sin Θ], [-sin Θ, cos Θ]]
========  ==========================  ==========================

Capital letters are antiderivatives from the base point ``t0``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np

from .calculus import AntiderivativeGrid, Interval, vectorize
from .expr import Expr, as_expr, to_string

__all__ = ["Form", "NormKind", "Coefficient", "JordanSystem", "norm", "matrix_norm", "Mat2"]

Mat2 = np.ndarray  # complex, shape (2, 2)
CoefficientLike = Union["Coefficient", Expr, str, float, int, complex, Callable]


class Form(enum.Enum):
    I = "I"
    II = "II"
    III = "III"

    @classmethod
    def parse(cls, text: Union[str, "Form"]) -> "Form":
        if isinstance(text, Form):
            return text
        return cls(str(text).strip().upper())


class NormKind(enum.Enum):
    MAX = "max"
    EUCLID = "euclid"

    @classmethod
    def parse(cls, text: Union[str, "NormKind"]) -> "NormKind":
        if isinstance(text, NormKind):
            return text
        key = str(text).strip().lower()
        aliases = {"max": cls.MAX, "inf": cls.MAX, "maxnorm": cls.MAX,
                   "euclid": cls.EUCLID, "euclidean": cls.EUCLID, "2": cls.EUCLID, "euclidnorm": cls.EUCLID}
        if key not in aliases:
            raise ValueError(f"unknown norm {text!r}")
        return aliases[key]


def norm(v, kind: NormKind = NormKind.MAX) -> np.ndarray:
    """Vector norm over the last axis (length 2) using complex moduli."""
    a = np.abs(np.asarray(v, dtype=complex))
    if kind is NormKind.MAX:
        return a.max(axis=-1)
    return np.hypot(a[..., 0], a[..., 1])


def matrix_norm(m, kind: NormKind = NormKind.MAX) -> np.ndarray:
    """Induced operator norm: max row sum for the max norm, spectral for Euclid."""
    m = np.asarray(m, dtype=complex)
    if kind is NormKind.MAX:
        return np.abs(m).sum(axis=-1).max(axis=-1)
    return np.linalg.norm(m, ord=2, axis=(-2, -1))


class Coefficient:
    """A scalar coefficient function of ``t``: expression, constant or callable."""

    def __init__(self, source: CoefficientLike):
        if isinstance(source, Coefficient):
            self.expr, self._fn, self.text = source.expr, source._fn, source.text
            return
        if callable(source) and not isinstance(source, Expr):
            self.expr = None
            self._fn = source
            self.text = getattr(source, "__name__", "<callable>")
        else:
            self.expr = as_expr(source)
            self._fn = None
            self.text = to_string(self.expr)

    @cached_property
    def vec(self) -> Callable[[np.ndarray], np.ndarray]:
        if self.expr is not None:
            return self.expr.vectorized
        lifted = vectorize(self._fn)
        return lambda t: np.asarray(lifted(t), dtype=complex)

    @cached_property
    def scalar(self) -> Callable[[float], complex]:
        if self.expr is not None:
            return self.expr.scalar
        fn = self._fn
        return lambda t: complex(fn(t))

    def __call__(self, t):
        return self.scalar(float(t)) if np.ndim(t) == 0 else self.vec(t)

    @property
    def constant_value(self) -> complex | None:
        """The value if the coefficient is syntactically constant, else None."""
        if self.expr is not None and not self.expr.has_var:
            return self.expr.scalar(0.0)
        return None

    def __repr__(self) -> str:
        return f"Coefficient({self.text!r})"


def _default_t0(interval: Interval) -> float:
    a, b = interval.a, interval.b
    if a < 0 < b:
        return 0.0
    if math.isfinite(a) and math.isfinite(b):
        return 0.5 * (a + b)
    if math.isfinite(a):
        return a + 1.0
    return b - 1.0


@dataclass(eq=False)
class JordanSystem:
    """x' = A(t) x with A in form I, II or III on ``interval``.

    ``c1, c2`` are (λ1, λ2), (λ, μ) or (α, β) depending on ``form``.
    """

    form: Form
    c1: Coefficient
    c2: Coefficient
    interval: Interval = field(default_factory=lambda: Interval(-math.inf, math.inf))
    t0: float | None = None
    _grids: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.form = Form.parse(self.form)
        self.c1 = Coefficient(self.c1)
        self.c2 = Coefficient(self.c2)
        if isinstance(self.interval, str):
            self.interval = Interval.parse(self.interval)
        if self.t0 is None:
            self.t0 = _default_t0(self.interval)
        self.t0 = float(self.t0)
        if not self.interval.interior(self.t0):
            raise ValueError(f"t0={self.t0} is not interior to {self.interval}")
        if self.form is Form.III:
            self._check_real()

    # -- constructors ----------------------------------------------------------
    @classmethod
    def diagonal(cls, lam1, lam2, interval="(-inf,inf)", t0=None) -> "JordanSystem":
        return cls(Form.I, lam1, lam2, interval, t0)

    @classmethod
    def jordan_block(cls, lam, mu, interval="(-inf,inf)", t0=None) -> "JordanSystem":
        return cls(Form.II, lam, mu, interval, t0)

    @classmethod
    def rotation(cls, alpha, beta, interval="(-inf,inf)", t0=None) -> "JordanSystem":
        return cls(Form.III, alpha, beta, interval, t0)

    def _check_real(self) -> None:
        probe = self.sample_points(33)
        for name, c in (("alpha", self.c1), ("beta", self.c2)):
            vals = c.vec(probe)
            if np.max(np.abs(vals.imag)) > 1e-12:
                raise ValueError(f"form III coefficient {name} must be real-valued")

    def sample_points(self, n: int) -> np.ndarray:
        """``n`` deterministic interior points (used for probing coefficients)."""
        a, b = self.interval.a, self.interval.b
        u = (np.arange(n) + 0.5) / n
        lo = a if math.isfinite(a) else self.t0 - 20.0
        hi = b if math.isfinite(b) else self.t0 + 20.0
        return lo + (hi - lo) * u

    @property
    def coefficient_names(self) -> tuple[str, str]:
        return {Form.I: ("lambda1", "lambda2"), Form.II: ("lambda", "mu"), Form.III: ("alpha", "beta")}[self.form]

    def describe(self) -> dict:
        n1, n2 = self.coefficient_names
        return {"form": self.form.value, n1: self.c1.text, n2: self.c2.text,
                "interval": str(self.interval), "t0": self.t0}

    # -- antiderivatives ---------------------------------------------------------
    def _integrand(self, key: str) -> Callable:
        if key == "c1":
            return self.c1.vec
        if key == "c2":
            return self.c2.vec
        if key == "re_min":
            return lambda t: np.minimum(self.c1.vec(t).real, self.c2.vec(t).real)
        if key == "re_max":
            return lambda t: np.maximum(self.c1.vec(t).real, self.c2.vec(t).real)
        raise KeyError(key)

    def grid(self, key: str) -> AntiderivativeGrid:
        """Shared lazily-extended antiderivative lattice (``c1``, ``c2``, ``re_min``, ``re_max``)."""
        if key not in self._grids:
            self._grids[key] = AntiderivativeGrid(self._integrand(key), self.t0, self.interval)
        return self._grids[key]

    def antiderivatives(self, t):
        """(∫c1, ∫c2) from t0 to t."""
        return self.grid("c1")(t), self.grid("c2")(t)

    # -- matrices ------------------------------------------------------------------
    def coefficient_matrix(self, t) -> Mat2:
        a, b = self.c1(t), self.c2(t)
        a, b = np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)
        out = np.zeros(np.shape(a) + (2, 2), dtype=complex)
        if self.form is Form.I:
            out[..., 0, 0], out[..., 1, 1] = a, b
        elif self.form is Form.II:
            out[..., 0, 0], out[..., 0, 1], out[..., 1, 1] = a, b, a
        else:
            out[..., 0, 0], out[..., 0, 1], out[..., 1, 0], out[..., 1, 1] = a, b, -b, a
        return out

    def transition(self, t, s) -> Mat2:
        """X(t) X(s)^{-1}, formed from exponent differences (no overflow in X alone)."""
        l1t, l2t = self.antiderivatives(t)
        l1s, l2s = self.antiderivatives(s)
        return self._matrix(l1t - l1s, l2t - l2s)

    def _matrix(self, d1, d2, inverse: bool = False) -> Mat2:
        d1 = np.asarray(d1, dtype=complex)
        d2 = np.asarray(d2, dtype=complex)
        sgn = -1.0 if inverse else 1.0
        out = np.zeros(np.broadcast(d1, d2).shape + (2, 2), dtype=complex)
        if self.form is Form.I:
            out[..., 0, 0] = np.exp(sgn * d1)
            out[..., 1, 1] = np.exp(sgn * d2)
        elif self.form is Form.II:
            e = np.exp(sgn * d1)
            out[..., 0, 0] = e
            out[..., 0, 1] = sgn * d2 * e
            out[..., 1, 1] = e
        else:
            e = np.exp(sgn * d1.real)
            c, s = np.cos(d2.real), np.sin(d2.real)
            out[..., 0, 0] = e * c
            out[..., 0, 1] = sgn * e * s
            out[..., 1, 0] = -sgn * e * s
            out[..., 1, 1] = e * c
        return out

    def fundamental(self, t) -> tuple[Mat2, Mat2]:
        """(X(t), X(t)^{-1}) with X(t0) = identity."""
        l1, l2 = self.antiderivatives(t)
        return self._matrix(l1, l2), self._matrix(l1, l2, inverse=True)

    def apply(self, t, v, inverse: bool = False) -> np.ndarray:
        """X(t) v (or X(t)^{-1} v) with exponents combined before exponentiation.

        ``v`` has shape ``(..., 2)`` broadcastable against ``t``.
        """
        l1, l2 = self.antiderivatives(t)
        return self.apply_exponents(l1, l2, v, inverse)

    def apply_exponents(self, l1, l2, v, inverse: bool = False) -> np.ndarray:
        v = np.asarray(v, dtype=complex)
        l1 = np.asarray(l1, dtype=complex)[..., None]
        l2 = np.asarray(l2, dtype=complex)[..., None]
        sgn = -1.0 if inverse else 1.0
        if self.form is Form.I:
            expo = np.concatenate([sgn * l1, sgn * l2], axis=-1)
            return _scaled(expo, v)
        if self.form is Form.II:
            w = np.stack([v[..., 0] + sgn * l2[..., 0] * v[..., 1], v[..., 1]], axis=-1)
            return _scaled(sgn * l1, w)
        theta = l2.real[..., 0]
        c, s = np.cos(theta), np.sin(theta)
        w = np.stack([c * v[..., 0] + sgn * s * v[..., 1], -sgn * s * v[..., 0] + c * v[..., 1]], axis=-1)
        return _scaled(sgn * l1.real, w)

    # -- misc ----------------------------------------------------------------------
    def is_constant(self, tol: float = 1e-12) -> bool:
        for c in (self.c1, self.c2):
            if c.constant_value is not None:
                continue
            vals = c.vec(self.sample_points(64))
            if np.max(np.abs(vals - vals[0])) > tol * max(1.0, abs(vals[0])):
                return False
        return True

    def constants(self) -> tuple[complex, complex]:
        return self.c1(self.t0), self.c2(self.t0)

    def with_coefficients(self, c1=None, c2=None, interval=None, t0=None) -> "JordanSystem":
        return JordanSystem(self.form, self.c1 if c1 is None else c1, self.c2 if c2 is None else c2,
                            self.interval if interval is None else interval,
                            self.t0 if t0 is None else t0)


def _scaled(expo: np.ndarray, v: np.ndarray) -> np.ndarray:
    """exp(expo) * v computed as exp(expo + log v) where v != 0."""
    expo, v = np.broadcast_arrays(expo, v)
    out = np.zeros(v.shape, dtype=complex)
    nz = v != 0
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out[nz] = np.exp(expo[nz] + np.log(v[nz]))
    return out
