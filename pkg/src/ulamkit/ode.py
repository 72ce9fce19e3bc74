"""Forced linear 2-D complex systems ``x' = A(t) x + f(t)`` and trajectories."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .jordan import Coefficient, Form, JordanSystem, NormKind

__all__ = ["Forcing", "Trajectory", "IntegrationError", "StepUnderflowError", "NonFiniteError",
           "integrate", "rhs_for"]

CSV_HEADER = ["t", "re_x1", "im_x1", "re_x2", "im_x2"]


class IntegrationError(ArithmeticError):
    pass


class StepUnderflowError(IntegrationError):
    def __init__(self, t: float, message: str = ""):
        super().__init__(f"step size underflow near t={t!r} {message}".strip())
        self.t = t


class NonFiniteError(IntegrationError):
    def __init__(self, t: float):
        super().__init__(f"solution became non-finite near t={t!r}")
        self.t = t


class Forcing:
    """A pair of scalar functions (f1, f2)."""

    def __init__(self, f1=0.0, f2=0.0):
        self.f1 = Coefficient(f1)
        self.f2 = Coefficient(f2)

    @classmethod
    def zero(cls) -> "Forcing":
        return cls(0.0, 0.0)

    @classmethod
    def from_callable(cls, fn: Callable[[float], Sequence[complex]]) -> "Forcing":
        """Wrap ``t -> (f1, f2)``; evaluated once per component call."""
        return cls(lambda t: _component(fn, t, 0), lambda t: _component(fn, t, 1))

    def __call__(self, t):
        if np.ndim(t) == 0:
            return np.array([self.f1.scalar(float(t)), self.f2.scalar(float(t))])
        return np.stack([self.f1.vec(t), self.f2.vec(t)], axis=-1)

    @property
    def is_zero(self) -> bool:
        return self.f1.constant_value == 0 and self.f2.constant_value == 0


def _component(fn, t, i):
    t_arr = np.asarray(t, dtype=float)
    if t_arr.ndim == 0:
        return complex(np.asarray(fn(float(t_arr)))[i])
    return np.array([complex(np.asarray(fn(float(s)))[i]) for s in t_arr.ravel()]).reshape(t_arr.shape)


MatrixFunction = Callable[[float], np.ndarray]


def rhs_for(system: Union[JordanSystem, MatrixFunction], forcing: Optional[Forcing]) -> Callable:
    """Right-hand side ``(t, x) -> x'`` using scalar coefficient closures."""
    f = forcing if forcing is not None and not forcing.is_zero else None
    f1 = f.f1.scalar if f else None
    f2 = f.f2.scalar if f else None
    if isinstance(system, JordanSystem):
        c1, c2 = system.c1.scalar, system.c2.scalar
        form = system.form

        def rhs(t, x):
            a, b = c1(t), c2(t)
            x1, x2 = x[0], x[1]
            if form is Form.I:
                d1, d2 = a * x1, b * x2
            elif form is Form.II:
                d1, d2 = a * x1 + b * x2, a * x2
            else:
                d1, d2 = a * x1 + b * x2, -b * x1 + a * x2
            if f1 is not None:
                d1 += f1(t)
                d2 += f2(t)
            return np.array([d1, d2])
        return rhs

    def rhs_general(t, x):
        d = np.asarray(system(t), dtype=complex) @ x
        if f1 is not None:
            d = d + np.array([f1(t), f2(t)])
        return d
    return rhs_general


@dataclass
class Trajectory:
    """Time-stamped complex 2-vectors with dense evaluation.

    ``dense`` is a list of ``(t_lo, t_hi, callable)`` pieces; without it a
    cubic spline through the samples is used.
    """

    times: np.ndarray
    states: np.ndarray
    dense: list = field(default_factory=list, repr=False)
    norm: NormKind = NormKind.MAX

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=complex).reshape(-1, 2)
        if self.times.size != self.states.shape[0]:
            raise ValueError("times and states differ in length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("trajectory contains non-finite entries")
        self._spline = None

    @property
    def span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def __call__(self, t) -> np.ndarray:
        t_arr = np.asarray(t, dtype=float)
        flat = t_arr.ravel()
        lo, hi = self.span
        if flat.size and (flat.min() < lo - 1e-12 * max(1, abs(lo)) or flat.max() > hi + 1e-12 * max(1, abs(hi))):
            raise ValueError(f"t outside trajectory span [{lo}, {hi}]")
        out = np.empty((flat.size, 2), dtype=complex)
        if self.dense:
            done = np.zeros(flat.size, dtype=bool)
            for a, b, fn in self.dense:
                sel = ~done & (flat >= min(a, b) - 1e-12 * max(1, abs(a))) & (flat <= max(a, b) + 1e-12 * max(1, abs(b)))
                if np.any(sel):
                    out[sel] = np.asarray(fn(flat[sel])).T
                    done |= sel
        else:
            if self._spline is None:
                self._spline = CubicSpline(self.times, self.states, axis=0)
            out[:] = self._spline(flat)
        return out.reshape(t_arr.shape + (2,))

    # -- CSV -------------------------------------------------------------------------
    def to_csv(self, target=None, times: Optional[Sequence[float]] = None) -> str:
        """Write ``t,re_x1,im_x1,re_x2,im_x2`` rows (round-trip float repr)."""
        ts = self.times if times is None else np.asarray(times, dtype=float)
        xs = self.states if times is None else self(ts)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for t, x in zip(ts, xs):
            w.writerow([repr(float(t)), repr(float(x[0].real)), repr(float(x[0].imag)),
                        repr(float(x[1].real)), repr(float(x[1].imag))])
        text = buf.getvalue()
        if target is not None:
            with open(target, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "Trajectory":
        if hasattr(source, "read"):
            text = source.read()
        elif isinstance(source, str) and "\n" in source:
            text = source
        else:
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != CSV_HEADER:
            raise ValueError(f"trajectory CSV must start with header {','.join(CSV_HEADER)}")
        data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
        states = np.stack([data[:, 1] + 1j * data[:, 2], data[:, 3] + 1j * data[:, 4]], axis=-1)
        return cls(data[:, 0], states)


def _solve(rhs, t0: float, t1: float, x0: np.ndarray, tol: float, max_steps: int):
    if t0 == t1:
        return np.array([t0]), x0[None, :], []
    span = abs(t1 - t0)
    res = solve_ivp(rhs, (t0, t1), x0, method="RK45", rtol=tol, atol=tol, dense_output=True,
                    first_step=min(1e-3 * span, span))
    if res.status != 0:
        last = float(res.t[-1]) if res.t.size else t0
        if "step size" in res.message.lower():
            raise StepUnderflowError(last, f"({res.message})")
        raise IntegrationError(f"{res.message} at t={last}")
    if res.t.size - 1 > max_steps:
        raise IntegrationError(f"more than {max_steps} steps")
    y = res.y.T
    if not np.all(np.isfinite(y)):
        bad = int(np.argmax(~np.all(np.isfinite(y), axis=1)))
        raise NonFiniteError(float(res.t[max(bad - 1, 0)]))
    return res.t, y, [(t0, t1, res.sol)]


def integrate(system: Union[JordanSystem, MatrixFunction], forcing: Optional[Forcing], x0, t0: float,
              t_end: Union[float, tuple[float, float]], tol: float = 1e-10,
              max_steps: int = 10 ** 7, norm: NormKind = NormKind.MAX) -> Trajectory:
    """Integrate from ``(t0, x0)`` to ``t_end``, or over ``(lo, hi)`` containing ``t0``.

    Uses the Dormand-Prince 5(4) pair with its continuous extension for
    dense output; integrating backward in time is supported.
    """
    rhs = rhs_for(system, forcing)
    x0 = np.asarray(x0, dtype=complex).reshape(2)
    if isinstance(t_end, tuple):
        lo, hi = map(float, t_end)
        if not lo <= t0 <= hi:
            raise ValueError("t0 must lie in the integration span")
        tb, yb, db = _solve(rhs, t0, lo, x0, tol, max_steps)
        tf, yf, df = _solve(rhs, t0, hi, x0, tol, max_steps)
        times = np.concatenate([tb[::-1], tf[1:]])
        states = np.concatenate([yb[::-1], yf[1:]])
        return Trajectory(times, states, db + df, norm)
    ts, ys, dense = _solve(rhs, float(t0), float(t_end), x0, tol, max_steps)
    if ts[-1] < ts[0]:
        ts, ys = ts[::-1], ys[::-1]
    return Trajectory(ts, ys, dense, norm)

