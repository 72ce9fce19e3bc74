"""Defects, anchors and shadowing solutions of ε-approximate solutions.

Given φ with ``sup ‖φ' − A(t)φ‖ ≤ ε``, the shadowing solution is
``x(t) = X(t) c`` where the anchor ``c`` is the limit of ``X(t)^{-1} φ(t)`` at
the end selected by the direction (componentwise for the hyperbolic case).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .calculus import improper_integral, truncation_schedule
from .expr import ExprError, differentiate, as_expr
from .jordan import Form, JordanSystem, NormKind, norm as vnorm
from .kappa import Direction, best_constant, check_condition, kappa_profile, SupUnboundedError
from .ode import Trajectory

__all__ = [
    "ApproxSolution", "DefectReport", "ShadowReport", "ProbeResult", "NoLimitError",
    "GridTooCoarseWarning", "defect", "anchor", "shadow_solution", "deviation", "shadow",
    "uniqueness_probe", "forced_anchor", "deviation_values",
]


class NoLimitError(ArithmeticError):
    def __init__(self, component: int, values):
        super().__init__(f"X^-1 phi component {component + 1} fails the Cauchy test "
                         f"(last values {values[-3:] if len(values) >= 3 else values})")
        self.component = component
        self.values = values


class GridTooCoarseWarning(UserWarning):
    pass


class ApproxSolution:
    """An approximate solution φ: analytic expression pair, trajectory or callable."""

    def __init__(self, source, derivative: Optional[Callable] = None):
        self.trajectory: Optional[Trajectory] = None
        self.exprs = None
        self._derivative = derivative
        if isinstance(source, ApproxSolution):
            self.__dict__.update(source.__dict__)
            return
        if isinstance(source, Trajectory):
            self.trajectory = source
            self._fn = source
            self.span = source.span
        elif isinstance(source, (tuple, list)) and len(source) == 2 and not callable(source[0]):
            self.exprs = (as_expr(source[0]), as_expr(source[1]))
            e1, e2 = self.exprs
            self._fn = lambda t: np.stack([e1.vectorized(t), e2.vectorized(t)], axis=-1)
            self.span = (-math.inf, math.inf)
        elif callable(source):
            self._fn = source
            self.span = (-math.inf, math.inf)
        else:
            raise TypeError(f"cannot use {type(source).__name__} as an approximate solution")

    def __call__(self, t) -> np.ndarray:
        return np.asarray(self._fn(np.asarray(t, dtype=float)), dtype=complex)

    def derivative(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self._derivative is not None:
            return np.asarray(self._derivative(t), dtype=complex)
        if self.exprs is not None:
            if not hasattr(self, "_dexprs"):
                self._dexprs = tuple(differentiate(e) for e in self.exprs)
            d1, d2 = self._dexprs
            return np.stack([d1.vectorized(t), d2.vectorized(t)], axis=-1)
        # 4th-order differences; one-sided stencils where the span ends
        h = 1e-3 * np.maximum(1.0, np.abs(t))
        lo, hi = self.span
        h = np.minimum(h, np.maximum((hi - lo) / 8.0, 1e-300))
        hh = h[..., None]
        out = np.empty(t.shape + (2,), dtype=complex)
        left = t - 2 * h < lo
        right = (t + 2 * h > hi) & ~left
        mid = ~(left | right)
        f = self
        if np.any(mid):
            x, d = t[mid], hh[mid]
            out[mid] = (-f(x + 2 * d[:, 0]) + 8 * f(x + d[:, 0]) - 8 * f(x - d[:, 0]) + f(x - 2 * d[:, 0])) / (12 * d)
        for sel, sgn in ((left, 1.0), (right, -1.0)):
            if np.any(sel):
                x, d = t[sel], h[sel] * sgn
                vals = [f(x + k * d) for k in range(5)]
                out[sel] = (-25 * vals[0] + 48 * vals[1] - 36 * vals[2] + 16 * vals[3] - 3 * vals[4]) / (12 * d[:, None])
        return out


@dataclass
class DefectReport:
    times: np.ndarray
    forcing: np.ndarray  # (n, 2) complex values of φ' − Aφ
    epsilon: float
    norm: NormKind
    half_grid_epsilon: float

    @property
    def coarse(self) -> bool:
        return abs(self.epsilon - self.half_grid_epsilon) > 0.01 * max(self.epsilon, 1e-300)


def _eval_grid(system: JordanSystem, phi: ApproxSolution, n: int, horizon: float) -> np.ndarray:
    a, b = system.interval.a, system.interval.b
    lo = max(a, phi.span[0])
    hi = min(b, phi.span[1])
    if math.isinf(lo):
        lo = system.t0 - horizon
    if math.isinf(hi):
        hi = system.t0 + horizon
    inner_lo = lo if lo > a or system.interval.closed_left else lo + 1e-6 * (hi - lo)
    inner_hi = hi if hi < b or system.interval.closed_right else hi - 1e-6 * (hi - lo)
    return np.linspace(inner_lo, inner_hi, n)


def defect(phi, system: JordanSystem, norm=NormKind.MAX, times: Optional[Sequence[float]] = None,
           n: int = 2001, horizon: float = 40.0) -> DefectReport:
    """f = φ' − A(t)φ on a grid and ε = sup ‖f‖; warns when the half grid disagrees by >1%."""
    phi = ApproxSolution(phi)
    norm = NormKind.parse(norm)
    ts = np.asarray(times, dtype=float) if times is not None else _eval_grid(system, phi, n, horizon)
    f = phi.derivative(ts) - np.einsum("...ij,...j->...i", system.coefficient_matrix(ts), phi(ts))
    sizes = vnorm(f, norm)
    eps = float(np.max(sizes))
    half = float(np.max(sizes[::2]))
    report = DefectReport(ts, f, eps, norm, half)
    if report.coarse:
        warnings.warn(f"defect sup differs by more than 1% between full and half grid "
                      f"({eps:.6g} vs {half:.6g})", GridTooCoarseWarning, stacklevel=2)
    return report


def _schedule(system: JordanSystem, phi: ApproxSolution, toward_b: bool) -> list[float]:
    end = system.interval.b if toward_b else system.interval.a
    limit = phi.span[1] if toward_b else phi.span[0]
    if (toward_b and limit < end) or (not toward_b and limit > end):
        # finite data: approach the end of the available span
        width = abs(limit - system.t0)
        pts = [limit - (1 if toward_b else -1) * width * 2.0 ** (-j) for j in range(1, 40)]
        return pts + [limit]
    return truncation_schedule(system.t0, end)


def _limit(values: list, anchor_tol: float, component: int) -> complex:
    """Cauchy limit: within the first run of increments below ``anchor_tol``,
    the value after the smallest increment (deep points can carry roundoff)."""
    start = end = None
    for k in range(2, len(values)):
        small = abs(values[k] - values[k - 1]) <= anchor_tol
        if start is None:
            if small and abs(values[k - 1] - values[k - 2]) <= anchor_tol:
                start, end = k - 1, k
        elif small:
            end = k
        else:
            break
    if start is None:
        raise NoLimitError(component, values)
    best = min(range(start, end + 1), key=lambda k: abs(values[k] - values[k - 1]))
    return complex(values[best])


def _component_series(system: JordanSystem, phi: ApproxSolution, toward_b: bool) -> list[np.ndarray]:
    out = []
    for p in _schedule(system, phi, toward_b):
        try:
            # far points may overflow; the series simply stops there
            with np.errstate(over="ignore", invalid="ignore"):
                v = system.apply(p, phi(p), inverse=True)
        except (ArithmeticError, ValueError, ExprError):
            break
        if not np.all(np.isfinite(v)):
            break
        out.append(np.asarray(v).reshape(2))
    return out


def anchor(phi, system: JordanSystem, direction, anchor_tol: float = 1e-7) -> np.ndarray:
    """lim X^{-1}(t)φ(t) toward b (forward), a (backward), or mixed (hyperbolic)."""
    phi = ApproxSolution(phi)
    direction = Direction.parse(direction)
    if direction is Direction.HYPERBOLIC:
        if system.form is not Form.I:
            raise ValueError("the hyperbolic direction exists for form I only")
        right = _component_series(system, phi, True)
        left = _component_series(system, phi, False)
        c1 = _limit([v[0] for v in right], anchor_tol, 0)
        c2 = _limit([v[1] for v in left], anchor_tol, 1)
        return np.array([c1, c2])
    series = _component_series(system, phi, direction is Direction.FORWARD)
    return np.array([_limit([v[i] for v in series], anchor_tol, i) for i in range(2)])


def shadow_solution(anchor_vec, system: JordanSystem, times: Sequence[float]) -> Trajectory:
    """x(t) = X(t)·anchor sampled at ``times``."""
    ts = np.asarray(times, dtype=float)
    xs = system.apply(ts, np.broadcast_to(np.asarray(anchor_vec, dtype=complex), ts.shape + (2,)))
    return Trajectory(ts, xs)


def deviation_values(phi, system: JordanSystem, anchor_vec, times, norm=NormKind.MAX) -> np.ndarray:
    """‖φ(t) − X(t)c‖ computed as ‖X(t)(X^{-1}(t)φ(t) − c)‖ with log-scaled products."""
    phi = ApproxSolution(phi)
    ts = np.asarray(times, dtype=float)
    l1, l2 = system.antiderivatives(ts)
    w = system.apply_exponents(l1, l2, phi(ts), inverse=True) - np.asarray(anchor_vec, dtype=complex)
    return vnorm(system.apply_exponents(l1, l2, w), NormKind.parse(norm))


def deviation(phi, x, norm=NormKind.MAX, times: Optional[Sequence[float]] = None) -> tuple[float, float]:
    """(sup ‖φ − x‖, argsup) over ``times`` (default: the samples of ``x``)."""
    phi = ApproxSolution(phi)
    ts = np.asarray(x.times if times is None else times, dtype=float)
    xs = x.states if times is None else x(ts)
    d = vnorm(phi(ts) - xs, NormKind.parse(norm))
    i = int(np.argmax(d))
    return float(d[i]), float(ts[i])


@dataclass
class ShadowReport:
    epsilon: float
    K: float
    direction: Direction
    norm: NormKind
    anchor: np.ndarray
    sup_deviation: float
    argsup_t: float
    conditions: dict
    times: np.ndarray = field(repr=False, default=None)
    deviations: np.ndarray = field(repr=False, default=None)
    shadow: Optional[Trajectory] = field(repr=False, default=None)

    @property
    def bound(self) -> float:
        return self.K * self.epsilon

    @property
    def ratio(self) -> float:
        return self.sup_deviation / self.bound if self.bound > 0 else (0.0 if self.sup_deviation == 0 else math.inf)

    @property
    def hypotheses_hold(self) -> bool:
        return all(v is True or v == "holds" for v in self.conditions.values())

    def within_bound(self, margin: float = 0.01) -> bool:
        return self.sup_deviation <= self.bound * (1 + margin)

    def to_dict(self) -> dict:
        c = self.anchor
        return {
            "epsilon": self.epsilon, "K": self.K, "direction": self.direction.value, "norm": self.norm.value,
            "anchor": [float(c[0].real), float(c[0].imag), float(c[1].real), float(c[1].imag)],
            "sup_deviation": self.sup_deviation, "ratio": self.ratio, "argsup_t": self.argsup_t,
            "conditions": self.conditions,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def deviation_csv(self) -> str:
        lines = ["t,deviation"]
        lines += [f"{float(t)!r},{float(d)!r}" for t, d in zip(self.times, self.deviations)]
        return "\n".join(lines) + "\n"


def shadow(phi, system: JordanSystem, direction, norm=NormKind.MAX, K: Optional[float] = None,
           epsilon: Optional[float] = None, times: Optional[Sequence[float]] = None, n: int = 2001,
           horizon: float = 40.0, anchor_tol: float = 1e-7) -> ShadowReport:
    """Full pipeline: defect → constant and conditions → anchor → shadow → deviation."""
    phi = ApproxSolution(phi)
    direction = Direction.parse(direction)
    norm = NormKind.parse(norm)
    ts = np.asarray(times, dtype=float) if times is not None else _eval_grid(system, phi, n, horizon)
    eps = defect(phi, system, norm, ts).epsilon if epsilon is None else float(epsilon)
    conditions = {"kappa_exists": True, "sup_finite": True, "divergence": "not-checked"}
    if K is None:
        profile = kappa_profile(system, direction, norm)
        conditions["kappa_exists"] = profile.exists_everywhere
        conditions["divergence"] = profile.condition.verdict
        if profile.exists_everywhere:
            try:
                K = best_constant(profile).K
            except SupUnboundedError:
                conditions["sup_finite"] = False
                K = math.inf
        else:
            conditions["sup_finite"] = False
            K = math.inf
    else:
        conditions["divergence"] = check_condition(system, direction).verdict
    c = anchor(phi, system, direction, anchor_tol)
    d = deviation_values(phi, system, c, ts, norm)
    i = int(np.argmax(d))
    return ShadowReport(eps, float(K), direction, norm, c, float(d[i]), float(ts[i]), conditions,
                        ts, d, shadow_solution(c, system, ts))


@dataclass
class ProbeResult:
    times: np.ndarray
    growth: np.ndarray
    verdict: str  # "diverges" or "no-divergence"


def uniqueness_probe(system: JordanSystem, delta, direction, bound: float = 1.0,
                     schedule: Optional[Sequence[float]] = None) -> ProbeResult:
    """‖X(t)δ‖ toward the relevant end; ``diverges`` if it passes 10·bound and still grows."""
    direction = Direction.parse(direction)
    delta = np.asarray(delta, dtype=complex)
    if schedule is None:
        ends = {Direction.FORWARD: [system.interval.b], Direction.BACKWARD: [system.interval.a],
                Direction.HYPERBOLIC: [system.interval.b, system.interval.a]}[direction]
        runs = [truncation_schedule(system.t0, end, 30 if math.isinf(end) else 12) for end in ends]
    else:
        runs = [list(schedule)]
    pts, growth, diverges = [], [], False
    for run in runs:
        g = np.array([float(vnorm(system.apply(p, delta), NormKind.MAX)) for p in run])
        finite = g[np.isfinite(g)]
        if g.size >= 2 and (finite.size < g.size or (finite[-1] > 10 * bound and finite[-1] > finite[-2])):
            diverges = True
        pts.extend(run)
        growth.extend(g)
    pts, growth = np.array(pts), np.array(growth)
    return ProbeResult(pts, growth, "diverges" if diverges else "no-divergence")


def forced_anchor(system: JordanSystem, forcing, x_start, t_start: float, direction,
                  rel_tol: float = 1e-12, abs_tol: float = 1e-13) -> np.ndarray:
    """Anchor of the solution of φ' = Aφ + f with φ(t_start) = x_start.

    Since ``X^{-1}φ = X^{-1}(t_start)x_start + ∫_{t_start}^t X^{-1} f``, the
    limit is that expression with the integral taken to the relevant end
    (per component for the hyperbolic direction).
    """
    direction = Direction.parse(direction)
    base = system.apply(float(t_start), np.asarray(x_start, dtype=complex), inverse=True)
    iv = system.interval
    if direction is Direction.HYPERBOLIC:
        ends = [(iv.b, iv.closed_right), (iv.a, iv.closed_left)]
    elif direction is Direction.FORWARD:
        ends = [(iv.b, iv.closed_right)] * 2
    else:
        ends = [(iv.a, iv.closed_left)] * 2
    out = np.array(base, dtype=complex)
    for k, (end, closed) in enumerate(ends):
        def g(s, k=k):
            return system.apply(s, forcing(s), inverse=True)[..., k]
        res = improper_integral(g, float(t_start), end, rel_tol=rel_tol, abs_tol=abs_tol, open_end=not closed)
        if res.status != "converged":
            raise NoLimitError(k, res.partials)
        out[k] += res.value
    return out
