"""Quadrature primitives: adaptive Gauss-Kronrod, antiderivative lattices and
improper integrals with divergence detection.

All integrands are *vectorised*: they take a float ndarray and return an
ndarray (real or complex) of the same shape.  Scalar callables can be lifted
with :func:`vectorize`.
"""

from __future__ import annotations

import math
import re
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "Interval", "QuadratureError", "SingularityError", "ToleranceNotMetError",
    "gk15", "quad", "vectorize", "AntiderivativeGrid", "antiderivative_grid",
    "ImproperResult", "improper_integral", "truncation_schedule",
]

Integrand = Callable[[np.ndarray], np.ndarray]

MAX_PANELS = 2 ** 20
# failing panels at one bisection level beyond which the target is treated as below the noise floor
MAX_ACTIVE_PANELS = 2 ** 14
GK_CHUNK = 8192


class QuadratureError(ArithmeticError):
    pass


class SingularityError(QuadratureError):
    def __init__(self, t: float):
        super().__init__(f"integrand is not finite at t={t!r}")
        self.t = t


class ToleranceNotMetError(QuadratureError):
    def __init__(self, value, error: float, panels: int):
        super().__init__(f"tolerance not met after {panels} panels (error estimate {error:.3e})")
        self.value = value
        self.error = error


# ---------------------------------------------------------------------------
# Interval
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    """Real interval with extended endpoints and closedness flags."""

    a: float
    b: float
    closed_left: bool = False
    closed_right: bool = False

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"empty interval ({self.a}, {self.b})")
        if math.isinf(self.a) and self.closed_left:
            raise ValueError("an infinite endpoint cannot be closed")
        if math.isinf(self.b) and self.closed_right:
            raise ValueError("an infinite endpoint cannot be closed")

    @classmethod
    def parse(cls, text: str) -> "Interval":
        """Parse ``"(a,b]"``-style text; endpoints may be expressions such as ``pi/2``."""
        m = re.fullmatch(r"\s*([\(\[])(.*),(.*)([\)\]])\s*", text)
        if m is None:
            raise ValueError(f"malformed interval {text!r}")
        left, lo, hi, right = m.groups()
        return cls(_endpoint(lo), _endpoint(hi), left == "[", right == "]")

    def __contains__(self, t: float) -> bool:
        lo_ok = t > self.a or (self.closed_left and t == self.a)
        hi_ok = t < self.b or (self.closed_right and t == self.b)
        return lo_ok and hi_ok

    def interior(self, t: float) -> bool:
        return self.a < t < self.b

    @property
    def finite(self) -> bool:
        return math.isfinite(self.a) and math.isfinite(self.b)

    def __str__(self) -> str:
        def fmt(v):
            return "inf" if v == math.inf else "-inf" if v == -math.inf else repr(v)
        return f"{'[' if self.closed_left else '('}{fmt(self.a)},{fmt(self.b)}{']' if self.closed_right else ')'}"


def _endpoint(text: str) -> float:
    s = text.strip().lower()
    if s in ("inf", "+inf", "infinity", "+infinity", "oo"):
        return math.inf
    if s in ("-inf", "-infinity", "-oo"):
        return -math.inf
    from .expr import parse  # local import: expr is heavier and optional here

    value = parse(text).scalar(0.0)
    if value.imag != 0:
        raise ValueError(f"endpoint {text!r} is not real")
    return float(value.real)


# ---------------------------------------------------------------------------
# Gauss-Kronrod 7/15
# ---------------------------------------------------------------------------

_XK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
# full 15-point abscissae on [-1, 1] and matching weights
_NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
_KW = np.concatenate([_WK[:-1], _WK[::-1]])
_GW = np.zeros(15)
_GW[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])


_ROUNDOFF = 200 * np.finfo(float).eps


def vectorize(fn: Callable) -> Integrand:
    """Lift a scalar callable to an array callable (no-op for ufunc-like callables)."""
    def wrapped(t):
        t = np.asarray(t, dtype=float)
        try:
            out = np.asarray(fn(t))
            if out.shape == t.shape:
                return out
        except (TypeError, ValueError):
            pass
        return np.array([fn(float(x)) for x in t.ravel()]).reshape(t.shape)
    return wrapped


def gk15(g: Integrand, lo: np.ndarray, hi: np.ndarray):
    """Kronrod estimates and |K - G| error for every panel ``[lo_i, hi_i]``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.ndim == 1 and lo.size > GK_CHUNK:
        # bounded memory when g itself integrates (lattice lookups)
        parts = [gk15(g, lo[i:i + GK_CHUNK], hi[i:i + GK_CHUNK]) for i in range(0, lo.size, GK_CHUNK)]
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[..., None] + half[..., None] * _NODES
    vals = np.asarray(g(pts))
    if not math.isfinite(abs(vals.sum())):
        bad = np.argwhere(~np.isfinite(vals))[0]
        raise SingularityError(float(pts[tuple(bad)]))
    k = (vals @ _KW) * half
    gauss = (vals @ _GW) * half
    err = np.abs(k - gauss)
    # differences at roundoff level carry no information
    scale = (np.abs(vals) @ _KW) * np.abs(half)
    return k, np.where(err <= _ROUNDOFF * scale, 0.0, err)


def quad(g: Integrand, a: float, b: float, rel_tol: float = 1e-9, abs_tol: float = 1e-12,
         max_panels: int = MAX_PANELS, return_error: bool = False):
    """Adaptive GK15 quadrature of ``g`` over the finite range ``[a, b]`` (signed).

    Panels are bisected in index order until each one meets its share of the
    tolerance, so the result is deterministic.
    """
    if a == b:
        return (0.0, 0.0) if return_error else 0.0
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("quad needs finite limits; use improper_integral")
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    length = b - a
    lo = np.array([a])
    hi = np.array([b])
    total = 0.0
    total_err = 0.0
    panels = 1
    stalled = 0
    prev_bad_err = math.inf
    while True:
        k, err = gk15(g, lo, hi)
        estimate = total + k.sum()
        bound = max(abs_tol, rel_tol * abs(estimate))
        share = bound * (hi - lo) / length
        ok = err <= share
        total = total + k[ok].sum()
        total_err += err[ok].sum()
        if ok.all():
            break
        lo_bad, hi_bad = lo[~ok], hi[~ok]
        panels += lo_bad.size
        # noise floor: many failing panels whose summed error no longer shrinks
        bad_err = float(err[~ok].sum())
        stalled = stalled + 1 if lo_bad.size >= 64 and bad_err > prev_bad_err / 1.5 else 0
        prev_bad_err = bad_err
        if (panels > max_panels or stalled >= 3 or lo_bad.size > MAX_ACTIVE_PANELS
                or np.any((hi_bad - lo_bad) <= 4 * np.spacing(np.abs(lo_bad) + np.abs(hi_bad)))):
            remaining = k[~ok].sum()
            raise ToleranceNotMetError(sign * (total + remaining), float(total_err + bad_err), panels)
        mid = 0.5 * (lo_bad + hi_bad)
        lo = np.concatenate([lo_bad, mid]).reshape(2, -1).T.ravel()
        hi = np.concatenate([mid, hi_bad]).reshape(2, -1).T.ravel()
    value = sign * total
    if isinstance(value, np.generic):
        value = value.item()
    return (value, float(total_err)) if return_error else value


# ---------------------------------------------------------------------------
# Antiderivative lattice
# ---------------------------------------------------------------------------

class AntiderivativeGrid:
    """Λ(t) = ∫_{t0}^t g(s) ds on an interval, extended lazily on demand.

    Nodes start at ``t0``.  Toward an open finite end they advance
    geometrically (step ``min(h, dist/4)``), toward a closed end uniformly up
    to the endpoint, and toward an infinite end with step ``h`` out to
    ``|t - t0| = span`` and then growing proportionally to the distance.
    Between nodes Λ is completed by a local GK15 pass from the nearest node.
    """

    def __init__(self, g: Integrand, t0: float, interval: Optional[Interval] = None,
                 h: float = 1.0 / 16, span: float = 64.0, rel_tol: float = 1e-13,
                 abs_tol: float = 1e-14):
        self.g = g
        self.t0 = float(t0)
        self.interval = interval or Interval(-math.inf, math.inf)
        if not self.interval.a <= self.t0 <= self.interval.b:
            raise ValueError(f"base point {t0} outside {self.interval}")
        self.h = h
        self.span = span
        self.rel_tol = rel_tol
        self.abs_tol = abs_tol
        self._lock = threading.Lock()
        # each side: node times and cumulative values, moving away from t0
        self._right_t = [self.t0]
        self._right_v = [0j]
        self._left_t = [self.t0]
        self._left_v = [0j]
        self._cache: Optional[tuple[np.ndarray, np.ndarray]] = None

    # -- lattice construction ------------------------------------------------
    def _next(self, node: float, direction: int) -> Optional[float]:
        end = self.interval.b if direction > 0 else self.interval.a
        closed = self.interval.closed_right if direction > 0 else self.interval.closed_left
        if node == end:
            return None
        dist = abs(end - node)
        if math.isinf(end):
            far = abs(node - self.t0)
            step = self.h if far < self.span else max(self.h, (far - self.span) / 8 + self.h)
        elif closed:
            step = min(self.h, dist)
            if dist - step < 1e-3 * self.h:
                step = dist
        else:
            step = min(self.h, 0.25 * dist)
            if step <= 4 * np.spacing(abs(node)) or step <= 0:
                return None
        return node + direction * step

    def _extend(self, target: float) -> None:
        direction = 1 if target > self.t0 else -1
        ts = self._right_t if direction > 0 else self._left_t
        vs = self._right_v if direction > 0 else self._left_v
        while (ts[-1] < target) if direction > 0 else (ts[-1] > target):
            new = []
            node = ts[-1]
            for _ in range(64):
                nxt = self._next(node, direction)
                if nxt is None:
                    break
                new.append(nxt)
                node = nxt
                if (node >= target) if direction > 0 else (node <= target):
                    break
            if not new:
                break
            starts = np.array([ts[-1]] + new[:-1])
            ends = np.array(new)
            k, err = gk15(self.g, starts, ends)
            for i in range(len(new)):
                bound = max(self.abs_tol, self.rel_tol * abs(k[i]))
                if err[i] <= bound:
                    vs.append(vs[-1] + k[i])
                    ts.append(new[i])
                    continue
                for node, piece in self._refine(starts[i], ends[i]):
                    vs.append(vs[-1] + piece)
                    ts.append(node)
        self._cache = None

    def _refine(self, lo: float, hi: float) -> list:
        """Sub-nodes (in lattice order) bisecting a panel that GK15 cannot resolve.

        Keeping the sub-nodes in the lattice means later lookups near a kink
        or steep layer start from a close node instead of redoing the work.
        """
        out = []
        stack = [(lo, hi, 0)]
        while stack:
            a, b, depth = stack.pop()
            k, err = gk15(self.g, np.array([a]), np.array([b]))
            bound = max(self.abs_tol, self.rel_tol * abs(k[0]))
            if err[0] <= bound or depth >= 48 or abs(b - a) <= 8 * np.spacing(abs(a) + abs(b)):
                out.append((b, k[0]))
                continue
            m = 0.5 * (a + b)
            # second half pushed first so the first half comes out first
            stack.append((m, b, depth + 1))
            stack.append((a, m, depth + 1))
        return out

    def _piece(self, lo: float, hi: float):
        # best effort: near a singular end the integrand itself carries roundoff noise
        try:
            return quad(self.g, lo, hi, self.rel_tol, self.abs_tol, max_panels=4096)
        except ToleranceNotMetError as exc:
            return exc.value

    def _nodes(self) -> tuple[np.ndarray, np.ndarray]:
        if self._cache is None:
            t = np.array(self._left_t[:0:-1] + self._right_t)
            v = np.array(self._left_v[:0:-1] + self._right_v, dtype=complex)
            self._cache = (t, v)
        return self._cache

    def ensure(self, lo: float, hi: float) -> None:
        with self._lock:
            if hi > self._right_t[-1]:
                self._extend(hi)
            if lo < self._left_t[-1]:
                self._extend(lo)

    # -- evaluation ----------------------------------------------------------
    @property
    def times(self) -> np.ndarray:
        return self._nodes()[0]

    @property
    def values(self) -> np.ndarray:
        return self._nodes()[1]

    def __call__(self, t) -> np.ndarray:
        t_arr = np.asarray(t, dtype=float)
        if t_arr.size == 0:
            return np.zeros(t_arr.shape, dtype=complex)
        lo, hi = float(t_arr.min()), float(t_arr.max())
        if lo < self.interval.a or hi > self.interval.b:
            raise ValueError(f"t outside {self.interval}")
        self.ensure(lo, hi)
        with self._lock:
            nodes, cum = self._nodes()
        flat = t_arr.ravel()
        idx = np.clip(np.searchsorted(nodes, flat), 1, nodes.size - 1)
        left_closer = (flat - nodes[idx - 1]) <= (nodes[idx] - flat)
        near = np.where(left_closer, idx - 1, idx)
        base = nodes[near]
        out = cum[near].copy()
        move = flat != base
        if np.any(move):
            k, err = gk15(self.g, base[move], flat[move])
            bad = err > np.maximum(self.abs_tol, self.rel_tol * np.abs(k))
            if np.any(bad):
                k = k.astype(complex)
                for j in np.flatnonzero(bad):
                    b0 = base[move][j]
                    t1 = flat[move][j]
                    k[j] = self._piece(b0, t1)
            out[move] += k
        out = out.reshape(t_arr.shape)
        return out if t_arr.ndim else complex(out)

    def integral(self, s, t):
        """∫_s^t g as Λ(t) − Λ(s)."""
        return self(t) - self(s)


def antiderivative_grid(g: Integrand, t0: float, samples: Sequence[float], tol: float = 1e-12,
                        interval: Optional[Interval] = None) -> AntiderivativeGrid:
    """Build a grid anchored at ``t0`` that covers every time in ``samples``."""
    samples = np.asarray(samples, dtype=float)
    if interval is None:
        lo = min(float(samples.min()), t0)
        hi = max(float(samples.max()), t0)
        if lo == hi:
            lo, hi = lo - 1.0, hi + 1.0
        interval = Interval(lo, hi, True, True)
    grid = AntiderivativeGrid(g, t0, interval, rel_tol=tol, abs_tol=tol * 1e-2)
    grid.ensure(float(samples.min()), float(samples.max()))
    return grid


# ---------------------------------------------------------------------------
# Improper integrals
# ---------------------------------------------------------------------------

@dataclass
class ImproperResult:
    value: complex | float
    converged: bool
    status: str  # "converged", "diverged" or "inconclusive"
    truncation: float
    tail_estimate: float
    partials: list = field(default_factory=list, repr=False)

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"


def truncation_schedule(start: float, end: float, count: Optional[int] = None) -> list[float]:
    """Truncation points from ``start`` toward ``end`` (either direction).

    Infinite ends use offsets ``2^k`` for k ≤ 40 + log2 max(1, |start|), so the
    first panels stay short however far out ``start`` is; finite open ends use
    offsets ``10^-j |end - start|`` for j ≤ 12.
    """
    direction = 1.0 if end > start else -1.0
    if math.isinf(end):
        n = 40 + max(0, math.ceil(math.log2(max(1.0, abs(start))))) if count is None else count
        return [start + direction * (2.0 ** k) for k in range(n + 1)]
    n = 12 if count is None else count
    width = abs(end - start)
    points = [end - direction * width * 10.0 ** (-j) for j in range(1, n + 1)]
    return [p for p in points if (p - start) * direction > 0]


def improper_integral(g: Integrand, start: float, end: float, rel_tol: float = 1e-9,
                      abs_tol: float = 1e-10, schedule: Optional[Sequence[float]] = None,
                      open_end: bool = True, quad_rel_tol: Optional[float] = None) -> ImproperResult:
    """Signed ∫_start^end g with ``end`` possibly infinite or an open singular end.

    Integrates up to successive truncation points.  Converged when the last
    increment and a geometric tail extrapolation are both within
    ``rel_tol*|value| + abs_tol``.  Diverged when partial values exceed
    ``1/abs_tol``, overflow, or keep non-shrinking increments to the end of
    the schedule.  Otherwise inconclusive.
    """
    q_rel = rel_tol * 1e-2 if quad_rel_tol is None else quad_rel_tol
    q_abs = abs_tol * 1e-2
    if start == end:
        return ImproperResult(0.0, True, "converged", end, 0.0)
    if not open_end and math.isfinite(end):
        value = quad(g, start, end, q_rel, q_abs)
        return ImproperResult(value, True, "converged", end, 0.0, [value])
    points = list(schedule) if schedule is not None else truncation_schedule(start, end)
    if not points:
        return ImproperResult(0.0, False, "inconclusive", start, math.inf)
    limit = 1.0 / abs_tol
    total = 0.0
    prev = start
    partials: list = []
    increments: list[float] = []
    for T in points:
        try:
            piece = quad(g, prev, T, q_rel, q_abs)
        except SingularityError:
            # overflow of an exponential weight: the tail is unbounded
            return ImproperResult(total, False, "diverged", prev, math.inf, partials)
        except ToleranceNotMetError as exc:
            piece = exc.value
        total = total + piece
        partials.append(total)
        increments.append(abs(piece))
        prev = T
        if not np.isfinite(total) or abs(total) > limit:
            return ImproperResult(total, False, "diverged", T, math.inf, partials)
        if len(increments) < 3:
            continue
        bound = rel_tol * abs(total) + abs_tol
        d1, d0 = increments[-1], increments[-2]
        if d1 <= bound:
            ratio = d1 / d0 if d0 > 0 else 0.0
            if ratio < 0.9:
                tail = d1 * ratio / (1.0 - ratio)
                if tail <= bound:
                    return ImproperResult(total, True, "converged", T, tail, partials)
    tail_ratios = [increments[i] / increments[i - 1] if increments[i - 1] > 0 else 0.0
                   for i in range(len(increments) - 4, len(increments))]
    if all(r >= 0.95 for r in tail_ratios) and increments[-1] > 0:
        return ImproperResult(total, False, "diverged", prev, math.inf, partials)
    tail = increments[-1]
    return ImproperResult(total, False, "inconclusive", prev, tail, partials)
