"""κ-profiles, divergence conditions and (best) Ulam constants.

For each form and direction the Ulam constant is ``sup_t κ(t)`` where κ is an
improper integral of an exponential weight built from the real parts of the
diagonal coefficients.  Under the max norm, form III uses ``√2 κ``.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .calculus import improper_integral, truncation_schedule
from .jordan import Form, JordanSystem, NormKind

__all__ = [
    "Direction", "KappaProfile", "ConditionReport", "BestConstant", "SupUnboundedError",
    "ZeroRealPartError", "kappa_value", "kappa_values", "kappa_profile", "default_grid",
    "best_constant", "closed_form_constant", "check_condition", "thread_count",
]

INFINITY_PROXY = 1e10


class Direction(enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"
    HYPERBOLIC = "hyperbolic"

    @classmethod
    def parse(cls, text) -> "Direction":
        if isinstance(text, Direction):
            return text
        key = str(text).strip().lower()
        aliases = {"f": cls.FORWARD, "i": cls.FORWARD, "b": cls.BACKWARD, "ii": cls.BACKWARD,
                   "h": cls.HYPERBOLIC, "iii": cls.HYPERBOLIC, "mixed": cls.HYPERBOLIC}
        return aliases.get(key) or cls(key)


class SupUnboundedError(ArithmeticError):
    def __init__(self, t: float, value: float):
        super().__init__(f"κ keeps increasing toward the boundary (κ({t:.6g}) = {value:.6g})")
        self.t = t
        self.value = value


class ZeroRealPartError(ValueError):
    pass


def thread_count() -> int:
    env = os.environ.get("ULAMKIT_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def _validate(system: JordanSystem, direction: Direction, norm: NormKind) -> None:
    if direction is Direction.HYPERBOLIC and system.form is not Form.I:
        raise ValueError("the hyperbolic direction exists for form I only")
    if norm is NormKind.EUCLID and system.form is not Form.III:
        raise ValueError(f"form {system.form.value} constants are stated for the max norm")


# ---------------------------------------------------------------------------
# Pointwise κ
# ---------------------------------------------------------------------------

def _one_sided(system: JordanSystem, key: str, t: float, forward: bool, weight_key: Optional[str],
               rel_tol: float, abs_tol: float):
    """∫_t^b or ∫_a^t of (1+|∫μ|)·e^{∓∫Re(.)} using the ``key`` lattice."""
    grid = system.grid(key)
    p_t = grid(t).real
    wgrid = system.grid(weight_key) if weight_key else None
    w_t = wgrid(t) if wgrid else 0.0
    iv = system.interval

    if forward:
        def g(s):
            out = np.exp(-(grid(s).real - p_t))
            return out * (1.0 + np.abs(wgrid(s) - w_t)) if wgrid else out
        end, closed = iv.b, iv.closed_right
    else:
        def g(s):
            out = np.exp(p_t - grid(s).real)
            return out * (1.0 + np.abs(w_t - wgrid(s))) if wgrid else out
        end, closed = iv.a, iv.closed_left
    res = improper_integral(g, t, end, rel_tol=rel_tol, abs_tol=abs_tol, open_end=not closed)
    if not forward:
        res.value = -res.value
    res.value = float(np.real(res.value))
    return res


@dataclass
class KappaValue:
    t: float
    value: float
    status: str  # converged / diverged / inconclusive


def kappa_value(system: JordanSystem, direction, t: float, norm=NormKind.MAX,
                rel_tol: float = 1e-11, abs_tol: float = 1e-10) -> KappaValue:
    """κ(t) for the system, direction and norm."""
    direction = Direction.parse(direction)
    norm = NormKind.parse(norm)
    _validate(system, direction, norm)
    t = float(t)
    parts = []
    if system.form is Form.I:
        if direction is Direction.FORWARD:
            parts.append(_one_sided(system, "re_min", t, True, None, rel_tol, abs_tol))
        elif direction is Direction.BACKWARD:
            parts.append(_one_sided(system, "re_max", t, False, None, rel_tol, abs_tol))
        else:
            parts.append(_one_sided(system, "c1", t, True, None, rel_tol, abs_tol))
            parts.append(_one_sided(system, "c2", t, False, None, rel_tol, abs_tol))
    elif system.form is Form.II:
        parts.append(_one_sided(system, "c1", t, direction is Direction.FORWARD, "c2", rel_tol, abs_tol))
    else:
        parts.append(_one_sided(system, "c1", t, direction is Direction.FORWARD, None, rel_tol, abs_tol))
    statuses = [p.status for p in parts]
    status = "diverged" if "diverged" in statuses else "inconclusive" if "inconclusive" in statuses \
        else "converged"
    value = max(p.value for p in parts)
    if system.form is Form.III and norm is NormKind.MAX:
        value *= math.sqrt(2.0)
    return KappaValue(t, value if status == "converged" else math.inf, status)


def kappa_values(system: JordanSystem, direction, times: Sequence[float], norm=NormKind.MAX,
                 rel_tol: float = 1e-11, abs_tol: float = 1e-10, stop_on_divergence: bool = True,
                 threads: Optional[int] = None) -> list[KappaValue]:
    """κ at each time; chunks run on a thread pool and merge in index order."""
    times = [float(t) for t in times]
    workers = threads or thread_count()
    out: list[KappaValue] = []
    chunk = max(1, 4 * workers)

    def one(t):
        return kappa_value(system, direction, t, norm, rel_tol, abs_tol)

    # one evaluation first so the shared lattices are built outside the pool
    if times:
        out.append(one(times[0]))
        if stop_on_divergence and out[0].status != "converged":
            return out
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    mapper = pool.map if pool else map
    try:
        for start in range(1, len(times), chunk):
            batch = list(mapper(one, times[start:start + chunk]))
            out.extend(batch)
            if stop_on_divergence and any(v.status != "converged" for v in batch):
                break
    finally:
        if pool:
            pool.shutdown()
    return out


# ---------------------------------------------------------------------------
# Conditions
# ---------------------------------------------------------------------------

@dataclass
class ConditionReport:
    condition: str
    verdict: str  # holds / fails / inconclusive
    evidence: float
    values: list = field(default_factory=list, repr=False)

    @property
    def holds(self) -> bool:
        return self.verdict == "holds"


def _limit_verdict(values: list[float]) -> str:
    """Decide whether a sequence tends to +∞ (holds), has a finite limit or tends to −∞ (fails)."""
    if not values:
        return "inconclusive"
    v = np.asarray(values, dtype=float)
    if not np.isfinite(v[-1]) or v[-1] > INFINITY_PROXY:
        return "holds" if (not np.isfinite(v[-1]) and v[-1] > 0) or v[-1] > INFINITY_PROXY else "fails"
    if v[-1] < -INFINITY_PROXY:
        return "fails"
    d = np.diff(v)
    if d.size < 4:
        return "inconclusive"
    last = d[-4:]
    scale = max(1.0, abs(v[-1]))
    if np.all(np.abs(last) <= 1e-9 * scale):
        return "fails"
    ratios = np.abs(last[1:]) / np.maximum(np.abs(last[:-1]), 1e-300)
    if np.all(last > 0) and np.all(ratios >= 0.9):
        return "holds"
    if np.all(last < 0) and np.all(ratios >= 0.9):
        return "fails"
    if np.all(ratios < 0.9):
        return "fails"  # geometric Cauchy convergence to a finite limit
    return "inconclusive"


def _condition_series(system: JordanSystem, key: str, toward_b: bool, schedule=None):
    end = system.interval.b if toward_b else system.interval.a
    points = list(schedule) if schedule is not None else truncation_schedule(system.t0, end)
    grid = system.grid(key)
    values = []
    for p in points:
        try:
            v = float(np.real(grid(p)))
        except ArithmeticError:
            v = math.nan
        values.append(v if toward_b or key != "" else v)
        if not math.isfinite(v) or abs(v) > INFINITY_PROXY:
            break
    return values


def check_condition(system: JordanSystem, direction, schedule: Optional[Sequence[float]] = None) -> ConditionReport:
    """Evaluate the divergence side-condition for ``direction`` along a truncation schedule.

    Every condition is phrased as ``V(t) → +∞`` where V is a real
    antiderivative from t0: forward uses ∫min Re (form I) or ∫Re λ / ∫α toward
    b; backward uses ∫max Re (form I) or ∫Re λ / ∫α toward a (where the
    antiderivative from t0 is minus the integral over [t, t0]).
    """
    direction = Direction.parse(direction)
    if direction is Direction.HYPERBOLIC and system.form is not Form.I:
        raise ValueError("the hyperbolic direction exists for form I only")

    def series(key, toward_b, sign):
        vals = _condition_series(system, key, toward_b, schedule)
        return [sign * v for v in vals]

    if system.form is Form.I and direction is Direction.HYPERBOLIC:
        v1 = series("c1", True, 1.0)
        # ∫_t^{t0} (−Re λ2) = ∫_{t0}^t Re λ2 for t < t0
        v2 = series("c2", False, 1.0)
        r1, r2 = _limit_verdict(v1), _limit_verdict(v2)
        verdict = "holds" if r1 == r2 == "holds" else "fails" if "fails" in (r1, r2) else "inconclusive"
        return ConditionReport("int Re(lambda1) -> inf at b; int_t^t0 -Re(lambda2) -> inf at a",
                               verdict, min(_last(v1), _last(v2)), [v1, v2])
    if system.form is Form.I:
        key = "re_min" if direction is Direction.FORWARD else "re_max"
        name = ("int min Re(lambda_j) -> inf at b" if direction is Direction.FORWARD
                else "int_t^t0 min(-Re lambda_j) -> inf at a")
    else:
        key = "c1"
        coef = "Re(lambda)" if system.form is Form.II else "alpha"
        name = (f"int {coef} -> inf at b" if direction is Direction.FORWARD
                else f"int_t^t0 {coef} -> -inf at a")
    vals = series(key, direction is Direction.FORWARD, 1.0)
    return ConditionReport(name, _limit_verdict(vals), _last(vals), vals)


def _last(values):
    return float(values[-1]) if values else math.nan


# ---------------------------------------------------------------------------
# Profiles and suprema
# ---------------------------------------------------------------------------

def default_grid(system: JordanSystem, n: int = 512, horizon: float = 40.0) -> np.ndarray:
    """Interior sample times: uniform on finite intervals, log-spaced toward infinite ends."""
    a, b = system.interval.a, system.interval.b
    if math.isfinite(a) and math.isfinite(b):
        u = (np.arange(n) + 0.5) / n
        pts = a + (b - a) * u
        if system.interval.closed_left:
            pts[0] = a
        if system.interval.closed_right:
            pts[-1] = b
        return pts
    if math.isfinite(a):
        u = np.arange(1, n + 1) / n
        return a + np.expm1(u * math.log1p(horizon))
    if math.isfinite(b):
        u = np.arange(1, n + 1)[::-1] / n
        return b - np.expm1(u * math.log1p(horizon))
    u = np.linspace(-1.0, 1.0, n)
    c = system.t0 if abs(system.t0) < horizon / 2 else 0.0
    return c + np.sign(u) * np.expm1(np.abs(u) * math.log1p(horizon))


@dataclass
class KappaProfile:
    system: JordanSystem
    direction: Direction
    norm: NormKind
    times: np.ndarray
    values: np.ndarray
    statuses: list
    exists_everywhere: bool
    witness_t: Optional[float]
    condition: Optional[ConditionReport]
    rel_tol: float = 1e-11
    abs_tol: float = 1e-10

    @property
    def divergence_condition_holds(self) -> bool:
        return self.condition is not None and self.condition.holds

    @property
    def sup(self) -> float:
        return float(np.max(self.values))

    @property
    def argmax(self) -> float:
        return float(self.times[_argmax(self.values)])

    def kappa(self, t: float) -> float:
        return kappa_value(self.system, self.direction, t, self.norm, self.rel_tol, self.abs_tol).value


def kappa_profile(system: JordanSystem, direction, norm=NormKind.MAX, grid: Optional[Sequence[float]] = None,
                  rel_tol: float = 1e-11, abs_tol: float = 1e-10, horizon: float = 40.0,
                  n: int = 512, with_condition: bool = True, threads: Optional[int] = None) -> KappaProfile:
    """Sample κ on ``grid`` (default: :func:`default_grid`); stop at the first divergent value."""
    direction = Direction.parse(direction)
    norm = NormKind.parse(norm)
    _validate(system, direction, norm)
    times = np.asarray(grid if grid is not None else default_grid(system, n, horizon), dtype=float)
    vals = kappa_values(system, direction, times, norm, rel_tol, abs_tol, threads=threads)
    statuses = [v.status for v in vals]
    exists = len(vals) == len(times) and all(s == "converged" for s in statuses)
    witness = None if exists else next(v.t for v in vals if v.status != "converged")
    cond = check_condition(system, direction) if with_condition else None
    return KappaProfile(system, direction, norm, times[:len(vals)], np.array([v.value for v in vals]),
                        statuses, exists, witness, cond, rel_tol, abs_tol)


def _argmax(values: np.ndarray, tie_rel: float = 1e-9) -> int:
    top = np.max(values)
    ties = np.flatnonzero(values >= top - tie_rel * max(1.0, abs(top)))
    return int(ties[0])


@dataclass
class BestConstant:
    K: float
    t_star: float
    attained: bool


def best_constant(profile: KappaProfile, refine_tol: float = 1e-8) -> BestConstant:
    """Supremum of the sampled κ, refined by golden-section search on the bracketing panel.

    If the maximum sits on an end sample and κ still increases toward that
    end, the supremum is extrapolated along a sequence approaching the
    endpoint and reported with ``attained=False``.
    """
    if not profile.exists_everywhere:
        raise ValueError(f"κ does not exist at t={profile.witness_t}")
    t, v = profile.times, profile.values
    i = _argmax(v)
    n = len(v)
    tie = 1e-9 * max(1.0, abs(v[i]))
    if n > 1 and i == 0 and v[0] > v[1] + tie:
        return _boundary_sup(profile, toward_b=False)
    if n > 1 and i == n - 1 and v[-1] > v[-2] + tie:
        return _boundary_sup(profile, toward_b=True)
    if 0 < i < n - 1 and v[i] > v[i - 1] + tie and v[i] > v[i + 1] + tie:
        f = lambda s: -profile.kappa(s)  # noqa: E731
        try:
            res = optimize.minimize_scalar(f, bracket=(t[i - 1], t[i], t[i + 1]), method="golden",
                                           options={"xtol": refine_tol / max(1.0, abs(t[i]))})
            if -res.fun >= v[i] and t[i - 1] <= res.x <= t[i + 1]:
                return BestConstant(float(-res.fun), float(res.x), True)
        except (ValueError, RuntimeError):
            pass
    return BestConstant(float(v[i]), float(t[i]), True)


def _boundary_sup(profile: KappaProfile, toward_b: bool) -> BestConstant:
    system = profile.system
    iv = system.interval
    end = iv.b if toward_b else iv.a
    start = float(profile.times[-1] if toward_b else profile.times[0])
    closed = iv.closed_right if toward_b else iv.closed_left
    if closed:
        return BestConstant(profile.kappa(end), end, True)
    if math.isinf(end):
        pts = [start + (1 if toward_b else -1) * (2.0 ** k) * max(1.0, abs(start)) for k in range(0, 24)]
    else:
        width = abs(end - start)
        pts = [end - (1 if toward_b else -1) * width * 10.0 ** (-j) for j in range(1, 13)]
    values = []
    for p in pts:
        kv = kappa_value(system, profile.direction, p, profile.norm, profile.rel_tol, profile.abs_tol)
        if kv.status != "converged" or kv.value > INFINITY_PROXY:
            raise SupUnboundedError(p, kv.value)
        values.append(kv.value)
        if len(values) >= 3:
            d1, d0 = values[-1] - values[-2], values[-2] - values[-3]
            scale = 1e-9 * max(1.0, abs(values[-1]))
            if abs(d1) <= scale:
                ratio = abs(d1 / d0) if d0 else 0.0
                tail = abs(d1) * ratio / (1 - ratio) if ratio < 0.9 else math.inf
                if tail <= scale:
                    K = max(max(values), float(profile.values.max()))
                    return BestConstant(K + (d1 * ratio / (1 - ratio) if d1 > 0 else 0.0), end, False)
    raise SupUnboundedError(pts[-1], values[-1])


def closed_form_constant(system: JordanSystem, norm=NormKind.MAX, tol: float = 1e-12) -> float:
    """Best Ulam constant of a constant-coefficient system by the closed formulas."""
    norm = NormKind.parse(norm)
    if not system.is_constant(tol):
        raise ValueError("closed forms need constant coefficients")
    c1, c2 = system.constants()
    if system.form is Form.I:
        if c1.real == 0 or c2.real == 0:
            raise ZeroRealPartError("a diagonal entry has zero real part")
        return max(1.0 / abs(c1.real), 1.0 / abs(c2.real))
    if system.form is Form.II:
        if c1.real == 0:
            raise ZeroRealPartError("lambda has zero real part")
        # reduces to (|Re λ|+1)/Re(λ)^2 for μ = 1
        return (abs(c1.real) + abs(c2)) / c1.real ** 2
    alpha, beta = c1.real, c2.real
    if alpha == 0:
        raise ZeroRealPartError("alpha = 0 is a center; no Ulam constant")
    if norm is NormKind.MAX and beta != 0:
        return math.sqrt(2.0) / abs(alpha)
    return 1.0 / abs(alpha)
