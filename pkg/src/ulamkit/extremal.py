"""Worst-case forcings and sharpness experiments.

The forcings below make the variation-of-parameters integral for the
anchored approximate solution collapse onto the κ integrand, so the
deviation ``‖φ(t) − x(t)‖`` equals ``ε κ(t)`` pointwise.  The approximate
solution is built with anchor 0 by quadrature:

* forward:  ``φ(t) = −∫_t^b X(t)X(s)^{-1} f(s) ds``
* backward: ``φ(t) =  ∫_a^t X(t)X(s)^{-1} f(s) ds``
* hyperbolic (form I): first component forward, second backward.

The shadowing solution is then ``x ≡ 0`` and the deviation is ``‖φ‖``.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .calculus import improper_integral
from .jordan import Form, JordanSystem, NormKind, norm as vnorm
from .kappa import Direction, best_constant, kappa_profile, kappa_values
from .ode import Forcing, integrate

__all__ = [
    "ExtremalForcing", "SharpnessResult", "MaxNormResult", "HypothesisError", "LowerBoundNotEstablished",
    "extremal_forcing", "anchored_solution", "sharpness_experiment", "maxnorm_form3_experiment",
    "maxnorm_form3_best_constant", "default_horizon",
]

DECAY_LEVEL = -math.log(1e-12)


class HypothesisError(ValueError):
    """κ missing, supremum infinite or divergence condition not satisfied."""


class LowerBoundNotEstablished(ValueError):
    def __init__(self, reason: str):
        super().__init__(f"lower bound not established: {reason}")


@dataclass
class ExtremalForcing:
    system: JordanSystem
    epsilon: float
    direction: Direction
    x_star: Optional[np.ndarray] = None
    normalization: NormKind = NormKind.EUCLID
    sign: float = -1.0  # second-component sign for form II

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        sys, eps = self.system, self.epsilon
        if sys.form is Form.I:
            l1, l2 = sys.antiderivatives(t)
            return eps * np.stack([np.exp(1j * np.imag(l1)), np.exp(1j * np.imag(l2))], axis=-1)
        if sys.form is Form.II:
            phase = np.exp(1j * np.imag(sys.grid("c1")(t)))
            return eps * np.stack([phase, self.sign * phase], axis=-1)
        xs = self.x_star / float(vnorm(self.x_star, self.normalization))
        theta = np.real(sys.grid("c2")(t))
        zero = np.zeros_like(theta)
        # e^{-∫α} X(t) x*: the rotation part of the fundamental matrix
        return eps * sys.apply_exponents(zero, theta, np.broadcast_to(xs, t.shape + (2,)))

    def as_forcing(self) -> Forcing:
        return Forcing.from_callable(lambda s: self(s))


def _mu_sign(system: JordanSystem, n: int = 2001) -> float:
    ts = system.sample_points(n)
    mu = system.c2.vec(ts)
    if np.max(np.abs(np.imag(mu))) > 1e-12:
        raise LowerBoundNotEstablished("μ is not real on the interval")
    re = np.real(mu)
    if np.all(re >= 0):
        return 1.0
    if np.all(re <= 0):
        return -1.0
    raise LowerBoundNotEstablished("μ changes sign on the interval")


def extremal_forcing(system: JordanSystem, eps: float, direction="forward", x_star=None,
                     normalization=NormKind.EUCLID) -> ExtremalForcing:
    """f₁, f₂ or f₃ for the system's form.

    For form II the second component is ``−sgn(μ)`` forward and ``+sgn(μ)``
    backward, which keeps ``1 + |∫_t^s μ|`` in the deviation integrand.
    """
    direction = Direction.parse(direction)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    if system.form is Form.III:
        if x_star is None:
            x_star = np.array([1.0, 0.0])
        x_star = np.asarray(x_star, dtype=float).reshape(2)
        if not np.any(x_star):
            raise ValueError("x_star must be nonzero")
        return ExtremalForcing(system, float(eps), direction, x_star, NormKind.parse(normalization))
    sign = -1.0
    if system.form is Form.II:
        s = _mu_sign(system)
        sign = -s if direction is Direction.FORWARD else s
    return ExtremalForcing(system, float(eps), direction, sign=sign)


def _directional(system: JordanSystem, forcing, t: float, forward: bool, rel_tol: float, abs_tol: float,
                 components=(0, 1)) -> np.ndarray:
    """``−∫_t^b`` (forward) or ``∫_a^t`` (backward) of X(t)X(s)^{-1} f(s)."""
    l1t, l2t = system.antiderivatives(t)
    iv = system.interval
    end, closed = (iv.b, iv.closed_right) if forward else (iv.a, iv.closed_left)
    out = np.zeros(2, dtype=complex)
    for k in components:
        def g(s, k=k):
            l1s, l2s = system.antiderivatives(s)
            return system.apply_exponents(l1t - l1s, l2t - l2s, forcing(s))[..., k]
        res = improper_integral(g, t, end, rel_tol=rel_tol, abs_tol=abs_tol, open_end=not closed)
        if res.status != "converged":
            raise HypothesisError(f"variation-of-parameters integral {res.status} at t={t!r}")
        out[k] = -res.value  # both cases: −∫_t^end
    return out


def anchored_solution(system: JordanSystem, forcing, direction, t: float, rel_tol: float = 1e-10,
                      abs_tol: float = 1e-13) -> np.ndarray:
    """φ(t) for the anchor-0 solution of φ' = A(t)φ + f(t)."""
    direction = Direction.parse(direction)
    if direction is Direction.HYPERBOLIC:
        a = _directional(system, forcing, t, True, rel_tol, abs_tol, (0,))
        b = _directional(system, forcing, t, False, rel_tol, abs_tol, (1,))
        return np.array([a[0], b[1]])
    return _directional(system, forcing, t, direction is Direction.FORWARD, rel_tol, abs_tol)


def _reach(system: JordanSystem, key: str, toward_b: bool, level: float) -> float:
    """Point toward an end where |∫_{t0} Re| first reaches ``level`` (capped)."""
    grid = system.grid(key)
    t0 = system.t0
    iv = system.interval
    end = iv.b if toward_b else iv.a
    sgn = 1.0 if toward_b else -1.0
    if math.isinf(end):
        pts = [t0 + sgn * 2.0 ** k * max(1.0, abs(t0)) * 0.125 for k in range(0, 17)]
        cap = pts[-1]
    else:
        width = abs(end - t0)
        cap = end - sgn * 1e-6 * abs(iv.b - iv.a)
        pts = [end - sgn * width * 2.0 ** (-k) for k in range(1, 60)]
        pts = [p for p in pts if sgn * (p - cap) < 0] + [cap]
    prev = t0
    h = lambda s: abs(float(np.real(grid(s)))) - level  # noqa: E731
    for p in pts:
        try:
            val = h(p)
        except (ArithmeticError, ValueError):
            return prev
        if val >= 0:
            return float(optimize.brentq(h, prev, p, xtol=1e-12)) if prev != p else p
        prev = p
    return float(cap)


def _keys(system: JordanSystem, direction: Direction) -> tuple[str, str]:
    """Lattice keys governing decay toward a and toward b."""
    if system.form is not Form.I:
        return "c1", "c1"
    return {Direction.FORWARD: ("re_min", "re_min"), Direction.BACKWARD: ("re_max", "re_max"),
            Direction.HYPERBOLIC: ("c2", "c1")}[direction]


def default_horizon(system: JordanSystem, direction, level: float = DECAY_LEVEL) -> tuple[float, float]:
    """The t-range around t0 over which the exponential weights stay above e^{-level}."""
    direction = Direction.parse(direction)
    ka, kb = _keys(system, direction)
    return _reach(system, ka, False, level), _reach(system, kb, True, level)


@dataclass
class SharpnessResult:
    system: JordanSystem
    direction: Direction
    norm: NormKind
    epsilon: float
    K: float
    times: np.ndarray
    kappa: np.ndarray
    deviation_over_eps: np.ndarray
    sup_deviation: float
    argmax_t: float
    interior_rel_error: float
    forcing_norm_error: float
    ode_discrepancy: Optional[float] = None
    notes: list = field(default_factory=list)

    @property
    def sup_ratio(self) -> float:
        return self.sup_deviation / (self.K * self.epsilon)

    @property
    def kappa_matches(self) -> bool:
        return self.interior_rel_error <= 1e-3

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,kappa_t,deviation_over_eps\n")
        for t, k, d in zip(self.times, self.kappa, self.deviation_over_eps):
            buf.write(f"{float(t)!r},{float(k)!r},{float(d)!r}\n")
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "form": self.system.form.value, "direction": self.direction.value, "norm": self.norm.value,
            "epsilon": self.epsilon, "K": self.K, "sup_ratio": self.sup_ratio, "argmax_t": self.argmax_t,
            "interior_rel_error": self.interior_rel_error, "kappa_matches": self.kappa_matches,
            "forcing_norm_error": self.forcing_norm_error, "ode_discrepancy": self.ode_discrepancy,
            "horizon": [float(self.times[0]), float(self.times[-1])], "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


def _ode_check(system, forcing, direction, phi_at, ts, phis, eps) -> Optional[float]:
    """Integrate the forced ODE from the quadrature value and compare.

    Only over the window where weights stay within e^5, so that the
    integrator's own error growth does not dominate.
    """
    lo, hi = default_horizon(system, direction, level=5.0)
    sel = (ts >= lo) & (ts <= hi)
    if np.count_nonzero(sel) < 3:
        return None
    window = ts[sel]
    start = float(window[np.argmin(np.abs(window - system.t0))])
    traj = integrate(system, forcing.as_forcing(), phi_at(start), start, (float(window[0]), float(window[-1])),
                     tol=1e-11)
    diff = vnorm(traj(window) - phis[sel], NormKind.MAX)
    return float(np.max(diff) / eps)


def sharpness_experiment(system: JordanSystem, direction="forward", eps: float = 1.0,
                         horizon: Optional[tuple[float, float]] = None, norm=None, n: int = 401,
                         x_star=None, check_ode: bool = True, K: Optional[float] = None) -> SharpnessResult:
    """Deviation of the anchored extremal solution against ``ε κ(t)``."""
    direction = Direction.parse(direction)
    if norm is None:
        norm = NormKind.EUCLID if system.form is Form.III else NormKind.MAX
    norm = NormKind.parse(norm)
    forcing = extremal_forcing(system, eps, direction, x_star,
                               normalization=NormKind.EUCLID if norm is NormKind.EUCLID else NormKind.MAX)
    if K is None:
        profile = kappa_profile(system, direction, norm)
        if not profile.exists_everywhere:
            raise HypothesisError(f"κ does not exist at t={profile.witness_t}")
        if not profile.divergence_condition_holds:
            raise HypothesisError(f"divergence condition verdict: {profile.condition.verdict}")
        K = best_constant(profile).K
    lo, hi = horizon if horizon is not None else default_horizon(system, direction)
    ts = np.linspace(lo, hi, n)

    def phi_at(t):
        return anchored_solution(system, forcing, direction, float(t))

    phis = np.array([phi_at(t) for t in ts])
    dev = vnorm(phis, norm) / eps
    kap = np.array([v.value for v in kappa_values(system, direction, ts, norm, stop_on_divergence=False)])
    m = int(round(0.1 * (n - 1)))
    inner = slice(m, n - m)
    rel = float(np.max(np.abs(dev[inner] - kap[inner]) / np.maximum(np.abs(kap[inner]), 1e-300)))
    fnorm = vnorm(forcing(ts), forcing.normalization if system.form is Form.III else NormKind.MAX)
    ferr = float(np.max(np.abs(fnorm - eps)) / eps)

    i = int(np.argmax(dev))
    sup_t, sup_v = float(ts[i]), float(dev[i])
    if 0 < i < n - 1:
        f = lambda s: -float(vnorm(phi_at(s), norm)) / eps  # noqa: E731
        res = optimize.minimize_scalar(f, bounds=(ts[i - 1], ts[i + 1]), method="bounded",
                                       options={"xatol": 1e-10 * max(1.0, abs(ts[i]))})
        if -res.fun > sup_v:
            sup_t, sup_v = float(res.x), float(-res.fun)
    notes = []
    odd = _ode_check(system, forcing, direction, phi_at, ts, phis, eps) if check_ode else None
    return SharpnessResult(system, direction, norm, float(eps), float(K), ts, kap, dev, sup_v * eps, sup_t,
                           rel, ferr, odd, notes)


@dataclass
class MaxNormResult:
    alpha: float
    beta: float
    epsilon: float
    K: float
    times: np.ndarray
    deviation_over_eps: np.ndarray
    nominal_forcing_sup: float
    realized_forcing_sup: float

    @property
    def sup_ratio(self) -> float:
        """sup deviation over the t_n sequence relative to K·ε (nominal ε)."""
        return float(np.max(self.deviation_over_eps)) / self.K

    @property
    def ratio_to_realized(self) -> float:
        """The same supremum measured against the realized forcing size."""
        return float(np.max(self.deviation_over_eps)) * self.epsilon / (self.K * self.realized_forcing_sup)

    def summary(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "epsilon": self.epsilon, "K": self.K,
                "sup_ratio": self.sup_ratio, "nominal_forcing_sup": self.nominal_forcing_sup,
                "realized_forcing_sup": self.realized_forcing_sup, "ratio_to_realized": self.ratio_to_realized,
                "t_n": [float(t) for t in self.times]}


def maxnorm_form3_experiment(system: JordanSystem, eps: float = 1.0, count: int = 8) -> MaxNormResult:
    """Constant form III under the max norm with x* = (1, −1) scaled by its max norm.

    Evaluates the anchored deviation at ``t_n = (π/4 + nπ)/β + t0`` for the
    ``count`` values of n nearest t0 and compares with ``√2/|α|``.
    """
    if system.form is not Form.III or not system.is_constant():
        raise ValueError("needs a constant form III system")
    a, b = (complex(c).real for c in system.constants())
    if a == 0 or b == 0:
        raise ValueError("α and β must be nonzero")
    direction = Direction.FORWARD if a > 0 else Direction.BACKWARD
    forcing = extremal_forcing(system, eps, direction, x_star=(1.0, -1.0), normalization=NormKind.MAX)
    ns = np.arange(-(count // 2), count - count // 2)
    ts = (math.pi / 4 + ns * math.pi) / b + system.t0
    ts = np.sort(ts)
    dev = np.array([float(vnorm(anchored_solution(system, forcing, direction, t), NormKind.MAX)) for t in ts]) / eps
    probe = np.linspace(system.t0, system.t0 + 2 * math.pi / abs(b), 257)
    realized = float(np.max(vnorm(forcing(probe), NormKind.MAX)))
    return MaxNormResult(a, b, float(eps), math.sqrt(2.0) / abs(a), ts, dev, float(eps), realized)


def maxnorm_form3_best_constant(alpha: float, beta: float) -> float:
    """``∫_0^∞ e^{-|α|u}(|cos βu| + |sin βu|) du`` in closed form.

    This is the induced max-norm of the solution operator for a constant
    form III system, attained by choosing forcing signs row by row; it lies
    strictly between 1/|α| and √2/|α| whenever β ≠ 0.
    """
    a, b = abs(float(alpha)), abs(float(beta))
    if a == 0:
        raise ValueError("α must be nonzero")
    if b == 0:
        return 1.0 / a
    p = math.pi / (2 * b)
    q = math.exp(-a * p)
    return (a + b + (b - a) * q) / ((a * a + b * b) * (1 - q))
