"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import math
import time

import numpy as np

from ulamkit.cli import main
from ulamkit.extremal import anchored_solution, maxnorm_form3_best_constant, sharpness_experiment
from ulamkit.jordan import JordanSystem, NormKind
from ulamkit.kappa import best_constant, closed_form_constant, kappa_profile, kappa_value
from ulamkit.ode import Forcing
from ulamkit.registry import EX65_A, EX65_R, instability_demo, portrait
from ulamkit.shadow import forced_anchor
from ulamkit.transform import (
    MatrixFunction, TransformSpec, classify, propagate_constant, residual, similarity, to_jordan_system,
)
from ulamkit.jordan import norm as vnorm

SQ2 = math.sqrt(2.0)
ERF_MU = "2/sqrt(pi)*exp(-t^2)"

COROLLARY_SYSTEMS = [
    ("cor3.4 diag(1,-1)", lambda: JordanSystem.diagonal(1, -1), "hyperbolic", NormKind.MAX, 1.0),
    ("cor3.4 diag(2+i,3)", lambda: JordanSystem.diagonal("2+i", 3), "forward", NormKind.MAX, 0.5),
    ("cor4.4 lambda=-1", lambda: JordanSystem.jordan_block(-1, 1), "backward", NormKind.MAX, 2.0),
    ("cor4.4 lambda=2", lambda: JordanSystem.jordan_block(2, 1), "forward", NormKind.MAX, 0.75),
    ("cor5.4 alpha=1", lambda: JordanSystem.rotation(1, 2), "forward", NormKind.EUCLID, 1.0),
    ("cor5.4 alpha=-1", lambda: JordanSystem.rotation(-1, 2), "backward", NormKind.EUCLID, 1.0),
    ("thm5.5 max norm", lambda: JordanSystem.rotation(-1, 2), "backward", NormKind.MAX, SQ2),
]


def test_criterion_1_blow_up(criterion):
    start = time.perf_counter()
    s = JordanSystem.diagonal("1/(1-t)", "-1/t", "(0,1)", t0=0.5)
    K = best_constant(kappa_profile(s, "hyperbolic")).K
    pts = {t: kappa_value(s, "hyperbolic", t).value for t in (0.1, 0.25, 0.5, 0.9)}
    elapsed = time.perf_counter() - start
    err = max(abs(v - 0.5 * (abs(t - 0.5) + 0.5)) for t, v in pts.items())
    ok = abs(K - 0.5) <= 1e-4 and err <= 1e-6 and elapsed < 5
    assert criterion(1, ok, f"K13={K:.10f} (0.5 +- 1e-4), pointwise err={err:.2e} (<=1e-6), {elapsed:.2f}s (<5s)")


def test_criterion_2_erf(criterion):
    start = time.perf_counter()
    b = best_constant(kappa_profile(JordanSystem.jordan_block("1+i*t", ERF_MU), "forward"))
    k0 = kappa_value(JordanSystem.jordan_block("1+i*t", ERF_MU), "forward", 0.0).value
    b0 = best_constant(kappa_profile(JordanSystem.jordan_block("1", ERF_MU), "forward"))
    elapsed = time.perf_counter() - start
    want0 = 1 + math.exp(0.25) * math.erfc(0.5)
    ok = (abs(b.K - 1.78395) <= 1e-3 and abs(b.t_star + 0.603489) <= 1e-3 and abs(k0 - want0) <= 1e-6
          and abs(b0.K - b.K) <= 1e-9 and abs(b0.t_star - b.t_star) <= 1e-6 and elapsed < 10)
    assert criterion(2, ok, f"K21={b.K:.8f} at t*={b.t_star:.7f}; kappa21(0) err={abs(k0 - want0):.2e}; "
                            f"beta 0 vs t diff={abs(b0.K - b.K):.1e}; {elapsed:.2f}s (<10s)")


def test_criterion_3_rotation(criterion):
    b = best_constant(kappa_profile(JordanSystem.rotation("1-2*t/(1+t^2)", "t"), "forward", NormKind.EUCLID))
    ok = abs(b.K - (2 + SQ2)) <= 1e-6 and abs(b.t_star - (SQ2 - 1)) <= 1e-4
    assert criterion(3, ok, f"K31={b.K:.12f} (2+sqrt2 +- 1e-6) at t*={b.t_star:.8f} (sqrt2-1 +- 1e-4)")


def test_criterion_4_transform(criterion):
    spec = TransformSpec(MatrixFunction(EX65_R), "(0,pi/2)")
    A = MatrixFunction(EX65_A)
    J = similarity(A, spec)
    ts = np.linspace(0.01, math.pi / 2 - 0.01, 401)
    m = J(ts)
    cs = 1 / (np.sin(ts) * np.cos(ts))
    entry = max(float(np.max(np.abs(m[:, 0, 0] - cs) / cs)), float(np.max(np.abs(m[:, 1, 1] + cs) / cs)))
    res = residual(A, spec, J, ts)
    form = classify(J, ts)
    K = best_constant(kappa_profile(to_jordan_system(J, "I", "(0,pi/2)"), "hyperbolic")).K
    prop = propagate_constant(K, spec)
    ok = (form == "I" and entry <= 1e-8 and res <= 1e-8 and abs(K - 0.4023711) <= 1e-5
          and abs(spec.sup_R - SQ2) <= 1e-9 and abs(spec.sup_R_inv - SQ2) <= 1e-9 and abs(prop - 0.8047422) <= 1e-4)
    assert criterion(4, ok, f"form={form}, entry err={entry:.1e}, residual={res:.1e}, K13={K:.9f}, "
                            f"sup|R|={spec.sup_R:.12f}, sup|R^-1|={spec.sup_R_inv:.12f}, propagated={prop:.9f}")


def test_criterion_5_corollaries(criterion):
    worst, parts = 0.0, []
    for name, build, direction, norm, want in COROLLARY_SYSTEMS:
        s = build()
        K = best_constant(kappa_profile(s, direction, norm, horizon=40.0)).K
        closed = closed_form_constant(s, norm)
        rel = max(abs(K - closed), abs(closed - want)) / want
        worst = max(worst, rel)
        parts.append(f"{name}={K:.9f}")
    assert criterion(5, worst <= 1e-6, f"worst rel diff={worst:.1e} (<=1e-6); " + ", ".join(parts))


def test_criterion_6_sharpness(criterion):
    parts, ok = [], True
    for name, build, direction, norm, _ in COROLLARY_SYSTEMS:
        start = time.perf_counter()
        r = sharpness_experiment(build(), direction, eps=0.2, norm=norm)
        elapsed = time.perf_counter() - start
        good = 0.995 <= r.sup_ratio <= 1.005 and r.interior_rel_error <= 1e-3 and elapsed < 30
        ok &= good
        parts.append(f"{name}: ratio={r.sup_ratio:.6f} interior={r.interior_rel_error:.1e} {elapsed:.1f}s"
                     + ("" if good else " <-- FAIL"))
    # no max-norm forcing can reach sqrt2/|alpha|: the operator constant is smaller
    C = maxnorm_form3_best_constant(-1.0, 2.0)
    parts.append(f"max-norm operator constant={C:.10f} < sqrt2")
    assert criterion(6, ok, "; ".join(parts))


def test_criterion_7_instability(criterion, capsys):
    s = JordanSystem.jordan_block("2*t/(1+t^2)", 1)
    exists = {d: kappa_profile(s, d, n=64, with_condition=False).exists_everywhere for d in ("forward", "backward")}
    demo = instability_demo(eps=0.1, span=50.0, n_grid=21)
    code = main(["example", "ex6.3"])
    capsys.readouterr()
    ok = not any(exists.values()) and demo["grid"] == 441 and demo["min_sup_deviation_over_eps"] > 10 and code == 2
    assert criterion(7, ok, f"kappa21 exists={exists['forward']}, kappa22 exists={exists['backward']}, "
                            f"min over 21x21 grid of sup dev/eps={demo['min_sup_deviation_over_eps']:.1f} (>10), "
                            f"CLI exit={code}")


def _poly_real(rng, sign):
    a, b = rng.uniform(0.5, 2.0), rng.uniform(0.0, 0.3)
    # a + c t + b t^2 stays positive when c^2 < 4ab
    lim = math.sqrt(4 * a * b) * 0.999
    c = rng.uniform(-lim, lim) if lim > 0 else 0.0
    s = f"({a:.17g}+({c:.17g})*t+{b:.17g}*t^2)"
    return s if sign > 0 else f"-{s}"


def _bounded(rng):
    return f"{rng.uniform(-1, 1):.17g}*sin({rng.uniform(0.2, 2):.17g}*t+{rng.uniform(0, 3):.17g})"


def _random_system(rng, form):
    if form == "I":
        d = str(rng.choice(["forward", "backward", "hyperbolic"]))
        s1, s2 = {"forward": (1, 1), "backward": (-1, -1), "hyperbolic": (1, -1)}[d]
        return JordanSystem.diagonal(f"{_poly_real(rng, s1)}+i*{_bounded(rng)}",
                                     f"{_poly_real(rng, s2)}+i*{_bounded(rng)}"), d, NormKind.MAX
    d = str(rng.choice(["forward", "backward"]))
    sign = 1 if d == "forward" else -1
    if form == "II":
        return JordanSystem.jordan_block(f"{_poly_real(rng, sign)}+i*{_bounded(rng)}", _bounded(rng)), d, NormKind.MAX
    return JordanSystem.rotation(_poly_real(rng, sign), f"{rng.uniform(-2, 2):.17g}+{_bounded(rng)}"), d, NormKind.EUCLID


def _random_forcing(rng, form, eps):
    r, w, th = rng.uniform(0, 1, 2), rng.uniform(-2, 2, 2), rng.uniform(0, 6, 2)
    if form == "III":
        arg = f"({w[0]:.17g}*t+{th[0]:.17g})"
        return Forcing(f"{eps * r[0]:.17g}*cos{arg}", f"{eps * r[0]:.17g}*sin{arg}")
    return Forcing(*(f"{eps * r[j]:.17g}*exp(i*({w[j]:.17g}*t+{th[j]:.17g}))" for j in range(2)))


def test_criterion_8_property_suite(criterion):
    rng = np.random.default_rng(2024)
    ts = np.linspace(-4.0, 4.0, 33)
    mid = 16
    worst_ratio, worst_lin, worst_rec, failures = 0.0, 0.0, 0.0, 0
    for form in ("I", "II", "III"):
        for _ in range(50):
            s, d, norm = _random_system(rng, form)
            eps = float(rng.uniform(0.05, 1.0))
            K = best_constant(kappa_profile(s, d, norm, n=64, horizon=12.0)).K
            f = _random_forcing(rng, form, eps)
            c0 = rng.normal(size=2) + (0 if form == "III" else 1j * rng.normal(size=2))
            # φ = bounded particular solution + X(t)c0 solves φ' = Aφ + f with ‖f‖ ≤ ε
            phi = np.array([anchored_solution(s, f, d, t) for t in ts]) + s.apply(ts, np.broadcast_to(c0, (33, 2)))
            c = forced_anchor(s, f, phi[mid], ts[mid], d)
            c1 = rng.normal(size=2)
            moved = forced_anchor(s, f, phi[mid] + s.apply(ts[mid], c1), ts[mid], d)
            dev = float(np.max(vnorm(phi - s.apply(ts, np.broadcast_to(c, (33, 2))), norm)))
            ratio = dev / (K * eps)
            lin = float(np.max(np.abs(moved - c - c1)))
            rec = float(np.max(np.abs(c - c0)))
            worst_ratio, worst_lin, worst_rec = max(worst_ratio, ratio), max(worst_lin, lin), max(worst_rec, rec)
            failures += int(ratio > 1.01 or lin > 1e-6 or rec > 1e-6)
    ok = failures == 0
    assert criterion(8, ok, f"150 trials, failures={failures}, max dev/(K eps)={worst_ratio:.4f} (<=1.01), "
                            f"linearity err={worst_lin:.1e}, recovery err={worst_rec:.1e} (<=1e-6)")


def _fd(system, direction, t, norm, h=1e-3):
    k = [kappa_value(system, direction, t + j * h, norm).value for j in (-2, -1, 0, 1, 2)]
    return (k[0] - 8 * k[1] + 8 * k[3] - k[4]) / (12 * h), k[2]


def test_criterion_9_kappa_identities(criterion):
    def re(expr):
        from ulamkit.expr import as_expr
        e = as_expr(expr)
        return lambda t: float(e.scalar(t).real)

    l1, l2 = "t+0.3*sin(t)+i*cos(t)", "t+1+0.2*cos(t)"
    a3 = "t+0.5*sin(t)"
    a4 = "1-2*t/(1+t^2)"
    p1, p2, pa3, pa4 = re(l1), re(l2), re(a3), re(a4)
    cases = [
        # (label, system, direction, norm, coefficient c(t), sign s): κ' = c κ + s
        ("kappa11", JordanSystem.diagonal(l1, l2), "forward", NormKind.MAX, lambda t: min(p1(t), p2(t)), -1),
        ("kappa12", JordanSystem.diagonal(l1, l2), "backward", NormKind.MAX, lambda t: max(p1(t), p2(t)), 1),
        ("kappa31", JordanSystem.rotation(a3, "1+t^2"), "forward", NormKind.EUCLID, pa3, -1),
        ("kappa32", JordanSystem.rotation(a3, "1+t^2"), "backward", NormKind.EUCLID, pa3, 1),
        ("kappa31", JordanSystem.rotation(a4, "t"), "forward", NormKind.EUCLID, pa4, -1),
        ("kappa32", JordanSystem.rotation(f"-({a4})", "t"), "backward", NormKind.EUCLID, lambda t: -pa4(t), 1),
    ]
    pts = np.linspace(-3.0, 3.0, 50)
    worst, parts = 0.0, []
    for label, s, d, norm, coef, sign in cases:
        w = 0.0
        for t in pts:
            dk, k = _fd(s, d, float(t), norm)
            rhs = coef(float(t)) * k + sign
            w = max(w, abs(dk - rhs) / max(abs(dk), abs(rhs), 1.0))
        worst = max(worst, w)
        parts.append(f"{label}/{s.form.value}:{w:.1e}")
    assert criterion(9, worst <= 1e-5, f"worst rel residual={worst:.1e} (<=1e-5) at 50 points; " + ", ".join(parts))


def test_criterion_10_portraits(criterion):
    parts, ok = [], True
    for preset, K_want, norm in (("saddle", 1.0, NormKind.MAX), ("node", 2.0, NormKind.MAX),
                                 ("focus", 1.0, NormKind.EUCLID)):
        r = portrait(preset, eps=0.2)
        good = r.within_tube and abs(r.K - K_want) <= 1e-12 and r.norm is norm
        ok &= good
        parts.append(f"{preset}: K={r.K:g} tube={r.K * 0.2:g} max dev={r.max_deviation:.4f}")
    assert criterion(10, ok, "; ".join(parts))
