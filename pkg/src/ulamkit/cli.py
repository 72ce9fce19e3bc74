"""Command-line interface: ``ulamkit <command> [options]``.

Exit codes: 0 success, 1 usage or parse error, 2 stability hypotheses not
satisfied, 3 a registry case disagrees with its expected values.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .expr import ExprError
from .jordan import Form, JordanSystem, NormKind

EXIT_OK, EXIT_USAGE, EXIT_HYPOTHESES, EXIT_MISMATCH = 0, 1, 2, 3

COEFFICIENT_KEYS = {Form.I: ("lambda1", "lambda2"), Form.II: ("lambda", "mu"), Form.III: ("alpha", "beta")}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _num(v: float):
    """JSON-safe float (infinities become strings)."""
    v = float(v)
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def load_config(path: Optional[str]) -> dict:
    """Flatten ``key = value`` pairs from every section; surrounding quotes are removed."""
    if not path:
        return {}
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str.lower
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh)
    out = {}
    for section in cp.sections():
        for key, value in cp.items(section):
            value = value.strip()
            if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
                value = value[1:-1]
            out[key.replace("-", "_")] = value
    return out


def _merged(args: argparse.Namespace) -> dict:
    """Config-file values overridden by explicitly given flags."""
    cfg = load_config(getattr(args, "config", None))
    for key, value in vars(args).items():
        if value is not None and key not in ("func", "config"):
            cfg[key] = value
    return cfg


def _system_from(cfg: dict) -> JordanSystem:
    if "form" not in cfg:
        raise UsageError("--form is required (I, II or III)")
    form = Form.parse(cfg["form"])
    k1, k2 = COEFFICIENT_KEYS[form]
    missing = [k for k in (k1, k2) if k not in cfg]
    if missing:
        raise UsageError(f"form {form.value} needs --{' and --'.join(missing)}")
    t0 = cfg.get("t0")
    return JordanSystem(form, str(cfg[k1]), str(cfg[k2]), cfg.get("interval", "(-inf,inf)"),
                        None if t0 is None else _float_expr(t0))


def _norm_for(cfg: dict, system: JordanSystem) -> NormKind:
    """Explicit --norm, else Euclidean for form III and max otherwise."""
    if cfg.get("norm"):
        return NormKind.parse(cfg["norm"])
    return NormKind.EUCLID if system.form is Form.III else NormKind.MAX


def _float_expr(value) -> float:
    from .expr import as_expr
    return float(as_expr(str(value)).scalar(0.0).real)


def _write(path: Optional[str], text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _constant_report(system: JordanSystem, direction, norm, n: int, horizon: float) -> tuple[dict, bool]:
    from .kappa import SupUnboundedError, best_constant, closed_form_constant, kappa_profile
    profile = kappa_profile(system, direction, norm, n=n, horizon=horizon)
    conditions = {"kappa_exists": profile.exists_everywhere, "sup_finite": False,
                  "divergence": profile.condition.verdict}
    report = {"system": system.describe(), "direction": profile.direction.value, "norm": profile.norm.value,
              "K": "inf", "t_star": None, "attained": None, "conditions": conditions}
    if not profile.exists_everywhere:
        report["witness_t"] = profile.witness_t
    else:
        try:
            b = best_constant(profile)
            conditions["sup_finite"] = True
            report.update(K=b.K, t_star=_num(b.t_star), attained=b.attained)
        except SupUnboundedError as exc:
            report["note"] = str(exc)
    if system.is_constant():
        try:
            report["closed_form_K"] = closed_form_constant(system, profile.norm)
        except ValueError:
            pass
    ok = conditions["kappa_exists"] and conditions["sup_finite"] and conditions["divergence"] == "holds"
    return report, ok


def cmd_constant(args) -> int:
    cfg = _merged(args)
    system = _system_from(cfg)
    report, ok = _constant_report(system, cfg.get("direction", "forward"), _norm_for(cfg, system),
                                  int(cfg.get("n", 512)), float(cfg.get("horizon", 40.0)))
    _write(cfg.get("output"), _dumps(report))
    return EXIT_OK if ok else EXIT_HYPOTHESES


def cmd_shadow(args) -> int:
    from .ode import Trajectory
    from .shadow import shadow
    cfg = _merged(args)
    system = _system_from(cfg)
    if cfg.get("trajectory"):
        phi = Trajectory.from_csv(cfg["trajectory"])
    elif "phi1" in cfg and "phi2" in cfg:
        phi = (str(cfg["phi1"]), str(cfg["phi2"]))
    else:
        raise UsageError("give --phi1/--phi2 expressions or --trajectory CSV")
    report = shadow(phi, system, cfg.get("direction", "forward"), _norm_for(cfg, system),
                    K=None if cfg.get("k") is None else float(cfg["k"]),
                    epsilon=None if cfg.get("eps") is None else float(cfg["eps"]),
                    n=int(cfg.get("n", 2001)), horizon=float(cfg.get("horizon", 40.0)))
    data = report.to_dict()
    data["K"] = _num(data["K"])
    data["ratio"] = _num(data["ratio"])
    _write(cfg.get("output"), _dumps(data))
    if cfg.get("deviation_csv"):
        _write(cfg["deviation_csv"], report.deviation_csv())
    return EXIT_OK if report.hypotheses_hold else EXIT_HYPOTHESES


def cmd_sharpness(args) -> int:
    from .extremal import HypothesisError, LowerBoundNotEstablished, maxnorm_form3_experiment, sharpness_experiment
    cfg = _merged(args)
    system = _system_from(cfg)
    eps = float(cfg.get("eps", 1.0))
    try:
        if cfg.get("maxnorm"):
            res = maxnorm_form3_experiment(system, eps)
            _write(cfg.get("output"), _dumps(res.summary()))
            return EXIT_OK
        x_star = None
        if cfg.get("x_star"):
            x_star = [float(v) for v in str(cfg["x_star"]).split(",")]
        res = sharpness_experiment(system, cfg.get("direction", "forward"), eps, norm=_norm_for(cfg, system),
                                   n=int(cfg.get("n", 401)), x_star=x_star)
    except (HypothesisError, LowerBoundNotEstablished) as exc:
        sys.stderr.write(f"ulamkit: {exc}\n")
        return EXIT_HYPOTHESES
    if cfg.get("csv"):
        _write(cfg["csv"], res.to_csv())
    _write(cfg.get("output"), _dumps(res.summary()))
    return EXIT_OK


def cmd_transform(args) -> int:
    from .kappa import SupUnboundedError, best_constant, kappa_profile
    from .transform import (MatrixFunction, TransformSpec, UnboundedTransformError, classify,
                            propagate_constant, residual, similarity, to_jordan_system)
    cfg = _merged(args)
    keys_r = ("r11", "r12", "r21", "r22")
    keys_a = ("a11", "a12", "a21", "a22")
    missing = [k for k in keys_r + keys_a if k not in cfg]
    if missing:
        raise UsageError(f"missing matrix entries: {', '.join(missing)}")
    interval = cfg.get("interval", "(-inf,inf)")
    norm = NormKind.parse(cfg.get("norm", "max"))
    spec = TransformSpec(MatrixFunction([str(cfg[k]) for k in keys_r]), interval, norm)
    A = MatrixFunction([str(cfg[k]) for k in keys_a])
    J = similarity(A, spec)
    ts = spec.samples(101)
    form = classify(J, ts)
    out = {"J_form": form, "residual": residual(A, spec, J, ts), "sup_R": _num(spec.sup_R),
           "sup_R_inv": _num(spec.sup_R_inv), "bounded": spec.bounded, "norm": norm.value}
    if J.exprs is not None:
        from .expr import to_string
        out["J"] = [to_string(e) for e in J.exprs]
    code = EXIT_OK
    if form != "general":
        t0 = cfg.get("t0")
        system = to_jordan_system(J, form, interval, None if t0 is None else _float_expr(t0))
        direction = cfg.get("direction", "hyperbolic" if form == "I" else "forward")
        knorm = norm if form == "III" else NormKind.MAX
        profile = kappa_profile(system, direction, knorm)
        out["direction"] = profile.direction.value
        out["conditions"] = {"kappa_exists": profile.exists_everywhere, "divergence": profile.condition.verdict}
        try:
            if not profile.exists_everywhere:
                raise SupUnboundedError(profile.witness_t, math.inf)
            K = best_constant(profile).K
            out["K_J"] = K
            out["propagated_K"] = propagate_constant(K, spec)
            if profile.condition.verdict != "holds":
                code = EXIT_HYPOTHESES
        except (SupUnboundedError, UnboundedTransformError) as exc:
            out["note"] = str(exc)
            code = EXIT_HYPOTHESES
    _write(cfg.get("output"), _dumps(out))
    return code


def cmd_example(args) -> int:
    from .registry import CASES, INSTABILITY_DEMO, run_case
    if args.list:
        for cid, case in CASES.items():
            sys.stdout.write(f"{cid}\t{case.status}\t{case.title}\n")
        return EXIT_OK
    if not args.id:
        raise UsageError("give a case id (see --list)")
    try:
        report = run_case(args.id)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    text = report.to_json() + "\n" if args.json else report.format() + "\n"
    _write(args.output, text)
    if not report.passed:
        return EXIT_MISMATCH
    # a reproduced instability still means the hypotheses fail for that system
    return EXIT_HYPOTHESES if report.status == INSTABILITY_DEMO else EXIT_OK


def cmd_portrait(args) -> int:
    from .registry import portrait
    res = portrait(args.preset, args.eps, t_end=args.t_end, samples=args.samples, count=args.count,
                   radius=args.radius)
    outdir = args.output_dir or f"portrait_{args.preset}"
    os.makedirs(outdir, exist_ok=True)
    for k, (_, phi, shadow, _) in enumerate(res.orbits):
        phi.to_csv(os.path.join(outdir, f"orbit_{k:02d}.csv"))
        shadow.to_csv(os.path.join(outdir, f"shadow_{k:02d}.csv"))
    text = _dumps(res.summary())
    _write(os.path.join(outdir, "summary.json"), text)
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _system_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file with [section] headers")
    p.add_argument("--form", help="I, II or III")
    for name in ("lambda1", "lambda2", "lambda", "mu", "alpha", "beta"):
        p.add_argument(f"--{name}", help=f"coefficient expression in t ({name})")
    p.add_argument("--interval", help='e.g. "(-inf,inf)" or "(0,1]"')
    p.add_argument("--t0", help="base point (expression)")
    p.add_argument("--direction", help="forward, backward or hyperbolic")
    p.add_argument("--norm", help="max or euclid")
    p.add_argument("--output", "-o", help="write the JSON report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ulamkit", description="Best Ulam constants and shadowing for 2-D Jordan-form systems")
    parser.add_argument("--version", action="version", version=f"ulamkit {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("constant", help="best Ulam constant and hypothesis verdicts")
    _system_options(p)
    p.add_argument("--n", type=int, help="sample count for the κ grid")
    p.add_argument("--horizon", type=float, help="truncation for infinite intervals")
    p.set_defaults(func=cmd_constant)

    p = sub.add_parser("shadow", help="shadowing solution of an approximate solution")
    _system_options(p)
    p.add_argument("--phi1", help="first component of φ (expression)")
    p.add_argument("--phi2", help="second component of φ (expression)")
    p.add_argument("--trajectory", help="φ as CSV t,re_x1,im_x1,re_x2,im_x2")
    p.add_argument("--eps", type=float, help="defect bound (default: measured)")
    p.add_argument("--K", dest="k", type=float, help="Ulam constant (default: computed)")
    p.add_argument("--n", type=int, help="evaluation grid size")
    p.add_argument("--horizon", type=float)
    p.add_argument("--deviation-csv", dest="deviation_csv", help="write t,deviation rows here")
    p.set_defaults(func=cmd_shadow)

    p = sub.add_parser("sharpness", help="extremal forcing experiment")
    _system_options(p)
    p.add_argument("--eps", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--x-star", dest="x_star", help="form III direction, e.g. 1,-1")
    p.add_argument("--csv", help="write t,kappa_t,deviation_over_eps rows here")
    p.add_argument("--maxnorm", action="store_const", const=True,
                   help="constant form III under the max norm along t_n")
    p.set_defaults(func=cmd_sharpness)

    p = sub.add_parser("transform", help="similarity transform R(t) and constant propagation")
    p.add_argument("--config")
    for k in ("r11", "r12", "r21", "r22", "a11", "a12", "a21", "a22"):
        p.add_argument(f"--{k}")
    p.add_argument("--interval")
    p.add_argument("--t0")
    p.add_argument("--direction")
    p.add_argument("--norm")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("example", help="run a registered worked example")
    p.add_argument("id", nargs="?")
    p.add_argument("--list", action="store_true")
    p.add_argument("--json", action="store_true")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_example)

    p = sub.add_parser("portrait", help="orbit CSVs of perturbed saddle/node/focus with shadows")
    p.add_argument("--preset", required=True, choices=["saddle", "node", "focus"])
    p.add_argument("--eps", type=float, default=0.2)
    p.add_argument("--t-end", dest="t_end", type=float, default=10.0)
    p.add_argument("--samples", type=int, default=401)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--radius", type=float, default=2.0)
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_portrait)
    return parser


def _option_strings(parser: argparse.ArgumentParser) -> set[str]:
    out = set()
    for action in parser._actions:
        out.update(action.option_strings)
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                out |= _option_strings(sub)
    return out


def _glue_negative_values(argv: list[str], options: set[str]) -> list[str]:
    """Allow ``--a21 -3*i``: a value starting with '-' that is not an option is glued with '='."""
    out: list[str] = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if (tok.startswith("--") and "=" not in tok and tok in options and i + 1 < len(argv)
                and argv[i + 1].startswith("-") and argv[i + 1] not in options and argv[i + 1] != "-"):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(_glue_negative_values(argv, _option_strings(parser)))
    if not getattr(args, "func", None):
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ExprError, configparser.Error, OSError, KeyError) as exc:
        sys.stderr.write(f"ulamkit: {exc}\n")
        return EXIT_USAGE
    except ValueError as exc:
        sys.stderr.write(f"ulamkit: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
