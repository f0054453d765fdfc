"""Command line driver.

Exit codes: 0 success, 1 input error, 2 validation failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path as FsPath

from . import counterexample as cx
from .config import ConfigError, RunConfig, load_config
from .moments import cond_moment_commutative, norm_even_moment, norm_odd_moment
from .oracle import FrozenScenario, conditional_mc, laplace_estimator, tolerance_gate
from .pricing import PricingRequest, payoff_from_dict, price_mc, price_option
from .process import Path
from .serialize import CurveFormatError, curve_on_grid, path_to_csv, path_to_json, read_curve_csv
from .validation import derive_seed, initial_curve, ou_process, run_suite

EXIT_OK, EXIT_INPUT, EXIT_VALIDATION = 0, 1, 2


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="override mc.seed")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), help="report format")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="banachpoly", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    m = sub.add_parser("moments", help="conditional moments of the grid OU process")
    _common(m)
    m.add_argument("-k", type=int, required=True, help="moment order")
    m.add_argument("--s", type=float, help="conditioning time")
    m.add_argument("--t", type=float, help="target time")
    m.add_argument("--curve", help="observed curve at s (CSV maturity,price)")
    m.add_argument("--validate", action="store_true", help="compare against the MC oracle")

    pr = sub.add_parser("price", help="European option on a forward")
    _common(pr)
    pr.add_argument("--request", help="pricing request JSON (defaults from config)")
    pr.add_argument("--validate", action="store_true", help="cross-check with exact-payoff MC")

    c = sub.add_parser("counterexample", help="matrix-algebra obstruction verdicts")
    _common(c)

    s = sub.add_parser("simulate", help="simulate an OU forward-curve path")
    _common(s)
    s.add_argument("--t-end", type=float, default=1.0)
    s.add_argument("--dt", type=float, default=0.125)

    v = sub.add_parser("validate", help="run the full oracle gate suite")
    _common(v)
    return ap


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _fmt(args, cfg) -> str:
    return args.format or cfg.output.format


def _emit(text: str, args, cfg):
    out = args.out or cfg.output.out
    if out:
        FsPath(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _meta(cfg: RunConfig, command: str) -> dict:
    return {"command": command, "config_digest": cfg.digest(), "seed": cfg.mc.seed}


def _load_curve(path, space):
    try:
        mats, prices = read_curve_csv(path)
    except OSError as exc:
        raise InputError(f"cannot read curve: {exc}") from exc
    except CurveFormatError as exc:
        raise InputError(f"{path}: {exc}") from exc
    return curve_on_grid(space, mats, prices)


def cmd_moments(args, cfg) -> int:
    if args.k < 0:
        raise InputError("k must be >= 0")
    s = cfg.moments.s if args.s is None else args.s
    t = cfg.moments.t if args.t is None else args.t
    if not 0 <= s <= t:
        raise InputError(f"need 0 <= s <= t, got s={s}, t={t}")
    p = ou_process(cfg)
    f_s = _load_curve(args.curve, p.space) if args.curve else initial_curve(cfg, p.space)
    scen = FrozenScenario(p, Path.constant(s, f_s), s, derive_seed(cfg.mc.seed, "cli-moments"))
    d = scen.decomposition(t)
    res = cond_moment_commutative(args.k, d)
    law = d.perp_law.shifted(d.parallel.coords)
    if args.k % 2 == 0:
        norm_moment = norm_even_moment(args.k // 2, law, p.space) if args.k <= 8 else None
    else:
        lap = laplace_estimator(scen, t, args.k + 1, cfg.mc.n_paths)
        norm_moment = norm_odd_moment((args.k - 1) // 2, lap)
    report = {"meta": _meta(cfg, "moments") | {"s": s, "t": t},
              "result": res.to_json(), "norm_moment": norm_moment}
    code = EXIT_OK
    oracle = None
    if args.validate:
        est = conditional_mc(scen, lambda X: X**args.k, t, cfg.mc.n_paths)
        gate = tolerance_gate(est, res.value.coords, cfg.mc.k_sigma, f"moment k={args.k}")
        report["oracle"] = gate.to_json() | {"mc": est.to_json()}
        oracle = est
        code = EXIT_OK if gate.passed else EXIT_VALIDATION
        print(gate.line(), file=sys.stderr)
    if _fmt(args, cfg) == "csv":
        rows = [["x", "value"] + (["mc_mean", "mc_se"] if oracle else [])]
        for i, x in enumerate(p.space.grid.nodes):
            row = [repr(float(x)), repr(float(res.value.coords[i]))]
            if oracle:
                row += [repr(float(oracle.mean[i])), repr(float(oracle.se[i]))]
            rows.append(row)
        _emit(_csv(rows), args, cfg)
    else:
        _emit(json.dumps(report, indent=2), args, cfg)
    return code


def _pricing_request(args, cfg, p):
    pc = cfg.pricing
    merged = {"payoff": {"kind": pc.kind, "strike": pc.strike, "degree": pc.degree,
                       "domain_M": pc.domain_M}, "s": pc.s, "t": pc.t, "x": pc.x}
    base = FsPath(".")
    if args.request:
        try:
            user = json.loads(FsPath(args.request).read_text())
        except OSError as exc:
            raise InputError(f"cannot read request: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.request}: invalid JSON at line {exc.lineno}") from exc
        unknown = set(user) - {"payoff", "s", "t", "x", "curve_file"}
        if unknown:
            raise InputError(f"{args.request}: unknown keys {sorted(unknown)}")
        merged.update({k: v for k, v in user.items() if k != "payoff"})
        merged["payoff"] = merged["payoff"] | user.get("payoff", {})
        base = FsPath(args.request).parent
    if merged.get("curve_file"):
        curve = FsPath(merged["curve_file"])
        f_s = _load_curve(curve if curve.is_absolute() else base / curve, p.space)
    else:
        f_s = initial_curve(cfg, p.space)
    s, t, x = float(merged["s"]), float(merged["t"]), float(merged["x"])
    forward_level = float(p.space.eval_delta(x + t - s, f_s.coords))
    try:
        payoff = payoff_from_dict(merged["payoff"], forward_level)
        return PricingRequest(payoff, s, t, x, f_s)
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed payoff specification: {exc}") from exc


def cmd_price(args, cfg) -> int:
    p = ou_process(cfg)
    req = _pricing_request(args, cfg, p)
    res = price_option(req, p)
    report = {"meta": _meta(cfg, "price")} | res.to_json()
    code = EXIT_OK
    if args.validate:
        if req.payoff.payoff is None:
            raise InputError("--validate needs a named payoff kind (custom payoffs have no exact form)")
        mc = price_mc(req, p, cfg.mc.n_paths, derive_seed(cfg.mc.seed, "cli-price"))
        tol = max(cfg.mc.k_sigma * mc.se, res.diagnostics.get("bernstein_sup_error", 0.0))
        ok = abs(res.price - mc.price) <= tol
        report["oracle"] = {"price": mc.price, "se": mc.se, "tolerance": tol,
                            "verdict": "PASS" if ok else "FAIL"}
        code = EXIT_OK if ok else EXIT_VALIDATION
    if _fmt(args, cfg) == "csv":
        rows = [["key", "value"], ["price", repr(res.price)]]
        rows += [[k, str(v)] for k, v in res.diagnostics.items()]
        if "oracle" in report:
            rows += [[f"oracle_{k}", str(v)] for k, v in report["oracle"].items()]
        _emit(_csv(rows), args, cfg)
    else:
        _emit(json.dumps(report, indent=2, default=float), args, cfg)
    return code


def cmd_counterexample(args, cfg) -> int:
    rep = cx.report()
    ok = rep["part1"]["status"] == cx.INCONSISTENT and rep["part2"]["status"] == cx.CONTRADICTION
    rep = {"meta": _meta(cfg, "counterexample")} | rep
    if _fmt(args, cfg) == "csv":
        rows = [["part", "status", "certificate"],
                ["left-multiplier", rep["part1"]["status"], f"residual={rep['part1']['residual']}"],
                ["quadratic", rep["part2"]["status"], f"lhs={rep['part2']['lhs']}"]]
        _emit(_csv(rows), args, cfg)
    else:
        _emit(json.dumps(rep, indent=2), args, cfg)
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_simulate(args, cfg) -> int:
    if args.t_end < 0 or args.dt <= 0:
        raise InputError("need t_end >= 0 and dt > 0")
    p = ou_process(cfg)
    path = p.simulate_path(args.t_end, args.dt, derive_seed(cfg.mc.seed, "cli-simulate"),
                           initial_curve(cfg, p.space))
    if _fmt(args, cfg) == "csv":
        _emit(path_to_csv(path), args, cfg)
    else:
        report = {"meta": _meta(cfg, "simulate"), "grid": p.space.grid.to_dict(),
                  "path": path_to_json(path)}
        _emit(json.dumps(report), args, cfg)
    return EXIT_OK


def cmd_validate(args, cfg) -> int:
    rep = run_suite(cfg, cfg.mc.seed)
    print(rep.table(), file=sys.stderr)
    if _fmt(args, cfg) == "csv":
        rows = [["group", "gate", "verdict"]]
        rows += [[g, r.name, r.verdict] for g, rs in rep.groups.items() for r in rs]
        _emit(_csv(rows), args, cfg)
    else:
        _emit(json.dumps(rep.to_json(), indent=2, default=float), args, cfg)
    return EXIT_OK if rep.passed else EXIT_VALIDATION


COMMANDS = {"moments": cmd_moments, "price": cmd_price, "counterexample": cmd_counterexample,
            "simulate": cmd_simulate, "validate": cmd_validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](args, cfg)
    except (InputError, ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

