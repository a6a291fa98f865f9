"""Command-line front end.

Five commands over one JSON config: classify, solve, eta-star, optimize,
verify. By default the pipeline runs in-process; --server delegates to a
running service and prints the same payloads. CSV files use 17 significant
digits so a solve -> verify round trip loses nothing.

Exit codes: 0 ok (verify: all checks passed), 1 verification failed,
2 config/input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .config import RunConfig, load_config
from .errors import ConfigError, NumericsError

_FMT = "%.17g"


def _parse_args(argv):
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to the JSON run config")
    common.add_argument("--json", action="store_true", dest="as_json",
                        help="print the full machine-readable response")
    common.add_argument("--out", help="output file (overrides output.path in the config)")
    common.add_argument("--server", help="base URL of a running service; "
                        "run remotely instead of in-process")

    parser = argparse.ArgumentParser(
        prog="rdueq",
        description="Deterministic strict equilibrium strategies for "
                    "rank-dependent utility portfolio selection")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("classify", parents=[common],
                   help="decide which equilibria exist")
    p_solve = sub.add_parser("solve", parents=[common],
                             help="solve the remaining-variance path and emit the strategy")
    group = p_solve.add_mutually_exclusive_group()
    group.add_argument("--eta", type=float, help="initial remaining variance Y(0)")
    group.add_argument("--maximal", action="store_true",
                       help="solve at the maximal eta from the epsilon ladder")
    sub.add_parser("eta-star", parents=[common],
                   help="estimate the maximal eta of the equilibrium family")
    sub.add_parser("optimize", parents=[common],
                   help="search the family for the best time-zero RDU value")
    p_verify = sub.add_parser("verify", parents=[common],
                              help="test a strategy file against spike perturbations")
    p_verify.add_argument("--strategy", required=True,
                          help="strategy CSV (t, pi columns; a Y column is ignored)")

    return parser.parse_args(argv)


# ------------------------------------------------------------------ files

def read_strategy_csv(path: str, T: float):
    """Parse a strategy CSV into a payload. Column order: t, optional Y,
    then one column per asset."""
    from .service.schemas import StrategyPayload

    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read strategy file {path}: {exc}") from exc
    if len(rows) < 2:
        raise ConfigError(f"strategy file {path} has no data rows")
    header = [c.strip() for c in rows[0]]
    if not header or header[0].lower() != "t":
        raise ConfigError(f"strategy file {path} must start with a 't' column")
    skip = 2 if len(header) > 1 and header[1].lower() == "y" else 1
    if len(header) <= skip:
        raise ConfigError(f"strategy file {path} has no pi columns")
    try:
        data = [[float(c) for c in row] for row in rows[1:] if row]
    except ValueError as exc:
        raise ConfigError(f"strategy file {path}: non-numeric cell: {exc}") from exc
    if any(len(row) != len(header) for row in data):
        raise ConfigError(f"strategy file {path} has ragged rows")
    t = [row[0] for row in data]
    pi = [row[skip:] for row in data]
    y = [row[1] for row in data] if skip == 2 else None
    return StrategyPayload(t=t, pi=pi, T=T, y=y)


def _write_strategy_csv(path: str, payload: dict):
    t = payload["t"]
    pi = payload["pi"]
    y = payload.get("y")
    n = len(pi[0]) if pi else 0
    header = ["t"] + (["Y"] if y is not None else []) + [f"pi_{i+1}" for i in range(n)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, ti in enumerate(t):
            row = [_FMT % ti] + ([_FMT % y[i]] if y is not None else []) \
                + [_FMT % v for v in pi[i]]
            writer.writerow(row)


def _write_curve_csv(path: str, etas, js):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eta", "J0"])
        for e, j in zip(etas, js):
            writer.writerow([_FMT % e, _FMT % j])


def _write_json(path: str, data: dict):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------------ dispatch

def _remote(server: str, route: str, body: dict) -> dict:
    import httpx

    url = server.rstrip("/") + route
    try:
        resp = httpx.post(url, json=body, timeout=600.0)
    except httpx.HTTPError as exc:
        raise ConfigError(f"server request to {url} failed: {exc}") from exc
    if resp.status_code == 400:
        raise ConfigError(resp.json().get("detail", resp.text))
    if resp.status_code == 422:
        detail = resp.json().get("detail", resp.text)
        if isinstance(detail, str):
            raise NumericsError(detail)
        raise ConfigError(f"request rejected by the server: {detail}")
    if resp.status_code >= 500:
        raise NumericsError(f"server error {resp.status_code}: {resp.text}")
    return resp.json()


def _dispatch(args, cfg: RunConfig) -> dict:
    if args.command == "verify":
        payload = read_strategy_csv(args.strategy, cfg.market.T)
    if args.server:
        body = {"config": cfg.model_dump(mode="json", by_alias=True)}
        route = "/" + args.command.replace("_", "-")
        if args.command == "solve":
            body["eta"] = args.eta
            body["maximal"] = args.maximal
        if args.command == "verify":
            body["strategy"] = payload.model_dump(mode="json")
        return _remote(args.server, route, body)

    from .service import handlers

    if args.command == "classify":
        return handlers.handle_classify(cfg).model_dump(mode="json")
    if args.command == "solve":
        return handlers.handle_solve(cfg, eta=args.eta,
                                     maximal=args.maximal).model_dump(mode="json")
    if args.command == "eta-star":
        return handlers.handle_eta_star(cfg).model_dump(mode="json")
    if args.command == "optimize":
        return handlers.handle_optimize(cfg).model_dump(mode="json")
    return handlers.handle_verify(cfg, payload).model_dump(mode="json")


# ------------------------------------------------------------------ printing

def _fmt_vec(vec) -> str:
    return "[" + ", ".join(f"{v:.8g}" for v in vec) + "]"


def _print_classify(d: dict):
    case, label = d["case"], d["label"]
    if case == "no-DSES":
        print(f"case ({label}): no DSES")
    elif case == "zero-unique":
        print(f"case ({label}): zero is the unique DSES")
    elif case == "nonzero-unique":
        print(f"case ({label}): unique nonzero DSES")
    else:
        print(f"case ({label}): family of DSESes, eta* ~= {d['eta_star']:.8g}")
    for flag in d.get("flags", []):
        print(f"  note: {flag}")
    for key, val in sorted(d.get("diagnostics", {}).items()):
        if isinstance(val, (int, float, str, bool)):
            print(f"  {key} = {val}")
    strat = d.get("strategy")
    if strat and strat["pi"]:
        print(f"  pi(0) = {_fmt_vec(strat['pi'][0])}")


def _print_solve(d: dict):
    s = d["strategy"]
    print(f"eta = {d['eta']:.12g}, terminal Y(T) = {d['terminal']:.6g}, "
          f"J(0) = {d['value0']:.12g}")
    if s["pi"]:
        print(f"pi(0) = {_fmt_vec(s['pi'][0])}  ({len(s['t'])} grid rows)")


def _print_eta_star(d: dict):
    print(f"eta* = {d['eta_star']:.12g}  (converged = {d['converged']})")
    for eps, y0 in zip(d["ladder"], d["y0_values"]):
        print(f"  eps = {eps:.1e}  ->  Y(0) = {y0:.12g}")
    if d.get("extrapolated") is not None:
        print(f"  extrapolated = {d['extrapolated']:.12g}, "
              f"decay exponent = {d['decay_exponent']:.4g}")
    if d.get("bisect") is not None:
        rel = abs(d["bisect"] - d["eta_star"]) / max(d["eta_star"], 1e-300)
        print(f"  bisection cross-check = {d['bisect']:.12g} (rel diff {rel:.2e})")


def _print_optimize(d: dict):
    print(f"eta_opt = {d['eta_opt']:.12g} of eta* = {d['eta_star']:.12g}, "
          f"J_opt = {d['j_opt']:.12g}")
    pct = ", ".join(f"{100*v:.4g}%" for v in d["pi0"])
    print(f"pi_opt(0) = {pct}  (curve: {len(d['curve_eta'])} points)")


def _print_verify(d: dict):
    verdict = "PASS" if d["passed"] else "FAIL"
    slope = "n/a" if d["max_slope"] is None else f"{d['max_slope']:.3e}"
    print(f"{verdict}: {d['n_times']} times checked, "
          f"{d['n_complete']} by the first-order condition, "
          f"max slope = {slope}")
    for note in d.get("notes", []):
        print(f"  note: {note}")
    for rec in d["failures"][:5]:
        if rec["kappa"] is None:
            if rec["slope"] > 1e306:
                print(f"  zero-strategy branch fails at t = {rec['t']:.6g} "
                      "(a spike improves)")
            else:
                print(f"  first-order condition fails at t = {rec['t']:.6g} "
                      f"(relative residual {rec['slope']:.3e})")
            continue
        print(f"  improves at t = {rec['t']:.6g}, kappa = {_fmt_vec(rec['kappa'])}, "
              f"slope = {rec['slope']:.3e}")
    extra = len(d["failures"]) - 5
    if extra > 0:
        print(f"  ... and {extra} more failures")


def _emit(args, cfg: RunConfig, data: dict):
    if args.as_json:
        print(json.dumps(data, indent=2, sort_keys=True))
    else:
        {"classify": _print_classify, "solve": _print_solve,
         "eta-star": _print_eta_star, "optimize": _print_optimize,
         "verify": _print_verify}[args.command](data)

    out = args.out or cfg.output.path
    if not out:
        return
    if args.command == "solve" and cfg.output.format == "csv":
        _write_strategy_csv(out, data["strategy"])
    elif args.command == "optimize" and cfg.output.format == "csv":
        _write_curve_csv(out, data["curve_eta"], data["curve_j"])
    else:
        _write_json(out, data)
    if not args.as_json:
        print(f"wrote {out}")


def main(argv=None) -> int:
    args = _parse_args(argv)
    try:
        cfg = load_config(args.config)
        data = _dispatch(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    _emit(args, cfg, data)
    if args.command == "verify" and not data["passed"]:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
