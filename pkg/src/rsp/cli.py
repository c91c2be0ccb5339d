"""Command-line front end.

Exit codes: 0 success, 2 parse or usage error, 3 invalid state,
4 reproduction mismatch.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .bloch import (
    PSD_TOL,
    InvalidStateError,
    TwoQubitState,
    bell_diagonal,
    dakic_state,
    dump_state,
    geometric_discord_bell_diagonal,
    is_bell_diagonal,
    is_entangled,
    load_state,
    make_frame,
    ppt_min_eigenvalue,
    require_valid,
    validate_state,
    werner,
)
from .optimizer import (
    DEFAULT_BETA_GRID,
    minimize_over_beta,
    optimal_G_over_povm,
    optimize_bistochastic_bell_diagonal,
    optimize_bistochastic_unrestricted,
    optimize_invariant,
    separable_optimal_fidelity,
)
from .oracle import SearchConfig, reflection_protocol_quadratic_min
from .protocol import (
    CPTP_TOL,
    DEFAULT_NODES,
    ChannelClass,
    average_G,
    baseline_protocol,
    quadratic_fidelity,
    random_guess_protocol,
)

EXIT_OK, EXIT_PARSE, EXIT_STATE, EXIT_MISMATCH = 0, 2, 3, 4
CLASSES = [c.value for c in ChannelClass]


class UsageError(Exception):
    pass


def fmt(x) -> str:
    return f"{float(x):.9g}"


def header(command: str, **params) -> list[str]:
    """Comment lines recording the command and every default in force."""
    settings = {"n_nodes": DEFAULT_NODES, "beta_grid": DEFAULT_BETA_GRID,
                "psd_tol": PSD_TOL, "cptp_tol": CPTP_TOL}
    settings.update(params)
    return [f"# rsp {command} " + " ".join(f"{k}={v}" for k, v in settings.items()),
            "# fidelities are dimensionless; angles in radians"]


def t2_diag(eps: float) -> tuple[float, float, float]:
    return (-1 / 3 - 2 * eps, -1 / 3 + eps / 2, -1 / 3 + eps / 2)


# ---------------------------------------------------------------------------
# State input
# ---------------------------------------------------------------------------

def _read_state(path) -> TwoQubitState:
    try:
        return load_state(path)
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None
    except (json.JSONDecodeError, ValueError, TypeError) as exc:
        raise UsageError(f"cannot parse state file {path}: {exc}") from None


def _state_from_args(args) -> TwoQubitState:
    if args.state is not None:
        state = _read_state(args.state)
    elif args.werner is not None:
        state = werner(args.werner)
    elif args.dakic is not None:
        state = dakic_state(*args.dakic)
    elif args.bell is not None:
        state = TwoQubitState(np.zeros(3), np.zeros(3), np.diag(args.bell))
    else:
        raise UsageError("one of --state, --werner, --dakic, --bell is required")
    require_valid(state)
    return state


def diagnostics(state: TwoQubitState) -> dict:
    report = validate_state(state)
    out = {"min_eigenvalue": report.min_eigenvalue, "valid": report.valid,
           "local_norms": list(report.local_norms)}
    if not report.valid:
        return out
    out["ppt_min_eigenvalue"] = ppt_min_eigenvalue(state)
    out["entangled"] = is_entangled(state)
    out["bell_diagonal"] = is_bell_diagonal(state)
    if out["bell_diagonal"]:
        out["discord"] = geometric_discord_bell_diagonal(*np.diag(state.T))
    return out


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def cmd_validate(args, out) -> int:
    state = _read_state(args.file)
    diag = diagnostics(state)
    if args.format == "json":
        json.dump(diag, out, indent=2)
        out.write("\n")
    else:
        for key, val in diag.items():
            if isinstance(val, bool):
                val = str(val).lower()
            elif isinstance(val, list):
                val = " ".join(fmt(v) for v in val)
            else:
                val = fmt(val)
            out.write(f"{key}: {val}\n")
        if diag["valid"]:
            summary = "entangled" if diag["entangled"] else "separable"
            if "discord" in diag:
                summary += f", discord {diag['discord']:.5f}"
            out.write(f"summary: {summary}\n")
    return EXIT_OK if diag["valid"] else EXIT_STATE


# ---------------------------------------------------------------------------
# optimize
# ---------------------------------------------------------------------------

def run_optimize(state, cls: ChannelClass, n_nodes: int, beta_grid: int):
    if cls is ChannelClass.INVARIANT:
        return optimize_invariant(state, n_nodes=n_nodes, beta_grid=beta_grid)
    return minimize_over_beta(state, cls, n_beta=beta_grid, n_nodes=n_nodes)


def _closed_forms(state) -> dict:
    if not is_bell_diagonal(state):
        return {}
    t = np.diag(state.T)
    return {"F_bistochastic_about_beta": optimize_bistochastic_bell_diagonal(*t),
            "F_bistochastic_unital": optimize_bistochastic_unrestricted(*t)}


def cmd_optimize(args, out) -> int:
    state = _state_from_args(args)
    cls = ChannelClass(args.decoding_class)
    res = run_optimize(state, cls, args.nodes, args.beta_grid)
    frame = make_frame(res.beta_star)
    _, sol = optimal_G_over_povm(state, frame, res.decoding, args.nodes)
    phi = frame.circle(args.nodes)[0]
    closed = _closed_forms(state)
    lines = header("optimize", n_nodes=args.nodes, beta_grid=args.beta_grid, decoding_class=cls.value)
    if args.format == "json":
        payload = {
            "command": "optimize", "settings": lines[0][2:], "class": cls.value,
            "F_star": res.F_star, "G_star": res.G_star, "beta_star": res.beta_star.tolist(),
            "decoding_params": res.decoding_params, "closed_forms": closed,
            "nodes": [{"phi": float(p), "s": s.tolist(), "omega_class": c.value, "integrand": float(v)}
                      for p, s, c, v in zip(phi, sol.nodes, sol.classes, sol.integrand)],
        }
        text = json.dumps(payload, indent=2) + "\n"
    else:
        buf = io.StringIO()
        buf.write("\n".join(lines) + "\n")
        buf.write(f"# class={cls.value} F_star={fmt(res.F_star)} G_star={fmt(res.G_star)} "
                  f"beta_star={' '.join(fmt(b) for b in res.beta_star)}\n")
        for key, val in closed.items():
            buf.write(f"# {key}={fmt(val)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node", "phi_rad", "s_x", "s_y", "s_z", "omega_class", "integrand"])
        for k, (p, s, c, v) in enumerate(zip(phi, sol.nodes, sol.classes, sol.integrand)):
            w.writerow([k, fmt(p), *(fmt(x) for x in s), c.value, fmt(v)])
        text = buf.getvalue()
    if args.out:
        Path(args.out).write_text(text)
        out.write(f"class={cls.value} F_star={fmt(res.F_star)} "
                  f"beta_star={' '.join(fmt(b) for b in res.beta_star)} -> {args.out}\n")
    else:
        out.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# reproduce
# ---------------------------------------------------------------------------

class _Checks:
    def __init__(self):
        self.failures = []

    def check(self, name, got, expected, tol):
        ok = abs(got - expected) <= tol
        if not ok:
            self.failures.append(f"{name}: got {fmt(got)}, expected {fmt(expected)}, "
                                 f"diff {abs(got - expected):.3e} > tol {tol:g}")
        return ok

    def require(self, name, ok, detail=""):
        if not ok:
            self.failures.append(f"{name}: {detail}")
        return ok


def _write_table(path: Path, lines, columns, rows):
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def table_baseline(n_nodes, checks):
    frame = make_frame([0.0, 0.0, 1.0])
    F_closed = separable_optimal_fidelity()
    strat, pair = baseline_protocol(frame)
    F_proto = 0.5 * (1.0 + average_G(werner(0.0), frame, strat, pair, n_nodes))
    checks.check("a/closed_form", F_closed, 0.5 * (1 + 2 / math.pi), 1e-9)
    checks.check("a/protocol", F_proto, F_closed, 1e-6)
    return ["quantity", "F"], [["closed_form", F_closed], ["protocol_quadrature", F_proto]]


def table_invariant(n_nodes, beta_grid, checks):
    rows = []
    cases = [("werner", 0.1, 0.0), ("werner", 0.2, 0.0), ("entangled", 0.2, 0.4), ("werner", 1 / 3, 0.0)]
    values = {}
    for name, lam, t in cases:
        state = dakic_state(lam, t)
        F = optimize_invariant(state, n_nodes=n_nodes, beta_grid=beta_grid).F_star
        expected = 0.5 * (1 + lam)
        checks.check(f"b/{name} lambda={lam:.4g} t={t:g}", F, expected, 1e-5)
        flag = "entangled" if is_entangled(state) else "separable"
        values[(lam, t)] = F
        rows.append([name, lam, t, flag, F, expected])
    checks.require("b/separable beats entangled", values[(1 / 3, 0.0)] > values[(0.2, 0.4)],
                   f"{fmt(values[(1 / 3, 0.0)])} <= {fmt(values[(0.2, 0.4)])}")
    return ["state", "lambda", "t", "separability", "F_invariant", "F_expected"], rows


def table_bistochastic(checks):
    rows = []
    F1 = optimize_bistochastic_bell_diagonal(-1 / 3, -1 / 3, -1 / 3)
    checks.check("c/T1", F1, 2 / 3, 1e-9)
    for eps in (0.01, 0.04, 0.1):
        t2 = t2_diag(eps)
        F2 = optimize_bistochastic_bell_diagonal(*t2)
        checks.check(f"c/T2 eps={eps:g}", F2, 2 / 3 - eps / 4, 1e-9)
        st = bell_diagonal(*t2)
        rows.append([eps, F1, F2, 2 / 3 - eps / 4, "entangled" if is_entangled(st) else "separable",
                     optimize_bistochastic_unrestricted(-1 / 3, -1 / 3, -1 / 3),
                     optimize_bistochastic_unrestricted(*t2)])
    cols = ["eps", "F_T1_about_beta", "F_T2_about_beta", "F_T2_expected", "T2_separability",
            "F_T1_unital", "F_T2_unital"]
    return cols, rows


def table_quadratic(checks):
    frame = make_frame([0.0, 0.0, 1.0])
    strat, pair = random_guess_protocol(frame)
    state = werner(1 / 3)
    P = quadratic_fidelity(state, frame, strat, pair)
    F = 0.5 * (1 + average_G(state, frame, strat, pair))
    checks.check("d/random guess quadratic", P, 0.5, 1e-9)
    checks.check("d/random guess linear", F, 0.5, 1e-9)
    rows = [["random_guess", "any", P, F, "asserted"]]
    for label, st in (("werner lambda=1/3", werner(1 / 3)), ("entangled lambda=1/5 t=2/5", dakic_state(0.2, 0.4))):
        P_ref, _ = reflection_protocol_quadratic_min(st, SearchConfig())
        rows.append(["reflection_class", label, P_ref, "", "reported"])
    return ["protocol", "state", "P_quadratic", "F_linear", "status"], rows


def cmd_reproduce(args, out) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    checks = _Checks()
    lines = header("reproduce", n_nodes=args.nodes, beta_grid=args.beta_grid)
    tables = {
        "a_baseline.csv": table_baseline(args.nodes, checks),
        "b_invariant.csv": table_invariant(args.nodes, args.beta_grid, checks),
        "c_bistochastic.csv": table_bistochastic(checks),
        "d_quadratic.csv": table_quadratic(checks),
    }
    for name, (cols, rows) in tables.items():
        _write_table(outdir / name, lines, cols, rows)
        out.write(f"wrote {outdir / name} ({len(rows)} rows)\n")
    if checks.failures:
        out.write("reproduction mismatch:\n")
        for f in checks.failures:
            out.write(f"  {f}\n")
        return EXIT_MISMATCH
    out.write("all reproduction checks passed\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _sweep_state(param, value, args) -> TwoQubitState:
    if param == "lambda":
        return dakic_state(value, args.t)
    if param == "t":
        return dakic_state(args.lam, value)
    return TwoQubitState(np.zeros(3), np.zeros(3), np.diag(t2_diag(value)))


def cmd_sweep(args, out) -> int:
    if args.steps < 0 or not (math.isfinite(args.start) and math.isfinite(args.stop)):
        raise UsageError("invalid range")
    values = np.linspace(args.start, args.stop, args.steps) if args.steps else np.array([])
    classes = [ChannelClass(c) for c in (args.decoding_class or ["invariant"])]
    cols = [args.param]
    for c in classes:
        cols.append(f"F_{c.value}")
        if c is ChannelClass.BISTOCHASTIC:
            cols.append("F_bistochastic_about_beta")
    rows = []
    states = [_sweep_state(args.param, v, args) for v in values]
    for st in states:
        require_valid(st)
    if args.dump_states:
        Path(args.dump_states).mkdir(parents=True, exist_ok=True)
        for k, st in enumerate(states):
            dump_state(st, Path(args.dump_states) / f"state_{k:03d}.json")
    for v, st in zip(values, states):
        row = [v]
        for c in classes:
            row.append(run_optimize(st, c, args.nodes, args.beta_grid).F_star)
            if c is ChannelClass.BISTOCHASTIC:
                row.append(_closed_forms(st).get("F_bistochastic_about_beta", ""))
        rows.append(row)
    buf = io.StringIO()
    buf.write("\n".join(header("sweep", n_nodes=args.nodes, beta_grid=args.beta_grid,
                               param=args.param)) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        out.write(buf.getvalue())
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _positive_int(text):
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rsp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a JSON state file")
    v.add_argument("file")
    v.add_argument("--format", choices=["text", "json"], default="text")

    o = sub.add_parser("optimize", help="best protocol in a decoding class, worst plane")
    o.add_argument("--class", dest="decoding_class", choices=CLASSES, required=True)
    src = o.add_mutually_exclusive_group()
    src.add_argument("--state", metavar="FILE")
    src.add_argument("--werner", type=float, metavar="LAMBDA")
    src.add_argument("--dakic", type=float, nargs=2, metavar=("LAMBDA", "T"))
    src.add_argument("--bell", type=float, nargs=3, metavar=("T1", "T2", "T3"))
    o.add_argument("--nodes", type=_positive_int, default=DEFAULT_NODES)
    o.add_argument("--beta-grid", type=int, default=DEFAULT_BETA_GRID)
    o.add_argument("--out")
    o.add_argument("--format", choices=["csv", "json"], default="csv")

    r = sub.add_parser("reproduce", help="write and cross-check the reproduction tables")
    r.add_argument("--out", default="reproduction")
    r.add_argument("--nodes", type=_positive_int, default=DEFAULT_NODES)
    r.add_argument("--beta-grid", type=int, default=DEFAULT_BETA_GRID)

    s = sub.add_parser("sweep", help="fidelity along a one-parameter state family")
    s.add_argument("--param", choices=["lambda", "t", "eps"], required=True)
    s.add_argument("--from", dest="start", type=float, required=True)
    s.add_argument("--to", dest="stop", type=float, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--class", dest="decoding_class", choices=CLASSES, action="append")
    s.add_argument("--lam", type=float, default=0.2, help="lambda held fixed in a t sweep")
    s.add_argument("--t", type=float, default=0.0, help="t held fixed in a lambda sweep")
    s.add_argument("--nodes", type=_positive_int, default=DEFAULT_NODES)
    s.add_argument("--beta-grid", type=int, default=DEFAULT_BETA_GRID)
    s.add_argument("--out")
    s.add_argument("--dump-states", metavar="DIR")
    return p


COMMANDS = {"validate": cmd_validate, "optimize": cmd_optimize,
            "reproduce": cmd_reproduce, "sweep": cmd_sweep}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "beta_grid", 32) < 32:
        print("rsp: --beta-grid must be at least 32", file=sys.stderr)
        return EXIT_PARSE
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"rsp: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InvalidStateError as exc:
        print(f"rsp: invalid state: {exc}", file=sys.stderr)
        return EXIT_STATE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
