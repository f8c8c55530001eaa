"""``qmaxent`` command line: inference, Bell sweeps, phase data, identity checks.

Every command writes a CSV with a single header row; reals are written with
``repr`` (shortest round-trip form), so identical inputs give byte-identical
files.  Options may also come from an INI file (``--config``): keys in the
``[qmaxent]`` section apply to every command, keys in a section named after
the command override them, and command-line flags override both.

Exit codes: 0 success, 1 usage or input error, 2 infeasible / not converged
(for ``thermo``: any identity check outside tolerance).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import sys
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from . import __version__
from .bell import (chsh_observable, critical_b, fake_entanglement_interval, solve_bell,
                   solve_bell_alpha)
from .density import MatrixFormatError, read_matrix
from .functionals import make_builtin, parse_functional
from .solver import ConstraintSet, SolverError, SolverOptions, solve
from .thermo import thermo_checks

EXIT_OK, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2

DEFAULTS: Dict[str, object] = {
    "functional": "shannon",
    "tol": 1e-10,
    "max_iter": 200,
    "out": "-",
    "seed": 0,
    "b_range": "0:1:0.01",
    "alpha": 1.0,
    "family": "tsallis",
    "q_range": "1.5:10:0.5",
    "observables": None,
    "targets": None,
    "trace": None,
    "b": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# formatting helpers


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    if path == "-":
        sys.stdout.write(buf.getvalue())
    else:
        with open(path, "w", newline="") as fh:
            fh.write(buf.getvalue())


def parse_range(text: str, name: str) -> List[float]:
    """``lo:hi:step`` -> [lo, lo+step, ..., <= hi], rounded to 12 decimals."""
    try:
        lo, hi, step = (float(t) for t in text.split(":"))
    except ValueError:
        raise UsageError(f"--{name} expects lo:hi:step, got {text!r}") from None
    if not step > 0:
        raise UsageError(f"--{name}: step must be positive, got {step!r}")
    if hi < lo:
        raise UsageError(f"--{name}: empty range {text!r}")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + k * step, 12) for k in range(count)]


def parse_targets(values: Sequence[str]) -> List[float]:
    out = []
    for v in values:
        for tok in str(v).replace(",", " ").split():
            try:
                out.append(float(tok))
            except ValueError:
                raise UsageError(f"cannot parse target {tok!r}") from None
    return out


# --------------------------------------------------------------------------
# configuration


def _config_values(path: Optional[str], command: str) -> Dict[str, str]:
    if not path:
        return {}
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    values: Dict[str, str] = {}
    for section in ("qmaxent", command):
        if cp.has_section(section):
            for key, val in cp.items(section):
                values[key.replace("-", "_")] = val
    unknown = sorted(set(values) - set(DEFAULTS))
    if unknown:
        raise UsageError(f"{path}: unknown config keys {unknown}")
    return values


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Merge defaults < config file < flags into one namespace."""
    config = _config_values(args.config, args.command)
    merged = {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
        elif key in config:
            raw = config[key]
            merged[key] = raw.split() if key in ("observables", "targets") else raw
        else:
            merged[key] = default
    try:
        merged["tol"] = float(merged["tol"])
        merged["max_iter"] = int(merged["max_iter"])
        merged["seed"] = int(merged["seed"])
        merged["alpha"] = float(merged["alpha"])
        if merged["b"] is not None:
            merged["b"] = float(merged["b"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not merged["tol"] > 0 or merged["max_iter"] < 1:
        raise UsageError("--tol must be positive and --max-iter at least 1")
    merged["command"] = args.command
    return argparse.Namespace(**merged)


def _functional(cfg):
    try:
        return parse_functional(cfg.functional)
    except ValueError as exc:
        raise UsageError(f"bad functional {cfg.functional!r}: {exc}") from None


def _options(cfg) -> SolverOptions:
    return SolverOptions(tol=cfg.tol, max_iter=cfg.max_iter)


def _constraints(cfg) -> ConstraintSet:
    if cfg.b is not None and not cfg.observables:
        return ConstraintSet.with_identity([chsh_observable()], [cfg.b])
    if not cfg.observables:
        raise UsageError("--observables (or --b for the Bell problem) is required")
    if cfg.targets is None:
        raise UsageError("--targets is required with --observables")
    targets = parse_targets(cfg.targets)
    if len(targets) != len(cfg.observables):
        raise UsageError(f"{len(cfg.observables)} observables but {len(targets)} targets")
    mats = [read_matrix(p) for p in cfg.observables]
    dims = {M.shape[0] for M in mats}
    if len(dims) != 1:
        raise UsageError(f"observables have mismatched dimensions {sorted(dims)}")
    return ConstraintSet.with_identity(mats, targets)


def _write_trace(cfg, trace) -> None:
    if cfg.trace:
        write_csv(cfg.trace, ["iteration", "dual_value", "residual_norm", "step_length"],
                  [tuple(r) for r in trace])


# --------------------------------------------------------------------------
# commands


def cmd_infer(cfg) -> int:
    fn = _functional(cfg)
    cs = _constraints(cfg)
    try:
        sol = solve(cs, fn, _options(cfg))
    except SolverError as exc:
        if exc.solution is not None:
            _write_trace(cfg, exc.solution.trace)
        print(f"qmaxent: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _write_trace(cfg, sol.trace)
    rows = [("eigenvalue", i, "", p) for i, p in enumerate(sol.rho.spectrum)]
    rows += [("lambda", a, "", v) for a, v in enumerate(sol.lambda_)]
    rows += [("entropy", "", "", sol.entropy), ("dual_value", "", "", sol.dual_value)]
    rows += [("residual", a, "", v) for a, v in enumerate(sol.residuals)]
    A = sol.curvature.A
    rows += [("curvature", a, c, A[a, c]) for a in range(A.shape[0]) for c in range(A.shape[1])]
    rows += [("iterations", "", "", sol.iterations)]
    write_csv(cfg.out, ["quantity", "i", "j", "value"], rows)
    return EXIT_OK


BELL_HEADER = ["b", "p_plus", "p_minus", "p_zero", "lambda0", "lambda1", "S_f",
               "regime", "concurrence", "fake"]


def cmd_bell(cfg) -> int:
    fn = _functional(cfg)
    grid = parse_range(cfg.b_range, "b-range")
    lo, hi = (-1.0, 1.0) if cfg.alpha == 1.0 else (0.0, 1.0)
    if cfg.alpha < 0:
        raise UsageError("--alpha must be non-negative")
    if grid[0] < lo or grid[-1] > hi:
        raise UsageError(f"--b-range must lie within [{lo}, {hi}] for alpha={cfg.alpha}")
    rows = []
    for b in grid:
        try:
            if cfg.alpha == 1.0:
                r = solve_bell(b, fn)
            else:
                r = solve_bell_alpha(b, cfg.alpha, fn, _options(cfg))
        except SolverError as exc:
            print(f"qmaxent: b={b!r}: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_SOLVER
        s = r.state
        rows.append((b, s.p_plus, s.p_minus, s.p_zero, r.lambda0, r.lambda1, r.entropy,
                     r.regime.value, r.concurrence, r.fake))
    write_csv(cfg.out, BELL_HEADER, rows)
    return EXIT_OK


def cmd_phase(cfg) -> int:
    family = str(cfg.family).strip().lower()
    if family not in ("tsallis", "exponential"):
        raise UsageError(f"--family must be tsallis or exponential, got {cfg.family!r}")
    rows = []
    for q in parse_range(cfg.q_range, "q-range"):
        try:
            fn = make_builtin(family, q=q)
        except ValueError as exc:
            raise UsageError(f"q={q!r}: {exc}") from None
        interval = fake_entanglement_interval(fn)
        lo_hi = interval if interval is not None else (None, None)
        rows.append((q, critical_b(fn)) + tuple(lo_hi))
    write_csv(cfg.out, ["q", "b_c", "fake_lo", "fake_hi"], rows)
    return EXIT_OK


def cmd_thermo(cfg) -> int:
    fn = _functional(cfg)
    cs = _constraints(cfg)
    try:
        report = thermo_checks(cs, fn, _options(cfg), seed=cfg.seed)
    except SolverError as exc:
        print(f"qmaxent: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _write_trace(cfg, report.solution.trace)
    rows = [(c.name, "", "", c.deviation, c.tolerance, "pass" if c.passed else "fail")
            for c in report.checks]
    H = report.sensitivities
    rows += [("sensitivity", a, c, H[a, c], "", "")
             for a in range(H.shape[0]) for c in range(H.shape[1])]
    write_csv(cfg.out, ["item", "i", "j", "value", "tolerance", "status"], rows)
    return EXIT_OK if report.passed else EXIT_SOLVER


COMMANDS = {"infer": cmd_infer, "bell": cmd_bell, "phase": cmd_phase, "thermo": cmd_thermo}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qmaxent", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def shared(p):
        p.add_argument("--functional", help="shannon | tsallis:q=<v> | exponential:q=<v> [,k=<v>]")
        p.add_argument("--tol", help="solver residual tolerance (default 1e-10)")
        p.add_argument("--max-iter", dest="max_iter", help="Newton iteration cap (default 200)")
        p.add_argument("--out", help="output CSV path, '-' for stdout (default)")
        p.add_argument("--config", help="INI file with option defaults")
        p.add_argument("--seed", help="seed for randomized probes (default 0)")

    def problem(p):
        p.add_argument("--observables", nargs="+", metavar="FILE",
                       help="observable matrices (identity is added automatically)")
        p.add_argument("--targets", nargs="+", metavar="T", help="target expectation values")
        p.add_argument("--trace", metavar="FILE", help="write the solver trace CSV here")

    p = sub.add_parser("infer", help="solve one max-entropy inference")
    shared(p)
    problem(p)
    p = sub.add_parser("bell", help="sweep the Bell-constraint solution over b")
    shared(p)
    p.add_argument("--b-range", dest="b_range", help="lo:hi:step (default 0:1:0.01); use --b-range=-1:0:0.1 for a negative lo")
    p.add_argument("--alpha", help="weight of |Psi-> in B_alpha (default 1)")
    p = sub.add_parser("phase", help="critical field and fake-entanglement interval over q")
    shared(p)
    p.add_argument("--family", help="tsallis | exponential")
    p.add_argument("--q-range", dest="q_range", help="lo:hi:step; use --q-range=-4:4:1 for a negative lo")
    p = sub.add_parser("thermo", help="finite-difference checks of the dual identities")
    shared(p)
    problem(p)
    p.add_argument("--b", help="use the Bell problem <B> = b instead of --observables")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        return COMMANDS[cfg.command](cfg)
    except (UsageError, MatrixFormatError, OSError, ValueError) as exc:
        print(f"qmaxent: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
