"""Command-line interface: ``gen``, ``test``, ``power``, ``screen``, ``kappa``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.
Any flag may also come from ``--config FILE`` holding ``key = value``
lines (``#`` starts a comment); flags given on the command line win.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import baselines
from .core_stats import Dataset, RngStream
from .dpm_engine import Hyperparams
from .errors import (BnpDepError, ChainAbort, ContractViolation, DataError,
                     NotSpd, RetryableNumericalError)
from .rjmcmc import ChainConfig, dpm_test
from .screening import (ALL_METHODS, ScreenConfig, cohens_kappa,
                        pairwise_screen, power_study)
from .simgen import SCENARIOS, generate

log = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# formatting and I/O
# ---------------------------------------------------------------------------

def fmt(x) -> str:
    """17 significant digits, so printed values round-trip exactly."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def _json_value(x):
    if isinstance(x, dict):
        return {k: _json_value(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_value(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        # JSON has no infinities; keep the value readable and explicit
        return fmt(x) if not math.isfinite(x) else float(fmt(x))
    return x


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Header and numeric body of a CSV file; malformed input raises
    :class:`DataError` naming the offending row and column."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    rows = list(csv.reader(text.splitlines()))
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    out = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i + 2} has {len(row)} cells, "
                            f"header has {len(header)}")
        for j, cell in enumerate(row):
            try:
                out[i, j] = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {i + 2}, column {j + 1} "
                                f"({header[j]!r}): non-numeric cell {cell!r}") from None
            if not math.isfinite(out[i, j]):
                raise DataError(f"{path}: row {i + 2}, column {j + 1} "
                                f"({header[j]!r}): non-finite value {cell!r}")
    return header, out


def read_csv(path, cols: Optional[Sequence[int]] = None) -> Dataset:
    """Two columns of a CSV file as a Dataset (the first two by default;
    ``cols`` holds 0-based indices)."""
    header, values = read_table(path)
    cols = tuple(cols) if cols is not None else (0, 1)
    if len(cols) != 2 or len(set(cols)) != 2:
        raise ContractViolation("--cols needs two distinct column indices")
    for c in cols:
        if not 0 <= c < values.shape[1]:
            raise DataError(f"{path}: column index {c} out of range "
                            f"(file has {values.shape[1]} columns)")
    return Dataset(values[:, list(cols)])


def write_csv(path, header: Sequence[str], rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(fmt(v) if not isinstance(v, str) else v for v in r)
              for r in rows]
    _write(path, "\n".join(lines) + "\n")


def write_report(report: dict, path=None) -> None:
    _write(path, json.dumps(_json_value(report), indent=2) + "\n")


def _write(path, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# argument resolution
# ---------------------------------------------------------------------------

def _method(name: str) -> str:
    key = name.strip().upper()
    if key not in ALL_METHODS:
        raise UsageError(f"unknown method {name!r}; expected one of "
                         f"{', '.join(m.lower() for m in ALL_METHODS)}")
    return key


def _scenario(name: str) -> str:
    for s in SCENARIOS:
        if s.lower() == name.strip().lower():
            return s
    raise UsageError(f"unknown scenario {name!r}; expected one of "
                     f"{', '.join(s.lower() for s in SCENARIOS)}")


def _list(text: str, all_values, conv) -> list:
    if text.strip().lower() == "all":
        return list(all_values)
    return [conv(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _chain(args) -> ChainConfig:
    return ChainConfig(iterations=args.iters, burn_in=args.burnin)


def _hp_overrides(args) -> dict:
    out = {}
    if args.a is not None:
        out["a"] = args.a
    if args.b is not None:
        out["b"] = args.b
    return out


def _add_common(p, chain=True, perms=300):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--permutations", type=int, default=perms)
    if chain:
        p.add_argument("--iters", type=int, default=2000)
        p.add_argument("--burnin", type=int, default=500)
        p.add_argument("--a", type=float, default=None)
        p.add_argument("--b", type=float, default=None)
    p.add_argument("--config", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bnpdep", description="Independence testing toolkit")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("gen", help="simulate a dataset")
    p.add_argument("--scenario", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)

    p = sub.add_parser("test", help="test one pair of columns")
    p.add_argument("--method", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--cols", default=None,
                   help="two 0-based column indices, e.g. 0,2")
    _add_common(p)

    p = sub.add_parser("power", help="run a power study")
    p.add_argument("--scenarios", default="all")
    p.add_argument("--methods", default="all")
    p.add_argument("--n", default="100")
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--dpm-replicates", type=int, default=None)
    _add_common(p, perms=100)

    p = sub.add_parser("screen", help="screen all column pairs of a matrix")
    p.add_argument("--method", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--fdr", type=float, default=0.05)
    _add_common(p)

    p = sub.add_parser("kappa", help="agreement of two decision files")
    p.add_argument("--a", required=True, dest="file_a")
    p.add_argument("--b", required=True, dest="file_b")
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    return parser


def read_config(path) -> list[str]:
    """``key = value`` lines as command-line tokens."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc.strerror or exc}") from None
    tokens = []
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}, line {num}: expected 'key = value'")
        key = key.strip().replace("_", "-")
        if key == "config":
            raise UsageError(f"{path}, line {num}: nested config files are not supported")
        tokens += [f"--{key}", value.strip()]
    return tokens


def _config_path(argv: list[str]) -> Optional[str]:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    argv = list(argv)
    parser = build_parser()
    path = _config_path(argv)
    if path is not None and argv and not argv[0].startswith("-"):
        # file tokens first so the command line overrides them
        argv = argv[:1] + read_config(path) + argv[1:]
    return parser.parse_args(argv)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> None:
    data = generate(_scenario(args.scenario), args.n, RngStream(args.seed))
    write_csv(args.out, ["x1", "x2"], data.values)


def _effective(args, **extra) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("config",)}
    cfg.update(extra)
    return cfg


def cmd_test(args) -> None:
    method = _method(args.method)
    cols = None
    if args.cols is not None:
        cols = _ints(args.cols)
    data = read_csv(args.input, cols)
    stream = RngStream(args.seed)
    if method == "DPM":
        hp = Hyperparams.for_n(data.n, **_hp_overrides(args))
        res = dpm_test(data, hp, _chain(args), args.permutations, args.alpha,
                       stream, args.workers)
        report = {"method": method, "statistic": res.statistic,
                  "bayes_factor": res.statistic, "threshold": res.threshold,
                  "posterior_h1": res.posterior_h1, "reject": res.reject,
                  "n_permutations": res.n_permutations, "seed": args.seed,
                  "config": _effective(args, method=method, a=hp.a, b=hp.b,
                                       K=hp.K, cols=list(cols or (0, 1)))}
    else:
        res = baselines.run_baseline(method, data.x1, data.x2, args.alpha,
                                     args.permutations, stream)
        report = {"method": method, "statistic": res.statistic,
                  "p_value": res.p_value, "reject": res.reject,
                  "n_permutations": res.n_permutations, "seed": args.seed,
                  "config": {k: v for k, v in _effective(
                      args, method=method, cols=list(cols or (0, 1))).items()
                      if k not in ("iters", "burnin", "a", "b")}}
    write_report(report, args.out)


def cmd_power(args) -> None:
    scenarios = _list(args.scenarios, SCENARIOS, _scenario)
    methods = _list(args.methods, ALL_METHODS, _method)
    n_values = _ints(args.n)
    over = {"DPM": args.dpm_replicates} if args.dpm_replicates else None
    table = power_study(scenarios, methods, n_values, args.replicates,
                        args.alpha, RngStream(args.seed), args.permutations,
                        _chain(args), over, workers=args.workers,
                        hp_overrides=_hp_overrides(args))
    rows = []
    for r, (s, n) in enumerate(table.rows):
        for c, m in enumerate(table.columns):
            rows.append([s, n, m, table.replicates[c], table.rejections[r, c],
                         table.cells[r, c], bool(table.significant[r, c])])
    write_csv(args.out, ["scenario", "n", "method", "replicates", "rejections",
                         "power", "significant"], rows)


def cmd_screen(args) -> None:
    method = _method(args.method)
    header, values = read_table(args.input)
    hp = Hyperparams.for_n(values.shape[0], **_hp_overrides(args)) \
        if method == "DPM" else None
    config = ScreenConfig(args.alpha, args.fdr, args.permutations,
                          _chain(args), hp, args.workers)
    report = pairwise_screen(values, method, config, RngStream(args.seed))
    rows = []
    for p in report.pairs:
        r = p.result
        rows.append([p.i, p.j, header[p.i], header[p.j],
                     None if r is None else r.statistic,
                     None if r is None else r.p_value,
                     None if r is None else r.posterior_h1,
                     False if r is None else r.reject,
                     "" if p.error is None else p.error.replace(",", ";")])
    write_csv(args.out, ["i", "j", "name_i", "name_j", "statistic", "p_value",
                         "posterior_h1", "reject", "error"], rows)
    log.info("screen finished in %.1f s with %d rejections",
             report.runtime, len(report.rejected))


_TRUE = {"1", "true", "t", "yes", "reject"}
_FALSE = {"0", "false", "f", "no", "accept", ""}


def read_decisions(path) -> list[bool]:
    """Decisions from the ``reject`` column of a CSV file, or from its only
    column if there is no such header."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    rows = [r for r in csv.reader(text.splitlines()) if r]
    if len(rows) < 2:
        raise DataError(f"{path}: need a header and at least one decision")
    header = [h.strip().lower() for h in rows[0]]
    if "reject" in header:
        col = header.index("reject")
    elif len(header) == 1:
        col = 0
    else:
        raise DataError(f"{path}: no 'reject' column")
    out = []
    for i, row in enumerate(rows[1:]):
        if col >= len(row):
            raise DataError(f"{path}: row {i + 2} has no column {col + 1}")
        v = row[col].strip().lower()
        if v in _TRUE:
            out.append(True)
        elif v in _FALSE:
            out.append(False)
        else:
            raise DataError(f"{path}: row {i + 2}, column {col + 1}: "
                            f"not a decision: {row[col]!r}")
    return out


def cmd_kappa(args) -> None:
    a = read_decisions(args.file_a)
    b = read_decisions(args.file_b)
    if len(a) != len(b):
        raise DataError(f"decision files differ in length ({len(a)} vs {len(b)})")
    k = cohens_kappa(a, b)
    write_report({"kappa": k, "n": len(a),
                  "agreement": float(np.mean(np.equal(a, b))),
                  "rate_a": float(np.mean(a)), "rate_b": float(np.mean(b))},
                 args.out)


COMMANDS = {"gen": cmd_gen, "test": cmd_test, "power": cmd_power,
            "screen": cmd_screen, "kappa": cmd_kappa}


def dispatch(argv: Sequence[str]) -> int:
    """Run one command; returns the process exit code."""
    try:
        args = parse_args(argv)
        if getattr(args, "workers", 1) < 1:
            raise UsageError("--workers must be >= 1")
        COMMANDS[args.command](args)
        return EXIT_OK
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        build_parser().print_usage(sys.stderr)
        return EXIT_USAGE
    except (ChainAbort, RetryableNumericalError, NotSpd) as exc:
        sys.stderr.write(f"numerical abort: {exc}\n")
        return EXIT_NUMERIC
    except DataError as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return EXIT_DATA
    except ContractViolation as exc:
        sys.stderr.write(f"invalid argument: {exc}\n")
        return EXIT_USAGE
    except BnpDepError as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return EXIT_DATA


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
