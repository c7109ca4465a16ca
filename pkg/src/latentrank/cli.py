"""Command-line front end.

``latentrank test`` reads a headered CSV, runs one of the three latent-normal
rank tests and prints a JSON document; ``latentrank simulate`` runs a
simulation grid and writes a CSV table.

Exit codes: 0 success, 2 input file missing, 3 malformed CSV / columns / flags,
4 the data violate a sampler precondition (e.g. too few pairs, constant data).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigurationError, LatentRankError
from .inference import TestResult, rank_sum_test, signed_rank_test, spearman_test
from .samplers import DEFAULT_CAUCHY_SCALE, ChainConfig, PriorSpec
from .simgen import COPULAS, FAMILIES, SCENARIOS, SimulationGridSpec, grid_to_csv, run_grid

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_MISSING, EXIT_MALFORMED, EXIT_PRECONDITION = 0, 2, 3, 4


class InputError(Exception):
    """Malformed input; carries a message that names the offending line."""


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


class Table:
    def __init__(self, header: list[str], rows: list[list[str]], first_line: int = 2):
        self.header = header
        self.rows = rows
        self.first_line = first_line

    @classmethod
    def read(cls, text: str) -> "Table":
        reader = csv.reader(text.splitlines())
        try:
            header = next(reader)
        except StopIteration:
            raise InputError("line 1: the file is empty") from None
        header = [h.strip() for h in header]
        if not any(header):
            raise InputError("line 1: empty header")
        if len(set(header)) != len(header):
            raise InputError("line 1: duplicate column names")
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                rows.append(None)
                continue
            if len(row) != len(header):
                raise InputError(f"line {line}: expected {len(header)} fields, found {len(row)}")
            rows.append(row)
        return cls(header, rows)

    def _index(self, name: str) -> int:
        try:
            return self.header.index(name)
        except ValueError:
            raise InputError(f"line 1: no column named {name!r} "
                             f"(available: {', '.join(self.header)})") from None

    def numeric(self, name: str, allow_blank: bool = False) -> np.ndarray:
        j = self._index(name)
        out = []
        for k, row in enumerate(self.rows):
            if row is None:
                continue
            cell = row[j].strip()
            if not cell:
                if allow_blank:
                    continue
                raise InputError(f"line {self.first_line + k}: column {name!r} is empty")
            try:
                v = float(cell)
            except ValueError:
                raise InputError(f"line {self.first_line + k}: column {name!r} holds "
                                 f"non-numeric value {cell!r}") from None
            if not math.isfinite(v):
                raise InputError(f"line {self.first_line + k}: column {name!r} is not finite")
            out.append(v)
        return np.asarray(out, dtype=float)

    def grouped(self, value: str, group: str, x_level: str | None):
        jv, jg = self._index(value), self._index(group)
        levels: dict[str, list[float]] = {}
        for k, row in enumerate(self.rows):
            if row is None:
                continue
            g = row[jg].strip()
            cell = row[jv].strip()
            try:
                v = float(cell)
            except ValueError:
                raise InputError(f"line {self.first_line + k}: column {value!r} holds "
                                 f"non-numeric value {cell!r}") from None
            if not math.isfinite(v):
                raise InputError(f"line {self.first_line + k}: column {value!r} is not finite")
            levels.setdefault(g, []).append(v)
        if len(levels) != 2:
            raise InputError(f"column {group!r} must have exactly 2 levels, found {len(levels)}")
        names = sorted(levels)
        if x_level is not None:
            if x_level not in levels:
                raise InputError(f"level {x_level!r} not found in column {group!r}")
            names = [x_level] + [n for n in names if n != x_level]
        return (np.asarray(levels[names[0]]), np.asarray(levels[names[1]]), names)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _num(v):
    if v is None:
        return None
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return int(v)
    v = float(v)
    return v if math.isfinite(v) else None


def _summary_dict(s) -> dict:
    return {"median": _num(s.median), "ci_lower": _num(s.ci_lower), "ci_upper": _num(s.ci_upper),
            "ess": _num(s.ess), "rhat": _num(s.rhat), "n_samples": s.n_samples}


def result_to_dict(result: TestResult, inputs: dict) -> dict:
    bf = result.bayes_factor
    doc = {
        "schema_version": SCHEMA_VERSION,
        "test": result.test,
        "input": inputs,
        "n": result.n,
        "observed": {k: _num(v) for k, v in result.observed.items()},
        "bayes_factor": {
            "null_value": 0.0,
            "parameter": result.parameter,
            "bf10": _num(bf.bf10),
            "bf01": _num(bf.bf01),
            "log_bf10": _num(bf.log_bf10),
            "prior_ordinate": _num(bf.prior_ordinate),
            "posterior_ordinate": _num(bf.posterior_ordinate),
            "method": bf.method,
        },
        "posterior": {"parameter": result.parameter, **_summary_dict(result.summary)},
    }
    if result.summary_rho_s is not None:
        doc["posterior_rho_s"] = {"parameter": "rho_s", **_summary_dict(result.summary_rho_s)}
    doc["diagnostics"] = {
        "ess": _num(result.summary.ess),
        "rhat": _num(result.summary.rhat),
        "acceptance_rate": _num(result.acceptance_rate),
        "warnings": list(result.warnings or []),
    }
    doc["prior"] = {"kind": result.prior.kind,
                    "cauchy_scale": _num(result.prior.cauchy_scale)
                    if result.prior.kind == "cauchy" else None}
    doc["config"] = asdict(result.config)
    doc["provenance"] = {"seed": result.config.seed, "version": __version__}
    return doc


def plot_grid_csv(result: TestResult, points: int) -> str:
    value, prior_d, post_d = result.density_grid(points)
    lines = ["value,prior_density,posterior_density"]
    lines += [f"{v!r},{p!r},{q!r}" for v, p, q in zip(value.tolist(), prior_d.tolist(),
                                                       post_d.tolist())]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _config(args) -> ChainConfig:
    return ChainConfig(iterations=args.iterations, burnin=args.burnin, chains=args.chains,
                       thin=args.thin, seed=args.seed)


def _select(args, table: Table):
    """Return the data arrays for the requested test plus a description of the columns."""
    t = args.test
    if t == "ranksum":
        if args.value and args.group:
            if args.x or args.y:
                raise InputError("use either --value/--group or --x/--y, not both")
            x, y, names = table.grouped(args.value, args.group, args.x_level)
            return (x, y), {"value": args.value, "group": args.group,
                            "x_level": names[0], "y_level": names[1]}
        if args.x and args.y:
            return ((table.numeric(args.x, allow_blank=True),
                     table.numeric(args.y, allow_blank=True)), {"x": args.x, "y": args.y})
        raise InputError("ranksum needs --value and --group, or --x and --y")
    if t == "signedrank":
        if args.diff:
            if args.x or args.y:
                raise InputError("use either --diff or --x/--y, not both")
            d = table.numeric(args.diff)
            cols = {"diff": args.diff}
        elif args.x and args.y:
            d = table.numeric(args.y) - table.numeric(args.x)
            cols = {"x": args.x, "y": args.y, "difference": "y - x"}
        elif args.x:
            if args.test_value is None:
                raise InputError("a single column needs --test-value")
            d = table.numeric(args.x)
            cols = {"x": args.x}
        else:
            raise InputError("signedrank needs --diff, --x and --y, or --x with --test-value")
        if args.test_value is not None:
            d = d - args.test_value
            cols["test_value"] = args.test_value
        return (d,), cols
    if args.x and args.y:
        return (table.numeric(args.x), table.numeric(args.y)), {"x": args.x, "y": args.y}
    raise InputError("spearman needs --x and --y")


def run_test(args) -> tuple[dict, str | None]:
    path = Path(args.input)
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise InputError(f"input is not UTF-8 ({exc})") from None
    table = Table.read(text)
    data, cols = _select(args, table)
    config = _config(args)
    prior = PriorSpec.cauchy(args.scale)
    if args.test == "ranksum":
        result = rank_sum_test(*data, prior=prior, config=config)
    elif args.test == "signedrank":
        result = signed_rank_test(*data, prior=prior, config=config)
    else:
        result = spearman_test(*data, config=config)
    inputs = {"file": path.name, "sha256": hashlib.sha256(raw).hexdigest(), "columns": cols}
    doc = result_to_dict(result, inputs)
    grid = plot_grid_csv(result, args.grid_points) if args.plot_grid else None
    return doc, grid


def _write(text: str, output: str | None):
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(output).write_text(text, encoding="utf-8")


def _cmd_test(args) -> int:
    try:
        doc, grid = run_test(args)
    except FileNotFoundError as exc:
        print(f"error: input file not found: {exc.filename}", file=sys.stderr)
        return EXIT_MISSING
    except (InputError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except LatentRankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    _write(json.dumps(doc, indent=2) + "\n", args.output)
    if grid is not None:
        Path(args.plot_grid).write_text(grid, encoding="utf-8")
    return EXIT_OK


def _float_list(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise InputError(f"cannot parse {text!r} as a comma-separated list of numbers") from None
    if not vals or not all(math.isfinite(v) for v in vals):
        raise InputError(f"invalid list {text!r}")
    return vals


def _int_list(text: str) -> tuple[int, ...]:
    vals = _float_list(text)
    if any(v != int(v) for v in vals):
        raise InputError(f"sample sizes must be integers, got {text!r}")
    return tuple(int(v) for v in vals)


def _cmd_simulate(args) -> int:
    try:
        grid = SimulationGridSpec(
            effect_values=_float_list(args.effects),
            n_values=_int_list(args.n),
            replicates=args.replicates,
            scenario=args.scenario,
            family=args.family,
            shape=args.shape,
            seed=args.seed,
            record_runtime=args.runtime,
        )
        if args.test == "spearman" and args.family not in COPULAS:
            raise InputError("Spearman simulations need a copula family")
        if args.test != "spearman" and args.family not in FAMILIES:
            raise InputError("rank sum and signed rank simulations need a univariate family")
        rows = run_grid(grid, args.test, PriorSpec.cauchy(args.scale), _config(args))
    except (InputError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    _write(grid_to_csv(rows, args.runtime), args.output)
    return EXIT_OK


def _add_chain_flags(p: argparse.ArgumentParser, defaults: ChainConfig):
    p.add_argument("--scale", type=float, default=DEFAULT_CAUCHY_SCALE,
                   help="Cauchy prior scale for delta (default 1/sqrt(2))")
    p.add_argument("--iterations", type=int, default=defaults.iterations)
    p.add_argument("--burnin", type=int, default=defaults.burnin)
    p.add_argument("--chains", type=int, default=defaults.chains)
    p.add_argument("--thin", type=int, default=defaults.thin)
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--output", default=None, help="output file (default: standard output)")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the malformed-input code; 2 is reserved for a missing file."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_MALFORMED, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="latentrank",
                                     description="Bayesian latent-normal rank tests.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="run a test on a CSV file and print JSON")
    t.add_argument("--test", required=True, choices=("ranksum", "signedrank", "spearman"))
    t.add_argument("--input", required=True, help="headered, comma-separated UTF-8 file")
    t.add_argument("--x", help="first value column")
    t.add_argument("--y", help="second value column")
    t.add_argument("--value", help="value column (rank sum with --group)")
    t.add_argument("--group", help="two-level grouping column (rank sum)")
    t.add_argument("--x-level", help="group level treated as x (default: first in sort order)")
    t.add_argument("--diff", help="difference-score column (signed rank)")
    t.add_argument("--test-value", type=float, help="subtracted from the differences")
    t.add_argument("--plot-grid", metavar="PATH", help="also write a prior/posterior density grid")
    t.add_argument("--grid-points", type=int, default=512)
    _add_chain_flags(t, ChainConfig())
    t.set_defaults(func=_cmd_test)

    s = sub.add_parser("simulate", help="run a simulation grid and write CSV")
    s.add_argument("--test", required=True, choices=("ranksum", "signedrank", "spearman"))
    s.add_argument("--family", default="logistic", choices=FAMILIES + COPULAS)
    s.add_argument("--scenario", default="same-shape", choices=SCENARIOS)
    s.add_argument("--shape", type=float, default=20.0, help="skew-normal shape")
    s.add_argument("--effects", default="0,0.5,1.5",
                   help="comma-separated shifts (or Spearman correlations)")
    s.add_argument("--n", default="10,20,50", help="comma-separated sample sizes")
    s.add_argument("--replicates", type=int, default=100)
    s.add_argument("--runtime", action="store_true",
                   help="add a wall-clock runtime column (output no longer byte-reproducible)")
    _add_chain_flags(s, ChainConfig())
    s.set_defaults(func=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "grid_points", 2) < 2:
        parser.error("--grid-points must be at least 2")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
