"""Command-line front end.

Exit codes: 0 success, 1 runtime or oracle failure, 2 configuration error.

Configuration is layered: built-in defaults, then ``MSRELAY_SEED`` from the
environment, then a ``key = value`` file (``--config``), then ``--set``
overrides and the dedicated flags.  Recognised keys::

    sizes           comma list N_0..N_m          (default 1,4,4,2)
    power_budgets   comma list P_T1..P_T(m-1)    (default all 1)
    snr             comma list of SNR points, dB (default 0,5,10,15,20)
    pe              comma list of BSC Pe values  (default 0,1e-4,1e-3,1e-2)
    trials          trials per grid point        (default 200)
    seed            master seed                  (default 0)
    methods         subset of proposed-qr,proposed-power,equal-power
    eig             qr | power, receiver solver for equal-power
    feedback_pe     none | Pe applied in snr-sweep
    pe_snr_db       SNR of the pe-sweep          (default 10)
    outer_tol       |delta SR| stopping tolerance
    max_outer_iter  outer iteration cap
    packet_length   QPSK packet length used by validation
    workers         worker processes for trials
"""

import argparse
import csv
import io
import os
import sys
import tempfile
from dataclasses import fields, replace

import numpy as np

from .harness import METHODS, ExperimentConfig, run_pe_sweep, run_snr_sweep, trial_seed
from .network import Topology, draw_channels
from .optimizer import alternate, equal_power_baseline
from .validation import run_checks

SEED_ENV = "MSRELAY_SEED"
COLUMNS = ("method", "snr_db", "pe", "mean_sum_rate", "std_err", "trials", "failures")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _methods(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _optional_float(text):
    return None if text.strip().lower() in ("none", "") else float(text)


_KEYS = {
    "sizes": _ints,
    "power_budgets": _floats,
    "snr": _floats,
    "pe": _floats,
    "trials": int,
    "seed": int,
    "methods": _methods,
    "eig": str.strip,
    "feedback_pe": _optional_float,
    "pe_snr_db": float,
    "outer_tol": float,
    "max_outer_iter": int,
    "packet_length": int,
    "workers": int,
}
_FIELD = {"snr": "snr_grid_db", "pe": "pe_grid", "seed": "master_seed"}


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}", "expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def parse_config(overrides=None, file_values=None, env=None):
    """Resolve an :class:`ExperimentConfig` from layered string settings."""
    env = os.environ if env is None else env
    layered = {}
    if env.get(SEED_ENV):
        layered["seed"] = env[SEED_ENV]
    layered.update(file_values or {})
    layered.update(overrides or {})

    parsed = {}
    for key, raw in layered.items():
        if key not in _KEYS:
            raise ConfigError(key, f"unknown key; expected one of {', '.join(sorted(_KEYS))}")
        try:
            parsed[key] = _KEYS[key](str(raw))
        except ValueError as exc:
            raise ConfigError(key, f"malformed value {raw!r}") from exc

    base = ExperimentConfig()
    topo_kwargs = {
        "sizes": parsed.pop("sizes", base.topology.sizes),
        "power_budgets": parsed.pop("power_budgets", None),
    }
    try:
        topology = Topology(**topo_kwargs)
    except ValueError as exc:
        key = "power_budgets" if "budget" in str(exc) else "sizes"
        raise ConfigError(key, str(exc)) from exc

    kwargs = {_FIELD.get(k, k): v for k, v in parsed.items()}
    names = {f.name for f in fields(ExperimentConfig)}
    assert set(kwargs) <= names
    kwargs["topology"] = topology
    # validate one key at a time so the error names the offending key
    cfg = base
    for key, value in kwargs.items():
        try:
            cfg = replace(cfg, **{key: value})
        except ValueError as exc:
            raise ConfigError({v: k for k, v in _FIELD.items()}.get(key, key), str(exc)) from exc
    return cfg


def format_rows(rows, fmt="csv"):
    """Render summary rows; floats use 9 significant digits."""
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter="\t" if fmt == "tsv" else ",", lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in rows:
        writer.writerow([
            r.method,
            f"{r.snr_db:.9g}",
            "" if r.pe is None else f"{r.pe:.9g}",
            f"{r.mean_sr:.9g}",
            f"{r.std_err:.9g}",
            r.trials,
            r.failures,
        ])
    return buf.getvalue()


def write_atomic(text, path):
    """Write via a temporary file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".msrelay-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_results(rows, fmt="csv", path=None):
    text = format_rows(rows, fmt)
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        write_atomic(text, path)


def _solve_one(cfg):
    snr = float(cfg.snr_grid_db[0])
    topo = cfg.topology.with_snr_db(snr)
    ch_seq, _ = trial_seed(cfg.master_seed, 0, 0, 0).spawn(2)
    ch = draw_channels(topo, np.random.default_rng(ch_seq))
    lines = [("method", "snr_db", "sum_rate", "outer_iterations", "converged", "power_per_group")]
    for method in cfg.methods:
        opts = cfg.solver_options(method)
        sol = equal_power_baseline(topo, ch, opts) if method == "equal-power" else alternate(topo, ch, opts)
        powers = ";".join(f"{p:.9g}" for p in sol.alloc.powers(topo))
        lines.append((method, f"{snr:.9g}", f"{sol.sum_rate:.9g}", sol.outer_iterations, int(sol.converged), powers))
    return lines


def build_parser():
    parser = argparse.ArgumentParser(
        prog="msrelay",
        description="Max-sum-rate receiver and relay power allocation for multihop AF networks.",
    )
    parser.add_argument("command", choices=("snr-sweep", "pe-sweep", "solve-one", "validate"))
    parser.add_argument("--config", metavar="PATH", help="key = value configuration file")
    parser.add_argument("--out", metavar="PATH", default="-", help="output file (default stdout)")
    parser.add_argument("--format", choices=("csv", "tsv"), default="csv")
    parser.add_argument("--seed", help="master seed")
    parser.add_argument("--trials", help="trials per grid point")
    parser.add_argument("--snr", metavar="LIST", help="SNR grid in dB, comma separated")
    parser.add_argument(
        "--pe",
        metavar="LIST",
        help="Pe grid for pe-sweep; for snr-sweep a single value enables quantised feedback",
    )
    parser.add_argument("--method", metavar="LIST", help=f"comma list from {','.join(METHODS)}")
    parser.add_argument("--eig", choices=("qr", "power"), help="eigen solver for the equal-power receiver")
    parser.add_argument("--workers", help="worker processes")
    parser.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], help="override any config key")
    parser.add_argument("--inject-fault", choices=("normalization",), help=argparse.SUPPRESS)
    return parser


def _overrides(args):
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(item, "expected KEY=VALUE")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    flags = {"seed": args.seed, "trials": args.trials, "snr": args.snr, "methods": args.method,
             "eig": args.eig, "workers": args.workers}
    if args.pe is not None:
        if args.command == "snr-sweep":
            flags["feedback_pe"] = args.pe
        else:
            flags["pe"] = args.pe
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def main(argv=None):
    args = build_parser().parse_args(argv)

    if args.command == "validate":
        results = run_checks(fault=args.inject_fault)
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
        failed = [r.name for r in results if not r.passed]
        if failed:
            print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
            return EXIT_FAILURE
        return EXIT_OK

    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = parse_config(_overrides(args), file_values)
    except ConfigError as exc:
        print(f"msrelay: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "snr-sweep":
            emit_results(run_snr_sweep(cfg), args.format, args.out)
        elif args.command == "pe-sweep":
            emit_results(run_pe_sweep(cfg), args.format, args.out)
        else:
            buf = io.StringIO()
            writer = csv.writer(buf, delimiter="\t" if args.format == "tsv" else ",", lineterminator="\n")
            writer.writerows(_solve_one(cfg))
            if args.out in (None, "-"):
                sys.stdout.write(buf.getvalue())
            else:
                write_atomic(buf.getvalue(), args.out)
    except OSError as exc:
        print(f"msrelay: cannot write output: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as exc:  # noqa: BLE001 - exit-code contract
        print(f"msrelay: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
