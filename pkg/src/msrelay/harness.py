"""Monte Carlo experiment driver with paired (common random number) trials.

Every trial owns a generator derived from ``(master_seed, sweep, point,
trial)`` through :class:`numpy.random.SeedSequence`; every method run at that
trial sees the same channel draw and, for feedback experiments, the same
bit-flip uniforms.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import groupby
import math

import numpy as np

from .feedback import apply_feedback
from .linalg import ConvergenceError
from .network import PACKET_LENGTH, Topology, draw_channels
from .optimizer import SolverOptions, alternate, equal_power_baseline

__all__ = [
    "PROPOSED_QR",
    "PROPOSED_POWER",
    "EQUAL_POWER",
    "METHODS",
    "ExperimentConfig",
    "TrialRecord",
    "SummaryRow",
    "trial_seed",
    "snr_sweep_records",
    "pe_sweep_records",
    "run_snr_sweep",
    "run_pe_sweep",
    "aggregate",
]

PROPOSED_QR = "proposed-qr"
PROPOSED_POWER = "proposed-power"
EQUAL_POWER = "equal-power"
METHODS = (PROPOSED_QR, PROPOSED_POWER, EQUAL_POWER)

_SNR_SWEEP = 0
_PE_SWEEP = 1
_SOLVER_ERRORS = (np.linalg.LinAlgError, ConvergenceError, ValueError, ZeroDivisionError, FloatingPointError)


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep description.

    ``feedback_pe`` is ``None`` for perfect feedback in the SNR sweep, or a
    BSC flip probability to pass the allocation through quantised feedback.
    ``pe_snr_db`` is the fixed operating point of the Pe sweep.
    """

    topology: Topology = field(default_factory=lambda: Topology((1, 4, 4, 2)))
    snr_grid_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    pe_grid: tuple = (0.0, 1e-4, 1e-3, 1e-2)
    trials: int = 200
    master_seed: int = 0
    methods: tuple = (PROPOSED_QR, PROPOSED_POWER, EQUAL_POWER)
    feedback_pe: float = None
    pe_snr_db: float = 10.0
    eig: str = "qr"
    outer_tol: float = 1e-8
    max_outer_iter: int = 50
    packet_length: int = PACKET_LENGTH
    workers: int = 1

    def __post_init__(self):
        if int(self.trials) < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not self.snr_grid_db:
            raise ValueError("snr grid must not be empty")
        if not self.pe_grid:
            raise ValueError("pe grid must not be empty")
        if not all(math.isfinite(float(s)) for s in self.snr_grid_db) or not math.isfinite(float(self.pe_snr_db)):
            raise ValueError("snr values must be finite")
        pes = list(self.pe_grid) + ([] if self.feedback_pe is None else [self.feedback_pe])
        if not all(0.0 <= float(p) <= 1.0 for p in pes):
            raise ValueError(f"pe values must lie in [0, 1], got {pes}")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if self.eig not in ("qr", "power"):
            raise ValueError(f"eig must be 'qr' or 'power', got {self.eig!r}")
        if int(self.packet_length) < 1:
            raise ValueError("packet_length must be >= 1")
        if int(self.workers) < 1:
            raise ValueError("workers must be >= 1")
        SolverOptions(self.eig, self.outer_tol, self.max_outer_iter)

    def solver_options(self, method):
        eig = {PROPOSED_QR: "qr", PROPOSED_POWER: "power"}.get(method, self.eig)
        return SolverOptions(eig, self.outer_tol, int(self.max_outer_iter))


@dataclass(frozen=True)
class TrialRecord:
    trial_index: int
    method: str
    snr_db: float
    pe: float
    sum_rate: float
    outer_iterations: int
    converged: bool
    failed: bool = False
    channel_checksum: str = ""
    receiver_violations: int = 0
    error: str = ""


@dataclass(frozen=True)
class SummaryRow:
    method: str
    snr_db: float
    pe: float
    mean_sr: float
    std_err: float
    trials: int
    failures: int = 0


def trial_seed(master_seed, sweep, point, trial):
    """Seed sequence for one trial: ``SeedSequence(master, spawn_key=(sweep, point, trial))``."""
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(sweep), int(point), int(trial)))


def _solve(method, topo, ch, cfg):
    opts = cfg.solver_options(method)
    if method == EQUAL_POWER:
        return equal_power_baseline(topo, ch, opts)
    return alternate(topo, ch, opts)


def _failed(trial, method, snr, pe, checksum, exc):
    return TrialRecord(trial, method, snr, pe, math.nan, 0, False, True, checksum, 0, f"{type(exc).__name__}: {exc}")


def _snr_trial(args):
    cfg, point, snr, trial = args
    topo = cfg.topology.with_snr_db(snr)
    ch_seq, fb_seq = trial_seed(cfg.master_seed, _SNR_SWEEP, point, trial).spawn(2)
    ch = draw_channels(topo, np.random.default_rng(ch_seq))
    checksum = ch.checksum()
    out = []
    for method in cfg.methods:
        try:
            sol = _solve(method, topo, ch, cfg)
            sr = sol.sum_rate
            if cfg.feedback_pe is not None:
                sr = apply_feedback(sol, topo, ch, cfg.feedback_pe, np.random.default_rng(fb_seq))
            out.append(
                TrialRecord(trial, method, snr, cfg.feedback_pe, sr, sol.outer_iterations, sol.converged,
                            False, checksum, sol.receiver_violations())
            )
        except _SOLVER_ERRORS as exc:
            out.append(_failed(trial, method, snr, cfg.feedback_pe, checksum, exc))
    return out


def _pe_trial(args):
    cfg, trial, include_perfect = args
    snr = float(cfg.pe_snr_db)
    topo = cfg.topology.with_snr_db(snr)
    ch_seq, fb_seq = trial_seed(cfg.master_seed, _PE_SWEEP, 0, trial).spawn(2)
    ch = draw_channels(topo, np.random.default_rng(ch_seq))
    checksum = ch.checksum()
    out = []
    for method in cfg.methods:
        try:
            sol = _solve(method, topo, ch, cfg)
        except _SOLVER_ERRORS as exc:
            pes = ([None] if include_perfect else []) + list(cfg.pe_grid)
            out.extend(_failed(trial, method, snr, pe, checksum, exc) for pe in pes)
            continue
        base = dict(outer_iterations=sol.outer_iterations, converged=sol.converged, channel_checksum=checksum)
        if include_perfect:
            out.append(TrialRecord(trial, method, snr, None, sol.sum_rate,
                                   receiver_violations=sol.receiver_violations(), **base))
        for pe in cfg.pe_grid:
            sr = apply_feedback(sol, topo, ch, float(pe), np.random.default_rng(fb_seq))
            out.append(TrialRecord(trial, method, snr, float(pe), sr, **base))
    return out


def _run(func, jobs, workers):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(func, jobs))
    else:
        chunks = [func(job) for job in jobs]
    return [rec for chunk in chunks for rec in chunk]


def snr_sweep_records(cfg):
    """Per-trial records of the SNR sweep (paired across methods)."""
    if not cfg.methods:
        return []
    jobs = [(cfg, p, float(snr), t) for p, snr in enumerate(cfg.snr_grid_db) for t in range(int(cfg.trials))]
    return _run(_snr_trial, jobs, int(cfg.workers))


def pe_sweep_records(cfg, include_perfect=True):
    """Per-trial records of the Pe sweep at ``cfg.pe_snr_db``.

    Each trial is solved once per method; the same solution and the same
    bit-flip uniforms are reused for every Pe value.  With
    ``include_perfect`` an extra record with ``pe=None`` carries the
    ideal-feedback sum rate.
    """
    if not cfg.methods:
        return []
    jobs = [(cfg, t, include_perfect) for t in range(int(cfg.trials))]
    return _run(_pe_trial, jobs, int(cfg.workers))


def run_snr_sweep(cfg):
    return aggregate(snr_sweep_records(cfg))


def run_pe_sweep(cfg, include_perfect=True):
    return aggregate(pe_sweep_records(cfg, include_perfect))


def _method_rank(method):
    return (METHODS.index(method), "") if method in METHODS else (len(METHODS), method)


def _pe_key(pe):
    return (0, 0.0) if pe is None else (1, float(pe))


def aggregate(records):
    """Mean and standard error per ``(method, snr_db, pe)``; failed trials are counted, not averaged."""

    def key(r):
        return (_method_rank(r.method), float(r.snr_db), _pe_key(r.pe))

    rows = []
    for _, group in groupby(sorted(records, key=lambda r: key(r) + (r.trial_index,)), key=key):
        group = list(group)
        ok = np.array([r.sum_rate for r in group if not r.failed], dtype=float)
        n = ok.size
        mean = float(ok.mean()) if n else math.nan
        se = float(ok.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        first = group[0]
        rows.append(SummaryRow(first.method, float(first.snr_db), first.pe, mean, se, n, len(group) - n))
    return rows
