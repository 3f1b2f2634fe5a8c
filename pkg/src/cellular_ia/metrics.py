"""Decoding, rank-based DoF, rate-slope DoF and report rows."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .analysis import format_gain, format_rational
from .errors import DecodeFailure
from .precoding import RANK_RTOL
from .schemes import SchemeRun, StackedSystem


def singular_values(A: np.ndarray) -> np.ndarray:
    return np.linalg.svd(np.asarray(A), compute_uv=False)


def is_full_rank(sys: StackedSystem, rtol: float = RANK_RTOL) -> bool:
    """Full column rank under a relative singular-value threshold."""
    sv = singular_values(sys.lhs)
    cols = sys.lhs.shape[1]
    if sv.size < cols or sv[0] == 0:
        return False
    return bool(sv[cols - 1] > rtol * sv[0])


def ls_decode(sys: StackedSystem, rtol: float = RANK_RTOL) -> np.ndarray:
    """Least-squares solution of the stacked system.

    Raises
    ------
    DecodeFailure
        If the system lacks full column rank; the exception carries the
        singular values.
    """
    if not is_full_rank(sys, rtol):
        raise DecodeFailure(singular_values(sys.lhs), sys.user)
    x, *_ = np.linalg.lstsq(sys.lhs, sys.rhs, rcond=None)
    return x


def relative_error(x: np.ndarray, truth: np.ndarray) -> float:
    return float(np.linalg.norm(x - truth) / np.linalg.norm(truth))


def decoded_symbols(run: SchemeRun, rtol: float = RANK_RTOL) -> int:
    """Symbols delivered in one run: a user's share counts only if its
    stacked system is full rank."""
    return int(sum(int(np.count_nonzero(sys.owned)) for sys in run.systems.values()
                   if is_full_rank(sys, rtol)))


def empirical_dof(runs: Sequence[SchemeRun], rtol: float = RANK_RTOL) -> Fraction:
    """Mean over trials of decoded symbols per slot, as an exact rational."""
    if not runs:
        raise ValueError("at least one trial is required")
    total = sum(Fraction(decoded_symbols(r, rtol), r.transcript.num_slots) for r in runs)
    return total / len(runs)


def user_rate(sys: StackedSystem, sigma2: float) -> float:
    """log2 det(I + A^H C^-1 A / sigma2) for the whitened stacked channel."""
    A = sys.lhs
    if sys.noise_cov is not None:
        Lc = np.linalg.cholesky(sys.noise_cov)
        A = np.linalg.solve(Lc, A)
    G = A.conj().T @ A / sigma2
    sign, logdet = np.linalg.slogdet(np.eye(G.shape[0]) + G)
    return float(logdet / math.log(2))


def sum_rate(run: SchemeRun, snr_db: Optional[float] = None) -> float:
    """Sum rate per slot in bit/s/Hz.

    Users sharing an unknown vector form a group whose rate is the minimum
    over its members; group rates are summed and divided by the slot count.
    """
    snr = run.transcript.snr_db if snr_db is None else snr_db
    if snr == math.inf:
        raise ValueError("rate is unbounded at infinite SNR")
    sigma2 = 10.0 ** (-snr / 10.0)
    groups: Dict[object, float] = {}
    for sys in run.systems.values():
        r = user_rate(sys, sigma2)
        groups[sys.group] = min(groups.get(sys.group, math.inf), r)
    return sum(groups.values()) / run.transcript.num_slots


def trial_seeds(seed: int, trials: int) -> List[int]:
    """Per-trial seeds derived from one master seed."""
    return [int(x) for x in np.random.SeedSequence(seed).generate_state(trials)]


def _slope_trial(args):
    runner, cfg, s1, s2, seed, kwargs = args
    r1 = sum_rate(runner(cfg, snr_db=s1, seed=seed, **kwargs))
    r2 = sum_rate(runner(cfg, snr_db=s2, seed=seed, **kwargs))
    return r1, r2


def rate_slope_dof(runner: Callable, cfg, snr_pair_db: Tuple[float, float] = (40.0, 60.0),
                   trials: int = 200, seed: int = 0, workers: int = 1, **kwargs) -> float:
    """Finite-difference slope of the mean sum rate against log2(SNR).

    Each trial runs the scheme at both SNR points with the same seed, so the
    channel and symbol draws coincide and only the noise level changes.
    """
    s1, s2 = snr_pair_db
    if not s2 > s1:
        raise ValueError("snr_pair_db must be increasing")
    seeds = trial_seeds(seed, trials)
    jobs = [(runner, cfg, s1, s2, sd, kwargs) for sd in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_slope_trial, jobs))
    else:
        results = [_slope_trial(j) for j in jobs]
    r1 = sum(r[0] for r in results) / trials
    r2 = sum(r[1] for r in results) / trials
    dlog = (s2 - s1) / (10 * math.log10(2))
    return (r2 - r1) / dlog


DOF_REPORT_HEADER = ("scheme", "L", "M", "K", "N", "analytic", "empirical", "slope", "gain_vs_tdma_pct")


@dataclass
class DofReport:
    scheme: str
    config: object
    analytic: Optional[Fraction]
    empirical_rank: Optional[Fraction]
    slope: Optional[float]
    per_scheme_gains: Dict[str, Fraction] = field(default_factory=dict)

    def consistent(self) -> bool:
        if self.analytic is None or self.empirical_rank is None:
            return True
        return self.empirical_rank <= self.analytic * (1 + Fraction(1, 10**9))

    def row(self):
        L, M, K, N = self.config.as_tuple()
        gain = self.per_scheme_gains.get("tdma")
        return [
            self.scheme, L, M, K, N,
            "" if self.analytic is None else format_rational(self.analytic),
            "" if self.empirical_rank is None else format_rational(self.empirical_rank),
            "" if self.slope is None else f"{self.slope:.4f}",
            "" if gain is None else format_gain(gain),
        ]


def write_dof_reports(reports: Iterable[DofReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DOF_REPORT_HEADER)
        for r in reports:
            w.writerow(r.row())
