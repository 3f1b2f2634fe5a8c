"""Receiver-side estimation: least-squares channel gains and MUSIC DoA."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .channel import ArrayGeometry, cn, noise_variance, steering_vector
from .core import CsitRecord
from .errors import InsufficientSnapshotsError, InvalidConfigError, RankDeficientPilotsError


@dataclass(frozen=True)
class MusicConfig:
    grid_points: int = 1801
    snapshots: int = 200
    source_count: int = 1

    def __post_init__(self):
        if self.grid_points < 180:
            raise InvalidConfigError(f"grid_points must be >= 180, got {self.grid_points}")
        if self.snapshots < 1 or self.source_count < 1:
            raise InvalidConfigError("snapshots and source_count must be positive")

    def grid(self) -> np.ndarray:
        # open interval: the endpoints are excluded
        return np.linspace(-math.pi / 2, math.pi / 2, self.grid_points + 2)[1:-1]


def ls_estimate(observations: Sequence[Tuple[np.ndarray, np.ndarray]], rtol: float = 1e-8) -> np.ndarray:
    """Least-squares channel estimate from (pilot, received) pairs.

    Solves ``min_G sum ||y - G s||^2``.  The pilot matrix must have full row
    rank M, otherwise the problem is underdetermined.
    """
    if len(observations) == 0:
        raise RankDeficientPilotsError("no pilots given")
    S = np.column_stack([np.asarray(s) for s, _ in observations])  # M x P
    Y = np.column_stack([np.asarray(y) for _, y in observations])  # N x P
    M = S.shape[0]
    sv = np.linalg.svd(S, compute_uv=False)
    rank = int(np.sum(sv > rtol * sv[0])) if sv.size and sv[0] > 0 else 0
    if rank < M:
        raise RankDeficientPilotsError(f"pilot matrix has rank {rank}, need {M}")
    return Y @ np.linalg.pinv(S)


def pilot_observations(H: np.ndarray, snr_db: float, rng: np.random.Generator):
    """Send the M standard basis pilots through ``H`` with AWGN."""
    N, M = H.shape
    sigma = math.sqrt(noise_variance(snr_db))
    noise = cn(rng, N, M)
    return [(np.eye(M)[:, m], H[:, m] + sigma * noise[:, m]) for m in range(M)]


def _noise_subspace(snapshots: np.ndarray, source_count: int) -> np.ndarray:
    Y = np.asarray(snapshots)
    N, T = Y.shape
    if T < N:
        raise InsufficientSnapshotsError(f"{T} snapshots for {N} antennas")
    R = Y @ Y.conj().T / T
    w, V = np.linalg.eigh(R)
    # descending eigenvalues, ties broken by ascending index
    order = np.lexsort((np.arange(N), -w))
    return V[:, order[source_count:]]


def music_spectrum(snapshots: np.ndarray, geom: ArrayGeometry, cfg: MusicConfig):
    """MUSIC pseudo-spectrum over the configured angle grid.

    ``snapshots`` is N x T, one received vector per column.
    """
    En = _noise_subspace(snapshots, cfg.source_count)
    grid = cfg.grid()
    n = np.arange(geom.rx_antennas)
    A = np.exp(-1j * np.outer(n, 2 * math.pi * geom.spacing / geom.wavelength * np.sin(grid)))
    proj = En.conj().T @ A
    denom = np.sum(np.abs(proj) ** 2, axis=0)
    return grid, 1.0 / np.maximum(denom, np.finfo(float).tiny)


def music_doa(snapshots: np.ndarray, geom: ArrayGeometry, cfg: MusicConfig) -> float:
    if cfg.source_count != 1:
        raise InvalidConfigError("only single-source DoA estimation is supported")
    grid, spec = music_spectrum(np.asarray(snapshots), geom, cfg)
    return float(grid[int(np.argmax(spec))])


def synthetic_snapshots(geom: ArrayGeometry, angle: float, count: int, snr_db: float,
                        rng: np.random.Generator) -> np.ndarray:
    """Single-path snapshots a(theta) * h_t plus AWGN, shape N x count."""
    a = steering_vector(geom, angle)
    amp = cn(rng, count)
    noise = math.sqrt(noise_variance(snr_db)) * cn(rng, geom.rx_antennas, count)
    return np.outer(a, amp) + noise


def estimate_csi(H: np.ndarray, angle: float, geom: ArrayGeometry, snr_db: float,
                 rng: Optional[np.random.Generator], music: Optional[MusicConfig] = None,
                 genie: bool = True) -> CsitRecord:
    """Produce the (gain, DoA) feedback report for one link.

    In genie mode the true values are returned untouched; otherwise the gain
    comes from LS over the M basis pilots and the angle from MUSIC.
    """
    if genie:
        return CsitRecord(gain=np.array(H), doa_angle=angle)
    music = music or MusicConfig()
    H_hat = ls_estimate(pilot_observations(H, snr_db, rng))
    snaps = synthetic_snapshots(geom, angle, music.snapshots, snr_db, rng)
    return CsitRecord(gain=H_hat, doa_angle=music_doa(snaps, geom, music))
