"""Channel realizations, steering matrices and the noisy link.

All link matrices are N x M (receive x transmit).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Union

import numpy as np

from .core import SymbolBlock, SystemConfig


@dataclass(frozen=True)
class ChannelRealization:
    """Every link matrix for one slot.

    ``gains`` is indexed ``[tx_cell, rx_cell, user]`` and yields an N x M
    matrix, so ``gains[i, j, k]`` is H_i^{j,k}.
    """

    slot: int
    gains: np.ndarray
    noise_power: float = 0.0

    def __getitem__(self, link):
        i, j, k = link
        return self.gains[i, j, k]

    @property
    def shape(self):
        L, _, K, N, M = self.gains.shape
        return L, M, K, N


def cn(rng: np.random.Generator, *shape) -> np.ndarray:
    """Circularly-symmetric CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def draw_channel(cfg: SystemConfig, slot: int, rng: np.random.Generator,
                 noise_power: float = 0.0) -> ChannelRealization:
    gains = cn(rng, cfg.L, cfg.L, cfg.K, cfg.N, cfg.M)
    return ChannelRealization(slot, gains, noise_power)


def noise_variance(snr_db: float) -> float:
    """Per-antenna noise variance for unit-power symbols; +inf dB is noiseless."""
    if snr_db == math.inf:
        return 0.0
    return 10.0 ** (-snr_db / 10.0)


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear receive array.

    Parameters
    ----------
    rx_antennas : int
        Number of array elements.
    wavelength : float
        Carrier wavelength, in metres.
    spacing : float, optional
        Element spacing; defaults to half a wavelength.
    """

    rx_antennas: int
    wavelength: float = 1.0
    spacing: Optional[float] = None

    def __post_init__(self):
        if self.rx_antennas < 1:
            raise ValueError("rx_antennas must be positive")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        if self.spacing is None:
            object.__setattr__(self, "spacing", self.wavelength / 2)
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")

    def phase_step(self, angle: float) -> float:
        return 2 * math.pi * self.spacing / self.wavelength * math.sin(angle)


def steering_vector(geom: ArrayGeometry, angle: float) -> np.ndarray:
    mu = geom.phase_step(angle)
    return np.exp(-1j * mu * np.arange(geom.rx_antennas))


@dataclass(frozen=True)
class SteeringMatrix:
    angle: float
    columns: np.ndarray  # N x M, every column identical for a single-angle link


def steering_matrix(geom: ArrayGeometry, angle: float, tx_antennas: int) -> SteeringMatrix:
    # The closed endpoint is accepted: at +/- pi/2 the formula is still well
    # defined and gives the alternating-sign pattern for half-wave spacing.
    if abs(angle) > math.pi / 2:
        raise ValueError(f"angle {angle} outside [-pi/2, pi/2]")
    a = steering_vector(geom, angle)
    return SteeringMatrix(angle, np.repeat(a[:, None], tx_antennas, axis=1))


Transmission = Union[SymbolBlock, Mapping[int, np.ndarray]]


def _transmit_matrix(tx: Transmission, L: int, M: int) -> np.ndarray:
    x = np.zeros((L, M), dtype=complex)
    if isinstance(tx, SymbolBlock):
        x[tx.cell] = tx.symbols
    else:
        for cell, vec in tx.items():
            vec = np.asarray(vec)
            if vec.shape != (M,):
                raise ValueError(f"cell {cell} transmits shape {vec.shape}, expected ({M},)")
            x[cell] = vec
    return x


def apply_channel(real: ChannelRealization, tx: Transmission, snr_db: float = math.inf,
                  rng: Optional[np.random.Generator] = None,
                  weights: Optional[Callable[[int, int], np.ndarray]] = None) -> np.ndarray:
    """Received signal at every user of every cell.

    Parameters
    ----------
    real : ChannelRealization
    tx : SymbolBlock or mapping cell -> length-M vector
        A single cell's symbol block or the simultaneous payloads of several
        base stations.  Cells absent from the mapping are silent.
    snr_db : float
        Per-antenna SNR; ``inf`` disables noise.
    rng : Generator, optional
        Noise source.  When given, noise is drawn even at infinite SNR (and
        scaled by zero) so that the stream consumption does not depend on SNR.
    weights : callable, optional
        ``weights(tx_cell, rx_cell)`` returns the M x M beamformer applied on
        that cross link before the channel.

    Returns
    -------
    ndarray, shape (L, K, N)
        ``y[j, k]`` is the observation of user k in cell j.
    """
    L, M, K, N = real.shape
    x = _transmit_matrix(tx, L, M)
    if weights is None:
        y = np.einsum("ijknm,im->jkn", real.gains, x)
    else:
        # effective signal per (tx, rx cell) pair
        xe = np.empty((L, L, M), dtype=complex)
        for i in range(L):
            for j in range(L):
                xe[i, j] = weights(i, j) @ x[i]
        y = np.einsum("ijknm,ijm->jkn", real.gains, xe)
    var = noise_variance(snr_db)
    if rng is not None:
        y = y + math.sqrt(var) * cn(rng, L, K, N)
    elif var > 0:
        raise ValueError("a noise generator is required at finite SNR")
    return y


CHANNEL_DUMP_HEADER = ("slot", "i", "j", "k", "row", "col", "re", "im")


def dump_channels(realizations: Iterable[ChannelRealization], path) -> None:
    """Write realizations as one CSV row per matrix entry."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CHANNEL_DUMP_HEADER)
        for real in realizations:
            for idx in np.ndindex(real.gains.shape):
                v = real.gains[idx]
                w.writerow([real.slot, *idx, repr(float(v.real)), repr(float(v.imag))])


def load_channels(path) -> List[ChannelRealization]:
    rows: Dict[int, list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for r in reader:
            rows.setdefault(int(r["slot"]), []).append(r)
    out = []
    for slot in sorted(rows):
        entries = rows[slot]
        dims = [1 + max(int(r[c]) for r in entries) for c in ("i", "j", "k", "row", "col")]
        g = np.zeros(dims, dtype=complex)
        for r in entries:
            g[int(r["i"]), int(r["j"]), int(r["k"]), int(r["row"]), int(r["col"])] = complex(
                float(r["re"]), float(r["im"])
            )
        out.append(ChannelRealization(slot, g))
    return out
