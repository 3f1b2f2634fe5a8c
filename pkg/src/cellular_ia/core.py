"""Domain types, derived parameters, symbol generation and the CSIT ledger.

Indexing convention: cells, users, slots and antenna positions are all
0-based in code.  Human-facing output (narratives, CSV) keeps these indices
unchanged except where noted.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import CsitUnavailableError, InvalidConfigError

# (tx cell, rx cell, user) -- identifies one downlink link
LinkId = Tuple[int, int, int]

CONSTELLATIONS = ("gaussian", "qpsk")


def _check_positive_int(name, value):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise InvalidConfigError(f"{name} must be an integer, got {value!r}")
    if value < 1:
        raise InvalidConfigError(f"{name} must be positive, got {value}")


@dataclass(frozen=True)
class SystemConfig:
    """Cellular MIMO downlink dimensions.

    Parameters
    ----------
    num_cells : int
        Number of cells ``L`` (at least 2).
    bs_antennas : int
        Transmit antennas per base station ``M``.
    users_per_cell : int
        Users served in each cell ``K``.
    user_antennas : int
        Receive antennas per user ``N``; must satisfy ``N < M``.
    """

    num_cells: int
    bs_antennas: int
    users_per_cell: int
    user_antennas: int

    def __post_init__(self):
        for name in ("num_cells", "bs_antennas", "users_per_cell", "user_antennas"):
            _check_positive_int(name, getattr(self, name))
        if self.num_cells < 2:
            raise InvalidConfigError(f"num_cells must be at least 2, got {self.num_cells}")
        if self.bs_antennas <= self.user_antennas:
            raise InvalidConfigError(
                f"bs_antennas ({self.bs_antennas}) must exceed user_antennas "
                f"({self.user_antennas})"
            )

    @property
    def L(self):
        return self.num_cells

    @property
    def M(self):
        return self.bs_antennas

    @property
    def K(self):
        return self.users_per_cell

    @property
    def N(self):
        return self.user_antennas

    @property
    def rho(self) -> Fraction:
        """Transceiver antenna ratio M/N as an exact rational."""
        return Fraction(self.M, self.N)

    def as_tuple(self):
        return (self.L, self.M, self.K, self.N)

    def __str__(self):
        return f"(L={self.L}, M={self.M}, K={self.K}, N={self.N})"


@dataclass(frozen=True)
class SchemeParams:
    phi: int
    phi_bar: int
    symbols_per_user: int


def derive_params(cfg: SystemConfig) -> SchemeParams:
    """Compute phi, phi_bar and the per-user symbol allocation for ``cfg``."""
    M, N, K = cfg.M, cfg.N, cfg.K
    if M <= N:
        # SystemConfig already rejects this; kept for duck-typed callers.
        raise InvalidConfigError(f"M ({M}) must exceed N ({N})")
    delta = M - N
    return SchemeParams(
        phi=N // delta,
        phi_bar=max(0, (2 * N - M) // delta),
        symbols_per_user=-(-M // K),
    )


class Regime(enum.Enum):
    INSTANTANEOUS = "instantaneous"
    MODERATE = "moderate-delayed"
    DELAYED = "delayed"


@dataclass(frozen=True)
class FeedbackModel:
    """Feedback delay ``t_fb`` relative to coherence time ``t_c``."""

    t_fb: float = 1.0
    t_c: float = 1.0

    def __post_init__(self):
        if not (self.t_c > 0):
            raise InvalidConfigError(f"coherence time must be positive, got {self.t_c}")
        if not (self.t_fb >= 0):
            raise InvalidConfigError(f"feedback delay must be nonnegative, got {self.t_fb}")

    @property
    def lambda_ratio(self) -> float:
        return self.t_fb / self.t_c

    @property
    def regime(self) -> Regime:
        lam = self.lambda_ratio
        if lam == 0:
            return Regime.INSTANTANEOUS
        if lam < 1:
            return Regime.MODERATE
        return Regime.DELAYED

    @property
    def delay_slots(self) -> int:
        """Slots between a channel use and the earliest read of its CSIT.

        Only the delayed regime imposes a lag; a moderate delay is shorter than
        one coherence block and is treated as current-slot CSIT.
        """
        return 1 if self.regime is Regime.DELAYED else 0

    @classmethod
    def delayed(cls):
        return cls(1.0, 1.0)

    @classmethod
    def instantaneous(cls):
        return cls(0.0, 1.0)


@dataclass(frozen=True)
class CsitRecord:
    """One feedback report.

    ``observation`` carries the received ICI vector that an other-cell user
    reports; it is None for plain channel-state reports.
    """

    gain: np.ndarray
    doa_angle: Optional[float] = None
    observation: Optional[np.ndarray] = None

    def __post_init__(self):
        gain = np.asarray(self.gain)
        if gain.ndim != 2:
            raise ValueError(f"gain must be a matrix, got shape {gain.shape}")
        if not np.all(np.isfinite(gain)):
            raise ValueError("gain contains non-finite entries")
        if self.doa_angle is not None and not (-math.pi / 2 < self.doa_angle < math.pi / 2):
            raise ValueError(f"doa_angle {self.doa_angle} outside (-pi/2, pi/2)")
        if self.observation is not None and not np.all(np.isfinite(self.observation)):
            raise ValueError("observation contains non-finite entries")


@dataclass(frozen=True)
class CsitRead:
    step: str
    link: LinkId
    slot_requested: int
    current_slot: int


class CsitLedger:
    """Append-only store of feedback reports with regime-checked reads."""

    def __init__(self, model: Optional[FeedbackModel] = None):
        self.model = model if model is not None else FeedbackModel.delayed()
        self._entries: Dict[Tuple[int, LinkId], CsitRecord] = {}
        self.reads: List[CsitRead] = []

    def __len__(self):
        return len(self._entries)

    def __contains__(self, key):
        return key in self._entries

    def write(self, slot: int, link: LinkId, record: CsitRecord) -> None:
        key = (int(slot), tuple(int(x) for x in link))
        if key in self._entries:
            raise ValueError(f"ledger entry for slot {slot}, link {link} already written")
        self._entries[key] = record

    def available(self, slot_requested: int, current_slot: int) -> bool:
        return current_slot >= slot_requested + self.model.delay_slots

    def read(self, slot_requested: int, current_slot: int, link: LinkId, step: str = "") -> CsitRecord:
        key = (int(slot_requested), tuple(int(x) for x in link))
        if key not in self._entries:
            raise KeyError(f"no CSIT for slot {slot_requested}, link {link}")
        if not self.available(slot_requested, current_slot):
            raise CsitUnavailableError(
                step or "<unnamed>", key[1], slot_requested, current_slot, self.model.delay_slots
            )
        self.reads.append(CsitRead(step, key[1], int(slot_requested), int(current_slot)))
        return self._entries[key]

    def audit(self) -> List[CsitRead]:
        """Return every logged read that breaks the availability rule."""
        return [r for r in self.reads if not self.available(r.slot_requested, r.current_slot)]


def ledger_read(ledger: CsitLedger, slot_requested: int, current_slot: int,
                link: LinkId, step: str = "") -> CsitRecord:
    return ledger.read(slot_requested, current_slot, link, step)


def owner_map(M: int, K: int) -> np.ndarray:
    """User index owning each of the M symbol positions."""
    spu = -(-M // K)
    return np.arange(M) // spu


def draw_symbols(rng: np.random.Generator, n: int, constellation: str = "gaussian") -> np.ndarray:
    """Unit-average-power i.i.d. symbols."""
    if constellation == "gaussian":
        return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
    if constellation == "qpsk":
        bits = rng.integers(0, 2, size=(2, n))
        return ((1 - 2 * bits[0]) + 1j * (1 - 2 * bits[1])) / math.sqrt(2)
    raise InvalidConfigError(f"unknown constellation {constellation!r}; choose from {CONSTELLATIONS}")


@dataclass(frozen=True)
class SymbolBlock:
    cell: int
    slot: int
    symbols: np.ndarray
    owners: np.ndarray = field(repr=False)

    def user_symbols(self, k):
        return self.symbols[self.owners == k]


def make_symbol_block(cfg: SystemConfig, cell: int, slot: int, rng: np.random.Generator,
                      constellation: str = "gaussian") -> SymbolBlock:
    return SymbolBlock(cell, slot, draw_symbols(rng, cfg.M, constellation), owner_map(cfg.M, cfg.K))


def spawn_streams(seed: int, count: int) -> List[np.random.Generator]:
    """Independent child generators derived from one recorded seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]
