"""Exception hierarchy.

Every error raised on purpose by the package derives from ``IAError`` so the
CLI can map failures onto exit codes without catching unrelated bugs.
"""

from __future__ import annotations

import numpy as np


class IAError(Exception):
    """Base class for all package errors."""


class InvalidConfigError(IAError, ValueError):
    """A configuration violates a structural invariant (e.g. M <= N)."""


class SchemeInapplicableError(IAError):
    """The configuration is valid but the requested scheme cannot run on it."""


class CsitUnavailableError(IAError):
    """A scheme step tried to read CSIT before the feedback model allows it."""

    def __init__(self, step, link, slot_requested, current_slot, delay):
        self.step = step
        self.link = link
        self.slot_requested = slot_requested
        self.current_slot = current_slot
        self.delay = delay
        super().__init__(
            f"step '{step}' read CSIT of slot {slot_requested} for link {link} "
            f"at slot {current_slot}; earliest allowed slot is {slot_requested + delay}"
        )


class RankDeficientPilotsError(IAError):
    """The pilot matrix does not span the transmit space."""


class InsufficientSnapshotsError(IAError):
    """Too few snapshots to form a usable sample covariance."""


class NoEliminationPossibleError(IAError):
    """The undesired column block leaves no left null space."""

    def __init__(self, rows, rank):
        self.rows = rows
        self.rank = rank
        super().__init__(
            f"undesired block has rank {rank} on {rows} receive dimensions; "
            "left null space is trivial"
        )


class DegenerateSignalError(IAError):
    """An extracted signal vector is zero, so it cannot be aligned."""


class DimensionMismatchError(IAError, ValueError):
    """Precoder factors are not conformable."""


class DecodeFailure(IAError):
    """Stacked system is numerically rank deficient.

    Attributes
    ----------
    singular_values : ndarray
        Full singular-value profile of the offending matrix, descending.
    """

    def __init__(self, singular_values, user=None):
        self.singular_values = np.asarray(singular_values)
        self.user = user
        sv = self.singular_values
        ratio = sv[-1] / sv[0] if sv.size and sv[0] > 0 else 0.0
        who = f" for user {user}" if user is not None else ""
        super().__init__(
            f"rank-deficient stacked system{who}: sigma_min/sigma_max = {ratio:.3e}"
        )

    @property
    def ratio(self):
        sv = self.singular_values
        if sv.size == 0 or sv[0] == 0:
            return 0.0
        return float(sv[-1] / sv[0])
