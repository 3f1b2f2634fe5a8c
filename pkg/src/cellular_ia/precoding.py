"""Precoder constructions: elimination (U), regeneration (V), beamforming (W)
and the combined precoders beta used in the stacked systems."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateSignalError, DimensionMismatchError, NoEliminationPossibleError

RANK_RTOL = 1e-8


def numerical_rank(A: np.ndarray, rtol: float = RANK_RTOL) -> int:
    A = np.asarray(A)
    if A.size == 0:
        return 0
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[0] == 0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


def left_null_space(A: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal rows spanning {w : w A = 0}; shape (rows - rank) x rows."""
    A = np.asarray(A)
    n = A.shape[0]
    if A.shape[1] == 0:
        return np.eye(n, dtype=complex)
    U, sv, _ = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(sv > rtol * sv[0])) if sv[0] > 0 else 0
    return U[:, rank:].conj().T


@dataclass(frozen=True)
class EliminationMatrix:
    rows: np.ndarray
    source_slot: Optional[int] = None
    target_user: Optional[Tuple[int, int]] = None

    @property
    def r(self):
        return self.rows.shape[0]

    def extract(self, y: np.ndarray) -> np.ndarray:
        return self.rows @ y


def elimination_matrix(feedback_channel: np.ndarray, desired_cols: Iterable[int],
                       undesired_cols: Iterable[int], source_slot=None,
                       target_user=None, rtol: float = RANK_RTOL) -> EliminationMatrix:
    """Left annihilator of the undesired columns of ``feedback_channel``.

    For an observation ``y = H s`` the result satisfies
    ``U y = (U H[:, desired]) s[desired]``.
    """
    H = np.asarray(feedback_channel)
    N, M = H.shape
    des = [int(c) for c in desired_cols]
    und = [int(c) for c in undesired_cols]
    if set(des) & set(und):
        raise ValueError("desired and undesired column sets overlap")
    if any(c < 0 or c >= M for c in des + und):
        raise ValueError(f"column index out of range for {M} columns")
    if len(und) >= N:
        raise NoEliminationPossibleError(N, numerical_rank(H[:, und], rtol))
    rows = left_null_space(H[:, und], rtol)
    if rows.shape[0] == 0:
        raise NoEliminationPossibleError(N, numerical_rank(H[:, und], rtol))
    return EliminationMatrix(rows, source_slot, target_user)


@dataclass(frozen=True)
class RegenerationMatrix:
    """Rank-one map sending one cell's extracted vector onto the common target.

    ``map_`` may be zero-padded to a larger square size; ``apply`` pads its
    input to match.
    """

    map_: np.ndarray
    aligned_target: np.ndarray

    def apply(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec)
        D = self.map_.shape[1]
        if vec.shape[0] < D:
            vec = np.concatenate([vec, np.zeros(D - vec.shape[0], dtype=vec.dtype)])
        return self.map_ @ vec


def regeneration_matrices(extracted: Mapping[int, np.ndarray],
                          size: Optional[int] = None) -> Dict[int, RegenerationMatrix]:
    """Align every cell's extracted vector onto the lowest-indexed cell's.

    A single cell is allowed and yields the trivial alignment (its own vector
    is the target).  ``size`` zero-pads each map to ``size x size`` when the
    extracted dimension is smaller.
    """
    if not extracted:
        raise ValueError("no extracted vectors given")
    cells = sorted(extracted)
    vecs = {p: np.asarray(extracted[p], dtype=complex) for p in cells}
    dims = {v.shape for v in vecs.values()}
    if len(dims) != 1:
        raise DimensionMismatchError(f"extracted vectors have differing shapes {sorted(dims)}")
    for p, v in vecs.items():
        if not np.any(v):
            raise DegenerateSignalError(f"extracted vector of cell {p} is zero")
    g = vecs[cells[0]]
    r = g.shape[0]
    D = max(r, size or 0)
    out = {}
    for p in cells:
        ell = vecs[p]
        V = np.zeros((D, D), dtype=complex)
        V[:r, :r] = np.outer(g, ell.conj()) / np.vdot(ell, ell)
        out[p] = RegenerationMatrix(V, g)
    return out


@dataclass(frozen=True)
class BeamformingMatrix:
    matrix: np.ndarray
    kind: str  # "null" or "identity"


def beamforming_matrix(tx_cell: int, rx_cell: int, M: int) -> BeamformingMatrix:
    if tx_cell == rx_cell:
        return BeamformingMatrix(np.eye(M, dtype=complex), "identity")
    return BeamformingMatrix(np.zeros((M, M), dtype=complex), "null")


@dataclass(frozen=True)
class CombinedPrecoder:
    beta: np.ndarray
    slot: Optional[int] = None


def _as_array(x):
    if isinstance(x, RegenerationMatrix):
        return x.map_
    if isinstance(x, EliminationMatrix):
        return x.rows
    return np.atleast_2d(np.asarray(x))


def combined_precoder_rir(parts: Sequence[Tuple[object, object, np.ndarray]],
                          slot: Optional[int] = None) -> CombinedPrecoder:
    """Sum over cells of V_j U_j H_j.

    Each part is ``(V, U, H)``; V and U may be given as the dataclasses above
    or as plain arrays.  A zero-padded V is met by zero-padding U's rows.
    """
    if not parts:
        raise ValueError("no precoder parts given")
    beta = None
    for idx, (V, U, H) in enumerate(parts):
        V, U, H = _as_array(V), _as_array(U), _as_array(H)
        if U.shape[1] != H.shape[0]:
            raise DimensionMismatchError(
                f"part {idx}: U is {U.shape[0]}x{U.shape[1]} but H is {H.shape[0]}x{H.shape[1]}"
            )
        if V.shape[1] < U.shape[0]:
            raise DimensionMismatchError(
                f"part {idx}: V is {V.shape[0]}x{V.shape[1]} but U has {U.shape[0]} rows"
            )
        if V.shape[1] > U.shape[0]:
            U = np.vstack([U, np.zeros((V.shape[1] - U.shape[0], U.shape[1]), dtype=U.dtype)])
        term = V @ U @ H
        if beta is None:
            beta = term
        elif beta.shape != term.shape:
            raise DimensionMismatchError(
                f"part {idx}: product is {term.shape}, earlier parts gave {beta.shape}"
            )
        else:
            beta = beta + term
    return CombinedPrecoder(beta, slot)


def combined_precoder_bdria(channels: Sequence[np.ndarray], owners: np.ndarray,
                            weight: Optional[np.ndarray] = None,
                            slot: Optional[int] = None) -> CombinedPrecoder:
    """Map from a cell's symbol vector to the sum of all its users' IUI.

    Column block k' of the result is the sum of ``H^{k}`` over users
    ``k != k'``, i.e. each user's channel with its own columns removed.  An
    optional beamformer is applied on the right.
    """
    owners = np.asarray(owners)
    H = np.stack([np.asarray(h) for h in channels])  # K x N x M
    K, N, M = H.shape
    if owners.shape != (M,):
        raise DimensionMismatchError(f"owner map has shape {owners.shape}, expected ({M},)")
    beta = np.zeros((N, M), dtype=complex)
    for k in range(K):
        beta += H[k] * (owners != k)[None, :]
    if weight is not None:
        weight = np.asarray(weight)
        if weight.shape != (M, M):
            raise DimensionMismatchError(f"beamformer is {weight.shape}, expected ({M}, {M})")
        beta = beta @ weight
    return CombinedPrecoder(beta, slot)
