"""Slot-by-slot protocol runners for TDMA, RIA, RIR and B-DRIA.

Every runner returns a ``SchemeRun``: the transcript of what was sent,
observed and fed back, plus one ``StackedSystem`` per user describing the
linear system that user solves at the end of the run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from .channel import ArrayGeometry, ChannelRealization, apply_channel, draw_channel, noise_variance
from .core import (
    CsitLedger,
    CsitRead,
    CsitRecord,
    FeedbackModel,
    LinkId,
    SchemeParams,
    SystemConfig,
    derive_params,
    draw_symbols,
    owner_map,
    spawn_streams,
)
from .errors import SchemeInapplicableError
from .estimation import MusicConfig, estimate_csi
from .precoding import (
    beamforming_matrix,
    combined_precoder_bdria,
    combined_precoder_rir,
    elimination_matrix,
    regeneration_matrices,
)

SCHEMES = ("tdma", "ria", "rir", "bdria")

# DoA draws for B-DRIA stay inside a +/-60 degree sector
DOA_SPAN = math.pi / 3

UserId = Tuple[int, int]
ChannelHook = Callable[[int, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class FeedbackEvent:
    user: UserId
    link: LinkId
    kind: str  # "csi" or "ici"


@dataclass
class SlotEvent:
    slot: int
    phase: int
    active_cells: frozenset
    transmitted: Dict[int, np.ndarray]
    payload_kind: Dict[int, str]
    observations: Dict[UserId, np.ndarray]
    feedback: List[FeedbackEvent] = field(default_factory=list)
    csit_reads: List[CsitRead] = field(default_factory=list)


@dataclass
class Transcript:
    config: SystemConfig
    params: SchemeParams
    scheme: str
    seed: int
    snr_db: float
    slots: List[SlotEvent] = field(default_factory=list)
    ledger: Optional[CsitLedger] = field(default=None, repr=False)
    notes: Dict[str, object] = field(default_factory=dict)

    @property
    def num_slots(self):
        return len(self.slots)


@dataclass
class StackedSystem:
    """Per-user linear system ``lhs @ truth + noise = rhs``.

    ``owned`` marks the entries of ``truth`` intended for this user.  Users
    that decode a common unknown vector share a ``group`` key.  ``noise_cov``
    is the noise covariance divided by the per-antenna noise variance; None
    means white.
    """

    user: UserId
    lhs: np.ndarray
    rhs: np.ndarray
    truth: np.ndarray
    owned: np.ndarray
    group: object
    noise_cov: Optional[np.ndarray] = None


class SchemeRun(NamedTuple):
    transcript: Transcript
    systems: Dict[UserId, StackedSystem]


class _Session:
    """Shared plumbing: random streams, channel draws, slot log and ledger."""

    def __init__(self, scheme, cfg, feedback, snr_db, seed, constellation, channel_hook):
        self.cfg = cfg
        self.params = derive_params(cfg)
        self.snr_db = snr_db
        self.sigma2 = noise_variance(snr_db)
        self.constellation = constellation
        self.hook = channel_hook
        self.rng_channel, self.rng_symbols, self.rng_noise, self.rng_est = spawn_streams(seed, 4)
        self.ledger = CsitLedger(feedback)
        self.tr = Transcript(cfg, self.params, scheme, seed, snr_db, ledger=self.ledger)
        self.owners = owner_map(cfg.M, cfg.K)
        self._channels: Dict[int, ChannelRealization] = {}
        self._pending_reads: Dict[int, List[CsitRead]] = {}

    def channel(self, slot) -> ChannelRealization:
        if slot not in self._channels:
            real = draw_channel(self.cfg, slot, self.rng_channel, self.sigma2)
            if self.hook is not None:
                real = ChannelRealization(slot, self.hook(slot, real.gains.copy()), self.sigma2)
            self._channels[slot] = real
        return self._channels[slot]

    def symbols(self, n=None):
        return draw_symbols(self.rng_symbols, self.cfg.M if n is None else n, self.constellation)

    def transmit(self, slot, phase, payload, kinds, weights=None) -> SlotEvent:
        real = self.channel(slot)
        y = apply_channel(real, payload, self.snr_db, self.rng_noise, weights)
        L, K = self.cfg.L, self.cfg.K
        ev = SlotEvent(
            slot=slot,
            phase=phase,
            active_cells=frozenset(payload),
            transmitted={c: np.asarray(v) for c, v in payload.items()},
            payload_kind=dict(kinds),
            observations={(j, k): y[j, k] for j in range(L) for k in range(K)},
            csit_reads=self._pending_reads.pop(slot, []),
        )
        self.tr.slots.append(ev)
        return ev

    def report(self, ev: SlotEvent, user: UserId, link: LinkId, record: CsitRecord, kind: str):
        self.ledger.write(ev.slot, link, record)
        ev.feedback.append(FeedbackEvent(user, link, kind))

    def read(self, slot_requested, current_slot, link, step) -> CsitRecord:
        rec = self.ledger.read(slot_requested, current_slot, link, step)
        self._pending_reads.setdefault(current_slot, []).append(self.ledger.reads[-1])
        return rec

    def finish(self, systems) -> SchemeRun:
        # reads logged for a slot in which nothing was transmitted
        for reads in self._pending_reads.values():
            if self.tr.slots:
                self.tr.slots[-1].csit_reads.extend(reads)
        self._pending_reads.clear()
        return SchemeRun(self.tr, systems)


def _block_diag(blocks):
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols), dtype=complex)
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def _require_ratio(cfg, scheme):
    if cfg.M > 2 * cfg.N:
        raise SchemeInapplicableError(
            f"{scheme} needs M <= 2N (rho <= 2); got M={cfg.M}, N={cfg.N}"
        )


def run_rir(cfg: SystemConfig, feedback: Optional[FeedbackModel] = None, snr_db: float = math.inf,
            seed: int = 0, constellation: str = "gaussian",
            channel_hook: Optional[ChannelHook] = None) -> SchemeRun:
    """Retrospective interference regeneration.

    Phase 1 runs L groups of phi slots in which one cell transmits alone.
    Phase 2 happens at the base stations between the last data slot and the
    final slot: each interfering cell strips the fed-back ICI of the target
    user's undesired symbols (U) and aligns what remains onto a common vector
    (V).  Phase 3 is one joint slot carrying every aligned vector.
    """
    _require_ratio(cfg, "RIR")
    s = _Session("rir", cfg, feedback, snr_db, seed, constellation, channel_hook)
    L, M, K, N = cfg.L, cfg.M, cfg.K, cfg.N
    phi = s.params.phi
    delta = M - N
    if phi < 1:
        raise SchemeInapplicableError(f"RIR needs phi >= 1; got phi={phi}")
    final = L * phi

    # Phase 1
    S = {}
    for i in range(L):
        for tau in range(phi):
            t = i * phi + tau
            S[i, tau] = s.symbols()
            ev = s.transmit(t, 1, {i: S[i, tau]}, {i: "symbols"})
            H = s.channel(t)
            for j in range(L):
                for k in range(K):
                    if j == i:
                        s.report(ev, (j, k), (i, j, k), CsitRecord(gain=H[i, j, k]), "csi")
                    else:
                        rec = CsitRecord(gain=H[i, j, k], observation=ev.observations[j, k])
                        s.report(ev, (j, k), (i, j, k), rec, "ici")

    # Phase 2: elimination and alignment at each interfering base station,
    # targeting user 0 of the transmitting cell.
    und = np.flatnonzero(s.owners != 0)[: 2 * N - M]
    des = np.setdiff1d(np.arange(M), und)
    g, beta, anchor = {}, {}, {}
    x = np.zeros((L, M), dtype=complex)
    for i in range(L):
        interferers = [p for p in range(L) if p != i]
        anchor[i] = interferers[0]
        for tau in range(phi):
            t = i * phi + tau
            ell, Us = {}, {}
            for p in interferers:
                rec = s.read(t, final, (i, p, 0), "rir.phase2.elimination")
                U = elimination_matrix(rec.gain, des, und, source_slot=t, target_user=(p, 0))
                Us[p] = U.rows[:delta]
                ell[p] = Us[p] @ rec.observation
            V = regeneration_matrices(ell, size=s.params.symbols_per_user)
            g[i, tau] = V[anchor[i]].aligned_target
            for p in interferers:
                x[p, tau * delta:(tau + 1) * delta] += V[p].apply(ell[p])[:delta]
            # V acts as identity on the anchor's realized vector, so the
            # aligned signal as a function of the symbols is U_anchor H.
            p0 = anchor[i]
            gain = s.read(t, final, (i, p0, 0), "rir.phase2.combine").gain
            beta[i, tau] = combined_precoder_rir([(np.eye(delta), Us[p0], gain)], slot=t).beta

    # Phase 3
    ev = s.transmit(final, 3, {p: x[p] for p in range(L)}, {p: "regeneration" for p in range(L)})
    HT = s.channel(final)

    systems = {}
    genuine = assumed = 0
    for i in range(L):
        for k in range(K):
            direct = [s.channel(i * phi + tau)[i, i, k] for tau in range(phi)]
            G = sum(HT[p, i, k] for p in range(L) if p != i)
            bottom = np.hstack([G[:, tau * delta:(tau + 1) * delta] @ beta[i, tau] for tau in range(phi)])
            lhs = np.vstack([_block_diag(direct), bottom])
            known = np.zeros(N, dtype=complex)
            for i2 in range(L):
                if i2 == i:
                    continue
                G2 = sum(HT[p, i, k] for p in range(L) if p != i2)
                for tau in range(phi):
                    known += G2[:, tau * delta:(tau + 1) * delta] @ g[i2, tau]
                    if i == anchor[i2] and k == 0:
                        genuine += 1
                    else:
                        assumed += 1
            rhs = np.concatenate(
                [s.tr.slots[i * phi + tau].observations[i, k] for tau in range(phi)]
                + [ev.observations[i, k] - known]
            )
            cov = np.eye(lhs.shape[0], dtype=complex)
            for tau in range(phi):
                Gt = G[:, tau * delta:(tau + 1) * delta]
                cov[phi * N:, phi * N:] += Gt @ Gt.conj().T
            truth = np.concatenate([S[i, tau] for tau in range(phi)])
            owned = np.tile(s.owners == k, phi)
            systems[i, k] = StackedSystem((i, k), lhs, rhs, truth, owned, ("cell", i), cov)
    s.tr.notes["side_information"] = {"genuine": genuine, "assumed": assumed}
    return s.finish(systems)


def run_bdria(cfg: SystemConfig, feedback: Optional[FeedbackModel] = None, snr_db: float = math.inf,
              seed: int = 0, constellation: str = "gaussian", genie: bool = True,
              music: Optional[MusicConfig] = None,
              channel_hook: Optional[ChannelHook] = None) -> SchemeRun:
    """Beamforming-based distributed retrospective interference alignment.

    Phase 1: L slots, one cell each, users report gain and DoA.  Phase 2:
    phi_bar slots in which every cell transmits through the cell-isolating
    beamformers.  Phase 3: one slot where each cell sends the sum of its
    users' past inter-user interference.
    """
    _require_ratio(cfg, "B-DRIA")
    s = _Session("bdria", cfg, feedback, snr_db, seed, constellation, channel_hook)
    L, M, K, N = cfg.L, cfg.M, cfg.K, cfg.N
    phib = s.params.phi_bar
    final = L + phib
    geom = ArrayGeometry(N)
    angles = s.rng_est.uniform(-DOA_SPAN, DOA_SPAN, size=(L, L, K))

    def weights(i, j):
        return beamforming_matrix(i, j, M).matrix

    def report_csi(ev, i, j, k, with_angle):
        real = s.channel(ev.slot)
        rec = estimate_csi(real[i, j, k], float(angles[i, j, k]), geom, snr_db, s.rng_est, music, genie)
        if not with_angle:
            rec = CsitRecord(gain=rec.gain)
        s.report(ev, (j, k), (i, j, k), rec, "csi")

    data_slots = {i: [i] + [L + t for t in range(phib)] for i in range(L)}
    S = {}
    # Phase 1
    for i in range(L):
        S[i, i] = s.symbols()
        ev = s.transmit(i, 1, {i: S[i, i]}, {i: "symbols"})
        for j in range(L):
            for k in range(K):
                report_csi(ev, i, j, k, with_angle=True)

    # Phase 2
    for t in range(L, L + phib):
        for i in range(L):
            for j in range(L):
                for k in range(K):
                    if j != i:
                        s.read(i, t, (i, j, k), "bdria.phase2.beamforming")
            S[i, t] = s.symbols()
        ev = s.transmit(t, 2, {i: S[i, t] for i in range(L)}, {i: "symbols" for i in range(L)}, weights)
        for j in range(L):
            for k in range(K):
                report_csi(ev, j, j, k, with_angle=False)

    # Phase 3: IUI sum per cell, zero-padded from N to M entries
    beta = {}
    payload = {}
    for i in range(L):
        v = np.zeros(N, dtype=complex)
        for t in data_slots[i]:
            gains = [s.read(t, final, (i, i, k), "bdria.phase3.retransmit").gain for k in range(K)]
            beta[i, t] = combined_precoder_bdria(gains, s.owners, slot=t).beta
            v += beta[i, t] @ S[i, t]
        payload[i] = np.concatenate([v, np.zeros(M - N, dtype=complex)])
    ev = s.transmit(final, 3, payload, {i: "iui-sum" for i in range(L)}, weights)
    HT = s.channel(final)

    systems = {}
    for i in range(L):
        for k in range(K):
            direct = [s.channel(t)[i, i, k] for t in data_slots[i]]
            head = HT[i, i, k][:, :N]
            bottom = np.hstack([head @ beta[i, t] for t in data_slots[i]])
            lhs = np.vstack([_block_diag(direct), bottom])
            rhs = np.concatenate(
                [s.tr.slots[t].observations[i, k] for t in data_slots[i]] + [ev.observations[i, k]]
            )
            truth = np.concatenate([S[i, t] for t in data_slots[i]])
            owned = np.tile(s.owners == k, len(data_slots[i]))
            systems[i, k] = StackedSystem((i, k), lhs, rhs, truth, owned, ("cell", i))
    s.tr.notes["genie"] = genie
    return s.finish(systems)


def run_tdma(cfg: SystemConfig, snr_db: float = math.inf, seed: int = 0,
             constellation: str = "gaussian", feedback: Optional[FeedbackModel] = None,
             channel_hook: Optional[ChannelHook] = None) -> SchemeRun:
    """Round-robin single-user service with min(M, N) streams per slot."""
    s = _Session("tdma", cfg, feedback, snr_db, seed, constellation, channel_hook)
    L, M, K, N = cfg.L, cfg.M, cfg.K, cfg.N
    streams = min(M, N)
    systems = {}
    for t in range(L * K):
        i, k = divmod(t, K)
        sym = s.symbols(streams)
        x = np.concatenate([sym, np.zeros(M - streams, dtype=complex)])
        ev = s.transmit(t, 1, {i: x}, {i: "symbols"})
        lhs = s.channel(t)[i, i, k][:, :streams]
        systems[i, k] = StackedSystem(
            (i, k), lhs, ev.observations[i, k], sym, np.ones(streams, dtype=bool), ("slot", t)
        )
    return s.finish(systems)


def run_ria(cfg: SystemConfig, snr_db: float = math.inf, seed: int = 0,
            constellation: str = "gaussian", feedback: Optional[FeedbackModel] = None,
            channel_hook: Optional[ChannelHook] = None) -> SchemeRun:
    """Per-cell retrospective IA with serialized retransmissions.

    The data phase matches RIR's (L groups of phi single-cell slots).  Each
    cell then gets its own retransmission slot carrying the sum of its users'
    past IUI; there is no cross-cell recycling, so the cells cannot share
    that slot.
    """
    _require_ratio(cfg, "RIA")
    s = _Session("ria", cfg, feedback, snr_db, seed, constellation, channel_hook)
    L, M, K, N = cfg.L, cfg.M, cfg.K, cfg.N
    phi = s.params.phi
    if phi < 1:
        raise SchemeInapplicableError(f"RIA needs phi >= 1; got phi={phi}")
    S = {}
    for i in range(L):
        for tau in range(phi):
            t = i * phi + tau
            S[i, tau] = s.symbols()
            ev = s.transmit(t, 1, {i: S[i, tau]}, {i: "symbols"})
            H = s.channel(t)
            for k in range(K):
                s.report(ev, (i, k), (i, i, k), CsitRecord(gain=H[i, i, k]), "csi")

    systems = {}
    for i in range(L):
        t_re = L * phi + i
        betas = []
        v = np.zeros(N, dtype=complex)
        for tau in range(phi):
            t = i * phi + tau
            gains = [s.read(t, t_re, (i, i, k), "ria.retransmit").gain for k in range(K)]
            b = combined_precoder_bdria(gains, s.owners, slot=t).beta
            betas.append(b)
            v += b @ S[i, tau]
        x = np.concatenate([v, np.zeros(M - N, dtype=complex)])
        ev = s.transmit(t_re, 2, {i: x}, {i: "iui-sum"})
        HT = s.channel(t_re)
        for k in range(K):
            direct = [s.channel(i * phi + tau)[i, i, k] for tau in range(phi)]
            bottom = np.hstack([HT[i, i, k][:, :N] @ b for b in betas])
            lhs = np.vstack([_block_diag(direct), bottom])
            rhs = np.concatenate(
                [s.tr.slots[i * phi + tau].observations[i, k] for tau in range(phi)]
                + [ev.observations[i, k]]
            )
            truth = np.concatenate([S[i, tau] for tau in range(phi)])
            owned = np.tile(s.owners == k, phi)
            systems[i, k] = StackedSystem((i, k), lhs, rhs, truth, owned, ("cell", i))
    return s.finish(systems)


RUNNERS = {"tdma": run_tdma, "ria": run_ria, "rir": run_rir, "bdria": run_bdria}


def run_scheme(name: str, cfg: SystemConfig, **kwargs) -> SchemeRun:
    try:
        runner = RUNNERS[name]
    except KeyError:
        raise ValueError(f"unknown scheme {name!r}; choose from {SCHEMES}") from None
    return runner(cfg, **kwargs)


def expected_slots(name: str, cfg: SystemConfig) -> int:
    p = derive_params(cfg)
    return {
        "tdma": cfg.L * cfg.K,
        "ria": cfg.L * (p.phi + 1),
        "rir": cfg.L * p.phi + 1,
        "bdria": cfg.L + p.phi_bar + 1,
    }[name]


def _cplx(v):
    v = np.asarray(v)
    return [[float(z.real), float(z.imag)] for z in v.ravel()]


def transcript_records(tr: Transcript):
    """JSON-ready dicts: one header, then one per slot event."""
    yield {
        "record": "header",
        "scheme": tr.scheme,
        "config": dict(zip("LMKN", tr.config.as_tuple())),
        "phi": tr.params.phi,
        "phi_bar": tr.params.phi_bar,
        "symbols_per_user": tr.params.symbols_per_user,
        "seed": tr.seed,
        "snr_db": None if tr.snr_db == math.inf else tr.snr_db,
        "slots": tr.num_slots,
    }
    for ev in tr.slots:
        yield {
            "record": "slot",
            "slot": ev.slot,
            "phase": ev.phase,
            "active_cells": sorted(ev.active_cells),
            "transmitted": {str(c): {"kind": ev.payload_kind[c], "vector": _cplx(v)}
                            for c, v in sorted(ev.transmitted.items())},
            "observations": {f"{j},{k}": _cplx(v) for (j, k), v in sorted(ev.observations.items())},
            "feedback": [{"user": list(f.user), "link": list(f.link), "kind": f.kind} for f in ev.feedback],
            "csit_reads": [{"step": r.step, "link": list(r.link), "slot": r.slot_requested,
                            "at": r.current_slot} for r in ev.csit_reads],
        }


def write_transcript(tr: Transcript, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in transcript_records(tr):
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
