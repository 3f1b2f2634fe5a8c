"""Closed-form DoF, critical points and the figure sweeps."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .core import SystemConfig, derive_params
from .errors import InvalidConfigError, SchemeInapplicableError


def format_rational(x) -> str:
    """Compact decimal rendering of an exact rational (3.6, 6, 31.2)."""
    return f"{float(x):.10g}"


def format_gain(x) -> str:
    return f"{float(x):.1f}"


def analytic_dof_rir(cfg: SystemConfig) -> Fraction:
    p = derive_params(cfg)
    if p.phi < 1:
        raise SchemeInapplicableError(f"RIR needs phi >= 1; got phi=0 for {cfg}")
    L, K = cfg.L, cfg.K
    return Fraction(L * p.symbols_per_user * K * p.phi, L * p.phi + 1)


def analytic_dof_bdria(cfg: SystemConfig) -> Fraction:
    p = derive_params(cfg)
    L, K = cfg.L, cfg.K
    return Fraction(L * p.symbols_per_user * K * (p.phi_bar + 1), L + p.phi_bar + 1)


def analytic_dof_tdma(cfg: SystemConfig) -> Fraction:
    return Fraction(min(cfg.M, cfg.N))


ANALYTIC = {"rir": analytic_dof_rir, "bdria": analytic_dof_bdria, "tdma": analytic_dof_tdma}


def analytic_dof(scheme: str, cfg: SystemConfig) -> Optional[Fraction]:
    """Closed form for ``scheme``, or None where no formula exists (RIA)."""
    fn = ANALYTIC.get(scheme)
    return None if fn is None else fn(cfg)


def gain_pct(value: Fraction, baseline: Fraction) -> Fraction:
    return (Fraction(value) / Fraction(baseline) - 1) * 100


def critical_points(M: int, scheme: str = "rir") -> List[Tuple[int, int]]:
    """Antenna counts N in [ceil(M/2), M) where M - N divides M.

    Each point comes with the phi (RIR) or phi_bar (B-DRIA) value reached
    there.  Since phi_bar = phi - 1 on this interval both schemes share the
    same N values.
    """
    if M < 2:
        raise InvalidConfigError("M must be at least 2")
    if scheme not in ("rir", "bdria"):
        raise ValueError(f"critical points are defined for rir and bdria, not {scheme!r}")
    out = []
    for N in range(-(-M // 2), M):
        if M % (M - N) == 0:
            phi = N // (M - N)
            out.append((N, phi if scheme == "rir" else max(0, (2 * N - M) // (M - N))))
    return out


@dataclass(frozen=True)
class SweepSpec:
    """Parameter sweep over the user antenna count N.

    In ``fixed_rho`` mode ``M = floor(rho * N)``, except that ``rho == 1``
    stands for the ``M = N + 1`` limit curve.  In ``fixed_M`` mode M is held
    and N must stay inside ``[M/2, M)``.
    """

    mode: str
    L: int
    K: int
    n_range: Tuple[int, int]
    rho: Optional[Fraction] = None
    M: Optional[int] = None
    schemes: Tuple[str, ...] = ("tdma", "rir", "bdria")

    def __post_init__(self):
        lo, hi = self.n_range
        if lo < 1 or hi < lo:
            raise InvalidConfigError(f"bad n_range {self.n_range}")
        if self.mode == "fixed_rho":
            if self.rho is None or Fraction(self.rho) < 1:
                raise InvalidConfigError("fixed_rho mode needs rho >= 1")
            object.__setattr__(self, "rho", Fraction(self.rho))
        elif self.mode == "fixed_M":
            if self.M is None:
                raise InvalidConfigError("fixed_M mode needs M")
            if 2 * lo < self.M or hi >= self.M:
                raise InvalidConfigError(f"n_range {self.n_range} must lie in [M/2, M) for M={self.M}")
        else:
            raise InvalidConfigError(f"unknown sweep mode {self.mode!r}")
        for s in self.schemes:
            if s not in ("tdma", "ria", "rir", "bdria"):
                raise InvalidConfigError(f"unknown scheme {s!r} in sweep")

    def antennas(self, N: int) -> int:
        if self.mode == "fixed_M":
            return self.M
        if self.rho == 1:
            return N + 1
        return int(self.rho * N)  # floor for positive rationals

    def configs(self):
        lo, hi = self.n_range
        for N in range(lo, hi + 1):
            yield SystemConfig(self.L, self.antennas(N), self.K, N)


PRESETS: Dict[str, SweepSpec] = {
    "fig10": SweepSpec("fixed_rho", 2, 3, (5, 25), rho=Fraction(3, 2)),
    "fig11": SweepSpec("fixed_rho", 2, 3, (5, 25), rho=Fraction(2)),
    "fig12": SweepSpec("fixed_rho", 2, 3, (5, 25), rho=Fraction(1)),
    "fig13": SweepSpec("fixed_M", 2, 3, (36, 71), M=72, schemes=("tdma", "rir")),
    "fig14": SweepSpec("fixed_M", 2, 3, (36, 71), M=72, schemes=("tdma", "bdria")),
}

PRESET_NOTES = {
    "fig13": "RIR gains are the closed-form values against a TDMA baseline of N",
}

SWEEP_HEADER = ("scheme", "L", "M", "K", "N", "rho", "phi", "phibar", "dof", "gain_vs_tdma_pct")


@dataclass
class SweepRow:
    scheme: str
    config: SystemConfig
    dof: Optional[Fraction]
    gain: Optional[Fraction]
    empirical: Optional[Fraction] = None

    def cells(self, with_empirical=False):
        cfg = self.config
        p = derive_params(cfg)
        row = [
            self.scheme, cfg.L, cfg.M, cfg.K, cfg.N,
            format_rational(cfg.rho), p.phi, p.phi_bar,
            "" if self.dof is None else format_rational(self.dof),
            "" if self.gain is None else format_gain(self.gain),
        ]
        if with_empirical:
            row.append("" if self.empirical is None else format_rational(self.empirical))
        return row


def run_sweep(spec: SweepSpec) -> List[SweepRow]:
    """Analytic DoF and TDMA gain for every (N, scheme) in the sweep.

    RIA has no closed form, so its rows carry empty values until filled by
    an empirical pass.  Schemes that cannot run at a point (phi = 0) also get
    empty values.
    """
    rows = []
    for cfg in spec.configs():
        base = analytic_dof_tdma(cfg)
        for scheme in spec.schemes:
            try:
                dof = analytic_dof(scheme, cfg)
            except SchemeInapplicableError:
                dof = None
            gain = None if dof is None else gain_pct(dof, base)
            rows.append(SweepRow(scheme, cfg, dof, gain))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path, with_empirical: bool = False) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = list(SWEEP_HEADER) + (["empirical"] if with_empirical else [])
        w.writerow(header)
        for r in rows:
            w.writerow(r.cells(with_empirical))
