"""Cellular MIMO downlink interference alignment under delayed CSIT.

Simulates the RIR and B-DRIA retrospective schemes slot by slot, alongside
TDMA and per-cell RIA baselines, and evaluates their degrees of freedom both
in closed form and from the rank of the decoded systems.
"""

from .analysis import (
    PRESETS,
    SweepSpec,
    analytic_dof,
    analytic_dof_bdria,
    analytic_dof_rir,
    analytic_dof_tdma,
    critical_points,
    gain_pct,
    run_sweep,
)
from .core import (
    CsitLedger,
    CsitRecord,
    FeedbackModel,
    Regime,
    SchemeParams,
    SymbolBlock,
    SystemConfig,
    derive_params,
    ledger_read,
)
from .metrics import DofReport, empirical_dof, ls_decode, rate_slope_dof, sum_rate
from .schemes import SchemeRun, StackedSystem, Transcript, run_bdria, run_ria, run_rir, run_scheme, run_tdma

__version__ = "0.1.0"
