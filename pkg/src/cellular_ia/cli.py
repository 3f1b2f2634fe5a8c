"""Command-line entry point.

Commands: ``run``, ``verify``, ``sweep`` and ``estimate``.  Exit codes:
0 success, 1 configuration error, 2 scheme infeasible for the
configuration, 3 numerical failure (including failed verify invariants).
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import analysis, metrics
from .analysis import PRESET_NOTES, PRESETS, analytic_dof, analytic_dof_tdma, format_rational, gain_pct
from .channel import ArrayGeometry, cn
from .config import ConfigError, Settings, apply_overrides, load_config
from .core import SystemConfig, owner_map
from .errors import DecodeFailure, IAError, InvalidConfigError, SchemeInapplicableError
from .estimation import MusicConfig, ls_estimate, music_doa, pilot_observations, synthetic_snapshots
from .precoding import elimination_matrix, numerical_rank, regeneration_matrices
from .schemes import RUNNERS, SCHEMES, SchemeRun, expected_slots, write_transcript

OUTPUT_ENV = "CELLULAR_IA_OUT"
WORKED_EXAMPLE = (3, 4, 2, 3)
EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1), not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- helpers

def _parse_system(text: str) -> SystemConfig:
    try:
        parts = [int(x) for x in text.replace(" ", "").split(",")]
    except ValueError:
        raise ConfigError(f"--system expects L,M,K,N integers, got {text!r}") from None
    if len(parts) != 4:
        raise ConfigError(f"--system expects four values L,M,K,N, got {text!r}")
    return SystemConfig(*parts)


def _settings(args) -> Settings:
    settings = load_config(args.config) if args.config else Settings()
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    return apply_overrides(settings, overrides)


def _system(args, settings) -> SystemConfig:
    if args.system:
        return _parse_system(args.system)
    return settings.system(default=SystemConfig(*WORKED_EXAMPLE))


def _pick(flag, settings, section, key, default):
    if flag is not None:
        return flag
    return settings.get(section, key, default)


def _out_dir(args, settings) -> Path:
    out = args.out or settings.get("output", "dir") or os.environ.get(OUTPUT_ENV) or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _runner_kwargs(scheme, settings, snr_db, constellation):
    kw = {"snr_db": snr_db, "constellation": constellation, "feedback": settings.feedback()}
    if scheme == "bdria":
        kw["genie"] = settings.get("scheme", "genie", True)
    return kw


def _singular_hook(slot, gains):
    # test hook: kill the direct link of user (0, 0) in the first slot
    if slot == 0:
        gains[0, 0, 0] = 0
    return gains


# ---------------------------------------------------------------- narrative

def narrative(run: SchemeRun) -> str:
    """Slot-by-slot account of a run, 1-based like the usual worked examples."""
    tr = run.transcript
    cfg, p = tr.config, tr.params
    L, M, K, N = cfg.as_tuple()
    names = {"rir": "RIR", "bdria": "B-DRIA", "tdma": "TDMA", "ria": "RIA"}
    lines = [f"{names[tr.scheme]} on {cfg}: {tr.num_slots} slots, phi={p.phi}, "
             f"phi_bar={p.phi_bar}, {p.symbols_per_user} symbol position(s) per user"]
    owners = owner_map(M, K)
    for ev in tr.slots:
        cells = ", ".join(str(c + 1) for c in sorted(ev.active_cells))
        kinds = sorted(set(ev.payload_kind.values()))
        desc = f"slot {ev.slot + 1} (phase {ev.phase}): cell(s) {cells} send {'/'.join(kinds)}"
        if "symbols" in kinds:
            share = ", ".join(f"user {k + 1}: {int(np.sum(owners == k))}" for k in range(K))
            desc += f" [{share}]" if tr.scheme != "tdma" else ""
        lines.append(desc)
        csi = sum(1 for f in ev.feedback if f.kind == "csi")
        ici = sum(1 for f in ev.feedback if f.kind == "ici")
        if csi or ici:
            lines.append(f"    feedback: {csi} channel report(s), {ici} ICI report(s)")
        if ev.csit_reads:
            steps = sorted({r.step for r in ev.csit_reads})
            lines.append(f"    CSIT reads before this slot: {len(ev.csit_reads)} ({', '.join(steps)}), "
                         f"all from earlier slots")
    for (i, k), sys_ in sorted(run.systems.items()):
        rank = numerical_rank(sys_.lhs)
        lines.append(f"user ({i + 1},{k + 1}): stacked system {sys_.lhs.shape[0]}x{sys_.lhs.shape[1]}, "
                     f"rank {rank}, own symbols {int(np.count_nonzero(sys_.owned))}")
    side = tr.notes.get("side_information")
    if side:
        lines.append(f"known-interference terms removed at receivers: {side['genuine']} held by the "
                     f"receiver itself, {side['assumed']} assumed as side information")
    decoded = metrics.decoded_symbols(run)
    lines.append(f"total: {decoded} symbols over {tr.num_slots} slots = "
                 f"{format_rational(Fraction(decoded, tr.num_slots))} DoF")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- commands

def cmd_run(args) -> int:
    settings = _settings(args)
    scheme = args.scheme or settings.get("scheme", "name")
    if scheme is None:
        raise ConfigError("no scheme given (use --scheme or [scheme] name)")
    cfg = _system(args, settings)
    trials = _pick(args.trials, settings, "scheme", "trials", 10)
    seed = _pick(args.seed, settings, "scheme", "seed", 0)
    snr_db = _pick(args.snr_db, settings, "scheme", "snr_db", math.inf)
    constellation = settings.get("scheme", "constellation", "gaussian")
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    out = _out_dir(args, settings)
    runner = RUNNERS[scheme]
    kw = _runner_kwargs(scheme, settings, snr_db, constellation)

    runs = [runner(cfg, seed=s, **kw) for s in metrics.trial_seeds(seed, trials)]
    analytic = analytic_dof(scheme, cfg)
    empirical = metrics.empirical_dof(runs)
    slope = None
    if args.slope:
        skw = {k: v for k, v in kw.items() if k != "snr_db"}
        slope = metrics.rate_slope_dof(runner, cfg, (40.0, 60.0), trials, seed, **skw)
    gains = {}
    base = analytic_dof_tdma(cfg)
    value = analytic if analytic is not None else empirical
    gains["tdma"] = gain_pct(value, base)
    report = metrics.DofReport(scheme, cfg, analytic, empirical, slope, gains)
    metrics.write_dof_reports([report], out / f"{scheme}_dof.csv")
    if settings.get("output", "transcript", True):
        write_transcript(runs[0].transcript, out / f"{scheme}_transcript.jsonl")
    if settings.get("output", "narrative", cfg.as_tuple() == WORKED_EXAMPLE):
        (out / f"{scheme}_narrative.txt").write_text(narrative(runs[0]), encoding="utf-8")

    a_txt = "n/a" if analytic is None else format_rational(analytic)
    line = f"analytic={a_txt} empirical={format_rational(empirical)}"
    if slope is not None:
        line += f" slope={slope:.4f}"
    print(f"{scheme} {cfg} trials={trials} seed={seed}")
    print(line)
    return EXIT_OK


def _check(results, name, ok, detail, seed=None):
    status = "PASS" if ok else "FAIL"
    msg = f"{status} {name}: {detail}"
    if not ok and seed is not None:
        msg += f" (failing trial seed {seed})"
    results.append((name, ok, msg))
    print(msg)


def cmd_verify(args) -> int:
    settings = _settings(args)
    cfg = _system(args, settings)
    trials = _pick(args.trials, settings, "scheme", "trials", 100)
    seed = _pick(args.seed, settings, "scheme", "seed", 0)
    tol = args.rank_tol
    constellation = settings.get("scheme", "constellation", "gaussian")
    hook = _singular_hook if args.inject_singular else None
    schemes = [args.scheme] if args.scheme else list(SCHEMES)
    seeds = metrics.trial_seeds(seed, trials)
    print(f"verify {cfg} trials={trials} seed={seed} rank_tol={tol:g}")
    results = []
    for scheme in schemes:
        kw = _runner_kwargs(scheme, settings, math.inf, constellation)
        try:
            runs = [RUNNERS[scheme](cfg, seed=s, channel_hook=hook, **kw) for s in seeds]
        except SchemeInapplicableError as exc:
            print(f"SKIP {scheme}: {exc}")
            continue
        bad_rank = next((sd for sd, r in zip(seeds, runs)
                         if not all(metrics.is_full_rank(s_, tol) for s_ in r.systems.values())), None)
        full = sum(all(metrics.is_full_rank(s_, tol) for s_ in r.systems.values()) for r in runs)
        _check(results, f"rank[{scheme}]", bad_rank is None, f"{full}/{trials} trials full rank", bad_rank)

        worst, worst_seed = 0.0, None
        for sd, r in zip(seeds, runs):
            for s_ in r.systems.values():
                try:
                    err = metrics.relative_error(metrics.ls_decode(s_, tol), s_.truth)
                except DecodeFailure:
                    err = math.inf
                if err > worst:
                    worst, worst_seed = err, sd
        ok = worst < 1e-8
        _check(results, f"recovery[{scheme}]", ok, f"max relative error {worst:.2e}", None if ok else worst_seed)

        want = expected_slots(scheme, cfg)
        bad = next((sd for sd, r in zip(seeds, runs) if r.transcript.num_slots != want), None)
        _check(results, f"slots[{scheme}]", bad is None, f"{want} slots per run", bad)

        bad = next((sd for sd, r in zip(seeds, runs) if r.transcript.ledger.audit()), None)
        reads = sum(len(r.transcript.ledger.reads) for r in runs)
        _check(results, f"ledger[{scheme}]", bad is None, f"{reads} CSIT reads audited", bad)

        analytic = analytic_dof(scheme, cfg)
        if analytic is not None and bad_rank is None:
            emp = metrics.empirical_dof(runs, tol)
            if cfg.M % cfg.K == 0:
                _check(results, f"dof[{scheme}]", emp == analytic,
                       f"empirical {format_rational(emp)} vs analytic {format_rational(analytic)}")
            else:
                _check(results, f"dof[{scheme}]", emp <= analytic,
                       f"empirical {format_rational(emp)} <= analytic {format_rational(analytic)} "
                       f"(M not divisible by K)")

    # precoder construction invariants on fresh random draws
    rng = np.random.default_rng(seed)
    N, M, K, L = cfg.N, cfg.M, cfg.K, cfg.L
    owners = owner_map(M, K)
    und = np.flatnonzero(owners != 0)[: max(0, 2 * N - M)]
    des = np.setdiff1d(np.arange(M), und)
    u_res = v_res = orth = 0.0
    for _ in range(trials):
        H = cn(rng, N, M)
        U = elimination_matrix(H, des, und)
        u_res = max(u_res, float(np.max(np.abs(U.rows @ H[:, und]), initial=0.0)))
        orth = max(orth, float(np.max(np.abs(U.rows @ U.rows.conj().T - np.eye(U.r)))))
        vecs = {p: cn(rng, max(1, M - N)) for p in range(L)}
        V = regeneration_matrices(vecs)
        aligned = [V[p].apply(vecs[p]) for p in vecs]
        v_res = max(v_res, max(float(np.max(np.abs(a - aligned[0]))) for a in aligned))
    _check(results, "alignment[U]", u_res < 1e-10 and orth < 1e-10,
           f"max|U H_und| = {u_res:.1e}, max|U U^H - I| = {orth:.1e}", None if u_res < 1e-10 else seed)
    _check(results, "alignment[V]", v_res < 1e-8, f"max pairwise residual {v_res:.1e}",
           None if v_res < 1e-8 else seed)

    failed = [r for r in results if not r[1]]
    if failed:
        print(f"{len(failed)} invariant(s) failed; replay with --seed {seed} --trials {trials}")
        return EXIT_NUMERICAL
    print(f"all {len(results)} invariants passed")
    return EXIT_OK


def cmd_sweep(args) -> int:
    settings = _settings(args)
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
        spec, name = PRESETS[args.preset], args.preset
    elif settings.has_section("sweep"):
        spec = settings.sweep()
        name = settings.get("sweep", "preset") or (Path(args.config).stem if args.config else "sweep")
    else:
        raise ConfigError("no sweep given (use --preset or a [sweep] section)")
    empirical = args.empirical or settings.get("sweep", "empirical", False)
    trials = _pick(args.trials, settings, "scheme", "trials", 1)
    seed = _pick(args.seed, settings, "scheme", "seed", 0)
    out = _out_dir(args, settings)
    rows = analysis.run_sweep(spec)
    if empirical:
        seeds = metrics.trial_seeds(seed, trials)
        for row in rows:
            try:
                runs = [RUNNERS[row.scheme](row.config, seed=s) for s in seeds]
            except SchemeInapplicableError:
                continue
            row.empirical = metrics.empirical_dof(runs)
            if row.scheme == "ria":
                # no closed form; report the simulated value in the dof column
                row.dof = row.empirical
                row.gain = gain_pct(row.empirical, analytic_dof_tdma(row.config))
    path = out / f"{name}.csv"
    analysis.write_sweep_csv(rows, path, with_empirical=empirical)
    print(f"wrote {path} ({len(rows)} rows)")
    if name in PRESET_NOTES:
        print(f"note: {PRESET_NOTES[name]}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    settings = _settings(args)
    cfg = _system(args, settings)
    trials = _pick(args.trials, settings, "scheme", "trials", 100)
    seed = _pick(args.seed, settings, "scheme", "seed", 0)
    snr_db = _pick(args.snr_db, settings, "scheme", "snr_db", 30.0)
    music = MusicConfig(grid_points=args.grid, snapshots=args.snapshots)
    geom = ArrayGeometry(cfg.N)
    angle = math.radians(args.angle_deg)
    if not abs(angle) < math.pi / 2:
        raise ConfigError("--angle-deg must lie strictly between -90 and 90")
    out = _out_dir(args, settings)
    rows, doa_err, ls_err = [], [], []
    for t, s in enumerate(metrics.trial_seeds(seed, trials)):
        rng = np.random.default_rng(s)
        est = music_doa(synthetic_snapshots(geom, angle, music.snapshots, snr_db, rng), geom, music)
        H = cn(rng, cfg.N, cfg.M)
        H_hat = ls_estimate(pilot_observations(H, snr_db, rng))
        e_deg = abs(math.degrees(est - angle))
        e_ls = float(np.linalg.norm(H_hat - H) / np.linalg.norm(H))
        doa_err.append(e_deg)
        ls_err.append(e_ls)
        rows.append([t, f"{args.angle_deg:.6f}", f"{math.degrees(est):.6f}", f"{e_deg:.6f}", f"{e_ls:.6e}"])
    path = out / "estimate.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "true_deg", "est_deg", "abs_err_deg", "ls_rel_err"])
        w.writerows(rows)
    p95 = float(np.percentile(doa_err, 95))
    print(f"estimate {cfg} snr_db={snr_db:g} trials={trials} seed={seed}")
    print(f"doa_p95_err_deg={p95:.4f} ls_mean_rel_err={float(np.mean(ls_err)):.3e}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cellular-ia", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable)")
    common.add_argument("--system", metavar="L,M,K,N", help="system dimensions")
    common.add_argument("--trials", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--snr-db", type=float, dest="snr_db")
    common.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./out)")

    p = sub.add_parser("run", parents=[common], help="run one scheme and report its DoF")
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--slope", action="store_true", help="also estimate the 40/60 dB rate slope")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", parents=[common], help="Monte Carlo invariant suites")
    p.add_argument("--scheme", choices=SCHEMES, help="restrict to one scheme")
    p.add_argument("--rank-tol", type=float, default=1e-8, dest="rank_tol")
    p.add_argument("--inject-singular", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", parents=[common], help="analytic DoF sweep (optionally empirical)")
    p.add_argument("--preset", help=f"one of {', '.join(sorted(PRESETS))}")
    p.add_argument("--empirical", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("estimate", parents=[common], help="LS and MUSIC estimation accuracy")
    p.add_argument("--angle-deg", type=float, default=30.0, dest="angle_deg")
    p.add_argument("--snapshots", type=int, default=200)
    p.add_argument("--grid", type=int, default=1801)
    p.set_defaults(func=cmd_estimate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemeInapplicableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except InvalidConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IAError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
