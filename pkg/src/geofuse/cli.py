"""Command line entry point: ``geofuse {simulate,track,evaluate,summarize}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness as H
from .config import ConfigError, ScenarioConfig, default_config, desk_config, load_config, save_config
from .filter import SceneState

PRESETS = {"default": default_config, "desk": desk_config}


def _config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else PRESETS[args.preset]()
    changes = {}
    if getattr(args, "likelihood", None):
        changes["likelihood"] = args.likelihood
    if getattr(args, "los_only", False):
        changes["los_only"] = True
    if getattr(args, "steps", None):
        changes["n_steps"] = args.steps
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "bf_seed", None) is not None:
        changes["bf_seed"] = args.bf_seed
    return cfg.replace(**changes) if changes else cfg


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_results(records, cfg: ScenarioConfig, out: Path) -> dict:
    rows = [H.record_row(r) for r in records]
    H.write_steps(rows, out / "steps.csv")
    summary = H.summarize(rows, cfg.convergence_fraction)
    H.write_summary(summary, out / "summary.json")
    return summary


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _outdir(args.out)
    arrays = {}
    for r in range(args.runs):
        sim = H.simulate(cfg, r)
        arrays[f"run{r}_observations"] = sim.observations
        arrays[f"run{r}_noise_var"] = np.array(sim.noise_var)
        arrays[f"run{r}_truth"] = np.array([s.to_vector() for s in sim.states])
    np.savez(out / "observations.npz", runs=np.arange(args.runs), **arrays)
    save_config(cfg, out / "config.yaml")
    print(f"wrote {out / 'observations.npz'}")
    return 0


def cmd_track(args) -> int:
    cfg = _config(args)
    out = _outdir(args.out)
    records = H.run_tracking(cfg, runs=args.runs, evaluate=not args.no_csi)
    save_config(cfg, out / "config.yaml")
    H.save_estimates(records, out / "estimates.npz")
    summary = _write_results(records, cfg, out)
    _report(summary)
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    out = _outdir(args.out)
    saved = H.load_estimates(args.estimates)
    truth = H.true_states(cfg)
    noise_var = H.noise_variance(cfg, H.carrier_truth(cfg, truth[:1])[0])
    records = []
    for r, (est, ess) in sorted(saved.items()):
        if len(est) != len(truth):
            raise ConfigError(f"n_steps: estimates have {len(est)} steps, config has {len(truth)}")
        states = [SceneState.from_vector(x) for x in est]
        reports = H.evaluate_csi(cfg, r, truth, states, noise_var)
        for n, (st, e, rep) in enumerate(zip(truth, states, reports)):
            records.append(H.RunRecord(run=r, step=n + 1, truth=st, estimate=e,
                                       cov_diag=np.full(e.dim, np.nan), ess=float(ess[n]),
                                       clamped=0, report=rep))
    summary = _write_results(records, cfg, out)
    _report(summary)
    return 0


def cmd_summarize(args) -> int:
    rows = H.read_steps(args.steps_csv)
    summary = H.summarize(rows, args.convergence_fraction)
    if args.out:
        H.write_summary(summary, args.out)
    _report(summary)
    return 0


def _report(summary: dict) -> None:
    print(f"runs {summary['n_runs']}  steps {summary['n_steps']}")
    print(f"horizontal RMSE {summary['rmse_horizontal']:.4f} m  vertical RMSE {summary['rmse_vertical']:.4f} m")
    for key in ("pg_meas_db", "pg_pred_db", "pg_fused_db", "pg_outdated_db", "pg_future_db"):
        print(f"mean {key[:-3]:<14s} {summary[f'mean_{key}']:8.2f} dB")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geofuse", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario(sp, runs=True):
        sp.add_argument("--config", help="YAML scenario file")
        sp.add_argument("--preset", choices=sorted(PRESETS), default="desk",
                        help="built-in scenario used when --config is absent")
        sp.add_argument("--seed", type=int, help="tracking seed (overrides the config)")
        sp.add_argument("--steps", type=int, help="number of time steps (overrides the config)")
        if runs:
            sp.add_argument("--runs", type=int, default=1)
        sp.add_argument("--out", default="out")

    sp = sub.add_parser("simulate", help="emit noisy observations")
    scenario(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("track", help="tracking plus CSI evaluation")
    scenario(sp)
    sp.add_argument("--likelihood", choices=["det", "sto"])
    sp.add_argument("--los-only", action="store_true", help="infer with the LoS path only")
    sp.add_argument("--bf-seed", type=int, help="seed of the beamforming evaluation noise")
    sp.add_argument("--no-csi", action="store_true", help="skip CSI/beamforming evaluation")
    sp.set_defaults(func=cmd_track)

    sp = sub.add_parser("evaluate", help="CSI/beamforming from saved estimates")
    scenario(sp, runs=False)
    sp.add_argument("--estimates", required=True, help="estimates.npz written by track")
    sp.add_argument("--los-only", action="store_true")
    sp.add_argument("--bf-seed", type=int)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("summarize", help="metrics from a steps.csv")
    sp.add_argument("steps_csv")
    sp.add_argument("--convergence-fraction", type=float, default=0.2)
    sp.add_argument("--out", help="write summary JSON here")
    sp.set_defaults(func=cmd_summarize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
