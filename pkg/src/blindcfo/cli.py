"""Command-line front end: one-trial dumps, grid sweeps and bound tables.

Config files are flat ``key = value`` text; ``#`` starts a comment.  P, N and
snr_db accept comma-separated lists; loop settings use the ``pll_`` prefix.
Unknown keys are rejected.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .crb import crb_f as crb_f_diag
from .harness import (
    ExperimentConfig,
    channel_seed,
    draw_scenario,
    noise_seed,
    run_trial,
    sweep,
    write_csv,
    _scalar,
)
from .pll import BACKEND, PllConfig

_INT_KEYS = {"K", "n_channels", "n_mc", "seed", "pll_min_acquire"}
_FLOAT_KEYS = {"Ts", "pll_kp", "pll_ki", "pll_acq_kp", "pll_acq_ki",
               "pll_lock_threshold", "pll_lock_alpha"}
_LIST_KEYS = {"P": int, "N": int, "snr_db": float}
_STR_KEYS = {"constellation", "pulse", "cfo_range_mode"}


def parse_config(path) -> ExperimentConfig:
    """Read a flat key/value config file into an ExperimentConfig."""
    settings = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {text!r}")
            key, _, value = text.partition("=")
            settings[key.strip()] = value.strip()

    cfg_kwargs = {}
    pll_kwargs = {}
    for key, value in settings.items():
        try:
            if key in _INT_KEYS:
                parsed = int(value)
            elif key in _FLOAT_KEYS:
                parsed = float(value)
            elif key in _LIST_KEYS:
                cast = _LIST_KEYS[key]
                parsed = [cast(float(v)) if cast is int else cast(v)
                          for v in value.split(",")]
            elif key in _STR_KEYS:
                parsed = value
            else:
                raise KeyError
        except KeyError:
            known = sorted(_INT_KEYS | _FLOAT_KEYS | set(_LIST_KEYS) | _STR_KEYS)
            raise ValueError(f"{path}: unknown config key {key!r}; known keys: {known}") from None
        except ValueError as exc:
            raise ValueError(f"{path}: bad value for {key!r}: {exc}") from None
        if key.startswith("pll_"):
            pll_kwargs[key[len("pll_"):]] = parsed
        else:
            cfg_kwargs[key] = parsed
    return ExperimentConfig(pll=PllConfig(**pll_kwargs), **cfg_kwargs)


def _load(args) -> ExperimentConfig:
    cfg = parse_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _cmd_simulate(args):
    cfg = _load(args)
    cell = next(cfg.cells())
    ch_seed = channel_seed(cfg.seed, 0)
    result = run_trial(cell, ch_seed, noise_seed(cfg.seed, 0, 0))
    params = draw_scenario(cell, ch_seed)

    print(f"backend: {BACKEND}")
    print(f"scenario: K={params.K} P={params.P} N={params.N} "
          f"snr_db={_scalar(cell.snr_db, 'snr_db')} sigma2_w={params.sigma2_w:.6g}")
    print(f"fades    |a_k|: {np.abs(params.a)}")
    print(f"delays  tau_k: {params.tau}")
    print(f"{'user':>4} {'f_true':>12} {'f_hat':>12} {'f_refined':>12}")
    for k in range(params.K):
        print(f"{k:>4} {result.f_true[k]:>12.6f} {result.f_hat[k]:>12.6f} "
              f"{result.f_hat_refined[k]:>12.6f}")
    print(f"mse_cfo = {result.mse_cfo:.6e}")
    print(f"ber     = {result.ber:.6e}")
    print(f"lock_failures = {result.lock_failures}")
    print(f"flags   = {','.join(result.flags) if result.flags else '(none)'}")
    return 0


def _cmd_sweep(args):
    cfg = _load(args)
    rows, aggregates = sweep(cfg, threads=args.threads)
    if args.out:
        write_csv(rows, args.out)
        print(f"wrote {len(rows)} rows to {args.out}")
    header = ("K", "P", "N", "snr_db", "mean_mse_cfo", "mean_ber", "mean_crb_f",
              "n_trials", "n_mse_excluded")
    print(" ".join(f"{h:>13}" for h in header))
    for agg in aggregates:
        print(" ".join(
            f"{agg[h]:>13.5g}" if isinstance(agg[h], float) else f"{agg[h]:>13}"
            for h in header
        ))
    return 0


def _cmd_crb(args):
    cfg = _load(args)
    lines = ["K,P,N,snr_db,channel_id,user,f_true,crb_f"]
    for cell in cfg.cells():
        P = _scalar(cell.P, "P")
        N = _scalar(cell.N, "N")
        snr_db = _scalar(cell.snr_db, "snr_db")
        if np.isinf(snr_db):
            raise SystemExit("crb subcommand requires finite snr_db")
        for c in range(cfg.n_channels):
            params = draw_scenario(cell, channel_seed(cfg.seed, c))
            try:
                diag = P**2 * crb_f_diag(params, N)
            except np.linalg.LinAlgError:
                diag = np.full(cfg.K, np.nan)
            for user in range(cfg.K):
                lines.append(f"{cfg.K},{P},{N},{snr_db:.17g},{c},{user},"
                             f"{params.f[user]:.17g},{diag[user]:.17g}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote {len(lines) - 1} rows to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="blindcfo",
        description="Blind multi-user CFO estimation and symbol recovery simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, doc in (
        ("simulate", _cmd_simulate, "run one trial and dump its diagnostics"),
        ("sweep", _cmd_sweep, "run the configured grid and emit per-trial CSV"),
        ("crb", _cmd_crb, "emit the bound table for the configured grid"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", help="path to a key=value config file")
        p.add_argument("--out", help="output path (CSV)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--threads", type=int, default=1, help="parallel trial workers")
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
