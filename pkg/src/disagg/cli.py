"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, _backend
from .conjugate import ConjugateChainConfig, run_conjugate_gibbs
from .diagnostics import compute_diagnostics
from .engine import SamplerConfig, posterior_predictive, run_latent_gibbs, worker_count
from .io import (
    DataError,
    RunManifest,
    dataset_digest,
    fmt,
    read_dataset,
    read_draws,
    read_json,
    write_acceptance,
    write_dataset,
    write_draws,
    write_histogram,
    write_json,
    write_truth,
)
from .model import DomainError, NormalParams, NumericalError, RngStream
from .simdata import SimConfig, naive_estimate, naive_estimate_raw, simulate_lognormal

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _sizes(text):
    parts = [int(p) for p in text.split(",")]
    return parts[0] if len(parts) == 1 else parts


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="disagg", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate log-normal individuals summed into buckets")
    s.add_argument("--k", type=int, default=100)
    s.add_argument("--n", type=_sizes, default=10, help="bucket size, or comma list of K sizes")
    s.add_argument("--mu-grams", type=float, default=250.0)
    s.add_argument("--sigma-log", type=float, default=0.10)
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--out-dir", default=".")

    for name, helptext in (("fit-latent", "Dirichlet MH within Gibbs on latent individuals"),
                           ("fit-conjugate", "exact Gibbs sampler on bucket averages")):
        f = sub.add_parser(name, help=helptext)
        f.add_argument("--data", required=True)
        f.add_argument("--config")
        f.add_argument("--out-dir", default=".")
        f.add_argument("--chains", type=int)
        f.add_argument("--seed", type=int)
        f.add_argument("--iters", type=int)
        f.add_argument("--burn-in", type=int)
        f.add_argument("--thin", type=int)
        if name == "fit-latent":
            f.add_argument("--delta", type=float)
            f.add_argument("--adapt", choices=["off", "burn-in"])
            f.add_argument("--likelihood", choices=["lognormal", "normal"])
            f.add_argument("--joint-proposal", action="store_true", default=None)

    r = sub.add_parser("predict", help="posterior predictive draws of one individual")
    r.add_argument("--draws", required=True)
    r.add_argument("--m", type=int, default=10_000)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--likelihood", choices=["lognormal", "normal"], default="lognormal")
    r.add_argument("--out", default="predictive.csv")

    rep = sub.add_parser("report", help="summary and plot-ready CSVs from a draws file")
    rep.add_argument("--draws", required=True)
    rep.add_argument("--predictive")
    rep.add_argument("--out-dir", default=".")
    rep.add_argument("--bins", type=int, default=50)
    return p


def _load_config(args) -> SamplerConfig:
    raw = {}
    if args.config:
        raw = read_json(args.config)
        # a run manifest carries its config under "config"
        if "config" in raw and "dataset_digest" in raw:
            raw = raw["config"]
    overrides = {
        "n_chains": args.chains, "seed": args.seed, "n_iter": args.iters,
        "burn_in": args.burn_in, "thin": args.thin,
        "delta": getattr(args, "delta", None), "adapt": getattr(args, "adapt", None),
        "likelihood": getattr(args, "likelihood", None),
        "joint_proposal": getattr(args, "joint_proposal", None),
    }
    raw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return SamplerConfig.from_dict(raw)
    except TypeError as e:
        raise UsageError(f"invalid config: {e}") from e
    except DomainError as e:
        raise UsageError(f"invalid config: {e}") from e


def cmd_simulate(args):
    cfg = SimConfig(K=args.k, n=args.n, mu=math.log(args.mu_grams), sigma=args.sigma_log,
                    seed=args.seed)
    truth, data = simulate_lognormal(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(data, out / "buckets.csv")
    write_truth(truth, data, out / "truth.csv")
    print(f"wrote {data.K} buckets to {out / 'buckets.csv'}", file=sys.stderr)


def _write_fit(args, chains, data, cfg, command, started):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_draws(chains, out / "draws.csv")
    manifest = RunManifest(
        command=command,
        config=cfg.to_dict(),
        dataset_digest=dataset_digest(data),
        version=__version__,
        backend=_backend.BACKEND,
        chains=[{"chain": c, "seed": o.seed, "stream": o.stream} for c, o in enumerate(chains)],
        timings={"total_seconds": time.perf_counter() - started,
                 "chain_seconds": [o.duration for o in chains]},
    )
    write_json(manifest.to_dict(), out / "run.json")
    if chains[0].acceptance is not None:
        write_acceptance(chains, data, out / "acceptance.csv")
    try:
        report = compute_diagnostics(chains)
        write_json(report.to_dict(), out / "diagnostics.json")
    except DomainError as e:
        print(f"diagnostics skipped: {e}", file=sys.stderr)
    print(f"wrote {sum(c.n_draws for c in chains)} draws to {out / 'draws.csv'}", file=sys.stderr)


def _check_manifest(args, data):
    if not args.config:
        return
    raw = read_json(args.config)
    digest = raw.get("dataset_digest")
    if digest and digest != dataset_digest(data):
        print("warning: dataset differs from the one recorded in the manifest", file=sys.stderr)
    backend = raw.get("backend")
    if backend and backend != _backend.BACKEND:
        print(f"warning: manifest was produced with the {backend} backend, "
              f"running {_backend.BACKEND}; draws may differ in the last digits", file=sys.stderr)


def cmd_fit_latent(args):
    started = time.perf_counter()
    cfg = _load_config(args)
    data = read_dataset(args.data)
    _check_manifest(args, data)
    chains = run_latent_gibbs(data, cfg)
    _write_fit(args, chains, data, cfg, "fit-latent", started)


def cmd_fit_conjugate(args):
    started = time.perf_counter()
    cfg = _load_config(args)
    data = read_dataset(args.data)
    _check_manifest(args, data)
    tau_init = None if isinstance(cfg.tau_init, str) else float(cfg.tau_init)
    chains = []
    for c in range(cfg.n_chains):
        ccfg = ConjugateChainConfig(cfg.n_iter, cfg.burn_in, cfg.thin, init_tau=tau_init,
                                    seed=cfg.seed, stream=c)
        chains.append(run_conjugate_gibbs(data, cfg.prior, ccfg))
    _write_fit(args, chains, data, cfg, "fit-conjugate", started)


def cmd_predict(args):
    chains = read_draws(args.draws)
    thetas = [t for c in chains for t in c.theta_draws()]
    x = posterior_predictive(thetas, args.m, RngStream(args.seed, 0), args.likelihood)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write("draw,x\n")
        for i, v in enumerate(x):
            f.write(f"{i},{fmt(v)}\n")
    print(f"wrote {args.m} predictive draws to {args.out}", file=sys.stderr)


def cmd_report(args):
    chains = read_draws(args.draws)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = compute_diagnostics(chains)
    write_json(report.to_dict(), out / "summary.json")
    # trace: one row per recorded draw, sigma and traced latent values
    with open(out / "trace.csv", "w", encoding="utf-8") as f:
        names = [f"x_{i}_{j}" for i, j in chains[0].latent_coords]
        f.write(",".join(["chain", "iter", "sigma"] + names) + "\n")
        for c, o in enumerate(chains):
            for k in range(o.n_draws):
                row = [str(c), str(int(o.iterations[k])), fmt(o.sigma[k])]
                row += [fmt(v) for v in o.latent[k]]
                f.write(",".join(row) + "\n")
    write_histogram(np.concatenate([c.mu for c in chains]), out / "hist_mu.csv", args.bins)
    write_histogram(np.concatenate([c.sigma for c in chains]), out / "hist_sigma.csv", args.bins)
    if args.predictive:
        try:
            pred = np.loadtxt(args.predictive, delimiter=",", skiprows=1, usecols=1, ndmin=1)
        except (OSError, ValueError) as e:
            raise DataError(f"{args.predictive}: {e}") from e
        write_histogram(pred, out / "hist_predictive.csv", args.bins)
    s = report.parameters["sigma"]
    print(f"sigma: mean {s.mean:.4g}, 95% CI [{s.q025:.4g}, {s.q975:.4g}], "
          f"ESS {s.ess:.0f}, R-hat {s.rhat:.3f}", file=sys.stderr)


COMMANDS = {
    "simulate": cmd_simulate,
    "fit-latent": cmd_fit_latent,
    "fit-conjugate": cmd_fit_conjugate,
    "predict": cmd_predict,
    "report": cmd_report,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DomainError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
