"""Command-line driver: ``generate``, ``sample`` and ``diagnose``.

Each run lives in one directory::

    config.json  truth.csv  data.csv  metadata.json     (generate)
    chain_u.csv  chain_theta.csv  run.json               (sample)
    summary.json  posterior.csv                          (diagnose)

Exit codes: 0 success, 2 invalid configuration or input files, 3 runtime
failure.
"""
import argparse
import json
import os
import sys

import numpy as np

from . import experiments, io, models
from .diagnostics import chain_summary
from .errors import ConfigError, L1RtoError
from .sampler import prepare, run_rto_mh, verify_assumptions

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class InputError(Exception):
    """Missing or malformed input file; reported with exit code 2."""


def load_config(path, seed=None, parallelism=None):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if seed is not None:
        data["seed"] = seed
    if parallelism is not None:
        data["parallelism"] = parallelism
    return experiments.ExperimentConfig.from_dict(data)


def cmd_generate(cfg, out):
    os.makedirs(out, exist_ok=True)
    model = experiments.build_model(cfg)
    truth = experiments.build_truth(cfg)
    y = experiments.synthesize(cfg, model, truth)
    io.write_json(os.path.join(out, "config.json"), cfg.to_dict())
    if cfg.problem == "elliptic_besov2d":
        experiments.write_grid_csv(os.path.join(out, "truth.csv"), truth, cfg.side)
    else:
        models.write_vector_csv(os.path.join(out, "truth.csv"), truth, "theta")
    models.write_vector_csv(os.path.join(out, "data.csv"), y, "y")
    meta = {
        "problem": cfg.problem,
        "n": cfg.n,
        "m": cfg.n_obs,
        "sigma_obs": cfg.sigma_obs,
        "seed": cfg.seed,
        "noise_stream": experiments.DATA_STREAM,
    }
    if cfg.problem == "elliptic_besov2d":
        meta.update(grid_side=cfg.side, fine_side=cfg.fine_side, bump_width=cfg.bump_width)
    io.write_json(os.path.join(out, "metadata.json"), meta)
    return meta


def _read_data(path, m):
    try:
        y = models.read_vector_csv(path)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read data {path}: {exc}") from exc
    if y.size != m:
        raise InputError(f"data file {path} has {y.size} values, config expects {m}")
    if not np.all(np.isfinite(y)):
        raise InputError(f"data file {path} contains non-finite values")
    return y


def cmd_sample(cfg, out, data_path=None):
    if not cfg.sigma_obs > 0:
        raise ConfigError("sampling needs sigma_obs > 0")
    y = _read_data(data_path or os.path.join(out, "data.csv"), cfg.n_obs)
    os.makedirs(out, exist_ok=True)
    model = experiments.build_model(cfg)
    transform = experiments.build_transform(cfg)
    ctx = prepare(model, transform, y, cfg.sigma_obs ** 2, weights=cfg.weights,
                  lsq_options=cfg.lsq_options())
    chain, theta = run_rto_mh(model, transform, y, cfg.sigma_obs ** 2, cfg.n_samps, cfg.seed,
                              cfg.parallelism, ctx=ctx)
    audit = verify_assumptions(ctx, chain)
    io.write_chain_csv(os.path.join(out, "chain_u.csv"), chain.states, chain.log_weights, chain.accepted)
    io.write_samples_csv(os.path.join(out, "chain_theta.csv"), theta)
    run = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "n_samples": len(chain),
        "acceptance_rate": chain.acceptance_rate,
        "n_failed_proposals": chain.n_failed,
        "n_function_evals": chain.n_function_evals,
        "n_jacobian_evals": chain.n_jacobian_evals,
        "mode_iterations": ctx.mode_report.iterations,
        "assumption_audit": audit.as_dict(),
    }
    io.write_json(os.path.join(out, "run.json"), run)
    return run


def cmd_diagnose(out, chain_path=None):
    chain_path = chain_path or os.path.join(out, "chain_theta.csv")
    try:
        header, X = io.read_csv_columns(chain_path)
    except io.ChainFileError as exc:
        raise InputError(str(exc)) from exc
    if header[-2:] == ["log_weight", "accepted"]:
        X = X[:, :-2]
    if X.shape[0] < 2 or X.shape[1] < 1 or not np.all(np.isfinite(X)):
        raise InputError(f"{chain_path}: need at least two finite rows")
    summ = chain_summary(X)
    run_path = os.path.join(os.path.dirname(os.path.abspath(chain_path)), "run.json")
    run = io.read_json(run_path) if os.path.exists(run_path) else {}
    ess = summ.ess.as_dict() if summ.ess is not None else {"min": None, "median": None, "max": None}
    evals = None
    if "n_function_evals" in run:
        evals = run["n_function_evals"] + run["n_jacobian_evals"]
    per_eval = {k: (v / evals if evals and v is not None else None) for k, v in ess.items()}
    summary = {
        "n_samples": int(X.shape[0]),
        "dimension": int(X.shape[1]),
        "ess": ess,
        "ess_per_evaluation": per_eval,
        "acceptance_rate": run.get("acceptance_rate"),
        "n_function_evals": run.get("n_function_evals"),
        "n_jacobian_evals": run.get("n_jacobian_evals"),
        "mean": summ.mean,
        "std": summ.std,
    }
    os.makedirs(out, exist_ok=True)
    io.write_json(os.path.join(out, "summary.json"), summary)
    io.write_matrix_csv(
        os.path.join(out, "posterior.csv"),
        np.column_stack([np.arange(X.shape[1]), summ.mean, summ.std]),
        ["index", "mean", "std"],
    )
    return summary


def build_parser():
    p = argparse.ArgumentParser(prog="l1rto", description="RTO-MH sampling with l1-type priors.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write truth, data and metadata for an experiment")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)

    s = sub.add_parser("sample", help="run RTO-MH on generated data")
    s.add_argument("--out", required=True, help="run directory")
    s.add_argument("--config", help="defaults to <out>/config.json")
    s.add_argument("--data", help="defaults to <out>/data.csv")
    s.add_argument("--seed", type=int)
    s.add_argument("--parallelism", type=int)

    d = sub.add_parser("diagnose", help="ESS and posterior moments of a chain")
    d.add_argument("--out", required=True, help="directory for summary files")
    d.add_argument("--chain", help="defaults to <out>/chain_theta.csv")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            cmd_generate(load_config(args.config, args.seed), args.out)
        elif args.command == "sample":
            cfg = load_config(args.config or os.path.join(args.out, "config.json"), args.seed, args.parallelism)
            run = cmd_sample(cfg, args.out, args.data)
            print(f"acceptance rate {run['acceptance_rate']:.4f}, "
                  f"{run['n_function_evals']} function / {run['n_jacobian_evals']} Jacobian evaluations")
        else:
            summary = cmd_diagnose(args.out, args.chain)
            e = summary["ess"]
            if e["median"] is not None:
                print(f"ESS min {e['min']:.1f} median {e['median']:.1f} max {e['max']:.1f}")
    except (ConfigError, InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except L1RtoError as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
