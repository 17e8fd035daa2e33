"""Command-line entry point: ``adaptrep reproduce | run <stage> | validate``."""

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .adapt import AdaptSpec, finetune_linear, finetune_logistic, linear_radii
from .env import (TargetTask, load_env, make_linear_env, make_logistic_env, make_nn_env, save_env,
                  sample_dataset, sample_target_task)
from .experiment import ExperimentConfig, reproduce_separation, summarize_records
from .hardcase import HardCaseSpec, frozenrep_population_limit, make_hardcase_env
from .io import decode_array, encode_array, read_json, write_json
from .metrics import excess_risk_quadratic, population_loss_mc, sine_principal_angle
from .pgd import write_trace_csv
from .source import (AdaptRepSource, FrozenRepSource, SourceStats, default_regularization,
                     load_solution, save_solution)
from .validate import run_battery

STAGES = ("gen-env", "train-source", "finetune", "hardcase-limit", "eval")


def _emit(payload, as_json):
    if as_json:
        print(json.dumps(payload, indent=1, sort_keys=True, default=float))
    else:
        for k, v in payload.items():
            print(f"{k}: {v}")


def cmd_reproduce(args):
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.grid:
        cfg.n_T_grid = [int(v) for v in args.grid.split(",")]
    if args.jobs:
        cfg.n_jobs = args.jobs
    if args.scale is not None:
        cfg = cfg.scaled(args.scale)
    if args.out:
        cfg.out_dir = args.out
    records = reproduce_separation(cfg)
    summary = [{k: (float(v) if isinstance(v, np.floating) else v) for k, v in row.items()}
               for row in summarize_records(records)]
    errors = [r.error for r in records if r.error]
    if args.json:
        print(json.dumps({"out_dir": cfg.out_dir, "config_hash": cfg.config_hash(),
                          "summary": summary, "errors": errors}, indent=1))
    else:
        print(f"wrote results to {cfg.out_dir} (config {cfg.config_hash()})")
        for row in summary:
            print(f"{row['method']:>13}  n_T={row['n_T']:<5} median excess risk {row['median']:.4g}")
        for e in errors:
            print("error:", e)
    return 0


def _gen_env(args):
    fam = args.family
    if fam == "linear":
        env = make_linear_env(args.d, args.k, args.T, args.delta0, args.noise_sigma,
                              args.covariance, args.seed)
    elif fam == "logistic":
        env = make_logistic_env(args.d, args.k, args.T, args.delta0, args.covariance, args.seed)
    elif fam == "nn":
        env = make_nn_env(args.d, args.k, args.T, scale=args.nn_scale, noise_sigma=args.noise_sigma,
                          seed=args.seed)
    else:
        eps = args.eps if args.eps is not None else args.k / args.d
        spec = HardCaseSpec(d=args.d, k=args.k, eps=eps, family=fam.split("-", 1)[1])
        env = make_hardcase_env(spec, args.T, args.noise_sigma, args.seed)
    save_env(env, args.out)
    return {"wrote": args.out, "family": env.family, "d": env.d, "k": env.k, "T": env.T}


def _train_source(args):
    env = load_env(args.env)
    n_S = args.n_S or 10 * env.d
    stats = SourceStats.from_env(env, n_S, args.seed)
    common = dict(n_components=env.k, n_restarts=args.restarts, max_iter=args.max_iter,
                  random_state=args.seed)
    if args.method == "adaptrep":
        lam = args.lam or default_regularization(max(env.noise_sigma, 1e-3), np.trace(env.Sigma), n_S)
        est = AdaptRepSource(lam=lam, gamma=args.gamma or lam, **common)
    else:
        est = FrozenRepSource(**common)
    est.fit_stats(stats)
    save_solution(est.solution_, args.out)
    return {"wrote": args.out, "train_loss": est.solution_.train_loss,
            "sine_to_Bstar": sine_principal_angle(est.representation_, env.Bstar)}


def _finetune(args):
    env = load_env(args.env)
    if env.family == "nn":
        raise SystemExit("finetune stage supports the linear, logistic and hard-case families")
    task = sample_target_task(env, args.seed, radius=args.radius)
    n_T = args.n_T or env.d
    ds = sample_dataset(env, task, n_T, args.seed)
    if args.mode == "ignore_rep":
        B0 = None
    else:
        if not args.solution:
            raise SystemExit(f"mode {args.mode} needs --solution")
        B0 = load_solution(args.solution).B0
    c1, c2 = linear_radii(env.delta0, args.radius, env.Sigma)
    spec = AdaptSpec(mode="logistic" if env.family == "logistic" else args.mode,
                     beta_scale=np.sqrt(n_T), c1=c1, c2=c2, T_pgd=args.T_pgd)
    res = finetune_logistic(B0, ds, spec) if env.family == "logistic" else finetune_linear(B0, ds, spec)
    payload = res.to_dict()
    payload["target"] = {"theta_star": encode_array(task.theta_star),
                         "w_star": encode_array(task.w_star),
                         "delta_star": encode_array(task.delta_star)}
    payload["n_T"] = n_T
    write_json(args.out, payload, kind="finetune_result")
    if args.trace_csv and res.trace is not None:
        write_trace_csv(res.trace, args.trace_csv)
    return {"wrote": args.out, "mode": spec.mode, "n_T": n_T}


def _hardcase_limit(args):
    eps = args.eps if args.eps is not None else args.k / args.d
    spec = HardCaseSpec(d=args.d, k=args.k, eps=eps)
    B = frozenrep_population_limit(spec, args.n_mc, args.seed)
    out = {"limit": encode_array(B), "sine_to_Ek": sine_principal_angle(B, spec.Ek),
           "sine_to_Astar": sine_principal_angle(B, spec.Astar), "d": args.d, "k": args.k, "eps": eps}
    write_json(args.out, out, kind="hardcase_limit")
    return {"wrote": args.out, "sine_to_Ek": out["sine_to_Ek"], "sine_to_Astar": out["sine_to_Astar"]}


def _eval(args):
    env = load_env(args.env)
    doc = read_json(args.finetune, kind="finetune_result")
    theta_hat = decode_array(doc["theta_hat"])
    tgt = doc["target"]
    task = TargetTask(decode_array(tgt["theta_star"]), decode_array(tgt["w_star"]),
                      decode_array(tgt["delta_star"]))
    out = {"excess_risk": excess_risk_quadratic(theta_hat, task.theta_star, env.Sigma)}
    est, se = population_loss_mc(lambda X: X @ theta_hat, env, task, args.n_mc, args.seed)
    out["population_loss"], out["population_loss_stderr"] = est, se
    if args.solution:
        out["sine_dist"] = sine_principal_angle(load_solution(args.solution).B0, env.Bstar)
    if args.out:
        write_json(args.out, out, kind="metrics")
    return out


def cmd_run(args):
    handlers = {"gen-env": _gen_env, "train-source": _train_source, "finetune": _finetune,
                "hardcase-limit": _hardcase_limit, "eval": _eval}
    try:
        payload = handlers[args.stage](args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _emit(payload, args.json)
    return 0


def cmd_validate(args):
    results = run_battery(seed=args.seed or 0, perturb_eta=args.perturb_eta)
    if args.json:
        print(json.dumps([r.to_dict() for r in results], indent=1))
    else:
        print(f"{'check':<28}{'value':>12}{'threshold':>12}{'margin':>12}  status")
        for r in results:
            print(f"{r.name:<28}{r.value:>12.3e}{r.threshold:>12.1e}{r.margin:>12.3e}  "
                  f"{'PASS' if r.passed else 'FAIL'}")
            if r.detail:
                print(f"    {r.detail}")
    return 0 if all(r.passed for r in results) else 1


def build_parser():
    p = argparse.ArgumentParser(prog="adaptrep", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    rp = sub.add_parser("reproduce", help="run the separation study")
    rp.add_argument("--config", help="ExperimentConfig JSON file")
    rp.add_argument("--scale", type=float, help="multiply T, replications and M (floor 10)")
    rp.add_argument("--seed", type=int)
    rp.add_argument("--out", help="output directory")
    rp.add_argument("--grid", help="comma-separated n_T values, e.g. 32,64")
    rp.add_argument("--jobs", type=int, help="worker processes over grid cells")
    rp.add_argument("--json", action="store_true")
    rp.set_defaults(func=cmd_reproduce)

    rn = sub.add_parser("run", help="run one pipeline stage")
    rn.add_argument("stage", choices=STAGES)
    rn.add_argument("--out", help="output file")
    rn.add_argument("--seed", type=int, default=0)
    rn.add_argument("--json", action="store_true")
    rn.add_argument("--config", help="unused by single stages; accepted for symmetry")
    rn.add_argument("--family", default="linear",
                    choices=["linear", "logistic", "nn", "hardcase-linear", "hardcase-relu"])
    rn.add_argument("--d", type=int, default=10)
    rn.add_argument("--k", type=int, default=2)
    rn.add_argument("--T", type=int, default=20)
    rn.add_argument("--delta0", type=float, default=0.0)
    rn.add_argument("--noise-sigma", type=float, default=1.0)
    rn.add_argument("--covariance", default="identity")
    rn.add_argument("--eps", type=float)
    rn.add_argument("--nn-scale", type=float)
    rn.add_argument("--env")
    rn.add_argument("--solution")
    rn.add_argument("--finetune")
    rn.add_argument("--method", default="adaptrep", choices=["adaptrep", "frozenrep"])
    rn.add_argument("--n-S", dest="n_S", type=int)
    rn.add_argument("--restarts", type=int, default=3)
    rn.add_argument("--max-iter", type=int, default=500)
    rn.add_argument("--lam", type=float)
    rn.add_argument("--gamma", type=float)
    rn.add_argument("--mode", default="full_adapt", choices=["full_adapt", "delta_only", "ignore_rep"])
    rn.add_argument("--n-T", dest="n_T", type=int)
    rn.add_argument("--T-pgd", dest="T_pgd", type=int, default=10_000)
    rn.add_argument("--radius", type=float, default=1.0)
    rn.add_argument("--trace-csv")
    rn.add_argument("--n-mc", dest="n_mc", type=int, default=10_000)
    rn.set_defaults(func=cmd_run)

    va = sub.add_parser("validate", help="run the invariant battery")
    va.add_argument("--perturb-eta", type=float, default=1.0,
                    help="multiply the PGD step by this factor (fault injection)")
    va.add_argument("--seed", type=int, default=0)
    va.add_argument("--json", action="store_true")
    va.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "run" and not args.out and args.stage != "eval":
        print("error: --out is required for this stage", file=sys.stderr)
        return 2
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
