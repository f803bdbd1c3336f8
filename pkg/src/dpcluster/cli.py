"""Command-line harness: tuple clustering, pipelines, and the synthetic
separation experiments with CSV/JSON reporting.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .experiments import (
    ExperimentConfig,
    baseline_noise_then_fit,
    run_separation_test,
)
from .gmm import (
    MixtureBounds,
    MixtureParams,
    gen_empirical_means,  # noqa: F401  (re-exported for library users)
    mixture_param_error,
    private_k_gmm,
    sample_mixture,
)
from .kmeans import KMeansConfig, kmeans_cost, private_k_means
from .primitives import NoiseMode, ParameterError, PrivacyBudget, RandomStream
from .tuples import (
    TupleDatabase,
    min_tuples_for_privacy,
    private_k_averages,
    private_k_noisy_centers,
)


def parse_delta(text: str) -> float:
    """Parse a delta value; accepts plain floats and the `e^-28` literal form."""
    text = text.strip()
    if text.startswith("e^"):
        return math.exp(float(text[2:]))
    return float(text)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--delta", type=parse_delta, default=math.exp(-28.0),
                   help="privacy delta; accepts e^-28 form")
    p.add_argument("--beta", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, default=None,
                   help="output base path; writes <out>.json (and <out>.csv for experiments)")
    p.add_argument("--zero-noise", action="store_true",
                   help="deterministic test hook: disables all mechanism noise")


def _stream(args) -> RandomStream:
    mode = NoiseMode.ZERO_NOISE if args.zero_noise else NoiseMode.PRIVATE
    return RandomStream(args.seed, 0, mode)


def _emit_json(payload: dict, args) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, default=_jsonify)
    if args.out:
        with open(args.out + ".json", "w") as f:
            f.write(text + "\n")
    print(text)


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpcluster",
                                     description="Differentially private clustering toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("min-tuples", help="minimal tuple count for the privacy guarantee")
    _add_common(p)

    for name in ("ktuple-averages", "ktuple-noisy-centers"):
        p = sub.add_parser(name, help=f"run {name} on a JSON-lines tuple database")
        _add_common(p)
        p.add_argument("--in", dest="infile", required=True, help="tuple database (JSON lines)")
        p.add_argument("--lambda", dest="lambda_bound", type=float, required=True)
        p.add_argument("--r-min", type=float, default=0.1)
        p.add_argument("--delta-sep", type=float, default=None)

    p = sub.add_parser("kmeans", help="private k-means on a CSV point set")
    _add_common(p)
    p.add_argument("--in", dest="infile", required=True, help="points CSV (one point per row)")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--s", type=int, required=True, help="per-run sample size")
    p.add_argument("--t", type=int, required=True, help="number of solver runs")
    p.add_argument("--gamma", type=float, default=1.0 / 16.0)
    p.add_argument("--lambda", dest="lambda_bound", type=float, required=True)

    p = sub.add_parser("gmm", help="private mixture learning from a mixture JSON config")
    _add_common(p)
    p.add_argument("--config", required=True, help="mixture spec JSON")
    p.add_argument("--n", type=int, required=True, help="half database size (2n points sampled)")
    p.add_argument("--s", type=int, required=True, help="chunk size")
    p.add_argument("--t", type=int, required=True, help="number of chunks / tuples")
    p.add_argument("--delta-sep", type=float, default=None)

    p = sub.add_parser("experiment", help="synthetic separation experiments")
    _add_common(p)
    p.add_argument("test_id", choices=["test1", "test2", "test3", "custom"])
    p.add_argument("--algorithm", choices=["averages", "noisy-centers"], default="noisy-centers")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--r-scale", type=float, default=512.0)
    p.add_argument("--tuples", type=int, required=True)
    p.add_argument("--samples-per-tuple", type=int, default=None)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--delta-sep", type=float, default=None)
    p.add_argument("--lambda", dest="lambda_bound", type=float, default=None)
    p.add_argument("--r-min", type=float, default=0.1)

    p = sub.add_parser("baseline", help="naive per-point-noise comparator")
    _add_common(p)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--r-scale", type=float, default=512.0)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--lambda", dest="lambda_bound", type=float, default=None)

    return parser


def _load_mixture(path: str) -> MixtureParams:
    with open(path) as f:
        spec = json.load(f)
    bounds = MixtureBounds(**spec["bounds"])
    means = np.asarray(spec["means"], dtype=float)
    if "sigma" in spec:
        return MixtureParams.spherical(spec["weights"], means, spec["sigma"], bounds)
    return MixtureParams(np.asarray(spec["weights"], dtype=float), means,
                         np.asarray(spec["sigmas"], dtype=float), bounds)


def _experiment_config(args) -> ExperimentConfig:
    return ExperimentConfig(
        test_id=args.test_id if hasattr(args, "test_id") else "test1",
        algorithm=getattr(args, "algorithm", "baseline"),
        k=args.k,
        d=args.d,
        r_scale=args.r_scale,
        tuples=getattr(args, "tuples", 0),
        trials=args.trials,
        seed=args.seed,
        epsilon=args.epsilon,
        delta=args.delta,
        beta=args.beta,
        delta_sep=getattr(args, "delta_sep", None),
        lambda_bound=args.lambda_bound,
        r_min=getattr(args, "r_min", 0.1),
        samples_per_tuple=getattr(args, "samples_per_tuple", None),
        zero_noise=args.zero_noise,
    ).resolved()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    budget = PrivacyBudget(args.epsilon, args.delta)

    if args.command == "min-tuples":
        n = min_tuples_for_privacy(budget, args.beta)
        _emit_json({"min_tuples": n, "epsilon": args.epsilon, "delta": args.delta,
                    "beta": args.beta}, args)
        return 0

    if args.command in ("ktuple-averages", "ktuple-noisy-centers"):
        db = TupleDatabase.from_jsonl(args.infile, lambda_bound=args.lambda_bound)
        rng = _stream(args)
        if args.command == "ktuple-averages":
            result = private_k_averages(db, budget, args.beta, args.r_min, args.lambda_bound, rng)
        else:
            from .experiments import default_delta_sep

            delta_sep = args.delta_sep or default_delta_sep(db.k, args.epsilon, args.delta, args.beta)
            result = private_k_noisy_centers(db, budget, args.beta, delta_sep, rng,
                                             lambda_bound=args.lambda_bound)
        _emit_json({"status": result.status,
                    "centers": None if result.centers is None else result.centers,
                    "info": result.info, "n": db.n, "k": db.k, "d": db.d}, args)
        return 0 if result.success else 1

    if args.command == "kmeans":
        points = np.loadtxt(args.infile, delimiter=",", ndmin=2)
        cfg = KMeansConfig(args.k, args.s, args.t, args.gamma, args.lambda_bound, budget, args.beta)
        result = private_k_means(points, cfg, _stream(args))
        payload = {"status": result.status,
                   "centers": None if result.centers is None else result.centers,
                   "cost": None if result.centers is None else kmeans_cost(points, result.centers),
                   "info": result.info, "seed": args.seed,
                   "budget_split": {"tuple_stage": [args.epsilon / 6, args.delta / (4 * math.exp(args.epsilon))],
                                    "averager": [args.epsilon / 12, args.delta / (8 * math.exp(args.epsilon))]}}
        _emit_json(payload, args)
        return 0 if result.success else 1

    if args.command == "gmm":
        mixture = _load_mixture(args.config)
        rng = _stream(args)
        points, _ = sample_mixture(mixture, 2 * args.n, rng.split(0))
        result = private_k_gmm(points, mixture.k, args.s, args.t, budget, rng.split(1),
                               bounds=mixture.bounds, delta_sep=args.delta_sep, beta=args.beta)
        payload = {"status": result.status, "info": result.info, "seed": args.seed}
        if result.success:
            err = mixture_param_error(mixture, result.estimate)
            payload["estimate"] = {"weights": result.estimate.weights,
                                   "means": result.estimate.means,
                                   "variances": result.estimate.variances}
            payload["errors"] = {"mean": err.mean_errors, "weight": err.weight_errors,
                                 "scale": err.scale_errors}
        _emit_json(payload, args)
        return 0 if result.success else 1

    if args.command == "experiment":
        cfg = _experiment_config(args)
        report = run_separation_test(cfg)
        if args.out:
            report.write_csv(args.out + ".csv")
            report.write_json(args.out + ".json")
        print(json.dumps(report.summary, sort_keys=True))
        return 0

    if args.command == "baseline":
        cfg = _experiment_config(args)
        report = baseline_noise_then_fit(cfg, n_samples=args.samples)
        if args.out:
            report.write_csv(args.out + ".csv")
            report.write_json(args.out + ".json")
        print(json.dumps(report.summary, sort_keys=True))
        return 0

    raise ParameterError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    raise SystemExit(main())
