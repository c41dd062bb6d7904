"""Command-line front-end: every pipeline stage and simulator as a subcommand.

Exit codes: 0 success, 2 usage error (from argparse), 1 data error. All
commands write only below their --out path and never read stdin; rerunning
a command with identical flags and seed reproduces the output bytes.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import clustering, dht, f2f, features, logreg, metrics, pipeline, synth, trace
from .errors import DataError


def _parse_slot_range(spec: str, m: trace.AvailabilityMatrix) -> range:
    """Accept a period name (A-D) or an explicit start:stop slot range."""
    token = spec.strip()
    if token.upper() in trace.PERIOD_NAMES:
        return trace.split_periods(m)[token.upper()]
    start_s, sep, stop_s = token.partition(":")
    if not sep:
        raise DataError(f"bad range {spec!r}: expected A/B/C/D or start:stop")
    try:
        start, stop = int(start_s), int(stop_s)
    except ValueError:
        raise DataError(f"bad range {spec!r}: bounds must be integers") from None
    return m.check_range(range(start, stop))


def _read_users_file(path) -> list:
    with open(path, encoding="utf-8") as fh:
        users = [line.strip() for line in fh if line.strip()]
    if not users:
        raise DataError(f"{path}: user list is empty")
    return users


def _write_users_file(users, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for user in users:
            fh.write(user + "\n")


# ---------------------------------------------------------------------------
# subcommand implementations
# ---------------------------------------------------------------------------


def _cmd_ingest(args) -> int:
    events = trace.read_events_csv(args.events)
    m = trace.ingest_events(
        events,
        origin_ts=args.origin_ts,
        slot_seconds=args.slot_seconds,
        horizon_slots=args.horizon_slots,
        drop_empty=args.drop_empty,
    )
    trace.write_matrix(m, args.out)
    return 0


def _cmd_synth(args) -> int:
    profiles = synth.read_profiles(args.profiles)
    m = synth.generate_trace(profiles, weeks=args.weeks, seed=args.seed)
    trace.write_matrix(m, args.out)
    return 0


def _cmd_split(args) -> int:
    m = trace.read_matrix(args.trace)
    split = trace.split_periods(m)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("period,start,stop\n")
        for name, rng in split.as_dict().items():
            fh.write(f"{name},{rng.start},{rng.stop}\n")
    return 0


def _cmd_filter(args) -> int:
    m = trace.read_matrix(args.trace)
    reference = _parse_slot_range(args.reference, m)
    users = trace.filter_superpeers(m, reference, args.threshold)
    _write_users_file(users, args.out)
    return 0


def _cmd_features(args) -> int:
    m = trace.read_matrix(args.trace)
    obs_range = _parse_slot_range(args.obs_range, m)
    label_range = _parse_slot_range(args.label_range, m)
    users = _read_users_file(args.users) if args.users else None
    design = features.build_design_matrix(
        m, obs_range, label_range, users, standardize=args.standardize
    )
    features.write_design_csv(design, args.out)
    return 0


def _cmd_train(args) -> int:
    design = features.read_design_csv(args.design)
    X = logreg.add_intercept(design.features)
    prior = logreg.GaussianPrior.flat(X.shape[1], alpha=args.alpha)
    if args.batches > 1:
        bounds = np.linspace(0, X.shape[0], args.batches + 1).astype(int)
        batches = [(X[a:b], design.labels[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]
        posterior = logreg.fit_batched(
            batches, prior, grad_tol=args.grad_tol, max_iter=args.max_iter
        )
    else:
        posterior = logreg.fit_laplace(
            X, design.labels, prior, grad_tol=args.grad_tol, max_iter=args.max_iter
        )
    model = logreg.AvailabilityModel(
        posterior=posterior,
        standardized=design.standardized,
        feature_means=design.feature_means,
        feature_sds=design.feature_sds,
    )
    logreg.save_model(model, args.out)
    return 0


def _cmd_predict(args) -> int:
    model = logreg.load_model(args.model)
    m = trace.read_matrix(args.trace)
    obs_range = _parse_slot_range(args.obs_range, m)
    target_range = _parse_slot_range(args.target_range, m)
    users = _read_users_file(args.users) if args.users else list(m.users)
    P = pipeline.predict_period(m, model, obs_range, target_range, users)
    dht.write_predictions(P, args.out)
    return 0


def _cmd_eval(args) -> int:
    P = dht.read_predictions(args.pred)
    m = trace.read_matrix(args.labels)
    eval_range = _parse_slot_range(args.range, m)
    if range(P.start_slot, P.start_slot + P.n_slots) != eval_range:
        raise DataError(
            f"prediction window [{P.start_slot}, {P.start_slot + P.n_slots}) "
            f"does not match --range [{eval_range.start}, {eval_range.stop})"
        )
    scored = pipeline.score_predictions(m, P, eval_range)
    overall, pos, neg = metrics.class_accuracy(scored)
    rows = [
        ("auc", args.range, metrics.auc(scored)),
        ("gm", args.range, metrics.gm(scored)),
        ("accuracy", args.range, overall),
        ("accuracy_online", args.range, pos),
        ("accuracy_offline", args.range, neg),
    ]
    os.makedirs(args.out, exist_ok=True)
    metrics.write_metric_report(rows, os.path.join(args.out, "metrics.csv"))
    roc = metrics.roc_points(scored)
    metrics.write_xy_csv(
        roc[:, 0], roc[:, 1], os.path.join(args.out, "roc.csv"), header=("fpr", "tpr")
    )
    window = int(round(args.window_weeks * m.slots_per_week))
    for name in ("auc", "gm"):
        xs, ys = metrics.metric_over_time(scored, window, name)
        metrics.write_xy_csv(
            xs, ys, os.path.join(args.out, f"{name}_over_time.csv"), header=("slot", name)
        )
    return 0


def _cmd_cluster(args) -> int:
    m = trace.read_matrix(args.trace)
    slots = _parse_slot_range(args.range, m)
    result = clustering.kmeans_availability(
        m, slots, k=args.k, seed=args.seed, restarts=args.restarts
    )
    clustering.write_clusters_csv(result, args.out)
    return 0


def _load_sim_inputs(args):
    P = dht.read_predictions(args.pred)
    m = trace.read_matrix(args.trace)
    missing = [u for u in P.users if u not in set(m.users)]
    if missing:
        raise DataError(f"prediction users missing from trace: {missing[:3]}...")
    eval_range = _parse_slot_range(args.eval_range, m)
    train_range = _parse_slot_range(args.train_range, m)
    return m, P, train_range, eval_range


def _cmd_sim_dht(args) -> int:
    m, P, train_range, eval_range = _load_sim_inputs(args)
    n = args.replicas or pipeline.default_replicas(m, P.users, train_range)
    pipeline.run_dht_simulation(
        m,
        P,
        eval_range,
        n,
        iterations=args.iterations,
        reps=args.reps,
        sample_size=args.sample_size,
        seed=args.seed,
        out_dir=args.out,
    )
    return 0


def _cmd_sim_f2f(args) -> int:
    m, P, train_range, eval_range = _load_sim_inputs(args)
    k = args.capacity or pipeline.default_replicas(m, P.users, train_range)
    pipeline.run_f2f_simulation(
        m,
        P,
        train_range,
        eval_range,
        k,
        degree=args.degree,
        rewire_p=args.rewire,
        reps=args.reps,
        sample_size=args.sample_size,
        seed=args.seed,
        out_dir=args.out,
    )
    return 0


def _cmd_sim_newsfeed(args) -> int:
    m, P, train_range, eval_range = _load_sim_inputs(args)
    pipeline.run_newsfeed_simulation(
        m, P, train_range, eval_range, max_n=args.max_n, out_path=args.out
    )
    return 0


def _cmd_run(args) -> int:
    mapping = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            mapping.update(pipeline.parse_config_text(fh.read()))
    overrides = {
        "trace_path": args.trace,
        "profiles_path": args.profiles,
        "weeks": args.weeks,
        "filter": args.filter,
        "seed": args.seed,
        "sim_dht": args.sim_dht or None,
        "sim_f2f": args.sim_f2f or None,
        "sim_newsfeed": args.sim_newsfeed or None,
    }
    for key, value in overrides.items():
        if value not in (None, ""):
            mapping[key] = value
    if args.no_standardize:
        mapping["standardize"] = 0
    config = pipeline.ExperimentConfig.from_mapping(mapping)
    pipeline.run_experiment(config, out_dir=args.out)
    if args.ablation:
        pipeline.per_feature_ablation(config, out_dir=args.out)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="availpred",
        description="Forecast per-user availability and drive placement/pre-loading with it.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--out", required=True, help="output file or directory")
        p.add_argument("--threads", type=int, default=0,
                       help="cap on worker threads (results are identical for any value)")
        return p

    p = add("ingest", _cmd_ingest, "rasterize a session-event CSV into a matrix")
    p.add_argument("--events", required=True)
    p.add_argument("--origin-ts", type=int, required=True)
    p.add_argument("--slot-seconds", type=int, default=trace.SLOT_SECONDS_DEFAULT)
    p.add_argument("--horizon-slots", type=int, required=True)
    p.add_argument("--drop-empty", action="store_true",
                   help="drop users with no online slot in the horizon")

    p = add("synth", _cmd_synth, "generate a synthetic trace from a profile file")
    p.add_argument("--profiles", required=True)
    p.add_argument("--weeks", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)

    p = add("split", _cmd_split, "emit the four six-week period ranges")
    p.add_argument("--trace", required=True)

    p = add("filter", _cmd_filter, "list users above the hours-per-day threshold")
    p.add_argument("--trace", required=True)
    p.add_argument("--reference", default="A", help="period name or start:stop")
    p.add_argument("--threshold", type=float, default=4.0)

    p = add("features", _cmd_features, "build a design matrix CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("--obs-range", default="A")
    p.add_argument("--label-range", default="B")
    p.add_argument("--users", default="", help="optional user list file")
    p.add_argument("--standardize", action="store_true")

    p = add("train", _cmd_train, "fit the Gaussian posterior from a design CSV")
    p.add_argument("--design", required=True)
    p.add_argument("--alpha", type=float, default=logreg.DEFAULT_ALPHA)
    p.add_argument("--grad-tol", type=float, default=logreg.DEFAULT_GRAD_TOL)
    p.add_argument("--max-iter", type=int, default=logreg.DEFAULT_MAX_ITER)
    p.add_argument("--batches", type=int, default=1)

    p = add("predict", _cmd_predict, "probability grid for a future range")
    p.add_argument("--model", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--obs-range", default="C")
    p.add_argument("--target-range", default="D")
    p.add_argument("--users", default="")

    p = add("eval", _cmd_eval, "score predictions against a trace")
    p.add_argument("--pred", required=True)
    p.add_argument("--labels", required=True, help="trace file with the true availability")
    p.add_argument("--range", default="D")
    p.add_argument("--window-weeks", type=float, default=1.0)

    p = add("cluster", _cmd_cluster, "k-means over one week of availability rows")
    p.add_argument("--trace", required=True)
    p.add_argument("--range", required=True, help="one-week slot range, e.g. 2016:2184")
    p.add_argument("--k", type=int, default=clustering.DEFAULT_K)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=clustering.DEFAULT_RESTARTS)

    def add_sim(name, func, help_text):
        p = add(name, func, help_text)
        p.add_argument("--pred", required=True)
        p.add_argument("--trace", required=True)
        p.add_argument("--train-range", default="C")
        p.add_argument("--eval-range", default="D")
        return p

    p = add_sim("sim-dht", _cmd_sim_dht, "ring placement simulation")
    p.add_argument("--replicas", type=int, default=0, help="0 derives n from availability")
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--sample-size", type=int, default=408)
    p.add_argument("--seed", type=int, default=0)

    p = add_sim("sim-f2f", _cmd_sim_f2f, "friend-to-friend placement simulation")
    p.add_argument("--capacity", type=int, default=0, help="0 derives k from availability")
    p.add_argument("--degree", type=int, default=20)
    p.add_argument("--rewire", type=float, default=0.5)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--sample-size", type=int, default=408)
    p.add_argument("--seed", type=int, default=0)

    p = add_sim("sim-newsfeed", _cmd_sim_newsfeed, "pre-loading hit-ratio curves")
    p.add_argument("--max-n", type=int, default=20)

    p = add("run", _cmd_run, "full experiment: train, predict, score, simulate")
    p.add_argument("--config", default="", help="flat key=value config file")
    p.add_argument("--trace", default="")
    p.add_argument("--profiles", default="")
    p.add_argument("--weeks", type=int, default=None)
    p.add_argument("--filter", choices=("all", "superpeer"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--sim-dht", action="store_true")
    p.add_argument("--sim-f2f", action="store_true")
    p.add_argument("--sim-newsfeed", action="store_true")
    p.add_argument("--ablation", action="store_true", help="also write the per-feature table")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
