"""End-to-end experiment orchestration.

Protocol: ingest or synthesize a 24-week hourly trace, split it into the
four six-week periods A-D, optionally restrict to superpeers (filtered on
A for the training side and on C for the test side), train on features(A)
with labels(B), predict period D from features(C), score the predictions,
and optionally hand them to the placement/pre-loading simulators.

Every artifact is reproducible from the config plus one root seed; all
randomness flows through named substreams recorded in the report header.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields

import numpy as np

from . import dht, f2f, features, logreg, metrics, newsfeed, synth, trace
from .errors import DataError
from .rng import derive_seed, substream


@dataclass
class ExperimentConfig:
    # trace source: exactly one of trace_path / profiles_path
    trace_path: str = ""
    profiles_path: str = ""
    weeks: int = 24
    # filtering
    filter: str = "all"  # all | superpeer
    threshold_hours: float = 4.0
    # model
    standardize: bool = True
    alpha: float = logreg.DEFAULT_ALPHA
    grad_tol: float = logreg.DEFAULT_GRAD_TOL
    max_iter: int = logreg.DEFAULT_MAX_ITER
    batches: int = 1
    # evaluation
    time_window_weeks: float = 1.0
    # simulators
    sim_dht: bool = False
    dht_replicas: int = 0  # 0 = derive from measured availability
    dht_iterations: int = 50
    dht_reps: int = 20
    sample_size: int = 408
    sim_f2f: bool = False
    f2f_capacity: int = 0  # 0 = same as dht_replicas
    f2f_degree: int = 20
    f2f_rewire: float = 0.5
    f2f_reps: int = 20
    sim_newsfeed: bool = False
    newsfeed_max_n: int = 20
    # randomness
    seed: int = 0

    def __post_init__(self):
        if self.filter not in ("all", "superpeer"):
            raise DataError(f"filter must be 'all' or 'superpeer', not {self.filter!r}")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentConfig":
        defaults = cls()
        kwargs = {}
        for key, value in mapping.items():
            if not hasattr(defaults, key):
                raise DataError(f"unknown config key {key!r}")
            current = getattr(defaults, key)
            if isinstance(current, bool):
                kwargs[key] = str(value).strip() in ("1", "true", "yes", "on")
            elif isinstance(current, int):
                kwargs[key] = int(value)
            elif isinstance(current, float):
                kwargs[key] = float(value)
            else:
                kwargs[key] = str(value)
        return cls(**kwargs)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = int(value)
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> dict:
    """Flat `key=value` lines; '#' starts a comment."""
    mapping = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataError(f"config line without '=': {raw!r}")
        mapping[key.strip()] = value.strip()
    return mapping


def read_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return ExperimentConfig.from_mapping(parse_config_text(fh.read()))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    matrix: trace.AvailabilityMatrix
    split: trace.PeriodSplit
    train_users: tuple
    test_users: tuple
    design: features.DesignMatrix
    model: logreg.AvailabilityModel
    predictions: dht.PredictionMatrix
    scored: metrics.ScoredLabels
    metric_rows: list = field(default_factory=list)
    artifact_paths: dict = field(default_factory=dict)


def load_trace(config: ExperimentConfig) -> trace.AvailabilityMatrix:
    if bool(config.trace_path) == bool(config.profiles_path):
        raise DataError("config must name exactly one of trace_path / profiles_path")
    if config.trace_path:
        if not os.path.exists(config.trace_path):
            raise DataError(f"trace file not found: {config.trace_path}")
        return trace.read_matrix(config.trace_path)
    profiles = synth.read_profiles(config.profiles_path)
    return synth.generate_trace(profiles, weeks=config.weeks, seed=config.seed)


def select_users(
    m: trace.AvailabilityMatrix, split: trace.PeriodSplit, config: ExperimentConfig
):
    """(training-side users, test-side users) under the configured filter."""
    if config.filter == "superpeer":
        train = trace.filter_superpeers(m, split.a, config.threshold_hours)
        test = trace.filter_superpeers(m, split.c, config.threshold_hours)
    else:
        train = list(m.users)
        test = list(m.users)
    if not train or not test:
        raise DataError("filtering removed every user")
    return tuple(train), tuple(test)


def train_model(
    m: trace.AvailabilityMatrix,
    obs_range: range,
    label_range: range,
    users,
    config: ExperimentConfig,
) -> tuple:
    """Fit the posterior on features(obs_range) with labels(label_range)."""
    design = features.build_design_matrix(
        m, obs_range, label_range, users, standardize=config.standardize
    )
    X = logreg.add_intercept(design.features)
    y = design.labels
    prior = logreg.GaussianPrior.flat(X.shape[1], alpha=config.alpha)
    if config.batches > 1:
        bounds = np.linspace(0, X.shape[0], config.batches + 1).astype(int)
        batches = [(X[a:b], y[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]
        posterior = logreg.fit_batched(
            batches, prior, grad_tol=config.grad_tol, max_iter=config.max_iter
        )
    else:
        posterior = logreg.fit_laplace(
            X, y, prior, grad_tol=config.grad_tol, max_iter=config.max_iter
        )
    model = logreg.AvailabilityModel(
        posterior=posterior,
        standardized=design.standardized,
        feature_means=design.feature_means,
        feature_sds=design.feature_sds,
    )
    return design, model


def predict_period(
    m: trace.AvailabilityMatrix,
    model: logreg.AvailabilityModel,
    obs_range: range,
    target_range: range,
    users,
) -> dht.PredictionMatrix:
    """Probability grid for ``target_range`` from observations in ``obs_range``.

    Only the observation window is read, so future (label-period) data can
    never leak into the predictions.
    """
    grid = features.feature_grid(m, obs_range, target_range, users)
    n_u, n_t, _ = grid.shape
    probs = model.predict_features(grid.reshape(n_u * n_t, features.N_FEATURES))
    return dht.PredictionMatrix(tuple(users), probs.reshape(n_u, n_t), target_range.start)


def score_predictions(
    m: trace.AvailabilityMatrix, P: dht.PredictionMatrix, target_range: range
) -> metrics.ScoredLabels:
    rows = m.rows(P.users)
    labels = m.cells[np.ix_(rows, range(target_range.start, target_range.stop))]
    slots = np.tile(np.arange(target_range.start, target_range.stop), len(rows))
    return metrics.ScoredLabels(
        labels=labels.reshape(-1).astype(np.uint8),
        probs=P.probs.reshape(-1),
        slots=slots,
    )


def run_experiment(config: ExperimentConfig, out_dir=None) -> ExperimentResult:
    """Execute the full protocol; write the report directory when given."""
    m = load_trace(config)
    split = trace.split_periods(m)
    train_users, test_users = select_users(m, split, config)

    design, model = train_model(m, split.a, split.b, train_users, config)
    predictions = predict_period(m, model, split.c, split.d, test_users)
    scored = score_predictions(m, predictions, split.d)

    overall, pos, neg = metrics.class_accuracy(scored)
    metric_rows = [
        ("auc", "D", metrics.auc(scored)),
        ("gm", "D", metrics.gm(scored)),
        ("accuracy", "D", overall),
        ("accuracy_online", "D", pos),
        ("accuracy_offline", "D", neg),
    ]

    result = ExperimentResult(
        config=config,
        matrix=m,
        split=split,
        train_users=train_users,
        test_users=test_users,
        design=design,
        model=model,
        predictions=predictions,
        scored=scored,
        metric_rows=metric_rows,
    )

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_report(result, out_dir)
    return result


def _write_report(result: ExperimentResult, out_dir) -> None:
    config = result.config
    paths = result.artifact_paths

    def out(name):
        paths[name] = os.path.join(out_dir, name)
        return paths[name]

    with open(out("config.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(config.to_text())
        fh.write(f"#train_users={len(result.train_users)}\n")
        fh.write(f"#test_users={len(result.test_users)}\n")
        fh.write("#substreams=synth-user/<i>,dht-sample/<r>,dht-random-ring/<r>,"
                 "dht-opt/<r>,f2f-sample/<r>,f2f-graph/<r>,f2f-random/<r>,"
                 "f2f-predictive/<r>,f2f-ra/<r>\n")

    logreg.save_model(result.model, out("model.txt"))
    dht.write_predictions(result.predictions, out("predictions.pm"))
    metrics.write_metric_report(result.metric_rows, out("metrics.csv"))

    roc = metrics.roc_points(result.scored)
    metrics.write_xy_csv(roc[:, 0], roc[:, 1], out("roc.csv"), header=("fpr", "tpr"))

    window = int(round(config.time_window_weeks * result.matrix.slots_per_week))
    for name in ("auc", "gm"):
        xs, ys = metrics.metric_over_time(result.scored, window, name)
        metrics.write_xy_csv(xs, ys, out(f"{name}_over_time.csv"), header=("slot", name))

    if config.sim_dht or config.sim_f2f or config.sim_newsfeed:
        _run_simulators(result, out_dir)


def _sample_users(users, sample_size, rng):
    users = list(users)
    if sample_size and len(users) > sample_size:
        idx = np.sort(rng.choice(len(users), size=sample_size, replace=False))
        return [users[i] for i in idx]
    return users


def _summarize(report_rows):
    """Per-strategy mean and sample sd of predicted and real availability."""
    by_strategy = {}
    for _, strategy, pred, real in report_rows:
        by_strategy.setdefault(strategy, ([], []))
        by_strategy[strategy][0].append(pred)
        by_strategy[strategy][1].append(real)
    out = {}
    for strategy, (preds, reals) in by_strategy.items():
        preds, reals = np.array(preds), np.array(reals)
        out[strategy] = (
            float(preds.mean()),
            float(preds.std(ddof=1)) if len(preds) > 1 else 0.0,
            float(reals.mean()),
            float(reals.std(ddof=1)) if len(reals) > 1 else 0.0,
        )
    return out


def _write_sim_report(rows, summary, rho, path_rows, path_summary) -> None:
    with open(path_rows, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("rep,strategy,predicted_avail,real_avail\n")
        for rep, strategy, pred, real in rows:
            fh.write(f"{rep},{strategy},{pred:.10g},{real:.10g}\n")
    with open(path_summary, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("strategy,predicted_mean,predicted_sd,real_mean,real_sd\n")
        for strategy in sorted(summary):
            p_m, p_s, r_m, r_s = summary[strategy]
            fh.write(f"{strategy},{p_m:.10g},{p_s:.10g},{r_m:.10g},{r_s:.10g}\n")
        if rho is not None:
            fh.write(f"#equivalent_redundancy_increase={rho:.10g}\n")


def default_replicas(m, users, reference: range, target_unavail: float = 0.01) -> int:
    a_bar = trace.average_availability(m, users, reference)
    if not 0.0 < a_bar < 1.0:
        raise DataError("average availability is degenerate; set replicas explicitly")
    return dht.redundancy_for_target(a_bar, target_unavail)


def run_dht_simulation(
    m: trace.AvailabilityMatrix,
    predictions: dht.PredictionMatrix,
    eval_range: range,
    n: int,
    iterations: int = 50,
    reps: int = 20,
    sample_size: int = 408,
    seed: int = 0,
    out_dir=None,
    check: bool = False,
):
    """Random vs optimized ring placement over ``reps`` seeded repetitions."""
    rows = []
    for rep in range(reps):
        users = _sample_users(
            predictions.users, sample_size, substream(seed, "dht-sample", rep)
        )
        P = predictions.subset(users)
        sub = submatrix(m, users)
        rand_ring = dht.random_ring(len(users), substream(seed, "dht-random-ring", rep))
        opt_ring = dht.assign_identifiers(
            P,
            n,
            iterations=iterations,
            seed=derive_seed(seed, "dht-opt", rep),
            check_monotonic=check,
        )
        for strategy, ring in (("random", rand_ring), ("optimized", opt_ring)):
            rows.append(
                (
                    rep,
                    strategy,
                    dht.ring_objective(P, ring, n),
                    dht.measure_availability(sub, ring, n, eval_range),
                )
            )
    summary = _summarize(rows)
    rho = None
    a0, a1 = summary["random"][2], summary["optimized"][2]
    if 0.0 < a0 < 1.0 and 0.0 < a1 < 1.0:
        rho = dht.equivalent_redundancy_increase(a0, a1)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_sim_report(
            rows,
            summary,
            rho,
            os.path.join(out_dir, "dht_report.csv"),
            os.path.join(out_dir, "dht_summary.csv"),
        )
    return rows, summary, rho


def place_random(g: f2f.SocialGraph, k: int, seed: int):
    """Initialization-only placement: each node stores k random friends' data."""
    rng = substream(seed, "f2f-random")
    holders = [set() for _ in range(g.n_nodes)]
    for v in range(g.n_nodes):
        friends = g.neighbors(v)
        for f in rng.choice(friends, size=min(k, len(friends)), replace=False):
            holders[int(f)].add(v)
    return f2f.PlacementMapping(holders=holders, capacity=k, graph=g)


def run_f2f_simulation(
    m: trace.AvailabilityMatrix,
    predictions: dht.PredictionMatrix,
    train_range: range,
    eval_range: range,
    k: int,
    degree: int = 20,
    rewire_p: float = 0.5,
    reps: int = 20,
    sample_size: int = 408,
    seed: int = 0,
    out_dir=None,
    check: bool = False,
):
    """Random / R&A / predictive placement over seeded repetitions.

    Each repetition draws its own node sample and social graph; the R&A
    correlation window is the training-side range, never the test range.
    """
    rows = []
    for rep in range(reps):
        users = _sample_users(
            predictions.users, sample_size, substream(seed, "f2f-sample", rep)
        )
        P = predictions.subset(users)
        sub = submatrix(m, users)
        graph = f2f.generate_ws_graph(
            len(users), degree=degree, rewire_p=rewire_p, seed=derive_seed(seed, "f2f-graph", rep)
        )
        placements = (
            ("random", place_random(graph, k, derive_seed(seed, "f2f-random", rep))),
            (
                "ra",
                f2f.place_ra(
                    sub, train_range, graph, k, seed=derive_seed(seed, "f2f-ra", rep), check=check
                ),
            ),
            (
                "predictive",
                f2f.place_predictive(
                    P, graph, k, seed=derive_seed(seed, "f2f-pred", rep), check=check
                ),
            ),
        )
        n_owners = graph.n_nodes
        for strategy, mapping in placements:
            rows.append(
                (
                    rep,
                    strategy,
                    f2f.placement_objective(P, mapping) / n_owners,
                    f2f.measure_placement_availability(sub, mapping, eval_range),
                )
            )
    summary = _summarize(rows)
    rho = None
    a0, a1 = summary["ra"][2], summary["predictive"][2]
    if 0.0 < a0 < 1.0 and 0.0 < a1 < 1.0:
        rho = dht.equivalent_redundancy_increase(a0, a1)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_sim_report(
            rows,
            summary,
            rho,
            os.path.join(out_dir, "f2f_report.csv"),
            os.path.join(out_dir, "f2f_summary.csv"),
        )
    return rows, summary, rho


def run_newsfeed_simulation(
    m: trace.AvailabilityMatrix,
    predictions: dht.PredictionMatrix,
    train_range: range,
    eval_range: range,
    max_n: int = 20,
    out_path=None,
):
    """Hit-ratio curves on the evaluation range; baseline scores come from
    the training range."""
    sub = submatrix(m, predictions.users)
    train_avail = sub.cells[:, train_range.start : train_range.stop].mean(axis=1)
    run = newsfeed.simulate_preload(
        sub, predictions, train_avail, n_values=range(1, max_n + 1), slots=eval_range
    )
    if out_path is not None:
        newsfeed.write_preload_csv(run, out_path)
    return run


def _run_simulators(result: ExperimentResult, out_dir) -> None:
    config = result.config
    m, split = result.matrix, result.split
    replicas = config.dht_replicas or default_replicas(m, result.test_users, split.c)
    if config.sim_dht:
        run_dht_simulation(
            m,
            result.predictions,
            split.d,
            replicas,
            iterations=config.dht_iterations,
            reps=config.dht_reps,
            sample_size=config.sample_size,
            seed=config.seed,
            out_dir=out_dir,
        )
    if config.sim_f2f:
        run_f2f_simulation(
            m,
            result.predictions,
            split.c,
            split.d,
            k=config.f2f_capacity or replicas,
            degree=config.f2f_degree,
            rewire_p=config.f2f_rewire,
            reps=config.f2f_reps,
            sample_size=config.sample_size,
            seed=config.seed,
            out_dir=out_dir,
        )
    if config.sim_newsfeed:
        run_newsfeed_simulation(
            m,
            result.predictions,
            split.c,
            split.d,
            max_n=config.newsfeed_max_n,
            out_path=os.path.join(out_dir, "newsfeed_curve.csv"),
        )


def submatrix(m: trace.AvailabilityMatrix, user_ids) -> trace.AvailabilityMatrix:
    """Row-subset of a matrix, rows ordered as ``user_ids``."""
    rows = m.rows(user_ids)
    return trace.AvailabilityMatrix(m.origin_ts, m.slot_seconds, tuple(user_ids), m.cells[rows])


# ---------------------------------------------------------------------------
# Per-feature ablation (always in standardized space so the reported weights
# are comparable across features)
# ---------------------------------------------------------------------------


def per_feature_ablation(config: ExperimentConfig, out_dir=None):
    """AUC/GM for the full model and each single-feature model.

    Returns rows (feature, auc, gm, beta_mean, beta_sd); the full model row
    comes first with blank weight columns.
    """
    m = load_trace(config)
    split = trace.split_periods(m)
    train_users, test_users = select_users(m, split, config)

    design = features.build_design_matrix(m, split.a, split.b, train_users, standardize=True)
    X_full = logreg.add_intercept(design.features)
    y = design.labels
    test_grid = features.feature_grid(m, split.c, split.d, test_users)
    n_u, n_t, _ = test_grid.shape
    test_raw = test_grid.reshape(n_u * n_t, features.N_FEATURES)
    rows_idx = m.rows(test_users)
    labels = (
        m.cells[np.ix_(rows_idx, range(split.d.start, split.d.stop))].reshape(-1).astype(np.uint8)
    )

    def fit_and_score(columns):
        X = X_full[:, [0] + [c + 1 for c in columns]]
        prior = logreg.GaussianPrior.flat(X.shape[1], alpha=config.alpha)
        posterior = logreg.fit_laplace(
            X, y, prior, grad_tol=config.grad_tol, max_iter=config.max_iter
        )
        model = logreg.AvailabilityModel(
            posterior=posterior,
            standardized=True,
            feature_means=design.feature_means[list(columns)],
            feature_sds=design.feature_sds[list(columns)],
        )
        probs = model.predict_features(test_raw[:, list(columns)])
        scored = metrics.ScoredLabels(labels=labels, probs=probs)
        return posterior, metrics.auc(scored), metrics.gm(scored)

    results = []
    _, auc_all, gm_all = fit_and_score(list(range(features.N_FEATURES)))
    results.append(("ALL", auc_all, gm_all, None, None))
    for j, name in enumerate(features.FEATURE_NAMES):
        posterior, auc_j, gm_j = fit_and_score([j])
        beta_mean = float(posterior.mean[1])
        beta_sd = float(math.sqrt(posterior.cov[1, 1]))
        results.append((name, auc_j, gm_j, beta_mean, beta_sd))

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "ablation.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("feature,auc,gm,beta_mean,beta_sd\n")
            for name, a, g, bm, bs in results:
                bm_s = "" if bm is None else f"{bm:.10g}"
                bs_s = "" if bs is None else f"{bs:.10g}"
                fh.write(f"{name},{a:.10g},{g:.10g},{bm_s},{bs_s}\n")
    return results
