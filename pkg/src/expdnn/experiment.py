"""Training, importance extraction, gradient checking and case reproduction."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import data
from .network import (
    ActivationKind,
    ExpDnnParams,
    LossKind,
    NetworkConfig,
    backward,
    compute_loss,
    forward,
    init_params,
)
from .gradcheck import DEFAULT_PRECISION, finite_difference_gradient
from .numerics import RngState, ShapeError, rng_uniform_array
from .optim import NadamHyper, NadamState, nadam_update

DEFAULT_EPOCHS = 60_000
DEFAULT_SEEDS = tuple(range(10))


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"loss became non-finite ({loss}) at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


@dataclass(frozen=True)
class DatasetSpec:
    """Either a builtin table id or a CSV path with its schema."""

    builtin: str | None = None
    csv_path: str | None = None
    schema: data.CsvSchema | None = None

    def __post_init__(self):
        if (self.builtin is None) == (self.csv_path is None):
            raise ValueError("give exactly one of builtin or csv_path")
        if self.csv_path is not None and self.schema is None:
            raise ValueError("a CSV dataset needs a schema")

    def load(self) -> data.Dataset:
        if self.builtin is not None:
            return data.builtin_dataset(self.builtin)
        return data.load_csv(self.csv_path, self.schema)

    @property
    def identifier(self) -> str:
        return self.builtin if self.builtin is not None else f"csv:{self.csv_path}"

    def to_dict(self) -> dict:
        if self.builtin is not None:
            return {"builtin": self.builtin}
        return {
            "csv": {
                "path": self.csv_path,
                "target_columns": list(self.schema.target_columns),
                "target_encoding": self.schema.target_encoding,
            }
        }


@dataclass(frozen=True)
class ExperimentConfig:
    network: NetworkConfig
    dataset: DatasetSpec
    selected_features: tuple[str, ...] | None = None
    epochs: int = DEFAULT_EPOCHS
    seed: int = 0
    optimizer: NadamHyper = field(default_factory=NadamHyper)
    loss_log_stride: int = 1000
    standardize: bool = False

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.loss_log_stride < 1:
            raise ValueError("loss_log_stride must be positive")

    def prepare(self, dataset: data.Dataset | None = None) -> data.Dataset:
        """Load (unless given), select features, optionally standardize, and check fit."""
        d = self.dataset.load() if dataset is None else dataset
        if self.selected_features is not None:
            d = data.select_features(d, self.selected_features)
        if self.standardize:
            d = data.standardize(d)
        check_fit(self.network, d)
        return d


def check_fit(network: NetworkConfig, d: data.Dataset) -> None:
    if d.features.shape[1] != network.n_inputs:
        raise ShapeError(
            f"network expects {network.n_inputs} inputs but the dataset has "
            f"{d.features.shape[1]} features {list(d.feature_names)}"
        )
    if d.targets.shape[1] != network.n_outputs:
        raise ShapeError(
            f"network expects {network.n_outputs} outputs but the dataset has "
            f"{d.targets.shape[1]} target columns"
        )


@dataclass
class TrainResult:
    params: ExpDnnParams
    loss_history: list[tuple[int, float]]
    final_loss: float
    seed: int


def train(config: ExperimentConfig, dataset: data.Dataset) -> TrainResult:
    """Full-batch training: one forward/backward/Nadam step per epoch.

    ``dataset`` must already match the network (see :meth:`ExperimentConfig.prepare`).
    """
    net = config.network
    check_fit(net, dataset)
    x, t = dataset.features, dataset.targets
    params, _ = init_params(net, RngState(config.seed))
    grads = ExpDnnParams.zeros(net)
    state = NadamState.for_params(params, config.optimizer)
    stride = config.loss_log_stride
    history: list[tuple[int, float]] = []

    # overflow surfaces as a non-finite loss and is reported as divergence
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(config.epochs):
            trace = forward(params, net, x)
            loss = _finite_loss(net.loss, trace.output, t, epoch)
            if epoch % stride == 0:
                history.append((epoch, loss))
            backward(params, net, trace, t, out=grads)
            nadam_update(state, params.vector, grads.vector)

        final = _finite_loss(net.loss, forward(params, net, x).output, t, config.epochs)
    history.append((config.epochs, final))
    return TrainResult(params=params, loss_history=history, final_loss=final, seed=config.seed)


def _finite_loss(kind: LossKind, y: np.ndarray, t: np.ndarray, epoch: int) -> float:
    if not np.all(np.isfinite(y)):
        raise DivergenceError(epoch, math.nan)
    loss = compute_loss(kind, y, t)
    if not math.isfinite(loss):
        raise DivergenceError(epoch, loss)
    return loss


# --- importance -------------------------------------------------------------


@dataclass(frozen=True)
class ImportanceEntry:
    feature: str
    weight: float
    abs_weight: float
    rank: int


@dataclass(frozen=True)
class ImportanceReport:
    entries: tuple[ImportanceEntry, ...]

    def by_feature(self) -> dict[str, ImportanceEntry]:
        return {e.feature: e for e in self.entries}

    def ranking(self) -> list[str]:
        return [e.feature for e in self.entries]

    def to_dict(self) -> list[dict]:
        return [
            {"feature": e.feature, "weight": e.weight, "abs_weight": e.abs_weight, "rank": e.rank}
            for e in self.entries
        ]


def explain(params: ExpDnnParams, feature_names) -> ImportanceReport:
    """Rank inputs by the absolute value of their explainable weight.

    Ranks are 1-based; equal magnitudes keep input order.
    """
    weights = np.asarray(params.explainable_weights if isinstance(params, ExpDnnParams) else params)
    names = list(feature_names)
    if len(names) != weights.shape[0]:
        raise ShapeError(f"{len(names)} feature names for {weights.shape[0]} explainable weights")
    order = sorted(range(len(names)), key=lambda i: (-abs(float(weights[i])), i))
    entries = tuple(
        ImportanceEntry(names[i], float(weights[i]), abs(float(weights[i])), rank)
        for rank, i in enumerate(order, start=1)
    )
    return ImportanceReport(entries)


# --- gradient check ---------------------------------------------------------


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    worst_parameter: str
    passed: bool
    tolerance: float
    points: int

    @property
    def offending_parameter(self) -> str | None:
        return None if self.passed else self.worst_parameter


BackwardFn = Callable[..., ExpDnnParams]


def relative_error(a: np.ndarray, f: np.ndarray) -> np.ndarray:
    return np.abs(a - f) / np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-8)


def _flat_names(params: ExpDnnParams) -> list[str]:
    names = []
    for name, arr in zip(params.names(), params.arrays()):
        for idx in np.ndindex(arr.shape):
            names.append(f"{name}[{','.join(map(str, idx))}]")
    return names


def perturbed_params(config: ExperimentConfig, seed: int) -> ExpDnnParams:
    """Initial params moved by one Nadam step on uniform(-1, 1) gradients."""
    params, rng = init_params(config.network, RngState(seed))
    g, _ = rng_uniform_array(rng, -1.0, 1.0, params.vector.shape)
    state = NadamState.for_params(params, config.optimizer)
    nadam_update(state, params.vector, g)
    return params


def grad_check(
    config: ExperimentConfig,
    dataset: data.Dataset,
    step: float = 1e-6,
    tolerance: float = 1e-5,
    points: int = 1,
    backward_fn: BackwardFn = backward,
    precision: int | None = DEFAULT_PRECISION,
) -> GradCheckReport:
    """Compare ``backward_fn`` with central finite differences.

    Point ``k`` uses seed ``config.seed + k``. Relative error per entry is
    ``|a - f| / max(|a|, |f|, 1e-8)``; the check passes iff the maximum over
    all entries and points is within ``tolerance``. The finite differences
    are taken in ``precision``-bit arithmetic (see :mod:`expdnn.gradcheck`).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    net = config.network
    x, t = dataset.features, dataset.targets
    worst, worst_name = 0.0, ""
    for k in range(points):
        params = perturbed_params(config, config.seed + k)
        analytic = backward_fn(params, net, forward(params, net, x), t).vector
        numeric = finite_difference_gradient(params, net, x, t, step, precision)
        err = relative_error(analytic, numeric)
        i = int(np.argmax(err))
        if err[i] > worst or not worst_name:
            worst, worst_name = float(err[i]), _flat_names(params)[i]
    return GradCheckReport(worst, worst_name, worst <= tolerance, tolerance, points)


# --- paper cases ------------------------------------------------------------


def table_network(n_inputs: int, n_outputs: int, head: str) -> NetworkConfig:
    """Three hidden layers as wide as the input: linear, tanh, tanh."""
    loss = {
        "linear": LossKind.MSE,
        "sigmoid": LossKind.BINARY_CROSS_ENTROPY,
        "softmax": LossKind.CATEGORICAL_CROSS_ENTROPY,
    }[head]
    return NetworkConfig(
        n_inputs=n_inputs,
        hidden_sizes=(n_inputs,) * 3,
        hidden_activations=(ActivationKind.LINEAR, ActivationKind.TANH, ActivationKind.TANH),
        n_outputs=n_outputs,
        output_activation=ActivationKind(head),
        loss=loss,
    )


@dataclass
class SeedRun:
    seed: int
    report: ImportanceReport
    final_loss: float
    initial_loss: float
    accuracy: float | None

    def weight(self, feature: str) -> float:
        return self.report.by_feature()[feature].weight

    def abs_weight(self, feature: str) -> float:
        return self.report.by_feature()[feature].abs_weight


@dataclass(frozen=True)
class Check:
    name: str
    predicate: Callable[[SeedRun], bool]
    threshold: float


@dataclass(frozen=True)
class CaseSpec:
    case_id: str
    dataset: str
    features: tuple[str, ...]
    head: str
    checks: tuple[Check, ...]

    def experiment(self, seed: int, epochs: int = DEFAULT_EPOCHS) -> ExperimentConfig:
        n_out = 3 if self.dataset == "iris" else 1
        return ExperimentConfig(
            network=table_network(len(self.features), n_out, self.head),
            dataset=DatasetSpec(builtin=self.dataset),
            selected_features=self.features,
            epochs=epochs,
            seed=seed,
        )


def _a(run: SeedRun, *names: str) -> list[float]:
    return [run.abs_weight(n) for n in names]


def _xor_learned(run: SeedRun) -> bool:
    return run.accuracy == 1.0 and run.final_loss < 0.01


CASES: dict[str, CaseSpec] = {
    "case1-1": CaseSpec(
        "case1-1", "case1", ("g1", "g2"), "linear",
        (
            Check("|w(g1)| > |w(g2)|", lambda r: r.abs_weight("g1") > r.abs_weight("g2"), 0.9),
            Check("final mse < 1e-3", lambda r: r.final_loss < 1e-3, 0.9),
        ),
    ),
    "case1-2": CaseSpec(
        "case1-2", "case1", ("g1", "g2", "g3", "g4"), "linear",
        (
            Check(
                "|w(g1)| strictly largest",
                lambda r: r.abs_weight("g1") > max(_a(r, "g2", "g3", "g4")),
                0.9,
            ),
        ),
    ),
    "case1-3": CaseSpec(
        "case1-3", "case1", ("g1", "g5", "g3", "g4"), "linear",
        (
            Check(
                "min(|w(g1)|, |w(g5)|) > max(|w(g3)|, |w(g4)|)",
                lambda r: min(_a(r, "g1", "g5")) > max(_a(r, "g3", "g4")),
                0.8,
            ),
        ),
    ),
    "case2-1": CaseSpec(
        "case2-1", "case2", ("q1", "q2"), "sigmoid",
        (
            Check(
                "XOR learned (bce < 0.01, all rounded predictions correct) "
                "and |w(q1)|, |w(q2)| > 1.2",
                lambda r: _xor_learned(r) and min(_a(r, "q1", "q2")) > 1.2,
                0.9,
            ),
        ),
    ),
    "case2-2": CaseSpec(
        "case2-2", "case2", ("q1", "q2", "q3", "q4"), "sigmoid",
        (
            Check("w(q3) == 1.0 exactly", lambda r: r.weight("q3") == 1.0, 1.0),
            Check(
                "min(|w(q1)|, |w(q2)|) > |w(q3)|",
                lambda r: min(_a(r, "q1", "q2")) > r.abs_weight("q3"),
                0.9,
            ),
        ),
    ),
    "case3": CaseSpec(
        "case3", "iris",
        ("sepal_length", "sepal_width", "petal_length", "petal_width"), "softmax",
        (
            Check(
                "petal weights outrank sepal weights",
                lambda r: min(_a(r, "petal_length", "petal_width"))
                > max(_a(r, "sepal_length", "sepal_width")),
                0.8,
            ),
            Check("training accuracy >= 0.95", lambda r: r.accuracy >= 0.95, 0.9),
        ),
    ),
}

CASE_IDS = tuple(CASES)


def case_spec(case_id: str) -> CaseSpec:
    try:
        return CASES[case_id]
    except KeyError:
        raise ValueError(f"unknown case {case_id!r}; valid ids: {', '.join(CASE_IDS)}") from None


def accuracy(config: NetworkConfig, y: np.ndarray, t: np.ndarray) -> float | None:
    if config.loss is LossKind.BINARY_CROSS_ENTROPY:
        return float(np.mean(np.all(np.round(y) == t, axis=1)))
    if config.loss is LossKind.CATEGORICAL_CROSS_ENTROPY:
        return float(np.mean(np.argmax(y, axis=1) == np.argmax(t, axis=1)))
    return None


def run_seed(case_id: str, seed: int, epochs: int = DEFAULT_EPOCHS) -> SeedRun:
    cfg = case_spec(case_id).experiment(seed, epochs)
    d = cfg.prepare()
    result = train(cfg, d)
    y = forward(result.params, cfg.network, d.features).output
    return SeedRun(
        seed=seed,
        report=explain(result.params, d.feature_names),
        final_loss=result.final_loss,
        initial_loss=result.loss_history[0][1],
        accuracy=accuracy(cfg.network, y, d.targets),
    )


@dataclass(frozen=True)
class CheckOutcome:
    name: str
    fraction_satisfied: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.fraction_satisfied >= self.threshold


@dataclass
class CaseOutcome:
    case_id: str
    runs: list[SeedRun]
    checks: list[CheckOutcome]

    @property
    def aggregate(self) -> float:
        return self.checks[0].fraction_satisfied

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _run_seed_args(args):
    return run_seed(*args)


def run_case(
    case_id: str, seeds=DEFAULT_SEEDS, epochs: int = DEFAULT_EPOCHS, workers: int = 1
) -> CaseOutcome:
    """Train every seed, explain, and score the case's checks.

    Runs are independent; with ``workers > 1`` they execute in a process pool
    and are collected back in seed-list order.
    """
    spec = case_spec(case_id)
    seeds = list(seeds)
    if not seeds:
        raise ValueError("at least one seed is required")
    jobs = [(case_id, s, epochs) for s in seeds]
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_seed_args, jobs))
    else:
        runs = [run_seed(*j) for j in jobs]
    checks = [
        CheckOutcome(c.name, sum(bool(c.predicate(r)) for r in runs) / len(runs), c.threshold)
        for c in spec.checks
    ]
    return CaseOutcome(case_id=case_id, runs=runs, checks=checks)
