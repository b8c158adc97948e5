"""Training loop, metrics, hyperparameter grid search, ablation study.

Everything here is deterministic given the seeds in the specs: batch
order, dropout masks, and trial subsampling all come from
``np.random.default_rng`` streams derived from them.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import (
    GROUP_NAMES,
    FeatureGroupMap,
    FeatureTable,
    SplitSpec,
    WindowedDataset,
    leave_one_out,
    make_windows,
)
from .errors import ConfigError, NumericError, ShapeError
from .model import (
    ModelConfig,
    build_params,
    clone_params,
    forward,
    loss_and_grads,
    predict,
)

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


# ---------------------------------------------------------------------------
# metrics


def _paired(predicted, actual, minimum=1):
    p = np.asarray(predicted, dtype=np.float64).ravel()
    a = np.asarray(actual, dtype=np.float64).ravel()
    if p.shape != a.shape:
        raise ShapeError(
            f"metric: {p.shape[0]} predictions vs {a.shape[0]} actuals")
    if p.shape[0] < minimum:
        raise ShapeError(
            f"metric: need at least {minimum} points, got {p.shape[0]}")
    return p, a


def rmse(predicted, actual) -> float:
    p, a = _paired(predicted, actual)
    return float(np.sqrt(np.mean((p - a) ** 2)))


def mae(predicted, actual) -> float:
    p, a = _paired(predicted, actual)
    return float(np.mean(np.abs(p - a)))


def area_between(predicted, actual) -> float:
    """Trapezoidal area between the two curves over unit-spaced days."""
    p, a = _paired(predicted, actual, minimum=2)
    return float(_trapezoid(np.abs(p - a)))


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class TrainSpec:
    batch_size: int = 64
    lr: float = 0.01
    epochs: int = 200
    patience: int = 20
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8

    def validate(self) -> None:
        checks = [
            (self.batch_size >= 1, f"batch_size >= 1 (got {self.batch_size})"),
            (self.lr > 0, f"lr > 0 (got {self.lr})"),
            (self.epochs >= 1, f"epochs >= 1 (got {self.epochs})"),
            (0 <= self.patience <= self.epochs,
             f"0 <= patience <= epochs (got {self.patience})"),
            (0.0 <= self.beta1 < 1.0, f"beta1 in [0, 1) (got {self.beta1})"),
            (0.0 <= self.beta2 < 1.0, f"beta2 in [0, 1) (got {self.beta2})"),
            (self.adam_epsilon > 0,
             f"adam_epsilon > 0 (got {self.adam_epsilon})"),
        ]
        for ok, constraint in checks:
            if not ok:
                raise ConfigError(f"training spec violates: {constraint}")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: dict) -> "AdamState":
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict, grads: dict, state: AdamState,
              spec: TrainSpec) -> dict:
    """One bias-corrected adaptive-moment update; returns new params."""
    state.t += 1
    t = state.t
    out = {}
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"optimizer: non-finite gradient for {name}")
        state.m[name] = spec.beta1 * state.m[name] + (1 - spec.beta1) * g
        state.v[name] = spec.beta2 * state.v[name] + (1 - spec.beta2) * g * g
        m_hat = state.m[name] / (1 - spec.beta1 ** t)
        v_hat = state.v[name] / (1 - spec.beta2 ** t)
        out[name] = p - spec.lr * m_hat / (np.sqrt(v_hat) + spec.adam_epsilon)
    return out


# ---------------------------------------------------------------------------
# training


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_rmse: float


def _val_rmse(params, config, dataset: WindowedDataset) -> float:
    preds = forward(params, config, dataset.news, dataset.other,
                    training=False)
    return rmse(dataset.denormalize_targets(preds), dataset.raw_targets)


def train(config: ModelConfig, train_ds: WindowedDataset,
          val_ds: WindowedDataset, spec: TrainSpec):
    """Mini-batch Adam with early stopping on validation RMSE.

    Returns the parameters of the best validation epoch and the
    per-epoch history.  When the validation set is empty the training
    split itself is scored instead, so tiny smoke datasets still run.
    """
    config.validate()
    spec.validate()
    if len(train_ds) < 1:
        raise ShapeError("train: empty training dataset")
    score_ds = val_ds if len(val_ds) > 0 else train_ds

    params = build_params(config)
    state = AdamState.for_params(params)
    rng = np.random.default_rng(spec.seed)
    history: list[EpochStats] = []
    best_rmse = math.inf
    best_params = clone_params(params)
    since_best = 0

    n = len(train_ds)
    for epoch in range(spec.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, spec.batch_size):
            idx = order[lo:lo + spec.batch_size]
            news, other, targets = train_ds.batch(idx)
            drop_seed = int(rng.integers(0, 2 ** 63))
            try:
                loss, grads = loss_and_grads(params, config, news, other,
                                             targets, seed=drop_seed)
                params = adam_step(params, grads, state, spec)
            except NumericError as exc:
                raise NumericError(
                    f"epoch {epoch}, batch at window {lo}: {exc}") from exc
            epoch_loss += loss * len(idx)
        epoch_loss /= n
        score = _val_rmse(params, config, score_ds)
        history.append(EpochStats(epoch=epoch, train_loss=epoch_loss,
                                  val_rmse=score))
        if score < best_rmse:
            best_rmse = score
            best_params = clone_params(params)
            since_best = 0
        else:
            since_best += 1
        if since_best >= spec.patience:
            break
    return best_params, history


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalReport:
    rmse: float
    mae: float
    area_between: float
    predicted: np.ndarray      # denormalized
    actual: np.ndarray         # raw case counts
    dates: list                # target dates
    config: dict = field(default_factory=dict)


def evaluate(params: dict, config: ModelConfig,
             dataset: WindowedDataset) -> EvalReport:
    out = predict(params, config, dataset)
    return EvalReport(
        rmse=rmse(out.denormalized, dataset.raw_targets),
        mae=mae(out.denormalized, dataset.raw_targets),
        area_between=area_between(out.denormalized, dataset.raw_targets),
        predicted=out.denormalized,
        actual=dataset.raw_targets.copy(),
        dates=list(dataset.target_dates),
        config=config.to_dict())


# ---------------------------------------------------------------------------
# grid search


@dataclass
class GridSpace:
    batch_size: tuple = (16, 32, 64, 128)
    lr: tuple = (0.001, 0.01, 0.1)
    gru_units: tuple = (10, 50, 100, 150)
    dropout: tuple = (0.2, 0.5)
    num_heads: tuple = (2, 4, 5, 8)
    head_size: tuple = (2, 4, 6, 8, 128, 256)
    max_trials: int | None = None

    _AXES = ("batch_size", "lr", "gru_units", "dropout", "num_heads",
             "head_size")

    def validate(self) -> None:
        for axis in self._AXES:
            if not getattr(self, axis):
                raise ConfigError(f"grid axis {axis} is empty")
        if self.max_trials is not None and self.max_trials < 1:
            raise ConfigError(
                f"max_trials must be >= 1, got {self.max_trials}")

    def combos(self) -> list[dict]:
        """Every combination, in declaration order of the axes."""
        axes = [getattr(self, a) for a in self._AXES]
        return [dict(zip(self._AXES, values))
                for values in itertools.product(*axes)]


@dataclass
class TrialResult:
    index: int                 # position in declaration order
    settings: dict
    val_rmse: float
    epochs_run: int
    status: str = "ok"         # "ok" or the error that killed the trial


def grid_search(space: GridSpace, config: ModelConfig,
                train_ds: WindowedDataset, val_ds: WindowedDataset,
                spec: TrainSpec) -> list[TrialResult]:
    """Train one model per combination; rank by validation RMSE.

    Failed trials keep a row with infinite RMSE instead of aborting the
    sweep.  Ties break toward the earlier combination in declaration
    order, so rankings are reproducible.
    """
    space.validate()
    combos = space.combos()
    chosen = list(range(len(combos)))
    if space.max_trials is not None and space.max_trials < len(combos):
        rng = np.random.default_rng(spec.seed)
        chosen = sorted(rng.choice(len(combos), size=space.max_trials,
                                   replace=False).tolist())
    results = []
    for index in chosen:
        settings = combos[index]
        trial_seed = spec.seed + 1_000_003 * (index + 1)
        trial_config = replace(
            config, gru_units=settings["gru_units"],
            dropout=settings["dropout"], num_heads=settings["num_heads"],
            head_size=settings["head_size"], seed=trial_seed)
        trial_spec = replace(spec, batch_size=settings["batch_size"],
                             lr=settings["lr"], seed=trial_seed)
        try:
            params, history = train(trial_config, train_ds, val_ds,
                                    trial_spec)
            score_ds = val_ds if len(val_ds) > 0 else train_ds
            score = _val_rmse(params, trial_config, score_ds)
            results.append(TrialResult(index=index, settings=settings,
                                       val_rmse=score,
                                       epochs_run=len(history)))
        except (NumericError, ConfigError, ShapeError) as exc:
            results.append(TrialResult(index=index, settings=settings,
                                       val_rmse=math.inf, epochs_run=0,
                                       status=f"failed: {exc}"))
    results.sort(key=lambda r: (r.val_rmse, r.index))
    return results


# ---------------------------------------------------------------------------
# ablation


ABLATION_CONDITIONS = (
    ("full", None),
    *((f"without_{g}", g) for g in GROUP_NAMES),
    ("without_trends", "trends"),
    ("without_news", "news"),
    ("without_attention", "attention"),
)


@dataclass
class AblationRow:
    condition: str
    rmse: float
    mae: float
    area_between: float


def _config_for_table(base: ModelConfig, table: FeatureTable,
                      use_attention: bool = True) -> ModelConfig:
    news = len(table.columns_from("news"))
    trends = len(table.columns_from("trends"))
    stats = len(table.columns_from("stats"))
    return replace(base, news_dim=news, trends_dim=trends, stats_dim=stats,
                   use_attention=use_attention and base.use_attention)


def ablate(merged: FeatureTable, groups: FeatureGroupMap,
           config: ModelConfig, spec: TrainSpec, target_column: str,
           split: SplitSpec | None = None) -> list[AblationRow]:
    """Retrain under each leave-one-out condition and score the test set.

    Conditions: the full feature set, each of the seven stats groups
    removed, all trends removed, all news removed, and the attention
    block disabled.  Every run reuses the same training spec and seeds,
    so the full row matches a standalone train-plus-evaluate exactly.
    """
    groups.validate_against(merged.columns_from("stats"))
    rows = []
    for condition, leave in ABLATION_CONDITIONS:
        try:
            if leave == "attention":
                table = merged
                cond_config = _config_for_table(config, table,
                                                use_attention=False)
            else:
                table = leave_one_out(merged, groups, leave)
                cond_config = _config_for_table(config, table)
            train_ds, val_ds, test_ds = make_windows(
                table, target_column, config.lookback, config.horizon, split,
                target_table=merged)
            params, _ = train(cond_config, train_ds, val_ds, spec)
            report = evaluate(params, cond_config, test_ds)
        except (NumericError, ConfigError, ShapeError) as exc:
            raise type(exc)(f"ablation condition {condition!r}: {exc}",
                            code=exc.code) from exc
        rows.append(AblationRow(condition=condition, rmse=report.rmse,
                                mae=report.mae,
                                area_between=report.area_between))
    return rows


# ---------------------------------------------------------------------------
# CSV writers (shared by the command line tool and the scripts)


def _write_csv(path, header, rows, echo_lines=()):
    with open(path, "w", newline="") as fh:
        for line in echo_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_predictions(path, report: EvalReport, echo_lines=()):
    rows = [(d.isoformat(), repr(float(a)), repr(float(p)))
            for d, a, p in zip(report.dates, report.actual,
                               report.predicted)]
    _write_csv(path, ("date", "actual", "predicted"), rows, echo_lines)


def write_metrics(path, report: EvalReport, condition="full",
                  echo_lines=()):
    _write_csv(path, ("condition", "rmse", "mae", "area_between"),
               [(condition, repr(report.rmse), repr(report.mae),
                 repr(report.area_between))], echo_lines)


def write_grid(path, results: list[TrialResult], echo_lines=()):
    header = ("rank", "index", "batch_size", "lr", "gru_units", "dropout",
              "num_heads", "head_size", "val_rmse", "epochs_run", "status")
    rows = []
    for rank, r in enumerate(results, start=1):
        s = r.settings
        rows.append((rank, r.index, s["batch_size"], repr(s["lr"]),
                     s["gru_units"], repr(s["dropout"]), s["num_heads"],
                     s["head_size"], repr(r.val_rmse), r.epochs_run,
                     r.status))
    _write_csv(path, header, rows, echo_lines)


def write_ablation(path, rows: list[AblationRow], echo_lines=()):
    _write_csv(path, ("condition", "rmse", "mae", "area_between"),
               [(r.condition, repr(r.rmse), repr(r.mae),
                 repr(r.area_between)) for r in rows], echo_lines)


def write_history(path, history: list[EpochStats], echo_lines=()):
    _write_csv(path, ("epoch", "train_loss", "val_rmse"),
               [(h.epoch, repr(h.train_loss), repr(h.val_rmse))
                for h in history], echo_lines)
