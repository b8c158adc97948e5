"""Command line front end.

Configuration is a flat ``key = value`` file; any key can also be given
as a ``--key value`` flag, and flags win over the file.  Every command
writes only inside ``output_dir`` and embeds the effective configuration
in its artifacts, so a run can be reproduced from its outputs alone.

Exit codes: 0 success, 2 configuration problem, 3 input-data problem,
4 numeric failure.  Errors print a single ``code: message`` line to
stderr.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .data import (
    SplitSpec,
    align_and_impute,
    load_groups,
    load_table,
    make_windows,
)
from .errors import CasecastError, ConfigError
from .model import (
    ModelConfig,
    build_params,
    forward,
    load_params,
    predict as model_predict,
    save_params,
)
from .training import (
    GridSpace,
    TrainSpec,
    ablate,
    evaluate,
    grid_search,
    train,
    write_ablation,
    write_grid,
    write_history,
    write_metrics,
    write_predictions,
)

# key -> (kind, default); kinds drive both coercion and help text
KEYS: dict[str, tuple[str, object]] = {
    "stats": ("path", None),
    "trends": ("path", None),
    "news_emb": ("path", None),
    "groups": ("path", None),
    "params": ("path", None),
    "output_dir": ("path", None),
    "target_column": ("str", "new_cases_per_million"),
    "eval_split": ("str", "test"),
    "lookback": ("int", 7),
    "horizon": ("int", 3),
    "gru_units": ("int", 100),
    "num_heads": ("int", 6),
    "head_size": ("int", 128),
    "dropout": ("float", 0.2),
    "news_hidden": ("intlist", (156, 32)),
    "use_attention": ("bool", True),
    "use_positional_encoding": ("bool", True),
    "norm_then_add": ("bool", False),
    "batch_size": ("int", 64),
    "lr": ("float", 0.01),
    "epochs": ("int", 200),
    "patience": ("int", 20),
    "seed": ("int", 0),
    "train_fraction": ("float", 0.9),
    "validation_fraction": ("float", 0.1),
    "grid_batch_size": ("intlist", (16, 32, 64, 128)),
    "grid_lr": ("floatlist", (0.001, 0.01, 0.1)),
    "grid_gru_units": ("intlist", (10, 50, 100, 150)),
    "grid_dropout": ("floatlist", (0.2, 0.5)),
    "grid_num_heads": ("intlist", (2, 4, 5, 8)),
    "grid_head_size": ("intlist", (2, 4, 6, 8, 128, 256)),
    "max_trials": ("int", None),
}

_BOOL_WORDS = {"true": True, "1": True, "yes": True,
               "false": False, "0": False, "no": False}


def _coerce(key: str, raw: str):
    kind = KEYS[key][0]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() not in _BOOL_WORDS:
                raise ValueError
            return _BOOL_WORDS[raw.lower()]
        if kind == "intlist":
            return tuple(int(p) for p in raw.split(",") if p.strip())
        if kind == "floatlist":
            return tuple(float(p) for p in raw.split(",") if p.strip())
        return raw
    except ValueError:
        raise ConfigError(
            f"config key {key!r} expects {kind}, got {raw!r}") from None


def parse_config_file(path) -> dict:
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    values = {}
    for line_no, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if "=" not in text:
            raise ConfigError(
                f"{path}:{line_no}: expected 'key = value', got {text!r}")
        key, _, raw = text.partition("=")
        key = key.strip()
        if key not in KEYS:
            raise ConfigError(f"{path}:{line_no}: unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(repr(v) if isinstance(v, float) else str(v)
                        for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def effective_config(args) -> dict:
    """Defaults, then config file, then command line flags."""
    cfg = {k: default for k, (_, default) in KEYS.items()}
    if args.config:
        cfg.update(parse_config_file(args.config))
    for key in KEYS:
        raw = getattr(args, key, None)
        if raw is not None:
            cfg[key] = _coerce(key, raw)
    return cfg


def _echo_lines(cfg) -> list[str]:
    return [f"{k} = {_format_value(v)}" for k, v in sorted(cfg.items())
            if v is not None]


def _write_effective_config(cfg, out_dir) -> None:
    with open(os.path.join(out_dir, "effective_config.cfg"), "w") as fh:
        for line in _echo_lines(cfg):
            fh.write(line + "\n")


def _require(cfg, command, *keys) -> None:
    missing = [k for k in keys if cfg[k] is None]
    if missing:
        raise ConfigError(
            f"{command} requires config keys: {', '.join(missing)}")


def _load_datasets(cfg):
    tables = [load_table(cfg["stats"], "stats")]
    if cfg["trends"]:
        tables.append(load_table(cfg["trends"], "trends"))
    if cfg["news_emb"]:
        tables.append(load_table(cfg["news_emb"], "news"))
    merged, report = align_and_impute(tables)
    split = SplitSpec(train_fraction=cfg["train_fraction"],
                      validation_fraction=cfg["validation_fraction"])
    datasets = make_windows(merged, cfg["target_column"], cfg["lookback"],
                            cfg["horizon"], split)
    return merged, report, datasets


def _model_config(cfg, merged) -> ModelConfig:
    return ModelConfig(
        trends_dim=len(merged.columns_from("trends")),
        stats_dim=len(merged.columns_from("stats")),
        news_dim=len(merged.columns_from("news")),
        news_hidden=cfg["news_hidden"],
        lookback=cfg["lookback"], horizon=cfg["horizon"],
        gru_units=cfg["gru_units"], num_heads=cfg["num_heads"],
        head_size=cfg["head_size"], dropout=cfg["dropout"],
        use_attention=cfg["use_attention"],
        use_positional_encoding=cfg["use_positional_encoding"],
        norm_then_add=cfg["norm_then_add"], seed=cfg["seed"])


def _train_spec(cfg) -> TrainSpec:
    return TrainSpec(batch_size=cfg["batch_size"], lr=cfg["lr"],
                     epochs=cfg["epochs"], patience=cfg["patience"],
                     seed=cfg["seed"])


def _pick_split(cfg, datasets):
    names = {"train": 0, "validation": 1, "test": 2}
    if cfg["eval_split"] not in names:
        raise ConfigError(
            f"eval_split must be one of {sorted(names)}, got "
            f"{cfg['eval_split']!r}")
    return datasets[names[cfg["eval_split"]]]


def _out_dir(cfg) -> str:
    os.makedirs(cfg["output_dir"], exist_ok=True)
    return cfg["output_dir"]


def cmd_train(cfg) -> int:
    _require(cfg, "train", "stats", "output_dir")
    merged, report, (train_ds, val_ds, test_ds) = _load_datasets(cfg)
    config = _model_config(cfg, merged)
    spec = _train_spec(cfg)
    params, history = train(config, train_ds, val_ds, spec)
    out = _out_dir(cfg)
    echo = _echo_lines(cfg)
    save_params(os.path.join(out, "params.npz"), params, config)
    write_history(os.path.join(out, "history.csv"), history, echo)
    score_ds = val_ds if len(val_ds) > 0 else train_ds
    write_predictions(os.path.join(out, "val_predictions.csv"),
                      evaluate(params, config, score_ds), echo)
    _write_effective_config(cfg, out)
    print(f"trained {len(history)} epochs; "
          f"best validation rmse {min(h.val_rmse for h in history):.6g}; "
          f"imputed {report.total_forward_filled} cells")
    return 0


def _load_model_for_inference(cfg):
    path = cfg["params"] or os.path.join(cfg["output_dir"], "params.npz")
    if not os.path.exists(path):
        raise ConfigError(f"parameter file not found: {path}")
    return load_params(path)


def cmd_predict(cfg) -> int:
    _require(cfg, "predict", "stats", "output_dir")
    params, config = _load_model_for_inference(cfg)
    merged, _, datasets = _load_datasets(cfg)
    dataset = _pick_split(cfg, datasets)
    out = _out_dir(cfg)
    report = evaluate(params, config, dataset)
    write_predictions(os.path.join(out, "predictions.csv"), report,
                      _echo_lines(cfg))
    _write_effective_config(cfg, out)
    print(f"wrote {len(report.predicted)} predictions "
          f"({cfg['eval_split']} split)")
    return 0


def cmd_evaluate(cfg) -> int:
    _require(cfg, "evaluate", "stats", "output_dir")
    params, config = _load_model_for_inference(cfg)
    merged, _, datasets = _load_datasets(cfg)
    dataset = _pick_split(cfg, datasets)
    out = _out_dir(cfg)
    echo = _echo_lines(cfg)
    report = evaluate(params, config, dataset)
    write_predictions(os.path.join(out, "predictions.csv"), report, echo)
    write_metrics(os.path.join(out, "metrics.csv"), report, echo_lines=echo)
    _write_effective_config(cfg, out)
    print(f"rmse {report.rmse:.6g}  mae {report.mae:.6g}  "
          f"area_between {report.area_between:.6g}")
    return 0


def cmd_gridsearch(cfg) -> int:
    _require(cfg, "gridsearch", "stats", "output_dir")
    merged, _, (train_ds, val_ds, _) = _load_datasets(cfg)
    config = _model_config(cfg, merged)
    spec = _train_spec(cfg)
    space = GridSpace(
        batch_size=cfg["grid_batch_size"], lr=cfg["grid_lr"],
        gru_units=cfg["grid_gru_units"], dropout=cfg["grid_dropout"],
        num_heads=cfg["grid_num_heads"], head_size=cfg["grid_head_size"],
        max_trials=cfg["max_trials"])
    results = grid_search(space, config, train_ds, val_ds, spec)
    out = _out_dir(cfg)
    write_grid(os.path.join(out, "grid.csv"), results, _echo_lines(cfg))
    _write_effective_config(cfg, out)
    best = results[0]
    print(f"ran {len(results)} trials; best val rmse {best.val_rmse:.6g} "
          f"with {best.settings}")
    return 0


def cmd_ablate(cfg) -> int:
    _require(cfg, "ablate", "stats", "groups", "output_dir")
    tables = [load_table(cfg["stats"], "stats")]
    if cfg["trends"]:
        tables.append(load_table(cfg["trends"], "trends"))
    if cfg["news_emb"]:
        tables.append(load_table(cfg["news_emb"], "news"))
    merged, _ = align_and_impute(tables)
    groups = load_groups(cfg["groups"])
    config = _model_config(cfg, merged)
    spec = _train_spec(cfg)
    split = SplitSpec(train_fraction=cfg["train_fraction"],
                      validation_fraction=cfg["validation_fraction"])
    rows = ablate(merged, groups, config, spec, cfg["target_column"], split)
    out = _out_dir(cfg)
    write_ablation(os.path.join(out, "ablation.csv"), rows, _echo_lines(cfg))
    _write_effective_config(cfg, out)
    for row in rows:
        print(f"{row.condition}: rmse {row.rmse:.6g}")
    return 0


def cmd_selftest(cfg) -> int:
    """Fast built-in checks: gradients, known values, a tiny training run."""
    import tempfile

    from .synthetic import TARGET_COLUMN, make_tables
    from .tensor import grad_check, layer_norm, softmax_rows

    failures = []

    def check(name, ok):
        print(("ok" if ok else "FAIL") + f": {name}")
        if not ok:
            failures.append(name)

    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 5))
    probs = softmax_rows(x)
    check("softmax rows sum to one",
          bool(np.allclose(probs.sum(axis=-1), 1.0, atol=1e-12)))

    out, _ = layer_norm(x, np.ones(5), np.zeros(5))
    check("layer norm centers rows",
          bool(np.allclose(out.mean(axis=-1), 0.0, atol=1e-9)))

    config = ModelConfig(trends_dim=2, stats_dim=3, news_dim=4,
                         news_hidden=(5, 3), lookback=4, gru_units=6,
                         num_heads=2, head_size=3, dropout=0.2, seed=1)
    params = build_params(config)
    # news shifted positive so no relu pre-activation sits exactly on its
    # kink, where central differences are undefined
    rng = np.random.default_rng(104)
    news = rng.normal(size=(2, 4, 4)) + 0.5
    other = rng.normal(size=(2, 4, 5))
    targets = rng.normal(size=2)

    def objective(p):
        from .model import loss_and_grads
        return loss_and_grads(p, config, news, other, targets, seed=4)

    err = grad_check(objective, params)
    check(f"full-model gradient check (max rel err {err:.2e})", err < 1e-3)

    zero = {k: np.zeros_like(v) for k, v in params.items()}
    zero["out.b"] = np.full_like(params["out.b"], 1.5)
    preds = forward(zero, config, news, other)
    check("all-zero weights predict the output bias",
          bool(np.allclose(preds, 1.5, atol=1e-12)))

    from .training import mae as _mae, rmse as _rmse
    check("rmse of [0,2] vs [0,0] is sqrt(2)",
          abs(_rmse([0.0, 2.0], [0.0, 0.0]) - np.sqrt(2.0)) < 1e-12)
    check("mae of [0,2] vs [0,0] is 1",
          abs(_mae([0.0, 2.0], [0.0, 0.0]) - 1.0) < 1e-12)

    with tempfile.TemporaryDirectory() as tmp:
        stats, trends, news_t, groups = make_tables(days=80, seed=3,
                                                    news_dim=4)
        merged, _ = align_and_impute([stats, trends, news_t])
        train_ds, val_ds, _ = make_windows(merged, TARGET_COLUMN, 7, 3)
        small = ModelConfig(
            trends_dim=len(merged.columns_from("trends")),
            stats_dim=len(merged.columns_from("stats")),
            news_dim=len(merged.columns_from("news")), news_hidden=(8, 4),
            gru_units=8, num_heads=2, head_size=4, dropout=0.0, seed=5)
        spec = TrainSpec(batch_size=16, lr=0.01, epochs=8, patience=8,
                         seed=5)
        _, history = train(small, train_ds, val_ds, spec)
        check("training reduces loss on synthetic data",
              history[-1].train_loss < history[0].train_loss)

    if failures:
        print(f"{len(failures)} selftest check(s) failed", file=sys.stderr)
        return 4
    print("all selftest checks passed")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "gridsearch": cmd_gridsearch,
    "ablate": cmd_ablate,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="casecast",
        description="case-count forecasting from daily statistics, search "
                    "interest, and news embeddings")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or "").strip().
                           split("\n")[0] or None)
        p.add_argument("--config", help="flat key = value config file")
        for key in KEYS:
            p.add_argument(f"--{key.replace('_', '-')}", dest=key,
                           metavar=KEYS[key][0].upper())
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = effective_config(args)
        return _COMMANDS[args.command](cfg)
    except CasecastError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return exc.exit_status


if __name__ == "__main__":
    sys.exit(main())
