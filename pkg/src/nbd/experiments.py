"""Experiment plumbing shared by the command line and the acceptance runs.

A config is a nested dict with ``task``, ``seed``, ``data``, ``model`` and
``train`` sections.  Built-in defaults are merged under file values, which
are merged under explicit overrides.
"""
from __future__ import annotations

import copy
import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .baselines import MahalanobisModel
from .datagen import LabeledPoints, PairSet
from .datagen.colearn import ColearnSpec, gen_colearn
from .datagen.graphs import GraphSpec, gen_graph_task
from .datagen.mixtures import MixtureSpec, gen_mixture
from .datagen.regression import RegressionSpec, gen_regression_pairs
from .divergences import DivergenceModel, bregman_pairwise, closed_form_generator, gsb_squared
from .encoder import EncoderConfig, init_encoder
from .evaluation import bregman_kmeans, map_auc_from_matrix, purity, rand_index
from .icnn import IcnnConfig, init_icnn
from .train import TrainConfig, evaluate_regression, evaluate_triplet, train_regression, train_triplet

log = logging.getLogger(__name__)

TASKS = ("cluster", "rank", "regress", "colearn", "shortest-path")
METRIC_COLUMNS = ("dataset", "model", "seed", "MAP", "AUC", "purity", "rand", "mae", "mse", "train_loss", "test_loss")
CONFIG_DIR = Path(__file__).parent / "configs"

_TRAIN = {"epochs": 100, "batch_size": 128, "lr": 1e-3, "margin": 0.2, "lr_drop_epoch": None, "lr_drop_factor": 0.1}
_NBD = {"kind": "nbd", "variant": "plain", "widths": [128, 128], "strictness": 1e-3, "encoder": "none"}

DEFAULTS = {
    "cluster": {
        "data": {"family": "gaussian", "n": 1000, "d": 10, "k": 5, "n_train": 0},
        "model": dict(_NBD),
        "train": dict(_TRAIN),
    },
    "rank": {
        "data": {"family": "gaussian", "n": 1000, "d": 10, "k": 5, "n_train": 0},
        "model": dict(_NBD),
        "train": dict(_TRAIN),
    },
    "regress": {
        "data": {"target": "sq-euclidean", "pairs": 20000, "correlation": "none"},
        "model": dict(_NBD),
        "train": dict(_TRAIN),
    },
    "colearn": {
        "data": {"kind": "shifted-xlogx", "n_train": 20000, "n_test": 4000},
        "model": {**_NBD, "encoder": "mlp", "encoder_widths": [64], "embed_dim": 8},
        "train": dict(_TRAIN),
    },
    "shortest-path": {
        "data": {"dataset": "3d", "n_train": 20000, "n_test": 4000},
        "model": dict(_NBD),
        "train": dict(_TRAIN),
    },
}
FULL_SCALE = {
    "regress": {"pairs": 50000},
    "shortest-path": {"n_train": 50000, "n_test": 10000},
}


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration (usage error)."""


def deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config_file(path) -> dict:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc


def resolve_config(file_cfg: dict | None = None, task: str | None = None, seed: int | None = None,
                   desk_scale: bool = True, overrides: dict | None = None) -> dict:
    """Defaults < file < overrides < explicit task/seed flags."""
    cfg = deep_merge(file_cfg or {}, overrides or {})
    task = task or cfg.get("task")
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}, got {task!r}")
    base = copy.deepcopy(DEFAULTS[task])
    if not desk_scale:
        base["data"].update(FULL_SCALE.get(task, {}))
    cfg = deep_merge({"task": task, "seed": 0, **base}, cfg)
    cfg["task"] = task
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


def parse_override(text: str) -> dict:
    """``a.b=value`` -> ``{"a": {"b": value}}`` with the value read as YAML."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    val = yaml.safe_load(raw)
    for part in reversed(key.strip().split(".")):
        val = {part: val}
    return val


# ---- data -----------------------------------------------------------------


@dataclass
class TaskData:
    train: PairSet | None = None
    test: PairSet | None = None
    train_points: LabeledPoints | None = None
    test_points: LabeledPoints | None = None
    spec: dict | None = None

    @property
    def input_dim(self) -> int:
        for part in (self.train, self.test):
            if part is not None and len(part):
                return part.a.shape[1]
        return self.test_points.x.shape[1]


def _spec(cls, section: dict, seed: int):
    try:
        return cls(**{**section, "seed": seed})
    except TypeError as exc:
        raise ConfigError(f"bad data section for {cls.__name__}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_data(cfg: dict) -> TaskData:
    task, seed, section = cfg["task"], cfg["seed"], cfg["data"]
    if task in ("cluster", "rank"):
        spec = _spec(MixtureSpec, section, seed)
        mix = gen_mixture(spec)
        return TaskData(train_points=mix.train, test_points=mix.points, spec=spec.to_dict())
    if task == "regress":
        spec = _spec(RegressionSpec, section, seed)
        reg = gen_regression_pairs(spec)
        return TaskData(reg.train, reg.test, spec=spec.to_dict())
    if task == "colearn":
        spec = _spec(ColearnSpec, section, seed)
        col = gen_colearn(spec)
        return TaskData(col.train, col.test, col.train_points, col.test_points, spec=spec.to_dict())
    spec = _spec(GraphSpec, section, seed)
    g = gen_graph_task(spec)
    return TaskData(g.train, g.test, spec=spec.to_dict())


# ---- models ---------------------------------------------------------------


def build_model(cfg: dict, input_dim: int, seed: int):
    m = cfg["model"]
    kind = m.get("kind", "nbd")
    if kind == "mahalanobis":
        return MahalanobisModel.identity(input_dim)
    if kind == "euclidean":
        return DivergenceModel(closed_form_generator("sq-euclidean"))
    if kind != "nbd":
        raise ConfigError(f"unknown model kind {kind!r}; expected nbd, mahalanobis or euclidean")
    try:
        enc = None
        phi_dim = input_dim
        if m.get("encoder", "none") == "mlp":
            ecfg = EncoderConfig(input_dim, tuple(m.get("encoder_widths", (256, 256))), int(m.get("embed_dim", 128)))
            enc = init_encoder(ecfg, seed + 1)
            phi_dim = ecfg.embed_dim
        elif m.get("encoder", "none") != "none":
            raise ConfigError(f"encoder must be 'none' or 'mlp', got {m.get('encoder')!r}")
        icfg = IcnnConfig(phi_dim, tuple(m.get("widths", (128, 128))), float(m.get("strictness", 1e-3)))
        return DivergenceModel(init_icnn(icfg, seed), enc, m.get("variant", "plain"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def train_config(cfg: dict) -> TrainConfig:
    t = cfg["train"]
    try:
        return TrainConfig(
            epochs=int(t["epochs"]),
            batch_size=int(t["batch_size"]),
            lr=float(t["lr"]),
            seed=int(cfg["seed"]),
            margin=float(t.get("margin", 0.2)),
            lr_drop_epoch=None if t.get("lr_drop_epoch") is None else int(t["lr_drop_epoch"]),
            lr_drop_factor=float(t.get("lr_drop_factor", 0.1)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad train section: {exc}") from exc


def has_parameters(model) -> bool:
    return bool(model.arrays())


def fit(cfg: dict, model, data: TaskData):
    """Trains ``model`` in place; returns (trace, final full-pass train loss)."""
    tcfg = train_config(cfg)
    if cfg["task"] in ("cluster", "rank"):
        if data.train_points is None:
            raise ConfigError("metric learning needs a labeled training split (data.n_train > 0)")
        trace = train_triplet(model, data.train_points, tcfg).trace if has_parameters(model) else []
        return trace, evaluate_triplet(model, data.train_points, tcfg.batch_size, tcfg.margin)
    trace = train_regression(model, data.train, tcfg, test_pairs=data.test).trace if has_parameters(model) else []
    return trace, evaluate_regression(model, data.train)["mse"]


# ---- evaluation -----------------------------------------------------------


def embedded_divergence(model):
    """(embed, pairwise) acting in the model's embedding space.

    k-means runs there, so the mean update stays optimal for the
    Bregman part of the model.
    """
    bound = model.bind(None)
    if isinstance(model, MahalanobisModel):
        return (lambda x: bound.embed(x).data), (lambda x, c: _sq_dist(x, c))
    gen = bound.generator
    if model.variant == "gsb":
        def pairwise(x, c):
            n, m = len(x), len(c)
            xi = np.repeat(x, m, axis=0)
            ci = np.tile(c, (n, 1))
            return gsb_squared(gen, xi, ci).data.reshape(n, m)
    else:
        def pairwise(x, c):
            return bregman_pairwise(gen, x, c).data
    return (lambda x: bound.embed(x).data), pairwise


def _sq_dist(x, c):
    return np.sum((x[:, None, :] - c[None, :, :]) ** 2, axis=-1)


def evaluate(cfg: dict, model, data: TaskData) -> dict:
    task = cfg["task"]
    if task == "cluster":
        embed, pairwise = embedded_divergence(model)
        k = int(cfg["data"].get("k", 5))
        res = bregman_kmeans(embed(data.test_points.x), k, pairwise, seed=cfg["seed"])
        return {"purity": purity(res.assignments, data.test_points.labels),
                "rand": rand_index(res.assignments, data.test_points.labels)}
    if task == "rank":
        if data.train_points is None:
            raise ConfigError("ranking needs a training split as the corpus")
        dmat = model.bind(None).pairwise(data.test_points.x, data.train_points.x).data
        mean_ap, auc = map_auc_from_matrix(dmat, data.test_points.labels, data.train_points.labels)
        return {"MAP": mean_ap, "AUC": auc}
    out = evaluate_regression(model, data.test)
    out["test_loss"] = out["mse"]
    return out


def metrics_row(cfg: dict, model_name: str, metrics: dict, train_loss: float | None) -> dict:
    row = {c: "" for c in METRIC_COLUMNS}
    data = cfg["data"]
    row["dataset"] = cfg["task"] + ":" + str(data.get("family") or data.get("target") or data.get("dataset") or data.get("kind"))
    row["model"] = model_name
    row["seed"] = cfg["seed"]
    for key, val in metrics.items():
        if key in row:
            row[key] = repr(float(val))
    if train_loss is not None:
        row["train_loss"] = repr(float(train_loss))
    return row


def write_metrics_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def model_name(cfg: dict) -> str:
    m = cfg["model"]
    kind = m.get("kind", "nbd")
    if kind != "nbd":
        return kind
    name = "nbd" if m.get("variant", "plain") == "plain" else f"nbd-{m['variant']}"
    return name + ("+mlp" if m.get("encoder", "none") == "mlp" else "")


def run_experiment(cfg: dict, data: TaskData | None = None) -> tuple[dict, object, list]:
    """Builds data (unless given), trains and evaluates one model; returns (row, model, trace)."""
    data = data if data is not None else build_data(cfg)
    model = build_model(cfg, data.input_dim, cfg["seed"])
    trace, train_loss = fit(cfg, model, data)
    metrics = evaluate(cfg, model, data)
    return metrics_row(cfg, model_name(cfg), metrics, train_loss), model, trace


# ---- stored reproduction suites -------------------------------------------


def suite_names() -> list[str]:
    return sorted(p.stem for p in CONFIG_DIR.glob("*.yaml"))


def load_suite(name: str) -> dict:
    path = CONFIG_DIR / f"{name}.yaml"
    if not path.exists():
        raise ConfigError(f"unknown experiment {name!r}; available: {', '.join(suite_names())}")
    return load_config_file(path)


def suite_configs(name: str, seeds: list[int] | None = None):
    """Yields, per (dataset, seed) of a stored suite, the resolved config of every model.

    A suite file holds a base config plus lists of seeds, dataset
    overrides and model overrides.
    """
    suite = load_suite(name)
    base = suite.get("base", {})
    for dataset in suite.get("datasets", [{}]):
        for seed in seeds if seeds is not None else suite.get("seeds", [0]):
            yield [resolve_config(deep_merge(deep_merge(base, dataset), variant), seed=seed)
                   for variant in suite.get("models", [{}])]


def run_suite(name: str, out_dir, seeds: list[int] | None = None) -> Path:
    """Runs every (dataset, seed, model) of a stored suite; writes ``<name>.csv``.

    All models share the generated data for a given dataset and seed.
    """
    rows = []
    for cfgs in suite_configs(name, seeds):
        shared = build_data(cfgs[0])
        for cfg in cfgs:
            log.info("%s: %s seed %d model %s", name, cfg["data"], cfg["seed"], model_name(cfg))
            row, _, _ = run_experiment(cfg, shared)
            rows.append(row)
    out = Path(out_dir) / f"{name}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(rows, out)
    return out
