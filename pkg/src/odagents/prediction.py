"""Predictive-analytics agent for job telemetry.

Turns a natural-language prediction question into a structured request via
the model gateway (with a one-round repair on validation failure), fills the
missing inputs with the most frequent training values, encodes the request,
and answers from two regression model families trained from scratch, with
the better family chosen per output feature on validation error.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .conversation import Message, assistant_message, table_attachment, user_message
from .gateway import ChatRequest, ModelGateway
from .mlp import MLPRegressor
from .tree import RegressionTree

BUNDLE_FORMAT_VERSION = 1

UTILIZATIONS = ("CPU", "GPU")


class PredictionError(Exception):
    pass


class InterpretationError(PredictionError):
    def __init__(self, message: str, failed_fields: list[str]):
        super().__init__(message)
        self.failed_fields = failed_fields


# ---------------------------------------------------------------------------
# Output feature registry: 7 power, 2 temperature, 7 energy


@dataclass(frozen=True)
class FeatureSpec:
    key: str
    group: str  # Power | Temperature | Energy
    unit: str
    description: str


FEATURE_REGISTRY: dict[str, FeatureSpec] = {
    spec.key: spec
    for spec in (
        FeatureSpec("node_power_max", "Power", "W", "Max of the average node power of each node"),
        FeatureSpec("node_power_mean", "Power", "W", "Mean of the average node power of each node"),
        FeatureSpec("node_power_stddev", "Power", "W", "Stddev of the average node power of each node"),
        FeatureSpec("gpu_power_max", "Power", "W", "Max of the average GPU power of each node"),
        FeatureSpec("gpu_power_mean", "Power", "W", "Mean of the average GPU power of each node"),
        FeatureSpec("gpu_power_stddev", "Power", "W", "Stddev of the average GPU power of each node"),
        FeatureSpec("cpu_mem_power_max", "Power", "W", "Max of the average CPU memory power of each node"),
        FeatureSpec("node_temp_max", "Temperature", "degC", "Max of the average node temperature of each node"),
        FeatureSpec("node_temp_stddev", "Temperature", "degC", "Stddev of the average node temperature of each node"),
        FeatureSpec("total_node_energy", "Energy", "J", "Total node energy consumed"),
        FeatureSpec("total_gpu_energy", "Energy", "J", "Total GPU energy consumed"),
        FeatureSpec("total_cpu_mem_energy", "Energy", "J", "Total CPU memory energy consumed"),
        FeatureSpec("node_energy_max", "Energy", "J", "Max of the total node energy of each node"),
        FeatureSpec("node_energy_mean", "Energy", "J", "Mean of the total node energy of each node"),
        FeatureSpec("gpu_energy_max", "Energy", "J", "Max of the total GPU energy of each node"),
        FeatureSpec("gpu_energy_mean", "Energy", "J", "Mean of the total GPU energy of each node"),
    )
}

assert len(FEATURE_REGISTRY) == 16
assert sum(1 for s in FEATURE_REGISTRY.values() if s.group == "Power") == 7
assert sum(1 for s in FEATURE_REGISTRY.values() if s.group == "Temperature") == 2
assert sum(1 for s in FEATURE_REGISTRY.values() if s.group == "Energy") == 7


# ---------------------------------------------------------------------------
# Domain catalog


@dataclass(frozen=True)
class DomainInfo:
    name: str
    description: str
    frequency: int


@dataclass(frozen=True)
class DomainCatalog:
    domains: tuple[DomainInfo, ...]
    modal_domain: str
    modal_utilization: str
    modal_node_count: int
    modal_walltime_seconds: float

    def domain(self, name: str) -> DomainInfo | None:
        for d in self.domains:
            if d.name.lower() == name.lower():
                return d
        return None

    @property
    def training_size(self) -> int:
        return sum(d.frequency for d in self.domains)

    def to_dict(self) -> dict[str, Any]:
        return {
            "domains": [
                {"name": d.name, "description": d.description, "frequency": d.frequency} for d in self.domains
            ],
            "modal_domain": self.modal_domain,
            "modal_utilization": self.modal_utilization,
            "modal_node_count": self.modal_node_count,
            "modal_walltime_seconds": self.modal_walltime_seconds,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DomainCatalog":
        return cls(
            domains=tuple(DomainInfo(d["name"], d.get("description", ""), int(d["frequency"])) for d in data["domains"]),
            modal_domain=data["modal_domain"],
            modal_utilization=data["modal_utilization"],
            modal_node_count=int(data["modal_node_count"]),
            modal_walltime_seconds=float(data["modal_walltime_seconds"]),
        )


def build_domain_catalog(
    rows: Sequence[dict[str, Any]], descriptions: dict[str, str] | None = None
) -> DomainCatalog:
    """Most frequent values are recomputed from the training rows; ties break
    toward the lexicographically smaller value so the catalog is stable."""
    descriptions = descriptions or {}

    def modal(values: list[Any]) -> Any:
        counts: dict[Any, int] = {}
        for v in values:
            counts[v] = counts.get(v, 0) + 1
        return min(counts, key=lambda v: (-counts[v], str(v)))

    freq: dict[str, int] = {}
    for r in rows:
        freq[r["domain"]] = freq.get(r["domain"], 0) + 1
    domains = tuple(
        DomainInfo(name, descriptions.get(name, ""), freq[name]) for name in sorted(freq)
    )
    return DomainCatalog(
        domains=domains,
        modal_domain=modal([r["domain"] for r in rows]),
        modal_utilization=modal([r["utilization"] for r in rows]),
        modal_node_count=int(modal([int(r["node_count"]) for r in rows])),
        modal_walltime_seconds=float(modal([float(r["walltime_seconds"]) for r in rows])),
    )


# ---------------------------------------------------------------------------
# Structured prediction request


@dataclass(frozen=True)
class PredictionRequest:
    science_domain: str
    node_count: int
    walltime_seconds: float
    utilization: str
    output_feature: str
    filled_defaults: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.node_count <= 0:
            raise ValueError("node_count must be positive")
        if self.walltime_seconds <= 0:
            raise ValueError("walltime_seconds must be positive")
        if self.utilization not in UTILIZATIONS:
            raise ValueError(f"utilization must be one of {UTILIZATIONS}")
        if self.output_feature not in FEATURE_REGISTRY:
            raise ValueError(f"unknown output feature {self.output_feature!r}")


FIELD_NAMES = ("science_domain", "node_count", "walltime_seconds", "utilization", "output_feature")


def fill_defaults(partial: dict[str, Any], catalog: DomainCatalog) -> PredictionRequest:
    """Substitute the most frequent training value for every missing input and
    record exactly which fields were defaulted."""
    filled: set[str] = set()
    values = dict(partial)
    defaults = {
        "science_domain": catalog.modal_domain,
        "node_count": catalog.modal_node_count,
        "walltime_seconds": catalog.modal_walltime_seconds,
        "utilization": catalog.modal_utilization,
    }
    for name, default in defaults.items():
        if values.get(name) in (None, ""):
            values[name] = default
            filled.add(name)
    if values.get("output_feature") in (None, ""):
        raise InterpretationError("no output feature identified", ["output_feature"])
    return PredictionRequest(
        science_domain=str(values["science_domain"]),
        node_count=int(values["node_count"]),
        walltime_seconds=float(values["walltime_seconds"]),
        utilization=str(values["utilization"]),
        output_feature=str(values["output_feature"]),
        filled_defaults=frozenset(filled),
    )


def _validate_draft(draft: dict[str, Any], catalog: DomainCatalog) -> list[str]:
    failed: list[str] = []
    domain = draft.get("science_domain")
    if domain not in (None, "") and catalog.domain(str(domain)) is None:
        failed.append("science_domain")
    nodes = draft.get("node_count")
    if nodes not in (None, ""):
        try:
            if int(nodes) <= 0:
                failed.append("node_count")
        except (TypeError, ValueError):
            failed.append("node_count")
    wall = draft.get("walltime_seconds")
    if wall not in (None, ""):
        try:
            if float(wall) <= 0:
                failed.append("walltime_seconds")
        except (TypeError, ValueError):
            failed.append("walltime_seconds")
    util = draft.get("utilization")
    if util not in (None, "") and str(util).upper() not in UTILIZATIONS:
        failed.append("utilization")
    feature = draft.get("output_feature")
    if feature in (None, "") or feature not in FEATURE_REGISTRY:
        failed.append("output_feature")
    return failed


def _extract_json(text: str) -> dict[str, Any] | None:
    start, end = text.find("{"), text.rfind("}")
    if start < 0 or end <= start:
        return None
    try:
        data = json.loads(text[start : end + 1])
    except json.JSONDecodeError:
        return None
    return data if isinstance(data, dict) else None


INTERPRET_INSTRUCTIONS = (
    "Interpret the prediction question as JSON with the keys science_domain, node_count, "
    "walltime_seconds, utilization (CPU or GPU) and output_feature. Walltime is always in "
    "seconds. Use null for anything the question does not specify. Return only JSON."
)


def interpret_query(
    nl_text: str,
    gateway: ModelGateway,
    backend_id: str,
    catalog: DomainCatalog,
    agent_tag: str = "pa.interpret",
) -> PredictionRequest:
    """One model round plus at most one repair round, then default filling."""
    domain_block = "\n".join(f"- {d.name}: {d.description}" for d in catalog.domains)
    feature_block = "\n".join(
        f"- {s.key} ({s.unit}): {s.description}" for s in FEATURE_REGISTRY.values()
    )
    prompt = (
        f"{INTERPRET_INSTRUCTIONS}\n\nScience domains:\n{domain_block}\n\n"
        f"Output features:\n{feature_block}\n\nQuestion: {nl_text}"
    )
    messages: list[Message] = [user_message(prompt)]
    failed: list[str] = ["output_feature"]
    draft: dict[str, Any] | None = None
    for round_idx in range(2):  # initial round + one repair round
        response = gateway.complete(backend_id, ChatRequest(tuple(messages), agent=agent_tag))
        draft = _extract_json(response.message.content)
        if draft is None:
            failed = list(FIELD_NAMES)
        else:
            failed = _validate_draft(draft, catalog)
        if not failed:
            break
        if round_idx == 0:
            repair = (
                f"The structured request was invalid; fix these fields: {', '.join(failed)}. "
                "Return only corrected JSON."
            )
            messages.append(assistant_message(response.message.content))
            messages.append(user_message(repair))
    if failed or draft is None:
        raise InterpretationError(f"could not interpret the question; failed fields: {failed}", failed)
    if draft.get("utilization") not in (None, ""):
        draft["utilization"] = str(draft["utilization"]).upper()
    if draft.get("science_domain") not in (None, ""):
        draft["science_domain"] = catalog.domain(str(draft["science_domain"])).name
    return fill_defaults({k: draft.get(k) for k in FIELD_NAMES}, catalog)


# ---------------------------------------------------------------------------
# Feature encoding


@dataclass(frozen=True)
class FeatureEncoder:
    """[one-hot(domain) | utilization 0/1 | z(log1p(node_count)) | z(log1p(walltime))].

    The z parameters are frozen at train time; vector length is
    ``len(domains) + 3``.
    """

    domain_order: tuple[str, ...]
    log_nodes_mean: float
    log_nodes_std: float
    log_wall_mean: float
    log_wall_std: float

    @property
    def dimension(self) -> int:
        return len(self.domain_order) + 3

    def encode(self, request: PredictionRequest) -> np.ndarray:
        if request.science_domain not in self.domain_order:
            raise PredictionError(f"unknown domain {request.science_domain!r}")
        vec = np.zeros(self.dimension)
        vec[self.domain_order.index(request.science_domain)] = 1.0
        vec[len(self.domain_order)] = 1.0 if request.utilization == "GPU" else 0.0
        vec[len(self.domain_order) + 1] = (math.log1p(request.node_count) - self.log_nodes_mean) / self.log_nodes_std
        vec[len(self.domain_order) + 2] = (
            math.log1p(request.walltime_seconds) - self.log_wall_mean
        ) / self.log_wall_std
        return vec

    def encode_rows(self, rows: Sequence[dict[str, Any]]) -> np.ndarray:
        out = np.zeros((len(rows), self.dimension))
        for i, r in enumerate(rows):
            out[i] = self.encode(
                PredictionRequest(
                    science_domain=r["domain"],
                    node_count=int(r["node_count"]),
                    walltime_seconds=float(r["walltime_seconds"]),
                    utilization=r["utilization"],
                    output_feature=next(iter(FEATURE_REGISTRY)),
                )
            )
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "domain_order": list(self.domain_order),
            "log_nodes_mean": self.log_nodes_mean,
            "log_nodes_std": self.log_nodes_std,
            "log_wall_mean": self.log_wall_mean,
            "log_wall_std": self.log_wall_std,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "FeatureEncoder":
        return cls(
            tuple(data["domain_order"]),
            float(data["log_nodes_mean"]),
            float(data["log_nodes_std"]),
            float(data["log_wall_mean"]),
            float(data["log_wall_std"]),
        )


def fit_encoder(rows: Sequence[dict[str, Any]]) -> FeatureEncoder:
    domains = tuple(sorted({r["domain"] for r in rows}))
    log_nodes = np.log1p([float(r["node_count"]) for r in rows])
    log_wall = np.log1p([float(r["walltime_seconds"]) for r in rows])

    def std(a: np.ndarray) -> float:
        s = float(np.std(a))
        return s if s > 0 else 1.0

    return FeatureEncoder(
        domain_order=domains,
        log_nodes_mean=float(np.mean(log_nodes)),
        log_nodes_std=std(log_nodes),
        log_wall_mean=float(np.mean(log_wall)),
        log_wall_std=std(log_wall),
    )


# ---------------------------------------------------------------------------
# Training and prediction


@dataclass(frozen=True)
class TrainingConfig:
    seed: int = 7
    validation_fraction: float = 0.2
    mlp_hidden: tuple[int, ...] = (64, 64)
    mlp_epochs: int = 300
    mlp_batch_size: int = 32
    mlp_lr: float = 0.02
    mlp_lr_decay: float = 0.995
    tree_max_depth: int = 8
    tree_min_leaf: int = 20


@dataclass
class FeatureModels:
    mlp: MLPRegressor
    tree: RegressionTree
    chosen: str  # "mlp" | "tree"
    val_rmse_mlp: float
    val_rmse_tree: float
    log_space: bool
    target_mean: float
    target_std: float


@dataclass
class ModelBundle:
    catalog: DomainCatalog
    encoder: FeatureEncoder
    features: dict[str, FeatureModels]
    config: TrainingConfig

    def selection(self) -> dict[str, dict[str, Any]]:
        return {
            key: {"chosen": fm.chosen, "val_rmse_mlp": fm.val_rmse_mlp, "val_rmse_tree": fm.val_rmse_tree}
            for key, fm in self.features.items()
        }

    def save(self, path: str | Path) -> None:
        data = {
            "format_version": BUNDLE_FORMAT_VERSION,
            "catalog": self.catalog.to_dict(),
            "encoder": self.encoder.to_dict(),
            "config": {
                "seed": self.config.seed,
                "validation_fraction": self.config.validation_fraction,
                "mlp_hidden": list(self.config.mlp_hidden),
                "mlp_epochs": self.config.mlp_epochs,
                "mlp_batch_size": self.config.mlp_batch_size,
                "mlp_lr": self.config.mlp_lr,
                "mlp_lr_decay": self.config.mlp_lr_decay,
                "tree_max_depth": self.config.tree_max_depth,
                "tree_min_leaf": self.config.tree_min_leaf,
            },
            "features": {
                key: {
                    "mlp": fm.mlp.to_dict(),
                    "tree": fm.tree.to_dict(),
                    "chosen": fm.chosen,
                    "val_rmse_mlp": fm.val_rmse_mlp,
                    "val_rmse_tree": fm.val_rmse_tree,
                    "log_space": fm.log_space,
                    "target_mean": fm.target_mean,
                    "target_std": fm.target_std,
                }
                for key, fm in self.features.items()
            },
        }
        Path(path).write_text(json.dumps(data), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ModelBundle":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if data.get("format_version") != BUNDLE_FORMAT_VERSION:
            raise PredictionError(f"unsupported bundle format version {data.get('format_version')!r}")
        cfg = data["config"]
        config = TrainingConfig(
            seed=cfg["seed"],
            validation_fraction=cfg["validation_fraction"],
            mlp_hidden=tuple(cfg["mlp_hidden"]),
            mlp_epochs=cfg["mlp_epochs"],
            mlp_batch_size=cfg["mlp_batch_size"],
            mlp_lr=cfg["mlp_lr"],
            mlp_lr_decay=cfg["mlp_lr_decay"],
            tree_max_depth=cfg["tree_max_depth"],
            tree_min_leaf=cfg["tree_min_leaf"],
        )
        features = {
            key: FeatureModels(
                mlp=MLPRegressor.from_dict(fm["mlp"]),
                tree=RegressionTree.from_dict(fm["tree"]),
                chosen=fm["chosen"],
                val_rmse_mlp=fm["val_rmse_mlp"],
                val_rmse_tree=fm["val_rmse_tree"],
                log_space=fm["log_space"],
                target_mean=fm["target_mean"],
                target_std=fm["target_std"],
            )
            for key, fm in data["features"].items()
        }
        return cls(
            catalog=DomainCatalog.from_dict(data["catalog"]),
            encoder=FeatureEncoder.from_dict(data["encoder"]),
            features=features,
            config=config,
        )


MIN_TRAINING_ROWS = 50


def load_training_rows(path: str | Path) -> list[dict[str, Any]]:
    """Delimited training data: domain, node_count, walltime_seconds,
    utilization, then one column per target feature."""
    import csv

    rows: list[dict[str, Any]] = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for record in csv.DictReader(fh):
            rows.append(dict(record))
    return rows


def train(
    rows: Sequence[dict[str, Any]],
    config: TrainingConfig = TrainingConfig(),
    domain_descriptions: dict[str, str] | None = None,
) -> ModelBundle:
    """Fit both model families for every target feature present in the rows
    and select per feature by validation RMSE (ties go to the tree). Energy
    targets are fitted in log space."""
    if len(rows) < MIN_TRAINING_ROWS:
        raise PredictionError(
            f"insufficient data: {len(rows)} rows (need at least {MIN_TRAINING_ROWS})"
        )
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(rows))
    n_val = max(1, int(len(rows) * config.validation_fraction))
    val_idx = set(order[:n_val].tolist())
    train_rows = [rows[i] for i in range(len(rows)) if i not in val_idx]
    val_rows = [rows[i] for i in range(len(rows)) if i in val_idx]

    catalog = build_domain_catalog(train_rows, domain_descriptions)
    encoder = fit_encoder(train_rows)
    X_train = encoder.encode_rows(train_rows)
    X_val = encoder.encode_rows(val_rows)

    target_keys = [k for k in FEATURE_REGISTRY if k in rows[0]]
    if not target_keys:
        raise PredictionError("no target feature columns present in the training data")

    features: dict[str, FeatureModels] = {}
    for key in target_keys:
        spec = FEATURE_REGISTRY[key]
        y_train = np.asarray([float(r[key]) for r in train_rows])
        y_val = np.asarray([float(r[key]) for r in val_rows])
        log_space = spec.group == "Energy"
        t_train = np.log1p(y_train) if log_space else y_train
        mean, std = float(np.mean(t_train)), float(np.std(t_train)) or 1.0

        mlp = MLPRegressor(encoder.dimension, hidden=config.mlp_hidden, seed=config.seed)
        mlp.fit(
            X_train,
            (t_train - mean) / std,
            epochs=config.mlp_epochs,
            batch_size=config.mlp_batch_size,
            lr=config.mlp_lr,
            lr_decay=config.mlp_lr_decay,
            seed=config.seed,
        )
        tree = RegressionTree(max_depth=config.tree_max_depth, min_leaf=config.tree_min_leaf)
        tree.fit(X_train, t_train)

        def back(raw: np.ndarray, scaled: bool) -> np.ndarray:
            t = raw * std + mean if scaled else raw
            return np.expm1(t) if log_space else t

        rmse_mlp = _rmse(back(mlp.predict(X_val), True), y_val)
        rmse_tree = _rmse(back(tree.predict(X_val), False), y_val)
        chosen = "tree" if rmse_tree <= rmse_mlp else "mlp"
        features[key] = FeatureModels(
            mlp=mlp,
            tree=tree,
            chosen=chosen,
            val_rmse_mlp=rmse_mlp,
            val_rmse_tree=rmse_tree,
            log_space=log_space,
            target_mean=mean,
            target_std=std,
        )
    return ModelBundle(catalog=catalog, encoder=encoder, features=features, config=config)


def _rmse(preds: np.ndarray, truths: np.ndarray) -> float:
    return float(np.sqrt(np.mean((preds - truths) ** 2)))


def predict(request: PredictionRequest, bundle: ModelBundle) -> dict[str, Any]:
    """Value from the selected model family for the requested feature, with
    units from the registry; log-space targets are exponentiated back."""
    if request.output_feature not in bundle.features:
        raise PredictionError(f"no trained model for feature {request.output_feature!r}")
    fm = bundle.features[request.output_feature]
    x = bundle.encoder.encode(request)
    if fm.chosen == "mlp":
        raw = float(fm.mlp.predict(x[None, :])[0]) * fm.target_std + fm.target_mean
    else:
        raw = float(fm.tree.predict(x[None, :])[0])
    value = float(np.expm1(raw)) if fm.log_space else raw
    return {
        "value": value,
        "units": FEATURE_REGISTRY[request.output_feature].unit,
        "model_kind": fm.chosen,
    }


class PAAgent:
    """Question to structured request to regression prediction."""

    def __init__(self, bundle: ModelBundle, gateway: ModelGateway, backend_id: str) -> None:
        self.bundle = bundle
        self.gateway = gateway
        self.backend_id = backend_id

    def interpret(self, question: str) -> PredictionRequest:
        return interpret_query(question, self.gateway, self.backend_id, self.bundle.catalog)

    def answer(self, question: str, context: str = "") -> dict[str, Any]:
        request = self.interpret(question)
        outcome = predict(request, self.bundle)
        spec = FEATURE_REGISTRY[request.output_feature]
        defaulted = (
            f" (defaulted: {', '.join(sorted(request.filled_defaults))})" if request.filled_defaults else ""
        )
        text = (
            f"Predicted {spec.description.lower()} for a {request.science_domain} job on "
            f"{request.node_count} nodes ({request.utilization}, {request.walltime_seconds:.0f} s): "
            f"{outcome['value']:.4g} {outcome['units']} [{outcome['model_kind']}]{defaulted}"
        )
        prediction = {
            "output_feature": request.output_feature,
            "value": outcome["value"],
            "units": outcome["units"],
            "model_kind": outcome["model_kind"],
            "science_domain": request.science_domain,
            "node_count": request.node_count,
            "walltime_seconds": request.walltime_seconds,
            "utilization": request.utilization,
            "filled_defaults": sorted(request.filled_defaults),
        }
        table = table_attachment(
            ["feature", "value", "units", "model"],
            [[request.output_feature, f"{outcome['value']:.6g}", outcome["units"], outcome["model_kind"]]],
        )
        return {"text": text, "attachments": [table.to_dict()], "prediction": prediction}
