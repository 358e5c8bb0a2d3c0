"""Experiment configuration: YAML in, validated dataclasses out.

Unknown keys are rejected and every error names the offending field with a
dotted path such as ``privacy.epsilon``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .data import Schema
from .errors import ConfigError


@dataclass
class DatasetConfig:
    path: str | None = None
    schema: Schema | None = None
    synthetic: dict | None = None
    split_ratio: float | None = 0.7
    train_size: int | None = None
    subsample: int | None = None


@dataclass
class GraphConfig:
    n: int = 10
    E: int | None = 13
    seed: int | None = None
    edges: list | None = None


@dataclass
class PrivacyConfig:
    epsilon: float = math.inf
    R: float = 0.0
    rho: float = 0.8
    V: float | list = 0.0


@dataclass
class AdmmSection:
    beta: float | str = 1.0
    T: int = 100
    inner_tol: float = 1e-8
    inner_max_iters: int = 100
    a: float = 0.01
    W_bound: float = 10.0
    variant: str = "modified_loss"
    workers: int = 1


@dataclass
class SeedConfig:
    data: int = 0
    rr: int = 0
    noise: int = 0
    eta: int = 0
    graph: int = 0


@dataclass
class BoundsConfig:
    enabled: bool = False
    delta: float = 0.05
    rademacher_trials: int = 100


@dataclass
class OutputConfig:
    dir: str | None = None
    dump_randomized: bool = False


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    privacy: PrivacyConfig = field(default_factory=PrivacyConfig)
    admm: AdmmSection = field(default_factory=AdmmSection)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    bounds: BoundsConfig = field(default_factory=BoundsConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)
    base_dir: str = field(default=".", repr=False)

    # ------------------------------------------------------------------
    def resolve(self, p: str | None) -> Path | None:
        """Paths in a config file are relative to the file's directory."""
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def graph_seed(self) -> int:
        return self.graph.seed if self.graph.seed is not None else self.seeds.graph

    @property
    def perturb_objective(self) -> bool:
        return self.privacy.R > 0

    @property
    def perturb_primal(self) -> bool:
        V = self.privacy.V
        return any(v > 0 for v in V) if isinstance(V, list) else V > 0

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("base_dir")
        if self.dataset.schema is not None:
            out["dataset"]["schema"] = asdict(self.dataset.schema)
        out["privacy"]["epsilon"] = _eps_out(self.privacy.epsilon)
        # absolute paths keep the dumped config valid wherever it is stored
        if self.dataset.path is not None:
            out["dataset"]["path"] = str(self.resolve(self.dataset.path).resolve())
        if self.outputs.dir is not None:
            out["outputs"]["dir"] = str(self.resolve(self.outputs.dir).resolve())
        return _drop_none(out)

    def with_overrides(self, **sections) -> "ExperimentConfig":
        """Copy with selected fields replaced, e.g. ``privacy={"epsilon": 1}``."""
        new = copy.deepcopy(self)
        for sec, values in sections.items():
            if not isinstance(values, dict):
                setattr(new, sec, values)
                continue
            target = getattr(new, sec)
            for k, v in values.items():
                if not hasattr(target, k):
                    raise ConfigError("unknown key", f"{sec}.{k}")
                setattr(target, k, v)
        validate(new)
        return new


def _eps_out(eps):
    return "inf" if math.isinf(eps) else eps


def _drop_none(d):
    if isinstance(d, dict):
        return {k: _drop_none(v) for k, v in d.items() if v is not None}
    return d


# --------------------------------------------------------------------------
# parsing

def _check_keys(data, allowed, path):
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("expected a mapping", path or "<root>")
    for k in data:
        if k not in allowed:
            where = f"{path}.{k}" if path else str(k)
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})", where)
    return data


def _num(v, path, kind=float):
    if isinstance(v, bool):
        raise ConfigError(f"expected a number, got {v!r}", path)
    if kind is float and isinstance(v, str) and v.strip().lower() in ("inf", "+inf", "infinity", ".inf"):
        return math.inf
    try:
        out = kind(v)
    except (TypeError, ValueError):
        raise ConfigError(f"expected {'an integer' if kind is int else 'a number'}, got {v!r}", path) from None
    if kind is int and isinstance(v, float) and v != out:
        raise ConfigError(f"expected an integer, got {v!r}", path)
    return out


def _section(cls, data, path, converters):
    fields_ = {f for f in cls.__dataclass_fields__}
    data = _check_keys(data, fields_, path)
    kwargs = {}
    for k, v in data.items():
        conv = converters.get(k)
        kwargs[k] = conv(v, f"{path}.{k}") if conv and v is not None else v
    return cls(**kwargs)


def _float(v, p):
    return _num(v, p, float)


def _int(v, p):
    return _num(v, p, int)


def _bool(v, p):
    if not isinstance(v, bool):
        raise ConfigError(f"expected true/false, got {v!r}", p)
    return v


def _V(v, p):
    if isinstance(v, list):
        return [_float(x, f"{p}[{k}]") for k, x in enumerate(v)]
    return _float(v, p)


def _beta(v, p):
    if isinstance(v, str) and v == "theory":
        return v
    return _float(v, p)


def _schema(v, p):
    data = _check_keys(v, {"columns", "positive_label", "intercept"}, p)
    if "columns" not in data or "positive_label" not in data:
        raise ConfigError("needs 'columns' and 'positive_label'", p)
    cols = _check_keys(data["columns"], set(data["columns"] or {}), f"{p}.columns")
    for c, role in cols.items():
        if role not in ("numeric", "categorical", "label", "ignore"):
            raise ConfigError(f"role must be numeric, categorical, label or ignore; got {role!r}", f"{p}.columns.{c}")
    pos = data["positive_label"]
    pos = [str(x) for x in pos] if isinstance(pos, list) else str(pos)
    try:
        return Schema(columns={str(k): r for k, r in cols.items()}, positive_label=pos, intercept=bool(data.get("intercept", False)))
    except ValueError as exc:
        raise ConfigError(str(exc), p) from None


def _synthetic(v, p):
    from .synthetic import GENERATORS

    data = _check_keys(v, {"generator", "m", "params", "intercept"}, p)
    if data.get("generator") not in GENERATORS:
        raise ConfigError(f"generator must be one of {sorted(GENERATORS)}", f"{p}.generator")
    if "m" not in data:
        raise ConfigError("missing sample count", f"{p}.m")
    out = {"generator": data["generator"], "m": _int(data["m"], f"{p}.m"), "params": dict(data.get("params") or {})}
    if data.get("intercept") is not None:
        out["intercept"] = _bool(data["intercept"], f"{p}.intercept")
    return out


def _edges(v, p):
    if not isinstance(v, list):
        raise ConfigError("expected a list of [i, j] pairs", p)
    out = []
    for k, e in enumerate(v):
        if not (isinstance(e, (list, tuple)) and len(e) == 2):
            raise ConfigError("expected a pair [i, j]", f"{p}[{k}]")
        out.append([_int(e[0], f"{p}[{k}]"), _int(e[1], f"{p}[{k}]")])
    return out


def config_from_dict(data: dict, base_dir=".") -> ExperimentConfig:
    top = _check_keys(data, set(ExperimentConfig.__dataclass_fields__) - {"base_dir"}, "")
    cfg = ExperimentConfig(
        name=str(top.get("name", "experiment")),
        dataset=_section(DatasetConfig, top.get("dataset"), "dataset", {
            "schema": _schema, "synthetic": _synthetic, "split_ratio": _float,
            "train_size": _int, "subsample": _int, "path": lambda v, p: str(v),
        }),
        graph=_section(GraphConfig, top.get("graph"), "graph", {"n": _int, "E": _int, "seed": _int, "edges": _edges}),
        privacy=_section(PrivacyConfig, top.get("privacy"), "privacy", {"epsilon": _float, "R": _float, "rho": _float, "V": _V}),
        admm=_section(AdmmSection, top.get("admm"), "admm", {
            "beta": _beta, "T": _int, "inner_tol": _float, "inner_max_iters": _int,
            "a": _float, "W_bound": _float, "workers": _int, "variant": lambda v, p: str(v),
        }),
        seeds=_section(SeedConfig, top.get("seeds"), "seeds", {k: _int for k in SeedConfig.__dataclass_fields__}),
        bounds=_section(BoundsConfig, top.get("bounds"), "bounds", {"enabled": _bool, "delta": _float, "rademacher_trials": _int}),
        outputs=_section(OutputConfig, top.get("outputs"), "outputs", {"dir": lambda v, p: str(v), "dump_randomized": _bool}),
        base_dir=str(base_dir),
    )
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    d = cfg.dataset
    if (d.path is None) == (d.synthetic is None):
        raise ConfigError("give exactly one of 'path' or 'synthetic'", "dataset")
    if d.path is not None and d.schema is None:
        raise ConfigError("a CSV dataset needs a schema", "dataset.schema")
    if d.train_size is not None:
        if d.train_size < 1:
            raise ConfigError("must be positive", "dataset.train_size")
    elif d.split_ratio is not None and not 0 < d.split_ratio < 1:
        raise ConfigError("must lie in (0, 1)", "dataset.split_ratio")
    g = cfg.graph
    if g.n < 2:
        raise ConfigError("need at least 2 servers", "graph.n")
    if g.edges is None and g.E is None:
        raise ConfigError("give E or an explicit edge list", "graph")
    p = cfg.privacy
    if math.isnan(p.epsilon) or p.epsilon <= 0:
        raise ConfigError("must be > 0", "privacy.epsilon")
    if p.R < 0:
        raise ConfigError("must be >= 0", "privacy.R")
    if not 0 < p.rho < 1:
        raise ConfigError("must lie in (0, 1)", "privacy.rho")
    V = p.V if isinstance(p.V, list) else [p.V]
    if any(v < 0 for v in V):
        raise ConfigError("must be >= 0", "privacy.V")
    if isinstance(p.V, list) and len(p.V) != g.n:
        raise ConfigError(f"needs one entry per server ({g.n})", "privacy.V")
    a = cfg.admm
    if a.T < 1:
        raise ConfigError("must be >= 1", "admm.T")
    if a.beta != "theory" and not (isinstance(a.beta, float) and a.beta > 0):
        raise ConfigError("must be positive or 'theory'", "admm.beta")
    if a.a <= 0:
        raise ConfigError("must be positive", "admm.a")
    if a.variant not in ("original_loss", "modified_loss"):
        raise ConfigError("must be original_loss or modified_loss", "admm.variant")
    if a.inner_tol <= 0 or a.inner_max_iters < 1 or a.workers < 1:
        raise ConfigError("inner_tol, inner_max_iters and workers must be positive", "admm")
    if not 0 < cfg.bounds.delta < 1:
        raise ConfigError("must lie in (0, 1)", "bounds.delta")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(str(exc), str(path)) from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}", str(path)) from None
    return config_from_dict(data or {}, base_dir=path.parent)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
