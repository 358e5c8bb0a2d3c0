"""End-to-end experiment pipeline and the accuracy-grid suite.

    load -> split -> scale (fit on train) -> partition -> randomize labels
         -> optional bounds -> ADMM -> metrics -> artifacts

Artifacts written to ``outputs.dir`` (all carry the resolved config):

``config.yaml``         resolved configuration
``graph.edges``         edge list (``# `` header lines, then ``n E`` and links)
``iterations.ndjson``   header record, then one flat record per round
``classifiers.csv``     final and averaged classifier of every server
``accuracy.csv``        test accuracy of the run
``bounds.txt``          bound report (when ``bounds.enabled``)
``randomized.csv``      training data with reported labels (optional)
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bounds as bnd
from .admm import AdmmConfig, NoiseSchedule, run
from .config import ExperimentConfig, dump_config, load_config
from .data import (
    Dataset,
    FeatureScaler,
    RRMechanism,
    dump_randomized_csv,
    partition,
    randomize_shards,
    read_csv_table,
    subsample,
    train_test_split,
)
from .errors import NoFeasibleParams, PDMLError
from .metrics import accuracy, risk_per_server
from .objective import LogisticObjective, LossModel, ObjectiveSpec, generate_eta
from .synthetic import GENERATORS
from .topology import Graph, build_graph, random_connected_graph, spectral_profile, write_edge_list

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# pipeline pieces

@dataclass
class PreparedData:
    train: Dataset
    test: Dataset | None
    shards: list
    graph: Graph
    spec: ObjectiveSpec
    feature_names: list


def load_dataset(cfg: ExperimentConfig) -> tuple[Dataset, np.ndarray]:
    """Encoded (unscaled) data and the mask of numeric columns."""
    d = cfg.dataset
    if d.synthetic is not None:
        gen = GENERATORS[d.synthetic["generator"]]
        data = gen(d.synthetic["m"], seed=cfg.seeds.data, **d.synthetic["params"])
        if not d.synthetic.get("intercept", False):
            return data, np.ones(data.d, dtype=bool)
        # the constant column is not numeric, so scaling leaves it at 1
        X = np.hstack([data.X, np.ones((len(data), 1))])
        data = Dataset(X=X, y_true=data.y_true, feature_names=list(data.feature_names) + ["intercept"])
        return data, np.r_[np.ones(data.d - 1, dtype=bool), False]
    table = read_csv_table(cfg.resolve(d.path), d.schema)
    log.info("loaded %s: %d rows, d=%d, %d rows dropped", d.path, len(table.y), table.X.shape[1], table.dropped)
    return Dataset(X=table.X, y_true=table.y, feature_names=table.feature_names), table.numeric_mask


def make_graph(cfg: ExperimentConfig) -> Graph:
    g = cfg.graph
    if g.edges is not None:
        return build_graph(g.n, g.edges)
    return random_connected_graph(g.n, g.E, cfg.graph_seed)


def split(cfg: ExperimentConfig, data: Dataset) -> tuple[Dataset, Dataset | None]:
    d = cfg.dataset
    seed = cfg.seeds.data
    if d.subsample is not None:
        data = subsample(data, d.subsample, seed)
    if d.train_size is not None:
        if d.train_size >= len(data):
            return data, None
        perm = np.random.default_rng(seed).permutation(len(data))
        return data.subset(perm[: d.train_size]), data.subset(perm[d.train_size:])
    if d.split_ratio is None:
        return data, None
    return train_test_split(data, d.split_ratio, seed)


def prepare(cfg: ExperimentConfig) -> PreparedData:
    raw, numeric = load_dataset(cfg)
    train, test = split(cfg, raw)
    scaler = FeatureScaler(numeric).fit(train.X)
    train = Dataset(scaler.transform(train.X), train.y_true, feature_names=raw.feature_names)
    if test is not None:
        test = Dataset(scaler.transform(test.X), test.y_true, feature_names=raw.feature_names)
    graph = make_graph(cfg)
    shards = partition(train, graph.n, cfg.seeds.data)
    eps = cfg.privacy.epsilon
    if math.isinf(eps):
        shards = [_with_reported(s, s.y_true) for s in shards]
    else:
        shards = randomize_shards(shards, RRMechanism(eps, cfg.seeds.rr))
    eta = generate_eta(graph.n, train.d, cfg.privacy.R, cfg.seeds.eta) if cfg.perturb_objective else None
    spec = ObjectiveSpec(
        a=cfg.admm.a, n=graph.n, epsilon=eps, loss=LossModel(W_bound=cfg.admm.W_bound),
        eta=eta, R=cfg.privacy.R,
    )
    return PreparedData(train, test, shards, graph, spec, list(raw.feature_names))


def _with_reported(s, y):
    from dataclasses import replace

    return replace(s, y_reported=np.array(y, copy=True))


# --------------------------------------------------------------------------
# bounds

@dataclass
class BoundsResult:
    text: str
    params: bnd.ConvergenceParams | None
    report: bnd.BoundReport | None
    infeasible: NoFeasibleParams | None = None


def compute_bounds(cfg: ExperimentConfig, prep: PreparedData) -> BoundsResult:
    """Spectral data, corollaries and, when the parameter search succeeds, the
    full perturbed and noise-free bounds."""
    graph, spec, shards = prep.graph, prep.spec, prep.shards
    d = prep.train.d
    profile = spectral_profile(graph, d)
    rad = [
        bnd.rademacher_complexity(s, spec.loss.W_bound, cfg.bounds.rademacher_trials, seed=[cfg.seeds.data, s.server_id])[0]
        for s in shards
    ]
    m = [s.m for s in shards]
    cor1, cor2 = bnd.corollary_bounds(spec, rad, m, cfg.bounds.delta)
    lines = ["[spectral]"]
    for k, v in vars(profile).items():
        lines.append(f"{k} = {v:.10g}")
    lines.append("[rademacher]")
    lines.extend(f"rad_{i} = {r:.10g}" for i, r in enumerate(rad))
    lines.append("[corollaries]")
    lines.append(f"corollary1 = {cor1:.10g}")
    lines.append(f"corollary2 = {cor2:.10g}")

    pert = [LogisticObjective(s.X, s.labels(), spec.a, spec.n, spec.epsilon, spec.eta_for(s.server_id, d)) for s in shards]
    plain = [LogisticObjective(s.X, s.labels(), spec.a, spec.n, spec.epsilon) for s in shards]
    w_tilde = bnd.centralized_optimum(pert)
    w_hat = bnd.centralized_optimum(plain)
    grads = np.stack([o.gradient(w_tilde) for o in pert])
    params = report = None
    infeasible = None
    try:
        params = bnd.search_convergence_params(profile, spec, graph=graph, w_opt=w_tilde, grads_at_opt=grads)
    except NoFeasibleParams as exc:
        infeasible = exc
        lines.append("[convergence]")
        lines.append("feasible = false")
        lines.append(f"closest_margin = {exc.closest_margin:.10g}")
        beta = cfg.admm.beta if cfg.admm.beta != "theory" else float("nan")
        h3 = bnd.weighted_sq_norm(graph, -np.broadcast_to(w_hat, (graph.n, d)))
        gen = bnd.generalization_term(spec.epsilon, spec.c1, spec.c2, rad, m, cfg.bounds.delta)
        lines.append("[noise-free bound, configured beta]")
        for t in (1, 10, 100, 1000, cfg.admm.T):
            lines.append(f"theorem3.total(t={t}) = {beta / t * h3 + gen:.10g}")
    if params is not None:
        lines.append("[convergence]")
        lines.append("feasible = true")
        for k, v in params.as_dict().items():
            if v is not None:
                lines.append(f"{k} = {v:.10g}")
        sched = NoiseSchedule(V=_v_tuple(cfg), rho=cfg.privacy.rho, seed=cfg.seeds.noise)
        try:
            report = bnd.bound_report(params, profile, spec, sched, rad, m, d, graph=graph, w_hat_opt=w_hat, delta=cfg.bounds.delta)
            lines.append(report.to_text(ts=(1, 10, 100, 1000, cfg.admm.T)).rstrip("\n"))
        except PDMLError as exc:
            lines.append(f"theorem1 = unavailable ({exc})")
    header = "resolved config:\n" + dump_config(cfg)
    text = "".join("# " + h + "\n" for h in header.splitlines()) + "\n".join(lines) + "\n"
    return BoundsResult(text=text, params=params, report=report, infeasible=infeasible)


def _v_tuple(cfg):
    V = cfg.privacy.V
    return tuple(V) if isinstance(V, list) else float(V)


# --------------------------------------------------------------------------
# run

@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    final_w: np.ndarray
    final_wbar: np.ndarray
    accuracy_final: list = field(default_factory=list)
    accuracy_averaged: list = field(default_factory=list)
    reference_risk: float | None = None
    bounds: BoundsResult | None = None
    beta: float = float("nan")

    @property
    def accuracy(self) -> float:
        """Mean test accuracy of the servers' final classifiers."""
        return float(np.mean(self.accuracy_final)) if self.accuracy_final else float("nan")

    @property
    def final_risk(self) -> float:
        return self.records[-1].risk

    def risk_curve(self) -> np.ndarray:
        return np.array([r.risk for r in self.records])


def resolve_beta(cfg: ExperimentConfig, prep: PreparedData, bres: BoundsResult | None) -> float:
    if cfg.admm.beta != "theory":
        return float(cfg.admm.beta)
    if bres is not None and bres.params is not None:
        return bres.params.beta_theory
    profile = spectral_profile(prep.graph, prep.train.d)
    return bnd.search_convergence_params(profile, prep.spec).beta_theory


def reference_risk(prep: PreparedData) -> float:
    """Risk of the centralized optimum trained on the true labels without any
    perturbation, measured with the same metric as the per-round log."""
    objs = [LogisticObjective(s.X, s.y_true, prep.spec.a, prep.spec.n) for s in prep.shards]
    w = bnd.centralized_optimum(objs)
    return float(np.sum(risk_per_server(w, prep.shards, prep.spec.a)))


def run_experiment(cfg: ExperimentConfig, write: bool = True, keep_snapshots: bool = True) -> ExperimentResult:
    """Execute one configured run; artifacts go to ``outputs.dir`` if ``write``."""
    prep = prepare(cfg)
    out_dir = cfg.resolve(cfg.outputs.dir) if (write and cfg.outputs.dir) else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    header = "resolved config:\n" + dump_config(cfg)

    bres = compute_bounds(cfg, prep) if cfg.bounds.enabled else None
    beta = resolve_beta(cfg, prep, bres)
    acfg = AdmmConfig(
        beta=beta, T=cfg.admm.T, inner_tol=cfg.admm.inner_tol, inner_max_iters=cfg.admm.inner_max_iters,
        perturb_primal=cfg.perturb_primal, perturb_objective=cfg.perturb_objective, variant=cfg.admm.variant,
    )
    sched = NoiseSchedule(V=_v_tuple(cfg), rho=cfg.privacy.rho, seed=cfg.seeds.noise)

    log_fh = None
    if out_dir is not None:
        log_fh = (out_dir / "iterations.ndjson").open("w")
        log_fh.write(json.dumps({"record": "header", "config": cfg.to_dict(), "beta": beta}) + "\n")
    records = []

    def on_record(rec):
        if log_fh is not None:
            log_fh.write(json.dumps(rec.to_dict()) + "\n")
        if not keep_snapshots:
            rec.w_snapshot = rec.wtilde_snapshot = rec.wbar_snapshot = None
        records.append(rec)
        if rec.t % 50 == 0 or rec.t == acfg.T:
            log.info("%s t=%d risk=%.6f consensus=%.3e", cfg.name, rec.t, rec.risk, rec.consensus_norm_gap)

    try:
        res = run(prep.graph, prep.shards, acfg, prep.spec, sched, workers=cfg.admm.workers, callback=on_record)
    finally:
        if log_fh is not None:
            log_fh.close()

    result = ExperimentResult(
        config=cfg, records=records, final_w=res.w, final_wbar=res.wbar, bounds=bres, beta=beta,
        reference_risk=reference_risk(prep),
    )
    if prep.test is not None and len(prep.test):
        result.accuracy_final = [accuracy(w, prep.test) for w in res.w]
        result.accuracy_averaged = [accuracy(w, prep.test) for w in res.wbar]

    if out_dir is not None:
        (out_dir / "config.yaml").write_text(dump_config(cfg))
        write_edge_list(prep.graph, out_dir / "graph.edges", header=header)
        _write_classifiers(out_dir / "classifiers.csv", res, prep.feature_names, header)
        _write_accuracy(out_dir / "accuracy.csv", result, header)
        if bres is not None:
            (out_dir / "bounds.txt").write_text(bres.text)
        if cfg.outputs.dump_randomized:
            dump_randomized_csv(prep.shards, out_dir / "randomized.csv", prep.feature_names, header)
    return result


def _comment(header):
    return "".join("# " + h + "\n" for h in header.splitlines())


def _write_classifiers(path, res, names, header):
    d = res.w.shape[1]
    names = names if len(names) == d else [f"x{k}" for k in range(d)]
    buf = io.StringIO()
    buf.write(_comment(header))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["server", "kind", *names])
    for i in range(res.w.shape[0]):
        w.writerow([i, "final", *(f"{v:.17g}" for v in res.w[i])])
        w.writerow([i, "averaged", *(f"{v:.17g}" for v in res.wbar[i])])
    Path(path).write_text(buf.getvalue())


def _write_accuracy(path, result, header):
    buf = io.StringIO()
    buf.write(_comment(header))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "accuracy_final", "accuracy_averaged", "final_risk", "reference_risk"])
    acc_avg = float(np.mean(result.accuracy_averaged)) if result.accuracy_averaged else float("nan")
    w.writerow([result.config.name, f"{100 * result.accuracy:.4f}", f"{100 * acc_avg:.4f}", f"{result.final_risk:.10g}", f"{result.reference_risk:.10g}"])
    Path(path).write_text(buf.getvalue())


# --------------------------------------------------------------------------
# suite

@dataclass(frozen=True)
class Setting:
    label: str
    epsilon: float
    R: float
    perturbed: bool

    def overrides(self, V: float, rho: float) -> dict:
        return {"epsilon": self.epsilon, "R": self.R, "V": V if self.perturbed else 0.0, "rho": rho}


GRID_SETTINGS = (
    Setting("noPriv", math.inf, 0.0, False),
    Setting("eps0.4_R0", 0.4, 0.0, False),
    Setting("eps1_R0", 1.0, 0.0, False),
    Setting("eps0.4_R1", 0.4, 1.0, True),
    Setting("eps0.4_R9", 0.4, 9.0, True),
    Setting("eps1_R1", 1.0, 1.0, True),
    Setting("eps1_R9", 1.0, 9.0, True),
)


@dataclass
class SuiteOptions:
    seeds: int = 5
    V: float = 0.1
    rho: float = 0.8
    workers: int = 1
    settings: tuple = GRID_SETTINGS


def cell_configs(base: ExperimentConfig, opts: SuiteOptions):
    """``(dataset, setting, seed index, config)`` for every run of the grid.

    Seed index ``k`` shifts the split/partition, label, objective-noise and
    primal-noise seeds together, so every cell averages over the same splits.
    """
    out = []
    for st in opts.settings:
        for k in range(opts.seeds):
            s = base.seeds
            cfg = base.with_overrides(
                privacy=st.overrides(opts.V, opts.rho),
                seeds={"data": s.data + k, "rr": s.rr + k, "eta": s.eta + k, "noise": s.noise + k},
                outputs={"dir": None, "dump_randomized": False},
                bounds={"enabled": False},
            )
            cfg.name = f"{base.name}/{st.label}/seed{k}"
            out.append((base.name, st.label, k, cfg))
    return out


def _run_cell(args):
    dataset, label, k, cfg = args
    try:
        res = run_experiment(cfg, write=False, keep_snapshots=False)
        return {"dataset": dataset, "setting": label, "seed": k, "ok": True,
                "accuracy": res.accuracy, "accuracy_averaged": float(np.mean(res.accuracy_averaged)),
                "final_risk": res.final_risk, "consensus_norm_gap": res.records[-1].consensus_norm_gap}
    except Exception as exc:  # one failing cell must not stop the grid
        return {"dataset": dataset, "setting": label, "seed": k, "ok": False, "error": f"{type(exc).__name__}: {exc}"}


def run_suite(cfgs, opts: SuiteOptions | None = None, out_dir=None) -> "SuiteSummary":
    opts = opts or SuiteOptions()
    cells = [c for cfg in cfgs for c in cell_configs(cfg, opts)]
    if opts.workers > 1:
        with ProcessPoolExecutor(max_workers=opts.workers) as pool:
            logs = list(pool.map(_run_cell, cells))
    else:
        logs = [_run_cell(c) for c in cells]
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with (out_dir / "cells.ndjson").open("w") as fh:
            for rec in logs:
                fh.write(json.dumps(rec) + "\n")
    summary = summarize_cells(logs, [c.name for c in cfgs], [s.label for s in opts.settings])
    if out_dir is not None:
        (out_dir / "table.csv").write_text(summary.to_csv())
    return summary


@dataclass
class SuiteSummary:
    datasets: list
    settings: list
    mean: dict
    std: dict
    count: dict
    failures: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dataset", *self.settings, *(f"{s}_std" for s in self.settings)])
        for ds in self.datasets:
            row = [ds]
            row += [_fmt(self.mean.get((ds, s))) for s in self.settings]
            row += [_fmt(self.std.get((ds, s))) for s in self.settings]
            w.writerow(row)
        return buf.getvalue()

    def to_text(self) -> str:
        width = max(len(d) for d in self.datasets) + 2
        lines = ["".ljust(width) + "".join(s.rjust(11) for s in self.settings)]
        for ds in self.datasets:
            lines.append(ds.ljust(width) + "".join(_fmt(self.mean.get((ds, s))).rjust(11) for s in self.settings))
        for f in self.failures:
            lines.append(f"FAILED {f['dataset']}/{f['setting']}/seed{f['seed']}: {f['error']}")
        return "\n".join(lines) + "\n"


def _fmt(v):
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.2f}"


def summarize_cells(logs, datasets, settings) -> SuiteSummary:
    """Percent accuracy mean/std per (dataset, setting); a pure function of cell logs."""
    mean, std, count = {}, {}, {}
    for ds in datasets:
        for st in settings:
            vals = [100 * r["accuracy"] for r in logs if r["ok"] and r["dataset"] == ds and r["setting"] == st]
            if vals:
                mean[(ds, st)] = float(np.mean(vals))
                std[(ds, st)] = float(np.std(vals))
                count[(ds, st)] = len(vals)
    failures = [r for r in logs if not r["ok"]]
    return SuiteSummary(list(datasets), list(settings), mean, std, count, failures)


def load_suite_dir(path) -> tuple[list[ExperimentConfig], SuiteOptions]:
    """Every ``*.yaml`` in ``path`` is a dataset config, except ``suite.yaml``
    which may set ``seeds``, ``V``, ``rho`` and ``workers``."""
    import yaml

    from .errors import ConfigError

    path = Path(path)
    if not path.is_dir():
        raise ConfigError("not a directory", str(path))
    opts = SuiteOptions()
    sfile = path / "suite.yaml"
    if sfile.exists():
        data = yaml.safe_load(sfile.read_text()) or {}
        for k, v in data.items():
            if k not in ("seeds", "V", "rho", "workers"):
                raise ConfigError("unknown key", f"{sfile}: {k}")
            setattr(opts, k, type(getattr(opts, k))(v))
    cfgs = [load_config(p) for p in sorted(path.glob("*.yaml")) if p.name != "suite.yaml"]
    if not cfgs:
        raise ConfigError("no dataset configs found", str(path))
    return cfgs, opts

