"""Separation study: AdaptRep vs FrozenRep vs least squares on the hard-case family.

For each ``n_T`` in the grid (with ``d = round(d_multiplier * n_T)`` and
``eps = k/d``) the harness builds a hard-case source environment, trains both
source objectives with random restarts, picks the restart with the best
worst-case target risk, and measures the excess risk of fine-tuning on
``replications`` fresh target datasets of the worst-case task.
"""

import csv
import dataclasses
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List

import numpy as np

from ._validation import rng_for
from .adapt import AdaptSpec, finetune_linear_batch
from .hardcase import HardCaseSpec, _draw_hard_task, make_hardcase_env, sample_hard_dataset
from .metrics import excess_risk_quadratic, sine_principal_angle
from .source import (SourceOptions, SourceStats, adaptrep_source, default_regularization,
                     frozenrep_source)

__all__ = [
    "METHODS",
    "ExperimentConfig",
    "ExperimentRecord",
    "run_cell",
    "reproduce_separation",
    "summarize_records",
    "read_records",
]

METHODS = ("adaptrep", "frozenrep", "ols_baseline")
RECORD_FIELDS = ["method", "d", "n_T", "replication", "excess_risk", "sine_dist",
                 "wall_time_ms", "seed", "config_hash", "error"]


@dataclass
class ExperimentConfig:
    n_T_grid: List[int] = field(default_factory=lambda: [32, 64, 128, 256])
    d_multiplier: float = 1.0
    k: int = 2
    noise_sigma: float = 2.0
    T: int = 1000
    n_S_multiplier: int = 10
    restarts: int = 10
    replications: int = 1000
    M: int = 64
    inner_replications: int = 10
    methods: List[str] = field(default_factory=lambda: list(METHODS))
    seed: int = 0
    out_dir: str = "results"
    pgd_iters: int = 10_000
    source_max_iter: int = 500
    source_tol: float = 1e-8
    balance: float = 0.5
    selection: str = "worst_case"
    head_radius: float = 1.0
    n_jobs: int = 1

    def __post_init__(self):
        self.n_T_grid = [int(v) for v in self.n_T_grid]
        self.methods = list(self.methods)
        if not self.n_T_grid or any(v <= 0 for v in self.n_T_grid):
            raise ValueError("grid values must be positive")
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise ValueError(f"methods must be a nonempty subset of {METHODS}")
        if self.selection not in ("worst_case", "train_loss"):
            raise ValueError("selection must be 'worst_case' or 'train_loss'")
        for name in ("T", "restarts", "replications", "M", "inner_replications", "pgd_iters",
                     "source_max_iter", "k", "n_S_multiplier", "n_jobs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    def scaled(self, factor):
        """Multiply ``T``, ``replications`` and ``M`` by ``factor`` with a floor of 10."""
        if factor <= 0:
            raise ValueError("scale must be positive")
        f = lambda v: max(10, int(round(v * factor)))
        return dataclasses.replace(self, T=f(self.T), replications=f(self.replications), M=f(self.M))

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n",
                              encoding="utf-8")

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def config_hash(self):
        # output location and worker count do not change results
        doc = {k: v for k, v in self.to_dict().items() if k not in ("out_dir", "n_jobs")}
        blob = json.dumps(doc, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ExperimentRecord:
    method: str
    d: int
    n_T: int
    replication: int
    excess_risk: float
    sine_dist: float
    wall_time_ms: float
    seed: int
    config_hash: str
    error: str = ""

    def row(self):
        return [self.method, self.d, self.n_T, self.replication, repr(float(self.excess_risk)),
                repr(float(self.sine_dist)), f"{self.wall_time_ms:.3f}", self.seed,
                self.config_hash, self.error]


def _stats_of(datasets):
    n = datasets[0].n
    G = np.stack([ds.X.T @ ds.X / n for ds in datasets])
    b = np.stack([ds.X.T @ ds.y / n for ds in datasets])
    c = np.array([ds.y @ ds.y / n for ds in datasets])
    return G, b, c


def _ols(datasets):
    return np.stack([np.linalg.pinv(ds.X) @ ds.y for ds in datasets])


def run_cell(config, n_T):
    """Run one grid point; returns ``(records, sine_rows)``."""
    d = int(round(config.d_multiplier * n_T))
    k = config.k
    cell_seed = int(np.random.SeedSequence(entropy=config.seed, spawn_key=(n_T,)).generate_state(1)[0])
    chash = config.config_hash()
    spec = HardCaseSpec.corollary(d, k)
    Sigma = spec.covariance
    records, sine_rows = [], []

    def fail(method, exc):
        records.append(ExperimentRecord(method, d, n_T, -1, np.nan, np.nan, 0.0, cell_seed, chash,
                                        f"{type(exc).__name__}: {exc}"))

    # candidate target tasks and their inner datasets are shared by all methods
    cands = [_draw_hard_task(spec, rng_for(cell_seed, 8, m)) for m in range(config.M)]
    cand_data = [sample_hard_dataset(spec, task, n_T, config.noise_sigma, rng_for(cell_seed, 9, m, j))
                 for m, task in enumerate(cands) for j in range(config.inner_replications)]
    cand_theta = np.repeat(np.array([t.theta_star for t in cands]), config.inner_replications, axis=0)

    def evaluation_data(task):
        return [sample_hard_dataset(spec, task, n_T, config.noise_sigma, rng_for(cell_seed, 10, r))
                for r in range(config.replications)]

    ft = AdaptSpec(mode="full_adapt", beta_scale=np.sqrt(n_T), c1=1.0,
                   c2=config.head_radius * np.sqrt(1.0 / spec.eps), T_pgd=config.pgd_iters)

    rep_methods = [m for m in config.methods if m != "ols_baseline"]
    if rep_methods:
        n_S = config.n_S_multiplier * d
        env = make_hardcase_env(spec, config.T, config.noise_sigma, seed=cell_seed)
        stats = SourceStats.from_env(env, n_S, cell_seed)
        opts = SourceOptions(n_restarts=config.restarts, max_iter=config.source_max_iter,
                             tol=config.source_tol, balance=config.balance, seed=cell_seed)
        cG, cb, cc = _stats_of(cand_data)

    for method in config.methods:
        try:
            t0 = time.perf_counter()
            if method == "ols_baseline":
                th = _ols(cand_data)
                cand_risk = excess_risk_quadratic(th, cand_theta, Sigma).reshape(config.M, -1).mean(1)
                worst = int(np.argmax(cand_risk))
                eval_ds = evaluation_data(cands[worst])
                t1 = time.perf_counter()
                th_eval = _ols(eval_ds)
                sine = np.nan
            else:
                if method == "adaptrep":
                    lam = default_regularization(config.noise_sigma, np.trace(Sigma), n_S)
                    sol = adaptrep_source(stats, k, lam, lam, opts)
                else:
                    sol = frozenrep_source(stats, k, opts)
                reps = np.array(sol.restart_representations())
                th = finetune_linear_batch(reps, cG, cb, cc, ft)  # (M*inner, R, d)
                risk = excess_risk_quadratic(th, cand_theta[:, None, :], Sigma)
                risk = risk.reshape(config.M, config.inner_replications, -1).mean(1)  # (M, R)
                worst_per_restart = risk.max(axis=0)
                if config.selection == "worst_case":
                    chosen = int(np.argmin(worst_per_restart))
                else:
                    chosen = int(np.argmin(sol.restart_losses))
                worst = int(np.argmax(risk[:, chosen]))
                for j, B in enumerate(reps):
                    sine_rows.append([method, d, n_T, j, sine_principal_angle(B, spec.Astar),
                                      sine_principal_angle(B, spec.Ek), sol.restarts[j]["train_loss"],
                                      worst_per_restart[j], int(j == chosen)])
                eval_ds = evaluation_data(cands[worst])
                t1 = time.perf_counter()
                G, b, c = _stats_of(eval_ds)
                th_eval = finetune_linear_batch(reps[chosen], G, b, c, ft)[:, 0]
                sine = sine_principal_angle(reps[chosen], spec.Astar)
            per_rep_ms = 1000.0 * (time.perf_counter() - t1) / config.replications
            risks = excess_risk_quadratic(th_eval, cands[worst].theta_star, Sigma)
            for r in range(config.replications):
                records.append(ExperimentRecord(method, d, n_T, r, float(risks[r]), float(sine),
                                                per_rep_ms, cell_seed, chash))
        except Exception as exc:  # a failed cell is recorded and the run continues
            fail(method, exc)
    return records, sine_rows


def summarize_records(records):
    """Per (method, d, n_T): median, mean and quartiles of the excess risk."""
    groups = {}
    for r in records:
        if r.error:
            continue
        groups.setdefault((r.method, r.d, r.n_T), []).append(r.excess_risk)
    rows = []
    for (method, d, n_T), vals in sorted(groups.items(), key=lambda kv: (kv[0][2], kv[0][0])):
        v = np.asarray(vals)
        q25, med, q75 = np.quantile(v, [0.25, 0.5, 0.75])
        rows.append({"method": method, "d": d, "n_T": n_T, "median": med, "mean": v.mean(),
                     "q25": q25, "q75": q75, "n": len(v)})
    return rows


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_records(path):
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(ExperimentRecord(
                row["method"], int(row["d"]), int(row["n_T"]), int(row["replication"]),
                float(row["excess_risk"]), float(row["sine_dist"]), float(row["wall_time_ms"]),
                int(row["seed"]), row["config_hash"], row["error"]))
    return out


def _svg_with_data(fig, path, data):
    import io

    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    text = buf.getvalue()
    comment = "<!-- data: " + json.dumps(data, sort_keys=True).replace("--", "- -") + " -->\n"
    head, sep, rest = text.partition("?>\n")
    Path(path).write_text(head + sep + comment + rest if sep else comment + text, encoding="utf-8")


def _plots(out, sine_rows, summary):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "adaptrep"
    fig, ax = plt.subplots(figsize=(5, 3.5))
    sine_data = {}
    for method in sorted({r[0] for r in sine_rows}):
        pts = sorted((r[2], r[4]) for r in sine_rows if r[0] == method and r[8] == 1)
        sine_data[method] = pts
        if pts:
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=method)
    ax.set_xlabel("n_T (= d)")
    ax.set_ylabel("sine distance to B*")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    fig.tight_layout()
    _svg_with_data(fig, out / "sine.svg", sine_data)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 3.5))
    risk_data = {}
    for method in sorted({r["method"] for r in summary}):
        pts = [(r["n_T"], r["median"]) for r in summary if r["method"] == method]
        risk_data[method] = pts
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=method)
    ax.set_yscale("log")
    ax.set_xlabel("n_T (= d)")
    ax.set_ylabel("median excess risk (worst-case task)")
    ax.legend()
    fig.tight_layout()
    _svg_with_data(fig, out / "risk.svg", risk_data)
    plt.close(fig)


def reproduce_separation(config, out_dir=None):
    """Run the whole grid and write records.csv, sine.csv, risk.csv, sine.svg and risk.svg.

    Returns the list of :class:`ExperimentRecord`.
    """
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if config.n_jobs > 1:
        with ProcessPoolExecutor(max_workers=config.n_jobs) as pool:
            results = list(pool.map(run_cell, [config] * len(config.n_T_grid), config.n_T_grid))
    else:
        results = [run_cell(config, n_T) for n_T in config.n_T_grid]
    records = [r for recs, _ in results for r in recs]
    sine_rows = [s for _, rows in results for s in rows]

    _write_csv(out / "records.csv", RECORD_FIELDS, [r.row() for r in records])
    _write_csv(out / "sine.csv",
               ["method", "d", "n_T", "restart", "sine_dist", "sine_dist_Ek", "train_loss",
                "worst_case_risk", "selected"],
               [[m, d, n, j, repr(float(a)), repr(float(e)), repr(float(l)), repr(float(w)), s]
                for m, d, n, j, a, e, l, w, s in sine_rows])
    summary = summarize_records(records)
    _write_csv(out / "risk.csv", ["method", "d", "n_T", "median", "mean", "q25", "q75", "n"],
               [[r["method"], r["d"], r["n_T"], repr(float(r["median"])), repr(float(r["mean"])),
                 repr(float(r["q25"])), repr(float(r["q75"])), r["n"]] for r in summary])
    config.to_json(out / "config.json")
    _plots(out, sine_rows, summary)
    return records
