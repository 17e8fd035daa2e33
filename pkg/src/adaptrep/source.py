"""Multi-task source training for AdaptRep and FrozenRep.

Both trainers work on per-task sufficient statistics ``G_t = X_t^T X_t / n``,
``b_t = X_t^T y_t / n`` and ``c_t = y_t^T y_t / n`` so the raw data never has to
be kept in memory.

AdaptRep minimizes, averaged over tasks,

    1/(2n) ||y_t - X_t (B + Delta_t) w_t||^2 + lam/2 ||Delta_t||_F^2 + gamma/2 ||w_t||^2

plus the balance penalty ``mu ||B^T B - W^T W||_F^2``. For fixed ``(B, w_t)``
the perturbation enters the fit only through ``delta_t = Delta_t w_t`` and the
cheapest ``Delta_t`` producing a given ``delta_t`` is ``delta_t w_t^T / ||w_t||^2``
with cost ``lam ||delta_t||^2 / (2 ||w_t||^2)``. The inner problem is therefore
a ridge regression in ``delta_t`` that is solved exactly, and L-BFGS runs on
``(B, W)`` alone.
"""

import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_is_fitted

from ._validation import check_multitask, orthonormalize, rng_for
from .env import Dataset, sample_dataset
from .io import decode_array, encode_array, read_json, write_json

__all__ = [
    "SourceStats",
    "SourceOptions",
    "SourceSolution",
    "default_regularization",
    "adaptrep_source",
    "frozenrep_source",
    "regularizer_equivalence_check",
    "AdaptRepSource",
    "FrozenRepSource",
    "save_solution",
    "load_solution",
]


class SourceStats:
    """Per-task sufficient statistics for squared-loss source training."""

    def __init__(self, gram, xty, yty, n):
        self.gram = np.asarray(gram, dtype=float)
        self.xty = np.asarray(xty, dtype=float)
        self.yty = np.asarray(yty, dtype=float)
        self.n = int(n)
        self._eig = None
        T, d, _ = self.gram.shape
        if self.xty.shape != (T, d) or self.yty.shape != (T,):
            raise ValueError("inconsistent sufficient statistics")

    @property
    def T(self):
        return self.gram.shape[0]

    @property
    def d(self):
        return self.gram.shape[1]

    @classmethod
    def from_arrays(cls, X, y):
        X, y = check_multitask(X, y)
        n = X.shape[1]
        return cls(np.einsum("tni,tnj->tij", X, X) / n, np.einsum("tni,tn->ti", X, y) / n,
                   np.einsum("tn,tn->t", y, y) / n, n)

    @classmethod
    def from_datasets(cls, datasets):
        datasets = list(datasets)
        if not datasets:
            raise ValueError("need at least one dataset")
        d, n = datasets[0].X.shape[1], datasets[0].n
        if any(ds.X.shape != (n, d) for ds in datasets):
            raise ValueError("all source datasets must share n and d")
        gram = np.stack([ds.X.T @ ds.X / n for ds in datasets])
        xty = np.stack([ds.X.T @ ds.y / n for ds in datasets])
        yty = np.array([ds.y @ ds.y / n for ds in datasets])
        return cls(gram, xty, yty, n)

    @classmethod
    def from_env(cls, env, n_S, seed):
        """Stream the datasets of :func:`sample_source_datasets` into statistics."""
        gram = np.empty((env.T, env.d, env.d))
        xty = np.empty((env.T, env.d))
        yty = np.empty(env.T)
        for t in range(env.T):
            ds = sample_dataset(env, t, n_S, seed, stream=1)
            gram[t] = ds.X.T @ ds.X / n_S
            xty[t] = ds.X.T @ ds.y / n_S
            yty[t] = ds.y @ ds.y / n_S
        return cls(gram, xty, yty, n_S)

    @property
    def eig(self):
        if self._eig is None:
            ev, U = np.linalg.eigh(self.gram)
            self._eig = (np.maximum(ev, 0.0), U, np.einsum("tji,tj->ti", U, self.xty))
        return self._eig

    def noise_estimate(self):
        """Pooled residual standard deviation of per-task least squares (needs n > d)."""
        if self.n <= self.d:
            raise ValueError("noise estimation needs more samples than dimensions")
        fit = np.einsum("ti,ti->t", self.xty, np.linalg.solve(self.gram, self.xty[..., None])[..., 0])
        rss = self.n * np.maximum(self.yty - fit, 0.0)
        return float(np.sqrt(rss.sum() / (self.T * (self.n - self.d))))


def _as_stats(data):
    if isinstance(data, SourceStats):
        return data
    return SourceStats.from_datasets(data)


def default_regularization(noise_sigma, trace_sigma, n_S):
    """``lam = gamma = sigma * sqrt(tr(Sigma) / n_S)``."""
    return float(noise_sigma * np.sqrt(trace_sigma / n_S))


@dataclass
class SourceOptions:
    n_restarts: int = 10
    max_iter: int = 500
    tol: float = 1e-8
    balance: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_restarts < 1 or self.max_iter < 1:
            raise ValueError("n_restarts and max_iter must be positive")


@dataclass
class SourceSolution:
    """Result of one source-training run.

    ``B0`` is the orthonormalized best-restart representation; ``B_raw`` and
    the per-task parameters are in the raw (un-orthonormalized) coordinates.
    ``restarts`` holds every restart's raw representation, objective value and
    loss history so a different selection rule can be applied afterwards.
    """

    B0: np.ndarray
    B_raw: np.ndarray
    heads: np.ndarray
    deltas: Optional[np.ndarray]
    train_loss: float
    data_loss: float
    restarts_used: int
    objective_tag: str
    converged: bool
    grad_norm: float
    restarts: List[dict] = field(default_factory=list)

    @property
    def restart_losses(self):
        return [r["train_loss"] for r in self.restarts]

    def restart_representations(self):
        return [orthonormalize(r["B_raw"]) for r in self.restarts]

    def to_dict(self):
        return {
            "objective_tag": self.objective_tag,
            "B0": encode_array(self.B0),
            "B_raw": encode_array(self.B_raw),
            "heads": encode_array(self.heads),
            "deltas": None if self.deltas is None else encode_array(self.deltas),
            "train_loss": self.train_loss,
            "data_loss": self.data_loss,
            "restarts_used": self.restarts_used,
            "converged": self.converged,
            "grad_norm": self.grad_norm,
            "restarts": [
                {"seed": r["seed"], "train_loss": r["train_loss"], "history": r["history"],
                 "B_raw": encode_array(r["B_raw"])}
                for r in self.restarts
            ],
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            B0=decode_array(doc["B0"]),
            B_raw=decode_array(doc["B_raw"]),
            heads=decode_array(doc["heads"]),
            deltas=None if doc["deltas"] is None else decode_array(doc["deltas"]),
            train_loss=float(doc["train_loss"]),
            data_loss=float(doc["data_loss"]),
            restarts_used=int(doc["restarts_used"]),
            objective_tag=doc["objective_tag"],
            converged=bool(doc["converged"]),
            grad_norm=float(doc["grad_norm"]),
            restarts=[
                {"seed": r["seed"], "train_loss": r["train_loss"], "history": r["history"],
                 "B_raw": decode_array(r["B_raw"])}
                for r in doc["restarts"]
            ],
        )


def save_solution(sol, path):
    write_json(path, sol.to_dict(), kind="source_solution")


def load_solution(path):
    return SourceSolution.from_dict(read_json(path, kind="source_solution"))


def _split(x, d, k, T):
    return x[: d * k].reshape(d, k), x[d * k:].reshape(T, k)


def _frozen_objective(stats, k, mu):
    G, b, c = stats.gram, stats.xty, stats.yty
    d, T = stats.d, stats.T

    def fun(x, parts=False):
        B, W = _split(x, d, k, T)
        th = W @ B.T
        r = np.einsum("tij,tj->ti", G, th) - b
        data = 0.5 * np.mean(c - 2.0 * np.sum(th * b, 1) + np.sum(th * (r + b), 1))
        M = B.T @ B - W.T @ W
        if parts:
            return {"data": data, "theta": th, "deltas": None}
        val = data + mu * np.sum(M * M)
        gB = r.T @ W / T + 4.0 * mu * B @ M
        gW = r @ B / T - 4.0 * mu * W @ M
        return val, np.concatenate([gB.ravel(), gW.ravel()])

    return fun


def _adapt_objective(stats, k, lam, gamma, mu):
    ev, U, Ub = stats.eig
    b, c = stats.xty, stats.yty
    d, T = stats.d, stats.T

    def fun(x, parts=False):
        B, W = _split(x, d, k, T)
        base = W @ B.T
        ww = np.maximum(np.sum(W * W, 1), 1e-300)
        rho = lam / ww
        # ridge solve for delta_t in the eigenbasis of G_t
        p = np.einsum("tji,tj->ti", U, base)
        z = (Ub - ev * p) / (ev + rho[:, None])
        delta = np.einsum("tij,tj->ti", U, z)
        th = base + delta
        r = -rho[:, None] * delta  # equals G_t theta_t - b_t at the inner optimum
        dd = np.sum(delta * delta, 1)
        data = 0.5 * np.mean(c - np.sum(th * b, 1) + np.sum(th * r, 1))
        if parts:
            deltas = delta[:, :, None] * (W / ww[:, None])[:, None, :]
            return {"data": data, "theta": th, "deltas": deltas}
        M = B.T @ B - W.T @ W
        val = data + np.mean(0.5 * rho * dd + 0.5 * gamma * ww) + mu * np.sum(M * M)
        gB = r.T @ W / T + 4.0 * mu * B @ M
        gW = (r @ B - (lam * dd / ww**2)[:, None] * W + gamma * W) / T - 4.0 * mu * W @ M
        return val, np.concatenate([gB.ravel(), gW.ravel()])

    return fun


def _solve(fun, stats, k, opts, tag):
    d, T = stats.d, stats.T
    if not 1 <= k < d:
        raise ValueError(f"need 1 <= k < d, got k={k}, d={d}")
    restarts = []
    for i in range(opts.n_restarts):
        rng = rng_for(opts.seed, 5, i)
        x0 = np.concatenate([rng.normal(0.0, 1.0 / np.sqrt(d), d * k),
                             rng.normal(0.0, 1.0 / np.sqrt(k), T * k)])
        history = [float(fun(x0)[0])]
        res = minimize(fun, x0, jac=True, method="L-BFGS-B",
                       callback=lambda intermediate_result: history.append(float(intermediate_result.fun)),
                       options=dict(maxiter=opts.max_iter, maxcor=10, gtol=opts.tol, ftol=0.0))
        gnorm = float(np.linalg.norm(res.jac))
        restarts.append({"seed": i, "x": res.x, "train_loss": float(res.fun), "history": history,
                         "grad_norm": gnorm, "converged": not (res.nit >= opts.max_iter and gnorm > opts.tol),
                         "B_raw": _split(res.x, d, k, T)[0].copy()})
    best = min(range(len(restarts)), key=lambda j: restarts[j]["train_loss"])
    rb = restarts[best]
    if not rb["converged"]:
        warnings.warn(f"{tag} source training stopped at the iteration budget with gradient "
                      f"norm {rb['grad_norm']:.2e} > {opts.tol:.1e}", ConvergenceWarning)
    B, W = _split(rb["x"], d, k, T)
    parts = fun(rb["x"], parts=True)
    for r in restarts:
        del r["x"]
    return SourceSolution(
        B0=orthonormalize(B), B_raw=B.copy(), heads=W.copy(), deltas=parts["deltas"],
        train_loss=rb["train_loss"], data_loss=float(parts["data"]),
        restarts_used=opts.n_restarts, objective_tag=tag, converged=rb["converged"],
        grad_norm=rb["grad_norm"], restarts=restarts,
    )


def adaptrep_source(datasets, k, lam, gamma, opt_opts=None):
    """Solve the AdaptRep source problem.

    Parameters
    ----------
    datasets : list of Dataset or SourceStats
    k : int
        Representation dimension.
    lam, gamma : float
        Ridge weights on the perturbations and on the heads.
    opt_opts : SourceOptions, optional

    Returns
    -------
    SourceSolution
        Best restart by objective value. ``deltas`` holds the rank-one inner
        minimizers ``Delta_t``.
    """
    if not (lam > 0 and gamma > 0):
        raise ValueError("lam and gamma must be positive")
    opts = opt_opts or SourceOptions()
    stats = _as_stats(datasets)
    return _solve(_adapt_objective(stats, k, lam, gamma, opts.balance), stats, k, opts, "adaptrep")


def frozenrep_source(datasets, k, opt_opts=None):
    """Solve the FrozenRep source problem (shared ``B``, per-task heads, balance penalty)."""
    opts = opt_opts or SourceOptions()
    stats = _as_stats(datasets)
    return _solve(_frozen_objective(stats, k, opts.balance), stats, k, opts, "frozenrep")


def regularizer_equivalence_check(y, lam, gamma):
    """Minimize ``lam/2 ||A||_F^2 + gamma/2 ||x||^2`` subject to ``A x = y`` numerically.

    The minimizing ``A`` for a given ``x`` is ``y x^T / ||x||^2``, which leaves a
    1-D problem in ``||x||``; it is solved by bounded Brent search on
    ``log ||x||``. Returns ``(numeric_min, sqrt(lam * gamma) * ||y||)``.
    """
    y = np.asarray(y, dtype=float).ravel()
    if not (lam > 0 and gamma > 0):
        raise ValueError("lam and gamma must be positive")
    ny = float(np.linalg.norm(y))
    if ny == 0.0:
        return 0.0, 0.0

    def value(s):
        x = np.zeros(max(y.size, 1))
        x[0] = np.exp(s)
        A = np.outer(y, x) / (x @ x)
        return 0.5 * lam * np.sum(A * A) + 0.5 * gamma * (x @ x)

    center = 0.5 * np.log(ny)
    width = 5.0 + 0.5 * (abs(np.log(lam)) + abs(np.log(gamma)))
    res = minimize_scalar(value, bounds=(center - width, center + width), method="bounded",
                          options={"xatol": 1e-12, "maxiter": 500})
    return float(value(res.x)), float(np.sqrt(lam * gamma) * ny)


class _SourceBase(TransformerMixin, BaseEstimator):
    def fit(self, X, y):
        """Fit on stacked source data ``X`` of shape (T, n, d) and ``y`` of shape (T, n)."""
        return self.fit_stats(SourceStats.from_arrays(X, y))

    def fit_stats(self, stats):
        self.solution_ = self._solve(stats)
        self.representation_ = self.solution_.B0
        self.components_ = self.solution_.B0.T
        self.n_features_in_ = stats.d
        return self

    def _options(self):
        return SourceOptions(n_restarts=self.n_restarts, max_iter=self.max_iter, tol=self.tol,
                             balance=self.balance, seed=self.random_state)

    def transform(self, X):
        check_is_fitted(self, "representation_")
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[-1]}")
        return X @ self.representation_


class FrozenRepSource(_SourceBase):
    """Shared frozen representation learned jointly with per-task linear heads.

    Parameters
    ----------
    n_components : int
        Representation dimension ``k``.
    n_restarts, max_iter, tol : int, int, float
        Random restarts and L-BFGS budget per restart.
    balance : float
        Weight of the penalty ``||B^T B - W^T W||_F^2``.
    random_state : int
    """

    def __init__(self, n_components=2, n_restarts=10, max_iter=500, tol=1e-8, balance=0.5,
                 random_state=0):
        self.n_components = n_components
        self.n_restarts = n_restarts
        self.max_iter = max_iter
        self.tol = tol
        self.balance = balance
        self.random_state = random_state

    def _solve(self, stats):
        return frozenrep_source(stats, self.n_components, self._options())


class AdaptRepSource(_SourceBase):
    """Representation initialization learned with per-task adaptable perturbations.

    ``lam`` and ``gamma`` default to ``sigma * sqrt(tr(Sigma) / n)`` where
    ``tr(Sigma)`` is estimated from the pooled Gram matrices and ``sigma`` is
    ``noise_sigma`` or, when that is ``None``, the pooled least-squares
    residual scale.
    """

    def __init__(self, n_components=2, lam="auto", gamma="auto", noise_sigma=None,
                 n_restarts=10, max_iter=500, tol=1e-8, balance=0.5, random_state=0):
        self.n_components = n_components
        self.lam = lam
        self.gamma = gamma
        self.noise_sigma = noise_sigma
        self.n_restarts = n_restarts
        self.max_iter = max_iter
        self.tol = tol
        self.balance = balance
        self.random_state = random_state

    def _solve(self, stats):
        if self.lam == "auto" or self.gamma == "auto":
            sigma = stats.noise_estimate() if self.noise_sigma is None else self.noise_sigma
            auto = default_regularization(sigma, float(np.mean(np.trace(stats.gram, axis1=1, axis2=2))), stats.n)
        lam = auto if self.lam == "auto" else float(self.lam)
        gamma = auto if self.gamma == "auto" else float(self.gamma)
        self.lam_, self.gamma_ = lam, gamma
        return adaptrep_source(stats, self.n_components, lam, gamma, self._options())
