"""Ground-truth multi-task environments and finite-sample draws from them.

Every environment fixes a common Gaussian (or, for the network family,
unit-ball) input law, a ground-truth representation ``Bstar`` and per-task
perturbations ``(Delta_t, w_t)``. Task ``t`` has linear predictor
``theta_t = (Bstar + Delta_t) w_t = Bstar w_t + delta_t``.
"""

import csv
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ._validation import orthonormalize, rng_for, uniform_sphere
from .io import decode_array, encode_array, read_json, write_json

__all__ = [
    "FAMILIES",
    "DegenerateTaskDraw",
    "TaskEnvironment",
    "Dataset",
    "TargetTask",
    "resolve_covariance",
    "make_linear_env",
    "make_logistic_env",
    "make_nn_env",
    "normalize_convention",
    "diversity_ratio",
    "sample_source_datasets",
    "sample_target_task",
    "sample_dataset",
    "save_env",
    "load_env",
]

FAMILIES = ("linear", "logistic", "nn", "hardcase-linear", "hardcase-relu")


class DegenerateTaskDraw(RuntimeError):
    """Raised when the task-diversity condition cannot be met within the retry budget."""


def resolve_covariance(sigma_spec, d):
    """Turn a covariance description into ``(Sigma, spec_dict)``.

    Accepted forms: ``None`` or ``"identity"``; a length-``d`` vector (diagonal);
    a ``d x d`` matrix; or a dict with ``kind`` in
    ``{"identity", "diagonal", "matrix", "hardcase"}``.
    """
    if sigma_spec is None or (isinstance(sigma_spec, str) and sigma_spec == "identity"):
        spec = {"kind": "identity"}
    elif isinstance(sigma_spec, dict):
        spec = dict(sigma_spec)
    else:
        arr = np.asarray(sigma_spec, dtype=float)
        if arr.ndim == 1:
            spec = {"kind": "diagonal", "values": arr.tolist()}
        elif arr.ndim == 2:
            spec = {"kind": "matrix", "values": arr.tolist()}
        else:
            raise ValueError("sigma_spec must be 'identity', a vector or a matrix")

    kind = spec.get("kind")
    if kind == "identity":
        Sigma = np.eye(d)
    elif kind == "diagonal":
        vals = np.asarray(spec["values"], dtype=float)
        if vals.shape != (d,):
            raise ValueError(f"diagonal covariance needs {d} entries")
        Sigma = np.diag(vals)
    elif kind == "matrix":
        Sigma = np.asarray(spec["values"], dtype=float)
        if Sigma.shape != (d, d):
            raise ValueError(f"covariance matrix must be {d}x{d}")
    elif kind == "hardcase":
        eps, k = float(spec["eps"]), int(spec["k"])
        Sigma = np.diag(np.concatenate([np.full(d - k, eps), np.ones(k)]))
    else:
        raise ValueError(f"unknown covariance kind {kind!r}")

    if np.max(np.abs(Sigma - Sigma.T), initial=0.0) > 1e-12:
        raise ValueError("covariance must be symmetric")
    try:
        np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance must be positive definite") from exc
    return Sigma, spec


@dataclass(frozen=True, eq=False)
class TaskEnvironment:
    """Immutable generative model for a family of related tasks.

    For the linear, logistic and hard-case families ``deltas`` has shape
    ``(T, d, k)`` and ``heads`` shape ``(T, k)``. For the network family the
    parameters live in the doubled width ``2k``: ``deltas`` has shape
    ``(T, d, 2k)`` and ``heads`` is ``(T, 2k)``, both already divided by
    ``scale``, and task ``t`` is the network ``([A, A] + deltas[t], init_head + heads[t])``
    evaluated with output multiplier ``scale``.
    """

    d: int
    k: int
    T: int
    Sigma: np.ndarray
    Bstar: np.ndarray
    delta0: float
    deltas: np.ndarray
    heads: np.ndarray
    noise_sigma: float
    family: str
    seed: int
    sigma_spec: dict = field(default_factory=lambda: {"kind": "identity"})
    eps: Optional[float] = None
    scale: float = 1.0
    activation: str = "tanh"
    init_head: Optional[np.ndarray] = None
    nn_dirs: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")

    # -- task parameters -------------------------------------------------
    @property
    def task_deltas(self):
        """``delta_t = Delta_t w_t`` for every task, shape ``(T, d)``."""
        return np.einsum("tij,tj->ti", self.deltas, self.heads)

    @property
    def thetas(self):
        """Linear predictors ``(Bstar + Delta_t) w_t``, shape ``(T, d)``."""
        if self.family == "nn":
            raise ValueError("the network family has no linear task predictors")
        return self.heads @ self.Bstar.T + self.task_deltas

    def nn_task_params(self, t):
        B = np.hstack([self.Bstar, self.Bstar]) + self.deltas[t]
        return B, self.init_head + self.heads[t]

    # -- sampling ---------------------------------------------------------
    def sample_inputs(self, rng, n):
        if self.family == "nn":
            # uniform on the unit ball
            g = rng.standard_normal((n, self.d))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            return g * rng.random(n)[:, None] ** (1.0 / self.d)
        L = np.linalg.cholesky(self.Sigma)
        return rng.standard_normal((n, self.d)) @ L.T

    def predict_true(self, X, task):
        """Noise-free output of task ``task`` (an index or a :class:`TargetTask`)."""
        from .adapt import nn_predict
        from .hardcase import lift_task_to_relu, relu_lifted_predict

        if self.family == "nn":
            if isinstance(task, TargetTask):
                B, w = task.theta_star
            else:
                B, w = self.nn_task_params(task)
            return self.scale * nn_predict(B, w, X, self.activation)
        theta = task.theta_star if isinstance(task, TargetTask) else self.thetas[task]
        if self.family == "hardcase-relu":
            B, w, Delta = lift_task_to_relu(self, theta)
            return relu_lifted_predict(B, w, Delta, X)
        return X @ theta

    def sample_labels(self, rng, X, task):
        f = self.predict_true(X, task)
        n = X.shape[0]
        if self.family == "logistic":
            p = 1.0 / (1.0 + np.exp(-f))
            return (rng.random(n) < p).astype(float)
        if self.family == "nn":
            return f + rng.uniform(-self.noise_sigma, self.noise_sigma, size=n)
        return f + self.noise_sigma * rng.standard_normal(n)

    # -- serialization ----------------------------------------------------
    def to_dict(self):
        out = {
            "family": self.family,
            "dims": {"d": self.d, "k": self.k, "T": self.T},
            "covariance": self.sigma_spec,
            "delta0": self.delta0,
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "eps": self.eps,
            "scale": self.scale,
            "activation": self.activation,
            "Bstar": encode_array(self.Bstar),
            "deltas": encode_array(self.deltas),
            "heads": encode_array(self.heads),
        }
        if self.init_head is not None:
            out["init_head"] = encode_array(self.init_head)
        if self.nn_dirs is not None:
            out["nn_dirs"] = encode_array(self.nn_dirs)
        return out

    @classmethod
    def from_dict(cls, doc):
        d = int(doc["dims"]["d"])
        Sigma, spec = resolve_covariance(doc["covariance"], d)
        return cls(
            d=d,
            k=int(doc["dims"]["k"]),
            T=int(doc["dims"]["T"]),
            Sigma=Sigma,
            Bstar=decode_array(doc["Bstar"]),
            delta0=float(doc["delta0"]),
            deltas=decode_array(doc["deltas"]),
            heads=decode_array(doc["heads"]),
            noise_sigma=float(doc["noise_sigma"]),
            family=doc["family"],
            seed=int(doc["seed"]),
            sigma_spec=spec,
            eps=None if doc.get("eps") is None else float(doc["eps"]),
            scale=float(doc.get("scale", 1.0)),
            activation=doc.get("activation", "tanh"),
            init_head=decode_array(doc["init_head"]) if "init_head" in doc else None,
            nn_dirs=decode_array(doc["nn_dirs"]) if "nn_dirs" in doc else None,
        )


def save_env(env, path):
    write_json(path, env.to_dict(), kind="environment")


def load_env(path):
    return TaskEnvironment.from_dict(read_json(path, kind="environment"))


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    task_id: object = "target"
    seed: Optional[int] = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise ValueError("Dataset needs X of shape (n, d) and y of shape (n,)")

    @property
    def n(self):
        return self.X.shape[0]

    def to_csv(self, path):
        d = self.X.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([f"x{j}" for j in range(d)] + ["y"])
            for xi, yi in zip(self.X, self.y):
                writer.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])

    @classmethod
    def from_csv(cls, path, task_id="target", seed=None):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, :-1], data[:, -1], task_id=task_id, seed=seed)


@dataclass
class TargetTask:
    """A target task. For linear families ``theta_star = Bstar w_star + delta_star``.

    For the network family ``theta_star`` is the parameter pair ``(B, w)``,
    ``w_star`` the head perturbation and ``delta_star`` the coefficients of the
    representation perturbation in the environment's direction basis.
    """

    theta_star: object
    w_star: np.ndarray
    delta_star: np.ndarray


def diversity_ratio(W, c=0.1):
    """Return ``sigma_k(W)^2 / (c T / k)``; the diversity condition holds when it is >= 1."""
    W = np.asarray(W, dtype=float)
    T, k = W.shape
    s = np.linalg.svd(W, compute_uv=False)
    return s[min(T, k) - 1] ** 2 / (c * T / k) if T >= k else 0.0


def _sigma_complement_projector(Bstar, Sigma):
    """Oblique projector P with ``Bstar^T Sigma P = 0`` and ``P`` fixing that complement."""
    SB = Sigma @ Bstar
    M = Bstar.T @ SB
    return np.eye(Bstar.shape[0]) - Bstar @ np.linalg.solve(M, SB.T)


def _draw_heads(rng, T, k, c, max_retries):
    for _ in range(max_retries):
        W = rng.standard_normal((T, k))
        W /= np.linalg.norm(W, axis=1, keepdims=True)
        if diversity_ratio(W, c) >= 1.0:
            return W
    raise DegenerateTaskDraw(
        f"could not draw {T} diverse heads in R^{k} after {max_retries} attempts"
    )


def make_linear_env(
    d,
    k,
    T,
    delta0=0.0,
    noise_sigma=1.0,
    sigma_spec="identity",
    seed=0,
    diversity_c=0.1,
    max_retries=20,
    family="linear",
):
    """Build a linear-family environment.

    Heads are unit vectors with the diversity condition
    ``sigma_k(W)^2 >= diversity_c * T / k`` enforced by redrawing. Each
    ``Delta_t`` is a Gaussian matrix whose columns are projected onto the
    Sigma-orthogonal complement of ``col(Bstar)`` and then rescaled to
    Frobenius norm ``delta0``, so the convention ``Bstar^T Sigma delta_t = 0``
    holds on construction.
    """
    if not (d > k >= 1):
        raise ValueError(f"need d > k >= 1, got d={d}, k={k}")
    if T < 1:
        raise ValueError("T must be at least 1")
    if delta0 < 0 or noise_sigma < 0:
        raise ValueError("delta0 and noise_sigma must be non-negative")
    Sigma, spec = resolve_covariance(sigma_spec, d)
    rng = rng_for(seed, 0)
    Bstar = orthonormalize(rng.standard_normal((d, k)))
    heads = _draw_heads(rng, T, k, diversity_c, max_retries)

    deltas = np.zeros((T, d, k))
    if delta0 > 0:
        P = _sigma_complement_projector(Bstar, Sigma)
        raw = P @ rng.standard_normal((T, d, k))
        deltas = delta0 * raw / np.linalg.norm(raw, axis=(1, 2), keepdims=True)
    return TaskEnvironment(
        d=d, k=k, T=T, Sigma=Sigma, Bstar=Bstar, delta0=float(delta0),
        deltas=deltas, heads=heads, noise_sigma=float(noise_sigma),
        family=family, seed=int(seed), sigma_spec=spec,
    )


def make_logistic_env(d, k, T, delta0=0.0, sigma_spec="identity", seed=0, **kwargs):
    """Logistic-regression environment: same task law, Bernoulli labels."""
    return make_linear_env(
        d, k, T, delta0=delta0, noise_sigma=0.0, sigma_spec=sigma_spec,
        seed=seed, family="logistic", **kwargs,
    )


def make_nn_env(
    d,
    k,
    T,
    scale=None,
    noise_sigma=0.1,
    activation="tanh",
    seed=0,
    diversity_c=0.1,
    max_retries=20,
):
    """Two-layer network environment around an antisymmetric base point.

    The base point is ``([A, A], [s, -s])`` with ``A`` orthonormal and ``s`` a
    random sign vector, so the base network is identically zero. Task ``t`` adds
    ``(1/scale) * sum_i delta_{t,i} D_i`` to the first layer, where the ``D_i``
    are orthonormal directions in ``R^{d x 2k}``, and ``w_t / scale`` to the
    head; ``w_t`` and ``delta_t`` are unit vectors. Labels are
    ``scale * f(x) + U[-noise_sigma, noise_sigma]`` for ``x`` uniform in the unit ball.
    """
    if not (d >= k >= 1):
        raise ValueError(f"need d >= k >= 1, got d={d}, k={k}")
    scale = float(np.sqrt(10 * d)) if scale is None else float(scale)
    if scale <= 0:
        raise ValueError("scale must be positive")
    rng = rng_for(seed, 0)
    A = orthonormalize(rng.standard_normal((d, k)))
    s = rng.choice([-1.0, 1.0], size=k)
    init_head = np.concatenate([s, -s])
    dirs = np.linalg.qr(rng.standard_normal((d * 2 * k, k)))[0].T.reshape(k, d, 2 * k)

    for _ in range(max_retries):
        w = uniform_sphere(rng, 2 * k, size=T)
        dl = uniform_sphere(rng, k, size=T)
        if diversity_ratio(np.hstack([w, dl]), diversity_c) >= 1.0:
            break
    else:
        raise DegenerateTaskDraw("could not draw diverse network tasks")
    deltas = np.einsum("ti,idj->tdj", dl, dirs) / scale
    return TaskEnvironment(
        d=d, k=k, T=T, Sigma=np.eye(d) / (d + 2), Bstar=A, delta0=1.0 / scale,
        deltas=deltas, heads=w / scale, noise_sigma=float(noise_sigma),
        family="nn", seed=int(seed),
        sigma_spec={"kind": "matrix", "values": (np.eye(d) / (d + 2)).tolist()},
        scale=scale, activation=activation, init_head=init_head, nn_dirs=dirs,
    )


def normalize_convention(env, tol=1e-12):
    """Reparameterize tasks so that ``Bstar^T Sigma delta_t = 0`` without changing ``theta_t``.

    With ``c = (Bstar^T Sigma Bstar)^{-1} Bstar^T Sigma delta_t`` the head becomes
    ``w + c`` and the perturbation is replaced by a matrix whose product with
    the new head is the Sigma-orthogonal part of ``delta_t``. Tasks already
    satisfying the convention (to ``tol``) are left untouched, which makes the
    map idempotent. The network family has no such convention and is returned as is.
    """
    if env.family == "nn":
        return env
    B, S = env.Bstar, env.Sigma
    SB = S @ B
    M = B.T @ SB
    P = _sigma_complement_projector(B, S)
    deltas = env.deltas.copy()
    heads = env.heads.copy()
    changed = False
    for t in range(env.T):
        Dt, wt = deltas[t], heads[t]
        g = SB.T @ (Dt @ wt)
        if np.linalg.norm(g) <= tol:
            continue
        c = np.linalg.solve(M, g)
        w_new = wt + c
        nw2 = w_new @ w_new
        if nw2 == 0.0:
            raise ValueError(f"task {t}: reparameterized head vanishes")
        PD = P @ Dt
        deltas[t] = PD - np.outer(PD @ c, w_new) / nw2
        heads[t] = w_new
        changed = True
    if not changed:
        return env
    return replace(env, deltas=deltas, heads=heads)


def sample_dataset(env, task, n, seed, stream=2):
    """Draw ``n`` labelled samples from ``task`` (index or :class:`TargetTask`)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    key = task if isinstance(task, (int, np.integer)) else -1
    rng = rng_for(seed, stream, int(key) + 1)
    X = env.sample_inputs(rng, n)
    y = env.sample_labels(rng, X, task)
    return Dataset(X, y, task_id=task if key >= 0 else "target", seed=int(seed))


def sample_source_datasets(env, n_S, seed):
    """One dataset of ``n_S`` samples per source task, each from its own sub-seed."""
    if n_S < 1:
        raise ValueError("n_S must be at least 1")
    return [sample_dataset(env, t, n_S, seed, stream=1) for t in range(env.T)]


def sample_target_task(env, seed, radius=1.0, law="sphere"):
    """Draw a target task.

    ``w_star`` is uniform on the radius-``radius`` sphere (or ball when
    ``law="ball"``) and ``delta_star`` uniform on the radius-``delta0`` sphere
    of the Sigma-orthogonal complement of ``col(Bstar)``. The hard-case
    families use their own law (see :func:`adaptrep.hardcase.sample_hard_task`).
    """
    if law not in ("sphere", "ball"):
        raise ValueError("law must be 'sphere' or 'ball'")
    rng = rng_for(seed, 3)
    if env.family.startswith("hardcase"):
        from .hardcase import HardCaseSpec, sample_hard_task

        return sample_hard_task(HardCaseSpec.from_env(env), seed)

    def draw(dim, rad):
        x = uniform_sphere(rng, dim, rad)
        if law == "ball":
            x = x * rng.random() ** (1.0 / dim)
        return x

    if env.family == "nn":
        w = draw(2 * env.k, radius)
        v = draw(env.k, 1.0)
        B = np.hstack([env.Bstar, env.Bstar]) + np.einsum("i,idj->dj", v, env.nn_dirs) / env.scale
        return TargetTask((B, env.init_head + w / env.scale), w, v)

    w = draw(env.k, radius)
    delta = np.zeros(env.d)
    if env.delta0 > 0:
        P = _sigma_complement_projector(env.Bstar, env.Sigma)
        Q = orthonormalize(P @ rng.standard_normal((env.d, env.d - env.k)))
        delta = Q @ draw(env.d - env.k, env.delta0)
    return TargetTask(env.Bstar @ w + delta, w, delta)
