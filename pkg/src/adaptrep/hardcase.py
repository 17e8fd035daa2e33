"""Adversarial task families on which a frozen representation learns the wrong span.

Inputs are Gaussian with covariance ``blockdiag(eps I_{d-k}, I_k)``. Task
predictors are ``theta = A* v / sqrt(2 eps) + delta`` with ``A*`` inside the
low-variance block and ``delta`` in the last ``k`` coordinates ``E_k``. The
``A*`` part and the ``delta`` part contribute output variance 1/2 and 1, so a
single frozen span prefers ``E_k``, while an adaptable representation can
learn ``A*`` and absorb ``delta`` per task.
"""

from dataclasses import dataclass
from typing import Optional

import warnings

import numpy as np
from scipy.optimize import minimize
from sklearn.exceptions import ConvergenceWarning

from ._validation import check_orthonormal, orthonormalize, rng_for, uniform_sphere
from .env import Dataset, TargetTask, TaskEnvironment, diversity_ratio, DegenerateTaskDraw

__all__ = [
    "HardCaseSpec",
    "sample_hard_task",
    "sample_hard_dataset",
    "lift_to_relu",
    "lift_task_to_relu",
    "relu_lifted_predict",
    "make_hardcase_env",
    "frozenrep_population_limit",
    "worst_case_target",
]


@dataclass
class HardCaseSpec:
    d: int
    k: int
    eps: float
    Astar: Optional[np.ndarray] = None
    family: str = "linear"

    def __post_init__(self):
        if not (1 <= self.k < self.d):
            raise ValueError("need 1 <= k < d")
        if not (0.0 < self.eps < 1.0):
            raise ValueError("eps must lie in (0, 1)")
        if self.family not in ("linear", "relu"):
            raise ValueError("family must be 'linear' or 'relu'")
        if self.family == "relu" and 2 * self.k >= self.d:
            raise ValueError("the relu family needs 2k < d")
        if 2 * self.k > self.d:
            raise ValueError("A* must fit in the first d - k coordinates")
        if self.Astar is None:
            self.Astar = np.eye(self.d, self.k)
        self.Astar = check_orthonormal(np.asarray(self.Astar, dtype=float), tol=1e-10, name="Astar")
        if self.Astar.shape != (self.d, self.k):
            raise ValueError(f"Astar must be {self.d}x{self.k}")
        if np.any(self.Astar[self.d - self.k:] != 0.0):
            raise ValueError("Astar must be supported on the first d - k coordinates")

    @classmethod
    def corollary(cls, d, k, family="linear"):
        """Preset with ``eps = k / d``."""
        return cls(d=d, k=k, eps=k / d, family=family)

    @classmethod
    def from_env(cls, env):
        return cls(d=env.d, k=env.k, eps=env.eps, Astar=env.Bstar,
                   family=env.family.split("-", 1)[1])

    @property
    def covariance(self):
        return np.diag(np.concatenate([np.full(self.d - self.k, self.eps), np.ones(self.k)]))

    @property
    def Ek(self):
        E = np.zeros((self.d, self.k))
        E[self.d - self.k:] = np.eye(self.k)
        return E


def _draw_hard_task(spec, rng):
    v = uniform_sphere(rng, spec.k)
    delta = spec.Ek @ uniform_sphere(rng, spec.k)
    w = v / np.sqrt(2.0 * spec.eps)
    return TargetTask(spec.Astar @ w + delta, w, delta)


def sample_hard_task(spec, seed):
    """Draw ``theta = A* v / sqrt(2 eps) + delta`` with ``v``, ``delta`` uniform on unit spheres."""
    return _draw_hard_task(spec, rng_for(seed, 4))


def _lift(spec, v, delta):
    A = spec.Astar
    B = np.hstack([A, -A])
    w = np.concatenate([v, -v]) / np.sqrt(2.0 * spec.eps)
    Delta = np.tile(delta[:, None] / spec.k, (1, 2 * spec.k))
    return B, w, Delta


def lift_to_relu(spec, v, delta):
    """ReLU parameters reproducing the linear hard-case task exactly.

    ``B = [A*, -A*]``, ``w = [v, -v] / sqrt(2 eps)`` and a ``d x 2k`` perturbation
    whose every column is ``delta / k``. Since exactly one of ``(a^T x)_+`` and
    ``(-a^T x)_+`` is active, the lifted network equals ``x^T theta``.
    """
    if spec.family != "relu":
        raise ValueError("lift_to_relu needs a relu-family spec")
    v = np.asarray(v, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if v.shape != (spec.k,) or delta.shape != (spec.d,):
        raise ValueError("v must have length k and delta length d")
    if abs(np.linalg.norm(v) - 1.0) > 1e-8 or abs(np.linalg.norm(delta) - 1.0) > 1e-8:
        raise ValueError("v and delta must be unit vectors")
    return _lift(spec, v, delta)


def lift_task_to_relu(env, theta):
    """Lift an arbitrary hard-case predictor ``theta`` of environment ``env``."""
    spec = HardCaseSpec.from_env(env)
    a = spec.Astar.T @ theta
    return _lift(spec, np.sqrt(2.0 * spec.eps) * a, theta - spec.Astar @ a)


def relu_lifted_predict(B, w, Delta, X):
    """``w^T relu(B^T x) + <x 1[B^T x > 0]^T, Delta>`` for each row of ``X``."""
    X = np.asarray(X, dtype=float)
    pre = X @ B
    return np.maximum(pre, 0.0) @ w + np.sum((pre > 0) * (X @ Delta), axis=-1)


def sample_hard_dataset(spec, task, n, noise_sigma, rng):
    """Gaussian inputs with the block covariance and noisy labels of ``task``."""
    sd = np.sqrt(np.diag(spec.covariance))
    X = rng.standard_normal((n, spec.d)) * sd
    if spec.family == "relu":
        a = spec.Astar.T @ task.theta_star
        B, w, Delta = _lift(spec, np.sqrt(2.0 * spec.eps) * a, task.theta_star - spec.Astar @ a)
        f = relu_lifted_predict(B, w, Delta, X)
    else:
        f = X @ task.theta_star
    return Dataset(X, f + noise_sigma * rng.standard_normal(n))


def make_hardcase_env(spec, T, noise_sigma=2.0, seed=0, diversity_c=0.1, max_retries=20):
    """Source environment whose tasks follow the hard-case law.

    ``heads[t] = v_t / sqrt(2 eps)`` and ``deltas[t]`` is the rank-one matrix
    ``delta_t w_t^T / ||w_t||^2``, so ``(Astar + Delta_t) w_t = theta_t``.
    """
    rng = rng_for(seed, 0)
    for _ in range(max_retries):
        tasks = [_draw_hard_task(spec, rng) for _ in range(T)]
        W = np.array([t.w_star for t in tasks])
        if diversity_ratio(W / np.linalg.norm(W, axis=1, keepdims=True), diversity_c) >= 1.0:
            break
    else:
        raise DegenerateTaskDraw("could not draw diverse hard-case tasks")
    D = np.array([t.delta_star for t in tasks])
    deltas = D[:, :, None] * (W / np.sum(W * W, 1, keepdims=True))[:, None, :]
    return TaskEnvironment(
        d=spec.d, k=spec.k, T=T, Sigma=spec.covariance, Bstar=spec.Astar, delta0=1.0,
        deltas=deltas, heads=W, noise_sigma=float(noise_sigma),
        family="hardcase-" + spec.family, seed=int(seed),
        sigma_spec={"kind": "hardcase", "eps": spec.eps, "k": spec.k}, eps=spec.eps,
    )


def frozenrep_population_limit(spec, n_mc=10_000, seed=0, n_restarts=3, max_iter=2000, tol=1e-10,
                               antithetic=True):
    """Frozen representation learned from infinitely many samples per task.

    With second-moment matrix ``C`` of ``n_mc`` sampled tasks, the population
    objective after solving every head exactly is
    ``1/2 tr(Sigma C) - 1/2 tr((B^T Sigma B)^{-1} B^T Sigma C Sigma B)``; it is
    minimized over ``B`` with L-BFGS from random starts and the best span is
    returned orthonormalized.

    With ``antithetic=True`` tasks come in pairs ``(+v, delta)`` and
    ``(-v, delta)``. The estimate of ``C`` stays unbiased but its ``A*``/``E_k``
    cross block, which is zero in the population, no longer carries sampling
    noise. That noise would otherwise be amplified by ``1/sqrt(eps)`` when
    mapped back to the input coordinates.
    """
    if n_mc < 1000:
        raise ValueError("n_mc must be at least 1000")
    rng = rng_for(seed, 6)
    if antithetic:
        draws = [_draw_hard_task(spec, rng) for _ in range((n_mc + 1) // 2)]
        plus = np.array([t.theta_star for t in draws])
        minus = np.array([t.delta_star - spec.Astar @ t.w_star for t in draws])
        thetas = np.vstack([plus, minus])[:n_mc]
    else:
        thetas = np.array([_draw_hard_task(spec, rng).theta_star for _ in range(n_mc)])
    C = thetas.T @ thetas / n_mc
    S = spec.covariance
    K = S @ C @ S
    d, k = spec.d, spec.k
    base = 0.5 * np.trace(S @ C)

    def fun(x):
        B = x.reshape(d, k)
        SB = S @ B
        Gi = np.linalg.inv(B.T @ SB)
        H = B.T @ K @ B
        val = base - 0.5 * np.trace(Gi @ H)
        grad = -K @ B @ Gi + SB @ Gi @ H @ Gi
        return val, grad.ravel()

    best = None
    for i in range(n_restarts):
        x0 = rng_for(seed, 6, i + 1).normal(0.0, 1.0 / np.sqrt(d), d * k)
        res = minimize(fun, x0, jac=True, method="L-BFGS-B",
                       options=dict(maxiter=max_iter, gtol=tol, ftol=0.0))
        if best is None or res.fun < best.fun:
            best = res
    if best.nit >= max_iter and np.linalg.norm(best.jac) > tol:
        warnings.warn("population FrozenRep limit did not converge", ConvergenceWarning)
    return orthonormalize(best.x.reshape(d, k))


def worst_case_target(representation, spec, method_runner, M, n_T, seed, inner=10,
                      noise_sigma=2.0, return_all=False):
    """Search ``M`` sampled hard-case tasks for the one a method handles worst.

    Each candidate is scored by the excess risk returned by
    ``method_runner(representation, task, dataset)`` averaged over ``inner``
    independent target datasets of size ``n_T``. A runner exposing
    ``batch(representation, tasks, datasets)`` is called once with all pairs.

    Returns
    -------
    task, risk : TargetTask, float
        The argmax candidate and its averaged risk. With ``return_all`` the
        array of all candidate risks is appended.
    """
    if M < 1 or inner < 1:
        raise ValueError("M and inner must be positive")
    tasks = [_draw_hard_task(spec, rng_for(seed, 8, m)) for m in range(M)]
    pairs_t, pairs_d = [], []
    for m, task in enumerate(tasks):
        for j in range(inner):
            pairs_t.append(task)
            pairs_d.append(sample_hard_dataset(spec, task, n_T, noise_sigma, rng_for(seed, 9, m, j)))
    if hasattr(method_runner, "batch"):
        risks = np.asarray(method_runner.batch(representation, pairs_t, pairs_d), dtype=float)
    else:
        risks = np.array([method_runner(representation, t, ds) for t, ds in zip(pairs_t, pairs_d)])
    per_task = risks.reshape(M, inner).mean(axis=1)
    worst = int(np.argmax(per_task))
    if return_all:
        return tasks[worst], float(per_task[worst]), per_task
    return tasks[worst], float(per_task[worst])
