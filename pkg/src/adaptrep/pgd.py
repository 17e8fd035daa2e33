"""Fixed-step projected gradient descent with a suboptimality certificate.

For objectives that are approximately linear in their parameters, with
curvature constant ``beta_curv`` and gradient scale ``L_grad`` on a convex
feasible set of radius ``R`` around the origin, running ``T_pgd`` steps with

    eta = R / (sqrt(T_pgd) * sqrt(L_grad**2 + beta_curv**2 * R**2))

guarantees that the best iterate is within
``beta_curv * R**2 + R * sqrt((L_grad**2 + beta_curv**2 * R**2) / T_pgd)``
of every feasible comparator.
"""

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._validation import rng_for

__all__ = [
    "NonFiniteError",
    "PowerIterationError",
    "PGDConfig",
    "PGDTrace",
    "certified_step",
    "pgd_bound",
    "project_ball",
    "project_product_ball",
    "run_pgd",
    "estimate_approx_linearity",
    "write_trace_csv",
]


class NonFiniteError(FloatingPointError):
    def __init__(self, iteration, what="loss"):
        super().__init__(f"non-finite {what} at iteration {iteration}")
        self.iteration = iteration


class PowerIterationError(RuntimeError):
    pass


def certified_step(T_pgd, R, beta_curv, L_grad):
    denom = np.sqrt(L_grad**2 + beta_curv**2 * R**2)
    if denom == 0:
        raise ValueError("step size undefined when L_grad and beta_curv are both 0")
    return R / (np.sqrt(T_pgd) * denom)


def pgd_bound(beta_curv, L_grad, R, T_pgd):
    """Certified gap ``beta R^2 + R sqrt((L^2 + beta^2 R^2) / T)``."""
    return beta_curv * R**2 + R * np.sqrt((L_grad**2 + beta_curv**2 * R**2) / T_pgd)


@dataclass
class PGDConfig:
    T_pgd: int = 10_000
    R: float = 1.0
    beta_curv: float = 0.0
    L_grad: float = 1.0
    eta: Optional[float] = None

    def __post_init__(self):
        if int(self.T_pgd) < 1:
            raise ValueError("T_pgd must be at least 1")
        if self.R <= 0 or self.beta_curv < 0 or self.L_grad < 0:
            raise ValueError("need R > 0, beta_curv >= 0, L_grad >= 0")
        if self.eta is not None and self.eta <= 0:
            raise ValueError("eta must be positive")

    @property
    def step(self):
        if self.eta is not None:
            return float(self.eta)
        return float(certified_step(self.T_pgd, self.R, self.beta_curv, self.L_grad))

    @property
    def certified(self):
        """True when the step in use is the one the certificate is stated for."""
        return self.eta is None or np.isclose(
            self.eta, certified_step(self.T_pgd, self.R, self.beta_curv, self.L_grad),
            rtol=1e-12, atol=0.0,
        )

    @property
    def bound(self):
        return float(pgd_bound(self.beta_curv, self.L_grad, self.R, self.T_pgd))


@dataclass
class PGDTrace:
    iterates: Optional[np.ndarray]
    losses: np.ndarray
    best_iterate: np.ndarray
    step: float

    @property
    def best_index(self):
        # np.argmin returns the first minimizer, i.e. the smallest index on ties
        return int(np.argmin(self.losses))

    @property
    def best_loss(self):
        return float(self.losses[self.best_index])


def project_ball(x, radius):
    x = np.asarray(x, dtype=float)
    nrm = np.linalg.norm(x)
    if nrm <= radius:
        return x
    return x * (radius / nrm)


def project_product_ball(delta_mat, w_vec, c1, c2):
    """Euclidean projection onto ``{||Delta||_F <= c1} x {||w|| <= c2}``.

    Radii are taken as given (already divided by the predictor scale).
    """
    if c1 < 0 or c2 < 0:
        raise ValueError("radii must be non-negative")
    return project_ball(delta_mat, c1), project_ball(w_vec, c2)


def run_pgd(objective, gradient, projector, x0, config, keep_iterates=True):
    """Run ``x <- projector(x - eta * gradient(x))`` for ``config.T_pgd`` steps.

    Returns a :class:`PGDTrace` with ``T_pgd + 1`` losses (the starting point
    included). Raises :class:`NonFiniteError` carrying the iteration index if
    a loss or gradient becomes NaN or infinite.
    """
    eta = config.step
    T = int(config.T_pgd)
    x = np.array(x0, dtype=float, copy=True)
    losses = np.empty(T + 1)
    iterates = np.empty((T + 1,) + x.shape) if keep_iterates else None
    best, best_loss = x.copy(), np.inf
    for t in range(T + 1):
        f = float(objective(x))
        if not np.isfinite(f):
            raise NonFiniteError(t, "loss")
        losses[t] = f
        if keep_iterates:
            iterates[t] = x
        if f < best_loss:
            best, best_loss = x.copy(), f
        if t == T:
            break
        g = np.asarray(gradient(x), dtype=float)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(t, "gradient")
        x = projector(x - eta * g)
    return PGDTrace(iterates=iterates, losses=losses, best_iterate=best, step=eta)


def write_trace_csv(trace, path, norms=None):
    """Dump ``iteration, loss, param_norm`` rows; ``norms`` overrides the norm column."""
    if norms is None:
        if trace.iterates is None:
            raise ValueError("trace has no stored iterates; pass norms explicitly")
        norms = np.linalg.norm(trace.iterates.reshape(len(trace.losses), -1), axis=1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "loss", "param_norm"])
        for i, (loss, nrm) in enumerate(zip(trace.losses, norms)):
            w.writerow([i, repr(float(loss)), repr(float(nrm))])


def _fd_hvp(grad_fn, theta, v):
    h = 1e-5 * (1.0 + np.linalg.norm(theta))
    return (grad_fn(theta + h * v) - grad_fn(theta - h * v)) / (2 * h)


def _hessian_norm(hvp, dim, rng, max_iter=100, rtol=1e-6):
    """Spectral norm of a symmetric operator from at most ``max_iter`` products.

    Power iteration with Rayleigh-Ritz extraction: the iterates are
    orthogonalized and the norm is read from the projected operator on their
    span. Plain power iteration stalls when the two extreme eigenvalues have
    nearly equal magnitude and opposite sign, which is typical of network
    Hessians.
    """
    v = rng.standard_normal(dim)
    V = [v / np.linalg.norm(v)]
    HV = []
    est = None
    for _ in range(max_iter):
        HV.append(np.asarray(hvp(V[-1]), dtype=float))
        Vm, Hm = np.array(V).T, np.array(HV).T
        proj = Vm.T @ Hm
        new = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (proj + proj.T)))))
        nxt = HV[-1] - Vm @ (Vm.T @ HV[-1])
        nxt -= Vm @ (Vm.T @ nxt)
        nrm = np.linalg.norm(nxt)
        scale = max(np.linalg.norm(HV[-1]), 1e-300)
        if new == 0.0 and nrm == 0.0:
            return 0.0
        if nrm <= 1e-12 * scale:
            return new  # invariant subspace reached, the Ritz value is exact
        if est is not None and abs(new - est) <= rtol * new:
            return new
        est = new
        V.append(nxt / nrm)
    raise PowerIterationError(f"power iteration did not converge in {max_iter} steps")


def estimate_approx_linearity(model, inputs, feasible_sampler, n_probe=5, seed=0, x0=None,
                              max_iter=100):
    """Empirical curvature and gradient-scale constants of a parametric model.

    Parameters
    ----------
    model : object
        Exposes ``grad(theta, x)`` (parameter gradient of the prediction at one
        input, flattened) and optionally ``hvp(theta, x, v)``. Central finite
        differences of ``grad`` are used when ``hvp`` is missing.
    inputs : ndarray of shape (n, d)
    feasible_sampler : callable
        ``feasible_sampler(rng)`` returns a feasible parameter perturbation.
    n_probe : int
        Number of sampled feasible points at which the Hessian is probed.
    x0 : ndarray, optional
        The initialization (defaults to the zero perturbation).

    Returns
    -------
    beta_curv_hat, L_grad_hat : float
        ``sqrt(max_probe mean_i ||H_i||^2)`` and ``sqrt(mean_i ||grad_i(x0)||^2)``.
    """
    if n_probe < 1:
        raise ValueError("n_probe must be at least 1")
    rng = rng_for(seed, 11)
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    probes = [np.asarray(feasible_sampler(rng), dtype=float) for _ in range(n_probe)]
    dim = probes[0].size
    if x0 is None:
        x0 = np.zeros(dim)

    hvp_fn = getattr(model, "hvp", None)
    beta_sq = 0.0
    for theta in probes:
        acc = 0.0
        for x in inputs:
            if hvp_fn is not None:
                op = lambda v, th=theta, xx=x: hvp_fn(th, xx, v)
            else:
                op = lambda v, th=theta, xx=x: _fd_hvp(lambda p: model.grad(p, xx), th, v)
            acc += _hessian_norm(op, dim, rng, max_iter=max_iter) ** 2
        beta_sq = max(beta_sq, acc / len(inputs))
    grads = np.array([model.grad(x0, x) for x in inputs])
    L_sq = float(np.mean(np.sum(grads**2, axis=1)))
    return float(np.sqrt(beta_sq)), float(np.sqrt(L_sq))
