"""Evaluation primitives: excess risk, Monte-Carlo population loss, subspace distance."""

from dataclasses import dataclass

import numpy as np

from ._validation import check_symmetric, orthonormalize, rng_for

__all__ = [
    "MetricsReport",
    "excess_risk_quadratic",
    "sine_principal_angle",
    "population_loss_mc",
    "squared_loss",
    "logistic_loss",
]


@dataclass
class MetricsReport:
    excess_risk: float
    sine_dist: float
    population_loss: float
    population_loss_stderr: float
    n_mc: int

    def __post_init__(self):
        if self.excess_risk < 0:
            raise ValueError("excess_risk must be non-negative")
        if not (0.0 <= self.sine_dist <= 1.0 + 1e-12) and not np.isnan(self.sine_dist):
            raise ValueError("sine_dist must lie in [0, 1]")


def excess_risk_quadratic(theta_hat, theta_star, Sigma):
    """Excess risk ``E[(x^T theta* - x^T theta_hat)^2]`` for zero-mean ``x`` with covariance Sigma.

    ``theta_hat`` may be a single vector or a stack of shape ``(m, d)``, in which
    case one risk per row is returned.
    """
    Sigma = check_symmetric(Sigma)
    e = np.asarray(theta_hat, dtype=float) - np.asarray(theta_star, dtype=float)
    if e.shape[-1] != Sigma.shape[0]:
        raise ValueError(f"dimension mismatch: {e.shape[-1]} vs {Sigma.shape[0]}")
    risk = np.einsum("...i,ij,...j->...", e, Sigma, e)
    # PSD quadratic form; clip rounding below zero
    return np.maximum(risk, 0.0) if np.ndim(risk) else max(float(risk), 0.0)


def sine_principal_angle(B_hat, B_star):
    """Sine of the largest principal angle between ``col(B_hat)`` and ``col(B_star)``.

    Both inputs are orthonormalized first. The sine is read off the residual
    of the lower-dimensional basis after projecting onto the other span,
    which keeps full relative accuracy for small angles.
    """
    B_hat = np.asarray(B_hat, dtype=float)
    B_star = np.asarray(B_star, dtype=float)
    if B_hat.ndim == 1:
        B_hat = B_hat[:, None]
    if B_star.ndim == 1:
        B_star = B_star[:, None]
    if B_hat.shape[0] != B_star.shape[0]:
        raise ValueError(
            f"row dimension mismatch: {B_hat.shape[0]} vs {B_star.shape[0]}"
        )
    Q1, Q2 = orthonormalize(B_hat), orthonormalize(B_star)
    if Q1.shape[1] > Q2.shape[1]:
        Q1, Q2 = Q2, Q1
    resid = Q1 - Q2 @ (Q2.T @ Q1)
    return float(min(np.linalg.norm(resid, 2), 1.0))


def squared_loss(pred, y):
    return 0.5 * (pred - y) ** 2


def logistic_loss(logit, y):
    # -y log s(z) - (1-y) log(1 - s(z)), written stably
    return np.logaddexp(0.0, logit) - y * logit


def population_loss_mc(predict, env, task, n_mc=10_000, seed=0):
    """Monte-Carlo estimate of the population loss of ``predict`` on ``task``.

    Fresh inputs and labels are drawn from ``env``'s input law and label model
    for the given target task. The squared loss carries the factor 1/2; the
    logistic loss is applied to ``predict``'s output as a logit.

    Returns
    -------
    estimate, stderr : float
    """
    if n_mc < 100:
        raise ValueError("n_mc must be at least 100")
    rng = rng_for(seed, 7)
    X = env.sample_inputs(rng, n_mc)
    y = env.sample_labels(rng, X, task)
    pred = np.asarray(predict(X), dtype=float)
    if env.family == "logistic":
        losses = logistic_loss(pred, y)
    else:
        losses = squared_loss(pred, y)
    return float(losses.mean()), float(losses.std(ddof=1) / np.sqrt(n_mc))
