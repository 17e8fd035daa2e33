"""Input validation and small linear-algebra helpers shared across modules."""

import numpy as np

__all__ = [
    "check_multitask",
    "check_orthonormal",
    "check_unit_vector",
    "check_symmetric",
    "orthonormalize",
    "derive_seed",
    "rng_for",
    "uniform_sphere",
]


def derive_seed(seed, *keys):
    """Counter-based sub-seed: a SeedSequence keyed by ``(seed, *keys)``.

    Identical arguments give identical streams regardless of call order, which
    is what makes replications and grid cells independently reproducible.
    """
    keys = tuple(int(k) for k in keys)
    return np.random.SeedSequence(entropy=int(seed), spawn_key=keys)


def rng_for(seed, *keys):
    return np.random.default_rng(derive_seed(seed, *keys))


def uniform_sphere(rng, dim, radius=1.0, size=None):
    """Draw uniformly from the radius-``radius`` sphere in ``R^dim``."""
    shape = (dim,) if size is None else (size, dim)
    g = rng.standard_normal(shape)
    norms = np.linalg.norm(g, axis=-1, keepdims=True)
    return radius * g / norms


def orthonormalize(B):
    """Thin QR with the first nonzero entry of every column made positive."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {B.shape}")
    Q, _ = np.linalg.qr(B)
    for j in range(Q.shape[1]):
        nz = np.flatnonzero(np.abs(Q[:, j]) > 1e-14)
        if nz.size and Q[nz[0], j] < 0:
            Q[:, j] = -Q[:, j]
    return Q


def check_orthonormal(B, tol=1e-8, name="B"):
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] < B.shape[1]:
        raise ValueError(f"{name} must be a tall 2-D matrix, got shape {B.shape}")
    err = np.linalg.norm(B.T @ B - np.eye(B.shape[1]))
    if err > tol:
        raise ValueError(f"{name} is not orthonormal (||B^T B - I||_F = {err:.3e})")
    return B


def check_unit_vector(u, tol=1e-10, name="u"):
    u = np.asarray(u, dtype=float).ravel()
    if abs(np.linalg.norm(u) - 1.0) > tol:
        raise ValueError(f"{name} must have unit norm, got {np.linalg.norm(u):.6g}")
    return u


def check_symmetric(S, tol=1e-10, name="Sigma"):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"{name} must be square, got shape {S.shape}")
    if np.max(np.abs(S - S.T), initial=0.0) > tol:
        raise ValueError(f"{name} is not symmetric (tolerance {tol})")
    return S


def check_multitask(X, y):
    """Validate stacked multi-task data.

    Parameters
    ----------
    X : array-like of shape (T, n, d) or a sequence of T arrays of shape (n, d)
    y : array-like of shape (T, n)

    Returns
    -------
    X, y : float arrays of shape (T, n, d) and (T, n)
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 3:
        raise ValueError(f"X must have shape (T, n, d), got {X.shape}")
    if y.shape != X.shape[:2]:
        raise ValueError(f"y must have shape {X.shape[:2]}, got {y.shape}")
    if X.shape[1] < 1:
        raise ValueError("each task needs at least one sample")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("X and y must be finite")
    return X, y
