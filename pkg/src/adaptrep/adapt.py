"""Target-time fine-tuning from an antisymmetric initialization.

The learned representation ``B0`` is duplicated into ``A = [B0, B0]`` and the
head starts at ``w0 = [u, -u]``, so the initial predictor ``A w0`` is exactly
zero. Fine-tuning then runs projected gradient descent on the scaled
predictor ``beta (A + Delta)(w0 + w)`` over a product of norm balls whose radii
shrink like ``1/beta``; for large ``beta`` the problem is close to convex.
"""

from collections import namedtuple
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._validation import check_orthonormal, check_unit_vector
from .env import Dataset
from .pgd import NonFiniteError, PGDConfig, PGDTrace, project_ball, run_pgd

__all__ = [
    "Activation",
    "ACTIVATIONS",
    "AdaptSpec",
    "FineTuneResult",
    "BilinearTargetModel",
    "NNTargetModel",
    "build_antisymmetric_init",
    "nn_antisymmetric_init",
    "linear_radii",
    "finetune_linear",
    "finetune_linear_batch",
    "finetune_logistic",
    "finetune_nn",
    "nn_predict",
    "nn_features",
    "nn_remainder",
    "FineTunedLinearRegressor",
    "FineTunedLogisticClassifier",
    "FineTunedNNRegressor",
]

MODES = ("delta_only", "full_adapt", "ignore_rep", "logistic", "nn")

Activation = namedtuple("Activation", "fn d1 d2 lip smooth")


def _tanh_d1(t):
    return 1.0 - np.tanh(t) ** 2


def _tanh_d2(t):
    th = np.tanh(t)
    return -2.0 * th * (1.0 - th**2)


ACTIVATIONS = {
    # |tanh'| <= 1 and |tanh''| <= 4 / (3 sqrt 3)
    "tanh": Activation(np.tanh, _tanh_d1, _tanh_d2, 1.0, 4.0 / (3.0 * np.sqrt(3.0))),
    "relu": Activation(
        lambda t: np.maximum(t, 0.0),
        lambda t: (t > 0).astype(float),
        lambda t: np.zeros_like(t),
        1.0,
        0.0,
    ),
}


def _activation(name):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}")


@dataclass
class AdaptSpec:
    """Fine-tuning configuration.

    ``c1`` and ``c2`` are radii before division by ``beta_scale``: the feasible
    set is ``||Delta||_F <= c1 / beta`` and ``||w|| <= c2 / beta``. In ``nn``
    mode the parameters share a single ball of radius ``c1 / beta`` and ``c2``
    is ignored. ``lipschitz`` selects how the loss-derivative scale entering
    the step size is measured: ``"init"`` uses the RMS residual at the zero
    initialization, ``"sup"`` a bound valid over the whole feasible set.
    """

    mode: str = "full_adapt"
    beta_scale: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    w0_dir: Optional[np.ndarray] = None
    T_pgd: int = 10_000
    eta: Optional[float] = None
    lipschitz: str = "init"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not self.beta_scale > 0:
            raise ValueError("beta_scale must be positive")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("radii must be non-negative")
        if self.lipschitz not in ("init", "sup"):
            raise ValueError("lipschitz must be 'init' or 'sup'")
        if self.w0_dir is not None:
            self.w0_dir = check_unit_vector(self.w0_dir, name="w0_dir")

    def head_direction(self, k):
        if self.w0_dir is None:
            u = np.zeros(k)
            u[0] = 1.0
            return u
        if self.w0_dir.shape != (k,):
            raise ValueError(f"w0_dir must have length {k}")
        return self.w0_dir

    def radii(self):
        c2 = 0.0 if self.mode == "delta_only" else self.c2
        return self.c1 / self.beta_scale, c2 / self.beta_scale

    def to_dict(self):
        out = asdict(self)
        out["w0_dir"] = None if self.w0_dir is None else self.w0_dir.tolist()
        return out


@dataclass
class FineTuneResult:
    theta_hat: object
    trace: Optional[PGDTrace]
    spec: AdaptSpec
    delta: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None
    config: Optional[PGDConfig] = None

    def to_dict(self):
        from .io import encode_array

        out = {"spec": self.spec.to_dict()}
        if isinstance(self.theta_hat, tuple):
            out["theta_hat"] = [encode_array(p) for p in self.theta_hat]
        else:
            out["theta_hat"] = encode_array(self.theta_hat)
        if self.trace is not None:
            out["losses"] = self.trace.losses.tolist()
            out["best_index"] = self.trace.best_index
            out["step"] = self.trace.step
        if self.delta is not None:
            out["delta"] = encode_array(self.delta)
            out["w"] = encode_array(self.w)
        if self.config is not None:
            out["pgd"] = asdict(self.config)
        return out


def build_antisymmetric_init(B0, u):
    """Return ``(A, w0) = ([B0, B0], [u, -u])``, for which ``A @ w0 == 0`` exactly."""
    B0 = check_orthonormal(B0, name="B0")
    u = check_unit_vector(u)
    if u.shape[0] != B0.shape[1]:
        raise ValueError(f"u must have length {B0.shape[1]}")
    return np.hstack([B0, B0]), np.concatenate([u, -u])


def nn_antisymmetric_init(A, signs=None):
    """Network base point ``([A, A], [s, -s])``; the network output is identically 0."""
    A = np.asarray(A, dtype=float)
    k = A.shape[1]
    s = np.ones(k) if signs is None else np.asarray(signs, dtype=float)
    return np.hstack([A, A]), np.concatenate([s, -s])


def linear_radii(delta0, r, Sigma):
    """Radii ``(delta0, r * sqrt(kappa))`` with ``kappa`` the condition number of Sigma."""
    ev = np.linalg.eigvalsh(np.asarray(Sigma, dtype=float))
    return float(delta0), float(r * np.sqrt(ev[-1] / ev[0]))


def _as_xy(data):
    if isinstance(data, Dataset):
        return data.X, data.y
    X, y = data
    X, y = np.asarray(X, dtype=float), np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("expected X of shape (n, d) and y of shape (n,)")
    if X.shape[0] < 1:
        raise ValueError("target dataset is empty")
    return X, y


class BilinearTargetModel:
    """Per-example model ``x -> beta x^T (A + Delta)(w0 + w)`` with flat parameters."""

    def __init__(self, A, w0, beta):
        self.A, self.w0, self.beta = A, w0, float(beta)
        self.d, self.m = A.shape

    def unpack(self, p):
        n = self.d * self.m
        return p[:n].reshape(self.d, self.m), p[n:]

    def pack(self, delta, w):
        return np.concatenate([np.ravel(delta), np.ravel(w)])

    @property
    def size(self):
        return self.d * self.m + self.m

    def theta(self, p):
        D, w = self.unpack(p)
        return self.beta * (self.A + D) @ (self.w0 + w)

    def value(self, p, X):
        return X @ self.theta(p)

    def grad(self, p, x):
        D, w = self.unpack(p)
        return self.beta * self.pack(np.outer(x, self.w0 + w), (self.A + D).T @ x)

    def hvp(self, p, x, v):
        VD, vw = self.unpack(v)
        return self.beta * self.pack(np.outer(x, vw), VD.T @ x)


def _loss_scale(G, c, beta, r1, r2, lipschitz):
    """Loss-derivative scale multiplying the model-level constants."""
    alpha = np.sqrt(max(c, 0.0))
    if lipschitz == "sup":
        # ||theta|| <= beta (sqrt2 r2 + sqrt2 r1 + r1 r2) since A w0 = 0, ||A|| = ||w0|| = sqrt2
        lam_max = max(np.linalg.eigvalsh(G)[-1], 0.0)
        alpha += np.sqrt(lam_max) * beta * (np.sqrt(2.0) * (r1 + r2) + r1 * r2)
    return float(alpha)


def _quadratic_constants(G, c, B0, beta, r1, r2, mode, lipschitz):
    """Objective-level (curvature, gradient-scale) for the squared loss on stats (G, c)."""
    trG = np.trace(G)
    if mode == "delta_only":
        beta_g, L_g = 0.0, beta * np.sqrt(2.0 * trG)
    else:
        beta_g = beta * np.sqrt(trG)
        L_g = beta * np.sqrt(2.0 * np.trace(B0.T @ G @ B0) + 2.0 * trG)
    alpha = _loss_scale(G, c, beta, r1, r2, lipschitz)
    return alpha * beta_g, alpha * L_g


def finetune_linear(B0, target_dataset, spec):
    """Fine-tune a linear representation on one target dataset.

    ``full_adapt`` runs PGD jointly over ``(Delta, w)``; ``delta_only`` keeps
    ``w`` at 0 (w-ball of radius 0); ``ignore_rep`` discards ``B0`` and returns
    the minimum-norm least-squares fit.
    """
    X, y = _as_xy(target_dataset)
    n, d = X.shape
    if spec.mode == "ignore_rep":
        return FineTuneResult(theta_hat=np.linalg.pinv(X) @ y, trace=None, spec=spec)
    if spec.mode not in ("full_adapt", "delta_only"):
        raise ValueError(f"mode {spec.mode!r} is not a linear fine-tuning mode")
    B0 = check_orthonormal(B0, name="B0")
    if B0.shape[0] != d:
        raise ValueError("B0 and the data disagree on d")
    k = B0.shape[1]
    A, w0 = build_antisymmetric_init(B0, spec.head_direction(k))
    G, b, c = X.T @ X / n, X.T @ y / n, float(y @ y) / n
    beta = spec.beta_scale
    r1, r2 = spec.radii()
    model = BilinearTargetModel(A, w0, beta)

    def objective(p):
        th = model.theta(p)
        return 0.5 * (c - 2.0 * th @ b + th @ G @ th)

    def gradient(p):
        D, w = model.unpack(p)
        g = G @ model.theta(p) - b
        return beta * model.pack(np.outer(g, w0 + w), (A + D).T @ g)

    def projector(p):
        D, w = model.unpack(p)
        return model.pack(project_ball(D, r1), project_ball(w, r2))

    curv, lgrad = _quadratic_constants(G, c, B0, beta, r1, r2, spec.mode, spec.lipschitz)
    cfg = PGDConfig(T_pgd=spec.T_pgd, R=float(np.hypot(r1, r2)), beta_curv=curv,
                    L_grad=lgrad, eta=spec.eta)
    trace = run_pgd(objective, gradient, projector, np.zeros(model.size), cfg)
    D, w = model.unpack(trace.best_iterate)
    return FineTuneResult(theta_hat=model.theta(trace.best_iterate), trace=trace,
                          spec=spec, delta=D, w=w, config=cfg)


def finetune_linear_batch(B0s, G, b, c, spec):
    """Fine-tune many (representation, dataset) pairs at once from sufficient statistics.

    Parameters
    ----------
    B0s : ndarray of shape (r, d, k) or (d, k)
        Orthonormal representations.
    G, b, c : ndarrays of shape (m, d, d), (m, d), (m,)
        Per-dataset ``X^T X / n``, ``X^T y / n`` and ``y^T y / n``.
    spec : AdaptSpec
        Mode ``full_adapt`` or ``delta_only``; ``eta`` overrides are not supported.

    Returns
    -------
    thetas : ndarray of shape (m, r, d)
        Predictors from the best iterate of each run, matching
        :func:`finetune_linear` run by run.
    """
    if spec.mode not in ("full_adapt", "delta_only"):
        raise ValueError("batched fine-tuning supports full_adapt and delta_only")
    B0s = np.asarray(B0s, dtype=float)
    if B0s.ndim == 2:
        B0s = B0s[None]
    G, b, c = np.asarray(G, float), np.asarray(b, float), np.asarray(c, float)
    m, r = G.shape[0], B0s.shape[0]
    k = B0s.shape[2]
    u = spec.head_direction(k)
    w0 = np.concatenate([u, -u])
    A = np.concatenate([B0s, B0s], axis=2)  # (r, d, 2k)
    beta = spec.beta_scale
    r1, r2 = spec.radii()
    R = float(np.hypot(r1, r2))

    eta = np.empty((m, r))
    for i in range(m):
        for j in range(r):
            curv, lgrad = _quadratic_constants(G[i], c[i], B0s[j], beta, r1, r2,
                                               spec.mode, spec.lipschitz)
            eta[i, j] = PGDConfig(T_pgd=spec.T_pgd, R=R, beta_curv=curv, L_grad=lgrad).step

    D = np.zeros((m, r) + A.shape[1:])
    w = np.zeros((m, r, 2 * k))
    best_loss = np.full((m, r), np.inf)
    best_theta = np.zeros((m, r, A.shape[1]))
    for t in range(spec.T_pgd + 1):
        wf = w0 + w
        theta = beta * (np.einsum("rdj,mrj->mrd", A, wf) + np.einsum("mrdj,mrj->mrd", D, wf))
        Gth = np.matmul(G, theta.transpose(0, 2, 1)).transpose(0, 2, 1)
        loss = 0.5 * (c[:, None] - 2.0 * np.einsum("mrd,md->mr", theta, b)
                      + np.einsum("mrd,mrd->mr", theta, Gth))
        if not np.all(np.isfinite(loss)):
            raise NonFiniteError(t)
        better = loss < best_loss
        best_loss = np.where(better, loss, best_loss)
        best_theta[better] = theta[better]
        if t == spec.T_pgd:
            break
        g = Gth - b[:, None, :]
        sg = (beta * eta)[..., None]
        gD = g[..., :, None] * wf[..., None, :]
        gw = np.einsum("mrdj,mrd->mrj", A[None] + D, g)
        D = D - sg[..., None] * gD
        w = w - sg * gw
        nD = np.linalg.norm(D, axis=(2, 3))
        D *= np.minimum(1.0, r1 / np.maximum(nD, 1e-300))[..., None, None]
        nw = np.linalg.norm(w, axis=2)
        w *= np.minimum(1.0, r2 / np.maximum(nw, 1e-300))[..., None]
    return best_theta


def finetune_logistic(B0, target_dataset, spec):
    """Logistic-loss fine-tuning of the scaled predictor; labels must lie in {0, 1}."""
    X, y = _as_xy(target_dataset)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("logistic fine-tuning needs labels in {0, 1}")
    n, d = X.shape
    B0 = check_orthonormal(B0, name="B0")
    k = B0.shape[1]
    A, w0 = build_antisymmetric_init(B0, spec.head_direction(k))
    beta = spec.beta_scale
    r1, r2 = spec.radii()
    model = BilinearTargetModel(A, w0, beta)

    def objective(p):
        z = X @ model.theta(p)
        return float(np.mean(np.logaddexp(0.0, z) - y * z))

    def gradient(p):
        D, w = model.unpack(p)
        z = X @ model.theta(p)
        g = X.T @ (0.5 * (1.0 + np.tanh(0.5 * z)) - y) / n
        return beta * model.pack(np.outer(g, w0 + w), (A + D).T @ g)

    def projector(p):
        D, w = model.unpack(p)
        return model.pack(project_ball(D, r1), project_ball(w, r2))

    G = X.T @ X / n
    # the logistic loss is 1-Lipschitz in the logit, so the loss-derivative scale is 1
    curv, lgrad = _quadratic_constants(G, 1.0, B0, beta, r1, r2, "full_adapt", "init")
    cfg = PGDConfig(T_pgd=spec.T_pgd, R=float(np.hypot(r1, r2)), beta_curv=curv,
                    L_grad=lgrad, eta=spec.eta)
    trace = run_pgd(objective, gradient, projector, np.zeros(model.size), cfg)
    D, w = model.unpack(trace.best_iterate)
    return FineTuneResult(theta_hat=model.theta(trace.best_iterate), trace=trace,
                          spec=spec, delta=D, w=w, config=cfg)


def nn_predict(B, w, X, activation="tanh"):
    """Two-layer network ``w^T act(B^T x)`` for one input or a batch of rows."""
    act = _activation(activation)
    X = np.asarray(X, dtype=float)
    return act.fn(X @ B) @ w


def nn_features(B0, w0, X, activation="tanh"):
    """Gradient features of the network at ``(B0, w0)``.

    Returns ``phi = act(B0^T x)`` (the head gradient) and
    ``psi = x (w0 * act'(B0^T x))^T`` of shape ``(d, 2k)``, which pairs with a
    first-layer perturbation under the Frobenius inner product. Batched inputs
    give shapes ``(n, 2k)`` and ``(n, d, 2k)``.
    """
    act = _activation(activation)
    X = np.asarray(X, dtype=float)
    pre = X @ B0
    phi = act.fn(pre)
    scaled = w0 * act.d1(pre)
    psi = X[..., :, None] * scaled[..., None, :]
    return phi, psi


def nn_remainder(B0, w0, delta, w, x, activation="tanh"):
    """``f_{(B0+delta, w0+w)}(x) - w^T phi(x) - <psi(x), delta>``."""
    phi, psi = nn_features(B0, w0, x, activation)
    f = nn_predict(B0 + delta, w0 + w, x, activation)
    return f - phi @ w - np.einsum("...ij,ij->...", psi, delta)


class NNTargetModel:
    """Per-example scaled network ``gamma * f_{(B0 + Delta, w0 + w)}(x)`` with flat parameters."""

    def __init__(self, B0, w0, gamma, activation="tanh"):
        self.B0, self.w0, self.gamma = B0, w0, float(gamma)
        self.activation = activation
        self.d, self.m = B0.shape

    @property
    def size(self):
        return self.d * self.m + self.m

    def unpack(self, p):
        n = self.d * self.m
        return p[:n].reshape(self.d, self.m), p[n:]

    def pack(self, delta, w):
        return np.concatenate([np.ravel(delta), np.ravel(w)])

    def value(self, p, X):
        D, w = self.unpack(p)
        return self.gamma * nn_predict(self.B0 + D, self.w0 + w, X, self.activation)

    def grad(self, p, x):
        D, w = self.unpack(p)
        phi, psi = nn_features(self.B0 + D, self.w0 + w, x, self.activation)
        return self.gamma * self.pack(psi, phi)


def finetune_nn(B0, w0, target_dataset, spec, activation="tanh"):
    """Squared-loss PGD for the scaled network over one ball of radius ``c1 / gamma``."""
    X, y = _as_xy(target_dataset)
    B0 = np.asarray(B0, dtype=float)
    w0 = np.asarray(w0, dtype=float)
    if B0.shape[1] != w0.shape[0] or B0.shape[0] != X.shape[1]:
        raise ValueError("inconsistent network dimensions")
    act = _activation(activation)
    n = X.shape[0]
    gamma = spec.beta_scale
    rad = spec.c1 / gamma
    model = NNTargetModel(B0, w0, gamma, activation)

    def objective(p):
        return 0.5 * float(np.mean((model.value(p, X) - y) ** 2))

    def gradient(p):
        D, w = model.unpack(p)
        wf = w0 + w
        pre = X @ (B0 + D)
        res = (gamma * act.fn(pre) @ wf - y) / n
        gw = act.fn(pre).T @ res
        gD = X.T @ (res[:, None] * act.d1(pre) * wf[None, :])
        return gamma * model.pack(gD, gw)

    def projector(p):
        return project_ball(p, rad)

    phi, psi = nn_features(B0, w0, X, activation)
    L_g = gamma * np.sqrt(np.mean(np.sum(phi**2, axis=1) + np.sum(psi**2, axis=(1, 2))))
    xn = np.linalg.norm(X, axis=1)
    wmax = np.max(np.abs(w0)) + rad
    beta_g = gamma * np.sqrt(np.mean((act.smooth * wmax * xn**2 + act.lip * xn) ** 2))
    alpha = np.sqrt(np.mean(y**2))
    cfg = PGDConfig(T_pgd=spec.T_pgd, R=rad, beta_curv=alpha * beta_g,
                    L_grad=alpha * L_g, eta=spec.eta)
    trace = run_pgd(objective, gradient, projector, np.zeros(model.size), cfg)
    D, w = model.unpack(trace.best_iterate)
    return FineTuneResult(theta_hat=(B0 + D, w0 + w), trace=trace, spec=spec,
                          delta=D, w=w, config=cfg)


class _FineTunedBase(BaseEstimator):
    def _spec(self, n, mode):
        scale = np.sqrt(n) if self.scale is None else float(self.scale)
        return AdaptSpec(mode=mode, beta_scale=scale, c1=self.c1, c2=self.c2,
                         w0_dir=self.w0_dir, T_pgd=self.n_iter, eta=self.eta)


class FineTunedLinearRegressor(RegressorMixin, _FineTunedBase):
    """Linear regression fine-tuned from a representation.

    Parameters
    ----------
    representation : ndarray of shape (d, k)
        Orthonormal learned representation ``B0``.
    mode : {"full_adapt", "delta_only", "ignore_rep"}
    scale : float or None
        Predictor scale; ``None`` uses ``sqrt(n_samples)``.
    c1, c2 : float
        Radii of the perturbation and head balls before division by the scale.
    w0_dir : ndarray of shape (k,), optional
        Unit direction of the antisymmetric head (defaults to ``e_1``).
    n_iter : int
        PGD iterations.
    eta : float, optional
        Step-size override.
    """

    def __init__(self, representation=None, mode="full_adapt", scale=None, c1=1.0, c2=1.0,
                 w0_dir=None, n_iter=10_000, eta=None):
        self.representation = representation
        self.mode = mode
        self.scale = scale
        self.c1 = c1
        self.c2 = c2
        self.w0_dir = w0_dir
        self.n_iter = n_iter
        self.eta = eta

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if self.mode != "ignore_rep" and self.representation is None:
            raise ValueError("a representation is required unless mode='ignore_rep'")
        spec = self._spec(X.shape[0], self.mode)
        self.result_ = finetune_linear(self.representation, (X, y), spec)
        self.coef_ = self.result_.theta_hat
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X @ self.coef_


class FineTunedLogisticClassifier(ClassifierMixin, _FineTunedBase):
    """Binary logistic classifier fine-tuned from a representation (labels 0/1)."""

    def __init__(self, representation=None, scale=None, c1=1.0, c2=1.0, w0_dir=None,
                 n_iter=10_000, eta=None):
        self.representation = representation
        self.scale = scale
        self.c1 = c1
        self.c2 = c2
        self.w0_dir = w0_dir
        self.n_iter = n_iter
        self.eta = eta

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.array([0.0, 1.0])
        spec = self._spec(X.shape[0], "logistic")
        self.result_ = finetune_logistic(self.representation, (X, y.astype(float)), spec)
        self.coef_ = self.result_.theta_hat
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return check_array(X) @ self.coef_

    def predict_proba(self, X):
        p = 1.0 / (1.0 + np.exp(-self.decision_function(X)))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(float)


class FineTunedNNRegressor(RegressorMixin, _FineTunedBase):
    """Two-layer network regressor fine-tuned from an antisymmetric base point."""

    def __init__(self, first_layer=None, head=None, activation="tanh", scale=None, c1=1.0,
                 n_iter=10_000, eta=None):
        self.first_layer = first_layer
        self.head = head
        self.activation = activation
        self.scale = scale
        self.c1 = c1
        self.n_iter = n_iter
        self.eta = eta

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        scale = np.sqrt(X.shape[0]) if self.scale is None else float(self.scale)
        spec = AdaptSpec(mode="nn", beta_scale=scale, c1=self.c1, c2=0.0, T_pgd=self.n_iter,
                         eta=self.eta)
        self.result_ = finetune_nn(self.first_layer, self.head, (X, y), spec, self.activation)
        self.scale_ = scale
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        B, w = self.result_.theta_hat
        return self.scale_ * nn_predict(B, w, check_array(X), self.activation)
