"""Exact zero-mean Gaussian-process regression with an ARD RBF + white kernel.

The covariance between two inputs is

    k(x, x') = C * exp(-sum_i (x_i - x'_i)**2 / (2 * l_i**2))

and the white-noise variance is added on the diagonal of the training Gram
matrix only.  Inputs may optionally be standardized (z-scored) before the
kernel is applied; the length scales then live in standardized units.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

__all__ = [
    "KernelParams",
    "TrainedGP",
    "GPPrediction",
    "NotPositiveDefinite",
    "SearchSpace",
    "kernel_eval",
    "cross_kernel",
    "gram_matrix",
    "fit",
    "predict",
    "predict_batch",
    "predict_mean",
    "log_marginal_likelihood",
    "optimize_hyperparameters",
    "to_json",
    "from_json",
]

SCHEMA_VERSION = 1
JITTER_REL = 1e-10
JITTER_RETRIES = 3


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Raised when the Gram matrix cannot be factored even after jitter escalation."""


@dataclass(frozen=True)
class KernelParams:
    scale_C: float
    length_scales: tuple
    noise_var: float = 0.0

    def __post_init__(self):
        ls = tuple(float(v) for v in np.atleast_1d(self.length_scales))
        object.__setattr__(self, "length_scales", ls)
        object.__setattr__(self, "scale_C", float(self.scale_C))
        object.__setattr__(self, "noise_var", float(self.noise_var))
        if not self.scale_C > 0:
            raise ValueError(f"scale_C must be > 0, got {self.scale_C}")
        if len(ls) == 0 or not all(v > 0 for v in ls):
            raise ValueError(f"length scales must be positive, got {ls}")
        if not self.noise_var >= 0:
            raise ValueError(f"noise_var must be >= 0, got {self.noise_var}")

    @property
    def dim(self) -> int:
        return len(self.length_scales)

    def to_dict(self) -> dict:
        return {
            "scale_C": self.scale_C,
            "length_scales": list(self.length_scales),
            "noise_var": self.noise_var,
        }


@dataclass(frozen=True)
class GPPrediction:
    mean: float
    variance: float


@dataclass(frozen=True, eq=False)
class TrainedGP:
    """A fitted GP.  Immutable; safe to share between threads.

    ``chol_factor`` is the lower Cholesky factor of ``K + noise_var*I + jitter*I``
    on the (standardized) training inputs.  Jitter is a numerical device only:
    ``weights`` and posterior variances are refined against ``K + noise_var*I``.
    """

    inputs: np.ndarray
    weights: np.ndarray
    chol_factor: np.ndarray
    params: KernelParams
    y_mean: float
    x_offset: np.ndarray
    x_scale: np.ndarray
    jitter: float
    _z: np.ndarray = field(repr=False, default=None)
    _k: np.ndarray = field(repr=False, default=None, compare=False)

    def __post_init__(self):
        if self._z is None:
            object.__setattr__(self, "_z", _standardize(self.inputs, self.x_offset, self.x_scale))

    def _gram(self) -> np.ndarray:
        # built on first variance query; benign race if two threads get here together
        if self._k is None:
            object.__setattr__(self, "_k", gram_matrix(self._z, self.params, add_noise=True, jitter=0.0))
        return self._k

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    def prior_variance(self) -> float:
        return self.params.scale_C


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D input matrix, got shape {X.shape}")
    return X


def _standardize(X, offset, scale):
    return (np.asarray(X, dtype=float) - offset) / scale


def _check_dim(d: int, params: KernelParams):
    if d != params.dim:
        raise ValueError(f"input dimension {d} does not match {params.dim} length scales")


def kernel_eval(x, x_prime, params: KernelParams) -> float:
    """RBF covariance between two single points (no white-noise term)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=float))
    if x.shape != x_prime.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_prime.shape}")
    _check_dim(x.size, params)
    ls = np.asarray(params.length_scales)
    r2 = np.sum(((x - x_prime) / ls) ** 2)
    return params.scale_C * math.exp(-0.5 * r2)


def cross_kernel(A, B, params: KernelParams) -> np.ndarray:
    """Matrix of k(a_i, b_j) for rows of A and B."""
    A = _as_matrix(A)
    B = _as_matrix(B)
    _check_dim(A.shape[1], params)
    _check_dim(B.shape[1], params)
    ls = np.asarray(params.length_scales)
    a = A / ls
    b = B / ls
    r2 = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * a @ b.T
    )
    np.maximum(r2, 0.0, out=r2)
    return params.scale_C * np.exp(-0.5 * r2)


def gram_matrix(X, params: KernelParams, add_noise: bool = True, jitter: float | None = None) -> np.ndarray:
    X = _as_matrix(X)
    if X.shape[0] < 1:
        raise ValueError("gram_matrix needs at least one point")
    K = cross_kernel(X, X, params)
    # exact symmetry regardless of floating-point ordering in the matmul
    K = 0.5 * (K + K.T)
    diag = JITTER_REL * params.scale_C if jitter is None else jitter
    if add_noise:
        diag = diag + params.noise_var
    K[np.diag_indices_from(K)] = params.scale_C + diag
    return K


def _factor(Z, params: KernelParams):
    """Cholesky of the jittered Gram matrix; returns (L, jitter, K without jitter)."""
    K = gram_matrix(Z, params, add_noise=True, jitter=0.0)
    jitter = JITTER_REL * params.scale_C
    eye = np.eye(K.shape[0])
    for _ in range(JITTER_RETRIES + 1):
        try:
            L = np.linalg.cholesky(K + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
            continue
        if np.all(np.diag(L) > 0):
            return L, jitter, K
        jitter *= 10.0
    raise NotPositiveDefinite(
        f"Gram matrix not positive definite after {JITTER_RETRIES} jitter escalations"
    )


def _refine(L, K, b, max_steps: int = 50):
    """Solve ``K w = b`` using the jittered factor ``L`` as a preconditioner.

    Plain ``cho_solve`` answers the jittered system; on ill-conditioned
    Gram matrices that biases the weights by roughly ``jitter * |w|``.
    """
    w = cho_solve((L, True), b)
    r = b - K @ w
    res = np.max(np.abs(r))
    tol = 1e-13 * max(1.0, float(np.max(np.abs(b))))
    for _ in range(max_steps):
        if res <= tol:
            break
        w_new = w + cho_solve((L, True), r)
        r_new = b - K @ w_new
        res_new = np.max(np.abs(r_new))
        if not res_new < res:
            break
        w, r, res = w_new, r_new, res_new
    return w


def fit(X, y, params: KernelParams, standardize: bool = False) -> TrainedGP:
    """Condition a zero-mean GP on (X, y) after subtracting ``mean(y)``."""
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 1:
        raise ValueError("fit needs at least one training point")
    if X.shape[0] != y.size:
        raise ValueError(f"{X.shape[0]} inputs but {y.size} targets")
    _check_dim(X.shape[1], params)

    if standardize:
        offset = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
    else:
        offset = np.zeros(X.shape[1])
        scale = np.ones(X.shape[1])
    Z = _standardize(X, offset, scale)

    y_mean = float(np.mean(y))
    L, jitter, K = _factor(Z, params)
    w = _refine(L, K, y - y_mean)
    return TrainedGP(
        inputs=X.copy(),
        weights=w,
        chol_factor=L,
        params=params,
        y_mean=y_mean,
        x_offset=offset,
        x_scale=scale,
        jitter=jitter,
        _z=Z,
    )


def predict_batch(gp: TrainedGP, X_star, return_var: bool = True):
    """Posterior mean (and latent variance) at the rows of ``X_star``."""
    Zs = _standardize(_as_matrix(X_star), gp.x_offset, gp.x_scale)
    Ks = cross_kernel(Zs, gp._z, gp.params)
    mean = gp.y_mean + Ks @ gp.weights
    if not return_var:
        return mean
    W = _refine(gp.chol_factor, gp._gram(), Ks.T)
    var = gp.params.scale_C - np.sum(Ks.T * W, axis=0)
    return mean, np.maximum(var, 0.0)


def predict_mean(gp: TrainedGP, x_star) -> float:
    z = (np.asarray(x_star, dtype=float).ravel() - gp.x_offset) / gp.x_scale
    ls = np.asarray(gp.params.length_scales)
    d = (gp._z - z) / ls
    k = gp.params.scale_C * np.exp(-0.5 * np.einsum("ij,ij->i", d, d))
    return float(gp.y_mean + k @ gp.weights)


def predict(gp: TrainedGP, x_star) -> GPPrediction:
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    mean, var = predict_batch(gp, x_star[None, :])
    return GPPrediction(mean=float(mean[0]), variance=float(var[0]))


def log_marginal_likelihood(X, y, params: KernelParams, standardize: bool = False) -> float:
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 1 or X.shape[0] != y.size:
        raise ValueError("need matching, non-empty inputs and targets")
    _check_dim(X.shape[1], params)
    if standardize:
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        Z = _standardize(X, X.mean(axis=0), scale)
    else:
        Z = X
    yc = y - np.mean(y)
    L = _factor(Z, params)[0]
    alpha = solve_triangular(L, yc, lower=True)
    log_det = 2.0 * np.sum(np.log(np.diag(L)))
    return float(-0.5 * alpha @ alpha - 0.5 * log_det - 0.5 * yc.size * math.log(2.0 * math.pi))


# --- hyperparameter search -------------------------------------------------

@dataclass(frozen=True)
class SearchSpace:
    """Log-uniform bounds for each hyperparameter.

    ``length_scale`` bounds apply to every input dimension.  Setting
    ``noise_var`` to ``None`` pins the white-noise variance to zero.
    """

    scale_C: tuple = (1e-3, 1e3)
    length_scale: tuple = (1e-2, 1e2)
    noise_var: tuple | None = (1e-6, 1e1)
    restarts: int = 8
    sweeps: int = 3
    line_evals: int = 20
    seed: int = 0

    @classmethod
    def for_targets(cls, y, **kw) -> "SearchSpace":
        """Bounds scaled to the variance of ``y`` (assumes standardized inputs)."""
        v = float(np.var(y))
        if not v > 0:
            v = 1e-12 if not np.any(y) else max(float(np.mean(np.abs(y))) ** 2, 1e-12)
        kw.setdefault("scale_C", (1e-3 * v, 1e2 * v))
        kw.setdefault("noise_var", (1e-6 * v, 2.0 * v))
        kw.setdefault("length_scale", (5e-2, 2e1))
        return cls(**kw)


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden(fun, lo, hi, n_evals):
    """Minimize a 1-D function on [lo, hi]; returns (x, f(x)) of the best probe."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fun(c), fun(d)
    best = (c, fc) if fc <= fd else (d, fd)
    for _ in range(max(n_evals - 2, 0)):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fun(c)
            if fc < best[1]:
                best = (c, fc)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fun(d)
            if fd < best[1]:
                best = (d, fd)
    return best


def optimize_hyperparameters(X, y, search_space: SearchSpace | None = None, standardize: bool = False) -> KernelParams:
    """Maximize the log marginal likelihood by multi-start coordinate search.

    Each restart draws a log-uniform initial point, then sweeps the
    coordinates with golden-section line searches in log space, accepting
    a move only when it improves the likelihood.  Deterministic for a given
    ``search_space.seed``.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    ss = search_space or SearchSpace()
    d = X.shape[1]
    fit_noise = ss.noise_var is not None

    bounds = [ss.scale_C] + [ss.length_scale] * d
    if fit_noise:
        bounds.append(ss.noise_var)
    lo = np.log(np.array([b[0] for b in bounds], dtype=float))
    hi = np.log(np.array([b[1] for b in bounds], dtype=float))

    def unpack(theta):
        e = np.exp(theta)
        return KernelParams(e[0], tuple(e[1:1 + d]), e[1 + d] if fit_noise else 0.0)

    def neg_mll(theta):
        try:
            return -log_marginal_likelihood(X, y, unpack(theta), standardize=standardize)
        except (NotPositiveDefinite, ValueError, FloatingPointError):
            return math.inf

    rng = np.random.default_rng(ss.seed)
    starts = rng.uniform(lo, hi, size=(ss.restarts, lo.size))

    best_theta, best_val = None, math.inf
    for theta0 in starts:
        theta = theta0.copy()
        val = neg_mll(theta)
        for _ in range(ss.sweeps):
            for i in range(theta.size):
                def line(t, i=i):
                    trial = theta.copy()
                    trial[i] = t
                    return neg_mll(trial)

                t_new, v_new = _golden(line, lo[i], hi[i], ss.line_evals)
                if v_new < val:
                    theta[i], val = t_new, v_new
        if val < best_val:
            best_theta, best_val = theta, val

    if best_theta is None:
        raise NotPositiveDefinite("every restart failed to factor the Gram matrix")
    return unpack(best_theta)


# --- serialization ---------------------------------------------------------

def to_json(gp: TrainedGP) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "rbf+white",
        "params": gp.params.to_dict(),
        "y_mean": gp.y_mean,
        "jitter": gp.jitter,
        "x_offset": gp.x_offset.tolist(),
        "x_scale": gp.x_scale.tolist(),
        "inputs": gp.inputs.tolist(),
        "weights": gp.weights.tolist(),
    }
    return json.dumps(doc, sort_keys=True)


def from_json(text: str) -> TrainedGP:
    doc = json.loads(text) if isinstance(text, str) else text
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported GP schema version {doc.get('schema_version')!r}")
    p = doc["params"]
    params = KernelParams(p["scale_C"], tuple(p["length_scales"]), p["noise_var"])
    X = np.asarray(doc["inputs"], dtype=float)
    offset = np.asarray(doc["x_offset"], dtype=float)
    scale = np.asarray(doc["x_scale"], dtype=float)
    Z = _standardize(X, offset, scale)
    K = gram_matrix(Z, params, add_noise=True, jitter=doc["jitter"])
    L = np.linalg.cholesky(K)
    return TrainedGP(
        inputs=X,
        weights=np.asarray(doc["weights"], dtype=float),
        chol_factor=L,
        params=params,
        y_mean=float(doc["y_mean"]),
        x_offset=offset,
        x_scale=scale,
        jitter=float(doc["jitter"]),
        _z=Z,
    )
