"""Per-query Gaussian process regression over dense embeddings.

The training set always contains the query embedding as row 0 with target
s_max (the maximum attainable relevance score); the R labeled passages
follow. Fitting is exact: Cholesky of K + alpha*I with an escalating
jitter fallback when the factorization fails (dot and cosine kernels are
rank-deficient by construction once R+1 exceeds the embedding dimension).

Three kernels:

    dot     k(x, y) = <x, y>
    cosine  k(x, y) = <x, y> / (||x|| ||y||), zero-norm inputs score 0
    rbf     k(x, y) = exp(-||x - y||^2 / (2 ell^2))

With the dot (resp. cosine) kernel and only the query point in training,
the posterior mean is a positive multiple of the dense-retrieval score, so
the induced ranking coincides with plain dense retrieval.

The RBF length scale is chosen by maximizing the log marginal likelihood
with L-BFGS-B over ln(ell), guarded by a fixed evaluation grid; whichever
candidate scores highest wins.

All linear algebra is float64. Posterior evaluation over the corpus walks
row blocks so memory stays at O(block * (R+1)).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from . import accel
from .errors import ConfigError, DataError

KERNELS = ("dot", "cosine", "rbf")

#: fallback grid for length-scale selection, spanning the bound range
ELL_GRID = (0.001, 0.1, 1.0, 10.0, 100.0, 1000.0)
DEFAULT_ELL_BOUNDS = (1e-3, 1e3)
_JITTER_STEPS = 6


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    length_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ConfigError(f"kernel must be one of {KERNELS}, got {self.kind!r}")
        if self.kind == "rbf" and not self.length_scale > 0:
            raise ConfigError(f"length_scale must be positive, got {self.length_scale}")


@dataclass(frozen=True)
class GprModel:
    kernel: KernelSpec
    alpha: float  # requested noise variance
    alpha_used: float  # effective after any jitter escalation
    train_X: np.ndarray  # (R+1, D), row 0 is the query embedding
    train_y: np.ndarray  # (R+1,), y[0] = s_max
    chol_L: np.ndarray  # lower Cholesky factor of K + alpha_used*I
    weights: np.ndarray  # (K + alpha_used*I)^{-1} train_y

    @property
    def n_train(self) -> int:
        return int(self.train_X.shape[0])


@dataclass(frozen=True)
class Posterior:
    mean: np.ndarray
    variance: np.ndarray


@dataclass(frozen=True)
class LengthScaleResult:
    ell: float
    lml: float
    converged: bool  # False when the optimizer hit its iteration cap


def kernel_eval(spec: KernelSpec, x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DataError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if spec.kind == "dot":
        return float(x @ y)
    if spec.kind == "cosine":
        nx, ny = np.linalg.norm(x), np.linalg.norm(y)
        if nx == 0.0 or ny == 0.0:
            return 0.0
        return float(x @ y) / (nx * ny)
    diff = x - y
    return float(np.exp(-(diff @ diff) / (2.0 * spec.length_scale**2)))


def kernel_matrix(spec: KernelSpec, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Cross-kernel matrix with entry (i, j) = k(X_i, Z_j)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    if X.ndim != 2 or Z.ndim != 2 or X.shape[1] != Z.shape[1]:
        raise DataError(f"dimension mismatch: {X.shape} vs {Z.shape}")
    if X.shape[0] == 0 or Z.shape[0] == 0:
        return np.zeros((X.shape[0], Z.shape[0]))
    if spec.kind == "dot":
        return accel.dot_cross(X, Z)
    if spec.kind == "cosine":
        return accel.cosine_cross(X, Z)
    return accel.rbf_cross(X, Z, spec.length_scale)


def _kernel_diag(spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    if spec.kind == "dot":
        return np.einsum("ij,ij->i", X, X)
    if spec.kind == "cosine":
        norms = np.linalg.norm(X, axis=1)
        return np.where(norms > 0.0, 1.0, 0.0)
    return np.ones(X.shape[0])


def _assemble_training(query_embedding, s_max, sample_X, sample_y):
    q = np.asarray(query_embedding, dtype=np.float64).ravel()
    X = np.asarray(sample_X, dtype=np.float64)
    if X.size == 0:
        X = np.zeros((0, q.shape[0]))
    if X.ndim != 2 or X.shape[1] != q.shape[0]:
        raise DataError(f"sample_X shape {X.shape} does not match query dim {q.shape[0]}")
    y = np.asarray(sample_y, dtype=np.float64).ravel()
    if y.shape[0] != X.shape[0]:
        raise DataError(f"{X.shape[0]} sample rows but {y.shape[0]} targets")
    train_X = np.vstack([q[None, :], X])
    train_y = np.concatenate([[float(s_max)], y])
    if not np.all(np.isfinite(train_X)) or not np.all(np.isfinite(train_y)):
        raise DataError("non-finite training inputs")
    return train_X, train_y


def _factorize(K: np.ndarray, alpha: float) -> tuple[np.ndarray, float]:
    """Cholesky of K + a*I, escalating a through the jitter ladder on failure."""
    n = K.shape[0]
    base = max(alpha, 1e-10)
    candidates = [alpha] + [base * 10.0**j for j in range(1, _JITTER_STEPS + 1)]
    for a in candidates:
        try:
            L = scipy.linalg.cholesky(K + a * np.eye(n), lower=True)
            return L, a
        except scipy.linalg.LinAlgError:
            continue
    raise DataError(
        f"kernel matrix not positive definite even with jitter up to "
        f"{candidates[-1]:.3g} (n={n})"
    )


def fit(
    kernel: KernelSpec,
    alpha: float,
    query_embedding: np.ndarray,
    s_max: float,
    sample_X: np.ndarray,
    sample_y: np.ndarray,
) -> GprModel:
    """Exact GPR fit on the query point plus R labeled passages."""
    if alpha < 0:
        raise ConfigError(f"alpha must be non-negative, got {alpha}")
    train_X, train_y = _assemble_training(query_embedding, s_max, sample_X, sample_y)
    K = kernel_matrix(kernel, train_X, train_X)
    L, alpha_used = _factorize(K, alpha)
    weights = scipy.linalg.cho_solve((L, True), train_y)
    return GprModel(
        kernel=kernel,
        alpha=alpha,
        alpha_used=alpha_used,
        train_X=train_X,
        train_y=train_y,
        chol_L=L,
        weights=weights,
    )


def predict_mean(model: GprModel, X_star: np.ndarray) -> np.ndarray:
    """Posterior mean k_*^T (K + alpha I)^{-1} y for each row of X_star."""
    X_star = np.asarray(X_star)
    if X_star.ndim != 2 or X_star.shape[1] != model.train_X.shape[1]:
        raise DataError(f"X_star shape {X_star.shape} does not match training dim")
    m = X_star.shape[0]
    out = np.empty(m)
    for a in range(0, m, accel.BLOCK_ROWS):
        b = min(a + accel.BLOCK_ROWS, m)
        block = np.ascontiguousarray(X_star[a:b], dtype=np.float64)
        out[a:b] = kernel_matrix(model.kernel, block, model.train_X) @ model.weights
    return out


def predict_var(model: GprModel, X_star: np.ndarray) -> np.ndarray:
    """Posterior variance diagonal, clamped at zero, via triangular solves."""
    X_star = np.asarray(X_star)
    if X_star.ndim != 2 or X_star.shape[1] != model.train_X.shape[1]:
        raise DataError(f"X_star shape {X_star.shape} does not match training dim")
    m = X_star.shape[0]
    out = np.empty(m)
    for a in range(0, m, accel.BLOCK_ROWS):
        b = min(a + accel.BLOCK_ROWS, m)
        block = np.ascontiguousarray(X_star[a:b], dtype=np.float64)
        k_star = kernel_matrix(model.kernel, block, model.train_X)
        v = scipy.linalg.solve_triangular(model.chol_L, k_star.T, lower=True)
        out[a:b] = _kernel_diag(model.kernel, block) - np.einsum("ij,ij->j", v, v)
    return np.maximum(out, 0.0)


def predict(model: GprModel, X_star: np.ndarray) -> Posterior:
    return Posterior(mean=predict_mean(model, X_star), variance=predict_var(model, X_star))


def log_marginal_likelihood(model: GprModel) -> float:
    """-1/2 y^T (K+aI)^{-1} y - sum(ln L_ii) - (n/2) ln 2pi, from the factor."""
    n = model.n_train
    data_fit = -0.5 * float(model.train_y @ model.weights)
    log_det = float(np.sum(np.log(np.diag(model.chol_L))))
    return data_fit - log_det - 0.5 * n * math.log(2.0 * math.pi)


def _lml_and_grad(sq_dists: np.ndarray, y: np.ndarray, alpha: float, log_ell: float):
    """LML and its derivative w.r.t. ln(ell) for the RBF kernel."""
    n = y.shape[0]
    ell = math.exp(log_ell)
    K = np.exp(-sq_dists / (2.0 * ell * ell))
    L, _ = _factorize(K, alpha)
    w = scipy.linalg.cho_solve((L, True), y)
    lml = -0.5 * float(y @ w) - float(np.sum(np.log(np.diag(L)))) - 0.5 * n * math.log(2.0 * math.pi)
    # dK/d ln(ell) = K * ||x-x'||^2 / ell^2
    dK = K * (sq_dists / (ell * ell))
    Kinv_dK = scipy.linalg.cho_solve((L, True), dK)
    grad = 0.5 * (float(w @ (dK @ w)) - float(np.trace(Kinv_dK)))
    return lml, grad


def optimize_length_scale(
    query_embedding: np.ndarray,
    s_max: float,
    sample_X: np.ndarray,
    sample_y: np.ndarray,
    alpha: float,
    init_ell: float = 1.0,
    bounds: tuple[float, float] = DEFAULT_ELL_BOUNDS,
) -> LengthScaleResult:
    """Pick the RBF length scale by bounded quasi-Newton LML maximization.

    Optimization runs in ln(ell) space with the analytic gradient; the
    fixed grid ELL_GRID (clipped to the bounds) is always evaluated too and
    the best candidate overall is returned. A single training point leaves
    the likelihood flat in ell, so init_ell is returned as-is.
    """
    lo, hi = bounds
    if not (0 < lo < hi):
        raise ConfigError(f"bounds must satisfy 0 < lo < hi, got {bounds}")
    if not (lo <= init_ell <= hi):
        raise ConfigError(f"init_ell {init_ell} outside bounds {bounds}")
    train_X, train_y = _assemble_training(query_embedding, s_max, sample_X, sample_y)
    n = train_X.shape[0]
    if n <= 1:
        model = fit(KernelSpec("rbf", init_ell), alpha, query_embedding, s_max, sample_X, sample_y)
        return LengthScaleResult(ell=init_ell, lml=log_marginal_likelihood(model), converged=True)

    x2 = np.einsum("ij,ij->i", train_X, train_X)
    sq_dists = np.maximum(x2[:, None] + x2[None, :] - 2.0 * (train_X @ train_X.T), 0.0)

    def objective(t: np.ndarray):
        lml, grad = _lml_and_grad(sq_dists, train_y, alpha, float(t[0]))
        return -lml, np.array([-grad])

    opt = scipy.optimize.minimize(
        objective,
        x0=np.array([math.log(init_ell)]),
        jac=True,
        method="L-BFGS-B",
        bounds=[(math.log(lo), math.log(hi))],
        options={"maxiter": 200},
    )
    candidates = [(math.exp(float(opt.x[0])), -float(opt.fun))]
    for g in ELL_GRID:
        ell = min(max(g, lo), hi)
        lml, _ = _lml_and_grad(sq_dists, train_y, alpha, math.log(ell))
        candidates.append((ell, lml))
    best_ell, best_lml = max(candidates, key=lambda c: c[1])
    if not opt.success:
        warnings.warn(
            f"length-scale optimizer did not converge ({opt.message}); "
            f"returning best candidate ell={best_ell:.4g}",
            RuntimeWarning,
            stacklevel=2,
        )
    return LengthScaleResult(ell=float(best_ell), lml=float(best_lml), converged=bool(opt.success))
