"""Hot numeric kernels with a numba and a pure-numpy implementation.

Everything here operates on float64 C-contiguous arrays. Callers promote
float32 storage blocks before dispatching (see gpr.predict_mean and
dense.score_all), which bounds peak memory at one block regardless of
corpus size.

Backend selection happens once at import via the GPRANK_BACKEND
environment variable:

    auto   (default) use numba when it imports, else numpy
    numba  require numba, fail loudly if unavailable
    numpy  force the pure-numpy path

The numba kernels parallelize over output rows only; every output element
is reduced inside a single thread, so results are deterministic run to
run on a fixed machine.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

BLOCK_ROWS = 8192


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

def _np_dot_cross(X, T):
    return X @ T.T


def _np_cosine_cross(X, T):
    xn = np.linalg.norm(X, axis=1)
    tn = np.linalg.norm(T, axis=1)
    denom = xn[:, None] * tn[None, :]
    out = X @ T.T
    np.divide(out, denom, out=out, where=denom > 0.0)
    out[denom == 0.0] = 0.0
    return out


def _np_rbf_cross(X, T, ell):
    x2 = np.einsum("ij,ij->i", X, X)
    t2 = np.einsum("ij,ij->i", T, T)
    sq = x2[:, None] + t2[None, :] - 2.0 * (X @ T.T)
    np.maximum(sq, 0.0, out=sq)
    sq *= -1.0 / (2.0 * ell * ell)
    return np.exp(sq, out=sq)


def _np_dot_scores(X, q):
    return X @ q


def _np_cosine_scores(X, q):
    qn = np.linalg.norm(q)
    if qn == 0.0:
        return np.zeros(X.shape[0])
    xn = np.linalg.norm(X, axis=1)
    out = X @ q
    denom = xn * qn
    np.divide(out, denom, out=out, where=denom > 0.0)
    out[denom == 0.0] = 0.0
    return out


NUMPY_IMPL = SimpleNamespace(
    name="numpy",
    dot_cross=_np_dot_cross,
    cosine_cross=_np_cosine_cross,
    rbf_cross=_np_rbf_cross,
    dot_scores=_np_dot_scores,
    cosine_scores=_np_cosine_scores,
)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

def _build_numba_impl():
    # workqueue is always bundled; avoids TBB/OMP version probing noise
    os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
    from numba import njit, prange

    @njit(parallel=True, fastmath=True, cache=True)
    def dot_cross(X, T):
        n, d = X.shape
        m = T.shape[0]
        out = np.empty((n, m))
        for i in prange(n):
            for j in range(m):
                s = 0.0
                for k in range(d):
                    s += X[i, k] * T[j, k]
                out[i, j] = s
        return out

    @njit(parallel=True, fastmath=True, cache=True)
    def cosine_cross(X, T):
        n, d = X.shape
        m = T.shape[0]
        tn = np.empty(m)
        for j in range(m):
            s = 0.0
            for k in range(d):
                s += T[j, k] * T[j, k]
            tn[j] = np.sqrt(s)
        out = np.empty((n, m))
        for i in prange(n):
            s = 0.0
            for k in range(d):
                s += X[i, k] * X[i, k]
            xn = np.sqrt(s)
            for j in range(m):
                denom = xn * tn[j]
                if denom == 0.0:
                    out[i, j] = 0.0
                else:
                    s = 0.0
                    for k in range(d):
                        s += X[i, k] * T[j, k]
                    out[i, j] = s / denom
        return out

    @njit(parallel=True, fastmath=True, cache=True)
    def rbf_cross(X, T, ell):
        n, d = X.shape
        m = T.shape[0]
        out = np.empty((n, m))
        inv = 1.0 / (2.0 * ell * ell)
        for i in prange(n):
            for j in range(m):
                s = 0.0
                for k in range(d):
                    diff = X[i, k] - T[j, k]
                    s += diff * diff
                out[i, j] = np.exp(-s * inv)
        return out

    @njit(parallel=True, fastmath=True, cache=True)
    def dot_scores(X, q):
        n, d = X.shape
        out = np.empty(n)
        for i in prange(n):
            s = 0.0
            for k in range(d):
                s += X[i, k] * q[k]
            out[i] = s
        return out

    @njit(parallel=True, fastmath=True, cache=True)
    def cosine_scores(X, q):
        n, d = X.shape
        s = 0.0
        for k in range(d):
            s += q[k] * q[k]
        qn = np.sqrt(s)
        out = np.empty(n)
        for i in prange(n):
            if qn == 0.0:
                out[i] = 0.0
                continue
            s = 0.0
            for k in range(d):
                s += X[i, k] * X[i, k]
            xn = np.sqrt(s)
            if xn == 0.0:
                out[i] = 0.0
                continue
            s = 0.0
            for k in range(d):
                s += X[i, k] * q[k]
            out[i] = s / (xn * qn)
        return out

    return SimpleNamespace(
        name="numba",
        dot_cross=dot_cross,
        cosine_cross=cosine_cross,
        rbf_cross=rbf_cross,
        dot_scores=dot_scores,
        cosine_scores=cosine_scores,
    )


def _resolve_backend():
    choice = os.environ.get("GPRANK_BACKEND", "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise RuntimeError(f"GPRANK_BACKEND must be auto|numba|numpy, got {choice!r}")
    if choice == "numpy":
        return NUMPY_IMPL
    try:
        impl = _build_numba_impl()
    except ImportError:
        if choice == "numba":
            raise RuntimeError("GPRANK_BACKEND=numba but numba is not importable")
        return NUMPY_IMPL
    return impl


_ACTIVE = _resolve_backend()


def backend_name() -> str:
    return _ACTIVE.name


def implementation(name: str | None = None):
    """Return the kernel namespace for `name` (active backend when None)."""
    if name is None:
        return _ACTIVE
    if name == "numpy":
        return NUMPY_IMPL
    if name == "numba":
        return _build_numba_impl()
    raise ValueError(f"unknown backend {name!r}")


def dot_cross(X, T):
    return _ACTIVE.dot_cross(X, T)


def cosine_cross(X, T):
    return _ACTIVE.cosine_cross(X, T)


def rbf_cross(X, T, ell):
    return _ACTIVE.rbf_cross(X, T, float(ell))


def dot_scores(X, q):
    return _ACTIVE.dot_scores(X, q)


def cosine_scores(X, q):
    return _ACTIVE.cosine_scores(X, q)
