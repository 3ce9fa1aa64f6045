"""Ground-state eigensolvers for real-symmetric operators.

Three routes, kept deliberately independent so they can cross-check each other:

* :func:`ground_state` / :func:`lowest_two`: Lanczos iteration with full
  reorthogonalization (two classical Gram-Schmidt passes per step), seeded
  start vector, residual-based stopping, warm restarts on basis exhaustion
  and reseeding on stagnation.  The default route for fiber-sized problems.
* :func:`davidson_ground`: diagonally preconditioned subspace iteration with
  thick restarts.  Used for the coupled small-lambda operators, whose
  diagonal spread makes plain Krylov iteration impractically slow; see the
  solver notes in the README.
* :func:`dense_ground` / :func:`dense_spectrum`: an in-house Householder
  tridiagonalization followed by implicit-shift QL sweeps.  Slower than the
  iterative routes and used only in tests, certificates and oracle checks.

Small dense/tridiagonal subproblems inside the iterative solvers use LAPACK
via scipy; the dense oracle route never does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import DomainError, SolverError

try:
    from numba import njit as _njit
except ImportError:      # pragma: no cover - numba is a declared dependency
    def _njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not (len(args) == 1 and callable(args[0])) else args[0]

__all__ = [
    "EigResult",
    "PairResult",
    "ground_state",
    "lowest_two",
    "davidson_ground",
    "dense_ground",
    "dense_spectrum",
    "ritz_ground_sequence",
]


@dataclass
class EigResult:
    """One converged extremal eigenpair."""

    value: float
    vector: np.ndarray
    residual: float
    iterations: int
    matvecs: int
    restarts: int
    method: str


@dataclass
class PairResult:
    """Two lowest eigenpairs with the spectral gap between them."""

    values: tuple
    vectors: tuple
    gap: float
    degenerate: bool
    residuals: tuple


def _as_operator(op):
    """Adapt an operator-like object to (matvec, dim, diagonal_fn)."""
    if hasattr(op, "matvec") and hasattr(op, "dim"):
        return op.matvec, op.dim, getattr(op, "diagonal", None)
    if sp.issparse(op):
        n = op.shape[0]
        csr = op.tocsr()
        return (lambda x: csr @ x), n, csr.diagonal
    arr = np.asarray(op, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DomainError("operator must be square")
    return (lambda x: arr @ x), arr.shape[0], (lambda: np.diag(arr).copy())


def _project_out(w, V, k, deflate):
    """One classical Gram-Schmidt pass of w against V[:k] and deflate."""
    if k > 0:
        w -= V[:k].T @ (V[:k] @ w)
    for u in deflate:
        w -= (u @ w) * u
    return w


def _lowest_ritz(alphas, betas):
    """Lowest eigenpair of the Lanczos tridiagonal matrix."""
    k = len(alphas)
    if k == 1:
        return float(alphas[0]), np.ones(1)
    d = np.asarray(alphas, dtype=float)
    e = np.asarray(betas[: k - 1], dtype=float)
    vals, vecs = sla.eigh_tridiagonal(d, e, select="i", select_range=(0, 0))
    return float(vals[0]), vecs[:, 0]


def ground_state(op, tol: float = 1e-9, seed: int = 0, *, max_basis: int = 300,
                 max_restarts: int = 10, deflate=(), v0=None,
                 check_every: int = 5) -> EigResult:
    """Lowest eigenpair by Lanczos iteration with full reorthogonalization.

    The start vector is drawn from a generator seeded with `seed` (or taken
    from `v0`).  Convergence is declared when the explicitly computed
    residual ||A x - theta x|| falls below tol * max(1, |theta|).  When the
    basis fills up without convergence the iteration restarts from the
    current Ritz vector; when restarts stagnate the start is reseeded.
    Vectors in `deflate` are projected out throughout, which realizes
    deflation for interior runs of :func:`lowest_two`.

    Raises SolverError (carrying the best value/residual seen) on failure.
    """
    matvec, n, _ = _as_operator(op)
    rng = np.random.default_rng(seed)
    max_basis = int(min(max_basis, n))
    if max_basis < 1:
        raise DomainError("operator dimension must be >= 1")
    deflate = [np.asarray(u, dtype=float) for u in deflate]

    def fresh_start():
        return rng.standard_normal(n)

    start = np.array(v0, dtype=float, copy=True) if v0 is not None else fresh_start()
    best_val, best_vec, best_res = math.inf, None, math.inf
    matvecs = 0
    iterations = 0
    prev_best_res = math.inf

    for restart in range(max_restarts + 1):
        v = start.copy()
        for _ in range(2):
            v = _project_out(v, np.empty((0, n)), 0, deflate)
        nv = np.linalg.norm(v)
        if nv < 1e-14:
            start = fresh_start()
            continue
        v /= nv
        V = np.empty((max_basis, n))
        V[0] = v
        alphas, betas = [], []
        k = 0
        exhausted = False
        while k < max_basis:
            w = matvec(V[k])
            matvecs += 1
            a = float(V[k] @ w)
            alphas.append(a)
            w = w - a * V[k]
            if k > 0:
                w -= betas[-1] * V[k - 1]
            for _ in range(2):
                w = _project_out(w, V, k + 1, deflate)
            b = float(np.linalg.norm(w))
            k += 1
            iterations += 1
            scale = max(1.0, max(abs(x) for x in alphas), max((abs(x) for x in betas), default=0.0))
            breakdown = b <= 1e-14 * scale
            if breakdown or k % check_every == 0 or k == max_basis:
                theta, y = _lowest_ritz(alphas, betas)
                est = b * abs(y[-1])
                if est <= tol * max(1.0, abs(theta)) or breakdown:
                    x = V[:k].T @ y
                    x /= np.linalg.norm(x)
                    r = matvec(x) - theta * x
                    matvecs += 1
                    res = float(np.linalg.norm(r))
                    if res < best_res:
                        best_val, best_vec, best_res = theta, x, res
                    if res <= tol * max(1.0, abs(theta)):
                        return EigResult(theta, x, res, iterations, matvecs,
                                         restart, "lanczos")
                    if breakdown:
                        # invariant subspace that misses the ground state
                        exhausted = True
                        break
            if k < max_basis:
                if b <= 1e-14 * scale:
                    exhausted = True
                    break
                betas.append(b)
                V[k] = w / b
        # restart preparation
        theta, y = _lowest_ritz(alphas, betas)
        x = V[:len(alphas)].T @ y
        x /= np.linalg.norm(x)
        r = matvec(x) - theta * x
        matvecs += 1
        res = float(np.linalg.norm(r))
        if res < best_res:
            best_val, best_vec, best_res = theta, x, res
        if res <= tol * max(1.0, abs(theta)):
            return EigResult(theta, x, res, iterations, matvecs, restart, "lanczos")
        stagnated = res > 0.5 * prev_best_res
        prev_best_res = min(prev_best_res, res)
        start = fresh_start() if (exhausted or stagnated) else x
    raise SolverError(
        f"Lanczos failed to reach tol={tol} within {max_restarts} restarts "
        f"(best residual {best_res:.3e})",
        best_value=best_val,
        best_residual=best_res,
    )


def lowest_two(op, tol: float = 1e-9, seed: int = 0, **kwargs) -> PairResult:
    """Two lowest eigenpairs; the second comes from a deflated Lanczos run.

    The gap is the difference of the two Ritz values.  The pair is flagged
    degenerate when the gap is below max(10 tol, 1e-10) * max(1, |E0|),
    in which case downstream consumers must not rely on a unique ground
    direction.
    """
    first = ground_state(op, tol=tol, seed=seed, **kwargs)
    second = ground_state(op, tol=tol, seed=seed + 1, deflate=[first.vector], **kwargs)
    gap = second.value - first.value
    degenerate = gap < max(10.0 * tol, 1e-10) * max(1.0, abs(first.value))
    return PairResult(
        values=(first.value, second.value),
        vectors=(first.vector, second.vector),
        gap=gap,
        degenerate=degenerate,
        residuals=(first.residual, second.residual),
    )


def davidson_ground(op, tol: float = 1e-9, seed: int = 0, *, max_subspace: int = 40,
                    max_iters: int = 600, restart_keep: int = 4, v0=None) -> EigResult:
    """Lowest eigenpair by diagonally preconditioned subspace iteration.

    Expansion vectors solve (diag(A) - theta) t = -r approximately, which
    tames operators whose diagonal spread is many orders of magnitude larger
    than the spectral gap (the coupled small-lambda assemblies).  The search
    space is kept orthonormal with two Gram-Schmidt passes and compressed to
    the best `restart_keep` Ritz vectors when full.  Deterministic for fixed
    seed and start vector.
    """
    matvec, n, diag_fn = _as_operator(op)
    if diag_fn is None:
        raise DomainError("davidson_ground needs an operator exposing its diagonal")
    diag = np.asarray(diag_fn(), dtype=float)
    rng = np.random.default_rng(seed)
    max_subspace = int(min(max_subspace, n))
    restart_keep = int(min(restart_keep, max_subspace - 1)) if max_subspace > 1 else 1

    V = np.empty((max_subspace, n))
    AV = np.empty((max_subspace, n))
    H = np.zeros((max_subspace, max_subspace))

    # Start from the lowest-diagonal coordinate directions (plus the caller's
    # vector, if any).  For strongly diagonally dominant operators the ground
    # vector lives there; a purely random start can lock onto an interior
    # eigenpair whose residual passes the test.
    starts = []
    if v0 is not None:
        w = np.array(v0, dtype=float, copy=True)
        if np.linalg.norm(w) > 1e-14:
            starts.append(w)
    n_seed = min(4, n, max_subspace)
    for i in np.argsort(diag, kind="stable")[:n_seed]:
        e_i = np.zeros(n)
        e_i[i] = 1.0
        starts.append(e_i)
    k = 0
    for w in starts:
        if k >= max_subspace:
            break
        for _ in range(2):
            w -= V[:k].T @ (V[:k] @ w)
        nw = np.linalg.norm(w)
        if nw < 1e-12:
            continue
        V[k] = w / nw
        AV[k] = matvec(V[k])
        H[k, :k] = V[k] @ AV[:k].T
        H[:k, k] = H[k, :k]
        H[k, k] = V[k] @ AV[k]
        k += 1
    if k == 0:
        V[0] = rng.standard_normal(n)
        V[0] /= np.linalg.norm(V[0])
        AV[0] = matvec(V[0])
        H[0, 0] = V[0] @ AV[0]
        k = 1
    matvecs = k
    best_val, best_vec, best_res = math.inf, None, math.inf

    for it in range(max_iters):
        vals, vecs = sla.eigh(H[:k, :k])
        theta = float(vals[0])
        y = vecs[:, 0]
        x = V[:k].T @ y
        ax = AV[:k].T @ y
        r = ax - theta * x
        res = float(np.linalg.norm(r))
        if res < best_res:
            best_val, best_vec, best_res = theta, x, res
        if res <= tol * max(1.0, abs(theta)):
            return EigResult(theta, x, res, it, matvecs, 0, "davidson")
        if k == max_subspace:
            # thick restart: keep the lowest Ritz vectors
            keep = min(restart_keep, k)
            X = (V[:k].T @ vecs[:, :keep]).T
            AX = (AV[:k].T @ vecs[:, :keep]).T
            V[:keep], AV[:keep] = X, AX
            H[:keep, :keep] = np.diag(vals[:keep])
            k = keep
        denom = diag - theta
        floor = 1e-8 * max(1.0, abs(theta))
        denom = np.where(np.abs(denom) < floor, np.copysign(floor, denom), denom)
        t = r / denom
        for _ in range(2):
            t -= V[:k].T @ (V[:k] @ t)
        nt = np.linalg.norm(t)
        if nt < 1e-12:
            t = rng.standard_normal(n)
            for _ in range(2):
                t -= V[:k].T @ (V[:k] @ t)
            nt = np.linalg.norm(t)
        V[k] = t / nt
        AV[k] = matvec(V[k])
        matvecs += 1
        H[k, :k] = V[k] @ AV[:k].T
        H[:k, k] = H[k, :k]
        H[k, k] = V[k] @ AV[k]
        k += 1
    raise SolverError(
        f"Davidson failed to reach tol={tol} within {max_iters} iterations "
        f"(best residual {best_res:.3e})",
        best_value=best_val,
        best_residual=best_res,
        best_vector=best_vec,
    )


def ritz_ground_sequence(op, steps: int, seed: int = 0) -> np.ndarray:
    """Ground Ritz value after each Lanczos step (no restarts, no stopping).

    By Cauchy interlacing the sequence is non-increasing; tests rely on it.
    """
    matvec, n, _ = _as_operator(op)
    rng = np.random.default_rng(seed)
    steps = int(min(steps, n))
    V = np.empty((steps, n))
    v = rng.standard_normal(n)
    V[0] = v / np.linalg.norm(v)
    alphas, betas = [], []
    out = []
    for k in range(steps):
        w = matvec(V[k])
        a = float(V[k] @ w)
        alphas.append(a)
        w = w - a * V[k]
        if k > 0:
            w -= betas[-1] * V[k - 1]
        for _ in range(2):
            w = _project_out(w, V, k + 1, ())
        out.append(_lowest_ritz(alphas, betas)[0])
        b = float(np.linalg.norm(w))
        if b <= 1e-14 * max(1.0, max(abs(x) for x in alphas)):
            break
        if k + 1 < steps:
            betas.append(b)
            V[k + 1] = w / b
    return np.asarray(out)


# ---------------------------------------------------------------------------
# dense oracle: Householder tridiagonalization + implicit-shift QL
# ---------------------------------------------------------------------------

def _householder_tridiagonalize(A):
    """Reduce a symmetric matrix to tridiagonal form.

    Returns (d, e, reflectors) with d the diagonal, e the subdiagonal, and
    reflectors the list of unit Householder vectors in application order.
    """
    T = np.array(A, dtype=float, copy=True)
    n = T.shape[0]
    d = np.empty(n)
    e = np.empty(max(n - 1, 0))
    reflectors = []
    for kcol in range(n - 2):
        a = T[kcol + 1:, kcol].copy()
        norm_a = np.linalg.norm(a)
        if norm_a == 0.0 or np.linalg.norm(a[1:]) <= 1e-300:
            e[kcol] = a[0]
            reflectors.append(None)
            continue
        alpha = -math.copysign(norm_a, a[0] if a[0] != 0 else 1.0)
        vvec = a
        vvec[0] -= alpha
        vvec /= np.linalg.norm(vvec)
        B = T[kcol + 1:, kcol + 1:]
        w = B @ vvec
        tau = float(vvec @ w)
        u2 = 2.0 * (w - tau * vvec)
        B -= np.outer(vvec, u2) + np.outer(u2, vvec)
        T[kcol + 1:, kcol + 1:] = B
        e[kcol] = alpha
        T[kcol + 1, kcol] = alpha
        T[kcol + 2:, kcol] = 0.0
        reflectors.append(vvec)
    if n >= 2:
        e[n - 2] = T[n - 1, n - 2]
    d[:] = np.diag(T)
    return d, e, reflectors


@_njit(cache=True)
def _ql_eigenvalues(d, e):     # pragma: no cover - exercised via wrappers
    """Implicit-shift QL sweeps on a symmetric tridiagonal matrix, in place.

    d holds the diagonal, e the subdiagonal in e[0:n-1] with e[n-1] scratch.
    Returns 0 on success, -1 when a sweep budget is exhausted.
    """
    n = d.shape[0]
    e[n - 1] = 0.0
    for l in range(n):
        iters = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= 1e-16 * dd:
                    break
                m += 1
            if m == l:
                break
            iters += 1
            if iters > 64:
                return -1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            sgn = r if g >= 0.0 else -r
            g = d[m] - d[l] + e[l] / (g + sgn)
            s = 1.0
            c = 1.0
            p = 0.0
            underflow = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return 0


def _tridiagonal_eigenvalues(d, e):
    dd = np.array(d, dtype=float, copy=True)
    n = dd.shape[0]
    ee = np.zeros(n)
    if n > 1:
        ee[: n - 1] = e[: n - 1]
    if n == 1:
        return dd
    status = _ql_eigenvalues(dd, ee)
    if status != 0:
        raise SolverError("QL iteration failed to converge")
    return np.sort(dd)


def dense_spectrum(A) -> np.ndarray:
    """All eigenvalues of a symmetric matrix, ascending (in-house route)."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError("dense_spectrum needs a square matrix")
    if A.shape[0] > 2000:
        raise DomainError("dense oracle is limited to dimension <= 2000")
    if not np.allclose(A, A.T, atol=1e-10 * max(1.0, float(np.abs(A).max()))):
        raise DomainError("dense_spectrum needs a symmetric matrix")
    n = A.shape[0]
    if n == 1:
        return np.array([A[0, 0]], dtype=float)
    d, e, _ = _householder_tridiagonalize(A)
    return _tridiagonal_eigenvalues(d, e)


def _tridiagonal_ground_vector(d, e, value):
    """Inverse iteration for the eigenvector of a tridiagonal matrix."""
    n = d.shape[0]
    scale = max(1.0, float(np.max(np.abs(d))), float(np.max(np.abs(e))) if n > 1 else 0.0)
    shift = value
    ab = np.zeros((3, n))
    x = np.full(n, 1.0 / math.sqrt(n))
    for attempt in range(4):
        sig = shift - (10.0 ** attempt) * 1e-12 * scale
        ab[0, 1:] = e[: n - 1]
        ab[1, :] = d - sig
        ab[2, :-1] = e[: n - 1]
        try:
            for _ in range(3):
                x = sla.solve_banded((1, 1), ab, x)
                x /= np.linalg.norm(x)
        except np.linalg.LinAlgError:
            continue
        resid = np.empty(n)
        resid[:] = (d - value) * x
        if n > 1:
            resid[:-1] += e[: n - 1] * x[1:]
            resid[1:] += e[: n - 1] * x[:-1]
        if np.linalg.norm(resid) <= 1e-8 * scale:
            return x
    return x


def dense_ground(A, tol: float = 1e-10) -> EigResult:
    """Ground eigenpair of a symmetric matrix via the in-house dense route.

    Used only in tests, certificates and oracle checks; production solves go
    through the iterative routes.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError("dense_ground needs a square matrix")
    if A.shape[0] > 2000:
        raise DomainError("dense oracle is limited to dimension <= 2000")
    n = A.shape[0]
    if n == 1:
        return EigResult(float(A[0, 0]), np.ones(1), 0.0, 1, 0, 0, "dense")
    d, e, reflectors = _householder_tridiagonalize(A)
    vals = _tridiagonal_eigenvalues(d, e)
    value = float(vals[0])
    x = _tridiagonal_ground_vector(d, e, value)
    # undo the Householder similarity, last reflector first
    for kcol in range(len(reflectors) - 1, -1, -1):
        vvec = reflectors[kcol]
        if vvec is None:
            continue
        seg = x[kcol + 1:]
        seg -= 2.0 * vvec * (vvec @ seg)
    x /= np.linalg.norm(x)
    resid = float(np.linalg.norm(A @ x - value * x))
    return EigResult(value, x, resid, n, 0, 0, "dense")
