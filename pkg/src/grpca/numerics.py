"""Dense linear-algebra core and the seeded random source.

Everything downstream (graph generation, the synthetic generator, the
solvers) draws its factorizations and randomness from here, so this module
pins down the numerical conventions once:

* factorizations delegate to LAPACK via numpy/scipy but enforce the
  package's error contracts (pivot checks, convergence mapping);
* randomness comes from numpy's PCG64 bit generator seeded through
  ``SeedSequence``; normal variates use numpy's ziggurat sampler.  Both are
  deterministic for a fixed seed across platforms and numpy versions that
  honor the stream-compatibility policy, and sub-streams are derived with
  spawn keys so parallel tasks stay reproducible regardless of scheduling.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import NoConvergence, NotPositiveDefinite, RankTooLarge

# Below this size truncated_svd uses an exact eigendecomposition of the
# smaller Gram matrix; above it, randomized subspace iteration.
_GRAM_SVD_MAX_DIM = 512
_SVD_OVERSAMPLE = 2
_SVD_POWER_STEPS = 7

# Pivots at or below this are treated as loss of positive definiteness.
_CHOLESKY_PIVOT_MIN = 1e-12


class RandomSource:
    """Deterministic random stream: PCG64 seeded via ``SeedSequence``.

    ``child(*key)`` derives an independent sub-stream from the root seed
    and an integer key path.  Identical (seed, key path) pairs always
    produce identical streams, independent of how many other streams were
    consumed in between, which is what keeps concurrent sweeps reproducible.
    """

    def __init__(self, seed: int, _spawn_key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._spawn_key = _spawn_key
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=_spawn_key))
        )

    def child(self, *key: int) -> "RandomSource":
        """Independent sub-stream addressed by an integer key path."""
        return RandomSource(self.seed, self._spawn_key + tuple(int(k) for k in key))

    def normal(self, rows: int, cols: int | None = None) -> np.ndarray:
        """Standard normal draws (numpy ziggurat)."""
        shape = (rows,) if cols is None else (rows, cols)
        return self._gen.standard_normal(shape)

    def uniform(self, size: int) -> np.ndarray:
        return self._gen.random(size)

    def integers(self, low: int, high: int, size: int | None = None):
        return self._gen.integers(low, high, size=size)

    def choice_without_replacement(self, n: int, k: int) -> np.ndarray:
        return self._gen.choice(n, size=k, replace=False)

    def signs(self, size: int) -> np.ndarray:
        """Rademacher +-1 draws."""
        return self._gen.integers(0, 2, size=size) * 2.0 - 1.0

    def derived_seed(self) -> int:
        """A fresh 64-bit integer seed derived from this stream's identity."""
        ss = np.random.SeedSequence(self.seed, spawn_key=self._spawn_key)
        return int(ss.generate_state(1, np.uint64)[0])


def standard_normal(rs: RandomSource, rows: int, cols: int) -> np.ndarray:
    """Matrix of i.i.d. N(0, 1) draws from ``rs``."""
    return rs.normal(rows, cols)


def _require_square_symmetric(a: np.ndarray, tol: float, what: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{what}: expected a square matrix, got shape {a.shape}")
    if a.size and np.max(np.abs(a - a.T)) > tol:
        raise ValueError(f"{what}: matrix is not symmetric within {tol:g}")
    return a


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower-triangular factor L with L @ L.T == a, no pivoting.

    Raises
    ------
    NotPositiveDefinite
        If any pivot is <= 1e-12.  The diagonal of L holds the square
        roots of the pivots, so the check is exact.
    """
    a = _require_square_symmetric(a, 1e-10, "cholesky")
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    if np.min(np.diag(lower)) ** 2 <= _CHOLESKY_PIVOT_MIN:
        raise NotPositiveDefinite("pivot <= 1e-12")
    return lower


class EigenDecomposition(NamedTuple):
    values: np.ndarray   # ascending
    vectors: np.ndarray  # orthonormal columns


def symmetric_eigen(a: np.ndarray) -> EigenDecomposition:
    """Full eigendecomposition of a symmetric matrix, values ascending.

    The input is symmetrized as (A + A.T)/2 first, which absorbs up to
    ~1e-10 of accumulated floating-point asymmetry.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"symmetric_eigen: expected square matrix, got {a.shape}")
    sym = 0.5 * (a + a.T)
    try:
        values, vectors = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return EigenDecomposition(values, vectors)


def _complete_orthonormal(u: np.ndarray, want: int) -> np.ndarray:
    """Append deterministic orthonormal columns until u has ``want`` of them."""
    n, have = u.shape
    cols = [u[:, i] for i in range(have)]
    basis_idx = 0
    while len(cols) < want and basis_idx < n:
        v = np.zeros(n)
        v[basis_idx] = 1.0
        basis_idx += 1
        for c in cols:
            v -= (c @ v) * c
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            cols.append(v / norm)
    return np.column_stack(cols)


def truncated_svd(x: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Best rank-r factorization: (U, s, V) with x ~= U @ diag(s) @ V.T.

    For min(n, p) <= 512 this is exact, via an eigendecomposition of the
    smaller Gram matrix.  Larger problems use randomized subspace iteration
    (2 oversampling vectors, 7 power steps) with a fixed internal seed, so
    the result is still deterministic.
    """
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    if not 1 <= r <= min(n, p):
        raise RankTooLarge(f"rank {r} not in [1, {min(n, p)}]")

    if min(n, p) <= _GRAM_SVD_MAX_DIM:
        if p <= n:
            gram = x.T @ x
            vals, vecs = np.linalg.eigh(gram)
            order = np.argsort(vals)[::-1][:r]
            s = np.sqrt(np.clip(vals[order], 0.0, None))
            v = vecs[:, order]
            u = _left_vectors(x, v, s)
        else:
            gram = x @ x.T
            vals, vecs = np.linalg.eigh(gram)
            order = np.argsort(vals)[::-1][:r]
            s = np.sqrt(np.clip(vals[order], 0.0, None))
            u = vecs[:, order]
            v = _left_vectors(x.T, u, s)
        return u, s, v

    # Randomized range finder; fixed seed keeps golden files stable.
    rs = RandomSource(0x5D1CE)
    q = min(r + _SVD_OVERSAMPLE, min(n, p))
    omega = rs.normal(p, q)
    y, _ = np.linalg.qr(x @ omega)
    for _ in range(_SVD_POWER_STEPS):
        z, _ = np.linalg.qr(x.T @ y)
        y, _ = np.linalg.qr(x @ z)
    b = y.T @ x
    ub, s, vt = np.linalg.svd(b, full_matrices=False)
    return y @ ub[:, :r], s[:r], vt[:r].T


def _left_vectors(x: np.ndarray, v: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Left singular vectors x @ v / s, completing columns where s ~ 0."""
    scale = s[0] if s.size and s[0] > 0 else 1.0
    keep = s > 1e-12 * max(scale, 1.0)
    u = np.zeros((x.shape[0], len(s)))
    u[:, keep] = (x @ v[:, keep]) / s[keep]
    if not np.all(keep):
        filled = _complete_orthonormal(u[:, keep], len(s))
        u[:, ~keep] = filled[:, int(np.sum(keep)):]
    return u


def spd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a @ x = b for SPD a via Cholesky."""
    lower = cholesky(a)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != lower.shape[0]:
        raise ValueError(f"spd_solve: incompatible shapes {a.shape} vs {b.shape}")
    return cho_solve((lower, True), b)


def solve_upper_triangular(r: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve r @ x = b with r upper-triangular."""
    return solve_triangular(r, b, lower=False)


def power_iteration(m: np.ndarray, max_iter: int = 500, tol: float = 1e-12) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    For PSD input the norm ratio ||m v|| / ||v|| converges to the top
    eigenvalue, so each iteration needs a single matvec.
    """
    m = np.asarray(m, dtype=float)
    dim = m.shape[0]
    if dim == 0:
        return 0.0
    # Deterministic start with full support; never parallel to a single mode.
    v = np.cos(np.arange(1.0, dim + 1.0))
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = m @ v
        new_lam = float(np.linalg.norm(w))
        if new_lam == 0.0:
            return 0.0
        v = w / new_lam
        if abs(new_lam - lam) <= tol * max(1.0, abs(new_lam)):
            break
        lam = new_lam
    return lam
