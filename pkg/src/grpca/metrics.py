"""Evaluation suite: selectivity, alignment with optimal matching, global R2.

Selectivity projects test data and its reconstruction onto the planted
"true" (smooth) and "nuisance" (spiky) subspaces and compares the variance
explained within each; alignment scores the optimal one-to-one matching of
absolute cosine similarities between estimated and true loading columns.

The matching is solved exactly with a shortest-augmenting-path assignment
solver (rectangular problems supported), so alignment never depends on a
greedy heuristic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyLoadings,
    RankDeficient,
    ZeroSubspaceVariance,
    ZeroVariance,
)
from .graphs import FeatureGraph, laplacian_quadratic

_RANK_RCOND = 1e-10


def projector(v: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto span(V) for full-column-rank V."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 2 or v.shape[1] == 0:
        raise RankDeficient(f"projector needs a p x k matrix with k >= 1, got {v.shape}")
    u, s, _ = np.linalg.svd(v, full_matrices=False)
    if s[0] <= 0 or s[-1] <= _RANK_RCOND * s[0]:
        raise RankDeficient(f"columns are rank deficient (singular values {s})")
    return u @ u.T


def selectivity(
    x_te: np.ndarray,
    xhat_te: np.ndarray,
    v_star: np.ndarray,
    v_nu: np.ndarray,
) -> tuple[float, float, float]:
    """(R2_true, R2_nuis, delta): variance explained inside each planted subspace."""
    r2_true = _subspace_r2(x_te, xhat_te, projector(v_star))
    r2_nuis = _subspace_r2(x_te, xhat_te, projector(v_nu))
    return r2_true, r2_nuis, r2_true - r2_nuis


def _subspace_r2(x_te, xhat_te, pi) -> float:
    x_te = np.asarray(x_te, dtype=float)
    xhat_te = np.asarray(xhat_te, dtype=float)
    if x_te.shape != xhat_te.shape:
        raise DimensionMismatch(f"{x_te.shape} vs {xhat_te.shape}")
    proj = x_te @ pi
    denom = float(np.sum(proj**2))
    if denom <= 0.0:
        raise ZeroSubspaceVariance("test data has no variance inside the subspace")
    return 1.0 - float(np.sum((proj - xhat_te @ pi) ** 2)) / denom


def r2_global(x_te: np.ndarray, xhat_te: np.ndarray) -> float:
    """1 - ||X - Xhat||_F^2 / ||X||_F^2 on the test matrix."""
    x_te = np.asarray(x_te, dtype=float)
    xhat_te = np.asarray(xhat_te, dtype=float)
    if x_te.shape != xhat_te.shape:
        raise DimensionMismatch(f"{x_te.shape} vs {xhat_te.shape}")
    denom = float(np.sum(x_te**2))
    if denom <= 0.0:
        raise ZeroVariance("test data has zero Frobenius norm")
    return 1.0 - float(np.sum((x_te - xhat_te) ** 2)) / denom


def laplacian_energy(graph: FeatureGraph, v: np.ndarray) -> float:
    """tr(V^T L V); re-export of the graph quadratic form under the report's name."""
    return laplacian_quadratic(graph, v)


# --- optimal assignment -----------------------------------------------------

def solve_assignment(sim: np.ndarray) -> list[tuple[int, int]]:
    """Max-total-similarity one-to-one matching of size min(a, b), exact.

    Shortest-augmenting-path algorithm on the rectangular problem; returns
    (row, col) pairs sorted by row.
    """
    sim = np.asarray(sim, dtype=float)
    if sim.ndim != 2 or sim.size == 0:
        raise ValueError(f"similarity must be a non-empty 2-d matrix, got {sim.shape}")
    if not np.all(np.isfinite(sim)):
        raise ValueError("similarity entries must be finite")
    a, b = sim.shape
    transposed = a > b
    cost = -(sim.T if transposed else sim)
    row4col = _lsap_min(cost)
    pairs = [(int(i), int(j)) for j, i in enumerate(row4col) if i >= 0]
    if transposed:
        pairs = [(j, i) for i, j in pairs]
    return sorted(pairs)


def _lsap_min(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost assignment of all rows (nr <= nc); returns row4col."""
    nr, nc = cost.shape
    u = np.zeros(nr)
    v = np.zeros(nc)
    col4row = np.full(nr, -1, dtype=int)
    row4col = np.full(nc, -1, dtype=int)
    for cur_row in range(nr):
        shortest = np.full(nc, np.inf)
        path = np.full(nc, -1, dtype=int)
        sr = np.zeros(nr, dtype=bool)
        sc = np.zeros(nc, dtype=bool)
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink == -1:
            sr[i] = True
            free = np.flatnonzero(~sc)
            reduced = min_val + cost[i, free] - u[i] - v[free]
            better = reduced < shortest[free]
            shortest[free[better]] = reduced[better]
            path[free[better]] = i
            j = free[int(np.argmin(shortest[free]))]
            min_val = shortest[j]
            sc[j] = True
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
        u[cur_row] += min_val
        others = sr.copy()
        others[cur_row] = False
        idx = np.flatnonzero(others)
        u[idx] += min_val - shortest[col4row[idx]]
        scols = np.flatnonzero(sc)
        v[scols] -= min_val - shortest[scols]
        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            col4row[i], j = j, col4row[i]
            if i == cur_row:
                break
    return row4col


def alignment(
    v_hat: np.ndarray, v_star: np.ndarray
) -> tuple[float, list[tuple[int, int, float]]]:
    """Mean |cosine| over the optimal matching of estimated to true columns.

    Columns are renormalized defensively; an all-zero column is similar to
    nothing.  Unmatched components contribute zero to the total; the score
    divides by min(r_star, r_hat).  Exact similarity ties break toward the
    lowest (true_idx, est_idx).
    """
    v_hat = np.asarray(v_hat, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    if v_hat.ndim != 2 or v_star.ndim != 2 or v_hat.shape[1] == 0 or v_star.shape[1] == 0:
        raise EmptyLoadings("both loading matrices need at least one column")
    if v_hat.shape[0] != v_star.shape[0]:
        raise DimensionMismatch(f"{v_hat.shape} vs {v_star.shape}")

    def unit(m):
        norms = np.linalg.norm(m, axis=0)
        return m / np.where(norms > 0, norms, 1.0)

    sim = np.abs(unit(v_star).T @ unit(v_hat))  # r_star x r_hat
    a, b = sim.shape
    # infinitesimal preference for low indices; reported totals use raw sims
    bias = 1e-12 * (1.0 + sim.max())
    rows = np.arange(a)[:, None]
    cols = np.arange(b)[None, :]
    biased = sim + bias * ((a - rows) * b + (b - cols)) / (a * b + 1.0)
    pairs = solve_assignment(biased)
    matching = [(k, j, float(sim[k, j])) for k, j in pairs]
    total = sum(s for _, _, s in matching)
    return total / min(a, b), matching


# --- report -----------------------------------------------------------------

CSV_COLUMNS = [
    "method",
    "regime",
    "topology",
    "achieved_density",
    "seed",
    "fold",
    "selectivity",
    "r2_true",
    "r2_nuis",
    "alignment",
    "r2_global",
    "laplacian_energy",
    "model_converged",
    "precision_converged",
    "failed",
    "failure",
]


@dataclass
class MetricsReport:
    """One scored (method, topology, density, seed, fold) cell."""

    method: str
    regime: str
    topology: str
    achieved_density: float
    seed: int
    fold: int
    selectivity: float = float("nan")
    r2_true: float = float("nan")
    r2_nuis: float = float("nan")
    alignment: float = float("nan")
    r2_global: float = float("nan")
    laplacian_energy: float = float("nan")
    matching: list[tuple[int, int, float]] = field(default_factory=list)
    model_converged: bool = True
    precision_converged: bool = True
    failed: bool = False
    failure: str = ""

    def to_csv_row(self) -> str:
        vals = [
            self.method,
            self.regime,
            self.topology,
            _fmt(self.achieved_density),
            str(self.seed),
            str(self.fold),
            _fmt(self.selectivity),
            _fmt(self.r2_true),
            _fmt(self.r2_nuis),
            _fmt(self.alignment),
            _fmt(self.r2_global),
            _fmt(self.laplacian_energy),
            str(int(self.model_converged)),
            str(int(self.precision_converged)),
            str(int(self.failed)),
            self.failure.replace(",", ";"),
        ]
        return ",".join(vals)

    @classmethod
    def from_csv_row(cls, row: str) -> "MetricsReport":
        parts = row.rstrip("\n").split(",")
        if len(parts) != len(CSV_COLUMNS):
            raise ValueError(f"expected {len(CSV_COLUMNS)} fields, got {len(parts)}")
        return cls(
            method=parts[0],
            regime=parts[1],
            topology=parts[2],
            achieved_density=float(parts[3]),
            seed=int(parts[4]),
            fold=int(parts[5]),
            selectivity=float(parts[6]),
            r2_true=float(parts[7]),
            r2_nuis=float(parts[8]),
            alignment=float(parts[9]),
            r2_global=float(parts[10]),
            laplacian_energy=float(parts[11]),
            model_converged=bool(int(parts[12])),
            precision_converged=bool(int(parts[13])),
            failed=bool(int(parts[14])),
            failure=parts[15],
        )

    def to_json(self) -> str:
        payload = {col: getattr(self, col) for col in CSV_COLUMNS}
        payload["matching"] = [[k, j, s] for k, j, s in self.matching]
        return json.dumps(payload, sort_keys=True)

    def sort_key(self):
        return (self.method, self.topology, self.achieved_density, self.seed, self.fold)


def _fmt(x: float) -> str:
    return "nan" if x != x else f"{x:.12g}"
