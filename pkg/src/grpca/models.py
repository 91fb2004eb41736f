"""Low-rank factor models behind one fit / transform / reconstruct interface.

The graph-regularized solver minimizes

    0.5 * ||X - U V^T||_F^2
      + alpha * sum_j ||V[j, :]||_1 / (1 + d_j)
      + (lam / 2) * tr(V^T L V)

subject to ||V[:, k]||_2 = 1 for every column, by alternating
minimization: the score update U = X V (V^T V)^-1 is the exact minimizer
given V, and the loading update runs a few proximal gradient steps on the
smooth part (gradient V (U^T U) - X^T U + lam L V, step size
1/(||U^T U||_2 + lam ||L||_2)) followed by the exact prox of the nonsmooth
part on the sphere: a row-weighted entrywise soft-threshold, then
renormalization of each column (see _prox_loadings for why that composition
is the exact constrained prox).  Both pieces decrease the objective, so the
recorded trace is non-increasing; that property is checked on every fit.

The unit-norm constraint is what makes the problem well-posed: without it
the objective is scale-degenerate (V -> eps V, U -> U / eps leaves the
reconstruction untouched and drives both penalties to zero), so an
unconstrained minimizer would simply wash the regularization out.  Pinning
loadings to unit length makes the scores carry the component scales, the
same convention the planted loadings follow.

SparsePCA here is the same factorization with unit row weights and lam = 0,
which isolates exactly the two ingredients the graph adds (degree weighting
and the Laplacian term).  PCA is the plain truncated SVD.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateLoadings, DimensionMismatch, NotPositiveDefinite, RankTooLarge
from .graphs import FeatureGraph, laplacian_quadratic
from .numerics import RandomSource, cholesky, power_iteration, spd_solve, truncated_svd
from .datagen import soft_threshold

# Slack for the monotone-descent check: 1e-9 absolute per the contract, plus
# a term covering pairwise-summation noise when n*p reaches ~10^6.
_MONOTONE_SLACK = 1e-9


@dataclass(frozen=True)
class GrpcaConfig:
    """Solver settings; ``lam`` is the Laplacian weight, ``alpha`` the l1 weight.

    ``score_ridge`` shrinks the score update to
    U = X V (V^T V + mu * tr(V^T V)/r * I)^-1.  Without it, pairs of
    near-duplicate loading columns with huge opposite-signed scores act as
    un-normalized difference directions that capture arbitrary variance
    while costing almost no penalty; the ridge makes such pairs expensive
    and is standard practice for scoring sparse components.
    """

    r: int
    alpha: float
    lam: float = 0.0
    max_outer: int = 500
    tol_rel_obj: float = 1e-7
    inner_steps: int = 20
    init: str = "svd"
    init_seed: int = 0
    score_ridge: float = 0.2

    def __post_init__(self):
        if self.r < 1:
            raise ValueError(f"rank must be >= 1, got {self.r}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.init not in ("svd", "random"):
            raise ValueError(f"init must be 'svd' or 'random', got {self.init!r}")
        if self.score_ridge < 0:
            raise ValueError(f"score_ridge must be >= 0, got {self.score_ridge}")


@dataclass
class FactorModel:
    u: np.ndarray
    v: np.ndarray
    objective_trace: list[float]
    converged: bool
    iterations: int
    method: str  # pca | sparse_pca | grpca
    graph_used: FeatureGraph | None = None
    all_zero_loadings: bool = False
    config: GrpcaConfig | None = None


def objective(
    x: np.ndarray,
    u: np.ndarray,
    v: np.ndarray,
    graph: FeatureGraph,
    alpha: float,
    lam: float,
) -> float:
    """Exact objective value; degree weights come from ``graph``."""
    x, u, v = np.asarray(x, float), np.asarray(u, float), np.asarray(v, float)
    if u.shape[0] != x.shape[0] or v.shape[0] != x.shape[1] or u.shape[1] != v.shape[1]:
        raise DimensionMismatch(
            f"x {x.shape}, u {u.shape}, v {v.shape} are not conformable"
        )
    if graph.p != v.shape[0]:
        raise DimensionMismatch(f"graph has {graph.p} nodes, loadings have {v.shape[0]} rows")
    weights = 1.0 / (1.0 + graph.degrees)
    recon = 0.5 * float(np.sum((x - u @ v.T) ** 2))
    sparsity = alpha * float(weights @ np.sum(np.abs(v), axis=1))
    smooth = 0.5 * lam * laplacian_quadratic(graph, v)
    return recon + sparsity + smooth


def _objective_terms(x, u, v, row_weights, alpha, lam, laplacian) -> float:
    recon = 0.5 * float(np.sum((x - u @ v.T) ** 2))
    pen = alpha * float(row_weights @ np.sum(np.abs(v), axis=1))
    if lam > 0.0 and laplacian is not None:
        pen += 0.5 * lam * float(np.sum(v * (laplacian @ v)))
    return recon + pen


def _exact_scores(x: np.ndarray, v: np.ndarray, mu: float = 0.0) -> np.ndarray:
    """Score update: ridge-regularized least squares against the loadings."""
    gram = v.T @ v
    ridge = mu * np.trace(gram) / gram.shape[0]
    try:
        return spd_solve(gram + ridge * np.eye(gram.shape[0]), (x @ v).T).T
    except NotPositiveDefinite:
        ridge = max(ridge, 1e-10 * np.trace(gram) / gram.shape[0])
        if ridge <= 0:
            return np.zeros((x.shape[0], v.shape[1]))
        return spd_solve(gram + ridge * np.eye(gram.shape[0]), (x @ v).T).T


def _init_factors(x, r, init, init_seed, mu):
    if init == "svd":
        u0, s, v0 = truncated_svd(x, r)
        return u0 * s, v0
    rs = RandomSource(init_seed)
    v0 = rs.normal(x.shape[1], r)
    v0 /= np.maximum(np.linalg.norm(v0, axis=0), 1e-12)
    return _exact_scores(x, v0, mu), v0


def _prox_loadings(z: np.ndarray, levels: np.ndarray) -> tuple[np.ndarray, int]:
    """Exact prox of (weighted l1 + unit-sphere indicator), column-wise.

    On the sphere the prox objective reduces to maximizing
    sum_j |v_j| * (|z_j| - level_j) over unit vectors, and Cauchy-Schwarz
    gives the maximizer in closed form: soft-threshold z entrywise, then
    normalize the column.  If thresholding removes every entry the optimum
    concentrates on the single best coordinate; that collapse is counted
    and reported so callers can flag an over-aggressive alpha.
    """
    v = soft_threshold(z, levels)
    norms = np.linalg.norm(v, axis=0)
    collapsed = np.flatnonzero(norms == 0.0)
    for k in collapsed:
        gain = np.abs(z[:, k]) - levels[:, 0]
        j = int(np.argmax(gain))
        v[j, k] = 1.0 if z[j, k] >= 0 else -1.0
        norms[k] = 1.0
    return v / norms, len(collapsed)


def _sign_align(u: np.ndarray, v: np.ndarray) -> None:
    """Flip column pairs so each loading column's largest entry is positive."""
    for k in range(v.shape[1]):
        col = v[:, k]
        if col.any() and col[np.argmax(np.abs(col))] < 0:
            v[:, k] = -col
            u[:, k] = -u[:, k]


def _fit_penalized(
    x: np.ndarray,
    cfg: GrpcaConfig,
    row_weights: np.ndarray,
    lam: float,
    laplacian: np.ndarray | None,
    method: str,
    graph_used: FeatureGraph | None,
) -> FactorModel:
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    if cfg.r > min(n, p):
        raise RankTooLarge(f"rank {cfg.r} exceeds min{(n, p)}")

    u, v = _init_factors(x, cfg.r, cfg.init, cfg.init_seed, cfg.score_ridge)
    lap_norm = power_iteration(laplacian) if (laplacian is not None and lam > 0) else 0.0
    thresh_rows = (cfg.alpha * row_weights)[:, None]

    trace = [_objective_terms(x, u, v, row_weights, cfg.alpha, lam, laplacian)]
    slack = _MONOTONE_SLACK + 4e-15 * abs(trace[0])
    converged = False
    collapsed = 0
    outer = 0
    for outer in range(1, cfg.max_outer + 1):
        u_new = _exact_scores(x, v, cfg.score_ridge)
        # the shrunk score step is not the exact minimizer of the recorded
        # objective; never accept an ascent
        if _objective_terms(x, u_new, v, row_weights, cfg.alpha, lam, laplacian) <= trace[-1]:
            u = u_new

        gram_u = u.T @ u
        lip = power_iteration(gram_u) + lam * lap_norm
        if lip > 0:
            step = 1.0 / lip
            xtu = x.T @ u
            for _ in range(cfg.inner_steps):
                grad = v @ gram_u - xtu
                if lam > 0 and laplacian is not None:
                    grad += lam * (laplacian @ v)
                v, collapsed = _prox_loadings(v - step * grad, step * thresh_rows)

        obj = _objective_terms(x, u, v, row_weights, cfg.alpha, lam, laplacian)
        prev = trace[-1]
        trace.append(obj)
        if obj > prev + slack:
            raise AssertionError(
                f"objective increased at outer {outer}: {prev!r} -> {obj!r}"
            )
        if prev - obj < cfg.tol_rel_obj * max(abs(prev), 1e-12):
            converged = True
            break

    _sign_align(u, v)
    return FactorModel(
        u=u,
        v=v,
        objective_trace=trace,
        converged=converged,
        iterations=outer,
        method=method,
        graph_used=graph_used,
        # every column collapsed to the single-spike prox fallback: the l1
        # level has overwhelmed the data and the loadings carry no signal
        all_zero_loadings=collapsed == v.shape[1],
        config=cfg,
    )


def fit_grpca(x: np.ndarray, graph: FeatureGraph, cfg: GrpcaConfig) -> FactorModel:
    """Graph-regularized fit; expects column-standardized x and graph.p == p."""
    if graph.p != x.shape[1]:
        raise DimensionMismatch(f"graph has {graph.p} nodes, data has {x.shape[1]} columns")
    weights = 1.0 / (1.0 + graph.degrees.astype(float))
    return _fit_penalized(
        x, cfg, weights, cfg.lam, graph.laplacian, method="grpca", graph_used=graph
    )


def fit_sparse_pca(x: np.ndarray, r: int, alpha: float, **kwargs) -> FactorModel:
    """l1-penalized factorization: the grpca solver with unit weights, lam = 0."""
    cfg = GrpcaConfig(r=r, alpha=alpha, lam=0.0, **kwargs)
    weights = np.ones(x.shape[1])
    return _fit_penalized(
        x, cfg, weights, 0.0, None, method="sparse_pca", graph_used=None
    )


def fit_pca(x: np.ndarray, r: int) -> FactorModel:
    """Variance-maximizing baseline: top-r right singular vectors."""
    x = np.asarray(x, dtype=float)
    u_r, s, v_r = truncated_svd(x, r)  # raises RankTooLarge
    u = x @ v_r
    v = v_r.copy()
    _sign_align(u, v)
    return FactorModel(
        u=u,
        v=v,
        objective_trace=[],
        converged=True,
        iterations=1,
        method="pca",
    )


def transform(model: FactorModel, x_new: np.ndarray) -> np.ndarray:
    """Scores of new rows against the frozen loadings.

    Uses the same update the model was fitted with, so transforming the
    training data reproduces the training scores: plain least squares for
    PCA (orthonormal loadings make that X_new @ V exactly), the
    ridge-shrunk variant for the penalized models.
    """
    x_new = np.asarray(x_new, dtype=float)
    v = model.v
    if x_new.shape[1] != v.shape[0]:
        raise DimensionMismatch(
            f"data has {x_new.shape[1]} columns, loadings have {v.shape[0]} rows"
        )
    mu = model.config.score_ridge if model.config is not None else 0.0
    gram = v.T @ v
    ridge = mu * np.trace(gram) / gram.shape[0]
    try:
        return spd_solve(gram + ridge * np.eye(gram.shape[0]), (x_new @ v).T).T
    except NotPositiveDefinite:
        ridge = max(ridge, 1e-10 * np.trace(gram) / gram.shape[0])
        if ridge <= 0:
            raise DegenerateLoadings("loadings are identically zero")
        try:
            return spd_solve(gram + ridge * np.eye(gram.shape[0]), (x_new @ v).T).T
        except NotPositiveDefinite as exc:
            raise DegenerateLoadings("loadings rank-deficient beyond ridge repair") from exc


def reconstruct(model: FactorModel, x_new: np.ndarray) -> np.ndarray:
    """transform(model, x_new) @ V^T."""
    return transform(model, x_new) @ model.v.T


def save_model(model: FactorModel, directory: str | Path) -> Path:
    """Export as U.csv / V.csv plus meta.json with config and diagnostics."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / "U.csv", model.u, delimiter=",", fmt="%.17g")
    np.savetxt(directory / "V.csv", model.v, delimiter=",", fmt="%.17g")
    meta = {
        "method": model.method,
        "converged": model.converged,
        "iterations": model.iterations,
        "all_zero_loadings": model.all_zero_loadings,
        "objective_trace": [float(t) for t in model.objective_trace],
        "config": dataclasses.asdict(model.config) if model.config else None,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return directory
