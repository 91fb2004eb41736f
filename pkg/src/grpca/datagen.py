"""Synthetic benchmark generator.

Builds data with three planted ingredients that all live on one feature
graph:

1. smooth ground-truth loadings: hard ball masks around sampled center
   nodes, low-pass filtered by (I + gamma L)^-1, soft-thresholded, and
   unit-normalized;
2. high-frequency nuisance loadings: random +-1 spikes on sub-maximal
   degree nodes, unit-normalized;
3. graph-correlated Gaussian noise with precision tau * I + beta * L.

Scores for both loading families are independent Gaussians with
geometrically decaying variances.  The composed matrix is standardized
column-wise; the ground truth, the graph, and all effective parameters are
retained in the returned bundle so every downstream metric can be computed
and every bundle can be regenerated bit-for-bit from its seed.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateComponent,
    InsufficientBoundary,
    InvalidParameter,
    NotPositiveDefinite,
)
from .graphs import FeatureGraph, TopologyKind, expected_density, generate
from .numerics import RandomSource, cholesky, solve_upper_triangular, spd_solve

_OMEGA_HALVINGS = 10


@dataclass(frozen=True)
class GeneratorConfig:
    """All knobs of the synthetic generator.

    ``q_ratio`` is the nuisance-to-signal ratio and is interpreted per
    ``q_mode``:

    * ``"count"`` (default): the number of nuisance components is
      ``round(q_ratio * r)`` (at least 1 whenever q_ratio > 0) and their
      score variances follow the same geometric decay as the signal's.
    * ``"variance"``: ``q_count`` components (default r) whose variances
      are rescaled so total nuisance variance = q_ratio * total signal
      variance.

    ``q_count`` overrides the component count in either mode.
    """

    p: int = 60
    n: int = 2000
    r: int = 8
    gamma: float = 16.0
    omega: float = 0.4
    radius: int | None = None  # None: size balls to mask_fraction * p (_ball_mask)
    mask_fraction: float = 0.65
    spike_count: int = 25
    q_ratio: float = 0.1
    q_mode: str = "count"
    q_count: int | None = None
    sigma1_sq: float = 25.0
    rho_var: float = 0.7
    tau: float = 0.55
    beta: float = 1.15
    sigma_e: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.p < 3:
            raise InvalidParameter(f"p must be >= 3, got {self.p}")
        if self.n < 1:
            raise InvalidParameter(f"n must be >= 1, got {self.n}")
        if self.r < 1:
            raise InvalidParameter(f"r must be >= 1, got {self.r}")
        if self.r > self.p:
            raise InvalidParameter(f"r={self.r} cannot exceed p={self.p}")
        if self.gamma < 0:
            raise InvalidParameter(f"gamma must be >= 0, got {self.gamma}")
        if self.omega < 0:
            raise InvalidParameter(f"omega must be >= 0, got {self.omega}")
        if self.radius is not None and self.radius < 0:
            raise InvalidParameter(f"radius must be >= 0, got {self.radius}")
        if not 0.0 < self.mask_fraction <= 1.0:
            raise InvalidParameter(
                f"mask_fraction must lie in (0, 1], got {self.mask_fraction}"
            )
        if self.spike_count < 1:
            raise InvalidParameter(f"spike_count must be >= 1, got {self.spike_count}")
        if self.q_ratio < 0:
            raise InvalidParameter(f"q_ratio must be >= 0, got {self.q_ratio}")
        if self.q_mode not in ("count", "variance"):
            raise InvalidParameter(f"q_mode must be 'count' or 'variance', got {self.q_mode}")
        if self.q_count is not None and self.q_count < 0:
            raise InvalidParameter(f"q_count must be >= 0, got {self.q_count}")
        if self.sigma1_sq <= 0:
            raise InvalidParameter(f"sigma1_sq must be > 0, got {self.sigma1_sq}")
        if not 0.0 < self.rho_var < 1.0:
            raise InvalidParameter(f"rho_var must lie in (0, 1), got {self.rho_var}")
        if self.tau <= 0:
            raise InvalidParameter(f"tau must be > 0, got {self.tau}")
        if self.beta < 0:
            raise InvalidParameter(f"beta must be >= 0, got {self.beta}")
        if self.sigma_e < 0:
            raise InvalidParameter(f"sigma_e must be >= 0, got {self.sigma_e}")

    @property
    def nuisance_count(self) -> int:
        if self.q_count is not None:
            return self.q_count
        if self.q_mode == "count":
            if self.q_ratio == 0:
                return 0
            return max(1, round(self.q_ratio * self.r))
        return self.r


@dataclass
class SyntheticBundle:
    """One generated dataset plus everything needed to score against it."""

    x: np.ndarray
    v_star: np.ndarray
    v_nu: np.ndarray
    u_star: np.ndarray
    u_nu: np.ndarray
    graph: FeatureGraph
    theta_true: np.ndarray
    column_means: np.ndarray
    column_stds: np.ndarray
    seed: int
    config: GeneratorConfig
    topology: str = "?"
    centers: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))
    effective_omega: np.ndarray = field(default_factory=lambda: np.array([]))
    achieved_density: float | None = None


def soft_threshold(x: np.ndarray, level: float) -> np.ndarray:
    """sign(x) * max(|x| - level, 0)."""
    return np.sign(x) * np.maximum(np.abs(x) - level, 0.0)


def _ball_mask(
    graph: FeatureGraph,
    center: int,
    radius: int | None,
    target_fraction: float,
    seen_masks: list[frozenset] | None = None,
) -> np.ndarray:
    """Indicator of the hop-ball around ``center``.

    With radius=None the radius is chosen so the ball covers a fraction of
    the graph close to ``target_fraction``.  The threshold level and the
    ball size interlock: the low-pass filter drives the mask toward its
    mean |ball|/p everywhere, so soft-thresholding at a level matching that
    mean strips the flat background and keeps exactly the localized ripple
    around the center.  Matching the sizes keeps that mechanism working at
    every edge density instead of only where a fixed radius happens to fit.

    A ball identical to an earlier component's is shrunk (ultimately to the
    bare center, which is unique per center), so no two loading columns can
    come out identical.
    """
    dist = graph.bfs_distances(center)
    if radius is not None:
        ball = frozenset(np.flatnonzero((dist >= 0) & (dist <= radius)).tolist())
    else:
        # Hop-ball sizes jump coarsely with the radius, so fill the outermost
        # ring partially (lowest node index first, deterministic) to land on
        # the target size exactly.
        want = max(1, round(target_fraction * graph.p))
        reachable = np.flatnonzero(dist >= 0)
        order = reachable[np.lexsort((reachable, dist[reachable]))]
        ball = frozenset(order[: min(want, len(order))].tolist())
    if seen_masks is not None:
        while ball in seen_masks and len(ball) > 1:
            # shrink by dropping the farthest member; bare centers are unique
            members = sorted(ball)
            far = max(members, key=lambda j: (dist[j], j))
            ball = frozenset(m for m in members if m != far)
        seen_masks.append(ball)
    mask = np.zeros(graph.p)
    mask[list(ball)] = 1.0
    return mask


def make_true_loadings(
    graph: FeatureGraph,
    cfg: GeneratorConfig,
    rs: RandomSource,
    centers: np.ndarray | None = None,
):
    """Smooth, sparse, unit-norm loading columns around sampled centers.

    Returns (loadings p x r, centers, effective_omega).  If soft-thresholding
    empties a column its threshold is halved (up to 10 times) and the value
    actually used is reported per column; a column that stays empty raises
    DegenerateComponent.
    """
    p, r = graph.p, cfg.r
    if centers is None:
        candidates = _center_pool(graph)
        if len(candidates) < r:
            candidates = np.arange(p)
        picks = np.sort(rs.choice_without_replacement(len(candidates), r))
        centers = candidates[picks]
    centers = np.asarray(centers, dtype=int)
    filt = np.eye(p) + cfg.gamma * graph.laplacian
    loadings = np.zeros((p, r))
    effective_omega = np.zeros(r)
    seen_masks: list[frozenset] = []
    for k, center in enumerate(centers):
        mask = _ball_mask(graph, int(center), cfg.radius, cfg.mask_fraction, seen_masks)
        while True:
            smoothed = spd_solve(filt, mask) if cfg.gamma > 0 else mask
            omega = cfg.omega
            col = soft_threshold(smoothed, omega)
            halvings = 0
            while not np.any(col) and halvings < _OMEGA_HALVINGS:
                omega *= 0.5
                col = soft_threshold(smoothed, omega)
                halvings += 1
            if not np.any(col):
                raise DegenerateComponent(
                    f"component {k} (center {center}): soft threshold removed every entry"
                )
            col = col / np.linalg.norm(col)
            # thresholding can collapse two different balls onto one core;
            # shrink this ball until the filtered column is its own direction
            duplicate = k > 0 and np.max(np.abs(col @ loadings[:, :k])) > 0.999
            if duplicate and mask.sum() > 1:
                mask = _shrink_mask(graph, int(center), mask)
                continue
            break
        loadings[:, k] = col
        effective_omega[k] = omega
    return loadings, centers, effective_omega


def _center_pool(graph: FeatureGraph) -> np.ndarray:
    """Candidate centers: nodes of the largest connected component.

    A center stranded in a tiny fragment yields a loading no method could
    recover from data, which would say nothing about the methods under test.
    """
    seen = np.zeros(graph.p, dtype=bool)
    best: list[int] = []
    for start in range(graph.p):
        if seen[start]:
            continue
        comp = [start]
        seen[start] = True
        idx = 0
        while idx < len(comp):
            for v in graph.neighbors(comp[idx]):
                if not seen[v]:
                    seen[v] = True
                    comp.append(v)
            idx += 1
        if len(comp) > len(best):
            best = comp
    return np.array(sorted(best), dtype=int)


def _shrink_mask(graph: FeatureGraph, center: int, mask: np.ndarray) -> np.ndarray:
    dist = graph.bfs_distances(center)
    members = np.flatnonzero(mask > 0)
    far = members[np.lexsort((members, dist[members]))][-1]
    out = mask.copy()
    out[far] = 0.0
    return out


def sub_maximal_degree_nodes(graph: FeatureGraph) -> np.ndarray:
    """Nodes whose degree is strictly below the maximum degree."""
    return np.flatnonzero(graph.degrees < graph.degrees.max())


def make_nuisance_loadings(
    graph: FeatureGraph, cfg: GeneratorConfig, rs: RandomSource
) -> np.ndarray:
    """Random-sign spike columns on sub-maximal-degree nodes, unit norm."""
    boundary = sub_maximal_degree_nodes(graph)
    count = cfg.nuisance_count
    if count == 0:
        return np.zeros((graph.p, 0))
    if len(boundary) < cfg.spike_count:
        raise InsufficientBoundary(
            f"need {cfg.spike_count} sub-maximal-degree nodes, graph has {len(boundary)}"
        )
    loadings = np.zeros((graph.p, count))
    for col in range(count):
        picks = boundary[rs.choice_without_replacement(len(boundary), cfg.spike_count)]
        loadings[picks, col] = rs.signs(cfg.spike_count)
        loadings[:, col] /= np.linalg.norm(loadings[:, col])
    return loadings


def score_variances(cfg: GeneratorConfig, count: int, role: str) -> np.ndarray:
    """Geometric variance ladder sigma_1^2 * rho^(k-1), rescaled per q_mode."""
    if count == 0:
        return np.zeros(0)
    ladder = cfg.sigma1_sq * cfg.rho_var ** np.arange(count)
    if role == "true":
        return ladder
    if role != "nuisance":
        raise InvalidParameter(f"role must be 'true' or 'nuisance', got {role!r}")
    if cfg.q_mode == "count":
        return ladder
    # variance mode: total nuisance variance = q_ratio * total signal variance
    signal_total = cfg.sigma1_sq * (1 - cfg.rho_var**cfg.r) / (1 - cfg.rho_var)
    return ladder * (cfg.q_ratio * signal_total / ladder.sum())


def make_scores(
    cfg: GeneratorConfig, rs: RandomSource, n: int, count: int, role: str = "true"
) -> np.ndarray:
    """n x count Gaussian scores, column k ~ N(0, sigma_k^2)."""
    variances = score_variances(cfg, count, role)
    if count == 0:
        return np.zeros((n, 0))
    return rs.normal(n, count) * np.sqrt(variances)


def noise_precision(graph: FeatureGraph, tau: float, beta: float) -> np.ndarray:
    return tau * np.eye(graph.p) + beta * graph.laplacian


def sample_noise(
    graph: FeatureGraph, tau: float, beta: float, rs: RandomSource, n: int
) -> np.ndarray:
    """n rows i.i.d. N(0, (tau I + beta L)^-1) via a Cholesky solve.

    With theta = R R^T, solving R^T x = z for z ~ N(0, I) gives
    cov(x) = R^-T R^-1 = theta^-1.
    """
    if tau <= 0:
        raise NotPositiveDefinite(f"tau must be > 0, got {tau}")
    lower = cholesky(noise_precision(graph, tau, beta))
    z = rs.normal(n, graph.p)
    return solve_upper_triangular(lower.T, z.T).T


def generate_bundle(
    kind: TopologyKind,
    cfg: GeneratorConfig,
    topology_label: str | None = None,
) -> SyntheticBundle:
    """Run the full pipeline; deterministic given (kind, cfg)."""
    root = RandomSource(cfg.seed)
    graph = generate(kind, cfg.p, root.child(0))
    v_star, centers, eff_omega = make_true_loadings(graph, cfg, root.child(1))
    v_nu = make_nuisance_loadings(graph, cfg, root.child(2))
    u_star = make_scores(cfg, root.child(3), cfg.n, cfg.r, role="true")
    u_nu = make_scores(cfg, root.child(4), cfg.n, v_nu.shape[1], role="nuisance")
    theta = noise_precision(graph, cfg.tau, cfg.beta)

    x = u_star @ v_star.T + u_nu @ v_nu.T
    if cfg.sigma_e > 0:
        x = x + cfg.sigma_e * sample_noise(graph, cfg.tau, cfg.beta, root.child(5), cfg.n)

    means = x.mean(axis=0)
    stds = x.std(axis=0)
    stds = np.where(stds > 1e-12, stds, 1.0)  # constant columns stay centered zeros
    x = (x - means) / stds

    return SyntheticBundle(
        x=x,
        v_star=v_star,
        v_nu=v_nu,
        u_star=u_star,
        u_nu=u_nu,
        graph=graph,
        theta_true=theta,
        column_means=means,
        column_stds=stds,
        seed=cfg.seed,
        config=cfg,
        topology=topology_label or getattr(kind, "name", "?"),
        centers=centers,
        effective_omega=eff_omega,
        achieved_density=expected_density(kind, cfg.p),
    )


# --- bundle export / import -------------------------------------------------

_CSV_FMT = "%.17g"  # float64 round-trips exactly


def save_bundle(bundle: SyntheticBundle, directory: str | Path) -> Path:
    """Write a bundle as a directory of CSV files plus meta.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / "X.csv", bundle.x, delimiter=",", fmt=_CSV_FMT)
    np.savetxt(directory / "V_star.csv", bundle.v_star, delimiter=",", fmt=_CSV_FMT)
    np.savetxt(directory / "V_nu.csv", bundle.v_nu.reshape(bundle.x.shape[1], -1),
               delimiter=",", fmt=_CSV_FMT)
    np.savetxt(directory / "U_star.csv", bundle.u_star, delimiter=",", fmt=_CSV_FMT)
    np.savetxt(directory / "U_nu.csv", bundle.u_nu.reshape(bundle.x.shape[0], -1),
               delimiter=",", fmt=_CSV_FMT)
    (directory / "edges.txt").write_text(bundle.graph.to_edge_list())
    meta = {
        "config": dataclasses.asdict(bundle.config),
        "topology": bundle.topology,
        "seed": bundle.seed,
        "achieved_density": bundle.achieved_density,
        "realized_density": bundle.graph.density,
        "centers": bundle.centers.tolist(),
        "effective_omega": bundle.effective_omega.tolist(),
        "column_means": bundle.column_means.tolist(),
        "column_stds": bundle.column_stds.tolist(),
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return directory


def load_bundle(directory: str | Path) -> SyntheticBundle:
    """Inverse of save_bundle."""
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    cfg = GeneratorConfig(**meta["config"])
    graph = FeatureGraph.from_edge_list(cfg.p, (directory / "edges.txt").read_text())

    def read(name, rows):
        arr = np.loadtxt(directory / name, delimiter=",", ndmin=2)
        return arr.reshape(rows, -1) if arr.size else np.zeros((rows, 0))

    return SyntheticBundle(
        x=read("X.csv", cfg.n),
        v_star=read("V_star.csv", cfg.p),
        v_nu=read("V_nu.csv", cfg.p),
        u_star=read("U_star.csv", cfg.n),
        u_nu=read("U_nu.csv", cfg.n),
        graph=graph,
        theta_true=noise_precision(graph, cfg.tau, cfg.beta),
        column_means=np.asarray(meta["column_means"]),
        column_stds=np.asarray(meta["column_stds"]),
        seed=meta["seed"],
        config=cfg,
        topology=meta["topology"],
        centers=np.asarray(meta["centers"], dtype=int),
        effective_omega=np.asarray(meta["effective_omega"]),
        achieved_density=meta["achieved_density"],
    )
