"""Multi-robot map fusion over a static undirected communication graph.

Two protocols are provided. ``echo`` repeatedly averages the full per-point
statistics of neighbours with the weights W and converges asymptotically to
the centralized estimate. ``echoless`` forwards each robot's mini-batches
along the graph with a visited list so every robot incorporates every batch
exactly once, weighted by the Perron weight of its origin; it matches the
centralized estimate exactly once the last batch has reached everyone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .config import ConfigError
from .sparse_gp import GpStats, NumericalError, ObservationBatch, combine_batches, merge_batch


class TopologyError(ValueError):
    pass


# -- graph algebra ---------------------------------------------------------------

def perron_vector(W: np.ndarray, tol: float = 1e-12, max_iter: int = 200000) -> np.ndarray:
    """Left eigenvector of a primitive row-stochastic W for eigenvalue 1, summing to 1."""
    n = W.shape[0]
    pi = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = pi @ W
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - pi)) <= tol:
            pi = nxt
            break
        pi = nxt
    if np.max(np.abs(pi @ W - pi)) > tol:
        # slow mixing; fall back to a direct eigen-solve
        vals, vecs = np.linalg.eig(W.T)
        v = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
        pi = v / v.sum()
    return pi


@dataclass
class NetworkGraph:
    adjacency: np.ndarray
    weights: np.ndarray
    pi: np.ndarray
    nu: float | None = None

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def neighbors(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.adjacency[i] > 0)]

    @classmethod
    def from_weights(cls, W) -> "NetworkGraph":
        """Wrap an explicit row-stochastic nonnegative weight matrix."""
        W = np.asarray(W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ConfigError("network.weights", "must be a square matrix")
        if np.any(W < 0):
            raise ConfigError("network.weights", "entries must be nonnegative")
        if np.max(np.abs(W.sum(axis=1) - 1.0)) > 1e-12:
            raise ConfigError("network.weights", "rows must sum to 1")
        A = ((W > 0) | (W.T > 0)).astype(float)
        np.fill_diagonal(A, 0.0)
        _check_connected(A)
        if np.any(np.diag(W) <= 0):
            raise ConfigError("network.weights", "diagonal must be positive")
        return cls(A, W, perron_vector(W))


def _check_connected(A: np.ndarray) -> None:
    ncomp, _ = connected_components(A > 0, directed=False)
    if ncomp != 1:
        raise TopologyError(f"communication graph has {ncomp} components")


def laplacian(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return np.diag(A.sum(axis=1)) - A


def build_weight_matrix(A, nu: float | None = None) -> NetworkGraph:
    """W = I - nu * L; nu defaults to 1 / (max degree + 1)."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigError("network.adjacency", "must be a square matrix")
    if np.any(A < 0) or not np.allclose(A, A.T) or np.any(np.diag(A) != 0):
        raise ConfigError("network.adjacency", "must be symmetric, nonnegative, zero diagonal")
    _check_connected(A)
    L = laplacian(A)
    max_deg = float(np.max(np.diag(L))) if len(A) else 0.0
    if nu is None:
        nu = 1.0 / (max_deg + 1.0)
    if not nu > 0 or (max_deg > 0 and nu > 1.0 / max_deg + 1e-15):
        raise ConfigError("network.nu", f"must lie in (0, 1/{max_deg:g}]")
    W = np.eye(len(A)) - nu * L
    # exact unit row sums
    np.fill_diagonal(W, 0.0)
    np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    return NetworkGraph(A, W, perron_vector(W), nu)


def random_connected_adjacency(n: int, rng: np.random.Generator, p: float = 0.4) -> np.ndarray:
    """Random spanning tree plus extra Erdos-Renyi edges."""
    A = np.zeros((n, n))
    order = rng.permutation(n)
    for k in range(1, n):
        i, j = order[k], order[rng.integers(0, k)]
        A[i, j] = A[j, i] = 1.0
    extra = np.triu(rng.random((n, n)) < p, 1)
    A = np.maximum(A, extra + extra.T)
    np.fill_diagonal(A, 0.0)
    return A


# -- distributed information filter -------------------------------------------------

def distributed_kalman_step(omega, Omega, W, observations=None):
    """One consensus + measurement step of the information-form filter.

    ``omega`` is (n, d), ``Omega`` is (n, d, d); ``observations[i]`` is
    ``(H, V, y)`` or None.
    """
    W = np.asarray(W, dtype=float)
    new_w = W @ np.asarray(omega, dtype=float)
    new_W = np.einsum("ij,jab->iab", W, np.asarray(Omega, dtype=float))
    for i, ob in enumerate(observations or []):
        if ob is None:
            continue
        H, V, y = (np.atleast_2d(np.asarray(a, dtype=float)) for a in ob)
        y = y.reshape(-1)
        try:
            Vinv = np.linalg.inv(V)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular measurement covariance") from exc
        if not np.all(np.isfinite(Vinv)) or np.linalg.cond(V) > 1e14:
            raise NumericalError("singular measurement covariance")
        new_w[i] += H.T @ Vinv @ y
        new_W[i] += H.T @ Vinv @ H
    return new_w, new_W


# -- echo protocol ----------------------------------------------------------------

def echo_round(states: list[dict], W, new_batches: list[dict]) -> list[dict]:
    """Weighted averaging of neighbours' statistics plus the local new batch.

    ``states[i]`` maps class id -> GpStats. Points a robot does not hold enter
    the average with zero count.
    """
    W = np.asarray(W, dtype=float)
    n = len(states)
    classes = sorted({c for s in states for c in s} | {c for b in new_batches for c in b})
    out = [dict() for _ in range(n)]
    for c in classes:
        index: dict = {}
        for src in [s.get(c) for s in states] + [b.get(c) for b in new_batches]:
            if src is not None:
                for k in src.keys:
                    index.setdefault(k, len(index))
        K = len(index)
        M = np.zeros((n, K))
        S = np.zeros((n, K))
        Mn = np.zeros((n, K))
        Sn = np.zeros((n, K))
        template = None
        for i in range(n):
            st = states[i].get(c)
            if st is not None and len(st):
                template = template or st
                cols = [index[k] for k in st.keys]
                M[i, cols] = st.counts
                S[i, cols] = st.counts * st.means
            b = new_batches[i].get(c)
            if b is not None and len(b):
                cols = [index[k] for k in b.keys]
                Mn[i, cols] = b.counts
                Sn[i, cols] = b.counts * b.means
        M2 = W @ M + Mn
        S2 = W @ S + Sn
        keys = list(index)
        prior = template.prior_mean if template is not None else _prior_from(states, c)
        vs = _voxel_from(states, new_batches, c)
        for i in range(n):
            live = np.flatnonzero(M2[i] > 0)
            if len(live) == 0:
                continue
            out[i][c] = GpStats([keys[j] for j in live], M2[i, live], S2[i, live] / M2[i, live], prior, vs)
    return out


def _prior_from(states, c) -> float:
    for s in states:
        if c in s:
            return s[c].prior_mean
    return 0.0


def _voxel_from(states, batches, c) -> float:
    for s in states:
        if c in s:
            return s[c].voxel_size
    for b in batches:
        if c in b:
            return b[c].voxel_size
    return 1.0


# -- centralized oracle -----------------------------------------------------------

def weighted_union(batches: list[dict], weights) -> dict:
    """Sum of per-class batches with counts scaled by ``weights[i]``."""
    classes = sorted({c for b in batches for c in b})
    out = {}
    for c in classes:
        parts = [b[c].scaled(w) for b, w in zip(batches, weights) if c in b and len(b[c])]
        if parts:
            out[c] = combine_batches(parts)
    return out


def centralized_update(central: dict, batches: list[dict], pi, prior_mean: float = 0.0) -> dict:
    """Counts grow by pi_i * m_i and means by pi-weighted averaging. Works on {class: GpStats}."""
    out = dict(central)
    for c, b in weighted_union(batches, pi).items():
        base = out.get(c) or GpStats([], np.zeros(0), np.zeros(0), prior_mean, b.voxel_size)
        out[c] = merge_batch(base, b)
    return out


# -- echoless protocol ------------------------------------------------------------

@dataclass
class MiniBatch:
    origin: int
    release: int
    payload: dict  # class id -> ObservationBatch
    visited: frozenset = frozenset()

    def __post_init__(self):
        self.visited = frozenset(self.visited) | {self.origin}

    @property
    def ident(self) -> tuple[int, int]:
        return (self.origin, self.release)


@dataclass
class RobotState:
    id: int
    smap: object = None  # SemanticMap, or None when only statistics are tracked
    stats: dict = field(default_factory=dict)  # class id -> GpStats
    outbox: list = field(default_factory=list)
    seen: set = field(default_factory=set)
    incorporated: dict = field(default_factory=dict)  # batch ident -> times incorporated

    def absorb(self, payload: dict, prior_mean: float = 0.0) -> None:
        if self.smap is not None:
            self.smap.ingest(payload)
        for c, b in payload.items():
            if len(b) == 0:
                continue
            base = self.stats.get(c) or GpStats([], np.zeros(0), np.zeros(0), prior_mean, b.voxel_size)
            self.stats[c] = merge_batch(base, b)


def echoless_round(states: list[RobotState], graph: NetworkGraph, new_batches: list[dict], t: int,
                   prior_mean: float = 0.0, log: list | None = None) -> None:
    """Advance every robot by one synchronous round (in place).

    Robots read the outboxes their neighbours published last round; copies of
    one mini-batch arriving over several links are merged before use.
    """
    published = [list(s.outbox) for s in states]
    pi = graph.pi
    for s in states:
        i = s.id
        arrivals: dict = {}
        for j in graph.neighbors(i):
            for mb in published[j]:
                fresh = i not in mb.visited and mb.ident not in s.seen
                if log is not None:
                    log.append({"round": t, "sender": j, "receiver": i, "batch": list(mb.ident),
                                "visited": sorted(mb.visited), "incorporated": fresh and mb.ident not in arrivals})
                if not fresh:
                    continue
                if mb.ident in arrivals:
                    prev = arrivals[mb.ident]
                    arrivals[mb.ident] = MiniBatch(prev.origin, prev.release, prev.payload, prev.visited | mb.visited)
                else:
                    arrivals[mb.ident] = mb
        gathered = []
        parts, weights = [], []
        for ident in sorted(arrivals):
            mb = arrivals[ident]
            parts.append(mb.payload)
            weights.append(pi[mb.origin])
            s.seen.add(ident)
            s.incorporated[ident] = s.incorporated.get(ident, 0) + 1
            gathered.append(MiniBatch(mb.origin, mb.release, mb.payload, mb.visited | {i}))
        own = new_batches[i] if new_batches is not None else {}
        own = {c: b for c, b in own.items() if len(b)}
        if own:
            mine = MiniBatch(i, t, own)
            parts.append(own)
            weights.append(pi[i])
            s.seen.add(mine.ident)
            s.incorporated[mine.ident] = s.incorporated.get(mine.ident, 0) + 1
            gathered.append(mine)
        if parts:
            s.absorb(weighted_union(parts, weights), prior_mean)
        s.outbox = gathered


# -- orchestration ----------------------------------------------------------------

@dataclass
class MultiRobotResult:
    robot_maps: list
    central_map: object
    mae_log: list  # rows (round, robot, mean_mae, var_mae)
    message_log: list
    states: list


def stats_to_map(template, stats: dict):
    """Fresh SemanticMap holding the given per-class statistics."""
    smap = template.empty_like()
    smap.ingest({c: ObservationBatch(s.keys, s.counts, s.means, s.voxel_size) for c, s in stats.items() if len(s)})
    return smap


def run_multi_robot(env, trajectories, graph: NetworkGraph, map_cfg, sensor_cfg, protocol: str = "echoless",
                    extra_rounds: int | None = None, seed: int = 0, log_mae: bool = True,
                    mae_every: int = 1, refresh: bool = False) -> MultiRobotResult:
    """Synchronous multi-robot mapping: sense, build batches, run one protocol round.

    The centralized oracle ingests the Perron-weighted union of all new
    batches in lockstep. ``extra_rounds`` (default n - 1) continue the
    protocol after the trajectories end.
    """
    from .evaluation import mae_vs_centralized
    from .mapping import clip_to_map, empty_map, sense_batches, seeds_for

    n = graph.n
    if len(trajectories) != n:
        raise ValueError(f"need {n} trajectories, got {len(trajectories)}")
    if protocol not in ("echo", "echoless"):
        raise ConfigError("network.protocol", "must be 'echo' or 'echoless'")
    extra = n - 1 if extra_rounds is None else extra_rounds
    T = max((len(tr) for tr in trajectories), default=0)
    rngs = [np.random.default_rng(s) for s in seeds_for(seed, n)]
    template = empty_map(env, map_cfg)
    central = empty_map(env, map_cfg)
    prior = map_cfg.prior_mean
    if protocol == "echoless":
        states = [RobotState(i, smap=empty_map(env, map_cfg)) for i in range(n)]
    else:
        states = [RobotState(i) for i in range(n)]
    mae_rows, messages = [], []
    for t in range(T + extra):
        batches = []
        for i in range(n):
            if t < len(trajectories[i]):
                b = sense_batches(env, trajectories[i][t], map_cfg, sensor_cfg, rngs[i])
                batches.append(clip_to_map(template, b))
            else:
                batches.append({})
        central.ingest(weighted_union(batches, graph.pi))
        if protocol == "echoless":
            echoless_round(states, graph, batches, t, prior, messages)
            maps = [s.smap for s in states]
        else:
            for i in range(n):
                for j in graph.neighbors(i):
                    messages.append({"round": t, "sender": j, "receiver": i,
                                     "points": int(sum(len(v) for v in states[j].stats.values()))})
            new_stats = echo_round([s.stats for s in states], graph.weights, batches)
            for s, st in zip(states, new_stats):
                s.stats = st
            maps = None
        last = t == T + extra - 1
        if log_mae and central.classes and (t % mae_every == 0 or last):
            if maps is None:
                maps = [stats_to_map(template, s.stats) for s in states]
            for i, m in enumerate(maps):
                if refresh:
                    m.refresh_caches()
                mean_mae, var_mae = mae_vs_centralized(m, central)
                mae_rows.append((t, i, mean_mae, var_mae))
    if protocol == "echoless":
        robot_maps = [s.smap for s in states]
    else:
        robot_maps = [stats_to_map(template, s.stats) for s in states]
    return MultiRobotResult(robot_maps, central, mae_rows, messages, states)
