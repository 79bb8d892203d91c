"""Trajectory-intersection graph, clipped trace sets, and layered sets.

The graph G has one vertex per trajectory and an edge between two
trajectories whenever their traces share a lattice site.  Construction
goes through a site -> visiting-trajectories index, so the cost is one
pass over the traces plus the co-visitor pairs.

``clipped_trace_set`` is the early-time trace of a family of walks: the
union over walks of the sites visited at times 1 <= t <= R^2/2 within
sup-distance R of the walk's start.  ``build_layers`` iterates it: each
layer is the clipped trace set of a fresh batch of interlacement
trajectories anchored on the previous layer, which is the mechanism that
makes capacity saturate after enough layers.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .lattice import Ball, RngStream, SiteSet, WalkPath, check_dim, pack_points, sup_norm, walk_until
from .potential import capacity_mc_sampled, capacity_variational, equilibrium_variational
from .sampler import InterlacementSample, _block_steps

__all__ = [
    "IntersectionGraph",
    "build_graph",
    "graph_distance",
    "diameter_stat",
    "clipped_trace_set",
    "incident_trace_set",
    "LayerSet",
    "build_layers",
    "saturation_depth",
]


def saturation_depth(d: int) -> int:
    """ceil((d-2)/2): the layer count at which trace capacity saturates,
    and the graph-diameter value for the infinite process."""
    check_dim(d)
    return int(np.ceil((d - 2) / 2))


# ---------------------------------------------------------------------------
# intersection graph
# ---------------------------------------------------------------------------


@dataclass
class IntersectionGraph:
    labels: list  # vertex id -> trajectory label
    adjacency: list  # vertex id -> sorted np.ndarray of neighbor ids
    n_edges: int
    window: Ball

    def __len__(self) -> int:
        return len(self.labels)

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def edges(self):
        for v, nbrs in enumerate(self.adjacency):
            for w in nbrs:
                if w > v:
                    yield (v, int(w))

    def save_edge_list(self, fh) -> None:
        """Edge-list text export: one `label_v label_w` pair per line."""
        fh.write(f"# intersection-graph v1 vertices={len(self.labels)} edges={self.n_edges}\n")
        for v, w in self.edges():
            lv, lw = self.labels[v], self.labels[w]
            fh.write(f"{lv[0]}:{lv[1]} {lw[0]}:{lw[1]}\n")


def build_graph(samples) -> IntersectionGraph:
    """Intersection graph of all trajectories of the given samples.

    Vertices are trajectories (labelled), edges join distinct trajectories
    whose windowed traces share at least one site.
    """
    if isinstance(samples, InterlacementSample):
        samples = [samples]
    if not samples:
        raise ValueError("no samples")
    window = samples[0].window
    d = samples[0].d
    for s in samples:
        if s.window.radius != window.radius or s.d != d:
            raise ValueError("samples must share the window and dimension")
        if s.mode not in ("forward", "full"):
            raise ValueError("graph construction needs traces")
    labels, key_arrays, owner_arrays = [], [], []
    for s in samples:
        for t in s.trajectories:
            vid = len(labels)
            labels.append(t.label)
            key_arrays.append(t.trace_keys)
            owner_arrays.append(np.full(t.trace_keys.size, vid, dtype=np.int64))
    n = len(labels)
    adjacency = [set() for _ in range(n)]
    n_edges = 0
    if n and key_arrays:
        keys = np.concatenate(key_arrays)
        owners = np.concatenate(owner_arrays)
        order = np.argsort(keys, kind="stable")
        keys, owners = keys[order], owners[order]
        boundaries = np.nonzero(np.diff(keys))[0] + 1
        starts = np.concatenate([[0], boundaries])
        ends = np.concatenate([boundaries, [keys.size]])
        seen = set()
        for a, b in zip(starts, ends):
            if b - a < 2:
                continue
            group = np.unique(owners[a:b])
            for i in range(group.size):
                for j in range(i + 1, group.size):
                    e = (int(group[i]), int(group[j]))
                    if e not in seen:
                        seen.add(e)
                        adjacency[e[0]].add(e[1])
                        adjacency[e[1]].add(e[0])
        n_edges = len(seen)
    return IntersectionGraph(
        labels=labels,
        adjacency=[np.array(sorted(s), dtype=np.int64) for s in adjacency],
        n_edges=n_edges,
        window=window,
    )


def graph_distance(g: IntersectionGraph, v: int, w: int):
    """BFS distance between two vertices; None when unreachable."""
    if not (0 <= v < len(g) and 0 <= w < len(g)):
        raise ValueError("unknown vertex")
    if v == w:
        return 0
    dist = {v: 0}
    q = deque([v])
    while q:
        x = q.popleft()
        for y in g.adjacency[x]:
            y = int(y)
            if y not in dist:
                dist[y] = dist[x] + 1
                if y == w:
                    return dist[y]
                q.append(y)
    return None


def _bfs_all(g: IntersectionGraph, v: int) -> dict:
    dist = {v: 0}
    q = deque([v])
    while q:
        x = q.popleft()
        for y in g.adjacency[x]:
            y = int(y)
            if y not in dist:
                dist[y] = dist[x] + 1
                q.append(y)
    return dist


def diameter_stat(g: IntersectionGraph, samples, core_radius: int | None = None):
    """Window-diameter probe: max distance over trajectory pairs whose
    traces meet the core ball B(0, window/4).

    The restriction keeps boundary-truncated trajectories out of the
    statistic.  Returns (max distance or None if some core pair is
    disconnected, number of core vertices, distance histogram dict).
    """
    if isinstance(samples, InterlacementSample):
        samples = [samples]
    R = g.window.radius if core_radius is None else core_radius * 4
    core_r = R // 4
    core_ball = Ball(np.zeros(samples[0].d, dtype=np.int64), core_r)
    core = []
    vid = 0
    for s in samples:
        for t in s.trajectories:
            pts = t.trace(s.window).points()
            if bool(core_ball.contains(pts).any()):
                core.append(vid)
            vid += 1
    hist: dict = {}
    worst = 0
    disconnected = False
    for i, v in enumerate(core):
        dist = _bfs_all(g, v)
        for w in core[i + 1:]:
            dv = dist.get(w)
            if dv is None:
                disconnected = True
            else:
                hist[dv] = hist.get(dv, 0) + 1
                worst = max(worst, dv)
    return (None if disconnected else worst), len(core), hist


# ---------------------------------------------------------------------------
# clipped trace sets
# ---------------------------------------------------------------------------


def _positions_of(path) -> np.ndarray:
    if isinstance(path, WalkPath):
        return path.positions
    return np.asarray(path, dtype=np.int64)


def clipped_trace_set(paths, R: int, d: int | None = None) -> SiteSet:
    """Union over walks of {X(t) : 1 <= t <= R^2/2} clipped to B(X(0), R).

    ``paths`` is a list of position arrays (row 0 = start) or WalkPaths;
    every path must have at least floor(R^2/2) steps.  Time 0 is excluded
    (the start belongs to the set only if revisited).
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    horizon = int(R * R / 2)
    pieces = []
    for p in paths:
        pos = _positions_of(p)
        if d is None:
            d = pos.shape[1]
        if pos.shape[0] - 1 < horizon:
            raise ValueError(f"path has {pos.shape[0]-1} steps, needs {horizon}")
        seg = pos[1 : horizon + 1]
        keep = sup_norm(seg - pos[0]) <= R
        pieces.append(seg[keep])
    if d is None:
        raise ValueError("cannot infer dimension from empty input")
    if not pieces:
        return SiteSet.from_points(np.empty((0, d), dtype=np.int64), d=d)
    pts = np.concatenate(pieces, axis=0)
    return SiteSet.from_points(pts, d=d) if pts.size else SiteSet.from_points(
        np.empty((0, d), dtype=np.int64), d=d
    )


def clipped_trace_of_walks(starts: np.ndarray, R: int, rng) -> SiteSet:
    """Clipped trace set of fresh SRWs from the given starts, built in
    walker chunks so huge families never materialize all paths at once."""
    m, d = starts.shape
    horizon = int(R * R / 2)
    bound = int(sup_norm(starts).max()) + R if m else R
    chunk = max(1, int(1.5e7) // max(horizon, 1))
    all_keys = []
    for lo in range(0, m, chunk):
        hi = min(m, lo + chunk)
        paths = _fixed_walks(starts[lo:hi], horizon, rng)
        seg = paths[:, 1:, :]
        keep = sup_norm(seg - starts[lo:hi, None, :]) <= R
        pts = seg[keep]
        if pts.size:
            all_keys.append(np.unique(pack_points(pts, bound, d)))
    if not all_keys:
        return SiteSet.from_points(np.empty((0, d), dtype=np.int64), d=d)
    keys = np.unique(np.concatenate(all_keys))
    return SiteSet(d=d, bound=bound, keys=keys)


def incident_trace_set(s: InterlacementSample, A: SiteSet, R: int) -> SiteSet:
    """Clipped trace set of the sample's trajectories that meet A,
    re-parametrized so time 0 is the first entry into A.

    Needs store_paths=True samples (the re-parametrization walks the
    stored positions).  Trajectories whose stored trace misses A are
    dropped; too-short remainders are an error, matching the clipped-set
    contract.
    """
    kept = []
    for t in s.trajectories:
        if t.fwd_positions is None:
            raise ValueError("incident_trace_set needs store_paths=True samples")
        back = t.bwd_positions[::-1] if t.bwd_positions is not None and len(t.bwd_positions) > 1 else t.anchor[None, :]
        full = np.concatenate([back, t.fwd_positions[1:]], axis=0)
        inA = A.contains(full)
        w = np.nonzero(inA)[0]
        if w.size == 0:
            continue
        kept.append(full[w[0]:])
    if not kept:
        return SiteSet.from_points(np.empty((0, s.d), dtype=np.int64), d=s.d)
    return clipped_trace_set(kept, R, d=s.d)


# ---------------------------------------------------------------------------
# layered sets
# ---------------------------------------------------------------------------


@dataclass
class LayerSet:
    """One layer of the iterated trace construction.

    ``site_owner`` maps each site (aligned with sites.points()) to the
    index of the trajectory that visited it; together with
    ``anchor_owner`` (trajectory -> site index in the previous layer) it
    stores the witness chain back to the seed walk.
    """

    s: int
    sites: SiteSet
    r: int
    R: int
    n_traj: int
    site_owner: np.ndarray
    anchors: np.ndarray  # (n_traj, d)
    anchor_owner: np.ndarray  # (n_traj,) site index into previous layer, -1 for layer 1
    dropped_near_ball: int = 0
    meta: dict = field(default_factory=dict)


def _fixed_walks(starts: np.ndarray, n_steps: int, rng) -> np.ndarray:
    """(m, n_steps+1, d) positions of independent SRWs from given starts."""
    m, d = starts.shape
    out = np.empty((m, n_steps + 1, d), dtype=np.int64)
    out[:, 0] = starts
    chunk = max(1, int(2e7) // max(n_steps, 1))
    for lo in range(0, m, chunk):
        hi = min(m, lo + chunk)
        st = _block_steps(rng, hi - lo, n_steps, d)
        out[lo:hi, 1:] = np.cumsum(st, axis=1, dtype=np.int64) + starts[lo:hi, None, :]
    return out


def build_layers(
    s_max: int,
    r: int,
    R: int,
    u: float,
    d: int,
    stream: RngStream,
    x0=None,
    level_per_layer: float | None = None,
    anchor_walkers: int = 64,
) -> list[LayerSet]:
    """Iterate the layered trace construction.

    Layer 1 is the clipped trace set of the post-exit segment of an
    independent walk started at x0 in B(0, R).  Layer s >= 2 is the
    clipped trace set of a fresh level-u batch of trajectories anchored on
    layer s-1, thinned to trajectories whose generating segment avoids
    B(0, r) (the observable part of the trace; the thinning restriction is
    recorded per layer).

    Anchor capacities/measures use the exact dense solve up to 2000 sites
    and per-site Monte Carlo beyond.
    """
    check_dim(d)
    if not (0 < r < R):
        raise ValueError("need 0 < r < R")
    if s_max < 1:
        raise ValueError("s_max >= 1")
    lvl = u if level_per_layer is None else level_per_layer
    horizon = int(R * R / 2)
    rng = stream.generator()
    x0 = np.zeros(d, dtype=np.int64) if x0 is None else np.asarray(x0, dtype=np.int64)
    if int(sup_norm(x0)) > R:
        raise ValueError("x0 must lie in B(0, R)")

    # seed walk: run to the exit of B(0, R), then a fresh segment of R^2/2 steps
    seed = walk_until(x0, stream.child(0), exit_ball=Ball(np.zeros(d, dtype=np.int64), R))
    y0 = seed.end[None, :]
    ypath = _fixed_walks(y0, horizon, rng)[0]
    a1 = clipped_trace_set([ypath], R, d=d)
    seg = ypath[1 : horizon + 1]
    keep = sup_norm(seg - ypath[0]) <= R
    owner_pts = seg[keep]
    owner = _owner_index(a1, owner_pts, np.zeros(owner_pts.shape[0], dtype=np.int64))
    layers = [
        LayerSet(
            s=1, sites=a1, r=r, R=R, n_traj=1, site_owner=owner,
            anchors=y0, anchor_owner=np.array([-1]), meta={"seed_exit": tuple(y0[0])},
        )
    ]

    ball_r = Ball(np.zeros(d, dtype=np.int64), r)
    for s in range(2, s_max + 1):
        prev = layers[-1]
        if len(prev.sites) == 0:
            raise RuntimeError(f"layer {s-1} is empty; enlarge R")
        if len(prev.sites) <= 2000:
            m = equilibrium_variational(prev.sites)
            cap, weights = m.total_mass, np.maximum(m.weights, 0.0)
        else:
            from .potential import capacity_mc

            m = capacity_mc(prev.sites, walkers_per_site=max(100, anchor_walkers), stream=stream.child(s * 7))
            cap, weights = m.total_mass, m.weights
        p = weights / weights.sum()
        n = int(rng.poisson(lvl * cap))
        pts_prev = prev.sites.points()
        if n == 0:
            anchors = np.empty((0, d), dtype=np.int64)
            anchor_idx = np.empty(0, dtype=np.int64)
        else:
            anchor_idx = rng.choice(pts_prev.shape[0], size=n, p=p)
            anchors = pts_prev[anchor_idx]
        paths = _fixed_walks(anchors, horizon, rng) if n else np.empty((0, horizon + 1, d), dtype=np.int64)
        # thin out trajectories whose generating segment meets B(0, r)
        meets = np.array(
            [bool((sup_norm(paths[i]) <= r).any()) for i in range(n)], dtype=bool
        )
        kept = np.nonzero(~meets)[0]
        site_chunks, owner_chunks = [], []
        for j, i in enumerate(kept):
            segi = paths[i, 1 : horizon + 1]
            ki = sup_norm(segi - paths[i, 0]) <= R
            site_chunks.append(segi[ki])
            owner_chunks.append(np.full(int(ki.sum()), j, dtype=np.int64))
        if site_chunks:
            pts = np.concatenate(site_chunks, axis=0)
            sites = SiteSet.from_points(pts, d=d)
            owner = _owner_index(sites, pts, np.concatenate(owner_chunks))
        else:
            sites = SiteSet.from_points(np.empty((0, d), dtype=np.int64), d=d)
            owner = np.empty(0, dtype=np.int64)
        layers.append(
            LayerSet(
                s=s, sites=sites, r=r, R=R, n_traj=int(kept.size), site_owner=owner,
                anchors=anchors[kept] if n else anchors,
                anchor_owner=anchor_idx[kept] if n else anchor_idx,
                dropped_near_ball=int(meets.sum()),
                meta={"cap_prev": cap, "level": lvl, "poisson_n": n},
            )
        )
    return layers


def _owner_index(sites: SiteSet, pts: np.ndarray, owners: np.ndarray) -> np.ndarray:
    """For each site (in key order) the owner of its first visit in `pts`."""
    if len(sites) == 0:
        return np.empty(0, dtype=np.int64)
    keys = pack_points(pts, sites.bound, sites.d)
    out = np.full(len(sites), -1, dtype=np.int64)
    pos = np.searchsorted(sites.keys, keys)
    for k in range(keys.size - 1, -1, -1):  # reversed so first visit wins
        out[pos[k]] = owners[k]
    return out


def verify_witness_chains(layers: list[LayerSet]) -> bool:
    """Check that every site of layer s traces back through intersecting
    trajectories to the seed walk: the trajectory that visited the site is
    anchored at a site of layer s-1, and so on down to layer 1."""
    for s in range(len(layers) - 1, 0, -1):
        lay, prev = layers[s], layers[s - 1]
        if len(lay.sites) == 0:
            continue
        if np.any(lay.site_owner < 0):
            return False
        owners = lay.anchor_owner
        if owners.size and (owners.min() < 0 or owners.max() >= len(prev.sites)):
            return False
        # anchors must be sites of the previous layer (that is the intersection)
        if owners.size:
            prev_pts = prev.sites.points()
            if not np.array_equal(prev_pts[owners], lay.anchors):
                return False
    return True
