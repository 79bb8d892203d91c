"""Local sampling of the interlacement point process at level u.

A sample realizes the restriction of the process to trajectories meeting a
finite anchor set A, inside a finite observation window:

1. the number of trajectories is Poisson(u * cap(A));
2. time-0 points ("anchors") are i.i.d. from the normalized equilibrium
   measure of A;
3. forward parts are independent simple random walks;
4. backward parts are walks conditioned never to hit A, realized by
   h-transform steps on the escape field inside the window and by
   rejection (restart on an A-hit) once the walk has left the window
   region.  Both phases sample the exact conditioned law; the h-field is
   the solved Dirichlet problem, so no step can enter A.

Both half-trajectories are truncated once the probability of returning to
the configured target (the window ball by default) drops below eps_trunc;
the certificate for each endpoint is recorded on the trajectory.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .lattice import Ball, RngStream, SiteSet, WalkPath, check_dim, pack_points, sup_norm
from .potential import (
    BallEquilibrium,
    EquilibriumMeasure,
    EscapeField,
    ball_capacity,
    cached_ball_equilibrium,
    capacity_mc,
    equilibrium_variational,
    escape_field,
    return_prob_bound,
)

__all__ = [
    "Trajectory",
    "InterlacementSample",
    "AnchorModel",
    "resolve_anchors",
    "sample",
    "superpose",
    "split_by_ball",
    "occupation_field",
    "cert_radius",
    "serialize_sample",
    "deserialize_sample",
]

_UNIT_CACHE: dict[int, np.ndarray] = {}


def _unit_steps(d: int) -> np.ndarray:
    """(2d, d) array of the unit steps +e_0, -e_0, +e_1, ..."""
    if d not in _UNIT_CACHE:
        u = np.zeros((2 * d, d), dtype=np.int64)
        for j in range(d):
            u[2 * j, j] = 1
            u[2 * j + 1, j] = -1
        _UNIT_CACHE[d] = u
    return _UNIT_CACHE[d]


_cert_cache: dict = {}


def cert_radius(cap: float, d: int, eps: float, lo: int = 2, hi_max: int = 500) -> int:
    """Smallest sup-distance at which the return probability to a set of the
    given capacity is certified below eps."""
    key = (round(float(cap), 6), d, float(eps), lo)
    if key in _cert_cache:
        return _cert_cache[key]
    hi = max(lo, 4)
    while return_prob_bound(hi, cap, d) > eps:
        hi *= 2
        if hi > hi_max:
            raise ValueError(
                f"eps={eps:g} needs a certificate distance beyond {hi_max} "
                f"(cap={cap:.3g}, d={d}); raise eps_trunc or shrink the target"
            )
    while lo < hi:
        mid = (lo + hi) // 2
        if return_prob_bound(mid, cap, d) <= eps:
            hi = mid
        else:
            lo = mid + 1
    _cert_cache[key] = lo
    return lo


# ---------------------------------------------------------------------------
# anchor models
# ---------------------------------------------------------------------------


@dataclass
class AnchorModel:
    """Capacity, entrance-point sampler and membership test for an anchor set."""

    d: int
    label: str
    cap: float
    cap_err: float
    radius: int  # sup-norm bound of the set
    contains: callable  # (n, d) points -> bool array
    draw: callable  # (rng, n) -> (n, d) anchors
    measure: EquilibriumMeasure | None = None  # explicit per-site measure, when available
    sites: SiteSet | None = None


def resolve_anchors(
    A,
    d: int | None = None,
    stream: RngStream = RngStream(0xA11C, 0),
    method: str = "auto",
    mc_walkers: int = 200,
) -> AnchorModel:
    """Build an AnchorModel from a SiteSet or a Ball.

    method "auto": exact variational measure when the dense solve is
    affordable (|A| <= 4000), per-site Monte Carlo escape estimates for
    larger explicit sets, orbit-compressed Monte Carlo for large balls.
    """
    if isinstance(A, Ball):
        d = A.d if d is None else d
        check_dim(d)
        if np.any(A.center != 0):
            raise ValueError("anchor balls must be centered at the origin")
        if method == "variational" or (method == "auto" and A.volume() <= 4000):
            K = SiteSet.from_ball(A)
            m = equilibrium_variational(K)
            return _model_from_measure(m, f"ball[r={A.radius}]")
        be = cached_ball_equilibrium(d, A.radius, stream=stream, walkers=mc_walkers)
        return AnchorModel(
            d=d,
            label=f"ball[r={A.radius}]",
            cap=be.total_mass,
            cap_err=be.stderr,
            radius=A.radius,
            contains=A.contains,
            draw=be.sample_anchors,
            measure=None,
            sites=None,
        )
    if not isinstance(A, SiteSet):
        raise TypeError("anchor set must be a SiteSet or a Ball")
    check_dim(A.d)
    if len(A) == 0:
        raise ValueError("anchor set is empty")
    if method == "variational" or (method == "auto" and len(A) <= 4000):
        m = equilibrium_variational(A)
    else:
        m = capacity_mc(A, walkers_per_site=mc_walkers, stream=stream)
    return _model_from_measure(m, f"sites[n={len(A)}]")


def _model_from_measure(m: EquilibriumMeasure, label: str) -> AnchorModel:
    pts = m.support.points()
    w = np.maximum(m.weights, 0.0)
    w[w < 1e-12 * w.max()] = 0.0  # interior sites carry no entrance mass
    p = w / w.sum()

    def draw(rng: np.random.Generator, n: int) -> np.ndarray:
        idx = rng.choice(pts.shape[0], size=n, p=p)
        return pts[idx]

    return AnchorModel(
        d=m.support.d,
        label=label,
        cap=m.total_mass,
        cap_err=m.stderr,
        radius=int(sup_norm(pts).max()),
        contains=m.support.contains,
        draw=draw,
        measure=m,
        sites=m.support,
    )


# ---------------------------------------------------------------------------
# sample containers
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """One trajectory of the local picture: anchor at time 0, forward part
    (t >= 0), backward part (t <= 0, stored outward from the anchor)."""

    anchor: np.ndarray
    label: tuple  # (sample id, index)
    trace_keys: np.ndarray  # packed windowed trace (sorted unique)
    fwd_cert: float
    bwd_cert: float
    fwd_positions: np.ndarray | None = None  # (n+1, d) incl. anchor, when stored
    bwd_positions: np.ndarray | None = None  # (m+1, d) incl. anchor; row k is X(-k)

    def trace(self, window: Ball) -> SiteSet:
        return SiteSet(d=self.anchor.shape[0], bound=window.radius, keys=self.trace_keys)


@dataclass
class InterlacementSample:
    """The local picture of the level-u process around anchor set A."""

    u: float
    d: int
    window: Ball
    anchor_label: str
    cap_A: float
    eps_trunc: float
    stop_radius: int
    mode: str  # counts | anchors | forward | full
    stream: RngStream
    n_traj: int
    trajectories: list = field(default_factory=list)
    anchors: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def trace_sets(self) -> list[SiteSet]:
        return [t.trace(self.window) for t in self.trajectories]

    def occupation_keys(self) -> np.ndarray:
        if not self.trajectories:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate([t.trace_keys for t in self.trajectories]))


# ---------------------------------------------------------------------------
# walk engines (batched across the trajectories of one sample)
# ---------------------------------------------------------------------------


def _block_steps(rng, m: int, block: int, d: int) -> np.ndarray:
    dirs = rng.integers(0, 2 * d, size=(m, block))
    steps = np.zeros((m, block, d), dtype=np.int8)
    ii = np.repeat(np.arange(m), block)
    steps[ii, np.tile(np.arange(block), m), (dirs >> 1).ravel()] = (1 - 2 * (dirs & 1)).ravel()
    return steps


def _forward_batch(
    starts: np.ndarray,
    rng: np.random.Generator,
    window_R: int,
    stop_radius: int,
    collect: bool,
    collect_paths: bool = False,
    block: int = 64,
    max_steps: int = 10_000_000,
):
    """Run plain SRWs until |X| >= stop_radius.

    Returns (in-window traces per walker or None, end positions,
    steps taken, full paths per walker or None).  Traces include every
    visit with |X| <= window_R, in order, excluding the start.
    """
    m, d = starts.shape
    pos = starts.copy()
    traces = [[] for _ in range(m)] if collect else None
    paths = [[] for _ in range(m)] if collect_paths else None
    steps_taken = np.zeros(m, dtype=np.int64)
    alive = np.nonzero(sup_norm(pos) < stop_radius)[0]
    while alive.size:
        st = _block_steps(rng, alive.size, block, d)
        traj = np.cumsum(st, axis=1, dtype=np.int64) + pos[alive][:, None, :]
        nrm = sup_norm(traj)
        done = nrm >= stop_radius
        first_done = np.where(done.any(axis=1), done.argmax(axis=1), block)
        keep_len = np.minimum(first_done + 1, block)
        if collect:
            inw = nrm <= window_R
            inw &= np.arange(block)[None, :] <= first_done[:, None]
            for k in np.nonzero(inw.any(axis=1))[0]:
                traces[alive[k]].append(traj[k][inw[k]])
        if collect_paths:
            for k in range(alive.size):
                paths[alive[k]].append(traj[k, : keep_len[k]])
        pos[alive] = traj[np.arange(alive.size), keep_len - 1]
        steps_taken[alive] += keep_len
        resolved = first_done < block
        if steps_taken.max() > max_steps:
            raise RuntimeError("forward walk exceeded the step guard")
        alive = alive[~resolved]
    out_traces = None
    if collect:
        out_traces = [
            np.concatenate(t, axis=0) if t else np.empty((0, d), dtype=np.int64) for t in traces
        ]
    out_paths = None
    if collect_paths:
        out_paths = [
            np.concatenate(p, axis=0) if p else np.empty((0, d), dtype=np.int64) for p in paths
        ]
    return out_traces, pos, steps_taken, out_paths


def _backward_batch(
    anchors: np.ndarray,
    rng: np.random.Generator,
    h_field: EscapeField,
    A_contains,
    A_radius: int,
    window_R: int,
    stop_radius: int,
    collect: bool,
    block: int = 64,
    max_steps: int = 10_000_000,
):
    """Sample backward parts conditioned never to hit A.

    Phase 1 (inside {|z| < window_R}): h-transform steps, neighbor chosen
    with probability proportional to the escape field, which vanishes on A.
    Phase 2 (from the first point with |z| >= window_R): plain SRW until
    |z| >= stop_radius, restarted from the phase-1 exit point whenever it
    hits A.  Restarting realizes the conditioning exactly.

    Returns (traces or None, end positions, restart counts, phase1 paths list).
    """
    m, d = anchors.shape
    units = _unit_steps(d)
    side = h_field.side
    R = h_field.box.radius
    hgrid = h_field.values

    # ---- phase 1: single-step h-transform inside the window region
    pos = anchors.copy()
    p1_paths = [[a.copy()] for a in anchors]
    active = np.nonzero(sup_norm(pos) < window_R)[0]
    it = 0
    while active.size:
        z = pos[active]
        nbrs = z[:, None, :] + units[None, :, :]  # (k, 2d, d)
        flat = np.zeros((active.size, 2 * d), dtype=np.int64)
        rel = nbrs + R
        for j in range(d):
            flat = flat * side + rel[:, :, j]
        hv = hgrid[flat]
        tot = hv.sum(axis=1)
        if np.any(tot <= 0):
            raise RuntimeError("backward step from a site with no escape direction")
        cdf = np.cumsum(hv, axis=1)
        u = rng.random(active.size) * tot
        choice = (cdf < u[:, None]).sum(axis=1)
        z_new = nbrs[np.arange(active.size), choice]
        pos[active] = z_new
        for k, idx in enumerate(active):
            p1_paths[idx].append(z_new[k].copy())
        active = active[sup_norm(z_new) < window_R]
        it += 1
        if it > max_steps:
            raise RuntimeError("backward phase-1 exceeded the step guard")

    restart_pts = pos.copy()  # first position with |z| >= window_R
    restarts = np.zeros(m, dtype=np.int64)

    # ---- phase 2: rejection SRW out to the stop radius
    p2_traces = [[] for _ in range(m)]
    p2_paths = [[] for _ in range(m)] if collect else None
    cur = pos.copy()
    alive = np.nonzero(sup_norm(cur) < stop_radius)[0]
    while alive.size:
        st = _block_steps(rng, alive.size, block, d)
        traj = np.cumsum(st, axis=1, dtype=np.int64) + cur[alive][:, None, :]
        nrm = sup_norm(traj)
        hitA = np.zeros((alive.size, block), dtype=bool)
        near = nrm <= A_radius
        if near.any():
            hitA[near] = A_contains(traj[near])
        done = nrm >= stop_radius
        first_hit = np.where(hitA.any(axis=1), hitA.argmax(axis=1), block)
        first_done = np.where(done.any(axis=1), done.argmax(axis=1), block)
        for k in np.nonzero(first_hit < first_done)[0]:  # restart these walkers
            w = alive[k]
            restarts[w] += 1
            p2_traces[w] = []
            if collect:
                p2_paths[w] = []
            cur[w] = restart_pts[w]
        ok = first_hit >= first_done  # no A-hit before finishing the block/stop
        for k in np.nonzero(ok)[0]:
            w = alive[k]
            keep = int(min(first_done[k] + 1, block))
            seg = traj[k, :keep]
            inw = nrm[k, :keep] <= window_R
            if inw.any():
                p2_traces[w].append(seg[inw])
            if collect:
                p2_paths[w].append(seg)
            cur[w] = seg[-1]
        if restarts.max() > 10_000:
            raise RuntimeError("backward rejection stuck (A too large for the window?)")
        alive = np.nonzero(sup_norm(cur) < stop_radius)[0]

    traces = []
    paths = [] if collect else None
    for w in range(m):
        segs = [np.asarray(p1_paths[w][1:], dtype=np.int64).reshape(-1, d)]
        segs[0] = segs[0][sup_norm(segs[0]) <= window_R] if segs[0].size else segs[0]
        segs += p2_traces[w]
        traces.append(np.concatenate(segs, axis=0) if segs else np.empty((0, d), dtype=np.int64))
        if collect:
            full = [np.asarray(p1_paths[w], dtype=np.int64).reshape(-1, d)]
            full += p2_paths[w]
            paths.append(np.concatenate(full, axis=0))
    return traces, cur, restarts, paths


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

_escape_field_cache: dict = {}


def _cached_escape_field(model: AnchorModel, window: Ball) -> EscapeField:
    key = (model.d, model.label, window.radius, tuple(window.center))
    if key not in _escape_field_cache:
        if model.measure is None or model.sites is None:
            raise ValueError(
                "backward sampling needs an explicit equilibrium measure; "
                "use a smaller anchor set or mode='forward'"
            )
        _escape_field_cache[key] = escape_field(model.sites, window, model.measure)
    return _escape_field_cache[key]


def sample(
    u: float,
    A,
    window: Ball,
    eps_trunc: float = 1e-3,
    stream: RngStream = RngStream(0, 0),
    mode: str = "full",
    anchor_model: AnchorModel | None = None,
    stop_target: Ball | None = None,
    store_paths: bool = False,
    force_n: int | None = None,
    sample_id: int | None = None,
) -> InterlacementSample:
    """Draw one local interlacement sample.

    ``mode`` controls how much of the picture is realized: "counts" stops
    after the Poisson draw, "anchors" adds entrance points, "forward" adds
    forward walks and traces, "full" adds the conditioned backward walks.

    ``stop_target`` (default: the window ball) is the set the truncation
    certificate refers to: walks run until the probability of returning to
    it is below eps_trunc.  Use a smaller target to keep runs short when
    the downstream observable only involves that target.
    """
    if u <= 0:
        raise ValueError("intensity u must be positive")
    if eps_trunc <= 0:
        raise ValueError("eps_trunc must be positive")
    if mode not in ("counts", "anchors", "forward", "full"):
        raise ValueError(f"unknown mode {mode!r}")
    model = anchor_model if anchor_model is not None else resolve_anchors(A, stream=stream.child(999))
    d = model.d
    if np.any(window.center != 0):
        raise ValueError("observation windows are centered at the origin")
    if model.radius > window.radius - 2 and mode in ("forward", "full"):
        raise ValueError("anchor set must sit inside the window with margin >= 2")

    target = stop_target or window
    tgt_cap = ball_capacity(d, target.radius)
    stop_r = max(target.radius + cert_radius(tgt_cap, d, eps_trunc), window.radius + 1)

    rng = stream.generator()
    n = int(rng.poisson(u * model.cap)) if force_n is None else int(force_n)
    samp = InterlacementSample(
        u=u,
        d=d,
        window=window,
        anchor_label=model.label,
        cap_A=model.cap,
        eps_trunc=eps_trunc,
        stop_radius=stop_r,
        mode=mode,
        stream=stream,
        n_traj=n,
        meta={"cap_err": model.cap_err, "target_radius": target.radius, "target_cap": tgt_cap},
    )
    if mode == "counts" or n == 0:
        if mode != "counts":
            samp.anchors = np.empty((0, d), dtype=np.int64)
        return samp

    anchors = model.draw(rng, n)
    samp.anchors = anchors
    if mode == "anchors":
        return samp

    fwd_traces, fwd_end, _, fwd_paths = _forward_batch(
        anchors, rng, window.radius, stop_r, collect=True, collect_paths=store_paths
    )
    if mode == "full":
        h_field = _cached_escape_field(model, window)
        bwd_traces, bwd_end, restarts, bwd_paths = _backward_batch(
            anchors, rng, h_field, model.contains, model.radius,
            window.radius, stop_r, collect=store_paths,
        )
        samp.meta["backward_restarts"] = int(restarts.sum())
    else:
        bwd_traces = [np.empty((0, d), dtype=np.int64)] * n
        bwd_end = anchors
        bwd_paths = None

    sid = sample_id if sample_id is not None else stream.stream
    for i in range(n):
        pts = np.concatenate([anchors[i][None, :], fwd_traces[i], bwd_traces[i]], axis=0)
        pts = pts[sup_norm(pts) <= window.radius]
        keys = np.unique(pack_points(pts, window.radius, d))
        fc = return_prob_bound(int(sup_norm(fwd_end[i])) - target.radius, tgt_cap, d)
        bc = (
            return_prob_bound(int(sup_norm(bwd_end[i])) - target.radius, tgt_cap, d)
            if mode == "full"
            else 0.0
        )
        samp.trajectories.append(
            Trajectory(
                anchor=anchors[i],
                label=(sid, i),
                trace_keys=keys,
                fwd_cert=fc,
                bwd_cert=bc,
                fwd_positions=(
                    np.concatenate([anchors[i][None, :], fwd_paths[i]], axis=0)
                    if store_paths
                    else None
                ),
                bwd_positions=(
                    bwd_paths[i] if (store_paths and mode == "full") else None
                ),
            )
        )
    return samp


def superpose(s1: InterlacementSample, s2: InterlacementSample) -> InterlacementSample:
    """Merge two independent samples; the result has level u1 + u2."""
    if s1.d != s2.d or s1.window.radius != s2.window.radius:
        raise ValueError("samples must share the window")
    if s1.anchor_label != s2.anchor_label:
        raise ValueError("samples must share the anchor set")
    out = InterlacementSample(
        u=s1.u + s2.u,
        d=s1.d,
        window=s1.window,
        anchor_label=s1.anchor_label,
        cap_A=s1.cap_A,
        eps_trunc=max(s1.eps_trunc, s2.eps_trunc),
        stop_radius=max(s1.stop_radius, s2.stop_radius),
        mode=s1.mode if s1.mode == s2.mode else "counts",
        stream=s1.stream,
        n_traj=s1.n_traj + s2.n_traj,
        trajectories=list(s1.trajectories) + list(s2.trajectories),
        meta={"superposed": True},
    )
    if s1.anchors is not None and s2.anchors is not None:
        out.anchors = np.concatenate([s1.anchors, s2.anchors], axis=0)
    return out


def split_by_ball(s: InterlacementSample, r: int):
    """Partition the trajectories by whether their trace meets B(0, r)."""
    if r > s.window.radius:
        raise ValueError("split radius exceeds the window")
    if s.mode not in ("forward", "full"):
        raise ValueError("split needs traces; sample with mode='forward' or 'full'")
    ball = Ball(np.zeros(s.d, dtype=np.int64), r)
    near, far = [], []
    for t in s.trajectories:
        pts = t.trace(s.window).points()
        (near if bool(ball.contains(pts).any()) else far).append(t)

    def _part(traj, tag):
        return InterlacementSample(
            u=s.u, d=s.d, window=s.window, anchor_label=s.anchor_label, cap_A=s.cap_A,
            eps_trunc=s.eps_trunc, stop_radius=s.stop_radius, mode=s.mode, stream=s.stream,
            n_traj=len(traj), trajectories=traj, meta={"split": tag, "split_radius": r},
        )

    return _part(near, "meets-ball"), _part(far, "avoids-ball")


def occupation_field(s: InterlacementSample, region: Ball) -> SiteSet:
    """Union of all trajectory traces, intersected with the region."""
    if region.radius > s.window.radius or np.any(region.center != 0):
        raise ValueError("region must be an origin ball inside the window")
    keys = s.occupation_keys()
    if keys.size == 0:
        return SiteSet(d=s.d, bound=max(region.radius, 1), keys=np.empty(0, dtype=np.int64))
    pts = SiteSet(d=s.d, bound=s.window.radius, keys=keys).points()
    pts = pts[region.contains(pts)]
    return SiteSet.from_points(pts, d=s.d, bound=region.radius if len(pts) else 1)


# ---------------------------------------------------------------------------
# line-oriented text serialization
# ---------------------------------------------------------------------------


def _rle_encode(positions: np.ndarray) -> str:
    """Run-length-encoded direction list for a nearest-neighbor path.

    Direction index of a step +/-e_j is 2*j (plus) or 2*j+1 (minus);
    runs are written "dir" or "dirxcount", comma separated.
    """
    if positions.shape[0] <= 1:
        return "-"
    inc = np.diff(positions, axis=0)
    axis = np.abs(inc).argmax(axis=1)
    sign = inc[np.arange(inc.shape[0]), axis]
    dirs = 2 * axis + (sign < 0)
    tokens = []
    i = 0
    while i < dirs.size:
        j = i
        while j + 1 < dirs.size and dirs[j + 1] == dirs[i]:
            j += 1
        tokens.append(f"{dirs[i]}" if j == i else f"{dirs[i]}x{j - i + 1}")
        i = j + 1
    return ",".join(tokens)


def _rle_decode(text: str, start: np.ndarray, d: int) -> np.ndarray:
    if text == "-":
        return start[None, :].copy()
    dirs = []
    for tok in text.split(","):
        if "x" in tok:
            v, c = tok.split("x")
            dirs.extend([int(v)] * int(c))
        else:
            dirs.append(int(tok))
    dirs = np.asarray(dirs, dtype=np.int64)
    steps = np.zeros((dirs.size, d), dtype=np.int64)
    steps[np.arange(dirs.size), dirs >> 1] = 1 - 2 * (dirs & 1)
    pos = np.empty((dirs.size + 1, d), dtype=np.int64)
    pos[0] = start
    np.cumsum(steps, axis=0, out=pos[1:])
    pos[1:] += start
    return pos


def serialize_sample(s: InterlacementSample, fh) -> None:
    """Write a sample in the line-oriented text format.

    Header lines carry the generation parameters; each trajectory is one
    record: sample id, index, anchor, forward and backward RLE step lists,
    and the two truncation certificates.  Field order is fixed so equal
    samples serialize byte-identically.  Requires store_paths=True samples
    for modes with walks.
    """
    fh.write("# interlacement-sample v1\n")
    fh.write(
        f"# u={s.u!r} d={s.d} window_radius={s.window.radius} eps_trunc={s.eps_trunc!r} "
        f"stop_radius={s.stop_radius} mode={s.mode} seed={s.stream.seed} stream={s.stream.stream}\n"
    )
    fh.write(f"# anchors={s.anchor_label} cap={s.cap_A!r} n_traj={s.n_traj}\n")
    for t in s.trajectories:
        if s.mode in ("forward", "full") and t.fwd_positions is None:
            raise ValueError("serialization needs store_paths=True samples")
        anchor = ",".join(str(c) for c in t.anchor)
        fwd = _rle_encode(t.fwd_positions) if t.fwd_positions is not None else "-"
        bwd = _rle_encode(t.bwd_positions) if t.bwd_positions is not None else "-"
        fh.write(
            f"traj {t.label[0]} {t.label[1]} {anchor} {fwd} {bwd} {t.fwd_cert!r} {t.bwd_cert!r}\n"
        )


def deserialize_sample(fh) -> InterlacementSample:
    head = fh.readline().strip()
    if head != "# interlacement-sample v1":
        raise ValueError("not an interlacement sample file")
    kv = {}
    for _ in range(2):
        for tok in fh.readline().strip("#\n ").split():
            if "=" in tok:
                k, v = tok.split("=", 1)
                kv[k] = v
    d = int(kv["d"])
    window = Ball(np.zeros(d, dtype=np.int64), int(kv["window_radius"]))
    s = InterlacementSample(
        u=float(kv["u"]),
        d=d,
        window=window,
        anchor_label=kv["anchors"],
        cap_A=float(kv["cap"]),
        eps_trunc=float(kv["eps_trunc"]),
        stop_radius=int(kv["stop_radius"]),
        mode=kv["mode"],
        stream=RngStream(int(kv["seed"]), int(kv["stream"])),
        n_traj=int(kv["n_traj"]),
    )
    anchors = []
    for line in fh:
        if not line.strip() or line.startswith("#"):
            continue
        _, sid, idx, anchor, fwd, bwd, fc, bc = line.split()
        a = np.array([int(c) for c in anchor.split(",")], dtype=np.int64)
        anchors.append(a)
        fpos = _rle_decode(fwd, a, d)
        bpos = _rle_decode(bwd, a, d)
        pts = np.concatenate([fpos, bpos], axis=0)
        pts = pts[sup_norm(pts) <= window.radius]
        keys = np.unique(pack_points(pts, window.radius, d))
        s.trajectories.append(
            Trajectory(
                anchor=a,
                label=(int(sid), int(idx)),
                trace_keys=keys,
                fwd_cert=float(fc),
                bwd_cert=float(bc),
                fwd_positions=fpos,
                bwd_positions=bpos if bwd != "-" else None,
            )
        )
    if anchors:
        s.anchors = np.stack(anchors)
    return s
