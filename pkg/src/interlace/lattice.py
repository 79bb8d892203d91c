"""Z^d geometry, simple-random-walk generation, and reproducible RNG streams.

Conventions used throughout the package:

* points of Z^d are int64 arrays of shape (d,); batches are (n, d) arrays;
* the norm is the sup-norm |x| = max_j |x_j|;
* dimension d is a runtime parameter, 3 <= d <= 8 (d <= 2 is rejected
  everywhere: the walk is recurrent and the Green function diverges);
* randomness comes from counter-based Philox streams keyed by
  (master seed, stream index), so replica i is reproducible regardless
  of scheduling or parallelism.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MIN_DIM = 3
MAX_DIM = 8

#: default block length for incremental walk generation
_BLOCK = 4096


def check_dim(d: int) -> int:
    d = int(d)
    if not (MIN_DIM <= d <= MAX_DIM):
        raise ValueError(
            f"dimension d={d} unsupported: need {MIN_DIM} <= d <= {MAX_DIM} "
            "(the walk must be transient and grids must stay addressable)"
        )
    return d


def as_point(x, d: int | None = None) -> np.ndarray:
    """Coerce to an int64 lattice point, optionally checking the dimension."""
    p = np.asarray(x, dtype=np.int64)
    if p.ndim != 1:
        raise ValueError(f"a lattice point must be a 1-d integer vector, got shape {p.shape}")
    if d is not None and p.shape[0] != d:
        raise ValueError(f"point has dimension {p.shape[0]}, expected {d}")
    return p


def sup_norm(x) -> np.ndarray:
    """Sup-norm |x| = max_j |x_j|; works on a point or an (n, d) batch."""
    x = np.asarray(x)
    return np.max(np.abs(x), axis=-1)


@dataclass(frozen=True)
class Ball:
    """Sup-norm ball B(center, radius) = {y : |y - center| <= radius}."""

    center: np.ndarray
    radius: int

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if self.radius < 0:
            raise ValueError("ball radius must be nonnegative")
        object.__setattr__(self, "radius", int(self.radius))

    @property
    def d(self) -> int:
        return self.center.shape[0]

    def contains(self, points) -> np.ndarray:
        """Boolean membership for a point or an (n, d) batch."""
        return sup_norm(np.asarray(points, dtype=np.int64) - self.center) <= self.radius

    def points(self) -> np.ndarray:
        """All lattice points of the ball, shape ((2R+1)^d, d). Small balls only."""
        rng = np.arange(-self.radius, self.radius + 1, dtype=np.int64)
        grids = np.meshgrid(*([rng] * self.d), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        return pts + self.center

    def volume(self) -> int:
        return (2 * self.radius + 1) ** self.d


def _pack_base(d: int, bound: int) -> int:
    base = 2 * bound + 1
    if base ** d >= 2 ** 63:
        raise ValueError(f"packing bound {bound} too large for d={d} (key overflows int64)")
    return base


def pack_points(points: np.ndarray, bound: int, d: int) -> np.ndarray:
    """Pack integer points with |coords| <= bound into unique int64 keys.

    Callers must guarantee the bound; use SiteSet.contains for queries that
    may fall outside.
    """
    base = _pack_base(d, bound)
    pts = np.asarray(points, dtype=np.int64)
    keys = np.zeros(pts.shape[:-1], dtype=np.int64)
    for j in range(d):
        keys = keys * base + (pts[..., j] + bound)
    return keys


def unpack_keys(keys: np.ndarray, bound: int, d: int) -> np.ndarray:
    base = _pack_base(d, bound)
    keys = np.asarray(keys, dtype=np.int64)
    out = np.empty(keys.shape + (d,), dtype=np.int64)
    rem = keys.copy()
    for j in range(d - 1, -1, -1):
        out[..., j] = rem % base - bound
        rem //= base
    return out


@dataclass(frozen=True)
class SiteSet:
    """A hashed finite subset of Z^d (trace, ball, layer, ...).

    Stored as sorted unique packed int64 keys; `bound` is the sup-norm
    packing bound all member sites satisfy.
    """

    d: int
    bound: int
    keys: np.ndarray  # sorted unique int64

    @classmethod
    def from_points(cls, points, d: int | None = None, bound: int | None = None) -> "SiteSet":
        pts = np.asarray(points, dtype=np.int64)
        if pts.size == 0:
            pts = pts.reshape(0, d if d is not None else 0)
        if pts.ndim != 2:
            raise ValueError("expected an (n, d) array of points")
        if d is None:
            d = pts.shape[1]
        check_dim(d)
        if pts.shape[0] == 0:
            return cls(d=d, bound=max(bound or 1, 1), keys=np.empty(0, dtype=np.int64))
        b = int(sup_norm(pts).max()) if pts.shape[0] else 0
        if bound is None:
            bound = max(b, 1)
        elif b > bound:
            raise ValueError(f"points exceed requested packing bound {bound} (max |x| = {b})")
        keys = np.unique(pack_points(pts, bound, d))
        return cls(d=d, bound=int(bound), keys=keys)

    @classmethod
    def from_ball(cls, ball: Ball) -> "SiteSet":
        return cls.from_points(ball.points(), d=ball.d)

    def __len__(self) -> int:
        return int(self.keys.size)

    def points(self) -> np.ndarray:
        return unpack_keys(self.keys, self.bound, self.d)

    def contains(self, points) -> np.ndarray:
        """Vectorized membership; points outside the packing bound are absent."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.int64))
        ok = sup_norm(pts) <= self.bound
        res = np.zeros(pts.shape[0], dtype=bool)
        if ok.any() and self.keys.size:
            keys = pack_points(pts[ok], self.bound, self.d)
            pos = np.searchsorted(self.keys, keys)
            pos_ok = pos < self.keys.size
            hit = np.zeros(keys.shape, dtype=bool)
            hit[pos_ok] = self.keys[pos[pos_ok]] == keys[pos_ok]
            res[ok] = hit
        return res if np.asarray(points).ndim > 1 else res[0]

    def repack(self, bound: int) -> "SiteSet":
        if bound == self.bound:
            return self
        return SiteSet.from_points(self.points(), d=self.d, bound=bound)

    def union(self, other: "SiteSet") -> "SiteSet":
        if self.d != other.d:
            raise ValueError("dimension mismatch")
        bound = max(self.bound, other.bound)
        a, b = self.repack(bound), other.repack(bound)
        return SiteSet(d=self.d, bound=bound, keys=np.union1d(a.keys, b.keys))

    def intersect_ball(self, ball: Ball) -> "SiteSet":
        pts = self.points()
        return SiteSet.from_points(pts[ball.contains(pts)], d=self.d, bound=self.bound)


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream: (master seed, stream index).

    Distinct stream indices give statistically independent Philox streams;
    the same pair always reproduces the same sequence. Replica i of any
    experiment uses stream index i, so results do not depend on scheduling.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed % 2 ** 64, self.stream % 2 ** 64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, k: int) -> "RngStream":
        """Derived stream for sub-tasks (k-th trajectory, k-th batch, ...)."""
        # mix so that (stream, k) pairs never collide across typical use
        return RngStream(self.seed, (self.stream * 0x9E3779B97F4A7C15 + k + 1) % 2 ** 64)


@dataclass(frozen=True)
class WalkPath:
    """A nearest-neighbor path; positions[0] is the start."""

    positions: np.ndarray  # (n+1, d) int64
    stream: RngStream | None = None
    stop_cause: str | None = None  # "hit" | "exit" | "length"

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @property
    def start(self) -> np.ndarray:
        return self.positions[0]

    @property
    def end(self) -> np.ndarray:
        return self.positions[-1]

    def __len__(self) -> int:
        """Number of steps (not points)."""
        return self.positions.shape[0] - 1

    def check_nearest_neighbor(self) -> bool:
        inc = np.diff(self.positions, axis=0)
        return bool(np.all(np.sum(np.abs(inc), axis=1) == 1))


def random_steps(rng: np.random.Generator, d: int, n: int) -> np.ndarray:
    """(n, d) array of unit steps, each uniform over the 2d directions."""
    dirs = rng.integers(0, 2 * d, size=n)
    steps = np.zeros((n, d), dtype=np.int64)
    steps[np.arange(n), dirs >> 1] = 1 - 2 * (dirs & 1)
    return steps


def walk_fixed(start, n: int, stream: RngStream, d: int | None = None) -> WalkPath:
    """Simple random walk of exactly n steps."""
    start = as_point(start, d)
    check_dim(start.shape[0])
    rng = stream.generator()
    steps = random_steps(rng, start.shape[0], n)
    pos = np.empty((n + 1, start.shape[0]), dtype=np.int64)
    pos[0] = start
    np.cumsum(steps, axis=0, out=pos[1:])
    pos[1:] += start
    return WalkPath(positions=pos, stream=stream, stop_cause="length")


def walk_until(
    start,
    stream: RngStream,
    *,
    length: int | None = None,
    exit_ball: Ball | None = None,
    hit_sites: SiteSet | None = None,
    block: int = _BLOCK,
) -> WalkPath:
    """Run a simple random walk until the first stopping rule triggers.

    Rules (any combination; at least one of `length`/`exit_ball` is required
    so the stop is almost-surely finite even when `hit_sites` is missed):

    * ``length``: stop after exactly n steps (cause "length");
    * ``exit_ball``: stop at the first t >= 0 with X(t) outside the ball
      (cause "exit");
    * ``hit_sites``: stop at the first t >= 0 with X(t) in the set
      (cause "hit"; entrance time counts t = 0).

    When several rules trigger at the same time, precedence is
    hit > exit > length.
    """
    start = as_point(start)
    d = start.shape[0]
    check_dim(d)
    if hit_sites is not None and length is None and exit_ball is None:
        raise ValueError(
            "'first hit' without a length or exit cap may never terminate "
            "(transient walk); add an enclosing exit_ball or length"
        )
    if length is None and exit_ball is None:
        raise ValueError("need at least one stopping rule")

    # t = 0 checks
    if hit_sites is not None and bool(hit_sites.contains(start[None, :])[0]):
        return WalkPath(start[None, :].copy(), stream, "hit")
    if exit_ball is not None and not bool(exit_ball.contains(start[None, :])[0]):
        return WalkPath(start[None, :].copy(), stream, "exit")
    if length == 0:
        return WalkPath(start[None, :].copy(), stream, "length")

    rng = stream.generator()
    chunks = [start[None, :]]
    done = 0
    cur = start
    while True:
        b = block if length is None else min(block, length - done)
        steps = random_steps(rng, d, b)
        pos = np.cumsum(steps, axis=0) + cur
        first_hit = first_exit = b  # one-past-end sentinel
        if hit_sites is not None:
            w = np.nonzero(hit_sites.contains(pos))[0]
            if w.size:
                first_hit = int(w[0])
        if exit_ball is not None:
            w = np.nonzero(~exit_ball.contains(pos))[0]
            if w.size:
                first_exit = int(w[0])
        stop_at = min(first_hit, first_exit)
        if stop_at < b:
            cause = "hit" if first_hit <= first_exit else "exit"
            chunks.append(pos[: stop_at + 1])
            return WalkPath(np.concatenate(chunks, axis=0), stream, cause)
        chunks.append(pos)
        done += b
        cur = pos[-1]
        if length is not None and done >= length:
            return WalkPath(np.concatenate(chunks, axis=0), stream, "length")
