"""Discrete potential theory for the simple random walk on Z^d, d >= 3.

Green function
--------------
g(v) = sum_{t>=0} P_0(X_t = v) is evaluated deterministically through the
continuous-time embedding of the walk,

    g(v) = int_0^inf  prod_j ive(|v_j|, t/d)  dt,

where ive is the exponentially scaled modified Bessel function.  The
integral equals the expected total occupation time of v, which equals the
expected number of discrete visits because holding times have mean one.
The quadrature truncates time at T_max and adds the analytic two-term tail
of the integrand expansion; the residual bound is reported as the error.
A Monte Carlo visit-count estimator is provided as an independent
cross-check oracle.

Capacity
--------
Two independent routes:

* ``capacity_variational``: minimizes the Green energy over probability
  measures on K.  The interior stationarity condition is the linear system
  G e = 1, whose solution is the equilibrium measure itself; an active-set
  loop handles (numerically) negative components, and a projected-gradient
  fallback guards degenerate inputs.
* ``capacity_mc``: per-site escape frequencies with an explicit
  finite-outer-radius bias bound.

``escape_field`` solves the discrete Dirichlet problem for the probability
of never hitting K, with boundary data from the hitting formula; it is the
ingredient that makes conditioned (h-transform) walks samplable.
"""

from __future__ import annotations

import io
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .lattice import (
    Ball,
    RngStream,
    SiteSet,
    as_point,
    check_dim,
    pack_points,
    sup_norm,
)

__all__ = [
    "GreenTable",
    "green",
    "green_mc",
    "green_matrix",
    "EquilibriumMeasure",
    "capacity_variational",
    "capacity_mc",
    "capacity_mc_sampled",
    "hitting_prob",
    "EscapeField",
    "escape_field",
    "conv_partial_sum",
    "transition_tail_bound",
    "return_prob_bound",
    "get_green_table",
]


# ---------------------------------------------------------------------------
# deterministic Green function
# ---------------------------------------------------------------------------

_GL_NODES = 32
_PANEL_GROW = 4.0


def _gl_panels(t_max: float, n: int = _GL_NODES):
    x, w = np.polynomial.legendre.leggauss(n)
    edges = [0.0, 1.0]
    while edges[-1] < t_max:
        edges.append(edges[-1] * _PANEL_GROW)
    edges[-1] = t_max
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (b - a) * x + 0.5 * (b + a))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def _green_quad_raw(vs: np.ndarray, d: int):
    """Quadrature + analytic tail for an (m, d) batch of |displacements|.

    Returns (values, error bounds). Orders above ~1e3 would leave the
    asymptotic tail regime; desk-scale displacements are far below that.
    """
    t_max = 3.2e7  # scipy.special.ive is accurate and finite up to ~1e9/d
    vmax = int(vs.max()) if vs.size else 0
    if vmax * vmax > t_max / 100.0:
        raise ValueError(f"displacement {vmax} too large for the configured quadrature horizon")
    nodes, weights = _gl_panels(t_max)
    orders = np.unique(vs)
    tbl = special.ive(orders[:, None], nodes[None, :] / d)
    idx = np.searchsorted(orders, vs)
    m = vs.shape[0]
    out = np.empty(m)
    chunk = max(1, int(4e7) // nodes.size)
    for lo in range(0, m, chunk):
        hi = min(m, lo + chunk)
        integrand = tbl[idx[lo:hi, 0]].copy()
        for j in range(1, d):
            integrand *= tbl[idx[lo:hi, j]]
        out[lo:hi] = integrand @ weights
    # analytic tail of int_T^inf (d/(2 pi t))^{d/2} (1 - d S/(8 t)) dt
    h = d / 2.0
    A = (d / (2.0 * np.pi)) ** h
    S = np.sum(4.0 * vs.astype(float) ** 2 - 1.0, axis=1)
    tail1 = A * t_max ** (1.0 - h) / (h - 1.0)
    tail2 = -A * (d * S / 8.0) * t_max ** (-h) / h
    vals = out + tail1 + tail2
    err = (
        A * (d * S / 8.0) ** 2 / 2.0 * t_max ** (-h - 1.0) / (h + 1.0)
        + np.abs(tail2) * 1e-6
        + 1e-14 * np.abs(vals)
    )
    return vals, np.abs(err)


class GreenTable:
    """Cached Green-function values for one dimension.

    Values are stored per sorted absolute displacement (the walk is
    invariant under coordinate permutations and sign flips) together with
    an error bound and a method tag.
    """

    def __init__(self, d: int):
        self.d = check_dim(d)
        self._cache: dict[tuple, tuple[float, float, str]] = {}

    def __len__(self) -> int:
        return len(self._cache)

    @staticmethod
    def _canon(vs: np.ndarray) -> np.ndarray:
        return np.sort(np.abs(np.asarray(vs, dtype=np.int64)), axis=1)

    def lookup_many(self, vs) -> np.ndarray:
        """Green values for an (m, d) batch of displacements (memoized)."""
        vs = np.atleast_2d(np.asarray(vs, dtype=np.int64))
        if vs.shape[1] != self.d:
            raise ValueError(f"displacements have dimension {vs.shape[1]}, table is d={self.d}")
        canon = self._canon(vs)
        # dedup in packed-key space (per-column radix, canon is sorted so
        # early columns are small): much faster than row-wise unique
        bases = canon.max(axis=0).astype(np.int64) + 1 if canon.size else np.ones(self.d, np.int64)
        if float(np.prod(bases.astype(float))) < 2 ** 62:
            keys = np.zeros(canon.shape[0], dtype=np.int64)
            for j in range(self.d):
                keys = keys * bases[j] + canon[:, j]
            _, uidx, inv = np.unique(keys, return_index=True, return_inverse=True)
            uniq = canon[uidx]
        else:
            uniq, inv = np.unique(canon, axis=0, return_inverse=True)
        missing = [i for i, row in enumerate(map(tuple, uniq)) if row not in self._cache]
        if missing:
            rows = uniq[missing]
            vals, errs = _green_quad_raw(rows, self.d)
            for row, v, e in zip(map(tuple, rows), vals, errs):
                self._cache[row] = (float(v), float(e), "truncated-sum")
        vals = np.array([self._cache[tuple(row)][0] for row in uniq])
        return vals[inv]

    def lookup(self, v) -> tuple[float, float]:
        v = np.atleast_2d(np.asarray(v, dtype=np.int64))
        key = tuple(self._canon(v)[0])
        if key not in self._cache:
            self.lookup_many(v)
        val, err, _ = self._cache[key]
        return val, err

    def zero(self) -> float:
        """g(0), the expected number of visits to the start."""
        return self.lookup(np.zeros(self.d, dtype=np.int64))[0]

    # -- columnar text cache -------------------------------------------------

    def save(self, path: str) -> None:
        """Columnar text format: displacement, value, stderr, method, seed."""
        with open(path, "w") as fh:
            fh.write(f"# green-table v1 d={self.d} t_max={3.2e7:g} nodes={_GL_NODES}\n")
            fh.write("# displacement value stderr method seed\n")
            for key in sorted(self._cache):
                v, e, m = self._cache[key]
                disp = ",".join(str(c) for c in key)
                fh.write(f"{disp} {v!r} {e!r} {m} -\n")

    @classmethod
    def load(cls, path: str) -> "GreenTable":
        with open(path) as fh:
            header = fh.readline().split()
            d = int([t for t in header if t.startswith("d=")][0][2:])
            tbl = cls(d)
            for line in fh:
                if line.startswith("#") or not line.strip():
                    continue
                disp, val, err, method, _seed = line.split()
                key = tuple(int(c) for c in disp.split(","))
                tbl._cache[key] = (float(val), float(err), method)
        return tbl


_tables: dict[int, GreenTable] = {}


def get_green_table(d: int) -> GreenTable:
    """Shared per-dimension Green table (built lazily, immutable semantics)."""
    d = check_dim(d)
    if d not in _tables:
        _tables[d] = GreenTable(d)
    return _tables[d]


def green(v, d: int | None = None, target_rel_err: float = 1e-9) -> tuple[float, float]:
    """Green function g(v) with an error bound.

    Raises if the requested tolerance is tighter than the configured
    quadrature can certify.
    """
    v = as_point(v)
    if d is None:
        d = v.shape[0]
    check_dim(d)
    tbl = get_green_table(d)
    val, err = tbl.lookup(v)
    if val > 0 and err / val > target_rel_err:
        raise ValueError(
            f"target relative error {target_rel_err:g} not achievable: "
            f"certified bound is {err / val:g}"
        )
    return val, err


def transition_tail_bound(d: int, T: int) -> float:
    """Upper bound for sum_{t>T} sup_y P(X_t = y), from the local CLT scale."""
    K = 1.3 * 2.0 * (d / (2 * np.pi)) ** (d / 2)
    return K * T ** (1 - d / 2) / (d / 2 - 1)


def conv_partial_sum(v, d: int, T: int) -> float:
    """Exact sum_{t<=T} P_0(X_t = v) by dense convolution on a box of radius T.

    The box contains every path of length <= T, so the value is exact; with
    ``transition_tail_bound`` it brackets g(v). Memory is (2T+1)^d doubles,
    so keep T small for d = 5.
    """
    check_dim(d)
    v = as_point(v, d)
    if int(sup_norm(v)) > T:
        raise ValueError("|v| > T: partial sum is trivially the tail")
    side = 2 * T + 1
    p = np.zeros((side,) * d)
    center = (T,) * d
    p[center] = 1.0
    total = p.copy()
    for _ in range(T):
        nxt = np.zeros_like(p)
        for ax in range(d):
            nxt += np.roll(p, 1, axis=ax) + np.roll(p, -1, axis=ax)
        p = nxt / (2 * d)
        total += p
    return float(total[tuple(T + c for c in v)])


def green_mc(
    v,
    d: int,
    stream: RngStream,
    replicas: int = 2000,
    cap_radius: int = 100,
    block: int = 1024,
) -> tuple[float, float]:
    """Monte Carlo oracle for g(v): mean visits to v by a walk from 0.

    Walks are capped at the exit of B(0, cap_radius); the omitted visits
    are bounded by max_{|z|=cap_radius+1} g(z - v), which is tiny next to
    the sampling error for the defaults.
    """
    check_dim(d)
    v = as_point(v, d)
    rng = RngStream(stream.seed, stream.stream).generator()
    counts = np.zeros(replicas)
    pos = np.zeros((replicas, d), dtype=np.int64)
    active = np.arange(replicas)
    counts[:] = float(np.all(v == 0))  # visit at t=0
    while active.size:
        dirs = rng.integers(0, 2 * d, size=(active.size, block))
        steps = np.zeros((active.size, block, d), dtype=np.int8)
        ii = np.repeat(np.arange(active.size), block)
        steps[ii, np.tile(np.arange(block), active.size), (dirs >> 1).ravel()] = (
            1 - 2 * (dirs & 1)
        ).ravel()
        traj = np.cumsum(steps, axis=1, dtype=np.int64) + pos[active][:, None, :]
        out = sup_norm(traj) > cap_radius  # (m, block)
        first_out = np.where(out.any(axis=1), out.argmax(axis=1), block)
        alive_len = np.minimum(first_out + 1, block)
        vis = np.all(traj == v, axis=2)
        t_idx = np.arange(block)[None, :]
        counts[active] += np.sum(vis & (t_idx < alive_len[:, None]), axis=1)
        pos[active] = traj[np.arange(active.size), alive_len - 1]
        active = active[first_out == block]
    est = float(counts.mean())
    se = float(counts.std(ddof=1) / np.sqrt(replicas))
    return est, se


# ---------------------------------------------------------------------------
# capacity
# ---------------------------------------------------------------------------


def green_matrix(K: SiteSet, d: int | None = None, target_rel_err: float = 1e-9) -> np.ndarray:
    """Symmetric matrix of g(x - y) over x, y in K."""
    if len(K) == 0:
        raise ValueError("green_matrix of an empty set")
    d = K.d if d is None else check_dim(d)
    pts = K.points()
    disp = pts[:, None, :] - pts[None, :, :]
    tbl = get_green_table(d)
    vals = tbl.lookup_many(disp.reshape(-1, d)).reshape(len(K), len(K))
    return 0.5 * (vals + vals.T)


@dataclass
class EquilibriumMeasure:
    """Equilibrium measure e_K: escape weights on K, total mass cap(K)."""

    support: SiteSet
    weights: np.ndarray  # aligned with support.points()
    total_mass: float
    stderr: float = 0.0
    method: str = "variational"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (len(self.support),):
            raise ValueError("weights misaligned with support")
        if np.any(self.weights < -1e-12) or np.any(self.weights > 1 + 1e-12):
            raise ValueError("equilibrium weights must lie in [0, 1]")

    def normalized(self) -> np.ndarray:
        """The entrance-point law on K (weights / capacity)."""
        if self.total_mass <= 0:
            raise ValueError("cannot normalize a zero-capacity measure")
        return self.weights / self.total_mass

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(
                f"# equilibrium-measure v1 d={self.support.d} cap={float(self.total_mass)!r} "
                f"stderr={float(self.stderr)!r} method={self.method} seed={self.meta.get('seed', '-')}\n"
            )
            fh.write("# site weight\n")
            for p, w in zip(self.support.points(), self.weights):
                fh.write(",".join(str(c) for c in p) + f" {float(w)!r}\n")

    @classmethod
    def load(cls, path: str) -> "EquilibriumMeasure":
        with open(path) as fh:
            head = fh.readline().split()
            kv = {t.split("=")[0]: t.split("=", 1)[1] for t in head if "=" in t}
            pts, ws = [], []
            for line in fh:
                if line.startswith("#") or not line.strip():
                    continue
                site, w = line.split()
                pts.append([int(c) for c in site.split(",")])
                ws.append(float(w))
        pts = np.asarray(pts, dtype=np.int64)
        support = SiteSet.from_points(pts, d=int(kv["d"]))
        # from_points sorts by packed key; realign weights
        order = np.argsort(pack_points(pts, support.bound, support.d))
        return cls(
            support=support,
            weights=np.asarray(ws)[order],
            total_mass=float(kv["cap"]),
            stderr=float(kv.get("stderr", 0.0)),
            method=kv.get("method", "?"),
        )


def _projected_gradient(G: np.ndarray, tol: float = 1e-12, max_iter: int = 20000):
    """Minimize nu' G nu over the probability simplex (accelerated PG)."""
    n = G.shape[0]
    nu = np.full(n, 1.0 / n)
    y = nu.copy()
    L = np.linalg.norm(G, 2)
    step = 1.0 / (2 * L)
    obj = nu @ G @ nu
    t_acc = 1.0
    for _ in range(max_iter):
        grad = 2.0 * (G @ y)
        z = _project_simplex(y - step * grad)
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t_acc ** 2))
        y = z + ((t_acc - 1) / t_next) * (z - nu)
        nu, t_acc = z, t_next
        new_obj = nu @ G @ nu
        if abs(obj - new_obj) < tol * max(1.0, abs(new_obj)):
            obj = new_obj
            break
        obj = new_obj
    return nu, obj


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u * np.arange(1, v.size + 1) > css)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def capacity_variational(K: SiteSet, G: np.ndarray | None = None):
    """Capacity by Green-energy minimization over probability measures on K.

    Returns (capacity, minimizing probability vector aligned with
    K.points()).  The minimizer is the normalized equilibrium measure; the
    solver is an active-set loop on the stationarity system G e = 1 with a
    projected-gradient fallback.
    """
    if len(K) == 0:
        return 0.0, np.zeros(0)
    if G is None:
        G = green_matrix(K)
    G = np.asarray(G, dtype=float)
    if G.shape != (len(K), len(K)):
        raise ValueError("Green matrix shape mismatch")
    if not np.allclose(G, G.T, rtol=1e-8, atol=1e-12):
        raise ValueError("Green matrix must be symmetric")
    n = len(K)
    active = np.ones(n, dtype=bool)  # sites allowed positive weight
    for _ in range(n + 1):
        idx = np.nonzero(active)[0]
        try:
            c = np.linalg.cholesky(G[np.ix_(idx, idx)])
        except np.linalg.LinAlgError as exc:
            raise ValueError("Green matrix is not positive definite") from exc
        ones = np.ones(idx.size)
        x = np.linalg.solve(c.T, np.linalg.solve(c, ones))
        if np.all(x >= -1e-13):
            e = np.zeros(n)
            e[idx] = np.maximum(x, 0.0)
            cap = float(e.sum())
            return cap, e / cap
        active[idx[x < -1e-13]] = False
        if not active.any():
            break
    # degenerate input; fall back to the iterative solver
    nu, obj = _projected_gradient(G)
    return float(1.0 / obj), nu


def equilibrium_variational(K: SiteSet, G: np.ndarray | None = None) -> EquilibriumMeasure:
    cap, nu = capacity_variational(K, G)
    return EquilibriumMeasure(support=K, weights=nu * cap, total_mass=cap, method="variational")


def _simulate_escapes(
    starts: np.ndarray,
    K: SiteSet,
    outer: Ball,
    n_walkers: int,
    rng: np.random.Generator,
    block: int = 64,
    walker_chunk: int = 400_000,
):
    """Fraction of walkers from each start that exit `outer` before hitting K
    at any t >= 1. Returns success counts per start."""
    d = starts.shape[1]
    n_start = starts.shape[0]
    succ = np.zeros(n_start, dtype=np.int64)
    total = n_start * n_walkers
    for lo in range(0, total, walker_chunk):
        hi = min(total, lo + walker_chunk)
        owner = np.arange(lo, hi) // n_walkers
        pos = starts[owner].copy()
        alive = np.arange(hi - lo)
        local_out = np.zeros(hi - lo, dtype=bool)
        while alive.size:
            m = alive.size
            dirs = rng.integers(0, 2 * d, size=(m, block))
            steps = np.zeros((m, block, d), dtype=np.int8)
            ii = np.repeat(np.arange(m), block)
            steps[ii, np.tile(np.arange(block), m), (dirs >> 1).ravel()] = (
                1 - 2 * (dirs & 1)
            ).ravel()
            traj = np.cumsum(steps, axis=1, dtype=np.int64) + pos[alive][:, None, :]
            flat = traj.reshape(-1, d)
            hit = K.contains(flat).reshape(m, block)
            out = sup_norm(traj - outer.center) > outer.radius
            first_hit = np.where(hit.any(axis=1), hit.argmax(axis=1), block)
            first_out = np.where(out.any(axis=1), out.argmax(axis=1), block)
            resolved = np.minimum(first_hit, first_out) < block
            esc = resolved & (first_out < first_hit)
            local_out[alive[esc]] = True
            pos[alive] = traj[np.arange(m), np.minimum(np.minimum(first_hit, first_out), block - 1)]
            alive = alive[~resolved]
        np.add.at(succ, owner[local_out], 1)
    return succ


def capacity_mc(
    K: SiteSet,
    d: int | None = None,
    walkers_per_site: int = 200,
    outer_radius: int | None = None,
    stream: RngStream = RngStream(0, 0),
) -> EquilibriumMeasure:
    """Capacity as the total mass of Monte Carlo escape frequencies.

    For each x in K, e_K(x) is estimated by the fraction of walkers from x
    that exit B(0, outer_radius) before re-entering K at any t >= 1.  The
    finite-radius bias bound (upward, O(outer_radius^{2-d} cap)) is stored
    in ``meta['bias_bound']``.
    """
    if len(K) == 0:
        return EquilibriumMeasure(K, np.zeros(0), 0.0, method="monte-carlo")
    d = K.d if d is None else check_dim(d)
    if walkers_per_site < 100:
        raise ValueError("need at least 100 walkers per site")
    pts = K.points()
    r_k = int(sup_norm(pts).max())
    if outer_radius is None:
        outer_radius = max(4 * r_k, 40 if d >= 5 else 60)
    if r_k > outer_radius / 4:
        raise ValueError(f"K (radius {r_k}) not well inside B(0, {outer_radius}): need K within radius/4")
    outer = Ball(np.zeros(d, dtype=np.int64), outer_radius)
    rng = stream.generator()
    succ = _simulate_escapes(pts, K, outer, walkers_per_site, rng)
    e_hat = succ / walkers_per_site
    var = e_hat * (1 - e_hat) / walkers_per_site
    cap = float(e_hat.sum())
    se = float(np.sqrt(var.sum()))
    gfar = get_green_table(d).lookup_many(
        np.array([[outer_radius - r_k] + [0] * (d - 1)])
    )[0]
    bias = 1.05 * cap * gfar * len(K)
    return EquilibriumMeasure(
        support=K,
        weights=np.clip(e_hat, 0.0, 1.0),
        total_mass=cap,
        stderr=se,
        method="monte-carlo",
        meta={
            "walkers_per_site": walkers_per_site,
            "outer_radius": outer_radius,
            "bias_bound": float(bias),
            "seed": stream.seed,
            "stream": stream.stream,
            "per_site_var": var,
        },
    )


def capacity_mc_sampled(
    K: SiteSet,
    n_sites: int = 1024,
    walkers_per_site: int = 64,
    outer_radius: int | None = None,
    stream: RngStream = RngStream(0, 0),
) -> tuple[float, float]:
    """Capacity of a large set from a uniform site subsample.

    cap(K) = |K| * mean(e_K); the reported stderr includes both the
    site-sampling and the per-site binomial noise. Used for trace sets far
    beyond the dense-solver range.

    The default outer radius is proportional to the set's extent, so the
    upward return bias is a scale-free fraction of the capacity and drops
    out of scaling-exponent fits.
    """
    if len(K) == 0:
        return 0.0, 0.0
    d = K.d
    pts = K.points()
    r_k = int(sup_norm(pts).max())
    if outer_radius is None:
        outer_radius = max(3 * r_k, r_k + 20)
    rng = stream.generator()
    if n_sites >= len(K):
        sample = pts
    else:
        sel = rng.choice(len(K), size=n_sites, replace=False)
        sample = pts[sel]
    outer = Ball(np.zeros(d, dtype=np.int64), outer_radius)
    succ = _simulate_escapes(sample, K, outer, walkers_per_site, rng)
    e_hat = succ / walkers_per_site
    cap = float(len(K) * e_hat.mean())
    se = float(len(K) * e_hat.std(ddof=1) / np.sqrt(sample.shape[0])) if sample.shape[0] > 1 else 0.0
    return cap, se


def hitting_prob(
    x,
    K: SiteSet,
    e_K: EquilibriumMeasure,
    table: GreenTable | None = None,
) -> float:
    """P_x(the walk ever enters K) = sum_y g(x - y) e_K(y), clamped to [0, 1]."""
    if e_K.support is not K and e_K.support.keys.shape != K.keys.shape:
        raise ValueError("equilibrium measure inconsistent with K")
    x = as_point(x, K.d)
    if len(K) == 0:
        return 0.0
    table = table or get_green_table(K.d)
    g = table.lookup_many(K.points() - x)
    val = float(g @ e_K.weights)
    slack = 1e-9 * len(K) + 3.0 * e_K.stderr
    if val > 1.0 + slack:
        warnings.warn(f"hitting probability {val:.6f} exceeds 1 beyond propagated error {slack:.2e}")
    return min(max(val, 0.0), 1.0)


def hitting_prob_many(xs: np.ndarray, e_K: EquilibriumMeasure, table: GreenTable | None = None):
    """Vectorized hitting formula for an (m, d) batch of start points."""
    pts = e_K.support.points()
    table = table or get_green_table(e_K.support.d)
    xs = np.atleast_2d(np.asarray(xs, dtype=np.int64))
    out = np.empty(xs.shape[0])
    chunk = max(1, int(2e7) // max(len(e_K.support), 1))
    for lo in range(0, xs.shape[0], chunk):
        hi = min(xs.shape[0], lo + chunk)
        disp = pts[None, :, :] - xs[lo:hi, None, :]
        g = table.lookup_many(disp.reshape(-1, xs.shape[1])).reshape(hi - lo, -1)
        out[lo:hi] = g @ e_K.weights
    return np.clip(out, 0.0, 1.0)


def return_prob_bound(dist: int, cap: float, d: int) -> float:
    """Certified-ish bound for the probability a walk at sup-distance `dist`
    from a set of capacity `cap` ever hits it. 5% engineering margin on top
    of the hitting formula's max-Green factor.  Distances past the
    quadrature horizon are clamped (the bound only gets more conservative).
    """
    if dist <= 0:
        return 1.0
    dist = min(int(dist), 500)
    g = get_green_table(d).lookup_many(np.array([[dist] + [0] * (d - 1)]))[0]
    return float(min(1.0, 1.05 * cap * g))


# ---------------------------------------------------------------------------
# ball capacities via symmetry orbits
# ---------------------------------------------------------------------------


def ball_shell_orbits(d: int, R: int):
    """Orbits of the shell {|x| = R} under coordinate permutations and sign
    flips: representatives (sorted nonnegative, max = R) and orbit sizes.

    The equilibrium measure of B(0, R) is supported on the shell (interior
    sites cannot leave the ball in one step) and is constant on orbits, so
    per-orbit estimates suffice for the ball capacity.
    """
    check_dim(d)
    if R == 0:
        return np.zeros((1, d), dtype=np.int64), np.ones(1, dtype=np.int64)
    reps = []
    # nondecreasing tuples over {0..R}^(d-1), last coordinate fixed to R
    def rec(prefix, lo):
        if len(prefix) == d - 1:
            reps.append(prefix + [R])
            return
        for v in range(lo, R + 1):
            rec(prefix + [v], v)
    rec([], 0)
    reps = np.asarray(reps, dtype=np.int64)
    sizes = np.empty(reps.shape[0], dtype=np.int64)
    fact = [1] * (d + 1)
    for i in range(1, d + 1):
        fact[i] = fact[i - 1] * i
    for i, row in enumerate(reps):
        perms = fact[d]
        _, counts = np.unique(row, return_counts=True)
        for c in counts:
            perms //= fact[c]
        sizes[i] = perms * 2 ** int(np.count_nonzero(row))
    return reps, sizes


@dataclass
class BallEquilibrium:
    """Orbit-compressed Monte Carlo equilibrium measure of a sup-norm ball."""

    d: int
    radius: int
    reps: np.ndarray
    sizes: np.ndarray
    e_rep: np.ndarray
    total_mass: float
    stderr: float
    meta: dict = field(default_factory=dict)

    @property
    def support(self) -> Ball:
        return Ball(np.zeros(self.d, dtype=np.int64), self.radius)

    def sample_anchors(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n i.i.d. draws from the normalized equilibrium measure."""
        mass = self.sizes * self.e_rep
        p = mass / mass.sum()
        orb = rng.choice(self.reps.shape[0], size=n, p=p)
        pts = self.reps[orb].copy()
        # uniform orbit element: random coordinate order, random signs off 0
        for i in range(n):
            pts[i] = pts[i, rng.permutation(self.d)]
        signs = rng.integers(0, 2, size=pts.shape) * 2 - 1
        pts *= np.where(pts != 0, signs, 1)
        return pts


def ball_equilibrium_mc(
    d: int,
    R: int,
    walkers_per_orbit: int = 200,
    outer_radius: int | None = None,
    stream: RngStream = RngStream(0, 0),
) -> BallEquilibrium:
    """Monte Carlo equilibrium measure of B(0, R), one estimate per symmetry
    orbit of the shell.  Escape test: exit B(0, outer_radius) before
    re-entering B(0, R) at t >= 1."""
    check_dim(d)
    if R == 0:
        g0 = get_green_table(d).zero()
        return BallEquilibrium(
            d, 0, np.zeros((1, d), dtype=np.int64), np.ones(1, dtype=np.int64),
            np.array([1.0 / g0]), 1.0 / g0, 0.0, {"method": "point"},
        )
    if outer_radius is None:
        outer_radius = 4 * R if d >= 5 else max(6 * R, 60)
    reps, sizes = ball_shell_orbits(d, R)
    rng = stream.generator()
    succ = _escape_from_ball(reps, R, outer_radius, walkers_per_orbit, rng)
    e_rep = succ / walkers_per_orbit
    var_rep = e_rep * (1 - e_rep) / walkers_per_orbit
    cap = float(np.dot(sizes, e_rep))
    se = float(np.sqrt(np.dot(sizes.astype(float) ** 2, var_rep)))
    gfar = get_green_table(d).lookup_many(np.array([[outer_radius - R] + [0] * (d - 1)]))[0]
    return BallEquilibrium(
        d, R, reps, sizes, e_rep, cap, se,
        {
            "walkers_per_orbit": walkers_per_orbit,
            "outer_radius": outer_radius,
            "bias_bound": float(1.05 * cap * gfar * sizes.sum()),
            "seed": stream.seed,
            "stream": stream.stream,
        },
    )


def _escape_from_ball(starts, R, outer_radius, n_walkers, rng, block=64, walker_chunk=250_000):
    """Success counts per start: exit B(0,outer) before re-entering B(0,R)."""
    d = starts.shape[1]
    n_start = starts.shape[0]
    succ = np.zeros(n_start, dtype=np.int64)
    total = n_start * n_walkers
    for lo in range(0, total, walker_chunk):
        hi = min(total, lo + walker_chunk)
        owner = np.arange(lo, hi) // n_walkers
        pos = starts[owner].copy()
        alive = np.arange(hi - lo)
        won = np.zeros(hi - lo, dtype=bool)
        while alive.size:
            m = alive.size
            dirs = rng.integers(0, 2 * d, size=(m, block))
            steps = np.zeros((m, block, d), dtype=np.int8)
            ii = np.repeat(np.arange(m), block)
            steps[ii, np.tile(np.arange(block), m), (dirs >> 1).ravel()] = (
                1 - 2 * (dirs & 1)
            ).ravel()
            traj = np.cumsum(steps, axis=1, dtype=np.int64) + pos[alive][:, None, :]
            nrm = sup_norm(traj)
            back = nrm <= R
            out = nrm > outer_radius
            first_back = np.where(back.any(axis=1), back.argmax(axis=1), block)
            first_out = np.where(out.any(axis=1), out.argmax(axis=1), block)
            resolved = np.minimum(first_back, first_out) < block
            won[alive[resolved & (first_out < first_back)]] = True
            pos[alive] = traj[np.arange(m), np.minimum(np.minimum(first_back, first_out), block - 1)]
            alive = alive[~resolved]
        np.add.at(succ, owner[won], 1)
    return succ


_ball_eq_cache: dict = {}
_ball_cap_cache: dict = {}


def cached_ball_equilibrium(d: int, R: int, stream: RngStream | None = None, walkers: int = 200) -> BallEquilibrium:
    """Session-cached ball equilibrium (seeded deterministically by (d, R))."""
    key = (d, R, walkers)
    if key not in _ball_eq_cache:
        s = stream or RngStream(0xBA11, d * 1000 + R)
        _ball_eq_cache[key] = ball_equilibrium_mc(d, R, walkers_per_orbit=walkers, stream=s)
    return _ball_eq_cache[key]


def ball_capacity(d: int, R: int) -> float:
    """cap(B(0, R)): exact (variational) for small balls, orbit MC beyond."""
    key = (d, R)
    if key not in _ball_cap_cache:
        if (2 * R + 1) ** d <= 4000:
            K = SiteSet.from_ball(Ball(np.zeros(d, dtype=np.int64), R))
            _ball_cap_cache[key] = capacity_variational(K)[0]
        else:
            _ball_cap_cache[key] = cached_ball_equilibrium(d, R).total_mass
    return _ball_cap_cache[key]


# ---------------------------------------------------------------------------
# escape field (discrete Dirichlet problem)
# ---------------------------------------------------------------------------


@dataclass
class EscapeField:
    """h(z) = probability of never hitting K, on a box grid around K.

    h = 0 on K, discrete-harmonic on box \\ K, and equal to
    1 - hitting_prob on the box boundary.  ``values`` is the full flattened
    grid; ``harmonic_defect`` is the max interior deviation from the
    neighbor average after the solve.
    """

    box: Ball
    K: SiteSet
    values: np.ndarray  # flat, length (2R+1)^d
    harmonic_defect: float

    @property
    def side(self) -> int:
        return 2 * self.box.radius + 1

    def _flat_index(self, points: np.ndarray) -> np.ndarray:
        rel = points - self.box.center
        if np.any(np.abs(rel) > self.box.radius):
            raise ValueError("point outside the escape-field box")
        idx = np.zeros(points.shape[0], dtype=np.int64)
        for j in range(self.box.d):
            idx = idx * self.side + (rel[:, j] + self.box.radius)
        return idx

    def value(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.int64))
        return self.values[self._flat_index(pts)]


def _neighbor_index(side: int, d: int):
    """(n_cells, 2d) flat neighbor indices; -1 where the neighbor leaves the grid."""
    n = side ** d
    idx = np.arange(n, dtype=np.int64)
    coords = np.empty((n, d), dtype=np.int64)
    rem = idx.copy()
    for j in range(d - 1, -1, -1):
        coords[:, j] = rem % side
        rem //= side
    nbrs = np.empty((n, 2 * d), dtype=np.int64)
    stride = np.array([side ** (d - 1 - j) for j in range(d)], dtype=np.int64)
    for j in range(d):
        up = idx + stride[j]
        up[coords[:, j] == side - 1] = -1
        dn = idx - stride[j]
        dn[coords[:, j] == 0] = -1
        nbrs[:, 2 * j] = up
        nbrs[:, 2 * j + 1] = dn
    return nbrs


def escape_field(
    K: SiteSet,
    box: Ball,
    e_K: EquilibriumMeasure | None = None,
    table: GreenTable | None = None,
    tol: float = 1e-13,
    max_iter: int = 2000,
) -> EscapeField:
    """Solve the discrete Dirichlet problem for the no-hit probability of K.

    Boundary values on the box shell come from the hitting formula (which
    is exactly harmonic), so the finite box introduces no truncation bias
    beyond the Green-table error; conjugate gradients then enforces
    interior harmonicity to the solver tolerance.
    """
    d = box.d
    check_dim(d)
    R = box.radius
    side = 2 * R + 1
    n = side ** d
    if n > 2 ** 31:
        raise ValueError("escape-field box too large")
    table = table or get_green_table(d)

    rel = box.points() - box.center  # grid order: last axis fastest
    nrm = sup_norm(rel)
    k_mask = K.contains(rel + box.center) if len(K) else np.zeros(n, dtype=bool)
    if len(K):
        k_rad = int(sup_norm(K.points() - box.center).max())
        if k_rad > R - 2:
            raise ValueError("K must sit inside the box with margin >= 2")
    shell = nrm == R
    interior = (~shell) & (~k_mask)

    if len(K) == 0:
        return EscapeField(box=box, K=K, values=np.ones(n), harmonic_defect=0.0)

    if e_K is None:
        e_K = equilibrium_variational(K)

    # hit-field H(z) = sum_y g(z-y) e(y) on the whole grid, by shifted adds
    supp = e_K.support.points()
    w = e_K.weights
    a = int(sup_norm(supp - box.center).max())
    big = Ball(box.center, R + a)
    gvals = table.lookup_many(big.points() - box.center).reshape((2 * (R + a) + 1,) * d)
    H = np.zeros((side,) * d)
    for y, wy in zip(supp - box.center, w):
        if wy == 0.0:
            continue
        sl = tuple(slice(a - y[j], a - y[j] + side) for j in range(d))
        H += wy * gvals[sl]
    H = H.reshape(-1)

    h = np.clip(1.0 - H, 0.0, 1.0)
    h[k_mask] = 0.0

    nbrs = _neighbor_index(side, d)
    # CG on interior unknowns for L h = b, L = I - P A P /(2d)
    fixed_vals = h.copy()
    fixed_vals[interior] = 0.0

    int_idx = np.nonzero(interior)[0]
    pos_of = -np.ones(n, dtype=np.int64)
    pos_of[int_idx] = np.arange(int_idx.size)
    nb = nbrs[int_idx]  # (m, 2d), all >= 0 since interior cells have all neighbors on-grid
    nb_int = pos_of[nb]  # -1 where neighbor is Dirichlet
    dirichlet_contrib = np.where(nb_int < 0, fixed_vals[nb], 0.0).sum(axis=1) / (2 * d)

    def matvec(x):
        gathered = np.where(nb_int >= 0, x[np.maximum(nb_int, 0)], 0.0)
        return x - gathered.sum(axis=1) / (2 * d)

    b = dirichlet_contrib
    x = h[int_idx].copy()
    r = b - matvec(x)
    p = r.copy()
    rs = r @ r
    bnorm = max(np.sqrt(b @ b), 1e-300)
    it = 0
    while np.sqrt(rs) > tol * bnorm and it < max_iter:
        Ap = matvec(p)
        alpha = rs / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rs_new = r @ r
        p = r + (rs_new / rs) * p
        rs = rs_new
        it += 1
    if np.sqrt(rs) > 10 * tol * bnorm:
        raise RuntimeError(f"escape-field CG did not converge: residual {np.sqrt(rs)/bnorm:.2e}")

    h[int_idx] = np.clip(x, 0.0, 1.0)
    h[k_mask] = 0.0

    # measured harmonic defect on the interior
    gathered = np.where(nb >= 0, h[nb], 0.0)
    defect = float(np.max(np.abs(h[int_idx] - gathered.sum(axis=1) / (2 * d)))) if int_idx.size else 0.0
    return EscapeField(box=box, K=K, values=h, harmonic_defect=defect)
