import io

import numpy as np
import pytest
from scipy import stats

from interlace.lattice import Ball, RngStream, SiteSet
from interlace.potential import get_green_table
from interlace.sampler import (
    cert_radius,
    deserialize_sample,
    occupation_field,
    resolve_anchors,
    sample,
    serialize_sample,
    split_by_ball,
    superpose,
)

D = 5
WINDOW = Ball(np.zeros(D, dtype=np.int64), 6)


def test_sample_argument_guards(small_anchor_model_d5):
    A = small_anchor_model_d5.sites
    with pytest.raises(ValueError):
        sample(0.0, A, WINDOW, anchor_model=small_anchor_model_d5)
    with pytest.raises(ValueError):
        sample(1.0, A, WINDOW, eps_trunc=0.0, anchor_model=small_anchor_model_d5)
    with pytest.raises(ValueError):
        sample(1.0, A, Ball(np.zeros(D, dtype=np.int64), 2), anchor_model=small_anchor_model_d5)


def test_counts_mode_poisson_law(small_anchor_model_d5):
    model = small_anchor_model_d5
    u = 1.5
    lam = u * model.cap
    n = 6000
    ns = np.array([
        sample(u, model.sites, WINDOW, stream=RngStream(51, k), mode="counts", anchor_model=model).n_traj
        for k in range(n)
    ])
    assert abs(ns.mean() - lam) < 3 * np.sqrt(lam / n)
    s2 = ns.var(ddof=1)
    se_s2 = np.sqrt((np.mean((ns - ns.mean()) ** 4) - s2 ** 2) / n)
    assert abs(s2 - lam) < 3 * se_s2


def test_anchor_distribution_chi_square(small_anchor_model_d5):
    model = small_anchor_model_d5
    s = sample(1.0, model.sites, WINDOW, stream=RngStream(52, 0), mode="anchors",
               anchor_model=model, force_n=20000)
    import interlace.lattice as lat

    keys = model.sites.keys
    akeys = lat.pack_points(s.anchors, model.sites.bound, D)
    counts = np.bincount(np.searchsorted(keys, akeys), minlength=len(keys))
    p = np.maximum(model.measure.weights, 0)
    p = p / p.sum()
    mask = p > 0
    _, pval = stats.chisquare(counts[mask], f_exp=20000 * p[mask] / p[mask].sum())
    assert pval > 0.01


def test_backward_paths_never_touch_anchor_set(small_anchor_model_d5):
    """Hard invariant: no backward step enters A, over many samples."""
    model = small_anchor_model_d5
    violations = 0
    n_traj = 0
    for k in range(200):
        s = sample(1.0, model.sites, WINDOW, eps_trunc=3e-3, stream=RngStream(53, k),
                   mode="full", anchor_model=model, store_paths=True)
        for t in s.trajectories:
            n_traj += 1
            assert model.contains(t.anchor[None, :])[0]
            if t.bwd_positions is not None and len(t.bwd_positions) > 1:
                violations += int(model.contains(t.bwd_positions[1:]).any())
    assert n_traj > 300
    assert violations == 0


def test_h_transform_step_normalization(ball2_model_d5):
    """sum over neighbors of h(z')/(2d h(z)) = 1 on visited interior sites."""
    from interlace.sampler import _cached_escape_field
    from interlace.lattice import sup_norm

    model = ball2_model_d5
    window = Ball(np.zeros(D, dtype=np.int64), 8)
    ef = _cached_escape_field(model, window)
    rng = np.random.default_rng(4)
    units = np.concatenate([np.eye(D, dtype=np.int64), -np.eye(D, dtype=np.int64)])
    pts = rng.integers(-7, 8, size=(4000, D))
    pts = pts[sup_norm(pts) <= 7]
    inside = model.contains(pts)
    pts = pts[~inside]
    h = ef.value(pts)
    mask = h > 1e-12
    pts, h = pts[mask], h[mask]
    nb = pts[:, None, :] + units[None, :, :]
    hn = ef.value(nb.reshape(-1, D)).reshape(-1, 2 * D)
    norm = hn.sum(axis=1) / (2 * D * h)
    assert np.max(np.abs(norm - 1.0)) < 1e-9


def test_sample_reproducible_byte_exact(small_anchor_model_d5):
    model = small_anchor_model_d5
    bufs = []
    for _ in range(2):
        s = sample(1.0, model.sites, WINDOW, stream=RngStream(54, 9), mode="full",
                   anchor_model=model, store_paths=True)
        buf = io.StringIO()
        serialize_sample(s, buf)
        bufs.append(buf.getvalue())
    assert bufs[0] == bufs[1]


def test_serialization_roundtrip(small_anchor_model_d5):
    model = small_anchor_model_d5
    s = sample(1.0, model.sites, WINDOW, stream=RngStream(55, 1), mode="full",
               anchor_model=model, store_paths=True)
    buf = io.StringIO()
    serialize_sample(s, buf)
    buf.seek(0)
    s2 = deserialize_sample(buf)
    buf2 = io.StringIO()
    serialize_sample(s2, buf2)
    assert buf2.getvalue() == buf.getvalue()
    assert s2.n_traj == s.n_traj
    for a, b in zip(s.trajectories, s2.trajectories):
        assert np.array_equal(a.trace_keys, b.trace_keys)


def test_truncation_certificates_below_eps(small_anchor_model_d5):
    model = small_anchor_model_d5
    eps = 3e-3
    s = sample(1.0, model.sites, WINDOW, eps_trunc=eps, stream=RngStream(56, 2),
               mode="full", anchor_model=model)
    for t in s.trajectories:
        assert t.fwd_cert <= eps
        assert t.bwd_cert <= eps


def test_superpose_preserves_and_adds(small_anchor_model_d5):
    model = small_anchor_model_d5
    s1 = sample(0.7, model.sites, WINDOW, stream=RngStream(57, 0), mode="forward", anchor_model=model)
    empty = sample(0.3, model.sites, WINDOW, stream=RngStream(57, 1), mode="forward",
                   anchor_model=model, force_n=0)
    sup = superpose(s1, empty)
    assert sup.u == pytest.approx(1.0)
    assert sup.n_traj == s1.n_traj
    assert [t.label for t in sup.trajectories] == [t.label for t in s1.trajectories]


def test_superpose_window_mismatch(small_anchor_model_d5):
    model = small_anchor_model_d5
    s1 = sample(0.5, model.sites, WINDOW, stream=RngStream(58, 0), mode="counts", anchor_model=model)
    s2 = sample(0.5, model.sites, Ball(np.zeros(D, dtype=np.int64), 7),
                stream=RngStream(58, 1), mode="counts", anchor_model=model)
    with pytest.raises(ValueError):
        superpose(s1, s2)


def test_split_partition_and_trivial_containment(small_anchor_model_d5):
    model = small_anchor_model_d5
    s = sample(2.0, model.sites, WINDOW, stream=RngStream(59, 0), mode="forward", anchor_model=model)
    near, far = split_by_ball(s, 2)
    assert near.n_traj + far.n_traj == s.n_traj
    # every trace meets A, and A sits inside B(0, r) for r = window: all near
    near2, far2 = split_by_ball(s, WINDOW.radius)
    assert near2.n_traj == s.n_traj and far2.n_traj == 0


def test_split_requires_traces(small_anchor_model_d5):
    model = small_anchor_model_d5
    s = sample(1.0, model.sites, WINDOW, stream=RngStream(60, 0), mode="counts", anchor_model=model)
    with pytest.raises(ValueError):
        split_by_ball(s, 2)


def test_occupation_field_contains_anchors(small_anchor_model_d5):
    model = small_anchor_model_d5
    s = sample(2.0, model.sites, WINDOW, stream=RngStream(61, 0), mode="forward", anchor_model=model)
    occ = occupation_field(s, WINDOW)
    if s.n_traj:
        assert occ.contains(s.anchors).all()
    empty = sample(1.0, model.sites, WINDOW, stream=RngStream(61, 1), mode="forward",
                   anchor_model=model, force_n=0)
    assert len(occupation_field(empty, WINDOW)) == 0


def test_vacancy_probability_matches_poisson_void(g0_d5):
    """P(0 not in the occupation field) = exp(-u cap({0})), the void law of
    the thinned trajectory process through the single site."""
    u = 1.0
    A = Ball(np.zeros(D, dtype=np.int64), 1)
    model = resolve_anchors(A)
    window = Ball(np.zeros(D, dtype=np.int64), 4)
    target = Ball(np.zeros(D, dtype=np.int64), 1)
    p_theory = np.exp(-u / g0_d5)
    n = 10_000
    zero = np.zeros((1, D), dtype=np.int64)
    vac = 0
    for k in range(n):
        s = sample(u, A, window, eps_trunc=1e-3, stream=RngStream(62, k), mode="forward",
                   anchor_model=model, stop_target=target)
        occupied = any(bool(t.trace(window).contains(zero)[0]) for t in s.trajectories)
        vac += not occupied
    se = np.sqrt(p_theory * (1 - p_theory) / n)
    assert abs(vac / n - p_theory) < 3 * se


def test_cert_radius_monotone():
    assert cert_radius(100.0, 5, 1e-3) > cert_radius(100.0, 5, 1e-2)
    assert cert_radius(1000.0, 5, 1e-3) > cert_radius(10.0, 5, 1e-3)


def test_split_counts_independent_larger_anchor_ball(g0_d5):
    """Count independence of the split parts for a larger anchor ball.

    Exact shortcut: a trajectory anchored on the shell of B(0,3) meets
    B(0,2) iff its forward walk does (the backward part avoids the anchor
    ball).  The walk is simulated to a mid sphere; by the strong Markov
    property the remaining hit indicator is Bernoulli with the exact
    hitting-formula probability, so the count pair has exactly the
    sampled-process law at a fraction of the walk length.
    """
    from interlace.lattice import sup_norm, random_steps
    from interlace.potential import equilibrium_variational, hitting_prob_many

    d, u, r = 5, 1.0, 2
    A = Ball(np.zeros(d, dtype=np.int64), 3)
    model = resolve_anchors(A)
    ball_r = SiteSet.from_ball(Ball(np.zeros(d, dtype=np.int64), r))
    e_r = equilibrium_variational(ball_r)
    mid = 12
    reps = 600
    near = np.empty(reps)
    far = np.empty(reps)
    for k in range(reps):
        rng = RngStream(63, k).generator()
        n = int(rng.poisson(u * model.cap))
        if n == 0:
            near[k] = far[k] = 0
            continue
        pos = model.draw(rng, n)
        hit = np.zeros(n, dtype=bool)
        active = np.nonzero(~hit)[0]
        while active.size:
            steps = random_steps(rng, d, active.size * 8).reshape(active.size, 8, d)
            traj = np.cumsum(steps, axis=1, dtype=np.int64) + pos[active][:, None, :]
            nrm = sup_norm(traj)
            h = (nrm <= r).any(axis=1)
            out = (nrm >= mid).any(axis=1)
            hit[active[h]] = True
            pos[active] = traj[:, -1]
            active = active[~h & ~out]
        exits = np.nonzero(~hit)[0]
        if exits.size:
            p_tail = hitting_prob_many(pos[exits], e_r)
            hit[exits] = rng.random(exits.size) < p_tail
        near[k] = hit.sum()
        far[k] = n - hit.sum()
    rho = float(np.corrcoef(near, far)[0, 1])
    assert abs(rho) < 3 / np.sqrt(reps)
    # the near-count mean is the capacity of the split ball (restriction law)
    cap_r = e_r.total_mass
    assert abs(near.mean() - u * cap_r) < 3 * np.sqrt(cap_r / reps)
