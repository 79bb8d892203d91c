"""Command-line front end: experiment orchestration with reproducible
streams, config files, and CSV outputs.

Subcommands: green, capacity, sample, graph, layers, checks, sweep.
Every option can come from a config file (INI sections per subcommand,
plus [common]); command-line flags win.  A run directory receives a
verbatim copy of the effective config, the seed, a version string, and
machine-readable results, so re-running the copied config reproduces the
statistics exactly.

Exit codes: 0 success (all requested checks passed), 2 invalid
configuration (message names the field), 3 numerical failure (message
names the failing check), 1 other errors.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .lattice import Ball, RngStream, SiteSet
from .potential import (
    GreenTable,
    ball_equilibrium_mc,
    capacity_mc,
    capacity_variational,
    equilibrium_variational,
    get_green_table,
    green_matrix,
    _tables,
)
from .sampler import resolve_anchors, sample, serialize_sample
from .graph import build_graph, build_layers, diameter_stat, graph_distance
from .potential import capacity_mc_sampled
from . import checks as checks_mod


class ConfigError(Exception):
    """Invalid configuration; the message names the offending field."""


def _cache_dir() -> str | None:
    return os.environ.get("INTERLACE_CACHE")


def _load_green_cache(d: int) -> None:
    cd = _cache_dir()
    if not cd:
        return
    path = os.path.join(cd, f"green-d{d}.txt")
    if os.path.exists(path):
        _tables[d] = GreenTable.load(path)


def _save_green_cache(d: int) -> None:
    cd = _cache_dir()
    if not cd:
        return
    os.makedirs(cd, exist_ok=True)
    get_green_table(d).save(os.path.join(cd, f"green-d{d}.txt"))


# ---------------------------------------------------------------------------
# option plumbing
# ---------------------------------------------------------------------------

_COMMON_OPTS = {
    "seed": (int, 0),
    "dim": (int, 5),
    "u": (float, 1.0),
    "replicas": (int, 100),
    "jobs": (int, 1),
    "out": (str, None),
}

_SUB_OPTS = {
    "green": {"max_disp": (int, 32), "target_rel_err": (float, 1e-9)},
    "capacity": {"ball_radius": (int, -1), "sites": (str, ""), "walkers": (int, 400)},
    "sample": {
        "ball_radius": (int, 2),
        "sites": (str, ""),
        "window": (int, 8),
        "eps_trunc": (float, 1e-3),
        "mode": (str, "full"),
        "store_paths": (int, 1),
    },
    "graph": {
        "ball_radius": (int, 1),
        "window": (int, 6),
        "eps_trunc": (float, 1e-2),
        "n_samples": (int, 3),
    },
    "layers": {"s_max": (int, 2), "r": (int, 1), "radii": (str, "8,16,32"), "cap_sites": (int, 500), "cap_walkers": (int, 48)},
    "checks": {"suite": (str, "fast"), "which": (str, "")},
    "sweep": {"base": (str, "capacity"), "grid": (str, "u=0.5,1.0")},
}


def _effective(args, section: str):
    """Merge defaults, config file and CLI values; CLI wins."""
    cfg = configparser.ConfigParser()
    if args.config:
        if not os.path.exists(args.config):
            raise ConfigError(f"config: file {args.config!r} not found")
        cfg.read(args.config)
    out = {}
    for name, (typ, default) in {**_COMMON_OPTS, **_SUB_OPTS.get(section, {})}.items():
        val = getattr(args, name, None)
        if val is None:
            raw = None
            if cfg.has_option(section, name):
                raw = cfg.get(section, name)
            elif cfg.has_option("common", name):
                raw = cfg.get("common", name)
            if raw is None:
                val = default
            else:
                try:
                    val = typ(raw)
                except ValueError as exc:
                    raise ConfigError(f"{section}.{name}: cannot parse {raw!r} as {typ.__name__}") from exc
        out[name] = val
    _validate(section, out)
    return out


def _validate(section: str, o: dict) -> None:
    if not (3 <= o["dim"] <= 8):
        raise ConfigError(f"{section}.dim: need 3 <= dim <= 8, got {o['dim']}")
    if o["u"] <= 0:
        raise ConfigError(f"{section}.u: must be positive, got {o['u']}")
    if o["replicas"] < 1:
        raise ConfigError(f"{section}.replicas: must be >= 1")
    if o["jobs"] < 1:
        raise ConfigError(f"{section}.jobs: must be >= 1")
    if "eps_trunc" in o and o["eps_trunc"] <= 0:
        raise ConfigError(f"{section}.eps_trunc: must be positive")
    if "mode" in o and o["mode"] not in ("counts", "anchors", "forward", "full"):
        raise ConfigError(f"{section}.mode: unknown mode {o['mode']!r}")


def _run_dir(o: dict, section: str):
    out = o.get("out")
    if not out:
        return None
    os.makedirs(out, exist_ok=True)
    cfg = configparser.ConfigParser()
    cfg["common"] = {k: str(o[k]) for k in _COMMON_OPTS if o.get(k) is not None}
    cfg[section] = {k: str(o[k]) for k in _SUB_OPTS.get(section, {})}
    with open(os.path.join(out, "config-copy.ini"), "w") as fh:
        cfg.write(fh)
    digest = hashlib.sha256(repr(sorted(o.items())).encode()).hexdigest()[:10]
    with open(os.path.join(out, "run-info.txt"), "w") as fh:
        fh.write(f"version interlace-{__version__}+cfg.{digest}\n")
        fh.write(f"seed {o['seed']}\n")
        fh.write(f"command {section}\n")
    return out


def _write_csv(path: str, rows: list[dict]) -> None:
    if not rows:
        return
    keys = sorted({k for r in rows for k in r})
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def _parse_sites(text: str, d: int) -> SiteSet:
    pts = []
    for tok in text.split(";"):
        tok = tok.strip()
        if not tok:
            continue
        coords = [int(c) for c in tok.split(",")]
        if len(coords) != d:
            raise ConfigError(f"sites: point {tok!r} has {len(coords)} coordinates, expected {d}")
        pts.append(coords)
    if not pts:
        raise ConfigError("sites: no points given")
    return SiteSet.from_points(np.asarray(pts, dtype=np.int64), d=d)


def _anchor_set(o: dict):
    d = o["dim"]
    if o.get("sites"):
        return _parse_sites(o["sites"], d)
    r = o.get("ball_radius", -1)
    if r is None or r < 0:
        raise ConfigError("capacity: give ball_radius >= 0 or sites")
    return Ball(np.zeros(d, dtype=np.int64), r)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_green(o: dict) -> int:
    d = o["dim"]
    _load_green_cache(d)
    tbl = get_green_table(d)
    rows = []
    for r in range(0, o["max_disp"] + 1):
        v = np.array([r] + [0] * (d - 1))
        val, err = tbl.lookup(v)
        rows.append({"displacement": f"{r}e1", "value": val, "stderr": err, "method": "truncated-sum"})
        vd = np.full(d, r)
        val, err = tbl.lookup(vd)
        rows.append({"displacement": f"{r}diag", "value": val, "stderr": err, "method": "truncated-sum"})
    _save_green_cache(d)
    out = _run_dir(o, "green")
    if out:
        tbl.save(os.path.join(out, f"green-d{d}.txt"))
        _write_csv(os.path.join(out, "results.csv"), rows)
    print(f"green: d={d}, {len(tbl)} cached values, g(0)={tbl.zero():.9f}")
    return 0


def cmd_capacity(o: dict) -> int:
    d = o["dim"]
    _load_green_cache(d)
    A = _anchor_set(o)
    K = SiteSet.from_ball(A) if isinstance(A, Ball) else A
    if len(K) > 4000:
        raise ConfigError("capacity: set too large for the dense cross-check (<= 4000 sites)")
    cap_v, _ = capacity_variational(K)
    em = capacity_mc(K, walkers_per_site=o["walkers"], stream=RngStream(o["seed"], 0))
    agree = abs(em.total_mass - cap_v) <= 3 * em.stderr + em.meta["bias_bound"]
    rows = [{
        "set": "ball" if isinstance(A, Ball) else "sites",
        "n_sites": len(K),
        "cap_variational": cap_v,
        "cap_mc": em.total_mass,
        "mc_stderr": em.stderr,
        "bias_bound": em.meta["bias_bound"],
        "cross_check": "agree" if agree else "DISAGREE",
    }]
    out = _run_dir(o, "capacity")
    if out:
        _write_csv(os.path.join(out, "results.csv"), rows)
        em.save(os.path.join(out, "equilibrium-mc.txt"))
    print(
        f"capacity: variational {cap_v:.6g}, mc {em.total_mass:.6g} +/- {em.stderr:.2g} "
        f"[{'agree' if agree else 'DISAGREE'}]"
    )
    _save_green_cache(d)
    return 0 if agree else 3


def _one_sample(args):
    o, k = args
    d = o["dim"]
    A = _anchor_set(o)
    s = sample(
        o["u"],
        A,
        Ball(np.zeros(d, dtype=np.int64), o["window"]),
        eps_trunc=o["eps_trunc"],
        stream=RngStream(o["seed"], k),
        mode=o["mode"],
        store_paths=bool(o["store_paths"]),
        sample_id=k,
    )
    return k, s


def cmd_sample(o: dict) -> int:
    d = o["dim"]
    _load_green_cache(d)
    out = _run_dir(o, "sample")
    rows = []
    results = []
    if o["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=o["jobs"]) as ex:
            for k, s in ex.map(_one_sample, [(o, k) for k in range(o["replicas"])]):
                results.append((k, s))
    else:
        results = [_one_sample((o, k)) for k in range(o["replicas"])]
    results.sort(key=lambda t: t[0])
    for k, s in results:
        rows.append({"replica": k, "n_traj": s.n_traj, "cap_A": s.cap_A,
                     "stop_radius": s.stop_radius, "mode": s.mode})
        if out and o["mode"] in ("forward", "full") and bool(o["store_paths"]):
            with open(os.path.join(out, f"sample-{k:05d}.txt"), "w") as fh:
                serialize_sample(s, fh)
    mean_n = float(np.mean([r["n_traj"] for r in rows]))
    print(f"sample: {o['replicas']} replicas, mean N = {mean_n:.3f} (u*cap = {o['u'] * results[0][1].cap_A:.3f})")
    if out:
        _write_csv(os.path.join(out, "results.csv"), rows)
    return 0


def cmd_graph(o: dict) -> int:
    d = o["dim"]
    _load_green_cache(d)
    A = _anchor_set(o)
    model = resolve_anchors(A, stream=RngStream(o["seed"], 990))
    samples = [
        sample(o["u"], A, Ball(np.zeros(d, dtype=np.int64), o["window"]),
               eps_trunc=o["eps_trunc"], stream=RngStream(o["seed"], k),
               mode="forward", anchor_model=model, sample_id=k)
        for k in range(o["n_samples"])
    ]
    g = build_graph(samples)
    diam, n_core, hist = diameter_stat(g, samples)
    rows = [{"separation_bin": "core", "rho": k, "count": v} for k, v in sorted(hist.items())]
    out = _run_dir(o, "graph")
    if out:
        with open(os.path.join(out, "edges.txt"), "w") as fh:
            g.save_edge_list(fh)
        _write_csv(os.path.join(out, "rho-histogram.csv"), rows)
    print(f"graph: V={len(g)} E={g.n_edges} core={n_core} window-diameter={diam}")
    return 0


def cmd_layers(o: dict) -> int:
    d = o["dim"]
    _load_green_cache(d)
    radii = [int(t) for t in str(o["radii"]).split(",") if t.strip()]
    rows = []
    for R in radii:
        for s_idx in range(1, o["s_max"] + 1):
            caps = []
            for k in range(o["replicas"]):
                layers = build_layers(o["s_max"], o["r"], R, o["u"], d, RngStream(o["seed"], R * 10000 + k))
                L = layers[s_idx - 1]
                if len(L.sites) == 0:
                    caps.append(0.0)
                elif len(L.sites) <= 1800:
                    caps.append(capacity_variational(L.sites)[0])
                else:
                    caps.append(
                        capacity_mc_sampled(L.sites, n_sites=o["cap_sites"],
                                            walkers_per_site=o["cap_walkers"],
                                            stream=RngStream(o["seed"] + 1, R * 10000 + k))[0]
                    )
            rows.append({"R": R, "s": s_idx, "mean_cap": float(np.mean(caps)),
                         "stderr": float(np.std(caps, ddof=1) / np.sqrt(len(caps))) if len(caps) > 1 else 0.0,
                         "replicas": o["replicas"]})
            print(f"layers: R={R} s={s_idx} E cap = {rows[-1]['mean_cap']:.2f} +/- {rows[-1]['stderr']:.2f}")
    for s_idx in range(1, o["s_max"] + 1):
        ys = [r["mean_cap"] for r in rows if r["s"] == s_idx]
        if len(ys) >= 2 and all(y > 0 for y in ys):
            slope, _ = checks_mod.fit_loglog(radii, ys)
            print(f"layers: s={s_idx} capacity slope in R = {slope:.3f}")
    out = _run_dir(o, "layers")
    if out:
        _write_csv(os.path.join(out, "results.csv"), rows)
    return 0


def _checks_to_run(o: dict):
    fast = [
        ("convolution-n0", lambda: checks_mod.check_convolution(0, stream=RngStream(o["seed"], 1))),
        ("convolution-n1", lambda: checks_mod.check_convolution(1, stream=RngStream(o["seed"], 2))),
        ("convolution-n2", lambda: checks_mod.check_convolution(2, samples=30_000, stream=RngStream(o["seed"], 3))),
        ("auxiliary-inequalities", lambda: checks_mod.check_inequalities(replicas=20_000, stream=RngStream(o["seed"], 4))),
        ("walk-green-sums", lambda: checks_mod.check_walk_green_sums(replicas=12, stream=RngStream(o["seed"], 5))),
        ("pair-visit-bound", lambda: checks_mod.check_pair_visit_bound(u=o["u"], replicas=2000, stream=RngStream(o["seed"], 6))),
    ]
    slow = [
        ("pair-connection-decay", lambda: checks_mod.check_pair_decay(u=o["u"], replicas=150, stream=RngStream(o["seed"], 7))),
        ("layer-hitting", lambda: checks_mod.check_layer_hitting(stream=RngStream(o["seed"], 8))),
    ]
    table = {name: fn for name, fn in fast + slow}
    if o.get("which"):
        wanted = [w.strip() for w in o["which"].split(",") if w.strip()]
        missing = [w for w in wanted if w not in table]
        if missing:
            raise ConfigError(f"checks.which: unknown check id(s) {missing}")
        return [(w, table[w]) for w in wanted]
    return fast + (slow if o["suite"] == "full" else [])


def cmd_checks(o: dict) -> int:
    _load_green_cache(o["dim"])
    if o["suite"] not in ("fast", "full"):
        raise ConfigError(f"checks.suite: expected 'fast' or 'full', got {o['suite']!r}")
    reports = []
    for name, fn in _checks_to_run(o):
        rep = fn()
        reports.append(rep)
        print(rep.summary())
    out = _run_dir(o, "checks")
    if out:
        _write_csv(os.path.join(out, "results.csv"), [r.row() for r in reports])
    _save_green_cache(o["dim"])
    failed = [r.check_id for r in reports if not r.passed]
    if failed:
        print(f"checks: FAILED: {', '.join(failed)}", file=sys.stderr)
        return 3
    print(f"checks: all {len(reports)} passed")
    return 0


def _parse_grid(text: str) -> list[dict]:
    axes = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"sweep.grid: expected name=v1,v2 got {part!r}")
        name, vals = part.split("=", 1)
        axes.append((name.strip(), [v.strip() for v in vals.split(",") if v.strip()]))
    cells = [{}]
    for name, vals in axes:
        cells = [dict(c, **{name: v}) for c in cells for v in vals]
    return cells


def cmd_sweep(o: dict, args) -> int:
    base = o["base"]
    if base not in ("green", "capacity", "sample", "graph", "layers", "checks"):
        raise ConfigError(f"sweep.base: cannot sweep {base!r}")
    cells = _parse_grid(o["grid"])
    o_base = _effective(args, base)
    rows = []
    out = _run_dir(o, "sweep")
    for i, cell in enumerate(cells):
        sub = dict(o_base)
        sub.update({k: _coerce_like(base, k, v) for k, v in cell.items()})
        sub["out"] = os.path.join(out, f"cell-{i:03d}") if out else None
        print(f"sweep cell {i}: {cell}")
        code = _DISPATCH[base](sub)
        rows.append({**{f"grid_{k}": v for k, v in cell.items()}, "cell": i, "exit": code})
    if out:
        _write_csv(os.path.join(out, "results.csv"), rows)
    return 0 if all(r["exit"] == 0 for r in rows) else 3


def _coerce_like(section: str, key: str, val: str):
    opts = {**_COMMON_OPTS, **_SUB_OPTS.get(section, {})}
    if key not in opts:
        raise ConfigError(f"sweep.grid: {key!r} is not an option of {section!r}")
    return opts[key][0](val)


_DISPATCH = {
    "green": cmd_green,
    "capacity": cmd_capacity,
    "sample": cmd_sample,
    "graph": cmd_graph,
    "layers": cmd_layers,
    "checks": cmd_checks,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="interlace", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("green", "capacity", "sample", "graph", "layers", "checks", "sweep"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=str, default=None)
        seen = set()
        for opt, (typ, _) in _COMMON_OPTS.items():
            sp.add_argument("--" + opt.replace("_", "-"), dest=opt, type=typ, default=None)
            seen.add(opt)
        own = _SUB_OPTS[name] if name != "sweep" else {
            **_SUB_OPTS["sweep"],
            # sweep accepts every base-command option and passes it through
            **{k: v for d_ in ("green", "capacity", "sample", "graph", "layers", "checks")
               for k, v in _SUB_OPTS[d_].items()},
        }
        for opt, (typ, _) in own.items():
            if opt in seen:
                continue
            sp.add_argument("--" + opt.replace("_", "-"), dest=opt, type=typ, default=None)
            seen.add(opt)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        o = _effective(args, args.command)
        if args.command == "sweep":
            return cmd_sweep(o, args)
        return _DISPATCH[args.command](o)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
