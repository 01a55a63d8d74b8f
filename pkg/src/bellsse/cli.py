"""Config-driven front end: ``python -m bellsse <command>``.

Four commands cover the batch workflow:

``run``
    Measurement run from a TOML config: independent chains, merged by
    chain index, per-observable block CSVs plus a summary table and a
    versioned JSON.  Identical config and seed give byte-identical CSV
    output, whatever ``--threads`` says.
``ti``
    Entropy integration over a Gauss-Legendre lambda grid, one
    independent chain per node; emits the node table and the folded
    entropy.
``oracle``
    Exact references for small systems (dense or sector-summed), as
    JSON on stdout or into a file.
``check``
    Minute-scale self-test battery at tiny sizes with PASS/FAIL lines.

Config schema (TOML)::

    [model]                  # required by run and ti
    kind = "tfim"            # "tfim" or "gauge"
    L = 12
    h = 1.0
    boundary = "open"        # chains only: "open" or "periodic"

    [run]
    beta = "4L"              # number, or "<k>L" for k * L
    equilibration_sweeps = 20000
    measurement_sweeps = 200000   # must be a multiple of block_size
    block_size = 5000        # optional, default 5000
    seed = 1                 # master seed, --seed overrides
    chains = 4               # optional, default 1

    [[observables]]          # one table per observable (run only)
    kind = "pauli_sq"        # pauli_sq | swap | swap_gauge | wilson | topo_ee
    name = "xx"              # optional except for topo_ee
    ops = { 0 = "X", 1 = "X" }            # pauli_sq: site -> letter
    # region = { interval = [0, 6] }      # swap/swap_gauge (chain)
    # region = { square = 2, x0 = 0, y0 = 0 }   # swap/swap_gauge (torus)
    # region = { half = true }            # swap: leading half chain
    # loop = { w = 1, h = 1, x0 = 0, y0 = 0 }   # wilson
    # thirds = true                       # topo_ee: A|B|C chain split
    # translations = true                 # optional symmetry averaging

    [[combinations]]         # derived numbers in the summary JSON
    kind = "renyi2"          # -ln of a swap mean
    of = "half"
    name = "s2_half"
    # kind = "topo_ee" with ab/bc/abc/b naming four swap observables

    [ti]
    beta = "2L"
    region = { interval = [0, 6] }
    nodes = 16               # optional, default 16
    estimator = "e2"         # "e2" (default) or "e1" (forces subset mode)
    mode = "analytic"        # optional; "subset" records both integrands
    equilibration_sweeps = 10000
    measurement_sweeps = 100000
    block_size = 5000
    seed = 1

    [output]
    directory = "out"        # --out overrides
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
import time

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                       # Python 3.10
    import tomli as tomllib

from . import ed, estimators, extensemble, stats
from ._rng import spawn_states
from .bellstate import PauliString
from .engine import Chain
from .errors import EstimatorExhausted, InsufficientData
from .estimators import MeasurementPlan
from .lattice import (Region, half_region, interval_region, square_region,
                      thirds_regions, wilson_loop_links)
from .models import ModelSpec, lgt_model, tfim_model

SCHEMA = "bellsse-summary/1"
ORACLE_SCHEMA = "bellsse-oracle/1"


class ConfigError(Exception):
    """Invalid configuration; carries the offending field path."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"config error at {path}: {msg}")
        self.path = path


# ------------------------------------------------------------------ parsing

_BETA_RE = re.compile(r"^\s*([0-9]*\.?[0-9]*)\s*\*?\s*L\s*$")


def parse_beta(value, L: int, where: str = "beta") -> float:
    """A number, or the caption-style expression ``"<k>L"``."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        beta = float(value)
    elif isinstance(value, str):
        try:
            beta = float(value)
        except ValueError:
            m = _BETA_RE.match(value)
            if not m:
                raise ConfigError(where,
                                  f"cannot parse beta expression {value!r}")
            beta = (float(m.group(1)) if m.group(1) else 1.0) * L
    else:
        raise ConfigError(where, f"beta must be a number or '<k>L' string, "
                                 f"got {type(value).__name__}")
    if beta <= 0:
        raise ConfigError(where, "beta must be positive")
    return beta


def _get(table: dict, key: str, where: str, kind=None, default=...):
    if key not in table:
        if default is not ...:
            return default
        raise ConfigError(f"{where}.{key}", "missing required field")
    val = table[key]
    if kind is not None and not isinstance(val, kind):
        names = kind.__name__ if isinstance(kind, type) \
            else "/".join(k.__name__ for k in kind)
        raise ConfigError(f"{where}.{key}",
                          f"expected {names}, got {type(val).__name__}")
    return val


def _positive_int(table: dict, key: str, where: str, default=...) -> int:
    val = _get(table, key, where, int, default)
    if isinstance(val, bool) or val <= 0:
        raise ConfigError(f"{where}.{key}", "must be a positive integer")
    return val


def load_config(path: str) -> dict:
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except OSError as exc:
        raise ConfigError(path, f"cannot read config: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(path, f"not valid TOML: {exc}") from exc


def build_model(cfg: dict) -> ModelSpec:
    table = _get(cfg, "model", "", dict)
    kind = _get(table, "kind", "model", str)
    L = _positive_int(table, "L", "model")
    h = float(_get(table, "h", "model", (int, float)))
    if kind == "tfim":
        boundary = _get(table, "boundary", "model", str, "open")
        if boundary not in ("open", "periodic"):
            raise ConfigError("model.boundary",
                              f"must be 'open' or 'periodic', got {boundary!r}")
        return tfim_model(L, h, boundary)
    if kind == "gauge":
        if "boundary" in table:
            raise ConfigError("model.boundary",
                              "the gauge model lives on a torus; drop this key")
        return lgt_model(L, h)
    raise ConfigError("model.kind", f"must be 'tfim' or 'gauge', got {kind!r}")


def parse_region(spec, model: ModelSpec, where: str):
    if not isinstance(spec, dict):
        raise ConfigError(where, "region must be a table")
    lat = model.lat
    try:
        if "interval" in spec:
            a, b = spec["interval"]
            return interval_region(lat, int(a), int(b))
        if "square" in spec:
            return square_region(lat, int(spec["square"]),
                                 int(spec.get("x0", 0)), int(spec.get("y0", 0)))
        if spec.get("half"):
            return half_region(lat)
        if "mask" in spec:
            mask = np.asarray(spec["mask"], dtype=bool)
            if mask.shape != (model.n_spins,):
                raise ValueError(f"mask length {mask.size} != {model.n_spins}")
            return mask
    except (ValueError, TypeError) as exc:
        raise ConfigError(where, str(exc)) from exc
    raise ConfigError(where, "need one of interval/square/half/mask")


def _obs_name(spec: dict, k: int) -> str:
    return spec.get("name") or f"obs{k}"


def build_plan(cfg: dict, model: ModelSpec):
    """Measurement plan plus the derived-combination specs."""
    plan = MeasurementPlan(model)
    derived: list[dict] = []
    for k, spec in enumerate(_get(cfg, "observables", "", list, [])):
        where = f"observables[{k}]"
        if not isinstance(spec, dict):
            raise ConfigError(where, "observable must be a table")
        kind = _get(spec, "kind", where, str)
        name = spec.get("name")
        trans = spec.get("translations")
        try:
            if kind == "pauli_sq":
                ops = _get(spec, "ops", where, dict)
                s = PauliString.from_ops(
                    model.n_spins, {int(site): str(op)
                                    for site, op in ops.items()})
                plan.add_pauli_sq(s, name=name)
            elif kind == "swap":
                region = parse_region(_get(spec, "region", where),
                                      model, f"{where}.region")
                plan.add_swap(region, name=name, translations=trans)
            elif kind == "swap_gauge":
                region = parse_region(_get(spec, "region", where),
                                      model, f"{where}.region")
                plan.add_swap_gauge(region, name=name, translations=trans)
            elif kind == "wilson":
                loop = _get(spec, "loop", where, dict)
                mask = wilson_loop_links(model.lat,
                                         int(_get(loop, "w", f"{where}.loop")),
                                         int(_get(loop, "h", f"{where}.loop")),
                                         int(loop.get("x0", 0)),
                                         int(loop.get("y0", 0)))
                plan.add_wilson(mask, name=name, translations=trans)
            elif kind == "topo_ee":
                if not spec.get("thirds"):
                    raise ConfigError(where, "topo_ee needs thirds = true")
                base = name or f"topo{k}"
                parts = thirds_regions(model.lat)
                names = {key: plan.add_swap(reg, name=f"{base}:{key}")
                         for key, reg in parts.items()}
                derived.append({"kind": "topo_ee", "name": base,
                                "ab": names["AB"], "bc": names["BC"],
                                "abc": names["ABC"], "b": names["B"]})
            else:
                raise ConfigError(f"{where}.kind",
                                  f"unknown observable kind {kind!r}")
        except ConfigError:
            raise
        except (ValueError, KeyError) as exc:
            raise ConfigError(where, str(exc)) from exc
    for k, spec in enumerate(_get(cfg, "combinations", "", list, [])):
        where = f"combinations[{k}]"
        kind = _get(spec, "kind", where, str)
        if kind == "renyi2":
            derived.append({"kind": "renyi2",
                            "name": _get(spec, "name", where, str),
                            "of": _get(spec, "of", where, str)})
        elif kind == "topo_ee":
            derived.append({"kind": "topo_ee",
                            "name": _get(spec, "name", where, str),
                            **{key: _get(spec, key, where, str)
                               for key in ("ab", "bc", "abc", "b")}})
        else:
            raise ConfigError(f"{where}.kind",
                              f"unknown combination kind {kind!r}")
    for d in derived:
        for key in ("of", "ab", "bc", "abc", "b"):
            if key in d and d[key] not in plan.names:
                raise ConfigError("combinations",
                                  f"{d['name']}: no observable {d[key]!r}")
    return plan, derived


# ---------------------------------------------------------------- execution

def _chain_worker(task):
    """One independent chain: equilibrate, measure, return the series."""
    model, beta, plan, n_eq, n_sweeps, state = task
    chain = Chain(model, beta, rstate=state)
    chain.equilibrate(n_eq)
    return chain.run(n_sweeps, plan=plan)


def _map_tasks(worker, tasks, threads: int):
    if threads <= 1 or len(tasks) <= 1:
        return [worker(t) for t in tasks]
    import concurrent.futures as cf
    with cf.ProcessPoolExecutor(max_workers=min(threads, len(tasks))) as ex:
        return list(ex.map(worker, tasks))


def _sanitize(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def _derived_rows(derived, plan, merged, block_size):
    rows = []
    for d in derived:
        if d["kind"] == "renyi2":
            val, err = estimators.renyi2(plan.series(merged, d["of"]),
                                         block_size)
            rows.append({"name": d["name"], "kind": "renyi2", "of": d["of"],
                         "value": val, "error": err})
        else:
            val, err = estimators.topo_ee(
                *(plan.series(merged, d[key]) for key in ("ab", "bc", "abc", "b")),
                block_size=block_size)
            rows.append({"name": d["name"], "kind": "topo_ee",
                         "value": val, "error": err})
    return rows


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    model = build_model(cfg)
    run = _get(cfg, "run", "", dict)
    beta = parse_beta(_get(run, "beta", "run"), model.lat.L, "run.beta")
    n_eq = _positive_int(run, "equilibration_sweeps", "run")
    n_sweeps = _positive_int(run, "measurement_sweeps", "run")
    block = _positive_int(run, "block_size", "run", stats.DEFAULT_BLOCK)
    n_chains = _positive_int(run, "chains", "run", 1)
    seed = args.seed if args.seed is not None \
        else _get(run, "seed", "run", int, 0)
    if n_sweeps % block:
        raise ConfigError("run.measurement_sweeps",
                          f"must be a multiple of block_size ({block}) so "
                          f"chain merging keeps blocks aligned")
    plan, derived = build_plan(cfg, model)
    if plan.n_obs == 0:
        raise ConfigError("observables", "nothing to measure")
    outdir = _resolve_outdir(args, cfg)

    t0 = time.time()
    states = spawn_states(seed, n_chains)
    tasks = [(model, beta, plan, n_eq, n_sweeps, st) for st in states]
    outs = _map_tasks(_chain_worker, tasks, args.threads)
    merged = {"values": np.concatenate([o["values"] for o in outs]),
              "n": np.concatenate([o["n"] for o in outs])}

    obs_rows = estimators.summary_rows(plan, merged, block)
    estimators.write_csv(os.path.join(outdir, "observables.csv"), obs_rows)
    blockdir = os.path.join(outdir, "blocks")
    os.makedirs(blockdir, exist_ok=True)
    for name in plan.names:
        series = plan.series(merged, name)
        rows = []
        per = n_sweeps // block
        for c in range(n_chains):
            chunk = series[c * n_sweeps:(c + 1) * n_sweeps]
            means = chunk.reshape(per, block).mean(axis=1)
            rows.extend({"chain": c, "block": b, "mean": means[b]}
                        for b in range(per))
        estimators.write_csv(
            os.path.join(blockdir, f"{_sanitize(name)}.csv"), rows)

    e_mean, e_err = estimators.energy(merged["n"], model, beta, block)
    summary = {
        "schema": SCHEMA, "command": "run",
        "model": {"kind": _get(cfg["model"], "kind", "model", str),
                  "L": model.lat.L, "h": model.h,
                  "boundary": model.lat.boundary},
        "beta": beta, "beta_spec": run["beta"], "seed": seed,
        "sweeps": {"equilibration": n_eq, "measurement": n_sweeps,
                   "chains": n_chains, "block_size": block},
        "observables": obs_rows,
        "derived": _derived_rows(derived, plan, merged, block),
        "energy": {"mean": e_mean, "stderr": e_err},
        "mean_operator_count": float(merged["n"].mean()),
    }
    _write_summary(outdir, summary)
    _write_log(outdir, [
        f"command: run  config: {args.config}",
        f"model: {summary['model']}  beta: {beta}",
        f"chains: {n_chains}  equilibration: {n_eq}  measurement: {n_sweeps}",
        f"operator count: mean {summary['mean_operator_count']:.2f}, "
        f"max {int(merged['n'].max())}",
        f"wall time: {time.time() - t0:.1f} s",
    ])
    print(f"wrote {outdir}/observables.csv, blocks/, summary.json")
    return 0


def _ti_node_worker(task):
    model, beta, mask, lam, weight, mode, n_eq, n_sweeps, state, block = task
    try:
        return extensemble.run_node(model, beta, mask, lam, weight, mode=mode,
                                    n_eq=n_eq, n_sweeps=n_sweeps, rstate=state,
                                    block_size=block)
    except (EstimatorExhausted, InsufficientData) as exc:
        return extensemble.NodeResult(lam=lam, weight=weight, error=str(exc))


def cmd_ti(args) -> int:
    cfg = load_config(args.config)
    model = build_model(cfg)
    ti = _get(cfg, "ti", "", dict)
    beta = parse_beta(_get(ti, "beta", "ti"), model.lat.L, "ti.beta")
    n_nodes = _positive_int(ti, "nodes", "ti", extensemble.DEFAULT_NODES)
    estimator = _get(ti, "estimator", "ti", str, "e2")
    if estimator not in ("e1", "e2"):
        raise ConfigError("ti.estimator", "must be 'e1' or 'e2'")
    mode = _get(ti, "mode", "ti", str, "analytic")
    if estimator == "e1":
        mode = "subset"
    if mode not in ("analytic", "subset"):
        raise ConfigError("ti.mode", "must be 'analytic' or 'subset'")
    n_eq = _positive_int(ti, "equilibration_sweeps", "ti")
    n_sweeps = _positive_int(ti, "measurement_sweeps", "ti")
    block = _positive_int(ti, "block_size", "ti", stats.DEFAULT_BLOCK)
    seed = args.seed if args.seed is not None \
        else _get(ti, "seed", "ti", int, 0)
    region = parse_region(_get(ti, "region", "ti"), model, "ti.region")
    mask = region.mask if isinstance(region, Region) else region
    outdir = _resolve_outdir(args, cfg)

    t0 = time.time()
    lams, weights = extensemble.quadrature(n_nodes)
    states = spawn_states(seed, n_nodes)
    tasks = [(model, beta, mask, float(l), float(w), mode, n_eq, n_sweeps,
              st, block) for l, w, st in zip(lams, weights, states)]
    nodes = _map_tasks(_ti_node_worker, tasks, args.threads)

    n_region = int(np.asarray(mask, dtype=bool).sum())
    result = extensemble.TIResult(s2=float("nan"), err=float("nan"),
                                  n_region=n_region, mode=mode,
                                  estimator=estimator, nodes=nodes)
    estimators.write_csv(os.path.join(outdir, "nodes.csv"),
                         extensemble.node_rows(result))
    s2, err = extensemble.integrate_s2(nodes, n_region, estimator)

    summary = {
        "schema": SCHEMA, "command": "ti",
        "model": {"kind": _get(cfg["model"], "kind", "model", str),
                  "L": model.lat.L, "h": model.h,
                  "boundary": model.lat.boundary},
        "beta": beta, "beta_spec": ti["beta"], "seed": seed,
        "region_size": n_region, "estimator": estimator, "mode": mode,
        "sweeps": {"equilibration": n_eq, "measurement": n_sweeps,
                   "nodes": n_nodes, "block_size": block},
        "s2": s2, "err": err,
    }
    _write_summary(outdir, summary)
    _write_log(outdir, [
        f"command: ti  config: {args.config}",
        f"model: {summary['model']}  beta: {beta}  region size: {n_region}",
        f"nodes: {n_nodes}  estimator: {estimator}  mode: {mode}",
        f"S2 = {s2:.6f} +- {err:.6f}",
        f"wall time: {time.time() - t0:.1f} s",
    ])
    print(f"S2 = {s2:.6f} +- {err:.6f}  ({outdir}/summary.json)")
    return 0


# ------------------------------------------------------------------- oracle

def _tfim_oracle(model: ModelSpec, beta: float) -> dict:
    lat = model.lat
    n = lat.n_spins
    if n > 12:
        raise ConfigError("--L", "chain references stop at L = 12")
    out: dict = {}
    mid = (n // 2 - 1, n // 2)
    pair = ed.mask_of(list(mid))
    half_mask = np.zeros(n, dtype=bool)
    half_mask[:n // 2] = True
    if n <= 8:
        # The full label law: these are the values the sampler converges
        # to at this exact beta, conditioning included.
        probs = ed.reachable_bell_distribution(lat, model.h, beta)
        z_field, x_field = ed.label_fields(n)

        def sq(z_mask, x_mask):
            sgn = 1.0 - 2.0 * (ed._bit_parity(z_field, x_mask)
                               ^ ed._bit_parity(x_field, z_mask))
            return float(probs @ sgn)

        purity = float(probs @ (1.0 - 2.0 * ed._bit_parity(
            z_field & x_field, ed.mask_of(half_mask))))
        out["reference"] = "sampler law (sector-conditioned, exact)"
        out["pauli_sq"] = {f"XX_{mid[0]}_{mid[1]}": sq(0, pair),
                           f"ZZ_{mid[0]}_{mid[1]}": sq(pair, 0)}
    else:
        # Plain thermal-state values; they match the sampler targets up
        # to sector corrections that vanish exponentially in beta.
        st = ed.thermal_state(ed.tfim_hamiltonian(lat, model.h), n,
                              beta=beta)
        purity = ed.exact_purity(st, half_mask)
        out["reference"] = "thermal state (unconditioned)"
        out["pauli_sq"] = {
            f"XX_{mid[0]}_{mid[1]}": ed.pauli_expect(st, 0, pair) ** 2,
            f"ZZ_{mid[0]}_{mid[1]}": ed.pauli_expect(st, pair, 0) ** 2}
    out["purity"] = {"half": purity}
    out["s2"] = {"half": -float(np.log(purity))}

    if lat.boundary == "open":
        dense = np.asarray(ed.tfim_hamiltonian(lat, model.h).todense())
        w, v = np.linalg.eigh(dense)
        bw = np.exp(-beta * (w - w[0]))
        g = np.einsum("ij,ij->j", v, v[::-1])      # global-flip character
        z_sum, zg_sum = float(bw.sum()), float(g @ bw)
        out["energy"] = (z_sum * float(w @ bw) + zg_sum * float((g * w) @ bw)) \
            / (z_sum ** 2 + zg_sum ** 2)
    return out


def _gauge_oracle(model: ModelSpec, beta: float) -> dict:
    lat = model.lat
    if lat.L > 3:
        raise ConfigError("--L", "gauge references stop at L = 3 "
                                 "(sector sums over 2^(2 L^2) states)")
    out: dict = {}
    loop = ed.mask_of(wilson_loop_links(lat, 1, 1))
    full, conditioned = ed.lgt_wilson_reference(lat, model.h, beta, loop)
    out["wilson_plaquette"] = {"full": full, "conditioned": conditioned}
    if lat.L == 2:
        reg = square_region(lat, 1)
        probs = ed.reachable_bell_distribution(lat, model.h, beta)
        z_field, x_field = ed.label_fields(lat.n_spins)
        y = z_field & x_field
        plain = float(probs @ (1.0 - 2.0 * ed._bit_parity(y, ed.mask_of(reg.mask))))
        bnd = ed.mask_of(reg.boundary_mask)
        keep = (x_field & bnd) == 0
        inner = 1.0 - 2.0 * ed._bit_parity(y, ed.mask_of(reg.interior_mask))
        gauge = float(probs @ np.where(keep, inner, 0.0))
        out["purity"] = {"plaquette": plain, "plaquette_dephased": gauge}
        out["s2"] = {"plaquette": -float(np.log(plain)),
                     "plaquette_dephased": -float(np.log(gauge))}
    return out


def cmd_oracle(args) -> int:
    if args.model == "tfim":
        model = tfim_model(args.L, args.h, args.boundary)
    else:
        model = lgt_model(args.L, args.h)
    beta = parse_beta(args.beta, args.L, "--beta")
    body = _tfim_oracle(model, beta) if args.model == "tfim" \
        else _gauge_oracle(model, beta)
    doc = {"schema": ORACLE_SCHEMA, "model": args.model, "L": args.L,
           "h": args.h, "beta": beta,
           "boundary": model.lat.boundary, **body}
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        with open(args.out, "w") as f:
            f.write(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


# -------------------------------------------------------------------- check

def cmd_check(args) -> int:
    failures = 0

    def report(name, ok, detail):
        nonlocal failures
        failures += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")

    m = tfim_model(3, 0.9, "open")
    probs = ed.reachable_bell_distribution(m.lat, 0.9, 1.0)
    ch = Chain(m, 1.0, seed=1)
    ch.equilibrate(2000)
    hist = np.zeros(4 ** 3, np.int64)
    ch.run(60_000, hist=hist)
    sup = probs > 1e-15
    leaked = int(hist[~sup].sum())
    exp = probs[sup] * hist.sum()
    big = exp >= 10
    chi2 = float(np.sum((hist[sup][big] - exp[big]) ** 2 / exp[big]))
    red = chi2 / (int(big.sum()) - 1)
    report("chain label law (L=3, beta=1)", leaked == 0 and red < 1.3,
           f"chi2/dof = {red:.3f}, support leaks = {leaked}")
    report("chain propagation closure", ch.check_propagation(),
           "operator string consistent with the slice-0 label")

    g = lgt_model(2, 0.3)
    reg = square_region(g.lat, 1)
    plan = MeasurementPlan(g)
    plan.add_swap(reg, name="sw", translations=False)
    probs = ed.reachable_bell_distribution(g.lat, 0.3, 2.0)
    z_field, x_field = ed.label_fields(8)
    ref = float(probs @ (1.0 - 2.0 * ed._bit_parity(
        z_field & x_field, ed.mask_of(reg.mask))))
    ch = Chain(g, 2.0, seed=2)
    ch.equilibrate(2000)
    out = ch.run(30_000, plan=plan)
    mean, err = estimators.mean_estimate(plan.series(out, "sw"), 500)
    z = abs(mean - ref) / err
    report("gauge swap vs exact (2x2, beta=2)", z < 4.0,
           f"{mean:.4f} vs {ref:.4f} (z = {z:.2f})")
    report("gauge propagation closure", ch.check_propagation(),
           "operator string consistent with the slice-0 label")

    mask = np.array([True, True, False])
    ch = Chain(m, 0.8, seed=3, lam=1.0, mode="analytic", region_mask=mask)
    ch.equilibrate(2000)
    out = ch.run(40_000, wt_region=mask.astype(np.uint8))
    s2, err = extensemble.s2_from_identity_fraction(out["wt"], 2, 500)
    p_conf = ed.reachable_bell_distribution(m.lat, 0.9, 0.8, lam=1.0,
                                            region_mask=mask, confined=True)
    wt = ed.label_region_weight(3, mask)
    ref = 2 * np.log(2.0) + np.log(float(p_conf[wt == 0].sum()))
    z = abs(s2 - ref) / err
    report("entropy identity at lam=1 (L=3)", z < 4.0,
           f"{s2:.4f} vs {ref:.4f} (z = {z:.2f})")

    print(f"{'all checks passed' if not failures else f'{failures} FAILED'}")
    return 1 if failures else 0


# ------------------------------------------------------------------ framing

def _resolve_outdir(args, cfg: dict) -> str:
    outdir = args.out or _get(cfg, "output", "", dict, {}).get("directory") \
        or "out"
    os.makedirs(outdir, exist_ok=True)
    args._outdir = outdir
    return outdir


def _write_summary(outdir: str, summary: dict) -> None:
    with open(os.path.join(outdir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")


def _write_log(outdir: str, lines: list[str]) -> None:
    stamp = time.strftime("%Y-%m-%d %H:%M:%S")
    with open(os.path.join(outdir, "run.log"), "w") as f:
        f.write(f"[{stamp}]\n" + "\n".join(lines) + "\n")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="python -m bellsse",
        description="series-expansion sampler in the two-copy Bell basis")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="measurement run from a TOML config")
    run.add_argument("config")
    ti = sub.add_parser("ti", help="entropy integration over a lambda grid")
    ti.add_argument("config")
    for sp in (run, ti):
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config master seed")
        sp.add_argument("--out", default=None,
                        help="override the output directory")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker processes (results do not depend on it)")
    run.set_defaults(fn=cmd_run)
    ti.set_defaults(fn=cmd_ti)

    orc = sub.add_parser("oracle", help="exact references for small systems")
    orc.add_argument("--model", required=True, choices=("tfim", "gauge"))
    orc.add_argument("--L", required=True, type=int)
    orc.add_argument("--h", required=True, type=float)
    orc.add_argument("--beta", required=True,
                     help="number or '<k>L' expression")
    orc.add_argument("--boundary", default="open",
                     choices=("open", "periodic"))
    orc.add_argument("--out", default=None, help="write JSON here")
    orc.set_defaults(fn=cmd_oracle)

    chk = sub.add_parser("check", help="self-test battery at tiny sizes")
    chk.set_defaults(fn=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (EstimatorExhausted, InsufficientData) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        outdir = getattr(args, "_outdir", None)
        if outdir:
            _write_summary(outdir, {"schema": SCHEMA, "partial": True,
                                    "error": str(exc)})
            print(f"partial artifacts flagged in {outdir}/summary.json",
                  file=sys.stderr)
        return 1
