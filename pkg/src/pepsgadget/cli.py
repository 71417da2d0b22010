"""Command-line scenarios: verify | sweep | compare | demo.

Exit codes: 0 all checks pass, 1 check failure, 2 config error, 3 resource overrun.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import scipy

from . import __version__
from .double_semion import (
    DsModel,
    build_ds_model,
    build_toric_model,
    consistency_symmetry,
    ds_effective_orders,
    ds_fidelity_sweep,
    ds_plaquette_check,
    ds_standard_hamiltonian,
    plaquette_flip_candidate,
    symmetry_probe,
)
from .gadget import ResolventConfig, build_gadget
from .lattice import HoneycombSpec, PepsGraph, build_honeycomb, chain_graph, ring_graph
from .operators import eig_low, group_clusters
from .peps import (
    NullStateError,
    PepsModel,
    ResourceError,
    default_upsilon_specs,
    identity_model,
    load_maps_json,
    peps_code_space,
    random_model,
    verify_quasi_injectivity,
)
from .report import Report, dumps, loglog_slope
from .sw_global import (
    compute_generators,
    effective_terms_from_histories,
    gap_threshold,
    generator_residuals,
    low_spectrum,
    offdiagonal_norm_global,
    verify_parent_property,
)
from .sw_local import LOCAL_DENSE_LIMIT, compare_global_local, compare_spectra, compute_local_series, garbage_operator, global_effective_dense

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3
BUILTINS = ("trivial", "random", "double-semion", "toric-code")
DENSE_GLOBAL_LIMIT = 2**10
FULL_SPECTRUM_LIMIT = 2**12
SWEEP_HEADER = ("epsilon", "gap", "fidelity", "offdiag_residual", "garbage_norm")


class ConfigError(ValueError):
    """Invalid scenario configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# ----------------------------------------------------------------- config
DEFAULTS: dict = {
    "trivial": {
        "lattice": {"kind": "ring", "sites": 4, "D": 2},
        "epsilons": [0.04, 0.02, 0.01],
        "n": 2,
        "n_star": 1,
    },
    "random": {
        "lattice": {"kind": "chain", "sites": 4, "D": 2, "d": 2},
        "epsilons": [0.04, 0.02, 0.01],
        "n": 2,
        "n_star": 2,
    },
    "double-semion": {
        "lattice": {"kind": "honeycomb", "rows": 1, "cols": 1, "boundary": "open-patch"},
        "epsilons": [0.03, 0.02, 0.013],
        "epsilon_space": 0.1,
        "n": 2,
        "n_star": 6,
    },
    "toric-code": {
        "lattice": {"kind": "honeycomb", "rows": 1, "cols": 1, "boundary": "open-patch"},
        "epsilons": [0.03, 0.02, 0.013],
        "epsilon_space": 0.1,
        "n": 2,
        "n_star": 6,
    },
}

TOLERANCES = {
    "distance": 1e-8,
    "slope": 0.15,
    "slope_margin": 0.8,
    "quasi_injectivity": 1e-9,
    "generator": 1e-12,
    "structure": 1e-10,
}


@dataclass
class ScenarioConfig:
    model: str = "trivial"
    lattice: dict = field(default_factory=dict)
    epsilons: list = field(default_factory=list)
    n: int = 2
    n_star: int = 1
    delta_tilde: float | None = None
    epsilon_space: float | None = None
    j_max: int | None = None
    qi_max_edges: int = 2
    reference: str = "local"
    tolerances: dict = field(default_factory=lambda: dict(TOLERANCES))
    out: str = "out"
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _set_path(doc: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    cur = doc
    for k in keys[:-1]:
        if k not in cur or not isinstance(cur[k], dict):
            cur[k] = {}
        cur = cur[k]
    cur[keys[-1]] = value


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: str | None = None, overrides: Sequence[str] = (), seed: int | None = None, out: str | None = None) -> ScenarioConfig:
    """Defaults for the model, then the JSON file, then ``--set`` overrides."""
    doc: dict = {}
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON ({exc.msg} at line {exc.lineno})") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config", "top level must be an object")
    for item in overrides:
        if "=" not in item:
            raise ConfigError("--set", f"expected KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        _set_path(doc, key.strip(), _parse_value(value))
    if seed is not None:
        doc["seed"] = seed
    if out is not None:
        doc["out"] = out
    model = doc.get("model", "trivial")
    if not isinstance(model, str):
        raise ConfigError("model", "must be a builtin name or a path")
    base = DEFAULTS.get(model, {"lattice": {}, "epsilons": [], "n": 2, "n_star": 1})
    merged = _merge({"model": model, "tolerances": dict(TOLERANCES), **base}, doc)
    known = set(ScenarioConfig.__dataclass_fields__)
    for key in merged:
        if key not in known:
            raise ConfigError(key, "unknown field")
    cfg = ScenarioConfig(**merged)
    validate(cfg)
    return cfg


def validate(cfg: ScenarioConfig) -> None:
    if cfg.model not in BUILTINS and not Path(cfg.model).is_file():
        raise ConfigError("model", f"unknown builtin {cfg.model!r} and no such maps file")
    if not isinstance(cfg.epsilons, list) or not cfg.epsilons:
        raise ConfigError("epsilons", "need at least one value")
    for i, e in enumerate(cfg.epsilons):
        if not isinstance(e, (int, float)) or isinstance(e, bool) or not 0 < e < 1:
            raise ConfigError(f"epsilons[{i}]", "must be a number in (0, 1)")
    for name in ("n", "n_star", "qi_max_edges", "seed"):
        v = getattr(cfg, name)
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise ConfigError(name, "must be a nonnegative integer")
    if cfg.j_max is not None and (not isinstance(cfg.j_max, int) or cfg.j_max <= cfg.n):
        raise ConfigError("j_max", "must be an integer greater than n")
    if cfg.epsilon_space is not None and not (isinstance(cfg.epsilon_space, (int, float)) and 0 < cfg.epsilon_space < 1):
        raise ConfigError("epsilon_space", "must be a number in (0, 1)")
    if cfg.delta_tilde is not None and not (isinstance(cfg.delta_tilde, (int, float)) and cfg.delta_tilde > 0):
        raise ConfigError("delta_tilde", "must be positive")
    if cfg.reference not in ("local", "global"):
        raise ConfigError("reference", "must be 'local' or 'global'")
    if not isinstance(cfg.lattice, dict):
        raise ConfigError("lattice", "must be an object")
    kind = cfg.lattice.get("kind")
    if kind not in ("chain", "ring", "honeycomb"):
        raise ConfigError("lattice.kind", "must be 'chain', 'ring' or 'honeycomb'")
    if kind in ("chain", "ring"):
        sites = cfg.lattice.get("sites")
        if not isinstance(sites, int) or sites < (2 if kind == "chain" else 3):
            raise ConfigError("lattice.sites", "too few sites")
    else:
        for key in ("rows", "cols"):
            if not isinstance(cfg.lattice.get(key), int) or cfg.lattice[key] < 1:
                raise ConfigError(f"lattice.{key}", "must be a positive integer")
        if cfg.lattice.get("boundary", "torus") not in ("torus", "open-patch"):
            raise ConfigError("lattice.boundary", "must be 'torus' or 'open-patch'")
    for key, v in cfg.tolerances.items():
        if not isinstance(v, (int, float)) or v < 0:
            raise ConfigError(f"tolerances.{key}", "must be a nonnegative number")


# ----------------------------------------------------------------- scenario
@dataclass
class Scenario:
    config: ScenarioConfig
    model: PepsModel
    ds: DsModel | None = None

    @property
    def delta_tilde(self) -> float:
        if self.config.delta_tilde is not None:
            return float(self.config.delta_tilde)
        return ResolventConfig.default(self.model.r_star).delta_tilde

    def history_table(self, n: int):
        if self.ds is not None:
            return self.ds.history_table(n)
        return build_gadget(self.model).frame.histories(n)

    def reference(self):
        if self.ds is not None:
            return self.ds.peps_space
        return peps_code_space(self.model)


def _graph(cfg: ScenarioConfig) -> PepsGraph:
    lat = cfg.lattice
    if lat["kind"] == "chain":
        return chain_graph(lat["sites"])
    if lat["kind"] == "ring":
        return ring_graph(lat["sites"])
    return build_honeycomb(_honeycomb_spec(cfg)).graph


def _honeycomb_spec(cfg: ScenarioConfig) -> HoneycombSpec:
    lat = cfg.lattice
    return HoneycombSpec(lat["rows"], lat["cols"], lat.get("boundary", "torus"))


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    D = int(cfg.lattice.get("D", 2))
    if cfg.model in ("double-semion", "toric-code"):
        if cfg.lattice["kind"] != "honeycomb":
            raise ConfigError("lattice.kind", f"{cfg.model} needs a honeycomb lattice")
        spec = _honeycomb_spec(cfg)
        ds = build_ds_model(spec) if cfg.model == "double-semion" else build_toric_model(spec)
        return Scenario(cfg, ds.model, ds)
    graph = _graph(cfg)
    if cfg.model == "trivial":
        return Scenario(cfg, identity_model(graph, D=D))
    if cfg.model == "random":
        return Scenario(cfg, random_model(graph, d=int(cfg.lattice.get("d", 2)), D=D, seed=cfg.seed))
    try:
        maps = load_maps_json(Path(cfg.model).read_text())
        maps = {s: maps[s] if s in maps else maps[str(s)] for s in graph.sites if s in maps or str(s) in maps}
        model = PepsModel(graph, maps, D, name=Path(cfg.model).stem)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError("model", f"invalid maps file: {exc}") from exc
    if cfg.lattice["kind"] == "honeycomb":
        hc = build_honeycomb(_honeycomb_spec(cfg))
        ds = DsModel(hc, model, None, kind=model.name)
        return Scenario(cfg, model, ds)
    return Scenario(cfg, model)


# ----------------------------------------------------------------- commands
def _slope_check(rep: Report, name: str, epsilons, values, target: float, floor: float) -> None:
    """Slope >= target, or every value at the rounding floor (exact agreement)."""
    if max(values) <= floor:
        rep.add(f"{name} at rounding floor", float(max(values)), floor, "<=", "exact")
        return
    slope, _ = loglog_slope(epsilons, values)
    rep.add(f"{name} slope", slope, target, ">=")


def cmd_verify(sc: Scenario) -> Report:
    cfg = sc.config
    tol = cfg.tolerances
    rep = Report("verify")
    model = sc.model
    specs = default_upsilon_specs(model, max_edges=cfg.qi_max_edges)
    qi = verify_quasi_injectivity(model, specs, tol=tol["quasi_injectivity"])
    rep.add("quasi-injectivity failures", len(qi.failures()), 0, "==", f"{len(qi.entries)} specs")
    rep.data["quasi_injectivity"] = {"max_residual": qi.max_residual, "failed": [e["spec"] for e in qi.failures()]}

    g = build_gadget(model)
    if model.site_register.total_dim <= DENSE_GLOBAL_LIMIT:
        series = compute_generators(g, cfg.n)
        res = generator_residuals(series) if series.generators else {"anti_hermitian": 0.0, "block_diagonal": 0.0}
        rep.add("generator anti-hermiticity", res["anti_hermitian"], tol["generator"])
        rep.add("generator off-diagonality", res["block_diagonal"], tol["generator"])
        resid = [offdiagonal_norm_global(series, e) for e in cfg.epsilons]
        rep.data["global_offdiag"] = resid
        if len(cfg.epsilons) >= 2:
            _slope_check(rep, "global off-diagonal residual", cfg.epsilons, resid, cfg.n + tol["slope_margin"], 100 * np.finfo(float).eps)
    else:
        rep.data["global_offdiag"] = "skipped: register exceeds the dense limit"

    if sc.ds is not None and sc.ds.tensor is not None:
        table = sc.history_table(max(cfg.n_star, 6))
        rep.extend(ds_effective_orders(sc.ds, table=table, tol=tol["structure"]), "orders.")
        if sc.ds.honeycomb.plaquettes:
            rep.extend(ds_plaquette_check(sc.ds, table=table), "plaquette.")
    else:
        table = sc.history_table(cfg.n_star)

    try:
        ref = sc.reference()
    except NullStateError as exc:
        rep.flag("encoded PEPS space nonempty", False, str(exc))
        return rep
    if len(cfg.epsilons) < 2:
        raise ConfigError("epsilons", "the gap slope needs at least two values")
    pp = verify_parent_property(
        table,
        cfg.n_star,
        cfg.epsilons,
        ref,
        epsilon_space=cfg.epsilon_space,
        delta_tilde=sc.delta_tilde,
        dist_tol=tol["distance"],
        slope_tol=tol["slope"],
    )
    rep.extend(pp, "parent.")
    return rep


def _full_fidelity(sc: Scenario, eps: float, basis: np.ndarray, k: int) -> float:
    g = build_gadget(sc.model)
    h = g.full_hamiltonian(eps).to_csr()
    dec = eig_low(h, min(k, h.shape[0] - 2))
    tau = gap_threshold(float(np.abs(dec.eigenvalues).max()), eps, sc.config.n_star)
    ground = dec.eigenvectors[:, group_clusters(dec.eigenvalues, tau)[0]]
    return float(np.linalg.norm(basis.conj().T @ ground) ** 2 / ground.shape[1])


def cmd_sweep(sc: Scenario) -> tuple[Report, list]:
    cfg = sc.config
    tol = cfg.tolerances
    if len(cfg.epsilons) < 2:
        raise ConfigError("epsilons", "a sweep needs at least two values for slope fits")
    eps_list = sorted(cfg.epsilons, reverse=True)
    rep = Report("sweep")
    table = sc.history_table(cfg.n_star)
    terms = effective_terms_from_histories(table, cfg.n_star)
    model = sc.model
    g = build_gadget(model)
    small = model.register.total_dim <= FULL_SPECTRUM_LIMIT
    dense = model.site_register.total_dim <= DENSE_GLOBAL_LIMIT
    basis = None
    if small:
        try:
            from .double_semion import code_isometry

            basis = (code_isometry(model) @ sc.reference()).toarray()
        except NullStateError:
            basis = None
    gseries = compute_generators(g, cfg.n) if dense else None
    j_max = cfg.j_max or cfg.n + 2
    lseries = compute_local_series(g, cfg.n, j_max=j_max) if dense else None
    rows = []
    for eps in eps_list:
        heff = sum((eps**j) * terms[j] for j in range(1, cfg.n_star + 1))
        spec = low_spectrum(heff, gap_threshold(float(np.abs(heff.data).max()) if heff.nnz else 0.0, eps, cfg.n_star))
        fid = _full_fidelity(sc, eps, basis, basis.shape[1] + 6) if basis is not None else float("nan")
        off = offdiagonal_norm_global(gseries, eps) if gseries is not None and gseries.generators else float("nan")
        garb = float(np.linalg.norm(garbage_operator(lseries, eps, j_max), 2)) if lseries is not None else float("nan")
        rows.append({"epsilon": float(eps), "gap": spec.gap, "fidelity": fid, "offdiag_residual": off, "garbage_norm": garb})
    gaps = [r["gap"] for r in rows]
    slope, r2 = loglog_slope(eps_list, gaps)
    rep.add("gap slope deviation", abs(slope - cfg.n_star), tol["slope"], "<=", f"slope={slope:.6g}")
    fids = [r["fidelity"] for r in rows]
    if all(np.isfinite(fids)):
        rises = [fids[i] - fids[i + 1] for i in range(len(fids) - 1)]
        rep.add("fidelity nonincreasing in epsilon", max(rises), 1e-12, "<=")
    for col in ("offdiag_residual", "garbage_norm"):
        vals = [r[col] for r in rows]
        if all(np.isfinite(vals)):
            _slope_check(rep, col, eps_list, vals, cfg.n + tol["slope_margin"], 100 * np.finfo(float).eps)
    rep.data = {"gap_slope": slope, "gap_r_squared": r2, "rows": rows}
    return rep, rows


def cmd_compare(sc: Scenario) -> Report:
    cfg = sc.config
    model = sc.model
    g = build_gadget(model)
    if model.site_register.total_dim > LOCAL_DENSE_LIMIT:
        raise ResourceError(f"comparison needs a register of at most {LOCAL_DENSE_LIMIT} dimensions")
    if model.site_register.total_dim <= DENSE_GLOBAL_LIMIT:
        gterms = compute_generators(g, cfg.n).terms
    else:
        gterms = effective_terms_from_histories(sc.history_table(cfg.n), cfg.n)
    if cfg.reference == "global":
        glob = lambda e: global_effective_dense(gterms, cfg.n, e)  # noqa: E731
        return compare_spectra(glob, glob, cfg.epsilons, cfg.n, "global-global")
    return compare_global_local(gterms, compute_local_series(g, cfg.n), cfg.epsilons)


def cmd_demo(sc: Scenario) -> Report:
    """The double-semion worked example on the 1x1 torus and the open patch."""
    rep = Report("demo")
    torus = build_ds_model(HoneycombSpec(1, 1, "torus"))
    patch = build_ds_model(HoneycombSpec(1, 1, "open-patch"))
    std = ds_standard_hamiltonian(torus.honeycomb.spec).toarray()
    ev = np.linalg.eigvalsh(std)
    rep.data["standard_hamiltonian"] = {"ground_energy": float(ev[0]), "degeneracy": int(np.sum(ev - ev[0] < 1e-9))}
    rep.extend(ds_effective_orders(patch), "patch.orders.")
    rep.extend(ds_plaquette_check(patch), "patch.plaquette.")
    rep.extend(ds_fidelity_sweep(torus, [0.08, 0.04, 0.02, 0.01]), "torus.fidelity.")
    probe = symmetry_probe(torus, consistency_symmetry(torus, torus.honeycomb.internal_edges[0]), 0.05)
    rep.add("consistency symmetry exact", probe.data["commutator_full"], 1e-10)
    flip = symmetry_probe(torus, plaquette_flip_candidate(torus), 0.05)
    rep.add("plaquette flip approximate", flip.data["relative"], 1e-6, ">")
    torus_orders = ds_effective_orders(torus)
    rep.data["torus_orders"] = torus_orders.to_dict()
    return rep


COMMANDS = ("verify", "sweep", "compare", "demo")


def _versions() -> dict:
    return {"package": __version__, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def _write_report(out: Path, cfg: ScenarioConfig | None, command: str, rep: Report | None, extra: dict | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "command": command,
        "scenario": cfg.to_dict() if cfg else None,
        "versions": _versions(),
        "passed": bool(rep.passed) if rep else False,
        "checks": rep.to_dict()["checks"] if rep else [],
        "data": rep.data if rep else {},
    }
    if extra:
        doc.update(extra)
    (out / "report.json").write_text(dumps(doc))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pepsgadget", description="Perturbative PEPS parent-Hamiltonian experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", metavar="PATH", help="scenario JSON")
    p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], help="override a config field (dotted path)")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--seed", metavar="N", type=int, help="random seed")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    cfg = None
    try:
        cfg = load_config(args.config, args.set, args.seed, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out)
    timings: dict = {}
    start = time.perf_counter()
    try:
        sc = build_scenario(cfg)
        if args.command == "verify":
            rep = cmd_verify(sc)
        elif args.command == "sweep":
            rep, rows = cmd_sweep(sc)
            out.mkdir(parents=True, exist_ok=True)
            with open(out / "sweep.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(SWEEP_HEADER)
                for r in rows:
                    w.writerow([format(r[k], ".17g") for k in SWEEP_HEADER])
        elif args.command == "compare":
            rep = cmd_compare(sc)
        else:
            rep = cmd_demo(sc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResourceError, MemoryError) as exc:
        _write_report(out, cfg, args.command, None, {"resource_overrun": True, "error": str(exc)})
        print(f"resource overrun: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    timings[args.command] = time.perf_counter() - start
    _write_report(out, cfg, args.command, rep)
    (out / "timings.json").write_text(dumps(timings))
    print(rep.summary())
    return EXIT_OK if rep.passed else EXIT_FAIL
