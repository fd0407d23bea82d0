"""Experiment configuration, drivers and result records."""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from . import braiding as br
from . import free_fermion as ff
from .chern import fhs_chern_number
from .fock import GapError, default_probes, ground_space, topological_order_deviation
from .lattice import (boundary_strip, default_strip_width, half_torus_region, rectangle_region)
from .models import ModelSpec, build_model, hofstadter_one_particle, one_particle_hamiltonian
from .quasi_adiabatic import dressed_charge, flux_report, flux_unitary, locality_lemma_check
from .spectral_filter import make_filter
from .transport import (GateError, TopologicalOrderError, additivity_check, adz_check, brickwork_swap_pump,
                        flux_process, generator_process, hall_conductance, identity_process,
                        index_theorem_check, lsm_density, many_body_index, translation_process,
                        transport_split)

SCHEMA = "mbindex.result/v1"
KINDS = ("ff-index", "mb-index", "lsm", "hall", "adz", "braid", "anyon", "proof-chain")

DEFAULT_TOLERANCES = {
    "commute": 1e-6,  # ||[P, U]|| accepted by ff-index before refusing
    "index": 1e-3,  # |Ind - nearest admissible value|
    "identity": 1e-10,  # exact algebraic identities ([K,P] = [Q,P])
    "flux_commutator": 1e-6,  # ||[e^{2 pi i Qbar}, P]||
    "core": 1e-2,  # core identity
    "ode": 1e-3,  # interpolation ODE residual
    "lemma": 1e-3,  # Locality Lemma residuals
    "topological_order": 0.05,  # gate on the topological-order deviation
    "multiplet": 0.1,  # multiplet spread / gap
    "phase": 0.05,  # braid and anyon phases (radians)
    "charge": 0.05,  # anyon charge distance to Z / p
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    model: ModelSpec
    process: dict = field(default_factory=lambda: {"type": "identity"})
    strip_width: Optional[int] = None
    filter_profile: str = "smoothstep"
    split_tol: Optional[float] = None
    p: Any = "auto"
    n_filled: Optional[int] = None
    phi_points: int = 101
    nk: int = 24
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    output: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind: unknown experiment {self.kind!r}; choose from {KINDS}")
        bad = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if bad:
            raise ConfigError(f"tolerances: unknown keys {sorted(bad)}")
        for k, v in self.tolerances.items():
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"tolerances.{k}: must be positive, got {v!r}")
        if self.strip_width is not None and self.strip_width < 1:
            raise ConfigError("strip_width: must be >= 1")
        if self.phi_points < 3:
            raise ConfigError("phi_points: need at least 3 grid points")
        ptype = self.process.get("type", "identity")
        if ptype not in ("identity", "translation", "flux", "pump", "full-loop"):
            raise ConfigError(f"process.type: unknown process {ptype!r}")
        if ptype == "translation" and "shift" not in self.process:
            raise ConfigError("process.shift: required for translation")
        needs_2d = self.kind in ("hall", "adz", "anyon") or (self.kind == "braid" and ptype == "identity")
        if needs_2d and self.model.L2 < 2:
            raise ConfigError(f"model.L2: {self.kind} needs a two-dimensional torus")

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "model": self.model.to_dict(),
            "process": copy.deepcopy(self.process),
            "strip_width": self.strip_width,
            "filter_profile": self.filter_profile,
            "split_tol": self.split_tol,
            "p": self.p,
            "n_filled": self.n_filled,
            "phi_points": self.phi_points,
            "nk": self.nk,
            "tolerances": dict(self.tolerances),
            "seed": self.seed,
            "output": self.output,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = copy.deepcopy(d)
        if "kind" not in d:
            raise ConfigError("kind: missing")
        if "model" not in d:
            raise ConfigError("model: missing")
        try:
            model = ModelSpec.from_dict(d.pop("model"))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"model: {e}") from e
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "process" in d and isinstance(d["process"].get("shift"), list):
            d["process"]["shift"] = list(d["process"]["shift"])
        return cls(model=model, **d)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    return ExperimentConfig.from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


# ---------------------------------------------------------------- shared model state

class ModelContext:
    """Lazily computed spectra and dressed charges for one model."""

    def __init__(self, spec: ModelSpec, split_tol=None, p="auto", profile="smoothstep"):
        self.spec = spec
        self.split_tol = split_tol
        self.p_hint = p
        self.profile = profile
        self._dressed = {}

    @cached_property
    def model(self):
        return build_model(self.spec)

    @cached_property
    def ground(self):
        return ground_space(self.model.hamiltonian, self.p_hint, self.split_tol)

    @cached_property
    def filter(self):
        return make_filter(self.ground.gap, self.profile)

    def region(self, axis: int):
        return half_torus_region(self.model.lattice, axis)

    def width(self, axis: int, width: Optional[int] = None) -> int:
        return width or default_strip_width(self.region(axis))

    def dressed(self, axis: int, width: Optional[int] = None):
        w = self.width(axis, width)
        key = (axis, w)
        if key not in self._dressed:
            self._dressed[key] = dressed_charge(self.model.hamiltonian, self.region(axis), self.ground,
                                                self.filter, w)
        return self._dressed[key]

    @cached_property
    def topological_order_deviation(self) -> float:
        g = self.ground
        if g.p == 1:
            return 0.0
        return topological_order_deviation(g, default_probes(self.model.basis))


@lru_cache(maxsize=8)
def model_context(spec: ModelSpec, split_tol=None, p="auto", profile="smoothstep") -> ModelContext:
    return ModelContext(spec, split_tol, p, profile)


def _ctx(cfg: ExperimentConfig) -> ModelContext:
    return model_context(cfg.model, cfg.split_tol, cfg.p, cfg.filter_profile)


# ---------------------------------------------------------------- drivers

def _ff_setup(cfg):
    spec = cfg.model
    lat = spec.lattice
    h = one_particle_hamiltonian(spec)
    q = Fraction(spec.alpha).denominator if spec.name == "hofstadter" else 2
    n_filled = cfg.n_filled or lat.dim // q
    p, gap = ff.projection_below_gap(h, n_filled)
    g1 = half_torus_region(lat, 1)
    g2 = half_torus_region(lat, 2)
    w = cfg.strip_width or default_strip_width(g1)
    return spec, lat, h, p, gap, g1, g2, w, n_filled


def run_ff_index(cfg: ExperimentConfig) -> dict:
    """Flux quantum threaded in direction 2, transport of the Gamma charge through its minus boundary."""
    spec, lat, h, p, gap, g1, g2, w, n_filled = _ff_setup(cfg)
    u = ff.flux_unitary_1p(p, g2, w)
    comm = ff.opnorm(ff.comm(p, u))
    # the commutator precondition is reported as a check instead of refusing, so finite-size runs still yield a value
    ind = ff.ff_index(p, u, g1, w, tol_commute=np.inf, check_decay=False)
    values = {"index": ind, "gap": gap, "n_filled": n_filled, "strip_width": w}
    if spec.name == "hofstadter" and Fraction(spec.alpha) != 0:
        bands = n_filled // (lat.dim // Fraction(spec.alpha).denominator)
        values["tknn"] = fhs_chern_number(spec.alpha, bands, cfg.nk, spec.t)
    diag = {"u_commutator": comm,
            "decay_rate_P": ff.rapid_decay_report(p, lat).decay_rate}
    target = values.get("tknn", round(ind))
    checks = {"index": abs(ind - target) < cfg.tol("index"), "u_commutator": comm < cfg.tol("commute")}
    return {"values": values, "diagnostics": diag, "checks": checks}


def run_proof_chain(cfg: ExperimentConfig) -> dict:
    spec, lat, h, p, gap, g1, g2, w, n_filled = _ff_setup(cfg)
    u = ff.flux_unitary_1p(p, g2, w)
    rep = ff.ff_proof_chain(p, u, g1, w)
    checks = {"integrality": rep.integrality_distance < cfg.tol("index"),
              "det": rep.det_residual < 1e-6, "n_commutator": rep.n_commutator < 1e-4}
    return {"values": {"index": rep.index, "strip_width": w}, "diagnostics": rep.as_dict(), "checks": checks}


def _process(cfg: ExperimentConfig, ctx: ModelContext, axis: int = 1):
    pr = cfg.process
    kind = pr.get("type", "identity")
    basis = ctx.model.basis
    if kind == "identity":
        return identity_process(basis.dim)
    if kind == "translation":
        return translation_process(basis, tuple(int(s) for s in pr["shift"]))
    if kind == "pump":
        return generator_process(brickwork_swap_pump(basis, float(pr.get("theta", np.pi / 2))), basis.dim, "pump")
    if kind == "flux":
        # flux threaded across the minus boundary of the half torus along `axis`
        fa = int(pr.get("axis", 2 if ctx.spec.L2 > 1 else 1))
        return flux_process(ctx.dressed(fa, cfg.strip_width), ctx.dressed(axis, cfg.strip_width), "-")
    if kind == "full-loop":
        d = ctx.dressed(axis, cfg.strip_width)
        from .transport import ProcessUnitary
        w = ff.herm_expm(d.generator("-"))
        return ProcessUnitary(ff.herm_expm(d.qbar), "conjugator", conjugators={"-": w, "+": ff.herm_expm(d.generator("+"))},
                              label="full-loop")
    raise ConfigError(f"process.type: {kind}")


def _topo_gate(cfg, ctx):
    g = ctx.ground
    dev = ctx.topological_order_deviation
    diag = {"p": g.p, "gap": g.gap, "multiplet_spread": g.spread, "topological_order_deviation": dev}
    if g.p > 1 and dev > cfg.tol("topological_order"):
        raise GateError(f"topological-order deviation {dev:.3f} exceeds gate {cfg.tol('topological_order')}")
    if g.p > 1 and g.spread > cfg.tol("multiplet") * g.gap:
        raise GateError(f"multiplet spread {g.spread:.3e} exceeds {cfg.tol('multiplet')} of the gap")
    return diag


def run_mb_index(cfg: ExperimentConfig) -> dict:
    ctx = _ctx(cfg)
    diag = _topo_gate(cfg, ctx)
    u = _process(cfg, ctx)
    region = ctx.region(1)
    w = ctx.width(1, cfg.strip_width)
    method = "conjugator" if u.kind == "conjugator" else None
    ts = transport_split(u, ctx.model.basis, region, w, method)
    r = many_body_index(ctx.ground, ts)
    diag.update({"u_commutator": ctx.ground.commutator_norm(u.matrix), "unitarity": u.unitarity(),
                 "splitting_residual": ts.splitting_residual, "pre_shift_spread": ts.pre_shift_spread,
                 "offset": ts.offset, "j": ts.j, "imag": r.imag, "per_state": [float(x) for x in r.per_state]})
    dist = index_theorem_check(r, ctx.ground.p)
    return {"values": {"index": r.index, "distance": dist, "strip_width": w},
            "diagnostics": diag, "checks": {"integrality": dist < cfg.tol("index")}}


def run_lsm(cfg: ExperimentConfig) -> dict:
    ctx = _ctx(cfg)
    shift = tuple(int(s) for s in cfg.process.get("shift", (1, 0)))
    w = ctx.width(1, cfg.strip_width)
    r = lsm_density(ctx.ground, ctx.model.hamiltonian, ctx.region(1), shift, w,
                    topo_threshold=cfg.tol("topological_order"))
    return {"values": {"density": r.density, "distance": r.distance},
            "diagnostics": {"p": ctx.ground.p, "gap": ctx.ground.gap, "translation_commutator": r.commutator,
                            "per_state": [float(x) for x in r.index.per_state]},
            "checks": {"quantized": r.distance < cfg.tol("index")}}


def _hall(cfg, ctx):
    d1 = ctx.dressed(1, cfg.strip_width)
    d2 = ctx.dressed(2, cfg.strip_width)
    return hall_conductance(ctx.ground, d1, d2, ctx.model.basis)


def run_hall(cfg: ExperimentConfig) -> dict:
    ctx = _ctx(cfg)
    diag = _topo_gate(cfg, ctx)
    h = _hall(cfg, ctx)
    diag.update({"flux_commutator": h.flux_commutator, "splitting_residual": h.split.splitting_residual,
                 "pre_shift_spread": h.split.pre_shift_spread, "offset": h.split.offset,
                 "per_state": [float(x) for x in h.index.per_state]})
    return {"values": {"sigma": h.sigma, "distance": h.distance},
            "diagnostics": diag, "checks": {"quantized": h.distance < cfg.tol("phase")}}


def run_adz(cfg: ExperimentConfig) -> dict:
    """rho from the translation index along axis 1, sigma from the Hall run, phi = alpha L2 flux quanta."""
    ctx = _ctx(cfg)
    diag = _topo_gate(cfg, ctx)
    w = ctx.width(1, cfg.strip_width)
    lsm = lsm_density(ctx.ground, ctx.model.hamiltonian, ctx.region(1), (1, 0), w,
                      topo_threshold=cfg.tol("topological_order"))
    h = _hall(cfg, ctx)
    phi = Fraction(cfg.model.alpha) * cfg.model.L2
    res = adz_check(lsm.density, phi, h.sigma, ctx.ground.p)
    diag.update({"flux_commutator": h.flux_commutator})
    return {"values": {"density": lsm.density, "flux": str(phi), "sigma": h.sigma, "adz_distance": res},
            "diagnostics": diag, "checks": {"adz": res < cfg.tol("phase")}}


def run_braid(cfg: ExperimentConfig) -> dict:
    """Core identity, interpolation and loop commutator for the process in cfg (default: flux in direction 2)."""
    ctx = _ctx(cfg)
    diag = _topo_gate(cfg, ctx)
    g = ctx.ground
    d1 = ctx.dressed(1, cfg.strip_width)
    if cfg.process.get("type", "identity") == "identity" and cfg.model.L2 > 1:
        cfg = dataclasses.replace(cfg, process={"type": "flux", "axis": 2})
    u = _process(cfg, ctx)
    method = "conjugator" if u.kind == "conjugator" else None
    ts = transport_split(u, ctx.model.basis, d1.region, d1.width, method)
    f1 = flux_unitary(d1, "-")
    z = br.z_minus(u, d1, f1)
    core = br.core_identity_check(g, u, d1, ts, z)
    grid = np.linspace(0, 2 * np.pi, cfg.phi_points)
    it = br.interpolation_check(g, u, d1, ts, grid)
    b = br.braid_commutator(g, f1, u.matrix)
    ind = it.index
    values = {"index": ind, "core_residual": core, "ode_residual": it.ode_residual,
              "braid_phase": b.phase, "braid_phase_over_pi": b.phase / np.pi}
    diag.update({"max_commutator": it.max_commutator, "z_commutator": g.commutator_norm(z),
                 "braid_deviation": b.deviation, "braid_modulus": b.modulus,
                 "braid_vs_index": float(abs(np.angle(np.exp(1j * (b.phase - 2 * np.pi * ind)))))})
    checks = {"core": core < cfg.tol("core"), "ode": it.ode_residual < cfg.tol("ode"),
              "braid_phase": b.distance < cfg.tol("phase")}
    return {"values": values, "diagnostics": diag, "checks": checks}


def anyon_geometry(ctx: ModelContext):
    """String along the lower half of the minus cut of Gamma; R and the loops around its lower endpoint."""
    lat = ctx.model.lattice
    L1, L2 = lat.L1, lat.L2
    gamma = ctx.region(1)
    lc = br.loop_charge(ctx.model.hamiltonian, gamma, ctx.ground, ctx.filter)
    n = max(1, L2 // 2)
    bonds = br.boundary_bonds_on_cut(lc, 0, range(n))
    # R: horizontal band holding the lower endpoint (rows -1 and 0)
    r = rectangle_region(lat, range(L1), (-1, 0), "R")
    enclosing = rectangle_region(lat, (0, 1), (-1, 0), "A")
    empty = rectangle_region(lat, (L1 // 2, L1 // 2 + 1), (n, n + 1), "A0")
    return lc, bonds, r, enclosing, empty


def run_anyon(cfg: ExperimentConfig) -> dict:
    ctx = _ctx(cfg)
    diag = _topo_gate(cfg, ctx)
    g = ctx.ground
    lc, bonds, r, enc, empty = anyon_geometry(ctx)
    method = cfg.process.get("string_method", "magnus2")
    s = br.string_operator(lc, bonds, method)
    q = br.excitation_charge(g, s, r)
    loop = br.closed_loop(br.loop_charge(ctx.model.hamiltonian, enc, g, ctx.filter))
    loop0 = br.closed_loop(br.loop_charge(ctx.model.hamiltonian, empty, g, ctx.filter))
    ph = br.braid_phase(g, s, loop)
    ph0 = br.braid_phase(g, s, loop0, allow_empty=True)
    exact = br.string_operator(lc, bonds, "exact")
    hall = _hall(cfg, ctx)
    target = 2 * np.pi * hall.sigma
    values = {"epsilon": q.epsilon, "epsilon_other": q.epsilon_other, "charge_sum": q.conservation,
              "braid_phase": ph.phase, "empty_loop_phase": ph0.phase, "sigma": hall.sigma}
    braid_vs_index = float(abs(np.angle(np.exp(1j * (ph.phase - target)))))
    diag.update({"string_convergence": s.convergence,
                 "magnus_vs_closed_form": ff.opnorm(s.unitary - exact.unitary),
                 "string_unitarity": ff.opnorm(s.unitary.conj().T @ s.unitary - np.eye(len(s.unitary))),
                 "excited_modulus": ph.excited_modulus, "charge_distance": q.distance,
                 "braid_vs_index": braid_vs_index, "braid_distance": ph.distance,
                 "flux_commutator": hall.flux_commutator})
    checks = {"charge_sum": q.conservation < 1e-6, "charge": q.distance < cfg.tol("charge"),
              "empty_loop": abs(ph0.phase) < 1e-3, "braid_phase": braid_vs_index < cfg.tol("phase")}
    return {"values": values, "diagnostics": diag, "checks": checks}


DRIVERS = {
    "ff-index": run_ff_index,
    "proof-chain": run_proof_chain,
    "mb-index": run_mb_index,
    "lsm": run_lsm,
    "hall": run_hall,
    "adz": run_adz,
    "braid": run_braid,
    "anyon": run_anyon,
}


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def config_digest(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(json.dumps(cfg.to_dict(), sort_keys=True).encode()).hexdigest()[:12]


def run_experiment(cfg: ExperimentConfig, persist: bool = True) -> dict:
    """Run one experiment and return its record; writes <output>/<kind>-<digest>.json when output is set."""
    np.random.seed(cfg.seed)
    t0 = time.perf_counter()
    status, error = "ok", None
    try:
        body = DRIVERS[cfg.kind](cfg)
    except (GateError, TopologicalOrderError, GapError) as e:
        status, error, body = "gate-failed", str(e), {"values": {}, "diagnostics": {}, "checks": {}}
        try:
            ctx = _ctx(cfg)
            g = ctx.ground
            body["diagnostics"] = {"p": g.p, "gap": g.gap, "multiplet_spread": g.spread,
                                   "topological_order_deviation": ctx.topological_order_deviation}
        except GapError:
            pass
    record = {
        "schema": SCHEMA,
        "kind": cfg.kind,
        "status": status,
        "error": error,
        "config": cfg.to_dict(),
        "values": _clean(body["values"]),
        "diagnostics": _clean(body["diagnostics"]),
        "checks": _clean(body["checks"]),
        "passed": bool(status == "ok" and all(body["checks"].values())),
        "wall_clock": time.perf_counter() - t0,
    }
    if persist and cfg.output:
        out = Path(cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{cfg.kind}-{config_digest(cfg)}.json").write_text(json.dumps(record, indent=2))
    return record


def numeric_payload(record: dict) -> str:
    """Canonical JSON of the reproducible part of a record (everything but the wall clock)."""
    keep = {k: v for k, v in record.items() if k != "wall_clock"}
    return json.dumps(keep, sort_keys=True)


def set_path(d: dict, dotted: str, value):
    """Set a dotted config field; `model.L` sets both torus sides."""
    if dotted == "model.L":
        set_path(d, "model.L1", value)
        if d["model"]["L2"] > 1:
            set_path(d, "model.L2", value)
        return
    keys = dotted.split(".")
    cur = d
    for k in keys[:-1]:
        if k not in cur or not isinstance(cur[k], dict):
            raise ConfigError(f"sweep axis {dotted!r} does not name a config field")
        cur = cur[k]
    if keys[-1] not in cur:
        raise ConfigError(f"sweep axis {dotted!r} does not name a config field")
    cur[keys[-1]] = value


def _sweep_point(args):
    base, axis, value = args
    d = copy.deepcopy(base)
    set_path(d, axis, value)
    try:
        cfg = ExperimentConfig.from_dict(d)
        rec = run_experiment(cfg, persist=False)
    except Exception as e:  # one bad point must not stop the sweep
        rec = {"schema": SCHEMA, "kind": base.get("kind"), "status": "error", "error": f"{type(e).__name__}: {e}",
               "config": d, "values": {}, "diagnostics": {}, "checks": {}, "passed": False, "wall_clock": 0.0}
    rec["sweep"] = {"axis": axis, "value": value}
    return rec


def sweep(cfg: ExperimentConfig, axis: str, values, workers: int = 1, output: Optional[str] = None):
    """Run cfg once per value of the dotted config field `axis`; returns (records, csv_text)."""
    base = cfg.to_dict()
    set_path(copy.deepcopy(base), axis, values[0] if len(values) else None)
    jobs = [(base, axis, v) for v in values]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            records = list(ex.map(_sweep_point, jobs))
    else:
        records = [_sweep_point(j) for j in jobs]
    table = sweep_table(records)
    if output:
        out = Path(output)
        out.mkdir(parents=True, exist_ok=True)
        for i, rec in enumerate(records):
            (out / f"sweep-{i:03d}.json").write_text(json.dumps(rec, indent=2))
        (out / "sweep.csv").write_text(table)
    return records, table


def sweep_table(records) -> str:
    import csv
    import io

    value_keys, diag_keys = [], []
    for r in records:
        for k, v in r["values"].items():
            if isinstance(v, (int, float)) and k not in value_keys:
                value_keys.append(k)
        for k, v in r["diagnostics"].items():
            if isinstance(v, float) and k not in diag_keys:
                diag_keys.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["value", "status", "passed"] + value_keys + diag_keys)
    for r in records:
        row = [r["sweep"]["value"], r["status"], r["passed"]]
        row += [r["values"].get(k, "") for k in value_keys]
        row += [r["diagnostics"].get(k, "") for k in diag_keys]
        w.writerow(row)
    return buf.getvalue()
