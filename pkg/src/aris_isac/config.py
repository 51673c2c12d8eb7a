"""Experiment specification: YAML loading, validation and unit conversion.

Powers are given in dBm and SINR targets in dB; everything is converted to
linear units when the spec is built.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
import math
from pathlib import Path

import yaml

from .bcd import Mode
from .channels import Geometry, _default_exponents, _default_rician
from .model import SystemConfig, db_to_lin, dbm_to_watt

SWEEP_PARAMS = ("p_bs_dbm", "gamma_db", "n_ris", "a_max")


class SpecError(ValueError):
    """Malformed experiment spec; ``line`` is 1-based when known."""

    def __init__(self, message: str, path: str = "", line: int | None = None):
        self.path = path
        self.line = line
        where = f"line {line}: " if line is not None else ""
        field_ = f"{path}: " if path else ""
        super().__init__(f"{where}{field_}{message}")


@dataclass(frozen=True)
class ScenarioSpec:
    n_bs: int
    n_users: int
    n_ris: int
    p_bs_dbm: float = 40.0
    p_ris_dbm: float = 20.0
    noise_dbm: float = -80.0
    ris_noise_dbm: float | None = None     # None: same as noise_dbm
    radar_noise_dbm: float | None = None
    gamma_db: float = 12.0
    a_max: float = 8.0
    rcs_var: float = 1.0

    def system_config(self) -> SystemConfig:
        s2z = self.noise_dbm if self.ris_noise_dbm is None else self.ris_noise_dbm
        s2r = self.noise_dbm if self.radar_noise_dbm is None else self.radar_noise_dbm
        return SystemConfig(
            n_bs=self.n_bs, n_users=self.n_users, n_ris=self.n_ris,
            p_bs=dbm_to_watt(self.p_bs_dbm), p_ris=dbm_to_watt(self.p_ris_dbm),
            sigma2_z=dbm_to_watt(s2z), sigma2_r=dbm_to_watt(s2r),
            sigma2_user=dbm_to_watt(self.noise_dbm), gamma_targets=float(db_to_lin(self.gamma_db)),
            a_max=self.a_max, rcs_var=self.rcs_var,
        )


@dataclass(frozen=True)
class GeometrySpec:
    bs_pos: tuple = (0.0, 0.0)
    ris_pos: tuple = (15.0, 10.0)
    target_pos: tuple = (70.0, 0.0)
    user_center: tuple = (70.0, -10.0)
    user_radius: float = 5.0
    pathloss_ref_db: float = -30.0
    exponents: dict = field(default_factory=_default_exponents)
    rician_k: dict = field(default_factory=_default_rician)

    def geometry(self, seed: int) -> Geometry:
        return Geometry(bs_pos=tuple(self.bs_pos), ris_pos=tuple(self.ris_pos),
                        target_pos=tuple(self.target_pos), user_center=tuple(self.user_center),
                        user_radius=self.user_radius, pathloss_ref=self.pathloss_ref_db,
                        exponents=dict(self.exponents), rician_k=dict(self.rician_k), seed=seed)


@dataclass(frozen=True)
class SolverSpec:
    max_outer: int = 50
    rel_tol: float = 1e-4
    backend: str | None = None


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: ScenarioSpec
    sweep: SweepSpec
    geometry: GeometrySpec = field(default_factory=GeometrySpec)
    modes: tuple = (Mode.ACTIVE_ISAC,)
    n_seeds: int = 1
    seed: int = 0
    output: str = "results.csv"
    solver: SolverSpec = field(default_factory=SolverSpec)

    def seeds(self) -> list[int]:
        return [self.seed + s for s in range(self.n_seeds)]

    def point_scenario(self, value) -> ScenarioSpec:
        """Scenario with the sweep parameter set to ``value``."""
        name = self.sweep.parameter
        return replace(self.scenario, **{name: int(value) if name == "n_ris" else float(value)})

    def resolved(self) -> dict:
        """Plain-data dump of the spec with every default filled in."""
        d = asdict(self)
        d["modes"] = [Mode(m).value for m in self.modes]
        d["sweep"]["values"] = list(self.sweep.values)
        for key in ("bs_pos", "ris_pos", "target_pos", "user_center"):
            d["geometry"][key] = list(d["geometry"][key])
        d["geometry"]["rician_k"] = {k: (None if math.isinf(v) else v)
                                     for k, v in d["geometry"]["rician_k"].items()}
        return d


# ---------------------------------------------------------------------------
# loading

def _line_index(node, prefix: str = "", out: dict | None = None) -> dict:
    """Map dotted key paths to 1-based source lines."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key, val in node.value:
            path = f"{prefix}.{key.value}" if prefix else str(key.value)
            out[path] = key.start_mark.line + 1
            _line_index(val, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            path = f"{prefix}[{i}]"
            out[path] = item.start_mark.line + 1
            _line_index(item, path, out)
    return out


class _Reader:
    """Typed access to a nested mapping with line-aware errors."""

    def __init__(self, lines: dict):
        self.lines = lines

    def fail(self, path: str, message: str):
        line = self.lines.get(path)
        if line is None and "." in path:
            line = self.lines.get(path.rsplit(".", 1)[0])
        raise SpecError(message, path, line)

    def section(self, data: dict, key: str, path: str, required: bool = False) -> dict:
        full = f"{path}.{key}" if path else key
        if key not in data:
            if required:
                self.fail(path, f"missing required field {full!r}")
            return {}
        val = data[key]
        if not isinstance(val, dict):
            self.fail(full, "expected a mapping")
        return val

    def check_keys(self, data: dict, allowed, path: str):
        for key in data:
            if key not in allowed:
                full = f"{path}.{key}" if path else str(key)
                self.fail(full, f"unknown field {key!r}")

    def number(self, data, key, path, default=None, required=False, kind=float, cond=None,
               cond_msg=""):
        full = f"{path}.{key}" if path else key
        if key not in data or data[key] is None:
            if required:
                self.fail(path, f"missing required field {full!r}")
            return default
        val = data[key]
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self.fail(full, f"expected a number, got {val!r}")
        if kind is int:
            if float(val) != int(val):
                self.fail(full, f"expected an integer, got {val!r}")
            val = int(val)
        else:
            val = float(val)
            if not math.isfinite(val):
                self.fail(full, "must be finite")
        if cond is not None and not cond(val):
            self.fail(full, cond_msg)
        return val

    def point(self, data, key, path, default):
        full = f"{path}.{key}"
        if key not in data:
            return default
        val = data[key]
        if (not isinstance(val, (list, tuple)) or len(val) != 2
                or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in val)):
            self.fail(full, "expected a pair of numbers [x, y]")
        return (float(val[0]), float(val[1]))


def _scenario(r: _Reader, data: dict) -> ScenarioSpec:
    s = r.section(data, "scenario", "", required=True)
    p = "scenario"
    r.check_keys(s, ScenarioSpec.__dataclass_fields__, p)
    pos = dict(cond=lambda v: v >= 1, cond_msg="must be >= 1")
    d = ScenarioSpec.__dataclass_fields__
    noise_ok = dict(cond=lambda v: v > -400, cond_msg="noise power in dBm is implausibly small")
    spec = ScenarioSpec(
        n_bs=r.number(s, "n_bs", p, required=True, kind=int, **pos),
        n_users=r.number(s, "n_users", p, required=True, kind=int, **pos),
        n_ris=r.number(s, "n_ris", p, required=True, kind=int, **pos),
        p_bs_dbm=r.number(s, "p_bs_dbm", p, d["p_bs_dbm"].default),
        p_ris_dbm=r.number(s, "p_ris_dbm", p, d["p_ris_dbm"].default),
        noise_dbm=r.number(s, "noise_dbm", p, d["noise_dbm"].default, **noise_ok),
        ris_noise_dbm=r.number(s, "ris_noise_dbm", p, None, **noise_ok),
        radar_noise_dbm=r.number(s, "radar_noise_dbm", p, None, **noise_ok),
        gamma_db=r.number(s, "gamma_db", p, d["gamma_db"].default),
        a_max=r.number(s, "a_max", p, d["a_max"].default, cond=lambda v: v > 0, cond_msg="must be > 0"),
        rcs_var=r.number(s, "rcs_var", p, d["rcs_var"].default, cond=lambda v: v >= 0,
                         cond_msg="must be >= 0"),
    )
    return spec


def _geometry(r: _Reader, data: dict) -> GeometrySpec:
    g = r.section(data, "geometry", "")
    p = "geometry"
    r.check_keys(g, GeometrySpec.__dataclass_fields__, p)
    base = GeometrySpec()
    exps = dict(base.exponents)
    for link, val in r.section(g, "exponents", p).items():
        if link not in exps:
            r.fail(f"{p}.exponents.{link}", f"unknown link {link!r}")
        exps[link] = r.number({link: val}, link, f"{p}.exponents", cond=lambda v: v >= 2,
                              cond_msg="path-loss exponent must be >= 2")
    ks = dict(base.rician_k)
    for link, val in r.section(g, "rician_k", p).items():
        if link not in ks:
            r.fail(f"{p}.rician_k.{link}", f"unknown link {link!r}")
        # null means pure line of sight
        ks[link] = math.inf if val is None else r.number(
            {link: val}, link, f"{p}.rician_k", cond=lambda v: v >= 0, cond_msg="must be >= 0")
    return GeometrySpec(
        bs_pos=r.point(g, "bs_pos", p, base.bs_pos),
        ris_pos=r.point(g, "ris_pos", p, base.ris_pos),
        target_pos=r.point(g, "target_pos", p, base.target_pos),
        user_center=r.point(g, "user_center", p, base.user_center),
        user_radius=r.number(g, "user_radius", p, base.user_radius, cond=lambda v: v >= 0,
                             cond_msg="must be >= 0"),
        pathloss_ref_db=r.number(g, "pathloss_ref_db", p, base.pathloss_ref_db),
        exponents=exps, rician_k=ks,
    )


def _sweep(r: _Reader, data: dict, scenario: ScenarioSpec) -> SweepSpec:
    if "sweep" not in data:
        return SweepSpec("p_bs_dbm", (scenario.p_bs_dbm,))
    s = r.section(data, "sweep", "")
    r.check_keys(s, ("parameter", "values"), "sweep")
    param = s.get("parameter")
    if param not in SWEEP_PARAMS:
        r.fail("sweep.parameter", f"must be one of {', '.join(SWEEP_PARAMS)}, got {param!r}")
    vals = s.get("values")
    if not isinstance(vals, list) or not vals:
        r.fail("sweep.values" if "values" in s else "sweep", "sweep values must be a non-empty list")
    kind = int if param == "n_ris" else float
    positive = param in ("n_ris", "a_max")
    out = []
    for i, val in enumerate(vals):
        path = f"sweep.values[{i}]"
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            r.fail(path, f"expected a number, got {val!r}")
        if kind is int and float(val) != int(val):
            r.fail(path, f"expected an integer, got {val!r}")
        if not math.isfinite(val) or (positive and val <= 0):
            r.fail(path, "must be finite" + (" and > 0" if positive else ""))
        out.append(kind(val))
    return SweepSpec(param, tuple(out))


def _modes(r: _Reader, data: dict) -> tuple:
    raw = data.get("modes", [Mode.ACTIVE_ISAC.value])
    if isinstance(raw, str):
        raw = [raw]
    if not isinstance(raw, list) or not raw:
        r.fail("modes", "expected a non-empty list of modes")
    out = []
    for i, m in enumerate(raw):
        try:
            mode = Mode(m)
        except ValueError:
            r.fail(f"modes[{i}]", f"unknown mode {m!r}; choose from "
                   + ", ".join(x.value for x in Mode))
        if mode not in out:
            out.append(mode)
    return tuple(out)


def _solver(r: _Reader, data: dict) -> SolverSpec:
    s = r.section(data, "solver", "")
    r.check_keys(s, SolverSpec.__dataclass_fields__, "solver")
    backend = s.get("backend")
    if backend not in (None, "clarabel", "embedded"):
        r.fail("solver.backend", f"unknown backend {backend!r}; choose clarabel or embedded")
    return SolverSpec(
        max_outer=r.number(s, "max_outer", "solver", 50, kind=int, cond=lambda v: v >= 1,
                           cond_msg="must be >= 1"),
        rel_tol=r.number(s, "rel_tol", "solver", 1e-4, cond=lambda v: v > 0, cond_msg="must be > 0"),
        backend=backend,
    )


TOP_KEYS = ("scenario", "geometry", "sweep", "modes", "n_seeds", "seed", "output", "solver")


def spec_from_text(text: str) -> ExperimentSpec:
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise SpecError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                        line=mark.line + 1 if mark else None) from None
    if not isinstance(data, dict):
        raise SpecError("top level must be a mapping", line=1)
    r = _Reader(_line_index(root))
    r.check_keys(data, TOP_KEYS, "")
    scenario = _scenario(r, data)
    out = data.get("output", "results.csv")
    if not isinstance(out, str) or not out:
        r.fail("output", "expected a file path")
    return ExperimentSpec(
        scenario=scenario,
        geometry=_geometry(r, data),
        sweep=_sweep(r, data, scenario),
        modes=_modes(r, data),
        n_seeds=r.number(data, "n_seeds", "", 1, kind=int, cond=lambda v: v >= 1,
                         cond_msg="must be >= 1"),
        seed=r.number(data, "seed", "", 0, kind=int, cond=lambda v: v >= 0, cond_msg="must be >= 0"),
        output=out,
        solver=_solver(r, data),
    )


def load_spec(path: str | Path) -> ExperimentSpec:
    return spec_from_text(Path(path).read_text(encoding="utf-8"))


def dump_resolved(spec: ExperimentSpec) -> str:
    return yaml.safe_dump(spec.resolved(), sort_keys=True, default_flow_style=None)
