"""YAML problem configuration: strict parsing, defaults and round-tripping."""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from polytopt.exceptions import ConfigError
from polytopt.sdf import SignedDistanceField, field_from_dict

AXES = {"x": 0, "y": 1, "z": 2}


@dataclass
class MeshConfig:
    n_seeds: int = 1000
    lloyd_iters: int = 50
    reflection_c: float = 1.5
    file: str | None = None        # read a mesh instead of generating one


@dataclass
class MaterialConfig:
    E: float = 1.0e4
    nu: float = 0.3


@dataclass
class SimpConfig:
    penal: float = 3.0
    eps: float = 1.0e-4


@dataclass
class FilterConfig:
    radius: float | None = None    # None or 0 disables the filter
    relative: bool = False         # radius as a fraction of the largest domain extent


@dataclass
class OptimizerConfig:
    move: float = 0.2
    damping: float = 0.5
    max_iter: int = 300
    change_tol: float = 0.01


@dataclass
class SolverConfig:
    tol: float = 1.0e-8
    max_iter: int = 10_000


@dataclass
class Selector:
    """Either an SDF region (vertices with ``d <= tol``) or a point
    (nearest boundary vertex)."""

    region: dict | None = None
    point: list | None = None


@dataclass
class Support(Selector):
    components: list = field(default_factory=lambda: ["x", "y", "z"])


@dataclass
class Load(Selector):
    force: list | None = None          # total force, split equally over selected nodes
    traction: list | None = None       # per unit area, on boundary faces inside the region


@dataclass
class Spring(Selector):
    direction: str = "x"
    stiffness: float | None = None     # None: frozen diagonal of K at the initial design


@dataclass
class OutputSpec(Selector):
    direction: str = "x"
    sign: float = 1.0


@dataclass
class ObjectiveConfig:
    kind: str = "compliance"
    output: OutputSpec | None = None


@dataclass
class ProblemConfig:
    domain: dict
    volume_fraction: float
    name: str = "problem"
    seed: int = 0
    threads: int = 1
    mesh: MeshConfig = field(default_factory=MeshConfig)
    material: MaterialConfig = field(default_factory=MaterialConfig)
    simp: SimpConfig = field(default_factory=SimpConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    supports: list = field(default_factory=list)
    loads: list = field(default_factory=list)
    springs: list = field(default_factory=list)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    passive: list = field(default_factory=list)

    def domain_field(self) -> SignedDistanceField:
        return field_from_dict(self.domain, "domain")

    def filter_radius(self, field: SignedDistanceField | None = None) -> float | None:
        r = self.filter.radius
        if not r:
            return None
        if self.filter.relative:
            field = field or self.domain_field()
            return float(r * field.bounding_box().extent.max())
        return float(r)


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

def _check_keys(data, cls, path):
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    allowed = set(cls.__dataclass_fields__)
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(repr(k) for k in unknown)}")


def _coerce(data, cls, path):
    # YAML 1.1 reads "1e4" as a string; convert numeric fields by annotation
    out = dict(data)
    for name, f in cls.__dataclass_fields__.items():
        kind = str(f.type).split("|")[0].strip()
        if name not in out or out[name] is None or kind not in ("int", "float", "bool"):
            continue
        v = out[name]
        try:
            if kind == "bool":
                if not isinstance(v, bool):
                    raise ValueError
            elif kind == "int":
                if isinstance(v, bool) or float(v) != int(float(v)):
                    raise ValueError
                v = int(float(v))
            else:
                if isinstance(v, bool):
                    raise ValueError
                v = float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}.{name}: expected {kind}, got {data[name]!r}") from None
        out[name] = v
    return out


def _section(data, cls, path):
    if data is None:
        return cls()
    _check_keys(data, cls, path)
    try:
        return cls(**_coerce(data, cls, path))
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _check_sdf(spec, path):
    try:
        field_from_dict(spec, path)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _vec(v, path, n=3):
    try:
        out = [float(x) for x in v]
    except (TypeError, ValueError):
        out = []
    if len(out) != n:
        raise ConfigError(f"{path}: expected a list of {n} numbers")
    return out


def _selector(item: Selector, path):
    if (item.region is None) == (item.point is None):
        raise ConfigError(f"{path}: give exactly one of 'region' or 'point'")
    if item.region is not None:
        _check_sdf(item.region, f"{path}.region")
    else:
        item.point = _vec(item.point, f"{path}.point")


def _axis(name, path):
    if name not in AXES:
        raise ConfigError(f"{path}: direction must be one of x, y, z (got {name!r})")


def _items(data, cls, path):
    if data is None:
        return []
    if not isinstance(data, list):
        raise ConfigError(f"{path}: expected a list")
    out = []
    for i, d in enumerate(data):
        item = _section(d, cls, f"{path}[{i}]")
        _selector(item, f"{path}[{i}]")
        out.append(item)
    return out


def _positive(value, path, allow_zero=False):
    ok = value >= 0 if allow_zero else value > 0
    if not ok:
        raise ConfigError(f"{path}: must be {'non-negative' if allow_zero else 'positive'}, got {value}")


def config_from_dict(data: Mapping[str, Any]) -> ProblemConfig:
    data = copy.deepcopy(dict(data)) if isinstance(data, Mapping) else data
    _check_keys(data, ProblemConfig, "config")
    for key in ("domain", "volume_fraction"):
        if key not in data:
            raise ConfigError(f"config: missing required key '{key}'")
    _check_sdf(data["domain"], "domain")
    top = _coerce({k: data[k] for k in ("volume_fraction", "seed", "threads") if k in data}, ProblemConfig, "config")
    cfg = ProblemConfig(
        domain=data["domain"],
        volume_fraction=top["volume_fraction"],
        name=str(data.get("name", "problem")),
        seed=top.get("seed", 0),
        threads=top.get("threads", 1),
        mesh=_section(data.get("mesh"), MeshConfig, "mesh"),
        material=_section(data.get("material"), MaterialConfig, "material"),
        simp=_section(data.get("simp"), SimpConfig, "simp"),
        filter=_section(data.get("filter"), FilterConfig, "filter"),
        optimizer=_section(data.get("optimizer"), OptimizerConfig, "optimizer"),
        solver=_section(data.get("solver"), SolverConfig, "solver"),
        supports=_items(data.get("supports"), Support, "supports"),
        loads=_items(data.get("loads"), Load, "loads"),
        springs=_items(data.get("springs"), Spring, "springs"),
    )
    obj = data.get("objective") or {}
    _check_keys(obj, ObjectiveConfig, "objective")
    out = obj.get("output")
    if out is not None:
        out = _section(out, OutputSpec, "objective.output")
        _selector(out, "objective.output")
        _axis(out.direction, "objective.output.direction")
    cfg.objective = ObjectiveConfig(kind=obj.get("kind", "compliance"), output=out)
    passive = data.get("passive") or []
    if not isinstance(passive, list):
        raise ConfigError("passive: expected a list of regions")
    for i, p in enumerate(passive):
        _check_sdf(p, f"passive[{i}]")
    cfg.passive = passive
    validate(cfg)
    return cfg


def validate(cfg: ProblemConfig) -> None:
    if not 0 < cfg.volume_fraction <= 1:
        raise ConfigError(f"volume_fraction: must lie in (0, 1], got {cfg.volume_fraction}")
    m = cfg.mesh
    if m.file is None:
        _positive(m.n_seeds, "mesh.n_seeds")
    _positive(m.lloyd_iters, "mesh.lloyd_iters", allow_zero=True)
    _positive(m.reflection_c, "mesh.reflection_c")
    _positive(cfg.material.E, "material.E")
    if not -1 < cfg.material.nu < 0.5:
        raise ConfigError(f"material.nu: must lie in (-1, 0.5), got {cfg.material.nu}")
    _positive(cfg.simp.penal, "simp.penal")
    if not 0 < cfg.simp.eps < 1:
        raise ConfigError(f"simp.eps: must lie in (0, 1), got {cfg.simp.eps}")
    if cfg.filter.radius is not None:
        _positive(cfg.filter.radius, "filter.radius", allow_zero=True)
    o = cfg.optimizer
    if not 0 <= o.move <= 1:
        raise ConfigError(f"optimizer.move: must lie in [0, 1], got {o.move}")
    _positive(o.damping, "optimizer.damping")
    _positive(o.max_iter, "optimizer.max_iter")
    _positive(o.change_tol, "optimizer.change_tol", allow_zero=True)
    _positive(cfg.solver.tol, "solver.tol")
    _positive(cfg.solver.max_iter, "solver.max_iter")
    _positive(cfg.threads, "threads")
    for i, s in enumerate(cfg.supports):
        if not s.components or any(c not in AXES for c in s.components):
            raise ConfigError(f"supports[{i}].components: use a non-empty subset of x, y, z")
    for i, ld in enumerate(cfg.loads):
        if (ld.force is None) == (ld.traction is None):
            raise ConfigError(f"loads[{i}]: give exactly one of 'force' or 'traction'")
        if ld.force is not None:
            ld.force = _vec(ld.force, f"loads[{i}].force")
        else:
            if ld.region is None:
                raise ConfigError(f"loads[{i}]: a traction needs a 'region'")
            ld.traction = _vec(ld.traction, f"loads[{i}].traction")
    for i, s in enumerate(cfg.springs):
        _axis(s.direction, f"springs[{i}].direction")
        if s.stiffness is not None:
            _positive(s.stiffness, f"springs[{i}].stiffness")
    kind = cfg.objective.kind
    if kind not in ("compliance", "mechanism"):
        raise ConfigError(f"objective.kind: expected 'compliance' or 'mechanism', got {kind!r}")
    if kind == "mechanism" and cfg.objective.output is None:
        raise ConfigError("objective.output: required for a mechanism objective")


def parse_config(text: str) -> ProblemConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: malformed YAML: {exc}") from exc
    if not isinstance(data, Mapping):
        raise ConfigError("config: top level must be a mapping")
    return config_from_dict(data)


def load_config(path) -> ProblemConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
    try:
        return parse_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_to_dict(cfg: ProblemConfig) -> dict:
    return asdict(cfg)


def dump_config(cfg: ProblemConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
