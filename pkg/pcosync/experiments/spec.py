"""Experiment configuration: JSON schema, parsing and resolution to engine objects."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Callable, Literal, Optional, Union

from loguru import logger
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from pcosync.core import PRESETS, PrcSpec, make_preset, prc_from_vertices
from pcosync.engine import InitSpec, SimConfig
from pcosync.graphs import (
    DirectedGraph,
    GraphSequence,
    complete_graph,
    cycle_graph,
    gen_binary_tree_triangle,
    gen_grid_with_failures,
    gen_random_geometric,
    grid_graph,
    path_graph,
    random_aperiodic_digraph,
    random_connected_undirected,
    random_indegree_digraph,
    random_tree_sequence,
    read_graph,
    read_sequence,
    star_graph,
)


class ConfigParseError(Exception):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        where = f"line {line} column {column}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class ConfigValidationError(Exception):
    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{path}: {msg}" for path, msg in errors))


# ---- schema -----------------------------------------------------------------


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PrcConfig(_Section):
    name: Optional[str] = None
    vertices: Optional[list[tuple[float, float]]] = None
    params: dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _name_or_vertices(self):
        if (self.name is None) == (self.vertices is None):
            raise ValueError("give exactly one of name or vertices")
        return self

    @property
    def label(self) -> str:
        return self.name or "custom"


def _prc_shortcut(value: Any) -> Any:
    return {"name": value} if isinstance(value, str) else value


class GraphConfig(_Section):
    generator: str = "complete"
    params: dict[str, Any] = Field(default_factory=dict)
    file: Optional[Path] = None

    @field_validator("generator")
    @classmethod
    def _known_generator(cls, value: str) -> str:
        if value not in GRAPH_BUILDERS:
            raise ValueError(f"unknown generator; choose from {', '.join(GRAPH_BUILDERS)}")
        return value


class InitConfig(_Section):
    mode: Literal["uniform", "window", "explicit"] = "uniform"
    width: float = Field(default=0.0, ge=0.0, lt=1.0)
    phases: list[float] = Field(default_factory=list)


class NoiseConfig(_Section):
    freq_error: float = Field(default=0.0, ge=0.0, lt=1.0)
    delay_jitter: float = Field(default=0.0, ge=0.0, lt=1.0)


class VariantConfig(_Section):
    quiescent: float = Field(default=0.0, ge=0.0)
    self_loop: bool = False
    weighted: bool = False
    drop_on_switch: bool = False
    sleep_schedule: bool = False


class SamplingConfig(_Section):
    interval: float = Field(default=0.1, gt=0.0)


class OracleConfig(_Section):
    cases: int = Field(default=100, ge=1)
    taus: list[float] = Field(default_factory=lambda: [0.05, 0.1, 0.2], min_length=1)
    n_min: int = Field(default=3, ge=3)
    n_max: int = Field(default=8, ge=3)
    edge_p: float = Field(default=0.4, gt=0.0, le=1.0)
    kinds: list[Literal["sr", "sf"]] = Field(default_factory=lambda: ["sr", "sf"])
    map_tau_offset: float = 0.0


class Figure2Config(_Section):
    depth: int = Field(default=3, ge=1)
    trials: int = Field(default=500, ge=1)
    presets: list[str] = Field(default_factory=lambda: ["limited-reset", "sr", "sf"])


class Figure3Config(_Section):
    n: int = Field(default=100, ge=2)
    radius: float = Field(default=0.18, gt=0.0)
    prcs: list[PrcConfig] = Field(
        default_factory=lambda: [PrcConfig(name="s2-default"), PrcConfig(name="ms")]
    )
    settings: list[Literal["A", "B"]] = Field(default_factory=lambda: ["A", "B"])
    seeds: int = Field(default=1, ge=1)
    init_width: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    freq_error: float = 0.025
    delay_jitter: float = 0.025

    @field_validator("prcs", mode="before")
    @classmethod
    def _prc_names(cls, value: Any) -> Any:
        return [_prc_shortcut(x) for x in value] if isinstance(value, list) else value


class SweepConfig(_Section):
    parameter: Literal["tau", "quiescent", "freq_error", "delay_jitter", "B0"] = "tau"
    values: list[float] = Field(default_factory=lambda: [0.05, 0.1, 0.2], min_length=1)


class ExperimentSpec(_Section):
    name: str = "experiment"
    command: Literal["run", "sweep", "basin", "oracle-check", "figure2", "figure3"] = "run"
    prc: PrcConfig = Field(default_factory=lambda: PrcConfig(name="sr"))
    graph: GraphConfig = Field(default_factory=GraphConfig)
    tau: float = 0.1
    horizon: float = Field(default=50.0, gt=0.0)
    seed: int = 0
    master_seed: Optional[int] = None
    trials: int = Field(default=100, ge=1)
    tolerance: float = Field(default=1e-9, gt=0.0)
    init: InitConfig = Field(default_factory=InitConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    variant: VariantConfig = Field(default_factory=VariantConfig)
    sampling: SamplingConfig = Field(default_factory=SamplingConfig)
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    figure2: Figure2Config = Field(default_factory=Figure2Config)
    figure3: Figure3Config = Field(default_factory=Figure3Config)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    output_dir: Optional[Path] = None
    parallel: bool = True

    @field_validator("prc", mode="before")
    @classmethod
    def _prc_name(cls, value: Any) -> Any:
        return _prc_shortcut(value)

    @field_validator("tau")
    @classmethod
    def _tau_range(cls, value: float) -> float:
        if not 0 < value < 0.5:
            raise ValueError(f"0 < tau < 0.5 required, got {value}")
        return value

    @model_validator(mode="after")
    def _cross_fields(self):
        B0 = self.prc.params.get("B0")
        if B0 is not None and not self.tau < B0 < 1:
            raise ValueError(f"prc.params.B0 must satisfy tau < B0 < 1, got B0={B0}")
        B1 = self.prc.params.get("B1")
        if B1 is not None and B0 is not None and B1 < B0:
            raise ValueError("prc.params.B1 must be at least B0")
        if self.init.mode == "explicit" and not self.init.phases:
            raise ValueError("init.mode explicit needs init.phases")
        if any(not 0 <= p < 1 for p in self.init.phases):
            raise ValueError("init.phases must lie in [0, 1)")
        if self.oracle.n_min > self.oracle.n_max:
            raise ValueError("oracle.n_min must not exceed oracle.n_max")
        if any(not 0 < t < 0.4 for t in self.oracle.taus):
            raise ValueError("oracle.taus must lie in (0, 0.4) so that 2 tau < 0.8")
        return self

    @property
    def resolved_master_seed(self) -> int:
        return self.seed if self.master_seed is None else self.master_seed


# ---- parsing ----------------------------------------------------------------


def _check_preset(value: Any, path: str) -> None:
    name = value
    if isinstance(value, dict):
        name = value.get("name")
    if isinstance(name, str) and name not in PRESETS:
        raise ConfigParseError(f"{path}: unknown prc {name!r}; presets are {', '.join(PRESETS)}")


def _check_presets(data: dict) -> None:
    if "prc" in data:
        _check_preset(data["prc"], "prc")
    for i, prc in enumerate(data.get("figure3", {}).get("prcs", [])):
        _check_preset(prc, f"figure3.prcs.{i}")
    for i, name in enumerate(data.get("figure2", {}).get("presets", [])):
        _check_preset(name, f"figure2.presets.{i}")


def _validate(data: dict) -> ExperimentSpec:
    try:
        return ExperimentSpec.model_validate(data)
    except ValidationError as e:
        errors = [
            (".".join(str(p) for p in err["loc"]) or "<root>", err["msg"]) for err in e.errors()
        ]
        raise ConfigValidationError(errors) from e


def parse_config(text: str) -> ExperimentSpec:
    """Parse and validate one JSON experiment document."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigParseError(e.msg, e.lineno, e.colno) from e
    if not isinstance(data, dict):
        raise ConfigParseError("top level must be a JSON object")
    _check_presets(data)
    spec = _validate(data)
    logger.debug(f"parsed experiment {spec.name!r} ({spec.command})")
    return spec


def load_config(path: Path) -> ExperimentSpec:
    return parse_config(Path(path).read_text())


def apply_overrides(spec: ExperimentSpec, overrides: dict[str, Any]) -> ExperimentSpec:
    """Set dotted keys such as ``noise.freq_error`` on a copy; ``None`` values are skipped."""
    data = spec.model_dump(mode="json")
    for key, value in overrides.items():
        if value is None:
            continue
        *parents, leaf = key.split(".")
        node = data
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = value
    _check_presets(data)
    return _validate(data)


# ---- resolution -------------------------------------------------------------


def build_prc(prc: PrcConfig, tau: float) -> PrcSpec:
    if prc.vertices is not None:
        return prc_from_vertices(prc.vertices)
    return make_preset(prc.name, tau, **prc.params)


def _int(params: dict, key: str, default: Optional[int] = None) -> int:
    if key not in params and default is None:
        raise ConfigValidationError([(f"graph.params.{key}", "field required")])
    return int(params.get(key, default))


GRAPH_BUILDERS: dict[str, Callable[[dict, int], Union[DirectedGraph, GraphSequence]]] = {
    "complete": lambda p, s: complete_graph(_int(p, "n")),
    "cycle": lambda p, s: cycle_graph(_int(p, "n"), bool(p.get("bidirectional", False))),
    "path": lambda p, s: path_graph(_int(p, "n")),
    "star": lambda p, s: star_graph(_int(p, "n")),
    "grid": lambda p, s: grid_graph(_int(p, "w"), _int(p, "h")),
    "binary-tree-triangle": lambda p, s: gen_binary_tree_triangle(_int(p, "depth", 3)),
    "random-geometric": lambda p, s: gen_random_geometric(
        _int(p, "n"), float(p.get("radius", 0.18)), s
    ),
    "grid-failures": lambda p, s: gen_grid_with_failures(
        _int(p, "w", 3), _int(p, "h", 3), _int(p, "fail", 1), s, _int(p, "windows", 1)
    ),
    "random-aperiodic": lambda p, s: random_aperiodic_digraph(
        _int(p, "n"), float(p.get("p", 0.4)), s
    ),
    "random-undirected": lambda p, s: random_connected_undirected(
        _int(p, "n"), float(p.get("p", 0.3)), s
    ),
    "random-indegree": lambda p, s: random_indegree_digraph(_int(p, "n"), _int(p, "k"), s),
    "random-trees": lambda p, s: random_tree_sequence(_int(p, "n"), s, _int(p, "windows", 1)),
}


def build_graphs(graph: GraphConfig, seed: int) -> Union[DirectedGraph, GraphSequence]:
    """Read ``graph.file`` (edge list or sequence directory) or run the named generator."""
    if graph.file is not None:
        return read_sequence(graph.file) if graph.file.is_dir() else read_graph(graph.file)
    gseed = int(graph.params.get("seed", seed))
    return GRAPH_BUILDERS[graph.generator](graph.params, gseed)


def build_init(init: InitConfig) -> InitSpec:
    return InitSpec(init.mode, init.width, tuple(init.phases))


def build_sim_config(spec: ExperimentSpec, schedule=None) -> SimConfig:
    return SimConfig(
        prc=build_prc(spec.prc, spec.tau),
        graphs=build_graphs(spec.graph, spec.seed),
        tau=spec.tau,
        init_phases=build_init(spec.init),
        seed=spec.seed,
        horizon=spec.horizon,
        freq_error=spec.noise.freq_error,
        delay_jitter=spec.noise.delay_jitter,
        quiescent=spec.variant.quiescent,
        self_loop_sim=spec.variant.self_loop,
        sample_interval=spec.sampling.interval,
        conv_tolerance=spec.tolerance,
        weighted_prc=spec.variant.weighted,
        drop_on_switch=spec.variant.drop_on_switch,
        schedule=schedule,
    )
