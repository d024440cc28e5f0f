"""Scenario configuration: flat sectioned ``key = value`` text files.

The format is deliberately plain (INI-style sections, human-diffable); a
configuration survives ``parse -> serialize -> parse`` bit-identically.
Validation collects every problem before failing so a bad file reports all
its issues at once.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .solver import TimeControl

__all__ = ["SegmentBC", "ScenarioConfig", "parse_config", "load_config", "serialize_config"]


@dataclass(frozen=True)
class SegmentBC:
    """Boundary condition of one rectangle side or polygon edge.

    ``kind`` is ``dirichlet`` (with values), ``noflow``, or ``robin`` (with
    explicit a/b/g triples per variable).
    """

    kind: str
    p_value: float | None = None
    sw_value: float | None = None
    p_robin: tuple[float, float, float] | None = None
    sw_robin: tuple[float, float, float] | None = None

    @classmethod
    def dirichlet(cls, p_value: float, sw_value: float) -> "SegmentBC":
        return cls("dirichlet", p_value=p_value, sw_value=sw_value)

    @classmethod
    def noflow(cls) -> "SegmentBC":
        return cls("noflow")


@dataclass(frozen=True)
class ScenarioConfig:
    # domain
    domain_shape: str = "rectangle"
    width: float = 200.0
    height: float = 80.0
    vertices: tuple[tuple[float, float], ...] = ()
    # cloud
    cloud_type: str = "cartesian"
    dx: float = 4.0
    dy: float = 4.0
    spacing: float = 4.0
    seed: int = 0
    jitter: float = 0.3
    cloud_path: str = ""
    virtual_nodes: str = "auto"
    # influence radius
    radius_multiple: float | None = 1.001
    radius_absolute: float | None = None
    # rock
    permeability: float = 100.0
    porosity: float = 0.3
    compressibility: float = 0.0
    reference_pressure: float = 10.0
    # fluids
    oil_viscosity: float = 10.0
    water_viscosity: float = 2.0
    connate_water: float = 0.2
    residual_oil: float = 0.2
    # initial conditions
    initial_pressure: float = 10.0
    initial_water_saturation: float = 0.2
    # boundaries keyed by side name or "edgeK"
    boundaries: dict[str, SegmentBC] = field(default_factory=dict)
    # time control
    dt_init: float = 0.01
    dt_max: float = 2.0
    t_end: float = 500.0
    newton_tol: float = 1e-6
    max_newton: int = 20
    dt_grow: float = 1.5
    dt_cut: float = 0.5
    # output
    output_times: tuple[float, ...] = ()
    output_dir: str = "out"
    prefix: str = "run"
    vtk: bool = False

    def time_control(self) -> TimeControl:
        return TimeControl(
            dt_init=self.dt_init,
            dt_max=self.dt_max,
            t_end=self.t_end,
            newton_tol=self.newton_tol,
            max_newton=self.max_newton,
            dt_grow=self.dt_grow,
            dt_cut=self.dt_cut,
        )

    def influence_radius(self) -> float:
        if self.radius_absolute is not None:
            return self.radius_absolute
        if self.cloud_type == "cartesian":
            return self.radius_multiple * float((self.dx**2 + self.dy**2) ** 0.5)
        return self.radius_multiple * float(2.0**0.5) * self.spacing

    def with_overrides(self, **kwargs) -> "ScenarioConfig":
        return replace(self, **kwargs)


_FLOAT_KEYS = {
    ("domain", "width"): "width",
    ("domain", "height"): "height",
    ("cloud", "dx"): "dx",
    ("cloud", "dy"): "dy",
    ("cloud", "spacing"): "spacing",
    ("cloud", "jitter"): "jitter",
    ("radius", "multiple"): "radius_multiple",
    ("radius", "absolute"): "radius_absolute",
    ("rock", "permeability"): "permeability",
    ("rock", "porosity"): "porosity",
    ("rock", "compressibility"): "compressibility",
    ("rock", "reference_pressure"): "reference_pressure",
    ("fluids", "oil_viscosity"): "oil_viscosity",
    ("fluids", "water_viscosity"): "water_viscosity",
    ("fluids", "connate_water"): "connate_water",
    ("fluids", "residual_oil"): "residual_oil",
    ("initial", "pressure"): "initial_pressure",
    ("initial", "water_saturation"): "initial_water_saturation",
    ("time", "dt_init"): "dt_init",
    ("time", "dt_max"): "dt_max",
    ("time", "t_end"): "t_end",
    ("time", "newton_tol"): "newton_tol",
    ("time", "dt_grow"): "dt_grow",
    ("time", "dt_cut"): "dt_cut",
}
_SIDE_NAMES = ("left", "right", "top", "bottom")


def _parse_triple(text: str):
    parts = text.replace(",", " ").split()
    if len(parts) != 3:
        raise ValueError("expected three numbers (a b g)")
    return tuple(float(v) for v in parts)


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate configuration text; raises :class:`ConfigError`
    listing every problem found."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"unparseable config: {exc}"]) from exc

    problems: list[str] = []
    values: dict[str, object] = {}

    def grab_float(section, key, target):
        raw = cp.get(section, key, fallback=None)
        if raw is None:
            return
        try:
            values[target] = float(raw)
        except ValueError:
            problems.append(f"[{section}] {key}: not a number ({raw!r})")

    for (section, key), target in _FLOAT_KEYS.items():
        grab_float(section, key, target)

    if cp.has_option("domain", "shape"):
        shape = cp.get("domain", "shape").strip().lower()
        if shape not in ("rectangle", "polygon"):
            problems.append(f"[domain] shape: must be rectangle or polygon, got {shape!r}")
        values["domain_shape"] = shape
    if cp.has_option("domain", "vertices"):
        raw = cp.get("domain", "vertices")
        try:
            vertices = []
            for chunk in raw.split(";"):
                chunk = chunk.strip()
                if not chunk:
                    continue
                xs = chunk.replace(",", " ").split()
                if len(xs) != 2:
                    raise ValueError(chunk)
                vertices.append((float(xs[0]), float(xs[1])))
            values["vertices"] = tuple(vertices)
        except ValueError as exc:
            problems.append(f"[domain] vertices: expected 'x y; x y; ...', bad chunk {exc}")

    if cp.has_option("cloud", "type"):
        ct = cp.get("cloud", "type").strip().lower()
        if ct not in ("cartesian", "irregular", "csv"):
            problems.append(f"[cloud] type: must be cartesian, irregular or csv, got {ct!r}")
        values["cloud_type"] = ct
    if cp.has_option("cloud", "seed"):
        try:
            values["seed"] = int(cp.get("cloud", "seed"))
        except ValueError:
            problems.append("[cloud] seed: not an integer")
    if cp.has_option("cloud", "path"):
        values["cloud_path"] = cp.get("cloud", "path").strip()
    if cp.has_option("cloud", "virtual_nodes"):
        vn = cp.get("cloud", "virtual_nodes").strip().lower()
        if vn not in ("auto", "none"):
            problems.append(f"[cloud] virtual_nodes: must be auto or none, got {vn!r}")
        values["virtual_nodes"] = vn
    if cp.has_option("time", "max_newton"):
        try:
            values["max_newton"] = int(cp.get("time", "max_newton"))
        except ValueError:
            problems.append("[time] max_newton: not an integer")

    if cp.has_section("radius"):
        if cp.has_option("radius", "multiple") and cp.has_option("radius", "absolute"):
            problems.append("[radius] give either multiple or absolute, not both")
        elif cp.has_option("radius", "absolute"):
            values["radius_multiple"] = None

    boundaries: dict[str, SegmentBC] = {}
    for section in cp.sections():
        if not section.startswith("boundary."):
            continue
        name = section.split(".", 1)[1]
        kind = cp.get(section, "kind", fallback="").strip().lower()
        if kind == "dirichlet":
            try:
                boundaries[name] = SegmentBC.dirichlet(
                    float(cp.get(section, "pressure")),
                    float(cp.get(section, "water_saturation")),
                )
            except (configparser.NoOptionError, ValueError):
                problems.append(f"[{section}] dirichlet needs numeric pressure and water_saturation")
        elif kind == "noflow":
            boundaries[name] = SegmentBC.noflow()
        elif kind == "robin":
            try:
                boundaries[name] = SegmentBC(
                    "robin",
                    p_robin=_parse_triple(cp.get(section, "pressure")),
                    sw_robin=_parse_triple(cp.get(section, "water_saturation")),
                )
            except (configparser.NoOptionError, ValueError):
                problems.append(f"[{section}] robin needs 'a b g' triples for pressure and water_saturation")
        else:
            problems.append(f"[{section}] kind: must be dirichlet, noflow or robin, got {kind!r}")
    values["boundaries"] = boundaries

    if cp.has_option("output", "times"):
        try:
            values["output_times"] = tuple(
                float(v) for v in cp.get("output", "times").replace(",", " ").split()
            )
        except ValueError:
            problems.append("[output] times: expected numbers")
    if cp.has_option("output", "directory"):
        values["output_dir"] = cp.get("output", "directory").strip()
    if cp.has_option("output", "prefix"):
        values["prefix"] = cp.get("output", "prefix").strip()
    if cp.has_option("output", "vtk"):
        raw = cp.get("output", "vtk").strip().lower()
        if raw in ("true", "yes", "1", "on"):
            values["vtk"] = True
        elif raw in ("false", "no", "0", "off"):
            values["vtk"] = False
        else:
            problems.append("[output] vtk: expected true/false")

    if problems:
        raise ConfigError(problems)
    config = ScenarioConfig(**values)
    problems = validate_config(config)
    if problems:
        raise ConfigError(problems)
    return config


def validate_config(config: ScenarioConfig) -> list[str]:
    """All validation problems of a parsed configuration (empty when valid)."""
    problems: list[str] = []
    if config.domain_shape == "rectangle":
        if config.width <= 0 or config.height <= 0:
            problems.append("[domain] rectangle extents must be positive")
    elif config.domain_shape == "polygon":
        if len(config.vertices) < 3:
            problems.append("[domain] polygon needs at least three vertices")

    if config.cloud_type == "cartesian":
        if config.dx <= 0 or config.dy <= 0:
            problems.append("[cloud] spacings must be positive")
        elif config.domain_shape == "rectangle":
            for extent, d, name in ((config.width, config.dx, "dx"), (config.height, config.dy, "dy")):
                ratio = extent / d
                if abs(ratio - round(ratio)) > 1e-9:
                    problems.append(f"[cloud] {name}: extent {extent} is not a multiple of {d}")
        if config.domain_shape == "polygon":
            problems.append("[cloud] cartesian clouds require a rectangle domain")
    elif config.cloud_type == "irregular":
        if config.spacing <= 0:
            problems.append("[cloud] spacing must be positive")
        if not (0 <= config.jitter <= 0.5):
            problems.append("[cloud] jitter must lie in [0, 0.5]")
    elif config.cloud_type == "csv" and not config.cloud_path:
        problems.append("[cloud] csv clouds need a path")

    if config.radius_multiple is None and config.radius_absolute is None:
        problems.append("[radius] give multiple or absolute")
    if config.radius_multiple is not None and config.radius_multiple <= 1.0:
        problems.append(
            f"[radius] multiple {config.radius_multiple} <= 1: stencil underdetermined risk "
            "(axis neighbors may fall outside the influence domain)"
        )
    if config.radius_absolute is not None and config.radius_absolute <= 0:
        problems.append("[radius] absolute radius must be positive")

    if config.connate_water < 0 or config.residual_oil < 0:
        problems.append("[fluids] saturations must be nonnegative")
    if config.connate_water + config.residual_oil >= 1:
        problems.append(
            "[fluids] connate_water + residual_oil must be below 1 "
            f"(got {config.connate_water} + {config.residual_oil})"
        )
    if config.oil_viscosity <= 0 or config.water_viscosity <= 0:
        problems.append("[fluids] viscosities must be positive")
    if config.permeability <= 0:
        problems.append("[rock] permeability must be positive")
    if not (0 < config.porosity < 1):
        problems.append("[rock] porosity must lie in (0, 1)")

    # boundary completeness (CSV clouds already carry node kinds; runs on
    # them still need matching sections, checked at setup time)
    if config.domain_shape == "rectangle" and config.cloud_type != "csv":
        for side in _SIDE_NAMES:
            if side not in config.boundaries:
                problems.append(f"[boundary.{side}] missing (rectangle sides must all be specified)")
    elif config.domain_shape == "polygon":
        for name in config.boundaries:
            if not name.startswith("edge"):
                problems.append(f"[boundary.{name}] polygon boundaries must be named edgeK")
                continue
            try:
                edge = int(name[4:])
            except ValueError:
                problems.append(f"[boundary.{name}] polygon boundaries must be named edgeK")
                continue
            if not (0 <= edge < len(config.vertices)):
                problems.append(
                    f"[boundary.{name}] references edge {edge} of a "
                    f"{len(config.vertices)}-edge polygon"
                )

    if not (0 < config.dt_init <= config.dt_max):
        problems.append("[time] need 0 < dt_init <= dt_max")
    if config.t_end < 0:
        problems.append("[time] t_end must be nonnegative")
    if config.newton_tol <= 0:
        problems.append("[time] newton_tol must be positive")
    if not (config.dt_grow > 1 > config.dt_cut > 0):
        problems.append("[time] need dt_grow > 1 > dt_cut > 0")
    return problems


def load_config(path) -> ScenarioConfig:
    """Parse a configuration file; relative cloud paths resolve against the
    config file's own directory."""
    from pathlib import Path

    path = Path(path)
    config = parse_config(path.read_text())
    if config.cloud_path and not Path(config.cloud_path).is_absolute():
        config = config.with_overrides(cloud_path=str((path.parent / config.cloud_path).resolve()))
    return config


def serialize_config(config: ScenarioConfig) -> str:
    """Render a configuration back to its text form (round-trip stable)."""
    out = io.StringIO()

    def sect(name, pairs):
        pairs = [(k, v) for k, v in pairs if v is not None]
        if not pairs:
            return
        out.write(f"[{name}]\n")
        for k, v in pairs:
            out.write(f"{k} = {v}\n")
        out.write("\n")

    domain_pairs = [("shape", config.domain_shape)]
    if config.domain_shape == "rectangle":
        domain_pairs += [("width", repr(config.width)), ("height", repr(config.height))]
    else:
        domain_pairs.append(
            ("vertices", "; ".join(f"{x!r} {y!r}" for x, y in config.vertices))
        )
    sect("domain", domain_pairs)

    cloud_pairs = [("type", config.cloud_type)]
    if config.cloud_type == "cartesian":
        cloud_pairs += [("dx", repr(config.dx)), ("dy", repr(config.dy))]
    elif config.cloud_type == "irregular":
        cloud_pairs += [
            ("spacing", repr(config.spacing)),
            ("seed", config.seed),
            ("jitter", repr(config.jitter)),
        ]
    else:
        cloud_pairs.append(("path", config.cloud_path))
    if config.virtual_nodes != "auto":
        cloud_pairs.append(("virtual_nodes", config.virtual_nodes))
    sect("cloud", cloud_pairs)

    if config.radius_absolute is not None:
        sect("radius", [("absolute", repr(config.radius_absolute))])
    else:
        sect("radius", [("multiple", repr(config.radius_multiple))])

    sect(
        "rock",
        [
            ("permeability", repr(config.permeability)),
            ("porosity", repr(config.porosity)),
            ("compressibility", repr(config.compressibility)),
            ("reference_pressure", repr(config.reference_pressure)),
        ],
    )
    sect(
        "fluids",
        [
            ("oil_viscosity", repr(config.oil_viscosity)),
            ("water_viscosity", repr(config.water_viscosity)),
            ("connate_water", repr(config.connate_water)),
            ("residual_oil", repr(config.residual_oil)),
        ],
    )
    sect(
        "initial",
        [
            ("pressure", repr(config.initial_pressure)),
            ("water_saturation", repr(config.initial_water_saturation)),
        ],
    )
    for name in sorted(config.boundaries):
        bc = config.boundaries[name]
        pairs = [("kind", bc.kind)]
        if bc.kind == "dirichlet":
            pairs += [("pressure", repr(bc.p_value)), ("water_saturation", repr(bc.sw_value))]
        elif bc.kind == "robin":
            pairs += [
                ("pressure", " ".join(repr(v) for v in bc.p_robin)),
                ("water_saturation", " ".join(repr(v) for v in bc.sw_robin)),
            ]
        sect(f"boundary.{name}", pairs)
    sect(
        "time",
        [
            ("dt_init", repr(config.dt_init)),
            ("dt_max", repr(config.dt_max)),
            ("t_end", repr(config.t_end)),
            ("newton_tol", repr(config.newton_tol)),
            ("max_newton", config.max_newton),
            ("dt_grow", repr(config.dt_grow)),
            ("dt_cut", repr(config.dt_cut)),
        ],
    )
    sect(
        "output",
        [
            ("times", " ".join(repr(t) for t in config.output_times)),
            ("directory", config.output_dir),
            ("prefix", config.prefix),
            ("vtk", "true" if config.vtk else "false"),
        ],
    )
    return out.getvalue()
