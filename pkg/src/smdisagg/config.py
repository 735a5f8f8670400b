"""Run configuration: a flat key=value file with [section] headers.

All defaults live in the dataclasses below; `format_config` prints them
in the file syntax and `parse_config` reads overrides with line-level
error reporting.  Lists are comma-separated.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .synth import SceneSpec

CV_MODES = ("off", "full", "k_once", "once")


@dataclass
class SynthSection:
    region_cells: int = 250
    cell_size: float = 200.0
    fine_factor: int = 5
    coarse_factor: int = 10
    patch_cells: int = 25
    layout_seed: int = 1
    insitu_fraction: float = 0.33
    rain_probability: float = 0.30
    noise_lst: float = 5.0
    noise_ppt: float = 1.0
    noise_sm: float = 0.03
    noise_lai: float = 0.1
    day_step: int = 3


@dataclass
class ClusterSection:
    iterations: int = 30
    sample_fraction: float = 0.33
    alpha: float = 0.05
    gamma: float = 1e-3


@dataclass
class CvSection:
    mode: str = "k_once"
    folds: int = 10
    k_values: tuple = (2, 3, 4, 5, 6, 7, 8)
    psi_values: tuple = (1e-3, 1e-2, 1e-1)
    mu_values: tuple = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0)

    def __post_init__(self):
        if self.mode not in CV_MODES:
            raise ConfigError(f"cv.mode must be one of {CV_MODES}, got {self.mode!r}")


@dataclass
class SrrmSection:
    k: int = 4
    psi: float = 1e-3
    mu: float = 1e-3
    sigma_scale: float = 1.0
    train_fraction: float = 0.33


@dataclass
class PriSection:
    beta: float = 2.0
    iterations: int = 100
    step_scale: float = 0.05
    bins_target: int = 20
    bins_feature: int = 20


@dataclass
class RunSection:
    seed: int = 0
    jobs: int = 0          # 0 -> use all available cores


@dataclass
class MetricsSection:
    kld_bins: int = 50
    kld_lo: float = 0.0
    kld_hi: float = 0.5
    ztest_threshold: float = 0.04
    error_level: float = 0.02


@dataclass
class RunConfig:
    synth: SynthSection = field(default_factory=SynthSection)
    cluster: ClusterSection = field(default_factory=ClusterSection)
    cv: CvSection = field(default_factory=CvSection)
    srrm: SrrmSection = field(default_factory=SrrmSection)
    pri: PriSection = field(default_factory=PriSection)
    run: RunSection = field(default_factory=RunSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)

    def scene_spec(self) -> SceneSpec:
        s = self.synth
        return SceneSpec(
            region_cells=s.region_cells,
            cell_size=s.cell_size,
            fine_factor=s.fine_factor,
            coarse_factor=s.coarse_factor,
            patch_cells=s.patch_cells,
            layout_seed=s.layout_seed,
            insitu_fraction=s.insitu_fraction,
            rain_probability=s.rain_probability,
            noise_lst=s.noise_lst,
            noise_ppt=s.noise_ppt,
            noise_sm=s.noise_sm,
            noise_lai=s.noise_lai,
        )


def _parse_value(raw: str, target_type, where: str):
    raw = raw.strip()
    try:
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        if target_type is str:
            return raw
        if target_type is tuple:
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            values = []
            for p in parts:
                v = float(p)
                values.append(int(v) if v == int(v) and "." not in p and "e" not in p.lower() else v)
            return tuple(values)
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {target_type.__name__}") from exc
    raise ConfigError(f"{where}: unsupported value type {target_type}")


def parse_config(source, base: RunConfig | None = None) -> RunConfig:
    """Read a config file (path or text) over the defaults.

    Raises ConfigError with the offending line number on any problem.
    """
    if isinstance(source, (str, Path)) and "\n" not in str(source):
        text = Path(source).read_text()
        name = str(source)
    else:
        text = str(source)
        name = "<config>"
    cfg = base if base is not None else RunConfig()
    sections = {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)}
    current = None
    overrides: dict[tuple[str, str], object] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{name}:{lineno}"
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in sections:
                raise ConfigError(f"{where}: unknown section [{section}]")
            current = section
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected key = value, got {raw_line.strip()!r}")
        if current is None:
            raise ConfigError(f"{where}: key outside any [section]")
        key, _, value = line.partition("=")
        key = key.strip()
        section_obj = sections[current]
        field_types = {f.name: f.type for f in dataclasses.fields(section_obj)}
        if key not in field_types:
            raise ConfigError(f"{where}: unknown key {key!r} in [{current}]")
        target_type = type(getattr(section_obj, key))
        overrides[(current, key)] = _parse_value(value, target_type, where)

    for (section, key), value in overrides.items():
        setattr(sections[section], key, value)
    # re-validate sections with constraints
    if cfg.cv.mode not in CV_MODES:
        raise ConfigError(f"cv.mode must be one of {CV_MODES}, got {cfg.cv.mode!r}")
    return cfg


def format_config(cfg: RunConfig | None = None) -> str:
    """Render a config (defaults when None) in the file syntax."""
    cfg = cfg if cfg is not None else RunConfig()
    lines = []
    for f in dataclasses.fields(cfg):
        section = getattr(cfg, f.name)
        lines.append(f"[{f.name}]")
        for sf in dataclasses.fields(section):
            value = getattr(section, sf.name)
            if isinstance(value, tuple):
                value = ",".join(f"{v:g}" if isinstance(v, float) else str(v) for v in value)
            lines.append(f"{sf.name} = {value}")
        lines.append("")
    return "\n".join(lines)
