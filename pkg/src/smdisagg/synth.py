"""Season-long multiscale synthetic dataset generation.

Stands in for a physical land-surface/crop simulation with parameterized
random fields and response functions: crop-calendar-driven LAI, patchy
precipitation events plus irrigation on active fields, soil moisture as
a deterministic response to water input and vegetation drawdown with a
spatially correlated perturbation, and LST anti-correlated with both.

Everything is generated at the native cell size (200 m by default),
spatially averaged to the fine (1 km) and coarse (10 km) lattices, and
decorated with observation noise: fine-scale features are noisy, the
coarse soil moisture is noisy, the fine-scale truth stays clean.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DataError, DomainError
from .grid import Grid, VarTag, add_noise, aggregate, read_grid, write_grid

BARE, CORN, COTTON = 0, 1, 2
CLASS_NAMES = {BARE: "bare", CORN: "corn", COTTON: "cotton"}


@dataclass
class CropCalendar:
    """(crop id, planting DoY, harvest DoY) growing windows."""

    entries: list[tuple[int, int, int]]

    def __post_init__(self):
        for crop, plant, harvest in self.entries:
            if not plant < harvest:
                raise DomainError(f"crop {crop}: planting {plant} !< harvest {harvest}")

    def windows(self, crop: int) -> list[tuple[int, int]]:
        return [(p, h) for c, p, h in self.entries if c == crop]

    def active(self, crop: int, day: int) -> bool:
        return any(p <= day <= h for p, h in self.windows(crop))


def default_calendar() -> CropCalendar:
    """Two sweet-corn seasons and one cotton season per year."""
    return CropCalendar(
        entries=[(CORN, 61, 139), (CORN, 183, 261), (COTTON, 153, 332)]
    )


@dataclass
class CropTraits:
    peak_lai: float
    sm_drawdown: float     # m3/m3 of soil moisture removed per unit LAI
    irrigation: float      # mm/day of water input while the crop is active


@dataclass
class SceneSpec:
    """Geometry, layout, and response parameters for scene generation."""

    region_cells: int = 250          # native cells per side (200 m each)
    cell_size: float = 200.0
    fine_factor: int = 5             # 200 m -> 1 km
    coarse_factor: int = 10          # 1 km -> 10 km
    patch_cells: int = 25            # field patch side, native cells
    layout_seed: int = 1
    crop_fractions: tuple[float, float, float] = (0.3, 0.4, 0.3)  # bare, corn, cotton
    corr_ppt_m: float = 10000.0
    corr_sm_m: float = 2500.0
    corr_lst_m: float = 5000.0
    insitu_fraction: float = 0.33
    sm_band: tuple[float, float] = (0.02, 0.45)
    sm_baseline: float = 0.10
    sm_wet_gain: float = 0.22        # saturating recharge amplitude
    sm_wet_halfsat: float = 12.0     # mm of 3-day water at half recharge
    sm_texture: float = 0.012        # correlated perturbation amplitude
    lst_base: float = 288.0          # seasonal midpoint, K
    lst_seasonal: float = 12.0
    lst_sm_coef: float = 45.0        # K per m3/m3, anti-correlation
    lst_lai_coef: float = 1.0
    lst_texture: float = 0.8
    rain_probability: float = 0.30
    noise_lst: float = 5.0
    noise_ppt: float = 1.0
    noise_sm: float = 0.03
    noise_lai: float = 0.1
    traits: dict[int, CropTraits] = field(default_factory=lambda: {
        CORN: CropTraits(peak_lai=3.5, sm_drawdown=0.012, irrigation=3.0),
        COTTON: CropTraits(peak_lai=4.5, sm_drawdown=0.009, irrigation=2.0),
    })

    def __post_init__(self):
        if self.region_cells % self.patch_cells:
            raise DomainError("patch_cells must divide region_cells")
        if self.region_cells % self.fine_factor:
            raise DomainError("fine_factor must divide region_cells")
        fine = self.region_cells // self.fine_factor
        if fine % self.coarse_factor:
            raise DomainError("coarse_factor must divide the fine grid side")
        if self.patch_cells % self.fine_factor:
            raise DomainError("patch edges must align with fine cells")
        if not 0.0 < self.insitu_fraction <= 1.0:
            raise DomainError("insitu_fraction must be in (0, 1]")

    @property
    def fine_cells(self) -> int:
        return self.region_cells // self.fine_factor

    @property
    def fine_cell_size(self) -> float:
        return self.cell_size * self.fine_factor


@dataclass
class Scene:
    """One day's stack: fine features, coarse SM, truth, training points."""

    day: int
    lai: Grid
    lst: Grid
    ppt: Grid          # 3-day accumulated water input at 1 km
    lc: Grid
    coarse_sm: Grid    # noisy observation at 10 km
    true_sm: Grid      # clean truth at 1 km
    insitu_idx: np.ndarray   # flat indices into the fine grid
    insitu_sm: np.ndarray

    def __post_init__(self):
        shapes = {g.values.shape for g in (self.lai, self.lst, self.ppt, self.lc, self.true_sm)}
        if len(shapes) != 1:
            raise DomainError("fine grids must share dimensions")
        fr, fc = self.true_sm.values.shape
        cr, cc = self.coarse_sm.values.shape
        if fr % cr or fc % cc or fr // cr != fc // cc:
            raise DomainError("coarse grid does not tile the fine grid")

    @property
    def n_fine(self) -> int:
        return self.true_sm.values.size

    @property
    def coarse_factor(self) -> int:
        return self.true_sm.values.shape[0] // self.coarse_sm.values.shape[0]


def stream_seed(seed: int, day: int, stream: str) -> int:
    """Derived integer seed for one (day, purpose) random stream."""
    tag = int.from_bytes(stream.encode(), "big") % (2**31)
    ss = np.random.SeedSequence([int(seed) & (2**63 - 1), int(day), tag])
    return int(ss.generate_state(1)[0])


def _rng(seed: int, day: int, stream: str) -> np.random.Generator:
    return np.random.default_rng(stream_seed(seed, day, stream))


def field_layout(spec: SceneSpec) -> np.ndarray:
    """Patch-level crop assignment; fixed by the spec's layout seed."""
    n = spec.region_cells // spec.patch_cells
    rng = np.random.default_rng(spec.layout_seed)
    return rng.choice(
        [BARE, CORN, COTTON], size=(n, n), p=list(spec.crop_fractions)
    )


def _patch_map(spec: SceneSpec) -> np.ndarray:
    """Native-resolution map of patch crop ids."""
    return np.repeat(
        np.repeat(field_layout(spec), spec.patch_cells, axis=0),
        spec.patch_cells,
        axis=1,
    )


def phenology(calendar: CropCalendar, crop: int, day: int, peak: float) -> float:
    """LAI for one crop on one day: zero off-season, a smooth hump within
    the growing window peaking at ~60% of the season."""
    for plant, harvest in calendar.windows(crop):
        if plant <= day <= harvest:
            tau = (day - plant) / (harvest - plant)
            a, b = 2.0, 1.3
            mode = a / (a + b)
            shape = (tau**a * (1 - tau) ** b) / (mode**a * (1 - mode) ** b)
            return peak * shape
    return 0.0


def correlated_field(rng: np.random.Generator, n: int, corr_cells: float) -> np.ndarray:
    """Zero-mean unit-variance Gaussian random field, wrap-around smoothed."""
    white = rng.normal(size=(n, n))
    smooth = ndimage.gaussian_filter(white, sigma=corr_cells, mode="wrap")
    sd = smooth.std()
    if sd == 0.0:
        return np.zeros((n, n))
    return (smooth - smooth.mean()) / sd


def generate_landcover(spec: SceneSpec, calendar: CropCalendar, day: int) -> Grid:
    """Land cover at 1 km: patch crop class when its window is active,
    baresoil otherwise (majority-coarsened from the native lattice)."""
    if not 1 <= day <= 365:
        raise DomainError(f"day {day} outside [1, 365]")
    patches = _patch_map(spec)
    lc = np.zeros_like(patches)
    for crop in (CORN, COTTON):
        if calendar.active(crop, day):
            lc[patches == crop] = crop
    native = Grid(lc.astype(float), spec.cell_size, VarTag.LC)
    return aggregate(native, spec.fine_factor)


def _daily_water(spec: SceneSpec, calendar: CropCalendar, day: int, seed: int,
                 patches: np.ndarray) -> np.ndarray:
    """One day of combined rain + irrigation at native resolution, mm."""
    n = spec.region_cells
    rng = _rng(seed, day, "rain")
    water = np.zeros((n, n))
    if rng.random() < spec.rain_probability:
        fld = correlated_field(rng, n, spec.corr_ppt_m / spec.cell_size)
        intensity = rng.gamma(2.0, 4.0)
        water += intensity * np.clip(fld - 0.2, 0.0, None)
    for crop, traits in spec.traits.items():
        if calendar.active(crop, day):
            water[patches == crop] += traits.irrigation
    return water


def generate_scene(spec: SceneSpec, calendar: CropCalendar, day: int, seed: int) -> Scene:
    """Build one day's Scene; pure function of (spec, calendar, day, seed)."""
    if not 1 <= day <= 365:
        raise DomainError(f"day {day} outside [1, 365]")
    n = spec.region_cells
    patches = _patch_map(spec)

    # 3-day accumulated water input (absolute-day streams, so overlapping
    # windows of consecutive scenes agree)
    ppt3 = np.zeros((n, n))
    for d in range(max(1, day - 2), day + 1):
        ppt3 += _daily_water(spec, calendar, d, seed, patches)

    lai = np.zeros((n, n))
    for crop, traits in spec.traits.items():
        base = phenology(calendar, crop, day, traits.peak_lai)
        if base > 0.0:
            lai[patches == crop] = base
    if lai.any():
        texture = correlated_field(_rng(seed, day, "lai"), n, spec.corr_sm_m / spec.cell_size)
        lai = np.clip(lai * (1.0 + 0.08 * texture), 0.0, None)

    sm = spec.sm_baseline + spec.sm_wet_gain * ppt3 / (ppt3 + spec.sm_wet_halfsat)
    for crop, traits in spec.traits.items():
        mask = patches == crop
        sm[mask] -= traits.sm_drawdown * lai[mask]
    sm += spec.sm_texture * correlated_field(_rng(seed, day, "sm"), n, spec.corr_sm_m / spec.cell_size)
    sm = np.clip(sm, spec.sm_band[0], spec.sm_band[1])

    season = spec.lst_base + spec.lst_seasonal * math.sin(2.0 * math.pi * (day - 110) / 365.0)
    lst = (
        season
        - spec.lst_sm_coef * (sm - spec.sm_baseline)
        - spec.lst_lai_coef * lai
        + spec.lst_texture * correlated_field(_rng(seed, day, "lst"), n, spec.corr_lst_m / spec.cell_size)
    )

    cs = spec.cell_size
    f = spec.fine_factor
    lai_1km = aggregate(Grid(lai, cs, VarTag.LAI), f)
    lst_1km = aggregate(Grid(lst, cs, VarTag.LST), f)
    ppt_1km = aggregate(Grid(ppt3, cs, VarTag.PPT), f)
    lc_1km = generate_landcover(spec, calendar, day)
    true_sm = aggregate(Grid(sm, cs, VarTag.SM), f)
    coarse_clean = aggregate(true_sm, spec.coarse_factor)

    lai_obs = add_noise(lai_1km, spec.noise_lai, stream_seed(seed, day, "noise_lai"))
    lst_obs = add_noise(lst_1km, spec.noise_lst, stream_seed(seed, day, "noise_lst"))
    ppt_obs = add_noise(ppt_1km, spec.noise_ppt, stream_seed(seed, day, "noise_ppt"))
    coarse_obs = add_noise(coarse_clean, spec.noise_sm, stream_seed(seed, day, "noise_sm"))

    n_fine = true_sm.values.size
    n_obs = max(1, int(round(spec.insitu_fraction * n_fine)))
    idx = np.sort(_rng(seed, day, "insitu").choice(n_fine, size=n_obs, replace=False))
    values = true_sm.values.ravel()[idx]

    return Scene(
        day=day,
        lai=lai_obs,
        lst=lst_obs,
        ppt=ppt_obs,
        lc=lc_1km,
        coarse_sm=coarse_obs,
        true_sm=true_sm,
        insitu_idx=idx,
        insitu_sm=values,
    )


def season_days(step: int = 3) -> list[int]:
    return list(range(1, 366, step))


def nearest_scene_day(day: int, step: int = 3) -> int:
    """Closest generated day-of-year to a requested day (ties go later,
    matching the convention that scenes start at DoY 1)."""
    days = np.array(season_days(step))
    return int(days[np.argmin(np.abs(days - day))])


def generate_season(spec: SceneSpec, calendar: CropCalendar, seed: int,
                    days: list[int] | None = None) -> list[Scene]:
    """Scenes every 3 days across the year (122 for the default grid)."""
    if days is None:
        days = season_days()
    return [generate_scene(spec, calendar, day, seed) for day in days]


# ---------------------------------------------------------------------------
# dataset directory I/O

def _res_label(cell_size: float) -> str:
    if cell_size >= 1000:
        return f"{cell_size / 1000:g}km"
    return f"{cell_size:g}m"


def scene_filenames(day: int, fine_size: float, coarse_size: float) -> dict[str, str]:
    f, c = _res_label(fine_size), _res_label(coarse_size)
    return {
        "lai": f"doy{day:03d}_lai_{f}.grid",
        "lst": f"doy{day:03d}_lst_{f}.grid",
        "ppt": f"doy{day:03d}_ppt_{f}.grid",
        "lc": f"doy{day:03d}_lc_{f}.grid",
        "true_sm": f"doy{day:03d}_sm_{f}.grid",
        "coarse_sm": f"doy{day:03d}_sm_{c}.grid",
        "insitu": f"doy{day:03d}_insitu_{f}.grid",
    }


def write_scene(scene: Scene, outdir: Path) -> None:
    names = scene_filenames(scene.day, scene.true_sm.cell_size, scene.coarse_sm.cell_size)
    write_grid(scene.lai, outdir / names["lai"])
    write_grid(scene.lst, outdir / names["lst"])
    write_grid(scene.ppt, outdir / names["ppt"])
    write_grid(scene.lc, outdir / names["lc"])
    write_grid(scene.true_sm, outdir / names["true_sm"])
    write_grid(scene.coarse_sm, outdir / names["coarse_sm"])
    sparse = np.full(scene.true_sm.values.shape, np.nan)
    sparse.ravel()[scene.insitu_idx] = scene.insitu_sm
    write_grid(Grid(sparse, scene.true_sm.cell_size, VarTag.SM), outdir / names["insitu"])


def write_season(spec: SceneSpec, calendar: CropCalendar, seed: int, outdir,
                 days: list[int] | None = None) -> Path:
    """Generate and persist a season; returns the dataset directory."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if days is None:
        days = season_days()
    for day in days:
        write_scene(generate_scene(spec, calendar, day, seed), outdir)
    spec_dict = asdict(spec)
    spec_dict["traits"] = {str(k): asdict(v) for k, v in spec.traits.items()}
    manifest = {
        "days": days,
        "seed": seed,
        "calendar": [list(e) for e in calendar.entries],
        "spec": spec_dict,
        "fine_cell_size": spec.fine_cell_size,
        "coarse_cell_size": spec.fine_cell_size * spec.coarse_factor,
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return outdir


class SeasonDataset:
    """Lazy reader over a dataset directory written by write_season."""

    def __init__(self, root):
        self.root = Path(root)
        manifest_path = self.root / "manifest.json"
        if not manifest_path.exists():
            raise DataError(f"no manifest.json under {self.root}")
        with open(manifest_path) as fh:
            self.manifest = json.load(fh)
        self.days = list(self.manifest["days"])

    def load_scene(self, day: int) -> Scene:
        if day not in self.days:
            raise DataError(f"day {day} not in dataset (have {len(self.days)} days)")
        names = scene_filenames(
            day, self.manifest["fine_cell_size"], self.manifest["coarse_cell_size"]
        )
        grids = {}
        for key, fname in names.items():
            path = self.root / fname
            if not path.exists():
                raise DataError(f"missing grid file {path}")
            grids[key] = read_grid(path)
        sparse = grids.pop("insitu").values.ravel()
        idx = np.flatnonzero(np.isfinite(sparse))
        return Scene(
            day=day,
            lai=grids["lai"],
            lst=grids["lst"],
            ppt=grids["ppt"],
            lc=grids["lc"],
            coarse_sm=grids["coarse_sm"],
            true_sm=grids["true_sm"],
            insitu_idx=idx,
            insitu_sm=sparse[idx],
        )
