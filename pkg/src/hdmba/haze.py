"""Synthetic hazy/clean hyperspectral pairs.

Clean scenes are procedural: a Voronoi segmentation into a handful of
materials, each with a smooth random reflectance spectrum, modulated by a
low-amplitude texture. Haze is additive path radiance (dark-object-subtraction
model): a spatially irregular thickness map scaled by an abundance and by a
wavelength weight that is largest in the shortest band.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage, stats

from .cube import HsiCube, default_wavelengths, write_cube

log = logging.getLogger(__name__)

STANDARD_THICKNESS_LEVELS = 20
STANDARD_ABUNDANCES = 5
STANDARD_SCENES = 100
STANDARD_PAIRS_PER_SCENE = 20   # 100 scenes give 2000 pairs, a fifth of the full grid
DEFAULT_ABUNDANCE_RANGE = (0.2, 1.0)


@dataclass(frozen=True)
class HazeSpec:
    thickness_level: int
    abundance: float
    seed: int
    spectral_decay: float = 1.5
    levels: int = STANDARD_THICKNESS_LEVELS

    def __post_init__(self):
        if not 0 <= self.thickness_level < self.levels:
            raise ValueError(f"thickness level {self.thickness_level} outside 0..{self.levels - 1}")
        if self.abundance < 0:
            raise ValueError("abundance must be >= 0")


def _smooth_noise(rng: np.random.Generator, height: int, width: int, octaves: int = 4) -> np.ndarray:
    field = np.zeros((height, width))
    base = max(height, width) / 4.0
    for o in range(octaves):
        sigma = max(base / 2 ** o, 0.5)
        layer = ndimage.gaussian_filter(rng.standard_normal((height, width)), sigma, mode="reflect")
        std = layer.std()
        if std > 0:
            layer /= std
        field += layer / 2 ** o
    return field


def _spectral_signature(rng: np.random.Generator, wavelengths: np.ndarray) -> np.ndarray:
    lam = (wavelengths - 400.0) / 2100.0
    sig = np.full(lam.shape, rng.uniform(0.1, 0.5))
    sig += rng.uniform(-0.2, 0.2) * lam
    for _ in range(rng.integers(1, 4)):
        center, width = rng.uniform(-0.1, 1.1), rng.uniform(0.05, 0.3)
        sig += rng.uniform(-0.25, 0.35) * np.exp(-0.5 * ((lam - center) / width) ** 2)
    return np.clip(sig, 0.02, 0.95)


def generate_clean_scene(width: int, height: int, bands: int, wavelengths=None, seed: int = 0) -> HsiCube:
    if min(width, height, bands) < 1:
        raise ValueError("scene dimensions must be >= 1")
    wavelengths = default_wavelengths(bands) if wavelengths is None else np.asarray(wavelengths, float)
    rng = np.random.default_rng(seed)
    n_materials = int(rng.integers(3, 9))
    signatures = np.stack([_spectral_signature(rng, wavelengths) for _ in range(n_materials)])
    # Voronoi sites; every material gets at least one
    n_sites = n_materials + int(rng.integers(0, n_materials + 1))
    sites = rng.uniform(0, 1, size=(n_sites, 2)) * [height, width]
    owner = np.concatenate([np.arange(n_materials), rng.integers(0, n_materials, n_sites - n_materials)])
    yy, xx = np.mgrid[0:height, 0:width].astype(float)
    warp = 0.08 * max(height, width)
    yy = yy + warp * _smooth_noise(rng, height, width, octaves=2)
    xx = xx + warp * _smooth_noise(rng, height, width, octaves=2)
    d2 = (yy[..., None] - sites[:, 0]) ** 2 + (xx[..., None] - sites[:, 1]) ** 2
    labels = owner[np.argmin(d2, axis=-1)]
    texture = 1.0 + 0.04 * _smooth_noise(rng, height, width, octaves=3)
    data = signatures[labels] * texture[..., None]
    return HsiCube(np.clip(data, 0.0, 1.0).astype(np.float32), wavelengths)


def _mean_matching_gamma(field: np.ndarray, target: float) -> float:
    lo, hi = 1e-3, 1e3   # mean(field**gamma) decreases in gamma
    for _ in range(200):
        mid = np.sqrt(lo * hi)
        if np.mean(field ** mid) > target:
            lo = mid
        else:
            hi = mid
    return np.sqrt(lo * hi)


def level_mean(level: int, levels: int = STANDARD_THICKNESS_LEVELS) -> float:
    """Target mean thickness: 0.05 at level 0 up to 0.95 at the top level."""
    if levels == 1:
        return 0.5
    return 0.05 + 0.9 * level / (levels - 1)


def generate_thickness_map(width: int, height: int, level: int, seed: int,
                           levels: int = STANDARD_THICKNESS_LEVELS) -> np.ndarray:
    """Irregular haze thickness in [0, 1], (height, width), mean set by ``level``.

    The same seed gives the same spatial pattern at every level; the level only
    reshapes values (power transform) so the mean hits its target.
    """
    if not 0 <= level < levels:
        raise ValueError(f"level {level} outside 0..{levels - 1}")
    rng = np.random.default_rng(seed)
    field = _smooth_noise(rng, height, width)
    # rank-normalize to uniform (0, 1]: same level sets, wider value spread
    field = (stats.rankdata(field, method="ordinal").reshape(field.shape)) / field.size
    gamma = _mean_matching_gamma(field, level_mean(level, levels))
    return np.clip(field ** gamma, 0.0, 1.0)


def spectral_weight(wavelengths: np.ndarray, decay: float) -> np.ndarray:
    wavelengths = np.asarray(wavelengths, dtype=np.float64)
    return (wavelengths[0] / wavelengths) ** decay


def apply_haze(clean: HsiCube, spec: HazeSpec, thickness: np.ndarray | None = None) -> HsiCube:
    if spec.abundance == 0:
        return HsiCube(clean.data.copy(), clean.wavelengths_nm)
    if thickness is None:
        thickness = generate_thickness_map(clean.width, clean.height, spec.thickness_level,
                                           spec.seed, spec.levels)
    w = spectral_weight(clean.wavelengths_nm, spec.spectral_decay)
    haze = spec.abundance * thickness[..., None] * w
    hazy = np.clip(clean.data + haze, 0.0, 1.0).astype(clean.data.dtype)
    return HsiCube(hazy, clean.wavelengths_nm)


# ---------------------------------------------------------------------------------------
# dataset


@dataclass(frozen=True)
class Recipe:
    n_scenes: int
    thickness_levels: int = STANDARD_THICKNESS_LEVELS
    abundances: tuple[float, ...] = tuple(float(a) for a in np.linspace(*DEFAULT_ABUNDANCE_RANGE, STANDARD_ABUNDANCES))
    width: int = 128
    height: int = 128
    bands: int = 32
    seed: int = 0
    spectral_decay: float = 1.5
    test_fraction: float = 0.1
    pairs_per_scene: int | None = None   # None: every grid cell for every scene

    def __post_init__(self):
        if self.n_scenes < 1:
            raise ValueError("n_scenes must be >= 1")
        if self.thickness_levels < 1 or not self.abundances:
            raise ValueError("haze grid must be non-empty")
        if any(a < 0 for a in self.abundances):
            raise ValueError("abundances must be >= 0")
        if min(self.width, self.height, self.bands) < 1:
            raise ValueError("dimensions must be >= 1")
        if not 0 <= self.test_fraction < 1:
            raise ValueError("test_fraction must be in [0, 1)")
        if self.pairs_per_scene is not None and not 1 <= self.pairs_per_scene <= self.grid_size:
            raise ValueError(f"pairs_per_scene must be in 1..{self.grid_size}")

    @property
    def grid_size(self) -> int:
        return self.thickness_levels * len(self.abundances)

    @property
    def n_pairs(self) -> int:
        per_scene = self.grid_size if self.pairs_per_scene is None else self.pairs_per_scene
        return self.n_scenes * per_scene


def standard_recipe(**overrides) -> Recipe:
    """100 scenes, 20 thickness levels, 5 abundances, 20 sampled cells per scene."""
    base = dict(n_scenes=STANDARD_SCENES, thickness_levels=STANDARD_THICKNESS_LEVELS,
                pairs_per_scene=STANDARD_PAIRS_PER_SCENE)
    base.update(overrides)
    return Recipe(**base)


def _child_seed(master: int, *key: int) -> int:
    return int(np.random.SeedSequence(master, spawn_key=key).generate_state(1)[0])


def split_scenes(n_scenes: int, test_fraction: float, seed: int) -> set[int]:
    """Scene indices held out for testing; whole scenes, never individual pairs."""
    n_test = int(round(n_scenes * test_fraction))
    n_test = min(n_test, n_scenes - 1)
    order = np.random.default_rng(_child_seed(seed, 0xC0FFEE)).permutation(n_scenes)
    return set(int(i) for i in order[:n_test])


def scene_cells(recipe: Recipe, scene: int) -> list[tuple[int, int]]:
    """(thickness level, abundance index) cells hazed for one scene, grid order."""
    n_alpha = len(recipe.abundances)
    cells = [(level, k) for level in range(recipe.thickness_levels) for k in range(n_alpha)]
    if recipe.pairs_per_scene is None:
        return cells
    rng = np.random.default_rng(_child_seed(recipe.seed, 3, scene))
    pick = np.sort(rng.choice(len(cells), size=recipe.pairs_per_scene, replace=False))
    return [cells[i] for i in pick]


def plan_dataset(recipe: Recipe) -> list[dict]:
    """Manifest entries (without file hashes) for every pair of the recipe."""
    test = split_scenes(recipe.n_scenes, recipe.test_fraction, recipe.seed)
    entries = []
    for s in range(recipe.n_scenes):
        scene_seed = _child_seed(recipe.seed, 1, s)
        haze_seed = _child_seed(recipe.seed, 2, s)
        for level, k in scene_cells(recipe, s):
            alpha = recipe.abundances[k]
            spec = HazeSpec(level, float(alpha), haze_seed, recipe.spectral_decay, recipe.thickness_levels)
            entries.append({
                "clean_path": f"scene_{s:04d}_clean.hsc",
                "hazy_path": f"scene_{s:04d}_t{level:02d}_a{k:02d}_hazy.hsc",
                "spec": dataclasses.asdict(spec),
                "split": "test" if s in test else "train",
                "scene": s,
                "scene_seed": scene_seed,
            })
    return entries


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def build_dataset(out_dir: str | os.PathLike, recipe: Recipe) -> list[dict]:
    """Write all clean/hazy cubes plus ``manifest.json`` and ``recipe.json``.

    Paths in the manifest are relative to ``out_dir``.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory {out}: {exc}") from exc
    entries = plan_dataset(recipe)
    wavelengths = default_wavelengths(recipe.bands)
    clean_cache: dict[int, HsiCube] = {}
    thickness_cache: dict[tuple[int, int], np.ndarray] = {}
    for entry in entries:
        s = entry["scene"]
        if s not in clean_cache:
            clean_cache.clear()
            clean = generate_clean_scene(recipe.width, recipe.height, recipe.bands, wavelengths,
                                         entry["scene_seed"])
            clean_cache[s] = clean
            _write(out / entry["clean_path"], clean)
        clean = clean_cache[s]
        spec = HazeSpec(**entry["spec"])
        key = (spec.seed, spec.thickness_level)
        if key not in thickness_cache:
            thickness_cache.clear()
            thickness_cache[key] = generate_thickness_map(recipe.width, recipe.height,
                                                          spec.thickness_level, spec.seed, spec.levels)
        hazy = apply_haze(clean, spec, thickness_cache[key])
        _write(out / entry["hazy_path"], hazy)
        entry["clean_sha256"] = _sha256(out / entry["clean_path"])
        entry["hazy_sha256"] = _sha256(out / entry["hazy_path"])
    _write_json(out / "manifest.json", entries)
    _write_json(out / "recipe.json", dataclasses.asdict(recipe))
    log.info("wrote %d pairs to %s", len(entries), out)
    return entries


def _write(path: Path, cube: HsiCube) -> None:
    try:
        write_cube(path, cube)
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc


def _write_json(path: Path, obj) -> None:
    try:
        path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc


def load_manifest(path: str | os.PathLike) -> tuple[Path, list[dict]]:
    """Returns (dataset root, entries). ``path`` may be the manifest or its directory."""
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.json"
    with open(p) as fh:
        entries = json.load(fh)
    return p.parent, entries
