"""Deterministic synthetic longitudinal cohorts with evolving spherical lesions.

Every participant shares one ellipsoidal "brain" (grey-matter shell around a
white-matter core). Lesions live in the white matter and follow a per-lesion
radius trajectory ``r(t) = max(0, r0 + rate * years)``:

* ``growth``    -- positive rate, lesion expands.
* ``remission`` -- negative rate, vacated tissue returns to white matter.
* ``atrophy``   -- negative rate, vacated tissue becomes hypointense (CSF-like).

The four pseudo-modalities are fixed per-tissue intensity remappings of the
same tissue map plus seeded Gaussian noise.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data import MODALITIES, StudyRecord, write_manifest
from .time_conditioning import DAYS_PER_YEAR
from .volume import Volume
from .volume_io import RAW_SUFFIX, read_volume, write_volume

logger = logging.getLogger(__name__)

KINDS = ("growth", "remission", "atrophy")
TISSUES = ("background", "grey", "white", "lesion", "cavity")

# rows: tissue, columns: MPRAGE, T2, PD, FLAIR
TISSUE_INTENSITY = np.array(
    [
        [0.00, 0.00, 0.00, 0.00],  # background
        [0.55, 0.60, 0.70, 0.50],  # grey matter
        [0.80, 0.45, 0.60, 0.40],  # white matter
        [0.35, 0.90, 0.80, 1.00],  # lesion
        [0.10, 1.00, 0.90, 0.12],  # cavity left by atrophy
    ]
)

ISBI_PROFILE = ((14, 4), (4, 5), (1, 6))


@dataclass
class LesionSpec:
    center: tuple[float, float, float]
    r0: float
    rate: float
    kind: str = "growth"
    intensity_per_modality: tuple[float, float, float, float] = tuple(TISSUE_INTENSITY[3])  # type: ignore[assignment]

    def __post_init__(self):
        if self.r0 <= 0:
            raise ValueError("r0 must be > 0")
        if self.kind not in KINDS:
            raise ValueError(f"unknown lesion kind {self.kind!r}")
        self.center = tuple(float(c) for c in self.center)
        self.intensity_per_modality = tuple(float(c) for c in self.intensity_per_modality)

    def radius(self, years: float) -> float:
        return max(0.0, self.r0 + self.rate * years)


@dataclass
class PhantomConfig:
    profile: tuple[tuple[int, int], ...] = ISBI_PROFILE
    side: int = 32
    semi_axes: tuple[float, float, float] = (13.0, 14.0, 12.0)
    white_fraction: float = 0.8
    noise: float = 0.02
    lesions_per_participant: tuple[int, int] = (2, 3)
    r0_range: tuple[float, float] = (1.5, 2.5)
    growth_rate: tuple[float, float] = (0.5, 0.9)
    shrink_rate: tuple[float, float] = (-0.9, -0.4)
    kind_weights: dict = field(default_factory=lambda: {"growth": 0.6, "remission": 0.2, "atrophy": 0.2})
    interval_days: int = 365
    interval_jitter: int = 30
    seed: int = 0
    volume_format: str = ".nii.gz"
    id_prefix: str = "sub"

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.side,) * 3


@dataclass
class ParticipantSpec:
    participant_id: str
    kind: str
    days: list[int]
    lesions: list[LesionSpec]
    index: int = 0


# ---------------------------------------------------------------------------
# geometry


def _grid(shape) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return np.meshgrid(*(np.arange(s, dtype=np.float64) for s in shape), indexing="ij")


def _center(shape) -> np.ndarray:
    return (np.asarray(shape, dtype=np.float64) - 1.0) / 2.0


def ellipsoid_level(shape, semi_axes) -> np.ndarray:
    """``sum((x - c)^2 / a^2)``; values <= 1 are inside."""
    c = _center(shape)
    return sum(((g - ci) / a) ** 2 for g, ci, a in zip(_grid(shape), c, semi_axes))


def brain_mask(cfg: PhantomConfig) -> np.ndarray:
    return ellipsoid_level(cfg.shape, cfg.semi_axes) <= 1.0


def white_matter_mask(cfg: PhantomConfig) -> np.ndarray:
    axes = tuple(a * cfg.white_fraction for a in cfg.semi_axes)
    return ellipsoid_level(cfg.shape, axes) <= 1.0


def _sphere_fraction(shape, center, radius: float) -> np.ndarray:
    """Partial-volume occupancy of a sphere: 1 inside, linear 1-voxel ramp at the edge."""
    if radius <= 0:
        return np.zeros(shape)
    dist = np.sqrt(sum((g - c) ** 2 for g, c in zip(_grid(shape), center)))
    return np.clip(radius - dist + 0.5, 0.0, 1.0)


_SPHERE_DIRS = None


def _sphere_directions(n: int = 256) -> np.ndarray:
    global _SPHERE_DIRS
    if _SPHERE_DIRS is None:
        # Fibonacci lattice on the unit sphere
        i = np.arange(n) + 0.5
        phi = np.arccos(1 - 2 * i / n)
        theta = np.pi * (1 + 5**0.5) * i
        _SPHERE_DIRS = np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)
    return _SPHERE_DIRS


def _fits(center, radius, cfg: PhantomConfig) -> bool:
    """True if the sphere (plus its half-voxel edge ramp) stays inside the white matter."""
    axes = np.array([a * cfg.white_fraction for a in cfg.semi_axes])
    pts = np.asarray(center) - _center(cfg.shape) + (radius + 0.5) * _sphere_directions()
    return bool(np.all(np.sum((pts / axes) ** 2, axis=1) <= 1.0))


# ---------------------------------------------------------------------------
# sampling participants


def participant_specs(cfg: PhantomConfig) -> list[ParticipantSpec]:
    rng = np.random.default_rng(cfg.seed)
    kinds = list(cfg.kind_weights)
    probs = np.array([cfg.kind_weights[k] for k in kinds], dtype=np.float64)
    probs /= probs.sum()
    specs = []
    idx = 0
    for count, n_tp in cfg.profile:
        for _ in range(count):
            idx += 1
            pid = f"{cfg.id_prefix}{idx:02d}"
            kind = kinds[rng.choice(len(kinds), p=probs)]
            days = [0]
            for _ in range(n_tp - 1):
                jitter = int(rng.integers(-cfg.interval_jitter, cfg.interval_jitter + 1)) if cfg.interval_jitter else 0
                days.append(days[-1] + max(1, cfg.interval_days + jitter))
            max_years = days[-1] / DAYS_PER_YEAR
            n_les = int(rng.integers(cfg.lesions_per_participant[0], cfg.lesions_per_participant[1] + 1))
            lesions = [_draw_lesion(rng, cfg, kind, max_years, pid) for _ in range(n_les)]
            specs.append(ParticipantSpec(pid, kind, days, lesions, idx))
    return specs


def _draw_lesion(rng, cfg: PhantomConfig, kind: str, max_years: float, pid: str) -> LesionSpec:
    r0 = float(rng.uniform(*cfg.r0_range))
    rate = float(rng.uniform(*(cfg.growth_rate if kind == "growth" else cfg.shrink_rate)))
    r_max = max(r0, r0 + rate * max_years)
    axes = np.array([a * cfg.white_fraction for a in cfg.semi_axes])
    c0 = _center(cfg.shape)
    for _ in range(200):
        center = c0 + rng.uniform(-1, 1, size=3) * axes
        if _fits(center, r_max, cfg):
            return LesionSpec(tuple(center), r0, rate, kind)
    raise ValueError(f"lesion overflow: cannot place a radius-{r_max:.1f} lesion for {pid}")


# ---------------------------------------------------------------------------
# rendering


def tissue_fractions(spec: ParticipantSpec, days: int, cfg: PhantomConfig) -> np.ndarray:
    """Per-voxel tissue occupancy, shape (len(TISSUES), X, Y, Z), summing to 1."""
    shape = cfg.shape
    years = days / DAYS_PER_YEAR
    brain = brain_mask(cfg).astype(np.float64)
    white = white_matter_mask(cfg).astype(np.float64)
    lesion = np.zeros(shape)
    cavity = np.zeros(shape)
    for les in spec.lesions:
        now = _sphere_fraction(shape, les.center, les.radius(years))
        lesion = np.maximum(lesion, now)
        if les.kind == "atrophy":
            start = _sphere_fraction(shape, les.center, les.r0)
            cavity = np.maximum(cavity, np.clip(start - now, 0.0, 1.0))
    lesion *= white
    cavity = np.minimum(cavity * white, 1.0 - lesion)
    wm = white * (1.0 - lesion - cavity)
    gm = brain * (1.0 - white)
    bg = 1.0 - brain
    return np.stack([bg, gm, wm, lesion, cavity])


def render_study(spec: ParticipantSpec, timepoint: int, cfg: PhantomConfig, noise: bool = True) -> dict[str, np.ndarray]:
    """Render the four modalities of one participant at ``timepoint`` (1-based)."""
    days = spec.days[timepoint - 1]
    frac = tissue_fractions(spec, days, cfg)
    out = {}
    for m, name in enumerate(MODALITIES):
        img = np.tensordot(TISSUE_INTENSITY[:, m], frac, axes=1)
        if noise and cfg.noise > 0:
            rng = np.random.default_rng([cfg.seed, spec.index, timepoint, m])
            img = img + rng.normal(0.0, cfg.noise, size=img.shape)
        out[name] = img.astype(np.float32)
    return out


def generate_cohort(cfg: PhantomConfig, out_dir) -> Path:
    """Write every study of the cohort plus ``manifest.csv``; return the manifest path."""
    out_dir = Path(out_dir)
    if not out_dir.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {out_dir}")
    specs = participant_specs(cfg)
    records = []
    for spec in specs:
        pdir = out_dir / spec.participant_id
        pdir.mkdir(exist_ok=True)
        for tp in range(1, len(spec.days) + 1):
            vols = render_study(spec, tp, cfg)
            paths = {}
            for name, arr in vols.items():
                p = pdir / f"tp{tp}_{name}{cfg.volume_format}"
                write_volume(Volume(arr), p)
                paths[name] = p
            records.append(StudyRecord(spec.participant_id, tp, spec.days[tp - 1], paths))
    write_volume(Volume(brain_mask(cfg).astype(np.float32)), out_dir / f"brain_mask{cfg.volume_format}")
    truth = {
        "config": cfg.to_dict(),
        "participants": [
            {"participant_id": s.participant_id, "kind": s.kind, "days": s.days, "lesions": [asdict(l) for l in s.lesions]}
            for s in specs
        ],
    }
    (out_dir / "phantom_truth.json").write_text(json.dumps(truth, indent=2))
    manifest = write_manifest(records, out_dir / "manifest.csv")
    logger.info("wrote %d studies for %d participants to %s", len(records), len(specs), out_dir)
    return manifest


def load_truth(out_dir) -> dict:
    return json.loads((Path(out_dir) / "phantom_truth.json").read_text())


def load_brain_mask(out_dir) -> Optional[np.ndarray]:
    out_dir = Path(out_dir)
    for suffix in (".nii.gz", ".nii", RAW_SUFFIX):
        p = out_dir / f"brain_mask{suffix}"
        if p.exists():
            return read_volume(p).voxels > 0.5
    return None


def lesion_volume(v, threshold: float, mask: Optional[np.ndarray] = None) -> int:
    """Count voxels brighter than ``threshold`` (restricted to ``mask`` when given)."""
    arr = np.asarray(v.voxels if isinstance(v, Volume) else v)
    hot = arr > threshold
    if mask is not None:
        hot &= np.asarray(mask, dtype=bool)
    return int(hot.sum())


def profile_from_string(text: str) -> tuple[tuple[int, int], ...]:
    """Parse ``"14x4,4x5,1x6"`` into ((14, 4), (4, 5), (1, 6))."""
    out = []
    for part in text.split(","):
        count, n_tp = part.lower().split("x")
        out.append((int(count), int(n_tp)))
    return tuple(out)


def participant_kinds(specs: Sequence[ParticipantSpec]) -> dict[str, str]:
    return {s.participant_id: s.kind for s in specs}
