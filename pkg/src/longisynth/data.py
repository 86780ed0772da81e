"""Longitudinal study manifests, preprocessing, sample pairing and fold assignment."""

from __future__ import annotations

import csv
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .time_conditioning import class_from_time_lag
from .validation import check_shape3
from .volume import Volume
from .volume_io import read_volume

logger = logging.getLogger(__name__)

MODALITIES = ("MPRAGE", "T2", "PD", "FLAIR")
MANIFEST_COLUMNS = (
    "participant_id",
    "timepoint_index",
    "days_from_baseline",
    "mprage_path",
    "t2_path",
    "pd_path",
    "flair_path",
)
_PATH_COLUMNS = dict(zip(MODALITIES, MANIFEST_COLUMNS[3:]))


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class StudyRecord:
    participant_id: str
    timepoint_index: int
    days_from_baseline: int
    modality_paths: Mapping[str, Path]

    def __post_init__(self):
        if set(self.modality_paths) != set(MODALITIES):
            raise ValueError(
                f"modality_paths must have exactly {MODALITIES}, got {sorted(self.modality_paths)}"
            )
        if self.timepoint_index < 1:
            raise ValueError("timepoint_index must be >= 1")
        if self.days_from_baseline < 0:
            raise ValueError("days_from_baseline must be >= 0")


@dataclass
class Sample:
    """One training instance: earlier-timepoint modalities, later FLAIR and the lag.

    ``source`` and ``target`` are ``None`` until the sample is materialized with a
    volume loader, so pairing can be inspected without touching the disk.
    """

    participant_id: str
    source_timepoint: int
    target_timepoint: int
    time_lag_days: int
    class_label: Optional[int] = None
    source: Optional[tuple[Volume, ...]] = None
    target: Optional[Volume] = None
    source_record: Optional[StudyRecord] = field(default=None, repr=False)
    target_record: Optional[StudyRecord] = field(default=None, repr=False)

    def __post_init__(self):
        if self.time_lag_days <= 0:
            raise ValueError(f"time_lag_days must be > 0, got {self.time_lag_days}")
        if self.source is not None:
            self.source = tuple(self.source)
            if len(self.source) != len(MODALITIES):
                raise ValueError(f"expected {len(MODALITIES)} source volumes, got {len(self.source)}")
            vols = list(self.source) + ([self.target] if self.target is not None else [])
            ref = vols[0]
            for v in vols[1:]:
                if v.shape != ref.shape or v.spacing_mm != ref.spacing_mm:
                    raise ValueError("all sample volumes must share shape and spacing")

    @property
    def is_loaded(self) -> bool:
        return self.source is not None and self.target is not None

    def stacked(self) -> np.ndarray:
        """Return a (5, X, Y, Z) float32 array: 4 source channels then the target."""
        if not self.is_loaded:
            raise ValueError("sample volumes are not loaded")
        return np.stack([v.voxels for v in (*self.source, self.target)]).astype(np.float32)


# ---------------------------------------------------------------------------
# manifest


def load_manifest(path) -> list[StudyRecord]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    base = path.parent
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ManifestError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                pid = row["participant_id"].strip()
                if not pid:
                    raise ValueError("empty participant_id")
                paths = {}
                for mod, col in _PATH_COLUMNS.items():
                    p = Path((row[col] or "").strip())
                    if not str(p) or str(p) == ".":
                        raise ValueError(f"empty {col}")
                    paths[mod] = p if p.is_absolute() else base / p
                rec = StudyRecord(
                    participant_id=pid,
                    timepoint_index=int(row["timepoint_index"]),
                    days_from_baseline=int(row["days_from_baseline"]),
                    modality_paths=paths,
                )
            except (TypeError, ValueError, AttributeError) as exc:
                raise ManifestError(f"{path}:{lineno}: malformed row ({exc})") from exc
            records.append((lineno, rec))

    seen: dict[tuple[str, int], int] = {}
    for lineno, rec in records:
        key = (rec.participant_id, rec.timepoint_index)
        if key in seen:
            raise ManifestError(
                f"{path}:{lineno}: duplicate (participant, timepoint) {key}, first at line {seen[key]}"
            )
        seen[key] = lineno

    records.sort(key=lambda lr: (lr[1].participant_id, lr[1].timepoint_index))
    for (_, prev), (lineno, rec) in zip(records, records[1:]):
        if prev.participant_id == rec.participant_id and rec.days_from_baseline <= prev.days_from_baseline:
            raise ManifestError(
                f"{path}:{lineno}: non-increasing days_from_baseline for participant "
                f"{rec.participant_id} (timepoint {rec.timepoint_index})"
            )
    return [rec for _, rec in records]


def write_manifest(records: Sequence[StudyRecord], path, relative_to=None) -> Path:
    path = Path(path)
    root = Path(relative_to) if relative_to is not None else path.parent
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for r in records:
            cols = []
            for mod in MODALITIES:
                p = Path(r.modality_paths[mod])
                try:
                    p = p.relative_to(root)
                except ValueError:
                    pass
                cols.append(str(p))
            writer.writerow([r.participant_id, r.timepoint_index, r.days_from_baseline, *cols])
    return path


def group_by_participant(records: Sequence[StudyRecord]) -> dict[str, list[StudyRecord]]:
    groups: dict[str, list[StudyRecord]] = defaultdict(list)
    for r in records:
        groups[r.participant_id].append(r)
    return {pid: sorted(rs, key=lambda r: r.timepoint_index) for pid, rs in groups.items()}


# ---------------------------------------------------------------------------
# preprocessing


def center_crop(v: Volume, target_shape, start=None) -> Volume:
    """Crop ``v`` to ``target_shape``.

    The window is centered with ``start = floor((full - target) / 2)`` unless
    explicit ``start`` indices are given.
    """
    target = check_shape3(target_shape, "target_shape")
    full = v.shape
    if any(t > f for t, f in zip(target, full)):
        raise ValueError(f"crop shape {target} exceeds volume shape {full}")
    if start is None:
        start = tuple((f - t) // 2 for f, t in zip(full, target))
    else:
        start = tuple(int(s) for s in start)
        if len(start) != 3 or any(s < 0 or s + t > f for s, t, f in zip(start, target, full)):
            raise ValueError(f"crop start {start} places window outside volume {full}")
    sl = tuple(slice(s, s + t) for s, t in zip(start, target))
    return v.with_voxels(v.voxels[sl].copy())


def crop_start(full_shape, target_shape) -> tuple[int, int, int]:
    return tuple((int(f) - int(t)) // 2 for f, t in zip(full_shape, target_shape))  # type: ignore[return-value]


def normalize_to_signed_unit(v: Volume) -> Volume:
    """Linearly map the volume's own min/max onto [-1, 1]."""
    x = v.voxels.astype(np.float64)
    lo, hi = float(x.min()), float(x.max())
    if not hi > lo:
        raise ValueError("degenerate intensity range: volume is constant")
    out = 2.0 * (x - lo) / (hi - lo) - 1.0
    # pin the extremes so float32 rounding cannot move them
    out[x == lo] = -1.0
    out[x == hi] = 1.0
    return v.with_voxels(out.astype(np.float32))


def make_loader(crop_shape=None, crop_start=None, normalize: bool = True) -> Callable[[Path], Volume]:
    """Build a caching path -> preprocessed Volume loader (crop then normalize)."""
    cache: dict[Path, Volume] = {}

    def load(path) -> Volume:
        key = Path(path)
        if key not in cache:
            v = read_volume(key)
            if crop_shape is not None:
                v = center_crop(v, crop_shape, crop_start)
            if normalize:
                v = normalize_to_signed_unit(v)
            cache[key] = v
        return cache[key]

    return load


# ---------------------------------------------------------------------------
# pairing


def build_sample_pairs(
    records: Sequence[StudyRecord],
    loader: Optional[Callable[[Path], Volume]] = None,
    n_classes: Optional[int] = None,
) -> list[Sample]:
    """Enumerate every (earlier, later) timepoint pair within each participant.

    With a ``loader`` the source modalities and target FLAIR are materialized;
    with ``n_classes`` each sample gets a whole-year class label.
    """
    samples = []
    for pid, recs in sorted(group_by_participant(records).items()):
        if len(recs) < 2:
            logger.warning("participant %s has %d timepoint(s); no samples", pid, len(recs))
            continue
        for a, b in combinations(recs, 2):
            lag = b.days_from_baseline - a.days_from_baseline
            label = class_from_time_lag(lag, n_classes).index if n_classes else None
            source = target = None
            if loader is not None:
                source = tuple(loader(a.modality_paths[m]) for m in MODALITIES)
                target = loader(b.modality_paths["FLAIR"])
            samples.append(
                Sample(
                    participant_id=pid,
                    source_timepoint=a.timepoint_index,
                    target_timepoint=b.timepoint_index,
                    time_lag_days=lag,
                    class_label=label,
                    source=source,
                    target=target,
                    source_record=a,
                    target_record=b,
                )
            )
    return samples


# ---------------------------------------------------------------------------
# folds


@dataclass
class FoldSplit:
    assignment: dict[str, int]
    k: int = 5

    def __post_init__(self):
        bad = {p: f for p, f in self.assignment.items() if not 0 <= f < self.k}
        if bad:
            raise ValueError(f"fold indices out of range 0..{self.k - 1}: {bad}")
        empty = sorted(set(range(self.k)) - set(self.assignment.values()))
        if empty:
            raise ValueError(f"folds {empty} have no participants")

    def participants(self, fold: int) -> list[str]:
        return sorted(p for p, f in self.assignment.items() if f == fold)

    def split(self, samples: Sequence[Sample], fold: int) -> tuple[list[Sample], list[Sample]]:
        """Return (train, validation) samples for ``fold``."""
        missing = {s.participant_id for s in samples} - set(self.assignment)
        if missing:
            raise ValueError(f"participants without a fold: {sorted(missing)}")
        train = [s for s in samples if self.assignment[s.participant_id] != fold]
        val = [s for s in samples if self.assignment[s.participant_id] == fold]
        return train, val

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.assignment, indent=2, sort_keys=True))


def load_fold_override(path) -> dict[str, int]:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError(f"{path}: fold override must be a JSON object")
    return {str(k): int(v) for k, v in data.items()}


def assign_folds(
    participants: Mapping[str, int],
    k: int = 5,
    seed: int = 0,
    override: Optional[Mapping[str, int]] = None,
) -> FoldSplit:
    """Assign participants to ``k`` folds.

    ``participants`` maps participant id to its number of timepoints. Participants
    are dealt round-robin within timepoint-count strata (shuffled under ``seed``),
    which keeps each fold's composition balanced. An explicit ``override`` map is
    validated and used verbatim.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if len(participants) < k:
        raise ValueError(f"fewer participants ({len(participants)}) than folds ({k})")
    if override is not None:
        override = {str(p): int(f) for p, f in override.items()}
        if set(override) != set(participants):
            diff = set(participants) ^ set(override)
            raise ValueError(f"fold override does not match participants: {sorted(diff)}")
        return FoldSplit(dict(override), k)

    rng = np.random.default_rng(seed)
    strata: dict[int, list[str]] = defaultdict(list)
    for pid, n in participants.items():
        strata[int(n)].append(pid)
    order = []
    for n in sorted(strata):
        group = sorted(strata[n])
        rng.shuffle(group)
        order.extend(group)
    offset = int(rng.integers(k))
    assignment = {pid: (offset + i) % k for i, pid in enumerate(order)}
    return FoldSplit(assignment, k)
