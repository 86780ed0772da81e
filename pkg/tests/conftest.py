import csv
from pathlib import Path

import numpy as np
import pytest

from longisynth.data import MANIFEST_COLUMNS, build_sample_pairs, load_manifest, make_loader
from longisynth.phantom import PhantomConfig, generate_cohort


def write_fake_manifest(path: Path, profile, interval=365):
    """Manifest whose volume paths need not exist (pairing only)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_COLUMNS)
        idx = 0
        for count, n_tp in profile:
            for _ in range(count):
                idx += 1
                for tp in range(1, n_tp + 1):
                    stem = f"p{idx:02d}/tp{tp}"
                    w.writerow([f"p{idx:02d}", tp, (tp - 1) * interval] + [f"{stem}_{m}.nii.gz" for m in ("MPRAGE", "T2", "PD", "FLAIR")])
    return path


@pytest.fixture(scope="session")
def small_cohort(tmp_path_factory):
    """6 participants x 3 timepoints of 32^3 phantoms, loaded and normalized."""
    d = tmp_path_factory.mktemp("cohort")
    cfg = PhantomConfig(profile=((6, 3),), seed=11, kind_weights={"growth": 1.0})
    manifest = generate_cohort(cfg, d)
    records = load_manifest(manifest)
    samples = build_sample_pairs(records, make_loader(), n_classes=5)
    return {"dir": d, "manifest": manifest, "records": records, "samples": samples, "cfg": cfg}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
