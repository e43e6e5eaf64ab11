import os
import pickle
import subprocess
import sys

import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SRC = os.path.join(ROOT, "src")
CACHE_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "_cache")

if SRC not in sys.path:
    sys.path.insert(0, SRC)


def _try_build_extension():
    """Build the DTW extension in place once, if possible; the numpy
    fallback keeps everything green when this fails."""
    import glob

    if glob.glob(os.path.join(SRC, "penlive", "_dtw_cy.*.so")):
        return
    try:
        subprocess.run(
            [sys.executable, "setup.py", "build_ext", "--inplace"],
            cwd=ROOT, capture_output=True, timeout=180, check=False,
        )
    except Exception:
        pass


_try_build_extension()

# corpus fingerprint: bump when the simulator or extraction defaults change
DESK_CACHE_TAG = "desk-v2"
DESK_SEED = 2024
NOISE_SEED = 77


def _build_desk_corpus():
    from penlive import extract, simulate, slm
    from penlive.data import Dataset

    human = simulate.make_corpus(n_classes=16, n_writers=10, reps=10, seed=DESK_SEED)
    jobs = min(4, os.cpu_count() or 1)
    syn, reports = extract.generate_counterparts(
        human, slm.NoiseConfig(rng_seed=NOISE_SEED), per_sample=1, jobs=jobs)
    return Dataset(samples=human.samples + syn.samples, name="gds1-sim"), reports


@pytest.fixture(scope="session")
def desk_corpus():
    """Full simulated corpus (1600 human + their machine counterparts),
    cached on disk because extraction dominates suite runtime."""
    os.makedirs(CACHE_DIR, exist_ok=True)
    path = os.path.join(CACHE_DIR, f"{DESK_CACHE_TAG}.pkl")
    if os.path.exists(path):
        with open(path, "rb") as fh:
            return pickle.load(fh)
    merged_reports = _build_desk_corpus()
    with open(path, "wb") as fh:
        pickle.dump(merged_reports, fh)
    return merged_reports


@pytest.fixture(scope="session")
def desk_subset_2000(desk_corpus):
    """Balanced 2000-sample subset (1000 human + their counterparts)."""
    import numpy as np

    from penlive.data import Dataset

    merged, _ = desk_corpus
    rng = np.random.default_rng(99)
    humans = [s for s in merged.samples if s.label == "human"]
    by_id = {s.id: s for s in merged.samples if s.label == "synthetic"}
    picked = []
    for i in rng.permutation(len(humans))[:1000]:
        picked.append(humans[i])
        picked.append(by_id[humans[i].id + "-syn1"])
    return Dataset(samples=tuple(picked), name="gds1-sim-2k")
