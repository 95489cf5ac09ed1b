"""Synthetic labelled noise dataset.

Each track is one second of sub-band noise built from a random band subset
of the filter bank, labelled by running the combination-weight LMS and
thresholding. Tracks are stored as headerless float32 files and labelled from
exactly the stored samples, so a resumed build matches a fresh one.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from gfanc import io
from gfanc.adaptive import LABEL_STEP_SCALE, binarize, label_adapt
from gfanc.errors import DivergenceError, GfancError, InvalidArgument
from gfanc.filterbank import SubFilterBank
from gfanc.signal_core import FS_HZ, Signal, gen_subband_noise

log = logging.getLogger(__name__)

MANIFEST_FORMAT_VERSION = 1
SPLITS = ("train", "val", "test")
DESK_SCALE = {"train": 2000, "val": 200, "test": 200}
PAPER_SCALE = {"train": 80000, "val": 2000, "test": 2000}
SIZE_WEIGHTS = (0.4, 0.3, 0.2, 0.1)  # band-set sizes 1..4
GAIN_RANGE = (0.25, 1.0)
SPLIT_STRIDE = 10**9  # seed range per split
RETRY_STRIDE = 10**7  # seed offset per regeneration attempt
MAX_REGEN_FRACTION = 0.01


@dataclass(frozen=True)
class TrackSpec:
    seed: int
    band_set: tuple[int, ...]
    gains: tuple[float, ...]
    dur_s: float = 1.0
    fs: int = FS_HZ

    def __post_init__(self):
        if not self.band_set:
            raise InvalidArgument("band_set is empty")
        if len(self.gains) != len(self.band_set):
            raise InvalidArgument("need one gain per band")
        n = self.dur_s * self.fs
        if abs(n - round(n)) > 1e-9:
            raise InvalidArgument("dur_s * fs must be integral")

    @property
    def n_samples(self) -> int:
        return int(round(self.dur_s * self.fs))


def track_seed(root_seed: int, split: str, index: int, attempt: int = 0) -> int:
    return root_seed * len(SPLITS) * SPLIT_STRIDE + SPLITS.index(split) * SPLIT_STRIDE + attempt * RETRY_STRIDE + index


def draw_spec(seed: int, n_bands: int, max_size: int = len(SIZE_WEIGHTS)) -> TrackSpec:
    rng = np.random.default_rng([seed, 1])
    weights = np.asarray(SIZE_WEIGHTS[: min(max_size, n_bands)])
    size = int(rng.choice(np.arange(1, weights.size + 1), p=weights / weights.sum()))
    bands = tuple(sorted(int(b) + 1 for b in rng.choice(n_bands, size, replace=False)))
    gains = tuple(float(g) for g in rng.uniform(*GAIN_RANGE, size))
    return TrackSpec(seed, bands, gains)


def synth_track(spec: TrackSpec, bank: SubFilterBank) -> Signal:
    return gen_subband_noise(spec.seed, spec.band_set, spec.gains, spec.dur_s, spec.fs, bank)


def track_path(split: str, index: int) -> str:
    return f"tracks/{split}/{index}.f32"


# Worker state for the process pool; set once per worker.
_CTX: dict = {}


def _init_worker(bank, p, s, root, label_cfg):
    _CTX.update(bank=bank, p=p, s=s, root=Path(root), label_cfg=label_cfg)


def _label_one(job):
    split, index, root_seed = job
    bank, p, s, root = _CTX["bank"], _CTX["p"], _CTX["s"], _CTX["root"]
    rel = track_path(split, index)
    path = root / rel
    attempts = 0
    while True:
        spec = draw_spec(track_seed(root_seed, split, index, attempts), bank.n_bands)
        if attempts == 0 and path.is_file():
            x = io.read_f32(path)
        else:
            x = synth_track(spec, bank).samples.astype("<f4").astype(np.float64)
        try:
            g = label_adapt(Signal(x, spec.fs), bank, p, s, **_CTX["label_cfg"])
            break
        except DivergenceError:
            attempts += 1
            log.warning("track %s/%d diverged, regenerating (attempt %d)", split, index, attempts)
            if attempts > 10:
                raise
    io.write_f32(path, x)
    entry = {
        "split": split,
        "index": index,
        "file": rel,
        "spec": {**asdict(spec), "band_set": list(spec.band_set), "gains": list(spec.gains)},
        "label": binarize(g).tolist(),
        "g": [float(v) for v in g],
        "regenerated": attempts,
    }
    return entry


def build_dataset(
    out_dir,
    bank: SubFilterBank,
    p,
    s,
    counts: dict | None = None,
    root_seed: int = 0,
    jobs: int = 1,
    bank_dir=None,
    paths_dir=None,
    passes: int = 10,
    tol: float = 1e-3,
) -> dict:
    """Synthesize, label and persist every track; returns the manifest."""
    counts = dict(DESK_SCALE if counts is None else counts)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs_list = [(split, i, root_seed) for split in SPLITS for i in range(int(counts.get(split, 0)))]
    label_cfg = {"passes": passes, "tol": tol}
    init = (bank, np.asarray(p), np.asarray(s), str(out_dir), label_cfg)
    if jobs > 1:
        with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=init) as pool:
            entries = list(pool.map(_label_one, jobs_list, chunksize=16))
    else:
        _init_worker(*init)
        entries = [_label_one(j) for j in jobs_list]
    regen = sum(1 for e in entries if e["regenerated"])
    if entries and regen > MAX_REGEN_FRACTION * len(entries):
        raise GfancError(f"{regen} of {len(entries)} tracks diverged during labelling; check the step size")

    def rel(path):
        return None if path is None else os.path.relpath(Path(path).resolve(), out_dir.resolve())

    manifest = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "generator": "periodic sub-band noise from the filter bank (synthetic stand-in dataset)",
        "root_seed": root_seed,
        "fs": FS_HZ,
        "dur_s": 1.0,
        "n_bands": bank.n_bands,
        "splits": {k: int(counts.get(k, 0)) for k in SPLITS},
        "bank": rel(bank_dir),
        "paths": rel(paths_dir),
        "label_config": {"passes": passes, "tol": tol, "step_scale": LABEL_STEP_SCALE},
        "regenerated": regen,
        "tracks": entries,
    }
    io.write_json(out_dir / "manifest.json", manifest)
    return manifest


def load_manifest(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    manifest = io.read_json(path)
    if manifest.get("format_version") != MANIFEST_FORMAT_VERSION:
        raise InvalidArgument(f"unsupported manifest format {manifest.get('format_version')}")
    manifest["_root"] = str(path.parent)
    return manifest


def load_split(manifest: dict, split: str) -> tuple[np.ndarray, np.ndarray]:
    """Stacked float32 tracks and 0/1 labels of one split."""
    root = Path(manifest["_root"])
    entries = [e for e in manifest["tracks"] if e["split"] == split]
    n = int(round(manifest["dur_s"] * manifest["fs"]))
    X = np.empty((len(entries), n), dtype=np.float32)
    for i, e in enumerate(entries):
        X[i] = np.fromfile(root / e["file"], dtype="<f4")
    T = np.array([e["label"] for e in entries], dtype=np.float32).reshape(len(entries), -1)
    return X, T
