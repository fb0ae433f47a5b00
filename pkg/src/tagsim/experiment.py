"""Benchmark driver: dataset synthesis, registration runs, scoring, search.

The pipeline is staged through the filesystem so every step can be rerun or
inspected independently:

``simulate_dataset``
    writes movies (tagged frames, ground-truth fields, masks) plus a
    ``manifest.json`` describing splits, per-movie seeds, and parameter draws.
``register_dataset``
    estimates displacement fields for frame pairs of one split under one
    (input representation, loss) method and persists fields and traces.
``evaluate_dataset``
    scores estimated fields against the ground truth and writes a per-pair
    CSV plus an aggregate summary JSON.
``run_search``
    seeded random hyperparameter search scored on validation pairs.
``write_report`` / ``export_strain_maps``
    human-readable ranking table and PGM strain-map exports.

Everything is deterministic given the master seed; per-movie and per-trial
seeds are derived with a fixed integer mix so workers are order-independent.
"""
from __future__ import annotations

import csv
import io as _io
import time
from dataclasses import dataclass, field as dataclass_field, replace
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .harp import SharpExtractor
from .image_ops import warp_mask
from .io import read_json, read_raster, write_json, write_pgm, write_raster
from .losses import LOSS_KINDS, LossConfig
from .metrics import dice, epe, field_mps, mps95
from .register import RegConfig, register_pair
from .simulate import AnatomyParams, MotionParams, derive_seed, make_movie, make_static_phantom
from .tagging import SpammParams

INPUT_REPRS = ("raw", "sharp")
SPLIT_NAMES = ("train", "val", "test")
STATIC_NAME = "static"

CSV_HEADER = ("movie", "frame", "input_repr", "loss", "epe", "mps95", "dice",
              "runtime_ms")


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one benchmark run.

    Parameters
    ----------
    seed : int
        Master seed; every stochastic stage derives its own child seed.
    num_movies : int
        Moving-anatomy movies to synthesize (a static phantom sequence is
        always added on top, outside the splits).
    image_size, num_frames : int
        Frame geometry and sequence length.
    t1_range_ms, tr_range_ms : tuple of float
        Per-movie uniform sampling ranges for relaxation and repetition time.
    alpha_deg : float
        Imaging tip angle in degrees.
    tag_period_px : float
        Tag-line spacing in pixels.
    noise_sigma : float
        Additive noise level on tagged frames.
    motion_amplitude_px, motion_smoothness_px : float
        Peak in-tissue displacement of the final frame and the Gaussian
        correlation length of the synthetic motion.
    split_ratio : tuple of int
        train : val : test proportions, applied in movie-index order.
    input_repr : str
        'raw' tagged frames or 'sharp' phase-derived channels.
    reg : RegConfig
        Registration settings used when no searched config is supplied.
    search_trials : int
        Random-search budget per method.
    search_movies : int
        Validation movies scored per trial (first ones in split order).
    search_gaps : tuple of int
        Moving-frame indices scored per validation movie.
    register_gaps : tuple of int or None
        Frame pairs registered by :func:`register_dataset`; None means every
        pair (frame 0 against each later frame).
    """

    seed: int = 0
    num_movies: int = 50
    image_size: int = 96
    num_frames: int = 40
    t1_range_ms: tuple[float, float] = (800.0, 1000.0)
    tr_range_ms: tuple[float, float] = (15.0, 25.0)
    alpha_deg: float = 15.0
    tag_period_px: float = 9.6
    noise_sigma: float = 0.02
    motion_amplitude_px: float = 3.0
    motion_smoothness_px: float = 12.0
    split_ratio: tuple[int, int, int] = (6, 2, 2)
    input_repr: str = "raw"
    reg: RegConfig = dataclass_field(default_factory=RegConfig)
    search_trials: int = 30
    search_movies: int = 5
    search_gaps: tuple[int, ...] = (20, 30, 39)
    register_gaps: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.num_movies < 1:
            raise ValueError("num_movies must be >= 1")
        if self.image_size < 16:
            raise ValueError("image_size must be >= 16")
        if self.num_frames < 2:
            raise ValueError("num_frames must be >= 2")
        for name in ("t1_range_ms", "tr_range_ms"):
            lo, hi = getattr(self, name)
            if not (0.0 < lo <= hi):
                raise ValueError(f"{name} must satisfy 0 < lo <= hi")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.motion_amplitude_px < 0:
            raise ValueError("motion_amplitude_px must be >= 0")
        if self.motion_smoothness_px <= 0:
            raise ValueError("motion_smoothness_px must be > 0")
        if self.tag_period_px < 4:
            raise ValueError("tag_period_px must be >= 4 px")
        if len(self.split_ratio) != 3 or any(r <= 0 for r in self.split_ratio):
            raise ValueError("split_ratio needs three positive integers")
        split_counts(self.num_movies, self.split_ratio)
        if self.input_repr not in INPUT_REPRS:
            raise ValueError(f"input_repr must be one of {INPUT_REPRS}")
        if self.search_trials < 1:
            raise ValueError("search_trials must be >= 1")
        if self.search_movies < 1:
            raise ValueError("search_movies must be >= 1")
        for gap in self.search_gaps:
            self._check_gap(gap, "search_gaps")
        if self.register_gaps is not None:
            if not self.register_gaps:
                raise ValueError("register_gaps must be None or non-empty")
            for gap in self.register_gaps:
                self._check_gap(gap, "register_gaps")

    def _check_gap(self, gap: int, name: str) -> None:
        if not 1 <= int(gap) <= self.num_frames - 1:
            raise ValueError(
                f"{name} entries must lie in [1, {self.num_frames - 1}], got {gap}")

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "num_movies": self.num_movies,
            "image_size": self.image_size,
            "num_frames": self.num_frames,
            "t1_range_ms": list(self.t1_range_ms),
            "tr_range_ms": list(self.tr_range_ms),
            "alpha_deg": self.alpha_deg,
            "tag_period_px": self.tag_period_px,
            "noise_sigma": self.noise_sigma,
            "motion_amplitude_px": self.motion_amplitude_px,
            "motion_smoothness_px": self.motion_smoothness_px,
            "split_ratio": list(self.split_ratio),
            "input_repr": self.input_repr,
            "reg": self.reg.to_dict(),
            "search_trials": self.search_trials,
            "search_movies": self.search_movies,
            "search_gaps": list(self.search_gaps),
            "register_gaps": (None if self.register_gaps is None
                              else list(self.register_gaps)),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "reg" in data and not isinstance(data["reg"], RegConfig):
            data["reg"] = RegConfig.from_dict(data["reg"])
        for name in ("t1_range_ms", "tr_range_ms", "split_ratio",
                     "search_gaps"):
            if name in data:
                data[name] = tuple(data[name])
        if data.get("register_gaps") is not None:
            data["register_gaps"] = tuple(data["register_gaps"])
        return cls(**data)


def load_config(path) -> ExperimentConfig:
    """Read an :class:`ExperimentConfig` from a JSON file."""
    return ExperimentConfig.from_dict(read_json(path))


def split_counts(num_movies: int, ratio: tuple[int, int, int]) -> tuple[int, int, int]:
    """Integer train/val/test counts honoring the ratio, remainder to the
    earliest splits. Every split must come out non-empty: search scores on
    the validation split and the benchmark reports on the test split."""
    total = sum(ratio)
    base = [num_movies * r // total for r in ratio]
    for i in range(num_movies - sum(base)):
        base[i] += 1
    if min(base) < 1:
        raise ValueError(
            f"{num_movies} movies split {ratio[0]}:{ratio[1]}:{ratio[2]} "
            "leaves an empty split; add movies"
        )
    return tuple(base)


def _assign_splits(num_movies: int, ratio: tuple[int, int, int]) -> list[str]:
    counts = split_counts(num_movies, ratio)
    names: list[str] = []
    for split, count in zip(SPLIT_NAMES, counts):
        names.extend([split] * count)
    return names


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _spamm_pair(config: ExperimentConfig, t1: float, tr: float) -> tuple[SpammParams, SpammParams]:
    alpha = float(np.deg2rad(config.alpha_deg))
    ph = SpammParams(t1=t1, tr=tr, alpha=alpha,
                     tag_period=config.tag_period_px, direction="horizontal")
    pv = SpammParams(t1=t1, tr=tr, alpha=alpha,
                     tag_period=config.tag_period_px, direction="vertical")
    return ph, pv


def _simulate_one(config: ExperimentConfig, index: int, split: str,
                  dataset_dir: Path) -> dict:
    """Synthesize movie ``index`` (or the static phantom) and write its files."""
    static = split == STATIC_NAME
    name = STATIC_NAME if static else f"movie_{index:03d}"
    seed = derive_seed(config.seed, index)
    rng = np.random.default_rng(seed)
    t1 = float(rng.uniform(*config.t1_range_ms))
    tr = float(rng.uniform(*config.tr_range_ms))
    ph, pv = _spamm_pair(config, t1, tr)
    if static:
        movie = make_static_phantom(ph, pv, config.num_frames,
                                    config.noise_sigma, rng,
                                    size=config.image_size)
    else:
        # Keep the default tissue-to-frame proportions at any frame size.
        scale = config.image_size / 96.0
        base = AnatomyParams()
        anatomy = AnatomyParams(size=config.image_size,
                                radius=(max(2.0, base.radius[0] * scale),
                                        max(3.0, base.radius[1] * scale)))
        motion = MotionParams(amplitude=config.motion_amplitude_px,
                              smoothness_sigma=config.motion_smoothness_px,
                              num_frames=config.num_frames)
        movie = make_movie(anatomy, motion, ph, pv, config.noise_sigma, rng)

    movie_dir = dataset_dir / "movies" / name
    movie_dir.mkdir(parents=True, exist_ok=True)
    frame_files, field_files = [], []
    for n in range(config.num_frames):
        frame = np.stack([movie.frames_h[n], movie.frames_v[n]])
        fname = f"frame_{n:03d}.tmri"
        write_raster(movie_dir / fname, frame)
        frame_files.append(fname)
        gname = f"field_{n:03d}.tmri"
        write_raster(movie_dir / gname, movie.fields[n])
        field_files.append(gname)
    write_raster(movie_dir / "mask.tmri", movie.mask.astype(np.float64))
    write_raster(movie_dir / "anatomy.tmri", movie.anatomy)
    return {
        "name": name,
        "index": index,
        "seed": int(seed),
        "split": split,
        "t1_ms": t1,
        "tr_ms": tr,
        "alpha_deg": config.alpha_deg,
        "tag_period_px": config.tag_period_px,
        "noise_sigma": config.noise_sigma,
        "num_frames": config.num_frames,
        "dir": f"movies/{name}",
        "frames": frame_files,
        "fields": field_files,
        "mask": "mask.tmri",
        "anatomy": "anatomy.tmri",
    }


def simulate_dataset(config: ExperimentConfig, out_dir, jobs: int = 1) -> dict:
    """Generate the full dataset and manifest under ``out_dir``.

    Movies 0..num_movies-1 are assigned to train/val/test by the split ratio
    in index order; one static phantom sequence (index ``num_movies``) is
    appended with split ``'static'``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    splits = _assign_splits(config.num_movies, config.split_ratio)
    tasks = [(i, splits[i]) for i in range(config.num_movies)]
    tasks.append((config.num_movies, STATIC_NAME))
    entries = Parallel(n_jobs=jobs)(
        delayed(_simulate_one)(config, i, split, out_dir) for i, split in tasks)
    manifest = {"config": config.to_dict(), "movies": list(entries)}
    write_json(out_dir / "manifest.json", manifest)
    return manifest


def load_manifest(dataset_dir) -> dict:
    return read_json(Path(dataset_dir) / "manifest.json")


def manifest_movies(manifest: dict, split: str | None = None) -> list[dict]:
    """Manifest entries, optionally restricted to one split ('all' = every)."""
    movies = manifest["movies"]
    if split is None or split == "all":
        return list(movies)
    chosen = [m for m in movies if m["split"] == split]
    if not chosen:
        raise ValueError(f"no movies in split {split!r}")
    return chosen


# ---------------------------------------------------------------------------
# registration inputs
# ---------------------------------------------------------------------------

def load_frames(dataset_dir, entry: dict) -> np.ndarray:
    """All frames of one movie as an (N, 2, H, W) array (signed values)."""
    movie_dir = Path(dataset_dir) / entry["dir"]
    return np.stack([read_raster(movie_dir / f) for f in entry["frames"]])


def load_field(dataset_dir, entry: dict, n: int) -> np.ndarray:
    return read_raster(Path(dataset_dir) / entry["dir"] / entry["fields"][n])


def load_mask(dataset_dir, entry: dict) -> np.ndarray:
    mask = read_raster(Path(dataset_dir) / entry["dir"] / entry["mask"])[0]
    return mask > 0.5


def build_channels(frames: np.ndarray, input_repr: str,
                   tag_period: float) -> np.ndarray:
    """Turn stored frames into registration inputs on the [0, 1] scale.

    'raw' keeps the tagged intensities; 'sharp' replaces each channel by the
    sinusoid of its extracted harmonic phase (computed once per frame here —
    the only place the transform runs).  Both representations live in
    [-1, 1] and are affinely mapped to [0, 1] so the bounded-range losses
    see one convention.
    """
    if input_repr not in INPUT_REPRS:
        raise ValueError(f"input_repr must be one of {INPUT_REPRS}")
    frames = np.asarray(frames, dtype=np.float64)
    if input_repr == "sharp":
        out = np.empty_like(frames)
        for ch, direction in enumerate(("horizontal", "vertical")):
            extractor = SharpExtractor(tag_period=tag_period,
                                       direction=direction)
            out[:, ch] = extractor.fit_transform(frames[:, ch])
        frames = out
    return (frames + 1.0) / 2.0


def _pair_gaps(config_gaps, num_frames: int) -> list[int]:
    if config_gaps is None:
        return list(range(1, num_frames))
    return sorted(int(g) for g in config_gaps)


# ---------------------------------------------------------------------------
# register
# ---------------------------------------------------------------------------

def _register_one_movie(dataset_dir: Path, entry: dict, config: ExperimentConfig,
                        out_dir: Path) -> tuple[str, dict, dict]:
    frames = load_frames(dataset_dir, entry)
    channels = build_channels(frames, config.input_repr, config.tag_period_px)
    gaps = _pair_gaps(config.register_gaps, entry["num_frames"])
    movie_out = out_dir / entry["name"]
    movie_out.mkdir(parents=True, exist_ok=True)
    traces: dict[str, dict] = {}
    runtimes: dict[str, float] = {}
    fixed = channels[0]
    for n in gaps:
        start = time.perf_counter()
        result = register_pair(fixed, channels[n], config.reg)
        elapsed_ms = (time.perf_counter() - start) * 1000.0
        write_raster(movie_out / f"est_{n:03d}.tmri", result.field)
        traces[str(n)] = {
            "objective": [float(v) for v in result.objective_trace],
            "level_starts": [int(v) for v in result.level_starts],
        }
        runtimes[str(n)] = elapsed_ms
    return entry["name"], traces, runtimes


def register_dataset(dataset_dir, config: ExperimentConfig, out_dir, *,
                     split: str = "test", jobs: int = 1) -> dict:
    """Estimate displacement fields for every selected pair of one split.

    Writes per-movie ``est_###.tmri`` fields, a ``meta.json`` describing the
    method, objective traces, and measured per-pair runtimes.
    """
    dataset_dir = Path(dataset_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(dataset_dir)
    movies = manifest_movies(manifest, split)
    results = Parallel(n_jobs=jobs)(
        delayed(_register_one_movie)(dataset_dir, entry, config, out_dir)
        for entry in movies)
    traces = {name: tr for name, tr, _ in results}
    runtimes = {name: rt for name, _, rt in results}
    meta = {
        "input_repr": config.input_repr,
        "loss": config.reg.loss.kind,
        "split": split,
        "gaps": (None if config.register_gaps is None
                 else sorted(int(g) for g in config.register_gaps)),
        "reg": config.reg.to_dict(),
    }
    write_json(out_dir / "meta.json", meta)
    write_json(out_dir / "traces.json", traces)
    write_json(out_dir / "runtimes.json", runtimes)
    return meta


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def _pair_metrics(est: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> tuple[float, float, float]:
    pair_epe = epe(est, gt, mask)
    pair_mps = mps95(est, gt, mask)
    pair_dice = dice(warp_mask(mask, est), warp_mask(mask, gt))
    return float(pair_epe), float(pair_mps), float(pair_dice)


def _evaluate_fields_dir(dataset_dir: Path, fields_dir: Path,
                         manifest: dict) -> list[dict]:
    meta = read_json(fields_dir / "meta.json")
    runtimes = read_json(fields_dir / "runtimes.json")
    by_name = {m["name"]: m for m in manifest["movies"]}
    rows: list[dict] = []
    for entry_name in sorted(p.name for p in fields_dir.iterdir() if p.is_dir()):
        entry = by_name[entry_name]
        mask = load_mask(dataset_dir, entry)
        movie_fields = fields_dir / entry_name
        for est_path in sorted(movie_fields.glob("est_*.tmri")):
            n = int(est_path.stem.split("_")[1])
            est = read_raster(est_path)
            gt = load_field(dataset_dir, entry, n)
            pair_epe, pair_mps, pair_dice = _pair_metrics(est, gt, mask)
            rows.append({
                "movie": entry_name,
                "frame": n,
                "input_repr": meta["input_repr"],
                "loss": meta["loss"],
                "epe": pair_epe,
                "mps95": pair_mps,
                "dice": pair_dice,
                "runtime_ms": float(runtimes[entry_name][str(n)]),
            })
    return rows


def summarize_rows(rows: list[dict]) -> dict:
    """Aggregate per-pair rows into per-method mean/sd statistics.

    Keys are ``"<input_repr>/<loss>"``; statistics use the population
    standard deviation so the summary is exactly recomputable from the rows.
    """
    grouped: dict[str, list[dict]] = {}
    for row in rows:
        grouped.setdefault(f"{row['input_repr']}/{row['loss']}", []).append(row)
    summary: dict[str, dict] = {}
    for key in sorted(grouped):
        group = grouped[key]
        stats: dict[str, object] = {"num_pairs": len(group)}
        for metric in ("epe", "mps95", "dice", "runtime_ms"):
            values = np.array([row[metric] for row in group], dtype=np.float64)
            stats[f"{metric}_mean"] = float(values.mean())
            stats[f"{metric}_sd"] = float(values.std())
        summary[key] = stats
    return summary


def write_rows_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow([row[k] for k in CSV_HEADER])


def read_rows_csv(path) -> list[dict]:
    rows: list[dict] = []
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"unexpected CSV header in {path}")
        for rec in reader:
            rows.append({
                "movie": rec["movie"],
                "frame": int(rec["frame"]),
                "input_repr": rec["input_repr"],
                "loss": rec["loss"],
                "epe": float(rec["epe"]),
                "mps95": float(rec["mps95"]),
                "dice": float(rec["dice"]),
                "runtime_ms": float(rec["runtime_ms"]),
            })
    return rows


def evaluate_dataset(dataset_dir, fields_dirs, out_dir) -> dict:
    """Score one or more registration runs against the ground truth.

    Writes ``report.csv`` (one row per movie/frame pair) and ``summary.json``
    (per-method statistics).  Returns ``{"rows": ..., "summary": ...}``.
    """
    dataset_dir = Path(dataset_dir)
    if isinstance(fields_dirs, (str, Path)):
        fields_dirs = [fields_dirs]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(dataset_dir)
    rows: list[dict] = []
    for fields_dir in fields_dirs:
        rows.extend(_evaluate_fields_dir(dataset_dir, Path(fields_dir), manifest))
    summary = summarize_rows(rows)
    write_rows_csv(out_dir / "report.csv", rows)
    write_json(out_dir / "summary.json", summary)
    return {"rows": rows, "summary": summary}


# ---------------------------------------------------------------------------
# hyperparameter search
# ---------------------------------------------------------------------------

_LAMBDA_LOG_RANGE = (-3.0, 1.0)
_NCC_WINDOWS = (5, 7, 9, 11)
_MI_BINS = (16, 32, 64)
_MI_SIGMAS = (0.5, 1.0, 2.0)
_SSIM_EXPONENTS = (0.5, 1.0)
_NGF_EPSILONS = (0.005, 0.01, 0.05)
_MIND_RADII = (1, 2)


def sample_reg_config(base: RegConfig, kind: str,
                      rng: np.random.Generator) -> RegConfig:
    """Draw one random trial configuration for ``kind``.

    The smoothness weight is log-uniform over [1e-3, 10]; loss-specific
    settings are drawn uniformly from their documented candidate sets.
    """
    if kind not in LOSS_KINDS:
        raise ValueError(f"loss kind must be one of {LOSS_KINDS}")
    lam = float(10.0 ** rng.uniform(*_LAMBDA_LOG_RANGE))
    updates: dict[str, object] = {"kind": kind}
    if kind == "ncc":
        updates["ncc_window"] = int(rng.choice(_NCC_WINDOWS))
    elif kind == "mi":
        updates["mi_bins"] = int(rng.choice(_MI_BINS))
        updates["mi_parzen_sigma"] = float(rng.choice(_MI_SIGMAS))
    elif kind == "ssim":
        updates["ssim_exponents"] = tuple(
            float(rng.choice(_SSIM_EXPONENTS)) for _ in range(3))
    elif kind == "ngf":
        updates["ngf_epsilon"] = float(rng.choice(_NGF_EPSILONS))
    elif kind == "mind":
        updates["mind_patch_radius"] = int(rng.choice(_MIND_RADII))
    loss = base.loss.with_updates(**updates)
    return replace(base, loss=loss, lambda_=lam)


def _search_seed(master_seed: int, input_repr: str, kind: str) -> int:
    method_id = INPUT_REPRS.index(input_repr) * len(LOSS_KINDS) + LOSS_KINDS.index(kind)
    return derive_seed(master_seed, 1_000_003 + method_id)


def _score_trial(channel_sets, masks, gt_fields, reg: RegConfig,
                 jobs: int = 1) -> tuple[float, float]:
    """Mean Dice (selection metric) and mean EPE (tie-break) over val pairs."""
    tasks = []
    for channels, mask, fields in zip(channel_sets, masks, gt_fields):
        for n, gt in fields.items():
            tasks.append((channels[0], channels[n], mask, gt))
    results = Parallel(n_jobs=jobs)(
        delayed(_score_pair)(fx, mv, mask, gt, reg) for fx, mv, mask, gt in tasks)
    dices = [r[0] for r in results]
    epes = [r[1] for r in results]
    return float(np.mean(dices)), float(np.mean(epes))


def _score_pair(fixed, moving, mask, gt, reg: RegConfig) -> tuple[float, float]:
    result = register_pair(fixed, moving, reg)
    pair_dice = dice(warp_mask(mask, result.field), warp_mask(mask, gt))
    pair_epe = epe(result.field, gt, mask)
    return float(pair_dice), float(pair_epe)


def run_search(dataset_dir, config: ExperimentConfig, out_dir, *,
               seed: int | None = None, jobs: int = 1) -> RegConfig:
    """Random search for the best registration settings of one method.

    Each trial registers every validation pair of the search protocol
    (``search_movies`` movies x ``search_gaps`` frame pairs) and is scored by
    mean Dice of the warped masks; ties break by lower mean EPE, then lower
    trial index.  Writes ``trials.json`` and ``best.json``; returns the
    winning :class:`RegConfig`.
    """
    dataset_dir = Path(dataset_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(dataset_dir)
    val_movies = manifest_movies(manifest, "val")[:config.search_movies]
    if not val_movies:
        raise ValueError("validation split is empty")

    channel_sets, masks, gt_fields = [], [], []
    for entry in val_movies:
        frames = load_frames(dataset_dir, entry)
        channel_sets.append(build_channels(frames, config.input_repr,
                                           config.tag_period_px))
        masks.append(load_mask(dataset_dir, entry))
        gaps = [g for g in config.search_gaps if g <= entry["num_frames"] - 1]
        gt_fields.append({n: load_field(dataset_dir, entry, n) for n in gaps})

    kind = config.reg.loss.kind
    master = config.seed if seed is None else seed
    rng = np.random.default_rng(_search_seed(master, config.input_repr, kind))
    trials: list[dict] = []
    best_index = -1
    best_key: tuple[float, float, int] | None = None
    for index in range(config.search_trials):
        reg = sample_reg_config(config.reg, kind, rng)
        mean_dice, mean_epe = _score_trial(channel_sets, masks, gt_fields, reg,
                                           jobs=jobs)
        trials.append({
            "index": index,
            "reg": reg.to_dict(),
            "mean_dice": mean_dice,
            "mean_epe": mean_epe,
        })
        key = (-mean_dice, mean_epe, index)
        if best_key is None or key < best_key:
            best_key = key
            best_index = index
    best = trials[best_index]
    write_json(out_dir / "trials.json", {
        "input_repr": config.input_repr,
        "loss": kind,
        "seed": int(master),
        "trials": trials,
    })
    write_json(out_dir / "best.json", {
        "input_repr": config.input_repr,
        "loss": kind,
        "trial_index": best_index,
        "mean_dice": best["mean_dice"],
        "mean_epe": best["mean_epe"],
        "reg": best["reg"],
    })
    return RegConfig.from_dict(best["reg"])


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def format_report(summary: dict) -> str:
    """Plain-text ranking of methods by mean EPE.

    The best-by-EPE row is additionally flagged when it is also the best by
    mean MPS95 error.
    """
    if not summary:
        raise ValueError("empty summary")
    order = sorted(summary, key=lambda key: summary[key]["epe_mean"])
    best_mps = min(summary, key=lambda key: summary[key]["mps95_mean"])
    out = _io.StringIO()
    header = (f"{'rank':>4s}  {'method':<14s} {'epe':>16s} {'mps95':>16s} "
              f"{'dice':>7s} {'pairs':>6s} {'ms/pair':>9s}")
    out.write(header + "\n")
    out.write("-" * len(header) + "\n")
    for rank, key in enumerate(order, start=1):
        stats = summary[key]
        flag = "  *" if key == best_mps and rank == 1 else ""
        out.write(
            f"{rank:>4d}  {key:<14s} "
            f"{stats['epe_mean']:8.4f} ±{stats['epe_sd']:6.4f} "
            f"{stats['mps95_mean']:8.4f} ±{stats['mps95_sd']:6.4f} "
            f"{stats['dice_mean']:7.4f} {stats['num_pairs']:>6d} "
            f"{stats['runtime_ms_mean']:9.1f}{flag}\n")
    if any(key == best_mps and rank == 1
           for rank, key in enumerate(order, start=1)):
        out.write("* best by mean EPE and by mean MPS95 error\n")
    return out.getvalue()


def write_report(report_csv, out_path) -> str:
    """Render the ranking table for an evaluation CSV and write it."""
    rows = read_rows_csv(report_csv)
    text = format_report(summarize_rows(rows))
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(text)
    return text


def export_strain_maps(dataset_dir, fields_dir, movie: str, frame: int,
                       out_dir) -> list[Path]:
    """Write PGM images of estimated, true, and error strain for one pair.

    PGM scaling runs from 0 to the recorded sidecar maximum, so the strain
    maps clamp negative (compressive) principal strain at zero; the error
    map is an absolute difference and needs no clamping.
    """
    dataset_dir = Path(dataset_dir)
    fields_dir = Path(fields_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(dataset_dir)
    entry = next(m for m in manifest["movies"] if m["name"] == movie)
    est = read_raster(fields_dir / movie / f"est_{frame:03d}.tmri")
    gt = load_field(dataset_dir, entry, frame)
    est_mps = field_mps(est)
    gt_mps = field_mps(gt)
    err = np.abs(est_mps - gt_mps)
    written = []
    for label, image in (("est_mps", np.maximum(est_mps, 0.0)),
                         ("gt_mps", np.maximum(gt_mps, 0.0)),
                         ("err_mps", err)):
        path = out_dir / f"{movie}_frame{frame:03d}_{label}.pgm"
        write_pgm(path, image)
        written.append(path)
    return written
