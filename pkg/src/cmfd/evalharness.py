"""Dataset manifests, TPR/FPR, ROC sweeps over the inlier count and perturbation grids."""

from __future__ import annotations

import csv
import io
import json
import math
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .image import ImageError
from .imgio import (
    Blur,
    ForgeryGroundTruth,
    Jpeg,
    Noise,
    Perturbation,
    load_image,
    parse_perturbation,
    perturb,
    save_image,
    synth_forgery,
    textured_image,
)
from .matcher import DetectionReport, TransformModel, detect

LABELS = ("forged", "genuine")
TAMPER_FACTORS = ("naive", "rotation", "scaling", "illumination", "freeform", "combined", "none")
SYNTH_TAMPERS = ("naive", "rotation", "scaling")
ROTATIONS = (math.pi / 6, math.pi / 2, math.pi)
SCALES = (0.9, 1.1)

DEFAULT_GRID: tuple[Perturbation, ...] = (
    Blur(3, 0.5),
    Blur(3, 1.0),
    Blur(3, 2.0),
    Noise(0.0, 1.0),
    Noise(0.0, 3.0),
    Noise(0.0, 5.0),
    Jpeg(80),
    Jpeg(60),
    Jpeg(40),
)


class ManifestError(ValueError):
    pass


# ---------------------------------------------------------------- manifests


@dataclass(frozen=True)
class ManifestEntry:
    image_path: str
    label: str
    tamper_factor: str = "none"
    pair_id: str | None = None
    ground_truth: str | None = None  # optional JSON file next to synthetic images

    def __post_init__(self):
        if self.label not in LABELS:
            raise ManifestError(f"label must be one of {LABELS}, got {self.label!r}")
        if self.tamper_factor not in TAMPER_FACTORS:
            raise ManifestError(f"tamper_factor must be one of {TAMPER_FACTORS}, got {self.tamper_factor!r}")

    @property
    def forged(self) -> bool:
        return self.label == "forged"

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    # relative image paths resolve against this directory
    root: Path = field(default_factory=Path)

    def __len__(self) -> int:
        return len(self.entries)

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.image_path)
        return p if p.is_absolute() else self.root / p

    def labels(self) -> list[str]:
        return [e.label for e in self.entries]

    def factors(self) -> list[str]:
        """Tamper factors present among forged entries, in canonical order."""
        present = {e.tamper_factor for e in self.entries if e.forged}
        return [f for f in TAMPER_FACTORS if f in present]

    def subset_indices(self, tamper_factor: str | None) -> list[int]:
        """Forged entries of one factor plus every genuine entry; ``None`` keeps all."""
        return [
            i
            for i, e in enumerate(self.entries)
            if tamper_factor is None or not e.forged or e.tamper_factor == tamper_factor
        ]

    def subset(self, tamper_factor: str | None) -> DatasetManifest:
        return DatasetManifest([self.entries[i] for i in self.subset_indices(tamper_factor)], self.root)

    @classmethod
    def from_list(cls, data, root: str | Path = ".") -> DatasetManifest:
        if not isinstance(data, list):
            raise ManifestError("manifest must be a JSON array of entries")
        entries = []
        for k, item in enumerate(data):
            if not isinstance(item, dict):
                raise ManifestError(f"entry {k} is not an object")
            try:
                entries.append(
                    ManifestEntry(
                        image_path=str(item["image_path"]),
                        label=item["label"],
                        tamper_factor=item.get("tamper_factor", "none"),
                        pair_id=None if item.get("pair_id") is None else str(item["pair_id"]),
                        ground_truth=item.get("ground_truth"),
                    )
                )
            except KeyError as exc:
                raise ManifestError(f"entry {k} lacks {exc.args[0]!r}") from exc
        return cls(entries, Path(root))

    @classmethod
    def load(cls, path: str | Path) -> DatasetManifest:
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
        return cls.from_list(data, path.parent)

    def dump(self, path: str | Path) -> None:
        text = json.dumps([e.to_dict() for e in self.entries], indent=2)
        Path(path).write_text(text + "\n", encoding="utf-8")


def paired_manifest(directory: str | Path, tamper_factor: str = "combined", suffix: str = "t") -> DatasetManifest:
    """Manifest for a folder pairing ``<id>.<ext>`` originals with ``<id><suffix>.<ext>``
    forgeries, the naming used by common copy-move benchmarks."""
    directory = Path(directory)
    exts = {".png", ".jpg", ".jpeg", ".pgm"}
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in exts)
    stems = {p.stem: p for p in files}
    entries = []
    for stem, p in stems.items():
        if stem.endswith(suffix) and stem[: -len(suffix)] in stems:
            pid = stem[: -len(suffix)]
            entries.append(ManifestEntry(p.name, "forged", tamper_factor, pid))
            entries.append(ManifestEntry(stems[pid].name, "genuine", "none", pid))
    if not entries:
        raise ManifestError(f"no <id>/<id>{suffix} image pairs in {directory}")
    return DatasetManifest(entries, directory)


# ---------------------------------------------------------------- metrics


def _is_forged(verdict) -> bool:
    if isinstance(verdict, DetectionReport):
        return verdict.forged
    if isinstance(verdict, str):
        if verdict not in LABELS:
            raise ValueError(f"unknown verdict {verdict!r}")
        return verdict == "forged"
    return bool(verdict)


def compute_metrics(results: Iterable[tuple]) -> tuple[float | None, float | None]:
    """``(TPR, FPR)`` over ``(verdict, label)`` items.

    A verdict is a DetectionReport, the strings ``forged``/``genuine`` or a
    bool meaning flagged as forged. A rate whose denominator is zero is None.
    """
    tp = n_forged = fp = n_genuine = 0
    for verdict, label in results:
        if label not in LABELS:
            raise ValueError(f"unknown label {label!r}")
        flagged = _is_forged(verdict)
        if label == "forged":
            n_forged += 1
            tp += flagged
        else:
            n_genuine += 1
            fp += flagged
    tpr = tp / n_forged if n_forged else None
    fpr = fp / n_genuine if n_genuine else None
    return tpr, fpr


@dataclass(frozen=True)
class RocPoint:
    fpr: float
    tpr: float
    tau: int


@dataclass
class RocCurve:
    points: list[RocPoint]
    auc: float

    def best_tpr(self, max_fpr: float) -> float:
        """Highest TPR among operating points with FPR <= ``max_fpr``."""
        return max((p.tpr for p in self.points if p.fpr <= max_fpr), default=0.0)

    def point_at(self, tau: int) -> RocPoint:
        for p in self.points:
            if p.tau == tau:
                return p
        raise KeyError(tau)


def roc_from_scores(scores: Sequence[float], labels: Sequence[str]) -> RocCurve:
    """Sweep ``tau`` over 0 .. max(score) + 1, flagging ``score >= tau``.

    ``tau = 0`` flags everything (1, 1); ``max + 1`` flags nothing (0, 0).
    Points are ordered by decreasing ``tau``, i.e. nondecreasing FPR and TPR,
    and the area is the trapezoid rule over them.
    """
    scores = np.asarray(scores, dtype=np.float64)
    forged = np.array([lab == "forged" for lab in labels])
    if scores.shape != forged.shape:
        raise ValueError("scores and labels differ in length")
    n_pos, n_neg = int(forged.sum()), int((~forged).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("an ROC needs both forged and genuine entries")
    top = int(math.ceil(scores.max())) if scores.size else 0
    points = []
    for tau in range(top + 1, -1, -1):
        flagged = scores >= tau
        points.append(
            RocPoint(
                fpr=float(np.count_nonzero(flagged & ~forged)) / n_neg,
                tpr=float(np.count_nonzero(flagged & forged)) / n_pos,
                tau=tau,
            )
        )
    auc = 0.0
    for p, q in zip(points, points[1:]):
        auc += (q.fpr - p.fpr) * (p.tpr + q.tpr) / 2.0
    return RocCurve(points, auc)


# ---------------------------------------------------------------- sweeps


@dataclass
class EntryResult:
    index: int
    score: int | None  # inlier count; None when the entry failed
    verdict: str | None = None
    error: str | None = None
    model: dict | None = None


@dataclass
class SweepResult:
    curve: RocCurve | None
    results: list[EntryResult]

    @property
    def errors(self) -> list[EntryResult]:
        return [r for r in self.results if r.error is not None]


def entry_seed(seed: int, index: int) -> int:
    """Independent perturbation seed for manifest entry ``index``."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # map yields in submission order regardless of completion order
        return list(pool.map(fn, items))


def score_manifest(
    manifest: DatasetManifest,
    config: RunConfig | None = None,
    seed: int = 0,
    op: Perturbation | None = None,
    workers: int = 1,
    images: Sequence[np.ndarray] | None = None,
) -> list[EntryResult]:
    """Detect once per entry (after ``op``, when given) and keep the inlier count.

    ``images`` may supply already decoded images in manifest order.
    """
    config = config or RunConfig()

    def run(i: int) -> EntryResult:
        entry = manifest.entries[i]
        try:
            img = images[i] if images is not None else load_image(manifest.resolve(entry))
            if op is not None:
                img = perturb(img, op, entry_seed(seed, i))
            report = detect(img, config, seed)
        except (ImageError, ValueError) as exc:
            return EntryResult(i, None, error=str(exc))
        return EntryResult(i, report.score, report.verdict, model=report.model.to_dict() if report.model else None)

    return _map(run, list(range(len(manifest))), workers)


def curve_from_results(manifest: DatasetManifest, results: Sequence[EntryResult], indices=None) -> RocCurve | None:
    indices = range(len(manifest)) if indices is None else indices
    ok = [i for i in indices if results[i].score is not None]
    labels = [manifest.entries[i].label for i in ok]
    if "forged" not in labels or "genuine" not in labels:
        return None
    return roc_from_scores([results[i].score for i in ok], labels)


def roc_sweep(
    manifest: DatasetManifest,
    config: RunConfig | None = None,
    seed: int = 0,
    op: Perturbation | None = None,
    workers: int = 1,
    images: Sequence[np.ndarray] | None = None,
) -> SweepResult:
    """One detection per image, then the full tau sweep over cached inlier counts.

    Entries that fail to load or process are excluded from the rates and
    listed in the result.
    """
    if not len(manifest):
        raise ManifestError("empty manifest")
    results = score_manifest(manifest, config, seed, op, workers, images)
    return SweepResult(curve_from_results(manifest, results), results)


def robustness_grid(
    manifest: DatasetManifest,
    grid: Sequence[Perturbation] = DEFAULT_GRID,
    config: RunConfig | None = None,
    seed: int = 0,
    workers: int = 1,
    images: Sequence[np.ndarray] | None = None,
) -> dict[tuple[str, float], SweepResult]:
    """One ROC sweep per perturbation cell, keyed by ``(op name, param)``."""
    return {(op.name, op.param): roc_sweep(manifest, config, seed, op, workers, images) for op in grid}


def parse_grid(text: str) -> tuple[Perturbation, ...]:
    """``default`` or a comma list such as ``blur:3:1,noise:0:3,jpeg:60``."""
    if text.strip() == "default":
        return DEFAULT_GRID
    return tuple(parse_perturbation(t) for t in text.split(",") if t.strip())


# ---------------------------------------------------------------- full evaluation


@dataclass
class CellReport:
    subset: str
    op: str
    param: float | None
    curve: RocCurve | None
    n_forged: int
    n_genuine: int


@dataclass
class Evaluation:
    cells: list[CellReport]
    # per (op, param): per-entry results in manifest order
    results: dict[tuple[str, float | None], list[EntryResult]]

    def cell(self, subset: str = "all", op: str = "none", param=None) -> CellReport:
        for c in self.cells:
            if c.subset == subset and c.op == op and c.param == param:
                return c
        raise KeyError((subset, op, param))


def evaluate(
    manifest: DatasetManifest,
    config: RunConfig | None = None,
    seed: int = 0,
    grid: Sequence[Perturbation] = (),
    workers: int = 1,
    per_factor: bool = True,
) -> Evaluation:
    """Clean sweep plus one sweep per grid cell; each is reported on the whole
    manifest and, with ``per_factor``, on every tamper-factor subset."""
    config = config or RunConfig()
    subsets: list[tuple[str, list[int]]] = [("all", list(range(len(manifest))))]
    if per_factor:
        factors = manifest.factors()
        if len(factors) > 1:
            subsets += [(f, manifest.subset_indices(f)) for f in factors]

    runs: list[tuple[str, float | None, Perturbation | None]] = [("none", None, None)]
    runs += [(op.name, op.param, op) for op in grid]
    cells, results = [], {}
    for name, param, op in runs:
        res = score_manifest(manifest, config, seed, op, workers)
        results[(name, param)] = res
        for subset, idx in subsets:
            ok = [i for i in idx if res[i].score is not None]
            cells.append(
                CellReport(
                    subset,
                    name,
                    param,
                    curve_from_results(manifest, res, idx),
                    sum(manifest.entries[i].forged for i in ok),
                    sum(not manifest.entries[i].forged for i in ok),
                )
            )
    return Evaluation(cells, results)


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, float) else str(v)


def roc_csv(ev: Evaluation) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["subset", "op", "param", "tau", "fpr", "tpr"])
    for c in ev.cells:
        if c.curve is None:
            continue
        for p in c.curve.points:
            writer.writerow([c.subset, c.op, _fmt(c.param), p.tau, repr(p.fpr), repr(p.tpr)])
    return buf.getvalue()


def summary_dict(ev: Evaluation, manifest: DatasetManifest, config: RunConfig, seed: int) -> dict:
    clean = ev.results[("none", None)]
    return {
        "seed": seed,
        "config": config.to_dict(),
        "cells": [
            {
                "subset": c.subset,
                "op": c.op,
                "param": c.param,
                "auc": None if c.curve is None else c.curve.auc,
                "n_forged": c.n_forged,
                "n_genuine": c.n_genuine,
            }
            for c in ev.cells
        ],
        "entries": [
            {
                "image_path": e.image_path,
                "label": e.label,
                "tamper_factor": e.tamper_factor,
                "inliers": r.score,
                "verdict": r.verdict,
                "model": r.model,
            }
            for e, r in zip(manifest.entries, clean)
        ],
        "errors": [
            {"op": op, "param": param, "image_path": manifest.entries[r.index].image_path, "error": r.error}
            for (op, param), res in ev.results.items()
            for r in res
            if r.error is not None
        ],
    }


def write_outputs(
    out_dir: str | Path, ev: Evaluation, manifest: DatasetManifest, config: RunConfig, seed: int, plot: bool = False
) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [out_dir / "roc.csv", out_dir / "summary.json"]
    written[0].write_text(roc_csv(ev), encoding="utf-8")
    summary = json.dumps(summary_dict(ev, manifest, config, seed), indent=2, sort_keys=True)
    written[1].write_text(summary + "\n", encoding="utf-8")
    if plot:
        written.append(plot_roc(ev, out_dir / "roc.svg"))
    return written


def plot_roc(ev: Evaluation, path: str | Path) -> Path:
    """ROC curves of every evaluated cell, as a reproducible SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "cmfd"
    fig, ax = plt.subplots(figsize=(6, 6))
    for c in ev.cells:
        if c.curve is None:
            continue
        label = c.subset if c.op == "none" else f"{c.subset} {c.op}={_fmt(c.param)}"
        ax.plot([p.fpr for p in c.curve.points], [p.tpr for p in c.curve.points], label=f"{label} ({c.curve.auc:.3f})")
    ax.plot([0, 1], [0, 1], color="0.7", lw=0.8, ls="--")
    ax.set(xlabel="FPR", ylabel="TPR", xlim=(0, 1), ylim=(0, 1.02))
    ax.legend(fontsize=7, loc="lower right")
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(path)


# ---------------------------------------------------------------- synthetic corpora


def transform_error(model: TransformModel | None, gt: ForgeryGroundTruth) -> float:
    """Distance between where the model sends the source centre and the pasted
    centre, taking either side as the model's domain (pairs are stored by
    coordinate order, so the model may map copy -> source)."""
    if model is None:
        return math.inf
    src = np.asarray(gt.source_center)
    dst = np.asarray(gt.dest_center)
    fwd = np.linalg.norm(model.apply(src)[0] - dst)
    back = np.linalg.norm(model.apply(dst)[0] - src)
    return float(min(fwd, back))


def random_forgery(rng: np.random.Generator, tamper: str, size: int = 512, patch: int = 64) -> ForgeryGroundTruth:
    """Draw a copy-move geometry inside a ``size`` square image.

    ``naive`` moves the patch by an integer offset of 50 px or more.
    ``rotation`` and ``scaling`` draw from the fixed factor sets and keep the
    source and the copy apart along x, so every pair stores the source and the
    copy on consistent sides.
    """
    if tamper not in SYNTH_TAMPERS:
        raise ValueError(f"tamper must be one of {SYNTH_TAMPERS}, got {tamper!r}")
    rotation = float(ROTATIONS[rng.integers(len(ROTATIONS))]) if tamper == "rotation" else 0.0
    scale = float(SCALES[rng.integers(len(SCALES))]) if tamper == "scaling" else 1.0
    margin = 12
    half_src = (patch - 1) / 2.0
    half_dst = scale * patch * (abs(math.cos(rotation)) + abs(math.sin(rotation))) / 2.0
    lo, hi = margin + half_dst, size - 1 - margin - half_dst
    for _ in range(10_000):
        x = int(rng.integers(margin, size - margin - patch + 1))
        y = int(rng.integers(margin, size - margin - patch + 1))
        cx, cy = x + half_src, y + half_src
        if tamper == "naive":
            dist = rng.uniform(50.0, 160.0)
            ang = rng.uniform(0.0, 2 * math.pi)
            dx, dy = int(round(dist * math.cos(ang))), int(round(dist * math.sin(ang)))
            if math.hypot(dx, dy) < 50:
                continue
        else:
            gap = half_src + half_dst + 4
            dx = int(rng.integers(int(math.ceil(gap)), int(gap) + 160)) * (1 if rng.random() < 0.5 else -1)
            dy = int(rng.integers(-60, 61))
        dest = (cx + dx, cy + dy)
        if lo <= dest[0] <= hi and lo <= dest[1] <= hi:
            return ForgeryGroundTruth((x, y, patch, patch), dest, rotation, scale)
    raise RuntimeError("could not place the copy; image too small for the patch")


@dataclass
class SuiteItem:
    image: np.ndarray
    label: str
    tamper_factor: str
    pair_id: str
    ground_truth: ForgeryGroundTruth | None = None


def synth_suite(n: int, seed: int = 0, tamper: str = "naive", size: int = 512, patch: int = 64) -> list[SuiteItem]:
    """``n`` forged images followed by their ``n`` untouched originals.

    Base textures depend on ``seed`` and the pair index only, so suites with
    different tamper factors share the same genuine images.
    """
    if tamper not in SYNTH_TAMPERS:
        raise ValueError(f"tamper must be one of {SYNTH_TAMPERS}, got {tamper!r}")
    tex_seeds = np.random.SeedSequence([seed, 0]).generate_state(n) if n else []
    rng = np.random.default_rng([seed, 1, SYNTH_TAMPERS.index(tamper)])
    forged, genuine = [], []
    for k in range(n):
        base = textured_image(size, int(tex_seeds[k]))
        gt = random_forgery(rng, tamper, size, patch)
        img, gt = synth_forgery(base, gt)
        pid = f"{k:04d}"
        forged.append(SuiteItem(img, "forged", tamper, pid, gt))
        genuine.append(SuiteItem(base, "genuine", "none", pid))
    return forged + genuine


def write_corpus(out_dir: str | Path, items: Sequence[SuiteItem], fmt: str = "png") -> DatasetManifest:
    """Save images (plus ground-truth JSON for forged ones) and a ``manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for item in items:
        stem = f"{item.pair_id}_{item.label}"
        name = f"{stem}.{fmt}"
        save_image(out_dir / name, item.image)
        gt_name = None
        if item.ground_truth is not None:
            gt_name = f"{stem}.json"
            item.ground_truth.dump(out_dir / gt_name)
        entries.append(ManifestEntry(name, item.label, item.tamper_factor, item.pair_id, gt_name))
    manifest = DatasetManifest(entries, out_dir)
    manifest.dump(out_dir / "manifest.json")
    return manifest
