"""Candidate matching of descriptors, RANSAC verification and the image-level verdict."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .config import MODEL_KINDS, RunConfig
from .descriptor import Descriptor, describe_level
from .harris import Keypoint, harris_response, level_keypoints
from .image import MIN_SIDE, as_gray
from .orient import orient_points
from .scalespace import build_pyramid, level_to_original

MIN_SAMPLE = {"translation": 1, "similarity": 2, "affine": 3}


def map_to_original(kp: Keypoint, beta: float) -> tuple[float, float]:
    return level_to_original(kp.x, kp.y, kp.octave, beta)


@dataclass(frozen=True)
class MatchPair:
    a: tuple[float, float]
    b: tuple[float, float]
    block_distances: tuple[float, float, float, float]
    # keypoint orientations at a and b, when known
    theta_a: float | None = None
    theta_b: float | None = None

    @property
    def distance(self) -> float:
        return math.sqrt(sum(d * d for d in self.block_distances))

    @property
    def spatial(self) -> float:
        return math.hypot(self.b[0] - self.a[0], self.b[1] - self.a[1])

    def to_dict(self) -> dict:
        out = {"a": list(self.a), "b": list(self.b), "block_distances": list(self.block_distances)}
        if self.theta_a is not None:
            out["theta_a"], out["theta_b"] = self.theta_a, self.theta_b
        return out


def _block_slices(sizes) -> list[slice]:
    edges = np.concatenate([[0], np.cumsum(sizes)])
    return [slice(int(lo), int(hi)) for lo, hi in zip(edges[:-1], edges[1:])]


def _index_blocks(eps: np.ndarray) -> np.ndarray:
    # search on the tightest blocks only; the block test afterwards is exact
    return np.nonzero(eps <= 4.0 * eps.min())[0]


def _radius_pairs(vectors: np.ndarray, radius: float, groups) -> np.ndarray:
    if groups is None:
        return cKDTree(vectors).query_pairs(radius, output_type="ndarray")
    groups = np.asarray(groups)
    found = []
    for g in np.unique(groups):
        idx = np.nonzero(groups == g)[0]
        if idx.size < 2:
            continue
        local = cKDTree(vectors[idx]).query_pairs(radius, output_type="ndarray")
        if local.size:
            found.append(idx[local])
    if not found:
        return np.empty((0, 2), dtype=np.intp)
    return np.vstack(found)


def match_vectors(
    vectors: np.ndarray,
    coords: np.ndarray,
    eps=0.3,
    d_min: float = 10.0,
    block_sizes=(59, 14, 16, 4),
    groups=None,
    thetas=None,
) -> list[MatchPair]:
    """All pairs whose four block distances are each below ``eps`` and whose
    original-frame positions lie at least ``d_min`` apart.

    ``groups`` optionally labels each row (e.g. its pyramid level); only rows
    sharing a label are paired. A pair passing the per-block test has
    full-vector distance below the norm of the threshold vector, so a KD-tree
    radius query over the tightest blocks finds every candidate. Pairs with
    identical endpoints keep the smallest distance.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    eps = np.broadcast_to(np.asarray(eps, dtype=np.float64), (4,))
    if len(vectors) < 2:
        return []
    slices = _block_slices(block_sizes)
    index = _index_blocks(eps)
    sub = np.hstack([vectors[:, slices[k]] for k in index])
    pairs = _radius_pairs(sub, float(np.sqrt(np.sum(eps[index] ** 2))), groups)
    if pairs.size == 0:
        return []
    i, j = pairs[:, 0], pairs[:, 1]
    ok = np.hypot(*(coords[i] - coords[j]).T) >= d_min
    i, j = i[ok], j[ok]
    # cheapest blocks first; each test shrinks the set the next one scans
    dists = np.zeros((i.size, 4))
    for k in sorted(range(4), key=lambda k: slices[k].stop - slices[k].start):
        s = slices[k]
        diff = vectors[i, s] - vectors[j, s]
        dk = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        ok = dk < eps[k]
        dists = dists[ok]
        dists[:, k] = dk[ok]
        i, j = i[ok], j[ok]

    ca, cb = coords[i], coords[j]
    swap = (ca[:, 0] > cb[:, 0]) | ((ca[:, 0] == cb[:, 0]) & (ca[:, 1] > cb[:, 1]))
    i, j = np.where(swap, j, i), np.where(swap, i, j)
    ca, cb = coords[i], coords[j]
    # same left-to-right sum as MatchPair.distance, so sorting agrees with it
    sq = dists * dists
    total = np.sqrt(((sq[:, 0] + sq[:, 1]) + sq[:, 2]) + sq[:, 3])
    tail = (dists[:, 3], dists[:, 2], dists[:, 1], dists[:, 0])
    # keep the closest pair per (a, b) endpoint set, then order by distance
    order = np.lexsort(tail + (total, cb[:, 1], cb[:, 0], ca[:, 1], ca[:, 0]))
    ends = np.hstack([ca, cb])[order]
    first = np.ones(order.size, dtype=bool)
    first[1:] = np.any(ends[1:] != ends[:-1], axis=1)
    keep = order[first]
    keys = tuple(x[keep] for x in tail) + (cb[keep, 1], cb[keep, 0], ca[keep, 1], ca[keep, 0], total[keep])
    keep = keep[np.lexsort(keys)]

    th = None if thetas is None else np.asarray(thetas, dtype=np.float64)
    out = []
    for k, ii, jj in zip(keep.tolist(), i[keep].tolist(), j[keep].tolist()):
        out.append(
            MatchPair(
                tuple(coords[ii].tolist()),
                tuple(coords[jj].tolist()),
                tuple(dists[k].tolist()),
                None if th is None else float(th[ii]),
                None if th is None else float(th[jj]),
            )
        )
    return out


def match_features(descs: Sequence[Descriptor], eps=0.3, d_min: float = 10.0, same_level: bool = False) -> list[MatchPair]:
    if len(descs) < 2:
        return []
    sizes = (len(descs[0].v1), len(descs[0].v2), len(descs[0].v3), len(descs[0].v4))
    vectors = np.stack([d.vector for d in descs])
    coords = np.array([(d.x, d.y) for d in descs])
    groups = [d.level for d in descs] if same_level else None
    if groups is not None:
        groups = np.array([g[0] * 1000 + g[1] if g is not None else -1 for g in groups])
    thetas = None
    if all(d.theta is not None for d in descs):
        thetas = [d.theta for d in descs]
    return match_vectors(vectors, coords, eps, d_min, sizes, groups, thetas)


# ---------------------------------------------------------------- geometric models


@dataclass(frozen=True)
class TransformModel:
    """Maps ``a`` points onto ``b`` points.

    translation: (tx, ty); similarity: (s cos r, s sin r, tx, ty);
    affine: (a11, a12, a21, a22, tx, ty).
    """

    kind: str
    parameters: tuple[float, ...]
    inlier_tolerance: float = 3.0

    def __post_init__(self):
        expected = {"translation": 2, "similarity": 4, "affine": 6}[self.kind]
        if len(self.parameters) != expected:
            raise ValueError(f"{self.kind} model needs {expected} parameters")

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        p = self.parameters
        if self.kind == "translation":
            return np.eye(2), np.array(p)
        if self.kind == "similarity":
            c, s, tx, ty = p
            return np.array([[c, -s], [s, c]]), np.array([tx, ty])
        a11, a12, a21, a22, tx, ty = p
        return np.array([[a11, a12], [a21, a22]]), np.array([tx, ty])

    def apply(self, points) -> np.ndarray:
        A, t = self.matrix()
        return np.asarray(points, dtype=np.float64).reshape(-1, 2) @ A.T + t

    def residuals(self, a, b) -> np.ndarray:
        return np.linalg.norm(self.apply(a) - np.asarray(b, dtype=np.float64).reshape(-1, 2), axis=1)

    @property
    def scale(self) -> float:
        A, _ = self.matrix()
        return float(math.sqrt(abs(np.linalg.det(A))))

    @property
    def rotation(self) -> float:
        A, _ = self.matrix()
        return float(math.atan2(A[1, 0] - A[0, 1], A[0, 0] + A[1, 1]) % (2 * math.pi))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "parameters": list(self.parameters), "inlier_tolerance": self.inlier_tolerance}


def fit_model(kind: str, a: np.ndarray, b: np.ndarray) -> tuple[float, ...] | None:
    """Least-squares a -> b fit; ``None`` when the points are degenerate for ``kind``."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    n = len(a)
    if n < MIN_SAMPLE[kind]:
        return None
    if kind == "translation":
        return tuple((b - a).mean(axis=0).tolist())
    if kind == "similarity":
        # x' = c x - s y + tx ; y' = s x + c y + ty
        rows = np.zeros((2 * n, 4))
        rows[0::2] = np.column_stack([a[:, 0], -a[:, 1], np.ones(n), np.zeros(n)])
        rows[1::2] = np.column_stack([a[:, 1], a[:, 0], np.zeros(n), np.ones(n)])
    else:
        rows = np.zeros((2 * n, 6))
        rows[0::2, 0:2] = a
        rows[0::2, 4] = 1
        rows[1::2, 2:4] = a
        rows[1::2, 5] = 1
    sol, _, rank, _ = np.linalg.lstsq(rows, b.reshape(-1), rcond=None)
    if rank < rows.shape[1]:
        return None
    return tuple(sol.tolist())


def _plausible(model: TransformModel, scale_range) -> bool:
    if model.kind == "translation" or scale_range is None:
        return True
    lo, hi = scale_range
    A, _ = model.matrix()
    sv = np.linalg.svd(A, compute_uv=False)
    return lo <= sv[-1] and sv[0] <= hi


def correspondence_clusters(pairs: Sequence[MatchPair], radius: float) -> np.ndarray:
    """Label pairs that repeat one correspondence: both endpoints within ``radius``
    (Chebyshev) of an earlier pair in list order. Labels are representative indices."""
    n = len(pairs)
    labels = np.arange(n)
    if n < 2 or radius <= 0:
        return labels
    pts = np.array([(*p.a, *p.b) for p in pairs], dtype=np.float64)
    close = cKDTree(pts).query_pairs(radius, p=np.inf, output_type="ndarray")
    if close.size == 0:
        return labels
    close.sort(axis=1)
    order = np.lexsort((close[:, 0], close[:, 1]))
    later_to_earlier: dict[int, list[int]] = {}
    for i, j in close[order].tolist():
        later_to_earlier.setdefault(j, []).append(i)
    for j in range(n):
        for i in later_to_earlier.get(j, ()):
            if labels[i] == i:
                labels[j] = i
                break
    return labels


def _local_pools(a: np.ndarray, b: np.ndarray, ra: float, rb: float, turn=None, cos_tol: float = -1.0) -> list[np.ndarray]:
    """For each pair, the other pairs whose a and b endpoints lie within ``ra`` and
    ``rb`` of its own and, when ``turn`` is given, whose orientation turn agrees."""
    n = len(a)
    pa = cKDTree(a).query_pairs(ra, output_type="ndarray")
    pb = cKDTree(b).query_pairs(rb, output_type="ndarray")
    if pa.size and pb.size:
        both = np.intersect1d(pa[:, 0] * n + pa[:, 1], pb[:, 0] * n + pb[:, 1])
    else:
        both = np.empty(0, dtype=np.intp)
    i, j = both // n, both % n
    if turn is not None:
        ok = np.cos(turn[i] - turn[j]) >= cos_tol
        i, j = i[ok], j[ok]
    src = np.concatenate([i, j])
    dst = np.concatenate([j, i])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    bounds = np.searchsorted(src, np.arange(n + 1))
    return [dst[bounds[k] : bounds[k + 1]] for k in range(n)]


def ransac_filter(
    pairs: Sequence[MatchPair],
    model_kind: str = "similarity",
    iterations: int = 1000,
    tol: float = 3.0,
    seed: int = 0,
    local_radius: float = 0.0,
    scale_range: tuple[float, float] | None = (0.5, 2.0),
    merge_radius: float = 0.0,
    angle_tol: float = 0.0,
) -> tuple[TransformModel | None, list[MatchPair]]:
    """Seeded RANSAC over a -> b transforms.

    With ``local_radius > 0`` the samples after the first are drawn among pairs
    whose endpoints both lie near the first pair's endpoints (and turn the same
    way, when orientations are used), and the first pair is drawn with
    probability proportional to the size of that pool: a copied region yields
    dense, coherent clusters of pairs, scattered false matches do not.
    Hypotheses whose linear part scales outside ``scale_range`` are skipped.
    With ``merge_radius > 0``, pairs repeating one correspondence (the same
    physical point found on several pyramid levels) count once, and only the
    first of them in list order is reported. With ``angle_tol > 0`` and
    orientations on every pair, an inlier must also turn ``theta_a`` into
    ``theta_b`` by the model's rotation, within ``angle_tol`` radians.

    Returns ``(None, [])`` for too few pairs or when no sample yields a model.
    """
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}")
    k = MIN_SAMPLE[model_kind]
    n = len(pairs)
    if n < k:
        return None, []
    a = np.array([p.a for p in pairs], dtype=np.float64)
    b = np.array([p.b for p in pairs], dtype=np.float64)
    labels = correspondence_clusters(pairs, merge_radius)
    merged = bool(np.any(labels != np.arange(n)))
    rng = np.random.default_rng(seed)

    turn = None
    if angle_tol > 0 and all(p.theta_a is not None and p.theta_b is not None for p in pairs):
        turn = np.array([p.theta_b - p.theta_a for p in pairs], dtype=np.float64)
    cos_tol = math.cos(angle_tol)

    def inliers(model: TransformModel) -> np.ndarray:
        mask = model.residuals(a, b) <= tol
        if turn is not None:
            mask &= np.cos(turn - model.rotation) >= cos_tol
        return mask

    def support(mask: np.ndarray) -> int:
        if not merged:
            return int(np.count_nonzero(mask))
        hit = np.zeros(n, dtype=bool)
        hit[labels[mask]] = True
        return int(np.count_nonzero(hit))

    pools = None
    if k > 1 and local_radius > 0:
        rb = local_radius * (scale_range[1] if scale_range else 1.0)
        pools = _local_pools(a, b, local_radius, rb, turn, cos_tol)
        weight = np.array([p.size if p.size >= k - 1 else 0 for p in pools], dtype=np.float64)
        if weight.sum() == 0:
            return None, []
        cdf = np.cumsum(weight) / weight.sum()

    best_params, best_count = None, 0
    for _ in range(iterations):
        if pools is None:
            idx = rng.choice(n, size=k, replace=False) if k > 1 else rng.integers(n, size=1)
        else:
            first = min(int(np.searchsorted(cdf, rng.random(), side="right")), n - 1)
            idx = np.concatenate([[first], rng.choice(pools[first], size=k - 1, replace=False)])
        params = fit_model(model_kind, a[idx], b[idx])
        if params is None:
            continue
        hyp = TransformModel(model_kind, params, tol)
        if not _plausible(hyp, scale_range):
            continue
        count = support(inliers(hyp))
        if count > best_count:
            best_params, best_count = params, count
    if best_params is None:
        return None, []

    model = TransformModel(model_kind, best_params, tol)
    mask = inliers(model)
    # refit on the consensus set; keep a refit only if it does not lose support
    for _ in range(5):
        params = fit_model(model_kind, a[mask], b[mask])
        if params is None:
            break
        refit = TransformModel(model_kind, params, tol)
        new_mask = inliers(refit)
        if support(new_mask) < support(mask):
            break
        converged = np.array_equal(new_mask, mask)
        model, mask = refit, new_mask
        if converged:
            break

    keep, seen = [], set()
    for idx in np.nonzero(mask)[0].tolist():
        if labels[idx] in seen:
            continue
        seen.add(labels[idx])
        keep.append(pairs[idx])
    return model, keep


# ---------------------------------------------------------------- pipeline


@dataclass
class DetectionReport:
    verdict: str
    candidates: int
    inliers: list[MatchPair]
    model: TransformModel | None
    seed: int
    keypoints: int = 0
    config: dict = field(default_factory=dict)

    @property
    def forged(self) -> bool:
        return self.verdict == "forged"

    @property
    def score(self) -> int:
        return len(self.inliers)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "keypoints": self.keypoints,
            "candidates": self.candidates,
            "inliers": [p.to_dict() for p in self.inliers],
            "model": self.model.to_dict() if self.model else None,
            "seed": self.seed,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass
class Features:
    """Per-image keypoints and their descriptor matrix (one row per keypoint)."""

    keypoints: list[Keypoint]
    vectors: np.ndarray
    coords: np.ndarray  # original-frame (X, Y)
    levels: np.ndarray  # (octave - 1) * intervals + (interval - 1)

    def descriptors(self, sizes=(59, 14, 16, 4)) -> list[Descriptor]:
        return [
            Descriptor.from_vector(v, X, Y, sizes, level=(kp.octave, kp.interval), theta=kp.theta)
            for v, (X, Y), kp in zip(self.vectors, self.coords, self.keypoints)
        ]


def extract_features(img: np.ndarray, cfg: RunConfig | None = None) -> Features:
    """Pyramid -> scaled Harris points -> orientation -> descriptors."""
    cfg = cfg or RunConfig()
    dc = cfg.descriptor
    pyr = build_pyramid(img, cfg.pyramid)
    kps, rows, coords, levels = [], [], [], []
    for o, octave in enumerate(pyr.levels, start=1):
        for i, level in enumerate(octave, start=1):
            cr = harris_response(level, cfg.harris)
            xs, ys = level_keypoints(cr, cfg.harris)
            if xs.size == 0:
                continue
            thetas = orient_points(level, xs, ys, dc.orientation_radius, dc.refine_orientation)
            rows.append(describe_level(level, xs, ys, thetas, dc))
            X, Y = level_to_original(xs.astype(np.float64), ys.astype(np.float64), o, pyr.beta)
            coords.append(np.column_stack([X, Y]))
            levels.append(np.full(xs.size, (o - 1) * pyr.intervals + (i - 1)))
            kps.extend(
                Keypoint(float(x), float(y), o, i, float(cr[y, x]), float(t))
                for x, y, t in zip(xs.tolist(), ys.tolist(), thetas.tolist())
            )
    if not kps:
        return Features([], np.zeros((0, dc.length)), np.zeros((0, 2)), np.zeros(0, dtype=int))
    return Features(kps, np.vstack(rows), np.vstack(coords), np.concatenate(levels))


def find_candidates(feats: Features, cfg: RunConfig) -> list[MatchPair]:
    mc = cfg.matcher
    groups = feats.levels if mc.same_level else None
    thetas = [kp.theta for kp in feats.keypoints]
    return match_vectors(
        feats.vectors, feats.coords, mc.eps_vector(), mc.d_min, cfg.descriptor.block_sizes, groups, thetas
    )


def detect(img: np.ndarray, cfg: RunConfig | None = None, seed: int | None = None) -> DetectionReport:
    """Full pipeline on one image; forged iff RANSAC keeps at least ``tau_match`` pairs."""
    cfg = cfg or RunConfig()
    seed = cfg.seed if seed is None else seed
    mc = cfg.matcher
    img = as_gray(img, MIN_SIDE)
    feats = extract_features(img, cfg)
    pairs = find_candidates(feats, cfg)
    model, inliers = ransac_filter(
        pairs,
        mc.model,
        mc.iterations,
        mc.tol,
        seed,
        mc.local_radius,
        mc.scale_range,
        mc.merge_radius,
        math.radians(mc.angle_tol_deg),
    )
    return DetectionReport(
        verdict="forged" if len(inliers) >= mc.tau_match else "genuine",
        candidates=len(pairs),
        inliers=inliers,
        model=model,
        seed=seed,
        keypoints=len(feats.keypoints),
        config=cfg.to_dict(),
    )
