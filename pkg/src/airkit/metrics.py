"""Quality and diversity metrics plus the diagnostic comparisons.

Distances follow the embedding conventions of the rest of the package:
float32 storage, float64 accumulation, cosine undefined below the 1e-12
norm threshold. Every operation here is reentrant; nothing mutates its
inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backends import EncoderBackend
from .embeddings import ZERO_NORM_THRESHOLD, mean_rows, vector_values
from .errors import (
    BadMatrixError,
    ConfigError,
    DimMismatchError,
    EmptySetError,
    KTooLargeError,
    NonPSDError,
    RangeError,
    ZeroNormError,
)
from .fileio import atomic_write_text

_SYM_TOL = 1e-8


def _cos(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimMismatchError(f"cosine operands have shapes {u.shape} and {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu < ZERO_NORM_THRESHOLD or nv < ZERO_NORM_THRESHOLD:
        raise ZeroNormError(f"cosine undefined for norms {nu!r}, {nv!r}")
    return float(np.dot(u, v) / (nu * nv))


def _as_matrix(vectors, *, what: str) -> np.ndarray:
    """Accept a list of embedding vectors or an (n, d) array."""
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        rows = vectors.astype(np.float64)
    else:
        items = list(vectors)
        if not items:
            raise EmptySetError(f"{what} is empty")
        rows = np.stack([vector_values(v).astype(np.float64) for v in items])
    if rows.shape[0] == 0:
        raise EmptySetError(f"{what} is empty")
    return rows


# ---------------------------------------------------------------------------
# cosine distances between mean embeddings


@dataclass(frozen=True)
class DistanceReport:
    metric: str
    value: float
    n_generated: int
    n_reference: int
    encoder: str

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise RangeError(f"distance report value must be finite, got {self.value!r}")


def clip_distance(gen, ref) -> float:
    """1 - cos between the mean generated and mean reference embedding."""
    g = _as_matrix(gen, what="generated embedding set")
    r = _as_matrix(ref, what="reference embedding set")
    return max(0.0, 1.0 - _cos(g.mean(axis=0), r.mean(axis=0)))


def encoder_distance(backend: EncoderBackend, gen_images: np.ndarray,
                     ref_images: np.ndarray) -> DistanceReport:
    """clip_distance computed through an arbitrary encoder backend."""
    gen_images = np.asarray(gen_images)
    ref_images = np.asarray(ref_images)
    if gen_images.ndim != 2 or gen_images.shape[0] == 0:
        raise EmptySetError(f"generated image set has shape {gen_images.shape}")
    if ref_images.ndim != 2 or ref_images.shape[0] == 0:
        raise EmptySetError(f"reference image set has shape {ref_images.shape}")
    value = clip_distance(backend.encode_images(gen_images),
                          backend.encode_images(ref_images))
    return DistanceReport(
        metric=f"{backend.name}_distance",
        value=float(value),
        n_generated=int(gen_images.shape[0]),
        n_reference=int(ref_images.shape[0]),
        encoder=backend.name,
    )


# ---------------------------------------------------------------------------
# k-medoids clustering (PAM)


@dataclass(frozen=True)
class ClusterAssignment:
    medoids: tuple[int, ...]
    assignment: tuple[int, ...]
    cost: float

    def members(self, medoid: int) -> list[int]:
        return [i for i, m in enumerate(self.assignment) if m == medoid]


def _validate_distance_matrix(matrix) -> np.ndarray:
    d = np.asarray(matrix, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise BadMatrixError(f"distance matrix must be square, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise BadMatrixError("distance matrix contains non-finite entries")
    if np.any(d < 0):
        raise BadMatrixError("distance matrix contains negative entries")
    if np.abs(d - d.T).max(initial=0.0) > _SYM_TOL:
        raise BadMatrixError("distance matrix is not symmetric")
    if np.abs(np.diagonal(d)).max(initial=0.0) > _SYM_TOL:
        raise BadMatrixError("distance matrix has a nonzero diagonal")
    return d


def _pam_cost(d: np.ndarray, medoids: list[int]) -> float:
    return float(d[:, medoids].min(axis=1).sum())


def _greedy_build(d: np.ndarray, k: int) -> list[int]:
    n = d.shape[0]
    medoids = [int(np.argmin(d.sum(axis=1)))]
    while len(medoids) < k:
        nearest = d[:, medoids].min(axis=1)
        best_j, best_total = None, None
        for j in range(n):
            if j in medoids:
                continue
            total = float(np.minimum(nearest, d[:, j]).sum())
            if best_total is None or total < best_total:
                best_j, best_total = j, total
        medoids.append(best_j)
    return sorted(medoids)


def _swap_phase(d: np.ndarray, medoids: list[int]) -> tuple[list[int], float]:
    n = d.shape[0]
    medoids = sorted(medoids)
    cost = _pam_cost(d, medoids)
    while True:
        best_cost, best_medoids = cost, None
        for pos in range(len(medoids)):
            for h in range(n):
                if h in medoids:
                    continue
                candidate = sorted(medoids[:pos] + [h] + medoids[pos + 1:])
                c = _pam_cost(d, candidate)
                if c < best_cost:
                    best_cost, best_medoids = c, candidate
        if best_medoids is None:
            return medoids, cost
        assert best_cost <= cost, "swap must not increase cost"
        medoids, cost = best_medoids, best_cost


def kmedoids(distance_matrix, k: int, seed: int = 0) -> ClusterAssignment:
    """PAM local optimum from the best of 5 seeded restarts.

    Restart 0 starts from a greedy build; restarts 1-4 start from seeded
    random medoid sets. Ties between restarts go to the lexicographically
    smallest medoid tuple; all within-search ties go to the lowest index.
    """
    d = _validate_distance_matrix(distance_matrix)
    n = d.shape[0]
    k = int(k)
    if not (1 <= k <= n):
        raise KTooLargeError(f"k must be in [1, {n}], got {k}")

    best: tuple[float, list[int]] | None = None
    for restart in range(5):
        if restart == 0:
            init = _greedy_build(d, k)
        else:
            rng = np.random.default_rng([int(seed), restart])
            init = sorted(int(x) for x in rng.choice(n, size=k, replace=False))
        medoids, cost = _swap_phase(d, init)
        if best is None or cost < best[0] or (cost == best[0] and medoids < best[1]):
            best = (cost, medoids)

    cost, medoids = best[0], best[1]
    columns = d[:, medoids]
    assignment = [medoids[int(np.argmin(row))] for row in columns]
    for m in medoids:
        assignment[m] = m
    return ClusterAssignment(medoids=tuple(medoids), assignment=tuple(assignment),
                             cost=cost)


def intra_cluster_diversity(items, k: int, pairwise_distance_fn, seed: int = 0) -> float:
    """Mean within-cluster pairwise distance, averaged uniformly over k clusters.

    Items are first put in a canonical order (sorted by row sum, then by the
    sorted distance profile) so the value is invariant under permutation of
    the input; clusters of size 1 contribute 0.
    """
    items = list(items)
    n = len(items)
    if n == 0:
        raise EmptySetError("cannot cluster an empty image set")
    d = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = float(pairwise_distance_fn(items[i], items[j]))

    keys = [(float(d[i].sum()), tuple(np.sort(d[i]))) for i in range(n)]
    order = sorted(range(n), key=lambda i: keys[i])
    canonical = d[np.ix_(order, order)]

    result = kmedoids(canonical, k, seed)
    totals = []
    for m in result.medoids:
        members = result.members(m)
        size = len(members)
        if size <= 1:
            totals.append(0.0)
            continue
        block = canonical[np.ix_(members, members)]
        totals.append(float(block.sum() / (size * (size - 1))))
    return float(sum(totals) / k)


# backwards-friendly alias: the perceptual-distance use spells it this way
intra_lpips = intra_cluster_diversity


# ---------------------------------------------------------------------------
# Frechet distance between Gaussians


@dataclass(frozen=True)
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mean.ndim != 1 or cov.shape != (mean.shape[0], mean.shape[0]):
            raise NonPSDError(
                f"stats need mean (d,) and cov (d, d), got {mean.shape} and {cov.shape}"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise NonPSDError("mean/covariance contain non-finite entries")
        if np.abs(cov - cov.T).max(initial=0.0) > _SYM_TOL:
            raise NonPSDError("covariance is not symmetric")
        if mean.shape[0] > 0 and float(np.linalg.eigvalsh(cov).min()) < -_SYM_TOL:
            raise NonPSDError("covariance has a negative eigenvalue")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def from_samples(cls, samples) -> "GaussianStats":
        x = _as_matrix(samples, what="sample set")
        mean = x.mean(axis=0)
        if x.shape[0] < 2:
            cov = np.zeros((x.shape[1], x.shape[1]))
        else:
            centered = x - mean
            cov = centered.T @ centered / (x.shape[0] - 1)
        return cls(mean=mean, cov=(cov + cov.T) / 2.0)


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(cov)
    w = np.where(w < 1e-10, 0.0, w)
    return (v * np.sqrt(w)) @ v.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)).

    The matrix square root comes from an eigendecomposition of the
    symmetrized product sqrt(S_a) S_b sqrt(S_a); eigenvalues below 1e-10
    are clamped to zero and the final value is floored at 0.
    """
    if a.dim != b.dim:
        raise DimMismatchError(f"stats have dims {a.dim} and {b.dim}")
    if np.array_equal(a.mean, b.mean) and np.array_equal(a.cov, b.cov):
        return 0.0
    diff = a.mean - b.mean
    sqrt_a = _psd_sqrt(a.cov)
    inner = sqrt_a @ b.cov @ sqrt_a
    inner = (inner + inner.T) / 2.0
    w = np.linalg.eigvalsh(inner)
    w = np.where(w < 1e-10, 0.0, w)
    value = (float(diff @ diff) + float(np.trace(a.cov)) + float(np.trace(b.cov))
             - 2.0 * float(np.sum(np.sqrt(w))))
    return max(value, 0.0)


# ---------------------------------------------------------------------------
# alignment with the ground-truth offset


def misalignment_vs_ground_truth(backend: EncoderBackend, text_offset,
                                 gen_source_images: np.ndarray,
                                 real_target_images: np.ndarray) -> float:
    """1 - cos between a text offset and the measured image-space offset.

    Ground truth is the mean real-target embedding minus the mean
    source-generation embedding.
    """
    gen_source_images = np.asarray(gen_source_images)
    real_target_images = np.asarray(real_target_images)
    if gen_source_images.ndim != 2 or gen_source_images.shape[0] == 0:
        raise EmptySetError(f"source image set has shape {gen_source_images.shape}")
    if real_target_images.ndim != 2 or real_target_images.shape[0] == 0:
        raise EmptySetError(f"target image set has shape {real_target_images.shape}")
    ground_truth = (mean_rows(backend.encode_images(real_target_images))
                    - mean_rows(backend.encode_images(gen_source_images)))
    text = vector_values(text_offset).astype(np.float64)
    return 1.0 - _cos(text, ground_truth)


@dataclass(frozen=True)
class AlleviationReport:
    source_misalignment: float
    refined_misalignment: float

    @property
    def improvement(self) -> float:
        return self.source_misalignment - self.refined_misalignment


def alleviation_report(backend: EncoderBackend, source_text_offset,
                       refined_text_offset, gen_source_images: np.ndarray,
                       real_target_images: np.ndarray) -> AlleviationReport:
    """Compare the plain text offset against the last refined offset."""
    return AlleviationReport(
        source_misalignment=misalignment_vs_ground_truth(
            backend, source_text_offset, gen_source_images, real_target_images),
        refined_misalignment=misalignment_vs_ground_truth(
            backend, refined_text_offset, gen_source_images, real_target_images),
    )


# ---------------------------------------------------------------------------
# concept-shift curves over checkpoints


def concept_shift_curve(checkpoints, reference, metric: str = "clip_distance"
                        ) -> list[tuple[int, float]]:
    """Evaluate a distance metric at each (t, embeddings) checkpoint.

    ``reference`` is an embedding matrix (or vector list); for the Frechet
    metric both sides are summarized as Gaussian statistics first.
    """
    points = list(checkpoints)
    if len(points) < 2:
        raise EmptySetError(f"need at least 2 checkpoints, got {len(points)}")
    if metric not in ("clip_distance", "frechet"):
        raise ConfigError(f"metric must be clip_distance|frechet, got {metric!r}")
    ref_matrix = _as_matrix(reference, what="reference set")
    ref_stats = GaussianStats.from_samples(ref_matrix) if metric == "frechet" else None
    series = []
    for t, emb in points:
        emb = _as_matrix(emb, what=f"checkpoint t={t}")
        if metric == "clip_distance":
            value = clip_distance(emb, ref_matrix)
        else:
            value = frechet_distance(GaussianStats.from_samples(emb), ref_stats)
        series.append((int(t), float(value)))
    series.sort(key=lambda p: p[0])
    return series


# ---------------------------------------------------------------------------
# CSV emission


def _fmt(x: float) -> str:
    return repr(float(x))


def write_metric_reports_csv(reports, path: str | Path, run_id: str = "") -> None:
    lines = ["metric,value,n_gen,n_ref,encoder,run_id"]
    for r in reports:
        lines.append(f"{r.metric},{_fmt(r.value)},{r.n_generated},"
                     f"{r.n_reference},{r.encoder},{run_id}")
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def write_series_csv(series, metric: str, path: str | Path) -> None:
    lines = ["t,metric,value"]
    for t, value in series:
        lines.append(f"{t},{metric},{_fmt(value)}")
    atomic_write_text(Path(path), "\n".join(lines) + "\n")
