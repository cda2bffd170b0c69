"""
Per-frame quality (variance of the Laplacian) and visual clustering.
"""

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
import logging
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel, ConfigDict
from scipy.ndimage import convolve

from momentsampler.errors import ImageError, ParameterError
from momentsampler.models import FrameMetrics, GrayImage, QualityConfig

logger = logging.getLogger(__name__)

LAPLACIAN_KERNEL = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64)
FEATURE_GRID_SIZE = 8


# region Images


def to_gray(rgb: np.ndarray | Image.Image) -> GrayImage:
    """BT.601 luma, rounded half up: floor(0.299 R + 0.587 G + 0.114 B + 0.5)."""
    pixels = np.asarray(rgb.convert("RGB") if isinstance(rgb, Image.Image) else rgb)
    if pixels.size == 0:
        raise ImageError("Cannot convert an empty image to grayscale.")
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ImageError(f"Expected an RGB image of shape (height, width, 3), got {pixels.shape}")

    channels = pixels.astype(np.int64)
    # Integer arithmetic keeps the half-up rounding exact
    luma = (
        299 * channels[..., 0] + 587 * channels[..., 1] + 114 * channels[..., 2] + 500
    ) // 1000
    return GrayImage(pixels=luma)


def load_gray_image(path: str | Path) -> GrayImage:
    """Decode a PGM (P5), PPM (P6) or PNG frame as a gray image."""
    try:
        with Image.open(path) as image:
            image.load()
            if image.mode == "L":
                return GrayImage(pixels=np.asarray(image))
            return to_gray(image.convert("RGB"))
    except (UnidentifiedImageError, OSError) as e:
        raise ImageError(f"Cannot decode image '{path}': {e}") from e


# endregion


# region Quality


def laplacian_variance(gray: GrayImage) -> float:
    """Population variance of the 4-neighbour Laplacian response (replicate edges)."""
    response = convolve(gray.pixels, LAPLACIAN_KERNEL, mode="nearest")
    return float(np.var(response))


def quality_scores(variances: Sequence[float] | np.ndarray, config: QualityConfig) -> np.ndarray:
    """
    Calibrated sharpness in [0, 1]: (v / max v) ** gamma.
    When every variance is 0 no frame is penalized (all ones).
    """
    if config.gamma <= 0:
        raise ParameterError(f"gamma must be positive, got {config.gamma}")
    values = np.asarray(variances, dtype=np.float64)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise ParameterError("Laplacian variances must be finite and non-negative.")
    if values.size == 0:
        return values
    peak = values.max()
    if peak == 0:
        return np.ones_like(values)
    return (values / peak) ** config.gamma


# endregion


# region Features


def fallback_features(gray: GrayImage) -> np.ndarray:
    """64-dim feature: the image average-pooled onto an 8x8 grid, scaled to [0, 1]."""
    image = Image.fromarray(gray.pixels.astype(np.float32))
    pooled = image.resize((FEATURE_GRID_SIZE, FEATURE_GRID_SIZE), Image.Resampling.BOX)
    return np.asarray(pooled, dtype=np.float64).reshape(-1) / 255.0


def compute_frame_metrics(
    image_paths: Sequence[str | Path], config: QualityConfig, max_workers: int | None = None
) -> FrameMetrics:
    """Decode every frame and compute its Laplacian variance and fallback features."""

    def measure(path: str | Path) -> tuple[float, np.ndarray]:
        gray = load_gray_image(path)
        return laplacian_variance(gray), fallback_features(gray)

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        measurements = list(executor.map(measure, image_paths))

    variances = np.array([variance for variance, _ in measurements])
    features = np.stack([feature for _, feature in measurements])
    logger.debug("Measured %d frames (max Laplacian variance %.3f)", len(variances), variances.max())
    return FrameMetrics(
        laplacian_variances=variances,
        quality=quality_scores(variances, config),
        features=features,
    )


# endregion


# region Clustering


class KMeansFit(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    labels: np.ndarray
    centroids: np.ndarray
    objective_history: list[float]
    """Sum of squared distances to the assigned centroid, after each assignment step."""

    iterations: int


def _squared_distances(features: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return ((features[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _kmeans_plus_plus(features: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = features.shape[0]
    chosen = [int(rng.integers(n))]
    closest = ((features - features[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            index = int(rng.choice(n, p=closest / total))
        else:
            # Every point coincides with a centroid; take any point not chosen yet
            remaining = np.setdiff1d(np.arange(n), chosen)
            index = int(rng.choice(remaining))
        chosen.append(index)
        closest = np.minimum(closest, ((features - features[index]) ** 2).sum(axis=1))
    return features[chosen].copy()


def _reseed_empty_clusters(
    features: np.ndarray, labels: np.ndarray, point_d2: np.ndarray, centroids: np.ndarray
) -> None:
    k = centroids.shape[0]
    sizes = np.bincount(labels, minlength=k)
    for cluster in np.flatnonzero(sizes == 0):
        # Farthest point among clusters that can spare one
        donors = sizes[labels] > 1
        candidate_d2 = np.where(donors, point_d2, -1.0)
        point = int(np.argmax(candidate_d2))
        sizes[labels[point]] -= 1
        sizes[cluster] += 1
        labels[point] = cluster
        centroids[cluster] = features[point]
        point_d2[point] = 0.0


def fit_kmeans(
    features: np.ndarray | Sequence[Sequence[float]],
    k: int,
    seed: int,
    max_iters: int = 100,
    tol: float = 1e-6,
) -> KMeansFit:
    """
    Lloyd's k-means with seeded k-means++ initialization.

    Every cluster ends up non-empty: an empty cluster takes the point farthest from its
    centroid. Identical inputs and seed give identical results.
    """
    data = np.asarray(features, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    if data.ndim != 2 or data.shape[0] == 0:
        raise ParameterError("Features must be a non-empty (frames, dimensions) table.")
    if not np.all(np.isfinite(data)):
        raise ParameterError("Features must be finite.")
    n = data.shape[0]
    if k < 1:
        raise ParameterError(f"K must be at least 1, got {k}")
    if k > n:
        raise ParameterError(f"K ({k}) exceeds the frame count ({n})")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_plus_plus(data, k, rng)
    history: list[float] = []
    labels = np.zeros(n, dtype=np.int64)
    iterations = 0

    for iterations in range(1, max_iters + 1):
        distances = _squared_distances(data, centroids)
        labels = np.argmin(distances, axis=1)
        point_d2 = distances[np.arange(n), labels]
        _reseed_empty_clusters(data, labels, point_d2, centroids)
        history.append(float(point_d2.sum()))

        updated = np.stack([data[labels == cluster].mean(axis=0) for cluster in range(k)])
        shift = float(np.sqrt(((updated - centroids) ** 2).sum(axis=1)).max())
        centroids = updated
        if shift < tol:
            break

    return KMeansFit(
        labels=labels, centroids=centroids, objective_history=history, iterations=iterations
    )


def kmeans_cluster(
    features: np.ndarray | Sequence[Sequence[float]],
    k: int,
    seed: int,
    max_iters: int = 100,
    tol: float = 1e-6,
) -> np.ndarray:
    """Cluster id in [0, k) for every frame."""
    return fit_kmeans(features, k, seed, max_iters=max_iters, tol=tol).labels


# endregion
