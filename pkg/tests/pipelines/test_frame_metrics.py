import numpy as np
from PIL import Image
import pytest
from scipy.ndimage import uniform_filter

from momentsampler.errors import ImageError, ParameterError
from momentsampler.models import GrayImage, QualityConfig
from momentsampler.pipelines.frame_metrics import (
    compute_frame_metrics,
    fallback_features,
    fit_kmeans,
    kmeans_cluster,
    laplacian_variance,
    load_gray_image,
    quality_scores,
    to_gray,
)
from tests.conftest import write_image


def _checkerboard(size: int = 16) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    return ((yy + xx) % 2) * 255.0


# region Images


@pytest.mark.parametrize(
    "rgb, expected",
    [((255, 255, 255), 255), ((0, 0, 0), 0), ((255, 0, 0), 76), ((0, 255, 0), 150), ((0, 0, 255), 29)],
)
def test_to_gray_luma(rgb, expected):
    pixels = np.full((2, 3, 3), rgb, dtype=np.uint8)
    gray = to_gray(pixels)
    assert (gray.height, gray.width) == (2, 3)
    assert np.all(gray.pixels == expected)


def test_to_gray_accepts_pillow_images():
    image = Image.new("RGB", (4, 2), (255, 0, 0))
    assert np.all(to_gray(image).pixels == 76)


def test_to_gray_rejects_bad_shapes():
    with pytest.raises(ImageError, match="empty"):
        to_gray(np.zeros((0, 0, 3), dtype=np.uint8))
    with pytest.raises(ImageError, match="RGB"):
        to_gray(np.zeros((4, 4), dtype=np.uint8))


def test_load_gray_image_reads_pgm_and_ppm(tmp_path):
    pixels = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
    gray = load_gray_image(write_image(tmp_path / "frame.pgm", pixels))
    assert gray.pixels.tolist() == pixels.tolist()

    rgb = np.stack([pixels] * 3, axis=2)
    gray = load_gray_image(write_image(tmp_path / "frame.ppm", rgb))
    assert gray.pixels.tolist() == pixels.tolist()


def test_load_gray_image_rejects_garbage(tmp_path):
    path = tmp_path / "frame.pgm"
    path.write_bytes(b"not an image")
    with pytest.raises(ImageError, match="Cannot decode"):
        load_gray_image(path)
    with pytest.raises(ImageError):
        load_gray_image(tmp_path / "missing.pgm")


# endregion


# region Quality


def test_laplacian_variance_of_constant_image_is_zero():
    assert laplacian_variance(GrayImage(pixels=np.full((6, 9), 128.0))) == 0.0
    assert laplacian_variance(GrayImage(pixels=[[200.0]])) == 0.0


def test_laplacian_variance_of_single_bright_pixel():
    pixels = np.zeros((5, 5))
    pixels[2, 2] = 1.0
    # Response: -4 at the centre, 1 at its four neighbours, so variance = 20 / 25
    assert laplacian_variance(GrayImage(pixels=pixels)) == 0.8


def test_laplacian_variance_ignores_brightness_offset():
    rng = np.random.default_rng(1)
    for _ in range(20):
        pixels = rng.integers(0, 200, size=(12, 17)).astype(np.float64)
        shifted = laplacian_variance(GrayImage(pixels=pixels + 50))
        assert shifted == pytest.approx(laplacian_variance(GrayImage(pixels=pixels)), abs=1e-9)


def test_blurring_lowers_laplacian_variance():
    sharp = _checkerboard()
    blurred = uniform_filter(sharp, size=3, mode="nearest")
    assert laplacian_variance(GrayImage(pixels=blurred)) < laplacian_variance(
        GrayImage(pixels=sharp)
    )


def test_quality_scores_normalize_and_apply_gamma():
    scores = quality_scores([0.0, 25.0, 100.0], QualityConfig(gamma=0.5))
    assert scores.tolist() == [0.0, 0.5, 1.0]


def test_quality_scores_all_zero_variances_are_not_penalized():
    assert quality_scores([0.0, 0.0], QualityConfig()).tolist() == [1.0, 1.0]


def test_quality_scores_are_monotonic():
    rng = np.random.default_rng(2)
    variances = np.sort(rng.uniform(0, 500, size=50))
    for gamma in (0.25, 0.5, 1.0, 2.0):
        scores = quality_scores(variances, QualityConfig(gamma=gamma))
        assert np.all(np.diff(scores) >= 0)
        assert scores.max() == 1.0


def test_quality_scores_reject_invalid_input():
    with pytest.raises(ParameterError, match="non-negative"):
        quality_scores([1.0, -2.0], QualityConfig())
    with pytest.raises(ParameterError):
        quality_scores([1.0, float("inf")], QualityConfig())
    with pytest.raises(ParameterError, match="gamma"):
        quality_scores([1.0], QualityConfig.model_construct(gamma=0.0))


# endregion


# region Features


def test_fallback_features_of_white_frame():
    features = fallback_features(GrayImage(pixels=np.full((32, 48), 255.0)))
    assert features.shape == (64,)
    assert np.allclose(features, 1.0)


def test_fallback_features_pool_blocks():
    pixels = np.zeros((16, 16))
    pixels[:, 8:] = 255.0
    grid = fallback_features(GrayImage(pixels=pixels)).reshape(8, 8)
    assert np.allclose(grid[:, :4], 0.0)
    assert np.allclose(grid[:, 4:], 1.0)


def test_fallback_features_keep_8x8_images():
    pixels = np.arange(64, dtype=np.float64).reshape(8, 8)
    assert np.allclose(fallback_features(GrayImage(pixels=pixels)), pixels.reshape(-1) / 255.0)


def test_compute_frame_metrics(tmp_path):
    flat = write_image(tmp_path / "flat.pgm", np.full((16, 16), 90))
    sharp = write_image(tmp_path / "sharp.pgm", _checkerboard())
    metrics = compute_frame_metrics([flat, sharp], QualityConfig(), max_workers=2)
    assert metrics.laplacian_variances[0] == 0.0
    assert metrics.laplacian_variances[1] > 0.0
    assert metrics.quality.tolist() == [0.0, 1.0]
    assert metrics.features.shape == (2, 64)


# endregion


# region Clustering


def test_kmeans_with_one_cluster_per_frame():
    features = np.random.default_rng(4).normal(size=(12, 3))
    labels = kmeans_cluster(features, k=12, seed=0)
    assert sorted(labels.tolist()) == list(range(12))


def test_kmeans_separates_blobs():
    rng = np.random.default_rng(5)
    blobs = np.concatenate([rng.normal(0, 0.1, size=(20, 2)), rng.normal(10, 0.1, size=(20, 2))])
    labels = kmeans_cluster(blobs, k=2, seed=3)
    assert len(set(labels[:20].tolist())) == 1
    assert len(set(labels[20:].tolist())) == 1
    assert labels[0] != labels[20]


def test_kmeans_is_deterministic():
    features = np.random.default_rng(6).uniform(size=(40, 5))
    first = fit_kmeans(features, k=6, seed=9)
    second = fit_kmeans(features, k=6, seed=9)
    assert np.array_equal(first.labels, second.labels)
    assert first.objective_history == second.objective_history


def test_kmeans_objective_never_increases_and_no_cluster_is_empty():
    rng = np.random.default_rng(8)
    for trial in range(30):
        n = int(rng.integers(5, 60))
        k = int(rng.integers(1, n + 1))
        features = rng.uniform(size=(n, 3))
        fit = fit_kmeans(features, k=k, seed=trial)
        history = np.array(fit.objective_history)
        assert np.all(np.diff(history) <= 1e-9)
        assert np.all((fit.labels >= 0) & (fit.labels < k))
        assert set(fit.labels.tolist()) == set(range(k))


def test_kmeans_handles_duplicate_points():
    features = np.array([[1.0], [1.0], [1.0], [5.0]])
    labels = kmeans_cluster(features, k=3, seed=0)
    assert set(labels.tolist()) == {0, 1, 2}


def test_kmeans_accepts_one_dimensional_input():
    labels = kmeans_cluster([0.0, 0.1, 5.0, 5.1], k=2, seed=0)
    assert labels[0] == labels[1] != labels[2] == labels[3]


@pytest.mark.parametrize(
    "features, k, message",
    [
        (np.ones((3, 2)), 4, "exceeds"),
        (np.ones((3, 2)), 0, "at least 1"),
        (np.empty((0, 2)), 1, "non-empty"),
        (np.array([[0.0], [np.nan]]), 1, "finite"),
    ],
)
def test_kmeans_rejects_invalid_input(features, k, message):
    with pytest.raises(ParameterError, match=message):
        fit_kmeans(features, k=k, seed=0)


# endregion
