import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import nearest_centroid
from shapecode.bof import (
    DESCRIPTOR_DIM,
    BagOfFeatures,
    Vocabulary,
    bof_distance,
    build_vocabulary,
    extract_descriptors,
    histogram_distance_matrix,
    image_descriptors,
    lloyd,
    normalize_descriptor,
    orientation_histogram,
    quantize,
)
from shapecode.exceptions import DimensionError
from shapecode.mesh import normalize_pose
from shapecode.projection import make_rig, render_depth
from shapecode.synthetic import box_mesh, icosphere


def test_blank_image_has_no_descriptors():
    desc, keep = image_descriptors(np.zeros((32, 32)), 8, 16)
    assert desc.shape == (0, DESCRIPTOR_DIM) and not keep.any()


def test_constant_image_has_no_descriptors():
    desc, _ = image_descriptors(np.full((32, 32), 0.7), 8, 16)
    assert len(desc) == 0


def test_ramp_puts_mass_in_one_bin_pair():
    # gradient direction 30 degrees: between bin 0 (0 deg) and bin 1 (45 deg)
    rows, cols = np.indices((32, 32))
    angle = np.deg2rad(30)
    image = 0.2 + 0.01 * (np.cos(angle) * cols + np.sin(angle) * rows)
    hist = orientation_histogram(image)
    np.testing.assert_allclose(hist[..., 2:], 0, atol=1e-12)
    np.testing.assert_allclose(hist[..., 1] / hist.sum(axis=2), 30 / 45, atol=1e-9)
    desc, _ = image_descriptors(image, 8, 16)
    assert len(desc) == 9
    cells = desc.reshape(-1, 16, 8)
    assert np.abs(cells[..., 2:]).max() < 1e-12
    assert (cells[..., :2] > 0).all()


def test_descriptor_normalization():
    raw = np.zeros(DESCRIPTOR_DIM)
    raw[0], raw[1] = 10.0, 1.0
    out = normalize_descriptor(raw)[0]
    first = min(10 / np.sqrt(101), 0.2)
    second = min(1 / np.sqrt(101), 0.2)
    expected = np.array([first, second]) / np.hypot(first, second)
    np.testing.assert_allclose(out[:2], expected, atol=1e-15)
    assert np.linalg.norm(out) == pytest.approx(1.0)
    assert not normalize_descriptor(np.zeros(DESCRIPTOR_DIM)).any()


def test_patch_must_fit():
    with pytest.raises(ValueError):
        image_descriptors(np.zeros((8, 8)), 4, 16)
    with pytest.raises(ValueError):
        image_descriptors(np.zeros((32, 32)), 4, 10)


def test_extract_pools_views():
    views = render_depth(normalize_pose(box_mesh(2)), make_rig(2, 2), 32)
    views = type(views)("box", views.images)
    bag = extract_descriptors(views, 4, 8)
    assert bag.model_id == "box" and len(bag) > 0
    assert set(bag.view_index.tolist()) == {0, 1, 2, 3}
    assert (bag.descriptors >= 0).all() and np.isfinite(bag.descriptors).all()
    np.testing.assert_allclose(np.linalg.norm(bag.descriptors, axis=1), 1.0, atol=1e-12)


def planted(rng, n=60):
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    labels = np.repeat(np.arange(3), n)
    return centers[labels] + 0.1 * rng.normal(size=(3 * n, 2)), labels


def test_single_word_is_mean():
    X = np.random.default_rng(0).normal(size=(50, 4))
    vocab = build_vocabulary(X, k=1, seed=0)
    np.testing.assert_allclose(vocab.centroids[0], X.mean(axis=0), atol=1e-12)


def test_one_word_per_point():
    X = np.random.default_rng(1).normal(size=(12, 3))
    vocab = build_vocabulary(X, k=12, seed=0)
    assert vocab.distortions[-1] == pytest.approx(0.0, abs=1e-12)
    assert sorted(map(tuple, vocab.centroids)) == sorted(map(tuple, X))


def test_planted_clusters_recovered():
    X, labels = planted(np.random.default_rng(2))
    vocab = build_vocabulary(X, k=3, seed=0)
    means = np.array([X[labels == c].mean(axis=0) for c in range(3)])
    for m in means:
        assert np.linalg.norm(vocab.centroids - m, axis=1).min() < 1e-3


def test_distortion_non_increasing():
    X = np.random.default_rng(3).normal(size=(300, 5))
    init = X[:20].copy()
    _, _, distortions, n_iter = lloyd(X, init, max_iter=100, tol=1e-9)
    assert len(distortions) == n_iter
    assert all(b <= a + 1e-12 for a, b in zip(distortions, distortions[1:]))


def test_vocabulary_errors_and_determinism():
    X = np.random.default_rng(4).normal(size=(40, 3))
    with pytest.raises(ValueError, match="at least"):
        build_vocabulary(X, k=41)
    a, b = build_vocabulary(X, 5, seed=9), build_vocabulary(X, 5, seed=9)
    np.testing.assert_array_equal(a.centroids, b.centroids)
    sub = build_vocabulary(X, 5, seed=9, max_samples=20)
    assert sub.size == 5


def test_quantize_examples():
    vocab = Vocabulary(np.eye(4))
    one = quantize(np.array([[0.9, 0.1, 0, 0]]), vocab)
    assert one.values.tolist() == [1, 0, 0, 0] and not one.empty
    uniform = quantize(np.eye(4), vocab)
    np.testing.assert_allclose(uniform.values, 0.25)
    empty = quantize(np.zeros((0, 4)), vocab, "m")
    assert empty.empty and empty.model_id == "m"
    np.testing.assert_allclose(empty.values, 0.25)
    # tie between words 0 and 1 goes to the lower index
    assert vocab.assign([[0.5, 0.5, 0, 0]]).tolist() == [0]


def test_quantize_matches_oracle_and_is_order_free():
    rng = np.random.default_rng(5)
    vocab = Vocabulary(rng.normal(size=(7, 6)))
    X = rng.normal(size=(80, 6))
    expected = [nearest_centroid(x, vocab.centroids) for x in X]
    assert vocab.assign(X).tolist() == expected
    h = quantize(X, vocab)
    assert h.values.sum() == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_array_equal(h.values, quantize(X[rng.permutation(80)], vocab).values)


def test_bof_distance_examples():
    a = np.array([0.5, 0.5, 0.0])
    assert bof_distance(a, a) == 0
    assert bof_distance([1, 0, 0], [0, 1, 0]) == 2
    rng = np.random.default_rng(6)
    x, y = rng.dirichlet(np.ones(5), size=2)
    assert abs(bof_distance(x, y) - sum(abs(p - q) for p, q in zip(x, y))) <= 1e-12
    with pytest.raises(DimensionError):
        bof_distance([1, 0], [1, 0, 0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_bof_distance_is_metric(seed):
    x, y, z = np.random.default_rng(seed).dirichlet(np.ones(6), size=3)
    assert bof_distance(x, y) == pytest.approx(bof_distance(y, x), abs=1e-12)
    assert bof_distance(x, z) <= bof_distance(x, y) + bof_distance(y, z) + 1e-12
    D = histogram_distance_matrix([x, y, z])
    assert D[0, 1] == pytest.approx(bof_distance(x, y), abs=1e-12)


def test_estimator_on_rendered_views():
    rig = make_rig(2, 2)
    sets = [render_depth(normalize_pose(m), rig, 32).to_array() for m in (icosphere(2), box_mesh(2))]
    sets.append(np.zeros((4, 32, 32)))
    model = BagOfFeatures(n_words=10, grid_step=4, patch_size=8, random_state=0).fit(sets)
    H = model.transform(sets)
    assert H.shape == (3, 10)
    np.testing.assert_allclose(H.sum(axis=1), 1.0, atol=1e-9)
    assert model.empty_models_ == [""]
