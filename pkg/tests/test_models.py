import math
import random

import numpy as np
import pytest

from loomxai.dataset import ingest
from loomxai.models import (
    BadK,
    DimensionTooLarge,
    EmptyInput,
    NoLabels,
    TooFewPoints,
    knn,
    pca_fit,
    points_in_rect,
    token_bucket,
    tokenize,
    toy_fit,
)


def reference_fnv1a(data: bytes) -> int:
    # Independent FNV-1a 32-bit reference used to pin hash buckets.
    h = 2166136261
    for byte in data:
        h = ((h ^ byte) * 16777619) % 2**32
    return h


def reference_bucket(token: str, dim: int) -> int:
    return reference_fnv1a(token.encode("utf-8")) % dim


def labeled(pairs):
    return ingest([{"text": t, "label": l} for t, l in pairs])


class TestTokenize:
    def test_lowercase_and_split_on_non_alphanumeric(self):
        assert tokenize("Good, great-FINE!") == ["good", "great", "fine"]

    def test_underscore_is_a_separator(self):
        assert tokenize("a_b") == ["a", "b"]

    def test_digits_kept(self):
        assert tokenize("model 2.0") == ["model", "2", "0"]

    def test_empty(self):
        assert tokenize("  ...  ") == []


class TestHashing:
    def test_matches_independent_reference(self):
        for token in ["good", "bad", "awful", "great", "fine", "café"]:
            data = token.encode("utf-8")
            assert fnv1a_32_public(data) == reference_fnv1a(data)

    def test_bucket_stable(self):
        assert token_bucket("good", 64) == reference_bucket("good", 64)


def fnv1a_32_public(data: bytes) -> int:
    from loomxai.models import fnv1a_32

    return fnv1a_32(data)


class TestToyFit:
    def test_single_record_centroid_is_one_hot(self):
        clf = toy_fit(labeled([("good", "pos")]), dim=64)
        expected = np.zeros(64)
        expected[reference_bucket("good", 64)] = 1.0
        assert np.allclose(clf.centroids["pos"], expected)

    def test_disjoint_vocab_gives_orthogonal_centroids(self):
        pos_tokens = ["good", "great", "fine"]
        neg_tokens = ["bad", "awful"]
        buckets_pos = {reference_bucket(t, 64) for t in pos_tokens}
        buckets_neg = {reference_bucket(t, 64) for t in neg_tokens}
        assert not buckets_pos & buckets_neg  # oracle: no hash collision here
        clf = toy_fit(labeled([(" ".join(pos_tokens), "pos"), (" ".join(neg_tokens), "neg")]), dim=64)
        cos = float(np.dot(clf.centroids["pos"], clf.centroids["neg"]))
        assert cos == pytest.approx(0.0, abs=1e-12)

    def test_unlabeled_dataset_raises(self):
        with pytest.raises(NoLabels):
            toy_fit(ingest([{"text": "hi"}]))

    def test_centroids_unit_norm(self):
        clf = toy_fit(labeled([("good great", "pos"), ("bad", "neg")]))
        for c in clf.centroids.values():
            assert np.linalg.norm(c) == pytest.approx(1.0)

    def test_permutation_invariant(self):
        pairs = [("good great fine", "pos"), ("nice good", "pos"), ("bad awful", "neg")]
        a = toy_fit(labeled(pairs))
        b = toy_fit(labeled(list(reversed(pairs))))
        for label in a.labels():
            assert np.max(np.abs(a.centroids[label] - b.centroids[label])) <= 1e-12


class TestToyPredict:
    def test_good_good_predicts_pos(self):
        # Oracle: with no pos/neg bucket collisions (asserted above) the neg
        # cosine of an all-pos-vocab input is exactly 0, pos strictly > 0.
        clf = toy_fit(labeled([("good great fine", "pos"), ("bad awful", "neg")]), dim=64)
        out = clf.predict("good good")
        assert out["label"] == "pos"
        assert out["scores"]["neg"] == pytest.approx(0.0, abs=1e-12)
        expected_pos = 1.0 / math.sqrt(3)  # unit one-hot vs 3-token centroid
        assert out["scores"]["pos"] == pytest.approx(expected_pos, rel=1e-12)

    def test_empty_input(self):
        clf = toy_fit(labeled([("good", "pos")]))
        with pytest.raises(EmptyInput):
            clf.predict("")
        with pytest.raises(EmptyInput):
            clf.predict("!!!")

    def test_single_class_always_wins(self):
        clf = toy_fit(labeled([("good", "pos")]))
        assert clf.predict("anything at all")["label"] == "pos"

    def test_tie_broken_lexicographically(self):
        clf = toy_fit(labeled([("left", "b"), ("right", "a")]))
        out = clf.predict("elsewhere")  # zero cosine to both centroids
        assert out["scores"]["a"] == out["scores"]["b"] == 0.0
        assert out["label"] == "a"

    def test_embed_deterministic(self):
        clf = toy_fit(labeled([("good", "pos")]))
        rng = random.Random(5)
        for _ in range(50):
            text = "".join(rng.choices("abcdef ghij", k=20))
            first = clf.embed(text)
            for _ in range(5):
                assert np.array_equal(clf.embed(text), first)

    def test_label_in_labels_and_scores_finite(self):
        clf = toy_fit(labeled([("good great", "pos"), ("bad", "neg")]))
        out = clf.predict("good bad day")
        assert out["label"] in clf.labels()
        assert all(math.isfinite(s) for s in out["scores"].values())


class TestPca:
    def test_self_consistency_on_training_points(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(30, 8))
        proj = pca_fit(x)
        coords = proj.fitted_coords()
        for i in range(len(x)):
            err = np.max(np.abs(proj.transform(x[i]) - coords[i]))
            assert err <= 1e-6 * (1 + np.max(np.abs(coords[i])))

    def test_identical_points_give_origin(self):
        proj = pca_fit(np.ones((5, 3)))
        assert np.array_equal(proj.fitted_coords(), np.zeros((5, 2)))

    def test_rank_one_data_second_coordinate_zero(self):
        direction = np.array([1.0, -2.0, 0.5, 3.0, 1.5])
        base = np.array([0.3, 0.1, -0.2, 0.0, 1.0])
        x = np.stack([base + t * direction for t in (-1.0, 0.25, 2.0)])
        proj = pca_fit(x)
        coords = proj.fitted_coords()
        assert np.max(np.abs(coords[:, 1])) <= 1e-6
        # Oracle: rank-1 reconstruction from the first component alone
        # recovers the centered data to numerical precision.
        centered = x - x.mean(axis=0)
        u = centered[2] / np.linalg.norm(centered[2])
        residual = centered - np.outer(centered @ u, u)
        assert np.max(np.abs(residual)) <= 1e-9

    def test_two_runs_byte_identical(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(20, 6))
        a = pca_fit(x).fitted_coords()
        b = pca_fit(x).fitted_coords()
        assert a.tobytes() == b.tobytes()

    def test_sign_convention_largest_entry_positive(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(40, 5))
        proj = pca_fit(x)
        for j in range(2):
            component = proj._components[:, j]
            pivot = int(np.argmax(np.abs(component)))
            assert component[pivot] > 0

    def test_too_few_points(self):
        with pytest.raises(TooFewPoints):
            pca_fit(np.zeros((1, 4)))

    def test_dimension_cap(self):
        with pytest.raises(DimensionTooLarge):
            pca_fit(np.zeros((3, 300)))

    def test_already_2d_points_reproduced_up_to_rotation(self):
        pts = np.array([[0.0, 0.0], [2.0, 0.1], [0.3, 1.5], [2.2, 1.9]])
        proj = pca_fit(pts)
        coords = proj.fitted_coords()
        for i, p in enumerate(pts):
            assert np.max(np.abs(proj.transform(p) - coords[i])) <= 1e-6


class TestKnn:
    def test_hand_computed_example(self):
        coords = [(0.0, 0.0), (1.0, 0.0), (5.0, 0.0)]
        # Brute-force distances from (0.9, 0): 0.9, 0.1, 4.1
        assert knn(coords, (0.9, 0.0), 2) == [1, 0]

    def test_k_equals_n(self):
        coords = [(0.0, 0.0), (3.0, 0.0), (1.0, 0.0)]
        assert knn(coords, (0.0, 0.0), 3) == [0, 2, 1]

    def test_tie_broken_by_lower_index(self):
        coords = [(1.0, 0.0), (-1.0, 0.0)]
        assert knn(coords, (0.0, 0.0), 1) == [0]

    def test_bad_k(self):
        with pytest.raises(BadK):
            knn([(0.0, 0.0)], (0.0, 0.0), 0)
        with pytest.raises(BadK):
            knn([(0.0, 0.0)], (0.0, 0.0), 2)

    def test_matches_brute_force_oracle(self):
        rng = random.Random(17)
        for _ in range(20):
            pts = [(rng.uniform(-5, 5), rng.uniform(-5, 5)) for _ in range(60)]
            q = (rng.uniform(-5, 5), rng.uniform(-5, 5))
            k = rng.randrange(1, 61)
            oracle = sorted(range(60), key=lambda i: (math.dist(pts[i], q) ** 2, i))[:k]
            assert knn(pts, q, k) == oracle


class TestPointsInRect:
    def test_point_inside_unit_square(self):
        assert points_in_rect([(0.5, 0.5)], {"x0": 0, "y0": 0, "x1": 1, "y1": 1}) == [0]

    def test_boundary_inclusive(self):
        assert points_in_rect([(1.0, 0.5)], {"x0": 0, "y0": 0, "x1": 1, "y1": 1}) == [0]

    def test_swapped_corners_normalized(self):
        pts = [(0.5, 0.5), (2.0, 2.0)]
        rect = {"x0": 1, "y0": 1, "x1": 0, "y1": 0}
        assert points_in_rect(pts, rect) == [0]

    def test_matches_brute_force_oracle(self):
        rng = random.Random(23)
        for _ in range(20):
            pts = [(rng.uniform(-2, 2), rng.uniform(-2, 2)) for _ in range(50)]
            xs = sorted((rng.uniform(-2, 2), rng.uniform(-2, 2)))
            ys = sorted((rng.uniform(-2, 2), rng.uniform(-2, 2)))
            rect = {"x0": xs[1], "y0": ys[0], "x1": xs[0], "y1": ys[1]}  # swapped on purpose
            oracle = [
                i
                for i, (x, y) in enumerate(pts)
                if xs[0] <= x <= xs[1] and ys[0] <= y <= ys[1]
            ]
            assert points_in_rect(pts, rect) == oracle
