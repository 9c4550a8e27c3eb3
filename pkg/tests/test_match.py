import numpy as np
import pytest

from oracles import naive_pnorm, naive_set_distance
from shapecode.exceptions import DimensionError
from shapecode.match import CodeSet, DistanceMatrix, distance_matrix, pairwise_code_distance, set_distance


def test_pairwise_examples():
    assert pairwise_code_distance([1.5, -2], [1.5, -2]) == 0
    assert pairwise_code_distance([0, 0], [3, 4]) == 5
    assert pairwise_code_distance([0, 0], [3, 4], p=1) == 7
    assert pairwise_code_distance([0, 0], [3, 4], p=np.inf) == 4
    with pytest.raises(DimensionError):
        pairwise_code_distance([0, 0], [1, 2, 3])
    with pytest.raises(ValueError):
        pairwise_code_distance([0], [1], p=0.5)


@pytest.mark.parametrize("p", [1, 2, 3.5])
def test_pairwise_matches_loop(p):
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b = rng.normal(size=(2, 7))
        assert abs(pairwise_code_distance(a, b, p) - naive_pnorm(a, b, p)) <= 1e-12


def test_set_distance_hand_cases():
    assert set_distance([[0.0], [2.0]], [[1.0], [1.0]]) == 1.0
    A, B = [[0.0], [4.0]], [[0.0], [0.0]]
    assert set_distance(A, B) == 2.0
    assert set_distance(B, A) == 0.0


def test_set_distance_self_zero():
    A = np.random.default_rng(1).normal(size=(5, 3))
    assert set_distance(A, A) == 0.0


@pytest.mark.parametrize("p", [1, 2, 3])
def test_set_distance_matches_double_loop(p):
    rng = np.random.default_rng(2)
    for _ in range(10):
        A, B = rng.normal(size=(2, 4, 3))
        assert abs(set_distance(A, B, p) - naive_set_distance(A.tolist(), B.tolist(), p)) <= 1e-12


def test_set_distance_order_free_and_sandwiched():
    rng = np.random.default_rng(3)
    for _ in range(10):
        A, B = rng.normal(size=(2, 6, 4))
        d = set_distance(A, B)
        assert d == pytest.approx(set_distance(A[rng.permutation(6)], B[rng.permutation(6)]), abs=1e-12)
        pair = np.linalg.norm(A[:, None] - B[None], axis=2)
        assert pair.min() - 1e-12 <= d <= pair.min(axis=1).max() + 1e-12


def test_set_distance_shape_errors():
    with pytest.raises(DimensionError):
        set_distance(np.zeros((3, 2)), np.zeros((3, 4)))
    with pytest.raises(DimensionError):
        set_distance(np.zeros((3, 2)), np.zeros((4, 2)))


def test_distance_matrix_single_and_duplicates():
    one = distance_matrix([CodeSet("a", np.ones((3, 2)))])
    assert one.values.tolist() == [[0.0]] and one.ids == ("a",)
    rng = np.random.default_rng(4)
    codes = rng.normal(size=(3, 2))
    d = distance_matrix([CodeSet("a", codes), CodeSet("b", codes), CodeSet("c", codes + 1)])
    assert d.values[0, 1] == 0 and d.values[1, 0] == 0 and d.values[0, 2] > 0
    with pytest.raises(ValueError):
        distance_matrix([])


def test_distance_matrix_matches_oracle():
    rng = np.random.default_rng(5)
    codes = rng.normal(size=(5, 4, 3))
    d = distance_matrix(codes, p=2)
    assert d.meta == {"n_views": 4, "code_dim": 3, "p": 2}
    for q in range(5):
        for x in range(5):
            expected = 0.0 if q == x else naive_set_distance(codes[q].tolist(), codes[x].tolist())
            assert abs(d.values[q, x] - expected) <= 1e-12
    # directional: rows are queries
    assert not np.allclose(d.values, d.values.T)


def test_distance_matrix_rejects_mixed_shapes():
    with pytest.raises(DimensionError):
        distance_matrix([CodeSet("a", np.zeros((3, 2))), CodeSet("b", np.zeros((4, 2)))])


def test_distance_matrix_invariants():
    with pytest.raises(ValueError):
        DistanceMatrix(("a", "b"), [[0, -1], [1, 0]])
    with pytest.raises(DimensionError):
        DistanceMatrix(("a",), [[0, 1], [1, 0]])
    with pytest.raises(ValueError):
        CodeSet("a", [[np.nan, 0.0]])
