import numpy as np
import pytest

from proxsarah.core import (
    TREE_BLOCK,
    Counters,
    batch_mean_gradient,
    component_gradient,
    full_gradient,
    gradient_mapping,
    tree_sum,
)
from proxsarah.errors import InvalidArgumentError, UnsupportedOperationError
from proxsarah.problems import NnPcaProblem, QuadraticOracle, SyntheticExpectation
from proxsarah.prox import Regularizer, prox

from helpers import ScalarOracle, dense_dataset


def test_component_gradient_nnpca_counts_one():
    prob = NnPcaProblem(dense_dataset([[1.0, 0.0], [0.0, 1.0]]))
    c = Counters()
    g = component_gradient(prob, np.array([1.0, 0.0]), 0, c)
    assert g.tolist() == [-1.0, 0.0]
    assert c.sfo == 1


def test_component_gradient_zero_w():
    prob = NnPcaProblem(dense_dataset([[0.6, 0.8]]))
    assert np.all(component_gradient(prob, np.zeros(2), 0) == 0)


def test_component_gradient_index_out_of_range():
    prob = NnPcaProblem(dense_dataset([[1.0, 0.0]]))
    with pytest.raises(InvalidArgumentError):
        component_gradient(prob, np.zeros(2), 1)
    with pytest.raises(InvalidArgumentError):
        component_gradient(prob, np.zeros(2), -1)


def test_nonfinite_w_rejected():
    prob = NnPcaProblem(dense_dataset([[1.0, 0.0]]))
    with pytest.raises(InvalidArgumentError):
        full_gradient(prob, np.array([np.nan, 0.0]))
    with pytest.raises(InvalidArgumentError):
        full_gradient(prob, np.zeros(3))


def test_full_gradient_scalar_examples():
    oracle = ScalarOracle([(lambda w: w * w / 2, lambda w: w), (lambda w: w, lambda w: 1.0)])
    assert full_gradient(oracle, np.array([1.0])).tolist() == [1.0]
    three = ScalarOracle([(None, lambda w: 1.0), (None, lambda w: 2.0), (None, lambda w: 6.0)])
    c = Counters()
    assert full_gradient(three, np.array([0.0]), c).tolist() == [3.0]
    assert c.sfo == 3


def test_full_gradient_identical_samples():
    z = np.array([0.6, 0.8])
    prob = NnPcaProblem(dense_dataset([z, z, z]))
    np.testing.assert_allclose(full_gradient(prob, z), -z, rtol=1e-15)


def test_full_gradient_expectation_unsupported():
    oracle = SyntheticExpectation.random(3, 2, 0)
    with pytest.raises(UnsupportedOperationError):
        full_gradient(oracle, np.zeros(2))


@pytest.mark.parametrize("seed", range(5))
def test_full_gradient_equals_mean_of_components(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(1, 17)), int(rng.integers(1, 9))
    oracle = QuadraticOracle.random(n, d, seed)
    w = rng.normal(size=d)
    comps = np.stack([component_gradient(oracle, w, i) for i in range(n)])
    np.testing.assert_array_equal(full_gradient(oracle, w), tree_sum(comps) / n)
    np.testing.assert_array_equal(full_gradient(oracle, w), batch_mean_gradient(oracle, w, np.arange(n)))


def test_full_gradient_independent_of_workers():
    n = 5 * TREE_BLOCK + 17
    oracle = QuadraticOracle.random(n, 4, 3)
    w = np.random.default_rng(3).normal(size=4)
    ref = full_gradient(oracle, w, workers=1)
    for workers in (2, 3, 8):
        np.testing.assert_array_equal(full_gradient(oracle, w, workers=workers), ref)


def test_tree_sum_fixed_shape():
    rows = np.random.default_rng(1).normal(size=(300, 3))
    np.testing.assert_allclose(tree_sum(rows), rows.sum(axis=0), rtol=1e-13)
    np.testing.assert_array_equal(tree_sum(rows), tree_sum(rows.copy()))


def test_gradient_mapping_zero_reg_returns_grad():
    g = np.array([0.3, -2.0])
    np.testing.assert_allclose(gradient_mapping(np.array([1.0, 5.0]), g, 0.7, Regularizer.zero()), g, atol=1e-15)


def test_gradient_mapping_l1_example():
    out = gradient_mapping(np.array([1.0]), np.array([0.0]), 1.0, Regularizer.l1(0.5))
    assert out.tolist() == [0.5]


def test_gradient_mapping_rejects_nonpositive_eta():
    for eta in (0.0, -1.0):
        with pytest.raises(InvalidArgumentError):
            gradient_mapping(np.zeros(1), np.zeros(1), eta, Regularizer.zero())


def test_gradient_mapping_vanishes_at_stationary_point():
    # f(w) = 1/2 (w - 0.2)^2 with 0.1|w|: minimizer w* = 0.1, grad = -0.1
    reg = Regularizer.l1(0.1)
    w = np.array([0.1])
    assert abs(gradient_mapping(w, w - 0.2, 0.5, reg)[0]) < 1e-15
    # boundary of the ball with the gradient pointing outward
    ball = Regularizer.nonneg_ball()
    w = np.array([0.6, 0.8])
    np.testing.assert_allclose(gradient_mapping(w, -3 * w, 0.5, ball), 0, atol=1e-15)


def test_gradient_mapping_zero_iff_fixed_point():
    rng = np.random.default_rng(7)
    reg = Regularizer.l1(0.3)
    for _ in range(50):
        w, g = rng.normal(size=3), rng.normal(size=3)
        G = gradient_mapping(w, g, 0.5, reg)
        fixed = np.allclose(prox(reg, w - 0.5 * g, 0.5), w, atol=0)
        assert (np.all(G == 0)) == fixed
