import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gttn.errors import InvalidModeError, ShapeError
from gttn.regularizers import (
    RegularizerSpec,
    WeightState,
    alpha_from_beta,
    beta_gradient,
    flattening_norms,
    min_form_value,
    reg_grad_beta,
    reg_subgrad_w,
    reg_value,
)
from gttn.tensor_core import AxisSubset, canonical_subsets, flatten, unflatten
from gttn.linalg import trace_norm_subgradient

from oracles import central_difference, eig_trace_norm


def labels(spec):
    return [s.label for s in spec.subsets]


def one_hot(n, k):
    a = np.zeros(n)
    a[k] = 1.0
    return WeightState.fixed(a)


def test_family_subsets():
    assert labels(RegularizerSpec("GTTN", 4)) == [s.label for s in canonical_subsets(4)]
    assert labels(RegularizerSpec("Tucker", 3)) == ["{1}", "{1,3}", "{1,2}"]
    assert labels(RegularizerSpec("TT", 4)) == ["{1}", "{1,2}", "{1,2,3}"]
    laf = RegularizerSpec("LAF", 4, "learnable-softmax")
    assert labels(laf) == ["{1,2,3}"] and laf.weight_mode == "fixed-uniform"


def test_spec_round_trip():
    spec = RegularizerSpec("TT", 5, "fixed-uniform")
    assert RegularizerSpec.from_dict(spec.to_dict()) == spec


def test_alpha_from_beta_examples():
    assert np.allclose(alpha_from_beta(np.zeros(7)), np.full(7, 1 / 7), atol=1e-15)
    assert np.allclose(alpha_from_beta([np.log(2), 0.0]), [2 / 3, 1 / 3], atol=1e-15)
    with pytest.raises(ValueError):
        alpha_from_beta([])
    assert np.all(np.isfinite(alpha_from_beta([1000.0, -1000.0])))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=1, max_size=15), st.floats(-50, 50))
def test_alpha_simplex_and_shift_invariance(beta, c):
    a = alpha_from_beta(beta)
    assert np.all(a >= 0) and abs(a.sum() - 1) < 1e-12
    assert np.allclose(alpha_from_beta(np.array(beta) + c), a, atol=1e-12)


@pytest.mark.parametrize("family", ["GTTN", "Tucker", "TT", "LAF"])
def test_zero_tensor(family):
    spec = RegularizerSpec(family, 3)
    w = WeightState.initial(spec)
    assert reg_value(np.zeros((2, 3, 4)), spec, w) == 0.0
    assert not np.any(reg_subgrad_w(np.zeros((2, 3, 4)), spec, w))


def test_gttn_uniform_2x2x2_against_eigen_oracle():
    W = np.random.default_rng(0).standard_normal((2, 2, 2))
    spec = RegularizerSpec("GTTN", 3)
    expected = np.mean([eig_trace_norm(flatten(W, s)) for s in [(1,), (1, 2), (1, 3)]])
    assert reg_value(W, spec, WeightState.initial(spec)) == pytest.approx(expected, abs=1e-10)


def test_one_hot_value_and_subgradient():
    W = np.random.default_rng(1).standard_normal((2, 3, 4))
    spec = RegularizerSpec("GTTN", 3)
    for k, s in enumerate(spec.subsets):
        w = one_hot(3, k)
        assert abs(reg_value(W, spec, w) - eig_trace_norm(flatten(W, s))) < 1e-10
        single = unflatten(trace_norm_subgradient(flatten(W, s)), s, W.shape)
        assert np.allclose(reg_subgrad_w(W, spec, w), single, atol=1e-14)


def test_order_mismatch():
    spec = RegularizerSpec("GTTN", 3)
    with pytest.raises(ShapeError):
        reg_value(np.zeros((2, 2)), spec, WeightState.initial(spec))


def test_reg_subgrad_w_finite_differences():
    rng = np.random.default_rng(2)
    W = rng.standard_normal((2, 3, 4))
    spec = RegularizerSpec("GTTN", 3)
    w = WeightState.from_beta(rng.standard_normal(3))
    g = reg_subgrad_w(W, spec, w)
    for _ in range(10):
        E = rng.standard_normal(W.shape)
        fd = central_difference(lambda x: reg_value(x, spec, w), W, E)
        assert abs(fd - np.sum(g * E)) < 1e-4


def test_reg_grad_beta_examples():
    # a tensor whose three flattenings all have trace norm 1
    W = np.zeros((2, 2, 2))
    W[0, 0, 0] = 1.0
    spec = RegularizerSpec("GTTN", 3)
    assert np.allclose(flattening_norms(W, spec), 1.0)
    assert not np.any(reg_grad_beta(W, spec, WeightState.initial(spec), 0.7))
    with pytest.raises(InvalidModeError):
        reg_grad_beta(W, RegularizerSpec("Tucker", 3, "fixed-uniform"), WeightState.initial(spec), 1.0)
    with pytest.raises(ValueError):
        reg_grad_beta(W, spec, WeightState.initial(spec), -1.0)


def test_reg_grad_beta_finite_differences_and_two_term_form():
    rng = np.random.default_rng(3)
    W = rng.standard_normal((2, 3, 4))
    spec = RegularizerSpec("GTTN", 3)
    beta = rng.standard_normal(3)
    lam = 0.65
    w = WeightState.from_beta(beta)
    g = reg_grad_beta(W, spec, w, lam)
    assert abs(g.sum()) < 1e-12
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        fd = central_difference(lambda b: lam * reg_value(W, spec, WeightState.from_beta(b)), beta, e)
        assert abs(fd - g[k]) < 1e-6
    # two-term form: lam * (a_s n_s - a_s sum_t a_t n_t) computed via explicit softmax Jacobian
    n = flattening_norms(W, spec)
    a = w.alpha
    jac = np.diag(a) - np.outer(a, a)
    assert np.allclose(g, lam * jac @ n, atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(3, 5), st.floats(0, 5))
def test_beta_gradient_sums_to_zero(seed, p, lam):
    rng = np.random.default_rng(seed)
    norms = rng.uniform(0, 10, 2 ** (p - 1) - 1)
    g = beta_gradient(norms, alpha_from_beta(rng.standard_normal(norms.size)), lam)
    assert abs(g.sum()) < 1e-12


def test_min_form_value_examples():
    rng = np.random.default_rng(4)
    W = rng.standard_normal((2, 3, 4))
    spec = RegularizerSpec("GTTN", 3)
    value, subset = min_form_value(W, spec)
    vertices = [reg_value(W, spec, one_hot(3, k)) for k in range(3)]
    assert value == pytest.approx(min(vertices), abs=1e-12)
    assert subset == spec.subsets[int(np.argmin(vertices))]

    u, v = rng.standard_normal(3), rng.standard_normal(16)
    planted = unflatten(np.outer(u, v), AxisSubset((1,), 3), (3, 4, 4))
    value, subset = min_form_value(planted, spec)
    assert subset.label == "{1}"
    assert value == pytest.approx(np.linalg.norm(u) * np.linalg.norm(v), rel=1e-10)

    assert min_form_value(np.zeros((2, 2, 2)), spec) == (0.0, spec.subsets[0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([(2, 3, 4), (2, 2, 3, 2), (3, 2, 2, 2, 2)]))
def test_regularizer_properties(seed, shape):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal(shape)
    p = len(shape)
    spec = RegularizerSpec("GTTN", p)
    w = WeightState.from_beta(rng.standard_normal(len(spec.subsets)))
    val = reg_value(W, spec, w)

    comp = RegularizerSpec("GTTN", p, subsets=tuple(s.complement for s in spec.subsets))
    assert abs(reg_value(W, comp, w) - val) < 1e-8

    low, _ = min_form_value(W, spec)
    for _ in range(100):
        a = rng.dirichlet(np.ones(len(spec.subsets)))
        assert low <= reg_value(W, spec, WeightState.fixed(a / a.sum())) + 1e-10

    c = rng.uniform(-3, 3)
    assert reg_value(c * W, spec, w) == pytest.approx(abs(c) * val, rel=1e-10)

    tucker = RegularizerSpec("Tucker", p, "fixed-uniform")
    laf = RegularizerSpec("LAF", p)
    assert abs(reg_value(W, laf, WeightState.fixed([1.0]))
               - reg_value(W, tucker, one_hot(p, p - 1))) < 1e-10


def test_brute_force_enumeration_matches_all_2p_minus_2():
    # the reduced sum over canonical subsets carries the same information as all flattenings
    W = np.random.default_rng(5).standard_normal((2, 3, 2, 2))
    spec = RegularizerSpec("GTTN", 4)
    norms = dict(zip(labels(spec), flattening_norms(W, spec)))
    for k in range(1, 4):
        for s in itertools.combinations(range(1, 5), k):
            sub = AxisSubset(s, 4)
            assert abs(eig_trace_norm(flatten(W, sub)) - norms[sub.canonical().label]) < 1e-8
