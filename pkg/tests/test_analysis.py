import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gttn.analysis import (
    AlphaReport,
    BoundInputs,
    alpha_report,
    bound_report,
    complexity_terms,
    dual_norm_upper_bound,
    estimate_kappa,
    generalization_bound,
    write_bound_csv,
)
from gttn.data import Dataset
from gttn.regularizers import RegularizerSpec, WeightState, reg_value
from gttn.tensor_core import canonical_subsets, flatten, inner_product
from gttn.trainer import TrainedRun, TrainConfig
from oracles import bound_oracle


def random_inputs(rng, p=None):
    p = p or int(rng.integers(2, 6))
    dims = tuple(int(x) for x in rng.integers(1, 9, p))
    dims = dims[:-1] + (max(dims[-1], 2),)
    k = 2 ** (p - 1) - 1
    return BoundInputs(
        rho=float(rng.uniform(0.1, 3)), gamma=float(rng.uniform(0.1, 5)),
        kappa=float(rng.uniform(0.1, 10)), delta=float(rng.uniform(0.01, 0.5)),
        dims=dims, n0=int(rng.integers(5, 500)), alpha=tuple(rng.dirichlet(np.ones(k))),
        C=float(rng.uniform(0.5, 2)),
    )


def test_dual_bound_examples():
    assert dual_norm_upper_bound(np.zeros((2, 3, 4)), [1 / 3] * 3) == 0.0
    X = np.random.default_rng(0).standard_normal((2, 3, 4))
    for k, s in enumerate(canonical_subsets(3)):
        a = np.zeros(3)
        a[k] = 1.0
        assert dual_norm_upper_bound(X, a) == np.linalg.norm(flatten(X, s), 2)


@pytest.mark.parametrize("shape", [(2, 3, 4), (2, 2, 3, 2), (2, 2, 2, 2, 2)])
def test_holder_inequality(shape):
    rng = np.random.default_rng(len(shape))
    spec = RegularizerSpec("GTTN", len(shape))
    for _ in range(100):
        W, X = rng.standard_normal(shape), rng.standard_normal(shape)
        a = rng.dirichlet(np.ones(len(spec.subsets)))
        a /= a.sum()
        lhs = inner_product(W, X)
        assert lhs <= reg_value(W, spec, WeightState.fixed(a)) * dual_norm_upper_bound(X, a) + 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(-4, 4))
def test_dual_bound_homogeneity(seed, c):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((2, 3, 2))
    a = rng.dirichlet(np.ones(3))
    assert dual_norm_upper_bound(c * X, a) == pytest.approx(abs(c) * dual_norm_upper_bound(X, a),
                                                            rel=1e-10, abs=1e-12)


def test_bound_specific_instance():
    b = BoundInputs(1, 1, 1, 0.05, (8, 8, 4), 100, (1 / 3, 1 / 3, 1 / 3), C=1)
    expected = bound_oracle(1, 1, 1, 0.05, 1, (8, 8, 4), 100, [1 / 3] * 3, 0.2)
    assert abs(generalization_bound(b, 0.2) - expected) < 1e-12


def test_bound_matches_oracle_on_random_inputs():
    rng = np.random.default_rng(7)
    for _ in range(20):
        b = random_inputs(rng)
        emp = float(rng.uniform(0, 1))
        for conf in ("theorem", "proof"):
            want = bound_oracle(b.rho, b.gamma, b.kappa, b.delta, b.C, b.dims, b.n0, b.alpha, emp, conf)
            assert abs(generalization_bound(b, emp, conf) - want) < 1e-12


def test_bound_monotonicity():
    rng = np.random.default_rng(8)
    for _ in range(50):
        b = random_inputs(rng)
        emp = 0.3
        base = generalization_bound(b, emp)
        assert base >= emp
        f = float(rng.uniform(1.01, 3))
        bigger = lambda **kw: generalization_bound(BoundInputs(**{**vars(b), **kw}), emp)
        assert bigger(n0=b.n0 * 2) < base
        assert bigger(rho=b.rho * f) >= base
        assert bigger(gamma=b.gamma * f) >= base
        assert bigger(kappa=b.kappa * f) >= base
        assert bigger(delta=b.delta / f) >= base
        # unnormalized weights: raising one alpha never raises the min term
        a = np.array(b.alpha)
        k = int(rng.integers(len(a)))
        raised = a.copy()
        raised[k] *= f
        before = min(t for _, _, t in complexity_terms(b.dims, b.n0, b.kappa, a))
        after = min(t for _, _, t in complexity_terms(b.dims, b.n0, b.kappa, raised))
        assert after <= before


def test_bound_input_validation():
    with pytest.raises(ValueError):
        BoundInputs(1, 1, 1, 1.5, (2, 2), 10, (1.0,))
    with pytest.raises(ValueError):
        BoundInputs(1, 1, 1, 0.1, (2, 2, 2), 10, (0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        BoundInputs(0, 1, 1, 0.1, (2, 2), 10, (1.0,))


def test_zero_alpha_term_is_infinite():
    terms = complexity_terms((2, 3, 4), 10, 1.0, (0.0, 0.5, 0.5))
    assert terms[0][2] == float("inf") and np.isfinite(terms[1][2])


def test_kappa_identity_design():
    c = 1.5
    X = np.stack([c * np.eye(4)[k].reshape(2, 2) for k in range(4)])
    ds = Dataset([X], [np.ones(4)])
    # vectorized moment c^2/4 I_4; each matrix flattening gives c^2/2 I_2; d = 4
    assert estimate_kappa(ds) == pytest.approx(4 * c ** 2 / 2, rel=1e-14)
    scaled = Dataset([3 * X], [np.ones(4)])
    assert estimate_kappa(scaled) == pytest.approx(9 * estimate_kappa(ds), rel=1e-12)


def test_kappa_single_example_outer_product():
    x = np.random.default_rng(9).standard_normal((2, 3, 2))
    ds = Dataset([x[None]], [np.ones(1)])
    best = 0.0
    for k in range(1, 4):
        for s in itertools.combinations(range(1, 4), k):
            M = x.reshape(-1, 1) if k == 3 else flatten(x, s)
            best = max(best, np.linalg.eigvalsh(M @ M.T).max())
    assert estimate_kappa(ds) == pytest.approx(x.size * best, rel=1e-12)
    assert estimate_kappa(ds) == pytest.approx(x.size * np.sum(x * x), rel=1e-12)


def test_alpha_report_tie_and_labels(tmp_path):
    spec = RegularizerSpec("GTTN", 3)
    run = TrainedRun(None, spec, TrainConfig(lam=0.1), WeightState.initial(spec),
                     alpha_trace=[(0, np.full(3, 1 / 3))])
    rep = alpha_report(run)
    assert [r[0] for r in rep.rows()] == ["{1}", "{1,2}", "{1,3}"]
    assert [r[2] for r in rep.rows()] == [True, False, False]
    assert sum(r[1] for r in rep.rows()) == pytest.approx(1.0)
    rep.write_csv(tmp_path / "a.csv")
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "subset,alpha,is_max"
    rep2 = AlphaReport(list(spec.subsets), np.array([0.2, 0.5, 0.3]))
    assert rep2.max_subset.label == "{1,2}" and "*max" in rep2.to_text()


def test_bound_report_csv(tmp_path):
    b = BoundInputs(1, 1, 1, 0.05, (8, 8, 4), 100, (0.6, 0.3, 0.1))
    rep = bound_report(b, 0.1)
    assert rep["argmin"] == "{1}" and sum(r["is_min"] for r in rep["rows"]) == 1
    write_bound_csv(rep, tmp_path / "b.csv")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "subset,d_s,alpha,term,is_min" and len(lines) == 4
