import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import chain_pair12_renyi

from mist.data import Dataset, studentize
from mist.ensemble import (DEFAULT_L_RANGE, BasisFunction, EnsembleConfig, EstimatorVariant,
                           bandwidth_schedule, basis_functions, ensemble_estimate, make_config,
                           plugin_estimate, solve_weights)
from mist.errors import NumericalError, ValidationError
from mist.functionals import SHANNON, renyi
from mist.structure import FactorTree, pairwise_decomposition, ratio_decomposition
from mist.synthetic import ChainSpec, gaussian_pair_samples, gen_chain

PAIR = EstimatorVariant("odin1_pairwise")
CHAIN3 = ratio_decomposition(FactorTree(3, ((0, 1), (1, 2))))


def test_schedule_examples():
    assert bandwidth_schedule(PAIR, 16, 2, 2.0) == pytest.approx(1.0, abs=1e-15)
    assert bandwidth_schedule(EstimatorVariant("odin1_full"), 16, 2, 1.0) == pytest.approx(0.5)
    assert bandwidth_schedule(EstimatorVariant("odin2_full", delta=1.0), 16, 3, 1.0) == \
        pytest.approx(0.5)
    assert bandwidth_schedule(EstimatorVariant("plugin"), 16, 3, 0.37) == 0.37
    with pytest.raises(ValidationError):
        bandwidth_schedule(PAIR, 1, 2, 1.0)
    with pytest.raises(ValidationError):
        bandwidth_schedule(PAIR, 10, 2, 0.0)


def _exponents(variant, d):
    return [b.exponent for b in basis_functions(variant, d)]


def test_basis_examples():
    assert _exponents(PAIR, 3) == [1.0, 2.0]
    assert _exponents(EstimatorVariant("odin1_full", s_smoothness=3), 2) == [1.0, 2.0, 3.0]
    assert _exponents(EstimatorVariant("odin1_full"), 4) == [1.0, 2.0, 3.0, 4.0]
    assert basis_functions(EstimatorVariant("plugin"), 2) == []


def _odin2_brute(d, delta):
    m_hi = math.floor((d + delta) / 2)
    q1 = math.floor((d + delta) / delta)
    q2 = max(1, math.floor((d + delta) / (2 * (d + delta - 2))))
    fam1 = {m - d * q for m in range(m_hi + 1) for q in range(q1 + 1) if m + q}
    fam2 = {m - 2 * q for m in range(m_hi + 1) for q in range(1, q2 + 1)}
    return (fam1 | fam2) - {0}


def test_odin2_basis_d3():
    got = set(_exponents(EstimatorVariant("odin2_full", delta=1.0), 3))
    assert got == _odin2_brute(3, 1.0)
    assert got == {1, 2, -1, -2, -3, -4, -5, -6, -7, -8, -9, -10, -11, -12}


@pytest.mark.parametrize("d, delta", [(2, 1.0), (3, 1.0), (4, 0.5), (5, 2.0), (2, 0.5)])
def test_odin2_basis_matches_enumeration(d, delta):
    ex = _exponents(EstimatorVariant("odin2_full", delta=delta), d)
    assert len(ex) == len(set(ex)) and 0.0 not in ex
    assert set(ex) == _odin2_brute(d, delta)


def test_odin2_degenerate_range_rejected():
    with pytest.raises(ValidationError):
        basis_functions(EstimatorVariant("odin2_full", delta=1.0), 1)


def test_basis_evaluates_to_one_at_one():
    for v, d in [(PAIR, 2), (EstimatorVariant("odin2_full"), 3), (EstimatorVariant("odin1_full"), 5)]:
        assert all(b(1.0) == 1.0 for b in basis_functions(v, d))


def test_variant_and_config_validation():
    with pytest.raises(ValidationError):
        EstimatorVariant("odin3")
    with pytest.raises(ValidationError):
        EstimatorVariant("odin2_full", delta=0.0)
    with pytest.raises(ValidationError):
        EnsembleConfig(l_set=(1.0, 1.0))
    with pytest.raises(ValidationError):
        EnsembleConfig(l_set=(1.0, -2.0))
    with pytest.raises(ValidationError):
        EnsembleConfig(weight_mode="loose")
    cfg = EnsembleConfig()
    assert cfg.L == 50 and cfg.l_set[0] == DEFAULT_L_RANGE[0] and cfg.tau(400) == 0.05


def _basis(*exps):
    return [BasisFunction(float(r)) for r in exps]


def test_weight_examples():
    assert solve_weights([1.0], []).weights.tolist() == [1.0]
    w = solve_weights([1.0, 2.0], _basis(1))
    np.testing.assert_allclose(w.weights, [2.0, -1.0], atol=1e-12)
    assert w.norm2 ** 2 == pytest.approx(5.0)
    w = solve_weights([1.0, 2.0, 3.0], _basis(1))
    np.testing.assert_allclose(w.weights, [4 / 3, 1 / 3, -2 / 3], atol=1e-10)
    assert w.norm2 ** 2 == pytest.approx(7 / 3)
    assert np.all(w.residuals <= 1e-12)


def test_exact_weights_default_pairwise_set():
    l_set = np.linspace(1.0, 3.0, 50)
    w = solve_weights(l_set, basis_functions(PAIR, 2)).weights
    assert abs(w.sum() - 1) <= 1e-10
    for m in (1, 2):
        assert abs(np.dot(w, l_set ** m)) <= 1e-8


def test_exact_mode_needs_enough_members():
    with pytest.raises(NumericalError):
        solve_weights([1.0, 2.0], _basis(1, 2))
    with pytest.raises(ValidationError):
        solve_weights([1.0], [], mode="fuzzy")


@settings(max_examples=30)
@given(st.integers(3, 30), st.integers(1, 3), st.integers(0, 10_000))
def test_exact_weights_are_least_norm(L, n_basis, seed):
    rng = np.random.default_rng(seed)
    l_set = np.sort(rng.uniform(0.5, 4.0, L))
    if np.min(np.diff(l_set)) < 1e-3 or L < n_basis + 1:
        return
    basis = _basis(*range(1, n_basis + 1))
    w0 = solve_weights(l_set, basis).weights
    A = np.vstack([np.ones(L)] + [l_set ** m for m in range(1, n_basis + 1)])
    _, s, vt = np.linalg.svd(A)
    null = vt[len(s):]
    b = np.zeros(A.shape[0])
    b[0] = 1
    np.testing.assert_allclose(A @ w0, b, atol=1e-8)
    for _ in range(5):
        if null.shape[0] == 0:
            break
        w1 = w0 + null.T @ rng.normal(size=null.shape[0])
        assert np.linalg.norm(w0) <= np.linalg.norm(w1) + 1e-8


def test_relaxed_at_zero_tau_is_exact():
    l_set = np.linspace(2, 6, 50)
    exact = solve_weights(l_set, basis_functions(PAIR, 2))
    relaxed = solve_weights(l_set, basis_functions(PAIR, 2), mode="relaxed", tau=0.0)
    np.testing.assert_allclose(relaxed.weights, exact.weights, atol=1e-12)


@pytest.mark.parametrize("tau", [0.01, 0.05, 0.2])
def test_relaxed_bounds_and_optimality(tau):
    l_set = np.linspace(2, 6, 12)
    basis = _basis(1, 2)
    rw = solve_weights(l_set, basis, mode="relaxed", tau=tau)
    assert abs(rw.weights.sum() - 1) <= 1e-10
    assert np.all(rw.residuals <= tau + 1e-8)
    ex = solve_weights(l_set, basis)
    assert rw.norm2 <= ex.norm2 + 1e-12
    assert rw.norm2 ** 2 <= _relaxed_reference(l_set, [1, 2], tau) + 1e-9


def _relaxed_reference(l_set, exps, tau):
    """Smallest squared norm over every active-set pattern (each row free, +tau or -tau)."""
    psi = np.vstack([l_set ** r for r in exps])
    best = np.inf
    for signs in itertools.product((0, 1, -1), repeat=len(exps)):
        active = [r for r, s in enumerate(signs) if s]
        A = np.vstack([np.ones_like(l_set)] + [psi[r] for r in active])
        b = np.array([1.0] + [signs[r] * tau for r in active])
        w = np.linalg.pinv(A) @ b
        if np.allclose(A @ w, b, atol=1e-9) and np.all(np.abs(psi @ w) <= tau + 1e-9):
            best = min(best, float(w @ w))
    return best


def test_relaxed_odin2_is_feasible():
    basis = basis_functions(EstimatorVariant("odin2_full"), 3)
    w = solve_weights(np.linspace(2, 6, 50), basis, mode="relaxed", tau=1 / math.sqrt(500))
    assert abs(w.weights.sum() - 1) <= 1e-10 and np.all(w.residuals <= 1 / math.sqrt(500) + 1e-8)


def test_weights_are_cached_and_read_only():
    a = solve_weights(np.linspace(2, 6, 50), basis_functions(PAIR, 2))
    b = solve_weights(np.linspace(2, 6, 50), basis_functions(PAIR, 2))
    assert a is b
    with pytest.raises(ValueError):
        a.weights[0] = 0.0


def test_plugin_examples(hand3):
    rng = np.random.default_rng(3)
    data = Dataset(rng.normal(size=(50, 3)))
    assert plugin_estimate(data, CHAIN3, renyi(0.0), 0.7) == 1.0
    assert plugin_estimate(hand3, CHAIN3, SHANNON, 0.5) == 0.0
    with pytest.raises(ValidationError):
        plugin_estimate(data, CHAIN3, SHANNON, 0.0)


def test_plugin_gaussian_shannon():
    data = gaussian_pair_samples(5000, 0.5, np.random.default_rng(11))
    est = plugin_estimate(data, pairwise_decomposition(0, 1), SHANNON, 0.25)
    # Plug-in estimates are -MI for Shannon.
    assert abs(-est - 0.14384) <= 0.05


def test_single_member_equals_plugin():
    data = studentize(gen_chain(ChainSpec(300, 0.2, 5)))
    target = pairwise_decomposition(0, 1)
    cfg = EnsembleConfig(PAIR, (2.5,), "relaxed", relax_bound=10.0)
    res = ensemble_estimate(data, target, renyi(0.5), cfg)
    assert res.weights.weights.tolist() == [1.0]
    h = bandwidth_schedule(PAIR, 300, 2, 2.5)
    assert res.estimate == plugin_estimate(data, target, renyi(0.5), h)


def test_constant_members_give_constant():
    data = studentize(gen_chain(ChainSpec(100, 0.2, 4)))
    cfg = EnsembleConfig(EstimatorVariant("odin1_full"), tuple(np.linspace(2, 6, 8)))
    res = ensemble_estimate(data, CHAIN3, renyi(0.0), cfg)
    assert all(m.value == 1.0 for m in res.members)
    assert abs(res.estimate - 1.0) <= 1e-12


def test_members_report_schedule():
    data = studentize(gen_chain(ChainSpec(200, 0.3, 1)))
    cfg = make_config("odin1", "pairwise", 200, 3)
    res = ensemble_estimate(data, pairwise_decomposition(1, 2), renyi(0.5), cfg)
    assert len(res.members) == 50
    for m in res.members:
        assert m.h == pytest.approx(m.l * 200 ** -0.25)
    assert res.estimate == pytest.approx(res.weights.weights @ [m.value for m in res.members],
                                         rel=1e-12)


def test_make_config_variants():
    assert make_config("odin1", "model", 500, 3).variant.kind == "odin1_full"
    assert make_config("odin2", "model", 500, 3).variant.kind == "odin2_full"
    assert make_config("odin2", "pairwise", 500, 3).variant.kind == "odin1_pairwise"
    p = make_config("plugin", "pairwise", 500, 3)
    assert p.variant.kind == "plugin" and p.l_set == (pytest.approx(4.0 * 500 ** -0.25),)
    assert make_config("plugin", "pairwise", 500, 3, bandwidth=0.3).l_set == (0.3,)
    with pytest.raises(ValidationError):
        make_config("knn", "pairwise", 500, 3)
    with pytest.raises(ValidationError):
        make_config("odin1", "joint", 500, 3)


def test_determinism():
    data = studentize(gen_chain(ChainSpec(300, 0.1, 2)))
    cfg = make_config("odin1", "model", 300, 3)
    a = ensemble_estimate(data, CHAIN3, renyi(0.5), cfg).estimate
    b = ensemble_estimate(data, CHAIN3, renyi(0.5), cfg).estimate
    assert a == b


def _exp1_pair12(n, seeds, cfg):
    out = []
    for s in seeds:
        data = studentize(gen_chain(ChainSpec(n, 0.1, s)))
        out.append(ensemble_estimate(data, pairwise_decomposition(0, 1), renyi(0.5), cfg))
    return out


def test_exp1_pair_estimate_range():
    cfg = make_config("odin1", "pairwise", 500, 3)
    est = np.array([r.estimate for r in _exp1_pair12(500, range(100), cfg)])
    assert np.all((est >= 0.2) & (est <= 0.95)), \
        f"{np.mean((est < 0.2) | (est > 0.95)):.0%} of seeds outside [0.2, 0.95]"


@pytest.mark.slow
def test_ensemble_mse_against_best_member():
    truth = chain_pair12_renyi(0.1)
    cfg = make_config("odin1", "pairwise", 500, 3)
    res = _exp1_pair12(500, range(100), cfg)
    ens = np.array([r.estimate for r in res])
    members = np.array([[m.value for m in r.members] for r in res])
    ens_mse = np.mean((ens - truth) ** 2)
    best = np.min(np.mean((members - truth) ** 2, axis=0))
    assert ens_mse <= 1.5 * best, f"ensemble MSE {ens_mse:.3g} vs best member {best:.3g}"


@pytest.mark.slow
def test_ensemble_bias_shrinks_with_n():
    truth = chain_pair12_renyi(0.1)
    bias = []
    for n in (500, 1000):
        cfg = make_config("odin1", "pairwise", n, 3)
        bias.append(abs(np.mean([r.estimate for r in _exp1_pair12(n, range(60), cfg)]) - truth))
    assert bias[1] < bias[0], f"|bias| {bias[0]:.3g} at N=500, {bias[1]:.3g} at N=1000"
