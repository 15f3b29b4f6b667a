import math

import numpy as np
import pytest

from ncmart import harness as hs
from ncmart.algebra import DomainError, StructuralError
from ncmart.filtration import Pinching, Tensor, martingale_from_terminal
from ncmart.norms import BMO_REVERSE_CONSTANT, bmo_norms
from conftest import diag_of
from oracles import scalar_cond_square, scalar_diag_norm, scalar_differences, scalar_lp, scalar_martingale, scalar_square

SMALL = hs.EnsembleSpec(dim=4, levels=3, trials=6, seed=3)


def test_build_filtration():
    assert hs.build_filtration("tensor", 8, 4).dims == (1, 2, 2, 2)
    assert hs.build_filtration("tensor", 16, 3).dims == (4, 2, 2)
    assert len(hs.build_filtration("pinching", 8, 4).blocks(1)) == 8
    with pytest.raises(StructuralError):
        hs.build_filtration("tensor", 6, 3)
    with pytest.raises(StructuralError):
        hs.build_filtration("free", 8, 4)


def test_trial_seeds_are_replayable():
    spec = hs.EnsembleSpec(dim=4, levels=3, trials=4, seed=11)
    stream = list(spec.trial_stream())
    F = spec.build()
    for i, (seed, m) in enumerate(stream):
        assert seed == [11, i]
        assert np.array_equal(spec.sample(F, i).terminal, m.terminal)


def test_empty_suite_passes():
    res = hs.run_weak_type_suite(hs.EnsembleSpec(trials=0))
    assert res.passed and res.checks == {}
    assert hs.run_regular_suite(hs.EnsembleSpec(trials=0)).passed


@pytest.mark.parametrize("family", ["pinching", "tensor", "diagonal"])
def test_weak_type_suite_passes_small(family):
    spec = hs.EnsembleSpec(dim=8, levels=3, trials=5, seed=1, filtration=family)
    res = hs.run_weak_type_suite(spec)
    assert res.passed, [c.to_dict() for c in res.failures()]
    assert res.checks["abc.exactness"].trials == 5


def test_zero_martingale_injection():
    zero = martingale_from_terminal(np.zeros((4, 4)), Pinching.dyadic(4, 3))
    res = hs.run_weak_type_suite(hs.EnsembleSpec(dim=4, levels=3, trials=0), inject=[zero])
    assert res.passed
    assert res.checks["abc.theta_weak"].max_observed == 0.0
    assert res.checks["abc.theta_weak"].worst_seed is None


def test_failures_carry_seed():
    res = hs.run_weak_type_suite(SMALL, tol=-1.0)
    assert not res.passed
    for c in res.failures():
        assert c.worst_seed is not None and c.worst_seed[0] == 3


def test_suite_output_is_deterministic():
    a = hs.run_weak_type_suite(SMALL).to_dict()
    b = hs.run_weak_type_suite(SMALL).to_dict()
    assert a == b


def test_regular_suite_excludes_non_regular(demo):
    spec = hs.EnsembleSpec(dim=4, levels=3, trials=3, seed=2, k=1.5)
    res = hs.run_regular_suite(spec, inject=[demo])
    assert res.passed
    assert res.excluded == [(None, "not 1.5-regular at level 2")]
    assert res.checks["regular.sigma_y_weak"].trials == 3


def test_regular_suite_constant_martingale():
    const = martingale_from_terminal(np.eye(4), Pinching.dyadic(4, 3))
    res = hs.run_regular_suite(hs.EnsembleSpec(dim=4, levels=3, trials=0), inject=[const])
    assert res.passed and not res.excluded


# --- constants ---------------------------------------------------------------


def test_constants_empty_grid():
    report = hs.estimate_constants(SMALL, [])
    assert report.records == [] and report.slopes == {}


@pytest.mark.parametrize("p", [0.5, math.inf])
def test_constants_reject_bad_p(p):
    with pytest.raises(DomainError):
        hs.estimate_constants(SMALL, [p])


@pytest.mark.parametrize("family", ["pinching", "tensor"])
def test_constants_p2_row_is_one(family):
    spec = hs.EnsembleSpec(dim=8, levels=3, trials=5, seed=5, filtration=family)
    rows = hs.estimate_constants(spec, [2.0]).rows(2.0)
    assert set(rows) == set(hs.RATIOS)
    for r in rows.values():
        assert r.max == pytest.approx(1.0, abs=1e-8) and r.exact


def test_constants_flags_small_p_as_proxies():
    rows = hs.estimate_constants(SMALL, [1.5]).rows(1.5)
    assert not any(r.exact for r in rows.values())


def test_constants_diagonal_match_scalar_oracle():
    spec = hs.EnsembleSpec(dim=8, levels=3, trials=5, seed=9, filtration="diagonal")
    p = 4.0
    rows = hs.estimate_constants(spec, [p]).rows(p)
    F = spec.build()
    ratios = {name: [] for name in hs.RATIOS}
    for _, m in spec.trial_stream():
        xs = scalar_martingale(diag_of(m.terminal), F.partitions)
        dx = scalar_differences(xs)
        norms = {
            "L": scalar_lp(xs[-1], p),
            "H": scalar_lp(scalar_square(dx), p),
            "h": max(scalar_diag_norm(dx, p), scalar_lp(scalar_cond_square(dx, F.partitions), p)),
        }
        for name, (num, den) in hs.RATIOS.items():
            ratios[name].append(norms[num] / norms[den])
    for name, values in ratios.items():
        assert rows[name].max == pytest.approx(max(values), rel=1e-10)
        assert rows[name].mean == pytest.approx(np.mean(values), rel=1e-10)


def test_constants_slopes_recorded():
    report = hs.estimate_constants(SMALL, [1.25, 1.5, 4.0, 8.0])
    for name in hs.RATIOS:
        assert set(report.slopes[name]) == {"near_one", "large_p"}
        assert report.slopes[name]["large_p"] is not None


# --- BMO and Khintchine ------------------------------------------------------


def test_bmo_suite_passes():
    res = hs.run_bmo_suite((2, 2, 2), trials=10, seed=4)
    assert res.passed, [c.to_dict() for c in res.failures()]
    assert res.checks["bmo.reverse_ratio"].threshold == pytest.approx(BMO_REVERSE_CONSTANT + hs.TOL_OPERATOR)


def test_bmo_single_term_both_directions():
    res = hs.run_bmo_suite((3,), trials=5, seed=1)
    assert res.passed
    assert res.checks["bmo.upper_ratio"].trials == 5


def test_khintchine_single_term_with_unit_coefficient():
    g = np.diag([1.0, -1.0]).astype(complex)
    ratio = hs.khintchine_ratio([g], [np.eye(1)])
    assert ratio == pytest.approx(bmo_norms(g, Tensor((2,)), base="scalar")[2])
    assert ratio == pytest.approx(1.0)


def test_khintchine_zero_coefficients_excluded():
    g = np.diag([1.0, -1.0]).astype(complex)
    assert hs.khintchine_ratio([g, g], [np.zeros((2, 2)), np.zeros((2, 2))]) is None


def test_khintchine_scenario_band():
    report = hs.run_khintchine_scenario([2, 2, 2], b_dim=2, trials=10, seed=3)
    assert report.trials == 10 and report.excluded == 0
    assert 0 < report.min_ratio <= report.max_ratio < math.inf
    assert report.alpha > 0 and report.beta >= report.alpha
    assert hs.run_khintchine_scenario([2, 2, 2], 2, 10, 3) == report


def test_khintchine_errors():
    with pytest.raises(DomainError):
        hs.run_khintchine_scenario([np.zeros((2, 2))], trials=1)
    with pytest.raises(DomainError):
        hs.run_khintchine_scenario([np.eye(2)], trials=1)
