import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ncmart.algebra import (
    DomainError,
    Operator,
    StructuralError,
    TracialAlgebra,
    clean_projection,
    distribution,
    is_projection,
    is_psd,
    left_support,
    leq_slack,
    lp_norm,
    modulus,
    mu,
    op_leq,
    positive_part,
    proj_meet,
    psd_sqrt,
    right_support,
    singular_value_function,
    spectral_data,
    spectral_projection,
    trace,
    weak_l1_from_values,
    weak_l1_norm,
)
from oracles import alternating_meet, random_projection, schatten_by_eigs, subspace_projection, weak_l1_by_scan

seeds = st.integers(min_value=0, max_value=2**32 - 1)
dims = st.integers(min_value=1, max_value=7)


def gaussian(seed, d):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))


# --- trace and norms ---------------------------------------------------------


def test_trace_is_normalized_by_default():
    assert trace(np.eye(5)) == pytest.approx(1.0)
    assert trace(np.eye(5), normalized=False) == pytest.approx(5.0)
    assert TracialAlgebra(3).trace(np.diag([3, 0, 0])) == pytest.approx(1.0)


def test_tracial_algebra_rejects_bad_shapes():
    with pytest.raises(StructuralError):
        TracialAlgebra(3).check(np.eye(2))
    with pytest.raises(StructuralError):
        TracialAlgebra(0)


@given(seeds, dims, st.sampled_from([1.0, 1.3, 2.0, 3.5, 8.0, np.inf]))
def test_lp_norm_matches_eigenvalue_formula(seed, d, p):
    x = gaussian(seed, d)
    assert lp_norm(x, p) == pytest.approx(schatten_by_eigs(x, p), rel=1e-10)


def test_lp_norm_examples():
    assert lp_norm(np.diag([3.0, 4.0]), 2) == pytest.approx(np.sqrt(12.5))
    assert lp_norm(np.diag([3.0, 4.0]), np.inf) == pytest.approx(4.0)
    assert lp_norm(np.zeros((3, 3)), 1.5) == 0.0
    # large exponents do not overflow
    assert lp_norm(np.diag([1e200, 0.0]), 4) == pytest.approx(1e200 * 0.5**0.25)


def test_lp_norm_rejects_small_p():
    with pytest.raises(DomainError):
        lp_norm(np.eye(2), 0.5)


@given(seeds, dims)
def test_weak_l1_matches_lambda_scan(seed, d):
    x = gaussian(seed, d)
    assert weak_l1_norm(x) == pytest.approx(weak_l1_by_scan(x), rel=1e-12)


@given(seeds, dims)
def test_weak_l1_dominated_by_l1(seed, d):
    x = gaussian(seed, d)
    assert weak_l1_norm(x) <= lp_norm(x, 1) + 1e-12


def test_weak_l1_examples():
    assert weak_l1_norm(np.diag([4.0, 0, 0, 0])) == pytest.approx(1.0)
    assert weak_l1_norm(np.diag([3.0, 1.0])) == pytest.approx(1.5)
    assert weak_l1_from_values([], 0.25) == 0.0
    assert weak_l1_from_values([1.0, 1.0, 2.0], 0.25) == pytest.approx(0.75)


@given(seeds, dims, st.floats(min_value=0.0, max_value=3.0))
def test_distribution_and_mu_are_inverse(seed, d, lam):
    x = gaussian(seed, d)
    t = distribution(x, lam)
    s = np.linalg.svd(x, compute_uv=False)
    assert t == pytest.approx(np.mean(s > lam))
    if t > 0:
        # just inside the mass above lam, the singular value function exceeds lam
        assert mu(x, t - 1e-12) > lam


def test_singular_value_function_steps():
    steps = singular_value_function(np.diag([1.0, 3.0]))
    assert steps == [(3.0, 0.5), (1.0, 0.5)]
    assert mu(np.diag([1.0, 3.0]), 0.0) == 3.0
    assert mu(np.diag([1.0, 3.0]), 0.5) == 1.0
    assert mu(np.diag([1.0, 3.0]), 1.0) == 0.0


# --- functional calculus -----------------------------------------------------


def test_spectral_projection_is_half_open():
    x = np.diag([0.0, 1.0, 2.0, 3.0])
    assert np.allclose(np.diag(spectral_projection(x, 1.0)), [0, 0, 1, 1])
    assert np.allclose(np.diag(spectral_projection(x, 1.0, 2.0)), [0, 0, 1, 0])
    # eigenvalue within round-off of the cut stays on the closed side
    assert np.allclose(np.diag(spectral_projection(np.diag([1.0 + 1e-13, 0.5]), 1.0)), [0, 0])


def test_spectral_projection_blockwise_stays_block_diagonal():
    rng = np.random.default_rng(3)
    h = rng.standard_normal((4, 4))
    h = h + h.T
    p = spectral_projection(h, 0.0, blocks=[[0, 1], [2, 3]])
    assert np.allclose(p[:2, 2:], 0) and is_projection(p)


def test_spectral_projection_needs_self_adjoint():
    with pytest.raises(DomainError):
        spectral_projection(np.array([[0, 1], [0, 0]]), 0.0)


@given(seeds, dims)
def test_spectral_data_reconstructs(seed, d):
    g = gaussian(seed, d)
    h = g + g.conj().T
    assert np.allclose(spectral_data(h).reconstruct(), h)


@given(seeds, dims)
def test_psd_sqrt_and_modulus(seed, d):
    g = gaussian(seed, d)
    r = psd_sqrt(g.conj().T @ g)
    assert np.allclose(r @ r, g.conj().T @ g)
    assert np.allclose(modulus(g), r)
    assert is_psd(r)


def test_psd_sqrt_rejects_negative():
    with pytest.raises(DomainError):
        psd_sqrt(np.diag([1.0, -1.0]))


def test_positive_part_splits_self_adjoint():
    h = np.diag([2.0, -3.0])
    assert np.allclose(positive_part(h) - positive_part(-h), h)


def test_clean_projection_rounds_spectrum():
    p = np.diag([1.0 - 1e-9, 2e-9, 1.0])
    assert np.allclose(clean_projection(p), np.diag([1.0, 0.0, 1.0]))


# --- projection lattice ------------------------------------------------------


@given(seeds, st.integers(min_value=3, max_value=8))
def test_meet_recovers_shared_subspace(seed, d):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(0, d - 1))
    shared = rng.standard_normal((d, k)) + 1j * rng.standard_normal((d, k))
    extra_p = rng.standard_normal((d, 1)) + 1j * rng.standard_normal((d, 1))
    extra_q = rng.standard_normal((d, 1)) + 1j * rng.standard_normal((d, 1))
    p = subspace_projection(np.hstack([shared, extra_p]))
    q = subspace_projection(np.hstack([shared, extra_q]))
    expected = subspace_projection(shared)
    assert np.allclose(proj_meet(p, q), expected, atol=1e-8)


@given(seeds, st.integers(min_value=2, max_value=8))
def test_meet_agrees_with_alternating_product(seed, d):
    rng = np.random.default_rng(seed)
    p = random_projection(rng, d, int(rng.integers(1, d + 1)))
    q = random_projection(rng, d, int(rng.integers(1, d + 1)))
    assert np.allclose(proj_meet(p, q), alternating_meet(p, q), atol=1e-6)


def test_meet_lattice_laws():
    rng = np.random.default_rng(0)
    p = random_projection(rng, 5, 3)
    assert np.allclose(proj_meet(p, np.eye(5)), p, atol=1e-10)
    assert np.allclose(proj_meet(p, np.zeros((5, 5))), 0)
    assert np.allclose(proj_meet(p, p), p, atol=1e-10)


def test_meet_shape_mismatch():
    with pytest.raises(StructuralError):
        proj_meet(np.eye(2), np.eye(3))


@given(seeds, dims)
def test_supports_fix_the_operator(seed, d):
    rng = np.random.default_rng(seed)
    rank = int(rng.integers(0, d + 1))
    x = (rng.standard_normal((d, rank)) @ rng.standard_normal((rank, d))).astype(complex)
    r, ell = right_support(x), left_support(x)
    assert np.allclose(x @ r, x) and np.allclose(ell @ x, x)
    assert trace(r, normalized=False).real == pytest.approx(rank)


def test_op_leq():
    assert op_leq(np.diag([1.0, 0.0]), np.eye(2))
    assert not op_leq(np.eye(2), np.diag([1.0, 0.0]))
    assert leq_slack(np.diag([1.0, 0.0]), np.eye(2)) == pytest.approx(0.0)
    with pytest.raises(DomainError):
        op_leq(np.array([[0, 1], [0, 0]]), np.eye(2))


# --- serialization -----------------------------------------------------------


@given(seeds, dims, st.booleans())
def test_operator_json_round_trip(seed, d, normalized):
    x = gaussian(seed, d)
    op = Operator.of(x, normalized)
    back = Operator.from_json(op.to_json())
    assert np.array_equal(back.entries, op.entries)
    assert back.algebra == op.algebra


def test_operator_schema():
    data = Operator.of(np.array([[1, 2j], [0, 1]])).to_dict()
    assert data["dim"] == 2 and data["trace"] == "normalized"
    assert data["entries"][1] == [0.0, 2.0]
    json.dumps(data)


@pytest.mark.parametrize(
    "bad",
    [
        {"dim": 2, "entries": [[1, 0]]},
        {"entries": []},
        {"dim": 1, "trace": "weird", "entries": [[1, 0]]},
    ],
)
def test_operator_rejects_malformed(bad):
    with pytest.raises(StructuralError):
        Operator.from_dict(bad)
