"""Diagonal filtrations against the per-atom scalar oracle, to 1e-10."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ncmart import cuculescu as cc
from ncmart import decompose as dc
from ncmart.algebra import lp_norm, weak_l1_norm
from ncmart.filtration import Diagonal, differences, random_martingale
from ncmart.norms import (
    bmo_norms,
    diag_embed_weak_l1,
    diag_norm,
    h_norm,
    hardy_norm,
    s_col,
    s_row,
    sigma_col,
    sigma_row,
)
from conftest import diag_of
from oracles import (
    scalar_bmo,
    scalar_cond_square,
    scalar_diag_norm,
    scalar_differences,
    scalar_h_norm_candidate,
    scalar_lp,
    scalar_martingale,
    scalar_positive_parts,
    scalar_square,
    scalar_triple,
    scalar_weak_l1,
)

TOL = 1e-10
seeds = st.integers(min_value=0, max_value=2**32 - 1)
FILTRATIONS = {
    "dyadic-8": Diagonal.dyadic(8, 4),
    "dyadic-16": Diagonal.dyadic(16, 3),
    "uneven": Diagonal([[[0, 1, 2, 3, 4, 5]], [[0, 1, 2], [3, 4, 5]], [[0], [1, 2], [3], [4, 5]], [[k] for k in range(6)]]),
}
families = st.sampled_from(sorted(FILTRATIONS))
PS = [1.0, 1.25, 1.5, 2.0, 4.0, 8.0]


def close(a, b):
    return a == pytest.approx(b, rel=TOL, abs=TOL)


@given(families, seeds, st.sampled_from(["positive-normalized", "self-adjoint", "general"]))
def test_martingale_and_square_functions(name, seed, mode):
    F = FILTRATIONS[name]
    m = random_martingale(F, seed, mode)
    xs = scalar_martingale(diag_of(m.terminal), F.partitions)
    dx = scalar_differences(xs)
    for n in range(1, m.levels + 1):
        assert np.allclose(diag_of(m.x(n)), xs[n - 1], rtol=0, atol=TOL)
    s = scalar_square(dx)
    sig = scalar_cond_square(dx, F.partitions)
    assert np.allclose(diag_of(s_col(m)), s, atol=TOL) and np.allclose(diag_of(s_row(m)), s, atol=TOL)
    assert np.allclose(diag_of(sigma_col(m)), sig, atol=TOL) and np.allclose(diag_of(sigma_row(m)), sig, atol=TOL)


@given(families, seeds, st.sampled_from(["positive-normalized", "general"]))
def test_every_norm(name, seed, mode):
    F = FILTRATIONS[name]
    m = random_martingale(F, seed, mode)
    f = diag_of(m.terminal)
    xs = scalar_martingale(f, F.partitions)
    dx = scalar_differences(xs)
    for p in PS:
        assert close(lp_norm(m.terminal, p), scalar_lp(f, p))
        assert close(diag_norm(differences(m), p), scalar_diag_norm(dx, p))
        # classical H^p is the square function norm for every p
        assert close(hardy_norm(m, p)[0], scalar_lp(scalar_square(dx), p))
        sig = scalar_lp(scalar_cond_square(dx, F.partitions), p)
        if p >= 2:
            expected_h = max(scalar_diag_norm(dx, p), sig)
        else:
            expected_h = min(scalar_diag_norm(dx, p), sig, scalar_h_norm_candidate(f, F.partitions, p))
        assert close(h_norm(m, p)[0], expected_h)
    assert close(bmo_norms(m.terminal, F)[2], scalar_bmo(f, F.partitions))
    assert close(weak_l1_norm(m.terminal), scalar_weak_l1(f, 1.0 / len(f)))


@given(families, seeds)
def test_positive_decomposition(name, seed):
    F = FILTRATIONS[name]
    m = random_martingale(F, seed, "positive-normalized")
    xs = scalar_martingale(diag_of(m.terminal), F.partitions)
    a, b, c = scalar_triple(xs)
    t = dc.abc_decompose(m)
    for n in range(m.levels):
        assert np.allclose(t.a[n], np.diag(a[n]), atol=TOL)
        assert np.allclose(t.b[n], np.diag(b[n]), atol=TOL)
        assert np.allclose(t.c[n], np.diag(c[n]), atol=TOL)
    d = len(xs[0])
    w = dc.abc_weak_report(t, m)
    assert close(w.theta_w, scalar_weak_l1(np.concatenate(a), 1.0 / d))
    assert close(w.sigma_b_w, scalar_weak_l1(scalar_cond_square(b, F.partitions), 1.0 / d))
    assert close(w.sigma_c_w, 0.0)
    assert close(diag_embed_weak_l1(t.a), w.theta_w)
    pair = dc.yz_decompose(m)
    for got, want in zip(differences(pair.y), scalar_differences(xs)):
        assert np.allclose(got, np.diag(want), atol=TOL)
    assert all(np.allclose(dz, 0, atol=TOL) for dz in differences(pair.z))


@given(families, seeds)
def test_general_decomposition(name, seed):
    F = FILTRATIONS[name]
    m = random_martingale(F, seed, "general")
    f = diag_of(m.terminal)
    split = dc.positive_split(m)
    for part, want in zip(split.parts, scalar_positive_parts(f)):
        assert np.allclose(part.terminal, np.diag(want), atol=TOL)
    a = [np.zeros(len(f), dtype=complex) for _ in range(m.levels)]
    b = [np.zeros(len(f), dtype=complex) for _ in range(m.levels)]
    for coef, part in zip(dc.SPLIT_COEFFICIENTS, scalar_positive_parts(f)):
        ta, tb, _ = scalar_triple(scalar_martingale(part, F.partitions))
        a = [u + coef * v for u, v in zip(a, ta)]
        b = [u + coef * v for u, v in zip(b, tb)]
    t = dc.abc_decompose_general(m)
    for n in range(m.levels):
        assert np.allclose(t.a[n], np.diag(a[n]), atol=TOL)
        assert np.allclose(t.b[n], np.diag(b[n]), atol=TOL)
        assert np.allclose(t.c[n], 0, atol=TOL)


@given(families, seeds)
def test_regular_pair_weak_norm(name, seed):
    from ncmart.filtration import random_regular_martingale

    F = FILTRATIONS[name]
    m = random_regular_martingale(F, seed, 2.0)
    xs = scalar_martingale(diag_of(m.terminal), F.partitions)
    sig = scalar_cond_square(scalar_differences(xs), F.partitions)
    r = dc.regular_weak_report(m, 2.0)
    assert close(r.sigma_y_w, scalar_weak_l1(sig, 1.0 / len(sig)))
    assert close(r.sigma_z_w, 0.0)


@given(families, seeds, st.sampled_from([0.5, 1.0, 2.0, 4.0]))
def test_compression_energy(name, seed, lam):
    F = FILTRATIONS[name]
    m = random_martingale(F, seed, "positive-normalized")
    xs = scalar_martingale(diag_of(m.terminal), F.partitions)
    from oracles import stopping_indicators

    q = stopping_indicators(xs, lam)
    total = scalar_lp(q[0] * xs[0], 2) ** 2
    for n in range(1, len(xs)):
        total += scalar_lp(q[n] * xs[n] - q[n - 1] * xs[n - 1], 2) ** 2
    assert close(cc.compression_energy(m, lam).total, total)
