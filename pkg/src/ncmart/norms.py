"""Square functions, conditioned square functions, Hardy norms and BMO norms.

For ``p >= 2`` the Hardy norms are intersections (a max of computable
quantities) and are exact.  For ``1 <= p < 2`` they are infima over
decompositions; what is returned there is the smallest value over a fixed
list of candidate decompositions, hence an upper bound, flagged ``exact=False``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .algebra import (
    DomainError,
    adjoint,
    hermitian_part,
    lp_norm,
    opnorm,
    psd_sqrt,
    singular_values,
    weak_l1_from_values,
)
from .filtration import Filtration, Martingale, differences


# Equivalence constant between the BMO norm of a sum of independent centered
# terms and its explicit upper bound.
BMO_REVERSE_CONSTANT = 1.0 + float(np.sqrt(3.0))


def _sqrt_of_sum(terms: Sequence[np.ndarray], d: int) -> np.ndarray:
    total = np.zeros((d, d), dtype=complex)
    for t in terms:
        total += t
    return psd_sqrt(hermitian_part(total))


def square_col(seq: Sequence[np.ndarray]) -> np.ndarray:
    """``(sum |a_n|^2)^{1/2}``."""
    d = np.asarray(seq[0]).shape[0]
    return _sqrt_of_sum([adjoint(a) @ a for a in seq], d)


def square_row(seq: Sequence[np.ndarray]) -> np.ndarray:
    """``(sum |a_n^*|^2)^{1/2}``."""
    d = np.asarray(seq[0]).shape[0]
    return _sqrt_of_sum([a @ adjoint(a) for a in seq], d)


def cond_square_col(seq: Sequence[np.ndarray], F: Filtration, base: str = "first") -> np.ndarray:
    """``(sum_n E_{n-1} |a_n|^2)^{1/2}`` for an arbitrary sequence indexed from 1."""
    return _sqrt_of_sum([F.expect_prev(n, adjoint(a) @ a, base) for n, a in enumerate(seq, start=1)], F.dim)


def cond_square_row(seq: Sequence[np.ndarray], F: Filtration, base: str = "first") -> np.ndarray:
    return _sqrt_of_sum([F.expect_prev(n, a @ adjoint(a), base) for n, a in enumerate(seq, start=1)], F.dim)


def s_col(m: Martingale) -> np.ndarray:
    return square_col(differences(m))


def s_row(m: Martingale) -> np.ndarray:
    return square_row(differences(m))


def sigma_col(m: Martingale, base: str = "first") -> np.ndarray:
    return cond_square_col(differences(m), m.filtration, base)


def sigma_row(m: Martingale, base: str = "first") -> np.ndarray:
    return cond_square_row(differences(m), m.filtration, base)


def diag_norm(seq: Sequence[np.ndarray], p: float) -> float:
    """``(sum ||a_n||_p^p)^{1/p}``, or ``sup_n ||a_n||_inf`` at ``p = inf``."""
    norms = np.array([lp_norm(a, p) for a in seq])
    if norms.size == 0:
        return 0.0
    if np.isinf(p):
        return float(norms.max())
    top = norms.max()
    if top == 0.0:
        return 0.0
    return float(top * np.sum((norms / top) ** p) ** (1.0 / p))


def diag_embed_weak_l1(seq: Sequence[np.ndarray]) -> float:
    """Weak-L1 quasi-norm of ``sum_n a_n (x) e_{nn}`` under ``tau (x) tr``.

    Pools the singular values of every block, each with mass ``1/d``; the
    ``dN x dN`` matrix is never formed.
    """
    if len(seq) == 0:
        return 0.0
    d = np.asarray(seq[0]).shape[0]
    pooled = np.concatenate([singular_values(a) for a in seq])
    return weak_l1_from_values(pooled, 1.0 / d)


def _check_p(p: float):
    if not p >= 1:
        raise DomainError(f"Hardy norms need p >= 1, got {p}")


# --------------------------------------------------------------------------
# Hardy norms
# --------------------------------------------------------------------------


def hardy_norm(m: Martingale, p: float) -> tuple[float, bool]:
    """``||x||_{H^p}`` and whether the value is exact.

    ``p >= 2``: ``max(||S_C||_p, ||S_R||_p)``.  ``p < 2``: the least of
    ``||S_C(y)||_p + ||S_R(z)||_p`` over ``(x, 0)``, ``(0, x)`` and the
    layer-based column/row splitting (built on the four positive parts).
    """
    _check_p(p)
    if p >= 2:
        return max(lp_norm(s_col(m), p), lp_norm(s_row(m), p)), True
    candidates = [lp_norm(s_col(m), p), lp_norm(s_row(m), p)]
    if opnorm(m.terminal) > 0:
        from .decompose import yz_decompose_general

        pair = yz_decompose_general(m)
        candidates.append(lp_norm(s_col(pair.y), p) + lp_norm(s_row(pair.z), p))
    return float(min(candidates)), False


def h_norm(m: Martingale, p: float) -> tuple[float, bool]:
    """``||x||_{h^p}`` and whether the value is exact.

    ``p >= 2``: ``max(h_D, ||sigma_C||_p, ||sigma_R||_p)``.  ``p < 2``: the least
    over the all-diagonal, all-column and all-row triples and the adapted
    three-way decomposition turned into martingale differences.
    """
    _check_p(p)
    dx = differences(m)
    if p >= 2:
        return max(diag_norm(dx, p), lp_norm(sigma_col(m), p), lp_norm(sigma_row(m), p)), True
    candidates = [diag_norm(dx, p), lp_norm(sigma_col(m), p), lp_norm(sigma_row(m), p)]
    if opnorm(m.terminal) > 0:
        from .decompose import abc_decompose_general, to_martingale_differences

        dd, dc, dr = to_martingale_differences(abc_decompose_general(m), m.filtration)
        F = m.filtration
        candidates.append(
            diag_norm(dd, p) + lp_norm(cond_square_col(dc, F), p) + lp_norm(cond_square_row(dr, F), p)
        )
    return float(min(candidates)), False


# --------------------------------------------------------------------------
# BMO
# --------------------------------------------------------------------------


def bmo_col_sq_terms(a, F: Filtration, base: str = "first") -> list[np.ndarray]:
    """``E_n |a - E_{n-1} a|^2`` for ``n = 1..N``."""
    a = np.asarray(a, dtype=complex)
    out = []
    for n in range(1, F.levels + 1):
        r = a - F.expect_prev(n, a, base)
        out.append(F.expect(n, adjoint(r) @ r))
    return out


def bmo_norms(a, F: Filtration, base: str = "first") -> tuple[float, float, float]:
    """``(||a||_BMO_C, ||a||_BMO_R, ||a||_BMO)``.

    ``base`` selects ``E_0``: ``"first"`` is the convention ``E_0 = E_1``;
    ``"scalar"`` is the level-0 expectation (``tau(.) 1`` for ``head = 0``).
    """
    col = np.sqrt(max(opnorm(t) for t in bmo_col_sq_terms(a, F, base)))
    row = np.sqrt(max(opnorm(t) for t in bmo_col_sq_terms(adjoint(np.asarray(a)), F, base)))
    return float(col), float(row), float(max(col, row))


def bmo_upper_bound(m: Martingale, base: str = "first") -> float:
    """``sup ||dx_n|| + ||(sum E_{n-1}(|dx_n|^2 + |dx_n^*|^2))^{1/2}||``."""
    dx = differences(m)
    F = m.filtration
    terms = [F.expect_prev(n, adjoint(d) @ d + d @ adjoint(d), base) for n, d in enumerate(dx, start=1)]
    return max(opnorm(d) for d in dx) + opnorm(_sqrt_of_sum(terms, F.dim))


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------


@dataclass
class NormReport:
    p: float
    s_col_p: float
    s_row_p: float
    sigma_col_p: float
    sigma_row_p: float
    h_diag_p: float
    hardy_p: float
    h_p: float
    bmo_col: float
    bmo_row: float
    bmo: float
    exact: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        flags = out.pop("exact")
        for k, v in flags.items():
            out[f"{k}_exact"] = v
        return out


NORM_FIELDS = ("s_col_p", "s_row_p", "sigma_col_p", "sigma_row_p", "h_diag_p", "hardy_p", "h_p", "bmo_col", "bmo_row", "bmo")


def norm_report(m: Martingale, p: float) -> NormReport:
    _check_p(p)
    dx = differences(m)
    hardy, hardy_exact = hardy_norm(m, p)
    h, h_exact = h_norm(m, p)
    col, row, both = bmo_norms(m.terminal, m.filtration)
    exact = {name: True for name in NORM_FIELDS}
    exact["hardy_p"] = hardy_exact
    exact["h_p"] = h_exact
    return NormReport(
        p=float(p),
        s_col_p=lp_norm(s_col(m), p),
        s_row_p=lp_norm(s_row(m), p),
        sigma_col_p=lp_norm(sigma_col(m), p),
        sigma_row_p=lp_norm(sigma_row(m), p),
        h_diag_p=diag_norm(dx, p),
        hardy_p=hardy,
        h_p=h,
        bmo_col=col,
        bmo_row=row,
        bmo=both,
        exact=exact,
    )
