"""Constructive decompositions built on the spectral layers.

* the adapted triple ``dx_n = a_n + b_n + c_n`` (diagonal/column/row pieces),
* the martingale pair ``x = y + z`` used under a regularity hypothesis,
* the four-way positive split of an arbitrary martingale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .algebra import (
    DomainError,
    Operator,
    adjoint,
    lp_norm,
    opnorm,
    positive_part,
    trace,
    weak_l1_norm,
)
from .cuculescu import SpectralLayers, layers
from .filtration import (
    Filtration,
    Martingale,
    differences,
    is_positive,
    martingale_from_differences,
    martingale_from_terminal,
    regularity_defects,
)
from .norms import cond_square_col, cond_square_row, diag_embed_weak_l1, sigma_col, sigma_row

SPLIT_COEFFICIENTS = (1.0, -1.0, 1j, -1j)

# Certified constants for the adapted triple of a positive normalized martingale.
L2_CONSTANT = 5.0
PER_TERM_L2 = {"a": 3.0, "b": 1.0, "c": 1.0}
THETA_BOUND = 144.0
SIGMA_BOUND = 36.0


def regular_bound(k: float) -> float:
    """Weak-type bound for the pair ``(y, z)`` of a k-regular martingale."""
    return 2.0 * (34.0 + 16.0 * (k + 1.0) ** 2)


def _require_positive(m: Martingale):
    if not is_positive(m):
        raise DomainError("decomposition needs a positive martingale; use the *_general variant")


def _require_normalized(m: Martingale, tol: float = 1e-9):
    if opnorm(m.terminal) == 0:
        return
    t = trace(m.terminal).real
    if abs(t - 1.0) > tol:
        raise DomainError(f"weak-type bounds are stated for tau(x_N) = 1, got {t:.6g}")


def _ops(seq) -> list[dict]:
    return [Operator.of(x).to_dict() for x in seq]


@dataclass(frozen=True, eq=False)
class AdaptedTriple:
    a: tuple
    b: tuple
    c: tuple

    @property
    def levels(self) -> int:
        return len(self.a)

    def total(self, n: int) -> np.ndarray:
        return self.a[n - 1] + self.b[n - 1] + self.c[n - 1]

    def to_dict(self) -> dict:
        return {"a": _ops(self.a), "b": _ops(self.b), "c": _ops(self.c)}


@dataclass(frozen=True, eq=False)
class MartingalePair:
    y: Martingale
    z: Martingale

    def to_dict(self) -> dict:
        return {"dy": _ops(differences(self.y)), "dz": _ops(differences(self.z))}


def _cumulative(ps: Sequence[np.ndarray]) -> list[np.ndarray]:
    out, acc = [], np.zeros_like(ps[0])
    for p in ps:
        acc = acc + p
        out.append(acc)
    return out


def _upper(left: Sequence[np.ndarray], dx: np.ndarray, right: Sequence[np.ndarray]) -> np.ndarray:
    """``sum_j sum_{i <= j} left_i dx right_j``."""
    cum = _cumulative(left)
    return sum(cum[j] @ dx @ right[j] for j in range(len(right)))


def _lower(left: Sequence[np.ndarray], dx: np.ndarray, right: Sequence[np.ndarray]) -> np.ndarray:
    """``sum_j sum_{i > j} left_i dx right_j``."""
    cum = _cumulative(left)
    total = cum[-1]
    return sum((total - cum[j]) @ dx @ right[j] for j in range(len(right)))


def _level(lay: SpectralLayers, n: int) -> list[np.ndarray]:
    return [lay.at(i, n) for i in range(lay.count)]


def abc_decompose(m: Martingale, lay: SpectralLayers | None = None) -> AdaptedTriple:
    _require_positive(m)
    if lay is None:
        lay = layers(m)
    dx = differences(m)
    zero = np.zeros_like(dx[0])
    p1 = _level(lay, 1)
    a, b, c = [zero], [_upper(p1, dx[0], p1)], [_lower(p1, dx[0], p1)]
    for n in range(2, m.levels + 1):
        cur, prev = _level(lay, n), _level(lay, n - 1)
        d = dx[n - 1]
        defects = [p - pp @ p for p, pp in zip(cur, prev)]
        overlaps = [pp @ p for p, pp in zip(cur, prev)]
        a.append(_lower(defects, d, prev))
        b.append(_upper(cur, d, prev))
        c.append(_lower(overlaps, d, prev))
    return AdaptedTriple(tuple(a), tuple(b), tuple(c))


def yz_decompose(m: Martingale, lay: SpectralLayers | None = None) -> MartingalePair:
    _require_positive(m)
    if lay is None:
        lay = layers(m)
    dx = differences(m)
    dy, dz = [], []
    for n in range(1, m.levels + 1):
        ps = _level(lay, max(n - 1, 1))
        dy.append(_upper(ps, dx[n - 1], ps))
        dz.append(_lower(ps, dx[n - 1], ps))
    F = m.filtration
    return MartingalePair(martingale_from_differences(dy, F), martingale_from_differences(dz, F))


# --------------------------------------------------------------------------
# general martingales
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PositiveSplit:
    parts: tuple  # four positive Martingales

    def recombine(self) -> np.ndarray:
        return sum(c * p.terminal for c, p in zip(SPLIT_COEFFICIENTS, self.parts))


def positive_split(m: Martingale) -> PositiveSplit:
    """``x = (h1 - h2) + i (h3 - h4)`` from the positive/negative parts of Re and Im."""
    x = np.asarray(m.terminal, dtype=complex)
    re = (x + adjoint(x)) / 2
    im = (x - adjoint(x)) / 2j
    terminals = (positive_part(re), positive_part(-re), positive_part(im), positive_part(-im))
    F = m.filtration
    return PositiveSplit(tuple(martingale_from_terminal(h, F) for h in terminals))


def abc_decompose_general(m: Martingale) -> AdaptedTriple:
    triples = [abc_decompose(part) for part in positive_split(m).parts]

    def combine(field):
        return tuple(sum(c * getattr(t, field)[n] for c, t in zip(SPLIT_COEFFICIENTS, triples)) for n in range(m.levels))

    return AdaptedTriple(combine("a"), combine("b"), combine("c"))


def yz_decompose_general(m: Martingale) -> MartingalePair:
    pairs = [yz_decompose(part) for part in positive_split(m).parts]
    y = sum(c * p.y.terminal for c, p in zip(SPLIT_COEFFICIENTS, pairs))
    z = sum(c * p.z.terminal for c, p in zip(SPLIT_COEFFICIENTS, pairs))
    F = m.filtration
    return MartingalePair(martingale_from_terminal(y, F), martingale_from_terminal(z, F))


def to_martingale_differences(triple: AdaptedTriple, F: Filtration):
    """Subtract ``E_{n-1}`` from each term for ``n >= 2``; level 1 is kept as is.

    Returns ``(dd, dc, dr)``.  The three sequences still sum to ``dx`` because
    ``E_{n-1}(dx_n) = 0``.
    """

    def fix(seq):
        return [seq[0]] + [t - F.expect(n - 1, t) for n, t in enumerate(seq[1:], start=2)]

    return fix(triple.a), fix(triple.b), fix(triple.c)


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


def exactness_residual(triple: AdaptedTriple, m: Martingale) -> float:
    """Max over n of ``||dx_n - a_n - b_n - c_n|| / max(1, ||dx_n||)``."""
    return max(opnorm(d - triple.total(n)) / max(1.0, opnorm(d)) for n, d in enumerate(differences(m), start=1))


def adaptedness_residual(seqs: Sequence[Sequence[np.ndarray]], F: Filtration) -> float:
    return max(F.membership_residual(n, t) for seq in seqs for n, t in enumerate(seq, start=1))


def per_term_ratios(triple: AdaptedTriple, m: Martingale) -> dict[str, float]:
    """Max over n of ``||term_n||_2 / ||dx_n||_2`` (levels with ``dx_n = 0`` skipped)."""
    out = {"a": 0.0, "b": 0.0, "c": 0.0}
    for n, d in enumerate(differences(m), start=1):
        base = lp_norm(d, 2)
        if base < 1e-14:
            continue
        for name in out:
            out[name] = max(out[name], lp_norm(getattr(triple, name)[n - 1], 2) / base)
    return out


def abc_l2_report(triple: AdaptedTriple, m: Martingale) -> float:
    """``||a||_{L2(l2_C)} + ||b||_{L2(l2_C)} + ||c||_{L2(l2_R)}``; bounded by ``5 ||x_N||_2``."""

    def l2(seq):
        return float(np.sqrt(sum(lp_norm(t, 2) ** 2 for t in seq)))

    return l2(triple.a) + l2(triple.b) + l2(triple.c)


@dataclass(frozen=True)
class WeakReport:
    theta_w: float
    sigma_b_w: float
    sigma_c_w: float


def abc_weak_report(triple: AdaptedTriple, m: Martingale) -> WeakReport:
    _require_normalized(m)
    F = m.filtration
    return WeakReport(
        theta_w=diag_embed_weak_l1(triple.a),
        sigma_b_w=weak_l1_norm(cond_square_col(triple.b, F)),
        sigma_c_w=weak_l1_norm(cond_square_row(triple.c, F)),
    )


def centered_diagonal_weak(triple: AdaptedTriple, F: Filtration) -> float:
    """Weak-L1 norm of the diagonal embedding of ``a_n - E_{n-1}(a_n)``.

    Measured only: whether the diagonal bound survives this centering is open.
    """
    dd, _, _ = to_martingale_differences(triple, F)
    return diag_embed_weak_l1(dd)


def conditional_square_residual(triple: AdaptedTriple, m: Martingale, lay: SpectralLayers | None = None) -> float:
    """Max residual between ``E_{n-1}|b_n|^2``, ``E_{n-1}|c_n^*|^2`` and their layer expansions.

    The expansions are evaluated from the layers directly, not from the triple.
    At ``n = 1`` no expectation is taken and both index families are level 1.
    """
    if lay is None:
        lay = layers(m)
    F = m.filtration
    dx = differences(m)
    worst = 0.0
    for n in range(1, m.levels + 1):
        d, ds = dx[n - 1], adjoint(dx[n - 1])
        b, c = triple.b[n - 1], triple.c[n - 1]
        if n == 1:
            outer = inner_b = inner_c = _level(lay, 1)
            mid_c = outer

            def cond(t):
                return t

        else:
            outer = _level(lay, n - 1)
            inner_b = _level(lay, n)
            inner_c = _level(lay, n)
            mid_c = outer

            def cond(t, n=n):
                return F.expect(n - 1, t)

        K = len(outer)
        lhs_b = cond(adjoint(b) @ b)
        lhs_c = cond(c @ adjoint(c))
        cum_b = _cumulative(inner_b)
        rhs_b = np.zeros_like(d)
        rhs_c = np.zeros_like(d)
        for l in range(K):
            for j in range(K):
                lo = min(l, j)
                rhs_b = rhs_b + outer[l] @ cond(ds @ cum_b[lo] @ d) @ outer[j]
                if lo >= 1:
                    mid = sum(mid_c[i] for i in range(lo))
                    if n == 1:
                        rhs_c = rhs_c + outer[l] @ d @ mid @ ds @ outer[j]
                    else:
                        rhs_c = rhs_c + outer[l] @ cond(inner_c[l] @ d @ mid @ ds @ inner_c[j]) @ outer[j]
        scale = max(1.0, opnorm(d) ** 2)
        worst = max(worst, opnorm(lhs_b - rhs_b) / scale, opnorm(lhs_c - rhs_c) / scale)
    return worst


@dataclass(frozen=True)
class RegularReport:
    sigma_y_w: float
    sigma_z_w: float


def regular_weak_report(m: Martingale, k: float, eps: float = 1e-9) -> RegularReport:
    """``(||sigma_C(y)||_{1,inf}, ||sigma_R(z)||_{1,inf})`` for a k-regular normalized martingale."""
    _require_positive(m)
    _require_normalized(m)
    scale = max(1.0, max(opnorm(v) for v in m.values))
    for n, slack in enumerate(regularity_defects(m, k), start=2):
        if slack < -eps * scale:
            raise DomainError(f"martingale is not {k}-regular at level {n}: lambda_min({k} x_{n - 1} - x_{n}) = {slack:.3g}")
    pair = yz_decompose(m)
    return RegularReport(weak_l1_norm(sigma_col(pair.y)), weak_l1_norm(sigma_row(pair.z)))
