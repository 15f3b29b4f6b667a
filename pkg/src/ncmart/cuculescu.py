"""Cuculescu stopping projections, dyadic spectral layers and their supports.

Every spectral step runs on the reduced (block) form of the level algebra,
so ``q_n`` and ``p_{i,n}`` lie in ``M_n`` to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .algebra import (
    DomainError,
    clean_projection,
    hermitian_part,
    leq_slack,
    lp_norm,
    opnorm,
    proj_meet,
    rank_mass,
    right_support,
    left_support,
    spectral_projection,
    trace,
)
from .filtration import Martingale, differences, is_positive


SUPPORT_MASS_CONSTANT = 4.0  # tail mass above layer m0 is at most 4 * 2^{-m0}
H_BOUND = 2.0
ENERGY_FACTOR = 2.0  # compression energy is at most 2 * lambda


def _require_positive(m: Martingale):
    if not is_positive(m):
        raise DomainError("construction needs a positive martingale; split it with positive_split first")


@dataclass(frozen=True, eq=False)
class CuculescuFamily:
    lam: float
    q: tuple  # q_1 .. q_N

    def at(self, n: int) -> np.ndarray:
        """``q_n`` with ``q_0 = 1``."""
        if n == 0:
            return np.eye(self.q[0].shape[0], dtype=complex)
        return self.q[n - 1]


def _cuculescu_step(lam):
    def step(q, x):
        c = hermitian_part(q @ x @ q)
        return clean_projection(q - spectral_projection(c, lam))

    return step


def cuculescu(m: Martingale, lam: float) -> CuculescuFamily:
    """``q_0 = 1``, ``q_n = q_{n-1} - chi_(lam, inf)(q_{n-1} x_n q_{n-1})``."""
    if not lam > 0:
        raise DomainError(f"Cuculescu projections need lambda > 0, got {lam}")
    _require_positive(m)
    F = m.filtration
    step = _cuculescu_step(float(lam))
    q = np.eye(F.dim, dtype=complex)
    out = []
    for n in range(1, m.levels + 1):
        q = F.blockwise(n, step, q, hermitian_part(m.x(n)))
        out.append(q)
    return CuculescuFamily(float(lam), tuple(out))


def cuculescu_residuals(m: Martingale, fam: CuculescuFamily) -> dict[str, float]:
    """Defects of the four Cuculescu properties (all ~0 or negative when they hold).

    ``membership``: max ``||E_n q_n - q_n||``; ``commutation``: max
    ``||[q_n, q_{n-1} x_n q_{n-1}]||``; ``domination``: max of
    ``-lambda_min(lam q_n - q_n x_n q_n)``; ``decreasing``: max of
    ``-lambda_min(q_{n-1} - q_n)``; ``mass_excess``: ``tau(1 - q_N) - tau(x_N)/lam``.
    """
    F = m.filtration
    lam = fam.lam
    membership = commutation = domination = decreasing = 0.0
    for n in range(1, m.levels + 1):
        q, qp, x = fam.at(n), fam.at(n - 1), m.x(n)
        membership = max(membership, F.membership_residual(n, q))
        c = qp @ x @ qp
        commutation = max(commutation, opnorm(q @ c - c @ q))
        domination = max(domination, -leq_slack(q @ x @ q, lam * q))
        decreasing = max(decreasing, -leq_slack(q, qp))
    one = np.eye(F.dim)
    mass_excess = trace(one - fam.at(m.levels)).real - trace(m.terminal).real / lam
    return {
        "membership": membership,
        "commutation": commutation,
        "domination": domination,
        "decreasing": decreasing,
        "mass_excess": mass_excess,
    }


def k_max_for(m: Martingale) -> int:
    """Smallest ``k >= 0`` with ``2^k >= max_n ||x_n||``; every family beyond is trivial."""
    top = max(opnorm(v) for v in m.values)
    k = 0 if top <= 1 else math.ceil(math.log2(top))
    while 2.0**k < top:
        k += 1
    while k > 0 and 2.0 ** (k - 1) >= top:
        k -= 1
    return k


def dyadic_families(m: Martingale) -> list[CuculescuFamily]:
    """Families at ``lambda = 2^k`` for ``k = 0..k_max``."""
    _require_positive(m)
    return [cuculescu(m, 2.0**k) for k in range(k_max_for(m) + 1)]


@dataclass(frozen=True, eq=False)
class SpectralLayers:
    """Layers ``p_{i,n}`` for ``0 <= i <= k_max + 1`` and ``1 <= n <= N``.

    ``meets[i][n-1]`` is the meet of ``q_n^{(2^k)}`` over ``k = i..k_max`` (the
    identity for ``i = k_max + 1``).
    """

    k_max: int
    families: tuple
    meets: tuple
    p: tuple  # p[i][n - 1]

    @property
    def count(self) -> int:
        return len(self.p)

    @property
    def levels(self) -> int:
        return len(self.p[0])

    def at(self, i: int, n: int) -> np.ndarray:
        return self.p[i][n - 1]

    def meet(self, i: int, n: int) -> np.ndarray:
        """``meet_{k >= i} q_n^{(2^k)}``; ``i`` is clipped into ``0..k_max+1``."""
        i = min(max(i, 0), self.k_max + 1)
        return self.meets[i][n - 1]


def layers(m: Martingale, families: Sequence[CuculescuFamily] | None = None) -> SpectralLayers:
    _require_positive(m)
    F = m.filtration
    if families is None:
        families = dyadic_families(m)
    k_max = len(families) - 1
    N, d = m.levels, F.dim
    one = np.eye(d, dtype=complex)
    meets = [[None] * N for _ in range(k_max + 2)]
    p = [[None] * N for _ in range(k_max + 2)]
    for n in range(1, N + 1):
        meets[k_max + 1][n - 1] = one
        for i in range(k_max, -1, -1):
            meets[i][n - 1] = F.blockwise(n, proj_meet, meets[i + 1][n - 1], families[i].at(n))
        p[0][n - 1] = meets[0][n - 1]
        for i in range(1, k_max + 2):
            p[i][n - 1] = F.blockwise(n, clean_projection, meets[i][n - 1] - meets[i - 1][n - 1])
    return SpectralLayers(k_max, tuple(families), tuple(tuple(r) for r in meets), tuple(tuple(r) for r in p))


def layer_residuals(m: Martingale, lay: SpectralLayers) -> dict[str, float]:
    """``disjointness``: max ``||p_i p_j||`` (i != j); ``partition``: max ``||sum_i p_i - 1||``;
    ``domination``: max over ``m0`` of ``-lambda_min(q^{(2^m0)} - sum_{i<=m0} p_i)``;
    ``membership``: max ``||E_n p_{i,n} - p_{i,n}||``."""
    F = m.filtration
    one = np.eye(F.dim)
    disjoint = partition = domination = membership = 0.0
    for n in range(1, m.levels + 1):
        ps = [lay.at(i, n) for i in range(lay.count)]
        for i in range(len(ps)):
            membership = max(membership, F.membership_residual(n, ps[i]))
            for j in range(i + 1, len(ps)):
                disjoint = max(disjoint, opnorm(ps[i] @ ps[j]))
        partition = max(partition, opnorm(sum(ps) - one))
        partial = np.zeros_like(one, dtype=complex)
        for m0 in range(lay.k_max + 1):
            partial = partial + ps[m0]
            domination = max(domination, -leq_slack(partial, lay.families[m0].at(n)))
    return {"disjointness": disjoint, "partition": partition, "domination": domination, "membership": membership}


@dataclass(frozen=True, eq=False)
class SupportFamily:
    """``r[i][n-1] = r(p_{i,n} - p_{i,n-1} p_{i,n})`` (zero for ``n = 1`` or ``i = 0``), and ``h_n``."""

    r: tuple
    h: tuple  # h_2 .. h_N

    @property
    def h_inf(self) -> float:
        return max((opnorm(x) for x in self.h), default=0.0)

    @property
    def h_2(self) -> float:
        return float(np.sqrt(sum(lp_norm(x, 2) ** 2 for x in self.h)))

    def mass_tail(self, m0: int) -> float:
        """``sum_{n>=2} tau(sum_{i >= m0+1} r_{i,n})``."""
        total = 0.0
        for i in range(m0 + 1, len(self.r)):
            for rin in self.r[i][1:]:
                total += rank_mass(rin)
        return total


def _defect(lay: SpectralLayers, i: int, n: int) -> np.ndarray:
    p, pp = lay.at(i, n), lay.at(i, n - 1)
    return p - pp @ p


def supports(m: Martingale, lay: SpectralLayers) -> SupportFamily:
    F = m.filtration
    d = F.dim
    zero = np.zeros((d, d), dtype=complex)
    r = [[zero] * m.levels for _ in range(lay.count)]
    h = []
    for n in range(2, m.levels + 1):
        hn = zero.copy()
        for i in range(lay.count):
            defect = _defect(lay, i, n)
            hn = hn + defect
            if i >= 1:
                r[i][n - 1] = F.blockwise(n, right_support, defect)
        h.append(hn)
    return SupportFamily(tuple(tuple(row) for row in r), tuple(h))


def support_residuals(m: Martingale, lay: SpectralLayers, sup: SupportFamily) -> dict[str, float]:
    """Defects of ``r_{i,n} <= p_{i,n}`` and of the left-support bound by meet differences."""
    right = left = 0.0
    for n in range(2, m.levels + 1):
        for i in range(1, lay.count):
            right = max(right, -leq_slack(sup.r[i][n - 1], lay.at(i, n)))
            ell = left_support(_defect(lay, i, n))
            bound = lay.meet(i - 1, n - 1) - lay.meet(i - 1, n)
            left = max(left, -leq_slack(ell, hermitian_part(bound)))
    return {"right_support": right, "left_support": left}


@dataclass(frozen=True)
class CompressionEnergy:
    lam: float
    lhs: tuple  # ||q_n dx_n q_{n-1}||_2, n = 2..N
    rhs: tuple  # ||q_n x_n q_n - q_{n-1} x_{n-1} q_{n-1}||_2, n = 2..N
    total: float  # ||q_1 x_1 q_1||_2^2 + sum rhs^2

    @property
    def bound(self) -> float:
        return ENERGY_FACTOR * self.lam

    @property
    def levelwise_excess(self) -> float:
        return max((a - b for a, b in zip(self.lhs, self.rhs)), default=0.0)


def _require_normalized(m: Martingale, tol: float = 1e-9):
    t = trace(m.terminal).real
    if opnorm(m.terminal) == 0:
        return
    if abs(t - 1.0) > tol:
        raise DomainError(f"bound is stated for tau(x_N) = 1, got {t:.6g}")


def compression_energy(m: Martingale, lam: float, fam: CuculescuFamily | None = None) -> CompressionEnergy:
    _require_positive(m)
    _require_normalized(m)
    if fam is None:
        fam = cuculescu(m, lam)
    dx = differences(m)
    q1 = fam.at(1)
    total = lp_norm(q1 @ m.x(1) @ q1, 2) ** 2
    lhs, rhs = [], []
    for n in range(2, m.levels + 1):
        q, qp = fam.at(n), fam.at(n - 1)
        lhs.append(lp_norm(q @ dx[n - 1] @ qp, 2))
        r = lp_norm(q @ m.x(n) @ q - qp @ m.x(n - 1) @ qp, 2)
        rhs.append(r)
        total += r**2
    return CompressionEnergy(fam.lam, tuple(lhs), tuple(rhs), float(total))
