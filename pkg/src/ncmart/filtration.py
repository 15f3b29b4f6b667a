"""Filtrations, conditional expectations, martingales and random generators.

Three filtration families are available:

``Pinching``
    ``M_n`` is the algebra of block-diagonal matrices for a partition of the
    basis.  Partitions coarsen as ``n`` grows and the top level is the single
    block, so ``M_N`` is the full matrix algebra.
``Diagonal``
    The classical (commutative) case: ``M_n`` is spanned by the indicator
    projections of a partition; partitions refine as ``n`` grows and the top
    level is the partition into singletons, so the ambient algebra is the
    diagonal algebra.  ``E_n`` averages the diagonal over blocks.
``Tensor``
    ``M = M_{d_1} (x) ... (x) M_{d_K}``; ``M_n`` is the first ``head + n`` factors
    tensored with the identity, ``E_n`` the normalized partial trace over the rest.

Every filtration can hand out the *reduced* form of an element of ``M_n``
(a list of small matrices) and rebuild the full matrix, which is how the
spectral constructions elsewhere stay inside ``M_n`` exactly.

Levels are 1-based throughout, matching ``x_1, ..., x_N``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, Sequence

import numpy as np

from .algebra import (
    EPS_NUM,
    EPS_PSD,
    DomainError,
    StructuralError,
    adjoint,
    hermitian_part,
    is_psd,
    leq_slack,
    opnorm,
    trace,
)

BASES = ("first", "scalar")


def _as_partition(blocks, d: int) -> tuple[tuple[int, ...], ...]:
    flat = sorted(i for b in blocks for i in b)
    if flat != list(range(d)):
        raise StructuralError(f"{blocks!r} is not a partition of 0..{d - 1}")
    if any(len(b) == 0 for b in blocks):
        raise StructuralError("partitions may not contain empty blocks")
    return tuple(tuple(sorted(int(i) for i in b)) for b in blocks)


def _refines(fine, coarse) -> bool:
    """Every block of ``fine`` sits inside a block of ``coarse``."""
    owner = {}
    for k, b in enumerate(coarse):
        for i in b:
            owner[i] = k
    return all(len({owner[i] for i in b}) == 1 for b in fine)


class Filtration:
    """Common interface; subclasses implement the reduced/full conversions."""

    dim: int
    levels: int
    kind: str

    # -- to be provided by subclasses --------------------------------------
    def _reduce(self, n: int, x: np.ndarray) -> list[np.ndarray]:
        raise NotImplementedError

    def _expand(self, n: int, pieces: Sequence[np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    def base_expect(self, x) -> np.ndarray:
        """Expectation onto the level-0 algebra (``tau(x) 1`` unless stated otherwise)."""
        x = self._check(x)
        return trace(x) * np.eye(self.dim, dtype=complex)

    def to_dict(self) -> dict:
        raise NotImplementedError

    # -- shared machinery ---------------------------------------------------
    def _check(self, x) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != (self.dim, self.dim):
            raise StructuralError(f"operator of shape {x.shape} does not live in M_{self.dim}")
        return x

    def _level(self, n: int) -> int:
        if int(n) != n or not 1 <= n <= self.levels:
            raise DomainError(f"level {n} outside 1..{self.levels}")
        return int(n)

    def expect(self, n: int, x) -> np.ndarray:
        """``E_n(x)`` for ``1 <= n <= N``; ``n = 0`` follows the convention ``E_0 = E_1``."""
        x = self._check(x)
        if n == 0:
            n = 1
        n = self._level(n)
        return self._expand(n, self._reduce(n, np.asarray(x, dtype=complex)))

    def expect_prev(self, n: int, x, base: str = "first") -> np.ndarray:
        """``E_{n-1}(x)``; at ``n = 1`` uses ``E_1`` (``base='first'``) or the level-0 expectation."""
        if base not in BASES:
            raise DomainError(f"unknown base convention {base!r}")
        if n == 1:
            return self.expect(1, x) if base == "first" else self.base_expect(x)
        return self.expect(n - 1, x)

    def reduced(self, n: int, x) -> list[np.ndarray]:
        n = self._level(n)
        return self._reduce(n, np.asarray(self._check(x), dtype=complex))

    def blockwise(self, n: int, fn: Callable[..., np.ndarray], *xs) -> np.ndarray:
        """Apply ``fn`` to the reduced pieces of elements of ``M_n`` and rebuild.

        The inputs are taken to lie in ``M_n`` (they are read through ``E_n``), and
        the output lies in ``M_n`` by construction.
        """
        n = self._level(n)
        pieces = [self._reduce(n, np.asarray(self._check(x), dtype=complex)) for x in xs]
        return self._expand(n, [fn(*args) for args in zip(*pieces)])

    def membership_residual(self, n: int, x) -> float:
        return opnorm(self.expect(n, x) - np.asarray(x))

    def contains(self, n: int, x, tol: float = EPS_NUM) -> bool:
        return self.membership_residual(n, x) <= tol * max(1.0, opnorm(x))

    @property
    def ambient_level(self) -> int:
        return self.levels

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True, eq=False)
class Pinching(Filtration):
    partitions: tuple
    kind: str = field(default="pinching", init=False)

    def __post_init__(self):
        if not self.partitions:
            raise StructuralError("a filtration needs at least one level")
        d = sum(len(b) for b in self.partitions[0])
        parts = tuple(_as_partition(p, d) for p in self.partitions)
        for n in range(len(parts) - 1):
            if not _refines(parts[n], parts[n + 1]):
                raise StructuralError(f"pinching level {n + 2} does not coarsen level {n + 1}")
        if len(parts[-1]) != 1:
            raise StructuralError("top pinching level must be the single block")
        object.__setattr__(self, "partitions", parts)

    @property
    def dim(self) -> int:
        return sum(len(b) for b in self.partitions[0])

    @property
    def levels(self) -> int:
        return len(self.partitions)

    def blocks(self, n: int):
        return self.partitions[self._level(n) - 1]

    def _reduce(self, n, x):
        return [x[np.ix_(b, b)] for b in self.partitions[n - 1]]

    def _expand(self, n, pieces):
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for b, piece in zip(self.partitions[n - 1], pieces):
            out[np.ix_(b, b)] = piece
        return out

    @classmethod
    def dyadic(cls, dim: int, levels: int) -> "Pinching":
        """``2^{N-n}`` contiguous blocks at level ``n`` (as equal as possible)."""
        if levels < 1 or 2 ** (levels - 1) > dim:
            raise StructuralError(f"cannot build {levels} dyadic pinching levels in dimension {dim}")
        parts = []
        for n in range(1, levels + 1):
            chunks = np.array_split(np.arange(dim), 2 ** (levels - n))
            parts.append([c.tolist() for c in chunks])
        return cls(parts)

    def to_dict(self):
        return {"type": "pinching", "partitions": [[[i + 1 for i in b] for b in p] for p in self.partitions]}


@dataclass(frozen=True, eq=False)
class Diagonal(Filtration):
    partitions: tuple
    kind: str = field(default="diagonal", init=False)

    def __post_init__(self):
        if not self.partitions:
            raise StructuralError("a filtration needs at least one level")
        d = sum(len(b) for b in self.partitions[0])
        parts = tuple(_as_partition(p, d) for p in self.partitions)
        for n in range(len(parts) - 1):
            if not _refines(parts[n + 1], parts[n]):
                raise StructuralError(f"diagonal level {n + 2} does not refine level {n + 1}")
        if len(parts[-1]) != d:
            raise StructuralError("top diagonal level must be the partition into singletons")
        object.__setattr__(self, "partitions", parts)

    @property
    def dim(self) -> int:
        return sum(len(b) for b in self.partitions[0])

    @property
    def levels(self) -> int:
        return len(self.partitions)

    def blocks(self, n: int):
        return self.partitions[self._level(n) - 1]

    def _reduce(self, n, x):
        diag = np.diag(x)
        return [np.array([[diag[list(b)].mean()]]) for b in self.partitions[n - 1]]

    def _expand(self, n, pieces):
        values = np.zeros(self.dim, dtype=complex)
        for b, piece in zip(self.partitions[n - 1], pieces):
            values[list(b)] = piece[0, 0]
        return np.diag(values)

    @classmethod
    def dyadic(cls, dim: int, levels: int) -> "Diagonal":
        """Level ``n`` splits the atoms into ``2^{n-1}`` blocks; the top level is singletons."""
        if levels < 1:
            raise StructuralError("a filtration needs at least one level")
        parts = []
        for n in range(1, levels):
            chunks = np.array_split(np.arange(dim), min(2 ** (n - 1), dim))
            parts.append([c.tolist() for c in chunks])
        parts.append([[i] for i in range(dim)])
        return cls(parts)

    def to_dict(self):
        return {"type": "diagonal", "partitions": [[[i + 1 for i in b] for b in p] for p in self.partitions]}


@dataclass(frozen=True, eq=False)
class Tensor(Filtration):
    """``M_n`` = first ``head + n`` tensor factors (x) identity."""

    dims: tuple
    head: int = 0
    kind: str = field(default="tensor", init=False)

    def __post_init__(self):
        dims = tuple(int(k) for k in self.dims)
        if any(k < 1 for k in dims):
            raise StructuralError(f"tensor factor dimensions must be positive, got {dims}")
        if not 0 <= self.head < len(dims):
            raise StructuralError(f"head {self.head} leaves no filtration levels over {len(dims)} factors")
        object.__setattr__(self, "dims", dims)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def levels(self) -> int:
        return len(self.dims) - self.head

    def _split(self, kept: int) -> tuple[int, int]:
        keep = int(np.prod(self.dims[:kept]))
        return keep, self.dim // keep

    def _partial(self, kept: int, x: np.ndarray) -> np.ndarray:
        keep, rest = self._split(kept)
        return np.einsum("ajbj->ab", x.reshape(keep, rest, keep, rest)) / rest

    def _reduce(self, n, x):
        return [self._partial(self.head + n, x)]

    def _expand(self, n, pieces):
        _, rest = self._split(self.head + n)
        return np.kron(pieces[0], np.eye(rest))

    def base_expect(self, x):
        x = self._check(x)
        if self.head == 0:
            return trace(x) * np.eye(self.dim, dtype=complex)
        _, rest = self._split(self.head)
        return np.kron(self._partial(self.head, np.asarray(x, dtype=complex)), np.eye(rest))

    def embed(self, k: int, g) -> np.ndarray:
        """``1 (x) ... (x) g (x) ... (x) 1`` with ``g`` in tensor factor ``k`` (0-based)."""
        g = np.asarray(g, dtype=complex)
        if g.shape != (self.dims[k], self.dims[k]):
            raise StructuralError(f"factor {k} has dimension {self.dims[k]}, got {g.shape}")
        mats = [np.eye(m) for m in self.dims]
        mats[k] = g
        return reduce(np.kron, mats)

    def to_dict(self):
        out = {"type": "tensor", "dims": list(self.dims)}
        if self.head:
            out["head"] = self.head
        return out


def filtration_from_dict(data: dict) -> Filtration:
    kind = data.get("type")
    if kind in ("pinching", "diagonal"):
        parts = [[[int(i) - 1 for i in b] for b in p] for p in data["partitions"]]
        return (Pinching if kind == "pinching" else Diagonal)(parts)
    if kind == "tensor":
        return Tensor(tuple(data["dims"]), int(data.get("head", 0)))
    raise StructuralError(f"unknown filtration type {kind!r}")


def filtration_from_json(text: str) -> Filtration:
    return filtration_from_dict(json.loads(text))


def cond_expect(F: Filtration, n: int, x) -> np.ndarray:
    return F.expect(n, x)


# --------------------------------------------------------------------------
# martingales
# --------------------------------------------------------------------------


def _frozen(x) -> np.ndarray:
    x = np.array(x, dtype=complex)
    x.setflags(write=False)
    return x


@dataclass(frozen=True, eq=False)
class Martingale:
    """``x_1, ..., x_N`` adapted to ``filtration``; ``x_0 = 0``."""

    filtration: Filtration
    values: tuple

    def __post_init__(self):
        if len(self.values) != self.filtration.levels:
            raise StructuralError(f"{len(self.values)} values for {self.filtration.levels} levels")
        object.__setattr__(self, "values", tuple(_frozen(v) for v in self.values))

    @property
    def levels(self) -> int:
        return len(self.values)

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]

    @property
    def dim(self) -> int:
        return self.filtration.dim

    def x(self, n: int) -> np.ndarray:
        """``x_n`` with ``x_0 = 0``."""
        if n == 0:
            return np.zeros((self.dim, self.dim), dtype=complex)
        return self.values[n - 1]

    def differences(self) -> list[np.ndarray]:
        return differences(self)

    def adjoint(self) -> "Martingale":
        return Martingale(self.filtration, tuple(adjoint(v) for v in self.values))

    def scaled(self, c: complex) -> "Martingale":
        return Martingale(self.filtration, tuple(c * v for v in self.values))


def martingale_from_terminal(x, F: Filtration, tol: float = EPS_NUM) -> Martingale:
    """``x_n = E_n(x)``.  ``x`` must lie in the top algebra ``M_N``."""
    x = np.asarray(F._check(x), dtype=complex)
    if not F.contains(F.levels, x, tol):
        raise StructuralError("terminal value does not lie in the top algebra of the filtration")
    x = F.expect(F.levels, x)
    return Martingale(F, tuple(F.expect(n, x) for n in range(1, F.levels + 1)))


def martingale_from_differences(dxs: Sequence[np.ndarray], F: Filtration) -> Martingale:
    return Martingale(F, tuple(np.cumsum(np.asarray(dxs, dtype=complex), axis=0)))


def differences(m: Martingale) -> list[np.ndarray]:
    """``dx_1 = x_1``, ``dx_n = x_n - x_{n-1}``."""
    return [m.x(n) - m.x(n - 1) for n in range(1, m.levels + 1)]


def is_positive(m: Martingale, tol: float = EPS_PSD) -> bool:
    return all(is_psd(v, tol) for v in m.values)


def regularity_defects(m: Martingale, k: float) -> list[float]:
    """``lambda_min(k x_{n-1} - x_n)`` for ``n = 2..N``."""
    return [leq_slack(m.x(n), k * m.x(n - 1)) for n in range(2, m.levels + 1)]


def is_k_regular(m: Martingale, k: float, eps: float = EPS_PSD) -> bool:
    """``x_n <= k x_{n-1}`` for all ``n >= 2``."""
    if not is_positive(m):
        raise DomainError("k-regularity is only defined for positive martingales")
    scale = max(1.0, max(opnorm(v) for v in m.values))
    return all(s >= -eps * scale for s in regularity_defects(m, k))


# --------------------------------------------------------------------------
# random generation
# --------------------------------------------------------------------------

MODES = ("positive-normalized", "self-adjoint", "general")


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_martingale(F: Filtration, seed, mode: str = "positive-normalized") -> Martingale:
    """Random martingale with terminal built from a complex Ginibre matrix ``G``.

    ``positive-normalized``: ``x_N = G*G / tau(G*G)``; ``self-adjoint``: ``(G + G*) / 2``;
    ``general``: ``G``.  Each is projected into the top algebra first.
    """
    if mode not in MODES:
        raise DomainError(f"unknown ensemble mode {mode!r}")
    rng = as_generator(seed)
    g = complex_gaussian(rng, (F.dim, F.dim))
    if mode == "positive-normalized":
        x = F.expect(F.levels, adjoint(g) @ g)
        x = x / trace(x).real
        x = hermitian_part(x)
    elif mode == "self-adjoint":
        x = F.expect(F.levels, hermitian_part(g))
    else:
        x = F.expect(F.levels, g)
    return martingale_from_terminal(x, F)


def random_regular_martingale(F: Filtration, seed, k: float, shrink: float | None = None) -> Martingale:
    """A k-regular positive martingale with ``tau(x_N) = 1``.

    Mixes a random positive normalized martingale ``y`` toward the identity:
    ``x = (1 - t) 1 + t y``.  The set of admissible ``t`` is an interval
    containing 0 (the defect is affine in ``t``), found by bisection; ``t`` is then
    a random fraction of its maximum unless ``shrink`` fixes that fraction.
    """
    if not k > 1:
        raise DomainError(f"k-regularity needs k > 1, got {k}")
    rng = as_generator(seed)
    y = random_martingale(F, rng, "positive-normalized")
    one = np.eye(F.dim, dtype=complex)

    def mix(t):
        return Martingale(F, tuple((1 - t) * one + t * v for v in y.values))

    def ok(t):
        return is_k_regular(mix(t), k, eps=0.0)

    lo, hi = 0.0, 1.0
    if ok(hi):
        lo = hi
    else:
        for _ in range(60):
            mid = (lo + hi) / 2
            if ok(mid):
                lo = mid
            else:
                hi = mid
    frac = rng.uniform(0.5, 1.0) if shrink is None else shrink
    return mix(lo * frac)


@dataclass(frozen=True, eq=False)
class IndependentSequence:
    filtration: Tensor
    elements: tuple  # a_n, one per tensor factor
    factors: tuple  # the g_n, a_n = 1 (x) .. (x) g_n (x) .. (x) 1


def independent_sequence(factor_dims: Sequence[int], seed, beta: float = 1.0, self_adjoint: bool = False) -> IndependentSequence:
    """``a_n = 1 (x) ... (x) g_n (x) ... (x) 1`` with ``tau(g_n) = 0`` and ``||g_n|| <= beta``."""
    F = Tensor(tuple(factor_dims))
    rng = as_generator(seed)
    gs, elements = [], []
    for k, dk in enumerate(F.dims):
        g = complex_gaussian(rng, (dk, dk))
        if self_adjoint:
            g = hermitian_part(g)
        g = g - trace(g) * np.eye(dk)
        norm = opnorm(g)
        if norm > beta:
            g = g * (beta / norm)
        gs.append(_frozen(g))
        elements.append(_frozen(F.embed(k, g)))
    return IndependentSequence(F, tuple(elements), tuple(gs))
