"""Finite-dimensional tracial matrix algebra arithmetic.

Operators are plain ``numpy`` complex arrays of shape ``(d, d)``.  The trace is
the normalized trace ``tr / d`` unless a function is told otherwise; the
auxiliary matrix-unit factor used for diagonal embeddings carries the
unnormalized trace, so every eigenvalue there has mass ``1 / d``.

Tolerance conventions (all relative to the operator-norm scale of the inputs):

* ``EPS_PSD``  positivity / self-adjointness tests
* ``EPS_RANK`` singular-value cutoff for supports and meets
* ``EPS_PROJ`` projection-hood
* ``EPS_EIG``  eigenvalue ties at a spectral cut point; ties go to the closed
  side, i.e. ``chi_(lam, inf)`` never picks an eigenvalue within ``EPS_EIG`` of
  ``lam``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

EPS_PSD = 1e-9
EPS_RANK = 1e-9
EPS_PROJ = 1e-8
EPS_EIG = 1e-10
EPS_NUM = 1e-9


class NCMartError(Exception):
    """Base class for errors raised by this package."""


class DomainError(NCMartError, ValueError):
    """An argument lies outside the domain of an operation."""


class StructuralError(NCMartError, ValueError):
    """Shapes, dimensions or filtration structure do not fit together."""


# --------------------------------------------------------------------------
# algebra and operator carriers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TracialAlgebra:
    """``M_d`` with the trace ``tr / d`` (normalized) or ``tr`` (unnormalized)."""

    dim: int
    normalized: bool = True

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise StructuralError(f"dimension must be a positive integer, got {self.dim!r}")

    @property
    def mass(self) -> float:
        """Trace of a rank-one projection."""
        return 1.0 / self.dim if self.normalized else 1.0

    def check(self, x) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != (self.dim, self.dim):
            raise StructuralError(f"expected a {self.dim}x{self.dim} operator, got shape {x.shape}")
        return x

    def trace(self, x) -> complex:
        return trace(self.check(x), normalized=self.normalized)

    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)


@dataclass(frozen=True)
class Operator:
    """A matrix bound to its ambient tracial algebra; used for JSON fixture I/O."""

    entries: np.ndarray
    algebra: TracialAlgebra

    def __post_init__(self):
        object.__setattr__(self, "entries", np.asarray(self.algebra.check(self.entries), dtype=complex))

    @classmethod
    def of(cls, x, normalized: bool = True) -> "Operator":
        x = np.asarray(x, dtype=complex)
        return cls(x, TracialAlgebra(x.shape[0], normalized))

    def to_dict(self) -> dict:
        flat = self.entries.reshape(-1)
        return {
            "dim": self.algebra.dim,
            "trace": "normalized" if self.algebra.normalized else "unnormalized",
            "entries": [[float(z.real), float(z.imag)] for z in flat],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Operator":
        try:
            dim = int(data["dim"])
            kind = data.get("trace", "normalized")
            pairs = np.asarray(data["entries"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise StructuralError(f"malformed operator record: {exc}") from exc
        if kind not in ("normalized", "unnormalized"):
            raise StructuralError(f"unknown trace kind {kind!r}")
        if pairs.shape != (dim * dim, 2):
            raise StructuralError(f"expected {dim * dim} [re, im] pairs, got array of shape {pairs.shape}")
        entries = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(dim, dim)
        return cls(entries, TracialAlgebra(dim, kind == "normalized"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Operator":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class SpectralData:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # columns, unitary

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.conj().T


# --------------------------------------------------------------------------
# small helpers
# --------------------------------------------------------------------------


def _square(x) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise StructuralError(f"expected a square matrix, got shape {x.shape}")
    return x


def adjoint(x: np.ndarray) -> np.ndarray:
    return np.asarray(x).conj().T


def opnorm(x) -> float:
    """Operator norm (largest singular value); 0 for an empty matrix."""
    x = np.asarray(x)
    if x.size == 0:
        return 0.0
    return float(np.linalg.norm(x, 2))


def is_self_adjoint(x, tol: float = EPS_PSD) -> bool:
    x = _square(x)
    return opnorm(x - adjoint(x)) <= tol * max(1.0, opnorm(x))


def _require_self_adjoint(x, what: str = "operator") -> np.ndarray:
    x = _square(x)
    if not is_self_adjoint(x):
        raise DomainError(f"{what} is not self-adjoint (defect {opnorm(x - adjoint(x)):.3e})")
    return (x + adjoint(x)) / 2


def hermitian_part(x) -> np.ndarray:
    x = np.asarray(x)
    return (x + adjoint(x)) / 2


def spectral_data(x) -> SpectralData:
    """Eigendecomposition of a self-adjoint operator."""
    h = _require_self_adjoint(x)
    w, u = np.linalg.eigh(h)
    return SpectralData(w, u)


def is_psd(x, tol: float = EPS_PSD) -> bool:
    x = _square(x)
    if not is_self_adjoint(x, tol):
        return False
    if x.shape[0] == 0:
        return True
    return float(np.linalg.eigvalsh(hermitian_part(x))[0]) >= -tol * max(1.0, opnorm(x))


def is_projection(p, tol: float = EPS_PROJ) -> bool:
    p = _square(p)
    return opnorm(p @ p - p) <= tol and opnorm(adjoint(p) - p) <= tol


def clean_projection(p) -> np.ndarray:
    """Round the spectrum of an almost-projection to {0, 1}."""
    p = _square(p)
    if p.shape[0] == 0:
        return np.zeros_like(p, dtype=complex)
    w, u = np.linalg.eigh(hermitian_part(p))
    v = u[:, w > 0.5]
    return v @ v.conj().T


def psd_sqrt(x) -> np.ndarray:
    """Positive square root; eigenvalues slightly below zero are clamped to zero."""
    h = _require_self_adjoint(x, "argument of psd_sqrt")
    if h.shape[0] == 0:
        return h.astype(complex)
    w, u = np.linalg.eigh(h)
    scale = max(1.0, float(np.max(np.abs(w))))
    if w[0] < -EPS_PSD * scale:
        raise DomainError(f"argument of psd_sqrt is not positive (min eigenvalue {w[0]:.3e})")
    return (u * np.sqrt(np.clip(w, 0.0, None))) @ u.conj().T


def positive_part(x) -> np.ndarray:
    h = _require_self_adjoint(x)
    w, u = np.linalg.eigh(h)
    return (u * np.clip(w, 0.0, None)) @ u.conj().T


def modulus(x) -> np.ndarray:
    """``|x| = (x* x)^{1/2}``."""
    x = np.asarray(x)
    return psd_sqrt(adjoint(x) @ x)


def singular_values(x) -> np.ndarray:
    """Descending singular values."""
    x = _square(x)
    if x.shape[0] == 0:
        return np.zeros(0)
    return np.linalg.svd(x, compute_uv=False)


def lambda_min(x) -> float:
    h = _require_self_adjoint(x)
    if h.shape[0] == 0:
        return 0.0
    return float(np.linalg.eigvalsh(h)[0])


# --------------------------------------------------------------------------
# trace, norms, singular value function
# --------------------------------------------------------------------------


def trace(x, normalized: bool = True) -> complex:
    x = _square(x)
    t = np.trace(x)
    return complex(t / x.shape[0] if normalized else t)


def _mass(d: int, normalized: bool) -> float:
    return 1.0 / d if normalized else 1.0


def lp_norm(x, p: float, normalized: bool = True) -> float:
    """``(tau |x|^p)^{1/p}``; ``p = inf`` gives the operator norm."""
    if not (p >= 1):
        raise DomainError(f"L^p norm needs p >= 1, got {p}")
    s = singular_values(x)
    if s.size == 0:
        return 0.0
    if np.isinf(p):
        return float(s[0])
    mass = _mass(s.size, normalized)
    # factor out the largest value so large p does not overflow
    top = s[0]
    if top == 0.0:
        return 0.0
    return float(top * (mass * np.sum((s / top) ** p)) ** (1.0 / p))


def singular_value_function(x, normalized: bool = True) -> list[tuple[float, float]]:
    """The step function ``t -> mu_t(x)`` as ``(value, mass)`` pairs, values descending.

    ``mu_t(x) = s_k`` for ``t`` in the ``k``-th mass interval.
    """
    s = singular_values(x)
    mass = _mass(s.size, normalized)
    return [(float(v), mass) for v in s]


def mu(x, t: float, normalized: bool = True) -> float:
    """Evaluate the generalized singular value function at ``t >= 0``."""
    acc = 0.0
    for value, mass in singular_value_function(x, normalized):
        acc += mass
        if t < acc:
            return value
    return 0.0


def weak_l1_from_values(values: Iterable[float], mass: float) -> float:
    """``sup_lam lam * tau(chi_(lam, inf))`` for a spectrum with uniform atom mass.

    Exact: over descending values ``s_k`` the supremum equals ``max_k k * mass * s_k``.
    """
    s = np.sort(np.asarray(list(values), dtype=float))[::-1]
    if s.size == 0:
        return 0.0
    k = np.arange(1, s.size + 1)
    return float(max(0.0, np.max(k * mass * s)))


def weak_l1_norm(x, normalized: bool = True) -> float:
    s = singular_values(x)
    return weak_l1_from_values(s, _mass(s.size, normalized))


def distribution(x, lam: float, normalized: bool = True) -> float:
    """``tau(chi_(lam, inf)(|x|))``."""
    s = singular_values(x)
    return float(np.sum(s > lam) * _mass(s.size, normalized))


# --------------------------------------------------------------------------
# spectral projections and the projection lattice
# --------------------------------------------------------------------------


def _spectral_projection_dense(h: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if h.shape[0] == 0:
        return np.zeros_like(h, dtype=complex)
    w, u = np.linalg.eigh(h)
    tol_lo = EPS_EIG * max(1.0, abs(lo)) if np.isfinite(lo) else 0.0
    tol_hi = EPS_EIG * max(1.0, abs(hi)) if np.isfinite(hi) else 0.0
    keep = (w > lo + tol_lo) & (w <= hi + tol_hi)
    v = u[:, keep]
    return v @ v.conj().T


def spectral_projection(x, lo: float, hi: float = np.inf, blocks: Sequence[Sequence[int]] | None = None) -> np.ndarray:
    """Projection onto the eigenvectors of self-adjoint ``x`` with eigenvalue in ``(lo, hi]``.

    With ``blocks`` (a partition of the index set) the calculus runs block by
    block on the diagonal blocks of ``x``, so the result stays block diagonal.
    """
    h = _require_self_adjoint(x, "argument of spectral_projection")
    if blocks is None:
        return _spectral_projection_dense(h, lo, hi)
    out = np.zeros_like(h, dtype=complex)
    for block in blocks:
        idx = np.asarray(block, dtype=int)
        out[np.ix_(idx, idx)] = _spectral_projection_dense(h[np.ix_(idx, idx)], lo, hi)
    return out


def proj_meet(p, q, rtol: float = EPS_RANK) -> np.ndarray:
    """``p ^ q``: the projection onto ``range(p) & range(q)``.

    Computed as the null space of the stacked complements ``[(1 - p); (1 - q)]``.
    """
    p = _square(p)
    q = _square(q)
    if p.shape != q.shape:
        raise StructuralError(f"meet of projections with shapes {p.shape} and {q.shape}")
    d = p.shape[0]
    if d == 0:
        return np.zeros((0, 0), dtype=complex)
    one = np.eye(d)
    stacked = np.vstack([one - p, one - q])
    _, s, vh = np.linalg.svd(stacked)
    cut = rtol * max(1.0, float(s[0]))
    basis = vh[s <= cut].conj().T
    return basis @ basis.conj().T


def proj_meet_all(projections: Sequence[np.ndarray]) -> np.ndarray:
    if not projections:
        raise StructuralError("meet over an empty family needs an explicit identity")
    out = projections[0]
    for p in projections[1:]:
        out = proj_meet(out, p)
    return out


def op_leq(a, b, eps: float = EPS_PSD) -> bool:
    """``a <= b`` in the operator order, up to ``eps``."""
    a = _require_self_adjoint(a, "left operand")
    b = _require_self_adjoint(b, "right operand")
    if a.shape != b.shape:
        raise StructuralError(f"cannot compare shapes {a.shape} and {b.shape}")
    return lambda_min(b - a) >= -eps


def leq_slack(a, b) -> float:
    """``lambda_min(b - a)``; nonnegative iff ``a <= b``."""
    return lambda_min(hermitian_part(np.asarray(b) - np.asarray(a)))


def right_support(x, rtol: float = EPS_RANK) -> np.ndarray:
    """Projection onto ``(ker x)^perp``; ``x @ right_support(x) == x``.

    Singular values at most ``rtol * max(1, ||x||)`` count as zero.  The floor at 1
    keeps round-off residue of projection arithmetic from acquiring a support.
    """
    x = _square(x)
    if x.shape[0] == 0:
        return np.zeros((0, 0), dtype=complex)
    _, s, vh = np.linalg.svd(x)
    keep = s > rtol * max(1.0, float(s[0]))
    v = vh[keep].conj().T
    return v @ v.conj().T


def left_support(x, rtol: float = EPS_RANK) -> np.ndarray:
    """Projection onto ``range(x)``; ``left_support(x) @ x == x``."""
    return right_support(adjoint(_square(x)), rtol)


def rank_mass(p, normalized: bool = True) -> float:
    """Trace of a projection, read off its (real) trace."""
    return float(trace(p, normalized).real)
