"""Random ensembles and the verification suites built on them.

Trial ``i`` of a run with seed ``s`` draws from ``numpy.random.default_rng([s, i])``,
so any single trial can be replayed without the others.  Suites never raise on
a failed inequality: a failure is a ``CheckResult`` with ``passed=False`` and
the seed of the worst trial.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import cuculescu as cc
from . import decompose as dc
from .algebra import EPS_NUM, EPS_PSD, DomainError, StructuralError, adjoint, lp_norm, opnorm, trace
from .filtration import (
    Diagonal,
    Filtration,
    Martingale,
    Pinching,
    Tensor,
    as_generator,
    complex_gaussian,
    differences,
    independent_sequence,
    is_k_regular,
    martingale_from_differences,
    random_martingale,
    random_regular_martingale,
    regularity_defects,
)
from .norms import (
    BMO_REVERSE_CONSTANT,
    bmo_norms,
    bmo_upper_bound,
    h_norm,
    hardy_norm,
    s_col,
    s_row,
    sigma_col,
    sigma_row,
)

FILTRATIONS = ("pinching", "diagonal", "tensor")
DEFAULT_LAMBDAS = (1.0, 2.0, 4.0, 8.0, 16.0)

# numerical tolerances of the acceptance checks
TOL_OPERATOR = 1e-8
TOL_MASS = 1e-10
TOL_EXACT = 1e-9
TOL_HILBERT = 1e-10


def build_filtration(kind: str, dim: int, levels: int) -> Filtration:
    """Dyadic filtration of the requested family.

    ``tensor`` uses factors ``(dim / 2^{levels-1}, 2, ..., 2)``, so the first
    level is a full ``M_{dim / 2^{levels-1}}`` (possibly ``C``).
    """
    if kind == "pinching":
        return Pinching.dyadic(dim, levels)
    if kind == "diagonal":
        return Diagonal.dyadic(dim, levels)
    if kind == "tensor":
        tail = 2 ** (levels - 1)
        if levels < 1 or dim % tail:
            raise StructuralError(f"tensor filtration needs dim divisible by 2^(levels-1) = {tail}, got {dim}")
        return Tensor((dim // tail,) + (2,) * (levels - 1))
    raise StructuralError(f"unknown filtration family {kind!r}; choose from {FILTRATIONS}")


@dataclass(frozen=True)
class EnsembleSpec:
    dim: int = 8
    levels: int = 4
    filtration: str = "pinching"
    trials: int = 200
    seed: int = 7
    mode: str = "positive-normalized"  # or self-adjoint, general, k-regular
    k: float = 2.0
    lambdas: tuple = DEFAULT_LAMBDAS

    def build(self) -> Filtration:
        return build_filtration(self.filtration, self.dim, self.levels)

    def trial_seed(self, i: int) -> list[int]:
        return [int(self.seed), int(i)]

    def sample(self, F: Filtration, i: int) -> Martingale:
        if self.mode == "k-regular":
            return random_regular_martingale(F, self.trial_seed(i), self.k)
        return random_martingale(F, self.trial_seed(i), self.mode)

    def trial_stream(self) -> Iterable[tuple[list[int], Martingale]]:
        F = self.build()
        for i in range(self.trials):
            yield self.trial_seed(i), self.sample(F, i)


@dataclass
class CheckResult:
    name: str
    threshold: float
    max_observed: float = -math.inf
    worst_seed: list | None = None
    trials: int = 0

    @property
    def passed(self) -> bool:
        return self.trials == 0 or self.max_observed <= self.threshold

    def record(self, value: float, seed):
        self.trials += 1
        if value > self.max_observed or self.worst_seed is None:
            self.max_observed = float(value)
            self.worst_seed = seed

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        if self.trials == 0:
            out["max_observed"] = None
        return out


@dataclass
class SuiteResult:
    name: str
    checks: dict = field(default_factory=dict)
    measurements: dict = field(default_factory=dict)  # non-gating maxima
    excluded: list = field(default_factory=list)  # (seed, reason)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def check(self, name: str, threshold: float, value: float, seed):
        if name not in self.checks:
            self.checks[name] = CheckResult(name, float(threshold))
        self.checks[name].record(value, seed)

    def measure(self, name: str, value: float):
        self.measurements[name] = max(self.measurements.get(name, -math.inf), float(value))

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks.values() if not c.passed]

    def to_dict(self) -> dict:
        return {
            "suite": self.name,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks.values()],
            "measurements": dict(sorted(self.measurements.items())),
            "excluded": [{"seed": s, "reason": r} for s, r in self.excluded],
        }


# --------------------------------------------------------------------------
# weak-type suite
# --------------------------------------------------------------------------


def _relative_gap(values: Sequence[float], reference: float) -> float:
    if reference == 0:
        return max(abs(v) for v in values)
    return max(abs(v - reference) for v in values) / reference


def check_positive_trial(res: SuiteResult, m: Martingale, seed, lambdas: Sequence[float] = DEFAULT_LAMBDAS, tol: float = TOL_OPERATOR):
    """Every weak-type check on one positive normalized martingale."""
    for lam in lambdas:
        r = cc.cuculescu_residuals(m, cc.cuculescu(m, lam))
        res.check("cuculescu.membership", tol, r["membership"], seed)
        res.check("cuculescu.commutation", tol, r["commutation"], seed)
        res.check("cuculescu.domination", tol, r["domination"], seed)
        res.check("cuculescu.decreasing", tol, r["decreasing"], seed)
        res.check("cuculescu.mass", TOL_MASS, r["mass_excess"], seed)

    lay = cc.layers(m)
    r = cc.layer_residuals(m, lay)
    res.check("layers.disjointness", tol, r["disjointness"], seed)
    res.check("layers.partition", tol, r["partition"], seed)
    res.check("layers.domination", tol, r["domination"], seed)
    res.check("layers.membership", tol, r["membership"], seed)

    sup = cc.supports(m, lay)
    r = cc.support_residuals(m, lay, sup)
    res.check("supports.right_support", tol, r["right_support"], seed)
    res.check("supports.left_support", tol, r["left_support"], seed)
    excess = max(sup.mass_tail(m0) - cc.SUPPORT_MASS_CONSTANT * 2.0**-m0 for m0 in range(lay.k_max + 1))
    res.check("supports.mass_tail_excess", TOL_MASS, excess, seed)
    res.check("supports.h_norm", cc.H_BOUND + tol, max(sup.h_inf, sup.h_2), seed)

    for fam in lay.families:
        ce = cc.compression_energy(m, fam.lam, fam)
        res.check("energy.levelwise_excess", tol, ce.levelwise_excess, seed)
        res.check("energy.total_excess", tol, ce.total - ce.bound, seed)

    triple = dc.abc_decompose(m, lay)
    F = m.filtration
    res.check("abc.exactness", TOL_EXACT, dc.exactness_residual(triple, m), seed)
    res.check("abc.adaptedness", tol, dc.adaptedness_residual([triple.a, triple.b, triple.c], F), seed)
    res.check("abc.a1_zero", tol, opnorm(triple.a[0]), seed)
    for name, ratio in dc.per_term_ratios(triple, m).items():
        res.check(f"abc.per_term_{name}", dc.PER_TERM_L2[name] + tol, ratio, seed)
    x2 = lp_norm(m.terminal, 2)
    res.check("abc.l2_ratio", dc.L2_CONSTANT, dc.abc_l2_report(triple, m) / x2 if x2 > 0 else 0.0, seed)
    w = dc.abc_weak_report(triple, m)
    res.check("abc.theta_weak", dc.THETA_BOUND, w.theta_w, seed)
    res.check("abc.sigma_b_weak", dc.SIGMA_BOUND, w.sigma_b_w, seed)
    res.check("abc.sigma_c_weak", dc.SIGMA_BOUND, w.sigma_c_w, seed)
    res.check("abc.conditional_squares", tol, dc.conditional_square_residual(triple, m, lay), seed)

    x2 = lp_norm(m.terminal, 2)
    squares = [lp_norm(s_col(m), 2), lp_norm(s_row(m), 2), lp_norm(sigma_col(m), 2), lp_norm(sigma_row(m), 2)]
    res.check("hilbert.square_functions", TOL_HILBERT, _relative_gap(squares, x2), seed)

    res.measure("centered_diagonal_weak", dc.centered_diagonal_weak(triple, F))
    res.measure("k_max", lay.k_max)


def run_weak_type_suite(spec: EnsembleSpec, inject: Sequence[Martingale] = (), tol: float = TOL_OPERATOR) -> SuiteResult:
    """Cuculescu, layer, support, energy and adapted-triple checks over an ensemble.

    ``inject`` adds hand-made martingales (reported with seed ``None``).
    """
    res = SuiteResult("weak-type")
    trials = list(spec.trial_stream()) + [(None, m) for m in inject]
    for seed, m in trials:
        check_positive_trial(res, m, seed, spec.lambdas, tol)
    return res


def check_regular_trial(res: SuiteResult, m: Martingale, k: float, seed, tol: float = TOL_OPERATOR) -> bool:
    if not is_k_regular(m, k):
        scale = max(1.0, max(opnorm(v) for v in m.values))
        first = next(n for n, slack in enumerate(regularity_defects(m, k), start=2) if slack < -EPS_PSD * scale)
        res.excluded.append((seed, f"not {k}-regular at level {first}"))
        return False
    pair = dc.yz_decompose(m)
    F = m.filtration
    dx, dy, dz = differences(m), differences(pair.y), differences(pair.z)
    res.check("yz.exactness", TOL_EXACT, max(opnorm(a - b - c) / max(1.0, opnorm(a)) for a, b, c in zip(dx, dy, dz)), seed)
    res.check("yz.adaptedness", tol, dc.adaptedness_residual([dy, dz], F), seed)
    md = max((opnorm(F.expect(n - 1, d)) for seq in (dy, dz) for n, d in enumerate(seq, start=1) if n >= 2), default=0.0)
    res.check("yz.martingale_difference", tol, md, seed)
    r = dc.regular_weak_report(m, k)
    bound = dc.regular_bound(k)
    res.check("regular.sigma_y_weak", bound, r.sigma_y_w, seed)
    res.check("regular.sigma_z_weak", bound, r.sigma_z_w, seed)
    return True


def run_regular_suite(spec: EnsembleSpec, inject: Sequence[Martingale] = (), tol: float = TOL_OPERATOR) -> SuiteResult:
    """Pair decomposition checks on k-regular ensembles; non-regular trials are excluded."""
    spec = EnsembleSpec(**{**asdict(spec), "mode": "k-regular"})
    res = SuiteResult("regular")
    trials = list(spec.trial_stream()) + [(None, m) for m in inject]
    for seed, m in trials:
        check_regular_trial(res, m, spec.k, seed, tol)
    return res


# --------------------------------------------------------------------------
# constants
# --------------------------------------------------------------------------

# name -> (numerator, denominator) among "H" (column/row Hardy), "h" (conditioned Hardy), "L" (L^p)
RATIOS = {
    "alpha": ("H", "L"),
    "beta": ("L", "H"),
    "delta": ("h", "L"),
    "eta": ("L", "h"),
    "kappa": ("h", "H"),
    "nu": ("H", "h"),
}


@dataclass
class RatioRecord:
    p: float
    ratio_name: str
    max: float
    mean: float
    exact: bool
    trials: int
    seed: int


@dataclass
class ConstantsReport:
    records: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)  # ratio -> {"near_one": s, "large_p": s}

    def rows(self, p: float) -> dict:
        return {r.ratio_name: r for r in self.records if r.p == p}

    def to_dict(self) -> dict:
        return {"records": [asdict(r) for r in self.records], "slopes": self.slopes}


def _fit_slope(xs, ys) -> float | None:
    pts = [(math.log(x), math.log(y)) for x, y in zip(xs, ys) if x > 0 and y > 0]
    if len(pts) < 2 or len({p[0] for p in pts}) < 2:
        return None
    a, b = np.array(pts).T
    return float(np.polyfit(a, b, 1)[0])


def _check_grid(p_grid: Sequence[float]):
    for p in p_grid:
        if not (1 <= p < math.inf):
            raise DomainError(f"p must lie in [1, inf), got {p}")


def estimate_constants(spec: EnsembleSpec, p_grid: Sequence[float]) -> ConstantsReport:
    """Max and mean of the six norm ratios per ``p``.

    Below ``p = 2`` the Hardy norms are upper-bound proxies, so any ratio
    involving them is flagged ``exact=False``.  Slopes are log-log fits of
    the max ratio against ``1/(p-1)`` for ``p < 2`` and against ``p`` for ``p > 2``.
    """
    _check_grid(p_grid)
    report = ConstantsReport()
    if not p_grid:
        return report
    samples = [m for _, m in spec.trial_stream()]
    for p in p_grid:
        values = {name: [] for name in RATIOS}
        exact = {name: True for name in RATIOS}
        for m in samples:
            norms = {"L": lp_norm(m.terminal, p)}
            norms["H"], exact_H = hardy_norm(m, p)
            norms["h"], exact_h = h_norm(m, p)
            flags = {"L": True, "H": exact_H, "h": exact_h}
            if min(norms.values()) <= 0:
                continue
            for name, (num, den) in RATIOS.items():
                values[name].append(norms[num] / norms[den])
                exact[name] = exact[name] and flags[num] and flags[den]
        for name in RATIOS:
            v = values[name]
            report.records.append(
                RatioRecord(float(p), name, float(max(v, default=math.nan)), float(np.mean(v)) if v else math.nan, exact[name], len(v), spec.seed)
            )
    for name in RATIOS:
        rows = [(r.p, r.max) for r in report.records if r.ratio_name == name]
        low = [(1.0 / (p - 1.0), v) for p, v in rows if 1 < p < 2]
        high = [(p, v) for p, v in rows if p > 2]
        report.slopes[name] = {
            "near_one": _fit_slope(*zip(*low)) if low else None,
            "large_p": _fit_slope(*zip(*high)) if high else None,
        }
    return report


# --------------------------------------------------------------------------
# independent sequences
# --------------------------------------------------------------------------


def bmo_identity_residual(m: Martingale, base: str = "scalar") -> float:
    """Max over ``n`` of the gap in the conditional energy identity

    ``E_n |x_N - x_{n-1}|^2 = |dx_n|^2 + E_n(sum_{k>n} E_{k-1}|dx_k|^2)``.
    """
    F = m.filtration
    dx = differences(m)
    worst = 0.0
    for n in range(1, m.levels + 1):
        prev = m.x(n - 1) if n > 1 or base == "first" else F.base_expect(m.terminal)
        r = m.terminal - prev
        lhs = F.expect(n, adjoint(r) @ r)
        tail = sum((F.expect(k - 1, adjoint(dx[k - 1]) @ dx[k - 1]) for k in range(n + 1, m.levels + 1)), np.zeros_like(lhs))
        rhs = adjoint(dx[n - 1]) @ dx[n - 1] + F.expect(n, tail)
        worst = max(worst, opnorm(lhs - rhs) / max(1.0, opnorm(lhs)))
    return worst


@dataclass(frozen=True)
class BmoSides:
    bmo: float
    bound: float  # sup ||a_n|| + ||(sum E_N(a_n a_n^* + a_n^* a_n))^{1/2}||
    scalar_bound: float  # sup ||a_n|| + (sum ||a_n||_2^2)^{1/2}


def bmo_sides(elements: Sequence[np.ndarray], F: Tensor) -> BmoSides:
    a = sum(elements)
    _, _, bmo = bmo_norms(a, F, base="scalar")
    sup = max(opnorm(x) for x in elements)
    energy = sum(F.base_expect(x @ adjoint(x) + adjoint(x) @ x) for x in elements)
    bound = sup + math.sqrt(max(0.0, opnorm(energy)))
    scalar = sup + math.sqrt(sum(lp_norm(x, 2) ** 2 for x in elements))
    return BmoSides(bmo, bound, scalar)


def run_bmo_suite(factor_dims: Sequence[int] = (2, 2, 2, 2), trials: int = 100, seed: int = 7, tol: float = TOL_OPERATOR) -> SuiteResult:
    """Two-sided BMO estimate for sums of independent centered tensor elements."""
    res = SuiteResult("bmo")
    for i in range(trials):
        s = [int(seed), i]
        rng = as_generator(s)
        seq = independent_sequence(factor_dims, rng, beta=float(rng.uniform(0.25, 2.0)))
        F = seq.filtration
        m = martingale_from_differences(seq.elements, F)
        sides = bmo_sides(seq.elements, F)
        res.check("bmo.upper_ratio", 1.0 + tol, sides.bmo / sides.bound, s)
        res.check("bmo.reverse_ratio", BMO_REVERSE_CONSTANT + tol, sides.bound / sides.bmo, s)
        res.check("bmo.energy_identity", tol, bmo_identity_residual(m), s)
        res.check("bmo.general_upper_excess", tol, sides.bmo - bmo_upper_bound(m, base="scalar"), s)
        cond = max(
            opnorm(F.expect_prev(n, x @ adjoint(x) + adjoint(x) @ x, "scalar") - F.base_expect(x @ adjoint(x) + adjoint(x) @ x))
            for n, x in enumerate(seq.elements, start=1)
        )
        res.check("bmo.independence_conditioning", tol, cond, s)
        res.measure("bmo.scalar_upper_ratio", sides.bmo / sides.scalar_bound)
        res.measure("bmo.scalar_reverse_ratio", sides.scalar_bound / sides.bmo)
    return res


@dataclass
class KhintchineReport:
    alpha: float
    beta: float
    min_ratio: float
    max_ratio: float
    trials: int
    excluded: int

    def to_dict(self) -> dict:
        return asdict(self)


def khintchine_ratio(factors: Sequence[np.ndarray], bs: Sequence[np.ndarray]) -> float | None:
    """``||sum a_n (x) b_n||_BMO / max(||(sum b_n^* b_n)^{1/2}||, ||(sum b_n b_n^*)^{1/2}||)``.

    ``None`` when every ``b_n`` vanishes.
    """
    dB = np.asarray(bs[0]).shape[0]
    F = Tensor((dB,) + tuple(np.asarray(g).shape[0] for g in factors), head=1)
    total = sum(np.kron(np.asarray(b, dtype=complex), np.eye(F.dim // dB)) @ F.embed(k + 1, g) for k, (g, b) in enumerate(zip(factors, bs)))
    col = opnorm(sum(adjoint(b) @ b for b in bs))
    row = opnorm(sum(b @ adjoint(b) for b in bs))
    denom = math.sqrt(max(col, row))
    if denom == 0:
        return None
    return bmo_norms(total, F, base="scalar")[2] / denom


def run_khintchine_scenario(a_spec, b_dim: int = 2, trials: int = 50, seed: int = 7) -> KhintchineReport:
    """Ratio band of the operator-coefficient Khintchine estimate in BMO.

    ``a_spec`` is either a list of tensor factor sizes (the ``a_n`` are then drawn
    from ``seed``) or an explicit list of centered factor matrices ``g_n``.
    Trials whose coefficients all vanish are excluded.
    """
    if len(a_spec) and np.ndim(a_spec[0]) == 0:
        factors = independent_sequence([int(k) for k in a_spec], [int(seed), 0, 0]).factors
    else:
        factors = [np.asarray(g, dtype=complex) for g in a_spec]
    for g in factors:
        if abs(trace(g)) > EPS_NUM * max(1.0, opnorm(g)):
            raise DomainError("the a_n must be centered: tau(g_n) = 0")
    alpha = min(lp_norm(g, 2) for g in factors)
    beta = max(opnorm(g) for g in factors)
    if alpha <= EPS_NUM:
        raise DomainError("inf ||a_n||_2 = 0: the estimate needs alpha > 0")
    ratios, excluded = [], 0
    for i in range(trials):
        rng = as_generator([int(seed), i, 1])
        bs = [complex_gaussian(rng, (b_dim, b_dim)) * rng.uniform(0.0, 2.0) for _ in factors]
        r = khintchine_ratio(factors, bs)
        if r is None:
            excluded += 1
        else:
            ratios.append(r)
    return KhintchineReport(
        alpha=float(alpha),
        beta=float(beta),
        min_ratio=float(min(ratios, default=math.nan)),
        max_ratio=float(max(ratios, default=math.nan)),
        trials=len(ratios),
        excluded=excluded,
    )


# --------------------------------------------------------------------------
# worked example
# --------------------------------------------------------------------------


def demo_martingale() -> Martingale:
    """Classical dyadic martingale on four atoms with terminal value ``diag(4, 0, 0, 0)``."""
    from .filtration import martingale_from_terminal

    F = Diagonal(([[0, 1, 2, 3]], [[0, 1], [2, 3]], [[0], [1], [2], [3]]))
    return martingale_from_terminal(np.diag([4.0, 0.0, 0.0, 0.0]), F)
