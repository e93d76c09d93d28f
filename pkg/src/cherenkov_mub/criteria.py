"""Entanglement criteria: MUB witness, fidelity and E_F bounds, negativity, robustness."""
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from ._validation import ValidationError, check_nonnegative, check_positive
from .constants import FOUR_PI
from .kernel import trapezoid_weights

# constant of the feasibility condition Sigma_x * Sigma_p <= a hbar
ROBUSTNESS_A = 1.235


def _as_matrix(table):
    p = getattr(table, "p", table)
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValidationError("tables must be square d x d")
    return p


def best_correlated_sum(p):
    """(max over relabelings sigma of sum_n p[n, sigma(n)], sigma); identity wins ties."""
    p = _as_matrix(p)
    d = p.shape[0]
    ident = tuple(range(d))
    best, arg = float(np.trace(p)), ident
    for perm in itertools.permutations(range(d)):
        v = float(sum(p[n, perm[n]] for n in range(d)))
        if v > best + 1e-15:
            best, arg = v, perm
    return best, arg


def mub_witness(tables):
    """Correlation sum over M basis pairs against the separable bound 1 + (M - 1)/d.

    Returns (sum, threshold, entangled).
    """
    mats = [_as_matrix(t) for t in tables]
    if not mats:
        raise ValidationError("need at least one table")
    d = mats[0].shape[0]
    if any(m.shape[0] != d for m in mats):
        raise ValidationError("tables with mismatched d")
    M = len(mats)
    total = sum(best_correlated_sum(m)[0] for m in mats)
    threshold = 1.0 + (M - 1) / d
    return total, threshold, bool(total > threshold)


def fidelity_lower_bound(pos_table, mom_table):
    """F = (P00 + P11 - 1)/2 + sum_n Pnn(second basis) - sqrt(P01 P10), d = 2."""
    x = _as_matrix(pos_table)
    p = _as_matrix(mom_table)
    if x.shape != (2, 2) or p.shape != (2, 2):
        raise ValidationError("fidelity bound is implemented for d = 2")
    return 0.5 * (x[0, 0] + x[1, 1] - 1.0) + p[0, 0] + p[1, 1] - math.sqrt(x[0, 1] * x[1, 0])


def ef_lower_bound(F, pos_table, base="e"):
    """(I, E_F bound) with I = max(0, (2F - P00 - P11 - 2 sqrt(P01 P10))/sqrt 2)
    and E_F >= -log(1 - I^2), natural log unless base=2."""
    x = _as_matrix(pos_table)
    if x.shape != (2, 2):
        raise ValidationError("E_F bound is implemented for d = 2")
    I = (2 * F - x[0, 0] - x[1, 1] - 2 * math.sqrt(x[0, 1] * x[1, 0])) / math.sqrt(2.0)
    I = float(max(0.0, I))
    if I == 0.0:
        return 0.0, 0.0
    arg = 1.0 - I * I
    if arg <= 0:
        return I, math.inf
    ef = -math.log(arg)
    if base == 2:
        ef /= math.log(2.0)
    elif base != "e":
        raise ValidationError("base must be 'e' or 2")
    return I, max(0.0, ef)


def ppt_negativity(kernel):
    """Off-diagonal absolute mass of the kernel over k1 < k2, relative to its trace.

    The sum runs over the strict upper triangle of the stored [0, K]^2 grid
    with trapezoid weights.  Mirrored copies are left out on purpose: the
    kernel is even in each argument, so f(-k, k) = f(k, k) would turn every
    diagonal element into an off-diagonal one.  Zero exactly when the kernel
    has no coherences on its grid.
    """
    f = getattr(kernel, "f", None)
    if f is None:
        raise ValidationError("ppt_negativity needs a MomentumKernel")
    w = trapezoid_weights(kernel.k_axis)
    iu = np.triu_indices(kernel.k_axis.size, k=1)
    mass = float(np.sum(np.abs(f[iu]) * w[iu[0]] * w[iu[1]]))
    trace = kernel.trace()
    if not trace > 0:
        raise ValidationError("kernel trace must be positive")
    return mass / trace


def _m_term(r):
    """Correlated probability of one basis under Gaussian blur of relative width r."""
    if r == 0:
        return 1.0
    if math.isinf(r):
        return 0.0
    if r < 1e-100:
        # exp and erf terms have saturated
        return 1.0 - 2.0 / math.sqrt(2 * math.pi) * r
    return 2.0 / math.sqrt(2 * math.pi) * r * (math.exp(-1.0 / (2 * r * r)) - 1.0) + erf(1.0 / (math.sqrt(2) * r))


@dataclass(frozen=True)
class RobustnessQuery:
    sigma_x: float
    sigma_p: float
    T_x: float = None

    def __post_init__(self):
        check_nonnegative(self.sigma_x, "sigma_x")
        check_nonnegative(self.sigma_p, "sigma_p")
        if self.T_x is not None:
            check_positive(self.T_x, "T_x")


def robustness_measure(query=None, sigma_x=None, sigma_p=None, T_x=None):
    """Total correlation M(Sigma_x, Sigma_p, T_x) in (0, 2]; T_p = 4 pi / T_x."""
    if query is None:
        query = RobustnessQuery(sigma_x, sigma_p, T_x)
    if query.T_x is None:
        raise ValidationError("robustness_measure needs T_x")
    T_p = FOUR_PI / query.T_x
    return _m_term(query.sigma_x / query.T_x) + _m_term(query.sigma_p / T_p)


INFEASIBLE = None


def feasible_period_interval(sigma_x, sigma_p, a=ROBUSTNESS_A):
    """(T_minus, T_plus) where M >= 1.5 is reachable, or None when Sigma_x Sigma_p > a."""
    check_nonnegative(sigma_x, "sigma_x")
    check_positive(sigma_p, "sigma_p")
    prod = sigma_x * sigma_p
    if prod > a:
        return INFEASIBLE
    c = 2.0 * math.sqrt(math.pi * a) / sigma_p
    root = math.sqrt(max(0.0, 1.0 - prod / a))
    return c * (1.0 - root), c * (1.0 + root)


@dataclass
class CertificationReport:
    tables: dict
    witness_sum: float
    witness_threshold: float
    fidelity_bound: float
    I_bound: float
    ef_bound: float
    ef_bound_log2: float
    negativity: float = None
    binning: dict = field(default_factory=dict)
    entangled: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "tables": {k: t.to_dict() if hasattr(t, "to_dict") else np.asarray(t).tolist()
                       for k, t in self.tables.items()},
            "witness_sum": self.witness_sum,
            "witness_threshold": self.witness_threshold,
            "fidelity_bound": self.fidelity_bound,
            "I_bound": self.I_bound,
            "ef_bound": self.ef_bound,
            "ef_bound_log2": self.ef_bound_log2,
            "negativity": self.negativity,
            "binning": self.binning,
            "entangled": self.entangled,
            "extra": self.extra,
        }


def certify(tables, kernel=None, binning=None):
    """All criteria from the position-position and momentum-momentum tables.

    ``tables`` maps "xx" and "pp" (and optionally "xp", "px") to JointProbTables
    or plain matrices.
    """
    if "xx" not in tables or "pp" not in tables:
        raise ValidationError("certification needs the 'xx' and 'pp' tables")
    total, thr, wit = mub_witness([tables["xx"], tables["pp"]])
    d = _as_matrix(tables["xx"]).shape[0]
    if d == 2:
        F = fidelity_lower_bound(tables["xx"], tables["pp"])
        I, ef = ef_lower_bound(F, tables["xx"])
        _, ef2 = ef_lower_bound(F, tables["xx"], base=2)
    else:
        F = I = ef = ef2 = float("nan")
    neg = ppt_negativity(kernel) if kernel is not None else None
    flags = {"witness": wit, "fidelity": bool(F > 1.0 / d), "ef": bool(ef > 0)}
    if neg is not None:
        flags["negativity"] = bool(neg > 0)
    return CertificationReport(
        tables=dict(tables), witness_sum=total, witness_threshold=thr, fidelity_bound=F,
        I_bound=I, ef_bound=ef, ef_bound_log2=ef2, negativity=neg, binning=binning or {},
        entangled=flags,
    )


def best_robustness(sigma_x, sigma_p, bounds=(1e-3, 1e3)):
    """(T_x, M) maximizing the robustness measure over T_x on a log scale."""
    from scipy.optimize import minimize_scalar

    def neg(logT):
        return -robustness_measure(sigma_x=sigma_x, sigma_p=sigma_p, T_x=math.exp(logT))

    lo, hi = math.log(bounds[0]), math.log(bounds[1])
    grid = np.linspace(lo, hi, 241)
    vals = [neg(g) for g in grid]
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(neg, bounds=(a, b), method="bounded", options={"xatol": 1e-10})
    return math.exp(res.x), -res.fun
