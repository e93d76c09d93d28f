"""Search over conjugate periodic bases and unbiasedness checks for candidate bases."""
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import ValidationError, check_positive
from .constants import FOUR_PI
from .criteria import mub_witness
from .measurement import (
    MubPair,
    PeriodicBinning,
    ResolutionProfile,
    apply_psf,
    density_pp,
    density_xx,
    joint_probabilities,
)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class OptimizationResult:
    best_Tx: float
    best_Tp: float
    best_centers: tuple
    objective: float
    threshold: float
    certifiable: bool
    trace: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "best_Tx": self.best_Tx,
            "best_Tp": self.best_Tp,
            "best_centers": list(self.best_centers),
            "objective": self.objective,
            "threshold": self.threshold,
            "certifiable": self.certifiable,
        }


class WitnessObjective:
    """Witness sum of the xx and pp tables as a function of (T_x, p_cen).

    The blurred densities do not depend on the basis, so they are built once.
    The position table does not depend on x_cen (translation invariance).
    """

    def __init__(self, kernel, resolution=None, x_max=30.0, xx_density=None):
        resolution = resolution or ResolutionProfile()
        base = xx_density if xx_density is not None else density_xx(kernel, x_max)
        self.xx = apply_psf(base, resolution)
        self.pp = apply_psf(density_pp(kernel), resolution)
        self.evaluations = []

    def tables(self, T_x, p_cen=0.0, x_cen=0.0):
        pair = MubPair.from_period(T_x, x_cen=x_cen, p_cen=p_cen)
        return pair, {
            "xx": joint_probabilities(self.xx, pair.pos, pair.pos),
            "pp": joint_probabilities(self.pp, pair.mom.mirror(), pair.mom),
        }

    def __call__(self, T_x, p_cen=0.0):
        _, t = self.tables(T_x, p_cen)
        val = mub_witness([t["xx"], t["pp"]])[0]
        self.evaluations.append((T_x, FOUR_PI / T_x, p_cen, val))
        return val


def golden_max(fn, lo, hi, tol):
    """Golden-section maximization of a unimodal function on [lo, hi]."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fn(d)
    return (c, fc) if fc >= fd else (d, fd)


def best_center(fn, T_p, n_scan=16):
    """Coarse phase scan of p_cen over one period, then a parabolic step."""
    phases = np.arange(n_scan) * T_p / n_scan
    vals = np.array([fn(p) for p in phases])
    i = int(np.argmax(vals))
    h = T_p / n_scan
    y0, y1, y2 = vals[i - 1], vals[i], vals[(i + 1) % n_scan]
    denom = y0 - 2 * y1 + y2
    best_p, best_v = phases[i], vals[i]
    if denom < 0:
        off = 0.5 * (y0 - y2) / denom
        cand = phases[i] + off * h
        v = fn(cand)
        if v > best_v:
            best_p, best_v = cand, v
    return float(best_p), float(best_v)


def optimize_periods(kernel, resolution=None, bounds=(2.0, 20.0), tol=1e-3, x_max=30.0,
                     optimize_centers=True, n_starts=3, xx_density=None):
    """Maximize the witness sum over T_x (T_p = 4 pi / T_x) and the momentum pattern phase.

    Golden-section search over log T_x on ``n_starts`` equal sub-brackets;
    ``tol`` is the relative tolerance on T_x.
    """
    lo, hi = float(bounds[0]), float(bounds[1])
    if not (0 < lo < hi):
        raise ValidationError(f"search bounds must satisfy 0 < lo < hi, got {bounds}")
    obj = WitnessObjective(kernel, resolution, x_max, xx_density)

    def at(logT):
        T = math.exp(logT)
        if optimize_centers:
            return best_center(lambda p: obj(T, p), FOUR_PI / T)[1]
        return obj(T, 0.0)

    edges = np.linspace(math.log(lo), math.log(hi), n_starts + 1)
    best = None
    for a, b in zip(edges[:-1], edges[1:]):
        x, v = golden_max(at, a, b, math.log1p(tol))
        if best is None or v > best[1]:
            best = (x, v)
    T = math.exp(best[0])
    p_cen = best_center(lambda p: obj(T, p), FOUR_PI / T)[0] if optimize_centers else 0.0
    pair, tables = obj.tables(T, p_cen)
    value, thr, ok = mub_witness([tables["xx"], tables["pp"]])
    return OptimizationResult(
        best_Tx=pair.T_x, best_Tp=pair.T_p, best_centers=(0.0, p_cen), objective=value,
        threshold=thr, certifiable=ok,
        trace=[(t, tp, v) for t, tp, _, v in obj.evaluations], tables=tables,
    )


@dataclass
class ProbeSpec:
    """Localized probe states for the unbiasedness checks.

    width_fraction: probe standard deviation as a fraction of the bin width.
    n_probes: random probe placements per basis order.
    entropy_width: |psi|^2 standard deviation of the sequential-projection probe, um.
    perturbations: relative changes of T_p for the entropy test.
    """

    width_fraction: float = 0.1
    n_probes: int = 5
    seed: int = 0
    entropy_width: float = 0.1
    perturbations: tuple = (0.0, 0.2)
    grid_step: float = 0.01
    grid_length: float = 2560.0


def localization_test(pair_or_bins, spec=None):
    """Max deviation from 1/d of conjugate outcomes for probes localized in one bin.

    ``pair_or_bins`` is a MubPair or a (position_binning, momentum_binning)
    tuple, which may include non-periodic SlitBinning objects.
    """
    spec = spec or ProbeSpec()
    if isinstance(pair_or_bins, MubPair):
        bx, bp = pair_or_bins.pos, pair_or_bins.mom
    else:
        bx, bp = pair_or_bins
    rng = np.random.default_rng(spec.seed)
    worst = 0.0
    rows = []
    for loc, out in ((bx, bp), (bp, bx)):
        for _ in range(spec.n_probes):
            n0 = int(rng.integers(loc.d)) if hasattr(loc, "delta") else 0
            dist = _probe_outcomes(loc, out, n0, spec.width_fraction, rng)
            dev = float(np.max(np.abs(dist - 1.0 / len(dist))))
            rows.append((n0, dist.tolist(), dev))
            worst = max(worst, dev)
    return worst, rows


def _probe_outcomes(loc, out, n0, width_fraction, rng):
    """Conjugate outcome distribution of a minimum-uncertainty probe localized in ``loc``.

    Spread s in one variable means spread 1/(2 s) in the conjugate one
    (hbar = 1); the conjugate mean is drawn at random.
    """
    delta = loc.delta if hasattr(loc, "delta") else loc.width
    conj = 1.0 / (2.0 * width_fraction * delta)
    if hasattr(out, "bin_probability"):
        mu = float(rng.uniform(0.0, out.T))
        return np.array([float(out.bin_probability(mu, n, conj)) for n in range(out.d)])
    # non-periodic outcome windows: integrate the conjugate Gaussian numerically
    v = np.linspace(-10 * conj, 10 * conj, 40001)
    w = np.exp(-0.5 * (v / conj) ** 2)
    idx = out.index(v)
    return np.array([w[idx == n].sum() for n in range(out.d)]) / w.sum()


def _entropy(p):
    p = np.asarray(p, float)
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def sequential_entropy(T_x, eps, spec=None):
    """Entropy of position outcomes after position then momentum projection.

    The probe |psi|^2 is a Gaussian of std ``spec.entropy_width`` at the centre
    of position outcome 0.  Its amplitude is projected on that position
    element, then on momentum element 0 of a pattern with period
    (1 + eps) 4 pi / T_x, and finally measured in the position basis.
    Returns (H, relative reduction (ln d - H)/ln d, outcome distribution).
    """
    spec = spec or ProbeSpec()
    check_positive(T_x, "T_x")
    bx = PeriodicBinning(T_x, 2, 0.0)
    bp = PeriodicBinning(FOUR_PI / T_x * (1.0 + eps), 2, 0.0)
    n = int(round(spec.grid_length / spec.grid_step))
    n += n % 2
    x = (np.arange(n) - n // 2) * spec.grid_step
    x0 = bx.center + 0.5 * bx.delta
    s2 = spec.entropy_width**2
    psi = np.exp(-((x - x0) ** 2) / (4 * s2)).astype(complex)
    psi *= bx.index(x) == 0
    k = 2 * np.pi * np.fft.fftfreq(n, d=spec.grid_step)
    phi = np.fft.fft(psi)
    phi *= bp.index(k) == 0
    psi = np.fft.ifft(phi)
    prob = np.abs(psi) ** 2
    dist = np.array([prob[bx.index(x) == m].sum() for m in range(2)])
    dist /= dist.sum()
    H = _entropy(dist)
    return H, (math.log(2) - H) / math.log(2), dist


def verify_unbiasedness(pair, probe_spec=None):
    """Localization test plus the sequential-projection entropy test for ``pair``."""
    spec = probe_spec or ProbeSpec()
    worst, rows = localization_test(pair, spec)
    entropy = []
    for eps in spec.perturbations:
        H, red, dist = sequential_entropy(pair.T_x, eps, spec)
        entropy.append({"eps": eps, "entropy": H, "reduction": red, "distribution": dist.tolist()})
    return {"max_deviation": worst, "probes": rows, "entropy": entropy}
