"""Joint densities of the four measurement settings and their periodic binning.

Four representations cover the settings without ever forming a 2-D grid:

* ``ridge``: momentum-momentum.  All mass sits on p_e = -k_gamma with weight
  g(k) = f(k, k); Gaussian blur stays semi-analytic (per-axis periodic bin
  probabilities).
* ``mixed``: position-momentum.  Uniform in the position variable and g(k)
  in the momentum variable.
* ``difference``: position-position.  A function of s = x_e - x_gamma only,
  kept as a 1-D profile weighted by the overlap length (2 x_max - |s|).
* ``grid``: a generic 2-D grid, used for materialized exports, analytic test
  densities and the brute-force cross-checks.
"""
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.special import erf

from ._validation import (
    ValidationError,
    check_array,
    check_int,
    check_nonnegative,
    check_positive,
    check_uniform_axis,
)
from .constants import FOUR_PI
from .kernel import trapezoid_weights

FWHM_TO_SIGMA = 1.0 / math.sqrt(8.0 * math.log(2.0))
POSITION, MOMENTUM = "position", "momentum"


class PrecisionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PeriodicBinning:
    """d interleaved outcome classes of width T/d repeating with period T."""

    T: float
    d: int = 2
    center: float = 0.0

    def __post_init__(self):
        check_positive(self.T, "T")
        check_int(self.d, "d", minimum=2)
        if not math.isfinite(self.center):
            raise ValidationError("center must be finite")

    @property
    def delta(self):
        return self.T / self.d

    def index(self, v):
        v = np.asarray(v, dtype=float)
        r = np.mod(v - self.center, self.T)
        n = np.floor(r / self.delta).astype(int)
        # r can round up to T itself
        return np.minimum(n, self.d - 1)

    def mirror(self):
        """Binning of -v whose label for -v is (-n mod d) for label n of v.

        For d = 2 the labels coincide, which is the pairing used for the
        anticorrelated momenta p_e = -hbar k_gamma.
        """
        return PeriodicBinning(self.T, self.d, -self.center - self.delta)

    def bin_probability(self, mu, n, sigma=0.0):
        """P(mu + N(0, sigma^2) falls in outcome n), vectorized over mu."""
        mu = np.asarray(mu, dtype=float)
        lo = self.center + n * self.delta
        hi = lo + self.delta
        if sigma < 1e-12 * self.delta:
            return (self.index(mu) == n).astype(float)
        # reduce into one period before summing images
        m = lo + np.mod(mu - lo, self.T)
        reach = int(math.ceil(8.0 * sigma / self.T)) + 1
        j = np.arange(-reach, reach + 1).reshape((-1,) + (1,) * m.ndim) * self.T
        z = math.sqrt(2.0) * sigma
        return 0.5 * (erf((hi + j - m) / z) - erf((lo + j - m) / z)).sum(axis=0)

    def cell_fractions(self, axis):
        """(len(axis), d) fraction of each grid cell lying in each outcome.

        Cells are centred on the axis points with width equal to the step.
        """
        axis = check_uniform_axis(axis, "axis")
        h = axis[1] - axis[0]
        out = np.zeros((axis.size, self.d))
        for n in range(self.d):
            out[:, n] = self._overlap(axis - h / 2, axis + h / 2, n) / h
        return out

    def _overlap(self, a, b, n):
        """Length of [a, b] inside outcome n, via the periodic primitive."""
        return self._primitive(b, n) - self._primitive(a, n)

    def _primitive(self, x, n):
        # measure of outcome n in [center, x) extended periodically
        lo = self.center + n * self.delta
        y = x - lo
        k = np.floor(y / self.T)
        r = y - k * self.T
        return k * self.delta + np.minimum(r, self.delta)


@dataclass(frozen=True)
class MubPair:
    """Conjugate position and momentum binnings with T_x * T_p = d 2 pi / u."""

    pos: PeriodicBinning
    mom: PeriodicBinning
    u: int = 1

    def __post_init__(self):
        d = self.pos.d
        if self.mom.d != d:
            raise ValidationError("position and momentum binnings need the same d")
        check_int(self.u, "u", minimum=1)
        if any((self.u * v) % d == 0 for v in range(1, d)):
            raise ValidationError(f"u = {self.u} violates coprimality with d = {d}")
        target = d * 2 * math.pi / self.u
        if abs(self.pos.T * self.mom.T - target) > 1e-12 * target:
            raise ValidationError(
                f"T_x * T_p = {self.pos.T * self.mom.T!r} differs from {target!r}"
            )

    @classmethod
    def from_period(cls, T_x, x_cen=0.0, p_cen=0.0, d=2, u=1):
        T_x = check_positive(T_x, "T_x")
        T_p = d * 2 * math.pi / u / T_x
        return cls(PeriodicBinning(T_x, d, x_cen), PeriodicBinning(T_p, d, p_cen), u)

    @property
    def T_x(self):
        return self.pos.T

    @property
    def T_p(self):
        return self.mom.T

    @property
    def d(self):
        return self.pos.d


@dataclass(frozen=True)
class SlitBinning:
    """Non-periodic contrast basis: d adjacent windows of width w starting at ``start``.

    Values outside all windows go to the last outcome.
    """

    width: float
    d: int = 2
    start: float = 0.0

    def index(self, v):
        v = np.asarray(v, dtype=float)
        n = np.floor((v - self.start) / self.width)
        return np.where((n >= 0) & (n < self.d - 1), n, self.d - 1).astype(int)


def bin_outcome(value, binning, plane="sample", magnification=1.0, y=None, p_abs=None):
    """Outcome label of a measured value.

    plane="sample": value is the sample-plane coordinate.
    plane="image":  value is a detector coordinate x' of an imaging lens, x = x'/A.
    plane="fourier": value is x' in the Fourier plane; with y' and |p| given,
        p = |p| (x'/A) / sqrt((x'/A)^2 + (y'/A)^2 + 1).
    """
    check_positive(magnification, "magnification")
    v = np.asarray(value, dtype=float)
    if plane == "sample":
        pass
    elif plane == "image":
        v = v / magnification
    elif plane == "fourier":
        if p_abs is None:
            raise ValidationError("fourier plane mapping needs p_abs")
        yy = 0.0 if y is None else np.asarray(y, dtype=float) / magnification
        xx = v / magnification
        v = p_abs * xx / np.sqrt(xx * xx + yy * yy + 1.0)
    else:
        raise ValidationError(f"unknown plane {plane!r}")
    if not np.all(np.isfinite(v)):
        raise ValidationError("bin_outcome needs finite values")
    out = binning.index(v)
    return int(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ResolutionProfile:
    """Gaussian PSF widths (FWHM) per particle and variable; 0 means ideal."""

    fwhm_x_e: float = 0.0
    fwhm_p_e: float = 0.0
    fwhm_x_g: float = 0.0
    fwhm_p_g: float = 0.0

    def __post_init__(self):
        for name in ("fwhm_x_e", "fwhm_p_e", "fwhm_x_g", "fwhm_p_g"):
            check_nonnegative(getattr(self, name), name)

    @classmethod
    def ideal(cls):
        return cls()

    @classmethod
    def experimental(cls):
        """Experimental column of the detector table: 0.1 um, 0.2 hbar/um, 1.2 um, 0.2 hbar/um."""
        return cls(0.1, 0.2, 1.2, 0.2)

    def sigma(self, particle, basis):
        key = {("e", POSITION): "fwhm_x_e", ("e", MOMENTUM): "fwhm_p_e",
               ("g", POSITION): "fwhm_x_g", ("g", MOMENTUM): "fwhm_p_g"}[(particle, basis)]
        return getattr(self, key) * FWHM_TO_SIGMA

    def to_dict(self):
        return {k: getattr(self, k) for k in ("fwhm_x_e", "fwhm_p_e", "fwhm_x_g", "fwhm_p_g")}


@dataclass(frozen=True, eq=False)
class JointDensity:
    """Joint density of (electron variable, photon variable).

    basis_e / basis_g are "position" or "momentum".  The fields used depend on
    ``kind`` (see the module docstring); sigma_e / sigma_g are accumulated
    Gaussian blur widths for the semi-analytic kinds.
    """

    kind: str
    basis_e: str
    basis_g: str
    k_axis: np.ndarray = None
    weight: np.ndarray = None
    s_axis: np.ndarray = None
    profile: np.ndarray = None
    x_max: float = None
    axis_e: np.ndarray = None
    axis_g: np.ndarray = None
    values: np.ndarray = None
    sigma_e: float = 0.0
    sigma_g: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("ridge", "mixed", "difference", "grid"):
            raise ValidationError(f"unknown density kind {self.kind!r}")
        for b in (self.basis_e, self.basis_g):
            if b not in (POSITION, MOMENTUM):
                raise ValidationError(f"unknown basis {b!r}")
        if self.kind == "grid":
            v = check_array(self.values, "values", ndim=2, nonnegative=True)
            if v.shape != (len(self.axis_e), len(self.axis_g)):
                raise ValidationError("values shape does not match the axes")

    @property
    def labels(self):
        e = "x_e" if self.basis_e == POSITION else "p_e"
        g = "x_g" if self.basis_g == POSITION else "p_g"
        return e, g

    def total_mass(self):
        if self.kind in ("ridge", "mixed"):
            return float(np.dot(trapezoid_weights(self.k_axis), self.weight))
        if self.kind == "difference":
            return float(np.dot(trapezoid_weights(self.s_axis), self.profile))
        he = self.axis_e[1] - self.axis_e[0]
        hg = self.axis_g[1] - self.axis_g[0]
        return float(self.values.sum() * he * hg)

    def materialize(self, axis_e=None, axis_g=None, step=None):
        """2-D grid version of the density (grid kind)."""
        if self.kind == "grid":
            return self
        if self.kind in ("ridge", "mixed"):
            K = float(self.k_axis[-1])
            step = step or float(self.k_axis[1] - self.k_axis[0])
        else:
            K = float(self.x_max)
            step = step or 4 * float(self.s_axis[1] - self.s_axis[0])
        if axis_e is None:
            pad = 6 * self.sigma_e if self.kind != "mixed" or self.basis_e == MOMENTUM else 0.0
            axis_e = _sym_axis(K + pad, step)
        if axis_g is None:
            pad = 6 * self.sigma_g if self.kind != "mixed" or self.basis_g == MOMENTUM else 0.0
            axis_g = _sym_axis(K + pad, step)
        axis_e = np.asarray(axis_e, float)
        axis_g = np.asarray(axis_g, float)
        if self.kind == "ridge":
            vals = _ridge_grid(self, axis_e, axis_g)
        elif self.kind == "mixed":
            vals = _mixed_grid(self, axis_e, axis_g)
        else:
            s = axis_e[:, None] - axis_g[None, :]
            p = np.interp(np.abs(s), self.s_axis[self.s_axis >= 0], _profile_of_s(self)[self.s_axis >= 0],
                          right=0.0)
            inside = (np.abs(axis_e)[:, None] <= self.x_max) & (np.abs(axis_g)[None, :] <= self.x_max)
            vals = p * inside if self.sigma_e == 0 and self.sigma_g == 0 else p
        he, hg = axis_e[1] - axis_e[0], axis_g[1] - axis_g[0]
        tot = vals.sum() * he * hg
        if not tot > 0:
            raise ValidationError("materialized grid carries no mass; widen the axes")
        return JointDensity("grid", self.basis_e, self.basis_g, axis_e=axis_e, axis_g=axis_g,
                            values=vals / tot, meta=dict(self.meta, materialized_from=self.kind))


def _sym_axis(half, step):
    n = int(math.ceil(half / step))
    return np.arange(-n, n + 1) * step


def _full_diagonal(kernel):
    k = kernel.k_axis
    g = kernel.diagonal()
    return np.concatenate([-k[:0:-1], k]), np.concatenate([g[:0:-1], g])


def _gauss(x, sigma):
    return np.exp(-0.5 * (x / sigma) ** 2) / (math.sqrt(2 * math.pi) * sigma)


def _ridge_grid(den, axis_e, axis_g):
    k, g = den.k_axis, den.weight
    w = trapezoid_weights(k) * g
    he, hg = axis_e[1] - axis_e[0], axis_g[1] - axis_g[0]
    if den.sigma_e > 0:
        Ne = _gauss(axis_e[:, None] + k[None, :], den.sigma_e)
    else:
        Ne = np.maximum(0.0, 1 - np.abs(axis_e[:, None] + k[None, :]) / he) / he
    if den.sigma_g > 0:
        Ng = _gauss(axis_g[:, None] - k[None, :], den.sigma_g)
    else:
        Ng = np.maximum(0.0, 1 - np.abs(axis_g[:, None] - k[None, :]) / hg) / hg
    return (Ne * w) @ Ng.T


def _mixed_grid(den, axis_e, axis_g):
    k, g = den.k_axis, den.weight
    if den.basis_e == MOMENTUM:
        mom_axis, sig, pos_axis = axis_e, den.sigma_e, axis_g
    else:
        mom_axis, sig, pos_axis = axis_g, den.sigma_g, axis_e
    if sig > 0:
        w = trapezoid_weights(k) * g
        m = _gauss(mom_axis[:, None] - k[None, :], sig) @ w
    else:
        m = np.interp(mom_axis, k, g, left=0.0, right=0.0)
    pos = (np.abs(pos_axis) <= den.x_max).astype(float) / (2 * den.x_max)
    return np.outer(m, pos) if den.basis_e == MOMENTUM else np.outer(pos, m)


def density_pp(kernel):
    """Momentum-momentum density: ridge on p_e = -hbar k_gamma with weight f(k, k)."""
    k, g = _full_diagonal(kernel)
    g = g / np.dot(trapezoid_weights(k), g)
    return JointDensity("ridge", MOMENTUM, MOMENTUM, k_axis=k, weight=g,
                        meta={"scenario_hash": kernel.scenario_hash})


def density_mixed(kernel, which, x_max):
    """Mixed-basis density; ``which`` is "xe-pg" or "pe-xg"."""
    check_positive(x_max, "x_max")
    if which not in ("xe-pg", "pe-xg"):
        raise ValidationError("which must be 'xe-pg' or 'pe-xg'")
    k, g = _full_diagonal(kernel)
    g = g / np.dot(trapezoid_weights(k), g)
    be, bg = (POSITION, MOMENTUM) if which == "xe-pg" else (MOMENTUM, POSITION)
    return JointDensity("mixed", be, bg, k_axis=k, weight=g, x_max=float(x_max),
                        meta={"scenario_hash": kernel.scenario_hash})


def hat_cosine_transform(k_axis, s):
    """C[s, i] = int phi_i(k) cos(k s) dk for the piecewise-linear hats on k_axis >= 0.

    The transform of the interpolant is exact, so the result has no grid
    aliasing at large s.
    """
    k = np.asarray(k_axis, float)
    s = np.asarray(s, float)
    h = k[1] - k[0]
    x = h * s[:, None]
    # np.sinc(t) = sin(pi t)/(pi t)
    sinc2 = np.sinc(x / (2 * np.pi)) ** 2
    C = h * sinc2 * np.cos(k[None, :] * s[:, None])
    C[:, 0] = 0.5 * h * sinc2[:, 0]
    K = k[-1]
    xs = x[:, 0]
    small = np.abs(xs) < 1e-4
    xx = np.where(small, 1.0, xs)
    odd = np.where(small, xs / 6.0, (xx - np.sin(xx)) / xx**2) * h
    C[:, -1] = 0.5 * h * sinc2[:, 0] * np.cos(K * s) + odd * np.sin(K * s)
    return C


def position_profile(kernel, s):
    """P(s) = (1/2 pi) int int f(k1, k2) exp(i (k1 - k2) s) dk1 dk2 over [-K, K]^2."""
    C = hat_cosine_transform(kernel.k_axis, s)
    return (2.0 / math.pi) * np.einsum("si,ij,sj->s", C, kernel.f, C, optimize=True)


def density_xx(kernel, x_max, ds=None, check=False):
    """Position-position density as a profile in s = x_e - x_gamma.

    ``profile`` holds (2 x_max - |s|) P(s), the mass of the box
    [-x_max, x_max]^2 per unit s; normalized to unit integral.  With
    ``check`` the joint probabilities at a reference period are compared with
    a run at 1.5 x_max.
    """
    check_positive(x_max, "x_max")
    ds = ds or 0.01
    n = int(math.ceil(2 * x_max / ds))
    s = np.arange(-n, n + 1) * (2 * x_max / n)
    half = position_profile(kernel, s[n:])
    P = np.concatenate([half[:0:-1], half])
    if np.any(P < -1e-9 * P.max()):
        raise ValidationError("position profile has negative values; the kernel is not positive")
    P = np.clip(P, 0.0, None)
    rho = np.clip(2 * x_max - np.abs(s), 0.0, None) * P
    rho = rho / np.dot(trapezoid_weights(s), rho)
    den = JointDensity("difference", POSITION, POSITION, s_axis=s, profile=rho, x_max=float(x_max),
                       meta={"scenario_hash": kernel.scenario_hash, "raw_profile": P})
    if check:
        from ._validation import ConvergenceError

        pair = MubPair.from_period(10.0)
        a = joint_probabilities(den, pair.pos, pair.pos).p
        b = joint_probabilities(density_xx(kernel, 1.5 * x_max, ds), pair.pos, pair.pos).p
        change = np.max(np.abs(a - b) / np.maximum(b, 1e-300))
        if change > 0.01:
            raise ConvergenceError(
                f"position-position probabilities change by {change:.2%} when x_max grows 50%"
            )
    return den


def _profile_of_s(den):
    """Per-unit-s density P(s) (undo the overlap weight) for materialization."""
    L = np.clip(2 * den.x_max - np.abs(den.s_axis), 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(L > 0, den.profile / L, 0.0)


def apply_psf(density, resolution):
    """Gaussian PSF blur with sigma = FWHM / sqrt(8 ln 2) per axis."""
    se = resolution.sigma("e", density.basis_e)
    sg = resolution.sigma("g", density.basis_g)
    if density.kind in ("ridge", "mixed"):
        K = float(density.k_axis[-1])
        if max(se, sg) > 2 * K:
            raise ValidationError("PSF wider than the momentum window")
        return replace(density, sigma_e=math.hypot(density.sigma_e, se),
                       sigma_g=math.hypot(density.sigma_g, sg))
    if density.kind == "difference":
        s = density.s_axis
        sig = math.hypot(se, sg)
        if sig > s[-1]:
            raise ValidationError("PSF wider than the position window")
        if sig == 0:
            return density
        h = s[1] - s[0]
        pad = int(math.ceil(6 * sig / h))
        s2 = np.concatenate([s[0] - h * np.arange(pad, 0, -1), s, s[-1] + h * np.arange(1, pad + 1)])
        prof = np.concatenate([np.zeros(pad), density.profile, np.zeros(pad)])
        out = gaussian_filter1d(prof, sig / h, mode="constant", truncate=6.0)
        out /= np.dot(trapezoid_weights(s2), out)
        return replace(density, s_axis=s2, profile=out,
                       sigma_e=math.hypot(density.sigma_e, se), sigma_g=math.hypot(density.sigma_g, sg))
    # generic grid
    vals = density.values
    he = density.axis_e[1] - density.axis_e[0]
    hg = density.axis_g[1] - density.axis_g[0]
    for sig, h, ax, axis in ((se, he, 0, density.axis_e), (sg, hg, 1, density.axis_g)):
        if sig > 0:
            if sig > axis[-1] - axis[0]:
                raise ValidationError("PSF wider than the grid window")
            vals = gaussian_filter1d(vals, sig / h, axis=ax, mode="constant", truncate=6.0)
    vals = vals / (vals.sum() * he * hg)
    return replace(density, values=vals, sigma_e=math.hypot(density.sigma_e, se),
                   sigma_g=math.hypot(density.sigma_g, sg))


@dataclass(frozen=True, eq=False)
class JointProbTable:
    basis_e: str
    basis_g: str
    p: np.ndarray
    T_e: float = None
    T_g: float = None
    stderr: np.ndarray = None

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValidationError("joint probability table must be d x d")
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise ValidationError("joint probabilities must lie in [0, 1]")
        if abs(p.sum() - 1) > 1e-9:
            raise ValidationError(f"joint probabilities sum to {p.sum()!r}")
        p = np.clip(p, 0.0, 1.0)
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def d(self):
        return self.p.shape[0]

    def to_dict(self):
        out = {"basis_e": self.basis_e, "basis_g": self.basis_g, "T_e": self.T_e, "T_g": self.T_g,
               "p": self.p.tolist()}
        if self.stderr is not None:
            out["stderr"] = np.asarray(self.stderr).tolist()
        return out


def _ridge_table(den, bin_e, bin_g):
    """int g(k) B_e(-k) B_g(k) dk on sub-intervals split at every bin edge."""
    k, g = den.k_axis, den.weight
    K = k[-1]
    d = bin_e.d
    step = k[1] - k[0]
    # blur much narrower than the grid acts as a sharp edge; edges are nodes already
    sigs = [s for s in (den.sigma_e, den.sigma_g) if s > 1e-3 * step]
    fine = min([step / 4, bin_g.delta / 64, bin_e.delta / 64] + [s / 8 for s in sigs])
    nodes = [k, np.arange(-K, K, fine)]
    for b, sign in ((bin_e, -1.0), (bin_g, 1.0)):
        j = np.arange(math.floor((-K - b.center) / b.delta) - 1, math.ceil((K - b.center) / b.delta) + 2)
        nodes.append(sign * (b.center + j * b.delta))
    x = np.unique(np.clip(np.concatenate(nodes), -K, K))
    gx = np.interp(x, k, g)
    mid = 0.5 * (x[1:] + x[:-1])
    seg = 0.5 * (gx[1:] + gx[:-1]) * np.diff(x)
    Be = np.stack([bin_e.bin_probability(-mid, a, den.sigma_e) for a in range(d)])
    Bg = np.stack([bin_g.bin_probability(mid, b, den.sigma_g) for b in range(d)])
    return (Be * seg) @ Bg.T


def _mixed_table(den, bin_e, bin_g):
    k, g = den.k_axis, den.weight
    if den.basis_e == MOMENTUM:
        bm, sig = bin_e, den.sigma_e
    else:
        bm, sig = bin_g, den.sigma_g
    d = bm.d
    K = k[-1]
    step = k[1] - k[0]
    fine = min([step / 4, bm.delta / 64] + ([sig / 8] if sig > 1e-3 * step else []))
    j = np.arange(math.floor((-K - bm.center) / bm.delta) - 1, math.ceil((K - bm.center) / bm.delta) + 2)
    x = np.unique(np.clip(np.concatenate([k, np.arange(-K, K, fine), bm.center + j * bm.delta]), -K, K))
    gx = np.interp(x, k, g)
    mid = 0.5 * (x[1:] + x[:-1])
    seg = 0.5 * (gx[1:] + gx[:-1]) * np.diff(x)
    m = np.array([np.dot(seg, bm.bin_probability(mid, b, sig)) for b in range(d)])
    # uniform position variable over a range much longer than T: 1/d per outcome
    pos = np.full(d, 1.0 / d)
    return np.outer(m, pos) if den.basis_e == MOMENTUM else np.outer(pos, m)


def overlap_kernel(s, bin_e, bin_g, a, b):
    """q_ab(s) = (1/T) |{t : t + s in outcome a of bin_e, t in outcome b of bin_g}| per period."""
    T, D = bin_e.T, bin_e.delta
    shift = np.asarray(s, float) - (bin_e.center - bin_g.center) - (a - b) * D
    r = np.mod(shift + D, T) - D  # representative in [-D, T - D)
    return (np.maximum(0.0, D - np.abs(r)) + np.maximum(0.0, D - np.abs(r - T))) / T


def _difference_table(den, bin_e, bin_g):
    if abs(bin_e.T - bin_g.T) > 1e-12 * bin_e.T:
        raise ValidationError("position binnings of both particles need the same period")
    s, rho = den.s_axis, den.profile
    w = trapezoid_weights(s) * rho
    d = bin_e.d
    P = np.empty((d, d))
    for a in range(d):
        for b in range(d):
            P[a, b] = np.dot(w, overlap_kernel(s, bin_e, bin_g, a, b))
    return P


def _grid_table(den, bin_e, bin_g):
    for b, ax in ((bin_e, den.axis_e), (bin_g, den.axis_g)):
        if b.delta / (ax[1] - ax[0]) < 8:
            warnings.warn("fewer than 8 grid points per bin width", PrecisionWarning, stacklevel=3)
    Oe = bin_e.cell_fractions(den.axis_e)
    Og = bin_g.cell_fractions(den.axis_g)
    return Oe.T @ den.values @ Og


def joint_probabilities(density, bin_e, bin_g):
    """d x d table of P(outcome a for the electron, outcome b for the photon)."""
    if bin_e.d != bin_g.d:
        raise ValidationError("binnings of both particles need the same d")
    fn = {"ridge": _ridge_table, "mixed": _mixed_table, "difference": _difference_table,
          "grid": _grid_table}[density.kind]
    P = fn(density, bin_e, bin_g)
    P = np.clip(P, 0.0, None)
    tot = P.sum()
    if not tot > 0:
        raise ValidationError("density has no mass inside the binning")
    return JointProbTable(density.basis_e, density.basis_g, P / tot, bin_e.T, bin_g.T)


def counts_to_probabilities(counts):
    """Normalize coincidence counts C_ab to P_ab = C_ab / sum C, with multinomial standard errors."""
    c = np.asarray(counts)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValidationError("counts must be a square d x d array")
    if np.any(c < 0) or not np.all(np.equal(np.mod(c, 1), 0)):
        raise ValidationError("counts must be non-negative integers")
    N = c.sum()
    if N <= 0:
        raise ValidationError("all counts are zero")
    p = c / N
    err = np.sqrt(p * (1 - p) / N)
    return JointProbTable("unknown", "unknown", p, stderr=err)


def grid_density(axis_e, axis_g, values, basis_e=MOMENTUM, basis_g=MOMENTUM):
    """Normalized grid density from raw non-negative values."""
    axis_e = check_uniform_axis(axis_e, "axis_e")
    axis_g = check_uniform_axis(axis_g, "axis_g")
    v = check_array(values, "values", ndim=2, nonnegative=True)
    tot = v.sum() * (axis_e[1] - axis_e[0]) * (axis_g[1] - axis_g[0])
    if not tot > 0:
        raise ValidationError("density has no mass")
    return JointDensity("grid", basis_e, basis_g, axis_e=axis_e, axis_g=axis_g, values=v / tot)


def measurement_tables(kernel, pair, resolution=None, x_max=None, xx_density=None):
    """The four tables (xx, pp, xp, px) for one MubPair.

    Momentum binning of the electron is the mirror of the photon's so that
    outcome labels of p_e = -hbar k_gamma coincide.
    """
    resolution = resolution or ResolutionProfile()
    if x_max is None:
        raise ValidationError("x_max is required")
    pos, mom = pair.pos, pair.mom
    mom_e = mom.mirror()
    xx = apply_psf(xx_density if xx_density is not None else density_xx(kernel, x_max), resolution)
    pp = apply_psf(density_pp(kernel), resolution)
    xp = apply_psf(density_mixed(kernel, "xe-pg", x_max), resolution)
    px = apply_psf(density_mixed(kernel, "pe-xg", x_max), resolution)
    return {
        "xx": joint_probabilities(xx, pos, pos),
        "pp": joint_probabilities(pp, mom_e, mom),
        "xp": joint_probabilities(xp, pos, mom),
        "px": joint_probabilities(px, mom_e, pos),
    }


__all__ = [
    "FOUR_PI",
    "JointDensity",
    "JointProbTable",
    "MubPair",
    "PeriodicBinning",
    "PrecisionWarning",
    "ResolutionProfile",
    "SlitBinning",
    "apply_psf",
    "bin_outcome",
    "counts_to_probabilities",
    "density_mixed",
    "density_pp",
    "density_xx",
    "grid_density",
    "joint_probabilities",
    "measurement_tables",
    "position_profile",
]
