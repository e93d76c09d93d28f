"""Reduced electron-photon momentum kernel and Cherenkov emission observables.

The kernel f(k1x, k2x) is the matrix element of the two-particle state
reduced to the x-components of the transverse momenta.  It is obtained by
integrating the product of two Cherenkov amplitudes over the photon wave
vectors (k_y, k'_z) that pass the energy filter and leave the sample.

For fixed (k1x, k2x) that region is an annular sector in the (k_y, k'_z)
plane, ky^2 + kz'^2 in [w_min^2 - min(kx)^2, w_max^2 - max(kx)^2], so the
quadrature runs in polar coordinates where the integrand is smooth.
"""
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate, special

from ._validation import (
    ConvergenceError,
    ValidationError,
    check_array,
    check_int,
    check_interval,
    check_nonnegative,
    check_positive,
    check_uniform_axis,
)
from .constants import ALPHA, HBAR_C, ME_C2

# kL window quoted with the 3.5-4.0 eV emission-profile panel; it differs
# from n * E * L_z / (hbar c) = (5.68, 6.49) for n = 1.6
QUOTED_KL_WINDOW = (6.2, 7.1)


@dataclass(frozen=True)
class GridSpec:
    """Quadrature resolutions.

    N_kx: points of the kernel axis on [0, k_x_max].
    n_inner: initial Simpson points per polar axis of the inner integral.
    n_inner_max: refinement cap for the inner integral.
    inner_rtol: agreement required between successive inner refinements.
    ds: step of the position-difference grid, um.
    """

    N_kx: int = 101
    n_inner: int = 17
    n_inner_max: int = 257
    inner_rtol: float = 5e-3
    ds: float = 0.01

    def __post_init__(self):
        check_int(self.N_kx, "N_kx", minimum=3)
        check_int(self.n_inner, "n_inner", minimum=3)
        check_int(self.n_inner_max, "n_inner_max", minimum=self.n_inner)
        if self.n_inner % 2 == 0:
            raise ValidationError("n_inner must be odd (Simpson rule)")
        check_positive(self.inner_rtol, "inner_rtol")
        check_positive(self.ds, "ds")


@dataclass(frozen=True)
class PhysicalScenario:
    """All physical and numerical parameters of one Cherenkov configuration.

    Units: L_z and x_max in um, E_kin and E_win in eV, wave numbers in rad/um.
    beta is derived from E_kin unless ``beta_override`` is given.
    ``k_x_max`` defaults to the vacuum wave number of the upper window edge,
    where the kernel diagonal vanishes.
    """

    L_z: float = 0.2
    n_refr: float = 1.6
    E_kin: float = 200.0e3
    dp_rel: float = 1e-6
    E_win: tuple = (3.5, 4.0)
    k_x_max: float = None
    k_y_min: float = 0.0
    k_y_max: float = math.inf
    x_max: float = 30.0
    beta_override: float = None
    grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        check_positive(self.L_z, "L_z")
        check_positive(self.n_refr, "n_refr")
        check_positive(self.E_kin, "E_kin")
        check_nonnegative(self.dp_rel, "dp_rel")
        lo, hi = check_interval(self.E_win, "E_win")
        if lo <= 0:
            raise ValidationError("E_win edges must be > 0")
        object.__setattr__(self, "E_win", (lo, hi))
        if self.k_x_max is None:
            object.__setattr__(self, "k_x_max", hi / HBAR_C)
        check_positive(self.k_x_max, "k_x_max")
        check_nonnegative(self.k_y_min, "k_y_min")
        if not self.k_y_max > self.k_y_min:
            raise ValidationError("k_y_max must exceed k_y_min")
        check_positive(self.x_max, "x_max")
        if self.beta_override is not None:
            b = check_positive(self.beta_override, "beta_override")
            if b > 1:
                raise ValidationError("beta_override must be <= 1")
        if isinstance(self.grid, dict):
            object.__setattr__(self, "grid", GridSpec(**self.grid))
        if self.n_refr <= 1:
            raise ValidationError("n_refr must exceed 1 (no total-internal-reflection angle)")
        if self.beta * self.n_refr <= 1:
            raise ValidationError(
                f"no Cherenkov emission: beta * n = {self.beta * self.n_refr:.6g} <= 1"
            )

    @property
    def E_i(self):
        return self.E_kin + ME_C2

    @property
    def beta(self):
        if self.beta_override is not None:
            return float(self.beta_override)
        return math.sqrt(1.0 - (ME_C2 / self.E_i) ** 2)

    @property
    def p_bar(self):
        """Mean longitudinal electron momentum in hbar/um, from E_kin."""
        return math.sqrt(self.E_i**2 - ME_C2**2) / HBAR_C

    @property
    def dp_z(self):
        return self.dp_rel * self.p_bar

    @property
    def w_min(self):
        return self.E_win[0] / HBAR_C

    @property
    def w_max(self):
        return self.E_win[1] / HBAR_C

    def to_dict(self):
        d = asdict(self)
        d["E_win"] = list(self.E_win)
        if math.isinf(d["k_y_max"]):
            d["k_y_max"] = "inf"
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "grid" in d and isinstance(d["grid"], dict):
            d["grid"] = GridSpec(**d["grid"])
        if d.get("k_y_max") in ("inf", "Infinity", None):
            d["k_y_max"] = math.inf
        if "E_win" in d:
            d["E_win"] = tuple(float(v) for v in d["E_win"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**d)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def reference_scenario(**changes):
    """L_z = 200 nm, n = 1.6, 200 keV electrons at beta = 0.7, 3.5-4.0 eV filter."""
    params = dict(beta_override=0.7)
    params.update(changes)
    return PhysicalScenario(**params)


def cherenkov_angles(beta, n_refr):
    """(theta_CR, theta_crit) in rad for velocity ratio beta and index n."""
    if n_refr <= 1:
        raise ValidationError("n_refr must exceed 1")
    if beta * n_refr <= 1:
        raise ValidationError("Cherenkov condition beta * n > 1 violated")
    return math.acos(1.0 / (beta * n_refr)), math.asin(1.0 / n_refr)


def characteristic_angles(scenario):
    return cherenkov_angles(scenario.beta, scenario.n_refr)


def cherenkov_amplitude(k, scenario):
    """Low-energy Cherenkov amplitude A(k) for inside wave vectors k[..., 3]."""
    k = np.asarray(k, dtype=float)
    kx, ky, kz = k[..., 0], k[..., 1], k[..., 2]
    kperp = np.hypot(kx, ky)
    kmag = np.sqrt(kperp**2 + kz**2)
    if np.any(kmag == 0):
        raise ValidationError("cherenkov_amplitude needs k != 0")
    pref = math.sqrt(ALPHA / (2 * math.pi**2 * scenario.n_refr))
    arg = 0.5 * scenario.L_z * (kz - kmag / (scenario.beta * scenario.n_refr))
    return pref * kperp / kmag**1.5 * scenario.L_z * np.sinc(arg / np.pi)


def _cos_transmitted(theta, n_refr):
    s = n_refr * np.sin(theta)
    return np.sqrt(np.clip(1.0 - s * s, 0.0, None)), s <= 1.0


def fresnel_tau_parallel(theta, n_refr):
    """Amplitude transmission for p-polarised light leaving the dielectric."""
    theta = np.asarray(theta, dtype=float)
    c = np.cos(theta)
    ct, ok = _cos_transmitted(theta, n_refr)
    out = np.where(ok, 2 * n_refr * c / (c + n_refr * ct), 0.0)
    return out if out.ndim else float(out)


def fresnel_power_parallel(theta, n_refr):
    """Power transmission 4 n cos(t) cos(t_t) / (cos(t) + n cos(t_t))^2."""
    theta = np.asarray(theta, dtype=float)
    c = np.cos(theta)
    ct, ok = _cos_transmitted(theta, n_refr)
    out = np.where(ok, 4 * n_refr * c * ct / (c + n_refr * ct) ** 2, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class IntegrationRegion:
    """Photon (k_y, k'_z) region for one kernel element.

    k_y in [ky_lo, ky_hi]; for each k_y, k'_z in kz_bounds(k_y).
    Equivalently ky^2 + kz'^2 in [rho_lo^2, rho_hi^2] with kz' >= 0.
    """

    ky_lo: float
    ky_hi: float
    rho_lo: float
    rho_hi: float
    empty: bool

    def kz_bounds(self, ky):
        ky = np.asarray(ky, dtype=float)
        lo = np.sqrt(np.clip(self.rho_lo**2 - ky**2, 0.0, None))
        hi = np.sqrt(np.clip(self.rho_hi**2 - ky**2, 0.0, None))
        return lo, hi

    def contains(self, ky, kz):
        ky = np.asarray(ky, dtype=float)
        kz = np.asarray(kz, dtype=float)
        if self.empty:
            return np.zeros(np.broadcast(ky, kz).shape, dtype=bool)
        lo, hi = self.kz_bounds(ky)
        return (ky >= self.ky_lo) & (ky <= self.ky_hi) & (kz >= lo) & (kz <= hi)


EMPTY_REGION = IntegrationRegion(0.0, 0.0, 0.0, 0.0, True)


def integration_region(k1x, k2x, scenario):
    a, b = abs(float(k1x)), abs(float(k2x))
    if max(a, b) > scenario.k_x_max * (1 + 1e-12):
        raise ValidationError("|k_x| exceeds k_x_max")
    m, M = min(a, b), max(a, b)
    top2 = scenario.w_max**2 - M**2
    if top2 <= 0:
        return EMPTY_REGION
    rho_hi = math.sqrt(top2)
    rho_lo = math.sqrt(max(scenario.w_min**2 - m**2, 0.0))
    ky_lo = scenario.k_y_min
    ky_hi = min(rho_hi, scenario.k_y_max)
    if rho_hi <= rho_lo or ky_hi <= ky_lo:
        return EMPTY_REGION
    return IntegrationRegion(ky_lo, ky_hi, rho_lo, rho_hi, False)


def kernel_integrand(k1x, k2x, ky, kzp, scenario):
    """Unnormalized integrand A(k1) A(k2) tau(k1) tau(k2) G(k1, k2), broadcasting."""
    n = scenario.n_refr
    kzp = np.asarray(kzp, dtype=float)
    ky = np.asarray(ky, dtype=float)
    out = np.ones(np.broadcast(k1x, k2x, ky, kzp).shape)
    kzs, kms = [], []
    for kx in (k1x, k2x):
        kz = np.sqrt((n * n - 1) * (kx * kx + ky * ky) + n * n * kzp * kzp)
        kmag = np.sqrt(kx * kx + ky * ky + kz * kz)
        kvec = np.stack(np.broadcast_arrays(kx, ky, kz), axis=-1)
        # inside wave number over n is the vacuum wave number of the photon
        k_out = kmag / n
        eta = (k_out >= scenario.w_min * (1 - 1e-12)) & (k_out <= scenario.w_max * (1 + 1e-12))
        theta = np.arccos(np.clip(kz / kmag, -1.0, 1.0))
        out = out * cherenkov_amplitude(kvec, scenario) * fresnel_tau_parallel(theta, n) * eta
        kzs.append(kz)
        kms.append(kmag)
    width2 = 8 * scenario.beta**2 * n**2 * scenario.dp_z**2
    if width2 > 0:
        gauss = np.exp(-((kms[0] - kms[1]) ** 2) / width2)
    else:
        gauss = (kms[0] == kms[1]).astype(float)
    return out * n**4 * kzp * kzp / (kzs[0] * kzs[1]) * gauss


def _simpson_weights(n):
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / (3.0 * (n - 1))


def _polar_batch(a, b, rho_lo, rho_hi, scenario, n):
    """Polar Simpson estimate for arrays of element pairs at n points per axis."""
    u = np.linspace(0.0, 1.0, n)
    w = _simpson_weights(n)
    rho = rho_lo[:, None] + (rho_hi - rho_lo)[:, None] * u[None, :]
    # angular range from the k_y limits, measured from the k_y axis
    with np.errstate(divide="ignore", invalid="ignore"):
        c_hi = np.where(rho > 0, np.minimum(scenario.k_y_max / rho, 1.0), 1.0)
        c_lo = np.where(rho > 0, np.minimum(scenario.k_y_min / rho, 1.0), 1.0)
    phi_a = np.arccos(c_hi)
    phi_b = np.arccos(c_lo)
    phi = phi_a[:, :, None] + (phi_b - phi_a)[:, :, None] * u[None, None, :]
    ky = rho[:, :, None] * np.cos(phi)
    kzp = rho[:, :, None] * np.sin(phi)
    f = kernel_integrand(a[:, None, None], b[:, None, None], ky, kzp, scenario)
    inner = np.einsum("prq,q->pr", f, w) * (phi_b - phi_a) * rho
    return np.einsum("pr,r->p", inner, w) * (rho_hi - rho_lo)


def _elements(a, b, scenario, rtol=None, atol=None):
    """Adaptive polar Simpson over arrays of (k1x, k2x) pairs."""
    g = scenario.grid
    rtol = g.inner_rtol if rtol is None else rtol
    a = np.abs(np.asarray(a, dtype=float))
    b = np.abs(np.asarray(b, dtype=float))
    m, M = np.minimum(a, b), np.maximum(a, b)
    top2 = scenario.w_max**2 - M**2
    rho_hi = np.sqrt(np.clip(top2, 0.0, None))
    rho_lo = np.sqrt(np.clip(scenario.w_min**2 - m**2, 0.0, None))
    live = (top2 > 0) & (rho_hi > rho_lo) & (np.minimum(rho_hi, scenario.k_y_max) > scenario.k_y_min)
    out = np.zeros(a.shape)
    idx = np.flatnonzero(live)
    if idx.size == 0:
        return out
    n = g.n_inner
    prev = _polar_batch(a[idx], b[idx], rho_lo[idx], rho_hi[idx], scenario, n)
    while True:
        n2 = 2 * n - 1
        if n2 > g.n_inner_max:
            raise ConvergenceError(
                f"kernel quadrature did not reach rtol={rtol} with {g.n_inner_max} points "
                f"for {idx.size} element(s)"
            )
        cur = _polar_batch(a[idx], b[idx], rho_lo[idx], rho_hi[idx], scenario, n2)
        scale = np.max(np.abs(cur)) if atol is None else 0.0
        tol = rtol * np.abs(cur) + (atol if atol is not None else rtol * 1e-4 * scale)
        done = np.abs(cur - prev) <= tol
        out[idx[done]] = cur[done]
        idx, prev, n = idx[~done], cur[~done], n2
        if idx.size == 0:
            return out


def kernel_element(k1x, k2x, scenario, rtol=None):
    """Unnormalized f(k1x, k2x); 0 when the photon region is empty."""
    integration_region(k1x, k2x, scenario)  # validates the range
    return float(_elements(np.array([k1x]), np.array([k2x]), scenario, rtol=rtol, atol=0.0)[0])


def trapezoid_weights(axis):
    axis = np.asarray(axis, dtype=float)
    w = np.empty_like(axis)
    d = np.diff(axis)
    w[0], w[-1] = d[0] / 2, d[-1] / 2
    w[1:-1] = (d[:-1] + d[1:]) / 2
    return w


@dataclass(frozen=True, eq=False)
class MomentumKernel:
    """Normalized kernel on the quadrant [0, k_x_max]^2.

    The full kernel on [-k_x_max, k_x_max]^2 is f(|k1|, |k2|); ``full`` and
    ``__call__`` expose it.  Normalization: 2 * int_0^K f(k, k) dk = 1.
    """

    k_axis: np.ndarray
    f: np.ndarray
    norm: float = 1.0
    scenario_hash: str = ""

    def __post_init__(self):
        k = check_uniform_axis(self.k_axis, "k_axis")
        if abs(k[0]) > 1e-12:
            raise ValidationError("k_axis must start at 0")
        f = check_array(self.f, "f", ndim=2)
        if f.shape != (k.size, k.size):
            raise ValidationError("kernel matrix shape does not match k_axis")
        if not np.allclose(f, f.T, rtol=1e-12, atol=1e-14 * np.abs(f).max()):
            raise ValidationError("kernel matrix must be symmetric")
        if np.any(np.diag(f) < 0):
            raise ValidationError("kernel diagonal must be non-negative")
        k.setflags(write=False)
        f = 0.5 * (f + f.T)
        f.setflags(write=False)
        object.__setattr__(self, "k_axis", k)
        object.__setattr__(self, "f", f)

    @property
    def k_max(self):
        return float(self.k_axis[-1])

    @property
    def step(self):
        return float(self.k_axis[1] - self.k_axis[0])

    @property
    def weights(self):
        return trapezoid_weights(self.k_axis)

    def diagonal(self):
        return np.diag(self.f).copy()

    def trace(self):
        return 2.0 * float(np.dot(self.weights, np.diag(self.f)))

    def normalized(self):
        t = self.trace()
        if not t > 0 or not math.isfinite(t):
            raise ValidationError(f"kernel trace must be positive and finite, got {t}")
        return MomentumKernel(self.k_axis, self.f / t, self.norm * t, self.scenario_hash)

    def full(self):
        """(axis on [-K, K], mirrored matrix)."""
        ax = np.concatenate([-self.k_axis[:0:-1], self.k_axis])
        idx = np.concatenate([np.arange(self.k_axis.size - 1, 0, -1), np.arange(self.k_axis.size)])
        return ax, self.f[np.ix_(idx, idx)]

    def __call__(self, k1, k2):
        """Bilinear interpolation of f(|k1|, |k2|); 0 outside the cutoff."""
        k1 = np.abs(np.asarray(k1, dtype=float))
        k2 = np.abs(np.asarray(k2, dtype=float))
        h = self.step
        n = self.k_axis.size
        inside = (k1 <= self.k_max) & (k2 <= self.k_max)
        t1 = np.clip(k1 / h, 0, n - 1)
        t2 = np.clip(k2 / h, 0, n - 1)
        i1 = np.minimum(t1.astype(int), n - 2)
        i2 = np.minimum(t2.astype(int), n - 2)
        u, v = t1 - i1, t2 - i2
        f = self.f
        val = (
            f[i1, i2] * (1 - u) * (1 - v)
            + f[i1 + 1, i2] * u * (1 - v)
            + f[i1, i2 + 1] * (1 - u) * v
            + f[i1 + 1, i2 + 1] * u * v
        )
        return np.where(inside, val, 0.0)


def build_kernel(scenario, block=400):
    """Evaluate the kernel on the grid and normalize it to unit trace."""
    n = scenario.grid.N_kx
    axis = np.linspace(0.0, scenario.k_x_max, n)
    iu, ju = np.triu_indices(n)
    vals = np.empty(iu.size)
    # one absolute floor for every element: a fraction of the largest diagonal value
    diag = _elements(axis, axis, scenario)
    atol = scenario.grid.inner_rtol * 1e-4 * float(np.max(np.abs(diag)) or 1.0)
    for s in range(0, iu.size, block):
        sl = slice(s, s + block)
        vals[sl] = _elements(axis[iu[sl]], axis[ju[sl]], scenario, atol=atol)
    f = np.zeros((n, n))
    f[iu, ju] = vals
    f[ju, iu] = vals
    raw = MomentumKernel(axis, f, 1.0, scenario.digest())
    norm = raw.trace()
    if not norm > 0 or not math.isfinite(norm):
        raise ValidationError(f"kernel normalization must be positive and finite, got {norm}")
    return MomentumKernel(axis, f / norm, norm, scenario.digest())


def band_mass_fraction(kernel, width):
    """Share of the kernel l1-mass with |k1x - k2x| <= width on the quadrant."""
    k = kernel.k_axis
    w = kernel.weights
    mass = np.abs(kernel.f) * np.outer(w, w)
    band = np.abs(k[:, None] - k[None, :]) <= width + 1e-12
    return float(mass[band].sum() / mass.sum())


def _cin(x):
    """Cin(x) = int_0^x (1 - cos t)/t dt = gamma + ln x - Ci(x)."""
    x = np.abs(np.asarray(x, dtype=float))
    small = x < 1e-3
    with np.errstate(divide="ignore"):
        big = np.euler_gamma + np.log(np.where(small, 1.0, x)) - special.sici(np.where(small, 1.0, x))[1]
    series = x * x / 4 - x**4 / 96
    return np.where(small, series, big)


@dataclass(frozen=True, eq=False)
class AngularProfile:
    """Emission profile per unit solid angle inside and outside the sample.

    p_out_total integrates the transmitted profile over the polar angle,
    int sin(t) dP_out/dOmega dt, i.e. per unit azimuth; p_out_solid_angle
    carries the additional 2 pi of the azimuthal integral.
    """

    theta_axis: np.ndarray
    inside: np.ndarray
    outside: np.ndarray
    p_out_total: float
    p_out_solid_angle: float
    kl_window: tuple
    theta_CR: float
    theta_crit: float


def emission_density(theta, scenario, kl_window=None):
    """dP/dOmega inside the dielectric, closed form in the cosine integral."""
    n = scenario.n_refr
    if kl_window is None:
        kl_window = (n * scenario.w_min * scenario.L_z, n * scenario.w_max * scenario.L_z)
    a_lo, a_hi = kl_window
    theta = np.asarray(theta, dtype=float)
    u = np.cos(theta) - 1.0 / (scenario.beta * n)
    small = np.abs(u) * a_hi < 1e-3
    us = np.where(small, 1.0, u)
    bracket = (_cin(a_hi * us) - _cin(a_lo * us)) / us**2
    # series of the same bracket for |kL u| < 1e-3
    limit = (a_hi**2 - a_lo**2) / 4 - u * u * (a_hi**4 - a_lo**4) / 96
    bracket = np.where(small, limit, bracket)
    return ALPHA / (math.pi**2 * n) * np.sin(theta) ** 2 * bracket


def emission_profile(scenario, theta=None, kl_window=None):
    """Angular emission profile, transmitted profile and integrated P_out.

    ``kl_window`` overrides (k_min L_z, k_max L_z); by default k = n E / (hbar c).
    """
    n = scenario.n_refr
    if kl_window is None:
        kl_window = (n * scenario.w_min * scenario.L_z, n * scenario.w_max * scenario.L_z)
    kl_window = tuple(float(v) for v in kl_window)
    if not 0 <= kl_window[0] < kl_window[1]:
        raise ValidationError("kl_window must satisfy 0 <= lo < hi")
    t_cr, t_crit = characteristic_angles(scenario)
    if theta is None:
        theta = np.linspace(0.0, math.pi / 2, 2001)
    theta = check_array(theta, "theta", ndim=1)
    inside = emission_density(theta, scenario, kl_window)
    outside = inside * fresnel_power_parallel(theta, n)

    def integrand(t):
        return math.sin(t) * float(emission_density(t, scenario, kl_window)) * float(
            fresnel_power_parallel(t, n)
        )

    pts = [t_cr] if t_cr < t_crit else None
    total, _ = integrate.quad(integrand, 0.0, t_crit, points=pts, limit=400, epsabs=0, epsrel=1e-10)
    return AngularProfile(
        theta_axis=theta,
        inside=inside,
        outside=outside,
        p_out_total=total,
        p_out_solid_angle=2 * math.pi * total,
        kl_window=kl_window,
        theta_CR=t_cr,
        theta_crit=t_crit,
    )
