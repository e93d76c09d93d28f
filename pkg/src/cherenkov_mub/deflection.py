"""Deflection angles of electron and photon and their joint distribution.

Momentum conservation k_x = -p_x / hbar links the photon emission angle to
the electron deflection; a finite photon-energy window smears the link into
a band.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from ._validation import ValidationError, check_nonnegative, check_positive
from .constants import HBAR_C, ME_C2


@dataclass(frozen=True)
class KinematicContext:
    E_i: float
    beta: float
    E_window: tuple

    def __post_init__(self):
        check_positive(self.E_i, "E_i")
        if not 0 < self.beta < 1:
            raise ValidationError("beta must lie in (0, 1)")
        lo, hi = (float(v) for v in self.E_window)
        check_positive(lo, "E_window[0]")
        check_nonnegative(hi - lo, "window width")
        object.__setattr__(self, "E_window", (lo, hi))

    @classmethod
    def from_scenario(cls, scenario):
        return cls(scenario.E_i, scenario.beta, scenario.E_win)

    @classmethod
    def from_kinetic(cls, E_kin, beta, E_window):
        return cls(E_kin + ME_C2, beta, E_window)

    @property
    def delta_E(self):
        return self.E_window[1] - self.E_window[0]


def electron_angle_from_photon(phi_gamma, E_gamma, ctx):
    """phi_e = -arctan(E tan(phi_gamma) / (beta^2 E_i - E))."""
    phi_gamma = np.asarray(phi_gamma, float)
    if np.any(np.abs(phi_gamma) >= math.pi / 2):
        raise ValidationError("|phi_gamma| must be below pi/2")
    b2E = ctx.beta**2 * ctx.E_i
    E = np.asarray(E_gamma, float)
    if np.any(b2E == E):
        raise ValidationError("beta^2 E_i equals E_gamma")
    out = -np.arctan(E * np.tan(phi_gamma) / (b2E - E))
    return float(out) if out.ndim == 0 else out


def photon_energy_from_angles(phi_e, phi_gamma, ctx):
    """Photon energy consistent with both angles: beta^2 E_i tan(phi_e) / (tan(phi_e) - tan(phi_gamma))."""
    te, tg = np.tan(phi_e), np.tan(phi_gamma)
    with np.errstate(divide="ignore", invalid="ignore"):
        return ctx.beta**2 * ctx.E_i * te / (te - tg)


def joint_angle_density(phi_e, phi_gamma, ctx):
    """Density of phi_e given phi_gamma for photon energies uniform in the window.

    Non-zero only where tan(phi_e) tan(phi_gamma) < 0 and the consistent
    energy lies in the window, where it equals |dE/dphi_e| / Delta E.
    With a zero-width window the result is a delta ridge, returned as inf on
    the ridge and 0 elsewhere.
    """
    phi_e, phi_gamma = np.broadcast_arrays(np.asarray(phi_e, float), np.asarray(phi_gamma, float))
    b2E = ctx.beta**2 * ctx.E_i
    lo, hi = ctx.E_window
    if ctx.delta_E == 0:
        ridge = electron_angle_from_photon(phi_gamma, lo, ctx)
        on = np.isclose(phi_e, ridge, rtol=1e-12, atol=1e-18)
        return np.where(on, np.inf, 0.0)
    te, tg = np.tan(phi_e), np.tan(phi_gamma)
    E = photon_energy_from_angles(phi_e, phi_gamma, ctx)
    ok = (te * tg < 0) & (E >= lo) & (E <= hi)
    sec2 = 1.0 / np.cos(phi_gamma) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.abs((b2E**2 - 2 * b2E * E + sec2 * E**2) / (tg * b2E * ctx.delta_E))
    return np.where(ok, val, 0.0)


def angle_grid_density(phi_gamma_axis, phi_e_axis, ctx, normalize=True):
    """Joint density on a (phi_gamma, phi_e) grid; normalized over the support if asked."""
    G, E = np.meshgrid(np.asarray(phi_gamma_axis, float), np.asarray(phi_e_axis, float), indexing="ij")
    vals = joint_angle_density(E, G, ctx)
    if normalize:
        hg = phi_gamma_axis[1] - phi_gamma_axis[0]
        he = phi_e_axis[1] - phi_e_axis[0]
        tot = trapezoid(trapezoid(vals, dx=he, axis=1), dx=hg)
        if not tot > 0:
            raise ValidationError("density has no support on the grid")
        vals = vals / tot
    return vals


def transverse_k_from_angles(phi_x, phi_y, E_gamma):
    """(k_x, k_y) in rad/um for detector angles and photon energy in eV."""
    phi_x = np.asarray(phi_x, float)
    phi_y = np.asarray(phi_y, float)
    if np.any(np.abs(phi_x) >= math.pi / 2) or np.any(np.abs(phi_y) >= math.pi / 2):
        raise ValidationError("angles must be below pi/2 in magnitude")
    k = np.asarray(E_gamma, float) / HBAR_C
    sx, sy = np.sin(phi_x), np.sin(phi_y)
    den = 1.0 - sx * sx * sy * sy
    kx = k * sx * np.sqrt(np.cos(phi_y) ** 2 / den)
    ky = k * sy * np.sqrt(np.cos(phi_x) ** 2 / den)
    return kx, ky


def angles_from_transverse_k(k_x, k_y, E_gamma):
    """Inverse map: tan(phi_x) = k_x / k_z and tan(phi_y) = k_y / k_z."""
    k = np.asarray(E_gamma, float) / HBAR_C
    kz2 = k * k - np.asarray(k_x, float) ** 2 - np.asarray(k_y, float) ** 2
    if np.any(kz2 <= 0):
        raise ValidationError("transverse wave vector exceeds the photon wave number")
    kz = np.sqrt(kz2)
    return np.arctan2(k_x, kz), np.arctan2(k_y, kz)
