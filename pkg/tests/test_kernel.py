import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import simpson

from cherenkov_mub._validation import ConvergenceError, ValidationError
from cherenkov_mub.constants import ALPHA, HBAR_C
from cherenkov_mub.kernel import (
    EMPTY_REGION,
    QUOTED_KL_WINDOW,
    GridSpec,
    MomentumKernel,
    PhysicalScenario,
    band_mass_fraction,
    build_kernel,
    characteristic_angles,
    cherenkov_amplitude,
    cherenkov_angles,
    emission_profile,
    fresnel_power_parallel,
    fresnel_tau_parallel,
    integration_region,
    kernel_element,
    reference_scenario,
)
from cherenkov_mub.pipeline import diagonal_centroid


def test_angles_reference(scenario):
    cr, crit = characteristic_angles(scenario)
    assert math.degrees(cr) == pytest.approx(26.77, abs=0.05)
    assert math.degrees(crit) == pytest.approx(38.7, abs=0.05)


def test_angles_symmetric_closed_form():
    cr, crit = cherenkov_angles(1.0, math.sqrt(2.0))
    assert math.degrees(cr) == pytest.approx(45.0, abs=1e-9)
    assert math.degrees(crit) == pytest.approx(45.0, abs=1e-9)


def test_angles_threshold_limit():
    n = 1.6
    assert cherenkov_angles((1 + 1e-10) / n, n)[0] < 1e-4


def test_angles_reject_no_emission():
    with pytest.raises(ValidationError):
        cherenkov_angles(0.5, 1.6)
    with pytest.raises(ValidationError):
        cherenkov_angles(0.9, 1.0)
    with pytest.raises(ValidationError):
        reference_scenario(beta_override=0.6)


def test_beta_from_energy():
    sc = PhysicalScenario()
    assert sc.beta == pytest.approx(math.sqrt(1 - (511e3 / 711e3) ** 2))
    assert reference_scenario().beta == 0.7


def test_scenario_validation():
    with pytest.raises(ValidationError):
        reference_scenario(E_win=(4.0, 3.5))
    with pytest.raises(ValidationError):
        reference_scenario(L_z=0.0)
    with pytest.raises(ValidationError):
        reference_scenario(x_max=-1.0)


def test_scenario_roundtrip():
    sc = reference_scenario(k_y_max=15.0)
    again = PhysicalScenario.from_dict(sc.to_dict())
    assert again == sc
    assert again.digest() == sc.digest()
    assert reference_scenario().digest() != sc.digest()


def test_amplitude_on_cone(scenario):
    k = 30.0
    kz = k / (scenario.beta * scenario.n_refr)
    kx = math.sqrt(k * k - kz * kz)
    val = cherenkov_amplitude([kx, 0.0, kz], scenario)
    expect = math.sqrt(ALPHA / (2 * math.pi**2 * scenario.n_refr)) * kx / k**1.5 * scenario.L_z
    assert val == pytest.approx(expect, rel=1e-13)


def test_amplitude_zero_perp(scenario):
    assert cherenkov_amplitude([0.0, 0.0, 12.0], scenario) == 0.0


def test_amplitude_high_precision_reference(scenario):
    mpmath.mp.dps = 50
    kx, ky, kz = mpmath.mpf(5), mpmath.mpf(5), mpmath.mpf(30)
    n = mpmath.mpf("1.6")
    beta = mpmath.mpf("0.7")
    L = mpmath.mpf("0.2")
    alpha = 1 / mpmath.mpf("137.035999")
    k = mpmath.sqrt(kx**2 + ky**2 + kz**2)
    arg = L / 2 * (kz - k / (beta * n))
    ref = mpmath.sqrt(alpha / (2 * mpmath.pi**2 * n)) * mpmath.sqrt(kx**2 + ky**2) / k**1.5 * L * mpmath.sin(arg) / arg
    got = cherenkov_amplitude(np.array([5.0, 5.0, 30.0]), scenario)
    assert got == pytest.approx(float(ref), rel=1e-13)
    # frozen value of the same expression
    assert got == pytest.approx(1.2434206172296e-04, rel=1e-11)


def test_fresnel_normal_incidence():
    assert fresnel_tau_parallel(0.0, 1.6) == pytest.approx(2 * 1.6 / 2.6, abs=1e-12)
    assert fresnel_tau_parallel(0.0, 1.6) == pytest.approx(1.2308, abs=1e-4)
    assert fresnel_power_parallel(0.0, 1.6) == pytest.approx(0.9467, abs=1e-4)


def test_fresnel_critical_and_beyond():
    crit = math.asin(1 / 1.6)
    assert fresnel_power_parallel(crit, 1.6) == pytest.approx(0.0, abs=1e-6)
    assert fresnel_tau_parallel(crit + 1e-6, 1.6) == 0.0
    assert fresnel_power_parallel(crit + 1e-6, 1.6) == 0.0


@given(st.floats(0.0, math.asin(1 / 1.6)))
def test_fresnel_power_bounds(theta):
    t = fresnel_power_parallel(theta, 1.6)
    assert 0.0 <= t <= 1.0 + 1e-12


def test_region_axis_cap(scenario):
    r = integration_region(0.0, 0.0, scenario)
    assert r.ky_hi == pytest.approx(4.0 / 0.197327, rel=1e-5)
    assert r.ky_hi == pytest.approx(20.27, abs=0.01)


def test_region_empty_at_cutoff(scenario):
    assert integration_region(scenario.w_max, 1.0, scenario) is EMPTY_REGION
    assert kernel_element(scenario.w_max, 1.0, scenario) == 0.0


def test_region_rejects_out_of_range(scenario):
    with pytest.raises(ValidationError):
        integration_region(scenario.k_x_max * 1.1, 0.0, scenario)


def test_region_membership_monte_carlo(scenario):
    rng = np.random.default_rng(7)
    for _ in range(20):
        a, b = rng.uniform(-scenario.k_x_max, scenario.k_x_max, 2)
        region = integration_region(a, b, scenario)
        ky = rng.uniform(0, 21, 20000)
        kz = rng.uniform(0, 21, 20000)
        # raw filter: both photons' vacuum wave numbers inside the window
        raw = np.ones_like(ky, dtype=bool)
        for kx in (a, b):
            q = kx * kx + ky * ky + kz * kz
            raw &= (q >= scenario.w_min**2) & (q <= scenario.w_max**2)
        raw &= (ky >= scenario.k_y_min) & (ky <= scenario.k_y_max)
        got = region.contains(ky, kz)
        assert np.array_equal(got, raw)


def _oracle_element(a, b, sc, n=257):
    """Cartesian nested Simpson over (k_y, k'_z) with the per-k_y limits."""
    n_r = sc.n_refr
    m, M = min(abs(a), abs(b)), max(abs(a), abs(b))
    ky_hi = math.sqrt(sc.w_max**2 - M**2)
    ky = np.linspace(0.0, ky_hi, n)
    inner = np.empty(n)
    for i, y in enumerate(ky):
        lo = math.sqrt(max(sc.w_min**2 - m**2 - y * y, 0.0))
        hi = math.sqrt(max(sc.w_max**2 - M**2 - y * y, 0.0))
        z = np.linspace(lo, hi, n)
        val = np.ones(n)
        kzs, kms = [], []
        for kx in (a, b):
            kzj = np.sqrt((n_r**2 - 1) * (kx * kx + y * y) + n_r**2 * z * z)
            kk = np.sqrt(kx * kx + y * y + kzj**2)
            kp = math.hypot(kx, y)
            arg = sc.L_z / 2 * (kzj - kk / (sc.beta * n_r))
            amp = math.sqrt(ALPHA / (2 * math.pi**2 * n_r)) * kp / kk**1.5 * sc.L_z * np.sinc(arg / np.pi)
            c = kzj / kk
            ct = np.sqrt(np.clip(1 - n_r**2 * (1 - c * c), 0, None))
            tau = 2 * n_r * c / (c + n_r * ct)
            val = val * amp * tau
            kzs.append(kzj)
            kms.append(kk)
        g = n_r**4 * z * z / (kzs[0] * kzs[1]) * np.exp(-((kms[0] - kms[1]) ** 2) / (8 * sc.beta**2 * n_r**2 * sc.dp_z**2))
        inner[i] = simpson(val * g, x=z) if hi > lo else 0.0
    return simpson(inner, x=ky)


@pytest.mark.parametrize("a,b", [(0.0, 0.0), (5.0, 6.0), (10.0, 10.0), (15.0, 13.0), (3.0, 18.0), (19.5, 19.0)])
def test_element_matches_cartesian_oracle(scenario, a, b):
    got = kernel_element(a, b, scenario)
    ref = _oracle_element(a, b, scenario)
    assert got == pytest.approx(ref, rel=0.01, abs=1e-3 * abs(kernel_element(10.0, 10.0, scenario)))


@settings(max_examples=25, deadline=None)
@given(st.floats(-20.0, 20.0), st.floats(-20.0, 20.0))
def test_element_symmetries(a, b):
    sc = reference_scenario()
    v = kernel_element(a, b, sc)
    for w in (kernel_element(b, a, sc), kernel_element(-a, b, sc), kernel_element(a, -b, sc)):
        assert w == pytest.approx(v, rel=1e-10, abs=1e-300)


def test_element_refinement_stable(scenario):
    for a, b in [(7.3, 9.1), (2.0, 2.5), (12.0, 11.0)]:
        coarse = kernel_element(a, b, scenario)
        fine = kernel_element(a, b, scenario, rtol=1e-6)
        assert coarse == pytest.approx(fine, rel=0.01)


def test_element_nonconvergence_reported():
    sc = reference_scenario(grid=GridSpec(n_inner=3, n_inner_max=5, inner_rtol=1e-12))
    with pytest.raises(ConvergenceError):
        kernel_element(5.0, 6.0, sc)


def test_kernel_invariants(kernel):
    assert kernel.trace() == pytest.approx(1.0, abs=1e-6)
    assert np.array_equal(kernel.f, kernel.f.T)
    assert np.all(np.diag(kernel.f) >= 0)
    assert kernel.norm > 0
    # diagonal vanishes at the default cutoff
    d = kernel.diagonal()
    assert d[-1] < 1e-3 * d.max()


def test_kernel_full_mirror(kernel):
    ax, full = kernel.full()
    assert ax.size == 2 * kernel.k_axis.size - 1
    assert np.array_equal(full, full[::-1, ::-1])
    assert kernel(-3.0, 4.0) == pytest.approx(kernel(3.0, 4.0))
    assert kernel(3.0, -4.0) == pytest.approx(kernel(3.0, 4.0))
    assert kernel(30.0, 0.0) == 0.0


def test_kernel_rejects_asymmetric():
    with pytest.raises(ValidationError):
        MomentumKernel(np.linspace(0, 1, 3), np.array([[1.0, 2.0, 0], [0, 1, 0], [0, 0, 1]]))


def test_kernel_refinement_changes_elements_little(kernel, scenario):
    """Halving the inner spacing (tighter tolerance) moves every element by < 1%."""
    fine = build_kernel(reference_scenario(grid=GridSpec(inner_rtol=1e-4, n_inner=33, n_inner_max=1025)))
    scale = kernel.f.max()
    assert np.max(np.abs(fine.f - kernel.f)) < 0.01 * scale


def test_band_mass_reference_scenario(kernel):
    # band fixed from the converged kernel: 5 rad/um holds >= 90% of the l1 mass
    assert band_mass_fraction(kernel, 5.0) >= 0.90


def test_window_series_trend():
    g = GridSpec(N_kx=41)
    cents = [diagonal_centroid(build_kernel(reference_scenario(E_win=(lo, 4.0), grid=g)))
             for lo in (1.5, 2.0, 2.5, 3.0, 3.5)]
    assert all(b > a for a, b in zip(cents, cents[1:]))


def test_thickness_doubling_concentrates_diagonal():
    g = GridSpec(N_kx=61, n_inner_max=1025)
    fr = [band_mass_fraction(build_kernel(reference_scenario(L_z=L, grid=g)), 2.0) for L in (2.0, 4.0, 8.0, 16.0)]
    assert all(b > a for a, b in zip(fr, fr[1:]))


def test_emission_zero_forward(scenario):
    prof = emission_profile(scenario, np.array([0.0, 0.3]))
    assert prof.inside[0] == 0.0


def test_emission_finite_at_cherenkov_angle(scenario):
    cr = characteristic_angles(scenario)[0]
    th = cr + np.array([-1e-9, 0.0, 1e-9, 1e-6])
    prof = emission_profile(scenario, th)
    assert np.all(np.isfinite(prof.inside))
    assert np.allclose(prof.inside[:3], prof.inside[1], rtol=1e-6)


def test_emission_transmitted_bounds(scenario):
    prof = emission_profile(scenario)
    assert np.all(prof.inside >= 0)
    assert np.all(prof.outside <= prof.inside + 1e-30)
    assert np.all(prof.outside[prof.theta_axis > prof.theta_crit] == 0)


def test_p_out_quoted_window(scenario):
    prof = emission_profile(scenario, kl_window=QUOTED_KL_WINDOW)
    assert prof.p_out_total == pytest.approx(5.65e-5, rel=0.05)


def test_p_out_frozen_default_window(scenario):
    # n E L / (hbar c) window; documents the convention gap with the quoted window
    prof = emission_profile(scenario)
    assert prof.kl_window == pytest.approx((1.6 * 3.5 * 0.2 / HBAR_C, 1.6 * 4.0 * 0.2 / HBAR_C))
    assert prof.p_out_total == pytest.approx(4.749e-5, rel=1e-3)


def test_peak_approaches_cherenkov_angle(scenario):
    th = np.radians(np.linspace(15, 40, 50001))
    cr = math.degrees(characteristic_angles(scenario)[0])
    offs = []
    for kl in (10.0, 100.0, 1000.0):
        p = emission_profile(scenario, th, kl_window=(0.0, kl))
        offs.append(abs(math.degrees(th[np.argmax(p.inside)]) - cr))
    assert offs[0] > offs[1] > offs[2]
    assert offs[2] < 0.5
