"""Physical constants and unit conventions.

Lengths are in micrometres, momenta in hbar/um (numerically equal to wave
numbers in rad/um with hbar = 1) and energies in eV.
"""

HBAR_C = 0.19732697  # eV um
ME_C2 = 511.0e3  # eV, electron rest energy
ALPHA = 1.0 / 137.035999  # fine-structure constant

# d = 2 conjugate periodic bases need T_x * T_p = 2 * 2 pi (hbar = 1)
FOUR_PI = 4.0 * 3.141592653589793


def as_dict():
    return {"hbar_c_eV_um": HBAR_C, "me_c2_eV": ME_C2, "alpha": ALPHA}
