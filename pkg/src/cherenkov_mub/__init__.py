"""Certification of transverse electron-photon entanglement from Cherenkov emission."""
from .kernel import (
    GridSpec,
    MomentumKernel,
    PhysicalScenario,
    build_kernel,
    characteristic_angles,
    emission_profile,
    kernel_element,
    reference_scenario,
)

__version__ = "0.1.0"
