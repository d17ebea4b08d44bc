"""Lattice path-integral simulator for Aharonov-Bohm nonlocality."""

__version__ = "0.1.0"

from .errors import InputError, NumericalError, SimulationError
from .lattice import (Boundary, LatticePath, LatticeSpec, SingularRegion, UnitsConvention, WaveFunction,
                      make_lattice, singular_region, wavepacket)
from .gauge import (FluxSpec, GaugeFunction, LinkField, azimuthal_link_field, divergence_check, flux_angle,
                    flux_link_field, gauge_transform, gauge_wavefunction, harmonicity_check)
from .kernels import (ActionConfig, Backend, TransferKernel, build_kernel, compose, free_kernel_analytic,
                      propagate)
from .pathsum import PathSum, brute_force_kernel
from .returns import SlicingPlan, counter_action_equivalence, return_factorization
from .winding import WindingReport, ab_resum, sector_decompose, two_class_split, winding_number
from .observables import (ExperimentConfig, FringeResult, WavepacketSpec, ab_cross_section, curl_diagnostic,
                          double_slit, fringe_shift_scan, momentum_field)
from .dof import (DofReport, GaugeGroup, StructureConstants, dof_report, fp_determinant_kind, gauge_orbit_dof,
                  su_structure_constants)
