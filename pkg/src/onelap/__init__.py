"""Radial solver and certificates for the 1-Laplacian with a singular reaction term.

Problems ``-div(Du/|Du|) = h(u) f`` on a ball are approximated by the
p-Laplacian as ``p -> 1+`` and checked against closed-form solutions.
"""

from .auxfn import build_hbar, build_phi, choose_s2, phi_for, rising_sun, smooth_band
from .diagnostics import (
    blowup_detector,
    classify,
    divergence_residual,
    estimate_suite,
    pairing_defect,
    total_variation,
)
from .errors import (
    CertificateError,
    ConvergenceError,
    DomainError,
    EnvelopeError,
    InsufficientDataError,
    OnelapError,
    ParameterError,
)
from .mesh import RadialMesh, assemble_mesh
from .nonlinearity import DatumSpec, NonlinearitySpec, eval_h, truncate_f, truncate_h, validate
from .plap_solver import SolverConfig, continuation, energy, solve_plap_fixed_source, solve_reaction
from .radial_oracle import (
    example_flat,
    example_nonunique,
    example_power,
    gamma_to_zero_profile,
    radial_dual_norm,
    residual_check,
)
from .truncations import r_delta, s_n, t_k, t_k_pow, v_delta

__version__ = "0.1.0"
