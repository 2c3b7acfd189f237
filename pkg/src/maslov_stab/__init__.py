"""Spectral stability of pulses in gradient reaction-diffusion systems.

The number of unstable directions of the linearization about a steady state
equals the number of conjugate points of the associated selfadjoint
operator -D u'' + V(x) u: positions where the family of solutions decaying
to the left meets the Dirichlet plane.  This package counts them by
propagating an orthonormal frame of that family, and cross-validates the
count against a finite-difference eigenvalue solver and an Evans-function
zero count.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, ConsistencyError, CrossingFormError,
                     HypothesisError, IntegrationError, MaslovStabError,
                     StabilizationError)
from .symplectic import (DirichletPlane, LagrangianFrame, SymplecticForm,
                         dirichlet_intersection, is_lagrangian,
                         symplectic_product)
from .problem import (Problem, PulseProblem, block_diagonal,
                      build_from_gradient_rd, check_hypotheses,
                      choose_lambda_inf, constant_potential,
                      decoupled_pulse_system, double_pulse_problem,
                      poeschl_teller, scalar_pulse_problem,
                      scalar_pulse_system, sup_norm_V, tabulated_potential)
from .propagation import (AsymptoticSystem, OdeControls, PropagationTrace,
                          export_trace_csv, propagate_frame,
                          stable_subspace_at_plus_infinity, truncation_point,
                          unstable_subspace_at_minus_infinity)
from .maslov import (Crossing, MaslovReport, crossing_form_lambda,
                     crossing_form_s, find_conjugate_points, lambda_sweep,
                     maslov_rectangle, morse_index_via_maslov,
                     scan_conjugate_points)
from .oracle import (SpectrumReport, eigenvalue_monotonicity, eigenvalues_HL,
                     export_spectrum_csv, morse_whole_line,
                     spectrum_on_interval)
from .evans import (EvansTrace, count_negative_evans_zeros, evans_trace,
                    evans_value, export_evans_csv,
                    stable_subspace_from_plus_infinity)
from .pulse import (InstabilityVerdict, certify_conjugate_point,
                    detect_symmetry_point, instability_verdict)
from .pipeline import morse_consistency
