"""Numerical toolkit for q-Gaussian processes, product Levy areas and rough integration."""
from .errors import DomainError, NumericError, ResourceError
from .pairings import (CovarianceSpec, Pairing, crossing_number, enumerate_pairings, pairing_table,
                       q_moment, q_moment_batch)
from .fock import (FockSpace, LazyOperator, Operator, TimeGrid, annihilation, build_fock,
                   conditional_expectation, creation, l2_norm, lp_norm, op_norm, position, scalar_space,
                   state)
from .law import QDensity, density_at, moment_quadrature, support
from .algebra import (FourierFunction, TensorValue, apply_function, elementary, one_tensor,
                      second_tensor_derivative, tensor_derivative, zero_tensor)
from .rough import (BrownianPath, ControlledBiprocess, ControlledProcess, InterpolatedPath, LevyAreaApprox,
                    ScalarPath, SymmetricArea, chen_defect, levy_area_dyadic, make_controlled_from_functions,
                    rough_integral, solve_rde, strat_levy_area, wong_zakai_compare, wong_zakai_solve)
from .ito import (StepBiprocess, correction_check, ito_sum, q_bracket, quadratic_limit, quadratic_sum,
                  second_quantization, trapezoid_sum)
from .harness import ReportRecord, RunConfig, emit_plotdata, run_suite

__version__ = "0.1.0"
