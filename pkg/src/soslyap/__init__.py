"""Stability certificates and boundary feedback for 1-D parabolic plants.

The pipeline: a plant (systems) is compiled into operator inequalities
(loi) over semi-separable kernel triples (kernels), which become cone
feasibility problems (sdp).  stability answers "does a decay certificate
exist", synthesis and observer turn dual/primal certificates into boundary
gains, and pde_sim closes the loop numerically.
"""

from .config import ConfigError, JobConfig, load_config
from .kernels import (
    DiscreteOperator,
    GramCertificate,
    KernelTriple,
    build_from_gram,
    check_inverse_preconditions,
    discretize,
    inversion_demo_certificate,
    neumann_inverse,
)
from .observer import (
    ObserverGains,
    OutputFeedback,
    assemble_output_feedback,
    synthesize_observer,
)
from .pde_sim import (
    SimulationTrace,
    empirical_margin,
    fitted_decay_exponent,
    lyapunov_trace,
    simulate,
    write_trace_csv,
)
from .polynomials import Poly
from .sdp import Status, solve
from .stability import (
    AnalysisReport,
    ShiftedProblemFamily,
    SweepResult,
    delta_sweep,
    dual_stability_test,
    lambda_sweep,
    stability_test,
)
from .synthesis import (
    ControllerGains,
    FeedbackLaw,
    SynthesisInfeasible,
    synthesize_controller,
)
from .systems import InvalidSystem, PdeSystem, cubic_diffusion_system, heat_system

__version__ = "0.1.0"

__all__ = [
    "AnalysisReport",
    "ConfigError",
    "ControllerGains",
    "DiscreteOperator",
    "FeedbackLaw",
    "GramCertificate",
    "InvalidSystem",
    "JobConfig",
    "KernelTriple",
    "ObserverGains",
    "OutputFeedback",
    "PdeSystem",
    "Poly",
    "ShiftedProblemFamily",
    "SimulationTrace",
    "Status",
    "SweepResult",
    "SynthesisInfeasible",
    "assemble_output_feedback",
    "build_from_gram",
    "check_inverse_preconditions",
    "cubic_diffusion_system",
    "delta_sweep",
    "discretize",
    "dual_stability_test",
    "empirical_margin",
    "fitted_decay_exponent",
    "heat_system",
    "inversion_demo_certificate",
    "lambda_sweep",
    "lyapunov_trace",
    "neumann_inverse",
    "simulate",
    "solve",
    "stability_test",
    "synthesize_controller",
    "synthesize_observer",
    "write_trace_csv",
    "__version__",
]
