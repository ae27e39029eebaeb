from ..noise import NoisePath, presample
from .weak1 import Weak1Integrator, interaction_step, kraus_unitary, weak1_step
from .weak2 import (
    Weak2Integrator,
    Weak2Midpoint,
    f2_matrix,
    measurement_map,
    weak2_matrix_step,
    weak2_measurement_step,
)
from .segmented import (
    SCHEMES,
    RefreshError,
    WeightedState,
    make_integrator,
    off_mode_weight,
    propagate,
    run_segmented,
)
from .ensemble import EnsembleResult, cos_affine_quadratic, ensemble_run, squared_norm

__all__ = [
    "NoisePath", "presample", "Weak1Integrator", "interaction_step", "kraus_unitary",
    "weak1_step", "Weak2Integrator", "Weak2Midpoint", "f2_matrix", "measurement_map",
    "weak2_matrix_step", "weak2_measurement_step", "SCHEMES", "RefreshError",
    "WeightedState", "make_integrator", "off_mode_weight", "propagate", "run_segmented",
    "EnsembleResult", "cos_affine_quadratic", "ensemble_run", "squared_norm",
]
