"""Moment-matching ancilla dilation of linear Ito SDEs and its classical emulation."""

from .numerics import ContractError, DimensionError, expm, expm_skew, hermitian_split, rk4_propagate
from .noise import NoisePath, presample
from .sde_model import (
    LinearSdeSystem,
    em_reference,
    evolve_second_moment,
    homogenize,
    k_max,
    second_moment_rhs,
    structure,
)
from .dilation import (
    DilatedOperators,
    LightConeEstimate,
    Readout,
    SbpChain,
    build_chain,
    dilate,
    lightcone,
    make_readout,
    moment_check,
    pauli_xy_check,
    project_readout,
)


__version__ = "0.1.0"
