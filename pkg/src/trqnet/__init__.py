"""trqnet: tensor-network layers feeding a tensor-ring variational classifier."""

from .tensor_core import SvdResult, contract, permute, reshape, svd
from .tensor_ring import (
    MeasurementResult,
    QuanTRCircuit,
    TRState,
    apply_single_qubit,
    apply_two_qubit,
    cnot,
    measure_probs,
    run_circuit,
    ry,
    rz,
    tr_to_statevector,
    tr_zero_state,
)
from .statevector import fidelity, sv_apply, sv_probs, sv_run, sv_zero

__version__ = "0.1.0"
