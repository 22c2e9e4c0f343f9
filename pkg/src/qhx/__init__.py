"""qhx: deterministic simulator for stroke-based three-level heat machines
with explicit heat-exchanger and battery particles."""

__version__ = "0.1.0"

from .core import (
    DensityMatrix,
    HermitianOperator,
    SubsystemLayout,
    UnitaryOperator,
    apply,
    dephase,
    embed,
    evolve,
    expectation,
    mutual_information,
    partial_trace,
    spectral_norm,
    tensor,
    trace_norm,
    von_neumann_entropy,
)
from .machine import (
    CouplingSpec,
    DephasingMode,
    DephasingPolicy,
    EngineSpec,
    ExchangerSpec,
    MachineKind,
    MachineSpec,
    MachineType,
    TerminalSpec,
    cycle_operator,
    engine_action,
    engine_hamiltonian,
    interaction_hamiltonian,
    interaction_layout,
    stroke_schedule,
    thermal_qubit,
    yoshida_coefficients,
)
from .cycles import (
    ConvergenceError,
    CycleLedger,
    CyclePoint,
    LimitCycleResult,
    find_limit_cycle,
    run_cycle,
    run_n_cycles,
    steady_power,
)
from .battery import (
    ChargingWindow,
    EnginePopulations,
    SwapReport,
    charging_purifying_window,
    entropy_preserving_pw,
    full_swap,
    full_swap_unitary,
    qutrit_battery_swap,
    sweep_battery,
    zero_energy_pw,
)
