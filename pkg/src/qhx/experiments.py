"""Composite experiments over the simulator: action sweeps, machine-type
equivalence order estimation, and dephasing signatures.

Conventions shared by every experiment here:

* The action s is swept through the cycle time at fixed coupling
  strengths, tau_cyc = s / (eps_c + eps_h + eps_w).
* All machine types at one sweep point share identical terminal particles;
  an "entropy_preserving" battery is resolved once per experiment, at the
  smallest action in the grid, from the simultaneous machine's limit
  cycle, and reused everywhere.
* Order fits are least-squares fits of log|deviation| against log s.
  Points below the numerical floor are excluded and reported as such; a
  fit needs at least six surviving points.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .battery import entropy_preserving_pw
from .core import trace_norm
from .cycles import (
    ConvergenceError,
    _engine_map,
    _plan_from_strokes,
    _propagate_plan,
    _solve_fixed_point,
    _terminal_block,
    find_limit_cycle,
    run_cycle,
)
from .machine import (
    CouplingSpec,
    DephasingMode,
    DephasingPolicy,
    EngineSpec,
    MachineKind,
    MachineSpec,
    MachineType,
    Stroke,
    cycle_operator,
    interaction_hamiltonian,
    interaction_layout,
)
from .core import _ptrace_array

__all__ = [
    "SweepParams",
    "SweepRow",
    "SweepResult",
    "NormalizedRow",
    "OrderFit",
    "DeviationOrders",
    "SignaturePoint",
    "DEVIATION_FLOOR",
    "MIN_FIT_POINTS",
    "default_params",
    "make_machine",
    "resolve_battery_population",
    "sweep_action",
    "normalized_power",
    "fit_order",
    "operator_error_order",
    "deviation_order",
    "transient_work_deviation",
    "quantum_signature",
    "zeno_series",
    "single_access_signature",
]

DEVIATION_FLOOR = 1e-13
MIN_FIT_POINTS = 6
EQUIVALENCE_MAX_S = 0.3


@dataclass(frozen=True)
class SweepParams:
    """Shared machine parameters for a sweep; the action is the axis."""

    engine: EngineSpec = field(default_factory=lambda: EngineSpec(1.0, 4.0))
    T_c: float = 1.0
    T_h: float = 20.0
    eps: tuple[float, float, float] = (1.0, 1.0, 1.0)
    battery: float | str = "entropy_preserving"
    tol: float = 1e-12
    max_iter: int = 512

    def __post_init__(self):
        if isinstance(self.battery, str) and self.battery != "entropy_preserving":
            raise ValueError(f"unknown battery policy {self.battery!r}")

    @property
    def eps_total(self) -> float:
        return sum(self.eps)


def default_params() -> SweepParams:
    return SweepParams()


def make_machine(
    params: SweepParams,
    kind: MachineKind,
    s: float,
    p_w: float,
    dephasing: DephasingPolicy | None = None,
) -> MachineSpec:
    couplings = CouplingSpec(*params.eps, tau_cyc=s / params.eps_total)
    machine_type = MachineType(kind, dephasing) if dephasing else MachineType(kind)
    return MachineSpec.build(
        params.engine, params.T_c, params.T_h, p_w, couplings, machine_type
    )


def resolve_battery_population(params: SweepParams, s_ref: float) -> float:
    """Numeric battery population for the experiment's terminal stream.

    A fixed number is returned as-is. The "entropy_preserving" policy is
    resolved self-consistently: iterate p_w -> (1-c)/(1+a) evaluated at the
    simultaneous machine's limit cycle until stationary.
    """
    if not isinstance(params.battery, str):
        return float(params.battery)
    p = 0.5
    for _ in range(100):
        machine = make_machine(params, MachineKind.SIMULTANEOUS, s_ref, p)
        result = find_limit_cycle(machine, tol=params.tol, max_iter=params.max_iter)
        a, _, c = result.rho_e_bar.populations
        p_new = entropy_preserving_pw((a, 1.0 - a - c, c))
        if abs(p_new - p) < 1e-13:
            return p_new
        p = p_new
    return p


@dataclass(frozen=True)
class SweepRow:
    s: float
    tau_cyc: float
    machine: MachineKind
    P: float
    W: float
    Q_h: float
    Q_c: float
    residual: float
    converged: bool


@dataclass(frozen=True)
class SweepResult:
    axis: str
    rows: tuple[SweepRow, ...]

    def for_machine(self, kind: MachineKind) -> list[SweepRow]:
        return [r for r in self.rows if r.machine is kind]


def _sweep_point(params: SweepParams, kind: MachineKind, s: float, p_w: float) -> SweepRow:
    machine = make_machine(params, kind, s, p_w)
    tau = machine.couplings.tau_cyc
    try:
        result = find_limit_cycle(machine, tol=params.tol, max_iter=params.max_iter)
    except ConvergenceError as err:
        return SweepRow(s, tau, kind, math.nan, math.nan, math.nan, math.nan, err.residual, False)
    led = result.ledger
    return SweepRow(s, tau, kind, led.dE_w / tau, led.dE_w, led.Q_h, led.Q_c, result.residual, True)


def sweep_action(
    kinds,
    s_values,
    params: SweepParams | None = None,
    threads: int = 1,
) -> SweepResult:
    """Steady power (and heats) per machine type over an ascending s grid.

    Non-convergence at a point flags the row and the sweep continues.
    Sweep points are independent; `threads` > 1 runs them concurrently
    with order-preserving, deterministic assembly.
    """
    params = params or default_params()
    s_values = [float(s) for s in s_values]
    if not s_values or any(s <= 0 for s in s_values):
        raise ValueError("s grid must be positive")
    if sorted(s_values) != s_values:
        raise ValueError("s grid must be ascending")
    kinds = list(kinds)
    p_w = resolve_battery_population(params, min(s_values))
    tasks = [(kind, s) for s in s_values for kind in kinds]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda t: _sweep_point(params, t[0], t[1], p_w), tasks))
    else:
        rows = [_sweep_point(params, kind, s, p_w) for kind, s in tasks]
    return SweepResult(axis="s", rows=tuple(rows))


@dataclass(frozen=True)
class NormalizedRow:
    s: float
    machine: MachineKind
    ratio: float
    flagged: bool  # reference power at the numerical floor


def normalized_power(
    result: SweepResult, reference: MachineKind = MachineKind.SIMULTANEOUS
) -> list[NormalizedRow]:
    """P / P_reference per sweep row (reference rows excluded)."""
    ref = {r.s: r.P for r in result.for_machine(reference)}
    if not ref:
        raise ValueError(f"reference machine {reference} not present in sweep")
    out = []
    for row in result.rows:
        if row.machine is reference:
            continue
        p_ref = ref.get(row.s, math.nan)
        flagged = not (abs(p_ref) > 1e-14) or not row.converged
        ratio = row.P / p_ref if not flagged else math.nan
        out.append(NormalizedRow(row.s, row.machine, ratio, flagged))
    return out


@dataclass(frozen=True)
class OrderFit:
    """Least-squares slope of log|deviation| vs log s."""

    slope: float
    intercept: float
    r_squared: float
    window: tuple[float, float]
    n_points: int  # grid points offered
    n_used: int  # points above the numerical floor
    at_floor: bool  # too few usable points for a fit

    def within(self, expected: float, tol: float) -> bool:
        return not self.at_floor and abs(self.slope - expected) <= tol


def fit_order(s_values, deviations, floor: float = DEVIATION_FLOOR) -> OrderFit:
    s_values = np.asarray(s_values, dtype=float)
    deviations = np.asarray(deviations, dtype=float)
    window = (float(s_values.min()), float(s_values.max()))
    mask = deviations > floor
    n_used = int(mask.sum())
    if n_used < MIN_FIT_POINTS:
        return OrderFit(math.nan, math.nan, math.nan, window, s_values.size, n_used, True)
    x = np.log(s_values[mask])
    y = np.log(deviations[mask])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(((y - fitted) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return OrderFit(float(slope), float(intercept), r_squared, window, s_values.size, n_used, False)


def operator_error_order(
    kind: MachineKind,
    params: SweepParams | None = None,
    window: tuple[float, float] = (1e-3, 1e-1),
    n_points: int = 12,
    reference: MachineKind = MachineKind.SIMULTANEOUS,
    floor: float = DEVIATION_FLOOR,
) -> OrderFit:
    """Spectral-norm error of the cycle operator against the reference."""
    params = params or default_params()
    s_values = np.geomspace(window[0], window[1], n_points)
    errs = []
    for s in s_values:
        couplings = CouplingSpec(*params.eps, tau_cyc=s / params.eps_total)
        u_ref = cycle_operator(reference, params.engine, couplings)
        u = cycle_operator(kind, params.engine, couplings)
        errs.append(float(np.linalg.svd(u.data - u_ref.data, compute_uv=False).max()))
    return fit_order(s_values, errs, floor=floor)


@dataclass(frozen=True)
class DeviationOrders:
    """Order fits of a machine's thermodynamic deviation from a reference.

    `work` fits |W_machine - W_reference| per cycle, each machine at its
    own limit cycle. `state` fits the trace-norm drift of the reference's
    steady state under one application of the machine's cycle map (the
    steady-state equivalence order); see the module notes for why the
    literal distance between the two fixed points is not used: it equals
    drift / spectral gap and thus scales two orders lower.
    """

    machine: MachineKind
    reference: MachineKind
    work: OrderFit
    state: OrderFit
    s_values: tuple[float, ...]
    work_deviations: tuple[float, ...]
    state_deviations: tuple[float, ...]


def deviation_order(
    kind: MachineKind,
    reference: MachineKind = MachineKind.SIMULTANEOUS,
    params: SweepParams | None = None,
    window: tuple[float, float] = (1e-3, 1e-1),
    n_points: int = 12,
    floor: float = DEVIATION_FLOOR,
) -> DeviationOrders:
    """Equivalence order of one machine type against a reference."""
    params = params or default_params()
    if window[1] > EQUIVALENCE_MAX_S + 1e-12:
        raise ValueError(f"fit window must stay within s <= {EQUIVALENCE_MAX_S}")
    s_values = np.geomspace(window[0], window[1], n_points)
    p_w = resolve_battery_population(params, float(s_values.min()))
    work_dev, state_dev = [], []
    for s in s_values:
        ref_machine = make_machine(params, reference, float(s), p_w)
        ref = find_limit_cycle(ref_machine, tol=params.tol, max_iter=params.max_iter)
        mach = make_machine(params, kind, float(s), p_w)
        own = find_limit_cycle(mach, tol=params.tol, max_iter=params.max_iter)
        work_dev.append(abs(own.ledger.dE_w - ref.ledger.dE_w))
        drifted = _engine_map(ref.rho_e_bar.data, mach)
        state_dev.append(trace_norm(drifted - ref.rho_e_bar.data))
    return DeviationOrders(
        machine=kind,
        reference=reference,
        work=fit_order(s_values, work_dev, floor=floor),
        state=fit_order(s_values, state_dev, floor=floor),
        s_values=tuple(float(s) for s in s_values),
        work_deviations=tuple(work_dev),
        state_deviations=tuple(state_dev),
    )


def transient_work_deviation(
    kind: MachineKind,
    reference: MachineKind = MachineKind.SIMULTANEOUS,
    params: SweepParams | None = None,
    window: tuple[float, float] = (1e-3, 1e-1),
    n_points: int = 12,
    floor: float = DEVIATION_FLOOR,
) -> OrderFit:
    """Single-cycle work deviation for identical initial engine states.

    Both machines start from the reference machine's limit cycle at each
    sweep point and run exactly one cycle.
    """
    params = params or default_params()
    s_values = np.geomspace(window[0], window[1], n_points)
    p_w = resolve_battery_population(params, float(s_values.min()))
    devs = []
    for s in s_values:
        ref_machine = make_machine(params, reference, float(s), p_w)
        start = find_limit_cycle(ref_machine, tol=params.tol, max_iter=params.max_iter).rho_e_bar
        _, led_ref = run_cycle(start, ref_machine)
        _, led = run_cycle(start, make_machine(params, kind, float(s), p_w))
        devs.append(abs(led.dE_w - led_ref.dE_w))
    return fit_order(s_values, devs, floor=floor)


@dataclass(frozen=True)
class SignaturePoint:
    machine: MachineKind | None  # None for custom cells
    s: float
    P_coherent: float
    P_dephased: float

    @property
    def separation(self) -> float:
        return abs(self.P_coherent - self.P_dephased)


def quantum_signature(
    kind: MachineKind,
    s: float,
    params: SweepParams | None = None,
    dephasing: DephasingPolicy | None = None,
) -> SignaturePoint:
    """Steady power with and without the dephasing policy.

    Stroke machines default to between-stroke dephasing; the simultaneous
    machine needs an explicit continuous policy (its single stroke leaves
    nothing to interleave).
    """
    params = params or default_params()
    if dephasing is None:
        if kind is MachineKind.SIMULTANEOUS:
            raise ValueError("the simultaneous machine needs a continuous dephasing policy")
        dephasing = DephasingPolicy.between_strokes()
    p_w = resolve_battery_population(params, s)
    coherent = make_machine(params, kind, s, p_w)
    dephased = make_machine(params, kind, s, p_w, dephasing)
    res_c = find_limit_cycle(coherent, tol=params.tol, max_iter=params.max_iter)
    res_d = find_limit_cycle(dephased, tol=params.tol, max_iter=params.max_iter)
    tau = coherent.couplings.tau_cyc
    return SignaturePoint(kind, s, res_c.ledger.dE_w / tau, res_d.ledger.dE_w / tau)


def zeno_series(
    s: float,
    n_slices_values,
    params: SweepParams | None = None,
) -> list[tuple[int, float]]:
    """Steady power of the simultaneous machine under ever finer continuous
    dephasing; approaches zero as the slice count grows."""
    params = params or default_params()
    p_w = resolve_battery_population(params, s)
    series = []
    for n in n_slices_values:
        machine = make_machine(
            params, MachineKind.SIMULTANEOUS, s, p_w, DephasingPolicy.continuous(int(n))
        )
        res = find_limit_cycle(machine, tol=params.tol, max_iter=params.max_iter)
        series.append((int(n), res.ledger.dE_w / machine.couplings.tau_cyc))
    return series


def single_access_signature(s: float, params: SweepParams | None = None) -> SignaturePoint:
    """Dephasing sensitivity of a sequential cell that touches the battery
    once per cycle (thermal stroke, then one work stroke).

    Such a cycle carries no inter-particle coherence across the stroke
    where the battery is accessed, so between-stroke dephasing leaves its
    leading-order power intact; used as the control for the stroke-machine
    signature.
    """
    params = params or default_params()
    p_w = resolve_battery_population(params, s)
    spec = make_machine(params, MachineKind.SIMULTANEOUS, s, p_w)
    layout = interaction_layout()
    tau = spec.couplings.tau_cyc
    h = {
        k: interaction_hamiltonian(k, spec.couplings.eps(k), params.engine, layout)
        for k in ("cold", "hot", "work")
    }
    strokes = [
        Stroke.make("thermal", h["cold"] + h["hot"], tau),
        Stroke.make("work", h["work"], tau),
    ]
    dims = layout.dims
    terminals = _terminal_block(spec)
    h_work = spec.bare_hamiltonians()["work"].data

    def power(policy: DephasingPolicy) -> float:
        plan = _plan_from_strokes(strokes, policy)
        mask = None
        if policy.mode is not DephasingMode.NONE:
            mask = np.eye(layout.total_dim)

        def emap(mat3):
            rho = np.kron(mat3, terminals)
            rho = _propagate_plan(rho, plan, mask)
            return _ptrace_array(rho, dims, (0,))

        start = np.eye(3, dtype=complex) / 3.0
        fixed, _, residual = _solve_fixed_point(emap, 3, params.tol, params.max_iter, start)
        if residual > params.tol:
            raise ConvergenceError(residual, params.max_iter)
        rho0 = np.kron(fixed, terminals)
        rho1 = _propagate_plan(rho0, plan, mask)
        return float(np.einsum("ij,ji->", rho1 - rho0, h_work).real) / tau

    return SignaturePoint(
        None,
        s,
        power(DephasingPolicy.none()),
        power(DephasingPolicy.between_strokes()),
    )
