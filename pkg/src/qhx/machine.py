"""Machine construction: engine and terminal Hamiltonians, energy-conserving
couplings, thermal states, stroke schedules and per-cycle unitaries.

The interaction zone is a fixed composite [engine(3), cold(2), hot(2),
work(2)]; all embeddings go through the layout so the physics does not
depend on the kron ordering. States are propagated with the interaction
generators only; the bare Hamiltonians enter through energy observables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache

import numpy as np

from .core import (
    DensityMatrix,
    HermitianOperator,
    SubsystemLayout,
    UnitaryOperator,
    embed,
    evolve,
)

__all__ = [
    "ENGINE_SITE",
    "COLD_SITE",
    "HOT_SITE",
    "WORK_SITE",
    "MANIFOLDS",
    "TERMINAL_SITES",
    "interaction_layout",
    "EngineSpec",
    "TerminalSpec",
    "CouplingSpec",
    "ExchangerSpec",
    "MachineKind",
    "DephasingMode",
    "DephasingPolicy",
    "MachineType",
    "MachineSpec",
    "Stroke",
    "engine_hamiltonian",
    "terminal_hamiltonian",
    "thermal_qubit",
    "battery_qubit",
    "interaction_hamiltonian",
    "stroke_schedule",
    "cycle_operator",
    "yoshida_coefficients",
    "engine_action",
]

ENGINE_SITE, COLD_SITE, HOT_SITE, WORK_SITE = 0, 1, 2, 3
_INTERACTION_DIMS = (3, 2, 2, 2)

# Two-level subspaces of the engine qutrit, in level order (0,1,2).
MANIFOLDS = {"cold": (0, 1), "hot": (0, 2), "work": (1, 2)}
TERMINAL_SITES = {"cold": COLD_SITE, "hot": HOT_SITE, "work": WORK_SITE}

COMMUTATOR_TOL = 1e-12


def interaction_layout() -> SubsystemLayout:
    """Layout of the interaction zone: [engine(3), cold(2), hot(2), work(2)]."""
    return SubsystemLayout(_INTERACTION_DIMS)


@dataclass(frozen=True)
class EngineSpec:
    """Three-level engine: cold gap E_c (levels 1-2), hot gap E_h (levels 1-3)."""

    E_c: float
    E_h: float

    def __post_init__(self):
        if not (0.0 < self.E_c < self.E_h):
            raise ValueError(f"need 0 < E_c < E_h, got E_c={self.E_c}, E_h={self.E_h}")

    @property
    def E_w(self) -> float:
        return self.E_h - self.E_c

    def manifold_gap(self, kind: str) -> float:
        return {"cold": self.E_c, "hot": self.E_h, "work": self.E_w}[kind]


@dataclass(frozen=True)
class TerminalSpec:
    """One terminal particle stream: a thermal exchanger qubit or a battery.

    Exactly one initialization is set: a temperature (thermal terminals),
    a qubit excited population (battery), or explicit qutrit populations
    (qutrit battery, used by the battery analysis tools).
    """

    kind: str
    gap: float
    temperature: float | None = None
    population: float | None = None
    qutrit_populations: tuple[float, float, float] | None = None

    def __post_init__(self):
        if self.kind not in TERMINAL_SITES:
            raise ValueError(f"unknown terminal kind {self.kind!r}")
        if self.gap <= 0.0:
            raise ValueError("terminal gap must be positive")
        inits = [
            x is not None
            for x in (self.temperature, self.population, self.qutrit_populations)
        ]
        if sum(inits) != 1:
            raise ValueError("exactly one of temperature/population/qutrit must be set")
        if self.temperature is not None and not self.temperature > 0.0:
            raise ValueError("temperature must be > 0 (math.inf allowed)")
        if self.population is not None and not 0.0 <= self.population <= 1.0:
            raise ValueError("battery population must lie in [0, 1]")
        if self.qutrit_populations is not None:
            q = self.qutrit_populations
            if len(q) != 3 or min(q) < 0 or abs(sum(q) - 1.0) > 1e-12:
                raise ValueError("qutrit populations must be a normalized triple")

    @classmethod
    def thermal(cls, kind: str, gap: float, temperature: float) -> "TerminalSpec":
        return cls(kind=kind, gap=gap, temperature=temperature)

    @classmethod
    def battery(cls, gap: float, population: float) -> "TerminalSpec":
        return cls(kind="work", gap=gap, population=population)

    @classmethod
    def qutrit_battery(cls, gap: float, populations) -> "TerminalSpec":
        return cls(kind="work", gap=gap, qutrit_populations=tuple(populations))

    def initial_state(self) -> DensityMatrix:
        if self.temperature is not None:
            return thermal_qubit(self.gap, self.temperature)
        if self.population is not None:
            return battery_qubit(self.population)
        return DensityMatrix.from_diagonal(self.qutrit_populations)


@dataclass(frozen=True)
class CouplingSpec:
    """Coupling strengths (energy units) and the cycle time."""

    eps_c: float
    eps_h: float
    eps_w: float
    tau_cyc: float

    def __post_init__(self):
        if min(self.eps_c, self.eps_h, self.eps_w) < 0.0:
            raise ValueError("coupling strengths must be >= 0")
        if not self.tau_cyc > 0.0:
            raise ValueError("cycle time must be positive")

    def eps(self, kind: str) -> float:
        return {"cold": self.eps_c, "hot": self.eps_h, "work": self.eps_w}[kind]


@dataclass(frozen=True)
class ExchangerSpec:
    """Heat-exchanger bookkeeping; the simulator always assumes the bath
    fully rethermalizes each particle before it re-enters the zone."""

    full_thermalization: bool = True
    N_c: int | None = None
    N_h: int | None = None


class MachineKind(Enum):
    SIMULTANEOUS = "Simultaneous"
    TWO_STROKE = "TwoStroke"
    FOUR_STROKE = "FourStroke"
    SIX_STROKE_YOSHIDA = "SixStrokeYoshida"


class DephasingMode(Enum):
    NONE = "none"
    BETWEEN_STROKES = "between-strokes"
    CONTINUOUS = "continuous"


@dataclass(frozen=True)
class DephasingPolicy:
    """What to dephase and when during a cycle.

    `scope` is "full" (whole interaction zone) or "engine" (engine only).
    """

    mode: DephasingMode = DephasingMode.NONE
    n_slices: int = 1
    scope: str = "full"

    def __post_init__(self):
        if self.mode is DephasingMode.CONTINUOUS and self.n_slices < 1:
            raise ValueError("continuous dephasing needs n_slices >= 1")
        if self.scope not in ("full", "engine"):
            raise ValueError(f"unknown dephasing scope {self.scope!r}")

    @classmethod
    def none(cls) -> "DephasingPolicy":
        return cls()

    @classmethod
    def between_strokes(cls, scope: str = "full") -> "DephasingPolicy":
        return cls(mode=DephasingMode.BETWEEN_STROKES, scope=scope)

    @classmethod
    def continuous(cls, n_slices: int, scope: str = "full") -> "DephasingPolicy":
        return cls(mode=DephasingMode.CONTINUOUS, n_slices=n_slices, scope=scope)


@dataclass(frozen=True)
class MachineType:
    kind: MachineKind
    dephasing: DephasingPolicy = field(default_factory=DephasingPolicy)


def engine_hamiltonian(spec: EngineSpec) -> HermitianOperator:
    """diag(0, E_c, E_h) on the engine qutrit in level order."""
    return HermitianOperator(
        SubsystemLayout((3,)), np.diag([0.0, spec.E_c, spec.E_h]).astype(complex)
    )


def terminal_hamiltonian(gap: float) -> HermitianOperator:
    """diag(0, gap) for a terminal qubit."""
    return HermitianOperator(SubsystemLayout((2,)), np.diag([0.0, gap]).astype(complex))


def thermal_qubit(gap: float, temperature: float) -> DensityMatrix:
    """Gibbs state diag(1-p, p) with p = exp(-gap/T) / (1 + exp(-gap/T))."""
    if not temperature > 0.0:
        raise ValueError("temperature must be > 0 (math.inf allowed)")
    if math.isinf(temperature):
        p = 0.5
    else:
        x = math.exp(-gap / temperature)
        p = x / (1.0 + x)
    return DensityMatrix.from_diagonal((1.0 - p, p))


def battery_qubit(population: float) -> DensityMatrix:
    if not 0.0 <= population <= 1.0:
        raise ValueError("battery population must lie in [0, 1]")
    return DensityMatrix.from_diagonal((1.0 - population, population))


def interaction_hamiltonian(
    kind: str,
    eps: float,
    engine: EngineSpec,
    layout: SubsystemLayout | None = None,
    terminal_gap: float | None = None,
) -> HermitianOperator:
    """Energy-conserving exchange coupling between one engine manifold and
    its terminal qubit, embedded on the full interaction zone.

    The construction is checked against [H_ek, H_e + H_k] = 0; a nonzero
    commutator signals a gap mismatch between terminal and manifold.
    """
    if kind not in MANIFOLDS:
        raise ValueError(f"unknown terminal kind {kind!r}")
    if eps < 0.0:
        raise ValueError("coupling strength must be >= 0")
    if layout is None:
        layout = interaction_layout()
    site = TERMINAL_SITES[kind]
    if layout.dims[ENGINE_SITE] != 3 or layout.dims[site] != 2:
        raise ValueError(f"layout {layout} does not host a qutrit engine and qubit terminal")
    lower, upper = MANIFOLDS[kind]
    raise_e = np.zeros((3, 3))
    raise_e[upper, lower] = 1.0
    lower_k = np.array([[0.0, 1.0], [0.0, 0.0]])  # |g><e|
    pair = eps * (np.kron(raise_e, lower_k) + np.kron(raise_e.T, lower_k.T))
    h_int = embed(
        HermitianOperator(SubsystemLayout((3, 2)), pair), (ENGINE_SITE, site), layout
    )
    gap = engine.manifold_gap(kind) if terminal_gap is None else terminal_gap
    h_bare = (
        embed(engine_hamiltonian(engine), (ENGINE_SITE,), layout)
        + embed(terminal_hamiltonian(gap), (site,), layout)
    )
    comm = h_int.data @ h_bare.data - h_bare.data @ h_int.data
    dev = float(np.abs(comm).max())
    if dev > COMMUTATOR_TOL:
        raise ValueError(
            f"coupling does not conserve bare energy (commutator {dev:.3e}); "
            f"terminal gap {gap} vs manifold gap {engine.manifold_gap(kind)}"
        )
    return h_int


@dataclass(frozen=True)
class Stroke:
    """One stroke of the cycle: a constant generator applied for a duration."""

    label: str
    generator: HermitianOperator
    duration: float
    unitary: UnitaryOperator

    @classmethod
    def make(cls, label: str, generator: HermitianOperator, duration: float) -> "Stroke":
        return cls(label, generator, duration, evolve(generator, duration))


def _coupling_terms(
    engine: EngineSpec, couplings: CouplingSpec, layout: SubsystemLayout
) -> dict[str, HermitianOperator]:
    return {
        kind: interaction_hamiltonian(kind, couplings.eps(kind), engine, layout)
        for kind in ("cold", "hot", "work")
    }


def _strang_cell(h: dict[str, HermitianOperator], t: float) -> list[Stroke]:
    thermal = h["cold"] + h["hot"]
    return [
        Stroke.make("work/2", h["work"], t / 2.0),
        Stroke.make("thermal", thermal, t),
        Stroke.make("work/2", h["work"], t / 2.0),
    ]


def stroke_schedule(
    kind: MachineKind,
    engine: EngineSpec,
    couplings: CouplingSpec,
    layout: SubsystemLayout | None = None,
) -> list[Stroke]:
    """Ordered stroke factors of one cycle (first element acts first).

    Exposed individually so a dephasing step can be interleaved between
    them; their product is the cycle operator.
    """
    if layout is None:
        layout = interaction_layout()
    h = _coupling_terms(engine, couplings, layout)
    tau = couplings.tau_cyc
    if kind is MachineKind.SIMULTANEOUS:
        return [Stroke.make("simultaneous", h["cold"] + h["hot"] + h["work"], tau)]
    if kind is MachineKind.TWO_STROKE:
        return _strang_cell(h, tau)
    if kind is MachineKind.FOUR_STROKE:
        return [
            Stroke.make("hot/2", h["hot"], tau / 2.0),
            Stroke.make("work/2", h["work"], tau / 2.0),
            Stroke.make("cold", h["cold"], tau),
            Stroke.make("work/2", h["work"], tau / 2.0),
            Stroke.make("hot/2", h["hot"], tau / 2.0),
        ]
    if kind is MachineKind.SIX_STROKE_YOSHIDA:
        x0, x1 = yoshida_coefficients()
        return (
            _strang_cell(h, x1 * tau)
            + _strang_cell(h, x0 * tau)
            + _strang_cell(h, x1 * tau)
        )
    raise ValueError(f"unknown machine kind {kind!r}")


def cycle_operator(
    kind: MachineKind,
    engine: EngineSpec,
    couplings: CouplingSpec,
    layout: SubsystemLayout | None = None,
) -> UnitaryOperator:
    """Product of the stroke factors over one cycle."""
    if layout is None:
        layout = interaction_layout()
    u = np.eye(layout.total_dim, dtype=complex)
    for stroke in stroke_schedule(kind, engine, couplings, layout):
        u = stroke.unitary.data @ u
    return UnitaryOperator(layout, u)


def yoshida_coefficients() -> tuple[float, float]:
    """Fourth-order composition coefficients (x0, x1).

    Defined by x0 + 2 x1 = 1 and x0^3 + 2 x1^3 = 0, i.e.
    x1 = 1/(2 - 2^(1/3)), x0 = -2^(1/3) x1; both conditions are verified.
    """
    cbrt2 = 2.0 ** (1.0 / 3.0)
    x1 = 1.0 / (2.0 - cbrt2)
    x0 = -cbrt2 * x1
    if abs(x0 + 2.0 * x1 - 1.0) > 1e-12 or abs(x0**3 + 2.0 * x1**3) > 1e-12:
        raise AssertionError("composition coefficients violate their defining conditions")
    return x0, x1


def engine_action(couplings: CouplingSpec) -> float:
    """s = (eps_c + eps_h + eps_w) * tau_cyc.

    Each exchange coupling has spectral norm equal to its strength, so the
    sum of norms times the cycle time reduces to this closed form.
    """
    return (couplings.eps_c + couplings.eps_h + couplings.eps_w) * couplings.tau_cyc


@dataclass(frozen=True)
class MachineSpec:
    """Full machine: engine, terminals, couplings and stroke schedule type."""

    engine: EngineSpec
    cold: TerminalSpec
    hot: TerminalSpec
    battery: TerminalSpec
    couplings: CouplingSpec
    machine_type: MachineType

    def __post_init__(self):
        for spec, kind in ((self.cold, "cold"), (self.hot, "hot"), (self.battery, "work")):
            if spec.kind != kind:
                raise ValueError(f"terminal {spec} is not of kind {kind!r}")
            want = self.engine.manifold_gap(kind)
            if not math.isclose(spec.gap, want, rel_tol=1e-12, abs_tol=0.0):
                raise ValueError(
                    f"{kind} terminal gap {spec.gap} != engine manifold gap {want}"
                )
        if self.battery.qutrit_populations is not None:
            raise ValueError("the cycle simulator drives qubit batteries only")

    @classmethod
    def build(
        cls,
        engine: EngineSpec,
        T_c: float,
        T_h: float,
        p_w: float,
        couplings: CouplingSpec,
        machine_type: MachineType | MachineKind,
    ) -> "MachineSpec":
        if isinstance(machine_type, MachineKind):
            machine_type = MachineType(machine_type)
        return cls(
            engine=engine,
            cold=TerminalSpec.thermal("cold", engine.E_c, T_c),
            hot=TerminalSpec.thermal("hot", engine.E_h, T_h),
            battery=TerminalSpec.battery(engine.E_w, p_w),
            couplings=couplings,
            machine_type=machine_type,
        )

    @property
    def layout(self) -> SubsystemLayout:
        return interaction_layout()

    @property
    def action(self) -> float:
        return engine_action(self.couplings)

    def with_tau(self, tau_cyc: float) -> "MachineSpec":
        return replace(self, couplings=replace(self.couplings, tau_cyc=tau_cyc))

    def with_battery_population(self, p_w: float) -> "MachineSpec":
        return replace(self, battery=TerminalSpec.battery(self.engine.E_w, p_w))

    def with_machine_type(self, machine_type: MachineType | MachineKind) -> "MachineSpec":
        if isinstance(machine_type, MachineKind):
            machine_type = MachineType(machine_type)
        return replace(self, machine_type=machine_type)

    def fresh_terminals(self) -> tuple[DensityMatrix, DensityMatrix, DensityMatrix]:
        """New uncorrelated terminal particles, one of each, for one cycle."""
        return (
            self.cold.initial_state(),
            self.hot.initial_state(),
            self.battery.initial_state(),
        )

    def strokes(self) -> list[Stroke]:
        return _strokes_cached(
            self.machine_type.kind, self.engine, self.couplings
        )

    def bare_hamiltonians(self) -> dict[str, HermitianOperator]:
        return _bare_hamiltonians_cached(self.engine)

    def cycle_unitary(self) -> UnitaryOperator:
        return cycle_operator(self.machine_type.kind, self.engine, self.couplings)


@lru_cache(maxsize=256)
def _strokes_cached(
    kind: MachineKind, engine: EngineSpec, couplings: CouplingSpec
) -> list[Stroke]:
    return stroke_schedule(kind, engine, couplings)


@lru_cache(maxsize=64)
def _bare_hamiltonians_cached(engine: EngineSpec) -> dict[str, HermitianOperator]:
    layout = interaction_layout()
    h = {
        "engine": embed(engine_hamiltonian(engine), (ENGINE_SITE,), layout),
        "cold": embed(terminal_hamiltonian(engine.E_c), (COLD_SITE,), layout),
        "hot": embed(terminal_hamiltonian(engine.E_h), (HOT_SITE,), layout),
        "work": embed(terminal_hamiltonian(engine.E_w), (WORK_SITE,), layout),
    }
    h["total"] = h["engine"] + h["cold"] + h["hot"] + h["work"]
    return h
