"""Acceptance criteria, one test per criterion, each at its stated tolerance.

Run with `pytest -s tests/test_acceptance.py -v` to see one pass/fail line
per criterion; the assertions enforce the same conditions either way.
"""

import json
import math

import numpy as np
import pytest

from qhx.battery import (
    EnginePopulations,
    charging_purifying_window,
    entropy_preserving_pw,
    full_swap,
    full_swap_unitary,
    qutrit_battery_swap,
    zero_energy_pw,
)
from qhx.cli import EXIT_OK, main
from qhx.core import DensityMatrix, SubsystemLayout, apply, embed, expectation
from qhx.cycles import find_limit_cycle, run_cycle, run_n_cycles
from qhx.experiments import (
    SweepParams,
    deviation_order,
    operator_error_order,
    quantum_signature,
    sweep_action,
    zeno_series,
)
from qhx.machine import (
    CouplingSpec,
    DephasingPolicy,
    EngineSpec,
    MachineKind,
    MachineSpec,
    cycle_operator,
    engine_hamiltonian,
    terminal_hamiltonian,
    thermal_qubit,
)

from conftest import loglog_slope, random_density

PARAMS = SweepParams()
STRANG = (MachineKind.TWO_STROKE, MachineKind.FOUR_STROKE)


def report(number: int, description: str, ok: bool) -> None:
    print(f"criterion {number:02d} [{'PASS' if ok else 'FAIL'}] {description}")
    assert ok, f"acceptance criterion {number} failed: {description}"


def random_machine(rng) -> tuple[EngineSpec, CouplingSpec]:
    e_c = rng.uniform(0.5, 2.0)
    engine = EngineSpec(e_c, e_c + rng.uniform(0.5, 3.0))
    couplings = CouplingSpec(
        rng.uniform(0.0, 1.5), rng.uniform(0.0, 1.5), rng.uniform(0.0, 1.5),
        rng.uniform(0.01, 1.0),
    )
    return engine, couplings


def embedded_total_hamiltonian(engine: EngineSpec):
    layout = SubsystemLayout((3, 2, 2, 2))
    total = embed(engine_hamiltonian(engine), (0,), layout)
    for site, gap in ((1, engine.E_c), (2, engine.E_h), (3, engine.E_w)):
        total = total + embed(terminal_hamiltonian(gap), (site,), layout)
    return total


def test_criterion_01_energy_conservation():
    rng = np.random.default_rng(due := 1)
    worst = 0.0
    for _ in range(20):
        engine, couplings = random_machine(rng)
        h_total = embedded_total_hamiltonian(engine)
        rho = DensityMatrix(SubsystemLayout((3, 2, 2, 2)), random_density(rng, 24))
        for kind in MachineKind:
            u = cycle_operator(kind, engine, couplings)
            drift = expectation(apply(u, rho), h_total) - expectation(rho, h_total)
            worst = max(worst, abs(drift))
    report(1, f"energy conservation over 20 random points (worst drift {worst:.2e} < 1e-10)", worst < 1e-10)


def test_criterion_02_first_law_closure():
    rng = np.random.default_rng(2)
    worst = 0.0
    for kind in MachineKind:
        for _ in range(3):
            s = rng.uniform(0.05, 0.4)
            p_w = rng.uniform(0.1, 0.9)
            spec = MachineSpec.build(
                EngineSpec(1.0, 4.0), 1.0, 20.0, p_w, CouplingSpec(1.0, 1.0, 1.0, s / 3.0), kind
            )
            start = DensityMatrix.from_diagonal([0.5, 0.3, 0.2], SubsystemLayout((3,)))
            for point in run_n_cycles(start, spec, 10):  # transient
                worst = max(worst, abs(point.ledger.closure))
            steady = find_limit_cycle(spec).ledger  # steady
            worst = max(worst, abs(steady.closure))
    report(2, f"first-law closure transient+steady (worst {worst:.2e} < 1e-10)", worst < 1e-10)


def test_criterion_03_operator_splitting_orders():
    window = (1e-3, 1e-1)
    fits = {
        MachineKind.TWO_STROKE: operator_error_order(MachineKind.TWO_STROKE, PARAMS, window=window),
        MachineKind.FOUR_STROKE: operator_error_order(MachineKind.FOUR_STROKE, PARAMS, window=window),
        MachineKind.SIX_STROKE_YOSHIDA: operator_error_order(
            MachineKind.SIX_STROKE_YOSHIDA, PARAMS, window=window, n_points=16
        ),
    }
    ok = (
        fits[MachineKind.TWO_STROKE].within(3.0, 0.2)
        and fits[MachineKind.FOUR_STROKE].within(3.0, 0.2)
        and fits[MachineKind.SIX_STROKE_YOSHIDA].within(5.0, 0.3)
    )
    slopes = {k.value: round(f.slope, 3) for k, f in fits.items()}
    report(3, f"operator-splitting orders {slopes} (3.0+-0.2, 3.0+-0.2, 5.0+-0.3)", ok)


def test_criterion_04_thermodynamic_equivalence_orders():
    results = {}
    ok = True
    for kind in STRANG:
        orders = deviation_order(kind, params=PARAMS, window=(1e-3, 1e-1))
        ok = ok and orders.work.within(4.0, 0.3) and orders.state.within(4.0, 0.3)
        results[kind.value] = (round(orders.work.slope, 3), round(orders.state.slope, 3))
    yoshida = deviation_order(
        MachineKind.SIX_STROKE_YOSHIDA, params=PARAMS, window=(1e-2, 3e-1)
    )
    # the higher-order machine deviates at least quartically in state
    ok = ok and yoshida.work.within(6.0, 0.5) and yoshida.state.slope >= 4.0 - 0.3
    results["SixStrokeYoshida"] = (round(yoshida.work.slope, 3), round(yoshida.state.slope, 3))
    report(4, f"equivalence orders (work, state) {results}", ok)


def test_criterion_05_small_action_power_law():
    rows = sweep_action([MachineKind.SIMULTANEOUS], np.geomspace(3e-3, 3e-2, 8), PARAMS).rows
    slope = loglog_slope([r.tau_cyc for r in rows], [r.P for r in rows])
    report(5, f"steady power vs cycle time slope {slope:.3f} (1.0+-0.1 for s <= 0.03)", abs(slope - 1.0) <= 0.1)


def test_criterion_06_quantum_signature():
    separations = {}
    ok = True
    for kind in STRANG:
        point = quantum_signature(kind, 0.3, PARAMS)
        separations[kind.value] = point.separation
        ok = ok and point.separation > 1e-6
    series = zeno_series(0.3, (4, 8, 16, 32, 64), PARAMS)
    powers = [p for _, p in series]
    coherent = quantum_signature(
        MachineKind.SIMULTANEOUS, 0.3, PARAMS, DephasingPolicy.continuous(64)
    )
    monotone = all(b < a for a, b in zip(powers, powers[1:]))
    suppressed = coherent.P_dephased < 0.1 * coherent.P_coherent
    ok = ok and monotone and suppressed
    report(
        6,
        "dephasing separations "
        + str({k: f"{v:.1e}" for k, v in separations.items()})
        + f", Zeno monotone={monotone}, P(64)/P={coherent.P_dephased / coherent.P_coherent:.3f}",
        ok,
    )


def test_criterion_07_battery_formulas():
    # window boundary formulas evaluated at the example populations as given
    raw = (0.056, 0.074, 0.4)
    window_raw = charging_purifying_window(raw)
    formulas_ok = (
        abs(window_raw.p_lo - 0.568182) < 1e-6 and abs(window_raw.p_hi - 0.843882) < 1e-6
    )
    # state-level checks run at the normalized completion of those
    # populations (work manifold (b, c) as given, the rest on level 1)
    pops = EnginePopulations(0.526, 0.074, 0.4)
    window = charging_purifying_window(pops)
    interior = np.linspace(window.p_lo, window.p_hi, 1202)[1:-1]
    signs_ok = all(
        (rep := full_swap(pops, float(p))).dE_w > 0.0 and rep.dS_w < 0.0 for p in interior
    )
    boundary_ok = abs(full_swap(pops, window.p_lo).dS_w) < 1e-12
    dual_route_ok = True
    for p in (0.1, window.p_lo, 0.5, window.p_hi, 0.9):
        closed = full_swap(pops, p)
        _, unitary = full_swap_unitary(pops, p)
        dual_route_ok = dual_route_ok and (
            np.abs(np.array(closed.rho_e_out) - np.array(unitary.rho_e_out)).max() < 1e-10
            and np.abs(np.array(closed.rho_w_out) - np.array(unitary.rho_w_out)).max() < 1e-10
        )
    ok = formulas_ok and signs_ok and boundary_ok and dual_route_ok
    report(
        7,
        f"battery window ({window_raw.p_lo:.6f}, {window_raw.p_hi:.6f}), "
        f"{len(interior)} interior points charge+purify, |dS_w(left)|<1e-12, closed form = unitary",
        ok,
    )


def test_criterion_08_qutrit_battery():
    rep = qutrit_battery_swap(EnginePopulations(0.526, 0.074, 0.4))
    report(8, f"qutrit battery post-swap mutual information {rep.I_ew:.2e} < 1e-12", rep.I_ew < 1e-12)


def test_criterion_09_global_gibbs_fixed_point():
    engine = EngineSpec(1.0, 4.0)
    temperature = 2.5
    p_w = thermal_qubit(engine.E_w, temperature).populations[1]
    weights = np.exp(-np.array([0.0, engine.E_c, engine.E_h]) / temperature)
    rho_e = DensityMatrix.from_diagonal(weights / weights.sum(), SubsystemLayout((3,)))
    worst_drift, worst_energy = 0.0, 0.0
    for kind in MachineKind:
        spec = MachineSpec.build(
            engine, temperature, temperature, p_w, CouplingSpec(1.0, 1.0, 1.0, 0.2), kind
        )
        rho_tot = np.kron(
            rho_e.data,
            np.kron(
                np.kron(spec.cold.initial_state().data, spec.hot.initial_state().data),
                spec.battery.initial_state().data,
            ),
        )
        u = spec.cycle_unitary()
        drift = np.abs(u.data @ rho_tot @ u.data.conj().T - rho_tot).max()
        worst_drift = max(worst_drift, drift)
        _, led = run_cycle(rho_e, spec)
        worst_energy = max(worst_energy, *(abs(x) for x in (led.Q_c, led.Q_h, led.dE_w, led.dE_e)))
    ok = worst_drift <= 1e-10 and worst_energy <= 1e-10
    report(
        9,
        f"global Gibbs invariance (drift {worst_drift:.2e}, ledger {worst_energy:.2e} <= 1e-10)",
        ok,
    )


def test_criterion_10_cli_determinism(tmp_path):
    config = {
        "engine": {"E_c": 1.0, "E_h": 4.0},
        "terminals": {"T_c": 1.0, "T_h": 20.0, "battery": {"mode": "entropy_preserving"}},
        "couplings": {"eps_c": 1.0, "eps_h": 1.0, "eps_w": 1.0, "tau_cyc": 0.05},
        "machine": {"types": ["Simultaneous", "TwoStroke", "FourStroke"]},
        "experiment": {"name": "sweep_power", "grid": {"min": 0.005, "max": 0.05, "n_points": 5}},
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config))
    outs = []
    for name in ("run1", "run2"):
        out = tmp_path / name
        assert main(["sweep-power", "--config", str(cfg_path), "--out", str(out)]) == EXIT_OK
        outs.append(out)
    identical = all(
        (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
        for f in ("sweep.csv", "normalized.csv")
    )
    report(10, "repeated identical CLI runs produce byte-identical data files", identical)
