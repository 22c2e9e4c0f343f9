"""Shared fixtures and independent oracles for the test suite.

The oracles here deliberately avoid the library's own code paths: partial
traces by explicit index summation, entropies by the scalar formula, and
convergence orders by plain least squares on logs.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from qhx.machine import CouplingSpec, EngineSpec, MachineKind, MachineSpec


def ptrace_oracle(rho: np.ndarray, dims, keep) -> np.ndarray:
    """Partial trace by explicit loop-based index summation."""
    dims = tuple(dims)
    keep = tuple(sorted(keep))
    drop = tuple(i for i in range(len(dims)) if i not in keep)
    dk = int(np.prod([dims[i] for i in keep]))
    out = np.zeros((dk, dk), dtype=complex)
    shape = dims + dims

    def flat(idx):
        val = 0
        for i, d in zip(idx, dims):
            val = val * d + i
        return val

    t = rho.reshape(shape)
    for row in np.ndindex(*[dims[i] for i in keep]):
        for col in np.ndindex(*[dims[i] for i in keep]):
            total = 0.0 + 0.0j
            for tr in np.ndindex(*[dims[i] for i in drop]) if drop else [()]:
                left = [0] * len(dims)
                right = [0] * len(dims)
                for pos, i in enumerate(keep):
                    left[i] = row[pos]
                    right[i] = col[pos]
                for pos, i in enumerate(drop):
                    left[i] = tr[pos]
                    right[i] = tr[pos]
                total += t[tuple(left) + tuple(right)]
            r = flat([row[list(keep).index(i)] for i in keep])
            c = flat([col[list(keep).index(i)] for i in keep])
            out[r, c] = total
    return out


def shannon_oracle(probs) -> float:
    """Scalar -sum p ln p with 0 ln 0 := 0."""
    return float(sum(-p * math.log(p) for p in probs if p > 0.0))


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def random_density(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Random full-rank state from a Ginibre matrix."""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260810)


@pytest.fixture
def demo_engine() -> EngineSpec:
    return EngineSpec(1.0, 4.0)


def demo_machine(
    kind: MachineKind = MachineKind.SIMULTANEOUS,
    s: float = 0.15,
    p_w: float = 0.5,
    T_c: float = 1.0,
    T_h: float = 20.0,
    machine_type=None,
) -> MachineSpec:
    """Engine-regime machine used across the suite (tau set from s)."""
    engine = EngineSpec(1.0, 4.0)
    couplings = CouplingSpec(1.0, 1.0, 1.0, s / 3.0)
    return MachineSpec.build(engine, T_c, T_h, p_w, couplings, machine_type or kind)
