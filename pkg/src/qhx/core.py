"""Dense linear algebra for small composite quantum systems.

States and operators are numpy arrays wrapped together with a
:class:`SubsystemLayout` so that tensor embeddings, partial traces and
entropic functionals can do the index arithmetic in one place. All values
are validated at construction and immutable afterwards (the underlying
arrays are marked read-only), so they are safe to share across threads.

Units: hbar = k_B = 1; entropies are in nats.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "HERMITICITY_TOL",
    "TRACE_TOL",
    "EIGENVALUE_FLOOR",
    "UNITARITY_TOL",
    "IMAG_TOL",
    "SubsystemLayout",
    "HermitianOperator",
    "UnitaryOperator",
    "DensityMatrix",
    "tensor",
    "embed",
    "partial_trace",
    "evolve",
    "apply",
    "von_neumann_entropy",
    "mutual_information",
    "dephase",
    "spectral_norm",
    "expectation",
    "trace_norm",
]

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-12
# Eigenvalues of a state may dip this far below zero from solver noise;
# anything lower is a genuine invariant violation.
EIGENVALUE_FLOOR = -1e-10
UNITARITY_TOL = 1e-10
IMAG_TOL = 1e-10


class SubsystemLayout:
    """Ordered subsystem dimensions of a composite Hilbert space.

    The ordering is fixed for the lifetime of the layout; higher layers
    attach meaning to the indices (by convention index 0 is the engine).
    """

    __slots__ = ("_dims",)

    def __init__(self, dims: Iterable[int]):
        dims = tuple(int(d) for d in dims)
        if not dims:
            raise ValueError("layout needs at least one subsystem")
        if any(d < 2 for d in dims):
            raise ValueError(f"subsystem dimensions must be >= 2, got {dims}")
        self._dims = dims

    @property
    def dims(self) -> tuple[int, ...]:
        return self._dims

    @property
    def total_dim(self) -> int:
        return math.prod(self._dims)

    def __len__(self) -> int:
        return len(self._dims)

    def __eq__(self, other) -> bool:
        return isinstance(other, SubsystemLayout) and self._dims == other._dims

    def __hash__(self) -> int:
        return hash(("SubsystemLayout", self._dims))

    def __repr__(self) -> str:
        return f"SubsystemLayout({list(self._dims)})"

    def reduced(self, keep: Sequence[int]) -> "SubsystemLayout":
        return SubsystemLayout(self._dims[i] for i in keep)

    def validate_sites(self, sites: Sequence[int]) -> tuple[int, ...]:
        sites = tuple(int(s) for s in sites)
        if len(set(sites)) != len(sites):
            raise ValueError(f"duplicate subsystem index in {sites}")
        for s in sites:
            if not 0 <= s < len(self._dims):
                raise ValueError(f"subsystem index {s} out of range for {self}")
        return sites


def _square_complex(data, dim: int) -> np.ndarray:
    arr = np.array(data, dtype=complex)
    if arr.shape != (dim, dim):
        raise ValueError(f"expected a {dim}x{dim} matrix, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


class HermitianOperator:
    """Hermitian matrix over a subsystem layout (observable or generator)."""

    __slots__ = ("layout", "data")

    def __init__(self, layout: SubsystemLayout, data):
        arr = _square_complex(data, layout.total_dim)
        dev = float(np.abs(arr - arr.conj().T).max())
        if dev > HERMITICITY_TOL:
            raise ValueError(f"operator is not Hermitian (max deviation {dev:.3e})")
        self.layout = layout
        self.data = arr

    def __add__(self, other: "HermitianOperator") -> "HermitianOperator":
        if self.layout != other.layout:
            raise ValueError("layout mismatch in operator sum")
        return HermitianOperator(self.layout, self.data + other.data)

    def __repr__(self) -> str:
        return f"HermitianOperator(dim={self.layout.total_dim})"


class UnitaryOperator:
    """Unitary matrix over a subsystem layout."""

    __slots__ = ("layout", "data")

    def __init__(self, layout: SubsystemLayout, data):
        arr = _square_complex(data, layout.total_dim)
        dev = float(
            np.abs(arr.conj().T @ arr - np.eye(layout.total_dim)).max()
        )
        if dev > UNITARITY_TOL:
            raise ValueError(f"operator is not unitary (max deviation {dev:.3e})")
        self.layout = layout
        self.data = arr

    def __repr__(self) -> str:
        return f"UnitaryOperator(dim={self.layout.total_dim})"


class DensityMatrix:
    """Hermitian, PSD, unit-trace state over a subsystem layout."""

    __slots__ = ("layout", "data")

    def __init__(self, layout: SubsystemLayout, data):
        arr = _square_complex(data, layout.total_dim)
        dev = float(np.abs(arr - arr.conj().T).max())
        if dev > HERMITICITY_TOL:
            raise ValueError(f"state is not Hermitian (max deviation {dev:.3e})")
        tr = complex(np.trace(arr))
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"state trace deviates from 1 by {abs(tr - 1.0):.3e}")
        lo = float(np.linalg.eigvalsh(arr).min())
        if lo < EIGENVALUE_FLOOR:
            raise ValueError(f"state has eigenvalue {lo:.3e} below {EIGENVALUE_FLOOR}")
        self.layout = layout
        self.data = arr

    @classmethod
    def from_diagonal(cls, probs, layout: SubsystemLayout | None = None) -> "DensityMatrix":
        probs = np.asarray(probs, dtype=float)
        if layout is None:
            layout = SubsystemLayout((probs.size,))
        return cls(layout, np.diag(probs.astype(complex)))

    @property
    def populations(self) -> np.ndarray:
        return np.diag(self.data).real

    def __repr__(self) -> str:
        return f"DensityMatrix(dims={list(self.layout.dims)})"


def tensor(*states: DensityMatrix) -> DensityMatrix:
    """Tensor product of states, layouts concatenated in argument order."""
    if not states:
        raise ValueError("tensor() needs at least one factor")
    dims: list[int] = []
    data = np.array([[1.0 + 0.0j]])
    for st in states:
        dims.extend(st.layout.dims)
        data = np.kron(data, st.data)
    return DensityMatrix(SubsystemLayout(dims), data)


def _embed_array(op_data: np.ndarray, sites: tuple[int, ...], layout: SubsystemLayout) -> np.ndarray:
    dims = layout.dims
    n = len(dims)
    others = [i for i in range(n) if i not in sites]
    d_other = math.prod(dims[i] for i in others) if others else 1
    full = np.kron(op_data, np.eye(d_other))
    order = list(sites) + others  # subsystem owning each current axis
    cur = [dims[i] for i in order]
    t = full.reshape(*cur, *cur)
    inv = np.argsort(order)  # axis position of subsystem i
    t = np.transpose(t, [*inv, *(n + j for j in inv)])
    return np.ascontiguousarray(t.reshape(layout.total_dim, layout.total_dim))


def embed(op: HermitianOperator, sites, layout: SubsystemLayout) -> HermitianOperator:
    """Extend `op`, acting on the given subsystem indices, by identities.

    `sites` orders the subsystems the way `op`'s own index runs over them.
    """
    if isinstance(sites, int):
        sites = (sites,)
    sites = layout.validate_sites(sites)
    expected = math.prod(layout.dims[i] for i in sites)
    if op.layout.total_dim != expected:
        raise ValueError(
            f"operator dimension {op.layout.total_dim} does not match sites {sites} "
            f"(product {expected})"
        )
    return HermitianOperator(layout, _embed_array(op.data, sites, layout))


def _ptrace_array(data: np.ndarray, dims: tuple[int, ...], keep: tuple[int, ...]) -> np.ndarray:
    n = len(dims)
    drop = [i for i in range(n) if i not in keep]
    t = data.reshape(*dims, *dims)
    perm = list(keep) + drop
    t = np.transpose(t, [*perm, *(n + i for i in perm)])
    dk = math.prod(dims[i] for i in keep)
    dd = math.prod(dims[i] for i in drop) if drop else 1
    t = t.reshape(dk, dd, dk, dd)
    return np.trace(t, axis1=1, axis2=3)


def partial_trace(rho: DensityMatrix, keep) -> DensityMatrix:
    """Reduced state on the kept subsystems (ascending index order)."""
    if isinstance(keep, int):
        keep = (keep,)
    keep = tuple(sorted(rho.layout.validate_sites(keep)))
    if not keep:
        raise ValueError("keep set must be nonempty")
    reduced = _ptrace_array(rho.data, rho.layout.dims, keep)
    return DensityMatrix(rho.layout.reduced(keep), reduced)


def evolve(hamiltonian: HermitianOperator, duration: float) -> UnitaryOperator:
    """exp(-i H t) via eigendecomposition; exact unitarity up to solver error.

    Negative durations are allowed (interaction terms with opposite sign).
    """
    w, v = np.linalg.eigh(hamiltonian.data)
    u = (v * np.exp(-1j * w * float(duration))) @ v.conj().T
    return UnitaryOperator(hamiltonian.layout, u)


def apply(u: UnitaryOperator, rho: DensityMatrix) -> DensityMatrix:
    """U rho U^dagger."""
    if u.layout != rho.layout:
        raise ValueError("layout mismatch between unitary and state")
    return DensityMatrix(rho.layout, u.data @ rho.data @ u.data.conj().T)


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """-sum(lambda ln lambda) in nats, with 0 ln 0 := 0.

    Eigenvalues in [EIGENVALUE_FLOOR, 0) are clamped to zero; anything
    below the floor raises (invalid state).
    """
    evals = np.linalg.eigvalsh(rho.data)
    lo = float(evals.min())
    if lo < EIGENVALUE_FLOOR:
        raise ValueError(f"state has eigenvalue {lo:.3e} below {EIGENVALUE_FLOOR}")
    evals = np.clip(evals, 0.0, None)
    nz = evals[evals > 0.0]
    return float(-(nz * np.log(nz)).sum())


def mutual_information(rho: DensityMatrix, partition) -> float:
    """S(A) + S(B) - S(AB) for a bipartition covering all subsystems."""
    part_a, part_b = partition
    part_a = tuple(sorted(rho.layout.validate_sites(tuple(part_a))))
    part_b = tuple(sorted(rho.layout.validate_sites(tuple(part_b))))
    if set(part_a) & set(part_b):
        raise ValueError("partition blocks overlap")
    if set(part_a) | set(part_b) != set(range(len(rho.layout))):
        raise ValueError("partition does not cover all subsystems")
    s_a = von_neumann_entropy(partial_trace(rho, part_a))
    s_b = von_neumann_entropy(partial_trace(rho, part_b))
    return s_a + s_b - von_neumann_entropy(rho)


def dephase(rho: DensityMatrix) -> DensityMatrix:
    """Zero all off-diagonal elements in the product (computational) basis.

    This removes single-particle coherences and inter-particle coherences
    alike, including those between degenerate product states.
    """
    return DensityMatrix(rho.layout, np.diag(np.diag(rho.data)))


def spectral_norm(op: HermitianOperator) -> float:
    """Largest absolute eigenvalue."""
    return float(np.abs(np.linalg.eigvalsh(op.data)).max())


def expectation(rho: DensityMatrix, op: HermitianOperator) -> float:
    """tr(rho op); the imaginary part must be numerical noise."""
    if rho.layout != op.layout:
        raise ValueError("layout mismatch between state and operator")
    val = complex(np.trace(rho.data @ op.data))
    if abs(val.imag) > IMAG_TOL:
        raise ValueError(f"expectation value has imaginary part {val.imag:.3e}")
    return float(val.real)


def trace_norm(value) -> float:
    """Schatten 1-norm (sum of singular values) of a matrix or wrapper."""
    arr = getattr(value, "data", value)
    return float(np.linalg.svd(np.asarray(arr), compute_uv=False).sum())
