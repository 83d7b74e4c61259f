"""Model operators and input states for the three-channel transfer chain.

Each channel J couples a field qubit to a cavity mode (strength g_c, the
classical drive leg) and the cavity mode to a two-level atom (strength g_a).
Time is measured in units of 1/g_a throughout, so every operator here is
dimensionless: the atom-cavity coupling has coefficient 1 and the drive leg
carries g_c/g_a.  The drive is switched off at tau_off, after which each
channel reduces to a resonant Jaynes-Cummings pair.

Dissipation enters through six collapse operators, one cavity leak and one
atomic decay per channel, with dimensionless rates k_tilde and gamma_tilde.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .tensor import (
    Channel,
    DensityMatrix,
    HilbertSpace,
    OperatorMatrix,
    SiteIndex,
    SiteKind,
    StateVector,
    embed_product,
)

__all__ = [
    "TAU_OFF_DEFAULT",
    "ModelParams",
    "InputStateSpec",
    "lowering_op",
    "raising_op",
    "number_op",
    "interaction_hamiltonian",
    "collapse_operators",
    "collapse_rates",
    "effective_hamiltonian",
    "initial_state",
    "local_phase_rotation",
    "kind_excitation_counts",
    "site_occupation_bits",
]

TAU_OFF_DEFAULT = math.pi / math.sqrt(2.0)

_LOWER = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=np.complex128)
_NUMBER = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=np.complex128)


def lowering_op() -> np.ndarray:
    """|0><1| on a single qubit site."""
    return _LOWER.copy()


def raising_op() -> np.ndarray:
    return _LOWER.conj().T.copy()


def number_op() -> np.ndarray:
    return _NUMBER.copy()


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters, all in units of the atom-cavity coupling g_a.

    Attributes
    ----------
    g_a:
        Atom-cavity coupling. Sets the time unit; must be positive.  Kept
        explicit so g_c can be quoted as a ratio against it.
    g_c:
        Field-cavity (drive) coupling while the drive is on.
    k_tilde:
        Cavity leak rate k/g_a.
    gamma_tilde:
        Atomic decay rate gamma/g_a.
    tau_off:
        Dimensionless time at which the drive leg switches off.
    """

    g_a: float = 1.0
    g_c: float = 1.0
    k_tilde: float = 0.0
    gamma_tilde: float = 0.0
    tau_off: float = TAU_OFF_DEFAULT

    def __post_init__(self):
        if not self.g_a > 0:
            raise ValueError("g_a must be positive")
        if self.g_c < 0:
            raise ValueError("g_c must be non-negative")
        if self.k_tilde < 0 or self.gamma_tilde < 0:
            raise ValueError("decay rates must be non-negative")
        if not self.tau_off > 0:
            raise ValueError("tau_off must be positive")

    @property
    def drive_ratio(self) -> float:
        return self.g_c / self.g_a


_VARIANTS = ("w", "ghz", "mixed", "custom")


@dataclass(frozen=True)
class InputStateSpec:
    """Declarative description of the initial field-register state.

    The three cavities always start in vacuum and the three atoms in their
    ground state; only the field triple (f_A, f_B, f_C) is prepared.

    variant is one of "w", "ghz", "mixed" (p |GHZ><GHZ| + (1-p) |W><W|), or
    "custom" (an arbitrary normalized amplitude vector over the 8-dim field
    basis, ordered |f_A f_B f_C>).
    """

    variant: str
    p: float | None = None
    amplitudes: tuple[complex, ...] | None = None

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown input variant {self.variant!r}")
        if self.variant == "mixed":
            if self.p is None or not 0.0 <= self.p <= 1.0:
                raise ValueError("mixed input needs p in [0, 1]")
        elif self.p is not None:
            raise ValueError("p only applies to the mixed variant")
        if self.variant == "custom":
            if self.amplitudes is None or len(self.amplitudes) != 8:
                raise ValueError("custom input needs 8 field amplitudes")
            amps = tuple(complex(a) for a in self.amplitudes)
            nrm = math.sqrt(sum(abs(a) ** 2 for a in amps))
            if abs(nrm - 1.0) > 1e-8:
                raise ValueError(f"custom amplitudes not normalized (|v| = {nrm!r})")
            object.__setattr__(self, "amplitudes", amps)
        elif self.amplitudes is not None:
            raise ValueError("amplitudes only apply to the custom variant")

    @classmethod
    def w(cls) -> "InputStateSpec":
        return cls("w")

    @classmethod
    def ghz(cls) -> "InputStateSpec":
        return cls("ghz")

    @classmethod
    def mixed(cls, p: float) -> "InputStateSpec":
        return cls("mixed", p=float(p))

    @classmethod
    def custom(cls, amplitudes) -> "InputStateSpec":
        return cls("custom", amplitudes=tuple(amplitudes))

    @property
    def is_pure(self) -> bool:
        return self.variant != "mixed" or self.p in (0.0, 1.0)

    def field_amplitudes(self) -> np.ndarray:
        """The 8 field-basis amplitudes of a pure input."""
        if self.variant == "w":
            amps = np.zeros(8, dtype=np.complex128)
            amps[[1, 2, 4]] = 1.0 / math.sqrt(3.0)
            return amps
        if self.variant == "ghz":
            amps = np.zeros(8, dtype=np.complex128)
            amps[[0, 7]] = 1.0 / math.sqrt(2.0)
            return amps
        if self.variant == "custom":
            return np.array(self.amplitudes, dtype=np.complex128)
        if self.p == 1.0:
            return InputStateSpec.ghz().field_amplitudes()
        if self.p == 0.0:
            return InputStateSpec.w().field_amplitudes()
        raise ValueError("mixed input with 0 < p < 1 has no amplitude vector")

    def branches(self) -> list[tuple[float, "InputStateSpec"]]:
        """Convex decomposition into pure inputs with their weights."""
        if self.variant == "mixed" and not self.is_pure:
            return [(self.p, InputStateSpec.ghz()), (1.0 - self.p, InputStateSpec.w())]
        return [(1.0, self)]


def _channel_sites(j: int) -> tuple[int, int, int]:
    """(field, cavity, atom) canonical positions of channel j."""
    ch = Channel(j)
    return (
        SiteIndex(SiteKind.FIELD, ch).position,
        SiteIndex(SiteKind.CAVITY, ch).position,
        SiteIndex(SiteKind.ATOM, ch).position,
    )


def interaction_hamiltonian(
    params: ModelParams, space: HilbertSpace | None = None, drive_on: bool = True
) -> OperatorMatrix:
    """Dimensionless interaction Hamiltonian (units of g_a).

    Per channel:  (c sigma^+ + c^+ sigma) + i (g_c/g_a) (c f^+ - c^+ f),
    with the drive term present only while drive_on.
    """
    if space is None:
        space = HilbertSpace.nine_qubits()
    d = space.total_dim
    h = np.zeros((d, d), dtype=np.complex128)
    low = lowering_op()
    high = raising_op()
    gc = params.drive_ratio
    for j in range(3):
        f, c, a = _channel_sites(j)
        term = embed_product({c: low, a: high}, space)
        h += term + term.conj().T
        if drive_on and gc != 0.0:
            drive = embed_product({c: low, f: high}, space)
            h += 1j * gc * (drive - drive.conj().T)
    return OperatorMatrix(space, h)


def collapse_operators(
    params: ModelParams, space: HilbertSpace | None = None
) -> list[OperatorMatrix]:
    """The six collapse operators, in fixed (c_A, c_B, c_C, a_A, a_B, a_C) order.

    Cavity leaks carry sqrt(k_tilde), atomic decays sqrt(gamma_tilde).  The
    list always has six entries; zero-rate entries are zero matrices.
    """
    if space is None:
        space = HilbertSpace.nine_qubits()
    low = lowering_op()
    ops = []
    for j in range(3):
        _, c, _ = _channel_sites(j)
        ops.append(OperatorMatrix(space, math.sqrt(params.k_tilde) * embed_product({c: low}, space)))
    for j in range(3):
        _, _, a = _channel_sites(j)
        ops.append(
            OperatorMatrix(space, math.sqrt(params.gamma_tilde) * embed_product({a: low}, space))
        )
    return ops


def collapse_rates(params: ModelParams) -> np.ndarray:
    """Rates paired with :func:`collapse_operators` (k, k, k, gamma, gamma, gamma)."""
    return np.array([params.k_tilde] * 3 + [params.gamma_tilde] * 3, dtype=np.float64)


def kind_excitation_counts(space: HilbertSpace | None = None) -> dict[SiteKind, np.ndarray]:
    """Per-basis-state excitation counts, split by site kind.

    Returns integer arrays of length total_dim counting set occupation bits
    over the field triple, the cavity triple and the atom triple.
    """
    if space is None:
        space = HilbertSpace.nine_qubits()
    if space.local_dims != (2,) * 9:
        raise ValueError("kind split defined on the nine-qubit space only")
    idx = np.arange(space.total_dim)
    out = {}
    for kind in SiteKind:
        total = np.zeros(space.total_dim, dtype=np.int64)
        for ch in Channel:
            pos = SiteIndex(kind, ch).position
            total += (idx >> (8 - pos)) & 1
        out[kind] = total
    return out


def site_occupation_bits(space: HilbertSpace, site: int) -> np.ndarray:
    """Occupation (0 or 1) of a qubit site for every basis index."""
    if space.local_dims[site] != 2:
        raise ValueError("occupation bits defined for qubit sites")
    shift = int(math.log2(space.dim_after(site)))
    return (np.arange(space.total_dim) >> shift) & 1


def effective_hamiltonian(
    params: ModelParams, space: HilbertSpace | None = None, drive_on: bool = True
) -> OperatorMatrix:
    """Non-Hermitian generator H - (i/2) sum_k C_k^+ C_k.

    The anti-Hermitian part is diagonal: each collapse operator is a single
    qubit lowering scaled by a square-rooted rate, so C^+C counts excited
    occupation, weighted k_tilde per cavity and gamma_tilde per atom.
    """
    if space is None:
        space = HilbertSpace.nine_qubits()
    h = interaction_hamiltonian(params, space, drive_on).matrix.copy()
    counts = kind_excitation_counts(space)
    decay_diag = (
        params.k_tilde * counts[SiteKind.CAVITY] + params.gamma_tilde * counts[SiteKind.ATOM]
    )
    h[np.diag_indices_from(h)] += -0.5j * decay_diag
    return OperatorMatrix(space, h)


def initial_state(
    spec: InputStateSpec, space: HilbertSpace | None = None
) -> Union[StateVector, DensityMatrix]:
    """Initial full-system state: prepared fields, cavity vacuum, ground atoms.

    Pure inputs (w, ghz, custom, and mixed with p in {0, 1}) come back as a
    StateVector; a strictly mixed input comes back as a DensityMatrix.
    """
    if space is None:
        space = HilbertSpace.nine_qubits()
    if space.local_dims != (2,) * 9:
        raise ValueError("initial states are defined on the nine-qubit space")
    if spec.is_pure:
        amps = spec.field_amplitudes()
        vec = np.zeros(space.total_dim, dtype=np.complex128)
        # Field sites occupy the three leading bits, so field index x maps
        # to full index x * 64 with cavities and atoms in vacuum/ground.
        vec[np.arange(8) * 64] = amps
        return StateVector(space, vec)
    parts = []
    for weight, branch in spec.branches():
        psi = initial_state(branch, space)
        parts.append(weight * np.outer(psi.amplitudes, psi.amplitudes.conj()))
    return DensityMatrix(space, parts[0] + parts[1])


def local_phase_rotation(phi: float, n_sites: int = 3) -> OperatorMatrix:
    """Uniform local phase e^{-i phi n} on each of ``n_sites`` qubits.

    Diagonal in the product basis with entry e^{-i phi (number of set
    bits)}.  Applied to a subsystem triple (atoms or cavities) it absorbs
    the deterministic phases picked up during transfer and oscillation.
    """
    space = HilbertSpace.qubits(n_sites)
    idx = np.arange(space.total_dim)
    counts = np.zeros(space.total_dim, dtype=np.int64)
    for s in range(n_sites):
        counts += (idx >> (n_sites - 1 - s)) & 1
    diag = np.exp(-1j * phi * counts)
    return OperatorMatrix(space, np.diag(diag))
