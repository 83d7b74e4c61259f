"""Tensor-product Hilbert space primitives for the nine-qubit chain.

The simulated system is a chain of three identical channels, each made of a
field qubit f_J, a cavity mode qubit c_J and a two-level atom a_J.  All sites
are two-dimensional (every excitation-number sector above one is frozen out
by excitation conservation per channel), so the full space is 2^9 = 512
dimensional.  Sites are kept in the fixed canonical order

    (f_A, f_B, f_C, c_A, c_B, c_C, a_A, a_B, a_C)

and every operator or state in this package refers to that ordering.  Basis
index i encodes site s in bit (n_sites - 1 - s) of i, matching repeated
numpy.kron over the site list.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

__all__ = [
    "SiteKind",
    "Channel",
    "SiteIndex",
    "HilbertSpace",
    "StateVector",
    "DensityMatrix",
    "OperatorMatrix",
    "embed",
    "embed_product",
    "partial_trace",
    "partial_transpose",
    "expectation",
    "dag",
    "kron_all",
    "basis_vector",
    "trace_distance",
]

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-8
NORM_TOL = 1e-10
PSD_TOL = -1e-8


class SiteKind(enum.Enum):
    """Physical role of a site within one channel."""

    FIELD = 0
    CAVITY = 1
    ATOM = 2


class Channel(enum.Enum):
    """Label of one of the three identical channels."""

    A = 0
    B = 1
    C = 2


@dataclass(frozen=True)
class SiteIndex:
    """Address of a single site as (kind, channel).

    The flat position groups sites by kind first, then by channel, so the
    three field qubits come first, then the cavities, then the atoms.
    """

    kind: SiteKind
    channel: Channel

    @property
    def position(self) -> int:
        return 3 * self.kind.value + self.channel.value


def _as_matrix(obj) -> np.ndarray:
    """Pull a bare ndarray out of the typed wrappers (or pass one through)."""
    if isinstance(obj, (DensityMatrix, OperatorMatrix)):
        return obj.matrix
    if isinstance(obj, StateVector):
        return obj.amplitudes
    return np.asarray(obj)


@dataclass(frozen=True)
class HilbertSpace:
    """A tensor product of finite local spaces.

    Parameters
    ----------
    local_dims:
        Dimension of each site, in canonical site order.
    """

    local_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.local_dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError("local_dims must be a non-empty tuple of positive ints")
        object.__setattr__(self, "local_dims", dims)

    @classmethod
    def nine_qubits(cls) -> "HilbertSpace":
        """The full (f_A..f_C, c_A..c_C, a_A..a_C) space, dimension 512."""
        return cls((2,) * 9)

    @classmethod
    def qubits(cls, n: int) -> "HilbertSpace":
        return cls((2,) * n)

    @property
    def n_sites(self) -> int:
        return len(self.local_dims)

    @property
    def total_dim(self) -> int:
        return math.prod(self.local_dims)

    def dim_before(self, site: int) -> int:
        return math.prod(self.local_dims[:site])

    def dim_after(self, site: int) -> int:
        return math.prod(self.local_dims[site + 1 :])


def _check_site_list(space: HilbertSpace, sites: Iterable[int]) -> tuple[int, ...]:
    out = tuple(int(s) for s in sites)
    for s in out:
        if not 0 <= s < space.n_sites:
            raise ValueError(f"site {s} outside space with {space.n_sites} sites")
    if len(set(out)) != len(out):
        raise ValueError("site list contains duplicates")
    return out


@dataclass(frozen=True)
class StateVector:
    """A pure state: complex amplitudes over the canonical product basis.

    Amplitudes are validated to be normalized unless ``validate=False``.
    """

    space: HilbertSpace
    amplitudes: np.ndarray
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        amp = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if amp.shape != (self.space.total_dim,):
            raise ValueError(
                f"amplitude shape {amp.shape} does not match dim {self.space.total_dim}"
            )
        if self.validate:
            nrm = np.linalg.norm(amp)
            if abs(nrm - 1.0) > 1e2 * NORM_TOL + 1e-9:
                raise ValueError(f"state not normalized: |psi| = {nrm!r}")
        amp.flags.writeable = False
        object.__setattr__(self, "amplitudes", amp)

    def density_matrix(self) -> "DensityMatrix":
        return DensityMatrix(self.space, np.outer(self.amplitudes, self.amplitudes.conj()),
                             validate=False)


@dataclass(frozen=True)
class DensityMatrix:
    """A density operator on a HilbertSpace.

    Hermiticity and unit trace are validated on construction by default.
    Positivity is not checked here (it needs a full eigendecomposition);
    call :meth:`check_positive` where that guarantee matters.
    """

    space: HilbertSpace
    matrix: np.ndarray
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        mat = np.ascontiguousarray(self.matrix, dtype=np.complex128)
        d = self.space.total_dim
        if mat.shape != (d, d):
            raise ValueError(f"matrix shape {mat.shape} does not match dim {d}")
        if self.validate:
            herm_err = np.abs(mat - mat.conj().T).max()
            if herm_err > 1e2 * HERMITICITY_TOL:
                raise ValueError(f"matrix not Hermitian (max asymmetry {herm_err:.3e})")
            tr_err = abs(mat.trace() - 1.0)
            if tr_err > 1e2 * TRACE_TOL:
                raise ValueError(f"trace differs from 1 by {tr_err:.3e}")
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)

    def check_positive(self, tol: float = PSD_TOL) -> None:
        """Raise if any eigenvalue lies below ``tol`` (a small negative number)."""
        w = np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))
        if w.min() < tol:
            raise ValueError(f"density matrix has eigenvalue {w.min():.3e} below {tol:.1e}")

    def purity(self) -> float:
        m = self.matrix
        return float(np.real(np.einsum("ij,ji->", m, m)))


@dataclass(frozen=True)
class OperatorMatrix:
    """A general linear operator on a HilbertSpace (no structural constraints)."""

    space: HilbertSpace
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.ascontiguousarray(self.matrix, dtype=np.complex128)
        d = self.space.total_dim
        if mat.shape != (d, d):
            raise ValueError(f"matrix shape {mat.shape} does not match dim {d}")
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)


def dag(op: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return np.conj(np.asarray(op)).T


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    """Kronecker product of a sequence, left to right."""
    out = np.asarray(mats[0])
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def basis_vector(space: HilbertSpace, occupations: Sequence[int]) -> np.ndarray:
    """Product basis vector |n_0 n_1 ... n_{k-1}> as a flat array."""
    if len(occupations) != space.n_sites:
        raise ValueError("one occupation number per site required")
    idx = 0
    for n, d in zip(occupations, space.local_dims):
        if not 0 <= n < d:
            raise ValueError(f"occupation {n} outside local dimension {d}")
        idx = idx * d + n
    vec = np.zeros(space.total_dim, dtype=np.complex128)
    vec[idx] = 1.0
    return vec


def embed(local_op: np.ndarray, site: int, space: HilbertSpace) -> np.ndarray:
    """Lift a single-site operator to the full space.

    Returns identity everywhere except ``site``, where ``local_op`` acts.
    """
    local_op = np.asarray(local_op, dtype=np.complex128)
    d_s = space.local_dims[site]
    if local_op.shape != (d_s, d_s):
        raise ValueError(f"operator shape {local_op.shape} does not fit site dim {d_s}")
    before = space.dim_before(site)
    after = space.dim_after(site)
    out = np.kron(np.kron(np.eye(before), local_op), np.eye(after))
    return out.astype(np.complex128)


def embed_product(ops_by_site: dict[int, np.ndarray], space: HilbertSpace) -> np.ndarray:
    """Lift a product of single-site operators acting on distinct sites.

    Equivalent to multiplying the individual embeddings; built directly as
    one Kronecker product to avoid full-dimension matmuls.
    """
    mats = []
    for s in range(space.n_sites):
        if s in ops_by_site:
            op = np.asarray(ops_by_site[s], dtype=np.complex128)
            d_s = space.local_dims[s]
            if op.shape != (d_s, d_s):
                raise ValueError(f"operator shape {op.shape} does not fit site dim {d_s}")
            mats.append(op)
        else:
            mats.append(np.eye(space.local_dims[s], dtype=np.complex128))
    return kron_all(mats)


def partial_trace(
    rho: Union[DensityMatrix, np.ndarray],
    keep: Iterable[int],
    space: HilbertSpace | None = None,
) -> DensityMatrix:
    """Trace out all sites not listed in ``keep``.

    The reduced matrix lives on the kept sites in canonical (ascending)
    order regardless of the order of ``keep``.
    """
    if isinstance(rho, DensityMatrix):
        space = rho.space
    if space is None:
        raise ValueError("space required when rho is a bare array")
    mat = _as_matrix(rho)
    keep_t = tuple(sorted(_check_site_list(space, keep)))
    dims = space.local_dims
    n = space.n_sites
    tensor = mat.reshape(dims + dims)
    # Contract row index against column index for every traced site.
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    if 2 * n > len(letters):
        raise ValueError("too many sites for einsum labels")
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for s in range(n):
        if s not in keep_t:
            col[s] = row[s]
    out_sub = "".join(row[s] for s in keep_t) + "".join(col[s] for s in keep_t)
    reduced = np.einsum("".join(row) + "".join(col) + "->" + out_sub, tensor, optimize=True)
    sub_space = HilbertSpace(tuple(dims[s] for s in keep_t))
    d_red = sub_space.total_dim
    return DensityMatrix(sub_space, reduced.reshape(d_red, d_red), validate=False)


def partial_transpose(
    rho: Union[DensityMatrix, OperatorMatrix, np.ndarray],
    sites: Iterable[int],
    space: HilbertSpace | None = None,
) -> OperatorMatrix:
    """Transpose the row/column indices of the listed sites only."""
    if isinstance(rho, (DensityMatrix, OperatorMatrix)):
        space = rho.space
    if space is None:
        raise ValueError("space required when rho is a bare array")
    mat = _as_matrix(rho)
    sites_t = _check_site_list(space, sites)
    dims = space.local_dims
    n = space.n_sites
    tensor = mat.reshape(dims + dims)
    axes = list(range(2 * n))
    for s in sites_t:
        axes[s], axes[n + s] = axes[n + s], axes[s]
    d = space.total_dim
    return OperatorMatrix(space, tensor.transpose(axes).reshape(d, d))


def expectation(op: Union[OperatorMatrix, np.ndarray], state) -> complex:
    """<op> in a pure or mixed state.

    Accepts a StateVector, DensityMatrix, or bare arrays of matching shape.
    """
    op_m = _as_matrix(op)
    if isinstance(state, StateVector) or (
        not isinstance(state, DensityMatrix) and np.asarray(state).ndim == 1
    ):
        psi = _as_matrix(state)
        return complex(np.vdot(psi, op_m @ psi))
    rho = _as_matrix(state)
    return complex(np.einsum("ij,ji->", op_m, rho))


def trace_distance(a, b) -> float:
    """Half the trace norm of the difference of two density operators."""
    diff = _as_matrix(a) - _as_matrix(b)
    diff = 0.5 * (diff + diff.conj().T)
    w = np.linalg.eigvalsh(diff)
    return float(0.5 * np.abs(w).sum())
