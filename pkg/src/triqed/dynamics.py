"""Time evolution: deterministic master-equation integrators and the
stochastic wave-function unraveling.

Three routes compute the same open-system dynamics:

* :func:`lindblad_exact` integrates the full 512-dim master equation with a
  fixed-step RK4 scheme (the reference oracle for everything else),
* :func:`triqed.factorized.factorized_evolution` exploits that the generator
  never couples the three channels (see that module),
* :func:`mcwf_trajectory` / :func:`mcwf_ensemble` unravel the dissipation
  into quantum jump trajectories.

The drive switch at tau_off makes the generator piecewise constant, so all
integrators split their stepping exactly at tau_off and at every requested
sample time; steps never straddle a boundary.

Determinism contract for the stochastic path: trajectory i of an ensemble
is driven by ``numpy.random.PCG64(base_seed + i)`` and consumes exactly two
uniforms per time step (jump test, then channel selection) after one
optional initial uniform used to draw the starting branch of a mixed input.
Results are bit-identical for a given (grid, params, seed) regardless of
batch chunking or worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .model import (
    InputStateSpec,
    ModelParams,
    collapse_operators,
    collapse_rates,
    effective_hamiltonian,
    initial_state,
    kind_excitation_counts,
    site_occupation_bits,
)
from .tensor import DensityMatrix, HilbertSpace, SiteKind, StateVector

__all__ = [
    "TimeGrid",
    "SystemOperators",
    "IntegrationError",
    "build_system",
    "integrate_master",
    "lindblad_exact",
    "mcwf_trajectory",
    "mcwf_ensemble",
    "mcwf_reduced_ensemble",
    "TrajectoryEnsembleResult",
    "McwfReducedResult",
]

TRACE_DRIFT_LIMIT = 1e-6
_BOUNDARY_MERGE_TOL = 1e-12


class IntegrationError(RuntimeError):
    """Raised when an integration run violates its own sanity checks."""


@dataclass(frozen=True)
class TimeGrid:
    """Integration window, step size and output sample times.

    sample_times must lie inside [tau_start, tau_end]; they need not be
    uniformly spaced.  The integrators insert every sample time (and the
    drive switch) as an exact stepping boundary, shrinking the local step
    below dt where needed, so recorded states carry no interpolation error.
    """

    tau_start: float = 0.0
    tau_end: float = 12.0
    dt: float = 1e-3
    sample_times: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.tau_end > self.tau_start:
            raise ValueError("tau_end must exceed tau_start")
        samples = tuple(float(t) for t in self.sample_times)
        if any(
            t < self.tau_start - _BOUNDARY_MERGE_TOL or t > self.tau_end + _BOUNDARY_MERGE_TOL
            for t in samples
        ):
            raise ValueError("sample times must lie within [tau_start, tau_end]")
        if list(samples) != sorted(set(samples)):
            raise ValueError("sample times must be strictly increasing")
        object.__setattr__(self, "sample_times", samples)

    @classmethod
    def uniform(
        cls,
        tau_end: float,
        sample_dt: float,
        dt: float = 1e-3,
        tau_start: float = 0.0,
    ) -> "TimeGrid":
        """Samples every sample_dt from tau_start to tau_end inclusive."""
        n = int(math.floor((tau_end - tau_start) / sample_dt + 1e-9))
        samples = tau_start + sample_dt * np.arange(n + 1)
        samples = samples[samples <= tau_end + 1e-12]
        return cls(tau_start, tau_end, dt, tuple(np.minimum(samples, tau_end)))

    def n_steps(self, tau_off: float | None = None) -> int:
        return sum(seg[2] for seg in _segments(self, tau_off))


def _segments(grid: TimeGrid, tau_off: float | None):
    """Split [tau_start, tau_end] at samples and the drive switch.

    Yields (a, b, n_sub, drive_on, sample_key) where sample_key is the
    original sample time landing at b (or None).
    """
    points = [grid.tau_start, grid.tau_end]
    points.extend(grid.sample_times)
    if tau_off is not None and grid.tau_start < tau_off < grid.tau_end:
        points.append(tau_off)
    points = sorted(points)
    merged = [points[0]]
    for p in points[1:]:
        if p - merged[-1] > _BOUNDARY_MERGE_TOL:
            merged.append(p)
    samples = np.asarray(grid.sample_times)

    def key_for(b):
        if samples.size == 0:
            return None
        i = int(np.searchsorted(samples, b))
        for j in (i - 1, i):
            if 0 <= j < samples.size and abs(samples[j] - b) <= _BOUNDARY_MERGE_TOL:
                return grid.sample_times[j]
        return None

    out = []
    for a, b in zip(merged[:-1], merged[1:]):
        n_sub = max(1, int(math.ceil((b - a) / grid.dt - 1e-9)))
        drive_on = tau_off is None or (0.5 * (a + b)) < tau_off
        out.append((a, b, n_sub, drive_on, key_for(b)))
    return out


@dataclass(frozen=True)
class SystemOperators:
    """Operator bundle an integrator can run on.

    For the standard nine-qubit model, jump_sites/jump_rates describe the
    collapse operators as scaled single-site lowerings, which unlocks the
    fused integration kernels.  A bundle built by hand (any Hilbert space,
    any operators whose C^dagger C is diagonal) runs through slower generic
    paths; tests use that for small analytic systems.
    """

    space: HilbertSpace
    h_eff_on: np.ndarray
    h_eff_off: np.ndarray
    tau_off: float | None
    collapse: tuple[np.ndarray, ...]
    jump_sites: tuple[int, ...] | None = None
    jump_rates: tuple[float, ...] | None = None

    def phase_hamiltonian(self, drive_on: bool) -> np.ndarray:
        return self.h_eff_on if drive_on else self.h_eff_off


def build_system(params: ModelParams, space: HilbertSpace | None = None) -> SystemOperators:
    """Assemble the standard model's operator bundle."""
    if space is None:
        space = HilbertSpace.nine_qubits()
    h_on = effective_hamiltonian(params, space, drive_on=True).matrix
    h_off = effective_hamiltonian(params, space, drive_on=False).matrix
    cops = tuple(op.matrix for op in collapse_operators(params, space))
    return SystemOperators(
        space=space,
        h_eff_on=h_on,
        h_eff_off=h_off,
        tau_off=params.tau_off,
        collapse=cops,
        jump_sites=(3, 4, 5, 6, 7, 8),
        jump_rates=tuple(collapse_rates(params)),
    )


def _jump_tables(space: HilbertSpace, sites: Sequence[int]):
    """Index tables mapping excited sub-blocks onto de-excited ones."""
    idx = np.arange(space.total_dim)
    j0 = []
    j1 = []
    for s in sites:
        shift = int(math.log2(space.dim_after(s)))
        ones = idx[(idx >> shift) & 1 == 1]
        j1.append(ones)
        j0.append(ones - (1 << shift))
    return np.array(j0, dtype=np.int64), np.array(j1, dtype=np.int64)


def _csr_parts(h_eff: np.ndarray):
    m = sp.csr_array(-1j * h_eff)
    m.sum_duplicates()
    return (m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data)


def _as_rho_array(state, space: HilbertSpace) -> np.ndarray:
    if isinstance(state, StateVector):
        return np.outer(state.amplitudes, state.amplitudes.conj())
    if isinstance(state, DensityMatrix):
        return state.matrix.copy()
    arr = np.asarray(state, dtype=np.complex128)
    if arr.ndim == 1:
        return np.outer(arr, arr.conj())
    return DensityMatrix(space, arr).matrix.copy()  # validates shape/hermiticity/trace


def _rhs_dense(rho: np.ndarray, h_eff: np.ndarray, collapse: Sequence[np.ndarray]) -> np.ndarray:
    """Plain dense master-equation RHS, used on small hand-built systems."""
    g = -1j * (h_eff @ rho)
    out = g + g.conj().T
    for c in collapse:
        out += c @ rho @ c.conj().T
    return out


def integrate_master(
    rho0,
    system: SystemOperators,
    grid: TimeGrid,
    observer: Callable[[float, np.ndarray], object] | None = None,
) -> dict[float, object]:
    """Fixed-step RK4 integration of the master equation for one bundle.

    Returns {sample_time: DensityMatrix}, or {sample_time: observer(tau,
    rho)} when an observer is supplied (the observer gets a read-only view
    and must copy whatever it wants to keep).  Raises IntegrationError if
    the trace drifts by more than 1e-6 at any sample.
    """
    space = system.space
    d = space.total_dim
    rho = _as_rho_array(rho0, space)
    fast = system.jump_sites is not None and _kernels.HAVE_NUMBA

    results: dict[float, object] = {}

    def record(key, mat):
        mat = 0.5 * (mat + mat.conj().T)
        drift = abs(np.trace(mat).real - 1.0)
        if drift > TRACE_DRIFT_LIMIT:
            raise IntegrationError(f"trace drifted by {drift:.3e} at tau = {key}")
        if observer is not None:
            view = mat.view()
            view.flags.writeable = False
            results[key] = observer(key, view)
        else:
            results[key] = DensityMatrix(space, mat, validate=False)

    for t in grid.sample_times:
        if abs(t - grid.tau_start) <= _BOUNDARY_MERGE_TOL:
            record(t, rho.copy())

    if fast:
        j0, j1 = _jump_tables(space, system.jump_sites)
        rates = np.asarray(system.jump_rates, dtype=np.float64)
        parts = {True: _csr_parts(system.h_eff_on), False: _csr_parts(system.h_eff_off)}
        bufs = {k: np.empty((d, d), dtype=np.complex128) for k in ("t1", "t2", "acc", "G", "R")}
        for a, b, n_sub, drive_on, sample_key in _segments(grid, system.tau_off):
            h = (b - a) / n_sub
            for _ in range(n_sub):
                new = _kernels.rk4_lindblad_step(
                    parts[drive_on], rho, h, bufs, j0, j1, rates
                )
                bufs["acc"] = rho
                rho = new
            if sample_key is not None:
                record(sample_key, rho.copy())
    else:
        for a, b, n_sub, drive_on, sample_key in _segments(grid, system.tau_off):
            h = (b - a) / n_sub
            h_eff = system.phase_hamiltonian(drive_on)
            for _ in range(n_sub):
                k1 = _rhs_dense(rho, h_eff, system.collapse)
                k2 = _rhs_dense(rho + 0.5 * h * k1, h_eff, system.collapse)
                k3 = _rhs_dense(rho + 0.5 * h * k2, h_eff, system.collapse)
                k4 = _rhs_dense(rho + h * k3, h_eff, system.collapse)
                rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if sample_key is not None:
                record(sample_key, rho.copy())
    return results


def lindblad_exact(
    rho0,
    params: ModelParams,
    grid: TimeGrid,
    observer: Callable[[float, np.ndarray], object] | None = None,
) -> dict[float, object]:
    """Full-space RK4 solution of the nine-qubit master equation."""
    return integrate_master(rho0, build_system(params), grid, observer)


# ---------------------------------------------------------------------------
# stochastic unraveling


@dataclass(frozen=True)
class TrajectoryEnsembleResult:
    """Trajectory-averaged state and simple per-observable error bars.

    std_error_estimates maps an observable name (n_f, n_c, p_e as per-kind
    channel means, plus atoms_ghz_overlap / atoms_w_overlap projector
    expectations) to {sample_time: standard error of the ensemble mean}.
    """

    sample_times: tuple[float, ...]
    rho_at: dict[float, DensityMatrix]
    n_trajectories: int
    std_error_estimates: dict[str, dict[float, float]]


class _McwfMachine:
    """Shared per-run tables for the jump unraveling of one system."""

    def __init__(self, system: SystemOperators, grid: TimeGrid):
        self.system = system
        self.space = system.space
        self.d = system.space.total_dim
        self.segments = _segments(grid, system.tau_off)
        self.n_steps = sum(s[2] for s in self.segments)
        self.grid = grid
        self.h_mi = {
            True: sp.csr_array(-1j * system.h_eff_on),
            False: sp.csr_array(-1j * system.h_eff_off),
        }
        # Weight matrix of the diagonal of C^dagger C per collapse operator.
        weights = []
        self.jump_apply = []
        for k, c in enumerate(system.collapse):
            cdc = c.conj().T @ c
            off = cdc - np.diag(np.diag(cdc))
            if np.abs(off).max() > 1e-12:
                raise ValueError("jump unraveling requires diagonal C^dagger C")
            weights.append(np.real(np.diag(cdc)))
            self.jump_apply.append(sp.csr_array(c))
        self.weights = np.array(weights)
        if system.jump_sites is not None:
            self.tables = _jump_tables(self.space, system.jump_sites)
        else:
            self.tables = None
        max_rate = self.weights.sum(axis=0).max(initial=0.0)
        if grid.dt * max_rate >= 0.1:
            raise ValueError(
                f"dt * max total jump rate = {grid.dt * max_rate:.3f} too large "
                "for the first-order jump test (must stay below 0.1)"
            )

    def run_chunk(
        self,
        psi0: np.ndarray,
        seeds: Sequence[int],
        mixed_branches: tuple[np.ndarray, np.ndarray] | None,
        on_sample: Callable[[float, np.ndarray], None],
    ) -> None:
        """Evolve one batch of trajectories (columns of psi0), in place.

        psi0 may be a single column that is broadcast.  mixed_branches, when
        given, is a triple (p, branch_one, branch_zero) of a probability and
        two pure state vectors; psi0 must then be None, and each trajectory
        first draws one uniform u and starts in branch_one if u < p.
        """
        n = len(seeds)
        gens = [np.random.Generator(np.random.PCG64(s)) for s in seeds]
        if mixed_branches is not None:
            p, b1, b0 = mixed_branches
            cols = []
            for g in gens:
                cols.append(b1 if g.random() < p else b0)
            psi = np.array(cols, dtype=np.complex128).T.copy()
        else:
            psi = np.tile(psi0[:, None], (1, n)).astype(np.complex128)
        uniforms = np.empty((n, self.n_steps, 2))
        for i, g in enumerate(gens):
            uniforms[i] = g.random((self.n_steps, 2))

        step_index = 0
        if any(abs(t - self.grid.tau_start) <= _BOUNDARY_MERGE_TOL for t in self.grid.sample_times):
            key = [t for t in self.grid.sample_times
                   if abs(t - self.grid.tau_start) <= _BOUNDARY_MERGE_TOL][0]
            on_sample(key, psi)
        for a, b, n_sub, drive_on, sample_key in self.segments:
            h = (b - a) / n_sub
            h_mi = self.h_mi[drive_on]
            for _ in range(n_sub):
                u = uniforms[:, step_index, :]
                step_index += 1
                rates = self.weights @ (psi.real**2 + psi.imag**2)  # (n_ops, n)
                total = rates.sum(axis=0)
                jumped = u[:, 0] < h * total
                cols = np.nonzero(jumped)[0]
                if cols.size:
                    cum = np.cumsum(rates[:, cols], axis=0)
                    pick = (cum / cum[-1, :] < u[cols, 1][None, :]).sum(axis=0)
                    for c_i, k in zip(cols, pick):
                        newcol = self.jump_apply[int(k)] @ psi[:, c_i]
                        nrm = np.linalg.norm(newcol)
                        if nrm == 0.0:
                            raise IntegrationError("jump applied to a dark state")
                        psi[:, c_i] = newcol / nrm
                keep = np.nonzero(~jumped)[0]
                if keep.size:
                    sub = psi[:, keep]
                    k1 = h_mi @ sub
                    k2 = h_mi @ (sub + 0.5 * h * k1)
                    k3 = h_mi @ (sub + 0.5 * h * k2)
                    k4 = h_mi @ (sub + h * k3)
                    sub = sub + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                    nrm = np.sqrt(np.einsum("ij,ij->j", sub.real, sub.real)
                                  + np.einsum("ij,ij->j", sub.imag, sub.imag))
                    psi[:, keep] = sub / nrm[None, :]
            if sample_key is not None:
                on_sample(sample_key, psi)


def _chunk_ranges(n_traj: int, n_steps: int) -> list[tuple[int, int]]:
    """Split trajectories so one chunk's working set stays cache-friendly.

    The split depends only on (n_traj, n_steps), so ensemble reductions sum
    in a reproducible order no matter how chunks are distributed.
    """
    per_traj_bytes = 16 * n_steps
    chunk = max(1, min(n_traj, int(48e6 // max(per_traj_bytes, 1))))
    chunk = min(chunk, 64)
    out = []
    lo = 0
    while lo < n_traj:
        hi = min(n_traj, lo + chunk)
        out.append((lo, hi))
        lo = hi
    return out


def mcwf_trajectory(
    psi0: Union[StateVector, np.ndarray],
    params: ModelParams,
    grid: TimeGrid,
    seed: int,
) -> dict[float, StateVector]:
    """A single quantum-jump trajectory, recorded at the sample times."""
    system = build_system(params)
    machine = _McwfMachine(system, grid)
    vec = psi0.amplitudes if isinstance(psi0, StateVector) else np.asarray(psi0, np.complex128)
    out: dict[float, StateVector] = {}

    def on_sample(key, psi):
        out[key] = StateVector(machine.space, psi[:, 0].copy(), validate=False)

    machine.run_chunk(vec, [seed], None, on_sample)
    return out


def _ensemble_accumulate(machine: _McwfMachine, psi0_or_mix, seeds, collect_full: bool):
    """Run chunks of trajectories, accumulating rho and observable sums."""
    space = machine.space
    samples = machine.grid.sample_times
    counts = kind_excitation_counts(space)
    kind_masks = {
        "n_f": counts[SiteKind.FIELD].astype(np.float64) / 3.0,
        "n_c": counts[SiteKind.CAVITY].astype(np.float64) / 3.0,
        "p_e": counts[SiteKind.ATOM].astype(np.float64) / 3.0,
    }
    from .model import InputStateSpec as _Spec  # local to avoid cycle confusion

    ghz8 = _Spec.ghz().field_amplitudes()
    w8 = _Spec.w().field_amplitudes()

    rho_sums = {t: np.zeros((space.total_dim, space.total_dim), np.complex128) for t in samples} \
        if collect_full else None
    obs_names = ["n_f", "n_c", "p_e", "atoms_ghz_overlap", "atoms_w_overlap"]
    sums = {name: {t: 0.0 for t in samples} for name in obs_names}
    sqs = {name: {t: 0.0 for t in samples} for name in obs_names}
    reduced_sums = {
        t: {
            "atoms": np.zeros((8, 8), np.complex128),
            "cavities": np.zeros((8, 8), np.complex128),
            "fields": np.zeros((8, 8), np.complex128),
            "ca": np.zeros((4, 4), np.complex128),
            "fa": np.zeros((4, 4), np.complex128),
            "fc": np.zeros((4, 4), np.complex128),
        }
        for t in samples
    }

    def on_sample(key, psi):
        if collect_full:
            rho_sums[key] += psi @ psi.conj().T
        v3 = psi.reshape(8, 8, 8, -1)
        reduced_sums[key]["fields"] += np.einsum("fca t,gca t->fg", v3, v3.conj(), optimize=True)
        reduced_sums[key]["cavities"] += np.einsum("fca t,fda t->cd", v3, v3.conj(), optimize=True)
        reduced_sums[key]["atoms"] += np.einsum("fca t,fcb t->ab", v3, v3.conj(), optimize=True)
        # Channel-A cross-kind pairs: split each composite index into its
        # leading (channel A) bit and trailing (B, C) bits.
        v6 = psi.reshape(2, 4, 2, 4, 2, 4, -1)
        reduced_sums[key]["ca"] += np.einsum(
            "fxcyazt,fxdybzt->cadb", v6, v6.conj(), optimize=True).reshape(4, 4)
        reduced_sums[key]["fa"] += np.einsum(
            "fxcyazt,gxcybzt->fagb", v6, v6.conj(), optimize=True).reshape(4, 4)
        reduced_sums[key]["fc"] += np.einsum(
            "fxcyazt,gxdyazt->fcgd", v6, v6.conj(), optimize=True).reshape(4, 4)
        probs = psi.real**2 + psi.imag**2
        for name, mask in kind_masks.items():
            vals = mask @ probs
            sums[name][key] += vals.sum()
            sqs[name][key] += (vals**2).sum()
        for name, target in (("atoms_ghz_overlap", ghz8), ("atoms_w_overlap", w8)):
            t_amp = np.einsum("a,fcat->fct", target.conj(), v3, optimize=True)
            vals = (t_amp.real**2 + t_amp.imag**2).sum(axis=(0, 1))
            sums[name][key] += vals.sum()
            sqs[name][key] += (vals**2).sum()

    for lo, hi in _chunk_ranges(len(seeds), machine.n_steps):
        chunk_seeds = seeds[lo:hi]
        if isinstance(psi0_or_mix, tuple):
            machine.run_chunk(None, chunk_seeds, psi0_or_mix, on_sample)
        else:
            machine.run_chunk(psi0_or_mix, chunk_seeds, None, on_sample)
    return rho_sums, reduced_sums, sums, sqs, obs_names


def mcwf_ensemble(
    spec_or_state,
    params: ModelParams,
    grid: TimeGrid,
    n_traj: int = 2000,
    base_seed: int = 0,
    workers: int = 1,
) -> TrajectoryEnsembleResult:
    """Trajectory-averaged density matrices at the grid's sample times.

    Accepts an InputStateSpec (mixed inputs draw their starting branch per
    trajectory) or an explicit pure state.  Memory scales with the number
    of sample times (one 512x512 matrix each); keep sample sets modest and
    use the scenario runner for dense observable traces.
    """
    if n_traj < 1:
        raise ValueError("need at least one trajectory")
    system = build_system(params)
    machine = _McwfMachine(system, grid)
    psi0_or_mix = _resolve_mcwf_input(spec_or_state, machine.space)
    seeds = [base_seed + i for i in range(n_traj)]

    if workers > 1:
        pieces = _run_parallel(params, grid, spec_or_state, seeds, workers, collect_full=True)
        rho_sums, reduced_sums, sums, sqs, obs_names = pieces
    else:
        rho_sums, reduced_sums, sums, sqs, obs_names = _ensemble_accumulate(
            machine, psi0_or_mix, seeds, collect_full=True
        )

    rho_at = {}
    for t in grid.sample_times:
        mat = rho_sums[t] / n_traj
        mat = 0.5 * (mat + mat.conj().T)
        rho_at[t] = DensityMatrix(machine.space, mat, validate=False)
    errors = _standard_errors(sums, sqs, obs_names, grid.sample_times, n_traj)
    return TrajectoryEnsembleResult(
        sample_times=grid.sample_times,
        rho_at=rho_at,
        n_trajectories=n_traj,
        std_error_estimates=errors,
    )


@dataclass(frozen=True)
class McwfReducedResult:
    """Trajectory-averaged small subsystems, without the full matrices.

    reduced_at[tau] holds Hermitian-symmetrized 8x8 marginals under keys
    "atoms", "cavities", "fields" and 4x4 channel-A pair marginals under
    "ca", "fa", "fc".  Error bars follow TrajectoryEnsembleResult.
    """

    sample_times: tuple[float, ...]
    reduced_at: dict[float, dict[str, np.ndarray]]
    n_trajectories: int
    std_error_estimates: dict[str, dict[float, float]]


def mcwf_reduced_ensemble(
    spec_or_state,
    params: ModelParams,
    grid: TimeGrid,
    n_traj: int = 2000,
    base_seed: int = 0,
    workers: int = 1,
) -> McwfReducedResult:
    """Like :func:`mcwf_ensemble` but keeps only subsystem marginals.

    Memory and accumulation cost per sample drop from the full 512x512
    matrix to a handful of 8x8 and 4x4 blocks, so dense observable traces
    over long grids stay cheap.  Averages are bit-identical to partial
    traces of the full-ensemble average for the same (n_traj, base_seed).
    """
    if n_traj < 1:
        raise ValueError("need at least one trajectory")
    system = build_system(params)
    machine = _McwfMachine(system, grid)
    psi0_or_mix = _resolve_mcwf_input(spec_or_state, machine.space)
    seeds = [base_seed + i for i in range(n_traj)]

    if workers > 1:
        pieces = _run_parallel(params, grid, spec_or_state, seeds, workers, collect_full=False)
        _, reduced_sums, sums, sqs, obs_names = pieces
    else:
        _, reduced_sums, sums, sqs, obs_names = _ensemble_accumulate(
            machine, psi0_or_mix, seeds, collect_full=False
        )

    reduced_at: dict[float, dict[str, np.ndarray]] = {}
    for t in grid.sample_times:
        per_t = {}
        for k, mat in reduced_sums[t].items():
            avg = mat / n_traj
            per_t[k] = 0.5 * (avg + avg.conj().T)
        reduced_at[t] = per_t
    errors = _standard_errors(sums, sqs, obs_names, grid.sample_times, n_traj)
    return McwfReducedResult(
        sample_times=grid.sample_times,
        reduced_at=reduced_at,
        n_trajectories=n_traj,
        std_error_estimates=errors,
    )


def _standard_errors(sums, sqs, obs_names, samples, n_traj):
    errors: dict[str, dict[float, float]] = {}
    for name in obs_names:
        per_t = {}
        for t in samples:
            mean = sums[name][t] / n_traj
            var = max(sqs[name][t] / n_traj - mean**2, 0.0)
            per_t[t] = math.sqrt(var / n_traj)
        errors[name] = per_t
    return errors


def _resolve_mcwf_input(spec_or_state, space: HilbertSpace):
    """Normalize ensemble input to a pure column or a mixed-branch tuple."""
    if isinstance(spec_or_state, InputStateSpec):
        if spec_or_state.is_pure:
            return initial_state(
                spec_or_state if spec_or_state.variant != "mixed"
                else (InputStateSpec.ghz() if spec_or_state.p == 1.0 else InputStateSpec.w()),
                space,
            ).amplitudes
        b1 = initial_state(InputStateSpec.ghz(), space).amplitudes
        b0 = initial_state(InputStateSpec.w(), space).amplitudes
        return (spec_or_state.p, b1, b0)
    if isinstance(spec_or_state, StateVector):
        return spec_or_state.amplitudes
    arr = np.asarray(spec_or_state, dtype=np.complex128)
    if arr.ndim != 1:
        raise ValueError("ensemble input must be a pure state or an InputStateSpec")
    return arr


def _mcwf_worker(args):
    params, grid, spec_or_state, seeds, collect_full = args
    system = build_system(params)
    machine = _McwfMachine(system, grid)
    psi0_or_mix = _resolve_mcwf_input(spec_or_state, machine.space)
    return _ensemble_accumulate(machine, psi0_or_mix, seeds, collect_full)


def _run_parallel(params, grid, spec_or_state, seeds, workers, collect_full):
    """Distribute trajectory chunks over processes; reduce in chunk order."""
    system = build_system(params)
    machine = _McwfMachine(system, grid)
    ranges = _chunk_ranges(len(seeds), machine.n_steps)
    jobs = [(params, grid, spec_or_state, seeds[lo:hi], collect_full) for lo, hi in ranges]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_mcwf_worker, jobs))
    rho_sums, reduced_sums, sums, sqs, obs_names = parts[0]
    for piece in parts[1:]:
        p_rho, p_red, p_sums, p_sqs, _ = piece
        for t in grid.sample_times:
            if collect_full:
                rho_sums[t] += p_rho[t]
            for k in reduced_sums[t]:
                reduced_sums[t][k] += p_red[t][k]
            for name in obs_names:
                sums[name][t] += p_sums[name][t]
                sqs[name][t] += p_sqs[name][t]
    return rho_sums, reduced_sums, sums, sqs, obs_names
