"""Session fixtures: the handful of expensive reference evolutions.

Exact 512-dim integrations and trajectory ensembles dominate the suite's
runtime, so each distinct run happens once per session and every test
reads from the shared result.  Deterministic grids use dt = 2e-3; the
RK4 global error at that step is orders of magnitude below every
tolerance asserted against these fixtures.
"""

import time

import numpy as np
import pytest

from triqed.dynamics import TimeGrid, lindblad_exact, mcwf_ensemble
from triqed.factorized import factorized_evolution
from triqed.model import InputStateSpec, ModelParams, TAU_OFF_DEFAULT, initial_state
from triqed.tensor import trace_distance

TAU_OFF = TAU_OFF_DEFAULT

# Transient probes, the first two atomic peak times, mid-cycle points and
# one quarter/half period after shutdown.
LOSSLESS_SAMPLES = (
    0.0,
    0.45,
    1.1,
    TAU_OFF / 2.0,
    TAU_OFF,
    TAU_OFF + 0.45,
    TAU_OFF + 0.9,
    TAU_OFF + np.pi / 2.0,
    TAU_OFF + np.pi,
)

DISSIPATIVE_PARAMS = ModelParams(k_tilde=0.1, gamma_tilde=0.05)
DISSIPATIVE_SAMPLES = tuple(np.linspace(0.0, 4.4, 12)) + (TAU_OFF,)


def _lossless_grid():
    return TimeGrid(
        tau_end=TAU_OFF + np.pi + 1e-3,
        dt=2e-3,
        sample_times=tuple(sorted(LOSSLESS_SAMPLES)),
    )


@pytest.fixture(scope="session")
def w_lossless_exact():
    """Exact lossless evolution of the W input, {tau: DensityMatrix}."""
    return lindblad_exact(initial_state(InputStateSpec.w()), ModelParams(), _lossless_grid())


@pytest.fixture(scope="session")
def ghz_lossless_exact():
    """Exact lossless evolution of the GHZ input."""
    return lindblad_exact(initial_state(InputStateSpec.ghz()), ModelParams(), _lossless_grid())


@pytest.fixture(scope="session")
def schmidt_spec():
    """One fixed generalized-Schmidt pure input.

    a|000> + b e^{i phase}|100> + c|101> + d|110> + e|111> with positive
    weights drawn once from a frozen seed and normalized.
    """
    rng = np.random.default_rng(2024)
    lam = rng.random(5) + 0.2
    lam /= np.linalg.norm(lam)
    phase = float(rng.random() * 2.0 * np.pi)
    amps = np.zeros(8, dtype=np.complex128)
    amps[0] = lam[0]
    amps[4] = lam[1] * np.exp(1j * phase)
    amps[5] = lam[2]
    amps[6] = lam[3]
    amps[7] = lam[4]
    return InputStateSpec.custom(amps)


@pytest.fixture(scope="session")
def schmidt_lossless_exact(schmidt_spec):
    """Exact lossless evolution of the Schmidt input up to tau_off."""
    grid = TimeGrid(tau_end=TAU_OFF, dt=2e-3, sample_times=(TAU_OFF,))
    return lindblad_exact(initial_state(schmidt_spec), ModelParams(), grid)


@pytest.fixture(scope="session")
def w_dissipative_pack():
    """Exact and factorized runs of one dissipative scenario, with timings.

    Returns dict with keys exact, factorized (both {tau: DensityMatrix}),
    exact_seconds, factorized_seconds, params, grid.
    """
    grid = TimeGrid(tau_end=4.4, dt=2e-3, sample_times=tuple(sorted(DISSIPATIVE_SAMPLES)))
    psi0 = initial_state(InputStateSpec.w())
    t0 = time.perf_counter()
    exact = lindblad_exact(psi0, DISSIPATIVE_PARAMS, grid)
    t1 = time.perf_counter()
    fact = factorized_evolution(psi0, DISSIPATIVE_PARAMS, grid)
    t2 = time.perf_counter()
    return {
        "exact": exact,
        "factorized": fact,
        "exact_seconds": t1 - t0,
        "factorized_seconds": t2 - t1,
        "params": DISSIPATIVE_PARAMS,
        "grid": grid,
    }


@pytest.fixture(scope="session")
def mcwf_convergence_pack():
    """Replicated trajectory ensembles of three sizes at tau_off.

    The ensemble-vs-exact trace distance is a single draw of the norm of
    a nearly gaussian mean deviation, so one ensemble per size scatters
    with a relative sd near one and cannot pin the convergence exponent.
    Each size therefore carries several independent replicate ensembles
    (disjoint seed blocks, fixed once and never tuned against the
    outcome) and the scaling is measured on the replicate means.

    The input is the half/half mixed state: its per-trajectory branch
    draw adds a second deviation mode of the same scale as the
    jump-count mode, which tightens the distance distribution (measured
    relative sd ~0.5 against ~1 for a pure input) and roughly halves the
    replicate budget a given slope precision costs.  dt is 4e-3 here:
    the discretization bias it adds is bounded well below the smallest
    statistical scale in play, and the coarser step halves the cost of
    the ~60k trajectories this fixture runs.

    Returns dict with keys n_values, tds_by_n (tuple of replicate trace
    distances per size), exact_rho, params, spec, dt.
    """
    spec = InputStateSpec.mixed(0.5)
    dt = 4e-3
    grid = TimeGrid(tau_end=TAU_OFF, dt=dt, sample_times=(TAU_OFF,))
    exact_rho = lindblad_exact(initial_state(spec), DISSIPATIVE_PARAMS, grid)[TAU_OFF]
    replicates = {400: 16, 1600: 4, 6400: 8}
    seed_bases = {400: 50_000_000, 1600: 60_000_000, 6400: 70_000_000}
    tds_by_n = {}
    for n, n_rep in replicates.items():
        tds = []
        for j in range(n_rep):
            res = mcwf_ensemble(
                spec,
                DISSIPATIVE_PARAMS,
                grid,
                n_traj=n,
                base_seed=seed_bases[n] + j * 1_000_000,
            )
            tds.append(trace_distance(res.rho_at[TAU_OFF], exact_rho))
        tds_by_n[n] = tuple(tds)
    return {
        "n_values": tuple(replicates),
        "tds_by_n": tds_by_n,
        "exact_rho": exact_rho,
        "params": DISSIPATIVE_PARAMS,
        "spec": spec,
        "dt": dt,
    }
