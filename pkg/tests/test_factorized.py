"""Equivalence and structure tests for the channel-factorized propagators."""

import numpy as np
import pytest

from triqed.dynamics import TimeGrid
from triqed.factorized import (
    ChannelPropagators,
    channel_liouvillian,
    factorized_evolution,
    product_reduced_trajectory,
    product_weight_matrix,
)
from triqed.model import InputStateSpec, ModelParams, TAU_OFF_DEFAULT, initial_state
from triqed.tensor import partial_trace, trace_distance

TAU_OFF = TAU_OFF_DEFAULT
ROOT2 = np.sqrt(2.0)


def test_factorized_matches_exact_dissipative(w_dissipative_pack):
    exact = w_dissipative_pack["exact"]
    fact = w_dissipative_pack["factorized"]
    worst = max(trace_distance(exact[t].matrix, fact[t].matrix) for t in exact)
    assert worst < 1e-8
    ratio = w_dissipative_pack["exact_seconds"] / w_dissipative_pack["factorized_seconds"]
    assert ratio > 10.0


def test_factorized_matches_exact_lossless(w_lossless_exact):
    grid = TimeGrid(
        tau_end=TAU_OFF + np.pi + 1e-3,
        dt=2e-3,
        sample_times=tuple(sorted(w_lossless_exact)),
    )
    fact = factorized_evolution(initial_state(InputStateSpec.w()), ModelParams(), grid)
    worst = max(trace_distance(w_lossless_exact[t].matrix, fact[t].matrix) for t in fact)
    assert worst < 1e-8


def test_liouvillian_preserves_trace():
    for drive_on in (True, False):
        liou = channel_liouvillian(ModelParams(k_tilde=0.2, gamma_tilde=0.1), drive_on)
        trace_vec = np.zeros(64)
        trace_vec[np.arange(8) * 8 + np.arange(8)] = 1.0
        assert np.abs(trace_vec @ liou).max() < 1e-12


def test_propagator_cache_reuses_exponentials():
    props = ChannelPropagators(ModelParams(k_tilde=0.1))
    e1 = props.propagator(0.25, drive_on=True)
    e2 = props.propagator(0.25, drive_on=True)
    e3 = props.propagator(0.25, drive_on=False)
    assert e1 is e2
    assert e3 is not e1


def test_weight_matrix_forms():
    for spec in (InputStateSpec.w(), InputStateSpec.ghz()):
        w = product_weight_matrix(spec)
        amps = spec.field_amplitudes()
        assert np.allclose(w, np.outer(amps, amps.conj()))
        assert np.trace(w).real == pytest.approx(1.0, abs=1e-12)
    p = 0.3
    mixed = product_weight_matrix(InputStateSpec.mixed(p))
    ref = p * product_weight_matrix(InputStateSpec.ghz()) + (1 - p) * product_weight_matrix(
        InputStateSpec.w()
    )
    assert np.allclose(mixed, ref)


@pytest.mark.parametrize("spec_name", ["w", "mixed"])
def test_product_reduced_equals_partial_traces(spec_name):
    spec = InputStateSpec.w() if spec_name == "w" else InputStateSpec.mixed(0.3)
    params = ModelParams(k_tilde=0.1, gamma_tilde=0.05)
    samples = (0.0, 0.9, TAU_OFF, 3.1)
    grid = TimeGrid(tau_end=3.1, dt=1e-3, sample_times=samples)
    rho0 = initial_state(spec)
    full = factorized_evolution(rho0, params, grid)
    red = product_reduced_trajectory(spec, params, grid)
    keeps = {
        "fields": (0, 1, 2),
        "cavities": (3, 4, 5),
        "atoms": (6, 7, 8),
        "ff": (0, 1),
        "cc": (3, 4),
        "aa": (6, 7),
        "ca": (3, 6),
        "fa": (0, 6),
        "fc": (0, 3),
        "ca_cross": (4, 6),
    }
    for tau in samples:
        rho = full[tau]
        got = red[tau]
        for key, keep in keeps.items():
            ref = partial_trace(rho, keep=keep).matrix
            have = got.pairs[key] if key in got.pairs else getattr(got, key)
            assert np.abs(have - ref).max() < 1e-12, (tau, key)
        occ = got.occupations
        diag = rho.matrix.diagonal().real
        idx = np.arange(512)
        for kind in range(3):
            for ch in range(3):
                bit = 8 - (3 * kind + ch)
                ref_occ = diag[(idx >> bit) & 1 == 1].sum()
                assert occ[kind, ch] == pytest.approx(ref_occ, abs=1e-12)


def test_ghz_transfer_probabilities():
    # GHZ input: only the all-excited branch carries excitation, so
    # p_e = (1 - cos(sqrt(2) tau))^2 / 8 and N_c = sin^2(sqrt(2) tau) / 4.
    spec = InputStateSpec.ghz()
    samples = (0.5, 1.3, TAU_OFF)
    grid = TimeGrid(tau_end=TAU_OFF, dt=1e-3, sample_times=samples)
    red = product_reduced_trajectory(spec, ModelParams(), grid)
    for tau in samples:
        occ = red[tau].occupations
        pe_ref = (1.0 - np.cos(ROOT2 * tau)) ** 2 / 8.0
        nc_ref = np.sin(ROOT2 * tau) ** 2 / 4.0
        assert occ[2].mean() == pytest.approx(pe_ref, abs=1e-10)
        assert occ[1].mean() == pytest.approx(nc_ref, abs=1e-10)
        assert occ[2].std() < 1e-12  # channels identical by symmetry
    assert red[TAU_OFF].occupations[2].mean() == pytest.approx(0.5, abs=1e-10)


def test_lossless_mapping_from_product_form(schmidt_spec):
    # At tau_off the atoms carry U_{-pi/2} applied to the input state.
    grid = TimeGrid(tau_end=TAU_OFF, dt=1e-3, sample_times=(TAU_OFF,))
    red = product_reduced_trajectory(schmidt_spec, ModelParams(), grid)
    target = schmidt_spec.field_amplitudes()
    counts = np.array([bin(i).count("1") for i in range(8)])
    rotated = np.exp(1j * (np.pi / 2.0) * counts) * target
    overlap = np.real(np.conj(rotated) @ red[TAU_OFF].atoms @ rotated)
    assert overlap > 1.0 - 1e-10


def test_factorized_observer_view():
    grid = TimeGrid(tau_end=0.5, dt=1e-3, sample_times=(0.5,))
    calls = []

    def observer(tau, rho):
        with pytest.raises(ValueError):
            rho[0, 0] = 0.0
        calls.append(tau)
        return np.trace(rho).real

    res = factorized_evolution(
        initial_state(InputStateSpec.w()), ModelParams(), grid, observer=observer
    )
    assert calls == [0.5]
    assert res[0.5] == pytest.approx(1.0, abs=1e-12)
