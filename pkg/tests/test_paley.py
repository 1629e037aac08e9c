import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dispersive_lab.paley import (
    FrequencyEnvelope, build_frame, check_admissible, envelope_sobolev_readout, minimal_envelope, project,
)
from dispersive_lab.spectral_field import SpectralField, make_grid
from conftest import random_field


@pytest.fixture(scope="module")
def frame():
    return build_frame(make_grid(4096, 64 * np.pi), 1.1)


def _partition(frame, xi):
    return sum(frame.bump(b, xi) for b in frame.blocks)


def test_partition_of_unity_on_grid(frame):
    xi = frame.grid.frequencies
    assert np.max(np.abs(_partition(frame, xi) - 1.0)) < 1e-12


@settings(max_examples=20, deadline=None)
@given(step=st.floats(1.05, 1.5), n=st.sampled_from([256, 1024]))
def test_partition_of_unity_any_step(step, n):
    f = build_frame(make_grid(n, 64 * np.pi), step, low_cut=max(2.0, step))
    xi = np.linspace(-f.grid.max_frequency, f.grid.max_frequency, 2001)
    assert np.max(np.abs(_partition(f, xi) - 1.0)) < 1e-12


def test_step_too_large_rejected():
    with pytest.raises(ValueError):
        build_frame(make_grid(256, 2 * np.pi), 2.0)


def test_origin_only_low_bump(frame):
    vals = {b: float(frame.bump(b, 0.0)) for b in frame.blocks}
    assert vals[(0, 0)] == 1.0
    assert all(v == 0.0 for b, v in vals.items() if b != (0, 0))


def test_single_mode_in_core_projects_to_itself():
    grid = make_grid(256, 8 * np.pi)
    f = build_frame(grid, 1.5)
    k = 6
    xi0 = round(f.lam(k) * 4) / 4
    assert f.bump((1, k), float(xi0)) > 0.99
    u = SpectralField.from_values(grid, np.exp(1j * xi0 * grid.x))
    total = sum((project(f, u, s, kk) for s in (1, -1) for kk in range(f.first, f.top + 1)),
                project(f, u, 1, 0))
    assert np.allclose(total.series, u.series, atol=1e-12)
    assert project(f, u, 1, k).norm() > 0.99 * u.norm()


def test_real_field_conjugate_projections(frame, rng):
    grid = make_grid(256, 16 * np.pi)
    f = build_frame(grid, 1.3)
    # the Nyquist mode has no conjugate partner, so keep it out
    u = SpectralField.from_values(grid, random_field(grid, rng, hi=100).values.real)
    for k in range(f.first, f.top + 1):
        assert project(f, u, 1, k).norm() == pytest.approx(project(f, u.conj(), -1, k).norm(), rel=1e-12)


def test_projections_reconstruct(rng):
    grid = make_grid(512, 16 * np.pi)
    f = build_frame(grid, 1.2)
    u = random_field(grid, rng)
    total = project(f, u, 1, 0)
    for s in (1, -1):
        for k in range(f.first, f.top + 1):
            total = total + project(f, u, s, k)
    assert np.allclose(total.series, u.series, atol=1e-12 * np.max(np.abs(u.series)))


def test_flat_profile_envelope_is_flat():
    env = FrequencyEnvelope(values={(s, k): 1.0 for s in (1, -1) for k in [0, 1, 2, 3]},
                            step=1.2, delta_lo=0.1, C_hi=10.0, s_ref=0.0)
    assert check_admissible(env)


def test_single_block_envelope_rates():
    grid = make_grid(1024, 16 * np.pi)
    f = build_frame(grid, 1.5)
    k0 = 8
    xi0 = round(f.lam(k0) * 8) / 8
    u = SpectralField.from_values(grid, np.exp(1j * xi0 * grid.x))
    env = minimal_envelope(f, u, s_ref=0.0, delta_lo=0.2, C_hi=3.0)
    c0 = env.values[(1, k0)]
    # upward from the peak the envelope decays at rate delta_lo, downward at C_hi
    # above the peak the envelope may fall at rate C_hi, below it only at rate delta_lo
    for k in range(k0 + 1, f.top + 1):
        assert env.values[(1, k)] >= c0 * 1.5 ** (-3.0 * (k - k0)) * (1 - 1e-12)
    for k in range(f.first, k0):
        assert env.values[(1, k)] == pytest.approx(c0 * 1.5 ** (-0.2 * (k0 - k)), rel=1e-12)
    assert check_admissible(env)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), delta_lo=st.floats(0.05, 1.0), C_hi=st.floats(1.0, 10.0))
def test_minimal_envelope_admissible_and_dominating(seed, delta_lo, C_hi):
    grid = make_grid(256, 8 * np.pi)
    f = build_frame(grid, 1.4)
    u = random_field(grid, np.random.default_rng(seed))
    env = minimal_envelope(f, u, s_ref=0.5, delta_lo=delta_lo, C_hi=C_hi)
    assert check_admissible(env)
    for s in (1, -1):
        for k in range(f.first, f.top + 1):
            assert env.values[(s, k)] >= project(f, u, s, k).sobolev_norm(0.5) * (1 - 1e-12)


def test_minimal_envelope_is_least(rng):
    grid = make_grid(256, 8 * np.pi)
    f = build_frame(grid, 1.4)
    u = random_field(grid, rng)
    env = minimal_envelope(f, u, s_ref=0.0)
    data = {(s, k): project(f, u, s, k).sobolev_norm(0.0)
            for s in (1, -1) for k in range(f.first, f.top + 1)}
    for key in data:
        vals = dict(env.values)
        vals[key] *= 0.99
        smaller = FrequencyEnvelope(values=vals, step=env.step, delta_lo=env.delta_lo, C_hi=env.C_hi,
                                    s_ref=env.s_ref, first=env.first)
        assert (not check_admissible(smaller)) or vals[key] < data[key]


def test_sobolev_readout_matches_definition():
    env = FrequencyEnvelope(values={(1, 0): 2.0, (-1, 0): 2.0, (1, 1): 1.0, (-1, 1): 1.0},
                            step=1.5, delta_lo=0.1, C_hi=10.0, s_ref=0.0)
    assert envelope_sobolev_readout(env, 1.0) == pytest.approx(4.0 + 2 * 1.5 ** 2)
