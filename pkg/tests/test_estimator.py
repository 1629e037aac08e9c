import numpy as np
import pytest

from dispersive_lab.dispersion import make_canonical, make_named
from dispersive_lab.estimator import (
    ProbeError, bilinear_linear_check, bilinear_norm, block_packet, boot_monitor, check_admissible_pair,
    decay_probe, decay_setup, strichartz_norm, strichartz_setup,
)
from dispersive_lab.forms import constant_symbol
from dispersive_lab.paley import build_frame
from dispersive_lab.spectral_field import SpectralField, make_grid


def test_nls_decay_slope():
    d = make_named("nls")
    _, u0, times = decay_setup(d, 8)
    fit = decay_probe(d, u0, 8, times)
    assert -0.6 <= fit.slope <= -0.4


def test_decay_refuses_pre_dispersive_times():
    d = make_named("nls")
    _, u0, times = decay_setup(d, 8)
    with pytest.raises(ProbeError):
        decay_probe(d, u0, 8, times * 1e-3)


def test_decay_needs_a_decade():
    d = make_named("nls")
    _, u0, times = decay_setup(d, 8)
    with pytest.raises(ProbeError):
        decay_probe(d, u0, 8, np.linspace(times[0], 2 * times[0], 6))


def test_half_wave_decay_constants_comparable():
    d = make_canonical(-3)
    consts = []
    for lam in (4, 8, 16):
        _, u0, times = decay_setup(d, lam)
        consts.append(decay_probe(d, u0, lam, times).constant)
    assert max(consts) / min(consts) <= 4


def test_bilinear_transversal_exponent():
    st = bilinear_linear_check(make_canonical(0), [(16, 2), (32, 4), (64, 8)], n_trials=1)
    assert abs(st.exponent / -0.5 - 1) <= 0.15
    assert abs(st.mu_exponent / -0.5 - 1) <= 0.15


def test_equal_blocks_need_derivative():
    with pytest.raises(ProbeError):
        bilinear_linear_check(make_canonical(0), [(8, 8)], n_trials=1)


def test_packet_width_bounds():
    grid = make_grid(256, 16 * np.pi)
    with pytest.raises(ProbeError):
        block_packet(grid, 8, width=0.5)


def test_bilinear_translation_covariance():
    d = make_named("nls")
    grid = make_grid(256, 32 * np.pi)
    u0, v0 = block_packet(grid, 8, width=0.1, centre=-5.0), block_packet(grid, 2, width=0.1, centre=5.0)
    x0 = 7 * grid.dx
    a = bilinear_norm(d, u0, v0, 1.0, x0=x0, n_panels=4)
    b = bilinear_norm(d, u0, v0.shift(x0), 1.0, n_panels=4)
    assert a == pytest.approx(b, rel=1e-12)


@pytest.mark.parametrize("p,q", [(2, 2), (4, 4), (8, 2)])
def test_inadmissible_pairs_rejected(p, q):
    with pytest.raises(ProbeError):
        check_admissible_pair(p, q)


@pytest.mark.parametrize("p,q", [(np.inf, 2), (4, np.inf), (6, 6), (8, 4)])
def test_admissible_pairs_accepted(p, q):
    check_admissible_pair(p, q)


def test_energy_pair_is_sup_of_mass():
    d = make_named("nls")
    grid = make_grid(128, 16 * np.pi)
    u = block_packet(grid, 4)
    states = [(t, u * (1 + 0.1 * t)) for t in np.linspace(0, 1, 5)]
    out = strichartz_norm(d, states, np.inf, 2)
    assert out["value"] == pytest.approx(1.1 * u.norm(), rel=1e-12)


def test_strichartz_normalization_stable():
    d = make_named("nls")
    vals = [strichartz_norm(d, strichartz_setup(d, lam, n_times=257), 4, np.inf, lam=lam)["normalized"]
            for lam in (8, 16, 32)]
    assert max(vals) / min(vals) <= 4


@pytest.fixture(scope="module")
def boot_case():
    grid = make_grid(256, 32 * np.pi)
    frame = build_frame(grid, 1.5)
    x = grid.x
    u0 = SpectralField.from_values(grid, np.exp(-x ** 2 / 50) * np.exp(2j * x))
    return grid, frame, u0


def test_linear_energy_margin_constant(boot_case):
    grid, frame, u0 = boot_case
    d = make_named("nls")
    u0 = u0 * (0.01 / u0.sobolev_norm(-0.5))
    rep = boot_monitor(d, None, u0, frame, -0.5, 0.0, t_end=2.0, dt=0.1)
    by_block = {}
    for t, b, m, v, bd, mg in rep.rows:
        if m == "energy":
            by_block.setdefault(b, []).append(mg)
    for margins in by_block.values():
        assert np.ptp(margins) < 1e-12
    assert not rep.outside_smallness


def test_large_data_flagged(boot_case):
    grid, frame, u0 = boot_case
    d = make_named("nls")
    u0 = u0 * (0.5 / u0.sobolev_norm(-0.5))
    rep = boot_monitor(d, constant_symbol(1.0), u0, frame, -0.5, 0.0, t_end=0.5, dt=0.05)
    assert rep.outside_smallness


def test_probes_are_passive(boot_case):
    grid, frame, u0 = boot_case
    d = make_named("nls")
    u0 = u0 * (0.05 / u0.sobolev_norm(-0.5))
    on = boot_monitor(d, constant_symbol(1.0), u0, frame, -0.5, 0.0, t_end=1.0, dt=0.05)
    off = boot_monitor(d, constant_symbol(1.0), u0, frame, -0.5, 0.0, t_end=1.0, dt=0.05, probes=False)
    assert np.array_equal(on.final_state.series, off.final_state.series)
    assert off.rows == []


def test_boot_csv(tmp_path, boot_case):
    grid, frame, u0 = boot_case
    u0 = u0 * (0.01 / u0.sobolev_norm(-0.5))
    rep = boot_monitor(make_named("nls"), None, u0, frame, -0.5, 0.0, t_end=0.5, dt=0.1)
    path = rep.write_csv(tmp_path / "boot.csv")
    head = path.read_text().splitlines()[0]
    assert head == "t,block,monitor,value,bound,margin"
