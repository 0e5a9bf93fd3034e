import numpy as np
import pytest
from hypothesis import given, strategies as st

from reisim.materials import Isotope, Material
from reisim.spectrum import (AbsorptionTrace, GridSpec, SpectralEdgeError, absorption_spectrum,
                             hole_antihole_offsets, lorentz_kernel, new_state)

from conftest import toy_material
from oracles import brute_force_holes


def test_grid_bin_count_and_limits():
    g = GridSpec(-10.0, 10.0, 0.05)
    assert g.n_bins == 400
    assert g.centers[0] == pytest.approx(-9.975)
    with pytest.raises(ValueError):
        GridSpec(1.0, 1.0)
    with pytest.raises(ValueError):
        GridSpec(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        GridSpec(0.0, 1e6, 1e-3)


def test_new_state_thirds(yalo):
    s = new_state(yalo, GridSpec(-300, 300))
    np.testing.assert_allclose(s.pop, np.broadcast_to(s.weight[..., None] / 3.0, s.pop.shape))
    assert s.conservation_error() == 0.0


def test_two_isotope_weights_equal(yso):
    s = new_state(yso, GridSpec(-300, 300))
    np.testing.assert_array_equal(s.weight[0], s.weight[1])


@pytest.mark.parametrize("fwhm", [0.0, 2.0])
def test_unburned_absorption_is_one(yalo, fwhm):
    s = new_state(yalo, GridSpec(-700, 500))
    tr = absorption_spectrum(s, np.linspace(-100, 50, 301), fwhm=fwhm)
    np.testing.assert_allclose(tr.alpha, 1.0, atol=1e-9)


def test_emptied_bin_dips_at_three_frequencies():
    m = toy_material()
    s = new_state(m, GridSpec(-300, 300, 0.5))
    k = s.grid.n_bins // 2
    g = 1
    s.pop[0, k, g] = 0.0
    s.pop[0, k, 0] += s.weight[0, k] / 3
    c = s.grid.centers[k]
    iso = m.isotopes[0]
    f = s.grid.centers[400:800]
    tr = absorption_spectrum(s, f, fwhm=0.0)
    dips = set(np.round(f[tr.alpha < 1 - 1e-12], 6))
    expected = {round(c + iso.excited_offsets[e] - iso.ground_offsets[g], 6) for e in range(3)}
    assert dips == expected


def test_edge_error(yalo):
    s = new_state(yalo, GridSpec(-50, 50))
    with pytest.raises(SpectralEdgeError):
        absorption_spectrum(s, [0.0])


def test_kernel_normalized():
    k = lorentz_kernel(2.0, 0.05)
    assert k.sum() == pytest.approx(1.0)
    assert len(k) % 2 == 1 and np.argmax(k) == len(k) // 2


def test_trace_csv_round_trip():
    tr = AbsorptionTrace([-1.0, 0.5, 2.25], [1.0, 0.123456789012, 0.0])
    text = tr.to_csv()
    assert text.splitlines()[0] == "freq_mhz,alpha_rel"
    assert text.splitlines()[2] == "0.5,0.123456789"
    back = AbsorptionTrace.from_csv(text)
    np.testing.assert_allclose(back.alpha, tr.alpha, rtol=1e-9)


def test_hole_example_counts():
    iso = Isotope("T", 1.0, (0, 10, 30), (0, 1, 3))
    side, anti = hole_antihole_offsets(iso)
    assert side == (-3.0, -2.0, -1.0, 1.0, 2.0, 3.0)
    assert len(anti) == 42
    assert list(anti) == pytest.approx(brute_force_holes((0, 10, 30), (0, 1, 3))[1])


def test_degenerate_excited_collapses_side_holes():
    iso = Isotope("T", 1.0, (0, 10, 30), (0.0, 0.0, 0.0))
    side, _ = hole_antihole_offsets(iso)
    assert len(side) < 6


def test_two_isotopes_union(yso):
    side, anti = hole_antihole_offsets(yso)
    s1, a1 = hole_antihole_offsets(yso.isotopes[0])
    s2, a2 = hole_antihole_offsets(yso.isotopes[1])
    assert len(side) == len(set(s1) | set(s2)) <= 12
    assert len(anti) <= 84 and set(anti) == set(a1) | set(a2)


def test_hole_oracle_on_random_sets():
    rng = np.random.default_rng(7)
    for _ in range(100):
        g = (0.0, *np.cumsum(rng.uniform(5, 150, 2)))
        e = (0.0, *np.cumsum(rng.uniform(5, 150, 2)))
        side, anti = hole_antihole_offsets(Isotope("R", 1.0, g, e))
        bs, ba = brute_force_holes(g, e)
        assert len(side) == 6 and len(anti) == 42
        np.testing.assert_allclose(side, bs, atol=1e-9)
        np.testing.assert_allclose(anti, ba, atol=1e-9)


@given(st.lists(st.floats(0.5, 300), min_size=4, max_size=4))
def test_hole_oracle_property(steps):
    g = (0.0, steps[0], steps[0] + steps[1])
    e = (0.0, steps[2], steps[2] + steps[3])
    side, anti = hole_antihole_offsets(Isotope("R", 1.0, g, e))
    bs, ba = brute_force_holes(g, e)
    assert len(side) == len(bs) and len(anti) == len(ba)
    np.testing.assert_allclose(side, bs, atol=1e-6)
    np.testing.assert_allclose(anti, ba, atol=1e-6)
    # holes come in +/- pairs
    np.testing.assert_allclose(sorted(-np.array(side)), side, atol=1e-6)


def test_gaussian_profile_weight():
    m = toy_material(profile_shape="gaussian", inhom_fwhm=0.1)  # 100 MHz
    s = new_state(m, GridSpec(-100, 100, 0.5))
    w = s.weight[0]
    assert w.max() == pytest.approx(1.0, abs=1e-3)
    assert w[np.argmin(np.abs(s.grid.centers - 50.0))] == pytest.approx(0.5, abs=0.01)


def test_hole_offsets_are_plain_floats(yalo):
    side, anti = hole_antihole_offsets(yalo)
    assert all(type(v) is float for v in side + anti)
