import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reisim import distill as ds
from reisim.dipolemc import DipoleParams, pair_shift

Z = np.array([0.0, 0.0, 1.0])


def test_threshold_zero_keeps_everyone(yalo):
    r = ds.distill_pair(8, yalo, 10.0, 0.0, trials=5, seed=1)
    assert r.fraction_retained_target == r.fraction_retained_control == 1.0
    assert r.pass1_fraction == r.pass2_fraction == 1.0
    assert r.mutual and not r.flagged


def test_pinned_pair_is_retained():
    # one target, one control 5 nm above it: the shift is known exactly
    p = DipoleParams(3.0, 1e-31, "fixed_axis")
    S = ds.shift_matrix([[0, 0, 0]], [[0, 0, 5e-9]], [Z], [Z], p)
    assert S[0, 0] == pytest.approx(pair_shift(Z, Z, [0, 0, 5e-9], p) * 1e-6)
    keep_t, keep_c, *_ , mutual = ds.distill_configuration(S * 10 / abs(S[0, 0]), 5.0)
    assert keep_t.all() and keep_c.all() and mutual
    keep_t, keep_c, *_ , mutual = ds.distill_configuration(S * 10 / abs(S[0, 0]), 20.0)
    assert not keep_t.any() and not keep_c.any()


def test_minimum_image():
    p = DipoleParams(3.0, 1e-31, "fixed_axis")
    box = 20e-9
    near = ds.shift_matrix([[0, 0, 1e-9]], [[0, 0, 6e-9]], [Z], [Z], p, box)
    wrapped = ds.shift_matrix([[0, 0, 1e-9]], [[0, 0, -4e-9 + box]], [Z], [Z], p, box)
    assert near[0, 0] == pytest.approx(wrapped[0, 0])


def test_second_pass_uses_retained_targets_only():
    S = np.array([[10.0, 0.0],
                  [0.5, 0.5]])
    keep_t, keep_c, shift_t, shift_c, mutual = ds.distill_configuration(S, 1.0)
    assert keep_t.tolist() == [True, False]
    np.testing.assert_allclose(shift_c, [10.0, 0.0])
    assert keep_c.tolist() == [True, False]
    assert mutual


def test_mutual_check_can_fail():
    # target 0 relies on control 1, which the second pass drops
    S = np.array([[0.0, 3.0],
                  [6.0, -2.5]])
    keep_t, keep_c, _, _, mutual = ds.distill_configuration(S, 2.0)
    assert keep_t.tolist() == [True, True] and keep_c.tolist() == [True, False]
    assert not mutual


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.floats(0.0, 20.0))
def test_selection_invariants(seed, threshold):
    rng = np.random.default_rng(seed)
    S = rng.standard_cauchy((6, 7))
    keep_t, keep_c, shift_t, shift_c, _ = ds.distill_configuration(S, threshold)
    if threshold > 0:
        assert np.all(np.abs(shift_t[keep_t]) > threshold)
        assert np.all(np.abs(shift_c[keep_c]) > threshold)
        assert np.all(np.abs(shift_t[~keep_t]) <= threshold)
    assert keep_t.sum() + (~keep_t).sum() == 6


def test_report_fractions_are_consistent(yalo):
    r = ds.distill_pair(10, yalo, 10.0, 5.0, trials=20, seed=3)
    assert r.pass2_fraction <= r.pass1_fraction
    assert r.pass1_fraction == pytest.approx((r.fraction_retained_target + 1) / 2)
    assert r.pass2_fraction == pytest.approx((r.fraction_retained_target + r.fraction_retained_control) / 2)
    assert len(r.ions) == 2 * 10 * 20
    kept = sum(i.retained for i in r.ions)
    assert kept + sum(not i.retained for i in r.ions) == len(r.ions)
    assert kept / len(r.ions) == pytest.approx(r.pass2_fraction)
    for ion in r.ions:
        assert (ion.level == "aux") == (not ion.retained)
        if ion.retained:
            assert abs(ion.shift_under_control) > 5.0


def test_monotone_in_threshold(yalo):
    fr = [ds.distill_pair(10, yalo, 10.0, t, trials=10, seed=4, keep_ions=False).pass2_fraction
          for t in (0.0, 0.5, 2.0, 8.0, 30.0)]
    assert all(a >= b for a, b in zip(fr, fr[1:]))


def test_reproducible(yalo):
    a = ds.distill_pair(6, yalo, 10.0, 2.0, trials=8, seed=9).to_json(True)
    b = ds.distill_pair(6, yalo, 10.0, 2.0, trials=8, seed=9).to_json(True)
    assert a == b


def test_no_survivors_is_flagged(yalo):
    r = ds.distill_pair(3, yalo, 10.0, 1e9, trials=3, seed=1)
    assert r.flagged and r.pass2_fraction == 0.0


def test_entangleable_fraction_monotone(yalo):
    f = [ds.entangleable_fraction(yalo, 10.0, t, trials=20_000, seed=2) for t in (0.1, 1.0, 10.0)]
    assert 1 >= f[0] >= f[1] >= f[2] >= 0
    g = [ds.entangleable_fraction(yalo, bw, 1.0, trials=20_000, seed=2) for bw in (5.0, 20.0, 80.0)]
    assert g[0] <= g[1] <= g[2]
    with pytest.raises(ValueError):
        ds.entangleable_fraction(yalo, 10.0, 0.0)


def test_outputs(yalo):
    r = ds.distill_pair(4, yalo, 10.0, 1.0, trials=2, seed=0)
    doc = json.loads(r.to_json(with_ions=True))
    assert doc["n_ions_per_qubit"] == 4 and len(doc["ions"]) == 16
    rows = list(csv.DictReader(io.StringIO(r.ions_csv())))
    assert len(rows) == 16 and set(rows[0]) == {"id", "shift_mhz", "retained", "level"}
    assert {row["retained"] for row in rows} <= {"true", "false"}


def test_argument_errors(yalo):
    with pytest.raises(ValueError):
        ds.distill_pair(0, yalo, 10.0, 1.0)
    with pytest.raises(ValueError):
        ds.distill_pair(3, yalo, 0.0, 1.0)
    with pytest.raises(ValueError):
        ds.IonSample(0, "target", 1.0, True, "aux")
