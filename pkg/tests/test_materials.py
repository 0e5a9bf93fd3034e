import copy
import itertools

import pytest
from hypothesis import given, strategies as st

from reisim.materials import (Isotope, MaterialError, builtin_names, load_material, material_from_dict,
                              transition_offset)

from conftest import toy_material


def test_builtin_presets_load():
    assert set(builtin_names()) >= {"eu_yalo3_153", "eu_yso_site2", "eu153_yso_site2", "tm_yag"}
    for name in builtin_names():
        m = load_material(f"builtin:{name}")
        assert m.name == name
        assert m.provenance


def test_yalo3_ground_offsets(yalo):
    assert len(yalo.isotopes) == 1
    assert yalo.isotopes[0].ground_offsets == (0.0, 59.7, 178.9)


def test_tm_yag_preset(tmyag):
    assert tmyag.inhom_fwhm == 10.0
    assert tmyag.t1_optical == 0.8
    iso = tmyag.isotopes[0]
    assert iso.ground_offsets == (0.0, 0.0, 0.0) and not iso.has_hyperfine


def test_natural_yso_has_two_equal_isotopes(yso):
    assert [i.abundance for i in yso.isotopes] == [0.5, 0.5]


def test_abundance_sum_rejected(yso, write_json):
    doc = yso.to_dict()
    doc["isotopes"][0]["abundance"] = 0.6
    doc["isotopes"][1]["abundance"] = 0.3
    with pytest.raises(MaterialError) as err:
        load_material(write_json(doc))
    assert err.value.field == "isotopes"


def test_nonmonotonic_offsets_rejected(yalo, write_json):
    doc = yalo.to_dict()
    doc["isotopes"][0]["ground_offsets"] = [0, 100, 50]
    with pytest.raises(MaterialError, match="ground_offsets"):
        load_material(write_json(doc))


def test_first_offset_must_be_zero():
    with pytest.raises(MaterialError, match="first offset"):
        Isotope("X", 1.0, (1.0, 2.0, 3.0), (0.0, 1.0, 2.0))


def test_unknown_and_missing_fields_are_named(yalo):
    doc = yalo.to_dict()
    doc["colour"] = "red"
    with pytest.raises(MaterialError) as err:
        material_from_dict(doc)
    assert err.value.field == "colour" and "unknown" in err.value.reason
    doc = yalo.to_dict()
    del doc["epsilon"]
    with pytest.raises(MaterialError) as err:
        material_from_dict(doc)
    assert err.value.field == "epsilon"
    doc = yalo.to_dict()
    doc["isotopes"][0]["spin"] = 2.5
    with pytest.raises(MaterialError, match=r"isotopes\[0\]\.spin"):
        material_from_dict(doc)


@pytest.mark.parametrize("field,value", [
    ("inhom_fwhm", 0), ("dopant_density", -1.0), ("epsilon", 0.5), ("delta_mu", -1e-31),
    ("branching", [0.5, 0.5, 0.5]), ("profile_shape", "square"), ("orientation_model", "random"),
    ("epsilon", "ten"),
])
def test_invalid_scalars(yalo, field, value):
    doc = yalo.to_dict()
    doc[field] = value
    with pytest.raises(MaterialError) as err:
        material_from_dict(doc)
    assert err.value.field == field


def test_level_roles_must_be_bijection(yalo):
    doc = yalo.to_dict()
    doc["isotopes"][0]["level_roles"] = {"aux": 0, "q0": 0, "q1": 2}
    with pytest.raises(MaterialError, match="level_roles"):
        material_from_dict(doc)


def test_round_trip_through_dict(yso):
    assert material_from_dict(copy.deepcopy(yso.to_dict())) == yso


def test_unknown_builtin_and_missing_file(tmp_path):
    with pytest.raises(MaterialError, match="unknown builtin"):
        load_material("builtin:nope")
    with pytest.raises(FileNotFoundError):
        load_material(tmp_path / "absent.json")


def test_transition_offset_examples(yalo):
    toy = Isotope("T", 1.0, (0, 10, 30), (0, 1, 3))
    assert transition_offset(toy, 0, 0) == 0
    assert transition_offset(toy, 1, 2) == -7
    assert transition_offset(yalo.isotopes[0], 2, 0) == pytest.approx(-178.9)
    with pytest.raises(IndexError):
        transition_offset(toy, 3, 0)


splittings = st.tuples(st.floats(1, 200), st.floats(1, 200)).map(lambda t: (0.0, t[0], t[0] + t[1]))


@given(splittings, splittings)
def test_excited_differences_independent_of_ground(ground, excited):
    iso = Isotope("R", 1.0, ground, excited)
    for e, e2 in itertools.permutations(range(3), 2):
        diffs = {round(transition_offset(iso, g, e) - transition_offset(iso, g, e2), 9) for g in range(3)}
        assert len(diffs) == 1


@given(splittings, splittings)
def test_at_most_nine_transitions(ground, excited):
    iso = Isotope("R", 1.0, ground, excited)
    vals = {transition_offset(iso, g, e) for g in range(3) for e in range(3)}
    assert len(vals) <= 9


def test_generic_splittings_give_nine_transitions():
    m = toy_material()
    iso = m.isotopes[0]
    assert len({transition_offset(iso, g, e) for g in range(3) for e in range(3)}) == 9


def test_material_is_immutable(yalo):
    with pytest.raises(AttributeError):
        yalo.epsilon = 3.0
