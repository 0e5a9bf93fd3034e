import json

import pytest
from hypothesis import settings

from reisim.materials import Isotope, Material, load_material

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def yalo():
    return load_material("builtin:eu_yalo3_153")


@pytest.fixture(scope="session")
def yso():
    return load_material("builtin:eu_yso_site2")


@pytest.fixture(scope="session")
def tmyag():
    return load_material("builtin:tm_yag")


def toy_material(ground=(0.0, 37.0, 101.0), excited=(0.0, 13.0, 47.0), **kw):
    iso = Isotope("X", 1.0, ground, excited)
    base = dict(name="toy", isotopes=[iso], inhom_fwhm=5.0, dopant_density=1e25, epsilon=10.0,
                delta_mu=1e-31, t1_optical=2.0)
    base.update(kw)
    return Material(**base)


@pytest.fixture
def write_json(tmp_path):
    def _write(doc, name="m.json"):
        p = tmp_path / name
        p.write_text(json.dumps(doc))
        return p
    return _write


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
