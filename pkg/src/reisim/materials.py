"""Crystal and dopant parameter sets.

A material is a list of dopant isotopes (each with three ground and three
excited hyperfine levels) plus the bulk parameters needed by the pumping
and dipole-interaction models. Materials are read from JSON files; the
presets shipped in ``reisim/data`` are addressed as ``builtin:<name>``.

Frequencies are MHz offsets, the inhomogeneous width is in GHz, densities
in ions/m^3, dipole moments in C m and lifetimes in ms.
"""

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

ROLES = ("aux", "q0", "q1")
PROFILE_SHAPES = ("flat", "gaussian")
ORIENTATION_MODELS = ("isotropic_random", "fixed_axis")

_ISOTOPE_FIELDS = {"name", "abundance", "ground_offsets", "excited_offsets", "level_roles"}
_MATERIAL_FIELDS = {
    "name", "isotopes", "inhom_fwhm", "profile_shape", "dopant_density", "epsilon",
    "delta_mu", "orientation_model", "t1_optical", "branching", "provenance",
}
_OPTIONAL_FIELDS = {"provenance", "branching", "orientation_model", "profile_shape"}


class MaterialError(ValueError):
    """Raised when a material definition violates the schema or an invariant."""

    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


def _offsets(values, field_name):
    try:
        offs = tuple(float(v) for v in values)
    except (TypeError, ValueError):
        raise MaterialError(field_name, "expected a list of 3 numbers") from None
    if len(offs) != 3:
        raise MaterialError(field_name, f"expected 3 offsets, got {len(offs)}")
    if not all(math.isfinite(v) for v in offs):
        raise MaterialError(field_name, "offsets must be finite")
    if offs[0] != 0.0:
        raise MaterialError(field_name, "first offset must be exactly 0")
    # all-zero offsets encode a dopant without hyperfine structure
    if offs != (0.0, 0.0, 0.0) and not (offs[0] < offs[1] < offs[2]):
        raise MaterialError(field_name, "offsets must be strictly increasing")
    return offs


@dataclass(frozen=True)
class Isotope:
    name: str
    abundance: float
    ground_offsets: tuple
    excited_offsets: tuple
    level_roles: dict = field(default_factory=lambda: {"aux": 0, "q0": 1, "q1": 2})

    def __post_init__(self):
        object.__setattr__(self, "ground_offsets", _offsets(self.ground_offsets, "ground_offsets"))
        object.__setattr__(self, "excited_offsets", _offsets(self.excited_offsets, "excited_offsets"))
        if not 0.0 <= self.abundance <= 1.0:
            raise MaterialError("abundance", f"{self.abundance} not in [0, 1]")
        roles = dict(self.level_roles)
        if set(roles) != set(ROLES):
            raise MaterialError("level_roles", f"keys must be exactly {sorted(ROLES)}")
        if sorted(roles.values()) != [0, 1, 2]:
            raise MaterialError("level_roles", "must map the roles onto ground levels 0, 1, 2 one-to-one")
        object.__setattr__(self, "level_roles", roles)

    @property
    def has_hyperfine(self):
        return self.ground_offsets[2] > 0.0 or self.excited_offsets[2] > 0.0

    def level(self, role):
        """Ground-level index playing ``role`` (aux, q0 or q1)."""
        return self.level_roles[role]

    def __hash__(self):
        return hash((self.name, self.abundance, self.ground_offsets, self.excited_offsets,
                     tuple(sorted(self.level_roles.items()))))


@dataclass(frozen=True)
class Material:
    name: str
    isotopes: tuple
    inhom_fwhm: float
    dopant_density: float
    epsilon: float
    delta_mu: float
    t1_optical: float
    profile_shape: str = "flat"
    orientation_model: str = "isotropic_random"
    branching: tuple = (1 / 3, 1 / 3, 1 / 3)
    provenance: str = ""

    def __post_init__(self):
        isos = tuple(self.isotopes)
        if not isos:
            raise MaterialError("isotopes", "at least one isotope required")
        object.__setattr__(self, "isotopes", isos)
        total = sum(i.abundance for i in isos)
        if abs(total - 1.0) > 1e-9:
            raise MaterialError("isotopes", f"abundances sum to {total:.12g}, expected 1")
        if len({i.name for i in isos}) != len(isos):
            raise MaterialError("isotopes", "isotope names must be unique")
        b = tuple(float(x) for x in self.branching)
        if len(b) != 3 or any(not 0.0 <= x <= 1.0 for x in b):
            raise MaterialError("branching", "expected 3 probabilities in [0, 1]")
        if abs(sum(b) - 1.0) > 1e-12:
            raise MaterialError("branching", f"probabilities sum to {sum(b):.15g}, expected 1")
        object.__setattr__(self, "branching", b)
        if not self.inhom_fwhm > 0:
            raise MaterialError("inhom_fwhm", "must be > 0")
        if not self.dopant_density > 0:
            raise MaterialError("dopant_density", "must be > 0")
        if not self.epsilon >= 1:
            raise MaterialError("epsilon", "must be >= 1")
        if not self.delta_mu >= 0:
            raise MaterialError("delta_mu", "must be >= 0")
        if not self.t1_optical > 0:
            raise MaterialError("t1_optical", "must be > 0")
        if self.profile_shape not in PROFILE_SHAPES:
            raise MaterialError("profile_shape", f"must be one of {PROFILE_SHAPES}")
        if self.orientation_model not in ORIENTATION_MODELS:
            raise MaterialError("orientation_model", f"must be one of {ORIENTATION_MODELS}")

    def isotope(self, key):
        """Look up an isotope by index or name."""
        if isinstance(key, int):
            return self.isotopes[key]
        for iso in self.isotopes:
            if iso.name == key:
                return iso
        raise KeyError(f"no isotope {key!r} in {self.name}")

    def isotope_index(self, key):
        if isinstance(key, int):
            if not -len(self.isotopes) <= key < len(self.isotopes):
                raise IndexError(f"isotope index {key} out of range")
            return key % len(self.isotopes)
        return self.isotopes.index(self.isotope(key))

    def replace(self, **changes):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(changes)
        return Material(**d)

    def to_dict(self):
        return {
            "name": self.name,
            "provenance": self.provenance,
            "isotopes": [
                {
                    "name": i.name,
                    "abundance": i.abundance,
                    "ground_offsets": list(i.ground_offsets),
                    "excited_offsets": list(i.excited_offsets),
                    "level_roles": dict(i.level_roles),
                }
                for i in self.isotopes
            ],
            "inhom_fwhm": self.inhom_fwhm,
            "profile_shape": self.profile_shape,
            "dopant_density": self.dopant_density,
            "epsilon": self.epsilon,
            "delta_mu": self.delta_mu,
            "orientation_model": self.orientation_model,
            "t1_optical": self.t1_optical,
            "branching": list(self.branching),
        }


def transition_offset(iso, g, e):
    """Absorption frequency of the g -> e transition relative to the ion's optical center (MHz)."""
    if g not in (0, 1, 2):
        raise IndexError(f"ground level index {g} out of range 0..2")
    if e not in (0, 1, 2):
        raise IndexError(f"excited level index {e} out of range 0..2")
    return iso.excited_offsets[e] - iso.ground_offsets[g]


def _number(d, key, where):
    if key not in d:
        raise MaterialError(f"{where}{key}", "missing required field")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise MaterialError(f"{where}{key}", f"expected a number, got {type(v).__name__}")
    return float(v)


def material_from_dict(d):
    """Validate a decoded material document and build a :class:`Material`."""
    if not isinstance(d, dict):
        raise MaterialError("<root>", "expected a JSON object")
    unknown = set(d) - _MATERIAL_FIELDS
    if unknown:
        raise MaterialError(sorted(unknown)[0], "unknown field")
    missing = _MATERIAL_FIELDS - _OPTIONAL_FIELDS - set(d)
    if missing:
        raise MaterialError(sorted(missing)[0], "missing required field")
    if not isinstance(d["name"], str):
        raise MaterialError("name", "expected a string")
    if not isinstance(d["isotopes"], list):
        raise MaterialError("isotopes", "expected a list")
    isotopes = []
    for k, raw in enumerate(d["isotopes"]):
        where = f"isotopes[{k}]."
        if not isinstance(raw, dict):
            raise MaterialError(f"isotopes[{k}]", "expected an object")
        unknown = set(raw) - _ISOTOPE_FIELDS
        if unknown:
            raise MaterialError(where + sorted(unknown)[0], "unknown field")
        missing = _ISOTOPE_FIELDS - set(raw)
        if missing:
            raise MaterialError(where + sorted(missing)[0], "missing required field")
        if not isinstance(raw["level_roles"], dict):
            raise MaterialError(where + "level_roles", "expected an object")
        try:
            isotopes.append(Isotope(
                name=str(raw["name"]),
                abundance=_number(raw, "abundance", where),
                ground_offsets=raw["ground_offsets"],
                excited_offsets=raw["excited_offsets"],
                level_roles=raw["level_roles"],
            ))
        except MaterialError as err:
            if err.field.startswith("isotopes"):
                raise
            raise MaterialError(where + err.field, err.reason) from None
    kwargs = dict(
        name=d["name"],
        isotopes=isotopes,
        inhom_fwhm=_number(d, "inhom_fwhm", ""),
        dopant_density=_number(d, "dopant_density", ""),
        epsilon=_number(d, "epsilon", ""),
        delta_mu=_number(d, "delta_mu", ""),
        t1_optical=_number(d, "t1_optical", ""),
    )
    for key in ("profile_shape", "orientation_model", "provenance"):
        if key in d:
            if not isinstance(d[key], str):
                raise MaterialError(key, "expected a string")
            kwargs[key] = d[key]
    if "branching" in d:
        if not isinstance(d["branching"], list):
            raise MaterialError("branching", "expected a list of 3 numbers")
        kwargs["branching"] = d["branching"]
    return Material(**kwargs)


def builtin_names():
    files = resources.files("reisim").joinpath("data").iterdir()
    return sorted(f.name[:-5] for f in files if f.name.endswith(".json"))


def load_material(path):
    """Load a material from a JSON file or a ``builtin:<name>`` reference."""
    if isinstance(path, Material):
        return path
    ref = str(path)
    if ref.startswith("builtin:"):
        name = ref[len("builtin:"):]
        if name not in builtin_names():
            raise MaterialError("name", f"unknown builtin material {name!r}; "
                                        f"available: {', '.join(builtin_names())}")
        text = resources.files("reisim").joinpath("data", name + ".json").read_text()
    else:
        p = Path(ref)
        if not p.is_file():
            raise FileNotFoundError(f"material file not found: {ref}")
        text = p.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise MaterialError("<root>", f"invalid JSON: {err}") from None
    return material_from_dict(doc)
