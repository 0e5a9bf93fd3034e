import re
import time
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from reisim.pump import Pulse, PulseSequence
from reisim.seqlang import ParseError, SourceSpan, format_sequence, parse

DATA = Path(__file__).parent / "data" / "seq"
VALID = sorted((DATA / "valid").glob("*.seq"))
MALFORMED = sorted((DATA / "malformed").glob("*.seq"))


def test_corpus_size():
    assert len(VALID) == 50 and len(MALFORMED) == 20


def test_basic_program():
    seq = parse("material builtin:eu_yalo3_153\n"
                "burn scan -7MHz..7MHz repeat 60 duration 2ms\n"
                "readout -80MHz..80MHz duration 200us\n")
    assert seq.material == "builtin:eu_yalo3_153"
    assert len(seq.pulses) == 2
    burn, ro = seq.pulses
    assert burn == Pulse("burn_scan", ranges=((-7.0, 7.0),), duration=2.0, repetitions=60)
    assert ro.kind == "readout_scan" and ro.ranges == ((-80.0, 80.0),) and ro.duration == pytest.approx(0.2)


def test_units_convert():
    seq = parse("material x\nburn fixed 0.1GHz, -3MHz duration 1500us strength 0.5\nreadout 1MHz..2MHz duration 1s\n")
    assert seq.pulses[0].freqs == (100.0, -3.0)
    assert seq.pulses[0].duration == pytest.approx(1.5)
    assert seq.pulses[0].strength == 0.5
    assert seq.pulses[1].duration == 1000.0


def test_multiple_ranges_driven_together():
    seq = parse("material x\nburn scan -7MHz..7MHz, 52.7MHz..66.7MHz duration 2ms\n")
    assert seq.pulses[0].ranges == ((-7.0, 7.0), (52.7, 66.7))


def test_empty_input():
    with pytest.raises(ParseError) as err:
        parse("")
    assert (err.value.span.line, err.value.span.column) == (1, 1)
    assert "expected material declaration" in err.value.message


def test_missing_time_unit_lists_units():
    src = "material builtin:eu_yalo3_153\nburn fixed 1MHz duration 2\n"
    with pytest.raises(ParseError) as err:
        parse(src)
    e = err.value
    assert (e.span.line, e.span.column, e.span.length) == (2, 26, 1)
    assert set(e.expected) == {"us", "ms", "s"}


def test_undefined_builtin():
    with pytest.raises(ParseError, match="undefined material"):
        parse("material builtin:nope\n")


def test_file_paths_are_not_checked():
    assert parse("material some/dir/m.json\n").material == "some/dir/m.json"


def test_printer_canonical_form():
    seq = PulseSequence("builtin:tm_yag", [Pulse("burn_fixed", freqs=(1500.0,), duration=0.2, repetitions=3)])
    assert format_sequence(seq) == "material builtin:tm_yag\nburn fixed 1500MHz repeat 3 duration 0.2ms\n"
    assert format_sequence(PulseSequence("builtin:tm_yag")) == "material builtin:tm_yag\n"


@pytest.mark.parametrize("path", VALID, ids=lambda p: p.name)
def test_golden_round_trip(path):
    seq = parse(path.read_text(encoding="utf-8"))
    text = format_sequence(seq)
    assert parse(text) == seq
    assert format_sequence(parse(text)) == text


@pytest.mark.parametrize("path", MALFORMED, ids=lambda p: p.name)
def test_malformed_positions(path):
    text = path.read_text(encoding="utf-8")
    line, col = map(int, re.match(r"# error: (\d+):(\d+)", text).groups())
    with pytest.raises(ParseError) as err:
        parse(text)
    assert (err.value.span.line, err.value.span.column) == (line, col)
    assert err.value.message


def test_corpus_runtime():
    texts = [p.read_text(encoding="utf-8") for p in VALID + MALFORMED]
    t0 = time.perf_counter()
    for t in texts:
        try:
            format_sequence(parse(t))
        except ParseError:
            pass
    assert time.perf_counter() - t0 < 1.0


def test_span_validation():
    with pytest.raises(ValueError):
        SourceSpan(0, 1)


finite = st.floats(-1e4, 1e4, allow_nan=False).filter(lambda x: x == x)
ranges = st.tuples(finite, st.floats(1e-3, 100)).map(lambda t: (t[0], t[0] + t[1])).filter(lambda r: r[0] < r[1])
pulses = st.one_of(
    st.builds(lambda fs, r, d, s: Pulse("burn_fixed", freqs=tuple(fs), duration=d, repetitions=r, strength=s),
              st.lists(finite, min_size=1, max_size=3), st.integers(1, 10_000), st.floats(1e-4, 1e4),
              st.floats(0, 1e6)),
    st.builds(lambda rs, r, d, s: Pulse("burn_scan", ranges=tuple(rs), duration=d, repetitions=r, strength=s),
              st.lists(ranges, min_size=1, max_size=3), st.integers(1, 10_000), st.floats(1e-4, 1e4),
              st.floats(0, 1e6)),
    st.builds(lambda rg, d: Pulse("readout_scan", ranges=(rg,), duration=d), ranges, st.floats(1e-4, 1e4)),
)


@given(st.sampled_from(["builtin:eu_yalo3_153", "x.json", "/a/b-c_d.json"]), st.lists(pulses, max_size=6))
def test_round_trip_property(material, ps):
    seq = PulseSequence(material, ps)
    assert parse(format_sequence(seq)) == seq


alphabet = st.sampled_from(list("burnfixedscanreadoutmaterialrepeatdurationstrengthMHzGHzusms0123456789.-+, \n#:e"))


@given(st.text(alphabet, max_size=120))
def test_parser_is_total(text):
    try:
        parse("material x\n" + text)
    except ParseError as e:
        lines = ("material x\n" + text).splitlines()
        assert 1 <= e.span.line <= max(1, len(lines))
        assert 1 <= e.span.column <= len(lines[e.span.line - 1]) + 1


@given(st.text(max_size=80))
def test_parser_total_on_arbitrary_text(text):
    try:
        parse(text)
    except ParseError:
        pass
