"""Reader and printer for ``.seq`` pulse programs.

    material builtin:eu_yalo3_153
    # empty both wells
    burn scan -7MHz..7MHz, 52.7MHz..66.7MHz repeat 60 duration 2ms
    burn fixed 59.7MHz duration 1ms strength 0.5
    readout -80MHz..80MHz duration 200us

One statement per line, ``#`` starts a comment. Every quantity carries a
unit (MHz or GHz; us, ms or s). A burn may list several comma-separated
frequencies or ranges, which are driven at the same time. Frequencies are
stored in MHz and times in ms.
"""

import re
from dataclasses import dataclass

from .materials import builtin_names
from .pump import Pulse, PulseSequence

FREQ_UNITS = {"MHz": 1.0, "GHz": 1e3}
TIME_UNITS = {"us": 1e-3, "ms": 1.0, "s": 1e3}
STATEMENTS = ("burn", "readout")

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<range>\.\.)
  | (?P<comma>,)
  | (?P<number>[+-]?(?:\d+(?:\.\d+)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
""", re.VERBOSE)
_NUMBER_JUNK = re.compile(r"[0-9.eE+-]*")
_INT = re.compile(r"\d+")
_MATERIAL = re.compile(r"\s*(material)(?=\s|$)")


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    length: int = 1

    def __post_init__(self):
        if self.line < 1 or self.column < 1:
            raise ValueError("line and column are 1-based")


class ParseError(ValueError):
    def __init__(self, span, message, expected=()):
        if not message:
            raise ValueError("ParseError needs a message")
        self.span = span
        self.message = message
        self.expected = list(expected)
        super().__init__(str(self))

    def __str__(self):
        s = f"{self.span.line}:{self.span.column}: {self.message}"
        if self.expected:
            s += " (expected " + ", ".join(self.expected) + ")"
        return s


@dataclass
class _Tok:
    kind: str
    text: str
    col: int  # 1-based


def _lex(text, lineno):
    toks, i = [], 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if m is None:
            raise ParseError(SourceSpan(lineno, i + 1), f"unexpected character {text[i]!r}")
        kind = m.lastgroup
        if kind == "number":
            end = m.end()
            nxt = text[end:end + 2]
            if (nxt[:1] == "." and nxt != "..") or nxt[:1].isdigit():
                junk = _NUMBER_JUNK.match(text, i).end()
                raise ParseError(SourceSpan(lineno, i + 1, junk - i),
                                 f"malformed number {text[i:junk]!r}")
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), i + 1))
        i = m.end()
    return toks


class _Line:
    def __init__(self, lineno, text):
        self.lineno = lineno
        self.text = text
        self.toks = _lex(text, lineno)
        self.pos = 0

    def span(self, tok=None):
        if tok is None:
            return SourceSpan(self.lineno, len(self.text.rstrip()) + 1, 1)
        return SourceSpan(self.lineno, tok.col, len(tok.text))

    def peek(self):
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def next(self, what, expected=()):
        tok = self.peek()
        if tok is None:
            raise ParseError(self.span(), f"expected {what}, found end of line", expected)
        self.pos += 1
        return tok

    def keyword(self, words):
        tok = self.peek()
        if tok is None or tok.kind != "word" or tok.text not in words:
            found = "end of line" if tok is None else repr(tok.text)
            raise ParseError(self.span(tok), f"expected {' or '.join(words)}, found {found}", list(words))
        self.pos += 1
        return tok.text

    def at_word(self, word):
        tok = self.peek()
        return tok is not None and tok.kind == "word" and tok.text == word

    def number(self, what):
        tok = self.next(what, ["number"])
        if tok.kind != "number":
            raise ParseError(self.span(tok), f"expected {what}, found {tok.text!r}", ["number"])
        return tok, float(tok.text)

    def quantity(self, what, units):
        tok, value = self.number(what)
        unit = self.peek()
        names = list(units)
        if unit is None or unit.kind != "word":
            raise ParseError(self.span(tok), f"missing unit after {tok.text}", names)
        if unit.text not in units:
            raise ParseError(self.span(unit), f"unknown unit {unit.text!r}", names)
        self.pos += 1
        return tok, value * units[unit.text]

    def freq(self):
        return self.quantity("frequency", FREQ_UNITS)

    def range(self):
        t0, lo = self.freq()
        tok = self.next("'..'", [".."])
        if tok.kind != "range":
            raise ParseError(self.span(tok), f"expected '..', found {tok.text!r}", [".."])
        t1, hi = self.freq()
        if not lo < hi:
            raise ParseError(SourceSpan(self.lineno, t0.col, t1.col + len(t1.text) - t0.col),
                             "range must have lo < hi")
        return lo, hi

    def end(self, expected):
        tok = self.peek()
        if tok is not None:
            raise ParseError(self.span(tok), f"unexpected {tok.text!r}", list(expected) + ["end of line"])

    def separated(self, item):
        out = [item()]
        while self.peek() is not None and self.peek().kind == "comma":
            self.pos += 1
            out.append(item())
        return out


def _strip_comment(raw):
    k = raw.find("#")
    return raw if k < 0 else raw[:k]


def _material(lineno, raw, start):
    # the path is the rest of the line, so it may contain any character but '#'
    rest = raw[start:]
    path = rest.strip()
    if not path:
        raise ParseError(SourceSpan(lineno, len(raw.rstrip()) + 1),
                         "expected material path or builtin:<name>", ["path", "builtin:<name>"])
    col = start + len(rest) - len(rest.lstrip()) + 1
    if any(c.isspace() for c in path):
        raise ParseError(SourceSpan(lineno, col, len(path)), "material path must not contain spaces")
    if path.startswith("builtin:"):
        name = path[len("builtin:"):]
        names = builtin_names()
        if name not in names:
            raise ParseError(SourceSpan(lineno, col + 8, max(len(name), 1)),
                             f"undefined material {name!r}", names)
    return path


def _duration(line):
    line.keyword(["duration"])
    tok, value = line.quantity("duration", TIME_UNITS)
    if not value > 0:
        raise ParseError(line.span(tok), "duration must be > 0")
    return value


def _burn(line):
    kind = line.keyword(["fixed", "scan"])
    if kind == "fixed":
        freqs, ranges = [v for _, v in line.separated(line.freq)], []
    else:
        freqs, ranges = [], line.separated(line.range)
    repeat = 1
    if line.at_word("repeat"):
        line.pos += 1
        tok = line.next("repeat count", ["integer"])
        if tok.kind != "number" or not _INT.fullmatch(tok.text) or int(tok.text) < 1:
            raise ParseError(line.span(tok), f"repeat count must be an integer >= 1, found {tok.text!r}",
                             ["integer"])
        repeat = int(tok.text)
    duration = _duration(line)
    strength = 1.0
    if line.at_word("strength"):
        line.pos += 1
        tok, strength = line.number("strength")
        if strength < 0:
            raise ParseError(line.span(tok), "strength must be >= 0")
        line.end([])
    else:
        line.end(["strength"])
    return Pulse("burn_fixed" if kind == "fixed" else "burn_scan", freqs=freqs, ranges=ranges,
                 duration=duration, repetitions=repeat, strength=strength)


def _readout(line):
    rng = line.range()
    duration = _duration(line)
    line.end([])
    return Pulse("readout_scan", ranges=(rng,), duration=duration)


def parse(source):
    """Parse program text into a :class:`PulseSequence`; raises :class:`ParseError`."""
    if not isinstance(source, str):
        raise TypeError("source must be text")
    material = None
    pulses = []
    lines = source.splitlines()
    for lineno, raw in enumerate(lines, start=1):
        body = _strip_comment(raw)
        if not body.strip():
            continue
        m = _MATERIAL.match(body)
        if m:
            if material is not None:
                raise ParseError(SourceSpan(lineno, m.start(1) + 1, 8), "duplicate material declaration",
                                 list(STATEMENTS))
            material = _material(lineno, body, m.end())
            continue
        line = _Line(lineno, body)
        head = line.toks[0]
        if material is None:
            raise ParseError(line.span(head), "expected material declaration", ["material"])
        if head.kind != "word":
            raise ParseError(line.span(head), f"expected a statement, found {head.text!r}", list(STATEMENTS))
        line.pos = 1
        if head.text == "burn":
            pulses.append(_burn(line))
        elif head.text == "readout":
            pulses.append(_readout(line))
        else:
            raise ParseError(line.span(head), f"unknown keyword {head.text!r}", list(STATEMENTS))
    if material is None:
        # no statement at all: the program is empty
        raise ParseError(SourceSpan(1, 1, 0), "expected material declaration", ["material"])
    return PulseSequence(material, pulses)


def parse_file(path):
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def _num(x):
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def _pulse_text(p):
    if p.kind == "readout_scan":
        (lo, hi), = p.ranges
        return f"readout {_num(lo)}MHz..{_num(hi)}MHz duration {_num(p.duration)}ms"
    if p.kind == "burn_fixed":
        what = "fixed " + ", ".join(f"{_num(f)}MHz" for f in p.freqs)
    else:
        what = "scan " + ", ".join(f"{_num(a)}MHz..{_num(b)}MHz" for a, b in p.ranges)
    s = f"burn {what}"
    if p.repetitions != 1:
        s += f" repeat {p.repetitions}"
    s += f" duration {_num(p.duration)}ms"
    if p.strength != 1.0:
        s += f" strength {_num(p.strength)}"
    return s


def format_sequence(seq):
    """Canonical text (MHz, ms, ``lo..hi``) that parses back to ``seq``."""
    lines = [f"material {seq.material}"] + [_pulse_text(p) for p in seq.pulses]
    return "\n".join(lines) + "\n"


# the canonical printer, under the name the rest of the toolkit uses
print_sequence = format_sequence
