"""Plain-text input and output files.

Job file::

    # amplitude damping plus a field along z
    A
    1,0   0,-1   0,0
    0,1   1,0    0,0
    0,0   0,0    0,0
    H
    [0.5, 0]  0,0
    0,0      -0.5,0
    t 1.0
    eps 1e-3
    k 1            # optional
    seed 0         # optional
    mode sampled   # optional: deterministic | sampled
    trajectories 1000

Complex entries are ``re,im``, ``[re, im]`` or a bare real. Scalars may be
written ``key value``, ``key = value`` or ``key: value``. A grid file has the
same layout with several values for ``t`` and ``eps``. A state file holds two
rows of two entries.
"""

from dataclasses import dataclass
import math
import re

import numpy as np

from . import qmatrix as qm
from .exceptions import InvalidInputError, ParseError
from .generator import GeneratorSpec

MODES = ("deterministic", "sampled")

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?(?:inf|nan)"
_ENTRY = re.compile(
    rf"\[\s*(?P<br>{_NUM})\s*,\s*(?P<bi>{_NUM})\s*\]"
    rf"|(?P<pr>{_NUM}),(?P<pi>{_NUM})"
    rf"|(?P<re>{_NUM})",
    re.IGNORECASE,
)
_SCALAR = re.compile(r"^(?P<key>[A-Za-z_]\w*)\s*(?:=|:)?\s*(?P<val>.+)$")
_SECTIONS = {"A": 3, "H": 2}
_SCALARS = ("t", "eps", "k", "seed", "mode", "trajectories")


@dataclass(frozen=True)
class JobSpec:
    generator: GeneratorSpec
    t: float
    eps: float
    mode: str = "deterministic"
    trajectories: int = 1000
    seed: int = 0
    k_override: int = None

    def __post_init__(self):
        if not (math.isfinite(self.t) and self.t >= 0):
            raise InvalidInputError(f"t must be finite and >= 0, got {self.t!r}")
        if not (0 < self.eps <= 1):
            raise InvalidInputError(f"eps must lie in (0, 1], got {self.eps!r}")
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.trajectories < 1:
            raise InvalidInputError("trajectories must be >= 1")
        if self.k_override is not None and self.k_override < 1:
            raise InvalidInputError("k must be >= 1")


@dataclass(frozen=True)
class BenchGrid:
    generator: GeneratorSpec
    ts: tuple
    epss: tuple
    k_override: int = None
    seed: int = 0


def _strip(line):
    return line.split("#", 1)[0].strip()


def parse_row(text, lineno=None):
    """Complex entries of one matrix row."""
    out = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _ENTRY.match(text, pos)
        end = m.end() if m else pos
        if not m or (end < len(text) and not text[end].isspace()):
            bad = text[pos:].split()[0]
            raise ParseError(f"cannot read complex entry {bad!r}", lineno)
        if m.group("br") is not None:
            val = complex(float(m.group("br")), float(m.group("bi")))
        elif m.group("pr") is not None:
            val = complex(float(m.group("pr")), float(m.group("pi")))
        else:
            val = complex(float(m.group("re")), 0.0)
        out.append(val)
        pos = end
    return out


def _read_matrix(rows, dim, name):
    mat = []
    for lineno, line in rows:
        row = parse_row(line, lineno)
        if len(row) != dim:
            raise ParseError(f"{name} row needs {dim} entries, found {len(row)}", lineno)
        mat.append(row)
    return np.array(mat, dtype=complex)


def _scan(text):
    """Split a job/grid file into matrix rows per section and scalar values."""
    sections = {}
    scalars = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line:
            continue
        head = line.rstrip(":").strip()
        if head in _SECTIONS:
            if head in sections:
                raise ParseError(f"section {head} given twice", lineno)
            sections[head] = []
            current = head
            continue
        m = _SCALAR.match(line)
        if m and m.group("key").lower() in _SCALARS:
            key = m.group("key").lower()
            if key in scalars:
                raise ParseError(f"{key} given twice", lineno)
            scalars[key] = (lineno, m.group("val").split())
            current = None
            continue
        if current is None:
            raise ParseError(f"unexpected line {line!r}", lineno)
        if len(sections[current]) == _SECTIONS[current]:
            raise ParseError(f"section {current} has more than {_SECTIONS[current]} rows", lineno)
        sections[current].append((lineno, line))
    for name, dim in _SECTIONS.items():
        if name not in sections:
            raise ParseError(f"missing section {name}")
        if len(sections[name]) != dim:
            raise ParseError(f"section {name} needs {dim} rows, found {len(sections[name])}")
    a = _read_matrix(sections["A"], 3, "A")
    h = _read_matrix(sections["H"], 2, "H")
    return GeneratorSpec(A=a, H=h), scalars


def _one(scalars, key, conv, default=None, required=False):
    if key not in scalars:
        if required:
            raise ParseError(f"missing scalar {key}")
        return default
    lineno, vals = scalars[key]
    if len(vals) != 1:
        raise ParseError(f"{key} takes exactly one value", lineno)
    return _convert(vals[0], conv, key, lineno)


def _convert(val, conv, key, lineno):
    try:
        return conv(val)
    except ValueError as exc:
        raise ParseError(f"bad value {val!r} for {key}", lineno) from exc


def _int(text):
    f = float(text)
    if not f.is_integer():
        raise ValueError(text)
    return int(f)


def parse_jobspec(text):
    """Parse a job file into a :class:`JobSpec`.

    Raises:
        ParseError: malformed text.
        ValidationError: ``A`` not Hermitian PSD or ``H`` not Hermitian.
    """
    gen, sc = _scan(text)
    return JobSpec(
        generator=gen,
        t=_one(sc, "t", float, required=True),
        eps=_one(sc, "eps", float, required=True),
        mode=_one(sc, "mode", str, default="deterministic"),
        trajectories=_one(sc, "trajectories", _int, default=1000),
        seed=_one(sc, "seed", _int, default=0),
        k_override=_one(sc, "k", _int),
    )


def parse_grid(text):
    """Parse a bench grid file (several ``t`` and ``eps`` values)."""
    gen, sc = _scan(text)
    for key in ("t", "eps"):
        if key not in sc:
            raise ParseError(f"missing scalar {key}")
    ts = tuple(_convert(v, float, "t", sc["t"][0]) for v in sc["t"][1])
    epss = tuple(_convert(v, float, "eps", sc["eps"][0]) for v in sc["eps"][1])
    if any(not (math.isfinite(x) and x >= 0) for x in ts):
        raise InvalidInputError("grid times must be finite and >= 0")
    if any(not (0 < e <= 1) for e in epss):
        raise InvalidInputError("grid eps values must lie in (0, 1]")
    return BenchGrid(generator=gen, ts=ts, epss=epss, k_override=_one(sc, "k", _int), seed=_one(sc, "seed", _int, 0))


def format_complex(z):
    return f"{z.real:.17g},{z.imag:.17g}"


def format_matrix(m):
    return "\n".join("  ".join(format_complex(complex(z)) for z in row) for row in m)


def serialize_jobspec(job):
    lines = ["A", format_matrix(job.generator.A), "H", format_matrix(job.generator.H)]
    lines.append(f"t {job.t:.17g}")
    lines.append(f"eps {job.eps:.17g}")
    if job.k_override is not None:
        lines.append(f"k {job.k_override}")
    lines += [f"seed {job.seed}", f"mode {job.mode}", f"trajectories {job.trajectories}"]
    return "\n".join(lines) + "\n"


def parse_state(text):
    """Parse a 2x2 density matrix and check that it is a valid state."""
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line:
            continue
        row = parse_row(line, lineno)
        if len(row) != 2:
            raise ParseError(f"state row needs 2 entries, found {len(row)}", lineno)
        rows.append(row)
    if len(rows) != 2:
        raise ParseError(f"state needs 2 rows, found {len(rows)}")
    return qm.check_density_matrix(np.array(rows, dtype=complex), tol=1e-10)


def format_state(rho):
    return format_matrix(rho) + "\n"
