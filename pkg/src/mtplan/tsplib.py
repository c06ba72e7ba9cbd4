"""Reader and writer for explicit-matrix TSPLIB instances (TSP, ATSP, SOP)."""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import InputError
from .ordering import Objective, OrderingProblem

__all__ = [
    "BUNDLED_INSTANCES",
    "KNOWN_OPTIMA",
    "TsplibInstance",
    "TsplibParseError",
    "bundled_path",
    "dumps",
    "known_optimum",
    "load",
    "parse",
    "parse_overlay",
    "to_problem",
]

FORMATS = ("FULL_MATRIX", "UPPER_ROW", "LOWER_ROW", "UPPER_DIAG_ROW", "LOWER_DIAG_ROW")
KINDS = ("TSP", "ATSP", "SOP")

# Published optimal closed-tour values, keyed by normalized instance name.
KNOWN_OPTIMA = {
    "five": 19,
    "p01": 291,
    "gr17": 2085,
    "esc07": 2125,
    "esc11": 2075,
    "br17.12": 55,
}

BUNDLED_INSTANCES = ("five.tsp", "p01.tsp", "gr17.tsp")


class TsplibParseError(InputError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        where = ""
        if source:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.line = line


@dataclass(frozen=True)
class TsplibInstance:
    name: str
    kind: str
    dimension: int
    edge_weight_format: str
    weights: np.ndarray
    precedence: frozenset = frozenset()
    comment: str = ""

    @property
    def key(self) -> str:
        return normalize_name(self.name)

    @property
    def core_precedence(self) -> frozenset:
        """Precedence pairs not involving the SOP start and end dummy nodes."""
        if self.kind != "SOP":
            return self.precedence
        last = self.dimension - 1
        return frozenset((i, j) for i, j in self.precedence if {i, j}.isdisjoint({0, last}))


def normalize_name(name: str) -> str:
    name = name.strip().lower()
    return re.sub(r"\.(sop|tsp|atsp)$", "", name)


def known_optimum(name: str) -> int | None:
    return KNOWN_OPTIMA.get(normalize_name(name))


_KEYWORD = re.compile(r"^\s*([A-Z_]+)\s*(?::\s*(.*?))?\s*$")
_SECTIONS = {
    "EDGE_WEIGHT_SECTION",
    "NODE_COORD_SECTION",
    "DISPLAY_DATA_SECTION",
    "FIXED_EDGES_SECTION",
    "TOUR_SECTION",
    "DEMAND_SECTION",
    "DEPOT_SECTION",
}


def _expand(fmt: str, n: int, values: np.ndarray) -> np.ndarray:
    w = np.zeros((n, n))
    if fmt == "FULL_MATRIX":
        return values.reshape(n, n).copy()
    rows, cols = {
        "UPPER_ROW": np.triu_indices(n, 1),
        "LOWER_ROW": np.tril_indices(n, -1),
        "UPPER_DIAG_ROW": np.triu_indices(n),
        "LOWER_DIAG_ROW": np.tril_indices(n),
    }[fmt]
    w[rows, cols] = values
    w[cols, rows] = values
    return w


def _expected_count(fmt: str, n: int) -> int:
    return {
        "FULL_MATRIX": n * n,
        "UPPER_ROW": n * (n - 1) // 2,
        "LOWER_ROW": n * (n - 1) // 2,
        "UPPER_DIAG_ROW": n * (n + 1) // 2,
        "LOWER_DIAG_ROW": n * (n + 1) // 2,
    }[fmt]


def parse(text: str, source: str | None = None) -> TsplibInstance:
    """Parse a TSPLIB document with an explicit edge-weight matrix.

    In SOP instances an entry of -1 at ``(i, j)`` means ``j`` must precede
    ``i``; such entries become precedence pairs ``(j, i)`` with weight 0.
    """
    header: dict[str, tuple[str, int]] = {}
    tokens: list[tuple[str, int]] = []
    section = None
    section_line = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        m = _KEYWORD.match(line)
        if m and (m.group(1) in _SECTIONS or m.group(2) is not None or m.group(1) == "EOF"):
            key = m.group(1)
            if key == "EOF":
                break
            if key in _SECTIONS:
                section, section_line = key, lineno
                continue
            section = None
            header[key] = (m.group(2) or "", lineno)
            continue
        if section is None:
            raise TsplibParseError(f"unexpected data outside a section: {line!r}", lineno, source)
        if section == "EDGE_WEIGHT_SECTION":
            tokens.extend((tok, lineno) for tok in line.split())

    def field(key, default=None):
        return header.get(key, (default, None))

    kind, kind_line = field("TYPE", "TSP")
    kind = kind.split()[0].upper() if kind else "TSP"
    if kind not in KINDS:
        raise TsplibParseError(f"unsupported TYPE {kind!r}", kind_line, source)
    dim_text, dim_line = field("DIMENSION")
    if dim_text is None:
        raise TsplibParseError("missing DIMENSION", None, source)
    try:
        n = int(dim_text)
    except ValueError:
        raise TsplibParseError(f"bad DIMENSION {dim_text!r}", dim_line, source) from None
    if n < 1:
        raise TsplibParseError(f"DIMENSION must be positive, got {n}", dim_line, source)
    ewt, ewt_line = field("EDGE_WEIGHT_TYPE", "EXPLICIT")
    if ewt.upper() != "EXPLICIT":
        raise TsplibParseError(
            f"EDGE_WEIGHT_TYPE {ewt!r} is not supported; only EXPLICIT matrices are", ewt_line, source
        )
    fmt, fmt_line = field("EDGE_WEIGHT_FORMAT", "FULL_MATRIX")
    fmt = fmt.upper()
    if fmt not in FORMATS:
        raise TsplibParseError(f"unknown EDGE_WEIGHT_FORMAT {fmt!r}", fmt_line, source)
    if section_line is None and not tokens:
        raise TsplibParseError("missing EDGE_WEIGHT_SECTION", None, source)

    expected = _expected_count(fmt, n)
    # SOP files repeat the dimension as the first token of the weight section
    if kind == "SOP" and len(tokens) == expected + 1 and tokens[0][0] == str(n):
        tokens = tokens[1:]
    if len(tokens) < expected:
        last = tokens[-1][1] if tokens else section_line
        raise TsplibParseError(
            f"EDGE_WEIGHT_SECTION truncated: expected {expected} values for DIMENSION {n} "
            f"({fmt}), found {len(tokens)} (section starts at line {section_line})",
            last,
            source,
        )
    if len(tokens) > expected:
        raise TsplibParseError(
            f"EDGE_WEIGHT_SECTION has {len(tokens)} values but DIMENSION {n} ({fmt}) needs "
            f"{expected}; first surplus value",
            tokens[expected][1],
            source,
        )
    try:
        values = np.array([float(tok) for tok, _ in tokens])
    except ValueError:
        bad = next(t for t in tokens if not _is_number(t[0]))
        raise TsplibParseError(f"non-numeric weight {bad[0]!r}", bad[1], source) from None

    w = _expand(fmt, n, values)
    precedence = set()
    if kind == "SOP":
        for i, j in zip(*np.nonzero(w == -1)):
            precedence.add((int(j), int(i)))
        w[w == -1] = 0.0
    np.fill_diagonal(w, 0.0)
    if (w < 0).any():
        i, j = map(int, np.argwhere(w < 0)[0])
        raise TsplibParseError(f"negative weight at ({i}, {j})", section_line, source)
    name = field("NAME", "")[0] or (Path(source).stem if source else "")
    instance = TsplibInstance(
        name=name,
        kind=kind,
        dimension=n,
        edge_weight_format=fmt,
        weights=w,
        precedence=frozenset(precedence),
        comment=field("COMMENT", "")[0],
    )
    if precedence:
        # reuse the problem constructor's cycle check
        OrderingProblem(w, instance.precedence)
    return instance


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def load(path: str | Path) -> TsplibInstance:
    path = Path(path)
    return parse(path.read_text(), source=str(path))


def bundled_path(filename: str) -> Path:
    return Path(str(resources.files("mtplan") / "data" / filename))


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def dumps(instance: TsplibInstance) -> str:
    """Serialize as a FULL_MATRIX document (SOP precedence written back as -1)."""
    w = instance.weights.copy()
    for i, j in instance.precedence:
        w[j, i] = -1
    lines = [
        f"NAME: {instance.name}",
        f"TYPE: {instance.kind}",
    ]
    if instance.comment:
        lines.append(f"COMMENT: {instance.comment}")
    lines += [
        f"DIMENSION: {instance.dimension}",
        "EDGE_WEIGHT_TYPE: EXPLICIT",
        "EDGE_WEIGHT_FORMAT: FULL_MATRIX",
        "EDGE_WEIGHT_SECTION",
    ]
    if instance.kind == "SOP":
        lines.append(str(instance.dimension))
    lines += [" ".join(_fmt(v) for v in row) for row in w]
    lines.append("EOF")
    return "\n".join(lines) + "\n"


def parse_overlay(text: str, source: str | None = None) -> list[tuple[int, int, float]]:
    """Conditional-probability sidecar: one ``i j p`` triple per line, ``#`` comments."""
    triples = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if len(parts) != 3:
                raise ValueError
            triples.append((int(parts[0]), int(parts[1]), float(parts[2])))
        except ValueError:
            raise TsplibParseError(f"expected 'i j p', got {raw.strip()!r}", lineno, source) from None
    return triples


def to_problem(
    instance: TsplibInstance, conditional_overlay: Iterable[tuple[int, int, float]] | None = None
) -> OrderingProblem:
    """Closed-tour ordering problem with the instance's precedence and an optional overlay."""
    overlay = {}
    for i, j, p in conditional_overlay or ():
        if not (0 <= i < instance.dimension and 0 <= j < instance.dimension):
            raise InputError(f"overlay pair ({i}, {j}) is outside 0..{instance.dimension - 1}")
        overlay[(i, j)] = p
    return OrderingProblem(instance.weights, instance.precedence, overlay, Objective.CLOSED_TOUR)
