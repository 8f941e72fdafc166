"""SGF game record parsing.

Parses single-game SGF documents (FF[4] syntax), extracts the metadata the
analysis pipeline consumes (players, ranks, handicap, komi, result, start
time), and decodes result strings. Move sequences are parsed for validity
but only root-node metadata is retained.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from datetime import date, datetime, time
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from .errors import RecordError, SgfParseError

_WHITESPACE = frozenset(b" \t\r\n\x0b\x0c")
_OPEN, _CLOSE, _SEMI, _LBRACK, _RBRACK, _BACKSLASH = (
    ord("("), ord(")"), ord(";"), ord("["), ord("]"), ord("\\"),
)


@dataclass
class SgfGameTree:
    """One game tree: a node sequence followed by optional variations.

    Each node maps property identifiers to their value lists, in the order
    they appeared. The main line is the node sequence plus the first
    variation's main line, recursively.
    """

    nodes: list[dict[str, list[str]]] = field(default_factory=list)
    variations: list["SgfGameTree"] = field(default_factory=list)


def parse_sgf(document: str | bytes) -> SgfGameTree:
    """Parse a complete single-game SGF document.

    Accepts text or raw bytes; bytes are treated as UTF-8 with lossy
    replacement inside property values. Raises SgfParseError with the byte
    offset of the problem for any malformed input, including multi-game
    collections (exactly one top-level game tree is accepted).
    """
    data = document.encode("utf-8") if isinstance(document, str) else bytes(document)
    n = len(data)

    def skip_ws(i: int) -> int:
        while i < n and data[i] in _WHITESPACE:
            i += 1
        return i

    i = skip_ws(0)
    if i == n:
        raise SgfParseError("empty document", i)
    if data[i] != _OPEN:
        raise SgfParseError("expected '(' at start of game tree", i)

    root = SgfGameTree()
    stack = [root]
    has_variations = [False]
    node: dict[str, list[str]] | None = None
    expect_first_node = True
    i += 1

    while True:
        i = skip_ws(i)
        if i >= n:
            raise SgfParseError("unbalanced parentheses: game tree not closed", n)
        c = data[i]

        if c == _SEMI:
            if has_variations[-1]:
                raise SgfParseError("node not allowed after variations", i)
            node = {}
            stack[-1].nodes.append(node)
            expect_first_node = False
            i += 1

        elif c == _OPEN:
            if expect_first_node:
                raise SgfParseError("expected node before subtree", i)
            sub = SgfGameTree()
            stack[-1].variations.append(sub)
            has_variations[-1] = True
            stack.append(sub)
            has_variations.append(False)
            node = None
            expect_first_node = True
            i += 1

        elif c == _CLOSE:
            if expect_first_node:
                raise SgfParseError("game tree without nodes", i)
            stack.pop()
            has_variations.pop()
            node = None
            i += 1
            if not stack:
                i = skip_ws(i)
                if i < n:
                    if data[i] == _OPEN:
                        raise SgfParseError(
                            "multi-game collections are not supported", i
                        )
                    raise SgfParseError("unexpected content after game tree", i)
                return root

        elif 65 <= c <= 90:  # A-Z: property identifier
            if node is None:
                raise SgfParseError("property outside of a node", i)
            ident_start = i
            while i < n and 65 <= data[i] <= 90:
                i += 1
            ident = data[ident_start:i].decode("ascii")
            if ident in node:
                raise SgfParseError(f"duplicate property {ident} in node", ident_start)
            values: list[str] = []
            i = skip_ws(i)
            if i >= n or data[i] != _LBRACK:
                raise SgfParseError(f"property {ident} without a value", i)
            while i < n and data[i] == _LBRACK:
                value, i = _scan_value(data, i)
                values.append(value)
                i = skip_ws(i)
            node[ident] = values

        else:
            raise SgfParseError(f"unexpected byte 0x{c:02x}", i)


def _scan_value(data: bytes, i: int) -> tuple[str, int]:
    """Scan one bracketed property value starting at the '[' at offset i."""
    start = i
    i += 1
    buf = bytearray()
    n = len(data)
    while True:
        if i >= n:
            raise SgfParseError("property value not closed", start)
        b = data[i]
        if b == _BACKSLASH:
            if i + 1 >= n:
                raise SgfParseError("property value not closed", start)
            buf.append(data[i + 1])
            i += 2
        elif b == _RBRACK:
            return buf.decode("utf-8", "replace"), i + 1
        else:
            buf.append(b)
            i += 1


def serialize_sgf(tree: SgfGameTree) -> str:
    """Render a game tree back to SGF text (used for round-trip checks)."""
    parts = ["("]
    for node in tree.nodes:
        parts.append(";")
        for ident, values in node.items():
            parts.append(ident)
            for value in values:
                escaped = value.replace("\\", "\\\\").replace("]", "\\]")
                parts.append(f"[{escaped}]")
    for sub in tree.variations:
        parts.append(serialize_sgf(sub))
    parts.append(")")
    return "".join(parts)


class Winner(Enum):
    WHITE = "white"
    BLACK = "black"
    NONE = "none"


class ResultKind(Enum):
    POINTS = "points"
    RESIGNATION = "resignation"
    TIME = "time"
    FORFEIT = "forfeit"
    DRAW = "draw"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Outcome:
    """Decoded game result. margin is set only for wins by points."""

    winner: Winner
    kind: ResultKind
    margin: float | None = None

    @property
    def decisive(self) -> bool:
        return self.winner is not Winner.NONE


_RESULT_RE = re.compile(r"([BWbw])\+(.*)")
_KIND_WORDS = {
    "r": ResultKind.RESIGNATION,
    "resign": ResultKind.RESIGNATION,
    "t": ResultKind.TIME,
    "time": ResultKind.TIME,
    "f": ResultKind.FORFEIT,
    "forfeit": ResultKind.FORFEIT,
}

_UNKNOWN = Outcome(Winner.NONE, ResultKind.UNKNOWN)


def parse_result(result_text: str) -> Outcome:
    """Decode an SGF RE value. Unrecognized strings map to unknown, never error."""
    text = result_text.strip()
    if text in ("0", "Draw", "draw"):
        return Outcome(Winner.NONE, ResultKind.DRAW)
    match = _RESULT_RE.fullmatch(text)
    if match is None:
        return _UNKNOWN
    winner = Winner.WHITE if match.group(1) in "Ww" else Winner.BLACK
    rest = match.group(2).strip()
    kind = _KIND_WORDS.get(rest.lower())
    if kind is not None:
        return Outcome(winner, kind)
    try:
        margin = float(rest)
    except ValueError:
        return _UNKNOWN
    if margin < 0:
        return _UNKNOWN
    return Outcome(winner, ResultKind.POINTS, margin)


@dataclass(frozen=True)
class RawGameRecord:
    """Root-node metadata of one game, before any rating joins or filtering."""

    black_id: str
    white_id: str
    black_rank_text: str
    white_rank_text: str
    handicap_stones: int
    komi: float
    result_text: str
    start_time: datetime


def extract_game_record(tree: SgfGameTree) -> RawGameRecord:
    """Pull the analysis metadata out of a parsed tree's root node.

    PB, PW, RE and DT are required; BR/WR fall back to empty rank text and
    are filtered downstream; a missing HA means no handicap stones.
    """
    root = tree.nodes[0]

    def first(ident: str) -> str | None:
        values = root.get(ident)
        return values[0] if values else None

    black_id = first("PB")
    white_id = first("PW")
    if not black_id or not white_id:
        raise RecordError("missing player id (PB/PW)")
    result_text = first("RE")
    if result_text is None:
        raise RecordError("missing result (RE)")
    dt_text = first("DT")
    if dt_text is None:
        raise RecordError("missing start date (DT)")
    start_time = _parse_start_time(dt_text)

    ha_text = first("HA")
    if ha_text is None:
        handicap = 0
    else:
        try:
            handicap = int(ha_text.strip())
        except ValueError:
            raise RecordError(f"HA value {ha_text!r} is not an integer") from None
    if handicap < 0 or handicap == 1:
        raise RecordError(f"invalid handicap stone count {handicap}")

    km_text = first("KM")
    if km_text is None:
        komi = 0.0
    else:
        try:
            komi = float(km_text.strip())
        except ValueError:
            raise RecordError(f"KM value {km_text!r} is not a decimal") from None

    return RawGameRecord(
        black_id=black_id,
        white_id=white_id,
        black_rank_text=first("BR") or "",
        white_rank_text=first("WR") or "",
        handicap_stones=handicap,
        komi=komi,
        result_text=result_text,
        start_time=start_time,
    )


def _parse_start_time(dt_text: str) -> datetime:
    """Parse a DT value. Multiple dates keep the first; missing time means midnight."""
    token = dt_text.split(",")[0].strip()
    date_part, _, time_part = token.replace("T", " ", 1).partition(" ")
    try:
        day = date.fromisoformat(date_part)
    except ValueError:
        raise RecordError(f"DT value {dt_text!r} has no parseable ISO date") from None
    if not time_part.strip():
        return datetime.combine(day, time.min)
    try:
        at = time.fromisoformat(time_part.strip())
    except ValueError:
        raise RecordError(f"DT value {dt_text!r} has an unparseable time") from None
    return datetime.combine(day, at)


def read_sgf_file(path: str | Path) -> RawGameRecord:
    """Parse one .sgf file and extract its game record."""
    raw = Path(path).read_bytes()
    return extract_game_record(parse_sgf(raw))


def iter_sgf_dir(root: str | Path) -> Iterator[tuple[str, Path]]:
    """Yield (game_id, path) for every .sgf under root, in deterministic order.

    The game id is the file's relative path without the suffix.
    """
    base = Path(root)
    for path in sorted(base.rglob("*.sgf")):
        game_id = path.relative_to(base).with_suffix("").as_posix()
        yield game_id, path


GAME_CSV_COLUMNS = [
    "game_id", "start_time", "black_id", "white_id", "black_rank",
    "white_rank", "handicap_stones", "komi", "result",
]


def write_game_records_csv(
    rows: Iterable[tuple[str, RawGameRecord]], path: str | Path
) -> int:
    """Write (game_id, record) pairs to CSV; returns the number of rows."""
    count = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GAME_CSV_COLUMNS)
        for game_id, rec in rows:
            writer.writerow([
                game_id, rec.start_time.isoformat(), rec.black_id, rec.white_id,
                rec.black_rank_text, rec.white_rank_text,
                rec.handicap_stones, repr(rec.komi), rec.result_text,
            ])
            count += 1
    return count


def read_game_records_csv(path: str | Path) -> list[tuple[str, RawGameRecord]]:
    """Read back a game record CSV written by write_game_records_csv."""
    out: list[tuple[str, RawGameRecord]] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != GAME_CSV_COLUMNS:
            raise RecordError(f"unexpected game CSV header in {path}")
        for row in reader:
            rec = RawGameRecord(
                black_id=row["black_id"],
                white_id=row["white_id"],
                black_rank_text=row["black_rank"],
                white_rank_text=row["white_rank"],
                handicap_stones=int(row["handicap_stones"]),
                komi=float(row["komi"]),
                result_text=row["result"],
                start_time=datetime.fromisoformat(row["start_time"]),
            )
            out.append((row["game_id"], rec))
    return out
