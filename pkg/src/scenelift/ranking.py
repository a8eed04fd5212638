"""Rank-reply parsing and rank correlation.

Model replies rank M methods on three criteria in a fixed text block
after a "Final answer:" marker. Parsing tolerates the markdown noise
models emit despite instructions. Correlation is Kendall's tau-b by
default (replies may contain ties); tau-a is available for comparison.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import LengthMismatch, MissingMarker, ParseFailure

CRITERIA = ("semantic_correctness", "layout_correctness", "overall_preference")

_MARKER = re.compile(r"final answer:", re.IGNORECASE)
_ORDINALS = (
    "first",
    "second",
    "third",
    "fourth",
    "fifth",
    "sixth",
    "seventh",
    "eighth",
    "ninth",
    "tenth",
)


@dataclass(frozen=True, slots=True)
class RankMatrix:
    """Ranks per method per criterion; rank 1 is best."""

    ranks: tuple  # ranks[method][criterion]
    tie_flags: tuple  # per criterion: column contains duplicates

    def __post_init__(self) -> None:
        object.__setattr__(self, "ranks", tuple(tuple(int(r) for r in row) for row in self.ranks))
        widths = {len(row) for row in self.ranks}
        if len(widths) > 1:
            raise LengthMismatch("ragged rank matrix")
        object.__setattr__(self, "tie_flags", tuple(bool(f) for f in self.tie_flags))

    @property
    def method_count(self) -> int:
        return len(self.ranks)

    @property
    def criteria_count(self) -> int:
        return len(self.ranks[0]) if self.ranks else 0

    def column(self, criterion: int) -> tuple:
        return tuple(row[criterion] for row in self.ranks)

    def scores(self) -> tuple:
        """Rank -> score map: best rank 1 becomes the highest score M."""
        m = self.method_count
        return tuple(tuple(m + 1 - r for r in row) for row in self.ranks)


def _sanitize_line(line: str) -> str:
    text = line.replace("*", "").replace('"', "")
    text = text.strip()
    text = text.lstrip("-•–").strip()
    return text


def parse_rankings(reply: str, method_count: int) -> RankMatrix:
    """Extract the rank matrix from a reply's final-answer block.

    The block after the last case-insensitive "Final answer:" marker
    must hold one line per method, each with exactly 3 integers in
    1..method_count, optionally prefixed "The k-th one:". Stray
    markdown (asterisks, quotes, bullets) is stripped first.
    """
    matches = list(_MARKER.finditer(reply))
    if not matches:
        raise MissingMarker("reply contains no 'Final answer:' marker")
    tail = reply[matches[-1].end() :]
    lines = [line for line in tail.splitlines() if _sanitize_line(line)]
    if len(lines) < method_count:
        raise ParseFailure(
            f"final-answer block has {len(lines)} usable lines, needs {method_count}"
        )
    rows = []
    for raw in lines[:method_count]:
        text = _sanitize_line(raw)
        if ":" in text:
            text = text.rsplit(":", 1)[1]
        tokens = text.split()
        try:
            values = [int(tok) for tok in tokens]
        except ValueError as exc:
            raise ParseFailure(f"cannot parse ranking line: {raw!r}") from exc
        if len(values) != 3:
            raise ParseFailure(f"expected 3 ranks, got {len(values)}: {raw!r}")
        if any(not 1 <= v <= method_count for v in values):
            raise ParseFailure(f"rank out of range 1..{method_count}: {raw!r}")
        rows.append(tuple(values))
    tie_flags = tuple(
        len(set(row[c] for row in rows)) < len(rows) for c in range(3)
    )
    return RankMatrix(ranks=tuple(rows), tie_flags=tie_flags)


def format_reply(matrix: RankMatrix) -> str:
    """Render a matrix in the reply format parse_rankings consumes."""
    lines = ["Final answer:"]
    for k, row in enumerate(matrix.ranks):
        name = _ORDINALS[k] if k < len(_ORDINALS) else f"{k + 1}-th"
        lines.append(f"The {name} one: {' '.join(str(r) for r in row)}")
    return "\n".join(lines)


def _merge_count(values: list) -> tuple:
    """Sorted copy plus the number of strictly descending pairs."""
    n = len(values)
    if n < 2:
        return list(values), 0
    mid = n // 2
    left, inv_l = _merge_count(values[:mid])
    right, inv_r = _merge_count(values[mid:])
    merged = []
    inversions = inv_l + inv_r
    i = j = 0
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            merged.append(left[i])
            i += 1
        else:
            inversions += len(left) - i
            merged.append(right[j])
            j += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    return merged, inversions


def _tie_pairs(values) -> int:
    counts: dict = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return sum(c * (c - 1) // 2 for c in counts.values())


def kendall_tau(ranks_a, ranks_b, variant: str = "b") -> float:
    """Kendall rank correlation; tau-b corrects for ties.

    tau-b = (C - D) / sqrt((C + D + T_a) * (C + D + T_b)) with T_a/T_b
    the pairs tied only in one list. Discordant pairs are counted by
    merge-sort inversions over b after sorting by (a, b), so ties never
    contribute. Returns NaN when every pair is tied in either list.
    """
    a = list(ranks_a)
    b = list(ranks_b)
    if len(a) != len(b):
        raise LengthMismatch(f"rank lists differ in length: {len(a)} vs {len(b)}")
    if variant not in ("a", "b"):
        raise ValueError("variant must be 'a' or 'b'")
    n = len(a)
    n0 = n * (n - 1) // 2
    n1 = _tie_pairs(a)
    n2 = _tie_pairs(b)
    order = sorted(range(n), key=lambda i: (a[i], b[i]))
    _, discordant = _merge_count([b[i] for i in order])
    n3 = _tie_pairs([(a[i], b[i]) for i in range(n)])
    concordant = n0 - n1 - n2 + n3 - discordant
    numerator = concordant - discordant
    if variant == "a":
        if n0 == 0:
            return float("nan")
        return numerator / n0
    denom_sq = (n0 - n1) * (n0 - n2)
    if denom_sq == 0:
        return float("nan")
    return numerator / math.sqrt(denom_sq)


RATING_COLUMNS = ("scene_id", "method", "criterion", "rank")


def read_ratings_csv(path) -> dict:
    """Load ratings keyed by (scene_id, method, criterion) -> rank."""
    ratings: dict = {}
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(RATING_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ParseFailure(f"ratings CSV missing columns: {sorted(missing)}")
        for row in reader:
            key = (row["scene_id"], row["method"], row["criterion"])
            if key in ratings:
                raise ParseFailure(f"duplicate rating for {key}")
            ratings[key] = int(row["rank"])
    return ratings


def align_ratings(ratings_a: dict, ratings_b: dict) -> tuple:
    """Paired rank lists over the shared keys, in sorted key order."""
    if set(ratings_a) != set(ratings_b):
        only_a = sorted(set(ratings_a) - set(ratings_b))[:3]
        only_b = sorted(set(ratings_b) - set(ratings_a))[:3]
        raise LengthMismatch(f"rating keys differ (e.g. {only_a} vs {only_b})")
    keys = sorted(ratings_a)
    return [ratings_a[k] for k in keys], [ratings_b[k] for k in keys], keys
