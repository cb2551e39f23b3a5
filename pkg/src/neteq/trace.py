"""Per-iteration solver traces with delimited-text round trip."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field


@dataclass
class SolveTrace:
    """Tabular per-iteration records plus run metadata and event markers.

    Column sets differ by solver family (assignment traces carry primal /
    dual / gap / violation / L / A / oracle_calls, distribution traces carry
    the dual value, marginal residuals, and the certificate), so columns are
    data.  Iterations must be strictly increasing and elapsed time
    nondecreasing; ``append`` enforces both.
    """

    columns: tuple[str, ...]
    meta: dict = field(default_factory=dict)
    rows: list[tuple] = field(default_factory=list)
    events: list[tuple[int, str]] = field(default_factory=list)

    def append(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} values, got {len(values)}")
        if self.rows:
            if values[0] <= self.rows[-1][0]:
                raise ValueError("iteration numbers must be strictly increasing")
            ie = self._elapsed_idx()
            if ie is not None and values[ie] < self.rows[-1][ie]:
                raise ValueError("elapsed time must be nondecreasing")
        self.rows.append(tuple(values))

    def _elapsed_idx(self) -> int | None:
        try:
            return self.columns.index("elapsed_s")
        except ValueError:
            return None

    def mark(self, iteration: int, message: str) -> None:
        self.events.append((int(iteration), message))

    def column(self, name: str) -> list:
        k = self.columns.index(name)
        return [r[k] for r in self.rows]

    def last(self, name: str):
        return self.rows[-1][self.columns.index(name)]

    def to_text(self) -> str:
        out = [f"# {k} = {v}" for k, v in sorted(self.meta.items())]
        out += [f"# event iter={i}: {m}" for i, m in self.events]
        out.append("\t".join(self.columns))
        for r in self.rows:
            out.append("\t".join(_fmt(v) for v in r))
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SolveTrace":
        meta: dict = {}
        events: list[tuple[int, str]] = []
        columns: tuple[str, ...] | None = None
        rows: list[tuple] = []
        for line in text.splitlines():
            if not line.strip():
                continue
            if line.startswith("# event iter="):
                head, msg = line[len("# event iter="):].split(":", 1)
                events.append((int(head), msg.strip()))
            elif line.startswith("#"):
                k, _, v = line[1:].partition("=")
                meta[k.strip()] = v.strip()
            elif columns is None:
                columns = tuple(line.split("\t"))
            else:
                vals = []
                for c, s in zip(columns, line.split("\t")):
                    vals.append(int(s) if c in ("iter", "oracle_calls") else float(s))
                rows.append(tuple(vals))
        if columns is None:
            raise ValueError("empty trace")
        return cls(columns=columns, meta=meta, rows=rows, events=events)


def _fmt(v) -> str:
    if isinstance(v, (int,)):
        return str(v)
    return repr(float(v))


class Stopwatch:
    def __init__(self) -> None:
        self.t0 = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self.t0


def config_hash(obj) -> str:
    """Stable short hash of a JSON-serializable config."""
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]
