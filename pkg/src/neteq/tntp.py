"""Readers and writers for TNTP-convention network, trips, and turn files.

The text conventions follow the public "transportation networks"
repository: a metadata header of ``<KEY> value`` lines terminated by
``<END OF METADATA>``, ``~`` comment lines, link rows

    init_node  term_node  capacity  length  free_flow_time  b  power  speed  toll  type ;

and trip files organized in ``Origin  i`` blocks of ``j : amount;``
entries.  Node ids in files are 1-based; they map to 0-based internal
indices.  Numeric values are taken verbatim (hours, vehicles/hour).
"""

from __future__ import annotations

import re

import numpy as np

from .network import Link, Network, NetworkError, TurnTable


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


_META_RE = re.compile(r"^<([^>]+)>\s*(.*)$")


def _split_metadata(text: str) -> tuple[dict[str, str], list[tuple[int, str]]]:
    """Header dict plus remaining (line_number, content) rows."""
    meta: dict[str, str] = {}
    body: list[tuple[int, str]] = []
    in_meta = True
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("~")[0].strip()
        if not line:
            continue
        if in_meta:
            m = _META_RE.match(line)
            if m:
                key = m.group(1).strip().upper()
                if key == "END OF METADATA":
                    in_meta = False
                else:
                    meta[key] = m.group(2).strip()
                continue
            in_meta = False
        body.append((lineno, line))
    return meta, body


def _meta_int(meta: dict[str, str], key: str, default: int | None = None) -> int:
    if key not in meta:
        if default is not None:
            return default
        raise ParseError(f"missing <{key}> in metadata header")
    try:
        return int(float(meta[key]))
    except ValueError as exc:
        raise ParseError(f"malformed <{key}> value {meta[key]!r}") from exc


def parse_tntp_network(net_text: str) -> Network:
    """Parse a TNTP network file into a Network."""
    meta, body = _split_metadata(net_text)
    n_nodes = _meta_int(meta, "NUMBER OF NODES")
    n_links = _meta_int(meta, "NUMBER OF LINKS")
    n_zones = _meta_int(meta, "NUMBER OF ZONES")
    first_thru = _meta_int(meta, "FIRST THRU NODE", default=1)

    links: list[Link] = []
    for lineno, line in body:
        fields = line.replace(";", " ").split()
        if len(fields) < 10:
            raise ParseError(f"link row needs 10 fields, got {len(fields)}", lineno)
        try:
            tail, head = int(fields[0]), int(fields[1])
            cap, length, fft = float(fields[2]), float(fields[3]), float(fields[4])
            b, power = float(fields[5]), float(fields[6])
        except ValueError as exc:
            raise ParseError(f"malformed link row {line!r}", lineno) from exc
        if not (1 <= tail <= n_nodes and 1 <= head <= n_nodes):
            raise NetworkError(
                f"line {lineno}: link references node beyond declared count {n_nodes}")
        links.append(Link(id=len(links), tail=tail - 1, head=head - 1,
                          t_free=fft, cap=cap, bpr_b=b, bpr_power=power,
                          length=length))
    if len(links) != n_links:
        raise ParseError(f"header declares {n_links} links, file has {len(links)}")
    net = Network(n_nodes, links, zones=range(n_zones), first_thru=first_thru - 1)
    return net


def parse_tntp_trips(trips_text: str, n_zones: int | None = None) -> np.ndarray:
    """Parse a TNTP trips file into a dense zones x zones demand matrix."""
    meta, body = _split_metadata(trips_text)
    declared = _meta_int(meta, "NUMBER OF ZONES", default=0)
    z = n_zones if n_zones is not None else declared
    if z <= 0:
        raise ParseError("zone count unknown: no <NUMBER OF ZONES> and none supplied")
    demand = np.zeros((z, z), dtype=float)
    origin: int | None = None
    for lineno, line in body:
        low = line.lower()
        if low.startswith("origin"):
            try:
                origin = int(line.split()[1])
            except (IndexError, ValueError) as exc:
                raise ParseError(f"malformed Origin line {line!r}", lineno) from exc
            if not 1 <= origin <= z:
                raise ParseError(f"origin {origin} outside zone range 1..{z}", lineno)
            continue
        if origin is None:
            raise ParseError("destination entries before any Origin line", lineno)
        for item in line.split(";"):
            item = item.strip()
            if not item:
                continue
            if ":" not in item:
                raise ParseError(f"malformed trip entry {item!r}", lineno)
            dst_s, amt_s = item.split(":", 1)
            try:
                dst, amt = int(dst_s), float(amt_s)
            except ValueError as exc:
                raise ParseError(f"malformed trip entry {item!r}", lineno) from exc
            if not 1 <= dst <= z:
                raise ParseError(f"destination {dst} outside zone range 1..{z}", lineno)
            if amt < 0:
                raise ParseError(f"negative demand {amt} for OD ({origin}, {dst})", lineno)
            demand[origin - 1, dst - 1] += amt
    return demand


def parse_tntp(net_text: str, trips_text: str) -> tuple[Network, np.ndarray]:
    """Parse network and trips files together; shapes are cross-checked."""
    net = parse_tntp_network(net_text)
    demand = parse_tntp_trips(trips_text, n_zones=net.n_zones)
    return net, demand


def format_tntp_network(network: Network) -> str:
    """Serialize a Network back to TNTP text (round-trips through the parser)."""
    if network.aux_mask.any():
        raise NetworkError("turn-expanded networks cannot be written as TNTP")
    out = [
        f"<NUMBER OF ZONES> {network.n_zones}",
        f"<NUMBER OF NODES> {network.n_nodes}",
        f"<FIRST THRU NODE> {network.first_thru + 1}",
        f"<NUMBER OF LINKS> {network.n_links}",
        "<END OF METADATA>",
        "~ \tinit\tterm\tcapacity\tlength\tfft\tb\tpower\tspeed\ttoll\ttype\t;",
    ]
    for lk in network.links:
        b = float(lk.bpr_b if lk.bpr_b is not None else 0.15)
        p = float(lk.bpr_power if lk.bpr_power is not None else 4.0)
        out.append(f"\t{lk.tail + 1}\t{lk.head + 1}\t{float(lk.cap)!r}\t{float(lk.length)!r}"
                   f"\t{float(lk.t_free)!r}\t{b!r}\t{p!r}\t0\t0\t1\t;")
    return "\n".join(out) + "\n"


def format_tntp_trips(demand: np.ndarray) -> str:
    """Serialize a demand matrix to TNTP trips text."""
    z = demand.shape[0]
    out = [f"<NUMBER OF ZONES> {z}",
           f"<TOTAL OD FLOW> {float(demand.sum())!r}",
           "<END OF METADATA>", ""]
    for i in range(z):
        out.append(f"Origin {i + 1}")
        row = [f"    {j + 1} : {float(demand[i, j])!r};" for j in range(z) if demand[i, j] != 0]
        out.extend(row)
        out.append("")
    return "\n".join(out) + "\n"


def parse_turn_table(text: str) -> TurnTable:
    """Parse a turn file: rows ``node in_link out_link penalty_hours``.

    Node ids are 1-based as in TNTP; link ids are 1-based row numbers of
    the network file.  ``#`` starts a comment.
    """
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#")[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 4:
            raise ParseError(f"turn row needs 4 fields, got {len(fields)}", lineno)
        try:
            rows.append((int(fields[0]) - 1, int(fields[1]) - 1,
                         int(fields[2]) - 1, float(fields[3])))
        except ValueError as exc:
            raise ParseError(f"malformed turn row {line!r}", lineno) from exc
    return TurnTable.from_rows(rows)
