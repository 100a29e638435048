"""Plain-text netlists annotated with E-network membership.

Line grammar::

    NAME node1 node2 [ctrl+ ctrl-] VALUE[suffix] [@label] [fixed]
    .name TEXT
    .ports IN OUT
    .range NAME LO HI [log]
    # comment

The element kind comes from the first letter of NAME: R, L, C, S (switch),
G (vccs, needs the two control nodes), W (short) and O (open); W and O take
no value.  A switch VALUE is ``on``, ``off`` or ``~MASTER``: the last form
slaves the switch to the opposite state of switch MASTER, which is how an
SPDT (bypass + isolation) pair is written.  Ground is node ``0``.
"""

from __future__ import annotations

import math
import re
from collections import deque
from dataclasses import dataclass, field, replace

from .twoport import GROUND, Element, ElementKind, SMatrix, Subcircuit


class NetlistError(Exception):
    pass


class NetlistSyntaxError(NetlistError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class NotTwoPort(NetlistError):
    pass


class AmbiguousOrder(NetlistError):
    pass


class MissingRange(NetlistError):
    pass


PREFIX_KINDS = {
    "R": ElementKind.RESISTOR,
    "L": ElementKind.INDUCTOR,
    "C": ElementKind.CAPACITOR,
    "S": ElementKind.SWITCH,
    "G": ElementKind.VCCS,
    "W": ElementKind.SHORT,
    "O": ElementKind.OPEN,
}
KIND_PREFIX = {v: k for k, v in PREFIX_KINDS.items()}
SIZED_KINDS = (ElementKind.RESISTOR, ElementKind.INDUCTOR,
               ElementKind.CAPACITOR, ElementKind.VCCS)

_SUFFIXES = {"f": 1e-15, "p": 1e-12, "n": 1e-9, "u": 1e-6, "m": 1e-3,
             "k": 1e3, "meg": 1e6, "g": 1e9}
_VALUE_RE = re.compile(
    r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(meg|[fpnumkg])?$",
    re.IGNORECASE)


def parse_value(token: str) -> float:
    m = _VALUE_RE.match(token)
    if not m:
        raise ValueError(f"malformed value {token!r}")
    v = float(m.group(1))
    if m.group(2):
        v *= _SUFFIXES[m.group(2).lower()]
    return v


@dataclass(frozen=True)
class DesignParameter:
    name: str
    owner: str
    lo: float
    hi: float
    scale: str = "linear"

    def __post_init__(self):
        if not (0 < self.lo < self.hi):
            raise ValueError(f"{self.name}: need 0 < lo < hi, got {self.lo}, {self.hi}")
        if self.scale not in ("linear", "log"):
            raise ValueError(f"{self.name}: scale must be linear or log")

    def decode(self, u: float) -> float:
        """Map u in [0, 1] onto the range."""
        if self.scale == "log":
            return math.exp(math.log(self.lo) + u * (math.log(self.hi) - math.log(self.lo)))
        return self.lo + u * (self.hi - self.lo)

    def encode(self, v: float) -> float:
        if self.scale == "log":
            return (math.log(v) - math.log(self.lo)) / (math.log(self.hi) - math.log(self.lo))
        return (v - self.lo) / (self.hi - self.lo)


@dataclass(frozen=True)
class Netlist:
    name: str
    elements: tuple[Element, ...]
    port_in: str
    port_out: str
    tags: dict = field(default_factory=dict)      # element name -> label
    fixed: frozenset = frozenset()
    ranges: dict = field(default_factory=dict)    # element name -> (lo, hi, scale)
    links: dict = field(default_factory=dict)     # slave switch -> master switch

    @property
    def nodes(self) -> set[str]:
        out = {GROUND, self.port_in, self.port_out}
        for e in self.elements:
            out.update(e.nodes)
        return out

    def element(self, name: str) -> Element:
        for e in self.elements:
            if e.name == name:
                return e
        raise KeyError(name)

    def labels(self) -> list[str]:
        seen = {}
        for e in self.elements:
            if e.name in self.tags:
                seen.setdefault(self.tags[e.name], None)
        return list(seen)

    def with_values(self, values: dict) -> "Netlist":
        """Copy with some element values replaced (switches take 0/1)."""
        return replace(self, elements=apply_values(self.elements, values, self.links))

    def subcircuit(self) -> Subcircuit:
        return Subcircuit(self.elements, (self.port_in, GROUND),
                          (self.port_out, GROUND), self.name)


def apply_values(elements, values: dict, links: dict) -> tuple[Element, ...]:
    """Replace element values, keeping slaved switches complementary."""
    names = {e.name for e in elements}
    unknown = set(values) - names
    if unknown:
        raise KeyError(f"unknown elements: {sorted(unknown)}")
    slaved = set(values) & set(links)
    if slaved:
        raise ValueError(f"{sorted(slaved)} follow another switch and cannot be set")
    state = {e.name: e.value for e in elements}
    state.update({k: float(v) for k, v in values.items()})
    out = []
    for e in elements:
        if e.name in links:
            out.append(e.with_value(1.0 - state[links[e.name]]))
        elif e.name in values:
            out.append(e.with_value(values[e.name]))
        else:
            out.append(e)
    return tuple(out)


def _fmt(v: float) -> str:
    return repr(float(v))


def render(n: Netlist) -> str:
    """Canonical text form; ``parse(render(n)) == n``."""
    lines = [f".name {n.name}", f".ports {n.port_in} {n.port_out}"]
    for e in n.elements:
        cols = [e.name, e.n1, e.n2]
        if e.ctrl is not None:
            cols += list(e.ctrl)
        if e.name in n.links:
            cols.append("~" + n.links[e.name])
        elif e.kind is ElementKind.SWITCH:
            cols.append("on" if e.switch_on else "off")
        elif e.kind not in (ElementKind.SHORT, ElementKind.OPEN):
            cols.append(_fmt(e.value))
        if e.name in n.tags:
            cols.append("@" + n.tags[e.name])
        if e.name in n.fixed:
            cols.append("fixed")
        lines.append(" ".join(cols))
    for e in n.elements:
        if e.name in n.ranges:
            lo, hi, scale = n.ranges[e.name]
            line = f".range {e.name} {_fmt(lo)} {_fmt(hi)}"
            lines.append(line + (" log" if scale == "log" else ""))
    return "\n".join(lines) + "\n"


def parse(text: str, name: str = "netlist") -> Netlist:
    elements: list[Element] = []
    names: set[str] = set()
    tags: dict[str, str] = {}
    fixed: set[str] = set()
    ranges: dict[str, tuple] = {}
    range_lines: dict[str, int] = {}
    links: dict[str, str] = {}
    ports = None
    ports_line = 0

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0].startswith("."):
            d = tok[0].lower()
            if d == ".name":
                if len(tok) != 2:
                    raise NetlistSyntaxError(lineno, ".name takes one word")
                name = tok[1]
            elif d == ".ports":
                if len(tok) != 3:
                    raise NetlistSyntaxError(lineno, ".ports takes IN OUT")
                ports = (tok[1], tok[2])
                ports_line = lineno
            elif d == ".range":
                if len(tok) not in (4, 5) or (len(tok) == 5 and tok[4].lower() != "log"):
                    raise NetlistSyntaxError(lineno, ".range takes NAME LO HI [log]")
                try:
                    lo, hi = parse_value(tok[2]), parse_value(tok[3])
                except ValueError as exc:
                    raise NetlistSyntaxError(lineno, str(exc)) from None
                if not 0 < lo < hi:
                    raise NetlistSyntaxError(lineno, "range needs 0 < LO < HI")
                ranges[tok[1]] = (lo, hi, "log" if len(tok) == 5 else "linear")
                range_lines[tok[1]] = lineno
            else:
                raise NetlistSyntaxError(lineno, f"unknown directive {tok[0]}")
            continue

        ename = tok[0]
        kind = PREFIX_KINDS.get(ename[0].upper())
        if kind is None:
            raise NetlistSyntaxError(lineno, f"unknown element type {ename!r}")
        if ename in names:
            raise NetlistSyntaxError(lineno, f"duplicate element name {ename!r}")
        rest = tok[1:]
        label = None
        is_fixed = False
        while rest and (rest[-1].startswith("@") or rest[-1].lower() == "fixed"):
            last = rest.pop()
            if last.lower() == "fixed":
                is_fixed = True
            else:
                if label is not None or len(last) < 2:
                    raise NetlistSyntaxError(lineno, f"bad E-network tag {last!r}")
                label = last[1:]
        n_nodes = 4 if kind is ElementKind.VCCS else 2
        n_vals = 0 if kind in (ElementKind.SHORT, ElementKind.OPEN) else 1
        if len(rest) != n_nodes + n_vals:
            raise NetlistSyntaxError(
                lineno, f"{ename}: expected {n_nodes} nodes"
                + (" and a value" if n_vals else ""))
        nodes = rest[:n_nodes]
        value = 0.0
        if n_vals:
            vt = rest[-1]
            if kind is ElementKind.SWITCH:
                if vt.startswith("~"):
                    master = next((e for e in elements if e.name == vt[1:]), None)
                    if master is None or master.kind is not ElementKind.SWITCH \
                            or master.name in links:
                        raise NetlistSyntaxError(
                            lineno, f"{vt!r} must name an earlier, independent switch")
                    links[ename] = master.name
                    value = 1.0 - master.value
                elif vt.lower() in ("on", "off"):
                    value = 1.0 if vt.lower() == "on" else 0.0
                else:
                    raise NetlistSyntaxError(lineno, f"switch state must be on/off/~NAME, got {vt!r}")
            else:
                try:
                    value = parse_value(vt)
                except ValueError as exc:
                    raise NetlistSyntaxError(lineno, str(exc)) from None
                if not value > 0:
                    raise NetlistSyntaxError(lineno, f"{ename}: value must be positive")
        ctrl = (nodes[2], nodes[3]) if kind is ElementKind.VCCS else None
        elements.append(Element(ename, kind, nodes[0], nodes[1], value, ctrl))
        names.add(ename)
        if label is not None:
            tags[ename] = label
        if is_fixed:
            fixed.add(ename)

    if ports is None:
        raise NetlistSyntaxError(0, "missing .ports directive")
    touched = {GROUND}
    for e in elements:
        touched.update((e.n1, e.n2))
    for e in elements:
        if e.ctrl is not None:
            for c in e.ctrl:
                if c not in touched:
                    raise NetlistSyntaxError(0, f"{e.name}: undeclared control node {c!r}")
    for p in ports:
        if p not in touched:
            raise NetlistSyntaxError(ports_line, f"undeclared port node {p!r}")
    for rname, ln in range_lines.items():
        if rname not in names:
            raise NetlistSyntaxError(ln, f".range for unknown element {rname!r}")
    return Netlist(name, tuple(elements), ports[0], ports[1], tags,
                   frozenset(fixed), ranges, links)


# --- partition -------------------------------------------------------------

@dataclass(frozen=True)
class Partition:
    labels: tuple[str, ...]
    enetworks: tuple[Subcircuit, ...]
    residual: tuple[Element, ...]
    port_in: str
    port_out: str
    links: dict = field(default_factory=dict)

    @property
    def residual_params(self) -> list[tuple[str, float]]:
        """The x_R vector: residual values in declaration order.

        Shorts, opens and slaved switches carry no free value and are left out.
        """
        return [(e.name, e.value) for e in self.residual
                if e.kind not in (ElementKind.SHORT, ElementKind.OPEN)
                and e.name not in self.links]

    @property
    def residual_names(self) -> list[str]:
        return [n for n, _ in self.residual_params]

    def skeleton(self, sparams, residual_values=None) -> Subcircuit:
        """The whole circuit with each E-network replaced by an S block."""
        if len(sparams) != len(self.enetworks):
            raise ValueError(f"need {len(self.enetworks)} S-matrices, got {len(sparams)}")
        elems = list(apply_values(self.residual, residual_values or {}, self.links))
        for label, sub, s in zip(self.labels, self.enetworks, sparams):
            if not isinstance(s, SMatrix):
                s = SMatrix.from_array(s)
            elems.append(Element(f"X{label}", ElementKind.SBLOCK,
                                 sub.port1[0], sub.port2[0], sparams=s))
        return Subcircuit(tuple(elems), (self.port_in, GROUND),
                          (self.port_out, GROUND), "skeleton")


def _signal_graph(elements) -> dict[str, set[str]]:
    adj: dict[str, set[str]] = {}
    for e in elements:
        links = [(e.n1, e.n2)]
        if e.ctrl is not None:
            links += [(e.ctrl[0], e.n1), (e.ctrl[0], e.n2)]
        for u, v in links:
            if GROUND in (u, v):
                continue
            adj.setdefault(u, set()).add(v)
            adj.setdefault(v, set()).add(u)
    return adj


def _bfs_distance(adj, start) -> dict[str, int]:
    dist = {start: 0}
    q = deque([start])
    while q:
        u = q.popleft()
        for v in sorted(adj.get(u, ())):
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def partition(n: Netlist) -> Partition:
    """Split a netlist into ordered two-port E-networks plus residual elements.

    A tagged group's ports are its boundary nodes: nodes it shares with
    untagged or differently tagged elements, or with the circuit ports.
    Ground is the common reference and never a boundary node.
    """
    dist = _bfs_distance(_signal_graph(n.elements), n.port_in)
    groups: dict[str, list[Element]] = {}
    for e in n.elements:
        if e.name in n.tags:
            groups.setdefault(n.tags[e.name], []).append(e)

    found = []
    for label, elems in groups.items():
        inside = {x for e in elems for x in e.nodes} - {GROUND}
        outside = {n.port_in, n.port_out}
        for e in n.elements:
            if n.tags.get(e.name) != label:
                outside.update(e.nodes)
        boundary = sorted(inside & outside)
        if len(boundary) != 2:
            raise NotTwoPort(f"E-network {label!r} has boundary nodes {boundary}; need exactly 2")
        unreachable = [b for b in boundary if b not in dist]
        if unreachable:
            raise AmbiguousOrder(f"E-network {label!r}: {unreachable} not reachable from input")
        a, b = boundary
        if dist[a] == dist[b]:
            raise AmbiguousOrder(
                f"E-network {label!r}: ports {a!r} and {b!r} are equally far from the input")
        p1, p2 = (a, b) if dist[a] < dist[b] else (b, a)
        sub = Subcircuit(tuple(elems), (p1, GROUND), (p2, GROUND), label)
        found.append((dist[p1], label, sub))

    found.sort(key=lambda t: (t[0], t[1]))
    residual = tuple(e for e in n.elements if e.name not in n.tags)
    links = {k: v for k, v in n.links.items() if k not in n.tags}
    return Partition(tuple(t[1] for t in found), tuple(t[2] for t in found),
                     residual, n.port_in, n.port_out, links)


def extract(n: Netlist, label: str, name: str | None = None) -> Netlist:
    """One E-network as a stand-alone, untagged two-port netlist."""
    part = partition(n)
    if label not in part.labels:
        raise NetlistError(f"{n.name}: no E-network {label!r}")
    sub = part.enetworks[part.labels.index(label)]
    members = {e.name for e in sub.elements}
    links = {k: v for k, v in n.links.items() if k in members}
    if any(v not in members for v in links.values()):
        raise NetlistError(f"E-network {label!r} has switches slaved to outside elements")
    return Netlist(name or label, sub.elements, sub.port1[0], sub.port2[0], {},
                   frozenset(n.fixed & members),
                   {k: v for k, v in n.ranges.items() if k in members}, links)


def enumerate_parameters(n: Netlist, ranges: dict | None = None) -> list[DesignParameter]:
    """Sizable parameters in declaration order; fixed elements are skipped.

    ``ranges`` overrides the netlist's own ``.range`` entries.  Values are
    (lo, hi) or (lo, hi, scale).
    """
    merged = dict(n.ranges)
    for k, v in (ranges or {}).items():
        merged[k] = tuple(v) if len(v) == 3 else (v[0], v[1], "linear")
    out = []
    for e in n.elements:
        if e.kind not in SIZED_KINDS or e.name in n.fixed:
            continue
        if e.name not in merged:
            raise MissingRange(f"{e.name} has neither a range nor a fixed marker")
        lo, hi, scale = merged[e.name]
        out.append(DesignParameter(e.name, n.tags.get(e.name, "residual"), lo, hi, scale))
    return out


def topology_key(sub: Subcircuit) -> str:
    """Structural identity of an E-network: element kinds and connectivity.

    Port nodes become p1/p2, ground g, internal nodes i0, i1, ... in order
    of first appearance.  Element names and values do not matter.
    """
    role = {sub.port1[0]: "p1", sub.port2[0]: "p2", GROUND: "g"}
    counter = 0
    parts = []
    for e in sub.elements:
        names = []
        for x in e.nodes:
            if x not in role:
                role[x] = f"i{counter}"
                counter += 1
            names.append(role[x])
        prefix = KIND_PREFIX.get(e.kind, "X")
        if e.kind is ElementKind.VCCS:
            parts.append(f"{prefix}({','.join(names)})")
        else:
            parts.append(f"{prefix}({','.join(sorted(names))})")
    return "+".join(sorted(parts))


def circuit_key(n: Netlist) -> str:
    """Topology identity of a whole netlist: its E-network keys in order."""
    p = partition(n)
    nets = [topology_key(s) for s in p.enetworks]
    res = [KIND_PREFIX.get(e.kind, "X") for e in p.residual]
    return "|".join(nets) + "|R:" + "".join(res)
