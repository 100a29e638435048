"""Linear two-port engine: element models, nodal analysis, S/ABCD algebra.

Every network handled here is linear at a single frequency.  The modified
nodal analysis (MNA) solver is the reference for everything else in the
package; the ABCD path only covers ladders and serves as a cross-check.

S-parameter blocks (``ElementKind.SBLOCK``) let an already-characterised
two-port be dropped into a larger circuit, which is how E-network
S-parameters are recombined with residual elements.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

GROUND = "0"
SWITCH_ON_RESISTANCE = 1e-3
SHORT_CONDUCTANCE = 1e9
PIVOT_RTOL = 1e-14


class TwoPortError(Exception):
    pass


class InvalidElement(TwoPortError):
    pass


class SingularNetwork(TwoPortError):
    pass


class InvalidTopology(TwoPortError):
    pass


class DegenerateConversion(TwoPortError):
    pass


class NoThroughPath(TwoPortError):
    pass


class ElementKind(str, enum.Enum):
    RESISTOR = "resistor"
    INDUCTOR = "inductor"
    CAPACITOR = "capacitor"
    SWITCH = "switch"
    VCCS = "vccs"
    PORT = "port"
    SHORT = "short"
    OPEN = "open"
    SBLOCK = "sblock"


# kinds whose value is a physical quantity that must be positive
VALUED_KINDS = (ElementKind.RESISTOR, ElementKind.INDUCTOR,
                ElementKind.CAPACITOR, ElementKind.VCCS)


@dataclass(frozen=True)
class SMatrix:
    s11: complex
    s12: complex
    s21: complex
    s22: complex

    def __post_init__(self):
        for v in (self.s11, self.s12, self.s21, self.s22):
            if not cmath.isfinite(v):
                raise ValueError(f"non-finite S-parameter entry: {v}")

    @classmethod
    def from_array(cls, a) -> "SMatrix":
        a = np.asarray(a, dtype=complex)
        return cls(complex(a[0, 0]), complex(a[0, 1]),
                   complex(a[1, 0]), complex(a[1, 1]))

    @classmethod
    def identity(cls) -> "SMatrix":
        """The through connection."""
        return cls(0j, 1 + 0j, 1 + 0j, 0j)

    def to_array(self) -> np.ndarray:
        return np.array([[self.s11, self.s12], [self.s21, self.s22]],
                        dtype=complex)

    def spectral_norm(self) -> float:
        return float(np.linalg.norm(self.to_array(), 2))

    def is_passive(self, tol: float = 1e-9) -> bool:
        return self.spectral_norm() <= 1.0 + tol


@dataclass(frozen=True)
class AbcdMatrix:
    a: complex
    b: complex
    c: complex
    d: complex

    @classmethod
    def identity(cls) -> "AbcdMatrix":
        return cls(1 + 0j, 0j, 0j, 1 + 0j)

    @classmethod
    def series(cls, z: complex) -> "AbcdMatrix":
        return cls(1 + 0j, complex(z), 0j, 1 + 0j)

    @classmethod
    def shunt(cls, y: complex) -> "AbcdMatrix":
        return cls(1 + 0j, 0j, complex(y), 1 + 0j)

    def to_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=complex)

    def det(self) -> complex:
        return self.a * self.d - self.b * self.c

    def __matmul__(self, other: "AbcdMatrix") -> "AbcdMatrix":
        return AbcdMatrix(self.a * other.a + self.b * other.c,
                          self.a * other.b + self.b * other.d,
                          self.c * other.a + self.d * other.c,
                          self.c * other.b + self.d * other.d)


@dataclass(frozen=True)
class Element:
    """One circuit branch.

    ``value`` is ohms, henries, farads or siemens depending on ``kind``.
    Switches carry their state in ``value`` (1.0 = on, 0.0 = off) so the
    state can be used directly as a numeric feature.  ``sparams`` is only
    set for S-parameter blocks, whose two ports are (n1, ground) and
    (n2, ground).
    """
    name: str
    kind: ElementKind
    n1: str
    n2: str
    value: float = 0.0
    ctrl: tuple[str, str] | None = None
    sparams: SMatrix | None = None

    @property
    def nodes(self) -> tuple[str, ...]:
        if self.ctrl is None:
            return (self.n1, self.n2)
        return (self.n1, self.n2) + tuple(self.ctrl)

    @property
    def switch_on(self) -> bool:
        return self.kind is ElementKind.SWITCH and self.value > 0.5

    def validate(self):
        if self.kind in VALUED_KINDS:
            if not (math.isfinite(self.value) and self.value > 0):
                raise InvalidElement(
                    f"{self.name}: {self.kind.value} value must be positive, "
                    f"got {self.value!r}")
        if self.kind is ElementKind.VCCS and self.ctrl is None:
            raise InvalidElement(f"{self.name}: vccs needs control nodes")
        if self.kind is ElementKind.SBLOCK and self.sparams is None:
            raise InvalidElement(f"{self.name}: S-parameter block without data")

    def with_value(self, value: float) -> "Element":
        return Element(self.name, self.kind, self.n1, self.n2, float(value),
                       self.ctrl, self.sparams)


@dataclass(frozen=True)
class Subcircuit:
    """A set of elements seen as a two-port between ``port1`` and ``port2``.

    Ports are (node, reference-node) pairs.  Ground is node ``"0"``.
    """
    elements: tuple[Element, ...]
    port1: tuple[str, str]
    port2: tuple[str, str]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))

    def nodes(self) -> list[str]:
        seen = {}
        for e in self.elements:
            for n in e.nodes:
                seen.setdefault(n, None)
        for n in (*self.port1, *self.port2):
            seen.setdefault(n, None)
        return list(seen)


def omega(f: float) -> float:
    if not (f > 0 and math.isfinite(f)):
        raise ValueError(f"frequency must be positive, got {f!r}")
    return 2.0 * math.pi * f


def element_admittance(e: Element, f: float) -> complex:
    """Branch admittance of a two-terminal element, or gm for a vccs."""
    w = omega(f)
    e.validate()
    k = e.kind
    if k is ElementKind.RESISTOR:
        return complex(1.0 / e.value)
    if k is ElementKind.CAPACITOR:
        return complex(0.0, w * e.value)
    if k is ElementKind.INDUCTOR:
        return 1.0 / complex(0.0, w * e.value)
    if k is ElementKind.SWITCH:
        return complex(1.0 / SWITCH_ON_RESISTANCE) if e.switch_on else 0j
    if k is ElementKind.SHORT:
        return complex(SHORT_CONDUCTANCE)
    if k is ElementKind.OPEN:
        return 0j
    if k is ElementKind.VCCS:
        return complex(e.value)
    raise InvalidElement(f"{e.name}: {k.value} has no branch admittance")


def solve_linear(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gaussian elimination with partial pivoting for a complex system.

    ``b`` may hold several right-hand sides as columns.  Raises
    SingularNetwork when a pivot falls below ``PIVOT_RTOL`` times the
    largest matrix entry.
    """
    a = np.array(a, dtype=complex)
    b = np.array(b, dtype=complex)
    squeeze = b.ndim == 1
    if squeeze:
        b = b[:, None]
    n = a.shape[0]
    scale = np.max(np.abs(a)) if a.size else 0.0
    if scale == 0.0:
        raise SingularNetwork("nodal matrix is identically zero")
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) <= PIVOT_RTOL * scale:
            raise SingularNetwork(f"pivot {k} vanishes (matrix is singular)")
        if p != k:
            a[[k, p]] = a[[p, k]]
            b[[k, p]] = b[[p, k]]
        factors = a[k + 1:, k] / a[k, k]
        a[k + 1:, k:] -= np.outer(factors, a[k, k:])
        b[k + 1:] -= np.outer(factors, b[k])
    x = np.zeros_like(b)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - a[k, k + 1:] @ x[k + 1:]) / a[k, k]
    return x[:, 0] if squeeze else x


def _check_topology(c: Subcircuit):
    adjacency: dict[str, set[str]] = {n: set() for n in c.nodes()}
    for e in c.elements:
        if e.kind in (ElementKind.OPEN, ElementKind.PORT):
            continue
        if e.kind is ElementKind.SBLOCK:
            links = [(e.n1, GROUND), (e.n2, GROUND), (e.n1, e.n2)]
        else:
            links = [(e.n1, e.n2)]
            if e.ctrl is not None:
                links.append(e.ctrl)
        for u, v in links:
            adjacency[u].add(v)
            adjacency[v].add(u)
    shared = c.port1[0] == c.port2[0]
    for node, ref in (c.port1, c.port2):
        if node != ref and node != GROUND and not adjacency[node] and not shared:
            raise InvalidTopology(f"port node {node!r} is floating")
    # the two ports must be in one connected piece of the element graph
    start = c.port1[0]
    seen = {start}
    stack = [start]
    while stack:
        for m in adjacency[stack.pop()]:
            if m not in seen:
                seen.add(m)
                stack.append(m)
    if c.port2[0] not in seen:
        raise InvalidTopology("port 2 is not connected to port 1")


def mna_two_port(c: Subcircuit, f: float, z0: float = 50.0) -> SMatrix:
    """S-parameters of a linear subcircuit by modified nodal analysis.

    Each port is driven in turn by a Norton source with a ``z0`` source
    impedance while the other port is terminated in ``z0``; with incident
    wave a = 1 the reflected waves are b_k = V_k / sqrt(z0) - delta_kj.
    """
    if not z0 > 0:
        raise ValueError("reference impedance must be positive")
    omega(f)
    for e in c.elements:
        e.validate()
    _check_topology(c)

    # ideal shorts merge their nodes; a huge conductance would wreck conditioning
    parent = {n: n for n in c.nodes()}

    def rep(n):
        while parent[n] != n:
            parent[n] = parent[parent[n]]
            n = parent[n]
        return n

    for e in c.elements:
        if e.kind is ElementKind.SHORT:
            a, b = rep(e.n1), rep(e.n2)
            if a != b:
                if a == GROUND:
                    a, b = b, a
                parent[a] = b

    nodes = list(dict.fromkeys(rep(n) for n in c.nodes() if rep(n) != GROUND))
    index = {n: i for i, n in enumerate(nodes)}
    index.update({n: index[rep(n)] for n in c.nodes() if rep(n) != GROUND})
    blocks = [e for e in c.elements if e.kind is ElementKind.SBLOCK]
    # Two-terminal elements with |Z| < z0 get a branch-current unknown and the
    # row V1 - V2 - Z I = 0; stamping a huge admittance instead loses digits
    # to cancellation (e.g. an inductor near DC).
    admittances = {}
    low_z = []
    for e in c.elements:
        if e.kind in (ElementKind.RESISTOR, ElementKind.INDUCTOR, ElementKind.CAPACITOR,
                      ElementKind.SWITCH):
            g = element_admittance(e, f)
            admittances[e.name] = g
            if abs(g) * z0 > 1.0:
                low_z.append(e)
    low_names = {e.name for e in low_z}
    nn = len(nodes)
    nb = nn + 2 * len(blocks)
    size = nb + len(low_z)
    y = np.zeros((size, size), dtype=complex)

    def stamp(r, col, v):
        if r in index and col in index:
            y[index[r], index[col]] += v

    def stamp_branch(n1, n2, g):
        stamp(n1, n1, g)
        stamp(n2, n2, g)
        stamp(n1, n2, -g)
        stamp(n2, n1, -g)

    for e in c.elements:
        k = e.kind
        if k in (ElementKind.OPEN, ElementKind.PORT, ElementKind.SBLOCK, ElementKind.SHORT):
            continue
        if k is ElementKind.VCCS:
            gm = e.value
            cp, cn = e.ctrl
            stamp(e.n1, cp, gm)
            stamp(e.n1, cn, -gm)
            stamp(e.n2, cp, -gm)
            stamp(e.n2, cn, gm)
            continue
        if e.name in low_names:
            continue
        g = admittances[e.name]
        if g != 0:
            stamp_branch(e.n1, e.n2, g)

    for k, e in enumerate(low_z):
        row = nb + k
        for node, sign in ((e.n1, 1.0), (e.n2, -1.0)):
            if node in index:
                y[index[node], row] += sign
                y[row, index[node]] += sign
        y[row, row] -= 1.0 / admittances[e.name]

    # S-parameter blocks: two branch currents each, constrained by
    # (1 - S) V - z0 (1 + S) I = 0 with I flowing into the block.
    for bi, e in enumerate(blocks):
        s = e.sparams.to_array()
        rows = (nn + 2 * bi, nn + 2 * bi + 1)
        terminals = (e.n1, e.n2)
        for p in range(2):
            if terminals[p] in index:
                y[index[terminals[p]], rows[p]] += 1.0
        eye = np.eye(2)
        for p in range(2):
            for q in range(2):
                if terminals[q] in index:
                    y[rows[p], index[terminals[q]]] += eye[p, q] - s[p, q]
                y[rows[p], rows[q]] += -z0 * (eye[p, q] + s[p, q])

    ports = (c.port1, c.port2)
    g0 = 1.0 / z0
    for node, ref in ports:
        stamp_branch(node, ref, g0)

    rhs = np.zeros((size, 2), dtype=complex)
    root = math.sqrt(z0)
    for j, (node, ref) in enumerate(ports):
        # Norton equivalent of a 2*sqrt(z0) volt source behind z0, i.e. a = 1
        current = 2.0 * root / z0
        if node in index:
            rhs[index[node], j] += current
        if ref in index:
            rhs[index[ref], j] -= current

    x = solve_linear(y, rhs)

    def port_voltage(p, j):
        node, ref = ports[p]
        v = x[index[node], j] if node in index else 0j
        if ref in index:
            v -= x[index[ref], j]
        return v

    s = np.empty((2, 2), dtype=complex)
    for j in range(2):
        for p in range(2):
            s[p, j] = port_voltage(p, j) / root - (1.0 if p == j else 0.0)
    if not np.all(np.isfinite(s)):
        raise SingularNetwork(f"non-finite solution at f={f!r}")
    return SMatrix.from_array(s)


def abcd_to_s(m: AbcdMatrix, z0: float = 50.0) -> SMatrix:
    den = m.a * z0 + m.b + m.c * z0 * z0 + m.d * z0
    if den == 0:
        raise DegenerateConversion("A*z0 + B + C*z0^2 + D*z0 is zero")
    s11 = (m.a * z0 + m.b - m.c * z0 * z0 - m.d * z0) / den
    s12 = 2.0 * z0 * (m.a * m.d - m.b * m.c) / den
    s21 = 2.0 * z0 / den
    s22 = (-m.a * z0 + m.b - m.c * z0 * z0 + m.d * z0) / den
    return SMatrix(s11, s12, s21, s22)


def s_to_abcd(s: SMatrix, z0: float = 50.0) -> AbcdMatrix:
    if s.s21 == 0:
        raise NoThroughPath("S21 is zero; ABCD parameters do not exist")
    two = 2.0 * s.s21
    a = ((1 + s.s11) * (1 - s.s22) + s.s12 * s.s21) / two
    b = z0 * ((1 + s.s11) * (1 + s.s22) - s.s12 * s.s21) / two
    c = ((1 - s.s11) * (1 - s.s22) - s.s12 * s.s21) / (z0 * two)
    d = ((1 - s.s11) * (1 + s.s22) + s.s12 * s.s21) / two
    return AbcdMatrix(a, b, c, d)


def cascade(ms: Sequence[AbcdMatrix]) -> AbcdMatrix:
    if not ms:
        raise ValueError("cascade of an empty chain")
    out = ms[0]
    for m in ms[1:]:
        out = out @ m
    return out


def cascade_s(ss: Sequence[SMatrix], z0: float = 50.0) -> SMatrix:
    """Chain S-matrices port 2 to port 1 (Redheffer star product).

    Unlike going through ABCD this works when some S21 is zero.
    """
    if not ss:
        raise ValueError("cascade of an empty chain")
    out = ss[0]
    for s in ss[1:]:
        den = 1.0 - out.s22 * s.s11
        if den == 0:
            raise SingularNetwork("unbounded internal reflection in cascade")
        out = SMatrix(out.s11 + out.s12 * out.s21 * s.s11 / den,
                      out.s12 * s.s12 / den,
                      out.s21 * s.s21 / den,
                      s.s22 + s.s12 * s.s21 * out.s22 / den)
    return out


def check_reciprocity(s: SMatrix, tol: float = 1e-10) -> bool:
    if not tol > 0:
        raise ValueError("tol must be positive")
    return abs(s.s12 - s.s21) <= tol


def check_symmetry(s: SMatrix, tol: float = 1e-10) -> bool:
    if not tol > 0:
        raise ValueError("tol must be positive")
    return abs(s.s11 - s.s22) <= tol


def frequency_grid(lo: float = 1.0, hi: float = 15e9, points: int = 64,
                   log: bool = True) -> np.ndarray:
    """Sorted sweep grid; log-spaced 64 points over 1 Hz..15 GHz by default."""
    if not (0 < lo < hi) or points < 1:
        raise ValueError(f"bad grid {lo}:{hi}:{points}")
    if points == 1:
        return np.array([float(lo)])
    if log:
        return np.logspace(math.log10(lo), math.log10(hi), points)
    return np.linspace(lo, hi, points)


def parse_grid(spec: str) -> np.ndarray:
    """``lo:hi:points[:log|lin]`` into a frequency grid."""
    parts = spec.split(":")
    if len(parts) not in (3, 4):
        raise ValueError(f"grid must be lo:hi:points[:log], got {spec!r}")
    log = len(parts) == 3 or parts[3].lower() == "log"
    if len(parts) == 4 and parts[3].lower() not in ("log", "lin"):
        raise ValueError(f"grid scale must be log or lin, got {parts[3]!r}")
    return frequency_grid(float(parts[0]), float(parts[1]), int(parts[2]), log)


def sweep(c: Subcircuit, grid: Iterable[float], z0: float = 50.0) -> list[SMatrix]:
    out = []
    for f in grid:
        try:
            out.append(mna_two_port(c, float(f), z0))
        except TwoPortError as exc:
            raise type(exc)(f"at f={float(f)!r} Hz: {exc}") from exc
    return out


# --- Touchstone ----------------------------------------------------------

def write_s2p(path, freqs: Sequence[float], ss: Sequence[SMatrix],
              z0: float = 50.0, comment: str = ""):
    """Write a 2-port Touchstone v1 file in Hz / RI format."""
    lines = []
    if comment:
        lines.extend("! " + c for c in comment.splitlines())
    lines.append(f"# HZ S RI R {z0:g}")
    for f, s in zip(freqs, ss):
        vals = [s.s11, s.s21, s.s12, s.s22]
        cols = [repr(float(f))]
        for v in vals:
            cols += [repr(v.real), repr(v.imag)]
        lines.append(" ".join(cols))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


_UNITS = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}


def read_s2p(path) -> tuple[np.ndarray, list[SMatrix], float]:
    """Read a 2-port Touchstone v1 file (RI, MA or DB data)."""
    units, fmt, z0 = "ghz", "ma", 50.0
    numbers: list[float] = []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("!", 1)[0].strip()
            if not line:
                continue
            if line.startswith("#"):
                opts = line[1:].lower().split()
                i = 0
                while i < len(opts):
                    o = opts[i]
                    if o in _UNITS:
                        units = o
                    elif o in ("ri", "ma", "db"):
                        fmt = o
                    elif o == "r":
                        z0 = float(opts[i + 1])
                        i += 1
                    elif o != "s":
                        raise ValueError(f"unsupported Touchstone option {o!r}")
                    i += 1
                continue
            numbers.extend(float(t) for t in line.split())
    if len(numbers) % 9:
        raise ValueError("Touchstone data is not a whole number of 2-port rows")
    data = np.array(numbers).reshape(-1, 9)

    def pair(x, y):
        if fmt == "ri":
            return complex(x, y)
        mag = 10 ** (x / 20.0) if fmt == "db" else x
        return cmath.rect(mag, math.radians(y))

    freqs = data[:, 0] * _UNITS[units]
    ss = []
    for row in data:
        s11, s21, s12, s22 = (pair(row[1 + 2 * k], row[2 + 2 * k]) for k in range(4))
        ss.append(SMatrix(s11, s12, s21, s22))
    return freqs, ss, z0


__all__ = [
    "GROUND", "SWITCH_ON_RESISTANCE", "SHORT_CONDUCTANCE", "TwoPortError",
    "InvalidElement", "SingularNetwork", "InvalidTopology",
    "DegenerateConversion", "NoThroughPath", "ElementKind", "SMatrix",
    "AbcdMatrix", "Element", "Subcircuit", "element_admittance",
    "solve_linear", "mna_two_port", "abcd_to_s", "s_to_abcd", "cascade",
    "cascade_s", "check_reciprocity", "check_symmetry", "frequency_grid",
    "parse_grid", "sweep", "write_s2p", "read_s2p",
]
