"""Desk-scale circuits used by the tests, scripts and CLI examples.

All builders return netlist text so the same circuits can be written to
disk and fed to the command line.
"""

from __future__ import annotations

import itertools

from .netlist import Netlist, parse

# E-network variants for the switched phase shifter.  Each template lists
# its elements in a fixed order so that one sub-model serves the variant in
# either position.  Ranges keep the cascade phase inside (-180, 180] at 2 GHz
# for almost every sample.
PHASE_VARIANTS = {
    # low-pass T: phase lag
    "lpt": [("L", "{a}", "{x}", 1.5e-9, 0.5e-9, 3e-9),
            ("C", "{x}", "0", 1.0e-12, 0.3e-12, 2e-12),
            ("L", "{x}", "{b}", 1.5e-9, 0.5e-9, 3e-9)],
    # high-pass T: phase lead
    "hpt": [("C", "{a}", "{x}", 4e-12, 2e-12, 8e-12),
            ("L", "{x}", "0", 5e-9, 3e-9, 10e-9),
            ("C", "{x}", "{b}", 4e-12, 2e-12, 8e-12)],
    # low-pass pi: phase lag
    "lppi": [("C", "{a}", "0", 1.0e-12, 0.3e-12, 2e-12),
             ("L", "{a}", "{b}", 3e-9, 1e-9, 5e-9),
             ("C", "{b}", "0", 1.0e-12, 0.3e-12, 2e-12)],
}


def lc_network_text(inductance: float = 1e-9, capacitance: float = 1e-12) -> str:
    """Series L into a shunt C, the textbook L-C example."""
    return (".name lc_network\n.ports in mid\n"
            f"L1 in mid {inductance!r} @net1\n"
            f"C1 mid 0 {capacitance!r} @net1\n")


def lc_network_closed_form(f: float, inductance: float, capacitance: float, z0: float = 50.0):
    """Hand-derived S-parameters of the series-L / shunt-C network.

    With s = j*2*pi*f and D = 2*z0 + s*L + s*C*z0^2 + s^2*L*C*z0:
    S11 = (s*L - s*C*z0^2 + s^2*L*C*z0) / D,  S21 = S12 = 2*z0 / D,
    S22 = (s*L - s*C*z0^2 - s^2*L*C*z0) / D.
    """
    import math
    s = 2j * math.pi * f
    ll, cc = inductance, capacitance
    d = 2 * z0 + s * ll + s * cc * z0 ** 2 + s * s * ll * cc * z0
    s11 = (s * ll - s * cc * z0 ** 2 + s * s * ll * cc * z0) / d
    s21 = 2 * z0 / d
    s22 = (s * ll - s * cc * z0 ** 2 - s * s * ll * cc * z0) / d
    return s11, s21, s21, s22


def _variant_lines(variant: str, label: str, a: str, b: str, tag_prefix: str,
                   values=None, with_ranges=True) -> tuple[list[str], list[str]]:
    elems, ranges = [], []
    x = f"{label}x"
    for k, (kind, n1, n2, default, lo, hi) in enumerate(PHASE_VARIANTS[variant]):
        name = f"{kind}{tag_prefix}{k + 1}"
        v = default if values is None else values[k]
        n1 = n1.format(a=a, b=b, x=x)
        n2 = n2.format(a=a, b=b, x=x)
        elems.append(f"{name} {n1} {n2} {v!r} @{label}")
        if with_ranges:
            ranges.append(f".range {name} {lo!r} {hi!r} log")
    return elems, ranges


def variant_text(variant: str) -> str:
    """A single phase-shifter E-network as a stand-alone two-port."""
    elems, ranges = _variant_lines(variant, "net", "p1", "p2", "")
    return "\n".join([f".name {variant}", ".ports p1 p2", *elems, *ranges]) + "\n"


def phase_shifter_text(v1: str, v2: str, sw1: str = "off", sw2: str = "off") -> str:
    """Two switchable stages in cascade.

    Each stage is an SPDT: bypass switch Sk straight across the stage plus
    series switches SkA/SkB isolating the E-network, slaved to the opposite
    state.  Sk ON takes the network out of the signal path, so both ON is a
    through connection.  The switches are the residual elements.
    """
    e1, r1 = _variant_lines(v1, "net1", "a1", "b1", "1")
    e2, r2 = _variant_lines(v2, "net2", "a2", "b2", "2")
    lines = [f".name ps_{v1}_{v2}", ".ports in out", *e1, *e2,
             f"S1 in mid {sw1}", "S1A in a1 ~S1", "S1B b1 mid ~S1",
             f"S2 mid out {sw2}", "S2A mid a2 ~S2", "S2B b2 out ~S2",
             *r1, *r2]
    return "\n".join(lines) + "\n"


def phase_shifter_family(variants=("lpt", "hpt", "lppi")) -> list[Netlist]:
    """All len(variants)^2 topologies of the switched phase shifter."""
    return [parse(phase_shifter_text(a, b)) for a, b in itertools.product(variants, repeat=2)]


def two_stage_lna_text() -> str:
    """Common-source stages with hybrid-pi devices between L-C matching networks.

    Devices (gm, Cgs, Cgd, ro) are residual parameters; the three matching
    networks are E-networks.  Fourteen sizable parameters in total.
    """
    return """\
.name lna2
.ports in out
Lg1 in g1 2n @min
Cm1 g1 0 0.5p @min
G1 d1 0 g1 0 40m
Cgs1 g1 0 0.2p
Cgd1 g1 d1 0.02p
Rds1 d1 0 500
Ld1 d1 0 3n @mid
Cc1 d1 g2 2p @mid
Cm2 g2 0 0.3p @mid
G2 d2 0 g2 0 40m
Cgs2 g2 0 0.2p
Rds2 d2 0 500
Ld2 d2 0 3n @mout
Cc2 d2 out 2p @mout
.range Lg1 0.5n 5n log
.range Cm1 0.1p 2p log
.range G1 10m 100m log
.range Cgs1 0.05p 0.5p log
.range Cgd1 0.005p 0.05p log
.range Rds1 200 2k log
.range Ld1 1n 8n log
.range Cc1 0.5p 5p log
.range Cm2 0.1p 1p log
.range G2 10m 100m log
.range Cgs2 0.05p 0.5p log
.range Rds2 200 2k log
.range Ld2 1n 8n log
.range Cc2 0.5p 5p log
"""
