import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from enetmodel import circuits
from enetmodel import netlist as nl
from enetmodel.twoport import ElementKind as K, mna_two_port


def test_parse_basic_fields():
    n = nl.parse(circuits.lc_network_text())
    assert n.name == "lc_network"
    assert (n.port_in, n.port_out) == ("in", "mid")
    assert [e.name for e in n.elements] == ["L1", "C1"]
    assert n.element("L1").kind is K.INDUCTOR and n.element("L1").value == 1e-9
    assert n.tags == {"L1": "net1", "C1": "net1"}
    assert n.labels() == ["net1"]


@pytest.mark.parametrize("tok,val", [("2n", 2e-9), ("0.5p", 0.5e-12), ("1meg", 1e6),
                                     ("3K", 3e3), ("4.7e-3", 4.7e-3), ("10u", 1e-5),
                                     ("1g", 1e9), (".5f", 0.5e-15)])
def test_value_suffixes(tok, val):
    assert nl.parse_value(tok) == pytest.approx(val, rel=1e-15)


def test_comments_ranges_and_fixed():
    text = """# header
.ports a b
R1 a b 10  # trailing
C1 b 0 1p fixed
.range R1 1 100 log
"""
    n = nl.parse(text)
    assert n.fixed == frozenset({"C1"})
    assert n.ranges == {"R1": (1.0, 100.0, "log")}
    params = nl.enumerate_parameters(n)
    assert [p.name for p in params] == ["R1"] and params[0].owner == "residual"


@pytest.mark.parametrize("text,line", [
    (".ports a b\nQ1 a b 1\n", 2),
    (".ports a b\nR1 a b\n", 2),
    (".ports a b\nR1 a b 1\nR1 a b 2\n", 3),
    (".ports a b\nR1 a b -5\n", 2),
    (".ports a b\nR1 a b 1x\n", 2),
    (".ports a b\nS1 a b maybe\n", 2),
    (".ports a b\nS2 a b ~S1\n", 2),
    (".ports a b\nR1 a b 1\n.range R1 5 1\n", 3),
    (".ports a b\nR1 a b 1\n.range R9 1 5\n", 3),
    (".ports a b\nR1 a b 1\n.bogus\n", 3),
    (".ports a b\nR1 a b 1 @x @y\n", 2),
])
def test_syntax_errors_report_line(text, line):
    with pytest.raises(nl.NetlistSyntaxError) as info:
        nl.parse(text)
    assert info.value.lineno == line


def test_missing_ports_and_undeclared_nodes():
    with pytest.raises(nl.NetlistSyntaxError):
        nl.parse("R1 a b 1\n")
    with pytest.raises(nl.NetlistSyntaxError):
        nl.parse(".ports a z\nR1 a b 1\n")
    with pytest.raises(nl.NetlistSyntaxError):
        nl.parse(".ports a b\nG1 b 0 q 0 1m\nR1 a b 1\n")


def test_slaved_switch_follows_master():
    n = nl.parse(circuits.phase_shifter_text("lpt", "hpt", sw1="on"))
    assert n.links == {"S1A": "S1", "S1B": "S1", "S2A": "S2", "S2B": "S2"}
    assert n.element("S1A").value == 0.0 and n.element("S2A").value == 1.0
    flipped = n.with_values({"S1": 0, "S2": 1})
    assert flipped.element("S1B").value == 1.0 and flipped.element("S2B").value == 0.0
    with pytest.raises(ValueError):
        n.with_values({"S1A": 1})
    with pytest.raises(KeyError):
        n.with_values({"nope": 1})


@pytest.mark.parametrize("text", [
    circuits.lc_network_text(),
    circuits.two_stage_lna_text(),
    circuits.phase_shifter_text("lppi", "hpt", "on", "off"),
    circuits.variant_text("lpt"),
])
def test_render_round_trip(text):
    n = nl.parse(text)
    assert nl.parse(nl.render(n)) == n
    assert nl.render(nl.parse(nl.render(n))) == nl.render(n)


@given(st.lists(st.floats(min_value=1e-15, max_value=1e6, allow_subnormal=False),
                min_size=1, max_size=5))
def test_render_preserves_values_exactly(values):
    lines = [".ports n0 n%d" % len(values)]
    lines += [f"R{k} n{k} n{k + 1} {v!r}" for k, v in enumerate(values)]
    n = nl.parse("\n".join(lines))
    back = nl.parse(nl.render(n))
    assert [e.value for e in back.elements] == values


# --- partition ------------------------------------------------------------------------

def test_partition_lc_network_single_network():
    p = nl.partition(nl.parse(circuits.lc_network_text()))
    assert p.labels == ("net1",)
    assert p.enetworks[0].port1[0] == "in" and p.enetworks[0].port2[0] == "mid"
    assert p.residual == ()


def test_partition_orders_networks_from_input():
    n = nl.parse(circuits.phase_shifter_text("lpt", "hpt"))
    p = nl.partition(n)
    assert p.labels == ("net1", "net2")
    assert (p.enetworks[0].port1[0], p.enetworks[0].port2[0]) == ("a1", "b1")
    assert (p.enetworks[1].port1[0], p.enetworks[1].port2[0]) == ("a2", "b2")
    # only master switches are free residual values
    assert p.residual_names == ["S1", "S2"]


def test_partition_reversed_declaration_gives_same_order():
    text = circuits.phase_shifter_text("lpt", "hpt").splitlines()
    body = [ln for ln in text if ln.startswith(("L", "C"))]
    rest = [ln for ln in text if not ln.startswith(("L", "C"))]
    n = nl.parse("\n".join(rest[:2] + body[::-1] + rest[2:]) + "\n")
    assert nl.partition(n).labels == ("net1", "net2")


def test_lna_partition_and_parameters():
    n = nl.parse(circuits.two_stage_lna_text())
    p = nl.partition(n)
    assert p.labels == ("min", "mid", "mout")
    params = nl.enumerate_parameters(n)
    assert len(params) == 14
    owners = {q.owner for q in params}
    assert owners == {"min", "mid", "mout", "residual"}
    assert p.residual_names == ["G1", "Cgs1", "Cgd1", "Rds1", "G2", "Cgs2", "Rds2"]


def test_three_terminal_group_is_not_two_port():
    text = """.ports a c
L1 a b 1n @x
L2 b c 1n @x
R1 b 0 50
"""
    with pytest.raises(nl.NotTwoPort):
        nl.partition(nl.parse(text))


def test_equidistant_ports_are_ambiguous():
    text = """.ports in out
R1 in a 10
R2 in b 10
L1 a b 1n @x
R3 a out 10
R4 b out 10
"""
    with pytest.raises(nl.AmbiguousOrder):
        nl.partition(nl.parse(text))


def test_missing_range_error():
    with pytest.raises(nl.MissingRange):
        nl.enumerate_parameters(nl.parse(".ports a b\nR1 a b 10\n"))


def test_range_override_and_decode():
    n = nl.parse(".ports a b\nR1 a b 10\n.range R1 1 100\n")
    (p,) = nl.enumerate_parameters(n, {"R1": (1.0, 1000.0, "log")})
    assert p.decode(0.5) == pytest.approx(31.6227766, rel=1e-8)
    assert p.encode(p.decode(0.3)) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        nl.DesignParameter("x", "residual", 5.0, 1.0)


def test_skeleton_reproduces_full_circuit():
    n = nl.parse(circuits.phase_shifter_text("lppi", "hpt", "off", "on"))
    p = nl.partition(n)
    f = 2e9
    ss = [mna_two_port(sub, f) for sub in p.enetworks]
    whole = mna_two_port(n.subcircuit(), f).to_array()
    skel = mna_two_port(p.skeleton(ss), f).to_array()
    assert np.max(np.abs(whole - skel)) < 1e-9


def test_extract_is_standalone():
    n = nl.parse(circuits.phase_shifter_text("lpt", "lppi"))
    sub = nl.extract(n, "net2", "v")
    assert sub.tags == {} and sub.name == "v"
    assert (sub.port_in, sub.port_out) == ("a2", "b2")
    assert [p.name for p in nl.enumerate_parameters(sub)] == ["C21", "L22", "C23"]
    with pytest.raises(nl.NetlistError):
        nl.extract(n, "zzz")


def test_topology_key_ignores_names_and_values():
    a = nl.partition(nl.parse(circuits.phase_shifter_text("lpt", "hpt"))).enetworks
    b = nl.partition(nl.parse(circuits.phase_shifter_text("hpt", "lpt"))).enetworks
    assert nl.topology_key(a[0]) == nl.topology_key(b[1])
    assert nl.topology_key(a[1]) == nl.topology_key(b[0])
    assert nl.topology_key(a[0]) != nl.topology_key(a[1])
    alone = nl.partition(nl.parse(circuits.variant_text("lpt"))).enetworks[0]
    assert nl.topology_key(alone) == nl.topology_key(a[0])


def test_family_has_nine_distinct_circuits():
    fam = circuits.phase_shifter_family()
    assert len({nl.circuit_key(n) for n in fam}) == 9
