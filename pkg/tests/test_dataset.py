import math

import numpy as np
import pytest

from enetmodel import circuits
from enetmodel import dataset as ds
from enetmodel import netlist as nl
from enetmodel.poi import POI_NAMES, poi_from_s
from enetmodel.twoport import SMatrix, mna_two_port

F = 2e9


@pytest.fixture(scope="module")
def family():
    return circuits.phase_shifter_family()


@pytest.fixture(scope="module")
def main_data(family):
    return ds.gen_main_dataset(family, ds.SamplerConfig(seed=3, count=300), F)


def lpt():
    return nl.parse(circuits.variant_text("lpt"))


def test_encodings_round_trip():
    s = SMatrix(0.1 + 0.2j, 0.3 - 0.1j, 0.3 - 0.1j, 0.1 + 0.2j)
    for enc, width in ds.ENCODINGS.items():
        vec = ds.encode_s(s, enc)
        assert len(vec) == width == len(ds.s_feature_names(enc))
        assert ds.decode_s(vec, enc) == s
    assert ds.s_feature_names("reciprocal", "e1_")[:2] == ["e1_s11_re", "e1_s11_im"]


def test_default_encoding():
    assert ds.default_encoding(lpt().elements) == "reciprocal"
    lna = nl.parse(circuits.two_stage_lna_text())
    assert ds.default_encoding(lna.elements) == "full"


def test_sub_dataset_is_deterministic(tmp_path):
    a = ds.gen_sub_dataset(lpt(), None, ds.SamplerConfig(seed=4, count=30), F)
    b = ds.gen_sub_dataset(lpt(), None, ds.SamplerConfig(seed=4, count=30), F)
    c = ds.gen_sub_dataset(lpt(), None, ds.SamplerConfig(seed=5, count=30), F)
    assert np.array_equal(a.x, b.x) and a.s == b.s
    assert not np.array_equal(a.x, c.x)
    a.save(tmp_path / "a.csv")
    b.save(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_sub_dataset_matches_oracle_and_ranges():
    d = ds.gen_sub_dataset(lpt(), None, ds.SamplerConfig(seed=1, count=200), F)
    params = nl.enumerate_parameters(lpt())
    for k, p in enumerate(params):
        col = d.x[:, k]
        assert col.min() >= p.lo and col.max() <= p.hi
        # log-uniform draws cover both halves of the log range
        mid = math.sqrt(p.lo * p.hi)
        assert 60 < np.sum(col < mid) < 140
    for i in (0, 57, 199):
        inst = lpt().with_values(dict(zip(d.param_names, d.x[i])))
        assert mna_two_port(inst.subcircuit(), F) == d.s[i]


def test_sub_dataset_save_load(tmp_path):
    d = ds.gen_sub_dataset(lpt(), None, ds.SamplerConfig(seed=2, count=10), F)
    d.save(tmp_path / "d.csv")
    back = ds.SubDataset.load(tmp_path / "d.csv")
    assert np.array_equal(back.x, d.x) and back.s == d.s
    assert back.topology_key == d.topology_key and back.param_names == d.param_names
    with pytest.raises(ds.DatasetError):
        ds.MainDataset.load(tmp_path / "d.csv")


def test_count_must_be_positive():
    with pytest.raises(ds.DatasetError):
        ds.SamplerConfig(count=0)
    with pytest.raises(ds.DatasetError):
        ds.SamplerConfig(strategy="sobol")


def test_all_fixed_network_emits_one_row():
    net = nl.parse(".ports a b\nL1 a b 1n fixed\nC1 b 0 1p fixed\n")
    with pytest.warns(UserWarning):
        d = ds.gen_sub_dataset(net, None, ds.SamplerConfig(count=50), F)
    assert len(d) == 1 and d.x.shape == (1, 0)


def test_label_selection():
    ps = nl.parse(circuits.phase_shifter_text("lpt", "hpt"))
    with pytest.raises(ds.DatasetError):
        ds.gen_sub_dataset(ps, None, ds.SamplerConfig(count=5), F)
    with pytest.raises(ds.DatasetError):
        ds.gen_sub_dataset(ps, "nope", ds.SamplerConfig(count=5), F)
    d = ds.gen_sub_dataset(ps, "net2", ds.SamplerConfig(count=5), F)
    assert d.param_names == ["C21", "L22", "C23"]
    hpt_alone = nl.partition(nl.parse(circuits.variant_text("hpt"))).enetworks[0]
    assert d.topology_key == nl.topology_key(hpt_alone)


def test_main_dataset_spans_family(main_data, family):
    assert len(set(main_data.topology)) == 9
    assert main_data.n_enetworks == 2 and main_data.residual_names == ["S1", "S2"]
    assert main_data.features().shape == (300, 2 * 6 + 2)
    assert len(main_data.feature_names()) == 14


def test_main_rows_agree_with_full_circuit(main_data):
    # the stored PoI is the skeleton's; it must equal the flat circuit's
    for i in range(0, 300, 37):
        net = nl.parse(main_data.topologies[main_data.topology[i]])
        inst = net.with_values(main_data.params[i])
        p = poi_from_s(mna_two_port(inst.subcircuit(), F))
        for k, name in enumerate(POI_NAMES):
            want = p[name]
            if math.isfinite(want):
                assert main_data.y[i, k] == pytest.approx(want, rel=1e-6, abs=1e-6)


def test_main_save_load(main_data, tmp_path):
    main_data.save(tmp_path / "m.csv")
    back = ds.MainDataset.load(tmp_path / "m.csv")
    assert back.s == main_data.s and back.params == main_data.params
    assert np.array_equal(back.y, main_data.y)
    assert np.array_equal(back.features(), main_data.features())


def test_mixed_enetwork_counts_rejected(family):
    lone = nl.parse(circuits.lc_network_text())
    with pytest.raises(ds.DatasetError):
        ds.gen_main_dataset([family[0], lone], ds.SamplerConfig(count=5), F)
    with pytest.raises(ds.DatasetError):
        ds.gen_main_dataset([], ds.SamplerConfig(count=5), F)


def test_synthetic_passive_rows(family):
    d = ds.gen_main_dataset(family[:1], ds.SamplerConfig(seed=0, count=40,
                                                        s_source="synthetic-passive"), F)
    assert set(d.topology) == {"synthetic"}
    for ss in d.s:
        for s in ss:
            assert s.spectral_norm() <= 1.0 and s.s12 == s.s21


def test_random_passive_s_is_passive():
    rng = np.random.default_rng(0)
    for _ in range(200):
        s = ds.random_passive_s(rng, reciprocal=False)
        assert np.linalg.norm(s.to_array(), 2) <= 1 + 1e-12


def test_split_sizes_and_disjointness():
    d = ds.gen_sub_dataset(lpt(), None, ds.SamplerConfig(seed=0, count=1000), F)
    tr, va, te = ds.split(d, seed=1)
    assert (len(tr), len(va), len(te)) == (800, 100, 100)
    rows = [tuple(r) for part in (tr, va, te) for r in part.x]
    assert len(set(rows)) == 1000
    tr0, va0, te0 = ds.split(d, test_frac=0.0)
    assert (len(tr0), len(va0), len(te0)) == (900, 100, 0)


def test_split_too_small():
    d = ds.gen_sub_dataset(lpt(), None, ds.SamplerConfig(seed=0, count=5), F)
    with pytest.raises(ds.DatasetError):
        ds.split(d)
    with pytest.raises(ds.DatasetError):
        ds.split(d, val_frac=0.0)


def test_stratified_split_covers_every_topology(main_data):
    tr, va, te = ds.split(main_data, seed=2)
    for part in (tr, va, te):
        assert len(set(part.topology)) == 9
    assert len(tr) + len(va) + len(te) == 300
