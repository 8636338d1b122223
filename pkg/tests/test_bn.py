import itertools

import numpy as np
import pytest

from bnsobol.bn import (
    BayesianNetwork,
    Cpt,
    NetworkError,
    ParameterId,
    Variable,
    joint_enumerate,
    joint_table,
    moral_graph,
    network_metrics,
    parse_assignment,
    resolve_assignment,
)
from bnsobol.networks import load_network

from helpers import random_bn


@pytest.fixture(scope="module")
def toy():
    return load_network("toy")


def test_variable_index_and_errors():
    v = Variable("A", ("lo", "hi"))
    assert v.cardinality == 2
    assert v.index("hi") == 1
    assert v.index(0) == 0
    with pytest.raises(NetworkError):
        v.index("mid")
    with pytest.raises(NetworkError):
        v.index(2)
    with pytest.raises(NetworkError):
        Variable("B", ("only",))
    with pytest.raises(NetworkError):
        Variable("B", ("x", "x"))


def test_cpt_validation():
    with pytest.raises(NetworkError, match="outside"):
        Cpt("A", (), [1.2, -0.2])
    with pytest.raises(NetworkError, match="summing"):
        Cpt("A", (), [0.5, 0.6])
    with pytest.raises(NetworkError):
        Cpt("A", ("A",), [[0.5, 0.5], [0.5, 0.5]])
    cpt = Cpt("A", ("B",), [[0.2, 0.9], [0.8, 0.1]])
    assert cpt.table.flags.writeable is False
    assert list(cpt.parent_configs()) == [(0,), (1,)]
    np.testing.assert_array_equal(cpt.row((1,)), [0.9, 0.1])


def test_network_rejects_bad_structure():
    a = Variable("A", ("0", "1"))
    b = Variable("B", ("0", "1"))
    cyc = {
        "A": Cpt("A", ("B",), [[0.5, 0.5], [0.5, 0.5]]),
        "B": Cpt("B", ("A",), [[0.5, 0.5], [0.5, 0.5]]),
    }
    with pytest.raises(NetworkError, match="cycle"):
        BayesianNetwork((a, b), cyc)
    with pytest.raises(NetworkError, match="without a CPT"):
        BayesianNetwork((a, b), {"A": Cpt("A", (), [0.5, 0.5])})
    with pytest.raises(NetworkError, match="shape"):
        BayesianNetwork((a, b), {"A": Cpt("A", (), [0.5, 0.5]), "B": Cpt("B", (), [0.2, 0.3, 0.5])})


def test_toy_structure(toy):
    assert toy.names == ("Y1", "Y2", "Y3")
    assert toy.parents("Y3") == ("Y1", "Y2")
    assert toy.topological_order.index("Y3") == 2
    assert toy.ancestors(["Y3"]) == {"Y1", "Y2", "Y3"}
    assert toy.ancestors(["Y1"]) == {"Y1"}
    assert len(list(toy.parameters())) == 12


def test_describe(toy):
    assert ParameterId("Y3", 1, (0, 1)).describe(toy) == "P(Y3=yes | Y1=no, Y2=yes)"
    assert ParameterId("Y1", 1).describe(toy) == "P(Y1=yes)"


def test_toy_joint_by_hand(toy):
    # P(Y3=yes) = sum over the four parent configurations, written out
    p = 0.6 * 0.7 * 0.3 + 0.6 * 0.3 * 0.4 + 0.4 * 0.7 * 0.4 + 0.4 * 0.3 * 0.95
    joint = joint_table(toy)
    assert joint.sum() == pytest.approx(1.0, abs=1e-15)
    assert joint[..., 1].sum() == pytest.approx(p, abs=1e-15)
    assert p == pytest.approx(0.424, abs=1e-12)


def test_joint_enumerate_matches_product():
    bn = random_bn(np.random.default_rng(3), n_vars=4)
    table = joint_enumerate(bn)
    for config, value in itertools.islice(table.items(), 20):
        expected = 1.0
        assign = dict(zip(bn.names, config))
        for cpt in bn.cpts.values():
            expected *= cpt.table[tuple(assign[v] for v in cpt.variables)]
        assert value == pytest.approx(expected, rel=1e-14)


def test_moral_graph_marries_parents(toy):
    adj = moral_graph(toy)
    assert "Y2" in adj["Y1"]
    assert adj["Y3"] == {"Y1", "Y2"}


def test_metrics_toy(toy):
    m = network_metrics(toy)
    assert (m.n_variables, m.n_free_parameters, m.n_parameters) == (3, 6, 12)
    assert m.treewidth == 3


def test_metrics_edgeless():
    vs = [Variable(f"v{i}", ("a", "b")) for i in range(3)]
    bn = BayesianNetwork(vs, {v.name: Cpt(v.name, (), [0.3, 0.7]) for v in vs})
    assert network_metrics(bn).treewidth == 1


@pytest.mark.parametrize(
    "name,n_vars,n_params",
    [("alarm", 37, 752), ("child", 20, 344), ("insurance", 27, 1419), ("sachs", 11, 267), ("hailfinder", 56, 3741), ("hepar2", 70, 2139)],
)
def test_metrics_reference_table(name, n_vars, n_params):
    # published variable and parameter counts for these benchmarks
    m = network_metrics(load_network(name))
    assert (m.n_variables, m.n_parameters) == (n_vars, n_params)


def test_alarm_treewidth_estimate():
    assert network_metrics(load_network("alarm")).treewidth == 5


def test_requisite_cpts_dseparation():
    # A -> C <- B, C -> D; target A with no evidence: only A matters
    vs = [Variable(n, ("0", "1")) for n in "ABCD"]
    half = [[0.5, 0.5], [0.5, 0.5]]
    cpts = {
        "A": Cpt("A", (), [0.3, 0.7]),
        "B": Cpt("B", (), [0.6, 0.4]),
        "C": Cpt("C", ("A", "B"), [[[0.1, 0.2], [0.3, 0.4]], [[0.9, 0.8], [0.7, 0.6]]]),
        "D": Cpt("D", ("C",), half),
    }
    bn = BayesianNetwork(vs, cpts)
    assert bn.requisite_cpts({"A"}) == {"A"}
    # observing C opens the collider
    assert bn.requisite_cpts({"A"}, {"C"}) == {"A", "B", "C"}
    # observing D (a descendant of the collider) opens it too
    assert bn.requisite_cpts({"A"}, {"D"}) == {"A", "B", "C", "D"}


def test_subnetwork_requires_ancestral_closure(toy):
    assert toy.subnetwork({"Y1"}).names == ("Y1",)
    with pytest.raises(NetworkError):
        toy.subnetwork({"Y3"})


def test_assignments(toy):
    assert parse_assignment(" Y3 = yes ") == ("Y3", "yes")
    assert resolve_assignment(toy, "Y3=yes") == ("Y3", 1)
    assert resolve_assignment(toy, ("Y3", 0)) == ("Y3", 0)
    with pytest.raises(NetworkError):
        parse_assignment("Y3")
    with pytest.raises(NetworkError):
        resolve_assignment(toy, "Y3=maybe")


def test_replace_cpt_is_persistent(toy):
    new = toy.replace_cpt(Cpt("Y1", (), [0.5, 0.5]))
    assert toy.cpt("Y1").table[0] == 0.6
    assert new.cpt("Y1").table[0] == 0.5
