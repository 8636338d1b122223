import gzip
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bnsobol.bif import BIFSyntaxError, parse_bif, read_bif, write_bif
from bnsobol.networks import BUNDLED, load_network

from helpers import random_bn

SMALL = """
// comment
network test { property author = x; }
variable A { type discrete [ 2 ] { a0, a1 }; property note = y; }
variable B { type discrete [ 3 ] { <5, 5-10, >=10 }; }
/* block
   comment */
probability ( A ) { table 0.25, 0.75; }
probability ( B | A ) {
  (a0) 0.1, 0.2, 0.7;
  (a1) 0.3, 0.3, 0.4;
}
"""


def test_parse_small():
    bn = parse_bif(SMALL)
    assert bn.name == "test"
    assert bn.variable("B").states == ("<5", "5-10", ">=10")
    np.testing.assert_array_equal(bn.cpt("B").table, [[0.1, 0.3], [0.2, 0.3], [0.7, 0.4]])


def test_conditional_table_order():
    # last parent varies fastest, child states contiguous
    text = """
    variable A { type discrete [ 2 ] { a0, a1 }; }
    variable B { type discrete [ 2 ] { b0, b1 }; }
    variable C { type discrete [ 2 ] { c0, c1 }; }
    probability ( A ) { table 0.5, 0.5; }
    probability ( B ) { table 0.5, 0.5; }
    probability ( C | A, B ) { table 0.1, 0.9, 0.2, 0.8, 0.3, 0.7, 0.4, 0.6; }
    """
    t = parse_bif(text).cpt("C").table
    assert t[0, 0, 1] == 0.2
    assert t[0, 1, 0] == 0.3
    assert t[1, 1, 1] == 0.6


def test_default_row():
    text = """
    variable A { type discrete [ 2 ] { a0, a1 }; }
    variable B { type discrete [ 2 ] { b0, b1 }; }
    probability ( A ) { table 0.5, 0.5; }
    probability ( B | A ) { (a1) 0.9, 0.1; default 0.3, 0.7; }
    """
    np.testing.assert_array_equal(parse_bif(text).cpt("B").table, [[0.3, 0.9], [0.7, 0.1]])


@pytest.mark.parametrize(
    "text,line",
    [
        ("variable A { type discrete [ 2 ] { a0 }; }", 1),
        ("variable A { type discrete [ 2 ] { a0, a1 }; }\n\nprobability ( A ) { table 0.5; }", 3),
        ("variable A { type discrete [ 2 ] { a0, a1 }; }\nprobability ( A ) { table 0.5, 0.4; }", 2),
        ("variable A { type continuous [ 2 ] { a0, a1 }; }", 1),
        ("variable A { type discrete [ 2 ] { a0, a1 }; }\nprobability ( A | Z ) { table 0.5, 0.5; }", 2),
        ("garbage", 1),
    ],
)
def test_syntax_errors_carry_position(text, line):
    with pytest.raises(BIFSyntaxError) as info:
        parse_bif(text)
    assert info.value.line == line


def test_unterminated_input():
    with pytest.raises(BIFSyntaxError):
        parse_bif("variable A { type discrete [ 2 ] { a0, a1 }")


def test_missing_row_rejected():
    text = """
    variable A { type discrete [ 2 ] { a0, a1 }; }
    variable B { type discrete [ 2 ] { b0, b1 }; }
    probability ( A ) { table 0.5, 0.5; }
    probability ( B | A ) { (a1) 0.9, 0.1; }
    """
    with pytest.raises(BIFSyntaxError, match="every parent configuration"):
        parse_bif(text)


def test_small_deviation_renormalized(caplog):
    text = "variable A { type discrete [ 2 ] { a0, a1 }; }\nprobability ( A ) { table 0.3, 0.7000001; }"
    with caplog.at_level(logging.WARNING):
        bn = parse_bif(text)
    assert "renormalizing" in caplog.text
    assert bn.cpt("A").table.sum() == pytest.approx(1.0, abs=1e-15)


def test_round_trip_bundled():
    for name in BUNDLED:
        bn = load_network(name)
        again = parse_bif(write_bif(bn))
        assert again.names == bn.names
        for v in bn.names:
            assert again.cpt(v) == bn.cpt(v), (name, v)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_round_trip_random(seed):
    bn = random_bn(np.random.default_rng(seed), n_vars=5, max_card=4)
    again = parse_bif(write_bif(bn))
    for v in bn.names:
        assert again.cpt(v) == bn.cpt(v)


def test_read_gz(tmp_path):
    path = tmp_path / "small.bif.gz"
    with gzip.open(path, "wt") as fh:
        fh.write(SMALL)
    assert read_bif(path).names == ("A", "B")
    assert load_network(path).names == ("A", "B")


def test_unknown_bundled_name():
    with pytest.raises(FileNotFoundError):
        load_network("no-such-network")
