import itertools
from fractions import Fraction

import numpy as np
import pytest

from dimerlab.errors import SizeLimitExceeded
from dimerlab.lattice import (
    DimerConfig,
    Face,
    TorusGeometry,
    canonical_path,
    enumerate_matchings,
    face_step,
    height_difference,
    height_profile,
    is_perfect_matching,
    make_edge_offsets,
    matchings_to_text,
    path_from_directions,
    winding_numbers,
)


@pytest.fixture(scope="module")
def geom2():
    return TorusGeometry(2)


@pytest.fixture(scope="module")
def geom4():
    return TorusGeometry(4)


@pytest.fixture(scope="module")
def matchings4(geom4):
    return enumerate_matchings(geom4)


def test_edge_offsets_table():
    offs = make_edge_offsets()
    assert offs == {1: (0, 0), 2: (-1, 0), 3: (-1, -1), 4: (0, -1)}
    assert offs[1] == (0, 0)
    assert offs[3] == (-1, -1)


def test_offsets_give_black_white_bijection(geom2):
    for cfg in enumerate_matchings(geom2):
        whites = {geom2.white_endpoint(e.black, e.rtype) for e in cfg.edges()}
        assert len(whites) == geom2.n_black


def test_geometry_requires_even_side():
    with pytest.raises(ValueError):
        TorusGeometry(3)
    with pytest.raises(ValueError):
        TorusGeometry(0)


def test_all_type_1_is_perfect_matching(geom2):
    # every black site matched East: white coverage is the identity map
    assert is_perfect_matching(geom2, np.ones((2, 2), dtype=np.int8))


def test_double_coverage_rejected(geom2):
    # (0,0)->r=1 covers white (0,0); (1,1)->r=3 covers white (0,0) as well
    bad = {(0, 0): 1, (1, 1): 3, (0, 1): 2, (1, 0): 2}
    assert not is_perfect_matching(geom2, bad)


def _permanent_count(geom: TorusGeometry) -> int:
    """Independent counting oracle: permanent of the black-white
    biadjacency matrix with edge multiplicities, by brute force."""
    blacks = list(geom.black_sites())
    index = {w: i for i, w in enumerate(blacks)}
    n = len(blacks)
    B = np.zeros((n, n), dtype=np.int64)
    for i, x in enumerate(blacks):
        for r in (1, 2, 3, 4):
            B[i, index[geom.white_endpoint(x, r)]] += 1
    total = 0
    for sigma in itertools.permutations(range(n)):
        p = 1
        for i, j in enumerate(sigma):
            p *= B[i, j]
            if p == 0:
                break
        total += p
    return total


def _ryser_permanent(B: np.ndarray) -> int:
    """Ryser's formula; exact in int64 for the sizes used here."""
    n = B.shape[0]
    total = 0
    for mask in range(1, 1 << n):
        cols = [j for j in range(n) if mask >> j & 1]
        prod = 1
        for i in range(n):
            s = 0
            for j in cols:
                s += int(B[i, j])
            prod *= s
            if prod == 0:
                break
        total += (-1) ** (n - len(cols)) * prod
    return total


def test_enumeration_count_L2(geom2):
    ms = enumerate_matchings(geom2)
    # independent hand count: each of the 4 black sites reaches each of the
    # 4 whites by exactly one edge type, so matchings = 4! = 24
    assert len(ms) == 24
    assert len(ms) == _permanent_count(geom2)
    assert len(set(m.types for m in ms)) == len(ms)
    assert all(is_perfect_matching(geom2, m) for m in ms)


def test_enumeration_count_L4_vs_ryser(geom4, matchings4):
    blacks = list(geom4.black_sites())
    index = {w: i for i, w in enumerate(blacks)}
    B = np.zeros((16, 16), dtype=np.int64)
    for i, x in enumerate(blacks):
        for r in (1, 2, 3, 4):
            B[i, index[geom4.white_endpoint(x, r)]] += 1
    assert len(matchings4) == _ryser_permanent(B)
    assert len(matchings4) == 26752  # frozen from the Ryser cross-check


def test_unit_weight_sum_equals_count(geom2):
    ms = enumerate_matchings(geom2)
    weighted = sum(1.0 for _ in ms)  # all activities 1
    assert weighted == len(ms)


def test_enumeration_size_guard():
    with pytest.raises(SizeLimitExceeded):
        enumerate_matchings(TorusGeometry(8))


def test_height_empty_path(matchings4):
    path = path_from_directions(Face(0, (0, 0)), "")
    assert height_difference(matchings4[0], path) == 0


def test_height_single_occupied_step(geom2):
    # all-type-1 matching: the South step from the odd face (0,(0,0))...
    # pick instead the step known to cross an occupied type-1 edge with
    # sigma = +1: North from the odd face (1, (1, 0)) crosses edge ((0,0), 1).
    cfg = DimerConfig.from_assignment(geom2, np.ones((2, 2), dtype=np.int8))
    edge, sigma, _ = face_step(Face(1, (1, 0)), "N")
    assert edge.black == (0, 0) and edge.rtype == 1 and sigma == +1
    path = path_from_directions(Face(1, (1, 0)), "N")
    assert height_difference(cfg, path) == Fraction(3, 4)


def test_path_independence_all_matchings(matchings4):
    # two different contractible paths between the same faces agree exactly
    pa = path_from_directions(Face(0, (0, 0)), "EENN")
    pb = path_from_directions(Face(0, (0, 0)), "NENE")
    assert pa.end == pb.end
    for cfg in matchings4:
        assert height_difference(cfg, pa) == height_difference(cfg, pb)


def test_reverse_path_telescopes(matchings4):
    path = path_from_directions(Face(0, (1, 2)), "ENES")
    for cfg in matchings4[::197]:
        total = height_difference(cfg, path) + height_difference(cfg, path.reversed())
        assert total == 0


def test_close_packing_loop_is_zero(matchings4):
    # a closed dual loop around one site crosses its four incident edges;
    # close packing makes the height increment vanish identically
    loop = path_from_directions(Face(0, (0, 0)), "ENWS")
    assert loop.end == loop.start
    for cfg in matchings4:
        assert height_difference(cfg, loop) == 0


def test_canonical_path_shapes(geom4):
    f = Face(0, (0, 0))
    target = path_from_directions(f, "EEE").end
    path = canonical_path(None, f, target)
    assert len(path.steps) == 3
    assert canonical_path(None, f, f).steps == ()
    # torus reduction picks the short way around
    g = canonical_path(geom4, f, Face(1, (1, 1)))
    assert len(g.steps) <= 4


def test_canonical_path_round_trip(geom4, matchings4):
    f = Face(0, (0, 0))
    fp = Face(0, (1, 1))
    path = canonical_path(geom4, f, fp)
    back = path.reversed()
    for cfg in matchings4[::511]:
        assert height_difference(cfg, path) + height_difference(cfg, back) == 0


def test_height_profile_consistency(geom4, matchings4):
    # in the zero-winding sector all homotopy classes agree, so the BFS
    # profile must match any path computation
    cfg = next(m for m in matchings4 if winding_numbers(geom4, m) == (0, 0))
    prof = height_profile(geom4, cfg)
    assert len(prof) == 2 * geom4.L**2
    assert prof[Face(0, (0, 0))] == 0
    path = canonical_path(geom4, Face(0, (0, 0)), Face(0, (2, 1)))
    assert prof[Face(0, (2, 1))] == height_difference(cfg, path)


def test_winding_paths_expose_homotopy_class(geom4, matchings4):
    # a full torus cycle picks up exactly the winding number, so paths in
    # different homotopy classes disagree by it
    cfg = next(m for m in matchings4 if winding_numbers(geom4, m) != (0, 0))
    w1, w2 = winding_numbers(geom4, cfg)
    loop_e = path_from_directions(Face(0, (0, 0)), "E" * (2 * geom4.L))
    loop_n = path_from_directions(Face(0, (0, 0)), "N" * (2 * geom4.L))
    assert height_difference(cfg, loop_e) == w1
    assert height_difference(cfg, loop_n) == w2


def test_winding_of_reference_configs():
    geom = TorusGeometry(8)
    all1 = DimerConfig.from_assignment(geom, np.ones((8, 8), dtype=np.int8))
    # all-East matching is maximally tilted: it winds fully in one direction
    assert winding_numbers(geom, all1) == (0, 8)
    idx = np.add.outer(np.arange(8), np.arange(8))
    brick = DimerConfig.from_assignment(
        geom, np.where(idx % 2 == 0, 1, 3).astype(np.int8))
    assert winding_numbers(geom, brick) == (0, 0)


def test_export_format(geom2):
    ms = enumerate_matchings(geom2)
    text = matchings_to_text(geom2, ms[:2])
    lines = text.strip().split("\n")
    assert len(lines) == 2
    first = lines[0].split()
    assert len(first) == geom2.n_black
    site, rtype = first[0].split(":")
    assert site == "0,0" and rtype in "1234"
