import random
from fractions import Fraction

import pytest

from hybridnq.graph import WeightedGraph, exact_distances, generate
from hybridnq.pipeline import (EXACT, SKELETON, InstanceError, SPInstance, skeleton_build, skeleton_labels,
                               solve_k_ell_sp, sssp_exact_reference, stretch_of)
from hybridnq.sim import SimConfig, model_capacity_bits


def test_bf_path():
    g = generate("path", n=3)
    dist, trace = sssp_exact_reference(g, [1])
    assert dist[1][3] == 2
    # two improving rounds plus the silent one that ends the run
    assert trace.local_round_count == 3


def test_bf_heavy_edge():
    tri = WeightedGraph.from_edges(3, [(1, 2, 1), (2, 3, 1), (1, 3, 5)])
    dist, _ = sssp_exact_reference(tri, [1])
    assert dist[1][3] == 2 == exact_distances(tri, 1)[3]


def test_bf_grid_three_roots():
    g = generate("grid", rows=5, cols=5, seed=2, weight_range=(1, 9))
    roots = random.Random(3).sample(range(1, 26), 3)
    dist, _ = sssp_exact_reference(g, roots)
    for r in roots:
        assert dist[r] == dict(exact_distances(g, r).dist)


def test_bf_needs_roots():
    with pytest.raises(ValueError):
        sssp_exact_reference(generate("path", n=3), [])


def test_skeleton_full_sampling():
    g = generate("grid", rows=4, cols=4, seed=1, weight_range=(1, 5))
    sk, _ = skeleton_build(g, 1)
    assert set(sk.nodes) == set(g.nodes)
    for (u, v), w in g.weights.items():
        assert (u, v) in sk.edges and sk.edges[(u, v)] <= w
    for u in g.nodes:
        ds = sk.distances_from(u)
        assert all(ds[v] == exact_distances(g, u)[v] for v in g.nodes)


@pytest.mark.parametrize("seed", range(10))
def test_skeleton_path(seed):
    g = generate("path", n=100)
    sk, _ = skeleton_build(g, 10, seed=seed)
    for (u, v), w in sk.edges.items():
        assert w == abs(u - v)
    if sk.nodes:
        u = sk.nodes[0]
        ds = sk.distances_from(u)
        assert all(ds[v] == abs(u - v) for v in sk.nodes)


def test_skeleton_bad_x():
    with pytest.raises(ValueError):
        skeleton_build(generate("path", n=4), 0.5)


def test_instance_validation():
    g = generate("path", n=8)
    with pytest.raises(InstanceError):
        SPInstance(g, (), (1,))
    with pytest.raises(InstanceError):
        SPInstance(g, (1,), (1,), target_mode="bogus")
    with pytest.raises(InstanceError):
        SPInstance(g, (1,), (1,), eps=Fraction(0))
    # fixed mode allows ceil(log2 n)^2 targets, which is 4 when n is 3 or 4
    SPInstance(generate("path", n=4), (1,), (1, 2, 3, 4))
    with pytest.raises(InstanceError):
        SPInstance(generate("path", n=3), (1,), (1, 2, 3, 1, 2))


def test_p10_single_label():
    g = generate("path", n=10)
    inst = SPInstance(g, (10,), (1,))
    res = solve_k_ell_sp(inst, 1)
    assert res.labels == {1: {10: 9}}
    assert stretch_of(res.labels, inst) == 1


def test_lollipop_clique_sources():
    g = generate("lollipop", n=200, clique=100)
    S = tuple(range(1, 101))
    t = random.Random(0).randint(1, 200)
    inst = SPInstance(g, S, (t,))
    res = solve_k_ell_sp(inst, 16)
    assert len(res.labels[t]) == 100
    assert stretch_of(res.labels, inst) == 1


@pytest.mark.parametrize("seed", range(4))
def test_grid_iid_matches_oracle(seed):
    g = generate("grid", rows=16, cols=16, seed=seed, weight_range=(1, 20))
    S = random.Random(seed).sample(range(1, 257), 64)
    inst = SPInstance.with_iid_targets(g, S, 4, seed)
    res = solve_k_ell_sp(inst, 1, SimConfig(gamma=model_capacity_bits(1, 256), seed=seed))
    for t in inst.targets:
        ref = exact_distances(g, t)
        assert res.labels[t] == {s: ref[s] for s in inst.sources}


def test_skeleton_mode_on_path():
    g = generate("path", n=40)
    inst = SPInstance(g, tuple(range(30, 41)), (1, 5))
    res = solve_k_ell_sp(inst, 1, mode=SKELETON, skeleton_x=3)
    assert stretch_of(res.labels, inst) == 1
    assert res.rounds_phaseA > 0 and res.rounds_phaseB > 0


def test_stretch_of_rules():
    g = generate("path", n=5)
    inst = SPInstance(g, (4, 5), (1,))
    exact = {1: {4: 3, 5: 4}}
    assert stretch_of(exact, inst) == 1
    assert stretch_of({1: {4: 6, 5: 4}}, inst) == 2
    with pytest.raises(KeyError):
        stretch_of({1: {4: 3}}, inst)
    with pytest.raises(AssertionError):
        stretch_of({1: {4: 2, 5: 4}}, inst)


def test_result_json_shape():
    g = generate("path", n=9)
    inst = SPInstance(g, (9,), (1,))
    d = solve_k_ell_sp(inst, 64).to_dict(inst)
    assert d["labels"] == [[1, 9, 8, 1]]
    assert (d["stretch_num"], d["stretch_den"]) == (1, 1)
    assert {"rounds_phaseA", "rounds_phaseB"} <= set(d)
