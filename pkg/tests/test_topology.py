import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fogmarl.topology import (
    EmptyCandidateSet,
    InfeasibleSplit,
    LINK_RANGES,
    Role,
    TooSmall,
    UncategorizableEdge,
    UncoveredAP,
    assign_resources,
    assign_roles,
    betweenness_centrality,
    build_topology,
    cloud_neighbors,
    define_regions,
    generate_graph,
    link_category,
    load_topology,
    rewire_aps,
    save_topology,
    split_regions,
    topology_from_dict,
    topology_to_dict,
)

from oracles import brute_force_betweenness


def test_path_betweenness():
    g = nx.path_graph(3)
    assert betweenness_centrality(g) == {0: 0.0, 1: 1.0, 2: 0.0}


def test_complete_graph_betweenness_is_zero():
    assert set(betweenness_centrality(nx.complete_graph(4)).values()) == {0.0}


def test_star_betweenness():
    c = betweenness_centrality(nx.star_graph(4))
    assert c[0] == 6.0 and all(c[i] == 0.0 for i in range(1, 5))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.data())
def test_betweenness_matches_enumeration(n, data):
    # random spanning tree plus extra edges keeps the graph connected
    g = nx.Graph()
    g.add_nodes_from(range(n))
    for v in range(1, n):
        g.add_edge(v, data.draw(st.integers(0, v - 1)))
    extra = data.draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=10))
    g.add_edges_from((u, v) for u, v in extra if u != v)
    got = betweenness_centrality(g)
    want = brute_force_betweenness(list(g.nodes), list(g.edges))
    assert got == pytest.approx(want, abs=1e-12)


def test_generate_graph_connected_and_deterministic():
    g = generate_graph(33, 1, seed=7)
    assert g.number_of_nodes() == 33 and nx.is_connected(g)
    # m = 1 preferential attachment is a tree
    assert g.number_of_edges() == 32
    assert sorted(g.edges) == sorted(generate_graph(33, 1, seed=7).edges)


def test_generate_graph_too_small():
    with pytest.raises(TooSmall):
        generate_graph(3)


def test_roles_on_path():
    g = nx.path_graph(3)
    roles = assign_roles(g, betweenness_centrality(g), 2)
    assert roles[0] is Role.AP and roles[2] is Role.AP and roles[1] is Role.FOG
    assert roles[3] is Role.CLOUD


def test_roles_infeasible_split():
    g = nx.path_graph(5)
    with pytest.raises(InfeasibleSplit):
        assign_roles(g, betweenness_centrality(g), 5)
    with pytest.raises(InfeasibleSplit):
        assign_roles(g, betweenness_centrality(g), 0)


def test_cloud_attaches_to_two_most_central_fogs():
    roles = {0: Role.FOG, 1: Role.FOG, 2: Role.FOG, 3: Role.AP, 4: Role.CLOUD}
    assert cloud_neighbors(roles, {0: 1.0, 1: 5.0, 2: 3.0, 3: 0.0}) == [1, 2]


def test_full_scale_shape():
    topo = build_topology(32, 21, seed=7)
    assert len(topo.ap_ids) == 21 and len(topo.fog_ids) == 11
    assert topo.cloud_id == 32
    assert nx.is_connected(topo.graph())


def test_resource_rank_inversion():
    g = nx.Graph()
    # fog 0: no APs, fog 1: two APs, fog 2: five APs
    g.add_edges_from([(0, 1), (1, 2)])
    aps = list(range(10, 17))
    g.add_edges_from([(1, 10), (1, 11)] + [(2, a) for a in aps[2:]])
    roles = {0: Role.FOG, 1: Role.FOG, 2: Role.FOG, **{a: Role.AP for a in aps}}

    class Draws:
        def uniform(self, lo, hi, size):
            return np.array([4e4, 9e4, 1e4])

    specs = assign_resources(g, roles, Draws())
    assert (specs[0].ipt, specs[1].ipt, specs[2].ipt) == (9e4, 4e4, 1e4)


def test_single_fog_gets_single_draw():
    g = nx.Graph([(0, 1)])
    specs = assign_resources(g, {0: Role.FOG, 1: Role.AP}, np.random.default_rng(0))
    assert 1e3 <= specs[0].ipt <= 1e5


def test_link_categories_and_ranges():
    topo = build_topology(32, 21, seed=3)
    for link in topo.links:
        (pr_lo, pr_hi), (bw_lo, bw_hi) = LINK_RANGES[link.category]
        assert pr_lo <= link.prop_delay < pr_hi
        assert bw_lo <= link.bandwidth < bw_hi
        roles = {topo.nodes[n].role for n in link.endpoints}
        assert Role.AP not in roles or Role.FOG in roles
    assert LINK_RANGES["IoT-Fog"] == ((1, 2), (1e2, 1e3))
    assert LINK_RANGES["Fog-Cloud"][0] == (10, 20)
    with pytest.raises(UncategorizableEdge):
        link_category(Role.AP, Role.AP)


def test_ap_ap_edge_rewired_to_nearest_fog():
    g = nx.Graph([(0, 1), (1, 2), (2, 3)])
    roles = {0: Role.AP, 1: Role.AP, 2: Role.FOG, 3: Role.FOG}
    out = rewire_aps(g, roles)
    assert not out.has_edge(0, 1)
    assert out.has_edge(0, 2) and out.has_edge(1, 2)


@settings(max_examples=25, deadline=None)
@given(st.integers(5, 40), st.integers(0, 10**6), st.integers(1, 2))
def test_every_ap_hangs_on_a_fog_node(n, seed, m):
    n_aps = max(1, n // 2)
    topo = build_topology(n, n_aps, seed=seed, attachment_degree=m)
    g = topo.graph()
    assert nx.is_connected(g)
    for ap in topo.ap_ids:
        assert all(topo.nodes[nb].role is Role.FOG for nb in g.neighbors(ap))
        assert g.degree(ap) >= 1
    assert set(g.neighbors(topo.cloud_id)) <= set(topo.fog_ids)


def test_single_region_default():
    topo = build_topology(13, 8, seed=1)
    assert len(topo.regions) == 1
    assert topo.regions[0].ap_ids == tuple(topo.ap_ids)
    assert topo.regions[0].candidate_fog_ids == tuple(topo.fog_ids)


def test_shared_fog_in_both_regions():
    regions = define_regions([10, 11], [1, 2, 3], [{"aps": [10], "fogs": [1, 2]}, {"aps": [11], "fogs": [2, 3]}])
    assert 2 in regions[0].candidate_fog_ids and 2 in regions[1].candidate_fog_ids


def test_region_errors():
    with pytest.raises(EmptyCandidateSet):
        define_regions([10], [1], [{"aps": [10], "fogs": []}])
    with pytest.raises(UncoveredAP):
        define_regions([10, 11], [1], [{"aps": [10], "fogs": [1]}])


def test_split_regions_share_two_fogs():
    topo = build_topology(13, 8, seed=0, regions="split2")
    a, b = topo.regions
    assert len(set(a.candidate_fog_ids) & set(b.candidate_fog_ids)) == 2
    assert set(a.ap_ids) | set(b.ap_ids) == set(topo.ap_ids)
    assert a.ap_ids and b.ap_ids
    assert split_regions(topo)[0]["fogs"] == list(a.candidate_fog_ids)


def test_export_round_trip(tmp_path):
    topo = build_topology(20, 12, seed=5, regions="split2")
    path = tmp_path / "topo.json"
    save_topology(topo, path)
    back = load_topology(path)
    assert topology_to_dict(back) == topology_to_dict(topo)
    assert topology_from_dict(topology_to_dict(topo)).regions == topo.regions


def test_same_seed_same_topology():
    assert topology_to_dict(build_topology(32, 21, seed=9)) == topology_to_dict(build_topology(32, 21, seed=9))
