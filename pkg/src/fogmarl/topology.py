"""Random AS-like fog regions.

A raw preferential-attachment graph is split into APs (lowest betweenness),
fog nodes (the rest) and one added cloud node hooked to the two most central
fog nodes. Fog compute is drawn at random and handed out in inverse order of
how many APs each fog node serves.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

import networkx as nx
import numpy as np

CLOUD_IPT = 1e6
FOG_IPT_RANGE = (1e3, 1e5)

# (propagation delay range in seconds, bandwidth range in Mbps)
LINK_RANGES = {
    "IoT-Fog": ((1.0, 2.0), (1e2, 1e3)),
    "Fog-Fog": ((2.0, 4.0), (1e3, 1e4)),
    "Fog-Cloud": ((10.0, 20.0), (1e3, 1e4)),
}

TOPOLOGY_FORMAT = "fogmarl-topology"
TOPOLOGY_VERSION = 1


class TopologyError(ValueError):
    pass


class TooSmall(TopologyError):
    pass


class Disconnected(TopologyError):
    pass


class InfeasibleSplit(TopologyError):
    pass


class UncategorizableEdge(TopologyError):
    pass


class UncoveredAP(TopologyError):
    pass


class EmptyCandidateSet(TopologyError):
    pass


class Role(str, Enum):
    AP = "AP"
    FOG = "Fog"
    CLOUD = "Cloud"


@dataclass
class NodeSpec:
    node_id: int
    role: Role
    ipt: float
    ram: float | None = None


@dataclass
class LinkSpec:
    endpoints: tuple[int, int]
    category: str
    bandwidth: float  # Mbps
    prop_delay: float

    @property
    def bandwidth_bps(self) -> float:
        return self.bandwidth * 1e6


@dataclass
class Region:
    region_id: int
    ap_ids: tuple[int, ...]
    candidate_fog_ids: tuple[int, ...]


@dataclass
class Topology:
    nodes: dict[int, NodeSpec]
    links: list[LinkSpec]
    regions: list[Region]
    centrality: dict[int, float] = field(default_factory=dict)

    def ids(self, role: Role) -> list[int]:
        return sorted(n for n, spec in self.nodes.items() if spec.role is role)

    @property
    def ap_ids(self) -> list[int]:
        return self.ids(Role.AP)

    @property
    def fog_ids(self) -> list[int]:
        return self.ids(Role.FOG)

    @property
    def cloud_id(self) -> int:
        return self.ids(Role.CLOUD)[0]

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(sorted(self.nodes))
        for link in self.links:
            g.add_edge(*link.endpoints, prop_delay=link.prop_delay, bandwidth=link.bandwidth)
        return g


def generate_graph(n_nodes: int, attachment_degree: int = 1, seed: int | None = None) -> nx.Graph:
    """Preferential-attachment graph on nodes ``0..n_nodes-1``.

    Starts from a clique on ``attachment_degree + 1`` nodes; every later node
    links to ``attachment_degree`` distinct earlier nodes picked with
    probability proportional to their degree.
    """
    if n_nodes < 5:
        raise TooSmall(f"need at least 5 nodes, got {n_nodes}")
    m = int(attachment_degree)
    if m < 1 or m + 1 > n_nodes:
        raise TopologyError(f"attachment_degree {m} out of range")
    rng = np.random.default_rng(seed)
    g = nx.Graph()
    g.add_nodes_from(range(n_nodes))
    # every edge endpoint appears once here, so uniform picks are degree-weighted
    endpoints: list[int] = []
    for u in range(m + 1):
        for v in range(u + 1, m + 1):
            g.add_edge(u, v)
            endpoints += [u, v]
    if m == 0:
        endpoints.append(0)
    for new in range(m + 1, n_nodes):
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(endpoints[int(rng.integers(len(endpoints)))])
        for t in sorted(targets):
            g.add_edge(new, t)
            endpoints += [new, t]
    return g


def betweenness_centrality(graph: nx.Graph) -> dict[int, float]:
    """Unnormalized shortest-path betweenness (hop counts), Brandes' algorithm.

    Each unordered pair contributes once, so a path ``a-b-c`` gives ``b`` 1.0.
    """
    nodes = sorted(graph.nodes)
    if not nodes:
        return {}
    if not nx.is_connected(graph):
        raise Disconnected("betweenness needs a connected graph")
    adj = {v: sorted(graph.neighbors(v)) for v in nodes}
    score = dict.fromkeys(nodes, 0.0)
    for s in nodes:
        stack = []
        preds: dict[int, list[int]] = {v: [] for v in nodes}
        sigma = dict.fromkeys(nodes, 0)
        dist = dict.fromkeys(nodes, -1)
        sigma[s] = 1
        dist[s] = 0
        q = deque([s])
        while q:
            v = q.popleft()
            stack.append(v)
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    q.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = dict.fromkeys(nodes, 0.0)
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                score[w] += delta[w]
    # every unordered pair was counted from both ends
    return {v: score[v] / 2.0 for v in nodes}


def assign_roles(graph: nx.Graph, centrality: dict[int, float], n_aps: int) -> dict[int, Role]:
    """APs are the ``n_aps`` least central nodes; a new cloud node gets id ``max+1``."""
    nodes = sorted(graph.nodes)
    if n_aps < 1 or n_aps > len(nodes) - 1:
        raise InfeasibleSplit(f"cannot place {n_aps} APs among {len(nodes)} nodes and keep a fog node")
    order = sorted(nodes, key=lambda n: (centrality[n], n))
    roles = {n: Role.FOG for n in nodes}
    for n in order[:n_aps]:
        roles[n] = Role.AP
    roles[max(nodes) + 1] = Role.CLOUD
    return roles


def cloud_neighbors(roles: dict[int, Role], centrality: dict[int, float]) -> list[int]:
    fogs = [n for n, r in roles.items() if r is Role.FOG]
    return sorted(sorted(fogs, key=lambda n: (-centrality[n], n))[:2])


def rewire_aps(graph: nx.Graph, roles: dict[int, Role]) -> nx.Graph:
    """Drop AP-AP / AP-Cloud edges and hang every orphaned AP on its nearest fog node.

    Nearness is hop distance in the original graph, ties by id. Fog components
    left disconnected are rejoined through their closest pair of fog nodes.
    """
    out = nx.Graph()
    out.add_nodes_from(sorted(graph.nodes))
    for u, v in sorted(tuple(sorted(e)) for e in graph.edges):
        ru, rv = roles.get(u), roles.get(v)
        if Role.AP in (ru, rv) and (ru is not Role.FOG or rv is not Role.FOG):
            continue
        out.add_edge(u, v)
    hops = dict(nx.all_pairs_shortest_path_length(graph))
    fogs = sorted(n for n in graph.nodes if roles.get(n) is Role.FOG)
    for ap in sorted(n for n in graph.nodes if roles.get(n) is Role.AP):
        if not any(roles.get(nb) is Role.FOG for nb in out.neighbors(ap)):
            near = min(fogs, key=lambda f: (hops[ap].get(f, np.inf), f))
            out.add_edge(ap, near)
    fog_view = out.subgraph(fogs)
    comps = sorted((sorted(c) for c in nx.connected_components(fog_view)), key=lambda c: c[0])
    while len(comps) > 1:
        first, rest = comps[0], [n for c in comps[1:] for n in c]
        u, v = min(((a, b) for a in first for b in rest), key=lambda p: (hops[p[0]][p[1]], p))
        out.add_edge(u, v)
        comps = sorted(
            (sorted(c) for c in nx.connected_components(out.subgraph(fogs))), key=lambda c: c[0]
        )
    return out


def assign_resources(
    graph: nx.Graph, roles: dict[int, Role], rng: np.random.Generator
) -> dict[int, NodeSpec]:
    """Cloud gets 1e6 IPS, APs 0, fog nodes uniform draws inversely ranked by AP-degree."""
    fogs = sorted(n for n, r in roles.items() if r is Role.FOG)
    draws = np.sort(rng.uniform(*FOG_IPT_RANGE, size=len(fogs)))[::-1]
    ap_degree = {
        f: sum(1 for nb in graph.neighbors(f) if roles.get(nb) is Role.AP) if f in graph else 0
        for f in fogs
    }
    specs: dict[int, NodeSpec] = {}
    for f, ipt in zip(sorted(fogs, key=lambda f: (ap_degree[f], f)), draws):
        specs[f] = NodeSpec(f, Role.FOG, float(ipt))
    for n, r in roles.items():
        if r is Role.AP:
            specs[n] = NodeSpec(n, Role.AP, 0.0)
        elif r is Role.CLOUD:
            specs[n] = NodeSpec(n, Role.CLOUD, CLOUD_IPT)
    return dict(sorted(specs.items()))


def link_category(role_u: Role, role_v: Role) -> str:
    pair = {role_u, role_v}
    if pair == {Role.AP, Role.FOG}:
        return "IoT-Fog"
    if pair == {Role.FOG}:
        return "Fog-Fog"
    if pair == {Role.FOG, Role.CLOUD}:
        return "Fog-Cloud"
    raise UncategorizableEdge(f"no link category for {role_u.value}-{role_v.value}")


def assign_links(graph: nx.Graph, roles: dict[int, Role], rng: np.random.Generator) -> list[LinkSpec]:
    """Draw propagation delay then bandwidth for every edge, in sorted edge order."""
    links = []
    for u, v in sorted(tuple(sorted(e)) for e in graph.edges):
        cat = link_category(roles[u], roles[v])
        (pr_lo, pr_hi), (bw_lo, bw_hi) = LINK_RANGES[cat]
        pr = float(rng.uniform(pr_lo, pr_hi))
        bw = float(rng.uniform(bw_lo, bw_hi))
        links.append(LinkSpec((u, v), cat, bw, pr))
    return links


def define_regions(
    ap_ids: Iterable[int],
    fog_ids: Iterable[int],
    spec: list[dict] | None = None,
) -> list[Region]:
    """Build regions from ``[{"aps": [...], "fogs": [...]}, ...]``.

    ``None`` gives the single region holding every AP and fog node.
    """
    ap_ids = sorted(ap_ids)
    fog_ids = sorted(fog_ids)
    if spec is None:
        spec = [{"aps": ap_ids, "fogs": fog_ids}]
    regions = []
    seen: dict[int, int] = {}
    for i, entry in enumerate(spec):
        aps = tuple(sorted(int(a) for a in entry.get("aps", [])))
        fogs = tuple(sorted(set(int(f) for f in entry.get("fogs", []))))
        if not fogs:
            raise EmptyCandidateSet(f"region {i} has no candidate fog nodes")
        unknown = [f for f in fogs if f not in fog_ids]
        if unknown:
            raise TopologyError(f"region {i} lists non-fog nodes {unknown}")
        for a in aps:
            if a in seen:
                raise TopologyError(f"AP {a} is in regions {seen[a]} and {i}")
            seen[a] = i
        regions.append(Region(i, aps, fogs))
    missing = [a for a in ap_ids if a not in seen]
    if missing:
        raise UncoveredAP(f"APs not covered by any region: {missing}")
    return regions


def split_regions(topo: Topology, n_shared: int = 2) -> list[dict]:
    """Two overlapping regions: fog nodes split in id order, ``n_shared`` middle ones in both.

    Each AP joins the region holding its nearest fog node (propagation delay).
    """
    fogs = topo.fog_ids
    if len(fogs) < n_shared + 2:
        raise InfeasibleSplit("not enough fog nodes to share")
    half = (len(fogs) - n_shared + 1) // 2
    first = fogs[: half + n_shared]
    second = fogs[half:]
    dist = nearest_fog_delays(topo)
    only_second = set(second) - set(first)
    shared = set(first) & set(second)
    groups: list[list[int]] = [[], []]
    for ap in topo.ap_ids:
        near = min(fogs, key=lambda f: (dist[ap][f], f))
        if near in only_second:
            groups[1].append(ap)
        elif near in shared:
            # shared nearest node: balance the AP counts
            groups[0 if len(groups[0]) <= len(groups[1]) else 1].append(ap)
        else:
            groups[0].append(ap)
    if not groups[0] or not groups[1]:
        # degenerate layout: alternate APs
        groups = [topo.ap_ids[0::2], topo.ap_ids[1::2]]
    return [{"aps": groups[0], "fogs": first}, {"aps": groups[1], "fogs": second}]


def nearest_fog_delays(topo: Topology) -> dict[int, dict[int, float]]:
    g = topo.graph()
    out = {}
    for ap in topo.ap_ids:
        d = nx.single_source_dijkstra_path_length(g, ap, weight="prop_delay")
        out[ap] = {f: d.get(f, np.inf) for f in topo.fog_ids}
    return out


def build_topology(
    n_nodes: int,
    n_aps: int,
    seed: int | None = None,
    attachment_degree: int = 1,
    regions: list[dict] | str | None = None,
    rng: np.random.Generator | None = None,
) -> Topology:
    """Graph -> centrality -> roles -> rewiring + cloud -> resources -> links -> regions."""
    rng = np.random.default_rng(seed) if rng is None else rng
    graph_seed = int(rng.integers(2**63 - 1))
    raw = generate_graph(n_nodes, attachment_degree, graph_seed)
    centrality = betweenness_centrality(raw)
    roles = assign_roles(raw, centrality, n_aps)
    g = rewire_aps(raw, roles)
    cloud = next(n for n, r in roles.items() if r is Role.CLOUD)
    g.add_node(cloud)
    for f in cloud_neighbors(roles, centrality):
        g.add_edge(f, cloud)
    nodes = assign_resources(g, roles, rng)
    links = assign_links(g, roles, rng)
    topo = Topology(nodes, links, [], {int(k): float(v) for k, v in centrality.items()})
    if regions == "split2":
        regions = split_regions(topo)
    topo.regions = define_regions(topo.ap_ids, topo.fog_ids, regions)
    return topo


def topology_to_dict(topo: Topology) -> dict:
    return {
        "format": TOPOLOGY_FORMAT,
        "version": TOPOLOGY_VERSION,
        "nodes": [
            {"id": n.node_id, "role": n.role.value, "ipt": n.ipt, "ram": n.ram}
            for n in topo.nodes.values()
        ],
        "links": [
            {
                "u": l.endpoints[0],
                "v": l.endpoints[1],
                "category": l.category,
                "bandwidth_mbps": l.bandwidth,
                "prop_delay": l.prop_delay,
            }
            for l in topo.links
        ],
        "regions": [
            {"id": r.region_id, "aps": list(r.ap_ids), "fogs": list(r.candidate_fog_ids)}
            for r in topo.regions
        ],
        "centrality": {str(k): v for k, v in sorted(topo.centrality.items())},
    }


def topology_from_dict(data: dict) -> Topology:
    if data.get("format") != TOPOLOGY_FORMAT:
        raise TopologyError("not a fogmarl topology document")
    if data.get("version") != TOPOLOGY_VERSION:
        raise TopologyError(f"unsupported topology version {data.get('version')}")
    nodes = {
        int(n["id"]): NodeSpec(int(n["id"]), Role(n["role"]), float(n["ipt"]), n.get("ram"))
        for n in data["nodes"]
    }
    links = [
        LinkSpec((int(l["u"]), int(l["v"])), l["category"], float(l["bandwidth_mbps"]), float(l["prop_delay"]))
        for l in data["links"]
    ]
    for l in links:
        expected = link_category(nodes[l.endpoints[0]].role, nodes[l.endpoints[1]].role)
        if expected != l.category:
            raise UncategorizableEdge(f"link {l.endpoints} labelled {l.category}, roles say {expected}")
    topo = Topology(dict(sorted(nodes.items())), links, [], {int(k): v for k, v in data.get("centrality", {}).items()})
    regions = [{"aps": r["aps"], "fogs": r["fogs"]} for r in data.get("regions", [])] or None
    topo.regions = define_regions(topo.ap_ids, topo.fog_ids, regions)
    return topo


def save_topology(topo: Topology, path: str | Path) -> None:
    Path(path).write_text(json.dumps(topology_to_dict(topo), indent=1) + "\n")


def load_topology(path: str | Path) -> Topology:
    return topology_from_dict(json.loads(Path(path).read_text()))
