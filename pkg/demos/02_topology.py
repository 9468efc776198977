"""
Building a fog topology
=======================

A preferential-attachment graph is split by betweenness centrality: the
least central nodes become access points, the rest fog nodes, and a cloud
node hangs off the two most central fogs. Compute is handed out so that
fogs carrying many APs get the slower machines.
"""

import json
import sys

from fogmarl.topology import build_topology, split_regions, topology_to_dict

topo = build_topology(32, 21, seed=7)
print(f"{len(topo.ap_ids)} APs, {len(topo.fog_ids)} fog nodes, cloud {topo.cloud_id}")

ap_load = {f: 0 for f in topo.fog_ids}
for link in topo.links:
    u, v = link.endpoints
    for a, b in ((u, v), (v, u)):
        if a in ap_load and b in topo.ap_ids:
            ap_load[a] += 1

print("\nfog  centrality  APs   IPT")
for f in sorted(topo.fog_ids, key=lambda f: -topo.centrality[f]):
    print(f"{f:3d}  {topo.centrality[f]:10.1f}  {ap_load[f]:3d}  {topo.nodes[f].ipt:8.0f}")

# two overlapping regions (the middle fogs are shared)
small = build_topology(13, 8, seed=0)
for r in split_regions(small):
    print("region", r)

if len(sys.argv) > 1:
    with open(sys.argv[1], "w") as fh:
        json.dump(topology_to_dict(topo), fh, indent=1)
    print("wrote", sys.argv[1])
