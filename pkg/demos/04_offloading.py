"""
Distributed agents versus heuristics
====================================

Eight access points share five fog nodes. Each AP runs its own Double-DQL
agent that sees only its candidates' queue lengths; the heuristics pick at
random, round-robin, by network distance or by estimated finish time.
Everything runs at a tenth of full length so the script ends in a few minutes.
"""

from fogmarl.harness import Scenario, run_arm, scenario_topology

sc = Scenario(
    name="demo",
    topology={"n_nodes": 13, "n_aps": 8, "attachment_degree": 1},
    desk_scale=0.1,
    beta_scale=0.01,
    hyperparameters={"buffer_capacity": 100_000},
)
seed = 1
topo = scenario_topology(sc, seed)
print("fog IPT:", {f: round(topo.nodes[f].ipt) for f in topo.fog_ids})

print(f"\n{'arm':14s} {'avg wait':>9s} {'std wait':>9s} {'std util':>9s}")
for arm in ["Random", "DRR", "Nearest", "Fastest", "DRL-realtime", "DRL-interval"]:
    s = run_arm(sc, arm, seed, topo).summary
    print(f"{arm:14s} {s.avg_wait:9.3f} {s.std_wait_across_nodes:9.3f} {s.std_utilization_across_nodes:9.3f}")
