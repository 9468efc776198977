"""
Carrying a policy across a load surge
=====================================

Agents trained at a low arrival rate hand their parameters and latest
experiences to the next phase. Compare how many decisions a transferred fleet
and a fresh fleet need before their smoothed reward reaches the level the
fresh fleet settles at.
"""

from fogmarl.harness import Scenario, transfer_speedup

sc = Scenario(
    topology={"n_nodes": 13, "n_aps": 8, "attachment_degree": 1},
    desk_scale=0.1,
    beta_scale=0.01,
    hyperparameters={"buffer_capacity": 100_000},
)
r = transfer_speedup(sc, seed=1)
print(f"threshold (smoothed reward)   {r['threshold']:.3f}")
print(f"decisions, from scratch       {r['scratch_steps']}")
print(f"decisions, after transfer     {r['transfer_steps']}")
print(f"ratio                         {r['ratio']:.3f}")
