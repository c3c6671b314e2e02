# %% [markdown]
# # Laying out hot tuples on the switch
#
# A switch pipeline visits each stage once per pass. A transaction whose
# tuples sit in stages that go backwards, or that touch two tuples of the same
# register array, has to recirculate. This script builds the co-access graph of
# a SmallBank trace and compares the planned layout with a random one.

# %%
from collections import Counter

from switchtx.bench import pass_profile, switch_throughput
from switchtx.layout import build_access_graph, cut_weight, plan_layout, random_layout
from switchtx.pipeline import SwitchConfig
from switchtx.workloads import SmallBankSpec, WorkloadSpec, make_workload

spec = WorkloadSpec("smallbank", SmallBankSpec(accounts=10_000, hot_per_node=10, hot_txn_prob=1.0), nodes=8, seed=3)
wl = make_workload(spec)
trace = wl.trace(2000)
hot = wl.nominal_hot_keys()
sw = SwitchConfig(slots_per_array=64)
print(len(trace), "transactions,", len(hot), "hot tuples, capacity", sw.capacity)

# %% [markdown]
# The access graph has an edge for every pair of hot tuples that share a
# transaction. Dependencies (a write that needs a value read earlier) are kept
# separately because they fix the order of the two stages.

# %%
graph = build_access_graph(trace, hot)
print("co-access edges:", len(graph.weight), " dependency edges:", len(graph.forward))
print("heaviest pairs:", Counter(graph.weight).most_common(3))

# %%
planned = plan_layout(trace, hot, sw, seed=3)
shuffled = random_layout(hot, sw, seed=3)
for name, plan in (("planned", planned), ("random", shuffled)):
    prof = pass_profile(trace, plan)
    print(f"{name:8s} cut={cut_weight(graph, plan.partition_of) if plan.partition_of else '-':>6} "
          f"single={prof['single']} multi={prof['multi']} extra passes={prof['extra_passes']} "
          f"pipeline rate={switch_throughput(trace, plan, sw):.3f}/cycle")

# %% [markdown]
# Every planned transaction goes through in one pass, so the pipeline finishes
# close to one transaction per cycle. Random placement forces about a quarter
# of transactions to recirculate, and those passes take pipeline slots from
# new packets.

# %%
print(planned.to_csv().splitlines()[:6])
