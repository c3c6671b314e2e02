# %% [markdown]
# # Throughput of the three execution modes
#
# Same cluster, same per-worker transaction streams, three ways of running hot
# transactions:
#
# * `p4db`: hot tuples live in switch registers and hot transactions run there.
# * `no-switch`: everything runs on the nodes under two-phase locking.
# * `lm-switch`: the switch only hands out locks for hot tuples.
#
# The runs below are smaller than the acceptance ones so the script finishes
# in about a minute.

# %%
from switchtx.bench import sweep, write_csv
from switchtx.config import ExperimentConfig

cfg = ExperimentConfig(workload="ycsb", nodes=4, workers_per_node=10, duration=80_000, warmup=15_000, audit=False)
results = sweep(cfg, "distributed_prob", [0.0, 0.5, 1.0])
for r, row in results:
    print(f"dist={r.config.distributed_prob:.1f} {r.config.mode:10s} {r.metrics.throughput:9.0f} txn/Mtick "
          f"speedup {row['speedup']}")

# %% [markdown]
# Distributed cold transactions pay a vote round between nodes, while hot ones
# cost one switch round trip whatever the node mix. The gap therefore widens
# as the distributed fraction grows.

# %%
skew = sweep(cfg.replace(distributed_prob=0.2), "hot_access_prob", [0.0, 0.5, 1.0], ("p4db", "no-switch"))
for r, row in skew:
    print(f"hot={r.config.hot_access_prob:.1f} {r.config.mode:10s} {r.metrics.throughput:9.0f} speedup {row['speedup']}")

# %%
print(write_csv([row for _, row in skew])[:400])
