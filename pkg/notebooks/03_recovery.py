# %% [markdown]
# # Recovering switch state from node logs
#
# Switch registers are volatile. Each coordinator logs the switch operations
# of a hot transaction before sending the packet, and logs the returned global
# id and results afterwards. After a crash, the switch state is rebuilt by
# finding a serial order consistent with what was logged.

# %%
from collections import Counter

from switchtx.crashtest import CrashKind, crash_campaign, run_crash_scenario
from switchtx.recovery import lost_intent_scenario

# %% [markdown]
# Two warm transactions add to the same switch tuple `x`, which starts at 1.
# T1 adds 2 but both its coordinator and the switch fail while its packet is in
# flight; T2 adds 3 and logs that it read 3. Only T1 followed by T2 explains
# that read.

# %%
res = lost_intent_scenario()
print("order", res.order, "state", res.state, "determined", res.inference.determined)

# %% [markdown]
# A campaign crashes the switch, a node, or both at a random time, keeps the
# survivors running for ten round trips, then compares recovery with ground
# truth. Runs whose logs admit several final states are counted but not compared.

# %%
outcomes = crash_campaign(60, seed=1)
print(Counter((o.kind.value, o.ok, o.determined) for o in outcomes))

# %%
one = run_crash_scenario(CrashKind.COMBINED, seed=5)
print(one.row())
