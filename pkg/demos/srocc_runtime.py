"""
Which efficiency metric tracks runtime?
=======================================

Rank correlation (SROCC) of params, FLOPs, activations and memory against
measured runtime over the bundled results table. Activations win by a wide
margin; parameter count is a poor predictor of speed.
"""

import math

from effsr import stats

fixture = stats.load_fixture()
res = stats.reproduce_table2(fixture)
print(res.to_text())

# ranks are invariant to monotone rescaling, so log-params gives the same value
rows = stats.srocc_subset(fixture)
runtime = [r.runtime_s for r in rows]
print(stats.srocc([math.log(r.params_M) for r in rows], runtime))

# competition-style ranks reproduce the shared first place on runtime
ranks = stats.rank_metric(fixture, "runtime_s")
print(sorted(ranks.items(), key=lambda kv: kv[1])[:3])
