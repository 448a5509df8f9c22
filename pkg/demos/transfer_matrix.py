# Does a prompt learned on one domain help its neighbours?
#
# Learn one prompt per domain with the domain boundary known, then apply
# every prompt to every domain.  Rows are prompt sources, columns targets,
# entries are error minus the target's no-prompt error (negative = helps).

import numpy as np

from dpcore import AdaptState, TestbedConfig, make_testbed
from dpcore.testbed import oracle_domain_prompts

tb = make_testbed(TestbedConfig(seed=0))
prompts, table = oracle_domain_prompts(tb, lambda: AdaptState.create(tb.extractor, tb.source_stats))
m = tb.model.n_domains
order = np.argsort(tb.model.group_id, kind="stable")

delta = np.zeros((m, m))
for i, g in enumerate(order):
    for j, h in enumerate(order):
        delta[i, j] = tb.domain_error(h, prompts[g]) - table[h]["no_prompt"]

np.set_printoptions(precision=2, suppress=True, linewidth=140)
print("group ids:", tb.model.group_id[order])
print(delta)

same = tb.model.group_id[order][:, None] == tb.model.group_id[order][None, :]
print("\nmean change, same group : %+.3f" % delta[same].mean())
print("mean change, other group: %+.3f" % delta[~same].mean())
