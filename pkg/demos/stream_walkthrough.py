# Walk one dynamic stream through DPCore and watch the coreset.
#
# Fifteen synthetic domains fall into four groups.  A Dirichlet stream with
# delta=1 interleaves them in short runs, so consecutive batches often come
# from unrelated domains.  We print every batch where the coreset grows and
# a per-path summary at the end.

import numpy as np

from dpcore import AdaptState, StreamSpec, TestbedConfig, generate, make_testbed, run_policy, stream_diagnostics

tb = make_testbed(TestbedConfig(seed=0))
print("source error      %.3f" % tb.source_error())
print("no-prompt errors  %s" % np.round([tb.domain_error(g) for g in range(15)], 2))

stream = generate(StreamSpec(15, 20, "CDC_Dirichlet", seed=1, delta=1.0))
diag = stream_diagnostics(stream)
print("\nstream: %d batches, %d domain switches" % (len(stream), diag["switch_count"]))

state = AdaptState.create(tb.extractor, tb.source_stats, seed=0)
report = run_policy("DPCore", stream, state, tb)

# A new element appears only when the weighted prompt fails the ratio gate.
groups = tb.model.group_id
prev = 0
for r in report.records:
    if r.coreset_size > prev:
        ratio = "-" if r.ratio is None else "%.2f" % r.ratio
        print("batch %3d  domain %2d (group %d)  ratio %s  -> K=%d" % (
            r.index, r.true_domain, groups[r.true_domain], ratio, r.coreset_size))
        prev = r.coreset_size

print("\npaths:", report.path_counts())
print("mean error %.4f   BP/batch %.3f   FP/batch %.3f" % (
    report.mean_error, report.bp_total / len(report), report.fp_total / len(report)))

# Compare with the two ablations that keep a single prompt or none.
for policy in ("SourceOnly", "SinglePrompt"):
    st = AdaptState.create(tb.extractor, tb.source_stats, seed=0)
    print("%-13s mean error %.4f" % (policy, run_policy(policy, stream, st, tb).mean_error))
