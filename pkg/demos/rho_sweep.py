# How the gate threshold controls coreset size.
#
# Low rho asks the weighted prompt to close most of the gap before a batch
# counts as "seen", so more batches start new elements.  rho=1 accepts any
# weighted prompt that does not make things worse.

import numpy as np

from dpcore.cli import sweep_rows

base = {"stream": {"batches_per_domain": 10, "kind": "CSC"}, "seeds": [0, 1, 2]}
rows = sweep_rows(base, {"rho": [0.1, 0.2, 0.4, 0.6, 0.8, 1.0]})

print(" rho   mean K   mean error")
for rho in sorted({r["rho"] for r in rows}):
    sel = [r for r in rows if r["rho"] == rho]
    print("%4.1f   %6.1f   %.4f" % (rho, np.mean([r["final_K"] for r in sel]),
                                   np.mean([float(r["mean_error"]) for r in sel])))
