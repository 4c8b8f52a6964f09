"""Rate-matched BER comparison of the six schemes on one network.

Every scheme is run at 1 bit/source/channel use in the (J,M,N)=(2,2,3)
network by picking the PSK order that compensates its symbol rate
(QPSK for rate 1/2, 8PSK for rate 1/3, 16PSK for rate 1/4).  A short
sweep is enough to see the ordering; push max_trials / the grid up for
publication-quality curves.

Runs in a couple of minutes.
Run:  python3 demos/scheme_comparison.py
"""

import sys

from marnsim.harness import COMPARISON_ORDERS, ExperimentSpec, emit, run_experiment
from marnsim.schemes import SchemeId, scheme_meta

CONFIG = (2, 2, 3)

print("scheme metadata at (J,M,N) =", CONFIG)
for scheme in SchemeId:
    meta = scheme_meta(scheme, *CONFIG)
    order = COMPARISON_ORDERS[scheme]
    print(
        f"  {scheme.value:22s} rate {str(meta.symbol_rate):>4s}  "
        f"{order}-PSK  relay CSI: {'yes' if meta.relay_backward_csi else 'no'}"
    )

spec = ExperimentSpec(
    tuple(SchemeId),
    (CONFIG,),
    (12.0, 16.0, 20.0, 24.0),
    orders=dict(COMPARISON_ORDERS),
    min_errors=100,
    max_trials=200_000,
    seed=0,
)
points = run_experiment(spec, progress=sys.stderr)
print()
print(emit(points, fmt="plotdata"))
