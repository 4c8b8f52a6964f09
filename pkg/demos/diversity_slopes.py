"""Outage-slope diversity estimates for the TDMA-uplink scheme.

Samples the closed-form post-IC SNR for a few network shapes and fits
the small-epsilon outage slope on log-log axes.  The slope should match
min(M, floor(M/J) * (N - J + 1)): extra destination antennas buy
diversity only up to the interference-free ceiling M.

Runs in about half a minute.
Run:  python3 demos/diversity_slopes.py
"""

from marnsim.airlink import NetworkConfig
from marnsim.harness import run_diversity
from marnsim.schemes import SchemeId

# Steep slopes empty the outage tail fast, so the last config gets a
# bigger sample.
CONFIGS = [
    (2, 2, 2, 400_000),  # ceiling binds: expect 1
    (2, 2, 3, 400_000),  # expect 2
    (3, 3, 3, 400_000),  # expect 1
    (2, 4, 3, 4_000_000),  # expect 4
]

print("scheme: tdma_icrec, outage slope of the post-IC SNR")
print(f"{'J,M,N':>8}  {'expected':>8}  {'measured':>8}  {'stderr':>7}")
for j, m, n, trials in CONFIGS:
    expect = min(m, (m // j) * (n - j + 1))
    cfg = NetworkConfig(j, m, n, 10.0 ** 2.0)
    est = run_diversity(SchemeId.TdmaIcRec, cfg, trials=trials, seed=0)
    print(f"{j},{m},{n:>2}  {expect:>8}  {est.slope:>8.2f}  {est.stderr:>7.2f}")
