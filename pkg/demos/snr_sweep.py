"""Small Monte-Carlo SNR sweep through the experiment harness.

This is the library route to what ``hybrid-relay --preset snr_sweep``
does from the shell. Trials are kept low so the script finishes in a
minute or two; raise ``TRIALS`` for smoother curves.

Run with ``python3 demos/snr_sweep.py [output.csv]``.
"""

import sys
from collections import defaultdict

from hybrid_relay import ExperimentSpec, SystemConfig, run_experiment, write_csv

TRIALS = 10

spec = ExperimentSpec(
    preset="snr_sweep",
    system=SystemConfig(nt=64, nr=32, nd=48, ns=4, nrf=6),
    trials=TRIALS,
    seed=1,
    sweep_values=(-10.0, -5.0, 0.0, 5.0, 10.0),
)
reports = run_experiment(spec, progress=lambda line: print(line, file=sys.stderr))

table = defaultdict(dict)
for r in reports:
    table[r.label][r.snr_db] = r.mean_rate

labels = sorted(table)
print("snr_db  " + "  ".join(f"{lab:>18}" for lab in labels))
for snr in spec.sweep_values:
    print(f"{snr:6.1f}  " + "  ".join(f"{table[lab][snr]:18.3f}" for lab in labels))

if len(sys.argv) > 1:
    write_csv(reports, sys.argv[1])
    print(f"wrote {sys.argv[1]}", file=sys.stderr)
