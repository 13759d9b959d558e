"""Robust versus non-robust design with imperfect channel knowledge.

The designer only sees estimates ``H_est = H - Phi^{1/2} Delta Theta^{1/2}``.
Filters designed on the estimates are evaluated on the true channels. The
non-robust design treats the estimates as exact, and the robust design
averages the MSE over the error model.

Run with ``python3 demos/robust_design.py``.
"""

import numpy as np

from hybrid_relay import (
    ErrorModel,
    design_hybrid,
    design_robust,
    draw_simple_channel,
    end_to_end_rate,
    make_csi_pair,
    solver_config_for,
    trial_rng,
)

NT, NR, ND, NS, NRF = 64, 32, 48, 4, 6
SNR_DB = 10.0
TRIALS = 8
error = ErrorModel(sigma_e2=0.1, alpha=0.0, beta=0.0)
cfg = solver_config_for(NS, NS, SNR_DB)

rates = {"perfect": [], "nonrobust": [], "robust": []}
for trial in range(TRIALS):
    rng = trial_rng(11, trial)
    h1 = draw_simple_channel(NT, NR, 20, rng).h
    h2 = draw_simple_channel(NR, ND, 20, rng).h
    h1_est = make_csi_pair(h1, error.receive_correlation(NR), error.transmit_correlation(NT), rng).estimated_channel
    h2_est = make_csi_pair(h2, error.receive_correlation(ND), error.transmit_correlation(NR), rng).estimated_channel

    designs = {
        "perfect": design_hybrid(h1, h2, NS, NRF, cfg),
        "nonrobust": design_hybrid(h1_est, h2_est, NS, NRF, cfg),
        "robust": design_robust(h1_est, h2_est, error, NS, NRF, cfg),
    }
    for name, d in designs.items():
        # always measured on the true channels
        rates[name].append(end_to_end_rate(h1, h2, d.filters, cfg.sigma1, cfg.sigma2))

for name, values in rates.items():
    print(f"{name:>10}: {np.mean(values):.3f} bits/s/Hz over {TRIALS} channels")
gain = np.array(rates["robust"]) - np.array(rates["nonrobust"])
print(f"robust minus non-robust, paired: {gain.mean():+.4f} bits (std err {gain.std(ddof=1) / np.sqrt(TRIALS):.4f})")
