"""Atom loss, renormalized fidelity and the calibrated noise model.

Lost atoms read "absent", so every loss event dilutes the measured fidelity.
With an independent loss probability p per atom, a fraction (1 - p)^2 of the
pairs survives and F' = F / (1 - p)^2 corrects for it. The calibrated config
adds photon scattering and Rydberg dephasing to reproduce the measured
outcome probabilities.
"""

from dataclasses import replace
from pathlib import Path

from rydsim.analysis import apply_independent_loss, extract_fidelity, pair_loss_probability
from rydsim.cli import report_table
from rydsim.config import load_config
from rydsim.experiments import default_parity_grid, entangled_ensemble, parity_scan_from_state
from rydsim.measurement import pushout_probabilities

print(report_table(0.22, 0.46))

configs = Path(__file__).resolve().parents[1] / "configs"
calibrated = load_config(configs / "calibrated_entangle.yaml")
noise = calibrated.noise
print(f"calibrated: loss {noise.extra_loss_prob}, scatter {noise.scatter_rate_hz / 1e6} MHz, "
      f"branching {noise.scatter_branching}, dephasing {noise.ryd_dephasing_hz / 1e3} kHz")

# expected loss folded in exactly, one integration
lossless = replace(calibrated, shots=1, noise=replace(noise, extra_loss_prob=0.0))
before_loss = pushout_probabilities(entangled_ensemble(lossless).mean_rho_final)
after_loss = apply_independent_loss(before_loss, noise.extra_loss_prob)
target = calibrated.calibrate.target
for name, value in zip(("p11", "p10", "p01", "p00"), after_loss.as_array()):
    print(f"  {name}  model {value:.3f}   target {target[name]:.2f}")

# the parity analysis with sampled loss, as the CLI does it
rho = entangled_ensemble(calibrated).mean_rho_final
survival = 1 - pair_loss_probability(noise.extra_loss_prob)
report = extract_fidelity(parity_scan_from_state(rho, calibrated, default_parity_grid(16)), pair_survival=survival)
print(f"F = {report.F:.3f}   F' = {report.F_prime:.3f}   (Bell threshold 0.5)")
