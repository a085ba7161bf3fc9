"""Single-atom Raman Rabi oscillation and its fit.

One atom sits in the first trap, the second trap is empty. The Raman pair
drives |up> <-> |down> at 250 kHz; push-out detection reads "present" for
|down>. We scan the pulse length, fit the damped-sinusoid model and compare
with sin^2(Omega t / 2).
"""

import math

import numpy as np

from rydsim.analysis import fit_rabi
from rydsim.config import ExperimentConfig, ScanConfig
from rydsim.experiments import run_experiment, signal_of_interest

config = ExperimentConfig(experiment="raman_rabi", scan=ScanConfig(0.0, 8e-6, 60))
scan = run_experiment(config)
p_down = signal_of_interest("raman_rabi", scan.probabilities)

fit = fit_rabi(scan.scan_values, p_down)
print(f"fitted Rabi frequency  {fit.frequency_hz / 1e3:8.3f} kHz  (drive 250 kHz)")
print(f"contrast               {fit.contrast:8.5f}")
print(f"residual rms           {fit.residual_rms:8.1e}")

omega = 2 * math.pi * config.physics.raman_rabi_hz
analytic = np.sin(0.5 * omega * scan.scan_values) ** 2
print(f"max |sim - analytic|   {np.abs(p_down - analytic).max():8.1e}")

# the same scan with 100 repetitions per point, as in the lab
noisy = run_experiment(ExperimentConfig(experiment="raman_rabi", sample_counts=True, seed=3))
noisy_fit = fit_rabi(noisy.scan_values, signal_of_interest("raman_rabi", noisy.probabilities))
print(f"with 100 shots/point   {noisy_fit.frequency_hz / 1e3:8.3f} kHz")
