"""Driving the bus: coherent branches and the phases they leave behind.

Run with ``python tutorials/01_dispersive_response.py``.
"""

import numpy as np

from ripgate.closed_form import phase_series, steady_state_rates
from ripgate.envelopes import ConstantEnvelope
from ripgate.metrics import theta_of
from ripgate.params import DeviceParams, derive_params

# The low-frequency device, driven 10 MHz above the dressed bus frequency.
dev = DeviceParams.preset("low")
params = derive_params(dev, 10.0)
print("dispersive shifts chi_jk (MHz):", np.round(params.chi, 2))
print("shifts relative to |00>, chibar (MHz):", np.round(params.chibar[1:], 2))
print("static ZZ rate zeta0 (MHz): %.4f" % params.zeta_0)

# A constant 20 MHz drive.  Each qubit state |jk> sees its own detuning, so
# the bus splits into four coherent branches alpha_jk(t).
env = ConstantEnvelope(20.0, 800.0)
t = np.linspace(0, 800.0, 9)
series = phase_series(params, env, t)
for time, n in zip(t, series.nbar()):
    print(f"t = {time:5.0f} ns   <n> = {n:.3f}")

# The branches interfere in the phases mu_{jk,lm}; theta is the entangling
# combination and keeps growing while the drive is on.
print("theta(800 ns) = %.3f rad" % theta_of(series.table(-1)))

# In steady state the rates become constant.  The loss term makes the
# coherence between |00> and |11> decay at a rate set by how far apart
# their branches sit in phase space.
rates = steady_state_rates(params, 20.0)
print("steady-state d(theta)/dt = %.4f rad/ns" % rates.theta_dot)
print("steady-state dephasing rate of |00>,|11> = %.2e 1/ns" % rates.im_mu_dot_0011)
