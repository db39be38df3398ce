"""Checking the closed forms against the master equation.

The closed-form engine assumes coherent bus states.  Integrating the full
density matrix on a truncated Fock space tests that assumption.
Run with ``python tutorials/04_master_equation_check.py`` (about ten seconds).
"""

import numpy as np

from ripgate.closed_form import phase_series
from ripgate.envelopes import ConstantEnvelope
from ripgate.lindblad import TruncatedSystem, compare, integrate
from ripgate.params import DeviceParams, derive_params

dev = DeviceParams.preset("low")
env = ConstantEnvelope(20.0, 200.0)
grid = np.linspace(0, 200.0, 41)

# 20 Fock levels keep the top-level population below 1e-8 at this drive.
series = integrate(TruncatedSystem(fock=20), dev, env, 10.0, 200.0, grid)
analytic = phase_series(derive_params(dev, 10.0), env, grid)
report = compare(series, analytic, tolerances={"nbar": 1e-4, "theta": 1e-4, "rho0011_abs": 1e-5})
for name, entry in report.entries.items():
    print(f"{name:12s} max deviation {entry.max_abs:.1e}")
print("trace drift %.1e, smallest eigenvalue %.1e" % (np.max(np.abs(series.trace - 1)), series.min_eigenvalue.min()))
print("all within tolerance:", report.passed)
