"""Smooth spline pulses that give the bus back empty.

A spline of degree d rises with (d-1)/2 vanishing derivatives, so the
branches follow the drive adiabatically and little population is left when
the drive stops.  Run with ``python tutorials/02_spline_gates.py``.
"""


from ripgate.envelopes import SplineEnvelope, solve_spline_coefficients
from ripgate.params import DeviceParams
from ripgate.spline_design import design_at

for d in (3, 5, 7):
    sol = solve_spline_coefficients(d)
    print(f"d = {d}: coefficients {sol.coefficients}, max derivative {sol.max_derivative_numerator}/t_r^{(d + 1) // 2}")

# A degree-7 pulse rising over 50 ns to 284 MHz and falling back.
env = SplineEnvelope(7, 50.0, 284.0)
print("pulse duration %.0f ns, first derivative at t=0: %g" % (env.duration, abs(env.derivative(1, 0.0))))

# Tune the rise time so one pulse produces theta = pi/2 on the high-frequency
# device; the echoed pair of pulses is the full controlled-Z.
dev = DeviceParams.preset("high")
design = design_at(dev, 7, 284.0, 57.0)
print(f"tuned rise time {design.t_r:.1f} ns, composite gate {design.composite_duration:.0f} ns")
print(f"average infidelity {design.achieved_infidelity:.2e}, peak photons {design.peak_photons:.2f}")
print(f"photons left at the end {design.residual_photons:.1e}")

# At a fixed detuning lower degrees leave far more photons behind, and the
# infidelity follows.
for d in (3, 5):
    other = design_at(dev, d, 284.0, 57.0)
    print(f"d = {d}: t_r {other.t_r:.1f} ns, infidelity {other.achieved_infidelity:.2e}, "
          f"residual {other.residual_photons:.1e}")
