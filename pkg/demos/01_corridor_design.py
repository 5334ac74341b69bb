"""
Designing a dosing cycle for a target corridor
==============================================

A neuromuscular-blockade level must stay between 2 % and 10 %. The
plant is a third-order chain followed by a Hill sensor, so the measured
corridor is first mapped to the linear output, then a period and a dose
are chosen so that the periodic response touches both ends.
"""

import numpy as np

from pulse_corridor import (
    CorridorSpec,
    NmbParams,
    OneCycle,
    corridor_extrema,
    design_period,
    design_weight,
    map_corridor_through_output_nl,
    plant_from_nmb,
)

params = NmbParams(alpha=0.0374, gamma=2.6677, c50=3.2425)
plant = plant_from_nmb(params)
hill = params.hill()
print("rate constants", plant.rates)
print("A =\n", plant.A)

# the Hill map is decreasing, so the 10 % bound becomes the lower concentration
spec = CorridorSpec.measured(2.0, 10.0, hill)
print(f"linear corridor  [{spec.y_bar_min:.4f}, {spec.y_bar_max:.4f}]")

###############################################################################
# The shape of the periodic response does not depend on the dose, only on
# the period. Sweep the period and pick the one whose max / (max - min)
# ratio matches the corridor.

period = design_period(plant, spec, (15.0, 45.0))
print(f"period T = {period.T:.4f}  (ratio mismatch {period.ratio_residual:.1e})")
for T, r in zip(period.sweep_T[::32], period.sweep_ratio[::32]):
    print(f"   T = {T:6.2f}   ratio = {r:7.4f}")

###############################################################################
# The dose then scales the response to the corridor width.

lam = design_weight(plant, period.T, spec)
cycle = OneCycle.from_parameters(plant, period.T, lam)
print(f"dose lambda = {lam:.4f}")
print("fixed point X =", np.round(cycle.X, 4))

ca = map_corridor_through_output_nl(corridor_extrema(plant, cycle.T, cycle.lam), hill)
print("extremum times", np.round(ca.extremum_times, 4))
print(f"achieved: y_bar in [{ca.y_bar_min:.4f}, {ca.y_bar_max:.4f}], "
      f"y in [{ca.y_min:.4f}, {ca.y_max:.4f}] %")
