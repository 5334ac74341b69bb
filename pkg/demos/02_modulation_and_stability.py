"""
Modulation laws and local stability
===================================

The controller sets the next dose and interval from the measured effect.
Affine laws with chosen slopes are shifted so that they reproduce the
designed cycle; the multipliers of the linearized firing map then tell
whether, and how, the loop converges to it.
"""

import numpy as np

from pulse_corridor import (
    CorridorSpec,
    NmbParams,
    OneCycle,
    design_period,
    design_weight,
    plant_from_nmb,
    slope_grid,
    slope_search,
    stability_report,
    synthesize_modulation,
)

params = NmbParams()
plant, hill = plant_from_nmb(params), params.hill()
spec = CorridorSpec.measured(2.0, 10.0, hill)
T = design_period(plant, spec, (15.0, 45.0)).T
cycle = OneCycle.from_parameters(plant, T, design_weight(plant, T, spec))

# dose bounds 200..5000, interval bounds 5..45
bounds = (5.0, 45.0, 200.0, 5000.0)
mod = synthesize_modulation(cycle, (-0.0940, 0.0313), bounds, hill)
print(f"k1 = {mod.k1:.4f}  k2 = {mod.k2}  k3 = {mod.k3:.4f}  k4 = {mod.k4}")
print(f"laws at the fixed point: dose {mod.dose(cycle.y0):.4f}, interval {mod.period(cycle.y0):.4f}")

rep = stability_report(plant, cycle, mod)
print("multipliers", rep.multipliers.real, "radius", round(rep.spectral_radius, 4))
print("stable:", rep.stable, " monotone:", rep.monotone_convergence)

###############################################################################
# Without feedback (both slopes zero) the map is just the plant flow over
# one period; feedback shrinks the dominant multiplier.

open_loop = stability_report(plant, cycle, synthesize_modulation(cycle, (0, 0), bounds, hill))
print("zero-slope multipliers", open_loop.multipliers.real)

###############################################################################
# A grid search over admissible slopes picks the fastest contraction.

choice = slope_search(plant, cycle, bounds, hill,
                      slope_grid(-0.5, 0.0, n=17), slope_grid(0.0, 0.1, n=17))
print(f"best slopes on the grid: k2 = {choice.k2:.4g}, k4 = {choice.k4:.4g}, radius {choice.rho:.4f}")
