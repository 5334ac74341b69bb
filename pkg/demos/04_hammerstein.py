"""
A static nonlinearity at the input
==================================

When the dose passes through a known monotone map before reaching the
plant, the controller inverts that map at each firing so that the jump
actually delivered equals the one the modulation law asks for.
"""

import numpy as np

from pulse_corridor import (
    CorridorSpec,
    NmbParams,
    OneCycle,
    PlantStructure,
    PowerLaw,
    design_period,
    design_weight,
    plant_from_nmb,
    simulate,
    stability_report,
    synthesize_modulation,
)

plant = plant_from_nmb(NmbParams())
spec = CorridorSpec.linear(7.3889, 13.9463)
T = design_period(plant, spec, (15.0, 45.0)).T
cycle = OneCycle.from_parameters(plant, T, design_weight(plant, T, spec))

# no output map: the dose must fall and the interval grow with the output
mod = synthesize_modulation(cycle, (0.5, -2.0), (5.0, 45.0, 200.0, 5000.0), None)
print("spectral radius", round(stability_report(plant, cycle, mod).spectral_radius, 4))

phi_h = PowerLaw(2.0)
traj = simulate(PlantStructure(plant, input_nl=phi_h), mod, np.zeros(3), 20, 1.0)
for e in traj.events[:6]:
    print(f"n = {e.n}: requested jump {e.target_jump:9.4f}, dose {e.lambda_n:8.4f}, "
          f"delivered {phi_h(e.lambda_n):9.4f}")
worst = max(abs(phi_h(e.lambda_n) - e.target_jump) for e in traj.events)
print(f"largest delivered-vs-requested gap {worst:.1e}")
