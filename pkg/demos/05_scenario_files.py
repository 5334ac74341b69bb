"""
Scenario files
==============

The command-line tool reads a scenario file with named blocks. The same
pipeline is available in Python: load the file, run the design, inspect
the result. The bundled scenario reproduces the blockade example.
"""

from pathlib import Path

from pulse_corridor import load_config, run_design

path = Path(__file__).resolve().parents[1] / "scenarios" / "nmb.ini"
cfg = load_config(path)
res = run_design(cfg)
print(f"T = {res.cycle.T:.4f}, lambda = {res.cycle.lam:.4f}")
print("modulation", {k: round(v, 4) for k, v in res.modulation.as_dict().items() if k != "output_nl"})
print("radius", round(res.stability.spectral_radius, 4))

# every default is filled in; this is what the reports echo back
for block, values in cfg.effective().items():
    print(f"[{block}]", values)
