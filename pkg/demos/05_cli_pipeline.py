"""Drive the whole pipeline through the CLI: simulate, reconstruct, analyze.

Everything a shell script would do with `born-holo ...`, but using the same
entry point in-process so the demo is one runnable file. Artifacts land in
./out_cli/; every stage writes a manifest with content digests, and rerunning
with the same seed reproduces the numeric files byte for byte.
"""

import json
from pathlib import Path

from bornholo.cli import main

out = Path("out_cli")
out.mkdir(exist_ok=True)

sim_cfg = out / "simulate.json"
sim_cfg.write_text(json.dumps({
    "seed": 7,
    "grid": {"nx": 64, "ny": 64, "nz": 8, "dx": 172.5e-9, "dy": 172.5e-9,
             "dz_voxel": 172.5e-9, "slice_spacing": 5e-6, "z0": 5e-6,
             "lambda_vacuum": 630e-9, "n_medium": 1.33, "na": 0.4},
    "phantom": {"layout": "random", "delta_n": 0.19, "n_particles": 8},
    "forward": {"order_K": 10, "include_self_interference": False},
}, indent=2))

rec_cfg = out / "reconstruct.json"
rec_cfg.write_text(json.dumps({
    "grid": json.loads(sim_cfg.read_text())["grid"],
    "solver": {"method": "born", "order_K": 2, "tau_rel": 1e-3,
               "max_iters": 80, "snapshot_iters": [20, 40]},
    "inputs": {"hologram": str(out / "sim/hologram.mshv")},
}, indent=2))

ana_cfg = out / "analyze.json"
ana_cfg.write_text(json.dumps({
    "analysis": {"threshold_rel": 0.15},
    "inputs": {"volume": str(out / "rec/volume.mshv"),
               "truth_particles": str(out / "sim/particles.tsv"),
               "truth_volume": str(out / "sim/phantom.mshv")},
}, indent=2))

for argv in (
        ["simulate", "--config", str(sim_cfg), "--out", str(out / "sim")],
        ["reconstruct", "--config", str(rec_cfg), "--out", str(out / "rec")],
        ["analyze", "--config", str(ana_cfg), "--out", str(out / "ana")]):
    code = main(argv)
    print(f"born-holo {argv[0]}: exit {code}")
    assert code == 0

report = json.loads((out / "ana/report.json").read_text())
print(json.dumps(report, indent=2))
