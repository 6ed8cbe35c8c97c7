"""
Scoring predictions, and the same thing from the command line
=============================================================

EPE and F1-all on a ground-truth flow against a deliberately degraded
"prediction", then the full CLI loop: generate a small dataset, run the
photometric audit over it, and score a noisy copy of its flows.
"""

import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from flowsynth.flowio import read_flo, write_flo
from flowsynth.metrics import RULE_KITTI, RULE_PROSE, epe, f1_all
from flowsynth.pipeline import synthesize_texture
from flowsynth.segmentation import segment_stack
from flowsynth.synthesis import SynthesisConfig, generate_sample

out_root = Path(__file__).parent / "output" / "cli_demo"
shutil.rmtree(out_root, ignore_errors=True)
out_root.mkdir(parents=True)

# --- library-level metrics on one sample -----------------------------------
source = synthesize_texture(384, 512, seed=21)
aux = synthesize_texture(384, 512, seed=22)
stack = segment_stack(source, component_counts=(100, 1000))
sample = generate_sample(source, aux, stack, SynthesisConfig(), seed=7)

rng = np.random.default_rng(0)
gt = sample.flow
for sigma in (0.5, 2.0, 8.0):
    pred = gt + rng.normal(0.0, sigma, gt.shape).astype(np.float32)
    print("noise sigma %4.1f: epe=%6.3f  f1(kitti)=%5.2f%%  f1(prose)=%5.2f%%"
          % (sigma, epe(pred, gt),
             f1_all(pred, gt, rule=RULE_KITTI),
             f1_all(pred, gt, rule=RULE_PROSE)))

# --- the same loop through the CLI ------------------------------------------
images = out_root / "images"
images.mkdir()
for i in range(3):
    tex = synthesize_texture(192, 256, seed=30 + i)
    Image.fromarray((tex * 255).round().astype(np.uint8)).save(images / f"{i}.png")

config = out_root / "config.json"
config.write_text(json.dumps({"n_layers_range": [2, 4],
                              "occluder_size_range": [500, 3000],
                              "component_counts": [30, 120]}))

dataset = out_root / "dataset"


def cli(*args):
    cmd = [sys.executable, "-m", "flowsynth", *map(str, args)]
    print("$ flowsynth " + " ".join(map(str, args)))
    proc = subprocess.run(cmd, capture_output=True, text=True)
    print(proc.stdout.rstrip())
    if proc.returncode != 0:
        print(proc.stderr.rstrip())
        raise SystemExit(proc.returncode)


cli("generate", "--input", images, "--output", dataset,
    "--count", 4, "--seed", 1, "--config", config, "--no-augment")
cli("validate", dataset / "manifest.jsonl")

# fake a set of predictions by perturbing the ground truth, then score it
gt_dir = out_root / "gt"
pred_dir = out_root / "pred"
gt_dir.mkdir()
pred_dir.mkdir()
for flo in sorted(dataset.glob("*_flow.flo")):
    flow = read_flo(flo)
    write_flo(flow, gt_dir / flo.name)
    write_flo(flow + rng.normal(0.0, 1.5, flow.shape).astype(np.float32),
              pred_dir / flo.name)
cli("eval", "--pred", pred_dir, "--gt", gt_dir,
    "--report", out_root / "report.json")

report = json.loads((out_root / "report.json").read_text())
print("report aggregate epe: %.4f over %d samples"
      % (report["epe_mean"], len(report["per_sample"])))
