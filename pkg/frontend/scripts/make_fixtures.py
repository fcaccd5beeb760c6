"""Regenerate the committed viewer test fixtures from the core package.

Writes tests/fixtures/rig_small.json (a real exported rig with eyeballs and
a texture reference) and tests/fixtures/blend_vectors.json (blend weights
with the core evaluator's float32 vertex output, base64 little-endian).

Run from the frontend directory: python3 scripts/make_fixtures.py
"""

import base64
import json
import tempfile
from pathlib import Path

import numpy as np

from facekit import evaluate_rig, load_rig
from facekit.cli import main

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def run(argv):
    assert main(argv) == 0, argv


def b64f32(values):
    return base64.b64encode(
        np.ascontiguousarray(values, dtype="<f4").tobytes()
    ).decode("ascii")


def build():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        run(["gen-synthetic", "--seed", "11", "--out", str(d),
             "--verts", "162", "--size", "128"])
        run(["fit", "--model", str(d / "model.cfm"),
             "--landmarks", str(d / "landmarks.txt"),
             "--image", str(d / "image.png"), "--out", str(d / "fit.txt")])
        run(["refine", "--model", str(d / "model.cfm"), "--fit", str(d / "fit.txt"),
             "--landmarks", str(d / "landmarks.txt"), "--image", str(d / "image.png"),
             "--mask", str(d / "mask.png"), "--out", str(d / "refined.obj")])
        run(["rig", "--model", str(d / "model.cfm"), "--mesh", str(d / "refined.obj"),
             "--out", str(d / "rig.cfr"), "--json", str(FIXTURES / "rig_small.json"),
             "--eyeballs", "--texture", "face.png"])

        rig, _ = load_rig(d / "rig.cfr")

    m = len(rig.names)
    rng = np.random.default_rng(21)
    betas = [
        np.zeros(m),
        np.eye(m)[0],
        rng.uniform(0.0, 1.0, m),
        np.where(rng.uniform(size=m) < 0.1, rng.uniform(0.0, 1.0, m), 0.0),
    ]
    doc = {
        "betas": [[float(b) for b in beta] for beta in betas],
        "expected": [
            b64f32(evaluate_rig(rig, beta).vertices.reshape(-1)) for beta in betas
        ],
    }
    (FIXTURES / "blend_vectors.json").write_text(
        json.dumps(doc, indent=1), encoding="utf-8"
    )
    print(f"wrote fixtures to {FIXTURES}")


if __name__ == "__main__":
    build()
