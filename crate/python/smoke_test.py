"""Smoke test for the `bdk` extension.

Uses an installed `bdk` if there is one, else builds the extension with
cargo and loads it from a scratch directory.
"""

import importlib
import os
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load_bdk():
    try:
        return importlib.import_module("bdk")
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "--release", "-p", "bdk-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib = os.path.join(ROOT, "target", "release", "libbdk.dylib" if sys.platform == "darwin" else "libbdk.so")
    scratch = tempfile.mkdtemp(prefix="bdk-smoke-")
    shutil.copy(lib, os.path.join(scratch, "bdk.so"))
    sys.path.insert(0, scratch)
    return importlib.import_module("bdk")


def main():
    bdk = load_bdk()
    model = bdk.Model.toy()
    print(model, model.schedule)

    images, labels = bdk.sprites(200)
    labels = dict(labels)
    t_m, combos = model.find_mixing(images, stride=10)
    print("t_m", t_m, combos)
    assert t_m is not None

    boundary = model.fit_boundary(images[:100], labels["marker"][:100], "marker", t_m)
    print(boundary)
    assert boundary.test_accuracy >= 0.8

    held_out, held_labels = bdk.sprites(16, seed=1234)
    latents = model.invert(held_out, t_m)
    far = 3 * boundary.distance_spread
    zeta = [-far if boundary.signed_distance(x) >= 0 else far for x in latents]
    edited = model.edit(held_out, boundary, zeta, seed=5)
    before = [bdk.attribute_oracle(x, "marker") for x in held_out]
    after = [bdk.attribute_oracle(x, "marker") for x in edited]
    flips = sum(1 for b, a in zip(before, after) if b is not None and a == (not b))
    print(f"marker flips {flips}/{len(edited)}")
    assert flips >= len(edited) // 2

    samples = model.sample(8, seed=3)
    r, se = bdk.estimate_radius(samples)
    print(f"sample radius {r:.3f} ± {se:.3f}")
    print("ok")


if __name__ == "__main__":
    main()
