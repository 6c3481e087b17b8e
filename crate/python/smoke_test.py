"""Smoke test for the audiomark Python extension.

Imports an installed `audiomark` module, or builds the extension with
cargo and loads it from the target directory.
"""

import importlib.util
import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        import audiomark

        return audiomark
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "-p", "audiomark-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    built = ROOT / "target" / "debug" / "libaudiomark.so"
    tmp = pathlib.Path(tempfile.mkdtemp())
    shutil.copy(built, tmp / "audiomark.so")
    spec = importlib.util.spec_from_file_location("audiomark", tmp / "audiomark.so")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    am = load()
    clip = am.synthetic_clip(7, 0, 0.5)
    assert len(clip) == am.SAMPLE_RATE // 2
    payload = am.random_bits(16, 3)

    for scheme in ["spread_spectrum", "sync_payload", "probability"]:
        marked = am.embed(clip, payload, scheme)
        decision, score = am.detect(marked, payload, scheme)
        assert decision, (scheme, score)
        assert am.snr(clip, marked) > 20.0

    decision, _ = am.detect(am.synthetic_clip(7, 1, 0.5), scheme_name="probability")
    assert not decision

    noisy = am.perturb(clip, "gaussian_noise", 20.0)
    assert abs(am.snr(clip, noisy) - 20.0) < 0.01

    try:
        am.perturb(clip, "gaussian_noise", 120.0)
    except am.AudiomarkError as e:
        assert "[5, 40]" in str(e)
    else:
        raise AssertionError("out-of-range parameter accepted")

    assert am.bitwise_accuracy("1111", "1100") == 0.5
    t, df, p = am.welch_ttest([1, 2, 3, 4, 5], [2, 4, 6, 8, 10, 12])
    assert abs(p - 0.04928433820673049) < 1e-6

    marked = am.embed(clip, payload)
    r = am.whitebox_attack(marked, payload, "removal", snr_budget=20.0, iterations=200)
    assert r["success"] and r["snr"] >= 20.0 - 0.01
    assert not am.detect(r["samples"], payload)[0]

    with tempfile.TemporaryDirectory() as out:
        rows = am.run_bench(out, seed=7, clips=12, duration=0.5, kinds=["echo"], calibrate=False)
        assert len(rows) == 3 * 5
        assert all(row["n"] == 12 for row in rows)
        assert all(0.0 <= row["fnr"] <= 1.0 and not math.isnan(row["fpr"]) for row in rows)
        assert (pathlib.Path(out) / "report.csv").exists()

    print("python smoke test passed")


if __name__ == "__main__":
    sys.exit(main())
