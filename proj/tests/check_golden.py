# SPDX-License-Identifier: Apache-2.0
"""Re-synthesizes the default benchmark and re-runs the baseline oracle against the pinned golden file."""

import json
import math
import subprocess
import sys
import tempfile


def close(a, b, tol):
    if isinstance(a, dict):
        return all(close(a[k], b[k], tol) for k in b)
    if isinstance(a, str):
        return a == b
    return math.isclose(a, b, rel_tol=0.0, abs_tol=tol)


def main():
    cli, oracle, golden_path = sys.argv[1:4]
    with open(golden_path) as f:
        golden = json.load(f)["baselines"]
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([cli, "synth", "--out", f"{tmp}/bench"], check=True, stdout=subprocess.DEVNULL)
        got = json.loads(subprocess.check_output([sys.executable, oracle, f"{tmp}/bench"]))
    bad = [k for k in golden if not close(got[k], golden[k], 1e-12)]
    for k in golden:
        print(f"{k}: {'ok' if k not in bad else 'MISMATCH'}")
    sys.exit(1 if bad else 0)


if __name__ == "__main__":
    main()
