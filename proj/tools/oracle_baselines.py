# SPDX-License-Identifier: Apache-2.0
"""Reference baselines for a synthesized benchmark directory.

Reads target.csv and benchmark.json straight from disk (numpy only) and
prints teacher argmax accuracies, a Monte-Carlo Bayes accuracy for the target
domain, the dataset digest and the epoch-1 fusion statistics.
"""

import argparse
import hashlib
import json
import sys

import numpy as np


def load_dataset(path):
    with open(path) as f:
        head = f.readline().strip().split(",")
        if head[0] != "ddsr-dataset":
            sys.exit(f"{path}: not a dataset file")
        d, c, n = int(head[1]), int(head[2]), int(head[3])
        ids, xs, ys = [], [], []
        for line in f:
            parts = line.strip().split(",")
            ids.append(parts[0])
            xs.append([float(v) for v in parts[1 : 1 + d]])
            ys.append(int(parts[1 + d]))
    assert len(ids) == n
    return ids, np.array(xs), np.array(ys), c


def teacher_probs(t, x):
    mu = np.array(t["class_means"])
    sq = ((x[:, None, :] - mu[None, :, :]) ** 2).sum(-1)
    z = (-sq / (2.0 * t["cov_scale"]) + np.array(t["label_bias"])) / t["temperature"]
    z -= z.max(1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(1, keepdims=True)


def first_max(p):
    return p.argmax(1)  # numpy argmax returns the first maximal index


def entropy_rows(p):
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, -p * np.log(p), 0.0)
    return t.sum(-1)


def fusion_stats(pb, pc, threshold):
    iu_b, iu_c = entropy_rows(pb).mean(), entropy_rows(pc).mean()
    gu_b, gu_c = entropy_rows(pb.mean(0)), entropy_rows(pc.mean(0))
    alpha = iu_c / (iu_b + iu_c) if iu_b + iu_c >= 1e-12 else 0.5
    dgu = gu_b - gu_c
    if dgu < threshold:
        branch, wc = "clip-dominant", 1.0 - alpha / 2.0
    else:
        branch, wc = "alpha-weighted", alpha
    fused = (1.0 - wc) * pb + wc * pc
    return {
        "iu_b": iu_b, "iu_c": iu_c, "gu_b": float(gu_b), "gu_c": float(gu_c), "delta_gu": float(dgu),
        "alpha": alpha, "branch": branch, "weight_c": wc,
    }, fused


def bayes_mc(means, sigma, draws, seed):
    rng = np.random.default_rng(seed)
    c, d = means.shape
    y = rng.integers(0, c, draws)
    x = means[y] + sigma * rng.standard_normal((draws, d))
    sq = ((x[:, None, :] - means[None, :, :]) ** 2).sum(-1)
    return float((sq.argmin(1) == y).mean())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("bench_dir")
    ap.add_argument("--threshold", type=float, default=0.05)
    ap.add_argument("--draws", type=int, default=1_000_000)
    args = ap.parse_args()

    ids, x, y, _ = load_dataset(f"{args.bench_dir}/target.csv")
    with open(f"{args.bench_dir}/benchmark.json") as f:
        bench = json.load(f)
    pb = teacher_probs(bench["teacher_b"], x)
    pc = teacher_probs(bench["teacher_c"], x)
    stats, fused = fusion_stats(pb, pc, args.threshold)
    with open(f"{args.bench_dir}/target.csv", "rb") as f:
        digest = hashlib.sha256(f.read()).hexdigest()

    out = {
        "dataset_sha256": digest,
        "n_target": len(ids),
        "teacher_b_accuracy": float((first_max(pb) == y).mean()),
        "teacher_c_accuracy": float((first_max(pc) == y).mean()),
        "fused_accuracy": float((first_max(fused) == y).mean()),
        "bayes_accuracy_target": bayes_mc(np.array(bench["target_means"]), bench["params"]["noise"], args.draws, 0),
        "empirical_bayes_accuracy": float(
            (((x[:, None, :] - np.array(bench["target_means"])[None]) ** 2).sum(-1).argmin(1) == y).mean()
        ),
        "first_fusion": stats,
    }
    json.dump(out, sys.stdout, indent=2)
    print()


if __name__ == "__main__":
    main()
