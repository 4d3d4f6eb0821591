#!/usr/bin/env python3
"""End-to-end synthetic experiment: generate Gaussian bags, train teacher and
student heads, run threshold+NMS inference, and score mIoU / mAP50.

Usage: python3 scripts/run_synthetic_pipeline.py [workdir]
"""

import sys
from pathlib import Path

from semhead.cli import main as cli

GEN = [
    "--num-classes", "4", "--masks-per-image", "12", "--embedding-width", "32",
    "--positives", "2", "--mask-size", "48", "--image-size", "96",
]
TRAIN = [
    "--epochs", "150", "--hidden-dims", "48,32,16", "--seed", "5",
    "--holdout-fraction", "0", "--lambda1", "1", "--lambda2", "0.15",
]


def run(args):
    print("+ semhead", " ".join(args))
    rc = cli(args)
    if rc != 0:
        sys.exit(rc)


def main():
    base = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("run_synthetic")
    base.mkdir(parents=True, exist_ok=True)
    train = base / "train.usds"
    test = base / "test.usds"
    gt = base / "gt"

    run(["gen-bags", "--out", str(train), "--seed", "42", "--bags", "320", *GEN])
    run(["gen-bags", "--out", str(test), "--gt-out", str(gt), "--seed", "43",
         "--bags", "80", *GEN])
    run(["inspect", str(train)])
    run(["train-teacher", "--dataset", str(train),
         "--out", str(base / "teacher.weights"), *TRAIN])
    run(["train-student", "--dataset", str(train),
         "--teacher", str(base / "teacher.weights"),
         "--out", str(base / "student.weights"), *TRAIN])
    run(["infer", "--dataset", str(test), "--weights", str(base / "student.weights"),
         "--out", str(base / "pred"),
         "--conf-threshold", "0.7", "--nms-threshold", "0.5"])
    run(["eval", "--pred", str(base / "pred"), "--gt", str(gt),
         "--out", str(base / "eval")])
    print((base / "eval" / "report.txt").read_text())


if __name__ == "__main__":
    main()
