#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the pure-numpy fallback.

The three kernels dominate campaign runtime: batched conic-box projection
and tangency evaluation (called ~20x per factor per solver iteration for
the finite-difference Jacobians) and the voxel IoU grid (2M cells per
trial score).

    python3 benchmarks/bench_kernels.py [--reps N]

An end-to-end comparison (full trial solves under each backend) runs with
--end-to-end; it re-executes this script in subprocesses because the
backend is chosen at import time.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from quadricfit._kernels import fallback

try:
    from quadricfit._kernels import _core
except ImportError:
    _core = None

from quadricfit.costs import BoundingBox, CameraIntrinsics, box_edge_planes, CameraFrame
from quadricfit.manifold import Pose, so3_exp
from quadricfit.quadric import RtsState


def make_inputs(seed=0):
    rng = np.random.default_rng(seed)
    duals = []
    for _ in range(19):  # the per-frame FD batch size for a 9-dim landmark
        state = RtsState(
            so3_exp(rng.normal(size=3)), rng.normal(size=3) * 0.5 + [0, 0, 6.0],
            rng.uniform(0.3, 1.0, 3),
        )
        duals.append(state.dual)
    duals = np.stack(duals)
    intr = CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0)
    frame = CameraFrame(intr, Pose.identity())
    rt = frame.projection_rt()
    planes = box_edge_planes(frame, BoundingBox(100.0, 500.0, 100.0, 380.0))
    rot_a, rot_b = so3_exp(rng.normal(size=3)), so3_exp(rng.normal(size=3))
    box_args = (
        rot_a, np.zeros(3), np.array([1.0, 0.7, 0.4]),
        rot_b, np.array([0.3, 0.2, 0.1]), np.array([0.8, 0.8, 0.6]),
        np.full(3, -2.0), np.full(3, 2.0), 128,
    )
    return intr, rt, duals, planes, box_args


def bench(label, fn, reps):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    dt = (time.perf_counter() - t0) / reps
    print(f"  {label:<28} {dt * 1e6:10.1f} us/call")
    return dt


def run_kernel_benchmarks(reps):
    intr, rt, duals, planes, box_args = make_inputs()
    impls = [("python", fallback)] + ([("compiled", _core)] if _core else [])
    times = {}
    for name, impl in impls:
        print(f"backend: {name}")
        times[name, "boxes"] = bench(
            "boxes_from_duals (19 duals)",
            lambda impl=impl: impl.boxes_from_duals(intr.fx, intr.fy, intr.cx, intr.cy, rt, duals),
            reps,
        )
        times[name, "tangency"] = bench(
            "tangency_values (19x4)",
            lambda impl=impl: impl.tangency_values(planes, duals),
            reps,
        )
        times[name, "voxel"] = bench(
            "voxel_box_overlap (128^3)",
            lambda impl=impl: impl.voxel_box_overlap(*box_args),
            max(1, reps // 20),
        )
    if _core:
        for key in ("boxes", "tangency", "voxel"):
            speedup = times["python", key] / times["compiled", key]
            print(f"speedup {key:<10} {speedup:6.1f}x")
    else:
        print("compiled core not built; only the fallback was timed")


def run_end_to_end():
    code = (
        "import time; import numpy as np; from quadricfit.sim import *; "
        "from quadricfit import kernel_backend; "
        "trial = make_trial(SceneSpec(), NOISE_LEVELS['M'], np.random.SeedSequence(3)); "
        "t0 = time.perf_counter(); "
        "[run_trial(trial, p, m) for p in ('full','rts','spd') for m in ('inverse','semi')]; "
        "print(f'{kernel_backend()}: {time.perf_counter()-t0:.2f}s for 6 solves')"
    )
    for force in ("0", "1"):
        env = dict(os.environ, QUADRICFIT_FORCE_PYTHON_KERNELS=force)
        subprocess.run([sys.executable, "-c", code], env=env, check=True)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=2000)
    parser.add_argument("--end-to-end", action="store_true")
    args = parser.parse_args()
    run_kernel_benchmarks(args.reps)
    if args.end_to_end:
        run_end_to_end()


if __name__ == "__main__":
    main()
