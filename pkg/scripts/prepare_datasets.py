"""Build the g2o benchmark files under data/ from the gtsam wheel's TORO data.

    pip download --no-deps -d /tmp/wheels gtsam==4.2
    python scripts/prepare_datasets.py /tmp/wheels/gtsam-4.2-*.whl data/

Produces:

* ``sphere2500.g2o``: the Sphere2500 graph. The TORO file stores square-root
  information (entries 10/100/25 match the empirical noise stds 0.1/0.01/0.04
  against ``sphere2500_groundtruth.txt``), so entries are squared. Euler
  angles follow R = Rz(yaw) Ry(pitch) Rx(roll).
* ``sphere2500_groundtruth.g2o``: same topology, noise-free measurements,
  vertices composed from the ground-truth odometry.
* ``manhattan3500.g2o``: a Manhattan-world stand-in for M3500, the induced
  subgraph of Olson's ``w10000`` on nodes 0..3499 with loop closures
  deterministically thinned to the 1953 of M3500. Edges are re-oriented
  from TORO's (newer, older) order to (older, newer). Information is
  calibrated from the quadratic solution's odometry residuals.

Vertices are dead reckoning from odometry in every file.
"""

from __future__ import annotations

import argparse
import sys
import zipfile
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from pgo import geometry as geo
from pgo.graph import (
    Factor,
    FactorKind,
    PoseGraph,
    dead_reckoning,
    ensure_prior,
    sqrt_information_from,
    write_g2o,
)
from pgo.solver import SolverConfig, optimize

M3500_LOOPS = 1953
MANHATTAN_NODES = 3500


def _read_member(wheel: Path, name: str) -> str:
    with zipfile.ZipFile(wheel) as z:
        return z.read(f"gtsam/Data/{name}").decode()


def _toro3_to_graph(text: str, square_info: bool) -> PoseGraph:
    factors = []
    n = 0
    for line in text.splitlines():
        tok = line.split()
        if not tok or tok[0] != "EDGE3":
            continue
        i, j = int(tok[1]), int(tok[2])
        x, y, z, roll, pitch, yaw = map(float, tok[3:9])
        vals = np.array(tok[9:30], dtype=float)
        M = np.zeros((6, 6))
        M[np.triu_indices(6)] = vals
        M = M + np.triu(M, 1).T
        info = M @ M if square_info else M
        q = Rotation.from_euler("ZYX", [yaw, pitch, roll]).as_quat()  # x, y, z, w
        pose = geo.Pose3([x, y, z], [q[3], q[0], q[1], q[2]])
        kind = FactorKind.ODOMETRY if abs(i - j) == 1 else FactorKind.LOOP
        factors.append(Factor(kind, i, j, pose, sqrt_information_from(info)))
        n = max(n, i + 1, j + 1)
    g = PoseGraph(tuple(geo.Pose3.identity() for _ in range(n)), tuple(factors), 3)
    return g.with_poses(dead_reckoning(g))


def _manhattan(text: str) -> PoseGraph:
    odo, loops = [], []
    for line in text.splitlines():
        tok = line.split()
        if not tok or tok[0] != "EDGE2":
            continue
        a, b = int(tok[1]), int(tok[2])
        if a >= MANHATTAN_NODES or b >= MANHATTAN_NODES:
            continue
        z = geo.Pose2(*map(float, tok[3:6]))
        if a > b:
            a, b, z = b, a, z.inverse()
        (odo if b - a == 1 else loops).append((a, b, z))
    odo.sort(key=lambda t: t[0])
    loops.sort(key=lambda t: (t[1], t[0]))
    keep = np.unique(np.round(np.linspace(0, len(loops) - 1, M3500_LOOPS)).astype(int))
    loops = [loops[k] for k in keep]

    def build(L_odo, L_loop):
        fs = [Factor(FactorKind.ODOMETRY, a, b, z, L_odo) for a, b, z in odo]
        fs += [Factor(FactorKind.LOOP, a, b, z, L_loop) for a, b, z in loops]
        g = PoseGraph(tuple(geo.Pose2() for _ in range(MANHATTAN_NODES)), tuple(fs), 2)
        return g.with_poses(dead_reckoning(g))

    # calibrate: per-axis shape from the odometry residuals of the unit-
    # information solution, overall scale from the a-posteriori variance
    # factor 2 * cost / (n_res - n_par) (the argmin is scale invariant)
    g = build(np.eye(3), np.eye(3))
    cfg = SolverConfig(max_iterations=200)
    x = optimize(ensure_prior(g), None, g.pose_array, cfg).poses
    e = np.array([geo.batch_relative_residual(z.to_array(), x[a], x[b]) for a, b, z in odo])
    cov = np.diag(np.mean(e ** 2, axis=0))
    g = build(*[sqrt_information_from(np.linalg.inv(cov))] * 2)
    res = optimize(ensure_prior(g), None, x, cfg)
    n_res = 3 * (len(odo) + len(loops))
    n_par = 3 * (MANHATTAN_NODES - 1)
    cov *= 2.0 * res.cost / (n_res - n_par)
    L = sqrt_information_from(np.linalg.inv(cov))
    print(f"manhattan: calibrated noise std {np.sqrt(np.diag(cov))}", file=sys.stderr)
    return build(L, L), res.poses


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("wheel", type=Path)
    ap.add_argument("out", type=Path)
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)

    sphere = _toro3_to_graph(_read_member(args.wheel, "sphere2500.txt"), square_info=True)
    (args.out / "sphere2500.g2o").write_text(write_g2o(sphere))
    gt = _toro3_to_graph(_read_member(args.wheel, "sphere2500_groundtruth.txt"), square_info=True)
    (args.out / "sphere2500_groundtruth.g2o").write_text(write_g2o(gt))

    manhattan, optimum = _manhattan(_read_member(args.wheel, "w10000.graph"))
    (args.out / "manhattan3500.g2o").write_text(write_g2o(manhattan))
    # reference trajectory for synthetic generation: the least-squares optimum
    (args.out / "manhattan3500_groundtruth.g2o").write_text(write_g2o(manhattan.with_poses(optimum)))
    names = ("sphere2500.g2o", "sphere2500_groundtruth.g2o", "manhattan3500.g2o", "manhattan3500_groundtruth.g2o")
    for name in names:
        print(args.out / name)


if __name__ == "__main__":
    main()
