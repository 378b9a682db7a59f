import json

import numpy as np
import pytest

TRAJ_HEADER = "iter,loss,norm_loss,norm_dist,proj_x,proj_y"


def write_trajectory(path, mult, iters=40, rate=None, with_proj=False):
    """Synthetic trajectory file in the producer's CSV format.

    The loss follows a clean geometric law, contracting for multipliers
    below one and catapulting above.
    """
    rate = rate if rate is not None else mult**2
    rows = [TRAJ_HEADER]
    loss0 = 1e-18
    for k in range(iters + 1):
        loss = loss0 * rate**k
        dist = np.sqrt(loss)
        proj = (f",{dist:.17g},{0.1 * dist:.17g}" if with_proj else ",,")
        rows.append(f"{k},{loss:.17g},{loss:.17g},{dist ** 2:.17g}{proj}")
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


def write_grid(path, nx=5, ny=5, scale=1.0):
    xs = np.linspace(-1.0, 1.0, nx)
    ys = np.linspace(-1.0, 1.0, ny)
    rows = ["x,y,p"]
    for x in xs:
        for y in ys:
            rows.append(f"{x:.17g},{y:.17g},{scale * (x * x + 0.01 * y * y):.17g}")
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


def write_basis(path, n=8, mode="hessian_v1_vN"):
    zeta = np.zeros(n)
    zeta[0] = 1.0
    gamma = np.zeros(n)
    gamma[1] = 1.0
    doc = {"mode": mode, "zeta": zeta.tolist(), "gamma": gamma.tolist(),
           "origin_ref": "instance.json"}
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


@pytest.fixture
def curve_spec_file(tmp_path):
    """Spec JSON for an error curve over three synthetic multipliers."""
    entries = []
    for mult in (0.9, 1.1, 2.0):
        name = f"traj_m{mult:g}.csv"
        write_trajectory(tmp_path / name, mult)
        entries.append({"path": name, "eta_multiplier": mult})
    spec_path = tmp_path / "figspec.json"
    spec_path.write_text(json.dumps({
        "kind": "error_curve",
        "trajectories": entries,
        "out": "fig.png",
    }), encoding="utf-8")
    return spec_path


@pytest.fixture
def contour_spec_file(tmp_path):
    write_grid(tmp_path / "grid.csv")
    write_basis(tmp_path / "basis.json")
    write_trajectory(tmp_path / "traj_m1.1.csv", 1.1, with_proj=True)
    spec_path = tmp_path / "figspec.json"
    spec_path.write_text(json.dumps({
        "kind": "contour_overlay",
        "grid": "grid.csv",
        "basis": "basis.json",
        "trajectories": [{"path": "traj_m1.1.csv", "eta_multiplier": 1.1}],
        "out": "fig.png",
    }), encoding="utf-8")
    return spec_path
