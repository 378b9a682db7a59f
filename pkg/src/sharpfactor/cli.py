"""Command-line front end.

Subcommands drive instance generation, the closed-form eigenvalue methods,
oracle cross-verification, escape experiments, and contour export from
flags or a JSON config (flags override config fields; unknown config fields
are rejected). All outputs are deterministic for a fixed config and seed.

Exit codes: 0 success, 2 validation, 3 certification, 4 convergence,
5 size cap. Failures emit a machine-readable JSON object on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import dynamics, landscape
from .errors import SharpfactorError, ValidationError
from .factors import (FactorChain, instance_from_dict, instance_to_dict,
                      make_minimizer, product, validate_dims)
from .hessian_oracle import dense_hessian_at_minimum, fd_dense_hessian
from .serialize import json_dump, json_dumps
from .sharpness import (lambda_max_depth2, lambda_max_general,
                        lambda_max_scalar_chain)

_COMMON_KEYS = {"kind", "dims", "seed", "identity", "instance", "out"}
_ALLOWED_KEYS = {
    "sharpness": _COMMON_KEYS | {"method", "direction"},
    "verify": _COMMON_KEYS,
    "escape": _COMMON_KEYS | {"seeds", "eta_multipliers", "radius", "max_iters",
                              "record_every", "stop_at_escape"} - {"identity", "instance"},
    "contour": _COMMON_KEYS | {"basis", "grid", "overlay", "max_iters", "record_every"},
}
_KIND_ALIASES = {"scalar_chain": ("sharpness", "scalar_chain"), "depth2": ("sharpness", "depth2")}

VERIFY_TOLERANCES = {
    "general_vs_dense": 1e-8,
    "general_vs_fd": 1e-4,
    "dense_vs_fd": 1e-4,
    "general_vs_special": 1e-10,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(part) for part in str(text).split(",") if part != ""]
    except ValueError as exc:
        raise ValidationError(f"{flag} expects comma-separated integers, got {text!r}") from exc


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        return [float(part) for part in str(text).split(",") if part != ""]
    except ValueError as exc:
        raise ValidationError(f"{flag} expects comma-separated numbers, got {text!r}") from exc


def _load_config(path: str | None, kind: str) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError("config must be a JSON object")
    config_kind = doc.get("kind")
    method = None
    if config_kind is not None:
        config_kind, method = _KIND_ALIASES.get(config_kind, (config_kind, None))
        if config_kind != kind:
            raise ValidationError(f"config kind {doc['kind']!r} does not match command {kind!r}")
    allowed = _ALLOWED_KEYS[kind]
    for key in doc:
        if key not in allowed:
            raise ValidationError(f"unknown config field {key!r} for {kind}")
    if method is not None:
        doc = dict(doc)
        doc["method"] = method
    return doc


def _merged(config: dict, args: argparse.Namespace, key: str, default=None):
    value = getattr(args, key, None)
    if value is None:
        value = config.get(key, default)
    return value


def _resolve_instance(config, args):
    instance_path = _merged(config, args, "instance")
    identity = _merged(config, args, "identity", False)
    dims = _merged(config, args, "dims")
    seed = _merged(config, args, "seed")
    if isinstance(dims, str):
        dims = _parse_int_list(dims, "--dims")
    if instance_path is not None:
        try:
            with open(instance_path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ValidationError(f"cannot read instance {instance_path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"instance {instance_path} is not valid JSON: {exc}") from exc
        return instance_from_dict(doc)
    if dims is None:
        raise ValidationError("need --dims (or an --instance file)")
    dims = validate_dims(dims)
    if identity:
        chain = FactorChain.identity(dims)
        return chain, product(chain), None
    seed = 0 if seed is None else int(seed)
    chain, target = make_minimizer(dims, seed=seed)
    return chain, target, seed


def _emit(doc: dict, out_dir: str | None, filename: str) -> None:
    text = json_dumps(doc)
    if out_dir is None:
        sys.stdout.write(text)
    else:
        path = Path(out_dir)
        path.mkdir(parents=True, exist_ok=True)
        (path / filename).write_text(text, encoding="utf-8", newline="\n")
        sys.stdout.write(json_dumps({"written": str(path / filename)}))


def _rel_err(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    if scale == 0.0:
        return 0.0
    return abs(a - b) / scale


def cmd_sharpness(config, args) -> int:
    chain, target, _ = _resolve_instance(config, args)
    method = _merged(config, args, "method", "auto")
    want_direction = bool(_merged(config, args, "direction", False))
    dims = chain.dims
    if method == "auto":
        if dims[0] == 1 and dims[-1] == 1:
            method = "scalar_chain"
        elif chain.depth == 2:
            method = "depth2"
        else:
            method = "general"
    if method == "general":
        report = lambda_max_general(chain, target, want_direction=want_direction)
    elif method == "scalar_chain":
        report = lambda_max_scalar_chain(chain, target, want_direction=want_direction)
    elif method == "depth2":
        if chain.depth != 2:
            raise ValidationError(f"depth2 method needs a depth-2 chain, got depth {chain.depth}")
        report = lambda_max_depth2(chain.factors[1], chain.factors[0].T, target,
                                   want_direction=want_direction)
    else:
        raise ValidationError(f"unknown method {method!r}")
    _emit(report.to_json_dict(), _merged(config, args, "out"), "sharpness.json")
    return 0


def cmd_verify(config, args) -> int:
    chain, target, _ = _resolve_instance(config, args)
    dims = chain.dims
    n = chain.num_params
    general = lambda_max_general(chain, target)
    dense = dense_hessian_at_minimum(chain, target)
    fd = fd_dense_hessian(chain, target)

    values = {
        "general_kron": general.lambda_max,
        "dense_oracle": dense.lambda_max,
        "fd_oracle": fd.lambda_max,
    }
    special_name = None
    if dims[0] == 1 and dims[-1] == 1:
        special_name = "scalar_chain"
        values[special_name] = lambda_max_scalar_chain(chain, target).lambda_max
    elif chain.depth == 2:
        special_name = "depth2"
        values[special_name] = lambda_max_depth2(
            chain.factors[1], chain.factors[0].T, target).lambda_max

    errors = {
        "general_vs_dense": _rel_err(values["general_kron"], values["dense_oracle"]),
        "general_vs_fd": _rel_err(values["general_kron"], values["fd_oracle"]),
        "dense_vs_fd": _rel_err(values["dense_oracle"], values["fd_oracle"]),
    }
    if special_name is not None:
        errors["general_vs_special"] = _rel_err(values["general_kron"], values[special_name])

    required_nullity = n - dims[-1] * dims[0]
    nullity = dense.nullity()
    checks = {key: errors[key] <= VERIFY_TOLERANCES[key] for key in errors}
    checks["nullity"] = nullity >= required_nullity

    doc = {
        "n": n,
        "dims": list(dims),
        "values": values,
        "pairwise_rel_err": errors,
        "tolerances": {key: VERIFY_TOLERANCES[key] for key in errors},
        "nullity": {"count": nullity, "required_min": required_nullity,
                    "tol": 1e-8, "lambda_min": dense.lambda_min},
        "checks": checks,
        "pass": all(checks.values()),
    }
    _emit(doc, _merged(config, args, "out"), "verify.json")
    return 0


def cmd_escape(config, args) -> int:
    dims = _merged(config, args, "dims")
    if isinstance(dims, str):
        dims = _parse_int_list(dims, "--dims")
    if dims is None:
        raise ValidationError("escape needs --dims")
    seeds = _merged(config, args, "seed")
    if seeds is None:
        seeds = config.get("seeds", [0])
    if isinstance(seeds, str):
        seeds = _parse_int_list(seeds, "--seed")
    elif isinstance(seeds, int):
        seeds = [seeds]
    multipliers = _merged(config, args, "eta_multipliers")
    if isinstance(multipliers, str):
        multipliers = _parse_float_list(multipliers, "--eta-multipliers")
    if not multipliers:
        raise ValidationError("need a nonempty list of step-size multipliers")
    radius = float(_merged(config, args, "radius", 1e-9))
    max_iters = int(_merged(config, args, "max_iters", 100_000))
    record_every = int(_merged(config, args, "record_every", 1))
    stop_at_escape = bool(_merged(config, args, "stop_at_escape", True))
    out_dir = _merged(config, args, "out")
    if out_dir is None:
        raise ValidationError("escape needs --out for its trajectory files")

    result = dynamics.escape_experiment(
        dims, seeds, multipliers, radius,
        max_iters=max_iters, record_every=record_every, stop_at_escape=stop_at_escape,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for seed in result.report["seeds"]:
        for mult in result.report["eta_multipliers"]:
            name = f"traj_s{seed}_m{format(mult, 'g')}.csv"
            dynamics.trajectory_to_csv(result.trajectories[(seed, mult)], out / name)
            files.append(name)
    report = dict(result.report)
    report["trajectory_files"] = files
    (out / "escape_report.json").write_text(json_dumps(report), encoding="utf-8", newline="\n")
    sys.stdout.write(json_dumps(report))
    return 0


def cmd_contour(config, args) -> int:
    chain, target, seed = _resolve_instance(config, args)
    out_dir = _merged(config, args, "out")
    if out_dir is None:
        raise ValidationError("contour needs --out for its grid files")
    basis_mode = _merged(config, args, "basis", "hessian")
    grid_spec = _merged(config, args, "grid")
    overlay_spec = _merged(config, args, "overlay")
    max_iters = int(_merged(config, args, "max_iters", 2000))
    record_every = int(_merged(config, args, "record_every", 1))

    if basis_mode == "hessian":
        hessian = dense_hessian_at_minimum(chain, target)
        basis = landscape.hessian_basis(chain, hessian)
    elif basis_mode == "random":
        basis = landscape.random_basis(chain, seed=0 if seed is None else seed)
    else:
        raise ValidationError(f"unknown basis mode {basis_mode!r}")

    overlay_traj = None
    if overlay_spec is not None:
        if isinstance(overlay_spec, str):
            parts = _parse_float_list(overlay_spec, "--overlay")
            if len(parts) != 3:
                raise ValidationError("--overlay expects MULT,RADIUS,ITERS")
            overlay_spec = {"eta_multiplier": parts[0], "radius": parts[1],
                            "max_iters": int(parts[2])}
        report = lambda_max_general(chain, target)
        step_size = float(overlay_spec["eta_multiplier"]) * 2.0 / report.lambda_max
        start, _ = dynamics.perturbed_start(
            chain, target, radius=float(overlay_spec["radius"]))
        gd_config = dynamics.GDConfig(
            step_size=step_size,
            max_iters=int(overlay_spec.get("max_iters", max_iters)),
            init_radius=float(overlay_spec["radius"]),
            record_every=record_every,
            record_params=True,
            stop_on_converged=False,
            escape_stop_ratio=dynamics.DEFAULT_ESCAPE_RATIO,
        )
        overlay_traj = dynamics.gd_run(start, target, gd_config, reference=chain)
        landscape.project_trajectory(overlay_traj, basis)

    if grid_spec is not None:
        if isinstance(grid_spec, str):
            parts = _parse_float_list(grid_spec, "--grid")
            if len(parts) != 4:
                raise ValidationError("--grid expects NX,NY,XMAX,YMAX")
            grid_spec = {"nx": int(parts[0]), "ny": int(parts[1]),
                         "xmax": parts[2], "ymax": parts[3]}
        resolution = (int(grid_spec["nx"]), int(grid_spec["ny"]))
        x_range = (-float(grid_spec["xmax"]), float(grid_spec["xmax"]))
        y_range = (-float(grid_spec["ymax"]), float(grid_spec["ymax"]))
    else:
        resolution = landscape.DEFAULT_RESOLUTION
        if overlay_traj is not None:
            x_range, y_range = landscape.fit_ranges(overlay_traj.proj)
        else:
            x_range, y_range = (-1.0, 1.0), (-1.0, 1.0)

    grid = landscape.contour_grid(chain, target, basis, x_range, y_range, resolution)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_dump(instance_to_dict(chain, target, seed), out / "instance.json")
    landscape.grid_to_csv(grid, out / "grid.csv")
    landscape.basis_to_json(basis, out / "basis.json", origin_ref="instance.json")
    files = ["instance.json", "grid.csv", "basis.json"]
    if overlay_traj is not None:
        dynamics.trajectory_to_csv(overlay_traj, out / "overlay.csv")
        files.append("overlay.csv")
    sys.stdout.write(json_dumps({"out": str(out), "files": files}))
    return 0


_COMMANDS = {
    "sharpness": cmd_sharpness,
    "verify": cmd_verify,
    "escape": cmd_escape,
    "contour": cmd_contour,
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="sharpfactor", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--dims", default=None)
        p.add_argument("--seed", default=None)
        p.add_argument("--out", default=None)
        if name in ("sharpness", "verify", "contour"):
            p.add_argument("--identity", action="store_true", default=None)
            p.add_argument("--instance", default=None)
        if name == "sharpness":
            p.add_argument("--method", default=None,
                           choices=["auto", "general", "scalar_chain", "depth2"])
            p.add_argument("--direction", action="store_true", default=None)
        if name == "escape":
            p.add_argument("--eta-multipliers", dest="eta_multipliers", default=None)
            p.add_argument("--radius", type=float, default=None)
            p.add_argument("--max-iters", dest="max_iters", type=int, default=None)
            p.add_argument("--record-every", dest="record_every", type=int, default=None)
        if name == "contour":
            p.add_argument("--basis", default=None, choices=["hessian", "random"])
            p.add_argument("--grid", default=None)
            p.add_argument("--overlay", default=None)
            p.add_argument("--max-iters", dest="max_iters", type=int, default=None)
            p.add_argument("--record-every", dest="record_every", type=int, default=None)
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        config = _load_config(args.config, args.command)
        if args.command == "sharpness" and config.get("method") and args.method is None:
            args.method = config["method"]
        return _COMMANDS[args.command](config, args)
    except SharpfactorError as exc:
        sys.stderr.write(json_dumps({"error": exc.code, "message": str(exc)}))
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
