"""Gradient descent on the factorization loss and stability experiments.

Full-batch gradient descent ``w_{k+1} = w_k - eta * grad(w_k)`` is run from
points placed at a chosen radius from a known minimizer, by default along
the direction of largest curvature. Whether the iterates contract back or
blow away from the minimizer is governed by the linear-stability threshold:
the minimizer is dynamically unstable for step size ``eta`` exactly when
``lambda_max > 2 / eta``, in which case the iterates leave its basin no
matter how small the initial radius (the escape shows up as a catapult in
the loss curve).

Distances in trajectories are recorded as ``||w_k - w*||^2 / ||w*||^2`` and
losses as ``loss / ||target||_F^2``.

Initialization radii are limited by 64-bit rounding: below roughly 1e-15
times the parameter scale the perturbation is partially or fully absorbed
into the minimizer's own entries.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .directional import (direction_norm, gradient_and_loss, perturb,
                          random_unit_direction, unit_direction)
from .errors import ShapeError, ValidationError
from .factors import FactorChain, check_target, make_minimizer, validate_dims
from .serialize import fmt17
from .sharpness import extremal_direction

CONVERGED_LOSS_FACTOR = 1e-14
CONVERGED_GRAD_NORM = 1e-10
DIVERGED_LOSS_FACTOR = 1e6
DEFAULT_ESCAPE_RATIO = 1e6
DEFAULT_SETTLE_RATIO = 1e-6
SETTLE_FLOOR_EPS_MULTIPLE = 100.0
MOVED_AWAY_RATIO = 1e3
STABILITY_REL_TOL = 1e-10
CATAPULT_LOSS_RATIO = 1e6


@dataclass
class GDConfig:
    """Step size, budget, and initialization for one gradient-descent run.

    ``init_direction`` is ``"top_hessian_eigenvector"``, ``"random_unit"``,
    or an explicit list of direction blocks. ``escape_stop_ratio`` /
    ``settle_stop_ratio`` truncate the run once the distance to the
    reference minimizer grows (shrinks) past the given multiple of the
    initial distance; ``stop_on_converged`` applies the small-loss,
    small-gradient early exit, which should be disabled for runs that start
    almost exactly on a minimizer.
    """

    step_size: float
    max_iters: int = 1000
    init_radius: float = 1e-9
    init_direction: object = "top_hessian_eigenvector"
    seed: int = 0
    record_every: int = 1
    record_params: bool = False
    stop_on_converged: bool = True
    escape_stop_ratio: float | None = None
    settle_stop_ratio: float | None = None

    def __post_init__(self):
        if not self.step_size >= 0:
            raise ValidationError(f"step size must be nonnegative, got {self.step_size}")
        if self.max_iters < 1:
            raise ValidationError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.init_radius > 0:
            raise ValidationError(f"init radius must be positive, got {self.init_radius}")
        if self.record_every < 1:
            raise ValidationError(f"record_every must be >= 1, got {self.record_every}")


@dataclass
class Trajectory:
    """Recorded iterate history of a run.

    ``norm_dist`` is NaN-filled when no reference minimizer was supplied.
    ``params`` holds flattened iterates only when requested. ``proj`` is
    attached later by landscape projection.
    """

    iterations: np.ndarray
    loss: np.ndarray
    norm_loss: np.ndarray
    norm_dist: np.ndarray
    params: list[np.ndarray] | None
    final_params: np.ndarray
    total_iters: int
    converged: bool = False
    diverged: bool = False
    stop_reason: str | None = None
    proj: np.ndarray | None = None


def _distance2(factors, ref_factors) -> float:
    return float(sum(np.sum(np.square(f - r)) for f, r in zip(factors, ref_factors)))


def gd_run(chain0: FactorChain, target, config: GDConfig,
           reference: FactorChain | None = None) -> Trajectory:
    """Run gradient descent from ``chain0`` and record metrics.

    Metrics are recorded at iteration 0, every ``record_every`` iterations,
    and at the final iterate. The run stops early on convergence
    (``loss <= 1e-14 * ||target||^2`` and gradient norm ``<= 1e-10``, if
    enabled), on divergence (``loss >= 1e6 * ||target||^2`` or non-finite
    loss, flagged rather than raised), on the distance stop rules, or at
    ``max_iters`` updates.
    """
    target = check_target(chain0, target)
    m2 = float(np.sum(target * target))
    loss_den = m2 if m2 > 0 else 1.0
    ref_factors = None
    dist_den = 1.0
    settle_floor = 0.0
    if reference is not None:
        if reference.dims != chain0.dims:
            raise ShapeError(f"reference dims {reference.dims} != start dims {chain0.dims}")
        ref_factors = reference.factors
        ref_norm2 = float(sum(np.sum(np.square(f)) for f in ref_factors))
        dist_den = ref_norm2 if ref_norm2 > 0 else 1.0
        # below this distance the iterate sits on the minimizer up to
        # float rounding and can only random-walk at noise level
        settle_floor = SETTLE_FLOOR_EPS_MULTIPLE * np.finfo(float).eps * np.sqrt(ref_norm2)

    rec_iter: list[int] = []
    rec_loss: list[float] = []
    rec_nloss: list[float] = []
    rec_ndist: list[float] = []
    rec_params: list[np.ndarray] | None = [] if config.record_params else None

    current = chain0
    dist0 = None
    k = 0
    converged = diverged = False
    stop_reason = None
    last_recorded = -1

    def record(loss_val, ndist):
        nonlocal last_recorded
        if k == last_recorded:
            return
        rec_iter.append(k)
        rec_loss.append(loss_val)
        rec_nloss.append(loss_val / loss_den)
        rec_ndist.append(ndist)
        if rec_params is not None:
            rec_params.append(current.flatten())
        last_recorded = k

    while True:
        grad, loss_val = gradient_and_loss(current, target)

        ndist = np.nan
        ratio = None
        dist = None
        if ref_factors is not None:
            dist2 = _distance2(current.factors, ref_factors)
            ndist = dist2 / dist_den
            dist = np.sqrt(dist2)
            if dist0 is None:
                dist0 = dist
            if dist0 > 0:
                ratio = dist / dist0

        if not np.isfinite(loss_val):
            stop_reason = "diverged"
            diverged = True
        elif loss_val >= DIVERGED_LOSS_FACTOR * loss_den:
            stop_reason = "diverged"
            diverged = True
        elif (config.stop_on_converged
              and loss_val <= CONVERGED_LOSS_FACTOR * m2
              and direction_norm(grad) <= CONVERGED_GRAD_NORM):
            stop_reason = "converged"
            converged = True
        elif (config.escape_stop_ratio is not None and ratio is not None
              and ratio >= config.escape_stop_ratio):
            stop_reason = "escape_stop"
        elif (config.settle_stop_ratio is not None and ratio is not None and k > 0
              and (ratio <= config.settle_stop_ratio
                   or (dist0 > settle_floor and dist <= settle_floor))):
            stop_reason = "settle_stop"

        if k % config.record_every == 0 or stop_reason is not None or k == config.max_iters:
            record(loss_val, ndist)
        if stop_reason is not None or k == config.max_iters:
            break

        current = FactorChain(tuple(
            f - config.step_size * g for f, g in zip(current.factors, grad)
        ))
        k += 1

    return Trajectory(
        iterations=np.array(rec_iter, dtype=int),
        loss=np.array(rec_loss),
        norm_loss=np.array(rec_nloss),
        norm_dist=np.array(rec_ndist),
        params=rec_params,
        final_params=current.flatten(),
        total_iters=k,
        converged=converged,
        diverged=diverged,
        stop_reason=stop_reason,
    )


def linearized_run(chain0: FactorChain, minimizer: FactorChain, hessian,
                   step_size: float, iters: int, target=None) -> Trajectory:
    """Iterate the linearized dynamics ``x_{t+1} = x_t - eta * H (x_t - x*)``.

    ``hessian`` is a dense matrix (or an object exposing ``.matrix``)
    evaluated at the minimizer. The offset from the minimizer evolves by the
    matrix power ``(I - eta H)^t``, so each eigencomponent scales by
    ``(1 - eta * lambda_i)`` per step. The loss column records the quadratic
    model ``0.5 * offset' H offset``; parameters are always recorded.
    """
    matrix = getattr(hessian, "matrix", hessian)
    matrix = np.asarray(matrix, dtype=float)
    w_star = minimizer.flatten()
    if matrix.shape != (w_star.size, w_star.size):
        raise ShapeError(f"hessian shape {matrix.shape} != ({w_star.size}, {w_star.size})")
    if chain0.dims != minimizer.dims:
        raise ShapeError(f"start dims {chain0.dims} != minimizer dims {minimizer.dims}")
    if iters < 0:
        raise ValidationError(f"iters must be >= 0, got {iters}")
    loss_den = 1.0
    if target is not None:
        target = check_target(minimizer, target)
        m2 = float(np.sum(target * target))
        loss_den = m2 if m2 > 0 else 1.0
    ref_norm2 = float(w_star @ w_star)
    dist_den = ref_norm2 if ref_norm2 > 0 else 1.0

    offset = chain0.flatten() - w_star
    rec_iter, rec_loss, rec_nloss, rec_ndist, rec_params = [], [], [], [], []
    for t in range(iters + 1):
        model = 0.5 * float(offset @ (matrix @ offset))
        rec_iter.append(t)
        rec_loss.append(model)
        rec_nloss.append(model / loss_den)
        rec_ndist.append(float(offset @ offset) / dist_den)
        rec_params.append(w_star + offset)
        if t < iters:
            offset = offset - step_size * (matrix @ offset)

    return Trajectory(
        iterations=np.array(rec_iter, dtype=int),
        loss=np.array(rec_loss),
        norm_loss=np.array(rec_nloss),
        norm_dist=np.array(rec_ndist),
        params=rec_params,
        final_params=w_star + offset,
        total_iters=iters,
    )


def classify_stability(lambda_max: float, step_size: float,
                       rel_tol: float = STABILITY_REL_TOL) -> str:
    """stable / marginal / unstable against the ``2 / eta`` threshold."""
    if not step_size > 0:
        raise ValidationError(f"step size must be positive, got {step_size}")
    threshold = 2.0 / step_size
    scale = max(abs(lambda_max), abs(threshold))
    if abs(lambda_max - threshold) <= rel_tol * scale:
        return "marginal"
    return "unstable" if lambda_max > threshold else "stable"


@dataclass
class StabilityVerdict:
    """Outcome of one (seed, step-size) cell of the escape experiment."""

    seed: int
    eta_multiplier: float
    step_size: float
    lambda_max: float
    threshold: float
    classification: str
    escaped: bool
    escape_iteration: int | None
    catapult: bool
    peak_loss_ratio: float
    initial_distance: float
    final_distance: float
    distance_ratio: float
    final_loss: float
    final_norm_loss: float
    converged_elsewhere: bool
    iterations_run: int

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "eta_multiplier": self.eta_multiplier,
            "step_size": self.step_size,
            "lambda_max": self.lambda_max,
            "threshold": self.threshold,
            "classification": self.classification,
            "escaped": self.escaped,
            "escape_iteration": self.escape_iteration,
            "catapult": self.catapult,
            "peak_loss_ratio": self.peak_loss_ratio,
            "initial_distance": self.initial_distance,
            "final_distance": self.final_distance,
            "distance_ratio": self.distance_ratio,
            "final_loss": self.final_loss,
            "final_norm_loss": self.final_norm_loss,
            "converged_elsewhere": self.converged_elsewhere,
            "iterations_run": self.iterations_run,
        }


def perturbed_start(minimizer: FactorChain, target, init_direction="top_hessian_eigenvector",
                    radius: float = 1e-9, seed: int = 0):
    """Minimizer offset by ``radius`` along a unit direction; returns both.

    The default direction is the unit direction of largest curvature, which
    points away from the minimizer manifold.
    """
    if not radius > 0:
        raise ValidationError(f"radius must be positive, got {radius}")
    if isinstance(init_direction, str):
        if init_direction == "top_hessian_eigenvector":
            blocks, _ = extremal_direction(minimizer, target)
        elif init_direction == "random_unit":
            blocks = random_unit_direction(minimizer.dims, np.random.default_rng(seed))
        else:
            raise ValidationError(f"unknown init direction {init_direction!r}")
    else:
        blocks = unit_direction(init_direction)
    return perturb(minimizer, blocks, radius), blocks


def _verdict_from_trajectory(traj: Trajectory, seed: int, mult: float, step_size: float,
                             lambda_max: float, m2: float,
                             escape_ratio: float) -> StabilityVerdict:
    dist = np.sqrt(traj.norm_dist)
    dist0 = float(dist[0])
    escaped = False
    escape_iteration = None
    distance_ratio = 0.0
    if dist0 > 0:
        ratios = dist / dist0
        distance_ratio = float(np.max(ratios))
        crossings = np.nonzero(ratios >= escape_ratio)[0]
        if crossings.size:
            escaped = True
            escape_iteration = int(traj.iterations[crossings[0]])

    loss0 = float(traj.loss[0])
    catapult = False
    peak_loss_ratio = 0.0
    if loss0 > 0:
        loss_ratios = traj.loss / loss0
        peak_loss_ratio = float(np.max(loss_ratios))
        crossings = np.nonzero(loss_ratios >= CATAPULT_LOSS_RATIO)[0]
        if crossings.size:
            first = crossings[0]
            # a catapult rises before any re-descent below the start level
            catapult = bool(np.min(traj.loss[:first + 1]) >= 0.5 * loss0)

    final_loss = float(traj.loss[-1])
    final_dist = float(dist[-1])
    final_ratio = final_dist / dist0 if dist0 > 0 else 0.0
    loss_den = m2 if m2 > 0 else 1.0
    converged_elsewhere = bool(final_loss <= 1e-10 * loss_den and final_ratio > MOVED_AWAY_RATIO)

    return StabilityVerdict(
        seed=seed,
        eta_multiplier=mult,
        step_size=step_size,
        lambda_max=lambda_max,
        threshold=2.0 / step_size,
        classification=classify_stability(lambda_max, step_size),
        escaped=escaped,
        escape_iteration=escape_iteration,
        catapult=catapult,
        peak_loss_ratio=peak_loss_ratio,
        initial_distance=dist0,
        final_distance=final_dist,
        distance_ratio=final_ratio,
        final_loss=final_loss,
        final_norm_loss=float(traj.norm_loss[-1]),
        converged_elsewhere=converged_elsewhere,
        iterations_run=traj.total_iters,
    )


def _run_cell(payload):
    (dims, seed, mult, radius, max_iters, record_every, escape_ratio,
     settle_ratio, stop_at_escape, scale) = payload
    minimizer, target = make_minimizer(dims, seed=seed, scale=scale)
    blocks, report = extremal_direction(minimizer, target)
    lam = report.lambda_max
    step_size = mult * 2.0 / lam
    start, _ = perturbed_start(minimizer, target, init_direction=blocks, radius=radius)
    config = GDConfig(
        step_size=step_size,
        max_iters=max_iters,
        init_radius=radius,
        init_direction="top_hessian_eigenvector",
        seed=seed,
        record_every=record_every,
        stop_on_converged=False,
        escape_stop_ratio=escape_ratio if stop_at_escape else None,
        settle_stop_ratio=settle_ratio,
    )
    traj = gd_run(start, target, config, reference=minimizer)
    m2 = float(np.sum(target * target))
    verdict = _verdict_from_trajectory(traj, seed, mult, step_size, lam, m2, escape_ratio)
    return (seed, mult), verdict, traj


@dataclass
class EscapeExperimentResult:
    report: dict
    verdicts: list[StabilityVerdict]
    trajectories: dict = field(repr=False)


def thread_budget() -> int:
    """Worker cap from SHARPFACTOR_THREADS (default 1 = serial)."""
    raw = os.environ.get("SHARPFACTOR_THREADS", "1")
    try:
        value = int(raw)
    except ValueError as exc:
        raise ValidationError(f"SHARPFACTOR_THREADS must be an integer, got {raw!r}") from exc
    return max(1, value)


def escape_experiment(dims, seeds, eta_multipliers, radius,
                      max_iters: int = 100_000,
                      record_every: int = 1,
                      escape_ratio: float = DEFAULT_ESCAPE_RATIO,
                      settle_ratio: float | None = DEFAULT_SETTLE_RATIO,
                      stop_at_escape: bool = True,
                      scale: float = 1.0,
                      threads: int | None = None) -> EscapeExperimentResult:
    """Sweep (seed, step size) cells around the stability threshold.

    For each seed a fresh random minimizer is built; for each multiplier
    ``m`` gradient descent runs with ``eta = m * 2 / lambda_max`` from
    radius ``radius`` along the top-curvature direction. A cell counts as
    escaped when the distance to the minimizer exceeds ``escape_ratio``
    times its initial value; a catapult is a rise of the loss by 1e6 over
    its initial value before any re-descent. At multiplier exactly 1 the
    linear multiplier has magnitude one, so the outcome is recorded without
    any stable/unstable claim.
    """
    dims = validate_dims(dims)
    seeds = [int(s) for s in seeds]
    eta_multipliers = [float(m) for m in eta_multipliers]
    if not seeds:
        raise ValidationError("need at least one seed")
    if not eta_multipliers:
        raise ValidationError("need at least one step-size multiplier")
    if any(m <= 0 for m in eta_multipliers):
        raise ValidationError(f"multipliers must be positive: {eta_multipliers}")
    if not radius > 0:
        raise ValidationError(f"radius must be positive, got {radius}")

    payloads = [
        (dims, seed, mult, radius, max_iters, record_every, escape_ratio,
         settle_ratio, stop_at_escape, scale)
        for seed in seeds for mult in eta_multipliers
    ]
    workers = thread_budget() if threads is None else max(1, int(threads))
    results = {}
    if workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for key, verdict, traj in pool.map(_run_cell, payloads):
                results[key] = (verdict, traj)
    else:
        for payload in payloads:
            key, verdict, traj = _run_cell(payload)
            results[key] = (verdict, traj)

    verdicts = []
    trajectories = {}
    for seed in seeds:
        for mult in eta_multipliers:
            verdict, traj = results[(seed, mult)]
            verdicts.append(verdict)
            trajectories[(seed, mult)] = traj

    report = {
        "dims": list(dims),
        "seeds": seeds,
        "eta_multipliers": eta_multipliers,
        "radius": radius,
        "max_iters": max_iters,
        "record_every": record_every,
        "escape_ratio": escape_ratio,
        "settle_ratio": settle_ratio,
        "stop_at_escape": stop_at_escape,
        "init_direction": "top_hessian_eigenvector",
        "cells": [v.to_json_dict() for v in verdicts],
    }
    return EscapeExperimentResult(report=report, verdicts=verdicts, trajectories=trajectories)


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """CSV with header ``iter,loss,norm_loss,norm_dist,proj_x,proj_y``.

    Floats carry 17 significant digits; missing values (no reference
    minimizer, no projection) are empty fields.
    """
    def field_or_empty(value):
        return "" if value is None or not np.isfinite(value) else fmt17(value)

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("iter,loss,norm_loss,norm_dist,proj_x,proj_y\n")
        for row in range(traj.iterations.size):
            proj_x = proj_y = None
            if traj.proj is not None:
                proj_x, proj_y = traj.proj[row]
            fh.write(",".join([
                str(int(traj.iterations[row])),
                fmt17(traj.loss[row]),
                fmt17(traj.norm_loss[row]),
                field_or_empty(traj.norm_dist[row]),
                field_or_empty(proj_x),
                field_or_empty(proj_y),
            ]) + "\n")
