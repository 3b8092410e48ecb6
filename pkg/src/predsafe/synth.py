"""Synthetic corpora and reference predictors for desk-scale verification.

Scenes put agents on straight lines or circular arcs at constant speed
along the path, sampled every ``dt``; an optional lane centerline follows
the same geometry.  Two closed-form predictors exercise the pipeline:

* ``predict_cv`` extrapolates the agent's instantaneous end-of-history
  velocity in a straight line.  The velocity estimate applies a
  constant-turn correction (half-turn rotation of the last chord plus the
  chord-to-arc speed factor), which recovers the exact tangent velocity on
  both straight and circular noiseless sampling.  On a curve the prediction
  therefore departs from the truth by the classic chord-vs-arc distance.
* ``predict_ctr`` estimates the per-step turn angle from the last two
  chords and rolls circular motion forward, which is exact on noiseless
  arcs.  Turn angles below 1e-9 rad snap to zero, and the zero-turn rollout
  shares ``predict_cv``'s code path, so the two predictors are bit-identical
  on straight scenes.

All randomness comes from numpy's PCG64 generator seeded through
``SeedSequence(seed, spawn_key=...)``, which is platform independent;
generated corpora are pure functions of (spec, seed).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .scene_model import (
    AgentTrack,
    Lane,
    PredictionSet,
    Scene,
    SemanticCondition,
    SemanticMap,
    from_xy_array,
    as_xy_array,
)

STRAIGHT = "straight"
ARC = "arc"

# Turn rates below this (radians per step) are floating-point noise on a
# straight track; both predictors collapse them to pure linear extrapolation.
TURN_SNAP_RAD = 1e-9

_LANE_SPACING_M = 2.5
_LANE_MARGIN_M = 5.0
_AGENT_LATERAL_GAP_M = 3.5
_AGENT_ARC_GAP_M = 10.0

_AXIS_HEADINGS = ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one batch of synthetic scenes."""

    n_scenes: int
    agents_per_scene: int | tuple[int, int] = 1
    geometry: str = STRAIGHT
    radius_m: float | None = None
    speed_mps: float = 10.0
    dt: float = 0.5
    history_len: int = 4
    future_len: int = 6
    map_included: bool = True
    noise_sigma_m: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.geometry not in (STRAIGHT, ARC):
            raise ValueError(f"geometry must be {STRAIGHT!r} or {ARC!r}, got {self.geometry!r}")
        if self.geometry == ARC and not (self.radius_m and self.radius_m > 0):
            raise ValueError("arc geometry requires radius_m > 0")
        if self.speed_mps < 0:
            raise ValueError("speed_mps must be >= 0")
        if self.noise_sigma_m < 0:
            raise ValueError("noise_sigma_m must be >= 0")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if isinstance(self.agents_per_scene, tuple):
            lo, hi = self.agents_per_scene
            if not (1 <= lo <= hi):
                raise ValueError("agents_per_scene range must satisfy 1 <= lo <= hi")
        elif self.agents_per_scene < 1:
            raise ValueError("agents_per_scene must be >= 1")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")


def _key64(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


def _rng(seed: int, *spawn: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=spawn)))


def _agent_count(spec: SynthSpec, rng: np.random.Generator) -> int:
    if isinstance(spec.agents_per_scene, tuple):
        lo, hi = spec.agents_per_scene
        return int(rng.integers(lo, hi + 1))
    return int(spec.agents_per_scene)


def gen_scene(spec: SynthSpec, index: int) -> Scene:
    """Generate one scene; a pure function of (spec.seed, index)."""
    rng = _rng(spec.seed, _key64("scene"), index)
    n_agents = _agent_count(spec, rng)
    n_steps = spec.history_len + spec.future_len
    scene_id = f"scene-{index:05d}"
    step = spec.speed_mps * spec.dt

    agents = []
    lanes = []
    if spec.geometry == STRAIGHT:
        # Axis-aligned headings and half-metre grid starts keep every
        # coordinate exactly representable, so linear extrapolation of a
        # noiseless track is exact in floating point.
        heading = _AXIS_HEADINGS[int(rng.integers(0, 4))]
        base = (float(rng.integers(-200, 201)) * 0.5, float(rng.integers(-200, 201)) * 0.5)
        d = np.array(heading)
        perp = np.array((-heading[1], heading[0]))
        for i in range(n_agents):
            start = np.array(base) + (_AGENT_LATERAL_GAP_M * i) * perp
            track = start[None, :] + (np.arange(n_steps) * step)[:, None] * d[None, :]
            points = from_xy_array(track)
            agents.append(
                AgentTrack(f"a{i:02d}", points[: spec.history_len], points[spec.history_len :])
            )
            span = (n_steps - 1) * step
            offsets = np.arange(
                -_LANE_MARGIN_M, span + _LANE_MARGIN_M + _LANE_SPACING_M / 2, _LANE_SPACING_M
            )
            lane_pts = start[None, :] + offsets[:, None] * d[None, :]
            lanes.append(Lane(f"lane-{index:05d}-{i}", from_xy_array(lane_pts)))
    else:
        radius = float(spec.radius_m)
        center = np.array(
            (float(rng.integers(-200, 201)) * 0.5, float(rng.integers(-200, 201)) * 0.5)
        )
        sign = 1.0 if int(rng.integers(0, 2)) == 0 else -1.0
        phi0 = float(rng.uniform(0.0, 2 * math.pi))
        dphi = sign * step / radius
        all_phis = []
        for i in range(n_agents):
            phi_start = phi0 - sign * (_AGENT_ARC_GAP_M / radius) * i
            phis = phi_start + np.arange(n_steps) * dphi
            all_phis.append(phis)
            track = center[None, :] + radius * np.stack([np.cos(phis), np.sin(phis)], axis=1)
            points = from_xy_array(track)
            agents.append(
                AgentTrack(f"a{i:02d}", points[: spec.history_len], points[spec.history_len :])
            )
        lo = min(p.min() for p in all_phis) - _LANE_MARGIN_M / radius
        hi = max(p.max() for p in all_phis) + _LANE_MARGIN_M / radius
        n_lane = max(2, int(math.ceil((hi - lo) * radius / 1.0)) + 1)
        lane_phis = np.linspace(lo, hi, n_lane)
        lane_pts = center[None, :] + radius * np.stack([np.cos(lane_phis), np.sin(lane_phis)], axis=1)
        lanes.append(Lane(f"lane-{index:05d}-0", from_xy_array(lane_pts)))

    semantic_map = SemanticMap(tuple(lanes)) if spec.map_included else None
    return Scene(scene_id, spec.dt, tuple(agents), semantic_map)


def _turn_angle(d_prev: np.ndarray, d_last: np.ndarray) -> float:
    cross = d_prev[0] * d_last[1] - d_prev[1] * d_last[0]
    dot = d_prev[0] * d_last[0] + d_prev[1] * d_last[1]
    return math.atan2(cross, dot)


def _rotate(v: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array((c * v[0] - s * v[1], s * v[0] + c * v[1]))


def _linear_path(last: np.ndarray, step_vec: np.ndarray, horizon: int) -> np.ndarray:
    # Shared by both predictors so zero-turn outputs are bit-identical.
    return last[None, :] + (np.arange(1, horizon + 1))[:, None] * step_vec[None, :]


def _cv_step(history: np.ndarray) -> np.ndarray:
    """Per-timestep displacement of the instantaneous end-of-history velocity.

    For >= 3 history points the last two chords give the turn angle; the
    last chord rotated by half that angle, scaled by the chord-to-arc
    factor, is the exact tangent step for constant-speed circular (or
    straight) sampling.
    """
    d_last = history[-1] - history[-2]
    if len(history) < 3:
        return d_last
    d_prev = history[-2] - history[-3]
    delta = _turn_angle(d_prev, d_last)
    if abs(delta) < TURN_SNAP_RAD:
        return d_last
    arc_factor = (delta / 2.0) / math.sin(delta / 2.0)
    return _rotate(d_last, delta / 2.0) * arc_factor


def _with_noise(
    base: np.ndarray,
    k: int,
    noise_sigma_m: float,
    rng: np.random.Generator,
) -> tuple[tuple, ...]:
    horizon = base.shape[0]
    samples = [from_xy_array(base)]
    if k > 1:
        if noise_sigma_m > 0:
            noise = rng.normal(0.0, noise_sigma_m, size=(k - 1, horizon, 2))
            for j in range(k - 1):
                samples.append(from_xy_array(base + noise[j]))
        else:
            samples.extend([samples[0]] * (k - 1))
    return tuple(samples)


def _agent_rng(seed: int, model_id: str, condition: SemanticCondition, scene_id: str, agent_id: str):
    return _rng(
        seed,
        _key64("predict"),
        _key64(model_id),
        _key64(condition.value),
        _key64(scene_id),
        _key64(agent_id),
    )


def predict_cv(
    scene: Scene,
    k: int,
    noise_sigma_m: float,
    seed: int,
    condition: SemanticCondition,
    model_id: str = "cv",
) -> PredictionSet:
    """Constant-velocity baseline: straight-line extrapolation of the last
    history velocity.  Sample 1 is the noiseless extrapolation; samples
    2..K add i.i.d. zero-mean isotropic positional noise per timestep.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    per_agent = {}
    for agent in sorted(scene.agents, key=lambda a: a.agent_id):
        history = as_xy_array(agent.history)
        if len(history) < 2:
            raise ValueError(f"agent {agent.agent_id!r}: need >= 2 history points")
        base = _linear_path(history[-1], _cv_step(history), len(agent.future))
        rng = _agent_rng(seed, model_id, condition, scene.scene_id, agent.agent_id)
        per_agent[agent.agent_id] = _with_noise(base, k, noise_sigma_m, rng)
    return PredictionSet(scene.scene_id, model_id, condition, per_agent)


def predict_ctr(
    scene: Scene,
    k: int,
    noise_sigma_m: float,
    seed: int,
    condition: SemanticCondition,
    model_id: str = "ctr",
) -> PredictionSet:
    """Constant-turn-rate predictor: rolls the last history chord forward,
    rotating it by the estimated per-step turn angle.  Exact on noiseless
    arcs; identical to predict_cv (noise 0) on straight tracks.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    per_agent = {}
    for agent in sorted(scene.agents, key=lambda a: a.agent_id):
        history = as_xy_array(agent.history)
        if len(history) < 3:
            raise ValueError(
                f"agent {agent.agent_id!r}: turn-rate estimation needs >= 3 history points"
            )
        d_last = history[-1] - history[-2]
        delta = _turn_angle(history[-2] - history[-3], d_last)
        horizon = len(agent.future)
        if abs(delta) < TURN_SNAP_RAD:
            base = _linear_path(history[-1], d_last, horizon)
        else:
            points = np.empty((horizon, 2))
            d = d_last
            p = history[-1]
            for t in range(horizon):
                d = _rotate(d, delta)
                p = p + d
                points[t] = p
            base = points
        rng = _agent_rng(seed, model_id, condition, scene.scene_id, agent.agent_id)
        per_agent[agent.agent_id] = _with_noise(base, k, noise_sigma_m, rng)
    return PredictionSet(scene.scene_id, model_id, condition, per_agent)


PRESET_NAMES = ("straight_sparse", "curved_dense", "mixed_grid")

_DENSITY_COUNTS: tuple[int | tuple[int, int], ...] = (1, (2, 3), (4, 8), (9, 12))
# One radius per density cell; all small enough that a 20 m window on the
# lane stays clearly above the default 15 degree threshold.
_ARC_RADII_M = (40.0, 50.0, 60.0, 35.0)


def preset_specs(name: str, seed: int, noise_sigma_m: float = 0.0) -> list[SynthSpec]:
    base = SynthSpec(n_scenes=3, seed=seed, noise_sigma_m=noise_sigma_m)
    arcs = [
        replace(base, geometry=ARC, radius_m=r, agents_per_scene=c)
        for r, c in zip(_ARC_RADII_M, _DENSITY_COUNTS)
    ]
    straights = [replace(base, agents_per_scene=c) for c in _DENSITY_COUNTS]
    if name == "straight_sparse":
        return straights[:2]
    if name == "curved_dense":
        return arcs[2:]
    if name == "mixed_grid":
        return straights + arcs
    raise ValueError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")


def gen_corpus(
    preset: str,
    seed: int,
    k: int = 20,
    noise_sigma_m: float = 0.0,
) -> tuple[list[Scene], list[PredictionSet], list[PredictionSet]]:
    """Generate a preset corpus plus its two-condition reference predictions.

    The with-map corpus comes from the turn-aware predictor and the
    without-map corpus from the constant-velocity baseline, mimicking a
    model that exploits road geometry only when the map is visible.
    """
    scenes: list[Scene] = []
    index = 0
    for spec in preset_specs(preset, seed, noise_sigma_m):
        for _ in range(spec.n_scenes):
            scenes.append(gen_scene(spec, index))
            index += 1
    # One model id for both conditions: the fixture emulates a single model
    # that exploits road geometry only when the map is visible.
    model_id = "synthetic"
    preds_with = [
        predict_ctr(s, k, noise_sigma_m, seed, SemanticCondition.WITH_MAP, model_id)
        for s in scenes
    ]
    preds_without = [
        predict_cv(s, k, noise_sigma_m, seed, SemanticCondition.WITHOUT_MAP, model_id)
        for s in scenes
    ]
    return scenes, preds_with, preds_without
