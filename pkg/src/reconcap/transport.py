"""Discrete-time parameter transport and its Jacobians.

A step rule turns a task into an update map on parameters; a trajectory is
the orbit of one initial point together with the per-step Jacobians and their
ordered product.  Because tasks are quadratic and noise enters additively,
every step Jacobian is state-independent and the cumulative Jacobian is an
exact matrix product, which is what makes the composition and rank algebra
checkable to near machine precision.

Update rules (eta = step_size, s = noise_scale, wd = weight_decay, xi a fresh
standard normal draw keyed by (omega_seed, realization, step)):

  gradient_descent: theta' = theta - eta * (grad(theta) + wd * theta)
                    J = I - eta * (H + wd * I)
  noisy_gradient:   theta' = theta - eta * grad(theta) + eta * s * xi
                    J = I - eta * H
  langevin:         theta' = theta - eta * grad(theta) + sqrt(2 * s * eta) * xi
                    J = I - eta * H            (s plays the temperature T)
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import rng
from .gaussian import GaussianState, sample_point
from .spectral import as_vector
from .tasks import QuadraticTask, gradient

# Trajectories whose parameter norm passes this limit are treated as diverged.
DIVERGENCE_LIMIT = 1e8


class DivergenceError(RuntimeError):
    pass


class StepKind(enum.Enum):
    GRADIENT_DESCENT = "gradient_descent"
    NOISY_GRADIENT = "noisy_gradient"
    LANGEVIN = "langevin"


@dataclass(frozen=True)
class StepRule:
    kind: StepKind
    step_size: float
    noise_scale: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self):
        if not isinstance(self.kind, StepKind):
            object.__setattr__(self, "kind", StepKind(self.kind))
        if not self.step_size > 0.0:
            raise ValueError(f"StepRule: step_size must be > 0, got {self.step_size}")
        if self.noise_scale < 0.0:
            raise ValueError(f"StepRule: noise_scale must be >= 0, got {self.noise_scale}")
        if self.weight_decay < 0.0:
            raise ValueError(f"StepRule: weight_decay must be >= 0, got {self.weight_decay}")
        if self.kind is not StepKind.GRADIENT_DESCENT and self.weight_decay != 0.0:
            raise ValueError("StepRule: weight_decay is defined for gradient_descent only")

    def uses_noise(self) -> bool:
        return self.kind is not StepKind.GRADIENT_DESCENT


def step_jacobian(task: QuadraticTask, rule: StepRule) -> np.ndarray:
    """State-independent Jacobian of one update step."""
    eye = np.eye(task.dim)
    if rule.kind is StepKind.GRADIENT_DESCENT:
        return eye - rule.step_size * (task.hessian + rule.weight_decay * eye)
    return eye - rule.step_size * task.hessian


def step(theta, task: QuadraticTask, rule: StepRule, noise_draw=None):
    """One update step; returns (theta_next, jacobian)."""
    th = as_vector(theta, dim=task.dim, name="theta")
    eta = rule.step_size
    if rule.uses_noise():
        xi = as_vector(noise_draw, dim=task.dim, name="noise_draw")
    if rule.kind is StepKind.GRADIENT_DESCENT:
        nxt = th - eta * (gradient(task, th) + rule.weight_decay * th)
    elif rule.kind is StepKind.NOISY_GRADIENT:
        nxt = th - eta * gradient(task, th) + eta * rule.noise_scale * xi
    else:
        nxt = th - eta * gradient(task, th) + np.sqrt(2.0 * rule.noise_scale * eta) * xi
    return nxt, step_jacobian(task, rule)


@dataclass(frozen=True)
class Trajectory:
    initial: np.ndarray
    states: np.ndarray  # (n_steps + 1, dim)
    step_jacobians: tuple
    cumulative_jacobian: np.ndarray
    omega_seed: int | None
    rule: StepRule | None
    task_label: str
    realization: int = 0
    step_offset: int = 0

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def propagate(
    theta0,
    task: QuadraticTask,
    rule: StepRule,
    n_steps: int,
    omega_seed: int,
    *,
    realization: int = 0,
    step_offset: int = 0,
) -> Trajectory:
    """Roll the step map forward, recording states and Jacobians.

    Noise draws are keyed by (omega_seed, realization, step_offset + k), so a
    trajectory split at any step and resumed with the matching offset replays
    the same draws and recomposes exactly.
    """
    if n_steps < 0:
        raise ValueError(f"propagate: n_steps must be >= 0, got {n_steps}")
    th = as_vector(theta0, dim=task.dim, name="theta0")
    d = task.dim
    states = np.empty((n_steps + 1, d))
    states[0] = th
    j_step = step_jacobian(task, rule)
    cumulative = np.eye(d)
    needs_noise = rule.uses_noise()
    for k in range(n_steps):
        xi = (
            rng.normal_draw(omega_seed, rng.STREAM_STEP_NOISE, realization, step_offset + k, d)
            if needs_noise
            else None
        )
        nxt, _ = step(states[k], task, rule, xi)
        norm = float(np.linalg.norm(nxt))
        if norm > DIVERGENCE_LIMIT:
            raise DivergenceError(
                f"propagate: |theta| = {norm:.3e} exceeded {DIVERGENCE_LIMIT:.1e} "
                f"at step {step_offset + k} (task {task.label!r})"
            )
        states[k + 1] = nxt
        cumulative = j_step @ cumulative
    return Trajectory(
        initial=th,
        states=states,
        step_jacobians=(j_step,) * n_steps,
        cumulative_jacobian=cumulative,
        omega_seed=int(omega_seed),
        rule=rule,
        task_label=task.label,
        realization=int(realization),
        step_offset=int(step_offset),
    )


def compose(first: Trajectory, second: Trajectory) -> Trajectory:
    """Concatenate two trajectory segments; Jacobians chain by left product.

    The second segment must start bit-exactly where the first ends (replay
    from a split guarantees this).
    """
    if first.dim != second.dim:
        raise ValueError("compose: dimension mismatch")
    if not np.array_equal(first.states[-1], second.states[0]):
        raise ValueError("compose: second segment does not start at first segment's endpoint")
    same_stream = (
        first.omega_seed == second.omega_seed
        and first.realization == second.realization
        and second.step_offset == first.step_offset + first.n_steps
    )
    states = np.concatenate([first.states, second.states[1:]], axis=0)
    return Trajectory(
        initial=first.initial,
        states=states,
        step_jacobians=first.step_jacobians + second.step_jacobians,
        cumulative_jacobian=second.cumulative_jacobian @ first.cumulative_jacobian,
        omega_seed=first.omega_seed if same_stream else None,
        rule=first.rule if first.rule == second.rule else None,
        task_label=first.task_label
        if first.task_label == second.task_label
        else f"{first.task_label}|{second.task_label}",
        realization=first.realization,
        step_offset=first.step_offset,
    )


def verify_replay(traj: Trajectory, task: QuadraticTask) -> bool:
    """Re-run the trajectory from its own seed and compare states bitwise."""
    if traj.rule is None or traj.omega_seed is None:
        raise ValueError("verify_replay: trajectory lacks a single (rule, seed) stream")
    redo = propagate(
        traj.initial,
        task,
        traj.rule,
        traj.n_steps,
        traj.omega_seed,
        realization=traj.realization,
        step_offset=traj.step_offset,
    )
    return bool(np.array_equal(redo.states, traj.states))


def ensemble_propagate(
    initial: GaussianState,
    task: QuadraticTask,
    rule: StepRule,
    n_steps: int,
    n_realizations: int,
    master_seed: int,
) -> list[Trajectory]:
    """Independent trajectories from Gaussian initial draws.

    Realization r draws its start on the (master_seed, INIT, r) stream and its
    step noise on (master_seed, STEP, r, k); no state is shared between
    realizations, so any subset can be reproduced in isolation.
    """
    if n_realizations < 1:
        raise ValueError(f"ensemble_propagate: n_realizations must be >= 1, got {n_realizations}")
    if initial.dim != task.dim:
        raise ValueError("ensemble_propagate: initial state dim != task dim")
    out = []
    for r in range(n_realizations):
        theta0 = sample_point(initial, master_seed, r)
        out.append(propagate(theta0, task, rule, n_steps, master_seed, realization=r))
    return out


def trajectories_to_rows(trajectories) -> tuple[list, list]:
    """Flatten trajectories for CSV export: header plus one row per state."""
    if not trajectories:
        raise ValueError("trajectories_to_rows: empty trajectory list")
    d = trajectories[0].dim
    header = ["realization", "step"] + [f"theta_{i}" for i in range(d)]
    rows = []
    for traj in trajectories:
        for k in range(traj.states.shape[0]):
            rows.append([traj.realization, traj.step_offset + k] + [float(x) for x in traj.states[k]])
    return header, rows


def summarize_trajectories(trajectories) -> dict:
    """JSON-ready summary: seeds plus final cumulative-Jacobian spectra."""
    from .spectral import singular_values

    return {
        "n_realizations": len(trajectories),
        "n_steps": trajectories[0].n_steps if trajectories else 0,
        "omega_seeds": [t.omega_seed for t in trajectories],
        "realizations": [t.realization for t in trajectories],
        "final_jacobian_singular_values": [
            [float(s) for s in singular_values(t.cumulative_jacobian)] for t in trajectories
        ],
    }
