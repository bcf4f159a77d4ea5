"""Capacity diagnostics built from transport-map Jacobians.

Given end-to-end Jacobians J of the learning map and an orthonormal basis Q
for the directions a reference task leaves free, three numbers summarize what
a later task can still do:

  * effective rank        exp( mean log det(J^T J) / d )
  * compatible rank       exp( mean log det(Q^T J^T J Q) / k )
  * usable directions     count of singular values of J Q above tau_sigma

The stable rank of the later task's curvature restricted to Q measures how
many of those directions it demands.  Demands exceeding the usable count
predict that accommodating the later task forces movement that the earlier
task will feel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectral import (
    RANK_TOL_ABS,
    RANK_TOL_REL,
    SubspaceBasis,
    as_matrix,
    as_vector,
    singular_values,
    stable_rank,
)
from .tasks import QuadraticTask, restricted_hessian, value

DEFAULT_TAU_SIGMA = 1e-3


def _as_jacobian_list(jacobians, dim: int | None = None) -> list[np.ndarray]:
    # accepts trajectories (their end-to-end Jacobian) or plain matrices
    mats = [
        as_matrix(getattr(j, "cumulative_jacobian", j), square=True, name="jacobian")
        for j in jacobians
    ]
    if not mats:
        raise ValueError("need at least one jacobian")
    d = mats[0].shape[0]
    if dim is not None and d != dim:
        raise ValueError(f"jacobian dim {d} != expected {dim}")
    for m in mats[1:]:
        if m.shape[0] != d:
            raise ValueError("jacobians must share a dimension")
    return mats


def _log_volume_from_singulars(sigma: np.ndarray) -> float:
    floor = max(RANK_TOL_REL * float(sigma[0]), RANK_TOL_ABS)
    if float(sigma[-1]) <= floor:
        return float("-inf")
    return float(2.0 * np.sum(np.log(sigma)))


def effective_rank(jacobians) -> float:
    """exp of the mean per-dimension log volume of J^T J; 0.0 once any
    realization has collapsed a direction to numerical rank deficiency."""
    mats = _as_jacobian_list(jacobians)
    d = mats[0].shape[0]
    logs = []
    for m in mats:
        lv = _log_volume_from_singulars(singular_values(m))
        if lv == float("-inf"):
            return 0.0
        logs.append(lv)
    return float(np.exp(np.mean(logs) / d))


def compatible_effective_rank(
    jacobians, preserving_basis: SubspaceBasis, tau_sigma: float = DEFAULT_TAU_SIGMA
) -> tuple[float, int]:
    """Rank diagnostics of J restricted to the preserved subspace.

    Returns (compatible_rank, usable_direction_count).  The count is the
    number of singular values of J Q above tau_sigma, averaged over
    realizations and rounded half-down to an integer.
    """
    if tau_sigma <= 0.0:
        raise ValueError("tau_sigma must be > 0")
    mats = _as_jacobian_list(jacobians, dim=preserving_basis.ambient_dim)
    k = preserving_basis.dim
    logs = []
    counts = []
    collapsed = False
    for m in mats:
        sigma = singular_values(m @ preserving_basis.basis)
        counts.append(int(np.sum(sigma > tau_sigma)))
        lv = _log_volume_from_singulars(sigma)
        if lv == float("-inf"):
            collapsed = True
        else:
            logs.append(lv)
    rank = 0.0 if collapsed else float(np.exp(np.mean(logs) / k))
    avg = float(np.mean(counts))
    return rank, int(math.ceil(avg - 0.5))


def singular_profile(jacobians, preserving_basis: SubspaceBasis) -> np.ndarray:
    """Descending singular values of J Q, averaged elementwise over realizations."""
    mats = _as_jacobian_list(jacobians, dim=preserving_basis.ambient_dim)
    profiles = np.stack([singular_values(m @ preserving_basis.basis) for m in mats])
    return profiles.mean(axis=0)


def reconfiguration_dimension(task_b: QuadraticTask, preserving_basis: SubspaceBasis) -> float:
    """Stable rank of the later task's curvature restricted to the preserved
    subspace: how many of those directions the task effectively demands."""
    return stable_rank(restricted_hessian(task_b, preserving_basis))


@dataclass(frozen=True)
class CapacityReport:
    """Prediction record for one (jacobian ensemble, later task) pairing.

    predicted_incompatible compares the demand against the integer usable
    count; the _raw variant compares against the continuous compatible rank,
    which is more brittle near collapse and kept for reference.
    """

    effective_rank: float
    compatible_effective_rank: float
    usable_direction_count: int
    singular_profile: tuple[float, ...]
    m_b: float
    predicted_incompatible: bool
    predicted_incompatible_raw: bool
    tau_sigma: float

    def to_dict(self) -> dict:
        return {
            "effective_rank": self.effective_rank,
            "compatible_effective_rank": self.compatible_effective_rank,
            "usable_direction_count": self.usable_direction_count,
            "singular_profile": list(self.singular_profile),
            "m_b": self.m_b,
            "predicted_incompatible": self.predicted_incompatible,
            "predicted_incompatible_raw": self.predicted_incompatible_raw,
            "tau_sigma": self.tau_sigma,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "CapacityReport":
        allowed = {
            "effective_rank",
            "compatible_effective_rank",
            "usable_direction_count",
            "singular_profile",
            "m_b",
            "predicted_incompatible",
            "predicted_incompatible_raw",
            "tau_sigma",
        }
        unknown = set(payload) - allowed
        if unknown:
            raise ValueError(f"CapacityReport: unknown keys {sorted(unknown)}")
        missing = allowed - set(payload)
        if missing:
            raise ValueError(f"CapacityReport: missing keys {sorted(missing)}")
        return cls(
            effective_rank=float(payload["effective_rank"]),
            compatible_effective_rank=float(payload["compatible_effective_rank"]),
            usable_direction_count=int(payload["usable_direction_count"]),
            singular_profile=tuple(float(x) for x in payload["singular_profile"]),
            m_b=float(payload["m_b"]),
            predicted_incompatible=bool(payload["predicted_incompatible"]),
            predicted_incompatible_raw=bool(payload["predicted_incompatible_raw"]),
            tau_sigma=float(payload["tau_sigma"]),
        )


def predict_incompatibility(
    jacobians,
    preserving_basis: SubspaceBasis,
    task_b: QuadraticTask,
    tau_sigma: float = DEFAULT_TAU_SIGMA,
) -> CapacityReport:
    full = effective_rank(jacobians)
    compatible, usable = compatible_effective_rank(jacobians, preserving_basis, tau_sigma)
    profile = singular_profile(jacobians, preserving_basis)
    m_b = reconfiguration_dimension(task_b, preserving_basis)
    return CapacityReport(
        effective_rank=full,
        compatible_effective_rank=compatible,
        usable_direction_count=usable,
        singular_profile=tuple(float(x) for x in profile),
        m_b=m_b,
        predicted_incompatible=bool(m_b > usable),
        predicted_incompatible_raw=bool(m_b > compatible),
        tau_sigma=float(tau_sigma),
    )


@dataclass(frozen=True)
class ForgettingResult:
    forgetting: float
    normal_displacement: float
    exited_manifold: bool
    bound_check: float


DEFAULT_EPSILON_A = 1e-6


def _endpoints(trajectory_or_pair) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(trajectory_or_pair, "initial") and hasattr(trajectory_or_pair, "final"):
        return trajectory_or_pair.initial, trajectory_or_pair.final
    start, final = trajectory_or_pair
    return start, final


def measure_forgetting(
    trajectory_on_b,
    task_a: QuadraticTask,
    epsilon_a: float = DEFAULT_EPSILON_A,
) -> ForgettingResult:
    """Loss increase on the earlier task against its curvature lower bound.

    Accepts a trajectory run on the later task, or a plain (start, final)
    pair of parameter vectors.  forgetting = phi_A(final) - phi_A(start);
    exited_manifold flags forgetting above epsilon_a.  With delta the
    distance of the final point from the task-A optimal affine set and mu
    the smallest positive curvature, phi_A(final) >= mu/2 * delta^2, so for
    a start on the zero-loss set bound_check stays nonnegative up to
    roundoff.
    """
    raw_start, raw_final = _endpoints(trajectory_on_b)
    start = as_vector(raw_start, dim=task_a.dim, name="theta_start")
    final = as_vector(raw_final, dim=task_a.dim, name="theta_final")
    forgetting = value(task_a, final) - value(task_a, start)
    eigvals, eigvecs = np.linalg.eigh(task_a.hessian)
    lam_max = max(float(eigvals[-1]), 1.0)
    keep = eigvals > RANK_TOL_REL * lam_max
    diff = final - task_a.minimizer
    # component along curved directions = distance from the optimal affine set
    delta = float(np.linalg.norm(eigvecs[:, keep].T @ diff))
    mu = float(eigvals[keep][0]) if np.any(keep) else 0.0
    return ForgettingResult(
        forgetting=float(forgetting),
        normal_displacement=delta,
        exited_manifold=bool(forgetting > epsilon_a),
        bound_check=float(forgetting - 0.5 * mu * delta * delta),
    )


def participation_ratio(samples: np.ndarray) -> float:
    """(sum lambda)^2 / sum lambda^2 of the sample covariance spectrum.

    Rows are samples.  Ranges from 1 (one dominant direction) to the ambient
    dimension (isotropic spread).
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("participation_ratio: need a 2-D array with >= 2 rows")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigvals = np.maximum(np.linalg.eigvalsh(cov), 0.0)
    total = float(np.sum(eigvals))
    square = float(np.sum(eigvals**2))
    if square == 0.0:
        return 0.0
    return total * total / square
