"""Constant-velocity Kalman filter over box state.

State is the 8-vector (x, y, a, h, vx, vy, va, vh): box center, aspect
ratio (width/height), height, and their per-frame velocities. The
observation is the 4-dim (x, y, a, h) measurement. Process and observation
noise scale with the track height, so the filter behaves consistently
across box sizes. All linear solves go through Cholesky factorizations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .geometry import BoxXYAH

__all__ = [
    "MotionParams",
    "KalmanState",
    "initiate",
    "predict",
    "update",
    "project",
    "gating_distance",
    "CHI2INV95",
]

# 0.95 quantile of the chi-square distribution for 1..9 degrees of freedom,
# used as the Mahalanobis gating threshold.
CHI2INV95 = {
    1: 3.8415,
    2: 5.9915,
    3: 7.8147,
    4: 9.4877,
    5: 11.070,
    6: 12.592,
    7: 14.067,
    8: 15.507,
    9: 16.919,
}

_NDIM = 4

_TRANSITION = np.eye(2 * _NDIM)
_TRANSITION[:_NDIM, _NDIM:] = np.eye(_NDIM)
_OBSERVATION = np.eye(_NDIM, 2 * _NDIM)

# Extra noise floors for the (dimensionless) aspect component.
_ASPECT_STD_INIT = 1e-2
_ASPECT_STD_PROCESS = 1e-2
_ASPECT_VEL_STD = 1e-5
_ASPECT_STD_OBSERVE = 1e-1


@dataclass(frozen=True)
class MotionParams:
    """Noise scaling relative to track height."""

    std_weight_position: float = 1.0 / 20.0
    std_weight_velocity: float = 1.0 / 160.0

    def __post_init__(self) -> None:
        if self.std_weight_position <= 0 or self.std_weight_velocity <= 0:
            raise ValueError("motion noise weights must be positive")


@dataclass(frozen=True)
class KalmanState:
    """Gaussian state estimate: 8-dim mean and 8x8 covariance."""

    mean: np.ndarray
    covariance: np.ndarray


def _symmetrize(matrix: np.ndarray) -> np.ndarray:
    return (matrix + matrix.T) / 2.0


def _measurement_array(measurement) -> np.ndarray:
    if isinstance(measurement, BoxXYAH):
        return measurement.to_array()
    return np.asarray(measurement, dtype=float).reshape(_NDIM)


def initiate(measurement: BoxXYAH, params: MotionParams = MotionParams()) -> KalmanState:
    """New track state from an unassociated measurement; velocities start at 0."""
    z = _measurement_array(measurement)
    mean = np.concatenate([z, np.zeros(_NDIM)])
    wp, wv = params.std_weight_position, params.std_weight_velocity
    h = z[3]
    std = np.array(
        [
            2 * wp * h,
            2 * wp * h,
            _ASPECT_STD_INIT,
            2 * wp * h,
            10 * wv * h,
            10 * wv * h,
            _ASPECT_VEL_STD,
            10 * wv * h,
        ]
    )
    return KalmanState(mean=mean, covariance=np.diag(std**2))


def predict(state: KalmanState, params: MotionParams = MotionParams()) -> KalmanState:
    """One time-step of the constant-velocity model: position += velocity."""
    wp, wv = params.std_weight_position, params.std_weight_velocity
    h = state.mean[3]
    std = np.array(
        [
            wp * h,
            wp * h,
            _ASPECT_STD_PROCESS,
            wp * h,
            wv * h,
            wv * h,
            _ASPECT_VEL_STD,
            wv * h,
        ]
    )
    process_cov = np.diag(std**2)
    mean = _TRANSITION @ state.mean
    covariance = _TRANSITION @ state.covariance @ _TRANSITION.T + process_cov
    return KalmanState(mean=mean, covariance=_symmetrize(covariance))


def _observation_noise(state: KalmanState, params: MotionParams) -> np.ndarray:
    wp = params.std_weight_position
    h = state.mean[3]
    std = np.array([wp * h, wp * h, _ASPECT_STD_OBSERVE, wp * h])
    return np.diag(std**2)


def project(
    state: KalmanState, params: MotionParams = MotionParams()
) -> tuple[np.ndarray, np.ndarray]:
    """Project the state distribution into measurement space (adds obs noise)."""
    obs_cov = _observation_noise(state, params)
    mean = _OBSERVATION @ state.mean
    covariance = _OBSERVATION @ state.covariance @ _OBSERVATION.T + obs_cov
    return mean, _symmetrize(covariance)


def update(
    state: KalmanState,
    measurement: BoxXYAH,
    params: MotionParams = MotionParams(),
) -> KalmanState:
    """Standard gain-weighted correction against a 4-dim measurement.

    Uses the Joseph-form covariance update, which keeps the covariance
    symmetric positive semi-definite under roundoff.
    """
    z = _measurement_array(measurement)
    if not np.isfinite(z).all():
        raise ValueError(f"non-finite measurement: {measurement}")

    projected_mean, projected_cov = project(state, params)
    chol = scipy.linalg.cho_factor(projected_cov, lower=True, check_finite=False)
    gain = scipy.linalg.cho_solve(
        chol, (state.covariance @ _OBSERVATION.T).T, check_finite=False
    ).T
    innovation = z - projected_mean

    mean = state.mean + gain @ innovation
    obs_cov = _observation_noise(state, params)
    identity_minus = np.eye(2 * _NDIM) - gain @ _OBSERVATION
    covariance = (
        identity_minus @ state.covariance @ identity_minus.T
        + gain @ obs_cov @ gain.T
    )
    return KalmanState(mean=mean, covariance=_symmetrize(covariance))


def gating_distance(
    state: KalmanState,
    measurements,
    params: MotionParams = MotionParams(),
) -> np.ndarray:
    """Squared Mahalanobis distance of measurements from the projected state.

    Four degrees of freedom; compare against ``CHI2INV95[4]`` to gate
    motion-implausible associations.

    Raises:
        ValueError: if the projected covariance is singular (degenerate track).
    """
    projected_mean, projected_cov = project(state, params)
    rows = [_measurement_array(m) for m in measurements]
    if not rows:
        return np.zeros(0)
    z = np.stack(rows, axis=0)
    try:
        chol = np.linalg.cholesky(projected_cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("degenerate track: projected covariance is singular") from exc
    delta = z - projected_mean[None, :]
    solved = scipy.linalg.solve_triangular(
        chol, delta.T, lower=True, check_finite=False
    )
    return np.sum(solved**2, axis=0)
