"""On-board Kalman filter with position-only (GPS-like) measurements.

Each CAV owns one filter. Its belief is what gets transmitted to the
intersection manager every slot.
"""
from typing import Optional

import numpy as np

from intersim.utils import dataclass

from .dynamics import CavState, MotionModel, axis_block, check_psd, sample_gaussian
from .exceptions import ValidationError

INNOVATION_REGULARIZATION = 1e-12

H = np.hstack([np.eye(2), np.zeros((2, 2))])


@dataclass
class KalmanFilterState:
    belief: CavState
    measurement_noise: np.ndarray  # 2x2
    worst_case_posterior: np.ndarray  # 4x4, the planner's Sigma_0

    def validate(self):
        self.belief.validate()
        check_psd(self.measurement_noise, 'measurement noise')


def gps_noise(std: float):
    if std < 0:
        raise ValidationError.make(f"measurement standard deviation must be >= 0, got {std}")
    return np.eye(2) * std**2


def init_filter(
    true_vector, sigma0, measurement_std: float, timestamp=0, rng: Optional[np.random.Generator] = None
) -> KalmanFilterState:
    """Initial belief for a CAV entering the pre-danger zone.

    With an rng, the belief mean is the truth plus an error drawn from sigma0.
    """
    sigma0 = np.asarray(sigma0, dtype=float)
    mean = np.asarray(true_vector, dtype=float).copy()
    if rng is not None:
        mean = mean + sample_gaussian(sigma0, rng)
    belief = CavState.from_vector(mean, sigma0.copy(), timestamp)
    return KalmanFilterState(belief, gps_noise(measurement_std), sigma0)


def kf_predict(state: KalmanFilterState, applied_control, model: MotionModel) -> KalmanFilterState:
    b = state.belief
    mean = model.step(b.vector, applied_control)
    cov = model.phi @ b.covariance @ model.phi.T + model.process_noise
    cov = (cov + cov.T) / 2
    return state.replace(belief=CavState.from_vector(mean, cov, b.timestamp + 1))


def kf_update(state: KalmanFilterState, position_measurement) -> KalmanFilterState:
    z = np.asarray(position_measurement, dtype=float)
    if z.shape != (2,) or not np.all(np.isfinite(z)):
        raise ValidationError.make(f"measurement must be a finite 2-vector, got {z!r}")

    b = state.belief
    P = b.covariance
    R = state.measurement_noise
    S = H @ P @ H.T + R + INNOVATION_REGULARIZATION * np.eye(2)
    K = np.linalg.solve(S, H @ P).T  # P H^T S^-1, S symmetric

    mean = b.vector + K @ (z - H @ b.vector)
    # Joseph form keeps the posterior symmetric PSD
    I_KH = np.eye(4) - K @ H
    cov = I_KH @ P @ I_KH.T + K @ R @ K.T
    cov = (cov + cov.T) / 2
    return state.replace(belief=CavState.from_vector(mean, cov, b.timestamp))


def transmit_estimate(state: KalmanFilterState) -> CavState:
    return state.belief


def sample_measurement(true_position, measurement_noise, rng: np.random.Generator):
    return np.asarray(true_position, dtype=float) + sample_gaussian(measurement_noise, rng)


def nees(state: KalmanFilterState, true_vector, axis: int) -> float:
    "Normalized estimation error squared over the (position, velocity) block of the travel axis"
    err = np.asarray(true_vector, dtype=float) - state.belief.vector
    idx = [axis, 2 + axis]
    e = err[idx]
    P = axis_block(state.belief.covariance, axis)
    return float(e @ np.linalg.solve(P, e))
