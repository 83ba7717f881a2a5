"""Linear-Gaussian motion model for CAVs moving along one axis.

The state vector is ordered (px, py, vx, vy). Each axis follows a double
integrator, and noise only ever lives on a CAV's travel axis.
"""
import math
from typing import Sequence, Tuple

import numpy as np
from scipy.special import erf

from intersim.utils import dataclass

from .exceptions import DomainError, InputLengthError, ValidationError

PSD_RTOL = 1e-9
SYMMETRY_ATOL = 1e-9


def check_psd(matrix, what='covariance'):
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError.make(f"{what} must be a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError.make(f"{what} has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if not np.allclose(m, m.T, rtol=0, atol=SYMMETRY_ATOL * scale):
        raise ValidationError.make(f"{what} is not symmetric")
    if m.shape == (2, 2):
        smallest = _sym2_eigenvalues(m)[1]
    else:
        smallest = float(np.linalg.eigvalsh(m)[0]) if m.size else 0.0
    if smallest < -PSD_RTOL * max(float(np.trace(m)), 0.0):
        raise ValidationError.make(
            f"{what} is not positive semi-definite (smallest eigenvalue {smallest:.3g})"
        )


def _sym2_eigenvalues(m) -> Tuple[float, float]:
    "Closed-form eigenvalues (larger, smaller) of a symmetric 2x2 matrix"
    a, b, d = float(m[0, 0]), float(m[0, 1]), float(m[1, 1])
    mean = (a + d) / 2
    radius = math.hypot((a - d) / 2, b)
    return mean + radius, mean - radius


def embed_axis_block(block, axis: int):
    "Places a 2x2 (position, velocity) block on the given axis of a 4x4 matrix"
    if axis not in (0, 1):
        raise ValidationError.make(f"axis must be 0 or 1, got {axis}")
    block = np.asarray(block, dtype=float)
    if block.shape != (2, 2):
        raise ValidationError.make(f"expected a 2x2 block, got shape {block.shape}")
    full = np.zeros((4, 4))
    idx = [axis, 2 + axis]
    full[np.ix_(idx, idx)] = block
    return full


def axis_block(matrix, axis: int):
    idx = [axis, 2 + axis]
    return np.asarray(matrix)[np.ix_(idx, idx)]


def clip_correlation(block):
    """Shrinks the cross term of a 2x2 covariance so that |corr| <= 1.

    Returns the block unchanged when it is already consistent.
    """
    block = np.array(block, dtype=float)
    limit = math.sqrt(max(block[0, 0], 0.0) * max(block[1, 1], 0.0))
    if abs(block[0, 1]) > limit:
        c = math.copysign(limit, block[0, 1])
        block[0, 1] = block[1, 0] = c
    return block


def sample_gaussian(cov, rng: np.random.Generator):
    "Zero-mean draw that stays exactly zero on coordinates the covariance leaves untouched"
    cov = np.asarray(cov, dtype=float)
    res = np.zeros(len(cov))
    idx = np.flatnonzero(np.any(cov != 0, axis=0))
    if len(idx):
        res[idx] = rng.multivariate_normal(np.zeros(len(idx)), cov[np.ix_(idx, idx)], method='eigh')
    return res


def default_process_noise(dt: float):
    return np.array(
        [
            [0.0125 * dt**4, 0.025 * dt**3],
            [0.025 * dt**3, 0.5 * dt**2],
        ]
    )


@dataclass
class CavState:
    position: np.ndarray
    velocity: np.ndarray
    covariance: np.ndarray
    timestamp: int = 0

    @classmethod
    def from_vector(cls, vector, covariance=None, timestamp=0):
        vector = np.asarray(vector, dtype=float)
        if covariance is None:
            covariance = np.zeros((4, 4))
        return cls(vector[:2].copy(), vector[2:].copy(), np.asarray(covariance, dtype=float), timestamp)

    @property
    def vector(self):
        return np.concatenate([self.position, self.velocity])

    @property
    def speed(self):
        return float(np.hypot(*self.velocity))

    def validate(self):
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.velocity))):
            raise ValidationError.make("state has non-finite position or velocity")
        check_psd(self.covariance, 'state covariance')


@dataclass
class MotionModel:
    phi: np.ndarray
    gamma: np.ndarray
    process_noise: np.ndarray
    dt: float

    @classmethod
    def double_integrator(cls, dt: float, process_noise=None):
        if not dt > 0:
            raise ValidationError.make(f"slot duration must be positive, got {dt}")
        phi = np.eye(4)
        phi[0, 2] = phi[1, 3] = dt
        gamma = np.zeros((4, 2))
        gamma[0, 0] = gamma[1, 1] = dt**2 / 2
        gamma[2, 0] = gamma[3, 1] = dt
        if process_noise is None:
            process_noise = np.zeros((4, 4))
        process_noise = np.asarray(process_noise, dtype=float)
        check_psd(process_noise, 'process noise')
        return cls(phi, gamma, process_noise, float(dt))

    def axis_block(self, axis: int = 0):
        "The one-dimensional (phi, gamma) pair acting on (position, velocity) of one axis"
        idx = [axis, 2 + axis]
        return self.phi[np.ix_(idx, idx)], self.gamma[idx, axis]

    def step(self, vector, control):
        return self.phi @ vector + self.gamma @ np.asarray(control, dtype=float)

    def without_noise(self):
        return self.replace(process_noise=np.zeros((4, 4)))


@dataclass
class ControlSequence:
    accelerations: np.ndarray  # shape (k, 2)
    start_slot: int = 0

    @classmethod
    def along_axis(cls, values: Sequence[float], axis: int, start_slot=0):
        acc = np.zeros((len(values), 2))
        acc[:, axis] = values
        return cls(acc, start_slot)

    def __len__(self):
        return len(self.accelerations)

    def check_bounds(self, a_min: float, a_max: float, tol=1e-9):
        acc = np.asarray(self.accelerations)
        if acc.size and (acc.min() < a_min - tol or acc.max() > a_max + tol):
            raise ValidationError.make(
                f"acceleration outside [{a_min}, {a_max}]: range [{acc.min()}, {acc.max()}]"
            )


@dataclass
class EllipseAxes:
    major: float
    minor: float

    def __post_init__(self):
        if not (self.major >= self.minor >= 0):
            raise ValidationError.make(f"invalid ellipse axes ({self.major}, {self.minor})")


def propagate_mean(x0: CavState, controls: ControlSequence, model: MotionModel, t: int):
    if t < 1:
        raise DomainError.make(f"t must be at least 1, got {t}")
    if len(controls) < t:
        raise InputLengthError.make(f"{t} slots requested but only {len(controls)} controls given")

    u = np.asarray(controls.accelerations, dtype=float)
    mean = np.linalg.matrix_power(model.phi, t) @ x0.vector
    phi_k = np.eye(4)
    for k in range(t):
        mean = mean + phi_k @ model.gamma @ u[t - k - 1]
        phi_k = phi_k @ model.phi
    return mean


def propagate_covariance(sigma0, model: MotionModel, t: int):
    if t < 0:
        raise DomainError.make(f"t must be non-negative, got {t}")
    sigma0 = np.asarray(sigma0, dtype=float)
    check_psd(sigma0, 'initial covariance')
    xi = sigma0.copy()
    phi_k = np.eye(4)
    for _ in range(t):
        xi = xi + phi_k @ model.process_noise @ phi_k.T
        phi_k = phi_k @ model.phi
    return (xi + xi.T) / 2


def covariance_sequence(sigma0, model: MotionModel, length: int):
    "Returns [Xi_0, ..., Xi_length] in one pass"
    sigma0 = np.asarray(sigma0, dtype=float)
    check_psd(sigma0, 'initial covariance')
    res = [sigma0.copy()]
    xi = sigma0.copy()
    phi_k = np.eye(4)
    for _ in range(length):
        xi = xi + phi_k @ model.process_noise @ phi_k.T
        phi_k = phi_k @ model.phi
        res.append((xi + xi.T) / 2)
    return res


def chi2_quantile_2dof(epsilon: float) -> float:
    if not 0 < epsilon < 1:
        raise DomainError.make(f"epsilon must lie in (0, 1), got {epsilon}")
    return -2.0 * math.log(epsilon)


def ellipse_semi_axes(location_cov, epsilon: float) -> EllipseAxes:
    location_cov = np.asarray(location_cov, dtype=float)
    check_psd(location_cov, 'location covariance')
    k = chi2_quantile_2dof(epsilon)
    major, minor = _sym2_eigenvalues(location_cov)
    # round-off can leave tiny negative eigenvalues on singular matrices
    return EllipseAxes(math.sqrt(k * max(major, 0.0)), math.sqrt(k * max(minor, 0.0)))


def collision_probability_bound(epsilon: float) -> float:
    if not 0 <= epsilon <= 1:
        raise DomainError.make(f"epsilon must lie in [0, 1], got {epsilon}")
    return 2 * epsilon - epsilon**2


def gaussian_interval_probability(mean: float, variance: float, interval) -> float:
    lo, hi = interval
    if lo > hi:
        raise DomainError.make(f"empty interval [{lo}, {hi}]")
    if variance < 0:
        raise DomainError.make(f"variance must be non-negative, got {variance}")
    if variance == 0:
        return 1.0 if lo <= mean <= hi else 0.0
    scale = math.sqrt(2 * variance)
    return float(0.5 * (erf((hi - mean) / scale) - erf((lo - mean) / scale)))


@dataclass
class UncertaintyProfile:
    """Location variance and ellipse major axis after n slots of propagation.

    Index 0 is the pre-danger constant uncertainty.
    """

    variances: np.ndarray
    axes: np.ndarray
    epsilon: float

    def __len__(self):
        return len(self.axes)

    def axis(self, n: int) -> float:
        return float(self.axes[min(n, len(self.axes) - 1)])

    def variance(self, n: int) -> float:
        return float(self.variances[min(n, len(self.variances) - 1)])


def uncertainty_profile(sigma0, model: MotionModel, epsilon: float, length: int) -> UncertaintyProfile:
    variances = []
    axes = []
    for xi in covariance_sequence(sigma0, model, length):
        loc = xi[:2, :2]
        ea = ellipse_semi_axes(loc, epsilon)
        axes.append(ea.major)
        variances.append(max(_sym2_eigenvalues(loc)[0], 0.0))
    return UncertaintyProfile(np.array(variances), np.array(axes), epsilon)
