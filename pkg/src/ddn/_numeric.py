"""Numerical primitives shared by every learner: activations, stable
reductions, seeded random streams and a finite-difference gradient oracle."""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "sigmoid",
    "log_sigmoid",
    "log_sum_exp",
    "make_rng",
    "finite_diff_grad",
    "GradCheckReport",
    "grad_check",
    "relative_error",
]


def sigmoid(z):
    """Logistic function, evaluated on the branch that cannot overflow.

    Accepts scalars or arrays; a scalar in gives a Python float out.
    """
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    with np.errstate(under="ignore"):
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
    if out.ndim == 0:
        return float(out)
    return out


def log_sigmoid(z):
    """``log(sigmoid(z))`` without cancellation for large ``|z|``."""
    z = np.asarray(z, dtype=np.float64)
    out = -np.logaddexp(0.0, -z)
    if out.ndim == 0:
        return float(out)
    return out


def log_sum_exp(xs) -> float:
    xs = np.asarray(xs, dtype=np.float64).ravel()
    if xs.size == 0:
        raise ValueError("log_sum_exp of an empty sequence is undefined")
    if not np.all(np.isfinite(xs)):
        raise ValueError("log_sum_exp requires finite entries")
    if xs.size == 1:
        return float(xs[0])
    top = xs.max()
    return float(top + np.log(np.sum(np.exp(xs - top))))


def make_rng(seed: int, stream: str = "") -> np.random.Generator:
    """Independent PCG64 stream keyed by ``(seed, stream)``.

    The stream label is hashed with CRC-32 so that e.g. the Gibbs chain for
    example 17 and the SGD shuffle never share state.
    """
    if seed is None:
        raise ValueError("a seed is required")
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    if stream:
        key.append(zlib.crc32(stream.encode("utf-8")))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def finite_diff_grad(f, theta, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``theta``."""
    if h <= 0:
        raise ValueError("step h must be positive")
    theta = np.array(theta, dtype=np.float64).ravel()
    grad = np.empty_like(theta)
    for k in range(theta.size):
        old = theta[k]
        theta[k] = old + h
        fp = f(theta.copy())
        theta[k] = old - h
        fm = f(theta.copy())
        theta[k] = old
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite objective at coordinate {k}")
        grad[k] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(a, b, floor: float = 1e-6) -> np.ndarray:
    """Elementwise ``|a-b| / max(|a|, |b|, floor)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


@dataclass(frozen=True)
class GradCheckReport:
    per_param_errors: np.ndarray = field(repr=False)

    @property
    def max_rel_err(self) -> float:
        if self.per_param_errors.size == 0:
            return 0.0
        return float(self.per_param_errors.max())


def grad_check(f, grad, theta, h: float = 1e-5, floor: float = 1e-6) -> GradCheckReport:
    """Compare an analytic gradient (array, or callable of ``theta``) against central differences."""
    numeric = finite_diff_grad(f, theta, h)
    if callable(grad):
        grad = grad(theta)
    analytic = np.asarray(grad, dtype=np.float64).ravel()
    if analytic.shape != numeric.shape:
        raise ValueError(f"gradient shape {analytic.shape} != parameter shape {numeric.shape}")
    return GradCheckReport(relative_error(analytic, numeric, floor))
