"""Morlet and Gabor wavelets on discrete grids, with closed-form parameter
derivatives.

A filter is controlled by four scalars: the Gaussian window scale ``sigma``,
the global orientation ``theta``, the frequency scale ``xi`` and the aspect
ratio ``gamma``.  Writing ``R`` for the rotation by ``theta`` and
``D = diag(1, gamma)``, the sampled wavelet is

    psi(u) = exp(-||D R u||^2 / (2 sigma^2)) * (exp(i xi u') - beta),

where ``u' = u1 cos(theta) + u2 sin(theta)`` and ``beta`` cancels the mean of
the field.  ``beta`` is computed from the discrete sums on the actual grid, so
``sum(psi) == 0`` holds in exact arithmetic for every parameter choice (not
just for well-localized envelopes).  For the same reason ``beta`` is kept
complex; its imaginary part is negligible whenever the envelope decays before
the grid boundary.

Grids use wrap-around (FFT) coordinate order: index k means coordinate k for
k < n/2 and k - n otherwise.  This removes all fftshift bookkeeping from the
frequency-domain pipeline downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

PARAM_MIN = 1e-6  # lower clamp for sigma and gamma


class DegenerateEnvelope(ValueError):
    """Gaussian envelope sums to (numerically) zero on the grid."""


@dataclass
class MorletParams:
    """The four learnable parameters of one filter.

    ``sigma`` and ``gamma`` are clamped to ``PARAM_MIN`` at construction;
    ``theta`` is stored unbounded (compare angles modulo 2*pi).
    """

    sigma: float
    theta: float
    xi: float
    gamma: float

    def __post_init__(self):
        self.sigma = max(float(self.sigma), PARAM_MIN)
        self.theta = float(self.theta)
        self.xi = float(self.xi)
        self.gamma = max(float(self.gamma), PARAM_MIN)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.sigma, self.theta, self.xi, self.gamma)


@dataclass(frozen=True)
class GridSpec:
    """Square n-by-n sampling grid in wrap-around coordinate order."""

    n: int

    def __post_init__(self):
        if self.n < 2 or self.n % 2:
            raise ValueError(f"grid side must be even and >= 2, got {self.n}")

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Broadcastable coordinate arrays (u1 along rows, u2 along columns)."""
        u = np.arange(self.n, dtype=float)
        u[u >= self.n / 2] -= self.n
        return u[:, None], u[None, :]


class ParamGrads(NamedTuple):
    """Fields of derivatives with respect to (theta, sigma, xi, gamma)."""

    dtheta: np.ndarray
    dsigma: np.ndarray
    dxi: np.ndarray
    dgamma: np.ndarray


def _envelope_carrier(p: MorletParams, g: GridSpec):
    """Gaussian envelope and complex carrier of the filter, plus the rotated
    coordinates v1, v2 (v = R_theta u) used by the derivative prefactors."""
    u1, u2 = g.coords()
    c, s = np.cos(p.theta), np.sin(p.theta)
    v1 = c * u1 + s * u2
    v2 = -s * u1 + c * u2
    quad = v1 * v1 + p.gamma ** 2 * v2 * v2  # ||D_gamma R_theta u||^2
    envelope = np.exp(-quad / (2.0 * p.sigma ** 2))
    carrier = np.exp(1j * p.xi * v1)
    return envelope, carrier, v1, v2, quad


def gabor_sample(p: MorletParams, g: GridSpec) -> np.ndarray:
    """Sample the Gabor field envelope(u) * exp(i xi u') on the grid."""
    envelope, carrier, _, _, _ = _envelope_carrier(p, g)
    return envelope * carrier


def _beta_of(envelope: np.ndarray, carrier: np.ndarray, p: MorletParams) -> complex:
    # Both reductions run through the complex summation path, and the divisor
    # is the real scalar, so a unit carrier (xi = 0) yields beta == 1 exactly
    # and psi is identically zero.
    env_sum = (envelope + 0j).sum().real
    if env_sum < 1e-300:
        raise DegenerateEnvelope(
            f"envelope sum {env_sum!r} below 1e-300 for params {p}")
    num = (envelope * carrier).sum()
    # lane-wise float division (numpy would promote the divisor to complex
    # and lose num.real/den == 1 exactness when the sums coincide)
    return complex(num.real / env_sum, num.imag / env_sum)


def morlet_beta(p: MorletParams, g: GridSpec) -> complex:
    """Zero-mean normalization constant beta = sum(gabor) / sum(envelope).

    Raises DegenerateEnvelope if the envelope sum falls below 1e-300 (a
    defensive guard: the origin sample alone contributes 1 on wrap grids).
    """
    envelope, carrier, _, _, _ = _envelope_carrier(p, g)
    return complex(_beta_of(envelope, carrier, p))


def morlet_sample(p: MorletParams, g: GridSpec) -> np.ndarray:
    """Sample the zero-mean Morlet field envelope(u) * (exp(i xi u') - beta)."""
    envelope, carrier, _, _, _ = _envelope_carrier(p, g)
    beta = _beta_of(envelope, carrier, p)
    return envelope * (carrier - beta)


def _grad_prefactors(p: MorletParams, g: GridSpec):
    """Per-parameter prefactors P = A + iB with d(gabor)/dzeta = P * gabor.

    A multiplies the envelope's log-derivative, B the phase derivative;
    both are real fields.
    """
    envelope, carrier, v1, v2, quad = _envelope_carrier(p, g)
    sig2 = p.sigma ** 2
    a_theta = v1 * v2 * (p.gamma ** 2 - 1.0) / sig2
    b_theta = p.xi * v2
    a_sigma = quad / p.sigma ** 3
    b_xi = v1
    a_gamma = -(p.gamma / sig2) * v2 * v2
    return envelope, carrier, (a_theta, b_theta), (a_sigma,), (b_xi,), (a_gamma,)


def gabor_param_grads(p: MorletParams, g: GridSpec) -> ParamGrads:
    """Closed-form derivatives of the Gabor field w.r.t. theta, sigma, xi, gamma.

    Each returned field is a polynomial-in-u prefactor times the Gabor field
    itself.
    """
    envelope, carrier, (a_th, b_th), (a_sg,), (b_xi,), (a_gm,) = \
        _grad_prefactors(p, g)
    phi = envelope * carrier
    return ParamGrads(
        dtheta=(a_th + 1j * b_th) * phi,
        dsigma=a_sg * phi,
        dxi=1j * b_xi * phi,
        dgamma=a_gm * phi,
    )


def morlet_param_grads(p: MorletParams, g: GridSpec) -> ParamGrads:
    """Closed-form derivatives of the Morlet field w.r.t. theta, sigma, xi, gamma.

    The beta term is differentiated exactly by differentiating the two
    discrete sums it is built from, so each gradient field sums to zero
    (the zero-mean constraint is preserved to first order).
    """
    envelope, carrier, (a_th, b_th), (a_sg,), (b_xi,), (a_gm,) = \
        _grad_prefactors(p, g)
    beta = _beta_of(envelope, carrier, p)
    env_sum = (envelope + 0j).sum().real
    phi = envelope * carrier
    psi_tail = carrier - beta  # psi = envelope * psi_tail

    def one(a, b):
        # d(beta)/dzeta from the quotient rule on the two discrete sums
        # (complex-path reductions and lane-wise division, see _beta_of)
        dnum = ((a + 1j * b) * phi).sum()
        dden = (a * envelope + 0j).sum()
        diff = dnum - beta * dden
        dbeta = complex(diff.real / env_sum, diff.imag / env_sum)
        return a * envelope * psi_tail + envelope * (1j * b * carrier - dbeta)

    zero = np.zeros_like(a_sg)
    return ParamGrads(
        dtheta=one(a_th, b_th),
        dsigma=one(a_sg, zero),
        dxi=one(zero, b_xi),
        dgamma=one(a_gm, zero),
    )
