"""Reverse-mode differentiation specialized to the scattering cascade.

Complex intermediates use the real-loss convention: the stored gradient of a
complex field z is dL/dRe(z) + i*dL/dIm(z).  Under this convention every
C-linear stage backpropagates through its Hermitian adjoint, the modulus
y = |z| backpropagates as gbar * z / |z|, and the frequency-periodization
adjoint tiles the upstream block over all 2^r x 2^r aliased blocks (divided
by 4^r, matching the block-mean forward).

The chain ends either at the four Morlet parameters of each filter (via the
closed-form derivative fields), at the per-scale equivariant parameters
(orientation gradients summed over the L offsets), or at raw pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filterbank import FilterBank
from .fourier import fft2, fold, ifft2, unfold
from .morlet import morlet_param_grads
from .scattering import ScatteringOutput, Tape

MODULUS_EPS = 1e-12  # |z| below this gets a zero subgradient


class TapeMissing(ValueError):
    """Backward was requested without a grad-mode forward tape."""


@dataclass
class GradientSet:
    """Gradients for every learnable scattering parameter.

    ``canonical``: array (n_filters, 4) with columns (sigma, theta, xi, gamma);
    ``equivariant``: array (J, 4), orientation column summed over the L offsets;
    ``pixelwise``: per-filter complex fields dL/dRe + i*dL/dIm.
    """

    mode: str
    values: np.ndarray | list[np.ndarray]

    def vector(self) -> np.ndarray:
        """Flattened layout matching FilterBank.param_vector()."""
        if self.mode == "pixelwise":
            return np.concatenate([np.concatenate([f.real.ravel(), f.imag.ravel()])
                                   for f in self.values])
        return np.asarray(self.values).ravel()


def modulus_backward(z: np.ndarray, gbar: np.ndarray) -> np.ndarray:
    """Backward of y = |z|: returns gbar * z / |z|, zero where |z| < 1e-12."""
    mag = np.abs(z)
    safe = np.where(mag < MODULUS_EPS, 1.0, mag)
    out = gbar * z / safe
    return np.where(mag < MODULUS_EPS, 0.0, out)


def _conv_core_backward(upstream: np.ndarray, r: int, m_in: int,
                        workers: int = 1) -> np.ndarray:
    """Adjoint of z = ifft2(fold(W, r)) back to the full-resolution product
    field W; ``upstream`` is the gradient of z (complex convention)."""
    m_out = m_in // 2 ** r
    return unfold(fft2(upstream, workers) / m_out ** 2, r)


def conv_backward(x_hat: np.ndarray, f_hat: np.ndarray, r: int,
                  gbar: np.ndarray, workers: int = 1
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Backward of conv_fft for one recorded convolution.

    Parameters are the recorded input spectrum, the filter spectrum at the
    input resolution, the decimation exponent, and the upstream gradient of
    the (complex) output.  Returns (gradient w.r.t. the spatial input field,
    gradient w.r.t. the filter frequency field).
    """
    m_in = x_hat.shape[-1]
    w_bar = _conv_core_backward(gbar, r, m_in, workers)
    x_hat_bar = np.conj(f_hat) * w_bar
    f_hat_bar = np.conj(x_hat) * w_bar
    x_bar = ifft2(x_hat_bar, workers) * m_in ** 2
    return x_bar, f_hat_bar


def scattering_backward(tape: Tape, gbar: ScatteringOutput,
                        need_input_grad: bool = True, workers: int = 1
                        ) -> tuple[list[np.ndarray], np.ndarray | None]:
    """Traverse the scattering DAG in reverse.

    ``gbar`` carries the upstream gradients of the order-0/1/2 maps.  Returns
    a per-filter list of dL/d(psi_hat at full resolution), each summed over
    the batch, plus dL/d(input) when requested.  Order-2 paths accumulate
    into both the first- and second-stage filters.  Accumulation order is
    fixed, so repeated calls are bitwise identical.
    """
    if tape is None:
        raise TapeMissing("forward pass was not run with grad_mode=True")
    fb = tape.fb
    J, L, n = fb.spec.J, fb.spec.L, fb.spec.n
    m_J = n // 2 ** J
    x_hat = tape.x_hat

    psi_bar = [np.zeros((n, n), dtype=complex) for _ in range(fb.n_filters)]
    x_hat_bar = np.zeros_like(x_hat) if need_input_grad else None

    def lowpass_to_yhat(g_real: np.ndarray, r: int) -> np.ndarray:
        # adjoint of: s = Re(ifft2(fold(y_hat * phi_hat[r], J - r)))
        v = fft2(g_real.astype(complex), workers) / m_J ** 2
        return np.conj(fb.phi_hat[r]) * unfold(v, J - r)

    # order 0
    if need_input_grad:
        v = fft2(gbar.order0[:, 0].astype(complex), workers) / m_J ** 2
        x_hat_bar += np.conj(fb.phi_hat[0]) * unfold(v, J)

    order2_by_parent: dict[int, list[dict]] = {}
    for rec in tape.order2:
        order2_by_parent.setdefault(rec["j1"], []).append(rec)

    for rec1 in tape.order1:
        j1 = rec1["j1"]
        m1 = n // 2 ** j1
        g1 = gbar.order1[:, j1 * L:(j1 + 1) * L]
        y1_hat_bar = lowpass_to_yhat(g1, j1)

        for rec2 in order2_by_parent.get(j1, ()):
            j2 = rec2["j2"]
            m2 = n // 2 ** j2
            b = gbar.order2.shape[0]
            g2 = gbar.order2[:, rec2["channels"]].reshape(b, L, L, m_J, m_J)
            y2_hat_bar = lowpass_to_yhat(g2, j2)
            y2_bar = (ifft2(y2_hat_bar, workers) * m2 ** 2).real
            z2_bar = modulus_backward(rec2["z2"], y2_bar)
            w_bar = _conv_core_backward(z2_bar, j2 - j1, m1, workers)
            psi2 = np.stack([fb.psi_hat[j2 * L + l][j1] for l in range(L)])
            y1_hat_bar += np.einsum("lxy,bklxy->bkxy", np.conj(psi2), w_bar)
            contrib = np.einsum("bkxy,bklxy->lxy", np.conj(rec1["y1_hat"]), w_bar)
            for l in range(L):
                psi_bar_r = contrib[l]
                psi_bar[j2 * L + l] += unfold(psi_bar_r, j1)

        y1_bar = (ifft2(y1_hat_bar, workers) * m1 ** 2).real
        z1_bar = modulus_backward(rec1["z1"], y1_bar)
        w_bar = _conv_core_backward(z1_bar, j1, n, workers)
        psi1 = np.stack([fb.psi_hat[j1 * L + l][0] for l in range(L)])
        if need_input_grad:
            x_hat_bar += (np.conj(psi1)[None] * w_bar).sum(axis=1)
        contrib = (np.conj(x_hat)[:, None] * w_bar).sum(axis=0)
        for l in range(L):
            psi_bar[j1 * L + l] += contrib[l]

    x_bar = None
    if need_input_grad:
        x_bar = (ifft2(x_hat_bar, workers) * n ** 2).real
    return psi_bar, x_bar


def param_chain(psi_hat_grads: list[np.ndarray], fb: FilterBank,
                workers: int = 1) -> GradientSet:
    """Chain dL/d(psi_hat) into the learnable parameters of the bank.

    For Morlet modes, dL/dzeta = sum_w Re[conj(dL/dpsi_hat(w)) *
    DFT(dpsi/dzeta)(w)] per filter; equivariant banks sum the orientation
    gradients of the L offsets into dL/dTheta and likewise pool sigma, xi,
    gamma.  Pixelwise banks bypass the parametric chain: the gradient is the
    (spatial) adjoint DFT of psi_hat_grads itself.
    """
    mode = fb.spec.parameterization
    n = fb.spec.n
    if mode == "pixelwise":
        fields = [ifft2(g, workers) * n ** 2 for g in psi_hat_grads]
        return GradientSet(mode=mode, values=fields)

    g = fb.grid
    per_filter = np.zeros((fb.n_filters, 4))
    for i, p in enumerate(fb.params):
        grads = morlet_param_grads(p, g)
        gh = psi_hat_grads[i]
        # columns follow the param-vector layout (sigma, theta, xi, gamma)
        for col, dfield in ((0, grads.dsigma), (1, grads.dtheta),
                            (2, grads.dxi), (3, grads.dgamma)):
            per_filter[i, col] = np.sum(np.conj(gh) * fft2(dfield, workers)).real
    if mode == "canonical":
        return GradientSet(mode=mode, values=per_filter)
    per_scale = per_filter.reshape(fb.spec.J, fb.spec.L, 4).sum(axis=1)
    return GradientSet(mode="equivariant", values=per_scale)
