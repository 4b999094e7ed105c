"""Forward scattering transform up to order 2.

All convolutions are circular and run through one FFT pipeline: pointwise
frequency product, periodization (block mean, equivalent to spatial
decimation) and inverse transform.  Given a bank with J scales and L
orientations, an n-by-n input produces maps of size (n/2^J)^2 with

    1 channel at order 0,
    J*L channels at order 1 (scale-major, orientation-minor),
    L^2 * J*(J-1)/2 channels at order 2 (lexicographic in (j1, l1, j2, l2),
    keeping only pairs with j1 < j2).

Order-1 channels apply |x * psi_(j1,l1)| with intermediate decimation by
2^j1, then smooth with the low-pass and decimate down to 2^J total.  Order-2
channels insert a second wavelet-modulus stage before the smoothing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .filterbank import FilterBank
from .fourier import fft2, fold, ifft2


class ShapeMismatch(ValueError):
    """Input dimensions do not match the bank or filter resolution."""


@dataclass
class ScatteringOutput:
    """Order-0/1/2 feature maps plus the channel -> path bookkeeping."""

    order0: np.ndarray  # (B, 1, m, m)
    order1: np.ndarray  # (B, J*L, m, m)
    order2: np.ndarray  # (B, L^2*J*(J-1)/2, m, m)
    paths: list[tuple]  # per channel: (), (j1, l1) or (j1, l1, j2, l2)
    J: int
    L: int

    def stack(self) -> np.ndarray:
        """All orders concatenated along the channel axis."""
        return np.concatenate([self.order0, self.order1, self.order2], axis=1)

    @property
    def n_channels(self) -> int:
        return self.order0.shape[1] + self.order1.shape[1] + self.order2.shape[1]


@dataclass
class Tape:
    """Intermediate fields of one grad-mode forward pass.

    Order-1 records are one per scale j1 and hold stacked per-orientation
    fields; order-2 records are one per (j1, j2) pair.  ``channels`` in the
    order-2 records maps the record's flattened (l1, l2) slots to channel
    indices of ``ScatteringOutput.order2`` (which is path-lexicographic).
    """

    x_hat: np.ndarray                      # (B, n, n)
    fb: FilterBank
    order1: list[dict] = field(default_factory=list)
    order2: list[dict] = field(default_factory=list)


def conv_fft(x: np.ndarray, f_hat: np.ndarray, r: int = 0,
             workers: int = 1) -> np.ndarray:
    """Circular convolution of x with the filter given in frequency domain,
    decimated by 2^r (via frequency periodization).  Output is complex at
    resolution m/2^r for m-by-m inputs; leading axes of x are batch axes."""
    x = np.asarray(x)
    m = x.shape[-1]
    if x.ndim < 2 or x.shape[-2] != m:
        raise ShapeMismatch(f"expected square trailing axes, got {x.shape}")
    if f_hat.shape != (m, m):
        raise ShapeMismatch(f"filter shape {f_hat.shape} != grid {(m, m)}")
    if m % (2 ** r):
        raise ShapeMismatch(f"2^r = {2 ** r} must divide {m}")
    return ifft2(fold(fft2(x, workers) * f_hat, r), workers)


def _path_table(J: int, L: int) -> tuple[list[tuple], np.ndarray]:
    """Channel paths in output order plus the permutation taking the
    computation order of order-2 blocks (j1, j2, l1, l2) to lexicographic
    (j1, l1, j2, l2)."""
    paths: list[tuple] = [()]
    for j1 in range(J):
        for l1 in range(L):
            paths.append((j1, l1))
    compute_order = [(j1, l1, j2, l2)
                     for j1 in range(J) for j2 in range(j1 + 1, J)
                     for l1 in range(L) for l2 in range(L)]
    perm = np.array(sorted(range(len(compute_order)),
                           key=lambda i: compute_order[i]), dtype=int)
    paths.extend(sorted(compute_order))
    return paths, perm


def forward(batch: np.ndarray, fb: FilterBank, grad_mode: bool = False,
            workers: int = 1) -> tuple[ScatteringOutput, Tape | None]:
    """Scattering transform of a batch of real n-by-n images.

    Accepts (n, n) or (B, n, n) input; output maps have resolution n/2^J.
    With ``grad_mode`` a Tape of intermediate fields is returned for
    reverse-mode differentiation.
    """
    fb.ensure_realized()
    J, L, n = fb.spec.J, fb.spec.L, fb.spec.n
    x = np.asarray(batch, dtype=float)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[-2:] != (n, n):
        raise ShapeMismatch(f"expected (B, {n}, {n}) input, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")

    x_hat = fft2(x, workers)
    tape = Tape(x_hat=x_hat, fb=fb) if grad_mode else None

    s0 = ifft2(fold(x_hat * fb.phi_hat[0], J), workers).real[:, None]

    order1_blocks = []
    order2_blocks = []
    y1_hat_by_scale = {}
    for j1 in range(J):
        psi1 = np.stack([fb.psi_hat[j1 * L + l][0] for l in range(L)])
        z1 = ifft2(fold(x_hat[:, None] * psi1[None], j1), workers)
        y1 = np.abs(z1)
        y1_hat = fft2(y1, workers)
        y1_hat_by_scale[j1] = y1_hat
        s1 = ifft2(fold(y1_hat * fb.phi_hat[j1], J - j1), workers).real
        order1_blocks.append(s1)
        if grad_mode:
            tape.order1.append({"j1": j1, "z1": z1, "y1_hat": y1_hat})
        for j2 in range(j1 + 1, J):
            psi2 = np.stack([fb.psi_hat[j2 * L + l][j1] for l in range(L)])
            z2 = ifft2(fold(y1_hat[:, :, None] * psi2[None, None], j2 - j1),
                       workers)
            y2_hat = fft2(np.abs(z2), workers)
            s2 = ifft2(fold(y2_hat * fb.phi_hat[j2], J - j2), workers).real
            b, m = s2.shape[0], s2.shape[-1]
            order2_blocks.append(s2.reshape(b, L * L, m, m))
            if grad_mode:
                tape.order2.append({"j1": j1, "j2": j2, "z2": z2,
                                    "y2_hat": y2_hat})

    paths, perm = _path_table(J, L)
    m = n // 2 ** J
    b = x.shape[0]
    if order2_blocks:
        order2 = np.concatenate(order2_blocks, axis=1)[:, perm]
    else:
        order2 = np.zeros((b, 0, m, m))
    if grad_mode:
        # channel slots of each (j1, j2) record inside the permuted order2
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        start = 0
        for rec in tape.order2:
            rec["channels"] = inv[start:start + L * L]
            start += L * L
    out = ScatteringOutput(
        order0=s0,
        order1=np.concatenate(order1_blocks, axis=1),
        order2=order2,
        paths=paths, J=J, L=L)
    return out, tape


def scatter0(x: np.ndarray, fb: FilterBank, workers: int = 1) -> np.ndarray:
    """Order-0 maps: low-pass then decimation by 2^J."""
    fb.ensure_realized()
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.shape[-2:] != (fb.spec.n,) * 2:
        raise ShapeMismatch(f"input {x.shape} does not match n = {fb.spec.n}")
    out = ifft2(fold(fft2(x, workers) * fb.phi_hat[0], fb.spec.J), workers).real
    return out[0] if squeeze else out[:, None]


def scatter1(x: np.ndarray, fb: FilterBank, workers: int = 1) -> np.ndarray:
    """Order-1 maps only (scale-major, orientation-minor channel order)."""
    out, _ = forward(x, fb, workers=workers)
    return out.order1


def scatter2(x: np.ndarray, fb: FilterBank, workers: int = 1) -> np.ndarray:
    """Order-2 maps only (lexicographic (j1, l1, j2, l2), j1 < j2)."""
    out, _ = forward(x, fb, workers=workers)
    return out.order2


def save_output(out: ScatteringOutput, path_prefix: str) -> tuple[str, str]:
    """Write the stacked tensor as little-endian float64 plus a JSON sidecar
    with the shape and path table.  Returns (binary path, sidecar path)."""
    data = out.stack().astype("<f8")
    bin_path = f"{path_prefix}.bin"
    meta_path = f"{path_prefix}.json"
    with open(bin_path, "wb") as fh:
        fh.write(np.ascontiguousarray(data).tobytes())
    meta = {
        "shape": list(data.shape),
        "dtype": "<f8",
        "path_table": [list(p) for p in out.paths],
        "orders": {"order0": 1, "order1": out.order1.shape[1],
                   "order2": out.order2.shape[1]},
    }
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return bin_path, meta_path
