"""Scattering filterbanks: initialization schemes, parameterization modes,
the Gaussian low-pass, and multi-resolution frequency-domain realizations.

A bank holds J*L band-pass filters indexed scale-major (filter i has scale
j = i // L and orientation slot l = i % L) plus one low-pass.  Three
parameterization modes are supported:

* ``canonical``    - every filter owns its four Morlet parameters;
* ``equivariant``  - one (sigma, xi, gamma, Theta) tuple per scale, the L
                     orientations being Theta + k*pi/L for k = 0..L-1;
* ``pixelwise``    - every complex filter coefficient is free (initialized
                     by sampling Morlet filters, then updated per pixel).

Realized filters are the 2D DFTs of the sampled spatial fields, periodized
to every resolution n/2^r at which the scattering cascade applies them.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np

from .fourier import fft2, fold
from .morlet import GridSpec, MorletParams, morlet_beta, morlet_sample

PARAMETERIZATIONS = ("canonical", "equivariant", "pixelwise")
INITS = ("tight_frame", "random")

# Tight-frame constants: sigma and xi follow the dyadic progression of the
# standard mother-wavelet construction, gamma fixes the angular bandwidth.
TF_SIGMA0 = 0.8
TF_XI0 = 3.0 * np.pi / 4.0


@dataclass(frozen=True)
class FilterbankSpec:
    """Static description of a bank: J scales, L orientations, grid size n."""

    J: int
    L: int
    n: int
    parameterization: str = "canonical"
    init: str = "tight_frame"
    seed: int = 0

    def __post_init__(self):
        if self.J < 1 or self.L < 1:
            raise ValueError("J and L must be >= 1")
        if self.n % (2 ** self.J):
            raise ValueError(f"2^J = {2 ** self.J} must divide n = {self.n}")
        if self.parameterization not in PARAMETERIZATIONS:
            raise ValueError(f"unknown parameterization {self.parameterization!r}")
        if self.init not in INITS:
            raise ValueError(f"unknown init {self.init!r}")
        GridSpec(self.n)  # side validation


@dataclass
class EquivariantParams:
    """Per-scale parameters shared by the L orientations of that scale.

    ``theta_base`` is the orientation of the k = 0 filter; the bank expands
    scale j into orientations theta_base[j] + k*pi/L.
    """

    sigma: np.ndarray
    xi: np.ndarray
    gamma: np.ndarray
    theta_base: np.ndarray

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.theta_base = np.asarray(self.theta_base, dtype=float)


def tight_frame_init(J: int, L: int) -> list[MorletParams]:
    """Standard dilated/rotated construction: for scale j = 0..J-1 and slot
    l = 0..L-1, sigma = 0.8*2^j, xi = (3pi/4)*2^-j, gamma = 4/L and theta
    equally spaced on [0, pi)."""
    out = []
    for j in range(J):
        for l in range(L):
            out.append(MorletParams(
                sigma=TF_SIGMA0 * 2.0 ** j,
                theta=l * np.pi / L,
                xi=TF_XI0 * 2.0 ** (-j),
                gamma=4.0 / L,
            ))
    return out


def _stream(seed: int, index: int) -> np.random.Generator:
    # One PCG64 stream per filter index: adding filters never reshuffles
    # the draws of earlier indices.
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(index,))))


def _random_draw(rng: np.random.Generator) -> tuple[float, float, float, float]:
    # sigma = log(u) with u uniform on [e, e^5] puts an exponential density
    # on [1, 5]; xi sits mid-band between aliasing and the fundamental.
    sigma = float(np.log(rng.uniform(np.e, np.exp(5.0))))
    xi = float(rng.uniform(0.5, 1.0))
    gamma = float(rng.uniform(0.5, 1.5))
    theta = float(rng.uniform(0.0, 2.0 * np.pi))
    return sigma, theta, xi, gamma


def random_init(J: int, L: int, seed: int) -> list[MorletParams]:
    """Random initialization with per-filter RNG streams (PCG64)."""
    out = []
    for i in range(J * L):
        sigma, theta, xi, gamma = _random_draw(_stream(seed, i))
        out.append(MorletParams(sigma=sigma, theta=theta, xi=xi, gamma=gamma))
    return out


def tight_frame_equivariant_init(J: int, L: int) -> EquivariantParams:
    return EquivariantParams(
        sigma=TF_SIGMA0 * 2.0 ** np.arange(J),
        xi=TF_XI0 * 2.0 ** -np.arange(J, dtype=float),
        gamma=np.full(J, 4.0 / L),
        theta_base=np.zeros(J),
    )


def random_equivariant_init(J: int, L: int, seed: int) -> EquivariantParams:
    # Per-scale streams, same distributions as the canonical random init.
    draws = [_random_draw(_stream(seed, j)) for j in range(J)]
    sigma, theta, xi, gamma = (np.array(col) for col in zip(*draws))
    return EquivariantParams(sigma=sigma, xi=xi, gamma=gamma, theta_base=theta)


def equivariant_expand(eq: EquivariantParams, L: int) -> list[MorletParams]:
    """Expand per-scale tuples into J*L filters with pi/L orientation offsets."""
    out = []
    for j in range(len(eq.sigma)):
        for k in range(L):
            out.append(MorletParams(
                sigma=eq.sigma[j],
                theta=eq.theta_base[j] + k * np.pi / L,
                xi=eq.xi[j],
                gamma=eq.gamma[j],
            ))
    return out


def build_lowpass(J: int, n: int) -> np.ndarray:
    """Gaussian low-pass of window scale 2^J, normalized to unit sum.

    The width continues the mother-wavelet progression one step past the
    coarsest wavelet: sigma_phi = 0.8 * 2^(J-1).
    """
    if n % (2 ** J):
        raise ValueError(f"2^J = {2 ** J} must divide n = {n}")
    u1, u2 = GridSpec(n).coords()
    sigma_phi = TF_SIGMA0 * 2.0 ** (J - 1)
    phi = np.exp(-(u1 * u1 + u2 * u2) / (2.0 * sigma_phi ** 2))
    return phi / phi.sum()


def pixelwise_init_from(params: list[MorletParams], g: GridSpec) -> list[np.ndarray]:
    """Copy sampled Morlet fields into free per-pixel complex filters."""
    return [morlet_sample(p, g).astype(complex) for p in params]


class FilterBank:
    """Mutable filterbank with lazily regenerated frequency realizations.

    Use :meth:`realize` (or rely on :meth:`ensure_realized`) after mutating
    parameters; realized fields are exposed as ``psi_hat[i][r]`` (filter i at
    resolution r, valid for r = 0..scale(i)) and ``phi_hat[r]`` (r = 0..J).
    Mutation is not thread-safe; realized fields may be shared read-only.
    """

    def __init__(self, spec: FilterbankSpec):
        self.spec = spec
        g = self.grid
        if spec.parameterization == "equivariant":
            if spec.init == "tight_frame":
                self.equivariant = tight_frame_equivariant_init(spec.J, spec.L)
            else:
                self.equivariant = random_equivariant_init(spec.J, spec.L, spec.seed)
            self.fields = None
        elif spec.parameterization == "pixelwise":
            base = (tight_frame_init(spec.J, spec.L) if spec.init == "tight_frame"
                    else random_init(spec.J, spec.L, spec.seed))
            self.fields = pixelwise_init_from(base, g)
            self.equivariant = None
        else:
            self._params = (tight_frame_init(spec.J, spec.L) if spec.init == "tight_frame"
                            else random_init(spec.J, spec.L, spec.seed))
            self.fields = None
            self.equivariant = None
        self.psi_hat: list[dict[int, np.ndarray]] = []
        self.phi_hat: dict[int, np.ndarray] = {}
        self.lowpass = build_lowpass(spec.J, spec.n)
        self.betas: list[complex] = []
        self._dirty = True

    # -- indexing ----------------------------------------------------------

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.spec.n)

    @property
    def n_filters(self) -> int:
        return self.spec.J * self.spec.L

    def scale(self, i: int) -> int:
        return i // self.spec.L

    @property
    def params(self) -> list[MorletParams]:
        """Per-filter Morlet parameters (expanded for equivariant banks).

        Raises for pixelwise banks, whose filters have no parametric form.
        """
        if self.spec.parameterization == "equivariant":
            return equivariant_expand(self.equivariant, self.spec.L)
        if self.spec.parameterization == "pixelwise":
            raise ValueError("pixelwise banks carry raw fields, not Morlet params")
        return self._params

    @params.setter
    def params(self, new: list[MorletParams]):
        if self.spec.parameterization != "canonical":
            raise ValueError("only canonical banks accept a params list")
        if len(new) != self.n_filters:
            raise ValueError(f"expected {self.n_filters} params, got {len(new)}")
        self._params = list(new)
        self.mark_dirty()

    def spatial_filter(self, i: int) -> np.ndarray:
        if self.spec.parameterization == "pixelwise":
            return self.fields[i]
        return morlet_sample(self.params[i], self.grid)

    # -- realization -------------------------------------------------------

    def mark_dirty(self):
        self._dirty = True

    @property
    def dirty(self) -> bool:
        return self._dirty

    def realize(self) -> "FilterBank":
        """(Re)build frequency-domain realizations at every used resolution."""
        g = self.grid
        params = None if self.spec.parameterization == "pixelwise" else self.params
        self.betas = ([] if params is None
                      else [morlet_beta(p, g) for p in params])
        self.psi_hat = []
        for i in range(self.n_filters):
            psi = (self.fields[i] if params is None
                   else morlet_sample(params[i], g))
            full = fft2(psi)
            self.psi_hat.append({r: fold(full, r) for r in range(self.scale(i) + 1)})
        phi_full = fft2(self.lowpass)
        self.phi_hat = {r: fold(phi_full, r) for r in range(self.spec.J + 1)}
        self._dirty = False
        return self

    def ensure_realized(self) -> "FilterBank":
        if self._dirty:
            self.realize()
        return self

    # -- flat parameter vector (optimizer interface) ------------------------

    def param_vector(self) -> np.ndarray:
        """Learnable scalars as one float vector.

        Layout: canonical -> (sigma, theta, xi, gamma) per filter;
        equivariant -> (sigma, theta_base, xi, gamma) per scale;
        pixelwise -> (all real parts, all imaginary parts) per filter.
        """
        mode = self.spec.parameterization
        if mode == "canonical":
            return np.array([v for p in self._params
                             for v in (p.sigma, p.theta, p.xi, p.gamma)])
        if mode == "equivariant":
            eq = self.equivariant
            return np.stack([eq.sigma, eq.theta_base, eq.xi, eq.gamma], axis=1).ravel()
        return np.concatenate([np.concatenate([f.real.ravel(), f.imag.ravel()])
                               for f in self.fields])

    def set_param_vector(self, vec: np.ndarray):
        vec = np.asarray(vec, dtype=float)
        mode = self.spec.parameterization
        if mode == "canonical":
            quads = vec.reshape(self.n_filters, 4)
            self._params = [MorletParams(*q) for q in quads]
        elif mode == "equivariant":
            quads = vec.reshape(self.spec.J, 4)
            self.equivariant = EquivariantParams(
                sigma=np.maximum(quads[:, 0], 1e-6),
                theta_base=quads[:, 1],
                xi=quads[:, 2],
                gamma=np.maximum(quads[:, 3], 1e-6),
            )
        else:
            n2 = self.spec.n ** 2
            per = 2 * n2
            fields = []
            for i in range(self.n_filters):
                chunk = vec[i * per:(i + 1) * per]
                fields.append((chunk[:n2] + 1j * chunk[n2:]).reshape(self.spec.n, self.spec.n))
            self.fields = fields
        self.mark_dirty()

    def clamp_mask(self) -> np.ndarray:
        """True at vector positions that must stay >= 1e-6 (sigma, gamma)."""
        mode = self.spec.parameterization
        if mode == "pixelwise":
            return np.zeros(self.param_vector().size, dtype=bool)
        rows = self.n_filters if mode == "canonical" else self.spec.J
        mask = np.zeros((rows, 4), dtype=bool)
        mask[:, 0] = True  # sigma
        mask[:, 3] = True  # gamma
        return mask.ravel()


def littlewood_paley(fb: FilterBank) -> tuple[float, float, np.ndarray]:
    """Frame-bound diagnostic 0.5*sum_i |psi_hat_i|^2 + |phi_hat|^2 at full
    resolution.  Returns (min, max, field); no threshold is enforced."""
    fb.ensure_realized()
    lp = np.abs(fb.phi_hat[0]) ** 2
    for levels in fb.psi_hat:
        lp = lp + 0.5 * np.abs(levels[0]) ** 2
    return float(lp.min()), float(lp.max()), lp


# -- serialization ----------------------------------------------------------


def _encode_field(f: np.ndarray) -> str:
    # interleaved (re, im) float64, little-endian, row-major
    return base64.b64encode(np.ascontiguousarray(f.astype("<c16")).tobytes()).decode()


def _decode_field(s: str, n: int) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype="<c16").reshape(n, n).copy()


def bank_to_dict(fb: FilterBank) -> dict:
    spec = fb.spec
    doc = {
        "J": spec.J, "L": spec.L, "n": spec.n,
        "parameterization": spec.parameterization,
        "init": spec.init, "seed": spec.seed,
    }
    if spec.parameterization == "pixelwise":
        doc["fields"] = [_encode_field(f) for f in fb.fields]
    elif spec.parameterization == "equivariant":
        eq = fb.equivariant
        doc["params"] = [
            {"sigma": float(eq.sigma[j]), "theta": float(eq.theta_base[j]),
             "xi": float(eq.xi[j]), "gamma": float(eq.gamma[j])}
            for j in range(spec.J)]
    else:
        doc["params"] = [
            {"sigma": p.sigma, "theta": p.theta, "xi": p.xi, "gamma": p.gamma}
            for p in fb.params]
    return doc


def bank_from_dict(doc: dict) -> FilterBank:
    spec = FilterbankSpec(
        J=doc["J"], L=doc["L"], n=doc["n"],
        parameterization=doc["parameterization"],
        init=doc["init"], seed=doc["seed"])
    fb = FilterBank(spec)
    if spec.parameterization == "pixelwise":
        fb.fields = [_decode_field(s, spec.n) for s in doc["fields"]]
    elif spec.parameterization == "equivariant":
        rows = doc["params"]
        fb.equivariant = EquivariantParams(
            sigma=np.array([r["sigma"] for r in rows]),
            xi=np.array([r["xi"] for r in rows]),
            gamma=np.array([r["gamma"] for r in rows]),
            theta_base=np.array([r["theta"] for r in rows]),
        )
    else:
        fb._params = [MorletParams(r["sigma"], r["theta"], r["xi"], r["gamma"])
                      for r in doc["params"]]
    fb.mark_dirty()
    return fb


def save_bank(fb: FilterBank, path) -> None:
    with open(path, "w") as fh:
        json.dump(bank_to_dict(fb), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_bank(path) -> FilterBank:
    with open(path) as fh:
        return bank_from_dict(json.load(fh))
