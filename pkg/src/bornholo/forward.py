"""K-order scattering recursion and in-line hologram synthesis.

The internal field obeys u_k = u_in + G diag(u_{k-1}) f with u_0 = 0, so
u_1 is exactly the incident field and each further order adds one more
scattering event. The detector sees E = H diag(u_K) f on top of the
unscattered reference; recording intensity gives the hologram.

Synthesis and inversion deliberately use different intensity models: the
simulator squares the total field (self-interference included), while the
reconstruction assumes the linearized record I = u0^2 + 2 u0 Re{E}. The
mismatch is part of the measurement physics, not an implementation choice.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ZeroIncidentField
from .grid import (
    Hologram2D,
    InternalField,
    PhysicalGrid,
    ScatteredField2D,
    incident_at_hologram,
    incident_plane_wave,
)
from .propagation import PropagationKernels, apply_G, apply_H

FORWARD_MODES = ("full", "forward_only", "first_born")


@dataclass(frozen=True)
class ForwardConfig:
    """Settings of one forward evaluation.

    ``mode`` picks which inter-slice transfers feed the recursion:
    ``"full"`` (both directions), ``"forward_only"`` (toward the detector
    only), or ``"first_born"`` (no inter-slice coupling at all; every order
    collapses to single scattering). ``include_self_interference`` controls
    whether synthesized holograms carry the |E|^2 term.
    """

    order_K: int = 1
    mode: str = "full"
    include_self_interference: bool = True
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.order_K < 1:
            raise ValueError(f"order_K must be >= 1, got {self.order_K}")
        if self.mode not in FORWARD_MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {FORWARD_MODES}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


def born_series(kernels: PropagationKernels, f: np.ndarray, u_in: np.ndarray,
                order_K: int, mode: str = "full") -> list:
    """Field orders u_1 .. u_K as raw arrays (u_1 is u_in itself).

    The returned list is what the solver caches: the gradient recursion
    needs every intermediate order, not just the last.
    """
    if f.shape != u_in.shape:
        raise DimensionMismatch(f"f shape {f.shape} != field shape {u_in.shape}")
    fields = [u_in]
    if mode == "first_born":
        # no inter-slice coupling: every order equals the incident field
        fields.extend(u_in for _ in range(order_K - 1))
        return fields
    for _ in range(order_K - 1):
        fields.append(u_in + apply_G(kernels, fields[-1] * f, mode))
    return fields


def internal_field(kernels: PropagationKernels, f: np.ndarray,
                   config: ForwardConfig,
                   u_in: np.ndarray | None = None) -> InternalField:
    """Highest-order internal field u_K on the object slices."""
    grid = kernels.grid
    if u_in is None:
        u_in = incident_plane_wave(grid).values
    u_K = born_series(kernels, f, u_in, config.order_K, config.mode)[-1]
    return InternalField(grid, u_K, order_k=config.order_K)


def scattered_field(kernels: PropagationKernels, f: np.ndarray,
                    config: ForwardConfig,
                    u_in: np.ndarray | None = None) -> ScatteredField2D:
    """Complex scattered field E = H diag(u_K) f on the hologram plane."""
    u_K = internal_field(kernels, f, config, u_in).values
    E = apply_H(kernels, u_K * f)
    return ScatteredField2D(E, kernels.grid.dx, kernels.grid.dy)


def synthesize_hologram(kernels: PropagationKernels, f: np.ndarray,
                        config: ForwardConfig,
                        rng: np.random.Generator | None = None) -> Hologram2D:
    """Record the in-line hologram of a contrast volume.

    With self-interference the intensity is |u0 + E|^2; without it the
    record is the linearized u0^2 + 2 u0 Re{E} (clipped at zero, since a
    detector cannot report negative intensity). Optional additive Gaussian
    noise of standard deviation ``noise_sigma`` (absolute intensity units,
    background is 1) uses the supplied generator.
    """
    grid = kernels.grid
    u0 = incident_at_hologram(grid)
    E = scattered_field(kernels, f, config).values
    if config.include_self_interference:
        intensity = np.abs(u0 + E) ** 2
    else:
        intensity = np.maximum(u0 ** 2 + 2.0 * u0 * np.real(E), 0.0)
    if config.noise_sigma > 0.0:
        if rng is None:
            raise ValueError("noise_sigma > 0 requires an explicit rng")
        intensity = np.maximum(intensity + config.noise_sigma
                               * rng.standard_normal(intensity.shape), 0.0)
    return Hologram2D(intensity, grid.dx, grid.dy)


def extract_scattered(hologram: Hologram2D, grid: PhysicalGrid,
                      u0: float | None = None) -> np.ndarray:
    """Estimate Re{E} from a recorded hologram under the linearized model.

    Re{E} = (I - u0^2) / (2 u0). Inverting the synthesis model this way
    leaves the self-interference |E|^2 inside the estimate; that residual
    is the model error the reconstruction has to live with. ``u0`` defaults
    to the grid's reference amplitude; pass a calibrated value to override.
    """
    if u0 is None:
        u0 = incident_at_hologram(grid)
    if abs(u0) < 1e-300:
        raise ZeroIncidentField("cannot normalize by a vanishing reference wave")
    if hologram.values.shape != (grid.ny, grid.nx):
        raise DimensionMismatch(
            f"hologram shape {hologram.values.shape} != ({grid.ny}, {grid.nx})")
    return (hologram.values - u0 ** 2) / (2.0 * u0)


def backscatter_difference(kernels: PropagationKernels, f: np.ndarray,
                           order_K: int) -> ScatteredField2D:
    """Detector-plane field the backward transfers add: Re-difference of
    the full and forward-only models at the same order.

    Identically zero at order_K = 1, where no inter-slice transfer has
    happened yet.
    """
    full = scattered_field(kernels, f, ForwardConfig(order_K=order_K, mode="full"))
    fwd = scattered_field(kernels, f, ForwardConfig(order_K=order_K, mode="forward_only"))
    return ScatteredField2D(np.real(full.values) - np.real(fwd.values),
                            kernels.grid.dx, kernels.grid.dy)


def backscatter_fraction(kernels: PropagationKernels, f: np.ndarray,
                         order_K: int) -> float:
    """Energy share the backward transfers carry at the detector:
    ||E_full - E_forward||^2 / ||E_full||^2 at the same order.
    """
    full = scattered_field(kernels, f, ForwardConfig(order_K=order_K, mode="full")).values
    fwd = scattered_field(kernels, f, ForwardConfig(order_K=order_K, mode="forward_only")).values
    denom = float(np.vdot(full, full).real)
    if denom == 0.0:
        return 0.0
    diff = full - fwd
    return float(np.vdot(diff, diff).real) / denom
