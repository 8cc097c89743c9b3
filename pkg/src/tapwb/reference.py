"""Closed-form outlet-flux series for a single-zone TAP reactor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SeriesConfig:
    """Parameters of the analytical curves.

    ``adsorption`` is the dimensionless irreversible-adsorption number k_a',
    multiplying the dimensionless time tau = t D / (eps L^2).
    """

    diffusion: float = 13.5  # cm^2/s
    void: float = 0.4
    length: float = 6.0  # cm
    intensity: float = 1.0  # nmol
    adsorption: float = 0.0
    n_max: int = 100

    def __post_init__(self):
        if self.n_max < 20:
            raise ValueError("n_max must be at least 20")
        if not (self.diffusion > 0 and self.void > 0 and self.length > 0 and self.intensity > 0):
            raise ValueError("physical parameters must be positive")
        if self.adsorption < 0:
            raise ValueError("adsorption number must be >= 0")

    @property
    def time_scale(self) -> float:
        """eps L^2 / D in seconds."""
        return self.void * self.length**2 / self.diffusion


def _series(tau: np.ndarray, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1)[::-1]  # smallest terms first
    sign = np.where(n % 2 == 0, 1.0, -1.0)
    terms = sign * (2 * n + 1) * np.exp(-((n + 0.5) ** 2) * np.pi**2 * tau[..., None])
    return terms.sum(axis=-1)


def diffusion_curve(t, cfg: SeriesConfig) -> np.ndarray:
    """Normalized outlet flux F/N_p (1/s) for pure Knudsen diffusion."""
    return irreversible_adsorption_curve(t, SeriesConfig(cfg.diffusion, cfg.void, cfg.length,
                                                         cfg.intensity, 0.0, cfg.n_max))


def irreversible_adsorption_curve(t, cfg: SeriesConfig) -> np.ndarray:
    """Normalized outlet flux with first-order irreversible uptake, damped by exp(-k_a' tau)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("times must be >= 0")
    tau = t / cfg.time_scale
    out = np.zeros_like(tau)
    pos = tau > 0
    out[pos] = np.pi / cfg.time_scale * _series(tau[pos], cfg.n_max) * np.exp(-cfg.adsorption * tau[pos])
    return out


def adsorption_number(rate_constant: float, sites: float, cfg: SeriesConfig) -> float:
    """k_a' for a step ``A + * -> A*`` with rate constant ``k`` and abundant site density ``sites``.

    With the sink ``-k sites C`` in the gas balance the concentration decays as
    exp(-k sites t / eps), i.e. k_a' = k sites L^2 / D.
    """
    return rate_constant * sites * cfg.length**2 / cfg.diffusion


def truncation_bound(t, cfg: SeriesConfig) -> np.ndarray:
    """Magnitude of the first omitted term of the normalized series."""
    tau = np.asarray(t, dtype=float) / cfg.time_scale
    n = cfg.n_max + 1
    return np.pi / cfg.time_scale * (2 * n + 1) * np.exp(-((n + 0.5) ** 2) * np.pi**2 * tau)
