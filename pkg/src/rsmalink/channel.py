"""Rayleigh block-fading channels with additive estimation error.

The true channel of each user is the sum of an estimate and an error,
both with i.i.d. circularly symmetric complex Gaussian entries: the
estimate carries per-entry variance sigma_k^2 - sigma_e^2 and the error
sigma_e^2.  One realization is held constant for a whole block of
symbols; successive blocks are independent draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractError


def _per_user(value, k: int, key: str) -> tuple[float, ...]:
    """Broadcast a scalar (or validate a length-K sequence) of positives."""
    if np.isscalar(value):
        values = (float(value),) * k
    else:
        values = tuple(float(v) for v in value)
        if len(values) != k:
            raise ConfigError(f"{key}: expected {k} entries, got {len(values)}")
    return values


@dataclass
class SystemConfig:
    """Static parameters of one downlink deployment.

    Args:
        nt: transmit antennas.
        k: number of single-antenna users.
        pt: transmit power budget (linear).
        noise_power: per-user receiver noise variance (scalar broadcasts);
            zero selects the noiseless mode.
        sigma_sq: per-user channel amplitude power (scalar broadcasts).
        alpha: CSI quality exponent; the estimation error power is
            pt ** -alpha, capped at sigma_sq.
        common_mod: constellation name of the common stream.
        private_mods: constellation names of the K private streams.
        rng_seed: base seed for reproducible draws.
    """

    nt: int
    k: int
    pt: float
    noise_power: tuple[float, ...] = 1.0
    sigma_sq: tuple[float, ...] = 1.0
    alpha: float = 0.6
    common_mod: str = "qpsk"
    private_mods: tuple[str, ...] = ()
    rng_seed: int = 0

    def __post_init__(self):
        if self.nt < 1:
            raise ConfigError(f"nt: must be >= 1, got {self.nt}")
        if self.k < 1:
            raise ConfigError(f"k: must be >= 1, got {self.k}")
        if self.pt <= 0:
            raise ConfigError(f"pt: must be > 0, got {self.pt}")
        if self.alpha < 0:
            raise ConfigError(f"alpha: must be >= 0, got {self.alpha}")
        self.noise_power = _per_user(self.noise_power, self.k, "noise_power")
        self.sigma_sq = _per_user(self.sigma_sq, self.k, "sigma_sq")
        if any(v < 0 for v in self.noise_power):
            raise ConfigError("noise_power: entries must be >= 0")
        if any(v <= 0 for v in self.sigma_sq):
            raise ConfigError("sigma_sq: entries must be > 0")
        if isinstance(self.private_mods, str):
            self.private_mods = (self.private_mods,) * self.k
        elif not self.private_mods:
            self.private_mods = ("qpsk",) * self.k
        else:
            self.private_mods = tuple(self.private_mods)
            if len(self.private_mods) != self.k:
                raise ConfigError(
                    f"private_mods: expected {self.k} entries, got {len(self.private_mods)}")


def csi_error_power(pt: float, alpha: float, sigma_sq: float = 1.0) -> float:
    """Estimation error power pt ** -alpha, capped at the channel power."""
    if pt <= 0:
        raise ConfigError(f"pt: must be > 0, got {pt}")
    return min(pt ** -alpha, sigma_sq)


@dataclass(eq=False)
class ChannelRealization:
    """One block-fading draw: true channel, estimate, and their difference.

    ``h == hhat + htilde`` holds exactly by construction.  ``hhat_rx`` is
    the receiver-side estimate: identical to ``hhat`` unless the draw was
    made with independent transmitter/receiver estimation errors.
    """

    h: np.ndarray
    hhat: np.ndarray
    htilde: np.ndarray
    sigma_e_sq: tuple[float, ...]
    hhat_rx: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.hhat_rx is None:
            self.hhat_rx = self.hhat

    @property
    def htilde_rx(self) -> np.ndarray:
        return self.h - self.hhat_rx


def _cscg(rng: np.random.Generator, shape, variance) -> np.ndarray:
    """CSCG samples; the variance splits evenly across real and imaginary parts."""
    std = np.sqrt(np.asarray(variance, dtype=float) / 2.0)
    return std * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def draw_channel(cfg: SystemConfig, rng: np.random.Generator,
                 sigma_e_sq: Sequence[float] | float | None = None,
                 independent_rx_estimate: bool = False) -> ChannelRealization:
    """Draw one block-fading realization of all K user channels.

    Estimate and error are sampled independently with per-entry variances
    sigma_k^2 - sigma_e^2 and sigma_e^2; the true channel is their sum.

    Args:
        sigma_e_sq: per-user error power override (defaults to
            ``csi_error_power(cfg.pt, cfg.alpha)`` capped per user; pass 0
            for the perfect-CSI case).
        independent_rx_estimate: when True, also draw a receiver-side
            estimate whose error is conditionally independent of the
            transmitter's given the true channel, with the same marginal
            statistics.

    Raises:
        ConfigError: if any error power exceeds the channel power.
    """
    if sigma_e_sq is None:
        sig_e = tuple(csi_error_power(cfg.pt, cfg.alpha, s) for s in cfg.sigma_sq)
    else:
        sig_e = _per_user(sigma_e_sq, cfg.k, "sigma_e_sq")
    for k, (se, sk) in enumerate(zip(sig_e, cfg.sigma_sq)):
        if not 0.0 <= se <= sk:
            raise ConfigError(f"sigma_e_sq: user {k} has {se} outside [0, {sk}]")

    sig_e_arr = np.asarray(sig_e)
    sig_k_arr = np.asarray(cfg.sigma_sq)
    shape = (cfg.nt, cfg.k)

    hhat = _cscg(rng, shape, sig_k_arr - sig_e_arr)
    htilde = _cscg(rng, shape, sig_e_arr)
    h = hhat + htilde

    hhat_rx = None
    if independent_rx_estimate:
        # Conditional draw given h: keeps the estimate/error marginals of
        # the additive model while sharing the same true channel.
        rho = sig_e_arr / sig_k_arr
        w = _cscg(rng, shape, sig_e_arr * (1.0 - rho))
        hhat_rx = (1.0 - rho) * h + w

    return ChannelRealization(h=h, hhat=hhat, htilde=htilde,
                              sigma_e_sq=sig_e, hhat_rx=hhat_rx)


def synthesize_received(h: np.ndarray, precoder, s: np.ndarray,
                        noise_power, rng: np.random.Generator | None = None) -> np.ndarray:
    """Form the per-user received samples y_k = h_k^H P s + n_k.

    Args:
        h: (nt, K) true channel matrix.
        precoder: (nt, K+1) matrix or an object with a ``matrix`` attribute.
        s: symbol vector (K+1,) or block (K+1, L) from unit-energy alphabets.
        noise_power: per-user noise variance; 0 selects the noiseless mode.
        rng: required unless every noise power is zero.

    Returns:
        (K,) or (K, L) complex received samples.
    """
    p = np.asarray(getattr(precoder, "matrix", precoder))
    h = np.asarray(h)
    s = np.asarray(s)
    nt, k = h.shape
    if p.shape != (nt, k + 1):
        raise ContractError(f"precoder shape {p.shape} does not match channel ({nt}, {k + 1})")
    if s.shape[0] != k + 1:
        raise ContractError(f"symbol vector has {s.shape[0]} streams, expected {k + 1}")

    clean = h.conj().T @ p @ s
    noise = np.asarray(_per_user(noise_power, k, "noise_power"))
    if np.all(noise == 0):
        return clean
    if rng is None:
        raise ContractError("rng is required when noise_power > 0")
    n_shape = (k,) if s.ndim == 1 else (k, s.shape[1])
    var = noise if s.ndim == 1 else noise[:, None]
    return clean + _cscg(rng, n_shape, var)
