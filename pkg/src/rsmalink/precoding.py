"""Linear precoder construction and SINR/rate accounting.

The precoder matrix stacks the common-stream column first, followed by
one column per private stream, under a total transmit power budget.
Common-stream SINR treats every private stream as interference; the
private SINR assumes the common stream was cancelled and treats the
other users' private streams as interference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, DegenerateChannelError

STRATEGIES = ("svd_rzf", "mrt_rzf")

POWER_TOL = 1e-9


@dataclass(eq=False)
class PrecoderMatrix:
    """Stacked precoder [p_common, p_1, ..., p_K] under a power budget."""

    matrix: np.ndarray
    pt: float
    common_fraction: float

    def __post_init__(self):
        used = float(np.trace(self.matrix @ self.matrix.conj().T).real)
        if used > self.pt * (1.0 + POWER_TOL) + POWER_TOL:
            raise ContractError(f"precoder power {used} exceeds budget {self.pt}")

    @property
    def num_users(self) -> int:
        return self.matrix.shape[1] - 1

    @property
    def p_common(self) -> np.ndarray:
        return self.matrix[:, 0]

    def p_private(self, user: int) -> np.ndarray:
        return self.matrix[:, user + 1]

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.matrix) ** 2))


def _rzf_directions(hhat: np.ndarray, reg: float) -> np.ndarray:
    """Unit-norm regularized channel-inversion columns for the private streams."""
    k = hhat.shape[1]
    gram = hhat.conj().T @ hhat + reg * np.eye(k)
    dirs = hhat @ np.linalg.inv(gram)
    norms = np.linalg.norm(dirs, axis=0)
    if np.any(norms == 0):
        raise DegenerateChannelError("zero column in regularized inversion")
    return dirs / norms


def build_precoder(hhat: np.ndarray, pt: float, common_fraction: float = 0.5,
                   strategy: str = "svd_rzf", noise_power: float = 1.0) -> PrecoderMatrix:
    """Build a precoder from the transmitter's channel estimate.

    The common column points along the dominant left singular vector of
    the estimate ("svd_rzf") or along the users' summed channels
    ("mrt_rzf") and carries ``common_fraction * pt``; the private columns
    are regularized zero-forcing directions (regularization
    K * noise_power / pt) splitting the remaining power equally.  The
    budget is spent with equality.

    Raises:
        DegenerateChannelError: if the estimate is the zero matrix.
        ConfigError: for an unknown strategy or a fraction outside [0, 1].
    """
    hhat = np.asarray(hhat, dtype=complex)
    if hhat.ndim != 2:
        raise ContractError(f"channel estimate must be 2-D, got shape {hhat.shape}")
    if not 0.0 <= common_fraction <= 1.0:
        raise ConfigError(f"common_fraction: must lie in [0, 1], got {common_fraction}")
    if strategy not in STRATEGIES:
        raise ConfigError(f"strategy: unknown {strategy!r}, expected one of {STRATEGIES}")
    if pt <= 0:
        raise ConfigError(f"pt: must be > 0, got {pt}")
    if not np.any(hhat):
        raise DegenerateChannelError("channel estimate is the zero matrix")

    nt, k = hhat.shape

    if common_fraction > 0.0:
        if strategy == "svd_rzf":
            u, _, _ = np.linalg.svd(hhat, full_matrices=False)
            common_dir = u[:, 0]
        else:
            summed = hhat.sum(axis=1)
            norm = np.linalg.norm(summed)
            if norm == 0:
                raise DegenerateChannelError("user channels cancel; no matched direction")
            common_dir = summed / norm
        p_common = common_dir * np.sqrt(common_fraction * pt)
    else:
        p_common = np.zeros(nt, dtype=complex)

    private_power = (1.0 - common_fraction) * pt / k
    if private_power > 0.0:
        reg = k * noise_power / pt
        privates = _rzf_directions(hhat, reg) * np.sqrt(private_power)
    else:
        privates = np.zeros((nt, k), dtype=complex)

    matrix = np.concatenate([p_common[:, None], privates], axis=1)
    return PrecoderMatrix(matrix=matrix, pt=pt, common_fraction=common_fraction)


def _stream_gains(h_k: np.ndarray, precoder) -> np.ndarray:
    p = np.asarray(getattr(precoder, "matrix", precoder))
    h_k = np.asarray(h_k).reshape(-1)
    if h_k.shape[0] != p.shape[0]:
        raise ContractError(f"channel length {h_k.shape[0]} does not match precoder rows {p.shape[0]}")
    return np.abs(h_k.conj() @ p) ** 2


def sinr_common(h_k: np.ndarray, precoder, noise_power: float) -> float:
    """Common-stream SINR at one user; all K private streams interfere."""
    if noise_power <= 0:
        raise ConfigError(f"noise_power: must be > 0, got {noise_power}")
    gains = _stream_gains(h_k, precoder)
    return float(gains[0] / (gains[1:].sum() + noise_power))


def sinr_private(h_k: np.ndarray, precoder, user: int, noise_power: float) -> float:
    """Private-stream SINR after common cancellation; other users interfere."""
    if noise_power <= 0:
        raise ConfigError(f"noise_power: must be > 0, got {noise_power}")
    gains = _stream_gains(h_k, precoder)
    interference = gains[1:].sum() - gains[user + 1]
    return float(gains[user + 1] / (interference + noise_power))


@dataclass(eq=False)
class RateReport:
    """Per-user SINRs and Shannon rates; the common rate is the user minimum."""

    gamma_common: np.ndarray
    gamma_private: np.ndarray
    rate_common_per_user: np.ndarray
    rate_private: np.ndarray
    rate_common: float


def rates(gamma_common, gamma_private) -> RateReport:
    """Map SINRs to rates log2(1 + gamma); the common rate takes the minimum."""
    gc = np.asarray(gamma_common, dtype=float)
    gp = np.asarray(gamma_private, dtype=float)
    if np.any(gc < 0) or np.any(gp < 0):
        raise ContractError("SINRs must be non-negative")
    rc = np.log2(1.0 + gc)
    rp = np.log2(1.0 + gp)
    return RateReport(gamma_common=gc, gamma_private=gp,
                      rate_common_per_user=rc, rate_private=rp,
                      rate_common=float(rc.min()))


def rate_report(h: np.ndarray, precoder, noise_power) -> RateReport:
    """Convenience: SINRs of every user from a channel matrix, then rates."""
    h = np.asarray(h)
    k = h.shape[1]
    noise = noise_power if not np.isscalar(noise_power) else [noise_power] * k
    gc = [sinr_common(h[:, i], precoder, noise[i]) for i in range(k)]
    gp = [sinr_private(h[:, i], precoder, i, noise[i]) for i in range(k)]
    return rates(gc, gp)
