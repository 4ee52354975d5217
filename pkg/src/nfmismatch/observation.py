"""Combiners, pilots, noise-free means and noisy observations.

Stacking order of every observation vector: transmission ``g`` slowest, then
subcarrier ``k``, then combiner output ``m`` fastest, i.e. entry
``(g * K + k) * M + m``. Arrays are kept as ``(G, K, M)`` internally and
flattened with C order.

Random numbers come from ``numpy.random.default_rng(seed)`` (PCG64). A Monte
Carlo trial ``t`` uses ``seed + t``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import ModelKind, StateParams, antenna_positions, channel_matrix, channel_shapes, params_from_position
from .config import ScenarioConfig


@dataclass(frozen=True)
class CombinerSet:
    matrices: np.ndarray  # (G, N, M)
    mode: str

    @property
    def is_identity(self) -> bool:
        return self.mode == "digital"

    def combine(self, x: np.ndarray) -> np.ndarray:
        """Apply ``W_g^T`` to ``x`` of shape ``(G, K, N, ...)``; returns ``(G, K, M, ...)``."""
        if self.is_identity:
            return x
        return np.einsum("gnm,gkn...->gkm...", self.matrices, x)

    def unitarity_error(self) -> float:
        w = self.matrices
        gram = np.einsum("gnm,gnl->gml", w.conj(), w)
        return float(np.max(np.abs(gram - np.eye(w.shape[2]))))


@dataclass(frozen=True)
class PilotSet:
    symbols: np.ndarray  # (G, K)


@dataclass(frozen=True)
class ObservationSet:
    noise_free_mean: np.ndarray  # flat, length G*K*M
    samples: np.ndarray
    noise_variance: float
    shape: tuple[int, int, int]  # (G, K, M)

    def blocks(self, which: str = "samples") -> np.ndarray:
        return getattr(self, which).reshape(self.shape)


def noise_variance(config: ScenarioConfig) -> float:
    return config.noise_variance


def make_combiners(config: ScenarioConfig, mode: str | None = None, seed: int | None = None) -> CombinerSet:
    mode = mode or config.combiner
    n, m, g = config.n_antennas, config.n_rfc, config.n_transmissions
    if mode == "digital":
        if m != n:
            raise ValueError("digital combining needs n_rfc == n_antennas")
        mats = np.broadcast_to(np.eye(n, dtype=complex), (g, n, n))
        return CombinerSet(mats, "digital")
    if mode == "analog":
        if m != 1:
            raise ValueError("analog combining needs n_rfc == 1")
        rng = np.random.default_rng(config.seed if seed is None else seed)
        phases = rng.uniform(0.0, 2 * np.pi, size=(g, n, 1))
        return CombinerSet(np.exp(1j * phases) / np.sqrt(n), "analog")
    raise ValueError(f"unknown combiner mode {mode!r}")


def make_pilots(config: ScenarioConfig) -> PilotSet:
    amp = np.sqrt(config.tx_power)
    return PilotSet(np.full((config.n_transmissions, config.n_subcarriers), amp, dtype=complex))


def stack_blocks(channels: np.ndarray, combiners: CombinerSet, pilots: PilotSet) -> np.ndarray:
    """Combine a ``(K, N, ...)`` channel array into ``(G, K, M, ...)`` observation blocks."""
    g = pilots.symbols.shape[0]
    per_tx = np.broadcast_to(channels, (g,) + channels.shape)
    out = combiners.combine(per_tx)
    x = pilots.symbols.reshape(pilots.symbols.shape + (1,) * (out.ndim - 2))
    return out * x


def noise_free_observation(kind: ModelKind, state: StateParams, combiners: CombinerSet, pilots: PilotSet, config: ScenarioConfig) -> np.ndarray:
    h = channel_matrix(kind, state, config)
    return stack_blocks(h, combiners, pilots).reshape(-1)


def unit_gain_observation(kind: ModelKind, position, combiners: CombinerSet, pilots: PilotSet, config: ScenarioConfig, geometry=None) -> np.ndarray:
    """Stacked mean divided by the complex gain (the ``eta`` of the concentrated likelihood)."""
    params_from_position(position)
    shape = channel_shapes(kind, position, config, geometry)
    return stack_blocks(shape, combiners, pilots).reshape(-1)


def sample_noise(shape, variance: float, rng: np.random.Generator) -> np.ndarray:
    scale = np.sqrt(variance / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_observation(mu: np.ndarray, variance: float, seed: int, combiners: CombinerSet | None = None, n_antennas: int | None = None) -> np.ndarray:
    """Add combined circular complex Gaussian noise to a stacked mean.

    With a digital (or no) combiner the noise is drawn directly per output.
    With an analog combiner, antenna-domain noise of shape ``(G, K, N)`` is
    drawn and passed through ``W_g^T``.
    """
    if variance < 0:
        raise ValueError("noise variance must be nonnegative")
    rng = np.random.default_rng(seed)
    mu = np.asarray(mu)
    if combiners is None or combiners.is_identity:
        return mu + sample_noise(mu.shape, variance, rng)
    g, n, m = combiners.matrices.shape
    k = mu.size // (g * m)
    noise = sample_noise((g, k, n), variance, rng)
    return mu + combiners.combine(noise).reshape(-1)


def observe(kind: ModelKind, state: StateParams, config: ScenarioConfig, seed: int, combiners: CombinerSet | None = None) -> ObservationSet:
    combiners = combiners or make_combiners(config)
    pilots = make_pilots(config)
    mu = noise_free_observation(kind, state, combiners, pilots, config)
    y = sample_observation(mu, config.noise_variance, seed, combiners)
    shape = (config.n_transmissions, config.n_subcarriers, config.n_rfc)
    return ObservationSet(mu, y, config.noise_variance, shape)


def write_observation(obs: ObservationSet, path) -> None:
    """Text dump: one row per stacked entry, ``g,k,m`` zero-based, floats with 17 digits."""
    path = Path(path)
    g_n, k_n, m_n = obs.shape
    lines = [
        f"# noise_variance={obs.noise_variance!r} shape={g_n},{k_n},{m_n}",
        "index,g,k,m,mu_re,mu_im,y_re,y_im",
    ]
    for idx, (mu, y) in enumerate(zip(obs.noise_free_mean, obs.samples)):
        g, rest = divmod(idx, k_n * m_n)
        k, m = divmod(rest, m_n)
        lines.append(f"{idx},{g},{k},{m},{mu.real:.17g},{mu.imag:.17g},{y.real:.17g},{y.imag:.17g}")
    path.write_text("\n".join(lines) + "\n")


def read_observation(path) -> ObservationSet:
    text = Path(path).read_text().splitlines()
    meta = dict(item.split("=") for item in text[0].lstrip("# ").split())
    shape = tuple(int(v) for v in meta["shape"].split(","))
    rows = np.array([[float(v) for v in line.split(",")[4:]] for line in text[2:] if line])
    mu = rows[:, 0] + 1j * rows[:, 1]
    y = rows[:, 2] + 1j * rows[:, 3]
    return ObservationSet(mu, y, float(meta["noise_variance"]), shape)
