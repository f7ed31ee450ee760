"""Built-in simulators and the registry the CLI uses to build them from config."""

import numpy as np
from scipy.special import ndtri

from .core import SimulableModel
from .errors import ConfigError
from .rng import PURPOSE_MODEL
from .toymodel import DEFAULT_N_SEQ, CoalescentToyModel, PoissonToyModel
from . import kernels


class LinearGaussianModel(SimulableModel):
    """``s = C theta + c0 + noise_sd * z`` with z standard normal.

    With ``C = I``, ``c0 = 0`` this is the identity model. Normal draws come
    from the proposal's model stream by inversion, one uniform per statistic.
    """

    def __init__(self, C=1.0, c0=0.0, noise_sd=0.0):
        C = np.atleast_2d(np.asarray(C, dtype=float))
        c0 = np.broadcast_to(np.asarray(c0, dtype=float), (C.shape[0],)).copy()
        noise = np.broadcast_to(np.asarray(noise_sd, dtype=float), (C.shape[0],)).copy()
        if np.any(noise < 0):
            raise ValueError("noise_sd must be >= 0")
        self.C, self.c0, self.noise_sd = C, c0, noise
        self.n_stats, self.n_params = C.shape

    def simulate_batch(self, thetas, key, indices):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        out = thetas @ self.C.T + self.c0
        if np.any(self.noise_sd > 0):
            u = kernels.uniforms(key, np.asarray(indices, dtype=np.uint64), PURPOSE_MODEL,
                                 self.n_stats)
            out = out + ndtri(u) * self.noise_sd
        return out

    def simulate(self, theta, stream):
        out = self.simulate_batch(np.atleast_1d(theta)[None, :], stream.key, [stream.index])
        stream.counter = self.n_stats
        return out[0]

    def to_spec(self):
        return {"id": "linear_gaussian", "C": self.C.tolist(), "c0": self.c0.tolist(),
                "noise_sd": self.noise_sd.tolist()}


def IdentityModel(dim=1, noise_sd=0.0):
    """s = theta (+ optional Gaussian noise)."""
    return LinearGaussianModel(np.eye(dim), 0.0, noise_sd)


_MODEL_KEYS = {
    "coalescent": {"id", "n_seq", "jitter"},
    "poisson": {"id", "jitter"},
    "identity": {"id", "dim", "noise_sd"},
    "linear_gaussian": {"id", "C", "c0", "noise_sd"},
}


def make_model(spec):
    """Model from a mapping such as ``{"id": "coalescent", "n_seq": 10}``."""
    if not isinstance(spec, dict) or "id" not in spec:
        raise ConfigError("model spec must be a mapping with an 'id' key")
    kind = spec["id"]
    if kind not in _MODEL_KEYS:
        raise ConfigError(f"model.id: unknown model {kind!r}; choose from "
                          + ", ".join(sorted(_MODEL_KEYS)))
    unknown = set(spec) - _MODEL_KEYS[kind]
    if unknown:
        raise ConfigError(f"model: unknown keys for {kind!r}: {sorted(unknown)}")
    try:
        if kind == "coalescent":
            return CoalescentToyModel(spec.get("n_seq", DEFAULT_N_SEQ), spec.get("jitter", False))
        if kind == "poisson":
            return PoissonToyModel(spec.get("jitter", False))
        if kind == "identity":
            return IdentityModel(int(spec.get("dim", 1)), spec.get("noise_sd", 0.0))
        return LinearGaussianModel(spec.get("C", 1.0), spec.get("c0", 0.0),
                                   spec.get("noise_sd", 0.0))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"model: {exc}") from exc


__all__ = ["LinearGaussianModel", "IdentityModel", "make_model"]
