"""Covariance functions and Gram matrices.

Three families are available:

``squared_exponential``
    ``signal_variance * exp(-0.5 * sum_p ((x_p - y_p) / length_scale_p)**2)``
``min``
    ``min(s, t)`` on non-negative scalars (pre-Brownian motion).
``linear``
    ``bias + slope * <x, y>``

Every spec also carries an observation-noise variance used by
:func:`noisy_gram`, which adds it on the diagonal by *index*: repeated
input locations at distinct positions get no extra off-diagonal noise.

Hyperparameters are exposed in log space (``log_params``) for
optimization, with matching Gram-matrix derivatives in
:func:`gram_gradients`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np


class Family(str, Enum):
    SQUARED_EXPONENTIAL = "squared_exponential"
    MIN = "min"
    LINEAR = "linear"


_ALIASES = {"se": Family.SQUARED_EXPONENTIAL, "rbf": Family.SQUARED_EXPONENTIAL}


def parse_family(name) -> Family:
    if isinstance(name, Family):
        return name
    key = str(name).lower().replace("-", "_")
    if key in _ALIASES:
        return _ALIASES[key]
    try:
        return Family(key)
    except ValueError:
        raise ValueError(f"unknown kernel family {name!r}") from None


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family, its hyperparameters and the noise variance.

    ``hyperparams`` keys by family: ``signal_variance`` and
    ``length_scale`` (a tuple, one entry per input dimension) for the
    squared exponential; none for ``min``; ``bias`` and ``slope`` for
    ``linear``.
    """

    family: Family
    hyperparams: dict = field(default_factory=dict)
    noise_variance: float = 0.0

    def __post_init__(self):
        family = parse_family(self.family)
        hp = dict(self.hyperparams)
        if family is Family.SQUARED_EXPONENTIAL:
            sf2 = float(hp.get("signal_variance", 1.0))
            ell = tuple(float(v) for v in np.atleast_1d(hp.get("length_scale", 1.0)))
            if not sf2 > 0:
                raise ValueError("signal_variance must be > 0")
            if not ell or not all(v > 0 for v in ell):
                raise ValueError("length_scale entries must be > 0")
            hp = {"signal_variance": sf2, "length_scale": ell}
        elif family is Family.MIN:
            if hp:
                raise ValueError("the min kernel takes no hyperparameters")
        else:
            bias, slope = float(hp.get("bias", 0.0)), float(hp.get("slope", 1.0))
            if not bias >= 0:
                raise ValueError("bias must be >= 0")
            if not slope > 0:
                raise ValueError("slope must be > 0")
            hp = {"bias": bias, "slope": slope}
        noise = float(self.noise_variance)
        if not noise >= 0:
            raise ValueError("noise_variance must be >= 0")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "hyperparams", hp)
        object.__setattr__(self, "noise_variance", noise)

    @classmethod
    def squared_exponential(cls, signal_variance=1.0, length_scale=1.0, noise_variance=0.0):
        return cls(
            Family.SQUARED_EXPONENTIAL,
            {"signal_variance": signal_variance, "length_scale": length_scale},
            noise_variance,
        )

    @classmethod
    def min(cls, noise_variance=0.0):
        return cls(Family.MIN, {}, noise_variance)

    @classmethod
    def linear(cls, bias=0.0, slope=1.0, noise_variance=0.0):
        return cls(Family.LINEAR, {"bias": bias, "slope": slope}, noise_variance)

    @property
    def input_dim(self) -> int | None:
        """Required input dimension, or None when any dimension is accepted."""
        if self.family is Family.SQUARED_EXPONENTIAL:
            return len(self.hyperparams["length_scale"])
        if self.family is Family.MIN:
            return 1
        return None

    def with_noise(self, noise_variance: float) -> "KernelSpec":
        return replace(self, noise_variance=noise_variance)

    # log-space parameter vector (noise excluded)

    def log_param_names(self) -> list[str]:
        if self.family is Family.SQUARED_EXPONENTIAL:
            p = len(self.hyperparams["length_scale"])
            return ["log_signal_variance"] + [f"log_length_scale_{i + 1}" for i in range(p)]
        if self.family is Family.LINEAR:
            return ["log_bias", "log_slope"]
        return []

    def log_params(self) -> np.ndarray:
        hp = self.hyperparams
        with np.errstate(divide="ignore"):
            if self.family is Family.SQUARED_EXPONENTIAL:
                return np.log([hp["signal_variance"], *hp["length_scale"]])
            if self.family is Family.LINEAR:
                return np.log([hp["bias"], hp["slope"]])
        return np.empty(0)

    def with_log_params(self, theta) -> "KernelSpec":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (len(self.log_param_names()),):
            raise ValueError("wrong number of kernel parameters")
        v = np.exp(theta)
        if self.family is Family.SQUARED_EXPONENTIAL:
            hp = {"signal_variance": v[0], "length_scale": tuple(v[1:])}
        elif self.family is Family.LINEAR:
            hp = {"bias": v[0], "slope": v[1]}
        else:
            hp = {}
        return KernelSpec(self.family, hp, self.noise_variance)

    def to_dict(self) -> dict:
        hp = dict(self.hyperparams)
        if "length_scale" in hp:
            hp["length_scale"] = list(hp["length_scale"])
        return {"family": self.family.value, "hyperparams": hp, "noise_variance": self.noise_variance}

    @classmethod
    def from_dict(cls, data: dict) -> "KernelSpec":
        return cls(data["family"], data.get("hyperparams", {}), data.get("noise_variance", 0.0))


def as_inputs(x, kernel: KernelSpec | None = None) -> np.ndarray:
    """Coerce a point list to an ``(n, p)`` float array; scalars become ``p = 1``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[:, None]
    elif x.ndim != 2:
        raise ValueError("inputs must be a list of points")
    if x.shape[0] == 0:
        raise ValueError("inputs must be non-empty")
    if not np.all(np.isfinite(x)):
        raise ValueError("inputs contain non-finite values")
    if kernel is not None:
        p = kernel.input_dim
        if p is not None and x.shape[1] != p:
            raise ValueError(f"{kernel.family.value} kernel expects {p}-dimensional inputs, got {x.shape[1]}")
        if kernel.family is Family.MIN and np.any(x < 0):
            raise ValueError("the min kernel is only defined on non-negative inputs")
    return x


def _scaled_sqdist(x: np.ndarray, y: np.ndarray, ell: np.ndarray) -> np.ndarray:
    diff = (x[:, None, :] - y[None, :, :]) / ell
    return np.sum(diff * diff, axis=-1)


def _cross(kernel: KernelSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    hp = kernel.hyperparams
    if kernel.family is Family.SQUARED_EXPONENTIAL:
        ell = np.asarray(hp["length_scale"])
        return hp["signal_variance"] * np.exp(-0.5 * _scaled_sqdist(x, y, ell))
    if kernel.family is Family.MIN:
        return np.minimum(x[:, 0][:, None], y[:, 0][None, :])
    # elementwise product-sum, not BLAS, so entries do not depend on matrix size
    return hp["bias"] + hp["slope"] * np.sum(x[:, None, :] * y[None, :, :], axis=-1)


def _mirror_upper(k: np.ndarray) -> np.ndarray:
    return np.triu(k) + np.triu(k, 1).T


def evaluate(kernel: KernelSpec, x, y) -> float:
    """Kernel value at a single pair of points."""
    if np.ndim(x) > 1 or np.ndim(y) > 1:
        raise ValueError("eval takes single points; use gram for point lists")
    xa = as_inputs(np.atleast_1d(x)[None, :], kernel)
    ya = as_inputs(np.atleast_1d(y)[None, :], kernel)
    if xa.shape[1] != ya.shape[1]:
        raise ValueError("points have different dimensions")
    return float(_cross(kernel, xa, ya)[0, 0])


def gram(kernel: KernelSpec, left, right=None) -> np.ndarray:
    """Noise-free Gram matrix ``K[i, j] = k(left[i], right[j])``.

    With ``right`` omitted the square Gram over ``left`` is computed on the
    upper triangle and mirrored, so it is exactly symmetric.
    """
    x = as_inputs(left, kernel)
    if right is None:
        return _mirror_upper(_cross(kernel, x, x))
    y = as_inputs(right, kernel)
    if x.shape[1] != y.shape[1]:
        raise ValueError("left and right inputs have different dimensions")
    return _cross(kernel, x, y)


def noisy_gram(kernel: KernelSpec, inputs) -> np.ndarray:
    """``gram(kernel, inputs) + noise_variance * I`` (noise on matching indices only)."""
    k = gram(kernel, inputs)
    k[np.diag_indices_from(k)] += kernel.noise_variance
    return k


def gram_gradients(kernel: KernelSpec, inputs) -> list[np.ndarray]:
    """Derivatives of the square Gram w.r.t. each entry of ``kernel.log_params()``."""
    x = as_inputs(inputs, kernel)
    hp = kernel.hyperparams
    if kernel.family is Family.SQUARED_EXPONENTIAL:
        k = gram(kernel, x)
        ell = np.asarray(hp["length_scale"])
        grads = [k]
        for p in range(x.shape[1]):
            d = (x[:, p][:, None] - x[:, p][None, :]) / ell[p]
            grads.append(_mirror_upper(k * d * d))
        return grads
    if kernel.family is Family.LINEAR:
        n = x.shape[0]
        return [np.full((n, n), hp["bias"]), _mirror_upper(hp["slope"] * np.sum(x[:, None, :] * x[None, :, :], axis=-1))]
    return []
