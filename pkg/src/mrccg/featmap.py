"""Instance embeddings and the one-hot class feature map.

An instance map turns x in R^d into psi(x) in R^d'. The classifier features
are phi(x, y) = e_y (x) psi(x): one block of d' entries per class, so global
feature j corresponds to class j // d' and embedding component j % d'.

The random Fourier embedding stacks [cos(u_i.x)] and [sin(u_i.x)] for D
frequency vectors u_i ~ N(0, gamma * I), d' = 2D, without the usual sqrt(2/D)
scaling. The inner product psi(x).psi(x') / D then approximates the Gaussian
kernel exp(-gamma ||x - x'||^2 / 2).
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class InstanceMap:
    variant: str                    # "identity" or "rff"
    d: int
    dprime: int
    freq: np.ndarray = None         # (d, n_components), rff only
    gamma: float = None
    seed: int = None

    @property
    def n_components(self):
        return None if self.freq is None else self.freq.shape[1]


def identity_map(d):
    if d < 1:
        raise ValueError("d must be positive")
    return InstanceMap("identity", int(d), int(d))


def rff_fit(d, n_components, gamma, seed=0):
    """Draw the frequency matrix for a random Fourier embedding."""
    if d < 1 or n_components < 1:
        raise ValueError("d and n_components must be positive")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    rng = np.random.default_rng(seed)
    freq = rng.normal(0.0, np.sqrt(gamma), size=(d, n_components))
    return InstanceMap("rff", int(d), 2 * int(n_components), freq,
                       float(gamma), int(seed))


def psi(imap, X):
    """Embed one instance (d,) or a batch (n, d); output d' wide."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != imap.d:
        raise ValueError(f"expected {imap.d} input features, got {X.shape[-1]}")
    if imap.variant == "identity":
        return X.copy()
    z = X @ imap.freq
    return np.concatenate((np.cos(z), np.sin(z)), axis=-1)


def psi_components(imap, X, comps):
    """Selected embedding components only; comps indexes into [0, d')."""
    X = np.asarray(X, dtype=np.float64)
    comps = np.asarray(comps, dtype=np.int64)
    if comps.size and (comps.min() < 0 or comps.max() >= imap.dprime):
        raise ValueError("component index out of range")
    if imap.variant == "identity":
        return X[..., comps].astype(np.float64)
    D = imap.freq.shape[1]
    is_sin = comps >= D
    base = np.where(is_sin, comps - D, comps)
    z = X @ imap.freq[:, base]
    return np.where(is_sin, np.sin(z), np.cos(z))


@dataclass(frozen=True)
class FeatureMap:
    """Instance map paired with a class count; spans m = d' * K features."""

    instance_map: InstanceMap
    n_classes: int

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("need at least two classes")

    @property
    def dprime(self):
        return self.instance_map.dprime

    @property
    def m(self):
        return self.dprime * self.n_classes

    def feature_class(self, j):
        return int(j) // self.dprime

    def feature_component(self, j):
        return int(j) % self.dprime

    def feature_index(self, y, p):
        if not 0 <= y < self.n_classes:
            raise ValueError("class out of range")
        if not 0 <= p < self.dprime:
            raise ValueError("component out of range")
        return y * self.dprime + p


@dataclass(frozen=True)
class BlockVector:
    """phi(x, y) without materializing the zero blocks."""

    label: int
    values: np.ndarray
    n_classes: int

    @property
    def dim(self):
        return self.values.shape[0] * self.n_classes

    def to_dense(self):
        dp = self.values.shape[0]
        out = np.zeros(self.dim)
        out[self.label * dp:(self.label + 1) * dp] = self.values
        return out


def phi(fmap, x, y):
    y = int(y)
    if not 0 <= y < fmap.n_classes:
        raise ValueError(f"label {y} out of range for {fmap.n_classes} classes")
    return BlockVector(y, psi(fmap.instance_map, x), fmap.n_classes)


def phi_dot(fmap, x, y, mu):
    """phi(x, y) . mu for a sparse mu, touching only mu's support in block y."""
    y = int(y)
    if not 0 <= y < fmap.n_classes:
        raise ValueError(f"label {y} out of range for {fmap.n_classes} classes")
    if mu.dim != fmap.m:
        raise ValueError("mu dimension does not match the feature map")
    dp = fmap.dprime
    lo = np.searchsorted(mu.indices, y * dp)
    hi = np.searchsorted(mu.indices, (y + 1) * dp)
    if lo == hi:
        return 0.0
    comps = mu.indices[lo:hi] - y * dp
    vals = psi_components(fmap.instance_map, np.asarray(x, dtype=np.float64),
                          comps)
    return float(vals @ mu.values[lo:hi])
