"""
Model parameters and the pointwise ingredients of the neural field.

The connectivity is a finite sum of L1-exponentials on the rectangle
[-a, a] x [-b, b], the delay is tau0 plus the L1 distance and the firing rate
is a centred logistic sigmoid.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, NamedTuple, Sequence, Tuple

import numpy as np
from scipy.special import expit


class Point2(NamedTuple):
    """A point r = (x, y) of the rectangle."""
    x: float
    y: float


@dataclass(frozen=True)
class KernelTerm:
    """One exponential c_hat * exp(-xi * |r - r'|_1) of the connectivity."""
    c_hat: complex
    xi: complex


# Sampling grid used to certify that J is real-valued
_REALNESS_SAMPLES = 7
_REALNESS_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """All physical constants of the single-population model."""
    alpha: float
    tau0: float
    gamma: float
    a: float
    b: float
    terms: Tuple[KernelTerm, ...] = field(default_factory=tuple)

    def __post_init__(self):
        terms = tuple(
            t if isinstance(t, KernelTerm) else KernelTerm(complex(t[0]), complex(t[1]))
            for t in self.terms
        )
        object.__setattr__(self, "terms", terms)
        for name in ("alpha", "tau0", "a", "b", "gamma"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if not terms:
            raise ValueError("connectivity needs at least one term")
        self._check_real_kernel()

    # ------------------------------------------------------------------
    # Derived accessors
    # ------------------------------------------------------------------

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @property
    def tau_max(self) -> float:
        """sup tau(r, r') = tau0 + 2a + 2b."""
        return self.tau0 + 2.0 * self.a + 2.0 * self.b

    @property
    def s1(self) -> float:
        """S'(0) = gamma / 4."""
        return self.gamma / 4.0

    @property
    def s2(self) -> float:
        """S''(0) vanishes for the centred sigmoid."""
        return 0.0

    @property
    def s3(self) -> float:
        """S'''(0) = -gamma^3 / 8."""
        return -self.gamma ** 3 / 8.0

    @property
    def c_hats(self) -> np.ndarray:
        return np.array([t.c_hat for t in self.terms], dtype=complex)

    @property
    def xis(self) -> np.ndarray:
        return np.array([t.xi for t in self.terms], dtype=complex)

    def with_c_hat(self, value: complex, index: int = 0) -> "ModelParams":
        """Copy with the amplitude of term `index` replaced."""
        terms = list(self.terms)
        terms[index] = KernelTerm(complex(value), terms[index].xi)
        return replace(self, terms=tuple(terms))

    def kernel_abs_bound(self) -> float:
        """Upper bound of sup_r int |J(r, r')| dr' over the rectangle."""
        diameter = 2.0 * self.a + 2.0 * self.b
        area = 4.0 * self.a * self.b
        total = 0.0
        for t in self.terms:
            decay = t.xi.real
            worst = 1.0 if decay >= 0 else math.exp(-decay * diameter)
            total += abs(t.c_hat) * area * worst
        return total

    # ------------------------------------------------------------------
    # Validation
    # ------------------------------------------------------------------

    def _check_real_kernel(self) -> None:
        xs = np.linspace(-self.a, self.a, _REALNESS_SAMPLES)
        ys = np.linspace(-self.b, self.b, _REALNESS_SAMPLES)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        J = kernel_matrix(X.ravel(), Y.ravel(), self)
        scale = np.max(np.abs(J))
        if scale > 0 and np.max(np.abs(J.imag)) > _REALNESS_TOL * scale:
            raise ValueError("connectivity kernel is not real-valued on the rectangle")

    # ------------------------------------------------------------------
    # Serialization
    # ------------------------------------------------------------------

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelParams":
        """Build from the JSON document {alpha, tau0, gamma, a, b, terms}."""
        try:
            terms = tuple(
                KernelTerm(_complex_of(t["c_hat"]), _complex_of(t["xi"]))
                for t in data["terms"]
            )
            return cls(
                alpha=float(data["alpha"]),
                tau0=float(data["tau0"]),
                gamma=float(data["gamma"]),
                a=float(data["a"]),
                b=float(data["b"]),
                terms=terms,
            )
        except KeyError as e:
            raise ValueError(f"model document missing key {e}") from None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "tau0": self.tau0,
            "gamma": self.gamma,
            "a": self.a,
            "b": self.b,
            "terms": [
                {"c_hat": [t.c_hat.real, t.c_hat.imag], "xi": [t.xi.real, t.xi.imag]}
                for t in self.terms
            ],
        }


def _complex_of(value) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValueError(f"complex value must be [re, im], got {value}")
        return complex(float(value[0]), float(value[1]))
    return complex(value)


# =============================================================================
# Pointwise model functions
# =============================================================================

def firing_rate(u, gamma: float):
    """S(u) = 1 / (1 + exp(-gamma u)) - 1/2, elementwise on arrays."""
    return expit(gamma * np.asarray(u, dtype=float)) - 0.5


def firing_rate_derivatives(gamma: float) -> Tuple[float, float, float]:
    """(S'(0), S''(0), S'''(0)) in closed form."""
    return gamma / 4.0, 0.0, -gamma ** 3 / 8.0


def l1_distance(r: Point2, rp: Point2) -> float:
    return abs(r[0] - rp[0]) + abs(r[1] - rp[1])


def kernel_eval(r: Point2, rp: Point2, params: ModelParams) -> complex:
    """J(r, r') = sum_i c_hat_i exp(-xi_i |r - r'|_1)."""
    d = l1_distance(r, rp)
    return sum(t.c_hat * np.exp(-t.xi * d) for t in params.terms)


def delay_eval(r: Point2, rp: Point2, params: ModelParams) -> float:
    """tau(r, r') = tau0 + |r - r'|_1."""
    return params.tau0 + l1_distance(r, rp)


def distance_matrix(xs: Sequence[float], ys: Sequence[float]) -> np.ndarray:
    """Pairwise L1 distances between the points (xs[j], ys[j])."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    return np.abs(xs[:, None] - xs[None, :]) + np.abs(ys[:, None] - ys[None, :])


def kernel_matrix(xs: Sequence[float], ys: Sequence[float], params: ModelParams) -> np.ndarray:
    """J over all point pairs, complex dtype."""
    d = distance_matrix(xs, ys)
    J = np.zeros(d.shape, dtype=complex)
    for t in params.terms:
        J += t.c_hat * np.exp(-t.xi * d)
    return J


def delay_matrix(xs: Sequence[float], ys: Sequence[float], params: ModelParams) -> np.ndarray:
    """tau over all point pairs."""
    return params.tau0 + distance_matrix(xs, ys)
