"""
Shared numerical primitives.

- Gauss-Legendre rules and the tensor grid of the rectangle (QuadGrid)
- Product-integration matrices for the kinked kernel exp(-k|x - x'|)
- Complex Newton (system and vectorized scalar variants)
- Periodic trapezoid rule
- Modified Gram-Schmidt under the quadrature inner product

Fields on the rectangle are plain complex arrays of shape (n_x, n_y) whose
entry [i, j] is the value at (nodes_x[i], nodes_y[j]).
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import BarycentricInterpolator
from scipy.linalg import solve_triangular
from scipy.special import roots_legendre

from .errors import EmptyInput, NonConvergence, SingularJacobian
from .solver_log import solver_log

# Values of a function on QuadGrid.mesh(), shape (n_x, n_y)
ComplexField = np.ndarray

# Extra nodes of the sub-rules used on each side of the kernel kink
_KINK_EXTRA_NODES = 20


# =============================================================================
# Quadrature
# =============================================================================

def gauss_legendre(n: int, lo: float, hi: float) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [lo, hi]."""
    if n < 1:
        raise ValueError(f"need at least one node, got {n}")
    if not lo < hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    t, w = roots_legendre(n)
    half = 0.5 * (hi - lo)
    return half * t + 0.5 * (hi + lo), half * w


@lru_cache(maxsize=256)
def _exp_matrix_cached(n: int, lo: float, hi: float, k: complex) -> np.ndarray:
    nodes, _ = gauss_legendre(n, lo, hi)
    E = exp_kernel_matrix(nodes, lo, hi, k)
    E.setflags(write=False)
    return E


def exp_kernel_matrix(
    nodes: np.ndarray,
    lo: float,
    hi: float,
    k: complex,
    targets: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Product-integration matrix for exp(-k|x - x'|) on [lo, hi].

    Row i integrates exp(-k|t_i - x'|) * l_j(x') over x', where l_j are the
    Lagrange polynomials through `nodes` and t_i are the targets (the nodes
    themselves by default). The integral is split at x' = t_i so each piece is
    smooth and its own Gauss rule converges spectrally.
    """
    nodes = np.asarray(nodes, dtype=float)
    targets = nodes if targets is None else np.asarray(targets, dtype=float)
    n = nodes.size
    n_t = targets.size
    m = n + _KINK_EXTRA_NODES
    t, w = roots_legendre(m)
    lagrange = BarycentricInterpolator(nodes, np.eye(n))

    E = np.zeros((n_t, n), dtype=complex)
    for left, right in ((np.full(n_t, lo), targets), (targets, np.full(n_t, hi))):
        half = 0.5 * (right - left)                            # (n_t,)
        s = half[:, None] * t[None, :] + 0.5 * (right + left)[:, None]
        ws = half[:, None] * w[None, :]                        # (n_t, m)
        L = lagrange(s.ravel()).reshape(n_t, m, n)
        kern = ws * np.exp(-k * np.abs(targets[:, None] - s))
        E += np.einsum("im,imj->ij", kern, L)
    return E


@dataclass(frozen=True)
class QuadGrid:
    """Tensor Gauss-Legendre grid on [-a, a] x [-b, b]."""
    nodes_x: np.ndarray
    weights_x: np.ndarray
    nodes_y: np.ndarray
    weights_y: np.ndarray
    a: float
    b: float

    @classmethod
    def build(cls, a: float, b: float, n_x: int = 32, n_y: Optional[int] = None) -> "QuadGrid":
        n_y = n_x if n_y is None else n_y
        if n_x < 2 or n_y < 2:
            raise ValueError("quadrature grid needs at least 2 nodes per axis")
        xs, wx = gauss_legendre(n_x, -a, a)
        ys, wy = gauss_legendre(n_y, -b, b)
        return cls(xs, wx, ys, wy, float(a), float(b))

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nodes_x.size, self.nodes_y.size)

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.nodes_x, self.nodes_y, indexing="ij")

    def weights2d(self) -> np.ndarray:
        return np.outer(self.weights_x, self.weights_y)

    def inner(self, u: ComplexField, v: ComplexField) -> complex:
        """<u, v> = sum w_j w_k u conj(v)."""
        return complex(np.sum(self.weights2d() * u * np.conj(v)))

    def norm(self, u: ComplexField) -> float:
        return float(np.sqrt(max(self.inner(u, u).real, 0.0)))

    def integrate(self, u: ComplexField) -> complex:
        return complex(np.sum(self.weights2d() * u))

    def exp_matrix_x(self, k: complex) -> np.ndarray:
        return _exp_matrix_cached(self.nodes_x.size, -self.a, self.a, complex(k))

    def exp_matrix_y(self, k: complex) -> np.ndarray:
        return _exp_matrix_cached(self.nodes_y.size, -self.b, self.b, complex(k))

    def apply_exp_kernel(self, k: complex, q: ComplexField) -> ComplexField:
        """int exp(-k|r - r'|_1) q(r') dr' at every grid node."""
        return self.exp_matrix_x(k) @ q @ self.exp_matrix_y(k).T

    def apply_exp_kernel_at(self, k: complex, q: ComplexField, xs, ys) -> np.ndarray:
        """Same integral evaluated on the tensor product of arbitrary xs and ys."""
        Ex = exp_kernel_matrix(self.nodes_x, -self.a, self.a, k, targets=np.atleast_1d(xs))
        Ey = exp_kernel_matrix(self.nodes_y, -self.b, self.b, k, targets=np.atleast_1d(ys))
        return Ex @ q @ Ey.T

    def interpolate(self, u: ComplexField, xs, ys) -> np.ndarray:
        """Polynomial interpolant of u on the tensor product of xs and ys."""
        Lx = BarycentricInterpolator(self.nodes_x, np.eye(self.nodes_x.size))(np.atleast_1d(xs))
        Ly = BarycentricInterpolator(self.nodes_y, np.eye(self.nodes_y.size))(np.atleast_1d(ys))
        return Lx @ u @ Ly.T

    def interpolation_rows(self, points: Sequence[Tuple[float, float]]) -> np.ndarray:
        """Rows R with (R @ u.ravel())[p] = interpolant of u at points[p]."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        Lx = BarycentricInterpolator(self.nodes_x, np.eye(self.nodes_x.size))(pts[:, 0])
        Ly = BarycentricInterpolator(self.nodes_y, np.eye(self.nodes_y.size))(pts[:, 1])
        return np.einsum("pi,pj->pij", Lx, Ly).reshape(len(pts), -1)


# =============================================================================
# Newton iterations
# =============================================================================

@dataclass(frozen=True)
class NewtonSettings:
    max_iter: int = 50
    tol_residual: float = 1e-10
    tol_step: float = 1e-14
    fd_step: float = 1e-6

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        for name in ("tol_residual", "tol_step", "fd_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    residual: float
    history: List[float] = field(default_factory=list)


def fd_jacobian(F: Callable[[np.ndarray], np.ndarray], x: np.ndarray, fd_step: float) -> np.ndarray:
    """Central-difference Jacobian of a holomorphic map."""
    d = x.size
    J = np.empty((d, d), dtype=complex)
    for j in range(d):
        h = fd_step * (1.0 + abs(x[j]))
        e = np.zeros(d, dtype=complex)
        e[j] = h
        J[:, j] = (np.asarray(F(x + e)) - np.asarray(F(x - e))) / (2.0 * h)
    return J


def complex_newton(
    F: Callable[[np.ndarray], np.ndarray],
    x0,
    settings: Optional[NewtonSettings] = None,
    label: str = "",
) -> NewtonResult:
    """
    Solve F(x) = 0 for x in C^d with finite-difference Jacobians.

    Steps are halved (up to 10 times) while they increase the residual.
    """
    settings = settings or NewtonSettings()
    x = np.atleast_1d(np.asarray(x0, dtype=complex)).copy()
    fx = np.atleast_1d(np.asarray(F(x), dtype=complex))
    res = float(np.linalg.norm(fx))
    history = [res]

    for it in range(1, settings.max_iter + 1):
        if not np.isfinite(res):
            break
        if res <= settings.tol_residual:
            solver_log.log("newton_converged", detail=label or None, iterations=it - 1, residual=res)
            return NewtonResult(x, it - 1, res, history)

        J = fd_jacobian(F, x, settings.fd_step)
        try:
            step = np.linalg.solve(J, -fx)
        except np.linalg.LinAlgError as e:
            solver_log.log("newton_failed", detail=f"{label} singular Jacobian", iterations=it, residual=res)
            raise SingularJacobian(f"singular Jacobian at iteration {it}: {e}") from None
        if not np.all(np.isfinite(step)):
            raise SingularJacobian(f"non-finite Newton step at iteration {it}")

        lam = 1.0
        for _ in range(10):
            x_new = x + lam * step
            f_new = np.atleast_1d(np.asarray(F(x_new), dtype=complex))
            res_new = float(np.linalg.norm(f_new))
            if np.isfinite(res_new) and res_new < res:
                break
            lam *= 0.5
        x, fx, res = x_new, f_new, res_new
        history.append(res)

        if lam * np.linalg.norm(step) <= settings.tol_step * (1.0 + np.linalg.norm(x)):
            break

    if res <= settings.tol_residual:
        solver_log.log("newton_converged", detail=label or None, iterations=len(history) - 1, residual=res)
        return NewtonResult(x, len(history) - 1, res, history)

    solver_log.log("newton_failed", detail=label or None, iterations=len(history) - 1, residual=res)
    raise NonConvergence(f"Newton did not converge{' for ' + label if label else ''}",
                         iterations=len(history) - 1, residual=res)


@dataclass
class BatchNewtonResult:
    roots: np.ndarray
    converged: np.ndarray
    residuals: np.ndarray
    iterations: int


def newton_batch(
    f: Callable[[np.ndarray], np.ndarray],
    fprime: Callable[[np.ndarray], np.ndarray],
    seeds,
    max_iter: int = 60,
    tol: float = 1e-13,
    max_step: float = 0.5,
) -> BatchNewtonResult:
    """Scalar complex Newton on an array of seeds at once.

    Steps longer than `max_step` are clipped so seeds stay near their basin.
    """
    x = np.asarray(seeds, dtype=complex).ravel().copy()
    active = np.ones(x.size, dtype=bool)
    it = 0
    for it in range(1, max_iter + 1):
        if not active.any():
            break
        xa = x[active]
        with np.errstate(all="ignore"):
            step = -f(xa) / fprime(xa)
            size = np.abs(step)
            clip = size > max_step
            step[clip] *= max_step / size[clip]
            xa = xa + step
        x[active] = xa
        done = (size <= tol * (1.0 + np.abs(xa))) | ~np.isfinite(xa)
        idx = np.flatnonzero(active)
        active[idx[done]] = False

    with np.errstate(all="ignore"):
        residuals = np.abs(f(x))
    converged = np.isfinite(x) & np.isfinite(residuals) & ~active
    return BatchNewtonResult(x, converged, residuals, it)


# =============================================================================
# Periodic trapezoid
# =============================================================================

def periodic_trapezoid(f: Callable[[float], object], n: int):
    """(1/n) sum_{j<n} f(j/n); works for scalar- or array-valued f."""
    if n < 2:
        raise ValueError(f"periodic trapezoid needs n >= 2, got {n}")
    total = 0j
    for j in range(n):
        total = total + f(j / n)
    return total / n


# =============================================================================
# Gram-Schmidt
# =============================================================================

@dataclass
class OrthoResult:
    """
    Output of gram_schmidt.

    raw[j] = sum_i transform[i, j] * fields[i] for every kept input j.
    """
    fields: List[ComplexField]
    transform: np.ndarray
    kept: List[int]
    dropped: List[int]

    def __len__(self):
        return len(self.fields)

    def __iter__(self):
        return iter(self.fields)

    def __getitem__(self, i):
        return self.fields[i]

    def raw_coefficients(self, ortho_coeffs: np.ndarray) -> np.ndarray:
        """Map coefficients on `fields` back to coefficients on the kept raw inputs."""
        R = self.transform[:, self.kept]
        return solve_triangular(R, ortho_coeffs, lower=False)


def gram_schmidt(vectors: Sequence[ComplexField], grid: QuadGrid, drop_tol: float = 1e-10) -> OrthoResult:
    """Modified Gram-Schmidt with one re-orthogonalization pass."""
    if len(vectors) == 0:
        raise EmptyInput("gram_schmidt needs at least one vector")

    W = grid.weights2d()
    basis: List[ComplexField] = []
    R = np.zeros((len(vectors), len(vectors)), dtype=complex)
    kept: List[int] = []
    dropped: List[int] = []

    for j, raw in enumerate(vectors):
        v = np.array(raw, dtype=complex)
        start = np.sqrt(np.sum(W * np.abs(v) ** 2))
        coeffs = np.zeros(len(basis), dtype=complex)
        for _ in range(2):
            for i, q in enumerate(basis):
                c = np.sum(W * v * np.conj(q))
                v -= c * q
                coeffs[i] += c
        nrm = np.sqrt(np.sum(W * np.abs(v) ** 2))
        R[: len(basis), j] = coeffs
        if start == 0 or nrm <= drop_tol * start:
            dropped.append(j)
            continue
        R[len(basis), j] = nrm
        basis.append(v / nrm)
        kept.append(j)

    if dropped:
        solver_log.log("root_collapse", detail=f"gram_schmidt dropped {len(dropped)} vector(s)",
                       dropped=len(dropped))
    return OrthoResult(basis, R[: len(basis), :], kept, dropped)
