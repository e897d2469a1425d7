"""Unit-cell geometry and the family of cellwise deformation maps.

The reference cell is Y = [0,1)^2 with a circular interface Gamma_0 strictly
inside it.  Deformation maps fix every cell boundary, so the integer lattice
of cells is preserved and cells can be deformed independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergence

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 100


@dataclass(frozen=True)
class InterfaceSpec:
    """Circular interface in the unit cell; beta is its margin to the cell boundary."""

    center: tuple[float, float] = (0.5, 0.5)
    radius: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.radius < 0.5:
            raise ValueError(f"radius must be in (0, 0.5), got {self.radius}")
        cx, cy = self.center
        margin = min(cx, cy, 1.0 - cx, 1.0 - cy) - self.radius
        if margin <= 0.0:
            raise ValueError("interface closure must lie strictly inside the unit cell")

    @property
    def beta(self) -> float:
        """Distance from the interface to the cell boundary."""
        cx, cy = self.center
        return min(cx, cy, 1.0 - cx, 1.0 - cy) - self.radius


def _splitmix64(x: np.ndarray) -> np.ndarray:
    """Finalizer of the splitmix64 generator; uint64 in, uint64 out."""
    with np.errstate(over="ignore"):
        x = (x + np.uint64(0x9E3779B97F4A7C15)).astype(np.uint64)
        x ^= x >> np.uint64(30)
        x = (x * np.uint64(0xBF58476D1CE4E5B9)).astype(np.uint64)
        x ^= x >> np.uint64(27)
        x = (x * np.uint64(0x94D049BB133111EB)).astype(np.uint64)
        x ^= x >> np.uint64(31)
    return x


@dataclass(frozen=True)
class BernoulliField:
    """I.i.d. Bernoulli(1/2) bits indexed by cell, from a counter-based hash.

    Bits depend only on (seed, cell index), so evaluation order is irrelevant.
    ``shift`` realizes the lattice shift action: the shifted field at cell k
    reads the bit of cell k + shift.
    """

    seed: int
    shift: tuple[int, int] = (0, 0)

    def bits(self, kx: np.ndarray, ky: np.ndarray) -> np.ndarray:
        kx = np.asarray(kx, dtype=np.int64) + np.int64(self.shift[0])
        ky = np.asarray(ky, dtype=np.int64) + np.int64(self.shift[1])
        h = _splitmix64(np.uint64(self.seed) ^ _splitmix64(kx.astype(np.uint64)))
        h = _splitmix64(h ^ _splitmix64(~ky.astype(np.uint64)))
        return (h >> np.uint64(63)).astype(np.int64)

    def bit(self, k: tuple[int, int]) -> int:
        return int(self.bits(np.int64(k[0]), np.int64(k[1])))

    def shifted(self, k: tuple[int, int]) -> "BernoulliField":
        return BernoulliField(self.seed, (self.shift[0] + k[0], self.shift[1] + k[1]))


def _bump_psi(rho: np.ndarray) -> np.ndarray:
    """Standard mollifier profile exp(-1/(1-rho^2)) for rho < 1, else 0."""
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    inside = rho < 1.0
    r2 = rho[inside] ** 2
    out[inside] = np.exp(-1.0 / (1.0 - r2))
    return out


def _bump_psi_prime(rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    inside = rho < 1.0
    r = rho[inside]
    out[inside] = np.exp(-1.0 / (1.0 - r**2)) * (-2.0 * r / (1.0 - r**2) ** 2)
    return out


class DeformationMap:
    """Base class: an orientation-preserving diffeomorphism fixing cell boundaries."""

    #: lower bound on det(grad Phi), upper bound on |grad Phi|; set by subclasses
    mu: float = 1.0
    M: float = 1.0

    def apply(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def inverse(self, x: np.ndarray) -> np.ndarray:
        """Per-cell damped Newton inversion seeded at x (cells are invariant)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x).astype(float)
        y = pts.copy()
        res = self.apply(y) - pts
        norm = np.linalg.norm(res, axis=1)
        for _ in range(NEWTON_MAX_ITER):
            active = norm > NEWTON_TOL
            if not active.any():
                break
            ya = y[active]
            J = self.jacobian(ya)
            step = np.linalg.solve(J, res[active][..., None])[..., 0]
            damp = np.ones(len(ya))
            for _ in range(60):
                trial = ya - damp[:, None] * step
                tres = self.apply(trial) - pts[active]
                tnorm = np.linalg.norm(tres, axis=1)
                worse = tnorm > norm[active]
                if not worse.any():
                    break
                damp[worse] *= 0.5
            y[active] = ya - damp[:, None] * step
            res[active] = tres
            norm[active] = tnorm
        else:
            raise NonConvergence(
                f"inverse map Newton failed: max residual {norm.max():.3e}"
            )
        return y[0] if single else y

    def sampled_bounds(self, n: int = 200) -> tuple[float, float]:
        """(min det grad Phi, max |grad Phi|) over an n x n grid in the unit cell."""
        t = (np.arange(n) + 0.5) / n
        gx, gy = np.meshgrid(t, t)
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        J = self.jacobian(pts)
        dets = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        norms = np.linalg.norm(J, ord=2, axis=(1, 2))
        return float(dets.min()), float(norms.max())


class IdentityMap(DeformationMap):
    kind = "identity"

    def apply(self, y):
        return np.asarray(y, dtype=float).copy()

    def jacobian(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        J = np.zeros((len(y), 2, 2))
        J[:, 0, 0] = J[:, 1, 1] = 1.0
        return J

    def inverse(self, x):
        return np.asarray(x, dtype=float).copy()


class ScalingMap(DeformationMap):
    """Uniform scaling Phi(y) = s*y.  Test-only: does not fix cell boundaries."""

    kind = "scaling"

    def __init__(self, s: float):
        self.s = float(s)
        self.mu = self.s**2
        self.M = self.s

    def apply(self, y):
        return self.s * np.asarray(y, dtype=float)

    def jacobian(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        J = np.zeros((len(y), 2, 2))
        J[:, 0, 0] = J[:, 1, 1] = self.s
        return J

    def inverse(self, x):
        return np.asarray(x, dtype=float) / self.s


class BumpMap(DeformationMap):
    """Deterministic bump: every cell deformed by the same compactly supported
    displacement a * psi(2|y - c|) * u with c the cell center."""

    kind = "bump"

    def __init__(self, amplitude: float = 0.1, direction: tuple[float, float] = (1.0, 0.0)):
        self.amplitude = float(amplitude)
        u = np.asarray(direction, dtype=float)
        self.direction = u / np.linalg.norm(u)
        self.mu, self.M = self.sampled_bounds()
        if self.mu <= 0.0:
            raise ValueError(f"bump amplitude {amplitude} folds the map (det <= 0)")

    def _displacement(self, local: np.ndarray) -> np.ndarray:
        d = local - 0.5
        s = np.linalg.norm(d, axis=-1)
        return self.amplitude * _bump_psi(2.0 * s)[..., None] * self.direction

    def _displacement_jacobian(self, local: np.ndarray) -> np.ndarray:
        # grad eta = a * u (x) grad psi(2|y-c|);  grad psi(2s) = 2 psi'(2s) (y-c)/s
        d = local - 0.5
        s = np.linalg.norm(d, axis=-1)
        safe = np.where(s > 0.0, s, 1.0)
        g = 2.0 * _bump_psi_prime(2.0 * s)[..., None] * d / safe[..., None]
        return self.amplitude * self.direction[None, :, None] * g[:, None, :]

    def apply(self, y):
        y = np.asarray(y, dtype=float)
        single = y.ndim == 1
        pts = np.atleast_2d(y).astype(float)
        k = np.floor(pts)
        out = pts + self._displacement(pts - k)
        return out[0] if single else out

    def jacobian(self, y):
        pts = np.atleast_2d(np.asarray(y, dtype=float))
        k = np.floor(pts)
        J = self._displacement_jacobian(pts - k)
        J[:, 0, 0] += 1.0
        J[:, 1, 1] += 1.0
        return J


class BernoulliCellwiseMap(DeformationMap):
    """Per-cell Bernoulli choice between the identity and the bump deformation."""

    kind = "bernoulli"

    def __init__(
        self,
        seed: int,
        amplitude: float = 0.1,
        direction: tuple[float, float] = (1.0, 0.0),
        shift: tuple[int, int] = (0, 0),
    ):
        self.field = BernoulliField(int(seed), tuple(shift))
        self.seed = int(seed)
        self.amplitude = float(amplitude)
        self._bump = BumpMap(amplitude, direction)
        self.direction = self._bump.direction
        self.mu = min(1.0, self._bump.mu)
        self.M = max(1.0, self._bump.M)

    def _bits_at(self, k: np.ndarray) -> np.ndarray:
        return self.field.bits(k[:, 0].astype(np.int64), k[:, 1].astype(np.int64))

    def apply(self, y):
        y = np.asarray(y, dtype=float)
        single = y.ndim == 1
        pts = np.atleast_2d(y).astype(float)
        k = np.floor(pts)
        on = self._bits_at(k) == 1
        out = pts.copy()
        out[on] += self._bump._displacement(pts[on] - k[on])
        return out[0] if single else out

    def jacobian(self, y):
        pts = np.atleast_2d(np.asarray(y, dtype=float))
        k = np.floor(pts)
        on = self._bits_at(k) == 1
        J = np.zeros((len(pts), 2, 2))
        J[:, 0, 0] = J[:, 1, 1] = 1.0
        J[on] += self._bump._displacement_jacobian(pts[on] - k[on])
        return J

    def shifted(self, k: tuple[int, int]) -> "BernoulliCellwiseMap":
        return BernoulliCellwiseMap(
            self.seed, self.amplitude, tuple(self.direction),
            (self.field.shift[0] + k[0], self.field.shift[1] + k[1]),
        )


def apply_phi(dmap: DeformationMap, y) -> np.ndarray:
    return dmap.apply(np.asarray(y, dtype=float))


def jacobian_phi(dmap: DeformationMap, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    J = dmap.jacobian(y)
    return J[0] if y.ndim == 1 else J


def inverse_phi(dmap: DeformationMap, x) -> np.ndarray:
    return dmap.inverse(np.asarray(x, dtype=float))


def surface_factor(dmap: DeformationMap, x, tangent) -> np.ndarray:
    """Length-distortion factor |grad Phi . t| carrying arc length on Gamma_0
    to arc length on the deformed interface."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(tangent, dtype=float)
    single = x.ndim == 1
    J = dmap.jacobian(np.atleast_2d(x))
    jt = np.einsum("nij,nj->ni", J, np.atleast_2d(t))
    out = np.linalg.norm(jt, axis=1)
    return float(out[0]) if single else out


def surface_factor_normal_form(dmap: DeformationMap, x, normal) -> np.ndarray:
    """Same factor via the cofactor formula det(J) * |J^{-T} n| (normal-gradient form)."""
    x = np.asarray(x, dtype=float)
    n = np.asarray(normal, dtype=float)
    single = x.ndim == 1
    J = dmap.jacobian(np.atleast_2d(x))
    dets = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    Jinv_t = np.linalg.inv(J).transpose(0, 2, 1)
    jn = np.einsum("nij,nj->ni", Jinv_t, np.atleast_2d(n))
    out = dets * np.linalg.norm(jn, axis=1)
    return float(out[0]) if single else out
