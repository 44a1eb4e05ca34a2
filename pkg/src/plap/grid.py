"""Axis-aligned box grids, node-centered fields, and finite-difference calculus.

Everything in this package runs on tensor-product node grids over boxes, so
every boundary face is flat with an axis-aligned outward normal.  That is
exactly the geometry the boundary-recovery machinery needs, and it keeps the
discrete calculus small: differentiation uses second-order stencils, central
at interior nodes and 3-point one-sided on the boundary, so affine fields
differentiate exactly everywhere and quadratics are exact at interior nodes.

Volume sums use tensor-product trapezoid weights (half weight on boundary
nodes), face sums use the same rule restricted to a face.  Both are exact for
fields with constant integrand, which several test oracles rely on.

All operations here are pure functions of immutable inputs and are evaluated
with a fixed summation order, so repeated calls are bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Domain",
    "Face",
    "ScalarField",
    "VectorField",
    "TensorField",
    "build_domain",
    "gradient",
    "divergence",
    "boundary_trace",
    "normal_component",
    "anisotropic_operator",
    "integrate_volume",
    "integrate_boundary",
    "face_values_max_abs",
    "face_values_combine",
    "require_positive_weight",
]


@dataclass(frozen=True)
class Face:
    """One flat boundary face of a box: an axis and a side (-1 lower, +1 upper)."""

    axis: int
    side: int

    @property
    def key(self) -> tuple[int, int]:
        return (self.axis, self.side)


def _stencil_1d(n: int, h: float) -> sp.csr_matrix:
    """Second-order first-derivative matrix on n nodes with spacing h.

    Central differences at rows 1..n-2, 3-point one-sided at the end rows.
    Exact for quadratics at every row.
    """
    s = sp.lil_matrix((n, n))
    inv = 1.0 / (2.0 * h)
    s[0, 0] = -3.0 * inv
    s[0, 1] = 4.0 * inv
    s[0, 2] = -1.0 * inv
    for i in range(1, n - 1):
        s[i, i - 1] = -inv
        s[i, i + 1] = inv
    s[n - 1, n - 3] = 1.0 * inv
    s[n - 1, n - 2] = -4.0 * inv
    s[n - 1, n - 1] = 3.0 * inv
    return s.tocsr()


class Domain:
    """Structured node grid on the box prod_a [origin_a, origin_a + extent_a].

    Nodes are indexed in C order; node (i_0, ..., i_{n-1}) sits at
    origin_a + i_a * h_a with h_a = extent_a / (resolution_a - 1).  Interior
    and boundary index sets partition the nodes; each boundary node belongs
    to at least one of the 2n flat faces.
    """

    def __init__(self, extents, resolution, origin=None):
        extents = np.asarray(extents, dtype=float)
        if extents.ndim != 1 or extents.size not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if np.any(extents <= 0.0):
            raise ValueError(f"extents must be positive, got {extents.tolist()}")
        resolution = tuple(int(r) for r in resolution)
        if len(resolution) != extents.size:
            raise ValueError("resolution and extents must have equal length")
        if any(r < 3 for r in resolution):
            raise ValueError(f"need at least 3 nodes per axis, got {resolution}")
        if origin is None:
            origin = np.zeros(extents.size)
        origin = np.asarray(origin, dtype=float)
        if origin.shape != extents.shape:
            raise ValueError("origin and extents must have equal length")

        self.n = int(extents.size)
        self.extents = extents
        self.origin = origin
        self.shape = resolution
        self.h = extents / (np.array(resolution) - 1.0)
        self.faces = [Face(a, s) for a in range(self.n) for s in (-1, +1)]

    # -- geometry -----------------------------------------------------------

    @cached_property
    def axes(self) -> list[np.ndarray]:
        return [
            self.origin[a] + self.h[a] * np.arange(self.shape[a])
            for a in range(self.n)
        ]

    @cached_property
    def coords(self) -> list[np.ndarray]:
        """Meshgrid coordinate arrays, one per axis, each of shape ``self.shape``."""
        return list(np.meshgrid(*self.axes, indexing="ij"))

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def interior_mask(self) -> np.ndarray:
        m = np.ones(self.shape, dtype=bool)
        for a in range(self.n):
            sl = [slice(None)] * self.n
            sl[a] = 0
            m[tuple(sl)] = False
            sl[a] = -1
            m[tuple(sl)] = False
        return m

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        return ~self.interior_mask

    @cached_property
    def interior_flat(self) -> np.ndarray:
        return np.flatnonzero(self.interior_mask.ravel())

    @cached_property
    def boundary_flat(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_mask.ravel())

    def normal(self, face: Face) -> np.ndarray:
        nu = np.zeros(self.n)
        nu[face.axis] = float(face.side)
        return nu

    def face_slice(self, face: Face) -> tuple:
        """Index tuple selecting the nodes of a face from a full grid array."""
        sl = [slice(None)] * self.n
        sl[face.axis] = 0 if face.side < 0 else -1
        return tuple(sl)

    def face_axes(self, face: Face) -> tuple[int, ...]:
        return tuple(a for a in range(self.n) if a != face.axis)

    def face_coords(self, face: Face) -> list[np.ndarray]:
        """Coordinate arrays of the face nodes (full n-vector components)."""
        return [c[self.face_slice(face)] for c in self.coords]

    @cached_property
    def _face_weights(self) -> dict[tuple[int, int], np.ndarray]:
        out = {}
        for face in self.faces:
            w = np.ones(tuple(self.shape[a] for a in self.face_axes(face)))
            for k, a in enumerate(self.face_axes(face)):
                wa = np.full(self.shape[a], self.h[a])
                wa[0] *= 0.5
                wa[-1] *= 0.5
                shape = [1] * (self.n - 1)
                shape[k] = self.shape[a]
                w = w * wa.reshape(shape)
            out[face.key] = w
        return out

    def face_area_weights(self, face: Face) -> np.ndarray:
        """Trapezoid surface-quadrature weights on a face (sums to face area)."""
        return self._face_weights[face.key]

    @cached_property
    def volume_weights(self) -> np.ndarray:
        """Trapezoid volume-quadrature weights (sum equals the box volume)."""
        w = np.ones(self.shape)
        for a in range(self.n):
            wa = np.full(self.shape[a], self.h[a])
            wa[0] *= 0.5
            wa[-1] *= 0.5
            shape = [1] * self.n
            shape[a] = self.shape[a]
            w = w * wa.reshape(shape)
        return w

    # -- difference operators ------------------------------------------------

    @cached_property
    def diff_matrices(self) -> tuple[sp.csr_matrix, ...]:
        """Per-axis sparse first-derivative operators acting on C-raveled fields."""
        mats = []
        for a in range(self.n):
            s = _stencil_1d(self.shape[a], self.h[a])
            left = int(np.prod(self.shape[:a])) if a > 0 else 1
            right = int(np.prod(self.shape[a + 1:])) if a < self.n - 1 else 1
            m = s
            if left > 1:
                m = sp.kron(sp.identity(left, format="csr"), m, format="csr")
            if right > 1:
                m = sp.kron(m, sp.identity(right, format="csr"), format="csr")
            mats.append(m.tocsr())
        return tuple(mats)

    def __eq__(self, other):
        return (
            isinstance(other, Domain)
            and self.shape == other.shape
            and np.array_equal(self.extents, other.extents)
            and np.array_equal(self.origin, other.origin)
        )

    def __hash__(self):
        return hash((self.shape, tuple(self.extents), tuple(self.origin)))

    def __repr__(self):
        return f"Domain(extents={self.extents.tolist()}, resolution={self.shape}, origin={self.origin.tolist()})"


def build_domain(extents, resolution, origin=None) -> Domain:
    """Build an axis-aligned box grid; rejects dimensions outside {2,3}."""
    return Domain(extents, resolution, origin=origin)


# -- fields -------------------------------------------------------------------


def _check_same_domain(d1: Domain, d2: Domain):
    if not (d1 is d2 or d1 == d2):
        raise ValueError("fields live on different domains")


@dataclass
class ScalarField:
    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.domain.shape:
            raise ValueError(
                f"scalar field shape {self.values.shape} != grid shape {self.domain.shape}"
            )

    @classmethod
    def from_function(cls, domain: Domain, fn) -> "ScalarField":
        """Evaluate ``fn(*coords)`` on the node coordinates."""
        return cls(domain, np.asarray(fn(*domain.coords), dtype=float) * np.ones(domain.shape))

    @classmethod
    def constant(cls, domain: Domain, value: float) -> "ScalarField":
        return cls(domain, np.full(domain.shape, float(value)))


@dataclass
class VectorField:
    domain: Domain
    values: np.ndarray  # shape = grid shape + (n,)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.domain.shape + (self.domain.n,):
            raise ValueError("vector field shape mismatch")


@dataclass
class TensorField:
    domain: Domain
    values: np.ndarray  # shape = grid shape + (n, n), symmetric in the last two axes

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.domain.shape + (self.domain.n, self.domain.n):
            raise ValueError("tensor field shape mismatch")

    def check_symmetric(self, tol: float = 0.0):
        defect = np.max(np.abs(self.values - np.swapaxes(self.values, -1, -2)))
        if defect > tol:
            raise ValueError(f"tensor field not symmetric, defect {defect:g}")


def require_positive_weight(gamma: ScalarField):
    """A weight field must be strictly positive at every node."""
    mn = float(np.min(gamma.values))
    if not mn > 0.0:
        raise ValueError(f"weight must be strictly positive, min value {mn:g}")


# -- calculus -------------------------------------------------------------------


def gradient(u: ScalarField) -> VectorField:
    """Nodewise gradient: central interior stencils, one-sided on the boundary."""
    dom = u.domain
    flat = u.values.ravel()
    comps = [ (g @ flat).reshape(dom.shape) for g in dom.diff_matrices ]
    return VectorField(dom, np.stack(comps, axis=-1))


def divergence(v: VectorField) -> ScalarField:
    """Nodewise divergence with the same stencils as :func:`gradient`.

    The values are meaningful at interior nodes (the contract used by solver
    residuals); boundary rows use one-sided stencils for completeness.
    """
    dom = v.domain
    out = np.zeros(dom.shape)
    for a, g in enumerate(dom.diff_matrices):
        out += (g @ v.values[..., a].ravel()).reshape(dom.shape)
    return ScalarField(dom, out)


def boundary_trace(u: ScalarField) -> dict[tuple[int, int], np.ndarray]:
    """Per-face arrays of node values on the boundary."""
    dom = u.domain
    return {f.key: np.array(u.values[dom.face_slice(f)]) for f in dom.faces}


def normal_component(v: VectorField) -> dict[tuple[int, int], np.ndarray]:
    """Per-face outward normal component nu . v."""
    dom = v.domain
    out = {}
    for f in dom.faces:
        sl = dom.face_slice(f) + (f.axis,)
        out[f.key] = float(f.side) * np.array(v.values[sl])
    return out


def anisotropic_operator(domain: Domain, tensor_values: np.ndarray) -> sp.csr_matrix:
    """Sparse matrix of u -> div(T grad u) built from the difference stencils.

    ``tensor_values`` has shape grid + (n, n).  Rows are defined at every node;
    only interior rows are a consistent approximation of the divergence form.
    """
    mats = domain.diff_matrices
    n = domain.n
    total = None
    for a in range(n):
        for b in range(n):
            d = sp.diags(tensor_values[..., a, b].ravel())
            term = mats[a] @ d @ mats[b]
            total = term if total is None else total + term
    return total.tocsr()


# -- quadrature helpers ---------------------------------------------------------


def integrate_volume(domain: Domain, values: np.ndarray) -> float:
    return float(np.sum(domain.volume_weights * values))


def integrate_boundary(domain: Domain, face_values: dict) -> float:
    total = 0.0
    for f in domain.faces:
        total += float(np.sum(domain.face_area_weights(f) * face_values[f.key]))
    return total


def face_values_max_abs(face_values: dict) -> float:
    return max(float(np.max(np.abs(v))) for v in face_values.values())


def face_values_combine(fn, *face_values: dict) -> dict:
    """Apply ``fn`` elementwise across matching faces of several face maps."""
    keys = face_values[0].keys()
    return {k: fn(*(fv[k] for fv in face_values)) for k in keys}
