"""Linearization of the weighted p-Laplace flux around a base solution.

The nonlinear flux map is J(xi) = |xi|^(p-2) xi with derivative

    dJ(xi) = |xi|^(p-2) (I + (p-2) xi xi^T / |xi|^2),

a symmetric matrix whose eigenvalues are |xi|^(p-2) {1, ..., 1, p-1}.
Around a base solution u0 with nonvanishing gradient the first variation of
the Dirichlet problem solves the linear anisotropic equation
div(A grad v) = 0 with A = gamma * dJ(grad u0), and the corresponding linear
DN map is the limit of difference quotients of the nonlinear one.  This
module provides that algebra, the linear solver and DN map on the same grid
discretization as the forward solver, the quotient convergence report, and
the rescaling that turns a weight constant along one axis into an isotropic
conductivity problem on a stretched box.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.sparse.linalg as spla

from . import psolve
from .grid import (
    Domain,
    ScalarField,
    TensorField,
    anisotropic_operator,
    face_values_combine,
    face_values_max_abs,
    gradient,
    normal_component,
    require_positive_weight,
)

__all__ = [
    "DegenerateInput",
    "DegenerateGradient",
    "SegmentDegenerate",
    "LinearizedProblem",
    "LinearizationReport",
    "RescaledProblem",
    "J",
    "dJ",
    "taylor_identity_check",
    "assemble_A",
    "solve_linear",
    "linear_boundary_flux",
    "dn_linear",
    "dn_finite_difference",
    "verify_linearization",
    "build_linearized_problem",
    "rescale_translation_invariant",
]


class DegenerateInput(Exception):
    """The flux map or its derivative was evaluated at (or too near) zero."""


class DegenerateGradient(Exception):
    """The base gradient vanishes somewhere, so the tensor A is undefined."""


class SegmentDegenerate(Exception):
    """An integration segment passes through (or too near) the origin."""


def J(xi, p: float) -> np.ndarray:
    """The flux map |xi|^(p-2) xi.

    At xi = 0 this is 0 for p > 2 and undefined for p < 2 (raises
    :class:`DegenerateInput`).
    """
    xi = np.asarray(xi, dtype=float)
    norm = float(np.linalg.norm(xi))
    if norm == 0.0:
        if p < 2.0:
            raise DegenerateInput("J undefined at xi = 0 for p < 2")
        return np.zeros_like(xi)
    return norm ** (p - 2.0) * xi


def dJ(xi, p: float) -> np.ndarray:
    """Derivative matrix |xi|^(p-2) (I + (p-2) xi xi^T/|xi|^2); needs xi != 0."""
    xi = np.asarray(xi, dtype=float)
    nsq = float(xi @ xi)
    if nsq == 0.0:
        raise DegenerateInput("dJ undefined at xi = 0")
    return nsq ** ((p - 2.0) / 2.0) * (np.eye(xi.size) + (p - 2.0) * np.outer(xi, xi) / nsq)


def segment_min_distance(xi, zeta) -> float:
    """Distance from the origin to the segment [xi, zeta]."""
    xi = np.asarray(xi, dtype=float)
    d = np.asarray(zeta, dtype=float) - xi
    dd = float(d @ d)
    t = 0.0 if dd == 0.0 else float(np.clip(-(xi @ d) / dd, 0.0, 1.0))
    return float(np.linalg.norm(xi + t * d))


def taylor_identity_check(zeta, xi, p: float, quad_tol: float = 1e-12) -> float:
    """Defect of J(zeta) = J(xi) + [int_0^1 dJ(xi + t (zeta - xi)) dt] (zeta - xi).

    The integral uses adaptive quadrature; the defect should sit at the
    quadrature tolerance whenever the segment stays away from the origin.
    """
    xi = np.asarray(xi, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    if np.array_equal(xi, zeta):
        return 0.0
    scale = max(np.linalg.norm(xi), np.linalg.norm(zeta))
    if segment_min_distance(xi, zeta) < 1e-9 * scale:
        raise SegmentDegenerate("segment from xi to zeta passes through the origin")
    d = zeta - xi
    integral, _err = scipy.integrate.quad_vec(
        lambda t: dJ(xi + t * d, p), 0.0, 1.0, epsabs=quad_tol, epsrel=quad_tol
    )
    defect = J(zeta, p) - J(xi, p) - integral @ d
    return float(np.max(np.abs(defect)))


# -- the linearized problem -------------------------------------------------------


@dataclass
class LinearizedProblem:
    A: TensorField
    u0: ScalarField
    phi0: ScalarField
    gamma: ScalarField
    p: float


def assemble_A(gamma: ScalarField, p: float, u0: ScalarField, grad_threshold: float = 1e-8) -> TensorField:
    """Nodewise tensor A = gamma * dJ(grad u0); requires |grad u0| > 0 everywhere."""
    require_positive_weight(gamma)
    dom = u0.domain
    g = gradient(u0).values
    gsq = np.sum(g**2, axis=-1)
    mn = float(np.sqrt(np.min(gsq)))
    if mn < grad_threshold:
        raise DegenerateGradient(
            f"minimum |grad u0| = {mn:.3e} below threshold {grad_threshold:.1e}"
        )
    kap = gsq ** ((p - 2.0) / 2.0)
    outer = g[..., :, None] * g[..., None, :]
    tensor = kap[..., None, None] * (np.eye(dom.n) + (p - 2.0) * outer / gsq[..., None, None])
    return TensorField(dom, gamma.values[..., None, None] * tensor)


def solve_linear(
    A: TensorField,
    phi: ScalarField | None = None,
    source: ScalarField | None = None,
    tol: float = 1e-8,
) -> ScalarField:
    """Solve div(A grad u) = -source with Dirichlet trace phi, by sparse LU.

    ``phi`` gives boundary values (full-grid field, boundary nodes used);
    omitted means zero trace.  ``source`` is a full-grid field read at
    interior nodes.  Raises :class:`psolve.NonConvergence` if the direct
    solve leaves a residual above ``tol`` (a singular or absurdly conditioned
    operator).
    """
    dom = A.domain
    op = anisotropic_operator(dom, A.values)
    int_idx, bnd_idx = dom.interior_flat, dom.boundary_flat
    u_flat = np.zeros(dom.n_nodes)
    if phi is not None:
        u_flat[bnd_idx] = phi.values.ravel()[bnd_idx]
    rhs = -(op[int_idx][:, bnd_idx] @ u_flat[bnd_idx])
    if source is not None:
        rhs = rhs - source.values.ravel()[int_idx]
    u_flat[int_idx] = spla.splu(op[int_idx][:, int_idx].tocsc()).solve(rhs)
    res = op @ u_flat
    if source is not None:
        res = res + source.values.ravel()
    res_norm = float(np.max(np.abs(res[int_idx])))
    # singularity guard: a healthy LU solve leaves residual near machine
    # precision times the operator scale
    op_scale = max(1.0, float(np.max(np.abs(op.data)))) * max(1.0, float(np.max(np.abs(u_flat))))
    if not np.isfinite(res_norm) or res_norm > tol * op_scale:
        raise psolve.NonConvergence(
            f"direct linear solve left residual {res_norm:.3e}", [res_norm]
        )
    return ScalarField(dom, u_flat.reshape(dom.shape))


def linear_boundary_flux(A: TensorField, u: ScalarField) -> dict:
    """Per-face conormal flux nu . (A grad u) with one-sided normal stencils."""
    dom = u.domain
    g = gradient(u).values
    ag = np.einsum("...ab,...b->...a", A.values, g)
    from .grid import VectorField  # local import to keep module top tidy

    return normal_component(VectorField(dom, ag))


def dn_linear(A: TensorField, phi: ScalarField, tol: float = 1e-8) -> dict:
    """Linear DN map for div(A grad u) = 0: Dirichlet data -> conormal flux."""
    u = solve_linear(A, phi, tol=tol)
    return linear_boundary_flux(A, u)


def build_linearized_problem(
    gamma: ScalarField, p: float, phi0: ScalarField, cfg: psolve.PSolveConfig | None = None
) -> LinearizedProblem:
    """Solve the base problem and assemble the linearization tensor at it."""
    sol = psolve.solve_p_laplace(gamma, p, phi0, cfg)
    A = assemble_A(gamma, p, sol.u)
    return LinearizedProblem(A=A, u0=sol.u, phi0=phi0, gamma=gamma, p=p)


# -- quotient verification --------------------------------------------------------


def dn_finite_difference(
    gamma: ScalarField,
    p: float,
    phi0: ScalarField,
    phi: ScalarField,
    eps: float,
    cfg: psolve.PSolveConfig | None = None,
) -> dict:
    """Difference quotient (DN(phi0 + eps phi) - DN(phi0)) / eps of the nonlinear map."""
    if cfg is None:
        cfg = psolve.PSolveConfig(p=p)
    base = psolve.dn_apply(gamma, p, phi0, cfg)
    dom = phi0.domain
    bumped = ScalarField(dom, phi0.values + eps * phi.values)
    shifted = psolve.dn_apply(gamma, p, bumped, cfg)
    return face_values_combine(lambda s, b: (s - b) / eps, shifted, base)


@dataclass
class LinearizationReport:
    eps_schedule: list[float]
    deviations: list[float]
    quotients: dict[float, dict] = field(repr=False, default_factory=dict)
    reference: dict = field(repr=False, default_factory=dict)
    floor_index: int = -1
    floor_value: float = float("nan")
    passed: bool = False

    def __post_init__(self):
        eps = self.eps_schedule
        if any(e2 >= e1 for e1, e2 in zip(eps, eps[1:])):
            raise ValueError("eps schedule must be strictly decreasing")
        if not all(np.isfinite(d) for d in self.deviations):
            raise ValueError("deviations must be finite")


def verify_linearization(
    gamma: ScalarField,
    p: float,
    phi0: ScalarField,
    phi: ScalarField,
    eps_schedule=None,
    cfg: psolve.PSolveConfig | None = None,
    tol_linear: float = 1e-10,
) -> LinearizationReport:
    """Measure how difference quotients of the nonlinear DN map approach the
    linear one, over a decreasing epsilon schedule.

    The verdict passes when the max-norm deviation from the linear DN flux is
    strictly decreasing up to its minimum (the discretization/solver floor);
    a failing verdict still returns the full history.
    """
    if eps_schedule is None:
        eps_schedule = [10.0**e for e in (-1.0, -1.5, -2.0, -2.5, -3.0)]
    eps_schedule = [float(e) for e in eps_schedule]
    if cfg is None:
        cfg = psolve.PSolveConfig(p=p, tol=1e-10)
    problem = build_linearized_problem(gamma, p, phi0, cfg)
    reference = dn_linear(problem.A, phi, tol=tol_linear)
    base = psolve.boundary_flux(gamma, p, problem.u0, cfg.eps_reg)
    dom = phi0.domain
    deviations = []
    quotients = {}
    for eps in eps_schedule:
        bumped = ScalarField(dom, phi0.values + eps * phi.values)
        shifted = psolve.dn_apply(gamma, p, bumped, cfg)
        quotient = face_values_combine(lambda s, b: (s - b) / eps, shifted, base)
        quotients[eps] = quotient
        deviations.append(
            face_values_max_abs(face_values_combine(lambda q, r: q - r, quotient, reference))
        )
    floor_index = int(np.argmin(deviations))
    decreasing = all(
        deviations[k + 1] < deviations[k] for k in range(floor_index)
    )
    return LinearizationReport(
        eps_schedule=eps_schedule,
        deviations=deviations,
        quotients=quotients,
        reference=reference,
        floor_index=floor_index,
        floor_value=deviations[floor_index],
        passed=decreasing,
    )


# -- rescaling reduction -----------------------------------------------------------


@dataclass
class RescaledProblem:
    """Isotropic conductivity problem equivalent to A = gamma (I + (p-2) z z^T).

    Obtained by stretching the box by 1/sqrt(p-1) along the distinguished axis.
    Node values carry over one-to-one; the conormal flux of the original
    anisotropic problem equals the isotropic flux times ``flux_scale`` on the
    two faces normal to the distinguished axis and matches it elsewhere.
    """

    domain: Domain
    weight: ScalarField
    axis: int
    stretch: float
    flux_scale: float


def rescale_translation_invariant(
    gamma: ScalarField, zeta, p: float, tol: float = 1e-8
) -> RescaledProblem:
    """Reduce the linearized problem for a weight with zeta . grad gamma = 0 to
    an isotropic conductivity problem on a stretched box.

    ``zeta`` must be axis-aligned; the directional derivative is checked
    numerically against ``tol``.
    """
    dom = gamma.domain
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape != (dom.n,):
        raise ValueError("zeta must be a grid-dimension vector")
    nz = np.flatnonzero(np.abs(zeta) > 1e-14)
    if nz.size != 1 or abs(abs(zeta[nz[0]]) - 1.0) > 1e-12:
        raise ValueError("zeta must be an axis-aligned unit vector")
    axis = int(nz[0])
    dgam = gradient(gamma).values[..., axis]
    dev = float(np.max(np.abs(dgam)))
    if dev > tol:
        raise ValueError(
            f"gamma varies along zeta: max |zeta . grad gamma| = {dev:.3e} > {tol:.1e}"
        )
    stretch = 1.0 / np.sqrt(p - 1.0)
    extents = np.array(dom.extents)
    origin = np.array(dom.origin)
    extents[axis] *= stretch
    origin[axis] *= stretch
    new_dom = Domain(extents, dom.shape, origin=origin)
    return RescaledProblem(
        domain=new_dom,
        weight=ScalarField(new_dom, np.array(gamma.values)),
        axis=axis,
        stretch=float(stretch),
        flux_scale=float(np.sqrt(p - 1.0)),
    )
