"""Layer stripping at a flat boundary point: jets of the weight from boundary data.

Geometry and conventions.  Everything happens at one boundary point z of a
3D domain whose boundary is flat near z.  Coordinates are rotated so the
outward normal is the +x1 axis (variable index 0 in code) and the domain
occupies x1 <= z1; depths into the domain move along -e1.  The measured data
is the gauge-fixed jet package a boundary-determination step would produce:
for every normal order m, the tangential Taylor expansions at z of
d^m/dx1^m applied to the linearization tensor entries A_jk, plus the
Dirichlet trace of the base solution u0 and its flux

    gamma |grad u0|^(p-2) d u0/dx1

on the patch.  The synthesizer in this module produces exactly that package
(with the trivial gauge) from an exact solution family.

Exact scenarios.  For a profile gamma(x) = profile(zeta . x) and
u0(x) = G(zeta . x) with G' = (c / profile)^(1/(p-1)), the nonlinear flux
gamma |grad u0|^(p-2) grad u0 = c zeta is constant, so the equation holds
identically and all jets are available in closed jet arithmetic.  The tilt
zeta must have nonzero normal and tangential parts so that the recovery is
nondegenerate at z.

Recovery.  Order 0 splits gamma(z), d1 u0(z) and |grad u0|(z) out of the
tangential block of A plus the flux.  Each induction step m solves a 3x3
linear system for the leading unknowns

    X = d1^m gamma(z),   Y = d1^(m+1) u0(z),   Z = gauge jet (expected 0),

whose rows are (i) the interior equation differentiated m-1 times in the
normal direction, (ii) the measured normal-normal tensor entry at order m,
(iii) the measured tangential-tangential entry in the rotated direction with
vanishing tangential slope.  The coefficient columns are never hand-expanded:
each row is an affine functional of (X, Y) evaluated by forward jet
arithmetic, so probing it at (0,0), (1,0), (0,1) recovers the affine map
exactly.  Run over the ring of tangential jets instead of scalars, the same
probing recovers whole tangential expansions per order, which is how mixed
(tangential x normal) derivatives are filled without finite differencing
(mode A).  Mode B runs the scalar solves only and copies mixed coefficients
from the oracle, isolating the linear-system logic for diagnosis.

The 3x3 determinant is evaluated two ways: a fixed cofactor expansion of the
assembled matrix (authoritative) and a verbatim closed-form expression kept
for documentation.  At gamma = 1, grad u0 = e1, p = 3 they give 4 and 6
respectively; the discrepancy is reproduced and logged on purpose, and both
forms stay nonzero on the admissible parameter range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .jets import (
    Expr,
    Jet,
    eval_jet,
    jet_compose1,
    jet_compose_linear,
    jet_const,
    jet_div,
    jet_partial,
    jet_pow,
    jet_truncate,
    jet_variable,
    parse_expr,
    set_normal_slice,
    extract_normal_slice,
)

__all__ = [
    "RecoveryError",
    "TangentialDegenerate",
    "NormalGradientZero",
    "IllConditioned",
    "Scenario",
    "BoundaryJets",
    "ThetaSystem",
    "Order0Result",
    "RecoveryState",
    "oracle_tilted_profile",
    "flux_divergence_jet",
    "synthesize_measurements",
    "rotate_measurements",
    "recover_order0",
    "recover_order0_2d",
    "theta_matrix",
    "theta_det_direct",
    "theta_det_closed_form",
    "probe_affine",
    "extract_affine_coefficients",
    "recover_order_m",
    "run_recovery",
    "taylor_reconstruct",
]


class RecoveryError(Exception):
    pass


class TangentialDegenerate(RecoveryError):
    """The tangential part of grad u0 at z is (numerically) zero."""


class NormalGradientZero(RecoveryError):
    """d u0/dx1 vanishes at z; the induction system is degenerate."""


class IllConditioned(RecoveryError):
    def __init__(self, order: int, cond: float, limit: float):
        self.order = order
        self.cond = cond
        super().__init__(
            f"order-{order} system condition number {cond:.3e} exceeds {limit:.1e}"
        )


# -- scenario and measurements ----------------------------------------------------


@dataclass
class Scenario:
    """Exact tilted-profile data for the recovery round trip.

    ``profile`` is an expression in x1 for the weight profile along the tilt;
    it must be positive near zeta . z.  ``zeta`` needs a nonzero normal
    component (zeta[0]) and a nonzero tangential part.
    """

    profile: Expr | str
    c: float
    zeta: np.ndarray
    p: float
    z: np.ndarray
    order: int

    def __post_init__(self):
        if isinstance(self.profile, str):
            self.profile = parse_expr(self.profile)
        self.zeta = np.asarray(self.zeta, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.zeta.shape != (3,) or self.z.shape != (3,):
            raise ValueError("scenario lives in three dimensions")
        if abs(np.linalg.norm(self.zeta) - 1.0) > 1e-12:
            raise ValueError("zeta must be a unit vector")
        if abs(self.zeta[0]) < 1e-10:
            raise ValueError("zeta must have a nonzero normal component")
        if np.hypot(self.zeta[1], self.zeta[2]) < 1e-10:
            raise ValueError("zeta must have a nonzero tangential part")
        if not self.c > 0.0:
            raise ValueError("flux constant c must be positive")
        if not (self.p > 1.0 and self.p != 2.0):
            raise ValueError("p must lie in (1,2) or (2,inf)")
        if self.order < 3:
            raise ValueError("jet order must be at least 3")


@dataclass
class BoundaryJets:
    """Gauge-fixed boundary measurement package at the point z.

    ``a[(j, k)][m]`` is the tangential jet (variables = offsets along axes 1
    and 2) of the m-th normal derivative of the tensor entry A_jk, truncated
    at tangential order ``order - m``.  ``trace`` and ``flux`` are the
    tangential jets of u0 and of its conormal flux on the patch.
    """

    p: float
    order: int
    a: dict[tuple[int, int], list[Jet]]
    trace: Jet
    flux: Jet
    gauge_identity: bool = True


def _linear_form_jet(coeffs: np.ndarray, const: float, nvars: int, order: int) -> Jet:
    out = jet_const(nvars, order, const)
    for i, ci in enumerate(coeffs):
        if ci != 0.0:
            out = out + ci * jet_variable(nvars, order, i)
    return out


def oracle_tilted_profile(sc: Scenario) -> tuple[Jet, Jet]:
    """Exact jets of (gamma, u0) at z for the tilted-profile family.

    gamma(x) = profile(zeta . x), u0(x) = G(zeta . x) with
    G' = (c / profile)^(1/(p-1)) and G(zeta . z) normalized to zeta . z, so
    the constant-profile case collapses to u0 = zeta . x.
    """
    n = sc.order
    s0 = float(sc.zeta @ sc.z)
    prof = eval_jet(sc.profile, (s0,), n)
    if prof.value <= 0.0:
        raise ValueError(f"profile must be positive at zeta . z, got {prof.value:g}")
    gprime = jet_pow(jet_div(jet_const(1, n, sc.c), prof), 1.0 / (sc.p - 1.0))
    # antiderivative with G(s0) = s0
    gcoeffs = np.zeros(n + 2)
    gcoeffs[0] = s0
    for k in range(1, n + 2):
        if k - 1 <= n:
            gcoeffs[k] = gprime.coeffs[(k - 1,)] / k
    g_jet = Jet(1, n + 1, gcoeffs)

    s3_n = _linear_form_jet(sc.zeta, s0, 3, n)
    s3_np1 = _linear_form_jet(sc.zeta, s0, 3, n + 1)
    gamma_jet = jet_compose1(prof, s3_n)
    u0_jet = jet_compose1(g_jet, s3_np1)
    return gamma_jet, u0_jet


def _a_entries(gamma_jet: Jet, u0_jet: Jet, p: float) -> tuple[dict, Jet, list[Jet]]:
    """Full jets of the tensor entries, the flux, and the gradient components."""
    grads = [jet_partial(u0_jet, a) for a in range(3)]
    w2 = grads[0] * grads[0] + grads[1] * grads[1] + grads[2] * grads[2]
    if w2.value <= 0.0:
        raise NormalGradientZero("grad u0 vanishes at z")
    kappa = jet_pow(w2, (p - 2.0) / 2.0)
    gk = gamma_jet * kappa
    entries = {}
    for j in range(3):
        for k in range(j, 3):
            term = (p - 2.0) * jet_div(grads[j] * grads[k], w2)
            if j == k:
                term = term + 1.0
            entries[(j, k)] = gk * term
            if j != k:
                entries[(k, j)] = entries[(j, k)]
    flux = gk * grads[0]
    return entries, flux, grads


def flux_divergence_jet(gamma_jet: Jet, u0_jet: Jet, p: float) -> Jet:
    """Jet of div(gamma |grad u0|^(p-2) grad u0); identically zero for exact data."""
    grads = [jet_partial(u0_jet, a) for a in range(3)]
    w2 = grads[0] * grads[0] + grads[1] * grads[1] + grads[2] * grads[2]
    kappa = jet_pow(w2, (p - 2.0) / 2.0)
    gk = gamma_jet * kappa
    out = None
    for a in range(3):
        term = jet_partial(gk * grads[a], a)
        out = term if out is None else out + term
    return out


def synthesize_measurements(gamma_jet: Jet, u0_jet: Jet, p: float) -> BoundaryJets:
    """Boundary measurement package from exact jets, in the trivial gauge."""
    n = gamma_jet.order
    if u0_jet.order != n + 1:
        raise ValueError("u0 jet must carry one order more than the gamma jet")
    entries, flux, _grads = _a_entries(gamma_jet, u0_jet, p)
    a: dict[tuple[int, int], list[Jet]] = {}
    for key, jet in entries.items():
        a[key] = [extract_normal_slice(jet, m) for m in range(n + 1)]
    return BoundaryJets(
        p=p,
        order=n,
        a=a,
        trace=extract_normal_slice(u0_jet, 0),
        flux=extract_normal_slice(flux, 0),
        gauge_identity=True,
    )


def rotate_measurements(bj: BoundaryJets) -> tuple[BoundaryJets, np.ndarray]:
    """Rotate the tangential coordinates so the tangential slope of u0 at z
    points along the first tangent axis (a Givens rotation applied to jets).

    Returns the rotated package and the 2x2 basis matrix W whose columns are
    the new tangent directions in the old coordinates.
    """
    t1 = bj.trace.derivative((1, 0))
    t2 = bj.trace.derivative((0, 1))
    r = math.hypot(t1, t2)
    if r < 1e-12:
        raise TangentialDegenerate("tangential slope of the trace vanishes at z")
    w = np.array([[t1 / r, -t2 / r], [t2 / r, t1 / r]])
    if np.allclose(w, np.eye(2), atol=1e-15):
        return bj, np.eye(2)
    rot3 = np.eye(3)
    rot3[1:, 1:] = w

    def comp(jet: Jet) -> Jet:
        return jet_compose_linear(jet, w)

    composed = {key: [comp(s) for s in slices] for key, slices in bj.a.items()}
    a_new: dict[tuple[int, int], list[Jet]] = {}
    for aa in range(3):
        for bb in range(aa, 3):
            comps = None
            for j in range(3):
                for k in range(3):
                    coef = rot3[j, aa] * rot3[k, bb]
                    if coef == 0.0:
                        continue
                    term = [coef * s for s in composed[(j, k)]]
                    comps = term if comps is None else [x + y for x, y in zip(comps, term)]
            a_new[(aa, bb)] = comps
            a_new[(bb, aa)] = comps  # exact symmetry by sharing
    return (
        BoundaryJets(
            p=bj.p,
            order=bj.order,
            a=a_new,
            trace=comp(bj.trace),
            flux=comp(bj.flux),
            gauge_identity=bj.gauge_identity,
        ),
        w,
    )


# -- order 0 -----------------------------------------------------------------------


@dataclass
class Order0Result:
    gamma_z: float
    normal_slope: float       # d u0/dx1 at z
    grad_norm: float          # |grad u0| at z
    gamma_jet: Jet            # tangential jet of gamma on the patch
    slope_jet: Jet            # tangential jet of d u0/dx1 on the patch
    kappa_jet: Jet
    consistency: float        # | |grad'|^2 + slope^2 - |grad|^2 | over the patch jets


def recover_order0(bj: BoundaryJets, threshold: float = 1e-8) -> Order0Result:
    """Split gamma(z), the normal slope and the gradient norm out of the
    order-0 tensor block and the flux.

    Uses the tangential block contracted with the measured tangential slope:
    trace minus the slope-direction quadratic form isolates
    kappa = gamma |grad u0|^(p-2); the p-2 part then gives |grad u0|^2, and
    the flux divides out to the normal slope.  Everything is done in
    tangential-jet arithmetic so the result carries whole patch expansions.
    """
    n = bj.order
    g1 = jet_partial(bj.trace, 0)
    g2 = jet_partial(bj.trace, 1)
    g1 = jet_truncate(g1, n)
    g2 = jet_truncate(g2, n)
    gp2 = g1 * g1 + g2 * g2
    if gp2.value < threshold**2:
        raise TangentialDegenerate(
            f"|tangential grad u0(z)| = {math.sqrt(max(gp2.value, 0.0)):.3e} below threshold"
        )
    a11, a12, a22 = bj.a[(1, 1)][0], bj.a[(1, 2)][0], bj.a[(2, 2)][0]
    s = jet_div(g1 * (a11 * g1 + a12 * g2) + g2 * (a12 * g1 + a22 * g2), gp2)
    kappa = (a11 + a22) - s
    denom = s - kappa
    if abs(denom.value) < 1e-14 * max(1.0, abs(kappa.value)):
        raise RecoveryError("tensor block is isotropic; cannot separate the gradient norm")
    w2 = jet_div((bj.p - 2.0) * (gp2 * kappa), denom)
    slope = jet_div(bj.flux, kappa)
    gamma0 = kappa * jet_pow(w2, (2.0 - bj.p) / 2.0)
    cons = slope * slope + gp2 - w2
    return Order0Result(
        gamma_z=gamma0.value,
        normal_slope=slope.value,
        grad_norm=math.sqrt(w2.value),
        gamma_jet=gamma0,
        slope_jet=slope,
        kappa_jet=kappa,
        consistency=float(np.max(np.abs(cons.coeffs))),
    )


def recover_order0_2d(a_tangent: float, tangential_slope: float, flux: float, p: float):
    """Order-0 identification in two dimensions (single tangent direction).

    Unknowns gamma and d = normal slope from the tangential tensor entry
    q = tau . A tau, the tangential slope t of the trace, and the flux value.
    Eliminating gamma leaves the cubic q d (d^2 + t^2) = flux (d^2 + (p-1) t^2)
    whose unique admissible root (sign matching the flux) is required.
    """
    q, t, phi = float(a_tangent), float(tangential_slope), float(flux)
    if abs(t) < 1e-12:
        raise TangentialDegenerate("tangential slope vanishes; 2D split needs it")
    if abs(phi) < 1e-14:
        raise NormalGradientZero("flux vanishes at z, so the normal slope does too")
    roots = np.roots([q, -phi, q * t * t, -phi * (p - 1.0) * t * t])
    admissible: list[float] = []
    for root in roots:
        if abs(root.imag) > 1e-9 * max(1.0, abs(root)):
            continue
        d = float(root.real)
        if d * phi <= 0.0:
            continue
        # keep distinct roots only (np.roots may split a double root)
        if all(abs(d - other) > 1e-9 * max(1.0, abs(d)) for other in admissible):
            admissible.append(d)
    if len(admissible) != 1:
        raise RecoveryError(
            f"expected a unique admissible normal slope, found {sorted(admissible)}"
        )
    d = admissible[0]
    kappa = phi / d
    w2 = d * d + t * t
    gamma = kappa * w2 ** ((2.0 - p) / 2.0)
    return gamma, d, math.sqrt(w2)


# -- the 3x3 induction system -------------------------------------------------------


@dataclass
class ThetaSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    order: int
    direction: int
    labels: tuple[str, str, str] = (
        "normal derivative of gamma",
        "next normal derivative of u0",
        "gauge jet",
    )

    @property
    def cond(self) -> float:
        return float(np.linalg.cond(self.matrix))


def theta_matrix(gamma_z: float, grad_u0: np.ndarray, p: float, j: int = 2) -> np.ndarray:
    """The 3x3 coefficient matrix of the induction step, assembled from the
    closed-form entries (point values at z).

    ``grad_u0`` is the full gradient at z; ``j`` names the tangential axis
    used for the third row, normally rotated so grad_u0[j] = 0.
    """
    grad_u0 = np.asarray(grad_u0, dtype=float)
    d = grad_u0[0]
    w2 = float(grad_u0 @ grad_u0)
    if abs(d) < 1e-14 or w2 <= 0.0:
        raise NormalGradientZero("theta matrix needs a nonzero normal slope")
    if j not in (1, 2):
        raise ValueError("j must name a tangential axis (1 or 2)")
    r = d * d / w2
    tj = grad_u0[j]
    rj = tj * tj / w2
    kp2 = w2 ** ((p - 2.0) / 2.0)
    kp4 = w2 ** ((p - 4.0) / 2.0)
    th = np.zeros((3, 3))
    th[0, 0] = d * kp2
    th[0, 1] = gamma_z * kp2 * (1.0 + (p - 2.0) * r)
    th[0, 2] = 0.0
    th[1, 0] = kp2 * (1.0 + (p - 2.0) * r)
    th[1, 1] = (p - 2.0) * gamma_z * d * kp4 * (3.0 + (p - 4.0) * r)
    th[1, 2] = gamma_z * kp2 * (1.0 + (p - 2.0) * r)
    th[2, 0] = kp2 * (1.0 + (p - 2.0) * rj)
    th[2, 1] = (p - 2.0) * gamma_z * d * kp4 * (1.0 + (p - 4.0) * rj)
    th[2, 2] = -gamma_z * kp2 * (1.0 + (p - 2.0) * rj)
    return th


def theta_det_direct(theta: np.ndarray) -> float:
    """Cofactor expansion along the first row, in a fixed arithmetic order.

    This is the authoritative determinant of the induction system.
    """
    m = np.asarray(theta, dtype=float)
    return float(
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )


def theta_det_closed_form(gamma_z: float, grad_u0: np.ndarray, p: float) -> float:
    """Documented closed-form determinant expression, evaluated verbatim:

        gamma^2 |grad|^(3p-8) [ 2 |grad|^2 + (p-2) d^2 + p (p-2) d^4 / |grad|^2 ].

    Kept for the record: at gamma = 1, grad = e1, p = 3 it gives 6 while the
    cofactor expansion of the assembled matrix gives 4 (a row-reduction slip
    in the derivation of the closed form).  Both stay positive for all
    p in (1,2) or (2,inf) and 0 < d <= |grad|, which is the property the
    induction actually needs; the cofactor value is authoritative.
    """
    grad_u0 = np.asarray(grad_u0, dtype=float)
    d = grad_u0[0]
    w2 = float(grad_u0 @ grad_u0)
    lam = gamma_z**2 * w2 ** ((3.0 * p - 8.0) / 2.0)
    return float(lam * (2.0 * w2 + (p - 2.0) * d * d + p * (p - 2.0) * d**4 / w2))


def probe_affine(fn, zero, one):
    """Exact reconstruction of an affine map (x, y) -> fn(x, y) from three probes.

    Returns (fn(0,0), x-coefficient, y-coefficient); exact because affine maps
    are determined by finitely many evaluations.
    """
    f00 = fn(zero, zero)
    lx = fn(one, zero) - f00
    ly = fn(zero, one) - f00
    return f00, lx, ly


@dataclass
class RecoveryState:
    p: float
    order: int
    gamma: Jet
    u0: Jet
    filled_order: int
    mode: str
    order0: Order0Result
    conds: list[float] = field(default_factory=list)
    gauge_residuals: list[float] = field(default_factory=list)
    theta_systems: list[ThetaSystem] = field(default_factory=list)
    rotation: np.ndarray = field(default_factory=lambda: np.eye(2))


def _candidate_jets(state: RecoveryState, m: int, x: Jet, y: Jet) -> tuple[Jet, Jet]:
    gam = set_normal_slice(state.gamma, m, x)
    u0 = set_normal_slice(state.u0, m + 1, y)
    return gam, u0


def _step_functional(state: RecoveryState, m: int):
    """The three affine row functionals of the order-m system."""

    def rows(x: Jet, y: Jet):
        gam, u0 = _candidate_jets(state, m, x, y)
        entries, _flux, _grads = _a_entries(gam, u0, state.p)
        div = flux_divergence_jet(gam, u0, state.p)
        f1 = extract_normal_slice(div, m - 1)
        f2 = extract_normal_slice(entries[(0, 0)], m)
        f3 = extract_normal_slice(entries[(2, 2)], m)
        return f1, f2, f3

    return rows


def extract_affine_coefficients(state: RecoveryState, bj: BoundaryJets, m: int):
    """Probe the order-m forward functionals and assemble the 3x3 system.

    Returns (rows, rhs, theta) where rows[i] = (coefficient jets of X, Y, Z),
    rhs[i] is the measured-minus-known jet, and theta records the scalar
    (constant-term) system for reporting.
    """
    if state.filled_order != m - 1:
        raise RecoveryError(
            f"state is filled to order {state.filled_order}, cannot run order {m}"
        )
    nt = state.order - m
    zero = jet_const(2, nt, 0.0)
    one = jet_const(2, nt, 1.0)
    rows_fn = _step_functional(state, m)
    f0 = rows_fn(zero, zero)
    fx = rows_fn(one, zero)
    fy = rows_fn(zero, one)
    lx = tuple(a - b for a, b in zip(fx, f0))
    ly = tuple(a - b for a, b in zip(fy, f0))
    gauge2 = jet_truncate(bj.a[(0, 0)][0], nt)
    gauge3 = -jet_truncate(bj.a[(2, 2)][0], nt)
    rows = [
        (lx[0], ly[0], zero),
        (lx[1], ly[1], gauge2),
        (lx[2], ly[2], gauge3),
    ]
    rhs = [
        -f0[0],
        jet_truncate(bj.a[(0, 0)][m], nt) - f0[1],
        jet_truncate(bj.a[(2, 2)][m], nt) - f0[2],
    ]
    matrix = np.array([[c.value for c in row] for row in rows])
    theta = ThetaSystem(
        matrix=matrix,
        rhs=np.array([r.value for r in rhs]),
        order=m,
        direction=2,
    )
    return rows, rhs, theta


def _cramer3(rows, rhs):
    """Cramer solve of a 3x3 system over the tangential-jet ring, with the
    same fixed cofactor order as :func:`theta_det_direct`."""
    (a1, b1, c1), (a2, b2, c2), (a3, b3, c3) = rows
    r1, r2, r3 = rhs

    def det3(m11, m12, m13, m21, m22, m23, m31, m32, m33):
        return (
            m11 * (m22 * m33 - m23 * m32)
            - m12 * (m21 * m33 - m23 * m31)
            + m13 * (m21 * m32 - m22 * m31)
        )

    det = det3(a1, b1, c1, a2, b2, c2, a3, b3, c3)
    det_x = det3(r1, b1, c1, r2, b2, c2, r3, b3, c3)
    det_y = det3(a1, r1, c1, a2, r2, c2, a3, r3, c3)
    det_z = det3(a1, b1, r1, a2, b2, r2, a3, b3, r3)
    x = jet_div(det_x, det)
    y = jet_div(det_y, det)
    z = jet_div(det_z, det)
    return x, y, z


def recover_order_m(
    state: RecoveryState,
    bj: BoundaryJets,
    m: int,
    mode: str | None = None,
    oracle: tuple[Jet, Jet] | None = None,
    cond_limit: float = 1e8,
) -> RecoveryState:
    """One induction step: fill d1^m gamma and d1^(m+1) u0 at z.

    In mode "A" the solve happens over the tangential-jet ring, so the filled
    rows carry their mixed tangential coefficients.  In mode "B" only the
    scalar solve runs and mixed coefficients copy from the oracle jets (given
    in the same frame as the state).
    """
    mode = mode or state.mode
    rows, rhs, theta = extract_affine_coefficients(state, bj, m)
    cond = theta.cond
    if cond > cond_limit:
        raise IllConditioned(m, cond, cond_limit)
    if mode == "A":
        x, y, z = _cramer3(rows, rhs)
    elif mode == "B":
        sol = np.linalg.solve(theta.matrix, theta.rhs)
        nt = state.order - m
        if oracle is None:
            raise ValueError("mode B needs the oracle jets")
        x = _with_value(extract_normal_slice(oracle[0], m), float(sol[0]), nt)
        y = _with_value(extract_normal_slice(oracle[1], m + 1), float(sol[1]), nt)
        z = jet_const(2, nt, float(sol[2]))
    else:
        raise ValueError(f"unknown recovery mode {mode!r}")
    state.gamma = set_normal_slice(state.gamma, m, x)
    state.u0 = set_normal_slice(state.u0, m + 1, y)
    state.filled_order = m
    state.conds.append(cond)
    state.gauge_residuals.append(float(np.max(np.abs(z.coeffs))))
    state.theta_systems.append(theta)
    return state


def _with_value(jet: Jet, value: float, order: int) -> Jet:
    """Copy of a jet at a target order with its constant term replaced."""
    if jet.order > order:
        jet = jet_truncate(jet, order)
    c = np.array(jet.coeffs)
    if jet.order < order:
        c = np.pad(c, [(0, order - jet.order)] * jet.nvars)
    c[(0,) * jet.nvars] = value
    return Jet(jet.nvars, order, c)


def run_recovery(
    bj: BoundaryJets,
    mode: str = "A",
    oracle: tuple[Jet, Jet] | None = None,
    max_order: int | None = None,
    cond_limit: float = 1e8,
) -> RecoveryState:
    """Full recovery pipeline: rotate, split order 0, run the induction, and
    rotate the recovered jets back to the input frame.

    ``max_order`` defaults to ``bj.order - 2``, the deepest normal order of
    gamma the measurement package determines exactly.
    """
    n = bj.order
    if max_order is None:
        max_order = n - 2
    if max_order > n - 2:
        raise ValueError(f"max_order {max_order} exceeds recoverable depth {n - 2}")
    bj_rot, w = rotate_measurements(bj)
    rot3 = np.eye(3)
    rot3[1:, 1:] = w
    if mode == "B":
        if oracle is None:
            raise ValueError("mode B needs the oracle jets")
        oracle = (
            jet_compose_linear(oracle[0], rot3),
            jet_compose_linear(oracle[1], rot3),
        )

    o0 = recover_order0(bj_rot)
    gamma = jet_const(3, n, 0.0)
    u0 = jet_const(3, n + 1, 0.0)
    if mode == "B":
        gamma = set_normal_slice(
            gamma, 0, _with_value(extract_normal_slice(oracle[0], 0), o0.gamma_z, n)
        )
        u0 = set_normal_slice(u0, 0, extract_normal_slice(oracle[1], 0))
        u0 = set_normal_slice(
            u0, 1, _with_value(extract_normal_slice(oracle[1], 1), o0.normal_slope, n)
        )
    else:
        gamma = set_normal_slice(gamma, 0, o0.gamma_jet)
        u0 = set_normal_slice(u0, 0, bj_rot.trace)
        u0 = set_normal_slice(u0, 1, o0.slope_jet)
    state = RecoveryState(
        p=bj.p,
        order=n,
        gamma=gamma,
        u0=u0,
        filled_order=0,
        mode=mode,
        order0=o0,
        rotation=w,
    )
    for m in range(1, max_order + 1):
        recover_order_m(state, bj_rot, m, mode=mode, oracle=oracle, cond_limit=cond_limit)
    if not np.allclose(w, np.eye(2), atol=1e-15):
        back = np.eye(3)
        back[1:, 1:] = w.T
        state.gamma = jet_compose_linear(state.gamma, back)
        state.u0 = jet_compose_linear(state.u0, back)
    return state


def taylor_reconstruct(state: RecoveryState, depths) -> np.ndarray:
    """Partial Taylor sums of gamma at z - s e1 from the recovered normal jets."""
    depths = np.asarray(depths, dtype=float)
    if np.any(depths <= 0.0):
        raise ValueError("depths must be positive")
    out = np.zeros_like(depths)
    for m in range(state.filled_order + 1):
        cm = state.gamma.coefficient((m, 0, 0))
        out += cm * (-depths) ** m
    return out
