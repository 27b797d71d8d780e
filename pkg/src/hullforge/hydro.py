"""Thin-ship wave resistance, ITTC-1957 skin friction, total-resistance scale.

Wave resistance of a slender hull moving at speed U:

    R_w = (4 rho g^2) / (pi U^2) * int_1^inf (I^2 + J^2) lambda^2 / sqrt(lambda^2 - 1) dlambda
    I + iJ = intint dy/dx (x, z) exp(k0 lambda^2 z) exp(i k0 lambda x) dz dx,   k0 = g / U^2

with z <= 0 downward from the free surface and y the local half-breadth.
The lambda integral is evaluated after substituting lambda = cosh(theta),
which removes the endpoint singularity and turns the weight into
cosh^2(theta).  The inner double integral treats the slope field as
piecewise linear and integrates each cell against its exponential weight
exactly, so the decay of deep cells is captured without resolution loss.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .config import GRID_DRAFTS, GRID_FROUDE, WaterConstants
from .errors import DomainError, QuadratureAccuracyWarning, SingularityError
from .geometry import HullParams, SlopeField, centerplane_slopes, waterline_bounds

MICHELL_PREFACTOR = 4.0     # classical thin-ship constant

# Defaults sized so that doubling every resolution moves R_w by well under
# 1% for Froude numbers down to the 0.10 grid floor.  The x direction
# dominates the error (slope kinks get smeared by sampling); the z integral
# is exact per cell and converges by nz ~ 48.
DEFAULT_THETA_NODES = 384
DEFAULT_PLANE_NX = 512
DEFAULT_PLANE_NZ = 48
LOW_FN_NX_FACTOR = 3        # extra x resolution for grid nodes below Fn 0.125
TAIL_TOLERANCE = 1e-6       # admissible relative tail of the theta integral
REFINEMENT_WARN = 0.01      # self-check disagreement that triggers a warning


@dataclass(frozen=True)
class FlowCondition:
    """Speed, scale and water properties for one resistance evaluation."""

    speed: float            # m/s
    loa: float              # m
    tstar: float            # draft ratio in (0, 1]
    rho: float = 1025.0     # kg/m^3
    g: float = 9.81         # m/s^2
    nu: float = 1.19e-6     # m^2/s

    def __post_init__(self):
        if self.speed < 0:
            raise DomainError("speed must be non-negative")
        if not 0.0 < self.tstar <= 1.0:
            raise DomainError("draft ratio must be in (0, 1]")
        if min(self.rho, self.g, self.nu) <= 0:
            raise DomainError("rho, g, nu must be positive")


@dataclass(frozen=True)
class ResistanceGrid:
    """Wave resistance (N) on the 4 draft x 8 Froude grid, at LOA = 1 m.

    Values rescale to any length by Froude similitude: R_w(LOA) =
    rw * LOA^3 at equal Froude number.
    """

    rw: np.ndarray
    drafts: tuple = GRID_DRAFTS
    froude: tuple = GRID_FROUDE

    def __post_init__(self):
        arr = np.asarray(self.rw, dtype=float)
        if arr.shape != (len(self.drafts), len(self.froude)):
            raise DomainError(f"grid must be {len(self.drafts)}x{len(self.froude)}")
        object.__setattr__(self, "rw", arr)


def froude_number(speed: float, wl: float, loa: float, g: float = 9.81) -> float:
    """F_n = U / sqrt(g * WL * LOA) with WL the LOA-normalized waterline."""
    if wl * loa <= 0:
        raise DomainError("waterline length must be positive")
    return speed / math.sqrt(g * wl * loa)


def speed_from_froude(fn: float, wl: float, loa: float, g: float = 9.81) -> float:
    if wl * loa <= 0:
        raise DomainError("waterline length must be positive")
    return fn * math.sqrt(g * wl * loa)


def friction_coefficient(reynolds: float) -> float:
    """ITTC-1957 correlation line: C_f = 0.075 / (log10(Re) - 2)^2."""
    if reynolds <= 100.0:
        raise SingularityError(f"ITTC line is singular for Re <= 100, got {reynolds}")
    return 0.075 / (math.log10(reynolds) - 2.0) ** 2


def friction_resistance(cond: FlowCondition, sa: float, wl: float) -> float:
    """Skin friction in Newtons from LOA-normalized wetted area and waterline.

    Re uses the waterline length (not LOA) as its length scale.
    """
    if sa < 0 or wl < 0:
        raise DomainError("wetted area and waterline must be non-negative")
    if sa == 0.0 or cond.speed == 0.0:
        return 0.0
    reynolds = cond.speed * wl * cond.loa / cond.nu
    cf = friction_coefficient(reynolds)
    return 0.5 * cf * cond.rho * cond.speed**2 * sa * cond.loa**2


def _linexp_weights(h):
    """Weights (A, B) with  int_0^1 (f0 (1-s) + f1 s) e^{h s} ds = f0 A + f1 B.

    h may be complex.  Series fallback keeps small-|h| cells stable.
    """
    h = np.asarray(h)
    small = np.abs(h) < 1e-5
    hs = np.where(small, 1.0, h)
    eh = np.exp(hs)
    a = (eh - 1.0 - hs) / hs**2
    b = (hs * eh - eh + 1.0) / hs**2
    a = np.where(small, 0.5 + h / 6.0 + h * h / 24.0, a)
    b = np.where(small, 0.5 + h / 3.0 + h * h / 8.0, b)
    return a, b


def _wave_amplitude(slopes: SlopeField, k0: float, lam: np.ndarray) -> np.ndarray:
    """I + iJ for each lambda node, by exact piecewise-linear cell quadrature."""
    x, z, f = slopes.x, slopes.z, slopes.dydx
    dz = z[1] - z[0]
    dx = x[1] - x[0]
    kappa = k0 * lam**2                       # vertical decay rates
    mu = k0 * lam                             # longitudinal wavenumbers

    # z-collapse: node weights from exact integration of PL * exp(kappa z).
    # A, B are folded into the node exponentials before exponentiating so
    # large kappa*dz never overflows (exp(kappa z) <= 1 throughout).  The
    # exponential table itself is built by a downward recurrence from the
    # waterline: one exp per lambda instead of nlam*nz.
    h = kappa[:, None] * dz                                    # (nlam, 1)
    decay = np.exp(-h)                                         # e^{-kappa dz} <= 1
    ez = np.empty((lam.size, z.size))
    ez[:, -1] = 1.0                                            # z = 0 row
    for k in range(z.size - 2, -1, -1):
        ez[:, k] = ez[:, k + 1] * decay[:, 0]
    lo, hi = ez[:, :-1], ez[:, 1:]
    small = np.abs(h) < 1e-5
    hs = np.where(small, 1.0, h)
    a_lo = np.where(small, (0.5 + h / 6.0 + h * h / 24.0) * lo,
                    (hi - lo - hs * lo) / hs**2)
    b_lo = np.where(small, (0.5 + h / 3.0 + h * h / 8.0) * lo,
                    (hs * hi - hi + lo) / hs**2)
    wz = np.zeros_like(ez)
    wz[:, :-1] += dz * a_lo
    wz[:, 1:] += dz * b_lo
    g = f @ wz.T                                               # (nx, nlam)

    # x sweep with complex exponential weights; the unit-modulus phase
    # table is a cumulative product along x (one exp per lambda node)
    ax, bx = _linexp_weights(1j * mu[:, None] * dx)
    ex = np.empty((lam.size, x.size), dtype=complex)
    ex[:, 0] = np.exp(1j * mu * x[0])
    step = np.exp(1j * mu * dx)
    np.cumprod(np.broadcast_to(step[:, None], (lam.size, x.size - 1)),
               axis=1, out=ex[:, 1:])
    ex[:, 1:] *= ex[:, :1]
    wx = np.zeros_like(ex)
    wx[:, :-1] += dx * ax * ex[:, :-1]
    wx[:, 1:] += dx * bx * ex[:, :-1]
    return np.einsum("lj,jl->l", wx, g)


def _theta_grid(k0: float, z: np.ndarray, n_theta: int):
    """Simpson nodes on [0, theta_max], theta_max from the exponential tail
    of the first subsurface layer (capped to a practical range)."""
    dz = abs(z[1] - z[0])
    lam_cut = math.sqrt(max(4.0, -math.log(1e-9) / (2.0 * k0 * dz)))
    theta_max = min(max(math.acosh(max(lam_cut, 1.5)), 2.5), 8.0)
    n = max(int(n_theta) | 1, 9)   # Simpson needs an odd node count
    return np.linspace(0.0, theta_max, n)


def _simpson(y: np.ndarray, dx: float) -> float:
    n = y.size
    s = y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum()
    return float(s * dx / 3.0)


def michell_wave_resistance(slopes: SlopeField, cond: FlowCondition, *,
                            n_theta: int = DEFAULT_THETA_NODES,
                            warn_threshold: float = REFINEMENT_WARN) -> float:
    """Wave-making resistance in Newtons for a centerplane slope field.

    The result is checked against the same integral on every other theta
    node; disagreement above ``warn_threshold`` raises a
    QuadratureAccuracyWarning (the value is still returned).  The theta
    range is extended until its last block contributes less than 1e-6 of
    the running total.
    """
    if cond.speed <= 0:
        raise DomainError("wave resistance needs a positive speed")
    k0 = cond.g / cond.speed**2
    theta = _theta_grid(k0, slopes.z, n_theta)

    def integrand(th):
        lam = np.cosh(th)
        amp = _wave_amplitude(slopes, k0, lam)
        return (amp.real**2 + amp.imag**2) * lam**2

    vals = integrand(theta)
    dthe = theta[1] - theta[0]
    total = _simpson(vals, dthe)

    # extend the truncation until the marginal block is negligible
    for _ in range(6):
        width = theta[-1] - theta[0]
        ext = np.linspace(theta[-1], theta[-1] + 0.25 * width, 33)
        ext_vals = integrand(ext)
        block = _simpson(ext_vals, ext[1] - ext[0])
        if total > 0 and block <= TAIL_TOLERANCE * total:
            break
        theta = np.concatenate([theta, ext[1:]])
        vals = np.concatenate([vals, ext_vals[1:]])
        total += block
    else:
        warnings.warn("theta tail failed to decay below tolerance",
                      QuadratureAccuracyWarning, stacklevel=2)

    prefac = MICHELL_PREFACTOR * cond.rho * cond.g**2 / (math.pi * cond.speed**2)
    rw = prefac * total

    # self-check: same integrand on every other node
    if vals.size >= 5 and vals.size % 2 == 1:
        coarse = prefac * _simpson(vals[::2], 2.0 * dthe)
        gap = abs(rw - coarse) / rw if rw > 0 else 0.0
        if gap > warn_threshold:
            warnings.warn(
                f"Michell quadrature self-check disagrees by {gap:.1%}",
                QuadratureAccuracyWarning, stacklevel=2)
    return rw


def resistance_grid(params: HullParams, water: WaterConstants | None = None, *,
                    n_theta: int = DEFAULT_THETA_NODES,
                    nx: int = DEFAULT_PLANE_NX,
                    nz: int = DEFAULT_PLANE_NZ) -> ResistanceGrid:
    """Evaluate the Michell integral on the 4x8 (draft, Froude) grid.

    The grid is computed at a reference LOA of 1 m; see ResistanceGrid for
    the similitude rescaling.  Speeds at each node come from the hull's own
    waterline length at that draft.
    """
    water = water or WaterConstants()
    ref = HullParams(1.0, params.shape)
    rw = np.empty((len(GRID_DRAFTS), len(GRID_FROUDE)))
    for i, tstar in enumerate(GRID_DRAFTS):
        slopes = centerplane_slopes(ref, tstar, nx, nz)
        fine = None
        x_aft, x_fwd = waterline_bounds(ref, tstar)
        wl = x_fwd - x_aft
        for j, fn in enumerate(GRID_FROUDE):
            field = slopes
            if fn < 0.125:   # short waves: denser sampling along x, and along
                             # z where the exponential decay layer is thin
                if fine is None:
                    fine = centerplane_slopes(ref, tstar, LOW_FN_NX_FACTOR * nx,
                                              2 * nz)
                field = fine
            speed = speed_from_froude(fn, wl, 1.0, water.g)
            cond = FlowCondition(speed=speed, loa=1.0, tstar=tstar,
                                 rho=water.rho, g=water.g, nu=water.nu)
            rw[i, j] = michell_wave_resistance(field, cond, n_theta=n_theta)
    return ResistanceGrid(rw=rw)


def interpolate_rw(grid: ResistanceGrid, tstar: float, fn: float) -> float:
    """Bilinear interpolation on the stored grid (still at LOA = 1 m).

    Froude numbers below the 0.10 grid floor are clamped to the edge with a
    warning; everything else outside the grid is a domain error.
    """
    drafts = np.asarray(grid.drafts)
    froude = np.asarray(grid.froude)
    if fn < froude[0]:
        if fn < 0.05 - 1e-12:
            raise DomainError(f"Froude number {fn} below supported range")
        warnings.warn("Froude number below simulation grid; clamped to 0.10",
                      stacklevel=2)
        fn = float(froude[0])
    if not drafts[0] <= tstar <= drafts[-1]:
        raise DomainError(f"draft ratio {tstar} outside grid {drafts[0]}..{drafts[-1]}")
    if fn > froude[-1] + 1e-12:
        raise DomainError(f"Froude number {fn} outside grid")
    fn = min(fn, float(froude[-1]))

    i = min(np.searchsorted(drafts, tstar, side="right"), drafts.size - 1)
    j = min(np.searchsorted(froude, fn, side="right"), froude.size - 1)
    i0, j0 = i - 1, j - 1
    ft = (tstar - drafts[i0]) / (drafts[i] - drafts[i0])
    ff = (fn - froude[j0]) / (froude[j] - froude[j0])
    row0 = grid.rw[i0, j0] * (1 - ff) + grid.rw[i0, j] * ff
    row1 = grid.rw[i, j0] * (1 - ff) + grid.rw[i, j] * ff
    return float(row0 * (1 - ft) + row1 * ft)


def rw_at_scale(grid: ResistanceGrid, tstar: float, fn: float, loa: float) -> float:
    """Grid wave resistance rescaled to a hull of the given LOA (Newtons)."""
    return interpolate_rw(grid, tstar, fn) * loa**3


def total_resistance_coefficient(rw: float, rf: float, cond: FlowCondition) -> float:
    """C_T = log10((R_w + R_f) / (0.5 rho U^2 LOA^2))."""
    total = rw + rf
    if total <= 0:
        raise DomainError("total resistance must be positive for the log scale")
    return math.log10(total / (0.5 * cond.rho * cond.speed**2 * cond.loa**2))


def predicted_total_resistance(c_t: float, cond: FlowCondition) -> float:
    """Inverse of the coefficient scale: R_T = 10^{C_T} * 0.5 rho U^2 LOA^2."""
    return 10.0**c_t * 0.5 * cond.rho * cond.speed**2 * cond.loa**2


GRID_COLUMNS = tuple(
    f"rw_{d:.2f}_{f:.2f}" for d in GRID_DRAFTS for f in GRID_FROUDE
)


def grid_to_row(grid: ResistanceGrid) -> list:
    return [float(v) for v in grid.rw.ravel()]


def grid_from_row(values) -> ResistanceGrid:
    arr = np.asarray([float(v) for v in values], dtype=float)
    return ResistanceGrid(rw=arr.reshape(len(GRID_DRAFTS), len(GRID_FROUDE)))
