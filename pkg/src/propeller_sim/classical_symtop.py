"""Deterministic dynamics of a kicked oblate symmetric top (benzene-like).

State is the molecular symmetry axis r (unit vector) and the dimensionless
angular momentum L (units hbar, time unit I_1/hbar).  The body-frame spin
about the symmetry axis is not tracked: it neither moves the axis nor couples
to a linearly polarized pulse.

Free motion is precession of r about L on a cone of half-angle theta_pr
(cos theta_pr = e_L . r) at rate Omega_pr = |L|:

    r(t) = cos(th) e_L + sin(th) (r0par cos(Om t) + vhat sin(Om t)),

with r0par = (r0 - cos(th) e_L)/sin(th) and v = L x r.  An impulsive kick
leaves r unchanged and adds

    dL = -P sin(2 beta0) e_{p x r} = -2 P (p . r) (p x r),

which has no component along r, so L3 = L . r is conserved by kicks as well
as by free motion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ParameterError, PulseSpec

REST_MOMENTUM = 1e-14     # |L| below this freezes the molecule
CONE_SIN = 1e-12          # sin(theta_pr) below which the axis is parallel to L


@dataclass(frozen=True)
class SymTopState:
    """Axis r and dimensionless angular momentum L of one symmetric top."""

    r: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        L = np.asarray(self.L, dtype=float)
        if r.shape != (3,) or L.shape != (3,):
            raise ParameterError("r and L must be 3-vectors")
        if abs(np.linalg.norm(r) - 1.0) > 1e-10:
            raise ParameterError(f"|r| must be 1, got {np.linalg.norm(r)}")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "L", L)

    @property
    def L3(self) -> float:
        """Body-axis angular momentum component (conserved)."""
        return float(self.L @ self.r)

    @property
    def omega_pr(self) -> float:
        """Precession rate |L| in dimensionless units."""
        return float(np.linalg.norm(self.L))

    @property
    def cos_theta_pr(self) -> float:
        Lm = self.omega_pr
        if Lm < REST_MOMENTUM:
            return 1.0
        return float(np.clip(self.L @ self.r / Lm, -1.0, 1.0))

    def energy(self, i1_over_i3: float = 0.5) -> float:
        """Kinetic energy in units hbar^2/I_1: Lpar^2/2 + (I_1/I_3) L3^2/2."""
        L2 = float(self.L @ self.L)
        L3 = self.L3
        return 0.5 * (L2 - L3 * L3) + 0.5 * i1_over_i3 * L3 * L3


class SymTopEnsemble:
    """Vectorized free-precession kinematics for (N, 3) arrays.

    The per-molecule cone geometry (e_L, cos/sin theta_pr, r0par, vhat) is
    computed once at construction so that positions at many times come at a
    dozen flops per molecule per time.
    """

    def __init__(self, r: np.ndarray, L: np.ndarray):
        self.r0 = r
        self.L = L
        Lm = np.linalg.norm(L, axis=-1)
        self.omega = Lm
        safe = np.maximum(Lm, REST_MOMENTUM)
        eL = L / safe[:, None]
        cth = np.clip(np.einsum("ij,ij->i", eL, r), -1.0, 1.0)
        sth = np.sqrt(np.clip(1.0 - cth * cth, 0.0, 1.0))
        self.live = (Lm > REST_MOMENTUM) & (sth > CONE_SIN)
        self.eL, self.cth, self.sth = eL, cth, sth
        self.r0par = np.zeros_like(r)
        self.vhat = np.zeros_like(r)
        idx = self.live
        self.r0par[idx] = (r[idx] - cth[idx, None] * eL[idx]) / sth[idx, None]
        v = np.cross(L[idx], r[idx])
        self.vhat[idx] = v / np.linalg.norm(v, axis=-1, keepdims=True)

    def positions(self, dt: float) -> np.ndarray:
        """Axis vectors after free precession by dimensionless time dt."""
        out = self.r0.copy()
        idx = self.live
        ang = self.omega[idx] * dt
        c, s = np.cos(ang)[:, None], np.sin(ang)[:, None]
        out[idx] = (self.cth[idx, None] * self.eL[idx]
                    + self.sth[idx, None] * (self.r0par[idx] * c + self.vhat[idx] * s))
        n = np.linalg.norm(out, axis=-1, keepdims=True)
        return out / n


def kick_momentum(r: np.ndarray, L: np.ndarray, P: float, p: np.ndarray) -> np.ndarray:
    """Vectorized angular-momentum change; dL = 0 when p is (anti)parallel to r."""
    cb = r @ p
    pxr = np.cross(np.broadcast_to(p, r.shape), r)
    dL = -2.0 * P * cb[..., None] * pxr
    degenerate = np.linalg.norm(pxr, axis=-1) < 1e-12
    if np.any(degenerate):
        dL[degenerate] = 0.0
    return L + dL


def propagate_symtop(state: SymTopState, dt: float) -> SymTopState:
    """Free precession by dimensionless time dt; frozen when |L| ~ 0 or r || L."""
    ens = SymTopEnsemble(state.r[None, :], state.L[None, :])
    return SymTopState(r=ens.positions(dt)[0], L=state.L)


def kick_symtop(state: SymTopState, pulse: PulseSpec) -> SymTopState:
    """Impulsive kick at frozen orientation; P carries the anisotropy sign."""
    L_new = kick_momentum(state.r[None, :], state.L[None, :], pulse.P, pulse.p_vec)[0]
    return SymTopState(r=state.r, L=L_new)
