"""Angular-distribution estimators on the unit sphere.

Three reconstructions of the molecular-axis distribution from a Monte Carlo
ensemble:

* kde_snapshot: instantaneous kernel estimate, each molecule smeared by a
  spherical Gaussian exp(-(1 - r.r_i)/sigma^2)/(2 pi sigma^2);
* belt_average: per-molecule long-time average.  A freely rotating linear
  molecule covers a great circle, so its time-averaged density is a Gaussian
  "belt" exp(-(e_L.r)^2/(2 sigma^2)) around the plane normal to its angular
  momentum direction; a symmetric top covers its precession cone
  e_L.r = cos(theta_pr), handled by the same kernel recentered on the cone
  (the per-molecule normalization is then the exact truncated-Gaussian
  integral).  Molecules at rest contribute a point kernel at their position;
* analytic_zero_temp: the closed-form 1/(2 pi^2 sin theta) law for molecules
  kicked from rest by a single z-polarized pulse.

Grids are Gauss-Legendre in cos(theta) crossed with uniform phi, so the
normalization integral is spectrally accurate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from . import classical_linear as clin
from . import classical_symtop as csym
from .core import ParameterError, TWO_PI

DEFAULT_SIGMA = 0.1
_KERNEL_CUTOFF = 45.0    # exp(-45^2/2) ~ 1e-440; beyond this the kernel is zero
_MOL_CHUNK = 128


@dataclass
class DensityGrid:
    """Density samples rho(theta, phi) with quadrature weights (integral ~ 1)."""

    theta: np.ndarray          # (n_theta,) polar nodes, increasing
    phi: np.ndarray            # (n_phi,) azimuthal nodes, uniform
    rho: np.ndarray            # (n_theta, n_phi), >= 0
    theta_weights: np.ndarray  # Gauss-Legendre weights in cos(theta)
    meta: dict = field(default_factory=dict)

    @classmethod
    def build(cls, n_theta: int = 181, n_phi: int = 360) -> "DensityGrid":
        x, w = np.polynomial.legendre.leggauss(n_theta)
        order = np.argsort(-x)               # increasing theta = decreasing cos
        theta = np.arccos(x[order])
        phi = np.arange(n_phi) * (TWO_PI / n_phi)
        return cls(theta=theta, phi=phi, rho=np.zeros((n_theta, n_phi)),
                   theta_weights=w[order])

    def points(self) -> np.ndarray:
        """All grid nodes as unit vectors, shape (n_theta * n_phi, 3)."""
        st, ct = np.sin(self.theta), np.cos(self.theta)
        cp, sp = np.cos(self.phi), np.sin(self.phi)
        x = st[:, None] * cp[None, :]
        y = st[:, None] * sp[None, :]
        z = np.broadcast_to(ct[:, None], x.shape)
        return np.stack([x, y, z], axis=-1).reshape(-1, 3)

    def integral(self) -> float:
        dphi = TWO_PI / len(self.phi)
        return float(self.theta_weights @ self.rho.sum(axis=1) * dphi)

    def phi_average(self) -> np.ndarray:
        return self.rho.mean(axis=1)

    def moments(self) -> tuple[float, float, float]:
        """Quadrature second moments (<x^2>, <y^2>, <z^2>) of the density."""
        dphi = TWO_PI / len(self.phi)
        st2, ct2 = np.sin(self.theta) ** 2, np.cos(self.theta) ** 2
        cp2, sp2 = np.cos(self.phi) ** 2, np.sin(self.phi) ** 2
        wth = self.theta_weights
        mx = float(wth @ ((self.rho * cp2[None, :]).sum(axis=1) * st2) * dphi)
        my = float(wth @ ((self.rho * sp2[None, :]).sum(axis=1) * st2) * dphi)
        mz = float(wth @ (self.rho.sum(axis=1) * ct2) * dphi)
        return mx, my, mz


def _check_sigma(sigma: float):
    if not (0.0 < sigma <= 0.5):
        raise ParameterError(
            f"kernel width must be in (0, 0.5], got {sigma} "
            "(the small-angle form 1 - cos(a) ~ a^2/2 breaks down beyond)")


def _accumulate(grid_pts: np.ndarray, centers_or_axes: np.ndarray,
                kernel_of_dots) -> np.ndarray:
    """Sum kernel_of_dots(E_chunk @ grid^T) over molecule chunks."""
    total = np.zeros(grid_pts.shape[0])
    for a in range(0, centers_or_axes.shape[0], _MOL_CHUNK):
        dots = centers_or_axes[a:a + _MOL_CHUNK] @ grid_pts.T
        total += kernel_of_dots(dots).sum(axis=0)
    return total


def kde_at(at: np.ndarray, points: np.ndarray, sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    """Kernel density estimate evaluated at arbitrary unit vectors."""
    _check_sigma(sigma)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    at = np.atleast_2d(np.asarray(at, dtype=float))
    n = points.shape[0]
    if n < 1:
        raise ParameterError("need at least one point")
    norm = 1.0 / (2.0 * math.pi * sigma * sigma)

    def kern(dots):
        arg = np.minimum((1.0 - dots) / (sigma * sigma), 745.0)
        return np.exp(-arg)

    return _accumulate(at, points, kern) * (norm / n)


def kde_snapshot(points: np.ndarray, sigma: float = DEFAULT_SIGMA,
                 grid: DensityGrid | None = None) -> DensityGrid:
    """Instantaneous kernel density estimate from unit vectors (N, 3)."""
    grid = grid or DensityGrid.build()
    rho = kde_at(grid.points(), points, sigma)
    grid.rho = rho.reshape(len(grid.theta), len(grid.phi))
    grid.meta.update({"estimator": "kde", "sigma": sigma,
                      "n_molecules": np.atleast_2d(points).shape[0]})
    return grid


def belt_average(kind: str, r0: np.ndarray, v_or_L: np.ndarray,
                 sigma_belt: float = DEFAULT_SIGMA,
                 grid: DensityGrid | None = None) -> DensityGrid:
    """Long-time-averaged density from per-molecule rotation belts.

    kind "linear": v_or_L holds velocities, the belt normal is
    e_L = r0 x v0 / |v0| and the belt sits at e_L.r = 0.  kind "symtop":
    v_or_L holds angular momenta, the belt is the precession cone
    e_L.r = cos(theta_pr).  Molecules with no rotation of their axis (at rest,
    or axis parallel to L) contribute a point kernel at r0 instead.
    """
    _check_sigma(sigma_belt)
    if kind not in ("linear", "symtop"):
        raise ParameterError(f"unknown ensemble kind {kind!r}")
    r0 = np.atleast_2d(np.asarray(r0, dtype=float))
    w = np.atleast_2d(np.asarray(v_or_L, dtype=float))
    n = r0.shape[0]
    grid = grid or DensityGrid.build()
    gp = grid.points()
    s2 = sigma_belt * sigma_belt

    wnorm = np.linalg.norm(w, axis=-1)
    if kind == "linear":
        live = wnorm > clin.REST_SPEED
        centers = np.zeros(n)
    else:
        eL_all = w / np.maximum(wnorm, 1e-300)[:, None]
        cos_pr = np.clip(np.einsum("ij,ij->i", eL_all, r0), -1.0, 1.0)
        sin_pr = np.sqrt(np.clip(1.0 - cos_pr**2, 0.0, 1.0))
        live = (wnorm > csym.REST_MOMENTUM) & (sin_pr > csym.CONE_SIN)
        centers = cos_pr

    rho = np.zeros(gp.shape[0])

    if np.any(live):
        if kind == "linear":
            eL = np.cross(r0[live], w[live])
            eL /= np.linalg.norm(eL, axis=-1, keepdims=True)
            c = np.zeros(eL.shape[0])
        else:
            eL = eL_all[live]
            c = centers[live]
        # exact on-sphere normalization of the recentered Gaussian in u = e_L.r
        rt2 = math.sqrt(2.0) * sigma_belt
        mass = 0.5 * (erf((1.0 - c) / rt2) + erf((1.0 + c) / rt2))
        amp = 1.0 / (TWO_PI * math.sqrt(TWO_PI * s2) * mass)

        for a in range(0, eL.shape[0], _MOL_CHUNK):
            dots = eL[a:a + _MOL_CHUNK] @ gp.T
            dev = dots - c[a:a + _MOL_CHUNK, None]
            mask = np.abs(dev) < _KERNEL_CUTOFF * sigma_belt
            block = np.where(mask, np.exp(-np.minimum(dev * dev / (2.0 * s2), 745.0)), 0.0)
            rho += amp[a:a + _MOL_CHUNK] @ block

    if np.any(~live):
        pts = r0[~live]
        amp0 = 1.0 / (2.0 * math.pi * s2)

        def kern(dots):
            return np.exp(-np.minimum((1.0 - dots) / s2, 745.0))

        rho += amp0 * _accumulate(gp, pts, kern)

    grid.rho = (rho / n).reshape(len(grid.theta), len(grid.phi))
    grid.meta.update({"estimator": "belt", "sigma": sigma_belt, "n_molecules": n})
    return grid


def analytic_zero_temp(theta) -> np.ndarray:
    """Normalized time-averaged density 1/(2 pi^2 sin theta) (T = 0, one z-pulse)."""
    return 1.0 / (2.0 * math.pi**2 * np.sin(np.asarray(theta, dtype=float)))


def second_moments(kind: str, r0: np.ndarray, v_or_L: np.ndarray):
    """Ensemble- and time-averaged (<x^2>, <y^2>, <z^2>), computed analytically.

    The time average runs over each molecule's own closed trajectory (circle
    or precession cone) with uniform measure, so no numerical time stepping
    enters; the three moments sum to 1 exactly.
    """
    if kind not in ("linear", "symtop"):
        raise ParameterError(f"unknown ensemble kind {kind!r}")
    r0 = np.atleast_2d(np.asarray(r0, dtype=float))
    w = np.atleast_2d(np.asarray(v_or_L, dtype=float))
    n = r0.shape[0]
    per_mol = np.empty((n, 3))

    if kind == "linear":
        vn = np.linalg.norm(w, axis=-1)
        live = vn > clin.REST_SPEED
        vhat = w[live] / vn[live][:, None]
        per_mol[live] = 0.5 * (r0[live] ** 2 + vhat ** 2)
        per_mol[~live] = r0[~live] ** 2
    else:
        ens = csym.SymTopEnsemble(r0, w)
        live = ens.live
        c2 = ens.cth[live, None] ** 2
        s2 = ens.sth[live, None] ** 2
        per_mol[live] = (c2 * ens.eL[live] ** 2
                         + 0.5 * s2 * (ens.r0par[live] ** 2 + ens.vhat[live] ** 2))
        per_mol[~live] = r0[~live] ** 2

    m = per_mol.mean(axis=0)
    return float(m[0]), float(m[1]), float(m[2])
