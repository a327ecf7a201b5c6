"""Rotational wave-packet dynamics of a linear rigid rotor.

Works in the classical frame (z along the first pulse) with a truncated
|l, m> spherical-harmonic basis, 0 <= l <= l_max.  Dimensionless energies are
e_l = l(l+1)/2, so one revival period is t' = 2 pi exactly and every
observable trace is periodic in it.

An impulsive pulse applies the unitary exp(i P cos^2 beta) with
cos beta = p . r_hat; the rank-2 interaction matrix follows from the
spherical-harmonic addition theorem, so tilted polarizations are handled in
the fixed frame without rotations.  Finite pulses integrate the coupled
coefficient equations with an adaptive Runge-Kutta pair and converge to the
sudden limit as the FWHM goes to zero.

Thermal averaging sums per-initial-state traces with Boltzmann weights
(optionally modified by a nuclear-spin weight hook); the traces themselves
are evaluated by frequency grouping (spectral.SpectralTrace), whose
zero-frequency bin also provides exact revival-period averages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import expm_multiply

from . import angular
from .core import (IntegrationError, MoleculeParams, ParameterError,
                   ProtocolError, PulseSpec, TruncationError, TWO_PI, sigma_th)
from .ensemble import TimeSeries, first_local_extremum, parabolic_vertex
from .spectral import SpectralTrace, accumulate_pattern

SCAN_STEP = TWO_PI / 2000.0
HEADROOM_BAND = 4          # top l band that must stay unpopulated
HEADROOM_TOL = 1e-10
WEIGHT_CUTOFF = 0.9999


@dataclass(frozen=True)
class SparseOp:
    """COO triplets of a Hermitian operator in the |l, m> basis."""

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    def to_csr(self, size: int) -> csr_matrix:
        return csr_matrix((self.vals, (self.rows, self.cols)), shape=(size, size))


class LinearBasis:
    """Truncated |l, m> basis with cached operator matrix elements."""

    def __init__(self, l_max: int):
        if l_max < 0:
            raise ParameterError("l_max must be >= 0")
        self.l_max = l_max
        self.size = (l_max + 1) ** 2
        ls = np.concatenate([np.full(2 * l + 1, l) for l in range(l_max + 1)])
        ms = np.concatenate([np.arange(-l, l + 1) for l in range(l_max + 1)])
        self.l, self.m = ls.astype(np.int64), ms.astype(np.int64)
        self.energies = self.l * (self.l + 1) / 2.0
        self._ops: dict = {}

    def index(self, l: int, m: int) -> int:
        if not (0 <= l <= self.l_max and abs(m) <= l):
            raise ParameterError(f"state |{l},{m}> outside basis")
        return l * l + l + m

    # ---- operator builders -------------------------------------------------

    def _y2_matrix(self, q: int) -> SparseOp:
        rows, cols, vals = [], [], []
        for k in range(self.size):
            l, m = int(self.l[k]), int(self.m[k])
            mp = m + q
            for lp in (l - 2, l, l + 2):
                if lp < abs(mp) or lp < 0 or lp > self.l_max:
                    continue
                v = angular.gaunt_y2(lp, mp, q, l, m)
                if v != 0.0:
                    rows.append(self.index(lp, mp))
                    cols.append(k)
                    vals.append(v)
        return SparseOp(np.array(rows), np.array(cols), np.array(vals, dtype=complex))

    def op_cos2beta(self, p) -> SparseOp:
        """(p . r_hat)^2 via the rank-2 addition theorem; Hermitian for unit p."""
        p = np.asarray(p, dtype=float)
        key = ("cos2beta", tuple(np.round(p, 15)))
        if key in self._ops:
            return self._ops[key]
        y2p = angular.y2_components(p)
        rows = [np.arange(self.size)]
        cols = [np.arange(self.size)]
        vals = [np.full(self.size, 1.0 / 3.0, dtype=complex)]
        pref = (2.0 / 3.0) * (4.0 * math.pi / 5.0)
        for qi, q in enumerate(range(-2, 3)):
            if abs(y2p[qi]) < 1e-300:
                continue
            g = self._y2_matrix(q)
            rows.append(g.rows)
            cols.append(g.cols)
            vals.append(pref * np.conj(y2p[qi]) * g.vals)
        op = SparseOp(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))
        self._ops[key] = op
        return op

    def op_cos2theta(self) -> SparseOp:
        return self.op_cos2beta(np.array([0.0, 0.0, 1.0]))

    def op_sin2theta_cos2phi(self) -> SparseOp:
        """x^2 - y^2 = sin^2(theta) cos(2 phi), a pure rank-2 operator."""
        key = "x2my2"
        if key in self._ops:
            return self._ops[key]
        coef = 2.0 * math.sqrt(2.0 * math.pi / 15.0)
        parts = [self._y2_matrix(2), self._y2_matrix(-2)]
        op = SparseOp(np.concatenate([p.rows for p in parts]),
                      np.concatenate([p.cols for p in parts]),
                      coef * np.concatenate([p.vals for p in parts]))
        self._ops[key] = op
        return op

    def op_axis_moment(self, axis: str) -> SparseOp:
        """x^2, y^2 or z^2 as combinations of cos^2(theta) and x^2 - y^2."""
        if axis == "z":
            return self.op_cos2theta()
        c2t = self.op_cos2theta()
        d = self.op_sin2theta_cos2phi()
        sgn = 1.0 if axis == "x" else -1.0
        size = self.size
        rows = np.concatenate([np.arange(size), c2t.rows, d.rows])
        cols = np.concatenate([np.arange(size), c2t.cols, d.cols])
        vals = np.concatenate([np.full(size, 0.5, dtype=complex),
                               -0.5 * c2t.vals, 0.5 * sgn * d.vals])
        return SparseOp(rows, cols, vals)

    def op_cos_2phi(self) -> SparseOp:
        """cos(2 phi): couples m -> m +/- 2 with all Delta-l, built by exact
        Gauss-Legendre quadrature of the theta overlaps (polynomial integrands)."""
        key = "cos_2phi"
        if key in self._ops:
            return self._ops[key]
        n_gl = self.l_max + 4
        x, w = np.polynomial.legendre.leggauss(n_gl)
        rows, cols, vals = [], [], []
        for m in range(-self.l_max, self.l_max - 1):
            mp = m + 2
            t_hi = angular.legendre_table(self.l_max, mp, x)   # rows l' = |mp|..
            t_lo = angular.legendre_table(self.l_max, m, x)
            if not len(t_hi) or not len(t_lo):
                continue
            block = math.pi * (t_hi * w) @ t_lo.T
            lp0, l0 = abs(mp), abs(m)
            for i in range(block.shape[0]):
                for j in range(block.shape[1]):
                    v = block[i, j]
                    if abs(v) < 1e-14:
                        continue
                    a = self.index(lp0 + i, mp)
                    b = self.index(l0 + j, m)
                    rows.extend((a, b))
                    cols.extend((b, a))
                    vals.extend((v, v))
        op = SparseOp(np.array(rows), np.array(cols), np.array(vals, dtype=complex))
        self._ops[key] = op
        return op

    def op_cos2phi(self) -> SparseOp:
        """Azimuthal factor cos^2(phi) = 1/2 + cos(2 phi)/2."""
        raw = self.op_cos_2phi()
        size = self.size
        rows = np.concatenate([np.arange(size), raw.rows])
        cols = np.concatenate([np.arange(size), raw.cols])
        vals = np.concatenate([np.full(size, 0.5, dtype=complex), 0.5 * raw.vals])
        return SparseOp(rows, cols, vals)

    def op_jy(self) -> SparseOp:
        """J_y = (J_+ - J_-)/(2i) (dimensionless angular momentum)."""
        key = "jy"
        if key in self._ops:
            return self._ops[key]
        rows, cols, vals = [], [], []
        for k in range(self.size):
            l, m = int(self.l[k]), int(self.m[k])
            if m + 1 <= l:
                cplus = math.sqrt(l * (l + 1) - m * (m + 1))
                rows.append(self.index(l, m + 1))
                cols.append(k)
                vals.append(-0.5j * cplus)
            if m - 1 >= -l:
                cminus = math.sqrt(l * (l + 1) - m * (m - 1))
                rows.append(self.index(l, m - 1))
                cols.append(k)
                vals.append(0.5j * cminus)
        op = SparseOp(np.array(rows), np.array(cols), np.array(vals, dtype=complex))
        self._ops[key] = op
        return op

    def op_j2(self) -> SparseOp:
        idx = np.arange(self.size)
        return SparseOp(idx, idx, (self.l * (self.l + 1)).astype(complex))

    def operator(self, name: str) -> SparseOp:
        table = {
            "cos2theta": self.op_cos2theta,
            "cos2phi": self.op_cos2phi,
            "Ly": self.op_jy,
            "L2": self.op_j2,
            "x2": lambda: self.op_axis_moment("x"),
            "y2": lambda: self.op_axis_moment("y"),
            "z2": lambda: self.op_axis_moment("z"),
        }
        if name not in table:
            raise ParameterError(f"unknown observable {name!r}")
        return table[name]()


@dataclass
class WavePacket:
    """Complex coefficients over a LinearBasis, referenced at time t_ref."""

    basis: LinearBasis
    c: np.ndarray
    t_ref: float = 0.0

    @classmethod
    def pure(cls, basis: LinearBasis, l: int, m: int) -> "WavePacket":
        c = np.zeros(basis.size, dtype=complex)
        c[basis.index(l, m)] = 1.0
        return cls(basis, c)

    @property
    def norm(self) -> float:
        return float(np.real(np.vdot(self.c, self.c)))


def _headroom_tail(basis: LinearBasis, c: np.ndarray) -> float:
    band = basis.l > basis.l_max - HEADROOM_BAND
    pops = np.abs(c[band]) ** 2 if c.ndim == 1 else np.abs(c[band, :]) ** 2
    return float(pops.sum(axis=0).max()) if c.ndim > 1 else float(pops.sum())


def _check_headroom(basis: LinearBasis, c: np.ndarray):
    tail = _headroom_tail(basis, c)
    if tail > HEADROOM_TOL:
        raise TruncationError(
            f"population {tail:.2e} within {HEADROOM_BAND} of l_max={basis.l_max}; "
            "increase l_max")


def free_evolve(wp: WavePacket, dt: float) -> WavePacket:
    """Field-free propagation: diagonal phases exp(-i l(l+1) dt / 2)."""
    phases = np.exp(-1j * wp.basis.energies * dt)
    return WavePacket(wp.basis, wp.c * phases, wp.t_ref + dt)


def sudden_kick(wp: WavePacket, pulse: PulseSpec) -> WavePacket:
    """Impulsive kick exp(i P cos^2 beta) in the truncated basis."""
    if pulse.duration != 0.0:
        raise ParameterError("sudden_kick requires an impulsive pulse (duration 0)")
    basis = wp.basis
    mat = basis.op_cos2beta(pulse.p_vec).to_csr(basis.size)
    c_new = expm_multiply(1j * pulse.P * mat, wp.c)
    _check_headroom(basis, c_new)
    return WavePacket(basis, c_new, wp.t_ref)


def kick_batch(basis: LinearBasis, psi: np.ndarray, pulse: PulseSpec) -> np.ndarray:
    """Apply one impulsive kick to a (size, n_states) coefficient batch."""
    mat = basis.op_cos2beta(pulse.p_vec).to_csr(basis.size)
    out = expm_multiply(1j * pulse.P * mat, psi)
    _check_headroom(basis, out)
    return out


def gaussian_envelope(P: float, fwhm: float):
    """Envelope g(t) with integral P and the given dimensionless FWHM."""
    amp = P * 2.0 / fwhm * math.sqrt(math.log(2.0) / math.pi)
    a = 4.0 * math.log(2.0) / fwhm ** 2

    def g(t):
        return amp * math.exp(-a * t * t)

    return g


def finite_pulse(wp: WavePacket, pulse: PulseSpec) -> WavePacket:
    """Gaussian-envelope pulse via the coupled coefficient equations.

    The envelope is centered at wp.t_ref and normalized so its time integral
    matches the pulse's kick strength P; the result converges to sudden_kick
    as the FWHM goes to zero.
    """
    if pulse.duration <= 0.0:
        raise ParameterError("finite_pulse requires duration > 0")
    basis = wp.basis
    mat = basis.op_cos2beta(pulse.p_vec).to_csr(basis.size)
    g = gaussian_envelope(pulse.P, pulse.duration)
    e = basis.energies
    span = 4.0 * pulse.duration

    def rhs(t, y):
        c = y.view(complex)
        ph = np.exp(-1j * e * t)
        dc = 1j * g(t) * (np.conj(ph) * (mat @ (ph * c)))
        return dc.view(float)

    sol = solve_ivp(rhs, (-span, span), wp.c.astype(complex).view(float),
                    method="DOP853", rtol=1e-8, atol=1e-10)
    if not sol.success:
        raise IntegrationError(
            f"pulse integration failed at t = {sol.t[-1]:.6g}: {sol.message}")
    c_new = sol.y[:, -1].copy().view(complex)
    _check_headroom(basis, c_new)
    return WavePacket(basis, c_new, wp.t_ref)


# ---- observables ------------------------------------------------------------


def expectation(wp: WavePacket, name: str) -> float:
    op = wp.basis.operator(name)
    return float(np.real(np.sum(np.conj(wp.c[op.rows]) * op.vals * wp.c[op.cols])))


def observe_grid(wp: WavePacket, f) -> float:
    """<f(theta, phi)> by quadrature of f against |Psi|^2 on a GL x uniform grid."""
    basis = wp.basis
    l_max = basis.l_max
    n_th = 2 * l_max + 8
    n_ph = 4 * l_max + 16
    x, w = np.polynomial.legendre.leggauss(n_th)
    theta = np.arccos(x)
    phi = np.arange(n_ph) * (TWO_PI / n_ph)
    psi_m = np.zeros((2 * l_max + 1, n_th), dtype=complex)
    for m in range(-l_max, l_max + 1):
        tab = angular.legendre_table(l_max, m, x)
        sel = basis.m == m
        if tab.shape[0]:
            psi_m[m + l_max] = wp.c[sel] @ tab
    phases = np.exp(1j * np.outer(np.arange(-l_max, l_max + 1), phi))
    psi = psi_m.T @ phases          # (n_th, n_ph)
    dens = np.abs(psi) ** 2
    fv = f(theta[:, None], phi[None, :])
    return float(np.einsum("i,ij->", w, dens * fv) * (TWO_PI / n_ph))


def observe(wp: WavePacket, what) -> float:
    """Expectation value; `what` is an observable name or a callable f(theta, phi)."""
    if callable(what):
        return observe_grid(wp, what)
    return expectation(wp, what)


# ---- thermal averaging -------------------------------------------------------


def nitrogen_spin_weights(l: int) -> float:
    """2:1 even:odd nuclear-spin alternation of N2 (6:3 degeneracies)."""
    return 2.0 if l % 2 == 0 else 1.0


def thermal_states(sigma: float, weight_hook=None, cutoff: float = WEIGHT_CUTOFF):
    """Initial (l0, m0, weight) list covering >= cutoff of the Boltzmann sum.

    Weights of the included states are renormalized to sum to one, so a
    truncated mixture still averages observables without a global bias; the
    dropped fraction of the exact sum is returned alongside.
    """
    hook = weight_hook or (lambda l: 1.0)
    if sigma == 0.0:
        return [(0, 0, 1.0)], 0.0
    two_s2 = 2.0 * sigma * sigma
    l_grid = np.arange(0, max(64, int(12 * sigma) * 8))
    terms = np.array([hook(int(l)) * (2 * l + 1) * math.exp(-l * (l + 1) / two_s2)
                      for l in l_grid])
    z = terms.sum()
    states, cum = [], 0.0
    for l in l_grid:
        wl = hook(int(l)) * math.exp(-l * (l + 1) / two_s2) / z
        for m in range(-int(l), int(l) + 1):
            states.append((int(l), m, wl))
        cum += terms[l] / z
        if cum >= cutoff:
            break
    states = [(l, m, w / cum) for (l, m, w) in states]
    return states, 1.0 - cum


def default_l_max(pulses, l0_max: int) -> int:
    # 4x the strongest kick plus a constant margin wide enough that the
    # 1e-10 headroom band stays empty even for weak pulses
    p_max = max((abs(p.P) for p in pulses), default=0.0)
    return 12 + math.ceil(4.0 * p_max) + l0_max


def _pattern_trace(trace: SpectralTrace, op: SparseOp, energies: np.ndarray,
                   psi: np.ndarray, weights: np.ndarray):
    accumulate_pattern(trace, op.rows, op.cols, op.vals, energies, psi, weights)


def thermal_run(mol: MoleculeParams, T_K: float, pulses, t_max: float,
                dt_out: float, l_max: int | None = None,
                observables=("cos2theta", "cos2phi", "Ly", "L2"),
                spin_weights=None, scan_limit_trev: float | None = None) -> TimeSeries:
    """Boltzmann-averaged double-pulse run; times in T_rev units.

    Pulses are given in the classical frame.  A second pulse with
    t_apply="auto" fires at the first extremum of the quantum <cos^2 theta>
    trace after the first pulse (maximum for P1 > 0, minimum for P1 < 0),
    located on a T_rev/2000 grid with parabolic refinement.

    The returned TimeSeries carries meta["revival_avg"]: exact one-revival
    time averages of every requested observable over the final free segment.
    """
    if mol.kind != "linear":
        raise ParameterError("thermal_run handles linear molecules")
    pulses = list(pulses)
    if not pulses:
        raise ParameterError("need at least one pulse")
    sigma = sigma_th(mol, T_K)
    states, trunc = thermal_states(sigma, spin_weights)
    l0_max = max(s[0] for s in states)
    if l_max is None:
        l_max = default_l_max(pulses, l0_max)
    basis = LinearBasis(l_max)
    energies = basis.energies

    psi = np.zeros((basis.size, len(states)), dtype=complex)
    for k, (l0, m0, _) in enumerate(states):
        psi[basis.index(l0, m0), k] = 1.0
    weights = np.array([w for (_, _, w) in states])

    ops = {name: basis.operator(name) for name in observables}
    if "cos2theta" not in ops:
        ops["cos2theta"] = basis.operator("cos2theta")

    meta = {"l_max": l_max, "sigma_th": sigma, "n_initial_states": len(states),
            "weight_truncation": trunc,
            "spin_weights": "uniform" if spin_weights is None else "custom"}

    # segment 0 is the stationary initial mixture; each kick starts a new one
    segments = [(0.0, psi)]
    t_now = 0.0
    psi_now = psi
    scan_limit = (scan_limit_trev if scan_limit_trev is not None else t_max) * TWO_PI
    for i, pulse in enumerate(pulses):
        if pulse.t_apply == "auto":
            if i == 0:
                raise ParameterError("the first pulse cannot use an auto delay")
            trace = SpectralTrace()
            _pattern_trace(trace, ops["cos2theta"], energies, psi_now, weights)
            ts = np.arange(int(scan_limit / SCAN_STEP) + 1) * SCAN_STEP
            vals = trace.evaluate(ts)
            kind = "max" if pulses[0].P >= 0 else "min"
            k = first_local_extremum(vals, kind)
            if k is None:
                raise ProtocolError(
                    f"no quantum alignment {kind} found in scan window "
                    f"[0, {scan_limit / TWO_PI:.4g}] T_rev")
            delay = parabolic_vertex(ts[k - 1:k + 2], vals[k - 1:k + 2])
            t_pulse = t_now + delay
            meta["auto_delay_trev"] = delay / TWO_PI
        else:
            t_pulse = float(pulse.t_apply) * TWO_PI
        if t_pulse < t_now - 1e-12:
            raise ParameterError("pulse times must be non-decreasing")
        phases = np.exp(-1j * energies * (t_pulse - t_now))
        psi_now = psi_now * phases[:, None]
        if pulse.duration == 0.0:
            psi_now = kick_batch(basis, psi_now, pulse)
        else:
            cols = []
            for k in range(psi_now.shape[1]):
                wp = finite_pulse(WavePacket(basis, psi_now[:, k], t_pulse), pulse)
                cols.append(wp.c)
            psi_now = np.stack(cols, axis=1)
        t_now = t_pulse
        segments.append((t_pulse, psi_now))
    meta["pulse_times_trev"] = [t / TWO_PI for t, _ in segments[1:]]
    meta["headroom_tail"] = _headroom_tail(basis, segments[-1][1])

    seg_traces = []
    for t0, psi_s in segments:
        traces = {}
        for name in observables:
            tr = SpectralTrace()
            _pattern_trace(tr, ops[name], energies, psi_s, weights)
            traces[name] = tr
        seg_traces.append((t0, traces))

    grid = np.arange(0.0, t_max + 0.5 * dt_out, dt_out)
    t_dim = grid * TWO_PI
    starts = np.array([t0 for t0, _ in seg_traces])
    seg_of = np.clip(np.searchsorted(starts, t_dim + 1e-12) - 1, 0, len(starts) - 1)
    out = {name: np.empty(len(grid)) for name in observables}
    for s, (t0, traces) in enumerate(seg_traces):
        idx = np.flatnonzero(seg_of == s)
        if not len(idx):
            continue
        rel = t_dim[idx] - t0
        for name in observables:
            out[name][idx] = traces[name].evaluate(rel)
    if "Ly" in out and "L2" in out:
        with np.errstate(invalid="ignore", divide="ignore"):
            out["Ly_norm"] = np.where(out["L2"] > 0, out["Ly"] / np.sqrt(out["L2"]), 0.0)

    meta["revival_avg"] = {name: seg_traces[-1][1][name].time_average()
                           for name in observables}
    return TimeSeries(grid=grid, channels=out, meta=meta)
