"""Implicit-midpoint time stepping of the seven-field MHD system.

One step advances (u, w, j, E, H, B, P) by solving the coupled algebraic
system obtained from the weak form by replacing time derivatives with
(X+ - X-)/dt and every other field instance with the midpoint average
(X+ + X-)/2; the pressure acts as the step multiplier.  The midpoint rule
makes the quadratic invariants of the semi-discrete system (energy in the
ideal limit, both helicities, the magnetic Gauss law) exact at the discrete
level, up to the nonlinear solver tolerance.

The per-step system is monolithic over all seven fields with boundary DOFs
eliminated.  The nonlinear iteration is Picard (cross products linearised
by lagging one factor) switching to exact-Jacobian Newton once the residual
is small; both can be forced.  After convergence the Faraday update is
re-applied exactly at coefficient level, B+ = B- - dt (D1 E_mid - g), so
div B stays at machine zero for arbitrarily many steps.

Infinite Reynolds numbers are stored as zero inverses, making the ideal
limit exactly representable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import Assembler, expand
from .derham import LOAD_DEGREE, OperatorContext
from .mesh import TetMesh
from .spaces import AnalyticField, interpolate_rt


class SolverError(RuntimeError):
    """Nonlinear iteration failed; carries the residual history."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


@dataclass(frozen=True)
class PhysParams:
    """Physical parameters with Re, Rm stored as inverses (inf -> 0)."""

    re_inv: float = 1.0
    rm_inv: float = 1.0
    sc: float = 1.0   # coupling number (Alfven/fluid speed ratio)
    mu: float = 1.0   # permeability

    def __post_init__(self):
        if self.re_inv < 0 or self.rm_inv < 0:
            raise ValueError("inverse Reynolds numbers must be >= 0")
        if self.sc <= 0 or self.mu <= 0:
            raise ValueError("coupling number and permeability must be > 0")

    @classmethod
    def from_reynolds(cls, re=math.inf, rm=math.inf, sc=1.0, mu=1.0):
        if (re is not None and re <= 0) or (rm is not None and rm <= 0):
            raise ValueError("Reynolds numbers must be positive (inf allowed)")
        return cls(re_inv=0.0 if math.isinf(re) else 1.0 / re,
                   rm_inv=0.0 if math.isinf(rm) else 1.0 / rm,
                   sc=sc, mu=mu)

    @classmethod
    def ideal(cls, sc=1.0, mu=1.0):
        return cls(re_inv=0.0, rm_inv=0.0, sc=sc, mu=mu)

    @property
    def is_ideal(self) -> bool:
        return self.re_inv == 0.0 and self.rm_inv == 0.0


@dataclass
class SourceTerms:
    """Momentum forcing f and the optional divergence-free Faraday forcing.

    g_b exists only so manufactured (u, B) pairs can close Faraday's law;
    it is interpolated into RT (exactly divergence-free dofs) and tested on
    the right of the induction equation.
    """

    f: Optional[AnalyticField] = None
    g_b: Optional[AnalyticField] = None


@dataclass
class MhdState:
    """The seven coefficient vectors at one time level."""

    t: float
    u: np.ndarray   # velocity, H_0(curl)
    w: np.ndarray   # vorticity, H_0(curl)
    j: np.ndarray   # current density, H_0(curl)
    e: np.ndarray   # electric field, H_0(curl)
    h: np.ndarray   # magnetic induction, H_0(curl)
    b: np.ndarray   # magnetic field, H_0(div)
    p: np.ndarray   # total pressure, H_0(grad)
    params: PhysParams

    def copy(self) -> "MhdState":
        return MhdState(self.t, self.u.copy(), self.w.copy(), self.j.copy(),
                        self.e.copy(), self.h.copy(), self.b.copy(),
                        self.p.copy(), self.params)


@dataclass
class StepInfo:
    iterations: int
    residual: float
    history: list = field(default_factory=list)


class MhdSystem:
    """Assembled operators plus the nonlinear midpoint stepper."""

    def __init__(self, mesh: TetMesh, params: PhysParams,
                 source: SourceTerms | None = None, k: int = 0,
                 quad_degree: int = 4, load_degree: int = LOAD_DEGREE,
                 tol: float = 1e-12, max_iters: int = 50,
                 scheme: str = "auto", switch_tol: float = 1e-4):
        if scheme not in ("auto", "picard", "newton"):
            raise ValueError(f"unknown nonlinear scheme {scheme!r}")
        self.mesh = mesh
        self.params = params
        self.source = source or SourceTerms()
        self.ctx = OperatorContext(mesh, k=k, quad_degree=quad_degree)
        self.asm = self.ctx.asm
        self.load_degree = load_degree
        self.tol = tol
        self.max_iters = max_iters
        self.scheme = scheme
        self.switch_tol = switch_tol

        ctx = self.ctx
        self.ned, self.rt, self.lag = ctx.nedelec, ctx.rt, ctx.lagrange
        fN, fF, fL = ctx.fN, ctx.fF, ctx.fL
        self.fN, self.fF, self.fL = fN, fF, fL
        self.nN, self.nF, self.nL = fN.size, fF.size, fL.size

        d0, d1 = mesh.d0, mesh.d1
        self.MN = ctx.m_n[fN][:, fN]
        self.MRT = ctx.m_rt[fF][:, fF]
        self.A = ctx.curlcurl[fN][:, fN]
        self.G = ctx.grad_form[fN][:, fL]
        self.S_full = (ctx.m_mix @ d1).tocsr()        # (E,E): (phi_i, curl phi_j)
        self.P_full = (d1.T @ ctx.m_rt).tocsr()       # (E,F): (curl phi_i, phi_F)
        self.S = self.S_full[fN][:, fN]
        self.P = self.P_full[fN][:, fF]
        self.K = self.P.T.tocsr()                     # (F,E): (curl phi_j, phi_F)
        self.X = ctx.m_mix[fN][:, fF]
        self.stiff_lag = (d0.T @ ctx.m_n @ d0).tocsr()[fL][:, fL]

        self._jconst: dict = {}
        self._lu_cache: dict = {}
        self._lag_lu = None

    # -- initial state -------------------------------------------------------

    def init_state(self, u0: AnalyticField, B0: AnalyticField,
                   t0: float = 0.0, div_tol: float = 1e-10) -> MhdState:
        """Interpolate initial data and recover the auxiliary fields.

        u is the edge interpolant, B the L2 projection onto the
        divergence-free RT subspace; w, j, H, E follow from the algebraic
        identities of the scheme and P from a pressure solve tested against
        gradients.  Rejects analytic B0 whose RT interpolant is not
        divergence-free.
        """
        from .spaces import interpolate_nedelec
        mu = self.params.mu
        u = interpolate_nedelec(self.ned, u0, t=t0).values

        b_interp = interpolate_rt(self.rt, B0, t=t0).values
        scale = max(1.0, float(np.abs(b_interp).max()))
        div_err = float(np.abs(self.mesh.d2 @ b_interp).max())
        if div_err > div_tol * scale:
            raise ValueError(
                f"initial magnetic field is not divergence-free: "
                f"max |D2 B_I| = {div_err:.3e}")
        b = self.ctx.pi_tilde(B0, t=t0)

        h = self.ctx.q_h(b) / mu
        j = self.ctx.curl_h(b) / mu
        w = self._qh_curl(u)
        e = self.params.rm_inv * j - self._qh_cross(u, mu * h)
        p = self._pressure_solve(u, w, j, h, t0)
        return MhdState(t=t0, u=u, w=w, j=j, e=e, h=h, b=b, p=p,
                        params=self.params)

    def _qh_curl(self, u_full: np.ndarray) -> np.ndarray:
        rhs = (self.S_full.T @ u_full)[self.fN]
        return expand(self.ctx._mass_n_lu().solve(rhs), self.ned)

    def _qh_cross(self, a_full: np.ndarray, b_full: np.ndarray) -> np.ndarray:
        rhs = self.asm.cross_load(self.ned, a_full, self.ned, b_full,
                                  self.ned)[self.fN]
        return expand(self.ctx._mass_n_lu().solve(rhs), self.ned)

    def _pressure_solve(self, u, w, j, h, t) -> np.ndarray:
        mu, sc = self.params.mu, self.params.sc
        rhs_n = (self.asm.cross_load(self.ned, u, self.ned, w, self.ned)
                 + sc * self.asm.cross_load(self.ned, j, self.ned,
                                            mu * h, self.ned)
                 - self.params.re_inv * (self.ctx.curlcurl @ u))
        if self.source.f is not None:
            rhs_n = rhs_n + self.asm.load(self.ned, self.source.f, t,
                                          self.load_degree)
        rhs = (self.mesh.d0.T @ rhs_n)[self.fL]
        if self._lag_lu is None:
            self._lag_lu = splu(self.stiff_lag.tocsc())
        return expand(self._lag_lu.solve(rhs), self.lag)

    # -- residual and Jacobian -------------------------------------------------

    def _unpack(self, x):
        nN, nF = self.nN, self.nF
        parts = [x[i * nN:(i + 1) * nN] for i in range(5)]
        b = x[5 * nN:5 * nN + nF]
        p = x[5 * nN + nF:]
        return (*parts, b, p)

    def _sources_at(self, t_mid):
        lf = np.zeros(self.nN)
        if self.source.f is not None:
            lf = self.asm.load(self.ned, self.source.f, t_mid,
                               self.load_degree)[self.fN]
        g_full = np.zeros(self.rt.ndof)
        if self.source.g_b is not None:
            g_full = interpolate_rt(self.rt, self.source.g_b, t=t_mid).values
        return lf, g_full

    def _residual(self, x, prev, dt, lf, g_full):
        pp = self.params
        mu, sc = pp.mu, pp.sc
        u, w, j, e, h, b, p = self._unpack(x)
        u0, w0, j0, e0, h0, b0, _ = self._unpack(prev)
        um, wm, jm, em, hm, bm = [(a + a0) / 2.0 for a, a0 in
                                  [(u, u0), (w, w0), (j, j0), (e, e0),
                                   (h, h0), (b, b0)]]
        umf = expand(um, self.ned)
        wmf = expand(wm, self.ned)
        jmf = expand(jm, self.ned)
        hmf = expand(hm, self.ned)

        t_uw = self.asm.cross_load(self.ned, umf, self.ned, wmf,
                                   self.ned)[self.fN]
        t_jh = self.asm.cross_load(self.ned, jmf, self.ned, mu * hmf,
                                   self.ned)[self.fN]
        t_uh = self.asm.cross_load(self.ned, umf, self.ned, mu * hmf,
                                   self.ned)[self.fN]

        r_u = (self.MN @ (u - u0) / dt - t_uw + pp.re_inv * (self.A @ um)
               - sc * t_jh + self.G @ p - lf)
        r_w = self.MN @ wm - self.S.T @ um
        r_j = mu * (self.MN @ jm) - self.P @ bm
        r_far = (self.MRT @ (b - b0) / dt + self.K @ em
                 - (self.ctx.m_rt @ g_full)[self.fF])
        r_ohm = pp.rm_inv * (self.MN @ jm) - self.MN @ em - t_uh
        r_div = self.G.T @ um
        r_h = self.X @ bm - mu * (self.MN @ hm)
        return np.concatenate([r_u, r_w, r_j, r_far, r_ohm, r_div, r_h])

    def _const_blocks(self, dt):
        """Jacobian blocks that do not depend on the iterate."""
        if dt not in self._jconst:
            pp = self.params
            mn, mrt = self.MN, self.MRT
            blocks = {
                ("u", "u"): mn / dt + 0.5 * pp.re_inv * self.A,
                ("u", "p"): self.G,
                ("w", "u"): -0.5 * self.S.T,
                ("w", "w"): 0.5 * mn,
                ("j", "j"): 0.5 * pp.mu * mn,
                ("j", "b"): -0.5 * self.P,
                ("far", "b"): mrt / dt,
                ("far", "e"): 0.5 * self.K,
                ("ohm", "j"): 0.5 * pp.rm_inv * mn,
                ("ohm", "e"): -0.5 * mn,
                ("div", "u"): 0.5 * self.G.T,
                ("h", "b"): 0.5 * self.X,
                ("h", "h"): -0.5 * pp.mu * mn,
            }
            self._jconst[dt] = blocks
        return self._jconst[dt]

    def _jacobian(self, x, prev, dt, newton: bool):
        pp = self.params
        mu, sc = pp.mu, pp.sc
        u, w, j, e, h, b, p = self._unpack(x)
        u0, w0, j0, e0, h0, b0, _ = self._unpack(prev)
        um, wm, jm, hm = [(a + a0) / 2.0 for a, a0 in
                          [(u, u0), (w, w0), (j, j0), (h, h0)]]
        ned = self.ned
        vals_w = self.asm.field_at_qp(ned, expand(wm, ned))
        vals_h = mu * self.asm.field_at_qp(ned, expand(hm, ned))
        fN = self.fN

        def cm(vals, side):
            m = self.asm.cross_matrix(vals, side, ned, ned)
            return m[fN][:, fN]

        cr_w = cm(vals_w, "right")     # d(u x w)/du
        cr_h = cm(vals_h, "right")     # d(a x muH)/da
        blocks = dict(self._const_blocks(dt))
        blocks[("u", "u")] = blocks[("u", "u")] - 0.5 * cr_w
        blocks[("u", "j")] = -0.5 * sc * cr_h
        blocks[("ohm", "u")] = -0.5 * cr_h
        if newton:
            vals_u = self.asm.field_at_qp(ned, expand(um, ned))
            vals_j = self.asm.field_at_qp(ned, expand(jm, ned))
            cl_u = cm(vals_u, "left")  # d(u x b)/db at frozen u
            cl_j = cm(vals_j, "left")
            blocks[("u", "w")] = -0.5 * cl_u
            blocks[("u", "h")] = -0.5 * sc * mu * cl_j
            blocks[("ohm", "h")] = -0.5 * mu * cl_u

        rows = ["u", "w", "j", "far", "ohm", "div", "h"]
        cols = ["u", "w", "j", "e", "h", "b", "p"]
        grid = [[blocks.get((r, c)) for c in cols] for r in rows]
        return sp.bmat(grid, format="csc")

    # -- stepping ---------------------------------------------------------------

    def _pack_state(self, s: MhdState) -> np.ndarray:
        return np.concatenate([s.u[self.fN], s.w[self.fN], s.j[self.fN],
                               s.e[self.fN], s.h[self.fN], s.b[self.fF],
                               s.p[self.fL]])

    def solve_nonlinear(self, state: MhdState, dt: float,
                        tol: float | None = None,
                        scheme: str | None = None) -> tuple[MhdState, StepInfo]:
        """Solve one midpoint step; returns the new state and iteration info.

        The iteration matrix (Picard: cross products linearised by lagging
        one factor; Newton: exact Jacobian of the midpoint residual) is
        factorised lazily and reused across iterations and steps while it
        keeps contracting - the converged iterate satisfies the exact
        residual either way.  Forcing scheme="newton" rebuilds the exact
        Jacobian every iteration (quadratic convergence).
        """
        if dt <= 0:
            raise ValueError("time step must be positive")
        tol = self.tol if tol is None else tol
        scheme = scheme or self.scheme
        t_mid = state.t + dt / 2.0
        lf, g_full = self._sources_at(t_mid)
        prev = self._pack_state(state)
        x = prev.copy()

        reuse = scheme != "newton"
        history = []
        growth = 0
        slow = 0
        for it in range(self.max_iters + 1):
            r = self._residual(x, prev, dt, lf, g_full)
            rnorm = float(np.linalg.norm(r))
            history.append(rnorm)
            if rnorm <= tol:
                new = self._unpack_state(x, state, dt, g_full, prev)
                return new, StepInfo(iterations=it, residual=rnorm,
                                     history=history)
            if it >= self.max_iters:
                break
            rebuild = not reuse or dt not in self._lu_cache
            if len(history) >= 2:
                ratio = rnorm / history[-2]
                growth = growth + 1 if ratio > 1.0 else 0
                slow = slow + 1 if ratio > 0.25 else 0
                if growth >= 5:
                    raise SolverError(
                        f"nonlinear iteration diverging at t={state.t:.6g}, "
                        f"dt={dt:.3g}: residual grew over 5 iterations "
                        f"(last {rnorm:.3e})", history)
                if reuse and (slow >= 2 or ratio > 1.0):
                    rebuild = True
                    slow = 0
            if rebuild:
                newton = scheme == "newton" or (scheme == "auto"
                                                and rnorm < self.switch_tol)
                self._lu_cache = {dt: splu(self._jacobian(x, prev, dt,
                                                          newton))}
            x = x + self._lu_cache[dt].solve(-r)
        raise SolverError(
            f"no convergence in {self.max_iters} iterations at "
            f"t={state.t:.6g}, dt={dt:.3g} (residual {history[-1]:.3e})",
            history)

    def _unpack_state(self, x, old: MhdState, dt, g_full, prev) -> MhdState:
        u, w, j, e, h, b, p = self._unpack(x)
        e0 = self._unpack(prev)[3]
        new = MhdState(
            t=old.t + dt,
            u=expand(u, self.ned), w=expand(w, self.ned),
            j=expand(j, self.ned), e=expand(e, self.ned),
            h=expand(h, self.ned), b=expand(b, self.rt),
            p=expand(p, self.lag), params=self.params)
        # Re-apply Faraday exactly at coefficient level: the equation is
        # linear in B+, and D2 @ D1 = 0 in integer arithmetic, so this keeps
        # div B at machine zero regardless of the nonlinear tolerance.
        em_full = expand((e + e0) / 2.0, self.ned)
        new.b = old.b - dt * (self.mesh.d1 @ em_full - g_full)
        return new

    def step_midpoint(self, state: MhdState, dt: float) -> MhdState:
        return self.solve_nonlinear(state, dt)[0]

    # -- diagnostics hooks -------------------------------------------------------

    def reduced_consistency_check(self, state: MhdState) -> dict:
        """L2 residuals of the algebraic identities on one state."""
        pp = self.params
        mu = pp.mu
        ctx = self.ctx
        qh_b = ctx.q_h(state.b)
        curlh_b = ctx.curl_h(state.b)
        qh_uxmuh = self._qh_cross(state.u, mu * state.h)
        res = {
            "ohm": ctx.l2_norm_nedelec(
                state.e - pp.rm_inv * state.j + qh_uxmuh),
            "vorticity": ctx.l2_norm_nedelec(state.w - self._qh_curl(state.u)),
            "ampere": ctx.l2_norm_nedelec(mu * state.j - curlh_b),
            "constitutive": ctx.l2_norm_nedelec(mu * state.h - qh_b),
            "div_b": float(np.abs(self.mesh.d2 @ state.b).max()),
        }
        if pp.rm_inv > 0:
            rm = 1.0 / pp.rm_inv
            qh_uxqb = self._qh_cross(state.u, qh_b)
            res["explicit_j"] = ctx.l2_norm_nedelec(
                state.j - rm * (state.e + qh_uxqb))
        else:
            res["explicit_j"] = res["ohm"]
        return res


# -- checkpointing ---------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_state(state: MhdState, path) -> None:
    """Versioned flat checkpoint of one MHD state."""
    np.savez(path, version=CHECKPOINT_VERSION, t=state.t,
             re_inv=state.params.re_inv, rm_inv=state.params.rm_inv,
             sc=state.params.sc, mu=state.params.mu,
             u=state.u, w=state.w, j=state.j, e=state.e, h=state.h,
             b=state.b, p=state.p)


def load_state(path, system: MhdSystem) -> MhdState:
    with np.load(path) as data:
        if int(data["version"]) != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version "
                             f"{int(data['version'])}")
        params = PhysParams(re_inv=float(data["re_inv"]),
                            rm_inv=float(data["rm_inv"]),
                            sc=float(data["sc"]), mu=float(data["mu"]))
        state = MhdState(t=float(data["t"]), u=data["u"], w=data["w"],
                         j=data["j"], e=data["e"], h=data["h"], b=data["b"],
                         p=data["p"], params=params)
    for name, space in (("u", system.ned), ("b", system.rt),
                        ("p", system.lag)):
        if getattr(state, name).shape != (space.ndof,):
            raise ValueError(f"checkpoint field {name!r} does not match "
                             f"the mesh ({space.ndof} dofs expected)")
    return state
