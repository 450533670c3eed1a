"""Conserved functionals and identity residuals on stored states.

Rates d_t(.) are discretised with the same midpoint rule as the solver, so
on converged steps the balance residuals are at the nonlinear tolerance:

* energy:    dE/dt + Re^-1 ||curl u_m||^2 + sc Rm^-1 ||j_m||^2 = (f_m, u_m)
             [+ sc mu^-1 (g_m, B_m) when a Faraday source is active]
* magnetic helicity:  d_t(B, A) = -2 Rm^-1 mu^-1 (Q_h B_m, curl_h B_m)
* cross helicity:     d_t(u, B) = -Re^-1 a(u_m, Q_h B_m)
                      - Rm^-1 mu^-1 (curl u_m, curl_h B_m) + (f_m, Q_h B_m)

The vector potential entering the magnetic helicity is recomputed per
report through the fixed minimum-norm gauge, which makes A linear in B and
keeps the midpoint conservation argument exact; (B, A) itself is gauge
independent because B is divergence free.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields

import numpy as np

from .solver import MhdState, MhdSystem

DIV_TOL = 1e-12

CSV_COLUMNS = ["t", "energy", "viscous_dissipation", "ohmic_dissipation",
               "work", "magnetic_helicity", "cross_helicity", "div_b_l2",
               "div_b_max", "energy_residual", "helicity_m_residual",
               "helicity_c_residual"]


@dataclass
class ConservationReport:
    """One diagnostics row; residual columns refer to the preceding step."""

    t: float
    energy: float
    viscous_dissipation: float
    ohmic_dissipation: float
    work: float
    magnetic_helicity: float
    cross_helicity: float
    div_b_l2: float
    div_b_max: float
    energy_residual: float = 0.0
    helicity_m_residual: float = 0.0
    helicity_c_residual: float = 0.0

    def row(self):
        return [getattr(self, f.name) for f in fields(self)]


def energy(system: MhdSystem, state: MhdState) -> float:
    """1/2 ||u||^2 + (sc / 2 mu) ||B||^2."""
    pp = state.params
    ctx = system.ctx
    return float(0.5 * state.u @ (ctx.m_n @ state.u)
                 + 0.5 * pp.sc / pp.mu * state.b @ (ctx.m_rt @ state.b))


def magnetic_helicity(system: MhdSystem, state: MhdState,
                      gauge: str = "min") -> float:
    """(B_h, A_h) with curl A_h = B_h; requires div B_h = 0."""
    div = float(np.abs(system.mesh.d2 @ state.b).max())
    scale = max(1.0, float(np.abs(state.b).max()))
    if div > DIV_TOL * scale * 100:
        raise ValueError(f"magnetic helicity undefined: max |D2 B| = {div:.3e}")
    a = system.ctx.vector_potential(state.b, gauge=gauge)
    return float(a @ (system.ctx.m_mix @ state.b))


def cross_helicity(system: MhdSystem, state: MhdState) -> float:
    """(u_h, B_h)."""
    return float(state.u @ (system.ctx.m_mix @ state.b))


def divergence_norms(system: MhdSystem, state: MhdState):
    """(L2 norm of div B_h, max |D2 B|)."""
    flux = system.mesh.d2 @ state.b
    vols = np.abs(system.mesh.cell_volumes())
    return float(np.sqrt((flux ** 2 / vols).sum())), float(np.abs(flux).max())


def _midpoint_quantities(system: MhdSystem, prev: MhdState, cur: MhdState):
    ctx = system.ctx
    um = (prev.u + cur.u) / 2.0
    jm = (prev.j + cur.j) / 2.0
    bm = (prev.b + cur.b) / 2.0
    qhb = ctx.q_h(bm)
    chb = ctx.curl_h(bm)
    return um, jm, bm, qhb, chb


def energy_residual(system: MhdSystem, prev: MhdState, cur: MhdState) -> float:
    """Relative midpoint energy-balance defect of one step."""
    pp = cur.params
    ctx = system.ctx
    dt = cur.t - prev.t
    um, jm, bm, _, _ = _midpoint_quantities(system, prev, cur)
    de = (energy(system, cur) - energy(system, prev)) / dt
    viscous = pp.re_inv * float(um @ (ctx.curlcurl @ um))
    ohmic = pp.sc * pp.rm_inv * float(jm @ (ctx.m_n @ jm))
    work = 0.0
    t_mid = prev.t + dt / 2.0
    if system.source.f is not None:
        lf = system.asm.load(system.ned, system.source.f, t_mid,
                             system.load_degree)
        work += float(lf @ um)
    if system.source.g_b is not None:
        from .spaces import interpolate_rt
        g = interpolate_rt(system.rt, system.source.g_b, t=t_mid).values
        work += pp.sc / pp.mu * float(g @ (ctx.m_rt @ bm))
    resid = de + viscous + ohmic - work
    scale = max(1.0, energy(system, cur), abs(de), viscous, abs(ohmic),
                abs(work))
    return float(abs(resid) / scale)


def helicity_rate_residuals(system: MhdSystem, prev: MhdState,
                            cur: MhdState):
    """Relative defects of the two helicity-rate identities for one step."""
    pp = cur.params
    ctx = system.ctx
    dt = cur.t - prev.t
    um, jm, bm, qhb, chb = _midpoint_quantities(system, prev, cur)
    t_mid = prev.t + dt / 2.0

    # magnetic helicity rate
    hm0 = magnetic_helicity(system, prev)
    hm1 = magnetic_helicity(system, cur)
    lhs_m = (hm1 - hm0) / dt
    rhs_m = -2.0 * pp.rm_inv / pp.mu * float(qhb @ (ctx.m_n @ chb))
    g = None
    if system.source.g_b is not None:
        from .spaces import interpolate_rt
        g = interpolate_rt(system.rt, system.source.g_b, t=t_mid).values
        am = (ctx.vector_potential(prev.b) + ctx.vector_potential(cur.b)) / 2.0
        rhs_m += 2.0 * float(am @ (ctx.m_mix @ g))
    res_m = abs(lhs_m - rhs_m) / max(1.0, abs(lhs_m), abs(rhs_m))

    # cross helicity rate
    lhs_c = (cross_helicity(system, cur) - cross_helicity(system, prev)) / dt
    rhs_c = (-pp.re_inv * float(um @ (ctx.curlcurl @ qhb))
             - pp.rm_inv / pp.mu
             * float(chb @ (ctx.m_mix @ (system.mesh.d1 @ um))))
    if system.source.f is not None:
        lf = system.asm.load(system.ned, system.source.f, t_mid,
                             system.load_degree)
        rhs_c += float(lf @ qhb)
    if g is not None:
        rhs_c += float(um @ (ctx.m_mix @ g))
    res_c = abs(lhs_c - rhs_c) / max(1.0, abs(lhs_c), abs(rhs_c))
    return float(res_m), float(res_c)


def report_state(system: MhdSystem, state: MhdState) -> ConservationReport:
    """Instantaneous functionals of one state (residual columns zero)."""
    pp = state.params
    ctx = system.ctx
    div_l2, div_max = divergence_norms(system, state)
    work = 0.0
    if system.source.f is not None:
        lf = system.asm.load(system.ned, system.source.f, state.t,
                             system.load_degree)
        work = float(lf @ state.u)
    return ConservationReport(
        t=state.t,
        energy=energy(system, state),
        viscous_dissipation=pp.re_inv * float(state.u @ (ctx.curlcurl
                                                         @ state.u)),
        ohmic_dissipation=pp.sc * pp.rm_inv * float(state.j @ (ctx.m_n
                                                               @ state.j)),
        work=work,
        magnetic_helicity=magnetic_helicity(system, state),
        cross_helicity=cross_helicity(system, state),
        div_b_l2=div_l2, div_b_max=div_max)


def report_step(system: MhdSystem, prev: MhdState,
                cur: MhdState) -> ConservationReport:
    """Row for the state reached by one step, with transition residuals."""
    rep = report_state(system, cur)
    rep.energy_residual = energy_residual(system, prev, cur)
    rep.helicity_m_residual, rep.helicity_c_residual = \
        helicity_rate_residuals(system, prev, cur)
    return rep


def write_report_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rep in reports:
            writer.writerow([f"{v:.17g}" for v in rep.row()])
