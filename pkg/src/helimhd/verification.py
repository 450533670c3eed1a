"""Rate studies and operator batteries.

``run_convergence`` integrates a manufactured case on a sequence of meshes
with dt proportional to h^2 (midpoint time error subdominant to the O(h)
spatial error at k=0) and reports final-time L2 errors for u and B plus
midpoint-quadrature time-accumulated errors for curl u and j, with fitted
rates between consecutive levels.

``run_operator_rates`` measures the interpolants and projections of the
complex on a smooth battery; ``run_operator_battery`` is the exactness /
commuting / adjointness check list driven by the CLI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import Assembler
from .derham import OperatorContext
from .manufactured import (BUMP, BUMP2, ManufacturedCase, Term, curl_terms,
                           eval_vector)
from .mesh import TetMesh, build_box_mesh
from .solver import MhdSystem
from .spaces import (AnalyticField, build_space, interpolate_lagrange,
                     interpolate_nedelec, interpolate_rt)


@dataclass
class EocTable:
    label: str
    ns: list
    hs: list
    dts: list
    errors: dict
    rates: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def finalize(self):
        self.rates = {name: _fit_rates(self.hs, errs)
                      for name, errs in self.errors.items()}
        return self

    def final_rates(self) -> dict:
        """Rate on the finest consecutive pair, per tracked error."""
        return {name: (r[-1] if r else math.nan)
                for name, r in self.rates.items()}


def _fit_rates(hs, errs):
    out = []
    for i in range(len(errs) - 1):
        if errs[i + 1] == 0.0 or errs[i] == 0.0:
            out.append(math.inf)
        else:
            out.append(math.log(errs[i] / errs[i + 1])
                       / math.log(hs[i] / hs[i + 1]))
    return out


def run_convergence(case: ManufacturedCase, k: int = 0, ns=(2, 4, 8),
                    T: float = 0.1, dt_factor: float = 0.1,
                    quiet: bool = True, progress=None) -> EocTable:
    """Full-scheme EOC study for one manufactured case."""
    table = EocTable(label=f"scheme EOC [{case.name}]", ns=list(ns), hs=[],
                     dts=[],
                     errors={"u_L2": [], "B_L2": [], "curl_u_L2t": [],
                             "j_L2t": []})
    for n in ns:
        mesh = build_box_mesh(n)
        system = MhdSystem(mesh, case.params, source=case.source(), k=k)
        dt = dt_factor * mesh.h ** 2
        steps = max(1, math.ceil(T / dt - 1e-12))
        dt = T / steps
        state = system.init_state(case.u, case.B)
        acc_curl = 0.0
        acc_j = 0.0
        for _ in range(steps):
            prev = state
            state = system.step_midpoint(state, dt)
            t_mid = prev.t + dt / 2.0
            u_mid = (prev.u + state.u) / 2.0
            j_mid = (prev.j + state.j) / 2.0
            acc_curl += dt * system.asm.l2_error(
                system.rt, mesh.d1 @ u_mid, case.u.curl, t_mid) ** 2
            acc_j += dt * system.asm.l2_error(
                system.ned, j_mid, case.j, t_mid) ** 2
        table.hs.append(mesh.h)
        table.dts.append(dt)
        table.errors["u_L2"].append(
            system.asm.l2_error(system.ned, state.u, case.u, T))
        table.errors["B_L2"].append(
            system.asm.l2_error(system.rt, state.b, case.B, T))
        table.errors["curl_u_L2t"].append(math.sqrt(acc_curl))
        table.errors["j_L2t"].append(math.sqrt(acc_j))
        if progress:
            progress(n, {k: v[-1] for k, v in table.errors.items()})
        if not quiet:
            print(f"  n={n:2d} h={mesh.h:.4f} dt={dt:.5f} steps={steps} "
                  + " ".join(f"{k}={v[-1]:.4e}"
                             for k, v in table.errors.items()))
    return table.finalize()


def initial_data_error(case: ManufacturedCase, n: int, k: int = 0):
    """(||u0 - u_h0||, ||B0 - B_h0||) for the discrete initial data."""
    system = MhdSystem(build_box_mesh(n), case.params, source=case.source(),
                       k=k)
    state = system.init_state(case.u, case.B)
    return (system.asm.l2_error(system.ned, state.u, case.u, 0.0),
            system.asm.l2_error(system.rt, state.b, case.B, 0.0))


# ---------------------------------------------------------------------------
# Smooth battery and operator rates.
# ---------------------------------------------------------------------------

def _trig_field() -> AnalyticField:
    pi = np.pi

    def fn(x, t=0.0):
        X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
        return np.stack([np.sin(pi * Y) * np.sin(pi * Z),
                         np.sin(pi * Z) * np.sin(pi * X),
                         np.sin(pi * X) * np.sin(pi * Y)], axis=-1)

    def curl(x, t=0.0):
        X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
        return pi * np.stack(
            [np.sin(pi * X) * (np.cos(pi * Y) - np.cos(pi * Z)),
             np.sin(pi * Y) * (np.cos(pi * Z) - np.cos(pi * X)),
             np.sin(pi * Z) * (np.cos(pi * X) - np.cos(pi * Y))], axis=-1)

    return AnalyticField(fn=fn, curl=curl)


def _potential_field(terms) -> AnalyticField:
    rep = curl_terms(terms)
    crep = curl_terms(rep)
    return AnalyticField(fn=lambda x, t=0.0: eval_vector(rep, x),
                         curl=lambda x, t=0.0: eval_vector(crep, x))


def _gradient_field() -> AnalyticField:
    rep = [[Term(1.0, BUMP, BUMP, BUMP).d(k)] for k in range(3)]

    def fn(x, t=0.0):
        return eval_vector(rep, x)

    def curl(x, t=0.0):
        return np.zeros(x.shape[:-1] + (3,))

    return AnalyticField(fn=fn, curl=curl)


def smooth_battery():
    """Five tangentially-clean smooth fields with exact closed-form curls."""
    return [
        _trig_field(),
        _potential_field([[Term(1.0, BUMP, BUMP2, BUMP)], [], []]),
        _potential_field([[], [Term(0.8, BUMP, BUMP, BUMP)],
                          [Term(-0.5, BUMP2, BUMP, BUMP)]]),
        _gradient_field(),
        _potential_field([[Term(0.3, BUMP2, BUMP, BUMP2)],
                          [Term(1.0, BUMP, BUMP2, BUMP)],
                          [Term(0.7, BUMP, BUMP, BUMP)]]),
    ]


def run_operator_rates(k: int = 0, ns=(4, 8, 16),
                       quiet: bool = True) -> EocTable:
    """Interpolant / projection error rates on the smooth battery.

    The default levels go one step beyond the scheme study because the L2
    projection onto the edge space is still pre-asymptotic at n=8 (its EOC
    there is ~0.89 even for the smoothest mode-1 field); at n=16 every
    operator is comfortably in the k+1 regime.
    """
    from .manufactured import build_case
    case = build_case("decay-trig")
    scalar = case.P
    vec_curl = _trig_field()
    vec_div = case.B  # divergence-free, as Prop-type bounds require

    table = EocTable(label="operator EOC", ns=list(ns), hs=[], dts=[],
                     errors={"lagrange_interp": [], "nedelec_interp": [],
                             "rt_interp": [], "q_h": [], "pi_n_l2": [],
                             "pi_n_curl": [], "pi_tilde": []})
    for n in ns:
        mesh = build_box_mesh(n)
        ctx = OperatorContext(mesh, k=k)
        asm = ctx.asm
        lag = build_space(mesh, "lagrange", k, zero_bc=True)
        err = table.errors
        pv = interpolate_lagrange(lag, lambda x: scalar.fn(x, 0.0))
        err["lagrange_interp"].append(asm.l2_error(lag, pv.values, scalar))
        uv = interpolate_nedelec(ctx.nedelec, vec_curl)
        err["nedelec_interp"].append(
            asm.l2_error(ctx.nedelec, uv.values, vec_curl))
        bv = interpolate_rt(ctx.rt, vec_div)
        err["rt_interp"].append(asm.l2_error(ctx.rt, bv.values, vec_div))
        err["q_h"].append(
            asm.l2_error(ctx.nedelec, ctx.q_h(vec_curl), vec_curl))
        pin, _ = ctx.pi_n(vec_curl)
        err["pi_n_l2"].append(asm.l2_error(ctx.nedelec, pin, vec_curl))
        err["pi_n_curl"].append(asm.l2_error(
            ctx.rt, mesh.d1 @ pin, AnalyticField(fn=vec_curl.curl)))
        err["pi_tilde"].append(
            asm.l2_error(ctx.rt, ctx.pi_tilde(vec_div), vec_div))
        table.hs.append(mesh.h)
        table.dts.append(None)
        if not quiet:
            print(f"  n={n:2d} " + " ".join(f"{k2}={v[-1]:.4e}"
                                            for k2, v in err.items()))

    # projector idempotence on the finest mesh
    mesh = build_box_mesh(ns[-1])
    ctx = OperatorContext(mesh, k=k)
    qv = ctx.q_h(vec_curl)
    pv, mult = ctx.pi_n(vec_curl)
    tv = ctx.pi_tilde(vec_div)
    table.extras["idem_q_h"] = float(np.abs(ctx.q_h(qv) - qv).max())
    table.extras["idem_pi_n"] = float(np.abs(ctx.pi_n(pv)[0] - pv).max())
    table.extras["idem_pi_tilde"] = float(np.abs(ctx.pi_tilde(tv) - tv).max())
    table.extras["pi_n_multiplier"] = float(np.abs(mult).max())
    return table.finalize()


# ---------------------------------------------------------------------------
# Exactness / commuting / adjointness battery (drives cli operator-tests).
# ---------------------------------------------------------------------------

@dataclass
class BatteryCheck:
    name: str
    value: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.value <= self.tol


def run_operator_battery(meshes, tol_commuting=1e-10, tol_projector=1e-12,
                         tol_adjoint=1e-12, seed=0) -> list:
    """Structure checks on a list of meshes; returns one result per check."""
    checks = []
    dd = 0.0
    euler = 0.0
    for mesh in meshes:
        dd = max(dd, float(np.abs((mesh.d1 @ mesh.d0).toarray()).max()),
                 float(np.abs((mesh.d2 @ mesh.d1).toarray()).max()))
        euler = max(euler, abs(mesh.euler_characteristic() - 1))
    checks.append(BatteryCheck("incidence d-after-d (D1 D0 = 0, D2 D1 = 0)",
                               dd, 0.0))
    checks.append(BatteryCheck("euler characteristic = 1", euler, 0.0))

    rng = np.random.default_rng(seed)
    battery = smooth_battery()
    commuting = 0.0
    multiplier = 0.0
    idem = 0.0
    adjoint = 0.0
    antisym = 0.0
    potential = 0.0
    for mesh in meshes:
        ctx = OperatorContext(mesh)
        for f in battery:
            commuting = max(commuting, ctx.commuting_residual(f))
            pin, mult = ctx.pi_n(f)
            multiplier = max(multiplier, float(np.abs(mult).max()))
            idem = max(idem, float(np.abs(ctx.pi_n(pin)[0] - pin).max()))
            qh = ctx.q_h(f)
            idem = max(idem, float(np.abs(ctx.q_h(qh) - qh).max()))
        asm = ctx.asm
        for _ in range(10):
            b = np.zeros(ctx.rt.ndof)
            b[ctx.fF] = rng.standard_normal(ctx.fF.size)
            v = np.zeros(ctx.nedelec.ndof)
            v[ctx.fN] = rng.standard_normal(ctx.fN.size)
            ch = ctx.curl_h(b)
            lhs = float(ch @ (ctx.m_n @ v))
            rhs = float(b @ (ctx.m_rt @ (mesh.d1 @ v)))
            scale = ctx.l2_norm_rt(b) * ctx.l2_norm_nedelec(v)
            adjoint = max(adjoint, abs(lhs - rhs) / max(scale, 1e-30))
            a = np.zeros(ctx.nedelec.ndof)
            a[ctx.fN] = rng.standard_normal(ctx.fN.size)
            load = asm.cross_load(ctx.nedelec, a, ctx.nedelec, v, ctx.nedelec)
            antisym = max(antisym, abs(float(load @ a))
                          / max(1.0, float(np.abs(a).max()) ** 2
                                * float(np.abs(v).max())))
            bdf = mesh.d1 @ v
            av = ctx.vector_potential(bdf)
            potential = max(potential,
                            ctx.l2_norm_rt(mesh.d1 @ av - bdf)
                            / max(1.0, ctx.l2_norm_rt(bdf)))
    checks.append(BatteryCheck("commuting diagram pi_tilde(curl E) = "
                               "curl pi_n(E)", commuting, tol_commuting))
    checks.append(BatteryCheck("pi_n multiplier = 0", multiplier, 1e-10))
    checks.append(BatteryCheck("projector idempotence", idem, tol_projector))
    checks.append(BatteryCheck("curl_h adjointness", adjoint, tol_adjoint))
    checks.append(BatteryCheck("cross-form antisymmetry (a x b, a) = 0",
                               antisym, tol_adjoint))
    checks.append(BatteryCheck("vector potential curl A = B", potential,
                               tol_commuting))
    return checks
