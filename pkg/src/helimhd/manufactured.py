"""Manufactured solutions closing the seven-field system.

Arbitrary smooth (u, B) pairs do not satisfy Faraday's law, so each case
carries a momentum source f and a divergence-free Faraday defect
g_B = dt B + curl E; both are exact closed forms.

Spatial parts are built from separable products of sin/cos powers, a family
closed under differentiation, through vector potentials:  u = curl(phi) and
B = curl(psi) are divergence-free by construction, and choosing bump
factors sin^3(pi s) (value and first two derivatives vanish at the ends)
makes u, B and all derived fields (vorticity, current, electric field)
vanish on the whole boundary, so every field conforms to its trace
condition.  Every case is guarded by a random-point self-check comparing
the stored closed forms against complex-step derivatives, which are exact
to machine precision and so resolve the 1e-10 tolerance that real-step
finite differences cannot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solver import PhysParams, SourceTerms
from .spaces import AnalyticField


# ---------------------------------------------------------------------------
# A tiny exact algebra: 1D factors sum_k c_k sin^a(pi s) cos^b(pi s),
# separable terms, and vector fields as term lists per component.
# ---------------------------------------------------------------------------

class Trig1D:
    """Linear combination of sin^a(pi s) cos^b(pi s) monomials."""

    def __init__(self, terms: dict):
        self.terms = {k: v for k, v in terms.items() if v != 0.0}

    def deriv(self) -> "Trig1D":
        out: dict = {}
        for (a, b), c in self.terms.items():
            if a:
                key = (a - 1, b + 1)
                out[key] = out.get(key, 0.0) + np.pi * c * a
            if b:
                key = (a + 1, b - 1)
                out[key] = out.get(key, 0.0) - np.pi * c * b
        return Trig1D(out)

    def __call__(self, s):
        sin, cos = np.sin(np.pi * s), np.cos(np.pi * s)
        out = np.zeros_like(np.asarray(s))
        for (a, b), c in self.terms.items():
            out = out + c * sin ** a * cos ** b
        return out


ONE = Trig1D({(0, 0): 1.0})
SIN = Trig1D({(1, 0): 1.0})
COS = Trig1D({(0, 1): 1.0})
SIN2 = Trig1D({(1, 1): 2.0})    # sin(2 pi s)
# Bumps vanishing together with their first two derivatives at s = 0, 1, so
# curls up to second order of any product field vanish on the walls.
BUMP = Trig1D({(3, 0): 1.0})    # sin^3(pi s)
BUMP2 = Trig1D({(3, 1): 1.0})   # sin^3(pi s) cos(pi s)


@dataclass(frozen=True)
class Term:
    coeff: float
    fx: Trig1D
    fy: Trig1D
    fz: Trig1D

    def d(self, axis: int) -> "Term":
        fs = [self.fx, self.fy, self.fz]
        fs[axis] = fs[axis].deriv()
        return Term(self.coeff, *fs)


def _d(terms, axis):
    return [t.d(axis) for t in terms]


def _neg(terms):
    return [Term(-t.coeff, t.fx, t.fy, t.fz) for t in terms]


def curl_terms(vec):
    """curl of a term-list vector field, as a new term-list vector field."""
    return [_d(vec[2], 1) + _neg(_d(vec[1], 2)),
            _d(vec[0], 2) + _neg(_d(vec[2], 0)),
            _d(vec[1], 0) + _neg(_d(vec[0], 1))]


def eval_scalar(terms, x):
    out = 0.0
    for t in terms:
        out = out + t.coeff * t.fx(x[..., 0]) * t.fy(x[..., 1]) \
            * t.fz(x[..., 2])
    return out + np.zeros(x.shape[:-1], dtype=np.result_type(x, float))


def eval_vector(vec, x):
    return np.stack([eval_scalar(comp, x) for comp in vec], axis=-1)


def eval_jacobian(vec, x):
    """(..., 3, 3) with entry [i, k] = d v_i / d x_k."""
    rows = [np.stack([eval_scalar(_d(vec[i], k), x) for k in range(3)],
                     axis=-1) for i in range(3)]
    return np.stack(rows, axis=-2)


# ---------------------------------------------------------------------------
# Cases.
# ---------------------------------------------------------------------------

@dataclass
class ManufacturedCase:
    """Exact solution of the seven-field system with closing sources."""

    name: str
    params: PhysParams
    u: AnalyticField
    B: AnalyticField
    P: AnalyticField
    omega: AnalyticField
    H: AnalyticField
    j: AnalyticField
    E: AnalyticField
    f: AnalyticField
    g_b: AnalyticField

    def source(self) -> SourceTerms:
        return SourceTerms(f=self.f, g_b=self.g_b)

    def self_check(self, npts: int = 100, seed: int = 0,
                   tol: float = 1e-10) -> None:
        run_self_check(self, npts=npts, seed=seed, tol=tol)


# Velocity / magnetic potentials per case.  The trig case realises the
# mode-1 eigenfield pair (u has u x n = 0, B has B . n = 0, both
# solenoidal); the bump case uses wall-flat bumps so that the derived
# vorticity, current and electric field also carry zero traces.
_PI = float(np.pi)
_POTENTIALS = {
    "decay-trig": {
        # curl phi = (sin pi y sin pi z, sin pi z sin pi x, sin pi x sin pi y)
        "phi": [[Term(0.5 / _PI, SIN, COS, ONE), Term(-0.5 / _PI, SIN, ONE, COS)],
                [Term(0.5 / _PI, ONE, SIN, COS), Term(-0.5 / _PI, COS, SIN, ONE)],
                [Term(0.5 / _PI, COS, ONE, SIN), Term(-0.5 / _PI, ONE, COS, SIN)]],
        # curl psi = (sin pi x cos pi y, -cos pi x sin pi y
        #             + sin pi y cos pi z, -cos pi y sin pi z)
        "psi": [[Term(1.0 / _PI, ONE, SIN, SIN)], [],
                [Term(1.0 / _PI, SIN, SIN, ONE)]],
        "p": [Term(1.0, SIN, SIN, SIN)],
    },
    "decay-bump": {
        "phi": [[Term(0.7, BUMP2, BUMP, BUMP)], [],
                [Term(1.0, BUMP, BUMP, BUMP2)]],
        "psi": [[Term(0.9, BUMP, BUMP2, BUMP)],
                [Term(0.6, BUMP, BUMP, BUMP2)],
                [Term(1.0, BUMP2, BUMP, BUMP)]],
        "p": [Term(1.0, BUMP, BUMP, BUMP)],
    },
    "static-b": {
        "phi": None,
        "psi": [[], [], [Term(1.0, BUMP, BUMP, BUMP)]],
        "p": [],
    },
}

CASE_NAMES = ("decay-trig", "decay-bump", "static-b", "zero")


def build_case(name: str, params: PhysParams | None = None) -> ManufacturedCase:
    if name in ("decay-trig", "decay-bump"):
        case = _separable_case(name, params or PhysParams(), decay=1.0,
                               static=False, **_POTENTIALS[name])
    elif name == "static-b":
        case = _separable_case(name, params or PhysParams(rm_inv=0.0),
                               decay=0.0, static=True, **_POTENTIALS[name])
    elif name == "zero":
        case = _zero_case(params or PhysParams())
    else:
        raise ValueError(f"unknown manufactured case {name!r}; "
                         f"available: {CASE_NAMES}")
    case.self_check()
    return case


def _zero_vec(x, t=0.0):
    return np.zeros(x.shape[:-1] + (3,), dtype=np.result_type(x, float))


def _zero_scalar(x, t=0.0):
    return np.zeros(x.shape[:-1], dtype=np.result_type(x, float))


def _zero_case(params) -> ManufacturedCase:
    zv = AnalyticField(fn=_zero_vec, curl=_zero_vec, div=_zero_scalar,
                       dt=_zero_vec)
    zs = AnalyticField(fn=_zero_scalar, shape="scalar", grad=_zero_vec,
                       dt=_zero_scalar)
    return ManufacturedCase(name="zero", params=params, u=zv, B=zv, P=zs,
                            omega=zv, H=zv, j=zv, E=zv, f=zv, g_b=zv)


def _separable_case(name, params, decay, static, phi, psi, p) \
        -> ManufacturedCase:
    mu, sc = params.mu, params.sc
    re_inv, rm_inv = params.re_inv, params.rm_inv

    empty = [[], [], []]
    u_rep = curl_terms(phi) if phi is not None else empty
    w_rep = curl_terms(u_rep)
    ccu_rep = curl_terms(w_rep)
    b_rep = curl_terms(psi)
    cb_rep = curl_terms(b_rep)
    ccb_rep = curl_terms(cb_rep)
    p_rep = p
    gp_rep = [_d(p_rep, k) for k in range(3)]

    lam_u = decay
    lam_b = 0.0 if static else decay

    def gu(t):
        return np.exp(-lam_u * t)

    def gb(t):
        return np.exp(-lam_b * t)

    def u_fn(x, t=0.0):
        return gu(t) * eval_vector(u_rep, x)

    def w_fn(x, t=0.0):
        return gu(t) * eval_vector(w_rep, x)

    def b_fn(x, t=0.0):
        return gb(t) * eval_vector(b_rep, x)

    def j_fn(x, t=0.0):
        return gb(t) / mu * eval_vector(cb_rep, x)

    def h_fn(x, t=0.0):
        return b_fn(x, t) / mu

    def p_fn(x, t=0.0):
        return gu(t) * eval_scalar(p_rep, x)

    def gp_fn(x, t=0.0):
        return gu(t) * np.stack([eval_scalar(g, x) for g in gp_rep], axis=-1)

    def e_fn(x, t=0.0):
        return rm_inv * j_fn(x, t) - np.cross(u_fn(x, t), b_fn(x, t))

    def curl_e_fn(x, t=0.0):
        # curl(u x B) = (B . grad)u - (u . grad)B for solenoidal u, B
        ju = gu(t) * eval_jacobian(u_rep, x)
        jb = gb(t) * eval_jacobian(b_rep, x)
        uu, bb = u_fn(x, t), b_fn(x, t)
        adv = (np.einsum("...ik,...k->...i", ju, bb)
               - np.einsum("...ik,...k->...i", jb, uu))
        return rm_inv * gb(t) / mu * eval_vector(ccb_rep, x) - adv

    def f_fn(x, t=0.0):
        out = -lam_u * u_fn(x, t)
        out = out - np.cross(u_fn(x, t), w_fn(x, t))
        out = out + re_inv * gu(t) * eval_vector(ccu_rep, x)
        out = out - sc * np.cross(j_fn(x, t), b_fn(x, t))
        return out + gp_fn(x, t)

    def gb_fn(x, t=0.0):
        return -lam_b * b_fn(x, t) + curl_e_fn(x, t)

    u = AnalyticField(fn=u_fn, curl=w_fn, div=_zero_scalar,
                      dt=lambda x, t=0.0: -lam_u * u_fn(x, t))
    B = AnalyticField(fn=b_fn, curl=lambda x, t=0.0: mu * j_fn(x, t),
                      div=_zero_scalar,
                      dt=lambda x, t=0.0: -lam_b * b_fn(x, t))
    P = AnalyticField(fn=p_fn, shape="scalar", grad=gp_fn)
    omega = AnalyticField(
        fn=w_fn, curl=lambda x, t=0.0: gu(t) * eval_vector(ccu_rep, x))
    Hf = AnalyticField(fn=h_fn, curl=lambda x, t=0.0: j_fn(x, t))
    jf = AnalyticField(
        fn=j_fn, curl=lambda x, t=0.0: gb(t) / mu * eval_vector(ccb_rep, x))
    Ef = AnalyticField(fn=e_fn, curl=curl_e_fn)
    ff = AnalyticField(fn=f_fn)
    gbf = AnalyticField(fn=gb_fn, div=_zero_scalar)
    return ManufacturedCase(name=name, params=params, u=u, B=B, P=P,
                            omega=omega, H=Hf, j=jf, E=Ef, f=ff, g_b=gbf)


# ---------------------------------------------------------------------------
# Initial-data battery for free (unforced) conservation runs.
# ---------------------------------------------------------------------------

def initial_data(name: str):
    """(u0, B0) pairs: div-free, u0 x n = 0, B0 . n = 0, helical."""
    pi = np.pi
    if name == "trig-helical":
        def u0(x, t=0.0):
            X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
            return np.stack([np.sin(pi * Y) * np.sin(pi * Z),
                             np.sin(pi * Z) * np.sin(pi * X),
                             np.sin(pi * X) * np.sin(pi * Y)], axis=-1)

        def b0(x, t=0.0):
            X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
            return np.stack(
                [np.sin(pi * X) * np.cos(pi * Y),
                 -np.cos(pi * X) * np.sin(pi * Y)
                 + np.sin(2 * pi * Y) * np.cos(pi * Z),
                 -2.0 * np.cos(2 * pi * Y) * np.sin(pi * Z)], axis=-1)

        return (AnalyticField(fn=u0, div=_zero_scalar),
                AnalyticField(fn=b0, div=_zero_scalar))
    if name == "zero":
        zv = AnalyticField(fn=_zero_vec, div=_zero_scalar)
        return zv, zv
    raise ValueError(f"unknown initial data {name!r}; "
                     f"available: trig-helical, zero")


# ---------------------------------------------------------------------------
# Complex-step self-check.
# ---------------------------------------------------------------------------

_CS_H = 1e-30


def cs_partial(fn, x, t, axis):
    xc = x.astype(complex)
    xc[..., axis] = xc[..., axis] + 1j * _CS_H
    return np.imag(fn(xc, t)) / _CS_H


def cs_curl(fn, x, t):
    d = [cs_partial(fn, x, t, k) for k in range(3)]
    return np.stack([d[1][..., 2] - d[2][..., 1],
                     d[2][..., 0] - d[0][..., 2],
                     d[0][..., 1] - d[1][..., 0]], axis=-1)


def cs_div(fn, x, t):
    return sum(cs_partial(fn, x, t, k)[..., k] for k in range(3))


def cs_grad(fn, x, t):
    return np.stack([cs_partial(fn, x, t, k) for k in range(3)], axis=-1)


def cs_dt(fn, x, t):
    return np.imag(fn(x, t + 1j * _CS_H)) / _CS_H


def run_self_check(case: ManufacturedCase, npts=100, seed=0, tol=1e-10):
    """Verify the stored closed forms against complex-step derivatives.

    Checks the derivative-free relations pointwise, the momentum and
    Faraday closures f and g_B, boundary traces, and that both u and B are
    solenoidal.  Aborts on failure, which signals a transcription error.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.05, 0.95, size=(npts, 3))
    ts = rng.uniform(0.0, 1.0, size=npts)
    pp = case.params

    def worst(vals):
        return float(np.abs(vals).max())

    errs = {}
    for t in np.unique(np.round(ts[:7], 6)):
        errs["div_u"] = max(errs.get("div_u", 0.0),
                            worst(cs_div(case.u.fn, x, t)))
        errs["div_b"] = max(errs.get("div_b", 0.0),
                            worst(cs_div(case.B.fn, x, t)))
        errs["div_gb"] = max(errs.get("div_gb", 0.0),
                             worst(cs_div(case.g_b.fn, x, t)))
        errs["vorticity"] = max(errs.get("vorticity", 0.0), worst(
            case.omega.fn(x, t) - cs_curl(case.u.fn, x, t)))
        errs["ampere"] = max(errs.get("ampere", 0.0), worst(
            case.j.fn(x, t) - cs_curl(case.H.fn, x, t)))
        errs["constitutive"] = max(errs.get("constitutive", 0.0), worst(
            case.B.fn(x, t) - pp.mu * case.H.fn(x, t)))
        errs["ohm"] = max(errs.get("ohm", 0.0), worst(
            pp.rm_inv * case.j.fn(x, t) - case.E.fn(x, t)
            - np.cross(case.u.fn(x, t), case.B.fn(x, t))))
        f_check = (cs_dt(case.u.fn, x, t)
                   - np.cross(case.u.fn(x, t), case.omega.fn(x, t))
                   + pp.re_inv * cs_curl(case.omega.fn, x, t)
                   - pp.sc * np.cross(case.j.fn(x, t), case.B.fn(x, t))
                   + cs_grad(case.P.fn, x, t))
        errs["momentum"] = max(errs.get("momentum", 0.0),
                               worst(case.f.fn(x, t) - f_check))
        gb_check = cs_dt(case.B.fn, x, t) + cs_curl(case.E.fn, x, t)
        errs["faraday"] = max(errs.get("faraday", 0.0),
                              worst(case.g_b.fn(x, t) - gb_check))

    # boundary traces at random wall points
    xb = rng.uniform(0.0, 1.0, size=(60, 3))
    for axis in range(3):
        for side in (0.0, 1.0):
            xw = xb.copy()
            xw[:, axis] = side
            nrm = np.zeros(3)
            nrm[axis] = 1.0
            uw = case.u.fn(xw, 0.3)
            bw = case.B.fn(xw, 0.3)
            errs["bc_u"] = max(errs.get("bc_u", 0.0),
                               worst(np.cross(uw, nrm)))
            errs["bc_b"] = max(errs.get("bc_b", 0.0), worst(bw @ nrm))
            errs["bc_p"] = max(errs.get("bc_p", 0.0),
                               worst(case.P.fn(xw, 0.3)))

    bad = {k: v for k, v in errs.items() if v > tol}
    if bad:
        raise AssertionError(
            f"manufactured case {case.name!r} failed its self-check: {bad}")
