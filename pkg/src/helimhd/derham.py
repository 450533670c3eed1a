"""Global operators of the discrete complex, realised as sparse solves.

Four projections/interpolations drive the scheme and its analysis:

* ``q_h`` - L2 projection onto the H_0(curl) space,
* ``curl_h`` - adjoint of the curl, mapping H_0(div) into H_0(curl),
* ``pi_n`` - curl-energy projection onto H_0(curl), computed from a mixed
  saddle system with a scalar multiplier that must come out (numerically)
  zero,
* ``pi_tilde`` - L2 projection onto the divergence-free Raviart-Thomas
  subspace, enforced by a piecewise-constant multiplier with one cell DOF
  pinned (the multiplier is only determined up to constants when the whole
  boundary carries zero normal flux).

``vector_potential`` recovers A with curl A = B for divergence-free B,
gauged L2-orthogonal to discrete gradients (the minimum-norm potential).
All solves use cached sparse LU factorisations.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .assembly import Assembler
from .mesh import TetMesh
from .spaces import (AnalyticField, FieldVector, SpaceHandle, build_space,
                     interpolate_lagrange)

LOAD_DEGREE = 8  # quadrature for moments of analytic fields


class OperatorContext:
    """Factorised operators for one mesh at one order."""

    def __init__(self, mesh: TetMesh, k: int = 0, quad_degree: int = 4,
                 asm: Assembler | None = None):
        self.mesh = mesh
        self.k = k
        self.asm = asm or Assembler(mesh, quad_degree)
        self.lagrange = build_space(mesh, "lagrange", k, zero_bc=True)
        self.nedelec = build_space(mesh, "nedelec", k, zero_bc=True)
        self.rt = build_space(mesh, "rt", k, zero_bc=True)
        self.dg = build_space(mesh, "dg", k)

        self.fL = self.lagrange.free_dofs
        self.fN = self.nedelec.free_dofs
        self.fF = self.rt.free_dofs

        a = self.asm
        self.m_n = a.mass(self.nedelec)
        self.m_rt = a.mass(self.rt)
        self.m_mix = a.mixed_mass(self.nedelec, self.rt)   # (E, F)
        self.curlcurl = a.curl_curl(self.nedelec, self.rt)
        self.grad_form = (self.m_n @ mesh.d0).tocsr()      # (E, V): (grad q, v)

        self._lu: dict = {}

    # -- factorisations ------------------------------------------------------

    def _mass_n_lu(self):
        if "mn" not in self._lu:
            m = self.m_n[self.fN][:, self.fN]
            self._lu["mn"] = splu(m.tocsc())
        return self._lu["mn"]

    def _saddle_curl_lu(self):
        """[[curlcurl, G], [G', 0]] on free Nedelec x free Lagrange DOFs."""
        if "saddle_curl" not in self._lu:
            a = self.curlcurl[self.fN][:, self.fN]
            g = self.grad_form[self.fN][:, self.fL]
            mat = sp.bmat([[a, g], [g.T, None]], format="csc")
            self._lu["saddle_curl"] = splu(mat)
        return self._lu["saddle_curl"]

    def _saddle_div_lu(self):
        """[[M_RT, B'], [B, 0]] with B = D2 minus one pinned cell row."""
        if "saddle_div" not in self._lu:
            m = self.m_rt[self.fF][:, self.fF]
            b = self.mesh.d2[:-1][:, self.fF].astype(float)
            mat = sp.bmat([[m, b.T], [b, None]], format="csc")
            self._lu["saddle_div"] = splu(mat)
        return self._lu["saddle_div"]

    # -- operators -------------------------------------------------------------

    def q_h(self, v, t=0.0) -> np.ndarray:
        """L2 projection into H_0(curl): (v - Q_h v, E_h) = 0."""
        rhs = self._nedelec_moments_of(v, t)[self.fN]
        x = self._mass_n_lu().solve(rhs)
        out = np.zeros(self.nedelec.ndof)
        out[self.fN] = x
        return out

    def curl_h(self, b: np.ndarray) -> np.ndarray:
        """Discrete curl: (curl_h B, v_h) = (B, curl v_h) for all v_h."""
        rhs = (self.mesh.d1.T @ (self.m_rt @ b))[self.fN]
        out = np.zeros(self.nedelec.ndof)
        out[self.fN] = self._mass_n_lu().solve(rhs)
        return out

    def pi_n(self, e, t=0.0):
        """Curl-energy projection. Returns (coefficients, multiplier).

        Defined by a(E - Pi E, F_h) = 0 and (E - Pi E, grad Q_h) = 0; the
        mixed form introduces a Lagrange-space multiplier that vanishes
        identically, which callers may assert.
        """
        if isinstance(e, FieldVector) or isinstance(e, np.ndarray):
            coeffs = e.values if isinstance(e, FieldVector) else e
            rhs_a = (self.curlcurl @ coeffs)[self.fN]
            rhs_g = (self.grad_form.T @ coeffs)[self.fL]
        else:
            curl_e = _require_curl(e)
            mom_rt = self.asm.load(self.rt, curl_e, t, LOAD_DEGREE)
            rhs_a = (self.mesh.d1.T @ mom_rt)[self.fN]
            mom_n = self.asm.load(self.nedelec, e, t, LOAD_DEGREE)
            rhs_g = (self.mesh.d0.T @ mom_n)[self.fL]
        sol = self._saddle_curl_lu().solve(np.concatenate([rhs_a, rhs_g]))
        out = np.zeros(self.nedelec.ndof)
        out[self.fN] = sol[:self.fN.size]
        mult = np.zeros(self.lagrange.ndof)
        mult[self.fL] = sol[self.fN.size:]
        return out, mult

    def pi_tilde(self, b, t=0.0) -> np.ndarray:
        """L2 projection onto divergence-free RT fields (div = 0 via D2)."""
        if isinstance(b, FieldVector) or isinstance(b, np.ndarray):
            coeffs = b.values if isinstance(b, FieldVector) else b
            rhs = (self.m_rt @ coeffs)[self.fF]
        else:
            rhs = self.asm.load(self.rt, b, t, LOAD_DEGREE)[self.fF]
        nc = self.mesh.num_cells - 1
        sol = self._saddle_div_lu().solve(
            np.concatenate([rhs, np.zeros(nc)]))
        out = np.zeros(self.rt.ndof)
        out[self.fF] = sol[:self.fF.size]
        return out

    def vector_potential(self, b: np.ndarray, div_tol: float = 1e-10,
                         gauge: str = "min") -> np.ndarray:
        """A potential A_h with curl A_h = B_h, for divergence-free B_h.

        gauge "min" returns the minimum-L2-norm potential (orthogonal to
        discrete gradients); gauge "shifted" adds a fixed nonzero discrete
        gradient, exercising gauge independence of (B_h, A_h).
        """
        div_norm = float(np.abs(self.mesh.d2 @ b).max())
        scale = max(1.0, float(np.abs(b).max()))
        if div_norm > div_tol * scale:
            raise ValueError(
                f"magnetic field is not divergence-free: max |D2 B| = "
                f"{div_norm:.3e}")
        rhs_a = (self.mesh.d1.T @ (self.m_rt @ b))[self.fN]
        sol = self._saddle_curl_lu().solve(
            np.concatenate([rhs_a, np.zeros(self.fL.size)]))
        out = np.zeros(self.nedelec.ndof)
        out[self.fN] = sol[:self.fN.size]
        if gauge == "shifted":
            psi = interpolate_lagrange(
                self.lagrange,
                lambda x: np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])
                * np.sin(np.pi * x[..., 2]))
            out = out + self.mesh.d0 @ psi.values
        elif gauge != "min":
            raise ValueError(f"unknown gauge {gauge!r}")
        return out

    def commuting_residual(self, e: AnalyticField, t=0.0) -> float:
        """|| pi_tilde(curl E) - curl(pi_n E) ||_0, which vanishes exactly."""
        lhs = self.pi_tilde(_require_curl(e), t)
        rhs = self.mesh.d1 @ self.pi_n(e, t)[0]
        diff = lhs - rhs
        return float(np.sqrt(diff @ (self.m_rt @ diff)))

    # -- helpers ----------------------------------------------------------------

    def _nedelec_moments_of(self, v, t=0.0) -> np.ndarray:
        if isinstance(v, FieldVector):
            if v.space.kind == "nedelec":
                return self.m_n @ v.values
            if v.space.kind == "rt":
                return self.m_mix @ v.values
            raise ValueError(f"cannot project a {v.space.kind} field")
        if isinstance(v, np.ndarray):
            if v.shape == (self.nedelec.ndof,):
                return self.m_n @ v
            if v.shape == (self.rt.ndof,):
                return self.m_mix @ v
            raise ValueError("coefficient vector matches no space")
        return self.asm.load(self.nedelec, v, t, LOAD_DEGREE)

    def l2_norm_nedelec(self, v: np.ndarray) -> float:
        return float(np.sqrt(v @ (self.m_n @ v)))

    def l2_norm_rt(self, b: np.ndarray) -> float:
        return float(np.sqrt(b @ (self.m_rt @ b)))


def _require_curl(e: AnalyticField):
    if isinstance(e, AnalyticField) and e.curl is not None:
        return AnalyticField(fn=e.curl)
    raise ValueError("analytic field needs a closed-form curl")
