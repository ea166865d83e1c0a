"""Discrete bilinear and trilinear forms on the mapped channel grid.

Layout conventions
------------------
* Nodal fields are ``(Nq, Ns + 1)`` arrays, flattened row-major (node
  ``n = i * (Ns + 1) + j``).
* Velocity unknowns ("free" DOFs) exclude the Dirichlet values: ``v1`` lives on
  rows ``j = 0 .. Ns-1`` (the bottom row carries the friction slip) and ``v2``
  on rows ``j = 1 .. Ns-1``.  Packed vectors concatenate the two blocks.

Diffusion uses the Q1 finite-element stiffness (2x2 Gauss points, metric
evaluated from the analytic h, h'), which is symmetric positive definite on the
free DOFs and has no hourglass modes.  Transport uses central differences with
summation-by-parts closures in s, so the skew-symmetric form is exactly
energy-neutral in the lumped-mass inner product.
"""
from __future__ import annotations

import weakref

import numpy as np
import scipy.sparse as sp

from .geometry import MappedGrid

_GAUSS = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def d_q(f: np.ndarray, grid: MappedGrid) -> np.ndarray:
    """Periodic central difference along q."""
    return (np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0)) / (2.0 * grid.dq)


def d_s(f: np.ndarray, grid: MappedGrid) -> np.ndarray:
    """Central difference along s with first-order SBP closures at the walls."""
    out = np.empty_like(f)
    ds = grid.ds
    out[:, 1:-1] = (f[:, 2:] - f[:, :-2]) / (2.0 * ds)
    out[:, 0] = (f[:, 1] - f[:, 0]) / ds
    out[:, -1] = (f[:, -1] - f[:, -2]) / ds
    return out


def grad_x(f, grid):
    """Pointwise physical derivatives (d/dx1, d/dx2) of a nodal field."""
    fs = d_s(f, grid)
    slope = grid.s[None, :] * (grid.dh / grid.h)[:, None]
    return d_q(f, grid) - slope * fs, fs / grid.h[:, None]


def contravariant_flux(u1, u2, grid):
    """Jacobian-weighted contravariant components (J u^q, J u^s)."""
    return grid.h[:, None] * u1, u2 - grid.s[None, :] * grid.dh[:, None] * u1


def transport_weighted(u, phi, grid):
    """J (u . grad) phi in advective form."""
    aq, as_ = contravariant_flux(u[0], u[1], grid)
    return aq * d_q(phi, grid) + as_ * d_s(phi, grid)


def transport_skew(u, phi, grid):
    """J times the skew-symmetric transport 1/2 [u.grad phi + div(u phi)]."""
    aq, as_ = contravariant_flux(u[0], u[1], grid)
    return 0.5 * (aq * d_q(phi, grid) + as_ * d_s(phi, grid)
                  + d_q(aq * phi, grid) + d_s(as_ * phi, grid))


def trapezoid_weights(grid):
    """Quadrature weights without the Jacobian (J is carried by the fluxes)."""
    return grid.weights * grid.dq * grid.ds


class Discretization:
    """Sparse operators cached per grid."""

    def __init__(self, grid: MappedGrid):
        self.grid = grid
        nq, ns = grid.Nq, grid.Ns
        self.n_nodes = nq * (ns + 1)
        node = np.arange(self.n_nodes).reshape(grid.shape)
        self.idx1 = node[:, :ns].ravel()
        self.idx2 = node[:, 1:ns].ravel()
        self.n1 = self.idx1.size
        self.n2 = self.idx2.size
        # bottom-row v1 unknowns inside the v1 block
        self.bottom = np.arange(nq) * ns
        self.K = self._stiffness()
        mass = grid.mass.ravel()
        self.mass1 = mass[self.idx1]
        self.mass2 = mass[self.idx2]
        self.K11 = self.K[self.idx1][:, self.idx1].tocsc()
        self.K22 = self.K[self.idx2][:, self.idx2].tocsc()
        self.D = self._divergence()
        self.minv = np.concatenate([1.0 / self.mass1, 1.0 / self.mass2])

    def _stiffness(self):
        g = self.grid
        geom = g.geom
        nq, ns = g.Nq, g.Ns
        dq, ds = g.dq, g.ds
        i = np.arange(nq)[:, None]
        j = np.arange(ns)[None, :]
        ip = (i + 1) % nq
        nodes = np.stack(np.broadcast_arrays(
            i * (ns + 1) + j, ip * (ns + 1) + j,
            i * (ns + 1) + j + 1, ip * (ns + 1) + j + 1), axis=-1)
        ke = np.zeros((nq, ns, 4, 4))
        for xi in _GAUSS:
            qg = g.q[:, None] + xi * dq
            h = geom.h(qg)
            hp = geom.dh(qg)
            for eta in _GAUSS:
                sg = g.s[None, :ns] + eta * ds
                g11 = np.broadcast_to(h, (nq, ns))
                g12 = -sg * hp
                g22 = (sg * hp) ** 2 / h + 1.0 / h
                bq = np.array([-(1 - eta), 1 - eta, -eta, eta]) / dq
                bs = np.array([-(1 - xi), -xi, 1 - xi, xi]) / ds
                qq = np.outer(bq, bq)
                qs = np.outer(bq, bs) + np.outer(bs, bq)
                ss = np.outer(bs, bs)
                w = 0.25 * dq * ds
                ke += w * (g11[..., None, None] * qq + g12[..., None, None] * qs
                           + g22[..., None, None] * ss)
        rows = np.repeat(nodes[..., :, None], 4, axis=-1).ravel()
        cols = np.repeat(nodes[..., None, :], 4, axis=-2).ravel()
        k = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(self.n_nodes, self.n_nodes))
        return k.tocsr()

    def _divergence(self):
        g = self.grid
        nq, ns1 = g.shape
        n = self.n_nodes
        eye_q = sp.identity(nq, format="csr")
        eye_s = sp.identity(ns1, format="csr")
        cq = sp.diags([np.ones(nq - 1), -np.ones(nq - 1)], [1, -1], shape=(nq, nq), format="lil")
        cq[0, nq - 1] = -1.0
        cq[nq - 1, 0] = 1.0
        cq = cq.tocsr() / (2.0 * g.dq)
        cs = sp.diags([np.ones(ns1 - 1), -np.ones(ns1 - 1)], [1, -1], shape=(ns1, ns1), format="lil")
        cs[0, 0], cs[0, 1] = -2.0, 2.0
        cs[-1, -1], cs[-1, -2] = 2.0, -2.0
        cs = cs.tocsr() / (2.0 * g.ds)
        dq_op = sp.kron(cq, eye_s)
        ds_op = sp.kron(eye_q, cs)
        h = sp.diags(np.repeat(g.h, ns1))
        sh = sp.diags((g.s[None, :] * g.dh[:, None]).ravel())
        w = sp.diags(trapezoid_weights(g).ravel())
        d1 = w @ (dq_op @ h - ds_op @ sh)
        d2 = w @ ds_op
        return sp.hstack([d1.tocsc()[:, self.idx1], d2.tocsc()[:, self.idx2]]).tocsr()

    # packing helpers -------------------------------------------------------
    def pack(self, v1, v2):
        return np.concatenate([np.asarray(v1).ravel()[self.idx1], np.asarray(v2).ravel()[self.idx2]])

    def unpack(self, x):
        v1 = np.zeros(self.n_nodes)
        v2 = np.zeros(self.n_nodes)
        v1[self.idx1] = x[:self.n1]
        v2[self.idx2] = x[self.n1:]
        return v1.reshape(self.grid.shape), v2.reshape(self.grid.shape)

    def apply_bc(self, v1, v2):
        """Zero the Dirichlet values: v = 0 on the top wall, v2 = 0 on the bottom."""
        v1 = np.array(v1, dtype=float, copy=True)
        v2 = np.array(v2, dtype=float, copy=True)
        v1[:, -1] = 0.0
        v2[:, -1] = 0.0
        v2[:, 0] = 0.0
        return v1, v2

    def divergence(self, v1, v2):
        """Nodal discrete divergence of a velocity field."""
        return (self.D @ self.pack(v1, v2)).reshape(self.grid.shape) / self.grid.mass


_CACHE: "weakref.WeakKeyDictionary[MappedGrid, Discretization]" = weakref.WeakKeyDictionary()


def discretization(grid: MappedGrid) -> Discretization:
    d = _CACHE.get(grid)
    if d is None:
        d = _CACHE[grid] = Discretization(grid)
    return d


def _check(grid, *fields):
    for f in fields:
        if np.shape(f) != grid.shape:
            raise ValueError(f"field of shape {np.shape(f)} does not live on grid {grid.shape}")


def a_form(u, w, grid: MappedGrid) -> float:
    """Discrete Dirichlet form (grad u, grad w) for velocity pairs (u1, u2)."""
    _check(grid, *u, *w)
    K = discretization(grid).K
    return float(sum(np.dot(uc.ravel(), K @ wc.ravel()) for uc, wc in zip(u, w)))


def b_form(u, v, w, grid: MappedGrid) -> float:
    """Discrete ((u . grad) v, w) in advective form."""
    _check(grid, *u, *v, *w)
    wt = trapezoid_weights(grid)
    return float(sum(np.sum(wt * transport_weighted(u, vc, grid) * wc) for vc, wc in zip(v, w)))


def b_skew(u, v, w, grid: MappedGrid) -> float:
    """1/2 [((u . grad) v, w) - ((u . grad) w, v)]; b_skew(u, v, v) == 0 exactly."""
    return 0.5 * (b_form(u, v, w, grid) - b_form(u, w, v, grid))
