"""Convex inner subproblem and its log-barrier interior-point solver.

Each outer iteration of the successive convex approximation fixes the
auxiliary receive matrices and linearization points and leaves a subproblem
that is quadratic in the beamformers, linear in the quantization covariances
apart from -log|Q_l| terms, and constrained by the linearized fronthaul
inequalities and per-user power budgets. Everything is expressed over a real
parameter vector

    x = [per user: Re vec(V_k), Im vec(V_k); per BS: Hermitian params of Q_l]

where a Hermitian N x N matrix contributes its N real diagonal entries, then
the real and imaginary parts of the strict upper triangle. The -log|Q_l|
terms double as barriers keeping every Q_l positive definite, so the
interior-point method needs explicit barriers only for the fronthaul and
power inequalities. Natural-log units throughout; the caller converts to
bits at the boundary.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import InfeasibleStartError, NewtonMaxIterationsError


# --- real <-> complex plumbing ---------------------------------------------

def realify(mc):
    """Real 2n x 2n representation of a complex Hermitian form."""
    return np.block([[mc.real, -mc.imag], [mc.imag, mc.real]])


def mat_to_real(g):
    """Matrix-form gradient (d/dReV + i d/dImV) to the real coordinate vector."""
    return np.concatenate([g.real.ravel(order="F"), g.imag.ravel(order="F")])


def real_to_cmat(x, rows, cols):
    half = rows * cols
    re = x[:half].reshape((rows, cols), order="F")
    im = x[half:].reshape((rows, cols), order="F")
    return re + 1j * im


class HermBasis:
    """Real parametrization of Hermitian N x N matrices."""

    def __init__(self, n):
        self.n = n
        self.iu = np.triu_indices(n, 1)
        self.n_off = self.iu[0].size
        self.dim = n * n
        mats = []
        for i in range(n):
            e = np.zeros((n, n), dtype=np.complex128)
            e[i, i] = 1.0
            mats.append(e)
        for i, j in zip(*self.iu):
            e = np.zeros((n, n), dtype=np.complex128)
            e[i, j] = 1.0
            e[j, i] = 1.0
            mats.append(e)
        for i, j in zip(*self.iu):
            e = np.zeros((n, n), dtype=np.complex128)
            e[i, j] = 1.0j
            e[j, i] = -1.0j
            mats.append(e)
        self.mats = np.stack(mats)
        self.gram = np.concatenate(
            [np.ones(n), 2.0 * np.ones(2 * self.n_off)]
        )

    def to_params(self, q):
        return np.concatenate(
            [np.diag(q).real, q[self.iu].real, q[self.iu].imag]
        )

    def from_params(self, x):
        n, no = self.n, self.n_off
        q = np.zeros((n, n), dtype=np.complex128)
        q[np.diag_indices(n)] = x[:n]
        if no:
            upper = x[n:n + no] + 1j * x[n + no:]
            q[self.iu] = upper
            q[self.iu[1], self.iu[0]] = upper.conj()
        return q

    def grad_params(self, phi):
        """Parameter gradient of f with matrix gradient phi (df = Tr(phi dQ))."""
        return np.concatenate(
            [np.diag(phi).real, 2.0 * phi[self.iu].real, 2.0 * phi[self.iu].imag]
        )

    def logdet_hess(self, qinv):
        """Hessian of -log|Q| in parameters: Tr(S_p Qinv S_q Qinv)."""
        x = np.einsum("ab,pbc,cd->pad", qinv, self.mats, qinv)
        return np.einsum("pab,qba->pq", self.mats, x).real


@lru_cache(maxsize=None)
def herm_basis(n):
    return HermBasis(n)


# --- subproblem -------------------------------------------------------------

@dataclass
class FronthaulConstraint:
    members: tuple            # BS indices whose Q enters, in stacking order
    fker: np.ndarray          # (K, M, M) per-user quadratic kernels H† Sigma^-1 H
    phi_lin: dict             # BS index -> (N, N) linear Q coefficient
    const: float              # log|Sigma| + Tr(Sigma^-1 Lam_S) - C'_S  (nats)


class InnerSubproblem:
    """Quadratic objective + convex fronthaul/power constraints in x-space.

    Holds the fixed auxiliary data (receivers U, weights W, linearization
    inverses, proximal center Theta, regularization rho) plus the constraint
    data, and exposes values/gradients/Hessians to the barrier solver.
    """

    def __init__(self, *, Hs, Lam, alpha, power, U, W, rho, theta,
                 fronthaul, interferers):
        self.Hs = Hs                      # (K, L*N, M) stacked channels
        self.Lam = Lam                    # (L, N, N)
        self.alpha = np.asarray(alpha, dtype=float)
        self.power = np.asarray(power, dtype=float)
        self.U = U                        # (K, L*N, d)
        self.W = W                        # (K, d, d)
        self.rho = float(rho)
        self.theta = theta                # (L, N, N)
        self.fronthaul = list(fronthaul)
        self.interferers = interferers

        self.K, LN, self.M = Hs.shape
        self.L, self.N = Lam.shape[0], Lam.shape[1]
        self.d = U.shape[2]
        self.basis = herm_basis(self.N)

        self.nv = 2 * self.M * self.d
        self.nq = self.N * self.N
        self.n = self.K * self.nv + self.L * self.nq
        self.m = len(self.fronthaul) + self.K

        self._build_objective()
        self._build_constraint_blocks()

    # layout ---------------------------------------------------------------

    def v_slice(self, k):
        return slice(k * self.nv, (k + 1) * self.nv)

    def q_slice(self, ell):
        base = self.K * self.nv
        return slice(base + ell * self.nq, base + (ell + 1) * self.nq)

    def pack(self, V, Q):
        x = np.empty(self.n)
        for k in range(self.K):
            x[self.v_slice(k)] = mat_to_real(V[k])
        for ell in range(self.L):
            x[self.q_slice(ell)] = self.basis.to_params(Q[ell])
        return x

    def unpack(self, x):
        V = np.stack([
            real_to_cmat(x[self.v_slice(k)], self.M, self.d)
            for k in range(self.K)
        ])
        Q = np.stack([
            self.basis.from_params(x[self.q_slice(ell)])
            for ell in range(self.L)
        ])
        return V, Q

    # objective --------------------------------------------------------------

    def _build_objective(self):
        K, L, N, d = self.K, self.L, self.N, self.d
        mk = np.einsum("knd,kde,kme->knm", self.U, self.W, self.U.conj())
        mk = mk * self.alpha[:, None, None]
        mtot = mk.sum(axis=0)

        # per-user accumulated receive weight: all users whose error matrix
        # contains V_j, i.e. k with j in I_k or k == j
        msum = np.empty((K, mtot.shape[0], mtot.shape[1]), dtype=np.complex128)
        for j in range(K):
            contributors = [k for k in range(K)
                            if k == j or j in self.interferers[k]]
            msum[j] = mk[contributors].sum(axis=0)

        self.Ahat = np.einsum("jnm,jnp,jpq->jmq", self.Hs.conj(), msum, self.Hs)
        self.Dlin = np.einsum(
            "jnm,jnd,jde->jme", self.Hs.conj(), self.U, self.W
        ) * self.alpha[:, None, None]
        self.Gq = np.stack([
            mtot[ell * N:(ell + 1) * N, ell * N:(ell + 1) * N] for ell in range(L)
        ])

        hobj = np.zeros((self.n, self.n))
        q = np.zeros(self.n)
        for k in range(K):
            sl = self.v_slice(k)
            kern = np.kron(np.eye(d), self.Ahat[k])
            hobj[sl, sl] = 2.0 * realify(kern)
            q[sl] = mat_to_real(-2.0 * self.Dlin[k])
        gram = self.basis.gram
        for ell in range(L):
            sl = self.q_slice(ell)
            hobj[sl, sl] = np.diag(2.0 * self.rho * gram)
            phi = self.Gq[ell] - 2.0 * self.rho * self.theta[ell]
            q[sl] = self.basis.grad_params(phi)
        self._hobj = hobj
        self._qobj = q

        # constant calibrated against the direct error-matrix evaluation
        v0 = np.zeros((K, self.M, d), dtype=np.complex128)
        q0 = np.stack([np.eye(N, dtype=np.complex128) for _ in range(L)])
        x0 = self.pack(v0, q0)
        self._cobj = 0.0
        self._cobj = self.f0_direct(v0, q0) - self.f0_value(x0)

    def f0_value(self, x):
        return 0.5 * x @ (self._hobj @ x) + self._qobj @ x + self._cobj

    def f0_grad(self, x):
        return self._hobj @ x + self._qobj

    def f0_direct(self, V, Q):
        """Objective from the error matrices themselves (reference path)."""
        total = 0.0
        noise = self._blockdiag(self.Lam) + self._blockdiag(Q)
        sig = np.einsum("knm,kmd->knd", self.Hs, V)
        for k in range(self.K):
            cov = noise.copy()
            for j in self.interferers[k]:
                cov += sig[j] @ sig[j].conj().T
            a = np.eye(self.d) - self.U[k].conj().T @ sig[k]
            e = a @ a.conj().T + self.U[k].conj().T @ cov @ self.U[k]
            total += self.alpha[k] * np.trace(self.W[k] @ e).real
        total += self.rho * float(
            np.sum(np.abs(Q - self.theta) ** 2)
        )
        return total

    def _blockdiag(self, blocks):
        n = self.N
        out = np.zeros((self.L * n, self.L * n), dtype=np.complex128)
        for ell in range(self.L):
            out[ell * n:(ell + 1) * n, ell * n:(ell + 1) * n] = blocks[ell]
        return out

    # constraints ------------------------------------------------------------

    def _build_constraint_blocks(self):
        d = self.d
        self._fh_vblocks = []
        for con in self.fronthaul:
            blocks = []
            for k in range(self.K):
                kern = np.kron(np.eye(d), con.fker[k])
                blocks.append(2.0 * realify(kern))
            self._fh_vblocks.append(blocks)

    def _q_logdets(self, Q):
        """Per-BS ln|Q|; None marks a non-PD block."""
        out = []
        for ell in range(self.L):
            try:
                c = np.linalg.cholesky(Q[ell])
            except np.linalg.LinAlgError:
                out.append(None)
                continue
            out.append(2.0 * float(np.sum(np.log(np.diag(c).real))))
        return out

    def _q_inverses(self, Q):
        return [np.linalg.inv(Q[ell]) for ell in range(self.L)]

    def constraints(self, x):
        """Constraint values g_i(x); +inf where a Q block left the PD cone."""
        V, Q = self.unpack(x)
        logdets = self._q_logdets(Q)
        g = np.empty(self.m)
        for i, con in enumerate(self.fronthaul):
            if any(logdets[mbr] is None for mbr in con.members):
                g[i] = np.inf
                continue
            val = con.const
            for k in range(self.K):
                val += np.einsum(
                    "md,mn,nd->", V[k].conj(), con.fker[k], V[k]
                ).real
            for mbr in con.members:
                val += np.einsum("ab,ba->", con.phi_lin[mbr], Q[mbr]).real
                val -= logdets[mbr]
            g[i] = val
        for k in range(self.K):
            g[len(self.fronthaul) + k] = (
                float(np.sum(np.abs(V[k]) ** 2)) - self.power[k]
            )
        return g

    def constraint_grads(self, x):
        V, Q = self.unpack(x)
        invs = self._q_inverses(Q)
        G = np.zeros((self.m, self.n))
        for i, con in enumerate(self.fronthaul):
            for k in range(self.K):
                G[i, self.v_slice(k)] = mat_to_real(2.0 * con.fker[k] @ V[k])
            for mbr in con.members:
                G[i, self.q_slice(mbr)] = self.basis.grad_params(
                    con.phi_lin[mbr] - invs[mbr]
                )
        for k in range(self.K):
            G[len(self.fronthaul) + k, self.v_slice(k)] = mat_to_real(2.0 * V[k])
        return G

    def hess_base(self, x, t, w):
        """t * Hess(f0) + sum_i w_i * Hess(g_i), without the rank-one terms."""
        H = t * self._hobj.copy()
        nf = len(self.fronthaul)
        for i, con in enumerate(self.fronthaul):
            for k in range(self.K):
                sl = self.v_slice(k)
                H[sl, sl] += w[i] * self._fh_vblocks[i][k]
        for k in range(self.K):
            sl = self.v_slice(k)
            H[sl, sl] += 2.0 * w[nf + k] * np.eye(self.nv)
        _, Q = self.unpack(x)
        invs = self._q_inverses(Q)
        wq = np.zeros(self.L)
        for i, con in enumerate(self.fronthaul):
            for mbr in con.members:
                wq[mbr] += w[i]
        for ell in range(self.L):
            if wq[ell] > 0:
                sl = self.q_slice(ell)
                H[sl, sl] += wq[ell] * self.basis.logdet_hess(invs[ell])
        return H


# --- barrier solver ---------------------------------------------------------

@dataclass
class BarrierInfo:
    newton_steps: int
    stages: int
    t_final: float
    gap: float


def _center(sub, x, t, f_scale, newton_tol, max_steps):
    """Newton centering of t*(f0/f_scale) - sum log(-g_i).

    The quadratic objective is advanced along the search direction in exact
    closed form and the barrier change is computed from slack ratios, so the
    line search is free of large-number cancellation even at high t. The
    stopping threshold tracks the float resolution of the Newton decrement,
    which scales with t * |f0|.
    """
    steps = 0
    tau = t / f_scale
    g = sub.constraints(x)
    s = -g
    if np.min(s) <= 0:
        raise InfeasibleStartError("centering started outside the feasible set")
    while steps < max_steps:
        grads = sub.constraint_grads(x)
        f_grad = sub.f0_grad(x)
        grad = tau * f_grad + grads.T @ (1.0 / s)
        H = sub.hess_base(x, tau, 1.0 / s)
        H += (grads / s[:, None]).T @ (grads / s[:, None])
        reg = 0.0
        while True:
            try:
                cf = scipy.linalg.cho_factor(
                    H + reg * np.eye(sub.n), lower=True
                )
                break
            except scipy.linalg.LinAlgError:
                reg = max(10.0 * reg, 1e-12 * np.trace(H) / sub.n)
                if reg > 1e8:
                    return x, steps
        dx = -scipy.linalg.cho_solve(cf, grad)
        decrement = -float(grad @ dx)
        floor = 1e-14 * (tau * max(1.0, abs(sub.f0_value(x))) + sub.m)
        if decrement / 2.0 <= max(newton_tol, floor):
            return x, steps
        qlin = float(f_grad @ dx)
        qquad = float(dx @ (sub._hobj @ dx))
        step = 1.0
        while step > 1e-14:
            xn = x + step * dx
            gn = sub.constraints(xn)
            if np.all(np.isfinite(gn)) and np.max(gn) < 0:
                sn = -gn
                dpsi = (tau * (step * qlin + 0.5 * step * step * qquad)
                        - float(np.sum(np.log(sn / s))))
                if dpsi <= -0.25 * step * decrement:
                    x, g, s = xn, gn, sn
                    break
            step *= 0.5
        else:
            return x, steps
        steps += 1
    raise NewtonMaxIterationsError(
        f"Newton centering exceeded {max_steps} steps at t={t:.3g}"
    )


def barrier_solve(sub, x0, *, gap_tol=1e-9, t0=None, lam0=None, mu=20.0,
                  newton_tol=1e-10, max_steps_per_center=200,
                  max_total_steps=4000):
    """Minimize the subproblem by a log-barrier path, returning (x, duals, info).

    ``gap_tol`` bounds m/t in units of the objective scale at ``x0``. Duals
    are reported for the unscaled objective. A previous dual vector ``lam0``
    warm-starts the barrier parameter.
    """
    g0 = sub.constraints(x0)
    if not np.all(np.isfinite(g0)) or np.max(g0) >= 0:
        raise InfeasibleStartError(
            f"barrier start violates constraints (max g = {np.max(g0):.3e})"
        )
    f_scale = max(1.0, abs(sub.f0_value(x0)))
    m = sub.m
    warm = False
    if t0 is None:
        if lam0 is not None:
            # estimate the barrier parameter matching the warm-start duals;
            # if the subproblem moved and Newton starts wall-crawling, fall
            # back to climbing the ladder from the bottom
            gap_est = float(np.dot(np.maximum(lam0, 0.0) / f_scale, -g0))
            t0 = m / max(gap_est, m * gap_tol)
            warm = True
        else:
            t0 = 1.0
    t = float(np.clip(t0, 1.0, m / (m * gap_tol) * 10.0))

    x = x0.copy()
    total = 0
    stages = 0
    if warm and t > 1e4:
        try:
            x, used = _center(sub, x, t, f_scale, newton_tol, 50)
            total += used
            stages += 1
        except NewtonMaxIterationsError:
            x = x0.copy()
            total += 50
            stages = 0
            t = 1e2
    while True:
        if stages > 0 and m / t <= gap_tol:
            break
        x, used = _center(sub, x, t, f_scale, newton_tol,
                          min(max_steps_per_center, max_total_steps - total))
        total += used
        stages += 1
        if m / t <= gap_tol:
            break
        if total >= max_total_steps:
            raise NewtonMaxIterationsError(
                f"barrier used all {max_total_steps} Newton steps"
            )
        t *= mu
    s = -sub.constraints(x)
    lam = f_scale / (t * s)
    return x, lam, BarrierInfo(newton_steps=total, stages=stages,
                               t_final=t, gap=f_scale * m / t)


def kkt_certificate(sub, x):
    """Scaled KKT residual at x with nonnegative-least-squares dual extraction.

    Solves min_{lam >= 0} ||grad f0 + G' lam||^2 + ||diag(g) lam||^2 and
    reports max of: stationarity (inf-norm over max(1, ||grad f0||_inf)),
    complementary slackness (|lam_i g_i| over max(1, |f0|)), and feasibility
    (positive part of g).
    """
    g = sub.constraints(x)
    G = sub.constraint_grads(x)
    fg = sub.f0_grad(x)
    A = np.vstack([G.T, np.diag(g)])
    b = np.concatenate([-fg, np.zeros(sub.m)])
    lam, _ = scipy.optimize.nnls(A, b)
    stat = np.linalg.norm(fg + G.T @ lam, ord=np.inf)
    stat /= max(1.0, np.linalg.norm(fg, ord=np.inf))
    comp = float(np.max(np.abs(lam * g))) / max(1.0, abs(sub.f0_value(x)))
    feas = float(np.max(np.maximum(g, 0.0)))
    return max(stat, comp, feas), lam
