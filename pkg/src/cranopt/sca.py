"""Joint beamforming and compression optimization by successive convex steps.

The outer loop alternates closed-form auxiliary updates (linearization
covariances, receive filters, error weights, proximal centers) with an exact
convex solve of the inner subproblem. The linearized fronthaul constraints
upper-bound the true ones, so every iterate stays feasible for the original
problem, and the weighted sum rate is nondecreasing along the trace. The
Wyner-Ziv variant fixes a heuristic decompression order up front and replaces
the per-BS constraints with the nested prefix constraints along that order.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import CranoptError, InfeasibleStartError, NonMonotoneProgressError
from .hermitian import LN2, hermitize, logdet2
from .inner import FronthaulConstraint, InnerSubproblem, barrier_solve, kkt_certificate
from .network import ChannelRealization
from .rates import (
    BeamformerSet,
    DecompressionOrder,
    QuantCovSet,
    SchemeConfig,
    fronthaul_violation,
    interference_sets,
    weighted_sum_rate,
)


@dataclass
class AuxState:
    sigma: list                 # linearization covariances (per BS or per prefix)
    U: np.ndarray               # (K, L*N, d) receive filters
    W: np.ndarray               # (K, d, d) error weights
    theta: np.ndarray           # (L, N, N) proximal centers (current Q)


@dataclass
class SolverOptions:
    rel_tol: float = 1e-5
    max_iter: int = 500
    kkt_tol: float = 1e-4
    rho: float | None = None          # default 1e-5 * max user weight
    gap_tol: float = 1e-9
    mu: float = 20.0
    order: DecompressionOrder | None = None
    trace: object = None              # callable fed one line per iteration
    max_newton: int = 4000
    extend_steps: int = 14            # overrelaxation doublings per iteration


@dataclass
class OptimizerState:
    sigma: list
    U: np.ndarray
    W: np.ndarray
    theta: np.ndarray
    rho: float
    iteration: int
    objective_trace: list = field(default_factory=list)   # bits, per iteration
    converged: bool = False
    kkt_residual: float = math.nan
    fronthaul_gap_bits: float = math.nan
    order: DecompressionOrder | None = None
    duals: np.ndarray | None = None


def heuristic_decompression_order(ch, fronthaul_bits, power_mw, active=None):
    """Decompression order: descending C_l - log2|H_l K H_l' + Lam_l|.

    K assumes every user emits independent full-power signals, so BSs with
    large fronthaul or weak received signal are recovered first and serve as
    side information for the rest. Ties break by BS index ascending.
    """
    idx = list(range(ch.L)) if active is None else list(active)
    power_mw = np.asarray(power_mw, dtype=float)
    metrics = []
    for ell in idx:
        cov = ch.Lam[ell].copy()
        for k in range(ch.K):
            cov += power_mw[k] * (ch.H[ell, k] @ ch.H[ell, k].conj().T)
        metrics.append(float(fronthaul_bits[ell]) - logdet2(cov))
    order = sorted(range(len(idx)), key=lambda i: (-metrics[i], idx[i]))
    return DecompressionOrder(pi=tuple(idx[i] for i in order))


def _receivers(ch, V, Q, interferers):
    """Error-minimizing receive filters and weights per user."""
    Hs = ch.stacked()
    sig = np.einsum("knm,kmd->knd", Hs, V)
    base = ch.noise_blockdiag()
    for ell in range(ch.L):
        base[ell * ch.N:(ell + 1) * ch.N, ell * ch.N:(ell + 1) * ch.N] += Q[ell]
    outer = np.einsum("knd,kjd->knj", sig, sig.conj())
    d = V.shape[2]
    U = np.zeros((ch.K, Hs.shape[1], d), dtype=np.complex128)
    W = np.zeros((ch.K, d, d), dtype=np.complex128)
    for k in range(ch.K):
        cov = base.copy()
        if interferers[k]:
            cov = cov + outer[interferers[k]].sum(axis=0)
        cov = cov + outer[k]
        U[k] = np.linalg.solve(cov, sig[k])
        e = hermitize(np.eye(d) - sig[k].conj().T @ U[k])
        W[k] = hermitize(np.linalg.inv(e))
    return U, W


def update_aux(ch, V, Q, scheme, order=None):
    """Closed-form auxiliary update at the current (V, Q).

    Returns linearization covariances (per BS under single-user compression,
    per order prefix under Wyner-Ziv), receive filters, error weights, and
    proximal centers Theta = Q. The linearized fronthaul expression touches
    the true one exactly at this point.
    """
    Varr = V.V if isinstance(V, BeamformerSet) else np.asarray(V)
    Qarr = Q.Q if isinstance(Q, QuantCovSet) else np.asarray(Q)
    sets = interference_sets(ch.K, scheme)
    U, W = _receivers(ch, Varr, Qarr, sets)

    def received(members):
        rows = np.concatenate([ch.H[m] for m in members], axis=1)
        sig = np.einsum("knm,kmd->knd", rows, Varr)
        cov = np.einsum("knd,kjd->nj", sig, sig.conj())
        n = ch.N
        for p, m in enumerate(members):
            cov[p * n:(p + 1) * n, p * n:(p + 1) * n] += ch.Lam[m] + Qarr[m]
        return hermitize(cov)

    if scheme.compression == "su":
        sigma = [received([ell]) for ell in range(ch.L)]
    else:
        if order is None:
            raise ValueError("Wyner-Ziv auxiliary update needs an order")
        sigma = [received(list(order.prefix(p))) for p in range(len(order.pi))]
    return AuxState(sigma=sigma, U=U, W=W, theta=Qarr.copy())


def build_subproblem(ch, aux, scheme, rho, power_mw, order=None, build_point=None):
    """Inner convex subproblem (natural-log units) at the given aux state."""
    Hs = ch.stacked()
    n = ch.N
    cons = []
    c_nats = scheme.fronthaul_bits * LN2

    def constraint_for(members, sigma):
        xi = np.linalg.inv(sigma)
        xi = 0.5 * (xi + xi.conj().T)
        rows = np.concatenate([ch.H[m] for m in members], axis=1)
        fker = np.einsum("knm,np,kpq->kmq", rows.conj(), xi, rows)
        fker = 0.5 * (fker + np.transpose(fker, (0, 2, 1)).conj())
        phi, const = {}, 0.0
        for p, m in enumerate(members):
            blk = xi[p * n:(p + 1) * n, p * n:(p + 1) * n]
            phi[m] = blk
            const += float(np.einsum("ab,ba->", blk, ch.Lam[m]).real)
            const -= float(c_nats[m]) + n
        sign, ld = np.linalg.slogdet(sigma)
        const += float(ld)
        return FronthaulConstraint(members=tuple(members), fker=fker,
                                   phi_lin=phi, const=const)

    if scheme.compression == "su":
        for ell in range(ch.L):
            cons.append(constraint_for([ell], aux.sigma[ell]))
    else:
        if order is None:
            raise ValueError("Wyner-Ziv subproblem needs an order")
        for p in range(len(order.pi)):
            cons.append(constraint_for(list(order.prefix(p)), aux.sigma[p]))

    sub = InnerSubproblem(
        Hs=Hs, Lam=ch.Lam, alpha=scheme.weights, power=power_mw,
        U=aux.U, W=aux.W, rho=rho, theta=aux.theta,
        fronthaul=cons, interferers=interference_sets(ch.K, scheme),
    )
    sub.x_build = None if build_point is None else sub.pack(*build_point)
    return sub


def solve_inner(sub, tol=1e-6, start=None, **kwargs):
    """Solve the convex subproblem to the requested KKT tolerance.

    ``start`` is a strictly feasible (V, Q) pair; defaults to the point the
    subproblem was built at. Returns (V, Q, duals, kkt_residual).
    """
    if start is not None:
        x0 = sub.pack(*start)
    elif getattr(sub, "x_build", None) is not None:
        x0 = sub.x_build
    else:
        raise InfeasibleStartError("no feasible starting point supplied")
    x, lam, info = barrier_solve(sub, x0, gap_tol=min(1e-9, tol * 1e-4), **kwargs)
    res, lam_ls = kkt_certificate(sub, x)
    V, Q = sub.unpack(x)
    return V, Q, lam_ls, res


def _normalized(ch):
    """Rescale so the noise floor is O(1); rates are invariant under this."""
    scale = float(np.mean(np.diagonal(ch.Lam, axis1=1, axis2=2).real))
    scale = max(scale, np.finfo(float).tiny)
    chn = ChannelRealization(
        L=ch.L, K=ch.K, N=ch.N, M=ch.M,
        H=ch.H / math.sqrt(scale),
        Lam=ch.Lam / scale,
        bandwidth_hz=ch.bandwidth_hz,
    )
    return chn, scale


def _spent_power(V):
    return np.einsum("kmd,kmd->k", V, V.conj()).real + 1e-9


def _nudge_interior(ch, scheme, V, Q, order):
    """Pull a feasible boundary point strictly inside the constraint set.

    Shrinking V and inflating every Q both strictly reduce fronthaul usage,
    so a point meeting the constraints with equality moves a hair inside.
    """
    V = V * (1.0 - 1e-7)
    c = _restore_q_scale(ch, scheme, order, _spent_power(V), V, Q,
                         eps_bits=1e-7)
    if c is None:
        raise InfeasibleStartError("could not find a strictly feasible start")
    return V, c * Q


def _restore_q_scale(ch, scheme, order, power_mw, Ve, Qe, eps_bits=1e-9):
    """Smallest uniform Q inflation putting the point strictly inside.

    With Q scaled by c, every fronthaul usage is sum_i log2(1 + gamma_i / c)
    where gamma are the generalized eigenvalues of the received covariance
    against Q, so each scalar threshold is solved on the eigenvalues directly.
    Returns None when the point cannot be restored (Q outside the PD cone).
    """
    pairs = []
    try:
        if scheme.compression == "su":
            for ell in range(ch.L):
                sig = np.einsum("knm,kmd->knd", ch.H[ell], Ve)
                R = ch.Lam[ell] + np.einsum("knd,kjd->nj", sig, sig.conj())
                gam = scipy.linalg.eigh(hermitize(R), hermitize(Qe[ell]),
                                        eigvals_only=True)
                pairs.append((np.maximum(gam, 0.0),
                              float(scheme.fronthaul_bits[ell])))
        else:
            budget = 0.0
            n = ch.N
            for p in range(len(order.pi)):
                members = list(order.prefix(p))
                rows = np.concatenate([ch.H[m] for m in members], axis=1)
                sig = np.einsum("knm,kmd->knd", rows, Ve)
                R = np.einsum("knd,kjd->nj", sig, sig.conj())
                Qt = np.zeros_like(R)
                for qpos, m in enumerate(members):
                    sl = slice(qpos * n, (qpos + 1) * n)
                    R[sl, sl] += ch.Lam[m]
                    Qt[sl, sl] = Qe[m]
                budget += float(scheme.fronthaul_bits[members[-1]])
                gam = scipy.linalg.eigh(hermitize(R), hermitize(Qt),
                                        eigvals_only=True)
                pairs.append((np.maximum(gam, 0.0), budget))
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError, ValueError):
        return None

    c = 1.0
    for gam, budget in pairs:
        target = budget - eps_bits

        def usage(cc):
            return float(np.sum(np.log2(1.0 + gam / cc)))

        if usage(c) <= target:
            continue
        if target <= 0:
            return None
        hi = c
        for _ in range(400):
            hi *= 2.0
            if usage(hi) <= target:
                break
        else:
            return None
        lo = hi / 2.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if usage(mid) <= target:
                hi = mid
            else:
                lo = mid
        c = max(c, hi)
    return c


def _slerp_v(Vp, Vc, theta, power_mw):
    """Extend beamformers by rotation: spherical interpolation past Vc.

    Separates each user's move into a direction rotation (continued along the
    great circle through the phase-aligned previous and current vectors) and a
    magnitude ramp (continued geometrically, capped at the power budget).
    Captures the slowly-rotating beamformer drift that linear rays cannot.
    """
    out = np.empty_like(Vc)
    for k in range(Vc.shape[0]):
        a, b = Vp[k].ravel(), Vc[k].ravel()
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na < 1e-12 or nb < 1e-12:
            out[k] = Vc[k] + (theta - 1.0) * (Vc[k] - Vp[k])
        else:
            ip = np.vdot(a, b)
            a_al = a * (ip / max(abs(ip), 1e-300))
            cosang = float(np.clip(np.vdot(a_al, b).real / (na * nb), -1.0, 1.0))
            ang = math.acos(cosang)
            u = a_al / na
            w = b / nb - cosang * u
            nw = np.linalg.norm(w)
            mag = min(nb * (nb / na) ** (theta - 1.0),
                      math.sqrt(power_mw[k] * (1.0 - 1e-9)))
            if nw < 1e-14:
                dirv = b / nb
            else:
                dirv = (math.cos(theta * ang) * u
                        + math.sin(theta * ang) * (w / nw))
            out[k] = (mag * dirv).reshape(Vc[k].shape)
        used = float(np.sum(np.abs(out[k]) ** 2))
        if used > power_mw[k]:
            out[k] *= math.sqrt(power_mw[k] * (1.0 - 1e-9) / used)
    return out


def _geodesic_q(Qp, Qc, theta):
    """Extend Q along the positive-definite-cone geodesic through Qp, Qc.

    Returns Qp^{1/2} (Qp^{-1/2} Qc Qp^{-1/2})^theta Qp^{1/2} per BS; theta=1
    recovers Qc, larger theta continues multiplicative eigenvalue drifts
    (the growth mode of quantization noise in uninformative directions)
    while staying inside the PD cone by construction.
    """
    out = np.empty_like(Qc)
    for ell in range(Qc.shape[0]):
        w, v = np.linalg.eigh(Qp[ell])
        w = np.maximum(w, 1e-300)
        isq = (v / np.sqrt(w)) @ v.conj().T
        sq = (v * np.sqrt(w)) @ v.conj().T
        mw, mv = np.linalg.eigh(hermitize(isq @ Qc[ell] @ isq))
        mw = np.maximum(mw, 1e-300) ** theta
        out[ell] = hermitize(sq @ ((mv * mw) @ mv.conj().T) @ sq)
    return out


def _extend_step(ch, scheme, order, power_mw, prev, cur, cur_obj, objective,
                 max_doublings):
    """Safeguarded overrelaxation along the last accepted move.

    The convex steps contract slowly along monotone drift modes (users ramping
    on or off, quantization noise growing without bound in uninformative
    directions), and the iterates ride the curved fronthaul boundary, so a raw
    extrapolation exits the feasible set. Doubled steps are tried along both
    the linear ray and the PD-cone geodesic in Q, pulled back inside by the
    smallest uniform inflation of the quantization covariances, and accepted
    only if the true weighted sum rate still improves. Rejected extensions
    fall back to the plain step, so monotonicity and feasibility are preserved
    exactly.
    """
    (Vp, Qp), (Vc, Qc) = prev, cur
    best_v, best_q, best_obj = Vc, Qc, cur_obj
    dv = Vc - Vp
    dq = Qc - Qp
    for mode in ("linear", "geodesic", "slerp"):
        theta = 1.0
        rejects = 0
        for _ in range(max_doublings):
            theta *= 2.0
            if mode == "slerp":
                Ve = _slerp_v(Vp, Vc, theta, power_mw)
                Qe = _geodesic_q(Qp, Qc, theta)
            else:
                Ve = Vc + (theta - 1.0) * dv
                spent = np.einsum("kmd,kmd->k", Ve, Ve.conj()).real
                over = spent > power_mw
                if np.any(over):
                    shrink = np.sqrt(np.where(
                        over,
                        power_mw * (1 - 1e-9) / np.maximum(spent, 1e-300),
                        1.0,
                    ))
                    Ve = Ve * shrink[:, None, None]
                if mode == "linear":
                    Qe = Qc + (theta - 1.0) * dq
                else:
                    Qe = _geodesic_q(Qp, Qc, theta)
            c = _restore_q_scale(ch, scheme, order, power_mw, Ve, Qe)
            if c is None:
                break
            obj = objective(Ve, c * Qe)
            if not obj > best_obj + 1e-12:
                rejects += 1
                if rejects >= 2:
                    break
                continue
            rejects = 0
            best_v, best_q, best_obj = Ve, c * Qe, obj
    return best_v, best_q, best_obj


def wmmse_sca(ch, scheme, init=None, opts=None, power_mw=None):
    """Maximize the weighted sum rate over beamformers and quantizers.

    Runs the successive convex approximation loop for the configured
    compression scheme and receiver. ``init`` is a feasible
    (BeamformerSet, QuantCovSet) pair; when omitted, the low-complexity
    separate design supplies one. Returns (BeamformerSet, QuantCovSet,
    OptimizerState); the state carries the per-iteration objective trace in
    bits, the stationarity residual, and the auxiliary variables at exit.
    """
    opts = opts or SolverOptions()
    if power_mw is None:
        if init is None:
            raise ValueError("power_mw is required when init is omitted")
        power_mw = init[0].power_mw
    power_mw = np.asarray(power_mw, dtype=float)

    active = [ell for ell in range(ch.L) if scheme.fronthaul_bits[ell] > 0]
    if len(active) < ch.L:
        ch_act = ch.restrict(bs_subset=active)
        scheme_act = SchemeConfig(
            receiver=scheme.receiver, compression=scheme.compression,
            weights=scheme.weights,
            fronthaul_bits=scheme.fronthaul_bits[active],
            decode_order=scheme.decode_order,
        )
    else:
        ch_act, scheme_act = ch, scheme

    chn, noise_scale = _normalized(ch_act)

    order = opts.order
    if scheme.compression == "wz" and order is None:
        order = heuristic_decompression_order(
            chn, scheme_act.fronthaul_bits, power_mw
        )

    if init is None:
        from .separate import separate_design
        V0, Q0 = separate_design(chn, scheme_act, power_mw, order=order)
        Varr, Qarr = V0.V.copy(), Q0.Q.copy()
    else:
        Varr = init[0].V.copy()
        Qarr = init[1].Q.copy() / noise_scale
        gap0 = fronthaul_violation(chn, BeamformerSet(Varr, power_mw),
                                   QuantCovSet(Qarr), scheme_act, order)
        if gap0 > 1e-9:
            raise InfeasibleStartError(
                f"initial point violates fronthaul constraints by {gap0:.3e} bits"
            )

    Varr, Qarr = _nudge_interior(chn, scheme_act, Varr, Qarr, order)

    rho = opts.rho if opts.rho is not None else 1e-5 * float(np.max(scheme.weights))
    rho = max(rho, 1e-10)

    def objective(v, q):
        return weighted_sum_rate(chn, BeamformerSet(v, power_mw),
                                 QuantCovSet(q), scheme_act)

    trace = [objective(Varr, Qarr)]
    lam_prev = None
    kkt = math.nan
    duals = None
    converged = False
    aux = None
    stalls = 0
    it = 0
    for it in range(1, opts.max_iter + 1):
        aux = update_aux(chn, Varr, Qarr, scheme_act, order)
        sub = build_subproblem(chn, aux, scheme_act, rho, power_mw, order,
                               build_point=(Varr, Qarr))
        x, lam, info = barrier_solve(
            sub, sub.x_build, gap_tol=opts.gap_tol, lam0=lam_prev,
            mu=opts.mu, max_total_steps=opts.max_newton,
        )
        if sub.f0_value(x) > sub.f0_value(sub.x_build) and lam_prev is not None:
            # dual-based warm start underresolved the subproblem; retry cold
            x, lam, info = barrier_solve(
                sub, sub.x_build, gap_tol=opts.gap_tol, lam0=None,
                mu=opts.mu, max_total_steps=opts.max_newton,
            )
        if sub.f0_value(x) > sub.f0_value(sub.x_build):
            x = sub.x_build          # keep the warm start; solver gap slack
            stalls += 1
        else:
            lam_prev = lam
            stalls = 0
        Vprev, Qprev = Varr, Qarr
        Varr, Qarr = sub.unpack(x)

        obj = objective(Varr, Qarr)
        if opts.extend_steps > 0 and stalls == 0:
            Varr, Qarr, obj = _extend_step(
                chn, scheme_act, order, power_mw, (Vprev, Qprev),
                (Varr, Qarr), obj, objective, opts.extend_steps,
            )
        gap_bits = fronthaul_violation(chn, BeamformerSet(Varr, power_mw),
                                       QuantCovSet(Qarr), scheme_act, order)
        if gap_bits > 1e-6:
            raise CranoptError(
                f"iterate left the true feasible set ({gap_bits:.3e} bits)"
            )
        if obj < trace[-1] - 1e-8:
            raise NonMonotoneProgressError(
                f"objective dropped from {trace[-1]:.12f} to {obj:.12f} bits"
            )
        rel = abs(obj - trace[-1]) / max(1.0, abs(obj))
        trace.append(obj)

        if rel < opts.rel_tol:
            aux = update_aux(chn, Varr, Qarr, scheme_act, order)
            sub_c = build_subproblem(chn, aux, scheme_act, rho, power_mw, order,
                                     build_point=(Varr, Qarr))
            kkt, duals = kkt_certificate(sub_c, sub_c.x_build)
            if opts.trace is not None:
                opts.trace(f"{it} {obj:.10f} {gap_bits:.3e} {kkt:.3e}")
            if kkt <= opts.kkt_tol or stalls >= 3:
                converged = kkt <= opts.kkt_tol
                break
        elif opts.trace is not None:
            opts.trace(f"{it} {obj:.10f} {gap_bits:.3e} nan")

    gap_bits = fronthaul_violation(chn, BeamformerSet(Varr, power_mw),
                                   QuantCovSet(Qarr), scheme_act, order)

    Qfull = np.stack([np.eye(ch.N, dtype=np.complex128)] * ch.L)
    for pos, ell in enumerate(active):
        Qfull[ell] = Qarr[pos] * noise_scale
    inactive = frozenset(range(ch.L)) - frozenset(active)

    state = OptimizerState(
        sigma=aux.sigma if aux else [], U=aux.U if aux else None,
        W=aux.W if aux else None, theta=aux.theta if aux else None,
        rho=rho, iteration=it, objective_trace=trace, converged=converged,
        kkt_residual=kkt, fronthaul_gap_bits=gap_bits, order=order,
        duals=duals,
    )
    return (BeamformerSet(Varr, power_mw),
            QuantCovSet(Qfull, inactive=inactive), state)
