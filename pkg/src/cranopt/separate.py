"""Low-complexity separate beamforming and compression design.

Transmit covariances are optimized for the plain multiple-access channel
(ignoring fronthaul limits): cyclic per-user water-filling for the SIC
receiver, a weighted-MMSE fixed point for the linear receiver. Beamformers
are the leading eigenvectors of those covariances, renormalized to spend the
full power budget. Per-BS quantizers then take the uniform-level form
Q_l = beta_l * Lam_l with beta fit by bisection so each fronthaul budget is
met with (feasible-side) equality.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError
from .hermitian import LN2, eigh, hermitize, logdet2
from .rates import BeamformerSet, QuantCovSet, fronthaul_usage_su, fronthaul_usage_wz

_BISECT_MAX = 400


@dataclass
class MacCovariances:
    K: np.ndarray           # (K, M, M) transmit covariances

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=np.complex128)


def _waterfill(gains, total):
    """Power allocation p_i = max(nu - 1/g_i, 0) with sum p = total."""
    gains = np.asarray(gains, dtype=float)
    alloc = np.zeros_like(gains)
    usable = gains > 1e-15
    if not usable.any() or total <= 0:
        return alloc
    inv = np.sort(1.0 / gains[usable])
    m = inv.size
    while m > 0:
        nu = (total + inv[:m].sum()) / m
        if nu > inv[m - 1]:
            break
        m -= 1
    alloc[usable] = np.maximum(nu - 1.0 / gains[usable], 0.0)
    return alloc


def _project_cov(K, budget):
    """Euclidean projection onto {K >= 0, Tr K <= budget}."""
    w, v = eigh(K)
    w = np.maximum(w, 0.0)
    if w.sum() > budget:
        # uniform shift, same structure as simplex projection
        lo, hi = 0.0, float(w.max())
        for _ in range(100):
            tau = 0.5 * (lo + hi)
            if np.maximum(w - tau, 0.0).sum() > budget:
                lo = tau
            else:
                hi = tau
        w = np.maximum(w - hi, 0.0)
    return hermitize((v * w) @ v.conj().T)


def _sic_terms(ch, weights):
    """Abel decomposition of the weighted SIC sum rate.

    With users decoded in ascending-weight order o(1..K), the objective is
    sum_p coeff_p * ln|sum_{i decoded at or after p} H_i K_i H_i' + Lam| plus
    a constant, with coeff_p >= 0. Returns (decode order, coeffs).
    """
    order = tuple(int(k) for k in np.argsort(weights, kind="stable"))
    w_sorted = np.asarray(weights, dtype=float)[list(order)]
    coeffs = np.concatenate([[w_sorted[0]], np.diff(w_sorted)])
    return order, coeffs


def mac_objective(ch, covs, weights, receiver):
    """Weighted sum rate of the fronthaul-free multiple-access channel (bits)."""
    covs = covs.K if isinstance(covs, MacCovariances) else np.asarray(covs)
    Hs = ch.stacked()
    lam = ch.noise_blockdiag()
    outer = np.einsum("knm,kmp,kqp->knq", Hs, covs, Hs.conj())
    weights = np.asarray(weights, dtype=float)
    K = ch.K
    if receiver == "sic":
        order, coeffs = _sic_terms(ch, weights)
        total = -float(weights.max()) * logdet2(lam) if K else 0.0
        suffix = lam.copy()
        # walk decode order backwards so suffix sums accumulate
        vals = {}
        for p in range(K - 1, -1, -1):
            suffix = suffix + outer[order[p]]
            vals[p] = logdet2(hermitize(suffix))
        return total + float(sum(coeffs[p] * vals[p] for p in range(K)))
    rates = np.zeros(K)
    total_cov = lam + outer.sum(axis=0)
    for k in range(K):
        jk = hermitize(total_cov - outer[k])
        rates[k] = logdet2(hermitize(total_cov)) - logdet2(jk)
    return float(weights @ rates)


def _pg_cov_step(Hj, terms, budget, K0):
    """Maximize sum_m c_m ln|A_m + H K H'| by projected gradient ascent."""
    def value(K):
        return sum(c * logdet2(hermitize(A + Hj @ K @ Hj.conj().T)) * LN2
                   for c, A in terms)

    K = K0.copy()
    f = value(K)
    step = 1.0
    for _ in range(400):
        grad = np.zeros((Hj.shape[1],) * 2, dtype=np.complex128)
        for c, A in terms:
            inv = np.linalg.inv(hermitize(A + Hj @ K @ Hj.conj().T))
            grad += c * (Hj.conj().T @ inv @ Hj)
        grad = hermitize(grad)
        improved = False
        while step > 1e-13:
            Kn = _project_cov(K + step * grad, budget)
            fn = value(Kn)
            if fn > f + 1e-14:
                if fn - f < 1e-10 * max(1.0, abs(f)):
                    return Kn
                K, f = Kn, fn
                step = min(step * 2.0, 1e6)
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    return K


def mac_covariances(ch, power_mw, weights, receiver, *, rel_tol=1e-7,
                    max_sweeps=500):
    """Transmit covariances for the fronthaul-free multiple-access channel.

    SIC: cyclic per-user updates; each step is an exact water-filling against
    the whitened effective channel when a single log-det term is active
    (equal weights), a projected-gradient ascent otherwise. Linear MMSE:
    weighted-MMSE fixed point without quantization noise.
    """
    power_mw = np.asarray(power_mw, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if receiver == "mmse":
        return _mac_wmmse(ch, power_mw, weights, rel_tol, max_sweeps)

    Hs = ch.stacked()
    lam = ch.noise_blockdiag()
    covs = np.zeros((ch.K, ch.M, ch.M), dtype=np.complex128)
    order, coeffs = _sic_terms(ch, weights)
    pos = {k: p for p, k in enumerate(order)}
    obj = mac_objective(ch, covs, weights, receiver)
    for sweep in range(max_sweeps):
        for j in range(ch.K):
            terms = []
            for p in range(pos[j] + 1):
                if coeffs[p] <= 0:
                    continue
                A = lam.copy()
                for i in range(ch.K):
                    if i != j and pos[i] >= p:
                        A += Hs[i] @ covs[i] @ Hs[i].conj().T
                terms.append((float(coeffs[p]), A))
            if not terms:
                covs[j] = 0.0
                continue
            if len(terms) == 1:
                _, A = terms[0]
                geff = hermitize(
                    Hs[j].conj().T @ np.linalg.solve(A, Hs[j])
                )
                gvals, gvecs = eigh(geff)
                alloc = _waterfill(gvals, float(power_mw[j]))
                covs[j] = hermitize((gvecs * alloc) @ gvecs.conj().T)
            else:
                covs[j] = _pg_cov_step(Hs[j], terms, float(power_mw[j]), covs[j])
        new_obj = mac_objective(ch, covs, weights, receiver)
        if new_obj - obj < rel_tol * max(1.0, abs(new_obj)):
            return MacCovariances(K=covs)
        obj = new_obj
    raise ConvergenceError(
        f"covariance sweeps did not converge in {max_sweeps} iterations"
    )


def _mac_wmmse(ch, power_mw, weights, rel_tol, max_sweeps):
    """Weighted-MMSE fixed point on the quantization-free channel."""
    Hs = ch.stacked()
    lam = ch.noise_blockdiag()
    V = np.stack([
        math.sqrt(max(power_mw[k], 0.0) / ch.M) * np.eye(ch.M, dtype=np.complex128)
        for k in range(ch.K)
    ])  # full-rank start at full power; rank is trimmed by the caller

    def wsr(v):
        sig = np.einsum("knm,kmd->knd", Hs, v)
        outer = np.einsum("knd,kjd->knj", sig, sig.conj())
        total = lam + outer.sum(axis=0)
        val = 0.0
        for k in range(ch.K):
            jk = hermitize(total - outer[k])
            val += weights[k] * (logdet2(hermitize(total)) - logdet2(jk))
        return val

    obj = wsr(V)
    for sweep in range(max_sweeps):
        sig = np.einsum("knm,kmd->knd", Hs, V)
        outer = np.einsum("knd,kjd->knj", sig, sig.conj())
        total = lam + outer.sum(axis=0)
        U = np.stack([np.linalg.solve(total, sig[k]) for k in range(ch.K)])
        W = np.stack([
            hermitize(np.linalg.inv(hermitize(
                np.eye(V.shape[2]) - sig[k].conj().T @ U[k]
            )))
            for k in range(ch.K)
        ])
        G = np.einsum("knd,kde,kme->knm", U, W, U.conj()) * weights[:, None, None]
        Gtot = G.sum(axis=0)
        for k in range(ch.K):
            B = hermitize(Hs[k].conj().T @ Gtot @ Hs[k])
            b = weights[k] * (Hs[k].conj().T @ U[k] @ W[k])
            V[k] = _power_capped_solve(B, b, float(power_mw[k]))
        new_obj = wsr(V)
        if abs(new_obj - obj) < rel_tol * max(1.0, abs(new_obj)):
            break
        obj = new_obj
    else:
        raise ConvergenceError(
            f"weighted-MMSE fixed point did not converge in {max_sweeps} sweeps"
        )
    covs = np.einsum("kmd,knd->kmn", V, V.conj())
    return MacCovariances(K=covs)


def _power_capped_solve(B, b, budget):
    """argmin_V tr(V'BV) - 2Re tr(b'V) subject to ||V||_F^2 <= budget."""
    if not np.any(b):
        return np.zeros_like(b)
    w, v = eigh(B)
    c = v.conj().T @ b
    w = np.maximum(w, 0.0)

    def power(mu):
        denom = (w[:, None] + mu) ** 2
        return float(np.sum(np.abs(c) ** 2 / denom))

    if w.min() > 1e-12 and power(0.0) <= budget:
        return v @ (c / w[:, None])
    lo, hi = 0.0, 1.0
    while power(hi) > budget:
        hi *= 2.0
        if hi > 1e18:
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if power(mid) > budget:
            lo = mid
        else:
            hi = mid
    return v @ (c / (w[:, None] + hi))


def beamformers_from_covariance(covs, power_mw, d):
    """Rank-d beamformers from covariances, renormalized to full power.

    Column i of user j is sqrt(P_j g_i / G) psi_i with (g, psi) the leading
    eigenpairs and G the sum of the d largest eigenvalues, so the full budget
    is always spent. Users whose covariance has no positive eigenvalue stay
    silent (zero beamformer).
    """
    covs = covs.K if isinstance(covs, MacCovariances) else np.asarray(covs)
    power_mw = np.asarray(power_mw, dtype=float)
    K, M = covs.shape[0], covs.shape[1]
    if d > M:
        raise ValueError(f"d={d} exceeds {M} transmit antennas")
    V = np.zeros((K, M, d), dtype=np.complex128)
    for j in range(K):
        w, v = eigh(covs[j])
        w = np.maximum(w[:d], 0.0)
        # eigenvalues this far below the power scale are numerically silent
        # directions; subnormal ratios would otherwise wreck the power split
        w[w < 1e-100 + 1e-14 * power_mw[j]] = 0.0
        gamma = float(w.sum())
        if gamma <= 0.0:
            continue
        for i in range(d):
            V[j, :, i] = math.sqrt(power_mw[j] * w[i] / gamma) * v[:, i]
        used = float(np.sum(np.abs(V[j]) ** 2))
        if used > power_mw[j]:
            V[j] *= math.sqrt(power_mw[j] / used)
    return BeamformerSet(V=V, power_mw=power_mw)


def _bisect_decreasing(usage, target, rel_tol):
    """Find beta with usage(beta) = target for strictly decreasing usage.

    Brackets by doubling from 1 until the usage falls below the target, then
    bisects [0, beta]; returns the feasible endpoint, so the achieved usage
    never exceeds the target.
    """
    hi = 1.0
    for _ in range(_BISECT_MAX):
        if usage(hi) <= target:
            break
        hi *= 2.0
    else:
        raise ConvergenceError("bisection bracket did not close")
    lo = 0.0
    for _ in range(_BISECT_MAX):
        if target - usage(hi) <= rel_tol * max(target, 1e-300):
            break
        mid = 0.5 * (lo + hi)
        if usage(mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


def bisect_beta_su(ch, V, ell, c_bits, rel_tol=1e-6):
    """Quantizer level for BS ell: solve usage(beta * Lam) = C by bisection."""

    def usage(beta):
        q = QuantCovSet(_beta_quant(ch, np.full(ch.L, beta)))
        return fronthaul_usage_su(ch, V, q, ell)

    return _bisect_decreasing(usage, float(c_bits), rel_tol)


def bisect_beta_wz(ch, V, order, c_bits, rel_tol=1e-6):
    """Successive quantizer levels under Wyner-Ziv coding.

    Walks the decompression order; step j fixes beta at BS pi(j) so the
    cumulative usage of the first j BSs meets the cumulative budget, with
    earlier levels frozen.
    """
    c_bits = np.asarray(c_bits, dtype=float)
    betas = np.ones(ch.L)

    for j in range(len(order.pi)):
        target = float(sum(c_bits[order.pi[p]] for p in range(j + 1)))

        def usage(beta):
            trial = betas.copy()
            trial[order.pi[j]] = beta
            q = QuantCovSet(_beta_quant(ch, trial))
            return sum(fronthaul_usage_wz(ch, V, q, order, p)
                       for p in range(j + 1))

        betas[order.pi[j]] = _bisect_decreasing(usage, target, rel_tol)
    return betas


def _beta_quant(ch, betas):
    return np.stack([betas[ell] * ch.Lam[ell] for ell in range(ch.L)])


def separate_design(ch, scheme, power_mw, weights=None, streams=1, order=None):
    """Beamformers for the plain MAC plus uniform-level quantizers.

    Composes the covariance optimization, the eigenbeamformer extraction, and
    the per-BS (or successive Wyner-Ziv) bisection. The returned pair meets
    every fronthaul budget from the feasible side within the bisection
    tolerance.
    """
    weights = scheme.weights if weights is None else np.asarray(weights, float)
    covs = mac_covariances(ch, power_mw, weights, scheme.receiver)
    V = beamformers_from_covariance(covs, power_mw, streams)
    if scheme.compression == "su":
        betas = np.array([
            bisect_beta_su(ch, V, ell, scheme.fronthaul_bits[ell])
            for ell in range(ch.L)
        ])
    else:
        if order is None:
            from .sca import heuristic_decompression_order
            order = heuristic_decompression_order(
                ch, scheme.fronthaul_bits, power_mw
            )
        betas = bisect_beta_wz(ch, V, order, scheme.fronthaul_bits)
    return V, QuantCovSet(Q=_beta_quant(ch, betas))
