"""User rates and fronthaul usage for any beamformer/quantizer pair.

Rates follow the virtual multiple-access-channel model: every BS adds
Gaussian quantization noise Q_l to its received signal and the central
processor decodes user messages with either a linear MMSE receiver (all other
users interfere) or successive interference cancellation (only later-decoded
users interfere; decode order is ascending user weight, ties by index).
All public rates and usages are in bits per complex symbol.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DimensionMismatchError, SingularMatrixError
from .hermitian import cholesky_psd, hermitize, logdet2


@dataclass
class BeamformerSet:
    V: np.ndarray           # (K, M, d) transmit beamformers
    power_mw: np.ndarray    # (K,) per-user budgets

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=np.complex128)
        self.power_mw = np.asarray(self.power_mw, dtype=float)
        used = np.einsum("kmd,kmd->k", self.V, self.V.conj()).real
        if np.any(used > self.power_mw + 1e-9):
            worst = int(np.argmax(used - self.power_mw))
            raise ValueError(
                f"beamformer power {used[worst]:.6g} exceeds budget "
                f"{self.power_mw[worst]:.6g} for user {worst}"
            )

    @property
    def n_users(self):
        return self.V.shape[0]


@dataclass
class QuantCovSet:
    Q: np.ndarray                    # (L, N, N); entries for inactive BSs ignored
    inactive: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=np.complex128)
        self.inactive = frozenset(self.inactive)

    def active(self, L=None):
        n = self.Q.shape[0] if L is None else L
        return [ell for ell in range(n) if ell not in self.inactive]


@dataclass
class SchemeConfig:
    receiver: str                    # "mmse" | "sic"
    compression: str                 # "su" | "wz"
    weights: np.ndarray              # (K,) nonnegative priorities
    fronthaul_bits: np.ndarray       # (L,) capacity per BS, bits/symbol
    decode_order: tuple | None = None   # optional SIC order override

    def __post_init__(self):
        if self.receiver not in ("mmse", "sic"):
            raise ValueError(f"receiver must be 'mmse' or 'sic', got {self.receiver!r}")
        if self.compression not in ("su", "wz"):
            raise ValueError(f"compression must be 'su' or 'wz', got {self.compression!r}")
        self.weights = np.asarray(self.weights, dtype=float)
        self.fronthaul_bits = np.asarray(self.fronthaul_bits, dtype=float)
        if np.any(self.weights < 0):
            raise ValueError("user weights must be nonnegative")

    def sic_order(self):
        """Decode order: ascending weight, ties broken by user index."""
        if self.decode_order is not None:
            return tuple(self.decode_order)
        return tuple(int(k) for k in np.argsort(self.weights, kind="stable"))


@dataclass
class DecompressionOrder:
    pi: tuple                        # permutation of the active BS indices

    def __post_init__(self):
        self.pi = tuple(int(p) for p in self.pi)
        if len(set(self.pi)) != len(self.pi):
            raise ValueError("decompression order must be a permutation")

    def prefix(self, pos):
        """BS indices decompressed up to and including 0-based ``pos``."""
        return self.pi[:pos + 1]


def interference_sets(n_users, scheme):
    """Per-user interferer sets under the configured receiver."""
    if scheme.receiver == "mmse":
        return [[j for j in range(n_users) if j != k] for k in range(n_users)]
    order = scheme.sic_order()
    pos = {k: p for p, k in enumerate(order)}
    return [[j for j in range(n_users) if pos[j] > pos[k]] for k in range(n_users)]


def _signals(ch, V, bs_subset):
    """Stacked per-user signal matrices H_{S,k} V_k, shape (K, |S|N, d)."""
    Hs = ch.stacked(bs_subset)
    if Hs.shape[2] != V.V.shape[1]:
        raise DimensionMismatchError(
            f"channel has M={Hs.shape[2]} but beamformers have M={V.V.shape[1]}"
        )
    return np.einsum("knm,kmd->knd", Hs, V.V)


def _noise_plus_quant(ch, Q, bs_subset):
    cov = ch.noise_blockdiag(bs_subset)
    n = ch.N
    for p, ell in enumerate(bs_subset):
        cov[p * n:(p + 1) * n, p * n:(p + 1) * n] += Q.Q[ell]
    return cov

def _rate_bits(signal, J):
    """log2 det(I + S† J^{-1} S) via a triangular solve."""
    c = cholesky_psd(hermitize(J))
    y = scipy.linalg.solve_triangular(c, signal, lower=True)
    d = signal.shape[1]
    return logdet2(np.eye(d) + y.conj().T @ y)


def user_rates(ch, V, Q, scheme):
    """Achievable rate per user (bits/symbol) under the configured scheme."""
    if V.n_users != ch.K:
        raise DimensionMismatchError(f"{V.n_users} beamformers for {ch.K} users")
    active = Q.active(ch.L)
    S = _signals(ch, V, active)
    base = _noise_plus_quant(ch, Q, active)
    outer = np.einsum("knd,kjd->knj", S, S.conj())
    sets = interference_sets(ch.K, scheme)
    rates = np.zeros(ch.K)
    for k in range(ch.K):
        J = base + outer[sets[k]].sum(axis=0) if sets[k] else base.copy()
        rates[k] = _rate_bits(S[k], J)
    return rates


def mmse_receiver(ch, V, Q, k):
    """Linear receiver minimizing user k's error covariance.

    Includes the user's own signal covariance in the inverted matrix, which is
    what makes the resulting error matrix the minimum over all linear
    receivers.
    """
    active = Q.active(ch.L)
    S = _signals(ch, V, active)
    cov = _noise_plus_quant(ch, Q, active)
    cov += np.einsum("knd,kjd->nj", S, S.conj())
    c = cholesky_psd(hermitize(cov))
    return scipy.linalg.cho_solve((c, True), S[k])


def error_covariance(ch, V, Q, k, U, interferers=None):
    """Error covariance of user k's estimate under receiver U (d x d)."""
    active = Q.active(ch.L)
    S = _signals(ch, V, active)
    if interferers is None:
        interferers = [j for j in range(ch.K) if j != k]
    cov = _noise_plus_quant(ch, Q, active)
    for j in interferers:
        cov += S[j] @ S[j].conj().T
    A = np.eye(V.V.shape[2]) - U.conj().T @ S[k]
    return hermitize(A @ A.conj().T + U.conj().T @ cov @ U)


def fronthaul_usage_su(ch, V, Q, ell):
    """Single-user compression rate at BS ``ell`` (bits/symbol)."""
    sig = np.einsum("knm,kmd->knd", ch.H[ell], V.V)
    omega = ch.Lam[ell] + Q.Q[ell] + np.einsum("knd,kjd->nj", sig, sig.conj())
    return logdet2(omega) - logdet2(Q.Q[ell])


def _received_cov(ch, V, bs_subset):
    S = _signals(ch, V, bs_subset)
    return ch.noise_blockdiag(bs_subset) + np.einsum("knd,kjd->nj", S, S.conj())


def fronthaul_usage_wz(ch, V, Q, order, pos):
    """Wyner-Ziv rate for the BS at 0-based ``pos`` in the decompression order.

    Side information is everything already decompressed (the order prefix
    before ``pos``); at pos 0 this reduces to single-user compression.
    """
    prefix = list(order.prefix(pos))
    num = _received_cov(ch, V, prefix) + _quant_blockdiag(ch, Q, prefix)
    value = logdet2(num)
    if pos > 0:
        prev = prefix[:-1]
        value -= logdet2(_received_cov(ch, V, prev) + _quant_blockdiag(ch, Q, prev))
    return value - logdet2(Q.Q[order.pi[pos]])


def _quant_blockdiag(ch, Q, bs_subset):
    n = ch.N
    out = np.zeros((len(bs_subset) * n,) * 2, dtype=np.complex128)
    for p, ell in enumerate(bs_subset):
        out[p * n:(p + 1) * n, p * n:(p + 1) * n] = Q.Q[ell]
    return out


def cutset_bound(ch, V, bs_subset=None):
    """Infinite-fronthaul sum rate log2|H K H† + Lam| - log2|Lam| (bits)."""
    subset = list(range(ch.L)) if bs_subset is None else list(bs_subset)
    lam = ch.noise_blockdiag(subset)
    return logdet2(_received_cov(ch, V, subset)) - logdet2(lam)


def fronthaul_violation(ch, V, Q, scheme, order=None):
    """Worst-case fronthaul constraint violation in bits (<= 0 means feasible).

    Single-user compression: per-BS usage minus budget. Wyner-Ziv: the nested
    prefix form, cumulative usage along the order minus cumulative budget.
    """
    active = Q.active(ch.L)
    C = scheme.fronthaul_bits
    if scheme.compression == "su":
        gaps = [fronthaul_usage_su(ch, V, Q, ell) - C[ell] for ell in active]
        return max(gaps) if gaps else 0.0
    if order is None:
        raise ValueError("Wyner-Ziv feasibility needs a decompression order")
    worst, cum_usage, cum_budget = -np.inf, 0.0, 0.0
    for pos in range(len(order.pi)):
        cum_usage += fronthaul_usage_wz(ch, V, Q, order, pos)
        cum_budget += C[order.pi[pos]]
        worst = max(worst, cum_usage - cum_budget)
    return worst


def weighted_sum_rate(ch, V, Q, scheme):
    """Weighted sum of user rates in bits/symbol."""
    return float(np.dot(scheme.weights, user_rates(ch, V, Q, scheme)))
