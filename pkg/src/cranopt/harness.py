"""Experiment runner: scenarios, rate tables, CDF data, and the grid oracle.

Binds topology generation, user drops, channels, clustering, scheduling, and
the optimizers into reproducible scenarios keyed entirely by (config, seeds).
Emits delimited data files (CDF and sum-rate sweeps) plus JSON run metadata;
figure rendering on top of those files lives in the plotting module.
"""

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigError, CranoptError, DimensionTooLargeError
from .network import (
    ChannelParams,
    build_hex_layout,
    drop_users,
    form_clusters,
    generate_channels,
    schedule_round_robin,
)
from .rates import (
    BeamformerSet,
    QuantCovSet,
    SchemeConfig,
    fronthaul_usage_su,
    fronthaul_usage_wz,
    fronthaul_violation,
    user_rates,
)
from .sca import SolverOptions, heuristic_decompression_order, wmmse_sca
from .separate import separate_design

FEASIBILITY_TOL_BITS = 1e-6


@dataclass
class ScenarioConfig:
    name: str = "custom"
    cells: int = 7
    sectors_per_cell: int = 1
    bs_distance_m: float = 500.0
    users_per_sector: int = 2
    active_cells: object = "all"          # "all" | "center" | list of cell ids
    cooperating: str = "active"           # BS pool: "active" cells' sectors | "all"
    bs_antennas: int = 2
    user_antennas: int = 2
    streams: int = 1
    max_tx_power_dbm: float = 23.0
    antenna_gain_dbi: float = 14.0
    noise_psd_dbm_hz: float = -169.0
    noise_figure_db: float = 7.0
    bandwidth_mhz: float = 10.0
    pathloss_const_db: float = 128.1
    pathloss_slope_db: float = 37.6
    shadowing_std_db: float = 8.0
    shadow_correlation: float = 0.5
    min_distance_m: float = 10.0
    wraparound: bool = False
    scheme: str = "su"
    receiver: str = "mmse"
    design: str = "joint"
    clustering: str = "disjoint"
    cluster_size: object = "all"
    fronthaul_mbps: tuple = (120.0,)
    seeds: tuple = (1,)
    scheduling: str = "round_robin"
    loading: float = 0.5
    slots: object = "cycle"
    workers: int = 1
    max_iter: int = 500
    rel_tol: float = 1e-5

    def __post_init__(self):
        self.fronthaul_mbps = tuple(float(c) for c in _as_list(self.fronthaul_mbps))
        self.seeds = tuple(int(s) for s in _as_list(self.seeds))
        self.validate()

    def validate(self):
        checks = [
            (self.scheme in ("su", "wz"), "scheme", "must be 'su' or 'wz'"),
            (self.receiver in ("mmse", "sic"), "receiver", "must be 'mmse' or 'sic'"),
            (self.design in ("joint", "separate"), "design",
             "must be 'joint' or 'separate'"),
            (self.clustering in ("disjoint", "usercentric"), "clustering",
             "must be 'disjoint' or 'usercentric'"),
            (self.scheduling in ("round_robin", "wmmse"), "scheduling",
             "must be 'round_robin' or 'wmmse'"),
            (0.0 < self.loading <= 1.0, "loading", "must be in (0, 1]"),
            (self.sectors_per_cell in (1, 3), "sectors_per_cell", "must be 1 or 3"),
            (all(c > 0 for c in self.fronthaul_mbps), "fronthaul_mbps",
             "entries must be positive"),
            (len(self.seeds) > 0, "seeds", "at least one seed required"),
            (self.streams <= self.user_antennas, "streams",
             "cannot exceed user_antennas"),
        ]
        for ok, fieldname, msg in checks:
            if not ok:
                raise ConfigError(f"{fieldname}: {msg}")
        if self.wraparound:
            raise ConfigError("wraparound: not implemented; leave false")
        if self.clustering == "usercentric" and (
                self.scheme == "wz" or self.receiver == "sic"):
            raise ConfigError(
                "clustering: user-centric clusters overlap, which rules out "
                "Wyner-Ziv coding and the SIC receiver; use scheme=su and "
                "receiver=mmse"
            )

    def channel_params(self):
        return ChannelParams(
            pathloss_const_db=self.pathloss_const_db,
            pathloss_slope_db=self.pathloss_slope_db,
            shadowing_std_db=self.shadowing_std_db,
            shadow_correlation=self.shadow_correlation,
            antenna_gain_dbi=self.antenna_gain_dbi,
            noise_psd_dbm_hz=self.noise_psd_dbm_hz,
            noise_figure_db=self.noise_figure_db,
            bandwidth_hz=self.bandwidth_mhz * 1e6,
            bs_antennas=self.bs_antennas,
            user_antennas=self.user_antennas,
        )

    def fronthaul_bits(self, mbps):
        """Mbps budget to bits per complex symbol at the configured bandwidth."""
        return mbps * 1e6 / (self.bandwidth_mhz * 1e6)

    def power_mw(self):
        return 10.0 ** (self.max_tx_power_dbm / 10.0)


def _as_list(v):
    if isinstance(v, (list, tuple)):
        return list(v)
    return [v]


@dataclass
class ExperimentResult:
    config: dict
    user_rates: list = field(default_factory=list)
    per_cell: list = field(default_factory=list)
    fronthaul: list = field(default_factory=list)
    traces: list = field(default_factory=list)

    def rates_for(self, fronthaul_mbps=None):
        rows = self.user_rates
        if fronthaul_mbps is not None:
            rows = [r for r in rows if r["fronthaul_mbps"] == fronthaul_mbps]
        return [r["rate_mbps"] for r in rows]

    def to_dict(self):
        return {
            "config": self.config,
            "user_rates": self.user_rates,
            "per_cell": self.per_cell,
            "fronthaul": self.fronthaul,
            "traces": self.traces,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(config=d["config"], user_rates=d["user_rates"],
                   per_cell=d["per_cell"], fronthaul=d["fronthaul"],
                   traces=d["traces"])

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def _resolve_cells(cfg, topo):
    if cfg.active_cells == "all":
        return list(range(topo.n_cells))
    if cfg.active_cells == "center":
        return topo.center_cells(rings=1)
    return [int(c) for c in cfg.active_cells]


def _design_cluster(ch_sub, cfg, c_bits, weights):
    """Optimize one cooperation problem and return (V, Q, order, info)."""
    scheme = SchemeConfig(
        receiver=cfg.receiver, compression=cfg.scheme, weights=weights,
        fronthaul_bits=np.full(ch_sub.L, c_bits),
    )
    power = np.full(ch_sub.K, cfg.power_mw())
    order = None
    if cfg.scheme == "wz":
        order = heuristic_decompression_order(ch_sub, scheme.fronthaul_bits, power)
    if cfg.design == "separate":
        V, Q = separate_design(ch_sub, scheme, power, streams=cfg.streams,
                               order=order)
        info = {"design": "separate"}
    else:
        opts = SolverOptions(max_iter=cfg.max_iter, rel_tol=cfg.rel_tol,
                             order=order)
        V, Q, state = wmmse_sca(ch_sub, scheme, power_mw=power, opts=opts)
        order = state.order
        info = {
            "design": "joint",
            "iterations": state.iteration,
            "objective_bits": state.objective_trace[-1],
            "kkt_residual": state.kkt_residual,
            "converged": bool(state.converged),
        }
    gap = fronthaul_violation(ch_sub, V, Q, scheme, order)
    if gap > FEASIBILITY_TOL_BITS:
        raise CranoptError(
            f"recorded design violates fronthaul budgets by {gap:.3e} bits"
        )
    rates = user_rates(ch_sub, V, Q, scheme)
    usage = [fronthaul_usage_su(ch_sub, V, Q, ell) for ell in range(ch_sub.L)]
    if cfg.scheme == "wz" and order is not None:
        usage = [float("nan")] * ch_sub.L
        for pos in range(len(order.pi)):
            usage[order.pi[pos]] = fronthaul_usage_wz(ch_sub, V, Q, order, pos)
    return V, rates, usage, info


def _run_cell(cfg, seed, c_mbps):
    """One (seed, fronthaul) work item; pure function of its arguments."""
    topo = build_hex_layout(cfg.cells, cfg.bs_distance_m, cfg.sectors_per_cell)
    cells = _resolve_cells(cfg, topo)
    drop = drop_users(
        topo, cfg.users_per_sector, seed=[seed, 0], antennas=cfg.user_antennas,
        streams=cfg.streams, power_mw=cfg.power_mw(), active_cells=cells,
        min_distance=cfg.min_distance_m,
    )
    ch = generate_channels(topo, drop, cfg.channel_params(), seed=[seed, 1])
    c_bits = cfg.fronthaul_bits(c_mbps)
    bw = cfg.bandwidth_mhz * 1e6

    if cfg.cooperating == "active":
        bs_pool = sorted(
            c * topo.sectors_per_cell + s
            for c in cells for s in range(topo.sectors_per_cell)
        )
    else:
        bs_pool = list(range(topo.n_sectors))

    if cfg.scheduling == "wmmse":
        slot_sets = [list(range(drop.n_users))]
    else:
        per_slot = math.ceil(cfg.loading * cfg.bs_antennas / cfg.streams)
        cycle = max(1, math.ceil(cfg.users_per_sector / per_slot))
        n_slots = cycle if cfg.slots == "cycle" else int(cfg.slots)
        slot_sets = [
            schedule_round_robin(drop, cfg.loading, s, cfg.bs_antennas)
            for s in range(n_slots)
        ]

    rows_rates, rows_cells, rows_fh, rows_tr = [], [], [], []
    for slot, active_users in enumerate(slot_sets):
        if not active_users:
            continue
        if cfg.clustering == "usercentric":
            problems = [("global", bs_pool, active_users)]
            size = (len(bs_pool) if cfg.cluster_size == "all"
                    else min(int(cfg.cluster_size), len(bs_pool)))
            assignment = form_clusters(topo, drop, "usercentric", size,
                                       bs_subset=bs_pool)
        else:
            size = (len(bs_pool) if cfg.cluster_size == "all"
                    else int(cfg.cluster_size))
            assignment = form_clusters(topo, drop, "disjoint", size,
                                       bs_subset=bs_pool)
            problems = []
            for gi, group in enumerate(assignment.serving):
                members = [u for u in active_users
                           if drop.home_sector[u] in group]
                if members:
                    problems.append((f"cluster{gi}", list(group), members))

        cell_sum = {}
        for label, bss, users in problems:
            ch_sub = ch.restrict(bs_subset=bss, user_subset=users)
            if cfg.clustering == "usercentric":
                bs_index = {b: i for i, b in enumerate(bss)}
                for ui, u in enumerate(users):
                    serving = set(assignment.serving[u])
                    for b in bss:
                        if b not in serving:
                            ch_sub.H[bs_index[b], ui] = 0.0
            weights = np.ones(len(users))
            V, rates_bits, usage, info = _design_cluster(
                ch_sub, cfg, c_bits, weights
            )
            spent = np.einsum("kmd,kmd->k", V.V, V.V.conj()).real
            for ui, u in enumerate(users):
                cell = int(drop.home_sector[u]) // topo.sectors_per_cell
                mbps = rates_bits[ui] * bw / 1e6
                rows_rates.append({
                    "seed": seed, "fronthaul_mbps": c_mbps, "slot": slot,
                    "user": int(u), "cell": cell, "rate_mbps": float(mbps),
                    "scheduled": bool(spent[ui] > 1e-6 * cfg.power_mw()),
                })
                cell_sum[cell] = cell_sum.get(cell, 0.0) + float(mbps)
            for bi, b in enumerate(bss):
                rows_fh.append({
                    "seed": seed, "fronthaul_mbps": c_mbps, "slot": slot,
                    "bs": int(b), "cluster": label,
                    "usage_bits": float(usage[bi]), "budget_bits": float(c_bits),
                })
            rows_tr.append({
                "seed": seed, "fronthaul_mbps": c_mbps, "slot": slot,
                "cluster": label, **info,
            })
        for cell in sorted(cell_sum):
            rows_cells.append({
                "seed": seed, "fronthaul_mbps": c_mbps, "slot": slot,
                "cell": cell, "sum_rate_mbps": cell_sum[cell],
            })
    return rows_rates, rows_cells, rows_fh, rows_tr


def run_experiment(cfg):
    """Run the configured scenario; deterministic given (config, seeds)."""
    items = [(seed, c) for seed in cfg.seeds for c in cfg.fronthaul_mbps]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(_run_cell_star, [(cfg, s, c) for s, c in items]))
    else:
        chunks = [_run_cell(cfg, s, c) for s, c in items]

    result = ExperimentResult(config=asdict(cfg))
    for rates, cells, fh, tr in chunks:
        result.user_rates.extend(rates)
        result.per_cell.extend(cells)
        result.fronthaul.extend(fh)
        result.traces.extend(tr)
    key = lambda r: (r["seed"], r["fronthaul_mbps"], r["slot"],
                     r.get("user", -1), r.get("cell", -1), r.get("bs", -1))
    result.user_rates.sort(key=key)
    result.per_cell.sort(key=key)
    result.fronthaul.sort(key=key)
    result.traces.sort(key=lambda r: (r["seed"], r["fronthaul_mbps"],
                                      r["slot"], r["cluster"]))
    return result


def _run_cell_star(args):
    return _run_cell(*args)


# --- delimited outputs ------------------------------------------------------

def write_cdf_csv(rates, path):
    """Empirical CDF as (rate, percentile) rows; interpolation-friendly.

    Percentiles are i/(n-1) over sorted rates so the median of {1,2,3,4}
    interpolates to 2.5; a single value yields the two rows (r, 0), (r, 1).
    """
    rates = sorted(float(r) for r in rates)
    if not rates:
        raise ValueError("no rates to write")
    with open(path, "w") as f:
        f.write("rate_mbps,percentile\n")
        if len(rates) == 1:
            f.write(f"{rates[0]!r},0.0\n")
            f.write(f"{rates[0]!r},1.0\n")
            return path
        n = len(rates)
        for i, r in enumerate(rates):
            f.write(f"{r!r},{i / (n - 1)!r}\n")
    return path


def read_cdf_csv(path):
    rates, pct = [], []
    with open(path) as f:
        header = f.readline()
        for line in f:
            a, b = line.strip().split(",")
            rates.append(float(a))
            pct.append(float(b))
    return rates, pct


def emit_cdf(result, out_dir, prefix="cdf"):
    """One CDF data file per fronthaul budget in the result."""
    import os
    budgets = sorted({r["fronthaul_mbps"] for r in result.user_rates})
    paths = []
    for c in budgets:
        path = os.path.join(out_dir, f"{prefix}_C{c:g}.csv")
        write_cdf_csv(result.rates_for(c), path)
        paths.append(path)
    return paths


def write_sweep_csv(result, path):
    """Seed-averaged per-cell sum rate against the fronthaul budget."""
    budgets = sorted({r["fronthaul_mbps"] for r in result.per_cell})
    with open(path, "w") as f:
        f.write("fronthaul_mbps,per_cell_sum_rate_mbps\n")
        for c in budgets:
            vals = [r["sum_rate_mbps"] for r in result.per_cell
                    if r["fronthaul_mbps"] == c]
            f.write(f"{c!r},{float(np.mean(vals))!r}\n")
    return path


# --- brute-force oracle -----------------------------------------------------

def brute_force_oracle(ch, scheme, power_mw, grid=24, refine_tol=1e-4,
                       max_passes=14):
    """Exhaustive grid search over scalar powers and quantizer levels.

    Only tiny instances (L <= 2, K <= 2, N = M = d = 1) are supported. The
    grid covers per-user powers and per-BS quantization noise, keeps only
    fronthaul-feasible points, and zooms around the incumbent, doubling the
    resolution until the best sum rate moves less than ``refine_tol`` bits.
    Returns (V, Q, sum_rate_bits).
    """
    if ch.L > 2 or ch.K > 2 or ch.N != 1 or ch.M != 1:
        raise DimensionTooLargeError(
            "oracle supports L <= 2, K <= 2, N = M = d = 1 only"
        )
    L, K = ch.L, ch.K
    h = ch.H[:, :, 0, 0]                      # (L, K)
    lam = np.array([ch.Lam[ell, 0, 0].real for ell in range(L)])
    power_mw = np.asarray(power_mw, dtype=float)
    c_bits = np.asarray(scheme.fronthaul_bits, dtype=float)
    order = list(range(L))
    if scheme.compression == "wz":
        order = list(heuristic_decompression_order(ch, c_bits, power_mw).pi)

    # q ranges bracket the binding level (received power + noise)/(2^C - 1)
    gain_max = (np.abs(h) ** 2 @ power_mw)
    q_hi0 = (gain_max + lam) / (2.0 ** c_bits - 1.0) * 8.0
    q_lo0 = lam / (2.0 ** c_bits - 1.0) / 8.0

    p_lo = np.zeros(K)
    p_hi = power_mw.copy()
    q_lo, q_hi = q_lo0, q_hi0

    def evaluate(pgrid, qgrid):
        """Best feasible point on the cartesian grid; vectorized."""
        # mesh over p (K dims) and q (L dims)
        axes = [pgrid[k] for k in range(K)] + [qgrid[ell] for ell in range(L)]
        mesh = np.meshgrid(*axes, indexing="ij")
        p = np.stack(mesh[:K], axis=-1).reshape(-1, K)
        q = np.stack(mesh[K:], axis=-1).reshape(-1, L)
        npts = p.shape[0]

        # received covariance per BS pair: Upsilon = sum_k p_k h_lk h_mk*
        ups = np.einsum("gk,lk,mk->glm", p, h, h.conj())
        noise = np.zeros((npts, L, L), dtype=np.complex128)
        for ell in range(L):
            noise[:, ell, ell] = lam[ell] + q[:, ell]

        feasible = np.ones(npts, dtype=bool)
        if scheme.compression == "su":
            for ell in range(L):
                usage = np.log2(
                    (ups[:, ell, ell].real + lam[ell] + q[:, ell]) / q[:, ell]
                )
                feasible &= usage <= c_bits[ell] + 1e-12
        else:
            budget = 0.0
            prev_qdet = np.ones(npts)
            for pos in range(L):
                members = order[:pos + 1]
                sub = np.ix_(range(npts), members, members)
                det = np.linalg.det(ups[sub] + noise[sub]).real
                qdet = prev_qdet * q[:, order[pos]]
                budget += c_bits[order[pos]]
                usage = np.log2(np.maximum(det, 1e-300) / qdet)
                feasible &= usage <= budget + 1e-12
                prev_qdet = qdet

        cov = ups + noise
        if scheme.receiver == "sic":
            total = np.log2(np.maximum(np.linalg.det(cov).real, 1e-300))
            total -= np.log2(np.maximum(np.linalg.det(noise).real, 1e-300))
        else:
            total = np.zeros(npts)
            for k in range(K):
                jk = cov - p[:, k, None, None] * np.einsum(
                    "l,m->lm", h[:, k], h[:, k].conj()
                )[None, :, :]
                num = np.log2(np.maximum(np.linalg.det(cov).real, 1e-300))
                den = np.log2(np.maximum(np.linalg.det(jk).real, 1e-300))
                total += num - den
        total = np.where(feasible, total, -np.inf)
        best = int(np.argmax(total))
        return total[best], p[best], q[best]

    best_rate = -np.inf
    best_p = np.zeros(K)
    best_q = q_hi.copy()
    for _ in range(max_passes):
        pgrid = [np.linspace(p_lo[k], p_hi[k], grid) for k in range(K)]
        qgrid = [np.geomspace(max(q_lo[ell], 1e-12 * lam[ell]), q_hi[ell], grid)
                 for ell in range(L)]
        rate, p_best, q_best = evaluate(pgrid, qgrid)
        improved = rate - best_rate
        if rate > best_rate:
            best_rate, best_p, best_q = rate, p_best, q_best
        # zoom around the incumbent and double the resolution
        for k in range(K):
            span = (p_hi[k] - p_lo[k]) / (grid - 1) * 2.5
            p_lo[k] = max(0.0, best_p[k] - span)
            p_hi[k] = min(power_mw[k], best_p[k] + span)
        for ell in range(L):
            ratio = (q_hi[ell] / max(q_lo[ell], 1e-300)) ** (2.5 / (grid - 1))
            q_lo[ell] = best_q[ell] / ratio
            q_hi[ell] = best_q[ell] * ratio
        grid = min(2 * grid, 96)
        if 0 <= improved < refine_tol:
            break

    V = np.sqrt(best_p).reshape(K, 1, 1).astype(np.complex128)
    Q = best_q.reshape(L, 1, 1).astype(np.complex128)
    return (BeamformerSet(V, power_mw), QuantCovSet(Q), float(best_rate))
