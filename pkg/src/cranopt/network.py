"""Hexagonal multicell topology, user drops, channel generation, clustering.

Geometry convention: BS sites sit on a triangular lattice with spacing
``bs_distance``; each cell is the Voronoi hexagon of its site (circumradius
bs_distance/sqrt(3), edges facing the six neighbors). Sectors are 120-degree
wedges of a cell and are treated as co-located BSs (relays) with a flat
antenna gain. All positions are meters, powers are mW, rates downstream are
bits per complex symbol.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidLayoutError

# Counts of complete hexagonal layouts: 1 + 3 r (r + 1) for r rings.
_RING_COMPLETE = [1 + 3 * r * (r + 1) for r in range(40)]

# The 65-cell layout (complete 4 rings + 4 spiral-ordered ring-5 sites) is
# accepted as an explicit preset alongside the ring-complete counts.
_SPECIAL_COUNTS = {65}

MIN_BS_USER_DISTANCE_M = 10.0


@dataclass
class NetworkTopology:
    cell_centers: np.ndarray          # (C, 2) meters
    sectors_per_cell: int
    bs_distance: float
    sector_orientations: np.ndarray   # (C * sectors,) boresight radians

    @property
    def n_cells(self):
        return self.cell_centers.shape[0]

    @property
    def n_sectors(self):
        return self.n_cells * self.sectors_per_cell

    def sector_positions(self):
        """(S, 2) positions of every sector-BS (co-located per cell)."""
        return np.repeat(self.cell_centers, self.sectors_per_cell, axis=0)

    def sector_cell(self, sector):
        """Cell index owning a global sector index."""
        return sector // self.sectors_per_cell

    def center_cells(self, rings=1):
        """Indices of the cells within ``rings`` lattice rings of the origin."""
        d = np.linalg.norm(self.cell_centers, axis=1)
        return [int(i) for i in np.nonzero(d <= rings * self.bs_distance * 1.01)[0]]


@dataclass
class UserDrop:
    positions: np.ndarray     # (K, 2) meters
    home_sector: np.ndarray   # (K,) global sector index
    antennas: int             # M, transmit antennas per user
    streams: int              # d
    power_mw: np.ndarray      # (K,)

    @property
    def n_users(self):
        return self.positions.shape[0]


@dataclass
class ChannelParams:
    pathloss_const_db: float = 128.1
    pathloss_slope_db: float = 37.6
    shadowing_std_db: float = 8.0
    shadow_correlation: float = 0.5
    antenna_gain_dbi: float = 14.0
    noise_psd_dbm_hz: float = -169.0
    noise_figure_db: float = 7.0
    bandwidth_hz: float = 10e6
    bs_antennas: int = 2
    user_antennas: int = 2


@dataclass
class ChannelRealization:
    L: int
    K: int
    N: int
    M: int
    H: np.ndarray        # (L, K, N, M) complex blocks
    Lam: np.ndarray      # (L, N, N) noise covariance per BS
    bandwidth_hz: float

    def stacked(self, bs_subset=None):
        """Per-user channels stacked over the given BS rows: (K, |S|*N, M)."""
        idx = range(self.L) if bs_subset is None else list(bs_subset)
        return np.concatenate([self.H[ell] for ell in idx], axis=1)

    def noise_blockdiag(self, bs_subset=None):
        idx = range(self.L) if bs_subset is None else list(bs_subset)
        n = len(list(idx)) * self.N
        out = np.zeros((n, n), dtype=np.complex128)
        for p, ell in enumerate(idx):
            out[p * self.N:(p + 1) * self.N, p * self.N:(p + 1) * self.N] = self.Lam[ell]
        return out

    def restrict(self, bs_subset=None, user_subset=None):
        """New realization over a subset of BSs and/or users."""
        bs = list(range(self.L)) if bs_subset is None else list(bs_subset)
        us = list(range(self.K)) if user_subset is None else list(user_subset)
        return ChannelRealization(
            L=len(bs), K=len(us), N=self.N, M=self.M,
            H=self.H[np.ix_(bs, us)].copy(),
            Lam=self.Lam[bs].copy(),
            bandwidth_hz=self.bandwidth_hz,
        )


@dataclass
class ClusterAssignment:
    strategy: str                      # "disjoint" | "usercentric"
    serving: list                      # disjoint: list of BS tuples; usercentric: per-user BS tuple
    cluster_size: int


def _hex_axial_sites(count):
    """Axial lattice sites in stable (ring, angle) spiral order."""
    if count in _RING_COMPLETE:
        rings = _RING_COMPLETE.index(count)
    elif count in _SPECIAL_COUNTS:
        rings = next(r for r, c in enumerate(_RING_COMPLETE) if c >= count)
    else:
        raise InvalidLayoutError(
            f"{count} cells is not a ring-complete hexagonal layout "
            f"(valid: {_RING_COMPLETE[:6]} ... or 65)"
        )
    sites = []
    for q in range(-rings, rings + 1):
        for r in range(-rings, rings + 1):
            ring = (abs(q) + abs(r) + abs(q + r)) // 2
            if ring <= rings:
                x = q + r / 2.0
                y = r * math.sqrt(3.0) / 2.0
                ang = math.atan2(y, x) % (2.0 * math.pi)
                sites.append((ring, ang, q, r))
    sites.sort()
    return [(q, r) for _, _, q, r in sites[:count]]


def build_hex_layout(cells, bs_distance, sectors):
    """Deterministic hexagonal layout with the center cell at the origin."""
    if sectors not in (1, 3):
        raise InvalidLayoutError(f"sectors per cell must be 1 or 3, got {sectors}")
    if bs_distance <= 0:
        raise InvalidLayoutError("bs_distance must be positive")
    axial = _hex_axial_sites(cells)
    centers = np.array(
        [[bs_distance * (q + r / 2.0), bs_distance * r * math.sqrt(3.0) / 2.0]
         for q, r in axial]
    )
    boresight = np.array(
        [s * 2.0 * math.pi / sectors + math.pi / sectors
         for _ in range(cells) for s in range(sectors)]
    )
    return NetworkTopology(
        cell_centers=centers,
        sectors_per_cell=sectors,
        bs_distance=bs_distance,
        sector_orientations=boresight,
    )


def in_hexagon(point, center, bs_distance):
    """Voronoi-cell membership test via the three lattice axes."""
    dx = point[0] - center[0]
    dy = point[1] - center[1]
    half = bs_distance / 2.0 + 1e-9
    for ang in (0.0, math.pi / 3.0, 2.0 * math.pi / 3.0):
        if abs(dx * math.cos(ang) + dy * math.sin(ang)) > half:
            return False
    return True


def _sector_of(offset, sectors):
    if sectors == 1:
        return 0
    theta = math.atan2(offset[1], offset[0]) % (2.0 * math.pi)
    return int(theta // (2.0 * math.pi / sectors)) % sectors


def drop_users(topology, per_cell, seed, *, antennas=1, streams=1, power_mw=100.0,
               active_cells=None, min_distance=MIN_BS_USER_DISTANCE_M):
    """Uniform user placement inside each (active) cell's hexagon.

    ``per_cell`` users are drawn per sector (per cell for 1-sector layouts),
    at least ``min_distance`` meters from the cell center, reproducibly from
    ``seed``. ``active_cells`` limits placement to a subset of cells, e.g. the
    cooperating center cells of the single-cluster scenario.
    """
    if per_cell < 1:
        raise ValueError("per_cell must be >= 1")
    rng = np.random.default_rng(seed)
    cells = range(topology.n_cells) if active_cells is None else active_cells
    r_hex = topology.bs_distance / math.sqrt(3.0)
    positions, home = [], []
    for c in cells:
        center = topology.cell_centers[c]
        for s in range(topology.sectors_per_cell):
            placed = 0
            while placed < per_cell:
                p = center + rng.uniform(-r_hex, r_hex, size=2)
                off = p - center
                if not in_hexagon(p, center, topology.bs_distance):
                    continue
                if np.hypot(off[0], off[1]) < min_distance:
                    continue
                if _sector_of(off, topology.sectors_per_cell) != s:
                    continue
                positions.append(p)
                home.append(c * topology.sectors_per_cell + s)
                placed += 1
    k = len(positions)
    return UserDrop(
        positions=np.array(positions).reshape(k, 2),
        home_sector=np.array(home, dtype=int),
        antennas=antennas,
        streams=streams,
        power_mw=np.full(k, float(power_mw)),
    )


def pathloss_db(distance_m, params):
    """Distance-dependent pathloss, distance floored at the 10 m minimum."""
    d_km = np.maximum(np.asarray(distance_m, dtype=float), MIN_BS_USER_DISTANCE_M) / 1000.0
    return params.pathloss_const_db + params.pathloss_slope_db * np.log10(d_km)


def noise_power_mw(params):
    """Thermal noise power over the channel bandwidth including noise figure."""
    dbm = (params.noise_psd_dbm_hz
           + 10.0 * np.log10(params.bandwidth_hz)
           + params.noise_figure_db)
    return 10.0 ** (dbm / 10.0)


def shadowing_db(n_bs, n_users, std_db, correlation, rng):
    """Log-normal shadowing (dB), correlated across BSs per user.

    shadow[l, k] = sqrt(c) a_k + sqrt(1 - c) b_{l,k} gives pairwise
    correlation c between any two BSs seen by the same user.
    """
    a = rng.standard_normal(n_users)
    b = rng.standard_normal((n_bs, n_users))
    return std_db * (math.sqrt(correlation) * a[None, :]
                     + math.sqrt(1.0 - correlation) * b)


def generate_channels(topology, drop, params, seed):
    """Rayleigh block-fading channel realization for every (sector, user) pair."""
    rng = np.random.default_rng(seed)
    n = params.bs_antennas
    m = drop.antennas
    bs_pos = topology.sector_positions()
    L, K = bs_pos.shape[0], drop.n_users

    dist = np.linalg.norm(bs_pos[:, None, :] - drop.positions[None, :, :], axis=2)
    gain_db = (params.antenna_gain_dbi
               - pathloss_db(dist, params)
               + shadowing_db(L, K, params.shadowing_std_db,
                              params.shadow_correlation, rng))
    amp = np.sqrt(10.0 ** (gain_db / 10.0))

    fading = (rng.standard_normal((L, K, n, m))
              + 1j * rng.standard_normal((L, K, n, m))) / math.sqrt(2.0)
    H = amp[:, :, None, None] * fading

    sigma2 = noise_power_mw(params)
    Lam = np.broadcast_to(sigma2 * np.eye(n, dtype=np.complex128), (L, n, n)).copy()
    return ChannelRealization(L=L, K=K, N=n, M=m, H=H, Lam=Lam,
                              bandwidth_hz=params.bandwidth_hz)


def form_clusters(topology, drop, strategy, cluster_size, bs_subset=None):
    """BS cooperation sets: a disjoint partition or per-user nearest sets.

    ``bs_subset`` limits the candidate BSs (global sector indices are kept in
    the returned sets); nearest-BS ties break by ascending index.
    """
    bs_pos = topology.sector_positions()
    pool = list(range(bs_pos.shape[0])) if bs_subset is None else sorted(bs_subset)
    if cluster_size < 1 or cluster_size > len(pool):
        raise ValueError(f"cluster_size must be in [1, {len(pool)}]")

    if strategy == "disjoint":
        unassigned = list(pool)
        groups = []
        while unassigned:
            seed_bs = unassigned[0]
            d = [(float(np.linalg.norm(bs_pos[b] - bs_pos[seed_bs])), b)
                 for b in unassigned]
            d.sort()
            take = sorted(b for _, b in d[:cluster_size])
            groups.append(tuple(take))
            unassigned = [b for b in unassigned if b not in take]
        return ClusterAssignment(strategy="disjoint", serving=groups,
                                 cluster_size=cluster_size)

    if strategy == "usercentric":
        serving = []
        for k in range(drop.n_users):
            d = {b: float(np.linalg.norm(bs_pos[b] - drop.positions[k]))
                 for b in pool}
            order = sorted(pool, key=lambda b: (d[b], b))
            serving.append(tuple(sorted(order[:cluster_size])))
        return ClusterAssignment(strategy="usercentric", serving=serving,
                                 cluster_size=cluster_size)

    raise ValueError(f"unknown clustering strategy: {strategy!r}")


def schedule_round_robin(drop, loading, slot, bs_antennas):
    """Active users for one slot under per-cell round-robin scheduling.

    Each sector activates ceil(loading * N / d) of its users per slot,
    cycling deterministically through the user list by index.
    """
    if not 0.0 < loading <= 1.0:
        raise ValueError("loading must be in (0, 1]")
    per_slot = math.ceil(loading * bs_antennas / drop.streams)
    active = []
    sectors = np.unique(drop.home_sector)
    for s in sectors:
        users = sorted(int(u) for u in np.nonzero(drop.home_sector == s)[0])
        nu = len(users)
        if per_slot >= nu:
            active.extend(users)
            continue
        start = (slot * per_slot) % nu
        active.extend(users[(start + i) % nu] for i in range(per_slot))
    return sorted(active)


# --- channel container serialization (JSON, interleaved re/im) -------------

def _complex_to_list(a):
    stacked = np.stack([a.real, a.imag], axis=-1)
    return stacked.tolist()


def _complex_from_list(lst):
    arr = np.asarray(lst, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def channels_to_dict(ch):
    """JSON-ready container; complex entries as trailing [re, im] pairs."""
    return {
        "format": "cranopt-channels-v1",
        "L": ch.L, "K": ch.K, "N": ch.N, "M": ch.M,
        "bandwidth_hz": ch.bandwidth_hz,
        "H": _complex_to_list(ch.H),
        "Lambda": _complex_to_list(ch.Lam),
    }


def channels_from_dict(d):
    if d.get("format") != "cranopt-channels-v1":
        raise ConfigError("unrecognized channel container format")
    ch = ChannelRealization(
        L=int(d["L"]), K=int(d["K"]), N=int(d["N"]), M=int(d["M"]),
        H=_complex_from_list(d["H"]),
        Lam=_complex_from_list(d["Lambda"]),
        bandwidth_hz=float(d["bandwidth_hz"]),
    )
    if ch.H.shape != (ch.L, ch.K, ch.N, ch.M):
        raise ConfigError("channel container H shape mismatch")
    return ch


def save_channels(ch, path):
    with open(path, "w") as f:
        json.dump(channels_to_dict(ch), f)


def load_channels(path):
    with open(path) as f:
        return channels_from_dict(json.load(f))
