"""Command-line interface: run scenarios, query the oracle, emit CDF files."""

import argparse
import json
import os
import sys
from dataclasses import fields

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError, CranoptError
from .harness import (
    ExperimentResult,
    ScenarioConfig,
    brute_force_oracle,
    emit_cdf,
    read_cdf_csv,
    run_experiment,
    write_cdf_csv,
    write_sweep_csv,
)
from .network import ChannelRealization
from .rates import SchemeConfig, cutset_bound
from .sca import SolverOptions, wmmse_sca

_PRESET_DIR = os.path.join(os.path.dirname(__file__), "presets")


def preset_path(name):
    return os.path.join(_PRESET_DIR, f"{name}.yaml")


def load_config(path_or_name):
    """Scenario config from a YAML file path or a bundled preset name."""
    path = path_or_name
    if not os.path.exists(path):
        candidate = preset_path(path_or_name)
        if os.path.exists(candidate):
            path = candidate
        else:
            raise ConfigError(f"config: no file or preset named {path_or_name!r}")
    with open(path) as f:
        raw = yaml.safe_load(f) or {}
    known = {f.name for f in fields(ScenarioConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"config: unknown keys {sorted(unknown)}")
    return ScenarioConfig(**raw)


def save_config(cfg, path):
    from dataclasses import asdict
    data = asdict(cfg)
    data["fronthaul_mbps"] = list(data["fronthaul_mbps"])
    data["seeds"] = list(data["seeds"])
    with open(path, "w") as f:
        yaml.safe_dump(data, f, sort_keys=True)


def _apply_overrides(cfg, args):
    updates = {}
    if args.seed:
        updates["seeds"] = tuple(args.seed)
    if args.fronthaul:
        updates["fronthaul_mbps"] = tuple(args.fronthaul)
    for flag, key in (("scheme", "scheme"), ("receiver", "receiver"),
                      ("design", "design"), ("clustering", "clustering")):
        val = getattr(args, flag)
        if val is not None:
            updates[key] = val
    if args.cluster_size is not None:
        updates["cluster_size"] = args.cluster_size
    if args.workers is not None:
        updates["workers"] = args.workers
    if not updates:
        return cfg
    from dataclasses import replace
    return replace(cfg, **updates)


def cmd_run(args):
    cfg = load_config(args.config)
    cfg = _apply_overrides(cfg, args)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)

    result = run_experiment(cfg)
    result.save(os.path.join(out, "result.json"))

    from dataclasses import asdict
    meta = {
        "tool": "cranopt",
        "version": __version__,
        "config": asdict(cfg),
        "seeds": list(cfg.seeds),
        "fronthaul_mbps": list(cfg.fronthaul_mbps),
        "fronthaul_bits_per_symbol": [cfg.fronthaul_bits(c)
                                      for c in cfg.fronthaul_mbps],
        "units": {"rates": "Mbps", "fronthaul_usage": "bits/complex symbol"},
    }
    with open(os.path.join(out, "meta.json"), "w") as f:
        json.dump(meta, f, sort_keys=True, indent=1)

    paths = emit_cdf(result, out)
    sweep_path = None
    if len(cfg.fronthaul_mbps) > 1:
        sweep_path = write_sweep_csv(result, os.path.join(out, "sweep.csv"))

    if not args.no_figures:
        from .plotting import render_cdf, render_sweep
        for p in paths:
            rates, pct = read_cdf_csv(p)
            label = os.path.splitext(os.path.basename(p))[0].replace("cdf_", "")
            render_cdf({label: (rates, pct)}, p.replace(".csv", ".png"),
                       title=cfg.name)
        if sweep_path:
            budgets, sums = [], []
            with open(sweep_path) as f:
                f.readline()
                for line in f:
                    a, b = line.split(",")
                    budgets.append(float(a))
                    sums.append(float(b))
            render_sweep(budgets, sums, os.path.join(out, "sweep.png"),
                         label=f"{cfg.scheme}/{cfg.receiver}", title=cfg.name)

    print(f"wrote {out}/result.json ({len(result.user_rates)} user-rate rows)")
    return 0


def cmd_oracle(args):
    rng = np.random.default_rng(args.seed)
    L, K = args.bs, args.users
    gains = 10 ** (-rng.uniform(0, args.gain_spread_db, size=(L, K)) / 10)
    h = np.sqrt(gains / 2) * (rng.standard_normal((L, K))
                              + 1j * rng.standard_normal((L, K)))
    ch = ChannelRealization(
        L=L, K=K, N=1, M=1, H=h.reshape(L, K, 1, 1),
        Lam=np.ones((L, 1, 1), dtype=complex), bandwidth_hz=10e6,
    )
    power = np.full(K, args.power_mw)
    scheme = SchemeConfig(receiver=args.receiver, compression=args.scheme,
                          weights=np.ones(K),
                          fronthaul_bits=np.full(L, args.fronthaul_bits))
    V, Q, rate = brute_force_oracle(ch, scheme, power, grid=args.resolution)
    out = {
        "sum_rate_bits": rate,
        "powers_mw": [float(abs(V.V[k, 0, 0]) ** 2) for k in range(K)],
        "quant_noise": [float(Q.Q[ell, 0, 0].real) for ell in range(L)],
        "cutset_bound_bits": cutset_bound(ch, V),
    }
    if args.compare:
        Vj, Qj, state = wmmse_sca(ch, scheme, power_mw=power)
        out["joint_design_bits"] = state.objective_trace[-1]
        out["joint_minus_oracle_bits"] = out["joint_design_bits"] - rate
        out["joint_converged"] = bool(state.converged)
    print(json.dumps(out, sort_keys=True, indent=1))
    return 0


def cmd_cdf(args):
    result = ExperimentResult.load(args.infile)
    budgets = sorted({r["fronthaul_mbps"] for r in result.user_rates})
    if args.fronthaul is not None:
        budgets = [c for c in budgets if c in args.fronthaul]
    if len(budgets) != 1:
        raise ConfigError(
            f"cdf: result holds budgets {budgets}; pick one with --fronthaul"
        )
    write_cdf_csv(result.rates_for(budgets[0]), args.out)
    if args.fig:
        from .plotting import render_cdf
        rates, pct = read_cdf_csv(args.out)
        render_cdf({f"C={budgets[0]:g} Mbps": (rates, pct)}, args.fig)
    print(f"wrote {args.out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="cranopt",
        description="Uplink C-RAN joint beamforming and fronthaul "
                    "compression experiments",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario config")
    run.add_argument("--config", required=True,
                     help="YAML config path or preset name "
                          "(single_cluster, multi_cluster)")
    run.add_argument("--seed", type=int, nargs="+", help="seed list override")
    run.add_argument("--fronthaul", type=float, nargs="+",
                     help="fronthaul budgets in Mbps")
    run.add_argument("--scheme", choices=["su", "wz"])
    run.add_argument("--receiver", choices=["mmse", "sic"])
    run.add_argument("--design", choices=["joint", "separate"])
    run.add_argument("--clustering", choices=["disjoint", "usercentric"])
    run.add_argument("--cluster-size", dest="cluster_size", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out", help="output directory (default: cwd)")
    run.add_argument("--no-figures", action="store_true",
                     help="skip PNG rendering")
    run.set_defaults(func=cmd_run)

    oracle = sub.add_parser("oracle",
                            help="brute-force a tiny scalar instance")
    oracle.add_argument("--bs", type=int, default=1, choices=[1, 2])
    oracle.add_argument("--users", type=int, default=1, choices=[1, 2])
    oracle.add_argument("--fronthaul-bits", type=float, default=2.0)
    oracle.add_argument("--power-mw", type=float, default=1.0)
    oracle.add_argument("--gain-spread-db", type=float, default=10.0)
    oracle.add_argument("--seed", type=int, default=0)
    oracle.add_argument("--scheme", choices=["su", "wz"], default="su")
    oracle.add_argument("--receiver", choices=["mmse", "sic"], default="sic")
    oracle.add_argument("--resolution", type=int, default=24)
    oracle.add_argument("--compare", action="store_true",
                        help="also run the joint design and report the gap")
    oracle.set_defaults(func=cmd_oracle)

    cdf = sub.add_parser("cdf", help="emit a CDF CSV from a saved result")
    cdf.add_argument("--in", dest="infile", required=True)
    cdf.add_argument("--out", required=True)
    cdf.add_argument("--fronthaul", type=float, nargs="+")
    cdf.add_argument("--fig", help="also render a PNG to this path")
    cdf.set_defaults(func=cmd_cdf)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CranoptError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
