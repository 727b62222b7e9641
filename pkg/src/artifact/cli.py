"""Command line entry point: simulate, picard, verify, inflation.

Every run writes the fully resolved config (defaults expanded) next to its
outputs, so `asqg <cmd> --config <run>/config.resolved.yaml` replays it.

Exit codes: 0 ok, 1 a verification gate failed, 2 configuration error,
3 runtime error.
"""

from __future__ import annotations

import argparse
import copy
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import biot_savart as bs
from . import estimates_harness as eh
from . import inflation_experiment as ie
from . import presets
from . import transport_solver as ts
from .errors import ConfigError, DomainError
from .geometry_field import Grid

log = logging.getLogger("asqg")

EXIT_OK, EXIT_GATE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

DEFAULTS = {
    "seed": 0,
    "beta": None,                   # None: beta = alpha
    "grid": {"n1": 128, "n2": 128, "radius": 1.0, "margin": 0.25, "stretch": None,
             "end_weights": "gregory"},
    "initial": {"preset": "canonical", "params": {}, "scale": 1.0},
    "quadrature": bs.QuadratureConfig().to_dict(),
    "solver": {"T": 0.1, "dt": None, "scheme": "pc", "certified": True,
               "pair_budget": 10_000, "diag_every": 1},
    "picard": {"T": None, "dt": None, "n_max": 5, "bound_factor": 10.0},
    "verify": {"estimates": ["U1_REG", "DU2_ASYMP", "L2_V2", "FARFIELD_LIP"],
               "family_size": 50, "members": 10, "x1_ladder": list(eh.U2_LADDER),
               "L_ladder": list(eh.LIP_LADDER), "probe_x2": 0.0},
    "gates": {k.value: math.inf for k in eh.EstimateId},
    "slope_gates": {},
    "probes": {**ie.ProbeConfig().to_dict(), "provider": "live", "T": None, "T_max": 1.0,
               "control_preset": None},
    "output": {"snapshot_every": 0, "svg": False},
}

REQUIRED = {"simulate": ("alpha",), "picard": ("alpha",), "verify": ("alpha",),
            "inflation": ("alpha",)}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def apply_override(cfg: dict, item: str):
    """KEY=VALUE with a dotted key; VALUE is parsed as YAML."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not KEY=VALUE")
    key, raw = item.split("=", 1)
    node = cfg
    parts = key.strip().split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override key {key!r}: {p!r} is not a block")
    node[parts[-1]] = yaml.safe_load(raw)


def resolve_config(path, overrides=(), seed=None, command="simulate") -> dict:
    user = {}
    if path is not None:
        try:
            user = yaml.safe_load(Path(path).read_text()) or {}
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found")
        if not isinstance(user, dict):
            raise ConfigError("config must be a mapping")
    for item in overrides:
        apply_override(user, item)
    cfg = _merge(DEFAULTS, user)
    if seed is not None:
        cfg["seed"] = int(seed)
    for key in REQUIRED.get(command, ()):
        if cfg.get(key) is None:
            raise ConfigError(f"missing required config key '{key}'")
    try:
        cfg["alpha"] = float(cfg["alpha"])
    except (TypeError, ValueError):
        raise ConfigError(f"config key 'alpha' must be a number, got {cfg.get('alpha')!r}")
    if not 0.0 < cfg["alpha"] <= 1.0:
        raise ConfigError(f"config key 'alpha' must lie in (0, 1], got {cfg['alpha']}")
    if cfg["beta"] is None:
        cfg["beta"] = cfg["alpha"]
    cfg["version"] = __version__
    cfg["command"] = command
    return cfg


def build_grid(cfg) -> Grid:
    g = cfg["grid"]
    try:
        return Grid.for_support(float(g["radius"]), int(g["n1"]), int(g["n2"]),
                                margin=float(g["margin"]), stretch=g["stretch"],
                                end_weights=g["end_weights"])
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"grid: {exc}")


def build_initial(cfg, grid, block="initial"):
    ini = cfg[block]
    return presets.make_field(ini["preset"], grid, ini.get("params"),
                              support_radius=float(cfg["grid"]["radius"]),
                              scale=float(ini.get("scale", 1.0)))


def quad_config(cfg):
    try:
        return bs.QuadratureConfig.from_dict(cfg["quadrature"])
    except TypeError as exc:
        raise ConfigError(f"quadrature: {exc}")


def _write_config(cfg, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.yaml").write_text(yaml.safe_dump(cfg, sort_keys=True))


# commands

def cmd_simulate(cfg, out: Path, workers: int) -> int:
    grid = build_grid(cfg)
    theta0 = build_initial(cfg, grid)
    s = cfg["solver"]
    q = quad_config(cfg)
    every = int(cfg["output"]["snapshot_every"])
    snap_dir = out / "snapshots"

    def keep(state, k=[0]):
        k[0] += 1
        if every and k[0] % every == 0:
            snap_dir.mkdir(exist_ok=True)
            state.theta.to_csv(snap_dir / f"theta_{k[0]:06d}.csv", alpha=cfg["alpha"])

    states = ts.simulate(theta0, cfg["alpha"], float(cfg["beta"]), s["T"], s["dt"], q,
                         certified=bool(s["certified"]), scheme=s["scheme"],
                         pair_budget=int(s["pair_budget"]), diag_every=int(s["diag_every"]),
                         callback=keep)
    last = states[-1]
    theta0.to_csv(out / "theta_initial.csv", alpha=cfg["alpha"])
    last.theta.to_csv(out / "theta_final.csv", alpha=cfg["alpha"])
    X1, X2 = grid.mesh()
    bs.VelocityField(np.column_stack([X1.ravel(), X2.ravel()]), last.velocity[0].ravel(),
                     last.velocity[1].ravel()).to_csv(out / "velocity_final.csv")
    ts.write_norm_history(out / "norms_beta.csv", states, "beta")
    ts.write_norm_history(out / "norms_alpha.csv", states, "alpha")
    ts.write_monitor(out / "monitor.csv", states)
    with (out / "time_modulus.csv").open("w") as fh:   # logged, not gated
        fh.write("lag,seminorm_half_beta\n")
        for lag, v in ts.time_modulus(states, 0.5 * float(cfg["beta"])):
            fh.write(f"{lag!r},{v!r}\n")
    summary = {"steps": len(states) - 1, "T": last.t, "sup": last.theta.sup(),
               "max_overshoot": max(st.overshoot for st in states),
               "support": last.support}
    (out / "summary.yaml").write_text(yaml.safe_dump(summary, sort_keys=True))
    print(f"simulate: {summary['steps']} steps to t={last.t:.6g}, sup={summary['sup']:.6g}")
    return EXIT_OK


def cmd_picard(cfg, out: Path, workers: int) -> int:
    grid = build_grid(cfg)
    theta0 = build_initial(cfg, grid)
    p = cfg["picard"]
    q = quad_config(cfg)
    a = cfg["alpha"]
    T = p["T"]
    if T is None:
        T = 0.1 / ts.weighted_x_norm(theta0, a).x_beta_norm
    dt = p["dt"] or min(T / 4, 0.8 * ts.stable_dt(theta0, a, q))
    records, _ = ts.picard(theta0, a, float(cfg["beta"]), float(T), float(dt), int(p["n_max"]), q,
                           bound_factor=float(p["bound_factor"]))
    ts.write_picard(out / "picard.csv", records)
    ratios = [records[k + 1].l2_diff / records[k].l2_diff
              for k in range(1, len(records) - 1) if records[k].l2_diff > 0]
    (out / "summary.yaml").write_text(yaml.safe_dump(
        {"T": float(T), "dt": float(dt), "contraction_ratios": [float(r) for r in ratios]}))
    print("picard: ratios " + " ".join(f"{r:.3g}" for r in ratios))
    return EXIT_OK


def _slope_ok(cfg, rep) -> bool:
    band = cfg["slope_gates"].get(rep.estimate_id.value)
    if band is None or rep.fitted_slope is None:
        return band is None
    return float(band[0]) <= rep.fitted_slope <= float(band[1])


def cmd_verify(cfg, out: Path, workers: int) -> int:
    ids = cfg["verify"]["estimates"]
    known = {e.value for e in eh.EstimateId}
    bad = [i for i in ids if i not in known]
    if bad:
        raise ConfigError(f"unknown estimate_id {bad[0]!r} (choose from {sorted(known)})")
    a = cfg["alpha"]
    v = cfg["verify"]
    gates = cfg["gates"]
    q = quad_config(cfg)
    grid = build_grid(cfg)
    seed = int(cfg["seed"])
    reports = []
    if "U1_REG" in ids:
        reports.append(eh.verify_u1_regularity(eh.bump_family(grid, int(v["members"])), a, q,
                                               seed=seed, gate=float(gates["U1_REG"]),
                                               workers=workers))
    if "DU2_ASYMP" in ids or "U2_D2_BOUND" in ids:
        theta = presets.make_field("kinked", grid, {"alpha": a})
        rep = eh.verify_dU2_asymptotic(theta, a, v["x1_ladder"], float(v["probe_x2"]),
                                       gate=float(gates["DU2_ASYMP"]))
        rep.companion.gate = float(gates["U2_D2_BOUND"])
        reports.append(rep)
    if "L2_V2" in ids or "L2_WEIGHTED_V1" in ids:
        fam = eh.random_family(grid, int(v["family_size"]), seed)
        rep = eh.verify_L2_bounds(fam, a, q, seed=seed, gate=float(gates["L2_V2"]), workers=workers)
        rep.companion.gate = float(gates["L2_WEIGHTED_V1"])
        reports.append(rep)
    if "FARFIELD_LIP" in ids:
        reports.append(eh.verify_farfield_lipschitz(build_initial(cfg, grid), a, v["L_ladder"], q,
                                                    seed=seed, gate=float(gates["FARFIELD_LIP"])))
    if "ENERGY_2THT" in ids:
        s = cfg["solver"]
        states = ts.simulate(build_initial(cfg, grid), a, float(cfg["beta"]), s["T"], s["dt"], q,
                             certified=bool(s["certified"]), scheme=s["scheme"],
                             pair_budget=int(s["pair_budget"]), diag_every=1)
        reports.append(eh.verify_energy_inequalities(states, a, float(cfg["beta"]),
                                                     gate=float(gates["ENERGY_2THT"])))
    eh.write_reports(out, reports)
    ok = True
    for rep in reports:
        r = rep
        while r is not None:
            good = r.passed and _slope_ok(cfg, r)
            ok &= good
            slope = "" if r.fitted_slope is None else f" slope={r.fitted_slope:.4f}"
            print(f"{r.estimate_id.value}: constant={r.fitted_constant:.6g}{slope} "
                  f"{'PASS' if good else 'FAIL'}")
            r = r.companion
    return EXIT_OK if ok else EXIT_GATE


def cmd_inflation(cfg, out: Path, workers: int, allow_cross_mode: bool = False) -> int:
    p = dict(cfg["probes"])
    a = cfg["alpha"]
    if p.get("theorem3_mode") and not 0.5 < a <= 1.0 and not allow_cross_mode:
        raise ConfigError(f"probes.theorem3_mode requires alpha in (1/2, 1], got alpha={a}; "
                          "pass --allow-cross-mode to explore anyway")
    provider, T, T_max, control = (p.pop(k) for k in ("provider", "T", "T_max", "control_preset"))
    try:
        pc = ie.ProbeConfig.from_dict(p)
    except TypeError as exc:
        raise ConfigError(f"probes: {exc}")
    grid = build_grid(cfg)
    theta0 = build_initial(cfg, grid)
    q = quad_config(cfg)
    dt = cfg["solver"]["dt"]
    run = ie.run_inflation(theta0, a, pc, q, dt=dt, T=T, T_max=float(T_max), provider=provider)
    ie.write_outputs(run, out, svg=bool(cfg["output"]["svg"]))
    fits = run.summary["fits"]
    if control:
        ccfg = _merge(cfg, {"initial": {"preset": control}})
        ctl_theta = build_initial(ccfg, grid)
        matched = {r.ell: r.crossing_time for r in run.records if r.crossing_time is not None}
        if matched:
            ctl = ie.run_inflation(ctl_theta, a, pc, q, dt=dt, T_max=float(T_max), provider=provider,
                                   check_anchor=False, matched_times=matched)
            ie.write_outputs(ctl, out / "control")
            fits["control_quotient"] = ctl.summary["fits"]["quotient"]
            run.summary["fits"] = fits
            (out / "inflation_summary.yaml").write_text(yaml.safe_dump(run.summary, sort_keys=True))
    for name in ("t_star", "quotient", "control_quotient"):
        f = fits.get(name)
        if f is not None:
            print(f"{name}: slope={f['slope']:.4f} ci=[{f['ci'][0]:.4f}, {f['ci'][1]:.4f}]")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "picard": cmd_picard, "verify": cmd_verify,
            "inflation": cmd_inflation}


def build_parser():
    ap = argparse.ArgumentParser(prog="asqg", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--out", default="runs/out", help="output directory")
    common.add_argument("--workers", type=int, default=None,
                        help="parallel workers (default: available cores)")
    common.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-key override, repeatable (e.g. solver.T=0.05)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("simulate", "picard"):
        sub.add_parser(name, parents=[common])
    pv = sub.add_parser("verify", parents=[common])
    pv.add_argument("--estimates", nargs="+", default=None, help="estimate ids to run")
    pi = sub.add_parser("inflation", parents=[common])
    pi.add_argument("--allow-cross-mode", action="store_true",
                    help="allow theorem3_mode outside alpha in (1/2, 1]")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    workers = args.workers or os.cpu_count() or 1
    out = Path(args.out)
    try:
        overrides = list(args.override)
        if getattr(args, "estimates", None):
            overrides.append("verify.estimates=" + yaml.safe_dump(args.estimates,
                                                                 default_flow_style=True).strip())
        cfg = resolve_config(args.config, overrides, args.seed, args.command)
        _write_config(cfg, out)
        kw = {"allow_cross_mode": args.allow_cross_mode} if args.command == "inflation" else {}
        return COMMANDS[args.command](cfg, out, workers, **kw)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        raise
    except Exception as exc:  # runtime failures keep their own exit code
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
