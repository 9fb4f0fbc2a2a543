"""Command-line entry point: ``aeroguard {run,sweep,verify,plotdata}``.

Exit codes: 0 success, 1 configuration error, 2 simulation failure,
3 verification failure.
"""

import argparse
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .config import ConfigError, SimConfig

EXIT_OK, EXIT_CONFIG, EXIT_SIM, EXIT_VERIFY = 0, 1, 2, 3
OUTPUT_ENV = "AEROGUARD_OUTPUT_DIR"

log = logging.getLogger("aeroguard")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the configuration-error code, not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def default_output_dir():
    return os.environ.get(OUTPUT_ENV, os.path.join(os.getcwd(), "aeroguard-output"))


def _load_config(args):
    overrides = list(args.set or [])
    if args.config:
        return SimConfig.load(args.config, overrides)
    return SimConfig.default(overrides)


def _out_dir(args, cfg):
    return args.out or cfg.sim.get("output_dir") or default_output_dir()


def cmd_run(args):
    from .sim import run_scenario, write_outputs

    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    res = run_scenario(cfg)
    csv_path, meta_path = write_outputs(res, cfg, out)
    print(f"wrote {csv_path}")
    print(f"wrote {meta_path}")
    for k, v in res.metrics.items():
        print(f"{k}: {v}")
    if not res.ok:
        print(f"simulation failed: {res.failure}", file=sys.stderr)
        return EXIT_SIM
    return EXIT_OK


def _parse_sweep(specs):
    """``["a.b=1,2", "c.d=x"]`` -> list of override lists (cartesian product)."""
    axes = []
    for spec in specs:
        if "=" not in spec:
            raise ConfigError(f"sweep axis {spec!r} is not of the form key=v1,v2,...")
        key, values = spec.split("=", 1)
        axes.append([f"{key}={v}" for v in values.split(",")])
    return [list(combo) for combo in itertools.product(*axes)]


def _sweep_worker(job):
    from .sim import run_scenario, write_outputs

    index, base, overrides, out = job
    cfg = SimConfig.from_dict(base, overrides)
    res = run_scenario(cfg)
    scen_dir = os.path.join(out, f"scenario_{index:03d}")
    write_outputs(res, cfg, scen_dir)
    return index, overrides, res.metrics, res.failure


def cmd_sweep(args):
    from .sim import atomic_write_text

    cfg = _load_config(args)
    combos = _parse_sweep(args.vary)
    for combo in combos:  # fail fast on bad keys or values before spawning workers
        cfg.with_overrides(combo).validate()
    out = _out_dir(args, cfg)
    os.makedirs(out, exist_ok=True)
    jobs = [(i, cfg.data, combo, out) for i, combo in enumerate(combos)]
    if args.jobs == 1:
        results = [_sweep_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    results.sort(key=lambda r: r[0])
    keys = sorted({k for _, _, m, _ in results for k in m})
    lines = ["scenario,overrides," + ",".join(keys) + ",failure"]
    failed = False
    for i, combo, metrics, failure in results:
        failed |= failure is not None
        vals = ",".join(repr(float(metrics[k])) if k in metrics else "" for k in keys)
        lines.append(f"{i},{' '.join(combo)},{vals},{failure or ''}")
        print(f"scenario_{i:03d} {' '.join(combo)}: "
              f"rms_pos={metrics.get('rms_position_error', float('nan')):.4g} "
              f"failure={failure}")
    atomic_write_text(os.path.join(out, "sweep_summary.csv"), "\n".join(lines) + "\n")
    return EXIT_SIM if failed else EXIT_OK


def cmd_verify(args):
    from .verification import run_group

    cfg = _load_config(args) if (args.config or args.set) else None
    results = run_group(args.target, cfg)
    for r in results:
        print(r.line())
    if args.json:
        from .sim import atomic_write_text

        payload = [{"name": r.name, "value": float(r.value), "tolerance": float(r.tolerance),
                    "passed": bool(r.passed), "detail": r.detail, "runtime": float(r.runtime)}
                   for r in results]
        atomic_write_text(args.json, json.dumps(payload, indent=2))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def cmd_plotdata(args):
    from .plotting import (aero_dominant_frequency, settling_report, write_gen_forces,
                           write_tracking)
    from .sim import TrajectoryLog, run_scenario, write_outputs

    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    if args.input:
        try:
            tl = TrajectoryLog.from_csv(args.input)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read trajectory log {args.input}: {exc}") from exc
        if len(tl) == 0:
            raise ConfigError(f"trajectory log {args.input} has no rows")
    else:
        res = run_scenario(cfg)
        write_outputs(res, cfg, out)
        if not res.ok:
            print(f"simulation failed: {res.failure}", file=sys.stderr)
            return EXIT_SIM
        tl = res.log
    window = float(cfg.data["acceptance"]["window"])
    if args.kind == "gen-forces":
        paths = write_gen_forces(tl, out)
        name, f, df = aero_dominant_frequency(tl, window)
        print(f"aerodynamic dominant frequency ({name}): {f:.4g} Hz (bin {df:.3g} Hz); "
              f"gait {cfg.gait_params().frequency:g} Hz")
    else:
        paths = write_tracking(tl, out)
        acc = cfg.data["acceptance"]
        for ch, rep in settling_report(tl, window, acc["rms_position_max"], acc["max_attitude_deg"]).items():
            print(f"{ch}: max |error| {rep['max_error']:.4g} (band {rep['band']:.4g}) "
                  f"{'settled' if rep['settled'] else 'NOT settled'}")
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def build_parser():
    p = _Parser(prog="aeroguard", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("-c", "--config", help="YAML scenario file (defaults apply otherwise)")
        sp.add_argument("-s", "--set", action="append", metavar="KEY=VALUE",
                        help="override a config value, e.g. observer.omega0=20")
        sp.add_argument("-o", "--out", help=f"output directory (default ${OUTPUT_ENV} or ./aeroguard-output)")

    sp = sub.add_parser("run", help="run one closed-loop scenario")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="run a grid of scenarios in parallel")
    common(sp)
    sp.add_argument("--vary", action="append", required=True, metavar="KEY=V1,V2,...",
                    help="sweep axis; repeat for a cartesian product")
    sp.add_argument("-j", "--jobs", type=int, default=os.cpu_count() or 1)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("verify", help="run property checks")
    common(sp)
    sp.add_argument("target", choices=["aero-oracle", "conservation", "observer", "closed-loop", "all"])
    sp.add_argument("--json", help="also write results as JSON")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("plotdata", help="tidy CSV plus PNG for the result figures")
    common(sp)
    sp.add_argument("kind", choices=["gen-forces", "tracking"])
    sp.add_argument("-i", "--input", help="existing trajectory CSV (otherwise the scenario is run)")
    sp.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
