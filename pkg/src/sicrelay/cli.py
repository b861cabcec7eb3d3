"""Command-line front end.

Every file the tool writes gets a JSON manifest next to it (``<file>.manifest.json``)
holding the command, the fully resolved options and scenario, the seed and the
tool version. ``sicrelay rerun <manifest>`` replays it and reproduces the file
byte for byte, whatever worker count is used.

Exit codes: 0 success, 1 validation failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__, validation
from .analytic import MAX_ENUMERATED_RELAYS, end_to_end_outage
from .config import ConfigError, ScenarioConfig, db_to_linear, load_config
from .dmt import diversity, empirical_slope
from .montecarlo import simulate, sweep
from .preselect import Topology, random_topology, relay_weights, select, worst_subset
from .rng import SeedSpec

log = logging.getLogger("sicrelay")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
SWEEP_COLUMNS = ("gamma_db", "pout_sim_s1", "ci_s1", "pout_analytic_s1", "pout_sim_s2", "ci_s2", "trials")
MANIFEST_SUFFIX = ".manifest.json"


class UsageError(Exception):
    pass


def parse_snr_grid(text: str) -> List[float]:
    """``start:step:stop`` (stop included) or a single value, in dB."""
    parts = text.split(":")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"bad SNR grid {text!r}; expected start:step:stop in dB") from None
    if len(values) == 1:
        return values
    if len(values) != 3:
        raise UsageError(f"bad SNR grid {text!r}; expected start:step:stop in dB")
    start, step, stop = values
    if step <= 0 or stop < start:
        raise UsageError(f"bad SNR grid {text!r}; need step > 0 and stop >= start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(n)]


def parse_window(text: str):
    try:
        lo, hi = (float(p) for p in text.split(":"))
    except ValueError:
        raise UsageError(f"bad window {text!r}; expected lo:hi in dB") from None
    if hi <= lo:
        raise UsageError(f"bad window {text!r}; need lo < hi")
    return lo, hi


def parse_rates(text: str):
    try:
        r1, r2 = (float(p) for p in text.split(","))
    except ValueError:
        raise UsageError(f"bad rates {text!r}; expected R1,R2") from None
    return r1, r2


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


# ---------------------------------------------------------------------------
# manifests

def manifest_path(out: Path) -> Path:
    return out.with_name(out.name + MANIFEST_SUFFIX)


def write_manifest(out: Path, command: str, options: dict, config: Optional[ScenarioConfig],
                   master_seed: int) -> Path:
    data = {
        "command": command,
        "tool_version": __version__,
        "master_seed": int(master_seed),
        "options": options,
        "config": config.to_dict() if config is not None else None,
        "outputs": [out.name],  # relative to the manifest's directory
    }
    path = manifest_path(out)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


# ---------------------------------------------------------------------------
# sweep

def sweep_csv(config: ScenarioConfig, gammas_db: Sequence[float], trials: int, workers: int = 1,
              analytic: bool = True) -> str:
    rows = sweep(config, gammas_db, workers=workers, analytic=analytic, trials=trials)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        an = row.analytic_s1.p_hat if row.analytic_s1 is not None else None
        w.writerow([_fmt(row.gamma_db), _fmt(row.sim_s1.p_hat), _fmt(row.sim_s1.ci_half_width), _fmt(an),
                    _fmt(row.sim_s2.p_hat), _fmt(row.sim_s2.ci_half_width), str(row.sim_s1.trials)])
    return buf.getvalue()


def run_sweep(config: ScenarioConfig, options: dict, out: Optional[Path], workers: int) -> int:
    text = sweep_csv(config, options["snr_db"], options["trials"], workers, options["analytic"])
    if out is None:
        sys.stdout.write(text)
        return EXIT_OK
    _write_text(out, text)
    write_manifest(out, "sweep", options, config, config.master_seed)
    print(f"wrote {out} ({len(options['snr_db'])} rows)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    if args.snr_db is not None:
        grid = parse_snr_grid(args.snr_db)
    elif config.snr_db:
        grid = [float(x) for x in config.snr_db]
    else:
        raise UsageError("no SNR grid: pass --snr-db or set simulation.snr_db in the config")
    trials = int(args.trials or config.trials)
    if trials < 1:
        raise UsageError("--trials must be positive")
    options = {"snr_db": grid, "trials": trials, "analytic": not args.no_analytic}
    out = Path(args.out) if args.out else None
    return run_sweep(config, options, out, args.workers)


# ---------------------------------------------------------------------------
# validate

def cmd_validate(args) -> int:
    if args.trials is not None and args.trials < 100:
        raise UsageError("--trials must be at least 100")
    results = validation.run_validation(args.grid, args.trials)
    width = max(len(r.check_name) for r in results)
    for r in results:
        print(f"{r.status.upper():4}  {r.check_name:<{width}}  measured={r.measured:.3e}  "
              f"tolerance={r.tolerance:.3e}")
    report = [r.to_dict() for r in results]
    if args.json:
        _write_text(Path(args.json), json.dumps(report, indent=2) + "\n")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_FAILED if failed else EXIT_OK


# ---------------------------------------------------------------------------
# dmt

def dmt_curve(config: ScenarioConfig, window, step: float):
    lo, hi = window
    gammas_db = parse_snr_grid(f"{lo}:{step}:{hi}")
    seed = SeedSpec(config.master_seed)
    return [(float(db_to_linear(db)), end_to_end_outage(config, float(db_to_linear(db)), seed=seed).p_hat)
            for db in gammas_db]


def cmd_dmt(args) -> int:
    config = load_config(args.config)
    window = parse_window(args.window)
    n = len(config.active)
    if n > MAX_ENUMERATED_RELAYS:
        raise UsageError(f"the analytic curve supports at most {MAX_ENUMERATED_RELAYS} relays, got {n}")
    if args.step <= 0:
        raise UsageError("--step must be positive")
    if len(parse_snr_grid(f"{window[0]}:{args.step}:{window[1]}")) < 4:
        raise UsageError(f"window {args.window} with step {args.step} dB gives fewer than 4 points")
    curve = dmt_curve(config, window, args.step)
    for g, p in curve:
        print(f"{10 * math.log10(g):7.2f} dB  Pout_S1={p:.6e}")
    try:
        slope = empirical_slope(curve, window)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    d0 = diversity(0.0, n, config.n_slots)
    print(f"fitted slope      {slope:.4f}")
    print(f"theoretical d(0)  {d0:g}")
    print(f"relative error    {abs(slope - d0) / d0:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# preselect

def _subset_sim_outage(topology: Topology, subset, R1, R2, gamma, trials, master_seed, workers):
    cfg = topology.scenario(R1, R2, subset, trials=trials, master_seed=master_seed)
    res = simulate(cfg, gamma, trials, workers)
    return 0.5 * (res.s1.p_hat + res.s2.p_hat), max(res.s1.ci_half_width, res.s2.ci_half_width)


def run_preselect(options: dict, out: Optional[Path], workers: int) -> int:
    n, k = options["n_relays"], options["n_used"]
    if not 1 <= k <= n:
        raise UsageError(f"--n-used must lie in [1, --n-relays={n}], got {k}")
    R1, R2 = options["rates"]
    if options.get("topology"):
        try:
            topology = Topology.load(options["topology"])
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot load topology {options['topology']}: {exc}") from None
        if topology.n_relays != n:
            raise UsageError(f"topology has {topology.n_relays} relays, --n-relays is {n}")
    else:
        topology = random_topology(n, SeedSpec(options["seed"]))
    gamma = float(db_to_linear(options["ref_snr_db"]))
    weights = relay_weights(topology, R1, R2, k, gamma)
    result = select(weights, k)
    h, fm = topology.h_mean, topology.f_mean
    print(f"{'relay':>5} {'x':>8} {'y':>8} {'E|h1|^2':>10} {'E|h2|^2':>10} {'E|f|^2':>10} {'weight':>10}  chosen")
    for r in range(n):
        x, y = topology.relays[r]
        mark = "*" if r in result.chosen else ""
        print(f"{r:>5} {x:8.4f} {y:8.4f} {h[0, r]:10.4g} {h[1, r]:10.4g} {fm[r]:10.4g} {weights[r]:10.6f}  {mark}")
    print("chosen: " + " ".join(str(r) for r in result.chosen))
    print(f"objective: {result.objective:.6f}")
    if options["evaluate"]:
        worst = worst_subset(weights, k)
        trials, seed = options["eval_trials"], options["seed"]
        p_c, ci_c = _subset_sim_outage(topology, result.chosen, R1, R2, gamma, trials, seed, workers)
        p_w, ci_w = _subset_sim_outage(topology, worst, R1, R2, gamma, trials, seed, workers)
        print(f"Pout chosen {result.chosen}: {p_c:.6e} +/- {ci_c:.1e}")
        print(f"Pout worst  {worst}: {p_w:.6e} +/- {ci_w:.1e}")
        print(f"chosen <= worst: {'yes' if p_c <= p_w else 'no'}")
    if out is not None:
        _write_text(out, topology.to_csv())
        write_manifest(out, "preselect", options, None, options["seed"])
        print(f"wrote {out}")
    return EXIT_OK


def cmd_preselect(args) -> int:
    options = {
        "n_relays": args.n_relays, "n_used": args.n_used, "seed": args.seed,
        "ref_snr_db": args.ref_snr_db, "rates": list(parse_rates(args.rates)),
        "evaluate": args.evaluate, "eval_trials": args.eval_trials,
        "topology": str(args.topology) if args.topology else None,
    }
    if args.n_relays < 1:
        raise UsageError("--n-relays must be positive")
    out = Path(args.save_topology) if args.save_topology else None
    return run_preselect(options, out, args.workers)


# ---------------------------------------------------------------------------
# rerun

def cmd_rerun(args) -> int:
    path = Path(args.manifest)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read manifest {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"manifest {path} is not valid JSON: {exc}") from None
    command = data.get("command")
    out = Path(args.out) if args.out else path.parent / data["outputs"][0]
    if data.get("tool_version") != __version__:
        log.warning("manifest written by version %s, running %s", data.get("tool_version"), __version__)
    if command == "sweep":
        config = ScenarioConfig.from_dict(data["config"])
        return run_sweep(config, data["options"], out, args.workers)
    if command == "preselect":
        return run_preselect(data["options"], out, args.workers)
    raise UsageError(f"manifest {path} has unknown command {command!r}")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sicrelay", description="Two-source multi-relay SIC outage simulator.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", help="outage versus SNR, simulated and analytic")
    s.add_argument("config", help="scenario YAML file")
    s.add_argument("--snr-db", help="grid as start:step:stop in dB (default: from config)")
    s.add_argument("--trials", type=int, help="simulated trials per point (default: from config)")
    s.add_argument("--out", help="CSV output path (default: stdout, no manifest)")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--no-analytic", action="store_true", help="skip the event-enumeration column")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", help="closed-form and identity self-checks")
    v.add_argument("--grid", choices=("small", "full"), default="small")
    v.add_argument("--trials", type=int, help="Monte Carlo draws per grid point")
    v.add_argument("--json", help="write the JSON report here")
    v.set_defaults(func=cmd_validate)

    d = sub.add_parser("dmt", help="fit the high-SNR diversity slope of the analytic curve")
    d.add_argument("config", help="scenario YAML file")
    d.add_argument("--window", default="35:55", help="fit window lo:hi in dB")
    d.add_argument("--step", type=float, default=2.5, help="grid step in dB")
    d.set_defaults(func=cmd_dmt)

    r = sub.add_parser("preselect", help="choose relays on a random path-loss topology")
    r.add_argument("--n-relays", type=int, required=True)
    r.add_argument("--n-used", type=int, required=True)
    r.add_argument("--seed", type=int, default=1)
    r.add_argument("--ref-snr-db", type=float, default=20.0)
    r.add_argument("--rates", default="2,2", help="R1,R2 in bits/symbol")
    r.add_argument("--evaluate", action="store_true", help="simulate chosen versus worst subset")
    r.add_argument("--eval-trials", type=int, default=200_000)
    r.add_argument("--topology", help="load topology CSV instead of drawing one")
    r.add_argument("--save-topology", help="write the topology CSV (with manifest) here")
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=cmd_preselect)

    m = sub.add_parser("rerun", help="replay a manifest")
    m.add_argument("manifest")
    m.add_argument("--out", help="write here instead of the recorded path")
    m.add_argument("--workers", type=int, default=1)
    m.set_defaults(func=cmd_rerun)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "workers", 1) < 1:
        print("sicrelay: error: --workers must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"sicrelay: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
