"""Command-line driver.

    berknash solve        value function and optimal actions of the true MDP
    berknash equilibrium  Berk-Nash, exhaustive-learning or perfect equilibria
    berknash learn        simulate Bayesian learners and summarize their limits
    berknash report       compare recorded runs of the presets with their oracles
    berknash export       write a preset as a model file

Exit codes: 0 success, 1 input error, 2 search found nothing, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
import warnings

import numpy as np

from . import __version__
from .equilibrium import (SearchConfig, Tolerances, find_equilibria, perfect_equilibria,
                          perturbed_equilibria)
from .learning import (POLICY_MODES, concentration_diagnostic, detect_stability, simulate_many,
                       stable_certificate, trace_csv)
from .mdp import optimal_action_sets, q_values, value_iteration
from .model import FiniteSmdp
from .modelfile import ModelFileError, format_model, read_model
from .parallel import ENV_THREADS, array_digest

EXIT_OK, EXIT_INPUT, EXIT_NONE_FOUND, EXIT_NUMERICAL = 0, 1, 2, 3


class InputError(ValueError):
    pass


# ---------------------------------------------------------------- helpers


def _fmt(v) -> str:
    return repr(float(v))


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _write(out_dir: str, name: str, text: str) -> str:
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return name


def _load(args) -> tuple:
    """Model and preset name (None for model files)."""
    if args.preset:
        from .examples.presets import get_preset
        try:
            return get_preset(args.preset).build(), args.preset
        except KeyError as exc:
            raise InputError(str(exc.args[0])) from None
    try:
        return read_model(args.model), None
    except OSError as exc:
        raise InputError(f"cannot read model file: {exc}") from None


def _parse_seeds(text: str) -> list:
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                lo, hi = part.split("-", 1)
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise InputError(f"bad seed list {text!r}") from None
    if not seeds or min(seeds) < 0:
        raise InputError(f"bad seed list {text!r}")
    return seeds


def _parse_prior(text: str, smdp: FiniteSmdp) -> np.ndarray:
    if text == "uniform":
        return np.full(smdp.n_theta, 1.0 / smdp.n_theta)
    try:
        mu = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise InputError(f"bad prior {text!r}") from None
    if mu.shape != (smdp.n_theta,):
        raise InputError(f"prior has {mu.size} weights, the parameter grid has {smdp.n_theta} points")
    if np.any(mu <= 0) or abs(mu.sum() - 1.0) > 1e-12:
        raise InputError("prior must be a full-support probability vector")
    return mu / mu.sum()


def _run_record(args, smdp, preset, seeds, started, outputs, results) -> dict:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out")}
    blob = json.dumps(config, sort_keys=True).encode()
    digest = array_digest(smdp.base.kernel, smdp.base.payoff, smdp.family, smdp.theta_grid)
    return {
        "command": args.command,
        "config": config,
        "config_hash": hashlib.sha256(blob + str(digest).encode()).hexdigest()[:16],
        "model_digest": digest,
        "preset": preset,
        "seeds": seeds,
        "wall_time_s": round(time.time() - started, 3),
        "version": __version__,
        "outputs": outputs,
        "results": results,
    }


def _finish(args, record) -> None:
    _write(args.out, "run.json", json.dumps(record, indent=2, sort_keys=True) + "\n")


def _tolerances(args) -> Tolerances:
    return Tolerances(optimality=args.tol_optimality, belief=args.tol_belief, stationarity=args.tol_stationarity)


# ---------------------------------------------------------------- commands


def cmd_solve(args) -> int:
    started = time.time()
    smdp, preset = _load(args)
    mdp = smdp.base
    v = value_iteration(mdp, args.tol)
    q = q_values(mdp, v)
    sets = optimal_action_sets(mdp, args.tol_opt, v)
    values = _csv([[s, _fmt(v.values[i])] for i, s in enumerate(mdp.states)], ["state", "value"])
    rows = [[mdp.states[s], mdp.actions[x], _fmt(q[s, x]), int(sets.mask[s, x])] for s, x in mdp.pairs]
    qcsv = _csv(rows, ["state", "action", "qvalue", "is_optimal"])
    outputs = [_write(args.out, "values.csv", values), _write(args.out, "qvalues.csv", qcsv)]
    _finish(args, _run_record(args, smdp, preset, [], started, outputs,
                              {"values": [float(x) for x in v.values]}))
    sys.stdout.write(values)
    return EXIT_OK


def _certificate_tables(smdp, certs) -> tuple:
    base = smdp.base
    strat, outcomes, beliefs = [], [], []
    for k, c in enumerate(certs):
        for s, x in base.pairs:
            strat.append([k, base.states[s], base.actions[x], _fmt(c.sigma[s, x])])
            outcomes.append([k, base.states[s], base.actions[x], _fmt(c.m[s, x])])
        for i in c.support():
            beliefs.append([k, int(i)] + [_fmt(t) for t in c.theta_grid[i]] + [_fmt(c.mu[i])])
    dim = smdp.theta_grid.shape[1]
    return (_csv(strat, ["certificate", "state", "action", "probability"]),
            _csv(outcomes, ["certificate", "state", "action", "mass"]),
            _csv(beliefs, ["certificate", "theta_index"] + [f"theta_{j}" for j in range(dim)] + ["weight"]))


def cmd_equilibrium(args) -> int:
    started = time.time()
    smdp, preset = _load(args)
    config = SearchConfig(restarts=args.restarts, seed=args.seed, tolerances=_tolerances(args),
                          threads=args.threads)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if args.mode == "perfect":
            certs = perfect_equilibria(smdp, config)
        elif args.epsilon > 0:
            certs = perturbed_equilibria(smdp, args.epsilon, config)
        else:
            certs = find_equilibria(smdp, config)
        if args.mode == "exhaustive":
            certs = [c for c in certs if c.exhaustive_learning]
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    records = "\n\n".join(f"[certificate {k}]\n{c.to_record()}" for k, c in enumerate(certs))
    strat, outcomes, beliefs = _certificate_tables(smdp, certs)
    outputs = [_write(args.out, "certificates.txt", records + ("\n" if records else "")),
               _write(args.out, "strategies.csv", strat),
               _write(args.out, "outcomes.csv", outcomes),
               _write(args.out, "beliefs.csv", beliefs)]
    results = [{"sigma": c.sigma.tolist(), "m": c.m.tolist(),
                "belief_mean": (c.mu @ c.theta_grid).tolist(),
                "exhaustive_learning": bool(c.exhaustive_learning)} for c in certs]
    _finish(args, _run_record(args, smdp, preset, [args.seed], started, outputs, results))
    print(f"{len(certs)} certificate(s) ({args.mode})")
    for k, c in enumerate(certs):
        print(f"  [{k}] exhaustive={c.exhaustive_learning} residuals="
              f"{c.residual_optimality:.2e}/{c.residual_belief:.2e}/{c.residual_stationarity:.2e}")
    if not certs:
        print("search exhausted without a certificate", file=sys.stderr)
        return EXIT_NONE_FOUND
    return EXIT_OK


GNUPLOT = """# gnuplot recipe for the trace CSVs written by 'berknash learn'
set datafile separator ','
set key autotitle columnhead outside
set xlabel 't'
set logscale x
set multiplot layout 2,1
set ylabel 'belief'
plot for [c={first_belief}:{last_belief}] '{trace}' using ($1+1):c with lines
set ylabel 'outcome frequency'
plot for [c={first_m}:{last_m}] '{trace}' using ($1+1):c with lines
unset multiplot
"""


def cmd_learn(args) -> int:
    started = time.time()
    smdp, preset = _load(args)
    seeds = _parse_seeds(args.seeds)
    prior = _parse_prior(args.prior, smdp)
    if args.horizon < 0:
        raise InputError("horizon must be nonnegative")
    traces = simulate_many(smdp, prior, args.policy, args.horizon, seeds,
                           grid_resolution=args.grid_resolution)
    tols = _tolerances(args)
    base = smdp.base
    outputs, rows, results = [], [], []
    for tr in traces:
        outputs.append(_write(args.out, f"trace_seed{tr.seed}.csv", trace_csv(tr, args.every)))
        verdict = detect_stability(tr, args.window, args.stability_tol)
        verifies = ""
        if verdict.stable:
            verifies = int(stable_certificate(smdp, verdict, tols).accepted)
        conc = concentration_diagnostic(tr) if tr.length > 0 else []
        first = base.actions[tr.actions[0]] if tr.length else ""
        last_conc = conc[-1] if conc else None
        rows.append([tr.seed, tr.length, int(tr.aborted), first, int(verdict.stable),
                     "" if verdict.exhaustive is None else int(verdict.exhaustive), verifies,
                     "" if last_conc is None else last_conc.t,
                     "" if last_conc is None else _fmt(last_conc.mass)])
        results.append({"seed": tr.seed, "periods": tr.length, "first_action": first,
                        "stable": bool(verdict.stable), "exhaustive": verdict.exhaustive,
                        "verifies": None if verifies == "" else bool(verifies),
                        "concentration": [[r.t, r.mass] for r in conc]})
    header = ["seed", "periods", "aborted", "action_t0", "stable", "exhaustive", "verifies_berk_nash",
              "concentration_t", "concentration_mass"]
    summary = _csv(rows, header)
    outputs.append(_write(args.out, "summary.csv", summary))
    n_belief = smdp.n_theta if smdp.n_theta <= 16 else 7
    recipe = GNUPLOT.format(first_belief=4, last_belief=3 + n_belief, first_m=4 + n_belief,
                            last_m=3 + n_belief + len(base.pairs), trace=f"trace_seed{seeds[0]}.csv")
    outputs.append(_write(args.out, "plot.gp", recipe))
    record = _run_record(args, smdp, preset, seeds, started, outputs, results)
    record["prior"] = prior.tolist()
    _finish(args, record)
    sys.stdout.write(summary)
    return EXIT_OK


def _report_rows(record) -> list:
    """``(quantity, oracle, computed, tol)`` rows for a run of a known preset."""
    from .examples.presets import get_preset
    preset, command, results = record.get("preset"), record.get("command"), record.get("results")
    if preset is None:
        return []
    params = get_preset(preset).params
    rows = []
    if preset == "monopoly-default" and command == "equilibrium":
        from .examples.monopoly import monopoly_oracle
        o = monopoly_oracle(params)
        targets = [o.sigma_star] if record["config"].get("mode") == "perfect" else sorted({0.0, o.sigma_star, 1.0})
        for k, r in enumerate(results):
            sigma_h = float(np.mean(np.asarray(r["sigma"])[:, 1]))
            target = min(targets, key=lambda t: abs(t - sigma_h))
            rows.append((f"sigma_H[{k}]", target, sigma_h, 1e-4))
    elif preset == "search-default" and command == "equilibrium":
        from .examples.search import search_oracle, strategy_cell, threshold_cell
        cell = threshold_cell(params, search_oracle(params).w_M)
        for k, r in enumerate(results):
            rows.append((f"reservation_cell[{k}]", cell, strategy_cell(np.asarray(r["sigma"])), 1))
    elif preset == "growth-default" and command == "equilibrium":
        from .examples.growth import growth_oracle
        beta_m = growth_oracle(params).beta_M()
        for k, r in enumerate(results):
            rows.append((f"beta[{k}]", beta_m, r["belief_mean"][1], 1e-3))
    elif preset == "experimentation-075" and command == "learn":
        mu0 = record["prior"][1]
        for r in results:
            if r["periods"]:
                expected = 1.0 if 1 / 3 <= mu0 <= 2 / 3 else 0.0
                rows.append((f"chooses_S_t0[seed {r['seed']}]", expected, float(r["first_action"] == "S"), 0))
    elif command == "learn":
        for r in results:
            if r["concentration"]:
                rows.append((f"concentration[seed {r['seed']}]", 1.0, r["concentration"][-1][1], 1e-2))
    return rows


def cmd_report(args) -> int:
    rows = []
    for path in args.runs:
        try:
            with open(path, encoding="utf-8") as fh:
                record = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read run record {path}: {exc}") from None
        for quantity, oracle, computed, tol in _report_rows(record):
            err = abs(float(computed) - float(oracle))
            rows.append([record.get("preset"), quantity, _fmt(oracle), _fmt(computed), _fmt(err), _fmt(tol),
                         int(err <= tol)])
    text = _csv(rows, ["preset", "quantity", "oracle", "computed", "abs_err", "tol", "pass"])
    _write(args.out, "report.csv", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_export(args) -> int:
    smdp, _ = _load(args)
    text = format_model(smdp)
    if args.file == "-":
        sys.stdout.write(text)
    else:
        with open(args.file, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_model(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--model", help="model file")
    g.add_argument("--preset", help="named example model")


def _add_tolerances(p):
    p.add_argument("--tol-optimality", type=float, default=1e-7)
    p.add_argument("--tol-belief", type=float, default=1e-7)
    p.add_argument("--tol-stationarity", type=float, default=1e-9)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="berknash", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the true MDP")
    _add_model(p)
    p.add_argument("--tol", type=float, default=1e-10, help="value iteration tolerance")
    p.add_argument("--tol-opt", type=float, default=1e-9, help="Q-value slack for optimal actions")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("equilibrium", help="search for equilibria")
    _add_model(p)
    p.add_argument("--mode", choices=("berk-nash", "exhaustive", "perfect"), default="berk-nash")
    p.add_argument("--epsilon", type=float, default=0.0, help="perturbation for berk-nash/exhaustive modes")
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${ENV_THREADS} or 1)")
    _add_tolerances(p)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("learn", help="simulate Bayesian learning")
    _add_model(p)
    p.add_argument("--policy", choices=POLICY_MODES, default="belief-optimal")
    p.add_argument("--horizon", type=int, default=1000)
    p.add_argument("--seeds", default="0", help="comma list and ranges, e.g. 0-9,20")
    p.add_argument("--prior", default="uniform", help="'uniform' or comma-separated weights")
    p.add_argument("--grid-resolution", type=int, default=20, help="belief grid resolution (belief-optimal)")
    p.add_argument("--every", type=int, default=1, help="write every k-th period to the trace CSV")
    p.add_argument("--window", type=int, default=None, help="stability window (default last 10%%)")
    p.add_argument("--stability-tol", type=float, default=1e-3)
    p.add_argument("--tol-optimality", type=float, default=1e-4)
    p.add_argument("--tol-belief", type=float, default=1e-4)
    p.add_argument("--tol-stationarity", type=float, default=5e-3)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("report", help="compare run records with the example oracles")
    p.add_argument("runs", nargs="+", help="run.json files")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("export", help="write a model file")
    _add_model(p)
    p.add_argument("file", help="output path, or - for stdout")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "out", None):
            os.makedirs(args.out, exist_ok=True)
        return args.func(args)
    except (ModelFileError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
