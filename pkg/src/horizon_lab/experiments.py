"""Experiment orchestration: dispatch, output files, and summaries."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from . import chain, diagnostics, governance, kernel_dynamics as kd, scaling, twhsf
from .config import ExperimentConfig
from .errors import IntegrityError, InvalidInputError
from .persist import RunWriter, load_manifest, utc_now
from .seeding import derive_rng


def run_experiment(config: ExperimentConfig, out_dir, jobs: int = 1) -> dict:
    """Execute one experiment and persist its outputs atomically."""
    runner = _RUNNERS[config.kind]
    writer = RunWriter(out_dir)
    started = utc_now()
    headline = runner(config, writer, jobs)
    manifest = writer.promote(
        {
            "kind": config.kind,
            "master_seed": config.master_seed,
            "config": config.snapshot(),
            "headline": headline,
            "started_utc": started,
            "finished_utc": utc_now(),
        }
    )
    return manifest


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------

def _trace_rows(trace: kd.AdvantageTrace):
    se = trace.stderr if trace.stderr is not None else np.zeros(len(trace))
    return [(int(t), float(r), float(s)) for t, r, s in zip(trace.t, trace.rho, se)]


def _run_kernel(config: ExperimentConfig, writer: RunWriter, jobs: int) -> dict:
    p = config.params
    tau, floor = p["tau"], p["floor"]
    if p["model"] == "matrix":
        kernel = kd.FiniteMatrixKernel(np.array(p["rows"], dtype=float))
        pair = kd.HypothesisPair(np.array(p["p0"], dtype=float), np.array(p["q0"], dtype=float))
        pairs = kd.propagate(kernel, pair, p["steps"])
        trace = kd.advantage_trace_from_pairs(pairs)
        extra = {"dobrushin": kd.dobrushin_coefficient(kernel)}
    elif p["model"] == "ar":
        kernel = kd.GaussianARKernel(p["a"], p["sigma"])
        z0 = tuple(p["z0"])
        trace = kd.simulate_ar_chain(kernel, z0, p["horizon"], p["trials"], config.master_seed)
        exact = kd.ar_exact_trace(kernel, z0, p["horizon"])
        writer.add_csv("trace_exact.csv", ["t", "rho", "stderr"], _trace_rows(exact))
        # reference gamma: the exact trace processed with the Monte-Carlo
        # fit's window and precision weights, so the 5% check isolates
        # sampling error rather than window placement
        mc_fit = kd.fit_exponential_decay(trace, tau, floor)
        reference = kd.AdvantageTrace(exact.t, exact.rho, trace.stderr)
        extra = {
            "exact_gamma_reference": kd.fit_exponential_decay(
                reference, tau, floor, window=mc_fit.window
            ).gamma
        }
    else:
        trace = kd.geometric_trace(p["eta"], p["delta0"], p["horizon"])
        extra = {}
    fit = kd.fit_exponential_decay(trace, tau, floor)
    writer.add_csv("trace.csv", ["t", "rho", "stderr"], _trace_rows(trace))
    writer.add_json("fit.json", fit.to_json_dict())
    return {"model": p["model"], **fit.to_json_dict(), **extra}


# ---------------------------------------------------------------------------
# trackb
# ---------------------------------------------------------------------------

def _run_trackb(config: ExperimentConfig, writer: RunWriter, jobs: int) -> dict:
    p = config.params
    cfg = scaling.ScalingConfig(
        horizons=tuple(p["horizons"]),
        action_count=p["action_count"],
        trials_per_point=p["trials_per_point"],
        alias_epsilon=p["alias_epsilon"],
        observation_alphabet_size=p["observation_alphabet_size"],
        segment_length=p["segment_length"],
        segment_count=p["segment_count"],
        p_drop=p["p_drop"],
        episode_cap=p["episode_cap"],
        confidence_delta=p["confidence_delta"],
        seed=config.master_seed,
    )
    samples_by = scaling.collect_samples(cfg, jobs=jobs)
    curves = scaling.build_scaling_curve(cfg, samples=samples_by)
    trial_rows = []
    for condition in ("unstructured", "structured"):
        for L in cfg.horizons:
            samples = samples_by[condition][L]
            for trial, (count, capped) in enumerate(zip(samples.episodes, samples.capped)):
                trial_rows.append((condition, L, trial, int(count), bool(capped)))
    writer.add_csv("trials.csv", ["condition", "L", "trial", "episodes", "capped"], trial_rows)
    curve_rows = []
    for curve in curves:
        theory = dict(curve.theoretical_reference)
        for point in curve.points:
            curve_rows.append(
                (
                    curve.condition,
                    point.horizon,
                    point.median_episodes,
                    point.iqr_low,
                    point.iqr_high,
                    point.capped_fraction,
                    theory[point.horizon],
                )
            )
    writer.add_csv(
        "curve.csv",
        ["condition", "L", "median_episodes", "iqr_low", "iqr_high", "capped_fraction", "theory_reference"],
        curve_rows,
    )
    summary = {
        "action_count": cfg.action_count,
        "log_action_count": math.log(cfg.action_count),
        "conditions": {
            curve.condition: {
                "log_slope": curve.log_slope,
                "points": [
                    {
                        "L": pt.horizon,
                        "median": pt.median_episodes,
                        "iqr": [pt.iqr_low, pt.iqr_high],
                        "capped_fraction": pt.capped_fraction,
                    }
                    for pt in curve.points
                ],
            }
            for curve in curves
        },
    }
    writer.add_json("summary.json", summary)
    return {
        "unstructured_slope": curves[0].log_slope,
        "structured_slope": curves[1].log_slope,
        "log_action_count": math.log(cfg.action_count),
    }


# ---------------------------------------------------------------------------
# chain
# ---------------------------------------------------------------------------

def _run_chain(config: ExperimentConfig, writer: RunWriter, jobs: int) -> dict:
    p = config.params
    conditions = [("baseline", None)]
    if p["reset_period"] is not None:
        if p["compare_baseline"]:
            conditions.append(("reset", p["reset_period"]))
        else:
            conditions = [("reset", p["reset_period"])]
    episode_rows = []
    profile = {}
    for name, period in conditions:
        for L in p["lengths"]:
            cfg = chain.ChainConfig(
                length=L,
                policy_noise=p["policy_noise"],
                sticky_p=p["sticky_p"],
                reset_period=period,
                max_steps=p["max_steps"],
                trials=p["trials"],
                seed=config.master_seed,
            )
            success, steps, backward = chain.run_batch_on_streams(cfg, chain.batch_streams(cfg))
            for trial in range(cfg.trials):
                episode_rows.append(
                    (name, L, trial, bool(success[trial]), int(steps[trial]), int(backward[trial]))
                )
            wins = int(success.sum())
            lo, hi = chain.wilson_interval(wins, cfg.trials)
            entry = {"success_rate": wins / cfg.trials, "ci99": [lo, hi], "trials": cfg.trials}
            if p["exact"] and (L + 1) * cfg.step_budget <= 200_000:
                entry["exact"] = chain.exact_success_probability(cfg)
            profile.setdefault(name, {})[str(L)] = entry
    writer.add_csv(
        "episodes.csv",
        ["config_id", "L", "trial", "success", "steps", "backward_steps"],
        episode_rows,
    )
    writer.add_json(
        "profile.json",
        {
            "policy_noise": p["policy_noise"],
            "sticky_p": p["sticky_p"],
            "reset_period": p["reset_period"],
            "profile": profile,
        },
    )
    first = next(iter(profile.values()))
    return {"conditions": list(profile), "lengths": p["lengths"], "profile_head": first}


# ---------------------------------------------------------------------------
# governance
# ---------------------------------------------------------------------------

def _run_governance(config: ExperimentConfig, writer: RunWriter, jobs: int) -> dict:
    p = config.params
    if isinstance(p["graph"], str):
        graph_source = governance.RoomGraph.from_json(Path(p["graph"]).read_text())
        graph_or_factory = graph_source
    elif isinstance(p["graph"], dict):
        spec = p["graph"]

        def graph_or_factory(seed, _spec=spec):
            return governance.planted_cycle_graph(_spec["rooms"], _spec["extra_edges"], seed)

    else:
        graph_or_factory = governance.oscillator_graph(extra_corridor=6)
    seeds = [
        int(s)
        for s in derive_rng(config.master_seed, "governance-seeds").integers(
            0, 2**62, size=p["n_seeds"]
        )
    ]
    summary = governance.paired_trial(
        graph_or_factory,
        steps=p["steps"],
        phase_k=p["phase_k"],
        seeds=seeds,
        policy_rule=p["policy_rule"],
    )
    paired_rows = []
    for row in summary.rows:
        for condition, metrics in (("baseline", row.baseline), ("landmarks", row.landmarks)):
            paired_rows.append(
                (
                    row.seed,
                    condition,
                    metrics.distinct_rooms,
                    metrics.distinct_edges,
                    metrics.backtracks,
                    metrics.steps,
                )
            )
    writer.add_csv(
        "paired.csv",
        ["seed", "condition", "distinct_rooms", "distinct_edges", "backtracks", "steps"],
        paired_rows,
    )
    bar_rows = [
        (condition, metric, summary.means[(condition, metric)], summary.stds[(condition, metric)])
        for condition in ("baseline", "landmarks")
        for metric in governance.METRIC_NAMES
    ]
    writer.add_csv("bars.csv", ["condition", "metric", "mean", "std"], bar_rows)
    graph0 = graph_or_factory(seeds[0]) if callable(graph_or_factory) else graph_or_factory
    policy0 = governance.CachedPolicy(rule=p["policy_rule"], seed=seeds[0])
    base_walk = governance.run_baseline(graph0, policy0, p["steps"])
    land_walk = governance.run_landmarks(graph0, policy0, p["steps"], phase_k=p["phase_k"])
    visit_rows = [
        (condition, step, count)
        for condition, walk in (("baseline", base_walk), ("landmarks", land_walk))
        for step, count in enumerate(walk.rooms_over_time)
    ]
    writer.add_csv("visitation.csv", ["condition", "step", "distinct_rooms"], visit_rows)
    return {
        "cache_consistent": summary.cache_consistent,
        "mean_rooms_baseline": summary.means[("baseline", "distinct_rooms")],
        "mean_rooms_landmarks": summary.means[("landmarks", "distinct_rooms")],
        "mean_backtracks_baseline": summary.means[("baseline", "backtracks")],
        "mean_backtracks_landmarks": summary.means[("landmarks", "backtracks")],
    }


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------

def _run_diagnose(config: ExperimentConfig, writer: RunWriter, jobs: int) -> dict:
    p = config.params
    path = Path(p["trace_csv"])
    if not path.is_file():
        raise InvalidInputError(f"trace file not found: {path}")
    with path.open() as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"t", "rho"} <= set(reader.fieldnames):
            raise InvalidInputError(f"{path}: trace needs columns t, rho")
        rows = [(int(row["t"]), float(row["rho"])) for row in reader]
    ts = [r[0] for r in rows]
    rho = [r[1] for r in rows]
    delta_h = None
    if p["process"] is not None:
        proc_cfg = p["process"]
        cfg = chain.ChainConfig(
            length=proc_cfg["length"],
            policy_noise=proc_cfg["policy_noise"],
            sticky_p=proc_cfg["sticky_p"],
        )
        process = chain.to_finite_process(cfg)
        compressor = diagnostics.last_k_compressor(proc_cfg["compressor_k"])
        steps = min(proc_cfg["steps"], len(ts))
        values = {
            t: diagnostics.delta_h_t(process, compressor, t) for t in range(1, steps + 1)
        }
        delta_h = [values.get(t, math.nan) for t in ts]
    frames = diagnostics.frames_from_trace(
        ts, rho, l_star=p["l_star"], reset_period=p["reset_period"], delta_h=delta_h
    )
    finite_gammas = [f.gamma_t for f in frames if math.isfinite(f.gamma_t)]
    gamma_ref = float(np.median(finite_gammas)) if finite_gammas else 1.0
    gamma_threshold = p["gamma_threshold"] or p["gamma_multiplier"] * gamma_ref
    dh_values = [f.delta_h_t for f in frames if not math.isnan(f.delta_h_t)]
    if p["delta_h_threshold"] is not None:
        dh_threshold = p["delta_h_threshold"]
    elif dh_values:
        arr = np.array(dh_values)
        dh_threshold = float(arr.mean() + 2 * arr.std(ddof=0)) or 1e-9
    else:
        dh_threshold = math.inf
    policy = diagnostics.ThresholdPolicy(
        gamma_threshold=gamma_threshold,
        delta_h_threshold=dh_threshold,
        r_threshold=p["r_threshold"],
    )
    flagged = diagnostics.critical_region(frames, policy)
    writer.add_csv(
        "diagnostics.csv",
        ["t", "gamma_t", "delta_h_t", "r_t", "flags", "critical"],
        [
            (f.t, f.gamma_t, f.delta_h_t, f.r_t, f.flags, f.critical)
            for f in flagged
        ],
    )
    critical_steps = [f.t for f in flagged if f.critical]
    return {
        "gamma_threshold": policy.gamma_threshold,
        "delta_h_threshold": policy.delta_h_threshold,
        "r_threshold": policy.r_threshold,
        "first_critical_t": critical_steps[0] if critical_steps else None,
        "critical_count": len(critical_steps),
    }


# ---------------------------------------------------------------------------
# phase
# ---------------------------------------------------------------------------

def _run_phase(config: ExperimentConfig, writer: RunWriter, jobs: int) -> dict:
    p = config.params
    b_values = p["b_values"] or list(range(1, p["b_max"] + 1))
    curve = diagnostics.phase_boundary(p["gamma"], p["rho0"], p["tau"], b_values)
    writer.add_csv("phase_boundary.csv", ["b", "l_star_b"], curve)
    return {
        "gamma": p["gamma"],
        "rho0": p["rho0"],
        "tau": p["tau"],
        "l_star_b1": curve[0][1],
        "l_star_bmax": curve[-1][1],
    }


_RUNNERS = {
    "kernel": _run_kernel,
    "trackb": _run_trackb,
    "chain": _run_chain,
    "governance": _run_governance,
    "diagnose": _run_diagnose,
    "phase": _run_phase,
}


# ---------------------------------------------------------------------------
# summarize
# ---------------------------------------------------------------------------

def summarize(run_dir) -> str:
    """Human-readable report of a finished run, with sanity check flags."""
    manifest = load_manifest(run_dir)
    kind = manifest.get("kind")
    head = manifest.get("headline", {})
    lines = [
        f"run: {run_dir}",
        f"kind: {kind}   seed: {manifest.get('master_seed')}   version: {manifest.get('artifact_version')}",
        f"files: {', '.join(sorted(manifest.get('files', {})))}",
    ]
    checks: list[tuple[str, bool]] = []
    if kind == "kernel":
        lines.append(
            "fit: eta={eta:.6g} gamma={gamma:.6g} rho0={rho0:.6g} "
            "r^2={r_squared:.6g} L*={l_star:.6g} (tau={tau})".format(**head)
        )
        if "dobrushin" in head:
            lines.append(f"dobrushin coefficient: {head['dobrushin']:.6g}")
            checks.append(
                ("fitted eta within 5% of dobrushin", abs(head["eta"] - head["dobrushin"]) <= 0.05 * head["dobrushin"])
            )
        if "exact_gamma_reference" in head:
            ref = head["exact_gamma_reference"]
            checks.append(
                ("monte-carlo gamma within 5% of exact reference", abs(head["gamma"] - ref) <= 0.05 * ref)
            )
    elif kind == "trackb":
        slope = head.get("unstructured_slope")
        ln_a = head.get("log_action_count")
        lines.append(f"unstructured log-slope: {slope}   ln|A|: {ln_a:.6g}")
        lines.append(f"structured log-slope: {head.get('structured_slope')}")
        if slope is not None:
            checks.append(("unstructured slope within 10% of ln|A|", abs(slope - ln_a) <= 0.1 * ln_a))
    elif kind == "chain":
        lines.append(f"conditions: {head.get('conditions')} over lengths {head.get('lengths')}")
        for L, entry in head.get("profile_head", {}).items():
            line = f"L={L}: rate={entry['success_rate']:.4f} ci99=[{entry['ci99'][0]:.4f}, {entry['ci99'][1]:.4f}]"
            if "exact" in entry:
                line += f" exact={entry['exact']:.4f}"
                checks.append(
                    (f"L={L} exact within 99% CI", entry["ci99"][0] <= entry["exact"] <= entry["ci99"][1])
                )
            lines.append(line)
    elif kind == "governance":
        lines.append(
            "rooms: baseline {mean_rooms_baseline:.2f} vs landmarks {mean_rooms_landmarks:.2f}; "
            "backtracks: {mean_backtracks_baseline:.2f} vs {mean_backtracks_landmarks:.2f}".format(**head)
        )
        checks.append(("policy cache consistent across paired agents", bool(head.get("cache_consistent"))))
        checks.append(
            ("landmarks explore at least as many rooms", head["mean_rooms_landmarks"] >= head["mean_rooms_baseline"])
        )
    elif kind == "diagnose":
        lines.append(
            "thresholds: gamma>{gamma_threshold:.6g} delta_h>{delta_h_threshold:.6g} r>{r_threshold:.6g}".format(**head)
        )
        lines.append(
            f"critical steps: {head.get('critical_count')} (first at t={head.get('first_critical_t')})"
        )
    elif kind == "phase":
        lines.append(
            "l*(1)={l_star_b1:.6g}   l*(b_max)={l_star_bmax:.6g} (gamma={gamma}, rho0={rho0}, tau={tau})".format(**head)
        )
        import math as _math

        expected = _math.log(head["rho0"] / head["tau"]) / head["gamma"]
        checks.append(("l*(1) equals the critical length", abs(head["l_star_b1"] - expected) < 1e-9))
    for label, ok in checks:
        lines.append(f"[{'PASS' if ok else 'FAIL'}] {label}")
    return "\n".join(lines)
