"""Command-line front end: ``spsqss {rate,sweep,threshold,simulate,verify}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import fields, replace
from datetime import datetime, timezone
from pathlib import Path

from spsqss import __version__
from spsqss.heralding import (
    PATTERN_CLASS,
    PATTERNS,
    Verdict,
    click_class_totals,
    gsm_click_distribution,
    pattern_key,
    published_list_disagreements,
    qm_trace,
)
from spsqss.keyrate import (
    BREAKDOWN_COLUMNS,
    ChannelConfig,
    Provider,
    ProviderDomainError,
    SecrecyProvider,
    devetak_winter,
    distance_at_rate,
    sweep,
    threshold_bisect,
)
from spsqss.montecarlo import SimConfig, analytic_expectations, simulate, write_round_log, z_scores
from spsqss.noise import Strategy
from spsqss.polarization import ALL_GHZ_LABELS, ghz_state

EXIT_OK, EXIT_CONFIG, EXIT_TERMINATED, EXIT_NO_RESULT = 0, 2, 3, 4
SIG = 12

STRATEGIES = {"none": Strategy.NONE, "post": Strategy.POSTSELECT, "advanced": Strategy.ADVANCED}
PROVIDERS = {p.value: p for p in Provider}

DISCLAIMER = (
    "Thresholds depend on the secrecy bound in use. Reference values were obtained with a tighter "
    "multipartite bound than any provider shipped here, so deviations are expected."
)

# Published values quoted next to regenerated numbers.
PUBLISHED = {
    "eta_threshold_none": 0.9558,
    "eta_threshold_post": 0.9408,
    "eta_threshold_advanced": 0.9341,
    "F_threshold": 0.8154,
    "distance_F0.9_km": 73.97,
    "fig6_post_over_none": 1.67,
    "fig6_distance_none_km": 71.58,
    "fig6_distance_post_km": 75.29,
}
REFERENCES = {
    ("eta_l", "none"): PUBLISHED["eta_threshold_none"],
    ("eta_l", "post"): PUBLISHED["eta_threshold_post"],
    ("eta_l", "advanced"): PUBLISHED["eta_threshold_advanced"],
    ("F", "none"): PUBLISHED["F_threshold"],
}

# Frozen parameter sets for figure regeneration; README carries the same table.
PRESETS = {
    "fig2": {
        "axis": "d", "range": (0.0, 160.0), "steps": 161, "base": {"eta_l": 1.0},
        "series": {f"F={F:g}": {"F": F} for F in (1.0, 0.98, 0.95, 0.9)},
    },
    "fig3": {
        "axis": "d", "range": (0.0, 160.0), "steps": 161, "base": {"F": 1.0, "eta_l": 1.0},
        "series": {"two-basis": {"key_bases": 2}, "single-basis": {"key_bases": 1}},
    },
    "fig4": {
        "axis": "eta_l", "range": (0.9, 1.0), "steps": 101, "base": {"F": 1.0},
        "series": {"none": {"strategy": "none"}, "post": {"strategy": "post"}},
    },
    "fig5": {
        "axis": "eta_l", "range": (0.9, 1.0), "steps": 101, "base": {"F": 1.0, "d": 0.0},
        "series": {
            "none": {"strategy": "none"},
            "q=0": {"strategy": "post"},
            **{f"q={q:g}": {"strategy": "advanced", "q": q} for q in (0.05, 0.2, 0.4)},
        },
    },
    "fig6": {
        "axis": "d", "range": (0.0, 160.0), "steps": 161, "base": {"F": 1.0, "eta_l": 0.97},
        "series": {"none": {"strategy": "none"}, "post": {"strategy": "post"}},
    },
}


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration


def _bob(v):
    parts = v if isinstance(v, (list, tuple)) else str(v).split(",")
    return tuple(float(x) for x in parts)


def _range(v):
    if isinstance(v, (list, tuple)):
        lo, hi = v
    else:
        lo, hi = str(v).split(":")
    return float(lo), float(hi)


CHANNEL_KEYS = {f.name: float for f in fields(ChannelConfig)}
CHANNEL_KEYS.update(strategy=str, provider=str, key_bases=int, eta_l=float)
SIM_KEYS = {"rounds": int, "seed": int, "announce_fraction": float, "bob_probs": _bob, "path": str}
ARG_KEYS = {"axis": str, "range": _range, "steps": int, "preset": str, "parameter": str, "target": str}
ALL_KEYS = {**CHANNEL_KEYS, **SIM_KEYS, **ARG_KEYS}


def _convert(key, raw, where):
    if key not in ALL_KEYS:
        raise ConfigError(f"{where}: unknown key {key!r}")
    try:
        return ALL_KEYS[key](raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: bad value {raw!r} for {key}: {exc}") from None


def load_config(path: str) -> dict:
    """Flat ``key = value`` file, or a JSON manifest written by this tool."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    if text.lstrip().startswith("{"):
        try:
            manifest = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
        items = manifest.get("config", manifest)
        return {k: _convert(k, v, f"{path}: manifest") for k, v in items.items()}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = _convert(key, raw, f"{path}:{lineno}")
    return out


def channel_from(values: dict) -> ChannelConfig:
    kw = {k: v for k, v in values.items() if k in CHANNEL_KEYS}
    if "eta_l" in kw:
        if any(k in kw for k in ("eta_c", "eta_m", "eta_d")):
            raise ConfigError("eta_l cannot be combined with eta_c/eta_m/eta_d")
        kw["eta_c"], kw["eta_m"], kw["eta_d"] = kw.pop("eta_l"), 1.0, 1.0
    if "strategy" in kw:
        if kw["strategy"] not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {sorted(STRATEGIES)}, got {kw['strategy']!r}")
        kw["strategy"] = STRATEGIES[kw["strategy"]]
    if "provider" in kw:
        if kw["provider"] not in PROVIDERS:
            raise ConfigError(f"provider must be one of {sorted(PROVIDERS)}, got {kw['provider']!r}")
        kw["provider"] = SecrecyProvider(PROVIDERS[kw["provider"]])
    try:
        return ChannelConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def resolve(args) -> dict:
    """Defaults < config file < explicit flags."""
    values = load_config(args.config) if args.config else {}
    for pair in args.set or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        k, v = (s.strip() for s in pair.split("=", 1))
        values[k] = _convert(k, v, "--set")
    for key in ("strategy", "q", "provider", "seed", "rounds", "axis", "steps", "preset", "parameter", "target"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if getattr(args, "range", None) is not None:
        values["range"] = _convert("range", args.range, "--range")
    return values


# --------------------------------------------------------------------------
# output


def fmt(x):
    """Round floats to 12 significant digits for stable serialization."""
    if isinstance(x, float):
        if math.isnan(x) or math.isinf(x):
            return None
        return float(f"{x:.{SIG}g}")
    if isinstance(x, dict):
        return {str(k): fmt(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [fmt(v) for v in x]
    return x


def _csv_cell(x):
    return f"{x:.{SIG}g}" if isinstance(x, float) else str(x)


def manifest(command: str, values: dict, channel: ChannelConfig | None = None) -> dict:
    config = dict(values)
    if channel is not None:
        config = {k: v for k, v in config.items() if k not in CHANNEL_KEYS}
        config.update(channel.as_dict())
    return {
        "command": command,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "seed": values.get("seed"),
        "provider": (channel.provider.variant.value if channel else values.get("provider")),
        "config": fmt(config),
    }


def emit(text: str, out: str | None, man: dict):
    """Write ``text`` to stdout or ``out``; a manifest always accompanies a file."""
    if out is None:
        sys.stdout.write(text)
        return
    Path(out).write_text(text)
    Path(out + ".manifest.json").write_text(json.dumps(man, indent=2) + "\n")


def _json(obj) -> str:
    return json.dumps(fmt(obj), indent=2) + "\n"


# --------------------------------------------------------------------------
# commands


def cmd_rate(args) -> int:
    values = resolve(args)
    ch = channel_from(values)
    try:
        b = devetak_winter(ch)
    except ProviderDomainError as exc:
        raise ConfigError(str(exc)) from None
    report = {"config": ch.as_dict(), "breakdown": b.as_dict(), "terminated": b.terminated}
    emit(_json(report), args.out, manifest("rate", values, ch))
    return EXIT_TERMINATED if b.terminated else EXIT_OK


def _series(values: dict):
    preset = values.get("preset")
    if preset is None:
        for key in ("axis", "range", "steps"):
            if key not in values:
                raise ConfigError(f"sweep needs --{key} (or --preset)")
        base = channel_from(values)
        lo, hi = values["range"]
        return values["axis"], [("custom", base, lo, hi, values["steps"])]
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    preset_def = PRESETS[preset]
    lo, hi = values.get("range", preset_def["range"])
    steps = values.get("steps", preset_def["steps"])
    shared = {k: v for k, v in values.items() if k in CHANNEL_KEYS}
    out = []
    for name, overrides in preset_def["series"].items():
        merged = {**shared, **preset_def["base"], **overrides}
        if "eta_l" in merged:
            for k in ("eta_c", "eta_m", "eta_d"):
                merged.pop(k, None)
        out.append((name, channel_from(merged), lo, hi, steps))
    return preset_def["axis"], out


def cmd_sweep(args) -> int:
    values = resolve(args)
    axis, series = _series(values)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["series", axis, *BREAKDOWN_COLUMNS])
    intercepts = {}
    try:
        for name, base, lo, hi, steps in series:
            for row in sweep(base, axis, lo, hi, steps):
                w.writerow([name, _csv_cell(row.value), *(_csv_cell(v) for v in row.breakdown.as_dict().values())])
            if axis == "d":
                intercepts[name] = {
                    f"{target:g}": distance_at_rate(base, target).value for target in (1.0, 1e-4)
                }
    except ProviderDomainError as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    man = manifest("sweep", values, None if "preset" in values else series[0][1])
    if intercepts:
        man["distance_at_rate_km"] = fmt(intercepts)
    emit(buf.getvalue(), args.out, man)
    return EXIT_OK


def _threshold_row(ch: ChannelConfig, parameter: str, label: str) -> dict:
    res = threshold_bisect(ch, parameter)
    ref = REFERENCES.get((parameter, label))
    row = {
        "parameter": parameter,
        "strategy": label,
        "q": ch.q,
        "provider": ch.provider.variant.value,
        "threshold": res.value,
        "residual": res.residual,
        "reference": ref,
        "deviation": (res.value - ref) if (ref is not None and res.found) else None,
    }
    if not res.found:
        row["message"] = res.reason
    return row


def cmd_threshold(args) -> int:
    values = resolve(args)
    parameter = values.get("parameter", "eta_l")
    strategy = values.get("strategy", "none")
    if parameter not in ("eta_l", "F"):
        raise ConfigError(f"threshold parameter must be eta_l or F, got {parameter!r}")
    rows = []
    labels = list(STRATEGIES) if strategy == "all" else [strategy]
    for label in labels:
        v = {**values, "strategy": label}
        if label == "advanced" and strategy == "all" and args.q is None:
            v["q"] = 0.499
        ch = channel_from(v)
        rows.append(_threshold_row(ch, parameter, label))
    report = {"thresholds": rows, "disclaimer": DISCLAIMER}
    found = [r["threshold"] for r in rows if r["threshold"] is not None]
    if len(rows) > 1 and len(found) == len(rows):
        report["strictly_decreasing"] = all(a > b for a, b in zip(found, found[1:]))
    emit(_json(report), args.out, manifest("threshold", values))
    return EXIT_OK if len(found) == len(rows) else EXIT_NO_RESULT


def cmd_simulate(args) -> int:
    values = resolve(args)
    ch = channel_from(values)
    if args.log_rounds and not args.out:
        raise ConfigError("--log-rounds needs --out; the log goes next to the report")
    try:
        cfg = SimConfig(
            rounds=values.get("rounds", 10**6),
            seed=values.get("seed", 0),
            channel=ch,
            announce_fraction=values.get("announce_fraction", 0.5),
            bob_probs=values.get("bob_probs", (1 / 3, 1 / 3, 1 / 3)),
            path=values.get("path", "auto"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    est, arrays = simulate(cfg, keep_rounds=args.log_rounds)
    expected = analytic_expectations(cfg)
    report = {
        "rounds": cfg.rounds,
        "seed": cfg.seed,
        "path": cfg.resolved_path,
        "estimates": est.as_dict(),
        "analytic": expected,
        "z_scores": z_scores(est, expected),
    }
    emit(_json(report), args.out, manifest("simulate", {**values, "seed": cfg.seed, "rounds": cfg.rounds}, ch))
    if args.log_rounds:
        with open(args.out + ".rounds.jsonl", "w") as fp:
            write_round_log(arrays, fp)
    if est.status == "terminate":
        return EXIT_TERMINATED
    return EXIT_NO_RESULT if est.status == "insufficient" else EXIT_OK


def _verify_gsm() -> dict:
    per_state = {}
    for label in ALL_GHZ_LABELS:
        entries = gsm_click_distribution(ghz_state(label))
        per_state[str(label)] = {
            "totals": {k.value: v for k, v in click_class_totals(entries).items()},
            "patterns": {pattern_key(e.pattern): e.probability for e in entries if e.pattern and e.probability > 1e-15},
        }
    classes = {pattern_key(p): PATTERN_CLASS[p].value for p in PATTERNS}
    herald_total = sum(
        v["totals"].get(Verdict.PLUS.value, 0.0) + v["totals"].get(Verdict.MINUS.value, 0.0) for v in per_state.values()
    ) / len(per_state)
    return {
        "pattern_classes": classes,
        "partition": {c.value: sum(1 for v in classes.values() if v == c.value) for c in (Verdict.PLUS, Verdict.MINUS)},
        "heralded_states": [k for k, v in per_state.items() if v["totals"].get(Verdict.FAIL.value, 0.0) < 1e-12],
        "herald_probability_uniform_input": herald_total,
        "states": per_state,
        "published_list_disagreements": [
            {"pattern": p, "published": a, "simulated": b} for p, a, b in published_list_disagreements()
        ],
    }


def _verify_qm(cycles: int) -> dict:
    out = {}
    for pol in ("H", "V"):
        tr = qm_trace(pol, cycles)
        out[pol] = {"output": tr.output_pol, "passes": len(tr.steps) - 1, "trace": tr.render()}
    return {"storage_cycles": cycles, "traces": out}


def _verify_reference() -> dict:
    """Provider-dependent numbers next to the published ones."""
    table = {}
    for prov in Provider:
        sp = SecrecyProvider(prov)
        base = ChannelConfig(provider=sp)
        row = {}

        def put(key, fn):
            try:
                row[key] = fn()
            except ProviderDomainError:
                row[key] = None

        put("eta_threshold_none", lambda: threshold_bisect(base, "eta_l").value)
        put("eta_threshold_post", lambda: threshold_bisect(replace(base, strategy=Strategy.POSTSELECT), "eta_l").value)
        put("eta_threshold_advanced", lambda: threshold_bisect(replace(base, strategy=Strategy.ADVANCED, q=0.499), "eta_l").value)
        put("F_threshold", lambda: threshold_bisect(base, "F").value)
        put("distance_F0.9_km", lambda: distance_at_rate(replace(base, F=0.9), 1.0).value)
        f6 = base.with_local_efficiency(0.97)
        f6p = replace(f6, strategy=Strategy.POSTSELECT)
        put("fig6_post_over_none", lambda: devetak_winter(f6p).E_c / devetak_winter(f6).E_c)
        put("fig6_distance_none_km", lambda: distance_at_rate(f6, 1.0).value)
        put("fig6_distance_post_km", lambda: distance_at_rate(f6p, 1.0).value)
        table[prov.value] = {
            k: {"value": v, "published": PUBLISHED[k], "deviation": None if v is None else v - PUBLISHED[k]}
            for k, v in row.items()
        }
    return {"providers": table, "disclaimer": DISCLAIMER}


def cmd_verify(args) -> int:
    values = resolve(args)
    target = values.get("target")
    if target == "gsm":
        report = _verify_gsm()
    elif target == "qm":
        report = _verify_qm(args.cycles)
    elif target == "reference":
        report = _verify_reference()
    else:
        raise ConfigError(f"unknown verify target {target!r}; choose gsm, qm or reference")
    emit(_json(report), args.out, manifest("verify", values))
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _u64(s):
    v = int(s, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spsqss", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file or a JSON manifest")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--strategy", choices=[*STRATEGIES, "all"])
    common.add_argument("--q", type=float)
    common.add_argument("--provider", choices=list(PROVIDERS))
    common.add_argument("--out", help="write output here plus a .manifest.json beside it")

    sub.add_parser("rate", parents=[common], help="single key-rate breakdown").set_defaults(func=cmd_rate)

    p = sub.add_parser("sweep", parents=[common], help="key-rate table over one axis")
    p.add_argument("--axis", choices=["d", "eta_l", "F", "q"])
    p.add_argument("--range", metavar="LO:HI")
    p.add_argument("--steps", type=_positive_int)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("threshold", parents=[common], help="zero crossing of the asymptotic rate")
    p.add_argument("--parameter", choices=["eta_l", "F"])
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("simulate", parents=[common], help="seeded Monte Carlo run")
    p.add_argument("--seed", type=_u64)
    p.add_argument("--rounds", type=_positive_int)
    p.add_argument("--log-rounds", action="store_true", help="write one JSON line per round next to --out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", parents=[common], help="analyzer, memory or reference dumps")
    p.add_argument("target", choices=["gsm", "qm", "reference"])
    p.add_argument("--cycles", type=int, default=2, help="storage cycles for the qm trace")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command != "threshold" and args.strategy == "all":
        parser.error("--strategy all is only valid for threshold")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
