"""Batch experiment runner.

Every subcommand resolves one flat configuration (defaults, then a
``key = value`` file given by ``--config``, then ``--set key=value`` and the
common flags) and validates it before doing any work. Outputs are pure
functions of that configuration: a CSV table with one record per trial or
grid point, and a JSON summary. Both embed the resolved configuration; the
worker count is left out so it cannot change a single byte.

Config keys and their defaults are listed by ``chunknet <command> --show-config``.
List-valued keys take comma-separated values; an empty value is an empty list.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds as B
from .rblt import RbltSpec, bound_for, estimate_rank_deficiency, target_size
from .simulator import (
    SimConfig,
    ccp_config,
    estimate_average_delay,
    estimate_delay_quantile,
    measure_undecodable_fraction,
    _order_stat_quantile,
    run_trials,
)
from .codes import CodeParams
from .traffic import NetworkParams, sample_trace

__all__ = ["main", "resolve_config", "ConfigError"]


class ConfigError(ValueError):
    pass


def _ints(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x.strip()]


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def _opt_float(s: str) -> float | None:
    return float(s) if s.strip() else None


def _strs(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


_NET = {
    "L": (int, 1),
    "p": (_floats, [1.0]),
    "schedule": (str, "deterministic"),
    "lam": (_floats, [1.0]),
}

SCHEMAS: dict[str, dict[str, tuple]] = {
    "simulate": {
        "k": (int, 64),
        "q": (int, 1),
        "m": (int, 0),
        **_NET,
        "cap_factor": (float, 20.0),
        "trials": (int, 100),
        "epsilon": (float, 0.1),
        "seed": (int, 0),
    },
    "average": {
        "k": (int, 64),
        "q": (int, 1),
        **_NET,
        "cap_factor": (float, 20.0),
        "trials": (int, 20),
        "traffic_trials": (int, 20),
        "epsilon": (float, 0.1),
        "seed": (int, 0),
    },
    "ccp": {
        "k": (int, 4096),
        "alpha": (int, 32),
        "gamma_a": (float, 0.1),
        "gamma_b": (float, 0.1),
        "gamma_c": (float, 0.2),
        "c": (float, 1.0),
        "m": (int, 0),
        **_NET,
        "horizon": (float, 0.0),
        "trials": (int, 20),
        "seed": (int, 0),
    },
    "bounds": {
        "k": (_ints, [1024]),
        "theorems": (_ints, [1, 5, 9]),
        "rows": (_strs, []),
        "L": (int, 4),
        "q": (int, 1),
        "p": (_floats, [0.5]),
        "lam": (_floats, []),
        "epsilon": (float, 0.01),
        "gamma_e": (_opt_float, None),
        "gamma_a": (_opt_float, 0.1),
        "gamma_b": (_opt_float, 0.1),
        "gamma_c": (_opt_float, 0.2),
        "c": (float, 1.0),
        "f_choice": (str, "gamma_e_log2"),
    },
    "rblt-check": {
        "specs": (_strs, ["2:1.1.2", "2:2.1.1", "3:1.2.3", "4:2.3.4", "2:3.3", "2:2.3.4", "3:3.4.5"]),
        "gammas": (_ints, [0, 1, 2]),
        "fills": (_strs, ["zeros", "uniform"]),
        "trials": (int, 10000),
        "seed": (int, 0),
    },
    "compare": {
        "k": (_ints, [64, 128, 256]),
        "q": (_ints, [1]),
        **_NET,
        "theorem": (int, 5),
        "trials": (int, 100),
        "epsilon": (float, 0.1),
        "cap_factor": (float, 20.0),
        "seed": (int, 0),
    },
    "trace-export": {
        **_NET,
        "horizon": (float, 100.0),
        "seed": (int, 0),
    },
}

COMMON_FLAGS = ("seed", "trials", "epsilon")


def _parse_config_file(path: str) -> dict[str, str]:
    out = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def resolve_config(command: str, file_values: dict[str, str] | None = None, overrides: dict[str, str] | None = None) -> dict:
    """Defaults, then file values, then overrides; values are parsed and checked against the schema."""
    schema = SCHEMAS[command]
    cfg = {key: (list(d) if isinstance(d, list) else d) for key, (_, d) in schema.items()}
    for source in (file_values or {}, overrides or {}):
        for key, raw in source.items():
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} for {command}; valid keys: {', '.join(sorted(schema))}")
            try:
                cfg[key] = schema[key][0](raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from None
    _validate(command, cfg)
    return cfg


def _validate(command: str, cfg: dict) -> None:
    # Building the module objects runs their own precondition checks.
    try:
        if command in ("simulate", "average"):
            _sim_config(cfg, cfg["k"], cfg["q"])
        elif command == "ccp":
            _ccp_config(cfg)
        elif command == "compare":
            for k in cfg["k"]:
                for q in cfg["q"]:
                    _sim_config(cfg, k, q)
            if cfg["theorem"] not in range(1, 9):
                raise ValueError("theorem must be 1..8")
        elif command == "bounds":
            for t in cfg["theorems"]:
                if t not in range(1, 10):
                    raise ValueError(f"theorem must be 1..9, got {t}")
            for r in cfg["rows"]:
                if r not in B.TABLE_ROWS:
                    raise ValueError(f"unknown table row {r!r}")
            # evaluation is cheap and catches missing per-theorem parameters
            cmd_bounds(cfg, 1)
        elif command == "rblt-check":
            for s in cfg["specs"]:
                for fill in cfg["fills"]:
                    _parse_spec(s, fill)
        elif command == "trace-export":
            _network(cfg, horizon=cfg["horizon"])
            if not math.isfinite(cfg["horizon"]):
                raise ValueError("horizon must be finite")
        if "trials" in cfg and cfg["trials"] < 1:
            raise ValueError("trials must be >= 1")
        if "traffic_trials" in cfg and cfg["traffic_trials"] < 1:
            raise ValueError("traffic_trials must be >= 1")
        if "epsilon" in cfg and not 0 < cfg["epsilon"] < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if "seed" in cfg and cfg["seed"] < 0:
            raise ValueError("seed must be non-negative")
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None


def _network(cfg: dict, horizon: float = math.inf) -> NetworkParams:
    p, lam, L = cfg["p"], cfg["lam"], cfg["L"]
    if len(p) == 1:
        p = p * L
    if len(lam) == 1:
        lam = lam * L
    if len(p) != L or len(lam) != L:
        raise ValueError(f"p and lam need 1 or L={L} values")
    return NetworkParams.line(p, L, cfg["schedule"], lam, horizon)


def _sim_config(cfg: dict, k: int, q: int) -> SimConfig:
    return SimConfig(
        CodeParams(k, q, cfg.get("m", 0)),
        _network(cfg),
        code_seed=cfg["seed"],
        traffic_seed=cfg["seed"],
        cap_factor=cfg["cap_factor"],
    )


def _ccp_horizon(cfg: dict, capacity: float) -> float:
    if cfg["horizon"] > 0:
        return cfg["horizon"]
    ga, gb, gc = cfg["gamma_a"], cfg["gamma_b"], cfg["gamma_c"]
    return (1 + gc) * (1 + (1 + ga) * gb) * cfg["k"] / capacity


def _ccp_config(cfg: dict) -> SimConfig:
    net = _network(cfg)
    net = net.with_horizon(_ccp_horizon(cfg, net.capacity))
    return ccp_config(
        cfg["k"], cfg["alpha"], cfg["gamma_a"], cfg["gamma_b"], net, c=cfg["c"], m=cfg["m"],
        code_seed=cfg["seed"], traffic_seed=cfg["seed"], horizon="fixed",
    )


def _bound_inputs(cfg: dict, k: int) -> B.BoundInputs:
    kw = dict(
        q=cfg["q"],
        gamma_a=cfg["gamma_a"],
        gamma_b=cfg["gamma_b"],
        gamma_c=cfg["gamma_c"],
        f_choice=cfg["f_choice"],
        c=cfg["c"],
    )
    p, L = cfg["p"], cfg["L"]
    if len(p) > 1:
        if len(p) != L:
            raise ValueError(f"p needs 1 or L={L} values")
        if cfg["gamma_e"] is not None:
            kw["gamma_e"] = cfg["gamma_e"]
        inp = B.BoundInputs.from_links(k, cfg["epsilon"], p, **kw)
    else:
        inp = B.BoundInputs(k=k, L=L, eps=cfg["epsilon"], p=p[0], gamma_e=cfg["gamma_e"], **kw)
    if cfg["lam"]:
        lam = cfg["lam"] * L if len(cfg["lam"]) == 1 else cfg["lam"]
        ps = p * L if len(p) == 1 else p
        if len(lam) != L:
            raise ValueError(f"lam needs 1 or L={L} values")
        inp = B.poisson_adjust(inp, list(zip(lam, ps)))
    return inp


def _parse_spec(text: str, fill: str) -> RbltSpec:
    """``r:r1.r2...`` -> RbltSpec with w = number of block columns."""
    try:
        r, cols = text.split(":")
        r_list = [int(x) for x in cols.split(".")]
        return RbltSpec(len(r_list), int(r), tuple(r_list), fill)
    except ValueError as exc:
        raise ValueError(f"bad rblt spec {text!r} (expected r:r1.r2...): {exc}") from None


# ---------------------------------------------------------------- commands


def _num(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


def cmd_simulate(cfg: dict, workers: int):
    sc = _sim_config(cfg, cfg["k"], cfg["q"])
    results = run_trials(sc, cfg["trials"], workers)
    header = ["trial", "code_seed", "traffic_seed", "coding_delay", "cap_exceeded", "successes", "transmissions"]
    rows = [
        [i, r.code_seed, r.traffic_seed, _num(r.coding_delay), int(r.cap_exceeded),
         ";".join(map(str, r.successes)), ";".join(map(str, r.transmissions))]
        for i, r in enumerate(results)
    ]
    if sc.code.payload_mode:
        header.append("recovered_ok")
        for row, r in zip(rows, results):
            row.append(int(r.recovered_message is not None and r.recovered_message == r.message))
    # Same order statistics as estimate_delay_quantile, without re-running.
    delays = [r.coding_delay for r in results]
    qv, lo, hi = _order_stat_quantile(delays, cfg["epsilon"])
    cap_time = sc.code.k / sc.net.capacity
    summary = {
        "quantile": qv,
        "ci_low": lo,
        "ci_high": hi,
        "level": 1 - cfg["epsilon"],
        "mean_delay": float(np.mean(delays)),
        "capacity_time": cap_time,
        "overhead_quantile": qv - cap_time,
        "cap_exceeded": sum(r.cap_exceeded for r in results),
    }
    return header, rows, summary


def cmd_average(cfg: dict, workers: int):
    sc = _sim_config(cfg, cfg["k"], cfg["q"])
    est = estimate_average_delay(sc, cfg["trials"], cfg["traffic_trials"], cfg["epsilon"], workers)
    header = ["code_index", "code_seed", "mean_delay"]
    rows = [[i, sc.code_seed + i, _num(m)] for i, m in enumerate(est.per_code_mean)]
    summary = {
        "quantile": est.quantile,
        "ci_low": est.ci_low,
        "ci_high": est.ci_high,
        "level": est.level,
        "capacity_time": sc.code.k / sc.net.capacity,
        "code_trials": est.code_trials,
        "traffic_trials": est.traffic_trials,
    }
    return header, rows, summary


def cmd_ccp(cfg: dict, workers: int):
    sc = _ccp_config(cfg)
    est = measure_undecodable_fraction(sc, cfg["trials"], workers=workers)
    header = ["trial", "code_seed", "traffic_seed", "undecodable_fraction", "exceeds", "precode_decoded", "coding_delay"]
    rows = []
    for i, (r, f) in enumerate(zip(est.results, est.fractions)):
        rows.append([i, r.code_seed, r.traffic_seed, f, int(f > est.threshold), int(bool(r.precode_decoded)), _num(r.coding_delay)])
    qualifying = [r for r, f in zip(est.results, est.fractions) if f <= est.threshold]
    summary = {
        "horizon": sc.net.horizon,
        "threshold": est.threshold,
        "mean_undecodable_fraction": est.mean,
        "exceedance_rate": est.exceed_rate,
        "qualifying_trials": len(qualifying),
        "qualifying_decoded": sum(bool(r.precode_decoded) for r in qualifying),
        "n_intermediate": sc.precode.n_intermediate,
        "padded_length": sc.code.k,
        "chunks": sc.code.q,
    }
    return header, rows, summary


def cmd_bounds(cfg: dict, workers: int):
    header = ["k", "item", "value", "capacity_time", "overhead", "w", "flags"]
    rows, reports = [], []
    for k in cfg["k"]:
        inp = _bound_inputs(cfg, k)
        for t in cfg["theorems"]:
            rep = B.ccp_delay_bound(inp) if t == 9 else B.delay_bound(t, inp)
            reports.append(rep.to_dict())
            w = "" if rep.w is None else rep.w
            rows.append([k, f"thm{t}", rep.value, rep.capacity_time, rep.overhead, w, " | ".join(rep.flags)])
        for name in cfg["rows"]:
            tr = B.overhead_table(name, inp)
            reports.append(tr.to_dict())
            rows.append([k, name, tr.value, k / inp.p, "", "" if tr.w is None else tr.w, ""])
    return header, rows, {"reports": reports}


def cmd_rblt_check(cfg: dict, workers: int):
    header = ["spec", "fill", "gamma", "lemma", "bound", "vacuous", "empirical", "half_width", "margin", "pass"]
    rows = []
    for si, text in enumerate(cfg["specs"]):
        for fi, fill in enumerate(cfg["fills"]):
            spec = _parse_spec(text, fill)
            for gamma in cfg["gammas"]:
                try:
                    lemma, bv = bound_for(spec, gamma)
                except ValueError:
                    continue
                rng = np.random.default_rng([cfg["seed"], si, fi, gamma])
                est = estimate_rank_deficiency(spec, gamma, target_size(spec, lemma), cfg["trials"], rng)
                margin = bv.value + est.half_width - est.frequency
                rows.append([text, fill, gamma, lemma, bv.value, int(bv.vacuous), est.frequency, est.half_width, margin, int(margin >= 0)])
    return header, rows, {"checks": len(rows), "passed": sum(r[-1] for r in rows)}


def cmd_compare(cfg: dict, workers: int):
    header = ["k", "q", "empirical_quantile", "empirical_mean", "bound", "capacity_time", "quantile_ratio", "bound_ratio"]
    rows = []
    for k in cfg["k"]:
        for q in cfg["q"]:
            sc = _sim_config(cfg, k, q)
            est = estimate_delay_quantile(sc, cfg["trials"], cfg["epsilon"], workers)
            net = sc.net
            ps = [link.rate for link in net.links]
            thm = cfg["theorem"]
            inp = B.BoundInputs.from_links(k, cfg["epsilon"], ps, q=q)
            try:
                bound = B.delay_bound(thm, inp).value
            except ValueError:
                bound = math.nan
            cap_time = k / net.capacity
            rows.append([k, q, _num(est.quantile), est.mean, _num(bound), cap_time,
                         _num(est.quantile / cap_time), _num(bound / cap_time)])
    return header, rows, {"points": len(rows)}


def cmd_trace_export(cfg: dict, workers: int):
    net = _network(cfg, horizon=cfg["horizon"])
    trace = sample_trace(net, cfg["seed"])
    header = ["link_index", "time"]
    rows = []
    for i, times in enumerate(trace.times):
        integral = net.links[i].schedule == "deterministic"
        rows.extend([i, int(t) if integral else repr(t)] for t in times.tolist())
    summary = {"successes": trace.success_counts(), "transmissions": trace.transmissions}
    return header, rows, summary


COMMANDS = {
    "simulate": cmd_simulate,
    "average": cmd_average,
    "ccp": cmd_ccp,
    "bounds": cmd_bounds,
    "rblt-check": cmd_rblt_check,
    "compare": cmd_compare,
    "trace-export": cmd_trace_export,
}


# ---------------------------------------------------------------- output


def render_csv(header, rows, cfg: dict, command: str) -> str:
    buf = io.StringIO()
    buf.write(f"# config={_config_json(cfg, command)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def render_json(summary: dict, cfg: dict, command: str) -> str:
    doc = {"command": command, "config": cfg, "summary": summary}
    return json.dumps(B._jsonable(doc), sort_keys=True, indent=2) + "\n"


def _config_json(cfg: dict, command: str) -> str:
    return json.dumps({"command": command, **cfg}, sort_keys=True, separators=(",", ":"))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file; flags override it")
    common.add_argument("--seed", type=int, help="base seed; trial i uses seed + i")
    common.add_argument("--trials", type=int)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--out", help="directory for <command>.csv and <command>.json")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="what to print without --out")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--show-config", action="store_true", help="print the resolved config and exit")

    parser = argparse.ArgumentParser(prog="chunknet", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=f"{name} experiment")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    command = args.command
    try:
        file_values = _parse_config_file(args.config) if args.config else {}
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            overrides[key.strip()] = value.strip()
        for key in COMMON_FLAGS:
            value = getattr(args, key)
            if value is not None:
                if key not in SCHEMAS[command]:
                    raise ConfigError(f"--{key} does not apply to {command}")
                overrides[key] = str(value)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = resolve_config(command, file_values, overrides)
    except (ConfigError, OSError) as exc:
        print(f"chunknet {command}: invalid config: {exc}", file=sys.stderr)
        return 2

    if args.show_config:
        print(_config_json(cfg, command))
        return 0

    header, rows, summary = COMMANDS[command](cfg, args.workers)
    csv_text = render_csv(header, rows, cfg, command)
    json_text = render_json(summary, cfg, command)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{command}.csv").write_bytes(csv_text.encode("utf-8"))
        (out / f"{command}.json").write_bytes(json_text.encode("utf-8"))
    else:
        sys.stdout.write(csv_text if args.format == "csv" else json_text)
    return 0
