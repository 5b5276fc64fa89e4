"""Command-line front end.

Settings are resolved as built-in defaults, then the JSON config file
(``--config``), then explicit flags.  Exit status is 0 on success, 1 on invalid
input and 2 when a certification or verification check fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .analytic import UtilityReport, utility
from .equilibrium import (
    EquilibriumResult,
    best_response_one_lock,
    best_response_two_lock,
    nash,
    nash_n_player_conjecture,
)
from .hjb import ResidualReport, candidate_W_silent, candidate_W_threshold, hjb_residual
from .model import GameParams, ParameterError, ThresholdPolicy, TwoStagePolicy, policy_from_dict, policy_to_dict
from .montecarlo import RngSpec, default_seed, deviation_gains, estimate_utilities
from .oracle import (
    AgentCertificate,
    GridSpec,
    certify_profile,
    epsilon,
    grid_best_response,
    grid_best_response_two_stage,
    quadrature_utility,
    two_stage_utility,
)

FORMATS = ("human", "json", "csv")
GAME_KEYS = ("beta_i", "beta_j", "nu", "horizon", "locks", "n_agents")
CONFIG_KEYS = GAME_KEYS + ("reps", "seed", "n_segments", "grid_h", "format", "out")
DEFAULTS = {"locks": 1, "n_agents": 2, "reps": 10**6, "n_segments": 40, "grid_h": 1e-3, "format": "human", "out": None}
HJB_RESIDUAL_TOL = {"closed": 1e-10, "fd": 1e-4}
HJB_BOUNDARY_TOL = 1e-12


class ConfigError(ValueError):
    pass


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    settings: dict
    options: dict = field(default_factory=dict)

    @property
    def params(self) -> GameParams:
        missing = [k for k in ("beta_i", "beta_j", "nu", "horizon") if self.settings.get(k) is None]
        if missing:
            raise ConfigError(f"missing game parameter(s): {', '.join(missing)}")
        return GameParams(**{k: self.settings[k] for k in GAME_KEYS})

    def __getattr__(self, name):
        try:
            return self.settings[name]
        except KeyError:
            raise AttributeError(name) from None


def load_config(path: str | None) -> dict:
    """Read a flat JSON object of settings; unknown keys are rejected."""
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
    return data


def resolve(args: argparse.Namespace) -> RunConfig:
    settings = dict(DEFAULTS)
    settings["seed"] = default_seed()
    settings.update(load_config(args.config))
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    for key in ("beta_i", "beta_j", "nu", "horizon"):
        settings.setdefault(key, None)
    if settings["format"] not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}")
    if int(settings["reps"]) < 1:
        raise ParameterError("reps", "must be >= 1")
    if int(settings["n_segments"]) < 1:
        raise ParameterError("n_segments", "must be >= 1")
    if not float(settings["grid_h"]) > 0:
        raise ParameterError("grid_h", "must be positive")
    opts = {k: v for k, v in vars(args).items() if k not in CONFIG_KEYS and k not in ("config", "command", "func")}
    return RunConfig(settings, opts)


# ---------------------------------------------------------------------------
# commands; each returns (record, exit_status)


def _policy(psi: float, beta: float, p: GameParams):
    psi = min(psi, p.horizon)
    return ThresholdPolicy(psi, beta) if p.locks == 1 else TwoStagePolicy.gamma2(psi, beta, p.horizon)


def _stage1(pol, p: GameParams):
    return pol.control(p.horizon) if isinstance(pol, ThresholdPolicy) else pol.stage1


def cmd_solve(cfg: RunConfig):
    p = cfg.params
    res = nash(p) if p.n_agents == 2 else nash_n_player_conjecture(p, p.n_agents, p.locks)
    return {"command": "solve", "params": p, "equilibrium": res}, 0


def _grid(cfg: RunConfig) -> GridSpec:
    return GridSpec(int(cfg.n_segments), stage2_mode=cfg.options.get("stage2_mode") or "closed_form",
                    method=cfg.options.get("method") or "auto")


def cmd_br(cfg: RunConfig):
    p = cfg.params
    psi_j = cfg.options.get("psi_j")
    if psi_j is None:
        raise UsageError("br needs --psi-j")
    opp = _policy(psi_j, p.beta_j, p)
    if cfg.options.get("grid"):
        g = _grid(cfg)
        res = grid_best_response(opp, p, g) if p.locks == 1 else grid_best_response_two_stage(opp, p, g)
        return {"command": "br", "params": p, "policy": res.control, "utility": res.utility,
                "method": res.method, "certified": res.certified}, 0
    if p.locks == 1:
        pol = best_response_one_lock(psi_j, p)
        rep = utility(pol.control(p.horizon), _stage1(opp, p), p)
    else:
        pol = best_response_two_lock(psi_j, p)
        rep = utility(pol, opp, p)
    return {"command": "br", "params": p, "policy": pol, "utility": rep, "method": "closed_form", "certified": True}, 0


def _pair(cfg: RunConfig, p: GameParams):
    psi_i, psi_j = cfg.options.get("psi_i"), cfg.options.get("psi_j")
    if psi_i is None or psi_j is None:
        eq = nash(p)
        psi_i = eq.thresholds[0] if psi_i is None else psi_i
        psi_j = eq.thresholds[1] if psi_j is None else psi_j
    return _policy(psi_i, p.beta_i, p), _policy(psi_j, p.beta_j, p)


def cmd_eval(cfg: RunConfig):
    p = cfg.params
    pi, pj = _pair(cfg, p)
    if p.locks == 1:
        cf = utility(_stage1(pi, p), _stage1(pj, p), p)
        qd = quadrature_utility(_stage1(pi, p), _stage1(pj, p), p)
    else:
        cf = utility(pi, pj, p)
        qd = two_stage_utility(pi, pj, p)
    return {"command": "eval", "params": p, "policy_i": pi, "policy_j": pj, "closed_form": cf,
            "quadrature": qd, "abs_diff": abs(cf.utility - qd.utility)}, 0


def _profile(cfg: RunConfig, p: GameParams):
    psis = cfg.options.get("psi")
    if psis is None:
        eq = nash(p) if p.n_agents == 2 else nash_n_player_conjecture(p, p.n_agents, p.locks)
        psis = eq.thresholds
    if len(psis) != p.n_agents:
        raise UsageError(f"--psi needs {p.n_agents} values")
    betas = [p.beta_i] + [p.beta_j] * (p.n_agents - 1)
    return [_policy(s, b, p) for s, b in zip(psis, betas)]


def cmd_simulate(cfg: RunConfig):
    p = cfg.params
    pols = _profile(cfg, p)
    spec = RngSpec(int(cfg.seed), int(cfg.options.get("stream") or 0))
    reps = estimate_utilities(pols, p, int(cfg.reps), spec)
    return {"command": "simulate", "params": p, "policies": pols, "seed": spec.seed, "stream": spec.stream,
            "reps": int(cfg.reps), "reports": reps}, 0


def cmd_verify_hjb(cfg: RunConfig):
    o, s = cfg.options, cfg.settings
    case = o.get("case") or "threshold"
    if case == "silent":
        need = {"c": o.get("c"), "nu": s.get("nu"), "beta": o.get("beta"), "U": o.get("U")}
        if any(v is None for v in need.values()):
            raise UsageError("silent case needs --c --nu --beta --U")
        for k, v in need.items():
            if not v > 0:
                raise ParameterError(k, "must be positive")
        cand = candidate_W_silent(need["c"], need["nu"], need["beta"], need["U"])
    else:
        p = cfg.params
        psi = o.get("psi_j")
        if psi is None:
            raise UsageError("threshold case needs --psi-j")
        cand = candidate_W_threshold(p.beta_i, p.beta_j, p.nu, psi, p.horizon, o.get("t1"))
    h = float(cfg.grid_h)
    rep = hjb_residual(cand, h, h, partials=o.get("partials") or "auto")
    passed = (rep.valid and rep.sign_violations == 0 and rep.boundary_error < HJB_BOUNDARY_TOL
              and rep.max_residual < HJB_RESIDUAL_TOL[rep.partials])
    return {"command": "verify-hjb", "case": case, "candidate": cand.params, "report": rep, "passed": passed}, 0 if passed else 2


def cmd_certify(cfg: RunConfig):
    p = cfg.params
    spec = RngSpec(int(cfg.seed), int(cfg.options.get("stream") or 0))
    reps = int(cfg.reps)
    g = _grid(cfg)
    rec: dict[str, Any] = {"command": "certify", "params": p}
    if p.n_agents == 2:
        eq = nash(p)
        pols = list(eq.profile)
        certs = certify_profile(pols[0], pols[1], p, g)
        failed = [c for c in certs if not c.passed]
        closed = [utility(pols[0], pols[1], p).utility, utility(pols[1], pols[0], p.swapped()).utility]
        rec.update(equilibrium=eq, certificates=certs, tolerance=epsilon(g.n_segments))
    else:
        eq = nash_n_player_conjecture(p, p.n_agents, p.locks)
        pols = list(eq.profile)
        grid = np.linspace(0.0, p.horizon, 21)
        devs = [_policy(float(x), p.beta_i, p) for x in grid]
        gains = deviation_gains(pols, devs, p, reps, spec)
        failed = [d for d in gains if d.profitable]
        closed = None
        rec.update(equilibrium=eq, deviation_grid=[float(x) for x in grid],
                   deviation_gain=[d.gain for d in gains], deviation_stderr=[d.stderr for d in gains])
    mc = estimate_utilities(pols, p, reps, spec)
    rec["monte_carlo"] = mc
    if closed is not None:
        rec["mc_consistent"] = [abs(r.utility - c) <= 3 * r.stderr for r, c in zip(mc, closed)]
    rec["verdict"] = "failed" if failed else "certified"
    return rec, 2 if failed else 0


def _sweep_values(o: dict) -> list[float]:
    if o.get("values"):
        return [float(v) for v in o["values"]]
    if o.get("start") is None or o.get("stop") is None:
        raise UsageError("sweep needs --values or --start/--stop")
    return [float(v) for v in np.linspace(o["start"], o["stop"], int(o.get("num") or 19))]


def summarize(record: dict) -> dict:
    """Flat scalar columns describing one result (used for sweep rows)."""
    cmd = record["command"]
    if cmd == "solve":
        eq = record["equilibrium"]
        row = {f"theta_{k}": v for k, v in zip("ij" if len(eq.thresholds) == 2 else range(len(eq.thresholds)), eq.thresholds)}
        return {**row, "regime": eq.regime, "certified": eq.certified}
    if cmd == "br":
        pol = record["policy"]
        psi = getattr(pol, "psi", None)
        if psi is None:
            ctrl = pol.stage1 if isinstance(pol, TwoStagePolicy) else pol
            psi = ctrl.switch_time()
        return {"psi": psi, "utility": record["utility"].utility}
    if cmd == "eval":
        return {"closed_form": record["closed_form"].utility, "quadrature": record["quadrature"].utility, "abs_diff": record["abs_diff"]}
    if cmd == "simulate":
        out = {}
        for k, r in enumerate(record["reports"]):
            out[f"utility_{k}"] = r.utility
            out[f"stderr_{k}"] = r.stderr
        return out
    if cmd == "verify-hjb":
        r = record["report"]
        return {"max_residual": r.max_residual, "boundary_error": r.boundary_error, "sign_violations": r.sign_violations, "passed": record["passed"]}
    if cmd == "certify":
        return {"verdict": record["verdict"]}
    raise UsageError(f"cannot summarise {cmd}")


def cmd_sweep(cfg: RunConfig):
    o = cfg.options
    name = o.get("param") or "nu"
    target = o.get("sweep_command") or "solve"
    if target == "sweep":
        raise UsageError("sweep cannot run sweep")
    func = COMMANDS[target]
    rows, status = [], 0
    for v in _sweep_values(o):
        sub = RunConfig(dict(cfg.settings), dict(o))
        if name in sub.settings:
            sub.settings[name] = int(v) if name in ("locks", "n_agents", "reps", "n_segments") else v
        else:
            sub.options[name] = v
        rec, st = func(sub)
        status = max(status, st)
        rows.append({name: v, **summarize(rec)})
    return {"command": "sweep", "param": name, "sweep_command": target, "rows": rows}, status


COMMANDS: dict[str, Callable] = {
    "solve": cmd_solve,
    "br": cmd_br,
    "eval": cmd_eval,
    "simulate": cmd_simulate,
    "verify-hjb": cmd_verify_hjb,
    "sweep": cmd_sweep,
    "certify": cmd_certify,
}


# ---------------------------------------------------------------------------
# encoding

_CODECS = {
    "params": (GameParams, lambda d: GameParams(**d)),
    "equilibrium": (EquilibriumResult, EquilibriumResult.from_dict),
    "utility": (UtilityReport, UtilityReport.from_dict),
    "closed_form": (UtilityReport, UtilityReport.from_dict),
    "quadrature": (UtilityReport, UtilityReport.from_dict),
    "reports": (UtilityReport, UtilityReport.from_dict),
    "monte_carlo": (UtilityReport, UtilityReport.from_dict),
    "report": (ResidualReport, ResidualReport.from_dict),
    "certificates": (AgentCertificate, AgentCertificate.from_dict),
}
_POLICY_KEYS = ("policy", "policy_i", "policy_j", "policies")


def _to_plain(x):
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def encode(record: dict) -> dict:
    """JSON-ready form of a command record."""
    out = {}
    for k, v in record.items():
        if k in _POLICY_KEYS:
            out[k] = [policy_to_dict(x) for x in v] if isinstance(v, list) else policy_to_dict(v)
        elif hasattr(v, "to_dict"):
            out[k] = v.to_dict()
        elif isinstance(v, list) and v and hasattr(v[0], "to_dict"):
            out[k] = [x.to_dict() for x in v]
        elif isinstance(v, list):
            out[k] = [_to_plain(x) if not isinstance(x, dict) else {a: _to_plain(b) for a, b in x.items()} for x in v]
        elif isinstance(v, dict):
            out[k] = {a: _to_plain(b) for a, b in v.items()}
        else:
            out[k] = _to_plain(v)
    return out


def decode(data: dict) -> dict:
    """Inverse of :func:`encode`: rebuild typed records from parsed JSON."""
    horizon = data.get("params", {}).get("horizon", data.get("candidate", {}).get("T"))
    out = {}
    for k, v in data.items():
        if k in _CODECS:
            _, build = _CODECS[k]
            out[k] = [build(x) for x in v] if isinstance(v, list) else build(v)
        elif k in _POLICY_KEYS:
            out[k] = [policy_from_dict(x, horizon) for x in v] if isinstance(v, list) else policy_from_dict(v, horizon)
        else:
            out[k] = v
    return out


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v).lower() if isinstance(v, bool) else ""
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def _flatten(d, prefix="") -> dict:
    out = {}
    if isinstance(d, dict):
        for k, v in d.items():
            out.update(_flatten(v, f"{prefix}{k}."))
    elif isinstance(d, list):
        for n, v in enumerate(d):
            out.update(_flatten(v, f"{prefix}{n}."))
    else:
        out[prefix[:-1]] = d
    return out


def render(record: dict, fmt: str) -> str:
    enc = encode(record)
    if fmt == "json":
        return json.dumps(enc, indent=2)
    if record["command"] == "sweep":
        rows = enc["rows"]
    else:
        rows = [_flatten({k: v for k, v in enc.items() if k != "command"})]
    if fmt == "csv":
        buf = io.StringIO()
        cols = list(dict.fromkeys(c for r in rows for c in r))
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in cols])
        return buf.getvalue().rstrip("\n")
    if record["command"] == "sweep":
        cols = list(dict.fromkeys(c for r in rows for c in r))
        lines = ["  ".join(cols)]
        lines += ["  ".join(_fmt(r.get(c)) for c in cols) for r in rows]
        return "\n".join(lines)
    return "\n".join(f"{k}: {_fmt(v)}" for k, v in rows[0].items())


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(sp: argparse.ArgumentParser) -> None:
    g = sp.add_argument_group("game")
    g.add_argument("--config", help="JSON object with flat keys: " + ", ".join(CONFIG_KEYS))
    g.add_argument("--beta-i", dest="beta_i", type=float)
    g.add_argument("--beta-j", dest="beta_j", type=float)
    g.add_argument("--nu", type=float)
    g.add_argument("--horizon", type=float)
    g.add_argument("--locks", type=int, choices=(1, 2))
    g.add_argument("--n-agents", dest="n_agents", type=int)
    o = sp.add_argument_group("run")
    o.add_argument("--reps", type=int)
    o.add_argument("--seed", type=lambda s: int(s, 0))
    o.add_argument("--stream", type=int)
    o.add_argument("--n-segments", dest="n_segments", type=int)
    o.add_argument("--grid-h", dest="grid_h", type=float)
    o.add_argument("--format", choices=FORMATS)
    o.add_argument("--out")
    o.add_argument("--method", choices=("auto", "dp", "exhaustive", "ascent"))
    o.add_argument("--stage2-mode", dest="stage2_mode", choices=("closed_form", "full_grid"))
    o.add_argument("--psi-i", dest="psi_i", type=float)
    o.add_argument("--psi-j", dest="psi_j", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="acqgame", description="Solve, verify and simulate the two-agent acquisition game.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "solve": "closed-form Nash equilibrium (or the N-agent conjecture)",
        "br": "best response to an opponent threshold --psi-j",
        "eval": "utilities of a threshold pair, closed form against quadrature",
        "simulate": "Monte Carlo utility estimates",
        "verify-hjb": "check a claimed value function on a grid",
        "sweep": "repeat a command over a parameter range, one row per point",
        "certify": "equilibrium, grid deviation search and Monte Carlo check",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text, description=text)
        _common(sp)
        if name == "br":
            sp.add_argument("--grid", action="store_true", help="search piecewise-constant grid controls")
        if name == "simulate":
            sp.add_argument("--psi", type=float, nargs="+", help="one threshold per agent (default: equilibrium)")
        if name == "verify-hjb":
            sp.add_argument("--case", choices=("silent", "threshold"), default="threshold")
            sp.add_argument("--c", type=float, help="silent case: reward")
            sp.add_argument("--beta", type=float, help="silent case: maximum rate")
            sp.add_argument("--U", type=float, help="silent case: horizon")
            sp.add_argument("--t1", type=float, help="threshold case: switch time (default: derived)")
            sp.add_argument("--partials", choices=("auto", "closed", "fd"), default="auto")
        if name == "sweep":
            sp.add_argument("--param", default="nu", help="setting or option to vary")
            sp.add_argument("--values", type=float, nargs="+")
            sp.add_argument("--start", type=float)
            sp.add_argument("--stop", type=float)
            sp.add_argument("--num", type=int, default=19)
            sp.add_argument("--command", dest="sweep_command", default="solve",
                            choices=[c for c in helps if c != "sweep"])
            sp.add_argument("--psi", type=float, nargs="+")
            sp.add_argument("--grid", action="store_true")
            sp.add_argument("--case", choices=("silent", "threshold"), default="threshold")
            sp.add_argument("--t1", type=float)
            sp.add_argument("--partials", choices=("auto", "closed", "fd"), default="auto")
        sp.set_defaults(func=COMMANDS[name])
    return parser


def run(argv: list[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve(args)
        record, status = args.func(cfg)
        text = render(record, cfg.format)
    except (ParameterError, ConfigError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=stderr)
        return 1
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text, file=stdout)
    if status == 2:
        print("error: check failed (see report)", file=stderr)
    return status


def main(argv: list[str] | None = None) -> int:
    return run(argv)


__all__ = ["RunConfig", "load_config", "resolve", "run", "main", "encode", "decode", "render", "summarize", "build_parser"]
