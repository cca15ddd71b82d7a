"""
Command-line driver.

Every command takes its parameters from flags, from a JSON ``--config``
file, or both (flags win). It writes a JSON summary that embeds the fully
resolved configuration and is byte-identical across reruns, detail CSVs,
and a separate ``timing.json`` holding wallclock times.

Exit codes: 0 success, 1 certification or assertion failure, 2 usage or
validation error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from importlib import metadata
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import capacity as cap
from . import converse, idcode, secrecy
from .channel import PoissonChannel, PowerConstraint

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover - running from a source tree
        return "0+unknown"


def _int_list(s: str) -> list[int]:
    return [int(v) for v in str(s).split(",") if v.strip()]


# name -> (type, default, help); default None means required
COMMANDS: dict[str, dict[str, tuple[Callable, Any, str]]] = {
    "capacity": {
        "lambda0": (float, None, "dark current"),
        "pmax": (float, None, "peak intensity"),
        "pavg": (float, "pmax", "average intensity (defaults to pmax)"),
        "gain": (float, 1.0, "channel gain"),
        "tol": (float, cap.BA_TOL, "Blahut-Arimoto gap tolerance, bits"),
        "kkt_tol": (float, cap.KKT_TOL, "optimality-condition tolerance, bits"),
    },
    "secrecy": {
        "lambda_b": (float, None, "main-channel dark current"),
        "lambda_e": (float, None, "eavesdropper dark current"),
        "pmax": (float, None, "peak intensity"),
        "pavg": (float, "pmax", "average intensity"),
        "tol": (float, cap.BA_TOL, "gap tolerance, bits"),
        "kkt_tol": (float, cap.KKT_TOL, "optimality-condition tolerance, bits"),
        "restarts": (int, cap.RESTARTS, "random restarts of the grid stage"),
    },
    "sid": {
        "lambda_b": (float, None, "main-channel dark current"),
        "lambda_e": (float, None, "eavesdropper dark current"),
        "pmax": (float, None, "peak intensity"),
        "pavg": (float, "pmax", "average intensity"),
        "tol": (float, cap.BA_TOL, "gap tolerance, bits"),
        "threshold": (float, cap.POSITIVITY_THRESHOLD, "secrecy positivity threshold, bits"),
    },
    "idsim": {
        "lambda0": (float, 1.0, "dark current"),
        "pmax": (float, 50.0, "peak intensity"),
        "pavg": (float, "pmax", "average intensity"),
        "n": (int, 64, "index-code blocklength"),
        "q": (int, 257, "prime field size"),
        "degree": (int, 4, "polynomial degree"),
        "inner_rate_factor": (float, 0.8, "index-code design rate as a fraction of capacity"),
        "bin_size": (int, 1, "tag-code bin size"),
        "trials": (int, 10_000, "Monte-Carlo trials"),
        "pairs": (int, idcode.DEFAULT_PAIRS, "number of message pairs for second-kind errors"),
        "pair_mode": (str, "worst", "worst or random"),
        "noiseless": (bool, False, "transport codewords without channel noise"),
        "lambda1": (float, 0.05, "first-kind target"),
        "lambda2": (float, 0.05, "second-kind target"),
    },
    "leakage": {
        "lambda_e": (float, 10.0, "eavesdropper dark current"),
        "pmax": (float, 1.0, "peak intensity of ensemble letters"),
        "n": (int, 2, "blocklength of the random ensemble"),
        "messages": (int, 4, "number of messages"),
        "support": (int, 3, "input sequences per message"),
        "grid_points": (int, 8, "quantization grid size"),
        "z0": (int, -1, "output cap for the quantized model (-1: no cap)"),
        "events": (int, 1000, "random events in the audit"),
        "scaling_c": (float, 1.0, "c in the per-letter peak eps = c / n"),
        "scaling_n": (_int_list, "10,100,1000", "blocklengths for the scaling table"),
    },
    "converse": {
        "lambda0": (float, 1.0, "dark current"),
        "pmax": (float, 5.0, "peak intensity"),
        "pavg": (float, "pmax", "average intensity"),
        "n": (_int_list, "10,100,1000", "comma-separated blocklengths"),
        "nu": (float, 0.1, "threshold above capacity, bits"),
        "samples": (int, 100_000, "Monte-Carlo blocks per blocklength"),
    },
}

EVE_OPTIONS = {
    "eve_lambda_b": (float, None, "run an eavesdropper test on a binned ID code with this main dark current"),
    "eve_lambda_e": (float, None, "eavesdropper dark current of the ID test (default 10 x main)"),
    "eve_pmax": (float, 20.0, "peak intensity of the ID code"),
    "eve_n": (int, 1600, "index-code blocklength"),
    "eve_q": (int, 5, "field size"),
    "eve_degree": (int, 1, "polynomial degree"),
    "eve_bin_size": (int, 2048, "tag bin size"),
    "eve_trials": (int, 10_000, "trials per hypothesis"),
}
COMMANDS["leakage"].update(EVE_OPTIONS)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dtpclab", description=__doc__.split("\n\n")[0].strip())
    sub = p.add_subparsers(dest="command", required=True)
    for name, opts in COMMANDS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON file with parameters; flags override it")
        sp.add_argument("--output-dir", type=Path, default=Path("."), help="where to write results")
        sp.add_argument("--seed", type=int, default=None, help="root seed (default 0)")
        sp.add_argument("--threads", type=int, default=None, help="worker cap (default 1)")
        for key, (typ, _, help_) in opts.items():
            flag = "--" + key.replace("_", "-")
            if typ is bool:
                sp.add_argument(flag, dest=key, action="store_const", const=True, default=None, help=help_)
            else:
                sp.add_argument(flag, dest=key, type=typ, default=None, help=help_)
    return p


def resolve_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> dict:
    """Defaults, then the config file, then explicit flags."""
    opts = COMMANDS[args.command]
    file_cfg: dict = {}
    if args.config is not None:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(file_cfg, dict):
            parser.error("config must be a JSON object")
    cfg: dict = {}
    unknown = set(file_cfg) - set(opts) - {"seed", "threads"}
    if unknown:
        parser.error(f"unknown config keys: {sorted(unknown)}")
    for key, (typ, default, _) in opts.items():
        val = getattr(args, key)
        if val is None and file_cfg.get(key) is not None:
            raw = file_cfg[key]
            if typ is _int_list and isinstance(raw, list):
                raw = ",".join(map(str, raw))
            try:
                val = raw if typ is bool else typ(raw)
            except (TypeError, ValueError):
                parser.error(f"bad value for {key}: {raw!r}")
        if val is None and default is not None and not (isinstance(default, str) and default in opts):
            val = typ(default) if typ is not bool else default
        cfg[key] = val
    for key, (_, default, _) in opts.items():
        if cfg[key] is None and isinstance(default, str) and default in opts:
            cfg[key] = cfg[default]
    missing = [k for k, v in cfg.items() if v is None and not k.startswith("eve_")]
    if missing:
        parser.error("missing required parameter(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))
    cfg["seed"] = args.seed if args.seed is not None else int(file_cfg.get("seed", 0))
    cfg["threads"] = args.threads if args.threads is not None else int(file_cfg.get("threads", 1))
    return cfg


# ---------------------------------------------------------------------------
# commands; each returns (summary, csv files, exit code)


def _support_rows(res: cap.CapacityResult) -> list[list]:
    return [["x", "p"]] + [[x, p] for x, p in res.distribution.to_list()]


def cmd_capacity(cfg: dict):
    ch = PoissonChannel.for_peak(cfg["lambda0"], cfg["pmax"], cfg["gain"])
    res = cap.capacity(ch, PowerConstraint(cfg["pmax"], cfg["pavg"]), cfg["tol"], cfg["kkt_tol"])
    code = EXIT_OK if res.certified else EXIT_FAIL
    return {"result": res.to_dict(timing=False)}, {"support.csv": _support_rows(res)}, code


def _pair(cfg: dict) -> cap.WiretapPair:
    return cap.WiretapPair.poisson(cfg["lambda_b"], cfg["lambda_e"], cfg["pmax"])


def cmd_secrecy(cfg: dict):
    res = cap.secrecy_capacity(
        _pair(cfg), PowerConstraint(cfg["pmax"], cfg["pavg"]), cfg["tol"], cfg["kkt_tol"],
        restarts=cfg["restarts"], seed=cfg["seed"],
    )
    code = EXIT_OK if res.certified else EXIT_FAIL
    return {"result": res.to_dict(timing=False)}, {"support.csv": _support_rows(res)}, code


def cmd_sid(cfg: dict):
    rep = cap.sid_capacity(_pair(cfg), PowerConstraint(cfg["pmax"], cfg["pavg"]), cfg["tol"], cfg["threshold"],
                           seed=cfg["seed"])
    ok = rep.main.certified and rep.secrecy.certified
    out = rep.to_dict() | {"main_certified": rep.main.certified, "secrecy_certified": rep.secrecy.certified}
    return {"result": out}, {}, EXIT_OK if ok else EXIT_FAIL


def cmd_idsim(cfg: dict):
    ch = PoissonChannel.for_peak(cfg["lambda0"], cfg["pmax"])
    pc = PowerConstraint(cfg["pmax"], cfg["pavg"])
    c = cap.capacity(ch, pc).capacity_bits
    spec = idcode.build_id_code(
        ch, pc, cfg["n"], cfg["q"], cfg["degree"], inner_rate=cfg["inner_rate_factor"] * c,
        bin_size=cfg["bin_size"], seed=cfg["seed"], lambda1_target=cfg["lambda1"], lambda2_target=cfg["lambda2"],
    )
    rep = idcode.measure_errors(
        spec, None if cfg["noiseless"] else ch, cfg["trials"], cfg["seed"], cfg["pairs"], cfg["pair_mode"],
        keep_rows=True,
    )
    rows = [["trial", "true_msg", "candidate", "accepted", "first_kind", "second_kind"], *map(list, rep.rows)]
    out = {"capacity_bits": c, "code": spec.to_dict(), "report": rep.to_dict()}
    return {"result": out}, {"idsim_trials.csv": rows}, EXIT_OK


def _random_ensemble(cfg: dict, rng: np.random.Generator) -> list[secrecy.MessageInput]:
    ens = []
    for _ in range(cfg["messages"]):
        seqs = rng.uniform(0.0, cfg["pmax"], size=(cfg["support"], cfg["n"]))
        ens.append(secrecy.MessageInput(seqs, rng.dirichlet(np.ones(cfg["support"]))))
    return ens


def cmd_leakage(cfg: dict):
    rng = np.random.default_rng(cfg["seed"])
    eve = PoissonChannel.for_peak(cfg["lambda_e"], cfg["pmax"])
    ens = _random_ensemble(cfg, rng)
    rep = secrecy.leakage_report(ens, eve)
    out: dict[str, Any] = {"report": rep.to_dict()}
    files: dict[str, list] = {}
    code = EXIT_OK
    if rep.exact_mi_bits is not None and rep.exact_mi_bits > rep.chain_rule_bound_bits + 1e-9:
        code = EXIT_FAIL
    scaling = secrecy.leakage_scaling(cfg["scaling_c"], cfg["lambda_e"], cfg["scaling_n"])
    out["scaling"] = scaling
    files["scaling.csv"] = [list(scaling[0])] + [list(r.values()) for r in scaling]
    if len(ens) >= 2:
        z0 = eve.y_max if cfg["z0"] < 0 else cfg["z0"]
        grid = np.linspace(0.0, cfg["pmax"], cfg["grid_points"])
        qi, di = secrecy.quantized_measure(ens[0], eve, z0, grid, 0)
        qj, dj = secrecy.quantized_measure(ens[1], eve, z0, grid, 1)
        audit = secrecy.event_audit(
            secrecy.output_measure(ens[0], eve, 0), secrecy.output_measure(ens[1], eve, 1),
            qi, qj, max(di, dj), cfg["events"], cfg["seed"],
        )
        out["audit"] = {"delta_prime": [di, dj], "bound": audit.bound, "max_gap": audit.max_gap, "holds": audit.holds}
        files["audit.csv"] = [["event_id", "q_i_mass", "q_j_mass", "abs_diff"], *map(list, audit.rows)]
        if not audit.holds:
            code = EXIT_FAIL
    if cfg.get("eve_lambda_b") is not None:
        lb = cfg["eve_lambda_b"]
        ch = PoissonChannel.for_peak(lb, cfg["eve_pmax"])
        le = cfg["eve_lambda_e"] if cfg["eve_lambda_e"] is not None else 10.0 * lb
        eve_id = PoissonChannel.for_peak(le, cfg["eve_pmax"])
        pc = PowerConstraint(cfg["eve_pmax"], cfg["eve_pmax"])
        spec = idcode.build_id_code(ch, pc, cfg["eve_n"], cfg["eve_q"], cfg["eve_degree"],
                                    bin_size=cfg["eve_bin_size"], seed=cfg["seed"])
        ind = secrecy.eve_indistinguishability(spec, eve_id, 0, 1, cfg["eve_trials"], cfg["seed"])
        out["eve_test"] = {"code": spec.to_dict(), "result": ind.to_dict()}
    return out, files, code


def cmd_converse(cfg: dict):
    ch = PoissonChannel.for_peak(cfg["lambda0"], cfg["pmax"])
    tab = converse.converse_experiment(
        ch, PowerConstraint(cfg["pmax"], cfg["pavg"]), cfg["n"], cfg["nu"], cfg["samples"], cfg["seed"],
    )
    rows = [["n", "nu", "empirical_tail", "chebyshev_bound", "samples", "seed"]]
    rows += [[r.n, r.nu, r.empirical_tail, r.chebyshev_bound, r.samples, r.seed] for r in tab.rows]
    return {"result": tab.to_dict() | {"holds": tab.holds}}, {"converse.csv": rows}, EXIT_OK if tab.holds else EXIT_FAIL


HANDLERS = {
    "capacity": cmd_capacity, "secrecy": cmd_secrecy, "sid": cmd_sid,
    "idsim": cmd_idsim, "leakage": cmd_leakage, "converse": cmd_converse,
}


def _write_csv(path: Path, rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = resolve_config(args, parser)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        payload, files, code = HANDLERS[args.command](cfg)
    except (cap.CertificationError, AssertionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ValueError, secrecy.BudgetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    elapsed_ms = (time.perf_counter() - t0) * 1e3
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {"command": args.command, "config": cfg, "root_seed": cfg["seed"], "version": _version(), **payload}
    (out_dir / f"{args.command}.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    (out_dir / "timing.json").write_text(json.dumps({"command": args.command, "wallclock_ms": elapsed_ms}) + "\n")
    for name, rows in files.items():
        _write_csv(out_dir / name, rows)
    print(json.dumps(payload.get("result", payload), indent=2, sort_keys=True, default=str)[:2000])
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
