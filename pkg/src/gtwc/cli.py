"""Command-line front end.

Every command writes one CSV (stdout when ``--out`` is not given). Exit
codes: 0 success, 1 invalid input, 2 optimiser hit its iteration cap (the
results are still written).
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import baselines
from .config import BASELINES, ExperimentConfig, build_config, fmt, parse_config_file
from .model import (
    ChannelParams,
    EncoderPair,
    InvalidInputError,
    Targets,
    power_profile,
    snr_pair,
    block_powers,
    transmit_powers,
)
from .optimizer import PreconditionError, sample_eigen_bounds, two_way_optimize
from .simulator import run_exchange

log = logging.getLogger("gtwc")

EXIT_OK, EXIT_INVALID, EXIT_CAP = 0, 1, 2


class CommandResult:
    def __init__(self, header, rows, exit_code=EXIT_OK, extra=None):
        self.header = header
        self.rows = rows
        self.exit_code = exit_code
        self.extra = extra or {}


def render_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(row[h]) for h in header])
    return buf.getvalue()


def encoder_rows(enc: EncoderPair):
    """Encoder entries as ``(name, row, col, value)``, 1-based, row-major.

    Vectors use ``col = 1``; matrices list strictly-lower entries only.
    """
    rows = []
    for name, vec in (("g1", enc.g1), ("g2", enc.g2)):
        rows += [{"name": name, "row": k + 1, "col": 1, "value": float(v)} for k, v in enumerate(vec)]
    for name, mat in (("f1", enc.f1), ("f2", enc.f2)):
        n = mat.shape[0]
        rows += [{"name": name, "row": r + 1, "col": c + 1, "value": float(mat[r, c])}
                 for r in range(n) for c in range(r)]
    return rows


ENCODER_HEADER = ["name", "row", "col", "value"]


def read_encoder_csv(path, n=None) -> EncoderPair:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != set(ENCODER_HEADER):
        raise InvalidInputError(f"{path}: expected columns {','.join(ENCODER_HEADER)}")
    size = max(int(r["row"]) for r in rows) if n is None else n
    vec = {"g1": np.zeros(size), "g2": np.zeros(size)}
    mat = {"f1": np.zeros((size, size)), "f2": np.zeros((size, size))}
    for r in rows:
        i, j, v = int(r["row"]) - 1, int(r["col"]) - 1, float(r["value"])
        if r["name"] in vec:
            vec[r["name"]][i] = v
        elif r["name"] in mat:
            mat[r["name"]][i, j] = v
        else:
            raise InvalidInputError(f"{path}: unknown entry {r['name']!r}")
    structured = not np.any(np.tril(mat["f2"], -2))
    return EncoderPair(vec["g1"], mat["f1"], vec["g2"], mat["f2"], f2_structured=structured)


def scheme_encoder(cfg: ExperimentConfig, params=None, targets=None):
    """Encoder for the configured scheme plus the optimiser report, if any."""
    params = params or cfg.params
    targets = targets or cfg.targets
    if cfg.baseline == "open-loop":
        return baselines.open_loop(params, targets), None
    if cfg.baseline == "one-way":
        return baselines.one_way_baseline(params, targets, feedback_parity=cfg.feedback_parity), None
    rep = two_way_optimize(params, targets, cfg.optimizer)
    return rep.enc, rep


def open_loop_objective(params, targets):
    a = targets.alpha
    return a * targets.eta1 * params.sigma1_sq + (1 - a) * targets.eta2 * params.sigma2_sq


def cmd_optimize(cfg: ExperimentConfig) -> CommandResult:
    params, targets = cfg.params, cfg.targets
    enc, rep = scheme_encoder(cfg)
    pw = transmit_powers(enc, params, targets.alpha)
    row = {
        "scheme": cfg.baseline, "n": params.n, "sigma1_sq": params.sigma1_sq,
        "sigma2_sq": params.sigma2_sq, "eta1": targets.eta1, "eta2": targets.eta2,
        "alpha": targets.alpha, "objective": pw.weighted, "p1": pw.p1, "p2": pw.p2,
        "snr1": pw.snr1, "snr2": pw.snr2,
        "open_loop_objective": open_loop_objective(params, targets),
        "restart_index": rep.restart_index if rep else -1,
        "converged": rep.converged if rep else True,
        "seed": cfg.optimizer.seed,
    }
    code = EXIT_CAP if rep is not None and not rep.converged else EXIT_OK
    return CommandResult(list(row), [row], code, extra={"encoder": encoder_rows(enc)})


def _sweep_row(cfg, params, targets):
    two = two_way_optimize(params, targets, cfg.optimizer)
    ow = baselines.one_way_baseline(params, targets, feedback_parity=cfg.feedback_parity)
    return two, {
        "obj_two_way": two.objective,
        "obj_open_loop": open_loop_objective(params, targets),
        "obj_one_way": transmit_powers(ow, params, targets.alpha).weighted,
    }


def cmd_sweep_alpha(cfg: ExperimentConfig) -> CommandResult:
    rows, capped = [], False
    for a in cfg.alpha_values:
        targets = Targets(cfg.targets.eta1, cfg.targets.eta2, a)
        rep, row = _sweep_row(cfg, cfg.params, targets)
        capped |= not rep.converged
        rows.append({"alpha": a, **row})
    header = ["alpha", "obj_two_way", "obj_open_loop", "obj_one_way"]
    return CommandResult(header, rows, EXIT_CAP if capped else EXIT_OK)


def cmd_sweep_n(cfg: ExperimentConfig) -> CommandResult:
    rows, capped = [], False
    for n in cfg.n_values:
        params = ChannelParams(n, cfg.params.sigma1_sq, cfg.params.sigma2_sq)
        rep, row = _sweep_row(cfg, params, cfg.targets)
        capped |= not rep.converged
        rows.append({"n": n, **row})
    header = ["n", "obj_two_way", "obj_open_loop", "obj_one_way"]
    return CommandResult(header, rows, EXIT_CAP if capped else EXIT_OK)


def cmd_profile(cfg: ExperimentConfig) -> CommandResult:
    enc, rep = scheme_encoder(cfg)
    prof = power_profile(enc, cfg.params)
    header = ["k", "g1_power", "g2_power", "f2_power", "x1_power", "x2_power"]
    rows = [{h: prof[h][i] for h in header} for i in range(cfg.params.n)]
    code = EXIT_CAP if rep is not None and not rep.converged else EXIT_OK
    return CommandResult(header, rows, code)


def cmd_simulate(cfg: ExperimentConfig) -> CommandResult:
    params = cfg.params
    code = EXIT_OK
    if cfg.encoder_path:
        enc = read_encoder_csv(cfg.encoder_path, params.n)
        source = cfg.encoder_path
    else:
        enc, rep = scheme_encoder(cfg)
        source = cfg.baseline
        if rep is not None and not rep.converged:
            code = EXIT_CAP
    sim = run_exchange(enc, params, cfg.sim)
    p1, p2 = block_powers(enc, params)
    snr1, snr2 = snr_pair(enc, params)
    row = {
        "source": source, "trials": sim.trials, "seed": sim.seed,
        "message_model": cfg.sim.message_model.value,
        "p1": p1, "emp_p1": sim.emp_p1, "stderr_p1": sim.stderr_p1,
        "p2": p2, "emp_p2": sim.emp_p2, "stderr_p2": sim.stderr_p2,
        "snr1": snr1, "emp_snr1": sim.emp_snr1, "stderr_snr1": sim.stderr_snr1,
        "snr2": snr2, "emp_snr2": sim.emp_snr2, "stderr_snr2": sim.stderr_snr2,
        "bias1": sim.bias1, "bias2": sim.bias2,
        "err1": sim.err1, "stderr_err1": sim.stderr_err1,
        "err2": sim.err2, "stderr_err2": sim.stderr_err2,
    }
    return CommandResult(list(row), [row], code)


def cmd_check_eigen_bounds(cfg: ExperimentConfig) -> CommandResult:
    lo, hi = cfg.n_range
    rows = sample_eigen_bounds(cfg.samples, cfg.optimizer.seed, lo, hi,
                             cfg.params.sigma1_sq, cfg.params.sigma2_sq)
    header = ["seed", "sample", "n", "alpha", "nu_min", "lower_ok", "upper_ok"]
    return CommandResult(header, rows)


COMMANDS = {
    "optimize": cmd_optimize,
    "sweep-alpha": cmd_sweep_alpha,
    "sweep-n": cmd_sweep_n,
    "profile": cmd_profile,
    "simulate": cmd_simulate,
    "check-conjecture": cmd_check_eigen_bounds,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value file; flags override it")
    common.add_argument("--n", type=int)
    common.add_argument("--sigma1-sq", type=float)
    common.add_argument("--sigma2-sq", type=float)
    common.add_argument("--eta1", type=float)
    common.add_argument("--eta2", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--restarts", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--eps", type=float)
    common.add_argument("--trials", type=int)
    common.add_argument("--baseline", choices=BASELINES)
    common.add_argument("--out", metavar="PATH")
    common.add_argument("--samples", type=int, help="random draws for check-conjecture")
    common.add_argument("--message-model", choices=("gaussian", "binary"))
    common.add_argument("--encoder", metavar="PATH", help="encoder CSV for simulate")
    common.add_argument("--alpha-values", help="comma-separated weights for sweep-alpha")
    common.add_argument("--n-values", help="comma-separated blocklengths for sweep-n")
    common.add_argument("--feedback-parity", choices=("even", "odd"))
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="gtwc", description="Linear coding for Gaussian two-way channels")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _write(text, path):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        file_values = parse_config_file(args.config) if args.config else {}
        cfg = build_config(file_values, overrides)
        result = COMMANDS[args.command](cfg)
    except (InvalidInputError, PreconditionError, OSError, ValueError) as exc:
        print(f"gtwc {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    _write(render_csv(result.header, result.rows), cfg.output_path)
    if "encoder" in result.extra:
        text = render_csv(ENCODER_HEADER, result.extra["encoder"])
        if cfg.output_path:
            p = Path(cfg.output_path)
            _write(text, p.with_name(p.stem + "_encoder" + (p.suffix or ".csv")))
        else:
            sys.stdout.write("\n" + text)
    if result.exit_code == EXIT_CAP:
        print(f"gtwc {args.command}: optimiser reached max_outer before converging", file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
