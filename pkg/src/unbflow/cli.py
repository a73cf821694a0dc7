"""Command-line front end.

    unbflow gp run INSTANCE.json [--iters K] [--trace t.csv] [--out r.json]
    unbflow opscale run TUPLE.json [--iters K] [--log-every k] [--trace t.csv]
    unbflow opscale analyze TUPLE.json [--iters K] [--gap-threshold g]
    unbflow dm brute MATRIX.json
    unbflow pencil synth --eps 1 --eta 1 [--reg r] --seed S --out p.json
    unbflow pencil recover p.json [--iters K]

Exit status: 0 on success, 1 on invalid input or a failed invariant, 2 when
no block structure could be resolved (or it disagrees with the ground truth
stored next to a synthesized pencil).
"""
import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dm, gp, opscale, pencil
from .errors import (EigenConvergenceError, InstanceError, InvariantViolation,
                     PositivityError, UnresolvedStructure)
from .tuples import MatrixTuple

log = logging.getLogger("unbflow")

COMMANDS = ("gp run", "opscale run", "opscale analyze", "dm brute",
            "pencil synth", "pencil recover")
DEFAULT_ITERS = {"gp run": 100000, "opscale run": 10000, "opscale analyze": 20000,
                 "pencil recover": 20000}


@dataclass(frozen=True)
class RunConfig:
    command: str
    input: Path = None
    iters: int = None
    log_every: int = None
    tol: float = None
    gap_threshold: float = None
    seed: int = None
    out: Path = None
    trace: Path = None
    structure: pencil.PencilStructure = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise InstanceError(f"unknown command {self.command!r}")
        if self.iters is None:
            object.__setattr__(self, "iters", DEFAULT_ITERS.get(self.command, 1))
        if self.iters < 1:
            raise InstanceError("iters must be at least 1")
        if self.log_every is not None:
            if self.log_every < 1 or self.iters % self.log_every:
                raise InstanceError(
                    f"log_every={self.log_every} must be positive and divide iters={self.iters}")
        if self.command == "pencil synth":
            if self.seed is None:
                raise InstanceError("pencil synth needs --seed")
            if self.structure is None or self.structure.is_empty():
                raise InstanceError("pencil synth needs at least one block")
        elif self.input is None:
            raise InstanceError(f"{self.command} needs an input file")


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _write_csv(path, header, rows):
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write trace to {path}: {exc.strerror or exc}") from exc


def trace_export(trace, path, blocks=None, log_every=1):
    """Write an opscale or gp trace as CSV with 17 significant digits.

    For descent traces ``blocks`` selects the lower-block residual column
    (zero for a single block).  Gp traces keep every ``log_every``-th
    iterate and the last one.
    """
    if isinstance(trace, gp.GpTrace):
        n = trace.xs.shape[1]
        header = (["iter", "f", "grad_norm"] + [f"x_{i + 1}" for i in range(n)]
                  + [f"grad_{i + 1}" for i in range(n)])
        K = len(trace)
        idx = [i for i in range(K) if i % log_every == 0 or i == K - 1]
        gn = trace.grad_norms
        rows = ([i, trace.fs[i], gn[i], *trace.xs[i], *trace.grads[i]] for i in idx)
        _write_csv(path, header, rows)
        return
    A = trace.A
    header = (["k", "F", "mu_norm"] + [f"p_{i + 1}" for i in range(A.n)]
              + [f"q_{j + 1}" for j in range(A.m)]
              + ["offdiag_residual", "lower_bound", "upper_bound"])
    blocks = blocks or [(A.n, A.m)]
    rows = []
    for e in trace.entries:
        upper, lower = opscale.certificate(A, e)
        rows.append([e.k, e.F, e.mu_norm, *e.p, *e.q,
                     opscale.trace_residual(e, blocks), lower, upper])
    _write_csv(path, header, rows)


def _read_json(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InstanceError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def _emit(report, cfg):
    text = json.dumps(report, indent=2, sort_keys=True)
    if cfg.out is not None:
        try:
            Path(cfg.out).write_text(text + "\n")
        except OSError as exc:
            raise OSError(f"cannot write report to {cfg.out}: {exc.strerror or exc}") from exc
    print(text)


def _blocks_json(blocks):
    return [list(b) for b in blocks]


def run_gp(cfg):
    inst = gp.GpInstance.from_json(_read_json(cfg.input))
    L = cfg.extra.get("L")
    tr = gp.gp_descent(inst, None, cfg.iters, L=L, stall=True)
    pstar = gp.min_norm_oracle(inst.omegas)
    if cfg.trace:
        trace_export(tr, cfg.trace, log_every=cfg.log_every or 1)
    g = tr.grads[-1]
    _emit({"iters": len(tr) - 1, "stalled_at": tr.stalled_at, "L": tr.L,
           "f": float(tr.fs[-1]), "x": tr.xs[-1].tolist(), "grad": g.tolist(),
           "grad_norm": float(np.linalg.norm(g)), "p_star": pstar.tolist(),
           "min_norm": float(np.linalg.norm(pstar)),
           "grad_minus_p_star": float(np.linalg.norm(g - pstar))}, cfg)
    return 0


def _load_tuple(cfg):
    return MatrixTuple.from_json(_read_json(cfg.input)).validate()


def run_opscale(cfg):
    A = _load_tuple(cfg)
    log_every = cfg.log_every or max(1, cfg.iters // 10)
    tr = opscale.run_descent(A, cfg.iters, log_every, tol=cfg.tol)
    fin = tr.final
    upper, lower = opscale.duality_certificate(A, tr)
    verdict = opscale.classify(tr)
    blocks = None
    if verdict == "unscalable":
        est = opscale.spectral_monitor(fin.state, fin.k).pstar_estimate
        try:
            blocks = opscale.extract_coarse_blocks(est, cfg.gap_threshold, k=fin.k)
        except UnresolvedStructure as exc:
            log.info("no block structure for the trace: %s", exc)
    if cfg.trace:
        trace_export(tr, cfg.trace, blocks)
    _emit({"k": fin.k, "F": fin.F, "mu_norm": fin.mu_norm, "upper": upper,
           "lower": lower, "verdict": verdict,
           "distance": fin.state.distance_from_identity(),
           "deflations": len(tr.deflations),
           "blocks": None if blocks is None else _blocks_json(blocks)}, cfg)
    return 0


def run_analyze(cfg):
    A = _load_tuple(cfg)
    an = opscale.analyze(A, cfg.iters, cfg.log_every, cfg.gap_threshold)
    if cfg.trace:
        trace_export(an.trace, cfg.trace, an.blocks)
    upper, lower = opscale.duality_certificate(A, an.trace, an.blocks)
    ok, worst = dm.verify_flag(A, an.flag, tol=1e-6)
    _emit({"verdict": an.verdict, "blocks": _blocks_json(an.blocks),
           "report": an.report.to_json(), "residual": an.residual,
           "pstar_estimate": [an.pstar_estimate[0].tolist(), an.pstar_estimate[1].tolist()],
           "upper": upper, "lower": lower, "flag": an.flag.to_json(),
           "flag_violation": worst}, cfg)
    return 0


def run_dm_brute(cfg):
    data = _read_json(cfg.input)
    M = data["matrix"] if isinstance(data, dict) and "matrix" in data else data
    try:
        M = np.asarray(M, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InstanceError(f"{cfg.input}: matrix entries must be numbers") from exc
    flag = dm.coordinate_dm_bruteforce(M)
    blocks = list(flag.blocks)
    _emit({"blocks": _blocks_json(blocks), "report": dm.dm_report(blocks).to_json(),
           "row_order": np.argmax(np.abs(flag.row_frame), axis=1).tolist(),
           "col_order": np.argmax(np.abs(flag.col_frame), axis=1).tolist()}, cfg)
    return 0


def run_synth(cfg):
    A, blocks = pencil.synthesize(cfg.structure, cfg.seed)
    data = A.to_json()
    data["structure"] = cfg.structure.to_json()
    data["blocks"] = _blocks_json(blocks)
    data["seed"] = cfg.seed
    text = json.dumps(data, indent=1)
    if cfg.out is None:
        print(text)
    else:
        try:
            Path(cfg.out).write_text(text + "\n")
        except OSError as exc:
            raise OSError(f"cannot write pencil to {cfg.out}: {exc.strerror or exc}") from exc
        print(f"wrote {A.n}x{A.m} pencil with blocks {blocks} to {cfg.out}")
    return 0


def run_recover(cfg):
    data = _read_json(cfg.input)
    A = MatrixTuple.from_json(data).validate()
    if A.N != 2:
        raise InstanceError(f"a pencil has two matrices, got {A.N}")
    an = opscale.analyze(A, cfg.iters, cfg.log_every, cfg.gap_threshold)
    rec = pencil.recover_structure(an.blocks)
    print(f"blocks {an.blocks}")
    print(f"epsilons {list(rec.epsilons)} etas {list(rec.etas)} regular_size {rec.regular_size}")
    print(f"residual {an.residual:.3e} mu_norm {an.trace.final.mu_norm:.6f}")
    if "structure" in data:
        truth = pencil.PencilStructure.from_json(data["structure"])
        match = rec.same_indices(truth)
        print(f"ground truth epsilons {list(truth.epsilons)} etas {list(truth.etas)} "
              f"regular_size {truth.regular_size}: {'match' if match else 'MISMATCH'}")
        if not match:
            return 2
    return 0


HANDLERS = {"gp run": run_gp, "opscale run": run_opscale, "opscale analyze": run_analyze,
            "dm brute": run_dm_brute, "pencil synth": run_synth, "pencil recover": run_recover}


def dispatch(cfg):
    return HANDLERS[cfg.command](cfg)


def build_parser():
    ap = argparse.ArgumentParser(prog="unbflow", description=__doc__.split("\n")[0])
    top = ap.add_subparsers(dest="group", required=True)

    def common(p, iters=True, trace=True):
        p.add_argument("input", type=Path)
        if iters:
            p.add_argument("--iters", type=int)
            p.add_argument("--log-every", type=int)
        if trace:
            p.add_argument("--trace", type=Path, help="CSV trace output")
        p.add_argument("--out", type=Path, help="JSON report output")

    g = top.add_parser("gp").add_subparsers(dest="action", required=True)
    p = g.add_parser("run")
    common(p)
    p.add_argument("--L", type=float, help="step constant (default: smoothness bound)")

    o = top.add_parser("opscale").add_subparsers(dest="action", required=True)
    p = o.add_parser("run")
    common(p)
    p.add_argument("--tol", type=float, help="stop once |mu| <= tol")
    p.add_argument("--gap-threshold", type=float)
    p = o.add_parser("analyze")
    common(p)
    p.add_argument("--gap-threshold", type=float)

    d = top.add_parser("dm").add_subparsers(dest="action", required=True)
    common(d.add_parser("brute"), iters=False, trace=False)

    pc = top.add_parser("pencil").add_subparsers(dest="action", required=True)
    p = pc.add_parser("synth")
    p.add_argument("--eps", type=int, nargs="*", default=[])
    p.add_argument("--eta", type=int, nargs="*", default=[])
    p.add_argument("--reg", type=int, default=0, help="size of the regular part")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p = pc.add_parser("recover")
    common(p, trace=False)
    p.add_argument("--gap-threshold", type=float)
    return ap


def config_from_args(ns):
    command = f"{ns.group} {ns.action}"
    structure = None
    if command == "pencil synth":
        structure = pencil.PencilStructure(tuple(ns.eps), tuple(ns.eta), ns.reg)
    extra = {"L": ns.L} if command == "gp run" else {}
    return RunConfig(command=command, input=getattr(ns, "input", None),
                     iters=getattr(ns, "iters", None), log_every=getattr(ns, "log_every", None),
                     tol=getattr(ns, "tol", None), gap_threshold=getattr(ns, "gap_threshold", None),
                     seed=getattr(ns, "seed", None), out=getattr(ns, "out", None),
                     trace=getattr(ns, "trace", None), structure=structure, extra=extra)


def main(argv=None):
    level = os.environ.get("UNBFLOW_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    ns = build_parser().parse_args(argv)
    try:
        return dispatch(config_from_args(ns))
    except UnresolvedStructure as exc:
        print(f"unresolved: {exc}", file=sys.stderr)
        return 2
    except (InstanceError, PositivityError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 1
    except (InvariantViolation, EigenConvergenceError) as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
