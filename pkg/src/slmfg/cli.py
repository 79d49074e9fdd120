"""``slmfg`` command-line entry point.

Exit codes: 0 success or verdict delivered, 1 negative verdict (where a
subcommand defines one), 2 usage, parse or missing-file errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import corpus
from .config import DEFAULT, RunConfig
from .cq import check_crcq, check_slater, check_svensson
from .gnep import NotJointlyConvex, ReductionError, check_reduction_equivalence, reduce_grouped_to_nep
from .model import GnepProblem, ProblemFormatError, SlmfgProblem, ValidationError, dumps, load_problem, save_problem
from .mpcc import MpccProblem, build_mpcc, dumps_mpcc, kkt_residual, load_mpcc
from .multipliers import EmptyPolytope, InfeasiblePoint, multiplier_polytope
from .nep import NepError, solve_nep
from .report import Report
from .verify import GATES, InfeasibleBasePoint, is_local_min_mpcc, is_local_min_slmfg

OK, NEGATIVE, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument helpers


def parse_vector(text: str, name: str = "vector") -> np.ndarray:
    text = text.strip().strip("()[]")
    if not text:
        return np.zeros(0)
    try:
        return np.array([float(t) for t in text.replace(";", ",").split(",")], dtype=float)
    except ValueError:
        raise UsageError(f"--{name}: expected comma-separated numbers, got {text!r}") from None


def parse_box(text: str) -> tuple[float, float]:
    v = parse_vector(text, "box")
    if v.size != 2 or not v[0] < v[1]:
        raise UsageError(f"--box: expected 'lo,hi' with lo < hi, got {text!r}")
    return float(v[0]), float(v[1])


def resolve_problem_path(name: str) -> Path:
    """Plain path, or ``corpus/<id>`` for a built-in entry."""
    p = Path(name)
    if p.exists():
        return p
    if p.suffix == "" and p.with_suffix(".slmfg").exists():
        return p.with_suffix(".slmfg")
    if p.parent.name == "corpus" and p.stem in corpus.IDS:
        return corpus.corpus_path(p.stem)
    raise FileNotFoundError(f"problem file not found: {name}")


def load(name: str) -> SlmfgProblem | GnepProblem:
    return load_problem(resolve_problem_path(name))


def load_slmfg(name: str) -> SlmfgProblem:
    p = load(name)
    if not isinstance(p, SlmfgProblem):
        raise UsageError(f"{name} is a grouped (GNEP) instance; reduce it first with reduce-gnep")
    return p


def load_gnep(name: str) -> GnepProblem:
    p = load(name)
    if not isinstance(p, GnepProblem):
        raise UsageError(f"{name} has no group sections")
    return p


def make_config(args) -> RunConfig:
    cfg = DEFAULT
    if args.config:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        # same key names as the flags: --grid-step -> grid-step (or grid_step)
        data = {k.replace("-", "_"): v for k, v in data.items()}
        if "format" in data:
            data["fmt"] = data.pop("format")
        cfg = _from_dict(data, cfg)
    return cfg.with_(
        seed=args.seed, tol=args.tol, grid_step=args.grid_step,
        box=parse_box(args.box) if args.box else None, fmt=args.format,
    )


def _from_dict(data: dict, base: RunConfig) -> RunConfig:
    known = set(base.as_dict())
    unknown = set(data) - known
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "box" in data:
        data["box"] = tuple(data["box"])
    return base.with_(**data)


def _x(args, p) -> np.ndarray:
    if args.x is None:
        raise UsageError("--x is required")
    x = parse_vector(args.x, "x")
    if x.size != p.leader.dim:
        raise UsageError(f"--x needs {p.leader.dim} value(s), got {x.size}")
    return x


def _follower(p: SlmfgProblem, fid: str | None) -> str:
    ids = [f.id for f in p.followers]
    if fid is None:
        if len(ids) == 1:
            return ids[0]
        raise UsageError(f"--follower is required (one of: {', '.join(ids)})")
    if fid not in ids:
        raise UsageError(f"unknown follower {fid!r} (one of: {', '.join(ids)})")
    return fid


def _blocks(p: SlmfgProblem, y: np.ndarray) -> list[np.ndarray]:
    if y.size != p.n_followers_total:
        raise UsageError(f"--y needs {p.n_followers_total} value(s) (all follower blocks), got {y.size}")
    out, k = [], 0
    for f in p.followers:
        out.append(y[k : k + f.dim])
        k += f.dim
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve_nep(args, cfg, rep: Report) -> int:
    p = load_slmfg(args.problem)
    x = _x(args, p)
    try:
        sol = solve_nep(p, x, cfg)
    except NepError as exc:
        rep.add("nep", x=x, status=type(exc).__name__, detail=str(exc))
        return NEGATIVE
    rep.add("nep", x=x, status=sol.status, count=len(sol.equilibria), continuum_suspected=sol.continuum_suspected)
    for i, e in enumerate(sol.equilibria):
        rep.add("equilibrium", index=i, y=e.point, gap=e.max_gap, residual=e.kkt_residual)
    return OK if sol.found else NEGATIVE


def cmd_reformulate(args, cfg, rep: Report) -> int:
    m = build_mpcc(load_slmfg(args.problem))
    text = dumps_mpcc(m)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        rep.add("mpcc", out=args.out, variables=len(m.variables),
                multipliers=sum(len(b.multipliers) for b in m.blocks))
    else:
        rep.text = text
    return OK


def _mpcc_from(args) -> MpccProblem:
    if args.mpcc:
        return load_mpcc(resolve_problem_path(args.mpcc))
    if args.problem:
        return build_mpcc(load_slmfg(args.problem))
    raise UsageError("give --mpcc M or --problem P")


def cmd_check_point(args, cfg, rep: Report) -> int:
    m = _mpcc_from(args)
    point = parse_vector(args.point, "point")
    if point.size != m.dim:
        raise UsageError(f"--point needs {m.dim} values (x, y, lambda), got {point.size}")
    r = kkt_residual(m, point)
    x = point[: m.leader.dim]
    feasible = r.total <= cfg.feas_tol and m.leader.contains(x, cfg.feas_tol)
    rep.add("kkt_residual", point=point, stationarity_norm=r.stationarity_norm,
            feasibility_violation=r.feasibility_violation, sign_violation=r.sign_violation,
            complementarity_gap=r.complementarity_gap, total=r.total, feasible=feasible)
    return OK if feasible else NEGATIVE


def cmd_vertices(args, cfg, rep: Report) -> int:
    p = load_slmfg(args.problem)
    fid = _follower(p, args.follower)
    x = _x(args, p)
    ys = _blocks(p, parse_vector(args.y, "y"))
    poly = multiplier_polytope(p, fid, x, ys, cfg.activity_tol, cfg.rank_tol)
    vs = poly.vertices()
    rep.add("polytope", follower=fid, x=x, y=np.concatenate(ys), active=poly.active.indices,
            A=poly.A, b=poly.b, rank=poly.rank(), empty=poly.is_empty(), bounded=poly.bounded,
            vertices=len(vs), rays=len(poly.rays()))
    for i, v in enumerate(vs):
        rep.add("vertex", index=i, lam=v)
    for i, d in enumerate(poly.rays()):
        rep.add("ray", index=i, direction=d)
    return OK


def cmd_check_cq(args, cfg, rep: Report) -> int:
    p = load_slmfg(args.problem)
    if args.which == "svensson":
        r = check_svensson(p, cfg.box, cfg=cfg)
        for f in r.followers:
            mv = f.midpoint_violation
            rep.add("svensson", follower=f.fid, objective_convex=f.objective_convex,
                    joint_convex=f.joint_convex, strict_point=f.strict_point,
                    midpoint_u=mv.u if mv else None, midpoint_v=mv.v if mv else None,
                    strict_witness=f.strict_witness)
        rep.add("summary", all_hold=r.all_hold())
        return OK
    fid = _follower(p, args.follower)
    x = _x(args, p)
    if args.which == "slater":
        r = check_slater(p, fid, x, cfg=cfg)
        rep.add("slater", follower=fid, x=x, verdict=r.verdict, witness=r.witness,
                max_constraint_value_at_witness=r.max_constraint_value_at_witness, reason=r.reason)
        return OK
    if args.y is None:
        raise UsageError("--which crcq needs --y (the follower's own block)")
    y = parse_vector(args.y, "y")
    if y.size != p.follower(fid).dim:
        raise UsageError(f"--y needs follower {fid}'s {p.follower(fid).dim} value(s), got {y.size}")
    r = check_crcq(p, fid, x, y, args.radius, args.samples, cfg.seed, cfg)
    w = r.witness
    rep.add("crcq", follower=fid, point=r.point, active=r.active, verdict=r.verdict,
            radius=r.radius, samples=r.samples,
            ranks_at_point=";".join(f"{fmt_subset(s)}:{k}" for s, k in sorted(r.ranks_at_point.items())))
    if w is not None:
        rep.add("witness", subset=w.subset, point1=w.point1, rank1=w.rank1, point2=w.point2, rank2=w.rank2)
    return OK


def fmt_subset(s) -> str:
    return "{" + ",".join(map(str, s)) + "}"


def cmd_verify_local(args, cfg, rep: Report) -> int:
    p = load_slmfg(args.problem)
    point = parse_vector(args.point, "point")
    if args.mpcc:
        v = is_local_min_mpcc(build_mpcc(p), point, args.radius, args.step, cfg)
    else:
        v = is_local_min_slmfg(p, point, args.radius, args.step, cfg)
    rep.add("local_min", problem="mpcc" if args.mpcc else "slmfg", point=v.point, radius=v.radius, step=v.step,
            verdict=v.verdict, better_point=v.better_point, objective_gap=v.objective_gap,
            feasible_neighbors_tested=v.feasible_neighbors_tested)
    return OK


def cmd_gate(args, cfg, rep: Report) -> int:
    p = load_slmfg(args.problem)
    point = parse_vector(args.point, "point")
    kw = {}
    if args.theorem != "t2.2":
        kw = {"radius": args.radius, "step": args.step}
    try:
        r = GATES[args.theorem](p, point, cfg=cfg, **kw)
    except EmptyPolytope as exc:
        rep.add("gate", theorem=args.theorem, status="NotApplicable", detail=str(exc))
        return OK
    rep.add("gate", theorem=r.theorem, status=r.label, conclusion=r.conclusion,
            conclusion_detail=r.conclusion_detail, witness=r.witness, coverage=r.coverage)
    for h in r.hypotheses:
        rep.add("hypothesis", name=h.name, status=h.status, detail=h.detail)
    for lam in r.failing_multipliers:
        rep.add("failing_multiplier", lam=lam)
    return OK


def cmd_reduce_gnep(args, cfg, rep: Report) -> int:
    g = load_gnep(args.problem)
    try:
        red = reduce_grouped_to_nep(g, args.assume_jointly_convex, cfg.box)
    except NotJointlyConvex as exc:
        rep.add("reduction", status="Refused", group=exc.group, constraint=exc.constraint, detail=str(exc))
        return NEGATIVE
    if args.out:
        save_problem(red, args.out)
        rep.add("reduction", status="Reduced", out=args.out, followers=[f.id for f in red.followers],
                assumed=args.assume_jointly_convex)
    else:
        rep.text = dumps(red)
    return OK


def cmd_check_gnep_equiv(args, cfg, rep: Report) -> int:
    g = load_gnep(args.problem)
    x = _x(args, g)
    r = check_reduction_equivalence(g, x, cfg.grid_step, cfg.box, cfg)
    rep.add("equivalence", x=x, step=r.step, box=r.box, hypothesis=r.hypothesis, equivalent=r.equivalent,
            rgnep=len(r.rgnep), reduced=len(r.reduced),
            only_in_rgnep=len(r.only_in_rgnep), only_in_reduced=len(r.only_in_reduced))
    for q in r.only_in_rgnep[:20]:
        rep.add("only_in_rgnep", y=q)
    for q in r.only_in_reduced[:20]:
        rep.add("only_in_reduced", y=q)
    for n in r.notes:
        rep.add("note", text=n)
    return OK if r.equivalent else NEGATIVE


def cmd_corpus(args, cfg, rep: Report) -> int:
    if args.action == "list":
        for eid in corpus.IDS:
            e = corpus.builtin(eid)
            rep.add("entry", id=eid, kind="gnep" if isinstance(e.problem, GnepProblem) else "slmfg",
                    facts=len(e.facts), note=e.note)
        return OK
    if args.action == "show":
        if not args.id:
            raise UsageError("corpus show needs an entry id")
        e = corpus.builtin(args.id)
        rep.add("entry", id=e.id, path=e.path.name, note=e.note)
        for i, f in enumerate(e.facts, 1):
            rep.add("fact", index=i, kind=f.kind, location=f.location, expected=f.expected,
                    provenance=f.provenance, checker=f.checker)
        if cfg.fmt == "human":
            rep.text_after = dumps(e.problem)
        return OK
    if args.id and args.id not in corpus.IDS + ("all",):
        raise UsageError(f"unknown corpus entry {args.id!r}; known: {', '.join(corpus.IDS)}")
    r = corpus.run_corpus(args.id, cfg)
    for res in r.results:
        f = res.fact
        rep.add("fact", entry=res.entry, index=res.index, kind=f.kind, location=f.location,
                provenance=f.provenance, checker=f.checker, status="pass" if res.ok else "FAIL",
                expected=f.expected, observed=res.observed)
    rep.add("summary", passed=r.passed, failed=r.failed, total=len(r.results))
    return OK if r.ok else NEGATIVE


# ---------------------------------------------------------------------------
# parser


def _common() -> argparse.ArgumentParser:
    c = argparse.ArgumentParser(add_help=False)
    g = c.add_argument_group("run configuration")
    g.add_argument("--format", choices=("human", "records"), default=None)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--tol", type=float, default=None)
    g.add_argument("--grid-step", type=float, default=None)
    g.add_argument("--box", default=None, metavar="LO,HI")
    g.add_argument("--config", default=None, metavar="PATH", help="JSON file with RunConfig keys")
    return c


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="slmfg", description="Single-leader multi-follower game toolkit")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_, description=help_)
        sp.set_defaults(func=fn)
        return sp

    sp = add("solve-nep", cmd_solve_nep, "Nash equilibria of the followers at a leader decision")
    sp.add_argument("--problem", required=True)
    sp.add_argument("--x", required=True)

    sp = add("reformulate", cmd_reformulate, "write the KKT (MPCC) reformulation")
    sp.add_argument("--problem", required=True)
    sp.add_argument("--out")

    sp = add("check-point", cmd_check_point, "KKT residuals of an MPCC point")
    sp.add_argument("--mpcc")
    sp.add_argument("--problem")
    sp.add_argument("--point", required=True)

    sp = add("vertices", cmd_vertices, "multiplier polytope at a follower point")
    sp.add_argument("--problem", required=True)
    sp.add_argument("--follower")
    sp.add_argument("--x", required=True)
    sp.add_argument("--y", required=True, help="all follower blocks, concatenated")

    sp = add("check-cq", cmd_check_cq, "Slater, CRCQ or Svensson conditions")
    sp.add_argument("--problem", required=True)
    sp.add_argument("--which", required=True, choices=("slater", "crcq", "svensson"))
    sp.add_argument("--follower")
    sp.add_argument("--x")
    sp.add_argument("--y", help="the follower's own block (crcq)")
    sp.add_argument("--radius", type=float)
    sp.add_argument("--samples", type=int)

    sp = add("verify-local", cmd_verify_local, "grid scan for a strictly better feasible neighbor")
    sp.add_argument("--problem", required=True)
    sp.add_argument("--mpcc", action="store_true", help="point is an MPCC point (x, y, lambda)")
    sp.add_argument("--point", required=True)
    sp.add_argument("--radius", type=float)
    sp.add_argument("--step", type=float)

    sp = add("gate", cmd_gate, "theorem gate: hypotheses and conclusion at a point")
    sp.add_argument("--problem", required=True)
    sp.add_argument("--theorem", required=True, choices=sorted(GATES))
    sp.add_argument("--point", required=True)
    sp.add_argument("--radius", type=float)
    sp.add_argument("--step", type=float)

    sp = add("reduce-gnep", cmd_reduce_gnep, "reduce a grouped GNEP to a plain follower game")
    sp.add_argument("--problem", required=True)
    sp.add_argument("--out")
    sp.add_argument("--assume-jointly-convex", action="store_true")

    sp = add("check-gnep-equiv", cmd_check_gnep_equiv, "compare grid solution sets of a GNEP and its reduction")
    sp.add_argument("--problem", required=True)
    sp.add_argument("--x", required=True)

    sp = add("corpus", cmd_corpus, "built-in examples and their expected facts")
    sp.add_argument("action", choices=("list", "show", "run"))
    sp.add_argument("id", nargs="?")
    return ap


VALUE_FLAGS = ("--x", "--y", "--point", "--box")


def _glue_negative_values(argv: list[str]) -> list[str]:
    """``--box -1,1`` -> ``--box=-1,1`` so argparse does not read the value as a flag."""
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a in VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1][:1] == "-" and argv[i + 1][1:2] in "0123456789.":
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def main(argv=None) -> int:
    ap = build_parser()
    argv = _glue_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        cfg = make_config(args)
        rep = Report(cfg, args.command)
        code = args.func(args, cfg, rep)
    except (UsageError, ValueError, FileNotFoundError, KeyError, InfeasiblePoint, InfeasibleBasePoint,
            ReductionError, ProblemFormatError, ValidationError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"slmfg: error: {msg}", file=sys.stderr)
        return USAGE
    if rep.text is not None:
        sys.stdout.write(rep.text)
    else:
        sys.stdout.write(rep.render())
        if rep.text_after:
            sys.stdout.write("\n" + rep.text_after)
    sys.stdout.flush()
    return code


if __name__ == "__main__":
    sys.exit(main())
