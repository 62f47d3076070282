"""Command line entry point.

    irw CMD WORKSPACE [options]

Commands: validate, src, tgt, mind, steps, layer, denote, to-redseq,
compress, factorise, cfps, cfpc, check-derivation, deneq, breq.
Workspaces are `sig` / `rule` / `term` / `pt` files; derivations are
JSON certificates; reduction schedules are JSON block lists.  Output is
JSON (`--pretty` adds unfolded previews of the rational terms).  Exit
codes: 2 divergence, 3 invalid derivation, 1 any other error.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import denotation as D
from . import proofterm as P
from . import term as T
from . import trs as R
from .compression import cfpc, cfps, compress, factorise
from .certificates import (certificate_mode, derivation_to_json,
                           load_certificate)
from .equivalence import check_derivation
from .errors import DerivationInvalid, IrwError, NonConvergent
from .ordinal import Ordinal
from .syntax import Workspace, parse_ast, parse_file, parse_pt, pt_text, Compiler


def _unfold(t, depth):
    def go(tr, d):
        nd = tr.node()
        if not nd.children:
            return nd.label
        if d == 0:
            return "..."
        inner = ", ".join(go(T.subterm_at(tr, (i,)), d - 1)
                          for i in range(1, len(nd.children) + 1))
        return f"{nd.label}({inner})"
    return go(t, depth)


def _term_out(t, args):
    out = {"term": T.to_text(t)}
    if args.pretty:
        out["unfolded"] = _unfold(t, args.depth)
    return out


def _mind_str(m):
    return "w" if m == float("inf") else int(m)


def parse_pos_template(text: str) -> R.PosTemplate:
    text = text.strip()
    if "^" not in text:
        return R.PosTemplate(T.pos_parse(text) if text not in ("e", "") else (),
                             (), 0, 0)
    left, aff = text.rsplit("^", 1)
    left = left.strip()
    if left.endswith(")"):
        i = left.rindex("(")
        rep = T.pos_parse(left[i + 1:-1])
        base = T.pos_parse(left[:i].rstrip("."))
    else:
        parts = left.split(".")
        rep = (int(parts[-1]),)
        base = tuple(int(x) for x in parts[:-1])
    aff = aff.strip()
    a, b = 1, 0
    if "*" in aff:
        astr, rest = aff.split("*", 1)
        a = int(astr)
        aff = rest
    if "+" in aff:
        v, bstr = aff.split("+", 1)
        b = int(bstr)
    elif aff.isdigit():
        a, b = 0, int(aff)
    return R.PosTemplate(base, rep, a, b)


def parse_schedule(doc, ws: Workspace) -> R.ReductionSequence:
    spec = ws.spec
    comp = Compiler(spec.signature_r(), spec)
    source = comp.term(parse_ast(doc["source"]))
    blocks = []
    current = source
    for blk in doc.get("blocks", []):
        kind = blk["kind"]
        if kind == "finite":
            steps = []
            for s in blk["steps"]:
                src = comp.term(parse_ast(s["src"])) if "src" in s else current
                step = R.mk_step(spec, src, T.pos_parse(s["pos"]), s["rule"])
                steps.append(step)
                current = R.apply_step(step)
            blocks.append(R.FiniteBlock(tuple(steps)))
        elif kind == "omega":
            ivar = blk.get("index", "i")
            fam_ast = parse_ast(blk["src_family"])
            famc = Compiler(spec.signature_r(), spec)
            pfam = famc.family(fam_ast, ivar)
            tf = pfam.tf if isinstance(pfam, P.MStepF) else \
                T.SampledTF(lambda i, f=pfam: P.pt_family_at(f, i).term)
            blocks.append(R.OmegaBlock(tf, parse_pos_template(blk["pos"]),
                                       blk["rule"]))
            current = None
        else:
            raise IrwError(f"unknown block kind {kind}")
    return R.ReductionSequence(source, tuple(blocks))


def schedule_to_json(spec, r: R.ReductionSequence) -> dict:
    from .syntax import termfam_text
    blocks = []
    for blk in r.blocks:
        if isinstance(blk, R.FiniteBlock):
            blocks.append({"kind": "finite", "steps": [
                {"src": T.to_text(s.source), "pos": T.pos_str(s.position),
                 "rule": s.rule.name} for s in blk.steps]})
        elif isinstance(blk, R.OmegaBlock):
            pos = blk.pos
            post = T.pos_str(pos.base) if not pos.rep else \
                (f"{T.pos_str(pos.base)}." if pos.base else "") + \
                f"({T.pos_str(pos.rep)})^{pos.a}*i+{pos.b}"
            blocks.append({"kind": "omega", "pos": post, "rule": blk.rule_name,
                           "src_family": termfam_text(blk.src_family, "i")})
        elif isinstance(blk, R.OmegaChunks):
            blocks.append({"kind": "omega-chunks", "chunks_sampled": [
                [{"src": T.to_text(s.source), "pos": T.pos_str(s.position),
                  "rule": s.rule.name} for s in blk.chunk_fn(j)]
                for j in range(3)]})
        else:
            blocks.append({"kind": "omega-iter", "note": "sampled rendering"})
    return {"source": T.to_text(r.source), "length": str(r.length()),
            "blocks": blocks}


def _get_pt(ws, args, which="pt"):
    name = getattr(args, which.replace("-", "_"))
    if name is None:
        raise IrwError(f"--{which} NAME is required")
    if name not in ws.pts:
        raise IrwError(f"unknown proof term {name!r}")
    return ws.pts[name]


def run(args) -> tuple:
    """(exit code, output dict)."""
    ws = parse_file(open(args.workspace).read())
    spec = ws.spec
    k = args.samples

    if args.cmd == "validate":
        out = {"flags": spec.flags(), "terms": {}, "pts": {}}
        for name, t in ws.terms.items():
            out["terms"][name] = T.term_validate(t, spec.signature_r())
        for name, p in ws.pts.items():
            info = P.analyze(spec, p, k)
            out["pts"][name] = {
                "layer": str(info.layer), "src": T.to_text(info.src),
                "mind": _mind_str(info.mind), "convergent": info.convergent,
                "classify": {kk: bool(v)
                             for kk, v in P.classify(spec, p).items()},
            }
        return 0, out

    if args.cmd in ("src", "tgt", "mind", "steps", "layer"):
        p = _get_pt(ws, args)
        info = P.analyze(spec, p, k)
        if args.cmd == "src":
            return 0, _term_out(info.src, args)
        if args.cmd == "tgt":
            if not info.convergent:
                raise NonConvergent("proof term diverges", witness=info.witness)
            return 0, _term_out(info.tgt, args)
        if args.cmd == "mind":
            return 0, {"mind": _mind_str(info.mind)}
        if args.cmd == "steps":
            return 0, {"steps": str(D.steps_count(spec, p, k))}
        return 0, {"layer": str(info.layer)}

    if args.cmd == "denote":
        doc = json.load(open(args.schedule))
        r = parse_schedule(doc, ws)
        p = D.denote_redseq(spec, r, k)
        return 0, {"pt": pt_text(p), "steps": str(D.steps_count(spec, p, k))}

    if args.cmd == "to-redseq":
        p = _get_pt(ws, args)
        r = D.to_redseq(spec, p, k)
        return 0, schedule_to_json(spec, r)

    if args.cmd == "compress":
        p = _get_pt(ws, args)
        q, d = compress(spec, p, k)
        rep = check_derivation(spec, d, "full", k)
        iq = P.analyze(spec, q, k)
        out = {"result": pt_text(q),
               "derivation": derivation_to_json(d) if args.emit_derivation
               else {"checked": rep.ok, "exact": rep.exact},
               "stats": {"steps_count": str(D.steps_count(spec, q, k)),
                         "mind": _mind_str(iq.mind),
                         "layers": str(iq.layer)}}
        return 0, out

    if args.cmd == "factorise":
        p = _get_pt(ws, args)
        chi, phi, d = factorise(spec, p, args.n, k)
        rep = check_derivation(spec, d, "base", k)
        return 0, {"chi": pt_text(chi), "phi": pt_text(phi),
                   "checked": rep.ok,
                   "mind_phi": _mind_str(P.analyze(spec, phi, k).mind)}

    if args.cmd == "cfps":
        p = _get_pt(ws, args)
        q, d = cfps(spec, p, k)
        rep = check_derivation(spec, d, "base", k)
        return 0, {"result": pt_text(q), "checked": rep.ok}

    if args.cmd == "cfpc":
        p = _get_pt(ws, args)
        spa = {T.pos_parse(x) for x in args.spa.split(",")} if args.spa else set()
        q, d = cfpc(spec, p, spa, k)
        rep = check_derivation(spec, d, "base", k)
        return 0, {"result": pt_text(q), "checked": rep.ok}

    if args.cmd == "check-derivation":
        doc = json.load(open(args.cert))
        d = load_certificate(spec, doc)
        mode = args.mode or certificate_mode(doc)
        rep = check_derivation(spec, d, mode, k)
        return 0, {"checked": rep.ok, "mode": rep.mode, "exact": rep.exact,
                   "layer": str(rep.layer),
                   "lhs": pt_text(d.lhs), "rhs": pt_text(d.rhs)}

    if args.cmd == "deneq":
        p, q = _get_pt(ws, args), _get_pt(ws, args, "pt2")
        return 0, D.deneq_check(spec, p, q, k)

    if args.cmd == "breq":
        p, q = _get_pt(ws, args), _get_pt(ws, args, "pt2")
        if args.cert:
            doc = json.load(open(args.cert))
            d = load_certificate(spec, doc)
            rep = D.breq_check(spec, d, p, q,
                               args.mode or certificate_mode(doc), k)
            return 0, {"status": "derivable", "checked": rep.ok}
        d = D.breq_search(spec, p, q)
        if d is None:
            return 0, {"status": "not-found"}
        rep = D.breq_check(spec, d, p, q, "base", k)
        return 0, {"status": "derivable", "checked": rep.ok}

    raise IrwError(f"unknown command {args.cmd}")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="irw", description=__doc__)
    ap.add_argument("cmd", choices=["validate", "src", "tgt", "mind", "steps",
                                    "layer", "denote", "to-redseq", "compress",
                                    "factorise", "cfps", "cfpc",
                                    "check-derivation", "deneq", "breq"])
    ap.add_argument("workspace")
    ap.add_argument("--pt")
    ap.add_argument("--pt2")
    ap.add_argument("--cert")
    ap.add_argument("--schedule")
    ap.add_argument("--n", type=int, default=0)
    ap.add_argument("--spa", default="")
    ap.add_argument("--mode", choices=["base", "full"])
    ap.add_argument("--depth", type=int, default=32)
    ap.add_argument("--samples", type=int, default=8)
    ap.add_argument("--pretty", action="store_true")
    ap.add_argument("--emit-derivation", action="store_true")
    ap.add_argument("--out")
    args = ap.parse_args(argv)
    try:
        code, out = run(args)
    except NonConvergent as e:
        out, code = {"error": "non-convergent", "detail": str(e),
                     "witness": str(e.witness)}, 2
    except DerivationInvalid as e:
        out, code = {"error": "derivation-invalid", "at": str(e.path),
                     "detail": e.reason}, 3
    except IrwError as e:
        out, code = {"error": type(e).__name__, "detail": str(e)}, 1
    text = json.dumps(out, indent=2)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
    else:
        print(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
