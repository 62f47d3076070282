"""Derivation certificates as JSON files.

A certificate carries a derivation tree whose proof terms are written
in the concrete syntax.  Index families (infcomp premises, lim premise
pairs) are JSON templates over a named index variable, instantiated on
demand.  Recursive derivation schemes -- premise families whose proof
size grows with the index -- are expressed with named definitions:

  {"lets":      {"NAME": "proof term text", ...},
   "ptdefs":    {"chi": {"index": "k", "base": "...", "step": "..."}},
   "derivdefs": {"P":   {"index": "k", "base": node, "step": node}},
   "mode":      "base" | "full",
   "conclusion": {"lhs": "...", "rhs": "..."},
   "root":      node}

In `step` templates, `name{k-1}` (proof terms) and {"call": "P", "at":
"k-1"} (derivations) refer to the previous instance.  `lets` are plain
token substitutions into every term string.
"""
from __future__ import annotations

import json
import re

from . import proofterm as P
from .equivalence import Derivation, DerivFamily
from .errors import DerivationInvalid, ParseError
from .syntax import Compiler, parse_ast
from .trs import TRSpec

_NODE_RULES = ("refl", "eqn", "symm", "trans", "fun", "rule", "comp",
               "infcomp", "lim")


class CertificateLoader:
    def __init__(self, spec: TRSpec, doc: dict):
        self.spec = spec
        self.doc = doc
        self.lets = doc.get("lets", {})
        self.ptdefs = {}
        for name, d in doc.get("ptdefs", {}).items():
            self.ptdefs[name] = (d["index"], self._ast(d["base"]),
                                 self._ast(d["step"]) if "step" in d else None)
        self.derivdefs = doc.get("derivdefs", {})
        self._dmemo = {}

    def _expand(self, text: str) -> str:
        for _ in range(8):
            out = text
            for name, repl in self.lets.items():
                out = re.sub(rf"\b{re.escape(name)}\b", f"({repl})", out)
            if out == text:
                return out
            text = out
        return text

    def _ast(self, text: str):
        return parse_ast(self._expand(text))

    def _compiler(self, env):
        defs = {}
        for name, (param, base, step) in self.ptdefs.items():
            defs[name] = (param, base, step)
        c = Compiler(self.spec.signature_r(), self.spec, dict(env))
        c.defs = defs
        c.instantiate = self._instantiate_pt(c)
        return c

    def _instantiate_pt(self, compiler):
        memo = {}

        def inst(name, k):
            if name not in self.ptdefs:
                raise DerivationInvalid((), f"unknown proof-term template {name}")
            if (name, k) in memo:
                return memo[(name, k)]
            param, base, step = self.ptdefs[name]
            ast = base if (k == 0 or step is None) else step
            sub = self._compiler({param: k})
            sub.instantiate = inst
            out = sub.pt(ast)
            memo[(name, k)] = out
            return out

        return inst

    def pt(self, text: str, env) -> P.ProofTerm:
        return self._compiler(env).pt(self._ast(text))

    def derivation(self, node, env) -> Derivation:
        if "call" in node:
            return self._call(node["call"], self._index(node.get("at", "0"), env))
        rule = node.get("rule")
        if rule not in _NODE_RULES:
            raise DerivationInvalid((), f"unknown rule tag {rule!r}")
        if rule == "refl":
            if "term" in node:
                t = self.pt(node["term"], env)
                return Derivation("refl", t, t)
            # two renderings of the same proof term
            return Derivation("refl", self.pt(node["lhs"], env),
                              self.pt(node["rhs"], env))
        if rule == "eqn":
            return Derivation("eqn", self.pt(node["lhs"], env),
                              self.pt(node["rhs"], env), schema=node["schema"])
        if rule == "symm":
            c = self.derivation(node["child"], env)
            return Derivation("symm", c.rhs, c.lhs, (c,))
        if rule == "trans":
            cs = tuple(self.derivation(c, env) for c in node["children"])
            return Derivation("trans", cs[0].lhs, cs[-1].rhs, cs)
        if rule in ("fun", "rule"):
            cs = tuple(self.derivation(c, env) for c in node["children"])
            mk = P.fun if rule == "fun" else P.rule_pt
            lhs = mk(node["symbol"], [c.lhs for c in cs])
            rhs = mk(node["symbol"], [c.rhs for c in cs])
            return Derivation(rule, lhs, rhs, cs, label=node["symbol"])
        if rule == "comp":
            c1, c2 = (self.derivation(c, env) for c in node["children"])
            return Derivation("comp", P.comp(c1.lhs, c2.lhs),
                              P.comp(c1.rhs, c2.rhs), (c1, c2))
        if rule == "infcomp":
            ivar = node.get("index", "i")
            lhs = self.pt(node["lhs"], env)
            rhs = self.pt(node["rhs"], env)

            def fam(i, node=node, env=env, ivar=ivar):
                return self.derivation(node["premise"], {**env, ivar: i})

            return Derivation("infcomp", lhs, rhs, fam=DerivFamily(fam))
        if rule == "lim":
            kvar = node.get("index", "k")
            lhs = self.pt(node["lhs"], env)
            rhs = self.pt(node["rhs"], env)

            def fam_l(k, env=env):
                return self.derivation(node["premise_l"], {**env, kvar: k})

            def fam_r(k, env=env):
                return self.derivation(node["premise_r"], {**env, kvar: k})

            return Derivation("lim", lhs, rhs, lim_l=DerivFamily(fam_l),
                              lim_r=DerivFamily(fam_r))
        raise DerivationInvalid((), f"unhandled rule {rule}")

    def _index(self, expr, env):
        expr = str(expr).strip()
        m = re.fullmatch(r"([a-z][a-z0-9]*)\s*([+-]\s*\d+)?", expr)
        if m:
            v = env.get(m.group(1))
            if v is None:
                raise DerivationInvalid((), f"unbound index {m.group(1)}")
            return v + int((m.group(2) or "0").replace(" ", ""))
        return int(expr)

    def _call(self, name, k):
        if (name, k) in self._dmemo:
            return self._dmemo[(name, k)]
        if name not in self.derivdefs:
            raise DerivationInvalid((), f"unknown derivation template {name}")
        d = self.derivdefs[name]
        param = d.get("index", "k")
        node = d["base"] if (k == 0 or "step" not in d) else d["step"]
        out = self.derivation(node, {param: k})
        self._dmemo[(name, k)] = out
        return out

    def root(self) -> Derivation:
        d = self.derivation(self.doc["root"], {})
        concl = self.doc.get("conclusion")
        if concl:
            want_l = self.pt(concl["lhs"], {})
            want_r = self.pt(concl["rhs"], {})
            if not (P.pt_eq(d.lhs, want_l) and P.pt_eq(d.rhs, want_r)):
                raise DerivationInvalid((), "root conclusion differs from the "
                                            "declared one")
        return d


def load_certificate(spec: TRSpec, doc) -> Derivation:
    if isinstance(doc, str):
        doc = json.loads(doc)
    return CertificateLoader(spec, doc).root()


def certificate_mode(doc) -> str:
    if isinstance(doc, str):
        doc = json.loads(doc)
    return doc.get("mode", "full")


# -- serialization of built derivations (sampled rendering) ---------------

def derivation_to_json(d: Derivation, samples: int = 3) -> dict:
    """A JSON rendering of a derivation.  Premise families are sampled;
    the result documents the derivation but reloading gives a bounded
    re-check only."""
    from .syntax import pt_text
    out = {"rule": d.rule, "lhs": pt_text(d.lhs), "rhs": pt_text(d.rhs)}
    if d.schema:
        out["schema"] = d.schema
    if d.label:
        out["symbol"] = d.label
    if d.children:
        out["children"] = [derivation_to_json(c, samples) for c in d.children]
    if d.fam is not None:
        out["premises_sampled"] = [derivation_to_json(d.fam.at(i), samples)
                                   for i in range(samples)]
    if d.lim_l is not None:
        out["premises_l_sampled"] = [derivation_to_json(d.lim_l.at(i), samples)
                                     for i in range(samples)]
        out["premises_r_sampled"] = [derivation_to_json(d.lim_r.at(i), samples)
                                     for i in range(samples)]
    return out
