"""Concrete syntax for terms, proof terms and TRS workspace files.

Terms:       f(t1, t2), constants bare, variables are undeclared
             lowercase identifiers, `rec X. f(X, a)` binds a cycle,
             `f^w` abbreviates rec X. f(X), `_` is the context hole.
Proof terms: rule symbols apply like function symbols, `;` is the
             right-associative dot, `conc(i){ body }` an infinite
             concatenation, `iter(C, a*i+b, t)` iterates a one-hole
             context around t.
Files:       `sig f/2 a/0` lines, `rule mu: f(x) -> g(x)` lines, then
             named `term n = ...` / `pt n = ...` definitions.

Parsing happens in two phases: a neutral AST first, then compilation
against a signature and an environment for template index variables.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import proofterm as P
from . import term as T
from .errors import ArityMismatch, MalformedTerm, ParseError
from .term import RationalTerm, Signature
from .trs import Rule, TRSpec

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<name>[A-Za-z@][A-Za-z0-9_'!@]*)
  | (?P<num>\d+)
  | (?P<punct>->|[()\[\]{}.,;^*+=:_-])
""", re.VERBOSE)


def tokenize(text: str):
    out = []
    line, col = 1, 1
    i = 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if not m:
            raise ParseError(line, col, f"a token (got {text[i]!r})")
        kind = m.lastgroup
        val = m.group()
        if kind != "ws":
            out.append((kind, val, line, col))
        nl = val.count("\n")
        if nl:
            line += nl
            col = len(val) - val.rfind("\n")
        else:
            col += len(val)
        i = m.end()
    out.append(("eof", "", line, col))
    return out


class _Parser:
    def __init__(self, text):
        self.toks = tokenize(text)
        self.i = 0

    def peek(self, k=0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self):
        t = self.toks[self.i]
        if t[0] != "eof":
            self.i += 1
        return t

    def expect(self, val):
        t = self.next()
        if t[1] != val:
            raise ParseError(t[2], t[3], f"{val!r} (got {t[1]!r})")
        return t

    def error(self, what):
        t = self.peek()
        raise ParseError(t[2], t[3], what)

    def at(self, val):
        return self.peek()[1] == val

    def eat(self, val):
        if self.at(val):
            self.next()
            return True
        return False

    # -- affine expressions:  2*i+1 | i | i+1 | k-1 | 3 ---------------
    def affine(self):
        a, v, b = 0, None, 0
        t = self.next()
        if t[0] == "num":
            if self.eat("*"):
                a = int(t[1])
                v = self.next()[1]
            else:
                b = int(t[1])
                return (0, None, b)
        elif t[0] == "name":
            a, v = 1, t[1]
        else:
            raise ParseError(t[2], t[3], "an affine index expression")
        if self.eat("+"):
            b = int(self.next()[1])
        elif self.eat("-"):
            b = -int(self.next()[1])
        return (a, v, b)

    # -- proof-term / term AST ----------------------------------------
    def pt(self):
        left = self.atom()
        if self.eat(";"):
            return ("comp", left, self.pt())
        return left

    def atom(self):
        t = self.peek()
        if self.eat("("):
            inner = self.pt()
            self.expect(")")
            return inner
        if t[1] == "_":
            self.next()
            return ("hole",)
        if t[1] == "rec":
            self.next()
            name = self.next()[1]
            self.expect(".")
            return ("rec", name, self.pt())
        if t[1] == "conc":
            self.next()
            self.expect("(")
            ivar = self.next()[1]
            self.expect(")")
            self.expect("{")
            body = self.pt()
            self.expect("}")
            return ("conc", ivar, body)
        if t[1] == "iter":
            self.next()
            self.expect("(")
            ctx = self.pt()
            self.expect(",")
            aff = self.affine()
            self.expect(",")
            body = self.pt()
            self.expect(")")
            return ("iter", ctx, aff, body)
        if t[0] == "name":
            self.next()
            name = t[1]
            if self.eat("^"):
                w = self.next()
                if w[1] != "w":
                    raise ParseError(w[2], w[3], "'w' after '^'")
                return ("omega", name)
            if self.at("{"):
                self.next()
                aff = self.affine()
                self.expect("}")
                return ("ref", name, aff)
            args = []
            if self.eat("("):
                if not self.eat(")"):
                    args.append(self.pt())
                    while self.eat(","):
                        args.append(self.pt())
                    self.expect(")")
            return ("app", name, args)
        self.error("a term or proof term")


def parse_ast(text: str):
    p = _Parser(text)
    out = p.pt()
    t = p.peek()
    if t[0] != "eof":
        raise ParseError(t[2], t[3], "end of input")
    return out


def _aff_value(aff, env):
    a, v, b = aff
    if v is None:
        val = b
    else:
        if v not in env:
            raise MalformedTerm(v, f"unbound index variable {v}")
        val = a * env[v] + b
    if val < 0:
        raise MalformedTerm(v, f"negative iteration count {val}")
    return val


@dataclass
class Compiler:
    """AST -> terms / proof terms against a signature.

    `env` maps template index variables to naturals; `defs` holds named
    recursive proof-term templates (name -> (param, ast)), instantiated
    by `name{k}` references with memoization.
    """

    sig: Signature
    spec: object = None          # TRSpec, for rule symbols in proof terms
    env: dict = field(default_factory=dict)
    defs: dict = field(default_factory=dict)
    _memo: dict = field(default_factory=dict)

    def _classify(self, name):
        if name in self.sig.funcs:
            return "func"
        if self.sig.rules and name in self.sig.rules:
            return "rule"
        return "var"

    # -- plain terms ---------------------------------------------------
    def term(self, ast, binders=None) -> RationalTerm:
        b = T.TermBuilder()
        root = self._term(ast, b, dict(binders or {}))
        return b.build(root)

    def _term(self, ast, b, binders):
        kind = ast[0]
        if kind == "hole":
            return b.node(T.HOLE)
        if kind == "omega":
            nid = b.fresh()
            return b.node(ast[1], [nid], nid=nid)
        if kind == "rec":
            nid = b.fresh()
            binders[ast[1]] = nid
            inner = self._term(ast[2], b, binders)
            if inner == nid:
                raise MalformedTerm(ast[1], "unguarded rec binder")
            # alias: make the binder id point at the body
            b.nodes[nid] = b.nodes[inner]
            return nid
        if kind == "iter":
            n = _aff_value(ast[2], self.env)
            ctx = self.term(ast[1])
            inner = self.term(ast[3])
            return b.graft(T.iterate_context(ctx, n, inner))
        if kind == "app":
            name, args = ast[1], ast[2]
            if name in binders and not args:
                return binders[name]
            cls = self._classify(name)
            if cls == "var":
                if args:
                    raise MalformedTerm(name, "unknown symbol applied to arguments")
                return b.node(name, [], is_var=True)
            want = self.sig.arity(name)
            if want != len(args):
                raise ArityMismatch(f"{name} expects {want} arguments")
            return b.node(name, [self._term(a, b, binders) for a in args])
        if kind == "ref":
            inst = self.instantiate(ast[1], _aff_value(ast[2], self.env))
            if not isinstance(inst, P.MStep):
                raise MalformedTerm(ast[1], "template is not a plain term here")
            return b.graft(inst.term)
        raise MalformedTerm(None, f"composition inside a plain term ({kind})")

    # -- proof terms ----------------------------------------------------
    def pt(self, ast) -> P.ProofTerm:
        kind = ast[0]
        if kind == "comp":
            return P.comp(self.pt(ast[1]), self.pt(ast[2]))
        if kind == "conc":
            return P.InfComp(self.family(ast[2], ast[1]))
        if kind == "iter":
            n = _aff_value(ast[2], self.env)
            ctx = self.term(ast[1])
            out = self.pt(ast[3])
            for _ in range(n):
                out = P.wrap_pt(ctx, out)
            return out
        if kind == "ref":
            return self.instantiate(ast[1], _aff_value(ast[2], self.env))
        if kind == "app":
            name, args = ast[1], ast[2]
            if args and any(_has_dots(a) for a in args):
                children = [self.pt(a) for a in args]
                cls = self._classify(name)
                if cls == "rule":
                    return P.rule_pt(name, children)
                if cls == "func":
                    if self.sig.arity(name) != len(args):
                        raise ArityMismatch(f"{name} expects {self.sig.arity(name)}")
                    return P.fun(name, children)
                raise MalformedTerm(name, "unknown symbol")
            return P.MStep(self.term(ast))
        return P.MStep(self.term(ast))

    def instantiate(self, name, k: int) -> P.ProofTerm:
        if name not in self.defs:
            raise MalformedTerm(name, "unknown template")
        if (name, k) in self._memo:
            return self._memo[(name, k)]
        param, ast = self.defs[name]
        sub = Compiler(self.sig, self.spec, dict(self.env), self.defs, self._memo)
        sub.env[param] = k
        out = sub.pt(ast)
        self._memo[(name, k)] = out
        return out

    # -- families -------------------------------------------------------
    def family(self, ast, ivar):
        if not _mentions(ast, ivar):
            return P.ConstPT(self.pt(ast))
        kind = ast[0]
        if kind == "comp":
            return P.CompF(self.family(ast[1], ivar), self.family(ast[2], ivar))
        if kind == "iter":
            a, v, b = ast[2]
            ctx = self.term(ast[1])
            if v == ivar:
                sub = self.family(ast[3], ivar)
                tf = _fam_as_termfam(sub)
                if tf is not None:
                    return P.MStepF(T.IterTF(ctx, a, b, tf))
                return P.WrapF(ctx, a, b, sub)
            # exponent fixed w.r.t. this index
            n = _aff_value(ast[2], self.env)
            sub = self.family(ast[3], ivar)
            tf = _fam_as_termfam(sub)
            if tf is not None:
                return P.MStepF(T.IterTF(ctx, 0, n, tf))
            return P.WrapF(ctx, 0, n, sub)
        if kind == "app":
            name, args = ast[1], ast[2]
            subs = tuple(self.family(a, ivar) for a in args)
            tfs = [_fam_as_termfam(s) for s in subs]
            cls = self._classify(name)
            if all(tf is not None for tf in tfs) and cls in ("func", "rule"):
                return P.MStepF(T.SymTF(name, tuple(tfs)))
            if cls == "rule":
                return P.RuleF(name, subs)
            if cls == "func":
                return P.FunF(name, subs)
            raise MalformedTerm(name, "unknown symbol in a family")
        # fall back to an exact evaluator (conc-in-conc, refs over i, ...)
        def fn(i, ast=ast, ivar=ivar):
            sub = Compiler(self.sig, self.spec, dict(self.env), self.defs,
                           self._memo)
            sub.env[ivar] = i
            return sub.pt(ast)
        return P.SampledPT(fn)


def _has_dots(ast) -> bool:
    kind = ast[0]
    if kind in ("comp", "conc"):
        return True
    if kind == "iter":
        return _has_dots(ast[3])
    if kind == "app":
        return any(_has_dots(a) for a in ast[2])
    if kind == "rec":
        return _has_dots(ast[2])
    if kind == "ref":
        return True  # templates may expand to anything; stay general
    return False


def _mentions(ast, ivar) -> bool:
    kind = ast[0]
    if kind == "app":
        return any(_mentions(a, ivar) for a in ast[2])
    if kind in ("rec",):
        return _mentions(ast[2], ivar)
    if kind == "comp":
        return _mentions(ast[1], ivar) or _mentions(ast[2], ivar)
    if kind == "conc":
        return ast[1] != ivar and _mentions(ast[2], ivar)
    if kind == "iter":
        return (ast[2][1] == ivar or _mentions(ast[1], ivar)
                or _mentions(ast[3], ivar))
    if kind == "ref":
        return ast[2][1] == ivar
    return False


def _fam_as_termfam(fam):
    if isinstance(fam, P.ConstPT) and isinstance(fam.pt, P.MStep):
        return T.ConstTF(fam.pt.term)
    if isinstance(fam, P.MStepF):
        return fam.tf
    return None


# -- convenience entry points -------------------------------------------

def parse_term(text: str, sig: Signature, env=None) -> RationalTerm:
    return Compiler(sig, env=dict(env or {})).term(parse_ast(text))


def parse_pt(text: str, spec: TRSpec, env=None, defs=None) -> P.ProofTerm:
    c = Compiler(spec.signature_r(), spec, dict(env or {}), dict(defs or {}))
    return c.pt(parse_ast(text))


# -- workspace files -----------------------------------------------------

@dataclass
class Workspace:
    spec: TRSpec
    terms: dict = field(default_factory=dict)
    pts: dict = field(default_factory=dict)
    ptdefs: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)


def parse_file(text: str) -> Workspace:
    funcs = {}
    rule_lines = []
    named = []
    ptdefs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("sig "):
            for part in line[4:].split():
                if "/" not in part:
                    raise ParseError(lineno, 1, "name/arity in sig line")
                name, ar = part.rsplit("/", 1)
                funcs[name] = int(ar)
        elif line.startswith("rule "):
            rule_lines.append((lineno, line[5:]))
        elif line.startswith(("term ", "pt ", "ptdef ")):
            kw, rest = line.split(" ", 1)
            if "=" not in rest:
                raise ParseError(lineno, 1, "'=' in definition")
            name, body = rest.split("=", 1)
            named.append((lineno, kw, name.strip(), body.strip()))
        else:
            raise ParseError(lineno, 1, "sig/rule/term/pt line")
    sig = Signature(funcs)
    rules = []
    for lineno, body in rule_lines:
        if ":" not in body or "->" not in body:
            raise ParseError(lineno, 1, "rule name: lhs -> rhs")
        name, eq = body.split(":", 1)
        lhs_text, rhs_text = eq.split("->", 1)
        comp = Compiler(sig)
        rules.append(Rule(name.strip(), comp.term(parse_ast(lhs_text)),
                          comp.term(parse_ast(rhs_text))))
    spec = TRSpec(sig, rules)
    ws = Workspace(spec)
    for lineno, kw, name, body in named:
        if kw == "ptdef":
            # ptdef chi{k} = ...
            m = re.match(r"([A-Za-z][A-Za-z0-9_']*)\{([a-z][a-z0-9]*)\}$", name)
            if not m:
                raise ParseError(lineno, 1, "ptdef name{index}")
            ws.ptdefs[m.group(1)] = (m.group(2), parse_ast(body))
            continue
        try:
            if kw == "term":
                ws.terms[name] = parse_term(body, sig)
            else:
                ws.pts[name] = parse_pt(body, spec, defs=ws.ptdefs)
        except ParseError:
            raise
        except Exception as e:
            raise ParseError(lineno, 1, f"valid {kw} ({e})")
    return ws


# -- printing -------------------------------------------------------------

def pt_text(p: P.ProofTerm) -> str:
    if isinstance(p, P.MStep):
        return T.to_text(p.term)
    if isinstance(p, P.Comp):
        lt = pt_text(p.left)
        if isinstance(p.left, P.Comp):
            lt = f"({lt})"
        return f"{lt} ; {pt_text(p.right)}"
    if isinstance(p, (P.Fun, P.RuleApp)):
        inner = ", ".join(pt_text(c) for c in p.children)
        return f"{p.label}({inner})"
    if isinstance(p, P.InfComp):
        if isinstance(p.family, P.ConsF):
            heads = [pt_text(h) if not isinstance(h, P.Comp) else f"({pt_text(h)})"
                     for h in p.family.heads]
            tail = pt_text(P.InfComp(p.family.tail))
            return " ; ".join(heads + [tail])
        return "conc(i){ " + family_text(p.family, "i") + " }"
    raise MalformedTerm(None, f"not a proof term: {p!r}")


def _aff_text(a, ivar, b):
    if a == 0:
        return str(b)
    head = ivar if a == 1 else f"{a}*{ivar}"
    if b == 0:
        return head
    return f"{head}+{b}" if b > 0 else f"{head}{b}"


def termfam_text(tf, ivar) -> str:
    if isinstance(tf, T.ConstTF):
        return T.to_text(tf.term)
    if isinstance(tf, T.SymTF):
        return f"{tf.label}({', '.join(termfam_text(s, ivar) for s in tf.subs)})" \
            if tf.subs else tf.label
    if isinstance(tf, T.IterTF):
        return (f"iter({T.to_text(tf.ctx)}, {_aff_text(tf.a, ivar, tf.b)}, "
                f"{termfam_text(tf.sub, ivar)})")
    if isinstance(tf, T.SampledTF):
        return "<sampled term family>"
    raise MalformedTerm(None, repr(tf))


def family_text(fam, ivar) -> str:
    if isinstance(fam, P.ConstPT):
        return pt_text(fam.pt)
    if isinstance(fam, P.MStepF):
        return termfam_text(fam.tf, ivar)
    if isinstance(fam, P.CompF):
        lt = family_text(fam.left, ivar)
        if isinstance(fam.left, P.CompF):
            lt = f"({lt})"
        return f"{lt} ; {family_text(fam.right, ivar)}"
    if isinstance(fam, (P.FunF, P.RuleF)):
        return f"{fam.label}({', '.join(family_text(s, ivar) for s in fam.subs)})"
    if isinstance(fam, P.WrapF):
        return (f"iter({T.to_text(fam.ctx)}, {_aff_text(fam.a, ivar, fam.b)}, "
                f"{family_text(fam.sub, ivar)})")
    if isinstance(fam, P.ConsF):
        parts = "; ".join(f"@{i}: {pt_text(h)}" for i, h in enumerate(fam.heads))
        return f"<{parts}; then {family_text(fam.tail, ivar)}>"
    if isinstance(fam, P.SampledPT):
        heads = "; ".join(f"@{i}: {pt_text(fam.fn(i))}" for i in range(3))
        return f"<sampled {heads}; ...>"
    raise MalformedTerm(None, repr(fam))
