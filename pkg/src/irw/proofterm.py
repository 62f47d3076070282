"""Proof terms: multisteps, compositions, infinite concatenations.

A proof term denotes contraction activity over a left-linear TRS.  The
node kinds mirror the layered construction of the set of proof terms:
multisteps are the base, the dot composes, InfComp packs w-many
composable parts given by an index template, and Fun/Rule nodes embed
activity under a symbol (they are only used when at least one child has
a dot; otherwise the whole tree collapses into a multistep term).

Targets of multisteps chase collapsing rules on the term graph; a
collapsing cycle reached on a needed (non-erased) path means the
multistep has no target and is divergent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from . import term as T
from .errors import (MalformedTerm, NonConvergent, NotComposable,
                     PreconditionViolated, UnsupportedFamily)
from .ordinal import (AffineFamily, ConstantFamily, EventuallyAffineFamily,
                      Ordinal, SampledFamily,
                      ZERO, ONE, ord_inf_sum)
from .term import RationalTerm, Signature
from .trs import TRSpec

OMEGA = math.inf
FAMILY_SAMPLES = 8


class ProofTerm:
    __slots__ = ()


@dataclass(frozen=True)
class MStep(ProofTerm):
    """A multistep: a closed term over Sigma^R (dots excluded).
    Plain object terms are the trivial multisteps."""

    term: RationalTerm

    def __repr__(self):
        return f"<mstep {T.to_text(self.term)}>"


@dataclass(frozen=True)
class Comp(ProofTerm):
    left: ProofTerm
    right: ProofTerm  # by construction never an InfComp


@dataclass(frozen=True)
class InfComp(ProofTerm):
    family: object  # a PTFamily


@dataclass(frozen=True)
class Fun(ProofTerm):
    label: str
    children: tuple


@dataclass(frozen=True)
class RuleApp(ProofTerm):
    label: str
    children: tuple


# -- index families of proof terms -------------------------------------

@dataclass(frozen=True)
class ConstPT:
    pt: ProofTerm


@dataclass(frozen=True)
class MStepF:
    tf: object  # TermFamily


@dataclass(frozen=True)
class CompF:
    left: object
    right: object


@dataclass(frozen=True)
class FunF:
    label: str
    subs: tuple


@dataclass(frozen=True)
class RuleF:
    label: str
    subs: tuple


@dataclass(frozen=True)
class WrapF:
    """i |-> ctx^(a*i+b) [ sub_i ]; ctx a one-hole context over Sigma."""

    ctx: RationalTerm
    a: int
    b: int
    sub: object


@dataclass(frozen=True)
class ConsF:
    heads: tuple
    tail: object


@dataclass(frozen=True)
class SampledPT:
    """Exact evaluator with a declared affine lower bound on the
    instances' minimum activity depth (checked at samples)."""

    fn: Callable[[int], ProofTerm]
    mind_growth: tuple = (0, 0)


# -- smart constructors -------------------------------------------------

def mstep(t: RationalTerm) -> MStep:
    return MStep(t)


def term_pt(t: RationalTerm) -> MStep:
    """A plain object term seen as the trivial multistep."""
    return MStep(t)


def comp(l: ProofTerm, r: ProofTerm) -> ProofTerm:
    """The dot.  A limit right operand folds into the concatenation, so
    Comp nodes always carry a successor-layer right part."""
    if isinstance(r, InfComp):
        return InfComp(cons_f((l,), r.family))
    return Comp(l, r)


def comps(parts) -> ProofTerm:
    """Right-nested composition of a nonempty list."""
    parts = list(parts)
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = comp(p, out)
    return out


def fun(label: str, children) -> ProofTerm:
    children = tuple(children)
    if all(isinstance(c, MStep) for c in children):
        return MStep(T.sym(label, *[c.term for c in children]))
    return Fun(label, children)


def rule_pt(label: str, children) -> ProofTerm:
    children = tuple(children)
    if all(isinstance(c, MStep) for c in children):
        return MStep(T.sym(label, *[c.term for c in children]))
    return RuleApp(label, children)


def infcomp(family) -> InfComp:
    return InfComp(family)


def cons_f(heads: tuple, tail) -> object:
    if isinstance(tail, ConsF):
        return ConsF(tuple(heads) + tail.heads, tail.tail)
    return ConsF(tuple(heads), tail)


def shift_f(fam, k: int):
    """The family i |-> fam(i + k)."""
    if k == 0:
        return fam
    if isinstance(fam, ConstPT):
        return fam
    if isinstance(fam, ConsF):
        if k <= len(fam.heads):
            rest = fam.heads[k:]
            return ConsF(rest, fam.tail) if rest else fam.tail
        return shift_f(fam.tail, k - len(fam.heads))
    if isinstance(fam, MStepF):
        return MStepF(T.shift_family(fam.tf, k))
    if isinstance(fam, CompF):
        return CompF(shift_f(fam.left, k), shift_f(fam.right, k))
    if isinstance(fam, FunF):
        return FunF(fam.label, tuple(shift_f(s, k) for s in fam.subs))
    if isinstance(fam, RuleF):
        return RuleF(fam.label, tuple(shift_f(s, k) for s in fam.subs))
    if isinstance(fam, WrapF):
        return WrapF(fam.ctx, fam.a, fam.b + fam.a * k, shift_f(fam.sub, k))
    if isinstance(fam, SampledPT):
        a, b = fam.mind_growth
        return SampledPT(lambda i, f=fam.fn, k=k: f(i + k), (a, b + a * k))
    raise UnsupportedFamily(repr(fam))


def wrap_pt(ctx: RationalTerm, p: ProofTerm) -> ProofTerm:
    """ctx[p] for a one-hole context over the object signature."""
    holes = T.hole_positions(ctx)
    if len(holes) != 1:
        raise PreconditionViolated("wrap_pt needs a one-hole context")
    if holes[0] == T.EPSILON:
        return p
    if isinstance(p, MStep):
        return MStep(T.fill_context(ctx, [p.term]))
    j = holes[0][0]
    nd = ctx.node()
    children = []
    for i in range(1, len(nd.children) + 1):
        if i == j:
            children.append(wrap_pt(T.subterm_at(ctx, (i,)), p))
        else:
            children.append(MStep(T.subterm_at(ctx, (i,))))
    return fun(nd.label, children)


_fam_memo = {}


def pt_family_at(fam, i: int) -> ProofTerm:
    if isinstance(fam, ConstPT):
        return fam.pt
    key = (id(fam), i)
    hit = _fam_memo.get(key)
    if hit is not None and hit[0] is fam:
        return hit[1]
    out = _pt_family_at(fam, i)
    _fam_memo[key] = (fam, out)
    return out


def _pt_family_at(fam, i: int) -> ProofTerm:
    if isinstance(fam, MStepF):
        return MStep(T.eval_term_family(fam.tf, i))
    if isinstance(fam, CompF):
        return comp(pt_family_at(fam.left, i), pt_family_at(fam.right, i))
    if isinstance(fam, FunF):
        return fun(fam.label, [pt_family_at(s, i) for s in fam.subs])
    if isinstance(fam, RuleF):
        return rule_pt(fam.label, [pt_family_at(s, i) for s in fam.subs])
    if isinstance(fam, WrapF):
        out = pt_family_at(fam.sub, i)
        for _ in range(fam.a * i + fam.b):
            out = wrap_pt(fam.ctx, out)
        return out
    if isinstance(fam, ConsF):
        if i < len(fam.heads):
            return fam.heads[i]
        return pt_family_at(fam.tail, i - len(fam.heads))
    if isinstance(fam, SampledPT):
        return fam.fn(i)
    raise UnsupportedFamily(repr(fam))


def split_head(p: InfComp):
    """p as head . tail; the two renderings are the same infinite term."""
    return pt_family_at(p.family, 0), InfComp(shift_f(p.family, 1))


# -- structural equality -----------------------------------------------

def _norm_pt(p: ProofTerm) -> ProofTerm:
    """A dot whose right part is a concatenation IS that concatenation
    extended on the left (same positions, same symbols)."""
    if isinstance(p, Comp) and isinstance(p.right, InfComp):
        return InfComp(cons_f((p.left,), p.right.family))
    return p


_eq_memo = {}


def pt_eq(a: ProofTerm, b: ProofTerm, samples: int = FAMILY_SAMPLES) -> bool:
    """Equality of (possibly non-rational) proof terms.

    Finite structure is compared exactly, multisteps by bisimulation;
    infinite concatenations are compared componentwise at indices
    0..samples, which is exact on every template pair whose components
    agree exactly when sampled there (the guard the whole library uses
    for w-indexed families).
    """
    if a is b:
        return True
    key = (id(a), id(b), samples)
    hit = _eq_memo.get(key)
    if hit is not None and hit[0] is a and hit[1] is b:
        return hit[2]
    out = _pt_eq(a, b, samples)
    _eq_memo[key] = (a, b, out)
    return out


def _pt_eq(a: ProofTerm, b: ProofTerm, samples: int) -> bool:
    a, b = _norm_pt(a), _norm_pt(b)
    if isinstance(a, MStep) and isinstance(b, MStep):
        return a.term == b.term
    if isinstance(a, Comp) and isinstance(b, Comp):
        return pt_eq(a.left, b.left, samples) and pt_eq(a.right, b.right, samples)
    if isinstance(a, InfComp) and isinstance(b, InfComp):
        return all(pt_eq(pt_family_at(a.family, i), pt_family_at(b.family, i),
                         samples)
                   for i in range(samples + 1))
    if isinstance(a, Fun) and isinstance(b, Fun) or \
       isinstance(a, RuleApp) and isinstance(b, RuleApp):
        return a.label == b.label and len(a.children) == len(b.children) and \
            all(pt_eq(x, y, samples) for x, y in zip(a.children, b.children))
    return False


# -- analysis -----------------------------------------------------------

@dataclass
class PTInfo:
    layer: Ordinal
    src: RationalTerm
    mind: object          # int or OMEGA
    convergent: bool
    tgt: object = None    # RationalTerm when defined
    witness: object = None
    rule_occurrences: object = 0   # int, 2 meaning "several", OMEGA infinite


def _cache(spec: TRSpec):
    return spec._cache.setdefault("pt", {})


def analyze(spec: TRSpec, p: ProofTerm, samples: int = FAMILY_SAMPLES) -> PTInfo:
    """Validate p and compute layer/src/mind/convergence (and the target
    when it exists) in one pass.  Raises on malformed proof terms."""
    cache = _cache(spec)
    if id(p) in cache:
        return cache[id(p)]
    info = _analyze(spec, p, samples)
    cache[id(p)] = info
    cache.setdefault("keep", []).append(p)  # pin so ids stay unique
    return info


def _rule_occ_count(spec: TRSpec, t: RationalTerm):
    """0, 1, 2 (= several) or OMEGA rule-symbol occurrences."""
    counts, infinite = T._path_counts(t)
    total = 0
    for n, nd in enumerate(t.nodes):
        if n in counts and not nd.is_var and nd.label in spec.rules:
            if n in infinite:
                return OMEGA
            total += counts[n]
            if total > 1:
                return 2
    return total


def _mstep_info(spec: TRSpec, t: RationalTerm) -> PTInfo:
    sig_r = spec.signature_r()
    T.term_validate(t, sig_r)
    if not T.is_closed(t):
        raise MalformedTerm(t.root, "proof terms must be closed")
    src = mstep_source(spec, t)
    mind = mstep_mind(spec, t)
    try:
        tgt = mstep_target(spec, t)
        return PTInfo(ONE, src, mind, True, tgt,
                      rule_occurrences=_rule_occ_count(spec, t))
    except NonConvergent as e:
        return PTInfo(ONE, src, mind, False, None, e.witness,
                      rule_occurrences=_rule_occ_count(spec, t))


def _fit_ordinal_family(values, evaluator):
    """Fit sampled ordinals into a described family (constant, affine,
    eventually constant or eventually affine); candidate fits are
    verified against the (cached) evaluator before being trusted."""
    if all(v == values[0] for v in values):
        return ConstantFamily(values[0])
    if all(v.is_finite for v in values):
        ints = [v.as_int() for v in values]
        a = ints[1] - ints[0]
        if a >= 0 and all(ints[i] == ints[0] + a * i for i in range(len(ints))):
            return AffineFamily(a, ints[0])
    cache = dict(enumerate(values))

    def at(j):
        if j not in cache:
            cache[j] = evaluator(j)
        return cache[j]

    n = len(values)
    for j0 in range(1, n + 2):
        tail = at(j0)
        end = max(n + 1, j0 + 3)
        if all(at(i) == tail for i in range(j0, end)):
            return SampledFamily(at, j0, tail)
        if tail.is_finite and at(j0 + 1).is_finite:
            a = at(j0 + 1).as_int() - tail.as_int()
            b = tail.as_int() - a * j0
            if a > 0 and b >= 0 and all(
                    at(i) == Ordinal.from_int(a * i + b)
                    for i in range(j0, end)):
                return EventuallyAffineFamily(at, j0, a, b)
    raise UnsupportedFamily(f"no pattern fits the sampled layers {values}")


def _family_mind_growth(spec: TRSpec, fam, samples):
    """True when the template forces mind(fam_i) -> w."""
    if isinstance(fam, ConstPT):
        return analyze(spec, fam.pt, samples).mind == OMEGA
    if isinstance(fam, (ConsF,)):
        return _family_mind_growth(spec, fam.tail, samples)
    if isinstance(fam, CompF):
        return _family_mind_growth(spec, fam.left, samples) and \
            _family_mind_growth(spec, fam.right, samples)
    if isinstance(fam, (FunF, RuleF)):
        if isinstance(fam, RuleF):
            return False  # instances keep mind 0
        return all(_family_mind_growth(spec, s, samples) for s in fam.subs)
    if isinstance(fam, WrapF):
        hd = len(T.hole_positions(fam.ctx)[0])
        if fam.a > 0 and hd >= 1:
            return True
        return _family_mind_growth(spec, fam.sub, samples)
    if isinstance(fam, MStepF):
        return _termfam_mind_growth(spec, fam.tf, samples)
    if isinstance(fam, SampledPT):
        a, b = fam.mind_growth
        for i in range(samples + 1):
            m = analyze(spec, fam.fn(i), samples).mind
            if not m >= a * i + b:
                raise UnsupportedFamily(
                    f"declared mind growth {a}*i+{b} fails at i={i} (mind {m})")
        return a > 0
    raise UnsupportedFamily(repr(fam))


def _termfam_mind_growth(spec: TRSpec, tf, samples):
    if isinstance(tf, T.ConstTF):
        return mstep_mind(spec, tf.term) == OMEGA
    if isinstance(tf, T.SymTF):
        if tf.label in spec.rules:
            return False
        return all(_termfam_mind_growth(spec, s, samples) for s in tf.subs)
    if isinstance(tf, T.IterTF):
        hd = len(T.hole_positions(tf.ctx)[0])
        if any(nd.label in spec.rules for nd in tf.ctx.nodes):
            return False
        if tf.a > 0 and hd >= 1:
            return True
        return _termfam_mind_growth(spec, tf.sub, samples)
    if isinstance(tf, T.SampledTF):
        raise UnsupportedFamily("sampled term family without declared growth")
    raise UnsupportedFamily(repr(tf))


def _analyze(spec: TRSpec, p: ProofTerm, samples) -> PTInfo:
    if isinstance(p, MStep):
        return _mstep_info(spec, p.term)

    if isinstance(p, Comp):
        li = analyze(spec, p.left, samples)
        ri = analyze(spec, p.right, samples)
        if not li.convergent:
            raise NonConvergent("left operand of a dot must be convergent",
                                witness=li.witness)
        if not li.tgt == ri.src:
            raise NotComposable((), li.tgt, ri.src)
        layer = li.layer + ri.layer + ONE
        return PTInfo(layer, li.src, min(li.mind, ri.mind), ri.convergent,
                      ri.tgt, ri.witness)

    if isinstance(p, InfComp):
        infos = [analyze(spec, pt_family_at(p.family, i), samples)
                 for i in range(samples + 1)]
        for i in range(samples + 1):
            if not infos[i].convergent:
                raise NonConvergent(f"component {i} of a concatenation diverges",
                                    witness=infos[i].witness)
            if i < samples and not infos[i].tgt == infos[i + 1].src:
                raise NotComposable((i,), infos[i].tgt, infos[i + 1].src)
        layer = ord_inf_sum(_fit_ordinal_family(
            [inf.layer for inf in infos],
            lambda i: analyze(spec, pt_family_at(p.family, i), samples).layer))
        mind = min(inf.mind for inf in infos)
        conv = _family_mind_growth(spec, p.family, samples)
        tgt = None
        witness = None
        if conv:
            try:
                tgt = infcomp_tgt(spec, p.family, samples)
            except NonConvergent as e:
                conv, witness = False, e.witness
        return PTInfo(layer, infos[0].src, mind, conv, tgt, witness)

    if isinstance(p, (Fun, RuleApp)):
        if all(isinstance(c, MStep) for c in p.children):
            raise MalformedTerm(
                p.label, "all children are multisteps: collapse into one")
        infos = [analyze(spec, c, samples) for c in p.children]
        layer = ZERO
        for inf in infos:
            layer = layer + inf.layer
        layer = layer + ONE
        if isinstance(p, Fun):
            if p.label not in spec.sig.funcs or \
                    spec.sig.funcs[p.label] != len(p.children):
                raise MalformedTerm(p.label, "bad function symbol or arity")
            src = T.sym(p.label, *[inf.src for inf in infos])
            mind = 1 + min(inf.mind for inf in infos)
            conv = all(inf.convergent for inf in infos)
            tgt = None
            witness = next((inf.witness for inf in infos if not inf.convergent),
                           None)
            if conv:
                tgt = T.sym(p.label, *[inf.tgt for inf in infos])
            return PTInfo(layer, src, mind, conv, tgt, witness)
        rule = spec.rules.get(p.label)
        if rule is None or rule.arity != len(p.children):
            raise MalformedTerm(p.label, "bad rule symbol or arity")
        binding_src = dict(zip(rule.vars, [inf.src for inf in infos]))
        src = T.apply_subst(binding_src, rule.lhs)
        needed = T.variables(rule.rhs)
        conv = all(inf.convergent for x, inf in zip(rule.vars, infos)
                   if x in needed)
        tgt = None
        witness = next((inf.witness for x, inf in zip(rule.vars, infos)
                        if x in needed and not inf.convergent), None)
        if conv:
            binding_tgt = {x: inf.tgt for x, inf in zip(rule.vars, infos)
                           if x in needed}
            tgt = T.apply_subst(binding_tgt, rule.rhs)
        return PTInfo(layer, src, 0, conv, tgt, witness)

    raise MalformedTerm(None, f"not a proof term: {p!r}")


# -- multistep source / target / mind ------------------------------------

def _instantiate_into(b: T.TermBuilder, tree: RationalTerm, binding: dict,
                      root_id: int):
    """Copy a finite tree into the builder at root_id, vars via binding."""
    def go(nid, slot):
        nd = tree.nodes[nid]
        if nd.is_var:
            raise MalformedTerm(nid, "variable at instantiation root")
        kids = []
        for c in nd.children:
            cd = tree.nodes[c]
            if cd.is_var:
                kids.append(binding[cd.label])
            else:
                kids.append(go(c, None))
        if slot is None:
            slot = b.fresh()
        b.node(nd.label, kids, False, slot)
        return slot

    return go(tree.root, root_id)


def mstep_source(spec: TRSpec, t: RationalTerm) -> RationalTerm:
    """src_T-normal form, computed as one simultaneous graph pass:
    every rule node becomes its instantiated lhs.  src_T is orthogonal,
    disjoint and non-collapsing, so this single pass normalizes."""
    b = T.TermBuilder()
    mapped = {i: b.fresh() for i in range(len(t.nodes))}
    for i, nd in enumerate(t.nodes):
        rule = spec.rules.get(nd.label) if not nd.is_var else None
        if rule is not None:
            binding = {x: mapped[c] for x, c in zip(rule.vars, nd.children)}
            _instantiate_into(b, rule.lhs, binding, mapped[i])
        else:
            b.node(nd.label, [mapped[c] for c in nd.children], nd.is_var,
                   mapped[i])
    return b.build(mapped[t.root])


def mstep_target(spec: TRSpec, t: RationalTerm) -> RationalTerm:
    """tgt_T-normal form by collapse-chasing on the graph.

    Rule nodes instantiate their rhs; collapsing rules forward to the
    selected argument.  A cycle of collapsing forwards on a needed path
    is a divergence witness (erased arguments are never resolved)."""
    b = T.TermBuilder()
    memo = {}

    def resolve(i, chasing):
        if i in memo:
            return memo[i]
        nd = t.nodes[i]
        rule = spec.rules.get(nd.label) if not nd.is_var else None
        if rule is not None and rule.is_collapsing:
            if i in chasing:
                raise NonConvergent(
                    f"collapsing cycle through rule {nd.label}", witness=i)
            j = rule.collapsing_index()
            res = resolve(nd.children[j - 1], chasing | {i})
            memo[i] = res
            return res
        fresh = b.fresh()
        memo[i] = fresh
        if rule is not None:
            needed = T.variables(rule.rhs)
            binding = {x: resolve(c, frozenset())
                       for x, c in zip(rule.vars, nd.children) if x in needed}
            _instantiate_into(b, rule.rhs, binding, fresh)
        else:
            b.node(nd.label,
                   [resolve(c, frozenset()) for c in nd.children],
                   nd.is_var, fresh)
        return fresh

    return b.build(resolve(t.root, frozenset()))


def mstep_mind(spec: TRSpec, t: RationalTerm):
    """Least depth of a rule symbol occurrence; w when trivial."""
    seen = set()
    frontier = [t.root]
    depth = 0
    while frontier:
        nxt = []
        for n in frontier:
            if t.nodes[n].label in spec.rules and not t.nodes[n].is_var:
                return depth
            if n in seen:
                continue
            seen.add(n)
            nxt.extend(t.nodes[n].children)
        frontier = nxt
        depth += 1
    return OMEGA


# -- targets of families -------------------------------------------------

def _term_tgt_family(spec: TRSpec, tf):
    """Map a term family pointwise through the multistep target."""
    if isinstance(tf, T.ConstTF):
        return T.ConstTF(mstep_target(spec, tf.term))
    if isinstance(tf, T.SymTF):
        subs = tuple(_term_tgt_family(spec, s) for s in tf.subs)
        rule = spec.rules.get(tf.label)
        if rule is None:
            return T.SymTF(tf.label, subs)
        binding = dict(zip(rule.vars, subs))
        return _instantiate_family(rule.rhs, binding)
    if isinstance(tf, T.IterTF):
        if any(nd.label in spec.rules for nd in tf.ctx.nodes):
            raise UnsupportedFamily("rule symbols on an iteration spine")
        return T.IterTF(tf.ctx, tf.a, tf.b, _term_tgt_family(spec, tf.sub))
    if isinstance(tf, T.SampledTF):
        return T.SampledTF(lambda i, f=tf.fn: mstep_target(spec, f(i)))
    raise UnsupportedFamily(repr(tf))


def _instantiate_family(tree: RationalTerm, binding: dict):
    """A finite tree with variables replaced by term families."""
    def go(nid):
        nd = tree.nodes[nid]
        if nd.is_var:
            return binding[nd.label]
        return T.SymTF(nd.label, tuple(go(c) for c in nd.children))
    return go(tree.root)


def pt_fam_tgt_tf(spec: TRSpec, fam):
    """The term family of the instances' targets."""
    if isinstance(fam, ConstPT):
        return T.ConstTF(analyze(spec, fam.pt).tgt)
    if isinstance(fam, MStepF):
        return _term_tgt_family(spec, fam.tf)
    if isinstance(fam, CompF):
        return pt_fam_tgt_tf(spec, fam.right)
    if isinstance(fam, FunF):
        return T.SymTF(fam.label,
                       tuple(pt_fam_tgt_tf(spec, s) for s in fam.subs))
    if isinstance(fam, RuleF):
        rule = spec.rules[fam.label]
        binding = {x: pt_fam_tgt_tf(spec, s)
                   for x, s in zip(rule.vars, fam.subs)
                   if x in T.variables(rule.rhs)}
        return _instantiate_family(rule.rhs, binding)
    if isinstance(fam, WrapF):
        return T.IterTF(fam.ctx, fam.a, fam.b, pt_fam_tgt_tf(spec, fam.sub))
    if isinstance(fam, (ConsF,)):
        return T.SampledTF(
            lambda i, f=fam: analyze(spec, pt_family_at(f, i)).tgt)
    if isinstance(fam, SampledPT):
        return T.SampledTF(lambda i, f=fam.fn: analyze(spec, f(i)).tgt)
    raise UnsupportedFamily(repr(fam))


def infcomp_tgt(spec: TRSpec, fam, samples=FAMILY_SAMPLES) -> RationalTerm:
    """Limit of the targets of the family instances."""
    if isinstance(fam, ConsF):
        return infcomp_tgt(spec, fam.tail, samples)
    return T.limit_of_family(pt_fam_tgt_tf(spec, fam))


def fit_pt_family(samples, evaluator, mind_growth=(0, 0)):
    """Fit sampled proof terms into a template family, mirroring the
    shape of the samples; falls back to the exact evaluator."""
    if all(pt_eq(s, samples[0]) for s in samples):
        return ConstPT(samples[0])
    if all(isinstance(s, MStep) for s in samples):
        tf = T.fit_term_family([s.term for s in samples],
                               lambda i: evaluator(i).term)
        if not isinstance(tf, T.SampledTF):
            return MStepF(tf)
    if all(isinstance(s, Comp) for s in samples):
        lf = fit_pt_family([s.left for s in samples],
                           lambda i: evaluator(i).left)
        rf = fit_pt_family([s.right for s in samples],
                           lambda i: evaluator(i).right)
        if not (isinstance(lf, SampledPT) or isinstance(rf, SampledPT)):
            return CompF(lf, rf)
    if all(isinstance(s, Fun) for s in samples) or \
            all(isinstance(s, RuleApp) for s in samples):
        lab = samples[0].label
        if all(s.label == lab for s in samples):
            subs = []
            opaque = False
            for j in range(len(samples[0].children)):
                sf = fit_pt_family([s.children[j] for s in samples],
                                   lambda i, j=j: evaluator(i).children[j])
                opaque = opaque or isinstance(sf, SampledPT)
                subs.append(sf)
            if not opaque:
                kind = FunF if isinstance(samples[0], Fun) else RuleF
                return kind(lab, tuple(subs))
    # an irregular head followed by a regular tail
    for cut in range(1, max(1, len(samples) // 2)):
        if len(samples) - cut < 4:
            break
        tail = fit_pt_family(samples[cut:],
                             lambda i, c=cut: evaluator(i + c))
        if not isinstance(tail, SampledPT):
            return ConsF(tuple(samples[:cut]), tail)
    return SampledPT(evaluator, mind_growth)


# -- the public operation surface ----------------------------------------

def validate_pterm(spec: TRSpec, p: ProofTerm,
                   samples: int = FAMILY_SAMPLES) -> Ordinal:
    """The unique layer of p in the layered construction."""
    if not spec.left_linear:
        raise PreconditionViolated("proof terms need a left-linear TRS")
    return analyze(spec, p, samples).layer


def source(spec: TRSpec, p: ProofTerm) -> RationalTerm:
    return analyze(spec, p).src


def target(spec: TRSpec, p: ProofTerm) -> RationalTerm:
    info = analyze(spec, p)
    if not info.convergent:
        raise NonConvergent("proof term diverges", witness=info.witness)
    return info.tgt


def mind(spec: TRSpec, p: ProofTerm):
    return analyze(spec, p).mind


def is_convergent(spec: TRSpec, p: ProofTerm):
    """(flag, witness): the witness points at the divergence when found."""
    info = analyze(spec, p)
    return info.convergent, info.witness


def is_trivial(spec: TRSpec, p: ProofTerm) -> bool:
    return analyze(spec, p).mind == OMEGA


def _one_step_count(spec: TRSpec, p: ProofTerm):
    if isinstance(p, MStep):
        return _rule_occ_count(spec, p.term)
    return None


def is_one_step(spec: TRSpec, p: ProofTerm) -> bool:
    return isinstance(p, MStep) and _rule_occ_count(spec, p.term) == 1


def rpos(spec: TRSpec, p: MStep):
    """Redex position of a one-step (its single rule occurrence)."""
    hits = [pos for pos, nid in T.positions_up_to(p.term, len(p.term.nodes))
            if p.term.nodes[nid].label in spec.rules]
    if not is_one_step(spec, p):
        raise PreconditionViolated("not a one-step")
    return hits[0]


def is_ppterm(spec: TRSpec, p: ProofTerm, samples=FAMILY_SAMPLES) -> bool:
    if isinstance(p, MStep):
        return is_one_step(spec, p)
    if isinstance(p, Comp):
        return is_ppterm(spec, p.left, samples) and is_ppterm(spec, p.right, samples)
    if isinstance(p, InfComp):
        return all(is_ppterm(spec, pt_family_at(p.family, i), samples)
                   for i in range(samples + 1))
    return False


def is_pnpterm(spec: TRSpec, p: ProofTerm, samples=FAMILY_SAMPLES) -> bool:
    if isinstance(p, MStep) and _rule_occ_count(spec, p.term) == 0:
        return True
    return is_ppterm(spec, p, samples)


def classify(spec: TRSpec, p: ProofTerm) -> dict:
    analyze(spec, p)
    return {
        "is_mstep": isinstance(p, MStep),
        "is_inf_concat": isinstance(p, InfComp),
        "is_trivial": is_trivial(spec, p),
        "is_one_step": is_one_step(spec, p),
        "is_ppterm": is_ppterm(spec, p),
        "is_pnpterm": is_pnpterm(spec, p),
    }
