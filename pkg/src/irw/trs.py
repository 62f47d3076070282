"""Rewrite rules, redex matching, reduction steps and ordinal-length
reduction sequences with the strong-convergence conditions.

A reduction sequence is a schedule of blocks.  Finite blocks list their
steps explicitly; omega blocks describe their steps by index templates
(a source term family plus a position template with affine depth
growth), which keeps the depth-divergence condition decidable.  An
OmegaIter block packs w-many blocks given by an evaluator, for
length-w^2 schedules.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import term as T
from .errors import (MalformedStep, MalformedTerm, NonConvergent,
                     PositionOutOfDomain, PreconditionViolated,
                     UnsupportedFamily)
from .ordinal import Ordinal, ZERO, OMEGA as ORD_OMEGA
from .term import (EPSILON, Position, RationalTerm, Signature, pos_concat,
                   pos_depth)

OMEGA = math.inf  # depth values live in N U {w}


def _lhs_vars(lhs: RationalTerm):
    """Variables of a finite lhs in left-to-right (preorder) order."""
    out = []

    def walk(nid):
        nd = lhs.nodes[nid]
        if nd.is_var:
            if nd.label not in out:
                out.append(nd.label)
            return
        for c in nd.children:
            walk(c)

    walk(lhs.root)
    return tuple(out)


@dataclass(frozen=True)
class Rule:
    name: str
    lhs: RationalTerm
    rhs: RationalTerm
    vars: tuple = None

    def __post_init__(self):
        if not T.is_finite(self.lhs):
            raise MalformedTerm(self.name, "lhs must be finite")
        if self.lhs.node().is_var:
            raise MalformedTerm(self.name, "lhs must not be a variable")
        if not T.variables(self.rhs) <= T.variables(self.lhs):
            raise MalformedTerm(self.name, "rhs variable not bound by lhs")
        if self.vars is None:
            object.__setattr__(self, "vars", _lhs_vars(self.lhs))

    @property
    def arity(self) -> int:
        return len(self.vars)

    @property
    def is_collapsing(self) -> bool:
        return self.rhs.node().is_var

    def collapsing_index(self) -> int:
        """1-based index of the rhs variable among the lhs variables."""
        return self.vars.index(self.rhs.node().label) + 1


class TRSpec:
    """A TRS with its derived classification flags."""

    def __init__(self, sig: Signature, rules):
        self.sig = sig
        self.rules = {r.name: r for r in rules}
        if set(self.rules) & set(sig.funcs):
            raise MalformedTerm(None, "rule name clashes with a function symbol")
        self._flags = None
        self._cache = {}

    @property
    def rule_list(self):
        return list(self.rules.values())

    def signature_r(self) -> Signature:
        """Sigma^R: function symbols plus one symbol per rule."""
        return self.sig.with_rules({r.name: r.arity for r in self.rule_list})

    def flags(self) -> dict:
        if self._flags is None:
            self._flags = classify_trs(self)
        return self._flags

    @property
    def left_linear(self):
        return self.flags()["left_linear"]


def _rename_apart(t: RationalTerm, suffix: str) -> RationalTerm:
    nodes = [T.Node(nd.label + suffix if nd.is_var else nd.label,
                    nd.children, nd.is_var) for nd in t.nodes]
    return RationalTerm(nodes, t.root)


def _unifiable(a: RationalTerm, b: RationalTerm) -> bool:
    """Syntactic unifiability of two finite terms (shared variables allowed)."""
    subst = {}

    def find(x):
        while x in subst and isinstance(subst[x], str):
            x = subst[x]
        return x

    def resolve(t, nid):
        nd = t.nodes[nid]
        if nd.is_var:
            v = find(nd.label)
            if v in subst:
                bt, bn = subst[v]
                return resolve(bt, bn)
            return ("var", v)
        return (t, nid)

    def occurs(v, t, nid):
        r = resolve(t, nid)
        if r[0] == "var":
            return r[1] == v
        tt, nn = r
        return any(occurs(v, tt, c) for c in tt.nodes[nn].children)

    def unify(ta, na, tb, nb):
        ra, rb = resolve(ta, na), resolve(tb, nb)
        if ra[0] == "var" and rb[0] == "var":
            if ra[1] != rb[1]:
                subst[ra[1]] = rb[1]
            return True
        if ra[0] == "var":
            if occurs(ra[1], rb[0], rb[1]):
                return False
            subst[ra[1]] = rb
            return True
        if rb[0] == "var":
            return unify(tb, nb, ta, na)
        (t1, n1), (t2, n2) = ra, rb
        d1, d2 = t1.nodes[n1], t2.nodes[n2]
        if d1.label != d2.label or len(d1.children) != len(d2.children):
            return False
        return all(unify(t1, c1, t2, c2)
                   for c1, c2 in zip(d1.children, d2.children))

    return unify(a, a.root, b, b.root)


def classify_trs(spec: TRSpec) -> dict:
    rules = spec.rule_list
    left_linear = all(T.is_linear(r.lhs) for r in rules)
    orthogonal = left_linear
    if left_linear:
        for r1 in rules:
            ppos, _ = T.pattern_info(r1.lhs)
            for p in ppos:
                for r2 in rules:
                    if p == EPSILON and r1 is r2:
                        continue
                    sub = T.subterm_at(r1.lhs, p)
                    if _unifiable(sub, _rename_apart(r2.lhs, "'")):
                        orthogonal = False
        # a variable lhs argument overlapping at epsilon between distinct
        # rules is covered above; nothing else to check
    lhs_syms = set()
    rhs_syms = set()
    for r in rules:
        for t, acc in ((r.lhs, lhs_syms), (r.rhs, rhs_syms)):
            for nd in t.nodes:
                if not nd.is_var and nd.label != T.HOLE:
                    acc.add(nd.label)
    pdepths = [T.pattern_info(r.lhs)[1] for r in rules]
    return {
        "left_linear": left_linear,
        "orthogonal": orthogonal,
        "disjoint": not (lhs_syms & rhs_syms),
        "has_collapsing": any(r.is_collapsing for r in rules),
        "max_pdepth": max(pdepths) if pdepths else 0,
    }


def make_companions(spec: TRSpec):
    """(src_T, tgt_T): rule symbols rewrite to the lhs resp. rhs."""
    sig_r = spec.signature_r()
    funcs = dict(sig_r.funcs) | {r.name: r.arity for r in spec.rule_list}
    src_rules, tgt_rules = [], []
    for r in spec.rule_list:
        # the companion rule for mu is written @mu: the rule symbol mu
        # itself is a function symbol of Sigma^R
        head = T.sym(r.name, *[T.var(x) for x in r.vars])
        src_rules.append(Rule("@" + r.name, head, r.lhs, r.vars))
        tgt_rules.append(Rule("@" + r.name, head, r.rhs, r.vars))
    return (TRSpec(Signature(dict(funcs)), src_rules),
            TRSpec(Signature(dict(funcs)), tgt_rules))


# -- matching and steps -------------------------------------------------

def match_lhs(lhs: RationalTerm, t: RationalTerm, nid=None):
    """Left-linear match of a finite pattern against (a node of) a term.
    Returns the substitution or None."""
    subst = {}

    def go(ln, tn):
        nd = lhs.nodes[ln]
        if nd.is_var:
            subst[nd.label] = RationalTerm(t.nodes, tn)
            return True
        td = t.nodes[tn]
        if td.is_var or td.label != nd.label or \
                len(td.children) != len(nd.children):
            return False
        return all(go(lc, tc) for lc, tc in zip(nd.children, td.children))

    if go(lhs.root, t.root if nid is None else nid):
        return subst
    return None


@dataclass(frozen=True)
class RedexStep:
    source: RationalTerm
    position: Position
    rule: Rule
    subst: dict = None

    def __post_init__(self):
        got = T.subterm_at(self.source, self.position)
        m = match_lhs(self.rule.lhs, got)
        if m is None:
            raise MalformedStep(
                f"{self.rule.name} does not match at {T.pos_str(self.position)}")
        if self.subst is None:
            object.__setattr__(self, "subst", m)
        else:
            for k, v in m.items():
                if not (k in self.subst and self.subst[k] == v):
                    raise MalformedStep(f"substitution disagrees at {k}")

    @property
    def depth(self) -> int:
        return len(self.position)

    def __repr__(self):
        return (f"<step {T.to_text(self.source)} @{T.pos_str(self.position)} "
                f"{self.rule.name}>")


def mk_step(spec: TRSpec, t: RationalTerm, p: Position, rule_name: str) -> RedexStep:
    return RedexStep(t, tuple(p), spec.rules[rule_name])


def apply_step(a: RedexStep) -> RationalTerm:
    return T.replace_at(a.source, T.apply_subst(a.subst, a.rule.rhs), a.position)


def match_redexes(spec: TRSpec, t: RationalTerm, depth_bound: int):
    """All redex occurrences of depth <= depth_bound, one per (pos, rule).
    Match results are memoized per (node, rule): rational terms repeat
    nodes at infinitely many positions."""
    if not spec.left_linear:
        raise PreconditionViolated("redex matching needs a left-linear TRS")
    memo = {}
    out = []
    for p, nid in T.positions_up_to(t, depth_bound):
        for r in spec.rule_list:
            key = (nid, r.name)
            if key not in memo:
                memo[key] = match_lhs(r.lhs, t, nid)
            if memo[key] is not None:
                out.append(RedexStep(t, p, r, None))
    return out


# -- reduction sequences -------------------------------------------------

@dataclass(frozen=True)
class PosTemplate:
    """pos(i) = base . rep^(a*i+b); depth grows affinely when rep and a
    are nonempty/nonzero."""

    base: Position = EPSILON
    rep: Position = EPSILON
    a: int = 0
    b: int = 0

    def at(self, i: int) -> Position:
        return tuple(self.base) + tuple(self.rep) * (self.a * i + self.b)

    def depth_diverges(self) -> bool:
        return self.a > 0 and len(self.rep) > 0

    def min_depth(self) -> int:
        return len(self.base) + len(self.rep) * self.b


@dataclass(frozen=True)
class FiniteBlock:
    steps: tuple

    def length(self) -> Ordinal:
        return Ordinal.from_int(len(self.steps))


@dataclass(frozen=True)
class OmegaBlock:
    """w many steps: step i rewrites src_family(i) at pos.at(i)."""

    src_family: object  # TermFamily
    pos: PosTemplate
    rule_name: str

    def length(self) -> Ordinal:
        return ORD_OMEGA


@dataclass(frozen=True)
class OmegaChunks:
    """w many steps grouped into nonempty finite chunks by an evaluator.

    `mind_growth` declares chunk j only uses depths >= a*j + b, and
    `tgt_limits` gives the term family of chunk targets whose limit is
    the block's target."""

    chunk_fn: Callable[[int], tuple]   # j -> tuple of RedexStep
    mind_growth: tuple = (0, 0)
    tgt_limits: object = None

    def length(self) -> Ordinal:
        return ORD_OMEGA


@dataclass(frozen=True)
class OmegaIter:
    """w many blocks given by an evaluator; length w^2.

    `mind_growth` declares that block j only uses depths >= a*j + b,
    `tgt_limits` is the term family of the blocks' target limits (used
    for the limit condition at the outer ordinal)."""

    block_fn: Callable[[int], object]
    mind_growth: tuple = (0, 0)
    tgt_limits: object = None

    def length(self) -> Ordinal:
        return Ordinal.omega_power(2)


@dataclass(frozen=True)
class ReductionSequence:
    source: RationalTerm
    blocks: tuple = ()

    def length(self) -> Ordinal:
        total = ZERO
        for b in self.blocks:
            total = total + b.length()
        return total


def _block_step(spec, blk, i):
    if isinstance(blk, FiniteBlock):
        return blk.steps[i]
    if isinstance(blk, OmegaBlock):
        src = T.eval_term_family(blk.src_family, i)
        return mk_step(spec, src, blk.pos.at(i), blk.rule_name)
    if isinstance(blk, OmegaChunks):
        j = 0
        while True:
            chunk = blk.chunk_fn(j)
            if i < len(chunk):
                return chunk[i]
            i -= len(chunk)
            j += 1
    raise UnsupportedFamily("no direct step indexing into this block")


def step_at(spec: TRSpec, r: ReductionSequence, alpha: Ordinal) -> RedexStep:
    """The alpha-th step, for alpha < length."""
    if not alpha < r.length():
        raise PreconditionViolated(f"{alpha} >= length {r.length()}")
    offset = alpha
    for blk in r.blocks:
        ln = blk.length()
        if offset < ln:
            if isinstance(blk, (FiniteBlock, OmegaBlock)):
                return _block_step(spec, blk, offset.as_int())
            # OmegaIter: offset = w*j + k
            if offset.is_finite:
                j, k = 0, offset.as_int()
            else:
                j = next(c for e, c in offset.terms if e == 1)
                k = offset.minus(Ordinal.omega_power(1, j)).as_int()
            return _block_step(spec, blk.block_fn(j), k)
        offset = offset.minus(ln)
    raise PreconditionViolated("unreachable")


def _block_mind(blk, samples=8):
    if isinstance(blk, FiniteBlock):
        return min((s.depth for s in blk.steps), default=OMEGA)
    if isinstance(blk, OmegaBlock):
        return blk.pos.min_depth()
    if isinstance(blk, OmegaChunks):
        return min(min((s.depth for s in blk.chunk_fn(j)), default=OMEGA)
                   for j in range(samples + 1))
    if isinstance(blk, OmegaIter):
        return min(_block_mind(blk.block_fn(j)) for j in range(samples + 1))
    raise UnsupportedFamily(repr(blk))


def _block_src(blk):
    if isinstance(blk, FiniteBlock):
        return blk.steps[0].source if blk.steps else None
    if isinstance(blk, OmegaBlock):
        return T.eval_term_family(blk.src_family, 0)
    if isinstance(blk, OmegaChunks):
        ch = blk.chunk_fn(0)
        return ch[0].source if ch else None
    if isinstance(blk, OmegaIter):
        return _block_src(blk.block_fn(0))


def _block_tgt_limit(blk):
    """Target of a block: last target (finite) or the limit."""
    if isinstance(blk, FiniteBlock):
        return apply_step(blk.steps[-1]) if blk.steps else None
    if isinstance(blk, OmegaBlock):
        return T.limit_of_family(blk.src_family)
    if isinstance(blk, OmegaChunks):
        if blk.tgt_limits is None:
            raise NonConvergent("no declared limit family for the chunks",
                                witness=blk)
        return T.limit_of_family(blk.tgt_limits)
    if isinstance(blk, OmegaIter):
        if blk.tgt_limits is None:
            raise NonConvergent("no declared limit family for w^2 block",
                                witness=blk)
        return T.limit_of_family(blk.tgt_limits)


def validate_redseq(spec: TRSpec, r: ReductionSequence, samples: int = 8) -> dict:
    """Well-formedness and convergence per the strong-convergence
    conditions: successor coherence, limit existence and coherence at
    limit ordinals, and depth divergence.  Omega blocks are checked at
    sample indices plus symbolically on their templates."""
    failures = []
    current = r.source  # source of the next step to come

    def check_finite_run(steps, start):
        cur = start
        for s in steps:
            if cur is not None and not s.source == cur:
                failures.append(("successor-coherence", s))
            cur = apply_step(s)
        return cur

    def check_block(blk, entry):
        # returns (exit term or None, convergent_here)
        if isinstance(blk, FiniteBlock):
            return check_finite_run(blk.steps, entry), True
        if isinstance(blk, OmegaBlock):
            for i in range(samples):
                s_i = _block_step(spec, blk, i)
                if i == 0 and entry is not None and not s_i.source == entry:
                    failures.append(("successor-coherence", s_i))
                nxt = T.eval_term_family(blk.src_family, i + 1)
                if not apply_step(s_i) == nxt:
                    failures.append(("family-coherence", (blk, i)))
                    break
            if not blk.pos.depth_diverges():
                failures.append(("depth-divergence", blk))
            try:
                return T.limit_of_family(blk.src_family), True
            except NonConvergent:
                failures.append(("limit-existence", blk))
                return None, False
        if isinstance(blk, OmegaChunks):
            cur = entry
            ok = True
            for j in range(samples):
                chunk = blk.chunk_fn(j)
                dmin = min((s.depth for s in chunk), default=OMEGA)
                if dmin < blk.mind_growth[0] * j + blk.mind_growth[1]:
                    failures.append(("declared-mind-growth", (blk, j)))
                    ok = False
                cur = check_finite_run(chunk, cur)
                if blk.tgt_limits is not None and chunk and not \
                        T.eval_term_family(blk.tgt_limits, j) == cur:
                    failures.append(("declared-tgt-limits", (blk, j)))
                    ok = False
            if blk.mind_growth[0] <= 0:
                failures.append(("depth-divergence", blk))
                ok = False
            try:
                return _block_tgt_limit(blk), ok
            except NonConvergent:
                failures.append(("limit-existence", blk))
                return None, False
        if isinstance(blk, OmegaIter):
            cur = entry
            ok = True
            for j in range(samples):
                sub = blk.block_fn(j)
                if _block_mind(sub) < blk.mind_growth[0] * j + blk.mind_growth[1]:
                    failures.append(("declared-mind-growth", (blk, j)))
                    ok = False
                cur, good = check_block(sub, cur)
                ok = ok and good
            if blk.mind_growth[0] <= 0:
                failures.append(("depth-divergence", blk))
                ok = False
            try:
                lim = _block_tgt_limit(blk)
            except NonConvergent:
                failures.append(("limit-existence", blk))
                return None, False
            if blk.tgt_limits is not None:
                for j in range(samples):
                    if not T.eval_term_family(blk.tgt_limits, j) == \
                            _block_tgt_limit(blk.block_fn(j)):
                        failures.append(("declared-tgt-limits", (blk, j)))
                        ok = False
            return lim, ok
        raise UnsupportedFamily(repr(blk))

    convergent = True
    for k, blk in enumerate(r.blocks):
        src0 = _block_src(blk)
        if src0 is not None and current is not None and not src0 == current:
            failures.append(("limit-coherence" if k > 0 else "source-mismatch",
                             blk))
        current, good = check_block(blk, current)
        if not good and k < len(r.blocks) - 1:
            # a divergent inner limit breaks well-formedness
            pass
        if not good:
            convergent = False
    hard = ("successor-coherence", "family-coherence", "source-mismatch",
            "limit-coherence", "declared-mind-growth", "declared-tgt-limits")
    well_formed = not any(tag in hard for tag, _ in failures)
    # a limit failure strictly inside the sequence breaks well-formedness;
    # at the very end it only makes the sequence divergent
    last = r.blocks[-1] if r.blocks else None
    if any(tag in ("limit-existence", "depth-divergence") and w is not last
           for tag, w in failures):
        well_formed = False
    return {"well_formed": well_formed, "convergent": well_formed and convergent,
            "failures": failures}


def redseq_src(r: ReductionSequence) -> RationalTerm:
    for blk in r.blocks:
        s = _block_src(blk)
        if s is not None:
            return s
    return r.source


def redseq_tgt(spec: TRSpec, r: ReductionSequence) -> RationalTerm:
    if not r.blocks:
        return r.source
    return _block_tgt_limit(r.blocks[-1])


def redseq_measures(spec: TRSpec, r: ReductionSequence):
    """(src, tgt or None, length, mind)."""
    report = validate_redseq(spec, r)
    if not report["well_formed"]:
        raise PreconditionViolated(f"not well-formed: {report['failures']}")
    src = redseq_src(r)
    tgt = None
    if report["convergent"]:
        tgt = redseq_tgt(spec, r)
    mind = min((_block_mind(b) for b in r.blocks), default=OMEGA)
    return src, tgt, r.length(), mind


def _split_block(spec, blk, lo, hi):
    """Section of a single block between finite-or-boundary offsets.
    lo is an int, hi is an int or None (= to the end of the block)."""
    if isinstance(blk, FiniteBlock):
        return [FiniteBlock(blk.steps[lo:hi if hi is not None else len(blk.steps)])]
    if isinstance(blk, OmegaBlock):
        if hi is None:
            return [OmegaBlock(T.shift_family(blk.src_family, lo),
                               PosTemplate(blk.pos.base, blk.pos.rep, blk.pos.a,
                                           blk.pos.b + blk.pos.a * lo),
                               blk.rule_name)]
        return [FiniteBlock(tuple(_block_step(spec, blk, i)
                                  for i in range(lo, hi)))]
    raise UnsupportedFamily("cannot section through this block")


def redseq_section(spec: TRSpec, r: ReductionSequence, a: Ordinal,
                   b: Ordinal) -> ReductionSequence:
    ln = r.length()
    if not (a < ln and b <= ln and a <= b):
        raise PreconditionViolated("section bounds out of range")
    if a == b:
        return ReductionSequence(step_at(spec, r, a).source, ())
    out = []
    offset_a, offset_b = a, b
    started = False
    for blk in r.blocks:
        bl = blk.length()
        if not started:
            if offset_a < bl:
                started = True
                if offset_b <= bl:
                    hi = offset_b.as_int() if offset_b < bl else None
                    out.extend(_split_block(spec, blk, offset_a.as_int(), hi))
                    break
                out.extend(_split_block(spec, blk, offset_a.as_int(), None))
                offset_b = offset_b.minus(bl)
            else:
                offset_a = offset_a.minus(bl)
                offset_b = offset_b.minus(bl)
        else:
            if offset_b <= bl:
                if offset_b > ZERO:
                    hi = offset_b.as_int() if offset_b < bl else None
                    out.extend(_split_block(spec, blk, 0, hi))
                break
            out.append(blk)
            offset_b = offset_b.minus(bl)
    src = None
    seq = ReductionSequence(step_at(spec, r, a).source,
                            tuple(b for b in out
                                  if not (isinstance(b, FiniteBlock) and not b.steps)))
    return seq


def _project_family(fam, i: int):
    """Term family of the i-th arguments of the instances."""
    if isinstance(fam, T.ConstTF):
        return T.ConstTF(T.arg(fam.term, i))
    if isinstance(fam, T.SymTF):
        return fam.subs[i - 1]
    if isinstance(fam, T.IterTF):
        hp = T.hole_positions(fam.ctx)[0]
        if fam.b < 1:
            raise UnsupportedFamily("projection needs exponent >= 1 everywhere")
        if hp and hp[0] == i:
            inner = T.IterTF(fam.ctx, fam.a, fam.b - 1, fam.sub)
            d = T.subterm_at(fam.ctx, (i,))
            if T.hole_positions(d) == [EPSILON]:
                return inner
            return T.IterTF(d, 0, 1, inner)
        raise UnsupportedFamily("iteration spine not under the projected argument")
    if isinstance(fam, T.SampledTF):
        return T.SampledTF(lambda k, f=fam.fn, i=i: T.arg(f(k), i))
    raise UnsupportedFamily(repr(fam))


def redseq_project(spec: TRSpec, r: ReductionSequence, i: int) -> ReductionSequence:
    """Steps at or below argument i, with the leading index stripped."""
    src, _, _, mind = redseq_measures(spec, r)
    if not mind > 0:
        raise PreconditionViolated("projection needs mind > 0")
    if not (1 <= i <= len(src.node().children)):
        raise PreconditionViolated(f"source root has no argument {i}")
    out = []
    for blk in r.blocks:
        if isinstance(blk, FiniteBlock):
            kept = tuple(
                RedexStep(T.arg(s.source, i), tuple(s.position[1:]), s.rule, None)
                for s in blk.steps if s.position and s.position[0] == i)
            if kept:
                out.append(FiniteBlock(kept))
        elif isinstance(blk, OmegaBlock):
            base, rep = blk.pos.base, blk.pos.rep
            first = base[0] if base else (rep[0] if rep and blk.pos.b > 0 else None)
            if first is None:
                raise PreconditionViolated("omega block touches the root")
            if first != i:
                continue
            if base:
                pos2 = PosTemplate(tuple(base[1:]), rep, blk.pos.a, blk.pos.b)
            else:
                pos2 = PosTemplate(tuple(rep[1:]), rep, blk.pos.a, blk.pos.b - 1)
            out.append(OmegaBlock(_project_family(blk.src_family, i), pos2,
                                  blk.rule_name))
        else:
            raise UnsupportedFamily("projection through w^2 blocks")
    return ReductionSequence(T.arg(src, i), tuple(out))
