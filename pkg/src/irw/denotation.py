"""Stepwise proof terms and the denotation of reduction sequences.

A pnpterm is built from one-steps (multisteps with exactly one rule
symbol occurrence) and dots, or is a plain term.  Its components form
an ordinal-indexed sequence of one-steps; two pnpterms are
denotationally equivalent when those sequences agree.  Rebracketing
equivalence is the Assoc-only fragment of permutation equivalence and
coincides with denotational equivalence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import count

from . import proofterm as P
from . import term as T
from . import trs as R
from .equivalence import (Derivation, check_derivation, d_comp, d_eqn, d_refl,
                          d_symm, d_trans, decompose_dot)
from .errors import (DerivationInvalid, MalformedStep, NonConvergent,
                     PreconditionViolated, UnsupportedFamily)
from .ordinal import Ordinal, ZERO, ONE, OMEGA as ORD_OMEGA, ord_decompose, \
    ord_inf_sum
from .proofterm import (Comp, InfComp, MStep, MStepF, ProofTerm, analyze, comp,
                        comps, is_one_step, is_pnpterm, is_ppterm, pt_eq,
                        pt_family_at, rpos, shift_f, split_head)
from .trs import (FiniteBlock, OmegaBlock, OmegaChunks, OmegaIter, PosTemplate,
                  RedexStep, ReductionSequence, TRSpec)

OMEGA = math.inf


@dataclass(frozen=True)
class OneStepView:
    pt: MStep
    rpos: tuple
    sdepth: int


def one_step_view(spec: TRSpec, p: ProofTerm) -> OneStepView:
    if not is_one_step(spec, p):
        raise PreconditionViolated("not a one-step")
    rp = rpos(spec, p)
    return OneStepView(p, rp, len(rp))


# -- ordinal step counts -------------------------------------------------

def steps_count(spec: TRSpec, p: ProofTerm,
                samples: int = P.FAMILY_SAMPLES) -> Ordinal:
    if not is_pnpterm(spec, p, samples):
        raise PreconditionViolated("steps are counted on pnpterms only")
    return _steps(spec, p, samples)


def _steps(spec: TRSpec, p: ProofTerm, samples) -> Ordinal:
    if isinstance(p, MStep):
        n = P._rule_occ_count(spec, p.term)
        return Ordinal.from_int(n if n in (0, 1) else 1)
    if isinstance(p, Comp):
        return _steps(spec, p.left, samples) + _steps(spec, p.right, samples)
    if isinstance(p, InfComp):
        vals = [_steps(spec, pt_family_at(p.family, i), samples)
                for i in range(samples + 1)]
        fam = P._fit_ordinal_family(
            vals, lambda i: _steps(spec, pt_family_at(p.family, i), samples))
        return ord_inf_sum(fam)
    raise PreconditionViolated("not a pnpterm")


def _steps_family(spec: TRSpec, fam, samples):
    vals = [_steps(spec, pt_family_at(fam, i), samples)
            for i in range(samples + 1)]
    return P._fit_ordinal_family(
        vals, lambda i: _steps(spec, pt_family_at(fam, i), samples))


def component_at(spec: TRSpec, p: ProofTerm, alpha: Ordinal,
                 samples: int = P.FAMILY_SAMPLES) -> MStep:
    """The alpha-th one-step of a ppterm."""
    if isinstance(alpha, int):
        alpha = Ordinal.from_int(alpha)
    total = steps_count(spec, p, samples)
    if not alpha < total:
        raise PreconditionViolated(f"{alpha} >= steps count {total}")
    return _component(spec, p, alpha, samples)


def _component(spec, p, alpha, samples):
    if isinstance(p, MStep):
        return p
    if isinstance(p, Comp):
        nl = _steps(spec, p.left, samples)
        if alpha < nl:
            return _component(spec, p.left, alpha, samples)
        return _component(spec, p.right, alpha.minus(nl), samples)
    if isinstance(p, InfComp):
        k, gamma = ord_decompose(alpha, _steps_family(spec, p.family, samples))
        return _component(spec, pt_family_at(p.family, k), gamma, samples)
    raise PreconditionViolated("not a ppterm")


def components(spec: TRSpec, p: ProofTerm):
    """All components of a finite pnpterm, in order."""
    n = steps_count(spec, p).as_int()
    return [component_at(spec, p, Ordinal.from_int(i)) for i in range(n)]


def maxd_maxsd(spec: TRSpec, p: ProofTerm):
    """(maximal component depth, maximal rule pattern depth) of a
    finite-step ppterm."""
    n = steps_count(spec, p)
    if not n.is_finite:
        raise PreconditionViolated("maxd needs finitely many steps")
    views = [one_step_view(spec, c) for c in components(spec, p)]
    maxd = max((v.sdepth for v in views), default=0)
    rules = {v.pt.term.nodes[T.node_at(v.pt.term, v.rpos)].label for v in views}
    maxsd = max((T.pattern_info(spec.rules[r].lhs)[1] for r in rules), default=0)
    return maxd, maxsd


def tail(spec: TRSpec, p: ProofTerm) -> ProofTerm:
    """Everything after the first component."""
    if not is_ppterm(spec, p):
        raise PreconditionViolated("tail of a non-ppterm")
    return _tail(spec, p)


def _tail(spec, p):
    if isinstance(p, MStep):
        return MStep(P.mstep_target(spec, p.term))
    if isinstance(p, Comp):
        if isinstance(p.left, MStep):
            return p.right
        return comp(_tail(spec, p.left), p.right)
    if isinstance(p, InfComp):
        head, rest = split_head(p)
        if isinstance(head, MStep):
            return rest
        return comp(_tail(spec, head), rest)
    raise PreconditionViolated("not a ppterm")


# -- denotation of single steps ------------------------------------------

def denote_step(a: RedexStep) -> MStep:
    """The one-step with the rule symbol at the redex position."""
    inner = T.sym(a.rule.name, *[a.subst[x] for x in a.rule.vars])
    return MStep(T.replace_at(a.source, inner, a.position))


def to_step(spec: TRSpec, o: ProofTerm) -> RedexStep:
    """The reduction step denoted by a one-step."""
    v = one_step_view(spec, o)
    label = T.symbol_at(o.term, v.rpos)
    rule = spec.rules[label]
    subst = {x: T.subterm_at(o.term, v.rpos + (i,))
             for i, x in enumerate(rule.vars, start=1)}
    return RedexStep(P.mstep_source(spec, o.term), v.rpos, rule, subst)


# -- denotation of reduction sequences -------------------------------------

def denote_redseq(spec: TRSpec, r: ReductionSequence,
                  samples: int = P.FAMILY_SAMPLES) -> ProofTerm:
    """A pnpterm whose components denote the steps of r, in order."""
    pieces = []
    for blk in r.blocks:
        if isinstance(blk, FiniteBlock):
            pieces.extend(denote_step(s) for s in blk.steps)
        elif isinstance(blk, OmegaBlock):
            def ev(i, blk=blk):
                return denote_step(R._block_step(spec, blk, i)).term
            tf = T.fit_term_family([ev(i) for i in range(samples + 1)], ev)
            pieces.append(InfComp(MStepF(tf)))
        elif isinstance(blk, OmegaChunks):
            def ev(j, blk=blk):
                return comps([denote_step(s) for s in blk.chunk_fn(j)])
            pieces.append(InfComp(P.fit_pt_family(
                [ev(j) for j in range(samples + 1)], ev, blk.mind_growth)))
        elif isinstance(blk, OmegaIter):
            def ev(j, blk=blk):
                return denote_redseq(
                    spec, ReductionSequence(R._block_src(blk.block_fn(j)),
                                            (blk.block_fn(j),)), samples)
            pieces.append(InfComp(P.SampledPT(ev, blk.mind_growth)))
        else:
            raise UnsupportedFamily(repr(blk))
    if not pieces:
        return MStep(r.source)
    return comps(pieces)


def _fit_pos_template(positions):
    base = positions[0]
    if all(p == base for p in positions):
        return PosTemplate(base, T.EPSILON, 0, 0)
    p0, p1 = positions[0], positions[1]
    if len(p1) > len(p0) and tuple(p1[:len(p0)]) == tuple(p0):
        rep = tuple(p1[len(p0):])
        cand = PosTemplate(p0, rep, 1, 0)
        if all(cand.at(i) == tuple(p) for i, p in enumerate(positions)):
            return cand
    return None


def to_redseq(spec: TRSpec, p: ProofTerm,
              samples: int = P.FAMILY_SAMPLES) -> ReductionSequence:
    """The schedule whose alpha-th step is the denoted component."""
    if not is_pnpterm(spec, p, samples):
        raise PreconditionViolated("only pnpterms denote reduction sequences")
    blocks = _to_blocks(spec, p, samples)
    return ReductionSequence(P.analyze(spec, p).src, tuple(blocks))


def _to_blocks(spec, p, samples):
    if isinstance(p, MStep):
        if P._rule_occ_count(spec, p.term) == 0:
            return []
        return [FiniteBlock((to_step(spec, p),))]
    if isinstance(p, Comp):
        return _merge_finite(_to_blocks(spec, p.left, samples) +
                             _to_blocks(spec, p.right, samples))
    if isinstance(p, InfComp):
        fam = p.family
        inst_steps = _steps_family(spec, fam, samples)
        # one-step instances with a template position pattern: omega block
        insts = [pt_family_at(fam, i) for i in range(samples + 1)]
        if all(isinstance(q, MStep) and is_one_step(spec, q) for q in insts):
            pos = _fit_pos_template([rpos(spec, q) for q in insts])
            rules = {T.symbol_at(q.term, rpos(spec, q)) for q in insts}
            if pos is not None and len(rules) == 1:
                def ev(i):
                    return P.mstep_source(spec, pt_family_at(fam, i).term)
                tf = T.fit_term_family([ev(i) for i in range(samples + 1)], ev)
                return [OmegaBlock(tf, pos, rules.pop())]
        minds = [analyze(spec, q).mind for q in insts]
        a = 1 if all(minds[i] >= i for i in range(len(minds))) else 0

        def chunk(j, fam=fam):
            steps = []
            q = pt_family_at(fam, j)
            for c in components(spec, q):
                steps.append(to_step(spec, c))
            return tuple(steps)

        tgt_fam = T.SampledTF(lambda j: analyze(spec, pt_family_at(fam, j)).tgt)
        try:
            tgt_fam = P.pt_fam_tgt_tf(spec, fam)
        except UnsupportedFamily:
            pass
        return [OmegaChunks(chunk, (a, 0), tgt_fam)]
    raise PreconditionViolated("not a pnpterm")


def _merge_finite(blocks):
    out = []
    for b in blocks:
        if out and isinstance(b, FiniteBlock) and isinstance(out[-1], FiniteBlock):
            out[-1] = FiniteBlock(out[-1].steps + b.steps)
        else:
            out.append(b)
    return out


# -- denotational equivalence ----------------------------------------------

def _sample_ordinals(total: Ordinal, bound: int):
    """Representative ordinals below `total` for componentwise sampling."""
    out = []
    for j in range(4):
        for k in range(bound + 1):
            alpha = Ordinal.omega_power(1, j) + Ordinal.from_int(k) if j else \
                Ordinal.from_int(k)
            if alpha < total:
                out.append(alpha)
    return out


def _component_templates(spec, p, samples):
    """(prefix one-steps, modulus, residue term templates) of an
    w-length pnpterm, when its shape supports template flattening."""
    prefix = []
    while isinstance(p, Comp):
        left = p.left
        n = _steps(spec, left, samples)
        if not n.is_finite:
            return None
        prefix.extend(c.term for c in components(spec, left))
        p = p.right
    if not isinstance(p, InfComp):
        return None
    fam = p.family
    while isinstance(fam, P.ConsF):
        for h in fam.heads:
            n = _steps(spec, h, samples)
            if not n.is_finite:
                return None
            prefix.extend(c.term for c in components(spec, h))
        fam = fam.tail
    flat = _flatten_family(spec, fam)
    if flat is None:
        return None
    return prefix, len(flat), flat


def _flatten_family(spec, fam):
    """One TermFamily per component of each instance, for instances with
    a fixed finite number of one-steps."""
    if isinstance(fam, MStepF):
        return [fam.tf]
    if isinstance(fam, P.CompF):
        l = _flatten_family(spec, fam.left)
        r = _flatten_family(spec, fam.right)
        if l is None or r is None:
            return None
        return l + r
    if isinstance(fam, P.WrapF):
        subs = _flatten_family(spec, fam.sub)
        if subs is None:
            return None
        return [T.IterTF(fam.ctx, fam.a, fam.b, s) for s in subs]
    return None


def _scale_tf(tf, m, r):
    """The template at indices m*j + r, as a family over j."""
    if isinstance(tf, T.ConstTF):
        return tf
    if isinstance(tf, T.SymTF):
        return T.SymTF(tf.label, tuple(_scale_tf(s, m, r) for s in tf.subs))
    if isinstance(tf, T.IterTF):
        return T.IterTF(tf.ctx, tf.a * m, tf.a * r + tf.b, _scale_tf(tf.sub, m, r))
    return None


def _tf_struct_eq(a, b) -> bool:
    if isinstance(a, T.ConstTF) and isinstance(b, T.ConstTF):
        return a.term == b.term
    if isinstance(a, T.SymTF) and isinstance(b, T.SymTF):
        return a.label == b.label and len(a.subs) == len(b.subs) and \
            all(_tf_struct_eq(x, y) for x, y in zip(a.subs, b.subs))
    if isinstance(a, T.IterTF) and isinstance(b, T.IterTF):
        return a.ctx == b.ctx and (a.a, a.b) == (b.a, b.b) and \
            _tf_struct_eq(a.sub, b.sub)
    return False


def _templates_equal(spec, p, q, samples) -> bool:
    tp = _component_templates(spec, p, samples)
    tq = _component_templates(spec, q, samples)
    if tp is None or tq is None:
        return False
    pre_p, m_p, flat_p = tp
    pre_q, m_q, flat_q = tq
    m = math.lcm(m_p, m_q)
    # align prefixes to a common length divisible point
    L = max(len(pre_p), len(pre_q))
    L += (-L) % m

    def residue_templates(pre, mm, flat):
        # component index L + m*j + r expressed through the original family
        out = []
        for r in range(m):
            idx = L + r - len(pre)       # instance-flat index at j = 0 offset
            k0, r0 = divmod(idx, mm)
            tmpl = _scale_tf(flat[r0], m // mm, k0)
            if tmpl is None:
                return None
            out.append(tmpl)
        return out

    def extend_prefix(spec_p, pre, mm, flat, upto):
        ext = list(pre)
        j = 0
        while len(ext) < upto:
            for tfl in flat:
                ext.append(T.eval_term_family(tfl, j))
                if len(ext) == upto:
                    break
            j += 1
        return ext

    ep = extend_prefix(spec, pre_p, m_p, flat_p, L)
    eq_ = extend_prefix(spec, pre_q, m_q, flat_q, L)
    if any(not x == y for x, y in zip(ep, eq_)):
        return False
    rp = residue_templates(pre_p, m_p, flat_p)
    rq = residue_templates(pre_q, m_q, flat_q)
    if rp is None or rq is None:
        return False
    return all(_tf_struct_eq(x, y) for x, y in zip(rp, rq))


def deneq_check(spec: TRSpec, p: ProofTerm, q: ProofTerm,
                sample_bound: int = P.FAMILY_SAMPLES) -> dict:
    """Verdict on denotational equivalence.

    Step counts are compared exactly.  Finite component sequences are
    compared exactly; infinite ones first by template normalization
    (giving an exact `equal`), otherwise componentwise at sampled
    ordinals (`equal-up-to-sampling`)."""
    np_, nq = steps_count(spec, p, sample_bound), steps_count(spec, q, sample_bound)
    if np_ != nq:
        return {"status": "unequal", "witness": "steps",
                "detail": f"{np_} vs {nq}"}
    if np_.is_finite:
        for i in range(np_.as_int()):
            a = component_at(spec, p, Ordinal.from_int(i), sample_bound)
            b = component_at(spec, q, Ordinal.from_int(i), sample_bound)
            if not a.term == b.term:
                return {"status": "unequal", "witness": str(i)}
        return {"status": "equal", "witness": None}
    for alpha in _sample_ordinals(np_, sample_bound):
        a = component_at(spec, p, alpha, sample_bound)
        b = component_at(spec, q, alpha, sample_bound)
        if not a.term == b.term:
            return {"status": "unequal", "witness": str(alpha)}
    if np_ == ORD_OMEGA and _templates_equal(spec, p, q, sample_bound):
        return {"status": "equal", "witness": None}
    return {"status": "equal-up-to-sampling", "witness": None}


# -- rebracketing equivalence ----------------------------------------------

BREQ_RULES = ("refl", "eqn", "symm", "trans", "comp", "infcomp")


def breq_check(spec: TRSpec, d: Derivation, p: ProofTerm, q: ProofTerm,
               mode: str = "full", samples: int = P.FAMILY_SAMPLES):
    """Check d as a rebracketing-equivalence derivation of p ~ q: only
    Assoc instances, and no fun/rule congruence."""
    if not (pt_eq(d.lhs, p, samples) and pt_eq(d.rhs, q, samples)):
        raise DerivationInvalid((), "conclusion differs from the claimed pair")
    _check_rules(d, BREQ_RULES + (("lim",) if mode == "full" else ()))
    return check_derivation(spec, d, mode, samples, allowed_schemas=("Assoc",))


def _check_rules(d: Derivation, allowed):
    if d.rule not in allowed:
        raise DerivationInvalid((), f"rule {d.rule} not in the breq fragment")
    for c in d.children:
        _check_rules(c, allowed)
    # premise families are checked lazily by the main checker


def _assoc_moves(p: ProofTerm):
    """Single Assoc applications (either direction) anywhere in a finite
    pnpterm, as (result, derivation) pairs."""
    out = []
    if isinstance(p, Comp):
        a = p.left
        if isinstance(p.right, Comp):   # a.(b.c) -> (a.b).c
            b, c = p.right.left, p.right.right
            res = Comp(Comp(a, b), c)
            out.append((res, d_eqn("Assoc", p, res)))
        if isinstance(p.left, Comp):    # (a.b).c -> a.(b.c)
            a, b = p.left.left, p.left.right
            c = p.right
            res = Comp(a, Comp(b, c))
            out.append((res, d_symm(d_eqn("Assoc", res, p))))
        for sub, build in ((p.left, lambda d: d_comp(d, d_refl(p.right))),
                           (p.right, lambda d: d_comp(d_refl(p.left), d))):
            for res, d in _assoc_moves(sub):
                if sub is p.left:
                    out.append((Comp(res, p.right), build(d)))
                else:
                    out.append((Comp(p.left, res), build(d)))
    return out


def breq_search(spec: TRSpec, p: ProofTerm, q: ProofTerm, max_nodes: int = 2000):
    """Bounded search for a rebracketing derivation p ~ q over finite
    pnpterms: breadth-first closure under single Assoc moves.  Returns
    the derivation or None."""
    if not steps_count(spec, p).is_finite:
        raise PreconditionViolated("bounded search works on finite pnpterms")

    def key(t):
        return _shape_key(t)

    seen = {key(p): d_refl(p)}
    frontier = [(p, d_refl(p))]
    while frontier and len(seen) < max_nodes:
        nxt = []
        for cur, dcur in frontier:
            if pt_eq(cur, q):
                return dcur if dcur.rule != "refl" or pt_eq(p, q) else dcur
            for res, dstep in _assoc_moves(cur):
                k = key(res)
                if k in seen:
                    continue
                dres = d_trans(dcur, dstep) if dcur.rule != "refl" else dstep
                seen[k] = dres
                nxt.append((res, dres))
        frontier = nxt
    for cur, dcur in [(p, d_refl(p))] + frontier:
        if pt_eq(cur, q):
            return dcur
    return None


def _shape_key(p: ProofTerm):
    if isinstance(p, MStep):
        return ("m", p.term.canonical_key())
    if isinstance(p, Comp):
        return ("c", _shape_key(p.left), _shape_key(p.right))
    raise PreconditionViolated("finite pnpterms only")
