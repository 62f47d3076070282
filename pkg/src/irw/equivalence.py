"""Permutation equivalence: the base relation and its limit extension.

Equations: IdLeft, IdRight, Assoc, Struct, InfStruct, OutIn, InOut,
with the convergence side conditions on IdRight and InOut.  Rules:
refl, eqn, symm, trans, fun, rule, comp, infcomp, and (full mode only)
lim, whose premises are index families of base-mode derivations with
the minimum-activity bound mind > k.

A Derivation is the checkable certificate; `check_derivation` trusts
nothing, re-deriving every side condition.  Premise families are
checked at indices 0..samples plus whatever the templates guarantee,
and the report says whether the check was exact or bounded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import proofterm as P
from . import term as T
from .errors import DerivationInvalid, NonConvergent, PreconditionViolated, \
    UnsupportedFamily
from .ordinal import Ordinal, ZERO, ONE, ord_inf_sum
from .proofterm import (Comp, ConstPT, FunF, InfComp, MStep, MStepF, ProofTerm,
                        RuleApp, SampledPT, analyze, comp, fun, pt_eq,
                        pt_family_at, rule_pt, split_head)
from .trs import TRSpec, _project_family

OMEGA = math.inf
SCHEMAS = ("IdLeft", "IdRight", "Assoc", "Struct", "InfStruct", "OutIn", "InOut")
RULES = ("refl", "eqn", "symm", "trans", "fun", "rule", "comp", "infcomp", "lim")


@dataclass(frozen=True)
class EquationInstance:
    schema: str
    lhs: ProofTerm
    rhs: ProofTerm


@dataclass
class DerivFamily:
    """k |-> premise derivation, an exact evaluator."""

    fn: Callable[[int], "Derivation"]

    def at(self, k: int) -> "Derivation":
        return self.fn(k)


@dataclass
class Derivation:
    rule: str
    lhs: ProofTerm
    rhs: ProofTerm
    children: tuple = ()
    schema: str = None      # for eqn nodes
    label: str = None       # for fun / rule nodes
    fam: DerivFamily = None        # infcomp premises
    lim_l: DerivFamily = None      # lim premises for the lhs
    lim_r: DerivFamily = None      # lim premises for the rhs

    def conclusion(self):
        return (self.lhs, self.rhs)


# -- decompositions ------------------------------------------------------

def decompose_dot(p: ProofTerm):
    """p as (left, right) of a top-level dot, if it has one.  Infinite
    concatenations split as head . tail: the same infinite term."""
    if isinstance(p, Comp):
        return p.left, p.right
    if isinstance(p, InfComp):
        return split_head(p)
    return None


def decompose_sym(p: ProofTerm):
    """p as (label, children) when its root is a symbol of Sigma^R."""
    if isinstance(p, MStep):
        nd = p.term.node()
        if nd.is_var:
            return None
        return nd.label, [MStep(t) for t in T.args(p.term)]
    if isinstance(p, (P.Fun, RuleApp)):
        return p.label, list(p.children)
    return None


def instantiate_pt(tree: T.RationalTerm, binding: dict, spec: TRSpec) -> ProofTerm:
    """A finite tree over Sigma with variables replaced by proof terms."""
    def go(nid):
        nd = tree.nodes[nid]
        if nd.is_var:
            return binding[nd.label]
        kids = [go(c) for c in nd.children]
        if nd.label in spec.rules:
            return rule_pt(nd.label, kids)
        return fun(nd.label, kids)
    return go(tree.root)


def fill_pt(C: T.RationalTerm, pts, spec: TRSpec) -> ProofTerm:
    """C[pts] for a context over Sigma, holes in BPos order."""
    holes = T.hole_positions(C)
    if len(holes) != len(pts):
        raise PreconditionViolated(
            f"context has {len(holes)} holes, got {len(pts)}")
    by_pos = dict(zip(holes, pts))

    def go(nid, path):
        nd = C.nodes[nid]
        if nd.label == T.HOLE and not nd.is_var:
            return by_pos[path]
        sub = T.RationalTerm(C.nodes, nid)
        if not any(T.pos_leq(path, h) for h in holes):
            return MStep(sub)
        kids = [go(c, path + (i,))
                for i, c in enumerate(nd.children, start=1)]
        return fun(nd.label, kids)

    return go(C.root, T.EPSILON)


# -- equation checking ----------------------------------------------------

def check_equation(spec: TRSpec, e: EquationInstance, samples=P.FAMILY_SAMPLES):
    """Raise DerivationInvalid unless e is a legal basic equation
    instance (side conditions included).  Both sides must be valid
    proof terms; validity of a dot already carries the convergence and
    cohesion requirements of the composition."""
    def bad(cond):
        raise DerivationInvalid((), f"{e.schema}: {cond}")

    if e.schema not in SCHEMAS:
        bad(f"unknown schema {e.schema}")
    li = analyze(spec, e.lhs, samples)
    analyze(spec, e.rhs, samples)
    lhs, rhs = e.lhs, e.rhs

    if e.schema == "IdLeft":
        d = decompose_dot(lhs)
        if d is None:
            bad("lhs is not a composition")
        one, psi = d
        if not (isinstance(one, MStep) and
                P._rule_occ_count(spec, one.term) == 0):
            bad("left unit is not a plain term")
        if not one.term == analyze(spec, psi, samples).src:
            bad("left unit differs from src of the body")
        if not pt_eq(psi, rhs, samples):
            bad("rhs is not the composition body")
        return

    if e.schema == "IdRight":
        d = decompose_dot(lhs)
        if d is None:
            bad("lhs is not a composition")
        psi, one = d
        info = analyze(spec, psi, samples)
        if not info.convergent:
            bad("body must be convergent")
        if not (isinstance(one, MStep) and
                P._rule_occ_count(spec, one.term) == 0):
            bad("right unit is not a plain term")
        if not one.term == info.tgt:
            bad("right unit differs from tgt of the body")
        if not pt_eq(psi, rhs, samples):
            bad("rhs is not the composition body")
        return

    if e.schema == "Assoc":
        d1 = decompose_dot(lhs)
        if d1 is None:
            bad("lhs is not a composition")
        a, bc = d1
        d2 = decompose_dot(bc)
        if d2 is None:
            bad("lhs right part is not a composition")
        b, c = d2
        d3 = decompose_dot(rhs)
        if d3 is None:
            bad("rhs is not a composition")
        ab, c2 = d3
        d4 = decompose_dot(ab)
        if d4 is None:
            bad("rhs left part is not a composition")
        a2, b2 = d4
        if not (pt_eq(a, a2, samples) and pt_eq(b, b2, samples)
                and pt_eq(c, c2, samples)):
            bad("the three parts do not match")
        return

    if e.schema == "Struct":
        d = decompose_dot(lhs)
        if d is None:
            bad("lhs is not a composition")
        s1, s2 = decompose_sym(d[0]), decompose_sym(d[1])
        if s1 is None or s2 is None or s1[0] != s2[0]:
            bad("both sides of the dot must share a root symbol")
        f = s1[0]
        if f not in spec.sig.funcs:
            bad("Struct needs an object function symbol")
        sr = decompose_sym(rhs)
        if sr is None or sr[0] != f:
            bad("rhs root differs")
        for x, y, z in zip(s1[1], s2[1], sr[1]):
            if not pt_eq(comp(x, y), z, samples):
                bad("argumentwise composition mismatch")
        return

    if e.schema == "InfStruct":
        if not isinstance(lhs, InfComp):
            bad("lhs is not an infinite concatenation")
        sr = decompose_sym(rhs)
        if sr is None:
            bad("rhs is not symbol-rooted")
        f, rargs = sr
        if f not in spec.sig.funcs:
            bad("InfStruct needs an object function symbol")
        for j in range(1, len(rargs) + 1):
            if not isinstance(rargs[j - 1], InfComp):
                bad(f"rhs argument {j} is not an infinite concatenation")
        for i in range(samples + 1):
            inst = decompose_sym(pt_family_at(lhs.family, i))
            if inst is None or inst[0] != f or len(inst[1]) != len(rargs):
                bad(f"component {i} is not {f}-rooted")
            for j, sub in enumerate(inst[1]):
                if not pt_eq(sub, pt_family_at(rargs[j].family, i), samples):
                    bad(f"projection mismatch at component {i}, argument {j+1}")
        return

    if e.schema in ("OutIn", "InOut"):
        sl = decompose_sym(lhs)
        if sl is None or sl[0] not in spec.rules:
            bad("lhs is not a rule symbol application")
        mu = spec.rules[sl[0]]
        psis = sl[1]
        d = decompose_dot(rhs)
        if d is None:
            bad("rhs is not a composition")
        if e.schema == "OutIn":
            head, rest = d
            sh = decompose_sym(head)
            if sh is None or sh[0] != mu.name:
                bad("rhs head is not the rule on source terms")
            for s_i, psi in zip(sh[1], psis):
                if not (isinstance(s_i, MStep)
                        and s_i.term == analyze(spec, psi, samples).src):
                    bad("head argument is not the source of the body argument")
            want = instantiate_pt(mu.rhs, dict(zip(mu.vars, psis)), spec)
            if not pt_eq(rest, want, samples):
                bad("rhs tail is not rhs[psi...]")
            return
        # InOut: all arguments must be convergent (Remark on lhs validity)
        for j, psi in enumerate(psis, start=1):
            if not analyze(spec, psi, samples).convergent:
                bad(f"argument {j} must be convergent for InOut")
        body, tail = d
        want = instantiate_pt(mu.lhs, dict(zip(mu.vars, psis)), spec)
        if not pt_eq(body, want, samples):
            bad("rhs head is not lhs[psi...]")
        st = decompose_sym(tail)
        if st is None or st[0] != mu.name:
            bad("rhs tail is not the rule on target terms")
        for t_i, psi in zip(st[1], psis):
            if not (isinstance(t_i, MStep)
                    and t_i.term == analyze(spec, psi, samples).tgt):
                bad("tail argument is not the target of the body argument")
        return


# -- derivation checking ---------------------------------------------------

@dataclass
class CheckReport:
    ok: bool
    layer: Ordinal
    exact: bool
    mode: str


def _sum_layers(layers, layer_at) -> Ordinal:
    """Infinite sum of premise layers.  Layers are informational: when
    the samples fit no described family but grow monotonically, the sup
    of the partial sums is bounded by the next omega power."""
    from .proofterm import _fit_ordinal_family
    try:
        return ord_inf_sum(_fit_ordinal_family(layers, layer_at))
    except UnsupportedFamily:
        if all(layers[i] <= layers[i + 1] for i in range(len(layers) - 1)):
            e = max(l.terms[0][0] for l in layers if l.terms)
            return Ordinal.omega_power(e + 1)
        raise


def check_derivation(spec: TRSpec, d: Derivation, mode: str = "full",
                     samples: int = P.FAMILY_SAMPLES,
                     allowed_schemas=SCHEMAS) -> CheckReport:
    """Check every node of the derivation; raises DerivationInvalid.

    In base mode the lim rule is rejected.  `allowed_schemas` restricts
    the usable equations (rebracketing equivalence passes only Assoc).
    """
    exact = [True]
    seen = {}   # (id(node), lim_ok) -> layer; premise chains share nodes

    def err(path, reason):
        raise DerivationInvalid(path, reason)

    def eq_terms(a, b, path, what):
        if isinstance(a, InfComp) or isinstance(b, InfComp):
            exact[0] = False
        if not pt_eq(a, b, samples):
            err(path, f"{what} does not line up")

    def check(node, path, lim_ok) -> Ordinal:
        if not isinstance(node, Derivation):
            err(path, "not a derivation node")
        key = (id(node), lim_ok)
        hit = seen.get(key)
        if hit is not None and hit[0] is node:
            return hit[1]
        layer = _check(node, path, lim_ok)
        seen[key] = (node, layer)
        return layer

    def _check(node, path, lim_ok) -> Ordinal:
        analyze(spec, node.lhs, samples)
        analyze(spec, node.rhs, samples)
        r = node.rule
        if r == "refl":
            eq_terms(node.lhs, node.rhs, path, "refl sides")
            return ONE
        if r == "eqn":
            if node.schema not in allowed_schemas:
                err(path, f"equation {node.schema} not permitted here")
            try:
                check_equation(spec, EquationInstance(node.schema, node.lhs,
                                                      node.rhs), samples)
            except DerivationInvalid as e:
                err(path, e.reason)
            if node.schema == "InfStruct":
                exact[0] = False
            return ONE
        if r == "symm":
            (c,) = node.children
            eq_terms(c.lhs, node.rhs, path, "symm rhs")
            eq_terms(c.rhs, node.lhs, path, "symm lhs")
            return check(c, path + (0,), lim_ok) + ONE
        if r == "trans":
            cs = node.children
            if len(cs) < 2:
                err(path, "trans needs at least two children")
            eq_terms(cs[0].lhs, node.lhs, path, "trans start")
            for i in range(len(cs) - 1):
                eq_terms(cs[i].rhs, cs[i + 1].lhs, path, f"trans link {i}")
            eq_terms(cs[-1].rhs, node.rhs, path, "trans end")
            layer = ZERO
            for i, c in enumerate(cs):
                layer = layer + check(c, path + (i,), lim_ok)
            return layer + ONE
        if r in ("fun", "rule"):
            sl, sr = decompose_sym(node.lhs), decompose_sym(node.rhs)
            if sl is None or sr is None or sl[0] != sr[0]:
                err(path, "conclusion sides are not applications of one symbol")
            if node.label is not None and node.label != sl[0]:
                err(path, "node label differs from the conclusion symbol")
            if r == "fun" and sl[0] not in spec.sig.funcs:
                err(path, "fun rule needs a function symbol")
            if r == "rule" and sl[0] not in spec.rules:
                err(path, "rule rule needs a rule symbol")
            if len(node.children) != len(sl[1]):
                err(path, "child count differs from the arity")
            layer = ZERO
            for i, (c, la, ra) in enumerate(zip(node.children, sl[1], sr[1])):
                eq_terms(c.lhs, la, path + (i,), "argument lhs")
                eq_terms(c.rhs, ra, path + (i,), "argument rhs")
                layer = layer + check(c, path + (i,), lim_ok)
            return layer + ONE
        if r == "comp":
            dl, dr = decompose_dot(node.lhs), decompose_dot(node.rhs)
            if dl is None or dr is None:
                err(path, "conclusion sides are not compositions")
            c1, c2 = node.children
            eq_terms(c1.lhs, dl[0], path, "left part lhs")
            eq_terms(c1.rhs, dr[0], path, "left part rhs")
            eq_terms(c2.lhs, dl[1], path, "right part lhs")
            eq_terms(c2.rhs, dr[1], path, "right part rhs")
            return check(c1, path + (0,), lim_ok) + \
                check(c2, path + (1,), lim_ok) + ONE
        if r == "infcomp":
            if not (isinstance(node.lhs, InfComp) and isinstance(node.rhs, InfComp)):
                err(path, "conclusion sides are not infinite concatenations")
            if node.fam is None:
                err(path, "missing premise family")
            exact[0] = False
            layers = []
            for k in range(samples + 1):
                sub = node.fam.at(k)
                eq_terms(sub.lhs, pt_family_at(node.lhs.family, k),
                         path + (k,), f"component {k} lhs")
                eq_terms(sub.rhs, pt_family_at(node.rhs.family, k),
                         path + (k,), f"component {k} rhs")
                layers.append(check(sub, path + (k,), lim_ok))

            def layer_at(k, node=node, path=path, lim_ok=lim_ok):
                if k < len(layers):
                    return layers[k]
                return check(node.fam.at(k), path + (k,), lim_ok)

            return _sum_layers(layers, layer_at)
        if r == "lim":
            if mode != "full" or not lim_ok:
                err(path, "lim rule not available here")
            if node.lim_l is None or node.lim_r is None:
                err(path, "missing lim premise families")
            exact[0] = False
            layer = ZERO
            for side, famd, concl in (("l", node.lim_l, node.lhs),
                                      ("r", node.lim_r, node.rhs)):
                layers = []
                for k in range(samples + 1):
                    sub = famd.at(k)
                    eq_terms(sub.lhs, concl, path + (side, k), "lim premise lhs")
                    dd = decompose_dot(sub.rhs)
                    if dd is None:
                        err(path + (side, k), "lim premise rhs is not a dot")
                    tail_mind = analyze(spec, dd[1], samples).mind
                    if not tail_mind > k:
                        err(path + (side, k),
                            f"tail mind {tail_mind} not above {k}")
                    layers.append(check(sub, path + (side, k), False))

                def layer_at(k, famd=famd, side=side, lay=layers):
                    if k < len(lay):
                        return lay[k]
                    return check(famd.at(k), path + (side, k), False)

                layer = layer + _sum_layers(layers, layer_at)
            for k in range(samples + 1):
                chi_l = decompose_dot(node.lim_l.at(k).rhs)[0]
                chi_r = decompose_dot(node.lim_r.at(k).rhs)[0]
                if not pt_eq(chi_l, chi_r, samples):
                    err(path + (k,), "shared prefixes of the lim premises differ")
            return layer
        err(path, f"unknown rule {r}")

    layer = check(d, (), True)
    return CheckReport(True, layer, exact[0], mode)


# -- combinators for building certified derivations -----------------------

def d_refl(p: ProofTerm) -> Derivation:
    return Derivation("refl", p, p)


def d_eqn(schema: str, lhs: ProofTerm, rhs: ProofTerm) -> Derivation:
    return Derivation("eqn", lhs, rhs, schema=schema)


def d_symm(d: Derivation) -> Derivation:
    return Derivation("symm", d.rhs, d.lhs, (d,))


def d_trans(*ds) -> Derivation:
    ds = [d for d in ds if d is not None]
    flat = []
    for d in ds:
        if d.rule == "refl":
            continue
        flat.append(d)
    if not flat:
        return d_refl(ds[0].lhs if ds else None)
    if len(flat) == 1:
        return flat[0]
    return Derivation("trans", flat[0].lhs, flat[-1].rhs, tuple(flat))


def d_fun(label: str, ds) -> Derivation:
    lhs = fun(label, [d.lhs for d in ds])
    rhs = fun(label, [d.rhs for d in ds])
    return Derivation("fun", lhs, rhs, tuple(ds), label=label)


def d_rule(label: str, ds) -> Derivation:
    lhs = rule_pt(label, [d.lhs for d in ds])
    rhs = rule_pt(label, [d.rhs for d in ds])
    return Derivation("rule", lhs, rhs, tuple(ds), label=label)


def d_comp(d1: Derivation, d2: Derivation) -> Derivation:
    return Derivation("comp", comp(d1.lhs, d2.lhs), comp(d1.rhs, d2.rhs),
                      (d1, d2))


def d_infcomp(fn, lhs: InfComp, rhs: InfComp) -> Derivation:
    return Derivation("infcomp", lhs, rhs, fam=DerivFamily(fn))


def d_lim(lhs, rhs, prem_l, prem_r) -> Derivation:
    return Derivation("lim", lhs, rhs, lim_l=DerivFamily(prem_l),
                      lim_r=DerivFamily(prem_r))


# -- constructive lemmas ----------------------------------------------------

def derive_trivial_src(spec: TRSpec, p: ProofTerm) -> Derivation:
    """p ~ src(p) for trivial p, via IdLeft under the limit rule."""
    info = analyze(spec, p)
    if info.mind != OMEGA:
        raise PreconditionViolated("proof term is not trivial")
    s = MStep(info.src)
    prem_l = d_symm(d_eqn("IdLeft", comp(s, p), p))       # p ~ s . p
    prem_r = d_symm(d_eqn("IdLeft", comp(s, s), s))       # s ~ s . s
    return d_lim(p, s, lambda k: prem_l, lambda k: prem_r)


def _split_by_argument(C: T.RationalTerm, items):
    """Distribute hole-indexed items over the root arguments, each group
    reordered to match the sub-context's own BPos order."""
    holes = T.hole_positions(C)
    if len(holes) != len(items):
        raise PreconditionViolated(
            f"context has {len(holes)} holes, got {len(items)} items")
    by_pos = dict(zip(holes, items))
    out = []
    for i in range(1, len(C.node().children) + 1):
        sub_ctx = T.subterm_at(C, (i,))
        sub_holes = T.hole_positions(sub_ctx)
        out.append((sub_ctx, [by_pos[(i,) + h] for h in sub_holes]))
    return out


def derive_struct_ctx(spec: TRSpec, C: T.RationalTerm, ps, qs) -> Derivation:
    """C[ps] . C[qs] ~ C[p_i . q_i] for a context over Sigma."""
    holes = T.hole_positions(C)
    if len(ps) != len(qs):
        raise PreconditionViolated("argument lists differ in length")
    if holes == [T.EPSILON]:
        return d_refl(comp(ps[0], qs[0]))
    nd = C.node()
    if nd.label == T.HOLE or nd.is_var or nd.label not in spec.sig.funcs:
        raise PreconditionViolated("not a context over the signature")
    groups = _split_by_argument(C, list(zip(ps, qs)))
    As, Bs, arg_ds = [], [], []
    for sub_ctx, pairs in groups:
        if not pairs:
            t = MStep(sub_ctx)
            As.append(t)
            Bs.append(t)
            arg_ds.append(d_eqn("IdLeft", comp(t, t), t))
        else:
            sub_ps = [p for p, _ in pairs]
            sub_qs = [q for _, q in pairs]
            As.append(fill_pt(sub_ctx, sub_ps, spec))
            Bs.append(fill_pt(sub_ctx, sub_qs, spec))
            arg_ds.append(derive_struct_ctx(spec, sub_ctx, sub_ps, sub_qs))
    f = nd.label
    step1 = d_eqn("Struct", comp(fun(f, As), fun(f, Bs)),
                  fun(f, [comp(a, b) for a, b in zip(As, Bs)]))
    return d_trans(step1, d_fun(f, arg_ds))


def derive_ctx_compat(spec: TRSpec, C: T.RationalTerm, ds) -> Derivation:
    """C[lhs_i] ~ C[rhs_i] from per-hole derivations."""
    holes = T.hole_positions(C)
    if holes == [T.EPSILON]:
        if len(ds) != 1:
            raise PreconditionViolated("one derivation per hole")
        return ds[0]
    arg_ds = []
    for sub_ctx, sub_ds in _split_by_argument(C, list(ds)):
        if not sub_ds:
            arg_ds.append(d_refl(MStep(sub_ctx)))
        else:
            arg_ds.append(derive_ctx_compat(spec, sub_ctx, sub_ds))
    return d_fun(C.node().label, arg_ds)
