"""Condensation, factorisation and compression of proof terms.

Every transformation here returns its result together with a Derivation
certifying equivalence with the input; trust is concentrated in
`check_derivation`.  The pipeline is:

  collapsing-sequence analysis -> head flattening of multisteps ->
  lifting head steps to leading one-steps -> condensation to a fixed
  prefix (cfps / cfpc) -> jumping finite stepwise activity over deep
  proof terms -> factorisation (finite head, deep tail) -> compression
  to a stepwise proof term of length <= w.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from . import proofterm as P
from . import term as T
from .denotation import steps_count
from .equivalence import (Derivation, check_derivation, d_comp, d_eqn, d_fun,
                          d_refl, d_rule, d_symm, d_trans, decompose_dot,
                          decompose_sym, derive_ctx_compat, derive_struct_ctx,
                          derive_trivial_src, d_lim, fill_pt, instantiate_pt)
from .errors import (DerivationInvalid, NonConvergent, PositionOutOfDomain,
                     PreconditionViolated, UnsupportedFamily)
from .ordinal import Ordinal, OMEGA as ORD_OMEGA
from .proofterm import (Comp, InfComp, MStep, ProofTerm, RuleApp, analyze,
                        comp, comps, infcomp_tgt, is_one_step, mind,
                        mstep_source, mstep_target, pt_eq, pt_family_at,
                        rpos, shift_f, split_head)
from .trs import RedexStep, TRSpec, make_companions

OMEGA = math.inf


def _tgt_trs(spec: TRSpec) -> TRSpec:
    if "companions" not in spec._cache:
        spec._cache["companions"] = make_companions(spec)
    return spec._cache["companions"][1]


# -- collapsing sequences -------------------------------------------------

def collapsing_analysis(spec: TRSpec, m: MStep, p) -> dict:
    """The unique maximal collapsing sequence of positions from p.

    Finite sequences report their length; an infinite one is a cycle of
    collapsing rule symbols in the graph, reported with its witness."""
    nid = T.node_at(m.term, tuple(p))
    positions = [tuple(p)]
    seen = {}
    cur = tuple(p)
    while True:
        nd = m.term.nodes[nid]
        rule = spec.rules.get(nd.label) if not nd.is_var else None
        if rule is None or not rule.is_collapsing:
            return {"infinite": False, "length": len(positions),
                    "positions": positions}
        if nid in seen:
            return {"infinite": True, "witness": cur,
                    "cycle_entry": positions[seen[nid]]}
        seen[nid] = len(positions) - 1
        j = rule.collapsing_index()
        cur = cur + (j,)
        positions.append(cur)
        nid = nd.children[j - 1]


# -- head flattening -------------------------------------------------------

def head_flatten(spec: TRSpec, m: MStep):
    """Root tgt_T-steps from m down to a function-symbol root.

    Fewer than n steps where n is the least absent collapsing-sequence
    length; a collapsing cycle at the root makes m divergent."""
    tgt_t = _tgt_trs(spec)
    steps = []
    cur = m.term
    while True:
        nd = cur.node()
        rule = spec.rules.get(nd.label) if not nd.is_var else None
        if rule is None:
            return steps, MStep(cur)
        if rule.is_collapsing:
            info = collapsing_analysis(spec, MStep(cur), ())
            if info["infinite"]:
                raise NonConvergent("collapsing cycle at the root",
                                    witness=info["witness"])
        step = RedexStep(cur, (), tgt_t.rules["@" + nd.label], None)
        steps.append(step)
        if rule.is_collapsing:
            cur = T.subterm_at(cur, (rule.collapsing_index(),))
        else:
            binding = {x: T.subterm_at(cur, (i,))
                       for i, x in enumerate(rule.vars, start=1)}
            cur = T.apply_subst(binding, rule.rhs)


def _lift_one(spec: TRSpec, m: MStep, pos) -> tuple:
    """One tgt_T step at `pos` lifts to a leading one-step:
    (chi, phi, derivation of m ~ chi . phi)."""
    term = m.term
    nd = term.node()
    if pos == ():
        rule = spec.rules.get(nd.label)
        if rule is None:
            raise PreconditionViolated("root step needs a rule symbol root")
        args = T.args(term)
        srcs = [mstep_source(spec, a) for a in args]
        chi = MStep(T.sym(rule.name, *srcs))
        binding = dict(zip(rule.vars, args))
        phi = MStep(T.apply_subst(binding, rule.rhs))
        return chi, phi, d_eqn("OutIn", m, comp(chi, phi))
    i = pos[0]
    args = T.args(term)
    sub = MStep(args[i - 1])
    chi_i, phi_i, d_i = _lift_one(spec, sub, tuple(pos[1:]))
    arg_ds = []
    chi_args, phi_args = [], []
    for j, a in enumerate(args, start=1):
        if j == i:
            arg_ds.append(d_i)
            chi_args.append(chi_i.term)
            phi_args.append(phi_i.term)
        else:
            s = mstep_source(spec, a)
            arg_ds.append(d_symm(d_eqn("IdLeft", comp(MStep(s), MStep(a)),
                                       MStep(a))))
            chi_args.append(s)
            phi_args.append(a)
    chi = MStep(T.sym(nd.label, *chi_args))
    phi = MStep(T.sym(nd.label, *phi_args))
    staged = d_fun(nd.label, arg_ds)
    unstage = d_symm(d_eqn("Struct", comp(chi, phi), staged.rhs))
    return chi, phi, d_trans(staged, unstage)


def lift_head_steps(spec: TRSpec, m: MStep, steps):
    """Lift a finite tgt_T reduction from m into a leading finite
    pnpterm: (chi, phi, derivation of m ~ chi . phi) with per-step
    depths preserved."""
    if not steps:
        s = MStep(mstep_source(spec, m.term))
        return s, m, d_symm(d_eqn("IdLeft", comp(s, m), m))
    chi0, m1, d0 = _lift_one(spec, m, tuple(steps[0].position))
    if len(steps) == 1:
        return chi0, m1, d0
    chi1, phi, d1 = lift_head_steps(spec, m1, steps[1:])
    chi = comp(chi0, chi1)
    chain = d_trans(d0, d_comp(d_refl(chi0), d1))
    reassoc = d_eqn("Assoc", comp(chi0, comp(chi1, phi)), comp(chi, phi))
    return chi, phi, d_trans(chain, reassoc)


def factorise_multistep(spec: TRSpec, m: MStep):
    """(chi, phi, cert): chi lists the root steps, phi has mind > 0."""
    info = analyze(spec, m)
    if not info.convergent:
        raise NonConvergent("multistep diverges", witness=info.witness)
    steps, residual = head_flatten(spec, m)
    chi, phi, d = lift_head_steps(spec, m, steps)
    return chi, phi, d


# -- fixed prefixes ---------------------------------------------------------

def term_prefix(t: T.RationalTerm, spa) -> T.RationalTerm:
    """The context agreeing with t exactly on the prefix-closed set spa."""
    spa = {tuple(p) for p in spa}
    for p in spa:
        if p and tuple(p[:-1]) not in spa:
            raise PreconditionViolated("prefix set is not prefix-closed")
        if not T.has_position(t, p):
            raise PositionOutOfDomain(T.pos_str(p))
    b = T.TermBuilder()

    def go(nid, path):
        if path not in spa:
            return b.node(T.HOLE)
        nd = t.nodes[nid]
        return b.node(nd.label,
                      [go(c, path + (i,))
                       for i, c in enumerate(nd.children, start=1)],
                      nd.is_var)

    if not spa:
        return T.hole()
    return b.build(go(t.root, T.EPSILON))


def _project_spa(spa, i):
    return {tuple(p[1:]) for p in spa if p and p[0] == i}


def respects_check(spec: TRSpec, p: ProofTerm, spa,
                   samples: int = P.FAMILY_SAMPLES) -> bool:
    """The structural fixed-prefix relation: the activity denoted by p
    never touches a position of spa."""
    spa = {tuple(q) for q in spa}
    for q in spa:
        if q and tuple(q[:-1]) not in spa:
            raise PreconditionViolated("prefix set is not prefix-closed")
    return _respects(spec, p, spa, samples)


def _respects(spec, p, spa, samples):
    if not spa:
        return True
    if isinstance(p, MStep):
        for q in spa:
            if not T.has_position(p.term, q):
                return False
            nd = p.term.nodes[T.node_at(p.term, q)]
            if nd.is_var or nd.label not in spec.sig.funcs:
                return False
        return True
    if isinstance(p, Comp):
        return _respects(spec, p.left, spa, samples) and \
            _respects(spec, p.right, spa, samples)
    if isinstance(p, InfComp):
        return all(_respects(spec, pt_family_at(p.family, i), spa, samples)
                   for i in range(samples + 1))
    if isinstance(p, P.Fun):
        n_args = len(p.children)
        if any(q for q in spa if q and q[0] > n_args):
            return False
        return all(_respects(spec, c, _project_spa(spa, i), samples)
                   for i, c in enumerate(p.children, start=1))
    if isinstance(p, RuleApp):
        return False
    raise PreconditionViolated(f"not a proof term: {p!r}")


def cfps(spec: TRSpec, p: ProofTerm, samples: int = P.FAMILY_SAMPLES):
    """Condense a proof term respecting {eps} to a function-symbol root:
    (result, derivation of p ~ result)."""
    if not respects_check(spec, p, {()}, samples):
        raise PreconditionViolated("proof term does not respect the root")
    return _cfps(spec, p, samples)


def _cfps(spec, p, samples):
    if isinstance(p, (MStep, P.Fun)):
        return p, d_refl(p)
    if isinstance(p, Comp):
        c1, d1 = _cfps(spec, p.left, samples)
        c2, d2 = _cfps(spec, p.right, samples)
        f, xs = decompose_sym(c1)
        f2, ys = decompose_sym(c2)
        if f != f2:
            raise PreconditionViolated("root symbols differ across a dot")
        out = P.fun(f, [comp(x, y) for x, y in zip(xs, ys)])
        return out, d_trans(d_comp(d1, d2), d_eqn("Struct", comp(c1, c2), out))
    if isinstance(p, InfComp):
        inst0, _ = _cfps(spec, pt_family_at(p.family, 0), samples)
        f, xs = decompose_sym(inst0)
        mid_fam = _cfps_family(spec, p.family, samples)
        mid = InfComp(mid_fam)
        d_inner = _infcomp_cfps_deriv(spec, p, mid, samples)
        out = P.fun(f, [InfComp(_proj_fam(spec, mid_fam, j, samples))
                        for j in range(1, len(xs) + 1)])
        return out, d_trans(d_inner, d_eqn("InfStruct", mid, out))
    raise PreconditionViolated("rule-rooted proof terms respect only {}")


def _infcomp_cfps_deriv(spec, p, mid, samples):
    def prem(i):
        _, d = _cfps(spec, pt_family_at(p.family, i), samples)
        return d
    from .equivalence import d_infcomp
    return d_infcomp(prem, p, mid)


def _fallback_growth(spec, fam, samples, shift=0):
    """Declared affine mind bound for a sampled stand-in of fam."""
    try:
        floor = _growth_floor(spec, fam, samples)
    except UnsupportedFamily:
        return (0, 0)
    b0, b1 = floor(0), floor(1)
    if b0 == OMEGA or b1 == OMEGA:
        return (0, 0)
    a = max(b1 - b0, 0)
    return (a, max(b0 + shift, 0))


def _cfps_family(spec, fam, samples):
    """Family of the instances' condensed forms."""
    if isinstance(fam, P.ConstPT):
        return P.ConstPT(_cfps(spec, fam.pt, samples)[0])
    if isinstance(fam, (P.MStepF, P.FunF)):
        return fam
    if isinstance(fam, P.WrapF) and (fam.b >= 1 or fam.a == 0):
        return fam
    if isinstance(fam, P.ConsF):
        return P.ConsF(tuple(_cfps(spec, h, samples)[0] for h in fam.heads),
                       _cfps_family(spec, fam.tail, samples))
    if isinstance(fam, P.CompF):
        l = _cfps_family(spec, fam.left, samples)
        r = _cfps_family(spec, fam.right, samples)
        f, xs = decompose_sym(pt_family_at(l, 0))
        return P.FunF(f, tuple(
            P.CompF(_proj_fam(spec, l, j, samples), _proj_fam(spec, r, j, samples))
            for j in range(1, len(xs) + 1)))
    return P.SampledPT(lambda i: _cfps(spec, pt_family_at(fam, i), samples)[0],
                       _fallback_growth(spec, fam, samples))


def _proj_fam(spec, fam, j, samples):
    """Family of the j-th arguments of symbol-rooted instances."""
    if isinstance(fam, P.ConstPT):
        return P.ConstPT(decompose_sym(fam.pt)[1][j - 1])
    if isinstance(fam, P.FunF):
        return fam.subs[j - 1]
    if isinstance(fam, P.MStepF):
        from .trs import _project_family
        try:
            return P.MStepF(_project_family(fam.tf, j))
        except UnsupportedFamily:
            pass
    if isinstance(fam, P.CompF):
        return P.CompF(_proj_fam(spec, fam.left, j, samples),
                       _proj_fam(spec, fam.right, j, samples))
    if isinstance(fam, P.ConsF):
        return P.ConsF(tuple(decompose_sym(h)[1][j - 1] for h in fam.heads),
                       _proj_fam(spec, fam.tail, j, samples))
    return P.SampledPT(
        lambda i: decompose_sym(pt_family_at(fam, i))[1][j - 1],
        _fallback_growth(spec, fam, samples, shift=-1))


def cfpc(spec: TRSpec, p: ProofTerm, spa, samples: int = P.FAMILY_SAMPLES):
    """Condense to the fixed prefix context over spa:
    (C[psi_1..psi_k], derivation)."""
    spa = {tuple(q) for q in spa}
    if not respects_check(spec, p, spa, samples):
        raise PreconditionViolated("proof term does not respect the prefix set")
    return _cfpc(spec, p, spa, samples)


def _cfpc(spec, p, spa, samples):
    if not spa:
        return p, d_refl(p)
    c, d1 = _cfps(spec, p, samples)
    f, xs = decompose_sym(c)
    sub_ds = []
    outs = []
    for j, x in enumerate(xs, start=1):
        o, d = _cfpc(spec, x, _project_spa(spa, j), samples)
        outs.append(o)
        sub_ds.append(d)
    out = P.fun(f, outs)
    return out, d_trans(d1, d_fun(f, sub_ds))


# -- jumping stepwise activity over deep proof terms -----------------------

def _pt_child(p: ProofTerm, i: int) -> ProofTerm:
    return decompose_sym(p)[1][i - 1]


def _pt_at(p: ProofTerm, pos) -> ProofTerm:
    for i in pos:
        p = _pt_child(p, i)
    return p


def _var_positions(lhs: T.RationalTerm):
    """Variable name -> its position in a linear finite lhs."""
    out = {}
    stack = [(T.EPSILON, lhs.root)]
    while stack:
        path, nid = stack.pop()
        nd = lhs.nodes[nid]
        if nd.is_var:
            out[nd.label] = path
        for i, c in enumerate(nd.children, start=1):
            stack.append((path + (i,), c))
    return out


def jump_numbers(spec: TRSpec, psi: ProofTerm):
    """(n, n') such that any convergent xi with mind(xi) >= n + n' can
    jump over psi: n is the maximal step depth of psi, n' accumulates
    Pdepth(rule) + 1 over the steps."""
    from .denotation import components, one_step_view
    n, nprime = 0, 0
    for c in components(spec, psi):
        v = one_step_view(spec, c)
        mu = spec.rules[T.symbol_at(c.term, v.rpos)]
        n = max(n, v.sdepth)
        nprime += T.pattern_info(mu.lhs)[1] + 1
    return n, nprime


def _jump_one(spec: TRSpec, xi: ProofTerm, psi: MStep, samples):
    """xi . psi ~ psi' . xi' for a one-step psi (the jump lemma)."""
    from .denotation import one_step_view
    v = one_step_view(spec, psi)
    mu = spec.rules[T.symbol_at(psi.term, v.rpos)]
    xi_info = analyze(spec, xi)
    nprime = T.pattern_info(mu.lhs)[1] + 1
    if not (xi_info.convergent and xi_info.mind >= v.sdepth + nprime):
        raise PreconditionViolated(
            f"jump needs mind(xi) >= {v.sdepth + nprime}, have {xi_info.mind}")
    src_psi = xi_info.tgt
    if not src_psi == mstep_source(spec, psi.term):
        raise PreconditionViolated("tgt(xi) differs from src(psi)")
    spa0 = {q for q, _ in T.positions_up_to(src_psi, v.sdepth - 1)} \
        if v.sdepth > 0 else set()
    ppos, _ = T.pattern_info(mu.lhs)
    spa = spa0 | {T.pos_concat(v.rpos, q) for q in ppos}
    xi_f, d_f = cfpc(spec, xi, spa, samples)

    C = term_prefix(src_psi, spa0)
    holes = T.hole_positions(C)
    j = holes.index(v.rpos)
    # decompose psi and xi_f against C and the lhs pattern
    psi_parts = [MStep(T.subterm_at(psi.term, h)) for h in holes]
    vpos = _var_positions(mu.lhs)
    xi_parts = [_pt_at(xi_f, h) for h in holes]
    phis = [_pt_at(xi_f, T.pos_concat(v.rpos, vpos[x])) for x in mu.vars]
    lhs_args = [analyze(spec, ph).tgt for ph in phis]  # the u_i

    # step A: xi_f . psi  ~  C[xi_1 . t_1, ..., l[phis] . mu(us), ...]
    lhs_parts = list(xi_parts)
    rhs_parts = list(psi_parts)
    d_a = derive_struct_ctx(spec, C, lhs_parts, rhs_parts)

    # step B: inside each hole
    hole_ds = []
    for h, (xp, pp) in zip(holes, zip(xi_parts, psi_parts)):
        if h == v.rpos:
            mu_args = P.rule_pt(mu.name, phis)
            hole_ds.append(d_symm(d_eqn("InOut", mu_args, comp(xp, pp))))
        else:
            hole_ds.append(d_eqn("IdRight", comp(xp, pp), xp))
    d_b = derive_ctx_compat(spec, C, hole_ds)

    # step C: emit sources / OutIn inside each hole
    out_ds = []
    xs, ys = [], []
    for h, xp in zip(holes, xi_parts):
        if h == v.rpos:
            mu_args = P.rule_pt(mu.name, phis)
            ws = [MStep(analyze(spec, ph).src) for ph in phis]
            head = P.rule_pt(mu.name, ws)
            rest = instantiate_pt(mu.rhs, dict(zip(mu.vars, phis)), spec)
            out_ds.append(d_eqn("OutIn", mu_args, comp(head, rest)))
            xs.append(head)
            ys.append(rest)
        else:
            s = MStep(analyze(spec, xp).src)
            out_ds.append(d_symm(d_eqn("IdLeft", comp(s, xp), xp)))
            xs.append(s)
            ys.append(xp)
    d_c = derive_ctx_compat(spec, C, out_ds)

    # step D: split the context composition
    d_d = d_symm(derive_struct_ctx(spec, C, xs, ys))
    psi2 = fill_pt(C, xs, spec)
    xi2 = fill_pt(C, ys, spec)
    deriv = d_trans(d_comp(d_f, d_refl(psi)), d_a, d_b, d_c, d_d)
    return psi2, xi2, deriv


def _right_nest(spec: TRSpec, p: ProofTerm):
    """Rotate a finite pnpterm into right-nested shape, with the
    rebracketing derivation."""
    steps = []
    cur = p
    while True:
        if not isinstance(cur, Comp) or not isinstance(cur.left, Comp):
            if isinstance(cur, Comp):
                tail, d_tail = _right_nest(spec, cur.right)
                if d_tail.rule != "refl":
                    steps.append(d_comp(d_refl(cur.left), d_tail))
                    cur = Comp(cur.left, tail)
            break
        a, b = cur.left.left, cur.left.right
        c = cur.right
        nxt = comp(a, comp(b, c))
        steps.append(d_symm(d_eqn("Assoc", nxt, cur)))
        cur = nxt
    if not steps:
        return p, d_refl(p)
    return cur, d_trans(*steps)


def jump(spec: TRSpec, xi: ProofTerm, psi: ProofTerm,
         samples: int = P.FAMILY_SAMPLES):
    """xi . psi ~ psi' . xi': move the finite pnpterm psi to the front.

    Requires mind(xi) >= n + n' for the jump numbers of psi; returns
    (psi', xi', derivation), with the step count and per-step depths of
    psi preserved and mind(xi') >= mind(xi) - n'."""
    n, nprime = jump_numbers(spec, psi)
    info = analyze(spec, xi)
    if not info.convergent:
        raise NonConvergent("jump needs a convergent proof term",
                            witness=info.witness)
    if not info.mind >= n + nprime:
        raise PreconditionViolated(
            f"jump needs mind(xi) >= {n}+{nprime}, have {info.mind}")
    return _jump(spec, xi, psi, samples)


def _jump(spec, xi, psi, samples):
    if steps_count(spec, psi).is_zero:
        # xi . t ~ src(xi) . xi
        info = analyze(spec, xi)
        t = MStep(info.tgt)
        s = MStep(info.src)
        d = d_trans(d_eqn("IdRight", comp(xi, t), xi),
                    d_symm(d_eqn("IdLeft", comp(s, xi), xi)))
        return s, xi, d
    rn, d_rn = _right_nest(spec, psi)
    if isinstance(rn, MStep):
        psi2, xi2, d = _jump_one(spec, xi, rn, samples)
        full = d_trans(d_comp(d_refl(xi), d_rn), d) if d_rn.rule != "refl" else d
        return psi2, xi2, full
    head, rest = rn.left, rn.right
    psi_h, xi_h, d1 = _jump_one(spec, xi, head, samples)
    psi_r, xi2, d2 = _jump(spec, xi_h, rest, samples)
    # xi.(h.rest) ~ (xi.h).rest ~ (psi_h.xi_h).rest ~ psi_h.(xi_h.rest)
    #            ~ psi_h.(psi_r.xi2) ~ (psi_h.psi_r).xi2
    c0 = d_comp(d_refl(xi), d_rn) if d_rn.rule != "refl" else None
    a1 = d_eqn("Assoc", comp(xi, rn), comp(comp(xi, head), rest))
    c1 = d_comp(d1, d_refl(rest))
    a2 = d_symm(d_eqn("Assoc", comp(psi_h, comp(xi_h, rest)),
                      comp(comp(psi_h, xi_h), rest)))
    c2 = d_comp(d_refl(psi_h), d2)
    a3 = d_eqn("Assoc", comp(psi_h, comp(psi_r, xi2)),
               comp(comp(psi_h, psi_r), xi2))
    deriv = d_trans(*[d for d in (c0, a1, c1, a2, c2, a3) if d is not None])
    return comp(psi_h, psi_r), xi2, deriv


# -- sequentialisation helpers ----------------------------------------------

def _embed_pnpterm(spec, C, chi):
    """C[chi] as a pnpterm, for a one-hole context over Sigma."""
    if T.hole_positions(C) == [T.EPSILON]:
        return chi, d_refl(chi)
    if isinstance(chi, MStep):
        return MStep(T.fill_context(C, [chi.term])), \
            d_refl(MStep(T.fill_context(C, [chi.term])))
    if isinstance(chi, Comp):
        a, b = chi.left, chi.right
        d0 = d_symm(derive_struct_ctx(spec, C, [a], [b]))
        ea, da = _embed_pnpterm(spec, C, a)
        eb, db = _embed_pnpterm(spec, C, b)
        return comp(ea, eb), d_trans(d0, d_comp(da, db))
    raise PreconditionViolated("finite pnpterms only")


def _seq_ctx(spec, C, parts, samples):
    """C[parts] ~ a finite pnpterm: distribute the holes one at a time.
    Trivial parts are folded into the context."""
    holes = T.hole_positions(C)
    infos = [analyze(spec, x) for x in parts]
    counts = [steps_count(spec, x) for x in parts]
    active = [i for i, c in enumerate(counts) if not c.is_zero]
    if not active:
        out = fill_pt(C, parts, spec)
        return out, d_refl(out)
    if len(parts) != len(holes):
        raise PreconditionViolated("hole/part mismatch")
    if len(active) < len(parts):
        # fold the trivial parts into the context
        filled = T.fill_context(
            C, [infos[i].src if i not in active else T.hole()
                for i in range(len(parts))])
        return _seq_ctx(spec, filled, [parts[i] for i in active], samples)
    if len(active) == 1:
        return _embed_pnpterm(spec, C, parts[0])
    j = 0
    hole_ds = []
    xs, ys = [], []
    for i, x in enumerate(parts):
        if i == j:
            t = MStep(infos[i].tgt)
            hole_ds.append(d_symm(d_eqn("IdRight", comp(x, t), x)))
            xs.append(x)
            ys.append(t)
        else:
            s = MStep(infos[i].src)
            hole_ds.append(d_symm(d_eqn("IdLeft", comp(s, x), x)))
            xs.append(s)
            ys.append(x)
    d1 = derive_ctx_compat(spec, C, hole_ds)
    d2 = d_symm(derive_struct_ctx(spec, C, xs, ys))
    first = fill_pt(C, xs, spec)
    second = fill_pt(C, ys, spec)
    # first factor has one active hole, second recurses
    hole_j = T.hole_positions(C)[j]
    cj = T.fill_context(C, [T.hole() if i == j else infos[i].src
                            for i in range(len(parts))])
    e1, de1 = _embed_pnpterm(spec, cj, parts[j])
    e2, de2 = _seq_ctx(spec, C, ys_parts(parts, infos, j), samples)
    deriv = d_trans(d1, d2, d_comp(de1, de2))
    return comp(e1, e2), deriv


def ys_parts(parts, infos, j):
    return [MStep(infos[i].tgt) if i == j else parts[i]
            for i in range(len(parts))]


# -- factorisation -----------------------------------------------------------

def factorise(spec: TRSpec, p: ProofTerm, n: int,
              samples: int = P.FAMILY_SAMPLES):
    """p ~ chi . phi with chi a finite pnpterm and mind(phi) > n."""
    info = analyze(spec, p)
    if not info.convergent:
        raise NonConvergent("factorisation needs a convergent proof term",
                            witness=info.witness)
    return _factorise(spec, p, n, samples)


def _is_plain(spec, p) -> bool:
    return isinstance(p, MStep) and P._rule_occ_count(spec, p.term) == 0


def _drop_units(spec, p):
    """(p', derivation p ~ p' or None): remove plain-term units around
    dots, recursively under symbols.  Keeps factorisation tails from
    accumulating identity junk across rounds."""
    if isinstance(p, Comp):
        l, dl = _drop_units(spec, p.left)
        r, dr = _drop_units(spec, p.right)
        d0 = d_comp(dl or d_refl(l), dr or d_refl(r)) if (dl or dr) else None
        cur = comp(l, r)
        if _is_plain(spec, l):
            d1 = d_eqn("IdLeft", cur, r)
            return r, d_trans(d0, d1) if d0 else d1
        if _is_plain(spec, r):
            d1 = d_eqn("IdRight", cur, l)
            return l, d_trans(d0, d1) if d0 else d1
        return cur, d0
    if isinstance(p, (P.Fun, RuleApp)):
        subs = [_drop_units(spec, c) for c in p.children]
        if not any(d for _, d in subs):
            return p, None
        ds = [d or d_refl(c) for (c, d), _ in zip(subs, p.children)]
        df = d_fun(p.label, ds) if isinstance(p, P.Fun) else d_rule(p.label, ds)
        return df.rhs, df
    return p, None


def _unit_split(spec, p):
    info = analyze(spec, p)
    s = MStep(info.src)
    return s, p, d_symm(d_eqn("IdLeft", comp(s, p), p))


def _factorise(spec, p, n, samples):
    chi, phi, d = _factorise_raw(spec, p, n, samples)
    phi2, dphi = _drop_units(spec, phi)
    if dphi is not None:
        d = d_trans(d, d_comp(d_refl(chi), dphi))
    return chi, phi2, d


def _factorise_raw(spec, p, n, samples):
    info = analyze(spec, p)
    if info.mind > n:
        return _unit_split(spec, p)

    if isinstance(p, MStep):
        chi0, phi0, d0 = factorise_multistep(spec, p)
        if n == 0:
            return chi0, phi0, d0
        f, args = decompose_sym(phi0)
        sub = [_factorise(spec, a, n - 1, samples) for a in args]
        d_args = d_fun(f, [d for _, _, d in sub])
        chis = [c for c, _, _ in sub]
        phis = [ph for _, ph, _ in sub]
        cf = T.sym(f, *[T.hole()] * len(args))
        d_split = d_symm(derive_struct_ctx(spec, cf, chis, phis))
        seq, d_seq = _seq_ctx(spec, cf, chis, samples)
        phi = P.fun(f, phis)
        inner = d_trans(d_args, d_split, d_comp(d_seq, d_refl(phi)))
        return _glue(spec, chi0, seq, phi, d0, inner)

    if isinstance(p, Comp):
        chi2, phi2, d2 = _factorise(spec, p.right, n, samples)
        m0, mprime = jump_numbers(spec, chi2)
        m = max(n, m0)
        chi1, phi1, d1 = _factorise(spec, p.left, m + mprime, samples)
        chi2p, phi1p, dj = _jump(spec, phi1, chi2, samples)
        # p ~ (chi1.phi1).(chi2.phi2) ~ chi1.(phi1.(chi2.phi2))
        #   ~ chi1.((phi1.chi2).phi2) ~ chi1.((chi2p.phi1p).phi2)
        #   ~ chi1.(chi2p.(phi1p.phi2)) ~ (chi1.chi2p).(phi1p.phi2)
        a = d_comp(d1, d2)
        b = d_symm(d_eqn("Assoc", comp(chi1, comp(phi1, comp(chi2, phi2))),
                         comp(comp(chi1, phi1), comp(chi2, phi2))))
        c = d_comp(d_refl(chi1),
                   d_eqn("Assoc", comp(phi1, comp(chi2, phi2)),
                         comp(comp(phi1, chi2), phi2)))
        e = d_comp(d_refl(chi1), d_comp(dj, d_refl(phi2)))
        f_ = d_comp(d_refl(chi1),
                    d_symm(d_eqn("Assoc", comp(chi2p, comp(phi1p, phi2)),
                                 comp(comp(chi2p, phi1p), phi2))))
        phi = comp(phi1p, phi2)
        t1, t2 = (steps_count(spec, chi1).is_zero,
                  steps_count(spec, chi2p).is_zero)
        if t1:
            g = d_eqn("IdLeft", comp(chi1, comp(chi2p, phi)), comp(chi2p, phi))
            return chi2p, phi, d_trans(a, b, c, e, f_, g)
        if t2:
            g = d_comp(d_refl(chi1), d_eqn("IdLeft", comp(chi2p, phi), phi))
            return chi1, phi, d_trans(a, b, c, e, f_, g)
        g = d_eqn("Assoc", comp(chi1, comp(chi2p, comp(phi1p, phi2))),
                  comp(comp(chi1, chi2p), comp(phi1p, phi2)))
        return comp(chi1, chi2p), phi, d_trans(a, b, c, e, f_, g)

    if isinstance(p, InfComp):
        k = _deep_tail_index(spec, p.family, n, samples)
        prefix_parts = [pt_family_at(p.family, i) for i in range(k + 1)]
        tail = InfComp(shift_f(p.family, k + 1))
        split, d_split = _split_prefix(spec, p, k)
        prefix = split.left
        chi, phi1, d1 = _factorise(spec, prefix, n, samples)
        a = d_comp(d1, d_refl(tail))
        b = d_symm(d_eqn("Assoc", comp(chi, comp(phi1, tail)),
                         comp(comp(chi, phi1), tail)))
        return chi, comp(phi1, tail), d_trans(d_split, a, b)

    if isinstance(p, P.Fun):
        f = p.label
        sub = [_factorise(spec, c, max(n - 1, 0), samples) for c in p.children]
        d_args = d_fun(f, [d for _, _, d in sub])
        chis = [c for c, _, _ in sub]
        phis = [ph for _, ph, _ in sub]
        cf = T.sym(f, *[T.hole()] * len(p.children))
        d_split = d_symm(derive_struct_ctx(spec, cf, chis, phis))
        seq, d_seq = _seq_ctx(spec, cf, chis, samples)
        phi = P.fun(f, phis)
        return seq, phi, d_trans(d_args, d_split, d_comp(d_seq, d_refl(phi)))

    if isinstance(p, RuleApp):
        mu = spec.rules[p.label]
        srcs = [MStep(analyze(spec, c).src) for c in p.children]
        head = P.rule_pt(mu.name, srcs)
        rest = instantiate_pt(mu.rhs, dict(zip(mu.vars, p.children)), spec)
        d_out = d_eqn("OutIn", p, comp(head, rest))
        if mu.is_collapsing:
            j = mu.collapsing_index()
            chi1, phi, d1 = _factorise(spec, p.children[j - 1], n, samples)
        else:
            rpat = term_prefix(mu.rhs,
                               {q for q in T.pattern_info(mu.rhs)[0]})
            hole_order = T.hole_positions(rpat)
            if not hole_order:
                # erasing rule: the tail is already a deep (trivial) term
                return head, rest, d_out
            kids = [p.children[mu.vars.index(
                mu.rhs.nodes[T.node_at(mu.rhs, h)].label)] for h in hole_order]
            sub = [_factorise(spec, c, max(n - 1, 0), samples) for c in kids]
            d_args = derive_ctx_compat(spec, rpat, [d for _, _, d in sub])
            chis = [c for c, _, _ in sub]
            phis = [ph for _, ph, _ in sub]
            d_split = d_symm(derive_struct_ctx(spec, rpat, chis, phis))
            chi1, d_seq = _seq_ctx(spec, rpat, chis, samples)
            phi = fill_pt(rpat, phis, spec)
            d1 = d_trans(d_args, d_split, d_comp(d_seq, d_refl(phi)))
        return _glue(spec, head, chi1, phi, d_out, d1)

    raise PreconditionViolated(f"not a proof term: {p!r}")


def _glue(spec, head, chi1, phi, d_head, d_rest):
    """From p ~ head . X (d_head) and X ~ chi1 . phi (d_rest), build
    p ~ chi . phi with the trivial units dropped from the head."""
    step = d_comp(d_refl(head), d_rest)
    head_triv = steps_count(spec, head).is_zero
    chi1_triv = steps_count(spec, chi1).is_zero
    if chi1_triv:
        drop = d_comp(d_refl(head), _unit_elim(spec, chi1, phi))
        return head, phi, d_trans(d_head, step, drop)
    if head_triv:
        drop = d_eqn("IdLeft", comp(head, comp(chi1, phi)), comp(chi1, phi))
        return chi1, phi, d_trans(d_head, step, drop)
    reassoc = d_eqn("Assoc", comp(head, comp(chi1, phi)),
                    comp(comp(head, chi1), phi))
    return comp(head, chi1), phi, d_trans(d_head, step, reassoc)


def _unit_elim(spec, unit, phi):
    """unit . phi ~ phi when unit is a trivial plain term."""
    return d_eqn("IdLeft", comp(unit, phi), phi)


def _deep_tail_index(spec, fam, n, samples):
    """Least k such that every component past k has mind > n, justified
    by the family template (or its declared growth)."""
    bound = _growth_floor(spec, fam, samples)
    for k in range(samples + 1):
        if bound(k + 1) > n and all(
                analyze(spec, pt_family_at(fam, i)).mind > n
                for i in range(k + 1, samples + 2)):
            return k
    raise UnsupportedFamily("cannot certify a deep tail for this family")


def _growth_floor(spec, fam, samples):
    """A sound lower bound g with mind(fam_j) >= g(i) for all j >= i."""
    if isinstance(fam, P.ConstPT):
        m = analyze(spec, fam.pt).mind
        return lambda i: m
    if isinstance(fam, P.ConsF):
        inner = _growth_floor(spec, fam.tail, samples)
        heads = [analyze(spec, h).mind for h in fam.heads]
        k = len(fam.heads)
        return lambda i: min([inner(max(0, i - k))] +
                             [m for j, m in enumerate(heads) if j >= i])
    if isinstance(fam, P.CompF):
        l = _growth_floor(spec, fam.left, samples)
        r = _growth_floor(spec, fam.right, samples)
        return lambda i: min(l(i), r(i))
    if isinstance(fam, P.FunF):
        subs = [_growth_floor(spec, s, samples) for s in fam.subs]
        return lambda i: 1 + min(s(i) for s in subs)
    if isinstance(fam, P.RuleF):
        return lambda i: 0
    if isinstance(fam, P.WrapF):
        hd = len(T.hole_positions(fam.ctx)[0])
        inner = _growth_floor(spec, fam.sub, samples)
        return lambda i: hd * (fam.a * i + fam.b) + inner(i)
    if isinstance(fam, P.MStepF):
        return _tf_growth_floor(spec, fam.tf, samples)
    if isinstance(fam, P.SampledPT):
        a, b = fam.mind_growth
        for i in range(samples + 1):
            if not analyze(spec, fam.fn(i)).mind >= a * i + b:
                raise UnsupportedFamily("declared mind growth fails at a sample")
        return lambda i: a * i + b
    raise UnsupportedFamily(repr(fam))


def _tf_growth_floor(spec, tf, samples):
    if isinstance(tf, T.ConstTF):
        m = P.mstep_mind(spec, tf.term)
        return lambda i: m
    if isinstance(tf, T.SymTF):
        if tf.label in spec.rules:
            return lambda i: 0
        subs = [_tf_growth_floor(spec, s, samples) for s in tf.subs]
        return lambda i: 1 + min(s(i) for s in subs)
    if isinstance(tf, T.IterTF):
        hd = len(T.hole_positions(tf.ctx)[0])
        if any(nd.label in spec.rules for nd in tf.ctx.nodes):
            return lambda i: 0
        inner = _tf_growth_floor(spec, tf.sub, samples)
        return lambda i: hd * (tf.a * i + tf.b) + inner(i)
    raise UnsupportedFamily(repr(tf))


def _split_prefix(spec, p: InfComp, k: int):
    """p ~ (x_0 . ... . x_k) . tail, the prefix left-nested; built from
    Assoc steps (head/tail splits of the concatenation are identities)."""
    steps = []
    cur = p
    for _ in range(k):
        a, bc = decompose_dot(cur)
        b, c = decompose_dot(bc)
        nxt = Comp(Comp(a, b), c)    # keep the raw pair: c may be a limit
        steps.append(d_eqn("Assoc", cur, nxt))
        cur = nxt
    if k == 0:
        a, c = split_head(p)
        cur = Comp(a, c)
        return cur, d_refl(cur)
    deriv = d_trans(*steps)
    return cur, deriv


# -- compression --------------------------------------------------------------

MAX_ROUNDS = 40


def compress(spec: TRSpec, p: ProofTerm, samples: int = P.FAMILY_SAMPLES):
    """An equivalent stepwise proof term with at most w steps:
    (q, full-mode derivation of p ~ q)."""
    info = analyze(spec, p)
    if not info.convergent:
        raise NonConvergent("compression needs a convergent proof term",
                            witness=info.witness)

    memo = {0: p}
    chis = {}
    ds = {}

    def psi_at(i):
        while i not in memo:
            j = max(memo)
            cur = memo[j]
            m = analyze(spec, cur).mind
            if m == OMEGA:
                return None
            nj = max(m, j)
            chi, phi, d = _factorise(spec, cur, nj, samples)
            chis[j], ds[j], memo[j + 1] = chi, d, phi
        return memo[i]

    # trichotomy on the first trivial tail
    first_trivial = None
    for i in range(samples + 3):
        cur = psi_at(i)
        if cur is None or analyze(spec, cur).mind == OMEGA:
            first_trivial = i
            break

    if first_trivial == 0:
        q = MStep(info.src)
        return q, derive_trivial_src(spec, p)

    def chain_to(k):
        """p ~ chi_0 . (chi_1 . ( ... chi_k . psi_{k+1}))  (right-nested)."""
        psi_at(k + 1)
        d = ds[k]
        for j in range(k - 1, -1, -1):
            d = d_trans(ds[j], d_comp(d_refl(chis[j]), d))
        return d

    def left_nest(k):
        """Rebracket the chain conclusion to (prefix)(tail)."""
        d = chain_to(k)
        cur = d.rhs
        steps = [d]
        for _ in range(k):
            a, bc = decompose_dot(cur)
            b, c = decompose_dot(bc)
            nxt = Comp(Comp(a, b), c)
            steps.append(d_eqn("Assoc", cur, nxt))
            cur = nxt
        return d_trans(*steps) if len(steps) > 1 else d

    if first_trivial is not None:
        n = first_trivial
        tailp = psi_at(n)
        q = comps([chis[j] for j in range(n)])
        d = chain_to(n - 1)
        # replace the trivial tail by its source term, then drop it
        t = MStep(analyze(spec, tailp).src)
        inner = d_trans(derive_trivial_src(spec, tailp))
        drop = d_eqn("IdRight", comp(chis[n - 1], t), chis[n - 1])
        fix = d_trans(d_comp(d_refl(chis[n - 1]), inner), drop)
        for j in range(n - 2, -1, -1):
            fix = d_comp(d_refl(chis[j]), fix)
        return q, d_trans(d, fix)

    # genuinely infinite activity: q is the concatenation of the chunks
    fam = P.fit_pt_family([chis[i] for i in range(samples + 1)],
                          lambda i: (psi_at(i + 1), chis[i])[1],
                          mind_growth=(1, 0))
    q = InfComp(fam)

    def prem_l(k):
        return left_nest(k)

    def prem_r(k):
        split, d_split = _split_prefix(spec, q, k)
        return d_split if k > 0 else d_refl(split)

    # align: premise 0 conclusions are chi_0 . tail on both sides
    def prem_r0(k):
        if k == 0:
            a, c = split_head(q)
            return d_refl(Comp(a, c))
        split, d_split = _split_prefix(spec, q, k)
        return d_split

    deriv = d_lim(p, q, prem_l, prem_r0)
    return q, deriv
