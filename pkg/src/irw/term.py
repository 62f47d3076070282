"""Rational terms: finite and cyclic-infinite first-order terms.

A term is a rooted term graph: a finite store of labelled nodes with
ordered children.  Cycles represent rational infinite unfoldings, so
every infinite term handled here has finitely many distinct subterms.
Equality is bisimulation (equality of unfoldings), computed by graph
minimization; all operations are pure and return fresh immutable values,
sharing node stores where the definitions permit.

Positions are 1-based tuples of ints.  The hole symbol of contexts is
HOLE, written `_` in the concrete syntax.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional

from .errors import (ArityMismatch, MalformedTerm, NonConvergent,
                     PositionOutOfDomain, UnsupportedFamily)

Position = tuple
EPSILON: Position = ()
HOLE = "□"  # one square box, arity 0

# Truncation depth used by the cross-check oracles in the test suite.
DEFAULT_TRUNCATION = 32


def pos_concat(p: Position, q: Position) -> Position:
    return tuple(p) + tuple(q)


def pos_depth(p: Position) -> int:
    return len(p)


def pos_leq(p: Position, q: Position) -> bool:
    """Prefix order."""
    return len(p) <= len(q) and tuple(q[: len(p)]) == tuple(p)


def pos_disjoint(p: Position, q: Position) -> bool:
    return not pos_leq(p, q) and not pos_leq(q, p)


def pos_parse(text: str) -> Position:
    text = text.strip()
    if text in ("", "e", "eps"):
        return EPSILON
    return tuple(int(x) for x in text.replace("·", ".").split("."))


def pos_str(p: Position) -> str:
    return "e" if not p else ".".join(str(i) for i in p)


@dataclass(frozen=True)
class Node:
    label: str
    children: tuple = ()
    is_var: bool = False


class RationalTerm:
    """Immutable rooted term graph.  Node ids index into `nodes`."""

    __slots__ = ("nodes", "root", "_key", "_hash", "_holes")

    def __init__(self, nodes, root):
        object.__setattr__(self, "nodes", tuple(nodes))
        object.__setattr__(self, "root", root)
        object.__setattr__(self, "_key", None)
        object.__setattr__(self, "_hash", None)
        object.__setattr__(self, "_holes", None)

    # -- equality = bisimulation --------------------------------------
    def canonical_key(self):
        if self._key is None:
            object.__setattr__(self, "_key", _minimize(self))
        return self._key

    def __eq__(self, other):
        if not isinstance(other, RationalTerm):
            return NotImplemented
        return self.canonical_key() == other.canonical_key()

    def __hash__(self):
        if self._hash is None:
            object.__setattr__(self, "_hash", hash(self.canonical_key()))
        return self._hash

    def node(self, nid=None) -> Node:
        return self.nodes[self.root if nid is None else nid]

    @property
    def head(self) -> str:
        return self.node().label

    def __repr__(self):
        return f"<term {to_text(self)}>"


def _reachable(nodes, root):
    seen = []
    stack = [root]
    seen_set = set()
    while stack:
        n = stack.pop()
        if n in seen_set:
            continue
        seen_set.add(n)
        seen.append(n)
        stack.extend(nodes[n].children)
    return seen_set


def _freeze(nodes: dict, root) -> RationalTerm:
    """Garbage-collect and renumber a node dict into a term."""
    keep = _reachable(nodes, root)
    order = sorted(keep)
    remap = {old: i for i, old in enumerate(order)}
    out = []
    for old in order:
        nd = nodes[old]
        out.append(Node(nd.label, tuple(remap[c] for c in nd.children), nd.is_var))
    return RationalTerm(out, remap[root])


def _minimize(t: RationalTerm):
    """Canonical form of the reachable graph (partition refinement +
    breadth-first renumbering).  Equal unfoldings give equal keys."""
    reach = sorted(_reachable({i: n for i, n in enumerate(t.nodes)}, t.root))
    sig = {n: (t.nodes[n].label, t.nodes[n].is_var, len(t.nodes[n].children))
           for n in reach}
    block = {n: sig[n] for n in reach}
    while True:
        newblock = {n: (block[n],) + tuple(block[c] for c in t.nodes[n].children)
                    for n in reach}
        ids = {v: i for i, v in enumerate(sorted(set(newblock.values()), key=repr))}
        newblock = {n: ids[newblock[n]] for n in reach}
        if len(set(newblock.values())) == len(set(block.values())):
            block = newblock
            break
        block = newblock
    # canonical numbering: BFS over blocks from the root's block
    rep = {}
    for n in reach:
        rep.setdefault(block[n], n)
    order = []
    seen = set()
    queue = [block[t.root]]
    while queue:
        b = queue.pop(0)
        if b in seen:
            continue
        seen.add(b)
        order.append(b)
        for c in t.nodes[rep[b]].children:
            queue.append(block[c])
    pos = {b: i for i, b in enumerate(order)}
    key = tuple(
        (t.nodes[rep[b]].label, t.nodes[rep[b]].is_var,
         tuple(pos[block[c]] for c in t.nodes[rep[b]].children))
        for b in order)
    return key


# -- construction -----------------------------------------------------

def sym(label: str, *children: RationalTerm) -> RationalTerm:
    nodes = {}
    offs = []
    base = 1
    for ch in children:
        offs.append(base)
        for i, nd in enumerate(ch.nodes):
            nodes[base + i] = Node(nd.label, tuple(base + c for c in nd.children),
                                   nd.is_var)
        base += len(ch.nodes)
    nodes[0] = Node(label, tuple(offs[i] + ch.root
                                 for i, ch in enumerate(children)))
    return _freeze(nodes, 0)


def var(name: str) -> RationalTerm:
    return RationalTerm([Node(name, (), True)], 0)


def hole() -> RationalTerm:
    return sym(HOLE)


def f_omega(label: str) -> RationalTerm:
    """rec X. label(X) -- the unary symbol repeated forever."""
    return RationalTerm([Node(label, (0,))], 0)


class TermBuilder:
    """Mutable staging area for terms with cycles.

    node() adds a node whose children may be referenced before being
    defined (forward references and back references alike).
    """

    def __init__(self):
        self.nodes = {}
        self._next = 0

    def fresh(self) -> int:
        nid = self._next
        self._next += 1
        return nid

    def node(self, label, children=(), is_var=False, nid=None) -> int:
        if nid is None:
            nid = self.fresh()
        self.nodes[nid] = Node(label, tuple(children), is_var)
        return nid

    def graft(self, t: RationalTerm) -> int:
        """Copy an existing term into the builder, returning its root id."""
        base = self._next
        self._next += len(t.nodes)
        for i, nd in enumerate(t.nodes):
            self.nodes[base + i] = Node(nd.label,
                                        tuple(base + c for c in nd.children),
                                        nd.is_var)
        return base + t.root

    def build(self, root) -> RationalTerm:
        for nid, nd in self.nodes.items():
            for c in nd.children:
                if c not in self.nodes:
                    raise MalformedTerm(nid, f"dangling child {c}")
        return _freeze(self.nodes, root)


# -- signatures -------------------------------------------------------

@dataclass
class Signature:
    """Symbol arities, split into function symbols and rule symbols."""

    funcs: dict = field(default_factory=dict)
    rules: dict = field(default_factory=dict)

    def arity(self, label: str) -> int:
        if label in self.funcs:
            return self.funcs[label]
        if label in self.rules:
            return self.rules[label]
        if label == HOLE:
            return 0
        raise MalformedTerm(label, "symbol not in signature")

    def __contains__(self, label):
        return label in self.funcs or label in self.rules or label == HOLE

    def is_rule_symbol(self, label):
        return label in self.rules

    def with_rules(self, rules: dict) -> "Signature":
        clash = set(rules) & set(self.funcs)
        if clash:
            raise MalformedTerm(sorted(clash), "rule symbol clashes with function")
        return Signature(dict(self.funcs), dict(rules))


# -- navigation -------------------------------------------------------

def node_at(t: RationalTerm, p: Position) -> int:
    nid = t.root
    for k, i in enumerate(p):
        nd = t.nodes[nid]
        if not (1 <= i <= len(nd.children)):
            raise PositionOutOfDomain(f"{pos_str(tuple(p[:k + 1]))} not in term")
        nid = nd.children[i - 1]
    return nid


def has_position(t: RationalTerm, p: Position) -> bool:
    try:
        node_at(t, p)
        return True
    except PositionOutOfDomain:
        return False


def symbol_at(t: RationalTerm, p: Position) -> str:
    return t.nodes[node_at(t, p)].label


def subterm_at(t: RationalTerm, p: Position) -> RationalTerm:
    """The subterm rooted at p; the node store is shared."""
    return RationalTerm(t.nodes, node_at(t, p))


def arg(t: RationalTerm, i: int) -> RationalTerm:
    return subterm_at(t, (i,))


def args(t: RationalTerm):
    return [RationalTerm(t.nodes, c) for c in t.node().children]


def positions_up_to(t: RationalTerm, depth: int):
    """All (position, node id) pairs with |p| <= depth, length-then-lex."""
    out = [(EPSILON, t.root)]
    frontier = [(EPSILON, t.root)]
    for _ in range(depth):
        nxt = []
        for p, nid in frontier:
            for i, c in enumerate(t.nodes[nid].children, start=1):
                nxt.append((p + (i,), c))
        out.extend(nxt)
        frontier = nxt
        if not frontier:
            break
    return out


def is_finite(t: RationalTerm) -> bool:
    """Acyclic reachable graph <=> finite unfolding."""
    state = {}

    def dfs(n):
        state[n] = 1
        for c in t.nodes[n].children:
            if state.get(c) == 1:
                return False
            if c not in state and not dfs(c):
                return False
        state[n] = 2
        return True

    return dfs(t.root)


def is_closed(t: RationalTerm) -> bool:
    reach = _reachable({i: n for i, n in enumerate(t.nodes)}, t.root)
    return not any(t.nodes[n].is_var for n in reach)


def variables(t: RationalTerm):
    reach = _reachable({i: n for i, n in enumerate(t.nodes)}, t.root)
    return {t.nodes[n].label for n in reach if t.nodes[n].is_var}


def _path_counts(t: RationalTerm):
    """Number of root paths to each node; None encodes 'infinitely many'
    (node sits under a cycle) and any count > 1 is reported as 2."""
    order = []
    state = {}
    cyclic = set()

    def dfs(n):
        state[n] = 1
        for c in t.nodes[n].children:
            if state.get(c) == 1:
                cyclic.add(c)
            elif c not in state:
                dfs(c)
        state[n] = 2
        order.append(n)

    dfs(t.root)
    # nodes reachable from a cycle entry inherit infinity
    infinite = set()
    stack = list(cyclic)
    while stack:
        n = stack.pop()
        if n in infinite:
            continue
        infinite.add(n)
        stack.extend(t.nodes[n].children)
    counts = {n: 0 for n in order}
    counts[t.root] = 1
    for n in reversed(order):  # reverse postorder approximates top-down
        for c in t.nodes[n].children:
            counts[c] = min(2, counts.get(c, 0) + counts[n])
    return counts, infinite


def is_linear(t: RationalTerm) -> bool:
    """No variable occurs twice.  A variable reachable through a cycle
    occurs infinitely often and is flagged non-linear."""
    counts, infinite = _path_counts(t)
    per_var = {}
    for n, nd in enumerate(t.nodes):
        if n not in counts or not nd.is_var:
            continue
        if n in infinite:
            return False
        per_var[nd.label] = per_var.get(nd.label, 0) + counts[n]
        if per_var[nd.label] > 1:
            return False
    return True


def term_validate(t: RationalTerm, sig: Signature, sample_depth: int = 4) -> dict:
    """Arity/reachability check plus the basic classification flags."""
    reach = _reachable({i: n for i, n in enumerate(t.nodes)}, t.root)
    for n in reach:
        nd = t.nodes[n]
        if nd.is_var:
            if nd.children:
                raise MalformedTerm(n, "variable with children")
            continue
        if nd.label not in sig:
            raise MalformedTerm(n, f"unknown symbol {nd.label}")
        if len(nd.children) != sig.arity(nd.label):
            raise MalformedTerm(
                n, f"{nd.label} has {len(nd.children)} children, "
                   f"arity is {sig.arity(nd.label)}")
    return {
        "is_finite": is_finite(t),
        "is_closed": is_closed(t),
        "is_linear": is_linear(t),
        "positions_sample": [pos_str(p) for p, _ in positions_up_to(t, sample_depth)],
    }


def term_eq(t: RationalTerm, u: RationalTerm) -> bool:
    return t == u


# -- replacement ------------------------------------------------------

def replace_at(t: RationalTerm, u: RationalTerm, p: Position) -> RationalTerm:
    """Replace the subterm at p with u.

    Only the spine from the root to p is unshared, so a cycle through p
    is unrolled along the replaced path and nowhere else; the result is
    again a finite graph.
    """
    path_nodes = [t.root]
    nid = t.root
    for k, i in enumerate(p):
        nd = t.nodes[nid]
        if not (1 <= i <= len(nd.children)):
            raise PositionOutOfDomain(f"{pos_str(tuple(p[:k + 1]))} not in term")
        nid = nd.children[i - 1]
        path_nodes.append(nid)
    nodes = {i: nd for i, nd in enumerate(t.nodes)}
    base = len(t.nodes)
    for i, nd in enumerate(u.nodes):
        nodes[base + i] = Node(nd.label, tuple(base + c for c in nd.children),
                               nd.is_var)
    target = base + u.root
    # rebuild the spine bottom-up with fresh ids
    for k in range(len(p) - 1, -1, -1):
        old = nodes[path_nodes[k]]
        ch = list(old.children)
        ch[p[k] - 1] = target
        fresh = base + len(u.nodes) + k
        nodes[fresh] = Node(old.label, tuple(ch), old.is_var)
        target = fresh
    return _freeze(nodes, target)


# -- contexts ---------------------------------------------------------

def _hole_support(t: RationalTerm):
    """Nodes from which a hole is reachable.  Must be acyclic."""
    parents = {}
    reach = _reachable({i: n for i, n in enumerate(t.nodes)}, t.root)
    for n in reach:
        for c in t.nodes[n].children:
            parents.setdefault(c, set()).add(n)
    support = set()
    stack = [n for n in reach if t.nodes[n].label == HOLE and not t.nodes[n].is_var]
    while stack:
        n = stack.pop()
        if n in support:
            continue
        support.add(n)
        stack.extend(parents.get(n, ()))
    # acyclicity of the support region
    state = {}

    def dfs(n):
        state[n] = 1
        for c in t.nodes[n].children:
            if c in support:
                if state.get(c) == 1:
                    raise MalformedTerm(c, "hole inside a cycle")
                if c not in state:
                    dfs(c)
        state[n] = 2

    for n in support:
        if n not in state:
            dfs(n)
    return support


def hole_positions(C: RationalTerm):
    """Hole occurrences in length-then-lexicographic order (BPos order)."""
    if C._holes is not None:
        return C._holes
    out = _hole_positions(C)
    object.__setattr__(C, "_holes", out)
    return out


def _hole_positions(C: RationalTerm):
    support = _hole_support(C)
    if C.root not in support:
        return []
    out = []
    frontier = [(EPSILON, C.root)]
    while frontier:
        nxt = []
        for p, nid in frontier:
            if C.nodes[nid].label == HOLE and not C.nodes[nid].is_var:
                out.append(p)
                continue
            for i, c in enumerate(C.nodes[nid].children, start=1):
                if c in support:
                    nxt.append((p + (i,), c))
        frontier = nxt
    return out


def fill_context(C: RationalTerm, ts) -> RationalTerm:
    """Plug ts into C's holes, i-th hole position (BPos order) gets ts[i]."""
    holes = hole_positions(C)
    if len(holes) != len(ts):
        raise ArityMismatch(f"context has {len(holes)} holes, got {len(ts)} terms")
    by_pos = {h: t for h, t in zip(holes, ts)}
    support = _hole_support(C)
    b = TermBuilder()

    shared = {}

    def copy_shared(nid):
        if nid in shared:
            return shared[nid]
        fresh = b.fresh()
        shared[nid] = fresh
        nd = C.nodes[nid]
        b.node(nd.label, [copy_shared(c) for c in nd.children], nd.is_var, fresh)
        return fresh

    def build(nid, path):
        nd = C.nodes[nid]
        if nid in support and nd.label == HOLE and not nd.is_var:
            return b.graft(by_pos[path])
        if nid not in support:
            return copy_shared(nid)
        return b.node(nd.label,
                      [build(c, path + (i,))
                       for i, c in enumerate(nd.children, start=1)],
                      nd.is_var)

    return b.build(build(C.root, EPSILON))


def apply_context(C: RationalTerm, t: RationalTerm) -> RationalTerm:
    return fill_context(C, [t])


def context_omega(C: RationalTerm) -> RationalTerm:
    """C^w: the hole of a one-hole context is bent back to the root."""
    holes = hole_positions(C)
    if len(holes) != 1:
        raise ArityMismatch("C^w needs a one-hole context")
    if holes[0] == EPSILON:
        raise NonConvergent("hole at the root: C^w undefined")
    hole_ids = {n for n in range(len(C.nodes))
                if C.nodes[n].label == HOLE and not C.nodes[n].is_var}
    nodes = {}
    for i, nd in enumerate(C.nodes):
        nodes[i] = Node(nd.label,
                        tuple(C.root if c in hole_ids else c for c in nd.children),
                        nd.is_var)
    return _freeze(nodes, C.root)


def iterate_context(C: RationalTerm, n: int, t: RationalTerm) -> RationalTerm:
    for _ in range(n):
        t = apply_context(C, t)
    return t


# -- substitutions ----------------------------------------------------

def apply_subst(subst: dict, t: RationalTerm) -> RationalTerm:
    """Homomorphic extension of a finite-support variable mapping."""
    relevant = {v: u for v, u in subst.items()}
    b = TermBuilder()
    base = {}
    for i, nd in enumerate(t.nodes):
        base[i] = b.fresh()
    grafts = {}
    for i, nd in enumerate(t.nodes):
        if nd.is_var and nd.label in relevant:
            if nd.label not in grafts:
                grafts[nd.label] = b.graft(relevant[nd.label])
            b.node("!fwd", [grafts[nd.label]], False, base[i])
        else:
            b.node(nd.label, [base[c] for c in nd.children], nd.is_var, base[i])
    # short out the forwarding nodes
    fwd = {nid: nd.children[0] for nid, nd in b.nodes.items() if nd.label == "!fwd"}

    def resolve(n):
        while n in fwd:
            n = fwd[n]
        return n

    nodes = {nid: Node(nd.label, tuple(resolve(c) for c in nd.children), nd.is_var)
             for nid, nd in b.nodes.items() if nd.label != "!fwd"}
    return _freeze(nodes, resolve(base[t.root]))


# -- metric -----------------------------------------------------------

def first_divergence_depth(t: RationalTerm, u: RationalTerm):
    """Depth of the shallowest position where t and u differ, or None.

    Breadth-first search over the product graph; termination follows from
    both stores being finite.
    """
    if t == u:
        return None
    seen = set()
    frontier = [(t.root, u.root)]
    depth = 0
    while frontier:
        nxt = []
        for a, bn in frontier:
            na, nb = t.nodes[a], u.nodes[bn]
            if (na.label, na.is_var, len(na.children)) != \
               (nb.label, nb.is_var, len(nb.children)):
                return depth
            if (a, bn) in seen:
                continue
            seen.add((a, bn))
            nxt.extend(zip(na.children, nb.children))
        frontier = nxt
        depth += 1
    return None  # bisimilar


def distance(t: RationalTerm, u: RationalTerm) -> Fraction:
    k = first_divergence_depth(t, u)
    return Fraction(0) if k is None else Fraction(1, 2 ** k)


def truncate(t: RationalTerm, depth: int):
    """Finite tree of labels cut at `depth` (cut points become '?').
    Used by the truncation oracles in the tests."""
    def go(nid, d):
        nd = t.nodes[nid]
        if d == 0:
            return "?" if nd.children else (nd.label,)
        return (nd.label,) + tuple(go(c, d - 1) for c in nd.children)
    return go(t.root, depth)


# -- patterns ---------------------------------------------------------

def pattern_info(t: RationalTerm):
    """(PPos, Pdepth) of a finite term: the non-variable positions and
    their maximal depth.  Pdepth is None for a bare variable."""
    if not is_finite(t):
        raise MalformedTerm(t.root, "pattern of an infinite term")
    ppos = []
    stack = [(EPSILON, t.root)]
    while stack:
        p, nid = stack.pop()
        nd = t.nodes[nid]
        if not nd.is_var:
            ppos.append(p)
        for i, c in enumerate(nd.children, start=1):
            stack.append((p + (i,), c))
    ppos.sort(key=lambda p: (len(p), p))
    pdepth = max((len(p) for p in ppos), default=None)
    return ppos, pdepth


# -- term families ----------------------------------------------------

@dataclass(frozen=True)
class ConstTF:
    term: RationalTerm


@dataclass(frozen=True)
class SymTF:
    label: str
    subs: tuple


@dataclass(frozen=True)
class IterTF:
    """i |-> ctx^(a*i+b) [ sub_i ]; ctx is a one-hole context."""

    ctx: RationalTerm
    a: int
    b: int
    sub: object

    def __post_init__(self):
        hp = hole_positions(self.ctx)
        if len(hp) != 1:
            raise ArityMismatch("IterTF needs a one-hole context")
        if self.a > 0 and hp[0] == EPSILON:
            raise MalformedTerm(EPSILON, "growing iteration needs hole depth >= 1")


@dataclass(frozen=True)
class SampledTF:
    """Opaque evaluator; exact pointwise, but with no declared limit."""

    fn: Callable[[int], RationalTerm]


_tf_memo = {}


def eval_term_family(f, i: int) -> RationalTerm:
    if isinstance(f, ConstTF):
        return f.term
    key = (id(f), i)
    hit = _tf_memo.get(key)
    if hit is not None and hit[0] is f:
        return hit[1]
    if isinstance(f, SymTF):
        out = sym(f.label, *[eval_term_family(s, i) for s in f.subs])
    elif isinstance(f, IterTF):
        out = iterate_context(f.ctx, f.a * i + f.b, eval_term_family(f.sub, i))
    elif isinstance(f, SampledTF):
        out = f.fn(i)
    else:
        raise UnsupportedFamily(f"not a term family: {f!r}")
    _tf_memo[key] = (f, out)  # pins f, keeping the id stable
    return out


def limit_of_family(f) -> RationalTerm:
    """The metric limit of the family, when the template guarantees one.

    Convergence is decided on the template: a growing IterTF spine turns
    into the cyclic term ctx^w, constants are their own limit.  Opaque
    sampled families are rejected: samples cannot witness a limit.
    """
    if isinstance(f, ConstTF):
        return f.term
    if isinstance(f, SymTF):
        return sym(f.label, *[limit_of_family(s) for s in f.subs])
    if isinstance(f, IterTF):
        if f.a > 0:
            return context_omega(f.ctx)
        return iterate_context(f.ctx, f.b, limit_of_family(f.sub))
    if isinstance(f, SampledTF):
        raise NonConvergent("sampled family has no declared limit", witness=f)
    raise UnsupportedFamily(f"not a term family: {f!r}")


def family_is_constant(f) -> bool:
    if isinstance(f, ConstTF):
        return True
    if isinstance(f, SymTF):
        return all(family_is_constant(s) for s in f.subs)
    if isinstance(f, IterTF):
        return f.a == 0 and family_is_constant(f.sub)
    return False


def shift_family(f, k: int):
    """The family i |-> f(i + k)."""
    if k == 0 or family_is_constant(f):
        return f
    if isinstance(f, SymTF):
        return SymTF(f.label, tuple(shift_family(s, k) for s in f.subs))
    if isinstance(f, IterTF):
        return IterTF(f.ctx, f.a, f.b + f.a * k, shift_family(f.sub, k))
    if isinstance(f, SampledTF):
        return SampledTF(lambda i, g=f.fn, k=k: g(i + k))
    raise UnsupportedFamily(f"not a term family: {f!r}")


def fit_term_family(samples, evaluator):
    """Fit sampled terms into a template family.

    Recognizes constant families and linearly growing spines
    P[C^i[base]]; the fit is verified against every sample.  When no
    template fits, the exact evaluator is kept as an opaque family."""
    if all(s == samples[0] for s in samples):
        return ConstTF(samples[0])
    s0, s1 = samples[0], samples[1]
    q = EPSILON
    # descend along the unique diverging branch to the growth point
    while True:
        k = first_divergence_depth(subterm_at(s0, q), subterm_at(s1, q))
        if k is None or k == 0:
            break
        nd0, nd1 = s0.nodes[node_at(s0, q)], s1.nodes[node_at(s1, q)]
        if (nd0.label, len(nd0.children)) != (nd1.label, len(nd1.children)):
            break
        diverging = [i for i in range(1, len(nd0.children) + 1)
                     if not subterm_at(s0, q + (i,)) == subterm_at(s1, q + (i,))]
        if len(diverging) != 1:
            break
        q = q + (diverging[0],)
    base = subterm_at(s0, q)
    grown = subterm_at(s1, q)
    for cand, _ in positions_up_to(grown, len(grown.nodes) + 2):
        if cand == EPSILON:
            continue
        if has_position(grown, cand) and subterm_at(grown, cand) == base:
            C = replace_at(grown, hole(), cand)
            if len(hole_positions(C)) != 1:
                continue
            inner = IterTF(C, 1, 0, ConstTF(base))
            fam = inner if q == EPSILON else \
                IterTF(replace_at(s0, hole(), q), 0, 1, inner)
            if all(eval_term_family(fam, i) == s for i, s in enumerate(samples)):
                return fam
    return SampledTF(evaluator)


def canonicalize(t: RationalTerm) -> RationalTerm:
    """The minimal graph presenting the same unfolding."""
    key = t.canonical_key()
    return RationalTerm([Node(l, ch, v) for (l, v, ch) in key], 0)


# -- printing ---------------------------------------------------------

def to_text(t: RationalTerm) -> str:
    """Concrete syntax; cycles print as rec-binders, with the `f^w`
    sugar for a unary self-loop.  The graph is minimized first so equal
    unfoldings print identically."""
    t = canonicalize(t)
    # find back-edge targets
    binders = {}
    state = {}

    def scan(n):
        state[n] = 1
        for c in t.nodes[n].children:
            if state.get(c) == 1:
                binders.setdefault(c, f"X{len(binders) + 1}")
            elif c not in state:
                scan(c)
        state[n] = 2

    scan(t.root)

    def render(n, active):
        nd = t.nodes[n]
        if n in active:
            return binders[n]
        if nd.label == HOLE and not nd.is_var:
            return "_"
        if n in binders:
            if len(nd.children) == 1 and nd.children[0] == n and not nd.is_var:
                return f"{nd.label}^w"
            inner = render_node(n, active | {n})
            return f"rec {binders[n]}. {inner}"
        return render_node(n, active)

    def render_node(n, active):
        nd = t.nodes[n]
        if not nd.children:
            return nd.label
        inner = ", ".join(render(c, active) for c in nd.children)
        return f"{nd.label}({inner})"

    return render(t.root, frozenset())
