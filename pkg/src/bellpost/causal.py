"""Causal DAGs with latent confounders, d-separation with open-path witnesses,
and an exact conditional-independence oracle on binary parameterizations.

Bidirected edges are expanded into an explicit latent parent per edge. Node
names in the built-in Bell diagrams are ``Lambda``, ``Xk``, ``Ak``, ``Dk``
(k counted from 1) and ``Uk`` for the latent between ``Ak`` and ``Dk``.
"""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import StructuralError

LAMBDA = "Lambda"
MAX_ORACLE_NODES = 20
SOUNDNESS_TOL = 1e-10
CONNECTION_TOL = 0.01
SEARCH_RESTARTS = 200


def _latent_name(a: str, b: str) -> str:
    return f"U({a},{b})"


@dataclass(frozen=True)
class CausalDag:
    """Directed graph plus bidirected edges.

    A bidirected entry is ``(a, b)`` or ``(a, b, latent_name)``; it becomes
    a fresh latent node with edges to both ends.
    """

    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...] = ()
    bidirected: tuple[tuple[str, ...], ...] = ()
    _parents: dict = field(default=None, init=False, repr=False, compare=False)
    _children: dict = field(default=None, init=False, repr=False, compare=False)
    _order: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = tuple(self.nodes)
        if len(set(nodes)) != len(nodes):
            raise StructuralError("duplicate node names")
        edges = tuple(tuple(e) for e in self.edges)
        bidir = tuple(tuple(b) for b in self.bidirected)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "bidirected", bidir)
        known = set(nodes)
        all_nodes = list(nodes)
        all_edges = list(edges)
        for e in edges:
            if len(e) != 2 or e[0] not in known or e[1] not in known:
                raise StructuralError(f"bad edge {e}")
        for b in bidir:
            if len(b) not in (2, 3) or b[0] not in known or b[1] not in known:
                raise StructuralError(f"bad bidirected edge {b}")
            u = b[2] if len(b) == 3 else _latent_name(b[0], b[1])
            if u in all_nodes:
                raise StructuralError(f"latent name {u} already used")
            all_nodes.append(u)
            all_edges += [(u, b[0]), (u, b[1])]
        parents = {v: [] for v in all_nodes}
        children = {v: [] for v in all_nodes}
        for a, b in all_edges:
            if a == b:
                raise StructuralError(f"self loop at {a}")
            parents[b].append(a)
            children[a].append(b)
        # Kahn's algorithm doubles as the acyclicity check
        indeg = {v: len(parents[v]) for v in all_nodes}
        queue = deque(v for v in all_nodes if indeg[v] == 0)
        order = []
        while queue:
            v = queue.popleft()
            order.append(v)
            for c in children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if len(order) != len(all_nodes):
            raise StructuralError("graph has a directed cycle")
        object.__setattr__(self, "_parents", {k: tuple(v) for k, v in parents.items()})
        object.__setattr__(self, "_children", {k: tuple(v) for k, v in children.items()})
        object.__setattr__(self, "_order", tuple(order))

    # expanded view, latents included
    @property
    def all_nodes(self) -> tuple[str, ...]:
        return self._order

    def parents(self, v: str) -> tuple[str, ...]:
        return self._parents[v]

    def children(self, v: str) -> tuple[str, ...]:
        return self._children[v]

    def expanded_edges(self) -> list[tuple[str, str]]:
        return [(p, v) for v in self._order for p in self._parents[v]]

    def descendants(self, v: str) -> set[str]:
        seen, stack = set(), [v]
        while stack:
            for c in self._children[stack.pop()]:
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return seen

    def ancestors_of(self, vs: Iterable[str]) -> set[str]:
        seen, stack = set(vs), list(vs)
        while stack:
            for p in self._parents[stack.pop()]:
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return seen

    def check_nodes(self, vs: Iterable[str]) -> None:
        for v in vs:
            if v not in self._parents:
                raise KeyError(f"unknown node {v!r}")

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "edges": [list(e) for e in self.edges],
            "bidirected": [list(b) for b in self.bidirected],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CausalDag":
        return cls(tuple(d["nodes"]), tuple(map(tuple, d.get("edges", []))), tuple(map(tuple, d.get("bidirected", []))))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "CausalDag":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class DsepQuery:
    source: frozenset
    target: frozenset
    given: frozenset = frozenset()

    def __post_init__(self):
        s, t, z = frozenset(self.source), frozenset(self.target), frozenset(self.given)
        if not s or not t:
            raise ValueError("source and target must be non-empty")
        if s & t or s & z or t & z:
            raise ValueError("source, target and conditioning sets must be disjoint")
        object.__setattr__(self, "source", s)
        object.__setattr__(self, "target", t)
        object.__setattr__(self, "given", z)

    @classmethod
    def of(cls, source, target, given=()) -> "DsepQuery":
        wrap = lambda v: frozenset([v]) if isinstance(v, str) else frozenset(v)  # noqa: E731
        return cls(wrap(source), wrap(target), wrap(given))


# --- Bell diagrams -----------------------------------------------------------


BELL_KINDS = ("lhv", "hlnhv", "hlnhv_full")
AD_VARIANTS = ("bidirected", "a_to_d", "d_to_a")


def bell_diagram(
    num_parties: int, kind: str = "lhv", lone_party: int | None = None, variant: str = "bidirected"
) -> CausalDag:
    """Causal diagram of a Bell experiment with detection.

    ``lhv``: one hidden variable feeding every outcome and count.
    ``hlnhv``: as ``lhv`` plus a shared latent ``G`` for the parties other
    than ``lone_party`` (0-based), which may also see each other's settings.
    ``hlnhv_full``: a shared latent for every pair of parties.
    ``variant`` fixes how A_k and D_k are linked: a latent confounder U_k, or
    a directed edge either way.
    """
    if num_parties < 2:
        raise ValueError("need at least two parties")
    if kind not in BELL_KINDS:
        raise ValueError(f"kind must be one of {BELL_KINDS}")
    if variant not in AD_VARIANTS:
        raise ValueError(f"variant must be one of {AD_VARIANTS}")
    ks = range(1, num_parties + 1)
    nodes = [LAMBDA] + [f"{v}{k}" for k in ks for v in "XAD"]
    edges, bidir = [], []
    for k in ks:
        edges += [(LAMBDA, f"A{k}"), (LAMBDA, f"D{k}"), (f"X{k}", f"A{k}"), (f"X{k}", f"D{k}")]
        if variant == "bidirected":
            bidir.append((f"A{k}", f"D{k}", f"U{k}"))
        elif variant == "a_to_d":
            edges.append((f"A{k}", f"D{k}"))
        else:
            edges.append((f"D{k}", f"A{k}"))
    groups: list[tuple[int, ...]] = []
    if kind == "hlnhv":
        if lone_party is None or not 0 <= lone_party < num_parties:
            raise ValueError("hlnhv diagrams need a lone party index in range")
        if num_parties < 3:
            raise ValueError("a bipartition with a nonlocal group needs at least three parties")
        groups = [tuple(k for k in ks if k != lone_party + 1)]
    elif kind == "hlnhv_full":
        groups = list(itertools.combinations(ks, 2))
    for g in groups:
        name = "G" + "".join(str(k) for k in g)
        nodes.append(name)
        for k in g:
            edges += [(name, f"A{k}"), (name, f"D{k}")]
            for j in g:
                if j != k:
                    edges += [(f"X{j}", f"A{k}"), (f"X{j}", f"D{k}")]
    return CausalDag(tuple(nodes), tuple(edges), tuple(bidir))


# --- d-separation ------------------------------------------------------------


@dataclass(frozen=True)
class DsepResult:
    separated: bool
    witness: tuple[tuple[str, str], ...] | None = None  # (node, role) along an open path

    @property
    def path(self) -> list[str] | None:
        return None if self.witness is None else [v for v, _ in self.witness]

    def to_dict(self) -> dict:
        return {
            "separated": self.separated,
            "witness": None if self.witness is None else [{"node": v, "role": r} for v, r in self.witness],
        }


def reachable(g: CausalDag, sources: Iterable[str], given: frozenset) -> set[str]:
    """Nodes d-connected to ``sources`` given ``given`` (Bayes-ball style search)."""
    anc = g.ancestors_of(given)
    # state: (node, arrived from a child = "up", from a parent = "down")
    visited, out = set(), set()
    queue = deque((s, "up") for s in sources)
    while queue:
        v, d = queue.popleft()
        if (v, d) in visited:
            continue
        visited.add((v, d))
        if v not in given:
            out.add(v)
        if d == "up" and v not in given:
            queue.extend((p, "up") for p in g.parents(v))
            queue.extend((c, "down") for c in g.children(v))
        elif d == "down":
            if v not in given:
                queue.extend((c, "down") for c in g.children(v))
            if v in anc:
                queue.extend((p, "up") for p in g.parents(v))
    return out


def _roles(g: CausalDag, path: Sequence[str], given: frozenset) -> list[tuple[str, str]] | None:
    """Annotate interior nodes; None when the path is blocked."""
    roles = [(path[0], "endpoint")]
    for i in range(1, len(path) - 1):
        prev, v, nxt = path[i - 1], path[i], path[i + 1]
        collider = prev in g.parents(v) and nxt in g.parents(v)
        if collider:
            if v not in given and not (g.descendants(v) & given):
                return None
            roles.append((v, "collider"))
        else:
            if v in given:
                return None
            roles.append((v, "noncollider"))
    roles.append((path[-1], "endpoint"))
    return roles


def is_open_path(g: CausalDag, path: Sequence[str], given: Iterable[str]) -> bool:
    """Checks a path against the three blocking rules; the path must follow existing edges."""
    given = frozenset(given)
    g.check_nodes(path)
    if len(set(path)) != len(path) or len(path) < 2:
        return False
    for a, b in zip(path, path[1:]):
        if a not in g.parents(b) and b not in g.parents(a):
            return False
    if path[0] in given or path[-1] in given:
        return False
    return _roles(g, path, given) is not None


def _neighbours(g: CausalDag, v: str) -> tuple[str, ...]:
    return g.parents(v) + g.children(v)


def open_path(g: CausalDag, q: DsepQuery) -> list[tuple[str, str]] | None:
    """Shortest open simple path from source to target, by breadth-first search over paths."""
    queue = deque([s] for s in sorted(q.source))
    while queue:
        path = queue.popleft()
        v = path[-1]
        for w in sorted(_neighbours(g, v)):
            if w in path or w in q.source:
                continue
            cand = path + [w]
            if len(cand) >= 3 and _roles(g, cand[-3:], q.given) is None:
                continue
            if w in q.target:
                return _roles(g, cand, q.given)
            queue.append(cand)
    return None


def d_separated(g: CausalDag, q: DsepQuery) -> DsepResult:
    g.check_nodes(q.source | q.target | q.given)
    reach = reachable(g, q.source, q.given)
    if not (reach & q.target):
        return DsepResult(True)
    witness = open_path(g, q)
    if witness is None:  # pragma: no cover - reachability and path search disagree
        raise AssertionError("d-connected but no open path found")
    return DsepResult(False, tuple(witness))


# --- exact conditional-independence oracle -----------------------------------


def _random_cpts(g: CausalDag, rng: np.random.Generator, sharpness: float = 1.0) -> dict[str, np.ndarray]:
    """P(v = 1 | parents) for every parent assignment, as an array over parent values."""
    cpts = {}
    for v in g.all_nodes:
        k = len(g.parents(v))
        u = rng.uniform(size=(2,) * k)
        cpts[v] = u if sharpness == 1.0 else np.clip(np.round(u) * sharpness + u * (1 - sharpness), 0.0, 1.0)
    return cpts


def joint_distribution(g: CausalDag, cpts: dict[str, np.ndarray]) -> np.ndarray:
    """Exact joint over all (expanded) nodes in ``g.all_nodes`` order, one binary axis each."""
    nodes = g.all_nodes
    n = len(nodes)
    if n > MAX_ORACLE_NODES:
        raise ValueError(f"{n} nodes after latent expansion exceeds {MAX_ORACLE_NODES}")
    pos = {v: i for i, v in enumerate(nodes)}
    joint = np.ones((2,) * n)
    for v in nodes:
        ps = [pos[p] for p in g.parents(v)]
        p1 = cpts[v]
        # factor over (parents..., v), broadcast onto the full grid
        factor = np.stack([1.0 - p1, p1], axis=-1)
        axes = ps + [pos[v]]
        order = np.argsort(axes)
        factor = np.transpose(factor, order)
        shape = [1] * n
        for a in axes:
            shape[a] = 2
        joint = joint * factor.reshape(shape)
    return joint


def ci_deviation(g: CausalDag, joint: np.ndarray, q: DsepQuery) -> float:
    """max over z with p(z) > 0 of TV(p(s, t | z), p(s | z) p(t | z))."""
    nodes = g.all_nodes
    pos = {v: i for i, v in enumerate(nodes)}
    s, t, z = sorted(q.source), sorted(q.target), sorted(q.given)
    keep = [pos[v] for v in s + t + z]
    drop = tuple(i for i in range(len(nodes)) if i not in keep)
    m = joint.sum(axis=drop)
    # reorder to (s, t, z)
    current = sorted(keep)
    m = np.transpose(m, [current.index(i) for i in keep])
    ns, nt, nz = len(s), len(t), len(z)
    m = m.reshape(2**ns, 2**nt, 2**nz)
    pz = m.sum(axis=(0, 1))
    worst = 0.0
    for iz in range(2**nz):
        if pz[iz] <= 1e-300:
            continue
        cond = m[:, :, iz] / pz[iz]
        prod = np.outer(cond.sum(axis=1), cond.sum(axis=0))
        worst = max(worst, 0.5 * float(np.abs(cond - prod).sum()))
    return worst


def ci_oracle(g: CausalDag, seed: int, q: DsepQuery, sharpness: float = 1.0) -> float:
    """CI deviation for one seeded random binary parameterization."""
    g.check_nodes(q.source | q.target | q.given)
    rng = np.random.default_rng(seed)
    return ci_deviation(g, joint_distribution(g, _random_cpts(g, rng, sharpness)), q)


def search_dependence(g: CausalDag, q: DsepQuery, seed: int = 0, restarts: int = SEARCH_RESTARTS) -> tuple[float, int]:
    """Largest CI deviation over seeded restarts; returns (deviation, seed of best)."""
    best, arg = -1.0, seed
    for r in range(restarts):
        s = seed + r
        dev = ci_oracle(g, s, q, sharpness=0.9 if r % 2 else 1.0)
        if dev > best:
            best, arg = dev, s
    return best, arg


# --- claim battery -----------------------------------------------------------


@dataclass
class Claim:
    name: str
    passed: bool
    detail: dict

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass
class ClaimReport:
    claims: list[Claim]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.claims)

    def by_prefix(self, prefix: str) -> list[Claim]:
        return [c for c in self.claims if c.name.startswith(prefix)]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "claims": [c.to_dict() for c in self.claims]}


def _party_nodes(k: int) -> set[str]:
    return {f"A{k}", f"X{k}"}


def verify_section2_claims(conservation: bool = True, seed: int = 0, trials: int = 5) -> ClaimReport:
    """Battery of graphical and functional claims about coincidence postselection.

    (a) conditioned on Lambda and all counts, each factorizing block of
        parties is d-separated from the rest;
    (b) X_1 and Lambda are d-connected given the counts, with an open
        witness path and a numeric dependence above 0.01;
    (c) with particle conservation and no-signaling the posterior of
        Lambda given a coincidence does not depend on the settings.

    ``conservation=False`` swaps (c) to a model with setting-dependent losses
    and no conservation, which must fail.
    """
    from . import hvmodels
    from .scenario import BellScenario

    claims: list[Claim] = []

    # (a) factorization
    for variant in AD_VARIANTS:
        g = bell_diagram(2, "lhv", variant=variant)
        q = DsepQuery.of(_party_nodes(1), _party_nodes(2), {LAMBDA, "D1", "D2"})
        res = d_separated(g, q)
        claims.append(Claim(f"a: bipartite LHV factorization [{variant}]", res.separated, res.to_dict()))
    for variant in AD_VARIANTS:
        g = bell_diagram(3, "lhv", variant=variant)
        for k in range(1, 4):
            rest = set().union(*(_party_nodes(j) for j in range(1, 4) if j != k))
            q = DsepQuery.of(_party_nodes(k), rest, {LAMBDA, "D1", "D2", "D3"})
            res = d_separated(g, q)
            claims.append(Claim(f"a: tripartite LHV party {k} factorizes [{variant}]", res.separated, res.to_dict()))
        for lone in range(3):
            g = bell_diagram(3, "hlnhv", lone_party=lone, variant=variant)
            k = lone + 1
            rest = set().union(*(_party_nodes(j) for j in range(1, 4) if j != k))
            q = DsepQuery.of(_party_nodes(k), rest, {LAMBDA, "D1", "D2", "D3"})
            res = d_separated(g, q)
            claims.append(Claim(f"a: hybrid bipartition {k}|rest factorizes [{variant}]", res.separated, res.to_dict()))

    # (b) selection bias opens X_1 -- Lambda
    for variant in AD_VARIANTS:
        g = bell_diagram(2, "lhv", variant=variant)
        q = DsepQuery.of("X1", LAMBDA, {"D1", "D2"})
        res = d_separated(g, q)
        ok = (not res.separated) and is_open_path(g, res.path, q.given)
        detail = res.to_dict()
        if variant == "bidirected":
            dev, best_seed = search_dependence(g, q, seed)
            detail.update({"max_ci_deviation": dev, "search_seed": best_seed})
            ok = ok and dev > CONNECTION_TOL
        claims.append(Claim(f"b: X1 and Lambda connected given D1, D2 [{variant}]", ok, detail))
        q0 = DsepQuery.of("X1", LAMBDA, ())
        res0 = d_separated(g, q0)
        claims.append(Claim(f"b: X1 and Lambda separated unconditionally [{variant}]", res0.separated, res0.to_dict()))
    g = bell_diagram(3, "hlnhv", lone_party=2)
    q = DsepQuery.of("X1", LAMBDA, {"D1", "D2", "D3", "X2", "X3"})
    res = d_separated(g, q)
    claims.append(
        Claim(
            "b: X1 and Lambda connected given counts and other settings [hybrid]",
            (not res.separated) and is_open_path(g, res.path, q.given),
            res.to_dict(),
        )
    )

    # (c) functional restoration
    if conservation:
        worst, ns_worst = 0.0, 0.0
        for n in (2, 3):
            scen = BellScenario.dichotomic(n)
            for s in range(trials):
                rep = hvmodels.conservation_posterior_check(hvmodels.conserving_model(scen, seed=seed + s), n)
                worst = max(worst, rep.deviation)
                ns_worst = max(ns_worst, rep.no_signaling_violation)
        ys = hvmodels.conservation_posterior_check(hvmodels.ys_allocation_model(3), 3)
        claims.append(
            Claim(
                "c: conservation and no-signaling make the coincidence posterior setting independent",
                worst < 1e-8 and ns_worst < 1e-12,
                {"max_deviation": worst, "max_no_signaling_violation": ns_worst, "trials": 2 * trials},
            )
        )
        claims.append(
            Claim("c: ideal ring allocation gives zero deviation", ys.deviation == 0.0, ys.to_dict())
        )
    else:
        dev, _ = hvmodels.posterior_deviation(hvmodels.lossy_local_model(seed))
        claims.append(
            Claim(
                "c: conservation and no-signaling make the coincidence posterior setting independent",
                dev < 1e-8,
                {"max_deviation": dev, "conservation": False},
            )
        )
    return ClaimReport(claims)
