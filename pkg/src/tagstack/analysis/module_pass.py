"""Interprocedural worklist fixpoint over the per-function UseInfo tables."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from ..ir.nodes import Call, Program
from .safety import site_ok
from .useinfo import Key, UseInfo, merge_use_info

DEFAULT_LIMIT = 32

Tables = dict[str, dict[Key, UseInfo]]


@dataclass
class ModuleStats:
    iterations: int = 0
    limit_hits: int = 0  # UseInfos marked unsafe because their function reached LIMIT
    visits: dict = field(default_factory=dict)
    limited_functions: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "iterations": self.iterations,
            "limit_hits": self.limit_hits,
            "visits": dict(sorted(self.visits.items())),
            "limited_functions": sorted(self.limited_functions),
        }


def callee_first_order(p: Program) -> list[str]:
    """Postorder of the call graph, roots and successors visited by name."""
    defined = {f.name for f in p.functions}
    graph = {
        f.name: sorted({ins.callee for b in f.blocks for ins in b.body if isinstance(ins, Call) and ins.callee in defined})
        for f in p.functions
    }
    order: list[str] = []
    seen: set[str] = set()
    for root in sorted(graph):
        if root in seen:
            continue
        seen.add(root)
        stack = [(root, iter(graph[root]))]
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                order.append(node)
            elif nxt not in seen:
                seen.add(nxt)
                stack.append((nxt, iter(graph[nxt])))
    return order


def set_all_to_unsafe(table: dict[Key, UseInfo]) -> int:
    return sum(u.mark_unsafe("analysis depth limit reached") for u in table.values())


def run_module_pass(p: Program, tables: Tables, limit: int = DEFAULT_LIMIT, guard_width: int = 1) -> ModuleStats:
    """Propagate call and pointer-store facts until no UseInfo changes.

    Each time a function leaves the worklist its visit counter is
    incremented if it is below ``limit``; a function whose counter is
    exhausted has all its UseInfos set unsafe instead of being processed.
    """
    if limit < 1:
        raise ValueError("LIMIT must be positive")
    index: dict[Key, UseInfo] = {k: u for t in tables.values() for k, u in t.items()}
    params = {f.name: [prm.name for prm in f.params] for f in p.functions}
    order = [f for f in callee_first_order(p) if f in tables]
    stats = ModuleStats()
    depth = {f: 0 for f in order}
    deps: dict[str, set[str]] = {f: set() for f in order}
    work = deque(order)
    queued = set(order)

    def push(fs) -> None:
        for g in sorted(fs):
            if g not in queued:
                queued.add(g)
                work.append(g)

    def process(f: str) -> bool:
        changed = False
        for key in sorted(tables[f]):
            u = tables[f][key]
            u.depth = depth[f]
            if u.unsafe:
                continue
            for callee, i, off in sorted(u.calls):
                deps[callee].add(f)
                names = params.get(callee, [])
                src = index.get((callee, "arg", names[i])) if i < len(names) else None
                if src is None:
                    changed |= u.mark_unsafe(f"unresolvable call to @{callee}")
                else:
                    changed |= merge_use_info(u, src, off)
                if u.unsafe:
                    break
            if u.unsafe:
                continue
            for site_key, off in sorted(u.stored_in):
                deps[site_key[0]].add(f)
                site = index.get(site_key)
                if site is None or not site_ok(site, guard_width):
                    changed |= u.mark_unsafe(f"stored in unsafe memory {site_key[0]}:{site_key[2]}")
                    break
                for lk in sorted(site.derefed_by):
                    deps[lk[0]].add(f)
                    load = index.get(lk)
                    changed |= u.mark_unsafe("unknown load site") if load is None else merge_use_info(u, load, off)
                    if u.unsafe:
                        break
                if u.unsafe:
                    break
        return changed

    while True:
        while work:
            f = work.popleft()
            queued.discard(f)
            stats.iterations += 1
            if depth[f] < limit:
                depth[f] += 1
            else:
                hit = set_all_to_unsafe(tables[f])
                if hit:
                    stats.limit_hits += hit
                    stats.limited_functions.append(f)
                    push(deps[f])
                continue
            if process(f):
                push({f} | deps[f])
        # safety net: a storage site may have degraded after its users were last visited
        stale = set()
        for key in sorted(index):
            u = index[key]
            if not u.unsafe and any(k not in index or not site_ok(index[k], guard_width) for k, _ in u.stored_in):
                u.mark_unsafe("stored in unsafe memory")
                stale.add(key[0])
        if not stale:
            break
        push(set(order))
    stats.visits = dict(depth)
    stats.limited_functions = sorted(set(stats.limited_functions))
    return stats
