"""Water network topology, component inventory and serviceability.

A network is an undirected graph whose edges are pipe segments.  Wells,
booster pumps and tanks sit on graph nodes; demand regions attach a
population to a node.  Service is modelled as reachability: a region has
water when some operational well can reach it through operational pipes,
never passing through a node that carries a damaged pump or tank.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping


class ComponentKind(enum.Enum):
    WELL = "Well"
    BOOSTER_PUMP = "BoosterPump"
    TANK = "Tank"
    PIPE = "PipeSegment"


class DamageState(enum.IntEnum):
    """Ordinal damage states.  Pipes only ever use NONE or COMPLETE."""

    NONE = 0
    MINOR = 1
    MODERATE = 2
    EXTENSIVE = 3
    COMPLETE = 4

    @classmethod
    def parse(cls, value: "str | int | DamageState") -> "DamageState":
        if isinstance(value, cls):
            return value
        if isinstance(value, int):
            return cls(value)
        return cls[str(value).upper()]

    @property
    def label(self) -> str:
        return self.name.capitalize()


class NetworkValidationError(ValueError):
    """Raised when a network document is malformed.  The message names the offending element."""


@dataclass(frozen=True)
class ServiceabilityFlags:
    minor_is_functional: bool = False


@dataclass(frozen=True)
class Component:
    id: str
    kind: ComponentKind
    site: tuple[float, float]
    attached_node: str | None = None
    pipe_length_km: float = 0.0
    pipe_K: float = 0.0

    @property
    def is_pipe(self) -> bool:
        return self.kind is ComponentKind.PIPE


@dataclass(frozen=True)
class DemandRegion:
    node: str
    population: int


def is_operational(component: Component, damage: DamageState,
                   flags: ServiceabilityFlags = ServiceabilityFlags()) -> bool:
    if damage == DamageState.NONE:
        return True
    return damage == DamageState.MINOR and flags.minor_is_functional


@dataclass(eq=False)
class WaterNetwork:
    """Validated network.  Build instances with :func:`build_network`."""

    name: str
    nodes: dict[str, tuple[float, float] | None]
    components: list[Component]
    edges: list[tuple[str, str, str]]  # (u, v, pipe id)
    demand_regions: list[DemandRegion]
    _by_id: dict[str, Component] = field(init=False, repr=False)
    _adjacency: dict[str, list[tuple[str, str]]] = field(init=False, repr=False)
    _blockers: dict[str, tuple[str, ...]] = field(init=False, repr=False)
    _wells: list[tuple[str, str]] = field(init=False, repr=False)
    _node_population: dict[str, int] = field(init=False, repr=False)
    _cache: dict[frozenset, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._by_id = {c.id: c for c in self.components}
        self._adjacency = {n: [] for n in self.nodes}
        for u, v, pid in self.edges:
            self._adjacency[u].append((v, pid))
            self._adjacency[v].append((u, pid))
        blockers: dict[str, list[str]] = {}
        self._wells = []
        for c in self.components:
            if c.kind is ComponentKind.WELL:
                self._wells.append((c.id, c.attached_node))
            elif c.kind in (ComponentKind.BOOSTER_PUMP, ComponentKind.TANK):
                blockers.setdefault(c.attached_node, []).append(c.id)
        self._blockers = {n: tuple(ids) for n, ids in blockers.items()}
        self._node_population = {}
        for region in self.demand_regions:
            self._node_population[region.node] = (
                self._node_population.get(region.node, 0) + region.population)
        self._cache = {}

    @property
    def total_population(self) -> int:
        return sum(r.population for r in self.demand_regions)

    def component(self, component_id: str) -> Component:
        return self._by_id[component_id]

    @property
    def component_ids(self) -> list[str]:
        return [c.id for c in self.components]

    def count(self, kind: ComponentKind) -> int:
        return sum(1 for c in self.components if c.kind is kind)

    def served_population(self, failed: frozenset[str] | set[str]) -> int:
        """Population reachable from an operational well when ``failed`` components are out.

        Results are memoised per failed set; the memo never changes an answer.
        """
        key = failed if isinstance(failed, frozenset) else frozenset(failed)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        blocked = {n for n, ids in self._blockers.items() if any(i in key for i in ids)}
        seen: set[str] = set()
        queue: deque[str] = deque()
        for well_id, node in self._wells:
            if well_id not in key and node not in blocked and node not in seen:
                seen.add(node)
                queue.append(node)
        while queue:
            u = queue.popleft()
            for v, pid in self._adjacency[u]:
                if v in seen or v in blocked or pid in key:
                    continue
                seen.add(v)
                queue.append(v)
        served = sum(p for n, p in self._node_population.items() if n in seen)
        self._cache[key] = served
        return served

    def to_document(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "nodes": [{"id": n, "site": list(s) if s is not None else None}
                      for n, s in self.nodes.items()],
            "components": [
                {"id": c.id, "kind": c.kind.value, "site": list(c.site),
                 "attached_node": c.attached_node, "pipe_length_km": c.pipe_length_km,
                 "pipe_K": c.pipe_K}
                for c in self.components],
            "edges": [{"nodes": [u, v], "pipe": pid} for u, v, pid in self.edges],
            "demand_regions": [{"node": r.node, "population": r.population}
                               for r in self.demand_regions],
            "total_population": self.total_population,
        }


def failed_components(network: WaterNetwork, damage_map: Mapping[str, DamageState],
                      flags: ServiceabilityFlags = ServiceabilityFlags()) -> frozenset[str]:
    missing = [cid for cid in network.component_ids if cid not in damage_map]
    if missing:
        raise KeyError(f"damage_map missing component id(s): {', '.join(missing)}")
    return frozenset(
        cid for cid in network.component_ids
        if not is_operational(network.component(cid), DamageState.parse(damage_map[cid]), flags))


def serviceable_population(network: WaterNetwork, damage_map: Mapping[str, DamageState],
                           flags: ServiceabilityFlags = ServiceabilityFlags()) -> int:
    """Number of people with water under ``damage_map`` (every component id must be present)."""
    return network.served_population(failed_components(network, damage_map, flags))


def _parse_kind(value: str, cid: str) -> ComponentKind:
    try:
        return ComponentKind(value)
    except ValueError:
        raise NetworkValidationError(f"component {cid!r}: unknown kind {value!r}") from None


def build_network(document: Mapping[str, Any]) -> WaterNetwork:
    """Validate a network description and return a :class:`WaterNetwork`.

    The document holds ``components``, ``edges`` and ``demand_regions``.  A
    ``nodes`` array is optional; when absent the node set is inferred from
    edge endpoints, attached nodes and region nodes.
    """
    raw_components = document.get("components") or []
    if not raw_components:
        raise NetworkValidationError("network has no components")

    components: list[Component] = []
    seen_ids: set[str] = set()
    for raw in raw_components:
        cid = str(raw["id"])
        if cid in seen_ids:
            raise NetworkValidationError(f"duplicate component id {cid!r}")
        seen_ids.add(cid)
        kind = _parse_kind(raw["kind"], cid)
        length = float(raw.get("pipe_length_km", 0.0) or 0.0)
        k = float(raw.get("pipe_K", 0.0) or 0.0)
        node = raw.get("attached_node")
        if kind is ComponentKind.PIPE:
            if length <= 0 or k <= 0:
                raise NetworkValidationError(
                    f"pipe {cid!r}: pipe_length_km and pipe_K must be positive")
        else:
            if length != 0 or k != 0:
                raise NetworkValidationError(
                    f"component {cid!r}: pipe_length_km/pipe_K only allowed on PipeSegment")
            if node is None:
                raise NetworkValidationError(f"component {cid!r}: missing attached_node")
        site = tuple(float(x) for x in raw.get("site", (0.0, 0.0)))
        components.append(Component(cid, kind, site, node, length, k))  # type: ignore[arg-type]

    raw_nodes = document.get("nodes")
    nodes: dict[str, tuple[float, float] | None] = {}
    if raw_nodes is not None:
        for raw in raw_nodes:
            nid = str(raw["id"])
            if nid in nodes:
                raise NetworkValidationError(f"duplicate node id {nid!r}")
            s = raw.get("site")
            nodes[nid] = tuple(float(x) for x in s) if s is not None else None  # type: ignore[assignment]

    by_id = {c.id: c for c in components}
    edges: list[tuple[str, str, str]] = []
    used_pipes: set[str] = set()
    for raw in document.get("edges") or []:
        u, v = (str(x) for x in raw["nodes"])
        pid = str(raw["pipe"])
        if pid not in by_id:
            raise NetworkValidationError(f"edge {u}-{v}: missing pipe {pid!r}")
        if not by_id[pid].is_pipe:
            raise NetworkValidationError(f"edge {u}-{v}: component {pid!r} is not a PipeSegment")
        if pid in used_pipes:
            raise NetworkValidationError(f"pipe {pid!r} realizes more than one edge")
        used_pipes.add(pid)
        for n in (u, v):
            if raw_nodes is None:
                nodes.setdefault(n, None)
            elif n not in nodes:
                raise NetworkValidationError(f"edge {u}-{v} ({pid}): missing node {n!r}")
        edges.append((u, v, pid))
    for c in components:
        if c.is_pipe and c.id not in used_pipes:
            raise NetworkValidationError(f"pipe {c.id!r} is not used by any edge")
        if not c.is_pipe:
            if raw_nodes is None:
                nodes.setdefault(c.attached_node, None)  # type: ignore[arg-type]
            elif c.attached_node not in nodes:
                raise NetworkValidationError(
                    f"component {c.id!r}: missing node {c.attached_node!r}")

    regions: list[DemandRegion] = []
    for raw in document.get("demand_regions") or []:
        node, pop = str(raw["node"]), int(raw["population"])
        if pop < 0:
            raise NetworkValidationError(f"region at node {node!r}: negative population {pop}")
        if raw_nodes is None:
            nodes.setdefault(node, None)
        elif node not in nodes:
            raise NetworkValidationError(f"region: missing node {node!r}")
        regions.append(DemandRegion(node, pop))

    net = WaterNetwork(str(document.get("name", "network")), nodes, components, edges, regions)
    declared = document.get("total_population")
    if declared is not None and int(declared) != net.total_population:
        raise NetworkValidationError(
            f"total_population {declared} != sum of region populations {net.total_population}")
    if net.count(ComponentKind.WELL) == 0:
        raise NetworkValidationError("network has no wells")
    if net.served_population(frozenset()) != net.total_population:
        unserved = [r.node for r in regions if not _reachable_undamaged(net, r.node)]
        raise NetworkValidationError(
            f"undamaged network is disconnected; unreachable region node(s): {', '.join(unserved)}")
    return net


def _reachable_undamaged(net: WaterNetwork, node: str) -> bool:
    solo = WaterNetwork(net.name, net.nodes, net.components, net.edges, [DemandRegion(node, 1)])
    return solo.served_population(frozenset()) == 1


def load_network(path: str | Path | None = None) -> WaterNetwork:
    """Load a network document from ``path`` (default: the shipped Gilroy reconstruction)."""
    if path is None:
        text = resources.files("wnrecovery.data").joinpath("gilroy_default.json").read_text()
    else:
        text = Path(path).read_text()
    return build_network(json.loads(text))
