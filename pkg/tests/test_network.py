import itertools
import json

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from wnrecovery.network import (ComponentKind, DamageState, NetworkValidationError,
                                ServiceabilityFlags, build_network, is_operational,
                                load_network, serviceable_population)

from conftest import toy_document


def brute_force_served(network, damage_map):
    """Sum of region populations with some simple well-to-region path avoiding damage."""
    broken = {cid for cid, ds in damage_map.items() if ds != DamageState.NONE}
    G = nx.Graph()
    G.add_nodes_from(network.nodes)
    pipe_of = {}
    for u, v, pid in network.edges:
        G.add_edge(u, v)
        pipe_of[frozenset((u, v))] = pid
    blocked = {c.attached_node for c in network.components
               if c.kind in (ComponentKind.BOOSTER_PUMP, ComponentKind.TANK) and c.id in broken}
    sources = {c.attached_node for c in network.components
               if c.kind is ComponentKind.WELL and c.id not in broken} - blocked
    served = 0
    for region in network.demand_regions:
        ok = False
        if region.node in blocked:
            pass
        elif region.node in sources:
            ok = True
        else:
            for src in sources:
                for path in nx.all_simple_paths(G, src, region.node):
                    if any(n in blocked for n in path):
                        continue
                    if any(pipe_of[frozenset(e)] in broken for e in zip(path, path[1:])):
                        continue
                    ok = True
                    break
                if ok:
                    break
        served += region.population if ok else 0
    return served


def all_none(network):
    return {cid: DamageState.NONE for cid in network.component_ids}


def test_default_inventory(gilroy):
    assert gilroy.count(ComponentKind.WELL) == 6
    assert gilroy.count(ComponentKind.BOOSTER_PUMP) == 2
    assert gilroy.count(ComponentKind.TANK) == 3
    assert len(gilroy.demand_regions) == 36
    assert gilroy.total_population == 48821


def test_every_edge_is_one_pipe(gilroy):
    pipes = [pid for _, _, pid in gilroy.edges]
    assert len(pipes) == len(set(pipes)) == gilroy.count(ComponentKind.PIPE)
    for c in gilroy.components:
        assert (c.pipe_length_km > 0) == c.is_pipe
        assert (c.pipe_K > 0) == c.is_pipe
        assert (c.attached_node is None) == c.is_pipe


def test_undamaged_serves_everyone(gilroy, toy):
    assert serviceable_population(gilroy, all_none(gilroy)) == 48821
    assert serviceable_population(toy, all_none(toy)) == toy.total_population


def test_all_wells_down_serves_nobody(gilroy):
    dm = all_none(gilroy)
    for c in gilroy.components:
        if c.kind is ComponentKind.WELL:
            dm[c.id] = DamageState.COMPLETE
    assert serviceable_population(gilroy, dm) == 0


def test_unique_cut_edge_removes_its_region(toy):
    dm = all_none(toy)
    dm["p11"] = DamageState.COMPLETE
    expected = brute_force_served(toy, dm)
    assert expected == toy.total_population - 25
    assert serviceable_population(toy, dm) == expected


def test_corner_region_cut_on_default(gilroy):
    # R00 hangs on two pipes; cutting both isolates it
    corner = [pid for u, v, pid in gilroy.edges if "R00" in (u, v)]
    assert len(corner) == 2
    dm = all_none(gilroy)
    for pid in corner:
        dm[pid] = DamageState.COMPLETE
    G = nx.Graph((u, v) for u, v, pid in gilroy.edges if pid not in corner)
    wells = [c.attached_node for c in gilroy.components if c.kind is ComponentKind.WELL]
    reach = set().union(*(nx.node_connected_component(G, w) for w in wells))
    expected = sum(r.population for r in gilroy.demand_regions if r.node in reach)
    pop_r00 = next(r.population for r in gilroy.demand_regions if r.node == "R00")
    assert expected == 48821 - pop_r00
    assert serviceable_population(gilroy, dm) == expected


def test_missing_component_in_damage_map(toy):
    dm = all_none(toy)
    del dm["p3"]
    with pytest.raises(KeyError, match="p3"):
        serviceable_population(toy, dm)


@pytest.mark.parametrize("kind", list(ComponentKind))
@pytest.mark.parametrize("damage", list(DamageState))
@pytest.mark.parametrize("minor_ok", [False, True])
def test_is_operational_table(kind, damage, minor_ok):
    comp = next(c for c in load_network().components if c.kind is kind)
    expected = damage == DamageState.NONE or (minor_ok and damage == DamageState.MINOR)
    assert is_operational(comp, damage, ServiceabilityFlags(minor_ok)) is expected


def test_minor_flag_changes_service(toy):
    dm = all_none(toy)
    dm["PS"] = DamageState.MINOR
    dm["W2"] = DamageState.COMPLETE
    assert serviceable_population(toy, dm) < toy.total_population
    assert serviceable_population(toy, dm, ServiceabilityFlags(True)) == toy.total_population


# ---- validation errors


def test_empty_components_rejected():
    with pytest.raises(NetworkValidationError, match="no components"):
        build_network({"components": [], "edges": [], "demand_regions": []})


def test_missing_pipe_rejected():
    doc = toy_document()
    doc["edges"][0]["pipe"] = "nope"
    with pytest.raises(NetworkValidationError, match="missing pipe 'nope'"):
        build_network(doc)


def test_duplicate_id_rejected():
    doc = toy_document()
    doc["components"].append(dict(doc["components"][0]))
    with pytest.raises(NetworkValidationError, match="duplicate component id 'W1'"):
        build_network(doc)


def test_missing_node_rejected():
    doc = toy_document()
    doc["edges"][0]["nodes"] = ["S1", "ZZ"]
    with pytest.raises(NetworkValidationError, match="missing node 'ZZ'"):
        build_network(doc)


def test_negative_population_rejected():
    doc = toy_document()
    doc["demand_regions"][0]["population"] = -1
    with pytest.raises(NetworkValidationError, match="negative population"):
        build_network(doc)


def test_disconnected_rejected():
    doc = toy_document()
    doc["nodes"].append({"id": "X", "site": [9, 9]})
    doc["demand_regions"].append({"node": "X", "population": 5})
    doc["total_population"] += 5
    with pytest.raises(NetworkValidationError, match="unreachable region node.*X"):
        build_network(doc)


def test_document_round_trip(gilroy):
    again = build_network(json.loads(json.dumps(gilroy.to_document())))
    assert again.to_document() == gilroy.to_document()


# ---- properties


def test_toy_matches_brute_force_exhaustively(toy):
    ids = toy.component_ids
    assert len(toy.nodes) <= 12
    chosen = ["W1", "W2", "PS", "TK", "p2", "p3", "p4", "p6", "p9", "p10"]
    for pattern in itertools.product([False, True], repeat=len(chosen)):
        dm = {cid: DamageState.NONE for cid in ids}
        for cid, hit in zip(chosen, pattern):
            if hit:
                dm[cid] = DamageState.COMPLETE
        assert serviceable_population(toy, dm) == brute_force_served(toy, dm)


damage_maps = st.dictionaries(
    st.sampled_from(load_network().component_ids),
    st.sampled_from(list(DamageState)), max_size=25)


@settings(max_examples=200, deadline=None)
@given(damage_maps, st.data())
def test_repair_never_reduces_service(gilroy, partial, data):
    dm = all_none(gilroy)
    for cid, ds in partial.items():
        dm[cid] = DamageState.COMPLETE if gilroy.component(cid).is_pipe and ds else ds
    before = serviceable_population(gilroy, dm)
    assert 0 <= before <= gilroy.total_population
    damaged = [cid for cid, ds in dm.items() if ds != DamageState.NONE]
    if not damaged:
        assert before == gilroy.total_population
        return
    cid = data.draw(st.sampled_from(damaged))
    dm[cid] = DamageState(int(dm[cid]) - 1) if not gilroy.component(cid).is_pipe else DamageState.NONE
    assert serviceable_population(gilroy, dm) >= before
