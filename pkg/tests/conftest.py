import hypothesis.strategies as st

from polyrdl.model import (
    CounterAdd,
    LamportStamp,
    MapCounterAdd,
    MapPut,
    MapRemoveKey,
    MapSetAdd,
    MapSetRemove,
    ObjectType,
    Reset,
    SetAdd,
    SetRemove,
    Update,
    UpdateId,
)
from polyrdl.replica import Replica

replica_ids = st.sampled_from(["A", "B", "C", "node-1", "β"])
object_ids = st.sampled_from(["c0", "s0", "m0", "obj"])
map_keys = st.sampled_from(["k1", "k2", "ключ"])
elements = st.binary(max_size=12)
deltas = st.integers(min_value=-(2**40), max_value=2**40)

scalars = st.one_of(
    st.booleans(),
    st.integers(min_value=-(2**63), max_value=2**63 - 1),
    st.floats(allow_nan=False, allow_infinity=False),
    st.text(max_size=12),
    st.binary(max_size=12),
)

update_ids = st.builds(UpdateId, replica_ids, st.integers(1, 2**32))
observed_lists = st.lists(update_ids, max_size=3, unique=True).map(tuple)

counter_ops = st.builds(CounterAdd, deltas)
set_ops = st.one_of(
    st.builds(SetAdd, elements),
    st.builds(SetRemove, elements, observed_lists),
)
map_ops = st.one_of(
    st.builds(MapPut, map_keys, scalars),
    st.builds(MapRemoveKey, map_keys),
    st.builds(MapCounterAdd, map_keys, deltas),
    st.builds(MapSetAdd, map_keys, elements),
    st.builds(MapSetRemove, map_keys, elements, observed_lists),
)


@st.composite
def updates(draw, include_reset: bool = False):
    """Arbitrary well-formed updates (not necessarily causally honest)."""
    rid = draw(replica_ids)
    seq = draw(st.integers(1, 2**32))
    lamport = draw(st.integers(1, 2**32))
    epoch = draw(st.integers(0, 3))
    kinds = ["counter", "set", "map"] + (["reset"] if include_reset else [])
    kind = draw(st.sampled_from(kinds))
    if kind == "reset":
        new_epoch = max(1, epoch)
        return Update(
            id=UpdateId(rid, seq),
            stamp=LamportStamp(lamport, rid),
            epoch=new_epoch,
            object_id="",
            object_type=ObjectType.STORE,
            op=Reset(new_epoch, draw(st.binary(max_size=16))),
        )
    if kind == "counter":
        object_type, op = ObjectType.COUNTER, draw(counter_ops)
    elif kind == "set":
        object_type, op = ObjectType.SET, draw(set_ops)
    else:
        object_type, op = ObjectType.MAP, draw(map_ops)
    return Update(
        id=UpdateId(rid, seq),
        stamp=LamportStamp(lamport, rid),
        epoch=epoch,
        object_id=draw(object_ids),
        object_type=object_type,
        op=op,
    )


# Honest concurrent pools: scripts executed on a two-origin fleet, so
# observed tags and clocks reflect a causally possible history.

script_steps = st.lists(
    st.tuples(st.integers(0, 1), st.integers(0, 9)),
    min_size=1,
    max_size=10,
)


def build_honest_pool(steps):
    """-> list of Updates originated by running the step script."""
    replicas = (Replica("A"), Replica("B"))
    per_origin = ([], [])
    originated = []
    for origin, code in steps:
        replica = replicas[origin]
        if code == 9:  # sync: pull everything the other origin made
            for u in per_origin[1 - origin]:
                replica.apply_update(u)
            continue
        if code == 0:
            u = replica.local_update("c0", ObjectType.COUNTER, CounterAdd(origin + 1))
        elif code == 1:
            u = replica.local_update("c0", ObjectType.COUNTER, CounterAdd(-2))
        elif code == 2:
            u = replica.local_update("s0", ObjectType.SET, SetAdd(b"x"))
        elif code == 3:
            u = replica.local_update("s0", ObjectType.SET, SetAdd(b"y"))
        elif code == 4:
            state = replica.store.get("s0", ObjectType.SET)
            observed = tuple(state.live.get(b"x", {})) if state else ()
            u = replica.local_update("s0", ObjectType.SET, SetRemove(b"x", observed))
        elif code == 5:
            u = replica.local_update("m0", ObjectType.MAP, MapPut("k1", origin))
        elif code == 6:
            u = replica.local_update("m0", ObjectType.MAP, MapRemoveKey("k1"))
        elif code == 7:
            u = replica.local_update("m0", ObjectType.MAP, MapCounterAdd("k1", 3))
        else:
            u = replica.local_update("m0", ObjectType.MAP, MapSetAdd("k1", b"z"))
        per_origin[origin].append(u)
        originated.append(u)
    return originated
