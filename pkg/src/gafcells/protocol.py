"""GAF node state machine: discovery messages, ranking, election and timers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Iterable, Sequence


class NodeState(IntEnum):
    SLEEPING = 0
    DISCOVERY = 1
    ACTIVE = 2


@dataclass(frozen=True)
class DiscoveryMessage:
    node_id: int
    cell_id: int
    active_time: float
    state: NodeState
    # HGAF-family: sender sits in its cell's current active subcell
    eligible: bool = True

    def __post_init__(self):
        if self.active_time < 0:
            raise ValueError("estimated active time cannot be negative")


@dataclass(frozen=True)
class ProtocolParams:
    t_discovery: float = 1.0
    t_active: float = 60.0
    t_sleep: float = 30.0
    draw_sleeping: float = 0.01
    draw_discovery: float = 1.0
    draw_active: float = 1.0
    battery: float = 1000.0

    def __post_init__(self):
        for name in ("t_discovery", "t_active", "t_sleep", "battery"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.draw_sleeping < 0 or self.draw_discovery < 0:
            raise ValueError("power draws cannot be negative")
        if self.draw_sleeping > self.draw_discovery:
            raise ValueError("sleeping draw must not exceed discovery draw")
        if not self.draw_active > 0:
            raise ValueError("active draw must be positive")

    def draw(self, state: NodeState) -> float:
        return (self.draw_sleeping, self.draw_discovery, self.draw_active)[state]

    def timeout(self, state: NodeState) -> float:
        return (self.t_sleep, self.t_discovery, self.t_active)[state]


@dataclass
class NodeRuntime:
    id: int
    position: tuple[float, ...]
    battery: float
    state: NodeState = NodeState.DISCOVERY
    timer: float = 0.0
    cell: int = -1
    eligible: bool = True
    # seconds spent in each state, indexed by NodeState
    state_time: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    death_time: float | None = None

    @property
    def alive(self) -> bool:
        return self.battery > 0.0

    def message(self, params: ProtocolParams) -> DiscoveryMessage:
        return DiscoveryMessage(
            self.id, self.cell, self.battery / params.draw_active, self.state, self.eligible
        )


_STATE_PREF = {NodeState.ACTIVE: 1, NodeState.DISCOVERY: 0, NodeState.SLEEPING: 0}


def message_rank(msg: DiscoveryMessage) -> tuple:
    """Higher is better: eligibility, incumbency, estimated lifetime, then lower id."""
    return (msg.eligible, _STATE_PREF[msg.state], msg.active_time, -msg.node_id)


def rank(node: NodeRuntime, params: ProtocolParams) -> tuple:
    if not node.alive:
        raise ValueError(f"node {node.id} is dead and cannot be ranked")
    return message_rank(node.message(params))


def elect(messages: Sequence[DiscoveryMessage], params: ProtocolParams | None = None) -> int:
    if not messages:
        raise ValueError("cannot elect from an empty message set")
    cells = {m.cell_id for m in messages}
    if len(cells) > 1:
        raise ValueError(f"messages span several cells: {sorted(cells)}")
    return max(messages, key=message_rank).node_id


def step(
    node: NodeRuntime,
    elapsed: float,
    inbox: Iterable[DiscoveryMessage],
    params: ProtocolParams,
    now: float = 0.0,
) -> tuple[NodeRuntime, list[DiscoveryMessage]]:
    """Advance one node by ``elapsed``; ``now`` is the time at the start of the step.

    Energy is drawn at the rate of the state held during the step. The inbox
    holds messages sent during the previous step.
    """
    if not node.alive:
        raise ValueError(f"node {node.id} is dead")
    node = replace(node, state_time=list(node.state_time))
    own = message_rank(node.message(params))
    state = node.state

    cost = params.draw(state) * elapsed
    if cost >= node.battery:
        spent = node.battery / params.draw(state)
        node.state_time[state] += spent
        node.battery = 0.0
        node.death_time = now + spent
        return node, []
    node.battery -= cost
    node.state_time[state] += elapsed
    node.timer += elapsed

    if state is NodeState.SLEEPING:
        better = False
    else:
        peers = [m for m in inbox if m.cell_id == node.cell and m.node_id != node.id]
        if state is NodeState.ACTIVE:
            peers = [m for m in peers if m.state is NodeState.ACTIVE]
        better = any(message_rank(m) > own for m in peers)

    expired = node.timer >= params.timeout(state) * (1 - 1e-9)
    new = state
    if state is NodeState.DISCOVERY:
        if better:
            new = NodeState.SLEEPING
        elif expired:
            new = NodeState.ACTIVE
    elif state is NodeState.ACTIVE:
        if better:
            new = NodeState.SLEEPING
        elif expired:
            new = NodeState.DISCOVERY
    elif expired:
        new = NodeState.DISCOVERY
    if new is not state:
        node.state = new
        node.timer = 0.0

    if node.state is NodeState.SLEEPING:
        return node, []
    return node, [node.message(params)]


def energy_integral(nodes: Iterable[NodeRuntime], params: ProtocolParams) -> float:
    """Sum over nodes of the state draws integrated over time."""
    return math.fsum(
        params.draw(s) * n.state_time[s] for n in nodes for s in NodeState
    )
