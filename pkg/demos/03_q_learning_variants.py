"""The four Q-learning variants on a two-armed bandit.

Arm 0 pays 1.0, arm 1 pays 0.0; with a replay buffer holding both arms,
every variant's greedy policy should lock onto arm 0 within a handful of
gradient steps. Double variants differ only in how the bootstrap value is
read off the target network, which this toy problem makes visible.
"""

import numpy as np

from featgen.agents import (
    AgentConfig,
    QNetwork,
    ReplayBuffer,
    Role,
    StateVector,
    Transition,
    Variant,
    is_dueling,
    store,
    train_step,
)

state = StateVector(np.ones(4), Role.C1)

for variant in Variant:
    config = AgentConfig(variant=variant, gamma=0.0, seed=1)
    net = QNetwork(4, 2, hidden=(64, 64), dueling=is_dueling(variant), seed=1)
    buffer = ReplayBuffer(config.buffer_capacity)
    for i in range(64):
        arm = i % 2
        store(buffer, Transition(state, arm, 1.0 if arm == 0 else 0.0, state, True))

    rng = np.random.default_rng(1)
    solved_at = None
    for step in range(2000):
        loss = train_step(net, buffer, config, rng)
        q = net.q_values(state.values)
        if solved_at is None and q[0] > q[1]:
            solved_at = step + 1
    q = net.q_values(state.values)
    print(
        f"{variant.value:12s} greedy arm = {int(np.argmax(q))} "
        f"(first correct at step {solved_at}, final Q = {np.round(q, 3)}, last loss {loss:.5f})"
    )
