import numpy as np
import pytest
from scipy.stats import chisquare

from featgen.agents import (
    Agent,
    AgentConfig,
    QNetwork,
    ReplayBuffer,
    Role,
    StateVector,
    Transition,
    Variant,
    encode_state,
    load_checkpoint,
    operator_onehot,
    save_checkpoint,
    select_action,
    store,
    td_target,
    train_step,
)
from featgen.dataset import DataTable, TaskKind
from featgen.errors import InsufficientSamples, MissingContext, NoValidAction
from featgen.transform import N_OPERATORS


def zeros_table(m=3, n=8):
    return DataTable(
        tuple(f"f{i}" for i in range(m)), np.zeros((n, m)), np.arange(float(n)), TaskKind.REGRESSION
    )


def toy_state(dim=4, value=1.0):
    return StateVector(np.full(dim, value), Role.C1)


class TestEncodeState:
    def test_all_zero_table_gives_zero_descriptor(self):
        s = encode_state(zeros_table(), Role.C1)
        assert s.values.shape == (49,)
        np.testing.assert_array_equal(s.values, np.zeros(49))

    def test_op_state_is_98_wide(self):
        rng = np.random.default_rng(0)
        t = DataTable(("a", "b"), rng.standard_normal((12, 2)), rng.standard_normal(12), TaskKind.REGRESSION)
        s = encode_state(t, Role.OP, selected_cluster=(0,))
        assert s.values.shape == (98,)

    def test_c2_onehot_slot(self):
        t = zeros_table()
        s = encode_state(t, Role.C2, selected_cluster=(0, 1), op_onehot=operator_onehot(3))
        assert s.values.shape == (98 + N_OPERATORS,)
        hot = np.flatnonzero(s.values[98:])
        assert list(hot) == [3]
        assert s.values[98 + 3] == 1.0

    def test_missing_context(self):
        t = zeros_table()
        with pytest.raises(MissingContext):
            encode_state(t, Role.OP)
        with pytest.raises(MissingContext):
            encode_state(t, Role.C2, selected_cluster=(0,))

    def test_empty_cluster_encodes_zeros(self):
        t = zeros_table()
        s = encode_state(t, Role.OP, selected_cluster=())
        np.testing.assert_array_equal(s.values[49:], np.zeros(49))

    def test_extreme_magnitude_columns_stay_finite(self):
        # chained products can reach 1e200 scale while still being finite;
        # the descriptor must not overflow into inf/nan states
        X = np.column_stack([np.linspace(1e200, 2e200, 12), np.linspace(-1, 1, 12)])
        t = DataTable(("huge", "small"), X, np.arange(12.0), TaskKind.REGRESSION)
        s = encode_state(t, Role.C1)
        assert np.all(np.isfinite(s.values))


class TestSelectAction:
    def test_pure_exploration_is_uniform(self):
        net = QNetwork(4, 5, seed=0)
        rng = np.random.default_rng(42)
        draws = [
            select_action(net, toy_state(), np.ones(5, bool), 1.0, rng) for _ in range(10_000)
        ]
        _, p = chisquare(np.bincount(draws, minlength=5))
        assert p > 0.01

    def test_greedy_tie_break_lowest_index(self):
        net = QNetwork(4, 3, hidden=(), seed=0)
        net.flat_params = np.concatenate([np.zeros(12), [0.1, 0.9, 0.9]])
        rng = np.random.default_rng(0)
        action = select_action(net, toy_state(), np.ones(3, bool), 0.0, rng)
        assert action == 1

    def test_mask_forces_action(self):
        net = QNetwork(4, 3, hidden=(), seed=0)
        net.flat_params = np.concatenate([np.zeros(12), [9.0, 0.0, 9.0]])
        rng = np.random.default_rng(0)
        mask = np.array([False, True, False])
        for eps in (0.0, 1.0):
            assert select_action(net, toy_state(), mask, eps, rng) == 1

    def test_no_valid_action(self):
        net = QNetwork(4, 3, seed=0)
        with pytest.raises(NoValidAction):
            select_action(net, toy_state(), np.zeros(3, bool), 0.5, np.random.default_rng(0))

    def test_constant_shift_invariance(self):
        net = QNetwork(4, 4, hidden=(8,), seed=7)
        rng = np.random.default_rng(1)
        state = toy_state()
        before = select_action(net, state, np.ones(4, bool), 0.0, rng)
        net.params[-1] += 123.45  # output bias shift
        after = select_action(net, state, np.ones(4, bool), 0.0, rng)
        assert before == after


def _two_action_net(online_q, target_q):
    """Linear 1-input net with hand-set weights producing the given Q rows at x=1."""
    net = QNetwork(1, 2, hidden=(), seed=0)
    net.flat_params = np.array([online_q[0], online_q[1], 0.0, 0.0])
    net.sync_target()
    net.target_params[0][...] = np.array([[target_q[0], target_q[1]]])
    return net


class TestTdTarget:
    def state(self, x=1.0):
        return StateVector(np.array([x]), Role.C1)

    def test_gamma_zero_collapses(self):
        net = _two_action_net([1.0, 0.0], [0.3, 0.9])
        tr = Transition(self.state(), 0, 0.056, self.state(), False)
        for variant in Variant:
            assert td_target(variant, tr, net, gamma=0.0) == 0.056

    def test_terminal_returns_reward(self):
        net = _two_action_net([1.0, 0.0], [0.3, 0.9])
        tr = Transition(self.state(), 1, -0.25, self.state(), True)
        for variant in Variant:
            assert td_target(variant, tr, net, gamma=0.9) == -0.25

    def test_double_vs_plain_divergence(self):
        # online ranks a0 first; target values a1 higher
        net = _two_action_net([1.0, 0.0], [0.2, 0.9])
        tr = Transition(self.state(), 0, 0.0, self.state(), False)
        plain = td_target(Variant.DQN, tr, net, gamma=1.0)
        double = td_target(Variant.DDQN, tr, net, gamma=1.0)
        assert plain == pytest.approx(0.9)   # max over target net
        assert double == pytest.approx(0.2)  # target net at online argmax (a0)
        assert td_target(Variant.DUELING_DDQN, tr, net, gamma=1.0) == pytest.approx(0.2)


class TestReplayBuffer:
    def test_fifo_eviction(self):
        buf = ReplayBuffer(2)
        s = toy_state()
        t1, t2, t3 = (Transition(s, 0, float(i), s, False) for i in (1, 2, 3))
        for t in (t1, t2, t3):
            store(buf, t)
        assert [t.reward for t in buf.entries] == [2.0, 3.0]

    def test_store_grows(self):
        buf = ReplayBuffer(4)
        store(buf, Transition(toy_state(), 0, 0.0, toy_state(), False))
        assert len(buf) == 1

    def test_capacity_bound(self):
        buf = ReplayBuffer(128)
        s = toy_state()
        for i in range(10_000):
            store(buf, Transition(s, 0, float(i), s, False))
        assert len(buf) == 128
        assert buf.entries[0].reward == 10_000 - 128

    def test_sampling_uniform(self):
        buf = ReplayBuffer(10)
        s = toy_state()
        for i in range(10):
            store(buf, Transition(s, 0, float(i), s, False))
        rng = np.random.default_rng(7)
        counts = np.zeros(10)
        for _ in range(10_000):
            for t in buf.sample(10, rng):
                counts[int(t.reward)] += 1
        sigma = np.sqrt(100_000 * 0.1 * 0.9)
        assert np.abs(counts - 10_000).max() < 3 * sigma

    def test_insufficient_samples(self):
        buf = ReplayBuffer(10)
        with pytest.raises(InsufficientSamples):
            buf.sample(1, np.random.default_rng(0))


class TestTrainStep:
    def full_buffer(self, reward=0.75, action=0, n=32):
        buf = ReplayBuffer(64)
        s = toy_state()
        for _ in range(n):
            store(buf, Transition(s, action, reward, s, True))
        return buf, s

    def test_gamma_zero_loss_is_squared_error(self):
        cfg = AgentConfig(variant=Variant.DQN, gamma=0.0, seed=1)
        net = QNetwork(4, 2, seed=1)
        buf, s = self.full_buffer(reward=0.75)
        q0 = net.q_values(s.values)[0]
        loss = train_step(net, buf, cfg, np.random.default_rng(0))
        assert loss == pytest.approx((0.75 - q0) ** 2)

    def test_target_sync_copies(self):
        cfg = AgentConfig(variant=Variant.DQN, gamma=0.5, target_sync=3, seed=2)
        net = QNetwork(4, 2, seed=2)
        buf, s = self.full_buffer()
        rng = np.random.default_rng(0)
        for i in range(3):
            train_step(net, buf, cfg, rng)
        tr = Transition(s, 0, 0.1, s, False)
        with_target = td_target(Variant.DQN, tr, net, gamma=0.5)
        net.target_params = [p.copy() for p in net.params]
        assert td_target(Variant.DQN, tr, net, gamma=0.5) == with_target

    def test_gradients_match_finite_differences(self):
        net = QNetwork(2, 1, hidden=(), seed=3)
        assert net.flat_params.size == 3
        states = np.array([[0.5, -1.0], [1.5, 2.0], [-0.3, 0.7]])
        actions = np.zeros(3, dtype=np.intp)
        targets = np.array([1.0, -0.5, 0.25])
        _, grads = net.loss_and_grads(states, actions, targets)
        flat = np.concatenate([g.ravel() for g in grads])
        base = net.flat_params.copy()
        h = 1e-5
        for i in range(3):
            plus, minus = base.copy(), base.copy()
            plus[i] += h
            minus[i] -= h
            net.flat_params = plus
            up = net.batch_loss(states, actions, targets)
            net.flat_params = minus
            down = net.batch_loss(states, actions, targets)
            net.flat_params = base
            fd = (up - down) / (2 * h)
            assert abs(flat[i] - fd) / max(abs(fd), 1e-12) < 1e-4

    def test_insufficient_raises(self):
        cfg = AgentConfig(variant=Variant.DQN, seed=0)
        net = QNetwork(4, 2, seed=0)
        buf = ReplayBuffer(64)
        with pytest.raises(InsufficientSamples):
            train_step(net, buf, cfg, np.random.default_rng(0))


class TestNetworkProperties:
    def test_parameter_isolation(self):
        team = [Agent.build(r, 4, 3, AgentConfig(variant=Variant.DQN, seed=5)) for r in Role]
        state = toy_state()
        before = [a.net.q_values(state.values).copy() for a in team]
        team[0].net.params[0][...] += 10.0
        after = [a.net.q_values(state.values) for a in team]
        assert not np.allclose(before[0], after[0])
        np.testing.assert_array_equal(before[1], after[1])
        np.testing.assert_array_equal(before[2], after[2])

    def test_dueling_identity(self):
        net = QNetwork(4, 3, hidden=(8,), dueling=True, seed=6)
        net.params[-2][...] = 0.0  # advantage weights
        net.params[-1][...] = 2.5  # equal advantage bias
        x = np.ones(4)
        q = net.q_values(x)
        h = np.maximum(x @ net.params[0] + net.params[1], 0.0)
        v = h @ net.params[2] + net.params[3]
        np.testing.assert_allclose(q, np.full(3, v[0]))

    def test_bandit_convergence_quick(self):
        # full four-variant sweep lives in the acceptance suite
        cfg = AgentConfig(variant=Variant.DUELING_DDQN, gamma=0.0, seed=1)
        net = QNetwork(4, 2, dueling=True, seed=1)
        buf = ReplayBuffer(cfg.buffer_capacity)
        s = toy_state()
        for i in range(64):
            a = i % 2
            store(buf, Transition(s, a, 1.0 if a == 0 else 0.0, s, True))
        rng = np.random.default_rng(1)
        for _ in range(500):
            train_step(net, buf, cfg, rng)
        q = net.q_values(s.values)
        assert q[0] > q[1]


class TestCheckpoints:
    def test_round_trip(self, tmp_path):
        net = QNetwork(6, 4, hidden=(16, 8), dueling=True, seed=9)
        net.update_count = 37
        save_checkpoint(net, tmp_path / "agent", Variant.DUELING_DQN)
        loaded, variant = load_checkpoint(tmp_path / "agent")
        assert variant is Variant.DUELING_DQN
        assert loaded.update_count == 37
        x = np.random.default_rng(0).standard_normal(6)
        np.testing.assert_array_equal(loaded.q_values(x), net.q_values(x))

    def test_binary_is_little_endian_float64(self, tmp_path):
        net = QNetwork(2, 2, hidden=(), seed=0)
        save_checkpoint(net, tmp_path / "n", Variant.DQN)
        raw = np.fromfile(tmp_path / "n.bin", dtype="<f8")
        np.testing.assert_array_equal(raw, net.flat_params)
