"""
Training module for Leverage Bidder.
Episode rollouts, greedy evaluation and the training loops of every algorithm.
"""

from __future__ import annotations

import math
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .a2c import A2cAgent
from .cem import CemOptimizer
from .ddpg import DdpgAgent
from .emulator import Emulator
from .market import MarketEnv, Transition, RunningNormalizer, state_features
from .nn import Network
from .policies import AgentError, Policy, ActorPolicy, FixedPolicy
from .replay import ReplayMemory, OUProcess, flatten_transitions

logger = logging.getLogger(__name__)


def converged_mean(values: Sequence[float], fraction: float = 0.1) -> float:
    """Mean of the final ceil(fraction * n) values."""
    if not values:
        return 0.0
    window = max(1, math.ceil(fraction * len(values)))
    return float(np.mean(values[-window:]))


@dataclass
class LearningCurve:
    """Per-episode greedy test return and training return of one run."""
    episodes: list[int] = field(default_factory=list)
    test_returns: list[float] = field(default_factory=list)
    train_returns: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.episodes)

    def add(self, episode: int, test_return: float, train_return: float) -> None:
        self.episodes.append(int(episode))
        self.test_returns.append(float(test_return))
        self.train_returns.append(float(train_return))

    def rows(self) -> list[dict]:
        return [
            {'episode': e, 'test_return': test, 'train_return': train}
            for e, test, train in zip(self.episodes, self.test_returns, self.train_returns)
        ]

    def converged(self, fraction: float = 0.1) -> float:
        return converged_mean(self.test_returns, fraction)


def training_seed(run_seed: int, episode: int) -> int:
    """Environment seed of a training episode."""
    return int(np.random.SeedSequence([int(run_seed), int(episode)]).generate_state(1)[0])


def run_episode(
    env: MarketEnv,
    policy: Policy,
    seed: int,
    normalizer: Optional[RunningNormalizer] = None
) -> float:
    """
    Roll out one episode and return its undiscounted reward sum.

    When a normalizer is given it is updated with every visited state.
    """
    state = env.reset(seed)
    total = 0.0
    done = False
    while not done:
        if normalizer is not None:
            normalizer.update(state_features(state))
        state, reward, done = env.step(policy.act(state))
        total += reward
    return total


def evaluate(env: MarketEnv, policy: Policy, seeds: Sequence[int]) -> list[float]:
    """Greedy returns on held-out seeds; never touches any normalizer."""
    return [run_episode(env, policy, seed) for seed in seeds]


def _noise_scale(episode: int, episodes: int, floor: float) -> float:
    half = max(1.0, episodes / 2.0)
    return max(floor, 1.0 - (1.0 - floor) * episode / half)


def htlb_train(
    agent: DdpgAgent,
    env: MarketEnv,
    emulator: Emulator,
    episodes: int,
    steps: Optional[int] = None,
    expand: int = 10,
    batch_size: int = 64,
    eval_env: Optional[MarketEnv] = None,
    eval_seeds: Sequence[int] = (),
    seed: int = 0,
    memory: Optional[ReplayMemory] = None,
    ou_theta: float = 0.15,
    ou_sigma: float = 0.2,
    noise_floor: float = 0.1,
    updates_per_step: int = 1
) -> LearningCurve:
    """
    Train a DDPG agent with hybrid transitions from the advertising emulator.

    Each step interacts with the environment, stores the real transition and
    `expand` hybrid ones, then updates from a minibatch of the memory.
    expand = 0 is plain DDPG.

    Args:
        agent: Shared per-product DDPG agent
        env: Training environment; its normalizer standardizes states
        emulator: Advertising emulator built from env
        episodes: Number of training episodes
        steps: Steps per episode (default: env horizon)
        expand: Hybrid transitions per real transition (M)
        batch_size: Transitions per minibatch (N)
        eval_env: Environment for greedy evaluation (default: no evaluation)
        eval_seeds: Held-out evaluation seeds
        seed: Run seed
        memory: Replay memory (default: new memory of capacity 10000)
        ou_theta: OU mean reversion
        ou_sigma: OU scale as a fraction of range
        noise_floor: Final fraction of the exploration noise
        updates_per_step: Minibatch updates per real step

    Returns:
        LearningCurve of the run
    """
    if episodes < 1 or batch_size < 1 or expand < 0:
        raise AgentError("episodes and batch_size must be positive, expand nonnegative")
    memory = memory if memory is not None else ReplayMemory(10000)
    steps = env.horizon if steps is None else min(steps, env.horizon)
    k = env.n_targets
    normalizer = env.normalizer
    exploration = OUProcess(k, ou_theta, ou_sigma * agent.range, seed=[seed, 11])
    expansion = OUProcess(k, ou_theta, ou_sigma * agent.range, seed=[seed, 12])
    batch_rng = np.random.default_rng([seed, 13])
    policy = agent.greedy_policy(normalizer)

    def sampler(transition: Transition, m: int) -> np.ndarray:
        return transition.actions + expansion.sample()

    curve = LearningCurve()
    for episode in range(episodes):
        state = env.reset(training_seed(seed, episode))
        exploration.reset()
        expansion.reset()
        scale = _noise_scale(episode, episodes, noise_floor)
        train_return = 0.0

        for _ in range(steps):
            raw = state_features(state)
            normalizer.update(raw)
            alphas = agent.act(normalizer.transform(raw), noise=scale * exploration.sample())
            next_state, reward, done = env.step(alphas)
            train_return += reward

            transition = Transition(
                state=state, actions=alphas, rewards=env.info.weighted_increments,
                next_state=next_state, done=done,
            )
            memory.push(transition)
            if expand > 0:
                memory.extend(emulator.expand_transition(transition, expand, sampler))

            for _ in range(updates_per_step):
                batch = flatten_transitions(
                    memory.sample(batch_size, batch_rng), normalizer, env.reward_scale
                )
                agent.update(batch)

            state = next_state
            if done:
                break

        test_return = float(np.mean(evaluate(eval_env, policy, eval_seeds))) if eval_env and eval_seeds else 0.0
        curve.add(episode, test_return, train_return)
        logger.debug(
            f"Episode {episode}: train {train_return:.2f}, test {test_return:.2f}, memory {len(memory)}"
        )
    return curve


def htlb_a2c_train(
    agent: A2cAgent,
    env: MarketEnv,
    emulator: Emulator,
    episodes: int,
    steps: Optional[int] = None,
    expand: int = 10,
    eval_env: Optional[MarketEnv] = None,
    eval_seeds: Sequence[int] = (),
    seed: int = 0
) -> LearningCurve:
    """
    Train A2C on batches of the real transition plus `expand` hybrid ones.

    Hybrid actions are sampled from the current policy and the batch is used
    immediately, without replay. expand = 0 is plain A2C.
    """
    if episodes < 1 or expand < 0:
        raise AgentError("episodes must be positive, expand nonnegative")
    steps = env.horizon if steps is None else min(steps, env.horizon)
    normalizer = env.normalizer
    policy = agent.greedy_policy(normalizer)

    def sampler(transition: Transition, m: int) -> np.ndarray:
        rows = normalizer.transform(state_features(transition.state))
        return agent.alphas[agent.sample_actions(rows)]

    curve = LearningCurve()
    for episode in range(episodes):
        state = env.reset(training_seed(seed, episode))
        train_return = 0.0
        for _ in range(steps):
            raw = state_features(state)
            normalizer.update(raw)
            alphas = agent.alphas[agent.sample_actions(normalizer.transform(raw))]
            next_state, reward, done = env.step(alphas)
            train_return += reward

            transition = Transition(
                state=state, actions=alphas, rewards=env.info.weighted_increments,
                next_state=next_state, done=done,
            )
            group = [transition]
            if expand > 0:
                group.extend(emulator.expand_transition(transition, expand, sampler))
            agent.update(flatten_transitions(group, normalizer, env.reward_scale))

            state = next_state
            if done:
                break

        test_return = float(np.mean(evaluate(eval_env, policy, eval_seeds))) if eval_env and eval_seeds else 0.0
        curve.add(episode, test_return, train_return)
        logger.debug(f"Episode {episode}: train {train_return:.2f}, test {test_return:.2f}")
    return curve


def cem_train(
    actor: Network,
    cem: CemOptimizer,
    env: MarketEnv,
    episodes: int,
    range_: float,
    eval_env: Optional[MarketEnv] = None,
    eval_seeds: Sequence[int] = (),
    seed: int = 0
) -> LearningCurve:
    """
    Search actor parameters with CEM, one training episode per candidate.

    The curve gets one point per iteration, indexed by the last episode
    consumed; the actor is left at the final search mean.
    """
    normalizer = env.normalizer
    policy = ActorPolicy(actor, normalizer, range_)
    consumed = 0

    def score(params: np.ndarray) -> float:
        nonlocal consumed
        actor.set_flat(params)
        value = run_episode(env, policy, training_seed(seed, consumed), normalizer)
        consumed += 1
        return value

    curve = LearningCurve()
    iterations = max(1, math.ceil(episodes / cem.population))
    for iteration in range(iterations):
        scores = cem.iterate(score)
        actor.set_flat(cem.mean)
        test_return = float(np.mean(evaluate(eval_env, policy, eval_seeds))) if eval_env and eval_seeds else 0.0
        curve.add(consumed - 1, test_return, float(np.mean(scores)))
        logger.debug(f"CEM iteration {iteration}: population mean {np.mean(scores):.2f}, test {test_return:.2f}")
    return curve


def fixed_train(
    alpha: float,
    env: MarketEnv,
    episodes: int,
    eval_env: Optional[MarketEnv] = None,
    eval_seeds: Sequence[int] = (),
    seed: int = 0
) -> LearningCurve:
    """Learning curve of a constant-ratio policy (nothing is learned)."""
    policy = FixedPolicy(alpha)
    test_return = float(np.mean(evaluate(eval_env, policy, eval_seeds))) if eval_env and eval_seeds else 0.0
    curve = LearningCurve()
    for episode in range(episodes):
        curve.add(episode, test_return, run_episode(env, policy, training_seed(seed, episode)))
    return curve
