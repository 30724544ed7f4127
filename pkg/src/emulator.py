"""
Emulator module for Leverage Bidder.
Replays the advertising auction for candidate actions and builds hybrid transitions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .market import (
    MarketEnv, MarketState, AdPlatformState, Product, Transition, advertise,
)

logger = logging.getLogger(__name__)

# Maps (transition, expansion index) to one candidate action per target
ActionSampler = Callable[[Transition, int], np.ndarray]


class EmulatorError(Exception):
    """Emulator operation error."""
    pass


@dataclass(frozen=True)
class HybridTransition(Transition):
    """Transition whose next ad statistics are simulated; the x-part is the logged one."""
    hybrid: bool = True


class Emulator:
    """
    Frozen copy of the auction configuration.

    In expected-value mode the emulator is deterministic and reproduces the
    noise-free environment's ad statistics exactly.
    """

    def __init__(
        self,
        products: list[Product],
        requests: int,
        slots: int,
        match_rate: float,
        range_: float,
        expected: bool = True,
        pctr_noise: float = 0.0,
        seed: int = 0
    ):
        """
        Initialize emulator.

        Args:
            products: All auction participants
            requests: Requests per window
            slots: Advertising slots per request
            match_rate: Per-request eligibility probability
            range_: Bid adjust ratio bound
            expected: Use the expected-value auction
            pctr_noise: Std of the Gaussian perturbation applied to pctr
            seed: Seed for the pctr perturbation
        """
        if requests < 0 or slots < 1:
            raise EmulatorError("Invalid auction configuration")
        self.products = tuple(products)
        self.targets = tuple(p for p in self.products if p.target)
        self.requests = requests
        self.slots = slots
        self.match_rate = match_rate
        self.range = range_
        self.expected = expected
        self.pctr_override = None
        if pctr_noise > 0:
            rng = np.random.default_rng(seed)
            self.pctr_override = {
                p.id: float(np.clip(p.apctr_ad + pctr_noise * rng.standard_normal(), 1e-6, 1 - 1e-6))
                for p in self.products
            }

    @classmethod
    def from_env(cls, env: MarketEnv, expected: bool = True, pctr_noise: float = 0.0, seed: int = 0) -> Emulator:
        return cls(
            env.products, env.requests, env.slots, env.match_rate, env.range,
            expected=expected, pctr_noise=pctr_noise, seed=seed,
        )

    def simulate_o(
        self,
        state: MarketState,
        action: np.ndarray,
        rng: Optional[np.random.Generator] = None
    ) -> AdPlatformState:
        """
        Ad statistics the next window would show under a candidate action.

        Args:
            state: State the action is taken in
            action: Bid adjust ratio per target product
            rng: Generator for the sampled auction (expected=False only)

        Returns:
            Simulated successor AdPlatformState

        Raises:
            EmulatorError: If the action has the wrong size
        """
        alphas = np.clip(np.asarray(action, dtype=np.float64).reshape(-1), -self.range, self.range)
        if alphas.size != len(self.targets):
            raise EmulatorError(f"Action has {alphas.size} entries, expected {len(self.targets)}")
        if not self.expected and rng is None:
            raise EmulatorError("Sampled emulation requires a random generator")

        pv, clicks, cost = advertise(
            list(self.products), list(self.targets), alphas, self.range, self.requests,
            self.slots, self.match_rate, rng, expected=self.expected,
            pctr_override=self.pctr_override,
        )
        o = state.o
        return AdPlatformState(
            product_ids=o.product_ids,
            apctr=o.apctr, apcvr=o.apcvr, bid=o.bid, ppb=o.ppb,
            pv_ad=pv, click_ad=clicks,
            prev_pv_ad=o.pv_ad, prev_click_ad=o.click_ad,
            cost=cost,
        )

    def expand_transition(
        self,
        transition: Transition,
        expand: int,
        sampler: ActionSampler,
        rng: Optional[np.random.Generator] = None
    ) -> list[HybridTransition]:
        """
        Build hybrid transitions for candidate actions around a real one.

        Reward, done flag and the recommendation-related part of the next
        state are copied from the real transition.

        Args:
            transition: Real transition
            expand: Number of hybrid transitions (M >= 0)
            sampler: Exploratory action sampler
            rng: Generator for the sampled auction (expected=False only)

        Returns:
            List of `expand` hybrid transitions
        """
        if expand < 0:
            raise EmulatorError(f"Expansion count must be nonnegative, got {expand}")
        hybrids = []
        real_next = transition.next_state
        for m in range(expand):
            action = np.clip(np.asarray(sampler(transition, m), dtype=np.float64), -self.range, self.range)
            o_next = self.simulate_o(transition.state, action, rng=rng)
            hybrids.append(HybridTransition(
                state=transition.state,
                actions=action,
                rewards=transition.rewards,
                next_state=MarketState(o=o_next, x=real_next.x, t=real_next.t),
                done=transition.done,
            ))
        return hybrids
