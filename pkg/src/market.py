"""
Market module for Leverage Bidder.
Two-platform environment: eCPM auction, recommendation allocation and exposure feedback.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import binom

from .config import DEFAULT_ENVIRONMENT
from .curves import TrafficWinFn, ExposureEffectFn, ExposureCurve, exposure_shift

logger = logging.getLogger(__name__)

STATE_DIM = 16

# Feature columns standardized by the running normalizer:
# log bid, log ppb, log pv_ad, log click_ad, log pv_rec, log click_rec
STANDARDIZED_FEATURES = (2, 3, 4, 5, 10, 11)

AUCTION_STREAM = 0
RECOMMEND_STREAM = 1
RESET_STREAM = 2


class MarketError(Exception):
    """Market simulation error."""
    pass


@dataclass(frozen=True)
class Product:
    """Static attributes and quality curves of one product."""
    id: int
    apctr_ad: float
    apcvr_ad: float
    bid: float
    ppb: float
    traffic_win: Optional[TrafficWinFn] = None
    exposure_effect: Optional[ExposureEffectFn] = None
    target: bool = True
    initial_score: float = 0.5
    business_quality: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.apctr_ad < 1.0 or not 0.0 < self.apcvr_ad < 1.0:
            raise MarketError(f"Product {self.id}: apctr_ad and apcvr_ad must lie in (0, 1)")
        if self.bid <= 0 or self.ppb <= 0:
            raise MarketError(f"Product {self.id}: bid and ppb must be positive")
        if self.target and (self.traffic_win is None or self.exposure_effect is None):
            raise MarketError(f"Product {self.id}: target products need both curves")
        if not 0.0 <= self.initial_score <= 1.0:
            raise MarketError(f"Product {self.id}: initial_score must lie in [0, 1]")

    def to_dict(self) -> dict:
        data = {
            'id': self.id,
            'apctr_ad': self.apctr_ad,
            'apcvr_ad': self.apcvr_ad,
            'bid': self.bid,
            'ppb': self.ppb,
            'target': self.target,
            'initial_score': self.initial_score,
            'business_quality': self.business_quality,
        }
        if self.traffic_win is not None:
            data['traffic_win'] = self.traffic_win.to_dict()
        if self.exposure_effect is not None:
            data['exposure_effect'] = self.exposure_effect.to_dict()
        return data


def window_rng(seed: int, window: int, stream: int) -> np.random.Generator:
    """Random generator for one (episode seed, window, stream) triple."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(window) + 1, stream]))


def adjust_bid(bid: float, alpha: float, range_: float) -> float:
    """Return bid * (1 + clamp(alpha, -range, range)), floored at 0."""
    clamped = min(max(alpha, -range_), range_)
    return max(0.0, bid * (1.0 + clamped))


@dataclass
class AuctionOutcome:
    """
    Aggregated result of one window of auctions.

    winners holds product ids per request in slot order, padded with -1;
    it is None for the expected-value auction.
    """
    winners: Optional[np.ndarray]
    impressions: dict[int, float] = field(default_factory=dict)
    clicks: dict[int, float] = field(default_factory=dict)
    cost: dict[int, float] = field(default_factory=dict)


def run_auction(
    products: list[Product],
    adjusted_bids: dict[int, float],
    requests: int,
    slots: int,
    rng: Optional[np.random.Generator] = None,
    match_rate: float = 0.8,
    expected: bool = False,
    pctr_override: Optional[dict[int, float]] = None
) -> AuctionOutcome:
    """
    Run the eCPM auction for one window.

    Products are ranked by pctr * adjusted bid (ties to the lower id); each
    request sees every product independently with probability match_rate and
    the top `slots` eligible products win an impression. Products with a zero
    adjusted bid do not take part.

    Args:
        products: Candidate products
        adjusted_bids: Bid per product id (base bid when missing)
        requests: Number of requests in the window
        slots: Advertising slots per request
        rng: Generator for eligibility and click sampling
        match_rate: Per-request eligibility probability
        expected: Return expected impressions and clicks instead of sampling
        pctr_override: Replacement pctr per product id

    Returns:
        AuctionOutcome with per-product impressions, clicks and cost

    Raises:
        MarketError: On invalid counts or a sampled auction without rng
    """
    if requests < 0:
        raise MarketError(f"requests must be nonnegative, got {requests}")
    if slots < 1:
        raise MarketError(f"slots must be at least 1, got {slots}")
    if not products:
        return AuctionOutcome(winners=None if expected else np.full((requests, slots), -1))

    pctr_override = pctr_override or {}
    ids = np.array([p.id for p in products], dtype=np.int64)
    pctr = np.array([pctr_override.get(p.id, p.apctr_ad) for p in products], dtype=np.float64)
    bids = np.array([adjusted_bids.get(p.id, p.bid) for p in products], dtype=np.float64)
    scores = pctr * bids

    order = np.lexsort((ids, -scores))
    ranked = order[scores[order] > 0]

    impressions = np.zeros(len(products))
    winners = None
    if expected:
        higher = np.arange(len(ranked))
        win_prob = match_rate * binom.cdf(slots - 1, higher, match_rate)
        impressions[ranked] = requests * win_prob
        clicks = impressions * pctr
    else:
        if rng is None:
            raise MarketError("Sampled auction requires a random generator")
        eligible = rng.random((requests, len(products))) < match_rate
        eligible_ranked = eligible[:, ranked]
        position = np.cumsum(eligible_ranked, axis=1)
        wins = eligible_ranked & (position <= slots)
        impressions[ranked] = wins.sum(axis=0)

        winners = np.full((requests, slots), -1, dtype=np.int64)
        ranked_ids = ids[ranked]
        for j in range(slots):
            hit = wins & (position == j + 1)
            has = hit.any(axis=1)
            winners[has, j] = ranked_ids[hit[has].argmax(axis=1)]
        clicks = rng.binomial(impressions.astype(np.int64), pctr).astype(np.float64)

    cost = clicks * bids
    return AuctionOutcome(
        winners=winners,
        impressions={int(i): float(v) for i, v in zip(ids, impressions)},
        clicks={int(i): float(v) for i, v in zip(ids, clicks)},
        cost={int(i): float(v) for i, v in zip(ids, cost)},
    )


@dataclass
class RecommendationOutcome:
    impressions: dict[int, float]
    clicks: dict[int, float]


def recommend_step(
    products: list[Product],
    scores: dict[int, float],
    rng: Optional[np.random.Generator] = None,
    noise: float = 0.0,
    click_scale: float = 0.1
) -> RecommendationOutcome:
    """
    Allocate organic impressions through each product's traffic-win curve.

    Without rng the allocation is noise-free and clicks are expected values
    (impressions * click_scale * z).
    """
    ids = [p.id for p in products]
    z = np.array([scores[i] for i in ids], dtype=np.float64)
    pv = np.array([p.traffic_win(zi) for p, zi in zip(products, z)], dtype=np.float64)
    rate = np.clip(click_scale * z, 0.0, 1.0)
    if rng is None:
        clicks = pv * rate
    else:
        if noise > 0:
            pv = pv * np.exp(noise * rng.standard_normal(len(ids)) - 0.5 * noise * noise)
        clicks = rng.binomial(np.rint(pv).astype(np.int64), rate).astype(np.float64)
    return RecommendationOutcome(
        impressions={i: float(v) for i, v in zip(ids, pv)},
        clicks={i: float(v) for i, v in zip(ids, clicks)},
    )


def exposure_update(
    product: Product,
    organic_pv: float,
    business_pv: float,
    business_quality: Optional[float] = None,
    leverage_lambda: float = 1.0,
    leverage_mu: float = 0.05,
    curve: Optional[ExposureCurve] = None
) -> float:
    """
    Next-window recommended score of a product.

    z_next = clamp(U(organic + lambda * business) + mu * quality * [business > 0], 0, 1)
    """
    if organic_pv < 0 or business_pv < 0:
        raise MarketError("Impression counts must be nonnegative")
    quality = product.business_quality if business_quality is None else business_quality
    return float(exposure_shift(
        curve if curve is not None else product.exposure_effect,
        float(organic_pv), float(business_pv), quality, leverage_lambda, leverage_mu,
    ))


def reward_weights(increments: np.ndarray, weighting: str = 'total') -> np.ndarray:
    """Per-product importance weights; 'count' uses 1/|r_k| with 0 for r_k = 0."""
    increments = np.asarray(increments, dtype=np.float64)
    if weighting == 'total':
        return np.ones_like(increments)
    if weighting == 'count':
        magnitude = np.abs(increments)
        return np.divide(1.0, magnitude, out=np.zeros_like(magnitude), where=magnitude > 0)
    raise MarketError(f"Unknown reward weighting: {weighting}")


def compute_reward(increments, etas) -> float:
    """Weighted sum of per-product leveraged increments."""
    increments = np.asarray(increments, dtype=np.float64)
    etas = np.asarray(etas, dtype=np.float64)
    if increments.shape != etas.shape:
        raise MarketError(
            f"Increment and weight lengths differ: {increments.shape} vs {etas.shape}"
        )
    return float(np.sum(etas * increments))


@dataclass(frozen=True)
class AdPlatformState:
    """Advertisement-related statistics of the target products for one window."""
    product_ids: tuple[int, ...]
    apctr: np.ndarray
    apcvr: np.ndarray
    bid: np.ndarray
    ppb: np.ndarray
    pv_ad: np.ndarray
    click_ad: np.ndarray
    prev_pv_ad: np.ndarray
    prev_click_ad: np.ndarray
    cost: np.ndarray

    @property
    def ctr_ad(self) -> np.ndarray:
        return self.click_ad / np.maximum(self.pv_ad, 1.0)

    @property
    def prev_ctr_ad(self) -> np.ndarray:
        return self.prev_click_ad / np.maximum(self.prev_pv_ad, 1.0)


@dataclass(frozen=True)
class RecPlatformState:
    """Recommendation-related statistics; z is the score in force during the window."""
    pv_rec: np.ndarray
    click_rec: np.ndarray
    prev_pv_rec: np.ndarray
    prev_click_rec: np.ndarray
    z: np.ndarray

    @property
    def ctr_rec(self) -> np.ndarray:
        return self.click_rec / np.maximum(self.pv_rec, 1.0)

    @property
    def prev_ctr_rec(self) -> np.ndarray:
        return self.prev_click_rec / np.maximum(self.prev_pv_rec, 1.0)


@dataclass(frozen=True)
class MarketState:
    o: AdPlatformState
    x: RecPlatformState
    t: int

    @property
    def n_products(self) -> int:
        return len(self.o.product_ids)


def state_features(state: MarketState) -> np.ndarray:
    """
    Raw per-product feature rows (K x 16), counts log1p-scaled.

    Columns: apctr, apcvr, bid, ppb, pv_ad, click_ad, ctr_ad, and the three ad
    deltas, then pv_rec, click_rec, ctr_rec and the three recommendation deltas.
    """
    o, x = state.o, state.x
    log = np.log1p
    columns = [
        o.apctr, o.apcvr, log(o.bid), log(o.ppb),
        log(o.pv_ad), log(o.click_ad), o.ctr_ad,
        log(o.pv_ad) - log(o.prev_pv_ad),
        log(o.click_ad) - log(o.prev_click_ad),
        o.ctr_ad - o.prev_ctr_ad,
        log(x.pv_rec), log(x.click_rec), x.ctr_rec,
        log(x.pv_rec) - log(x.prev_pv_rec),
        log(x.click_rec) - log(x.prev_click_rec),
        x.ctr_rec - x.prev_ctr_rec,
    ]
    if state.n_products == 0:
        return np.zeros((0, STATE_DIM))
    return np.column_stack(columns).astype(np.float64)


class RunningNormalizer:
    """
    Running mean/variance standardization of the count features.

    Other columns pass through unchanged. Before any update it is the identity.
    """

    def __init__(self, dim: int = STATE_DIM, columns: tuple[int, ...] = STANDARDIZED_FEATURES):
        self.dim = dim
        self.columns = np.array(columns, dtype=np.int64)
        self.count = 0
        self.mean = np.zeros(len(columns))
        self.m2 = np.zeros(len(columns))

    def update(self, rows: np.ndarray) -> None:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        if rows.shape[0] == 0:
            return
        values = rows[:, self.columns]
        n = values.shape[0]
        batch_mean = values.mean(axis=0)
        batch_m2 = ((values - batch_mean) ** 2).sum(axis=0)
        total = self.count + n
        delta = batch_mean - self.mean
        self.mean = self.mean + delta * n / total
        self.m2 = self.m2 + batch_m2 + delta ** 2 * self.count * n / total
        self.count = total

    @property
    def std(self) -> np.ndarray:
        if self.count < 2:
            return np.ones(len(self.columns))
        return np.sqrt(self.m2 / self.count + 1e-8)

    def transform(self, rows: np.ndarray) -> np.ndarray:
        out = np.array(rows, dtype=np.float64, copy=True)
        if self.count == 0:
            return out
        if out.ndim == 1:
            out[self.columns] = (out[self.columns] - self.mean) / self.std
        else:
            out[:, self.columns] = (out[:, self.columns] - self.mean) / self.std
        return out

    def state_dict(self) -> dict:
        return {
            'count': self.count,
            'mean': self.mean.tolist(),
            'm2': self.m2.tolist(),
            'columns': self.columns.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> RunningNormalizer:
        normalizer = cls(columns=tuple(data['columns']))
        normalizer.count = int(data['count'])
        normalizer.mean = np.array(data['mean'], dtype=np.float64)
        normalizer.m2 = np.array(data['m2'], dtype=np.float64)
        return normalizer


@dataclass(frozen=True)
class Transition:
    """
    One real step for all target products.

    rewards holds the weighted per-product increments eta_k * r_k.
    """
    state: MarketState
    actions: np.ndarray
    rewards: np.ndarray
    next_state: MarketState
    done: bool
    hybrid: bool = False


@dataclass(frozen=True)
class StepInfo:
    alphas: np.ndarray
    increments: np.ndarray
    weighted_increments: np.ndarray
    business_pv: np.ndarray
    business_pv_baseline: np.ndarray
    organic_pv: np.ndarray
    organic_pv_baseline: np.ndarray
    cost: np.ndarray
    next_scores: np.ndarray


def advertise(
    products: list[Product],
    targets: list[Product],
    alphas: np.ndarray,
    range_: float,
    requests: int,
    slots: int,
    match_rate: float,
    rng: Optional[np.random.Generator],
    expected: bool,
    pctr_override: Optional[dict[int, float]] = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Run a window's auction with bid adjust ratios applied to the targets.

    Returns:
        Tuple of (impressions, clicks, cost) arrays in target order
    """
    adjusted = {p.id: adjust_bid(p.bid, float(a), range_) for p, a in zip(targets, alphas)}
    outcome = run_auction(
        products, adjusted, requests, slots,
        rng=rng, match_rate=match_rate, expected=expected, pctr_override=pctr_override,
    )
    pv = np.array([outcome.impressions.get(p.id, 0.0) for p in targets], dtype=np.float64)
    clicks = np.array([outcome.clicks.get(p.id, 0.0) for p in targets], dtype=np.float64)
    cost = np.array([outcome.cost.get(p.id, 0.0) for p in targets], dtype=np.float64)
    return pv, clicks, cost


class MarketEnv:
    """
    Episodic environment over the target products.

    Every step runs the policy rollout and a paired manual (alpha = 0) rollout
    on identical random streams; rewards are their organic differences.
    """

    def __init__(
        self,
        env_config: Optional[dict] = None,
        products: Optional[list[Product]] = None,
        exposure_overrides: Optional[dict[int, ExposureCurve]] = None
    ):
        """
        Initialize environment.

        Args:
            env_config: The 'environment' configuration section
            products: Explicit products (default: built from env_config)
            exposure_overrides: Replacement exposure curves per target id
        """
        self.config = {**DEFAULT_ENVIRONMENT, **(env_config or {})}
        if products is None:
            from .population import build_products
            products = build_products(self.config)
        ids = [p.id for p in products]
        if len(set(ids)) != len(ids):
            raise MarketError("Product ids must be unique")

        self.products = list(products)
        self.targets = [p for p in self.products if p.target]
        self.exposure_overrides = dict(exposure_overrides or {})

        self.horizon = int(self.config['horizon'])
        self.gamma = float(self.config['gamma'])
        self.range = float(self.config['range'])
        self.requests = int(self.config['requests'])
        self.slots = int(self.config['slots'])
        self.match_rate = float(self.config['match_rate'])
        self.stochastic = bool(self.config['stochastic'])
        self.rec_noise = float(self.config['rec_noise'])
        self.rec_click_scale = float(self.config['rec_click_scale'])
        self.score_jitter = float(self.config['score_jitter'])
        self.leverage_lambda = float(self.config['leverage_lambda'])
        self.leverage_mu = float(self.config['leverage_mu'])
        self.reward_weighting = self.config['reward_weighting']
        self.reward_scale = float(self.config['reward_scale'])

        self.normalizer = RunningNormalizer()
        self.episode_log = None
        self.state: Optional[MarketState] = None
        self.info: Optional[StepInfo] = None
        self.seed = 0
        self.t = 0
        self.done = True
        self._scores = np.zeros(len(self.targets))
        self._baseline_scores = np.zeros(len(self.targets))

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    @property
    def target_ids(self) -> list[int]:
        return [p.id for p in self.targets]

    def _advertise(self, alphas: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        rng = window_rng(self.seed, window, AUCTION_STREAM) if self.stochastic else None
        return advertise(
            self.products, self.targets, alphas, self.range, self.requests,
            self.slots, self.match_rate, rng, expected=not self.stochastic,
        )

    def _recommend(self, scores: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
        rng = window_rng(self.seed, window, RECOMMEND_STREAM) if self.stochastic else None
        outcome = recommend_step(
            self.targets,
            {p.id: float(z) for p, z in zip(self.targets, scores)},
            rng=rng, noise=self.rec_noise, click_scale=self.rec_click_scale,
        )
        pv = np.array([outcome.impressions[p.id] for p in self.targets], dtype=np.float64)
        clicks = np.array([outcome.clicks[p.id] for p in self.targets], dtype=np.float64)
        return pv, clicks

    def _next_scores(self, organic_pv: np.ndarray, business_pv: np.ndarray) -> np.ndarray:
        scores = []
        for p, organic, business in zip(self.targets, organic_pv, business_pv):
            override = self.exposure_overrides.get(p.id)
            scores.append(exposure_update(
                p, float(organic), float(business),
                leverage_lambda=self.leverage_lambda,
                leverage_mu=0.0 if override is not None else self.leverage_mu,
                curve=override,
            ))
        return np.array(scores, dtype=np.float64)

    def _ad_state(self, pv, clicks, cost, prev: Optional[AdPlatformState]) -> AdPlatformState:
        return AdPlatformState(
            product_ids=tuple(self.target_ids),
            apctr=np.array([p.apctr_ad for p in self.targets], dtype=np.float64),
            apcvr=np.array([p.apcvr_ad for p in self.targets], dtype=np.float64),
            bid=np.array([p.bid for p in self.targets], dtype=np.float64),
            ppb=np.array([p.ppb for p in self.targets], dtype=np.float64),
            pv_ad=pv,
            click_ad=clicks,
            prev_pv_ad=pv if prev is None else prev.pv_ad,
            prev_click_ad=clicks if prev is None else prev.click_ad,
            cost=cost,
        )

    def reset(self, seed: int = 0) -> MarketState:
        """
        Start an episode.

        The initial state holds the statistics of a warm-up window under manual
        bids; both rollouts start from the scores that warm-up produces.
        """
        self.seed = int(seed)
        self.t = 0
        self.done = False
        self.info = None
        k = self.n_targets

        rng = window_rng(self.seed, -1, RESET_STREAM)
        initial = np.array([p.initial_score for p in self.targets], dtype=np.float64)
        jitter = rng.uniform(-1.0, 1.0, size=k) * self.score_jitter
        initial_scores = np.clip(initial + jitter, 0.0, 1.0)

        pv_ad, click_ad, cost = self._advertise(np.zeros(k), window=-1)
        pv_rec, click_rec = self._recommend(initial_scores, window=-1)

        self._scores = self._next_scores(pv_rec, pv_ad)
        self._baseline_scores = self._scores.copy()
        self.state = MarketState(
            o=self._ad_state(pv_ad, click_ad, cost, None),
            x=RecPlatformState(
                pv_rec=pv_rec, click_rec=click_rec,
                prev_pv_rec=pv_rec, prev_click_rec=click_rec,
                z=initial_scores,
            ),
            t=0,
        )
        if self.episode_log is not None:
            self.episode_log.add_warmup(self.target_ids, self.state, self._scores)
        logger.debug(f"Environment reset with seed {self.seed}")
        return self.state

    def step(self, action) -> tuple[MarketState, float, bool]:
        """
        Advance one window.

        Args:
            action: Bid adjust ratio per target product

        Returns:
            Tuple of (next_state, reward, done)

        Raises:
            MarketError: If the episode is finished or the action has the wrong size
        """
        if self.state is None or self.done:
            raise MarketError("Episode is finished; call reset() first")
        alphas = np.clip(np.asarray(action, dtype=np.float64).reshape(-1), -self.range, self.range)
        if alphas.size != self.n_targets:
            raise MarketError(f"Action has {alphas.size} entries, expected {self.n_targets}")

        t = self.t
        pv_ad, click_ad, cost = self._advertise(alphas, window=t)
        pv_rec, click_rec = self._recommend(self._scores, window=t)
        if not np.any(alphas) and np.array_equal(self._scores, self._baseline_scores):
            base_pv_ad, base_pv_rec = pv_ad, pv_rec
        else:
            base_pv_ad = self._advertise(np.zeros(self.n_targets), window=t)[0]
            base_pv_rec = self._recommend(self._baseline_scores, window=t)[0]

        increments = pv_rec - base_pv_rec
        etas = reward_weights(increments, self.reward_weighting)
        reward = compute_reward(increments, etas)

        prev = self.state
        window_scores = self._scores
        self._scores = self._next_scores(pv_rec, pv_ad)
        self._baseline_scores = self._next_scores(base_pv_rec, base_pv_ad)

        self.t = t + 1
        self.done = self.t >= self.horizon
        self.state = MarketState(
            o=self._ad_state(pv_ad, click_ad, cost, prev.o),
            x=RecPlatformState(
                pv_rec=pv_rec, click_rec=click_rec,
                prev_pv_rec=prev.x.pv_rec, prev_click_rec=prev.x.click_rec,
                z=window_scores,
            ),
            t=self.t,
        )
        self.info = StepInfo(
            alphas=alphas,
            increments=increments,
            weighted_increments=etas * increments,
            business_pv=pv_ad,
            business_pv_baseline=base_pv_ad,
            organic_pv=pv_rec,
            organic_pv_baseline=base_pv_rec,
            cost=cost,
            next_scores=self._scores.copy(),
        )
        if self.episode_log is not None:
            self.episode_log.add_step(t, self.target_ids, self.state, self.info)
        return self.state, reward, self.done

    def assemble_state(self, product_id: int, normalize: bool = True) -> np.ndarray:
        """
        Feature vector of one target product in the current state.

        Raises:
            MarketError: If the product is not a target or no episode is running
        """
        if self.state is None:
            raise MarketError("No current state; call reset() first")
        ids = self.target_ids
        if product_id not in ids:
            raise MarketError(f"Unknown target product: {product_id}")
        row = state_features(self.state)[ids.index(product_id)]
        return self.normalizer.transform(row) if normalize else row
