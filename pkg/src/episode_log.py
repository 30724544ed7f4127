"""
Episode log module for Leverage Bidder.
Collects per-window product rows of an environment and writes episode.csv / episode.json.
"""

from __future__ import annotations

import os
import logging

import numpy as np

from .market import MarketState, StepInfo
from .storage import write_csv_atomic, write_json_atomic

logger = logging.getLogger(__name__)

FIELDNAMES = [
    't', 'product', 'alpha', 'pv_ad', 'click_ad', 'cost', 'pv_rec', 'click_rec',
    'z', 'z_next', 'reward', 'pv_ad_baseline', 'pv_rec_baseline',
]


def extract_step_rows(t: int, product_ids: list[int], state: MarketState, info: StepInfo) -> list[dict]:
    """
    Flatten one environment step into one row per target product.

    Args:
        t: Window index
        product_ids: Target ids in state order
        state: State observed after the window
        info: Step information of the window

    Returns:
        List of row dictionaries
    """
    rows = []
    for k, product_id in enumerate(product_ids):
        rows.append({
            't': int(t),
            'product': int(product_id),
            'alpha': float(info.alphas[k]),
            'pv_ad': float(state.o.pv_ad[k]),
            'click_ad': float(state.o.click_ad[k]),
            'cost': float(state.o.cost[k]),
            'pv_rec': float(state.x.pv_rec[k]),
            'click_rec': float(state.x.click_rec[k]),
            'z': float(state.x.z[k]),
            'z_next': float(info.next_scores[k]),
            'reward': float(info.weighted_increments[k]),
            'pv_ad_baseline': float(info.business_pv_baseline[k]),
            'pv_rec_baseline': float(info.organic_pv_baseline[k]),
        })
    return rows


class EpisodeLog:
    """
    Window log of environment rollouts.
    Creates episode.csv and episode.json files.
    """

    def __init__(self, output_path: str):
        """
        Initialize episode log.

        Args:
            output_path: Directory receiving the log files
        """
        self.output_path = output_path
        self.rows: list[dict] = []
        self.episode = -1

    def attach(self, env) -> EpisodeLog:
        """Record every step of env from now on."""
        env.episode_log = self
        return self

    def add_warmup(self, product_ids: list[int], state: MarketState, next_scores: np.ndarray) -> None:
        """
        Start a new episode with its warm-up window, logged as t = -1.

        The warm-up runs under manual bids, so baselines equal the observed values.
        """
        self.episode += 1
        for k, product_id in enumerate(product_ids):
            self.rows.append({
                'episode': self.episode,
                't': -1,
                'product': int(product_id),
                'alpha': 0.0,
                'pv_ad': float(state.o.pv_ad[k]),
                'click_ad': float(state.o.click_ad[k]),
                'cost': float(state.o.cost[k]),
                'pv_rec': float(state.x.pv_rec[k]),
                'click_rec': float(state.x.click_rec[k]),
                'z': float(state.x.z[k]),
                'z_next': float(next_scores[k]),
                'reward': 0.0,
                'pv_ad_baseline': float(state.o.pv_ad[k]),
                'pv_rec_baseline': float(state.x.pv_rec[k]),
            })

    def add_step(self, t: int, product_ids: list[int], state: MarketState, info: StepInfo) -> None:
        """Add one environment step to the log."""
        if self.episode < 0:
            self.episode = 0
        for row in extract_step_rows(t, product_ids, state, info):
            row['episode'] = self.episode
            self.rows.append(row)

    def generate_csv(self) -> str:
        """
        Generate episode.csv file.

        Returns:
            Path to generated CSV file
        """
        csv_path = os.path.join(self.output_path, 'episode.csv')
        write_csv_atomic(csv_path, self.rows, ['episode'] + FIELDNAMES)
        logger.info(f"Generated episode.csv with {len(self.rows)} entries")
        return csv_path

    def generate_json(self) -> str:
        """
        Generate episode.json file with statistics and rows.

        Returns:
            Path to generated JSON file
        """
        json_path = os.path.join(self.output_path, 'episode.json')
        write_json_atomic(json_path, {'stats': self.get_stats(), 'rows': self.rows})
        logger.info(f"Generated episode.json with {len(self.rows)} entries")
        return json_path

    def generate_all(self) -> tuple[str, str]:
        """
        Generate both episode.csv and episode.json files.

        Returns:
            Tuple of (csv_path, json_path)
        """
        return self.generate_csv(), self.generate_json()

    def get_stats(self) -> dict:
        """
        Get statistics about logged windows.

        Returns:
            Dictionary with statistics
        """
        products = sorted({row['product'] for row in self.rows})
        totals = {
            key: float(np.sum([row[key] for row in self.rows])) if self.rows else 0.0
            for key in ('pv_ad', 'pv_ad_baseline', 'pv_rec', 'pv_rec_baseline', 'cost', 'reward')
        }
        return {
            'episodes': self.episode + 1,
            'windows': len({(row['episode'], row['t']) for row in self.rows}),
            'products': products,
            'total_rows': len(self.rows),
            'business_increment': totals['pv_ad'] - totals['pv_ad_baseline'],
            'organic_increment': totals['pv_rec'] - totals['pv_rec_baseline'],
            'total_cost': totals['cost'],
            'total_reward': totals['reward'],
        }
