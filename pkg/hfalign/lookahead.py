"""
Lookahead optimizer wrapper.

Every ``k`` steps of the wrapped (inner) optimizer, the slow weights move a
fraction ``alpha`` of the way toward the fast weights, and the fast weights
restart from there.
"""
from __future__ import annotations

# std imports
from collections import defaultdict

# 3rd party
import torch
from torch.optim import Optimizer

# local
from .exceptions import ConfigError


class Lookahead(Optimizer):
    """
    Wrap ``optimizer`` with lookahead interpolation.

    :param torch.optim.Optimizer optimizer: inner optimizer producing fast weights.
    :param int k: inner steps between synchronizations, ``>= 1``.
    :param float alpha: slow-step size in ``(0, 1]``.  With ``alpha == 1`` the
        slow weights take the fast weights verbatim, so ``k=1, alpha=1`` follows
        the inner optimizer's trajectory bit for bit.
    """

    # pylint: disable=super-init-not-called
    def __init__(self, optimizer: Optimizer, k: int = 5, alpha: float = 0.5):
        if not 0.0 < alpha <= 1.0:
            raise ConfigError(f'lookahead alpha must be in (0, 1], got {alpha!r}')
        if k < 1:
            raise ConfigError(f'lookahead k must be >= 1, got {k!r}')
        self.optimizer = optimizer
        self.k = k
        self.alpha = alpha
        self.counter = 0
        self.param_groups = optimizer.param_groups
        self.defaults = optimizer.defaults
        self.state = defaultdict(dict)
        self.slow_weights = [[param.detach().clone() for param in group['params']]
                             for group in self.param_groups]

    def __repr__(self):
        return f'Lookahead(k={self.k}, alpha={self.alpha}, optimizer={self.optimizer!r})'

    @torch.no_grad()
    def sync(self) -> None:
        """Interpolate slow weights toward fast weights, reset fast to slow."""
        for group, slow_group in zip(self.param_groups, self.slow_weights):
            for param, slow in zip(group['params'], slow_group):
                if self.alpha == 1.0:
                    slow.copy_(param)
                else:
                    slow.add_(param - slow, alpha=self.alpha)
                param.copy_(slow)

    def step(self, closure=None):
        loss = self.optimizer.step(closure)
        self.counter += 1
        if self.counter >= self.k:
            self.sync()
            self.counter = 0
        return loss

    def zero_grad(self, set_to_none: bool = True) -> None:
        self.optimizer.zero_grad(set_to_none=set_to_none)

    def state_dict(self) -> dict:
        return {'inner': self.optimizer.state_dict(), 'counter': self.counter,
                'k': self.k, 'alpha': self.alpha,
                'slow_weights': [[slow.clone() for slow in group] for group in self.slow_weights]}

    def load_state_dict(self, state_dict: dict) -> None:
        self.optimizer.load_state_dict(state_dict['inner'])
        self.counter = state_dict['counter']
        self.k = state_dict['k']
        self.alpha = state_dict['alpha']
        with torch.no_grad():
            for group, saved in zip(self.slow_weights, state_dict['slow_weights']):
                for slow, value in zip(group, saved):
                    slow.copy_(value)
