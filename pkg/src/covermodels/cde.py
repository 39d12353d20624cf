"""Online conditional density estimation on kd tree covers.

The covariate space is carved by an occupancy driven kd tree; each
context carries a small Bayesian mixture over density models for y
(Normal-Wishart, dyadic Bayes tree, or both). The exact cover model
posterior then blends coarse and fine contexts per query, so estimates
start smooth and sharpen where data accumulates, in O(depth) per
update with no refitting.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .covers import Box, KdTreeCover
from .engine import CoverModelPosterior
from .errors import BadConfig
from .local import BayesTreeDensity, MixtureLocal, NormalWishart

_COMPONENTS = ("nw", "tree")


@dataclass
class CdeConfig:
    """Configuration for ``CdeModel``.

    x bounds are required (queries outside are clamped or rejected per
    ``on_outside``). y bounds are required by the "tree" component and,
    when present, centre the Normal-Wishart prior mean.
    """

    x_lower: list
    x_upper: list
    y_lower: list | None = None
    y_upper: list | None = None
    y_dim: int | None = None
    alpha: float = 2.0
    depth_weight: str = "2^-k"
    components: tuple = ("nw", "tree")
    max_depth_x: int = 24
    on_outside: str = "clamp"
    tree_max_depth: int = 12
    tree_gamma: float = 0.5
    tree_branch_pseudo: float = 0.5
    nw_kappa0: float = 1.0
    nw_nu0: float | None = None
    nw_scale: float = 1.0
    mixture_weights: list | None = None

    def validate(self):
        if self.alpha <= 1.0:
            raise BadConfig("alpha must exceed 1")
        comps = tuple(self.components)
        if not comps or any(c not in _COMPONENTS for c in comps):
            raise BadConfig(f"components must be a nonempty subset of {_COMPONENTS}")
        if len(set(comps)) != len(comps):
            raise BadConfig("components must not repeat")
        has_ybox = self.y_lower is not None and self.y_upper is not None
        if "tree" in comps and not has_ybox:
            raise BadConfig("the tree component needs y bounds")
        if not has_ybox and self.y_dim is None:
            raise BadConfig("need y bounds or y_dim")
        if has_ybox:
            ybox = Box(self.y_lower, self.y_upper)
            if self.y_dim is not None and self.y_dim != ybox.dim:
                raise BadConfig("y_dim disagrees with y bounds")
        Box(self.x_lower, self.x_upper)
        if self.mixture_weights is not None and len(self.mixture_weights) != len(comps):
            raise BadConfig("mixture_weights length must match components")
        if self.max_depth_x < 1:
            raise BadConfig("max_depth_x must be at least 1")
        return self

    @classmethod
    def from_data(cls, x, y, pad=0.05, **overrides):
        """Bounds from data extents, widened by ``pad`` per side."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))

        def bounds(arr):
            lo = arr.min(axis=0)
            hi = arr.max(axis=0)
            span = np.where(hi > lo, hi - lo, 1.0)
            return (lo - pad * span).tolist(), (hi + pad * span).tolist()

        xlo, xhi = bounds(x)
        ylo, yhi = bounds(y)
        kw = dict(x_lower=xlo, x_upper=xhi, y_lower=ylo, y_upper=yhi)
        kw.update(overrides)
        return cls(**kw)


class CdeModel:
    """Streaming conditional density estimator p(y | x)."""

    def __init__(self, config: CdeConfig):
        self.config = config.validate()
        cover = KdTreeCover(
            Box(config.x_lower, config.x_upper),
            alpha=config.alpha,
            max_depth=config.max_depth_x,
            on_outside=config.on_outside,
        )
        self.posterior = CoverModelPosterior(
            cover, self._make_local, depth_weight=config.depth_weight
        )

    def _make_local(self, depth, region):
        cfg = self.config
        has_ybox = cfg.y_lower is not None and cfg.y_upper is not None
        if has_ybox:
            ybox = Box(cfg.y_lower, cfg.y_upper)
            mu0 = ybox.center
        else:
            mu0 = np.zeros(cfg.y_dim)
        comps = []
        for name in cfg.components:
            if name == "nw":
                comps.append(
                    NormalWishart(
                        mu0, kappa0=cfg.nw_kappa0, nu0=cfg.nw_nu0, scale=cfg.nw_scale
                    )
                )
            else:
                comps.append(
                    BayesTreeDensity(
                        cfg.y_lower,
                        cfg.y_upper,
                        gamma=cfg.tree_gamma,
                        branch_pseudo=cfg.tree_branch_pseudo,
                        max_depth=cfg.tree_max_depth,
                    )
                )
        if len(comps) == 1:
            return comps[0]
        lw = None
        if cfg.mixture_weights is not None:
            lw = np.log(np.asarray(cfg.mixture_weights, dtype=float))
        return MixtureLocal(comps, lw)

    # thin delegation; the engine owns all the state

    def predict_logdensity(self, x, y) -> float:
        return self.posterior.predict_logdensity(x, y)

    def absorb(self, x, y) -> float:
        return self.posterior.absorb(x, y)

    def fit_stream(self, x, y) -> np.ndarray:
        """Absorb rows in order; returns each pre-update log predictive."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if x.shape[0] != y.shape[0]:
            raise BadConfig("x and y row counts differ")
        return np.array([self.absorb(x[i], y[i]) for i in range(x.shape[0])])

    def sample_y(self, x, rng):
        return self.posterior.sample_y(x, rng)

    @property
    def n_obs(self) -> int:
        return self.posterior.n_obs

    @property
    def refinement_depth(self) -> int:
        return self.posterior.cover.refinement_depth

    @property
    def n_contexts(self) -> int:
        return self.posterior.cover.n_contexts

    def to_text(self) -> str:
        cfg = asdict(self.config)
        cfg["components"] = list(self.config.components)
        meta = {"kind": "cde", "config": cfg}
        return json.dumps(meta, sort_keys=True) + "\n" + self.posterior.to_text()

    @classmethod
    def from_text(cls, text) -> "CdeModel":
        head, _, rest = text.partition("\n")
        meta = json.loads(head)
        if meta.get("kind") != "cde":
            raise BadConfig("not a cde snapshot")
        cfg = dict(meta["config"])
        cfg["components"] = tuple(cfg["components"])
        obj = cls.__new__(cls)
        obj.config = CdeConfig(**cfg).validate()
        obj.posterior = CoverModelPosterior.from_text(rest, obj._make_local)
        return obj


def new_cde(x_lower, x_upper, y_lower=None, y_upper=None, **kw) -> CdeModel:
    return CdeModel(
        CdeConfig(
            x_lower=list(x_lower),
            x_upper=list(x_upper),
            y_lower=None if y_lower is None else list(y_lower),
            y_upper=None if y_upper is None else list(y_upper),
            **kw,
        )
    )
