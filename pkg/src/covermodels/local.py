"""Local observation models attached to contexts.

Each local model is a conjugate (or conjugate-mixture) Bayesian model
of the observations that land in one context. The shared duck type:

* ``log_predictive(y, x=None)``: log posterior predictive density or
  mass at y. ``x`` is accepted for interface uniformity and ignored by
  the models here.
* ``update(y, x=None)``: absorb one observation.
* ``sample(rng)``: draw y from the posterior predictive.
* ``state_dict()`` / ``local_from_state``: plain-data round trip.

All are exchangeable in y, so sequential products of predictives equal
batch marginal likelihoods, which the exact posterior engine relies on.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.special import betaln, gammaln, logsumexp

from .errors import BadConfig, OutOfSupport, UnknownSymbol

LOG_2PI = math.log(2.0 * math.pi)


class DirichletMultinomial:
    """Dirichlet prior over a finite alphabet.

    concentration 0.5 gives the Krichevsky-Trofimov estimator, 1.0 the
    Laplace rule.
    """

    def __init__(self, alphabet_size: int, concentration=0.5):
        if alphabet_size < 2:
            raise BadConfig("alphabet_size must be at least 2")
        alpha = np.asarray(concentration, dtype=float)
        if alpha.ndim == 0:
            alpha = np.full(alphabet_size, float(alpha))
        if alpha.shape != (alphabet_size,) or np.any(alpha <= 0):
            raise BadConfig("concentration must be positive, scalar or length n")
        self.alpha = alpha
        self.counts = np.zeros(alphabet_size, dtype=float)

    @property
    def alphabet_size(self):
        return self.alpha.shape[0]

    def _check(self, y) -> int:
        # item() also unwraps the size-1 arrays replayed blocks arrive as
        y = int(np.asarray(y).item())
        if not 0 <= y < self.alphabet_size:
            raise UnknownSymbol(y, self.alphabet_size)
        return y

    def log_predictive(self, y, x=None) -> float:
        y = self._check(y)
        a = self.alpha + self.counts
        return float(np.log(a[y]) - np.log(a.sum()))

    def update(self, y, x=None):
        self.counts[self._check(y)] += 1.0

    def sample(self, rng):
        a = self.alpha + self.counts
        return int(rng.choice(self.alphabet_size, p=a / a.sum()))

    def state_dict(self):
        return {
            "kind": "dirichlet",
            "alpha": self.alpha.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_state(cls, state):
        obj = cls(len(state["alpha"]), np.asarray(state["alpha"]))
        obj.counts = np.asarray(state["counts"], dtype=float)
        return obj


class NormalWishart:
    """Normal-Wishart conjugate model for vector observations.

    Prior: precision ~ Wishart(nu0, T0^-1), mean | precision ~
    Normal(mu0, (kappa0 * precision)^-1). The posterior predictive is a
    multivariate Student t with nu_n - m + 1 degrees of freedom.
    """

    def __init__(self, mu0, kappa0=1.0, nu0=None, scale=None):
        mu0 = np.atleast_1d(np.asarray(mu0, dtype=float))
        m = mu0.shape[0]
        if nu0 is None:
            nu0 = m + 2.0
        if scale is None:
            scale = np.eye(m)
        scale = np.asarray(scale, dtype=float)
        if scale.ndim == 0:
            scale = float(scale) * np.eye(m)
        if kappa0 <= 0:
            raise BadConfig("kappa0 must be positive")
        if nu0 <= m - 1:
            raise BadConfig("nu0 must exceed dim - 1")
        if scale.shape != (m, m):
            raise BadConfig("scale matrix has wrong shape")
        self.mu0 = mu0
        self.kappa0 = float(kappa0)
        self.nu0 = float(nu0)
        self.T0 = scale
        self.dim = m
        self.n = 0
        self.sum_y = np.zeros(m)
        self.sum_yy = np.zeros((m, m))
        self._cache = None

    def _as_obs(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if y.shape != (self.dim,):
            raise BadConfig(f"observation has shape {y.shape}, expected ({self.dim},)")
        return y

    def posterior_params(self):
        kn = self.kappa0 + self.n
        vn = self.nu0 + self.n
        if self.n == 0:
            return self.mu0, kn, vn, self.T0.copy()
        ybar = self.sum_y / self.n
        mun = (self.kappa0 * self.mu0 + self.sum_y) / kn
        scatter = self.sum_yy - self.n * np.outer(ybar, ybar)
        shift = (self.kappa0 * self.n / kn) * np.outer(ybar - self.mu0, ybar - self.mu0)
        return mun, kn, vn, self.T0 + scatter + shift

    def _refresh(self):
        if self._cache is not None:
            return self._cache
        mun, kn, vn, Tn = self.posterior_params()
        df = vn - self.dim + 1.0
        sigma = Tn * (kn + 1.0) / (kn * df)
        # symmetrise before factoring; scatter accumulation is not exact
        sigma = 0.5 * (sigma + sigma.T)
        chol = np.linalg.cholesky(sigma)
        logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
        const = (
            gammaln(0.5 * (df + self.dim))
            - gammaln(0.5 * df)
            - 0.5 * self.dim * math.log(df * math.pi)
            - 0.5 * logdet
        )
        self._cache = (mun, df, chol, const)
        return self._cache

    def log_predictive(self, y, x=None) -> float:
        y = self._as_obs(y)
        mun, df, chol, const = self._refresh()
        u = np.linalg.solve(chol, y - mun)
        q = float(u @ u)
        return float(const - 0.5 * (df + self.dim) * math.log1p(q / df))

    def update(self, y, x=None):
        y = self._as_obs(y)
        self.n += 1
        self.sum_y += y
        self.sum_yy += np.outer(y, y)
        self._cache = None

    def sample(self, rng):
        mun, df, chol, _ = self._refresh()
        z = rng.standard_normal(self.dim)
        u = rng.chisquare(df)
        y = mun + (chol @ z) / math.sqrt(u / df)
        return y if self.dim > 1 else float(y[0])

    def state_dict(self):
        return {
            "kind": "normal_wishart",
            "mu0": self.mu0.tolist(),
            "kappa0": self.kappa0,
            "nu0": self.nu0,
            "T0": self.T0.tolist(),
            "n": self.n,
            "sum_y": self.sum_y.tolist(),
            "sum_yy": self.sum_yy.tolist(),
        }

    @classmethod
    def from_state(cls, state):
        obj = cls(
            np.asarray(state["mu0"]),
            kappa0=state["kappa0"],
            nu0=state["nu0"],
            scale=np.asarray(state["T0"]),
        )
        obj.n = int(state["n"])
        obj.sum_y = np.asarray(state["sum_y"], dtype=float)
        obj.sum_yy = np.asarray(state["sum_yy"], dtype=float)
        return obj


class HistogramDensity:
    """Piecewise constant density on fixed bins with a Dirichlet prior."""

    def __init__(self, edges, concentration=1.0):
        edges = np.asarray(edges, dtype=float)
        if edges.ndim != 1 or edges.shape[0] < 2 or np.any(np.diff(edges) <= 0):
            raise BadConfig("edges must be strictly increasing, length >= 2")
        if concentration <= 0:
            raise BadConfig("concentration must be positive")
        self.edges = edges
        self.alpha = float(concentration)
        self.counts = np.zeros(edges.shape[0] - 1, dtype=float)

    def _bin(self, y):
        y = float(np.asarray(y).reshape(()))
        if y < self.edges[0] or y > self.edges[-1]:
            return None
        i = int(np.searchsorted(self.edges, y, side="right") - 1)
        return min(i, self.counts.shape[0] - 1)  # top edge closed

    def log_predictive(self, y, x=None) -> float:
        i = self._bin(y)
        if i is None:
            return -np.inf
        a = self.counts + self.alpha
        width = self.edges[i + 1] - self.edges[i]
        return float(np.log(a[i]) - np.log(a.sum()) - np.log(width))

    def update(self, y, x=None):
        i = self._bin(y)
        if i is None:
            raise OutOfSupport(f"{y!r} outside histogram support")
        self.counts[i] += 1.0

    def sample(self, rng):
        a = self.counts + self.alpha
        i = rng.choice(a.shape[0], p=a / a.sum())
        return float(rng.uniform(self.edges[i], self.edges[i + 1]))

    def state_dict(self):
        return {
            "kind": "histogram",
            "edges": self.edges.tolist(),
            "alpha": self.alpha,
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_state(cls, state):
        obj = cls(np.asarray(state["edges"]), state["alpha"])
        obj.counts = np.asarray(state["counts"], dtype=float)
        return obj


def _fresh_node():
    return {"n": 0, "kids": None, "loglam": 0.0}


class BayesTreeDensity:
    """Dyadic tree density on a box.

    Every node mixes "points here are uniform on my box" (weight gamma)
    against "split at the midpoint of my largest side and send points
    to the children with Beta-distributed proportions" (weight
    1 - gamma). Counts are the only state; the per-node mixture value

        lam = gamma * vol^-n
            + (1 - gamma) * B(a + nL, a + nR) / B(a, a) * lam_L * lam_R

    is cached in log space. Nodes at ``max_depth`` are forced uniform.
    Volumes halve per level, so vol at depth k is vol(root) / 2^k.
    """

    def __init__(self, lower, upper, gamma=0.5, branch_pseudo=0.5, max_depth=12):
        from .covers import Box

        self.box = Box(lower, upper)
        if not 0 < gamma < 1:
            raise BadConfig("gamma must be strictly between 0 and 1")
        if branch_pseudo <= 0:
            raise BadConfig("branch_pseudo must be positive")
        if max_depth < 0:
            raise BadConfig("max_depth must be nonnegative")
        self.gamma = float(gamma)
        self.branch_pseudo = float(branch_pseudo)
        self.max_depth = int(max_depth)
        self._root = _fresh_node()
        self._log_vol0 = math.log(self.box.volume())
        self._log_beta0 = betaln(self.branch_pseudo, self.branch_pseudo)

    def _log_vol(self, depth):
        return self._log_vol0 - depth * math.log(2.0)

    def _route(self, y, lo, hi):
        """Split (lo, hi) in place, return 0 or 1 for the side holding y."""
        d = int(np.argmax(hi - lo))
        mid = 0.5 * (lo[d] + hi[d])
        if y[d] < mid:
            hi[d] = mid
            return 0
        lo[d] = mid
        return 1

    def _obs(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if y.shape != (self.box.dim,):
            raise BadConfig(f"observation has shape {y.shape}, expected ({self.box.dim},)")
        return y

    def update(self, y, x=None):
        y = self._obs(y)
        if not self.box.contains(y, closed=True):
            raise OutOfSupport(f"{y!r} outside {self.box!r}")
        lo = self.box.lower.copy()
        hi = self.box.upper.copy()
        node = self._root
        path = [node]
        for _ in range(self.max_depth):
            if node["kids"] is None:
                node["kids"] = [_fresh_node(), _fresh_node()]
            node = node["kids"][self._route(y, lo, hi)]
            path.append(node)
        for node in path:
            node["n"] += 1
        a = self.branch_pseudo
        for depth in range(self.max_depth, -1, -1):
            node = path[depth]
            if depth == self.max_depth:
                node["loglam"] = -node["n"] * self._log_vol(depth)
            else:
                kl, kr = node["kids"]
                node["loglam"] = np.logaddexp(
                    math.log(self.gamma) - node["n"] * self._log_vol(depth),
                    math.log1p(-self.gamma)
                    + betaln(a + kl["n"], a + kr["n"])
                    - self._log_beta0
                    + kl["loglam"]
                    + kr["loglam"],
                )

    def log_predictive(self, y, x=None) -> float:
        y = self._obs(y)
        if not self.box.contains(y, closed=True):
            return -np.inf
        lo = self.box.lower.copy()
        hi = self.box.upper.copy()
        # simulate the would-be update and return the evidence ratio
        node = self._root
        path = [node]
        sides = []
        for _ in range(self.max_depth):
            kids = None if node is None else node["kids"]
            side = self._route(y, lo, hi)
            sides.append(side)
            node = kids[side] if kids is not None else None
            path.append(node)
        a = self.branch_pseudo
        new = 0.0
        for depth in range(self.max_depth, -1, -1):
            node = path[depth]
            n = 0 if node is None else node["n"]
            if depth == self.max_depth:
                new = -(n + 1) * self._log_vol(depth)
                continue
            kids = None if node is None else node["kids"]
            if kids is None:
                nl = nr = 0
                other = 0.0
            else:
                nl, nr = kids[0]["n"], kids[1]["n"]
                other = kids[1 - sides[depth]]["loglam"]
            if sides[depth] == 0:
                nl += 1
            else:
                nr += 1
            new = np.logaddexp(
                math.log(self.gamma) - (n + 1) * self._log_vol(depth),
                math.log1p(-self.gamma)
                + betaln(a + nl, a + nr)
                - self._log_beta0
                + new
                + other,
            )
        return float(new - self._root["loglam"])

    def sample(self, rng):
        lo = self.box.lower.copy()
        hi = self.box.upper.copy()
        node = self._root
        a = self.branch_pseudo
        for depth in range(self.max_depth):
            stop = math.exp(
                math.log(self.gamma) - node["n"] * self._log_vol(depth) - node["loglam"]
            )
            if rng.uniform() < min(stop, 1.0):
                break
            if node["kids"] is None:
                p_hi = 0.5
            else:
                p_hi = (a + node["kids"][1]["n"]) / (2 * a + node["n"])
            d = int(np.argmax(hi - lo))
            mid = 0.5 * (lo[d] + hi[d])
            if rng.uniform() < p_hi:
                lo[d] = mid
                node = node["kids"][1] if node["kids"] is not None else _fresh_node()
            else:
                hi[d] = mid
                node = node["kids"][0] if node["kids"] is not None else _fresh_node()
        y = rng.uniform(lo, hi)
        return y if self.box.dim > 1 else float(y[0])

    def _strip(self, node):
        if node is None or (node["n"] == 0 and node["kids"] is None):
            return None
        kids = node["kids"]
        out = {"n": node["n"]}
        if kids is not None:
            out["kids"] = [self._strip(kids[0]), self._strip(kids[1])]
        return out

    def state_dict(self):
        return {
            "kind": "bayes_tree",
            "lower": self.box.lower.tolist(),
            "upper": self.box.upper.tolist(),
            "gamma": self.gamma,
            "branch_pseudo": self.branch_pseudo,
            "max_depth": self.max_depth,
            "tree": self._strip(self._root),
        }

    def _rebuild(self, rec, depth):
        node = _fresh_node()
        if rec is None:
            return node
        node["n"] = int(rec["n"])
        if "kids" in rec and rec["kids"] is not None:
            node["kids"] = [
                self._rebuild(rec["kids"][0], depth + 1),
                self._rebuild(rec["kids"][1], depth + 1),
            ]
        a = self.branch_pseudo
        if depth == self.max_depth:
            node["loglam"] = -node["n"] * self._log_vol(depth)
        elif node["kids"] is None:
            node["loglam"] = 0.0  # only empty nodes are serialised without kids
        else:
            kl, kr = node["kids"]
            node["loglam"] = np.logaddexp(
                math.log(self.gamma) - node["n"] * self._log_vol(depth),
                math.log1p(-self.gamma)
                + betaln(a + kl["n"], a + kr["n"])
                - self._log_beta0
                + kl["loglam"]
                + kr["loglam"],
            )
        return node

    @classmethod
    def from_state(cls, state):
        obj = cls(
            np.asarray(state["lower"]),
            np.asarray(state["upper"]),
            gamma=state["gamma"],
            branch_pseudo=state["branch_pseudo"],
            max_depth=state["max_depth"],
        )
        obj._root = obj._rebuild(state["tree"], 0)
        return obj


class MixtureLocal:
    """Finite Bayesian mixture of local models.

    The weight over components is itself updated by Bayes rule using
    each component's predictive for the incoming observation, then the
    components update. A component whose predictive is -inf (outside
    its support) keeps its state and loses all weight on that point.
    """

    def __init__(self, components, log_weights=None):
        if not components:
            raise BadConfig("mixture needs at least one component")
        self.components = list(components)
        k = len(self.components)
        if log_weights is None:
            self.log_w = np.full(k, -math.log(k))
        else:
            lw = np.asarray(log_weights, dtype=float)
            if lw.shape != (k,):
                raise BadConfig("log_weights length must match components")
            self.log_w = lw - logsumexp(lw)
        self._warned_skip = False

    def _component_lps(self, y, x):
        return np.array([c.log_predictive(y, x) for c in self.components])

    def log_predictive(self, y, x=None) -> float:
        return float(logsumexp(self.log_w + self._component_lps(y, x)))

    def update(self, y, x=None):
        lps = self._component_lps(y, x)
        joint = self.log_w + lps
        total = logsumexp(joint)
        if not np.isfinite(total):
            raise OutOfSupport(f"{y!r} outside the support of every component")
        self.log_w = joint - total
        for comp, lp in zip(self.components, lps):
            if np.isfinite(lp):
                comp.update(y, x)
            elif not self._warned_skip:
                warnings.warn(
                    "mixture component skipped an out-of-support observation",
                    RuntimeWarning,
                )
                self._warned_skip = True

    def sample(self, rng):
        k = rng.choice(len(self.components), p=np.exp(self.log_w))
        return self.components[k].sample(rng)

    def state_dict(self):
        return {
            "kind": "mixture",
            "log_w": self.log_w.tolist(),
            "components": [c.state_dict() for c in self.components],
        }

    @classmethod
    def from_state(cls, state):
        comps = [local_from_state(c) for c in state["components"]]
        obj = cls(comps)
        # verbatim, not through __init__: renormalising an already
        # normalised vector can move it by an ulp and break bit-exact
        # snapshot resume
        obj.log_w = np.asarray(state["log_w"], dtype=float)
        return obj


_LOCAL_KINDS = {
    "dirichlet": DirichletMultinomial,
    "normal_wishart": NormalWishart,
    "histogram": HistogramDensity,
    "bayes_tree": BayesTreeDensity,
    "mixture": MixtureLocal,
}


def local_from_state(state):
    kind = state.get("kind")
    if kind not in _LOCAL_KINDS:
        raise BadConfig(f"unknown local model kind {kind!r}")
    return _LOCAL_KINDS[kind].from_state(state)
