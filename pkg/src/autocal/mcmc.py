"""Multi-chain adaptive random-walk Metropolis sampling of the posterior.

Chains move jointly in (canonical theta, log s^2). A global proposal scale
is tuned toward a target acceptance rate by Robbins-Monro updates during
burn-in and frozen afterwards, so retained draws target the exact
posterior. The scales are sampled on the log axis with the Jacobian term
included, making the sampled law the posterior over s^2 itself.
"""

from dataclasses import dataclass

import numpy as np

from autocal.validation import as_2d


@dataclass(frozen=True)
class McmcConfig:
    n_chains: int = 200
    n_samples_per_chain: int = 8000
    burn_in: int = 5000
    thin: int = 10
    init_split: float = 0.5
    seed: int = 0
    target_acceptance: float = 0.234

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("need at least one chain")
        if not 0 <= self.burn_in < self.n_samples_per_chain:
            raise ValueError("burn_in must be smaller than n_samples_per_chain")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if not 0.0 <= self.init_split <= 1.0:
            raise ValueError("init_split must lie in [0, 1]")
        if not 0.0 < self.target_acceptance < 1.0:
            raise ValueError("target_acceptance must lie in (0, 1)")

    @property
    def retained_per_chain(self):
        return (self.n_samples_per_chain - self.burn_in) // self.thin


@dataclass(frozen=True)
class PosteriorSamples:
    """Thinned multi-chain posterior draws with acceptance statistics.

    ``draws`` columns are theta in physical units followed by the per-field
    scales s^2; ``names`` labels the columns.
    """

    draws: np.ndarray
    chain_ids: np.ndarray
    acceptance_rates: np.ndarray
    names: tuple
    space: object = None

    def __post_init__(self):
        draws = as_2d(self.draws, "draws", cols=len(self.names))
        chain_ids = np.asarray(self.chain_ids, dtype=int)
        if chain_ids.shape != (draws.shape[0],):
            raise ValueError("chain_ids must label every draw")
        if self.space is not None:
            d = self.space.dimension
            theta = draws[:, :d]
            if np.any(theta < self.space.lower - 1e-12 * self.space.span) or np.any(
                theta > self.space.upper + 1e-12 * self.space.span
            ):
                raise ValueError("theta draws fall outside the parameter bounds")
            if np.any(draws[:, d:] <= 0):
                raise ValueError("scale draws must be positive")
        object.__setattr__(self, "draws", draws)
        object.__setattr__(self, "chain_ids", chain_ids)

    @property
    def n_chains(self):
        return int(self.acceptance_rates.shape[0])

    def quantile_summary(self, levels=(0.16, 0.50, 0.84)):
        qs = np.quantile(self.draws, levels, axis=0)
        return {f"q{int(round(100 * lv))}": qs[i] for i, lv in enumerate(levels)}


def _run_single_chain(log_prob, x0, lp0, config, rng, base_widths):
    """One adaptive random-walk chain; returns (retained draws, acceptance)."""
    dim = x0.shape[0]
    total = config.n_samples_per_chain
    burn = config.burn_in
    n_keep = config.retained_per_chain
    kept = np.empty((n_keep, dim))
    increments = rng.standard_normal((total, dim))
    log_unif = np.log(rng.random(total))
    x = x0.copy()
    lp = lp0
    log_scale = np.log(2.38 / np.sqrt(dim))
    accepted_post = 0
    kept_i = 0
    for t in range(total):
        step = np.exp(log_scale) * base_widths * increments[t]
        proposal = x + step
        lp_prop = log_prob(proposal)
        if lp_prop - lp >= 0.0:
            alpha = 1.0
        else:
            alpha = np.exp(lp_prop - lp)
        if log_unif[t] < lp_prop - lp:
            x = proposal
            lp = lp_prop
            if t >= burn:
                accepted_post += 1
        if t < burn:
            gamma = (t + 1.0) ** -0.6
            log_scale += gamma * (alpha - config.target_acceptance)
        offset = t + 1 - burn
        if offset > 0 and offset % config.thin == 0:
            kept[kept_i] = x
            kept_i += 1
    denom = max(total - burn, 1)
    return kept[:kept_i], accepted_post / denom


def run_chains_target(log_prob, init_points, config, base_widths=None):
    """Sample an arbitrary log-density with the multi-chain protocol.

    This is the bare engine behind :func:`run_chains`; tests drive it with
    known targets. Returns (draws, chain_ids, acceptance_rates) with draws
    merged in chain order.
    """
    inits = as_2d(init_points, "init_points")
    if inits.shape[0] != config.n_chains:
        raise ValueError("need one initial point per chain")
    dim = inits.shape[1]
    widths = np.ones(dim) if base_widths is None else np.asarray(base_widths, dtype=float)
    all_draws = []
    all_ids = []
    rates = np.empty(config.n_chains)
    for c in range(config.n_chains):
        rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), c]))
        x0 = inits[c]
        lp0 = log_prob(x0)
        if not np.isfinite(lp0):
            raise ValueError(f"chain {c}: initial point has non-finite log density")
        draws, rate = _run_single_chain(log_prob, x0, lp0, config, rng, widths)
        all_draws.append(draws)
        all_ids.append(np.full(draws.shape[0], c))
        rates[c] = rate
    return np.vstack(all_draws), np.concatenate(all_ids), rates


def run_chains(loss, design, config=None):
    """Sample the joint posterior over (theta, s^2) with multiple chains.

    Half the chains (per ``init_split``) start at seeded random rows of the
    design, the rest uniformly in the box; scales start at their profiled
    values. Proposals leaving the theta box are rejected through the
    uniform prior's support.
    """
    config = config or McmcConfig()
    space = loss.surrogate.space
    d = space.dimension
    free = loss.free_mask
    n_free = int(free.sum())
    fixed = loss.fixed_scales

    def log_prob(x):
        z = x[:d]
        if np.any(np.abs(z) > 1.0):
            return -np.inf
        s_sq = fixed.copy()
        with np.errstate(over="ignore"):
            s_sq[free] = np.exp(x[d:])
        if not np.all(np.isfinite(s_sq)) or np.any(s_sq <= 0):
            return -np.inf
        theta = space.from_canonical(z)
        lp = loss.log_likelihood(theta, s_sq) + loss.log_prior_scales(s_sq)
        return lp + float(np.sum(x[d:]))

    n_from_design = int(round(config.init_split * config.n_chains))
    inits = np.empty((config.n_chains, d + n_free))
    design_values = design.values if design is not None else None
    for c in range(config.n_chains):
        rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), c, 7]))
        for attempt in range(10):
            if c < n_from_design and design_values is not None:
                row = int(rng.integers(0, design_values.shape[0]))
                theta0 = design_values[row]
                z0 = space.to_canonical(theta0)
            else:
                z0 = rng.uniform(-1.0, 1.0, d)
                theta0 = space.from_canonical(z0)
            s0 = loss.profile_scales(theta0)
            x0 = np.concatenate([z0, np.log(s0[free])])
            if np.isfinite(log_prob(x0)):
                inits[c] = x0
                break
        else:
            raise ValueError(f"chain {c}: no finite starting point after 10 attempts")

    widths = np.concatenate([np.full(d, 0.1), np.full(n_free, 0.1)])
    raw, chain_ids, rates = run_chains_target(log_prob, inits, config, base_widths=widths)

    draws = np.empty((raw.shape[0], d + loss.n_fields))
    for i in range(raw.shape[0]):
        draws[i, :d] = space.from_canonical(raw[i, :d])
    s_cols = np.tile(fixed, (raw.shape[0], 1))
    s_cols[:, free] = np.exp(raw[:, d:])
    draws[:, d:] = s_cols
    names = tuple(space.names) + tuple(f"s_sq[{k}]" for k in loss.schema.keys)
    return PosteriorSamples(
        draws=draws,
        chain_ids=chain_ids,
        acceptance_rates=rates,
        names=names,
        space=space,
    )


def rhat(samples, chain_ids=None):
    """Split-chain potential scale reduction factor per coordinate."""
    if isinstance(samples, PosteriorSamples):
        draws, chain_ids = samples.draws, samples.chain_ids
    else:
        draws = as_2d(samples, "draws")
        if chain_ids is None:
            raise ValueError("chain_ids required when passing a raw draw matrix")
        chain_ids = np.asarray(chain_ids, dtype=int)
    labels = np.unique(chain_ids)
    if labels.size < 2:
        raise ValueError("split R-hat needs at least two chains")
    sequences = []
    for c in labels:
        chain = draws[chain_ids == c]
        if chain.shape[0] < 10:
            raise ValueError("split R-hat needs at least 10 retained draws per chain")
        half = chain.shape[0] // 2
        sequences.append(chain[:half])
        sequences.append(chain[half : 2 * half])
    length = min(s.shape[0] for s in sequences)
    stacked = np.stack([s[:length] for s in sequences])  # (M, L, dim)
    means = stacked.mean(axis=1)
    grand = means.mean(axis=0)
    m_seq = stacked.shape[0]
    between = length / (m_seq - 1) * np.sum((means - grand) ** 2, axis=0)
    within = stacked.var(axis=1, ddof=1).mean(axis=0)
    out = np.empty(draws.shape[1])
    for i in range(draws.shape[1]):
        if within[i] > 0:
            var_plus = (length - 1) / length * within[i] + between[i] / length
            out[i] = float(np.sqrt(var_plus / within[i]))
        else:
            out[i] = 1.0 if between[i] == 0 else np.inf
    return out


def pairwise_summaries(samples, bins=40, references=None):
    """Histogram data behind the posterior pair plots.

    For each theta coordinate: fixed-bin 1-d histograms over the sampled
    range and over the full parameter bounds (both views); for each pair,
    a 2-d histogram over the sampled range. ``references`` maps labels to
    physical theta vectors drawn as markers.
    """
    if samples.draws.shape[0] == 0:
        raise ValueError("no samples to summarize")
    space = samples.space
    d = space.dimension if space is not None else samples.draws.shape[1]
    theta = samples.draws[:, :d]
    names = samples.names[:d]
    refs = {k: np.asarray(v, dtype=float) for k, v in (references or {}).items()}

    def hist1d(x, lo, hi):
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        counts, edges = np.histogram(x, bins=bins, range=(lo, hi))
        return {"counts": counts, "edges": edges}

    out = {"names": names, "marginals": [], "pairs": {}, "references": refs,
           "quantiles": samples.quantile_summary()}
    for i in range(d):
        x = theta[:, i]
        entry = {
            "name": names[i],
            "sampled_range": hist1d(x, float(x.min()), float(x.max())),
        }
        if space is not None:
            entry["full_bounds"] = hist1d(x, float(space.lower[i]), float(space.upper[i]))
        out["marginals"].append(entry)
    for i in range(d):
        for j in range(i + 1, d):
            xi, xj = theta[:, i], theta[:, j]
            lo_i, hi_i = float(xi.min()), float(xi.max())
            lo_j, hi_j = float(xj.min()), float(xj.max())
            if hi_i <= lo_i:
                lo_i, hi_i = lo_i - 0.5, hi_i + 0.5
            if hi_j <= lo_j:
                lo_j, hi_j = lo_j - 0.5, hi_j + 0.5
            counts, xedges, yedges = np.histogram2d(
                xi, xj, bins=bins, range=[[lo_i, hi_i], [lo_j, hi_j]]
            )
            out["pairs"][(i, j)] = {"counts": counts, "xedges": xedges, "yedges": yedges}
    return out
