"""Rayleigh fading, mutual information, outage events, and the
finite-state Markov channel model the agent interacts with.

Link indexing convention used throughout: for a network with K relays
there are 2K links. Link k in [0, K) is the source->relay_k hop (n_s
elements, per-element variance h_0 * d_sk^-alpha); link K+k is the
relay_k->destination hop (n_d elements, variance h_0 * d_kd^-alpha).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .config import NetworkConfig
from .seeding import stream


class ModelBuildError(RuntimeError):
    """Markov model construction failed (degenerate quantization bin)."""


def sample_channel(rng: np.random.Generator, variance: float, n: int) -> np.ndarray:
    """Draw one complex Gaussian channel vector of length n.

    Real and imaginary parts are zero-mean with variance `variance`/2
    each, so E||h||^2 = n * variance.
    """
    if not variance > 0:
        raise ValueError(f"variance must be > 0, got {variance}")
    if n < 1:
        raise ValueError(f"vector length must be >= 1, got {n}")
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def gauss_markov_gains(rng: np.random.Generator, variance: float, n: int,
                       rho: float, length: int) -> np.ndarray:
    """Squared-norm trace ||h(t)||^2 of a first-order Gauss-Markov channel.

    h(t) = rho * h(t-1) + sqrt(1 - rho^2) * w(t) with w(t) white complex
    Gaussian; the process starts in stationarity, so every sample has
    per-element variance `variance`.
    """
    if not variance > 0:
        raise ValueError(f"variance must be > 0, got {variance}")
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must be in [0, 1), got {rho}")
    b = [np.sqrt(1.0 - rho * rho)]
    a = [1.0, -rho]
    comp_scale = np.sqrt(0.5)  # unit-variance complex elements, split over re/im
    parts = []
    for _ in range(2):  # real then imaginary component
        white = comp_scale * rng.standard_normal((length, n))
        start = comp_scale * rng.standard_normal(n)
        filtered, _ = lfilter(b, a, white, axis=0, zi=(rho * start)[None, :])
        parts.append(filtered)
    return variance * np.sum(parts[0] ** 2 + parts[1] ** 2, axis=1)


def mutual_information(power, gain, noise):
    """Achievable rate log2(1 + power * gain / noise) in bits/s/Hz.

    Accepts scalars or broadcastable arrays.
    """
    power = np.asarray(power, dtype=float)
    gain = np.asarray(gain, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if np.any(noise <= 0):
        raise ValueError("noise power must be > 0")
    if np.any(power < 0) or np.any(gain < 0):
        raise ValueError("power and gain must be >= 0")
    out = np.log2(1.0 + power * gain / noise)
    return float(out) if out.ndim == 0 else out


def outage_indicator(i_k, i_d, lambda_k, lambda_d, mode: str = "or"):
    """1 when the transmission is in outage, 0 otherwise.

    mode "and": outage only when both hops fall below their thresholds
    (the joint event). mode "or": outage when either hop fails, the
    conventional decode-and-forward semantics.
    """
    i_k = np.asarray(i_k, dtype=float)
    i_d = np.asarray(i_d, dtype=float)
    if np.any(~np.isfinite(i_k)) or np.any(~np.isfinite(i_d)):
        raise ValueError("rates must be finite")
    if np.any(i_k < 0) or np.any(i_d < 0):
        raise ValueError("rates must be >= 0")
    if mode == "and":
        out = (i_k < lambda_k) & (i_d < lambda_d)
    elif mode == "or":
        out = (i_k < lambda_k) | (i_d < lambda_d)
    else:
        raise ValueError(f"mode must be 'and' or 'or', got {mode!r}")
    out = out.astype(int)
    return int(out) if out.ndim == 0 else out


def closed_form_outage(power: float, lam: float, sigma2: float, noise: float) -> float:
    """Exact single-antenna Rayleigh outage probability P(log2(1+p*g/N) < lam)
    when g is exponential with mean sigma2. Test oracle for the simulator."""
    if sigma2 <= 0 or noise <= 0:
        raise ValueError("sigma2 and noise must be > 0")
    if power < 0 or lam < 0:
        raise ValueError("power and lam must be >= 0")
    if lam == 0:
        return 0.0
    if power == 0:
        return 1.0
    threshold = (2.0 ** lam - 1.0) * noise / (power * sigma2)
    return float(1.0 - np.exp(-threshold))


@dataclass
class MarkovChannelModel:
    """Quantized per-link channel states with per-location transition matrices.

    Arrays are indexed [link, location, ...]; see the module docstring for
    the link convention. Rows of `transitions` are stochastic; bins are
    equal-probability with edges [0, q_1, ..., q_{M-1}, inf) and
    `representatives` holds the median gain of each bin.
    """

    n_states: int
    bin_edges: np.ndarray       # (links, locations, M+1)
    transitions: np.ndarray     # (links, locations, M, M)
    representatives: np.ndarray  # (links, locations, M)

    @property
    def n_links(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_locations(self) -> int:
        return self.transitions.shape[1]

    def validate(self) -> None:
        M = self.n_states
        if self.bin_edges.shape[-1] != M + 1 or self.transitions.shape[-2:] != (M, M):
            raise ValueError("model array shapes are inconsistent with n_states")
        row_sums = self.transitions.sum(axis=-1)
        if not np.allclose(row_sums, 1.0, atol=1e-12):
            raise ValueError("transition rows must sum to 1 within 1e-12")
        if np.any(self.transitions < 0) or np.any(self.transitions > 1):
            raise ValueError("transition entries must lie in [0, 1]")
        if np.any(np.diff(self.bin_edges, axis=-1) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        lo, hi = self.bin_edges[..., :-1], self.bin_edges[..., 1:]
        if np.any(self.representatives < lo) or np.any(self.representatives > hi):
            raise ValueError("representatives must lie inside their bins")

    def quantize(self, link: int, location: int, gains) -> np.ndarray:
        """Map gain values to state indices for one (link, location)."""
        edges = self.bin_edges[link, location]
        idx = np.searchsorted(edges, np.asarray(gains, dtype=float), side="right") - 1
        return np.clip(idx, 0, self.n_states - 1)

    def save(self, path: str | Path) -> None:
        save_markov_model(self, path)


def build_markov_model(config: NetworkConfig, d_sk_cand: np.ndarray,
                       d_kd_cand: np.ndarray, M: int, rho: float,
                       sample_budget: int, seed: int = 0) -> MarkovChannelModel:
    """Estimate the finite-state Markov model for every (link, location).

    Simulates a Gauss-Markov fading trace per pair, quantizes gains into M
    equal-probability bins and counts empirical transitions. Rows are
    renormalized to sum to exactly 1.
    """
    if M < 2:
        raise ValueError("M must be >= 2")
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must be in [0, 1)")
    if sample_budget < 10_000:
        raise ValueError("sample_budget must be >= 10000")
    d_sk_cand = np.asarray(d_sk_cand, dtype=float)
    d_kd_cand = np.asarray(d_kd_cand, dtype=float)
    if d_sk_cand.shape != d_kd_cand.shape or d_sk_cand.ndim != 2:
        raise ValueError("candidate distance arrays must both be (K, L)")
    K, L = d_sk_cand.shape
    n_links = 2 * K

    edges = np.zeros((n_links, L, M + 1))
    trans = np.zeros((n_links, L, M, M))
    reps = np.zeros((n_links, L, M))
    for link in range(n_links):
        relay = link % K
        if link < K:
            dist, n_elem = d_sk_cand[relay], config.n_s
        else:
            dist, n_elem = d_kd_cand[relay], config.n_d
        for loc in range(L):
            variance = config.h_0 * dist[loc] ** (-config.alpha)
            rng = stream(seed, "markov-build", link, loc)
            gains = gauss_markov_gains(rng, variance, n_elem, rho, sample_budget)
            interior = np.quantile(gains, np.linspace(0, 1, M + 1)[1:-1])
            e = np.concatenate(([0.0], interior, [np.inf]))
            if np.any(np.diff(e) <= 0):
                bad = int(np.argmin(np.diff(e)))
                raise ModelBuildError(
                    f"degenerate bin {bad} for link {link}, location {loc}")
            states = np.clip(np.searchsorted(e, gains, side="right") - 1, 0, M - 1)
            for i in range(M):
                members = gains[states == i]
                if members.size == 0:
                    raise ModelBuildError(
                        f"empty bin {i} for link {link}, location {loc}")
                reps[link, loc, i] = np.median(members)
            counts = np.zeros((M, M))
            np.add.at(counts, (states[:-1], states[1:]), 1.0)
            row_sums = counts.sum(axis=1)
            if np.any(row_sums == 0):
                bad = int(np.argmin(row_sums))
                raise ModelBuildError(
                    f"no transitions out of bin {bad} for link {link}, location {loc}")
            trans[link, loc] = counts / row_sums[:, None]
            edges[link, loc] = e

    model = MarkovChannelModel(n_states=M, bin_edges=edges,
                               transitions=trans, representatives=reps)
    model.validate()
    return model


# --- portable decimal-text persistence -------------------------------------

_MODEL_FORMAT = "dfrelay-markov-v1"


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(values).ravel())


def save_markov_model(model: MarkovChannelModel, path: str | Path) -> None:
    lines = [_MODEL_FORMAT,
             f"links {model.n_links} locations {model.n_locations} states {model.n_states}"]
    for link in range(model.n_links):
        for loc in range(model.n_locations):
            lines.append(f"edges {link} {loc} " + _fmt(model.bin_edges[link, loc]))
            lines.append(f"reps {link} {loc} " + _fmt(model.representatives[link, loc]))
            for i in range(model.n_states):
                lines.append(f"row {link} {loc} {i} " + _fmt(model.transitions[link, loc, i]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_markov_model(path: str | Path) -> MarkovChannelModel:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != _MODEL_FORMAT:
        found = lines[0] if lines else "<empty>"
        raise ValueError(f"unsupported model format: expected {_MODEL_FORMAT!r}, found {found!r}")
    header = lines[1].split()
    n_links, n_locs, M = int(header[1]), int(header[3]), int(header[5])
    edges = np.zeros((n_links, n_locs, M + 1))
    trans = np.zeros((n_links, n_locs, M, M))
    reps = np.zeros((n_links, n_locs, M))

    def parse(tokens, count, what):
        if len(tokens) != count:
            raise ValueError(f"{what}: expected {count} numbers, found {len(tokens)}")
        try:
            return np.array([float(t) for t in tokens])
        except ValueError as exc:
            raise ValueError(f"{what}: could not parse numeric field ({exc})") from exc

    for line in lines[2:]:
        if not line.strip():
            continue
        kind, rest = line.split(" ", 1)
        tokens = rest.split()
        if kind == "edges":
            link, loc = int(tokens[0]), int(tokens[1])
            edges[link, loc] = parse(tokens[2:], M + 1, f"edges {link} {loc}")
        elif kind == "reps":
            link, loc = int(tokens[0]), int(tokens[1])
            reps[link, loc] = parse(tokens[2:], M, f"reps {link} {loc}")
        elif kind == "row":
            link, loc, i = int(tokens[0]), int(tokens[1]), int(tokens[2])
            trans[link, loc, i] = parse(tokens[3:], M, f"row {link} {loc} {i}")
        else:
            raise ValueError(f"unknown record kind {kind!r} in model file")
    model = MarkovChannelModel(n_states=M, bin_edges=edges,
                               transitions=trans, representatives=reps)
    model.validate()
    return model
