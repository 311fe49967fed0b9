"""Statistics and signal processing for the measurement chain.

Post-selection on co-measured fluxes, leave-one-out jackknife over twirling
sets, windowed discrete Fourier transforms, the transmutation order
parameter, the edge momentum transform, and the phase-diagram indicator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

ETA_SHIFT = 0.01  # regularizer in the order-parameter denominator
OMEGA_GRID_POINTS = 128


@dataclass
class ShotTable:
    """Sampled bitstrings keyed by (twirl, disorder, trajectory).

    ``bits[i, k]`` is the outcome of measured qubit ``qubits[k]`` in row i.
    """

    qubits: tuple
    bits: np.ndarray
    twirl: np.ndarray
    disorder: np.ndarray
    trajectory: np.ndarray
    plan: Optional[object] = None

    @property
    def n_rows(self) -> int:
        return int(self.bits.shape[0])

    def select(self, mask: np.ndarray) -> "ShotTable":
        return ShotTable(
            qubits=self.qubits,
            bits=self.bits[mask],
            twirl=self.twirl[mask],
            disorder=self.disorder[mask],
            trajectory=self.trajectory[mask],
            plan=self.plan,
        )

    def concat(self, other: "ShotTable") -> "ShotTable":
        if other.qubits != self.qubits:
            raise ValueError("shot tables measure different qubits")
        return ShotTable(
            qubits=self.qubits,
            bits=np.concatenate([self.bits, other.bits]),
            twirl=np.concatenate([self.twirl, other.twirl]),
            disorder=np.concatenate([self.disorder, other.disorder]),
            trajectory=np.concatenate([self.trajectory, other.trajectory]),
            plan=self.plan,
        )

    def bit_products(self, sign: int, qubits: Sequence[int]) -> np.ndarray:
        """+-1 value of a bit-product observable per row."""
        pos = {q: i for i, q in enumerate(self.qubits)}
        vals = np.full(self.n_rows, float(sign))
        for q in qubits:
            vals *= 1.0 - 2.0 * self.bits[:, pos[q]]
        return vals


@dataclass(frozen=True)
class Estimate:
    """Jackknife mean and standard error; error bars are reported as 2 sigma."""

    mean: float
    sigma: float
    n: int
    provenance: dict = field(default_factory=dict)

    @property
    def two_sigma(self) -> float:
        return 2.0 * self.sigma


def postselect(table: ShotTable, decoder, required: Dict[int, int]) -> Tuple[ShotTable, float]:
    """Keep rows whose decoded fluxes equal the required values.

    ``decoder`` must expose ``decode(bits_row, qubit_order) -> {plaquette:
    +-1}`` (a co-measurement plan); returns the filtered table and the
    retention rate kept/total.
    """
    for p in required:
        if p not in decoder.decoders:
            raise ValueError(f"decoder does not cover plaquette {p}")
    if table.n_rows == 0:
        return table, 0.0
    keep = np.ones(table.n_rows, dtype=bool)
    for i in range(table.n_rows):
        got = decoder.decode(table.bits[i], table.qubits)
        for p, want in required.items():
            if got[p] != want:
                keep[i] = False
                break
    kept = table.select(keep)
    return kept, float(keep.sum()) / table.n_rows


def jackknife(per_group, estimator: Optional[Callable] = None, provenance=None) -> Estimate:
    """Leave-one-group-out resampling.

    ``per_group`` is a length-K array (or a tuple of same-length arrays for a
    multivariate estimator); jackknife samples are the leave-one-out means of
    each variable, paired by index before applying ``estimator``.  The
    standard error carries the (K-1)/K prefactor under the square root.
    """
    if isinstance(per_group, (tuple, list)) and not np.isscalar(per_group[0]):
        groups = [np.asarray(g, dtype=float) for g in per_group]
    else:
        groups = [np.asarray(per_group, dtype=float)]
    k = len(groups[0])
    for g in groups:
        if len(g) != k:
            raise ValueError("variables must share the group count")
    if k < 2:
        raise ValueError("jackknife needs at least two groups")
    samples = []
    for g in groups:
        total = g.sum()
        samples.append((total - g) / (k - 1))
    if estimator is None:
        if len(samples) != 1:
            raise ValueError("multivariate data needs an estimator")
        f_i = samples[0]
    else:
        f_i = np.array([estimator(*(s[i] for s in samples)) for i in range(k)], dtype=float)
    mean = float(f_i.mean())
    sigma = math.sqrt((k - 1) / k * float(((f_i - mean) ** 2).sum()))
    return Estimate(mean=mean, sigma=sigma, n=k, provenance=dict(provenance or {}))


def eta_series(
    loop_e: np.ndarray, loop_0: np.ndarray, shift: float = ETA_SHIFT
) -> List[Estimate]:
    """Order parameter eta(N) = mean over jackknife sets of the regularized
    ratio <O(N)>_e / (<O(N)>_0 + shift), with its jackknife standard error.

    Inputs are per-twirl series of shape (K, N+1); a single row is treated as
    an exact run and gives the plain ratio with zero error.
    """
    le = np.atleast_2d(np.asarray(loop_e, dtype=float))
    l0 = np.atleast_2d(np.asarray(loop_0, dtype=float))
    if le.shape != l0.shape:
        raise ValueError("series length mismatch between the two initial states")
    k, ncols = le.shape

    def ratio(e, z):
        den = z + shift
        if abs(den) < 1e-12:  # exact cancellation; keep the output finite
            den = 1e-12
        return e / den

    out = []
    for col in range(ncols):
        if k == 1:
            out.append(Estimate(mean=float(ratio(le[0, col], l0[0, col])), sigma=0.0, n=1))
        else:
            out.append(jackknife((le[:, col], l0[:, col]), estimator=ratio))
    return out


def cosine_window(n_points: int, p: int) -> np.ndarray:
    """w(n) = cos^p(pi n / (2 N_max)) over n = 0..N_max."""
    nmax = n_points - 1
    if nmax == 0:
        return np.ones(1)
    n = np.arange(n_points)
    return np.cos(math.pi * n / (2 * nmax)) ** p


def omega_grid() -> np.ndarray:
    """128 uniform points on [-pi, pi) plus the exact points {0, pi}."""
    grid = -math.pi + 2 * math.pi * np.arange(OMEGA_GRID_POINTS) / OMEGA_GRID_POINTS
    grid = np.union1d(grid, [0.0, math.pi])
    return grid


def windowed_dft(series, p: int, omegas: Optional[np.ndarray] = None):
    """S(w) = sum_n w(n) s(n) exp(-i w n) / sum_n w(n).

    The cosine-window exponent is 6 for the spectral function and 4 for the
    order parameter; arbitrary p is allowed.  Returns (omegas, S).
    """
    s = np.asarray(series, dtype=complex)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("series must be a non-empty 1d array")
    w = cosine_window(s.size, p)
    if omegas is None:
        omegas = omega_grid()
    omegas = np.asarray(omegas, dtype=float)
    n = np.arange(s.size)
    kernel = np.exp(-1j * np.outer(omegas, n))
    vals = kernel @ (w * s) / w.sum()
    return omegas, vals


def dft_amplitude(series, p: int, omega: float) -> float:
    _, vals = windowed_dft(series, p, omegas=np.array([omega]))
    return float(np.abs(vals[0]))


def phase_indicator(eta_values, p: int = 4) -> float:
    """|eta(w=pi)| - |eta(w=0)|: positive in the driven topological phase,
    negative in the static Kitaev phase."""
    s = np.asarray(eta_values, dtype=float)
    if s.size < 4:
        raise ValueError("series too short for the phase indicator")
    return dft_amplitude(s, p, math.pi) - dft_amplitude(s, p, 0.0)


# -- edge momentum transform -----------------------------------------------


def translation_eigenbasis(translation: Sequence[int], signs: Optional[Sequence[int]] = None):
    """Eigenvectors of a (signed) permutation, built per cycle.

    Returns (q_values, vectors, cycle_lengths) with vectors[m] satisfying
    F v = exp(i q_m) v; the basis is orthonormal, so the transform below is
    unitary.  ``cycle_lengths[m]`` is the length of the permutation cycle the
    eigenvector lives on (the longest cycle is the chiral edge translation).
    """
    nxt = list(translation)
    L = len(nxt)
    signs = [1] * L if signs is None else list(signs)
    seen = [False] * L
    qs, vecs, cyc_len = [], [], []
    for start in range(L):
        if seen[start]:
            continue
        cycle = [start]
        seen[start] = True
        cur = nxt[start]
        while cur != start:
            seen[cur] = True
            cycle.append(cur)
            cur = nxt[cur]
        ell = len(cycle)
        step_signs = [signs[i] for i in cycle]
        total = np.prod(step_signs)
        offset = 0.0 if total > 0 else math.pi / ell
        prefix = np.cumprod([1] + step_signs[:-1])
        for m in range(ell):
            q = -math.pi + ((2 * math.pi * m / ell + offset + math.pi) % (2 * math.pi))
            v = np.zeros(L, dtype=complex)
            for t, idx in enumerate(cycle):
                v[idx] = np.exp(-1j * q * t) * prefix[t] / math.sqrt(ell)
            qs.append(q)
            vecs.append(v)
            cyc_len.append(ell)
    order = np.argsort(qs, kind="stable")
    return np.array(qs)[order], np.array(vecs)[order], np.array(cyc_len)[order]


def momentum_transform(
    c_matrix,
    edge_order: Sequence[int],
    translation: Optional[Sequence[int]] = None,
    signs: Optional[Sequence[int]] = None,
    p: int = 6,
):
    """Spatial transform over the edge-translation eigenbasis, then a
    windowed DFT in cycle number.

    ``c_matrix`` has one row per edge site (in ``edge_order``) and one column
    per cycle.  ``translation`` is the next-position map of the JT=1
    one-cycle edge translation (a cyclic shift by default); the returned
    spectrum is laid out on (q from the translation eigenphases, omega on the
    [-pi, pi) grid).  Returns (q_values, omegas, S, q_weight).
    """
    c = np.asarray(c_matrix, dtype=complex)
    L = len(edge_order)
    if c.shape[0] != L:
        raise ValueError(f"C has {c.shape[0]} rows but the edge has {L} sites")
    if translation is None:
        translation = [(i + 1) % L for i in range(L)]
    qs, vecs, cyc = translation_eigenbasis(translation, signs)
    psi_q = vecs.conj() @ c  # (L, n_cycles)
    omegas = omega_grid()
    spec = np.empty((L, omegas.size), dtype=complex)
    for i in range(L):
        _, vals = windowed_dft(psi_q[i], p, omegas=omegas)
        spec[i] = vals
    weight = np.abs(psi_q).sum(axis=1)
    return qs, omegas, spec, weight, cyc


def ridge_winding(qs, omegas, spec, weight, cycle_lengths=None) -> float:
    """Net quasi-energy winding of the per-q argmax ridge across the edge
    Brillouin zone, in units of 2 pi.

    The edge Brillouin zone is the q grid of the longest translation cycle
    (the chiral edge translation); shorter cycles are bulk-returning sites
    whose eigenvectors carry no dispersing branch.
    """
    qs = np.asarray(qs)
    if cycle_lengths is not None:
        live = np.nonzero(np.asarray(cycle_lengths) == np.max(cycle_lengths))[0]
    else:
        live = np.arange(len(qs))
    if live.size < 2:
        return 0.0
    live = live[np.argsort(qs[live], kind="stable")]
    ridge = [omegas[int(np.argmax(np.abs(spec[i])))] for i in live]
    # a branch that never reaches the quasi-energy zone edge cannot wind; on a
    # coarse q grid this guards the wrapped sum against unresolved turnarounds
    margin = 2 * math.pi / live.size
    if max(abs(w) for w in ridge) < math.pi - margin:
        return 0.0
    total = 0.0
    for a, b in zip(ridge, ridge[1:] + ridge[:1]):
        d = b - a
        while d > math.pi:
            d -= 2 * math.pi
        while d < -math.pi:
            d += 2 * math.pi
        total += d
    return total / (2 * math.pi)
