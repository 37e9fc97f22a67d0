"""Block coordinate descent schedules for overdetermined source extraction.

Four schedules share the same per-bin building blocks:

- ``auxiva``: iterative-projection row updates cycled over all M outputs,
  with the unweighted mixture covariance standing in for the background
  rows. The determined-IVA baseline run on the full array.
- ``ip1``: row updates for the K targets followed by one background block
  update per sweep (fast orthogonal-complement form by default, fully
  normalized form on request).
- ``ip2``: single-target extraction (K = 1) via a generalized eigenvalue
  problem; the background block is materialized once after the loop.
- ``ip3``: row updates interleaved with a background refresh after every
  target, keeping the background orthogonally constrained throughout.

All update functions are pure: they take stacked arrays with leading
batch axes (one entry per frequency bin) and return new arrays.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import linalg, model
from .errors import (
    DegenerateBlock,
    InvalidK,
    NotPositiveDefinite,
    NumericalError,
    ShapeMismatch,
    SingularMatrix,
)
from .linalg import hermitian_transpose
from .model import DemixingStack
from .stft import Spectrogram


class Method(Enum):
    """Update schedule selector."""

    AUXIVA = "auxiva"
    IP1 = "ip1"
    IP2 = "ip2"
    IP3 = "ip3"


DEFAULT_ITERATIONS = {
    Method.AUXIVA: 50,
    Method.IP1: 50,
    Method.IP2: 3,
    Method.IP3: 50,
}


@dataclass(frozen=True)
class RunConfig:
    """Parameters of one separation run.

    iterations defaults to 50 (3 for ip2, whose single-target update
    reaches its fixed point in a few steps). convergence_delta, when set,
    stops early once the relative cost change drops below it. wz_mode
    selects the background update used by ip1: the fast orthogonal
    complement ("fast") or the fully normalized block ("full", the mode
    with a monotone cost trace). threads > 1 splits the frequency axis
    across a thread pool; results are identical to the sequential run.
    """

    method: Method = Method.IP1
    iterations: int = None
    eps1: float = model.EPS_VARIANCE
    eps2: float = model.EPS_RIDGE
    seed: int = 0
    convergence_delta: float = None
    relative_ridge: bool = False
    wz_mode: str = "fast"
    threads: int = 1

    def __post_init__(self):
        method = self.method
        if not isinstance(method, Method):
            method = Method(str(method).lower())
            object.__setattr__(self, "method", method)
        if self.iterations is None:
            object.__setattr__(self, "iterations", DEFAULT_ITERATIONS[method])
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.eps1 <= 0:
            raise ValueError("eps1 must be positive")
        if self.eps2 < 0:
            raise ValueError("eps2 must be nonnegative")
        if self.wz_mode not in ("fast", "full"):
            raise ValueError(f"unknown wz_mode {self.wz_mode!r}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class SeparationResult:
    """Outcome of a separation run.

    demixing : DemixingStack with the target filters in the leading columns
    images : (K, F, T, M) spatial images of the targets on the array
    cost_trace : per-iteration values of the full objective
    wall_time : seconds spent in covariance and update computation
        (excludes STFT, file I/O, and the diagnostic cost evaluation)
    """

    demixing: DemixingStack
    images: np.ndarray
    cost_trace: np.ndarray
    wall_time: float


def ip0_update_row(w_stack, cov, k):
    """Iterative-projection update of filter column k.

    Globally minimizes the per-bin surrogate over w_k at fixed other
    rows: solve (W^H G) u = e_k, then rescale so u^H G u = 1.

    w_stack : (..., M, M); cov : (..., M, M) auxiliary covariance for
    this output. Returns the new column, (..., M).
    """
    m = w_stack.shape[-1]
    u = linalg.lu_solve(hermitian_transpose(w_stack) @ cov, np.eye(m)[:, k])
    q = np.einsum("...i,...ij,...j->...", np.conj(u), cov, u).real
    if np.any(q <= 0):
        idx = int(np.flatnonzero((q <= 0).ravel())[0])
        raise NotPositiveDefinite(
            f"normalization quadratic is not positive at batch index {idx}",
            batch_index=idx,
        )
    return u / np.sqrt(q)[..., None]


def update_wz_full(w_stack, noise_cov, n_targets):
    """Fully normalized background block, (..., M, M - K).

    Solves (W^H G_z) U_z = E_z and whitens: the result satisfies the
    background stationarity condition W^H G_z W_z = E_z exactly, and
    trace(W_z^H G_z W_z) = M - K.
    """
    m = w_stack.shape[-1]
    ez = np.eye(m)[:, n_targets:]
    uz = linalg.lu_solve(hermitian_transpose(w_stack) @ noise_cov, ez)
    inner = hermitian_transpose(uz) @ noise_cov @ uz
    inner = 0.5 * (inner + hermitian_transpose(inner))
    return uz @ linalg.inv_sqrt_hermitian(inner)


def update_wz_fast(w_targets, noise_cov):
    """Orthogonal-complement background block, (..., M, M - K).

    Returns [-(W_s^H G_z E_s)^{-1} (W_s^H G_z E_z); I], the unique
    background with trailing identity rows whose outputs are uncorrelated
    with the targets: W_s^H G_z W_z = 0 exactly. Spans the same subspace
    as the fully normalized block (their column-space projectors agree).
    """
    n_targets = w_targets.shape[-1]
    m = w_targets.shape[-2]
    c = hermitian_transpose(w_targets) @ noise_cov
    try:
        top = -linalg.lu_solve(c[..., :, :n_targets], c[..., :, n_targets:])
    except SingularMatrix as exc:
        raise DegenerateBlock(
            f"target block of the correlation constraint is singular "
            f"({exc})",
            batch_index=exc.batch_index,
        ) from None
    eye = np.broadcast_to(
        np.eye(m - n_targets), top.shape[:-2] + (m - n_targets, m - n_targets)
    )
    return np.concatenate([top, eye], axis=-2)


def ip1_sweep(w_stack, target_covs, noise_cov, wz_mode="fast", on_wz_update=None):
    """One sweep: all K target rows, then one background update.

    target_covs : (K, ..., M, M) weighted covariances; noise_cov :
    (..., M, M). Returns the updated stack. on_wz_update, when given, is
    called as on_wz_update(w_stack, noise_cov) after the background
    update (diagnostic hook; must not mutate its arguments).
    """
    w = np.array(w_stack, copy=True)
    n_targets = target_covs.shape[0]
    for k in range(n_targets):
        w[..., :, k] = ip0_update_row(w, target_covs[k], k)
    if n_targets < w.shape[-1]:
        if wz_mode == "full":
            w[..., :, n_targets:] = update_wz_full(w, noise_cov, n_targets)
        else:
            w[..., :, n_targets:] = update_wz_fast(
                w[..., :, :n_targets], noise_cov
            )
        if on_wz_update is not None:
            on_wz_update(w, noise_cov)
    return w


def ip3_sweep(w_stack, target_covs, noise_cov, on_wz_update=None):
    """One sweep with a background refresh after every target row.

    Keeps the orthogonal constraint satisfied at every intermediate
    state, which is what allows the determinant to stay in closed form.
    Coincides with ip1_sweep (fast mode) when there is a single target.
    """
    w = np.array(w_stack, copy=True)
    n_targets = target_covs.shape[0]
    for k in range(n_targets):
        w[..., :, k] = ip0_update_row(w, target_covs[k], k)
        w[..., :, n_targets:] = update_wz_fast(w[..., :, :n_targets], noise_cov)
        if on_wz_update is not None:
            on_wz_update(w, noise_cov)
    return w


def auxiva_sweep(w_stack, target_covs, noise_cov):
    """One determined-style sweep over all M rows.

    Rows past the targets use the unweighted mixture covariance as their
    auxiliary matrix, matching the stationary unit-variance model.
    """
    w = np.array(w_stack, copy=True)
    n_targets = target_covs.shape[0]
    for k in range(w.shape[-1]):
        cov = target_covs[k] if k < n_targets else noise_cov
        w[..., :, k] = ip0_update_row(w, cov, k)
    return w


def ip2_update(target_cov, noise_cov):
    """Single-target filter from the largest eigenpair of (G_z, G_1).

    The maximizing direction u of the generalized Rayleigh quotient
    u^H G_z u / u^H G_1 u, rescaled so w^H G_1 w = 1. Jointly with the
    completed background this is the global per-bin minimizer of the
    surrogate, and coincides with a maximum-SNR beamformer up to scale.
    """
    _, u = linalg.gev_largest(noise_cov, target_cov)
    q = np.einsum("...i,...ij,...j->...", np.conj(u), target_cov, u).real
    if np.any(q <= 0):
        idx = int(np.flatnonzero((q <= 0).ravel())[0])
        raise NotPositiveDefinite(
            f"target covariance is not positive along the extracted "
            f"direction at batch index {idx}",
            batch_index=idx,
        )
    return u / np.sqrt(q)[..., None]


def _householder_complement(y):
    """Orthonormal basis of the complement of span(y), (..., M, M - 1).

    Columns of the Householder reflector that maps y onto e_1, excluding
    the first: unitary, so the columns are orthonormal and all
    perpendicular to y. A zero y yields the complement of e_1.
    """
    y = np.asarray(y, dtype=np.complex128)
    m = y.shape[-1]
    norm = np.linalg.norm(y, axis=-1)
    y0 = y[..., 0]
    mag = np.abs(y0)
    phase = np.where(mag > 0, y0 / np.where(mag > 0, mag, 1.0), 1.0)
    v = np.array(y, copy=True)
    v[..., 0] += phase * norm
    vnorm2 = np.sum(np.abs(v) ** 2, axis=-1)
    denom = np.where(vnorm2 > 0, vnorm2, 1.0)
    h = np.broadcast_to(np.eye(m, dtype=np.complex128), y.shape + (m,)).copy()
    h -= 2.0 * v[..., :, None] * np.conj(v[..., None, :]) / denom[..., None, None]
    return h[..., :, 1:]


def ip2_complete_wz(u1, noise_cov):
    """Background block around a single extracted filter, (..., M, M - 1).

    Builds an orthonormal basis of the directions uncorrelated with the
    target output (perpendicular to G_z u_1) and whitens it against G_z,
    so W_z^H G_z W_z = I and W_z^H G_z u_1 = 0.
    """
    u1 = np.asarray(u1, dtype=np.complex128)
    y = np.einsum("...ij,...j->...i", np.asarray(noise_cov), u1)
    basis = _householder_complement(y)
    inner = hermitian_transpose(basis) @ np.asarray(noise_cov) @ basis
    inner = 0.5 * (inner + hermitian_transpose(inner))
    return basis @ linalg.inv_sqrt_hermitian(inner)


def projection_back(w_stack, x, k):
    """Spatial image of output k on the array.

    Undoes the arbitrary per-bin scale of the demixing filters by mapping
    the output back through the mixing system estimate: the image is
    (W^{-H} e_k) (w_k^H x), the rank-one component of x captured by
    output k. Summed over all M outputs the images reconstruct x.

    x : (..., M) vectors or (..., T, M) frames matching w_stack's batch.
    """
    mats = np.asarray(w_stack)
    x = np.asarray(x)
    m = mats.shape[-1]
    a = linalg.lu_solve(hermitian_transpose(mats), np.eye(m)[:, k])
    wk = mats[..., :, k]
    if x.ndim == mats.ndim - 1:
        s = np.einsum("...m,...m->...", np.conj(wk), x)
        return a * s[..., None]
    if x.ndim != mats.ndim:
        raise ShapeMismatch(
            f"signal shape {x.shape} does not match stack shape {mats.shape}"
        )
    s = np.einsum("...m,...tm->...t", np.conj(wk), x)
    return s[..., None] * a[..., None, :]


def pick_top_k(images, n_pick):
    """Indices of the n_pick images with the largest total power.

    Stable ordering: ties resolve to the lowest index. Returns a tuple of
    0-based indices, descending in power.
    """
    powers = np.array([np.sum(np.abs(np.asarray(im)) ** 2) for im in images])
    return _top_indices(powers, n_pick)


def _top_indices(powers, n_pick):
    order = np.argsort(-np.asarray(powers), kind="stable")
    return tuple(int(i) for i in order[:n_pick])


class _Stopwatch:
    """Accumulates wall time over the bracketed segments."""

    def __init__(self):
        self.total = 0.0

    @contextmanager
    def __call__(self):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.total += time.perf_counter() - t0


def _bin_chunks(n_bins, n_chunks):
    edges = np.linspace(0, n_bins, min(n_chunks, n_bins) + 1).astype(int)
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _shift_bin(exc, offset):
    """Re-raise a numerical error with the batch index mapped to its bin."""
    idx = exc.batch_index
    bin_idx = None if idx is None else offset + idx
    where = "unknown" if bin_idx is None else str(bin_idx)
    return type(exc)(f"frequency bin {where}: {exc}", batch_index=bin_idx)


def _sweep_bins(method, w, target_covs, noise_cov, ok, wz_mode, on_wz_update):
    """Dispatch one sweep on a chunk, skipping background updates on
    bins whose mixture covariance is identically zero."""
    if np.all(ok):
        if method is Method.AUXIVA:
            return auxiva_sweep(w, target_covs, noise_cov)
        if method is Method.IP1:
            return ip1_sweep(w, target_covs, noise_cov, wz_mode, on_wz_update)
        if method is Method.IP3:
            return ip3_sweep(w, target_covs, noise_cov, on_wz_update)
        return _ip2_rows(w, target_covs, noise_cov)
    out = np.array(w, copy=True)
    if np.any(ok):
        out[ok] = _sweep_bins(
            method, w[ok], target_covs[:, ok], noise_cov[ok], ok[ok],
            wz_mode, on_wz_update,
        )
    bad = ~ok
    if np.any(bad):
        out[bad] = _rows_only(method, w[bad], target_covs[:, bad], noise_cov[bad])
    return out


def _ip2_rows(w, target_covs, noise_cov):
    out = np.array(w, copy=True)
    out[..., :, 0] = ip2_update(target_covs[0], noise_cov)
    return out


def _rows_only(method, w, target_covs, noise_cov):
    """Target-row updates only, for degenerate (zero-power) bins."""
    if method is Method.IP2:
        return _ip2_rows(w, target_covs, noise_cov)
    out = np.array(w, copy=True)
    for k in range(target_covs.shape[0]):
        out[..., :, k] = ip0_update_row(out, target_covs[k], k)
    return out


def run(x, n_targets, config=RunConfig(), on_wz_update=None):
    """Extract n_targets sources from a mixture spectrogram.

    Alternates closed-form variance updates with one demixing sweep of
    the configured schedule, normalizing the per-target scales each
    iteration, then projects the target outputs back onto the array.
    For the auxiva baseline all M outputs are demixed and the n_targets
    most powerful images are kept; the returned stack's columns are
    reordered so the kept filters come first.

    Parameters
    ----------
    x : Spectrogram or (F, T, M) complex array
    n_targets : number of sources to extract (K)
    config : RunConfig
    on_wz_update : callable, optional
        Diagnostic hook forwarded to the sweeps, called as
        on_wz_update(w_chunk, noise_cov_chunk) after every background
        update (per frequency chunk when threads > 1). Read-only.

    Returns
    -------
    SeparationResult
    """
    data = x.data if isinstance(x, Spectrogram) else np.asarray(x)
    if data.ndim != 3:
        raise ShapeMismatch(f"expected (F, T, M) spectrogram, got {data.shape}")
    n_bins, n_frames, n_chan = data.shape
    method = config.method
    if n_targets < 1:
        raise InvalidK(f"n_targets must be >= 1, got {n_targets}")
    if method is Method.IP2 and n_targets != 1:
        raise InvalidK("ip2 requires K=1")
    if method is Method.AUXIVA:
        if n_targets > n_chan:
            raise InvalidK(f"K={n_targets} exceeds {n_chan} channels")
    elif n_targets >= n_chan:
        raise InvalidK(
            f"{method.value} needs a nonempty background: K={n_targets} "
            f"must be < M={n_chan}"
        )

    timer = _Stopwatch()
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    try:
        with timer():
            noise_cov = model.noise_covariance(data)
        live = np.einsum("fmm->f", noise_cov).real > 0.0
        w = np.tile(np.eye(n_chan, dtype=np.complex128), (n_bins, 1, 1))
        chunks = _bin_chunks(n_bins, config.threads)
        targets_buf = np.empty((n_bins, n_frames, n_targets), dtype=np.complex128)
        cost_trace = []

        def map_chunks(fn):
            if pool is None:
                for sl in chunks:
                    fn(sl)
            else:
                list(pool.map(fn, chunks))

        def stage_demix(sl):
            targets_buf[sl] = data[sl] @ np.conj(w[sl, :, :n_targets])

        for _ in range(config.iterations):
            with timer():
                map_chunks(stage_demix)
                lam = model.update_variances(
                    targets_buf.transpose(2, 0, 1), config.eps1
                )

                def stage_sweep(sl, lam=lam):
                    covs = np.stack(
                        [
                            model.weighted_covariance(
                                data[sl], lam[k], config.eps2,
                                config.relative_ridge,
                            )
                            for k in range(n_targets)
                        ]
                    )
                    try:
                        w[sl] = _sweep_bins(
                            method, w[sl], covs, noise_cov[sl], live[sl],
                            config.wz_mode, on_wz_update,
                        )
                    except NumericalError as exc:
                        raise _shift_bin(exc, sl.start) from None

                map_chunks(stage_sweep)
                scale = lam.mean(axis=1)
                lam = lam / scale[:, None]
                w[:, :, :n_targets] *= scale ** -0.5
            cost_trace.append(model.cost_total(w, lam, data))
            if config.convergence_delta is not None and len(cost_trace) >= 2:
                prev, cur = cost_trace[-2], cost_trace[-1]
                if abs(prev - cur) <= config.convergence_delta * abs(prev):
                    break

        with timer():
            if method is Method.IP2 and n_targets < n_chan and np.any(live):
                try:
                    w[live, :, n_targets:] = update_wz_fast(
                        w[live, :, :n_targets], noise_cov[live]
                    )
                except NumericalError as exc:
                    raise _shift_bin(exc, 0) from None
            if method is Method.AUXIVA:
                w, images = _auxiva_images(w, data, n_targets)
            else:
                images = np.stack(
                    [projection_back(w, data, k) for k in range(n_targets)]
                )
    finally:
        if pool is not None:
            pool.shutdown()

    return SeparationResult(
        demixing=DemixingStack(w, n_targets),
        images=images,
        cost_trace=np.array(cost_trace),
        wall_time=timer.total,
    )


def _auxiva_images(w, data, n_targets):
    """Project back all M outputs, keep the strongest, reorder the stack."""
    n_chan = w.shape[-1]
    mixing = linalg.lu_solve(hermitian_transpose(w), np.eye(n_chan))
    outputs = data @ np.conj(w)
    filter_pow = np.sum(np.abs(mixing) ** 2, axis=-2)
    output_pow = np.sum(np.abs(outputs) ** 2, axis=1)
    powers = np.sum(filter_pow * output_pow, axis=0)
    picked = _top_indices(powers, n_targets)
    images = np.stack(
        [
            outputs[:, :, j, None] * mixing[:, None, :, j]
            for j in picked
        ]
    )
    rest = [j for j in range(n_chan) if j not in picked]
    return w[:, :, list(picked) + rest], images
