"""Spike statistics, equilibria, cross-tier comparison and speedup."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dsl import SystemSpec, compile_expr
from .errors import AnalysisError, ConvergenceError
from .sim import Trace

# Model time unit interpreted at biological scale (FHN convention: 1 ms).
BIO_TIME_UNIT = 1e-3


@dataclass
class SpikeStats:
    signal: str
    spike_times: np.ndarray
    peaks: np.ndarray = field(default_factory=lambda: np.empty(0))
    troughs: np.ndarray = field(default_factory=lambda: np.empty(0))
    refractory: float = 0.0

    @property
    def count(self) -> int:
        return int(self.spike_times.size)

    @property
    def intervals(self) -> np.ndarray:
        return np.diff(self.spike_times)

    @property
    def mean_period(self) -> float:
        return float(np.mean(self.intervals)) if self.count >= 2 else math.nan

    @property
    def frequency(self) -> float:
        return 1.0 / self.mean_period if self.count >= 2 else 0.0

    @property
    def cv(self) -> float:
        """Coefficient of variation of inter-spike intervals."""
        isi = self.intervals
        return float(np.std(isi) / np.mean(isi)) if isi.size >= 2 else math.nan

    @property
    def peak_mean(self) -> float:
        return float(np.mean(self.peaks)) if self.peaks.size else math.nan

    @property
    def trough_mean(self) -> float:
        return float(np.mean(self.troughs)) if self.troughs.size else math.nan

    def to_dict(self) -> dict:
        def clean(x):
            return None if isinstance(x, float) and math.isnan(x) else x

        return {
            "signal": self.signal,
            "count": self.count,
            "frequency_hz": clean(self.frequency),
            "mean_period_s": clean(self.mean_period),
            "peak_mean": clean(self.peak_mean),
            "trough_mean": clean(self.trough_mean),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def dominant_period(times: np.ndarray, x: np.ndarray) -> float | None:
    """Period estimate from the first autocorrelation peak after its first
    zero crossing; ``None`` for aperiodic or constant signals."""
    y = x - np.mean(x)
    if not np.any(y):
        return None
    n = y.size
    f = np.fft.rfft(y, 2 * n)
    ac = np.fft.irfft(f * np.conj(f))[:n]
    ac /= ac[0]
    neg = np.nonzero(ac < 0)[0]
    if neg.size == 0:
        return None
    start = neg[0]
    if start >= n - 1:
        return None
    lag = start + int(np.argmax(ac[start:]))
    if ac[lag] <= 0:
        return None
    return float(times[lag] - times[0])


def detect_spikes(tr: Trace, signal: str, threshold: float = 0.0,
                  refractory: float | None = None) -> SpikeStats:
    """Upward threshold crossings at least ``refractory`` apart.

    Crossing times are linearly interpolated between samples. Each spike's
    peak is the maximum up to the next accepted crossing (or the end of the
    trace, if the signal has fallen back below threshold by then); troughs
    are the minima between consecutive spikes. With ``refractory=None`` it
    defaults to 10% of the dominant period from the autocorrelation.
    """
    if signal not in tr.signals:
        raise AnalysisError(f"trace has no signal {signal!r}; available: {sorted(tr.signals)}")
    t, x = tr.times, tr.signals[signal]
    if refractory is None:
        period = dominant_period(t, x)
        refractory = 0.1 * period if period else 0.0
    elif not refractory > 0:
        raise AnalysisError("refractory must be > 0")
    idx = np.nonzero((x[:-1] < threshold) & (x[1:] >= threshold))[0]
    crossings: list[float] = []
    starts: list[int] = []
    for i in idx:
        frac = (threshold - x[i]) / (x[i + 1] - x[i])
        tc = t[i] + frac * (t[i + 1] - t[i])
        if crossings and tc - crossings[-1] < refractory:
            continue
        crossings.append(tc)
        starts.append(i + 1)
    peaks, troughs = [], []
    for j, s in enumerate(starts):
        end = starts[j + 1] if j + 1 < len(starts) else x.size
        seg = x[s:end]
        if j + 1 == len(starts) and not np.any(seg < threshold):
            break
        peaks.append(seg.max())
        if j + 1 < len(starts):
            troughs.append(seg.min())
    return SpikeStats(signal, np.array(crossings), np.array(peaks), np.array(troughs),
                      float(refractory))


def cycle_extrema(tr: Trace, stats: SpikeStats, signal: str) -> np.ndarray:
    """Maximum of ``signal`` within each complete inter-spike window."""
    t, x = tr.times, tr.signals[signal]
    out = []
    for a, b in zip(stats.spike_times, stats.spike_times[1:]):
        m = (t >= a) & (t < b)
        out.append(x[m].max())
    return np.array(out)


@dataclass(frozen=True)
class TraceComparison:
    rms_rel: float
    freq_ratio: float
    spikes_a: int
    spikes_b: int

    def to_dict(self) -> dict:
        return asdict(self)


def _normalized_view(tr: Trace, signal: str, threshold: float):
    x = tr.normalized(signal)
    st = detect_spikes(Trace(tr.times, {signal: x}), signal, threshold)
    if st.count < 2:
        raise AnalysisError(f"need at least 2 spikes in {tr.tier} trace of {signal!r}, "
                            f"found {st.count}")
    return x, st


def _common_period(spikes: np.ndarray, n: int) -> float:
    # mean over the first n spikes so both traces average the same cycles
    return float((spikes[n - 1] - spikes[0]) / (n - 1))


def compare_traces(a: Trace, b: Trace, signal: str, threshold: float = 0.0) -> TraceComparison:
    """Compare two spiking traces after time and amplitude normalization.

    Amplitudes are divided by each trace's ``scale`` (``i_unit`` for circuit
    traces), time axes are shifted to the first spike and divided by the
    mean spike period, and ``b`` is linearly resampled onto ``a``'s grid.

    Returns
    -------
    TraceComparison
        ``rms_rel`` is the RMS difference over the common window divided by
        the peak-to-peak amplitude of ``a``; ``freq_ratio`` is the spike
        frequency of ``b`` over that of ``a`` over the same spikes, each
        converted to model time with the trace's designed ``time_scale``.
    """
    for tr in (a, b):
        if signal not in tr.signals:
            raise AnalysisError(f"{tr.tier} trace has no signal {signal!r}")
    xa, sa = _normalized_view(a, signal, threshold)
    xb, sb = _normalized_view(b, signal, threshold)
    n = min(sa.count, sb.count)
    per_a = _common_period(sa.spike_times, n)
    per_b = _common_period(sb.spike_times, n)
    pa = (a.times - sa.spike_times[0]) / per_a
    pb = (b.times - sb.spike_times[0]) / per_b
    hi = min(pa[-1], pb[-1])
    m = (pa >= 0) & (pa <= hi)
    if m.sum() < 2:
        raise AnalysisError("traces do not overlap after normalization")
    ya = xa[m]
    yb = np.interp(pa[m], pb, xb)
    amp = float(ya.max() - ya.min())
    if amp == 0:
        raise AnalysisError("reference trace has zero amplitude")
    rms = float(np.sqrt(np.mean((ya - yb) ** 2)))
    ratio = (per_a / a.time_scale) / (per_b / b.time_scale)
    return TraceComparison(rms / amp, ratio, sa.count, sb.count)


def find_equilibrium(spec: SystemSpec, guess: Sequence[float],
                     externals: Mapping[str, float] | None = None, tol: float = 1e-12,
                     max_iter: int = 100) -> np.ndarray:
    """Newton iteration on ``F(x) = 0`` with a central-difference Jacobian.

    Externals are held at the values in ``externals`` (default: each
    waveform's value at t=0). Converged when ``max|F| < tol``.
    """
    names = spec.state_names + spec.external_names
    fs = [compile_expr(spec.derivatives[s.name], names) for s in spec.states]
    ext_vals = [float((externals or {}).get(x.name, x.waveform(0.0))) for x in spec.externals]
    n = len(fs)
    if len(guess) != n:
        raise AnalysisError(f"guess has {len(guess)} entries for {n} states")

    def F(x):
        env = list(x) + ext_vals
        return np.array([f(env) for f in fs])

    x = np.array(guess, dtype=float)
    fx = F(x)
    for _ in range(max_iter):
        if np.max(np.abs(fx), initial=0.0) < tol:
            return x
        jac = np.empty((n, n))
        for j in range(n):
            h = 1e-6 * max(1.0, abs(x[j]))
            e = np.zeros(n)
            e[j] = h
            jac[:, j] = (F(x + e) - F(x - e)) / (2 * h)
        try:
            step = np.linalg.solve(jac, -fx)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Jacobian during Newton iteration") from None
        lam, norm0 = 1.0, np.max(np.abs(fx))
        while True:
            cand = x + lam * step
            fc = F(cand)
            if np.max(np.abs(fc)) < norm0 or lam < 1e-4:
                break
            lam *= 0.5
        x, fx = cand, fc
    if np.max(np.abs(fx), initial=0.0) < tol:
        return x
    raise ConvergenceError(f"Newton did not converge in {max_iter} iterations "
                           f"(max|F| = {np.max(np.abs(fx)):.3e})")


def speedup_factor(tau_circuit: float, tau_bio: float = BIO_TIME_UNIT) -> float:
    """How many times faster than biology the circuit runs."""
    if not (tau_circuit > 0 and tau_bio > 0):
        raise AnalysisError("time constants must be > 0")
    return tau_bio / tau_circuit


__all__ = [
    "SpikeStats", "TraceComparison", "detect_spikes", "cycle_extrema", "compare_traces",
    "find_equilibrium", "speedup_factor", "dominant_period", "BIO_TIME_UNIT",
]
