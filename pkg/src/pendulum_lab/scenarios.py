"""Disturbance sources, transient metrics and the PI / PID / TS-LA benchmark.

The two disturbance families mirror the experiment protocol: a rectangular
force impulse (a sharp knock on the cart) and band-limited white noise
(sample-and-hold Gaussian force, a crosswind stand-in).  Metrics are
extracted from logged runs; quantities that never converge, grow without
bound, or belong to a diverged run carry ``math.inf`` as an explicit
unbounded flag.

Benchmark cells are independent; `run_benchmark` can fan them out over a
thread pool (capped by the PENDULUM_LAB_THREADS environment variable) and
assembles the table in a fixed order either way, so parallel and serial runs
emit identical output.
"""

from __future__ import annotations

import csv
import io
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .plant import PhysicalParams
from .simulate import Controller, SimConfig, TimeSeries, run_closed_loop

__all__ = [
    "ImpulseSpec",
    "NoiseSpec",
    "MetricBands",
    "TransientMetrics",
    "impulse_signal",
    "noise_signal",
    "make_disturbance",
    "compute_metrics",
    "BenchmarkCell",
    "BenchmarkTable",
    "run_benchmark",
]

UNBOUNDED = math.inf

BENCHMARK_HEADER = [
    "controller",
    "scenario",
    "magnitude",
    "settling_s",
    "rise_ms",
    "peak_theta_deg",
    "peak_xdot",
    "sse_theta",
    "sse_x",
]


@dataclass(frozen=True)
class ImpulseSpec:
    """Rectangular force pulse: ``magnitude`` on [onset, onset + width)."""

    magnitude: float = 10.0
    onset: float = 20.0
    width: float = 0.05

    def __post_init__(self) -> None:
        if not (math.isfinite(self.width) and self.width > 0.0):
            raise ValueError(f"width must be > 0, got {self.width!r}")
        if not (math.isfinite(self.onset) and self.onset >= 0.0):
            raise ValueError(f"onset must be >= 0, got {self.onset!r}")
        if not math.isfinite(self.magnitude):
            raise ValueError("magnitude must be finite")


def impulse_signal(spec: ImpulseSpec, t: float) -> float:
    """Difference of two steps; integrates to magnitude * width exactly."""
    return spec.magnitude if spec.onset <= t < spec.onset + spec.width else 0.0


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean Gaussian force held constant over ``sample_time`` intervals.

    ``power`` is the variance of the held samples; the seed fixes the
    realization completely.
    """

    power: float = 0.2
    sample_time: float = 0.01
    seed: int = 42

    def __post_init__(self) -> None:
        if not (math.isfinite(self.power) and self.power >= 0.0):
            raise ValueError(f"power must be >= 0, got {self.power!r}")
        if not (math.isfinite(self.sample_time) and self.sample_time > 0.0):
            raise ValueError(f"sample_time must be > 0, got {self.sample_time!r}")


class _NoiseStream:
    """Lazily extended sample-and-hold stream; the k-th held value is always
    the k-th draw of the seeded generator, independent of call pattern."""

    def __init__(self, spec: NoiseSpec):
        self.spec = spec
        self._rng = np.random.default_rng(spec.seed)
        self._samples = np.empty(0)
        self._lock = threading.Lock()

    def __call__(self, t: float) -> float:
        if self.spec.power == 0.0:
            return 0.0
        k = int(t / self.spec.sample_time)
        if k < 0:
            raise ValueError(f"negative time {t!r}")
        if k >= self._samples.size:
            with self._lock:
                if k >= self._samples.size:
                    grow = max(k + 1 - self._samples.size, 1024)
                    fresh = self._rng.standard_normal(grow) * math.sqrt(self.spec.power)
                    self._samples = np.concatenate([self._samples, fresh])
        return float(self._samples[k])


@lru_cache(maxsize=64)
def _cached_stream(spec: NoiseSpec) -> _NoiseStream:
    return _NoiseStream(spec)


def noise_signal(spec: NoiseSpec, t: float) -> float:
    """Held Gaussian sample at time t, deterministic per seed."""
    return _cached_stream(spec)(t)


def make_disturbance(spec) -> Callable[[float], float]:
    """Fresh callable force source for one run (noise gets its own stream)."""
    if isinstance(spec, ImpulseSpec):
        return lambda t: impulse_signal(spec, t)
    if isinstance(spec, NoiseSpec):
        return _NoiseStream(spec)
    raise TypeError(f"unknown disturbance spec {type(spec).__name__}")


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class MetricBands:
    """Extraction thresholds; the settle band is on |theta - pi|."""

    settle_band: float = math.radians(0.5)
    rise_high: float = 0.9
    rise_low: float = 0.1
    tail_fraction: float = 0.1
    drift_slope: float = 1e-4

    def __post_init__(self) -> None:
        if not (0.0 < self.settle_band):
            raise ValueError("settle_band must be > 0")
        if not (0.0 < self.rise_low < self.rise_high <= 1.0):
            raise ValueError("need 0 < rise_low < rise_high <= 1")
        if not (0.0 < self.tail_fraction < 1.0):
            raise ValueError("tail_fraction must be in (0, 1)")


@dataclass(frozen=True)
class TransientMetrics:
    """Disturbance-recovery summary; math.inf marks unbounded/never-converged."""

    settling_time: float
    rise_time: float
    peak_theta_dev: float
    peak_xdot: float
    sse_theta: float
    sse_x: float

    def as_row(self) -> tuple[float, ...]:
        return (
            self.settling_time,
            self.rise_time,
            self.peak_theta_dev,
            self.peak_xdot,
            self.sse_theta,
            self.sse_x,
        )


_ALL_UNBOUNDED = TransientMetrics(*(UNBOUNDED,) * 6)


def _tail_sse(t: np.ndarray, signal: np.ndarray, bands: MetricBands) -> float:
    """Mean |signal| over the final window, or the unbounded flag when the
    window's linear drift exceeds the threshold (either sign: moving away
    from zero or sweeping through it both mean 'not settled')."""
    n_tail = max(2, int(round(bands.tail_fraction * t.size)))
    tail_t, tail_s = t[-n_tail:], np.abs(signal[-n_tail:])
    slope = np.polyfit(tail_t, tail_s, 1)[0] if np.ptp(tail_t) > 0 else 0.0
    if abs(slope) > bands.drift_slope:
        return UNBOUNDED
    return float(tail_s.mean())


def compute_metrics(
    series: TimeSeries, onset: float, bands: Optional[MetricBands] = None
) -> TransientMetrics:
    """Transient metrics of a logged run, measured from the disturbance onset.

    settling_time: time from onset to the last sample outside the settle
    band (unbounded if the run ends outside it).  rise_time: first crossing
    of the high fraction of the post-onset peak deviation to the first
    crossing of the low fraction.  Peaks are maximal absolute deviations
    after onset.  Steady-state errors average the final window, carrying the
    unbounded flag on drift.  A diverged run flags every metric.
    """
    bands = bands or MetricBands()
    if series.diverged:
        return _ALL_UNBOUNDED
    if len(series) < 2:
        raise ValueError("series too short for metrics")
    t = series.t
    if t[-1] < onset + 10.0:
        raise ValueError(f"series must cover onset + 10 s (ends at {t[-1]:.3f})")

    dev = np.abs(series.theta_deviation())
    after = t >= onset
    t_after = t[after]
    dev_after = dev[after]

    outside = t[dev > bands.settle_band]
    outside = outside[outside >= onset]
    if outside.size == 0:
        settling = 0.0
    elif outside[-1] >= t[-1]:
        settling = UNBOUNDED
    else:
        settling = float(outside[-1] - onset)

    peak = float(dev_after.max())
    if peak == 0.0:
        rise = 0.0
    else:
        i_peak = int(dev_after.argmax())
        post = dev_after[i_peak:]
        t_post = t_after[i_peak:]
        below_hi = np.nonzero(post <= bands.rise_high * peak)[0]
        rise = UNBOUNDED
        if below_hi.size:
            i_hi = below_hi[0]
            below_lo = np.nonzero(post[i_hi:] <= bands.rise_low * peak)[0]
            if below_lo.size:
                rise = float(t_post[i_hi + below_lo[0]] - t_post[i_hi])

    return TransientMetrics(
        settling_time=settling,
        rise_time=rise,
        peak_theta_dev=peak,
        peak_xdot=float(np.abs(series.x_dot[after]).max()),
        sse_theta=_tail_sse(t, series.theta_deviation(), bands),
        sse_x=_tail_sse(t, series.x, bands),
    )


# ---------------------------------------------------------------------------
# benchmark


@dataclass(frozen=True)
class BenchmarkCell:
    controller: str
    scenario: str
    magnitude: Optional[float]
    metrics: TransientMetrics
    diverged: bool
    final_x: float


@dataclass
class BenchmarkTable:
    cells: list[BenchmarkCell]

    def impulse_mean(self, controller: str) -> Optional[TransientMetrics]:
        rows = [c.metrics.as_row() for c in self.cells
                if c.controller == controller and c.scenario == "impulse"]
        if not rows:
            return None
        return TransientMetrics(*(float(np.mean(col)) for col in zip(*rows)))

    def controllers(self) -> list[str]:
        seen: list[str] = []
        for cell in self.cells:
            if cell.controller not in seen:
                seen.append(cell.controller)
        return seen

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(BENCHMARK_HEADER)
            for cell in self.cells:
                writer.writerow(self._csv_row(cell))
            for name in self.controllers():
                mean = self.impulse_mean(name)
                if mean is not None:
                    writer.writerow(self._csv_row(
                        BenchmarkCell(name, "impulse-mean", None, mean, False, math.nan)))

    @staticmethod
    def _csv_row(cell: BenchmarkCell) -> list[str]:
        m = cell.metrics
        return [
            cell.controller,
            cell.scenario,
            "" if cell.magnitude is None else repr(float(cell.magnitude)),
            repr(float(m.settling_time)),
            repr(float(m.rise_time * 1e3)),
            repr(float(math.degrees(m.peak_theta_dev))),
            repr(float(m.peak_xdot)),
            repr(float(m.sse_theta)),
            repr(float(m.sse_x)),
        ]

    def to_text(self) -> str:
        """Aligned comparison in the familiar rows-of-parameters layout."""
        names = self.controllers()
        out = io.StringIO()

        def fmt(v: float, unit_scale: float = 1.0) -> str:
            if math.isinf(v):
                return "unbounded"
            return f"{v * unit_scale:.4g}"

        def section(title: str, rows: list[tuple[str, list[float]]]) -> None:
            out.write(title + "\n")
            out.write(f"{'Parameter':<26}" + "".join(f"{n:>12}" for n in names) + "\n")
            for label, values in rows:
                out.write(f"{label:<26}" + "".join(f"{fmt(v[0], v[1]):>12}" for v in values) + "\n")
            out.write("\n")

        means = {n: self.impulse_mean(n) for n in names}
        if any(means.values()):
            section(
                "Impulse disturbance (mean over magnitudes)",
                [
                    ("Settling time (s)", [(means[n].settling_time, 1.0) for n in names]),
                    ("Deviation of theta (deg)", [(means[n].peak_theta_dev, 180.0 / math.pi) for n in names]),
                    ("Rise time (ms)", [(means[n].rise_time, 1e3) for n in names]),
                    ("Steady state error theta", [(means[n].sse_theta, 1.0) for n in names]),
                    ("Steady state error x", [(means[n].sse_x, 1.0) for n in names]),
                ],
            )
        noise_cells = {c.controller: c for c in self.cells if c.scenario == "noise"}
        if noise_cells:
            section(
                "White-noise disturbance",
                [
                    ("Max deviation theta (deg)",
                     [(noise_cells[n].metrics.peak_theta_dev, 180.0 / math.pi) for n in names]),
                    ("Max deviation x_dot (m/s)",
                     [(noise_cells[n].metrics.peak_xdot, 1.0) for n in names]),
                ],
            )
        return out.getvalue()


def _thread_cap() -> Optional[int]:
    raw = os.environ.get("PENDULUM_LAB_THREADS", "")
    if not raw:
        return None
    cap = int(raw)
    if cap < 1:
        raise ValueError(f"PENDULUM_LAB_THREADS must be >= 1, got {raw!r}")
    return cap


def run_benchmark(
    params: PhysicalParams,
    controller_factories: dict[str, Callable[[], Controller]],
    impulse_magnitudes: Sequence[float],
    impulse: ImpulseSpec,
    noise: NoiseSpec,
    sim_config: SimConfig,
    noise_horizon: Optional[float] = None,
    bands: Optional[MetricBands] = None,
    parallel: bool = True,
) -> BenchmarkTable:
    """Run every controller against every scenario and tabulate the metrics.

    The impulse scenario repeats once per magnitude (the table also reports
    the per-controller mean); the noise scenario runs once, optionally with
    its own shorter horizon.  Each cell owns a fresh controller instance and
    disturbance stream, so cells are independent and any of them diverging is
    reported in-table rather than raised.
    """
    bands = bands or MetricBands()
    noise_cfg = sim_config if noise_horizon is None else replace(sim_config, horizon=noise_horizon)

    jobs = []
    for name, factory in controller_factories.items():
        for magnitude in impulse_magnitudes:
            spec = replace(impulse, magnitude=float(magnitude))
            jobs.append((name, factory, "impulse", float(magnitude), spec, sim_config, spec.onset))
        jobs.append((name, factory, "noise", None, noise, noise_cfg, 0.0))

    def run_cell(job) -> BenchmarkCell:
        name, factory, scenario, magnitude, spec, cfg, onset = job
        controller = factory()
        controller.reset()
        series = run_closed_loop(cfg, controller, make_disturbance(spec), params)
        metrics = compute_metrics(series, onset, bands) if not series.diverged else _ALL_UNBOUNDED
        final_x = float(series.x[-1]) if len(series) else math.nan
        return BenchmarkCell(name, scenario, magnitude, metrics, series.diverged, final_x)

    cap = _thread_cap()
    if parallel and (cap is None or cap > 1):
        workers = min(len(jobs), cap or (os.cpu_count() or 4))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(run_cell, jobs))
    else:
        cells = [run_cell(job) for job in jobs]
    return BenchmarkTable(cells=cells)
