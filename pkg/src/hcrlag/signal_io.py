"""Recordings: CSV loading, windowing and seeded synthetic generation.

Synthetic recordings are produced by a small declarative spec (see
``SynthSpec``).  The random source is NumPy's ``PCG64`` bit generator seeded
through ``numpy.random.SeedSequence(seed).spawn(n_channels)``, one child
stream per channel in declaration order.  Draws inside a channel happen in
term order, so adding a channel at the end never changes earlier channels.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import InputError

__all__ = [
    "Recording",
    "Term",
    "ChannelSpec",
    "SynthSpec",
    "load_csv",
    "write_csv",
    "select_window",
    "generate_synthetic",
    "ar_filter",
]

# AR/ARCH terms are simulated from zero initial state; this many leading
# samples are generated and dropped so the output starts near stationarity.
AR_WARMUP = 2000


@dataclass(frozen=True)
class Recording:
    """Named multichannel time series sharing one sample rate.

    ``samples`` has shape ``(n_channels, length)`` and is made read-only.
    """

    channels: tuple[str, ...]
    samples: np.ndarray
    sample_rate_hz: float = 500.0

    def __post_init__(self) -> None:
        channels = tuple(str(c) for c in self.channels)
        samples = np.array(self.samples, dtype=np.float64, copy=True)
        if samples.ndim == 1:
            samples = samples[None, :]
        if samples.ndim != 2 or samples.shape[0] != len(channels):
            raise InputError(
                f"samples must have shape (n_channels={len(channels)}, length), got {samples.shape}"
            )
        if len(channels) == 0:
            raise InputError("recording needs at least one channel")
        if len(set(channels)) != len(channels):
            raise InputError(f"channel names must be unique: {channels}")
        if samples.shape[1] < 2:
            raise InputError("channels must hold at least 2 samples")
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise InputError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        samples.setflags(write=False)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    @property
    def length(self) -> int:
        return int(self.samples.shape[1])

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.samples[self.channels.index(name)]
        except ValueError:
            raise KeyError(f"no channel named {name!r}") from None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Recording):
            return NotImplemented
        return (
            self.channels == other.channels
            and self.sample_rate_hz == other.sample_rate_hz
            and np.array_equal(self.samples, other.samples)
        )

    __hash__ = None  # type: ignore[assignment]


def _parse_float(text: str) -> float | None:
    try:
        return float(text)
    except ValueError:
        return None


def load_csv(
    path: str | Path,
    id_column: str | None = None,
    channel_subset: Sequence[str] | None = None,
    sample_rate_hz: float = 500.0,
) -> Recording:
    """Load a comma-separated recording with a mandatory header row.

    The first column is treated as an id column (and skipped) when it is
    named by ``id_column`` or when its value on the first data row does not
    parse as a number.  Row numbers in error messages are 1-based file
    lines, the header being row 1.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file, header row required") from None
        rows = list(reader)
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path}: no data rows")

    skip: int | None = None
    if id_column is not None:
        if id_column not in header:
            raise InputError(f"{path}: id column {id_column!r} not in header")
        skip = header.index(id_column)
    elif _parse_float(rows[0][0]) is None:
        skip = 0

    data_cols = [i for i in range(len(header)) if i != skip]
    names = [header[i] for i in data_cols]
    if channel_subset is not None:
        missing = [c for c in channel_subset if c not in names]
        if missing:
            raise InputError(f"{path}: requested channels absent: {missing}")
        wanted = set(channel_subset)
        data_cols = [i for i in data_cols if header[i] in wanted]
        names = [header[i] for i in data_cols]

    values = np.empty((len(data_cols), len(rows)), dtype=np.float64)
    width = len(header)
    for r, row in enumerate(rows):
        lineno = r + 2
        if len(row) != width:
            raise InputError(f"{path}: row {lineno} has {len(row)} fields, header has {width}")
        for c, col in enumerate(data_cols):
            v = _parse_float(row[col])
            if v is None or not math.isfinite(v):
                raise InputError(
                    f"{path}: row {lineno}, column {header[col]!r}: non-finite or non-numeric value {row[col]!r}"
                )
            values[c, r] = v
    return Recording(tuple(names), values, sample_rate_hz)


def write_csv(rec: Recording, path: str | Path) -> None:
    """Write ``rec`` as CSV; ``repr`` formatting keeps values bit-exact."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(rec.channels)
        for row in rec.samples.T:
            writer.writerow([repr(float(v)) for v in row])


def select_window(rec: Recording, start: int, end: int) -> Recording:
    if not (0 <= start < end <= rec.length):
        raise IndexError(f"window [{start}, {end}) invalid for length {rec.length}")
    if end - start < 2:
        raise IndexError("windows must keep at least 2 samples")
    return Recording(rec.channels, rec.samples[:, start:end], rec.sample_rate_hz)


# ---------------------------------------------------------------------------
# synthetic data


_TERM_FIELDS = {
    "iid-gaussian": {"sd"},
    "ar": {"coefficients", "noise_sd", "arch_omega", "arch_alpha", "noise_nu", "intercept"},
    "lagged-copy": {"source", "lag", "gain", "noise_sd"},
    "variance-coupling": {"source", "lag", "gain", "base_sd"},
}


@dataclass(frozen=True)
class Term:
    """One additive generator term of a synthetic channel.

    Kinds and parameters:

    * ``iid-gaussian``: ``sd`` (default 1).
    * ``ar``: ``coefficients`` (nonempty), ``intercept`` (0), ``noise_sd``
      (1); optional ``arch_omega``/``arch_alpha`` make the innovation
      variance ``omega + alpha * eps[t-1]**2``; optional ``noise_nu`` draws
      unit-variance Student-t innovations instead of Gaussian ones.
    * ``lagged-copy``: ``gain * source[t-lag] + noise_sd * N(0,1)``.
    * ``variance-coupling``: ``(base_sd + gain * |source[t-lag]|) * N(0,1)``.

    Source values before the start of the series count as 0.
    """

    kind: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in _TERM_FIELDS:
            raise InputError(f"unknown term type {self.kind!r}")
        extra = set(self.params) - _TERM_FIELDS[self.kind]
        if extra:
            raise InputError(f"{self.kind}: unknown parameters {sorted(extra)}")
        p = self.params
        if self.kind == "ar":
            if not p.get("coefficients"):
                raise InputError("ar term needs a nonempty coefficient list")
            if p.get("noise_nu") is not None and p["noise_nu"] <= 2:
                raise InputError("ar noise_nu must exceed 2")
            if p.get("arch_alpha") is not None and not 0 <= p["arch_alpha"] < 1:
                raise InputError("arch_alpha must lie in [0, 1)")
        if self.kind in ("lagged-copy", "variance-coupling"):
            if "source" not in p or "lag" not in p:
                raise InputError(f"{self.kind} term needs 'source' and 'lag'")
            if int(p["lag"]) < 0:
                raise InputError(f"{self.kind}: lag must be >= 0")

    @property
    def source(self) -> str | None:
        return self.params.get("source")

    @property
    def lag(self) -> int:
        return int(self.params.get("lag", 0))

    def to_dict(self) -> dict[str, Any]:
        return {"type": self.kind, **self.params}


@dataclass(frozen=True)
class ChannelSpec:
    name: str
    terms: tuple[Term, ...]


@dataclass(frozen=True)
class SynthSpec:
    """Declarative synthetic recording.

    JSON form::

        {"length": 10000, "seed": 7, "sample_rate_hz": 500,
         "channels": [
            {"name": "A", "terms": [{"type": "iid-gaussian"}]},
            {"name": "B", "terms": [{"type": "lagged-copy", "source": "A",
                                     "lag": 100, "gain": 1.0, "noise_sd": 0.1}]}]}
    """

    length: int
    channels: tuple[ChannelSpec, ...]
    seed: int = 0
    sample_rate_hz: float = 500.0

    def __post_init__(self) -> None:
        names = [c.name for c in self.channels]
        if not names:
            raise InputError("synthetic spec needs at least one channel")
        if len(set(names)) != len(names):
            raise InputError(f"duplicate channel names: {names}")
        max_lag = 0
        for ch in self.channels:
            if not ch.terms:
                raise InputError(f"channel {ch.name!r} has no terms")
            for t in ch.terms:
                if t.source is not None and t.source not in names:
                    raise InputError(f"channel {ch.name!r} references unknown source {t.source!r}")
                max_lag = max(max_lag, t.lag)
        if self.length < max_lag + 2:
            raise InputError(f"length {self.length} too short for max lag {max_lag}")
        if not 0 <= int(self.seed) < 2**64:
            raise InputError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "SynthSpec":
        channels = []
        for ch in doc["channels"]:
            terms = []
            for t in ch["terms"]:
                t = dict(t)
                kind = t.pop("type")
                terms.append(Term(kind, t))
            channels.append(ChannelSpec(str(ch["name"]), tuple(terms)))
        return cls(
            length=int(doc["length"]),
            channels=tuple(channels),
            seed=int(doc.get("seed", 0)),
            sample_rate_hz=float(doc.get("sample_rate_hz", 500.0)),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthSpec":
        with Path(path).open() as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict[str, Any]:
        return {
            "length": self.length,
            "seed": self.seed,
            "sample_rate_hz": self.sample_rate_hz,
            "channels": [
                {"name": c.name, "terms": [t.to_dict() for t in c.terms]} for c in self.channels
            ],
        }


def ar_filter(coefficients: Sequence[float], innovations: np.ndarray, intercept: float = 0.0) -> np.ndarray:
    """Run ``x[t] = intercept + sum_i c[i] * x[t-1-i] + innovations[t]`` from zero state."""
    a = np.concatenate(([1.0], -np.asarray(coefficients, dtype=np.float64)))
    return lfilter([1.0], a, np.asarray(innovations, dtype=np.float64) + intercept)


def _shifted(x: np.ndarray, lag: int) -> np.ndarray:
    out = np.zeros_like(x)
    if lag == 0:
        out[:] = x
    elif lag < len(x):
        out[lag:] = x[:-lag]
    return out


def _ar_term(p: dict[str, Any], n: int, rng: np.random.Generator) -> np.ndarray:
    total = n + AR_WARMUP
    nu = p.get("noise_nu")
    if nu is None:
        e = rng.standard_normal(total)
    else:
        e = rng.standard_t(nu, total) * math.sqrt((nu - 2.0) / nu)
    if p.get("arch_omega") is not None:
        omega = float(p["arch_omega"])
        alpha = float(p.get("arch_alpha") or 0.0)
        eps = np.empty(total)
        prev = 0.0
        for t in range(total):
            prev = math.sqrt(omega + alpha * prev * prev) * e[t]
            eps[t] = prev
    else:
        eps = float(p.get("noise_sd", 1.0)) * e
    x = ar_filter(p["coefficients"], eps, float(p.get("intercept", 0.0)))
    return x[AR_WARMUP:]


def _generation_order(spec: SynthSpec) -> list[int]:
    index = {c.name: i for i, c in enumerate(spec.channels)}
    deps = [{index[t.source] for t in c.terms if t.source is not None} for c in spec.channels]
    order: list[int] = []
    state = [0] * len(deps)  # 0 new, 1 visiting, 2 done

    def visit(i: int, path: list[str]) -> None:
        if state[i] == 2:
            return
        if state[i] == 1:
            cycle = " -> ".join(path + [spec.channels[i].name])
            raise InputError(f"circular channel references: {cycle}")
        state[i] = 1
        for d in sorted(deps[i]):
            visit(d, path + [spec.channels[i].name])
        state[i] = 2
        order.append(i)

    for i in range(len(deps)):
        visit(i, [])
    return order


def generate_synthetic(spec: SynthSpec) -> Recording:
    """Generate the recording described by ``spec`` (deterministic in ``seed``)."""
    n = spec.length
    streams = np.random.SeedSequence(int(spec.seed)).spawn(len(spec.channels))
    values: dict[int, np.ndarray] = {}
    index = {c.name: i for i, c in enumerate(spec.channels)}
    for i in _generation_order(spec):
        ch = spec.channels[i]
        rng = np.random.Generator(np.random.PCG64(streams[i]))
        x = np.zeros(n)
        for term in ch.terms:
            p = term.params
            if term.kind == "iid-gaussian":
                x += float(p.get("sd", 1.0)) * rng.standard_normal(n)
            elif term.kind == "ar":
                x += _ar_term(p, n, rng)
            elif term.kind == "lagged-copy":
                src = _shifted(values[index[term.source]], term.lag)
                x += float(p.get("gain", 1.0)) * src + float(p.get("noise_sd", 0.0)) * rng.standard_normal(n)
            else:  # variance-coupling
                src = _shifted(values[index[term.source]], term.lag)
                sd = float(p.get("base_sd", 1.0)) + float(p.get("gain", 1.0)) * np.abs(src)
                x += sd * rng.standard_normal(n)
        values[i] = x
    samples = np.vstack([values[i] for i in range(len(spec.channels))])
    return Recording(tuple(c.name for c in spec.channels), samples, spec.sample_rate_hz)


def iter_pairs(names: Iterable[str]) -> list[tuple[str, str]]:
    """Unordered channel pairs ``(a, b)`` with ``a`` before ``b``."""
    names = list(names)
    return [(a, b) for i, a in enumerate(names) for b in names[i + 1 :]]
