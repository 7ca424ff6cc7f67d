"""Two-layer spiking network with a dis-inhibitory artifact-rejection circuit.

Topology::

    UP  --exc--> second layer (per-neuron weight/tau)
    DN  --inh--> second layer (per-neuron weight/tau)
    UP  --exc--> dis-inhibitory
    DN  --exc--> dis-inhibitory
    dis-inhibitory    --inh--> global-inhibitory
    Poisson           --exc--> global-inhibitory
    global-inhibitory --inh--> every second-layer neuron

Neurons are current-mode leaky integrate-and-fire units: the membrane current
relaxes towards the net synaptic current with time constant ``tau_mem`` and
is floored at zero. Synapses are exponential current synapses that jump by
their weight on each presynaptic spike. Currents are in femtoamperes.

The simulation is clock-driven on the delta-modulator tick. Within a tick the
populations are updated in feed-forward order (dis-inhibitory, global
inhibitory, second layer), so a spike reaches its targets in the same tick.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional, Tuple

import numba
import numpy as np

from .adm import TICK, SpikeTrain
from .errors import OutOfRangeParam

UP_SL_WEIGHT_RANGE = (7.0, 14.0)
UP_SL_TAU_RANGE = (3e-3, 6e-3)
DN_SL_WEIGHT_RANGE = (7.0, 14.0)
DN_SL_TAU_OFFSET_RANGE = (0.1e-3, 1e-3)
POISSON_RATE = 135.0


class Population(enum.Enum):
    SECOND_LAYER = "second_layer"
    DIS_INHIBITORY = "dis_inhibitory"
    GLOBAL_INHIBITORY = "global_inhibitory"


class Sign(enum.Enum):
    EXC = "exc"
    INH = "inh"


@dataclass(frozen=True)
class SynapseParams:
    weight: float  # fA, positive; the sign is carried by ``polarity``
    polarity: Sign
    tau: float     # seconds

    def __post_init__(self):
        object.__setattr__(self, "polarity", Sign(self.polarity))
        if not self.weight > 0:
            raise OutOfRangeParam(f"synapse weight must be positive, got {self.weight}")
        if not self.tau > 0:
            raise OutOfRangeParam(f"synapse tau must be positive, got {self.tau}")


@dataclass(frozen=True)
class NeuronParams:
    tau_mem: float      # seconds
    i_threshold: float  # fA
    refractory: float   # seconds
    reset: float = 0.0

    def validate(self, name=""):
        if not (self.tau_mem > 0 and self.i_threshold > 0 and self.refractory > 0):
            raise OutOfRangeParam(f"{name} neuron constants must be positive: {self}")
        if self.reset != 0.0:
            raise OutOfRangeParam(f"{name} neuron reset must be 0, got {self.reset}")


def default_second_layer(n: int = 64):
    """Deterministic coverage of the second-layer weight and time-constant ranges.

    Neurons sit on a square (weight, tau) grid; each DN synapse mirrors its UP
    weight and is faster by an offset that cycles over a grid of offsets along
    the grid diagonals, so every row and column sees every offset.
    """
    side = int(round(np.sqrt(n)))
    if side * side != n:
        raise OutOfRangeParam(f"second layer size must be a perfect square, got {n}")
    weights = np.linspace(*UP_SL_WEIGHT_RANGE, side)
    taus = np.linspace(*UP_SL_TAU_RANGE, side)
    offsets = np.linspace(*DN_SL_TAU_OFFSET_RANGE, side)
    up, dn = [], []
    for i, w in enumerate(weights):
        for j, tau in enumerate(taus):
            d = offsets[(i + j) % side]
            up.append(SynapseParams(float(w), Sign.EXC, float(tau)))
            dn.append(SynapseParams(float(w), Sign.INH, float(tau - d)))
    return tuple(up), tuple(dn)


def _default_up():
    return default_second_layer()[0]


def _default_dn():
    return default_second_layer()[1]


@dataclass(frozen=True)
class NetworkConfig:
    n_second_layer: int = 64
    up_sl: Tuple[SynapseParams, ...] = field(default_factory=_default_up)
    dn_sl: Tuple[SynapseParams, ...] = field(default_factory=_default_dn)
    up_di: SynapseParams = SynapseParams(21.0, Sign.EXC, 5e-3)
    dn_di: SynapseParams = SynapseParams(21.0, Sign.EXC, 5e-3)
    di_gi: SynapseParams = SynapseParams(17.5, Sign.INH, 20e-3)
    poiss_gi: Optional[SynapseParams] = None  # weight resolved by calibration
    gi_sl: SynapseParams = SynapseParams(24.5, Sign.INH, 5e-3)
    poisson_rate: float = POISSON_RATE
    poisson_mode: str = "poisson"  # poisson | regular | off
    poisson_seed: int = 0
    neuron: Dict[Population, NeuronParams] = field(default_factory=dict)
    tick: float = TICK

    def with_calibration(self, cal: "Calibration") -> "NetworkConfig":
        return replace(self, neuron=dict(cal.neuron),
                       poiss_gi=SynapseParams(cal.poiss_gi_weight, Sign.EXC, 5e-3))

    def validate(self) -> None:
        n = self.n_second_layer
        if n < 1:
            raise OutOfRangeParam("second layer needs at least one neuron")
        if len(self.up_sl) != n or len(self.dn_sl) != n:
            raise OutOfRangeParam(f"need {n} up_sl and dn_sl synapses, got {len(self.up_sl)}, {len(self.dn_sl)}")
        eps = 1e-12
        for k, (u, d) in enumerate(zip(self.up_sl, self.dn_sl)):
            if u.polarity is not Sign.EXC or d.polarity is not Sign.INH:
                raise OutOfRangeParam(f"neuron {k}: up_sl must be exc and dn_sl inh")
            if not UP_SL_WEIGHT_RANGE[0] - eps <= u.weight <= UP_SL_WEIGHT_RANGE[1] + eps:
                raise OutOfRangeParam(f"neuron {k}: up_sl weight {u.weight} fA outside {UP_SL_WEIGHT_RANGE}")
            if not UP_SL_TAU_RANGE[0] - eps <= u.tau <= UP_SL_TAU_RANGE[1] + eps:
                raise OutOfRangeParam(f"neuron {k}: up_sl tau {u.tau} s outside {UP_SL_TAU_RANGE}")
            if not DN_SL_WEIGHT_RANGE[0] - eps <= d.weight <= DN_SL_WEIGHT_RANGE[1] + eps:
                raise OutOfRangeParam(f"neuron {k}: dn_sl weight {d.weight} fA outside {DN_SL_WEIGHT_RANGE}")
            off = u.tau - d.tau
            if not DN_SL_TAU_OFFSET_RANGE[0] - eps <= off <= DN_SL_TAU_OFFSET_RANGE[1] + eps:
                raise OutOfRangeParam(f"neuron {k}: dn_sl tau offset {off} s outside {DN_SL_TAU_OFFSET_RANGE}")
        fixed = {"up_di": (self.up_di, 21.0, Sign.EXC, 5e-3), "dn_di": (self.dn_di, 21.0, Sign.EXC, 5e-3),
                 "di_gi": (self.di_gi, 17.5, Sign.INH, 20e-3), "gi_sl": (self.gi_sl, 24.5, Sign.INH, 5e-3)}
        for name, (syn, w, sign, tau) in fixed.items():
            if syn.polarity is not sign or not np.isclose(syn.weight, w) or not np.isclose(syn.tau, tau):
                raise OutOfRangeParam(f"{name} must be {w} fA {sign.value} tau {tau * 1e3} ms, got {syn}")
        if self.poiss_gi is not None and (self.poiss_gi.polarity is not Sign.EXC
                                          or not np.isclose(self.poiss_gi.tau, 5e-3)):
            raise OutOfRangeParam(f"poiss_gi must be exc with tau 5 ms, got {self.poiss_gi}")
        if self.poisson_mode not in ("poisson", "regular", "off"):
            raise OutOfRangeParam(f"unknown poisson_mode {self.poisson_mode!r}")
        if self.poisson_mode != "off":
            if self.poiss_gi is None:
                raise OutOfRangeParam("poiss_gi weight is unset; run calibration first")
            if not self.poisson_rate > 0:
                raise OutOfRangeParam("poisson_rate must be positive")
        for pop in Population:
            if pop not in self.neuron:
                raise OutOfRangeParam(f"missing neuron constants for {pop.value}; run calibration first")
            self.neuron[pop].validate(pop.value)
        if not 0 < self.tick < 1e-3:
            raise OutOfRangeParam(f"tick {self.tick} s out of range")

    # --- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        def syn(s):
            return None if s is None else {"weight_fa": s.weight, "polarity": s.polarity.value, "tau_s": s.tau}
        return {
            "n_second_layer": self.n_second_layer,
            "up_sl": [syn(s) for s in self.up_sl],
            "dn_sl": [syn(s) for s in self.dn_sl],
            "up_di": syn(self.up_di), "dn_di": syn(self.dn_di), "di_gi": syn(self.di_gi),
            "poiss_gi": syn(self.poiss_gi), "gi_sl": syn(self.gi_sl),
            "poisson_rate_hz": self.poisson_rate, "poisson_mode": self.poisson_mode,
            "poisson_seed": self.poisson_seed,
            "neuron": {p.value: asdict(v) for p, v in self.neuron.items()},
            "tick_s": self.tick,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        def syn(s):
            return None if s is None else SynapseParams(float(s["weight_fa"]), Sign(s["polarity"]), float(s["tau_s"]))
        base = cls()
        n = int(d.get("n_second_layer", base.n_second_layer))
        if "up_sl" in d:
            up, dn = tuple(syn(s) for s in d["up_sl"]), tuple(syn(s) for s in d["dn_sl"])
        else:
            up, dn = default_second_layer(n)
        return cls(
            n_second_layer=n, up_sl=up, dn_sl=dn,
            up_di=syn(d["up_di"]) if "up_di" in d else base.up_di,
            dn_di=syn(d["dn_di"]) if "dn_di" in d else base.dn_di,
            di_gi=syn(d["di_gi"]) if "di_gi" in d else base.di_gi,
            poiss_gi=syn(d.get("poiss_gi")),
            gi_sl=syn(d["gi_sl"]) if "gi_sl" in d else base.gi_sl,
            poisson_rate=float(d.get("poisson_rate_hz", POISSON_RATE)),
            poisson_mode=d.get("poisson_mode", "poisson"),
            poisson_seed=int(d.get("poisson_seed", 0)),
            neuron={Population(k): NeuronParams(**v) for k, v in (d.get("neuron") or {}).items()},
            tick=float(d.get("tick_s", TICK)),
        )


@dataclass(frozen=True)
class Calibration:
    """Resolved values of the constants the synapse table leaves open."""

    neuron: Dict[Population, NeuronParams]
    poiss_gi_weight: float


# --- simulation kernel ------------------------------------------------------

# trace columns when recording
TRACE_COLUMNS = ("di_in", "di_mem", "gi_in", "gi_mem", "sl_in", "sl_mem")


@numba.njit(cache=True)
def _count_at(ticks, ptr, k):
    c = 0
    while ptr < ticks.size and ticks[ptr] == k:
        c += 1
        ptr += 1
    return c, ptr


@numba.njit(cache=True)
def _step_neuron(mem, i_in, decay, thr, k, refr_until, refr_ticks):
    """Advance one membrane; returns (mem, spiked, refr_until)."""
    if k < refr_until:
        return 0.0, False, refr_until
    mem = i_in + (mem - i_in) * decay
    if mem < 0.0:
        mem = 0.0
    if mem >= thr:
        return 0.0, True, k + refr_ticks
    return mem, False, refr_until


@numba.njit(cache=True)
def _run_kernel(n_ticks, up_ticks, dn_ticks, drive_ticks,
                w_up_sl, d_up_sl, w_dn_sl, d_dn_sl,
                w_up_di, d_up_di, w_dn_di, d_dn_di,
                w_di_gi, d_di_gi, w_drive, d_drive, w_gi_sl, d_gi_sl,
                sl_decay, sl_thr, sl_refr, di_decay, di_thr, di_refr, gi_decay, gi_thr, gi_refr,
                out_neuron, out_tick, trace, probe):
    n_sl = w_up_sl.size
    up_sl = np.zeros(n_sl)
    dn_sl = np.zeros(n_sl)
    mem_sl = np.zeros(n_sl)
    refr_sl = np.zeros(n_sl, np.int64)
    i_up_di = 0.0
    i_dn_di = 0.0
    i_di_gi = 0.0
    i_drive = 0.0
    i_gi_sl = 0.0
    mem_di = 0.0
    mem_gi = 0.0
    refr_di = 0
    refr_gi = 0
    pu = 0
    pd = 0
    pp = 0
    n_out = 0
    cap = out_tick.size
    do_trace = trace.shape[0] > 0
    for k in range(n_ticks):
        nu, pu = _count_at(up_ticks, pu, k)
        nd, pd = _count_at(dn_ticks, pd, k)
        npois, pp = _count_at(drive_ticks, pp, k)

        # dis-inhibitory neuron
        i_up_di = i_up_di * d_up_di + w_up_di * nu
        i_dn_di = i_dn_di * d_dn_di + w_dn_di * nd
        di_in = i_up_di + i_dn_di
        mem_di, s_di, refr_di = _step_neuron(mem_di, di_in, di_decay, di_thr, k, refr_di, di_refr)
        if s_di:
            if n_out < cap:
                out_neuron[n_out] = n_sl
                out_tick[n_out] = k
            n_out += 1

        # global-inhibitory neuron
        i_drive = i_drive * d_drive + w_drive * npois
        i_di_gi = i_di_gi * d_di_gi + (w_di_gi if s_di else 0.0)
        gi_in = i_drive - i_di_gi
        mem_gi, s_gi, refr_gi = _step_neuron(mem_gi, gi_in, gi_decay, gi_thr, k, refr_gi, gi_refr)
        if s_gi:
            if n_out < cap:
                out_neuron[n_out] = n_sl + 1
                out_tick[n_out] = k
            n_out += 1

        # second layer
        i_gi_sl = i_gi_sl * d_gi_sl + (w_gi_sl if s_gi else 0.0)
        for j in range(n_sl):
            up_sl[j] = up_sl[j] * d_up_sl[j] + w_up_sl[j] * nu
            dn_sl[j] = dn_sl[j] * d_dn_sl[j] + w_dn_sl[j] * nd
            sl_in = up_sl[j] - dn_sl[j] - i_gi_sl
            m, s, r = _step_neuron(mem_sl[j], sl_in, sl_decay, sl_thr, k, refr_sl[j], sl_refr)
            mem_sl[j] = m
            refr_sl[j] = r
            if s:
                if n_out < cap:
                    out_neuron[n_out] = j
                    out_tick[n_out] = k
                n_out += 1
        if do_trace:
            trace[k, 0] = di_in
            trace[k, 1] = mem_di
            trace[k, 2] = gi_in
            trace[k, 3] = mem_gi
            trace[k, 4] = up_sl[probe] - dn_sl[probe] - i_gi_sl
            trace[k, 5] = mem_sl[probe]
    return n_out


@dataclass
class SpikeRaster:
    """Spikes of all dynamic neurons.

    Neuron ids ``0..n-1`` are second-layer neurons, ``n`` is the
    dis-inhibitory neuron and ``n+1`` the global-inhibitory neuron.
    """

    neuron: np.ndarray
    ticks: np.ndarray
    n_second_layer: int
    duration: float
    tick: float = TICK
    traces: Optional[np.ndarray] = None

    def population_of(self, neuron_id: int) -> Population:
        if neuron_id < self.n_second_layer:
            return Population.SECOND_LAYER
        return Population.DIS_INHIBITORY if neuron_id == self.n_second_layer else Population.GLOBAL_INHIBITORY

    def _mask(self, pop: Population) -> np.ndarray:
        n = self.n_second_layer
        if pop is Population.SECOND_LAYER:
            return self.neuron < n
        return self.neuron == (n if pop is Population.DIS_INHIBITORY else n + 1)

    def ticks_of(self, pop: Population) -> np.ndarray:
        return self.ticks[self._mask(pop)]

    def times(self, pop: Population) -> np.ndarray:
        return self.ticks_of(pop) * self.tick

    def count(self, pop: Population) -> int:
        return int(np.count_nonzero(self._mask(pop)))

    def neuron_times(self, neuron_id: int) -> np.ndarray:
        return self.ticks[self.neuron == neuron_id] * self.tick

    def by_population(self) -> Dict[Population, Dict[int, np.ndarray]]:
        out: Dict[Population, Dict[int, np.ndarray]] = {p: {} for p in Population}
        for nid in np.unique(self.neuron):
            out[self.population_of(int(nid))][int(nid)] = self.neuron_times(int(nid))
        return out

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["neuron_id", "population", "timestamp_s"])
            for nid, t in zip(self.neuron, self.ticks):
                w.writerow([int(nid), self.population_of(int(nid)).value, f"{t * self.tick:.9f}"])
        return path


def poisson_ticks(rate: float, n_ticks: int, tick: float, seed: int, mode: str = "poisson") -> np.ndarray:
    """Drive spike ticks for the global-inhibitory neuron."""
    if mode == "off" or rate <= 0:
        return np.empty(0, np.int64)
    duration = n_ticks * tick
    if mode == "regular":
        times = np.arange(0.0, duration, 1.0 / rate)
    else:
        rng = np.random.default_rng(seed)
        expected = int(rate * duration)
        chunks, total = [], 0.0
        while True:
            gaps = rng.exponential(1.0 / rate, size=expected + 16 * int(np.sqrt(expected + 1)) + 16)
            t = total + np.cumsum(gaps)
            chunks.append(t)
            total = t[-1]
            if total >= duration:
                break
        times = np.concatenate(chunks)
        times = times[times < duration]
    return np.floor(times / tick + 1e-9).astype(np.int64)


class Network:
    """A validated, simulation-ready network."""

    def __init__(self, cfg: NetworkConfig):
        cfg.validate()
        self.cfg = cfg
        dt = cfg.tick
        self.n_second_layer = cfg.n_second_layer
        self._w_up_sl = np.array([s.weight for s in cfg.up_sl])
        self._d_up_sl = np.exp(-dt / np.array([s.tau for s in cfg.up_sl]))
        self._w_dn_sl = np.array([s.weight for s in cfg.dn_sl])
        self._d_dn_sl = np.exp(-dt / np.array([s.tau for s in cfg.dn_sl]))
        pg = cfg.poiss_gi or SynapseParams(1.0, Sign.EXC, 5e-3)
        self._syn = [
            cfg.up_di.weight, np.exp(-dt / cfg.up_di.tau),
            cfg.dn_di.weight, np.exp(-dt / cfg.dn_di.tau),
            cfg.di_gi.weight, np.exp(-dt / cfg.di_gi.tau),
            pg.weight, np.exp(-dt / pg.tau),
            cfg.gi_sl.weight, np.exp(-dt / cfg.gi_sl.tau),
        ]
        self._neur = []
        for pop in (Population.SECOND_LAYER, Population.DIS_INHIBITORY, Population.GLOBAL_INHIBITORY):
            p = cfg.neuron[pop]
            self._neur += [np.exp(-dt / p.tau_mem), p.i_threshold, int(np.ceil(p.refractory / dt - 1e-9))]

    @property
    def n_neurons(self) -> int:
        return self.n_second_layer + 2

    def adjacency(self) -> Dict[Tuple[str, str], str]:
        """(source, target population) -> sign, as wired by the kernel."""
        return {
            ("up", Population.SECOND_LAYER.value): "exc",
            ("dn", Population.SECOND_LAYER.value): "inh",
            ("up", Population.DIS_INHIBITORY.value): "exc",
            ("dn", Population.DIS_INHIBITORY.value): "exc",
            (Population.DIS_INHIBITORY.value, Population.GLOBAL_INHIBITORY.value): "inh",
            ("poisson", Population.GLOBAL_INHIBITORY.value): "exc",
            (Population.GLOBAL_INHIBITORY.value, Population.SECOND_LAYER.value): "inh",
        }

    def drive(self, n_ticks: int, seed: Optional[int] = None) -> np.ndarray:
        cfg = self.cfg
        return poisson_ticks(cfg.poisson_rate, n_ticks, cfg.tick,
                             cfg.poisson_seed if seed is None else seed, cfg.poisson_mode)

    def run(self, up, dn, duration: float, drive: Optional[np.ndarray] = None,
            seed: Optional[int] = None, record: bool = False, probe: int = 0) -> SpikeRaster:
        """Simulate ``duration`` seconds.

        ``up`` and ``dn`` are spike trains (or tick arrays) starting at t=0.
        ``drive`` overrides the generated Poisson ticks; ``seed`` overrides
        ``cfg.poisson_seed``. With ``record`` the state traces listed in
        :data:`TRACE_COLUMNS` are kept, ``probe`` picking the second-layer
        neuron.
        """
        n_ticks = int(np.ceil(duration / self.cfg.tick - 1e-9))
        up_t = _as_ticks(up, n_ticks)
        dn_t = _as_ticks(dn, n_ticks)
        if drive is None:
            drive = self.drive(n_ticks, seed)
        drive = _as_ticks(drive, n_ticks)
        trace = np.zeros((n_ticks, 6) if record else (0, 6))
        cap = max(1024, n_ticks // 8)
        while True:
            out_n = np.empty(cap, np.int64)
            out_t = np.empty(cap, np.int64)
            n = _run_kernel(n_ticks, up_t, dn_t, drive,
                            self._w_up_sl, self._d_up_sl, self._w_dn_sl, self._d_dn_sl,
                            *self._syn, *self._neur, out_n, out_t, trace, probe)
            if n <= cap:
                break
            cap = n
        return SpikeRaster(out_n[:n].copy(), out_t[:n].copy(), self.n_second_layer, n_ticks * self.cfg.tick,
                           self.cfg.tick, trace if record else None)


def _as_ticks(x, n_ticks: int) -> np.ndarray:
    if isinstance(x, SpikeTrain):
        t = x.ticks
    else:
        t = np.asarray(x if x is not None else (), dtype=np.int64)
    t = np.sort(t, kind="stable")
    return np.ascontiguousarray(t[(t >= 0) & (t < n_ticks)], dtype=np.int64)


def build_network(cfg: NetworkConfig) -> Network:
    return Network(cfg)
