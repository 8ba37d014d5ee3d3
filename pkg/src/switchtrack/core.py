"""Shared domain types, simplex arithmetic, and the share transition kernel.

Expert indices are 0-based everywhere in memory; the IO helpers convert
to/from the 1-based convention used in files and documentation.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateVector, DimensionError

SIMPLEX_TOL = 1e-12

# Default feasibility constants; overridable wherever a ControlBounds is accepted.
RHO_MAX = 0.5
EPSILON = 0.01
ETA_MIN = 1e-4

LOSS_MAGIC = b"STLOSS01"  # 8 bytes; header is magic + uint32 T + uint32 K


def normalize(v) -> "MixtureWeights":
    """Scale a nonnegative vector onto the simplex.

    The residual 1 - sum(out) (a few ulp) is absorbed into the largest
    coordinate so the result sums to exactly 1.0, which makes normalize
    idempotent in the bitwise sense.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DegenerateVector(f"expected a nonempty 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DegenerateVector("non-finite input")
    if np.any(v < 0):
        raise DegenerateVector("negative coordinate")
    s = v.sum()
    if s <= 0.0:
        raise DegenerateVector("all-zero input")
    out = v / s
    out[np.argmax(out)] += 1.0 - out.sum()
    return MixtureWeights(out)


def uniform_weights(k: int) -> "MixtureWeights":
    return normalize(np.ones(k))


@dataclass(frozen=True)
class MixtureWeights:
    """A point on the K-simplex: the learner's committed decision."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise DimensionError(f"weights must be a nonempty vector, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise DegenerateVector("non-finite weight")
        if np.any(p < 0):
            raise DegenerateVector("negative weight")
        if abs(p.sum() - 1.0) > SIMPLEX_TOL:
            raise DegenerateVector(f"weights sum to {p.sum()!r}, not 1")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @property
    def k(self) -> int:
        return self.probs.size

    def __len__(self) -> int:
        return self.probs.size


@dataclass(frozen=True)
class BoundedLossMatrix:
    """T x K matrix of losses in [0, 1]; the single shared input to learner,
    oracle, and certificates."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim != 2 or e.shape[0] < 1 or e.shape[1] < 1:
            raise DimensionError(f"loss matrix must be T x K with T,K >= 1, got {e.shape}")
        if not np.all(np.isfinite(e)):
            raise DataError("non-finite loss entry")
        if e.min() < 0.0 or e.max() > 1.0:
            raise DataError(f"loss entries outside [0,1]: min={e.min()}, max={e.max()}")
        e = e.copy()
        e.flags.writeable = False
        object.__setattr__(self, "entries", e)

    @property
    def T(self) -> int:
        return self.entries.shape[0]

    @property
    def K(self) -> int:
        return self.entries.shape[1]

    def row(self, t: int) -> np.ndarray:
        return self.entries[t]


@dataclass(frozen=True)
class ControlBounds:
    """Feasibility constants for admissible update controls."""

    rho_max: float = RHO_MAX
    epsilon: float = EPSILON
    eta_min: float = ETA_MIN

    def __post_init__(self):
        if not (0.0 < self.rho_max <= 0.5):
            raise DataError(f"rho_max must be in (0, 1/2], got {self.rho_max}")
        if not (0.0 < self.epsilon <= 1.0):
            raise DataError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if not (self.eta_min > 0.0):
            raise DataError(f"eta_min must be positive, got {self.eta_min}")


DEFAULT_BOUNDS = ControlBounds()


@dataclass(frozen=True)
class UpdateControls:
    """Per-round triple (eta, rho, q): learning rate, restart intensity,
    restart destination."""

    eta: float
    rho: float
    q: MixtureWeights

    def __post_init__(self):
        if not np.isfinite(self.eta) or self.eta <= 0.0:
            raise DataError(f"eta must be a positive real, got {self.eta}")
        if not np.isfinite(self.rho) or not (0.0 <= self.rho < 1.0):
            raise DataError(f"rho must lie in [0, 1), got {self.rho}")


def check_admissible(c: UpdateControls, bounds: ControlBounds = DEFAULT_BOUNDS) -> None:
    """Raise DataError if controls violate the feasibility bounds."""
    if c.eta < bounds.eta_min:
        raise DataError(f"eta {c.eta} below eta_min {bounds.eta_min}")
    if not (c.rho < bounds.rho_max):
        raise DataError(f"rho {c.rho} not below rho_max {bounds.rho_max}")
    floor = bounds.epsilon / c.q.k
    if c.q.probs.min() < floor - SIMPLEX_TOL:
        raise DataError(
            f"restart distribution below epsilon-uniform floor {floor} "
            f"(min coordinate {c.q.probs.min()})"
        )


@dataclass(frozen=True)
class ComparatorPath:
    """A sequence of expert choices, one per round (0-based indices)."""

    experts: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.experts, dtype=np.int64)
        if e.ndim != 1 or e.size == 0:
            raise DimensionError(f"path must be a nonempty vector, got shape {e.shape}")
        if e.min() < 0:
            raise IndexError(f"negative expert index {e.min()}")
        e = e.copy()
        e.flags.writeable = False
        object.__setattr__(self, "experts", e)

    @property
    def T(self) -> int:
        return self.experts.size

    def switch_count(self) -> int:
        return int(np.sum(self.experts[1:] != self.experts[:-1]))

    def switch_flags(self) -> np.ndarray:
        """Boolean vector of length T-1; flags[t] = path switches between t and t+1."""
        return self.experts[1:] != self.experts[:-1]


@dataclass
class RunTrace:
    """Full record of one online run, sufficient to evaluate every certificate
    after the fact.

    weights[t] is the mixture played at round t (T rows);
    controls[t] maps weights[t] to weights[t+1] (T-1 entries);
    incurred[t] = <weights[t], loss row t>.
    raw_policy, when present, carries the controller's pre-feasibility switch
    probability p_t and restart distribution q_t for each transition.
    """

    weights: np.ndarray           # (T, K)
    etas: np.ndarray              # (T-1,)
    rhos: np.ndarray              # (T-1,)
    qs: np.ndarray                # (T-1, K)
    incurred: np.ndarray          # (T,)
    raw_p: np.ndarray | None = None   # (T-1,), p_t in (0,1)
    raw_q: np.ndarray | None = None   # (T-1, K)
    schema_version: int = field(default=1)

    @property
    def T(self) -> int:
        return self.weights.shape[0]

    @property
    def K(self) -> int:
        return self.weights.shape[1]

    def controls(self, t: int) -> UpdateControls:
        return UpdateControls(float(self.etas[t]), float(self.rhos[t]), MixtureWeights(self.qs[t]))

    def has_raw_policy(self) -> bool:
        return self.raw_p is not None and self.raw_q is not None


def transition_prob(i: int, j: int, rho: float, q: MixtureWeights) -> float:
    """Share transition kernel A(i -> j) = (1 - rho) 1{i=j} + rho q(j)."""
    if not (0.0 <= rho <= 1.0):
        raise DataError(f"rho must lie in [0, 1], got {rho}")
    k = q.k
    if not (0 <= i < k) or not (0 <= j < k):
        raise IndexError(f"expert index out of range for K={k}: i={i}, j={j}")
    return (1.0 - rho) * (1.0 if i == j else 0.0) + rho * float(q.probs[j])


def transition_matrix(rho: float, q: MixtureWeights) -> np.ndarray:
    """Full K x K kernel induced by (rho, q); each row sums to 1."""
    k = q.k
    return (1.0 - rho) * np.eye(k) + rho * np.tile(q.probs, (k, 1))


def mixture_loss(w: MixtureWeights, loss_row) -> float:
    """Inner product <w, loss_row>; in [0,1] when the inputs are."""
    row = np.asarray(loss_row, dtype=np.float64)
    if row.shape != (w.k,):
        raise DimensionError(f"loss row shape {row.shape} does not match K={w.k}")
    return float(np.dot(w.probs, row))


# ---------------------------------------------------------------------------
# Loss-matrix serialization: CSV with header k1..kK, and a binary column-major
# dump with a 16-byte header (magic, T, K). Both round-trip bit-exactly.
# ---------------------------------------------------------------------------

def save_losses_csv(losses: BoundedLossMatrix, path) -> None:
    header = ",".join(f"k{j + 1}" for j in range(losses.K))
    with open(path, "w") as f:
        f.write(header + "\n")
        for t in range(losses.T):
            f.write(",".join(repr(float(x)) for x in losses.entries[t]) + "\n")


def load_losses_csv(path) -> BoundedLossMatrix:
    with open(path) as f:
        header = f.readline().strip()
        if not header:
            raise DataError("empty loss CSV")
        cols = header.split(",")
        if cols != [f"k{j + 1}" for j in range(len(cols))]:
            raise DataError(f"unexpected loss CSV header: {header!r}")
        rows = []
        for line in f:
            line = line.strip()
            if not line:
                continue
            vals = [float(x) for x in line.split(",")]
            if len(vals) != len(cols):
                raise DataError(f"row has {len(vals)} fields, expected {len(cols)}")
            rows.append(vals)
    if not rows:
        raise DataError("loss CSV has no data rows")
    return BoundedLossMatrix(np.array(rows, dtype=np.float64))


def save_losses_binary(losses: BoundedLossMatrix, path) -> None:
    with open(path, "wb") as f:
        f.write(LOSS_MAGIC)
        f.write(struct.pack("<II", losses.T, losses.K))
        f.write(np.asfortranarray(losses.entries).tobytes(order="F"))


def load_losses_binary(path) -> BoundedLossMatrix:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != LOSS_MAGIC:
            raise DataError(f"bad magic {magic!r}")
        t, k = struct.unpack("<II", f.read(8))
        body = f.read(8 * t * k)
        if len(body) != 8 * t * k:
            raise DataError("truncated loss binary")
    entries = np.frombuffer(body, dtype=np.float64).reshape((t, k), order="F")
    return BoundedLossMatrix(entries)


# ---------------------------------------------------------------------------
# Path serialization: one-column CSV of 1-based expert indices.
# ---------------------------------------------------------------------------

def save_path_csv(path_obj: ComparatorPath, path) -> None:
    with open(path, "w") as f:
        f.write("expert\n")
        for e in path_obj.experts:
            f.write(f"{int(e) + 1}\n")


def load_path_csv(path) -> ComparatorPath:
    with open(path) as f:
        header = f.readline().strip()
        if header != "expert":
            raise DataError(f"unexpected path CSV header: {header!r}")
        experts = [int(line.strip()) - 1 for line in f if line.strip()]
    if not experts:
        raise DataError("path CSV has no rows")
    return ComparatorPath(np.array(experts, dtype=np.int64))


# ---------------------------------------------------------------------------
# RunTrace serialization: JSON-lines, one record per round. Controls for the
# terminal round are absent (null) since no update follows it.
# ---------------------------------------------------------------------------

def save_trace_jsonl(trace: RunTrace, path) -> None:
    with open(path, "w") as f:
        f.write(json.dumps({"schema_version": trace.schema_version,
                            "T": trace.T, "K": trace.K}) + "\n")
        for t in range(trace.T):
            rec = {
                "t": t + 1,
                "w": [float(x) for x in trace.weights[t]],
                "incurred": float(trace.incurred[t]),
            }
            if t < trace.T - 1:
                rec["eta"] = float(trace.etas[t])
                rec["rho"] = float(trace.rhos[t])
                rec["q"] = [float(x) for x in trace.qs[t]]
                if trace.has_raw_policy():
                    rec["raw_p"] = float(trace.raw_p[t])
                    rec["raw_q"] = [float(x) for x in trace.raw_q[t]]
            else:
                rec["eta"] = rec["rho"] = rec["q"] = None
            f.write(json.dumps(rec) + "\n")


def load_trace_jsonl(path) -> RunTrace:
    with open(path) as f:
        head = json.loads(f.readline())
        if head.get("schema_version") != 1:
            raise DataError(f"unsupported trace schema {head.get('schema_version')!r}")
        t_len, k = head["T"], head["K"]
        weights = np.zeros((t_len, k))
        incurred = np.zeros(t_len)
        etas = np.zeros(max(t_len - 1, 0))
        rhos = np.zeros(max(t_len - 1, 0))
        qs = np.zeros((max(t_len - 1, 0), k))
        raw_p = np.zeros(max(t_len - 1, 0))
        raw_q = np.zeros((max(t_len - 1, 0), k))
        saw_raw = False
        for line in f:
            rec = json.loads(line)
            t = rec["t"] - 1
            weights[t] = rec["w"]
            incurred[t] = rec["incurred"]
            if t < t_len - 1:
                etas[t] = rec["eta"]
                rhos[t] = rec["rho"]
                qs[t] = rec["q"]
                if "raw_p" in rec:
                    saw_raw = True
                    raw_p[t] = rec["raw_p"]
                    raw_q[t] = rec["raw_q"]
    return RunTrace(weights, etas, rhos, qs, incurred,
                    raw_p=raw_p if saw_raw else None,
                    raw_q=raw_q if saw_raw else None)
