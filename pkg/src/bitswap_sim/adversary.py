"""Passive eavesdroppers and the first-timestamp source estimator."""

from __future__ import annotations

import csv
import io
import json
import random
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from bitswap_sim.cid import Cid
from bitswap_sim.simulator import Trace
from bitswap_sim.topology import Role

WANT_HAVE = "want-have"


@dataclass(frozen=True)
class Observation:
    observer: str
    sender: str
    cid: str  # hex digest, possibly truncated to a prefix
    kind: str
    time: float


@dataclass(frozen=True)
class Prediction:
    run_id: str
    predicted: str | None  # None: the estimator abstained
    truth: str

    @property
    def correct(self) -> bool:
        return self.predicted is not None and self.predicted == self.truth


def observations_from_trace(trace: Trace) -> list[Observation]:
    """Everything the eavesdroppers received, in delivery order."""
    out = []
    for d in trace.deliveries:
        if trace.roles.get(d.to) is not Role.EAVESDROPPER:
            continue
        if trace.roles.get(d.frm) is Role.EAVESDROPPER:
            raise ValueError(f"eavesdropper {d.frm} sent a message")
        for kind, cid in d.message.items():
            out.append(Observation(d.to, d.frm, cid.hex(), kind, d.time))
    return out


def observations_from_jsonl(lines: Iterable[str], eavesdroppers: Iterable[str]) -> list[Observation]:
    """Parse a simulator JSON-lines trace, keeping deliveries to ``eavesdroppers``."""
    observers = set(eavesdroppers)
    out = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        if rec["to"] in observers:
            out.append(Observation(rec["to"], rec["from"], rec["cid"], rec["kind"], float(rec["time"])))
    return out


def _matches(obs_cid: str, target: str) -> bool:
    # traces carry cid prefixes; either side may be the shorter one
    n = min(len(obs_cid), len(target))
    return n > 0 and obs_cid[:n] == target[:n]


def first_timestamp_estimate(
    observations: Sequence[Observation], target_cid: Cid | str, tie_seed: int = 0
) -> str | None:
    """Name the sender of the earliest WANT-HAVE for ``target_cid`` seen by any observer.

    Returns None (abstain) when no such request was observed. Exact ties
    between different senders are broken uniformly at random from ``tie_seed``.
    """
    target = target_cid.hex() if isinstance(target_cid, Cid) else target_cid
    best: float | None = None
    tied: set[str] = set()
    for o in observations:
        if o.kind != WANT_HAVE or not _matches(o.cid, target):
            continue
        if best is None or o.time < best:
            best, tied = o.time, {o.sender}
        elif o.time == best:
            tied.add(o.sender)
    if best is None:
        return None
    if len(tied) == 1:
        return next(iter(tied))
    return random.Random(tie_seed).choice(sorted(tied))


def prediction_accuracy(predictions: Sequence[Prediction]) -> float:
    """Fraction of correct predictions; abstentions count as wrong."""
    if not predictions:
        raise ValueError("accuracy of an empty prediction set is undefined")
    return sum(p.correct for p in predictions) / len(predictions)


PREDICTION_HEADER = ("run_id", "predicted", "truth", "correct")


def predictions_csv(predictions: Iterable[Prediction]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PREDICTION_HEADER)
    for p in predictions:
        w.writerow((p.run_id, p.predicted or "", p.truth, int(p.correct)))
    return buf.getvalue()
