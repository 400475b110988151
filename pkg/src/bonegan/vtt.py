"""Visual-Turing-test sessions: trial assembly, durable storage, scoring.

A session shows one image per trial in a seeded shuffled order; the rater
gives a forced-choice answer.  Ground truth lives only in the server-side
log.  Three kinds:

    realism      n real vs n synthetic (age-invariant reconstructions of
                 held-out reals); chance accuracy 50%
    progression  n held-out reals vs their 8-year age-progressed versions
    regression   same with 8-year regression

Each session persists as an append-only JSON-lines log (one line per created
trial and per response, fsynced before acknowledgment), so a restart replays
to exactly the acknowledged state.  Scores are computed in exact rational
arithmetic and rounded only for display.
"""

import json
import os
import secrets
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

from . import metrics
from .errors import ConfigurationError, IngestionError

SESSION_KINDS = ("realism", "progression", "regression")
DEFAULT_COUNTS = {"realism": (50, 50), "progression": (25, 25), "regression": (25, 25)}
SYNTHETIC_LABEL = {"realism": "synthetic", "progression": "progressed",
                   "regression": "regressed"}
SHIFT_YEARS = 8


class VttError(Exception):
    pass


class NotFoundError(VttError):
    pass


class ConflictError(VttError):
    pass


class IncompleteSessionError(VttError):
    pass


@dataclass
class VttSessionSpec:
    kind: str
    model_tag: str = ""
    dataset_tag: str = ""
    n_real: int = 0
    n_synthetic: int = 0
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.kind not in SESSION_KINDS:
            raise ConfigurationError(f"unknown session kind {self.kind!r}")
        default_real, default_syn = DEFAULT_COUNTS[self.kind]
        if self.n_real <= 0:
            self.n_real = default_real
        if self.n_synthetic <= 0:
            self.n_synthetic = default_syn

    @property
    def labels(self):
        return ("real", SYNTHETIC_LABEL[self.kind])

    def to_dict(self):
        return {"kind": self.kind, "model_tag": self.model_tag,
                "dataset_tag": self.dataset_tag, "n_real": self.n_real,
                "n_synthetic": self.n_synthetic, "shuffle_seed": self.shuffle_seed}


@dataclass
class Trial:
    trial_id: str
    image_token: str
    image_file: str
    truth: str  # never serialized into client payloads


@dataclass
class Session:
    session_id: str
    spec: VttSessionSpec
    trials: list = field(default_factory=list)
    responses: dict = field(default_factory=dict)

    @property
    def n_trials(self):
        return len(self.trials)

    @property
    def n_answered(self):
        return len(self.responses)

    def trial_by_id(self, trial_id):
        for t in self.trials:
            if t.trial_id == trial_id:
                return t
        raise NotFoundError(f"trial {trial_id} not in session {self.session_id}")

    def next_unanswered(self):
        for t in self.trials:
            if t.trial_id not in self.responses:
                return t
        return None


# ---------------------------------------------------------------------------
# storage

class SessionStore:
    """Append-only per-session logs under a root directory."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks = {}
        self._guard = threading.Lock()

    def lock(self, session_id):
        with self._guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def session_dir(self, session_id):
        return self.root / session_id

    def images_dir(self, session_id):
        return self.session_dir(session_id) / "images"

    def _log_path(self, session_id):
        return self.session_dir(session_id) / "log.jsonl"

    def append(self, session_id, record):
        path = self._log_path(session_id)
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def create(self, spec, trials):
        session_id = secrets.token_urlsafe(9)
        sdir = self.session_dir(session_id)
        sdir.mkdir(parents=True)
        self.append(session_id, {"type": "meta", "spec": spec.to_dict()})
        for t in trials:
            self.append(session_id, {
                "type": "trial", "trial_id": t.trial_id, "token": t.image_token,
                "file": t.image_file, "truth": t.truth})
        return Session(session_id, spec, list(trials))

    def record_response(self, session, trial_id, answer):
        self.append(session.session_id, {
            "type": "response", "trial_id": trial_id, "answer": answer})
        session.responses[trial_id] = answer

    def load(self, session_id):
        path = self._log_path(session_id)
        if not path.exists():
            raise NotFoundError(f"session {session_id} not found")
        spec = None
        trials = []
        responses = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if rec["type"] == "meta":
                    spec = VttSessionSpec(**rec["spec"])
                elif rec["type"] == "trial":
                    trials.append(Trial(rec["trial_id"], rec["token"],
                                        rec["file"], rec["truth"]))
                elif rec["type"] == "response":
                    responses[rec["trial_id"]] = rec["answer"]
        if spec is None:
            raise NotFoundError(f"session {session_id} has no metadata line")
        return Session(session_id, spec, trials, responses)

    def list_sessions(self):
        return sorted(p.name for p in self.root.iterdir() if (p / "log.jsonl").exists())


# ---------------------------------------------------------------------------
# trial assembly

def save_png(image, path):
    """Write a [-1, 1] image as an 8-bit grayscale PNG."""
    arr = np.asarray(image)
    if arr.ndim == 3:
        arr = arr[0]
    u8 = np.round((np.clip(arr, -1.0, 1.0) + 1.0) * 127.5).astype(np.uint8)
    Image.fromarray(u8, mode="L").save(path)


def assemble_trials(spec, real_files, synthetic_files):
    """Interleave the two pools and shuffle deterministically."""
    real_label, syn_label = spec.labels
    items = [(f, real_label) for f in real_files] + \
            [(f, syn_label) for f in synthetic_files]
    order = np.random.default_rng(spec.shuffle_seed).permutation(len(items))
    trials = []
    for rank, idx in enumerate(order):
        fname, truth = items[idx]
        trials.append(Trial(trial_id=f"t{rank:04d}",
                            image_token=secrets.token_urlsafe(12),
                            image_file=str(fname), truth=truth))
    return trials


def _held_out_indices(dataset):
    for split in ("test", "val"):
        if dataset.size(split) > 0:
            return split
    raise IngestionError("dataset has no held-out (test or val) split")


def render_session_pools(model, dataset, spec, out_dir):
    """Produce (real_files, synthetic_files) for a session spec.

    Realism: disjoint draws of held-out reals; the synthetic pool is their
    age-invariant reconstructions.  Progression/regression: one draw of
    eligible sources shown both as-is and age-shifted by 8 years.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    split = _held_out_indices(dataset)
    images = dataset.images[split]
    bins = dataset.bins[split]
    rng = np.random.default_rng(spec.shuffle_seed)
    k = dataset.num_bins

    if spec.kind == "realism":
        need = spec.n_real + spec.n_synthetic
        if len(images) < need:
            raise IngestionError(
                f"realism session needs {spec.n_real} real + {spec.n_synthetic} "
                f"reconstruction sources; held-out split has {len(images)} "
                f"(short {need - len(images)})")
        picks = rng.choice(len(images), size=need, replace=False)
        real_idx, syn_idx = picks[:spec.n_real], picks[spec.n_real:]
        syn_images = metrics.age_invariant_reconstruct(
            model, images[syn_idx], _one_hot(bins[syn_idx], k))
        real_files = _dump(images[real_idx], out_dir, "real")
        syn_files = _dump(syn_images, out_dir, "synthetic")
        return real_files, syn_files

    shift = SHIFT_YEARS if spec.kind == "progression" else -SHIFT_YEARS
    shift_bins = shift // 4
    eligible = np.flatnonzero((bins + shift_bins >= 0) & (bins + shift_bins < k))
    need = max(spec.n_real, spec.n_synthetic)
    if len(eligible) < need:
        raise IngestionError(
            f"{spec.kind} session needs {need} eligible sources (bin shift "
            f"{shift_bins:+d} must stay in range); held-out split has "
            f"{len(eligible)} (short {need - len(eligible)})")
    picks = eligible[rng.choice(len(eligible), size=need, replace=False)]
    real_files = _dump(images[picks[:spec.n_real]], out_dir, "real")
    shifted = []
    for idx in picks[:spec.n_synthetic]:
        out, _ = metrics.progress_image(model, images[idx:idx + 1],
                                        int(bins[idx]), shift)
        shifted.append(out[0])
    syn_files = _dump(np.stack(shifted), out_dir, spec.labels[1])
    return real_files, syn_files


def _one_hot(bins, k):
    out = np.zeros((len(bins), k), dtype=np.float32)
    out[np.arange(len(bins)), bins] = 1.0
    return out


def _dump(images, out_dir, prefix):
    files = []
    for i, img in enumerate(images):
        path = Path(out_dir) / f"{prefix}_{i:04d}.png"
        save_png(img, path)
        files.append(str(path))
    return files


# ---------------------------------------------------------------------------
# scoring

@dataclass
class VttReport:
    kind: str
    n_trials: int
    n_answered: int
    partial: bool
    exact: dict   # Fractions, keyed by column name
    display: dict  # integers (percent, rounded half up)

    def to_dict(self):
        out = {"kind": self.kind, "n_trials": self.n_trials,
               "n_answered": self.n_answered, "partial": self.partial}
        out.update({k: (int(v) if v is not None else None)
                    for k, v in self.display.items()})
        return out


def _percent(numerator, denominator):
    if denominator == 0:
        return None
    return Fraction(numerator, denominator) * 100


def _round_half_up(frac):
    if frac is None:
        return None
    return int((frac + Fraction(1, 2)).__floor__())


def score_session(session, partial=False):
    """Table-2/3-shaped report for one session."""
    if session.n_trials == 0:
        raise IncompleteSessionError(f"session {session.session_id} has no trials")
    if session.n_answered < session.n_trials and not partial:
        raise IncompleteSessionError(
            f"session {session.session_id}: {session.n_answered}/{session.n_trials} "
            "answered (pass partial=True to score anyway)")

    real_label, syn_label = session.spec.labels
    answered = [(t.truth, session.responses[t.trial_id])
                for t in session.trials if t.trial_id in session.responses]
    if not answered:
        raise IncompleteSessionError(f"session {session.session_id} has no responses")
    n_real = sum(1 for truth, _ in answered if truth == real_label)
    n_syn = len(answered) - n_real
    real_correct = sum(1 for truth, ans in answered
                       if truth == real_label and ans == real_label)
    syn_correct = sum(1 for truth, ans in answered
                      if truth == syn_label and ans == syn_label)
    accuracy = _percent(real_correct + syn_correct, len(answered))

    if session.spec.kind == "realism":
        exact = {
            "accuracy": accuracy,
            "r_as_r": _percent(real_correct, n_real),
            "r_as_s": _percent(n_real - real_correct, n_real),
            "s_as_r": _percent(n_syn - syn_correct, n_syn),
            "s_as_s": _percent(syn_correct, n_syn),
        }
    else:
        exact = {
            "accuracy": accuracy,
            "progression": accuracy if session.spec.kind == "progression" else None,
            "regression": accuracy if session.spec.kind == "regression" else None,
        }
    display = {k: _round_half_up(v) for k, v in exact.items()}
    return VttReport(kind=session.spec.kind, n_trials=session.n_trials,
                     n_answered=session.n_answered,
                     partial=session.n_answered < session.n_trials,
                     exact=exact, display=display)


def combine_shift_reports(progression_report, regression_report):
    """One Table-3 row from a progression and a regression session."""
    if progression_report.kind != "progression" or regression_report.kind != "regression":
        raise ConfigurationError("need one progression and one regression report")
    n = progression_report.n_answered + regression_report.n_answered
    combined = (progression_report.exact["accuracy"] * progression_report.n_answered
                + regression_report.exact["accuracy"] * regression_report.n_answered) / n
    exact = {"accuracy": combined,
             "progression": progression_report.exact["accuracy"],
             "regression": regression_report.exact["accuracy"]}
    return {k: _round_half_up(v) for k, v in exact.items()}, exact


# ---------------------------------------------------------------------------
# response handling

def submit_response(store, session, trial_id, answer):
    """Record one answer: durable before acknowledgment, idempotent on exact
    repeats, conflict on contradiction.  Returns 'recorded' or 'duplicate'."""
    trial = session.trial_by_id(trial_id)
    if answer not in session.spec.labels:
        raise ConfigurationError(
            f"answer {answer!r} not among {session.spec.labels} for this session")
    prev = session.responses.get(trial_id)
    if prev is not None:
        if prev == answer:
            return "duplicate"
        raise ConflictError(
            f"trial {trial_id} already answered {prev!r}; refusing {answer!r}")
    store.record_response(session, trial_id, answer)
    return "recorded"
