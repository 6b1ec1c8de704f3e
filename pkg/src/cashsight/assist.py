"""Assistive interaction logic: the sustained-detection announcer and the
tap-gesture money-counting ledger.

A denomination is announced only after the same class has been on screen
for the full window (default 3 s) across a minimum number of frames; brief
dropouts within the grace period do not restart the window, but a class
change does.  Each lock announces once; the lock clears after the grace
period of absence so the same note can be counted again later.

The ledger keeps one running total per currency group (USD, EUR, EURCENT,
BDT).  Double-tap adds the locked denomination, triple-tap undoes the last
addition, a long press clears everything.  Every gesture produces speech.

All transitions are pure: they return new state objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .config import AssistConfig, SpeechConfig
from .datakit import GROUP_UNIT, class_lookup

GESTURE_KINDS = ("double_tap", "triple_tap", "long_press")


@dataclass(frozen=True)
class SpeechEvent:
    text: str
    kind: str  # announce | total | undo | cancel | no_currency


@dataclass(frozen=True)
class Gesture:
    kind: str
    timestamp: int

    def __post_init__(self):
        if self.kind not in GESTURE_KINDS:
            raise ValueError(f"unknown gesture kind {self.kind!r}")


@dataclass(frozen=True)
class StabilizerState:
    config: AssistConfig = field(default_factory=AssistConfig)
    candidate_class: int | None = None
    window_start: int = 0
    last_seen: int = 0
    locked: bool = False
    frames_seen: int = 0
    last_update: int | None = None


def _reset(state: StabilizerState, now: int) -> StabilizerState:
    return replace(state, candidate_class=None, window_start=now, last_seen=now, locked=False, frames_seen=0, last_update=now)


def stabilizer_update(
    state: StabilizerState,
    now: int,
    top: tuple[int, float] | None,
    speech: SpeechConfig | None = None,
) -> tuple[StabilizerState, SpeechEvent | None]:
    """Advance the stabilizer by one frame observation.

    ``top`` is the highest-confidence detection as (class_id, confidence),
    or None.  Returns the new state and an announce event on the update
    that completes the window.
    """
    if state.last_update is not None and now < state.last_update:
        raise ValueError(f"time went backwards: {now} < {state.last_update}")
    speech = speech or SpeechConfig()
    cfg = state.config

    detected = top is not None and top[1] >= cfg.conf_threshold
    if not detected:
        if state.candidate_class is not None and now - state.last_seen > cfg.grace_ms:
            return _reset(state, now), None
        return replace(state, last_update=now), None

    cls = top[0]
    if cls != state.candidate_class:
        return (
            replace(
                state,
                candidate_class=cls,
                window_start=now,
                last_seen=now,
                locked=False,
                frames_seen=1,
                last_update=now,
            ),
            None,
        )

    new_state = replace(state, last_seen=now, frames_seen=state.frames_seen + 1, last_update=now)
    if (
        not state.locked
        and now - state.window_start >= cfg.window_ms
        and new_state.frames_seen >= cfg.min_frames
    ):
        entry = class_lookup(cls)
        text = speech.announce.format(amount=entry.value, unit=GROUP_UNIT[entry.group])
        return replace(new_state, locked=True), SpeechEvent(text, "announce")
    return new_state, None


@dataclass(frozen=True)
class LedgerState:
    totals: tuple[tuple[str, int], ...] = (("USD", 0), ("EUR", 0), ("EURCENT", 0), ("BDT", 0))
    history: tuple[tuple[str, int], ...] = ()

    def total(self, group: str) -> int:
        return dict(self.totals)[group]

    def _with_total(self, group: str, value: int) -> "LedgerState":
        return replace(self, totals=tuple((g, value if g == group else v) for g, v in self.totals))


def ledger_apply(
    ledger: LedgerState,
    gesture: Gesture,
    stabilizer: StabilizerState,
    speech: SpeechConfig | None = None,
) -> tuple[LedgerState, SpeechEvent]:
    """Apply one gesture; every path speaks something."""
    speech = speech or SpeechConfig()

    if gesture.kind == "double_tap":
        if not stabilizer.locked or stabilizer.candidate_class is None:
            return ledger, SpeechEvent(speech.no_currency, "no_currency")
        entry = class_lookup(stabilizer.candidate_class)
        unit = GROUP_UNIT[entry.group]
        new_total = ledger.total(entry.group) + entry.value
        new_ledger = ledger._with_total(entry.group, new_total)
        new_ledger = replace(new_ledger, history=ledger.history + ((entry.group, entry.value),))
        return new_ledger, SpeechEvent(speech.total.format(total=new_total, unit=unit), "total")

    if gesture.kind == "triple_tap":
        if not ledger.history:
            return ledger, SpeechEvent(speech.nothing_to_undo, "undo")
        group, value = ledger.history[-1]
        new_total = ledger.total(group) - value
        new_ledger = ledger._with_total(group, new_total)
        new_ledger = replace(new_ledger, history=ledger.history[:-1])
        text = speech.removed.format(amount=value, unit=GROUP_UNIT[group], total=new_total)
        return new_ledger, SpeechEvent(text, "undo")

    # long_press
    return LedgerState(), SpeechEvent(speech.canceled, "cancel")


def classify_gesture(touches, config: AssistConfig | None = None) -> Gesture | None:
    """Classify one completed touch episode into a gesture, if any.

    ``touches`` is a time-ordered list of (down_ms, up_ms).  A press held
    past the hold threshold is a long press, emitted at the crossing; short
    presses chain into a tap sequence while the inter-tap gap stays within
    the configured limit.  Two taps make a double, three a triple; anything
    else is no gesture.
    """
    config = config or AssistConfig()
    if not touches:
        return None
    for (d1, u1), (d2, _) in zip(touches, touches[1:]):
        if d2 < u1:
            raise ValueError(f"overlapping touches at {d2} (previous up {u1})")

    taps = 0
    last_up = None
    for down, up in touches:
        if up - down >= config.hold_ms:
            return Gesture("long_press", down + config.hold_ms)
        if up - down >= config.tap_max_press_ms:
            return None  # between a tap and a hold: not in the vocabulary
        if last_up is not None and down - last_up > config.tap_gap_ms:
            break  # quiet period ended the sequence
        taps += 1
        last_up = up
    if taps == 2:
        return Gesture("double_tap", last_up)
    if taps == 3:
        return Gesture("triple_tap", last_up)
    return None
