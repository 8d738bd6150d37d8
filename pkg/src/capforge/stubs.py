"""Deterministic offline stand-ins for the annotator and judge endpoints.

Stub outputs are pure functions of (prompt text, seed), so pipelines run
against them are byte-identical across reruns. The annotator stub always
produces a caption that passes the default validation rules; the judge stub
answers with a single option letter.
"""

from __future__ import annotations

import hashlib
import re

from .client import Transport

_CATEGORY_PAT = re.compile(
    r"Describe in detail the (?P<a>.+?) inside|Category hint: (?P<b>.+?)\.", re.IGNORECASE
)
_OBB_PAT = re.compile(r"\[(-?\d+(?:,-?\d+){7})\]")

_COLORS = ["white", "light gray", "dark gray", "pale brown", "muted red", "deep green", "sand-colored", "slate blue"]
_SHAPES = ["elongated", "compact", "rectangular", "rounded", "angular", "tapered"]
_SURFACES = ["a flat paved apron", "bare packed earth", "short uniform vegetation", "a concrete pad", "cracked asphalt", "open water"]
_NEIGHBORS = ["a service road", "a row of smaller structures", "parked vehicles", "a boundary fence", "an open storage yard", "a drainage channel"]
_ORIENTATIONS = ["aligned with the image's top edge", "rotated toward the upper-left corner", "set at a shallow diagonal", "oriented almost north-south", "turned broadside to the nearest road"]
_DETAILS = [
    "Its outline is sharply defined against the ground, with consistent tone along the full length.",
    "Shadow falls to one side, giving the form clear relief and confirming its raised profile.",
    "The surface texture is even, broken only by a narrow seam running across the midsection.",
    "Small fittings are visible along the edge, spaced at regular intervals.",
    "The footprint is uniform in tone with a brighter strip marking the sunlit edge.",
]
_ACTIVITY = [
    "Tire tracks converge on the area, indicating regular use.",
    "The surroundings are tidy and maintained, with clear lane markings nearby.",
    "No movement is captured, but worn paths show sustained activity.",
    "Adjacent equipment and containers point to ongoing operations at the site.",
]


def _digest_stream(key: str):
    """Endless deterministic byte stream derived from the key."""
    counter = 0
    while True:
        block = hashlib.sha256(f"{key}:{counter}".encode("utf-8")).digest()
        for b in block:
            yield b
        counter += 1


def _pick(stream, options):
    return options[next(stream) % len(options)]


def prompt_of_payload(payload: dict) -> str:
    """Concatenated text parts of the first message in a chat payload."""
    parts = []
    for msg in payload.get("messages", []):
        content = msg.get("content", "")
        if isinstance(content, str):
            parts.append(content)
            continue
        for part in content:
            if isinstance(part, dict) and part.get("type") == "text":
                parts.append(part.get("text", ""))
    return "\n".join(parts)


def stub_caption(prompt: str, seed: int = 0, target_words: int = 115) -> str:
    """Deterministic detailed caption for the object named in the prompt."""
    match = _CATEGORY_PAT.search(prompt)
    category = "object"
    if match:
        category = (match.group("a") or match.group("b") or "object").strip()
    stream = _digest_stream(f"{seed}|{prompt}")
    color = _pick(stream, _COLORS)
    shape = _pick(stream, _SHAPES)
    surface = _pick(stream, _SURFACES)
    neighbor = _pick(stream, _NEIGHBORS)
    orientation = _pick(stream, _ORIENTATIONS)
    article = "an" if shape[0] in "aeiou" else "a"
    sentences = [
        f"The {category} occupies the marked region and stands out clearly from its surroundings.",
        f"It has {article} {shape} footprint with a predominantly {color} surface that reads as a single continuous body.",
        _pick(stream, _DETAILS),
        f"The {category} is {orientation}, and its longer axis is easy to trace from end to end.",
        f"It rests on {surface}, which extends well beyond the target on every side.",
        f"Immediately nearby there is {neighbor}, separated from the target by a short clear gap.",
        _pick(stream, _ACTIVITY),
        f"Taken together, the form, tone, and setting identify this as a {category} in active context.",
    ]
    text = " ".join(sentences)
    filler = [
        "The lighting is even across the scene, so edges and tonal boundaries remain easy to follow.",
        "Ground detail around the target is crisp, and no part of the object is cut off by the frame.",
        "The contrast between the object and the background stays strong along the whole perimeter.",
    ]
    i = 0
    while len(text.split()) < target_words:
        text += " " + filler[i % len(filler)]
        i += 1
    return text


def stub_annotator_transport(seed: int = 0) -> Transport:
    def send(payload: dict) -> dict:
        caption = stub_caption(prompt_of_payload(payload), seed)
        return {"choices": [{"message": {"role": "assistant", "content": caption}}]}

    return send


def stub_judge_transport(seed: int = 0) -> Transport:
    """Answer every rubric question with a deterministic option letter."""

    def send(payload: dict) -> dict:
        prompt = prompt_of_payload(payload)
        digest = hashlib.sha256(f"{seed}|{prompt}".encode("utf-8")).digest()
        letter = "ABCDEF"[digest[0] % 6]
        return {"choices": [{"message": {"role": "assistant", "content": letter}}]}

    return send


class ScriptedTransport:
    """Replays a fixed sequence of responses; exceptions in the list are raised.

    Entries may be response dicts, plain caption strings, or Exception
    instances. Used by tests to script retry behavior.
    """

    def __init__(self, script):
        self.script = list(script)
        self.calls = 0

    def __call__(self, payload: dict) -> dict:
        if not self.script:
            raise AssertionError("scripted transport exhausted")
        self.calls += 1
        entry = self.script.pop(0)
        if isinstance(entry, Exception):
            raise entry
        if isinstance(entry, str):
            return {"choices": [{"message": {"role": "assistant", "content": entry}}]}
        return entry
