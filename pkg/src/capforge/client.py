"""Chat-completions HTTP client with retry, plus endpoint config loading.

One client covers both the annotator and the judge: a config names the base
URL, model, and the env var holding the secret. Transports are injectable so
tests and offline runs can swap in deterministic stubs (kind = "stub-annotator"
or "stub-judge").
"""

from __future__ import annotations

import base64
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import requests

try:
    import tomllib  # py311+
except ModuleNotFoundError:
    import tomli as tomllib

from .errors import ConfigError, EndpointError

Transport = Callable[[dict], dict]


@dataclass
class EndpointConfig:
    kind: str = "http"
    base_url: str = ""
    model: str = ""
    api_key_env: str = "FORGE_ANNOTATOR_KEY"
    temperature: float = 0.2
    max_tokens: int = 512
    timeout: float = 60.0
    max_retries: int = 3
    retry_backoff: float = 0.5
    parallel: int = 4
    seed: int = 0
    name: str = ""


def load_endpoint_config(path: str | Path) -> EndpointConfig:
    """Read the [endpoint] table of a TOML config file."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"endpoint config not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad TOML in {path}: {exc}") from None
    table = doc.get("endpoint", doc)
    cfg = EndpointConfig()
    for key, value in table.items():
        if not hasattr(cfg, key):
            raise ConfigError(f"unknown endpoint config key {key!r} in {path}")
        setattr(cfg, key, value)
    if cfg.kind == "http" and not cfg.base_url:
        raise ConfigError(f"{path}: http endpoint needs base_url")
    return cfg


@dataclass
class ChatResult:
    text: str
    latency_s: float
    raw: dict = field(default_factory=dict)


def image_data_uri(image_bytes: bytes, mime: str = "image/png") -> str:
    return f"data:{mime};base64," + base64.b64encode(image_bytes).decode("ascii")


def build_messages(prompt: str, image_bytes: Optional[bytes] = None) -> list[dict]:
    content: list[dict[str, Any]] = []
    if image_bytes is not None:
        content.append({"type": "image_url", "image_url": {"url": image_data_uri(image_bytes)}})
    content.append({"type": "text", "text": prompt})
    return [{"role": "user", "content": content}]


def http_transport(cfg: EndpointConfig, session: Optional[requests.Session] = None) -> Transport:
    sess = session or requests.Session()
    url = cfg.base_url.rstrip("/") + "/chat/completions"
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(cfg.api_key_env, "")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    def send(payload: dict) -> dict:
        resp = sess.post(url, json=payload, headers=headers, timeout=cfg.timeout)
        resp.raise_for_status()
        return resp.json()

    return send


def make_transport(cfg: EndpointConfig) -> Transport:
    if cfg.kind == "http":
        return http_transport(cfg)
    if cfg.kind in ("stub-annotator", "stub-judge"):
        from . import stubs

        if cfg.kind == "stub-annotator":
            return stubs.stub_annotator_transport(cfg.seed)
        return stubs.stub_judge_transport(cfg.seed)
    raise ConfigError(f"unknown endpoint kind {cfg.kind!r}")


class ChatClient:
    """Thin retrying wrapper over one chat endpoint."""

    def __init__(self, cfg: EndpointConfig, transport: Optional[Transport] = None):
        self.cfg = cfg
        self.transport = transport if transport is not None else make_transport(cfg)

    def complete(self, messages: list[dict], attempts: int | None = None) -> ChatResult:
        """Send with transport-level retries; raises EndpointError at the end.

        attempts=1 disables internal retrying so callers owning their own
        attempt budget (caption generation) count transport failures
        themselves.
        """
        payload = {
            "model": self.cfg.model,
            "messages": messages,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
        }
        budget = self.cfg.max_retries if attempts is None else attempts
        last_err: Exception | None = None
        for attempt in range(budget):
            started = time.perf_counter()
            try:
                raw = self.transport(payload)
            except Exception as exc:
                last_err = exc
                if attempt + 1 < budget and self.cfg.retry_backoff > 0:
                    time.sleep(self.cfg.retry_backoff * (attempt + 1))
                continue
            latency = time.perf_counter() - started
            return ChatResult(text=_extract_text(raw), latency_s=latency, raw=raw)
        raise EndpointError(
            f"{self.cfg.name or self.cfg.kind}: transport failed after "
            f"{budget} attempts: {last_err}"
        )


def _extract_text(raw: dict) -> str:
    try:
        content = raw["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise EndpointError(f"malformed chat response: {raw!r}") from None
    if isinstance(content, list):  # content-part style replies
        content = "".join(p.get("text", "") for p in content if isinstance(p, dict))
    return content or ""
