"""Run configuration: inference hyper-parameters and decoding policy flags."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO

from .lagrangian import LrParams
from .posterior import PrParams


@dataclass(frozen=True)
class InferenceConfig:
    lr: LrParams = field(default_factory=LrParams)
    pr: PrParams = field(default_factory=PrParams)
    root_counts_left: bool = False
    single_root: bool = False

    @classmethod
    def from_stream(cls, stream: IO[str]) -> "InferenceConfig":
        """Load a JSON config; absent keys keep their defaults."""
        obj = json.load(stream)
        if not isinstance(obj, dict):
            raise ValueError("config file must contain a JSON object")
        try:
            return cls(
                lr=LrParams(**obj.get("lr", {})),
                pr=PrParams(**obj.get("pr", {})),
                root_counts_left=bool(obj.get("root_counts_left", False)),
                single_root=bool(obj.get("single_root", False)),
            )
        except TypeError as exc:
            raise ValueError(f"bad config: {exc}") from None
