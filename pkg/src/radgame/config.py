"""Service configuration: one JSON file wires datasets, taxonomy, gateway
endpoints, phase sizes, timers, and the bind address."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .gateway import (
    DEFAULT_EXPLAINER,
    DEFAULT_JUDGE,
    EXPLAINER,
    HttpEndpoint,
    JUDGE,
    LlmGateway,
    ModelEndpointConfig,
    StubEndpoint,
)
from .ingest import TaxonomyConfig, default_taxonomy, load_taxonomy
from .study import StudyConfig


@dataclass
class AppConfig:
    localize_cases: Optional[str] = None
    report_cases: Optional[str] = None
    taxonomy: Optional[str] = None
    images_dir: Optional[str] = None
    overlays_dir: str = "overlays"
    event_log: Optional[str] = None
    host: str = "127.0.0.1"
    port: int = 8000
    localize_phase_sizes: tuple[int, int, int] = (25, 375, 25)
    report_phase_sizes: tuple[int, int, int] = (10, 150, 10)
    test_minutes: float = 45.0
    iou_threshold: float = 0.25
    gateway_mode: str = "stub"  # stub | http
    fixture_file: Optional[str] = None
    judge: dict = field(default_factory=dict)
    explainer: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: Optional[Union[str, Path]]) -> "AppConfig":
        if path is None:
            return cls()
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
        cfg = cls()
        for key, value in raw.items():
            if not hasattr(cfg, key):
                raise ValueError(f"unknown config key {key!r}")
            if key.endswith("phase_sizes"):
                value = tuple(value)
            setattr(cfg, key, value)
        return cfg

    def study_config(self) -> StudyConfig:
        return StudyConfig(
            localize_phase_sizes=self.localize_phase_sizes,
            report_phase_sizes=self.report_phase_sizes,
            test_minutes=self.test_minutes,
            iou_threshold=self.iou_threshold,
            overlays_dir=self.overlays_dir,
        )

    def load_taxonomy(self) -> TaxonomyConfig:
        if self.taxonomy:
            return load_taxonomy(self.taxonomy)
        return default_taxonomy()

    def build_gateway(self) -> LlmGateway:
        if self.gateway_mode == "stub":
            if self.fixture_file:
                stub = StubEndpoint.from_file(self.fixture_file)
                return LlmGateway({JUDGE: stub, EXPLAINER: stub}, sleep_fn=lambda s: None)
            return LlmGateway.stubbed()
        judge_cfg = ModelEndpointConfig(
            **{**DEFAULT_JUDGE.__dict__, **self.judge, "role": JUDGE}
        )
        explainer_cfg = ModelEndpointConfig(
            **{**DEFAULT_EXPLAINER.__dict__, **self.explainer, "role": EXPLAINER}
        )
        return LlmGateway(
            {JUDGE: HttpEndpoint(judge_cfg), EXPLAINER: HttpEndpoint(explainer_cfg)},
            configs={JUDGE: judge_cfg, EXPLAINER: explainer_cfg},
        )
