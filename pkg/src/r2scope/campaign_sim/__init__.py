"""Deterministic synthetic campaigns with exact ground truth."""

from .demo import demo_campaign, telescopes
from .generate import (
    CaptureFile,
    ConnectionLabel,
    GroundTruth,
    SimulationResult,
    generate,
    geo_of,
    schedule,
    simulate_to_dir,
)
from .payloads import BENIGN_KINDS, EXPLOIT_KINDS, PAYLOAD_KINDS, benign_payload, exploit_payload, payload_for
from .spec import CampaignSpec, ScannerSpec
from .writer import RawFrame, serialize_capture, tcp_frame

__all__ = [
    "BENIGN_KINDS", "EXPLOIT_KINDS", "PAYLOAD_KINDS", "CampaignSpec", "CaptureFile", "ConnectionLabel",
    "GroundTruth", "RawFrame", "ScannerSpec", "SimulationResult", "benign_payload", "demo_campaign",
    "exploit_payload", "generate", "geo_of", "payload_for", "schedule", "serialize_capture",
    "simulate_to_dir", "tcp_frame", "telescopes",
]
