"""r2scope: measure exploit campaigns seen by active network telescopes.

Capture files are parsed and reassembled into connections, first-flight
payloads are decoded and matched against a three-part signature, events are
enriched and stored in daily partitions, and the analytics layer turns the
store into plot-ready tables.
"""

__version__ = "0.1.0"

from .enrichment_store import EventRow, EventStore, GeoDataset, enrich, load_geo_dataset
from .errors import R2ScopeError
from .flight_signature import ExploitEvent, classify_connection, match_signature
from .flow_reassembly import ConnectionKey, ReassembledConnection, reassemble_all
from .packet_model import PacketRecord, TelescopeConfig, parse_capture_file
from .payload_decode import DecodeConfig, decode
from .pipeline import detect, ingest

__all__ = [
    "ConnectionKey", "DecodeConfig", "EventRow", "EventStore", "ExploitEvent", "GeoDataset",
    "PacketRecord", "R2ScopeError", "ReassembledConnection", "TelescopeConfig", "__version__",
    "classify_connection", "decode", "detect", "enrich", "ingest", "load_geo_dataset",
    "match_signature", "parse_capture_file", "reassemble_all",
]
