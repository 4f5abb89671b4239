"""Lossless event-camera compression with quadtree occupancy, learned symbol
ranking and Rice coding."""
from ._backend import BACKEND
from .codec import decode_stream, encode_stream, read_header
from .events import Event, EventArray, SensorGeometry, parse_events, segment_into_units
from .predictor import ModelWeights, default_weights, load_weights, save_weights

__all__ = [
    "BACKEND", "Event", "EventArray", "ModelWeights", "SensorGeometry", "decode_stream",
    "default_weights", "encode_stream", "load_weights", "parse_events", "read_header",
    "save_weights", "segment_into_units",
]
__version__ = "0.1.0"
