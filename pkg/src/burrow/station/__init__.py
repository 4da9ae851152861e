from burrow.station.client import (
    ConnectivitySchedule,
    KeyUpdate,
    ResendLog,
    RobotClient,
    client_session,
    deliver_local,
    key_updates,
)
from burrow.station.protocol import decode_message, encode_message
from burrow.station.server import StationServer
from burrow.station.state import StationConfig, StationState, handle_message

__all__ = [
    "ConnectivitySchedule",
    "KeyUpdate",
    "ResendLog",
    "RobotClient",
    "StationConfig",
    "StationServer",
    "StationState",
    "client_session",
    "decode_message",
    "deliver_local",
    "encode_message",
    "handle_message",
    "key_updates",
]
