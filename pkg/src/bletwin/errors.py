"""Exception hierarchy shared by the codec, PHY and harness."""


class BleTwinError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(BleTwinError, ValueError):
    """A configuration value is out of range or inconsistent."""


class InvalidChannelError(ConfigError):
    pass


class FrameError(BleTwinError):
    """A packet could not be built or parsed."""


class OversizeError(FrameError):
    pass


class AccessAddressError(FrameError):
    pass


class CrcError(FrameError):
    pass


class MalformedLengthError(FrameError):
    pass


class UnknownPduTypeError(FrameError):
    def __init__(self, pdu_type: int):
        super().__init__(f"unknown advertising PDU type 0b{pdu_type:04b}")
        self.pdu_type = pdu_type


class ReceiveError(BleTwinError):
    """The receiver did not produce a packet."""


class NoSignalError(ReceiveError):
    pass


class NoDetectionError(ReceiveError):
    pass


class FileFormatError(BleTwinError):
    """An I/Q capture file is corrupt, truncated or of an unknown version."""
