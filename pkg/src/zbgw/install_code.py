"""Vendor QR credential parsing and Trust Center link-key derivation.

Zigbee devices ship an install code (6/8/12/16 bytes plus a 16-bit CRC)
printed as a QR string, but vendors disagree wildly on the string format:
some tag fields with ``$``/``%`` markers, some pipe-delimit, some append
the hex to an opaque prefix, and at least one vendor (pre-hashed keys)
prints the *output* of the key derivation instead of the code. This
module normalizes all of those into a :class:`Credential` and derives the
16-byte Trust Center link key from it.

The CRC is CRC-16/X-25 (poly 0x1021 reflected, init 0xFFFF, xorout
0xFFFF) appended least-significant byte first, which is what compliant
install codes carry. The hash is the AES-128 Matyas-Meyer-Oseas
construction used for Zigbee key derivation.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import GatewayError

__all__ = [
    "Credential",
    "CredentialKind",
    "EmptyInput",
    "IllegalCodeLength",
    "IllegalPayloadLength",
    "InvalidCrc",
    "LinkKey",
    "MalformedField",
    "NoHexPayload",
    "NotAnInstallCode",
    "VendorFormat",
    "crc16_install_code",
    "crc16_x25",
    "credential_record",
    "derive_link_key",
    "mmo_hash",
    "parse_qr_payload",
    "validate_install_code",
]

# Legal install code lengths in bytes, per the base device behavior.
INSTALL_CODE_LENGTHS = (6, 8, 12, 16)

# Hex-digit payload lengths a QR string may carry. 16/20/28/36 are
# code+CRC forms; 32 can only be a pre-hashed 16-byte key because the
# legal code+CRC totals are 8/10/14/18 bytes.
_CODE_PLUS_CRC_HEX_LENGTHS = frozenset(2 * (n + 2) for n in INSTALL_CODE_LENGTHS)
_PREHASHED_HEX_LENGTH = 32
LEGAL_PAYLOAD_HEX_LENGTHS = frozenset(_CODE_PLUS_CRC_HEX_LENGTHS | {_PREHASHED_HEX_LENGTH})

_HEX_RE = re.compile(r"[0-9A-Fa-f]+")


class EmptyInput(GatewayError):
    """The credential string is empty or whitespace."""


class NoHexPayload(GatewayError):
    """No hex payload could be located anywhere in the string."""


class IllegalPayloadLength(GatewayError):
    """A hex payload was found but its length fits no credential form."""


class MalformedField(GatewayError):
    """A self-announcing vendor field was present but unparseable."""


class IllegalCodeLength(GatewayError):
    """Install code is not 6, 8, 12, or 16 bytes."""


class NotAnInstallCode(GatewayError):
    """CRC validation was asked of a pre-hashed key credential."""


class InvalidCrc(GatewayError):
    """Install code CRC does not verify; key derivation refused."""


class CredentialKind(enum.Enum):
    INSTALL_CODE = "install_code"
    PRE_HASHED_KEY = "pre_hashed_key"


class VendorFormat(enum.Enum):
    TAGGED_FIELDS = "tagged_fields"
    PIPE_DELIMITED = "pipe_delimited"
    TRAILING_HEX = "trailing_hex"
    RAW_HEX = "raw_hex"


@dataclass(frozen=True)
class Credential:
    """A parsed vendor credential: either an install code or a key.

    ``crc_bytes`` is present exactly when ``kind`` is INSTALL_CODE and
    holds the two CRC bytes as printed (LSB first).
    """

    kind: CredentialKind
    code_bytes: bytes
    crc_bytes: bytes | None
    vendor_format: VendorFormat

    def __post_init__(self) -> None:
        if self.kind is CredentialKind.INSTALL_CODE:
            if len(self.code_bytes) not in INSTALL_CODE_LENGTHS:
                raise IllegalCodeLength(f"{len(self.code_bytes)} byte install code")
            if self.crc_bytes is None or len(self.crc_bytes) != 2:
                raise MalformedField("install code credential requires 2 CRC bytes")
        else:
            if len(self.code_bytes) != 16:
                raise IllegalPayloadLength("pre-hashed key must be 16 bytes")
            if self.crc_bytes is not None:
                raise MalformedField("pre-hashed key carries no CRC")


@dataclass(frozen=True)
class LinkKey:
    """16-byte Trust Center link key."""

    key: bytes

    def __post_init__(self) -> None:
        if len(self.key) != 16:
            raise ValueError("link key must be exactly 16 bytes")

    def hex(self) -> str:
        return self.key.hex()


def _is_hex(s: str) -> bool:
    return bool(s) and _HEX_RE.fullmatch(s) is not None


def _credential_from_payload(payload_hex: str, fmt: VendorFormat) -> Credential:
    data = bytes.fromhex(payload_hex)
    if len(payload_hex) == _PREHASHED_HEX_LENGTH:
        return Credential(CredentialKind.PRE_HASHED_KEY, data, None, fmt)
    return Credential(CredentialKind.INSTALL_CODE, data[:-2], data[-2:], fmt)


def _tagged_field_payload(raw: str) -> str | None:
    """Extract the value of the ``I`` field from a ``$``/``%`` tagged string.

    Fields are introduced by ``$`` or ``%`` followed by a tag character;
    a value, when present, follows a ``:`` and runs to the next field
    marker or end of string. Unknown tags are tolerated and skipped.
    Returns None when the string has no tagged fields or no ``I`` field.
    """
    if "$" not in raw and "%" not in raw:
        return None
    for match in re.finditer(r"[$%](.)(?::([^$%]*))?", raw, re.DOTALL):
        tag, value = match.group(1), match.group(2)
        if tag != "I":
            continue
        if value is None or value == "":
            raise MalformedField("field 'I' has no value")
        if not _is_hex(value):
            raise MalformedField(f"field 'I' is not hex: {value!r}")
        if len(value) not in LEGAL_PAYLOAD_HEX_LENGTHS:
            raise IllegalPayloadLength(
                f"field 'I' has {len(value)} hex digits, legal lengths are "
                f"{sorted(LEGAL_PAYLOAD_HEX_LENGTHS)}"
            )
        return value
    return None


def _pipe_field_payload(raw: str) -> str | None:
    """Among ``|``-separated fields, return the unique legal hex payload."""
    if "|" not in raw:
        return None
    candidates = [
        field
        for field in raw.split("|")
        if _is_hex(field) and len(field) in LEGAL_PAYLOAD_HEX_LENGTHS
    ]
    if len(candidates) == 1:
        return candidates[0]
    return None


def _trailing_hex_payload(raw: str) -> str | None:
    """Return the longest pure-hex suffix when it has a legal length."""
    i = len(raw)
    while i > 0 and _is_hex(raw[i - 1]):
        i -= 1
    suffix = raw[i:]
    if suffix and len(suffix) in LEGAL_PAYLOAD_HEX_LENGTHS:
        return suffix
    return None


def parse_qr_payload(raw: str) -> Credential:
    """Parse a scanned vendor QR string into a :class:`Credential`.

    Grammars are tried in order: tagged fields, pipe-delimited, trailing
    hex, raw hex; the first that yields a payload of legal length wins.
    Hex is case-insensitive and surrounding whitespace is ignored.

    Raises EmptyInput, MalformedField, IllegalPayloadLength, or
    NoHexPayload.
    """
    text = raw.strip()
    if not text:
        raise EmptyInput("credential string is empty")

    payload = _tagged_field_payload(text)
    if payload is not None:
        return _credential_from_payload(payload, VendorFormat.TAGGED_FIELDS)

    payload = _pipe_field_payload(text)
    if payload is not None:
        return _credential_from_payload(payload, VendorFormat.PIPE_DELIMITED)

    payload = _trailing_hex_payload(text)
    if payload is not None:
        # A pure-hex string is its own trailing suffix; classify as raw.
        fmt = VendorFormat.RAW_HEX if _is_hex(text) else VendorFormat.TRAILING_HEX
        return _credential_from_payload(payload, fmt)

    if not _HEX_RE.search(text):
        raise NoHexPayload("no hex digits anywhere in input")
    raise IllegalPayloadLength(
        f"no hex run of a legal payload length {sorted(LEGAL_PAYLOAD_HEX_LENGTHS)}"
    )


def crc16_x25(data: bytes) -> int:
    """CRC-16/X-25: poly 0x1021 reflected, init 0xFFFF, xorout 0xFFFF.

    Length-agnostic core; callers that require install-code lengths go
    through :func:`crc16_install_code`.
    """
    crc = 0xFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            if crc & 1:
                crc = (crc >> 1) ^ 0x8408
            else:
                crc >>= 1
    return crc ^ 0xFFFF


def crc16_install_code(code: bytes) -> bytes:
    """CRC over an install code, emitted least-significant byte first.

    Raises IllegalCodeLength unless the code is 6, 8, 12, or 16 bytes.
    """
    if len(code) not in INSTALL_CODE_LENGTHS:
        raise IllegalCodeLength(
            f"install code must be one of {INSTALL_CODE_LENGTHS} bytes, got {len(code)}"
        )
    crc = crc16_x25(code)
    return bytes((crc & 0xFF, crc >> 8))


def validate_install_code(cred: Credential) -> bool:
    """True iff the credential's printed CRC matches its install code.

    Raises NotAnInstallCode for pre-hashed key credentials.
    """
    if cred.kind is not CredentialKind.INSTALL_CODE:
        raise NotAnInstallCode("pre-hashed keys carry no CRC to validate")
    return crc16_install_code(cred.code_bytes) == cred.crc_bytes


def _aes128_encrypt_block(key: bytes, block: bytes) -> bytes:
    encryptor = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return encryptor.update(block) + encryptor.finalize()


def mmo_hash(data: bytes) -> bytes:
    """Matyas-Meyer-Oseas hash over AES-128, as used for key derivation.

    Padding: append 0x80, zero-fill to two bytes short of a block
    boundary, then the input bit length big-endian in the final two
    bytes. Inputs at install-code scale never exceed 0xFFFF bits, so the
    spill-to-extra-block case for longer inputs is unreachable here and
    guarded by an assertion. Chaining value starts all-zero; output is
    the final 16-byte chaining value.
    """
    if len(data) < 1:
        raise EmptyInput("cannot hash empty input")
    bit_length = 8 * len(data)
    assert bit_length <= 0xFFFF, "input too long for the 2-byte length field"

    padded = bytearray(data)
    padded.append(0x80)
    while len(padded) % 16 != 14:
        padded.append(0x00)
    padded += bit_length.to_bytes(2, "big")

    digest = bytes(16)
    for i in range(0, len(padded), 16):
        block = bytes(padded[i : i + 16])
        encrypted = _aes128_encrypt_block(digest, block)
        digest = bytes(a ^ b for a, b in zip(encrypted, block))
    return digest


def derive_link_key(cred: Credential) -> LinkKey:
    """Derive the Trust Center link key for a credential.

    Install codes must verify their CRC (InvalidCrc otherwise) and are
    hashed together with it; pre-hashed keys pass through unchanged,
    which is what makes the hash-output vendor format usable at all.
    """
    if cred.kind is CredentialKind.PRE_HASHED_KEY:
        return LinkKey(cred.code_bytes)
    if not validate_install_code(cred):
        assert cred.crc_bytes is not None
        raise InvalidCrc(
            f"printed CRC {cred.crc_bytes.hex()} does not match code "
            f"(expected {crc16_install_code(cred.code_bytes).hex()})"
        )
    assert cred.crc_bytes is not None
    return LinkKey(mmo_hash(cred.code_bytes + cred.crc_bytes))


def credential_record(cred: Credential) -> dict:
    """Normalized export record for a credential (see credentials.md).

    Always includes kind, payload hex, and vendor format; adds CRC
    validity for install codes and the derived key hex whenever
    derivation is possible.
    """
    record: dict = {
        "kind": cred.kind.value,
        "code_hex": cred.code_bytes.hex(),
        "vendor_format": cred.vendor_format.value,
    }
    if cred.kind is CredentialKind.INSTALL_CODE:
        assert cred.crc_bytes is not None
        record["crc_hex"] = cred.crc_bytes.hex()
        record["crc_valid"] = validate_install_code(cred)
        if record["crc_valid"]:
            record["link_key_hex"] = derive_link_key(cred).hex()
    else:
        record["link_key_hex"] = derive_link_key(cred).hex()
    return record
