"""Shared vocabulary: address families, record types, transports."""

from __future__ import annotations

import enum
import ipaddress


class Family(str, enum.Enum):
    IPV4 = "IPv4"
    IPV6 = "IPv6"

    @property
    def other(self) -> "Family":
        return Family.IPV6 if self is Family.IPV4 else Family.IPV4


class RecordType(str, enum.Enum):
    A = "A"
    NS = "NS"
    SOA = "SOA"
    AAAA = "AAAA"
    HTTPS = "HTTPS"


class Transport(str, enum.Enum):
    TCP = "TCP"
    QUIC = "QUIC"


ADDRESS_RECORDS = (RecordType.AAAA, RecordType.A)


def family_of_address(address: str) -> Family:
    """Classify a literal address, unmapping IPv4-mapped IPv6 forms."""
    ip = ipaddress.ip_address(address)
    if isinstance(ip, ipaddress.IPv6Address):
        if ip.ipv4_mapped is not None:
            return Family.IPV4
        return Family.IPV6
    return Family.IPV4


def unmap_address(address: str) -> str:
    """Return the plain IPv4 form of an IPv4-mapped IPv6 address, else the input."""
    ip = ipaddress.ip_address(address)
    if isinstance(ip, ipaddress.IPv6Address) and ip.ipv4_mapped is not None:
        return str(ip.ipv4_mapped)
    return address
