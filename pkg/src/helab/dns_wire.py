"""DNS wire format: the little slice of RFC 1035 (plus HTTPS records) the
lab speaks.

Parsing accepts compressed names; everything we emit is uncompressed.
Replies echo the question section of the query byte for byte.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass, field

TYPE_A = 1
TYPE_NS = 2
TYPE_SOA = 6
TYPE_AAAA = 28
TYPE_HTTPS = 65
CLASS_IN = 1

RCODE_NOERROR = 0
RCODE_FORMERR = 1
RCODE_SERVFAIL = 2
RCODE_NXDOMAIN = 3
RCODE_NOTIMP = 4
RCODE_REFUSED = 5

TYPE_NAMES = {
    TYPE_A: "A",
    TYPE_NS: "NS",
    TYPE_SOA: "SOA",
    TYPE_AAAA: "AAAA",
    TYPE_HTTPS: "HTTPS",
}

# SvcParam keys we understand.
SVC_ALPN = 1
SVC_PORT = 3
SVC_IPV4HINT = 4
SVC_ECH = 5
SVC_IPV6HINT = 6

_MAX_POINTER_HOPS = 64


class WireError(ValueError):
    pass


def encode_name(name: str) -> bytes:
    """Encode a dotted name, uncompressed.  A trailing dot is optional."""
    out = bytearray()
    name = name.rstrip(".")
    if name:
        for label in name.split("."):
            raw = label.encode("ascii")
            if not 0 < len(raw) < 64:
                raise WireError(f"bad label length in {name!r}")
            out.append(len(raw))
            out += raw
    out.append(0)
    if len(out) > 255:
        raise WireError(f"name too long: {name!r}")
    return bytes(out)


def decode_name(wire: bytes, offset: int) -> tuple[str, int]:
    """Decode a possibly-compressed name.  Returns (name, offset after the
    name in the original stream)."""
    labels: list[str] = []
    hops = 0
    end = None  # position after the first pointer, where parsing resumes
    pos = offset
    while True:
        if pos >= len(wire):
            raise WireError("truncated name")
        length = wire[pos]
        if length & 0xC0 == 0xC0:
            if pos + 1 >= len(wire):
                raise WireError("truncated pointer")
            target = ((length & 0x3F) << 8) | wire[pos + 1]
            if end is None:
                end = pos + 2
            hops += 1
            if hops > _MAX_POINTER_HOPS or target >= pos:
                raise WireError("bad compression pointer")
            pos = target
        elif length == 0:
            if end is None:
                end = pos + 1
            break
        elif length < 64:
            if pos + 1 + length > len(wire):
                raise WireError("truncated label")
            labels.append(wire[pos + 1 : pos + 1 + length].decode("ascii", "replace"))
            pos += 1 + length
        else:
            raise WireError(f"unsupported label type {length:#x}")
    return ".".join(labels) + ".", end


@dataclass
class Question:
    name: str
    qtype: int
    qclass: int = CLASS_IN

    def encode(self) -> bytes:
        return encode_name(self.name) + struct.pack("!HH", self.qtype, self.qclass)


@dataclass
class ResourceRecord:
    name: str
    rtype: int
    ttl: int
    rdata: bytes
    rclass: int = CLASS_IN

    def encode(self) -> bytes:
        return (
            encode_name(self.name)
            + struct.pack("!HHIH", self.rtype, self.rclass, self.ttl, len(self.rdata))
            + self.rdata
        )


@dataclass
class Message:
    txid: int
    flags: int
    questions: list[Question] = field(default_factory=list)
    answers: list[ResourceRecord] = field(default_factory=list)
    authorities: list[ResourceRecord] = field(default_factory=list)
    additionals: list[ResourceRecord] = field(default_factory=list)
    question_wire: bytes = b""  # raw question section, for byte-exact echo

    @property
    def qr(self) -> bool:
        return bool(self.flags & 0x8000)

    @property
    def opcode(self) -> int:
        return (self.flags >> 11) & 0xF

    @property
    def rd(self) -> bool:
        return bool(self.flags & 0x0100)

    @property
    def rcode(self) -> int:
        return self.flags & 0xF


def _decode_rr(wire: bytes, pos: int) -> tuple[ResourceRecord, int]:
    name, pos = decode_name(wire, pos)
    if pos + 10 > len(wire):
        raise WireError("truncated resource record")
    rtype, rclass, ttl, rdlen = struct.unpack_from("!HHIH", wire, pos)
    pos += 10
    if pos + rdlen > len(wire):
        raise WireError("truncated rdata")
    rdata = wire[pos : pos + rdlen]
    return ResourceRecord(name=name, rtype=rtype, ttl=ttl, rdata=rdata, rclass=rclass), pos + rdlen


def parse_message(wire: bytes) -> Message:
    if len(wire) < 12:
        raise WireError("short header")
    txid, flags, qd, an, ns, ar = struct.unpack_from("!HHHHHH", wire, 0)
    msg = Message(txid=txid, flags=flags)
    pos = 12
    q_start = pos
    for _ in range(qd):
        name, pos = decode_name(wire, pos)
        if pos + 4 > len(wire):
            raise WireError("truncated question")
        qtype, qclass = struct.unpack_from("!HH", wire, pos)
        pos += 4
        msg.questions.append(Question(name=name, qtype=qtype, qclass=qclass))
    msg.question_wire = wire[q_start:pos]
    for count, bucket in ((an, msg.answers), (ns, msg.authorities), (ar, msg.additionals)):
        for _ in range(count):
            rr, pos = _decode_rr(wire, pos)
            bucket.append(rr)
    return msg


def build_query(name: str, qtype: int, txid: int, rd: bool = False) -> bytes:
    flags = 0x0100 if rd else 0
    header = struct.pack("!HHHHHH", txid, flags, 1, 0, 0, 0)
    return header + Question(name=name, qtype=qtype).encode()


def build_reply(
    query: Message,
    rcode: int = RCODE_NOERROR,
    aa: bool = True,
    answers: list[ResourceRecord] | None = None,
    authorities: list[ResourceRecord] | None = None,
    additionals: list[ResourceRecord] | None = None,
) -> bytes:
    """Build a response to a parsed query, echoing its question bytes."""
    answers = answers or []
    authorities = authorities or []
    additionals = additionals or []
    flags = 0x8000 | (query.opcode << 11) | (rcode & 0xF)
    if aa:
        flags |= 0x0400
    if query.rd:
        flags |= 0x0100
    header = struct.pack(
        "!HHHHHH",
        query.txid,
        flags,
        len(query.questions),
        len(answers),
        len(authorities),
        len(additionals),
    )
    body = query.question_wire
    for rr in answers + authorities + additionals:
        body += rr.encode()
    return header + body


# -- rdata constructors ------------------------------------------------------


def pack_a(address: str) -> bytes:
    return socket.inet_pton(socket.AF_INET, address)


def pack_aaaa(address: str) -> bytes:
    return socket.inet_pton(socket.AF_INET6, address)


def unpack_a(rdata: bytes) -> str:
    return socket.inet_ntop(socket.AF_INET, rdata)


def unpack_aaaa(rdata: bytes) -> str:
    return socket.inet_ntop(socket.AF_INET6, rdata)


def pack_ns(name: str) -> bytes:
    return encode_name(name)


def pack_soa(
    mname: str,
    rname: str,
    serial: int,
    refresh: int = 3600,
    retry: int = 600,
    expire: int = 86400,
    minimum: int = 0,
) -> bytes:
    return (
        encode_name(mname)
        + encode_name(rname)
        + struct.pack("!IIIII", serial, refresh, retry, expire, minimum)
    )


def pack_https(priority: int, target: str, params: dict | None = None) -> bytes:
    """Build HTTPS rdata.  params may carry alpn (list of str), port (int),
    ipv4hint / ipv6hint (lists of literals), ech (bytes or True)."""
    params = params or {}
    out = struct.pack("!H", priority) + encode_name(target)
    fields: list[tuple[int, bytes]] = []
    if "alpn" in params:
        blob = b""
        for proto in params["alpn"]:
            raw = proto.encode("ascii")
            blob += bytes([len(raw)]) + raw
        fields.append((SVC_ALPN, blob))
    if "port" in params:
        fields.append((SVC_PORT, struct.pack("!H", params["port"])))
    if "ipv4hint" in params:
        fields.append((SVC_IPV4HINT, b"".join(pack_a(a) for a in params["ipv4hint"])))
    if "ech" in params and params["ech"]:
        blob = params["ech"] if isinstance(params["ech"], bytes) else b"\x00\x01"
        fields.append((SVC_ECH, blob))
    if "ipv6hint" in params:
        fields.append((SVC_IPV6HINT, b"".join(pack_aaaa(a) for a in params["ipv6hint"])))
    # SvcParams must be sorted by key.
    for key, blob in sorted(fields):
        out += struct.pack("!HH", key, len(blob)) + blob
    return out


def parse_https_rdata(rdata: bytes) -> dict:
    """Decode the subset of HTTPS rdata the candidate builder cares about:
    alpn, port, address hints, and whether an ECH config is present."""
    if len(rdata) < 3:
        raise WireError("short HTTPS rdata")
    priority = struct.unpack_from("!H", rdata, 0)[0]
    target, pos = decode_name(rdata, 2)
    rec: dict = {"priority": priority, "target": target, "alpn": (), "ech": False}
    v4: list[str] = []
    v6: list[str] = []
    while pos < len(rdata):
        if pos + 4 > len(rdata):
            raise WireError("truncated SvcParam")
        key, length = struct.unpack_from("!HH", rdata, pos)
        pos += 4
        blob = rdata[pos : pos + length]
        if len(blob) != length:
            raise WireError("truncated SvcParam value")
        pos += length
        if key == SVC_ALPN:
            alpn = []
            at = 0
            while at < len(blob):
                n = blob[at]
                alpn.append(blob[at + 1 : at + 1 + n].decode("ascii", "replace"))
                at += 1 + n
            rec["alpn"] = tuple(alpn)
        elif key == SVC_PORT and length == 2:
            rec["port"] = struct.unpack("!H", blob)[0]
        elif key == SVC_IPV4HINT:
            v4 = [unpack_a(blob[i : i + 4]) for i in range(0, len(blob) - 3, 4)]
        elif key == SVC_IPV6HINT:
            v6 = [unpack_aaaa(blob[i : i + 16]) for i in range(0, len(blob) - 15, 16)]
        elif key == SVC_ECH:
            rec["ech"] = True
    if v4:
        rec["ipv4hint"] = tuple(v4)
    if v6:
        rec["ipv6hint"] = tuple(v6)
    return rec
