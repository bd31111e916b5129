#!/usr/bin/env python3
"""Writes IKEv2 reference datagrams built with scapy's dissector to testdata/vectors."""
import pathlib
import sys

from scapy.contrib.ikev2 import (IKEv2, IKEv2_KE, IKEv2_Nonce, IKEv2_Notify, IKEv2_Proposal, IKEv2_SA,
                                 IKEv2_Transform)

OUT = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "testdata/vectors")
ISPI = bytes(range(1, 9))
RSPI = bytes(range(0x11, 0x19))


def transforms(groups):
    chain = (IKEv2_Transform(transform_type=1, transform_id=12, length=12,
                                     key_length=0x800E0000 | 256)  # TV attribute: Key Length = 256
             / IKEv2_Transform(transform_type=2, transform_id=5)
             / IKEv2_Transform(transform_type=3, transform_id=12))
    for g in groups:
        chain = chain / IKEv2_Transform(transform_type=4, transform_id=g)
    return chain


def proposal(groups):
    return IKEv2_Proposal(proposal=1, proto=1, trans_nb=3 + len(groups), trans=transforms(groups))


def write(name, pkt):
    raw = bytes(pkt)
    (OUT / f"{name}.hex").write_text(raw.hex() + "\n")


OUT.mkdir(parents=True, exist_ok=True)

request = (IKEv2(init_SPI=ISPI, resp_SPI=b"\0" * 8, exch_type=34, flags="Initiator")
           / IKEv2_SA(prop=proposal([14, 2]))
           / IKEv2_KE(group=14, ke=bytes(i % 256 for i in range(256)))
           / IKEv2_Nonce(nonce=b"\xa5" * 32))
write("sa_init_request", request)

response = (IKEv2(init_SPI=ISPI, resp_SPI=RSPI, exch_type=34, flags="Response")
            / IKEv2_SA(prop=proposal([2]))
            / IKEv2_KE(group=2, ke=bytes((7 * i) % 256 for i in range(128)))
            / IKEv2_Nonce(nonce=b"\x5a" * 32))
write("sa_init_response", response)

invalid_ke = (IKEv2(init_SPI=ISPI, resp_SPI=b"\0" * 8, exch_type=34, flags="Response")
              / IKEv2_Notify(proto=0, type=17, notify=b"\x00\x02"))
write("invalid_ke", invalid_ke)

no_proposal = (IKEv2(init_SPI=ISPI, resp_SPI=b"\0" * 8, exch_type=34, flags="Response")
               / IKEv2_Notify(proto=0, type=14))
write("no_proposal_chosen", no_proposal)

(OUT / "sa_init_request_nat_t.hex").write_text((b"\0\0\0\0" + bytes(request)).hex() + "\n")
