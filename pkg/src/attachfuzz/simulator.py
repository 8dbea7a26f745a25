"""Desk-scale simulation of the attach procedure under interception.

Two cooperatively stepped state machines exchange the nine-message attach
flow: a UE machine and an ENB machine (the network side, base station plus
core). The controller intercepts emissions in one configured direction and
layer, hands them to a fuzzer, and delivers the result to the peer. Each
guarded branch a machine takes while processing a packet is recorded as an
edge hit, standing in for compiler-level coverage instrumentation.

The two machines are deliberately asymmetric: the ENB machine rejects a
flow on the first malformed field it sees, while the UE machine tolerates
a budget of non-critical deviations. The ENB machine also carries roughly
1.5x the UE machine's instrumented branch surface.

Each iteration runs two independent RNG streams derived from one recorded
64-bit seed: the machines' benign randomness (UE identity, auth token) and
the fuzzer's decisions. Reproduction therefore regenerates the benign
traffic of the recorded iteration exactly, with or without the fuzzer;
replaying a seed under a different RNG seed regenerates different benign
values, which is when whole-packet replay still reproduces a crash that
patch replay cannot.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field
from enum import Enum
from pathlib import Path
from random import Random
from typing import Callable

from attachfuzz.coverage import Component
from attachfuzz.dissect import (MAC_HEADER_LEN, UNKNOWN_TYPE, dissect, encode_message,
                                schema_for, wrap_mac)
from attachfuzz.fuzzers import Fuzzer
from attachfuzz.mutation import BugEffect, ReplayPatch, Seed, apply_patch, load_seed
from attachfuzz.packets import Channel, Direction, Layer, Packet, extract_field

logger = logging.getLogger(__name__)

PACKET_BUDGET = 32  # hang watchdog; the benign flow is 9 packets
UE_DEVIATION_BUDGET = 4  # non-critical deviations tolerated per packet

_M64 = (1 << 64) - 1
_HASH = 2654435761  # multiplicative hash spreading wide values over classes


class ReproMode(Enum):
    FULL = "full"            # reapply recorded patches to fresh packets
    REPLAY_ALL = "replay-all"  # substitute recorded post-fuzz bytes


class MachineStatus(Enum):
    RUNNING = "running"
    CRASHED = "crashed"
    HUNG = "hung"


@dataclass(frozen=True)
class BugSite:
    """A planted fault: a deterministic predicate over one delivered
    message's field values, evaluated in the state that expects it."""

    bug_id: str
    packet_type: str
    effect: BugEffect
    predicate: Callable[[dict], bool]
    note: str = ""


def _auth_tag(token: int) -> int:
    x = (token ^ (token >> 32)) & 0xFFFFFFFF
    return (x * 0x9E3779B1 + 0x7F4A7C15) & 0xFFFFFFFF


def _auth_response(token: int) -> int:
    return (token ^ 0x5A5A5A5A5A5A5A5A) & _M64


def _mac_tag(nonce: int) -> int:
    return (nonce * 0x9E3779B1) & 0xFFFFFFFF


def _caps_word(txn: int, srb: int, harq: int, sr: int, power: int) -> int:
    """Capability echo: a 12-bit digest of the connection setup the UE saw.
    Both sides compute it, so any in-flight manipulation shows up as a
    nonzero delta on the network side."""
    return 0x800 ^ ((srb | harq << 9) ^ (sr << 2) ^ (power << 6) ^ (txn << 10)) & 0x7FF


def _esm_word(result: int, timer: int, tai: int, guti: int, bearer: int) -> int:
    """Session-container echo: a 12-bit digest of the attach accept."""
    return (guti ^ tai * 7 ^ bearer << 8 ^ result << 4 ^ timer << 2) & 0xFFF


UE_BUGS = (
    BugSite("UE-SETUP-HARQ", "ConnSetup", BugEffect.CRASH,
            lambda v: v["harq_max_tx"] == 7,
            "retransmission counter overflow on the maximum HARQ setting"),
    BugSite("UE-AUTH-TOKEN", "AuthRequest", BugEffect.CRASH,
            lambda v: v["autn_tag"] == 0xFFFFFFFF and v["rand_token"] & 0xFF == 0xA7,
            "parser fault on an all-ones tag when the token ends in 0xA7"),
    BugSite("UE-SECMODE-ALGO", "SecModeCommand", BugEffect.CRASH,
            lambda v: v["cipher_algo"] == 6 and v["integrity_algo"] == 5,
            "unhandled algorithm pairing; needs both fields moved at once"),
    BugSite("UE-ACCEPT-TIMER", "AttachAccept", BugEffect.HANG,
            lambda v: v["t3412_timer"] == 0,
            "zero periodic-update timer leaves the UE waiting forever"),
)

ENB_BUGS = (
    BugSite("ENB-CONNREQ-CAUSE", "ConnRequest", BugEffect.CRASH,
            lambda v: v["est_cause"] == 0,
            "reserved establishment cause dereferences an empty handler"),
    BugSite("ENB-SETUPCOMPLETE-PLMN", "ConnSetupComplete", BugEffect.CRASH,
            lambda v: v["attach_type"] == 7 and v["selected_plmn"] == 3,
            "test-attach on the reserved PLMN slot; needs both fields moved at once"),
    BugSite("ENB-AUTHRESP-LEN", "AuthResponse", BugEffect.CRASH,
            lambda v: v["res_len"] == 15,
            "response length 15 overruns the comparison buffer"),
    BugSite("ENB-SECMODE-SEQ", "SecModeComplete", BugEffect.HANG,
            lambda v: v["seq_num"] == 127,
            "sequence wrap sentinel stalls the acknowledgement path"),
)


class ProtocolMachine:
    """Shared plumbing of both machines: edge instrumentation, parsing,
    classification helpers, bug evaluation and flow status."""

    component: Component
    inbound: Direction
    bug_sites: tuple[BugSite, ...] = ()

    def __init__(self):
        self._block_ids: dict[str, int] = {}
        self.reset()

    def reset(self) -> None:
        """Back to IDLE with empty per-iteration hit counts and no
        remembered session state (the network side forgets the UE)."""
        self.state = "IDLE"
        self.status = MachineStatus.RUNNING
        self.bug_fired: tuple[str, BugEffect] | None = None
        self.rejected = False
        self.attach_done = False
        self.edge_hits: dict[int, int] = {}
        self._prev_block = 0
        self._session: dict[str, int] = {}

    # -- instrumentation -------------------------------------------------

    def _hit(self, block: str) -> None:
        idx = self._block_ids.get(block)
        if idx is None:
            idx = len(self._block_ids) + 1
            self._block_ids[block] = idx
        edge = (self._prev_block << 20) | idx
        hits = self.edge_hits
        hits[edge] = hits.get(edge, 0) + 1
        self._prev_block = idx

    def _classify(self, label: str, value: int, nominal: int, bits: int) -> bool:
        """Landmark-and-band classification of a field value; returns True
        when the value deviates from the scripted one.

        Benign traffic always lands in the nominal class, so the no-fuzz
        flow exercises a fixed edge set; only fuzzed values reach the
        zero/max/exact/band classes. Narrow fields get one class per value,
        wide fields get range bands refined by a multiplicative hash, so a
        wide field keeps yielding unseen branches deep into a campaign.
        """
        if value == nominal:
            cls = "nom"
        elif value == 0:
            cls = "zero"
        elif value == (1 << bits) - 1:
            cls = "max"
        elif bits <= 7:
            cls = f"v{value}"
        elif bits <= 15:
            cls = f"q{value >> (bits - 3)}"
        else:
            cls = f"q{value >> (bits - 3)}h{(value * _HASH) >> 28 & 0x3}"
        self._hit(f"{label}:{cls}")
        return cls != "nom"

    def _mismatch(self, label: str, value: int) -> None:
        """Coarse classification of a failed tag/response comparison."""
        self._hit(f"{label}:bad{value >> 30 & 0x3}")

    def _interaction(self, label: str, deviations: int, *values: int) -> None:
        """Digest block for messages whose fields were manipulated in
        combination; only multi-field deviations reach it."""
        if deviations < 3:
            return
        digest = 0
        for v in values:
            digest = (digest * 31 + v) & _M64
        self._hit(f"{label}:x{(digest * _HASH) >> 24 & 0xFF}")

    def _echo_delta(self, label: str, value: int, expected: int) -> bool:
        """Classification of an informational echo field against the value
        this machine expects; deviations are classified and bit-scanned,
        never vetoed."""
        delta = value ^ expected
        if delta == 0:
            self._hit(f"{label}:ok")
            return False
        self._hit(f"{label}:d{delta.bit_count()}h{(delta * _HASH) >> 18 & 0x3FF}")
        for _ in range(delta.bit_count()):
            self._hit(f"{label}:scan")
        return True

    # -- flow control ----------------------------------------------------

    def _reject(self, site: str) -> None:
        self._hit(f"rej:{site}")
        self.rejected = True

    def _crash(self, bug: BugSite) -> None:
        self._hit(f"bug:{bug.bug_id}")
        self.bug_fired = (bug.bug_id, bug.effect)
        self.status = (MachineStatus.CRASHED if bug.effect is BugEffect.CRASH
                       else MachineStatus.HUNG)

    def note_mac_reject(self) -> None:
        self._hit("rx:mac-bad-frame")
        self.rejected = True

    def note_peer_silence(self, depth: int = 1) -> None:
        """The flow died on the other side; log the local teardown path,
        once per packet the flow managed to carry."""
        for _ in range(max(depth, 1)):
            self._hit(f"teardown:{self.state}")

    def _expected_type(self) -> str | None:
        raise NotImplementedError

    def _emit(self, packet_type: str, values: dict[str, int]):
        self._hit(f"tx:{packet_type}")
        return encode_message(packet_type, values), schema_for(packet_type).channel

    def receive(self, data: bytes, channel: Channel, rng: Random):
        """Process one delivered packet; returns the response
        (bytes, channel) or None when this machine has nothing to send."""
        self._hit(f"rx:{self.state}")
        packet = dissect(data, channel, self.inbound, Layer.RRC)
        if packet.packet_type == UNKNOWN_TYPE:
            self._hit("rx:unknown")
            self._reject("unknown-type")
            return None
        expected = self._expected_type()
        if packet.packet_type != expected:
            self._hit(f"unexpected:{self.state}:{packet.packet_type}")
            self._reject("unexpected-type")
            return None
        values = {f.name: extract_field(packet, f) for f in packet.fields}
        for bug in self.bug_sites:
            if bug.packet_type == packet.packet_type and bug.predicate(values):
                self._crash(bug)
                return None
        handler = getattr(self, f"_on_{packet.packet_type}")
        return handler(values, rng)


class UeMachine(ProtocolMachine):
    """The terminal side. Tolerates a budget of non-critical deviations in
    each received message and rejects only on critical violations."""

    component = Component.UE_MACHINE
    inbound = Direction.DL
    bug_sites = UE_BUGS

    def start_attach(self, rng: Random):
        """Kick one attach attempt: draw a fresh identity and emit the
        connection request."""
        identity = rng.randrange(1, 0xFFFFFFFF)  # never the 0/max landmarks
        self._session["identity"] = identity
        self.state = "WAIT_SETUP"
        return self._emit("ConnRequest",
                          {"est_cause": 3, "spare": 0, "ue_identity": identity})

    def _expected_type(self):
        return {"WAIT_SETUP": "ConnSetup",
                "WAIT_AUTH": "AuthRequest",
                "WAIT_SECMODE": "SecModeCommand",
                "WAIT_ACCEPT": "AttachAccept"}.get(self.state)

    def _settle(self, msg: str, deviations: int, critical: str | None):
        """Common tail of every UE handler: reject on a critical violation
        or when the deviation budget is exhausted."""
        if critical is not None:
            self._reject(f"{msg}:{critical}")
            return False
        self._hit(f"dev:{msg}:{min(deviations, 4)}")
        if deviations >= UE_DEVIATION_BUDGET:
            self._reject(f"{msg}:deviation-budget")
            return False
        return True

    def _on_ConnSetup(self, v, rng):
        dev = 0
        critical = None
        dev += self._classify("ConnSetup.txn_id", v["txn_id"], nominal=0, bits=2)
        dev += self._classify("ConnSetup.srb_config", v["srb_config"], nominal=0x2C, bits=8)
        for bit in range(8):  # one bearer slot per set bit
            if v["srb_config"] >> bit & 1:
                self._hit("ConnSetup.srb_bearer_slot")
        if v["srb_config"] == 0:
            critical = "srb-teardown"
        dev += self._classify("ConnSetup.harq_max_tx", v["harq_max_tx"], nominal=1, bits=3)
        dev += self._classify("ConnSetup.sr_resource_idx", v["sr_resource_idx"], nominal=42, bits=8)
        if v["sr_resource_idx"] > 200:
            critical = critical or "sr-index-range"
        dev += self._classify("ConnSetup.power_ctrl", v["power_ctrl"], nominal=5, bits=4)
        self._interaction("ConnSetup.cfg", dev, v["txn_id"], v["srb_config"],
                          v["harq_max_tx"], v["sr_resource_idx"], v["power_ctrl"])
        if not self._settle("ConnSetup", dev, critical):
            return None
        self.state = "WAIT_AUTH"
        return self._emit("ConnSetupComplete", {
            "txn_id": v["txn_id"],
            "selected_plmn": 0,
            "attach_type": 1,
            "ue_caps": _caps_word(v["txn_id"], v["srb_config"], v["harq_max_tx"],
                                  v["sr_resource_idx"], v["power_ctrl"]),
            "ksi": 0,
        })

    def _on_AuthRequest(self, v, rng):
        dev = 0
        critical = None
        dev += self._classify("AuthRequest.ksi_asme", v["ksi_asme"], nominal=1, bits=3)
        dev += self._classify("AuthRequest.spare", v["spare"], nominal=0, bits=1)
        token = v["rand_token"]
        for shift in range(56, -8, -8):
            byte = (token >> shift) & 0xFF
            if byte == 0:
                cls = "zero"
            elif byte == 0xFF:
                cls = "max"
            elif byte < 0x10 or byte >= 0xF0:
                cls = "edge"
            else:
                cls = "mid"  # benign token bytes are always drawn in here
            self._hit(f"AuthRequest.token_byte:{cls}")
            dev += cls != "mid"
        auth_ok = v["autn_tag"] == _auth_tag(token)
        if auth_ok:
            self._hit("AuthRequest.autn_tag:ok")
        else:
            self._mismatch("AuthRequest.autn_tag", v["autn_tag"])
            dev += 1
        self._interaction("AuthRequest.auth", dev, v["ksi_asme"], v["spare"],
                          token & 0xFFFF, v["autn_tag"] >> 16)
        if not self._settle("AuthRequest", dev, critical):
            return None
        if not auth_ok:
            # network authentication failed: report it, then stop listening
            self._hit("fail:AuthRequest")
            self.state = "FAILED"
            return self._emit("AuthResponse", {
                "res_len": 0,
                "res_token": _auth_response(token),
                "seq_num": 40 + v["ksi_asme"],
            })
        self.state = "WAIT_SECMODE"
        return self._emit("AuthResponse", {
            "res_len": 8,
            "res_token": _auth_response(token),
            "seq_num": 40 + v["ksi_asme"],
        })

    def _on_SecModeCommand(self, v, rng):
        dev = 0
        dev += self._classify("SecModeCommand.cipher_algo", v["cipher_algo"], nominal=2, bits=3)
        dev += self._classify("SecModeCommand.integrity_algo", v["integrity_algo"], nominal=1, bits=3)
        dev += self._classify("SecModeCommand.nonce", v["nonce"], nominal=20, bits=6)
        mac_ok = v["mac_tag"] == _mac_tag(v["nonce"])
        if mac_ok:
            self._hit("SecModeCommand.mac_tag:ok")
        else:
            self._mismatch("SecModeCommand.mac_tag", v["mac_tag"])
            dev += 1
        self._interaction("SecModeCommand.sec", dev, v["cipher_algo"],
                          v["integrity_algo"], v["nonce"], v["mac_tag"] >> 16)
        if not self._settle("SecModeCommand", dev, None):
            return None
        if v["integrity_algo"] == 0 or not mac_ok:
            # refuse the security mode but report the failure first
            self._hit("fail:SecModeCommand")
            self.state = "FAILED"
            return self._emit("SecModeComplete", {
                "status": 0,
                "mac_res": v["mac_tag"] ^ 0x5A5A5A5A,
                "seq_num": 8 + v["cipher_algo"],
            })
        self.state = "WAIT_ACCEPT"
        return self._emit("SecModeComplete", {
            "status": 1,
            "mac_res": v["mac_tag"] ^ 0x5A5A5A5A,
            "seq_num": 8 + v["cipher_algo"],
        })

    def _on_AttachAccept(self, v, rng):
        dev = 0
        dev += self._classify("AttachAccept.attach_result", v["attach_result"], nominal=1, bits=3)
        dev += self._classify("AttachAccept.t3412_timer", v["t3412_timer"], nominal=0x21, bits=8)
        for _ in range(v["t3412_timer"] & 0x0F):  # schedule one tick per timer unit
            self._hit("AttachAccept.update_tick")
        tai = v["tai_list"]
        for shift in (16, 8, 0):
            chunk = (tai >> shift) & 0xFF
            if chunk == 0:
                cls = "zero"
            elif chunk == 0xFF:
                cls = "max"
            elif chunk < 0x80:
                cls = "low"  # all three benign chunks sit here
            else:
                cls = "high"
            self._hit(f"AttachAccept.tai_chunk:{cls}")
            dev += cls != "low"
        if tai != 0x010203:
            self._hit(f"AttachAccept.tai_sig:{(tai * _HASH) >> 24 & 0x1F}")
        dev += self._classify("AttachAccept.guti", v["guti"], nominal=0xC0FFEE42, bits=32)
        dev += self._classify("AttachAccept.bearer_id", v["bearer_id"], nominal=5, bits=4)
        self._interaction("AttachAccept.session", dev, v["attach_result"],
                          v["t3412_timer"], v["tai_list"], v["guti"] >> 12, v["bearer_id"])
        if not self._settle("AttachAccept", dev, None):
            return None
        esm = _esm_word(v["attach_result"], v["t3412_timer"],
                        v["tai_list"], v["guti"], v["bearer_id"])
        if v["attach_result"] == 0:
            # network said no: acknowledge the rejection and give up
            self._hit("fail:AttachAccept")
            self.state = "FAILED"
            return self._emit("AttachComplete", {
                "status": 1,
                "esm_container": esm,
                "seq_num": 10 + (v["t3412_timer"] & 0x3),
            })
        self.state = "DONE"
        return self._emit("AttachComplete", {
            "status": 0,
            "esm_container": esm,
            "seq_num": 10 + (v["t3412_timer"] & 0x3),
        })


class EnbMachine(ProtocolMachine):
    """The network side (base station plus core). Walks the fields of each
    received message in order and aborts the flow on the first one outside
    its allowed set; only informational echo fields are tolerated."""

    component = Component.ENB_MACHINE
    inbound = Direction.UL
    bug_sites = ENB_BUGS

    def _expected_type(self):
        return {"IDLE": "ConnRequest",
                "WAIT_SETUP_COMPLETE": "ConnSetupComplete",
                "WAIT_AUTH_RESP": "AuthResponse",
                "WAIT_SECMODE_COMPLETE": "SecModeComplete",
                "WAIT_ATTACH_COMPLETE": "AttachComplete"}.get(self.state)

    def _strict(self, label: str, value: int, nominal: int, bits: int, allowed) -> bool:
        """Classify, then veto: returns True (and rejects) when the value
        is outside the allowed set."""
        self._classify(label, value, nominal, bits)
        if value not in allowed:
            self._reject(label)
            return True
        return False

    def _on_ConnRequest(self, v, rng):
        if self._strict("ConnRequest.est_cause", v["est_cause"], 3, 3, (1, 2, 3, 4, 5)):
            return None
        if self._strict("ConnRequest.spare", v["spare"], 0, 1, (0,)):
            return None
        identity = v["ue_identity"]
        if identity == 0 or identity == 0xFFFFFFFF:
            self._hit("ConnRequest.ue_identity:landmark")
            self._reject("ConnRequest.ue_identity")
            return None
        self._hit("ConnRequest.ue_identity:ok")
        self._session["identity"] = identity
        self._session["txn"] = 0
        self._session["srb"] = 0x2C
        self.state = "WAIT_SETUP_COMPLETE"
        return self._emit("ConnSetup", {
            "txn_id": 0,
            "srb_config": 0x2C,
            "harq_max_tx": 1,
            "sr_resource_idx": 42,
            "power_ctrl": 5,
        })

    def _on_ConnSetupComplete(self, v, rng):
        if self._strict("ConnSetupComplete.txn_id", v["txn_id"],
                        self._session["txn"], 2, (self._session["txn"],)):
            return None
        if self._strict("ConnSetupComplete.selected_plmn", v["selected_plmn"], 0, 2, (0, 1)):
            return None
        if self._strict("ConnSetupComplete.attach_type", v["attach_type"], 1, 3, (1, 2)):
            return None
        # capability echo is informational: classify the delta, never veto
        self._echo_delta("ConnSetupComplete.ue_caps", v["ue_caps"],
                         _caps_word(self._session["txn"], 0x2C, 1, 42, 5))
        if self._strict("ConnSetupComplete.ksi", v["ksi"], 0, 1, (0,)):
            return None
        token = 0
        for _ in range(8):
            token = (token << 8) | rng.randrange(0x10, 0xF0)
        self._session["token"] = token
        self.state = "WAIT_AUTH_RESP"
        return self._emit("AuthRequest", {
            "ksi_asme": 1,
            "spare": 0,
            "rand_token": token,
            "autn_tag": _auth_tag(token),
        })

    def _on_AuthResponse(self, v, rng):
        expected = _auth_response(self._session["token"])
        if v["res_len"] == 0:
            # authentication failure report: log what came back, then drop
            self._hit("AuthResponse.failure-report")
            self._echo_delta("AuthResponse.res_fail", v["res_token"], expected)
            self._reject("AuthResponse.auth-failure")
            return None
        if self._strict("AuthResponse.res_len", v["res_len"], 8, 4, (8,)):
            return None
        if v["res_token"] == expected:
            self._hit("AuthResponse.res_token:ok")
        else:
            self._mismatch("AuthResponse.res_token", v["res_token"] >> 32)
            self._reject("AuthResponse.res_token")
            return None
        self._echo_delta("AuthResponse.seq_num", v["seq_num"], 41)
        nonce = 20
        self._session["mac"] = _mac_tag(nonce)
        self.state = "WAIT_SECMODE_COMPLETE"
        return self._emit("SecModeCommand", {
            "cipher_algo": 2,
            "integrity_algo": 1,
            "nonce": nonce,
            "mac_tag": self._session["mac"],
        })

    def _on_SecModeComplete(self, v, rng):
        expected = self._session["mac"] ^ 0x5A5A5A5A
        if v["status"] == 0:
            # security mode failure report
            self._hit("SecModeComplete.failure-report")
            self._echo_delta("SecModeComplete.mac_fail", v["mac_res"], expected)
            self._reject("SecModeComplete.secmode-failure")
            return None
        if self._strict("SecModeComplete.status", v["status"], 1, 2, (1,)):
            return None
        if v["mac_res"] == expected:
            self._hit("SecModeComplete.mac_res:ok")
        else:
            self._mismatch("SecModeComplete.mac_res", v["mac_res"])
            self._reject("SecModeComplete.mac_res")
            return None
        self._echo_delta("SecModeComplete.seq_num", v["seq_num"], 10)
        self._session["guti"] = 0xC0FFEE42
        self.state = "WAIT_ATTACH_COMPLETE"
        return self._emit("AttachAccept", {
            "attach_result": 1,
            "t3412_timer": 0x21,
            "tai_list": 0x010203,
            "guti": self._session["guti"],
            "bearer_id": 5,
        })

    def _on_AttachComplete(self, v, rng):
        expected_esm = _esm_word(1, 0x21, 0x010203, self._session["guti"], 5)
        if v["status"] == 1:
            # the terminal backed out of the attach it was offered
            self._hit("AttachComplete.failure-report")
            self._echo_delta("AttachComplete.esm_fail", v["esm_container"], expected_esm)
            self._reject("AttachComplete.attach-backout")
            return None
        if self._strict("AttachComplete.status", v["status"], 0, 4, (0,)):
            return None
        self._echo_delta("AttachComplete.esm_container", v["esm_container"], expected_esm)
        self._echo_delta("AttachComplete.seq_num", v["seq_num"], 11)
        self._hit("attach-complete")
        self.state = "DONE"
        self.attach_done = True
        return None


@dataclass
class IterationOutcome:
    """Everything one controller iteration produced."""

    packets_exchanged: int
    crash: tuple[str, Component] | None
    hang: bool
    ue_hits: dict
    enb_hits: dict
    seed: Seed
    attach_complete: bool = False
    rejected: bool = False
    unapplied_patches: int = 0

    @property
    def bug(self) -> tuple[str, BugEffect] | None:
        return self.seed.bug


def reset(ue: UeMachine, enb: EnbMachine) -> None:
    """Reset both machines to IDLE with cleared per-iteration hit counts
    and no session memory; idempotent."""
    ue.reset()
    enb.reset()


InterceptFn = Callable[[int, bytes, Channel, Direction], bytes]
ObserverFn = Callable[[bytes, Channel, Direction], None]


def _drive(direction: Direction, layer: Layer, ue: UeMachine, enb: EnbMachine,
           rng_seed: int, intercept: InterceptFn,
           observer: ObserverFn | None = None) -> IterationOutcome:
    """One attach attempt with interception: the controller body shared by
    live fuzzing and both reproduction modes. Exactly one packet is in
    flight at a time; the emitting side idles until the fuzzed bytes are
    delivered."""
    reset(ue, enb)
    machine_rng = Random((rng_seed ^ 0xD6E8FEB86659FD93) & _M64)
    seed = Seed(rng_seed)
    sender: ProtocolMachine = ue
    outgoing = ue.start_attach(machine_rng)
    ordinal = 0
    packets = 0
    crash = None
    hang = False
    while outgoing is not None:
        data, channel = outgoing
        send_dir = Direction.UL if sender is ue else Direction.DL
        receiver: ProtocolMachine = enb if sender is ue else ue
        mac_ok = True
        if send_dir is direction:
            wire = wrap_mac(data, channel) if layer is Layer.MAC else data
            delivered = intercept(ordinal, wire, channel, send_dir)
            seed.snapshots.append((ordinal, delivered))
            if layer is Layer.MAC:
                header, payload = delivered[:MAC_HEADER_LEN], delivered[MAC_HEADER_LEN:]
                expected_lcid = 0x01 if channel is Channel.CCCH else 0x02
                if (header[0] >> 3) != expected_lcid or header[1] != len(payload) & 0xFF:
                    mac_ok = False
                data = payload
            else:
                data = delivered
        packets += 1
        if observer is not None:
            observer(data, channel, send_dir)
        if mac_ok and len(data) >= 1:
            response = receiver.receive(data, channel, machine_rng)
        else:
            receiver.note_mac_reject()
            response = None
        ordinal += 1
        if receiver.status is MachineStatus.CRASHED:
            crash = (receiver.bug_fired[0], receiver.component)
            seed.bug = receiver.bug_fired
            break
        if receiver.status is MachineStatus.HUNG:
            hang = True
            seed.bug = receiver.bug_fired
            break
        if receiver.rejected or receiver.attach_done:
            break
        if packets >= PACKET_BUDGET:
            hang = True  # watchdog: no terminal state inside the budget
            break
        outgoing = response
        sender = receiver
    if not enb.attach_done:
        for machine in (ue, enb):
            if machine.status is MachineStatus.RUNNING and not machine.rejected:
                machine.note_peer_silence(packets)
    return IterationOutcome(
        packets_exchanged=packets,
        crash=crash,
        hang=hang,
        ue_hits=dict(ue.edge_hits),
        enb_hits=dict(enb.edge_hits),
        seed=seed,
        attach_complete=enb.attach_done,
        rejected=ue.rejected or enb.rejected,
    )


def run_iteration(direction: Direction, layer: Layer, fuzzer: Fuzzer,
                  ue: UeMachine, enb: EnbMachine, rng_seed: int) -> IterationOutcome:
    """One live fuzzing iteration: trigger the attach, intercept every
    packet flowing in the configured direction, dissect it, let the fuzzer
    manipulate it, and deliver the result."""
    rng = Random(rng_seed)
    outcome_seed_patches: list = []

    def intercept(ordinal: int, wire: bytes, channel: Channel, send_dir: Direction) -> bytes:
        packet = dissect(wire, channel, send_dir, layer)
        fuzzer.buffer.insert(packet)  # pre-fuzz capture keeps replays well-formed
        fuzzer.prepare(packet)
        fuzzed, patch = fuzzer.fuzz(packet, rng)
        if patch is not None:
            outcome_seed_patches.append((ordinal, patch))
        return fuzzed.data

    outcome = _drive(direction, layer, ue, enb, rng_seed, intercept)
    outcome.seed.patches = outcome_seed_patches
    return outcome


def reproduce_crash(seed_source: Seed | str | Path, mode: ReproMode,
                    direction: Direction, layer: Layer = Layer.RRC) -> IterationOutcome:
    """Re-run one recorded iteration.

    FULL reapplies each stored patch to freshly generated packets; since the
    patches are SET-resolved this needs no fuzzer. REPLAY_ALL substitutes
    every intercepted packet with the recorded post-fuzz bytes, which also
    survives divergence in the regenerated benign values. Patches or
    snapshots whose ordinal is never reached are reported and the flow
    simply continues unfuzzed.
    """
    seed = seed_source if isinstance(seed_source, Seed) else load_seed(seed_source)
    rng = Random(seed.rng_seed)
    ue, enb = UeMachine(), EnbMachine()
    pending_patches = seed.patch_map()
    snapshots = seed.snapshot_map()
    applied: list = []

    def intercept(ordinal: int, wire: bytes, channel: Channel, send_dir: Direction) -> bytes:
        if mode is ReproMode.REPLAY_ALL:
            stored = snapshots.get(ordinal)
            if stored is None:
                return wire
            applied.append((ordinal, ReplayPatch(channel, stored)))
            return stored
        patch = pending_patches.pop(ordinal, None)
        if patch is None:
            return wire
        packet = dissect(wire, channel, send_dir, layer)
        fuzzed = apply_patch(patch, packet, rng)
        applied.append((ordinal, patch))
        return fuzzed.data

    outcome = _drive(direction, layer, ue, enb, seed.rng_seed, intercept)
    outcome.seed.patches = applied
    if mode is ReproMode.FULL:
        outcome.unapplied_patches = len(pending_patches)
        if pending_patches:
            logger.warning("%d patch(es) referenced ordinals beyond the %d packets exchanged",
                           len(pending_patches), outcome.packets_exchanged)
    return outcome


def benign_trace(rng_seed: int = 1) -> list[str]:
    """Hex-line trace of one unfuzzed attach attempt (for regression)."""
    lines: list[str] = []
    ue, enb = UeMachine(), EnbMachine()

    def observe(data: bytes, channel: Channel, send_dir: Direction) -> None:
        lines.append(dissect(data, channel, send_dir, Layer.RRC).summary())

    _drive(Direction.DL, Layer.RRC, ue, enb, rng_seed,
           lambda ordinal, wire, channel, send_dir: wire, observer=observe)
    return lines
