import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { beforeEach, describe, expect, it } from "vitest";

import { PacketError, ReviewSession, reviewOrder } from "../src/session.js";
import type { AuditDecision, AuditPacket } from "../src/types.js";

const here = dirname(fileURLToPath(import.meta.url));
const fixturePacket = (): AuditPacket =>
  JSON.parse(readFileSync(join(here, "..", "fixtures", "packet.json"), "utf-8"));

// Deterministic clock for reproducible timestamps/latencies.
const makeClock = () => {
  let t = 1_700_000_000_000;
  return () => (t += 250);
};

describe("packet loading and queue order", () => {
  it("loads the fixture packet produced by the scoring CLI", () => {
    const session = new ReviewSession(fixturePacket());
    expect(session.total).toBe(10);
    expect(session.packet.doc_id).toBe("doc_001");
    expect(session.packet.page.width).toBe(1654);
  });

  it("queues flagged fields (abstentions, failures) before compliant ones", () => {
    const session = new ReviewSession(fixturePacket());
    const flags = session.queue.map((e) => e.needs_review);
    const firstOk = flags.indexOf(false);
    expect(flags.slice(0, firstOk).every(Boolean)).toBe(true);
    expect(flags.slice(firstOk).some(Boolean)).toBe(false);
    // abstained fields lead the queue
    expect(session.queue[0]?.failure).toBe("abstained_box");
    expect(session.queue[1]?.failure).toBe("abstained_box");
    // schema order preserved within each group
    expect(session.queue.slice(0, 4).map((e) => e.field_id)).toEqual([
      "rectal_bleeding",
      "weight_loss",
      "iron_deficiency_anaemia",
      "referral_priority",
    ]);
    expect(session.queue[4]?.field_id).toBe("patient_name");
  });

  it("keeps schema order when nothing needs review", () => {
    const packet = fixturePacket();
    for (const entry of packet.entries) entry.needs_review = false;
    expect(reviewOrder(packet.entries).map((e) => e.field_id)).toEqual(
      packet.entries.map((e) => e.field_id)
    );
  });

  it("rejects malformed packets", () => {
    expect(() => new ReviewSession({} as never)).toThrow(PacketError);
    const broken = fixturePacket() as unknown as { entries: unknown };
    broken.entries = [{ nope: true }];
    expect(() => new ReviewSession(broken as never)).toThrow(PacketError);
  });
});

describe("recording decisions", () => {
  let session: ReviewSession;

  beforeEach(() => {
    session = new ReviewSession(fixturePacket(), makeClock());
  });

  it("advances to the next undecided field", () => {
    const first = session.current!.field_id;
    session.recordDecision(first, "accepted");
    expect(session.decidedCount).toBe(1);
    expect(session.current!.field_id).not.toBe(first);
    expect(session.decisionFor(first)?.verdict).toBe("accepted");
  });

  it("stores corrections with their value", () => {
    const d = session.recordDecision(session.current!.field_id, "corrected", "14.2");
    expect(d.corrected_value).toBe("14.2");
  });

  it("rejects corrected without a value, with no state change", () => {
    const before = session.decidedCount;
    expect(() => session.recordDecision(session.current!.field_id, "corrected")).toThrow(
      PacketError
    );
    expect(session.decidedCount).toBe(before);
  });

  it("rejects unknown fields", () => {
    expect(() => session.recordDecision("bogus", "accepted")).toThrow(PacketError);
  });

  it("records per-decision latency", () => {
    const d = session.recordDecision(session.current!.field_id, "accepted");
    expect(d.latency_ms).toBeGreaterThanOrEqual(0);
  });

  it("re-deciding a field overwrites, not duplicates", () => {
    const fid = session.current!.field_id;
    session.recordDecision(fid, "accepted");
    session.goTo(session.queue.findIndex((e) => e.field_id === fid));
    session.recordDecision(fid, "rejected");
    expect(session.decidedCount).toBe(1);
    expect(session.decisionFor(fid)?.verdict).toBe("rejected");
  });
});

describe("export / import", () => {
  it("round-trips 10 decisions losslessly", () => {
    const session = new ReviewSession(fixturePacket(), makeClock());
    const verdicts = ["accepted", "rejected", "corrected"] as const;
    session.queue.forEach((entry, i) => {
      const verdict = verdicts[i % 3]!;
      session.recordDecision(
        entry.field_id,
        verdict,
        verdict === "corrected" ? `fix-${i}` : undefined,
        i === 0 ? "double-checked against the scan" : undefined
      );
    });
    expect(session.decidedCount).toBe(10);
    expect(session.complete).toBe(true);

    const exported = session.exportDecisions();
    const fresh = new ReviewSession(fixturePacket(), makeClock());
    expect(fresh.importDecisions(exported)).toBe(10);
    expect(fresh.allDecisions()).toEqual(session.allDecisions());
    // and the re-export is byte-identical
    expect(fresh.exportDecisions()).toBe(exported);
  });

  it("exports one line per decision plus a header", () => {
    const session = new ReviewSession(fixturePacket(), makeClock());
    session.queue.forEach((e) => session.recordDecision(e.field_id, "accepted"));
    const lines = session.exportDecisions().trim().split("\n");
    expect(lines).toHaveLength(11);
    const header = JSON.parse(lines[0]!);
    expect(header.type).toBe("header");
    expect(header.complete).toBe(true);
    for (const line of lines.slice(1)) {
      const d = JSON.parse(line) as AuditDecision;
      expect(d.doc_id).toBe("doc_001");
      expect(d.verdict).toBe("accepted");
    }
  });

  it("flags incomplete sessions in the header", () => {
    const session = new ReviewSession(fixturePacket(), makeClock());
    session.queue.slice(0, 4).forEach((e) => session.recordDecision(e.field_id, "accepted"));
    const lines = session.exportDecisions().trim().split("\n");
    expect(lines).toHaveLength(5);
    const header = JSON.parse(lines[0]!);
    expect(header.complete).toBe(false);
    expect(header.decided).toBe(4);
    expect(header.total).toBe(10);
  });

  it("refuses to export nothing", () => {
    expect(() => new ReviewSession(fixturePacket()).exportDecisions()).toThrow(PacketError);
  });

  it("rejects decisions belonging to another packet", () => {
    const session = new ReviewSession(fixturePacket(), makeClock());
    session.recordDecision(session.queue[0]!.field_id, "accepted");
    const exported = session.exportDecisions();
    const foreign = fixturePacket();
    foreign.doc_id = "doc_999";
    const other = new ReviewSession(foreign, makeClock());
    expect(() => other.importDecisions(exported)).toThrow(PacketError);
  });

  it("never mutates packet data", () => {
    const packet = fixturePacket();
    const snapshot = JSON.stringify(packet);
    const session = new ReviewSession(packet, makeClock());
    session.queue.forEach((e) => session.recordDecision(e.field_id, "rejected"));
    session.exportDecisions();
    expect(JSON.stringify(session.packet)).toBe(snapshot);
  });
});
