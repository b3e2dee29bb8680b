// Review-session state machine, kept free of DOM so it is directly testable.
//
// A session wraps one audit packet. Fields are reviewed in a fixed queue:
// everything flagged needs_review (abstentions, failures) first, then the
// already-compliant fields, both in schema order. Decisions never mutate the
// packet; they accumulate in a separate map and round-trip through a
// line-delimited export that the scoring CLI can read back.

import type {
  AuditDecision,
  AuditEntry,
  AuditPacket,
  ExportHeader,
  Verdict,
} from "./types.js";

export class PacketError extends Error {}

export function validatePacket(data: unknown): AuditPacket {
  const p = data as AuditPacket;
  if (
    !p ||
    typeof p.doc_id !== "string" ||
    typeof p.model_id !== "string" ||
    !p.page ||
    typeof p.page.width !== "number" ||
    typeof p.page.height !== "number" ||
    !Array.isArray(p.entries)
  ) {
    throw new PacketError("malformed audit packet");
  }
  for (const entry of p.entries) {
    if (typeof entry.field_id !== "string" || !Array.isArray(entry.gt_regions)) {
      throw new PacketError(`malformed packet entry ${JSON.stringify(entry)}`);
    }
  }
  return p;
}

/** needs_review first, then the rest; schema order preserved within each group. */
export function reviewOrder(entries: AuditEntry[]): AuditEntry[] {
  return [...entries.filter((e) => e.needs_review), ...entries.filter((e) => !e.needs_review)];
}

export class ReviewSession {
  readonly packet: AuditPacket;
  readonly queue: AuditEntry[];
  private decisions = new Map<string, AuditDecision>();
  private cursor = 0;
  private focusSince: number;
  private now: () => number;

  constructor(packet: AuditPacket, now: () => number = Date.now) {
    this.packet = validatePacket(packet);
    this.queue = reviewOrder(this.packet.entries);
    this.now = now;
    this.focusSince = now();
  }

  get current(): AuditEntry | undefined {
    return this.queue[this.cursor];
  }

  get decidedCount(): number {
    return this.decisions.size;
  }

  get total(): number {
    return this.queue.length;
  }

  get complete(): boolean {
    return this.decidedCount === this.total;
  }

  decisionFor(fieldId: string): AuditDecision | undefined {
    return this.decisions.get(fieldId);
  }

  allDecisions(): AuditDecision[] {
    // Export in queue order so the file reads like the review did.
    return this.queue
      .map((e) => this.decisions.get(e.field_id))
      .filter((d): d is AuditDecision => d !== undefined);
  }

  goTo(index: number): void {
    if (index >= 0 && index < this.queue.length) {
      this.cursor = index;
      this.focusSince = this.now();
    }
  }

  next(): void {
    this.goTo(Math.min(this.cursor + 1, this.queue.length - 1));
  }

  previous(): void {
    this.goTo(Math.max(this.cursor - 1, 0));
  }

  /** First still-undecided queue position at or after the cursor, else -1. */
  nextUndecided(): number {
    for (let offset = 0; offset < this.queue.length; offset++) {
      const i = (this.cursor + offset) % this.queue.length;
      const entry = this.queue[i];
      if (entry && !this.decisions.has(entry.field_id)) return i;
    }
    return -1;
  }

  /**
   * Record a verdict for a field and advance to the next undecided one.
   * A corrected verdict without a value is rejected with no state change.
   */
  recordDecision(fieldId: string, verdict: Verdict, correctedValue?: string, note?: string): AuditDecision {
    const entry = this.queue.find((e) => e.field_id === fieldId);
    if (!entry) throw new PacketError(`unknown field ${fieldId}`);
    if (verdict === "corrected" && (correctedValue === undefined || correctedValue === "")) {
      throw new PacketError("corrected verdict requires a corrected value");
    }
    const decision: AuditDecision = {
      doc_id: this.packet.doc_id,
      field_id: fieldId,
      model_id: this.packet.model_id,
      verdict,
      timestamp: new Date(this.now()).toISOString(),
      latency_ms: Math.max(0, this.now() - this.focusSince),
    };
    if (verdict === "corrected") decision.corrected_value = correctedValue;
    if (note) decision.reviewer_note = note;
    this.decisions.set(fieldId, decision);

    const pending = this.nextUndecided();
    if (pending >= 0) this.goTo(pending);
    return decision;
  }

  /** Line-delimited export: header record first, then one line per decision. */
  exportDecisions(): string {
    if (this.decisions.size === 0) {
      throw new PacketError("nothing to export: no decisions recorded");
    }
    const header: ExportHeader = {
      type: "header",
      doc_id: this.packet.doc_id,
      model_id: this.packet.model_id,
      prompt_hash: this.packet.prompt_hash,
      complete: this.complete,
      decided: this.decidedCount,
      total: this.total,
    };
    const lines = [JSON.stringify(header)];
    for (const decision of this.allDecisions()) {
      lines.push(JSON.stringify(decision));
    }
    return lines.join("\n") + "\n";
  }

  /** Restore decisions from an exported file (resume a review). */
  importDecisions(text: string): number {
    let restored = 0;
    for (const line of text.split("\n")) {
      const trimmed = line.trim();
      if (!trimmed) continue;
      const record = JSON.parse(trimmed) as AuditDecision & { type?: string };
      if (record.type === "header") continue;
      if (record.doc_id !== this.packet.doc_id || record.model_id !== this.packet.model_id) {
        throw new PacketError(
          `decision for ${record.doc_id}/${record.model_id} does not belong to this packet`
        );
      }
      if (!this.queue.some((e) => e.field_id === record.field_id)) {
        throw new PacketError(`decision for unknown field ${record.field_id}`);
      }
      this.decisions.set(record.field_id, record);
      restored++;
    }
    const pending = this.nextUndecided();
    if (pending >= 0) this.goTo(pending);
    return restored;
  }
}
