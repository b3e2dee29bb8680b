// DOM wiring: packet loading, page/overlay rendering, keyboard review loop,
// decision persistence (localStorage) and export/import.

import { clampZoom, fitZoom, rectForBox } from "./overlay.js";
import { PacketError, ReviewSession } from "./session.js";
import type { AuditEntry, Verdict } from "./types.js";

const $ = <T extends HTMLElement>(selector: string): T => {
  const el = document.querySelector<T>(selector);
  if (!el) throw new Error(`missing element ${selector}`);
  return el;
};

const stage = $("#stage");
const pageBox = $("#page");
const pageImage = $<HTMLImageElement>("#page-image");
const overlayRoot = $("#overlays");
const queueRoot = $("#queue");
const detailRoot = $("#detail");
const progressEl = $("#progress");
const banner = $("#banner");
const zoomLabel = $("#zoom-label");

let session: ReviewSession | null = null;
let zoom = 1.0;
let packetUrl = "";

function showBanner(message: string): void {
  banner.textContent = message;
  banner.hidden = false;
}

function storageKey(): string {
  return session ? `groundscore:${session.packet.model_id}:${session.packet.doc_id}` : "";
}

function persist(): void {
  if (!session || session.decidedCount === 0) return;
  localStorage.setItem(storageKey(), session.exportDecisions());
}

function restore(): void {
  if (!session) return;
  const saved = localStorage.getItem(storageKey());
  if (saved) {
    try {
      session.importDecisions(saved);
    } catch {
      localStorage.removeItem(storageKey());
    }
  }
}

function verdictMark(fieldId: string): string {
  const d = session?.decisionFor(fieldId);
  if (!d) return "·";
  return d.verdict === "accepted" ? "✓" : d.verdict === "rejected" ? "✗" : "✎";
}

function renderQueue(): void {
  if (!session) return;
  queueRoot.replaceChildren(
    ...session.queue.map((entry, i) => {
      const li = document.createElement("li");
      li.className = [
        i === session!.queue.indexOf(session!.current!) ? "current" : "",
        entry.needs_review ? "flagged" : "",
      ].join(" ");
      li.textContent = `${verdictMark(entry.field_id)} ${entry.field_id} (${entry.failure})`;
      li.onclick = () => {
        session!.goTo(i);
        render();
      };
      return li;
    })
  );
  progressEl.textContent = `${session.decidedCount}/${session.total} decided`;
}

function renderDetail(entry: AuditEntry): void {
  const rows: [string, string][] = [
    ["Field", `${entry.label} (${entry.field_id})`],
    ["Ground truth", entry.gt_value ?? "—"],
    ["Predicted", entry.pred_value ?? "—"],
    ["Value match", entry.value_correct ? "yes" : "no"],
    ["IoU / IoP", `${entry.iou.toFixed(3)} / ${entry.iop.toFixed(3)}`],
    ["Failure", entry.failure],
  ];
  const decision = session?.decisionFor(entry.field_id);
  if (decision) {
    rows.push([
      "Decision",
      decision.verdict + (decision.corrected_value ? ` → ${decision.corrected_value}` : ""),
    ]);
  }
  detailRoot.replaceChildren(
    ...rows.map(([k, v]) => {
      const div = document.createElement("div");
      const key = document.createElement("span");
      key.className = "key";
      key.textContent = k;
      const value = document.createElement("span");
      value.textContent = v;
      div.append(key, value);
      return div;
    })
  );
}

function renderOverlays(): void {
  if (!session) return;
  const page = session.packet.page;
  const displayWidth = page.width * zoom;
  pageBox.style.width = `${displayWidth}px`;
  pageBox.style.height = `${page.height * zoom}px`;
  pageImage.style.width = `${displayWidth}px`;
  pageImage.style.height = `${page.height * zoom}px`;
  zoomLabel.textContent = `${Math.round(zoom * 100)}%`;

  const current = session.current;
  const boxes: HTMLDivElement[] = [];
  for (const entry of session.packet.entries) {
    const isCurrent = entry.field_id === current?.field_id;
    for (const region of entry.gt_regions) {
      const div = document.createElement("div");
      div.className = `box gt ${isCurrent ? "active" : ""}`;
      const r = rectForBox(region, page, displayWidth);
      Object.assign(div.style, {
        left: `${r.left}px`, top: `${r.top}px`,
        width: `${r.width}px`, height: `${r.height}px`,
      });
      boxes.push(div);
    }
    if (entry.pred_box) {
      const div = document.createElement("div");
      div.className = `box pred ${isCurrent ? "active" : ""}`;
      const r = rectForBox(entry.pred_box, page, displayWidth);
      Object.assign(div.style, {
        left: `${r.left}px`, top: `${r.top}px`,
        width: `${r.width}px`, height: `${r.height}px`,
      });
      if (isCurrent) div.title = `${entry.field_id} prediction`;
      boxes.push(div);
    }
  }
  overlayRoot.replaceChildren(...boxes);
}

function render(): void {
  if (!session) return;
  renderQueue();
  const current = session.current;
  if (current) renderDetail(current);
  renderOverlays();
}

function decide(verdict: Verdict): void {
  if (!session?.current) return;
  let corrected: string | undefined;
  if (verdict === "corrected") {
    corrected = window.prompt("Corrected value:")?.trim() || undefined;
    if (!corrected) {
      showBanner("Correction cancelled: a corrected verdict needs a value.");
      return;
    }
  }
  banner.hidden = true;
  session.recordDecision(session.current.field_id, verdict, corrected);
  persist();
  render();
}

function exportDecisions(): void {
  if (!session || session.decidedCount === 0) {
    showBanner("No decisions to export yet.");
    return;
  }
  const blob = new Blob([session.exportDecisions()], { type: "application/jsonl" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = `${session.packet.model_id}_${session.packet.doc_id}_decisions.jsonl`;
  a.click();
  URL.revokeObjectURL(a.href);
}

function importDecisions(file: File): void {
  file.text().then((text) => {
    if (!session) return;
    try {
      const n = session.importDecisions(text);
      showBanner(`Restored ${n} decisions.`);
      persist();
      render();
    } catch (err) {
      showBanner(`Import failed: ${(err as Error).message}`);
    }
  });
}

function bindKeys(): void {
  window.addEventListener("keydown", (ev) => {
    if (ev.target instanceof HTMLInputElement) return;
    switch (ev.key) {
      case "a": decide("accepted"); break;
      case "r": decide("rejected"); break;
      case "c": decide("corrected"); break;
      case "n": case "j": session?.next(); render(); break;
      case "p": case "k": session?.previous(); render(); break;
      case "e": exportDecisions(); break;
      case "+": case "=": zoom = clampZoom(zoom * 1.25); renderOverlays(); break;
      case "-": zoom = clampZoom(zoom / 1.25); renderOverlays(); break;
      case "0": zoom = 1.0; renderOverlays(); break;
      case "f":
        if (session) {
          zoom = clampZoom(
            fitZoom(session.packet.page, {
              width: stage.clientWidth,
              height: stage.clientHeight,
            })
          );
          renderOverlays();
        }
        break;
      default: return;
    }
    ev.preventDefault();
  });
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  packetUrl = params.get("packet") ?? "fixtures/packet.json";
  let data: unknown;
  try {
    const resp = await fetch(packetUrl);
    if (!resp.ok) throw new Error(`${resp.status} ${resp.statusText}`);
    data = await resp.json();
  } catch (err) {
    showBanner(`Cannot load packet ${packetUrl}: ${(err as Error).message}`);
    return;
  }
  try {
    session = new ReviewSession(data as never);
  } catch (err) {
    showBanner(
      err instanceof PacketError ? err.message : `Unexpected packet error: ${err}`
    );
    return;
  }

  // Image path is relative to the packet file's directory.
  const base = packetUrl.slice(0, packetUrl.lastIndexOf("/") + 1);
  pageImage.src = base + session.packet.image_path;
  pageImage.onerror = () =>
    showBanner(`Form image missing: ${session?.packet.image_path}`);
  pageImage.onload = () => {
    banner.hidden = true;
    zoom = clampZoom(
      fitZoom(session!.packet.page, {
        width: stage.clientWidth,
        height: stage.clientHeight,
      })
    );
    render();
  };

  $("#export").onclick = exportDecisions;
  $<HTMLInputElement>("#import").addEventListener("change", (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (file) importDecisions(file);
  });

  document.title = `${session.packet.model_id} · ${session.packet.doc_id} · audit review`;
  $("#packet-name").textContent = `${session.packet.model_id} / ${session.packet.doc_id}`;
  restore();
  bindKeys();
  render();
}

boot();
