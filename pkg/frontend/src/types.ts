// Shapes produced by the scoring CLI (audit packets) and consumed back by it
// (decision files). Pixel boxes are [x0, y0, x1, y1] with origin top-left.

export type PixelBox = [number, number, number, number];

export interface AuditEntry {
  field_id: string;
  label: string;
  gt_value: string | null;
  pred_value: string | null;
  value_correct: boolean;
  gt_regions: PixelBox[];
  pred_box: PixelBox | null;
  iou: number;
  iop: number;
  failure: string;
  needs_review: boolean;
}

export interface AuditPacket {
  doc_id: string;
  image_path: string;
  page: { width: number; height: number };
  model_id: string;
  prompt_hash: string;
  entries: AuditEntry[];
}

export type Verdict = "accepted" | "rejected" | "corrected";

export interface AuditDecision {
  doc_id: string;
  field_id: string;
  model_id: string;
  verdict: Verdict;
  corrected_value?: string;
  reviewer_note?: string;
  timestamp: string;
  latency_ms?: number;
}

export interface ExportHeader {
  type: "header";
  doc_id: string;
  model_id: string;
  prompt_hash: string;
  complete: boolean;
  decided: number;
  total: number;
}
