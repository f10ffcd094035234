/** DTOs mirrored from the review service JSON API. */

export interface QueueItem {
  image_id: string;
  iteration: number;
  status: string;
  edf_url: string;
  mask_url: string;
  overlay_url: string;
  annotation_url: string;
}

export interface IterationRecord {
  iteration: number;
  n_accepted: number;
  error_pct: number;
  train_size: number;
}

export interface RunSummary {
  run_id: string;
  iteration: number;
  review_iteration: number | null;
  queue_remaining: number;
  records: IterationRecord[];
  status: string;
  error: string | null;
}

export interface SectionRow {
  section: number;
  manual: number;
  predicted: number;
  asa?: number;
}

export interface MetricsPayload {
  records: IterationRecord[];
  sections: Array<{ iteration: number; rows: SectionRow[] }>;
}

export type VerdictValue = "accept" | "reject";
