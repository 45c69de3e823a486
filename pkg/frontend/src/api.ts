/** Typed client for the curation HTTP API. */

export type ItemStatus = "pending" | "approved" | "edited" | "rejected";
export type RejectReason = "looping" | "truncated" | "sensitive" | "other";
export type Decision = "approve" | "edit" | "reject";

export interface PreFlag {
  kind: "clean" | "looping" | "truncated";
  evidence: string;
  repeat_count?: number;
}

export interface CurationItem {
  id: string;
  video_id: string;
  duration_s: number;
  frame_refs: string[];
  frame_timestamps: number[];
  initial_caption: string;
  pre_flag: PreFlag;
  status: ItemStatus;
  rejection_reason: RejectReason | null;
  final_caption: string | null;
  reviewer: string | null;
  version: number;
  lock: { reviewer: string; expires_at: number } | null;
}

export interface Summary {
  total: number;
  by_status: Record<ItemStatus, number>;
  pre_flags: Record<string, number>;
}

export interface ReviewPayload {
  decision: Decision;
  expected_version: number;
  actor: string;
  edited_caption?: string;
  reason?: RejectReason;
}

/** Thrown on a 409: carries the server's current view of the item. */
export class ConflictError extends Error {
  constructor(public current: CurationItem) {
    super("review conflicted with a newer version");
  }
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

/** Surface the session and view depend on; lets tests substitute a fake. */
export interface ReviewApi {
  frameUrl(itemId: string, index: number): string;
  nextItem(reviewer: string): Promise<CurationItem | null>;
  getItem(itemId: string): Promise<CurationItem>;
  submitReview(itemId: string, payload: ReviewPayload): Promise<CurationItem>;
  summary(): Promise<Summary>;
}

export class CurationApi implements ReviewApi {
  constructor(private baseUrl: string = "") {}

  frameUrl(itemId: string, index: number): string {
    return `${this.baseUrl}/api/items/${encodeURIComponent(itemId)}/frames/${index}`;
  }

  async nextItem(reviewer: string): Promise<CurationItem | null> {
    const res = await fetch(
      `${this.baseUrl}/api/items/next?reviewer=${encodeURIComponent(reviewer)}`,
    );
    if (res.status === 204) return null;
    if (!res.ok) throw new ApiError(res.status, await res.text());
    return (await res.json()) as CurationItem;
  }

  async getItem(itemId: string): Promise<CurationItem> {
    const res = await fetch(`${this.baseUrl}/api/items/${encodeURIComponent(itemId)}`);
    if (!res.ok) throw new ApiError(res.status, await res.text());
    return (await res.json()) as CurationItem;
  }

  async submitReview(itemId: string, payload: ReviewPayload): Promise<CurationItem> {
    const res = await fetch(
      `${this.baseUrl}/api/items/${encodeURIComponent(itemId)}/review`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(payload),
      },
    );
    if (res.status === 409) {
      const body = (await res.json()) as { item: CurationItem };
      throw new ConflictError(body.item);
    }
    if (!res.ok) throw new ApiError(res.status, await res.text());
    return (await res.json()) as CurationItem;
  }

  async summary(): Promise<Summary> {
    const res = await fetch(`${this.baseUrl}/api/summary`);
    if (!res.ok) throw new ApiError(res.status, await res.text());
    return (await res.json()) as Summary;
  }
}
