/**
 * Review session state machine, free of DOM concerns.
 *
 * The session is a pure client of the curation API: every mutation goes
 * through POST /review with the version echoed from the last item the
 * server sent us. A 409 never overwrites anything — it parks the session
 * in a conflict state until the reviewer reloads. The unsent edit buffer
 * is the only state that survives outside the server.
 */

import {
  ConflictError,
  ReviewApi,
  CurationItem,
  Decision,
  RejectReason,
  Summary,
} from "./api.js";

export type Phase = "idle" | "loading" | "reviewing" | "empty" | "conflict" | "error";

export interface Counters {
  approved: number;
  edited: number;
  rejected: number;
}

export interface SessionState {
  reviewer: string;
  phase: Phase;
  item: CurationItem | null;
  buffer: string;
  reason: RejectReason | null;
  counters: Counters;
  summary: Summary | null;
  conflictItem: CurationItem | null;
  error: string | null;
}

export type Listener = (state: SessionState) => void;

export class ReviewSession {
  private state: SessionState;
  private listeners: Listener[] = [];

  constructor(private api: ReviewApi, reviewer: string) {
    this.state = {
      reviewer,
      phase: "idle",
      item: null,
      buffer: "",
      reason: null,
      counters: { approved: 0, edited: 0, rejected: 0 },
      summary: null,
      conflictItem: null,
      error: null,
    };
  }

  get current(): SessionState {
    return this.state;
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
    listener(this.state);
  }

  private update(patch: Partial<SessionState>): void {
    this.state = { ...this.state, ...patch };
    for (const l of this.listeners) l(this.state);
  }

  /** Decision gating mirrors the server's payload invariants. */
  canApprove(): boolean {
    return this.state.phase === "reviewing"
      && this.state.item !== null
      && this.state.buffer === this.state.item.initial_caption;
  }

  canEdit(): boolean {
    return this.state.phase === "reviewing"
      && this.state.item !== null
      && this.state.buffer.trim().length > 0
      && this.state.buffer !== this.state.item.initial_caption;
  }

  canReject(): boolean {
    return this.state.phase === "reviewing" && this.state.reason !== null;
  }

  setBuffer(text: string): void {
    this.update({ buffer: text });
  }

  setReason(reason: RejectReason | null): void {
    this.update({ reason });
  }

  async loadNext(): Promise<void> {
    this.update({ phase: "loading", error: null, conflictItem: null });
    try {
      const item = await this.api.nextItem(this.state.reviewer);
      if (item === null) {
        const summary = await this.api.summary().catch(() => null);
        this.update({ phase: "empty", item: null, buffer: "", reason: null, summary });
        return;
      }
      this.update({
        phase: "reviewing",
        item,
        buffer: item.initial_caption,
        reason: null,
      });
    } catch (e) {
      this.update({ phase: "error", error: String(e) });
    }
  }

  /** Submit the given decision; success auto-advances the queue. */
  async submit(decision: Decision): Promise<void> {
    const item = this.state.item;
    if (!item || this.state.phase !== "reviewing") return;
    if (decision === "approve" && !this.canApprove()) return;
    if (decision === "edit" && !this.canEdit()) return;
    if (decision === "reject" && !this.canReject()) return;

    const payload = {
      decision,
      expected_version: item.version,
      actor: this.state.reviewer,
      ...(decision === "edit" ? { edited_caption: this.state.buffer } : {}),
      ...(decision === "reject" ? { reason: this.state.reason! } : {}),
    };
    try {
      await this.api.submitReview(item.id, payload);
    } catch (e) {
      if (e instanceof ConflictError) {
        // Keep the reviewer's buffer; surface the server's newer state.
        this.update({ phase: "conflict", conflictItem: e.current });
        return;
      }
      this.update({ phase: "error", error: String(e) });
      return;
    }
    const counters = { ...this.state.counters };
    if (decision === "approve") counters.approved += 1;
    if (decision === "edit") counters.edited += 1;
    if (decision === "reject") counters.rejected += 1;
    this.update({ counters });
    await this.loadNext();
  }

  /** Conflict banner action: adopt the server's current item, keep the buffer. */
  async reloadAfterConflict(): Promise<void> {
    const item = this.state.item;
    if (!item) return;
    try {
      const fresh = await this.api.getItem(item.id);
      this.update({ phase: "reviewing", item: fresh, conflictItem: null });
    } catch (e) {
      this.update({ phase: "error", error: String(e) });
    }
  }

  /** Error banner action: retry loading (the edit buffer is untouched). */
  async retry(): Promise<void> {
    if (this.state.item === null) {
      await this.loadNext();
    } else {
      this.update({ phase: "reviewing", error: null });
    }
  }
}

/** Indices for a capped frame strip: all frames, or an even stride sample. */
export function strideSample(count: number, cap: number): number[] {
  if (count <= cap) {
    return Array.from({ length: count }, (_, i) => i);
  }
  const picked = new Set<number>();
  for (let i = 0; i < cap; i++) {
    picked.add(Math.round((i * (count - 1)) / (cap - 1)));
  }
  return [...picked].sort((a, b) => a - b);
}

/** Timestamp label matching the pipeline's annotation style. */
export function frameLabel(timestampS: number): string {
  const value = Number.isInteger(timestampS)
    ? String(timestampS)
    : timestampS.toFixed(1);
  return `[t=${value}s]`;
}
