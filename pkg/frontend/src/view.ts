/**
 * DOM rendering for the review session. Given identical states this paints
 * identical views; all mutations flow through the session's API calls.
 */

import { RejectReason, ReviewApi } from "./api.js";
import { ReviewSession, SessionState, frameLabel, strideSample } from "./session.js";

export const FRAME_STRIP_CAP = 64;

const REASONS: RejectReason[] = ["looping", "truncated", "sensitive", "other"];

export class ReviewView {
  constructor(
    private root: HTMLElement,
    private session: ReviewSession,
    private api: ReviewApi,
  ) {}

  mount(): void {
    this.root.innerHTML = `
      <header class="bar">
        <span class="title">caption review</span>
        <span id="reviewer-name" class="reviewer"></span>
        <span id="progress" class="progress"></span>
      </header>
      <div id="banner"></div>
      <main id="content"></main>
      <footer class="bar actions">
        <button id="btn-approve" data-key="a">approve <kbd>a</kbd></button>
        <button id="btn-edit" data-key="e">save edit <kbd>e</kbd></button>
        <select id="reject-reason">
          <option value="">reject reason…</option>
          ${REASONS.map((r) => `<option value="${r}">${r}</option>`).join("")}
        </select>
        <button id="btn-reject" data-key="r">reject <kbd>r</kbd></button>
        <button id="btn-next" data-key="n">next <kbd>n</kbd></button>
      </footer>
    `;
    this.button("btn-approve").addEventListener("click", () => void this.session.submit("approve"));
    this.button("btn-edit").addEventListener("click", () => void this.session.submit("edit"));
    this.button("btn-reject").addEventListener("click", () => void this.session.submit("reject"));
    this.button("btn-next").addEventListener("click", () => void this.session.loadNext());
    this.reasonSelect().addEventListener("change", () => {
      const value = this.reasonSelect().value as RejectReason | "";
      this.session.setReason(value === "" ? null : value);
    });
    // Shortcuts invoke exactly the button handlers.
    document.addEventListener("keydown", (event) => {
      if (event.target instanceof HTMLTextAreaElement) return;
      if (event.target instanceof HTMLInputElement) return;
      const button = this.root.querySelector<HTMLButtonElement>(`[data-key="${event.key}"]`);
      if (button && !button.disabled) button.click();
    });
    this.session.subscribe((state) => this.render(state));
  }

  private button(id: string): HTMLButtonElement {
    return this.root.querySelector(`#${id}`) as HTMLButtonElement;
  }

  private reasonSelect(): HTMLSelectElement {
    return this.root.querySelector("#reject-reason") as HTMLSelectElement;
  }

  render(state: SessionState): void {
    (this.root.querySelector("#reviewer-name") as HTMLElement).textContent = state.reviewer;
    const c = state.counters;
    (this.root.querySelector("#progress") as HTMLElement).textContent =
      `approved ${c.approved} · edited ${c.edited} · rejected ${c.rejected}`;

    this.renderBanner(state);
    this.renderContent(state);

    const reviewing = state.phase === "reviewing";
    this.button("btn-approve").disabled = !this.session.canApprove();
    this.button("btn-edit").disabled = !this.session.canEdit();
    this.button("btn-reject").disabled = !this.session.canReject();
    this.button("btn-next").disabled = state.phase === "loading";
    this.reasonSelect().disabled = !reviewing;
  }

  private renderBanner(state: SessionState): void {
    const banner = this.root.querySelector("#banner") as HTMLElement;
    if (state.phase === "conflict" && state.conflictItem) {
      banner.innerHTML = `
        <div class="banner conflict" id="conflict-banner">
          someone else changed this item (now ${state.conflictItem.status},
          version ${state.conflictItem.version}) — your edit buffer is preserved.
          <button id="btn-reload">reload item</button>
        </div>`;
      (banner.querySelector("#btn-reload") as HTMLButtonElement)
        .addEventListener("click", () => void this.session.reloadAfterConflict());
      return;
    }
    if (state.phase === "error" && state.error) {
      banner.innerHTML = `
        <div class="banner error" id="error-banner">
          request failed: ${escapeHtml(state.error)} — nothing was lost.
          <button id="btn-retry">retry</button>
        </div>`;
      (banner.querySelector("#btn-retry") as HTMLButtonElement)
        .addEventListener("click", () => void this.session.retry());
      return;
    }
    banner.innerHTML = "";
  }

  private renderContent(state: SessionState): void {
    const content = this.root.querySelector("#content") as HTMLElement;
    if (state.phase === "empty") {
      const s = state.summary;
      content.innerHTML = `
        <div class="empty" id="queue-empty">
          <h2>queue empty — all done</h2>
          ${s ? `<p>${s.total} items: ${s.by_status.approved} approved,
                 ${s.by_status.edited} edited, ${s.by_status.rejected} rejected,
                 ${s.by_status.pending} pending.</p>` : ""}
        </div>`;
      return;
    }
    if (state.phase === "loading" || state.phase === "idle") {
      content.innerHTML = `<p class="muted">loading…</p>`;
      return;
    }
    const item = state.phase === "conflict" || state.phase === "error"
      ? state.item
      : state.item;
    if (!item) {
      content.innerHTML = "";
      return;
    }

    const flag = item.pre_flag.kind;
    const badge = flag === "clean"
      ? ""
      : `<span class="badge ${flag}" id="pre-flag-badge">${flag}</span>`;
    const indices = strideSample(item.frame_refs.length, FRAME_STRIP_CAP);
    const thumbs = indices
      .map((k) => `
        <figure class="thumb">
          <img src="${this.api.frameUrl(item.id, k)}" alt="frame ${k}" loading="lazy">
          <figcaption>${frameLabel(item.frame_timestamps[k] ?? k)}</figcaption>
        </figure>`)
      .join("");

    content.innerHTML = `
      <section class="meta">
        <h2>${escapeHtml(item.video_id)}</h2>
        <span class="muted">${item.duration_s}s · ${item.frame_refs.length} frames
          · version ${item.version}</span>
        ${badge}
      </section>
      <section class="strip" id="frame-strip">${thumbs}</section>
      <section class="editor">
        <textarea id="caption-editor" rows="14" spellcheck="false"></textarea>
      </section>
    `;
    const editor = content.querySelector("#caption-editor") as HTMLTextAreaElement;
    editor.value = state.buffer;
    editor.addEventListener("input", () => this.session.setBuffer(editor.value));
  }
}

function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}
