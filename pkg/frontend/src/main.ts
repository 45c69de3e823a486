/** Bootstrap: reviewer identity is a free-text name kept in localStorage. */

import { CurationApi } from "./api.js";
import { ReviewSession } from "./session.js";
import { ReviewView } from "./view.js";

const NAME_KEY = "capweave.reviewer";

function start(root: HTMLElement, reviewer: string): void {
  localStorage.setItem(NAME_KEY, reviewer);
  const api = new CurationApi("");
  const session = new ReviewSession(api, reviewer);
  new ReviewView(root, session, api).mount();
  void session.loadNext();
}

function promptForName(root: HTMLElement): void {
  root.innerHTML = `
    <div class="login">
      <h2>caption review</h2>
      <label>your name
        <input id="reviewer-input" autocomplete="off" placeholder="reviewer name">
      </label>
      <button id="reviewer-go">start reviewing</button>
    </div>`;
  const input = root.querySelector("#reviewer-input") as HTMLInputElement;
  const go = root.querySelector("#reviewer-go") as HTMLButtonElement;
  const submit = () => {
    const name = input.value.trim();
    if (name) start(root, name);
  };
  go.addEventListener("click", submit);
  input.addEventListener("keydown", (e) => {
    if (e.key === "Enter") submit();
  });
  input.focus();
}

export function boot(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app root");
  const saved = localStorage.getItem(NAME_KEY);
  if (saved) {
    start(root, saved);
  } else {
    promptForName(root);
  }
}

boot();
