/** DOM layer: neutral dark-gray surround, the stimulus at native resolution
 * with integer upscaling only, five category buttons, digit shortcuts, and a
 * progress bar. Nothing about other subjects or aggregate scores is ever
 * rendered. */

import { SCORE_LABELS, SessionController, ViewState, scoreForKey } from "./session.js";

const INSTRUCTIONS =
  "Rate the overall quality of each face image on the five-category scale: " +
  SCORE_LABELS.map((e) => `${e.label} (${e.score})`).join(", ") +
  ". The first few images are practice items.";

export function mountRatingApp(root: HTMLElement, controller: SessionController): void {
  root.innerHTML = "";
  root.style.background = "#3a3a3a";
  root.style.color = "#eee";
  root.style.fontFamily = "system-ui, sans-serif";
  root.style.minHeight = "100vh";
  root.style.display = "flex";
  root.style.flexDirection = "column";
  root.style.alignItems = "center";
  root.style.padding = "24px";

  const overlay = document.createElement("p");
  overlay.textContent = INSTRUCTIONS;
  overlay.style.maxWidth = "640px";

  const progress = document.createElement("progress");
  progress.max = 1;
  progress.value = 0;
  progress.style.width = "320px";

  const status = document.createElement("div");
  status.style.minHeight = "1.5em";
  status.style.margin = "8px";

  const image = document.createElement("img");
  image.alt = "test image";
  image.style.imageRendering = "pixelated";
  image.style.margin = "16px";
  image.decoding = "sync";

  const buttons = document.createElement("div");
  const buttonByScore = new Map<number, HTMLButtonElement>();
  for (const { score, label } of SCORE_LABELS) {
    const button = document.createElement("button");
    button.textContent = `${label} (${score})`;
    button.style.margin = "4px";
    button.style.padding = "10px 16px";
    button.style.fontSize = "1rem";
    button.addEventListener("click", () => {
      void submit(score);
    });
    buttonByScore.set(score, button);
    buttons.appendChild(button);
  }

  const retry = document.createElement("button");
  retry.textContent = "Reconnect and resend";
  retry.style.display = "none";
  retry.addEventListener("click", () => {
    void controller.replay();
  });

  root.append(overlay, image, buttons, progress, status, retry);

  async function submit(score: number): Promise<void> {
    setButtonsEnabled(false);
    try {
      await controller.rate(score);
    } finally {
      setButtonsEnabled(true);
    }
  }

  function setButtonsEnabled(enabled: boolean): void {
    for (const button of buttonByScore.values()) button.disabled = !enabled;
  }

  document.addEventListener("keydown", (event) => {
    const score = scoreForKey(event.key);
    if (score !== null && !event.repeat) {
      void submit(score);
    }
  });

  controller.preload = (url) =>
    new Promise<void>((resolve) => {
      const img = new Image();
      img.onload = () => resolve();
      img.onerror = () => resolve();
      img.src = url;
    });

  controller.onChange((state) => render(state));
  render(controller.getState());

  function render(state: ViewState): void {
    status.textContent = state.message ?? "";
    retry.style.display = state.phase === "offline" ? "inline-block" : "none";
    switch (state.phase) {
      case "loading":
        status.textContent = "loading session...";
        break;
      case "practice":
      case "main": {
        image.src = state.imageUrl ?? "";
        image.style.display = "block";
        const k = Math.max(1, Math.floor(512 / 256)); // integer upscale only
        image.style.width = `${256 * k}px`;
        overlay.style.display = state.practice ? "block" : "none";
        const label = state.practice ? "practice" : "image";
        status.textContent =
          state.message ?? `${label} ${state.index + 1} of ${state.total}`;
        progress.value = state.total > 0 ? state.index / state.total : 0;
        break;
      }
      case "done":
        image.style.display = "none";
        buttons.style.display = "none";
        overlay.style.display = "none";
        progress.value = 1;
        status.textContent =
          `Session complete: ${state.ratedMain} of ${state.totalMain} ` +
          "images rated. Thank you.";
        break;
      case "offline":
        status.textContent = `${state.message} (${state.pending} rating(s) queued)`;
        break;
      case "error":
        status.textContent = `error: ${state.message}`;
        break;
    }
  }
}
