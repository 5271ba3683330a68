/**
 * Browser bootstrap: query-string wiring plus a small DOM renderer over
 * the pure view models. One comment on screen at a time; keyboard
 * shortcuts mirror the on-screen hints.
 */

import { HttpServiceApi } from "./api.js";
import { keyAction, renderScreen, Screen, View } from "./render.js";
import { Strategy } from "./types.js";
import { Wizard } from "./wizard.js";

function el(tag: string, attrs: Record<string, string> = {}, text?: string): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderView(view: View, wizard: Wizard, root: HTMLElement): void {
  switch (view.kind) {
    case "done":
      root.appendChild(el("h2", {}, view.title));
      return;
    case "error":
      root.appendChild(el("p", { class: "error" }, `${view.title}: ${view.detail}`));
      return;
    case "radio": {
      root.appendChild(el("h2", {}, view.title));
      for (const option of view.options) {
        const button = el("button", { class: "option" }, `${option.shortcut}. ${option.label}`);
        button.addEventListener("click", () => void wizard.answer(option.value as never));
        root.appendChild(button);
      }
      break;
    }
    case "yesno": {
      root.appendChild(el("h2", {}, view.title));
      for (const [label, value] of [["Yes (y)", true], ["No (n)", false]] as const) {
        const button = el("button", { class: "option" }, label);
        button.addEventListener("click", () => void wizard.answer(value));
        root.appendChild(button);
      }
      break;
    }
    case "text": {
      root.appendChild(el("h2", {}, view.title));
      const input = el("input", {
        type: "text",
        list: "group-suggestions",
        autocomplete: "off",
      }) as HTMLInputElement;
      const datalist = el("datalist", { id: "group-suggestions" });
      for (const name of view.suggestions) {
        datalist.appendChild(el("option", { value: name }));
      }
      const submit = el("button", {}, "Continue");
      submit.addEventListener("click", () => void wizard.answer(input.value));
      input.addEventListener("keydown", (event) => {
        if ((event as KeyboardEvent).key === "Enter") void wizard.answer(input.value);
        event.stopPropagation();
      });
      root.append(input, datalist, submit);
      input.focus();
      break;
    }
    case "multiselect": {
      root.appendChild(el("h2", {}, view.title));
      for (const option of view.options) {
        const selected = view.selected.includes(option.value as Strategy);
        const button = el(
          "button",
          { class: selected ? "option selected" : "option" },
          `${option.shortcut}. ${option.label}${selected ? " ✓" : ""}`,
        );
        button.addEventListener("click", () => {
          wizard.toggleStrategy(option.value as Strategy);
          rerender();
        });
        root.appendChild(button);
      }
      const confirm = el("button", { class: "confirm" }, "Continue (Enter)");
      confirm.addEventListener("click", () => void wizard.confirmStrategies());
      root.appendChild(confirm);
      break;
    }
  }
  if ("canGoBack" in view && view.canGoBack) {
    const backButton = el("button", { class: "back" }, "Back (Backspace)");
    backButton.addEventListener("click", () => {
      wizard.back();
      rerender();
    });
    root.appendChild(backButton);
  }
}

function renderDom(screen: Screen, wizard: Wizard): void {
  const root = document.getElementById("app")!;
  root.textContent = "";
  root.appendChild(el("div", { class: "progress" }, screen.progress));
  if (screen.pendingSync) {
    const note = el("div", { class: "pending" }, "Saving... answers queued, will retry");
    root.appendChild(note);
  }
  for (const violation of screen.violations) {
    root.appendChild(el("div", { class: "violation" }, violation));
  }
  if (screen.commentText !== null) {
    root.appendChild(el("blockquote", { class: "comment" }, screen.commentText));
  }
  const viewRoot = el("div", { class: "question" });
  renderView(screen.view, wizard, viewRoot);
  root.appendChild(viewRoot);
}

let rerender: () => void = () => undefined;

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const server = params.get("server") ?? "http://127.0.0.1:8000";
  const experiment = params.get("experiment") ?? "";
  const annotator = params.get("annotator") ?? "";
  if (!experiment || !annotator) {
    document.getElementById("app")!.textContent =
      "Missing ?experiment=...&annotator=... in the URL.";
    return;
  }
  const wizard = new Wizard(new HttpServiceApi(server, experiment, annotator));
  rerender = () => renderDom(renderScreen(wizard.state), wizard);

  const refreshAfter = (work: Promise<unknown>) => {
    rerender(); // paint the optimistic advance immediately
    return work.catch(() => undefined).then(() => rerender());
  };

  document.addEventListener("keydown", (event) => {
    const action = keyAction(renderScreen(wizard.state).view, event.key);
    if (!action) return;
    event.preventDefault();
    if (action.type === "answer") refreshAfter(wizard.answer(action.value));
    else if (action.type === "toggle") {
      wizard.toggleStrategy(action.value);
      rerender();
    } else if (action.type === "confirm") refreshAfter(wizard.confirmStrategies());
    else if (action.type === "back") {
      wizard.back();
      rerender();
    }
  });

  window.setInterval(() => {
    if (wizard.state.pendingQueue.length > 0) refreshAfter(wizard.retryPending());
  }, 4000);

  await refreshAfter(wizard.start());
}

void boot();
