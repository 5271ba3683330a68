/**
 * Pure view models for each wizard screen.
 *
 * Rendering never includes the comment's author (showing it would bias
 * raters); the DOM layer materializes these descriptions verbatim, so
 * everything user-visible is testable without a browser.
 */

import {
  Answer,
  AnsweredPrefix,
  ATTITUDES,
  BINARY_LABELS,
  STRATEGIES,
  Strategy,
} from "./types.js";
import { WizardState } from "./wizard.js";

export interface Option {
  value: string;
  label: string;
  shortcut: string;
}

export type View =
  | {
      kind: "radio";
      question: string;
      title: string;
      options: Option[];
      canGoBack: boolean;
    }
  | {
      kind: "yesno";
      question: string;
      title: string;
      canGoBack: boolean;
    }
  | {
      kind: "text";
      question: string;
      title: string;
      suggestions: string[];
      canGoBack: boolean;
    }
  | {
      kind: "multiselect";
      question: string;
      title: string;
      options: Option[];
      selected: Strategy[];
      canGoBack: boolean;
    }
  | { kind: "done"; title: string }
  | { kind: "error"; title: string; detail: string };

export interface Screen {
  commentText: string | null;
  progress: string;
  pendingSync: boolean;
  violations: string[];
  view: View;
}

const STRATEGY_LABELS: Record<Strategy, string> = {
  DerogatoryTerm: "Derogatory term",
  Generalisation: "Generalisation",
  Insult: "Insult",
  Sarcasm: "Sarcasm (including jokes and trolling)",
  Stereotyping: "Stereotyping",
  Suggestion: "Suggestion",
  Threat: "Threat",
};

function numbered(values: readonly string[], labels?: Record<string, string>): Option[] {
  return values.map((value, index) => ({
    value,
    label: labels?.[value] ?? value,
    shortcut: String(index + 1),
  }));
}

export function renderQuestion(state: WizardState): View {
  if (state.done) {
    return { kind: "done", title: "All items annotated. Thank you!" };
  }
  if (state.question === null) {
    return { kind: "error", title: "Out of sync", detail: "refreshing from the service" };
  }
  const canGoBack = state.arm === "multilevel" && state.cursorIndex > 0;
  switch (state.question) {
    case "BinaryLabel":
      return {
        kind: "radio",
        question: "BinaryLabel",
        title: state.instruction ?? "Is this comment hate speech?",
        options: numbered(BINARY_LABELS, {
          HateSpeech: "Hate speech",
          NotHateSpeech: "Not hate speech",
        }),
        canGoBack: false,
      };
    case "Q1_Attitude":
      return {
        kind: "radio",
        question: "Q1_Attitude",
        title: "Does the post communicate a positive, negative or neutral attitude?",
        options: numbered(ATTITUDES),
        canGoBack,
      };
    case "Q2_Target":
      return {
        kind: "radio",
        question: "Q2_Target",
        title: "Who does this attitude target?",
        options: numbered(["Individual", "Group"]),
        canGoBack,
      };
    case "Q2a_Affiliation":
      return {
        kind: "yesno",
        question: "Q2a_Affiliation",
        title:
          "Does it target the individual because of their affiliation to a group?",
        canGoBack,
      };
    case "Q2x_NameGroup":
      return {
        kind: "text",
        question: "Q2x_NameGroup",
        title: "Name the group.",
        suggestions: state.registryNames,
        canGoBack,
      };
    case "Q3_Strategies":
      return {
        kind: "multiselect",
        question: "Q3_Strategies",
        title:
          "How is the attitude expressed in relation to the target group? Select all that apply.",
        options: numbered(STRATEGIES, STRATEGY_LABELS),
        selected: state.draftStrategies,
        canGoBack,
      };
    case "Q3a_Violence":
      return {
        kind: "yesno",
        question: "Q3a_Violence",
        title: "Is it a suggestion that calls for violence against the target group?",
        canGoBack,
      };
    default:
      return { kind: "error", title: "Unknown question", detail: String(state.question) };
  }
}

export function renderScreen(state: WizardState): Screen {
  return {
    commentText: state.done ? null : state.text,
    progress: `Item ${Math.min(state.progress.completed + 1, state.progress.total)} of ${
      state.progress.total
    }`,
    pendingSync: state.pendingQueue.length > 0,
    violations: state.lastViolations.map((v) => `${v.field}: ${v.message}`),
    view: renderQuestion(state),
  };
}

export type KeyAction =
  | { type: "answer"; value: Answer }
  | { type: "toggle"; value: Strategy }
  | { type: "confirm" }
  | { type: "back" }
  | null;

/**
 * Keyboard shortcuts: number keys pick radio options and toggle
 * multi-select entries, y/n answer the boolean questions, Enter confirms
 * a multi-select, Backspace steps back within the item.
 */
export function keyAction(view: View, key: string): KeyAction {
  if (key === "Backspace" && "canGoBack" in view && view.canGoBack) {
    return { type: "back" };
  }
  switch (view.kind) {
    case "radio": {
      const option = view.options.find((o) => o.shortcut === key);
      return option ? { type: "answer", value: option.value as Answer } : null;
    }
    case "yesno":
      if (key === "y") return { type: "answer", value: true };
      if (key === "n") return { type: "answer", value: false };
      return null;
    case "multiselect": {
      if (key === "Enter") return { type: "confirm" };
      const option = view.options.find((o) => o.shortcut === key);
      return option ? { type: "toggle", value: option.value as Strategy } : null;
    }
    default:
      return null;
  }
}
