/**
 * Client-side mirror of the service's conditional question routing.
 *
 * Used for optimistic advance and for the wizard's screen graph; the
 * server re-validates every submission, so divergence here can never
 * persist a bad record (the contract tests replay hostile sequences to
 * prove that).
 */

import {
  Answer,
  AnsweredPrefix,
  ATTITUDES,
  Attitude,
  emptyPrefix,
  QuestionId,
  STRATEGIES,
  Strategy,
  TARGET_KINDS,
  TargetKind,
} from "./types.js";

export function nextQuestion(prefix: AnsweredPrefix): QuestionId {
  if (prefix.attitude === null) return "Q1_Attitude";
  if (prefix.attitude !== "Negative") return "Complete";
  if (prefix.target === null) return "Q2_Target";
  if (prefix.target.kind === "Individual" && prefix.target.via_group_affiliation === null) {
    return "Q2a_Affiliation";
  }
  const groupGateOpen =
    prefix.target.kind === "Group" || prefix.target.via_group_affiliation === true;
  if (!groupGateOpen) return "Complete";
  if (prefix.group_name === null) return "Q2x_NameGroup";
  if (prefix.strategies.length === 0) return "Q3_Strategies";
  if (prefix.strategies.includes("Suggestion") && prefix.violence_call === null) {
    return "Q3a_Violence";
  }
  return "Complete";
}

function isAttitude(value: unknown): value is Attitude {
  return ATTITUDES.includes(value as Attitude);
}

function isTargetKind(value: unknown): value is TargetKind {
  return TARGET_KINDS.includes(value as TargetKind);
}

function isStrategyList(value: unknown): value is Strategy[] {
  return (
    Array.isArray(value) &&
    value.length > 0 &&
    value.every((s) => STRATEGIES.includes(s as Strategy))
  );
}

/**
 * Apply one answer to the question currently open on the prefix.
 * Throws on out-of-order questions or ill-shaped answers, mirroring the
 * server's routing and shape rules.
 */
export function applyAnswer(
  prefix: AnsweredPrefix,
  question: QuestionId,
  answer: Answer,
): AnsweredPrefix {
  const expected = nextQuestion(prefix);
  if (question !== expected) {
    throw new Error(`expected answer for ${expected}, got ${question}`);
  }
  const next: AnsweredPrefix = {
    ...prefix,
    strategies: [...prefix.strategies],
    target: prefix.target ? { ...prefix.target } : null,
  };
  switch (question) {
    case "Q1_Attitude":
      if (!isAttitude(answer)) throw new Error("Q1 expects Positive/Negative/Neutral");
      next.attitude = answer;
      return next;
    case "Q2_Target":
      if (!isTargetKind(answer)) throw new Error("Q2 expects Individual/Group");
      next.target = { kind: answer, via_group_affiliation: null };
      return next;
    case "Q2a_Affiliation":
      if (typeof answer !== "boolean") throw new Error("Q2a expects yes/no");
      next.target = { kind: "Individual", via_group_affiliation: answer };
      return next;
    case "Q2x_NameGroup": {
      if (typeof answer !== "string" || answer.trim() === "") {
        throw new Error("group name must be non-empty");
      }
      next.group_name = answer.trim();
      return next;
    }
    case "Q3_Strategies":
      if (!isStrategyList(answer)) throw new Error("select at least one strategy");
      next.strategies = [...answer];
      return next;
    case "Q3a_Violence":
      if (typeof answer !== "boolean") throw new Error("Q3a expects yes/no");
      next.violence_call = answer;
      return next;
    default:
      throw new Error("record is already complete");
  }
}

/** The ordered list of questions answered so far (the back path). */
export function answeredQuestions(prefix: AnsweredPrefix): QuestionId[] {
  const steps: QuestionId[] = [];
  if (prefix.attitude !== null) steps.push("Q1_Attitude");
  if (prefix.target !== null) steps.push("Q2_Target");
  if (prefix.target?.kind === "Individual" && prefix.target.via_group_affiliation !== null) {
    steps.push("Q2a_Affiliation");
  }
  if (prefix.group_name !== null) steps.push("Q2x_NameGroup");
  if (prefix.strategies.length > 0) steps.push("Q3_Strategies");
  if (prefix.violence_call !== null) steps.push("Q3a_Violence");
  return steps;
}

/** Representative answers per question, one per distinct routing outcome. */
const ANSWER_CLASSES: Record<Exclude<QuestionId, "Complete">, Answer[]> = {
  Q1_Attitude: ["Positive", "Negative", "Neutral"],
  Q2_Target: ["Individual", "Group"],
  Q2a_Affiliation: [true, false],
  Q2x_NameGroup: ["some group"],
  Q3_Strategies: [["Insult"], ["Suggestion"], ["Suggestion", "Threat"], ["Threat"]],
  Q3a_Violence: [true, false],
};

/**
 * Enumerate every reachable screen and transition by walking all answer
 * classes from the empty prefix. Nodes are question ids plus Complete.
 */
export function reachableScreenGraph(): { nodes: string[]; edges: [string, string][] } {
  const nodes = new Set<string>();
  const edges = new Set<string>();
  const queue: AnsweredPrefix[] = [emptyPrefix()];
  const seen = new Set<string>();
  while (queue.length > 0) {
    const prefix = queue.pop()!;
    const key = JSON.stringify(prefix);
    if (seen.has(key)) continue;
    seen.add(key);
    const question = nextQuestion(prefix);
    nodes.add(question);
    if (question === "Complete") continue;
    for (const answer of ANSWER_CLASSES[question]) {
      const advanced = applyAnswer(prefix, question, answer);
      edges.add(`${question}->${nextQuestion(advanced)}`);
      queue.push(advanced);
    }
  }
  return {
    nodes: [...nodes].sort(),
    edges: [...edges].sort().map((e) => e.split("->") as [string, string]),
  };
}
