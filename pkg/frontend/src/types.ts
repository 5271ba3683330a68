/**
 * Wire contract shared with the annotation service.
 *
 * Enum values are the exact strings the API and the store use; the server
 * is the authority, these types just keep the client honest.
 */

export type QuestionId =
  | "Q1_Attitude"
  | "Q2_Target"
  | "Q2a_Affiliation"
  | "Q2x_NameGroup"
  | "Q3_Strategies"
  | "Q3a_Violence"
  | "Complete";

export type BinaryQuestion = "BinaryLabel";

export const ATTITUDES = ["Positive", "Negative", "Neutral"] as const;
export type Attitude = (typeof ATTITUDES)[number];

export const TARGET_KINDS = ["Individual", "Group"] as const;
export type TargetKind = (typeof TARGET_KINDS)[number];

export const STRATEGIES = [
  "DerogatoryTerm",
  "Generalisation",
  "Insult",
  "Sarcasm",
  "Stereotyping",
  "Suggestion",
  "Threat",
] as const;
export type Strategy = (typeof STRATEGIES)[number];

export const BINARY_LABELS = ["HateSpeech", "NotHateSpeech"] as const;
export type BinaryLabel = (typeof BINARY_LABELS)[number];

export type Answer = Attitude | TargetKind | boolean | string | Strategy[] | BinaryLabel;

/** The answers given so far on the open item, as the server reports them. */
export interface AnsweredPrefix {
  attitude: Attitude | null;
  target: { kind: TargetKind; via_group_affiliation: boolean | null } | null;
  group_name: string | null;
  strategies: Strategy[];
  violence_call: boolean | null;
}

export function emptyPrefix(): AnsweredPrefix {
  return {
    attitude: null,
    target: null,
    group_name: null,
    strategies: [],
    violence_call: null,
  };
}

export interface Violation {
  field: string;
  message: string;
}

export interface NextTaskResponse {
  done: boolean;
  arm: "binary" | "multilevel";
  progress: { completed: number; total: number };
  comment_id?: string | null;
  text?: string | null;
  question?: string | null;
  instruction?: string | null;
  answered?: AnsweredPrefix | null;
}

export interface SubmitResponse {
  accepted: boolean;
  item_complete: boolean;
  next_question: string | null;
  violations?: Violation[];
}
