/**
 * Wizard state machine.
 *
 * The client advances optimistically through its local routing mirror and
 * keeps the server's scratch partial in lockstep by submitting every
 * answer as it happens. The server stays authoritative: a rejection rolls
 * local state back to the server's answered prefix and surfaces the
 * violations; a transport failure leaves the unsent answers in a queue
 * that is retried on the next action (nothing is ever dropped silently).
 *
 * Within an item the annotator may step back and edit earlier answers
 * before the final submit; an edit replays the item's answers from Q1
 * (the service restarts its scratch partial on a fresh Q1). Once an item
 * completes there is no way back into it: items are independent.
 */

import { ServiceApi, SubmissionRejected } from "./api.js";
import {
  answeredQuestions,
  applyAnswer,
  nextQuestion,
} from "./routing.js";
import {
  Answer,
  AnsweredPrefix,
  emptyPrefix,
  QuestionId,
  Strategy,
  Violation,
} from "./types.js";

interface HistoryEntry {
  question: string;
  answer: Answer;
}

export interface WizardState {
  arm: "binary" | "multilevel";
  done: boolean;
  commentId: string | null;
  text: string | null;
  instruction: string | null;
  question: string | null;
  progress: { completed: number; total: number };
  registryNames: string[];
  draftStrategies: Strategy[];
  pendingQueue: HistoryEntry[];
  lastViolations: Violation[];
  /** answered questions on the open item; > 0 enables back */
  cursorIndex: number;
}

function extractAnswer(prefix: AnsweredPrefix, question: QuestionId): Answer {
  switch (question) {
    case "Q1_Attitude":
      return prefix.attitude!;
    case "Q2_Target":
      return prefix.target!.kind;
    case "Q2a_Affiliation":
      return prefix.target!.via_group_affiliation!;
    case "Q2x_NameGroup":
      return prefix.group_name!;
    case "Q3_Strategies":
      return [...prefix.strategies];
    case "Q3a_Violence":
      return prefix.violence_call!;
    default:
      throw new Error(`no answer stored for ${question}`);
  }
}

export class Wizard {
  state: WizardState;
  private history: HistoryEntry[] = [];
  private syncedCount = 0;
  private chain: Promise<void> = Promise.resolve();

  constructor(private readonly api: ServiceApi) {
    this.state = {
      arm: "multilevel",
      done: false,
      commentId: null,
      text: null,
      instruction: null,
      question: null,
      progress: { completed: 0, total: 0 },
      registryNames: [],
      draftStrategies: [],
      pendingQueue: [],
      lastViolations: [],
      cursorIndex: 0,
    };
  }

  /** Local optimistic prefix, rebuilt from the item's answer history. */
  localPrefix(): AnsweredPrefix {
    let prefix = emptyPrefix();
    for (const entry of this.history) {
      prefix = applyAnswer(prefix, entry.question as QuestionId, entry.answer);
    }
    return prefix;
  }

  async start(): Promise<void> {
    this.state.registryNames = await this.api.registryNames();
    await this.refreshFromServer();
  }

  /** Pull the authoritative state: current item, question, answered prefix. */
  async refreshFromServer(): Promise<void> {
    const task = await this.api.nextTask();
    this.state.arm = task.arm;
    this.state.progress = task.progress;
    this.state.draftStrategies = [];
    if (task.done) {
      this.state.done = true;
      this.state.commentId = null;
      this.state.text = null;
      this.state.question = null;
      this.history = [];
      this.syncedCount = 0;
      this.updateDerived();
      return;
    }
    this.state.done = false;
    this.state.commentId = task.comment_id ?? null;
    this.state.text = task.text ?? null;
    this.state.instruction = task.instruction ?? null;
    this.state.question = task.question ?? null;
    this.history = [];
    if (task.arm === "multilevel" && task.answered) {
      const prefix = task.answered;
      for (const question of answeredQuestions(prefix)) {
        this.history.push({ question, answer: extractAnswer(prefix, question) });
      }
    }
    this.syncedCount = this.history.length;
    this.updateDerived();
  }

  private updateDerived(): void {
    this.state.cursorIndex = this.history.length;
    this.state.pendingQueue = this.history.slice(this.syncedCount);
  }

  toggleStrategy(strategy: Strategy): void {
    const selected = this.state.draftStrategies;
    this.state.draftStrategies = selected.includes(strategy)
      ? selected.filter((s) => s !== strategy)
      : [...selected, strategy];
  }

  confirmStrategies(): Promise<void> {
    return this.answer([...this.state.draftStrategies]);
  }

  /**
   * Answer the currently displayed question: advance locally right away,
   * then bring the server into step (serialized with any queued answers).
   */
  answer(value: Answer): Promise<void> {
    if (this.state.done || this.state.question === null) {
      return Promise.reject(new Error("no open question"));
    }
    const question = this.state.question;
    if (question !== "BinaryLabel") {
      // Validate shape + order against the local mirror before advancing.
      const advanced = applyAnswer(this.localPrefix(), question as QuestionId, value);
      this.history.push({ question, answer: value });
      this.state.question = nextQuestion(advanced);
      this.state.draftStrategies = [];
    } else {
      this.history.push({ question, answer: value });
      this.state.question = null; // single-question item; completion pending
    }
    this.state.lastViolations = [];
    this.updateDerived();
    return this.enqueueSync();
  }

  /**
   * Step back to the previous question of the open item. Local only;
   * the server learns about the rewind when the edited answers replay.
   */
  back(): void {
    if (this.state.arm !== "multilevel" || this.history.length === 0) return;
    const removed = this.history.pop()!;
    if (this.syncedCount > this.history.length) {
      this.syncedCount = -1; // server is ahead: replay from Q1 on next sync
    }
    this.state.question = removed.question;
    this.state.draftStrategies =
      removed.question === "Q3_Strategies" ? (removed.answer as Strategy[]) : [];
    this.state.lastViolations = [];
    this.updateDerived();
  }

  /** Retry any answers the server has not acknowledged yet. */
  retryPending(): Promise<void> {
    return this.enqueueSync();
  }

  private enqueueSync(): Promise<void> {
    this.chain = this.chain.then(() => this.sync());
    return this.chain;
  }

  private async sync(): Promise<void> {
    if (this.state.commentId === null) return;
    const commentId = this.state.commentId;
    const replayAll = this.syncedCount < 0;
    let index = replayAll ? 0 : this.syncedCount;
    if (replayAll) this.syncedCount = 0;
    while (index < this.history.length) {
      const entry = this.history[index]!;
      let response;
      try {
        response = await this.api.submit(commentId, entry.question, entry.answer);
      } catch (error) {
        if (error instanceof SubmissionRejected) {
          // The server refused: roll back to its authoritative prefix.
          this.state.lastViolations = error.violations.length
            ? error.violations
            : [{ field: "request", message: error.message }];
          const violations = this.state.lastViolations;
          await this.refreshFromServer();
          this.state.lastViolations = violations;
          return;
        }
        // Transport failure: keep everything queued for retry.
        this.syncedCount = Math.min(this.syncedCount < 0 ? index : this.syncedCount, index);
        this.updateDerived();
        return;
      }
      index += 1;
      this.syncedCount = index;
      if (response.item_complete) {
        await this.refreshFromServer();
        return;
      }
    }
    this.updateDerived();
  }
}
