/**
 * Wizard session state with strict downstream invalidation: mutating the
 * selection at any step clears every result produced by later steps, and a
 * per-stage in-flight flag blocks duplicate submissions.
 */

import type {
  MetricAggregate,
  PredictionInfo,
  SaliencyInfo,
  TaskKind,
} from "./api.js";

export const STAGES = [
  "upload",
  "task",
  "model",
  "predict",
  "method",
  "saliency",
  "explain",
  "evaluate",
] as const;

export type Stage = (typeof STAGES)[number];

export interface TargetSelection {
  classId?: number;
  detectionIndex?: number;
}

export interface ExplanationView {
  recordId: number;
  text: string;
  verdict: "match" | "mismatch";
}

export interface SessionState {
  imageId: string | null;
  imageMeta: { width: number; height: number } | null;
  task: TaskKind | null;
  modelId: string | null;
  prediction: PredictionInfo | null;
  methodId: string | null;
  target: TargetSelection | null;
  saliency: SaliencyInfo | null;
  overlayId: string | null;
  overlayAlpha: number;
  explanation: ExplanationView | null;
  scores: MetricAggregate | null;
  inFlight: Partial<Record<Stage, boolean>>;
  lastError: { code: string; message: string; stage: string } | null;
}

export function initialState(): SessionState {
  return {
    imageId: null,
    imageMeta: null,
    task: null,
    modelId: null,
    prediction: null,
    methodId: null,
    target: null,
    saliency: null,
    overlayId: null,
    overlayAlpha: 0.5,
    explanation: null,
    scores: null,
    inFlight: {},
    lastError: null,
  };
}

type Listener = (state: SessionState) => void;

const STAGE_FIELDS: Record<Stage, (keyof SessionState)[]> = {
  upload: ["imageId", "imageMeta"],
  task: ["task"],
  model: ["modelId"],
  predict: ["prediction"],
  method: ["methodId", "target"],
  saliency: ["saliency", "overlayId"],
  explain: ["explanation"],
  evaluate: ["scores"],
};

export class SessionStore {
  private state: SessionState = initialState();
  private listeners: Listener[] = [];

  get(): SessionState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  /** Clear results of every stage strictly after `stage`. */
  private invalidateAfter(stage: Stage): void {
    const index = STAGES.indexOf(stage);
    const cleared: Partial<SessionState> = {};
    for (const later of STAGES.slice(index + 1)) {
      for (const field of STAGE_FIELDS[later]) {
        (cleared as Record<string, unknown>)[field] = null;
      }
    }
    this.state = { ...this.state, ...cleared };
  }

  /** Returns false (and does nothing) when the stage is already in flight. */
  beginRequest(stage: Stage): boolean {
    if (this.state.inFlight[stage]) {
      return false;
    }
    this.state = {
      ...this.state,
      inFlight: { ...this.state.inFlight, [stage]: true },
    };
    this.emit();
    return true;
  }

  endRequest(stage: Stage): void {
    this.state = {
      ...this.state,
      inFlight: { ...this.state.inFlight, [stage]: false },
    };
    this.emit();
  }

  setError(error: { code: string; message: string; stage: string } | null): void {
    this.state = { ...this.state, lastError: error };
    this.emit();
  }

  setImage(imageId: string, meta: { width: number; height: number }): void {
    this.state = { ...this.state, imageId, imageMeta: meta, lastError: null };
    this.invalidateAfter("upload");
    this.emit();
  }

  setTask(task: TaskKind): void {
    this.state = { ...this.state, task };
    this.invalidateAfter("task");
    this.emit();
  }

  setModel(modelId: string): void {
    this.state = { ...this.state, modelId };
    this.invalidateAfter("model");
    this.emit();
  }

  setPrediction(prediction: PredictionInfo): void {
    this.state = { ...this.state, prediction };
    this.invalidateAfter("predict");
    this.emit();
  }

  setMethod(methodId: string, target: TargetSelection | null): void {
    this.state = { ...this.state, methodId, target };
    this.invalidateAfter("method");
    this.emit();
  }

  setSaliency(saliency: SaliencyInfo, overlayId: string): void {
    this.state = { ...this.state, saliency, overlayId };
    this.invalidateAfter("saliency");
    this.emit();
  }

  /** Client-side only: never triggers a request or invalidation. */
  setOverlayAlpha(alpha: number): void {
    this.state = { ...this.state, overlayAlpha: alpha };
    this.emit();
  }

  setExplanation(view: ExplanationView): void {
    this.state = { ...this.state, explanation: view };
    this.invalidateAfter("explain");
    this.emit();
  }

  setScores(scores: MetricAggregate): void {
    this.state = { ...this.state, scores };
    this.emit();
  }
}

/** A stage is actionable once everything upstream has produced a result. */
export function stageReady(state: SessionState, stage: Stage): boolean {
  switch (stage) {
    case "upload":
      return true;
    case "task":
      return state.imageId !== null;
    case "model":
      return state.task !== null;
    case "predict":
      return state.modelId !== null;
    case "method":
      return state.prediction !== null;
    case "saliency":
      return state.methodId !== null;
    case "explain":
      return state.saliency !== null;
    case "evaluate":
      return state.explanation !== null;
  }
}
