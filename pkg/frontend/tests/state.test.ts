import { describe, expect, it } from "vitest";

import type { PredictionInfo, SaliencyInfo } from "../src/api";
import { STAGES, SessionStore, initialState, stageReady } from "../src/state";
import type { Stage } from "../src/state";

const PREDICTION: PredictionInfo = {
  task: "classification",
  model_id: "m",
  class_probs: [0.8, 0.2],
};

const SALIENCY: SaliencyInfo = {
  height: 2, width: 2, values: [0, 0.5, 0.5, 1],
  method_id: "rise", mechanism: "perturbation",
};

function fill(store: SessionStore): void {
  store.setImage("img", { width: 8, height: 8 });
  store.setTask("classification");
  store.setModel("toy_region_scorer");
  store.setPrediction(PREDICTION);
  store.setMethod("rise", { classId: 0 });
  store.setSaliency(SALIENCY, "overlay");
  store.setExplanation({ recordId: 1, text: "t", verdict: "match" });
  store.setScores({ bleu: 0.1, meteor: 0.2, rouge_l_precision: 0.3,
                    bertscore_precision: 0.4 });
}

// which state fields belong to each stage, mirroring the store
const FIELDS: Record<Stage, (keyof ReturnType<SessionStore["get"]>)[]> = {
  upload: ["imageId", "imageMeta"],
  task: ["task"],
  model: ["modelId"],
  predict: ["prediction"],
  method: ["methodId", "target"],
  saliency: ["saliency", "overlayId"],
  explain: ["explanation"],
  evaluate: ["scores"],
};

const MUTATORS: Record<Stage, (store: SessionStore) => void> = {
  upload: (s) => s.setImage("img2", { width: 4, height: 4 }),
  task: (s) => s.setTask("detection"),
  model: (s) => s.setModel("toy_box_detector"),
  predict: (s) => s.setPrediction(PREDICTION),
  method: (s) => s.setMethod("grad_cam", { classId: 1 }),
  saliency: (s) => s.setSaliency(SALIENCY, "overlay2"),
  explain: (s) => s.setExplanation({ recordId: 2, text: "u",
                                     verdict: "mismatch" }),
  evaluate: (s) => s.setScores({ bleu: 0, meteor: 0, rouge_l_precision: 0,
                                 bertscore_precision: 0 }),
};

describe("downstream invalidation", () => {
  for (const stage of STAGES) {
    it(`mutating ${stage} clears everything downstream`, () => {
      const store = new SessionStore();
      fill(store);
      MUTATORS[stage](store);
      const state = store.get();
      const index = STAGES.indexOf(stage);
      for (const later of STAGES.slice(index + 1)) {
        for (const field of FIELDS[later]) {
          expect(state[field], `${String(field)} after ${stage}`).toBeNull();
        }
      }
      // upstream results survive
      for (const earlier of STAGES.slice(0, index)) {
        for (const field of FIELDS[earlier]) {
          expect(state[field], `${String(field)} before ${stage}`)
            .not.toBeNull();
        }
      }
    });
  }

  it("random mutation sequences keep the prefix/suffix property", () => {
    // deterministic linear-congruential sequence, no RNG dependency
    let seed = 12345;
    const next = () => {
      seed = (seed * 1103515245 + 12345) % 2147483648;
      return seed / 2147483648;
    };
    for (let trial = 0; trial < 200; trial++) {
      const store = new SessionStore();
      fill(store);
      const stage = STAGES[Math.floor(next() * STAGES.length)]!;
      MUTATORS[stage](store);
      const state = store.get();
      const index = STAGES.indexOf(stage);
      const downstreamClear = STAGES.slice(index + 1).every((later) =>
        FIELDS[later].every((field) => state[field] === null));
      expect(downstreamClear).toBe(true);
    }
  });
});

describe("in-flight flags", () => {
  it("block duplicate submission per stage", () => {
    const store = new SessionStore();
    expect(store.beginRequest("predict")).toBe(true);
    expect(store.beginRequest("predict")).toBe(false);
    expect(store.beginRequest("saliency")).toBe(true);
    store.endRequest("predict");
    expect(store.beginRequest("predict")).toBe(true);
  });
});

describe("stage readiness", () => {
  it("advances with results and regresses on invalidation", () => {
    const store = new SessionStore();
    expect(stageReady(store.get(), "task")).toBe(false);
    fill(store);
    expect(stageReady(store.get(), "evaluate")).toBe(true);
    store.setTask("segmentation");  // invalidates everything downstream
    expect(stageReady(store.get(), "predict")).toBe(false);
    expect(stageReady(store.get(), "evaluate")).toBe(false);
  });

  it("alpha changes touch nothing downstream", () => {
    const store = new SessionStore();
    fill(store);
    store.setOverlayAlpha(0.25);
    expect(store.get().explanation).not.toBeNull();
    expect(store.get().scores).not.toBeNull();
    expect(store.get().overlayAlpha).toBe(0.25);
  });
});

describe("initial state", () => {
  it("starts empty", () => {
    const state = initialState();
    expect(state.imageId).toBeNull();
    expect(state.scores).toBeNull();
    expect(state.overlayAlpha).toBe(0.5);
  });
});
