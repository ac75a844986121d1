/**
 * Eight-step happy path driven through the DOM against the real service
 * (spawned by the global setup with the deterministic mock LVM), plus the
 * invalidation and connectivity-failure behaviors.
 */

import { afterEach, beforeEach, describe, expect, inject, it, vi } from "vitest";

import { ApiClient } from "../src/api";
import { WizardApp } from "../src/ui";

// 8x8 RGB PNG with a bright left half (base64, generated offline)
const PNG_B64 =
  "iVBORw0KGgoAAAANSUhEUgAAAAgAAAAICAIAAABLbSncAAAALElEQVR4nGNsaGxigYGS4i" +
  "IGGGAREBCASzAgAQISrFglBMkxCmoYqoQgdh0AKfIFbr2MX00AAAAASUVORK5CYII=";

function testPng(): Uint8Array {
  const binary = atob(PNG_B64);
  const bytes = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) {
    bytes[i] = binary.charCodeAt(i);
  }
  return bytes;
}

function serviceUrl(): string {
  return inject("serviceUrl" as never) as unknown as string;
}

function select(app: WizardApp, id: string, value: string, root: HTMLElement) {
  const node = root.querySelector(`#${id}`) as HTMLSelectElement;
  node.value = value;
  node.dispatchEvent(new Event("change"));
}

describe("wizard", () => {
  let root: HTMLElement;

  beforeEach(() => {
    document.body.innerHTML = '<div id="app"></div>';
    root = document.getElementById("app")!;
  });

  afterEach(() => {
    vi.restoreAllMocks();
  });

  it("completes the eight-step happy path against the mock-LVM service",
     async () => {
    const app = new WizardApp(root, new ApiClient(serviceUrl()));

    // 1. upload
    const file = new File([testPng()], "img.png", { type: "image/png" });
    await app.onUpload(file);
    expect(app.store.get().imageId).toBeTruthy();
    expect(root.querySelector("#upload-status")!.textContent)
      .toContain("uploaded 8x8");

    // 2. task
    (root.querySelector("#task-select") as HTMLSelectElement).value =
      "classification";
    await app.onTask();
    expect(app.store.get().task).toBe("classification");
    const modelOptions = [...root.querySelectorAll("#model-select option")]
      .map((o) => (o as HTMLOptionElement).value).filter(Boolean);
    expect(modelOptions).toContain("toy_region_scorer");

    // 3. model (selections only from the server-provided list)
    select(app, "model-select", "toy_region_scorer", root);
    expect(app.store.get().modelId).toBe("toy_region_scorer");

    // 4. predict: top-1 and alternatives rendered
    await app.onPredict();
    const predictionText = root.querySelector("#prediction-panel")!
      .textContent!;
    expect(predictionText).toContain("left");
    expect(predictionText).toContain("%");

    // 5. method + target
    select(app, "method-select", "rise", root);
    select(app, "target-select", "class:0", root);
    expect(app.store.get().methodId).toBe("rise");
    expect(app.store.get().target).toEqual({ classId: 0 });

    // 6. saliency overlay; slider changes trigger no new requests
    await app.onSaliency();
    const saliency = app.store.get().saliency!;
    expect(saliency.width).toBe(8);
    expect(Math.min(...saliency.values)).toBeGreaterThanOrEqual(0);
    expect(Math.max(...saliency.values)).toBeLessThanOrEqual(1);
    const overlayImg = root.querySelector("#overlay-img") as HTMLImageElement;
    expect(overlayImg.hidden).toBe(false);
    expect(overlayImg.src).toContain("/api/v1/blobs/");

    const fetchSpy = vi.spyOn(globalThis, "fetch");
    const slider = root.querySelector("#alpha-slider") as HTMLInputElement;
    slider.value = "0.8";
    slider.dispatchEvent(new Event("input"));
    expect(app.store.get().overlayAlpha).toBe(0.8);
    expect(fetchSpy).not.toHaveBeenCalled();
    fetchSpy.mockRestore();

    // 7. explain via the mock LVM
    (root.querySelector("#gt-input") as HTMLInputElement).value = "left";
    await app.onExplain();
    const explanation = root.querySelector("#explanation-panel")!
      .textContent!;
    expect(explanation).toContain("Model predicted left");
    expect(explanation).toContain("verdict: match");

    // 8. evaluate against a pasted reference
    (root.querySelector("#reference-input") as HTMLTextAreaElement).value =
      "Model predicted left; the left half is salient; verdict match";
    await app.onEvaluate();
    const scores = app.store.get().scores!;
    expect(scores.rouge_l_precision).toBeGreaterThan(0);
    expect(scores.bertscore_precision).toBeGreaterThan(0);
    expect(root.querySelector("#scores-panel table")).not.toBeNull();
  });

  it("clears downstream panels when an upstream selection changes",
     async () => {
    const app = new WizardApp(root, new ApiClient(serviceUrl()));
    const file = new File([testPng()], "img.png", { type: "image/png" });
    await app.onUpload(file);
    (root.querySelector("#task-select") as HTMLSelectElement).value =
      "classification";
    await app.onTask();
    select(app, "model-select", "toy_region_scorer", root);
    await app.onPredict();
    select(app, "method-select", "rise", root);
    select(app, "target-select", "class:0", root);
    await app.onSaliency();
    (root.querySelector("#gt-input") as HTMLInputElement).value = "left";
    await app.onExplain();
    expect(root.querySelector("#explanation-panel")!.textContent)
      .toContain("Model predicted");

    // changing the method invalidates saliency, explanation, and scores
    select(app, "method-select", "grad_cam_pp", root);
    const state = app.store.get();
    expect(state.saliency).toBeNull();
    expect(state.explanation).toBeNull();
    expect(state.scores).toBeNull();
    expect(root.querySelector("#explanation-panel")!.textContent).toBe("");
    expect(root.querySelector("#scores-panel")!.textContent).toBe("");
    expect((root.querySelector("#overlay-img") as HTMLImageElement).hidden)
      .toBe(true);
  });

  it("shows a connectivity error without crashing when the server is down",
     async () => {
    const app = new WizardApp(root, new ApiClient("http://127.0.0.1:9"));
    const file = new File([testPng()], "img.png", { type: "image/png" });
    await app.onUpload(file);
    const state = app.store.get();
    expect(state.imageId).toBeNull();
    expect(state.lastError?.code).toBe("connection_failed");
    const panel = root.querySelector("#error-panel") as HTMLDivElement;
    expect(panel.hidden).toBe(false);
    expect(panel.textContent).toContain("connection_failed");
  });

  it("renders API errors with their code and stage", async () => {
    const app = new WizardApp(root, new ApiClient(serviceUrl()));
    const file = new File([testPng()], "img.png", { type: "image/png" });
    await app.onUpload(file);
    (root.querySelector("#task-select") as HTMLSelectElement).value =
      "classification";
    await app.onTask();
    select(app, "model-select", "toy_region_scorer", root);
    await app.onPredict();
    // grad_cam on a gradient-free model fails server-side at the saliency
    // stage; the UI surfaces code and stage and stays alive
    select(app, "method-select", "grad_cam", root);
    select(app, "target-select", "class:0", root);
    await app.onSaliency();
    const state = app.store.get();
    expect(state.lastError?.code).toBe("gradients_unsupported");
    expect(root.querySelector("#error-panel")!.textContent)
      .toContain("gradients_unsupported");
  });
});
