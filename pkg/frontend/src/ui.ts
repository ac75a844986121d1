/**
 * Framework-free stepper UI. Every panel renders from SessionStore state;
 * all science lives server-side, the client only displays responses and
 * blends the overlay locally with the shared colormap formula.
 */

import { ApiClient, ApiError } from "./api.js";
import type { MethodInfo, ModelInfo, TaskKind } from "./api.js";
import { blendOverlay } from "./colormap.js";
import { SessionStore, stageReady } from "./state.js";

const TASKS: TaskKind[] = ["classification", "segmentation", "detection"];

function bytesToBase64(bytes: Uint8Array): string {
  let binary = "";
  for (let i = 0; i < bytes.length; i++) {
    binary += String.fromCharCode(bytes[i]!);
  }
  return btoa(binary);
}

function readFileBytes(file: File): Promise<Uint8Array> {
  if (typeof file.arrayBuffer === "function") {
    return file.arrayBuffer().then((buf) => new Uint8Array(buf));
  }
  return new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () =>
      resolve(new Uint8Array(reader.result as ArrayBuffer));
    reader.onerror = () => reject(reader.error);
    reader.readAsArrayBuffer(file);
  });
}

export class WizardApp {
  private models: ModelInfo[] = [];
  private methods: MethodInfo[] = [];
  private imagePixels: Uint8ClampedArray | null = null;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    readonly store: SessionStore = new SessionStore(),
  ) {
    this.renderSkeleton();
    this.store.subscribe(() => this.sync());
    this.sync();
  }

  private el<T extends HTMLElement>(id: string): T {
    const node = this.root.querySelector(`#${id}`);
    if (!node) {
      throw new Error(`missing element #${id}`);
    }
    return node as T;
  }

  private renderSkeleton(): void {
    this.root.innerHTML = `
      <div id="error-panel" class="error" hidden></div>
      <section id="step-upload" class="step">
        <h2>1. Upload</h2>
        <input type="file" id="upload-input" accept="image/png" />
        <span id="upload-status"></span>
      </section>
      <section id="step-task" class="step">
        <h2>2. Task</h2>
        <select id="task-select"><option value="">choose a task</option>
          ${TASKS.map((t) => `<option value="${t}">${t}</option>`).join("")}
        </select>
      </section>
      <section id="step-model" class="step">
        <h2>3. Model</h2>
        <select id="model-select"><option value="">choose a model</option></select>
      </section>
      <section id="step-predict" class="step">
        <h2>4. Predict</h2>
        <button id="predict-btn">run prediction</button>
        <div id="prediction-panel"></div>
      </section>
      <section id="step-method" class="step">
        <h2>5. Method and target</h2>
        <select id="method-select"><option value="">choose a method</option></select>
        <select id="target-select"></select>
      </section>
      <section id="step-saliency" class="step">
        <h2>6. Saliency</h2>
        <button id="saliency-btn">compute saliency</button>
        <div id="overlay-view">
          <img id="overlay-img" alt="" hidden />
          <canvas id="overlay-canvas" hidden></canvas>
          <label>opacity
            <input type="range" id="alpha-slider" min="0" max="1"
                   step="0.01" value="0.5" />
          </label>
        </div>
      </section>
      <section id="step-explain" class="step">
        <h2>7. Explain</h2>
        <label>ground truth <input type="text" id="gt-input" /></label>
        <button id="explain-btn">ask the model to explain</button>
        <div id="explanation-panel"></div>
      </section>
      <section id="step-evaluate" class="step">
        <h2>8. Evaluate</h2>
        <textarea id="reference-input"
                  placeholder="paste an expert reference text"></textarea>
        <button id="evaluate-btn">score explanation</button>
        <div id="scores-panel"></div>
      </section>
    `;

    this.el<HTMLInputElement>("upload-input").addEventListener("change",
      () => void this.onUpload());
    this.el<HTMLSelectElement>("task-select").addEventListener("change",
      () => void this.onTask());
    this.el<HTMLSelectElement>("model-select").addEventListener("change",
      () => this.onModel());
    this.el<HTMLButtonElement>("predict-btn").addEventListener("click",
      () => void this.onPredict());
    this.el<HTMLSelectElement>("method-select").addEventListener("change",
      () => this.onMethodOrTarget());
    this.el<HTMLSelectElement>("target-select").addEventListener("change",
      () => this.onMethodOrTarget());
    this.el<HTMLButtonElement>("saliency-btn").addEventListener("click",
      () => void this.onSaliency());
    this.el<HTMLButtonElement>("explain-btn").addEventListener("click",
      () => void this.onExplain());
    this.el<HTMLButtonElement>("evaluate-btn").addEventListener("click",
      () => void this.onEvaluate());
    this.el<HTMLInputElement>("alpha-slider").addEventListener("input",
      (event) => {
        const alpha = Number((event.target as HTMLInputElement).value);
        this.store.setOverlayAlpha(alpha);
        this.paintOverlay();
      });
  }

  private showError(err: unknown): void {
    if (err instanceof ApiError) {
      this.store.setError({ code: err.code, message: err.message,
                            stage: err.stage });
    } else {
      this.store.setError({ code: "client_error", message: String(err),
                            stage: "ui" });
    }
  }

  async onUpload(fileOverride?: File): Promise<void> {
    const input = this.el<HTMLInputElement>("upload-input");
    const file = fileOverride ?? input.files?.[0];
    if (!file || !this.store.beginRequest("upload")) {
      return;
    }
    try {
      const bytes = await readFileBytes(file);
      const info = await this.api.uploadImage(bytesToBase64(bytes));
      this.store.setImage(info.image_id,
                          { width: info.width, height: info.height });
    } catch (err) {
      this.showError(err);
    } finally {
      this.store.endRequest("upload");
    }
  }

  async onTask(): Promise<void> {
    const task = this.el<HTMLSelectElement>("task-select").value as TaskKind;
    if (!task) {
      return;
    }
    this.store.setTask(task);
    if (!this.store.beginRequest("task")) {
      return;
    }
    try {
      [this.models, this.methods] = await Promise.all([
        this.api.listModels(task),
        this.api.listMethods(task),
      ]);
      const select = this.el<HTMLSelectElement>("model-select");
      select.innerHTML = '<option value="">choose a model</option>' +
        this.models.map((m) =>
          `<option value="${m.model_id}">${m.model_id}</option>`).join("");
      const methodSelect = this.el<HTMLSelectElement>("method-select");
      methodSelect.innerHTML = '<option value="">choose a method</option>' +
        this.methods.map((m) =>
          `<option value="${m.method_id}">${m.method_id} (${m.mechanism})</option>`,
        ).join("");
      this.store.setError(null);
    } catch (err) {
      this.showError(err);
    } finally {
      this.store.endRequest("task");
    }
  }

  onModel(): void {
    const modelId = this.el<HTMLSelectElement>("model-select").value;
    if (modelId) {
      this.store.setModel(modelId);
    }
  }

  async onPredict(): Promise<void> {
    const state = this.store.get();
    if (!state.imageId || !state.modelId ||
        !this.store.beginRequest("predict")) {
      return;
    }
    try {
      const prediction = await this.api.predict(state.imageId, state.modelId);
      this.store.setPrediction(prediction);
      this.populateTargets();
      this.store.setError(null);
    } catch (err) {
      this.showError(err);
    } finally {
      this.store.endRequest("predict");
    }
  }

  private labelSet(): string[] {
    const modelId = this.store.get().modelId;
    return this.models.find((m) => m.model_id === modelId)?.label_set ?? [];
  }

  /** Top-5 of the prediction first, then the rest of the label set. */
  private populateTargets(): void {
    const state = this.store.get();
    const select = this.el<HTMLSelectElement>("target-select");
    const labels = this.labelSet();
    let options: string[] = [];
    if (state.prediction?.class_probs) {
      const ranked = state.prediction.class_probs
        .map((p, i) => ({ p, i }))
        .sort((a, b) => b.p - a.p)
        .slice(0, 5)
        .map(({ i }) => i);
      const rest = labels.map((_, i) => i).filter((i) => !ranked.includes(i));
      options = [...ranked, ...rest].map((i) =>
        `<option value="class:${i}">${labels[i] ?? `class ${i}`}</option>`);
    } else if (state.prediction?.detections) {
      options = state.prediction.detections.map((d, i) => {
        const cls = labels[d.class_probs.indexOf(Math.max(...d.class_probs))];
        return `<option value="det:${i}">detection ${i} (${cls})</option>`;
      });
    } else if (state.prediction?.label_map) {
      options = labels.map((name, i) =>
        `<option value="class:${i}">${name}</option>`);
    }
    select.innerHTML = options.join("");
    if (state.task === "classification" || state.task === "segmentation") {
      const gt = this.el<HTMLInputElement>("gt-input");
      if (!gt.value && options.length) {
        const first = select.options[0];
        gt.value = first ? first.text : "";
      }
    }
  }

  onMethodOrTarget(): void {
    const methodId = this.el<HTMLSelectElement>("method-select").value;
    const raw = this.el<HTMLSelectElement>("target-select").value;
    if (!methodId || !raw) {
      return;
    }
    const [kind, index] = raw.split(":");
    const target = kind === "det"
      ? { detectionIndex: Number(index) }
      : { classId: Number(index) };
    this.store.setMethod(methodId, target);
  }

  private targetJson(): Record<string, unknown> | null {
    const state = this.store.get();
    if (!state.target) {
      return null;
    }
    if (state.target.detectionIndex !== undefined) {
      const det = state.prediction?.detections?.[state.target.detectionIndex];
      return det
        ? { detection_index: state.target.detectionIndex, detection: det }
        : null;
    }
    return { class_id: state.target.classId };
  }

  async onSaliency(): Promise<void> {
    const state = this.store.get();
    const target = this.targetJson();
    if (!state.imageId || !state.modelId || !state.methodId || !target ||
        !this.store.beginRequest("saliency")) {
      return;
    }
    try {
      const result = await this.api.saliency({
        imageId: state.imageId, modelId: state.modelId,
        methodId: state.methodId, target,
        params: { mask_count: 256, seed: 0 },
      });
      this.store.setSaliency(result.saliency, result.overlay_id);
      await this.loadImagePixels();
      this.paintOverlay();
      this.store.setError(null);
    } catch (err) {
      this.showError(err);
    } finally {
      this.store.endRequest("saliency");
    }
  }

  /** Decode the uploaded image into RGBA pixels for client-side blending.
   * Headless DOMs without canvas support skip this; the server-rendered
   * overlay image still displays. */
  private async loadImagePixels(): Promise<void> {
    const state = this.store.get();
    if (!state.imageId || !state.imageMeta) {
      return;
    }
    try {
      const canvas = this.el<HTMLCanvasElement>("overlay-canvas");
      const ctx = canvas.getContext("2d");
      if (!ctx) {
        return;
      }
      const image = new Image();
      image.crossOrigin = "anonymous";
      await new Promise<void>((resolve, reject) => {
        image.onload = () => resolve();
        image.onerror = () => reject(new Error("image decode failed"));
        image.src = this.api.blobUrl(state.imageId!);
      });
      canvas.width = state.imageMeta.width;
      canvas.height = state.imageMeta.height;
      ctx.drawImage(image, 0, 0);
      this.imagePixels = ctx.getImageData(0, 0, canvas.width,
                                          canvas.height).data;
    } catch {
      this.imagePixels = null;
    }
  }

  /** Pure client-side blend; slider moves repaint without any request. */
  paintOverlay(): void {
    const state = this.store.get();
    if (!state.saliency || !this.imagePixels) {
      return;
    }
    const canvas = this.el<HTMLCanvasElement>("overlay-canvas");
    const ctx = canvas.getContext("2d");
    if (!ctx) {
      return;
    }
    const blended = blendOverlay(this.imagePixels, state.saliency.values,
                                 state.saliency.width, state.saliency.height,
                                 state.overlayAlpha);
    const pixels = blended as Uint8ClampedArray<ArrayBuffer>;
    ctx.putImageData(new ImageData(pixels, state.saliency.width,
                                   state.saliency.height), 0, 0);
    canvas.hidden = false;
  }

  private groundTruthJson(): Record<string, unknown> {
    const state = this.store.get();
    const task = state.task!;
    if (task === "classification") {
      const name = this.el<HTMLInputElement>("gt-input").value.trim();
      const labels = this.labelSet();
      const index = labels.indexOf(name);
      return {
        task,
        class_id: index >= 0 ? index : Number(name) || 0,
        class_name: index >= 0 ? name : undefined,
      };
    }
    if (task === "segmentation") {
      // no mask editor in the UI; the predicted map stands in as reference
      return { task, label_map: state.prediction?.label_map ?? [] };
    }
    const detections = (state.prediction?.detections ?? []).map((d) => ({
      box: d.box,
      class_id: d.class_probs.indexOf(Math.max(...d.class_probs)),
    }));
    return { task, detections };
  }

  async onExplain(): Promise<void> {
    const state = this.store.get();
    if (!state.imageId || !state.task || !state.modelId || !state.methodId ||
        !this.store.beginRequest("explain")) {
      return;
    }
    try {
      const record = await this.api.explain({
        imageId: state.imageId, task: state.task, modelId: state.modelId,
        methodId: state.methodId, target: this.targetJson(),
        groundTruth: this.groundTruthJson(),
        params: { mask_count: 256, seed: 0 },
      });
      this.store.setExplanation({
        recordId: record.record_id,
        text: record.explanation_text,
        verdict: record.verdict,
      });
      this.store.setError(null);
    } catch (err) {
      this.showError(err);
    } finally {
      this.store.endRequest("explain");
    }
  }

  async onEvaluate(): Promise<void> {
    const state = this.store.get();
    const reference = this.el<HTMLTextAreaElement>("reference-input")
      .value.trim();
    if (!state.task || !state.explanation || !reference ||
        !this.store.beginRequest("evaluate")) {
      return;
    }
    try {
      const scores = await this.api.evaluate(state.task,
                                             state.explanation.text,
                                             reference);
      this.store.setScores(scores);
      this.store.setError(null);
    } catch (err) {
      this.showError(err);
    } finally {
      this.store.endRequest("evaluate");
    }
  }

  /** Re-render panels from state; cleared state means cleared panels. */
  private sync(): void {
    const state = this.store.get();

    const errorPanel = this.el<HTMLDivElement>("error-panel");
    if (state.lastError) {
      errorPanel.hidden = false;
      errorPanel.textContent =
        `[${state.lastError.code} @ ${state.lastError.stage}] ` +
        state.lastError.message + " — adjust and retry";
    } else {
      errorPanel.hidden = true;
      errorPanel.textContent = "";
    }

    this.el<HTMLSpanElement>("upload-status").textContent = state.imageId
      ? `uploaded ${state.imageMeta?.width}x${state.imageMeta?.height} ` +
        `(${state.imageId.slice(0, 12)}…)`
      : "";

    const predictionPanel = this.el<HTMLDivElement>("prediction-panel");
    if (state.prediction?.class_probs) {
      const labels = this.labelSet();
      const ranked = state.prediction.class_probs
        .map((p, i) => ({ p, i }))
        .sort((a, b) => b.p - a.p);
      const top = ranked[0]!;
      predictionPanel.innerHTML =
        `<p>top-1: <strong>${labels[top.i] ?? top.i}</strong> ` +
        `(${(top.p * 100).toFixed(1)}%)</p>` +
        `<ul>${ranked.slice(1, 5).map(({ p, i }) =>
          `<li>${labels[i] ?? i}: ${(p * 100).toFixed(1)}%</li>`).join("")}</ul>`;
    } else if (state.prediction?.detections) {
      predictionPanel.innerHTML = `<p>${state.prediction.detections.length} ` +
        `detection(s)</p>`;
    } else if (state.prediction?.label_map) {
      predictionPanel.innerHTML = "<p>label map computed</p>";
    } else {
      predictionPanel.innerHTML = "";
    }

    const overlayImg = this.el<HTMLImageElement>("overlay-img");
    if (state.overlayId) {
      overlayImg.src = this.api.blobUrl(state.overlayId);
      overlayImg.hidden = false;
    } else {
      overlayImg.hidden = true;
      overlayImg.removeAttribute("src");
      this.el<HTMLCanvasElement>("overlay-canvas").hidden = true;
    }

    const explanationPanel = this.el<HTMLDivElement>("explanation-panel");
    explanationPanel.textContent = state.explanation
      ? `${state.explanation.text} [verdict: ${state.explanation.verdict}, ` +
        `record ${state.explanation.recordId}]`
      : "";

    const scoresPanel = this.el<HTMLDivElement>("scores-panel");
    scoresPanel.innerHTML = state.scores
      ? `<table><tr><th>BLEU</th><th>METEOR</th><th>ROUGE-L P</th>` +
        `<th>BERTScore P</th></tr><tr>` +
        `<td>${state.scores.bleu.toFixed(4)}</td>` +
        `<td>${state.scores.meteor.toFixed(4)}</td>` +
        `<td>${state.scores.rouge_l_precision.toFixed(4)}</td>` +
        `<td>${state.scores.bertscore_precision.toFixed(4)}</td>` +
        `</tr></table>`
      : "";

    for (const stage of ["predict", "saliency", "explain", "evaluate"] as const) {
      const button = this.el<HTMLButtonElement>(
        { predict: "predict-btn", saliency: "saliency-btn",
          explain: "explain-btn", evaluate: "evaluate-btn" }[stage]);
      button.disabled = !stageReady(state, stage) ||
        Boolean(state.inFlight[stage]);
    }
  }
}
