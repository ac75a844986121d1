/** Typed client for the /api/v1 service; every number the UI shows comes
 * from these responses. */

export type TaskKind = "classification" | "segmentation" | "detection";

export interface ModelInfo {
  model_id: string;
  task: TaskKind;
  label_set: string[];
  supports_gradients: boolean;
}

export interface MethodInfo {
  method_id: string;
  mechanism: "gradient" | "perturbation";
  tasks: TaskKind[];
}

export interface DetectionInfo {
  box: { x_min: number; y_min: number; x_max: number; y_max: number };
  class_probs: number[];
  objectness: number;
}

export interface PredictionInfo {
  task: TaskKind;
  model_id: string;
  class_probs?: number[];
  label_map?: number[][];
  detections?: DetectionInfo[];
}

export interface SaliencyInfo {
  height: number;
  width: number;
  values: number[];
  method_id: string;
  mechanism: string;
}

export interface ExplanationInfo {
  record_id: number;
  explanation_text: string;
  verdict: "match" | "mismatch";
  saliency_ref: string;
  overlay_ref: string;
}

export interface MetricAggregate {
  bleu: number;
  meteor: number;
  rouge_l_precision: number;
  bertscore_precision: number;
}

export interface UploadInfo {
  image_id: string;
  height: number;
  width: number;
  channels: number;
}

export class ApiError extends Error {
  constructor(
    public code: string,
    message: string,
    public stage: string,
    public status: number,
  ) {
    super(message);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  try {
    const body = await response.json();
    return new ApiError(body.code ?? "unknown", body.message ?? response.statusText,
      body.stage ?? "request", response.status);
  } catch {
    return new ApiError("unknown", response.statusText, "request", response.status);
  }
}

export class ApiClient {
  constructor(private baseUrl: string) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await fetch(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError("connection_failed", String(err), "network", 0);
    }
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  health(): Promise<{ status: string }> {
    return this.request("/api/v1/health");
  }

  uploadImage(pngBase64: string): Promise<UploadInfo> {
    return this.post("/api/v1/images", { png_base64: pngBase64 });
  }

  async listModels(task: TaskKind): Promise<ModelInfo[]> {
    const body = await this.request<{ models: ModelInfo[] }>(
      `/api/v1/models?task=${task}`);
    return body.models;
  }

  async listMethods(task: TaskKind): Promise<MethodInfo[]> {
    const body = await this.request<{ methods: MethodInfo[] }>(
      `/api/v1/methods?task=${task}`);
    return body.methods;
  }

  async predict(imageId: string, modelId: string): Promise<PredictionInfo> {
    const body = await this.post<{ prediction: PredictionInfo }>(
      "/api/v1/predict", { image_id: imageId, model_id: modelId });
    return body.prediction;
  }

  saliency(args: {
    imageId: string; modelId: string; methodId: string;
    target: Record<string, unknown>; params?: Record<string, unknown>;
  }): Promise<{ saliency_id: string; overlay_id: string; saliency: SaliencyInfo }> {
    return this.post("/api/v1/saliency", {
      image_id: args.imageId, model_id: args.modelId,
      method_id: args.methodId, target: args.target, params: args.params ?? {},
    });
  }

  async explain(args: {
    imageId: string; task: TaskKind; modelId: string; methodId: string;
    target: Record<string, unknown> | null;
    groundTruth: Record<string, unknown>;
    params?: Record<string, unknown>;
  }): Promise<ExplanationInfo> {
    const body = await this.post<{ record: ExplanationInfo }>(
      "/api/v1/explain", {
        image_id: args.imageId, task: args.task, model_id: args.modelId,
        method_id: args.methodId, target: args.target,
        ground_truth: args.groundTruth, lvm: { provider: "mock" },
        params: args.params ?? {},
      });
    return body.record;
  }

  async evaluate(task: TaskKind, hypothesis: string,
                 reference: string): Promise<MetricAggregate> {
    const body = await this.post<{ report: { aggregate: MetricAggregate } }>(
      "/api/v1/evaluate", {
        task,
        pairs: [{ sample_id: "ui", hypothesis, reference }],
      });
    return body.report.aggregate;
  }

  async fetchBlob(key: string): Promise<Uint8Array> {
    let response: Response;
    try {
      response = await fetch(`${this.baseUrl}/api/v1/blobs/${key}`);
    } catch (err) {
      throw new ApiError("connection_failed", String(err), "network", 0);
    }
    if (!response.ok) {
      throw await parseError(response);
    }
    return new Uint8Array(await response.arrayBuffer());
  }

  blobUrl(key: string): string {
    return `${this.baseUrl}/api/v1/blobs/${key}`;
  }
}
