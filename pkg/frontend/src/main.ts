import { ApiClient } from "./api.js";
import { WizardApp } from "./ui.js";

declare global {
  interface Window {
    EXPLAINBENCH_BASE_URL?: string;
  }
}

const baseUrl = window.EXPLAINBENCH_BASE_URL ?? "http://127.0.0.1:8321";
const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app mount point");
}
new WizardApp(root, new ApiClient(baseUrl));
