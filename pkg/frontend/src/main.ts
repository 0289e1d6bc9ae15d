import { App } from "./app.js";

declare global {
  interface Window {
    MRRAG_API_BASE?: string;
  }
}

function boot(): void {
  const root = document.getElementById("app");
  if (!root) {
    throw new Error("missing #app mount point");
  }
  const app = new App(root, window.MRRAG_API_BASE ?? "");
  void app.start();
}

if (document.readyState === "loading") {
  document.addEventListener("DOMContentLoaded", boot);
} else {
  boot();
}
