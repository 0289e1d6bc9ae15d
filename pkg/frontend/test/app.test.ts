import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { App, parseHash } from "../src/app.js";
import { flush, installFetchMock, type FetchMock } from "./helpers.js";

describe("parseHash", () => {
  it("defaults to the chat view", () => {
    expect(parseHash("")).toEqual({ view: "chat" });
    expect(parseHash("#/")).toEqual({ view: "chat" });
    expect(parseHash("#/chat")).toEqual({ view: "chat" });
    expect(parseHash("#/nonsense")).toEqual({ view: "chat" });
  });

  it("extracts session and report ids", () => {
    expect(parseHash("#/chat/abc123")).toEqual({ view: "chat", id: "abc123" });
    expect(parseHash("#/reports")).toEqual({ view: "reports" });
    expect(parseHash("#/reports/eval")).toEqual({ view: "report", id: "eval" });
    expect(parseHash("#/reports/eval%20run")).toEqual({ view: "report", id: "eval run" });
  });
});

describe("App", () => {
  let mock: FetchMock;
  let root: HTMLElement;

  beforeEach(() => {
    root = document.createElement("div");
    document.body.append(root);
  });

  afterEach(() => {
    mock.restore();
    document.body.innerHTML = "";
  });

  it("boots into a chat session and routes to reports", async () => {
    mock = installFetchMock({
      "GET /api/v1/releases": {
        body: {
          releases: [{ canonical: "Release 12", raw: "12", key: [12] }],
          latest: "Release 12",
        },
      },
      "POST /api/v1/sessions": { body: { session_id: "s1" } },
      "GET /api/v1/reports": { body: { reports: ["eval"] } },
    });

    const app = new App(root);
    await app.start();
    await flush(3);

    expect(root.querySelector(".topnav")).not.toBeNull();
    expect(window.location.hash).toBe("#/chat/s1");
    expect(root.querySelector("form.composer")).not.toBeNull();

    window.location.hash = "#/reports";
    await flush(3);
    expect(root.querySelector("h2")?.textContent).toBe("Reports");
    expect(root.querySelector(".report-list a")?.getAttribute("href")).toBe("#/reports/eval");
  });
});
