/** Hash router wiring the chat and report views into the page shell. */

import { ApiClient } from "./api.js";
import { ChatView } from "./chat.js";
import { ReportListView, ReportView } from "./report.js";
import { clear, el } from "./dom.js";

export interface Route {
  view: "chat" | "reports" | "report";
  id?: string;
}

export function parseHash(hash: string): Route {
  const path = hash.replace(/^#/, "");
  const parts = path.split("/").filter((p) => p.length > 0);
  if (parts[0] === "reports") {
    if (parts.length > 1) {
      return { view: "report", id: decodeURIComponent(parts.slice(1).join("/")) };
    }
    return { view: "reports" };
  }
  if (parts[0] === "chat" && parts.length > 1) {
    return { view: "chat", id: parts[1] };
  }
  return { view: "chat" };
}

export class App {
  private readonly client: ApiClient;
  private chat: ChatView | null = null;
  private content: HTMLElement;

  constructor(
    private readonly root: HTMLElement,
    baseUrl: string = "",
  ) {
    this.client = new ApiClient(baseUrl);
    this.content = el("main", { class: "content" });
  }

  async start(): Promise<void> {
    clear(this.root);
    this.root.append(this.nav(), this.content);
    window.addEventListener("hashchange", () => {
      void this.route();
    });
    await this.route();
  }

  private nav(): HTMLElement {
    return el("nav", { class: "topnav" }, [
      el("a", { href: "#/chat", class: "nav-chat" }, ["Chat"]),
      el("a", { href: "#/reports", class: "nav-reports" }, ["Reports"]),
    ]);
  }

  async route(): Promise<void> {
    const route = parseHash(window.location.hash);
    if (route.view === "chat") {
      // reuse the live view when the hash already points at its session
      if (this.chat && this.chat.state.sessionId === route.id) {
        return;
      }
      const view = new ChatView(this.client, this.content);
      view.onSession = (sessionId) => {
        const target = `#/chat/${sessionId}`;
        if (window.location.hash !== target) {
          window.location.hash = target;
        }
      };
      this.chat = view;
      await view.init(route.id);
      return;
    }
    this.chat = null;
    if (route.view === "reports") {
      await new ReportListView(this.client, this.content).init();
    } else if (route.id !== undefined) {
      await new ReportView(this.client, this.content).init(route.id);
    }
  }
}
