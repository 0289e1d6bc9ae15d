/** Conversation view: release picker, sourced answers, follow-up questions. */

import { ApiClient, ApiError } from "./api.js";
import type { SourceRef, StandaloneQueries } from "./api.js";
import { clear, el } from "./dom.js";

export interface ChatMessage {
  role: "user" | "assistant";
  text: string;
  sources?: SourceRef[];
  abstained?: boolean;
  timings?: Record<string, number>;
  totalMs?: number;
  standalone?: StandaloneQueries | null;
  failed?: boolean;
}

export interface ChatViewState {
  sessionId: string | null;
  messages: ChatMessage[];
  selectedRelease: string | null;
  verbose: boolean;
  pending: boolean;
  notice: string | null;
}

export class ChatView {
  readonly state: ChatViewState = {
    sessionId: null,
    messages: [],
    selectedRelease: null,
    verbose: false,
    pending: false,
    notice: null,
  };

  /** Called whenever the view binds to a (new) session id. */
  onSession: ((sessionId: string) => void) | null = null;

  private releases: string[] = [];
  private failedQuery: string | null = null;
  private draft = "";

  constructor(
    private readonly client: ApiClient,
    private readonly root: HTMLElement,
  ) {}

  /** Load releases and bind to an existing session, or open a fresh one. */
  async init(sessionId?: string): Promise<void> {
    const listing = await this.client.releases();
    this.releases = listing.releases.map((r) => r.canonical);
    if (sessionId) {
      try {
        const info = await this.client.getSession(sessionId);
        this.state.sessionId = info.session_id;
        this.state.selectedRelease = info.pinned_release;
        this.state.messages = info.history.map((turn) => ({ role: turn.role, text: turn.text }));
      } catch (err) {
        if (!(err instanceof ApiError) || err.status !== 404) {
          throw err;
        }
        this.state.sessionId = await this.client.createSession();
        this.state.notice = "Previous session expired; started a new one.";
      }
    } else {
      this.state.sessionId = await this.client.createSession();
    }
    if (this.state.sessionId) {
      this.onSession?.(this.state.sessionId);
    }
    this.render();
  }

  async send(query: string): Promise<void> {
    const text = query.trim();
    if (!text || this.state.pending || !this.state.sessionId) {
      return;
    }
    this.failedQuery = null;
    this.state.messages.push({ role: "user", text });
    this.state.pending = true;
    this.state.notice = null;
    this.draft = "";
    this.render();
    try {
      const res = await this.client.sendMessage(
        this.state.sessionId,
        text,
        this.state.selectedRelease ?? undefined,
      );
      this.state.messages.push({
        role: "assistant",
        text: res.answer,
        sources: res.sources,
        abstained: res.abstained,
        timings: res.timings,
        totalMs: res.total_ms,
        standalone: res.standalone_queries,
      });
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        // the server evicted the session; reopen and let the user resend
        this.state.messages.pop();
        this.state.sessionId = await this.client.createSession();
        this.onSession?.(this.state.sessionId);
        this.state.notice = "Session expired; started a new one. Please ask again.";
        this.draft = text;
      } else {
        const message = err instanceof ApiError ? err.message : "request failed";
        this.failedQuery = text;
        this.state.messages.push({ role: "assistant", text: message, failed: true });
      }
    } finally {
      this.state.pending = false;
      this.render();
    }
  }

  private retry(): void {
    const query = this.failedQuery;
    if (query === null) {
      return;
    }
    this.failedQuery = null;
    // the error bubble sits last, right after the user turn it answered
    this.state.messages = this.state.messages.filter((m) => !m.failed);
    const last = this.state.messages[this.state.messages.length - 1];
    if (last && last.role === "user" && last.text === query) {
      this.state.messages.pop();
    }
    void this.send(query);
  }

  render(): void {
    clear(this.root);
    this.root.append(this.toolbar());
    if (this.state.notice) {
      this.root.append(el("div", { class: "notice" }, [this.state.notice]));
    }
    const list = el("div", { class: "messages" });
    for (const message of this.state.messages) {
      list.append(this.bubble(message));
    }
    if (this.state.pending) {
      list.append(
        el("div", { class: "message assistant pending" }, [
          el("span", { class: "spinner" }),
          el("span", {}, ["thinking..."]),
        ]),
      );
    }
    this.root.append(list, this.composer());
  }

  private toolbar(): HTMLElement {
    const select = el("select", { class: "release-select" }) as HTMLSelectElement;
    select.append(el("option", { value: "" }, ["latest release"]));
    for (const name of this.releases) {
      const option = el("option", { value: name }, [name]);
      select.append(option);
    }
    select.value = this.state.selectedRelease ?? "";
    select.addEventListener("change", () => {
      this.state.selectedRelease = select.value || null;
    });

    const verbose = el("input", { type: "checkbox", class: "verbose-toggle" }) as HTMLInputElement;
    verbose.checked = this.state.verbose;
    verbose.addEventListener("change", () => {
      this.state.verbose = verbose.checked;
      this.render();
    });

    return el("div", { class: "toolbar" }, [
      el("label", {}, ["Release ", select]),
      el("label", {}, [verbose, " verbose"]),
    ]);
  }

  private bubble(message: ChatMessage): HTMLElement {
    const classes = ["message", message.role];
    if (message.abstained) {
      classes.push("abstained");
    }
    if (message.failed) {
      classes.push("failed");
    }
    const node = el("div", { class: classes.join(" ") });
    node.append(el("div", { class: "bubble" }, [message.text]));
    if (message.abstained) {
      node.append(el("div", { class: "abstention-note" }, ["no answer found in the corpus"]));
    }
    if (message.failed) {
      const retry = el("button", { class: "retry", type: "button" }, ["Retry"]);
      retry.addEventListener("click", () => this.retry());
      node.append(retry);
    }
    if (message.sources && message.sources.length > 0) {
      node.append(this.sourcesPanel(message.sources));
    }
    if (this.state.verbose && message.standalone) {
      node.append(
        el("div", { class: "rewrites" }, [
          el("div", {}, [`Base: ${message.standalone.base}`]),
          el("div", {}, [`Filtered: ${message.standalone.filtered}`]),
          el("div", {}, [`Versionless: ${message.standalone.versionless}`]),
        ]),
      );
    }
    if (this.state.verbose && message.timings && message.totalMs !== undefined) {
      const parts = Object.entries(message.timings).map(
        ([step, ms]) => `${step} ${ms.toFixed(1)}ms`,
      );
      node.append(
        el("div", { class: "timings" }, [
          `${parts.join(", ")} (total ${message.totalMs.toFixed(1)}ms)`,
        ]),
      );
    }
    return node;
  }

  private sourcesPanel(sources: SourceRef[]): HTMLElement {
    const items = sources.map((s) => el("li", {}, [`${s.title}, page ${s.page + 1}`]));
    return el("details", { class: "sources" }, [
      el("summary", {}, [`Sources (${sources.length})`]),
      el("ul", {}, items),
    ]);
  }

  private composer(): HTMLElement {
    const input = el("input", {
      class: "query-input",
      type: "text",
      placeholder: "Ask about the documentation...",
    }) as HTMLInputElement;
    input.value = this.draft;
    input.addEventListener("input", () => {
      this.draft = input.value;
    });
    const button = el("button", { class: "send", type: "submit" }, ["Send"]) as HTMLButtonElement;
    if (this.state.pending) {
      input.disabled = true;
      button.disabled = true;
    }
    const form = el("form", { class: "composer" }, [input, button]);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.send(input.value);
    });
    return form;
  }
}
