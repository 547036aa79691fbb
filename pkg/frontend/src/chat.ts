/**
 * Chat panel: the dialogue surface. Sends operator utterances to /v1/query
 * and renders each answer bundle as text plus a structured card; citations
 * are buttons that resolve through the incident / manual-entry endpoints.
 */
import {
  AnswerBundle,
  ApiClient,
  ApiError,
  DeviceRow,
  EventRow,
  IncidentRow,
  ZoneSection,
} from "./api.js";

export interface ChatTurn {
  utterance: string;
  bundle: AnswerBundle | null;
  at: Date;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function eventLine(event: EventRow): string {
  return `${event.ts} [${event.source}] ${event.severity} ${event.code}: ${event.message}`;
}

export class ChatPanel {
  readonly turns: ChatTurn[] = [];
  private log: HTMLElement;
  private banner: HTMLElement;
  private input: HTMLInputElement;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
  ) {
    this.banner = el("div", "banner hidden");
    this.log = el("div", "chat-log");
    const form = el("form", "chat-form");
    this.input = el("input", "chat-input");
    this.input.type = "text";
    this.input.placeholder = "Ask about availability, faults, causes, or reports";
    const button = el("button", "chat-send", "Send");
    button.type = "submit";
    form.append(this.input, button);
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      const utterance = this.input.value.trim();
      if (utterance) void this.send(utterance);
    });
    root.append(this.banner, this.log, form);
  }

  /** Send one utterance; resolves when the turn is rendered. */
  async send(utterance: string): Promise<void> {
    this.log.append(el("div", "turn user", utterance));
    let bundle: AnswerBundle;
    try {
      bundle = await this.api.query(utterance);
    } catch (err) {
      this.turns.push({ utterance, bundle: null, at: new Date() });
      this.showFailure(err, utterance);
      return;
    }
    this.hideBanner();
    this.turns.push({ utterance, bundle, at: new Date() });
    this.input.value = "";
    this.log.append(this.renderBundle(bundle));
  }

  private showFailure(err: unknown, utterance: string): void {
    const down = err instanceof ApiError && err.isBackendDown;
    this.banner.textContent = down
      ? "Backend unavailable; your question was kept in the input box."
      : `Request failed: ${err instanceof Error ? err.message : err}`;
    this.banner.classList.remove("hidden");
    // keep the utterance so the operator can retry without retyping
    this.input.value = utterance;
  }

  private hideBanner(): void {
    this.banner.classList.add("hidden");
    this.banner.textContent = "";
  }

  private renderBundle(bundle: AnswerBundle): HTMLElement {
    const turn = el("div", "turn assistant");
    if (bundle.intent === null) {
      const card = el("div", "card clarification");
      card.append(
        el("p", "clarification-question", String(bundle.facts.clarification ?? bundle.rendered_text)),
      );
      turn.append(card);
      return turn;
    }
    turn.append(el("pre", "answer-text", bundle.rendered_text));
    const card = this.factsCard(bundle);
    if (card) turn.append(card);
    if (bundle.citations.length) turn.append(this.citationBar(bundle.citations, turn));
    return turn;
  }

  private factsCard(bundle: AnswerBundle): HTMLElement | null {
    switch (bundle.intent?.path) {
      case "PATH1_AVAILABILITY":
        return this.deviceTable(bundle.facts.devices as DeviceRow[]);
      case "PATH2_FAULT_STATUS":
        return this.incidentList(
          bundle.facts.incidents as Array<IncidentRow & { events: EventRow[] }>,
          bundle.facts.note as string | undefined,
        );
      case "PATH3_CAUSE":
        return this.causeCard(bundle.facts);
      case "PATH4_REPORT":
        return this.reportCard(bundle.facts);
      default:
        return null;
    }
  }

  private deviceTable(devices: DeviceRow[]): HTMLElement {
    const card = el("div", "card");
    const table = el("table", "device-table");
    const head = el("tr");
    for (const title of ["Device", "Label", "Role", "Status"]) {
      head.append(el("th", undefined, title));
    }
    table.append(head);
    for (const device of devices) {
      const row = el("tr", device.status === "UNAVAILABLE" ? "unavailable" : "");
      row.append(
        el("td", "device-id", device.device_id),
        el("td", undefined, device.label),
        el("td", undefined, device.role),
        el("td", `status status-${device.status}`, device.status),
      );
      table.append(row);
    }
    card.append(table);
    return card;
  }

  private incidentList(
    incidents: Array<IncidentRow & { events: EventRow[] }>,
    note?: string,
  ): HTMLElement {
    const card = el("div", "card");
    if (!incidents.length) {
      card.append(el("p", "note", note ?? "No open incidents."));
      return card;
    }
    const list = el("ul", "incident-list");
    for (const incident of incidents) {
      const item = el("li", "incident");
      item.append(
        el(
          "span",
          "incident-head",
          `${incident.incident_id} ${incident.device_id} ${incident.primary_code} ${incident.max_severity} (${incident.status})`,
        ),
      );
      const timeline = el("ol", "timeline");
      for (const event of incident.events) {
        timeline.append(el("li", "event", eventLine(event)));
      }
      item.append(timeline);
      list.append(item);
    }
    card.append(list);
    return card;
  }

  private causeCard(facts: Record<string, unknown>): HTMLElement {
    const card = el("div", "card cause");
    const note = facts.note as string | undefined;
    if (note) card.append(el("p", "note", note));
    const timeline = facts.timeline as EventRow[] | undefined;
    if (timeline?.length) {
      card.append(el("h4", undefined, "Timeline"));
      const list = el("ol", "timeline");
      for (const event of timeline) list.append(el("li", "event", eventLine(event)));
      card.append(list);
    }
    const causes = facts.causes as Array<{ entry_id: string; code_match: boolean }>;
    if (causes?.length) {
      card.append(el("h4", undefined, "Likely causes"));
      const list = el("ul", "cause-list");
      for (const hit of causes) {
        list.append(
          el("li", hit.code_match ? "cause code-match" : "cause", hit.entry_id),
        );
      }
      card.append(list);
    }
    const prevention = facts.prevention as Array<{ entry_id: string }>;
    if (prevention?.length) {
      card.append(el("h4", undefined, "Prevention"));
      const list = el("ul", "prevention-list");
      for (const hit of prevention) list.append(el("li", undefined, hit.entry_id));
      card.append(list);
    }
    return card;
  }

  private reportCard(facts: Record<string, unknown>): HTMLElement {
    const card = el("div", "card report-summary");
    const zones = facts.zones as ZoneSection[];
    const list = el("ul", "zone-counts");
    for (const section of zones) {
      list.append(
        el(
          "li",
          undefined,
          `${section.zone_display}: ${section.counts.open_incidents} open incidents, ` +
            `${section.counts.devices} devices, ${section.counts.events} events`,
        ),
      );
    }
    card.append(list);
    return card;
  }

  private citationBar(citations: string[], turn: HTMLElement): HTMLElement {
    const bar = el("div", "citations");
    for (const citation of citations) {
      const button = el("button", "citation", citation);
      button.type = "button";
      button.addEventListener("click", () => {
        void this.resolveCitation(citation, turn);
      });
      bar.append(button);
    }
    return bar;
  }

  /** Fetch what a citation points at and pin it under the turn. */
  private async resolveCitation(citation: string, turn: HTMLElement): Promise<void> {
    const [scheme, ref] = [
      citation.slice(0, citation.indexOf(":")),
      citation.slice(citation.indexOf(":") + 1),
    ];
    const detail = el("div", "card citation-detail");
    try {
      if (scheme === "incident") {
        const incident = await this.api.incidentDetail(ref);
        detail.append(
          el("h4", undefined, `${incident.incident_id} (${incident.status})`),
        );
        const list = el("ol", "timeline");
        for (const event of incident.events) {
          list.append(el("li", "event", eventLine(event)));
        }
        detail.append(list);
      } else if (scheme === "entry") {
        const entry = await this.api.manualEntry(ref);
        detail.append(el("h4", undefined, entry.title));
        detail.append(el("p", "entry-body", entry.body));
      } else {
        // event ids live inside their incident timelines; nothing to fetch
        detail.append(el("p", undefined, `event reference ${ref}`));
      }
    } catch (err) {
      detail.append(el("p", "note", `could not resolve ${citation}: ${err}`));
    }
    turn.append(detail);
  }
}
