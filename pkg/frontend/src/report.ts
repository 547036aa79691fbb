/**
 * Report view: renders /v1/reports/comprehensive as printable per-zone
 * sections with cause hits and a prevention checklist. Pure presentation;
 * every figure comes straight off the report payload.
 */
import { ApiClient, ComprehensiveReport } from "./api.js";

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

export class ReportView {
  constructor(
    private root: HTMLElement,
    private api: ApiClient,
  ) {}

  async load(): Promise<ComprehensiveReport> {
    const report = await this.api.report();
    this.render(report);
    return report;
  }

  private render(report: ComprehensiveReport): void {
    this.root.textContent = "";
    const article = el("article", "report printable");
    article.append(el("h2", undefined, "Comprehensive facility report"));
    article.append(
      el("p", "as-of", report.as_of ? `As of ${report.as_of}` : "No recorded events"),
    );

    for (const section of report.zones) {
      const zone = el("section", "report-zone");
      zone.dataset.zone = section.zone;
      zone.append(el("h3", undefined, section.zone_display));

      const counts = el("p", "counts");
      counts.append(el("span", "devices", String(section.counts.devices)));
      counts.append(document.createTextNode(" devices, "));
      counts.append(
        el("span", "open-incidents", String(section.counts.open_incidents)),
      );
      counts.append(document.createTextNode(" open incidents, "));
      counts.append(el("span", "events", String(section.counts.events)));
      counts.append(document.createTextNode(" recorded events"));
      zone.append(counts);

      const causeByIncident = new Map(
        section.causes.map((c) => [c.incident_id, c.entry_id]),
      );
      for (const incident of section.incidents) {
        const block = el("div", "report-incident");
        block.append(
          el(
            "h4",
            undefined,
            `${incident.incident_id} ${incident.device_id} ${incident.primary_code} (${incident.max_severity})`,
          ),
        );
        const timeline = el("ol", "timeline");
        for (const event of incident.events) {
          timeline.append(
            el("li", "event", `${event.ts} ${event.severity} ${event.code}: ${event.message}`),
          );
        }
        block.append(timeline);
        const cause = causeByIncident.get(incident.incident_id);
        if (cause) block.append(el("p", "cause-hit", `Matched guidance: ${cause}`));
        zone.append(block);
      }
      article.append(zone);
    }

    const prevention = el("section", "prevention");
    prevention.append(el("h3", undefined, "Prevention checklist"));
    const list = el("ul", "prevention-list");
    for (const row of report.prevention) {
      list.append(el("li", undefined, `${row.kind}: ${row.entries.join(", ")}`));
    }
    prevention.append(list);
    article.append(prevention);

    const totals = el("p", "totals");
    totals.textContent =
      `Fleet total: ${report.totals.devices} devices, ` +
      `${report.totals.open_incidents} open incidents, ` +
      `${report.totals.events} events`;
    article.append(totals);

    this.root.append(article);
  }
}
