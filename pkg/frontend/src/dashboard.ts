/**
 * Dashboard: zone grid of device tiles, polled from /v1/devices and
 * /v1/incidents. Unavailable devices are highlighted; clicking a tile opens
 * the device's latest incident timeline. A failed poll keeps the last good
 * data on screen and raises a stale badge until the next success.
 */
import { ApiClient, DeviceRow, IncidentRow } from "./api.js";

const DEFAULT_POLL_MS = 10_000;

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

export class Dashboard {
  private grid: HTMLElement;
  private staleBadge: HTMLElement;
  private detail: HTMLElement;
  private timer: ReturnType<typeof setInterval> | null = null;
  private lastDevices: DeviceRow[] = [];
  private lastIncidents: IncidentRow[] = [];

  constructor(
    root: HTMLElement,
    private api: ApiClient,
    private pollMs: number = DEFAULT_POLL_MS,
  ) {
    this.staleBadge = el("span", "stale-badge hidden", "stale data");
    this.grid = el("div", "zone-grid");
    this.detail = el("div", "device-detail");
    root.append(this.staleBadge, this.grid, this.detail);
  }

  start(): void {
    if (this.timer) return;
    void this.refresh();
    this.timer = setInterval(() => void this.refresh(), this.pollMs);
  }

  stop(): void {
    if (this.timer) clearInterval(this.timer);
    this.timer = null;
  }

  /** One poll cycle. Safe to call directly (tests, manual refresh button). */
  async refresh(): Promise<void> {
    try {
      const [devices, incidents] = await Promise.all([
        this.api.devices(),
        this.api.incidents({ status: "open" }),
      ]);
      this.lastDevices = devices;
      this.lastIncidents = incidents;
      this.staleBadge.classList.add("hidden");
      this.render();
    } catch {
      // keep whatever is on screen, just mark it stale
      this.staleBadge.classList.remove("hidden");
    }
  }

  private render(): void {
    this.grid.textContent = "";
    const byZone = new Map<string, DeviceRow[]>();
    for (const device of this.lastDevices) {
      const bucket = byZone.get(device.zone_id) ?? [];
      bucket.push(device);
      byZone.set(device.zone_id, bucket);
    }
    const openByDevice = new Map<string, number>();
    for (const incident of this.lastIncidents) {
      openByDevice.set(
        incident.device_id,
        (openByDevice.get(incident.device_id) ?? 0) + 1,
      );
    }
    for (const [zone, devices] of byZone) {
      const section = el("section", "zone");
      section.dataset.zone = zone;
      section.append(el("h3", "zone-name", zone));
      const tiles = el("div", "tiles");
      for (const device of devices) {
        const unavailable = device.status === "UNAVAILABLE";
        const tile = el("button", unavailable ? "device unavailable" : "device");
        tile.type = "button";
        tile.dataset.deviceId = device.device_id;
        tile.append(el("span", "device-id", device.device_id));
        tile.append(el("span", "device-status", device.status));
        const open = openByDevice.get(device.device_id) ?? 0;
        if (open) tile.append(el("span", "open-count", String(open)));
        tile.addEventListener("click", () => void this.openTimeline(device.device_id));
        tiles.append(tile);
      }
      section.append(tiles);
      this.grid.append(section);
    }
  }

  /** Load the device's most recent incident and show its event timeline. */
  async openTimeline(deviceId: string): Promise<void> {
    this.detail.textContent = "";
    const incidents = await this.api.incidents({ device_id: deviceId });
    if (!incidents.length) {
      this.detail.append(el("p", "note", `No incidents recorded for ${deviceId}.`));
      return;
    }
    const latest = incidents.reduce((a, b) =>
      a.window_start >= b.window_start ? a : b,
    );
    const full = await this.api.incidentDetail(latest.incident_id);
    this.detail.append(
      el(
        "h4",
        undefined,
        `${full.incident_id} ${full.primary_code} ${full.max_severity} (${full.status})`,
      ),
    );
    const list = el("ol", "timeline");
    for (const event of full.events) {
      list.append(
        el(
          "li",
          "event",
          `${event.ts} [${event.source}] ${event.severity} ${event.code}: ${event.message}`,
        ),
      );
    }
    this.detail.append(list);
  }
}
