/**
 * Typed client for the /v1 HTTP API. The console never computes facility
 * state itself; every number it shows comes out of one of these calls.
 *
 * Concurrent GETs to the same URL are deduplicated: callers share one
 * in-flight promise, so a chat turn and a dashboard poll hitting the same
 * endpoint cost a single request.
 */

export interface DeviceRow {
  device_id: string;
  kind: string;
  zone_id: string;
  label: string;
  manual_id: string;
  observes: string[];
  role: string;
  status: "AVAILABLE" | "UNAVAILABLE";
  open_incident_ids: string[];
}

export interface EventRow {
  event_id: string;
  device_id: string;
  ts: string;
  source: string;
  severity: string;
  code: string;
  message: string;
  attributes: Record<string, string>;
}

export interface IncidentRow {
  incident_id: string;
  device_id: string;
  zone_id: string;
  window_start: string;
  window_end: string;
  event_ids: string[];
  primary_code: string;
  max_severity: string;
  status: "OPEN" | "RESOLVED";
  sources_seen: string[];
}

export interface IncidentDetail extends IncidentRow {
  events: EventRow[];
}

export interface ManualEntry {
  entry_id: string;
  manual_id: string;
  device_kind: string;
  section: string;
  title: string;
  body: string;
  codes: string[];
}

export interface QueryIntent {
  path: string;
  zone: string | null;
  device_kind: string | null;
  device_id: string | null;
  time_range: string[] | null;
}

export interface AnswerBundle {
  intent: QueryIntent | null;
  facts: Record<string, unknown>;
  citations: string[];
  rendered_text: string;
  backend: string;
}

export interface ZoneCounts {
  devices: number;
  open_incidents: number;
  events: number;
}

export interface ZoneSection {
  zone: string;
  zone_display: string;
  devices: Array<Record<string, unknown>>;
  incidents: Array<IncidentRow & { events: EventRow[] }>;
  causes: Array<{ incident_id: string; entry_id: string | null }>;
  counts: ZoneCounts;
}

export interface ComprehensiveReport {
  as_of: string | null;
  zones: ZoneSection[];
  prevention: Array<{ kind: string; entries: string[] }>;
  totals: ZoneCounts;
}

/** Error envelope from the service, or a transport failure (code NETWORK). */
export class ApiError extends Error {
  constructor(
    readonly httpStatus: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }

  /** True when retrying later could help (network, 5xx). */
  get isBackendDown(): boolean {
    return this.httpStatus === 0 || this.httpStatus >= 500;
  }
}

export class ApiClient {
  private inflight = new Map<string, Promise<unknown>>();

  constructor(readonly baseUrl: string) {}

  health(): Promise<{ status: string }> {
    return this.get("/v1/health");
  }

  devices(filter?: { zone?: string; kind?: string }): Promise<DeviceRow[]> {
    const q = new URLSearchParams();
    if (filter?.zone) q.set("zone", filter.zone);
    if (filter?.kind) q.set("kind", filter.kind);
    const suffix = q.size ? `?${q}` : "";
    return this.get<{ devices: DeviceRow[] }>(`/v1/devices${suffix}`).then(
      (body) => body.devices,
    );
  }

  incidents(filter?: {
    zone?: string;
    device_id?: string;
    status?: string;
  }): Promise<IncidentRow[]> {
    const q = new URLSearchParams();
    if (filter?.zone) q.set("zone", filter.zone);
    if (filter?.device_id) q.set("device_id", filter.device_id);
    if (filter?.status) q.set("status", filter.status);
    const suffix = q.size ? `?${q}` : "";
    return this.get<{ incidents: IncidentRow[] }>(
      `/v1/incidents${suffix}`,
    ).then((body) => body.incidents);
  }

  incidentDetail(incidentId: string): Promise<IncidentDetail> {
    return this.get(`/v1/incidents/${encodeURIComponent(incidentId)}`);
  }

  manualEntry(entryId: string): Promise<ManualEntry> {
    return this.get(`/v1/manual-entries/${encodeURIComponent(entryId)}`);
  }

  report(): Promise<ComprehensiveReport> {
    return this.get("/v1/reports/comprehensive");
  }

  query(utterance: string, zone?: string): Promise<AnswerBundle> {
    const body: Record<string, string> = { utterance };
    if (zone) body.zone = zone;
    return this.post("/v1/query", body);
  }

  private get<T>(path: string): Promise<T> {
    const pending = this.inflight.get(path);
    if (pending) return pending as Promise<T>;
    const request = this.request<T>("GET", path).finally(() => {
      this.inflight.delete(path);
    });
    this.inflight.set(path, request);
    return request;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request("POST", path, body);
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    let response: Response;
    try {
      response = await fetch(this.baseUrl + path, {
        method,
        headers: body === undefined ? {} : { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, "NETWORK", `cannot reach service: ${err}`);
    }
    if (!response.ok) {
      let code = "HTTP_ERROR";
      let message = `${method} ${path} failed with ${response.status}`;
      try {
        const envelope = (await response.json()) as {
          code?: string;
          message?: string;
        };
        if (envelope.code) code = envelope.code;
        if (envelope.message) message = envelope.message;
      } catch {
        // non-JSON error body; keep the generic message
      }
      throw new ApiError(response.status, code, message);
    }
    return (await response.json()) as T;
  }
}
