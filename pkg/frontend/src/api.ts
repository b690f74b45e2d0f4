// Thin client for the engine's /v1 endpoints.

import type {
  ApiError,
  EditRequest,
  EditResponse,
  MapResponse,
  RegionPairRecord,
} from "./types.js";

export class ApiRequestError extends Error {
  status: number;
  detail: ApiError | null;

  constructor(status: number, detail: ApiError | null) {
    super(detail?.error ?? `request failed with status ${status}`);
    this.status = status;
    this.detail = detail;
  }
}

async function unwrap<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail: ApiError | null = null;
    try {
      detail = (await response.json()) as ApiError;
    } catch {
      // non-JSON error body; keep the status alone
    }
    throw new ApiRequestError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  base: string;

  constructor(base = "") {
    this.base = base.replace(/\/$/, "");
  }

  async health(): Promise<boolean> {
    try {
      const body = await unwrap<{ status: string }>(await fetch(`${this.base}/v1/health`));
      return body.status === "ok";
    } catch {
      return false;
    }
  }

  async backends(): Promise<{ backends: string[]; default: string }> {
    return unwrap(await fetch(`${this.base}/v1/backends`));
  }

  async map(regions: RegionPairRecord[], latentScale = 1): Promise<MapResponse> {
    const response = await fetch(`${this.base}/v1/map`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ regions, latent_scale: latentScale }),
    });
    return unwrap(response);
  }

  async edit(request: EditRequest): Promise<EditResponse> {
    const response = await fetch(`${this.base}/v1/edit`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
    return unwrap(response);
  }
}
