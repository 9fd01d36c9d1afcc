import type {
  Manifest,
  Meta,
  TileDetail,
  TilePage,
  VerdictRequest,
  VerdictWire,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: unknown,
  ) {
    super(`API error ${status}`);
  }
}

export interface GalleryQuery {
  sort?: string;
  order?: "asc" | "desc";
  flagged?: boolean;
  page?: number;
  pageSize?: number;
}

async function parseOrThrow<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail: unknown = null;
    try {
      detail = (await response.json()).detail;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

/** Thin fetch wrapper over the triage service; no client-side computation. */
export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  private url(path: string, params?: Record<string, string>): string {
    const query = params ? new URLSearchParams(params).toString() : "";
    return this.baseUrl + path + (query ? `?${query}` : "");
  }

  async getMeta(): Promise<Meta> {
    return parseOrThrow(await fetch(this.url("/api/meta")));
  }

  async getTiles(query: GalleryQuery = {}): Promise<TilePage> {
    const params: Record<string, string> = {};
    if (query.sort) params.sort = query.sort;
    if (query.order) params.order = query.order;
    if (query.flagged !== undefined) params.flagged = String(query.flagged);
    if (query.page) params.page = String(query.page);
    if (query.pageSize) params.page_size = String(query.pageSize);
    return parseOrThrow(await fetch(this.url("/api/tiles", params)));
  }

  async getTile(tileId: string): Promise<TileDetail> {
    return parseOrThrow(
      await fetch(this.url(`/api/tiles/${encodeURIComponent(tileId)}`)),
    );
  }

  async postVerdict(tileId: string, body: VerdictRequest): Promise<VerdictWire> {
    const response = await fetch(
      this.url(`/api/tiles/${encodeURIComponent(tileId)}/verdict`),
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      },
    );
    return parseOrThrow(response);
  }

  async getManifest(): Promise<Manifest> {
    return parseOrThrow(await fetch(this.url("/api/export/manifest")));
  }
}
