import { ApiClient, ApiError, type GalleryQuery } from "./api.js";
import type {
  ManifestCounts,
  TileDetail,
  TilePage,
  TileSummary,
  VerdictRequest,
  VerdictWire,
} from "./types.js";

export interface Toast {
  kind: "error" | "info";
  message: string;
}

export interface VerdictFormErrors {
  error_type?: string;
  annotator?: string;
}

/** Client-side gate matching the server contract: a mislabeled verdict
 *  needs an error type, and every verdict needs an annotator. */
export function validateVerdict(request: VerdictRequest): VerdictFormErrors {
  const errors: VerdictFormErrors = {};
  if (request.status === "mislabeled" && !request.error_type) {
    errors.error_type = "select an error type for a mislabeled verdict";
  }
  if (!request.annotator.trim()) {
    errors.annotator = "annotator is required";
  }
  return errors;
}

export class AppStore {
  page: TilePage | null = null;
  detail: TileDetail | null = null;
  manifestCounts: ManifestCounts | null = null;
  toasts: Toast[] = [];
  lastError: string | null = null;

  private listeners: (() => void)[] = [];

  constructor(readonly api: ApiClient) {}

  subscribe(listener: () => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  pushToast(toast: Toast): void {
    this.toasts.push(toast);
    this.notify();
  }

  async loadGallery(query: GalleryQuery): Promise<void> {
    this.lastError = null;
    try {
      this.page = await this.api.getTiles(query);
    } catch (err) {
      this.page = null;
      this.lastError = describeError(err);
    }
    this.notify();
  }

  async loadDetail(tileId: string): Promise<"ok" | "not_found" | "error"> {
    this.lastError = null;
    try {
      this.detail = await this.api.getTile(tileId);
      this.notify();
      return "ok";
    } catch (err) {
      this.detail = null;
      if (err instanceof ApiError && err.status === 404) {
        this.notify();
        return "not_found";
      }
      this.lastError = describeError(err);
      this.notify();
      return "error";
    }
  }

  async refreshManifest(): Promise<void> {
    try {
      this.manifestCounts = (await this.api.getManifest()).counts;
    } catch {
      this.manifestCounts = null;
    }
    this.notify();
  }

  /** Submit a verdict with an optimistic local update.
   *
   * The card badge and the excluded counter move immediately; on failure
   * everything rolls back and the error surfaces as a toast / inline
   * message. Returns form errors when blocked client-side.
   */
  async submitVerdict(
    tileId: string,
    request: VerdictRequest,
  ): Promise<VerdictFormErrors | "ok" | "failed"> {
    const errors = validateVerdict(request);
    if (Object.keys(errors).length) return errors;

    const previousCounts = this.manifestCounts ? { ...this.manifestCounts } : null;
    const previousVerdict = this.currentVerdictOf(tileId);
    const optimistic: VerdictWire = {
      seq: -1,
      tile_id: tileId,
      status: request.status,
      error_type: request.error_type ?? null,
      note: request.note ?? "",
      annotator: request.annotator,
      timestamp: new Date().toISOString(),
    };
    this.applyVerdict(tileId, optimistic, { appendHistory: false });
    this.adjustExcluded(previousVerdict, optimistic);
    this.notify();

    try {
      const stored = await this.api.postVerdict(tileId, request);
      this.applyVerdict(tileId, stored, { appendHistory: true });
      await this.refreshManifest();
      return "ok";
    } catch (err) {
      this.applyVerdict(tileId, previousVerdict, { appendHistory: false });
      this.manifestCounts = previousCounts;
      this.pushToast({ kind: "error", message: describeError(err) });
      return "failed";
    }
  }

  private currentVerdictOf(tileId: string): VerdictWire | null {
    if (this.detail?.tile_id === tileId) return this.detail.verdict;
    return this.page?.tiles.find((t) => t.tile_id === tileId)?.verdict ?? null;
  }

  private applyVerdict(
    tileId: string,
    verdict: VerdictWire | null,
    opts: { appendHistory: boolean },
  ): void {
    if (this.detail && this.detail.tile_id === tileId) {
      this.detail = {
        ...this.detail,
        verdict,
        verdict_history:
          opts.appendHistory && verdict
            ? [...this.detail.verdict_history, verdict]
            : this.detail.verdict_history,
      };
    }
    if (this.page) {
      this.page = {
        ...this.page,
        tiles: this.page.tiles.map((t) =>
          t.tile_id === tileId ? { ...t, verdict } : t,
        ),
      };
    }
  }

  private adjustExcluded(before: VerdictWire | null, after: VerdictWire): void {
    if (!this.manifestCounts) return;
    const was = before?.status === "mislabeled" ? 1 : 0;
    const is = after.status === "mislabeled" ? 1 : 0;
    const delta = is - was;
    this.manifestCounts = {
      ...this.manifestCounts,
      excluded: this.manifestCounts.excluded + delta,
      included: this.manifestCounts.included - delta,
    };
  }

  /** Neighbor of a tile in the current gallery ordering; skips tiles with a
   *  verdict when unreviewedOnly is set. Returns null at the boundary. */
  neighborTile(
    tileId: string,
    direction: 1 | -1,
    unreviewedOnly: boolean,
  ): TileSummary | null {
    if (!this.page) return null;
    const index = this.page.tiles.findIndex((t) => t.tile_id === tileId);
    if (index < 0) return null;
    for (let i = index + direction; i >= 0 && i < this.page.tiles.length; i += direction) {
      const candidate = this.page.tiles[i]!;
      if (unreviewedOnly && candidate.verdict !== null) continue;
      return candidate;
    }
    return null;
  }
}

export function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    const detail = typeof err.detail === "string" ? err.detail : JSON.stringify(err.detail);
    return `request failed (${err.status}): ${detail}`;
  }
  return err instanceof Error ? `network error: ${err.message}` : String(err);
}
