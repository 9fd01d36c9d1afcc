import { FLOOD_CHANNELS, type FloodChannel } from "./types.js";

/** Every view state lives in the URL hash, so all views deep-link. */

export type OverlayLayer = "reference" | "prediction";

export interface OverlayState {
  base: "pre" | "post";
  layers: Set<OverlayLayer>;
  channels: Set<FloodChannel>;
}

export interface GalleryState {
  view: "gallery";
  sort: string;
  order: "asc" | "desc";
  flagged: boolean | undefined;
  page: number;
  unreviewedOnly: boolean;
}

export interface InspectorState extends Omit<GalleryState, "view"> {
  view: "inspector";
  tileId: string;
  overlay: OverlayState;
}

export type Route = GalleryState | InspectorState;

export const DEFAULT_SORT = "tile_id";

export function defaultOverlay(): OverlayState {
  return {
    base: "post",
    layers: new Set<OverlayLayer>(["reference", "prediction"]),
    channels: new Set<FloodChannel>(FLOOD_CHANNELS),
  };
}

export function defaultGallery(): GalleryState {
  return {
    view: "gallery",
    sort: DEFAULT_SORT,
    order: "asc",
    flagged: undefined,
    page: 1,
    unreviewedOnly: false,
  };
}

function galleryParams(state: GalleryState | InspectorState): URLSearchParams {
  const params = new URLSearchParams();
  if (state.sort !== DEFAULT_SORT) params.set("sort", state.sort);
  if (state.order !== "asc") params.set("order", state.order);
  if (state.flagged !== undefined) params.set("flagged", String(state.flagged));
  if (state.page !== 1) params.set("page", String(state.page));
  if (state.unreviewedOnly) params.set("unreviewed", "true");
  return params;
}

export function routeToHash(route: Route): string {
  const params = galleryParams(route);
  if (route.view === "gallery") {
    const query = params.toString();
    return "#/gallery" + (query ? `?${query}` : "");
  }
  const overlay = route.overlay;
  if (overlay.base !== "post") params.set("base", overlay.base);
  const layers = [...overlay.layers].sort().join(",");
  if (layers !== "prediction,reference") params.set("layers", layers);
  const channels = FLOOD_CHANNELS.filter((c) => overlay.channels.has(c)).join(",");
  if (overlay.channels.size !== FLOOD_CHANNELS.length) params.set("channels", channels);
  const query = params.toString();
  return `#/tile/${encodeURIComponent(route.tileId)}` + (query ? `?${query}` : "");
}

function parseGalleryParams(params: URLSearchParams): Omit<GalleryState, "view"> {
  const flaggedRaw = params.get("flagged");
  return {
    sort: params.get("sort") ?? DEFAULT_SORT,
    order: params.get("order") === "desc" ? "desc" : "asc",
    flagged: flaggedRaw === null ? undefined : flaggedRaw === "true",
    page: Math.max(1, Number(params.get("page") ?? "1") || 1),
    unreviewedOnly: params.get("unreviewed") === "true",
  };
}

export function parseHash(hash: string): Route {
  const trimmed = hash.replace(/^#/, "");
  const [path, queryString = ""] = trimmed.split("?");
  const params = new URLSearchParams(queryString);
  const base = parseGalleryParams(params);

  const tileMatch = /^\/tile\/(.+)$/.exec(path ?? "");
  if (tileMatch) {
    const overlay = defaultOverlay();
    const baseParam = params.get("base");
    if (baseParam === "pre") overlay.base = "pre";
    const layersParam = params.get("layers");
    if (layersParam !== null) {
      overlay.layers = new Set(
        layersParam
          .split(",")
          .filter((l): l is OverlayLayer => l === "reference" || l === "prediction"),
      );
    }
    const channelsParam = params.get("channels");
    if (channelsParam !== null) {
      overlay.channels = new Set(
        channelsParam
          .split(",")
          .filter((c): c is FloodChannel =>
            (FLOOD_CHANNELS as readonly string[]).includes(c)),
      );
    }
    return {
      view: "inspector",
      tileId: decodeURIComponent(tileMatch[1]!),
      overlay,
      ...base,
    };
  }
  return { view: "gallery", ...base };
}
