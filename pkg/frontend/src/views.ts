import type { Route, GalleryState, InspectorState, OverlayState } from "./router.js";
import { defaultOverlay, routeToHash } from "./router.js";
import {
  FLOOD_CHANNELS,
  type ManifestCounts,
  type Meta,
  type TileCardViewModel,
  type TileDetail,
  type TilePage,
  type TileSummary,
  type VerdictWire,
} from "./types.js";

export function escapeHtml(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmt(value: number | null): string {
  return value === null ? "–" : value.toFixed(3);
}

/** Card fields come verbatim from the API response; nothing is recomputed. */
export function toCardViewModel(tile: TileSummary): TileCardViewModel {
  return {
    tileId: tile.tile_id,
    thumbnailUrl: `/assets/images/${encodeURIComponent(tile.tile_id)}.post.png`,
    worstMetricName: tile.worst_metric.name,
    worstMetricValue: tile.worst_metric.value,
    flagged: tile.flagged,
    verdict: tile.verdict,
  };
}

function verdictBadge(verdict: VerdictWire | null): string {
  if (!verdict) return `<span class="badge badge-none">unreviewed</span>`;
  return `<span class="badge badge-${verdict.status}">${verdict.status}</span>`;
}

export function renderManifestCounter(counts: ManifestCounts | null): string {
  if (!counts) return `<span id="manifest-counter" class="counter">manifest: –</span>`;
  return (
    `<span id="manifest-counter" class="counter" data-excluded="${counts.excluded}">` +
    `manifest: ${counts.included} kept / ${counts.excluded} excluded</span>`
  );
}

export function renderErrorBanner(message: string): string {
  return (
    `<div class="banner banner-error" role="alert">` +
    `<span>${escapeHtml(message)}</span>` +
    `<button type="button" data-action="retry">Retry</button></div>`
  );
}

export function renderToasts(toasts: { kind: string; message: string }[]): string {
  if (!toasts.length) return "";
  return (
    `<div class="toasts">` +
    toasts
      .map((t) => `<div class="toast toast-${t.kind}">${escapeHtml(t.message)}</div>`)
      .join("") +
    `</div>`
  );
}

function card(tile: TileSummary, route: GalleryState): string {
  const vm = toCardViewModel(tile);
  const href = routeToHash({
    ...route,
    view: "inspector",
    tileId: vm.tileId,
    overlay: defaultOverlay(),
  });
  const worst =
    vm.worstMetricName === null
      ? "no scores"
      : `${escapeHtml(vm.worstMetricName)} ${fmt(vm.worstMetricValue)}`;
  return (
    `<a class="card" data-tile-id="${escapeHtml(vm.tileId)}" href="${href}">` +
    `<img loading="lazy" alt="${escapeHtml(vm.tileId)}" src="${vm.thumbnailUrl}">` +
    `<div class="card-body">` +
    `<span class="card-title">${escapeHtml(vm.tileId)}</span>` +
    `<span class="card-worst">worst: ${worst}</span>` +
    (vm.flagged ? `<span class="badge badge-flagged">bad case</span>` : "") +
    verdictBadge(vm.verdict) +
    `</div></a>`
  );
}

export function renderGallery(
  page: TilePage | null,
  route: GalleryState,
  meta: Meta | null,
  counts: ManifestCounts | null,
  error: string | null,
): string {
  const metricOptions = ["tile_id", ...(meta?.metrics ?? [])]
    .map(
      (m) =>
        `<option value="${m}"${m === route.sort ? " selected" : ""}>${m}</option>`,
    )
    .join("");
  const controls =
    `<form class="controls" data-role="gallery-controls">` +
    `<label>sort <select name="sort">${metricOptions}</select></label>` +
    `<label>order <select name="order">` +
    `<option value="asc"${route.order === "asc" ? " selected" : ""}>worst first</option>` +
    `<option value="desc"${route.order === "desc" ? " selected" : ""}>best first</option>` +
    `</select></label>` +
    `<label><input type="checkbox" name="flagged"${route.flagged ? " checked" : ""}> bad cases only</label>` +
    `<label><input type="checkbox" name="unreviewed"${route.unreviewedOnly ? " checked" : ""}> unreviewed only</label>` +
    `</form>`;

  let body: string;
  if (error !== null) {
    body = renderErrorBanner(error);
  } else if (!page || page.tiles.length === 0) {
    body = `<p class="empty-state">No tiles match the current filters.</p>`;
  } else {
    // grid order must match the API response order exactly
    body = `<div class="grid">${page.tiles.map((t) => card(t, route)).join("")}</div>`;
  }

  const pageCount = page ? Math.max(1, Math.ceil(page.total / page.page_size)) : 1;
  const pager = page
    ? `<nav class="pager">` +
      `<button type="button" data-action="prev-page"${route.page <= 1 ? " disabled" : ""}>Prev</button>` +
      `<span>page ${route.page} / ${pageCount} (${page.total} tiles)</span>` +
      `<button type="button" data-action="next-page"${route.page >= pageCount ? " disabled" : ""}>Next</button>` +
      `</nav>`
    : "";

  return (
    `<header class="topbar"><h1>flood triage</h1>${renderManifestCounter(counts)}</header>` +
    controls +
    body +
    pager
  );
}

function overlayImg(
  url: string | null,
  layer: "reference" | "prediction",
  overlay: OverlayState,
): string {
  if (!url || !overlay.layers.has(layer)) return "";
  const channels = FLOOD_CHANNELS.filter((c) => overlay.channels.has(c));
  const src =
    channels.length === FLOOD_CHANNELS.length
      ? url
      : `${url}?channels=${channels.join(",")}`;
  return `<img class="overlay overlay-${layer}" alt="${layer} overlay" src="${src}">`;
}

function panel(
  title: string,
  detail: TileDetail,
  layer: "reference" | "prediction",
  overlay: OverlayState,
): string {
  const baseUrl = overlay.base === "pre" ? detail.pre_image_url : detail.post_image_url;
  const base = baseUrl
    ? `<img class="base" alt="${overlay.base} image" src="${baseUrl}">`
    : `<div class="base base-missing">no ${overlay.base} image</div>`;
  return (
    `<figure class="panel" data-panel="${layer}">` +
    `<figcaption>${title}</figcaption>` +
    `<div class="stack">${base}${overlayImg(
      layer === "reference" ? detail.reference_overlay_url : detail.prediction_overlay_url,
      layer,
      overlay,
    )}</div></figure>`
  );
}

function channelLegend(overlay: OverlayState): string {
  return FLOOD_CHANNELS.map(
    (c) =>
      `<label class="channel channel-${c}">` +
      `<input type="checkbox" name="channel" value="${c}"${overlay.channels.has(c) ? " checked" : ""}> ${c.replace(/_/g, " ")}</label>`,
  ).join("");
}

export function renderVerdictForm(
  detail: TileDetail,
  meta: Meta | null,
  errors: { error_type?: string; annotator?: string },
): string {
  const errorTypes = meta?.error_types ?? [];
  const current = detail.verdict;
  return (
    `<form class="verdict-form" data-role="verdict-form">` +
    `<fieldset><legend>verdict</legend>` +
    ["ok", "mislabeled", "ambiguous"]
      .map(
        (s) =>
          `<label><input type="radio" name="status" value="${s}"` +
          `${current?.status === s ? " checked" : ""}> ${s}</label>`,
      )
      .join("") +
    `</fieldset>` +
    `<label>error type <select name="error_type">` +
    `<option value="">(none)</option>` +
    errorTypes
      .map(
        (t) =>
          `<option value="${t}"${current?.error_type === t ? " selected" : ""}>${t.replace(/_/g, " ")}</option>`,
      )
      .join("") +
    `</select></label>` +
    (errors.error_type
      ? `<p class="field-error" data-error-for="error_type">${escapeHtml(errors.error_type)}</p>`
      : "") +
    `<label>note <input type="text" name="note" value=""></label>` +
    `<label>annotator <input type="text" name="annotator" value="${escapeHtml(
      current?.annotator ?? "",
    )}"></label>` +
    (errors.annotator
      ? `<p class="field-error" data-error-for="annotator">${escapeHtml(errors.annotator)}</p>`
      : "") +
    `<button type="submit">Save verdict</button>` +
    `</form>`
  );
}

export function renderInspector(
  detail: TileDetail,
  route: InspectorState,
  meta: Meta | null,
  counts: ManifestCounts | null,
  formErrors: { error_type?: string; annotator?: string } = {},
): string {
  const overlay = route.overlay;
  const toggles =
    `<form class="overlay-controls" data-role="overlay-controls">` +
    `<label><input type="radio" name="base" value="pre"${overlay.base === "pre" ? " checked" : ""}> pre</label>` +
    `<label><input type="radio" name="base" value="post"${overlay.base === "post" ? " checked" : ""}> post</label>` +
    `<label><input type="checkbox" name="layer" value="reference"${overlay.layers.has("reference") ? " checked" : ""}> true label</label>` +
    `<label><input type="checkbox" name="layer" value="prediction"${overlay.layers.has("prediction") ? " checked" : ""}> pred label</label>` +
    channelLegend(overlay) +
    `</form>`;

  const tags = detail.heuristic_tags.length
    ? `<p class="tags">suggested: ${detail.heuristic_tags.map(escapeHtml).join(", ")}</p>`
    : "";
  const history = detail.verdict_history.length
    ? `<ol class="history">` +
      detail.verdict_history
        .map(
          (v) =>
            `<li>${escapeHtml(v.timestamp)} — ${v.status}` +
            (v.error_type ? ` (${v.error_type})` : "") +
            ` by ${escapeHtml(v.annotator)}</li>`,
        )
        .join("") +
      `</ol>`
    : `<p class="history-empty">no verdicts yet</p>`;

  return (
    `<header class="topbar">` +
    `<a href="${routeToHash({ ...route, view: "gallery" })}" data-action="back">&larr; gallery</a>` +
    `<h1>${escapeHtml(detail.tile_id)}</h1>` +
    renderManifestCounter(counts) +
    `</header>` +
    `<nav class="tile-nav">` +
    `<button type="button" data-action="prev-tile">&larr; prev</button>` +
    `<button type="button" data-action="next-tile">next &rarr;</button>` +
    `<span class="hint">shortcuts: j / k</span>` +
    `</nav>` +
    toggles +
    `<div class="compare">` +
    panel("True label", detail, "reference", overlay) +
    panel("Pred label", detail, "prediction", overlay) +
    `</div>` +
    tags +
    renderVerdictForm(detail, meta, formErrors) +
    history
  );
}

export function renderNotFound(tileId: string): string {
  return (
    `<div class="banner banner-error" role="alert">Tile ${escapeHtml(tileId)} ` +
    `does not exist; returning to the gallery.</div>`
  );
}

/** Order of tile ids as rendered; used by contract tests. */
export function galleryOrder(html: string): string[] {
  const order: string[] = [];
  const pattern = /data-tile-id="([^"]+)"/g;
  let match: RegExpExecArray | null;
  while ((match = pattern.exec(html)) !== null) order.push(match[1]!);
  return order;
}
