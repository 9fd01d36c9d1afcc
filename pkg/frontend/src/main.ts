import { ApiClient } from "./api.js";
import {
  defaultGallery,
  parseHash,
  routeToHash,
  type InspectorState,
  type Route,
} from "./router.js";
import { AppStore, type VerdictFormErrors } from "./state.js";
import type { Meta, VerdictRequest } from "./types.js";
import {
  renderGallery,
  renderInspector,
  renderNotFound,
  renderToasts,
} from "./views.js";

const api = new ApiClient("");
const store = new AppStore(api);
let meta: Meta | null = null;
let route: Route = defaultGallery();
let formErrors: VerdictFormErrors = {};

const root = document.getElementById("app")!;
const toastRoot = document.getElementById("toasts")!;

function navigate(next: Route): void {
  const hash = routeToHash(next);
  if (location.hash !== hash) {
    location.hash = hash; // triggers hashchange -> sync
  } else {
    void sync();
  }
}

async function sync(): Promise<void> {
  route = parseHash(location.hash || "#/gallery");
  formErrors = {};
  if (route.view === "gallery") {
    await store.loadGallery({
      sort: route.sort,
      order: route.order,
      flagged: route.flagged,
      page: route.page,
    });
  } else {
    // gallery context backs prev/next ordering in the inspector
    if (!store.page) {
      await store.loadGallery({
        sort: route.sort,
        order: route.order,
        flagged: route.flagged,
        page: route.page,
      });
    }
    const outcome = await store.loadDetail(route.tileId);
    if (outcome === "not_found") {
      root.innerHTML = renderNotFound(route.tileId);
      setTimeout(() => navigate({ ...route, view: "gallery" } as Route), 1200);
      return;
    }
  }
  render();
}

function render(): void {
  if (route.view === "gallery") {
    root.innerHTML = renderGallery(
      store.page, route, meta, store.manifestCounts, store.lastError);
  } else if (store.detail) {
    root.innerHTML = renderInspector(
      store.detail, route, meta, store.manifestCounts, formErrors);
  } else if (store.lastError) {
    root.innerHTML = renderGallery(null, { ...route, view: "gallery" }, meta,
      store.manifestCounts, store.lastError);
  }
  toastRoot.innerHTML = renderToasts(store.toasts);
}

function galleryControlsChanged(form: HTMLFormElement): void {
  const data = new FormData(form);
  const flagged = form.querySelector<HTMLInputElement>("[name=flagged]")!.checked;
  navigate({
    ...(route.view === "gallery" ? route : { ...route, view: "gallery" as const }),
    sort: String(data.get("sort") ?? "tile_id"),
    order: data.get("order") === "desc" ? "desc" : "asc",
    flagged: flagged ? true : undefined,
    unreviewedOnly:
      form.querySelector<HTMLInputElement>("[name=unreviewed]")!.checked,
    page: 1,
  });
}

function overlayControlsChanged(form: HTMLFormElement): void {
  if (route.view !== "inspector") return;
  const layers = new Set<"reference" | "prediction">();
  for (const box of form.querySelectorAll<HTMLInputElement>("[name=layer]")) {
    if (box.checked) layers.add(box.value as "reference" | "prediction");
  }
  const channels = new Set<never>() as InspectorState["overlay"]["channels"];
  for (const box of form.querySelectorAll<HTMLInputElement>("[name=channel]")) {
    if (box.checked) channels.add(box.value as never);
  }
  const base = form.querySelector<HTMLInputElement>("[name=base]:checked")!
    .value as "pre" | "post";
  navigate({ ...route, overlay: { base, layers, channels } });
}

async function verdictSubmitted(form: HTMLFormElement): Promise<void> {
  if (route.view !== "inspector") return;
  const data = new FormData(form);
  const status = data.get("status");
  if (!status) {
    store.pushToast({ kind: "error", message: "choose a verdict status" });
    return;
  }
  const request: VerdictRequest = {
    status: String(status) as VerdictRequest["status"],
    annotator: String(data.get("annotator") ?? ""),
    note: String(data.get("note") ?? ""),
  };
  const errorType = String(data.get("error_type") ?? "");
  if (errorType) request.error_type = errorType as VerdictRequest["error_type"];

  const result = await store.submitVerdict(route.tileId, request);
  formErrors = result === "ok" || result === "failed" ? {} : result;
  render();
}

function moveTile(direction: 1 | -1): void {
  if (route.view !== "inspector") return;
  const neighbor = store.neighborTile(route.tileId, direction, route.unreviewedOnly);
  if (neighbor) navigate({ ...route, tileId: neighbor.tile_id });
}

document.addEventListener("click", (event) => {
  const target = (event.target as HTMLElement).closest("[data-action]");
  if (!target) return;
  const action = target.getAttribute("data-action");
  if (action === "retry") void sync();
  if (action === "next-tile") moveTile(1);
  if (action === "prev-tile") moveTile(-1);
  if (action === "next-page" && route.view === "gallery") {
    navigate({ ...route, page: route.page + 1 });
  }
  if (action === "prev-page" && route.view === "gallery") {
    navigate({ ...route, page: Math.max(1, route.page - 1) });
  }
});

document.addEventListener("change", (event) => {
  const form = (event.target as HTMLElement).closest("form");
  if (!form) return;
  const role = form.getAttribute("data-role");
  if (role === "gallery-controls") galleryControlsChanged(form);
  if (role === "overlay-controls") overlayControlsChanged(form);
});

document.addEventListener("submit", (event) => {
  const form = event.target as HTMLFormElement;
  if (form.getAttribute("data-role") === "verdict-form") {
    event.preventDefault();
    void verdictSubmitted(form);
  }
});

document.addEventListener("keydown", (event) => {
  if ((event.target as HTMLElement).tagName === "INPUT") return;
  if (event.key === "j" || event.key === "ArrowRight") moveTile(1);
  if (event.key === "k" || event.key === "ArrowLeft") moveTile(-1);
});

window.addEventListener("hashchange", () => void sync());

store.subscribe(() => {
  toastRoot.innerHTML = renderToasts(store.toasts);
});

async function boot(): Promise<void> {
  try {
    meta = await api.getMeta();
  } catch {
    meta = null;
  }
  await store.refreshManifest();
  await sync();
}

void boot();
