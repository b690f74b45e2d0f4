// Single-page annotation front end: load an image, draw handle/target region
// pairs, preview the dense mapping, tune the edit, and compare before/after.
// All engine communication goes through the /v1 endpoints.

import { ApiClient, ApiRequestError } from "./api.js";
import { AnnotationState, ROLE_COLORS, type Role } from "./annotation.js";
import { arrowGeometry, decimatePairs } from "./overlay.js";
import type { EditConfigPatch, EditResponse, MappedPairRecord } from "./types.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const api = new ApiClient("");

let state: AnnotationState | null = null;
let imageEl: HTMLImageElement | null = null;
let imageB64: string | null = null;
let overlayPairs: MappedPairRecord[] = [];
let overlayTotal = 0;
let lastResponse: EditResponse | null = null;
let editInFlight = false;

const canvas = $("annotation-canvas") as unknown as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;

function setBanner(message: string | null): void {
  const banner = $("error-banner");
  banner.textContent = message ?? "";
  banner.style.display = message ? "block" : "none";
}

function setStatus(message: string): void {
  $("status-line").textContent = message;
}

function loadImageFromB64(b64: string, onReady: () => void): void {
  const img = new Image();
  img.onload = () => {
    imageEl = img;
    imageB64 = b64;
    state = new AnnotationState(img.naturalWidth, img.naturalHeight);
    canvas.width = img.naturalWidth;
    canvas.height = img.naturalHeight;
    overlayPairs = [];
    overlayTotal = 0;
    lastResponse = null;
    onReady();
  };
  img.src = `data:image/png;base64,${b64}`;
}

function drawMask(mask: Uint8Array, w: number, h: number, color: string): void {
  const tmp = document.createElement("canvas");
  tmp.width = w;
  tmp.height = h;
  const tctx = tmp.getContext("2d")!;
  const image = tctx.createImageData(w, h);
  const m = color.match(/rgba?\((\d+),\s*(\d+),\s*(\d+)(?:,\s*([\d.]+))?\)/);
  const [r, g, b, a] = m ? [+m[1], +m[2], +m[3], Math.round((+(m[4] ?? 1)) * 255)] : [255, 0, 0, 128];
  for (let i = 0; i < mask.length; i++) {
    if (mask[i]) {
      image.data[i * 4] = r;
      image.data[i * 4 + 1] = g;
      image.data[i * 4 + 2] = b;
      image.data[i * 4 + 3] = a;
    }
  }
  tctx.putImageData(image, 0, 0);
  ctx.drawImage(tmp, 0, 0);
}

function render(): void {
  if (!imageEl || !state) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(imageEl, 0, 0);

  for (const pair of state.pairs) {
    for (const role of ["handle", "target"] as Role[]) {
      const draft = role === "handle" ? pair.handle : pair.target;
      const color = ROLE_COLORS[role];
      if (draft.mode === "brush") {
        drawMask(draft.mask, state.imageW, state.imageH, color);
      } else if (draft.mode === "polygon" && draft.vertices.length) {
        ctx.strokeStyle = color;
        ctx.fillStyle = color;
        ctx.lineWidth = 1;
        ctx.beginPath();
        draft.vertices.forEach(([x, y], i) => (i ? ctx.lineTo(x, y) : ctx.moveTo(x, y)));
        if (draft.vertices.length >= 3) {
          ctx.closePath();
          ctx.fill();
        }
        ctx.stroke();
        for (const [x, y] of draft.vertices) {
          ctx.fillRect(x - 1, y - 1, 3, 3);
        }
      }
    }
  }

  ctx.strokeStyle = "rgba(255, 220, 0, 0.9)";
  ctx.lineWidth = 1;
  for (const pair of overlayPairs) {
    const a = arrowGeometry(pair);
    ctx.beginPath();
    ctx.moveTo(a.x0 + 0.5, a.y0 + 0.5);
    ctx.lineTo(a.x1 + 0.5, a.y1 + 0.5);
    ctx.moveTo(a.headLeft[0], a.headLeft[1]);
    ctx.lineTo(a.x1 + 0.5, a.y1 + 0.5);
    ctx.lineTo(a.headRight[0], a.headRight[1]);
    ctx.stroke();
  }

  const pairInfo = state.pairs
    .map((p, i) => {
      const mark = i === state!.activePair ? "▶" : " ";
      const done = p.isComplete() ? "✓" : "…";
      return `${mark} pair ${i} ${done}`;
    })
    .join("   ");
  $("pair-list").textContent = pairInfo;
  ($("submit-edit") as HTMLButtonElement).disabled = !state.canSubmit() || editInFlight;
}

function canvasCoords(event: PointerEvent): [number, number] {
  const rect = canvas.getBoundingClientRect();
  return [
    ((event.clientX - rect.left) * canvas.width) / rect.width,
    ((event.clientY - rect.top) * canvas.height) / rect.height,
  ];
}

let drawing = false;
let lastPoint: [number, number] | null = null;

canvas.addEventListener("pointerdown", (event) => {
  if (!state) return;
  const [x, y] = canvasCoords(event);
  if (state.tool === "brush") {
    drawing = true;
    state.activeDraft().brushDot(x, y, state.brushRadius);
    lastPoint = [x, y];
  } else {
    state.activeDraft().addVertex(x, y);
  }
  render();
});

canvas.addEventListener("pointermove", (event) => {
  if (!state || !drawing || state.tool !== "brush") return;
  const [x, y] = canvasCoords(event);
  if (lastPoint) {
    state.activeDraft().brushStroke(lastPoint[0], lastPoint[1], x, y, state.brushRadius);
  }
  lastPoint = [x, y];
  render();
});

window.addEventListener("pointerup", () => {
  drawing = false;
  lastPoint = null;
});

function readConfig(): EditConfigPatch {
  const config: EditConfigPatch = {
    sampler_steps: Number(($("cfg-steps") as HTMLInputElement).value),
    invert_to: Number(($("cfg-invert-to") as HTMLInputElement).value),
    cp_stop: Number(($("cfg-cp-stop") as HTMLInputElement).value),
    blend_alpha: Number(($("cfg-alpha") as HTMLInputElement).value),
    eta: Number(($("cfg-eta") as HTMLInputElement).value),
    kv_swap: ($("cfg-kv-swap") as HTMLInputElement).checked,
    cp_mode: ($("cfg-cp-mode") as HTMLSelectElement).value as "multi-step" | "initial-only",
  };
  const seed = ($("cfg-seed") as HTMLInputElement).value.trim();
  if (seed !== "") config.seed = Number(seed);
  return config;
}

async function previewMapping(): Promise<void> {
  if (!state || !state.canSubmit()) return;
  setBanner(null);
  try {
    const response = await api.map(state.completePairs());
    overlayTotal = response.count;
    overlayPairs = decimatePairs(response.pairs);
    setStatus(
      `mapping: ${response.count} pairs` +
        (overlayPairs.length < overlayTotal
          ? ` (showing ${overlayPairs.length} of ${overlayTotal})`
          : "") +
        (response.conflicts_dropped ? `, ${response.conflicts_dropped} overlaps dropped` : ""),
    );
    render();
  } catch (err) {
    setBanner(err instanceof Error ? err.message : String(err));
  }
}

async function submitEdit(seedOverride?: number): Promise<void> {
  if (!state || !imageB64 || !state.canSubmit() || editInFlight) return;
  setBanner(null);
  editInFlight = true;
  ($("submit-edit") as HTMLButtonElement).disabled = true;
  setStatus("editing…");
  try {
    const request = {
      image_b64: imageB64,
      prompt: ($("cfg-prompt") as HTMLInputElement).value,
      regions: state.completePairs(),
      config: readConfig(),
      backend: ($("cfg-backend") as HTMLSelectElement).value || undefined,
      seed: seedOverride,
    };
    const response = await api.edit(request);
    lastResponse = response;
    ($("before-img") as HTMLImageElement).src = `data:image/png;base64,${imageB64}`;
    ($("after-img") as HTMLImageElement).src = `data:image/png;base64,${response.image_b64}`;
    const t = response.timings as Record<string, number>;
    setStatus(
      `done in ${Math.round(t.total_ms)} ms ` +
        `(invert ${Math.round(t.invert_ms)}, denoise ${Math.round(t.denoise_ms)}, ` +
        `cp ${Math.round(t.cp_ms)}) — ${response.mapped_point_count} points, ` +
        `seed ${response.seed}` +
        (response.warnings.length ? ` — ${response.warnings.join("; ")}` : ""),
    );
    ($("rerun-seed") as HTMLButtonElement).disabled = false;
  } catch (err) {
    // the annotation state is untouched; surface the failure verbatim
    if (err instanceof ApiRequestError && err.detail?.stage) {
      setBanner(`${err.message} (stage: ${err.detail.stage})`);
    } else {
      setBanner(err instanceof Error ? err.message : String(err));
    }
  } finally {
    editInFlight = false;
    render();
  }
}

function wireControls(): void {
  ($("image-file") as HTMLInputElement).addEventListener("change", (event) => {
    const input = event.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    const reader = new FileReader();
    reader.onload = () => {
      const dataUrl = reader.result as string;
      loadImageFromB64(dataUrl.split(",", 2)[1], () => {
        setStatus(`loaded ${file.name} (${state!.imageW}x${state!.imageH})`);
        render();
      });
    };
    reader.readAsDataURL(file);
  });

  $("tool-brush").addEventListener("click", () => {
    if (state) state.tool = "brush";
    $("tool-brush").classList.add("active");
    $("tool-polygon").classList.remove("active");
  });
  $("tool-polygon").addEventListener("click", () => {
    if (state) state.tool = "polygon";
    $("tool-polygon").classList.add("active");
    $("tool-brush").classList.remove("active");
  });
  ($("role-select") as HTMLSelectElement).addEventListener("change", (event) => {
    if (state) state.role = (event.target as HTMLSelectElement).value as Role;
  });
  ($("brush-size") as HTMLInputElement).addEventListener("input", (event) => {
    if (state) state.brushRadius = Number((event.target as HTMLInputElement).value);
  });
  $("new-pair").addEventListener("click", () => {
    if (!state) return;
    state.beginPair();
    ($("role-select") as HTMLSelectElement).value = "handle";
    render();
  });
  $("clear-region").addEventListener("click", () => {
    if (!state) return;
    state.activeDraft().clear();
    overlayPairs = [];
    render();
  });
  $("undo-vertex").addEventListener("click", () => {
    if (!state) return;
    state.activeDraft().popVertex();
    render();
  });

  $("preview-mapping").addEventListener("click", () => void previewMapping());
  $("submit-edit").addEventListener("click", () => void submitEdit());
  $("rerun-seed").addEventListener("click", () => {
    if (lastResponse) void submitEdit(lastResponse.seed);
  });

  $("export-annotation").addEventListener("click", () => {
    if (!state || !state.canSubmit()) return;
    const blob = new Blob([state.exportAnnotation()], { type: "application/json" });
    const link = document.createElement("a");
    link.href = URL.createObjectURL(blob);
    link.download = "annotation.json";
    link.click();
    URL.revokeObjectURL(link.href);
  });
  ($("import-annotation") as HTMLInputElement).addEventListener("change", (event) => {
    const file = (event.target as HTMLInputElement).files?.[0];
    if (!file) return;
    const reader = new FileReader();
    reader.onload = () => {
      try {
        state = AnnotationState.importAnnotation(reader.result as string);
        setStatus(`imported ${state.pairs.length} pair(s)`);
        render();
      } catch (err) {
        setBanner(err instanceof Error ? err.message : String(err));
      }
    };
    reader.readAsText(file);
  });
}

async function init(): Promise<void> {
  wireControls();
  const healthy = await api.health();
  $("server-dot").className = healthy ? "dot ok" : "dot bad";
  if (healthy) {
    try {
      const info = await api.backends();
      const select = $("cfg-backend") as HTMLSelectElement;
      for (const name of info.backends) {
        const option = document.createElement("option");
        option.value = name;
        option.textContent = name;
        option.selected = name === info.default;
        select.appendChild(option);
      }
    } catch {
      // backend list is cosmetic; editing will surface real errors
    }
  } else {
    setBanner("engine server unreachable; start it with: regiondrag serve");
  }
}

void init();
