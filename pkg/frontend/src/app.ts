/**
 * Static rig-posing app: open an exported rig JSON (file picker or
 * `?rig=URL`), get one slider per expression grouped by facial region,
 * play blend-weight sequence files, and verify the shipped checksums.
 */

import { computeFrame } from "./frame.js";
import {
  RigFormatError,
  ViewerRig,
  blend,
  groupByPrefix,
  parseBetaSequence,
  parseRig,
  verifyChecksums,
} from "./rig.js";

const BASE_COLOR: [number, number, number] = [232, 184, 152];
const EYE_COLOR = "rgb(240, 240, 244)";

interface AppState {
  rig: ViewerRig | null;
  beta: Float64Array;
  blended: Float32Array;
  sliders: HTMLInputElement[];
  playTimer: number | null;
  redrawQueued: boolean;
}

const state: AppState = {
  rig: null,
  beta: new Float64Array(0),
  blended: new Float32Array(0),
  sliders: [],
  playTimer: null,
  redrawQueued: false,
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function showError(message: string | null): void {
  const banner = el<HTMLDivElement>("error-banner");
  banner.textContent = message ?? "";
  banner.style.display = message ? "block" : "none";
}

function setStatus(message: string): void {
  el<HTMLDivElement>("status").textContent = message;
}

function scheduleRedraw(): void {
  if (state.redrawQueued) return;
  state.redrawQueued = true;
  requestAnimationFrame(() => {
    state.redrawQueued = false;
    redraw();
  });
}

function redraw(): void {
  const rig = state.rig;
  const canvas = el<HTMLCanvasElement>("view");
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!rig) return;

  blend(rig, state.beta, state.blended);
  const frame = computeFrame(state.blended, rig.faces, canvas.width, canvas.height);
  const { px, py, order, shade } = frame;
  const faces = rig.faces;
  for (let k = 0; k < order.length; k++) {
    const f = order[k];
    const a = faces[3 * f], b = faces[3 * f + 1], c = faces[3 * f + 2];
    const s = shade[f];
    ctx.fillStyle = `rgb(${(BASE_COLOR[0] * s) | 0},${(BASE_COLOR[1] * s) | 0},${(BASE_COLOR[2] * s) | 0})`;
    ctx.beginPath();
    ctx.moveTo(px[a], py[a]);
    ctx.lineTo(px[b], py[b]);
    ctx.lineTo(px[c], py[c]);
    ctx.closePath();
    ctx.fill();
  }
  for (const eye of rig.eyeballs) {
    const ex = canvas.width / 2 + (eye.center[0] - frame.center[0]) * frame.ppu;
    const ey = canvas.height / 2 - (eye.center[1] - frame.center[1]) * frame.ppu;
    ctx.fillStyle = EYE_COLOR;
    ctx.beginPath();
    ctx.arc(ex, ey, Math.max(1, eye.radius * frame.ppu), 0, 2 * Math.PI);
    ctx.fill();
  }
}

function buildSliders(rig: ViewerRig): void {
  const host = el<HTMLDivElement>("sliders");
  host.textContent = "";
  state.sliders = [];
  for (const { group, indices } of groupByPrefix(rig.names)) {
    const section = document.createElement("details");
    section.open = true;
    const summary = document.createElement("summary");
    summary.textContent = `${group} (${indices.length})`;
    section.appendChild(summary);
    for (const i of indices) {
      const row = document.createElement("label");
      row.className = "slider-row";
      const name = document.createElement("span");
      name.textContent = rig.names[i];
      const value = document.createElement("code");
      value.textContent = "0.00";
      const input = document.createElement("input");
      input.type = "range";
      input.min = "0";
      input.max = "1";
      input.step = "0.01";
      input.value = "0";
      input.addEventListener("input", () => {
        state.beta[i] = Number(input.value);
        value.textContent = state.beta[i].toFixed(2);
        scheduleRedraw();
      });
      state.sliders.push(input);
      row.append(name, input, value);
      section.appendChild(row);
    }
    host.appendChild(section);
  }
}

function syncSliders(): void {
  for (let i = 0; i < state.sliders.length; i++) {
    const input = state.sliders[i];
    input.value = String(state.beta[i]);
    const code = input.parentElement?.querySelector("code");
    if (code) code.textContent = state.beta[i].toFixed(2);
  }
}

function stopPlayback(): void {
  if (state.playTimer !== null) {
    clearInterval(state.playTimer);
    state.playTimer = null;
  }
  el<HTMLButtonElement>("play").textContent = "Play";
}

function startPlayback(): void {
  const rig = state.rig;
  if (!rig) return;
  let frames;
  try {
    frames = parseBetaSequence(el<HTMLTextAreaElement>("sequence").value, rig.names.length);
  } catch (e) {
    showError((e as Error).message);
    return;
  }
  if (frames.length === 0) {
    showError("sequence has no frames");
    return;
  }
  showError(null);
  stopPlayback();
  let k = 0;
  el<HTMLButtonElement>("play").textContent = "Stop";
  state.playTimer = window.setInterval(() => {
    state.beta.set(frames[k]);
    syncSliders();
    scheduleRedraw();
    k += 1;
    if (k >= frames.length) stopPlayback();
  }, 1000 / 30);
}

function loadRigText(text: string, label: string): void {
  stopPlayback();
  let rig: ViewerRig;
  try {
    rig = parseRig(text);
  } catch (e) {
    if (e instanceof RigFormatError) {
      showError(`could not load ${label}: ${e.message}`);
      return;
    }
    throw e;
  }
  showError(null);
  state.rig = rig;
  state.beta = new Float64Array(rig.names.length);
  state.blended = new Float32Array(rig.neutral.length);
  buildSliders(rig);
  const texture = rig.texture ? `, texture ${rig.texture}` : "";
  setStatus(
    `${label}: ${rig.vertexCount} vertices, ${rig.faceCount} faces, ` +
    `${rig.names.length} expressions, ${rig.eyeballs.length} eyeballs${texture}`
  );
  redraw();
}

function wireUp(): void {
  el<HTMLInputElement>("rig-file").addEventListener("change", (ev) => {
    const input = ev.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    file.text().then((text) => loadRigText(text, file.name));
  });

  el<HTMLButtonElement>("reset").addEventListener("click", () => {
    stopPlayback();
    state.beta.fill(0);
    syncSliders();
    scheduleRedraw();
  });

  el<HTMLButtonElement>("play").addEventListener("click", () => {
    if (state.playTimer !== null) stopPlayback();
    else startPlayback();
  });

  el<HTMLButtonElement>("verify").addEventListener("click", () => {
    const rig = state.rig;
    if (!rig) return;
    const reports = verifyChecksums(rig);
    const bad = reports.filter((r) => !r.ok);
    if (bad.length === 0) {
      setStatus(`all ${reports.length} checksums match`);
    } else {
      setStatus(`CHECKSUM MISMATCH: ${bad.map((r) => r.name).join(", ")}`);
    }
  });

  const params = new URLSearchParams(window.location.search);
  const url = params.get("rig");
  if (url) {
    fetch(url)
      .then((resp) => {
        if (!resp.ok) throw new Error(`${resp.status} ${resp.statusText}`);
        return resp.text();
      })
      .then((text) => loadRigText(text, url))
      .catch((e) => showError(`could not fetch ${url}: ${(e as Error).message}`));
  }
}

wireUp();
