import { describe, expect, it } from "vitest";

import { blend, checksumHex, parseRig } from "../src/rig.js";
import { computeFrame } from "../src/frame.js";

function b64(bytes: Uint8Array): string {
  let out = "";
  const CHUNK = 0x8000;
  for (let i = 0; i < bytes.length; i += CHUNK) {
    out += String.fromCharCode(...bytes.subarray(i, i + CHUNK));
  }
  return btoa(out);
}

function b64f32(values: Float32Array): string {
  return b64(new Uint8Array(values.buffer, values.byteOffset, values.byteLength));
}

/** A grid mesh rig at full production scale: 41006 vertices, 46 shapes. */
function syntheticRigJson(): { text: string; vertexCount: number } {
  const rows = 203;
  const cols = 202;
  const V = rows * cols;
  const neutral = new Float32Array(3 * V);
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      const i = r * cols + c;
      const u = c / (cols - 1) - 0.5;
      const v = r / (rows - 1) - 0.5;
      neutral[3 * i] = u;
      neutral[3 * i + 1] = v;
      neutral[3 * i + 2] = 0.3 * Math.cos(3 * u) * Math.cos(3 * v);
    }
  }
  const F = 2 * (rows - 1) * (cols - 1);
  const faces = new Uint32Array(3 * F);
  let f = 0;
  for (let r = 0; r + 1 < rows; r++) {
    for (let c = 0; c + 1 < cols; c++) {
      const a = r * cols + c;
      const b = a + 1;
      const d = a + cols;
      const e = d + 1;
      faces.set([a, b, d], 3 * f++);
      faces.set([b, e, d], 3 * f++);
    }
  }

  const names: string[] = [];
  const expressions: { name: string; deltas: string; checksum: string }[] = [];
  const blended = new Float32Array(3 * V);
  for (let k = 0; k < 46; k++) {
    const delta = new Float32Array(3 * V);
    // deterministic smooth bump, different phase per expression
    for (let i = 0; i < V; i++) {
      delta[3 * i + 2] = 0.05 * Math.sin(0.21 * k + i * 1e-4);
    }
    for (let j = 0; j < blended.length; j++) blended[j] = neutral[j] + delta[j];
    const name = `shape${String(k).padStart(2, "0")}`;
    names.push(name);
    expressions.push({ name, deltas: b64f32(delta), checksum: checksumHex(blended) });
  }

  const doc = {
    magic: "CFR1",
    version: 1,
    vertex_count: V,
    face_count: F,
    names,
    neutral: b64f32(neutral),
    neutral_checksum: checksumHex(neutral),
    faces: b64(new Uint8Array(faces.buffer)),
    expressions,
    eyeballs: [],
  };
  return { text: JSON.stringify(doc), vertexCount: V };
}

describe("production-scale rig", () => {
  it("loads to a first frame in under 2 seconds at 35k+ vertices", () => {
    const { text, vertexCount } = syntheticRigJson();
    expect(vertexCount).toBeGreaterThanOrEqual(35000);

    const t0 = performance.now();
    const rig = parseRig(text);
    const beta = new Float64Array(rig.names.length);
    const vertices = blend(rig, beta);
    const frame = computeFrame(vertices, rig.faces, 960, 720);
    const elapsed = performance.now() - t0;

    expect(frame.order.length).toBe(rig.faceCount);
    expect(elapsed).toBeLessThan(2000);

    // steady-state redraw with every slider active, reusing buffers
    beta.fill(0.5);
    const times: number[] = [];
    for (let rep = 0; rep < 15; rep++) {
      const r0 = performance.now();
      blend(rig, beta, vertices);
      computeFrame(vertices, rig.faces, 960, 720);
      times.push(performance.now() - r0);
    }
    times.sort((a, b) => a - b);
    const median = times[Math.floor(times.length / 2)];
    // display-frame budget for live slider interaction
    expect(median).toBeLessThanOrEqual(33);
  }, 60000);
});
