/**
 * Draw-ready frame data from blended vertices: orthographic projection,
 * flat Lambert shading, and a back-to-front face order. Pure computation,
 * so it can be timed and tested without a canvas.
 */

export interface FrameData {
  /** Projected x/y per vertex, canvas pixels. */
  px: Float32Array;
  py: Float32Array;
  /** Face indices sorted back to front. */
  order: Uint32Array;
  /** Per-face brightness in [0, 1]. */
  shade: Float32Array;
  /** Pixels per model unit actually used (fit-to-canvas). */
  ppu: number;
  /** Model-space center mapped to the canvas center. */
  center: [number, number, number];
}

const LIGHT = normalize3(0.3, 0.4, 0.85);

function normalize3(x: number, y: number, z: number): [number, number, number] {
  const n = Math.hypot(x, y, z) || 1;
  return [x / n, y / n, z / n];
}

export function computeFrame(
  vertices: Float32Array,
  faces: Uint32Array,
  width: number,
  height: number
): FrameData {
  const V = vertices.length / 3;
  const F = faces.length / 3;

  let minX = Infinity, minY = Infinity, minZ = Infinity;
  let maxX = -Infinity, maxY = -Infinity, maxZ = -Infinity;
  for (let i = 0; i < V; i++) {
    const x = vertices[3 * i], y = vertices[3 * i + 1], z = vertices[3 * i + 2];
    if (x < minX) minX = x; if (x > maxX) maxX = x;
    if (y < minY) minY = y; if (y > maxY) maxY = y;
    if (z < minZ) minZ = z; if (z > maxZ) maxZ = z;
  }
  const cx = (minX + maxX) / 2, cy = (minY + maxY) / 2, cz = (minZ + maxZ) / 2;
  const extent = Math.max(maxX - minX, maxY - minY) || 1;
  const ppu = (0.85 * Math.min(width, height)) / extent;

  const px = new Float32Array(V);
  const py = new Float32Array(V);
  for (let i = 0; i < V; i++) {
    px[i] = width / 2 + (vertices[3 * i] - cx) * ppu;
    py[i] = height / 2 - (vertices[3 * i + 1] - cy) * ppu;
  }

  // per-face depth key and shade
  const depth = new Float32Array(F);
  const shade = new Float32Array(F);
  for (let f = 0; f < F; f++) {
    const a = faces[3 * f], b = faces[3 * f + 1], c = faces[3 * f + 2];
    const ax = vertices[3 * a], ay = vertices[3 * a + 1], az = vertices[3 * a + 2];
    const e1x = vertices[3 * b] - ax, e1y = vertices[3 * b + 1] - ay, e1z = vertices[3 * b + 2] - az;
    const e2x = vertices[3 * c] - ax, e2y = vertices[3 * c + 1] - ay, e2z = vertices[3 * c + 2] - az;
    let nx = e1y * e2z - e1z * e2y;
    let ny = e1z * e2x - e1x * e2z;
    let nz = e1x * e2y - e1y * e2x;
    const nn = Math.hypot(nx, ny, nz) || 1;
    nx /= nn; ny /= nn; nz /= nn;
    const lambert = Math.max(0, nx * LIGHT[0] + ny * LIGHT[1] + nz * LIGHT[2]);
    shade[f] = Math.min(1, 0.22 + 0.78 * lambert);
    depth[f] = az + vertices[3 * b + 2] + vertices[3 * c + 2];
  }

  // counting sort on quantized depth: back (small z) first
  const BUCKETS = 1024;
  const zSpan = 3 * (maxZ - minZ) || 1;
  const zBase = 3 * minZ;
  const counts = new Uint32Array(BUCKETS + 1);
  const key = new Uint16Array(F);
  for (let f = 0; f < F; f++) {
    let k = Math.floor(((depth[f] - zBase) / zSpan) * (BUCKETS - 1));
    if (k < 0) k = 0; else if (k >= BUCKETS) k = BUCKETS - 1;
    key[f] = k;
    counts[k + 1]++;
  }
  for (let k = 0; k < BUCKETS; k++) counts[k + 1] += counts[k];
  const order = new Uint32Array(F);
  for (let f = 0; f < F; f++) order[counts[key[f]]++] = f;

  return { px, py, order, shade, ppu, center: [cx, cy, cz] };
}
